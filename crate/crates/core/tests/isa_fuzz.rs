mod common;

use bsmm::isa::{decode, encode, validate};
use bsmm::simulator::{run_timed, HwConfig, MemModel, SimError};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn text_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = common::random_program(&mut rng, 24);
        let text = encode(&p);
        prop_assert_eq!(decode(&text).unwrap(), p);
    }

    // Any program the simulator rejects as structurally broken is also
    // flagged by the static validator.
    #[test]
    fn validator_covers_structural_rejections(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = common::random_config(&mut rng);
        let p = common::random_program(&mut rng, 6);
        let report = validate(&p, &cfg);
        match run_timed(&p, MemModel::new(1 << 14), &cfg) {
            Err(e) if e.is_structural() => prop_assert!(!report.is_valid(), "{e} not flagged"),
            Err(SimError::Deadlock { blocked }) => prop_assert!(!blocked.is_empty()),
            _ => {}
        }
    }
}

#[test]
fn comments_and_hex_are_accepted() {
    let p = decode("# header\nE run lhs_offset=0x10 rhs_offset=0 dot_length=2 negate=1 acc=keep # tail\n\nR wait execute\n").unwrap();
    assert_eq!(p.execute.len(), 1);
    assert_eq!(p.result.len(), 1);
    assert!(validate(&p, &HwConfig::new(2, 64, 2)).warnings().count() >= 1);
}

#[test]
fn decode_errors_name_line_and_field() {
    let err = decode("F signal execute\nE run lhs_offset=1 rhs_offset=zz dot_length=1 negate=0 acc=zero\n").unwrap_err();
    assert_eq!(err.line, 2);
    assert_eq!(err.field.as_deref(), Some("rhs_offset"));
    assert!(decode("X run\n").is_err());
    assert!(decode("E run lhs_offset=1\n").is_err());
}
