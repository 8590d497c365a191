//! Bit-heap model of the fused AND-popcount.
//!
//! The `Dk` bit products of two operand words are pre-compressed in triples
//! into (sum, carry) pairs, leaving a two-column heap of height `ceil(Dk/3)`.
//! A greedy scheduler then places parallel counters stage by stage until no
//! column holds more than three bits, and a final ternary addition produces
//! the binary result.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompressorError {
    #[error("operand length mismatch: {a} vs {b} bits")]
    LengthMismatch { a: usize, b: usize },
    #[error("operands must hold at least one bit")]
    EmptyOperands,
    #[error("plan was built for a {plan}-bit heap shape {expected:?}, input produced {actual:?}")]
    WidthMismatch {
        plan: usize,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("counter library has no full adder")]
    MissingFullAdder,
    #[error("heap value changed from {before} to {after} in stage {stage}")]
    ValueChanged { stage: usize, before: u64, after: u64 },
}

pub type Result<T> = std::result::Result<T, CompressorError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CounterKind {
    FullAdder,
    SixThree,
    TwoFive,
    Slice,
}

impl CounterKind {
    pub fn label(self) -> &'static str {
        match self {
            CounterKind::FullAdder => "(3:2)",
            CounterKind::SixThree => "(6:3)",
            CounterKind::TwoFive => "(2,5:4)",
            CounterKind::Slice => "slice",
        }
    }
}

/// A parallel counter: `inputs[k]` bits of weight `2^(anchor+k)` summed into
/// `outputs` bits starting at the anchor column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counter {
    pub kind: CounterKind,
    pub inputs: Vec<usize>,
    pub outputs: usize,
    pub lut_cost: u32,
}

impl Counter {
    pub fn full_adder() -> Self {
        Self {
            kind: CounterKind::FullAdder,
            inputs: vec![3],
            outputs: 2,
            lut_cost: 1,
        }
    }

    pub fn six_three() -> Self {
        Self {
            kind: CounterKind::SixThree,
            inputs: vec![6],
            outputs: 3,
            lut_cost: 3,
        }
    }

    /// Five bits of weight one and two of weight two.
    pub fn two_five() -> Self {
        Self {
            kind: CounterKind::TwoFive,
            inputs: vec![5, 2],
            outputs: 4,
            lut_cost: 4,
        }
    }

    /// Four chained full adders on a carry chain.
    pub fn slice() -> Self {
        Self {
            kind: CounterKind::Slice,
            inputs: vec![3, 2, 2, 2],
            outputs: 5,
            lut_cost: 4,
        }
    }

    pub fn input_count(&self) -> usize {
        self.inputs.iter().sum()
    }

    /// Largest value the inputs can sum to.
    pub fn max_sum(&self) -> u64 {
        self.inputs.iter().enumerate().map(|(k, &n)| (n as u64) << k).sum()
    }

    pub fn eliminated(&self) -> usize {
        self.input_count() - self.outputs
    }

    pub fn ratio(&self) -> f64 {
        self.eliminated() as f64 / self.lut_cost as f64
    }

    fn fits(&self, avail: &[usize], col: usize) -> bool {
        self.inputs
            .iter()
            .enumerate()
            .all(|(k, &n)| avail.get(col + k).copied().unwrap_or(0) >= n)
    }
}

pub fn default_library() -> Vec<Counter> {
    vec![Counter::full_adder(), Counter::six_three(), Counter::two_five(), Counter::slice()]
}

/// Weighted bits, one queue per column.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BitHeap {
    columns: Vec<Vec<bool>>,
}

impl BitHeap {
    /// Heap of the given column heights with every bit cleared.
    pub fn with_heights(heights: &[usize]) -> Self {
        Self {
            columns: heights.iter().map(|&h| vec![false; h]).collect(),
        }
    }

    pub fn from_columns(columns: Vec<Vec<bool>>) -> Self {
        let mut h = Self { columns };
        h.trim();
        h
    }

    fn trim(&mut self) {
        while self.columns.last().is_some_and(Vec::is_empty) {
            self.columns.pop();
        }
    }

    pub fn columns(&self) -> &[Vec<bool>] {
        &self.columns
    }

    pub fn heights(&self) -> Vec<usize> {
        self.columns.iter().map(Vec::len).collect()
    }

    pub fn height(&self) -> usize {
        self.columns.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn value(&self) -> u64 {
        self.columns
            .iter()
            .enumerate()
            .map(|(w, c)| (c.iter().filter(|&&b| b).count() as u64) << w)
            .sum()
    }

    fn push(&mut self, col: usize, bit: bool) {
        if self.columns.len() <= col {
            self.columns.resize(col + 1, Vec::new());
        }
        self.columns[col].push(bit);
    }
}

/// Column heights after pre-compressing `dk` bit products.
pub fn precompressed_heights(dk: usize) -> Vec<usize> {
    let full = dk / 3;
    let (sums, carries) = match dk % 3 {
        0 => (full, full),
        1 => (full + 1, full),
        _ => (full + 1, full + 1),
    };
    let mut h = vec![sums, carries];
    while h.last() == Some(&0) {
        h.pop();
    }
    h
}

/// Fuse the AND of `a` and `b` with a first full-adder level.
///
/// A trailing pair goes through a half adder; a single trailing product is
/// passed straight to column 0.
pub fn precompress(a: &[bool], b: &[bool]) -> Result<BitHeap> {
    if a.len() != b.len() {
        return Err(CompressorError::LengthMismatch { a: a.len(), b: b.len() });
    }
    if a.is_empty() {
        return Err(CompressorError::EmptyOperands);
    }
    let mut heap = BitHeap::default();
    for (ga, gb) in a.chunks(3).zip(b.chunks(3)) {
        let products: Vec<bool> = ga.iter().zip(gb).map(|(x, y)| x & y).collect();
        let n = products.iter().filter(|&&p| p).count();
        if products.len() == 1 {
            heap.push(0, products[0]);
        } else {
            heap.push(0, n & 1 == 1);
            heap.push(1, n >> 1 == 1);
        }
    }
    heap.trim();
    Ok(heap)
}

/// One counter instance anchored at a column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Placement {
    pub counter: usize,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stage {
    pub placements: Vec<Placement>,
    pub heights_before: Vec<usize>,
    pub heights_after: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompressionPlan {
    pub library: Vec<Counter>,
    pub initial: Vec<usize>,
    pub stages: Vec<Stage>,
}

impl CompressionPlan {
    /// Heights fed to the final carry-propagating addition.
    pub fn final_heights(&self) -> &[usize] {
        self.stages.last().map_or(&self.initial, |s| &s.heights_after)
    }

    pub fn stage_count(&self) -> usize {
        self.stages.len()
    }

    /// Compression stages plus the final addition.
    pub fn depth(&self) -> usize {
        self.stages.len() + 1
    }
}

fn counter_order(library: &[Counter]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..library.len()).collect();
    order.sort_by(|&x, &y| {
        let (a, b) = (&library[x], &library[y]);
        b.ratio()
            .total_cmp(&a.ratio())
            .then(b.inputs[0].cmp(&a.inputs[0]))
            .then(b.eliminated().cmp(&a.eliminated()))
            .then(x.cmp(&y))
    });
    order
}

fn plan_stage(heights: &[usize], library: &[Counter], order: &[usize]) -> (Vec<Placement>, Vec<usize>) {
    let mut avail = heights.to_vec();
    let mut placements = Vec::new();
    let widest = library.iter().map(|c| c.outputs.max(c.inputs.len())).max().unwrap_or(1);
    let mut after = vec![0usize; heights.len() + widest];
    for col in 0..heights.len() {
        while let Some(&idx) = order.iter().find(|&&i| library[i].fits(&avail, col)) {
            let c = &library[idx];
            for (k, &n) in c.inputs.iter().enumerate() {
                avail[col + k] -= n;
            }
            for o in 0..c.outputs {
                after[col + o] += 1;
            }
            placements.push(Placement { counter: idx, column: col });
        }
    }
    for (w, &left) in avail.iter().enumerate() {
        after[w] += left;
    }
    while after.last() == Some(&0) {
        after.pop();
    }
    (placements, after)
}

/// Greedily place counters, stage by stage, until every column holds at most
/// three bits.
pub fn schedule(heights: &[usize], library: &[Counter]) -> Result<CompressionPlan> {
    let fa = library
        .iter()
        .position(|c| c.inputs == [3] && c.outputs == 2)
        .ok_or(CompressorError::MissingFullAdder)?;
    let order = counter_order(library);
    let mut current = heights.to_vec();
    while current.last() == Some(&0) {
        current.pop();
    }
    let initial = current.clone();
    let mut stages = Vec::new();
    while current.iter().copied().max().unwrap_or(0) > 3 {
        let before_max = current.iter().copied().max().unwrap_or(0);
        let (mut placements, mut after) = plan_stage(&current, library, &order);
        if after.iter().copied().max().unwrap_or(0) >= before_max {
            (placements, after) = plan_stage(&current, library, &[fa]);
        }
        stages.push(Stage {
            placements,
            heights_before: current,
            heights_after: after.clone(),
        });
        current = after;
    }
    Ok(CompressionPlan {
        library: library.to_vec(),
        initial,
        stages,
    })
}

/// Plan for a `dk`-bit fused AND-popcount with the default library.
pub fn plan_for(dk: usize) -> CompressionPlan {
    schedule(&precompressed_heights(dk), &default_library()).expect("default library has a full adder")
}

/// Apply one stage to concrete bits. Counters take bits from the front of
/// each column queue; untouched bits pass through.
pub fn apply_stage(heap: &BitHeap, stage: &Stage, library: &[Counter]) -> BitHeap {
    let mut cols: Vec<std::collections::VecDeque<bool>> =
        heap.columns().iter().map(|c| c.iter().copied().collect()).collect();
    let mut next = BitHeap::default();
    for p in &stage.placements {
        let c = &library[p.counter];
        let mut sum = 0u64;
        for (k, &n) in c.inputs.iter().enumerate() {
            for _ in 0..n {
                let bit = cols[p.column + k].pop_front().expect("placement fits stage heights");
                sum += (bit as u64) << k;
            }
        }
        for o in 0..c.outputs {
            next.push(p.column + o, (sum >> o) & 1 == 1);
        }
    }
    for (w, col) in cols.into_iter().enumerate() {
        for bit in col {
            next.push(w, bit);
        }
    }
    next.trim();
    next
}

/// Run the plan on concrete operands and return `popcount(a AND b)`.
pub fn simulate(plan: &CompressionPlan, a: &[bool], b: &[bool]) -> Result<u64> {
    let mut heap = precompress(a, b)?;
    if heap.heights() != plan.initial {
        return Err(CompressorError::WidthMismatch {
            plan: a.len(),
            expected: plan.initial.clone(),
            actual: heap.heights(),
        });
    }
    let value = heap.value();
    for (s, stage) in plan.stages.iter().enumerate() {
        heap = apply_stage(&heap, stage, &plan.library);
        debug_assert_eq!(heap.heights(), stage.heights_after);
        if heap.value() != value {
            return Err(CompressorError::ValueChanged {
                stage: s,
                before: value,
                after: heap.value(),
            });
        }
    }
    Ok(heap.value())
}

/// `1` pre-compression + compression stages + `1` final addition + `1`
/// accumulator.
pub fn pipeline_depth(dk: usize) -> usize {
    1 + plan_for(dk).stage_count() + 1 + 1
}

pub fn counter_stats(plan: &CompressionPlan) -> BTreeMap<CounterKind, usize> {
    let mut hist = BTreeMap::new();
    for stage in &plan.stages {
        for p in &stage.placements {
            *hist.entry(plan.library[p.counter].kind).or_insert(0) += 1;
        }
    }
    hist
}

/// Published counter usage as `[(2,5), (6:3), (3:1), slice]`.
pub fn reference_counter_stats(dk: usize) -> Option<[Option<usize>; 4]> {
    Some(match dk {
        32 => [Some(3), Some(1), None, None],
        64 => [Some(4), Some(3), Some(2), Some(1)],
        128 => [Some(8), Some(7), Some(5), Some(3)],
        256 => [Some(17), Some(13), Some(3), Some(9)],
        512 => [Some(38), Some(25), Some(4), Some(19)],
        1024 => [Some(79), Some(51), Some(6), Some(38)],
        _ => return None,
    })
}

/// LUT estimate: counter costs, two LUTs per pre-compressed group and one per
/// column of the final adder.
pub fn estimated_luts(plan: &CompressionPlan, dk: usize) -> u64 {
    let counters: u64 = plan
        .stages
        .iter()
        .flat_map(|s| &s.placements)
        .map(|p| plan.library[p.counter].lut_cost as u64)
        .sum();
    counters + 2 * dk.div_ceil(3) as u64 + plan.final_heights().len() as u64
}

/// Dot diagram of column heights, most significant column on the left.
pub fn render_heights(heights: &[usize]) -> String {
    let tallest = heights.iter().copied().max().unwrap_or(0);
    let mut out = String::new();
    for level in (0..tallest).rev() {
        for &h in heights.iter().rev() {
            out.push(if h > level { 'o' } else { ' ' });
        }
        let trimmed = out.trim_end().len();
        out.truncate(trimmed);
        out.push('\n');
    }
    out
}

/// Human-readable plan report.
pub fn render_plan(plan: &CompressionPlan, dk: usize) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "popcount width: {dk}");
    let _ = writeln!(out, "initial heights: {:?}", plan.initial);
    out.push_str(&render_heights(&plan.initial));
    for (i, st) in plan.stages.iter().enumerate() {
        let mut per_kind: BTreeMap<CounterKind, usize> = BTreeMap::new();
        for p in &st.placements {
            *per_kind.entry(plan.library[p.counter].kind).or_insert(0) += 1;
        }
        let used: Vec<String> = per_kind.iter().map(|(k, n)| format!("{n}x{}", k.label())).collect();
        let _ = writeln!(out, "stage {}: {} -> heights {:?}", i + 1, used.join(" "), st.heights_after);
        out.push_str(&render_heights(&st.heights_after));
    }
    let _ = writeln!(out, "final addition over {} columns", plan.final_heights().len());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bits(v: u64, n: usize) -> Vec<bool> {
        (0..n).map(|i| (v >> i) & 1 == 1).collect()
    }

    fn popcount_and(a: &[bool], b: &[bool]) -> u64 {
        a.iter().zip(b).filter(|(x, y)| **x && **y).count() as u64
    }

    #[test]
    fn counters_fit_their_outputs() {
        for c in default_library() {
            assert!(c.max_sum() < 1 << c.outputs, "{:?}", c.kind);
        }
        assert_eq!(Counter::two_five().max_sum(), 9);
        assert_eq!(Counter::slice().max_sum(), 3 + 4 + 8 + 16);
    }

    #[test]
    fn precompress_heights() {
        let h = precompress(&[true; 32], &[true; 32]).unwrap();
        assert_eq!(h.heights(), vec![11, 11]);
        assert_eq!(h.value(), 32);
        assert_eq!(precompressed_heights(32), vec![11, 11]);
        for dk in 1..50 {
            let h = precompress(&vec![true; dk], &vec![true; dk]).unwrap();
            assert_eq!(h.heights(), precompressed_heights(dk));
            assert_eq!(h.height(), dk.div_ceil(3));
        }
    }

    #[test]
    fn precompress_errors_and_zero() {
        assert_eq!(
            precompress(&[true; 3], &[true; 4]).unwrap_err(),
            CompressorError::LengthMismatch { a: 3, b: 4 }
        );
        assert_eq!(precompress(&[], &[]).unwrap_err(), CompressorError::EmptyOperands);
        for dk in [1, 7, 64, 1024] {
            assert_eq!(precompress(&vec![false; dk], &vec![false; dk]).unwrap().value(), 0);
        }
    }

    #[test]
    fn precompress_random_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for dk in [32, 64, 128, 256, 512, 1024] {
            for _ in 0..50 {
                let a: Vec<bool> = (0..dk).map(|_| rng.gen()).collect();
                let b: Vec<bool> = (0..dk).map(|_| rng.gen()).collect();
                assert_eq!(precompress(&a, &b).unwrap().value(), popcount_and(&a, &b));
            }
        }
    }

    #[test]
    fn thirty_two_bit_plan_has_two_stages() {
        let plan = plan_for(32);
        assert_eq!(plan.stage_count(), 2);
        assert_eq!(plan.stages[0].heights_after, vec![4, 6, 3, 1]);
        assert!(plan.final_heights().iter().all(|&h| h <= 3));
        assert_eq!(pipeline_depth(32), 5);
    }

    #[test]
    fn short_heaps_need_no_stages() {
        let plan = schedule(&[3, 2, 3], &default_library()).unwrap();
        assert_eq!(plan.stage_count(), 0);
        assert!(counter_stats(&plan).is_empty());
        assert_eq!(pipeline_depth(3), 3);
        assert_eq!(pipeline_depth(1), 3);
    }

    #[test]
    fn wide_popcount_depth_bound() {
        assert!(pipeline_depth(1024) <= 10, "depth {}", pipeline_depth(1024));
        let depths: Vec<usize> = [32, 64, 128, 256, 512, 1024].iter().map(|&d| pipeline_depth(d)).collect();
        assert!(depths.windows(2).all(|w| w[0] <= w[1]), "{depths:?}");
    }

    #[test]
    fn library_without_full_adder_is_rejected() {
        assert_eq!(
            schedule(&[9], &[Counter::six_three()]).unwrap_err(),
            CompressorError::MissingFullAdder
        );
    }

    #[test]
    fn exhaustive_small_widths() {
        for dk in 1..=12usize {
            let plan = plan_for(dk);
            for x in 0..1u64 << dk {
                let a = bits(x, dk);
                for y in [x, !x, x.rotate_left(3), (1 << dk) - 1] {
                    let b = bits(y, dk);
                    assert_eq!(simulate(&plan, &a, &b).unwrap(), popcount_and(&a, &b));
                }
            }
        }
    }

    #[test]
    fn saturated_and_example_operands() {
        let plan = plan_for(256);
        assert_eq!(simulate(&plan, &[true; 256], &[true; 256]).unwrap(), 256);
        let plan = plan_for(2);
        assert_eq!(simulate(&plan, &[true, false], &[false, false]).unwrap(), 0);
    }

    #[test]
    fn plan_width_mismatch() {
        let plan = plan_for(32);
        assert!(matches!(
            simulate(&plan, &[true; 64], &[true; 64]),
            Err(CompressorError::WidthMismatch { .. })
        ));
    }

    #[test]
    fn full_adder_only_stage_bound() {
        let fa = [Counter::full_adder()];
        for dk in [32usize, 64, 128, 256, 512, 1024] {
            let h = precompressed_heights(dk);
            let plan = schedule(&h, &fa).unwrap();
            let height = *h.iter().max().unwrap() as f64;
            let bound = ((height / 3.0).ln() / 1.5f64.ln()).ceil() as usize + 1;
            assert!(plan.stage_count() <= bound, "dk={dk}: {} > {bound}", plan.stage_count());
        }
    }

    #[test]
    fn heights_strictly_decrease() {
        for dk in [32, 64, 128, 256, 512, 1024, 4096] {
            let plan = plan_for(dk);
            let mut prev = plan.initial.iter().max().copied().unwrap();
            for st in &plan.stages {
                let now = st.heights_after.iter().max().copied().unwrap();
                assert!(now < prev);
                prev = now;
            }
        }
    }

    #[test]
    fn stats_and_luts() {
        let plan = plan_for(32);
        let stats = counter_stats(&plan);
        let total: usize = stats.values().sum();
        assert_eq!(total, plan.stages.iter().map(|s| s.placements.len()).sum::<usize>());
        assert!(estimated_luts(&plan, 32) > 2 * 11);
        assert_eq!(reference_counter_stats(32), Some([Some(3), Some(1), None, None]));
        assert_eq!(reference_counter_stats(48), None);
    }

    #[test]
    fn rendering() {
        assert_eq!(render_heights(&[2, 1]), " o\noo\n");
        let text = render_plan(&plan_for(32), 32);
        assert!(text.contains("stage 2"));
    }

    fn arb_heights() -> impl Strategy<Value = Vec<usize>> {
        proptest::collection::vec(0usize..40, 1..10)
    }

    proptest! {
        #[test]
        fn schedule_preserves_random_heap_values(h in arb_heights(), seed in any::<u64>()) {
            let plan = schedule(&h, &default_library()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cols: Vec<Vec<bool>> = plan.initial.iter().map(|&n| (0..n).map(|_| rng.gen()).collect()).collect();
            let mut heap = BitHeap::from_columns(cols);
            let value = heap.value();
            for st in &plan.stages {
                heap = apply_stage(&heap, st, &plan.library);
                prop_assert_eq!(heap.heights(), st.heights_after.clone());
                prop_assert_eq!(heap.value(), value);
            }
            prop_assert!(heap.height() <= 3);
        }

        #[test]
        fn stage_placements_commute(h in arb_heights(), seed in any::<u64>()) {
            let plan = schedule(&h, &default_library()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for st in &plan.stages {
                let mut shuffled = st.clone();
                for i in (1..shuffled.placements.len()).rev() {
                    shuffled.placements.swap(i, rng.gen_range(0..=i));
                }
                let heap = BitHeap::with_heights(&st.heights_before);
                let a = apply_stage(&heap, st, &plan.library);
                let b = apply_stage(&heap, &shuffled, &plan.library);
                prop_assert_eq!(a.heights(), b.heights());
            }
        }

        #[test]
        fn random_operands_exact(dk in 13usize..300, seed in any::<u64>()) {
            let plan = plan_for(dk);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a: Vec<bool> = (0..dk).map(|_| rng.gen()).collect();
            let b: Vec<bool> = (0..dk).map(|_| rng.gen()).collect();
            prop_assert_eq!(simulate(&plan, &a, &b).unwrap(), popcount_and(&a, &b));
        }
    }
}
