//! Bit-serial matrix multiplication toolkit.
//!
//! The crate models a precision-scalable bit-serial GEMM overlay end to end:
//! bit-plane data layouts ([`bitmatrix`]), reference engines ([`refgemm`]),
//! the fused AND-popcount compressor ([`compressor`]), the overlay instruction
//! set ([`isa`]), a tiling program generator ([`scheduler`]), a functional and
//! cycle-approximate pipeline simulator ([`simulator`]) and the analytical
//! resource model ([`costmodel`]). [`formats`] holds the on-disk encodings.

pub mod bitmatrix;
pub mod compressor;
pub mod costmodel;
pub mod formats;
pub mod isa;
pub mod refgemm;
pub mod scheduler;
pub mod simulator;
