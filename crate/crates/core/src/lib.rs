//! Headline-driven forecasting pipeline: topic and sentiment indicators from
//! dated news headlines, lagged-regression framing of price series,
//! tree ensembles and linear baselines, and forecast comparison tests.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod corpus;
pub mod embed;
pub mod error;
pub mod eval;
mod linalg;
pub mod learn;
pub mod sentiment;
pub mod sparse;
pub mod synth;
pub mod topics;
pub mod tsfeat;

pub use error::{Error, Result};

/// Derives an independent stream seed for task `index` from a base seed
/// (splitmix64 finalizer).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
