//! Sampling-based decoding, reranking and distillation-data tooling for
//! machine translation.
//!
//! Candidates are drawn with epsilon sampling ([`sampling`]), a winner is
//! picked by minimum Bayes risk ([`mbr`]) or a reference-free quality score
//! ([`qe`]), and the winners become finetuning data ([`distill`]).

// `!(x >= 0.0)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corpusprep;
pub mod distill;
mod error;
pub mod eval;
pub mod jsonl;
pub mod mbr;
pub mod metrics;
pub mod qe;
pub mod sampling;
pub mod types;

pub use error::{Error, Result};
pub use types::*;
