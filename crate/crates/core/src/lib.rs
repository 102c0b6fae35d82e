//! Numerical toolkit for a doubling-map base driving Manneville–Pomeau
//! fibers: fiberwise and full transfer operators, the transverse potential
//! `Φ`, cone contraction in the Hilbert metric, Ruelle–Perron–Frobenius
//! eigendata and the good/bad word estimates.

#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::too_many_arguments
)]

pub mod base;
pub mod cone;
pub mod config;
pub mod error;
pub mod experiments;
pub mod fiber;
pub mod hypotheses;
pub mod phi;
pub mod potential;
pub mod rpf;
pub mod skew;
pub mod stats;
pub mod transfer;
pub mod words;

pub use base::BasePoint;
pub use error::{Error, Result};
pub use fiber::MpFamily;
pub use hypotheses::HypothesisConstants;
pub use potential::TrigPotential;
pub use skew::SkewProduct;
