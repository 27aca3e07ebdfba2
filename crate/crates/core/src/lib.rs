//! Analytical and Monte Carlo reliability engines for dual-hop
//! decode-and-forward mmWave relay channels with outdated CSI, co-channel
//! interference and blockage.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod link;
pub mod metrics;
pub mod montecarlo;
pub mod quadrature;
pub mod sinr;
pub mod special;
pub mod units;

pub use error::{Error, Result};
