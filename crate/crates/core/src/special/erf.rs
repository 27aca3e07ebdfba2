//! Error function family, built on the regularized incomplete gamma:
//! erf(x) = P(1/2, x^2), erfc(x) = Q(1/2, x^2) for x >= 0.

use super::gamma::{gamma_p, gamma_q};
use std::f64::consts::SQRT_2;

pub fn erf(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let v = gamma_p(0.5, x * x);
    if x > 0.0 {
        v
    } else {
        -v
    }
}

pub fn erfc(x: f64) -> f64 {
    if x >= 0.0 {
        gamma_q(0.5, x * x)
    } else {
        1.0 + gamma_p(0.5, x * x)
    }
}

/// Gaussian tail probability Q(x) = P[N(0,1) > x].
pub fn gaussian_q(x: f64) -> f64 {
    if x >= 0.0 {
        0.5 * erfc(x / SQRT_2)
    } else {
        1.0 - 0.5 * erfc(-x / SQRT_2)
    }
}
