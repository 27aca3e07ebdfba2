//! Bessel functions J0 and I_nu for real arguments.

use super::gamma::ln_gamma;
use crate::error::{Error, Result};
use std::f64::consts::{FRAC_PI_4, PI};

const J0_SERIES_LIMIT: f64 = 6.0;
const J0_ASYMPTOTIC_LIMIT: f64 = 50.0;
const J0_TRAPEZOID_NODES: usize = 96;

/// Bessel function of the first kind, order zero.
///
/// Power series near the origin, the periodic-trapezoid form of
/// `(1/pi) int_0^pi cos(x sin t) dt` at moderate arguments, and the Hankel
/// asymptotic expansion beyond that.
pub fn bessel_j0(x: f64) -> f64 {
    let ax = x.abs();
    if ax <= J0_SERIES_LIMIT {
        j0_series(ax)
    } else if ax <= J0_ASYMPTOTIC_LIMIT {
        j0_trapezoid(ax)
    } else {
        j0_hankel(ax)
    }
}

fn j0_series(x: f64) -> f64 {
    let q = -0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..60 {
        let kf = k as f64;
        term *= q / (kf * kf);
        sum += term;
        if term.abs() < 1e-18 * sum.abs().max(1e-3) {
            break;
        }
    }
    sum
}

fn j0_trapezoid(x: f64) -> f64 {
    // integrand has period pi, so the trapezoid rule converges geometrically
    let n = J0_TRAPEZOID_NODES;
    let mut sum = 0.0;
    for k in 0..n {
        let t = PI * k as f64 / n as f64;
        sum += (x * t.sin()).cos();
    }
    sum / n as f64
}

fn j0_hankel(x: f64) -> f64 {
    let (p, q) = hankel_pq(0.0, x);
    let chi = x - FRAC_PI_4;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

fn hankel_pq(nu: f64, x: f64) -> (f64, f64) {
    let mu = 4.0 * nu * nu;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term = 1.0;
    let mut last = f64::INFINITY;
    for k in 1..80 {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        term *= (mu - odd * odd) / (kf * 8.0 * x);
        if term.abs() > last {
            break;
        }
        last = term.abs();
        // a_k / x^k enters P for even k, Q for odd k, with alternating signs
        match k % 4 {
            1 => q += term,
            2 => p -= term,
            3 => q -= term,
            _ => p += term,
        }
        if term.abs() < 1e-18 {
            break;
        }
    }
    (p, q)
}

/// Natural log of the modified Bessel function I_nu(x), nu >= 0, x >= 0.
pub fn ln_bessel_i(nu: f64, x: f64) -> f64 {
    assert!(nu >= 0.0 && x >= 0.0, "ln_bessel_i needs nu >= 0, x >= 0");
    if x == 0.0 {
        return if nu == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if x > 50.0 && x > 2.0 * nu * nu {
        return ln_bessel_i_asymptotic(nu, x);
    }
    // Ascending series summed outward from its largest term.
    let half = 0.5 * x;
    let ln_half = half.ln();
    let peak = ((-(nu + 2.0) + (nu * nu + x * x).sqrt()) * 0.5).max(0.0).round();
    let ln_peak = (nu + 2.0 * peak) * ln_half - ln_gamma(peak + 1.0) - ln_gamma(nu + peak + 1.0);
    let h2 = half * half;
    let mut sum = 1.0;
    // upward
    let mut term = 1.0;
    let mut k = peak;
    loop {
        term *= h2 / ((k + 1.0) * (k + 1.0 + nu));
        sum += term;
        k += 1.0;
        if term < 1e-18 * sum {
            break;
        }
    }
    // downward
    let mut term = 1.0;
    let mut k = peak;
    while k >= 1.0 {
        term *= k * (k + nu) / h2;
        sum += term;
        k -= 1.0;
        if term < 1e-18 * sum {
            break;
        }
    }
    ln_peak + sum.ln()
}

fn ln_bessel_i_asymptotic(nu: f64, x: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let mut sum = 1.0;
    let mut term = 1.0;
    let mut last = f64::INFINITY;
    for k in 1..60 {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        term *= -(mu - odd * odd) / (kf * 8.0 * x);
        if term.abs() > last {
            break;
        }
        last = term.abs();
        sum += term;
        if term.abs() < 1e-18 {
            break;
        }
    }
    x - 0.5 * (2.0 * PI * x).ln() + sum.ln()
}

/// Modified Bessel function I_nu(x).
///
/// Returns [`Error::Overflow`] where the value exceeds the f64 range; use
/// [`bessel_i_scaled`] there.
pub fn bessel_i(nu: f64, x: f64) -> Result<f64> {
    if nu < 0.0 || x < 0.0 || !x.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "bessel_i needs nu >= 0 and finite x >= 0 (nu={nu}, x={x})"
        )));
    }
    let l = ln_bessel_i(nu, x);
    if l > f64::MAX.ln() {
        return Err(Error::Overflow(format!(
            "I_{nu}({x}) exceeds f64 range; use bessel_i_scaled"
        )));
    }
    Ok(l.exp())
}

/// Exponentially scaled modified Bessel function e^{-x} I_nu(x).
pub fn bessel_i_scaled(nu: f64, x: f64) -> Result<f64> {
    if nu < 0.0 || x < 0.0 || !x.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "bessel_i_scaled needs nu >= 0 and finite x >= 0 (nu={nu}, x={x})"
        )));
    }
    Ok((ln_bessel_i(nu, x) - x).exp())
}
