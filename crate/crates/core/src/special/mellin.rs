//! Meijer-G and Fox-H functions by direct quadrature of their Mellin-Barnes
//! integrals along vertical contours.
//!
//! Conventions follow the usual G-function layout: for a univariate kernel
//! with parameters (a_j, A_j), (b_j, B_j) the integrand is
//!
//! ```text
//! prod_{j<m} G(b_j - B_j s) prod_{j<n} G(1 - a_j + A_j s)
//! ------------------------------------------------------  z^s
//! prod_{j>=m} G(1 - b_j + B_j s) prod_{j>=n} G(a_j - A_j s)
//! ```
//!
//! integrated over `s = c + i t` and divided by `2 pi`.

use super::gamma::{ln_gamma, ln_gamma_complex};
use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;
use num_complex::Complex64;
use std::f64::consts::PI;

/// Quadrature rule along the contour.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContourRule {
    Trapezoid,
    GaussLegendre,
}

/// Real part of the vertical contour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContourShift {
    /// Saddle point of the integrand on the real axis, inside the strip that
    /// separates the two pole families.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourConfig {
    pub node_count: usize,
    pub half_length: f64,
    pub shift: ContourShift,
    pub rule: ContourRule,
    /// Upper limit for adaptive doubling of `node_count`.
    pub max_node_count: usize,
    /// Relative tolerance on the convergence estimate.
    pub tolerance: f64,
}

impl Default for ContourConfig {
    fn default() -> Self {
        Self {
            node_count: 512,
            half_length: 60.0,
            shift: ContourShift::Auto,
            rule: ContourRule::GaussLegendre,
            max_node_count: 4096,
            tolerance: 1e-8,
        }
    }
}

impl ContourConfig {
    /// Same configuration without adaptive refinement.
    pub fn fixed_nodes(node_count: usize) -> Self {
        Self { node_count, max_node_count: node_count, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.node_count < 64 {
            return Err(Error::InvalidParameter(format!(
                "contour node_count must be >= 64, got {}",
                self.node_count
            )));
        }
        if !(self.half_length > 0.0) || !self.half_length.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "contour half_length must be positive, got {}",
                self.half_length
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter("contour tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of a contour evaluation.
///
/// The value is held as `mantissa * exp(ln_scale)` so that results far
/// outside the f64 range can still be combined in log space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub mantissa: f64,
    pub ln_scale: f64,
    /// |I(N) - I(N/2)| plus the truncated-tail bound, in mantissa units.
    pub estimate: f64,
    /// Rounding-error level of the quadrature sum, in mantissa units.
    pub roundoff_floor: f64,
    pub nodes: usize,
    pub shift: (f64, f64),
    pub converged: bool,
}

impl Evaluation {
    pub fn value(&self) -> f64 {
        if self.mantissa == 0.0 {
            return 0.0;
        }
        self.mantissa * self.ln_scale.exp()
    }

    /// Natural log of |value|.
    pub fn ln_abs(&self) -> f64 {
        self.mantissa.abs().ln() + self.ln_scale
    }

    /// Convergence estimate relative to |value|.
    pub fn relative_estimate(&self) -> f64 {
        self.estimate.max(self.roundoff_floor) / self.mantissa.abs()
    }

    /// Absolute convergence estimate in value units.
    pub fn absolute_estimate(&self) -> f64 {
        self.estimate.max(self.roundoff_floor) * self.ln_scale.exp()
    }
}

/// Parameters of a univariate Meijer-G function G^{m,n}_{p,q}.
#[derive(Debug, Clone, PartialEq)]
pub struct MeijerGSpec {
    pub m: usize,
    pub n: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl MeijerGSpec {
    pub fn new(m: usize, n: usize, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let spec = Self { m, n, a, b };
        spec.validate()?;
        Ok(spec)
    }

    pub fn p(&self) -> usize {
        self.a.len()
    }

    pub fn q(&self) -> usize {
        self.b.len()
    }

    fn validate(&self) -> Result<()> {
        if self.m > self.q() || self.n > self.p() {
            return Err(Error::IllPosed(format!(
                "G^{{{},{}}}_{{{},{}}} needs m <= q and n <= p",
                self.m,
                self.n,
                self.p(),
                self.q()
            )));
        }
        if self.a.iter().chain(&self.b).any(|v| !v.is_finite()) {
            return Err(Error::IllPosed("non-finite Meijer-G parameter".into()));
        }
        Ok(())
    }

    pub fn to_fox(&self) -> FoxHSpec {
        FoxHSpec {
            m: self.m,
            n: self.n,
            a: self.a.iter().map(|&v| (v, 1.0)).collect(),
            b: self.b.iter().map(|&v| (v, 1.0)).collect(),
        }
    }
}

/// Parameters of a univariate Fox-H function: `(coefficient, weight)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct FoxHSpec {
    pub m: usize,
    pub n: usize,
    pub a: Vec<(f64, f64)>,
    pub b: Vec<(f64, f64)>,
}

impl FoxHSpec {
    pub fn new(m: usize, n: usize, a: Vec<(f64, f64)>, b: Vec<(f64, f64)>) -> Result<Self> {
        let spec = Self { m, n, a, b };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if self.m > self.b.len() || self.n > self.a.len() {
            return Err(Error::IllPosed(format!(
                "H^{{{},{}}}_{{{},{}}} needs m <= q and n <= p",
                self.m,
                self.n,
                self.a.len(),
                self.b.len()
            )));
        }
        for &(c, w) in self.a.iter().chain(&self.b) {
            if !c.is_finite() || !(w > 0.0) || !w.is_finite() {
                return Err(Error::IllPosed(format!(
                    "Fox-H pair ({c}, {w}) needs a finite coefficient and positive weight"
                )));
            }
        }
        Ok(())
    }

    /// Decay exponent of the integrand along the imaginary direction; the
    /// contour integral converges when it is positive.
    pub fn decay_exponent(&self) -> f64 {
        let (n, m) = (self.n, self.m);
        let a: f64 = self.a[..n].iter().map(|p| p.1).sum::<f64>()
            - self.a[n..].iter().map(|p| p.1).sum::<f64>();
        let b: f64 = self.b[..m].iter().map(|p| p.1).sum::<f64>()
            - self.b[m..].iter().map(|p| p.1).sum::<f64>();
        a + b
    }

    /// Open interval of contour positions separating the two pole families.
    pub fn strip(&self) -> (f64, f64) {
        let hi = self.b[..self.m]
            .iter()
            .map(|&(b, w)| b / w)
            .fold(f64::INFINITY, f64::min);
        let lo = self.a[..self.n]
            .iter()
            .map(|&(a, w)| (a - 1.0) / w)
            .fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    fn ln_kernel(&self, s: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, &(b, w)) in self.b.iter().enumerate() {
            if j < self.m {
                acc += ln_gamma_complex(b - w * s);
            } else {
                acc -= ln_gamma_complex(1.0 - b + w * s);
            }
        }
        for (j, &(a, w)) in self.a.iter().enumerate() {
            if j < self.n {
                acc += ln_gamma_complex(1.0 - a + w * s);
            } else {
                acc -= ln_gamma_complex(a - w * s);
            }
        }
        acc
    }

    /// Log-magnitude of the pole-bearing numerator factors on the real axis.
    fn ln_numerator_real(&self, c: f64) -> f64 {
        let mut acc = 0.0;
        for &(b, w) in &self.b[..self.m] {
            acc += ln_gamma(b - w * c);
        }
        for &(a, w) in &self.a[..self.n] {
            acc += ln_gamma(1.0 - a + w * c);
        }
        acc
    }
}

/// Joint-group entry of a bivariate Fox-H function: (coefficient, weight on
/// the first variable, weight on the second).
pub type JointPair = (f64, f64, f64);

/// Bivariate Fox-H function
/// H^{0,n1:m2,n2:m3,n3}_{p1,q1:p2,q2:p3,q3}.
///
/// The joint factor is
///
/// ```text
/// prod_{j<n1} G(1 - a_j + al_j s + A_j t)
/// ---------------------------------------------------------------------
/// prod_{j>=n1} G(a_j - al_j s - A_j t) prod_j G(1 - b_j + be_j s + B_j t)
/// ```
///
/// and `first` / `second` are the univariate kernels in `s` and `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FoxHBivariateSpec {
    pub n1: usize,
    pub joint_a: Vec<JointPair>,
    pub joint_b: Vec<JointPair>,
    pub first: FoxHSpec,
    pub second: FoxHSpec,
}

impl FoxHBivariateSpec {
    pub fn new(
        n1: usize,
        joint_a: Vec<JointPair>,
        joint_b: Vec<JointPair>,
        first: FoxHSpec,
        second: FoxHSpec,
    ) -> Result<Self> {
        let spec = Self { n1, joint_a, joint_b, first, second };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if self.n1 > self.joint_a.len() {
            return Err(Error::IllPosed("joint group needs n1 <= p1".into()));
        }
        for &(c, w1, w2) in self.joint_a.iter().chain(&self.joint_b) {
            if !c.is_finite() || !(w1 > 0.0) || !(w2 > 0.0) || !w1.is_finite() || !w2.is_finite() {
                return Err(Error::IllPosed(format!(
                    "joint pair ({c}; {w1}, {w2}) needs finite coefficient and positive weights"
                )));
            }
        }
        self.first.validate()?;
        self.second.validate()
    }

    fn joint_decay(&self) -> (f64, f64) {
        let mut d = (0.0, 0.0);
        for (j, &(_, w1, w2)) in self.joint_a.iter().enumerate() {
            let sign = if j < self.n1 { 1.0 } else { -1.0 };
            d.0 += sign * w1;
            d.1 += sign * w2;
        }
        for &(_, w1, w2) in &self.joint_b {
            d.0 -= w1;
            d.1 -= w2;
        }
        d
    }

    fn ln_joint(&self, s: Complex64, t: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, &(a, w1, w2)) in self.joint_a.iter().enumerate() {
            if j < self.n1 {
                acc += ln_gamma_complex(1.0 - a + w1 * s + w2 * t);
            } else {
                acc -= ln_gamma_complex(a - w1 * s - w2 * t);
            }
        }
        for &(b, w1, w2) in &self.joint_b {
            acc -= ln_gamma_complex(1.0 - b + w1 * s + w2 * t);
        }
        acc
    }

    fn ln_joint_numerator_real(&self, c1: f64, c2: f64) -> f64 {
        self.joint_a[..self.n1]
            .iter()
            .map(|&(a, w1, w2)| ln_gamma(1.0 - a + w1 * c1 + w2 * c2))
            .sum()
    }

    fn joint_feasible(&self, c1: f64, c2: f64) -> bool {
        self.joint_a[..self.n1]
            .iter()
            .all(|&(a, w1, w2)| 1.0 - a + w1 * c1 + w2 * c2 > 0.0)
    }
}

fn check_argument(z: f64, name: &str) -> Result<()> {
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::IllPosed(format!("{name} must be positive and finite, got {z}")));
    }
    Ok(())
}

// Search interval for the contour position; unbounded sides are clipped to a
// width that comfortably contains the saddle for the given argument.
fn search_interval(lo: f64, hi: f64, z: f64) -> (f64, f64) {
    let width = (60.0 + 3.0 * z.max(1.0 / z)).min(1e4);
    let pad = |span: f64| 1e-7 * (1.0 + span.abs());
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => {
            let margin = (1e-7 * (hi - lo)).max(pad(hi.abs().max(lo.abs())) * 1e-2);
            (lo + margin, hi - margin)
        }
        (true, false) => (lo + pad(lo), lo + width),
        (false, true) => (hi - width, hi - pad(hi)),
        (false, false) => (-width, width),
    }
}

fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if (b - a).abs() <= 1e-10 * (1.0 + a.abs() + b.abs()) {
            break;
        }
        // a non-finite value sits on a pole; move away from it
        if f1 < f2 || !f2.is_finite() {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        }
    }
    0.5 * (a + b)
}

fn choose_shift(spec: &FoxHSpec, z: f64, shift: ContourShift) -> Result<f64> {
    let (lo, hi) = spec.strip();
    if !(lo < hi) {
        return Err(Error::IllPosed(format!(
            "poles cannot be separated: left poles reach {lo}, right poles start at {hi}"
        )));
    }
    match shift {
        ContourShift::Fixed(c) => {
            if c > lo && c < hi {
                Ok(c)
            } else {
                Err(Error::IllPosed(format!(
                    "contour at Re s = {c} lies outside the separating strip ({lo}, {hi})"
                )))
            }
        }
        ContourShift::Auto => {
            let (a, b) = search_interval(lo, hi, z);
            let lz = z.ln();
            Ok(golden_min(|c| spec.ln_numerator_real(c) + c * lz, a, b))
        }
    }
}

fn nodes_on(rule: ContourRule, n: usize, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
    match rule {
        ContourRule::GaussLegendre => {
            let gl = GaussLegendre::cached(n);
            let half = 0.5 * (hi - lo);
            let mid = 0.5 * (hi + lo);
            (
                gl.nodes.iter().map(|x| mid + half * x).collect(),
                gl.weights.iter().map(|w| half * w).collect(),
            )
        }
        ContourRule::Trapezoid => {
            let h = (hi - lo) / n as f64;
            let xs = (0..=n).map(|k| lo + h * k as f64).collect();
            let mut ws = vec![h; n + 1];
            ws[0] *= 0.5;
            ws[n] *= 0.5;
            (xs, ws)
        }
    }
}

const TRIM_RATIO_LN: f64 = -41.4465; // ln 1e-18
const SCAN_STEP: f64 = 0.25;

// Extent beyond which the scaled integrand is negligible, and its peak log
// magnitude, found on a coarse scan of [0, half_length].
fn scan_extent<F: Fn(f64) -> f64>(ln_abs: F, half_length: f64) -> (f64, f64, f64) {
    let steps = (half_length / SCAN_STEP).ceil() as usize;
    let values: Vec<(f64, f64)> = (0..=steps)
        .map(|k| {
            let t = (k as f64 * SCAN_STEP).min(half_length);
            (t, ln_abs(t))
        })
        .collect();
    let peak = values
        .iter()
        .map(|v| v.1)
        .filter(|v| v.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    let last = values
        .iter()
        .rev()
        .find(|v| v.1 - peak > TRIM_RATIO_LN)
        .map(|v| v.0)
        .unwrap_or(0.0);
    let extent = (last + 4.0 * SCAN_STEP).min(half_length);
    let tail = values
        .iter()
        .rev()
        .find(|v| v.0 <= extent)
        .map(|v| v.1)
        .unwrap_or(f64::NEG_INFINITY);
    (extent, peak, tail)
}

/// Univariate Meijer-G function by contour quadrature.
pub fn meijer_g(spec: &MeijerGSpec, z: f64, contour: &ContourConfig) -> Result<Evaluation> {
    spec.validate()?;
    fox_h(&spec.to_fox(), z, contour)
}

/// Univariate Fox-H function by contour quadrature; fails when the
/// convergence estimate stays above tolerance at `max_node_count`.
pub fn fox_h(spec: &FoxHSpec, z: f64, contour: &ContourConfig) -> Result<Evaluation> {
    let eval = fox_h_unrefined(spec, z, contour)?;
    if !eval.converged {
        return Err(Error::NonConvergence {
            value: eval.value(),
            estimate: eval.relative_estimate(),
            nodes: eval.nodes,
        });
    }
    Ok(eval)
}

/// As [`fox_h`] but returns the last refinement even when it has not met
/// the tolerance.
pub fn fox_h_unrefined(spec: &FoxHSpec, z: f64, contour: &ContourConfig) -> Result<Evaluation> {
    contour.validate()?;
    spec.validate()?;
    check_argument(z, "argument z")?;
    if !(spec.decay_exponent() > 0.0) {
        return Err(Error::IllPosed(format!(
            "contour integral diverges: decay exponent {} is not positive",
            spec.decay_exponent()
        )));
    }
    let c = choose_shift(spec, z, contour.shift)?;
    let lz = z.ln();
    let ln_f = |t: f64| {
        let s = Complex64::new(c, t);
        spec.ln_kernel(s) + s * lz
    };
    let (extent, peak, tail_ln) = scan_extent(|t| ln_f(t).re, contour.half_length);
    let scaled = |t: f64| {
        let v = (ln_f(t) - peak).exp();
        if v.re.is_finite() {
            v.re
        } else {
            0.0
        }
    };
    let tail = (tail_ln - peak).exp() / PI;

    let integrate = |n: usize| -> (f64, f64) {
        let (xs, ws) = nodes_on(contour.rule, n, 0.0, extent);
        let mut sum = 0.0;
        let mut abs = 0.0;
        for (x, w) in xs.iter().zip(&ws) {
            let v = w * scaled(*x);
            sum += v;
            abs += v.abs();
        }
        (sum / PI, abs / PI)
    };

    let mut n = contour.node_count;
    let mut coarse = integrate(n / 2).0;
    loop {
        let (fine, abs) = integrate(n);
        let estimate = (fine - coarse).abs() + tail;
        let floor = 64.0 * f64::EPSILON * abs;
        let ok = estimate <= (contour.tolerance * fine.abs()).max(floor);
        if ok || 2 * n > contour.max_node_count {
            return Ok(Evaluation {
                mantissa: fine,
                ln_scale: peak,
                estimate,
                roundoff_floor: floor,
                nodes: n,
                shift: (c, 0.0),
                converged: ok,
            });
        }
        coarse = fine;
        n *= 2;
    }
}

/// Bivariate Fox-H function by double contour quadrature.
pub fn fox_h_bivariate(
    spec: &FoxHBivariateSpec,
    z1: f64,
    z2: f64,
    contour: &ContourConfig,
) -> Result<Evaluation> {
    let eval = fox_h_bivariate_unrefined(spec, z1, z2, contour)?;
    if !eval.converged {
        return Err(Error::NonConvergence {
            value: eval.value(),
            estimate: eval.relative_estimate(),
            nodes: eval.nodes,
        });
    }
    Ok(eval)
}

fn bivariate_shift(spec: &FoxHBivariateSpec, z1: f64, z2: f64, shift: ContourShift) -> Result<(f64, f64)> {
    let (lo1, hi1) = spec.first.strip();
    let (lo2, hi2) = spec.second.strip();
    if !(lo1 < hi1) || !(lo2 < hi2) {
        return Err(Error::IllPosed("univariate kernels have overlapping pole families".into()));
    }
    if let ContourShift::Fixed(c) = shift {
        // a fixed shift applies to both variables
        if c > lo1 && c < hi1 && c > lo2 && c < hi2 && spec.joint_feasible(c, c) {
            return Ok((c, c));
        }
        return Err(Error::IllPosed(format!("contour at Re s = Re t = {c} does not separate the poles")));
    }
    let (a1, b1) = search_interval(lo1, hi1, z1);
    let (a2, b2) = search_interval(lo2, hi2, z2);
    if !spec.joint_feasible(b1, b2) {
        return Err(Error::IllPosed(
            "joint-group poles cannot be separated from the univariate poles".into(),
        ));
    }
    let (l1, l2) = (z1.ln(), z2.ln());
    let objective = |c1: f64, c2: f64| {
        spec.ln_joint_numerator_real(c1, c2)
            + spec.first.ln_numerator_real(c1)
            + spec.second.ln_numerator_real(c2)
            + c1 * l1
            + c2 * l2
    };
    // feasible start between the box centre and its upper corner
    let (mut c1, mut c2) = (0.5 * (a1 + b1), 0.5 * (a2 + b2));
    let mut frac = 0.5;
    while !spec.joint_feasible(c1, c2) {
        c1 = a1 + (b1 - a1) * (1.0 - frac);
        c2 = a2 + (b2 - a2) * (1.0 - frac);
        frac *= 0.5;
        if frac < 1e-12 {
            return Err(Error::IllPosed("no feasible contour pair found".into()));
        }
    }
    // coordinate descent on a convex objective over a convex region
    for _ in 0..40 {
        let (p1, p2) = (c1, c2);
        let lower1 = joint_lower(spec, c2, true).max(a1);
        c1 = golden_min(|x| objective(x, c2), nudge(lower1, b1), b1);
        let lower2 = joint_lower(spec, c1, false).max(a2);
        c2 = golden_min(|y| objective(c1, y), nudge(lower2, b2), b2);
        if (c1 - p1).abs() + (c2 - p2).abs() < 1e-9 * (1.0 + c1.abs() + c2.abs()) {
            break;
        }
    }
    Ok((c1, c2))
}

fn nudge(lower: f64, upper: f64) -> f64 {
    lower + 1e-7 * (upper - lower).abs().max(1e-7)
}

// Smallest value of one contour coordinate allowed by the joint numerator
// poles with the other coordinate held fixed.
fn joint_lower(spec: &FoxHBivariateSpec, other: f64, first: bool) -> f64 {
    spec.joint_a[..spec.n1]
        .iter()
        .map(|&(a, w1, w2)| {
            if first {
                (a - 1.0 - w2 * other) / w1
            } else {
                (a - 1.0 - w1 * other) / w2
            }
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// As [`fox_h_bivariate`] but returns the last refinement even when it has
/// not met the tolerance.
pub fn fox_h_bivariate_unrefined(
    spec: &FoxHBivariateSpec,
    z1: f64,
    z2: f64,
    contour: &ContourConfig,
) -> Result<Evaluation> {
    contour.validate()?;
    spec.validate()?;
    check_argument(z1, "argument z1")?;
    check_argument(z2, "argument z2")?;
    let (j1, j2) = spec.joint_decay();
    let d1 = j1 + spec.first.decay_exponent();
    let d2 = j2 + spec.second.decay_exponent();
    if !(d1 > 0.0) || !(d2 > 0.0) {
        return Err(Error::IllPosed(format!(
            "double contour integral diverges (decay exponents {d1}, {d2})"
        )));
    }
    let (c1, c2) = bivariate_shift(spec, z1, z2, contour.shift)?;
    let (l1, l2) = (z1.ln(), z2.ln());
    let theta1 = |t: f64| {
        let s = Complex64::new(c1, t);
        spec.first.ln_kernel(s) + s * l1
    };
    let theta2 = |t: f64| {
        let s = Complex64::new(c2, t);
        spec.second.ln_kernel(s) + s * l2
    };
    let joint = |t1: f64, t2: f64| spec.ln_joint(Complex64::new(c1, t1), Complex64::new(c2, t2));

    // coarse two-dimensional scan for the extent and the peak
    let h = contour.half_length;
    let step = 0.5;
    let k = (h / step).ceil() as usize;
    let grid: Vec<f64> = (0..=k).map(|i| (i as f64 * step).min(h)).collect();
    let th1: Vec<f64> = grid.iter().map(|&t| theta1(t).re).collect();
    let th2p: Vec<f64> = grid.iter().map(|&t| theta2(t).re).collect();
    let mut peak = f64::NEG_INFINITY;
    let mut samples = Vec::with_capacity(grid.len() * grid.len() * 2);
    for (i, &t1) in grid.iter().enumerate() {
        for (j, &t2) in grid.iter().enumerate() {
            for sign in [1.0, -1.0] {
                if sign < 0.0 && j == 0 {
                    continue;
                }
                let v = th1[i] + th2p[j] + joint(t1, sign * t2).re;
                if v.is_finite() {
                    peak = peak.max(v);
                }
                samples.push((t1, t2, v));
            }
        }
    }
    let mut e1: f64 = 0.0;
    let mut e2: f64 = 0.0;
    let mut tail = f64::NEG_INFINITY;
    for &(t1, t2, v) in &samples {
        if v - peak > TRIM_RATIO_LN {
            e1 = e1.max(t1);
            e2 = e2.max(t2);
        }
    }
    let e1 = (e1 + 4.0 * step).min(h);
    let e2 = (e2 + 4.0 * step).min(h);
    for &(t1, t2, v) in &samples {
        if (t1 - e1).abs() < step || (t2 - e2).abs() < step {
            tail = tail.max(v);
        }
    }
    let tail = if tail.is_finite() {
        (tail - peak).exp() * 2.0 * e1 * 2.0 * e2 / (4.0 * PI * PI)
    } else {
        0.0
    };

    let integrate = |n: usize| -> (f64, f64) {
        let (x1, w1) = nodes_on(contour.rule, n, 0.0, e1);
        // split at zero so that Gauss nodes cluster around the peak
        let (mut x2, mut w2) = nodes_on(contour.rule, n / 2, -e2, 0.0);
        let (xr, wr) = nodes_on(contour.rule, n / 2, 0.0, e2);
        x2.extend(xr);
        w2.extend(wr);
        let a: Vec<Complex64> = x1.iter().map(|&t| theta1(t)).collect();
        let b: Vec<Complex64> = x2.iter().map(|&t| theta2(t)).collect();
        let mut sum = 0.0;
        let mut abs = 0.0;
        for (i, &t1) in x1.iter().enumerate() {
            let mut row = 0.0;
            let mut row_abs = 0.0;
            for (j, &t2) in x2.iter().enumerate() {
                let v = (a[i] + b[j] + joint(t1, t2) - peak).exp().re;
                if v.is_finite() {
                    row += w2[j] * v;
                    row_abs += (w2[j] * v).abs();
                }
            }
            sum += w1[i] * row;
            abs += w1[i] * row_abs;
        }
        let norm = 2.0 * PI * PI;
        (sum / norm, abs / norm)
    };

    let mut n = contour.node_count;
    let mut coarse = integrate(n / 2).0;
    loop {
        let (fine, abs) = integrate(n);
        let estimate = (fine - coarse).abs() + tail;
        let floor = 64.0 * f64::EPSILON * abs;
        let ok = estimate <= (contour.tolerance * fine.abs()).max(floor);
        if ok || 2 * n > contour.max_node_count {
            return Ok(Evaluation {
                mantissa: fine,
                ln_scale: peak,
                estimate,
                roundoff_floor: floor,
                nodes: n,
                shift: (c1, c2),
                converged: ok,
            });
        }
        coarse = fine;
        n *= 2;
    }
}
