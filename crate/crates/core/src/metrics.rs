//! Reliability metrics of one hop and of the two-hop decode-and-forward relay:
//! symbol error, ergodic capacity and its approximations, blockage mixing,
//! end-to-end outage, outage capacity and diversity/coding gains.
//!
//! Closed forms built from Meijer-G and Fox-H kernels each have a direct
//! quadrature counterpart over the SINR CDF or density; when the contour
//! error estimate of a closed form is too large the quadrature result is
//! returned with `degraded` set.

use crate::error::{invalid, Error, Result};
use crate::link::{los_probability, BlockageModel};
use crate::montecarlo::block_rng;
use crate::quadrature::{integrate_positive_scales, Tolerance};
use crate::sinr::{ln_interference_moment_sum, HopParams, Mode, SinrDistribution};
use crate::special::{
    fox_h_bivariate, gaussian_q, ln_binomial, ln_gamma, meijer_g, ContourConfig, Evaluation,
    FoxHBivariateSpec, FoxHSpec, MeijerGSpec,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::{LN_2, LOG2_E, PI};
use std::fmt;
use std::str::FromStr;

/// Largest relative contour error accepted from the symbol-error closed forms.
pub const SER_CLOSED_FORM_TOLERANCE: f64 = 1e-6;
/// Largest relative contour error accepted from the capacity closed form.
pub const CAPACITY_CLOSED_FORM_TOLERANCE: f64 = 1e-4;
/// Largest number of distinct bivariate kernels the end-to-end symbol-error
/// closed form may evaluate before deferring to quadrature.
pub const E2E_KERNEL_BUDGET: usize = 600;

const QUADRATURE_TOLERANCE: Tolerance = Tolerance { abs: 0.0, rel: 1e-10, max_segments: 6000 };

/// Modulation with conditional symbol error `alpha Q(sqrt(beta snr))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ModulationScheme {
    Bpsk,
    Qpsk,
    /// Square M-QAM.
    Qam(u32),
}

impl ModulationScheme {
    pub fn alpha(&self) -> f64 {
        match *self {
            Self::Bpsk => 1.0,
            Self::Qpsk => 2.0,
            Self::Qam(m) => 4.0 * (1.0 - 1.0 / (m as f64).sqrt()),
        }
    }

    pub fn beta(&self) -> f64 {
        match *self {
            Self::Bpsk => 2.0,
            Self::Qpsk => 1.0,
            Self::Qam(m) => 3.0 / (m as f64 - 1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Self::Qam(m) = *self {
            let r = (m as f64).sqrt().round() as u32;
            if m < 4 || r * r != m {
                return Err(invalid(format!("QAM order must be a square of at least 4, got {m}")));
            }
        }
        Ok(())
    }

    pub fn conditional_error(&self, snr: f64) -> f64 {
        self.alpha() * gaussian_q((self.beta() * snr.max(0.0)).sqrt())
    }
}

impl fmt::Display for ModulationScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Bpsk => write!(f, "bpsk"),
            Self::Qpsk => write!(f, "qpsk"),
            Self::Qam(m) => write!(f, "{m}qam"),
        }
    }
}

impl FromStr for ModulationScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase().replace(['-', '_'], "");
        let scheme = match t.as_str() {
            "bpsk" => Self::Bpsk,
            "qpsk" => Self::Qpsk,
            _ => {
                let digits = t
                    .strip_suffix("qam")
                    .or_else(|| t.strip_prefix("qam"))
                    .ok_or_else(|| invalid(format!("unknown modulation '{s}'")))?;
                Self::Qam(digits.parse().map_err(|_| invalid(format!("unknown modulation '{s}'")))?)
            }
        };
        scheme.validate()?;
        Ok(scheme)
    }
}

impl TryFrom<String> for ModulationScheme {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ModulationScheme> for String {
    fn from(m: ModulationScheme) -> String {
        m.to_string()
    }
}

/// A metric value with its relative error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub value: f64,
    /// Relative error estimate.
    pub estimate: f64,
    /// Set when the closed form was replaced by its quadrature fallback.
    pub degraded: bool,
}

fn check_bandwidth(b: f64) -> Result<()> {
    if !(b > 0.0) || !b.is_finite() {
        return Err(invalid(format!("bandwidth must be positive, got {b}")));
    }
    Ok(())
}

fn ln_c0(modulation: &ModulationScheme) -> f64 {
    // alpha sqrt(beta) / (2 sqrt(2 pi))
    modulation.alpha().ln() + 0.5 * modulation.beta().ln() - (2.0 * (2.0 * PI).sqrt()).ln()
}

fn positive(e: &Evaluation) -> Result<f64> {
    if !(e.mantissa > 0.0) {
        return Err(Error::NonConvergence { value: e.value(), estimate: e.relative_estimate(), nodes: e.nodes });
    }
    Ok(e.ln_abs())
}

/// Typical SINR scale of a hop, used to place quadrature breakpoints.
fn typical_sinr(p: &HopParams) -> f64 {
    let interference = if p.has_interference() { p.interference_snr } else { 0.0 };
    (1.0 - p.rho) * p.snr / (1.0 + interference)
}

/// Per-hop symbol error: closed form, or quadrature when the closed form
/// cannot be trusted.
pub fn hop_symbol_error(dist: &SinrDistribution, modulation: &ModulationScheme) -> Result<MetricValue> {
    modulation.validate()?;
    match hop_symbol_error_closed(dist, modulation) {
        Ok(v) if v.estimate <= SER_CLOSED_FORM_TOLERANCE => Ok(v),
        _ => hop_symbol_error_quadrature(dist, modulation).map(|v| MetricValue { degraded: true, ..v }),
    }
}

/// Terms `c0 C(n,p)/n! lambda^n mu^-p / Gamma(K) w^-(n+1/2) G(z)` of the
/// symbol-error series, `w = beta/2 + lambda`, `z = lambda / (mu w)`. Summed
/// over all `n` they give `alpha/2`.
struct SerSeries {
    ln_c0: f64,
    lam: f64,
    w: f64,
    interference: Option<(f64, f64)>,
    cfg: ContourConfig,
}

impl SerSeries {
    fn new(dist: &SinrDistribution, modulation: &ModulationScheme) -> Self {
        let p = dist.params();
        let lam = p.signal_rate();
        Self {
            ln_c0: ln_c0(modulation),
            lam,
            w: 0.5 * modulation.beta() + lam,
            interference: p.has_interference().then(|| (p.interference_shape(), p.interference_rate())),
            cfg: ContourConfig::default(),
        }
    }

    /// Sum over `p` of the terms with signal index `n`, with its absolute
    /// error.
    fn block(&self, n: u32) -> Result<(f64, f64)> {
        let nf = n as f64;
        let lead = self.ln_c0 + nf * self.lam.ln() - ln_gamma(nf + 1.0) - (nf + 0.5) * self.w.ln();
        let Some((k, mu)) = self.interference else {
            let t = (lead + ln_gamma(nf + 0.5)).exp();
            return Ok((t, 4.0 * f64::EPSILON * t));
        };
        let z = self.lam / mu / self.w;
        let terms: Vec<Result<(f64, f64)>> = (0..=n)
            .into_par_iter()
            .map(|q| {
                let qf = q as f64;
                let spec = MeijerGSpec::new(1, 2, vec![0.5 - nf, 1.0 - k - qf], vec![0.0])?;
                let g = meijer_g(&spec, z, &self.cfg)?;
                let ln = lead + ln_binomial(nf, qf) - qf * mu.ln() - ln_gamma(k) + positive(&g)?;
                Ok((ln.exp(), g.relative_estimate()))
            })
            .collect();
        let mut sum = 0.0;
        let mut err = 0.0;
        for t in terms {
            let (v, r) = t?;
            sum += v;
            err += v * r.max(4.0 * f64::EPSILON);
        }
        Ok((sum, err))
    }
}

/// Longest tail the complementary series may run before giving up.
const SER_TAIL_BLOCKS: u32 = 400;

/// Closed-form per-hop symbol error. The finite form
/// `alpha/2 - sum_{n<Nm} ...` loses accuracy to cancellation at high SNR,
/// where the equivalent complementary series `sum_{n>=Nm} ...` of positive
/// terms is used instead.
pub fn hop_symbol_error_closed(dist: &SinrDistribution, modulation: &ModulationScheme) -> Result<MetricValue> {
    modulation.validate()?;
    let series = SerSeries::new(dist, modulation);
    let direct = ser_finite(dist, modulation, &series);
    if let Ok(v) = &direct {
        if v.estimate <= SER_CLOSED_FORM_TOLERANCE {
            return direct;
        }
    }
    match (ser_tail(dist, &series), direct) {
        (Ok(t), Ok(d)) => Ok(if d.estimate < t.estimate { d } else { t }),
        (Ok(t), Err(_)) => Ok(t),
        (Err(_), Ok(d)) => Ok(d),
        (Err(e), Err(_)) => Err(e),
    }
}

fn ser_finite(dist: &SinrDistribution, modulation: &ModulationScheme, series: &SerSeries) -> Result<MetricValue> {
    let mut sum = 0.0;
    let mut err = 0.0;
    for n in 0..dist.nm() {
        let (v, e) = series.block(n)?;
        sum += v;
        err += e;
    }
    let head = 0.5 * modulation.alpha();
    let value = head - sum;
    let abs_err = err + 8.0 * f64::EPSILON * head;
    if !(value > 0.0) {
        return Err(Error::NonConvergence { value, estimate: abs_err, nodes: 0 });
    }
    Ok(MetricValue { value: dist.mass() * value, estimate: abs_err / value, degraded: false })
}

fn ser_tail(dist: &SinrDistribution, series: &SerSeries) -> Result<MetricValue> {
    let mut total = 0.0;
    let mut err = 0.0;
    let mut prev = f64::INFINITY;
    for n in dist.nm()..dist.nm() + SER_TAIL_BLOCKS {
        let (b, e) = series.block(n)?;
        total += b;
        err += e;
        if b <= 1e-15 * total && b < prev {
            let ratio = b / prev;
            err += b * ratio / (1.0 - ratio);
            return Ok(MetricValue { value: dist.mass() * total, estimate: err / total, degraded: false });
        }
        prev = b;
    }
    Err(Error::NonConvergence { value: dist.mass() * total, estimate: f64::INFINITY, nodes: 0 })
}

/// `c0 int x^{-1/2} e^{-beta x / 2} F(x) dx`, integrated in `u = sqrt(x)`.
fn symbol_error_integral<F: Fn(f64) -> f64>(
    cdf: F,
    modulation: &ModulationScheme,
    x_scales: &[f64],
) -> Result<MetricValue> {
    let beta = modulation.beta();
    let mut scales: Vec<f64> = x_scales.iter().map(|s| s.sqrt()).collect();
    scales.push((2.0 / beta).sqrt());
    let r = integrate_positive_scales(|u| (-0.5 * beta * u * u).exp() * cdf(u * u), &scales, QUADRATURE_TOLERANCE)?;
    let value = 2.0 * ln_c0(modulation).exp() * r.value;
    Ok(MetricValue { value, estimate: r.error / r.value.abs().max(f64::MIN_POSITIVE), degraded: false })
}

/// Per-hop symbol error by quadrature over the SINR CDF.
pub fn hop_symbol_error_quadrature(dist: &SinrDistribution, modulation: &ModulationScheme) -> Result<MetricValue> {
    modulation.validate()?;
    let p = dist.params();
    let scales = [typical_sinr(p), 2.0 * p.shape() / modulation.beta()];
    symbol_error_integral(|x| dist.cdf(x), modulation, &scales)
}

/// High-SNR symbol-error asymptote,
/// `alpha Gamma(Nm+1/2) / (2 sqrt(pi) Nm!) (2Nm/(beta snr))^Nm E[(1+Y)^Nm]`.
/// It describes the published-mode error probability and does not depend on
/// rho; divide by `(1-rho)^Nm` for the renormalized one.
pub fn hop_error_asymptote(params: &HopParams, modulation: &ModulationScheme) -> Result<f64> {
    params.validate()?;
    modulation.validate()?;
    let nm = params.integer_shape()? as f64;
    let ln = modulation.alpha().ln() + ln_gamma(nm + 0.5) - (2.0 * PI.sqrt()).ln() - ln_gamma(nm + 1.0)
        + nm * (2.0 * nm / (modulation.beta() * params.snr)).ln()
        + ln_interference_moment_sum(params, nm);
    Ok(ln.exp())
}

/// Coding gain G_c with `asymptote = (G_c snr)^{-Nm}`.
pub fn coding_gain(params: &HopParams, modulation: &ModulationScheme) -> Result<f64> {
    params.validate()?;
    modulation.validate()?;
    let nm = params.integer_shape()? as f64;
    let ln = (modulation.beta() / (2.0 * nm)).ln()
        + ((2.0 * PI.sqrt()).ln() + ln_gamma(nm + 1.0)
            - modulation.alpha().ln()
            - ln_gamma(nm + 0.5)
            - ln_interference_moment_sum(params, nm))
            / nm;
    Ok(ln.exp())
}

/// Ergodic capacity in bits/s.
pub fn hop_capacity(dist: &SinrDistribution, bandwidth: f64) -> Result<MetricValue> {
    check_bandwidth(bandwidth)?;
    match hop_capacity_closed(dist, bandwidth) {
        Ok(v) if v.estimate <= CAPACITY_CLOSED_FORM_TOLERANCE => Ok(v),
        _ => hop_capacity_quadrature(dist, bandwidth).map(|v| MetricValue { degraded: true, ..v }),
    }
}

fn log_kernel() -> FoxHSpec {
    FoxHSpec {
        m: 1,
        n: 2,
        a: vec![(1.0, 1.0), (1.0, 1.0)],
        b: vec![(1.0, 1.0), (0.0, 1.0)],
    }
}

fn binomial_kernel(shape: f64) -> FoxHSpec {
    FoxHSpec { m: 1, n: 1, a: vec![(1.0 - shape, 1.0)], b: vec![(0.0, 1.0)] }
}

/// Capacity as a sum of bivariate Fox-H functions, one per binomial term of
/// the interference moment; without interference a single G^{1,3}_{3,2}.
pub fn hop_capacity_closed(dist: &SinrDistribution, bandwidth: f64) -> Result<MetricValue> {
    check_bandwidth(bandwidth)?;
    let p = dist.params();
    let nm = dist.nm() as f64;
    let theta = 1.0 / p.signal_rate();
    let cfg = ContourConfig::default();
    let scale = bandwidth * LOG2_E * dist.mass();
    if !p.has_interference() {
        let spec = MeijerGSpec::new(1, 3, vec![1.0 - nm, 1.0, 1.0], vec![1.0, 0.0])?;
        let g = meijer_g(&spec, theta, &cfg)?;
        let ln = positive(&g)? - ln_gamma(nm);
        return Ok(MetricValue { value: scale * ln.exp(), estimate: g.relative_estimate(), degraded: false });
    }
    let k = p.interference_shape();
    let z1 = p.interference_snr / k;
    let terms: Vec<Result<(f64, f64)>> = (0..=dist.nm())
        .into_par_iter()
        .map(|q| {
            let qf = q as f64;
            let spec = FoxHBivariateSpec::new(1, vec![(1.0 - nm, 1.0, 1.0)], vec![], binomial_kernel(k + qf), log_kernel())?;
            let h = fox_h_bivariate(&spec, z1, theta, &cfg)?;
            let ln = ln_binomial(nm, qf) + qf * z1.ln() + h.ln_abs() - ln_gamma(nm) - ln_gamma(k);
            Ok((h.mantissa.signum() * ln.exp(), h.relative_estimate()))
        })
        .collect();
    let mut sum = 0.0;
    let mut err = 0.0;
    for t in terms {
        let (v, r) = t?;
        sum += v;
        err += v.abs() * r;
    }
    if !(sum > 0.0) {
        return Err(Error::NonConvergence { value: sum, estimate: err, nodes: 0 });
    }
    Ok(MetricValue { value: scale * sum, estimate: err / sum, degraded: false })
}

/// Capacity by quadrature of `log2(1+x)` against the SINR density.
pub fn hop_capacity_quadrature(dist: &SinrDistribution, bandwidth: f64) -> Result<MetricValue> {
    check_bandwidth(bandwidth)?;
    let p = dist.params();
    let scales = [typical_sinr(p), (1.0 - p.rho) * p.snr, 1.0];
    let r = integrate_positive_scales(|x| x.ln_1p() * dist.pdf(x), &scales, QUADRATURE_TOLERANCE)?;
    Ok(MetricValue {
        value: bandwidth * LOG2_E * r.value,
        estimate: r.error / r.value.abs().max(f64::MIN_POSITIVE),
        degraded: false,
    })
}

/// Low-power approximation `B log2(e) E[γ]`.
pub fn capacity_low_power(dist: &SinrDistribution, bandwidth: f64) -> Result<f64> {
    check_bandwidth(bandwidth)?;
    Ok(bandwidth * LOG2_E * dist.mean()?)
}

/// High-power approximation `B log2(e) E[ln γ]` by quadrature.
pub fn capacity_high_power(dist: &SinrDistribution, bandwidth: f64) -> Result<f64> {
    check_bandwidth(bandwidth)?;
    let p = dist.params();
    let scales = [typical_sinr(p), (1.0 - p.rho) * p.snr, 1.0];
    let tol = Tolerance { abs: 1e-13, ..QUADRATURE_TOLERANCE };
    let r = integrate_positive_scales(|x| x.ln() * dist.pdf(x), &scales, tol)?;
    Ok(bandwidth * LOG2_E * r.value)
}

/// Upper bound `B log2(1 + E[γ])`.
pub fn capacity_jensen_bound(dist: &SinrDistribution, bandwidth: f64) -> Result<f64> {
    check_bandwidth(bandwidth)?;
    Ok(bandwidth * dist.mean()?.ln_1p() / LN_2)
}

/// LOS and NLOS parameter sets of a hop with the LOS probability mixing them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopChannel {
    pub los: HopParams,
    pub nlos: HopParams,
    pub p_los: f64,
}

impl HopChannel {
    /// A hop that is always in one state.
    pub fn fixed(params: HopParams) -> Self {
        Self { los: params, nlos: params, p_los: 1.0 }
    }

    pub fn with_blockage(los: HopParams, nlos: HopParams, model: &BlockageModel, distance: f64) -> Result<Self> {
        model.validate()?;
        let h = Self { los, nlos, p_los: los_probability(model, distance) };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_los) {
            return Err(invalid(format!("LOS probability must lie in [0, 1], got {}", self.p_los)));
        }
        self.los.validate()?;
        self.nlos.validate()
    }

    /// States with positive probability as (weight, params).
    pub fn states(&self) -> Vec<(f64, HopParams)> {
        [(self.p_los, self.los), (1.0 - self.p_los, self.nlos)]
            .into_iter()
            .filter(|(w, _)| *w > 0.0)
            .collect()
    }

    /// The more likely state.
    pub fn dominant_params(&self) -> HopParams {
        if self.p_los >= 0.5 {
            self.los
        } else {
            self.nlos
        }
    }

    fn with_state(&self, los: bool) -> Self {
        Self { p_los: if los { 1.0 } else { 0.0 }, ..*self }
    }
}

/// Two-hop decode-and-forward relay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelaySystem {
    pub hops: [HopChannel; 2],
    /// Hz
    pub bandwidth: f64,
    pub mode: Mode,
}

/// Distributions of the states of one hop with their weights.
struct MixedHop {
    states: Vec<(f64, SinrDistribution)>,
}

impl MixedHop {
    fn new(h: &HopChannel, mode: Mode) -> Result<Self> {
        h.validate()?;
        let states = h
            .states()
            .into_iter()
            .map(|(w, p)| Ok((w, SinrDistribution::new(p, mode)?)))
            .collect::<Result<_>>()?;
        Ok(Self { states })
    }

    fn cdf(&self, x: f64) -> f64 {
        self.states.iter().map(|(w, d)| w * d.cdf(x)).sum()
    }

    fn mass(&self) -> f64 {
        self.states.iter().map(|(w, d)| w * d.mass()).sum()
    }

    fn scales(&self, modulation: &ModulationScheme) -> Vec<f64> {
        self.states
            .iter()
            .flat_map(|(_, d)| [typical_sinr(d.params()), 2.0 * d.params().shape() / modulation.beta()])
            .collect()
    }
}

impl RelaySystem {
    pub fn new(hop1: HopChannel, hop2: HopChannel, bandwidth: f64, mode: Mode) -> Result<Self> {
        let s = Self { hops: [hop1, hop2], bandwidth, mode };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        check_bandwidth(self.bandwidth)?;
        for h in &self.hops {
            h.validate()?;
        }
        Ok(())
    }

    /// Hop by its 1-based index.
    pub fn hop(&self, index: usize) -> Result<&HopChannel> {
        match index {
            1 | 2 => Ok(&self.hops[index - 1]),
            _ => Err(invalid(format!("hop index must be 1 or 2, got {index}"))),
        }
    }

    /// Limit of the end-to-end outage as the threshold grows.
    pub fn outage_ceiling(&self) -> f64 {
        let m: Vec<f64> = self
            .hops
            .iter()
            .map(|h| MixedHop::new(h, self.mode).map(|m| m.mass()).unwrap_or(f64::NAN))
            .collect();
        1.0 - (1.0 - m[0]) * (1.0 - m[1])
    }

    /// The same system with both hops pinned to LOS (`true`) or NLOS.
    pub fn with_states(&self, los: [bool; 2]) -> Self {
        Self { hops: [self.hops[0].with_state(los[0]), self.hops[1].with_state(los[1])], ..*self }
    }

    fn mixed(&self) -> Result<[MixedHop; 2]> {
        self.validate()?;
        Ok([MixedHop::new(&self.hops[0], self.mode)?, MixedHop::new(&self.hops[1], self.mode)?])
    }
}

/// `P_los F_los(x) + (1 - P_los) F_nlos(x)` for hop 1 or 2.
pub fn mixed_los_cdf(system: &RelaySystem, hop: usize, x: f64) -> Result<f64> {
    let h = system.hop(hop)?;
    Ok(MixedHop::new(h, system.mode)?.cdf(x))
}

/// `F1 + F2 - F1 F2`, the probability that the weaker hop is below `x`.
pub fn e2e_outage(system: &RelaySystem, x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(invalid(format!("outage threshold must be non-negative, got {x}")));
    }
    let [h1, h2] = system.mixed()?;
    let (f1, f2) = (h1.cdf(x), h2.cdf(x));
    Ok(f1 + f2 - f1 * f2)
}

/// End-to-end symbol error: closed form per LOS/NLOS state pair, or
/// quadrature over the end-to-end CDF when the closed form cannot be trusted.
pub fn e2e_symbol_error(system: &RelaySystem, modulation: &ModulationScheme) -> Result<MetricValue> {
    match e2e_symbol_error_closed(system, modulation) {
        Ok(v) if v.estimate <= CAPACITY_CLOSED_FORM_TOLERANCE => Ok(v),
        _ => e2e_symbol_error_quadrature(system, modulation).map(|v| MetricValue { degraded: true, ..v }),
    }
}

/// End-to-end symbol error by quadrature over `F1 + F2 - F1 F2`.
pub fn e2e_symbol_error_quadrature(system: &RelaySystem, modulation: &ModulationScheme) -> Result<MetricValue> {
    modulation.validate()?;
    let [h1, h2] = system.mixed()?;
    let mut scales = h1.scales(modulation);
    scales.extend(h2.scales(modulation));
    symbol_error_integral(
        |x| {
            let (f1, f2) = (h1.cdf(x), h2.cdf(x));
            f1 + f2 - f1 * f2
        },
        modulation,
        &scales,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Combination {
    Corrected,
    AsPrinted,
}

/// Closed-form end-to-end symbol error,
/// `(1-q2) P1 + (1-q1) P2 + q1 q2 (alpha/2 - J)`, where `q_i` are the hop
/// masses and `J` is a finite sum of bivariate Fox-H kernels with arguments
/// `(lambda_i / mu_i) / Lambda` and `Lambda = beta/2 + lambda_1 + lambda_2`.
pub fn e2e_symbol_error_closed(system: &RelaySystem, modulation: &ModulationScheme) -> Result<MetricValue> {
    mixed_pairs(system, modulation, Combination::Corrected)
}

/// The uncorrected end-to-end closed form, with the published sign on `J` and
/// the published joint rate [`printed_lambda`]. Kept for deviation reports.
pub fn e2e_symbol_error_printed(system: &RelaySystem, modulation: &ModulationScheme) -> Result<f64> {
    mixed_pairs(system, modulation, Combination::AsPrinted).map(|v| v.value)
}

fn interference_ratio(p: &HopParams) -> f64 {
    if p.has_interference() {
        p.signal_rate() / p.interference_rate()
    } else {
        0.0
    }
}

/// Uncorrected published joint rate: `beta/2 + c1 + c2` with `c_i = lambda_i / mu_i`.
/// It reduces to `beta/2` when neither hop sees interference.
pub fn printed_lambda(hop1: &HopParams, hop2: &HopParams, modulation: &ModulationScheme) -> f64 {
    0.5 * modulation.beta() + interference_ratio(hop1) + interference_ratio(hop2)
}

/// Joint rate of the end-to-end kernels: `beta/2 + lambda_1 + lambda_2`.
pub fn joint_rate(hop1: &HopParams, hop2: &HopParams, modulation: &ModulationScheme) -> f64 {
    0.5 * modulation.beta() + hop1.signal_rate() + hop2.signal_rate()
}

fn mixed_pairs(system: &RelaySystem, modulation: &ModulationScheme, combo: Combination) -> Result<MetricValue> {
    modulation.validate()?;
    let [h1, h2] = system.mixed()?;
    let mut value = 0.0;
    let mut err = 0.0;
    for (w1, d1) in &h1.states {
        for (w2, d2) in &h2.states {
            let v = pair_symbol_error(d1, d2, modulation, combo)?;
            value += w1 * w2 * v.value;
            err += w1 * w2 * v.value.abs() * v.estimate;
        }
    }
    Ok(MetricValue { value, estimate: err / value.abs().max(f64::MIN_POSITIVE), degraded: false })
}

type KernelKey = (u32, u32, u32);

fn pair_symbol_error(
    d1: &SinrDistribution,
    d2: &SinrDistribution,
    modulation: &ModulationScheme,
    combo: Combination,
) -> Result<MetricValue> {
    let p1 = hop_symbol_error_closed(d1, modulation)?;
    let p2 = hop_symbol_error_closed(d2, modulation)?;
    let (a, b) = (d1.params(), d2.params());
    let rate = match combo {
        Combination::Corrected => joint_rate(a, b, modulation),
        Combination::AsPrinted => printed_lambda(a, b, modulation),
    };
    let (i1, i2) = (a.has_interference(), b.has_interference());
    let pmax = |i: bool, n: u32| if i { n } else { 0 };

    let mut keys: Vec<KernelKey> = Vec::new();
    for n1 in 0..d1.nm() {
        for n2 in 0..d2.nm() {
            for q1 in 0..=pmax(i1, n1) {
                for q2 in 0..=pmax(i2, n2) {
                    keys.push((n1 + n2, q1, q2));
                }
            }
        }
    }
    keys.sort_unstable();
    keys.dedup();
    if keys.len() > E2E_KERNEL_BUDGET {
        return Err(Error::Overflow(format!(
            "{} end-to-end kernels exceed the budget of {E2E_KERNEL_BUDGET}",
            keys.len()
        )));
    }
    let (k1, k2) = (a.interference_shape(), b.interference_shape());
    let (z1, z2) = (interference_ratio(a) / rate, interference_ratio(b) / rate);
    let cfg = ContourConfig::default();
    let kernels: Vec<Result<(f64, f64, f64)>> = keys
        .par_iter()
        .map(|&(n, q1, q2)| {
            let c = 0.5 - n as f64;
            let e = match (i1, i2) {
                (true, true) => {
                    let spec = FoxHBivariateSpec::new(
                        1,
                        vec![(c, 1.0, 1.0)],
                        vec![],
                        binomial_kernel(k1 + q1 as f64),
                        binomial_kernel(k2 + q2 as f64),
                    )?;
                    fox_h_bivariate(&spec, z1, z2, &cfg)?
                }
                (true, false) | (false, true) => {
                    let (k, q, z) = if i1 { (k1, q1, z1) } else { (k2, q2, z2) };
                    let spec = MeijerGSpec::new(1, 2, vec![c, 1.0 - k - q as f64], vec![0.0])?;
                    meijer_g(&spec, z, &cfg)?
                }
                (false, false) => {
                    return Ok((1.0, ln_gamma(n as f64 + 0.5), 4.0 * f64::EPSILON));
                }
            };
            Ok((e.mantissa.signum(), e.ln_abs(), e.relative_estimate()))
        })
        .collect();
    let mut table: HashMap<KernelKey, (f64, f64, f64)> = HashMap::with_capacity(keys.len());
    for (key, k) in keys.iter().zip(kernels) {
        table.insert(*key, k?);
    }

    let (l1, l2) = (a.signal_rate(), b.signal_rate());
    let ln_mu = |p: &HopParams, i: bool| if i { p.interference_rate().ln() } else { 0.0 };
    let (lm1, lm2) = (ln_mu(a, i1), ln_mu(b, i2));
    let lg1 = if i1 { ln_gamma(k1) } else { 0.0 };
    let lg2 = if i2 { ln_gamma(k2) } else { 0.0 };
    let ln_c0 = ln_c0(modulation);
    let mut j = 0.0;
    let mut j_err = 0.0;
    for n1 in 0..d1.nm() {
        for n2 in 0..d2.nm() {
            let (f1, f2) = (n1 as f64, n2 as f64);
            let base = ln_c0 + f1 * l1.ln() + f2 * l2.ln() - ln_gamma(f1 + 1.0) - ln_gamma(f2 + 1.0)
                - lg1
                - lg2
                - (f1 + f2 + 0.5) * rate.ln();
            for q1 in 0..=pmax(i1, n1) {
                for q2 in 0..=pmax(i2, n2) {
                    let (sign, ln_k, rel) = table[&(n1 + n2, q1, q2)];
                    let ln = base + ln_binomial(f1, q1 as f64) + ln_binomial(f2, q2 as f64)
                        - q1 as f64 * lm1
                        - q2 as f64 * lm2
                        + ln_k;
                    let t = sign * ln.exp();
                    j += t;
                    j_err += t.abs() * rel.max(4.0 * f64::EPSILON);
                }
            }
        }
    }
    let (q1, q2) = (d1.mass(), d2.mass());
    let head = 0.5 * modulation.alpha();
    let tail = match combo {
        Combination::Corrected => head - j,
        Combination::AsPrinted => head + j,
    };
    let value = (1.0 - q2) * p1.value + (1.0 - q1) * p2.value + q1 * q2 * tail;
    let abs_err = (1.0 - q2) * p1.value * p1.estimate
        + (1.0 - q1) * p2.value * p2.estimate
        + q1 * q2 * (j_err + 8.0 * f64::EPSILON * head);
    if combo == Combination::Corrected && !(value > 0.0) {
        return Err(Error::NonConvergence { value, estimate: abs_err, nodes: 0 });
    }
    Ok(MetricValue { value, estimate: abs_err / value.abs().max(f64::MIN_POSITIVE), degraded: false })
}

/// Capacity of the weaker hop, each hop averaged over its LOS/NLOS states.
pub fn e2e_capacity(system: &RelaySystem) -> Result<MetricValue> {
    let [h1, h2] = system.mixed()?;
    let hop = |h: &MixedHop| -> Result<MetricValue> {
        let mut v = MetricValue { value: 0.0, estimate: 0.0, degraded: false };
        for (w, d) in &h.states {
            let c = hop_capacity(d, system.bandwidth)?;
            v.value += w * c.value;
            v.estimate = v.estimate.max(c.estimate);
            v.degraded |= c.degraded;
        }
        Ok(v)
    };
    let (c1, c2) = (hop(&h1)?, hop(&h2)?);
    Ok(if c1.value <= c2.value { c1 } else { c2 })
}

/// Target outage fraction of an outage-capacity query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutageCapacityQuery {
    pub epsilon: f64,
}

impl OutageCapacityQuery {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(invalid(format!("outage fraction must lie in (0, 1), got {epsilon}")));
        }
        Ok(Self { epsilon })
    }
}

/// Smallest SINR `x` with `P(min(γ1, γ2) < x) = epsilon`, by bisection.
pub fn e2e_quantile(system: &RelaySystem, epsilon: f64) -> Result<f64> {
    OutageCapacityQuery::new(epsilon)?;
    let [h1, h2] = system.mixed()?;
    let cdf = |x: f64| {
        let (f1, f2) = (h1.cdf(x), h2.cdf(x));
        f1 + f2 - f1 * f2
    };
    let ceiling = 1.0 - (1.0 - h1.mass()) * (1.0 - h2.mass());
    if ceiling <= epsilon {
        return Err(Error::QuantileUnreachable { target: epsilon, ceiling });
    }
    let mut hi = 1.0;
    while cdf(hi) < epsilon {
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::QuantileUnreachable { target: epsilon, ceiling });
        }
    }
    let mut lo = 0.5 * hi;
    while cdf(lo) >= epsilon {
        lo *= 0.5;
        if lo < 1e-300 {
            return Ok(0.0);
        }
    }
    hi = 2.0 * lo;
    while hi - lo > 1e-10 * hi {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < epsilon {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Throughput `(1 - eps) B log2(1 + γ_eps)` averaged over `blocks` block
/// realizations, each drawing the LOS/NLOS state of both hops.
pub fn outage_capacity(system: &RelaySystem, query: &OutageCapacityQuery, blocks: usize, seed: u64) -> Result<f64> {
    OutageCapacityQuery::new(query.epsilon)?;
    system.validate()?;
    let mut cache: HashMap<[bool; 2], f64> = HashMap::new();
    block_fading_average(
        |rng| {
            let states = [rng.random::<f64>() < system.hops[0].p_los, rng.random::<f64>() < system.hops[1].p_los];
            let gamma = match cache.get(&states) {
                Some(&g) => g,
                None => {
                    let g = e2e_quantile(&system.with_states(states), query.epsilon)?;
                    cache.insert(states, g);
                    g
                }
            };
            Ok((1.0 - query.epsilon) * system.bandwidth * gamma.ln_1p() / LN_2)
        },
        blocks,
        seed,
    )
}

/// Arithmetic mean of `metric` over `blocks` block realizations; block `k`
/// draws from its own generator derived from `(seed, k)`.
pub fn block_fading_average<F>(mut metric: F, blocks: usize, seed: u64) -> Result<f64>
where
    F: FnMut(&mut ChaCha8Rng) -> Result<f64>,
{
    if blocks == 0 {
        return Err(invalid("block count must be at least 1"));
    }
    let mut sum = 0.0;
    for k in 0..blocks {
        sum += metric(&mut block_rng(seed, k as u64))?;
    }
    Ok(sum / blocks as f64)
}

/// Diversity order and coding gain of the high-SNR error asymptote
/// `(G_c snr)^{-G_d}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemGains {
    pub diversity: f64,
    pub coding: f64,
}

/// Combine two error sources: the lower diversity order wins; equal orders
/// add their asymptotes.
pub fn combine_gains(a: SystemGains, b: SystemGains) -> SystemGains {
    if a.diversity < b.diversity {
        a
    } else if b.diversity < a.diversity {
        b
    } else {
        let d = a.diversity;
        let coding = (a.coding.powf(-d) + b.coding.powf(-d)).powf(-1.0 / d);
        SystemGains { diversity: d, coding }
    }
}

/// Gains of one hop; LOS/NLOS states enter with their probabilities.
pub fn hop_gains(channel: &HopChannel, modulation: &ModulationScheme) -> Result<SystemGains> {
    channel.validate()?;
    let mut out: Option<SystemGains> = None;
    for (w, p) in channel.states() {
        let d = p.integer_shape()? as f64;
        let coding = coding_gain(&p, modulation)? * w.powf(-1.0 / d);
        let g = SystemGains { diversity: d, coding };
        out = Some(match out {
            None => g,
            Some(prev) => combine_gains(prev, g),
        });
    }
    out.ok_or_else(|| invalid("hop has no state with positive probability"))
}

pub fn system_gains(system: &RelaySystem, modulation: &ModulationScheme) -> Result<SystemGains> {
    Ok(combine_gains(hop_gains(&system.hops[0], modulation)?, hop_gains(&system.hops[1], modulation)?))
}
