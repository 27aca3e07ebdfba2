//! Per-hop SINR statistics under outdated CSI and Nakagami interference.
//!
//! The effective SINR of a hop is `X / (1 + Y)` where the outdated signal
//! SNR `X` is Gamma with shape `Nm` and rate `lambda = Nm / ((1-rho) snr)`
//! and the aggregate interference `Y` is Gamma with shape `K = M_r m_r` and
//! rate `mu = K / snr_r`. The published closed forms carry an extra
//! `(1-rho)^Nm` factor on every probability; [`Mode`] selects between the two.

use crate::error::{invalid, Error, Result};
use crate::special::{
    erf, gamma_p, gamma_q, ln_bessel_i, ln_binomial, ln_gamma, meijer_g, ContourConfig, MeijerGSpec,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HopParams {
    /// Antennas at the relay for this hop (N).
    pub antennas: u32,
    /// Nakagami shape of the signal link (m).
    pub m: f64,
    /// Number of interferers (M_r).
    pub interferers: u32,
    /// Nakagami shape of each interfering link (m_r).
    pub m_r: f64,
    /// Correlation between outdated and current CSI.
    pub rho: f64,
    /// Average SNR, linear.
    pub snr: f64,
    /// Average aggregate interference SNR, linear.
    pub interference_snr: f64,
}

impl HopParams {
    pub fn validate(&self) -> Result<()> {
        if self.antennas == 0 {
            return Err(invalid("antenna count must be at least 1"));
        }
        if !(self.m > 0.0) || !self.m.is_finite() {
            return Err(invalid(format!("Nakagami shape m must be positive, got {}", self.m)));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(invalid(format!("correlation must lie in [0, 1), got {}", self.rho)));
        }
        if !(self.snr > 0.0) || !self.snr.is_finite() {
            return Err(invalid(format!("average SNR must be positive, got {}", self.snr)));
        }
        if self.interferers > 0 {
            if !(self.m_r > 0.0) || !self.m_r.is_finite() {
                return Err(invalid(format!("interference shape must be positive, got {}", self.m_r)));
            }
            if !(self.interference_snr >= 0.0) || !self.interference_snr.is_finite() {
                return Err(invalid(format!(
                    "interference SNR must be non-negative, got {}",
                    self.interference_snr
                )));
            }
        }
        Ok(())
    }

    /// Nm, the signal Gamma shape.
    pub fn shape(&self) -> f64 {
        self.antennas as f64 * self.m
    }

    /// Nm as an integer, required by the finite-sum forms.
    pub fn integer_shape(&self) -> Result<u32> {
        let s = self.shape();
        let r = s.round();
        if (s - r).abs() > 1e-9 || r < 1.0 {
            return Err(invalid(format!("N*m = {s} is not a positive integer")));
        }
        Ok(r as u32)
    }

    /// K = M_r m_r.
    pub fn interference_shape(&self) -> f64 {
        self.interferers as f64 * self.m_r
    }

    pub fn has_interference(&self) -> bool {
        self.interferers > 0 && self.interference_snr > 0.0
    }

    /// Rate of the outdated signal SNR, Nm / ((1-rho) snr).
    pub fn signal_rate(&self) -> f64 {
        self.shape() / ((1.0 - self.rho) * self.snr)
    }

    /// Rate of the aggregate interference, K / snr_r.
    pub fn interference_rate(&self) -> f64 {
        self.interference_shape() / self.interference_snr
    }

    /// (1-rho)^Nm, the probability mass carried by the published forms.
    pub fn published_mass(&self) -> f64 {
        (self.shape() * (-self.rho).ln_1p()).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Literal published closed forms, with total mass (1-rho)^Nm.
    #[serde(alias = "as-published", alias = "as_published")]
    Published,
    /// Normalized to a proper distribution.
    Renormalized,
}

impl Mode {
    pub fn label(&self) -> &'static str {
        match self {
            Mode::Published => "published",
            Mode::Renormalized => "renormalized",
        }
    }
}

/// Outdated-CSI SNR density in its published form, reading the exponent as x^(Nm-1).
pub fn outdated_snr_pdf(params: &HopParams, x: f64) -> Result<f64> {
    params.validate()?;
    if x <= 0.0 {
        return Ok(0.0);
    }
    let k = params.shape();
    let ln = k * (k / params.snr).ln() + (k - 1.0) * x.ln() - ln_gamma(k) - params.signal_rate() * x;
    Ok(ln.exp())
}

/// Outdated-CSI SNR CDF through the lower incomplete gamma function.
pub fn outdated_snr_cdf(params: &HopParams, x: f64, mode: Mode) -> Result<f64> {
    params.validate()?;
    let f = gamma_p(params.shape(), params.signal_rate() * x.max(0.0));
    Ok(scale(params, mode) * f)
}

/// Outdated-CSI SNR CDF through the finite Poisson sum; needs integer Nm.
pub fn outdated_snr_cdf_finite_sum(params: &HopParams, x: f64, mode: Mode) -> Result<f64> {
    params.validate()?;
    let k = params.integer_shape()?;
    if x <= 0.0 {
        return Ok(0.0);
    }
    let y = params.signal_rate() * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for n in 1..k {
        term *= y / n as f64;
        sum += term;
    }
    Ok(scale(params, mode) * (1.0 - (-y).exp() * sum))
}

/// Joint density of outdated and current SNR (bivariate Gamma).
pub fn joint_outdated_updated_pdf(params: &HopParams, x: f64, y: f64) -> Result<f64> {
    params.validate()?;
    let rho = params.rho;
    if rho <= 0.0 {
        return Err(Error::Degenerate(
            "joint density needs 0 < rho < 1; at rho = 0 the SNRs are independent".into(),
        ));
    }
    if x <= 0.0 || y <= 0.0 {
        return Ok(0.0);
    }
    let k = params.shape();
    let g = params.snr;
    let arg = 2.0 * k * (rho * x * y).sqrt() / ((1.0 - rho) * g);
    let ln = (k + 1.0) * (k / g).ln() + 0.5 * (k - 1.0) * (x * y / rho).ln()
        - (1.0 - rho).ln()
        - ln_gamma(k)
        - (x + y) / (1.0 - rho) * k / g
        + ln_bessel_i(k - 1.0, arg);
    Ok(ln.exp())
}

/// Aggregate interference SNR density, Gamma(K, snr_r / K).
pub fn interference_snr_pdf(params: &HopParams, x: f64) -> Result<f64> {
    params.validate()?;
    if !params.has_interference() {
        return Err(Error::Degenerate("no interference: the aggregate is identically zero".into()));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    let k = params.interference_shape();
    let mu = params.interference_rate();
    Ok((k * mu.ln() + (k - 1.0) * x.ln() - ln_gamma(k) - mu * x).exp())
}

fn scale(params: &HopParams, mode: Mode) -> f64 {
    match mode {
        Mode::Published => params.published_mass(),
        Mode::Renormalized => 1.0,
    }
}

/// Distribution of a hop's effective SINR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinrDistribution {
    params: HopParams,
    mode: Mode,
    nm: u32,
}

impl SinrDistribution {
    pub fn new(params: HopParams, mode: Mode) -> Result<Self> {
        params.validate()?;
        let nm = params.integer_shape()?;
        Ok(Self { params, mode, nm })
    }

    pub fn params(&self) -> &HopParams {
        &self.params
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn nm(&self) -> u32 {
        self.nm
    }

    /// Limit of the CDF as x grows without bound.
    pub fn mass(&self) -> f64 {
        scale(&self.params, self.mode)
    }

    pub fn with_mode(&self, mode: Mode) -> Self {
        Self { mode, ..*self }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.mass() * self.normalized_cdf(x)
    }

    /// Complementary CDF of the normalized distribution, accurate in the
    /// upper tail.
    pub fn normalized_ccdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        let lx = self.params.signal_rate() * x;
        if !self.params.has_interference() {
            return gamma_q(self.nm as f64, lx);
        }
        let head = self.mixture_head(x, self.nm as usize);
        head.iter()
            .enumerate()
            .map(|(p, w)| w * gamma_q((self.nm as usize - p) as f64, lx))
            .sum()
    }

    /// CDF of the normalized distribution.
    pub fn normalized_cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let lx = self.params.signal_rate() * x;
        if !self.params.has_interference() {
            return gamma_p(self.nm as f64, lx);
        }
        let nm = self.nm as usize;
        let head = self.mixture_head(x, nm);
        let survival: f64 = head
            .iter()
            .enumerate()
            .map(|(p, w)| w * gamma_q((nm - p) as f64, lx))
            .sum();
        if survival < 0.5 {
            return (1.0 - survival).max(0.0);
        }
        let body: f64 = head
            .iter()
            .enumerate()
            .map(|(p, w)| w * gamma_p((nm - p) as f64, lx))
            .sum();
        (body + self.mixture_tail(x, nm)).min(1.0)
    }

    // ln of the negative-binomial weight p of the interference mixture at x
    fn mixture_ln_weight(&self, x: f64) -> impl Fn(usize) -> f64 {
        let k = self.params.interference_shape();
        let lam = self.params.signal_rate();
        let s = self.params.interference_rate() + lam * x;
        let ln_q = (lam * x / s).ln();
        let ln_base = k * (self.params.interference_rate() / s).ln();
        let ln_gk = ln_gamma(k);
        move |p: usize| {
            let pf = p as f64;
            ln_gamma(k + pf) - ln_gk - ln_gamma(pf + 1.0) + ln_base + pf * ln_q
        }
    }

    // first `count` mixture weights at x
    fn mixture_head(&self, x: f64, count: usize) -> Vec<f64> {
        let w = self.mixture_ln_weight(x);
        (0..count).map(|p| w(p).exp()).collect()
    }

    // sum of the mixture weights from index `count` on, by the ratio recurrence
    fn mixture_tail(&self, x: f64, count: usize) -> f64 {
        let k = self.params.interference_shape();
        let lam = self.params.signal_rate();
        let q = lam * x / (self.params.interference_rate() + lam * x);
        let mut term = self.mixture_ln_weight(x)(count).exp();
        let mut tail = 0.0;
        let mut p = count as f64;
        let peak = (k - 1.0) * q / (1.0 - q);
        for _ in 0..50_000_000u64 {
            tail += term;
            term *= (k + p) / (p + 1.0) * q;
            p += 1.0;
            if (term <= 1e-17 * tail && p > peak) || term == 0.0 {
                break;
            }
        }
        tail
    }

    /// Closed form as a double sum with the interference shape exponent,
    /// evaluated term by term in log space.
    pub fn cdf_double_sum(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let lam = self.params.signal_rate();
        if !self.params.has_interference() {
            return self.mass() * (1.0 - self.poisson_head(lam * x));
        }
        let k = self.params.interference_shape();
        let mu = self.params.interference_rate();
        let s = mu + lam * x;
        let mut sum = 0.0;
        for n in 0..self.nm {
            for p in 0..=n {
                let (nf, pf) = (n as f64, p as f64);
                let ln = ln_binomial(nf, pf) - ln_gamma(nf + 1.0) + nf * lam.ln() + ln_gamma(k + pf)
                    + nf * x.ln()
                    - (k + pf) * s.ln()
                    - lam * x
                    + k * mu.ln()
                    - ln_gamma(k);
                sum += ln.exp();
            }
        }
        self.mass() * (1.0 - sum)
    }

    fn poisson_head(&self, y: f64) -> f64 {
        let mut term = 1.0;
        let mut sum = 1.0;
        for n in 1..self.nm {
            term *= y / n as f64;
            sum += term;
        }
        (-y).exp() * sum
    }

    /// Density; in published mode this is the literal published density, which
    /// carries the same (1-rho)^Nm factor as the CDF.
    pub fn pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        self.mass() * self.ln_normalized_pdf(x).exp()
    }

    pub fn ln_normalized_pdf(&self, x: f64) -> f64 {
        let nm = self.nm as f64;
        let lam = self.params.signal_rate();
        let lead = nm * lam.ln() + (nm - 1.0) * x.ln() - lam * x - ln_gamma(nm);
        if !self.params.has_interference() {
            return lead;
        }
        let k = self.params.interference_shape();
        let mu = self.params.interference_rate();
        let s = mu + lam * x;
        let ln_gk = ln_gamma(k);
        let terms: Vec<f64> = (0..=self.nm)
            .map(|p| {
                let pf = p as f64;
                ln_binomial(nm, pf) + ln_gamma(k + pf) - ln_gk + k * (mu / s).ln() - pf * s.ln()
            })
            .collect();
        lead + log_sum_exp(&terms)
    }

    /// n-th moment. With interference this is a finite sum of
    /// G^{1,2}_{2,1} functions.
    pub fn moment(&self, n: f64, contour: &ContourConfig) -> Result<f64> {
        if !(n >= 0.0) {
            return Err(invalid(format!("moment order must be non-negative, got {n}")));
        }
        if n == 0.0 {
            return Ok(self.mass());
        }
        let nm = self.nm as f64;
        let theta = 1.0 / self.params.signal_rate();
        if !self.params.has_interference() {
            return Ok(self.mass() * (ln_gamma(nm + n) - ln_gamma(nm) + n * theta.ln()).exp());
        }
        let k = self.params.interference_shape();
        let z = self.params.interference_snr / k;
        let mut terms = Vec::with_capacity(self.nm as usize + 1);
        for p in 0..=self.nm {
            let pf = p as f64;
            let spec = MeijerGSpec::new(1, 2, vec![1.0 - n - nm, 1.0 - k - pf], vec![0.0])?;
            let g = meijer_g(&spec, z, contour)?;
            if g.mantissa <= 0.0 {
                return Err(Error::NonConvergence {
                    value: g.value(),
                    estimate: g.relative_estimate(),
                    nodes: g.nodes,
                });
            }
            terms.push(ln_binomial(nm, pf) + pf * z.ln() + g.ln_abs());
        }
        let ln = (n + nm) * theta.ln() + nm * self.params.signal_rate().ln()
            - ln_gamma(nm)
            - ln_gamma(k)
            + log_sum_exp(&terms);
        Ok(self.mass() * ln.exp())
    }

    /// First moment with the default contour.
    pub fn mean(&self) -> Result<f64> {
        self.moment(1.0, &ContourConfig::default())
    }
}

/// The uncorrected published CDF formula, including the shape exponent on the
/// leading interference factor. It only vanishes at x = 0 when that
/// exponent equals K, i.e. for a single interferer.
pub fn printed_cdf(params: &HopParams, x: f64) -> Result<f64> {
    params.validate()?;
    let nm = params.integer_shape()?;
    if !params.has_interference() {
        return outdated_snr_cdf_finite_sum(params, x, Mode::Published);
    }
    let k = params.interference_shape();
    let mu = params.interference_rate();
    let lam = params.signal_rate();
    let s = mu + lam * x;
    let mut sum = 0.0;
    for n in 0..nm {
        for p in 0..=n {
            let (nf, pf) = (n as f64, p as f64);
            let x_pow = if n == 0 { 0.0 } else { nf * x.ln() };
            let ln = ln_binomial(nf, pf) - ln_gamma(nf + 1.0) + nf * lam.ln() + ln_gamma(k + pf) + x_pow
                - (k + pf) * s.ln()
                - lam * x
                + params.m_r * mu.ln()
                - ln_gamma(k);
            sum += ln.exp();
        }
    }
    Ok(params.published_mass() * (1.0 - sum))
}

pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// High-SNR CDF asymptote; independent of rho.
pub fn high_snr_cdf_asymptote(params: &HopParams, x: f64) -> Result<f64> {
    params.validate()?;
    let nm = params.integer_shape()? as f64;
    let ln_lead = nm * (nm * x / params.snr).ln() - ln_gamma(nm + 1.0);
    Ok((ln_lead + ln_interference_moment_sum(params, nm)).exp())
}

/// ln sum_p C(Nm,p) Gamma(K+p)/Gamma(K) (snr_r/K)^p, i.e. ln E[(1+Y)^Nm].
pub(crate) fn ln_interference_moment_sum(params: &HopParams, nm: f64) -> f64 {
    if !params.has_interference() {
        return 0.0;
    }
    let k = params.interference_shape();
    let z = params.interference_snr / k;
    let terms: Vec<f64> = (0..=nm as u32)
        .map(|p| {
            let pf = p as f64;
            ln_binomial(nm, pf) + ln_gamma(k + pf) - ln_gamma(k) + pf * z.ln()
        })
        .collect();
    log_sum_exp(&terms)
}

pub fn diversity_gain(params: &HopParams) -> f64 {
    params.shape()
}

/// Central-limit approximation of the SINR for large antenna counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianApprox {
    pub mean: f64,
    pub variance: f64,
}

impl GaussianApprox {
    pub fn new(params: &HopParams) -> Result<Self> {
        params.validate()?;
        let mean = (1.0 - params.rho) * params.snr;
        Ok(Self { mean, variance: mean * mean / params.shape() })
    }

    pub fn cdf(&self, x: f64) -> f64 {
        0.5 * (1.0 + erf((x - self.mean) / (2.0 * self.variance).sqrt()))
    }
}

pub fn gaussian_approx_cdf(params: &HopParams, x: f64) -> Result<f64> {
    Ok(GaussianApprox::new(params)?.cdf(x))
}
