//! Sweep execution: one row per (point, metric, engine).

use std::collections::HashMap;
use std::sync::Mutex;

use mmrelay_core::link::{average_snr_db, doppler_frequency, jakes_correlation, los_probability, CarrierProfile, HopGeometry};
use mmrelay_core::metrics::{
    capacity_high_power, capacity_jensen_bound, capacity_low_power, e2e_outage, e2e_symbol_error, hop_capacity,
    outage_capacity, HopChannel, MetricValue, OutageCapacityQuery, RelaySystem,
};
use mmrelay_core::montecarlo::{estimate_metrics, simulate_e2e, simulate_hop, BlockageDraw, TrialConfig};
use mmrelay_core::sinr::{gaussian_approx_cdf, HopParams, Mode, SinrDistribution};
use mmrelay_core::units::db_to_linear;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Engine, HopConfig, LinkSelect, Metric, ScenarioConfig, SeriesValue};
use crate::error::{CliError, Result};

/// One sweep point: the grid value and the series value it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    /// Grid value as written in the CSV.
    pub value: f64,
    pub series: Option<SeriesValue>,
}

/// A scenario point reduced to model inputs.
#[derive(Debug, Clone)]
pub struct ResolvedPoint {
    pub config: ScenarioConfig,
    pub profile: CarrierProfile,
    pub geometry: [HopGeometry; 2],
    pub system: RelaySystem,
    /// Outage threshold, linear.
    pub threshold: f64,
}

impl ResolvedPoint {
    pub fn trial_config(&self) -> TrialConfig {
        TrialConfig {
            trials: self.config.trials,
            master_seed: self.config.seed,
            hops: self.system.hops,
            modulation: self.config.modulation,
            blockage: BlockageDraw::PerTrial,
        }
    }
}

impl ScenarioConfig {
    /// Series-major list of sweep points.
    pub fn points(&self) -> Vec<Point> {
        let grid = self.sweep.values();
        let series: Vec<Option<SeriesValue>> = match &self.series {
            Some(s) => s.values.iter().cloned().map(Some).collect(),
            None => vec![None],
        };
        series
            .into_iter()
            .flat_map(|s| grid.iter().map(move |&value| Point { value, series: s.clone() }))
            .collect()
    }

    /// Apply the series and sweep overrides of `point` and build the system.
    pub fn resolve(&self, point: &Point) -> Result<ResolvedPoint> {
        let mut cfg = self.clone();
        if let (Some(s), Some(v)) = (&self.series, &point.series) {
            cfg.apply(s.variable, s.hop, v)?;
        }
        let natural = self.sweep.natural(point.value);
        cfg.apply(self.sweep.variable, self.sweep.hop, &SeriesValue::Number(natural))?;

        let (profile, bandwidth) = cfg.carrier.profile(cfg.carrier.ghz)?;
        let geometry = [&cfg.hop1, &cfg.hop2].map(|h| {
            let mut g = h.geometry;
            if let Some(b) = bandwidth {
                g.bandwidth = b;
            }
            g
        });
        let hops = [
            hop_channel(&cfg, &cfg.hop1, &geometry[0], &profile)?,
            hop_channel(&cfg, &cfg.hop2, &geometry[1], &profile)?,
        ];
        let system = RelaySystem::new(hops[0], hops[1], geometry[0].bandwidth, cfg.mode)?;
        let threshold = db_to_linear(cfg.threshold_db);
        Ok(ResolvedPoint { config: cfg, profile, geometry, system, threshold })
    }
}

fn hop_params(cfg: &ScenarioConfig, hop: &HopConfig, geom: &HopGeometry, profile: &CarrierProfile, los: bool) -> HopParams {
    let snr_db = hop.snr_db.unwrap_or_else(|| average_snr_db(cfg.power_dbm, geom, profile, los));
    let isnr_db = match hop.sir_db {
        Some(sir) => average_snr_db(cfg.power_dbm, geom, profile, true) - sir,
        None => hop.interference_snr_db,
    };
    HopParams {
        antennas: hop.antennas,
        m: cfg.nakagami.signal(los),
        interferers: hop.interferers,
        m_r: cfg.nakagami.interference(los),
        rho: hop.rho,
        snr: db_to_linear(snr_db),
        interference_snr: if hop.interferers == 0 { 0.0 } else { db_to_linear(isnr_db) },
    }
}

fn hop_channel(cfg: &ScenarioConfig, hop: &HopConfig, geom: &HopGeometry, profile: &CarrierProfile) -> Result<HopChannel> {
    let p_los = match cfg.link {
        LinkSelect::Los => 1.0,
        LinkSelect::Nlos => 0.0,
        LinkSelect::Mixed => los_probability(&cfg.blockage, geom.distance),
    };
    let h = HopChannel {
        los: hop_params(cfg, hop, geom, profile, true),
        nlos: hop_params(cfg, hop, geom, profile, false),
        p_los,
    };
    h.validate()?;
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PassFlag {
    /// No comparison was made.
    None,
    Pass,
    Fail,
}

impl PassFlag {
    pub fn as_str(&self) -> &'static str {
        match self {
            PassFlag::None => "",
            PassFlag::Pass => "pass",
            PassFlag::Fail => "fail",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub sweep_var: String,
    pub value: f64,
    pub metric: String,
    pub engine: &'static str,
    pub mode: &'static str,
    pub result: f64,
    /// Standard error for Monte Carlo rows, relative error estimate for
    /// analytical rows.
    pub stderr_or_conv: f64,
    pub pass: PassFlag,
    #[serde(skip)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SweepResult {
    pub rows: Vec<Row>,
}

impl SweepResult {
    pub fn failures(&self) -> impl Iterator<Item = &Row> {
        self.rows.iter().filter(|r| r.pass == PassFlag::Fail)
    }

    /// Rows of one metric label and engine, in sweep order.
    pub fn series(&self, metric: &str, engine: &str) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.metric == metric && r.engine == engine)
            .map(|r| (r.value, r.result))
            .collect()
    }
}

pub const ANALYTICAL: &str = "analytical";
pub const MONTE_CARLO: &str = "mc";

pub fn run_sweep(cfg: &ScenarioConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let cache = CapacityCache::default();
    let mut rows: Vec<Row> = cfg.points().par_iter().flat_map_iter(|p| evaluate_point(cfg, p, &cache)).collect();
    rows.sort_by(|a, b| {
        a.metric
            .cmp(&b.metric)
            .then(a.value.total_cmp(&b.value))
            .then(a.engine.cmp(b.engine))
    });
    Ok(SweepResult { rows })
}

fn metric_label(cfg: &ScenarioConfig, metric: Metric, point: &Point) -> String {
    match (&cfg.series, &point.series) {
        (Some(s), Some(v)) => format!("{}[{}={}]", metric.name(), s.label(), v),
        _ => metric.name().to_string(),
    }
}

fn evaluate_point(cfg: &ScenarioConfig, point: &Point, cache: &CapacityCache) -> Vec<Row> {
    let row = |metric: Metric, engine: &'static str, outcome: Result<(f64, f64)>, pass: PassFlag| {
        let (result, conv, error) = match outcome {
            Ok((v, c)) => (v, c, None),
            Err(e) => (f64::NAN, f64::NAN, Some(e.to_string())),
        };
        Row {
            sweep_var: cfg.sweep.label(),
            value: point.value,
            metric: metric_label(cfg, metric, point),
            engine,
            mode: cfg.mode.label(),
            result,
            stderr_or_conv: conv,
            pass: if error.is_some() && pass == PassFlag::None { PassFlag::Fail } else { pass },
            error,
        }
    };
    let resolved = match cfg.resolve(point) {
        Ok(r) => r,
        Err(e) => {
            let msg = e.to_string();
            let mut rows = Vec::new();
            for &m in &cfg.metrics {
                if cfg.engine.runs_analytical() {
                    rows.push(row(m, ANALYTICAL, Err(CliError::Usage(msg.clone())), PassFlag::Fail));
                }
                if cfg.engine.runs_mc() && m.has_monte_carlo() {
                    rows.push(row(m, MONTE_CARLO, Err(CliError::Usage(msg.clone())), PassFlag::Fail));
                }
            }
            return rows;
        }
    };

    let mut rows = Vec::new();
    let mc = if cfg.engine.runs_mc() && cfg.metrics.iter().any(|m| m.has_monte_carlo()) {
        Some(MonteCarlo::new(&resolved, &cfg.metrics))
    } else {
        None
    };
    for &metric in &cfg.metrics {
        let analytical = cfg.engine.runs_analytical().then(|| evaluate(metric, &resolved, cache));
        let mc_value = mc.as_ref().filter(|_| metric.has_monte_carlo()).map(|m| m.metric(metric));
        let pass = match (&analytical, &mc_value, cfg.engine) {
            (Some(Ok((a, _))), Some(Ok((v, se))), Engine::Both) => {
                let band = match metric {
                    Metric::Outage => 3.0 * se.max(1.0 / cfg.trials as f64),
                    _ => 3.0 * se,
                };
                if (a - v).abs() <= band {
                    PassFlag::Pass
                } else {
                    PassFlag::Fail
                }
            }
            (_, Some(_), Engine::Both) => PassFlag::Fail,
            _ => PassFlag::None,
        };
        if let Some(a) = analytical {
            rows.push(row(metric, ANALYTICAL, a, PassFlag::None));
        }
        if let Some(v) = mc_value {
            rows.push(row(metric, MONTE_CARLO, v, pass));
        }
    }
    rows
}

/// State-weighted value of a per-hop metric, minimized over hops.
fn weakest_hop<F>(system: &RelaySystem, f: F) -> Result<f64>
where
    F: Fn(&SinrDistribution) -> mmrelay_core::Result<f64>,
{
    let mut worst = f64::INFINITY;
    for h in &system.hops {
        let mut v = 0.0;
        for (w, p) in h.states() {
            v += w * f(&SinrDistribution::new(p, system.mode)?)?;
        }
        worst = worst.min(v);
    }
    Ok(worst)
}

/// Hop capacities shared across sweep points; series often revisit the same
/// LOS and NLOS parameter sets with different mixing weights.
#[derive(Default)]
pub struct CapacityCache {
    values: Mutex<HashMap<(Mode, [u64; 8]), MetricValue>>,
}

impl CapacityCache {
    fn key(p: &HopParams, mode: Mode, bandwidth: f64) -> (Mode, [u64; 8]) {
        (
            mode,
            [
                p.antennas as u64,
                p.m.to_bits(),
                p.interferers as u64,
                p.m_r.to_bits(),
                p.rho.to_bits(),
                p.snr.to_bits(),
                p.interference_snr.to_bits(),
                bandwidth.to_bits(),
            ],
        )
    }

    fn hop_capacity(&self, p: HopParams, mode: Mode, bandwidth: f64) -> Result<MetricValue> {
        let key = Self::key(&p, mode, bandwidth);
        if let Some(v) = self.values.lock().expect("cache lock").get(&key) {
            return Ok(*v);
        }
        let v = hop_capacity(&SinrDistribution::new(p, mode)?, bandwidth)?;
        self.values.lock().expect("cache lock").insert(key, v);
        Ok(v)
    }

    /// Capacity of the weaker hop, each hop averaged over its states.
    pub fn e2e_capacity(&self, system: &RelaySystem) -> Result<MetricValue> {
        let mut best: Option<MetricValue> = None;
        for h in &system.hops {
            let mut v = MetricValue { value: 0.0, estimate: 0.0, degraded: false };
            for (w, p) in h.states() {
                let c = self.hop_capacity(p, system.mode, system.bandwidth)?;
                v.value += w * c.value;
                v.estimate = v.estimate.max(c.estimate);
                v.degraded |= c.degraded;
            }
            if best.is_none_or(|b| v.value < b.value) {
                best = Some(v);
            }
        }
        Ok(best.expect("two hops"))
    }
}

/// Value and convergence estimate of one analytical metric.
pub fn analytical_metric(metric: Metric, r: &ResolvedPoint) -> Result<(f64, f64)> {
    evaluate(metric, r, &CapacityCache::default())
}

fn evaluate(metric: Metric, r: &ResolvedPoint, cache: &CapacityCache) -> Result<(f64, f64)> {
    let sys = &r.system;
    let b = sys.bandwidth;
    let cfg = &r.config;
    Ok(match metric {
        Metric::Outage => (e2e_outage(sys, r.threshold)?, 0.0),
        Metric::Ser => {
            let v = e2e_symbol_error(sys, &cfg.modulation)?;
            (v.value, v.estimate)
        }
        Metric::Capacity => {
            let v = cache.e2e_capacity(sys)?;
            (v.value, v.estimate)
        }
        Metric::CapacityLow => (weakest_hop(sys, |d| capacity_low_power(d, b))?, 0.0),
        Metric::CapacityHigh => (weakest_hop(sys, |d| capacity_high_power(d, b))?, 0.0),
        Metric::CapacityJensen => (weakest_hop(sys, |d| capacity_jensen_bound(d, b))?, 0.0),
        Metric::OutageCapacity => {
            let q = OutageCapacityQuery::new(cfg.epsilon)?;
            (outage_capacity(sys, &q, cfg.blocks, cfg.seed)?, 0.0)
        }
        Metric::GaussianOutage => {
            let mut f = [0.0; 2];
            for (i, h) in sys.hops.iter().enumerate() {
                for (w, p) in h.states() {
                    f[i] += w * gaussian_approx_cdf(&p, r.threshold)?;
                }
            }
            (f[0] + f[1] - f[0] * f[1], 0.0)
        }
        Metric::Correlation => (jakes_correlation(&r.geometry[0], r.profile.f_c), 0.0),
        Metric::Doppler => (doppler_frequency(&r.geometry[0], r.profile.f_c), 0.0),
    })
}

/// Monte Carlo estimates of one point, simulated once and shared across
/// metrics.
type Slot = Option<std::result::Result<(f64, f64), String>>;

struct MonteCarlo {
    outage: Slot,
    ser: Slot,
    capacity: Slot,
}

impl MonteCarlo {
    fn new(r: &ResolvedPoint, metrics: &[Metric]) -> Self {
        let trial = r.trial_config();
        let b = r.system.bandwidth;
        let modulation = r.config.modulation;
        let wants = |m: Metric| metrics.contains(&m);
        let (mut outage, mut ser, mut capacity) = (None, None, None);
        if wants(Metric::Outage) || wants(Metric::Ser) {
            let est = simulate_e2e(&trial).and_then(|d| estimate_metrics(&d, &modulation, b, &[r.threshold]));
            match est {
                Ok(e) => {
                    outage = Some(Ok((e.outage[0].value, e.outage[0].std_error)));
                    ser = Some(Ok((e.symbol_error.value, e.symbol_error.std_error)));
                }
                Err(e) => {
                    outage = Some(Err(e.to_string()));
                    ser = Some(Err(e.to_string()));
                }
            }
        }
        if wants(Metric::Capacity) {
            let hop = |i: usize| -> Result<(f64, f64)> {
                let d = simulate_hop(&trial, i)?;
                let c = estimate_metrics(&d, &modulation, b, &[])?.capacity;
                Ok((c.value, c.std_error))
            };
            capacity = Some(
                hop(1)
                    .and_then(|c1| {
                        let c2 = hop(2)?;
                        Ok(if c1.0 <= c2.0 { c1 } else { c2 })
                    })
                    .map_err(|e| e.to_string()),
            );
        }
        Self { outage, ser, capacity }
    }

    fn metric(&self, metric: Metric) -> Result<(f64, f64)> {
        let slot = match metric {
            Metric::Outage => &self.outage,
            Metric::Ser => &self.ser,
            Metric::Capacity => &self.capacity,
            _ => &None,
        };
        match slot {
            Some(Ok(v)) => Ok(*v),
            Some(Err(e)) => Err(CliError::Usage(e.clone())),
            None => Err(CliError::Usage(format!("no Monte Carlo estimate for {}", metric.name()))),
        }
    }
}
