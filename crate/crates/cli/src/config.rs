//! Scenario files: TOML documents describing one sweep.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mmrelay_core::link::{BlockageModel, CarrierProfile, HopGeometry, NakagamiProfile, DEFAULT_INTERFERERS};
use mmrelay_core::metrics::ModulationScheme;
use mmrelay_core::montecarlo::{DEFAULT_TRIALS, MIN_ESTIMATOR_SAMPLES};
use mmrelay_core::sinr::Mode;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Outage,
    #[serde(alias = "symbol_error")]
    Ser,
    Capacity,
    CapacityLow,
    CapacityHigh,
    CapacityJensen,
    OutageCapacity,
    GaussianOutage,
    Correlation,
    Doppler,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Outage => "outage",
            Metric::Ser => "ser",
            Metric::Capacity => "capacity",
            Metric::CapacityLow => "capacity_low",
            Metric::CapacityHigh => "capacity_high",
            Metric::CapacityJensen => "capacity_jensen",
            Metric::OutageCapacity => "outage_capacity",
            Metric::GaussianOutage => "gaussian_outage",
            Metric::Correlation => "correlation",
            Metric::Doppler => "doppler",
        }
    }

    /// Metrics the Monte Carlo engine estimates.
    pub fn has_monte_carlo(&self) -> bool {
        matches!(self, Metric::Outage | Metric::Ser | Metric::Capacity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    #[default]
    Analytical,
    #[serde(alias = "monte-carlo", alias = "monte_carlo")]
    Mc,
    Both,
}

impl Engine {
    pub fn runs_analytical(&self) -> bool {
        matches!(self, Engine::Analytical | Engine::Both)
    }

    pub fn runs_mc(&self) -> bool {
        matches!(self, Engine::Mc | Engine::Both)
    }
}

impl FromStr for Engine {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "analytical" => Ok(Engine::Analytical),
            "mc" | "monte-carlo" | "monte_carlo" => Ok(Engine::Mc),
            "both" => Ok(Engine::Both),
            _ => Err(format!("unknown engine {s:?}; expected analytical, mc or both")),
        }
    }
}

pub fn parse_mode(s: &str) -> std::result::Result<Mode, String> {
    match s {
        "published" | "as-published" | "as_published" => Ok(Mode::Published),
        "renormalized" => Ok(Mode::Renormalized),
        _ => Err(format!("unknown mode {s:?}; expected published or renormalized")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkSelect {
    Los,
    Nlos,
    #[default]
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HopSelect {
    #[default]
    Both,
    Hop1,
    Hop2,
}

impl HopSelect {
    pub fn covers(&self, hop: usize) -> bool {
        match self {
            HopSelect::Both => true,
            HopSelect::Hop1 => hop == 0,
            HopSelect::Hop2 => hop == 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    /// Evenly spaced in dB; only for dB-valued variables.
    #[default]
    LinearDb,
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variable {
    Snr,
    InterferenceSnr,
    Rho,
    #[serde(alias = "N")]
    Antennas,
    Delta,
    Power,
    Distance,
    #[serde(alias = "eps")]
    Epsilon,
    #[serde(alias = "K")]
    Blocks,
    Threshold,
    Speed,
    Carrier,
    Modulation,
}

impl Variable {
    pub fn name(&self) -> &'static str {
        match self {
            Variable::Snr => "snr",
            Variable::InterferenceSnr => "interference_snr",
            Variable::Rho => "rho",
            Variable::Antennas => "antennas",
            Variable::Delta => "delta",
            Variable::Power => "power",
            Variable::Distance => "distance",
            Variable::Epsilon => "epsilon",
            Variable::Blocks => "blocks",
            Variable::Threshold => "threshold",
            Variable::Speed => "speed",
            Variable::Carrier => "carrier",
            Variable::Modulation => "modulation",
        }
    }

    /// Values carried in dB (dBm for power).
    pub fn is_db(&self) -> bool {
        matches!(self, Variable::Snr | Variable::InterferenceSnr | Variable::Power | Variable::Threshold)
    }

    pub fn is_integer(&self) -> bool {
        matches!(self, Variable::Antennas | Variable::Blocks)
    }

    /// Variables that can be set on one hop only.
    pub fn per_hop(&self) -> bool {
        matches!(
            self,
            Variable::Snr | Variable::InterferenceSnr | Variable::Rho | Variable::Antennas | Variable::Distance | Variable::Speed
        )
    }

    fn label(&self, hop: HopSelect) -> String {
        match (self.per_hop(), hop) {
            (true, HopSelect::Hop1) => format!("{}1", self.name()),
            (true, HopSelect::Hop2) => format!("{}2", self.name()),
            _ => self.name().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepAxis {
    pub variable: Variable,
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    pub scale: Scale,
    pub hop: HopSelect,
}

impl Default for SweepAxis {
    fn default() -> Self {
        Self { variable: Variable::Snr, start: 0.0, stop: 40.0, points: 9, scale: Scale::LinearDb, hop: HopSelect::Both }
    }
}

impl SweepAxis {
    /// Grid values as written in the CSV. For dB variables on a linear or log
    /// scale these are linear ratios.
    pub fn values(&self) -> Vec<f64> {
        let n = self.points.max(1);
        (0..n)
            .map(|i| {
                let t = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
                let v = match self.scale {
                    Scale::Log => self.start * (self.stop / self.start).powf(t),
                    _ => self.start + t * (self.stop - self.start),
                };
                if self.variable.is_integer() {
                    v.round()
                } else {
                    v
                }
            })
            .collect()
    }

    /// Grid value converted to the unit the scenario stores.
    pub fn natural(&self, value: f64) -> f64 {
        if self.variable.is_db() && self.scale != Scale::LinearDb {
            10.0 * value.log10()
        } else {
            value
        }
    }

    pub fn label(&self) -> String {
        self.variable.label(self.hop)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeriesValue {
    Number(f64),
    Text(String),
}

impl SeriesValue {
    pub fn number(&self) -> Option<f64> {
        match self {
            SeriesValue::Number(x) => Some(*x),
            SeriesValue::Text(_) => None,
        }
    }
}

impl fmt::Display for SeriesValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SeriesValue::Number(x) => write!(f, "{x}"),
            SeriesValue::Text(s) => f.write_str(s),
        }
    }
}

/// One curve per value, each a full sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Series {
    pub variable: Variable,
    pub values: Vec<SeriesValue>,
    #[serde(default)]
    pub hop: HopSelect,
}

impl Series {
    pub fn label(&self) -> String {
        self.variable.label(self.hop)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HopConfig {
    pub antennas: u32,
    pub rho: f64,
    pub interferers: u32,
    /// Aggregate interference SNR in dB.
    pub interference_snr_db: f64,
    /// When set, the interference SNR follows the LOS signal SNR minus this
    /// many dB and `interference_snr_db` is ignored.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sir_db: Option<f64>,
    /// Average SNR in dB; computed from the link budget when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
    pub geometry: HopGeometry,
}

impl Default for HopConfig {
    fn default() -> Self {
        Self {
            antennas: 5,
            rho: 0.1,
            interferers: DEFAULT_INTERFERERS,
            interference_snr_db: 0.0,
            sir_db: None,
            snr_db: None,
            geometry: HopGeometry::default(),
        }
    }
}

/// A carrier that is not in the built-in table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomCarrier {
    pub ghz: f64,
    pub alpha_rain_los: f64,
    pub alpha_rain_nlos: f64,
    pub alpha_ox: f64,
    #[serde(default = "default_reference_distance")]
    pub reference_distance: f64,
    /// Overrides the bandwidth of both hops, Hz.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
}

fn default_reference_distance() -> f64 {
    200.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CarrierConfig {
    pub ghz: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub custom: Vec<CustomCarrier>,
}

impl Default for CarrierConfig {
    fn default() -> Self {
        Self { ghz: 60.0, custom: Vec::new() }
    }
}

impl CarrierConfig {
    /// Attenuation profile at `ghz` and the bandwidth override, if any.
    pub fn profile(&self, ghz: f64) -> Result<(CarrierProfile, Option<f64>)> {
        if let Some(c) = self.custom.iter().find(|c| (c.ghz - ghz).abs() < 1e-9) {
            let p = CarrierProfile {
                f_c: c.ghz * 1e9,
                alpha_rain_los: c.alpha_rain_los,
                alpha_rain_nlos: c.alpha_rain_nlos,
                alpha_ox: c.alpha_ox,
                reference_distance: c.reference_distance,
            };
            p.validate()?;
            return Ok((p, c.bandwidth));
        }
        if ghz.fract() == 0.0 && ghz > 0.0 && ghz < u32::MAX as f64 {
            return Ok((CarrierProfile::builtin(ghz as u32)?, None));
        }
        Err(CliError::Invalid(vec![format!("carrier {ghz} GHz is neither built in nor listed under [[carrier.custom]]")]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub metrics: Vec<Metric>,
    pub engine: Engine,
    pub mode: Mode,
    pub modulation: ModulationScheme,
    pub trials: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Outage threshold in dB.
    pub threshold_db: f64,
    pub epsilon: f64,
    pub blocks: usize,
    pub power_dbm: f64,
    pub link: LinkSelect,
    pub carrier: CarrierConfig,
    pub nakagami: NakagamiProfile,
    pub blockage: BlockageModel,
    pub hop1: HopConfig,
    pub hop2: HopConfig,
    pub sweep: SweepAxis,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub series: Option<Series>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: String::new(),
            metrics: vec![Metric::Outage],
            engine: Engine::Analytical,
            mode: Mode::Renormalized,
            modulation: ModulationScheme::Bpsk,
            trials: DEFAULT_TRIALS,
            seed: 1,
            output: None,
            threshold_db: 0.0,
            epsilon: 0.01,
            blocks: 1,
            power_dbm: 0.0,
            link: LinkSelect::Mixed,
            carrier: CarrierConfig::default(),
            nakagami: NakagamiProfile::default(),
            blockage: BlockageModel::ThreePart,
            hop1: HopConfig::default(),
            hop2: HopConfig::default(),
            sweep: SweepAxis::default(),
            series: None,
        }
    }
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config(&text, &path.display().to_string())
}

/// Parse and validate a scenario. `origin` names the source in errors.
pub fn parse_config(text: &str, origin: &str) -> Result<ScenarioConfig> {
    let cfg: ScenarioConfig =
        toml::from_str(text).map_err(|e| CliError::Parse { path: origin.to_string(), message: e.to_string() })?;
    cfg.validate()?;
    Ok(cfg)
}

fn check_value(var: Variable, value: &SeriesValue, what: &str, errors: &mut Vec<String>) {
    match (var, value) {
        (Variable::Modulation, SeriesValue::Text(s)) => {
            if let Err(e) = s.parse::<ModulationScheme>() {
                errors.push(format!("{what}: {e}"));
            }
        }
        (Variable::Modulation, SeriesValue::Number(x)) => {
            errors.push(format!("{what}: modulation must be a name, got {x}"));
        }
        (_, SeriesValue::Text(s)) => errors.push(format!("{what}: {} needs a number, got {s:?}", var.name())),
        (_, SeriesValue::Number(x)) => {
            if let Some(msg) = numeric_problem(var, *x) {
                errors.push(format!("{what}: {msg}"));
            }
        }
    }
}

/// Range check of a value in the unit the scenario stores.
fn numeric_problem(var: Variable, x: f64) -> Option<String> {
    if !x.is_finite() {
        return Some(format!("{} must be finite, got {x}", var.name()));
    }
    let bad = match var {
        Variable::Rho => !(0.0..1.0).contains(&x),
        Variable::Antennas | Variable::Blocks => x.round() < 1.0,
        Variable::Delta | Variable::Distance | Variable::Carrier => x <= 0.0,
        Variable::Epsilon => !(x > 0.0 && x < 1.0),
        Variable::Speed => x < 0.0,
        _ => false,
    };
    bad.then(|| format!("{} = {x} is out of range", var.name()))
}

impl ScenarioConfig {
    /// Every violated constraint, reported together.
    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        if self.trials == 0 {
            errors.push("trials must be at least 1".to_string());
        } else if self.engine.runs_mc() && self.trials < MIN_ESTIMATOR_SAMPLES {
            errors.push(format!("trials: the Monte Carlo engine needs at least {MIN_ESTIMATOR_SAMPLES}"));
        }
        if let Err(e) = self.modulation.validate() {
            errors.push(format!("modulation: {e}"));
        }
        if !self.threshold_db.is_finite() {
            errors.push("threshold_db must be finite".to_string());
        }
        if !self.power_dbm.is_finite() {
            errors.push("power_dbm must be finite".to_string());
        }
        if let Some(m) = numeric_problem(Variable::Epsilon, self.epsilon) {
            errors.push(m);
        }
        if self.blocks == 0 {
            errors.push("blocks must be at least 1".to_string());
        }
        if let Err(e) = self.carrier.profile(self.carrier.ghz) {
            errors.push(format!("carrier: {e}"));
        }
        for c in &self.carrier.custom {
            if c.bandwidth.is_some_and(|b| !(b > 0.0)) {
                errors.push(format!("carrier.custom at {} GHz: bandwidth must be positive", c.ghz));
            }
        }
        if let Err(e) = self.nakagami.validate() {
            errors.push(format!("nakagami: {e}"));
        }
        if let Err(e) = self.blockage.validate() {
            errors.push(format!("blockage: {e}"));
        }
        for (name, hop) in [("hop1", &self.hop1), ("hop2", &self.hop2)] {
            if hop.antennas == 0 {
                errors.push(format!("{name}.antennas must be at least 1"));
            }
            if !(0.0..1.0).contains(&hop.rho) {
                errors.push(format!("{name}.rho must lie in [0, 1), got {}", hop.rho));
            }
            if !hop.interference_snr_db.is_finite() && hop.interference_snr_db != f64::NEG_INFINITY {
                errors.push(format!("{name}.interference_snr_db must be finite"));
            }
            if hop.snr_db.is_some_and(|s| !s.is_finite()) || hop.sir_db.is_some_and(|s| !s.is_finite()) {
                errors.push(format!("{name}: snr_db and sir_db must be finite"));
            }
            if let Err(e) = hop.geometry.validate() {
                errors.push(format!("{name}.geometry: {e}"));
            }
        }
        self.validate_sweep(&mut errors);
        if errors.is_empty() {
            Ok(())
        } else {
            Err(CliError::Invalid(errors))
        }
    }

    fn validate_sweep(&self, errors: &mut Vec<String>) {
        let s = &self.sweep;
        if s.points < 2 {
            errors.push(format!("sweep.points must be at least 2, got {}", s.points));
        }
        if !s.start.is_finite() || !s.stop.is_finite() {
            errors.push("sweep.start and sweep.stop must be finite".to_string());
        }
        if s.variable == Variable::Modulation {
            errors.push("sweep.variable: modulation can only be a series".to_string());
        }
        if s.scale == Scale::LinearDb && !s.variable.is_db() {
            errors.push(format!("sweep.scale: linear-db needs a dB variable, {} is not", s.variable.name()));
        }
        if s.scale == Scale::Log && !(s.start > 0.0 && s.stop > 0.0) {
            errors.push("sweep.scale: log needs positive start and stop".to_string());
        }
        if s.variable.is_db() && s.scale == Scale::Linear && !(s.start > 0.0 && s.stop > 0.0) {
            errors.push(format!("sweep: linear {} values are ratios and must be positive", s.variable.name()));
        }
        if s.variable != Variable::Modulation && s.points >= 2 {
            for v in s.values() {
                if let Some(m) = numeric_problem(s.variable, s.natural(v)) {
                    errors.push(format!("sweep: {m}"));
                    break;
                }
            }
        }
        if s.hop != HopSelect::Both && !s.variable.per_hop() {
            errors.push(format!("sweep.hop: {} applies to both hops", s.variable.name()));
        }
        if let Some(series) = &self.series {
            if series.values.is_empty() {
                errors.push("series.values must not be empty".to_string());
            }
            if series.hop != HopSelect::Both && !series.variable.per_hop() {
                errors.push(format!("series.hop: {} applies to both hops", series.variable.name()));
            }
            if series.variable == s.variable && (series.hop == s.hop || series.hop == HopSelect::Both || s.hop == HopSelect::Both) {
                errors.push(format!("series and sweep both set {}", s.variable.name()));
            }
            for (i, v) in series.values.iter().enumerate() {
                check_value(series.variable, v, &format!("series.values[{i}]"), errors);
                if series.variable == Variable::Carrier {
                    if let Some(ghz) = v.number() {
                        if let Err(e) = self.carrier.profile(ghz) {
                            errors.push(format!("series.values[{i}]: {e}"));
                        }
                    }
                }
            }
        }
        if s.variable == Variable::Carrier && s.points >= 2 {
            for v in s.values() {
                if let Err(e) = self.carrier.profile(v) {
                    errors.push(format!("sweep: {e}"));
                    break;
                }
            }
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| CliError::Serialize(e.to_string()))
    }

    /// Set `var` on the hops selected by `hop`. `value` is in the unit the
    /// scenario stores (dB for SNRs, dBm for power).
    pub fn apply(&mut self, var: Variable, hop: HopSelect, value: &SeriesValue) -> Result<()> {
        if var == Variable::Modulation {
            let SeriesValue::Text(s) = value else {
                return Err(CliError::Invalid(vec![format!("modulation must be a name, got {value}")]));
            };
            self.modulation = s.parse()?;
            return Ok(());
        }
        let x = value
            .number()
            .ok_or_else(|| CliError::Invalid(vec![format!("{} needs a number, got {value}", var.name())]))?;
        for (i, h) in [&mut self.hop1, &mut self.hop2].into_iter().enumerate() {
            if !hop.covers(i) {
                continue;
            }
            match var {
                Variable::Snr => h.snr_db = Some(x),
                Variable::InterferenceSnr => {
                    h.interference_snr_db = x;
                    h.sir_db = None;
                }
                Variable::Rho => h.rho = x,
                Variable::Antennas => h.antennas = x.round() as u32,
                Variable::Distance => h.geometry.distance = x,
                Variable::Speed => h.geometry.speed = x,
                _ => {}
            }
        }
        match var {
            Variable::Delta => self.blockage = BlockageModel::Exponential { delta: x },
            Variable::Power => self.power_dbm = x,
            Variable::Epsilon => self.epsilon = x,
            Variable::Blocks => self.blocks = x.round() as usize,
            Variable::Threshold => self.threshold_db = x,
            Variable::Carrier => self.carrier.ghz = x,
            _ => {}
        }
        Ok(())
    }
}
