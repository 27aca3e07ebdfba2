//! Monte Carlo against analytical validation campaigns.

use mmrelay_core::montecarlo::{validate_against_analytical, CheckRecord, ValidationPlan};
use mmrelay_core::sinr::Mode;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Engine, Metric, ScenarioConfig};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationRecord {
    pub sweep_var: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub series: Option<String>,
    #[serde(flatten)]
    pub check: CheckRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub scenario: String,
    /// Mode whose checks decide the verdict.
    pub mode: Mode,
    pub sigmas: f64,
    pub published_pass: bool,
    pub renormalized_pass: bool,
    pub pass: bool,
    /// Points the engines could not evaluate.
    pub errors: Vec<String>,
    pub checks: Vec<ValidationRecord>,
}

impl ValidationReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map(|mut s| {
                s.push('\n');
                s
            })
            .map_err(|e| CliError::Serialize(e.to_string()))
    }
}

/// Compare both engines at every sweep point. Symbol error is checked when
/// `ser` is listed, outage at the configured threshold otherwise or when
/// `outage` is listed too.
pub fn run_validation(cfg: &ScenarioConfig) -> Result<ValidationReport> {
    if cfg.engine != Engine::Both {
        return Err(CliError::Usage("validate needs engine = \"both\"".into()));
    }
    cfg.validate()?;
    let symbol_error = cfg.metrics.contains(&Metric::Ser);
    let outage = cfg.metrics.contains(&Metric::Outage) || !symbol_error;
    let sigmas = 3.0;
    let results: Vec<(Vec<ValidationRecord>, Option<String>)> = cfg
        .points()
        .par_iter()
        .map(|p| {
            let series = p.series.as_ref().map(|v| format!("{}={}", cfg.series.as_ref().map(|s| s.label()).unwrap_or_default(), v));
            let run = || -> Result<Vec<ValidationRecord>> {
                let r = cfg.resolve(p)?;
                let plan = ValidationPlan { thresholds: if outage { vec![r.threshold] } else { Vec::new() }, symbol_error, sigmas };
                let report = validate_against_analytical(&r.trial_config(), &plan)?;
                Ok(report
                    .checks
                    .into_iter()
                    .map(|check| ValidationRecord { sweep_var: cfg.sweep.label(), value: p.value, series: series.clone(), check })
                    .collect())
            };
            match run() {
                Ok(records) => (records, None),
                Err(e) => (Vec::new(), Some(format!("{}={}: {e}", cfg.sweep.label(), p.value))),
            }
        })
        .collect();
    let mut checks = Vec::new();
    let mut errors = Vec::new();
    for (records, err) in results {
        checks.extend(records);
        errors.extend(err);
    }
    let published_pass = checks.iter().all(|c| c.check.pass_published);
    let renormalized_pass = checks.iter().all(|c| c.check.pass_renormalized);
    let mode_pass = match cfg.mode {
        Mode::Published => published_pass,
        Mode::Renormalized => renormalized_pass,
    };
    Ok(ValidationReport {
        scenario: cfg.name.clone(),
        mode: cfg.mode,
        sigmas,
        published_pass,
        renormalized_pass,
        pass: mode_pass && errors.is_empty(),
        errors,
        checks,
    })
}
