//! Deterministic propagation layer: Doppler and Jakes correlation, path gain,
//! thermal noise, blockage probabilities and Nakagami shape tables.

use crate::error::{invalid, Result};
use crate::special::bessel_j0;
use crate::units::linear_to_db;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_4, PI};

pub const SPEED_OF_LIGHT: f64 = 3e8;

/// Attenuation figures of one mmWave band. Attenuations are totals in dB
/// over `reference_distance` metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CarrierProfile {
    pub f_c: f64,
    pub alpha_rain_los: f64,
    pub alpha_rain_nlos: f64,
    pub alpha_ox: f64,
    pub reference_distance: f64,
}

const BUILTIN: [(f64, f64, f64, f64); 4] = [
    (28.0, 0.18, 0.9, 0.04),
    (38.0, 0.26, 1.4, 0.03),
    (60.0, 0.44, 2.0, 3.2),
    (73.0, 0.6, 2.4, 0.09),
];

impl CarrierProfile {
    /// Built-in band at `ghz` (28, 38, 60 or 73).
    pub fn builtin(ghz: u32) -> Result<Self> {
        BUILTIN
            .iter()
            .find(|row| row.0 == ghz as f64)
            .map(|&(f, los, nlos, ox)| Self {
                f_c: f * 1e9,
                alpha_rain_los: los,
                alpha_rain_nlos: nlos,
                alpha_ox: ox,
                reference_distance: 200.0,
            })
            .ok_or_else(|| invalid(format!("no built-in carrier profile at {ghz} GHz")))
    }

    pub fn builtin_table() -> Vec<Self> {
        BUILTIN
            .iter()
            .map(|r| Self::builtin(r.0 as u32).expect("table row"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f_c > 0.0) || !self.f_c.is_finite() {
            return Err(invalid(format!("carrier frequency must be positive, got {}", self.f_c)));
        }
        if [self.alpha_rain_los, self.alpha_rain_nlos, self.alpha_ox]
            .iter()
            .any(|a| !(*a >= 0.0) || !a.is_finite())
        {
            return Err(invalid("attenuations must be non-negative"));
        }
        if !(self.reference_distance > 0.0) {
            return Err(invalid("reference distance must be positive"));
        }
        Ok(())
    }

    /// Combined oxygen and rain attenuation in dB per metre.
    pub fn attenuation_db_per_m(&self, los: bool) -> f64 {
        let rain = if los { self.alpha_rain_los } else { self.alpha_rain_nlos };
        (self.alpha_ox + rain) / self.reference_distance
    }
}

/// Geometry, antenna gains and receiver figures of one hop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HopGeometry {
    /// Link distance in metres.
    pub distance: f64,
    /// Vehicle speed in m/s.
    pub speed: f64,
    /// Angle between displacement and the relay direction, radians.
    pub angle: f64,
    /// Feedback delay in seconds.
    pub feedback_delay: f64,
    pub gain_tx_db: f64,
    pub gain_rx_db: f64,
    /// Bandwidth in Hz.
    pub bandwidth: f64,
    pub noise_density_dbm_hz: f64,
    pub noise_figure_db: f64,
}

impl Default for HopGeometry {
    fn default() -> Self {
        Self {
            distance: 50.0,
            speed: 10.0,
            angle: FRAC_PI_4,
            feedback_delay: 2e-3,
            gain_tx_db: 44.0,
            gain_rx_db: 44.0,
            bandwidth: 700e6,
            noise_density_dbm_hz: -142.0,
            noise_figure_db: 0.0,
        }
    }
}

impl HopGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.distance > 0.0) || !self.distance.is_finite() {
            return Err(invalid(format!("link distance must be positive, got {}", self.distance)));
        }
        if !(self.bandwidth > 0.0) || !self.bandwidth.is_finite() {
            return Err(invalid(format!("bandwidth must be positive, got {}", self.bandwidth)));
        }
        if !(self.speed >= 0.0) || !(self.feedback_delay >= 0.0) {
            return Err(invalid("speed and feedback delay must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BlockageModel {
    /// P_los = exp(-d / delta).
    Exponential { delta: f64 },
    /// P_los = min(18/d, 1)(1 - exp(-d/63)) + exp(-d/63).
    ThreePart,
}

impl BlockageModel {
    pub const SUBURBAN_DELTA: f64 = 200.0;
    pub const URBAN_DELTA: f64 = 63.0;

    pub fn suburban() -> Self {
        Self::Exponential { delta: Self::SUBURBAN_DELTA }
    }

    pub fn urban() -> Self {
        Self::Exponential { delta: Self::URBAN_DELTA }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Exponential { delta } if !(delta > 0.0) => {
                Err(invalid(format!("blockage delta must be positive, got {delta}")))
            }
            _ => Ok(()),
        }
    }
}

/// Nakagami shapes for LOS and NLOS signal and interference links.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NakagamiProfile {
    pub m_los: f64,
    pub m_nlos: f64,
    pub m_r_los: f64,
    pub m_r_nlos: f64,
}

impl Default for NakagamiProfile {
    fn default() -> Self {
        Self { m_los: 4.0, m_nlos: 2.0, m_r_los: 3.0, m_r_nlos: 1.0 }
    }
}

impl NakagamiProfile {
    /// Rayleigh LOS and worse-than-Rayleigh NLOS signal links.
    pub fn severe_scattering() -> Self {
        Self { m_los: 1.0, m_nlos: 0.5, ..Self::default() }
    }

    pub fn signal(&self, los: bool) -> f64 {
        if los {
            self.m_los
        } else {
            self.m_nlos
        }
    }

    pub fn interference(&self, los: bool) -> f64 {
        if los {
            self.m_r_los
        } else {
            self.m_r_nlos
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.m_los, self.m_nlos, self.m_r_los, self.m_r_nlos]
            .iter()
            .any(|m| !(*m > 0.0) || !m.is_finite())
        {
            return Err(invalid("Nakagami shapes must be positive"));
        }
        Ok(())
    }
}

/// Default interferer count per hop.
pub const DEFAULT_INTERFERERS: u32 = 7;

pub fn doppler_frequency(geom: &HopGeometry, f_c: f64) -> f64 {
    f_c * geom.speed * geom.angle.cos() / SPEED_OF_LIGHT
}

/// Jakes correlation J0(2 pi f_d tau_d)^2 between outdated and current CSI.
pub fn jakes_correlation(geom: &HopGeometry, f_c: f64) -> f64 {
    let j = bessel_j0(2.0 * PI * doppler_frequency(geom, f_c) * geom.feedback_delay);
    (j * j).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoherenceConvention {
    /// 1 / (2 f_d)
    Half,
    /// 1 / f_d
    Full,
}

pub fn coherence_time(f_d: f64, convention: CoherenceConvention) -> Result<f64> {
    if !(f_d.abs() > 0.0) || !f_d.is_finite() {
        return Err(invalid(format!("coherence time undefined for Doppler frequency {f_d}")));
    }
    let f = f_d.abs();
    Ok(match convention {
        CoherenceConvention::Half => 1.0 / (2.0 * f),
        CoherenceConvention::Full => 1.0 / f,
    })
}

pub fn free_space_loss_db(distance: f64, f_c: f64) -> f64 {
    20.0 * (4.0 * PI * distance * f_c / SPEED_OF_LIGHT).log10()
}

/// Average power gain of the hop in dB.
pub fn path_gain_db(geom: &HopGeometry, profile: &CarrierProfile, los: bool) -> f64 {
    geom.gain_tx_db + geom.gain_rx_db
        - free_space_loss_db(geom.distance, profile.f_c)
        - profile.attenuation_db_per_m(los) * geom.distance
}

pub fn noise_power_dbm(geom: &HopGeometry) -> f64 {
    linear_to_db(geom.bandwidth) + geom.noise_density_dbm_hz + geom.noise_figure_db
}

/// Average received SNR in dB for a transmit power in dBm.
pub fn average_snr_db(power_dbm: f64, geom: &HopGeometry, profile: &CarrierProfile, los: bool) -> f64 {
    power_dbm + path_gain_db(geom, profile, los) - noise_power_dbm(geom)
}

pub fn los_probability(model: &BlockageModel, d: f64) -> f64 {
    let d = d.max(0.0);
    match *model {
        BlockageModel::Exponential { delta } => (-d / delta).exp(),
        BlockageModel::ThreePart => {
            let e = (-d / 63.0).exp();
            if d <= 18.0 {
                return 1.0;
            }
            ((18.0 / d) * (1.0 - e) + e).clamp(0.0, 1.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_table_rows() {
        let p = CarrierProfile::builtin(60).unwrap();
        assert_eq!((p.alpha_rain_los, p.alpha_rain_nlos, p.alpha_ox), (0.44, 2.0, 3.2));
        assert!(CarrierProfile::builtin(5).is_err());
        assert_eq!(CarrierProfile::builtin_table().len(), 4);
    }

    #[test]
    fn zero_delay_gives_full_correlation() {
        let g = HopGeometry { feedback_delay: 0.0, ..HopGeometry::default() };
        assert_eq!(jakes_correlation(&g, 73e9), 1.0);
    }

    #[test]
    fn three_part_saturates_near_transmitter() {
        for d in [0.0, 1.0, 17.9, 18.0] {
            assert_eq!(los_probability(&BlockageModel::ThreePart, d), 1.0);
        }
    }
}
