//! Run configuration: one flat TOML table with the unit in every key name.
//!
//! ```toml
//! dt_s = 1.0
//! sigma_a2_m2s4 = 1.0
//! q_max_scale_m2 = 1e8
//! q_min_scale_m2 = 1.0
//! k_gain = 10.0
//! lpa = 0.0
//! confidence = 0.95
//! ```
//!
//! Every key is optional; missing keys take the defaults below. Unknown keys are rejected so
//! a typo cannot silently fall back to a default.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::{McConfig, UlpaConfig};
use crate::filter::{FilterConfig, ProgressMode};
use crate::rta::RtaConfig;
use crate::tuning::TuneConfig;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("config: {0}")]
    Parse(String),
    #[error("config: {key} {reason}")]
    Invalid { key: &'static str, reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ProgressKey {
    #[default]
    Time,
    Distance,
}

/// Fully resolved run parameters. Serializes back to the same flat form, which is what run
/// manifests record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dt_s: f64,
    /// Process noise: white-noise acceleration variance (the filter's R).
    pub sigma_a2_m2s4: f64,
    /// Measurement noise Q_max = q_max_scale · I (the filter's Q, uncorrected end).
    pub q_max_scale_m2: f64,
    /// Measurement noise Q_min = q_min_scale · I (fully corrected end).
    pub q_min_scale_m2: f64,
    /// Full Q_max, row-major, overriding `q_max_scale_m2` when present.
    pub q_max_m2: Option<[f64; 9]>,
    pub k_gain: f64,
    pub lpa: f64,
    pub progress_mode: ProgressKey,

    pub confidence: f64,
    pub delta: f64,
    /// Defaults to the plan's mean cruise speed.
    pub v_bar0_mps: Option<f64>,

    pub ulpa_growth_rate_s_per_s: f64,
    pub ulpa_activation_fraction: f64,
    pub ulpa_rta_tolerance_s: f64,
    pub gate_fraction: f64,

    pub mc_samples: usize,
    pub mc_control_error_rel: f64,
    pub mc_overrun_s: Option<f64>,

    pub seed: u64,

    pub tune_max_rms_m: f64,
    pub tune_train_fraction: f64,
    pub tune_align_window_s: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let f = FilterConfig::<f64>::default();
        let r = RtaConfig::<f64>::default();
        let u = UlpaConfig::<f64>::default();
        let t = TuneConfig::default();
        Self {
            dt_s: f.dt,
            sigma_a2_m2s4: f.sigma_a2,
            q_max_scale_m2: f.q_max_scale,
            q_min_scale_m2: f.q_min_scale,
            q_max_m2: None,
            k_gain: f.k_gain,
            lpa: f.lpa,
            progress_mode: ProgressKey::Time,
            confidence: r.confidence,
            delta: r.delta,
            v_bar0_mps: r.v_bar0,
            ulpa_growth_rate_s_per_s: u.growth_rate,
            ulpa_activation_fraction: u.activation_fraction,
            ulpa_rta_tolerance_s: u.rta_tolerance,
            gate_fraction: 2.0 / 3.0,
            mc_samples: 10_000,
            mc_control_error_rel: 0.0,
            mc_overrun_s: None,
            seed: 0,
            tune_max_rms_m: t.max_rms_m,
            tune_train_fraction: t.train_fraction,
            tune_align_window_s: t.align_window_s,
        }
    }
}

impl RunConfig {
    pub fn parse(raw: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(raw).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |key, reason: &str| {
            Err(ConfigError::Invalid {
                key,
                reason: reason.to_string(),
            })
        };
        self.filter()
            .validate()
            .map_err(|e| ConfigError::Invalid {
                key: "filter",
                reason: e.to_string(),
            })?;
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return invalid("confidence", "must lie in (0, 1)");
        }
        if !(self.delta > 0.0) {
            return invalid("delta", "must be positive");
        }
        if let Some(v) = self.v_bar0_mps {
            if !(v > 0.0) {
                return invalid("v_bar0_mps", "must be positive");
            }
        }
        if !self.ulpa().is_valid() {
            return invalid("ulpa_*", "need 0 < activation < 1 and non-negative rate/tolerance");
        }
        if !(0.0..=1.0).contains(&self.gate_fraction) {
            return invalid("gate_fraction", "must lie in [0, 1]");
        }
        if self.mc_samples < 2 {
            return invalid("mc_samples", "must be at least 2");
        }
        if !(self.mc_control_error_rel >= 0.0) {
            return invalid("mc_control_error_rel", "must be non-negative");
        }
        if let Some(o) = self.mc_overrun_s {
            if !(o >= 0.0) {
                return invalid("mc_overrun_s", "must be non-negative");
            }
        }
        if !(self.tune_max_rms_m > 0.0) {
            return invalid("tune_max_rms_m", "must be positive");
        }
        if !(self.tune_train_fraction > 0.0 && self.tune_train_fraction <= 1.0) {
            return invalid("tune_train_fraction", "must lie in (0, 1]");
        }
        if !(self.tune_align_window_s > 0.0) {
            return invalid("tune_align_window_s", "must be positive");
        }
        Ok(())
    }

    pub fn filter(&self) -> FilterConfig<f64> {
        FilterConfig {
            dt: self.dt_s,
            sigma_a2: self.sigma_a2_m2s4,
            q_max_scale: self.q_max_scale_m2,
            q_min_scale: self.q_min_scale_m2,
            q_max_matrix: self.q_max_m2.map(|m| Matrix3::from_row_slice(&m)),
            k_gain: self.k_gain,
            lpa: self.lpa,
            progress_mode: match self.progress_mode {
                ProgressKey::Time => ProgressMode::Time,
                ProgressKey::Distance => ProgressMode::Distance,
            },
        }
    }

    pub fn rta(&self) -> RtaConfig<f64> {
        RtaConfig {
            confidence: self.confidence,
            delta: self.delta,
            v_bar0: self.v_bar0_mps,
        }
    }

    pub fn ulpa(&self) -> UlpaConfig<f64> {
        UlpaConfig {
            growth_rate: self.ulpa_growth_rate_s_per_s,
            activation_fraction: self.ulpa_activation_fraction,
            rta_tolerance: self.ulpa_rta_tolerance_s,
        }
    }

    pub fn monte_carlo(&self) -> McConfig<f64> {
        McConfig {
            samples: self.mc_samples,
            seed: self.seed,
            control_error_rel: self.mc_control_error_rel,
            overrun: self.mc_overrun_s,
        }
    }

    pub fn tune(&self) -> TuneConfig {
        TuneConfig {
            max_rms_m: self.tune_max_rms_m,
            train_fraction: self.tune_train_fraction,
            align_window_s: self.tune_align_window_s,
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.filter(), FilterConfig::default());
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = RunConfig {
            sigma_a2_m2s4: 0.25,
            q_max_m2: Some([100.0, 0.0, 0.0, 0.0, 100.0, 0.0, 0.0, 0.0, 50.0]),
            v_bar0_mps: Some(30.0),
            progress_mode: ProgressKey::Distance,
            ..RunConfig::default()
        };
        assert_eq!(RunConfig::parse(&cfg.to_toml()).unwrap(), cfg);
        assert_eq!(cfg.filter().q_max()[(2, 2)], 50.0);
    }

    #[test]
    fn rejects_unknown_and_invalid_keys() {
        assert!(matches!(RunConfig::parse("dt = 1.0"), Err(ConfigError::Parse(_))));
        assert!(RunConfig::parse("confidence = 1.5").is_err());
        assert!(RunConfig::parse("dt_s = -1.0").is_err());
        assert!(RunConfig::parse("progress_mode = \"space\"").is_err());
        assert!(RunConfig::parse("progress_mode = \"distance\"").is_ok());
    }
}
