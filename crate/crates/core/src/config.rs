//! Experiment configuration, read from a JSON object. Every key is optional
//! and falls back to the defaults below; unknown keys are rejected.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atomic::{AtomicStructure, MagneticField, Term};
use crate::rydberg::{self, LineShape, RydbergConfig, WeightsMode};
use crate::transport::{TrapConfig, DEFAULT_KAPPA};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BeamConfig {
    pub waist_m: f64,
    pub center_m: f64,
    /// On-axis Rabi frequency Ω₀/2π, Hz.
    pub omega0_hz: f64,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig { waist_m: 4e-6, center_m: 0.0, omega0_hz: 80e3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RydbergSection {
    pub r0_hz: f64,
    pub sigma_hz: f64,
    pub beta: f64,
    pub weights_mode: WeightsMode,
}

impl Default for RydbergSection {
    fn default() -> Self {
        RydbergSection {
            r0_hz: rydberg::DEFAULT_R0,
            sigma_hz: rydberg::DEFAULT_SIGMA,
            beta: rydberg::DEFAULT_BRANCH_D32,
            weights_mode: WeightsMode::Equal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub b_field_t: f64,
    pub omega_ax_hz: f64,
    pub omega_rad_hz: f64,
    pub n_ions: usize,
    pub beam: BeamConfig,
    pub pulse_fidelity: f64,
    pub pump393_fidelity: f64,
    pub pump397_fidelity: f64,
    pub rydberg: RydbergSection,
    pub vuv_unswitched: bool,
    pub kappa_m_per_v: f64,
    pub filter_cutoff_hz: f64,
    /// Measured Landé factors overriding the formula, keyed by term label.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub g_overrides: BTreeMap<String, f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            b_field_t: 0.28e-3,
            omega_ax_hz: 600e3,
            omega_rad_hz: 1.5e6,
            n_ions: 1,
            beam: BeamConfig::default(),
            pulse_fidelity: 0.9,
            pump393_fidelity: 0.9,
            pump397_fidelity: 1.0,
            rydberg: RydbergSection::default(),
            vuv_unswitched: false,
            kappa_m_per_v: DEFAULT_KAPPA,
            filter_cutoff_hz: 50e3,
            g_overrides: BTreeMap::new(),
        }
    }
}

fn unit_interval(name: &str, v: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(ConfigError::Invalid(format!("{name}={v} outside [0, 1]")))
    }
}

fn positive(name: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::Invalid(format!("{name}={v} must be positive")))
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.b_field_t >= 0.0) {
            return Err(ConfigError::Invalid("b_field_t must be >= 0".into()));
        }
        positive("omega_ax_hz", self.omega_ax_hz)?;
        positive("omega_rad_hz", self.omega_rad_hz)?;
        if self.n_ions == 0 {
            return Err(ConfigError::Invalid("n_ions must be >= 1".into()));
        }
        positive("beam.waist_m", self.beam.waist_m)?;
        positive("beam.omega0_hz", self.beam.omega0_hz)?;
        if !self.beam.center_m.is_finite() {
            return Err(ConfigError::Invalid("beam.center_m must be finite".into()));
        }
        unit_interval("pulse_fidelity", self.pulse_fidelity)?;
        unit_interval("pump393_fidelity", self.pump393_fidelity)?;
        unit_interval("pump397_fidelity", self.pump397_fidelity)?;
        unit_interval("rydberg.beta", self.rydberg.beta)?;
        positive("rydberg.sigma_hz", self.rydberg.sigma_hz)?;
        if !(self.rydberg.r0_hz >= 0.0) {
            return Err(ConfigError::Invalid("rydberg.r0_hz must be >= 0".into()));
        }
        positive("kappa_m_per_v", self.kappa_m_per_v.abs())?;
        positive("filter_cutoff_hz", self.filter_cutoff_hz)?;
        self.atomic_structure()?;
        self.line_shape()?;
        Ok(())
    }

    pub fn field(&self) -> MagneticField {
        MagneticField::new(self.b_field_t).expect("validated")
    }

    pub fn trap(&self) -> TrapConfig {
        TrapConfig::calcium(self.omega_ax_hz, self.omega_rad_hz)
    }

    pub fn atomic_structure(&self) -> Result<AtomicStructure, ConfigError> {
        let mut s = AtomicStructure::default();
        for (label, g) in &self.g_overrides {
            let term = Term::ALL
                .into_iter()
                .find(|t| t.label() == label)
                .ok_or_else(|| ConfigError::Invalid(format!("unknown term `{label}` in g_overrides")))?;
            s = s.with_override(term, *g);
        }
        Ok(s)
    }

    pub fn rydberg_config(&self) -> RydbergConfig {
        RydbergConfig {
            r0: self.rydberg.r0_hz,
            branch_d32: self.rydberg.beta,
            weights_mode: self.rydberg.weights_mode.clone(),
            ..RydbergConfig::default()
        }
    }

    pub fn line_shape(&self) -> Result<LineShape, ConfigError> {
        LineShape::build(
            &self.atomic_structure()?,
            MagneticField::new(self.b_field_t).map_err(|e| ConfigError::Invalid(e.to_string()))?,
            self.rydberg.sigma_hz,
            &self.rydberg.weights_mode,
        )
        .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// On-axis angular Rabi frequency, rad/s.
    pub fn omega0(&self) -> f64 {
        2.0 * PI * self.beam.omega0_hz
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let c = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(c, ExperimentConfig::default());
    }

    #[test]
    fn full_document() {
        let text = r#"{
            "b_field_t": 0.00028, "omega_ax_hz": 600000, "omega_rad_hz": 1500000,
            "n_ions": 3, "beam": {"waist_m": 4e-6, "center_m": 0, "omega0_hz": 80000},
            "pulse_fidelity": 0.9, "pump393_fidelity": 0.9, "pump397_fidelity": 1.0,
            "rydberg": {"r0_hz": 200, "sigma_hz": 3.8e6, "beta": 0.08,
                        "weights_mode": {"custom": {"D5/2:-5/2->F7/2:-7/2": 1.0}}},
            "vuv_unswitched": true, "kappa_m_per_v": 5e-5, "filter_cutoff_hz": 50000
        }"#;
        let c = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(c.n_ions, 3);
        assert!(c.vuv_unswitched);
        assert!(matches!(c.rydberg.weights_mode, WeightsMode::Custom(_)));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"b_field": 1}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"beam": {"waist": 1}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"rydberg": {"tau": 1}}"#).is_err());
    }

    #[test]
    fn ranges_checked() {
        assert!(ExperimentConfig::from_json(r#"{"pulse_fidelity": 1.5}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"n_ions": 0}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"rydberg": {"sigma_hz": 0}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"g_overrides": {"P1/2": 0.66}}"#).is_err());
        let ok = ExperimentConfig::from_json(r#"{"g_overrides": {"D5/2": 1.2003}}"#).unwrap();
        assert_eq!(ok.atomic_structure().unwrap().g(Term::D52), 1.2003);
    }

    #[test]
    fn weights_mode_spelling() {
        let c = ExperimentConfig::from_json(r#"{"rydberg": {"weights_mode": "equal"}}"#).unwrap();
        assert_eq!(c.rydberg.weights_mode, WeightsMode::Equal);
    }
}
