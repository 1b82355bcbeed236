//! Model parameters and unit handling.
//!
//! All external inputs use oceanographic units (Sv for fluxes, years for
//! the delay). Internally everything is kept in m³, years and psu, so the
//! Sv fields are converted once at ingestion and never again.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::ParamsError;

/// Seconds per 365-day year.
pub const SECONDS_PER_YEAR: f64 = 3.1536e7;

/// Conversion factor from Sverdrup (10⁶ m³ s⁻¹) to m³ yr⁻¹.
pub const SV_TO_M3_PER_YR: f64 = SECONDS_PER_YEAR * 1e6;

/// Flat config record in external units. Unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    /// Hydraulic constant, m³ yr⁻¹.
    pub k: f64,
    /// Thermal expansion coefficient, K⁻¹.
    pub alpha: f64,
    /// Haline expansion coefficient, psu⁻¹.
    pub beta: f64,
    /// Reference salinity, psu.
    pub s0: f64,
    /// Box volume, m³.
    pub vol: f64,
    /// Freshwater flux into the southern box, Sv.
    pub f1_sv: f64,
    /// Freshwater flux out of the northern box, Sv.
    pub f2_sv: f64,
    /// Imposed north-south temperature gradient, K.
    pub t_star: f64,
    /// Zonal delayed-feedback strength, Sv.
    pub sigma_sv: f64,
    /// Delay time, yr.
    pub tau_yr: f64,
}

/// Validated model parameters in internal units (m³, yr, psu, K).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub k: f64,
    pub alpha: f64,
    pub beta: f64,
    pub s0: f64,
    pub vol: f64,
    /// m³ yr⁻¹
    pub f1: f64,
    /// m³ yr⁻¹
    pub f2: f64,
    pub t_star: f64,
    /// m³ yr⁻¹
    pub sigma: f64,
    /// yr
    pub tau: f64,
}

/// Sweepable control parameters, addressed in external units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    F1,
    F2,
    Sigma,
    Tau,
    TStar,
}

impl Axis {
    pub fn name(&self) -> &'static str {
        match self {
            Axis::F1 => "f1_sv",
            Axis::F2 => "f2_sv",
            Axis::Sigma => "sigma_sv",
            Axis::Tau => "tau_yr",
            Axis::TStar => "t_star",
        }
    }
}

impl ModelParams {
    pub fn from_config(cfg: &ParamsConfig) -> Result<Self, ParamsError> {
        let fields = [
            ("k", cfg.k),
            ("alpha", cfg.alpha),
            ("beta", cfg.beta),
            ("s0", cfg.s0),
            ("vol", cfg.vol),
            ("f1_sv", cfg.f1_sv),
            ("f2_sv", cfg.f2_sv),
            ("t_star", cfg.t_star),
            ("sigma_sv", cfg.sigma_sv),
            ("tau_yr", cfg.tau_yr),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(ParamsError::NonFiniteValue(name));
            }
        }
        if cfg.vol <= 0.0 {
            return Err(ParamsError::NegativeVolume(cfg.vol));
        }
        if cfg.tau_yr < 0.0 {
            return Err(ParamsError::NegativeDelay(cfg.tau_yr));
        }
        if cfg.sigma_sv < 0.0 {
            return Err(ParamsError::InvalidValue("sigma_sv must be >= 0"));
        }
        if cfg.k <= 0.0 {
            return Err(ParamsError::InvalidValue("k must be > 0"));
        }
        if cfg.beta <= 0.0 {
            return Err(ParamsError::InvalidValue("beta must be > 0"));
        }
        Ok(ModelParams {
            k: cfg.k,
            alpha: cfg.alpha,
            beta: cfg.beta,
            s0: cfg.s0,
            vol: cfg.vol,
            f1: cfg.f1_sv * SV_TO_M3_PER_YR,
            f2: cfg.f2_sv * SV_TO_M3_PER_YR,
            t_star: cfg.t_star,
            sigma: cfg.sigma_sv * SV_TO_M3_PER_YR,
            tau: cfg.tau_yr,
        })
    }

    pub fn from_json_str(s: &str) -> Result<Self, ParamsError> {
        let cfg: ParamsConfig =
            serde_json::from_str(s).map_err(|e| ParamsError::from_serde(&e))?;
        Self::from_config(&cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ParamsError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ParamsError::Io(path.display().to_string(), e.to_string()))?;
        Self::from_json_str(&text)
    }

    /// Round-trips back to external units.
    pub fn to_config(&self) -> ParamsConfig {
        ParamsConfig {
            k: self.k,
            alpha: self.alpha,
            beta: self.beta,
            s0: self.s0,
            vol: self.vol,
            f1_sv: self.f1 / SV_TO_M3_PER_YR,
            f2_sv: self.f2 / SV_TO_M3_PER_YR,
            t_star: self.t_star,
            sigma_sv: self.sigma / SV_TO_M3_PER_YR,
            tau_yr: self.tau,
        }
    }

    pub fn get_axis(&self, axis: Axis) -> f64 {
        match axis {
            Axis::F1 => self.f1 / SV_TO_M3_PER_YR,
            Axis::F2 => self.f2 / SV_TO_M3_PER_YR,
            Axis::Sigma => self.sigma / SV_TO_M3_PER_YR,
            Axis::Tau => self.tau,
            Axis::TStar => self.t_star,
        }
    }

    /// Returns a copy with the given axis set (external units: Sv, yr, K).
    pub fn with_axis(&self, axis: Axis, value: f64) -> ModelParams {
        let mut p = *self;
        match axis {
            Axis::F1 => p.f1 = value * SV_TO_M3_PER_YR,
            Axis::F2 => p.f2 = value * SV_TO_M3_PER_YR,
            Axis::Sigma => p.sigma = (value * SV_TO_M3_PER_YR).max(0.0),
            Axis::Tau => p.tau = value.max(0.0),
            Axis::TStar => p.t_star = value,
        }
        p
    }

    pub fn f1_sv(&self) -> f64 {
        self.f1 / SV_TO_M3_PER_YR
    }

    pub fn sigma_sv(&self) -> f64 {
        self.sigma / SV_TO_M3_PER_YR
    }

    /// The parameter values used throughout the reference figures.
    pub fn reference_defaults() -> ModelParams {
        ModelParams {
            k: 23e17,
            alpha: 1.7e-4,
            beta: 0.8e-3,
            s0: 35.0,
            vol: 3.5e17,
            f1: -0.22 * SV_TO_M3_PER_YR,
            f2: 1.0 * SV_TO_M3_PER_YR,
            t_star: 0.0,
            sigma: 11.0 * SV_TO_M3_PER_YR,
            tau: 900.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_cfg() -> ParamsConfig {
        ParamsConfig {
            k: 23e17,
            alpha: 1.7e-4,
            beta: 0.8e-3,
            s0: 35.0,
            vol: 3.5e17,
            f1_sv: -0.22,
            f2_sv: 1.0,
            t_star: 0.0,
            sigma_sv: 11.0,
            tau_yr: 900.0,
        }
    }

    #[test]
    fn sv_conversion_constant() {
        let mut cfg = base_cfg();
        cfg.f2_sv = 1.0;
        let p = ModelParams::from_config(&cfg).unwrap();
        assert_eq!(p.f2, 3.1536e13);
    }

    #[test]
    fn sigma_zero_disables_feedback() {
        let mut cfg = base_cfg();
        cfg.sigma_sv = 0.0;
        let p = ModelParams::from_config(&cfg).unwrap();
        assert_eq!(p.sigma, 0.0);
    }

    #[test]
    fn paper_constants_accepted_verbatim() {
        let p = ModelParams::from_config(&base_cfg()).unwrap();
        assert_eq!(p.k, 23e17);
        assert_eq!(p.alpha, 1.7e-4);
        assert_eq!(p.beta, 0.8e-3);
        assert_eq!(p.s0, 35.0);
        assert_eq!(p.vol, 3.5e17);
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = r#"{"k":1e17,"alpha":1.7e-4,"beta":8e-4,"s0":35,"vol":3.5e17,
            "f1_sv":-0.2,"f2_sv":1,"t_star":0,"sigma_sv":0,"tau_yr":0,"bogus":1}"#;
        assert!(matches!(
            ModelParams::from_json_str(text),
            Err(ParamsError::UnknownKey(_))
        ));
    }

    #[test]
    fn rejects_missing_key() {
        let text = r#"{"k":1e17,"alpha":1.7e-4,"beta":8e-4,"s0":35,"vol":3.5e17,
            "f1_sv":-0.2,"f2_sv":1,"t_star":0,"sigma_sv":0}"#;
        assert!(matches!(
            ModelParams::from_json_str(text),
            Err(ParamsError::MissingKey(_))
        ));
    }

    #[test]
    fn rejects_nonfinite_and_negative() {
        let mut cfg = base_cfg();
        cfg.vol = -1.0;
        assert!(matches!(
            ModelParams::from_config(&cfg),
            Err(ParamsError::NegativeVolume(_))
        ));
        let mut cfg = base_cfg();
        cfg.tau_yr = -5.0;
        assert!(matches!(
            ModelParams::from_config(&cfg),
            Err(ParamsError::NegativeDelay(_))
        ));
        let mut cfg = base_cfg();
        cfg.alpha = f64::NAN;
        assert!(matches!(
            ModelParams::from_config(&cfg),
            Err(ParamsError::NonFiniteValue("alpha"))
        ));
    }

    #[test]
    fn axis_roundtrip() {
        let p = ModelParams::reference_defaults();
        let q = p.with_axis(Axis::F1, -0.208);
        assert!((q.get_axis(Axis::F1) + 0.208).abs() < 1e-15);
        assert_eq!(q.tau, p.tau);
    }
}
