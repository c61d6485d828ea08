//! Scenario documents: the JSON description of a configuration and its
//! integrator settings, merged with command-line overrides and validated
//! before any command runs.

use std::f64::consts::FRAC_PI_2;

use curved_nbody::dynamics::IntegratorConfig;
use curved_nbody::geometry::{regular_polygon, MassVector, SphericalConfig};
use serde::Deserialize;

use crate::error::{invalid, CliError};

/// Raw scenario fields as they appear in a file; every field is optional so
/// that flags can fill or override them.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub n: Option<usize>,
    pub masses: Option<Vec<f64>>,
    pub phi: Option<Vec<f64>>,
    pub theta: Option<Vec<f64>>,
    pub alpha: Option<f64>,
    pub integrator: Option<IntegratorFields>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorFields {
    pub dt: Option<f64>,
    #[serde(alias = "T")]
    pub t_end: Option<f64>,
    pub sample_stride: Option<usize>,
    pub stop_deviation: Option<f64>,
}

impl ScenarioFile {
    /// Reads a scenario document; syntax and type errors report their position.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Parse {
            message: e.to_string(),
            line: e.line(),
            column: e.column(),
        })
    }

    /// Fields set in `other` replace those in `self`.
    pub fn overlay(mut self, other: ScenarioFile) -> Self {
        self.n = other.n.or(self.n);
        self.masses = other.masses.or(self.masses);
        self.phi = other.phi.or(self.phi);
        self.theta = other.theta.or(self.theta);
        self.alpha = other.alpha.or(self.alpha);
        self.seed = other.seed.or(self.seed);
        self.integrator = match (self.integrator, other.integrator) {
            (Some(a), Some(b)) => Some(IntegratorFields {
                dt: b.dt.or(a.dt),
                t_end: b.t_end.or(a.t_end),
                sample_stride: b.sample_stride.or(a.sample_stride),
                stop_deviation: b.stop_deviation.or(a.stop_deviation),
            }),
            (a, b) => b.or(a),
        };
        self
    }

    pub fn is_empty(&self) -> bool {
        *self == ScenarioFile::default()
    }

    pub fn resolve(self) -> Result<Scenario, CliError> {
        let n = match (self.n, &self.phi) {
            (Some(n), Some(phi)) if phi.len() != n => {
                return Err(CliError::Validation(format!(
                    "phi has {} entries but n = {n}",
                    phi.len()
                )))
            }
            (Some(n), _) => n,
            (None, Some(phi)) => phi.len(),
            (None, None) => {
                return Err(CliError::Validation(
                    "the number of bodies n is required".into(),
                ))
            }
        };
        if n < 2 {
            return Err(CliError::Validation(format!(
                "need at least two bodies, got n = {n}"
            )));
        }
        let explicit_phi = self.phi.is_some();
        let phi = match self.phi {
            Some(phi) => phi,
            None => regular_polygon(n).map_err(invalid)?.phi().to_vec(),
        };
        let explicit_theta = self.theta.is_some();
        let theta = self.theta.unwrap_or_else(|| vec![FRAC_PI_2; n]);
        let explicit_masses = self.masses.is_some();
        let masses = match self.masses {
            Some(m) if m.len() != n => {
                return Err(CliError::Validation(format!(
                    "masses has {} entries but n = {n}",
                    m.len()
                )))
            }
            Some(m) => MassVector::new(m).map_err(invalid)?,
            None => MassVector::uniform(n),
        };
        let config = SphericalConfig::new(phi, theta).map_err(invalid)?;
        let alpha = self.alpha.unwrap_or(0.0);
        if !alpha.is_finite() {
            return Err(CliError::Validation(format!(
                "alpha must be finite, got {alpha}"
            )));
        }
        let defaults = IntegratorConfig::default();
        let fields = self.integrator.unwrap_or_default();
        let integrator = IntegratorConfig {
            dt: fields.dt.unwrap_or(defaults.dt),
            t_end: fields.t_end.unwrap_or(defaults.t_end),
            sample_stride: fields.sample_stride.unwrap_or(defaults.sample_stride),
            stop_deviation: fields.stop_deviation.or(defaults.stop_deviation),
        };
        integrator.validate().map_err(invalid)?;
        Ok(Scenario {
            n,
            masses,
            config,
            alpha,
            integrator,
            seed: self.seed.unwrap_or(0),
            explicit_phi,
            explicit_theta,
            explicit_masses,
        })
    }
}

/// A validated scenario with defaults applied.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub n: usize,
    pub masses: MassVector,
    /// The explicit configuration, or the regular polygon on the equator.
    pub config: SphericalConfig,
    pub alpha: f64,
    pub integrator: IntegratorConfig,
    pub seed: u64,
    explicit_phi: bool,
    explicit_theta: bool,
    explicit_masses: bool,
}

impl Scenario {
    /// Commands that only know the unit-mass regular polygon refuse scenarios
    /// that describe something else rather than ignore the extra fields.
    pub fn require_polygon(&self, command: &str) -> Result<(), CliError> {
        let uniform = self.masses.as_slice().iter().all(|&m| m == 1.0);
        if self.explicit_phi || self.explicit_theta || (self.explicit_masses && !uniform) {
            return Err(CliError::Validation(format!(
                "`{command}` works on the unit-mass regular polygon; remove phi, theta and non-unit masses"
            )));
        }
        Ok(())
    }
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<Scenario, CliError> {
    ScenarioFile::from_json(text)?.resolve()
}
