use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Numerical tolerances used by validation and decision procedures.
///
/// Relative tolerances are scaled by a norm or a spectral diameter at the
/// point of use; the doc on each field says which.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Max entry of `A - A^dag`, relative to the Frobenius norm of `A`.
    pub hermiticity: f64,
    /// Absolute bound on `|U U^dag - I|`.
    pub unitarity: f64,
    /// Absolute bound on `| |psi| - 1 |`.
    pub normalization: f64,
    /// Eigenvalues closer than this times the spectral diameter share a cluster.
    pub cluster: f64,
    /// Imaginary part of an expectation, relative to the operator's Frobenius norm.
    pub imag_expectation: f64,
    /// `born_check` verdict threshold on the max element deviation.
    pub born: f64,
    /// Singular values below this times the largest are discarded.
    pub pinv_cutoff: f64,
    /// Unbiasing is feasible when the residual is below this times the
    /// spectral diameter of the measured observable.
    pub feasibility: f64,
    /// Negative radicands above `-radicand` are clamped to zero.
    pub radicand: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            hermiticity: 1e-12,
            unitarity: 1e-10,
            normalization: 1e-12,
            cluster: 1e-8,
            imag_expectation: 1e-12,
            born: 1e-8,
            pinv_cutoff: 1e-12,
            feasibility: 1e-8,
            radicand: 1e-10,
        }
    }
}

impl Tolerances {
    pub const KEYS: [&'static str; 9] = [
        "hermiticity",
        "unitarity",
        "normalization",
        "cluster",
        "imag_expectation",
        "born",
        "pinv_cutoff",
        "feasibility",
        "radicand",
    ];

    /// Override one tolerance by name.
    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        if !(value.is_finite() && value >= 0.0) {
            return Err(Error::Config(format!(
                "tolerance {key} must be a finite non-negative number, got {value}"
            )));
        }
        let slot = match key {
            "hermiticity" => &mut self.hermiticity,
            "unitarity" => &mut self.unitarity,
            "normalization" => &mut self.normalization,
            "cluster" => &mut self.cluster,
            "imag_expectation" => &mut self.imag_expectation,
            "born" => &mut self.born,
            "pinv_cutoff" => &mut self.pinv_cutoff,
            "feasibility" => &mut self.feasibility,
            "radicand" => &mut self.radicand,
            _ => {
                return Err(Error::Config(format!(
                    "unknown tolerance key {key:?}; expected one of {}",
                    Self::KEYS.join(", ")
                )))
            }
        };
        *slot = value;
        Ok(())
    }

    /// Parse a `KEY=VAL` override and apply it.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (key, val) = spec
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected KEY=VAL, got {spec:?}")))?;
        let val: f64 = val
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("tolerance value {val:?} is not a number")))?;
        self.set(key.trim(), val)
    }
}
