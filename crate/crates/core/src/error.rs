use std::fmt;

use serde::Serialize;
use thiserror::Error;

/// Hypotheses a user system has to satisfy before a quantization lattice can be built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Hypothesis {
    /// Regular value and properness of the joint symbol.
    H1,
    /// Periodic joint flow with one lattice of periods on the whole level.
    H2,
    /// Subprincipal cycle integrals depend only on the period.
    H3Prime,
    /// Connected level set.
    H4,
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Hypothesis::H1 => "H1",
            Hypothesis::H2 => "H2",
            Hypothesis::H3Prime => "H'3",
            Hypothesis::H4 => "H4",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("level point search did not converge after {iterations} iterations (residual {residual:e})")]
    RootFind { iterations: usize, residual: f64 },

    #[error("integration failed at s = {at}: {reason}")]
    Integration { at: f64, reason: String },

    #[error("no joint period found within |t| <= {t_max}")]
    NoPeriod { t_max: f64 },

    #[error("hypothesis {hypothesis} violated: {detail}")]
    HypothesisViolation { hypothesis: Hypothesis, detail: String },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("degenerate Lagrangian frame: {0}")]
    Frame(String),

    #[error("frame loop undersampled: {0}")]
    Undersampled(String),

    #[error("Monte Carlo sampler starved: acceptance rate {rate:e} over {samples} samples")]
    SamplerStarvation { rate: f64, samples: usize },

    #[error("unsupported model/backend combination: {0}")]
    Unsupported(String),

    #[error("basis truncation too small: {0}")]
    Truncation(String),

    #[error("commutator residual {residual:e} exceeds tolerance {tol:e}")]
    Commutator { residual: f64, tol: f64 },

    #[error("eigenvalue cluster ambiguity: {0}")]
    Degeneracy(String),

    #[error("multiplicity cubes overlap: half-width {half_width:e} >= half lattice gap {half_gap:e}")]
    WindowOverlap { half_width: f64, half_gap: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn violation(hypothesis: Hypothesis, detail: impl Into<String>) -> Self {
        Error::HypothesisViolation { hypothesis, detail: detail.into() }
    }

    /// Which hypothesis, if any, this error reports as violated.
    pub fn hypothesis(&self) -> Option<Hypothesis> {
        match self {
            Error::HypothesisViolation { hypothesis, .. } => Some(*hypothesis),
            Error::NoPeriod { .. } => Some(Hypothesis::H2),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
