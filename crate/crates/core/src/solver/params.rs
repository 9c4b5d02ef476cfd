use serde::{Deserialize, Serialize};

use crate::affinity::{AffinityKind, DiagonalMode};
use crate::error::{MtaError, Result};

/// How views are weighted while seeking the mode.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "fraction")]
pub enum Filtering {
    /// Jointly optimized inlierness scores (the full method).
    #[default]
    Inlierness,
    /// Scores pinned to `1/N`: plain MeanShift.
    Uniform,
    /// Uniform weight on the most confident fraction of views, zero elsewhere.
    ConfidenceThreshold(f64),
}

/// Weights used by the mode fixed-point update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeUpdate {
    /// `y_p k_p / h_p²`: the zero-gradient condition of the objective with
    /// per-view bandwidths. Equal to `Literal` when all bandwidths match.
    #[default]
    Gradient,
    /// `y_p k_p`, ignoring the per-view bandwidth factor.
    Literal,
}

/// Solver configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Weight of the affinity coupling term.
    pub lambda: f64,
    /// Weight of the entropy barrier on the inlierness scores.
    pub lambda_y: f64,
    /// Neighbour ratio for the variable bandwidth.
    pub rho: f64,
    /// Convergence threshold shared by the inner and outer loops.
    pub epsilon: f64,
    pub max_inner_y: usize,
    pub max_inner_m: usize,
    pub max_outer: usize,
    pub affinity: AffinityKind,
    pub diagonal: DiagonalMode,
    pub filtering: Filtering,
    pub mode_update: ModeUpdate,
    /// Keep every intermediate `y` and `m` iterate in the trace.
    #[serde(skip)]
    pub record_iterates: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            lambda: 4.0,
            lambda_y: 0.2,
            rho: 0.3,
            epsilon: 1e-6,
            max_inner_y: 100,
            max_inner_m: 100,
            max_outer: 20,
            affinity: AffinityKind::Text,
            diagonal: DiagonalMode::Zeroed,
            filtering: Filtering::Inlierness,
            mode_update: ModeUpdate::Gradient,
            record_iterates: false,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: String| Err(MtaError::InvalidParameter { name, reason });
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad("lambda", format!("must be finite and >= 0, got {}", self.lambda));
        }
        if !(self.lambda_y.is_finite() && self.lambda_y > 0.0) {
            return bad(
                "lambda_y",
                format!("entropy weight must be finite and > 0, got {}", self.lambda_y),
            );
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return bad("rho", format!("must lie in (0, 1], got {}", self.rho));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return bad("epsilon", format!("must be finite and > 0, got {}", self.epsilon));
        }
        for (name, cap) in [
            ("max_inner_y", self.max_inner_y),
            ("max_inner_m", self.max_inner_m),
            ("max_outer", self.max_outer),
        ] {
            if cap == 0 {
                return bad(name, "iteration caps must be at least 1".into());
            }
        }
        if let Filtering::ConfidenceThreshold(f) = self.filtering {
            if !(f > 0.0 && f <= 1.0) {
                return bad("fraction", format!("must lie in (0, 1], got {f}"));
            }
        }
        Ok(())
    }
}
