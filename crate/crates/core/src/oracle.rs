//! Independent checks on a solve: brute-force search over the mode in 2-D,
//! and first-order stationarity at a returned solution.

use crate::embedding::{ClassEmbeddings, EmbeddingSet};
use crate::error::{MtaError, Result};
use crate::linalg::norm;
use crate::scalar::Scalar;
use crate::solver::{y_fixed_point_residual, Hyperparams, InliernessVector, MtaProblem, MtaSolution};

/// Largest view count accepted by [`grid_oracle`].
pub const GRID_MAX_VIEWS: usize = 8;
/// Central-difference step for the mode gradient.
pub const FD_STEP: f64 = 1e-5;

/// Minimum of the objective over a grid of candidate modes.
#[derive(Debug, Clone, PartialEq)]
pub struct GridOracle<T> {
    pub min_objective: T,
    pub argmin: [T; 2],
    pub y_at_min: InliernessVector<T>,
}

/// For every point of a `resolution × resolution` grid spanning the views'
/// bounding box widened by the largest bandwidth, minimize over `y` with the
/// solver's own inlierness loop (from uniform) and evaluate the objective.
pub fn grid_oracle<T: Scalar>(
    views: &EmbeddingSet<T>,
    classes: &ClassEmbeddings<T>,
    params: &Hyperparams,
    resolution: usize,
) -> Result<GridOracle<T>> {
    if views.dim() != 2 || views.n_views() > GRID_MAX_VIEWS {
        return Err(MtaError::DimensionTooLarge {
            dim: views.dim(),
            n_views: views.n_views(),
        });
    }
    if resolution < 2 {
        return Err(MtaError::InvalidParameter {
            name: "grid_resolution",
            reason: format!("need at least 2 points per axis, got {resolution}"),
        });
    }
    let problem = MtaProblem::new(views, classes, params)?;
    let margin = problem.bandwidth().max_squared().sqrt();
    let mut lo = [T::infinity(); 2];
    let mut hi = [T::neg_infinity(); 2];
    for f in views.views().iter_rows() {
        for a in 0..2 {
            lo[a] = lo[a].min(f[a] - margin);
            hi[a] = hi[a].max(f[a] + margin);
        }
    }
    let steps = T::from_usize_lossy(resolution - 1);
    let at = |a: usize, i: usize| lo[a] + (hi[a] - lo[a]) * T::from_usize_lossy(i) / steps;
    let uniform = InliernessVector::uniform(views.n_views());
    let mut best: Option<GridOracle<T>> = None;
    for i in 0..resolution {
        for j in 0..resolution {
            let m = [at(0, i), at(1, j)];
            let y = problem.solve_y_at(&m, &uniform).y;
            let l = problem.objective(&m, y.as_slice());
            if best.as_ref().is_none_or(|b| l < b.min_objective) {
                best = Some(GridOracle {
                    min_objective: l,
                    argmin: m,
                    y_at_min: y,
                });
            }
        }
    }
    Ok(best.expect("grid has at least four points"))
}

/// First-order optimality residuals at a returned solution.
#[derive(Debug, Clone, PartialEq)]
pub struct StationarityReport<T> {
    /// `‖∇_m L(m*, y*)‖` by central differences.
    pub gradient_norm: T,
    /// `‖y_new − y*‖∞` after one more CCCP step at `(m*, y*)`.
    pub y_residual: T,
    /// Largest view norm; the gradient bound is relative to it.
    pub scale: T,
}

pub fn stationarity_oracle<T: Scalar>(
    views: &EmbeddingSet<T>,
    classes: &ClassEmbeddings<T>,
    solution: &MtaSolution<T>,
    params: &Hyperparams,
) -> Result<StationarityReport<T>> {
    let problem = MtaProblem::new(views, classes, params)?;
    let y = solution.y.as_slice();
    let mut m = solution.mode.as_slice().to_vec();
    let h = T::lit(FD_STEP);
    let mut grad = vec![T::zero(); m.len()];
    for a in 0..m.len() {
        let orig = m[a];
        m[a] = orig + h;
        let up = problem.objective(&m, y);
        m[a] = orig - h;
        let down = problem.objective(&m, y);
        m[a] = orig;
        grad[a] = (up - down) / (T::lit(2.0) * h);
    }
    let kernels = problem.kernels(&m);
    let y_residual = y_fixed_point_residual(&kernels, problem.affinity(), &solution.y, params);
    let scale = views
        .views()
        .iter_rows()
        .map(norm)
        .fold(T::zero(), T::max);
    Ok(StationarityReport {
        gradient_norm: norm(&grad),
        y_residual,
        scale,
    })
}
