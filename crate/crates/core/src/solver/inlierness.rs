//! Inlierness scores on the probability simplex and their CCCP updates.

use crate::affinity::AffinityMatrix;
use crate::linalg::{max_abs_diff, sq_dist};
use crate::scalar::Scalar;
use crate::solver::objective::objective_from_kernels;
use crate::solver::Hyperparams;

/// A point on the probability simplex, one score per view.
#[derive(Debug, Clone, PartialEq)]
pub struct InliernessVector<T>(Vec<T>);

impl<T: Scalar> InliernessVector<T> {
    pub fn uniform(n: usize) -> Self {
        Self(vec![T::one() / T::from_usize_lossy(n); n])
    }

    /// Uniform over `support`, zero elsewhere.
    pub fn uniform_on(n: usize, support: &[usize]) -> Self {
        let mut y = vec![T::zero(); n];
        let v = T::one() / T::from_usize_lossy(support.len());
        for &i in support {
            y[i] = v;
        }
        Self(y)
    }

    /// Wrap raw scores without checking; see [`Self::is_on_simplex`].
    pub fn from_vec(y: Vec<T>) -> Self {
        Self(y)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `Σ y = 1 ± tol` and every entry in `[0, 1]`.
    pub fn is_on_simplex(&self, tol: T) -> bool {
        let sum: T = self.0.iter().copied().sum();
        (sum - T::one()).abs() <= tol
            && self.0.iter().all(|&v| v >= T::zero() && v <= T::one())
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self(perm.iter().map(|&i| self.0[i]).collect())
    }
}

/// Result of one CCCP step.
#[derive(Debug, Clone, PartialEq)]
pub struct YUpdate<T> {
    pub y: InliernessVector<T>,
    /// The normalizer vanished and the uniform vector was returned instead.
    pub degenerate: bool,
}

/// One CCCP step:
/// `y_p ∝ exp((k_p + λ Σ_q w_pq y_q) / λ_y)`, normalized over `p`.
pub fn cccp_y_update<T: Scalar>(
    kernels: &[T],
    w: &AffinityMatrix<T>,
    y_prev: &InliernessVector<T>,
    params: &Hyperparams,
) -> YUpdate<T> {
    let lambda = T::lit(params.lambda);
    let lambda_y = T::lit(params.lambda_y);
    let coupling = w.apply(y_prev.as_slice());
    let mut y: Vec<T> = kernels
        .iter()
        .zip(&coupling)
        .map(|(&k, &c)| (k + lambda * c) / lambda_y)
        .collect();
    let max = y.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for v in y.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    if !(total.is_finite() && total > T::zero()) {
        return YUpdate {
            y: InliernessVector::uniform(kernels.len()),
            degenerate: true,
        };
    }
    y.iter_mut().for_each(|v| *v /= total);
    YUpdate {
        y: InliernessVector(y),
        degenerate: false,
    }
}

/// Outcome of the inner inlierness loop.
#[derive(Debug, Clone, PartialEq)]
pub struct YPhase<T> {
    pub y: InliernessVector<T>,
    /// CCCP updates performed.
    pub iterations: usize,
    pub converged: bool,
    pub degenerate: bool,
    /// Objective at fixed `m` before the first update and after each update.
    pub objectives: Vec<T>,
    /// Every iterate, when requested.
    pub iterates: Vec<InliernessVector<T>>,
}

impl<T: Scalar> YPhase<T> {
    /// CCCP steps whose objective rose by more than `tol`.
    pub fn descent_violations(&self, tol: T) -> usize {
        self.objectives
            .windows(2)
            .filter(|w| w[1] > w[0] + tol)
            .count()
    }

    /// Largest single-step objective increase (zero when monotone).
    pub fn max_increase(&self) -> T {
        self.objectives
            .windows(2)
            .fold(T::zero(), |acc, w| acc.max(w[1] - w[0]))
    }
}

/// Iterate [`cccp_y_update`] until the L2 step falls below `ε` or the cap
/// `max_inner_y` is hit.
pub fn solve_y<T: Scalar>(
    kernels: &[T],
    w: &AffinityMatrix<T>,
    y_init: &InliernessVector<T>,
    params: &Hyperparams,
) -> YPhase<T> {
    let eps = T::lit(params.epsilon);
    let mut y = y_init.clone();
    let mut objectives = vec![objective_from_kernels(kernels, y.as_slice(), w, params)];
    let mut iterates = Vec::new();
    let mut converged = false;
    let mut degenerate = false;
    let mut iterations = 0;
    while iterations < params.max_inner_y {
        let next = cccp_y_update(kernels, w, &y, params);
        iterations += 1;
        degenerate |= next.degenerate;
        let step = sq_dist(next.y.as_slice(), y.as_slice()).sqrt();
        y = next.y;
        objectives.push(objective_from_kernels(kernels, y.as_slice(), w, params));
        if params.record_iterates {
            iterates.push(y.clone());
        }
        if step < eps {
            converged = true;
            break;
        }
    }
    YPhase {
        y,
        iterations,
        converged,
        degenerate,
        objectives,
        iterates,
    }
}

/// `‖cccp_y_update(y) − y‖∞`: zero exactly at a KKT point of the bound.
pub fn y_fixed_point_residual<T: Scalar>(
    kernels: &[T],
    w: &AffinityMatrix<T>,
    y: &InliernessVector<T>,
    params: &Hyperparams,
) -> T {
    let next = cccp_y_update(kernels, w, y, params);
    max_abs_diff(next.y.as_slice(), y.as_slice())
}
