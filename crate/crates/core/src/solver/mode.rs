//! Fixed-point mode updates and plain MeanShift.

use crate::bandwidth::{gaussian_kernel_into, BandwidthVector};
use crate::embedding::EmbeddingSet;
use crate::linalg::{dist, dot};
use crate::scalar::Scalar;
use crate::solver::{Hyperparams, ModeUpdate};

/// A point in embedding space; not constrained to the unit sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeState<T>(Vec<T>);

impl<T: Scalar> ModeState<T> {
    pub fn new(m: Vec<T>) -> Self {
        Self(m)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Result of one mode update.
#[derive(Debug, Clone, PartialEq)]
pub struct MUpdate<T> {
    pub mode: ModeState<T>,
    /// The weighted kernel mass vanished; `mode` is the previous point.
    pub vanishing: bool,
}

fn vanishing_threshold<T: Scalar>() -> T {
    T::lit(1e-300).max(T::min_positive_value())
}

/// Weighted kernel mean around `m_prev`. Per-view weights are `y_p k_p / h_p²`
/// for [`ModeUpdate::Gradient`] and `y_p k_p` for [`ModeUpdate::Literal`].
pub fn fixed_point_m_update<T: Scalar>(
    views: &EmbeddingSet<T>,
    y: &[T],
    m_prev: &ModeState<T>,
    h_sq: &BandwidthVector<T>,
    rule: ModeUpdate,
) -> MUpdate<T> {
    let mut kernels = Vec::with_capacity(views.n_views());
    gaussian_kernel_into(views, m_prev.as_slice(), h_sq, &mut kernels);
    weighted_mean(views, y, &kernels, h_sq, rule, m_prev)
}

fn weighted_mean<T: Scalar>(
    views: &EmbeddingSet<T>,
    y: &[T],
    kernels: &[T],
    h_sq: &BandwidthVector<T>,
    rule: ModeUpdate,
    m_prev: &ModeState<T>,
) -> MUpdate<T> {
    let mut num = vec![T::zero(); views.dim()];
    let mut den = T::zero();
    for p in 0..views.n_views() {
        let mut a = y[p] * kernels[p];
        if rule == ModeUpdate::Gradient {
            a /= h_sq.get(p);
        }
        if a == T::zero() {
            continue;
        }
        den += a;
        for (acc, &f) in num.iter_mut().zip(views.view(p)) {
            *acc += a * f;
        }
    }
    if !(den >= vanishing_threshold::<T>()) {
        return MUpdate {
            mode: m_prev.clone(),
            vanishing: true,
        };
    }
    num.iter_mut().for_each(|v| *v /= den);
    MUpdate {
        mode: ModeState(num),
        vanishing: false,
    }
}

/// Outcome of the inner mode loop.
#[derive(Debug, Clone, PartialEq)]
pub struct MPhase<T> {
    pub mode: ModeState<T>,
    pub iterations: usize,
    pub converged: bool,
    pub vanishing: bool,
    /// `u^l = Σ y_p k_p(m^l)` for `m^0 = m_init` and every iterate after it.
    pub u_trace: Vec<T>,
    /// `‖m^{l+1} − m^l‖` for every update.
    pub step_norms: Vec<T>,
    /// Every iterate `m^1, m^2, …`, when requested.
    pub iterates: Vec<ModeState<T>>,
}

impl<T: Scalar> MPhase<T> {
    /// Steps where `u` dropped by more than `tol`.
    pub fn monotonicity_violations(&self, tol: T) -> usize {
        self.u_trace.windows(2).filter(|w| w[1] < w[0] - tol).count()
    }
}

/// Iterate [`fixed_point_m_update`] until `‖Δm‖ < ε` or `max_inner_m` updates.
pub fn solve_m<T: Scalar>(
    views: &EmbeddingSet<T>,
    y: &[T],
    m_init: &ModeState<T>,
    h_sq: &BandwidthVector<T>,
    params: &Hyperparams,
) -> MPhase<T> {
    let eps = T::lit(params.epsilon);
    let mut kernels = Vec::with_capacity(views.n_views());
    gaussian_kernel_into(views, m_init.as_slice(), h_sq, &mut kernels);
    let mut u_trace = vec![dot(y, &kernels)];
    let mut step_norms = Vec::new();
    let mut iterates = Vec::new();
    let mut m = m_init.clone();
    let mut converged = false;
    let mut vanishing = false;
    let mut iterations = 0;
    while iterations < params.max_inner_m {
        let next = weighted_mean(views, y, &kernels, h_sq, params.mode_update, &m);
        iterations += 1;
        if next.vanishing {
            vanishing = true;
            break;
        }
        let step = dist(next.mode.as_slice(), m.as_slice());
        m = next.mode;
        gaussian_kernel_into(views, m.as_slice(), h_sq, &mut kernels);
        u_trace.push(dot(y, &kernels));
        step_norms.push(step);
        if params.record_iterates {
            iterates.push(m.clone());
        }
        if step < eps {
            converged = true;
            break;
        }
    }
    MPhase {
        mode: m,
        iterations,
        converged,
        vanishing,
        u_trace,
        step_norms,
        iterates,
    }
}

/// Plain mode-seeking MeanShift.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanShiftRun<T> {
    pub mode: ModeState<T>,
    pub iterations: usize,
    pub converged: bool,
    pub vanishing: bool,
    /// `m^1, m^2, …` when `record_iterates` is set.
    pub trajectory: Vec<ModeState<T>>,
}

/// Unweighted MeanShift from `m_init`: every view contributes `k_p` (or
/// `k_p / h_p²` under [`ModeUpdate::Gradient`]).
pub fn classic_meanshift<T: Scalar>(
    views: &EmbeddingSet<T>,
    m_init: &ModeState<T>,
    h_sq: &BandwidthVector<T>,
    params: &Hyperparams,
) -> MeanShiftRun<T> {
    let eps = T::lit(params.epsilon);
    let floor = vanishing_threshold::<T>();
    let mut m = m_init.as_slice().to_vec();
    let mut trajectory = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut vanishing = false;
    while iterations < params.max_inner_m {
        iterations += 1;
        let mut next = vec![T::zero(); views.dim()];
        let mut total = T::zero();
        for (p, f) in views.views().iter_rows().enumerate() {
            let d2: T = f.iter().zip(&m).map(|(&a, &b)| (a - b) * (a - b)).sum();
            let mut k = (-d2 / h_sq.get(p)).exp();
            if params.mode_update == ModeUpdate::Gradient {
                k /= h_sq.get(p);
            }
            total += k;
            next.iter_mut().zip(f).for_each(|(n, &v)| *n += k * v);
        }
        if !(total >= floor) {
            vanishing = true;
            break;
        }
        next.iter_mut().for_each(|v| *v /= total);
        let step = dist(&next, &m);
        m = next;
        if params.record_iterates {
            trajectory.push(ModeState(m.clone()));
        }
        if step < eps {
            converged = true;
            break;
        }
    }
    MeanShiftRun {
        mode: ModeState(m),
        iterations,
        converged,
        vanishing,
        trajectory,
    }
}
