//! Block-coordinate descent over the inlierness scores and the mode.

use serde::Serialize;

use crate::affinity::{build_affinity, AffinityMatrix};
use crate::bandwidth::{gaussian_kernel, variable_bandwidth, BandwidthVector};
use crate::embedding::{softmax_predictions, ClassEmbeddings, EmbeddingSet, PredictionMatrix};
use crate::error::Result;
use crate::linalg::{dist, max_abs_diff};
use crate::scalar::Scalar;
use crate::solver::inlierness::{solve_y, InliernessVector, YPhase};
use crate::solver::mode::{solve_m, MPhase, ModeState};
use crate::solver::objective::objective;
use crate::solver::{Filtering, Hyperparams};

/// Tolerance on a CCCP step's objective increase before it counts as a
/// descent violation.
pub const DESCENT_TOLERANCE: f64 = 1e-8;
/// Tolerance on a drop of `u` within a mode phase.
pub const MONOTONICITY_TOLERANCE: f64 = 1e-12;

/// Non-fatal conditions met while solving.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverFlag {
    MaxIterationsY,
    MaxIterationsM,
    MaxIterationsOuter,
    DegenerateSimplex,
    VanishingWeights,
    DescentViolation,
    MonotonicityViolation,
}

/// Summary of one outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterRecord<T> {
    pub y_iterations: usize,
    pub m_iterations: usize,
    /// Objective after the mode phase.
    pub objective: T,
    /// Objective before and after each CCCP step of the y-phase.
    pub y_objectives: Vec<T>,
    /// `u^l` through the mode phase.
    pub u_trace: Vec<T>,
    /// `‖y_end − y_start‖∞` across the outer iteration.
    pub y_change: T,
    /// `‖m_end − m_start‖` across the outer iteration.
    pub m_change: T,
    pub m_step_norms: Vec<T>,
    pub descent_violations: usize,
    pub monotonicity_violations: usize,
    pub y_converged: bool,
    pub m_converged: bool,
}

/// Everything recorded while solving one sample.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvergenceTrace<T> {
    pub outer: Vec<OuterRecord<T>>,
    pub flags: Vec<SolverFlag>,
    pub converged: bool,
    /// Every `y` iterate across all phases (including the initial one), when
    /// `record_iterates` is set.
    pub y_iterates: Vec<InliernessVector<T>>,
    /// Every mode iterate `m^1, m^2, …` across all phases, when requested.
    pub m_iterates: Vec<ModeState<T>>,
}

impl<T: Scalar> ConvergenceTrace<T> {
    fn flag(&mut self, f: SolverFlag) {
        if !self.flags.contains(&f) {
            self.flags.push(f);
        }
    }

    pub fn outer_iterations(&self) -> usize {
        self.outer.len()
    }

    pub fn y_iterations(&self) -> usize {
        self.outer.iter().map(|o| o.y_iterations).sum()
    }

    pub fn m_iterations(&self) -> usize {
        self.outer.iter().map(|o| o.m_iterations).sum()
    }

    pub fn descent_violations(&self) -> usize {
        self.outer.iter().map(|o| o.descent_violations).sum()
    }

    pub fn monotonicity_violations(&self) -> usize {
        self.outer.iter().map(|o| o.monotonicity_violations).sum()
    }

    pub fn objectives(&self) -> Vec<T> {
        self.outer.iter().map(|o| o.objective).collect()
    }

    pub fn final_objective(&self) -> Option<T> {
        self.outer.last().map(|o| o.objective)
    }
}

/// Final state of a solve.
#[derive(Debug, Clone, PartialEq)]
pub struct MtaSolution<T> {
    pub mode: ModeState<T>,
    pub y: InliernessVector<T>,
    pub trace: ConvergenceTrace<T>,
}

/// A sample with its per-sample quantities (predictions, affinities,
/// bandwidths) computed once.
#[derive(Debug, Clone)]
pub struct MtaProblem<'a, T> {
    views: &'a EmbeddingSet<T>,
    preds: PredictionMatrix<T>,
    affinity: AffinityMatrix<T>,
    bandwidth: BandwidthVector<T>,
    params: Hyperparams,
}

impl<'a, T: Scalar> MtaProblem<'a, T> {
    pub fn new(
        views: &'a EmbeddingSet<T>,
        classes: &ClassEmbeddings<T>,
        params: &Hyperparams,
    ) -> Result<Self> {
        params.validate()?;
        let preds = softmax_predictions(views, classes)?;
        let affinity = build_affinity(views, classes, params.affinity, params.diagonal)?;
        let bandwidth = variable_bandwidth(views, T::lit(params.rho))?;
        Ok(Self {
            views,
            preds,
            affinity,
            bandwidth,
            params: params.clone(),
        })
    }

    pub fn views(&self) -> &EmbeddingSet<T> {
        self.views
    }

    pub fn predictions(&self) -> &PredictionMatrix<T> {
        &self.preds
    }

    pub fn affinity(&self) -> &AffinityMatrix<T> {
        &self.affinity
    }

    pub fn bandwidth(&self) -> &BandwidthVector<T> {
        &self.bandwidth
    }

    pub fn params(&self) -> &Hyperparams {
        &self.params
    }

    pub fn objective(&self, mode: &[T], y: &[T]) -> T {
        objective(self.views, mode, y, &self.affinity, &self.bandwidth, &self.params)
    }

    pub fn kernels(&self, mode: &[T]) -> Vec<T> {
        gaussian_kernel(self.views, mode, &self.bandwidth)
    }

    /// Inlierness phase at a fixed mode.
    pub fn solve_y_at(&self, mode: &[T], y_init: &InliernessVector<T>) -> YPhase<T> {
        solve_y(&self.kernels(mode), &self.affinity, y_init, &self.params)
    }

    /// Mode phase at fixed scores.
    pub fn solve_m_at(&self, y: &InliernessVector<T>, m_init: &ModeState<T>) -> MPhase<T> {
        solve_m(self.views, y.as_slice(), m_init, &self.bandwidth, &self.params)
    }

    /// Views kept by confidence filtering: the `ceil(fraction·N)` views with
    /// the lowest prediction entropy, lower index first on ties.
    pub fn most_confident(&self, fraction: f64) -> Vec<usize> {
        let n = self.views.n_views();
        let keep = ((fraction * n as f64).ceil() as usize).clamp(1, n);
        let entropies = self.preds.entropies();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            entropies[a]
                .partial_cmp(&entropies[b])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        order.truncate(keep);
        order
    }

    /// Run the configured method from the original view and uniform scores.
    pub fn solve(&self) -> MtaSolution<T> {
        let n = self.views.n_views();
        let m0 = ModeState::new(self.views.original().to_vec());
        match self.params.filtering {
            Filtering::Inlierness => self.solve_from(m0, InliernessVector::uniform(n)),
            Filtering::Uniform => self.pinned(m0, InliernessVector::uniform(n)),
            Filtering::ConfidenceThreshold(fraction) => {
                let kept = self.most_confident(fraction);
                let start = if kept.contains(&self.views.original_index()) {
                    self.views.original_index()
                } else {
                    kept[0]
                };
                let m0 = ModeState::new(self.views.view(start).to_vec());
                self.pinned(m0, InliernessVector::uniform_on(n, &kept))
            }
        }
    }

    /// A single mode phase with the scores held fixed.
    fn pinned(&self, m0: ModeState<T>, y: InliernessVector<T>) -> MtaSolution<T> {
        let mut trace = ConvergenceTrace::default();
        if self.params.record_iterates {
            trace.y_iterates.push(y.clone());
        }
        let phase = self.solve_m_at(&y, &m0);
        let record = self.record_m_only(&phase, &m0, &y);
        if !phase.converged {
            trace.flag(SolverFlag::MaxIterationsM);
        }
        if phase.vanishing {
            trace.flag(SolverFlag::VanishingWeights);
        }
        if record.monotonicity_violations > 0 {
            trace.flag(SolverFlag::MonotonicityViolation);
        }
        trace.converged = phase.converged;
        trace.m_iterates = phase.iterates;
        trace.outer.push(record);
        MtaSolution {
            mode: phase.mode,
            y,
            trace,
        }
    }

    fn record_m_only(&self, phase: &MPhase<T>, m0: &ModeState<T>, y: &InliernessVector<T>) -> OuterRecord<T> {
        OuterRecord {
            y_iterations: 0,
            m_iterations: phase.iterations,
            objective: self.objective(phase.mode.as_slice(), y.as_slice()),
            y_objectives: Vec::new(),
            u_trace: phase.u_trace.clone(),
            y_change: T::zero(),
            m_change: dist(phase.mode.as_slice(), m0.as_slice()),
            m_step_norms: phase.step_norms.clone(),
            descent_violations: 0,
            monotonicity_violations: phase.monotonicity_violations(T::lit(MONOTONICITY_TOLERANCE)),
            y_converged: true,
            m_converged: phase.converged,
        }
    }

    /// Alternate the inlierness and mode phases from `(m0, y0)`. The y-phase
    /// warm-starts from the previous outer iterate.
    pub fn solve_from(&self, m0: ModeState<T>, y0: InliernessVector<T>) -> MtaSolution<T> {
        let p = &self.params;
        let eps = T::lit(p.epsilon);
        let mut trace = ConvergenceTrace::default();
        let mut m = m0;
        let mut y = y0;
        if p.record_iterates {
            trace.y_iterates.push(y.clone());
        }
        for _ in 0..p.max_outer {
            let (m_start, y_start) = (m.clone(), y.clone());

            let y_phase = self.solve_y_at(m.as_slice(), &y);
            if !y_phase.converged {
                trace.flag(SolverFlag::MaxIterationsY);
            }
            if y_phase.degenerate {
                trace.flag(SolverFlag::DegenerateSimplex);
            }
            let descent_violations = y_phase.descent_violations(T::lit(DESCENT_TOLERANCE));
            if descent_violations > 0 {
                trace.flag(SolverFlag::DescentViolation);
            }
            y = y_phase.y;
            trace.y_iterates.extend(y_phase.iterates);

            let m_phase = self.solve_m_at(&y, &m);
            if !m_phase.converged {
                trace.flag(SolverFlag::MaxIterationsM);
            }
            if m_phase.vanishing {
                trace.flag(SolverFlag::VanishingWeights);
            }
            let monotonicity_violations =
                m_phase.monotonicity_violations(T::lit(MONOTONICITY_TOLERANCE));
            if monotonicity_violations > 0 {
                trace.flag(SolverFlag::MonotonicityViolation);
            }
            m = m_phase.mode;
            trace.m_iterates.extend(m_phase.iterates);

            let y_change = max_abs_diff(y.as_slice(), y_start.as_slice());
            let m_change = dist(m.as_slice(), m_start.as_slice());
            trace.outer.push(OuterRecord {
                y_iterations: y_phase.iterations,
                m_iterations: m_phase.iterations,
                objective: self.objective(m.as_slice(), y.as_slice()),
                y_objectives: y_phase.objectives,
                u_trace: m_phase.u_trace,
                y_change,
                m_change,
                m_step_norms: m_phase.step_norms,
                descent_violations,
                monotonicity_violations,
                y_converged: y_phase.converged,
                m_converged: m_phase.converged,
            });
            if y_change < eps && m_change < eps {
                // a cycling inner loop can repeat itself exactly across outer
                // iterations; that is a stall, not a fixed point
                trace.converged = y_phase.converged && m_phase.converged;
                break;
            }
        }
        if !trace.converged {
            trace.flag(SolverFlag::MaxIterationsOuter);
        }
        MtaSolution { mode: m, y, trace }
    }
}

/// Solve one sample end to end with `params`.
pub fn mta_solve<T: Scalar>(
    views: &EmbeddingSet<T>,
    classes: &ClassEmbeddings<T>,
    params: &Hyperparams,
) -> Result<MtaSolution<T>> {
    Ok(MtaProblem::new(views, classes, params)?.solve())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affinity::DiagonalMode;

    fn classes() -> ClassEmbeddings<f64> {
        ClassEmbeddings::<f64>::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], 100.0)
            .unwrap()
    }

    #[test]
    fn single_view() {
        let views = EmbeddingSet::<f64>::from_rows(&[[0.6, 0.8, 0.0]]).unwrap();
        let sol = mta_solve(&views, &classes(), &Hyperparams::default()).unwrap();
        assert_eq!(sol.mode.as_slice(), views.view(0));
        assert_eq!(sol.y.as_slice(), &[1.0]);
        assert!(sol.trace.converged);
    }

    #[test]
    fn identical_views() {
        let views = EmbeddingSet::<f64>::from_rows(&[[0.6, 0.8, 0.0]; 5]).unwrap();
        let sol = mta_solve(&views, &classes(), &Hyperparams::default()).unwrap();
        assert!(dist(sol.mode.as_slice(), views.view(0)) < 1e-15);
        for &v in sol.y.as_slice() {
            assert!((v - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn outlier_is_downweighted() {
        let views = EmbeddingSet::<f64>::from_rows(&[
            [1.0, 0.05, 0.0],
            [0.98, 0.1, 0.05],
            [0.97, -0.05, 0.1],
            [0.99, 0.0, -0.08],
            [0.0, 0.1, 1.0],
        ])
        .unwrap();
        let params = Hyperparams {
            diagonal: DiagonalMode::Kept,
            ..Default::default()
        };
        let sol = mta_solve(&views, &classes(), &params).unwrap();
        assert!(sol.trace.converged, "{:?}", sol.trace.flags);
        let inlier_mass: f64 = sol.y.as_slice()[..4].iter().sum();
        assert!(inlier_mass > 0.9, "{inlier_mass}");
        assert!(sol.y.is_on_simplex(1e-9));
    }

    #[test]
    fn confidence_filtering_keeps_ceil_fraction() {
        let views = EmbeddingSet::<f64>::from_rows(&[
            [0.5, 0.5, 0.1],
            [1.0, 0.0, 0.0],
            [0.4, 0.6, 0.0],
            [0.0, 0.0, 1.0],
        ])
        .unwrap();
        let problem = MtaProblem::new(&views, &classes(), &Hyperparams::default()).unwrap();
        let kept = problem.most_confident(0.3);
        assert_eq!(kept.len(), 2);
        assert!(kept.contains(&1) && kept.contains(&3));
        assert_eq!(problem.most_confident(0.01).len(), 1);
    }
}
