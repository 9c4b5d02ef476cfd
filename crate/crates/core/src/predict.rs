//! Class predictions from a mode, the baselines, and prompt-ensemble voting.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embedding::{ClassEmbeddings, EmbeddingSet};
use crate::error::{MtaError, Result};
use crate::linalg::{argmax, norm};
use crate::scalar::Scalar;
use crate::solver::{Filtering, Hyperparams, MtaProblem, MtaSolution, SolverFlag};

/// Prediction methods exposed to the CLI and the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Mode with jointly optimized inlierness scores.
    Mta,
    /// MeanShift with uniform weights over every view.
    Meanshift,
    /// MeanShift over the most confident fraction of views.
    Threshold,
    /// Cosine argmax of the mean embedding.
    Mean,
    /// Cosine argmax of the original (non-augmented) view.
    Zeroshot,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Mta,
        Method::Meanshift,
        Method::Threshold,
        Method::Mean,
        Method::Zeroshot,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mta => "mta",
            Method::Meanshift => "meanshift",
            Method::Threshold => "threshold",
            Method::Mean => "mean",
            Method::Zeroshot => "zeroshot",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method `{s}` (expected mta|meanshift|threshold|mean|zeroshot)"))
    }
}

/// Condensed convergence information carried by a report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceSummary {
    pub outer_iterations: usize,
    pub y_iterations: usize,
    pub m_iterations: usize,
    pub converged: bool,
    /// Objective after every outer iteration.
    pub objectives: Vec<f64>,
    pub flags: Vec<SolverFlag>,
    pub descent_violations: usize,
    pub monotonicity_violations: usize,
}

impl TraceSummary {
    fn from_solution<T: Scalar>(sol: &MtaSolution<T>) -> Self {
        let t = &sol.trace;
        Self {
            outer_iterations: t.outer_iterations(),
            y_iterations: t.y_iterations(),
            m_iterations: t.m_iterations(),
            converged: t.converged,
            objectives: t.objectives().into_iter().map(Scalar::to_f64_lossy).collect(),
            flags: t.flags.clone(),
            descent_violations: t.descent_violations(),
            monotonicity_violations: t.monotonicity_violations(),
        }
    }
}

/// Outcome of one prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionReport<T> {
    pub predicted_class: usize,
    pub class_name: String,
    /// Cosine similarity of the (normalized) representation with each class.
    /// For ensemble reports: the mean over prompt sets.
    pub similarities: Vec<T>,
    pub method: Method,
    pub inlierness: Option<Vec<T>>,
    pub trace: Option<TraceSummary>,
    /// Per-class vote counts, present on ensemble reports only.
    pub votes: Option<Vec<usize>>,
}

/// Cosine argmax of `mode` against the class embeddings.
pub fn predict_from_mode<T: Scalar>(
    mode: &[T],
    classes: &ClassEmbeddings<T>,
    method: Method,
) -> Result<PredictionReport<T>> {
    classes.check_dim(mode.len())?;
    let n = norm(mode);
    if !(n >= T::lit(1e-12)) {
        return Err(MtaError::ZeroVector { row: 0 });
    }
    let unit: Vec<T> = mode.iter().map(|&v| v / n).collect();
    let similarities = classes.similarities(&unit);
    let predicted_class = argmax(&similarities);
    Ok(PredictionReport {
        predicted_class,
        class_name: classes.class_names()[predicted_class].clone(),
        similarities,
        method,
        inlierness: None,
        trace: None,
        votes: None,
    })
}

fn from_solution<T: Scalar>(
    sol: &MtaSolution<T>,
    classes: &ClassEmbeddings<T>,
    method: Method,
) -> Result<PredictionReport<T>> {
    let mut report = predict_from_mode(sol.mode.as_slice(), classes, method)?;
    if method == Method::Mta {
        report.inlierness = Some(sol.y.as_slice().to_vec());
    }
    report.trace = Some(TraceSummary::from_solution(sol));
    Ok(report)
}

/// Full method: joint mode and inlierness optimization.
pub fn predict_mta<T: Scalar>(
    views: &EmbeddingSet<T>,
    classes: &ClassEmbeddings<T>,
    params: &Hyperparams,
) -> Result<PredictionReport<T>> {
    let params = Hyperparams {
        filtering: Filtering::Inlierness,
        ..params.clone()
    };
    let sol = MtaProblem::new(views, classes, &params)?.solve();
    from_solution(&sol, classes, Method::Mta)
}

/// Zero-shot prediction from the mean of all view embeddings.
pub fn baseline_mean<T: Scalar>(
    views: &EmbeddingSet<T>,
    classes: &ClassEmbeddings<T>,
) -> Result<PredictionReport<T>> {
    predict_from_mode(&views.mean(), classes, Method::Mean)
}

/// Zero-shot prediction from the original view alone.
pub fn baseline_zeroshot<T: Scalar>(
    views: &EmbeddingSet<T>,
    classes: &ClassEmbeddings<T>,
) -> Result<PredictionReport<T>> {
    predict_from_mode(views.original(), classes, Method::Zeroshot)
}

/// MeanShift over the `ceil(fraction·N)` lowest-entropy views.
pub fn baseline_confidence_threshold<T: Scalar>(
    views: &EmbeddingSet<T>,
    classes: &ClassEmbeddings<T>,
    fraction: f64,
    params: &Hyperparams,
) -> Result<PredictionReport<T>> {
    let params = Hyperparams {
        filtering: Filtering::ConfidenceThreshold(fraction),
        ..params.clone()
    };
    let sol = MtaProblem::new(views, classes, &params)?.solve();
    from_solution(&sol, classes, Method::Threshold)
}

/// MeanShift with uniform weights over all views.
pub fn baseline_uniform_meanshift<T: Scalar>(
    views: &EmbeddingSet<T>,
    classes: &ClassEmbeddings<T>,
    params: &Hyperparams,
) -> Result<PredictionReport<T>> {
    let params = Hyperparams {
        filtering: Filtering::Uniform,
        ..params.clone()
    };
    let sol = MtaProblem::new(views, classes, &params)?.solve();
    from_solution(&sol, classes, Method::Meanshift)
}

/// Default kept fraction for the confidence-threshold baseline.
pub const DEFAULT_CONFIDENCE_FRACTION: f64 = 0.1;

/// Dispatch on `method`. `fraction` is only read by [`Method::Threshold`].
pub fn predict<T: Scalar>(
    method: Method,
    views: &EmbeddingSet<T>,
    classes: &ClassEmbeddings<T>,
    params: &Hyperparams,
    fraction: f64,
) -> Result<PredictionReport<T>> {
    match method {
        Method::Mta => predict_mta(views, classes, params),
        Method::Meanshift => baseline_uniform_meanshift(views, classes, params),
        Method::Threshold => baseline_confidence_threshold(views, classes, fraction, params),
        Method::Mean => baseline_mean(views, classes),
        Method::Zeroshot => baseline_zeroshot(views, classes),
    }
}

/// Plurality vote over per-prompt-set predictions. Ties go to the class with
/// the largest summed similarity across sets, then to the lowest index.
pub fn ensemble_vote<T: Scalar>(reports: &[PredictionReport<T>]) -> Result<PredictionReport<T>> {
    let first = reports
        .first()
        .ok_or(MtaError::Empty("ensemble vote needs at least one report"))?;
    let k = first.similarities.len();
    let mut votes = vec![0usize; k];
    let mut summed = vec![T::zero(); k];
    for r in reports {
        if r.similarities.len() != k {
            return Err(MtaError::InconsistentClasses {
                expected: k,
                found: r.similarities.len(),
            });
        }
        votes[r.predicted_class] += 1;
        for (s, &v) in summed.iter_mut().zip(&r.similarities) {
            *s += v;
        }
    }
    let top = *votes.iter().max().expect("k >= 1");
    let mut winner = None;
    for c in (0..k).filter(|&c| votes[c] == top) {
        winner = match winner {
            Some(w) if summed[w] >= summed[c] => Some(w),
            _ => Some(c),
        };
    }
    let predicted_class = winner.expect("at least one class has the top vote");
    let count = T::from_usize_lossy(reports.len());
    let class_name = reports
        .iter()
        .find(|r| r.predicted_class == predicted_class)
        .map(|r| r.class_name.clone())
        .unwrap_or_else(|| format!("class_{predicted_class}"));
    Ok(PredictionReport {
        predicted_class,
        class_name,
        similarities: summed.into_iter().map(|s| s / count).collect(),
        method: first.method,
        inlierness: None,
        trace: None,
        votes: Some(votes),
    })
}

/// Run `method` once per class-embedding set and combine by vote. A single
/// set returns its own report unchanged.
pub fn predict_ensemble<T: Scalar>(
    method: Method,
    views: &EmbeddingSet<T>,
    class_sets: &[ClassEmbeddings<T>],
    params: &Hyperparams,
    fraction: f64,
) -> Result<PredictionReport<T>> {
    let reports = class_sets
        .iter()
        .map(|c| predict(method, views, c, params, fraction))
        .collect::<Result<Vec<_>>>()?;
    if reports.len() == 1 {
        return Ok(reports.into_iter().next().expect("one report"));
    }
    ensemble_vote(&reports)
}
