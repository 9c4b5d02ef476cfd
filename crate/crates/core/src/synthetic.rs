//! Synthetic augmented-view scenes with planted outliers, and a Monte-Carlo
//! benchmark over them.
//!
//! Randomness comes from ChaCha8 seeded with the scene seed; trial `t` of a
//! benchmark reads stream `t` of that generator, so every trial is
//! reproducible on its own and independent of how many trials run.

use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::embedding::{ClassEmbeddings, EmbeddingSet};
use crate::error::{MtaError, Result};
use crate::linalg::Matrix;
use crate::predict::{predict, Method, DEFAULT_CONFIDENCE_FRACTION};
use crate::solver::Hyperparams;

/// Where outlier views come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutlierMode {
    /// Uniformly on the unit sphere.
    UniformSphere,
    /// Clustered around the prototype of one wrong class.
    WrongClass,
}

/// Parameters of a synthetic scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub seed: u64,
    pub dim: usize,
    pub n_classes: usize,
    pub n_views: usize,
    /// Norm of the perturbation added to the prototype for inlier views.
    pub inlier_noise: f64,
    /// Fraction of views replaced by outliers, `⌊ωN⌋` of them.
    pub outlier_fraction: f64,
    pub outlier_mode: OutlierMode,
    /// Perturbation norm for wrong-class outliers.
    pub outlier_noise: f64,
    /// Perturbation norm between a class prototype and its text embedding.
    pub text_noise: f64,
    pub temperature: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            dim: 64,
            n_classes: 10,
            n_views: 64,
            // zero-shot accuracy from the original view alone sits near 0.7
            inlier_noise: 2.0,
            outlier_fraction: 0.3,
            outlier_mode: OutlierMode::WrongClass,
            outlier_noise: 1.0,
            text_noise: 1.5,
            temperature: 100.0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: String| Err(MtaError::InvalidParameter { name, reason });
        if self.dim == 0 {
            return bad("dim", "must be at least 1".into());
        }
        if self.n_classes < 2 {
            return bad("n_classes", format!("need at least 2, got {}", self.n_classes));
        }
        if self.n_views == 0 {
            return bad("n_views", "must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return bad(
                "outlier_fraction",
                format!("must lie in [0, 1), got {}", self.outlier_fraction),
            );
        }
        for (name, v) in [
            ("inlier_noise", self.inlier_noise),
            ("outlier_noise", self.outlier_noise),
            ("text_noise", self.text_noise),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(name, format!("must be finite and >= 0, got {v}"));
            }
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return bad("temperature", format!("must be positive, got {}", self.temperature));
        }
        Ok(())
    }

    pub fn n_outliers(&self) -> usize {
        (self.outlier_fraction * self.n_views as f64).floor() as usize
    }
}

/// One generated test sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub views: EmbeddingSet<f64>,
    pub classes: ClassEmbeddings<f64>,
    pub label: usize,
    /// `true` for planted inliers. View 0 (the original) is always one.
    pub inliers: Vec<bool>,
}

/// Generator for trial `stream` of `seed`.
pub fn trial_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// `center + σ·g/√d` for standard normal `g`, so the perturbation has norm
/// close to `σ`.
fn perturb(rng: &mut ChaCha8Rng, center: &[f64], sigma: f64) -> Vec<f64> {
    let scale = sigma / (center.len() as f64).sqrt();
    center
        .iter()
        .zip(gaussian(rng, center.len()))
        .map(|(c, g)| c + scale * g)
        .collect()
}

/// Scene for trial 0 of `config.seed`.
pub fn generate_scene(config: &SceneConfig) -> Result<Scene> {
    generate_trial(config, 0)
}

/// Scene for trial `trial` of `config.seed`.
pub fn generate_trial(config: &SceneConfig, trial: u64) -> Result<Scene> {
    config.validate()?;
    let mut rng = trial_rng(config.seed, trial);
    let d = config.dim;
    let prototypes: Vec<Vec<f64>> = (0..config.n_classes)
        .map(|_| unit(gaussian(&mut rng, d)))
        .collect();
    let label = rng.random_range(0..config.n_classes);
    let distractor = {
        let c = rng.random_range(0..config.n_classes - 1);
        if c >= label {
            c + 1
        } else {
            c
        }
    };

    let n = config.n_views;
    let n_out = config.n_outliers().min(n - 1);
    // outliers occupy a random subset of views 1..N
    let mut slots: Vec<usize> = (1..n).collect();
    for i in 0..n_out {
        let j = rng.random_range(i..slots.len());
        slots.swap(i, j);
    }
    let mut inliers = vec![true; n];
    for &s in &slots[..n_out] {
        inliers[s] = false;
    }

    let mut rows = Vec::with_capacity(n * d);
    for &is_inlier in &inliers {
        let v = if is_inlier {
            perturb(&mut rng, &prototypes[label], config.inlier_noise)
        } else {
            match config.outlier_mode {
                OutlierMode::UniformSphere => gaussian(&mut rng, d),
                OutlierMode::WrongClass => {
                    perturb(&mut rng, &prototypes[distractor], config.outlier_noise)
                }
            }
        };
        rows.extend(unit(v));
    }
    let views = EmbeddingSet::new(Matrix::from_vec(n, d, rows)?, 0)?;

    let mut text = Vec::with_capacity(config.n_classes * d);
    for proto in &prototypes {
        text.extend(unit(perturb(&mut rng, proto, config.text_noise)));
    }
    let classes = ClassEmbeddings::new(
        Matrix::from_vec(config.n_classes, d, text)?,
        config.temperature,
        Vec::new(),
    )?;
    Ok(Scene {
        views,
        classes,
        label,
        inliers,
    })
}

/// Per-method outcome of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub trial: u64,
    pub label: usize,
    pub results: Vec<MethodOutcome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutcome {
    pub method: Method,
    pub predicted: usize,
    /// Inlierness mass on the planted inliers (methods with scores only).
    pub inlier_mass: Option<f64>,
    pub iterations: usize,
    pub seconds: f64,
}

/// Generate trial `trial` and run every method on it.
pub fn run_trial(
    config: &SceneConfig,
    methods: &[Method],
    params: &Hyperparams,
    fraction: f64,
    trial: u64,
) -> Result<TrialOutcome> {
    let scene = generate_trial(config, trial)?;
    let results = methods
        .iter()
        .map(|&method| {
            let start = Instant::now();
            let report = predict(method, &scene.views, &scene.classes, params, fraction)?;
            let seconds = start.elapsed().as_secs_f64();
            let inlier_mass = report.inlierness.as_ref().map(|y| {
                y.iter()
                    .zip(&scene.inliers)
                    .filter(|(_, &i)| i)
                    .map(|(v, _)| v)
                    .sum()
            });
            let iterations = report
                .trace
                .as_ref()
                .map_or(0, |t| t.y_iterations + t.m_iterations);
            Ok(MethodOutcome {
                method,
                predicted: report.predicted_class,
                inlier_mass,
                iterations,
                seconds,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrialOutcome {
        trial,
        label: scene.label,
        results,
    })
}

/// Aggregate accuracy of one method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    pub trials: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// 95% Wilson score interval.
    pub ci_low: f64,
    pub ci_high: f64,
    pub mean_inlier_mass: Option<f64>,
    pub mean_iterations: f64,
    /// Total solve time; excluded from serialized output unless requested.
    #[serde(skip)]
    pub seconds: f64,
}

/// Benchmark result for one scene configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchResult {
    pub config: SceneConfig,
    pub trials: usize,
    pub methods: Vec<MethodSummary>,
}

impl BenchResult {
    pub fn method(&self, m: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == m)
    }

    pub fn accuracy(&self, m: Method) -> Option<f64> {
        self.method(m).map(|s| s.accuracy)
    }
}

/// 95% Wilson score interval for `k` successes out of `n`.
pub fn wilson_interval(k: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    const Z: f64 = 1.959_963_984_540_054;
    let n_f = n as f64;
    let p = k as f64 / n_f;
    let z2 = Z * Z;
    let denom = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / denom;
    let half = Z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Fold trial outcomes (in trial order) into per-method summaries.
pub fn aggregate(config: &SceneConfig, methods: &[Method], outcomes: &[TrialOutcome]) -> BenchResult {
    let summaries = methods
        .iter()
        .enumerate()
        .map(|(i, &method)| {
            let mut correct = 0;
            let mut mass = Vec::new();
            let mut iterations = 0usize;
            let mut seconds = 0.0;
            for o in outcomes {
                let r = &o.results[i];
                if r.predicted == o.label {
                    correct += 1;
                }
                mass.extend(r.inlier_mass);
                iterations += r.iterations;
                seconds += r.seconds;
            }
            let trials = outcomes.len();
            let (ci_low, ci_high) = wilson_interval(correct, trials);
            MethodSummary {
                method,
                trials,
                correct,
                accuracy: if trials == 0 { 0.0 } else { correct as f64 / trials as f64 },
                ci_low,
                ci_high,
                mean_inlier_mass: (!mass.is_empty())
                    .then(|| mass.iter().sum::<f64>() / mass.len() as f64),
                mean_iterations: if trials == 0 { 0.0 } else { iterations as f64 / trials as f64 },
                seconds,
            }
        })
        .collect();
    BenchResult {
        config: config.clone(),
        trials: outcomes.len(),
        methods: summaries,
    }
}

/// Run every method on `trials` independently seeded scenes.
pub fn run_benchmark(
    config: &SceneConfig,
    methods: &[Method],
    trials: usize,
    params: &Hyperparams,
) -> Result<BenchResult> {
    if trials == 0 {
        return Err(MtaError::InvalidParameter {
            name: "trials",
            reason: "must be at least 1".into(),
        });
    }
    let outcomes = (0..trials as u64)
        .map(|t| run_trial(config, methods, params, DEFAULT_CONFIDENCE_FRACTION, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(config, methods, &outcomes))
}
