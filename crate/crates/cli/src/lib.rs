//! Command-line driver: `run` on bundles, `bench` on synthetic scenes, and
//! `verify` with the optimality oracles.
//!
//! Every output line is one JSON record carrying `schema_version`.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mta_core::bundle::{read_bundle, BundleError};
use mta_core::oracle::{grid_oracle, stationarity_oracle, GRID_MAX_VIEWS};
use mta_core::predict::{predict_ensemble, TraceSummary, DEFAULT_CONFIDENCE_FRACTION};
use mta_core::synthetic::{aggregate, generate_trial, run_trial, OutlierMode, SceneConfig};
use mta_core::{
    AffinityKind, ClassEmbeddings, DiagonalMode, EmbeddingSet, Hyperparams, Method, MtaError, MtaProblem,
};
use rayon::prelude::*;
use serde::Serialize;

pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_FORMAT: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "mta", version, about = "Robust multi-modal mode seeking over augmented views")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Predict a class for each sample bundle.
    Run(RunArgs),
    /// Accuracy of each method on synthetic scenes with planted outliers.
    Bench(BenchArgs),
    /// Check stationarity (and, in 2-D, global optimality on a grid).
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AffinityArg {
    Text,
    Vision,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DiagonalArg {
    Zeroed,
    Kept,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OutlierArg {
    UniformSphere,
    WrongClass,
}

#[derive(Debug, Args)]
struct SolverArgs {
    #[arg(long, default_value_t = 4.0)]
    lambda: f64,
    #[arg(long = "lambda-y", default_value_t = 0.2)]
    lambda_y: f64,
    #[arg(long, default_value_t = 0.3)]
    rho: f64,
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    #[arg(long = "max-outer", default_value_t = 20)]
    max_outer: usize,
    /// Cap for both inner loops.
    #[arg(long = "max-inner", default_value_t = 100)]
    max_inner: usize,
    #[arg(long, value_enum, default_value = "text")]
    affinity: AffinityArg,
    #[arg(long, value_enum, default_value = "zeroed")]
    diagonal: DiagonalArg,
    /// Kept fraction for the confidence-threshold method.
    #[arg(long, default_value_t = DEFAULT_CONFIDENCE_FRACTION)]
    fraction: f64,
}

impl SolverArgs {
    fn params(&self) -> Hyperparams {
        Hyperparams {
            lambda: self.lambda,
            lambda_y: self.lambda_y,
            rho: self.rho,
            epsilon: self.epsilon,
            max_inner_y: self.max_inner,
            max_inner_m: self.max_inner,
            max_outer: self.max_outer,
            affinity: match self.affinity {
                AffinityArg::Text => AffinityKind::Text,
                AffinityArg::Vision => AffinityKind::Vision,
            },
            diagonal: match self.diagonal {
                DiagonalArg::Zeroed => DiagonalMode::Zeroed,
                DiagonalArg::Kept => DiagonalMode::Kept,
            },
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<Hyperparams, String> {
        let p = self.params();
        p.validate().map_err(|e| e.to_string())?;
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(format!("--fraction must lie in (0, 1], got {}", self.fraction));
        }
        Ok(p)
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Bundle directories.
    #[arg(required = true)]
    bundles: Vec<PathBuf>,
    #[arg(long, default_value = "mta")]
    method: Method,
    /// Vote over every class-embedding set in the bundle instead of using the first.
    #[arg(long)]
    ensemble: bool,
    /// Softmax temperature, overriding the bundle header.
    #[arg(long)]
    temperature: Option<f64>,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Worker threads; falls back to MTA_THREADS, then to the number of CPUs.
    #[arg(long, env = "MTA_THREADS")]
    jobs: Option<usize>,
}

#[derive(Debug, Args)]
struct SceneArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long, default_value_t = 64)]
    views: usize,
    #[arg(long = "inlier-noise")]
    inlier_noise: Option<f64>,
    #[arg(long = "outlier-fraction", default_value_t = 0.3)]
    outlier_fraction: f64,
    #[arg(long = "outlier-mode", value_enum, default_value = "wrong-class")]
    outlier_mode: OutlierArg,
    #[arg(long = "outlier-noise")]
    outlier_noise: Option<f64>,
    #[arg(long = "text-noise")]
    text_noise: Option<f64>,
    #[arg(long, default_value_t = 100.0)]
    temperature: f64,
}

impl SceneArgs {
    fn config(&self) -> Result<SceneConfig, String> {
        let d = SceneConfig::default();
        let c = SceneConfig {
            seed: self.seed,
            dim: self.dim,
            n_classes: self.classes,
            n_views: self.views,
            inlier_noise: self.inlier_noise.unwrap_or(d.inlier_noise),
            outlier_fraction: self.outlier_fraction,
            outlier_mode: match self.outlier_mode {
                OutlierArg::UniformSphere => OutlierMode::UniformSphere,
                OutlierArg::WrongClass => OutlierMode::WrongClass,
            },
            outlier_noise: self.outlier_noise.unwrap_or(d.outlier_noise),
            text_noise: self.text_noise.unwrap_or(d.text_noise),
            temperature: self.temperature,
        };
        c.validate().map_err(|e| e.to_string())?;
        Ok(c)
    }
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[command(flatten)]
    scene: SceneArgs,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Comma-separated methods.
    #[arg(long, value_delimiter = ',', default_value = "mta,meanshift,threshold,mean,zeroshot")]
    methods: Vec<Method>,
    #[command(flatten)]
    solver: SolverArgs,
    /// Include wall time in the records (makes output non-reproducible).
    #[arg(long)]
    timing: bool,
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long, env = "MTA_THREADS")]
    jobs: Option<usize>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Bundle directories; random 2-D instances are used when none are given.
    bundles: Vec<PathBuf>,
    /// Number of random instances.
    #[arg(long, default_value_t = 20)]
    random: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "grid-resolution", default_value_t = 200)]
    grid_resolution: usize,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

/// Parse `args` (including the program name) and execute. Records go to
/// `out` unless `--output` is given; diagnostics go to `err`.
pub fn run_command<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a, out),
        Command::Bench(a) => cmd_bench(a, out),
        Command::Verify(a) => cmd_verify(a, out),
    };
    match result {
        Ok(code) => code,
        Err(Failure { code, message }) => {
            let _ = writeln!(err, "mta: {message}");
            code
        }
    }
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn io(context: &str, e: io::Error) -> Self {
        Self {
            code: EXIT_FAILURE,
            message: format!("{context}: {e}"),
        }
    }
}

type CmdResult = Result<i32, Failure>;

fn open_output<'a>(path: &Option<PathBuf>, out: &'a mut dyn Write) -> Result<Box<dyn Write + 'a>, Failure> {
    match path {
        Some(p) => {
            let f = File::create(p).map_err(|e| Failure::io(&p.display().to_string(), e))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(out)),
    }
}

fn emit<R: Serialize>(w: &mut dyn Write, record: &R) -> Result<(), Failure> {
    let line = serde_json::to_string(record).expect("records serialize");
    writeln!(w, "{line}").map_err(|e| Failure::io("writing output", e))
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, Failure> {
    if jobs == Some(0) {
        return Err(Failure::usage("--jobs must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Failure {
            code: EXIT_FAILURE,
            message: format!("thread pool: {e}"),
        })
}

#[derive(Serialize)]
struct ParamsEcho {
    lambda: f64,
    lambda_y: f64,
    rho: f64,
    epsilon: f64,
    max_inner: usize,
    max_outer: usize,
    affinity: AffinityKind,
    diagonal: DiagonalMode,
    fraction: f64,
}

impl ParamsEcho {
    fn new(p: &Hyperparams, fraction: f64) -> Self {
        Self {
            lambda: p.lambda,
            lambda_y: p.lambda_y,
            rho: p.rho,
            epsilon: p.epsilon,
            max_inner: p.max_inner_m,
            max_outer: p.max_outer,
            affinity: p.affinity,
            diagonal: p.diagonal,
            fraction,
        }
    }
}

#[derive(Serialize)]
struct PredictionRecord<'a> {
    schema_version: u32,
    record: &'static str,
    bundle: String,
    method: Method,
    predicted_class: usize,
    class_name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    correct: Option<bool>,
    similarities: Vec<f64>,
    inlierness: Option<Vec<f64>>,
    votes: Option<Vec<usize>>,
    trace: Option<TraceSummary>,
    params: &'a ParamsEcho,
    wall_time_ms: f64,
}

#[derive(Serialize)]
struct ErrorRecord {
    schema_version: u32,
    record: &'static str,
    bundle: String,
    error: String,
}

enum SampleOutcome {
    Ok(String),
    Err(String),
}

fn with_temperature(
    classes: Vec<ClassEmbeddings<f64>>,
    temperature: Option<f64>,
) -> Result<Vec<ClassEmbeddings<f64>>, MtaError> {
    match temperature {
        None => Ok(classes),
        Some(t) => classes
            .into_iter()
            .map(|c| ClassEmbeddings::new(c.classes().clone(), t, c.class_names().to_vec()))
            .collect(),
    }
}

fn run_one(path: &Path, a: &RunArgs, params: &Hyperparams, echo: &ParamsEcho) -> SampleOutcome {
    let bundle = path.display().to_string();
    let fail = |error: String| {
        SampleOutcome::Err(
            serde_json::to_string(&ErrorRecord {
                schema_version: SCHEMA_VERSION,
                record: "error",
                bundle: bundle.clone(),
                error,
            })
            .expect("records serialize"),
        )
    };
    let sample = match read_bundle::<f64>(path) {
        Ok(s) => s,
        Err(e) => return fail(e.to_string()),
    };
    let classes = match with_temperature(sample.class_sets, a.temperature) {
        Ok(c) => c,
        Err(e) => return fail(BundleError::from(e).to_string()),
    };
    let sets = if a.ensemble { &classes[..] } else { &classes[..1] };
    let start = Instant::now();
    let report = match predict_ensemble(a.method, &sample.views, sets, params, a.solver.fraction) {
        Ok(r) => r,
        Err(e) => return fail(e.to_string()),
    };
    let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    let label = sample.header.label;
    let record = PredictionRecord {
        schema_version: SCHEMA_VERSION,
        record: "prediction",
        bundle,
        method: a.method,
        predicted_class: report.predicted_class,
        class_name: report.class_name,
        label,
        correct: label.map(|l| l == report.predicted_class),
        similarities: report.similarities,
        inlierness: report.inlierness,
        votes: report.votes,
        trace: report.trace,
        params: echo,
        wall_time_ms,
    };
    SampleOutcome::Ok(serde_json::to_string(&record).expect("records serialize"))
}

fn cmd_run(a: RunArgs, out: &mut dyn Write) -> CmdResult {
    let params = a.solver.validate().map_err(Failure::usage)?;
    if let Some(t) = a.temperature {
        if !(t.is_finite() && t > 0.0) {
            return Err(Failure::usage(format!("--temperature must be finite and > 0, got {t}")));
        }
    }
    let echo = ParamsEcho::new(&params, a.solver.fraction);
    let pool = pool(a.jobs)?;
    // collect keeps input order whatever order the workers finish in
    let outcomes: Vec<SampleOutcome> =
        pool.install(|| a.bundles.par_iter().map(|p| run_one(p, &a, &params, &echo)).collect());
    let mut w = open_output(&a.output, out)?;
    let mut code = EXIT_OK;
    for o in outcomes {
        let line = match o {
            SampleOutcome::Ok(l) => l,
            SampleOutcome::Err(l) => {
                code = EXIT_FORMAT;
                l
            }
        };
        writeln!(w, "{line}").map_err(|e| Failure::io("writing output", e))?;
    }
    w.flush().map_err(|e| Failure::io("writing output", e))?;
    Ok(code)
}

#[derive(Serialize)]
struct BenchRecord<'a> {
    schema_version: u32,
    record: &'static str,
    config: &'a SceneConfig,
    params: &'a ParamsEcho,
    method: Method,
    trials: usize,
    correct: usize,
    accuracy: f64,
    ci_low: f64,
    ci_high: f64,
    mean_inlier_mass: Option<f64>,
    mean_iterations: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_time_s: Option<f64>,
}

fn cmd_bench(a: BenchArgs, out: &mut dyn Write) -> CmdResult {
    let params = a.solver.validate().map_err(Failure::usage)?;
    let config = a.scene.config().map_err(Failure::usage)?;
    if a.trials == 0 {
        return Err(Failure::usage("--trials must be at least 1"));
    }
    if a.methods.is_empty() {
        return Err(Failure::usage("--methods needs at least one method"));
    }
    let pool = pool(a.jobs)?;
    let fraction = a.solver.fraction;
    let outcomes = pool
        .install(|| {
            (0..a.trials as u64)
                .into_par_iter()
                .map(|t| run_trial(&config, &a.methods, &params, fraction, t))
                .collect::<Result<Vec<_>, _>>()
        })
        .map_err(|e| Failure::usage(e.to_string()))?;
    let result = aggregate(&config, &a.methods, &outcomes);
    let echo = ParamsEcho::new(&params, fraction);
    let mut w = open_output(&a.output, out)?;
    for s in &result.methods {
        emit(
            &mut *w,
            &BenchRecord {
                schema_version: SCHEMA_VERSION,
                record: "bench",
                config: &result.config,
                params: &echo,
                method: s.method,
                trials: s.trials,
                correct: s.correct,
                accuracy: s.accuracy,
                ci_low: s.ci_low,
                ci_high: s.ci_high,
                mean_inlier_mass: s.mean_inlier_mass,
                mean_iterations: s.mean_iterations,
                wall_time_s: a.timing.then_some(s.seconds),
            },
        )?;
    }
    w.flush().map_err(|e| Failure::io("writing output", e))?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct GridRecord {
    resolution: usize,
    min_objective: f64,
    argmin: [f64; 2],
    gap: f64,
    within_tolerance: bool,
}

#[derive(Serialize)]
struct VerifyRecord {
    schema_version: u32,
    record: &'static str,
    source: String,
    n_views: usize,
    dim: usize,
    converged: bool,
    objective: f64,
    gradient_norm: f64,
    scale: f64,
    y_residual: f64,
    stationary: bool,
    grid: Option<GridRecord>,
}

const GRADIENT_TOLERANCE: f64 = 1e-4;
const Y_RESIDUAL_TOLERANCE: f64 = 1e-5;
const GRID_TOLERANCE: f64 = 1e-3;

fn verify_one(
    source: String,
    views: &EmbeddingSet<f64>,
    classes: &ClassEmbeddings<f64>,
    params: &Hyperparams,
    resolution: usize,
) -> Result<VerifyRecord, MtaError> {
    let problem = MtaProblem::new(views, classes, params)?;
    let sol = problem.solve();
    let objective = sol.trace.final_objective().unwrap_or(f64::NAN);
    let st = stationarity_oracle(views, classes, &sol, params)?;
    let grid = if views.dim() == 2 && views.n_views() <= GRID_MAX_VIEWS {
        let g = grid_oracle(views, classes, params, resolution)?;
        let gap = objective - g.min_objective;
        Some(GridRecord {
            resolution,
            min_objective: g.min_objective,
            argmin: g.argmin,
            gap,
            within_tolerance: gap <= GRID_TOLERANCE,
        })
    } else {
        None
    };
    Ok(VerifyRecord {
        schema_version: SCHEMA_VERSION,
        record: "verify",
        source,
        n_views: views.n_views(),
        dim: views.dim(),
        converged: sol.trace.converged,
        objective,
        gradient_norm: st.gradient_norm,
        scale: st.scale,
        y_residual: st.y_residual,
        stationary: st.gradient_norm <= GRADIENT_TOLERANCE * st.scale && st.y_residual <= Y_RESIDUAL_TOLERANCE,
        grid,
    })
}

fn cmd_verify(a: VerifyArgs, out: &mut dyn Write) -> CmdResult {
    let params = a.solver.validate().map_err(Failure::usage)?;
    if a.grid_resolution < 2 {
        return Err(Failure::usage("--grid-resolution must be at least 2"));
    }
    let mut w = open_output(&a.output, out)?;
    let mut code = EXIT_OK;
    if a.bundles.is_empty() {
        let scene = SceneConfig {
            seed: a.seed,
            dim: 2,
            n_classes: 3,
            n_views: GRID_MAX_VIEWS,
            ..Default::default()
        };
        for t in 0..a.random as u64 {
            let s = generate_trial(&scene, t).map_err(|e| Failure::usage(e.to_string()))?;
            let rec = verify_one(format!("random:{}:{t}", a.seed), &s.views, &s.classes, &params, a.grid_resolution)
                .map_err(|e| Failure::usage(e.to_string()))?;
            emit(&mut *w, &rec)?;
        }
    }
    for path in &a.bundles {
        let source = path.display().to_string();
        let rec = read_bundle::<f64>(path)
            .map_err(|e| e.to_string())
            .and_then(|s| {
                verify_one(source.clone(), &s.views, &s.class_sets[0], &params, a.grid_resolution)
                    .map_err(|e| e.to_string())
            });
        match rec {
            Ok(r) => emit(&mut *w, &r)?,
            Err(error) => {
                code = EXIT_FORMAT;
                emit(
                    &mut *w,
                    &ErrorRecord {
                        schema_version: SCHEMA_VERSION,
                        record: "error",
                        bundle: source,
                        error,
                    },
                )?;
            }
        }
    }
    w.flush().map_err(|e| Failure::io("writing output", e))?;
    Ok(code)
}
