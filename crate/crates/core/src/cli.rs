//! The `igeom` command-line front end.
//!
//! Every subcommand prints one JSON envelope on stdout:
//! `{schema_version, subcommand, config, payload, wall_time_ms}`. `config`
//! echoes the parsed flags with the seed resolved, so feeding it back through
//! [`Command::from_echo`] reproduces the payload. Failures print an envelope
//! whose payload holds an `error` record and exit with
//! [`Error::exit_code`]: 2 for bad arguments, 3 for numerical failures, 4 for IO.
//!
//! The seed defaults to [`DEFAULT_SEED`]; the `INFOGEO_SEED` environment
//! variable replaces that default, and `--seed` beats both.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::emcore::{self, Constraint, EmOptions, MaxEntOptions, MaxEntProblem};
use crate::infogeo::{
    self, BernoulliFamily, DualPoint, DuallyFlat, FisherMatrix, GaussianFamily, ParametricFamily,
};
use crate::models::{self, GaussianMixture, UnivariateGaussian};
use crate::natgrad::{self, Activation, Dataset, Network, Optimizer, TrainConfig};
use crate::rng;
use crate::surfaces::SurfacePatch;
use crate::{Error, Result};

pub const SCHEMA_VERSION: &str = "1.0";
pub const DEFAULT_SEED: u64 = 0;
pub const SEED_ENV: &str = "INFOGEO_SEED";

#[derive(Debug, Parser)]
#[command(name = "igeom", version, about = "Information-geometry toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "subcommand", content = "config", rename_all = "kebab-case")]
pub enum Command {
    /// Write a two-class GPA-like dataset, one value per line.
    GenGpa(GenGpaArgs),
    /// Fit a univariate Gaussian mixture by EM.
    EmFit(EmFitArgs),
    /// Fisher information matrix of a parametric family.
    Fim(FimArgs),
    /// Curvature report for a parametric surface.
    Curvature(CurvatureArgs),
    /// Maximum-entropy distribution under moment constraints.
    Maxent(MaxentArgs),
    /// Pythagorean relation for a triple in a dually flat structure.
    Pythagoras(PythagorasArgs),
    /// Monte-Carlo check of the Cramér-Rao bound for a Gaussian mean.
    Crlb(CrlbArgs),
    /// Train a small network on two Gaussian blobs.
    NatgradTrain(NatgradArgs),
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct GenGpaArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 20)]
    pub n_per_class: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmAlgorithm {
    Classic,
    Geometric,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EmFitArgs {
    /// Dataset path, or `-` for stdin.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    #[arg(long)]
    pub update_weights: bool,
    #[arg(long, value_enum, default_value_t = EmAlgorithm::Classic)]
    pub algorithm: EmAlgorithm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FimFamily {
    Gaussian,
    Bernoulli,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FimMethod {
    Analytic,
    Empirical,
    KlHessian,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct FimArgs {
    #[arg(long, value_enum)]
    pub family: FimFamily,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub mu: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Success probability for the Bernoulli family.
    #[arg(long, default_value_t = 0.5)]
    pub p: f64,
    #[arg(long, value_enum, default_value_t = FimMethod::Analytic)]
    pub method: FimMethod,
    /// Sample count for the empirical estimator.
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SurfaceKind {
    Torus,
    Sphere,
    Cylinder,
    Plane,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct CurvatureArgs {
    #[arg(long, value_enum)]
    pub surface: SurfaceKind,
    /// Torus centre-circle radius.
    #[arg(long = "R", default_value_t = 2.0)]
    pub big_r: f64,
    /// Tube, sphere or cylinder radius.
    #[arg(long = "r", default_value_t = 1.0)]
    pub r: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub theta: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub phi: f64,
    /// Report an n×n grid over the periodic angles instead of one point.
    #[arg(long)]
    pub grid: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct MaxentArgs {
    /// JSON problem `{support, constraints, targets}`, or `-` for stdin.
    #[arg(long)]
    pub problem: PathBuf,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StructureKind {
    Quadratic,
    Simplex,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct PythagorasArgs {
    #[arg(long, value_enum)]
    pub structure: StructureKind,
    /// Coordinates for `quadratic`, outcomes for `simplex`.
    #[arg(long, default_value_t = 3)]
    pub dim: usize,
    /// Build R so that the triangle has an orthogonal corner at Q.
    #[arg(long)]
    pub orthogonal: bool,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct CrlbArgs {
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 10_000)]
    pub trials: usize,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerArg {
    Sgd,
    Ngd,
    CwNgd,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct NatgradArgs {
    #[arg(long, value_enum, default_value_t = OptimizerArg::Sgd)]
    pub optimizer: OptimizerArg,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.1)]
    pub gamma: f64,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Gradient-norm ceiling; 0 disables clipping.
    #[arg(long, default_value_t = 0.5)]
    pub clip: f64,
    #[arg(long, default_value_t = 8)]
    pub hidden: usize,
    #[arg(long, default_value_t = 100)]
    pub n_per_class: usize,
    #[arg(long, default_value_t = 1.5)]
    pub separation: f64,
    /// Also write the loss trace as `step,loss` CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenGpa(_) => "gen-gpa",
            Command::EmFit(_) => "em-fit",
            Command::Fim(_) => "fim",
            Command::Curvature(_) => "curvature",
            Command::Maxent(_) => "maxent",
            Command::Pythagoras(_) => "pythagoras",
            Command::Crlb(_) => "crlb",
            Command::NatgradTrain(_) => "natgrad-train",
        }
    }

    fn seed_slot(&mut self) -> Option<&mut Option<u64>> {
        match self {
            Command::GenGpa(a) => Some(&mut a.seed),
            Command::EmFit(a) => Some(&mut a.seed),
            Command::Fim(a) => Some(&mut a.seed),
            Command::Pythagoras(a) => Some(&mut a.seed),
            Command::Crlb(a) => Some(&mut a.seed),
            Command::NatgradTrain(a) => Some(&mut a.seed),
            Command::Curvature(_) | Command::Maxent(_) => None,
        }
    }

    /// Fills an absent seed from `env_seed` (the value of `INFOGEO_SEED`) or the default.
    pub fn resolve_seed(mut self, env_seed: Option<&str>) -> Result<Self> {
        if let Some(slot) = self.seed_slot() {
            if slot.is_none() {
                let seed = match env_seed {
                    Some(s) => s.trim().parse().map_err(|_| {
                        Error::InvalidArgument(format!(
                            "{SEED_ENV}={s:?} is not an unsigned integer"
                        ))
                    })?,
                    None => DEFAULT_SEED,
                };
                *slot = Some(seed);
            }
        }
        Ok(self)
    }

    /// Rebuilds a command from an envelope's `subcommand` and `config`.
    pub fn from_echo(subcommand: &str, config: &Value) -> Result<Self> {
        Ok(serde_json::from_value(
            json!({ "subcommand": subcommand, "config": config }),
        )?)
    }

    fn config(&self) -> Value {
        match serde_json::to_value(self) {
            Ok(Value::Object(mut m)) => m.remove("config").unwrap_or(Value::Null),
            _ => Value::Null,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub schema_version: String,
    pub subcommand: String,
    pub config: Value,
    pub payload: Value,
    pub wall_time_ms: u64,
}

/// Runs one command. `stdin` backs any `-` input path.
pub fn run(command: &Command, stdin: &mut dyn BufRead) -> (Envelope, i32) {
    let start = Instant::now();
    let (payload, code) = match dispatch(command, stdin) {
        Ok(p) => (p, 0),
        Err(e) => (error_payload(&e), e.exit_code()),
    };
    let envelope = Envelope {
        schema_version: SCHEMA_VERSION.into(),
        subcommand: command.name().into(),
        config: command.config(),
        payload,
        wall_time_ms: start.elapsed().as_millis() as u64,
    };
    (envelope, code)
}

/// Parses `args`, runs, prints the envelope and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let env_seed = std::env::var(SEED_ENV).ok();
    let command = match cli.command.resolve_seed(env_seed.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let stdin = std::io::stdin();
    let (envelope, code) = run(&command, &mut stdin.lock());
    let out = std::io::stdout();
    let mut out = out.lock();
    let printed = serde_json::to_writer_pretty(&mut out, &envelope)
        .map_err(Error::from)
        .and_then(|_| {
            writeln!(out)?;
            Ok(())
        });
    if code != 0 {
        if let Some(msg) = envelope.payload["error"]["message"].as_str() {
            eprintln!("error: {msg}");
        }
    }
    match printed {
        Ok(()) => code,
        Err(e) => e.exit_code(),
    }
}

fn error_payload(err: &Error) -> Value {
    let kind = match err {
        Error::InvalidArgument(_) => "invalid_argument",
        Error::Degenerate(_) => "degenerate",
        Error::TrajectoryEscape { .. } => "trajectory_escape",
        Error::Support(_) => "support",
        Error::Integration(_) => "integration",
        Error::ComponentCollapse { .. } => "component_collapse",
        Error::Infeasible(_) => "infeasible",
        Error::NotConverged { .. } => "not_converged",
        Error::Unsupported(_) => "unsupported",
        Error::SolveFailed(_) => "solve_failed",
        Error::Diverged { .. } => "diverged",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
    };
    let mut record =
        json!({ "kind": kind, "message": err.to_string(), "exit_code": err.exit_code() });
    match err {
        Error::ComponentCollapse {
            component,
            partial: Some(state),
            ..
        } => {
            record["component"] = json!(component);
            record["partial"] = json!({
                "params": mixture_params(&state.mixture),
                "iterations": state.iteration,
                "loglik_trace": state.loglik_trace,
            });
        }
        Error::Diverged { step, trace } => {
            record["step"] = json!(step);
            record["loss_trace"] = json!(trace);
        }
        _ => {}
    }
    json!({ "error": record })
}

fn dispatch(command: &Command, stdin: &mut dyn BufRead) -> Result<Value> {
    match command {
        Command::GenGpa(a) => cmd_gen_gpa(a),
        Command::EmFit(a) => cmd_em_fit(a, stdin),
        Command::Fim(a) => cmd_fim(a),
        Command::Curvature(a) => cmd_curvature(a),
        Command::Maxent(a) => cmd_maxent(a, stdin),
        Command::Pythagoras(a) => cmd_pythagoras(a),
        Command::Crlb(a) => cmd_crlb(a),
        Command::NatgradTrain(a) => cmd_natgrad_train(a),
    }
}

fn seed_of(seed: Option<u64>) -> u64 {
    seed.unwrap_or(DEFAULT_SEED)
}

fn read_input(path: &Path, stdin: &mut dyn BufRead) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    if path == Path::new("-") {
        stdin.read_to_end(&mut buf)?;
    } else {
        File::open(path)?.read_to_end(&mut buf)?;
    }
    Ok(buf)
}

/// `n` draws from `N(3.7, 0.5)` then `n` from `N(2.8, 0.15)`, clipped to
/// `[0, 4]` and shuffled, all on the seed's sampling and shuffle streams.
pub fn gpa_dataset(n_per_class: usize, seed: u64) -> Result<Vec<f64>> {
    if n_per_class == 0 {
        return Err(Error::InvalidArgument(
            "n_per_class must be at least 1".into(),
        ));
    }
    let mut rng = rng::stream(seed, rng::STREAM_SAMPLE);
    let clip = Some((0.0, 4.0));
    let mut data = models::sample_with(
        &UnivariateGaussian::new(3.7, 0.5)?,
        n_per_class,
        &mut rng,
        clip,
    );
    data.extend(models::sample_with(
        &UnivariateGaussian::new(2.8, 0.15)?,
        n_per_class,
        &mut rng,
        clip,
    ));
    data.shuffle(&mut rng::stream(seed, rng::STREAM_SHUFFLE));
    Ok(data)
}

pub fn cmd_gen_gpa(a: &GenGpaArgs) -> Result<Value> {
    let data = gpa_dataset(a.n_per_class, seed_of(a.seed))?;
    let mut out = BufWriter::new(File::create(&a.out)?);
    models::write_dataset(&mut out, &data)?;
    out.flush()?;
    let mean = data.iter().sum::<f64>() / data.len() as f64;
    Ok(json!({ "path": a.out, "n": data.len(), "mean": mean }))
}

/// Random start: each mean uniform over the data range, each deviation
/// uniform in `(0.05, 1]` times the data's standard deviation; equal weights.
pub fn random_init(data: &[f64], k: usize, seed: u64) -> Result<GaussianMixture> {
    if k == 0 || data.is_empty() {
        return Err(Error::InvalidArgument(
            "need k ≥ 1 and a non-empty dataset".into(),
        ));
    }
    let lo = data.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let spread = models::mle_gaussian(data).map(|g| g.sigma).unwrap_or(1.0);
    let mut rng = rng::stream(seed, rng::STREAM_INIT);
    let comps = (0..k)
        .map(|_| {
            let mu = lo + (hi - lo) * rng.random::<f64>();
            let sigma = spread * (0.05 + 0.95 * rng.random::<f64>());
            UnivariateGaussian::new(mu, sigma)
        })
        .collect::<Result<Vec<_>>>()?;
    GaussianMixture::uniform(comps)
}

fn mixture_params(mix: &GaussianMixture) -> Value {
    let sorted = mix.sorted_by_mean();
    json!({
        "weights": sorted.weights(),
        "means": sorted.components().iter().map(|c| c.mu).collect::<Vec<_>>(),
        "sigmas": sorted.components().iter().map(|c| c.sigma).collect::<Vec<_>>(),
    })
}

pub fn cmd_em_fit(a: &EmFitArgs, stdin: &mut dyn BufRead) -> Result<Value> {
    let bytes = read_input(&a.data, stdin)?;
    let data = models::read_dataset(BufReader::new(bytes.as_slice()))?;
    let init = random_init(&data, a.k, seed_of(a.seed))?;
    let opts = EmOptions {
        tol: a.tol,
        max_iter: a.max_iter,
        update_weights: a.update_weights,
    };
    if !(a.tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tol must be positive, got {}",
            a.tol
        )));
    }
    match a.algorithm {
        EmAlgorithm::Classic => {
            let state = emcore::run_em(&data, &init, &opts)?;
            Ok(json!({
                "algorithm": "classic",
                "init": mixture_params(&init),
                "params": mixture_params(&state.mixture),
                "iterations": state.iteration,
                "converged": state.converged,
                "loglik": state.loglik,
                "loglik_trace": state.loglik_trace,
            }))
        }
        EmAlgorithm::Geometric => {
            let trace = emcore::run_em_geometric(&data, &init, &opts)?;
            let n = data.len() as f64;
            let kl: Vec<f64> = trace.steps.iter().map(|s| s.kl).collect();
            Ok(json!({
                "algorithm": "geometric",
                "init": mixture_params(&init),
                "params": mixture_params(&trace.mixture),
                "iterations": trace.iterations,
                "converged": trace.converged,
                "loglik": -n * kl.last().copied().unwrap_or(f64::NAN),
                "loglik_trace": kl.iter().map(|k| -n * k).collect::<Vec<_>>(),
                "kl_trace": kl,
            }))
        }
    }
}

pub fn cmd_fim(a: &FimArgs) -> Result<Value> {
    let (family, theta): (&dyn ParametricFamily, Vec<f64>) = match a.family {
        FimFamily::Gaussian => (&GaussianFamily, vec![a.mu, a.sigma]),
        FimFamily::Bernoulli => (&BernoulliFamily, vec![a.p]),
    };
    family.validate(&theta)?;
    let matrix: FisherMatrix = match (a.method, a.family) {
        (FimMethod::Analytic, FimFamily::Gaussian) => infogeo::fim_analytic_gaussian(a.sigma)?,
        (FimMethod::Analytic, FimFamily::Bernoulli) => {
            FisherMatrix::from_rows(&[vec![1.0 / (a.p * (1.0 - a.p))]])?
        }
        (FimMethod::Empirical, _) => {
            infogeo::fim_monte_carlo(family, &theta, a.samples, seed_of(a.seed))?
        }
        (FimMethod::KlHessian, _) => infogeo::fim_from_kl_hessian(family, &theta)?,
    };
    Ok(json!({
        "family": family.name(),
        "theta": theta,
        "method": a.method,
        "matrix": matrix.rows(),
        "eigenvalues": matrix.eigenvalues(),
        "positive_definite": matrix.is_positive_definite(),
    }))
}

fn surface_of(a: &CurvatureArgs) -> Result<(SurfacePatch, Value)> {
    let positive = |name: &str, v: f64| {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "{name} must be positive, got {v}"
            )))
        }
    };
    Ok(match a.surface {
        SurfaceKind::Torus => {
            positive("R", a.big_r)?;
            positive("r", a.r)?;
            if a.r >= a.big_r {
                return Err(Error::InvalidArgument(format!(
                    "torus needs r < R, got r={} R={}",
                    a.r, a.big_r
                )));
            }
            (
                SurfacePatch::torus(a.big_r, a.r),
                json!({ "R": a.big_r, "r": a.r }),
            )
        }
        SurfaceKind::Sphere => {
            positive("r", a.r)?;
            (SurfacePatch::sphere(a.r), json!({ "r": a.r }))
        }
        SurfaceKind::Cylinder => {
            positive("r", a.r)?;
            (SurfacePatch::cylinder(a.r), json!({ "r": a.r }))
        }
        SurfaceKind::Plane => (SurfacePatch::plane(), json!({})),
    })
}

fn curvature_record(surface: &SurfacePatch, params: &Value, u: f64, v: f64) -> Result<Value> {
    let first = surface.first_fundamental_form(u, v)?;
    Ok(json!({
        "surface": surface.name(),
        "params": params,
        "u": u,
        "v": v,
        "E": first.e,
        "F": first.f,
        "G": first.g,
        "K_gauss": surface.gaussian_curvature(u, v)?,
        "K_sect": surface.sectional_curvature(u, v)?,
        "K_intrinsic": surface.intrinsic_curvature(u, v)?,
    }))
}

/// Coordinates are `(u, v) = (φ, θ)`.
pub fn cmd_curvature(a: &CurvatureArgs) -> Result<Value> {
    let (surface, params) = surface_of(a)?;
    match a.grid {
        None => Ok(json!({ "records": [curvature_record(&surface, &params, a.phi, a.theta)?] })),
        Some(0) => Err(Error::InvalidArgument("grid size must be positive".into())),
        Some(n) => {
            let angles = crate::surfaces::angle_grid(n);
            let mut records = Vec::with_capacity(n * n);
            for &theta in &angles {
                for &phi in &angles {
                    if surface.domain().contains(phi, theta) {
                        records.push(curvature_record(&surface, &params, phi, theta)?);
                    }
                }
            }
            Ok(json!({ "records": records }))
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    support: Vec<f64>,
    #[serde(default)]
    constraints: Vec<Constraint>,
    #[serde(default)]
    targets: Vec<f64>,
}

pub fn cmd_maxent(a: &MaxentArgs, stdin: &mut dyn BufRead) -> Result<Value> {
    let bytes = read_input(&a.problem, stdin)?;
    let file: ProblemFile = serde_json::from_slice(&bytes)?;
    let problem = MaxEntProblem::with_constraints(file.support, &file.constraints, file.targets)?;
    let sol = emcore::maxent_solve(
        &problem,
        &MaxEntOptions {
            tol: a.tol,
            max_iter: a.max_iter,
        },
    )?;
    Ok(json!({
        "support": sol.distribution.support(),
        "probs": sol.distribution.probs(),
        "lambdas": sol.lambdas,
        "log_partition": sol.log_partition,
        "entropy": sol.entropy,
        "iterations": sol.iterations,
        "constraint_residual": sol.constraint_residual,
    }))
}

fn triple<S: DuallyFlat>(s: &S, orthogonal: bool, rng: &mut rng::Rng) -> Result<[DualPoint; 3]> {
    let p = s.random_point(rng);
    let q = s.random_point(rng);
    let r = if orthogonal {
        let dir = s.random_theta(rng);
        infogeo::orthogonal_completion(s, &p, &q, &dir)?
    } else {
        s.random_point(rng)
    };
    Ok([p, q, r])
}

pub fn cmd_pythagoras(a: &PythagorasArgs) -> Result<Value> {
    if a.dim < 2 && a.structure == StructureKind::Simplex {
        return Err(Error::InvalidArgument(
            "simplex needs at least 2 outcomes".into(),
        ));
    }
    if a.dim == 0 {
        return Err(Error::InvalidArgument("dim must be positive".into()));
    }
    let mut rng = rng::stream(seed_of(a.seed), rng::STREAM_MONTE_CARLO);
    let (name, [p, q, r], res, orth) = match a.structure {
        StructureKind::Quadratic => report(
            &infogeo::QuadraticStructure { dim: a.dim },
            "quadratic",
            a.orthogonal,
            &mut rng,
        )?,
        StructureKind::Simplex => report(
            &infogeo::SimplexStructure { outcomes: a.dim },
            "simplex",
            a.orthogonal,
            &mut rng,
        )?,
        StructureKind::Gaussian => report(
            &infogeo::GaussianNaturalStructure,
            "gaussian",
            a.orthogonal,
            &mut rng,
        )?,
    };
    Ok(json!({
        "structure": name,
        "P": p,
        "Q": q,
        "R": r,
        "D_PQ": res.d_pq,
        "D_QR": res.d_qr,
        "D_PR": res.d_pr,
        "gap": res.gap,
        "inner": res.inner,
        "orthogonality": orth,
    }))
}

type Report = (
    &'static str,
    [DualPoint; 3],
    infogeo::PythagorasResidual,
    infogeo::OrthogonalityReport,
);

fn report<S: DuallyFlat>(
    s: &S,
    name: &'static str,
    orthogonal: bool,
    rng: &mut rng::Rng,
) -> Result<Report> {
    let [p, q, r] = triple(s, orthogonal, rng)?;
    let res = infogeo::pythagoras_residual(s, &p, &q, &r);
    let orth = infogeo::orthogonality_check(s, &p, &q, &r);
    Ok((name, [p, q, r], res, orth))
}

pub fn cmd_crlb(a: &CrlbArgs) -> Result<Value> {
    Ok(serde_json::to_value(natgrad::crlb_check(
        a.sigma,
        a.n,
        a.trials,
        seed_of(a.seed),
    )?)?)
}

pub fn cmd_natgrad_train(a: &NatgradArgs) -> Result<Value> {
    let seed = seed_of(a.seed);
    if a.hidden == 0 {
        return Err(Error::InvalidArgument(
            "hidden width must be positive".into(),
        ));
    }
    let data = Dataset::blobs(a.n_per_class, a.separation, seed)?;
    let net = Network::init(
        &[2, a.hidden, 1],
        Activation::Relu,
        Activation::Sigmoid,
        seed,
    )?;
    let cfg = TrainConfig {
        optimizer: match a.optimizer {
            OptimizerArg::Sgd => Optimizer::Sgd,
            OptimizerArg::Ngd => Optimizer::Ngd,
            OptimizerArg::CwNgd => Optimizer::CwNgd,
        },
        lr: a.lr,
        damping: a.gamma,
        epochs: a.epochs,
        batch: a.batch,
        seed,
        clip: (a.clip > 0.0).then_some(a.clip),
    };
    let result = natgrad::train(&net, &data, &cfg);
    let losses = match &result {
        Ok(r) => r.losses.clone(),
        Err(Error::Diverged { trace, .. }) => trace.clone(),
        Err(_) => Vec::new(),
    };
    if let Some(path) = &a.csv {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "step,loss")?;
        for (step, loss) in losses.iter().enumerate() {
            writeln!(out, "{step},{loss:.17e}")?;
        }
        out.flush()?;
    }
    let report = result?;
    Ok(json!({
        "optimizer": a.optimizer,
        "steps": report.losses.len() - 1,
        "initial_loss": report.losses[0],
        "final_loss": report.losses.last(),
        "loss_trace": report.losses,
        "grad_norms": report.grad_norms,
        "params": report.network.params(),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Command {
        Cli::try_parse_from(std::iter::once("igeom").chain(args.iter().copied()))
            .unwrap()
            .command
    }

    #[test]
    fn seed_precedence() {
        let c = parse(&["crlb", "--seed", "7"])
            .resolve_seed(Some("3"))
            .unwrap();
        assert!(matches!(c, Command::Crlb(CrlbArgs { seed: Some(7), .. })));
        let c = parse(&["crlb"]).resolve_seed(Some("3")).unwrap();
        assert!(matches!(c, Command::Crlb(CrlbArgs { seed: Some(3), .. })));
        let c = parse(&["crlb"]).resolve_seed(None).unwrap();
        assert!(matches!(
            c,
            Command::Crlb(CrlbArgs {
                seed: Some(DEFAULT_SEED),
                ..
            })
        ));
        assert!(parse(&["crlb"]).resolve_seed(Some("abc")).is_err());
    }

    #[test]
    fn echo_round_trip() {
        let c = parse(&[
            "fim",
            "--family",
            "gaussian",
            "--sigma",
            "2",
            "--method",
            "kl-hessian",
        ])
        .resolve_seed(None)
        .unwrap();
        let back = Command::from_echo(c.name(), &c.config()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_flags_are_rejected() {
        assert!(Cli::try_parse_from(["igeom", "crlb", "--bogus", "1"]).is_err());
    }

    #[test]
    fn gpa_dataset_is_clipped_and_seeded() {
        let a = gpa_dataset(20, 5).unwrap();
        assert_eq!(a.len(), 40);
        assert!(a.iter().all(|x| (0.0..=4.0).contains(x)));
        assert_eq!(a, gpa_dataset(20, 5).unwrap());
        assert_ne!(a, gpa_dataset(20, 6).unwrap());
    }
}
