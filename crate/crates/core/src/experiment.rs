//! Experiment configuration, the training driver, error evaluation and
//! result/parameter files.

use std::f64::consts::PI;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{boundary_data_mean, LossBreakdown, LossStrategy, PinnObjective, BOUNDARY_MEAN_SAMPLES};
use crate::net::{Network, NetworkArchitecture, ParameterVector, DEFAULT_HIDDEN};
use crate::optim::{
    adam_minimize, lbfgs_minimize, AdamConfig, Control, IterationInfo, LbfgsConfig, Minimization, Status, TraceRecord,
    TrainingTrace,
};
use crate::points::PointSet;
use crate::problem::{
    convection_diffusion, estimate_magnitude_bounds, lambda_original, laplace_eigen, optimal_lambda, poisson_eigen,
    poisson_peak, ConvectionSolution, JetField, LinearPdeProblem, MagnitudeBounds,
};
use crate::sampling::{adaptive_check, sample_interior, AdaptiveState, DEFAULT_Q};

/// Fixed seeds of the auxiliary random draws, so that results depend only
/// on the configuration.
const LAMBDA_SEED: u64 = 0x1a4b_da00;
const BOUNDARY_MEAN_SEED: u64 = 0xb0d7_0000;
const EVAL_SEED: u64 = 0xe7a1_0000;
/// Separates the collocation streams from the network initialization stream.
const SAMPLING_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    /// Harmonic eigenfunction in `frequencies.len() + 1` dimensions.
    Laplace,
    /// Poisson eigenfunction on the unit square, one frequency.
    Poisson,
    /// Poisson problem with a sharp central peak.
    PoissonPeak,
    ConvectionDiffusion,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Original,
    OptimalWeight,
    #[serde(alias = "magnitude_normalized")]
    MagnitudeNormalization,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Original => "original",
            Method::OptimalWeight => "optimal_weight",
            Method::MagnitudeNormalization => "magnitude_normalization",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Lbfgs,
    Adam,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaSource {
    /// Closed form when the problem has one, Monte Carlo otherwise.
    Auto,
    ClosedForm,
    MonteCarlo,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// One experiment. Read from a flat TOML file; missing keys take the
/// values of [`ExperimentConfig::default`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemKind,
    /// Frequencies in units of pi.
    pub frequencies: Vec<f64>,
    pub velocity: f64,
    pub diffusivity: f64,
    /// Use the closed form that misses `u(0) = 1/2` by `exp(-v/alpha)`.
    pub legacy_solution: bool,
    pub method: Method,
    pub hidden_layers: Vec<usize>,
    pub iterations: usize,
    pub initial_interior: usize,
    pub initial_boundary: usize,
    pub q: f64,
    pub seeds: Vec<u64>,
    /// Points per axis of the error grid (dimension at most 3).
    pub eval_resolution: usize,
    /// Monte-Carlo error points in dimension above 3.
    pub eval_samples: usize,
    /// Iterations between adaptive checks.
    pub check_every: usize,
    pub optimizer: OptimizerKind,
    /// L-BFGS memory length.
    pub history: usize,
    pub learning_rate: f64,
    pub lambda_source: LambdaSource,
    pub lambda_samples: usize,
    pub p: f64,
    pub log_loss: bool,
    pub output: Option<PathBuf>,
    pub format: OutputFormat,
    /// Directory for trained parameter files, one per seed.
    pub params_dir: Option<PathBuf>,
    /// Directory for loss traces, one CSV per seed.
    pub trace_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: ProblemKind::Laplace,
            frequencies: vec![1.0],
            velocity: 1.0,
            diffusivity: 1e-2,
            legacy_solution: false,
            method: Method::OptimalWeight,
            hidden_layers: DEFAULT_HIDDEN.to_vec(),
            iterations: 20_000,
            initial_interior: 512,
            initial_boundary: 512,
            q: DEFAULT_Q,
            seeds: vec![0, 1, 2],
            eval_resolution: 101,
            eval_samples: 100_000,
            check_every: 100,
            optimizer: OptimizerKind::Lbfgs,
            history: 50,
            learning_rate: 1e-3,
            lambda_source: LambdaSource::Auto,
            lambda_samples: 100_000,
            p: 2.0,
            log_loss: true,
            output: None,
            format: OutputFormat::Csv,
            params_dir: None,
            trace_dir: None,
        }
    }
}

fn config_error(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| config_error(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_error(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let expected_freqs = match self.problem {
            ProblemKind::Laplace => None,
            ProblemKind::Poisson => Some(1),
            ProblemKind::PoissonPeak | ProblemKind::ConvectionDiffusion => Some(0),
        };
        if self.problem == ProblemKind::Laplace && self.frequencies.is_empty() {
            return Err(config_error("laplace needs at least one frequency"));
        }
        if let Some(n) = expected_freqs {
            if n > 0 && self.frequencies.len() != n {
                return Err(config_error(format!(
                    "poisson takes exactly one frequency, got {}",
                    self.frequencies.len()
                )));
            }
        }
        if matches!(self.problem, ProblemKind::Laplace | ProblemKind::Poisson) {
            for &k in &self.frequencies {
                if !(k >= 1.0 && (k - k.round()).abs() <= 1e-9) {
                    return Err(config_error(format!(
                        "frequencies are integer multiples of pi, got {k}"
                    )));
                }
            }
        }
        if self.hidden_layers.is_empty() || self.hidden_layers.contains(&0) {
            return Err(config_error("hidden_layers must be non-empty with positive widths"));
        }
        if self.seeds.is_empty() {
            return Err(config_error("at least one seed is required"));
        }
        if self.initial_interior == 0 || self.initial_boundary == 0 {
            return Err(config_error("initial point counts must be positive"));
        }
        if self.check_every == 0 {
            return Err(config_error("check_every must be positive"));
        }
        if self.eval_resolution < 2 || self.eval_samples == 0 || self.lambda_samples == 0 {
            return Err(config_error(
                "evaluation resolution must be at least 2 and sample counts positive",
            ));
        }
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return Err(config_error(format!("p must be at least 1, got {}", self.p)));
        }
        if !(self.q > 1.0) {
            return Err(config_error(format!("q must exceed 1, got {}", self.q)));
        }
        if self.history == 0 || !(self.learning_rate > 0.0) {
            return Err(config_error("history and learning_rate must be positive"));
        }
        Ok(())
    }

    pub fn build_problem(&self) -> Result<LinearPdeProblem> {
        match self.problem {
            ProblemKind::Laplace => {
                let radians: Vec<f64> = self.frequencies.iter().map(|k| k * PI).collect();
                laplace_eigen(&radians)
            }
            ProblemKind::Poisson => poisson_eigen(self.frequencies[0] * PI),
            ProblemKind::PoissonPeak => poisson_peak(),
            ProblemKind::ConvectionDiffusion => {
                let variant = if self.legacy_solution {
                    ConvectionSolution::Legacy
                } else {
                    ConvectionSolution::Exact
                };
                convection_diffusion(self.velocity, self.diffusivity, variant)
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self.problem {
            ProblemKind::Laplace => self.frequencies.len() + 1,
            ProblemKind::Poisson | ProblemKind::PoissonPeak => 2,
            ProblemKind::ConvectionDiffusion => 1,
        }
    }

    pub fn architecture(&self) -> Result<NetworkArchitecture> {
        NetworkArchitecture::new(self.dim(), self.hidden_layers.clone())
    }

    /// The frequency (radians) or diffusivity that labels the run.
    pub fn omega_or_alpha(&self) -> Option<f64> {
        match self.problem {
            ProblemKind::Laplace | ProblemKind::Poisson => Some(self.frequencies[0] * PI),
            ProblemKind::ConvectionDiffusion => Some(self.diffusivity),
            ProblemKind::PoissonPeak => None,
        }
    }

    fn problem_name(&self) -> &'static str {
        match self.problem {
            ProblemKind::Laplace => "laplace",
            ProblemKind::Poisson => "poisson",
            ProblemKind::PoissonPeak => "poisson_peak",
            ProblemKind::ConvectionDiffusion => "convection_diffusion",
        }
    }
}

/// Where a set of magnitude bounds came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundsOrigin {
    ClosedForm,
    MonteCarlo,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaReport {
    pub bounds: MagnitudeBounds,
    pub origin: BoundsOrigin,
    pub lambda_optimal: f64,
    pub lambda_original: f64,
}

/// Magnitude bounds of the analytic solution and the resulting weights.
pub fn lambda_report(problem: &LinearPdeProblem, source: LambdaSource, samples: usize, p: f64) -> Result<LambdaReport> {
    let closed = problem.closed_form_bounds().filter(|b| b.p == p);
    let (bounds, origin) = match (source, closed) {
        (LambdaSource::ClosedForm, None) => {
            return Err(Error::Config(format!(
                "{} has no closed-form bounds for p = {p}",
                problem.name()
            )));
        }
        (LambdaSource::Auto | LambdaSource::ClosedForm, Some(b)) => (b, BoundsOrigin::ClosedForm),
        _ => {
            let solution = problem.require_solution()?;
            let mut rng = ChaCha8Rng::seed_from_u64(LAMBDA_SEED);
            let b = estimate_magnitude_bounds(problem, &**solution, &mut rng, samples, samples, p, false)?;
            (b, BoundsOrigin::MonteCarlo)
        }
    };
    Ok(LambdaReport {
        bounds,
        origin,
        lambda_optimal: optimal_lambda(&bounds)?,
        lambda_original: lambda_original(problem),
    })
}

/// The loss strategy a configuration trains with, and the weight it uses.
pub fn build_strategy(config: &ExperimentConfig, problem: &LinearPdeProblem) -> Result<(LossStrategy, Option<f64>)> {
    match config.method {
        Method::Original => Ok((LossStrategy::original(config.p)?, None)),
        Method::OptimalWeight => {
            let lambda = lambda_report(problem, config.lambda_source, config.lambda_samples, config.p)?.lambda_optimal;
            Ok((LossStrategy::optimal_weight(lambda, config.p)?, Some(lambda)))
        }
        Method::MagnitudeNormalization => {
            let mean = boundary_data_mean(problem, config.p, BOUNDARY_MEAN_SAMPLES, BOUNDARY_MEAN_SEED)?;
            Ok((LossStrategy::magnitude_normalized(config.p, Some(mean))?, None))
        }
    }
}

/// Tensor grid with `resolution` points per axis for `d <= 3`, otherwise
/// `samples` uniform interior points from a fixed stream mixed with `seed`.
pub fn build_eval_points(dim: usize, resolution: usize, samples: usize, seed: u64) -> Result<PointSet> {
    if dim > 3 {
        let mut rng = ChaCha8Rng::seed_from_u64(EVAL_SEED ^ seed);
        return sample_interior(dim, samples, &mut rng);
    }
    if resolution < 2 {
        return Err(Error::InvalidParameter(format!(
            "grid resolution must be at least 2, got {resolution}"
        )));
    }
    let axis: Vec<f64> = (0..resolution).map(|k| k as f64 / (resolution - 1) as f64).collect();
    let total = resolution.pow(dim as u32);
    let mut coords = Vec::with_capacity(total * dim);
    for idx in 0..total {
        let mut rest = idx;
        let mut point = vec![0.0; dim];
        for c in (0..dim).rev() {
            point[c] = axis[rest % resolution];
            rest /= resolution;
        }
        coords.extend_from_slice(&point);
    }
    PointSet::new(dim, coords)
}

/// Relative L2 and L-infinity errors of `approx` against `exact`.
pub fn relative_errors_of(approx: &[f64], exact: &[f64]) -> Result<(f64, f64)> {
    if approx.is_empty() {
        return Err(Error::EmptyPointSet("evaluation points"));
    }
    if approx.len() != exact.len() {
        return Err(Error::DimensionMismatch {
            expected: exact.len(),
            got: approx.len(),
        });
    }
    let (mut num2, mut den2, mut num_inf, mut den_inf) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for (a, u) in approx.iter().zip(exact) {
        let e = a - u;
        num2 += e * e;
        den2 += u * u;
        num_inf = num_inf.max(e.abs());
        den_inf = den_inf.max(u.abs());
    }
    if den2 == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok(((num2 / den2).sqrt(), num_inf / den_inf))
}

/// Relative errors of the network against the analytic solution.
pub fn relative_errors(net: &Network, params: &[f64], solution: &JetField, points: &PointSet) -> Result<(f64, f64)> {
    let out = net.forward_batch(params, points, 0)?;
    let exact: Vec<f64> = points.iter().map(|x| solution(x).value()).collect();
    relative_errors_of(out.channel(0), &exact)
}

/// Outcome of one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub problem: String,
    pub method: Method,
    pub seed: u64,
    pub omega_or_alpha: Option<f64>,
    pub dim: usize,
    pub rel_l2: f64,
    pub rel_linf: f64,
    pub n_interior: usize,
    pub n_boundary: usize,
    pub iterations: usize,
    pub wall_seconds: f64,
    pub lambda: Option<f64>,
    pub status: Status,
    pub final_loss: LossBreakdown,
    pub config: ExperimentConfig,
}

/// A finished seed: its record, trained parameters and loss trace.
#[derive(Clone, Debug)]
pub struct SeedRun {
    pub record: ResultRecord,
    pub params: ParameterVector,
    pub trace: TrainingTrace,
}

/// Trains one seed.
pub fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    run_seed_observed(config, seed, |_| Control::Continue)
}

/// [`run_seed`] that hands every trace record to `observer` as it is taken.
/// [`Control::Stop`] ends training early; the run is still evaluated and
/// reported with status [`Status::Stopped`]. [`Control::Reset`] is treated as
/// [`Control::Continue`].
pub fn run_seed_observed(
    config: &ExperimentConfig,
    seed: u64,
    mut observer: impl FnMut(&TraceRecord) -> Control,
) -> Result<SeedRun> {
    config.validate()?;
    let start = Instant::now();
    let problem = config.build_problem()?;
    let solution = problem.require_solution()?.clone();
    let network = Network::new(config.architecture()?);
    let init = network.glorot_init(seed);
    let (strategy, lambda) = build_strategy(config, &problem)?;
    let mut state = AdaptiveState::new(
        problem.dim(),
        config.initial_interior,
        config.initial_boundary,
        config.q,
        seed.wrapping_add(SAMPLING_SEED_OFFSET),
    )?;
    let mut objective = PinnObjective::new(
        &problem,
        network.clone(),
        strategy,
        &state.train.interior,
        &state.train.boundary,
    )?
    .with_log(config.log_loss);

    let mut trace = TrainingTrace::default();
    let outcome = {
        let mut callback = |obj: &mut PinnObjective, info: &IterationInfo<'_>| -> Result<Control> {
            if !info.iteration.is_multiple_of(config.check_every) {
                return Ok(Control::Continue);
            }
            let train = obj.breakdown(info.params)?;
            let val = obj.breakdown_on(info.params, &state.validation)?;
            let record = TraceRecord {
                iteration: info.iteration,
                train_interior: train.interior,
                train_boundary: train.boundary,
                validation_interior: val.interior,
                validation_boundary: val.boundary,
                total: train.total,
                n_interior: state.n_interior,
                n_boundary: state.n_boundary,
                wall_seconds: start.elapsed().as_secs_f64(),
            };
            let stop = observer(&record) == Control::Stop;
            trace.push(record);
            if stop {
                return Ok(Control::Stop);
            }
            let decision = adaptive_check((train.interior, train.boundary), (val.interior, val.boundary), &state);
            if state.apply(decision)? {
                obj.set_points(&state.train)?;
                return Ok(Control::Reset);
            }
            Ok(Control::Continue)
        };
        let x0 = init.values().to_vec();
        match config.optimizer {
            OptimizerKind::Lbfgs => {
                let lbfgs = LbfgsConfig {
                    history: config.history,
                    max_iterations: config.iterations,
                    ..LbfgsConfig::default()
                };
                lbfgs_minimize(&mut objective, x0, &lbfgs, &mut callback)
            }
            OptimizerKind::Adam => {
                let adam = AdamConfig {
                    learning_rate: config.learning_rate,
                    max_iterations: config.iterations,
                    ..AdamConfig::default()
                };
                adam_minimize(&mut objective, x0, &adam, &mut callback)
            }
        }
    };
    let Minimization {
        params,
        iterations,
        status,
        ..
    } = match outcome {
        Ok(m) => m,
        Err(source) => {
            return Err(Error::Training {
                source: Box::new(source),
                trace: Box::new(trace),
            })
        }
    };
    trace.status = Some(status);

    let eval = build_eval_points(problem.dim(), config.eval_resolution, config.eval_samples, 0)?;
    let (rel_l2, rel_linf) = relative_errors(&network, &params, &solution, &eval)?;
    let final_loss = objective.breakdown(&params)?;
    let record = ResultRecord {
        problem: config.problem_name().to_string(),
        method: config.method,
        seed,
        omega_or_alpha: config.omega_or_alpha(),
        dim: problem.dim(),
        rel_l2,
        rel_linf,
        n_interior: state.n_interior,
        n_boundary: state.n_boundary,
        iterations,
        wall_seconds: start.elapsed().as_secs_f64(),
        lambda,
        status,
        final_loss,
        config: config.clone(),
    };
    Ok(SeedRun {
        record,
        params: ParameterVector::new(network.architecture().clone(), params)?,
        trace,
    })
}

/// Trains every configured seed, in order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<SeedRun>> {
    config.seeds.iter().map(|&seed| run_seed(config, seed)).collect()
}

/// The record with the smallest relative L2 error.
pub fn best_record(records: &[ResultRecord]) -> Option<&ResultRecord> {
    records.iter().min_by(|a, b| a.rel_l2.total_cmp(&b.rel_l2))
}

pub const CSV_HEADER: [&str; 11] = [
    "problem",
    "method",
    "seed",
    "omega_or_alpha",
    "dim",
    "rel_l2",
    "rel_linf",
    "n_interior",
    "n_boundary",
    "iterations",
    "wall_seconds",
];

pub fn write_csv<W: Write>(records: &[ResultRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.problem.clone(),
            r.method.name().to_string(),
            r.seed.to_string(),
            r.omega_or_alpha.map(|v| v.to_string()).unwrap_or_default(),
            r.dim.to_string(),
            r.rel_l2.to_string(),
            r.rel_linf.to_string(),
            r.n_interior.to_string(),
            r.n_boundary.to_string(),
            r.iterations.to_string(),
            r.wall_seconds.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<W: Write>(records: &[ResultRecord], writer: W) -> Result<()> {
    serde_json::to_writer_pretty(writer, records)?;
    Ok(())
}

/// Writes `records` to `path` in the given format.
/// One CSV row per recorded adaptive check.
pub fn write_trace<W: Write>(trace: &TrainingTrace, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for record in &trace.records {
        w.serialize(record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_results(records: &[ResultRecord], format: OutputFormat, path: &Path) -> Result<()> {
    let file = fs::File::create(path)?;
    match format {
        OutputFormat::Csv => write_csv(records, file),
        OutputFormat::Json => write_json(records, file),
    }
}

/// CSV rows `x1..xd,u_hat,u_exact,abs_error` over the evaluation points.
pub fn write_field<W: Write>(
    net: &Network,
    params: &[f64],
    problem: &LinearPdeProblem,
    points: &PointSet,
    writer: W,
) -> Result<()> {
    let solution = problem.require_solution()?;
    let out = net.forward_batch(params, points, 0)?;
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (1..=points.dim()).map(|k| format!("x{k}")).collect();
    header.extend(["u_hat", "u_exact", "abs_error"].map(String::from));
    w.write_record(&header)?;
    for (x, &u_hat) in points.iter().zip(out.channel(0)) {
        let u = solution(x).value();
        let mut row: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        row.extend([u_hat.to_string(), u.to_string(), (u_hat - u).abs().to_string()]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn dump_field(
    net: &Network,
    params: &[f64],
    problem: &LinearPdeProblem,
    resolution: usize,
    samples: usize,
    path: &Path,
) -> Result<()> {
    let points = build_eval_points(problem.dim(), resolution, samples, 0)?;
    write_field(net, params, problem, &points, fs::File::create(path)?)
}

const PARAMS_MAGIC: &str = "# wpinn parameters v1";

/// Text parameter file: a commented header recording the architecture and
/// seed, then one value per line in shortest round-trip form.
pub fn write_params<W: Write>(params: &ParameterVector, seed: u64, mut writer: W) -> Result<()> {
    let arch = params.architecture();
    let hidden: Vec<String> = arch.hidden_layers().iter().map(|w| w.to_string()).collect();
    writeln!(writer, "{PARAMS_MAGIC}")?;
    writeln!(writer, "# input_dim = {}", arch.input_dim())?;
    writeln!(writer, "# hidden_layers = {}", hidden.join(","))?;
    writeln!(writer, "# seed = {seed}")?;
    writeln!(writer, "# count = {}", params.values().len())?;
    for v in params.values() {
        writeln!(writer, "{v:e}")?;
    }
    Ok(())
}

pub fn save_params(params: &ParameterVector, seed: u64, path: &Path) -> Result<()> {
    let mut file = std::io::BufWriter::new(fs::File::create(path)?);
    write_params(params, seed, &mut file)?;
    file.flush()?;
    Ok(())
}

fn format_error(msg: impl Into<String>) -> Error {
    Error::ParamsFormat(msg.into())
}

/// Parses a parameter file written by [`write_params`]. Returns the
/// parameters and the recorded seed.
pub fn read_params<R: BufRead>(reader: R) -> Result<(ParameterVector, u64)> {
    let mut lines = reader.lines();
    let magic = lines.next().transpose()?.unwrap_or_default();
    if magic.trim() != PARAMS_MAGIC {
        return Err(format_error("missing parameter file header"));
    }
    let mut header = std::collections::HashMap::new();
    let mut values = Vec::new();
    for line in lines {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let (k, v) = rest
                .split_once('=')
                .ok_or_else(|| format_error(format!("bad header line `{line}`")))?;
            header.insert(k.trim().to_string(), v.trim().to_string());
        } else {
            values.push(
                line.parse::<f64>()
                    .map_err(|e| format_error(format!("bad value `{line}`: {e}")))?,
            );
        }
    }
    let field = |k: &str| {
        header
            .get(k)
            .ok_or_else(|| format_error(format!("missing header field `{k}`")))
    };
    let parse_usize = |s: &str| {
        s.parse::<usize>()
            .map_err(|e| format_error(format!("bad integer `{s}`: {e}")))
    };
    let input_dim = parse_usize(field("input_dim")?)?;
    let hidden = field("hidden_layers")?
        .split(',')
        .map(|s| parse_usize(s.trim()))
        .collect::<Result<Vec<_>>>()?;
    let seed = field("seed")?
        .parse::<u64>()
        .map_err(|e| format_error(format!("bad seed: {e}")))?;
    let count = parse_usize(field("count")?)?;
    if count != values.len() {
        return Err(format_error(format!(
            "header declares {count} values, found {}",
            values.len()
        )));
    }
    let arch = NetworkArchitecture::new(input_dim, hidden)?;
    Ok((ParameterVector::new(arch, values)?, seed))
}

pub fn load_params(path: &Path) -> Result<(ParameterVector, u64)> {
    read_params(BufReader::new(fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_grids() {
        let g = build_eval_points(1, 3, 10, 0).unwrap();
        assert_eq!(g.coords(), &[0.0, 0.5, 1.0]);
        assert_eq!(build_eval_points(2, 101, 10, 0).unwrap().len(), 10201);
        let a = build_eval_points(4, 101, 100_000, 0).unwrap();
        assert_eq!(a.len(), 100_000);
        assert_eq!(a, build_eval_points(4, 101, 100_000, 0).unwrap());
    }

    #[test]
    fn relative_error_examples() {
        let u: Vec<f64> = (0..101).map(|k| (PI * k as f64 / 100.0).sin()).collect();
        assert_eq!(relative_errors_of(&u, &u).unwrap(), (0.0, 0.0));
        let doubled: Vec<f64> = u.iter().map(|v| 2.0 * v).collect();
        let (l2, linf) = relative_errors_of(&doubled, &u).unwrap();
        assert!((l2 - 1.0).abs() < 1e-15 && (linf - 1.0).abs() < 1e-15);
        let shifted: Vec<f64> = u.iter().map(|v| v + 0.01).collect();
        let (l2, linf) = relative_errors_of(&shifted, &u).unwrap();
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((l2 - 0.01 * 101f64.sqrt() / norm).abs() < 1e-14);
        assert!((linf - 0.01).abs() < 1e-15);
        assert!(matches!(relative_errors_of(&[1.0], &[0.0]), Err(Error::ZeroReference)));
    }

    #[test]
    fn config_parsing_and_validation() {
        let c = ExperimentConfig::from_toml_str(
            "problem = \"laplace\"\nfrequencies = [2]\nmethod = \"magnitude_normalized\"\n",
        )
        .unwrap();
        assert_eq!(c.method, Method::MagnitudeNormalization);
        assert_eq!(c.dim(), 2);
        assert_eq!(c.initial_interior, 512);
        assert!(ExperimentConfig::from_toml_str("problem = \"laplace\"\nfrequencies = [1.5]\n").is_err());
        assert!(ExperimentConfig::from_toml_str("problem = \"poisson\"\nfrequencies = [1, 2]\n").is_err());
        assert!(ExperimentConfig::from_toml_str("problem = \"laplace\"\nbogus = 1\n").is_err());
        let round = ExperimentConfig::from_toml_str(&c.to_toml_string().unwrap()).unwrap();
        assert_eq!(round, c);
    }

    #[test]
    fn params_round_trip() {
        let net = Network::new(NetworkArchitecture::new(2, vec![3, 4]).unwrap());
        let p = net.glorot_init(17);
        let mut buf = Vec::new();
        write_params(&p, 17, &mut buf).unwrap();
        let (q, seed) = read_params(buf.as_slice()).unwrap();
        assert_eq!(seed, 17);
        assert_eq!(q, p);
        assert!(read_params("garbage\n1.0\n".as_bytes()).is_err());
    }

    #[test]
    fn lambda_closed_form_and_monte_carlo_agree() {
        let problem = poisson_eigen(PI).unwrap();
        let cf = lambda_report(&problem, LambdaSource::Auto, 100_000, 2.0).unwrap();
        let mc = lambda_report(&problem, LambdaSource::MonteCarlo, 100_000, 2.0).unwrap();
        assert_eq!(cf.origin, BoundsOrigin::ClosedForm);
        assert_eq!(mc.origin, BoundsOrigin::MonteCarlo);
        assert!((mc.lambda_optimal / cf.lambda_optimal - 1.0).abs() < 0.02);
        assert!(lambda_report(&poisson_peak().unwrap(), LambdaSource::ClosedForm, 10, 2.0).is_err());
    }

    #[test]
    fn zero_iteration_run() {
        let config = ExperimentConfig {
            problem: ProblemKind::Laplace,
            frequencies: vec![1.0],
            hidden_layers: vec![5],
            iterations: 0,
            initial_interior: 8,
            initial_boundary: 8,
            eval_resolution: 11,
            seeds: vec![3],
            ..ExperimentConfig::default()
        };
        let runs = run_experiment(&config).unwrap();
        assert_eq!(runs.len(), 1);
        let r = &runs[0].record;
        assert_eq!(r.iterations, 0);
        assert!(r.rel_l2.is_finite() && r.rel_l2 > 0.1);
    }

    #[test]
    fn observer_stop_ends_training_at_a_check() {
        let config = ExperimentConfig {
            hidden_layers: vec![5],
            iterations: 1000,
            initial_interior: 8,
            initial_boundary: 8,
            eval_resolution: 11,
            check_every: 10,
            ..ExperimentConfig::default()
        };
        let mut seen = 0;
        let run = run_seed_observed(&config, 0, |t| {
            seen += 1;
            assert_eq!(t.iteration, 10 * seen);
            if seen == 2 {
                Control::Stop
            } else {
                Control::Continue
            }
        })
        .unwrap();
        assert_eq!(run.record.iterations, 20);
        assert_eq!(run.record.status, Status::Stopped);
        assert_eq!(run.trace.records.len(), 2);
    }

    #[test]
    fn csv_and_json_output() {
        let mut buf = Vec::new();
        write_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim(), CSV_HEADER.join(","));

        let config = ExperimentConfig {
            problem: ProblemKind::ConvectionDiffusion,
            frequencies: vec![],
            diffusivity: 0.1,
            hidden_layers: vec![4],
            iterations: 3,
            initial_interior: 4,
            eval_resolution: 5,
            seeds: vec![0],
            ..ExperimentConfig::default()
        };
        let records: Vec<ResultRecord> = run_experiment(&config).unwrap().into_iter().map(|r| r.record).collect();
        let mut json = Vec::new();
        write_json(&records, &mut json).unwrap();
        let back: Vec<ResultRecord> = serde_json::from_slice(&json).unwrap();
        assert_eq!(back, records);
    }

    #[test]
    fn field_dump_of_exact_solution() {
        // A one-neuron network cannot represent the solution, so compare the
        // exact column with itself through the writer instead.
        let problem = convection_diffusion(1.0, 0.1, ConvectionSolution::Exact).unwrap();
        let net = Network::new(NetworkArchitecture::new(1, vec![2]).unwrap());
        let params = net.glorot_init(0);
        let points = build_eval_points(1, 11, 1, 0).unwrap();
        let mut buf = Vec::new();
        write_field(&net, params.values(), &problem, &points, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "x1,u_hat,u_exact,abs_error");
        for line in lines {
            let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
            assert!(((cols[1] - cols[2]).abs() - cols[3]).abs() <= 1e-15);
        }
    }
}
