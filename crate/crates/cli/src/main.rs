use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use wpinn_core::experiment::{
    best_record, dump_field, emit_results, lambda_report, load_params, run_seed_observed, save_params, write_csv,
    write_json, write_trace, OutputFormat,
};
use wpinn_core::optim::{Control, TraceRecord};
use wpinn_core::{ExperimentConfig, Network};

#[derive(Parser)]
#[command(
    name = "wpinn",
    version,
    about = "Train neural networks on linear PDEs with weighted residual losses"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every configured seed and write one result record per seed.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// Print losses and point counts to standard error at every adaptive check.
        #[arg(long)]
        progress: bool,
    },
    /// Print the magnitude bounds and loss weights of a configuration.
    Lambda {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Write network, exact solution and pointwise error on the error grid.
    DumpField {
        config: PathBuf,
        params: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

#[derive(Args)]
struct Overrides {
    /// Run only this seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the iteration budget.
    #[arg(long)]
    iterations: Option<usize>,
    /// Output file (standard output when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

fn load_config(path: &Path, o: &Overrides) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::from_path(path).with_context(|| format!("reading config {}", path.display()))?;
    if let Some(seed) = o.seed {
        config.seeds = vec![seed];
    }
    if let Some(iterations) = o.iterations {
        config.iterations = iterations;
    }
    if let Some(out) = &o.out {
        config.output = Some(out.clone());
    }
    if let Some(format) = o.format {
        config.format = format.into();
    }
    config.validate()?;
    Ok(config)
}

fn run(config: &ExperimentConfig, progress: bool) -> Result<()> {
    for dir in config.params_dir.iter().chain(&config.trace_dir) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut records = Vec::new();
    for &seed in &config.seeds {
        let observer = |t: &TraceRecord| {
            if progress {
                eprintln!(
                    "seed {seed} it {}: total {:.3e}, L_I {:.3e}/{:.3e}, L_B {:.3e}/{:.3e}, n_I {}, n_B {}, {:.1} s",
                    t.iteration,
                    t.total,
                    t.train_interior,
                    t.validation_interior,
                    t.train_boundary,
                    t.validation_boundary,
                    t.n_interior,
                    t.n_boundary,
                    t.wall_seconds
                );
            }
            Control::Continue
        };
        let run = run_seed_observed(config, seed, observer).with_context(|| format!("seed {seed}"))?;
        eprintln!(
            "seed {seed}: rel_l2 {:.3e}, rel_linf {:.3e}, n_I {}, n_B {}, {} iterations, {:.1} s",
            run.record.rel_l2,
            run.record.rel_linf,
            run.record.n_interior,
            run.record.n_boundary,
            run.record.iterations,
            run.record.wall_seconds
        );
        if let Some(dir) = &config.params_dir {
            let path = dir.join(format!("params_seed{seed}.txt"));
            save_params(&run.params, seed, &path).with_context(|| format!("writing {}", path.display()))?;
        }
        if let Some(dir) = &config.trace_dir {
            let path = dir.join(format!("trace_seed{seed}.csv"));
            let file = std::fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
            write_trace(&run.trace, file)?;
        }
        records.push(run.record);
    }
    if let Some(best) = best_record(&records) {
        eprintln!("best: seed {} with rel_l2 {:.3e}", best.seed, best.rel_l2);
    }
    match &config.output {
        Some(path) => {
            emit_results(&records, config.format, path).with_context(|| format!("writing {}", path.display()))?
        }
        None => {
            let stdout = std::io::stdout().lock();
            match config.format {
                OutputFormat::Csv => write_csv(&records, stdout)?,
                OutputFormat::Json => write_json(&records, stdout)?,
            }
        }
    }
    Ok(())
}

fn lambda(config: &ExperimentConfig) -> Result<()> {
    let problem = config.build_problem()?;
    let report = lambda_report(&problem, config.lambda_source, config.lambda_samples, config.p)?;
    let mut out: Box<dyn Write> = match &config.output {
        Some(path) => Box::new(std::fs::File::create(path).with_context(|| format!("writing {}", path.display()))?),
        None => Box::new(std::io::stdout().lock()),
    };
    match config.format {
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut out, &report)?;
            writeln!(out)?;
        }
        OutputFormat::Csv => {
            writeln!(out, "M_I = {:.6e}", report.bounds.m_interior)?;
            writeln!(out, "M_B = {:.6e}", report.bounds.m_boundary)?;
            writeln!(out, "lambda_optimal = {:.6e}", report.lambda_optimal)?;
            writeln!(out, "lambda_original = {:.6e}", report.lambda_original)?;
            writeln!(out, "source = {:?}", report.origin)?;
        }
    }
    Ok(())
}

fn field(config: &ExperimentConfig, params_path: &Path) -> Result<()> {
    let (params, seed) = load_params(params_path).with_context(|| format!("reading {}", params_path.display()))?;
    let problem = config.build_problem()?;
    if params.architecture().input_dim() != problem.dim() {
        bail!(
            "parameters are for a {}-dimensional input but the problem is {}-dimensional",
            params.architecture().input_dim(),
            problem.dim()
        );
    }
    let network = Network::new(params.architecture().clone());
    let out = config
        .output
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("field_seed{seed}.csv")));
    dump_field(
        &network,
        params.values(),
        &problem,
        config.eval_resolution,
        config.eval_samples,
        &out,
    )
    .with_context(|| format!("writing {}", out.display()))?;
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run {
            config,
            overrides,
            progress,
        } => load_config(config, overrides).and_then(|c| run(&c, *progress)),
        Command::Lambda { config, overrides } => load_config(config, overrides).and_then(|c| lambda(&c)),
        Command::DumpField {
            config,
            params,
            overrides,
        } => load_config(config, overrides).and_then(|c| field(&c, params)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
