//! `ccl`: generate demonstrations, learn constraints, null-space components
//! and policies, and evaluate them.

mod flags;
mod manifest;
mod pipeline;
mod tutorial;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use ccl_core::constraint::ConstraintConfig;
use ccl_core::data::{generate, GeneratorConfig};
use ccl_core::io::{load_dataset, load_model, save_dataset, save_model};
use ccl_core::{CclError, LearnOptions};
use clap::{Args, Parser, Subcommand};

use manifest::{display, manifest_path, MetricEntry, ReportEntry, RunManifest};
use pipeline::{LearnSettings, Method};
use tutorial::Tutorial;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or inputs; exit code 1.
    Usage(String),
    Core(CclError),
    Failure(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn failure(msg: impl Into<String>) -> Self {
        CliError::Failure(msg.into())
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Failure(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Failure(m) => f.write_str(m),
            CliError::Core(e) => e.fmt(f),
        }
    }
}

impl From<CclError> for CliError {
    fn from(e: CclError) -> Self {
        CliError::Core(e)
    }
}

#[derive(Parser, Debug)]
#[command(name = "ccl", version, about = "Constraint-consistent learning from demonstrations")]
struct Cli {
    /// Random seed for data generation and learner initialisation.
    #[arg(long, global = true, env = "CCL_SEED", default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset with ground-truth decomposition.
    Gen(GenArgs),
    /// Fit a model to a dataset.
    Learn(LearnArgs),
    /// Evaluate a model on a dataset.
    Eval(EvalArgs),
    /// Run a complete generate, learn, evaluate example.
    Tutorial(TutorialArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    /// toy2d | twolink[:l1:l2]
    #[arg(long, default_value = "toy2d")]
    system: String,
    /// limit-cycle | linear
    #[arg(long, default_value = "limit-cycle")]
    policy: String,
    /// One constraint per group: none | fixed:DEG | parabolic:A | jacobian:ROW.
    #[arg(long, value_delimiter = ',', default_value = "fixed:30")]
    constraint: Vec<String>,
    /// zero | const:B | sin:AMPLITUDE:FREQUENCY
    #[arg(long, default_value = "zero")]
    task: String,
    /// Samples per group.
    #[arg(long, default_value_t = 500)]
    n: usize,
    /// Standard deviation of Gaussian action noise.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct OptionArgs {
    #[arg(long)]
    pub basis: Option<usize>,
    #[arg(long, default_value_t = LearnOptions::default().tol_fun)]
    pub tol_fun: f64,
    #[arg(long, default_value_t = LearnOptions::default().tol_x)]
    pub tol_x: f64,
    #[arg(long, default_value_t = LearnOptions::default().max_iter)]
    pub max_iter: usize,
    /// Grid points per angle for constraint seeding.
    #[arg(long, default_value_t = LearnOptions::default().search_resolution)]
    pub resolution: usize,
    #[arg(long, default_value_t = LearnOptions::default().num_restarts)]
    pub restarts: usize,
    #[arg(long, default_value_t = LearnOptions::default().svd_threshold)]
    pub svd_threshold: f64,
    #[arg(long, default_value_t = LearnOptions::default().regularization)]
    pub regularization: f64,
    /// Largest fraction of action energy a kept constraint row may remove.
    #[arg(long, default_value_t = ConstraintConfig::default().row_threshold)]
    pub row_threshold: f64,
    #[arg(long)]
    pub max_rows: Option<usize>,
}

impl OptionArgs {
    fn settings(&self, method: Method, features: Option<&str>, seed: u64) -> Result<LearnSettings, CliError> {
        let options = LearnOptions {
            tol_fun: self.tol_fun,
            tol_x: self.tol_x,
            max_iter: self.max_iter,
            search_resolution: self.resolution,
            num_restarts: self.restarts,
            svd_threshold: self.svd_threshold,
            regularization: self.regularization,
            rng_seed: seed,
        };
        options.validate()?;
        let num_basis = self.basis.unwrap_or(method.default_basis());
        if num_basis == 0 {
            return Err(CliError::usage("--basis must be at least 1"));
        }
        Ok(LearnSettings {
            method,
            num_basis,
            features: features.map(flags::features).transpose()?,
            constraint: ConstraintConfig {
                num_basis,
                row_threshold: self.row_threshold,
                max_rows: self.max_rows,
            },
            options,
        })
    }
}

#[derive(Args, Debug)]
struct LearnArgs {
    #[arg(long, value_enum)]
    method: Method,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Feature matrix for lambda: identity:DIM | twolink-jacobian[:l1:l2].
    #[arg(long)]
    features: Option<String>,
    #[command(flatten)]
    options: OptionArgs,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    /// Write the metric table here as well as to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = LearnOptions::default().svd_threshold)]
    svd_threshold: f64,
}

#[derive(Args, Debug)]
struct TutorialArgs {
    #[arg(value_enum)]
    name: Tutorial,
    /// Directory for datasets, models, tables and the manifest.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

/// Successful runs that did not converge exit with 2.
pub struct Outcome {
    pub converged: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Gen(a) => cmd_gen(a, cli.seed),
        Command::Learn(a) => cmd_learn(a, cli.seed),
        Command::Eval(a) => cmd_eval(a, cli.seed),
        Command::Tutorial(a) => tutorial::run(a.name, a.out_dir.as_deref(), cli.seed),
    };
    match result {
        Ok(Outcome { converged: true }) => ExitCode::SUCCESS,
        Ok(Outcome { converged: false }) => {
            eprintln!("warning: learning did not converge; best-effort result written");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn to_value<T: serde::Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

fn cmd_gen(args: &GenArgs, seed: u64) -> Result<Outcome, CliError> {
    let started = Instant::now();
    let config = GeneratorConfig {
        system: flags::system(&args.system)?,
        policy: flags::policy(&args.policy)?,
        constraints: args
            .constraint
            .iter()
            .map(|c| flags::constraint(c))
            .collect::<Result<_, _>>()?,
        task: flags::task(&args.task)?,
        samples_per_group: args.n,
        noise_std: args.noise,
        seed,
    };
    let data = generate(&config)?;
    save_dataset(&data, &args.out)?;
    println!(
        "wrote {} samples in {} groups to {}",
        data.len(),
        data.num_groups(),
        args.out.display()
    );
    let mut manifest = RunManifest::new("gen", seed, to_value(&config));
    manifest.outputs.push(display(&args.out));
    manifest.finish(started);
    manifest.write(&manifest_path(&args.out))?;
    Ok(Outcome { converged: true })
}

fn cmd_learn(args: &LearnArgs, seed: u64) -> Result<Outcome, CliError> {
    let started = Instant::now();
    let settings = args.options.settings(args.method, args.features.as_deref(), seed)?;
    let data = load_dataset(&args.input)?;
    let learned = pipeline::learn(&data, &settings)?;
    save_model(&learned.model, &args.out)?;
    println!("{}: {}", learned.model.kind(), learned.report.summary());
    for w in &learned.warnings {
        eprintln!("warning: {w}");
    }
    let mut manifest = RunManifest::new("learn", seed, to_value(&settings));
    manifest.inputs.push(display(&args.input));
    manifest.outputs.push(display(&args.out));
    manifest.reports.push(ReportEntry {
        stage: learned.model.kind().into(),
        summary: learned.report.summary(),
        report: learned.report.clone(),
    });
    manifest.warnings = learned.warnings;
    manifest.finish(started);
    manifest.write(&manifest_path(&args.out))?;
    Ok(Outcome {
        converged: learned.report.converged,
    })
}

fn cmd_eval(args: &EvalArgs, seed: u64) -> Result<Outcome, CliError> {
    let started = Instant::now();
    let model = load_model(&args.model)?;
    let data = load_dataset(&args.input)?;
    let rows = pipeline::evaluate(&model, &data, args.svd_threshold)?;
    let table = pipeline::table(&rows);
    print!("{table}");
    if let Some(out) = &args.out {
        std::fs::write(out, &table).map_err(|e| CliError::io(out, e))?;
        let mut manifest = RunManifest::new(
            "eval",
            seed,
            serde_json::json!({ "kind": model.kind(), "svd_threshold": args.svd_threshold }),
        );
        manifest.inputs.extend([display(&args.model), display(&args.input)]);
        manifest.outputs.push(display(out));
        manifest.metrics = rows
            .into_iter()
            .map(|row| MetricEntry {
                stage: model.kind().into(),
                row,
            })
            .collect();
        manifest.finish(started);
        manifest.write(&manifest_path(out))?;
    }
    Ok(Outcome { converged: true })
}
