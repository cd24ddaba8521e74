//! Command-line front end: toy data, CSV ingestion, train/predict/eval and plot export.

pub mod config;
pub mod eval;
pub mod io;
pub mod plot;
pub mod split;
pub mod toy;

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use crate::inference::predict;
use crate::model::{ModelSpec, Variant};
use config::ExperimentConfig;
use io::{ModelFile, Provenance, Schema};
use split::SplitPolicy;

/// Failure classes, each with its own process exit code.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("io error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Io(_) => 5,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::InvalidSpec(_) | Error::InvalidParams(_) | Error::ConstraintViolation(_) => CliError::Config(msg),
            Error::DimensionMismatch { .. }
            | Error::InvalidOutput { .. }
            | Error::EmptyData(_)
            | Error::ZeroVariance(_) => CliError::Data(msg),
            Error::NonFinite { .. }
            | Error::NonFiniteMean { .. }
            | Error::Cholesky { .. }
            | Error::WindowTooSmall { .. }
            | Error::AllRestartsFailed(_) => CliError::Numerical(msg),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ncmogp",
    version,
    about = "Non-linear convolved multi-output Gaussian processes"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML experiment configuration
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Volterra order C
    #[arg(long, global = true)]
    pub order: Option<u32>,
    /// homogeneous, separable, icm or dgp
    #[arg(long, global = true)]
    pub variant: Option<Variant>,
    #[arg(long, global = true)]
    pub restarts: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic three-output dataset and split it
    ToyGen {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Also write the full noisy grid
        #[arg(long)]
        full: Option<PathBuf>,
        /// Resplit index
        #[arg(long, default_value_t = 0)]
        split: u64,
    },
    /// Fit hyperparameters by maximum marginal likelihood
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Predictive mean and variance at the inputs of a CSV file
    Predict {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        inputs: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// NMSE/NLPD of a trained model on a test file, or over resplits of a dataset
    Eval(EvalArgs),
    /// Predictive bands on a grid plus data overlays, for plotting
    ExportPlot {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Test data to overlay
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        start: f64,
        #[arg(long, default_value_t = 1.0)]
        end: f64,
        #[arg(long, default_value_t = 200)]
        points: usize,
    },
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Trained model to score against --test
    #[arg(long, conflicts_with_all = ["data", "toy"])]
    pub model: Option<PathBuf>,
    #[arg(long, requires = "model")]
    pub test: Option<PathBuf>,
    /// Full dataset to resplit
    #[arg(long, conflicts_with = "toy")]
    pub data: Option<PathBuf>,
    /// Resplit the synthetic dataset from the config's toy section
    #[arg(long)]
    pub toy: bool,
    /// Comma-separated orders to compare
    #[arg(long, value_delimiter = ',')]
    pub orders: Vec<u32>,
    #[arg(long)]
    pub resplits: Option<u64>,
    /// Metrics CSV
    #[arg(long)]
    pub out: Option<PathBuf>,
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Config file (or defaults) with command-line overrides applied.
pub fn effective_config(global: &GlobalArgs) -> CliResult<ExperimentConfig> {
    let mut config = match &global.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(c) = global.order {
        config.model.order = c;
    }
    if let Some(v) = global.variant {
        config.model.variant = v;
    }
    if let Some(r) = global.restarts {
        config.optimizer.restarts = r;
    }
    if let Some(s) = global.seed {
        config.seed = s;
    }
    config.validate()?;
    Ok(config)
}

fn required(flag: Option<PathBuf>, fallback: &Option<PathBuf>, name: &str) -> CliResult<PathBuf> {
    flag.or_else(|| fallback.clone())
        .ok_or_else(|| CliError::Config(format!("missing --{name} (or io.{name} in the config)")))
}

fn provenance(config: &ExperimentConfig) -> Provenance {
    Provenance::new(config.hash()).with("seed", config.seed)
}

pub fn toy_gen(config: &ExperimentConfig, train: &Path, test: &Path, full: Option<&Path>, split: u64) -> CliResult<()> {
    let data = toy::generate(&config.toy, config.seed)?;
    let (tr, te) = data.split(config.seed, split)?;
    let prov = provenance(config).with("split", split);
    io::write_dataset(train, &tr, &prov.clone().with("part", "train"))?;
    io::write_dataset(test, &te, &prov.clone().with("part", "test"))?;
    if let Some(path) = full {
        io::write_dataset(path, &data.full()?, &prov.with("part", "full"))?;
    }
    Ok(())
}

pub fn train(config: &ExperimentConfig, data: &Path, model: &Path) -> CliResult<ModelFile> {
    let dataset = io::read_dataset(data, Schema::default())?;
    let spec = ModelSpec::new(
        config.model.order,
        config.model.variant,
        dataset.num_outputs(),
        dataset.input_dim(),
    )?;
    let file = eval::train_model(&dataset, &spec, &config.optimize_config(config.seed), &config.hash())?;
    file.write(model)?;
    Ok(file)
}

/// CSV `x1..xp,output,mean,variance` at the stacked test inputs.
pub fn predict_csv(model: &ModelFile, inputs: &[Vec<Vec<f64>>], provenance: &Provenance) -> CliResult<Vec<u8>> {
    let pred = predict(&model.train, inputs, &model.spec, &model.params, false)?;
    let mut out = Vec::new();
    provenance.write(&mut out).expect("write to memory");
    let header: Vec<String> = (1..=model.spec.input_dim)
        .map(|q| format!("x{q}"))
        .chain(["output", "mean", "variance"].map(String::from))
        .collect();
    writeln!(out, "{}", header.join(",")).expect("write to memory");
    for (d, xs) in inputs.iter().enumerate() {
        for ((x, m), v) in xs.iter().zip(pred.output_mean(d)).zip(pred.output_variance(d)) {
            let xs: Vec<String> = x.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{},{d},{m},{v}", xs.join(",")).expect("write to memory");
        }
    }
    Ok(out)
}

fn model_provenance(model: &ModelFile) -> Provenance {
    Provenance::new(model.config_hash.clone())
        .with("seed", model.seed)
        .with("model", format!("{} order {}", model.spec.variant, model.spec.order))
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    match out {
        Some(path) => io::write_file(path, bytes),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| CliError::Io(format!("stdout: {e}"))),
    }
}

pub fn run_eval(config: &ExperimentConfig, args: EvalArgs) -> CliResult<String> {
    if let Some(model_path) = args
        .model
        .or_else(|| config.io.model.clone().filter(|_| args.data.is_none() && !args.toy))
    {
        let model = ModelFile::read(&model_path)?;
        let test_path = required(args.test, &config.io.test, "test")?;
        let test = io::read_dataset(
            &test_path,
            Schema {
                outputs: Some(model.spec.outputs),
                allow_empty_outputs: true,
            },
        )?;
        let scores = eval::score(&model, &test)?;
        let report = eval::EvalReport {
            variant: model.spec.variant,
            results: vec![eval::SplitResult {
                order: model.spec.order,
                split: 0,
                objective: model.objective,
                scores,
            }],
        };
        emit(args.out.as_deref(), &report.csv(&model_provenance(&model)))?;
        return Ok(report.table());
    }

    let (data, policy) = if args.toy {
        let toy = toy::generate(&config.toy, config.seed)?;
        let policy = SplitPolicy::Random {
            train_per_output: Some(config.toy.train_per_output),
            train_fraction: None,
        };
        (toy.full()?, policy)
    } else {
        let path = required(args.data, &config.io.data, "data")?;
        (io::read_dataset(&path, Schema::default())?, config.split.clone())
    };
    let orders = if args.orders.is_empty() {
        config.orders()
    } else {
        args.orders
    };
    if orders.contains(&0) {
        return Err(CliError::Config("orders must be at least 1".into()));
    }
    let resplits = args.resplits.unwrap_or(config.eval.resplits);
    if resplits == 0 {
        return Err(CliError::Config("resplits must be at least 1".into()));
    }
    let report = eval::resplit_eval(
        &data,
        &policy,
        config.model.variant,
        &orders,
        resplits,
        config.seed,
        &config.optimize_config(config.seed),
    )?;
    let prov = provenance(config).with("resplits", resplits);
    emit(args.out.as_deref(), &report.csv(&prov))?;
    Ok(report.table())
}

pub fn run(cli: Cli) -> CliResult<()> {
    let config = effective_config(&cli.global)?;
    match cli.command {
        Command::ToyGen {
            train,
            test,
            full,
            split,
        } => toy_gen(&config, &train, &test, full.as_deref(), split),
        Command::Train { data, model } => {
            let data = required(data, &config.io.data, "data")?;
            let model = required(model, &config.io.model, "model")?;
            let fit = train(&config, &data, &model)?;
            eprintln!(
                "trained {} order {}: -log p(y) = {} after {} iterations ({:?}, restart {})",
                fit.spec.variant,
                fit.spec.order,
                fit.objective,
                fit.trace.len() - 1,
                fit.termination,
                fit.best_restart
            );
            Ok(())
        }
        Command::Predict { model, inputs, out } => {
            let model = ModelFile::read(&required(model, &config.io.model, "model")?)?;
            let (p, xs) = io::read_inputs(&inputs, model.spec.outputs)?;
            if p != model.spec.input_dim {
                return Err(CliError::Data(format!(
                    "inputs have {p} dimensions, model expects {}",
                    model.spec.input_dim
                )));
            }
            let bytes = predict_csv(&model, &xs, &model_provenance(&model))?;
            emit(out.or(config.io.output.clone()).as_deref(), &bytes)
        }
        Command::Eval(args) => {
            let table = run_eval(&config, args)?;
            eprint!("{table}");
            Ok(())
        }
        Command::ExportPlot {
            model,
            out,
            test,
            start,
            end,
            points,
        } => {
            let model = ModelFile::read(&required(model, &config.io.model, "model")?)?;
            let test = test
                .map(|p| {
                    io::read_dataset(
                        &p,
                        Schema {
                            outputs: Some(model.spec.outputs),
                            allow_empty_outputs: true,
                        },
                    )
                })
                .transpose()?;
            let grid = plot::PlotGrid { start, end, points };
            let bytes = plot::export(&model, &grid, test.as_ref(), &model_provenance(&model))?;
            emit(out.or(config.io.output.clone()).as_deref(), &bytes)
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
