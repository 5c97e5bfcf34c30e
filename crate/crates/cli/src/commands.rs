//! Subcommand definitions and their implementations. Each `run_*` returns
//! the process exit code on success; errors bubble up to `main`, which maps
//! numerical failures to 3 and everything else to 2.

use std::collections::HashSet;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use nitrom::error::{Error, Result};
use nitrom::optim::log_to_csv;
use nitrom::systems::{generate_dataset, BenchmarkSpec, Protocol};
use nitrom::trainer::{initialize, train, InitMode, TrainingConfig};
use nitrom::PolyOrder;

use crate::io::{
    read_dataset, read_model, sha256_hex, write_json, DatasetFile, ModelFile, ModelMetadata,
};
use crate::metrics::{evaluate_models, evaluation_csv, predictions_csv, EvaluationModel};

#[derive(Parser)]
#[command(
    name = "nitrom",
    version,
    about = "Trajectory-based reduced-order modeling: data generation, training, baselines, evaluation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a benchmark dataset and write it as a JSON manifest.
    GenerateData(GenerateDataArgs),
    /// Train a model from a JSON config and a dataset.
    Train(TrainArgs),
    /// Fit a non-iterative baseline model on a dataset.
    Baseline(BaselineArgs),
    /// Write per-time error traces of one or more models over a dataset.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchmarkName {
    Toy,
    Cgl,
}

/// Spatial grid and sampling window size for the cgl benchmark. `full`
/// reproduces the reference setup; `ci` is a coarse variant that fits in a
/// test harness. The toy benchmark ignores it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Full,
    Ci,
}

#[derive(Args)]
pub struct GenerateDataArgs {
    #[arg(long, value_enum)]
    pub benchmark: BenchmarkName,
    /// One of: toy-train, toy-test, cgl-train, cgl-test, sinusoid.
    #[arg(long)]
    pub protocol: String,
    /// Seeds the random draws of the test and sinusoid protocols; the fixed
    /// training protocols ignore it.
    #[arg(long)]
    pub seed: u64,
    /// Number of random trajectories for the test protocols.
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    /// Harmonic index for the sinusoid protocol (forcing at k times the
    /// natural frequency).
    #[arg(long, default_value_t = 1)]
    pub k: u32,
    #[arg(long, value_enum, default_value_t = Preset::Full)]
    pub preset: Preset,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Training configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Dataset manifest produced by generate-data.
    #[arg(long)]
    pub data: PathBuf,
    /// Output model path.
    #[arg(long)]
    pub out: PathBuf,
    /// Iteration log CSV path.
    #[arg(long)]
    pub log: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineMethod {
    Opinf,
    PodGalerkin,
}

#[derive(Args)]
pub struct BaselineArgs {
    #[arg(long, value_enum)]
    pub method: BaselineMethod,
    /// Reduced dimension.
    #[arg(long)]
    pub r: usize,
    /// Tikhonov strength on the nonlinear regression blocks (opinf only).
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Required for pod-galerkin: names the benchmark whose full operators
    /// are projected. Must agree with the dataset manifest.
    #[arg(long, value_enum)]
    pub benchmark: Option<BenchmarkName>,
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// Model file(s); each adds one error column.
    #[arg(long = "model", required = true, num_args = 1..)]
    pub models: Vec<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    /// Output CSV of error traces.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional CSV of measured and predicted output traces.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::GenerateData(args) => run_generate_data(&args),
        Command::Train(args) => run_train(&args),
        Command::Baseline(args) => run_baseline(&args),
        Command::Evaluate(args) => run_evaluate(&args),
    }
}

fn benchmark_spec(name: BenchmarkName, preset: Preset) -> BenchmarkSpec {
    match (name, preset) {
        (BenchmarkName::Toy, _) => BenchmarkSpec::toy_default(),
        (BenchmarkName::Cgl, Preset::Full) => BenchmarkSpec::cgl_full(),
        (BenchmarkName::Cgl, Preset::Ci) => BenchmarkSpec::cgl_ci(),
    }
}

fn resolve_protocol(args: &GenerateDataArgs) -> Result<Protocol> {
    match args.protocol.as_str() {
        "toy-train" => Ok(Protocol::toy_train()),
        "toy-test" => Ok(Protocol::toy_test(args.seed, args.count)),
        "cgl-train" => Ok(match args.preset {
            Preset::Full => Protocol::cgl_train_full(),
            Preset::Ci => Protocol::cgl_train_ci(),
        }),
        "cgl-test" => Ok(match args.preset {
            Preset::Full => Protocol::cgl_test_full(args.seed, args.count),
            Preset::Ci => Protocol::cgl_test_ci(args.seed, args.count),
        }),
        "sinusoid" => Ok(Protocol::sinusoid(args.k, args.seed)),
        other => Err(Error::Config(format!(
            "unknown protocol '{other}' (expected toy-train, toy-test, cgl-train, cgl-test, or sinusoid)"
        ))),
    }
}

fn run_generate_data(args: &GenerateDataArgs) -> Result<i32> {
    let spec = benchmark_spec(args.benchmark, args.preset);
    let protocol = resolve_protocol(args)?;
    let data = generate_dataset(&spec, &protocol)?;
    let file = DatasetFile::from_data(&data);
    write_json(&args.out, &file)?;
    println!(
        "wrote {} trajectories ({} protocol) to {}",
        file.trajectories.len(),
        protocol.name(),
        args.out.display()
    );
    Ok(0)
}

fn run_train(args: &TrainArgs) -> Result<i32> {
    let config_bytes = std::fs::read(&args.config)?;
    let config: TrainingConfig = serde_json::from_slice(&config_bytes)?;
    let data_bytes = std::fs::read(&args.data)?;
    let dataset: DatasetFile = serde_json::from_slice(&data_bytes)?;
    let data = dataset.into_data()?;
    let metadata = ModelMetadata::new(sha256_hex(&config_bytes), sha256_hex(&data_bytes));

    let system = config.benchmark.build()?;
    match train(&config, &data) {
        Ok((model, training_log)) => {
            std::fs::write(&args.log, log_to_csv(&training_log.records))?;
            let file = ModelFile::from_model(&model, system.output_matrix(), metadata)?;
            write_json(&args.out, &file)?;
            println!(
                "trained model written to {} (cost {} -> {}, |grad| {}, stop {:?})",
                args.out.display(),
                training_log.initial_cost,
                training_log.final_cost,
                training_log.final_grad_norm,
                training_log.stop
            );
            if training_log.unstable {
                eprintln!(
                    "warning: the trained model diverges on its own training window; \
                     model and log were written anyway"
                );
                return Ok(3);
            }
            Ok(0)
        }
        Err(e) if e.is_numerical() => {
            // Nothing was accepted before the failure; the partial log is
            // the bare header.
            std::fs::write(&args.log, log_to_csv(&[]))?;
            Err(e)
        }
        Err(e) => Err(e),
    }
}

fn run_baseline(args: &BaselineArgs) -> Result<i32> {
    let data_bytes = std::fs::read(&args.data)?;
    let dataset: DatasetFile = serde_json::from_slice(&data_bytes)?;
    let data = dataset.into_data()?;
    let metadata = ModelMetadata::new(String::new(), sha256_hex(&data_bytes));

    let init = match args.method {
        BaselineMethod::Opinf => InitMode::PodOpinf,
        BaselineMethod::PodGalerkin => {
            let named = args.benchmark.ok_or_else(|| {
                Error::Config("pod-galerkin requires --benchmark to project full operators".into())
            })?;
            let matches_data = match (named, &data.benchmark) {
                (BenchmarkName::Toy, BenchmarkSpec::Toy { .. }) => true,
                (BenchmarkName::Cgl, BenchmarkSpec::Cgl { .. }) => true,
                _ => false,
            };
            if !matches_data {
                return Err(Error::Config(format!(
                    "--benchmark disagrees with the dataset manifest ({:?})",
                    data.benchmark
                )));
            }
            InitMode::PodGalerkin
        }
    };

    // The dataset manifest pins the exact discretization, so the operators
    // are rebuilt from it rather than from a preset guess.
    let system = data.benchmark.build()?;
    let order = if system.has_cubic() {
        PolyOrder::Cubic
    } else if system.has_quadratic() {
        PolyOrder::Quadratic
    } else {
        PolyOrder::Linear
    };
    let config = TrainingConfig {
        benchmark: data.benchmark.clone(),
        r: args.r,
        order,
        init,
        opinf_lambda: args.lambda,
        optimizer: Default::default(),
        alternations: 1,
        horizons: Vec::new(),
        penalty: None,
        preprojection_rank: 0,
        substeps: None,
    };
    let point = initialize(&config, &data.trajectories, Some(system.as_ref()))?;
    let file = ModelFile::from_model(&point, system.output_matrix(), metadata)?;
    write_json(&args.out, &file)?;
    println!(
        "{} baseline (r = {}) written to {}",
        match args.method {
            BaselineMethod::Opinf => "opinf",
            BaselineMethod::PodGalerkin => "pod-galerkin",
        },
        args.r,
        args.out.display()
    );
    Ok(0)
}

/// Column label for a model path: the file stem, deduplicated by suffixing
/// repeats with their position.
fn model_labels(paths: &[PathBuf]) -> Vec<String> {
    let mut seen = HashSet::new();
    paths
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let stem = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| format!("model{}", i + 1));
            if seen.insert(stem.clone()) {
                stem
            } else {
                let tagged = format!("{}_{}", stem, i + 1);
                seen.insert(tagged.clone());
                tagged
            }
        })
        .collect()
}

fn load_evaluation_models(paths: &[PathBuf]) -> Result<Vec<EvaluationModel>> {
    let labels = model_labels(paths);
    let mut models = Vec::with_capacity(paths.len());
    for (path, label) in paths.iter().zip(labels) {
        let file = read_model(path)?;
        let (point, c_r) = file.to_model().map_err(|e| {
            Error::Data(format!("{}: {e}", path.display()))
        })?;
        models.push(EvaluationModel::from_point(label, &point, c_r));
    }
    Ok(models)
}

fn run_evaluate(args: &EvaluateArgs) -> Result<i32> {
    let dataset = read_dataset(&args.data)?;
    let data = dataset.into_data()?;
    let models = load_evaluation_models(&args.models)?;
    let table = evaluate_models(&models, &data)?;
    std::fs::write(&args.out, evaluation_csv(&table))?;
    if let Some(path) = &args.predictions {
        std::fs::write(path, predictions_csv(&models, &data)?)?;
    }
    for (label, avg) in table.labels.iter().zip(&table.averages) {
        println!("{label}: time-averaged error {avg}");
    }
    println!("error traces written to {}", args.out.display());
    Ok(0)
}
