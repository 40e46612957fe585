use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use coreset_core::artifact::ValidationSplit;
use coreset_core::matching::GradientSpace;
use coreset_core::metrics::DistanceMetric;
use coreset_core::rng::{self, Stream};
use coreset_core::trainer::{
    evaluate_coreset, generate_synthetic, load_csv, record_trace_with_validation, Arch, LrSchedule, SyntheticSpec,
    TrainConfig,
};
use coreset_core::{
    budget_from_fraction, load_artifact, save_artifact, CoresetError, CoresetResult, DatasetArtifact, FeatureMatrix,
    LabelVector, Result, Selection,
};

use crate::methods::{self, Method, MethodParams};
use crate::output::{mean_std, sweep_csv, sweep_table, write_file, CoresetFile, EvalReport, SweepRow};

#[derive(Debug, Parser)]
#[command(name = "coreset", version, about = "Coreset selection, proxy training and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a proxy model and write a dataset artifact with its trace.
    Trace(TraceArgs),
    /// Select a coreset from an artifact.
    Select(SelectArgs),
    /// Train on a coreset and report test accuracy.
    Eval(EvalArgs),
    /// Select and evaluate every method × fraction pair.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ArchArg {
    Linear,
    Mlp1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScheduleArg {
    Constant,
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Euclidean,
    Cosine,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum, default_value = "mlp1")]
    pub arch: ArchArg,
    /// Hidden width of the mlp1 proxy.
    #[arg(long, default_value_t = Arch::DEFAULT_HIDDEN)]
    pub hidden: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 5e-4)]
    pub weight_decay: f64,
    #[arg(long, value_enum, default_value = "cosine")]
    pub schedule: ScheduleArg,
}

impl TrainArgs {
    pub fn arch(&self) -> Arch {
        match self.arch {
            ArchArg::Linear => Arch::Linear,
            ArchArg::Mlp1 => Arch::Mlp1 { hidden: self.hidden },
        }
    }

    pub fn config(&self, epochs: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            seed,
            lr_schedule: match self.schedule {
                ScheduleArg::Constant => LrSchedule::Constant,
                ScheduleArg::Cosine => LrSchedule::Cosine,
            },
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct MethodArgs {
    /// Graph-cut λ (default 0.5) or GradMatch ridge λ (default 1.0).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// CAL neighborhood size.
    #[arg(long, default_value_t = coreset_core::boundary::DEFAULT_KNN)]
    pub knn: usize,
    /// GLISTER step size.
    #[arg(long, default_value_t = coreset_core::matching::DEFAULT_GLISTER_ETA)]
    pub eta: f64,
    /// GLISTER picks per re-linearization (default max(1, quota / 10)).
    #[arg(long)]
    pub block: Option<usize>,
    /// Gradient space for CRAIG and GradMatch: error_vector or full_last_layer.
    #[arg(long, default_value = "error_vector")]
    pub grad_space: GradientSpace,
    /// Let GradMatch keep negative weights.
    #[arg(long)]
    pub allow_negative: bool,
    /// Distance for k-center greedy.
    #[arg(long, value_enum, default_value = "euclidean")]
    pub metric: MetricArg,
    /// Leave the bias term out of GraNd.
    #[arg(long)]
    pub grand_no_bias: bool,
    /// Training epochs for the DeepFool proxy.
    #[arg(long, default_value_t = 10)]
    pub proxy_epochs: usize,
    #[arg(long, default_value_t = coreset_core::boundary::DEFAULT_MAX_ITERS)]
    pub max_iters: usize,
    #[arg(long, default_value_t = coreset_core::boundary::DEFAULT_OVERSHOOT)]
    pub overshoot: f64,
}

impl MethodArgs {
    pub fn params(&self, train: &TrainArgs) -> MethodParams {
        MethodParams {
            lambda: self.lambda,
            knn: self.knn,
            eta: self.eta,
            block: self.block,
            grad_space: self.grad_space,
            nonneg: !self.allow_negative,
            metric: match self.metric {
                MetricArg::Euclidean => DistanceMetric::Euclidean,
                MetricArg::Cosine => DistanceMetric::Cosine,
            },
            grand_bias: !self.grand_no_bias,
            proxy_arch: train.arch(),
            proxy: train.config(self.proxy_epochs, 0),
            max_iters: self.max_iters,
            overshoot: self.overshoot,
        }
    }
}

#[derive(Debug, Clone, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["synthetic", "csv"])))]
pub struct TraceArgs {
    /// Gaussian clusters, e.g. c4-n200-d16-sep8[-sig1].
    #[arg(long)]
    pub synthetic: Option<String>,
    /// Numeric CSV with the class label in the last column.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Held-out CSV written as the test split.
    #[arg(long, requires = "csv")]
    pub test_csv: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    /// Epoch (1-based) whose predictions are stored.
    #[arg(long, default_value_t = 10)]
    pub ref_epoch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Hold out this fraction of the training set as a validation split.
    #[arg(long)]
    pub val_fraction: Option<f64>,
    #[arg(short, long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SelectArgs {
    #[arg(short, long)]
    pub artifact: PathBuf,
    #[arg(short, long, value_enum)]
    pub method: Method,
    #[arg(short, long)]
    pub fraction: f64,
    /// Select per class with quotas k div C (remainder to the lowest classes).
    #[arg(long)]
    pub balanced: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Extra artifacts whose scores are averaged with the primary one.
    #[arg(long, num_args = 1..)]
    pub runs: Vec<PathBuf>,
    #[arg(short, long, default_value = "coreset.json")]
    pub out: PathBuf,
    #[command(flatten)]
    pub method_args: MethodArgs,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(short, long)]
    pub artifact: PathBuf,
    #[arg(short, long)]
    pub coreset: PathBuf,
    /// Test artifact directory (default: <artifact>/test).
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    /// Repeat i trains with seed + i.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    /// Write the JSON report here.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(short, long)]
    pub artifact: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', num_args = 1.., required = true)]
    pub methods: Vec<Method>,
    #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "0.1,0.5,1.0")]
    pub fractions: Vec<f64>,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub balanced: bool,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    /// Write the CSV here.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub method_args: MethodArgs,
    #[command(flatten)]
    pub train: TrainArgs,
}

/// Process exit code for a failure.
pub fn exit_code(err: &CoresetError) -> i32 {
    match err {
        CoresetError::Missing(_) => 3,
        CoresetError::Numerical(_) => 4,
        _ => 2,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Trace(args) => {
            cmd_trace(&args)?;
            println!("wrote artifact to {}", args.out.display());
        }
        Command::Select(args) => {
            let file = cmd_select(&args)?;
            println!(
                "{}: selected {} of {} samples -> {}",
                file.method,
                file.indices.len(),
                load_artifact(&args.artifact)?.n(),
                args.out.display()
            );
        }
        Command::Eval(args) => println!("{}", cmd_eval(&args)?.summary()),
        Command::Sweep(args) => print!("{}", sweep_table(&cmd_sweep(&args)?.rows)),
    }
    Ok(())
}

fn arg_error(message: impl Into<String>) -> CoresetError {
    CoresetError::InvalidArgument(message.into())
}

/// Splits off a seeded, class-stratified validation subset:
/// `round(fraction · n_c)` samples of each class `c`, drawn in class order
/// from one stream.
fn split_validation(
    features: FeatureMatrix,
    labels: LabelVector,
    fraction: f64,
    seed: u64,
) -> Result<((FeatureMatrix, LabelVector), (FeatureMatrix, LabelVector))> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(arg_error(format!("--val-fraction {fraction} outside (0, 1)")));
    }
    let mut rng = rng::stream(seed, Stream::Split);
    let mut val = Vec::new();
    for members in labels.indices_by_class() {
        let take = (fraction * members.len() as f64).round() as usize;
        val.extend(rand::seq::index::sample(&mut rng, members.len(), take).into_iter().map(|j| members[j]));
    }
    val.sort_unstable();
    let n = labels.len();
    if val.is_empty() || val.len() == n {
        return Err(arg_error(format!("--val-fraction {fraction} leaves an empty split")));
    }
    let mut is_val = vec![false; n];
    val.iter().for_each(|&i| is_val[i] = true);
    let train: Vec<usize> = (0..n).filter(|&i| !is_val[i]).collect();
    Ok((
        (features.select(&train), labels.select(&train)),
        (features.select(&val), labels.select(&val)),
    ))
}

pub fn cmd_trace(args: &TraceArgs) -> Result<()> {
    if args.ref_epoch == 0 || args.ref_epoch > args.epochs {
        return Err(arg_error(format!(
            "--ref-epoch {} must lie in [1, --epochs = {}]",
            args.ref_epoch, args.epochs
        )));
    }
    let (features, labels, test) = if let Some(spec) = &args.synthetic {
        let mut spec: SyntheticSpec = spec.parse()?;
        spec.seed = args.seed;
        let data = generate_synthetic(&spec)?;
        (data.train_features, data.train_labels, Some((data.test_features, data.test_labels)))
    } else {
        let path = args.csv.as_ref().expect("clap enforces a source");
        let (features, labels) = load_csv(path)?;
        let test = match &args.test_csv {
            Some(test_path) => {
                let (tf, tl) = load_csv(test_path)?;
                let c = labels.num_classes().max(tl.num_classes());
                let relabel = |l: LabelVector| LabelVector::new(l.as_slice().to_vec(), c);
                if tf.d() != features.d() {
                    return Err(arg_error("test CSV has a different feature width"));
                }
                let labels = relabel(labels)?;
                let tl = relabel(tl)?;
                (features, labels, Some((tf, tl)))
            }
            None => (features, labels, None),
        };
        (test.0, test.1, test.2)
    };

    let (train, val) = match args.val_fraction {
        Some(f) => {
            let (train, val) = split_validation(features, labels, f, args.seed)?;
            (train, Some(val))
        }
        None => ((features, labels), None),
    };
    let cfg = args.train.config(args.epochs, args.seed);
    let recorded = record_trace_with_validation(
        args.train.arch(),
        &train.0,
        &train.1,
        val.as_ref().map(|(f, l)| (f, l)),
        &cfg,
        args.ref_epoch,
    )?;
    let validation = match (val, recorded.validation) {
        (Some((features, labels)), Some(trace)) => Some(ValidationSplit { features, labels, trace }),
        _ => None,
    };
    let artifact = DatasetArtifact::new(train.0, train.1, Some(recorded.train), validation)?;
    save_artifact(&artifact, &args.out)?;
    if let Some((features, labels)) = test {
        save_artifact(&DatasetArtifact::new(features, labels, None, None)?, &args.out.join("test"))?;
    }
    Ok(())
}

fn load_runs(paths: &[PathBuf]) -> Result<Vec<DatasetArtifact>> {
    paths.iter().map(|p| load_artifact(p)).collect()
}

/// Runs the selection and returns the coreset file contents (also written
/// to `args.out`).
pub fn cmd_select(args: &SelectArgs) -> Result<CoresetFile> {
    let artifact = load_artifact(&args.artifact)?;
    let runs = load_runs(&args.runs)?;
    let params = args.method_args.params(&args.train);
    let file = select_file(&artifact, &runs, args.method, args.fraction, args.balanced, args.seed, &params)?;
    file.write(&args.out)?;
    Ok(file)
}

pub fn select_file(
    artifact: &DatasetArtifact,
    runs: &[DatasetArtifact],
    method: Method,
    fraction: f64,
    balanced: bool,
    seed: u64,
    params: &MethodParams,
) -> Result<CoresetFile> {
    let k = budget_from_fraction(artifact.n(), fraction)?;
    let result = methods::select(method, artifact, runs, Selection::new(k, balanced, seed), params)?;
    Ok(CoresetFile::new(result, fraction, params.resolved(method, balanced)))
}

fn test_dir(artifact: &Path, test: Option<&PathBuf>) -> PathBuf {
    test.cloned().unwrap_or_else(|| artifact.join("test"))
}

fn evaluate_repeats(
    result: &CoresetResult,
    artifact: &DatasetArtifact,
    test: &DatasetArtifact,
    train: &TrainArgs,
    epochs: usize,
    seeds: &[u64],
) -> Result<Vec<f64>> {
    if test.features.d() != artifact.features.d() || test.num_classes() != artifact.num_classes() {
        return Err(arg_error("test split does not match the artifact's feature width or class count"));
    }
    seeds
        .iter()
        .map(|&seed| {
            evaluate_coreset(
                result,
                &artifact.features,
                &artifact.labels,
                &test.features,
                &test.labels,
                train.arch(),
                &train.config(epochs, seed),
            )
        })
        .collect()
}

pub fn cmd_eval(args: &EvalArgs) -> Result<EvalReport> {
    if args.repeats == 0 {
        return Err(arg_error("--repeats must be at least 1"));
    }
    let artifact = load_artifact(&args.artifact)?;
    let test = load_artifact(&test_dir(&args.artifact, args.test.as_ref()))?;
    let file = CoresetFile::read(&args.coreset)?;
    let seeds: Vec<u64> = (0..args.repeats as u64).map(|i| args.seed + i).collect();
    let accuracies = evaluate_repeats(&file.to_result(), &artifact, &test, &args.train, args.epochs, &seeds)?;
    let (mean_acc, std_acc) = mean_std(&accuracies);
    let report = EvalReport {
        method: file.method.clone(),
        fraction: file.fraction,
        k: file.indices.len(),
        repeats: args.repeats,
        seeds,
        accuracies,
        mean_acc,
        std_acc,
    };
    if let Some(out) = &args.out {
        let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
        text.push('\n');
        write_file(out, text.as_bytes())?;
    }
    Ok(report)
}

/// One selection made during a sweep.
#[derive(Debug, Clone)]
pub struct SweepRun {
    pub method: Method,
    pub fraction: f64,
    pub seed: u64,
    pub coreset: CoresetResult,
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub runs: Vec<SweepRun>,
}

/// For each method and fraction, repeat `r` times with seed `seed + i`:
/// select with that seed, train with that seed, record test accuracy.
pub fn cmd_sweep(args: &SweepArgs) -> Result<SweepOutcome> {
    if args.methods.is_empty() || args.fractions.is_empty() {
        return Err(arg_error("sweep needs at least one method and one fraction"));
    }
    if args.repeats == 0 {
        return Err(arg_error("--repeats must be at least 1"));
    }
    let artifact = load_artifact(&args.artifact)?;
    let test = load_artifact(&test_dir(&args.artifact, args.test.as_ref()))?;
    let params = args.method_args.params(&args.train);
    let mut outcome = SweepOutcome {
        rows: Vec::new(),
        runs: Vec::new(),
    };
    for &method in &args.methods {
        for &fraction in &args.fractions {
            let start = Instant::now();
            let mut accuracies = Vec::with_capacity(args.repeats);
            for i in 0..args.repeats as u64 {
                let seed = args.seed + i;
                let file = select_file(&artifact, &[], method, fraction, args.balanced, seed, &params)?;
                let coreset = file.to_result();
                let accuracy =
                    evaluate_repeats(&coreset, &artifact, &test, &args.train, args.epochs, &[seed])?[0];
                accuracies.push(accuracy);
                outcome.runs.push(SweepRun {
                    method,
                    fraction,
                    seed,
                    coreset,
                    accuracy,
                });
            }
            let (mean_acc, std_acc) = mean_std(&accuracies);
            outcome.rows.push(SweepRow {
                method: method.name().to_string(),
                fraction,
                repeats: args.repeats,
                mean_acc,
                std_acc,
                seconds: start.elapsed().as_secs_f64(),
            });
        }
    }
    if let Some(out) = &args.out {
        write_file(out, sweep_csv(&outcome.rows)?.as_bytes())?;
    }
    Ok(outcome)
}
