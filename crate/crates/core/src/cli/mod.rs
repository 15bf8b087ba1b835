//! `gridedge` command-line front end.
//!
//! Exit codes: 0 success, 1 comparison threshold exceeded, 2 usage or
//! configuration error, 3 data-shape error, 4 model corruption.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::bench::{run_bench, DEFAULT_WARMUP};
use crate::dataio::{self, DataError, Schema, Target};
use crate::droop;
use crate::metrics::{self, MetricsReport};
use crate::model::{self, ModelError};
use crate::synth;
use crate::trainer::{fit_lsboost_with, write_training_log, TrainConfig};
use crate::Execution;

pub const EXIT_OK: i32 = 0;
pub const EXIT_THRESHOLD: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_MODEL: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn data(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DATA,
            message: message.into(),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        let code = match e {
            ModelError::Dimension { .. } => EXIT_DATA,
            _ => EXIT_MODEL,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        let code = match e {
            DataError::Io { .. } | DataError::Schema(_) | DataError::BadFraction(_) => EXIT_USAGE,
            _ => EXIT_DATA,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult = Result<i32, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "gridedge",
    version,
    about = "LSBoost forecasting and V-Q droop control for microgrid edge devices"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Train an LSBoost model on smart-meter data.
    Train(TrainArgs),
    /// Predict with a model over a feature CSV.
    Predict(PredictArgs),
    /// Compute droop setpoints for a set of inverters.
    Droop(DroopArgs),
    /// Compare two prediction streams.
    Compare(CompareArgs),
    /// Measure single-sample inference latency.
    Bench(BenchArgs),
    /// Show and validate a model file.
    Inspect(InspectArgs),
    /// Generate a synthetic smart-meter dataset and its schema.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TargetArg {
    Active,
    Reactive,
}

impl From<TargetArg> for Target {
    fn from(t: TargetArg) -> Self {
        match t {
            TargetArg::Active => Target::Active,
            TargetArg::Reactive => Target::Reactive,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long, value_enum)]
    pub target: TargetArg,
    /// TOML file with training and preprocessing settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Training log, one `round,train_rmse` row per round [default: <out>.log].
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Write the test-split report as CSV.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Write the test-split feature matrix as CSV.
    #[arg(long)]
    pub test_features: Option<PathBuf>,
    /// Write the test-split targets as a one-column CSV.
    #[arg(long)]
    pub test_targets: Option<PathBuf>,
    #[arg(long)]
    pub n_trees: Option<usize>,
    #[arg(long)]
    pub learn_rate: Option<f64>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long)]
    pub min_leaf: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub subsample: Option<f64>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub max_gap: Option<usize>,
    /// Disable data-parallel split search.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DroopArgs {
    #[arg(long)]
    pub params: PathBuf,
    /// Measured voltage per inverter, comma separated, in file order.
    #[arg(long, allow_hyphen_values = true)]
    pub voltages: String,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub cand: PathBuf,
    #[arg(long)]
    pub capacity: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Passes over the input rows [default: enough for 1000 predictions].
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_WARMUP)]
    pub warmup: usize,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Write the JSON mirror of the model.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub schema_out: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    pub days: usize,
    #[arg(long, default_value_t = 25.0)]
    pub capacity: f64,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.0)]
    pub missing: f64,
    #[arg(long, default_value_t = 0.0)]
    pub corrupt: f64,
}

/// Settings file for `train`. Every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub n_trees: Option<usize>,
    pub learn_rate: Option<f64>,
    pub max_depth: Option<usize>,
    pub min_leaf: Option<usize>,
    pub seed: Option<u64>,
    pub subsample: Option<f64>,
    pub train_fraction: Option<f64>,
    pub max_gap: Option<usize>,
}

/// Resolved `train` settings: flags over config file over defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub train: TrainConfig,
    pub train_fraction: f64,
    pub max_gap: usize,
}

pub fn resolve_settings(file: &FileConfig, args: &TrainArgs) -> RunSettings {
    let d = TrainConfig::default();
    RunSettings {
        train: TrainConfig {
            n_trees: args.n_trees.or(file.n_trees).unwrap_or(d.n_trees),
            learn_rate: args.learn_rate.or(file.learn_rate).unwrap_or(d.learn_rate),
            max_depth: args.max_depth.or(file.max_depth).unwrap_or(d.max_depth),
            min_leaf: args.min_leaf.or(file.min_leaf).unwrap_or(d.min_leaf),
            seed: args.seed.or(file.seed).unwrap_or(d.seed),
            subsample: args.subsample.or(file.subsample).unwrap_or(d.subsample),
        },
        train_fraction: args.train_fraction.or(file.train_fraction).unwrap_or(0.8),
        max_gap: args
            .max_gap
            .or(file.max_gap)
            .unwrap_or(dataio::DEFAULT_MAX_GAP),
    }
}

fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::usage(format!(
            "{what} file not found: {}",
            path.display()
        )))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::usage(format!("{}: {e}", path.display()))
}

fn load_model(path: &Path) -> Result<model::GBTEnsemble, CliError> {
    require_file(path, "model")?;
    Ok(model::load_model(path)?)
}

fn read_features(path: &Path) -> Result<crate::FeatureMatrix, CliError> {
    require_file(path, "data")?;
    let f = File::open(path).map_err(io_err(path))?;
    let (_, x) = dataio::read_feature_csv(BufReader::new(f))?;
    Ok(x)
}

pub fn run_train(args: &TrainArgs) -> CliResult {
    require_file(&args.schema, "schema")?;
    require_file(&args.data, "data")?;
    let file_cfg = match &args.config {
        Some(path) => {
            require_file(path, "config")?;
            let text = std::fs::read_to_string(path).map_err(io_err(path))?;
            toml::from_str(&text)
                .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?
        }
        None => FileConfig::default(),
    };
    let settings = resolve_settings(&file_cfg, args);
    settings
        .train
        .validate()
        .map_err(|e| CliError::usage(e.to_string()))?;

    let schema = Schema::load(&args.schema)?;
    let target = Target::from(args.target);
    let raw = dataio::load_csv(&args.data, &schema)?;
    let (cleaned, actions) = dataio::clean(&raw);
    for a in &actions {
        eprintln!("clean: {a}");
    }
    let usable = dataio::impute(&cleaned, settings.max_gap).usable(target)?;
    let (train, test) = dataio::split(&usable, settings.train_fraction)?;
    let (x_train, y_train) = train.matrix(target)?;
    let (x_test, y_test) = test.matrix(target)?;

    let exec = if args.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let outcome = fit_lsboost_with(&x_train, &y_train, &settings.train, exec)
        .map_err(|e| CliError::data(e.to_string()))?;
    let predictions = outcome.model.predict_batch(&x_test, exec)?;
    let report = metrics::evaluate(&y_test, &predictions, schema.capacity)
        .map_err(|e| CliError::data(e.to_string()))?;

    model::save_model(&args.out, &outcome.model).map_err(|e| CliError::usage(e.to_string()))?;
    let log_path = args.log.clone().unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".log");
        PathBuf::from(p)
    });
    write_training_log(create(&log_path)?, &outcome.train_rmse).map_err(io_err(&log_path))?;
    if let Some(path) = &args.report {
        let mut w = create(path)?;
        writeln!(w, "target,{}", MetricsReport::CSV_HEADER).map_err(io_err(path))?;
        writeln!(w, "{target},{}", report.csv_row()).map_err(io_err(path))?;
    }
    if let Some(path) = &args.test_features {
        dataio::write_feature_csv(create(path)?, &schema.feature_names(), &x_test)
            .map_err(|e| CliError::usage(e.to_string()))?;
    }
    if let Some(path) = &args.test_targets {
        dataio::write_column_csv(create(path)?, &target.to_string(), &y_test)
            .map_err(io_err(path))?;
    }

    println!(
        "trained {} trees on {} rows ({} features), tested on {} rows",
        outcome.model.n_trees(),
        x_train.n_rows(),
        x_train.n_cols(),
        x_test.n_rows()
    );
    println!("target         {target:>22}");
    println!("{report}");
    println!("model written to {}", args.out.display());
    Ok(EXIT_OK)
}

pub fn run_predict(args: &PredictArgs) -> CliResult {
    let model = load_model(&args.model)?;
    let x = read_features(&args.data)?;
    if x.n_cols() != model.n_features {
        return Err(CliError::data(format!(
            "model expects {} features, {} has {} columns",
            model.n_features,
            args.data.display(),
            x.n_cols()
        )));
    }
    let y = model.predict_batch(&x, Execution::Parallel)?;
    dataio::write_column_csv(create(&args.out)?, "prediction", &y).map_err(io_err(&args.out))?;
    Ok(EXIT_OK)
}

pub fn run_droop(args: &DroopArgs) -> CliResult {
    require_file(&args.params, "params")?;
    let params =
        droop::read_params_file(&args.params).map_err(|e| CliError::usage(e.to_string()))?;
    let voltages =
        droop::parse_voltages(&args.voltages).map_err(|e| CliError::usage(e.to_string()))?;
    if voltages.len() != params.len() {
        return Err(CliError::data(format!(
            "{} voltages given for {} inverters",
            voltages.len(),
            params.len()
        )));
    }
    let setpoints = params
        .iter()
        .zip(&voltages)
        .map(|(p, &u)| {
            droop::droop_setpoints(p, u)
                .map_err(|e| CliError::usage(format!("inverter {}: {e}", p.id)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    print!("{}", droop::render_table(&setpoints));
    if let Some(path) = &args.csv {
        droop::write_csv(create(path)?, &params, &voltages, &setpoints).map_err(io_err(path))?;
    }
    Ok(EXIT_OK)
}

fn read_predictions(path: &Path) -> Result<Vec<f64>, CliError> {
    require_file(path, "prediction")?;
    let f = File::open(path).map_err(io_err(path))?;
    metrics::read_prediction_csv(BufReader::new(f))
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

pub fn run_compare(args: &CompareArgs) -> CliResult {
    let reference = read_predictions(&args.reference)?;
    let candidate = read_predictions(&args.cand)?;
    if reference.len() != candidate.len() {
        return Err(CliError::data(format!(
            "length mismatch: {} reference vs {} candidate values",
            reference.len(),
            candidate.len()
        )));
    }
    let report =
        metrics::parity_report(&reference, &candidate, args.capacity).map_err(|e| match e {
            metrics::MetricsError::BadCapacity(_) => CliError::usage(e.to_string()),
            _ => CliError::data(e.to_string()),
        })?;
    println!("{report}");
    println!("{}", MetricsReport::CSV_HEADER);
    println!("{}", report.csv_row());
    if report.rmse <= args.threshold {
        println!("PASS rmse {} <= {}", report.rmse, args.threshold);
        Ok(EXIT_OK)
    } else {
        println!("FAIL rmse {} > {}", report.rmse, args.threshold);
        Ok(EXIT_THRESHOLD)
    }
}

pub fn run_bench_cmd(args: &BenchArgs) -> CliResult {
    let model = load_model(&args.model)?;
    let x = read_features(&args.data)?;
    if args.reps == Some(0) {
        return Err(CliError::usage("--reps must be at least 1"));
    }
    let report = run_bench(&model, &x, args.reps, args.warmup)?;
    println!("{report}");
    Ok(EXIT_OK)
}

pub fn run_inspect(args: &InspectArgs) -> CliResult {
    require_file(&args.model, "model")?;
    let model = match model::load_model(&args.model) {
        Ok(m) => m,
        Err(ModelError::Invalid(violations)) => {
            println!("invalid: {} violation(s)", violations.len());
            for v in &violations {
                println!("  {v}");
            }
            return Err(CliError {
                code: EXIT_MODEL,
                message: format!("{} failed validation", args.model.display()),
            });
        }
        Err(e) => {
            return Err(CliError {
                code: EXIT_MODEL,
                message: format!("{}: {e}", args.model.display()),
            })
        }
    };
    println!("n_features  {}", model.n_features);
    println!("n_trees     {}", model.n_trees());
    println!("bias        {}", model.bias);
    for (k, (t, w)) in model.trees.iter().zip(&model.weights).enumerate() {
        println!(
            "tree {:>4}   nodes {:>4}   depth {:>2}   weight {}",
            k + 1,
            t.n_nodes(),
            t.depth(),
            w
        );
    }
    println!("valid");
    if let Some(path) = &args.json {
        std::fs::write(path, model::model_to_json(&model)).map_err(io_err(path))?;
    }
    Ok(EXIT_OK)
}

pub fn run_synth(args: &SynthArgs) -> CliResult {
    let cfg = synth::SynthConfig {
        days: args.days,
        capacity: args.capacity,
        seed: args.seed,
        missing_fraction: args.missing,
        corrupt_fraction: args.corrupt,
        ..synth::SynthConfig::default()
    };
    synth::write_csv(create(&args.out)?, &cfg).map_err(|e| CliError::usage(e.to_string()))?;
    if let Some(path) = &args.schema_out {
        std::fs::write(path, synth::schema(args.capacity).to_toml()).map_err(io_err(path))?;
    }
    Ok(EXIT_OK)
}

pub fn execute(cli: &Cli) -> CliResult {
    match &cli.command {
        Command::Train(a) => run_train(a),
        Command::Predict(a) => run_predict(a),
        Command::Droop(a) => run_droop(a),
        Command::Compare(a) => run_compare(a),
        Command::Bench(a) => run_bench_cmd(a),
        Command::Inspect(a) => run_inspect(a),
        Command::Synth(a) => run_synth(a),
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
