//! Command-line front end behind the `dgt` binary.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;
use serde_json::json;

use crate::bandit::{train_bandit, BanditConfig, EstimatorKind, SimulatedStream};
use crate::data::{
    argmax, fit_apply_normalization, load_csv, load_csv_features, rmse, split_holdout, Dataset,
    LabelColumn, NormalizationStats, TaskKind, Targets, Task,
};
use crate::error::{Error, Result};
use crate::eval::{score, Metric, Predict};
use crate::forest::train_forest;
use crate::loss::OracleLoss;
use crate::model_file::{Model, ModelFile};
use crate::optim::{Clip, Regularizer};
use crate::prune::visit_counts;
use crate::train::{init_params, train_batch, OverparamSpec, TrainConfig};
use crate::tree::PathTables;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "dgt", version, about = "Hard oblique decision trees trained by gradient descent")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a single tree on a labelled CSV file.
    Train(TrainArgs),
    /// Score a saved model on a labelled CSV file.
    Eval(EvalArgs),
    /// Write one prediction per input row.
    Predict(PredictArgs),
    /// Replay a labelled CSV file as a bandit stream.
    BanditSim(BanditArgs),
    /// Train a bagged forest.
    Forest(ForestArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Reg,
    Clf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ClipMode {
    Norm,
    Value,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Label column: index, header name, or `last`.
    #[arg(long, default_value = "last")]
    pub label_col: LabelColumn,
    #[arg(long, value_enum)]
    pub task: TaskArg,
    /// The CSV file has no header row.
    #[arg(long)]
    pub no_header: bool,
}

#[derive(Debug, Args)]
pub struct ShapeArgs {
    #[arg(long)]
    pub height: usize,
    /// Number of linear layers in the node-weight factorization.
    #[arg(long, default_value_t = 1)]
    pub layers: usize,
    /// Hidden widths (`layers - 1` values); defaults to the standard widths for `--layers 3`.
    #[arg(long, value_delimiter = ',')]
    pub hidden_dims: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct OptimArgs {
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.0)]
    pub l1: f64,
    #[arg(long, default_value_t = 0.0)]
    pub l2: f64,
    /// Also apply the penalty to the leaf values.
    #[arg(long)]
    pub reg_leaves: bool,
    #[arg(long, default_value_t = 0.0)]
    pub momentum: f64,
    /// Clip threshold; 0 disables clipping.
    #[arg(long, default_value_t = 1e-2)]
    pub clip: f64,
    #[arg(long, value_enum, default_value_t = ClipMode::Norm)]
    pub clip_mode: ClipMode,
    /// Cosine cycles over the run; 0 keeps the learning rate constant.
    #[arg(long, default_value_t = 3)]
    pub restarts: usize,
    /// Fraction of rows held out for validation (0 disables).
    #[arg(long, default_value_t = 0.0)]
    pub val_frac: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub shape: ShapeArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    /// Export the collapsed tree (the default).
    #[arg(long, conflicts_with = "keep_layers")]
    pub collapse: bool,
    /// Export the layer stack instead, for continued training.
    #[arg(long)]
    pub keep_layers: bool,
    #[arg(long)]
    pub model_out: PathBuf,
    /// Per-epoch log as JSON lines.
    #[arg(long)]
    pub log_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model_in: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "last")]
    pub label_col: LabelColumn,
    #[arg(long)]
    pub no_header: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model_in: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Column to drop before predicting, if the file carries labels.
    #[arg(long)]
    pub label_col: Option<LabelColumn>,
    #[arg(long)]
    pub no_header: bool,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BanditArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub shape: ShapeArgs,
    /// Oracle loss: squared, huber:<xi> or zero_one.
    #[arg(long)]
    pub loss: Option<OracleLoss>,
    /// one_point, two_point or classification.
    #[arg(long)]
    pub estimator: Option<EstimatorKind>,
    #[arg(long, default_value_t = 50_000)]
    pub rounds: usize,
    #[arg(long, default_value_t = 0.3)]
    pub delta_explore: f64,
    #[arg(long, default_value_t = 0.5)]
    pub delta_perturb: f64,
    #[arg(long, default_value_t = 4)]
    pub accumulate: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.0)]
    pub l1: f64,
    #[arg(long, default_value_t = 0.0)]
    pub l2: f64,
    #[arg(long, default_value_t = 0.0)]
    pub momentum: f64,
    #[arg(long, default_value_t = 1000)]
    pub snapshot_every: usize,
    /// Fraction of rows held out for the trace metric.
    #[arg(long, default_value_t = 0.2)]
    pub holdout_frac: f64,
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
    #[arg(long)]
    pub model_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ForestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub shape: ShapeArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[arg(long, default_value_t = 30)]
    pub n_trees: usize,
    /// Bootstrap sample size relative to the training set.
    #[arg(long, default_value_t = 1.0)]
    pub fraction: f64,
    #[arg(long)]
    pub model_out: PathBuf,
}

/// Exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_USAGE,
        Error::Numeric(_) => EXIT_NUMERIC,
        Error::Member { source, .. } => exit_code(source),
        _ => EXIT_DATA,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Predict(a) => cmd_predict(a),
        Command::BanditSim(a) => cmd_bandit_sim(a),
        Command::Forest(a) => cmd_forest(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        let kind = match self.task {
            TaskArg::Reg => TaskKind::Regression,
            TaskArg::Clf => TaskKind::Classification,
        };
        load_csv(&self.data, &self.label_col, !self.no_header, kind)
    }
}

impl ShapeArgs {
    fn spec(&self) -> Result<OverparamSpec> {
        if self.layers == 0 {
            return Err(Error::config("--layers must be at least 1"));
        }
        if !self.hidden_dims.is_empty() {
            if self.hidden_dims.len() != self.layers - 1 {
                return Err(Error::config(format!(
                    "--hidden-dims needs {} values for --layers {}",
                    self.layers - 1,
                    self.layers
                )));
            }
            return OverparamSpec::new(self.hidden_dims.clone());
        }
        match self.layers {
            1 => Ok(OverparamSpec::single_layer()),
            3 => OverparamSpec::three_layer_default(self.height),
            l => Err(Error::config(format!(
                "--layers {l} needs explicit --hidden-dims"
            ))),
        }
    }
}

impl OptimArgs {
    fn config(&self, height: usize, seed: u64) -> Result<TrainConfig> {
        let mut regularizer = Regularizer::new(self.l1, self.l2)?;
        regularizer.include_leaves = self.reg_leaves;
        let clip = match (self.clip, self.clip_mode) {
            (c, _) if c == 0.0 => Clip::None,
            (c, ClipMode::Norm) => Clip::Norm(c),
            (c, ClipMode::Value) => Clip::Value(c),
        };
        let mut cfg = TrainConfig {
            height,
            epochs: self.epochs,
            batch_size: self.batch,
            learning_rate: self.lr,
            restarts: (self.restarts > 0).then_some(self.restarts),
            clip,
            regularizer,
            seed,
            ..TrainConfig::default()
        };
        cfg.optimizer.momentum = self.momentum;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn echo_train(cfg: &TrainConfig, spec: &OverparamSpec) {
    let clip = match cfg.clip {
        Clip::None => "none".to_string(),
        Clip::Norm(c) => format!("{c}"),
        Clip::Value(c) => format!("value:{c}"),
    };
    println!(
        "lr={} batch={} clip={} restarts={} epochs={} momentum={} l1={} l2={}",
        cfg.learning_rate,
        cfg.batch_size,
        clip,
        cfg.restarts.unwrap_or(0),
        cfg.epochs,
        cfg.optimizer.momentum,
        cfg.regularizer.l1,
        cfg.regularizer.l2
    );
    println!(
        "height={} layers={} hidden_dims={:?}",
        cfg.height,
        spec.num_layers(),
        spec.dims(cfg.height)
    );
}

/// Splits off the validation part (if any) and normalizes with training statistics.
fn prepare(data: Dataset, val_frac: f64, seed: u64) -> Result<(Dataset, Option<Dataset>, NormalizationStats)> {
    if val_frac > 0.0 {
        let (train, val) = split_holdout(&data, val_frac, seed)?;
        let val = match train.task() {
            Task::Classification { num_classes } => val.with_num_classes(num_classes)?,
            Task::Regression => val,
        };
        let (train, mut rest, stats) = fit_apply_normalization(&train, &[&val])?;
        Ok((train, rest.pop(), stats))
    } else {
        let (train, _, stats) = fit_apply_normalization(&data, &[])?;
        Ok((train, None, stats))
    }
}

fn describe(metric: Metric, stats: &NormalizationStats) -> String {
    match metric {
        Metric::Rmse(r) => format!("rmse={:.6}", r * stats.target_span()),
        Metric::Accuracy(a) => format!("accuracy={:.2}%", 100.0 * a),
    }
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let spec = a.shape.spec()?;
    let cfg = a.optim.config(a.shape.height, a.shape.seed)?;
    echo_train(&cfg, &spec);
    let data = a.data.load()?;
    let (train, val, stats) = prepare(data, a.optim.val_frac, a.shape.seed)?;
    let (params, log) = train_batch(&train, &cfg, &spec, val.as_ref())?;
    if let Some(path) = &a.log_out {
        log.write_jsonl(BufWriter::new(File::create(path)?))?;
    }
    println!("train {}", describe(score(&params, &train)?, &stats));
    if let Some(v) = &val {
        println!("val {}", describe(score(&params, v)?, &stats));
    }
    let model = if a.keep_layers {
        Model::Layered(params)
    } else {
        Model::Tree(params.collapse())
    };
    let config = json!({ "command": "train", "train": cfg, "hidden": spec.hidden });
    ModelFile::new(&model, train.task(), Some(stats), config, a.shape.seed)?.save(&a.model_out)?;
    println!("model written to {}", a.model_out.display());
    Ok(())
}

fn load_model(path: &PathBuf) -> Result<(ModelFile, Model, NormalizationStats)> {
    let file = ModelFile::load(path)?;
    let model = file.model()?;
    let stats = file
        .normalization
        .clone()
        .unwrap_or_else(|| NormalizationStats::identity(model.input_dim()));
    if stats.dim() != model.input_dim() {
        return Err(Error::ModelFile("normalization width differs from the model input".into()));
    }
    Ok((file, model, stats))
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let (file, model, stats) = load_model(&a.model_in)?;
    let kind = match file.task {
        Task::Regression => TaskKind::Regression,
        Task::Classification { .. } => TaskKind::Classification,
    };
    let raw = load_csv(&a.data, &a.label_col, !a.no_header, kind)?;
    if raw.dim() != model.input_dim() {
        return Err(Error::data(format!(
            "data has {} features, model expects {}",
            raw.dim(),
            model.input_dim()
        )));
    }
    let x = stats.transform_features(raw.features())?;
    let n = raw.len();
    match (raw.targets(), file.task) {
        (Targets::Values(y), Task::Regression) => {
            let pred = (0..n)
                .map(|i| Ok(stats.inverse_target(model.predict_row(x.row(i))?[0])))
                .collect::<Result<Vec<_>>>()?;
            println!("rmse={:.6}", rmse(&pred, y));
        }
        (Targets::Classes(c), Task::Classification { num_classes }) => {
            if let Some(&bad) = c.iter().find(|&&k| k >= num_classes) {
                return Err(Error::data(format!(
                    "label {bad} outside the model's {num_classes} classes"
                )));
            }
            let hits = (0..n)
                .map(|i| Ok(argmax(model.predict_row(x.row(i))?.view()) == c[i]))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .filter(|&h| h)
                .count();
            println!("accuracy={:.2}%", 100.0 * hits as f64 / n as f64);
        }
        _ => return Err(Error::data("task of the data does not match the model")),
    }
    match model.as_tree() {
        Some(tree) => print_visits(&tree, &x)?,
        None => {
            if let Model::Forest(f) = &model {
                println!("forest of {} trees", f.members().len());
            }
        }
    }
    Ok(())
}

fn print_visits(tree: &crate::tree::ObliqueTree, x: &Array2<f64>) -> Result<()> {
    let report = visit_counts(tree, x.view())?;
    let hist: Vec<String> = report.leaf_visits.iter().map(usize::to_string).collect();
    println!("leaf_visits={}", hist.join(","));
    println!(
        "reachable_nodes={}/{} reachable_leaves={}/{}",
        report.reachable_internal,
        report.node_visits.len(),
        report.reachable_leaves,
        report.leaf_visits.len()
    );
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let (file, model, stats) = load_model(&a.model_in)?;
    let raw = load_csv_features(&a.data, a.label_col.as_ref(), !a.no_header)?;
    if raw.ncols() != model.input_dim() {
        return Err(Error::data(format!(
            "data has {} features, model expects {}",
            raw.ncols(),
            model.input_dim()
        )));
    }
    let x = stats.transform_features(raw.view())?;
    let mut out: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    for row in x.rows() {
        let v = model.predict_row(row)?;
        match file.task {
            Task::Regression => writeln!(out, "{}", stats.inverse_target(v[0]))?,
            Task::Classification { .. } => writeln!(out, "{}", argmax(v.view()))?,
        }
    }
    out.flush()?;
    Ok(())
}

fn cmd_bandit_sim(a: BanditArgs) -> Result<()> {
    let is_clf = a.data.task == TaskArg::Clf;
    let loss = a.loss.unwrap_or(if is_clf { OracleLoss::ZeroOne } else { OracleLoss::Squared });
    let estimator = a.estimator.unwrap_or(if is_clf {
        EstimatorKind::Classification
    } else {
        EstimatorKind::OnePoint
    });
    if (estimator == EstimatorKind::Classification) != is_clf || loss.is_classification() != is_clf {
        return Err(Error::config(format!(
            "estimator {estimator:?} and loss '{loss}' do not fit the {} task",
            if is_clf { "clf" } else { "reg" }
        )));
    }
    let regularizer = Regularizer::new(a.l1, a.l2)?;
    let mut cfg = BanditConfig {
        estimator,
        delta_explore: a.delta_explore,
        delta_perturb: a.delta_perturb,
        learning_rate: a.lr,
        regularizer,
        accumulate: a.accumulate,
        snapshot_every: a.snapshot_every,
        seed: a.shape.seed,
        ..BanditConfig::default()
    };
    cfg.optimizer.momentum = a.momentum;
    let spec = a.shape.spec()?;
    match estimator {
        EstimatorKind::Classification => println!(
            "estimator=classification delta_explore={} lr={} accumulate={}",
            cfg.delta_explore, cfg.learning_rate, cfg.accumulate
        ),
        _ => println!(
            "estimator={} delta_perturb={} lr={} accumulate={}",
            if estimator == EstimatorKind::OnePoint { "one_point" } else { "two_point" },
            cfg.delta_perturb,
            cfg.learning_rate,
            cfg.accumulate
        ),
    }
    println!(
        "height={} layers={} hidden_dims={:?} rounds={} loss={loss}",
        a.shape.height,
        spec.num_layers(),
        spec.dims(a.shape.height),
        a.rounds
    );

    let data = a.data.load()?;
    let (stream_data, heldout, stats) = prepare(data, a.holdout_frac, a.shape.seed)?;
    let init_cfg = TrainConfig {
        height: a.shape.height,
        seed: a.shape.seed,
        ..TrainConfig::default()
    };
    let init = init_params(&stream_data, &init_cfg, &spec)?;
    cfg.validate(init.num_outputs())?;
    let tables = PathTables::new(a.shape.height)?;
    let stream = SimulatedStream::new(&stream_data, loss, a.rounds, a.shape.seed)?;
    let span = stats.target_span();
    let evaluate = heldout.as_ref().map(|h| {
        move |p: &crate::tree::TreeParams| -> Result<f64> {
            Ok(match score(p, h)? {
                Metric::Rmse(r) => r * span,
                Metric::Accuracy(acc) => acc,
            })
        }
    });
    let (params, trace) = train_bandit(stream, &cfg, init, &tables, evaluate)?;
    let expected = a.rounds * estimator.queries_per_round();
    if trace.queries != expected {
        return Err(Error::Oracle(format!(
            "query audit failed: {} queries for {} rounds",
            trace.queries, a.rounds
        )));
    }
    println!(
        "rounds={} queries={} mean_loss={:.6}",
        trace.rounds(),
        trace.queries,
        trace.mean_loss()
    );
    if let Some(last) = trace.snapshots.last().and_then(|s| s.metric) {
        match stream_data.task() {
            Task::Regression => println!("heldout rmse={last:.6}"),
            Task::Classification { .. } => println!("heldout accuracy={:.2}%", 100.0 * last),
        }
    }
    if let Some(path) = &a.trace_out {
        trace.write_csv(BufWriter::new(File::create(path)?))?;
    }
    if let Some(path) = &a.model_out {
        let config = json!({ "command": "bandit-sim", "bandit": cfg, "hidden": spec.hidden, "loss": loss.to_string() });
        ModelFile::new(&Model::Tree(params.collapse()), stream_data.task(), Some(stats), config, a.shape.seed)?
            .save(path)?;
    }
    Ok(())
}

fn cmd_forest(a: ForestArgs) -> Result<()> {
    let spec = a.shape.spec()?;
    let cfg = a.optim.config(a.shape.height, a.shape.seed)?;
    println!("n_trees={} fraction={}", a.n_trees, a.fraction);
    echo_train(&cfg, &spec);
    let data = a.data.load()?;
    let (train, val, stats) = prepare(data, a.optim.val_frac, a.shape.seed)?;
    let forest = train_forest(&train, a.n_trees, &cfg, &spec, a.fraction, a.shape.seed)?;
    println!("train {}", describe(score(&forest, &train)?, &stats));
    if let Some(v) = &val {
        println!("val {}", describe(score(&forest, v)?, &stats));
    }
    let config = json!({
        "command": "forest",
        "train": cfg,
        "hidden": spec.hidden,
        "n_trees": a.n_trees,
        "fraction": a.fraction,
    });
    ModelFile::new(&Model::Forest(forest), train.task(), Some(stats), config, a.shape.seed)?.save(&a.model_out)?;
    println!("model written to {}", a.model_out.display());
    Ok(())
}
