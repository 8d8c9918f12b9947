//! Command-line interface. Every subcommand is also callable as a `cmd_*`
//! function; [`run`] parses arguments, prints results as JSON and maps errors
//! to exit codes (1 runtime, 2 usage or validation).

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::analysis::{
    ablation_suite, attention_histogram, attention_trace, case_study, mi_probe, write_ablation_table,
    write_edge_dump, write_histograms, AnalysisError, Histogram, Variant,
};
use crate::graph_encoder::GraphInputs;
use crate::ingest::{
    generate_synthetic, load_checkins, parse_tz, filter_dataset, DatasetStats, DistanceBinning, FilterConfig,
    IngestError, SplitRatios, SynthConfig,
};
use crate::tensor::{ParamStore, Tape, TensorError};
use crate::train::{
    evaluate_split, train, Ablation, EvalReport, EpochLog, Metrics, Model, Split, ToyCheck, TrainConfig, TrainData,
    TrainError, KS,
};

pub const DATASET_FILE: &str = "dataset.json";
pub const GRAPH_FILE: &str = "graph.json";
pub const FEATURES_FILE: &str = "features.json";
pub const STATS_FILE: &str = "stats.json";
pub const CHECKPOINT_FILE: &str = "best.ckpt";
pub const CONFIG_FILE: &str = "config.toml";
pub const METRICS_FILE: &str = "metrics.json";
pub const CURVE_FILE: &str = "loss_curve.csv";
pub const LOG_FILE: &str = "train_log.json";
pub const RUN_FILE: &str = "run.json";

/// Largest relative gradient error `gradcheck` accepts.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::BadTimezone(_) | IngestError::InfeasibleSynth(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<TensorError> for CliError {
    fn from(e: TensorError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::UnknownNode(_) => CliError::Usage(e.to_string()),
            AnalysisError::Train(t) => t.into(),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "cagnn", version, about = "Next-POI recommendation with context-adaptive graph attention")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter, segment and split a check-in CSV, then build the graph and context features.
    Prepare(PrepareArgs),
    /// Write a synthetic check-in CSV.
    Synth(SynthArgs),
    /// Train on a prepared dataset.
    Train(TrainArgs),
    /// Evaluate a trained run on one split.
    Eval(EvalArgs),
    /// Attention histograms, case studies, ablation sweeps and the mutual-information probe.
    Analyze(AnalyzeArgs),
    /// Compare analytic gradients of the full objective with central differences on a tiny instance.
    Gradcheck(GradcheckArgs),
    /// Print a complete training config.
    Config(ConfigArgs),
}

#[derive(Clone, Debug, Args)]
pub struct PrepareArgs {
    /// Check-in CSV with header `user_id,poi_id,category_id,lat,lon,timestamp`.
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory for the dataset artifacts.
    #[arg(long)]
    pub out: PathBuf,
    /// Minimum check-ins per POI.
    #[arg(long, default_value_t = 10)]
    pub min_poi: usize,
    /// Minimum trajectories per user.
    #[arg(long, default_value_t = 5)]
    pub min_user_traj: usize,
    /// Minimum check-ins per trajectory.
    #[arg(long, default_value_t = 3)]
    pub min_traj_len: usize,
    /// Width of a distance interval in km.
    #[arg(long, default_value_t = 1.0)]
    pub bin_km: f64,
    /// Number of distance intervals; the last one absorbs longer transitions.
    #[arg(long, default_value_t = 20)]
    pub dmax: usize,
    /// UTC offset for time slots and day boundaries, e.g. `+0`, `-5`, `+05:30`.
    #[arg(long, default_value = "+0", allow_hyphen_values = true)]
    pub tz: String,
    /// Fraction of each user's trajectories used for training.
    #[arg(long, default_value_t = 0.8)]
    pub train_ratio: f64,
    /// Fraction of each user's trajectories used for validation.
    #[arg(long, default_value_t = 0.1)]
    pub val_ratio: f64,
}

impl PrepareArgs {
    pub fn new(input: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        Self {
            input: input.into(),
            out: out.into(),
            min_poi: 10,
            min_user_traj: 5,
            min_traj_len: 3,
            bin_km: 1.0,
            dmax: 20,
            tz: "+0".to_string(),
            train_ratio: 0.8,
            val_ratio: 0.1,
        }
    }
}

#[derive(Clone, Debug, Args)]
pub struct SynthArgs {
    /// TOML synthetic corpus spec; defaults apply to missing keys or without a file.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args)]
pub struct TrainArgs {
    /// Directory written by `prepare`.
    #[arg(long)]
    pub data: PathBuf,
    /// TOML training config; defaults apply to missing keys or without a file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run directory, created if needed.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args)]
pub struct EvalArgs {
    /// Run directory written by `train`.
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: Split,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AnalyzeMode {
    /// Final-layer attention histograms of both variants plus the per-edge dump.
    Hist,
    /// Both variants' attention over one node's neighbourhood.
    Case,
    /// Retrain every ablation variant with the run's config.
    Ablate,
    /// Plug-in mutual information between representations and next-POI labels.
    Mi,
}

#[derive(Clone, Debug, Args)]
pub struct AnalyzeArgs {
    /// Run directory written by `train`.
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long, value_enum)]
    pub mode: AnalyzeMode,
    /// POI id, or dense POI index, for `--mode case`.
    #[arg(long)]
    pub node: Option<String>,
    /// Split whose samples feed `--mode mi`.
    #[arg(long, default_value = "test")]
    pub split: Split,
    /// Quantization cells for `--mode mi`.
    #[arg(long, default_value_t = 16)]
    pub bins: usize,
    /// Consecutive seeds per variant for `--mode ablate`, starting at the run's seed.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
}

impl AnalyzeArgs {
    pub fn new(run: impl Into<PathBuf>, mode: AnalyzeMode) -> Self {
        Self {
            run: run.into(),
            mode,
            node: None,
            split: Split::Test,
            bins: 16,
            seeds: 1,
        }
    }
}

#[derive(Clone, Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 4)]
    pub dim: usize,
    #[arg(long, default_value_t = 6)]
    pub pois: usize,
    #[arg(long, default_value_t = 3)]
    pub categories: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
}

impl Default for GradcheckArgs {
    fn default() -> Self {
        let t = ToyCheck::default();
        Self {
            dim: t.dim,
            pois: t.pois,
            categories: t.categories,
            seed: t.seed,
            eps: t.eps,
        }
    }
}

#[derive(Clone, Debug, Args)]
pub struct ConfigArgs {
    /// Apply an ablation variant: full, no_mutloss, no_catada, no_spatada, no_tempada, no_contada.
    #[arg(long)]
    pub variant: Option<String>,
}

/// One line of the metrics JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub split: Split,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "HR")]
    pub hr: f64,
    #[serde(rename = "NDCG")]
    pub ndcg: f64,
    pub epoch: usize,
    pub seed: u64,
    pub config_hash: String,
}

pub fn metric_records(split: Split, m: &Metrics, epoch: usize, cfg: &TrainConfig) -> Vec<MetricRecord> {
    let hash = cfg.hash();
    KS.iter()
        .enumerate()
        .map(|(i, &k)| MetricRecord {
            split,
            k,
            hr: m.hr[i],
            ndcg: m.ndcg[i],
            epoch,
            seed: cfg.seed,
            config_hash: hash.clone(),
        })
        .collect()
}

/// Where a run's data came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub data: PathBuf,
    pub config_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub best_epoch: usize,
    pub best_val_ndcg10: Option<f64>,
    pub epochs: Vec<EpochLog>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckSummary {
    pub max_rel_error: f64,
    pub worst_param: Option<String>,
    pub worst_index: Option<usize>,
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates: usize,
    pub passed: bool,
}

fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("no such file: {}", path.display())))
    }
}

fn require_dir(path: &Path) -> Result<(), CliError> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("no such directory: {}", path.display())))
    }
}

fn write_json<V: Serialize + ?Sized>(path: &Path, value: &V) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

fn read_json<V: DeserializeOwned>(path: &Path) -> Result<V, CliError> {
    require_file(path)?;
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| io_err(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

pub fn save_data(data: &TrainData, dir: &Path) -> Result<(), CliError> {
    create_dir(dir)?;
    write_json(&dir.join(DATASET_FILE), &data.dataset)?;
    write_json(&dir.join(GRAPH_FILE), &data.graph)?;
    write_json(&dir.join(FEATURES_FILE), &data.features)?;
    write_json(&dir.join(STATS_FILE), &data.dataset.stats)
}

pub fn load_data(dir: &Path) -> Result<TrainData, CliError> {
    require_dir(dir)?;
    Ok(TrainData {
        dataset: read_json(&dir.join(DATASET_FILE))?,
        graph: read_json(&dir.join(GRAPH_FILE))?,
        features: read_json(&dir.join(FEATURES_FILE))?,
    })
}

pub fn load_config(path: Option<&Path>) -> Result<TrainConfig, CliError> {
    match path {
        Some(p) => {
            require_file(p)?;
            let text = fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            Ok(TrainConfig::from_toml(&text)?)
        }
        None => Ok(TrainConfig::default()),
    }
}

pub fn cmd_prepare(args: &PrepareArgs) -> Result<DatasetStats, CliError> {
    require_file(&args.input)?;
    if !(args.bin_km > 0.0 && args.bin_km.is_finite()) {
        return Err(CliError::Usage("--bin-km must be positive".into()));
    }
    if args.dmax == 0 {
        return Err(CliError::Usage("--dmax must be at least 1".into()));
    }
    let ratio_ok = |r: f64| (0.0..=1.0).contains(&r);
    if !ratio_ok(args.train_ratio) || !ratio_ok(args.val_ratio) || args.train_ratio + args.val_ratio > 1.0 {
        return Err(CliError::Usage("split ratios must lie in [0, 1] and sum to at most 1".into()));
    }
    let tz = parse_tz(&args.tz)?;
    let rows = load_checkins(&args.input, tz)?;
    let filter = FilterConfig {
        min_poi_interactions: args.min_poi,
        min_user_trajectories: args.min_user_traj,
        min_traj_len: args.min_traj_len,
        tz,
        binning: DistanceBinning {
            width_km: args.bin_km,
            dmax: args.dmax,
        },
    };
    let mut ds = filter_dataset(&rows, &filter)?;
    ds.apply_split(SplitRatios {
        train: args.train_ratio,
        val: args.val_ratio,
    });
    let data = TrainData::new(ds, true);
    save_data(&data, &args.out)?;
    Ok(data.dataset.stats)
}

pub fn cmd_synth(args: &SynthArgs) -> Result<usize, CliError> {
    let cfg: SynthConfig = match &args.spec {
        Some(p) => {
            require_file(p)?;
            let text = fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
        }
        None => SynthConfig::default(),
    };
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    Ok(generate_synthetic(&cfg, args.seed, &args.out)?)
}

pub fn cmd_train(args: &TrainArgs) -> Result<Vec<MetricRecord>, CliError> {
    let cfg = load_config(args.config.as_deref())?;
    let data = load_data(&args.data)?;
    let outcome = train::<f64>(&data, &cfg)?;
    let report = &outcome.report;
    create_dir(&args.out)?;
    outcome.model.store.save(&args.out.join(CHECKPOINT_FILE))?;
    let cfg_path = args.out.join(CONFIG_FILE);
    fs::write(&cfg_path, cfg.to_toml()).map_err(|e| io_err(&cfg_path, e))?;

    let records = report_records(report, &cfg);
    write_json(&args.out.join(METRICS_FILE), &records)?;
    write_curve(&args.out.join(CURVE_FILE), &report.curve)?;
    write_json(
        &args.out.join(LOG_FILE),
        &TrainLog {
            best_epoch: report.best_epoch,
            best_val_ndcg10: report.best_val_ndcg10,
            epochs: report.curve.clone(),
        },
    )?;
    let data_dir = fs::canonicalize(&args.data).map_err(|e| io_err(&args.data, e))?;
    write_json(
        &args.out.join(RUN_FILE),
        &RunManifest {
            data: data_dir,
            config_hash: cfg.hash(),
        },
    )?;
    Ok(records)
}

fn report_records(report: &EvalReport, cfg: &TrainConfig) -> Vec<MetricRecord> {
    let splits = [(Split::Train, &report.train), (Split::Val, &report.val), (Split::Test, &report.test)];
    splits
        .into_iter()
        .filter_map(|(s, m)| m.as_ref().map(|m| metric_records(s, m, report.best_epoch, cfg)))
        .flatten()
        .collect()
}

fn write_curve(path: &Path, curve: &[EpochLog]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let fail = |e: csv::Error| io_err(path, e);
    w.write_record(["epoch", "train_loss", "val_ndcg10"]).map_err(fail)?;
    for e in curve {
        w.serialize((e.epoch, e.train_loss, e.val_ndcg10)).map_err(fail)?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// A trained run loaded back from disk.
pub struct Run {
    pub dir: PathBuf,
    pub cfg: TrainConfig,
    pub data: TrainData,
    pub model: Model<f64>,
    pub best_epoch: usize,
}

pub fn load_run(dir: &Path) -> Result<Run, CliError> {
    require_dir(dir)?;
    let cfg = load_config(Some(&dir.join(CONFIG_FILE)))?;
    let manifest: RunManifest = read_json(&dir.join(RUN_FILE))?;
    let log: TrainLog = read_json(&dir.join(LOG_FILE))?;
    let data = load_data(&manifest.data)?;
    let ckpt = dir.join(CHECKPOINT_FILE);
    require_file(&ckpt)?;
    let mut model = Model::<f64>::new(data.dims(cfg.dim), &cfg);
    model.store.load_values(&ParamStore::load(&ckpt)?)?;
    Ok(Run {
        dir: dir.to_path_buf(),
        cfg,
        data,
        model,
        best_epoch: log.best_epoch,
    })
}

pub fn cmd_eval(args: &EvalArgs) -> Result<Vec<MetricRecord>, CliError> {
    let run = load_run(&args.run)?;
    let m = evaluate_split(&run.model, &run.data, args.split)?;
    Ok(metric_records(args.split, &m, run.best_epoch, &run.cfg))
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<serde_json::Value, CliError> {
    if args.mode == AnalyzeMode::Case && args.node.is_none() {
        return Err(CliError::Usage("--mode case requires --node".into()));
    }
    if args.mode == AnalyzeMode::Mi && args.bins == 0 {
        return Err(CliError::Usage("--bins must be positive".into()));
    }
    if args.mode == AnalyzeMode::Ablate && args.seeds == 0 {
        return Err(CliError::Usage("--seeds must be positive".into()));
    }
    let run = load_run(&args.run)?;
    let inputs: GraphInputs<f64> = run.data.graph_inputs(&run.cfg)?;
    let switches = run.cfg.ablation().switches();
    let slope = run.cfg.leaky_slope;
    match args.mode {
        AnalyzeMode::Hist => {
            let hists: Vec<(Variant, Histogram)> = [Variant::ContextAdaptive, Variant::StandardGat]
                .into_iter()
                .map(|v| attention_histogram(&run.model, &inputs, v, switches, slope).map(|h| (v, h)))
                .collect::<Result<_, _>>()?;
            write_histograms(create(&run.dir.join("hist.csv"))?, &hists)?;
            let trace = attention_trace(&run.model, &inputs, switches, slope)?;
            write_edge_dump(create(&run.dir.join("edges.csv"))?, &inputs, run.cfg.neighbor_direction, &trace)?;
            let mut out = json!({ "edges": inputs.edges.len() });
            for (v, h) in &hists {
                out[v.name()] = json!(h.counts);
            }
            Ok(out)
        }
        AnalyzeMode::Case => {
            let node = resolve_node(&run.data, args.node.as_deref().expect("checked above"))?;
            let records = case_study(&run.model, &inputs, node, switches, slope)?;
            let path = run.dir.join("case.csv");
            let mut w = csv::Writer::from_writer(create(&path)?);
            let fail = |e: csv::Error| io_err(&path, e);
            w.write_record(["neighbor", "category", "alpha_gat", "alpha_context_adaptive", "suppressed"])
                .map_err(fail)?;
            let ds = &run.data.dataset;
            let mut rows = Vec::with_capacity(records.len());
            for r in &records {
                let (poi, cat) = (&ds.pois[r.neighbor].id, &ds.categories[r.category]);
                w.serialize((poi, cat, r.alpha_gat, r.alpha_context_adaptive, r.suppressed))
                    .map_err(fail)?;
                rows.push(json!({
                    "neighbor": poi,
                    "category": cat,
                    "alpha_gat": r.alpha_gat,
                    "alpha_context_adaptive": r.alpha_context_adaptive,
                    "suppressed": r.suppressed,
                }));
            }
            w.flush().map_err(|e| io_err(&path, e))?;
            Ok(json!({ "node": ds.pois[node].id, "neighbors": rows }))
        }
        AnalyzeMode::Ablate => {
            let mut runs = Vec::new();
            for s in 0..args.seeds {
                let base = TrainConfig {
                    seed: run.cfg.seed + s,
                    ..run.cfg.clone()
                };
                runs.extend(ablation_suite(&run.data, &base, &Ablation::VARIANTS)?);
            }
            write_ablation_table(create(&run.dir.join("ablation.csv"))?, &runs)?;
            let rows: Vec<_> = runs
                .iter()
                .map(|r| {
                    json!({
                        "variant": r.variant,
                        "seed": r.seed,
                        "best_epoch": r.report.best_epoch,
                        "test": r.report.test,
                    })
                })
                .collect();
            Ok(json!(rows))
        }
        AnalyzeMode::Mi => {
            let out = mi_report(&run, &inputs, args.split, args.bins)?;
            write_json(&run.dir.join("mi.json"), &out)?;
            Ok(out)
        }
    }
}

fn resolve_node(data: &TrainData, node: &str) -> Result<usize, CliError> {
    if let Some(&i) = data.dataset.poi_index().get(node) {
        return Ok(i);
    }
    match node.parse::<usize>() {
        Ok(i) if i < data.dataset.num_pois() => Ok(i),
        _ => Err(AnalysisError::UnknownNode(node.to_string()).into()),
    }
}

/// MI of the sequence representation alone and joined with the graph
/// embedding of the last visited POI.
fn mi_report(run: &Run, inputs: &GraphInputs<f64>, split: Split, bins: usize) -> Result<serde_json::Value, CliError> {
    let samples = run.data.samples(split);
    if samples.is_empty() {
        return Err(TrainError::EmptySplit(split).into());
    }
    let tape = Tape::new();
    let bound = run.model.store.bind_frozen(&tape);
    let enc = run.model.params.encode_graph(
        &tape,
        &bound,
        inputs,
        run.cfg.ablation().switches(),
        run.cfg.leaky_slope,
    )?;
    let hg = tape.value(enc.hg);
    let mark = tape.len();
    let mut seq = Vec::with_capacity(samples.len());
    let mut joint = Vec::with_capacity(samples.len());
    let mut labels = Vec::with_capacity(samples.len());
    for s in &samples {
        tape.truncate(mark);
        let h = tape.value(run.model.params.encode_sequence(&tape, &bound, s)?);
        let last = h.row(h.rows() - 1).to_vec();
        let mut j = last.clone();
        j.extend_from_slice(hg.row(*s.pois.last().expect("non-empty prefix")));
        seq.push(last);
        joint.push(j);
        labels.push(s.target);
    }
    let seq_mi = mi_probe(&seq, &labels, bins, run.cfg.seed)?;
    let joint_mi = mi_probe(&joint, &labels, bins, run.cfg.seed)?;
    Ok(json!({
        "split": split,
        "bins": bins,
        "sequence": seq_mi,
        "sequence_and_graph": joint_mi,
    }))
}

pub fn cmd_gradcheck(args: &GradcheckArgs) -> Result<GradcheckSummary, CliError> {
    if args.dim == 0 || args.pois == 0 || args.categories == 0 || args.categories > args.pois {
        return Err(CliError::Usage("need dim, pois, categories >= 1 and categories <= pois".into()));
    }
    if !(args.eps > 0.0 && args.eps.is_finite()) {
        return Err(CliError::Usage("--eps must be positive".into()));
    }
    let check = ToyCheck {
        dim: args.dim,
        pois: args.pois,
        categories: args.categories,
        seed: args.seed,
        eps: args.eps,
        ..ToyCheck::default()
    };
    let r = check.run()?;
    let (worst_param, worst_index) = match r.worst {
        Some((p, i)) => (Some(p), Some(i)),
        None => (None, None),
    };
    Ok(GradcheckSummary {
        max_rel_error: r.max_rel_error,
        worst_param,
        worst_index,
        analytic: r.worst_values.0,
        numeric: r.worst_values.1,
        coordinates: r.coordinates,
        passed: r.max_rel_error < GRADCHECK_TOLERANCE,
    })
}

pub fn cmd_config(args: &ConfigArgs) -> Result<String, CliError> {
    let cfg = TrainConfig::default();
    let cfg = match &args.variant {
        Some(v) => {
            let a = Ablation::from_variant(v).ok_or_else(|| {
                CliError::Usage(format!("unknown variant `{v}` (expected one of {})", Ablation::VARIANTS.join(", ")))
            })?;
            cfg.with_ablation(a)
        }
        None => cfg,
    };
    Ok(cfg.to_toml())
}

fn print_json<V: Serialize + ?Sized>(value: &V) {
    print_text(&(serde_json::to_string_pretty(value).expect("serializable") + "\n"));
}

fn print_text(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

/// Runs one command and returns its exit code.
pub fn dispatch(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Prepare(a) => print_json(&cmd_prepare(&a)?),
        Command::Synth(a) => {
            let n = cmd_synth(&a)?;
            print_json(&json!({ "checkins": n, "out": a.out }));
        }
        Command::Train(a) => print_json(&cmd_train(&a)?),
        Command::Eval(a) => print_json(&cmd_eval(&a)?),
        Command::Analyze(a) => print_json(&cmd_analyze(&a)?),
        Command::Gradcheck(a) => {
            let s = cmd_gradcheck(&a)?;
            print_json(&s);
            return Ok(if s.passed { 0 } else { 1 });
        }
        Command::Config(a) => print_text(&cmd_config(&a)?),
    }
    Ok(0)
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, A>(args: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
