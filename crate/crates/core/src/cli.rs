//! The `smsvar` command-line tool.
//!
//! Every command writes a run manifest next to its outputs. `smsvar replay`
//! re-executes a manifest with its recorded configuration snapshot.
//!
//! Exit codes: 2 for usage errors, invalid configuration and missing files,
//! 3 for ingestion and dimension errors, 4 for numeric failures.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{mkad_kernel, mkad_score_kernel, var_baseline_fit, KernelMatrix, MkadConfig};
use crate::detection::{score_dataset, write_scores_csv, write_steps_csv, Method, ScoreSeries, ScoringModel};
use crate::error::{Error, Result};
use crate::experiments::{generate_scenario, run_benchmark, write_runs_csv, write_summary_json, BenchmarkConfig, ScenarioConfig};
use crate::flight::{FlightRecord, ModeDictionary, Standardizer};
use crate::io::{
    build_scoring, build_training, data_files, parse_jsonl_flight, read_raw, write_atomic, write_csv, write_jsonl, CsvRows, ModelFile,
    RawDataset, RawFlight,
};
use crate::learning::{em_fit, EmConfig, EmReport};
use crate::streaming::StreamingScorer;

/// Version expected in the `format_version` field of every config file.
pub const CONFIG_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "smsvar", version, about = "Semi-Markov switching VAR anomaly detection for flight data")]
pub struct Cli {
    /// Worker threads (defaults to one per core).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Command {
    /// Fit a model to a dataset.
    Train(TrainArgs),
    /// Score flights with a trained model.
    Score(ScoreArgs),
    /// Generate a labeled synthetic dataset.
    Simulate(SimulateArgs),
    /// Run the synthetic detection benchmark.
    Experiment(ExperimentArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Train(_) => "train",
            Command::Score(_) => "score",
            Command::Simulate(_) => "simulate",
            Command::Experiment(_) => "experiment",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Debug, Clone, PartialEq, clap::Args, Serialize, Deserialize)]
pub struct TrainArgs {
    /// CSV or JSONL file, or a directory of them.
    #[arg(long)]
    pub data: PathBuf,
    /// Where to write the model file.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory for the report and manifest (defaults to the model's directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, clap::Args, Serialize, Deserialize)]
pub struct ScoreArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value = "kl")]
    pub method: Method,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write every per-step value.
    #[arg(long)]
    pub per_step: bool,
    /// Consume the data row by row and print values to stdout as they are released.
    #[arg(long)]
    pub stream: bool,
    /// MKAD kernel cache: reused when its config hash matches, written otherwise.
    #[arg(long)]
    pub kernel: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, PartialEq, clap::Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: DataFormat,
}

#[derive(Debug, Clone, PartialEq, clap::Args, Serialize, Deserialize)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the benchmark's base seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, clap::Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write outputs here instead of the recorded location.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub format_version: u32,
    #[serde(default)]
    pub em: EmConfig,
    /// Also fit the pooled VAR used by the `var` detector.
    #[serde(default = "yes")]
    pub var_baseline: bool,
}

fn yes() -> bool {
    true
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            format_version: CONFIG_FORMAT_VERSION,
            em: EmConfig::default(),
            var_baseline: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreConfig {
    pub format_version: u32,
    #[serde(default)]
    pub mkad: MkadConfig,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig {
            format_version: CONFIG_FORMAT_VERSION,
            mkad: MkadConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub format_version: u32,
    #[serde(default)]
    pub scenario: ScenarioConfig,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            format_version: CONFIG_FORMAT_VERSION,
            scenario: ScenarioConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub format_version: u32,
    #[serde(default)]
    pub benchmark: BenchmarkConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            format_version: CONFIG_FORMAT_VERSION,
            benchmark: BenchmarkConfig::default(),
        }
    }
}

trait Versioned {
    fn version(&self) -> u32;
}

macro_rules! versioned {
    ($($t:ty),*) => {$(
        impl Versioned for $t {
            fn version(&self) -> u32 {
                self.format_version
            }
        }
    )*};
}
versioned!(TrainConfig, ScoreConfig, SimulateConfig, ExperimentConfig);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Record of one run: enough to repeat it and to check that its inputs are unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub invocation: Command,
    /// Effective configuration, including seed overrides.
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<PathBuf>,
    pub started_unix_secs: f64,
    pub wall_clock_secs: f64,
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Usage(_) | Error::InvalidParam(_) => 2,
        Error::Io(e) if matches!(e.kind(), std::io::ErrorKind::NotFound | std::io::ErrorKind::PermissionDenied) => 2,
        Error::DegenerateEvidence { .. } | Error::RankDeficient => 4,
        _ => 3,
    }
}

/// Entry point of the binary.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("smsvar: error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(Error::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Usage(format!("cannot size the thread pool: {e}")))?;
    }
    execute(cli.command, None)
}

fn execute(command: Command, snapshot: Option<serde_json::Value>) -> Result<()> {
    match command {
        Command::Train(a) => cmd_train(a, snapshot),
        Command::Score(a) => cmd_score(a, snapshot),
        Command::Simulate(a) => cmd_simulate(a, snapshot),
        Command::Experiment(a) => cmd_experiment(a, snapshot),
        Command::Replay(a) => cmd_replay(a),
    }
}

fn absolute(p: &Path) -> Result<PathBuf> {
    Ok(std::path::absolute(p)?)
}

fn require_exists(p: &Path, what: &str) -> Result<()> {
    if p.exists() {
        Ok(())
    } else {
        Err(Error::Usage(format!("{what} `{}` does not exist", p.display())))
    }
}

fn ensure_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p)?;
    Ok(())
}

/// Config from a snapshot, a file or the defaults, with its version checked.
fn load_config<T: DeserializeOwned + Default + Versioned>(file: Option<&Path>, snapshot: Option<serde_json::Value>) -> Result<T> {
    let cfg: T = match (snapshot, file) {
        (Some(v), _) => serde_json::from_value(v).map_err(|e| Error::InvalidParam(format!("manifest config: {e}")))?,
        (None, Some(path)) => {
            require_exists(path, "config file")?;
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str(&text).map_err(|e| Error::InvalidParam(format!("{}: {e}", path.display())))?
        }
        (None, None) => T::default(),
    };
    if cfg.version() != CONFIG_FORMAT_VERSION {
        return Err(Error::InvalidParam(format!(
            "config format_version {} (this build reads {CONFIG_FORMAT_VERSION})",
            cfg.version()
        )));
    }
    Ok(cfg)
}

fn sha256_file(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    let mut f = File::open(path)?;
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Digests of a file, or of every data file inside a directory.
fn digest_inputs(path: &Path) -> Result<Vec<InputDigest>> {
    let files = if path.is_dir() { data_files(path)? } else { vec![path.to_path_buf()] };
    files
        .into_iter()
        .map(|p| {
            Ok(InputDigest {
                sha256: sha256_file(&p)?,
                path: p,
            })
        })
        .collect()
}

struct ManifestBuilder {
    invocation: Command,
    config: serde_json::Value,
    seeds: BTreeMap<String, u64>,
    inputs: Vec<InputDigest>,
    outputs: Vec<PathBuf>,
    started: SystemTime,
    clock: Instant,
}

impl ManifestBuilder {
    fn new(invocation: Command, config: &impl Serialize) -> Result<Self> {
        Ok(ManifestBuilder {
            invocation,
            config: serde_json::to_value(config)?,
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: SystemTime::now(),
            clock: Instant::now(),
        })
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.extend(digest_inputs(path)?);
        Ok(())
    }

    fn finish(self, path: &Path) -> Result<()> {
        let mut outputs = self.outputs;
        outputs.push(path.to_path_buf());
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: self.invocation.name().to_string(),
            invocation: self.invocation,
            config: self.config,
            seeds: self.seeds,
            inputs: self.inputs,
            outputs,
            started_unix_secs: self.started.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0),
            wall_clock_secs: self.clock.elapsed().as_secs_f64(),
        };
        write_atomic(path, |w| Ok(serde_json::to_writer_pretty(w, &manifest)?))
    }
}

fn cmd_train(mut a: TrainArgs, snapshot: Option<serde_json::Value>) -> Result<()> {
    require_exists(&a.data, "data path")?;
    a.data = absolute(&a.data)?;
    a.model = absolute(&a.model)?;
    let out = match &a.out {
        Some(o) => absolute(o)?,
        None => a.model.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(".")),
    };
    a.out = Some(out.clone());
    let mut cfg: TrainConfig = load_config(a.config.as_deref(), snapshot)?;
    if let Some(seed) = a.seed {
        cfg.em.seed = seed;
    }
    cfg.em.validate()?;
    let mut manifest = ManifestBuilder::new(Command::Train(a.clone()), &cfg)?;
    manifest.seeds.insert("em".into(), cfg.em.seed);
    manifest.input(&a.data)?;

    let raw = read_raw(&a.data)?;
    let ds = build_training(&raw)?;
    // one extra mode stands for switch patterns never seen in training
    let n_modes = ds.dictionary.len() + 1;
    let report = em_fit(&ds.flights, n_modes, &cfg.em)?;
    let var_baseline = if cfg.var_baseline {
        Some(var_baseline_fit(&ds.flights, cfg.em.ridge)?)
    } else {
        None
    };
    let model = ModelFile::new(report.params.clone(), ds.dictionary, ds.standardizer, var_baseline);

    ensure_dir(&out)?;
    if let Some(dir) = a.model.parent() {
        ensure_dir(dir)?;
    }
    model.write(&a.model)?;
    let report_path = out.join("train_report.json");
    write_atomic(&report_path, |w| Ok(serde_json::to_writer_pretty(w, &report)?))?;
    manifest.outputs = vec![a.model.clone(), report_path];
    manifest.finish(&out.join("manifest_train.json"))?;
    print_train_summary(&report, ds.flights.len(), n_modes);
    Ok(())
}

fn print_train_summary(report: &EmReport, n_flights: usize, n_modes: usize) {
    println!(
        "trained on {n_flights} flights, {n_modes} modes: {} iterations, converged={}, log-likelihood {:.6}, best restart {}",
        report.iterations_run,
        report.converged,
        report.final_loglik(),
        report.best_restart
    );
    for flag in &report.flags {
        println!("note: {}", serde_json::to_string(flag).unwrap_or_default());
    }
}

fn score_paths(out: &Path, method: Method) -> (PathBuf, PathBuf, PathBuf) {
    (
        out.join(format!("scores_{method}.csv")),
        out.join(format!("steps_{method}.csv")),
        out.join(format!("manifest_score_{method}.json")),
    )
}

fn cmd_score(mut a: ScoreArgs, snapshot: Option<serde_json::Value>) -> Result<()> {
    require_exists(&a.data, "data path")?;
    require_exists(&a.model, "model file")?;
    a.data = absolute(&a.data)?;
    a.model = absolute(&a.model)?;
    a.out = absolute(&a.out)?;
    if let Some(k) = &a.kernel {
        a.kernel = Some(absolute(k)?);
    }
    if a.stream && a.method == Method::Mkad {
        return Err(Error::Usage("mkad compares whole flights and cannot be streamed".into()));
    }
    let cfg: ScoreConfig = load_config(a.config.as_deref(), snapshot)?;
    cfg.mkad.validate()?;
    let mut manifest = ManifestBuilder::new(Command::Score(a.clone()), &cfg)?;
    manifest.input(&a.data)?;
    manifest.input(&a.model)?;

    let model_file = ModelFile::read(&a.model)?;
    let model = model_file.scoring_model();
    if a.method == Method::Var && model.var_matrix.is_none() {
        return Err(Error::Usage("model file has no VAR baseline matrix; retrain with var_baseline enabled".into()));
    }
    ensure_dir(&a.out)?;
    let (scores_path, steps_path, manifest_path) = score_paths(&a.out, a.method);

    let scores = if a.stream {
        stream_scores(&a.data, a.method, &model_file, &model)?
    } else {
        let raw = read_raw(&a.data)?;
        let flights = build_scoring(&raw, &model_file.dictionary, &model_file.standardizer)?;
        if a.method == Method::Mkad {
            let (kernel, kernel_written) = mkad_kernel_cached(&flights, &cfg.mkad, a.kernel.as_deref())?;
            if let (Some(p), true) = (&a.kernel, kernel_written) {
                manifest.outputs.push(p.clone());
            }
            mkad_score_kernel(&flights, kernel, cfg.mkad.nu)?.scores
        } else {
            score_dataset(&flights, a.method, &model, &cfg.mkad)?
        }
    };

    write_atomic(&scores_path, |w| write_scores_csv(&scores, w))?;
    manifest.outputs.push(scores_path);
    if a.per_step {
        write_atomic(&steps_path, |w| write_steps_csv(&scores, w))?;
        manifest.outputs.push(steps_path);
    }
    manifest.finish(&manifest_path)?;
    if !a.stream {
        println!("scored {} flights with {}", scores.len(), a.method);
    }
    Ok(())
}

/// Loads a kernel dump whose config hash and size match, or computes and
/// (if a path was given) writes one. The flag tells whether a file was written.
fn mkad_kernel_cached(flights: &[FlightRecord], cfg: &MkadConfig, path: Option<&Path>) -> Result<(KernelMatrix, bool)> {
    let hash = cfg.hash();
    if let Some(p) = path.filter(|p| p.exists()) {
        let (kernel, stored) = KernelMatrix::read_from(BufReader::new(File::open(p)?))?;
        if stored == hash && kernel.len() == flights.len() {
            return Ok((kernel, false));
        }
        log::warn!("kernel cache {} does not match this config or dataset; recomputing", p.display());
    }
    let kernel = mkad_kernel(flights, cfg)?;
    if let Some(p) = path {
        write_atomic(p, |w| kernel.write_to(&hash, w))?;
    }
    Ok((kernel, path.is_some()))
}

/// Encodes one raw row with the frozen dictionary and standardizer.
fn encode_row(
    id: &str,
    k: usize,
    switches: &crate::flight::SwitchFrame,
    y: &nalgebra::DVector<f64>,
    dict: &ModeDictionary,
    std: &Standardizer,
) -> Result<(usize, nalgebra::DVector<f64>)> {
    if y.len() != std.dim() {
        return Err(Error::Dimension(format!(
            "flight `{id}` row {k} has {} sensor values, model expects {}",
            y.len(),
            std.dim()
        )));
    }
    let mode = dict.encode(switches).map_err(|e| Error::ingestion(id, k, e.to_string()))?;
    Ok((mode, std.apply(y)))
}

struct StreamState<'m> {
    scorer: StreamingScorer<'m>,
    last_t: i64,
}

/// Row-by-row scoring. Values go to stdout as `flight_id,method,t,value` as
/// soon as the scorer releases them.
fn stream_scores(data: &Path, method: Method, file: &ModelFile, model: &ScoringModel) -> Result<Vec<ScoreSeries>> {
    let stdout = std::io::stdout();
    let mut out = csv::Writer::from_writer(stdout.lock());
    out.write_record(["flight_id", "method", "t", "value"])?;
    let mut emit = |id: &str, released: Vec<(usize, f64)>| -> Result<()> {
        for (t, v) in released {
            out.write_record([id, method.as_str(), &t.to_string(), &v.to_string()])?;
        }
        out.flush()?;
        Ok(())
    };

    let mut finished = Vec::new();
    let files = data_files(data)?;
    for path in files {
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if ext.as_deref() == Some("csv") {
            let rows = CsvRows::new(File::open(&path)?)?;
            if !rows.sensor_names().is_empty() && rows.sensor_names().len() != file.standardizer.dim() {
                return Err(Error::Dimension(format!(
                    "data has {} sensor channels, model expects {}",
                    rows.sensor_names().len(),
                    file.standardizer.dim()
                )));
            }
            let mut order: Vec<String> = Vec::new();
            let mut live: HashMap<String, StreamState> = HashMap::new();
            for row in rows {
                let row = row?;
                if !live.contains_key(&row.flight_id) {
                    if finished.iter().any(|s: &ScoreSeries| s.flight_id == row.flight_id) {
                        return Err(Error::ingestion(&row.flight_id, 0, "flight id repeated"));
                    }
                    order.push(row.flight_id.clone());
                    let scorer = StreamingScorer::new(row.flight_id.clone(), method, model)?;
                    live.insert(row.flight_id.clone(), StreamState { scorer, last_t: i64::MIN });
                }
                let state = live.get_mut(&row.flight_id).expect("inserted above");
                let k = state.scorer.rows();
                if row.t <= state.last_t {
                    return Err(Error::ingestion(&row.flight_id, k, "rows must arrive in time order when streaming"));
                }
                state.last_t = row.t;
                let (mode, y) = encode_row(&row.flight_id, k, &row.switches, &row.sensors, &file.dictionary, &file.standardizer)?;
                let released = state.scorer.push(mode, y)?;
                emit(&row.flight_id, released)?;
            }
            for id in order {
                let state = live.remove(&id).expect("every ordered id is live");
                let (released, series) = state.scorer.finish()?;
                emit(&id, released)?;
                finished.push(series);
            }
        } else {
            for (lineno, line) in BufReader::new(File::open(&path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let flight: RawFlight = parse_jsonl_flight(&line, lineno + 1)?;
                if finished.iter().any(|s: &ScoreSeries| s.flight_id == flight.id) {
                    return Err(Error::ingestion(&flight.id, 0, "flight id repeated"));
                }
                let mut scorer = StreamingScorer::new(flight.id.clone(), method, model)?;
                for (k, (sw, y)) in flight.switches.iter().zip(&flight.sensors).enumerate() {
                    let (mode, y) = encode_row(&flight.id, k, sw, y, &file.dictionary, &file.standardizer)?;
                    let released = scorer.push(mode, y)?;
                    emit(&flight.id, released)?;
                }
                let (released, series) = scorer.finish()?;
                emit(&flight.id, released)?;
                finished.push(series);
            }
        }
    }
    Ok(finished)
}

fn cmd_simulate(mut a: SimulateArgs, snapshot: Option<serde_json::Value>) -> Result<()> {
    a.out = absolute(&a.out)?;
    let mut cfg: SimulateConfig = load_config(a.config.as_deref(), snapshot)?;
    if let Some(seed) = a.seed {
        cfg.scenario.seed = seed;
    }
    cfg.scenario.validate()?;
    let mut manifest = ManifestBuilder::new(Command::Simulate(a.clone()), &cfg)?;
    manifest.seeds.insert("scenario".into(), cfg.scenario.seed);

    let ds = generate_scenario(&cfg.scenario)?;
    let dict = ModeDictionary::full(cfg.scenario.n_switches);
    let raw = RawDataset {
        sensor_names: (0..cfg.scenario.n_sensors).map(|j| format!("y{j}")).collect(),
        flights: ds
            .flights
            .iter()
            .map(|f| RawFlight::from_record(f, &dict, None))
            .collect::<Result<_>>()?,
    };
    ensure_dir(&a.out)?;
    let flights_path = match a.format {
        DataFormat::Csv => a.out.join("flights.csv"),
        DataFormat::Jsonl => a.out.join("flights.jsonl"),
    };
    match a.format {
        DataFormat::Csv => write_atomic(&flights_path, |w| write_csv(&raw, w))?,
        DataFormat::Jsonl => write_atomic(&flights_path, |w| write_jsonl(&raw, w))?,
    }
    let labels_path = a.out.join("labels.csv");
    write_atomic(&labels_path, |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["flight_id", "anomalous", "events"])?;
        for ((f, &label), events) in ds.flights.iter().zip(&ds.labels).zip(&ds.events) {
            let ev: Vec<String> = events
                .iter()
                .map(|e| format!("{}:{}-{}:{}", e.kind.as_str(), e.start, e.end, e.detail))
                .collect();
            c.write_record([f.id.as_str(), if label { "1" } else { "0" }, &ev.join(";")])?;
        }
        c.flush()?;
        Ok(())
    })?;
    let truth_path = a.out.join("ground_truth.json");
    write_atomic(&truth_path, |w| Ok(serde_json::to_writer_pretty(w, &ds.ground_truth)?))?;
    manifest.outputs = vec![flights_path, labels_path, truth_path];
    manifest.finish(&a.out.join("manifest_simulate.json"))?;
    println!(
        "wrote {} flights ({} anomalous) to {}",
        ds.flights.len(),
        ds.labels.iter().filter(|&&l| l).count(),
        a.out.display()
    );
    Ok(())
}

fn cmd_experiment(mut a: ExperimentArgs, snapshot: Option<serde_json::Value>) -> Result<()> {
    a.out = absolute(&a.out)?;
    let mut cfg: ExperimentConfig = load_config(a.config.as_deref(), snapshot)?;
    if let Some(seed) = a.seed {
        cfg.benchmark.base_seed = seed;
    }
    cfg.benchmark.validate()?;
    let mut manifest = ManifestBuilder::new(Command::Experiment(a.clone()), &cfg)?;
    manifest.seeds.insert("base_seed".into(), cfg.benchmark.base_seed);

    let result = run_benchmark(&cfg.benchmark)?;
    ensure_dir(&a.out)?;
    let runs_path = a.out.join("runs.csv");
    let summary_path = a.out.join("summary.json");
    write_atomic(&runs_path, |w| write_runs_csv(&result, w))?;
    write_atomic(&summary_path, |w| write_summary_json(&result, w))?;
    manifest.outputs = vec![runs_path, summary_path];
    manifest.finish(&a.out.join("manifest_experiment.json"))?;
    println!("{:<16} {:<8} {:>6} {:>9} {:>9}", "scenario", "detector", "runs", "auc_mean", "auc_std");
    for row in &result.summary {
        println!(
            "{:<16} {:<8} {:>6} {:>9.4} {:>9.4}",
            row.scenario,
            row.detector.as_str(),
            row.n_runs,
            row.auc_mean,
            row.auc_std
        );
    }
    Ok(())
}

fn redirect(path: &Path, out: &Path) -> PathBuf {
    out.join(path.file_name().unwrap_or_default())
}

fn cmd_replay(a: ReplayArgs) -> Result<()> {
    require_exists(&a.manifest, "manifest")?;
    let text = std::fs::read_to_string(&a.manifest)?;
    let manifest: RunManifest =
        serde_json::from_str(&text).map_err(|e| Error::Usage(format!("{}: not a run manifest: {e}", a.manifest.display())))?;
    for input in &manifest.inputs {
        match sha256_file(&input.path) {
            Ok(h) if h == input.sha256 => {}
            Ok(_) => log::warn!("input {} changed since the recorded run", input.path.display()),
            Err(_) => log::warn!("input {} is no longer readable", input.path.display()),
        }
    }
    let mut command = manifest.invocation;
    if let Some(out) = &a.out {
        let out = absolute(out)?;
        match &mut command {
            Command::Train(t) => {
                t.model = redirect(&t.model, &out);
                t.out = Some(out);
            }
            Command::Score(s) => s.out = out,
            Command::Simulate(s) => s.out = out,
            Command::Experiment(e) => e.out = out,
            Command::Replay(_) => return Err(Error::Usage("a manifest cannot record a replay".into())),
        }
    }
    if matches!(command, Command::Replay(_)) {
        return Err(Error::Usage("a manifest cannot record a replay".into()));
    }
    execute(command, Some(manifest.config))
}
