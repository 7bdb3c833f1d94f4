//! Batch pipeline driver. Stages hand off through files: `synth` and
//! `segment` produce corpora, `cluster`/`train`/`mine`/`rules` produce model
//! artifacts, and `recognize`/`predict`/`eval`/`sweep` consume them.
//!
//! Exit codes: 0 success, 1 usage or parameter error, 2 data error.
//! Every file artifact gets a sibling `<name>.manifest.json` recording the
//! resolved parameters; rerunning a stage with identical inputs produces
//! byte-identical data artifacts (timing fields excluded).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use actlearn::bundle::{
    parse_model_bundle, parse_pattern_list, parse_rule_list, render_model_bundle,
    render_pattern_list, render_rule_list,
};
use actlearn::clustering::{agglomerate, Cluster};
use actlearn::evaluation::{sweep_report, LabeledAssignment, SweepParam};
use actlearn::hmm::{build_hmm, recognize};
use actlearn::ingest::{
    generate_synthetic, parse_event_log, parse_occurrences, render_event_log,
    render_occurrences, segment, SyntheticSpec,
};
use actlearn::prediction::predict_next;
use actlearn::tpminer::{daily_database, mine_detailed, rules_from_mined, to_endpoint_sequence};
use actlearn::types::{ActivityOccurrence, MiningConfig, SupportThreshold};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "actlearn", version, about = "Activity learning over smart-home event logs")]
struct Cli {
    /// JSON file of pipeline parameters; explicit flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic corpus from an activity-template spec.
    Synth(SynthArgs),
    /// Split an event stream into segments at large time gaps.
    Segment(SegmentArgs),
    /// Group labeled occurrences into activity clusters.
    Cluster(ClusterArgs),
    /// Build per-cluster HMMs and write the model bundle.
    Train(TrainArgs),
    /// Mine frequent temporal patterns from labeled occurrences.
    Mine(MineArgs),
    /// Turn mined patterns into next-activity prediction rules.
    Rules(RulesArgs),
    /// Rank the bundle's activity models by likelihood on a segment.
    Recognize(RecognizeArgs),
    /// Predict upcoming activities from recent labeled history.
    Predict(PredictArgs),
    /// Score a clustering against ground-truth labels (BCubed).
    Eval(EvalArgs),
    /// Report a quality or cost metric across a parameter grid.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Synthetic corpus spec (JSON).
    #[arg(long, value_name = "FILE")]
    spec: PathBuf,
    /// Overrides the seed embedded in the spec.
    #[arg(long)]
    seed: Option<u64>,
    /// Labeled occurrence output (JSON lines).
    #[arg(long, value_name = "FILE")]
    occurrences: PathBuf,
    /// Merged event stream output (CSV).
    #[arg(long, value_name = "FILE")]
    stream: Option<PathBuf>,
}

#[derive(Args)]
struct SegmentArgs {
    /// Event stream (CSV).
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Directory receiving one CSV per segment.
    #[arg(long, value_name = "DIR")]
    output_dir: PathBuf,
    /// Split when adjacent events are more than this many seconds apart.
    #[arg(long)]
    gap: Option<i64>,
}

#[derive(Args)]
struct ClusterArgs {
    /// Occurrence corpus (JSON lines).
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Cluster list output (JSON).
    #[arg(long, value_name = "FILE")]
    output: PathBuf,
    /// Merge-stopping distance threshold in [0,1].
    #[arg(long)]
    rho: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Cluster list (JSON), as written by `cluster`.
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Occurrence corpus the clusters refer to (JSON lines).
    #[arg(long, value_name = "FILE")]
    corpus: PathBuf,
    /// Model bundle output (JSON).
    #[arg(long, value_name = "FILE")]
    output: PathBuf,
    /// Laplace constant for initial/transition counts.
    #[arg(long)]
    smoothing: Option<f64>,
    /// Off-diagonal emission probability.
    #[arg(long)]
    emission_floor: Option<f64>,
    /// Rule list (JSON) to embed in the bundle.
    #[arg(long, value_name = "FILE")]
    rules: Option<PathBuf>,
}

#[derive(Args)]
struct MineArgs {
    /// Occurrence corpus (JSON lines).
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Pattern list output (JSON).
    #[arg(long, value_name = "FILE")]
    output: PathBuf,
    /// Absolute day count (e.g. 3) or fraction of days (e.g. 0.03).
    #[arg(long)]
    minsup: Option<String>,
}

#[derive(Args)]
struct RulesArgs {
    /// Pattern list (JSON), as written by `mine`.
    #[arg(long, value_name = "FILE")]
    patterns: PathBuf,
    /// Rule list output (JSON).
    #[arg(long, value_name = "FILE")]
    output: PathBuf,
    /// Minimum predictability a rule must reach.
    #[arg(long)]
    min_pre: Option<f64>,
}

#[derive(Args)]
struct RecognizeArgs {
    /// Model bundle (JSON).
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// Event segment (CSV).
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Ranked table output (CSV); stdout when omitted.
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    /// Model bundle (JSON).
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// Recent labeled occurrences (JSON lines).
    #[arg(long, value_name = "FILE")]
    history: PathBuf,
    /// How many trailing history slots rules may match.
    #[arg(long, default_value_t = 12)]
    window: usize,
    /// Prediction table output (CSV); stdout when omitted.
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Cluster list (JSON), as written by `cluster`.
    #[arg(long, value_name = "FILE")]
    clusters: PathBuf,
    /// Labeled occurrence corpus (JSON lines).
    #[arg(long, value_name = "FILE")]
    truth: PathBuf,
    /// Score row output (CSV); stdout when omitted.
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Which parameter to sweep: rho, minsup, or min_pre.
    #[arg(long)]
    param: String,
    /// Grid as start:stop:step, e.g. 0.5:0.95:0.05.
    #[arg(long)]
    grid: String,
    /// Occurrence corpus (JSON lines).
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Report output (CSV); stdout when omitted.
    #[arg(long, value_name = "FILE")]
    output: Option<PathBuf>,
}

enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) => m,
        }
    }
}

fn usage(message: impl Into<String>) -> CliError {
    CliError::Usage(message.into())
}

fn data(error: impl std::fmt::Display) -> CliError {
    CliError::Data(error.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.code())
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let config = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Synth(args) => run_synth(args, config),
        Command::Segment(args) => run_segment(args, config),
        Command::Cluster(args) => run_cluster(args, config),
        Command::Train(args) => run_train(args, config),
        Command::Mine(args) => run_mine(args, config),
        Command::Rules(args) => run_rules(args, config),
        Command::Recognize(args) => run_recognize(args, config),
        Command::Predict(args) => run_predict(args, config),
        Command::Eval(args) => run_eval(args, config),
        Command::Sweep(args) => run_sweep(args, config),
    }
}

fn load_config(path: Option<&Path>) -> Result<MiningConfig, CliError> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| usage(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| usage(format!("config {}: {e}", p.display())))
        }
        None => Ok(MiningConfig::default()),
    }
}

/// Apply flag overrides on top of the loaded config, then range-check it.
fn validated(
    mut config: MiningConfig,
    apply: impl FnOnce(&mut MiningConfig),
) -> Result<MiningConfig, CliError> {
    apply(&mut config);
    config.validate().map_err(|e| usage(e.to_string()))?;
    Ok(config)
}

#[derive(Serialize)]
struct RunManifest {
    subcommand: String,
    config: MiningConfig,
    inputs: Vec<String>,
    outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    tool_version: String,
    duration_ms: u128,
}

/// Provenance of one subcommand invocation, written next to its artifacts.
struct Run {
    subcommand: &'static str,
    config: MiningConfig,
    inputs: Vec<String>,
    seed: Option<u64>,
    started: Instant,
}

impl Run {
    fn new(subcommand: &'static str, config: MiningConfig) -> Run {
        Run {
            subcommand,
            config,
            inputs: Vec::new(),
            seed: None,
            started: Instant::now(),
        }
    }

    fn with_input(mut self, path: &Path) -> Run {
        self.inputs.push(path.display().to_string());
        self
    }

    fn manifest(&self, outputs: Vec<String>) -> String {
        let manifest = RunManifest {
            subcommand: self.subcommand.to_string(),
            config: self.config,
            inputs: self.inputs.clone(),
            outputs,
            seed: self.seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            duration_ms: self.started.elapsed().as_millis(),
        };
        let mut text =
            serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        text
    }

    /// Write `content` to `path` plus a `<path>.manifest.json` sibling.
    fn write_artifact(&self, path: &Path, content: &str) -> Result<(), CliError> {
        write_file(path, content)?;
        let manifest = self.manifest(vec![path.display().to_string()]);
        write_file(&manifest_path(path), &manifest)
    }

    /// Print to stdout, or write an artifact when a path was given.
    fn emit(&self, path: Option<&Path>, content: &str) -> Result<(), CliError> {
        match path {
            Some(p) => self.write_artifact(p, content),
            None => {
                print!("{content}");
                Ok(())
            }
        }
    }
}

fn manifest_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.as_os_str().to_os_string();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    fs::write(path, content)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))
}

fn read_corpus(path: &Path) -> Result<Vec<ActivityOccurrence>, CliError> {
    parse_occurrences(&read_text(path)?).map_err(data)
}

fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
    text.push('\n');
    text
}

/// In-memory CSV assembly; quoting is handled by the csv writer.
fn csv_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(header).expect("csv header");
    for row in rows {
        writer.write_record(row).expect("csv row");
    }
    String::from_utf8(writer.into_inner().expect("csv buffer")).expect("csv is utf-8")
}

/// The `clusters.json` entry: a cluster plus its label purity when the
/// corpus carries ground-truth labels.
#[derive(Serialize, Deserialize)]
struct ClusterRecord {
    cluster_id: u64,
    members: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label_hint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    purity: Option<f64>,
}

fn cluster_records(clusters: &[Cluster], corpus: &[ActivityOccurrence]) -> Vec<ClusterRecord> {
    let label_of: BTreeMap<u64, &str> = corpus
        .iter()
        .filter_map(|o| o.label.as_deref().map(|l| (o.sid, l)))
        .collect();
    clusters
        .iter()
        .map(|c| {
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for sid in &c.members {
                if let Some(label) = label_of.get(sid) {
                    *counts.entry(label).or_insert(0) += 1;
                }
            }
            let labeled: usize = counts.values().sum();
            let purity = (labeled > 0)
                .then(|| counts.values().copied().max().unwrap_or(0) as f64 / labeled as f64);
            ClusterRecord {
                cluster_id: c.cluster_id,
                members: c.members.clone(),
                label_hint: c.label_hint.clone(),
                purity,
            }
        })
        .collect()
}

fn read_clusters(path: &Path) -> Result<Vec<Cluster>, CliError> {
    let records: Vec<ClusterRecord> = serde_json::from_str(&read_text(path)?)
        .map_err(|e| CliError::Data(format!("clusters {}: {e}", path.display())))?;
    Ok(records
        .into_iter()
        .map(|r| Cluster {
            cluster_id: r.cluster_id,
            members: r.members,
            label_hint: r.label_hint,
        })
        .collect())
}

fn run_synth(args: SynthArgs, config: MiningConfig) -> Result<(), CliError> {
    let config = validated(config, |_| {})?;
    let text = read_text(&args.spec)?;
    let mut spec: SyntheticSpec = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("spec {}: {e}", args.spec.display())))?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let (occurrences, stream) = generate_synthetic(&spec).map_err(data)?;
    let mut run = Run::new("synth", config).with_input(&args.spec);
    run.seed = Some(spec.seed);
    run.write_artifact(&args.occurrences, &render_occurrences(&occurrences))?;
    if let Some(stream_path) = &args.stream {
        run.write_artifact(stream_path, &render_event_log(&stream))?;
    }
    Ok(())
}

fn run_segment(args: SegmentArgs, config: MiningConfig) -> Result<(), CliError> {
    let config = validated(config, |c| {
        if let Some(gap) = args.gap {
            c.segment_gap_secs = gap;
        }
    })?;
    let run = Run::new("segment", config).with_input(&args.input);
    let stream = parse_event_log(&read_text(&args.input)?).map_err(data)?;
    let parts = segment(&stream, config.segment_gap_secs);
    fs::create_dir_all(&args.output_dir).map_err(|e| {
        CliError::Data(format!("cannot create {}: {e}", args.output_dir.display()))
    })?;
    let mut outputs = Vec::new();
    for (i, part) in parts.iter().enumerate() {
        let path = args.output_dir.join(format!("segment_{i:04}.csv"));
        write_file(&path, &render_event_log(part))?;
        outputs.push(path.display().to_string());
    }
    let manifest = run.manifest(outputs);
    write_file(&args.output_dir.join("run_manifest.json"), &manifest)
}

fn run_cluster(args: ClusterArgs, config: MiningConfig) -> Result<(), CliError> {
    let config = validated(config, |c| {
        if let Some(rho) = args.rho {
            c.rho = rho;
        }
    })?;
    let run = Run::new("cluster", config).with_input(&args.input);
    let corpus = read_corpus(&args.input)?;
    let clusters = agglomerate(&corpus, config.rho);
    let records = cluster_records(&clusters, &corpus);
    run.write_artifact(&args.output, &to_pretty_json(&records))
}

fn run_train(args: TrainArgs, config: MiningConfig) -> Result<(), CliError> {
    let config = validated(config, |c| {
        if let Some(smoothing) = args.smoothing {
            c.smoothing = smoothing;
        }
        if let Some(floor) = args.emission_floor {
            c.emission_floor = floor;
        }
    })?;
    let mut run = Run::new("train", config)
        .with_input(&args.input)
        .with_input(&args.corpus);
    let clusters = read_clusters(&args.input)?;
    let corpus = read_corpus(&args.corpus)?;
    let hmms = clusters
        .iter()
        .map(|c| build_hmm(c, &corpus, config.smoothing, config.emission_floor))
        .collect::<Result<Vec<_>, _>>()
        .map_err(data)?;
    let rules = match &args.rules {
        Some(path) => {
            run = run.with_input(path);
            parse_rule_list(&read_text(path)?).map_err(data)?
        }
        None => Vec::new(),
    };
    let bundle = render_model_bundle(&clusters, &hmms, &rules).map_err(data)?;
    run.write_artifact(&args.output, &bundle)
}

fn run_mine(args: MineArgs, config: MiningConfig) -> Result<(), CliError> {
    let minsup = args
        .minsup
        .as_deref()
        .map(str::parse::<SupportThreshold>)
        .transpose()
        .map_err(usage)?;
    let config = validated(config, |c| {
        if let Some(m) = minsup {
            c.minsup = m;
        }
    })?;
    let run = Run::new("mine", config).with_input(&args.input);
    let corpus = read_corpus(&args.input)?;
    let db = daily_database(&corpus).map_err(data)?;
    let mined = mine_detailed(&db, config.minsup.resolve(db.len()));
    run.write_artifact(&args.output, &render_pattern_list(&mined))
}

fn run_rules(args: RulesArgs, config: MiningConfig) -> Result<(), CliError> {
    let config = validated(config, |c| {
        if let Some(min_pre) = args.min_pre {
            c.min_pre = min_pre;
        }
    })?;
    let run = Run::new("rules", config).with_input(&args.patterns);
    let mined = parse_pattern_list(&read_text(&args.patterns)?).map_err(data)?;
    let rules = rules_from_mined(&mined, config.min_pre);
    let text = render_rule_list(&rules).map_err(data)?;
    run.write_artifact(&args.output, &text)
}

fn run_recognize(args: RecognizeArgs, config: MiningConfig) -> Result<(), CliError> {
    let config = validated(config, |_| {})?;
    let run = Run::new("recognize", config)
        .with_input(&args.model)
        .with_input(&args.input);
    let (_, hmms, _) = parse_model_bundle(&read_text(&args.model)?).map_err(data)?;
    let stream = parse_event_log(&read_text(&args.input)?).map_err(data)?;
    let (_, table) = recognize(&stream.type_keys(), &hmms).map_err(data)?;
    let rows: Vec<Vec<String>> = table
        .iter()
        .map(|(id, log_prob)| vec![id.to_string(), log_prob.to_string()])
        .collect();
    run.emit(args.output.as_deref(), &csv_table(&["cluster_id", "log_prob"], &rows))
}

fn run_predict(args: PredictArgs, config: MiningConfig) -> Result<(), CliError> {
    if args.window == 0 {
        return Err(usage("--window must be at least 1"));
    }
    let config = validated(config, |_| {})?;
    let run = Run::new("predict", config)
        .with_input(&args.model)
        .with_input(&args.history);
    let (_, _, rules) = parse_model_bundle(&read_text(&args.model)?).map_err(data)?;
    let history = read_corpus(&args.history)?;
    let intervals = history
        .iter()
        .map(|occ| match &occ.label {
            Some(label) => Ok((label.clone(), occ.start, occ.end)),
            None => Err(CliError::Data(format!(
                "history record sid {} has no label",
                occ.sid
            ))),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let predictions = if intervals.is_empty() {
        Vec::new()
    } else {
        let sequence = to_endpoint_sequence(&intervals, 0).map_err(data)?;
        predict_next(&sequence, &rules, args.window)
    };
    let rows: Vec<Vec<String>> = predictions
        .iter()
        .enumerate()
        .map(|(i, p)| {
            vec![
                (i + 1).to_string(),
                p.activity_label.clone(),
                p.score.to_string(),
                p.rule.support.to_string(),
            ]
        })
        .collect();
    run.emit(
        args.output.as_deref(),
        &csv_table(&["rank", "label", "score", "support"], &rows),
    )
}

fn run_eval(args: EvalArgs, config: MiningConfig) -> Result<(), CliError> {
    let config = validated(config, |_| {})?;
    let run = Run::new("eval", config)
        .with_input(&args.clusters)
        .with_input(&args.truth);
    let clusters = read_clusters(&args.clusters)?;
    let truth = read_corpus(&args.truth)?;
    let assignment = LabeledAssignment::from_clustering(&clusters, &truth).map_err(data)?;
    let (precision, recall, f1) = assignment.bcubed();
    let rows = vec![vec![
        precision.to_string(),
        recall.to_string(),
        f1.to_string(),
    ]];
    run.emit(
        args.output.as_deref(),
        &csv_table(&["precision", "recall", "f1"], &rows),
    )
}

fn run_sweep(args: SweepArgs, config: MiningConfig) -> Result<(), CliError> {
    let param: SweepParam = args.param.parse().map_err(usage)?;
    let grid = parse_grid(&args.grid)?;
    check_grid_range(param, &grid)?;
    let config = validated(config, |_| {})?;
    let run = Run::new("sweep", config).with_input(&args.input);
    let corpus = read_corpus(&args.input)?;
    let report = sweep_report(&corpus, param, &grid, &config).map_err(data)?;
    run.emit(args.output.as_deref(), &report)
}

/// Expand `start:stop:step` inclusively. The walk uses integer micro-units
/// so grid points print as the decimals the user wrote.
fn parse_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = text.split(':').collect();
    let (start, stop, step) = match parts[..] {
        [a, b, c] => (a, b, c),
        _ => return Err(usage(format!("grid `{text}` must be start:stop:step"))),
    };
    let number = |s: &str| {
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| usage(format!("grid value `{s}` is not a number")))
    };
    let (start, stop, step) = (number(start)?, number(stop)?, number(step)?);
    if step <= 0.0 {
        return Err(usage(format!("grid `{text}` needs a positive step")));
    }
    let micro = |v: f64| (v * 1e6).round() as i64;
    let (mut at, stop, step) = (micro(start), micro(stop), micro(step));
    let mut grid = Vec::new();
    while at <= stop {
        grid.push(at as f64 / 1e6);
        at += step;
    }
    if grid.is_empty() {
        return Err(usage(format!("grid `{text}` is empty")));
    }
    Ok(grid)
}

fn check_grid_range(param: SweepParam, grid: &[f64]) -> Result<(), CliError> {
    let ok = match param {
        SweepParam::Rho | SweepParam::MinPre => {
            grid.iter().all(|v| (0.0..=1.0).contains(v))
        }
        SweepParam::MinSup => grid.iter().all(|v| *v > 0.0),
    };
    if ok {
        Ok(())
    } else {
        Err(usage(format!("grid values out of range for {param:?}")))
    }
}
