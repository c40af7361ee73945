//! Batch command-line front end.
//!
//! Exit codes: 0 success, 1 empty result or failed work, 2 usage or input
//! error, 3 output collision.

pub mod pipeline;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::assembly::{BumperConfig, DesignSpace};
use crate::datastore::{
    collisions, read_master_csv, run_campaign, BumperFactory, CampaignOptions, DatastoreError, SplitSet, MASTER_FILE,
    SPLITS_FILE,
};
use crate::doe::{plan_campaign_with, CampaignKind, CampaignPlan, DoeError, Origin, PlanSizes};
use crate::evalstats::{
    leaderboard, read_metrics_csv, render_pairs, significance_report, write_leaderboard_csv, write_metrics_csv, EvalError,
    DEFAULT_PERMUTATIONS, DEFAULT_REPLICATES,
};
use crate::signals::cfc_filter;
use crate::solver::SolverConfig;
use crate::surrogate::{load_checkpoint, save_checkpoint, SurrogateError};

use pipeline::{evaluate, load_bundles, train_surrogate, CheckpointMeta, ModelSpec, Predictor};

pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";
pub const SEED_ENV: &str = "CRASHBENCH_SEED";
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Empty(String),
    #[error("output exists: {0}")]
    Collision(PathBuf),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Empty(_) | CliError::Failed(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Collision(_) => 3,
        }
    }
}

impl From<DatastoreError> for CliError {
    fn from(e: DatastoreError) -> Self {
        match e {
            DatastoreError::Exists(p) => CliError::Collision(p),
            other => CliError::Failed(other.to_string()),
        }
    }
}

impl From<SurrogateError> for CliError {
    fn from(e: SurrogateError) -> Self {
        match e {
            SurrogateError::Config(m) => CliError::Usage(m),
            other => CliError::Failed(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Probe { .. } | EvalError::Pairing(_) | EvalError::Config(_) | EvalError::Format(_) => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Failed(other.to_string()),
        }
    }
}

impl From<DoeError> for CliError {
    fn from(e: DoeError) -> Self {
        CliError::Failed(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failed(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "crashbench", version, about = "Desk-scale crash simulation benchmark")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Plan a campaign (anchors, space filling, continuation) as JSON.
    Plan(PlanArgs),
    /// Simulate a planned campaign into a case store.
    Run(RunArgs),
    /// Split the passing cases into train/validation/test sets.
    Split(SplitArgs),
    /// Train the field surrogate on the training split.
    Train(TrainArgs),
    /// Score checkpoints on a split and rank them.
    Eval(EvalArgs),
    /// Bootstrap intervals and paired tests between metric files.
    Stats(StatsArgs),
    /// Apply a CFC filter to one channel of a history CSV.
    Filter(FilterArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum KindArg {
    Bumper,
    Vehicle,
}

#[derive(Args, Debug)]
pub struct PlanArgs {
    /// Design space JSON; defaults to the built-in space of the kind.
    #[arg(long)]
    pub space: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "bumper")]
    pub kind: KindArg,
    #[arg(long)]
    pub count: usize,
    /// Comma-separated sizes of maximin continuation batches, taken out of
    /// `--count`.
    #[arg(long, value_delimiter = ',')]
    pub continuation: Vec<usize>,
    /// Bumper geometry JSON used for the pole pre-screen.
    #[arg(long)]
    pub geometry: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Solver settings JSON.
    #[arg(long)]
    pub solver: Option<PathBuf>,
    #[arg(long)]
    pub overwrite: bool,
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    #[arg(long)]
    pub root: PathBuf,
    #[arg(long, default_value = "0.7,0.15,0.15")]
    pub fractions: String,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Defaults to `<root>/splits.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub root: PathBuf,
    /// Defaults to `<root>/splits.json`.
    #[arg(long)]
    pub splits: Option<PathBuf>,
    /// Model and schedule JSON.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Cap on optimizer steps.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub root: PathBuf,
    #[arg(long)]
    pub splits: Option<PathBuf>,
    /// Comma-separated checkpoints; `zero` is the no-displacement baseline.
    #[arg(long, value_delimiter = ',', required = true)]
    pub ckpt: Vec<String>,
    /// Probe time for the RMSE@t column; defaults to mid-sequence.
    #[arg(long)]
    pub probe_ms: Option<f64>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitName,
    /// Defaults to `<root>/eval`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[arg(long)]
    pub metrics: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    pub against: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_REPLICATES)]
    pub replicates: usize,
    #[arg(long, default_value_t = DEFAULT_PERMUTATIONS)]
    pub permutations: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Defaults to the directory of `--metrics`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FilterArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub channel: String,
    #[arg(long, default_value_t = 60.0)]
    pub cfc: f64,
    /// Defaults to rewriting the input file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Provenance record written into every output directory before work starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub output_root: PathBuf,
    pub tool_version: String,
    pub timestamp_unix_s: u64,
    pub args: Vec<String>,
}

fn write_run_manifest(
    dir: &Path,
    command: &str,
    config: Option<&Path>,
    seed: Option<u64>,
    args: &[String],
) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    let m = RunManifest {
        command: command.to_string(),
        config: config.map(Path::to_path_buf),
        seed,
        output_root: dir.to_path_buf(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp_unix_s: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        args: args.to_vec(),
    };
    fs::write(dir.join(RUN_MANIFEST_FILE), serde_json::to_string_pretty(&m).expect("manifest serializes"))?;
    Ok(())
}

/// Flag, then `CRASHBENCH_SEED`, then the default.
pub fn resolve_seed(flag: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| CliError::Usage(format!("{SEED_ENV}={v:?} is not an integer"))),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {what} {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid {what} {}: {e}", path.display())))
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let text: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(cli.command, &text) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command, args: &[String]) -> Result<(), CliError> {
    match command {
        Command::Plan(a) => cmd_plan(a, args),
        Command::Run(a) => cmd_run(a, args),
        Command::Split(a) => cmd_split(a, args),
        Command::Train(a) => cmd_train(a, args),
        Command::Eval(a) => cmd_eval(a, args),
        Command::Stats(a) => cmd_stats(a, args),
        Command::Filter(a) => cmd_filter(a, args),
    }
}

fn cmd_plan(a: PlanArgs, args: &[String]) -> Result<(), CliError> {
    if a.count == 0 {
        return Err(CliError::Usage("--count must be positive".into()));
    }
    let seed = resolve_seed(a.seed)?;
    let kind = match a.kind {
        KindArg::Bumper => CampaignKind::Bumper,
        KindArg::Vehicle => CampaignKind::Vehicle,
    };
    let space = match &a.space {
        Some(p) => read_json(p, "design space")?,
        None => match kind {
            CampaignKind::Bumper => DesignSpace::bumper(),
            CampaignKind::Vehicle => DesignSpace::vehicle(),
        },
    };
    let geometry: BumperConfig = match &a.geometry {
        Some(p) => read_json(p, "geometry")?,
        None => BumperConfig::default(),
    };
    if a.continuation.iter().sum::<usize>() >= a.count {
        return Err(CliError::Usage("--continuation must be smaller than --count".into()));
    }
    write_run_manifest(&parent_dir(&a.out), "plan", a.space.as_deref(), Some(seed), args)?;
    let sizes = PlanSizes { continuation: a.continuation.clone(), ..PlanSizes::new(a.count) };
    let plan = plan_campaign_with(&space, kind, &sizes, seed, &geometry)?;
    fs::write(&a.out, plan.to_json())?;
    let anchors = plan.cases.iter().filter(|c| c.origin == Origin::Anchor).count();
    println!("{} anchors + {} samples", anchors, plan.cases.len() - anchors);
    Ok(())
}

fn cmd_run(a: RunArgs, args: &[String]) -> Result<(), CliError> {
    let text = fs::read_to_string(&a.plan).map_err(|e| CliError::Usage(format!("cannot read plan {}: {e}", a.plan.display())))?;
    let plan = CampaignPlan::from_json(&text).map_err(|e| CliError::Usage(format!("invalid plan {}: {e}", a.plan.display())))?;
    if plan.kind != CampaignKind::Bumper {
        return Err(CliError::Usage("only bumper plans can be simulated".into()));
    }
    let solver: SolverConfig = match &a.solver {
        Some(p) => read_json(p, "solver config")?,
        None => SolverConfig::default(),
    };
    if a.workers == 0 {
        return Err(CliError::Usage("--workers must be positive".into()));
    }
    if !a.overwrite {
        if let Some(p) = collisions(&plan, &a.out).into_iter().next() {
            return Err(CliError::Collision(p));
        }
    }
    write_run_manifest(&a.out, "run", a.solver.as_deref(), Some(plan.seed), args)?;
    let factory = BumperFactory { geometry: plan.geometry.clone().unwrap_or_default() };
    let opts = CampaignOptions { workers: a.workers, overwrite: a.overwrite, ..CampaignOptions::default() };
    let report = run_campaign(&plan, &factory, &solver, &a.out, &opts)?;
    println!("{} cases: {} passed, {} failed", report.total, report.passed, report.failed);
    for f in &report.failures {
        println!("  {} failed: {}", f.case_id, f.reasons.join(", "));
    }
    if report.passed == 0 {
        return Err(CliError::Empty("no passing cases".into()));
    }
    Ok(())
}

fn parse_fractions(s: &str) -> Result<[f64; 3], CliError> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("bad fractions {s:?}")))?;
    v.try_into().map_err(|_| CliError::Usage(format!("expected three fractions, got {s:?}")))
}

fn cmd_split(a: SplitArgs, args: &[String]) -> Result<(), CliError> {
    let fractions = parse_fractions(&a.fractions)?;
    let seed = resolve_seed(a.seed)?;
    let out = a.out.clone().unwrap_or_else(|| a.root.join(SPLITS_FILE));
    let rows = read_master_csv(&a.root.join(MASTER_FILE))
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", a.root.join(MASTER_FILE).display())))?;
    let ids: Vec<String> = rows.into_iter().map(|r| r.case_id).collect();
    let splits = crate::datastore::make_splits(&ids, fractions, seed).map_err(|e| CliError::Usage(e.to_string()))?;
    write_run_manifest(&parent_dir(&out), "split", None, Some(seed), args)?;
    splits.save(&out)?;
    println!("train {} / validation {} / test {}", splits.train.len(), splits.validation.len(), splits.test.len());
    Ok(())
}

fn load_splits(root: &Path, path: Option<&Path>) -> Result<SplitSet, CliError> {
    let p = path.map_or_else(|| root.join(SPLITS_FILE), Path::to_path_buf);
    SplitSet::load(&p).map_err(|e| CliError::Usage(format!("cannot read splits {}: {e}", p.display())))
}

fn cmd_train(a: TrainArgs, args: &[String]) -> Result<(), CliError> {
    let mut spec: ModelSpec = match &a.model {
        Some(p) => read_json(p, "model spec")?,
        None => ModelSpec::default(),
    };
    if let Some(e) = a.epochs {
        spec.schedule.epochs = e;
    }
    if let Some(s) = a.steps {
        spec.schedule.max_steps = Some(s);
    }
    if let Some(lr) = a.lr {
        spec.schedule.learning_rate = lr;
    }
    if a.seed.is_some() || a.model.is_none() {
        let seed = resolve_seed(a.seed)?;
        spec.seed = seed;
        spec.schedule.seed = seed;
    }
    let splits = load_splits(&a.root, a.splits.as_deref())?;
    write_run_manifest(&parent_dir(&a.out), "train", a.model.as_deref(), Some(spec.seed), args)?;
    let t = train_surrogate(&a.root, &splits.train, &splits.validation, &DesignSpace::bumper(), &spec)?;
    let meta = serde_json::to_value(&t.meta).expect("metadata serializes");
    save_checkpoint(&t.model, meta, &a.out)?;
    let hist_path = a.out.with_extension("history.csv");
    let mut s = String::from("epoch,train_loss,val_loss\n");
    for (i, tl) in t.history.train_loss.iter().enumerate() {
        let vl = t.history.val_loss.get(i).map_or(String::new(), |v| format!("{v:?}"));
        s.push_str(&format!("{},{tl:?},{vl}\n", i + 1));
    }
    fs::write(&hist_path, s)?;
    println!(
        "{} parameters, {} epochs, {} steps, best epoch {}",
        t.model.param_count(),
        t.history.train_loss.len(),
        t.history.steps,
        t.history.best_epoch
    );
    Ok(())
}

fn unique_name(base: &str, taken: &[String]) -> String {
    if !taken.iter().any(|t| t == base) {
        return base.to_string();
    }
    (2..).map(|i| format!("{base}_{i}")).find(|n| !taken.contains(n)).expect("unbounded")
}

fn cmd_eval(a: EvalArgs, args: &[String]) -> Result<(), CliError> {
    let splits = load_splits(&a.root, a.splits.as_deref())?;
    let ids = match a.split {
        SplitName::Train => &splits.train,
        SplitName::Validation => &splits.validation,
        SplitName::Test => &splits.test,
    };
    if ids.is_empty() {
        return Err(CliError::Empty("evaluation split is empty".into()));
    }
    let mut predictors = Vec::new();
    let mut names: Vec<String> = Vec::new();
    for c in &a.ckpt {
        let (name, p) = if c == "zero" {
            ("zero".to_string(), Predictor::Zero)
        } else {
            let path = Path::new(c);
            let (model, meta) = load_checkpoint(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            let meta: CheckpointMeta =
                serde_json::from_value(meta).map_err(|e| CliError::Usage(format!("{}: metadata: {e}", path.display())))?;
            let stem = path.file_stem().map_or("model".into(), |s| s.to_string_lossy().into_owned());
            (stem, Predictor::Surrogate(Box::new(model), meta))
        };
        names.push(unique_name(&name, &names));
        predictors.push(p);
    }
    let out = a.out.clone().unwrap_or_else(|| a.root.join("eval"));
    let bundles = load_bundles(&a.root, ids)?;
    let mut all = Vec::new();
    for (name, p) in names.iter().zip(&predictors) {
        all.push(evaluate(name, p, &bundles, a.probe_ms)?);
    }
    write_run_manifest(&out, "eval", None, None, args)?;
    for m in &all {
        write_metrics_csv(m, &out.join(format!("metrics_{}.csv", m.model)))?;
    }
    let board = leaderboard(&all);
    write_leaderboard_csv(&board, &out.join("leaderboard.csv"))?;
    println!("{:<5} {:<20} {:>12} {:>12} {:>12} {:>12} {:>14}", "rank", "model", "rmse", "mae", "rel_l2_x", "rel_l2_u", "rmse_at_probe");
    for r in &board {
        println!(
            "{:<5} {:<20} {:>12.5} {:>12.5} {:>12.3e} {:>12.5} {:>14.5}",
            r.rank, r.model, r.rmse, r.mae, r.rel_l2_x, r.rel_l2_u, r.rmse_at_probe
        );
    }
    Ok(())
}

fn cmd_stats(a: StatsArgs, args: &[String]) -> Result<(), CliError> {
    let seed = resolve_seed(a.seed)?;
    let mut names: Vec<String> = Vec::new();
    let mut models = Vec::new();
    for p in std::iter::once(&a.metrics).chain(&a.against) {
        let stem = p.file_stem().map_or("model".into(), |s| s.to_string_lossy().into_owned());
        let stem = stem.strip_prefix("metrics_").unwrap_or(&stem).to_string();
        let name = unique_name(&stem, &names);
        let m = read_metrics_csv(p, &name).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
        names.push(name);
        models.push(m);
    }
    let report = significance_report(&models, a.replicates, a.permutations, seed)?;
    let out = a.out.clone().unwrap_or_else(|| parent_dir(&a.metrics));
    write_run_manifest(&out, "stats", None, Some(seed), args)?;
    fs::write(out.join("significance.json"), serde_json::to_string_pretty(&report).expect("report serializes"))?;
    for m in &report.models {
        println!(
            "{:<20} n={:<4} rmse {:.4} [{:.4}, {:.4}]  mae {:.4} [{:.4}, {:.4}]",
            m.model, m.n, m.rmse.mean, m.rmse.lo, m.rmse.hi, m.mae.mean, m.mae.lo, m.mae.hi
        );
    }
    print!("{}", render_pairs(&report));
    Ok(())
}

fn cmd_filter(a: FilterArgs, args: &[String]) -> Result<(), CliError> {
    let mut r = csv::Reader::from_path(&a.input).map_err(|e| CliError::Usage(format!("{}: {e}", a.input.display())))?;
    let header: Vec<String> = r.headers().map_err(|e| CliError::Usage(e.to_string()))?.iter().map(str::to_string).collect();
    let col = header
        .iter()
        .position(|h| *h == a.channel)
        .ok_or_else(|| CliError::Usage(format!("channel {:?} not in {}", a.channel, a.input.display())))?;
    let tcol = header
        .iter()
        .position(|h| h == "time_ms")
        .ok_or_else(|| CliError::Usage("history has no time_ms column".into()))?;
    let rows: Vec<Vec<String>> = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let num = |s: &str| s.parse::<f64>().map_err(|_| CliError::Usage(format!("bad number {s:?}")));
    let t: Vec<f64> = rows.iter().map(|r| num(&r[tcol])).collect::<Result<_, _>>()?;
    let x: Vec<f64> = rows.iter().map(|r| num(&r[col])).collect::<Result<_, _>>()?;
    if t.len() < 2 {
        return Err(CliError::Usage("history too short to filter".into()));
    }
    let dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
    if t.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-6 * dt.abs().max(1e-12)) {
        return Err(CliError::Usage("time column is not uniformly sampled".into()));
    }
    let y = cfc_filter(&x, dt, a.cfc).map_err(|e| CliError::Usage(e.to_string()))?;
    let name = format!("{}_cfc{}", a.channel, a.cfc);
    let out = a.out.clone().unwrap_or_else(|| a.input.clone());
    write_run_manifest(&parent_dir(&out), "filter", None, None, args)?;
    let mut w = csv::Writer::from_path(&out).map_err(|e| CliError::Failed(e.to_string()))?;
    let mut h = header.clone();
    let existing = h.iter().position(|c| *c == name);
    if existing.is_none() {
        h.push(name.clone());
    }
    w.write_record(&h).map_err(|e| CliError::Failed(e.to_string()))?;
    for (mut r, v) in rows.into_iter().zip(y) {
        match existing {
            Some(i) => r[i] = format!("{v:?}"),
            None => r.push(format!("{v:?}")),
        }
        w.write_record(&r).map_err(|e| CliError::Failed(e.to_string()))?;
    }
    w.flush()?;
    println!("wrote {name} to {}", out.display());
    Ok(())
}
