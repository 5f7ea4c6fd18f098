//! Runs, sweeps, reports and every exported file.
//!
//! Layout of a sweep directory:
//!
//! ```text
//! config.toml
//! sweep_status.csv
//! aggregate_generation.csv
//! aggregate_wallclock.csv
//! runs/{pipeline}__{task}__seed{seed}.csv
//! checkpoints/{pipeline}__{task}__seed{seed}.csv
//! ```
//!
//! A single `train` run writes `config.toml`, `records.csv`, `best.csv`,
//! `checkpoints/gen_NNNNN.csv`, `episode.csv` and `eaten.csv`, plus
//! `trajectory.svg`, `activity.jsonl` and `mads_traces/` on request.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::connectome::{default_roles_path, synthetic_connectome, Connectome, RoleSets};
use crate::environment::{
    run_episode, EnvConfig, EpisodeResult, FoodLayout, MotorParams, Task, TrajectoryPoint,
};
use crate::error::{Error, Result};
use crate::evolution::{EvoConfig, Individual};
use crate::mads::{write_trace, MadsConfig};
use crate::neural_sim::{NetworkState, SimParams};
use crate::pipelines::{
    Budget, EsConfig, InitMode, PipelineConfig, PipelineKind, RunRecord, TrainConfig, Trainer,
};

const FIXTURE_CSV: &str = include_str!("../fixtures/synthetic.csv");
const FIXTURE_ROLES: &str = include_str!("../fixtures/synthetic.roles.json");

/// The bundled synthetic connectome used when no network file is given.
pub fn bundled_connectome() -> Result<Connectome> {
    let roles: RoleSets =
        serde_json::from_str(FIXTURE_ROLES).map_err(|e| Error::Format(e.to_string()))?;
    Connectome::parse_csv(FIXTURE_CSV, roles)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetConfig {
    pub generations: Option<usize>,
    pub wall_clock_s: Option<f64>,
    pub evaluations: Option<u64>,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        BudgetConfig {
            generations: Some(10),
            wall_clock_s: None,
            evaluations: None,
        }
    }
}

impl BudgetConfig {
    pub fn budget(&self) -> Budget {
        Budget {
            generations: self.generations,
            wall_clock: self.wall_clock_s.map(Duration::from_secs_f64),
            evaluations: self.evaluations,
        }
    }
}

/// Everything a run or sweep needs, as read from and written to TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub pipelines: Vec<PipelineKind>,
    pub seeds: Vec<u64>,
    pub tasks: Vec<Task>,
    /// Worker threads; 0 uses every logical core.
    pub workers: usize,
    /// Width of the wall-clock buckets in the sweep aggregate.
    pub wallclock_bucket_s: f64,
    pub connectome: Option<PathBuf>,
    pub roles: Option<PathBuf>,
    pub init_mode: InitMode,
    pub budget: BudgetConfig,
    pub sim: SimParams,
    pub env: EnvConfig,
    pub motor: MotorParams,
    pub mads: MadsConfig,
    pub evo: EvoConfig,
    pub es: EsConfig,
    pub pipeline: PipelineConfig,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        HarnessConfig {
            pipelines: PipelineKind::ALL.to_vec(),
            seeds: (0..30).collect(),
            tasks: vec![Task::Pentagon],
            workers: 0,
            wallclock_bucket_s: 10.0,
            connectome: None,
            roles: None,
            init_mode: t.init_mode,
            budget: BudgetConfig::default(),
            sim: t.sim,
            env: t.env,
            motor: t.motor,
            mads: t.mads,
            evo: t.evo,
            es: t.es,
            pipeline: t.pipeline,
        }
    }
}

impl HarnessConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        let body = toml::to_string_pretty(self).expect("config serializes");
        format!(
            "# Unset optional keys: connectome, roles, budget.wall_clock_s, budget.evaluations,\n\
             # mads.max_evaluations (budget per call, default 50 per coordinate), env.custom_layout.\n\n{body}"
        )
    }

    pub fn train_config(&self, task: Task) -> TrainConfig {
        TrainConfig {
            init_mode: self.init_mode,
            sim: self.sim,
            env: EnvConfig {
                task,
                ..self.env.clone()
            },
            motor: self.motor,
            mads: self.mads.clone(),
            evo: self.evo.clone(),
            es: self.es.clone(),
            pipeline: self.pipeline.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pipelines.is_empty() || self.seeds.is_empty() || self.tasks.is_empty() {
            return Err(Error::Config("pipelines, seeds and tasks must be non-empty".into()));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(s) = self.seeds.iter().find(|s| !seen.insert(**s)) {
            return Err(Error::Config(format!("seed {s} is listed twice")));
        }
        if !self.budget.budget().is_bounded() {
            return Err(Error::Config("set at least one budget limit".into()));
        }
        if !(self.wallclock_bucket_s > 0.0) {
            return Err(Error::Config("wallclock_bucket_s must be positive".into()));
        }
        for &t in &self.tasks {
            self.train_config(t).validate()?;
        }
        Ok(())
    }

    /// The configured network, or the bundled fixture.
    pub fn load_connectome(&self) -> Result<Connectome> {
        match &self.connectome {
            Some(csv) => {
                let roles = self.roles.clone().unwrap_or_else(|| default_roles_path(csv));
                Connectome::load(csv, &roles)
            }
            None => bundled_connectome(),
        }
    }
}

/// Runs `f` on a pool of `workers` threads (0 = all cores).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    Ok(pool.install(f))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes through a temporary sibling so readers never see half a file.
fn write_atomic(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    let tmp = path.with_extension("partial");
    write_file(&tmp, contents)?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Format(format!("{}: {e}", path.display()))
}

pub fn records_csv(records: &[RunRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if records.is_empty() {
        w.write_record(RECORD_HEADER).map_err(|e| Error::Format(e.to_string()))?;
    }
    for r in records {
        w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

const RECORD_HEADER: [&str; 9] = [
    "generation",
    "wall_clock_s",
    "best_fitness",
    "best_reg_fitness",
    "mean_fitness",
    "food_eaten_best",
    "l2_best",
    "l0_best",
    "evaluations_cumulative",
];

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize().map(|x| x.map_err(|e| csv_error(path, e))).collect()
}

/// Metadata line at the top of a checkpoint file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub generation: usize,
    pub fitness: f64,
    pub reg_fitness: f64,
    pub food_eaten: usize,
    pub l0: usize,
    pub l2: f64,
    pub seed: u64,
}

pub fn checkpoint_text(conn: &Connectome, best: &Individual, generation: usize, seed: u64) -> String {
    let fit = best.fitness.expect("checkpointed individual is evaluated");
    let meta = CheckpointMeta {
        generation,
        fitness: fit.raw,
        reg_fitness: fit.reg,
        food_eaten: fit.food_eaten,
        l0: best.genome.l0_from_prior(),
        l2: best.genome.l2_from_prior(),
        seed,
    };
    let header = serde_json::to_string(&meta).expect("metadata serializes");
    format!("# {header}\n{}", conn.to_csv_string(best.genome.weights()))
}

/// Reads a checkpoint back as its metadata and a network carrying the
/// checkpointed weights.
pub fn read_checkpoint(path: &Path, roles: RoleSets) -> Result<(CheckpointMeta, Connectome)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let first = text.lines().next().unwrap_or_default();
    let json = first.strip_prefix("# ").ok_or_else(|| Error::Parse {
        line: 1,
        message: "checkpoint must start with `# {json}`".into(),
    })?;
    let meta = serde_json::from_str(json).map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    Ok((meta, Connectome::parse_csv(&text, roles)?))
}

/// Options of a single `train` run.
#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    pub render_svg: bool,
    pub dump_activity: bool,
    /// Write a checkpoint after every generation, not only the final one.
    pub checkpoint_every_generation: bool,
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub initial: RunRecord,
    pub records: Vec<RunRecord>,
    pub best: Individual,
    pub episode: EpisodeResult,
}

/// Replays `weights` on the run's task, optionally collecting the names of
/// the neurons that fire at each step.
pub fn replay(
    conn: &Connectome,
    cfg: &TrainConfig,
    weights: &[f64],
    seed: u64,
    activity: Option<&mut Vec<Vec<String>>>,
) -> Result<EpisodeResult> {
    let layout = cfg.env.layout()?;
    let arena = crate::environment::Arena {
        conn,
        env: &cfg.env,
        layout: &layout,
        motor: &cfg.motor,
        sim: &cfg.sim,
    };
    match activity {
        Some(log) => {
            let mut obs = |_: usize, n: &NetworkState| {
                log.push(n.fired_ids().map(|id| conn.name(id).to_string()).collect());
            };
            run_episode(weights, &arena, seed, Some(&mut obs))
        }
        None => run_episode(weights, &arena, seed, None),
    }
}

pub fn activity_jsonl(steps: &[Vec<String>]) -> String {
    let mut out = String::new();
    for (i, fired) in steps.iter().enumerate() {
        let line = serde_json::json!({ "step": i + 1, "fired": fired });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    out
}

/// One training run with all of its output files under `out`.
pub fn run_train(
    cfg: &HarnessConfig,
    conn: Arc<Connectome>,
    kind: PipelineKind,
    task: Task,
    seed: u64,
    out: &Path,
    opts: &TrainOptions,
) -> Result<TrainSummary> {
    let tcfg = cfg.train_config(task);
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_file(&out.join("config.toml"), cfg.to_toml())?;
    let mut trainer = Trainer::new(kind, tcfg.clone(), conn.clone(), seed)?;
    let ck_dir = out.join("checkpoints");
    let traces_dir = out.join("mads_traces");
    let records = trainer.run(&cfg.budget.budget(), |t, r| {
        if opts.checkpoint_every_generation {
            let text = checkpoint_text(&conn, t.best(), r.generation, seed);
            write_file(&ck_dir.join(format!("gen_{:05}.csv", r.generation)), text)?;
        }
        Ok(())
    })?;
    // Traces are drained once at the end; they are only kept on request.
    for tr in trainer.take_traces() {
        let mut buf = Vec::new();
        write_trace(&mut buf, &tr.rows).map_err(|e| Error::io(&traces_dir, e))?;
        let name = format!("gen{:05}_ind{:03}.csv", tr.generation, tr.individual);
        write_file(&traces_dir.join(name), buf)?;
    }
    write_file(&out.join("records.csv"), records_csv(&records)?)?;
    let best = trainer.best().clone();
    let generation = trainer.state().generation;
    write_file(&out.join("best.csv"), checkpoint_text(&conn, &best, generation, seed))?;

    let mut activity = opts.dump_activity.then(Vec::new);
    let episode = replay(&conn, &tcfg, best.genome.weights(), seed, activity.as_mut())?;
    write_file(&out.join("episode.csv"), episode.trajectory_csv())?;
    write_file(&out.join("eaten.csv"), episode.eaten_csv())?;
    if let Some(steps) = &activity {
        write_file(&out.join("activity.jsonl"), activity_jsonl(steps))?;
    }
    if opts.render_svg {
        let layout = tcfg.env.layout()?;
        let svg = render_svg(&episode.trajectory, &layout, &episode.eaten, &tcfg.env)?;
        write_file(&out.join("trajectory.svg"), svg)?;
    }
    Ok(TrainSummary {
        initial: trainer.initial_record().clone(),
        records,
        best,
        episode,
    })
}

pub fn run_name(kind: PipelineKind, task: Task, seed: u64) -> String {
    format!("{}__{}__seed{}", kind.as_str(), task.as_str(), seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusRow {
    pub run: String,
    pub pipeline: PipelineKind,
    pub task: Task,
    pub seed: u64,
    pub status: String,
    pub generations: usize,
    pub evaluations: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct SweepSummary {
    pub completed: usize,
    pub resumed: usize,
    pub failed: usize,
}

fn read_status(path: &Path) -> Result<Vec<StatusRow>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize().map(|x| x.map_err(|e| csv_error(path, e))).collect()
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(header).map_err(|e| Error::Format(e.to_string()))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    write_atomic(path, bytes)
}

const STATUS_HEADER: [&str; 8] = [
    "run",
    "pipeline",
    "task",
    "seed",
    "status",
    "generations",
    "evaluations",
    "message",
];

/// Every (pipeline, task, seed) run of `cfg`, then the aggregate files.
/// Runs already marked `ok` with their files present are not repeated.
pub fn run_sweep(cfg: &HarnessConfig, conn: Arc<Connectome>, out: &Path) -> Result<SweepSummary> {
    cfg.validate()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_file(&out.join("config.toml"), cfg.to_toml())?;
    let status_path = out.join("sweep_status.csv");
    let previous: HashMap<String, StatusRow> = read_status(&status_path)?
        .into_iter()
        .map(|r| (r.run.clone(), r))
        .collect();
    let mut status = Vec::new();
    let mut summary = SweepSummary::default();
    for &task in &cfg.tasks {
        for &kind in &cfg.pipelines {
            for &seed in &cfg.seeds {
                let name = run_name(kind, task, seed);
                let rec_path = out.join("runs").join(format!("{name}.csv"));
                let ck_path = out.join("checkpoints").join(format!("{name}.csv"));
                if let Some(prev) = previous.get(&name) {
                    if prev.status == "ok" && rec_path.exists() && ck_path.exists() {
                        status.push(prev.clone());
                        summary.resumed += 1;
                        continue;
                    }
                }
                let row = match sweep_run(cfg, &conn, kind, task, seed, &rec_path, &ck_path) {
                    Ok((generations, evaluations)) => {
                        summary.completed += 1;
                        StatusRow {
                            run: name,
                            pipeline: kind,
                            task,
                            seed,
                            status: "ok".into(),
                            generations,
                            evaluations,
                            message: String::new(),
                        }
                    }
                    Err(msg) => {
                        summary.failed += 1;
                        StatusRow {
                            run: name,
                            pipeline: kind,
                            task,
                            seed,
                            status: "failed".into(),
                            generations: 0,
                            evaluations: 0,
                            message: msg,
                        }
                    }
                };
                status.push(row);
                write_rows(&status_path, &status, &STATUS_HEADER)?;
            }
        }
    }
    write_rows(&status_path, &status, &STATUS_HEADER)?;
    write_aggregates(out, &status, cfg.wallclock_bucket_s)?;
    Ok(summary)
}

fn sweep_run(
    cfg: &HarnessConfig,
    conn: &Arc<Connectome>,
    kind: PipelineKind,
    task: Task,
    seed: u64,
    rec_path: &Path,
    ck_path: &Path,
) -> std::result::Result<(usize, u64), String> {
    let attempt = catch_unwind(AssertUnwindSafe(|| -> Result<(usize, u64)> {
        let mut t = Trainer::new(kind, cfg.train_config(task), conn.clone(), seed)?;
        let records = t.run(&cfg.budget.budget(), |_, _| Ok(()))?;
        write_atomic(rec_path, records_csv(&records)?)?;
        let g = t.state().generation;
        write_atomic(ck_path, checkpoint_text(conn, t.best(), g, seed))?;
        Ok((g, t.evaluator().evaluations()))
    }));
    match attempt {
        Ok(Ok(v)) => Ok(v),
        Ok(Err(e)) => Err(e.to_string()),
        Err(panic) => Err(panic
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into())),
    }
}

/// Sample mean and standard deviation (n − 1); the deviation of a single
/// value is 0.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub pipeline: PipelineKind,
    pub task: Task,
    /// Generation index, or the bucket's upper wall-clock edge in seconds.
    pub x: f64,
    pub n: usize,
    pub best_fitness_mean: f64,
    pub best_fitness_std: f64,
    pub food_eaten_mean: f64,
    pub food_eaten_std: f64,
    pub l2_mean: f64,
    pub l2_std: f64,
    pub l0_mean: f64,
    pub l0_std: f64,
    pub evaluations_mean: f64,
}

fn aggregate(pipeline: PipelineKind, task: Task, x: f64, rs: &[&RunRecord]) -> AggregateRow {
    let col = |f: &dyn Fn(&RunRecord) -> f64| mean_std(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
    let (bf, bfs) = col(&|r| r.best_fitness);
    let (fe, fes) = col(&|r| r.food_eaten_best as f64);
    let (l2, l2s) = col(&|r| r.l2_best);
    let (l0, l0s) = col(&|r| r.l0_best as f64);
    let (ev, _) = col(&|r| r.evaluations_cumulative as f64);
    AggregateRow {
        pipeline,
        task,
        x,
        n: rs.len(),
        best_fitness_mean: bf,
        best_fitness_std: bfs,
        food_eaten_mean: fe,
        food_eaten_std: fes,
        l2_mean: l2,
        l2_std: l2s,
        l0_mean: l0,
        l0_std: l0s,
        evaluations_mean: ev,
    }
}

/// Per generation: statistics over the runs that reached it.
pub fn aggregate_by_generation(runs: &BTreeMap<(PipelineKind, Task), Vec<Vec<RunRecord>>>) -> Vec<AggregateRow> {
    let mut out = Vec::new();
    for (&(kind, task), group) in runs {
        let max_g = group.iter().filter_map(|r| r.last()).map(|r| r.generation).max().unwrap_or(0);
        for g in 1..=max_g {
            let rs: Vec<&RunRecord> = group
                .iter()
                .filter_map(|r| r.iter().find(|x| x.generation == g))
                .collect();
            if !rs.is_empty() {
                out.push(aggregate(kind, task, g as f64, &rs));
            }
        }
    }
    out
}

/// Per wall-clock bucket: each run contributes its latest record inside
/// the bucket's upper edge.
pub fn aggregate_by_wallclock(
    runs: &BTreeMap<(PipelineKind, Task), Vec<Vec<RunRecord>>>,
    bucket_s: f64,
) -> Vec<AggregateRow> {
    let mut out = Vec::new();
    for (&(kind, task), group) in runs {
        let end = group
            .iter()
            .filter_map(|r| r.last())
            .map(|r| r.wall_clock_s)
            .fold(0.0, f64::max);
        let buckets = (end / bucket_s).ceil().max(1.0) as usize;
        for b in 1..=buckets {
            let edge = b as f64 * bucket_s;
            let rs: Vec<&RunRecord> = group
                .iter()
                .filter_map(|r| r.iter().rev().find(|x| x.wall_clock_s <= edge))
                .collect();
            if !rs.is_empty() {
                out.push(aggregate(kind, task, edge, &rs));
            }
        }
    }
    out
}

const AGG_HEADER: [&str; 13] = [
    "pipeline",
    "task",
    "x",
    "n",
    "best_fitness_mean",
    "best_fitness_std",
    "food_eaten_mean",
    "food_eaten_std",
    "l2_mean",
    "l2_std",
    "l0_mean",
    "l0_std",
    "evaluations_mean",
];

fn load_ok_runs(dir: &Path, status: &[StatusRow]) -> Result<BTreeMap<(PipelineKind, Task), Vec<Vec<RunRecord>>>> {
    let mut runs: BTreeMap<(PipelineKind, Task), Vec<Vec<RunRecord>>> = BTreeMap::new();
    for row in status.iter().filter(|r| r.status == "ok") {
        let recs = read_records(&dir.join("runs").join(format!("{}.csv", row.run)))?;
        runs.entry((row.pipeline, row.task)).or_default().push(recs);
    }
    Ok(runs)
}

fn write_aggregates(dir: &Path, status: &[StatusRow], bucket_s: f64) -> Result<()> {
    let runs = load_ok_runs(dir, status)?;
    let generation_header = AGG_HEADER.map(|h| if h == "x" { "generation" } else { h });
    let wall_header = AGG_HEADER.map(|h| if h == "x" { "wall_clock_s" } else { h });
    write_aggregate(&dir.join("aggregate_generation.csv"), &aggregate_by_generation(&runs), &generation_header)?;
    write_aggregate(&dir.join("aggregate_wallclock.csv"), &aggregate_by_wallclock(&runs, bucket_s), &wall_header)
}

fn write_aggregate(path: &Path, rows: &[AggregateRow], header: &[&str]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| Error::Format(e.to_string()))?;
    for r in rows {
        w.write_record([
            r.pipeline.as_str().to_string(),
            r.task.as_str().to_string(),
            r.x.to_string(),
            r.n.to_string(),
            r.best_fitness_mean.to_string(),
            r.best_fitness_std.to_string(),
            r.food_eaten_mean.to_string(),
            r.food_eaten_std.to_string(),
            r.l2_mean.to_string(),
            r.l2_std.to_string(),
            r.l0_mean.to_string(),
            r.l0_std.to_string(),
            r.evaluations_mean.to_string(),
        ])
        .map_err(|e| Error::Format(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    write_atomic(path, bytes)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub pipeline: PipelineKind,
    pub task: Task,
    pub n: usize,
    pub food_eaten_mean: f64,
    pub food_eaten_std: f64,
    pub best_fitness_mean: f64,
    pub best_fitness_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairRow {
    pub task: Task,
    pub better: PipelineKind,
    pub worse: PipelineKind,
    pub p_value: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub pairs: Vec<PairRow>,
}

/// Two-sided Welch t-test p-value. Two constant samples are significantly
/// different exactly when their values differ.
pub fn welch_p_value(a: &[f64], b: &[f64]) -> f64 {
    let (ma, sa) = mean_std(a);
    let (mb, sb) = mean_std(b);
    if a.len() < 2 || b.len() < 2 {
        return f64::NAN;
    }
    let (va, vb) = (sa * sa / a.len() as f64, sb * sb / b.len() as f64);
    if va + vb == 0.0 {
        return if ma == mb { 1.0 } else { 0.0 };
    }
    let t = (ma - mb) / (va + vb).sqrt();
    let df = (va + vb).powi(2)
        / (va * va / (a.len() - 1) as f64 + vb * vb / (b.len() - 1) as f64);
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    2.0 * (1.0 - dist.cdf(t.abs()))
}

/// Final food eaten and fitness per pipeline, and pairwise orderings
/// flagged significant at p < 0.05.
pub fn compare_report(dir: &Path) -> Result<Report> {
    let status = read_status(&dir.join("sweep_status.csv"))?;
    if status.is_empty() {
        return Err(Error::Format(format!("{}: no sweep_status.csv runs", dir.display())));
    }
    let runs = load_ok_runs(dir, &status)?;
    let mut rows = Vec::new();
    let mut finals: BTreeMap<(Task, PipelineKind), Vec<f64>> = BTreeMap::new();
    for (&(kind, task), group) in &runs {
        let last: Vec<&RunRecord> = group.iter().filter_map(|r| r.last()).collect();
        let food: Vec<f64> = last.iter().map(|r| r.food_eaten_best as f64).collect();
        let fit: Vec<f64> = last.iter().map(|r| r.best_fitness).collect();
        let (fm, fs) = mean_std(&food);
        let (bm, bs) = mean_std(&fit);
        rows.push(ReportRow {
            pipeline: kind,
            task,
            n: last.len(),
            food_eaten_mean: fm,
            food_eaten_std: fs,
            best_fitness_mean: bm,
            best_fitness_std: bs,
        });
        finals.insert((task, kind), food);
    }
    let mut pairs = Vec::new();
    let keys: Vec<_> = finals.keys().copied().collect();
    for (i, &(ta, ka)) in keys.iter().enumerate() {
        for &(tb, kb) in &keys[i + 1..] {
            if ta != tb {
                continue;
            }
            let (a, b) = (&finals[&(ta, ka)], &finals[&(tb, kb)]);
            let (ma, _) = mean_std(a);
            let (mb, _) = mean_std(b);
            let (better, worse) = if ma >= mb { (ka, kb) } else { (kb, ka) };
            let p = welch_p_value(a, b);
            pairs.push(PairRow {
                task: ta,
                better,
                worse,
                p_value: p,
                significant: p < 0.05,
            });
        }
    }
    Ok(Report { rows, pairs })
}

pub fn report_text(r: &Report) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<10} {:<10} {:>3} {:>18} {:>22}", "pipeline", "task", "n", "food eaten", "best fitness");
    for row in &r.rows {
        let _ = writeln!(
            s,
            "{:<10} {:<10} {:>3} {:>8.2} ± {:<7.2} {:>10.2} ± {:<9.2}",
            row.pipeline.as_str(),
            row.task.as_str(),
            row.n,
            row.food_eaten_mean,
            row.food_eaten_std,
            row.best_fitness_mean,
            row.best_fitness_std
        );
    }
    if !r.pairs.is_empty() {
        s.push('\n');
    }
    for p in &r.pairs {
        let op = if p.significant { ">" } else { "~" };
        let _ = writeln!(
            s,
            "{}: {} {op} {} (Welch p = {:.4})",
            p.task.as_str(),
            p.better.as_str(),
            p.worse.as_str(),
            p.p_value
        );
    }
    s
}

/// Writes `report.csv` and `report.txt` into the sweep directory.
pub fn write_report(dir: &Path, r: &Report) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "pipeline",
        "task",
        "n",
        "food_eaten_mean",
        "food_eaten_std",
        "best_fitness_mean",
        "best_fitness_std",
    ])
    .map_err(|e| Error::Format(e.to_string()))?;
    for row in &r.rows {
        w.serialize(row).map_err(|e| Error::Format(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    write_file(&dir.join("report.csv"), bytes)?;
    write_file(&dir.join("report.txt"), report_text(r))
}

pub fn parse_trajectory_csv(text: &str) -> Result<Vec<TrajectoryPoint>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| Error::Format(e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != ["t", "x", "y", "theta", "reward"] {
        return Err(Error::Parse {
            line: 1,
            message: "expected header `t,x,y,theta,reward`".into(),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
        let num = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Parse {
                    line: i + 2,
                    message: format!("bad field {k}"),
                })
        };
        out.push(TrajectoryPoint {
            t: num(0)? as usize,
            x: num(1)?,
            y: num(2)?,
            theta: num(3)?,
            reward: num(4)?,
        });
    }
    Ok(out)
}

pub fn parse_eaten_csv(text: &str) -> Result<Vec<(usize, usize)>> {
    let mut lines = text.lines();
    if lines.next() != Some("food_id,t") {
        return Err(Error::Parse {
            line: 1,
            message: "expected header `food_id,t`".into(),
        });
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let bad = || Error::Parse {
                line: i + 2,
                message: format!("bad row `{l}`"),
            };
            let (a, b) = l.split_once(',').ok_or_else(bad)?;
            Ok((a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?))
        })
        .collect()
}

/// Dark blue at the start to yellow at the end.
fn time_color(frac: f64) -> String {
    let f = frac.clamp(0.0, 1.0);
    let lerp = |a: u8, b: u8| (a as f64 + (b as f64 - a as f64) * f).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(0x0b, 0xff), lerp(0x1a, 0xd7), lerp(0x6b, 0x00))
}

/// Time-colored trajectory over the arena with its food; eaten food is
/// drawn hollow and tagged with the step it was eaten.
pub fn render_svg(
    trajectory: &[TrajectoryPoint],
    layout: &FoodLayout,
    eaten: &[(usize, usize)],
    env: &EnvConfig,
) -> Result<String> {
    if trajectory.is_empty() {
        return Err(Error::Format("empty trajectory".into()));
    }
    let (w, h) = (env.width, env.height);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(
        s,
        r#"<rect class="arena" x="0" y="0" width="{w}" height="{h}" fill="white" stroke="black" stroke-width="4"/>"#
    );
    let eaten_at: HashMap<usize, usize> = eaten.iter().copied().collect();
    for (i, &(x, y)) in layout.positions.iter().enumerate() {
        // SVG y grows downward
        let cy = h - y;
        match eaten_at.get(&i) {
            Some(t) => {
                let _ = writeln!(
                    s,
                    r##"<circle class="food eaten" data-food="{i}" data-eaten-step="{t}" cx="{x:.2}" cy="{cy:.2}" r="{r}" fill="none" stroke="#2e7d32" stroke-width="3"/>"##,
                    r = env.consumption_range
                );
            }
            None => {
                let _ = writeln!(
                    s,
                    r##"<circle class="food" data-food="{i}" cx="{x:.2}" cy="{cy:.2}" r="{r}" fill="#2e7d32"/>"##,
                    r = env.consumption_range
                );
            }
        }
    }
    let pts: Vec<String> = trajectory
        .iter()
        .map(|p| format!("{:.2},{:.2}", p.x, h - p.y))
        .collect();
    let _ = writeln!(
        s,
        r##"<polyline class="path" points="{}" fill="none" stroke="#9e9e9e" stroke-width="1"/>"##,
        pts.join(" ")
    );
    let segs = trajectory.len().saturating_sub(1);
    for (k, pair) in trajectory.windows(2).enumerate() {
        let frac = if segs > 1 { k as f64 / (segs - 1) as f64 } else { 0.0 };
        let _ = writeln!(
            s,
            r#"<line class="seg" data-t="{}" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{}" stroke-width="3"/>"#,
            pair[1].t,
            pair[0].x,
            h - pair[0].y,
            pair[1].x,
            h - pair[1].y,
            time_color(frac)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Renders trajectory and eaten CSV files into `out`. Nothing is written
/// when the inputs are invalid.
pub fn render_files(trajectory: &Path, eaten: Option<&Path>, env: &EnvConfig, out: &Path) -> Result<()> {
    let text = fs::read_to_string(trajectory).map_err(|e| Error::io(trajectory, e))?;
    let points = parse_trajectory_csv(&text)?;
    let eaten = match eaten {
        Some(p) => parse_eaten_csv(&fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?,
        None => Vec::new(),
    };
    let svg = render_svg(&points, &env.layout()?, &eaten, env)?;
    let mut f = fs::File::create(out).map_err(|e| Error::io(out, e))?;
    f.write_all(svg.as_bytes()).map_err(|e| Error::io(out, e))
}

/// Summary printed by `validate-connectome`.
pub fn describe_connectome(conn: &Connectome) -> String {
    let (chem, gap, nmj) = conn.kind_counts();
    format!(
        "nodes {}\nsynapses {} (chem {chem}, gap {gap}, nmj {nmj})\nfood sensors {}\navoid sensors {}\nmuscles left {} right {}\n",
        conn.node_count(),
        conn.synapse_count(),
        conn.food_sensors().len(),
        conn.avoid_sensors().len(),
        conn.muscle_left().len(),
        conn.muscle_right().len(),
    )
}

/// Writes a synthetic network and its role file next to it.
pub fn synth_connectome(seed: u64, nodes: usize, synapses: usize, csv: &Path) -> Result<Connectome> {
    let conn = synthetic_connectome(seed, nodes, synapses)?;
    if let Some(dir) = csv.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    conn.save(csv, &default_roles_path(csv))?;
    Ok(conn)
}
