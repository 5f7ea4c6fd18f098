use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use enomad::harness::{self, BudgetConfig, HarnessConfig, TrainOptions};
use enomad::{Connectome, InitMode, PipelineKind, Task};

/// Connectome foraging: training runs, benchmark sweeps and exports.
#[derive(Parser)]
#[command(name = "enomad", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one pipeline on one task with one seed.
    Train(TrainArgs),
    /// Every pipeline × task × seed, with aggregate files.
    Sweep(RunArgs),
    /// Final-budget comparison table of a sweep directory.
    Report {
        /// Sweep directory.
        dir: PathBuf,
    },
    /// Trajectory CSV to SVG.
    Render(RenderArgs),
    /// Parse a connectome and its role file and print a summary.
    ValidateConnectome {
        csv: PathBuf,
        /// Role file; defaults to `<csv stem>.roles.json`.
        #[arg(long)]
        roles: Option<PathBuf>,
    },
    /// Write a random test network and its role file.
    SynthConnectome {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 368)]
        nodes: usize,
        #[arg(long, default_value_t = 3682)]
        synapses: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Pipeline kinds, comma separated.
    #[arg(long, value_delimiter = ',')]
    pipeline: Vec<PipelineKind>,
    /// Tasks, comma separated.
    #[arg(long, value_delimiter = ',')]
    task: Vec<Task>,
    /// Seeds: `0..30`, `1,2,5` or a count such as `30`.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    generations: Option<usize>,
    /// Seconds.
    #[arg(long)]
    wall_clock_budget: Option<f64>,
    /// Episode evaluations.
    #[arg(long)]
    evaluation_budget: Option<u64>,
    #[arg(long)]
    init_mode: Option<InitMode>,
    /// TOML configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (default: logical cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Connectome CSV; the bundled synthetic network is used otherwise.
    #[arg(long)]
    connectome: Option<PathBuf>,
    #[arg(long)]
    roles: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Also write `trajectory.svg` for the best individual.
    #[arg(long)]
    render_svg: bool,
    /// Also write `activity.jsonl` with the fired neurons of every step.
    #[arg(long)]
    dump_activity: bool,
    /// Write a checkpoint after every generation.
    #[arg(long)]
    checkpoint_every_generation: bool,
}

#[derive(Args)]
struct RenderArgs {
    trajectory: PathBuf,
    /// Eaten-food CSV (`food_id,t`).
    #[arg(long)]
    eaten: Option<PathBuf>,
    #[arg(long, default_value = "pentagon")]
    task: Task,
    /// TOML configuration for arena and layout settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

/// Failures before any run starts exit with 1, failures while running
/// with 2.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

type Outcome = std::result::Result<ExitCode, Failure>;

trait Phase<T> {
    fn config(self) -> std::result::Result<T, Failure>;
    fn runtime(self) -> std::result::Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Phase<T> for std::result::Result<T, E> {
    fn config(self) -> std::result::Result<T, Failure> {
        self.map_err(|e| Failure::Config(e.into()))
    }
    fn runtime(self) -> std::result::Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

fn parse_seeds(s: &str) -> anyhow::Result<Vec<u64>> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        if a >= b {
            bail!("empty seed range `{s}`");
        }
        return Ok((a..b).collect());
    }
    if s.contains(',') {
        return s
            .split(',')
            .map(|x| x.trim().parse().with_context(|| format!("bad seed `{x}`")))
            .collect();
    }
    let n: u64 = s.parse().with_context(|| format!("bad seeds `{s}`"))?;
    Ok((0..n).collect())
}

fn build_config(a: &RunArgs, single_seed: bool) -> anyhow::Result<HarnessConfig> {
    let mut cfg = match &a.config {
        Some(p) => HarnessConfig::load(p)?,
        None => HarnessConfig::default(),
    };
    if !a.pipeline.is_empty() {
        cfg.pipelines = a.pipeline.clone();
    }
    if !a.task.is_empty() {
        cfg.tasks = a.task.clone();
    }
    if let Some(s) = &a.seeds {
        cfg.seeds = match s.trim().parse::<u64>() {
            // a bare number names the seed of a single run, and a count for a sweep
            Ok(seed) if single_seed => vec![seed],
            _ => parse_seeds(s)?,
        };
    }
    if a.generations.is_some() || a.wall_clock_budget.is_some() || a.evaluation_budget.is_some() {
        cfg.budget = BudgetConfig {
            generations: a.generations,
            wall_clock_s: a.wall_clock_budget,
            evaluations: a.evaluation_budget,
        };
    }
    if let Some(m) = a.init_mode {
        cfg.init_mode = m;
    }
    if let Some(w) = a.workers {
        cfg.workers = w;
    }
    if a.connectome.is_some() {
        cfg.connectome = a.connectome.clone();
    }
    if a.roles.is_some() {
        cfg.roles = a.roles.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn train(a: &TrainArgs) -> Outcome {
    let mut cfg = build_config(&a.run, true).config()?;
    if a.run.seeds.is_none() {
        cfg.seeds.truncate(1);
    }
    if cfg.pipelines.len() != 1 || cfg.tasks.len() != 1 || cfg.seeds.len() != 1 {
        return Err(Failure::Config(anyhow::anyhow!(
            "train takes exactly one pipeline, task and seed (got {}, {} and {})",
            cfg.pipelines.len(),
            cfg.tasks.len(),
            cfg.seeds.len()
        )));
    }
    let conn = Arc::new(cfg.load_connectome().config()?);
    let opts = TrainOptions {
        render_svg: a.render_svg,
        dump_activity: a.dump_activity,
        checkpoint_every_generation: a.checkpoint_every_generation,
    };
    let (kind, task, seed) = (cfg.pipelines[0], cfg.tasks[0], cfg.seeds[0]);
    let out = a.run.out.clone();
    let summary = harness::with_workers(cfg.workers, || {
        harness::run_train(&cfg, conn, kind, task, seed, &out, &opts)
    })
    .config()?
    .runtime()?;
    let last = summary.records.last().unwrap_or(&summary.initial);
    println!(
        "{} {} seed {seed}: {} generations, best fitness {:.3} ({} food), L0 {}, L2 {:.3}, {} evaluations",
        kind.as_str(),
        task.as_str(),
        last.generation,
        last.best_fitness,
        last.food_eaten_best,
        last.l0_best,
        last.l2_best,
        last.evaluations_cumulative
    );
    Ok(ExitCode::SUCCESS)
}

fn sweep(a: &RunArgs) -> Outcome {
    let cfg = build_config(a, false).config()?;
    let conn = Arc::new(cfg.load_connectome().config()?);
    let s = harness::with_workers(cfg.workers, || harness::run_sweep(&cfg, conn, &a.out))
        .config()?
        .runtime()?;
    println!(
        "{} runs completed, {} resumed, {} failed; results in {}",
        s.completed,
        s.resumed,
        s.failed,
        a.out.display()
    );
    if s.failed > 0 {
        eprintln!("see {} for failed runs", a.out.join("sweep_status.csv").display());
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn report(dir: &Path) -> Outcome {
    let r = harness::compare_report(dir).config()?;
    harness::write_report(dir, &r).runtime()?;
    print!("{}", harness::report_text(&r));
    Ok(ExitCode::SUCCESS)
}

fn render(a: &RenderArgs) -> Outcome {
    let cfg = match &a.config {
        Some(p) => HarnessConfig::load(p).config()?,
        None => HarnessConfig::default(),
    };
    let env = cfg.train_config(a.task).env;
    harness::render_files(&a.trajectory, a.eaten.as_deref(), &env, &a.out).config()?;
    Ok(ExitCode::SUCCESS)
}

fn validate_connectome(csv: &Path, roles: Option<&Path>) -> Outcome {
    let roles_path = roles.map_or_else(|| enomad::connectome::default_roles_path(csv), Path::to_path_buf);
    let conn = Connectome::load(csv, &roles_path).config()?;
    print!("{}", harness::describe_connectome(&conn));
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Outcome {
    match &cli.command {
        Command::Train(a) => train(a),
        Command::Sweep(a) => sweep(a),
        Command::Report { dir } => report(dir),
        Command::Render(a) => render(a),
        Command::ValidateConnectome { csv, roles } => validate_connectome(csv, roles.as_deref()),
        Command::SynthConnectome {
            seed,
            nodes,
            synapses,
            out,
        } => {
            let conn = harness::synth_connectome(*seed, *nodes, *synapses, out).config()?;
            print!("{}", harness::describe_connectome(&conn));
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
