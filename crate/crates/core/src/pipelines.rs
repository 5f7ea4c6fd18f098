//! Training strategies built from the episode, the optimizer and the
//! population operators, each exposed as a per-generation step.
//!
//! * `renomad`: every individual gets MADS on 49 random coordinates, then
//!   the population is culled and refilled by crossover.
//! * `menomad`: every individual is mutated, then MADS runs on its changed
//!   coordinates while there are fewer than 50 of them.
//! * `pure_evo`: the `menomad` loop without MADS.
//! * `openai_es`: antithetic Gaussian evolution strategy on a single mean.
//! * `cfnomad`: single elitist lineage, two mutations every fourth
//!   generation, MADS on the changed coordinates every generation.
//!
//! All fitness evaluations go through [`Evaluator`], which counts them. The
//! task seed is fixed for a whole run, so every objective is deterministic.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::connectome::{Connectome, Genome};
use crate::environment::{run_episode, Arena, EnvConfig, EpisodeResult, FoodLayout, MotorParams};
use crate::error::{Error, Result};
use crate::evolution::{breed, mutate_indices, ranking, regularizer, EvoConfig, Fitness, Individual};
use crate::mads::{optimize_subset, MadsConfig, TraceRow};
use crate::neural_sim::SimParams;
use crate::seed::{self, stage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineKind {
    Renomad,
    Menomad,
    PureEvo,
    OpenaiEs,
    Cfnomad,
}

impl PipelineKind {
    pub const ALL: [PipelineKind; 5] = [
        PipelineKind::Renomad,
        PipelineKind::Menomad,
        PipelineKind::PureEvo,
        PipelineKind::OpenaiEs,
        PipelineKind::Cfnomad,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PipelineKind::Renomad => "renomad",
            PipelineKind::Menomad => "menomad",
            PipelineKind::PureEvo => "pure_evo",
            PipelineKind::OpenaiEs => "openai_es",
            PipelineKind::Cfnomad => "cfnomad",
        }
    }

    /// Whether the kind keeps a population bred by crossover.
    pub fn uses_population(self) -> bool {
        matches!(
            self,
            PipelineKind::Renomad | PipelineKind::Menomad | PipelineKind::PureEvo
        )
    }
}

impl fmt::Display for PipelineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PipelineKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('-', "_");
        PipelineKind::ALL
            .into_iter()
            .find(|k| k.as_str() == key)
            .ok_or_else(|| Error::Config(format!("unknown pipeline `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    #[default]
    BiologicalPrior,
    RandomUniform,
}

impl InitMode {
    pub fn as_str(self) -> &'static str {
        match self {
            InitMode::BiologicalPrior => "biological_prior",
            InitMode::RandomUniform => "random_uniform",
        }
    }
}

impl FromStr for InitMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "biological_prior" | "prior" => Ok(InitMode::BiologicalPrior),
            "random_uniform" | "random" => Ok(InitMode::RandomUniform),
            _ => Err(Error::Config(format!("unknown init mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EsConfig {
    pub sigma: f64,
    pub learning_rate: f64,
    pub pop_pairs: usize,
}

impl Default for EsConfig {
    fn default() -> Self {
        EsConfig {
            sigma: 0.5,
            learning_rate: 0.05,
            pop_pairs: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Coordinates optimized per individual by `renomad`.
    pub renomad_subset_size: usize,
    /// MADS runs only while an individual has fewer changed weights.
    pub nomad_skip_threshold: usize,
    pub cf_mutation_cadence: usize,
    pub cf_mutations: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            renomad_subset_size: 49,
            nomad_skip_threshold: 50,
            cf_mutation_cadence: 4,
            cf_mutations: 2,
        }
    }
}

/// Every tunable of a training run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub init_mode: InitMode,
    pub sim: SimParams,
    pub env: EnvConfig,
    pub motor: MotorParams,
    pub mads: MadsConfig,
    pub evo: EvoConfig,
    pub es: EsConfig,
    pub pipeline: PipelineConfig,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.env.validate()?;
        self.motor.validate()?;
        self.mads.validate()?;
        self.evo.validate()?;
        if !(self.es.sigma > 0.0) || !(self.es.learning_rate > 0.0) || self.es.pop_pairs == 0 {
            return Err(Error::Config(
                "es: sigma, learning_rate and pop_pairs must be positive".into(),
            ));
        }
        let p = &self.pipeline;
        if p.renomad_subset_size > self.mads.max_subset {
            return Err(Error::Config(format!(
                "pipeline: renomad_subset_size {} exceeds mads.max_subset {}",
                p.renomad_subset_size, self.mads.max_subset
            )));
        }
        if p.nomad_skip_threshold > self.mads.max_subset + 1 {
            return Err(Error::Config(format!(
                "pipeline: nomad_skip_threshold {} allows subsets above mads.max_subset {}",
                p.nomad_skip_threshold, self.mads.max_subset
            )));
        }
        if p.cf_mutation_cadence == 0 {
            return Err(Error::Config("pipeline: cf_mutation_cadence must be positive".into()));
        }
        Ok(())
    }
}

/// Runs episodes for one fixed task and counts them.
#[derive(Debug)]
pub struct Evaluator {
    conn: Arc<Connectome>,
    env: EnvConfig,
    layout: FoodLayout,
    motor: MotorParams,
    sim: SimParams,
    evo: EvoConfig,
    episode_seed: u64,
    count: AtomicU64,
}

impl Evaluator {
    pub fn new(conn: Arc<Connectome>, cfg: &TrainConfig, episode_seed: u64) -> Result<Self> {
        Ok(Evaluator {
            layout: cfg.env.layout()?,
            conn,
            env: cfg.env.clone(),
            motor: cfg.motor,
            sim: cfg.sim,
            evo: cfg.evo.clone(),
            episode_seed,
            count: AtomicU64::new(0),
        })
    }

    pub fn connectome(&self) -> &Arc<Connectome> {
        &self.conn
    }

    pub fn layout(&self) -> &FoodLayout {
        &self.layout
    }

    pub fn episode_seed(&self) -> u64 {
        self.episode_seed
    }

    pub fn arena(&self) -> Arena<'_> {
        Arena {
            conn: &self.conn,
            env: &self.env,
            layout: &self.layout,
            motor: &self.motor,
            sim: &self.sim,
        }
    }

    /// One counted episode.
    pub fn episode(&self, weights: &[f64]) -> EpisodeResult {
        self.count.fetch_add(1, Ordering::Relaxed);
        run_episode(weights, &self.arena(), self.episode_seed, None)
            .expect("genome length matches the connectome")
    }

    /// Raw fitness, without the regularizer.
    pub fn raw(&self, weights: &[f64]) -> Fitness {
        let ep = self.episode(weights);
        Fitness {
            raw: ep.fitness,
            reg: ep.fitness,
            food_eaten: ep.food_eaten,
        }
    }

    /// Fitness with the cardinality penalty.
    pub fn fitness(&self, genome: &Genome) -> Fitness {
        let raw = self.raw(genome.weights());
        Fitness {
            reg: raw.raw + regularizer(genome, &self.evo),
            ..raw
        }
    }

    pub fn evaluations(&self) -> u64 {
        self.count.load(Ordering::Relaxed)
    }
}

/// Operation counts used to check each strategy's bookkeeping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Audit {
    pub mutate_calls: u64,
    pub mutated_coordinates: u64,
    pub crossovers: u64,
    pub mads_calls: u64,
    pub mads_evaluations: u64,
    pub direct_evaluations: u64,
}

/// One line of training progress.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub generation: usize,
    pub wall_clock_s: f64,
    pub best_fitness: f64,
    pub best_reg_fitness: f64,
    pub mean_fitness: f64,
    pub food_eaten_best: usize,
    pub l2_best: f64,
    pub l0_best: usize,
    pub evaluations_cumulative: u64,
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub population: Vec<Individual>,
    pub generation: usize,
    pub best_ever: Individual,
    /// Mean vector of the evolution strategy.
    pub center: Option<Vec<f64>>,
    /// Mean raw fitness of the population evaluated in the last generation.
    pub last_mean: f64,
}

/// Stop conditions, checked between generations. Any one that is set and
/// reached ends the run.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Budget {
    pub generations: Option<usize>,
    pub wall_clock: Option<Duration>,
    pub evaluations: Option<u64>,
}

impl Budget {
    pub fn generations(n: usize) -> Self {
        Budget {
            generations: Some(n),
            ..Default::default()
        }
    }

    pub fn evaluations(n: u64) -> Self {
        Budget {
            evaluations: Some(n),
            ..Default::default()
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.generations.is_some() || self.wall_clock.is_some() || self.evaluations.is_some()
    }

    fn reached(&self, t: &Trainer) -> bool {
        self.generations.is_some_and(|g| t.state.generation >= g)
            || self.wall_clock.is_some_and(|w| t.started.elapsed() >= w)
            || self.evaluations.is_some_and(|e| t.evaluator.evaluations() >= e)
    }
}

/// Antithetic pairs `+ε, −ε`, the raw scores in the order
/// `+ε₀, −ε₀, +ε₁, …`, and the updated mean.
#[derive(Debug, Clone)]
pub struct EsStep {
    pub center: Vec<f64>,
    pub scores: Vec<f64>,
}

/// Ranks scaled to `[−0.5, 0.5]`; tied values share their average rank.
pub fn centered_ranks(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks.iter().map(|r| r / (n - 1) as f64 - 0.5).collect()
}

/// One evolution-strategy update of `center` on `objective`.
pub fn es_step<F>(center: &[f64], objective: &F, es: &EsConfig, rng_seed: u64) -> EsStep
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let dim = center.len();
    let eps: Vec<Vec<f64>> = (0..es.pop_pairs)
        .map(|k| {
            let mut rng = seed::rng_for(rng_seed, &[k as u64]);
            (0..dim).map(|_| rng.sample(StandardNormal)).collect()
        })
        .collect();
    let scores: Vec<f64> = (0..2 * es.pop_pairs)
        .into_par_iter()
        .map(|j| {
            let sign = if j % 2 == 0 { es.sigma } else { -es.sigma };
            let point: Vec<f64> = center
                .iter()
                .zip(&eps[j / 2])
                .map(|(c, e)| c + sign * e)
                .collect();
            objective(&point)
        })
        .collect();
    let ranks = centered_ranks(&scores);
    let step = es.learning_rate / (es.pop_pairs as f64 * es.sigma);
    let mut next = center.to_vec();
    for (k, e) in eps.iter().enumerate() {
        let w = step * (ranks[2 * k] - ranks[2 * k + 1]);
        if w != 0.0 {
            for (c, x) in next.iter_mut().zip(e) {
                *c += w * x;
            }
        }
    }
    EsStep {
        center: next,
        scores,
    }
}

/// Drives one run of one strategy.
pub struct Trainer {
    kind: PipelineKind,
    cfg: TrainConfig,
    seed: u64,
    evaluator: Evaluator,
    reference: Genome,
    state: TrainState,
    audit: Audit,
    started: Instant,
    initial: RunRecord,
    traces: Vec<MadsTrace>,
}

struct Varied {
    individual: Individual,
    audit: Audit,
    trace: Option<Vec<TraceRow>>,
}

/// Evaluation trace of one MADS call, kept when `mads.trace` is set.
#[derive(Debug, Clone)]
pub struct MadsTrace {
    pub generation: usize,
    pub individual: usize,
    pub rows: Vec<TraceRow>,
}

impl Trainer {
    pub fn new(kind: PipelineKind, cfg: TrainConfig, conn: Arc<Connectome>, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let started = Instant::now();
        let reference = match cfg.init_mode {
            InitMode::BiologicalPrior => conn.prior_genome(),
            InitMode::RandomUniform => {
                let mut rng = seed::rng_for(seed, &[stage::INIT]);
                let w: Arc<[f64]> = (0..conn.synapse_count())
                    .map(|_| rng.random_range(cfg.evo.mutation_low..cfg.evo.mutation_high))
                    .collect();
                Genome::from_prior(w)
            }
        };
        let evaluator = Evaluator::new(conn, &cfg, seed)?;
        let mut fit = evaluator.fitness(&reference);
        if kind == PipelineKind::OpenaiEs {
            fit.reg = fit.raw;
        }
        let first = Individual::evaluated(reference.clone(), fit);
        let population = if kind.uses_population() {
            vec![first.clone(); cfg.evo.population_size]
        } else {
            vec![first.clone()]
        };
        let state = TrainState {
            population,
            generation: 0,
            center: (kind == PipelineKind::OpenaiEs).then(|| reference.weights().to_vec()),
            best_ever: first,
            last_mean: fit.raw,
        };
        let mut t = Trainer {
            kind,
            cfg,
            seed,
            evaluator,
            reference,
            state,
            audit: Audit {
                direct_evaluations: 1,
                ..Default::default()
            },
            started,
            initial: RunRecord {
                generation: 0,
                wall_clock_s: 0.0,
                best_fitness: 0.0,
                best_reg_fitness: 0.0,
                mean_fitness: 0.0,
                food_eaten_best: 0,
                l2_best: 0.0,
                l0_best: 0,
                evaluations_cumulative: 0,
            },
            traces: Vec::new(),
        };
        t.initial = t.record();
        Ok(t)
    }

    pub fn kind(&self) -> PipelineKind {
        self.kind
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn audit(&self) -> Audit {
        self.audit
    }

    pub fn evaluator(&self) -> &Evaluator {
        &self.evaluator
    }

    /// The starting genome; distances are measured from it.
    pub fn reference(&self) -> &Genome {
        &self.reference
    }

    pub fn best(&self) -> &Individual {
        &self.state.best_ever
    }

    /// Drains the MADS traces collected since the last call.
    pub fn take_traces(&mut self) -> Vec<MadsTrace> {
        std::mem::take(&mut self.traces)
    }

    /// Progress before any generation ran.
    pub fn initial_record(&self) -> &RunRecord {
        &self.initial
    }

    pub fn elapsed(&self) -> Duration {
        self.started.elapsed()
    }

    /// Runs one generation and reports progress.
    pub fn step(&mut self) -> Result<RunRecord> {
        match self.kind {
            PipelineKind::Renomad | PipelineKind::Menomad | PipelineKind::PureEvo => {
                self.population_generation()?
            }
            PipelineKind::OpenaiEs => self.es_generation()?,
            PipelineKind::Cfnomad => self.cf_generation()?,
        }
        self.state.generation += 1;
        Ok(self.record())
    }

    /// Steps until `budget` is reached, calling `on_record` after each
    /// generation.
    pub fn run(&mut self, budget: &Budget, mut on_record: impl FnMut(&Trainer, &RunRecord) -> Result<()>) -> Result<Vec<RunRecord>> {
        if !budget.is_bounded() {
            return Err(Error::Config("training budget is unbounded".into()));
        }
        let mut out = Vec::new();
        while !budget.reached(self) {
            let r = self.step()?;
            on_record(self, &r)?;
            out.push(r);
        }
        Ok(out)
    }

    fn record(&self) -> RunRecord {
        let best = &self.state.best_ever;
        let fit = best.fitness.expect("best individual is evaluated");
        RunRecord {
            generation: self.state.generation,
            wall_clock_s: self.started.elapsed().as_secs_f64(),
            best_fitness: fit.raw,
            best_reg_fitness: fit.reg,
            mean_fitness: self.state.last_mean,
            food_eaten_best: fit.food_eaten,
            l2_best: best.genome.l2_from_prior(),
            l0_best: best.genome.l0_from_prior(),
            evaluations_cumulative: self.evaluator.evaluations(),
        }
    }

    fn stage_seed(&self, tags: &[u64]) -> u64 {
        let mut path = vec![self.state.generation as u64];
        path.extend_from_slice(tags);
        seed::derive(self.seed, &path)
    }

    fn absorb(&mut self, a: Audit) {
        self.audit.mutate_calls += a.mutate_calls;
        self.audit.mutated_coordinates += a.mutated_coordinates;
        self.audit.crossovers += a.crossovers;
        self.audit.mads_calls += a.mads_calls;
        self.audit.mads_evaluations += a.mads_evaluations;
        self.audit.direct_evaluations += a.direct_evaluations;
    }

    fn consider_best(&mut self, cand: &Individual) {
        if cand.reg_fitness() > self.state.best_ever.reg_fitness() {
            self.state.best_ever = Individual {
                parents: None,
                ..cand.clone()
            };
        }
    }

    /// Optional MADS on `subset`, then the candidate's fitness.
    fn refine(
        &self,
        genome: Genome,
        subset: Option<Vec<usize>>,
        mads_seed: u64,
        audit: &mut Audit,
    ) -> Result<(Individual, Option<Vec<TraceRow>>)> {
        let mut trace = None;
        let (genome, best) = match subset {
            Some(sub) if !sub.is_empty() => {
                let out = optimize_subset(
                    &genome,
                    &sub,
                    &|g: &Genome| self.evaluator.fitness(g),
                    &self.cfg.mads,
                    mads_seed,
                )?;
                audit.mads_calls += 1;
                audit.mads_evaluations += out.evaluations as u64;
                if self.cfg.mads.trace {
                    trace = Some(out.trace);
                }
                (out.genome, out.best)
            }
            _ => (genome, None),
        };
        let fitness = match best {
            Some(f) => f,
            None => {
                audit.direct_evaluations += 1;
                self.evaluator.fitness(&genome)
            }
        };
        Ok((Individual::evaluated(genome, fitness), trace))
    }

    fn vary(&self, i: usize, ind: &Individual) -> Result<Varied> {
        let mut audit = Audit::default();
        let i = i as u64;
        let mads_seed = self.stage_seed(&[i, stage::MADS]);
        let (genome, subset) = match self.kind {
            PipelineKind::Renomad => {
                let mut rng = seed::rng(self.stage_seed(&[i, stage::SUBSET]));
                let k = self.cfg.pipeline.renomad_subset_size.min(ind.genome.len());
                let mut sub = rand::seq::index::sample(&mut rng, ind.genome.len(), k).into_vec();
                sub.sort_unstable();
                (ind.genome.clone(), Some(sub))
            }
            PipelineKind::Menomad | PipelineKind::PureEvo => {
                let count = self.cfg.evo.mutations_per_offspring;
                let (g, picks) = mutate_indices(
                    &ind.genome,
                    count,
                    &self.cfg.evo,
                    self.stage_seed(&[i, stage::MUTATE]),
                )?;
                audit.mutate_calls += 1;
                audit.mutated_coordinates += picks.len() as u64;
                let run = self.kind == PipelineKind::Menomad
                    && g.changed_count() < self.cfg.pipeline.nomad_skip_threshold;
                let sub = run.then(|| g.dirty().iter().copied().collect());
                (g, sub)
            }
            _ => unreachable!("population step for a single-lineage kind"),
        };
        let (individual, trace) = self.refine(genome, subset, mads_seed, &mut audit)?;
        Ok(Varied {
            individual,
            audit,
            trace,
        })
    }

    fn population_generation(&mut self) -> Result<()> {
        let varied: Vec<Varied> = self
            .state
            .population
            .par_iter()
            .enumerate()
            .map(|(i, ind)| self.vary(i, ind))
            .collect::<Result<_>>()?;
        let mut evaluated = Vec::with_capacity(varied.len());
        for (i, v) in varied.into_iter().enumerate() {
            self.absorb(v.audit);
            if let Some(rows) = v.trace {
                self.traces.push(MadsTrace {
                    generation: self.state.generation,
                    individual: i,
                    rows,
                });
            }
            evaluated.push(v.individual);
        }
        let top = ranking(&evaluated)[0];
        self.consider_best(&evaluated[top].clone());
        self.state.last_mean =
            evaluated.iter().map(Individual::raw_fitness).sum::<f64>() / evaluated.len() as f64;
        let (next, crossovers) = breed(&evaluated, &self.cfg.evo, self.stage_seed(&[stage::SELECT]))?;
        self.audit.crossovers += crossovers as u64;
        self.state.population = next;
        Ok(())
    }

    fn es_generation(&mut self) -> Result<()> {
        let center = self.state.center.take().expect("es keeps a center");
        let ev = &self.evaluator;
        let step = es_step(&center, &|w: &[f64]| ev.raw(w).raw, &self.cfg.es, self.stage_seed(&[stage::ES]));
        self.audit.direct_evaluations += step.scores.len() as u64 + 1;
        let fit = self.evaluator.raw(&step.center);
        self.state.last_mean = step.scores.iter().sum::<f64>() / step.scores.len() as f64;
        let genome = Genome::from_weights(self.reference.prior().clone(), step.center.clone())?;
        let ind = Individual::evaluated(genome, fit);
        self.consider_best(&ind);
        self.state.population = vec![ind];
        self.state.center = Some(step.center);
        Ok(())
    }

    fn cf_generation(&mut self) -> Result<()> {
        let p = &self.cfg.pipeline;
        let incumbent = self.state.population[0].clone();
        let mut audit = Audit::default();
        let mutate_now = self.state.generation % p.cf_mutation_cadence == 0;
        let genome = if mutate_now {
            let (g, picks) = mutate_indices(
                &incumbent.genome,
                p.cf_mutations,
                &self.cfg.evo,
                self.stage_seed(&[0, stage::MUTATE]),
            )?;
            audit.mutate_calls += 1;
            audit.mutated_coordinates += picks.len() as u64;
            g
        } else {
            incumbent.genome.clone()
        };
        let subset: Option<Vec<usize>> = (genome.changed_count() < p.nomad_skip_threshold)
            .then(|| genome.dirty().iter().copied().collect());
        let (cand, trace) = self.refine(genome, subset, self.stage_seed(&[0, stage::MADS]), &mut audit)?;
        self.absorb(audit);
        if let Some(rows) = trace {
            self.traces.push(MadsTrace {
                generation: self.state.generation,
                individual: 0,
                rows,
            });
        }
        self.state.last_mean = cand.raw_fitness();
        if cand.reg_fitness() > incumbent.reg_fitness() {
            self.state.population = vec![cand.clone()];
        }
        let inc = self.state.population[0].clone();
        self.consider_best(&inc);
        Ok(())
    }
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub initial: RunRecord,
    pub records: Vec<RunRecord>,
    pub best: Individual,
    pub audit: Audit,
}

/// Runs `kind` from scratch until `budget` is reached.
pub fn train(
    kind: PipelineKind,
    cfg: &TrainConfig,
    conn: Arc<Connectome>,
    seed: u64,
    budget: &Budget,
) -> Result<TrainOutcome> {
    let mut t = Trainer::new(kind, cfg.clone(), conn, seed)?;
    let records = t.run(budget, |_, _| Ok(()))?;
    Ok(TrainOutcome {
        initial: t.initial_record().clone(),
        records,
        best: t.best().clone(),
        audit: t.audit(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connectome::synthetic_connectome;

    fn conn() -> Arc<Connectome> {
        Arc::new(synthetic_connectome(1, 60, 400).unwrap())
    }

    fn small() -> TrainConfig {
        let mut cfg = TrainConfig::default();
        cfg.evo.population_size = 6;
        cfg.env.episode_steps = 60;
        cfg.mads.max_evaluations = Some(30);
        cfg
    }

    #[test]
    fn kind_names_round_trip() {
        for k in PipelineKind::ALL {
            assert_eq!(k.as_str().parse::<PipelineKind>().unwrap(), k);
        }
        assert_eq!("mENOMAD".parse::<PipelineKind>().unwrap(), PipelineKind::Menomad);
        assert!("ga".parse::<PipelineKind>().is_err());
        assert_eq!("random_uniform".parse::<InitMode>().unwrap(), InitMode::RandomUniform);
    }

    #[test]
    fn centered_ranks_examples() {
        assert_eq!(centered_ranks(&[3.0, 1.0, 2.0]), vec![0.5, -0.5, 0.0]);
        assert_eq!(centered_ranks(&[7.0; 4]), vec![0.0; 4]);
        assert_eq!(centered_ranks(&[1.0, 1.0, 2.0]), vec![-0.25, -0.25, 0.5]);
    }

    #[test]
    fn es_flat_objective_does_not_move() {
        let c = vec![1.0, -2.0, 0.5];
        let s = es_step(&c, &|_: &[f64]| 4.0, &EsConfig::default(), 9);
        assert_eq!(s.center, c);
        assert_eq!(s.scores.len(), 32);
    }

    #[test]
    fn es_converges_on_quadratic() {
        let target: Vec<f64> = (0..10).map(|i| i as f64 * 0.3 - 1.0).collect();
        let f = |w: &[f64]| -w.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let es = EsConfig::default();
        let mut c = vec![0.0; 10];
        for g in 0..300 {
            c = es_step(&c, &f, &es, g).center;
        }
        let err = c.iter().zip(&target).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 0.5, "{err}");
    }

    #[test]
    fn es_antithetic_pairs() {
        let seen = std::sync::Mutex::new(Vec::new());
        let f = |w: &[f64]| {
            seen.lock().unwrap().push(w.to_vec());
            0.0
        };
        let es = EsConfig {
            pop_pairs: 3,
            ..Default::default()
        };
        es_step(&[0.0, 0.0], &f, &es, 1);
        let pts = seen.into_inner().unwrap();
        assert_eq!(pts.len(), 6);
        for p in &pts {
            let neg: Vec<f64> = p.iter().map(|x| -x).collect();
            assert!(pts.contains(&neg));
        }
    }

    #[test]
    fn zero_generations_returns_prior() {
        let c = conn();
        let out = train(PipelineKind::Menomad, &small(), c.clone(), 3, &Budget::generations(0)).unwrap();
        assert!(out.records.is_empty());
        assert_eq!(out.best.genome.weights(), &c.prior()[..]);
    }

    #[test]
    fn unbounded_budget_is_rejected() {
        assert!(train(PipelineKind::PureEvo, &small(), conn(), 0, &Budget::default()).is_err());
    }

    #[test]
    fn identical_seeds_reproduce() {
        for k in PipelineKind::ALL {
            let a = train(k, &small(), conn(), 5, &Budget::generations(3)).unwrap();
            let b = train(k, &small(), conn(), 5, &Budget::generations(3)).unwrap();
            let strip = |r: &[RunRecord]| {
                r.iter()
                    .map(|x| (x.best_fitness, x.l2_best, x.l0_best, x.evaluations_cumulative))
                    .collect::<Vec<_>>()
            };
            assert_eq!(strip(&a.records), strip(&b.records), "{k}");
            assert_eq!(a.best.genome, b.best.genome);
        }
    }

    #[test]
    fn evaluations_are_fully_accounted() {
        for k in PipelineKind::ALL {
            let mut t = Trainer::new(k, small(), conn(), 2).unwrap();
            for _ in 0..4 {
                let r = t.step().unwrap();
                let a = t.audit();
                assert_eq!(a.mads_evaluations + a.direct_evaluations, r.evaluations_cumulative, "{k}");
            }
        }
    }

    #[test]
    fn es_spends_two_per_pair_plus_one() {
        let cfg = small();
        let mut t = Trainer::new(PipelineKind::OpenaiEs, cfg.clone(), conn(), 2).unwrap();
        let before = t.evaluator().evaluations();
        t.step().unwrap();
        assert_eq!(t.evaluator().evaluations() - before, 2 * cfg.es.pop_pairs as u64 + 1);
    }

    #[test]
    fn pure_evo_spends_one_per_individual() {
        let cfg = small();
        let mut t = Trainer::new(PipelineKind::PureEvo, cfg.clone(), conn(), 2).unwrap();
        for g in 1..=3 {
            let r = t.step().unwrap();
            assert_eq!(r.evaluations_cumulative, 1 + g * cfg.evo.population_size as u64);
        }
        assert_eq!(t.audit().mads_calls, 0);
        assert_eq!(t.audit().mutated_coordinates, 3 * 5 * 6);
    }

    #[test]
    fn renomad_never_mutates_and_cf_never_crosses() {
        let mut t = Trainer::new(PipelineKind::Renomad, small(), conn(), 2).unwrap();
        t.step().unwrap();
        t.step().unwrap();
        assert_eq!(t.audit().mutate_calls, 0);
        assert_eq!(t.audit().mads_calls, 12);
        let mut t = Trainer::new(PipelineKind::Cfnomad, small(), conn(), 2).unwrap();
        for _ in 0..8 {
            t.step().unwrap();
        }
        assert_eq!(t.audit().crossovers, 0);
        assert_eq!(t.audit().mutate_calls, 2);
        assert_eq!(t.audit().mutated_coordinates, 4);
    }

    #[test]
    fn renomad_without_mads_is_pure_evo_without_mutation() {
        let mut a_cfg = small();
        a_cfg.mads.max_evaluations = Some(0);
        let mut b_cfg = small();
        b_cfg.evo.mutations_per_offspring = 0;
        let mut a = Trainer::new(PipelineKind::Renomad, a_cfg, conn(), 8).unwrap();
        let mut b = Trainer::new(PipelineKind::PureEvo, b_cfg, conn(), 8).unwrap();
        for _ in 0..3 {
            let (ra, rb) = (a.step().unwrap(), b.step().unwrap());
            assert_eq!(ra.best_fitness, rb.best_fitness);
            assert_eq!(ra.evaluations_cumulative, rb.evaluations_cumulative);
            let ga: Vec<_> = a.state().population.iter().map(|i| i.genome.clone()).collect();
            let gb: Vec<_> = b.state().population.iter().map(|i| i.genome.clone()).collect();
            assert_eq!(ga, gb);
        }
    }

    #[test]
    fn menomad_reduced_is_pure_evo() {
        let mut a_cfg = small();
        a_cfg.mads.max_evaluations = Some(0);
        a_cfg.pipeline.nomad_skip_threshold = 0;
        let mut a = Trainer::new(PipelineKind::Menomad, a_cfg, conn(), 4).unwrap();
        let mut b = Trainer::new(PipelineKind::PureEvo, small(), conn(), 4).unwrap();
        for _ in 0..4 {
            assert_eq!(a.step().unwrap().best_fitness, b.step().unwrap().best_fitness);
            let ga: Vec<_> = a.state().population.iter().map(|i| i.genome.clone()).collect();
            let gb: Vec<_> = b.state().population.iter().map(|i| i.genome.clone()).collect();
            assert_eq!(ga, gb);
        }
    }

    #[test]
    fn best_ever_never_decreases() {
        for k in PipelineKind::ALL {
            let mut t = Trainer::new(k, small(), conn(), 6).unwrap();
            let mut last = f64::NEG_INFINITY;
            for _ in 0..5 {
                let r = t.step().unwrap();
                assert!(r.best_reg_fitness >= last, "{k}");
                last = r.best_reg_fitness;
            }
        }
    }

    #[test]
    fn random_init_starts_away_from_the_prior() {
        let c = conn();
        let mut cfg = small();
        cfg.init_mode = InitMode::RandomUniform;
        let t = Trainer::new(PipelineKind::PureEvo, cfg, c.clone(), 1).unwrap();
        assert_ne!(&t.reference().weights()[..], &c.prior()[..]);
        assert_eq!(t.reference().changed_count(), 0);
    }

    #[test]
    fn evaluation_budget_stops_between_generations() {
        let cfg = small();
        let out = train(PipelineKind::PureEvo, &cfg, conn(), 1, &Budget::evaluations(20)).unwrap();
        assert_eq!(out.records.len(), 4);
        assert!(out.records.last().unwrap().evaluations_cumulative >= 20);
    }

    #[test]
    fn wall_clock_budget_stops() {
        let b = Budget {
            wall_clock: Some(Duration::from_millis(50)),
            ..Default::default()
        };
        let start = Instant::now();
        let out = train(PipelineKind::PureEvo, &small(), conn(), 1, &b).unwrap();
        assert!(!out.records.is_empty());
        assert!(start.elapsed() < Duration::from_secs(5));
    }

    #[test]
    fn config_rejects_oversized_subsets() {
        let mut cfg = TrainConfig::default();
        cfg.pipeline.renomad_subset_size = 51;
        assert!(cfg.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }
}
