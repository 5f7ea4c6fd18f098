//! Population operators: the cardinality regularizer, fitness-proportional
//! parent selection, per-gene crossover, uniform mutation and culling.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::connectome::Genome;
use crate::error::{Error, Result};
use crate::mads::Score;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvoConfig {
    pub population_size: usize,
    pub lambda: f64,
    pub reg_exponent: f64,
    pub mutations_per_offspring: usize,
    pub mutation_low: f64,
    pub mutation_high: f64,
    pub cull_fraction: f64,
}

impl Default for EvoConfig {
    fn default() -> Self {
        EvoConfig {
            population_size: 64,
            lambda: 0.1,
            reg_exponent: 1.3,
            mutations_per_offspring: 5,
            mutation_low: -20.0,
            mutation_high: 20.0,
            cull_fraction: 0.5,
        }
    }
}

impl EvoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("evo: {m}")));
        if self.population_size < 2 || self.population_size % 2 != 0 {
            return bad(format!(
                "population_size must be even and at least 2, got {}",
                self.population_size
            ));
        }
        if !(self.mutation_low < self.mutation_high) {
            return bad("mutation_low must be below mutation_high".into());
        }
        if !(self.lambda >= 0.0) || !(self.reg_exponent > 0.0) {
            return bad("lambda must be >= 0 and reg_exponent > 0".into());
        }
        if !(self.cull_fraction > 0.0 && self.cull_fraction < 1.0) {
            return bad("cull_fraction must lie in (0, 1)".into());
        }
        Ok(())
    }

    /// Number of individuals kept by culling.
    pub fn survivors(&self, n: usize) -> usize {
        ((n as f64 * (1.0 - self.cull_fraction)).ceil() as usize).clamp(1, n.max(1))
    }
}

/// Scores of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fitness {
    pub raw: f64,
    pub reg: f64,
    pub food_eaten: usize,
}

impl Score for Fitness {
    fn value(&self) -> f64 {
        self.reg
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub genome: Genome,
    /// `None` until evaluated; cleared whenever the genome is edited.
    pub fitness: Option<Fitness>,
    /// Indices of the two parents in the previous population, if bred.
    pub parents: Option<(usize, usize)>,
}

impl Individual {
    pub fn new(genome: Genome) -> Self {
        Individual {
            genome,
            fitness: None,
            parents: None,
        }
    }

    pub fn evaluated(genome: Genome, fitness: Fitness) -> Self {
        Individual {
            genome,
            fitness: Some(fitness),
            parents: None,
        }
    }

    pub fn raw_fitness(&self) -> f64 {
        self.fitness.map_or(f64::NAN, |f| f.raw)
    }

    pub fn reg_fitness(&self) -> f64 {
        self.fitness.map_or(f64::NAN, |f| f.reg)
    }
}

/// `−λ·k^exponent` for `k` changed weights.
pub fn penalty(changes: usize, cfg: &EvoConfig) -> f64 {
    if changes == 0 {
        return 0.0;
    }
    -cfg.lambda * (changes as f64).powf(cfg.reg_exponent)
}

pub fn regularizer(genome: &Genome, cfg: &EvoConfig) -> f64 {
    penalty(genome.changed_count(), cfg)
}

/// Normalized selection weights proportional to `reg_fitness`. When any
/// value is not positive, all are shifted by `−min + 1e−9` first.
pub fn selection_probabilities(pop: &[Individual]) -> Result<Vec<f64>> {
    let f: Vec<f64> = pop.iter().map(Individual::reg_fitness).collect();
    probabilities_from(&f)
}

pub fn probabilities_from(f: &[f64]) -> Result<Vec<f64>> {
    if f.is_empty() {
        return Err(Error::Config("selection over an empty population".into()));
    }
    if f.iter().any(|x| !x.is_finite()) {
        return Err(Error::Config("selection needs evaluated, finite fitness".into()));
    }
    let min = f.iter().copied().fold(f64::INFINITY, f64::min);
    let shift = if min <= 0.0 { -min + 1e-9 } else { 0.0 };
    let shifted: Vec<f64> = f.iter().map(|x| x + shift).collect();
    let total: f64 = shifted.iter().sum();
    Ok(shifted.iter().map(|x| x / total).collect())
}

/// Per-coordinate mix of two genomes: each weight comes from `a` with
/// probability `p_c`, otherwise from `b`.
pub fn crossover(a: &Genome, b: &Genome, p_c: f64, rng_seed: u64) -> Result<Genome> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let mut rng = seed::rng(rng_seed);
    let mut child = a.clone();
    for i in 0..a.len() {
        let from_a = rng.random::<f64>() < p_c;
        if !from_a {
            child.set(i, b.get(i));
        }
    }
    Ok(child)
}

/// `p₁/(p₁+p₂)`, or one half when both are zero.
pub fn crossover_probability(p1: f64, p2: f64) -> f64 {
    if p1 + p2 > 0.0 {
        p1 / (p1 + p2)
    } else {
        0.5
    }
}

/// Redraws `count` distinct coordinates from `U(low, high)`.
pub fn mutate(genome: &Genome, count: usize, cfg: &EvoConfig, rng_seed: u64) -> Result<Genome> {
    let (out, _) = mutate_indices(genome, count, cfg, rng_seed)?;
    Ok(out)
}

/// [`mutate`], also returning the chosen coordinates.
pub fn mutate_indices(
    genome: &Genome,
    count: usize,
    cfg: &EvoConfig,
    rng_seed: u64,
) -> Result<(Genome, Vec<usize>)> {
    if count > genome.len() {
        return Err(Error::Config(format!(
            "cannot mutate {count} of {} coordinates",
            genome.len()
        )));
    }
    let mut rng = seed::rng(rng_seed);
    let picks = rand::seq::index::sample(&mut rng, genome.len(), count).into_vec();
    let mut out = genome.clone();
    for &i in &picks {
        out.set(i, rng.random_range(cfg.mutation_low..cfg.mutation_high));
    }
    Ok((out, picks))
}

/// Indices of `pop` ordered by descending `reg_fitness`, ties by index.
pub fn ranking(pop: &[Individual]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pop.len()).collect();
    order.sort_by(|&a, &b| pop[b].reg_fitness().total_cmp(&pop[a].reg_fitness()));
    order
}

/// Culls to the top survivors and refills the population by crossover.
/// Survivors come first, in rank order, keeping their fitness; offspring
/// are unevaluated.
pub fn next_generation(pop: &[Individual], cfg: &EvoConfig, rng_seed: u64) -> Result<Vec<Individual>> {
    Ok(breed(pop, cfg, rng_seed)?.0)
}

/// [`next_generation`], also returning how many crossovers were made.
pub fn breed(
    pop: &[Individual],
    cfg: &EvoConfig,
    rng_seed: u64,
) -> Result<(Vec<Individual>, usize)> {
    let n = pop.len();
    if n == 0 {
        return Err(Error::Config("empty population".into()));
    }
    let keep = cfg.survivors(n);
    let order = ranking(pop);
    let survivors = &order[..keep];
    let probs = probabilities_from(
        &survivors.iter().map(|&i| pop[i].reg_fitness()).collect::<Vec<_>>(),
    )?;
    let mut next: Vec<Individual> = survivors
        .iter()
        .map(|&i| Individual {
            parents: None,
            ..pop[i].clone()
        })
        .collect();
    if keep == n {
        return Ok((next, 0));
    }
    let pick = WeightedIndex::new(&probs).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = seed::rng(rng_seed);
    // Second parent: the selection distribution conditioned on b != a.
    let others: Vec<Option<WeightedIndex<f64>>> = (0..keep)
        .map(|a| {
            let w = probs
                .iter()
                .enumerate()
                .map(|(j, &p)| if j == a { 0.0 } else { p });
            WeightedIndex::new(w).ok()
        })
        .collect();
    let mut crossovers = 0;
    for k in 0..n - keep {
        let a = pick.sample(&mut rng);
        let b = others[a].as_ref().map_or(a, |d| d.sample(&mut rng));
        let (ia, ib) = (survivors[a], survivors[b]);
        let genome = if a == b {
            pop[ia].genome.clone()
        } else {
            crossovers += 1;
            let p_c = crossover_probability(probs[a], probs[b]);
            crossover(&pop[ia].genome, &pop[ib].genome, p_c, seed::derive(rng_seed, &[k as u64]))?
        };
        next.push(Individual {
            genome,
            fitness: None,
            parents: Some((ia, ib)),
        });
    }
    Ok((next, crossovers))
}
