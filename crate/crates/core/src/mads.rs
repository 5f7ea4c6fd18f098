//! Mesh-adaptive direct search over a chosen subset of genome coordinates.
//!
//! Each iteration polls the incumbent along a randomized orthogonal basis
//! and its negation, plus one composite point that takes the better side of
//! every improving direction. The poll set is evaluated in parallel and the
//! best point is chosen by argmax with ties going to the lowest index, so
//! the result is independent of scheduling.
//!
//! The basis is the integer Householder matrix `H = ‖q‖²·I − 2·q·qᵀ` for a
//! random integer vector `q`. Its columns are mutually orthogonal with norm
//! `‖q‖²`, so with mesh unit `Δ/‖q‖²` every poll offset is an integer vector
//! of mesh units and has length `Δ`.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::connectome::Genome;
use crate::error::{Error, Result};
use crate::seed;

/// What happens to the mesh after an iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MeshPolarity {
    /// Success coarsens the mesh, failure refines it.
    #[default]
    Classic,
    /// Success refines the mesh, failure coarsens it.
    Paper,
}

impl std::str::FromStr for MeshPolarity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classic" => Ok(MeshPolarity::Classic),
            "paper" => Ok(MeshPolarity::Paper),
            _ => Err(Error::Config(format!("unknown mesh polarity `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MadsConfig {
    /// Evaluations per call; `None` means 50 per subset coordinate.
    pub max_evaluations: Option<usize>,
    pub initial_mesh_size: f64,
    pub mesh_refine_factor: f64,
    pub mesh_coarsen_factor: f64,
    pub min_mesh_size: f64,
    pub max_mesh_size: f64,
    pub max_subset: usize,
    pub mesh_polarity: MeshPolarity,
    /// Record one trace row per evaluation.
    pub trace: bool,
}

impl Default for MadsConfig {
    fn default() -> Self {
        MadsConfig {
            max_evaluations: None,
            initial_mesh_size: 1.0,
            mesh_refine_factor: 0.5,
            mesh_coarsen_factor: 2.0,
            min_mesh_size: 1e-3,
            max_mesh_size: 1024.0,
            max_subset: 50,
            mesh_polarity: MeshPolarity::Classic,
            trace: false,
        }
    }
}

impl MadsConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("mads: {m}")));
        if !(self.initial_mesh_size > 0.0) {
            return bad("initial_mesh_size must be positive");
        }
        if !(self.mesh_refine_factor > 0.0 && self.mesh_refine_factor < 1.0) {
            return bad("mesh_refine_factor must lie in (0, 1)");
        }
        if !(self.mesh_coarsen_factor > 1.0) {
            return bad("mesh_coarsen_factor must exceed 1");
        }
        if ((self.mesh_refine_factor * self.mesh_coarsen_factor) - 1.0).abs() > 1e-12 {
            return bad("mesh_coarsen_factor must equal 1 / mesh_refine_factor");
        }
        if !(self.min_mesh_size > 0.0) || self.max_mesh_size < self.initial_mesh_size {
            return bad("need 0 < min_mesh_size and max_mesh_size >= initial_mesh_size");
        }
        Ok(())
    }

    pub fn budget_for(&self, subset_len: usize) -> usize {
        self.max_evaluations.unwrap_or(50 * subset_len)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshState {
    pub incumbent: Vec<f64>,
    pub incumbent_score: f64,
    pub mesh_size: f64,
    pub evaluations_used: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub eval_index: usize,
    pub delta: f64,
    pub score: f64,
    pub improved: bool,
}

/// An objective value. Richer evaluation records can carry extra data
/// alongside the number being maximized.
pub trait Score: Clone + Send {
    fn value(&self) -> f64;
}

impl Score for f64 {
    fn value(&self) -> f64 {
        *self
    }
}

#[derive(Debug, Clone)]
pub struct MadsOutcome<T = f64> {
    pub genome: Genome,
    /// Objective at `genome`; `None` only when nothing was evaluated.
    pub best: Option<T>,
    pub evaluations: usize,
    pub final_mesh_size: f64,
    pub trace: Vec<TraceRow>,
}

impl<T: Score> MadsOutcome<T> {
    pub fn score(&self) -> Option<f64> {
        self.best.as_ref().map(Score::value)
    }
}

pub fn write_trace<W: Write>(mut out: W, rows: &[TraceRow]) -> std::io::Result<()> {
    writeln!(out, "eval_index,delta,score,improved")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.eval_index, r.delta, r.score, r.improved)?;
    }
    Ok(())
}

/// Integer Householder basis for one iteration, returned as columns.
fn basis(dim: usize, rng: &mut impl Rng) -> (Vec<Vec<i64>>, i64) {
    let u: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let scale = 2.0 * (dim as f64).sqrt().max(1.0);
    let mut q: Vec<i64> = u.iter().map(|x| (scale * x / norm).round() as i64).collect();
    if q.iter().all(|&x| x == 0) {
        let j = rng.random_range(0..dim);
        q[j] = 1;
    }
    let qq: i64 = q.iter().map(|x| x * x).sum();
    let cols = (0..dim)
        .map(|j| {
            (0..dim)
                .map(|i| if i == j { qq } else { 0 } - 2 * q[i] * q[j])
                .collect()
        })
        .collect();
    (cols, qq)
}

/// Poll points around the incumbent: `+h₀, −h₀, +h₁, −h₁, …`, each at
/// distance `Δ`. Offsets are integer multiples of the mesh unit `Δ/‖q‖²`.
pub fn poll_points(state: &MeshState, dimension: usize, seed: u64) -> Vec<Vec<f64>> {
    poll_directions(state.mesh_size, dimension, seed)
        .0
        .iter()
        .map(|d| state.incumbent.iter().zip(d).map(|(x, o)| x + o).collect())
        .collect()
}

/// Poll offsets together with the mesh unit they are integer multiples of.
pub fn poll_directions(delta: f64, dimension: usize, seed: u64) -> (Vec<Vec<f64>>, f64) {
    assert!(delta > 0.0, "mesh size must be positive");
    let mut rng = seed::rng(seed);
    let (cols, qq) = basis(dimension, &mut rng);
    let unit = delta / qq as f64;
    let mut dirs = Vec::with_capacity(2 * dimension);
    for col in &cols {
        dirs.push(col.iter().map(|&c| c as f64 * unit).collect());
        dirs.push(col.iter().map(|&c| -(c as f64) * unit).collect());
    }
    (dirs, unit)
}

pub fn update_mesh(state: &MeshState, improved: bool, cfg: &MadsConfig) -> MeshState {
    let grow = match cfg.mesh_polarity {
        MeshPolarity::Classic => improved,
        MeshPolarity::Paper => !improved,
    };
    let factor = if grow {
        cfg.mesh_coarsen_factor
    } else {
        cfg.mesh_refine_factor
    };
    MeshState {
        mesh_size: (state.mesh_size * factor).min(cfg.max_mesh_size),
        ..state.clone()
    }
}

fn check_subset(genome: &Genome, subset: &[usize], cfg: &MadsConfig) -> Result<()> {
    if subset.len() > cfg.max_subset {
        return Err(Error::SubsetTooLarge {
            len: subset.len(),
            max: cfg.max_subset,
        });
    }
    let mut seen = std::collections::HashSet::new();
    for &i in subset {
        if i >= genome.len() || !seen.insert(i) {
            return Err(Error::SubsetIndexOutOfRange {
                index: i,
                len: genome.len(),
            });
        }
    }
    Ok(())
}

/// Maximizes `objective` over the `subset` coordinates of `genome`.
/// The starting point costs one evaluation.
pub fn optimize_subset<F, T>(
    genome: &Genome,
    subset: &[usize],
    objective: &F,
    cfg: &MadsConfig,
    seed: u64,
) -> Result<MadsOutcome<T>>
where
    F: Fn(&Genome) -> T + Sync,
    T: Score,
{
    optimize_subset_scored(genome, None, subset, objective, cfg, seed)
}

/// Like [`optimize_subset`], but takes the objective at `genome` if the
/// caller already knows it, saving that evaluation.
pub fn optimize_subset_scored<F, T>(
    genome: &Genome,
    known_score: Option<T>,
    subset: &[usize],
    objective: &F,
    cfg: &MadsConfig,
    seed: u64,
) -> Result<MadsOutcome<T>>
where
    F: Fn(&Genome) -> T + Sync,
    T: Score,
{
    cfg.validate()?;
    check_subset(genome, subset, cfg)?;
    let budget = cfg.budget_for(subset.len());
    let mut trace = Vec::new();
    let mut evals = 0usize;
    let mut outcome = MadsOutcome {
        genome: genome.clone(),
        best: known_score.clone(),
        evaluations: 0,
        final_mesh_size: cfg.initial_mesh_size,
        trace: Vec::new(),
    };
    if budget == 0 || subset.is_empty() {
        return Ok(outcome);
    }
    let score = match known_score {
        Some(s) => s,
        None => {
            evals += 1;
            let s = objective(genome);
            if cfg.trace {
                trace.push(TraceRow {
                    eval_index: 0,
                    delta: cfg.initial_mesh_size,
                    score: s.value(),
                    improved: false,
                });
            }
            s
        }
    };
    let mut best_record = score.clone();
    let score = score.value();
    let dim = subset.len();
    let mut state = MeshState {
        incumbent: subset.iter().map(|&i| genome.get(i)).collect(),
        incumbent_score: score,
        mesh_size: cfg.initial_mesh_size,
        evaluations_used: evals,
    };
    let mut best = genome.clone();
    let mut iteration = 0u64;
    while state.evaluations_used < budget && state.mesh_size >= cfg.min_mesh_size {
        let (dirs, _) = poll_directions(state.mesh_size, dim, seed::derive(seed, &[iteration]));
        iteration += 1;
        let room = budget - state.evaluations_used;
        let poll: Vec<Vec<f64>> = dirs
            .iter()
            .take(room)
            .map(|d| state.incumbent.iter().zip(d).map(|(x, o)| x + o).collect())
            .collect();
        let candidate = |point: &[f64]| {
            let mut g = best.clone();
            for (&i, &x) in subset.iter().zip(point) {
                g.set(i, x);
            }
            g
        };
        let mut records: Vec<T> = poll.par_iter().map(|p| objective(&candidate(p))).collect();
        let mut scores: Vec<f64> = records.iter().map(Score::value).collect();
        let mut points = poll;

        // Composite point: sum of the better side of each improving basis
        // direction, only when at least two directions improve.
        if points.len() == dirs.len() && state.evaluations_used + points.len() < budget {
            let mut combo = state.incumbent.clone();
            let mut used = 0;
            for j in 0..dim {
                let (p, m) = (scores[2 * j], scores[2 * j + 1]);
                let side = if p >= m { 2 * j } else { 2 * j + 1 };
                if scores[side] > state.incumbent_score {
                    for (c, o) in combo.iter_mut().zip(&dirs[side]) {
                        *c += o;
                    }
                    used += 1;
                }
            }
            if used >= 2 {
                let r = objective(&candidate(&combo));
                scores.push(r.value());
                records.push(r);
                points.push(combo);
            }
        }

        let mut improved = false;
        let mut best_idx = None;
        let mut best_score = state.incumbent_score;
        for (k, &s) in scores.iter().enumerate() {
            if s > best_score {
                best_score = s;
                best_idx = Some(k);
            }
        }
        if cfg.trace {
            let mut running = state.incumbent_score;
            for (k, &s) in scores.iter().enumerate() {
                let up = s > running;
                running = running.max(s);
                trace.push(TraceRow {
                    eval_index: state.evaluations_used + k,
                    delta: state.mesh_size,
                    score: s,
                    improved: up,
                });
            }
        }
        state.evaluations_used += scores.len();
        if let Some(k) = best_idx {
            improved = true;
            state.incumbent = points.swap_remove(k);
            state.incumbent_score = best_score;
            best_record = records.swap_remove(k);
            best = candidate(&state.incumbent);
        }
        state = update_mesh(&state, improved, cfg);
    }
    outcome.genome = best;
    outcome.best = Some(best_record);
    outcome.evaluations = state.evaluations_used;
    outcome.final_mesh_size = state.mesh_size;
    outcome.trace = trace;
    Ok(outcome)
}
