//! The 2-D foraging arena and episode evaluation.
//!
//! One environment step is: sense → force sensory neurons → one network
//! update → muscle readout → motor update → reward. The worm starts at the
//! arena centre with a seeded heading, and fitness is the sum of the
//! per-step rewards.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::connectome::{Connectome, NeuronId};
use crate::error::{Error, Result};
use crate::neural_sim::{Drive, NetworkState, SimParams};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotorParams {
    /// Angular gain on the left/right activity difference.
    pub k_a: f64,
    /// Linear gain on the left/right activity sum.
    pub k_l: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl Default for MotorParams {
    fn default() -> Self {
        MotorParams {
            k_a: 0.1,
            k_l: 0.14,
            v_min: 10.7,
            v_max: 21.4,
        }
    }
}

impl MotorParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.v_min && self.v_min < self.v_max) {
            return Err(Error::Config(format!(
                "speed bounds must satisfy 0 < v_min < v_max, got {} and {}",
                self.v_min, self.v_max
            )));
        }
        Ok(())
    }
}

/// Food arrangement of a foraging task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Triangle,
    Square,
    Pentagon,
    Hexagon,
    Heptagon,
    Octagon,
    /// Positions read from `EnvConfig::custom_layout`.
    Custom,
}

impl Task {
    pub const POLYGONS: [Task; 6] = [
        Task::Triangle,
        Task::Square,
        Task::Pentagon,
        Task::Hexagon,
        Task::Heptagon,
        Task::Octagon,
    ];

    pub fn sides(self) -> Option<usize> {
        match self {
            Task::Triangle => Some(3),
            Task::Square => Some(4),
            Task::Pentagon => Some(5),
            Task::Hexagon => Some(6),
            Task::Heptagon => Some(7),
            Task::Octagon => Some(8),
            Task::Custom => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Triangle => "triangle",
            Task::Square => "square",
            Task::Pentagon => "pentagon",
            Task::Hexagon => "hexagon",
            Task::Heptagon => "heptagon",
            Task::Octagon => "octagon",
            Task::Custom => "custom",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::POLYGONS
            .iter()
            .chain(&[Task::Custom])
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown task `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub width: f64,
    pub height: f64,
    pub n_food: usize,
    pub episode_steps: usize,
    /// Food within this distance drives the food sensors and earns partial reward.
    pub detection_range: f64,
    /// Food within this distance is eaten.
    pub consumption_range: f64,
    /// Walls within this distance drive the avoidance sensors.
    pub wall_cutoff: f64,
    pub r_full: f64,
    pub r_partial: f64,
    /// Circumradius of polygon layouts.
    pub polygon_radius: f64,
    pub task: Task,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub custom_layout: Option<PathBuf>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            width: 1600.0,
            height: 1200.0,
            n_food: 36,
            episode_steps: 250,
            detection_range: 150.0,
            consumption_range: 20.0,
            wall_cutoff: 100.0,
            r_full: 30.0,
            r_partial: 1.0 / 30.0,
            polygon_radius: 300.0,
            task: Task::Pentagon,
            custom_layout: None,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.height > 0.0) {
            return Err(Error::Config("arena dimensions must be positive".into()));
        }
        if !(0.0 < self.consumption_range && self.consumption_range < self.detection_range) {
            return Err(Error::Config(
                "consumption_range must be positive and below detection_range".into(),
            ));
        }
        if !(self.wall_cutoff >= 0.0 && self.wall_cutoff < self.width.min(self.height) / 2.0) {
            return Err(Error::Config(
                "wall_cutoff must be below half the arena's smaller side".into(),
            ));
        }
        Ok(())
    }

    pub fn center(&self) -> (f64, f64) {
        (self.width / 2.0, self.height / 2.0)
    }

    pub fn wall_distance(&self, x: f64, y: f64) -> f64 {
        x.min(self.width - x).min(y).min(self.height - y)
    }

    /// Builds the food layout for the configured task.
    pub fn layout(&self) -> Result<FoodLayout> {
        match self.task.sides() {
            Some(n) => polygon_layout(n, self),
            None => {
                let path = self
                    .custom_layout
                    .as_deref()
                    .ok_or_else(|| Error::Config("task `custom` needs custom_layout".into()))?;
                let layout = FoodLayout::load_csv(path)?;
                layout.check(self)?;
                Ok(layout)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoodLayout {
    pub positions: Vec<(f64, f64)>,
}

impl FoodLayout {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Every food must lie strictly inside the arena and farther than the
    /// wall cutoff from each wall.
    pub fn check(&self, cfg: &EnvConfig) -> Result<()> {
        for (i, &(x, y)) in self.positions.iter().enumerate() {
            if !(cfg.wall_distance(x, y) > cfg.wall_cutoff) {
                return Err(Error::Layout(format!(
                    "food {i} at ({x:.3}, {y:.3}) is within {} of a wall",
                    cfg.wall_cutoff
                )));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("food_id,x,y\n");
        for (i, (x, y)) in self.positions.iter().enumerate() {
            out.push_str(&format!("{i},{x},{y}\n"));
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "food_id,x,y")) => {}
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    message: "expected header `food_id,x,y`".into(),
                })
            }
        }
        let mut positions = Vec::new();
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            let parse = |s: &str| -> Result<f64> {
                s.parse().map_err(|_| Error::Parse {
                    line: i + 1,
                    message: format!("invalid number `{s}`"),
                })
            };
            if f.len() != 3 {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "expected 3 fields".into(),
                });
            }
            positions.push((parse(f[1])?, parse(f[2])?));
        }
        Ok(FoodLayout { positions })
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text)
    }
}

/// Spreads `cfg.n_food` points evenly along the perimeter of a regular
/// polygon centred in the arena, starting at the top vertex.
pub fn polygon_layout(n_sides: usize, cfg: &EnvConfig) -> Result<FoodLayout> {
    if !(3..=8).contains(&n_sides) {
        return Err(Error::Layout(format!("polygon needs 3 to 8 sides, got {n_sides}")));
    }
    if cfg.n_food == 0 {
        return Err(Error::Layout("n_food must be positive".into()));
    }
    let (cx, cy) = cfg.center();
    let r = cfg.polygon_radius;
    let vertices: Vec<(f64, f64)> = (0..=n_sides)
        .map(|k| {
            let a = -PI / 2.0 + TAU * (k % n_sides) as f64 / n_sides as f64;
            (cx + r * a.cos(), cy + r * a.sin())
        })
        .collect();
    // Regular polygon: all sides equal, so arc position maps to (side, fraction).
    let per_side = 1.0 / n_sides as f64;
    let positions = (0..cfg.n_food)
        .map(|i| {
            let s = i as f64 / cfg.n_food as f64;
            let side = ((s / per_side).floor() as usize).min(n_sides - 1);
            let frac = (s - side as f64 * per_side) / per_side;
            let (x0, y0) = vertices[side];
            let (x1, y1) = vertices[side + 1];
            (x0 + frac * (x1 - x0), y0 + frac * (y1 - y0))
        })
        .collect();
    let layout = FoodLayout { positions };
    layout
        .check(cfg)
        .map_err(|e| Error::Layout(format!("polygon too large for wall margin: {e}")))?;
    Ok(layout)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WormState {
    pub x: f64,
    pub y: f64,
    /// Heading in radians, kept in `[0, 2π)`.
    pub theta: f64,
}

/// Motor command derived from one muscle readout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotorStep {
    pub state: WormState,
    pub omega: f64,
    pub speed: f64,
}

pub fn motor_update(
    w: WormState,
    a_left: f64,
    a_right: f64,
    p: &MotorParams,
    cfg: &EnvConfig,
) -> MotorStep {
    let omega = p.k_a * (a_left - a_right);
    let v_raw = p.k_l * (a_left + a_right);
    let speed = v_raw.abs().clamp(p.v_min, p.v_max);
    let mut theta = (w.theta + omega).rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if theta >= TAU {
        theta = 0.0;
    }
    let x = (w.x + speed * theta.cos()).clamp(0.0, cfg.width);
    let y = (w.y + speed * theta.sin()).clamp(0.0, cfg.height);
    MotorStep {
        state: WormState { x, y, theta },
        omega,
        speed,
    }
}

/// Which sensory groups fire at the worm's current position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Senses {
    pub food: bool,
    pub wall: bool,
}

pub fn sense(w: &WormState, food: &FoodLayout, remaining: &[bool], cfg: &EnvConfig) -> Senses {
    let food_near = food
        .positions
        .iter()
        .zip(remaining)
        .any(|(&(fx, fy), &left)| left && (w.x - fx).hypot(w.y - fy) < cfg.detection_range);
    Senses {
        food: food_near,
        wall: cfg.wall_distance(w.x, w.y) < cfg.wall_cutoff,
    }
}

/// Neuron set driven by `senses`: food sensors, avoidance sensors, or both.
pub fn sensory_neurons(senses: Senses, conn: &Connectome) -> Vec<NeuronId> {
    let mut ids = Vec::new();
    if senses.food {
        ids.extend_from_slice(conn.food_sensors());
    }
    if senses.wall {
        ids.extend_from_slice(conn.avoid_sensors());
    }
    ids
}

/// Reward contributed by one food at distance `d`, and whether it is eaten.
pub fn food_reward(d: f64, cfg: &EnvConfig) -> (f64, bool) {
    if d < cfg.consumption_range {
        (cfg.r_full, true)
    } else if d < cfg.detection_range {
        (cfg.r_partial * ((cfg.detection_range - d) / cfg.detection_range).max(0.0), false)
    } else {
        (0.0, false)
    }
}

/// Scores the worm's position against every remaining food, removing the
/// eaten ones. Returns the step reward and the eaten indices in ascending order.
pub fn reward(w: &WormState, food: &FoodLayout, remaining: &mut [bool], cfg: &EnvConfig) -> (f64, Vec<usize>) {
    let mut r = 0.0;
    let mut eaten = Vec::new();
    for (i, &(fx, fy)) in food.positions.iter().enumerate() {
        if !remaining[i] {
            continue;
        }
        let (gain, ate) = food_reward((w.x - fx).hypot(w.y - fy), cfg);
        r += gain;
        if ate {
            remaining[i] = false;
            eaten.push(i);
        }
    }
    (r, eaten)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub t: usize,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    /// Reward earned on arriving at this point (0 for `t = 0`).
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub fitness: f64,
    pub food_eaten: usize,
    pub trajectory: Vec<TrajectoryPoint>,
    pub reward_series: Vec<f64>,
    /// `(food index, step)` for every consumption.
    pub eaten: Vec<(usize, usize)>,
}

impl EpisodeResult {
    pub fn trajectory_csv(&self) -> String {
        let mut out = String::from("t,x,y,theta,reward\n");
        for p in &self.trajectory {
            out.push_str(&format!("{},{},{},{},{}\n", p.t, p.x, p.y, p.theta, p.reward));
        }
        out
    }

    pub fn eaten_csv(&self) -> String {
        let mut out = String::from("food_id,t\n");
        for (f, t) in &self.eaten {
            out.push_str(&format!("{f},{t}\n"));
        }
        out
    }
}

/// Initial heading for an episode seed.
pub fn initial_heading(seed: u64) -> f64 {
    seed::rng_for(seed, &[seed::stage::EPISODE]).random_range(0.0..TAU)
}

/// Everything an episode needs besides the genome.
#[derive(Debug, Clone)]
pub struct Arena<'a> {
    pub conn: &'a Connectome,
    pub env: &'a EnvConfig,
    pub layout: &'a FoodLayout,
    pub motor: &'a MotorParams,
    pub sim: &'a SimParams,
}

/// Runs one full episode. `observer` sees the network after every update.
pub fn run_episode(
    weights: &[f64],
    arena: &Arena<'_>,
    seed: u64,
    mut observer: Option<&mut dyn FnMut(usize, &NetworkState)>,
) -> Result<EpisodeResult> {
    let Arena {
        conn,
        env,
        layout,
        motor,
        sim,
    } = *arena;
    if weights.len() != conn.synapse_count() {
        return Err(Error::DimensionMismatch {
            expected: conn.synapse_count(),
            actual: weights.len(),
        });
    }
    let (cx, cy) = env.center();
    let mut worm = WormState {
        x: cx,
        y: cy,
        theta: initial_heading(seed),
    };
    let mut net = NetworkState::reset(conn);
    let drive = Drive::new(weights, conn);
    let mut remaining = vec![true; layout.len()];
    let mut trajectory = Vec::with_capacity(env.episode_steps + 1);
    let mut reward_series = Vec::with_capacity(env.episode_steps);
    let mut eaten_log = Vec::new();
    trajectory.push(TrajectoryPoint {
        t: 0,
        x: worm.x,
        y: worm.y,
        theta: worm.theta,
        reward: 0.0,
    });
    for t in 1..=env.episode_steps {
        let senses = sense(&worm, layout, &remaining, env);
        if senses.food {
            net.force_unchecked(conn.food_sensors());
        }
        if senses.wall {
            net.force_unchecked(conn.avoid_sensors());
        }
        net.step_drive(&drive, conn, sim.fire_threshold);
        if let Some(obs) = observer.as_deref_mut() {
            obs(t, &net);
        }
        let (a_left, a_right) = net.muscle_activity(conn);
        worm = motor_update(worm, a_left, a_right, motor, env).state;
        let (r, eaten) = reward(&worm, layout, &mut remaining, env);
        eaten_log.extend(eaten.into_iter().map(|f| (f, t)));
        reward_series.push(r);
        trajectory.push(TrajectoryPoint {
            t,
            x: worm.x,
            y: worm.y,
            theta: worm.theta,
            reward: r,
        });
    }
    Ok(EpisodeResult {
        fitness: reward_series.iter().sum(),
        food_eaten: eaten_log.len(),
        trajectory,
        reward_series,
        eaten: eaten_log,
    })
}
