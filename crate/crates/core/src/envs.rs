//! Environments that produce pools of trajectories with feature vectors.
//!
//! Two environments ship with the crate: a deterministic [`Gridworld`] whose
//! trajectories come from rolling out random action sequences, and a
//! [`SyntheticEnv`] that draws feature vectors directly from the unit ball.
//! Both are seeded and fully reproducible.

use std::collections::HashSet;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::{l2_norm, RenderRecord, Trajectory, TrajectorySet};
use crate::error::{Error, Result};
use crate::seed::rng_from;

pub trait Environment {
    fn name(&self) -> &str;

    fn feature_dim(&self) -> usize;

    /// `n` trajectories with ids `0..n`, deterministic in `(self, n, seed)`.
    fn generate_trajectory_set(&self, n: usize, seed: u64) -> Result<TrajectorySet>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
    Stay,
}

impl Action {
    pub const ALL: [Action; 5] = [Action::Up, Action::Down, Action::Left, Action::Right, Action::Stay];

    fn delta(self) -> (i32, i32) {
        match self {
            Action::Up => (0, -1),
            Action::Down => (0, 1),
            Action::Left => (-1, 0),
            Action::Right => (1, 0),
            Action::Stay => (0, 0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Up => "up",
            Action::Down => "down",
            Action::Left => "left",
            Action::Right => "right",
            Action::Stay => "stay",
        }
    }
}

/// A grid position; `x` grows to the right and `y` grows downwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Cell { x, y }
    }

    fn manhattan(self, other: Cell) -> i32 {
        (self.x - other.x).abs() + (self.y - other.y).abs()
    }
}

/// Deterministic grid navigation with four episode features:
///
/// 1. negative number of moves divided by the horizon,
/// 2. negative final Manhattan distance to the goal divided by `width + height`,
/// 3. fraction of steps taken from a cell 4-adjacent to an obstacle,
/// 4. fraction of free cells visited (start and final cell included).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gridworld {
    pub width: i32,
    pub height: i32,
    pub goal: Cell,
    #[serde(default)]
    pub obstacles: Vec<Cell>,
    pub horizon: usize,
    pub start: Cell,
}

impl Gridworld {
    pub const FEATURE_DIM: usize = 4;

    pub fn new(width: i32, height: i32, goal: Cell, obstacles: Vec<Cell>, horizon: usize, start: Cell) -> Result<Self> {
        let g = Gridworld {
            width,
            height,
            goal,
            obstacles,
            horizon,
            start,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 1 || self.height < 1 {
            return Err(Error::param("width/height", "grid must be at least 1x1"));
        }
        if self.horizon < 1 {
            return Err(Error::param("horizon", "must be at least 1"));
        }
        for (name, c) in [("goal", self.goal), ("start", self.start)] {
            if !self.in_bounds(c) {
                return Err(Error::param(name, format!("({}, {}) is outside the grid", c.x, c.y)));
            }
            if self.obstacles.contains(&c) {
                return Err(Error::param(name, format!("({}, {}) is an obstacle", c.x, c.y)));
            }
        }
        if let Some(c) = self.obstacles.iter().find(|c| !self.in_bounds(**c)) {
            return Err(Error::param(
                "obstacles",
                format!("({}, {}) is outside the grid", c.x, c.y),
            ));
        }
        Ok(())
    }

    fn in_bounds(&self, c: Cell) -> bool {
        c.x >= 0 && c.y >= 0 && c.x < self.width && c.y < self.height
    }

    fn is_free(&self, c: Cell) -> bool {
        self.in_bounds(c) && !self.obstacles.contains(&c)
    }

    fn free_cell_count(&self) -> usize {
        let obstacles: HashSet<Cell> = self.obstacles.iter().copied().collect();
        (self.width * self.height) as usize - obstacles.len()
    }

    fn near_obstacle(&self, c: Cell) -> bool {
        [(0, -1), (0, 1), (-1, 0), (1, 0)]
            .iter()
            .any(|(dx, dy)| self.obstacles.contains(&Cell::new(c.x + dx, c.y + dy)))
    }

    pub fn step(&self, from: Cell, action: Action) -> Result<Cell> {
        let (dx, dy) = action.delta();
        let to = Cell::new(from.x + dx, from.y + dy);
        if !self.in_bounds(to) {
            return Err(self.invalid(action, from, "moves off the grid"));
        }
        if self.obstacles.contains(&to) {
            return Err(self.invalid(action, from, "moves into an obstacle"));
        }
        Ok(to)
    }

    fn invalid(&self, action: Action, at: Cell, reason: &str) -> Error {
        Error::InvalidAction {
            action: action.name().to_string(),
            x: at.x,
            y: at.y,
            reason: reason.to_string(),
        }
    }

    /// Features of a visited sequence: `states[t]` is where `actions[t]` was
    /// taken, and `states` holds one more entry for the final cell.
    pub fn features(&self, states: &[Cell], actions: &[Action]) -> Vec<f64> {
        debug_assert_eq!(states.len(), actions.len() + 1);
        let steps = actions.len() as f64;
        let moves = actions.iter().filter(|a| **a != Action::Stay).count() as f64;
        let last = *states.last().expect("at least the start cell");
        let adjacent = states[..actions.len()]
            .iter()
            .filter(|c| self.near_obstacle(**c))
            .count() as f64;
        let distinct: HashSet<Cell> = states.iter().copied().collect();
        vec![
            -moves / self.horizon as f64,
            -f64::from(last.manhattan(self.goal)) / f64::from(self.width + self.height),
            if steps > 0.0 { adjacent / steps } else { 0.0 },
            distinct.len() as f64 / self.free_cell_count() as f64,
        ]
    }

    pub fn rollout(&self, id: usize, start: Cell, actions: &[Action]) -> Result<Trajectory> {
        if actions.is_empty() {
            return Err(Error::EmptySequence);
        }
        if actions.len() > self.horizon {
            return Err(Error::param(
                "actions",
                format!("sequence of {} exceeds horizon {}", actions.len(), self.horizon),
            ));
        }
        if !self.is_free(start) {
            return Err(Error::param(
                "start",
                format!("({}, {}) is not a free cell", start.x, start.y),
            ));
        }
        let mut states = Vec::with_capacity(actions.len() + 1);
        states.push(start);
        let mut render = Vec::with_capacity(actions.len() + 1);
        let mut here = start;
        for &a in actions {
            render.push(RenderRecord {
                x: here.x,
                y: here.y,
                action: Some(a.name().to_string()),
            });
            here = self.step(here, a)?;
            states.push(here);
        }
        render.push(RenderRecord {
            x: here.x,
            y: here.y,
            action: None,
        });
        Ok(Trajectory {
            id,
            features: self.features(&states, actions),
            render: Some(render),
        })
    }

    fn random_actions<R: Rng>(&self, rng: &mut R) -> Vec<Action> {
        let len = rng.random_range(1..=self.horizon);
        let mut here = self.start;
        let mut actions = Vec::with_capacity(len);
        for _ in 0..len {
            let valid: Vec<Action> = Action::ALL
                .into_iter()
                .filter(|a| self.step(here, *a).is_ok())
                .collect();
            let a = valid[rng.random_range(0..valid.len())];
            here = self.step(here, a).expect("filtered to valid actions");
            actions.push(a);
        }
        actions
    }
}

impl Environment for Gridworld {
    fn name(&self) -> &str {
        "gridworld"
    }

    fn feature_dim(&self) -> usize {
        Self::FEATURE_DIM
    }

    fn generate_trajectory_set(&self, n: usize, seed: u64) -> Result<TrajectorySet> {
        check_count(n)?;
        self.validate()?;
        let mut rng = rng_from(seed);
        let trajectories = (0..n)
            .map(|id| {
                let actions = self.random_actions(&mut rng);
                self.rollout(id, self.start, &actions)
            })
            .collect::<Result<Vec<_>>>()?;
        TrajectorySet::new(trajectories)
    }
}

/// Feature vectors drawn uniformly from the `dim`-dimensional unit ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticEnv {
    pub dim: usize,
}

impl SyntheticEnv {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 1 {
            return Err(Error::param("dim", "must be at least 1"));
        }
        Ok(SyntheticEnv { dim })
    }
}

/// Uniform point in the unit ball: Gaussian direction, radius `U^(1/d)`.
pub fn sample_unit_ball<R: Rng>(dim: usize, rng: &mut R) -> Vec<f64> {
    let dir = sample_unit_sphere(dim, rng);
    let u: f64 = rng.random();
    let r = u.powf(1.0 / dim as f64);
    dir.into_iter().map(|v| v * r).collect()
}

/// Uniform point on the unit sphere in `dim` dimensions.
pub fn sample_unit_sphere<R: Rng>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = l2_norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

impl Environment for SyntheticEnv {
    fn name(&self) -> &str {
        "synthetic"
    }

    fn feature_dim(&self) -> usize {
        self.dim
    }

    fn generate_trajectory_set(&self, n: usize, seed: u64) -> Result<TrajectorySet> {
        check_count(n)?;
        if self.dim < 1 {
            return Err(Error::param("dim", "must be at least 1"));
        }
        let mut rng = rng_from(seed);
        let trajectories = (0..n)
            .map(|id| Trajectory::new(id, sample_unit_ball(self.dim, &mut rng)))
            .collect();
        TrajectorySet::new(trajectories)
    }
}

fn check_count(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::param("num_trajectories", format!("need at least 2, got {n}")));
    }
    Ok(())
}

/// Serializable environment choice used by experiment and session configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EnvConfig {
    Synthetic(SyntheticEnv),
    Gridworld(Gridworld),
}

impl EnvConfig {
    pub fn as_env(&self) -> &dyn Environment {
        match self {
            EnvConfig::Synthetic(e) => e,
            EnvConfig::Gridworld(e) => e,
        }
    }

    /// A 5x5 grid with goal in the far corner and a short wall.
    pub fn default_gridworld() -> Self {
        EnvConfig::Gridworld(Gridworld {
            width: 5,
            height: 5,
            goal: Cell::new(4, 4),
            obstacles: vec![Cell::new(2, 1), Cell::new(2, 2), Cell::new(2, 3)],
            horizon: 12,
            start: Cell::new(0, 0),
        })
    }
}

/// Shifts and scales every feature dimension to zero mean and unit
/// (population) variance across the set. Constant dimensions become 0.
pub fn standardize(set: &TrajectorySet) -> Result<TrajectorySet> {
    let n = set.len() as f64;
    let d = set.dim();
    let mut mean = vec![0.0; d];
    for t in set.trajectories() {
        for (m, v) in mean.iter_mut().zip(&t.features) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for t in set.trajectories() {
        for ((s, v), m) in var.iter_mut().zip(&t.features).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std: Vec<f64> = var.iter().map(|s| (s / n).sqrt()).collect();
    let trajectories = set
        .trajectories()
        .iter()
        .map(|t| {
            let features = t
                .features
                .iter()
                .zip(mean.iter().zip(&std))
                .map(|(v, (m, s))| {
                    if *s <= 1e-12 * (1.0 + m.abs()) {
                        0.0
                    } else {
                        (v - m) / s
                    }
                })
                .collect();
            Trajectory {
                id: t.id,
                features,
                render: t.render.clone(),
            }
        })
        .collect();
    TrajectorySet::new(trajectories)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open_grid(n: i32, goal: Cell) -> Gridworld {
        Gridworld::new(n, n, goal, vec![], 8, Cell::new(0, 0)).unwrap()
    }

    #[test]
    fn start_at_goal_without_moving() {
        let g = open_grid(5, Cell::new(0, 0));
        let t = g.rollout(0, Cell::new(0, 0), &[Action::Stay, Action::Stay]).unwrap();
        assert_eq!(t.features[0], 0.0);
        assert_eq!(t.features[1], 0.0);
    }

    #[test]
    fn straight_path_without_obstacles() {
        let g = open_grid(5, Cell::new(4, 0));
        let t = g.rollout(0, Cell::new(0, 0), &[Action::Right; 4]).unwrap();
        assert_eq!(t.features[2], 0.0);
        assert_eq!(t.features[1], 0.0);
        let render = t.render.unwrap();
        assert_eq!(render.len(), 5);
        assert_eq!(
            render[4],
            RenderRecord {
                x: 4,
                y: 0,
                action: None
            }
        );
    }

    #[test]
    fn rollout_errors() {
        let g = Gridworld::new(3, 3, Cell::new(2, 2), vec![Cell::new(1, 0)], 3, Cell::new(0, 0)).unwrap();
        assert_eq!(g.rollout(0, Cell::new(0, 0), &[]).unwrap_err(), Error::EmptySequence);
        assert!(matches!(
            g.rollout(0, Cell::new(0, 0), &[Action::Up]),
            Err(Error::InvalidAction { .. })
        ));
        assert!(matches!(
            g.rollout(0, Cell::new(0, 0), &[Action::Right]),
            Err(Error::InvalidAction { .. })
        ));
        assert!(g.rollout(0, Cell::new(0, 0), &[Action::Stay; 4]).is_err());
    }

    #[test]
    fn generation_requires_two() {
        assert!(SyntheticEnv::new(3).unwrap().generate_trajectory_set(1, 0).is_err());
    }

    #[test]
    fn standardize_two_points() {
        let set = TrajectorySet::new(vec![Trajectory::new(0, vec![0.0]), Trajectory::new(1, vec![2.0])]).unwrap();
        let s = standardize(&set).unwrap();
        assert_eq!(s.trajectories()[0].features, vec![-1.0]);
        assert_eq!(s.trajectories()[1].features, vec![1.0]);
    }

    #[test]
    fn standardize_constant_dimension() {
        let set = TrajectorySet::new(vec![
            Trajectory::new(0, vec![1.0, 5.0]),
            Trajectory::new(1, vec![2.0, 5.0]),
            Trajectory::new(2, vec![3.0, 5.0]),
        ])
        .unwrap();
        let s = standardize(&set).unwrap();
        // mean 2, population std sqrt(2/3)
        let k = (1.5f64).sqrt();
        let expected = [-k, 0.0, k];
        for (t, e) in s.trajectories().iter().zip(expected) {
            assert!((t.features[0] - e).abs() < 1e-12);
            assert_eq!(t.features[1], 0.0);
        }
    }

    #[test]
    fn env_config_json() {
        let cfg: EnvConfig = serde_json::from_str(r#"{"type":"synthetic","dim":3}"#).unwrap();
        assert_eq!(cfg.as_env().feature_dim(), 3);
        assert!(serde_json::from_str::<EnvConfig>(r#"{"type":"synthetic","dim":3,"oops":1}"#).is_err());
        let g = EnvConfig::default_gridworld();
        let back: EnvConfig = serde_json::from_str(&serde_json::to_string(&g).unwrap()).unwrap();
        assert_eq!(back, g);
    }
}
