use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{OfflineDataset, Transition};

/// Minimal episodic environment interface used for evaluation rollouts.
pub trait Environment {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn max_action(&self) -> f64;
    fn reset(&mut self, rng: &mut dyn rand::RngCore) -> Vec<f64>;
    /// Returns `(next_state, reward, done)`.
    fn step(&mut self, action: &[f64]) -> (Vec<f64>, f64, bool);
}

/// 2-D point navigation with four goals at `(±0.8, ±0.8)`.
///
/// Actions are displacements clipped to `[-0.1, 0.1]^2`, positions are
/// clipped to `[-1, 1]^2`. Each step costs `0.01`; entering a goal disk of
/// radius `0.1` pays `+1` and ends the episode. Episodes also end after 100
/// steps. Resets start uniformly in `[-0.2, 0.2]^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointNavEnv {
    pos: [f64; 2],
    t: usize,
}

impl Default for PointNavEnv {
    fn default() -> Self {
        Self::new()
    }
}

impl PointNavEnv {
    pub const GOALS: [[f64; 2]; 4] = [[0.8, 0.8], [0.8, -0.8], [-0.8, 0.8], [-0.8, -0.8]];
    pub const GOAL_RADIUS: f64 = 0.1;
    pub const MAX_ACTION: f64 = 0.1;
    pub const STEP_REWARD: f64 = -0.01;
    pub const GOAL_REWARD: f64 = 1.0;
    pub const HORIZON: usize = 100;
    pub const START_HALF_WIDTH: f64 = 0.2;

    pub fn new() -> Self {
        Self { pos: [0.0, 0.0], t: 0 }
    }

    pub fn position(&self) -> [f64; 2] {
        self.pos
    }

    pub fn at_goal(pos: [f64; 2]) -> bool {
        Self::GOALS
            .iter()
            .any(|g| ((pos[0] - g[0]).powi(2) + (pos[1] - g[1]).powi(2)).sqrt() <= Self::GOAL_RADIUS)
    }
}

impl Environment for PointNavEnv {
    fn state_dim(&self) -> usize {
        2
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn max_action(&self) -> f64 {
        Self::MAX_ACTION
    }

    fn reset(&mut self, rng: &mut dyn rand::RngCore) -> Vec<f64> {
        let w = Self::START_HALF_WIDTH;
        self.pos = [rng.random_range(-w..=w), rng.random_range(-w..=w)];
        self.t = 0;
        self.pos.to_vec()
    }

    fn step(&mut self, action: &[f64]) -> (Vec<f64>, f64, bool) {
        for (p, a) in self.pos.iter_mut().zip(action) {
            let a = if a.is_finite() {
                a.clamp(-Self::MAX_ACTION, Self::MAX_ACTION)
            } else {
                0.0
            };
            *p = (*p + a).clamp(-1.0, 1.0);
        }
        self.t += 1;
        if Self::at_goal(self.pos) {
            (self.pos.to_vec(), Self::GOAL_REWARD, true)
        } else {
            (self.pos.to_vec(), Self::STEP_REWARD, self.t >= Self::HORIZON)
        }
    }
}

/// Per-episode goal choice, then noisy straight-line motion toward it.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedMixture {
    pub speed: f64,
    pub noise_std: f64,
}

impl Default for ScriptedMixture {
    fn default() -> Self {
        Self {
            speed: 0.08,
            noise_std: 0.02,
        }
    }
}

impl ScriptedMixture {
    fn act<R: Rng + ?Sized>(&self, pos: &[f64], goal: [f64; 2], rng: &mut R) -> Vec<f64> {
        let noise = Normal::new(0.0, self.noise_std).expect("valid std");
        let d = [goal[0] - pos[0], goal[1] - pos[1]];
        let norm = (d[0] * d[0] + d[1] * d[1]).sqrt().max(1e-12);
        d.iter()
            .map(|c| {
                (self.speed * c / norm + noise.sample(rng)).clamp(-PointNavEnv::MAX_ACTION, PointNavEnv::MAX_ACTION)
            })
            .collect()
    }
}

/// Rolls the scripted mixture out in rollout order until `n_transitions`
/// rows are recorded.
pub fn rollout_behavior<R: Rng>(
    env: &mut PointNavEnv,
    policy: &ScriptedMixture,
    n_transitions: usize,
    rng: &mut R,
) -> OfflineDataset {
    assert!(n_transitions >= 1, "n_transitions must be positive");
    let mut ds = OfflineDataset::new(2, 2, PointNavEnv::MAX_ACTION as f32);
    ds.provenance = format!(
        "pointnav scripted mixture: uniform goal per episode, speed {}, noise std {}",
        policy.speed, policy.noise_std
    );
    while ds.len() < n_transitions {
        let mut s = env.reset(rng);
        let goal = PointNavEnv::GOALS[rng.random_range(0..PointNavEnv::GOALS.len())];
        loop {
            let a = policy.act(&s, goal, rng);
            let (s_next, r, done) = env.step(&a);
            ds.push(&Transition {
                s: s.clone(),
                a: a.iter().map(|&v| v as f32 as f64).collect(),
                r,
                s_next: s_next.clone(),
                done,
            })
            .expect("scripted transitions respect bounds");
            if done || ds.len() >= n_transitions {
                break;
            }
            s = s_next;
        }
    }
    ds
}

/// Returns of `episodes` uniform-random-action episodes.
pub fn random_policy_returns<E: Environment, R: Rng>(env: &mut E, episodes: usize, rng: &mut R) -> Vec<f64> {
    let m = env.max_action();
    (0..episodes)
        .map(|_| {
            env.reset(rng);
            let mut total = 0.0;
            loop {
                let a: Vec<f64> = (0..env.action_dim()).map(|_| rng.random_range(-m..=m)).collect();
                let (_, r, done) = env.step(&a);
                total += r;
                if done {
                    break total;
                }
            }
        })
        .collect()
}
