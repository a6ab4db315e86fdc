//! Offline datasets: toy environments, scripted behavior policies, the
//! eight-Gaussian behavior-cloning set, and persistence.

mod eight_gaussian;
mod io;
mod pointnav;

use thiserror::Error;

use crate::autodiff::Tensor;

pub use eight_gaussian::{gen_eight_gaussian, nearest_center, ToyDataset, EIGHT_CENTERS, EIGHT_GAUSSIAN_STD};
pub use io::{load_dataset, read_dataset, save_dataset, write_csv, write_dataset, DATASET_MAGIC, DATASET_VERSION};
pub use pointnav::{random_policy_returns, rollout_behavior, Environment, PointNavEnv, ScriptedMixture};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { found: [u8; 4], expected: [u8; 4] },
    #[error("unsupported format version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("truncated file: needed {needed} bytes, only {available} available")]
    Truncated { needed: usize, available: usize },
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One offline sample `(s, a, r, s', done)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub r: f64,
    pub s_next: Vec<f64>,
    pub done: bool,
}

/// Columnar transition store.
///
/// Columns are kept in `f32` so the binary format round-trips bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineDataset {
    pub state_dim: usize,
    pub action_dim: usize,
    pub max_action: f32,
    states: Vec<f32>,
    actions: Vec<f32>,
    rewards: Vec<f32>,
    next_states: Vec<f32>,
    dones: Vec<bool>,
    pub provenance: String,
}

impl OfflineDataset {
    pub fn new(state_dim: usize, action_dim: usize, max_action: f32) -> Self {
        Self {
            state_dim,
            action_dim,
            max_action,
            states: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            next_states: Vec::new(),
            dones: Vec::new(),
            provenance: String::new(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn from_columns(
        state_dim: usize,
        action_dim: usize,
        max_action: f32,
        states: Vec<f32>,
        actions: Vec<f32>,
        rewards: Vec<f32>,
        next_states: Vec<f32>,
        dones: Vec<bool>,
        provenance: String,
    ) -> Result<Self, DataError> {
        let ds = Self {
            state_dim,
            action_dim,
            max_action,
            states,
            actions,
            rewards,
            next_states,
            dones,
            provenance,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Checks column lengths, action bounds and reward finiteness.
    pub fn validate(&self) -> Result<(), DataError> {
        let n = self.dones.len();
        if self.state_dim == 0 || self.action_dim == 0 {
            return Err(DataError::Invalid("dimensions must be positive".into()));
        }
        if !(self.max_action > 0.0) {
            return Err(DataError::Invalid(format!(
                "max_action must be positive, got {}",
                self.max_action
            )));
        }
        if self.states.len() != n * self.state_dim
            || self.next_states.len() != n * self.state_dim
            || self.actions.len() != n * self.action_dim
            || self.rewards.len() != n
        {
            return Err(DataError::Invalid("column lengths disagree".into()));
        }
        if let Some(a) = self
            .actions
            .iter()
            .find(|a| a.abs() > self.max_action || !a.is_finite())
        {
            return Err(DataError::Invalid(format!(
                "action {a} exceeds max_action {}",
                self.max_action
            )));
        }
        if self.rewards.iter().any(|r| !r.is_finite()) {
            return Err(DataError::Invalid("non-finite reward".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dones.is_empty()
    }

    /// Appends a transition; values are rounded to `f32`.
    pub fn push(&mut self, t: &Transition) -> Result<(), DataError> {
        if t.s.len() != self.state_dim || t.s_next.len() != self.state_dim || t.a.len() != self.action_dim {
            return Err(DataError::Invalid("transition dims do not match dataset".into()));
        }
        if !t.r.is_finite() {
            return Err(DataError::Invalid("non-finite reward".into()));
        }
        if t.a.iter().any(|a| (*a as f32).abs() > self.max_action) {
            return Err(DataError::Invalid("action outside bounds".into()));
        }
        self.states.extend(t.s.iter().map(|&v| v as f32));
        self.actions.extend(t.a.iter().map(|&v| v as f32));
        self.rewards.push(t.r as f32);
        self.next_states.extend(t.s_next.iter().map(|&v| v as f32));
        self.dones.push(t.done);
        Ok(())
    }

    pub fn get(&self, i: usize) -> Transition {
        let (sd, ad) = (self.state_dim, self.action_dim);
        Transition {
            s: self.states[i * sd..(i + 1) * sd].iter().map(|&v| v as f64).collect(),
            a: self.actions[i * ad..(i + 1) * ad].iter().map(|&v| v as f64).collect(),
            r: self.rewards[i] as f64,
            s_next: self.next_states[i * sd..(i + 1) * sd]
                .iter()
                .map(|&v| v as f64)
                .collect(),
            done: self.dones[i],
        }
    }

    pub fn states(&self) -> &[f32] {
        &self.states
    }

    pub fn actions(&self) -> &[f32] {
        &self.actions
    }

    pub fn rewards(&self) -> &[f32] {
        &self.rewards
    }

    pub fn next_states(&self) -> &[f32] {
        &self.next_states
    }

    pub fn dones(&self) -> &[bool] {
        &self.dones
    }

    fn gather(col: &[f32], width: usize, idx: &[usize]) -> Tensor {
        let mut v = Vec::with_capacity(idx.len() * width);
        for &i in idx {
            v.extend(col[i * width..(i + 1) * width].iter().map(|&x| x as f64));
        }
        Tensor::matrix(idx.len(), width, v)
    }

    pub fn states_at(&self, idx: &[usize]) -> Tensor {
        Self::gather(&self.states, self.state_dim, idx)
    }

    pub fn actions_at(&self, idx: &[usize]) -> Tensor {
        Self::gather(&self.actions, self.action_dim, idx)
    }

    pub fn next_states_at(&self, idx: &[usize]) -> Tensor {
        Self::gather(&self.next_states, self.state_dim, idx)
    }

    pub fn rewards_at(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().map(|&i| self.rewards[i] as f64).collect()
    }

    pub fn dones_at(&self, idx: &[usize]) -> Vec<bool> {
        idx.iter().map(|&i| self.dones[i]).collect()
    }

    /// Undiscounted returns of the complete episodes (those ending in `done`).
    pub fn episode_returns(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut acc = 0.0;
        for (r, &d) in self.rewards.iter().zip(&self.dones) {
            acc += *r as f64;
            if d {
                out.push(acc);
                acc = 0.0;
            }
        }
        out
    }

    /// Copy with actions divided by `max_action`, so they lie in `[-1, 1]`.
    pub fn normalized(&self) -> OfflineDataset {
        let m = self.max_action;
        let mut out = self.clone();
        out.max_action = 1.0;
        out.actions.iter_mut().for_each(|a| *a = (*a / m).clamp(-1.0, 1.0));
        out
    }

    /// Mean per-episode return over complete episodes.
    pub fn mean_episode_return(&self) -> Option<f64> {
        let r = self.episode_returns();
        (!r.is_empty()).then(|| r.iter().sum::<f64>() / r.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalized_actions() {
        let mut ds = OfflineDataset::new(2, 1, 0.5);
        ds.push(&tr(0.1, -0.5, false)).unwrap();
        ds.push(&tr(0.2, 0.25, true)).unwrap();
        let n = ds.normalized();
        assert_eq!(n.actions(), &[-1.0, 0.5]);
        assert_eq!(n.max_action, 1.0);
        assert_eq!(n.states(), ds.states());
        n.validate().unwrap();
    }

    fn tr(s: f64, a: f64, done: bool) -> Transition {
        Transition {
            s: vec![s, -s],
            a: vec![a],
            r: 0.5,
            s_next: vec![s + 1.0, -s - 1.0],
            done,
        }
    }

    #[test]
    fn push_get_and_bounds() {
        let mut ds = OfflineDataset::new(2, 1, 1.0);
        ds.push(&tr(0.25, 0.5, false)).unwrap();
        ds.push(&tr(1.25, -1.0, true)).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.get(1), tr(1.25, -1.0, true));
        assert!(ds.push(&tr(0.0, 1.5, false)).is_err());
        assert!(ds.validate().is_ok());
        assert_eq!(ds.episode_returns(), vec![1.0]);
        assert_eq!(ds.states_at(&[1, 0]).values(), &[1.25, -1.25, 0.25, -0.25]);
    }
}
