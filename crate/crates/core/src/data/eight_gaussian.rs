use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::OfflineDataset;

const R2: f64 = std::f64::consts::SQRT_2;

/// Mixture centers, `(state, action)`.
pub const EIGHT_CENTERS: [(f64, f64); 8] = [
    (R2, 0.0),
    (-R2, 0.0),
    (0.0, R2),
    (0.0, -R2),
    (1.0, 1.0),
    (1.0, -1.0),
    (-1.0, 1.0),
    (-1.0, -1.0),
];

/// Per-coordinate standard deviation, `sqrt(2e-4)`.
pub const EIGHT_GAUSSIAN_STD: f64 = 0.014_142_135_623_730_95;

/// Behavior-cloning data: `x` is the state and `y` the action.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyDataset {
    pub states: Vec<f64>,
    pub actions: Vec<f64>,
    /// Index into [`EIGHT_CENTERS`] each point was drawn from.
    pub centers: Vec<usize>,
}

impl ToyDataset {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// As an offline dataset with zero rewards and self-loop transitions.
    pub fn to_offline(&self) -> OfflineDataset {
        let max_action = self.actions.iter().fold(R2 as f32, |m, &a| m.max((a as f32).abs()));
        let n = self.len();
        OfflineDataset::from_columns(
            1,
            1,
            max_action,
            self.states.iter().map(|&v| v as f32).collect(),
            self.actions.iter().map(|&v| v as f32).collect(),
            vec![0.0; n],
            self.states.iter().map(|&v| v as f32).collect(),
            vec![true; n],
            "eight-gaussian".into(),
        )
        .expect("columns built consistently")
    }
}

/// Draws `n_total` points, each around a uniformly chosen center with
/// isotropic variance `2e-4`.
pub fn gen_eight_gaussian<R: Rng + ?Sized>(n_total: usize, rng: &mut R) -> ToyDataset {
    assert!(n_total >= 1, "n_total must be positive");
    let noise = Normal::new(0.0, EIGHT_GAUSSIAN_STD).expect("valid std");
    let mut ds = ToyDataset {
        states: Vec::with_capacity(n_total),
        actions: Vec::with_capacity(n_total),
        centers: Vec::with_capacity(n_total),
    };
    while ds.len() < n_total {
        let k = rng.random_range(0..EIGHT_CENTERS.len());
        let (cx, cy) = EIGHT_CENTERS[k];
        ds.states.push(cx + noise.sample(rng));
        ds.actions.push(cy + noise.sample(rng));
        ds.centers.push(k);
    }
    ds
}

/// Index of and Euclidean distance to the closest center.
pub fn nearest_center(x: f64, y: f64) -> (usize, f64) {
    EIGHT_CENTERS
        .iter()
        .enumerate()
        .map(|(i, &(cx, cy))| (i, ((x - cx).powi(2) + (y - cy).powi(2)).sqrt()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty center set")
}
