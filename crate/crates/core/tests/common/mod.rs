#![allow(dead_code)]

use ganjoint::autodiff::{AutodiffError, Graph, NodeId, Tensor};
use ganjoint::nets::{Bound, Mlp, MlpSpec, OutputTransform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
pub const ABS_TOL: f64 = 1e-7;
/// Magnitudes below this are held to [`ABS_TOL`] instead of [`REL_TOL`].
pub const TINY: f64 = ABS_TOL / REL_TOL;
const COORDS_PER_INSTANCE: usize = 40;

/// Randomly shaped network followed by a randomly chosen scalar head.
pub struct GradInstance {
    pub net: Mlp,
    pub side: Mlp,
    pub x: Tensor,
    pub head: usize,
    pub targets: Vec<f64>,
}

pub const N_HEADS: usize = 8;

impl GradInstance {
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = rng.random_range(1..=4);
        let in_dim = rng.random_range(1..=4);
        let depth = rng.random_range(1..=3);
        let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(1..=6)).collect();
        let out_dim = rng.random_range(1..=3);
        let transform = match rng.random_range(0..3) {
            0 => OutputTransform::Identity,
            1 => OutputTransform::TanhScaled(rng.random_range(0.5..2.0)),
            _ => OutputTransform::Sigmoid,
        };
        let net = Mlp::new(MlpSpec::new(in_dim, &hidden, out_dim, transform), &mut rng).unwrap();
        let side = Mlp::new(MlpSpec::new(in_dim, &[3], out_dim, OutputTransform::Identity), &mut rng).unwrap();
        let x = Tensor::matrix(
            rows,
            in_dim,
            (0..rows * in_dim).map(|_| rng.random_range(-1.5..1.5)).collect(),
        );
        let targets = (0..rows * out_dim).map(|_| rng.random_range(0.0..=1.0)).collect();
        let head = rng.random_range(0..N_HEADS);
        Self {
            net,
            side,
            x,
            head,
            targets,
        }
    }

    /// Inputs in graph order: `x`, then every parameter of `net`, then of `side`.
    pub fn inputs(&self) -> Vec<Tensor> {
        let mut v = vec![self.x.clone()];
        v.extend(self.net.params().into_iter().cloned());
        v.extend(self.side.params().into_iter().cloned());
        v
    }

    pub fn build(&self, g: &mut Graph, ids: &[NodeId]) -> Result<NodeId, AutodiffError> {
        let np = self.net.params().len();
        let x = ids[0];
        let y = self.net.forward(g, &Bound(ids[1..1 + np].to_vec()), x)?;
        let z = self.side.forward(g, &Bound(ids[1 + np..].to_vec()), x)?;
        let out_dim = g.value(y).cols();
        match self.head {
            0 => {
                let t = g.constant(Tensor::matrix(g.value(y).rows(), out_dim, self.targets.clone()));
                g.mse(y, t)
            }
            1 => {
                let s = g.add(y, z)?;
                g.bce_with_logits(s, &self.targets)
            }
            2 => {
                let p = g.sigmoid(z);
                let l = g.log(p);
                let m = g.mul(l, y)?;
                Ok(g.mean(m))
            }
            3 => {
                let lo = g.minimum(y, z)?;
                let hi = g.maximum(y, z)?;
                let a = g.scale(lo, 0.75);
                let b = g.scale(hi, 0.25);
                let s = g.add(a, b)?;
                let r = g.mean_rows(s);
                let t = g.tanh(r);
                Ok(g.sum(t))
            }
            4 => {
                let c = g.concat_cols(&[y, x, z])?;
                let cols = g.value(c).cols();
                let s = g.slice_cols(c, 1, cols)?;
                let e = g.clamp(s, -3.0, 3.0);
                let e = g.exp(e);
                let sc = g.sum_cols(e);
                Ok(g.mean(sc))
            }
            5 => {
                let sq = g.mul(z, z)?;
                let p = g.add_scalar(sq, 1.0);
                let r = g.sqrt(p);
                let d = g.sub(r, y)?;
                let n = g.neg(d);
                let l = g.leaky_relu(n, 0.2);
                Ok(g.sum(l))
            }
            6 => {
                let row = g.mean_rows(z);
                let m = g.mul(y, row)?;
                let r = g.relu(m);
                let s = g.add_scalar(r, 0.1);
                let l = g.log(s);
                Ok(g.mean(l))
            }
            _ => {
                let w = g.constant(Tensor::matrix(
                    out_dim,
                    1,
                    (0..out_dim).map(|k| 0.5 - k as f64).collect(),
                ));
                let p = g.matmul(y, w)?;
                let q = g.matmul(z, w)?;
                let pq = g.mul(p, q)?;
                Ok(g.mean(pq))
            }
        }
    }

    fn value_at(&self, inputs: &[Tensor]) -> f64 {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = inputs.iter().map(|t| g.constant(t.clone())).collect();
        let out = self.build(&mut g, &ids).unwrap();
        g.value(out).item()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub checked: usize,
    pub failures: usize,
    pub worst_rel: f64,
}

/// Compares reverse-mode gradients with central differences on a random
/// subset of input coordinates.
pub fn check_instance(seed: u64) -> GradCheck {
    let inst = GradInstance::random(seed);
    let inputs: Vec<Tensor> = inst.inputs().into_iter().map(|t| t.with_grad()).collect();
    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = inst.build(&mut g, &ids).unwrap();
    let grads = g.backward(out).unwrap();
    let analytic: Vec<Vec<f64>> = ids.iter().map(|&id| grads.wrt(id)).collect();

    let mut coords: Vec<(usize, usize)> = inputs
        .iter()
        .enumerate()
        .flat_map(|(i, t)| (0..t.numel()).map(move |j| (i, j)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    while coords.len() > COORDS_PER_INSTANCE {
        let k = rng.random_range(0..coords.len());
        coords.swap_remove(k);
    }
    let mut res = GradCheck {
        checked: 0,
        failures: 0,
        worst_rel: 0.0,
    };
    for (i, j) in coords {
        let mut plus = inputs.clone();
        plus[i].values_mut()[j] += FD_STEP;
        let mut minus = inputs.clone();
        minus[i].values_mut()[j] -= FD_STEP;
        let fd = (inst.value_at(&plus) - inst.value_at(&minus)) / (2.0 * FD_STEP);
        let an = analytic[i][j];
        let abs = (an - fd).abs();
        let mag = an.abs().max(fd.abs());
        res.checked += 1;
        if mag < TINY {
            if abs >= ABS_TOL {
                res.failures += 1;
            }
        } else {
            let rel = abs / mag;
            res.worst_rel = res.worst_rel.max(rel);
            if rel >= REL_TOL {
                res.failures += 1;
            }
        }
    }
    res
}
