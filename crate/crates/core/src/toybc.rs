//! Behavior cloning on the eight-Gaussian data: a CVAE, conditional GANs
//! with implicit or Gaussian generators, and joint-matching GANs.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::autodiff::{AdamState, AutodiffError, Graph, NodeId, Tensor};
use crate::data::{gen_eight_gaussian, nearest_center, ToyDataset, EIGHT_CENTERS, EIGHT_GAUSSIAN_STD};
use crate::nets::{Bound, Linear, LOG_STD_BOUNDS};
use crate::stream_seed;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
pub const DISC_SLOPE: f64 = 0.1;
/// Samples farther than this many data standard deviations from every
/// center count as off-manifold.
pub const MODE_RADIUS_STDS: f64 = 4.0;
/// Minimum share of seen-state samples for a mode to count as covered.
pub const MODE_SHARE_THRESHOLD: f64 = 0.03;

#[derive(Debug, Error)]
pub enum ToyError {
    #[error("unknown toy variant {0:?}")]
    UnknownVariant(String),
    #[error("invalid toy config: {0}")]
    Config(String),
    #[error("non-finite {0} loss")]
    NonFiniteLoss(&'static str),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, ToyError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyVariant {
    Cvae,
    CganCond,
    GcganCond,
    GanJoint,
    GganJoint,
}

impl ToyVariant {
    pub const ALL: [ToyVariant; 5] = [
        ToyVariant::Cvae,
        ToyVariant::CganCond,
        ToyVariant::GcganCond,
        ToyVariant::GanJoint,
        ToyVariant::GganJoint,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ToyVariant::Cvae => "cvae",
            ToyVariant::CganCond => "cgan_cond",
            ToyVariant::GcganCond => "gcgan_cond",
            ToyVariant::GanJoint => "gan_joint",
            ToyVariant::GganJoint => "ggan_joint",
        }
    }

    pub fn default_epochs(self) -> usize {
        match self {
            ToyVariant::Cvae => 1200,
            _ => 2000,
        }
    }

    fn gaussian(self) -> bool {
        matches!(self, ToyVariant::GcganCond | ToyVariant::GganJoint)
    }

    fn joint(self) -> bool {
        matches!(self, ToyVariant::GanJoint | ToyVariant::GganJoint)
    }
}

impl fmt::Display for ToyVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ToyVariant {
    type Err = ToyError;

    fn from_str(s: &str) -> Result<Self> {
        ToyVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| ToyError::UnknownVariant(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyConfig {
    pub variant: ToyVariant,
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden: usize,
    /// Generator noise width, also the CVAE latent width.
    pub latent_dim: usize,
    pub n_train: usize,
    /// Extra test states drawn uniformly from `[-1.5, 1.5]`.
    pub n_test_uniform: usize,
    pub lr_gan: f64,
    pub lr_cvae: f64,
    pub gan_beta1: f64,
    pub seed: u64,
}

impl ToyConfig {
    pub fn new(variant: ToyVariant) -> Self {
        Self {
            variant,
            epochs: variant.default_epochs(),
            batch_size: 100,
            hidden: 100,
            latent_dim: 50,
            n_train: 2000,
            n_test_uniform: 2000,
            lr_gan: 2e-4,
            lr_cvae: 1e-3,
            gan_beta1: 0.5,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 || self.hidden < 2 || self.latent_dim == 0 || self.n_train == 0 {
            return Err(ToyError::Config(format!("sizes too small: {self:?}")));
        }
        if !(self.lr_gan >= 0.0 && self.lr_cvae >= 0.0 && (0.0..1.0).contains(&self.gan_beta1)) {
            return Err(ToyError::Config(
                "learning rates must be non-negative and beta1 in [0, 1)".into(),
            ));
        }
        Ok(())
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("bad value {v:?} for {key}"))
        }
        match key {
            "variant" => {
                self.variant = value.parse().map_err(|e: ToyError| e.to_string())?;
            }
            "epochs" => self.epochs = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "hidden" => self.hidden = num(key, value)?,
            "latent_dim" => self.latent_dim = num(key, value)?,
            "n_train" => self.n_train = num(key, value)?,
            "n_test_uniform" => self.n_test_uniform = num(key, value)?,
            "lr_gan" => self.lr_gan = num(key, value)?,
            "lr_cvae" => self.lr_cvae = num(key, value)?,
            "gan_beta1" => self.gan_beta1 = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            _ => return Err(format!("unknown toy key {key:?}")),
        }
        Ok(())
    }
}

/// Batch normalization over rows with running statistics for inference.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BatchNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            gamma: Tensor::matrix(1, dim, vec![1.0; dim]),
            beta: Tensor::zeros(1, dim),
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
        }
    }

    /// Normalizes with batch statistics and returns them for
    /// [`BatchNorm::track`].
    fn forward_train(&self, g: &mut Graph, gamma: NodeId, beta: NodeId, x: NodeId) -> Result<(NodeId, BatchStats)> {
        let mean = g.mean_rows(x);
        let centered = g.sub(x, mean)?;
        let sq = g.mul(centered, centered)?;
        let var = g.mean_rows(sq);
        let shifted = g.add_scalar(var, BN_EPS);
        let log = g.log(shifted);
        let half = g.scale(log, -0.5);
        let inv_std = g.exp(half);
        let xhat = g.mul(centered, inv_std)?;
        let y = g.mul(xhat, gamma)?;
        let out = g.add(y, beta)?;
        let stats = BatchStats {
            mean: g.value(mean).values().to_vec(),
            var: g.value(var).values().to_vec(),
            n: g.value(x).rows(),
        };
        Ok((out, stats))
    }

    fn forward_eval(&self, g: &mut Graph, gamma: NodeId, beta: NodeId, x: NodeId) -> Result<NodeId> {
        let d = self.running_mean.len();
        let mean = g.constant(Tensor::matrix(1, d, self.running_mean.clone()));
        let inv = g.constant(Tensor::matrix(
            1,
            d,
            self.running_var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect(),
        ));
        let c = g.sub(x, mean)?;
        let xhat = g.mul(c, inv)?;
        let y = g.mul(xhat, gamma)?;
        Ok(g.add(y, beta)?)
    }

    /// Exponential running averages; the variance uses the unbiased estimate.
    pub fn track(&mut self, s: &BatchStats) {
        let unbias = if s.n > 1 { s.n as f64 / (s.n - 1) as f64 } else { 1.0 };
        for (r, m) in self.running_mean.iter_mut().zip(&s.mean) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * m;
        }
        for (r, v) in self.running_var.iter_mut().zip(&s.var) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * v * unbias;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Biased batch variance.
    pub var: Vec<f64>,
    pub n: usize,
}

/// `Linear(in, H) BN ReLU Linear(H, H/2) BN ReLU Linear(H/2, out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BnMlp {
    pub layers: Vec<Linear>,
    pub norms: Vec<BatchNorm>,
}

impl BnMlp {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, output: usize, rng: &mut R) -> Self {
        let h2 = (hidden / 2).max(1);
        Self {
            layers: vec![
                Linear::new(input, hidden, rng),
                Linear::new(hidden, h2, rng),
                Linear::new(h2, output, rng),
            ],
            norms: vec![BatchNorm::new(hidden), BatchNorm::new(h2)],
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            out.push(&l.weight);
            out.push(&l.bias);
            if let Some(n) = self.norms.get(i) {
                out.push(&n.gamma);
                out.push(&n.beta);
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        let mut norms = self.norms.iter_mut();
        for l in self.layers.iter_mut() {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
            if let Some(n) = norms.next() {
                out.push(&mut n.gamma);
                out.push(&mut n.beta);
            }
        }
        out
    }

    pub fn bind(&self, g: &mut Graph) -> Bound {
        Bound(self.params().into_iter().map(|p| g.param(p)).collect())
    }

    /// Forward pass; in training mode also returns each norm's batch stats.
    pub fn forward(&self, g: &mut Graph, bound: &Bound, x: NodeId, train: bool) -> Result<(NodeId, Vec<BatchStats>)> {
        let mut h = x;
        let mut stats = Vec::new();
        let mut k = 0;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(g, bound.0[k], bound.0[k + 1], h)?;
            k += 2;
            if let Some(norm) = self.norms.get(i) {
                let (gamma, beta) = (bound.0[k], bound.0[k + 1]);
                k += 2;
                h = if train {
                    let (out, s) = norm.forward_train(g, gamma, beta, h)?;
                    stats.push(s);
                    out
                } else {
                    norm.forward_eval(g, gamma, beta, h)?
                };
                h = g.relu(h);
            }
        }
        Ok((h, stats))
    }

    pub fn track(&mut self, stats: &[BatchStats]) {
        for (n, s) in self.norms.iter_mut().zip(stats) {
            n.track(s);
        }
    }

    /// Inference with running statistics.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let bound = Bound(self.params().into_iter().map(|p| g.constant(p.clone())).collect());
        let xi = g.constant(x.clone());
        let (out, _) = self.forward(&mut g, &bound, xi, false)?;
        Ok(g.value(out).clone())
    }
}

/// `Linear(2, H) LeakyReLU Linear(H, H/2) LeakyReLU Linear(H/2, 1)`, logits.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyDiscriminator {
    pub layers: Vec<Linear>,
}

impl ToyDiscriminator {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let h2 = (hidden / 2).max(1);
        Self {
            layers: vec![
                Linear::new(input, hidden, rng),
                Linear::new(hidden, h2, rng),
                Linear::new(h2, 1, rng),
            ],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    fn bind(&self, g: &mut Graph, frozen: bool) -> Bound {
        Bound(
            self.layers
                .iter()
                .flat_map(|l| [&l.weight, &l.bias])
                .map(|p| if frozen { g.constant(p.clone()) } else { g.param(p) })
                .collect(),
        )
    }

    pub fn logits(&self, g: &mut Graph, bound: &Bound, x: NodeId) -> Result<NodeId> {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            h = l.forward(g, bound.0[2 * i], bound.0[2 * i + 1], h)?;
            if i < last {
                h = g.leaky_relu(h, DISC_SLOPE);
            }
        }
        Ok(h)
    }
}

fn normal_tensor<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    Tensor::matrix(
        rows,
        cols,
        (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect(),
    )
}

fn column(v: &[f64]) -> Tensor {
    Tensor::matrix(v.len(), 1, v.to_vec())
}

/// A trained conditional sampler of actions given states.
#[derive(Debug, Clone, PartialEq)]
pub enum ToyModel {
    /// Decoder of `(state, z)` with `z ~ N(0, I)`.
    Cvae {
        encoder: BnMlp,
        decoder: BnMlp,
        latent_dim: usize,
    },
    Implicit {
        generator: BnMlp,
        noise_dim: usize,
    },
    /// Emits `[mean, log_std]` per state.
    Gaussian {
        generator: BnMlp,
    },
}

impl ToyModel {
    /// One action per state, in inference mode.
    pub fn sample<R: Rng + ?Sized>(&self, states: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let s = column(states);
        let n = states.len();
        Ok(match self {
            ToyModel::Cvae {
                decoder, latent_dim, ..
            } => {
                let z = normal_tensor(n, *latent_dim, rng);
                decoder.predict(&Tensor::hcat(&[&s, &z]))?.into_values()
            }
            ToyModel::Implicit { generator, noise_dim } => {
                let z = normal_tensor(n, *noise_dim, rng);
                generator.predict(&Tensor::hcat(&[&s, &z]))?.into_values()
            }
            ToyModel::Gaussian { generator } => {
                let out = generator.predict(&s)?;
                (0..n)
                    .map(|i| {
                        let (mean, log_std) = (out.get(i, 0), out.get(i, 1).clamp(LOG_STD_BOUNDS.0, LOG_STD_BOUNDS.1));
                        let e: f64 = StandardNormal.sample(rng);
                        mean + log_std.exp() * e
                    })
                    .collect()
            }
        })
    }
}

/// Generator output on the tape for `states`, plus batch-norm statistics.
fn generate<R: Rng + ?Sized>(
    model: &ToyModel,
    g: &mut Graph,
    bound: &Bound,
    states: &[f64],
    rng: &mut R,
) -> Result<(NodeId, Vec<BatchStats>)> {
    let s = column(states);
    match model {
        ToyModel::Implicit { generator, noise_dim } => {
            let z = normal_tensor(states.len(), *noise_dim, rng);
            let x = g.constant(Tensor::hcat(&[&s, &z]));
            generator.forward(g, bound, x, true)
        }
        ToyModel::Gaussian { generator } => {
            let x = g.constant(s);
            let (out, stats) = generator.forward(g, bound, x, true)?;
            let mean = g.slice_cols(out, 0, 1)?;
            let raw = g.slice_cols(out, 1, 2)?;
            let log_std = g.clamp(raw, LOG_STD_BOUNDS.0, LOG_STD_BOUNDS.1);
            let std = g.exp(log_std);
            let eps = g.constant(normal_tensor(states.len(), 1, rng));
            let noise = g.mul(std, eps)?;
            Ok((g.add(mean, noise)?, stats))
        }
        ToyModel::Cvae { .. } => Err(ToyError::Config("the CVAE is not adversarially trained".into())),
    }
}

fn generator_mut(model: &mut ToyModel) -> &mut BnMlp {
    match model {
        ToyModel::Cvae { decoder, .. } => decoder,
        ToyModel::Implicit { generator, .. } | ToyModel::Gaussian { generator } => generator,
    }
}

/// Per-epoch mean losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyEpoch {
    pub epoch: usize,
    /// Generator loss, or the CVAE objective.
    pub gen_loss: f64,
    /// Discriminator loss; NaN for the CVAE.
    pub disc_loss: f64,
}

#[derive(Debug, Clone)]
pub struct ToyTrained {
    pub model: ToyModel,
    pub history: Vec<ToyEpoch>,
}

fn gather(v: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| v[i]).collect()
}

fn finite(v: f64, what: &'static str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ToyError::NonFiniteLoss(what))
    }
}

/// Fits the configured variant. Each epoch visits the data once in shuffled
/// minibatches; a final short batch is dropped.
pub fn train_toy(data: &ToyDataset, cfg: &ToyConfig) -> Result<ToyTrained> {
    cfg.validate()?;
    if data.len() < cfg.batch_size {
        return Err(ToyError::Config(format!(
            "{} points cannot fill a batch of {}",
            data.len(),
            cfg.batch_size
        )));
    }
    let mut init = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, 1));
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, 2));
    let h = cfg.hidden;
    if cfg.variant == ToyVariant::Cvae {
        return train_cvae(data, cfg, &mut init, &mut rng);
    }
    let mut model = if cfg.variant.gaussian() {
        ToyModel::Gaussian {
            generator: BnMlp::new(1, h, 2, &mut init),
        }
    } else {
        ToyModel::Implicit {
            generator: BnMlp::new(1 + cfg.latent_dim, h, 1, &mut init),
            noise_dim: cfg.latent_dim,
        }
    };
    let mut disc = ToyDiscriminator::new(2, h, &mut init);
    let mut g_opt = AdamState::new(cfg.lr_gan, cfg.gan_beta1);
    let mut d_opt = AdamState::new(cfg.lr_gan, cfg.gan_beta1);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let n_batches = data.len() / cfg.batch_size;
    let ones = vec![1.0; cfg.batch_size];
    let zeros = vec![0.0; cfg.batch_size];
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut gl, mut dl) = (0.0, 0.0);
        for b in 0..n_batches {
            let idx = &order[b * cfg.batch_size..(b + 1) * cfg.batch_size];
            let real_s = gather(&data.states, idx);
            let real_a = gather(&data.actions, idx);
            let fake_s = if cfg.variant.joint() {
                let resampled: Vec<usize> = (0..cfg.batch_size).map(|_| rng.random_range(0..data.len())).collect();
                gather(&data.states, &resampled)
            } else {
                real_s.clone()
            };

            let mut gg = Graph::new();
            let gen = generator_mut(&mut model).clone();
            let g_bound = gen.bind(&mut gg);
            let (fake_a, stats) = generate(&model, &mut gg, &g_bound, &fake_s, &mut rng)?;
            generator_mut(&mut model).track(&stats);
            let fake_vals = gg.value(fake_a).values().to_vec();

            let mut dg = Graph::new();
            let d_bound = disc.bind(&mut dg, false);
            let real = dg.constant(Tensor::hcat(&[&column(&real_s), &column(&real_a)]));
            let fake = dg.constant(Tensor::hcat(&[&column(&fake_s), &column(&fake_vals)]));
            let lr = disc.logits(&mut dg, &d_bound, real)?;
            let lf = disc.logits(&mut dg, &d_bound, fake)?;
            let br = dg.bce_with_logits(lr, &ones)?;
            let bf = dg.bce_with_logits(lf, &zeros)?;
            let d_loss = dg.add(br, bf)?;
            dl += finite(dg.value(d_loss).item(), "discriminator")?;
            let grads = dg.backward(d_loss)?;
            let d_grads: Vec<Vec<f64>> = d_bound.0.iter().map(|&id| grads.wrt(id)).collect();
            d_opt.step(&mut disc.params_mut(), &d_grads)?;

            let frozen = disc.bind(&mut gg, true);
            let s_node = gg.constant(column(&fake_s));
            let pair = gg.concat_cols(&[s_node, fake_a])?;
            let logits = disc.logits(&mut gg, &frozen, pair)?;
            let g_loss = gg.bce_with_logits(logits, &ones)?;
            gl += finite(gg.value(g_loss).item(), "generator")?;
            let grads = gg.backward(g_loss)?;
            let g_grads: Vec<Vec<f64>> = g_bound.0.iter().map(|&id| grads.wrt(id)).collect();
            g_opt.step(&mut generator_mut(&mut model).params_mut(), &g_grads)?;
        }
        history.push(ToyEpoch {
            epoch,
            gen_loss: gl / n_batches as f64,
            disc_loss: dl / n_batches as f64,
        });
    }
    Ok(ToyTrained { model, history })
}

fn train_cvae<R: Rng>(data: &ToyDataset, cfg: &ToyConfig, init: &mut R, rng: &mut R) -> Result<ToyTrained> {
    let (h, l) = (cfg.hidden, cfg.latent_dim);
    let mut encoder = BnMlp::new(2, h, 2 * l, init);
    let mut decoder = BnMlp::new(1 + l, h, 1, init);
    let mut opt = AdamState::new(cfg.lr_cvae, 0.9);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let n_batches = data.len() / cfg.batch_size;
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for b in 0..n_batches {
            let idx = &order[b * cfg.batch_size..(b + 1) * cfg.batch_size];
            let s = column(&gather(&data.states, idx));
            let a = column(&gather(&data.actions, idx));
            let mut g = Graph::new();
            let eb = encoder.bind(&mut g);
            let db = decoder.bind(&mut g);
            let sa = g.constant(Tensor::hcat(&[&s, &a]));
            let (enc, e_stats) = encoder.forward(&mut g, &eb, sa, true)?;
            let mean = g.slice_cols(enc, 0, l)?;
            let raw = g.slice_cols(enc, l, 2 * l)?;
            let log_std = g.clamp(raw, LOG_STD_BOUNDS.0, LOG_STD_BOUNDS.1);
            let std = g.exp(log_std);
            let eps = g.constant(normal_tensor(cfg.batch_size, l, rng));
            let noise = g.mul(std, eps)?;
            let z = g.add(mean, noise)?;
            let s_node = g.constant(s);
            let dec_in = g.concat_cols(&[s_node, z])?;
            let (recon, d_stats) = decoder.forward(&mut g, &db, dec_in, true)?;
            let target = g.constant(a);
            let mse = g.mse(recon, target)?;
            // KL(N(mean, std^2) || N(0, 1)) = -1/2 sum_j (1 + 2 log_std - mean^2 - std^2),
            // summed over latent entries and averaged over the batch.
            let two_ls = g.scale(log_std, 2.0);
            let m2 = g.mul(mean, mean)?;
            let s2 = g.mul(std, std)?;
            let t = g.add_scalar(two_ls, 1.0);
            let t = g.sub(t, m2)?;
            let t = g.sub(t, s2)?;
            let kl_sum = g.sum(t);
            let kl = g.scale(kl_sum, -0.5 / cfg.batch_size as f64);
            let loss = g.add(mse, kl)?;
            total += finite(g.value(loss).item(), "cvae")?;
            let grads = g.backward(loss)?;
            let e_grads: Vec<Vec<f64>> = eb.0.iter().map(|&id| grads.wrt(id)).collect();
            let d_grads: Vec<Vec<f64>> = db.0.iter().map(|&id| grads.wrt(id)).collect();
            let all: Vec<Vec<f64>> = e_grads.into_iter().chain(d_grads).collect();
            encoder.track(&e_stats);
            decoder.track(&d_stats);
            let mut params = encoder.params_mut();
            params.extend(decoder.params_mut());
            opt.step(&mut params, &all)?;
        }
        history.push(ToyEpoch {
            epoch,
            gen_loss: total / n_batches as f64,
            disc_loss: f64::NAN,
        });
    }
    Ok(ToyTrained {
        model: ToyModel::Cvae {
            encoder,
            decoder,
            latent_dim: l,
        },
        history,
    })
}

/// Training states followed by `n_uniform` states uniform in `[-1.5, 1.5]`.
pub fn test_states<R: Rng + ?Sized>(data: &ToyDataset, n_uniform: usize, rng: &mut R) -> Vec<f64> {
    let mut out = data.states.clone();
    out.extend((0..n_uniform).map(|_| rng.random_range(-1.5..=1.5)));
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeReport {
    /// Share of seen-state samples assigned to each center.
    pub shares: [f64; 8],
    pub modes_covered: usize,
    /// Seen-state samples not within the mode radius of any center.
    pub off_manifold_seen: f64,
    /// The same over all test states.
    pub off_manifold_all: f64,
}

/// Assigns each `(state, action)` sample to its nearest center when within
/// [`MODE_RADIUS_STDS`] data standard deviations; the first `n_seen`
/// samples are at training states.
pub fn mode_report(states: &[f64], actions: &[f64], n_seen: usize) -> ModeReport {
    let radius = MODE_RADIUS_STDS * EIGHT_GAUSSIAN_STD;
    let mut counts = [0usize; 8];
    let (mut off_seen, mut off_all) = (0usize, 0usize);
    for (i, (&s, &a)) in states.iter().zip(actions).enumerate() {
        let (k, d) = nearest_center(s, a);
        let on = d <= radius;
        if !on {
            off_all += 1;
        }
        if i < n_seen {
            if on {
                counts[k] += 1;
            } else {
                off_seen += 1;
            }
        }
    }
    let seen = n_seen.min(states.len()).max(1) as f64;
    let shares = counts.map(|c| c as f64 / seen);
    ModeReport {
        shares,
        modes_covered: shares.iter().filter(|&&s| s >= MODE_SHARE_THRESHOLD).count(),
        off_manifold_seen: off_seen as f64 / seen,
        off_manifold_all: off_all as f64 / states.len().max(1) as f64,
    }
}

impl ModeReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "metric,value")?;
        for (k, s) in self.shares.iter().enumerate() {
            let (cx, cy) = EIGHT_CENTERS[k];
            writeln!(w, "share_mode_{k}_{cx:.4}_{cy:.4},{s}")?;
        }
        writeln!(w, "modes_covered,{}", self.modes_covered)?;
        writeln!(w, "off_manifold_seen,{}", self.off_manifold_seen)?;
        writeln!(w, "off_manifold_all,{}", self.off_manifold_all)
    }
}

#[derive(Debug, Clone)]
pub struct ToyRun {
    pub trained: ToyTrained,
    pub states: Vec<f64>,
    pub actions: Vec<f64>,
    pub n_seen: usize,
    pub report: ModeReport,
}

/// Data, training, one sample per test state, and the mode report.
pub fn run_toy(cfg: &ToyConfig) -> Result<ToyRun> {
    let mut data_rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, 0));
    let data = gen_eight_gaussian(cfg.n_train, &mut data_rng);
    let trained = train_toy(&data, cfg)?;
    let mut eval_rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, 3));
    let states = test_states(&data, cfg.n_test_uniform, &mut eval_rng);
    let actions = trained.model.sample(&states, &mut eval_rng)?;
    let report = mode_report(&states, &actions, data.len());
    Ok(ToyRun {
        trained,
        states,
        actions,
        n_seen: data.len(),
        report,
    })
}

pub fn write_samples<W: Write>(mut w: W, run: &ToyRun) -> std::io::Result<()> {
    writeln!(w, "state,action,seen")?;
    for (i, (s, a)) in run.states.iter().zip(&run.actions).enumerate() {
        writeln!(w, "{s},{a},{}", u8::from(i < run.n_seen))?;
    }
    Ok(())
}
