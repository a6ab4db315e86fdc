//! The joint-matching actor-critic trainer: critic targets with smoothed
//! next states, twin-critic regression, GAN regularization of the actor and
//! the outer training loop.

mod checkpoint;
mod config;
mod train;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::autodiff::{AdamState, AutodiffError, Graph, NodeId, Tensor};
use crate::data::{DataError, OfflineDataset};
use crate::nets::{Actor, Bound, CriticPair, Discriminator, Mlp, NetError};

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use config::{AlphaMode, MatchScheme, TrainConfig, Variant};
pub use train::{
    eval_action, eval_action_by, evaluate_policy, train, train_with, write_metrics_header, write_metrics_row,
    MetricsRow, TrainOutput, EVAL_CANDIDATES, METRICS_HEADER,
};

#[derive(Debug, Error)]
pub enum GanJointError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("non-finite {0} loss")]
    NonFiniteLoss(&'static str),
    #[error("epoch {epoch}, iteration {iteration}: {source}")]
    Aborted {
        epoch: usize,
        iteration: usize,
        #[source]
        source: Box<GanJointError>,
    },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Soft-updated running mean of `|Q|`, starting at 1.
#[derive(Debug, Clone, PartialEq)]
pub struct QAvgTracker {
    pub value: f64,
    pub beta: f64,
}

impl QAvgTracker {
    pub fn new(beta: f64) -> Self {
        Self { value: 1.0, beta }
    }

    pub fn update(&mut self, mean_abs_q: f64) {
        self.value = self.beta * mean_abs_q + (1.0 - self.beta) * self.value;
    }

    /// `alpha / value`.
    pub fn coefficient(&self, alpha: f64) -> f64 {
        alpha / self.value
    }
}

/// Networks, optimizers and running statistics of one training run.
#[derive(Debug, Clone)]
pub struct Agent {
    pub actor: Actor,
    pub critics: CriticPair,
    pub disc: Discriminator,
    pub actor_opt: AdamState,
    pub q1_opt: AdamState,
    pub q2_opt: AdamState,
    pub disc_opt: AdamState,
    pub qavg: QAvgTracker,
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        max_action: f64,
        cfg: &TrainConfig,
        rng: &mut R,
    ) -> Result<Self, GanJointError> {
        cfg.validate()?;
        let actor = Actor::new(cfg.actor_kind, state_dim, action_dim, &cfg.hidden, max_action, rng)?;
        let critics = CriticPair::new(&actor, &cfg.hidden, rng)?;
        let disc = Discriminator::new(state_dim, action_dim, &cfg.hidden, rng)?;
        Ok(Self {
            actor,
            critics,
            disc,
            actor_opt: AdamState::new(cfg.lr_actor_disc, cfg.adam_beta1),
            q1_opt: AdamState::new(cfg.lr_critic, cfg.adam_beta1),
            q2_opt: AdamState::new(cfg.lr_critic, cfg.adam_beta1),
            disc_opt: AdamState::new(cfg.lr_actor_disc, cfg.adam_beta1),
            qavg: QAvgTracker::new(cfg.beta_polyak),
        })
    }
}

/// A mini-batch of dataset rows, widened to `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub states: Tensor,
    pub actions: Tensor,
    pub rewards: Vec<f64>,
    pub next_states: Tensor,
    pub dones: Vec<bool>,
}

impl Batch {
    pub fn from_indices(ds: &OfflineDataset, indices: Vec<usize>) -> Self {
        Self {
            states: ds.states_at(&indices),
            actions: ds.actions_at(&indices),
            rewards: ds.rewards_at(&indices),
            next_states: ds.next_states_at(&indices),
            dones: ds.dones_at(&indices),
            indices,
        }
    }

    /// Uniform sampling with replacement.
    pub fn sample<R: Rng + ?Sized>(ds: &OfflineDataset, size: usize, rng: &mut R) -> Self {
        assert!(!ds.is_empty(), "cannot sample from an empty dataset");
        let idx = (0..size).map(|_| rng.random_range(0..ds.len())).collect();
        Self::from_indices(ds, idx)
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

fn add_gaussian<R: Rng + ?Sized>(t: &mut Tensor, std: f64, rng: &mut R) {
    if std > 0.0 {
        for v in t.values_mut() {
            let e: f64 = StandardNormal.sample(rng);
            *v += std * e;
        }
    }
}

/// Bellman targets: `r` on terminal rows, otherwise `r + gamma` times the
/// mean over `n_smooth` perturbed next states of the clipped double-Q value
/// of one target-actor action each.
pub fn critic_targets<R: Rng + ?Sized>(
    batch: &Batch,
    critics: &CriticPair,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<Vec<f64>, GanJointError> {
    let live: Vec<usize> = (0..batch.len()).filter(|&i| !batch.dones[i]).collect();
    let mut out = batch.rewards.clone();
    if live.is_empty() {
        return Ok(out);
    }
    let n = cfg.n_smooth;
    let mut s_hat = batch.next_states.gather_rows(&live).repeat_rows(n);
    if cfg.smooth_bellman {
        add_gaussian(&mut s_hat, cfg.sigma, rng);
    }
    let a_hat = critics.target_actor.sample(&s_hat, rng)?;
    let (lo, hi) = critics.min_max(&s_hat, &a_hat, true);
    let lam = cfg.lambda_clip;
    for (k, &i) in live.iter().enumerate() {
        let mix: f64 = (k * n..(k + 1) * n).map(|j| lam * lo[j] + (1.0 - lam) * hi[j]).sum();
        out[i] += cfg.gamma * mix / n as f64;
    }
    Ok(out)
}

fn grads_of(g: &Graph, loss: NodeId, bound: &Bound, what: &'static str) -> Result<(f64, Vec<Vec<f64>>), GanJointError> {
    let v = g.value(loss).item();
    if !v.is_finite() {
        return Err(GanJointError::NonFiniteLoss(what));
    }
    let grads = g.backward(loss)?;
    Ok((v, bound.0.iter().map(|&id| grads.wrt(id)).collect()))
}

fn regress(
    net: &mut Mlp,
    opt: &mut AdamState,
    input: &Tensor,
    targets: &[f64],
    what: &'static str,
) -> Result<f64, GanJointError> {
    let mut g = Graph::new();
    let bound = net.bind(&mut g);
    let x = g.constant(input.clone());
    let pred = net.forward(&mut g, &bound, x)?;
    let t = g.constant(Tensor::matrix(targets.len(), 1, targets.to_vec()));
    let loss = g.mse(pred, t)?;
    let (v, grads) = grads_of(&g, loss, &bound, what)?;
    opt.step(&mut net.params_mut(), &grads)?;
    Ok(v)
}

/// One Adam step per critic on the squared error to `targets`.
pub fn critic_update(batch: &Batch, agent: &mut Agent, targets: &[f64]) -> Result<(f64, f64), GanJointError> {
    let sa = Tensor::hcat(&[&batch.states, &batch.actions]);
    let l1 = regress(&mut agent.critics.q1, &mut agent.q1_opt, &sa, targets, "critic1")?;
    let l2 = regress(&mut agent.critics.q2, &mut agent.q2_opt, &sa, targets, "critic2")?;
    Ok((l1, l2))
}

/// Generator sample `x` and data sample `y` for one matching step.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchingSamples {
    pub x_states: Tensor,
    pub x_actions: Tensor,
    /// Dataset rows the x-states were drawn from.
    pub x_indices: Vec<usize>,
    pub y_states: Tensor,
    pub y_actions: Tensor,
}

pub fn make_matching_samples<R: Rng + ?Sized>(
    batch: &Batch,
    ds: &OfflineDataset,
    actor: &Actor,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<MatchingSamples, GanJointError> {
    if batch.is_empty() {
        return Err(GanJointError::Config("matching needs a non-empty batch".into()));
    }
    let (x_states, x_indices) = match cfg.match_scheme {
        MatchScheme::Conditional => (batch.states.clone(), batch.indices.clone()),
        MatchScheme::Joint => {
            let idx: Vec<usize> = (0..batch.len()).map(|_| rng.random_range(0..ds.len())).collect();
            let mut s = ds.states_at(&idx);
            if cfg.smooth_matching {
                add_gaussian(&mut s, cfg.sigma, rng);
            }
            (s, idx)
        }
    };
    let x_actions = actor.sample(&x_states, rng)?;
    Ok(MatchingSamples {
        x_states,
        x_actions,
        x_indices,
        y_states: batch.states.clone(),
        y_actions: batch.actions.clone(),
    })
}

/// Soft labels for data samples, uniform in `[0.8, 1.0]`.
pub fn smoothed_labels<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.8..=1.0)).collect()
}

/// One discriminator step: data rows get smoothed labels, generator rows 0.
pub fn discriminator_update<R: Rng + ?Sized>(
    m: &MatchingSamples,
    disc: &mut Discriminator,
    opt: &mut AdamState,
    rng: &mut R,
) -> Result<f64, GanJointError> {
    let y = Tensor::hcat(&[&m.y_states, &m.y_actions]);
    let x = Tensor::hcat(&[&m.x_states, &m.x_actions]);
    let mut rows = y.values().to_vec();
    rows.extend_from_slice(x.values());
    let input = Tensor::matrix(y.rows() + x.rows(), y.cols(), rows);
    let mut labels = smoothed_labels(y.rows(), rng);
    labels.resize(y.rows() + x.rows(), 0.0);

    let mut g = Graph::new();
    let bound = disc.net.bind(&mut g);
    let inp = g.constant(input);
    let logits = disc.logits_graph(&mut g, &bound, inp)?;
    let loss = g.bce_with_logits(logits, &labels)?;
    let (v, grads) = grads_of(&g, loss, &bound, "discriminator")?;
    opt.step(&mut disc.net.params_mut(), &grads)?;
    Ok(v)
}

/// Loss terms of one actor step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActorStep {
    pub loss: f64,
    pub generator_loss: f64,
    /// Mean `min_j Q_j(s, a)` over batch states and fresh policy actions.
    pub q_mean: f64,
}

/// One actor step on the generator loss `-mean log D(x)`, plus the Q term
/// once the warm start is over.
pub fn actor_update<R: Rng + ?Sized>(
    batch: &Batch,
    x_states: &Tensor,
    agent: &mut Agent,
    cfg: &TrainConfig,
    epoch: usize,
    rng: &mut R,
) -> Result<ActorStep, GanJointError> {
    let mut g = Graph::new();
    let ab = agent.actor.bind(&mut g);
    let db = agent.disc.net.bind_frozen(&mut g);
    let q1b = agent.critics.q1.bind_frozen(&mut g);
    let q2b = agent.critics.q2.bind_frozen(&mut g);

    let xa = agent.actor.sample_graph(&mut g, &ab, x_states, rng)?;
    let xs = g.constant(x_states.clone());
    let x = g.concat_cols(&[xs, xa])?;
    let logits = agent.disc.logits_graph(&mut g, &db, x)?;
    let lg = g.bce_with_logits(logits, &vec![1.0; x_states.rows()])?;

    let a = agent.actor.sample_graph(&mut g, &ab, &batch.states, rng)?;
    let s = g.constant(batch.states.clone());
    let sa = g.concat_cols(&[s, a])?;
    let q1 = agent.critics.q1.forward(&mut g, &q1b, sa)?;
    let q2 = agent.critics.q2.forward(&mut g, &q2b, sa)?;
    let qmin = g.minimum(q1, q2)?;
    let mean_abs = g.value(qmin).values().iter().map(|v| v.abs()).sum::<f64>() / batch.len() as f64;
    agent.qavg.update(mean_abs);
    let q_mean = g.mean(qmin);

    let warm = epoch < cfg.n_warm;
    let loss = match (cfg.alpha_mode, warm) {
        (AlphaMode::Fixed, true) => g.scale(lg, cfg.alpha()),
        (AlphaMode::Adaptive { .. }, true) => lg,
        (AlphaMode::Fixed, false) => {
            let reg = g.scale(lg, cfg.alpha());
            let nq = g.neg(q_mean);
            g.add(nq, reg)?
        }
        (AlphaMode::Adaptive { alpha }, false) => {
            let nq = g.scale(q_mean, -agent.qavg.coefficient(alpha));
            g.add(nq, lg)?
        }
    };
    let generator_loss = g.value(lg).item();
    let q_mean = g.value(q_mean).item();
    let (v, grads) = grads_of(&g, loss, &ab, "actor")?;
    agent.actor_opt.step(&mut agent.actor.net_mut().params_mut(), &grads)?;
    Ok(ActorStep {
        loss: v,
        generator_loss,
        q_mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{rollout_behavior, PointNavEnv, ScriptedMixture, Transition};
    use crate::nets::{Linear, MlpSpec, OutputTransform};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            hidden: vec![8, 8],
            batch_size: 16,
            n_smooth: 4,
            ..TrainConfig::toy()
        }
    }

    fn constant_net(input_dim: usize, value: f64) -> Mlp {
        let spec = MlpSpec::new(input_dim, &[2], 1, OutputTransform::Identity);
        let layers = vec![
            Linear {
                weight: Tensor::zeros(input_dim, 2),
                bias: Tensor::matrix(1, 2, vec![0.0; 2]),
            },
            Linear {
                weight: Tensor::zeros(2, 1),
                bias: Tensor::matrix(1, 1, vec![value]),
            },
        ];
        Mlp::from_layers(spec, layers).unwrap()
    }

    fn tiny_dataset() -> OfflineDataset {
        rollout_behavior(&mut PointNavEnv::new(), &ScriptedMixture::default(), 200, &mut rng(3))
    }

    fn agent(cfg: &TrainConfig) -> Agent {
        Agent::new(2, 2, 0.1, cfg, &mut rng(4)).unwrap()
    }

    #[test]
    fn terminal_rows_use_reward_only() {
        let mut ds = OfflineDataset::new(2, 2, 0.1);
        ds.push(&Transition {
            s: vec![0.0, 0.0],
            a: vec![0.0, 0.0],
            r: 1.0,
            s_next: vec![0.1, 0.1],
            done: true,
        })
        .unwrap();
        let cfg = small_cfg();
        let a = agent(&cfg);
        let t = critic_targets(&Batch::from_indices(&ds, vec![0]), &a.critics, &cfg, &mut rng(0)).unwrap();
        assert_eq!(t, vec![1.0]);
    }

    #[test]
    fn clipped_double_q_closed_form() {
        let mut ds = OfflineDataset::new(2, 2, 0.1);
        ds.push(&Transition {
            s: vec![0.0, 0.0],
            a: vec![0.0, 0.0],
            r: 0.0,
            s_next: vec![0.3, -0.2],
            done: false,
        })
        .unwrap();
        let mut cfg = small_cfg();
        cfg.n_smooth = 1;
        let mut a = agent(&cfg);
        a.critics.target_q1 = constant_net(4, 2.0);
        a.critics.target_q2 = constant_net(4, 1.0);
        let t = critic_targets(&Batch::from_indices(&ds, vec![0]), &a.critics, &cfg, &mut rng(0)).unwrap();
        assert!((t[0] - 1.2375).abs() < 1e-12, "{}", t[0]);

        a.critics.target_q1 = constant_net(4, 3.0);
        a.critics.target_q2 = constant_net(4, 3.0);
        for (sigma, n) in [(0.0, 1), (0.5, 7), (3e-4, 50)] {
            cfg.sigma = sigma;
            cfg.n_smooth = n;
            let t = critic_targets(&Batch::from_indices(&ds, vec![0]), &a.critics, &cfg, &mut rng(1)).unwrap();
            assert!((t[0] - 0.99 * 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn critic_regression_converges_to_reward() {
        let mut ds = OfflineDataset::new(2, 2, 0.1);
        ds.push(&Transition {
            s: vec![0.2, 0.1],
            a: vec![0.05, -0.02],
            r: 0.7,
            s_next: vec![0.25, 0.08],
            done: false,
        })
        .unwrap();
        let mut cfg = small_cfg();
        cfg.gamma = 1e-300;
        cfg.lr_critic = 1e-2;
        let mut a = agent(&cfg);
        a.q1_opt = AdamState::new(1e-2, 0.4);
        a.q2_opt = AdamState::new(1e-2, 0.4);
        let batch = Batch::from_indices(&ds, vec![0]);
        let mut r = rng(5);
        for _ in 0..2000 {
            let t = critic_targets(&batch, &a.critics, &cfg, &mut r).unwrap();
            let (l1, l2) = critic_update(&batch, &mut a, &t).unwrap();
            assert!(l1 >= 0.0 && l2 >= 0.0);
        }
        let q = a
            .critics
            .q1
            .predict(&Tensor::hcat(&[&batch.states, &batch.actions]))
            .item();
        assert!((q - 0.7).abs() < 1e-3, "{q}");
    }

    #[test]
    fn conditional_scheme_shares_states() {
        let ds = tiny_dataset();
        let mut cfg = small_cfg();
        cfg.match_scheme = MatchScheme::Conditional;
        let a = agent(&cfg);
        let mut r = rng(6);
        let batch = Batch::sample(&ds, 16, &mut r);
        let m = make_matching_samples(&batch, &ds, &a.actor, &cfg, &mut r).unwrap();
        let bits = |t: &Tensor| t.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&m.x_states), bits(&m.y_states));
    }

    #[test]
    fn unsmoothed_joint_states_come_from_dataset() {
        let ds = tiny_dataset();
        let mut cfg = small_cfg();
        cfg.sigma = 0.0;
        let a = agent(&cfg);
        let mut r = rng(7);
        let batch = Batch::sample(&ds, 16, &mut r);
        let m = make_matching_samples(&batch, &ds, &a.actor, &cfg, &mut r).unwrap();
        for (i, &k) in m.x_indices.iter().enumerate() {
            assert_eq!(m.x_states.row(i), ds.states_at(&[k]).values());
        }
    }

    #[test]
    fn labels_have_mean_point_nine() {
        let l = smoothed_labels(200_000, &mut rng(8));
        assert!(l.iter().all(|v| (0.8..=1.0).contains(v)));
        let mean = l.iter().sum::<f64>() / l.len() as f64;
        // std of the mean is 0.2 / sqrt(12 n).
        assert!((mean - 0.9).abs() < 5.0 * 0.2 / (12.0 * 200_000.0f64).sqrt());
    }

    #[test]
    fn half_discriminator_has_ln2_loss() {
        let ds = tiny_dataset();
        let cfg = small_cfg();
        let mut a = agent(&cfg);
        let mut net = constant_net(4, 0.0);
        net = Mlp::from_layers(
            MlpSpec::new(4, &[2], 1, OutputTransform::Sigmoid),
            net.layers().to_vec(),
        )
        .unwrap();
        a.disc.net = net;
        let mut r = rng(9);
        let batch = Batch::sample(&ds, 16, &mut r);
        let m = make_matching_samples(&batch, &ds, &a.actor, &cfg, &mut r).unwrap();
        let mut opt = AdamState::new(0.0, 0.5);
        let l = discriminator_update(&m, &mut a.disc, &mut opt, &mut r).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn warm_start_ignores_q() {
        let ds = tiny_dataset();
        let cfg = small_cfg();
        let base = agent(&cfg);
        let mut r = rng(10);
        let batch = Batch::sample(&ds, 16, &mut r);
        let x = make_matching_samples(&batch, &ds, &base.actor, &cfg, &mut r)
            .unwrap()
            .x_states;

        let mut a = base.clone();
        let mut b = base.clone();
        b.critics.q1 = constant_net(4, 0.0);
        b.critics.q2 = Mlp::new(MlpSpec::new(4, &[3], 1, OutputTransform::Identity), &mut rng(99)).unwrap();
        actor_update(&batch, &x, &mut a, &cfg, 0, &mut rng(11)).unwrap();
        actor_update(&batch, &x, &mut b, &cfg, 0, &mut rng(11)).unwrap();
        assert_eq!(a.actor, b.actor);

        let mut a = base.clone();
        let mut b = base.clone();
        b.critics.q2 = constant_net(4, -50.0);
        actor_update(&batch, &x, &mut a, &cfg, cfg.n_warm, &mut rng(11)).unwrap();
        actor_update(&batch, &x, &mut b, &cfg, cfg.n_warm, &mut rng(11)).unwrap();
        assert_ne!(a.actor, b.actor);
    }

    #[test]
    fn adaptive_coefficient() {
        let mut q = QAvgTracker::new(0.005);
        assert_eq!(q.value, 1.0);
        q.value = 5.0;
        assert_eq!(q.coefficient(10.0), 2.0);
        q.update(0.0);
        assert!(q.value >= 0.0);
    }

    #[test]
    fn half_discriminator_generator_loss_is_ln2() {
        let ds = tiny_dataset();
        let cfg = small_cfg();
        let mut a = agent(&cfg);
        a.disc.net = Mlp::from_layers(
            MlpSpec::new(4, &[2], 1, OutputTransform::Sigmoid),
            constant_net(4, 0.0).layers().to_vec(),
        )
        .unwrap();
        let mut r = rng(12);
        let batch = Batch::sample(&ds, 16, &mut r);
        let x = make_matching_samples(&batch, &ds, &a.actor, &cfg, &mut r)
            .unwrap()
            .x_states;
        let step = actor_update(&batch, &x, &mut a, &cfg, 0, &mut r).unwrap();
        assert!((step.generator_loss - std::f64::consts::LN_2).abs() < 1e-12);
    }
}
