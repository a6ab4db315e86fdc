use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    actor_update, critic_targets, critic_update, discriminator_update, make_matching_samples, Agent, Batch,
    GanJointError, TrainConfig,
};
use crate::autodiff::Tensor;
use crate::data::{Environment, OfflineDataset};
use crate::nets::{Actor, Mlp};
use crate::stream_seed;

/// Candidate actions drawn per evaluation step.
pub const EVAL_CANDIDATES: usize = 10;

pub const METRICS_HEADER: &str =
    "epoch,critic1_loss,critic2_loss,actor_loss,disc_loss,q_avg,eval_return_mean,eval_return_std";

/// One per-epoch metrics line. Losses are epoch means; `actor_loss` is NaN
/// for epochs without an actor step, eval columns NaN without an environment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    pub critic1_loss: f64,
    pub critic2_loss: f64,
    pub actor_loss: f64,
    pub disc_loss: f64,
    pub q_avg: f64,
    pub eval_return_mean: f64,
    pub eval_return_std: f64,
}

pub fn write_metrics_header<W: Write>(mut w: W) -> std::io::Result<()> {
    writeln!(w, "{METRICS_HEADER}")
}

pub fn write_metrics_row<W: Write>(mut w: W, r: &MetricsRow) -> std::io::Result<()> {
    writeln!(
        w,
        "{},{},{},{},{},{},{},{}",
        r.epoch,
        r.critic1_loss,
        r.critic2_loss,
        r.actor_loss,
        r.disc_loss,
        r.q_avg,
        r.eval_return_mean,
        r.eval_return_std
    )
}

/// Samples [`EVAL_CANDIDATES`] actions and returns the one `q1` rates
/// highest, preferring the earliest on ties.
pub fn eval_action<R: Rng + ?Sized>(
    state: &[f64],
    actor: &Actor,
    q1: &Mlp,
    rng: &mut R,
) -> Result<Vec<f64>, GanJointError> {
    eval_action_by(
        state,
        actor,
        |s, a| q1.predict(&Tensor::hcat(&[s, a])).into_values(),
        rng,
    )
}

/// [`eval_action`] with an arbitrary scoring of `(states, candidates)`.
pub fn eval_action_by<R, F>(state: &[f64], actor: &Actor, score: F, rng: &mut R) -> Result<Vec<f64>, GanJointError>
where
    R: Rng + ?Sized,
    F: FnOnce(&Tensor, &Tensor) -> Vec<f64>,
{
    let s = Tensor::matrix(1, state.len(), state.to_vec()).repeat_rows(EVAL_CANDIDATES);
    let a = actor.sample(&s, rng)?;
    let q = score(&s, &a);
    let mut best = 0;
    for (i, &v) in q.iter().enumerate() {
        if v > q[best] {
            best = i;
        }
    }
    Ok(a.row(best).to_vec())
}

/// Undiscounted returns of `episodes` greedy-candidate rollouts. Actions
/// are mapped from the actor's range onto the environment's.
pub fn evaluate_policy<E: Environment + ?Sized, R: Rng>(
    env: &mut E,
    actor: &Actor,
    q1: &Mlp,
    episodes: usize,
    rng: &mut R,
) -> Result<Vec<f64>, GanJointError> {
    let scale = env.max_action() / actor.max_action();
    let mut out = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut s = env.reset(rng);
        let mut total = 0.0;
        loop {
            let mut a = eval_action(&s, actor, q1, rng)?;
            a.iter_mut().for_each(|v| *v *= scale);
            let (next, r, done) = env.step(&a);
            total += r;
            if done {
                break;
            }
            s = next;
        }
        out.push(total);
    }
    Ok(out)
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64;
    (m, var.sqrt())
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub agent: Agent,
    pub metrics: Vec<MetricsRow>,
    /// Actor steps taken in each epoch.
    pub actor_steps: Vec<usize>,
}

/// [`train_with`] without a per-epoch callback.
pub fn train(
    ds: &OfflineDataset,
    cfg: &TrainConfig,
    env: Option<&mut dyn Environment>,
) -> Result<TrainOutput, GanJointError> {
    train_with(ds, cfg, env, |_| Ok(()))
}

/// Runs the full schedule, calling `on_epoch` after each metrics row.
///
/// Networks work on actions divided by the dataset's `max_action`;
/// evaluation scales them back. Streams: network init, training and
/// evaluation draw from independent generators derived from `cfg.seed`.
pub fn train_with<F>(
    ds: &OfflineDataset,
    cfg: &TrainConfig,
    mut env: Option<&mut dyn Environment>,
    mut on_epoch: F,
) -> Result<TrainOutput, GanJointError>
where
    F: FnMut(&MetricsRow) -> Result<(), GanJointError>,
{
    cfg.validate()?;
    ds.validate()?;
    if ds.is_empty() {
        return Err(GanJointError::Config("empty dataset".into()));
    }
    if let Some(e) = env.as_deref() {
        if e.state_dim() != ds.state_dim || e.action_dim() != ds.action_dim {
            return Err(GanJointError::Config(format!(
                "environment dims ({}, {}) differ from dataset ({}, {})",
                e.state_dim(),
                e.action_dim(),
                ds.state_dim,
                ds.action_dim
            )));
        }
    }
    let mut init_rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, 1));
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, 2));
    let mut eval_rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, 3));
    let ds = &ds.normalized();
    let mut agent = Agent::new(ds.state_dim, ds.action_dim, 1.0, cfg, &mut init_rng)?;

    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut actor_steps = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let (mut c1, mut c2, mut al, mut dl) = (0.0, 0.0, 0.0, 0.0);
        let mut n_actor = 0;
        for it in 0..cfg.iters_per_epoch {
            let mut step = || -> Result<(), GanJointError> {
                let batch = Batch::sample(ds, cfg.batch_size, &mut rng);
                let targets = critic_targets(&batch, &agent.critics, cfg, &mut rng)?;
                let (l1, l2) = critic_update(&batch, &mut agent, &targets)?;
                c1 += l1;
                c2 += l2;
                let mut m = make_matching_samples(&batch, ds, &agent.actor, cfg, &mut rng)?;
                if (it + 1) % cfg.policy_freq == 0 {
                    al += actor_update(&batch, &m.x_states, &mut agent, cfg, epoch, &mut rng)?.loss;
                    n_actor += 1;
                }
                m.x_actions = agent.actor.sample(&m.x_states, &mut rng)?;
                dl += discriminator_update(&m, &mut agent.disc, &mut agent.disc_opt, &mut rng)?;
                agent.critics.soft_update_targets(&agent.actor, cfg.beta_polyak)?;
                Ok(())
            };
            step().map_err(|e| GanJointError::Aborted {
                epoch,
                iteration: it,
                source: Box::new(e),
            })?;
        }
        let iters = cfg.iters_per_epoch.max(1) as f64;
        let (eval_mean, eval_std) = match env.as_deref_mut() {
            Some(e) => mean_std(&evaluate_policy(
                e,
                &agent.actor,
                &agent.critics.q1,
                cfg.eval_episodes,
                &mut eval_rng,
            )?),
            None => (f64::NAN, f64::NAN),
        };
        let row = MetricsRow {
            epoch,
            critic1_loss: c1 / iters,
            critic2_loss: c2 / iters,
            actor_loss: if n_actor > 0 { al / n_actor as f64 } else { f64::NAN },
            disc_loss: dl / iters,
            q_avg: agent.qavg.value,
            eval_return_mean: eval_mean,
            eval_return_std: eval_std,
        };
        on_epoch(&row)?;
        metrics.push(row);
        actor_steps.push(n_actor);
    }
    Ok(TrainOutput {
        agent,
        metrics,
        actor_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use crate::data::{rollout_behavior, PointNavEnv, ScriptedMixture};
    use crate::nets::{ImplicitActor, MlpSpec, OutputTransform};

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn zero_q() -> Mlp {
        let mut q = Mlp::new(MlpSpec::new(4, &[2], 1, OutputTransform::Identity), &mut rng(0)).unwrap();
        for p in q.params_mut() {
            p.values_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        q
    }

    #[test]
    fn constant_q_picks_first_candidate() {
        let actor = Actor::Implicit(ImplicitActor::new(2, 2, &[8], 1.0, &mut rng(1)).unwrap());
        let q = zero_q();
        let a = eval_action(&[0.1, 0.2], &actor, &q, &mut rng(2)).unwrap();
        let s = Tensor::matrix(1, 2, vec![0.1, 0.2]).repeat_rows(EVAL_CANDIDATES);
        let first = actor.sample(&s, &mut rng(2)).unwrap();
        assert_eq!(a, first.row(0));
        assert_eq!(a, eval_action(&[0.1, 0.2], &actor, &q, &mut rng(2)).unwrap());
    }

    #[test]
    fn negative_norm_picks_smallest_candidate() {
        let actor = Actor::Implicit(ImplicitActor::new(2, 2, &[8], 1.0, &mut rng(4)).unwrap());
        let neg_norm = |_: &Tensor, a: &Tensor| {
            (0..a.rows())
                .map(|i| -a.row(i).iter().map(|v| v * v).sum::<f64>())
                .collect()
        };
        let chosen = eval_action_by(&[0.3, -0.1], &actor, neg_norm, &mut rng(5)).unwrap();
        let s = Tensor::matrix(1, 2, vec![0.3, -0.1]).repeat_rows(EVAL_CANDIDATES);
        let all = actor.sample(&s, &mut rng(5)).unwrap();
        let norm = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();
        let min = (0..all.rows()).map(|i| norm(all.row(i))).fold(f64::INFINITY, f64::min);
        assert_eq!(norm(&chosen), min);
    }

    #[test]
    fn metrics_rows_per_epoch_and_floor_actor_steps() {
        let ds = rollout_behavior(&mut PointNavEnv::new(), &ScriptedMixture::default(), 300, &mut rng(3));
        let cfg = TrainConfig {
            hidden: vec![8],
            batch_size: 8,
            n_smooth: 2,
            epochs: 3,
            iters_per_epoch: 5,
            eval_episodes: 2,
            n_warm: 1,
            ..TrainConfig::toy()
        };
        let mut env = PointNavEnv::new();
        let out = train(&ds, &cfg, Some(&mut env)).unwrap();
        assert_eq!(out.metrics.len(), 3);
        assert_eq!(out.actor_steps, vec![2, 2, 2]);
        assert!(out.metrics.iter().all(|m| m.eval_return_mean.is_finite()));
        let mut text = Vec::new();
        write_metrics_header(&mut text).unwrap();
        for m in &out.metrics {
            write_metrics_row(&mut text, m).unwrap();
        }
        assert_eq!(String::from_utf8(text).unwrap().lines().count(), 4);
    }
}
