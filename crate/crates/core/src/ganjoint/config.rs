use std::fmt;
use std::str::FromStr;

use super::GanJointError;
use crate::nets::ActorKind;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaMode {
    /// Coefficient `exp(log_alpha)` on the generator loss.
    Fixed,
    /// Coefficient `alpha / Q_avg` on the Q term, generator loss unweighted.
    Adaptive { alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchScheme {
    Joint,
    Conditional,
}

/// Named algorithm variants, each a pure configuration toggle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    GanCondBasic,
    GanJointBasic,
    GanJoint,
    GanJointAlpha,
    GaussianJointBasic,
    /// `GanJoint` without smoothing of the resampled states.
    GanJointNoMatchSmoothing,
    /// `GanJoint` without smoothing in the Bellman backup.
    GanJointNoBellmanSmoothing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub gamma: f64,
    pub lambda_clip: f64,
    pub log_alpha: f64,
    pub alpha_mode: AlphaMode,
    pub sigma: f64,
    pub n_smooth: usize,
    pub n_warm: usize,
    pub policy_freq: usize,
    pub beta_polyak: f64,
    pub batch_size: usize,
    pub lr_critic: f64,
    pub lr_actor_disc: f64,
    pub adam_beta1: f64,
    pub epochs: usize,
    pub iters_per_epoch: usize,
    pub match_scheme: MatchScheme,
    pub actor_kind: ActorKind,
    pub smooth_bellman: bool,
    pub smooth_matching: bool,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub eval_episodes: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::toy()
    }
}

impl TrainConfig {
    /// Full-scale defaults.
    pub fn paper_defaults() -> Self {
        Self {
            gamma: 0.99,
            lambda_clip: 0.75,
            log_alpha: 4.0,
            alpha_mode: AlphaMode::Fixed,
            sigma: 3e-4,
            n_smooth: 50,
            n_warm: 40,
            policy_freq: 2,
            beta_polyak: 0.005,
            batch_size: 512,
            lr_critic: 3e-4,
            lr_actor_disc: 2e-4,
            adam_beta1: 0.4,
            epochs: 1000,
            iters_per_epoch: 1000,
            match_scheme: MatchScheme::Joint,
            actor_kind: ActorKind::Implicit,
            smooth_bellman: true,
            smooth_matching: true,
            seed: 0,
            hidden: vec![400, 300],
            eval_episodes: 10,
        }
    }

    /// Same hyperparameters on small networks and a short schedule.
    pub fn toy() -> Self {
        Self {
            batch_size: 256,
            epochs: 200,
            iters_per_epoch: 200,
            hidden: vec![64, 64],
            ..Self::paper_defaults()
        }
    }

    pub fn validate(&self) -> Result<(), GanJointError> {
        let bad = |m: String| Err(GanJointError::Config(m));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma {} outside (0, 1]", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.lambda_clip) {
            return bad(format!("lambda_clip {} outside [0, 1]", self.lambda_clip));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma {} must be a finite non-negative number", self.sigma));
        }
        if self.n_smooth < 1 {
            return bad("n_smooth must be at least 1".into());
        }
        if self.policy_freq < 1 {
            return bad("policy_freq must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.beta_polyak) {
            return bad(format!("beta_polyak {} outside [0, 1]", self.beta_polyak));
        }
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1".into());
        }
        if self.log_alpha.is_nan() || self.log_alpha == f64::INFINITY {
            return bad(format!("log_alpha {} is not usable", self.log_alpha));
        }
        if let AlphaMode::Adaptive { alpha } = self.alpha_mode {
            if !(alpha >= 0.0 && alpha.is_finite()) {
                return bad(format!("adaptive alpha {alpha} must be finite and non-negative"));
            }
        }
        for (name, lr) in [("lr_critic", self.lr_critic), ("lr_actor_disc", self.lr_actor_disc)] {
            if !(lr >= 0.0 && lr.is_finite()) {
                return bad(format!("{name} {lr} must be finite and non-negative"));
            }
        }
        if !(0.0..1.0).contains(&self.adam_beta1) {
            return bad(format!("adam_beta1 {} outside [0, 1)", self.adam_beta1));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layer widths must be positive".into());
        }
        Ok(())
    }

    /// `exp(log_alpha)`; a log of `-inf` gives the unregularized ablation.
    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    /// Applies a named variant on top of `self`, keeping schedule and sizes.
    pub fn with_variant(&self, v: Variant) -> Self {
        let mut c = self.clone();
        let (scheme, kind, bellman, matching, mode) = match v {
            Variant::GanCondBasic => (
                MatchScheme::Conditional,
                ActorKind::Implicit,
                false,
                false,
                AlphaMode::Fixed,
            ),
            Variant::GanJointBasic => (MatchScheme::Joint, ActorKind::Implicit, false, false, AlphaMode::Fixed),
            Variant::GanJoint => (MatchScheme::Joint, ActorKind::Implicit, true, true, AlphaMode::Fixed),
            Variant::GanJointAlpha => (
                MatchScheme::Joint,
                ActorKind::Implicit,
                true,
                true,
                AlphaMode::Adaptive { alpha: 10.0 },
            ),
            Variant::GaussianJointBasic => (MatchScheme::Joint, ActorKind::Gaussian, false, false, AlphaMode::Fixed),
            Variant::GanJointNoMatchSmoothing => {
                (MatchScheme::Joint, ActorKind::Implicit, true, false, AlphaMode::Fixed)
            }
            Variant::GanJointNoBellmanSmoothing => {
                (MatchScheme::Joint, ActorKind::Implicit, false, true, AlphaMode::Fixed)
            }
        };
        c.match_scheme = scheme;
        c.actor_kind = kind;
        c.smooth_bellman = bellman;
        c.smooth_matching = matching;
        c.alpha_mode = mode;
        c
    }

    /// Every field as `(key, value)` in the text form accepted by [`set`].
    ///
    /// [`set`]: TrainConfig::set
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let alpha_mode = match self.alpha_mode {
            AlphaMode::Fixed => "fixed".to_string(),
            AlphaMode::Adaptive { alpha } => format!("adaptive:{alpha}"),
        };
        let hidden: Vec<String> = self.hidden.iter().map(|h| h.to_string()).collect();
        vec![
            ("gamma", self.gamma.to_string()),
            ("lambda_clip", self.lambda_clip.to_string()),
            ("log_alpha", self.log_alpha.to_string()),
            ("alpha_mode", alpha_mode),
            ("sigma", self.sigma.to_string()),
            ("n_smooth", self.n_smooth.to_string()),
            ("n_warm", self.n_warm.to_string()),
            ("policy_freq", self.policy_freq.to_string()),
            ("beta_polyak", self.beta_polyak.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("lr_critic", self.lr_critic.to_string()),
            ("lr_actor_disc", self.lr_actor_disc.to_string()),
            ("adam_beta1", self.adam_beta1.to_string()),
            ("epochs", self.epochs.to_string()),
            ("iters_per_epoch", self.iters_per_epoch.to_string()),
            ("match_scheme", self.match_scheme.to_string()),
            ("actor_kind", actor_kind_name(self.actor_kind).to_string()),
            ("smooth_bellman", self.smooth_bellman.to_string()),
            ("smooth_matching", self.smooth_matching.to_string()),
            ("seed", self.seed.to_string()),
            ("hidden", hidden.join(",")),
            ("eval_episodes", self.eval_episodes.to_string()),
        ]
    }

    /// Keys whose values differ between two configurations.
    pub fn diff(&self, other: &TrainConfig) -> Vec<&'static str> {
        self.entries()
            .into_iter()
            .zip(other.entries())
            .filter(|(a, b)| a.1 != b.1)
            .map(|(a, _)| a.0)
            .collect()
    }

    /// Sets one field from its text form. Unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), GanJointError> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T, GanJointError> {
            v.parse()
                .map_err(|_| GanJointError::Config(format!("bad value {v:?} for {key}")))
        }
        let v = value.trim();
        match key {
            "gamma" => self.gamma = num(key, v)?,
            "lambda_clip" => self.lambda_clip = num(key, v)?,
            "log_alpha" => self.log_alpha = num(key, v)?,
            "alpha_mode" => {
                self.alpha_mode = match v {
                    "fixed" => AlphaMode::Fixed,
                    "adaptive" => AlphaMode::Adaptive { alpha: 10.0 },
                    _ => match v.strip_prefix("adaptive:") {
                        Some(a) => AlphaMode::Adaptive { alpha: num(key, a)? },
                        None => return Err(GanJointError::Config(format!("bad alpha_mode {v:?}"))),
                    },
                }
            }
            "sigma" => self.sigma = num(key, v)?,
            "n_smooth" => self.n_smooth = num(key, v)?,
            "n_warm" => self.n_warm = num(key, v)?,
            "policy_freq" => self.policy_freq = num(key, v)?,
            "beta_polyak" => self.beta_polyak = num(key, v)?,
            "batch_size" => self.batch_size = num(key, v)?,
            "lr_critic" => self.lr_critic = num(key, v)?,
            "lr_actor_disc" => self.lr_actor_disc = num(key, v)?,
            "adam_beta1" => self.adam_beta1 = num(key, v)?,
            "epochs" => self.epochs = num(key, v)?,
            "iters_per_epoch" => self.iters_per_epoch = num(key, v)?,
            "match_scheme" => self.match_scheme = v.parse()?,
            "actor_kind" => {
                self.actor_kind = match v {
                    "implicit" => ActorKind::Implicit,
                    "gaussian" => ActorKind::Gaussian,
                    _ => return Err(GanJointError::Config(format!("bad actor_kind {v:?}"))),
                }
            }
            "smooth_bellman" => self.smooth_bellman = num(key, v)?,
            "smooth_matching" => self.smooth_matching = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "hidden" => self.hidden = v.split(',').map(|h| num(key, h.trim())).collect::<Result<_, _>>()?,
            "eval_episodes" => self.eval_episodes = num(key, v)?,
            "variant" => *self = self.with_variant(v.parse()?),
            _ => return Err(GanJointError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }
}

pub(crate) fn actor_kind_name(k: ActorKind) -> &'static str {
    match k {
        ActorKind::Implicit => "implicit",
        ActorKind::Gaussian => "gaussian",
    }
}

impl fmt::Display for MatchScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatchScheme::Joint => "joint",
            MatchScheme::Conditional => "conditional",
        })
    }
}

impl FromStr for MatchScheme {
    type Err = GanJointError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "joint" => Ok(MatchScheme::Joint),
            "conditional" => Ok(MatchScheme::Conditional),
            _ => Err(GanJointError::Config(format!("bad match_scheme {s:?}"))),
        }
    }
}

impl FromStr for Variant {
    type Err = GanJointError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "gan_cond_basic" => Variant::GanCondBasic,
            "gan_joint_basic" => Variant::GanJointBasic,
            "gan_joint" => Variant::GanJoint,
            "gan_joint_alpha" => Variant::GanJointAlpha,
            "gaussian_joint_basic" => Variant::GaussianJointBasic,
            "gan_joint_no_match_smoothing" => Variant::GanJointNoMatchSmoothing,
            "gan_joint_no_bellman_smoothing" => Variant::GanJointNoBellmanSmoothing,
            _ => return Err(GanJointError::Config(format!("unknown variant {s:?}"))),
        })
    }
}
