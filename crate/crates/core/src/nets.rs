//! Dense networks for the actor, twin critics and discriminator, plus
//! target-network maintenance.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::autodiff::{matmul_values, sigmoid_value, AutodiffError, Graph, NodeId, Tensor};

/// LeakyReLU slope used by every hidden layer of the RL networks.
pub const LEAKY_SLOPE: f64 = 0.01;
/// Clamp range for the Gaussian actor's log standard deviation.
pub const LOG_STD_BOUNDS: (f64, f64) = (-5.0, 2.0);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetError {
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("parameter shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutputTransform {
    Identity,
    /// `max_action * tanh(x)`.
    TanhScaled(f64),
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub output_transform: OutputTransform,
    pub negative_slope: f64,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_dims: &[usize], output_dim: usize, output_transform: OutputTransform) -> Self {
        Self {
            input_dim,
            hidden_dims: hidden_dims.to_vec(),
            output_dim,
            output_transform,
            negative_slope: LEAKY_SLOPE,
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.hidden_dims.is_empty() {
            return Err(NetError::InvalidSpec("at least one hidden layer is required".into()));
        }
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(NetError::InvalidSpec(format!(
                "all dimensions must be positive: {self:?}"
            )));
        }
        if let OutputTransform::TanhScaled(m) = self.output_transform {
            if !(m > 0.0 && m.is_finite()) {
                return Err(NetError::InvalidSpec(format!("max_action must be positive, got {m}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `fan_in x fan_out`.
    pub weight: Tensor,
    /// `1 x fan_out`.
    pub bias: Tensor,
}

impl Linear {
    /// Uniform initialization in `±1/sqrt(fan_in)`.
    pub fn new<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-bound..bound)).collect() };
        let weight = Tensor::matrix(fan_in, fan_out, draw(fan_in * fan_out));
        let bias = Tensor::matrix(1, fan_out, draw(fan_out));
        Self { weight, bias }
    }

    pub fn forward(&self, g: &mut Graph, w: NodeId, b: NodeId, x: NodeId) -> Result<NodeId, AutodiffError> {
        let h = g.matmul(x, w)?;
        g.add(h, b)
    }

    pub fn predict(&self, x: &Tensor) -> Tensor {
        let mut out = matmul_values(x, &self.weight);
        let c = out.cols();
        let b = self.bias.values();
        for (j, v) in out.values_mut().iter_mut().enumerate() {
            *v += b[j % c];
        }
        out
    }
}

/// Parameter leaves of one network on a particular graph, in `params()` order.
#[derive(Debug, Clone)]
pub struct Bound(pub Vec<NodeId>);

/// Multi-layer perceptron with LeakyReLU hidden activations.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<Linear>,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Result<Self, NetError> {
        spec.validate()?;
        let mut dims = vec![spec.input_dim];
        dims.extend_from_slice(&spec.hidden_dims);
        dims.push(spec.output_dim);
        let layers = dims.windows(2).map(|w| Linear::new(w[0], w[1], rng)).collect();
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    /// Rebuilds a network from explicit layers, checking they chain.
    pub fn from_layers(spec: MlpSpec, layers: Vec<Linear>) -> Result<Self, NetError> {
        spec.validate()?;
        let mut dims = vec![spec.input_dim];
        dims.extend_from_slice(&spec.hidden_dims);
        dims.push(spec.output_dim);
        if layers.len() != dims.len() - 1 {
            return Err(NetError::ShapeMismatch(format!(
                "expected {} layers, got {}",
                dims.len() - 1,
                layers.len()
            )));
        }
        for (l, w) in layers.iter().zip(dims.windows(2)) {
            if l.weight.rows() != w[0] || l.weight.cols() != w[1] || l.bias.numel() != w[1] {
                return Err(NetError::ShapeMismatch(format!(
                    "layer {:?} does not map {} -> {}",
                    l.weight.shape(),
                    w[0],
                    w[1]
                )));
            }
        }
        Ok(Self { spec, layers })
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn bind(&self, g: &mut Graph) -> Bound {
        Bound(self.params().into_iter().map(|p| g.param(p)).collect())
    }

    /// Binds the parameters as constants, so no gradient is tracked for them.
    pub fn bind_frozen(&self, g: &mut Graph) -> Bound {
        Bound(self.params().into_iter().map(|p| g.constant(p.clone())).collect())
    }

    /// Output before the final transform (logits for a sigmoid head).
    pub fn forward_pre(&self, g: &mut Graph, bound: &Bound, x: NodeId) -> Result<NodeId, AutodiffError> {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(g, bound.0[2 * i], bound.0[2 * i + 1], h)?;
            if i < last {
                h = g.leaky_relu(h, self.spec.negative_slope);
            }
        }
        Ok(h)
    }

    pub fn forward(&self, g: &mut Graph, bound: &Bound, x: NodeId) -> Result<NodeId, AutodiffError> {
        let h = self.forward_pre(g, bound, x)?;
        Ok(match self.spec.output_transform {
            OutputTransform::Identity => h,
            OutputTransform::TanhScaled(m) => {
                let t = g.tanh(h);
                g.scale(t, m)
            }
            OutputTransform::Sigmoid => g.sigmoid(h),
        })
    }

    pub fn predict_pre(&self, x: &Tensor) -> Tensor {
        assert_eq!(x.cols(), self.spec.input_dim, "input width");
        let slope = self.spec.negative_slope;
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.predict(&h);
            if i < last {
                h.values_mut().iter_mut().for_each(|v| {
                    if *v <= 0.0 {
                        *v *= slope
                    }
                });
            }
        }
        h
    }

    pub fn predict(&self, x: &Tensor) -> Tensor {
        let mut h = self.predict_pre(x);
        match self.spec.output_transform {
            OutputTransform::Identity => {}
            OutputTransform::TanhScaled(m) => h.values_mut().iter_mut().for_each(|v| *v = m * v.tanh()),
            OutputTransform::Sigmoid => h.values_mut().iter_mut().for_each(|v| *v = sigmoid_value(*v)),
        }
        h
    }

    pub fn same_shapes(&self, other: &Mlp) -> bool {
        let (a, b) = (self.params(), other.params());
        a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.shape() == y.shape())
    }
}

/// `target <- beta * online + (1 - beta) * target`, parameter by parameter.
pub fn soft_update(target: &mut Mlp, online: &Mlp, beta: f64) -> Result<(), NetError> {
    if !target.same_shapes(online) {
        return Err(NetError::ShapeMismatch(
            "soft_update between different architectures".into(),
        ));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(NetError::InvalidSpec(format!("soft update rate {beta} outside [0, 1]")));
    }
    for (t, o) in target.params_mut().into_iter().zip(online.params()) {
        for (tv, ov) in t.values_mut().iter_mut().zip(o.values()) {
            *tv = if beta == 1.0 { *ov } else { *tv + beta * (ov - *tv) };
        }
    }
    Ok(())
}

/// Noise width for an implicit policy: `min(10, state_dim / 2)`, at least 1.
pub fn noise_dim_for(state_dim: usize) -> usize {
    (state_dim / 2).clamp(1, 10)
}

fn standard_normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let values = (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::matrix(rows, cols, values)
}

/// Policy `a = max_action * tanh(net([s, z]))` with `z ~ N(0, I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImplicitActor {
    pub net: Mlp,
    pub state_dim: usize,
    pub action_dim: usize,
    pub noise_dim: usize,
    pub max_action: f64,
}

impl ImplicitActor {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        max_action: f64,
        rng: &mut R,
    ) -> Result<Self, NetError> {
        let noise_dim = noise_dim_for(state_dim);
        let spec = MlpSpec::new(
            state_dim + noise_dim,
            hidden,
            action_dim,
            OutputTransform::TanhScaled(max_action),
        );
        Ok(Self {
            net: Mlp::new(spec, rng)?,
            state_dim,
            action_dim,
            noise_dim,
            max_action,
        })
    }

    fn check_states(&self, states: &Tensor) -> Result<(), NetError> {
        if states.cols() != self.state_dim {
            return Err(NetError::ShapeMismatch(format!(
                "states have width {}, actor expects {}",
                states.cols(),
                self.state_dim
            )));
        }
        Ok(())
    }

    /// `n_per_state` actions per state, state-major.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        states: &Tensor,
        n_per_state: usize,
        rng: &mut R,
    ) -> Result<Tensor, NetError> {
        self.check_states(states)?;
        let s = if n_per_state == 1 {
            states.clone()
        } else {
            states.repeat_rows(n_per_state)
        };
        let z = standard_normal(s.rows(), self.noise_dim, rng);
        Ok(self.net.predict(&Tensor::hcat(&[&s, &z])))
    }

    /// One action per state on the tape; gradients flow to the network only.
    pub fn sample_graph<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        bound: &Bound,
        states: &Tensor,
        rng: &mut R,
    ) -> Result<NodeId, NetError> {
        self.check_states(states)?;
        let z = standard_normal(states.rows(), self.noise_dim, rng);
        let input = g.constant(Tensor::hcat(&[states, &z]));
        Ok(self.net.forward(g, bound, input)?)
    }
}

/// Tanh-squashed diagonal Gaussian policy.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianActor {
    /// Maps a state to `[mean, log_std]`, each `action_dim` wide.
    pub trunk: Mlp,
    pub state_dim: usize,
    pub action_dim: usize,
    pub max_action: f64,
}

impl GaussianActor {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        max_action: f64,
        rng: &mut R,
    ) -> Result<Self, NetError> {
        if !(max_action > 0.0) {
            return Err(NetError::InvalidSpec(format!(
                "max_action must be positive, got {max_action}"
            )));
        }
        let spec = MlpSpec::new(state_dim, hidden, 2 * action_dim, OutputTransform::Identity);
        Ok(Self {
            trunk: Mlp::new(spec, rng)?,
            state_dim,
            action_dim,
            max_action,
        })
    }

    /// Per-row mean and clamped log standard deviation.
    pub fn mean_log_std(&self, states: &Tensor) -> (Tensor, Tensor) {
        let out = self.trunk.predict(states);
        let ad = self.action_dim;
        let mut mu = Vec::with_capacity(out.rows() * ad);
        let mut ls = Vec::with_capacity(out.rows() * ad);
        for i in 0..out.rows() {
            let r = out.row(i);
            mu.extend_from_slice(&r[..ad]);
            ls.extend(r[ad..].iter().map(|v| v.clamp(LOG_STD_BOUNDS.0, LOG_STD_BOUNDS.1)));
        }
        (Tensor::matrix(out.rows(), ad, mu), Tensor::matrix(out.rows(), ad, ls))
    }

    /// Pre-squash sample `mu + sigma * eps`.
    pub fn sample_raw<R: Rng + ?Sized>(&self, states: &Tensor, rng: &mut R) -> Tensor {
        let (mut mu, ls) = self.mean_log_std(states);
        for (m, l) in mu.values_mut().iter_mut().zip(ls.values()) {
            let eps: f64 = StandardNormal.sample(rng);
            *m += l.exp() * eps;
        }
        mu
    }

    pub fn sample<R: Rng + ?Sized>(&self, states: &Tensor, rng: &mut R) -> Result<Tensor, NetError> {
        if states.cols() != self.state_dim {
            return Err(NetError::ShapeMismatch(format!("states have width {}", states.cols())));
        }
        let mut raw = self.sample_raw(states, rng);
        let m = self.max_action;
        raw.values_mut().iter_mut().for_each(|v| *v = m * v.tanh());
        Ok(raw)
    }

    /// Reparameterized sample on the tape; gradients reach mean and log-std.
    pub fn sample_graph<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        bound: &Bound,
        states: &Tensor,
        rng: &mut R,
    ) -> Result<NodeId, NetError> {
        if states.cols() != self.state_dim {
            return Err(NetError::ShapeMismatch(format!("states have width {}", states.cols())));
        }
        let ad = self.action_dim;
        let s = g.constant(states.clone());
        let out = self.trunk.forward(g, bound, s)?;
        let mu = g.slice_cols(out, 0, ad)?;
        let ls = g.slice_cols(out, ad, 2 * ad)?;
        let ls = g.clamp(ls, LOG_STD_BOUNDS.0, LOG_STD_BOUNDS.1);
        let std = g.exp(ls);
        let eps = g.constant(standard_normal(states.rows(), ad, rng));
        let noise = g.mul(std, eps)?;
        let raw = g.add(mu, noise)?;
        let t = g.tanh(raw);
        Ok(g.scale(t, self.max_action))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActorKind {
    Implicit,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Actor {
    Implicit(ImplicitActor),
    Gaussian(GaussianActor),
}

impl Actor {
    pub fn new<R: Rng + ?Sized>(
        kind: ActorKind,
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        max_action: f64,
        rng: &mut R,
    ) -> Result<Self, NetError> {
        Ok(match kind {
            ActorKind::Implicit => Actor::Implicit(ImplicitActor::new(state_dim, action_dim, hidden, max_action, rng)?),
            ActorKind::Gaussian => Actor::Gaussian(GaussianActor::new(state_dim, action_dim, hidden, max_action, rng)?),
        })
    }

    pub fn kind(&self) -> ActorKind {
        match self {
            Actor::Implicit(_) => ActorKind::Implicit,
            Actor::Gaussian(_) => ActorKind::Gaussian,
        }
    }

    pub fn net(&self) -> &Mlp {
        match self {
            Actor::Implicit(a) => &a.net,
            Actor::Gaussian(a) => &a.trunk,
        }
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        match self {
            Actor::Implicit(a) => &mut a.net,
            Actor::Gaussian(a) => &mut a.trunk,
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            Actor::Implicit(a) => a.state_dim,
            Actor::Gaussian(a) => a.state_dim,
        }
    }

    pub fn action_dim(&self) -> usize {
        match self {
            Actor::Implicit(a) => a.action_dim,
            Actor::Gaussian(a) => a.action_dim,
        }
    }

    pub fn max_action(&self) -> f64 {
        match self {
            Actor::Implicit(a) => a.max_action,
            Actor::Gaussian(a) => a.max_action,
        }
    }

    pub fn bind(&self, g: &mut Graph) -> Bound {
        self.net().bind(g)
    }

    /// One action per state.
    pub fn sample<R: Rng + ?Sized>(&self, states: &Tensor, rng: &mut R) -> Result<Tensor, NetError> {
        match self {
            Actor::Implicit(a) => a.sample(states, 1, rng),
            Actor::Gaussian(a) => a.sample(states, rng),
        }
    }

    pub fn sample_graph<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        bound: &Bound,
        states: &Tensor,
        rng: &mut R,
    ) -> Result<NodeId, NetError> {
        match self {
            Actor::Implicit(a) => a.sample_graph(g, bound, states, rng),
            Actor::Gaussian(a) => a.sample_graph(g, bound, states, rng),
        }
    }
}

/// Critic or discriminator body: `[s, a] -> scalar`.
pub fn state_action_net<R: Rng + ?Sized>(
    state_dim: usize,
    action_dim: usize,
    hidden: &[usize],
    transform: OutputTransform,
    rng: &mut R,
) -> Result<Mlp, NetError> {
    Mlp::new(MlpSpec::new(state_dim + action_dim, hidden, 1, transform), rng)
}

/// Twin critics with their targets and the target actor.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticPair {
    pub q1: Mlp,
    pub q2: Mlp,
    pub target_q1: Mlp,
    pub target_q2: Mlp,
    pub target_actor: Actor,
}

impl CriticPair {
    /// Fresh critics; targets start as exact copies of the online networks.
    pub fn new<R: Rng + ?Sized>(actor: &Actor, hidden: &[usize], rng: &mut R) -> Result<Self, NetError> {
        let (sd, ad) = (actor.state_dim(), actor.action_dim());
        let q1 = state_action_net(sd, ad, hidden, OutputTransform::Identity, rng)?;
        let q2 = state_action_net(sd, ad, hidden, OutputTransform::Identity, rng)?;
        Ok(Self {
            target_q1: q1.clone(),
            target_q2: q2.clone(),
            q1,
            q2,
            target_actor: actor.clone(),
        })
    }

    /// Row-wise `(min, max)` over the two critics (targets if `use_target`).
    pub fn min_max(&self, states: &Tensor, actions: &Tensor, use_target: bool) -> (Vec<f64>, Vec<f64>) {
        let (a, b) = if use_target {
            (&self.target_q1, &self.target_q2)
        } else {
            (&self.q1, &self.q2)
        };
        let sa = Tensor::hcat(&[states, actions]);
        let (v1, v2) = (a.predict(&sa), b.predict(&sa));
        v1.values()
            .iter()
            .zip(v2.values())
            .map(|(&x, &y)| (x.min(y), x.max(y)))
            .unzip()
    }

    /// Soft-updates both target critics and the target actor.
    pub fn soft_update_targets(&mut self, actor: &Actor, beta: f64) -> Result<(), NetError> {
        soft_update(&mut self.target_q1, &self.q1, beta)?;
        soft_update(&mut self.target_q2, &self.q2, beta)?;
        soft_update(self.target_actor.net_mut(), actor.net(), beta)
    }
}

/// `D_w(s, a)`: probability that a state-action pair came from the data.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub net: Mlp,
}

impl Discriminator {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Result<Self, NetError> {
        Ok(Self {
            net: state_action_net(state_dim, action_dim, hidden, OutputTransform::Sigmoid, rng)?,
        })
    }

    pub fn logits_graph(&self, g: &mut Graph, bound: &Bound, sa: NodeId) -> Result<NodeId, AutodiffError> {
        self.net.forward_pre(g, bound, sa)
    }

    pub fn prob(&self, states: &Tensor, actions: &Tensor) -> Vec<f64> {
        self.net.predict(&Tensor::hcat(&[states, actions])).into_values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn noise_dim_rule() {
        assert_eq!(noise_dim_for(4), 2);
        assert_eq!(noise_dim_for(1), 1);
        assert_eq!(noise_dim_for(17), 8);
        assert_eq!(noise_dim_for(40), 10);
    }

    #[test]
    fn spec_validation() {
        let mut r = rng(0);
        assert!(Mlp::new(MlpSpec::new(2, &[], 1, OutputTransform::Identity), &mut r).is_err());
        assert!(Mlp::new(MlpSpec::new(2, &[0], 1, OutputTransform::Identity), &mut r).is_err());
        assert!(Mlp::new(MlpSpec::new(2, &[4], 1, OutputTransform::TanhScaled(0.0)), &mut r).is_err());
    }

    #[test]
    fn init_within_fan_in_bound() {
        let net = Mlp::new(MlpSpec::new(16, &[9], 1, OutputTransform::Identity), &mut rng(1)).unwrap();
        assert!(net.layers()[0].weight.max_abs() <= 0.25);
        assert!(net.layers()[1].weight.max_abs() <= 1.0 / 3.0);
    }

    #[test]
    fn graph_and_predict_agree() {
        let mut r = rng(2);
        let net = Mlp::new(MlpSpec::new(3, &[5, 4], 2, OutputTransform::TanhScaled(2.0)), &mut r).unwrap();
        let x = Tensor::matrix(4, 3, (0..12).map(|i| (i as f64 * 0.37).sin()).collect());
        let mut g = Graph::new();
        let b = net.bind(&mut g);
        let xi = g.constant(x.clone());
        let out = net.forward(&mut g, &b, xi).unwrap();
        let direct = net.predict(&x);
        for (a, b) in g.value(out).values().iter().zip(direct.values()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn implicit_actions_bounded_and_deterministic() {
        let actor = ImplicitActor::new(4, 3, &[16, 16], 0.7, &mut rng(3)).unwrap();
        assert_eq!(actor.noise_dim, 2);
        let states = Tensor::matrix(5, 4, (0..20).map(|i| i as f64 - 10.0).collect());
        let a1 = actor.sample(&states, 3, &mut rng(9)).unwrap();
        let a2 = actor.sample(&states, 3, &mut rng(9)).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(a1.rows(), 15);
        assert!(a1.values().iter().all(|v| v.abs() <= 0.7));
        assert!(actor.sample(&Tensor::zeros(2, 3), 1, &mut rng(0)).is_err());
    }

    #[test]
    fn gaussian_actions_bounded() {
        let actor = GaussianActor::new(2, 2, &[8], 1.5, &mut rng(4)).unwrap();
        let states = Tensor::matrix(50, 2, (0..100).map(|i| (i as f64).cos() * 5.0).collect());
        let a = actor.sample(&states, &mut rng(5)).unwrap();
        assert!(a.values().iter().all(|v| v.is_finite() && v.abs() <= 1.5));
    }

    fn set_constant_head(actor: &mut GaussianActor, mean: f64, log_std: f64) {
        let last = actor.trunk.layers.last_mut().unwrap();
        last.weight.values_mut().iter_mut().for_each(|w| *w = 0.0);
        let ad = actor.action_dim;
        for (j, b) in last.bias.values_mut().iter_mut().enumerate() {
            *b = if j < ad { mean } else { log_std };
        }
    }

    #[test]
    fn gaussian_collapses_to_mean_at_min_log_std() {
        let mut actor = GaussianActor::new(2, 1, &[8], 2.0, &mut rng(6)).unwrap();
        set_constant_head(&mut actor, 0.3, -50.0);
        let states = Tensor::zeros(1000, 2);
        let a = actor.sample(&states, &mut rng(7)).unwrap();
        let center = 2.0 * 0.3f64.tanh();
        // sigma = e^-5 after clamping; every sample stays well inside 0.1 * max_action.
        assert!(a.values().iter().all(|v| (v - center).abs() < 0.2));
    }

    #[test]
    fn gaussian_raw_mean_matches_mu() {
        let mut actor = GaussianActor::new(1, 1, &[4], 1.0, &mut rng(8)).unwrap();
        set_constant_head(&mut actor, -0.4, 0.5f64.ln());
        let n = 100_000;
        let raw = actor.sample_raw(&Tensor::zeros(n, 1), &mut rng(10));
        let mean = raw.values().iter().sum::<f64>() / n as f64;
        assert!((mean + 0.4).abs() < 4.0 * 0.5 / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn soft_update_extremes_and_closed_form() {
        let mut r = rng(11);
        let spec = MlpSpec::new(2, &[3], 1, OutputTransform::Identity);
        let online = Mlp::new(spec.clone(), &mut r).unwrap();
        let t0 = Mlp::new(spec.clone(), &mut r).unwrap();

        let mut t = t0.clone();
        soft_update(&mut t, &online, 0.0).unwrap();
        assert_eq!(t, t0);
        soft_update(&mut t, &online, 1.0).unwrap();
        assert_eq!(t, online);

        let mut t = t0.clone();
        soft_update(&mut t, &online, 0.005).unwrap();
        soft_update(&mut t, &online, 0.005).unwrap();
        for (tp, (op, p0)) in t.params().iter().zip(online.params().iter().zip(t0.params())) {
            for (v, (o, v0)) in tp.values().iter().zip(op.values().iter().zip(p0.values())) {
                let expected = o + 0.995f64.powi(2) * (v0 - o);
                assert!((v - expected).abs() < 1e-15);
            }
        }

        let other = Mlp::new(MlpSpec::new(2, &[4], 1, OutputTransform::Identity), &mut r).unwrap();
        assert!(soft_update(&mut t, &other, 0.5).is_err());
    }

    #[test]
    fn critic_min_max_order() {
        let mut r = rng(12);
        let actor = Actor::new(ActorKind::Implicit, 3, 2, &[8], 1.0, &mut r).unwrap();
        let mut pair = CriticPair::new(&actor, &[8, 8], &mut r).unwrap();
        let s = Tensor::matrix(20, 3, (0..60).map(|i| (i as f64 * 0.1).sin()).collect());
        let a = Tensor::matrix(20, 2, (0..40).map(|i| (i as f64 * 0.3).cos()).collect());
        let (lo, hi) = pair.min_max(&s, &a, false);
        assert!(lo.iter().zip(&hi).all(|(l, h)| l <= h));
        assert_eq!(pair.min_max(&s, &a, false), pair.min_max(&s, &a, true));

        pair.q2 = pair.q1.clone();
        let (lo, hi) = pair.min_max(&s, &a, false);
        assert_eq!(lo, hi);
    }

    #[test]
    fn discriminator_probabilities_open_interval() {
        let d = Discriminator::new(2, 2, &[8], &mut rng(13)).unwrap();
        let s = Tensor::matrix(3, 2, vec![100.0, -100.0, 0.0, 0.0, 3.0, 1.0]);
        let a = Tensor::matrix(3, 2, vec![1.0, 1.0, 0.0, 0.0, -5.0, 2.0]);
        assert!(d.prob(&s, &a).iter().all(|&p| p > 0.0 && p < 1.0));
    }
}
