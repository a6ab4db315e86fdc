//! Exact tabular checks of the visitation-matching results: stationary
//! distributions and their perturbation bounds, the IPM identities, and the
//! JSD decomposition with its amortization gap.

mod suite;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

pub use suite::{
    amortization_instance, ipm_instance, lemma1_instance, mixture_instance, perturb_policy, replay, run_suite,
    strict_gap_example, visitation_instance, write_report, CheckKind, ReportRow, REPORT_HEADER, SUITE_GAMMA,
};

/// Default positivity floor for transition probabilities.
pub const MIN_PROB: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TheoryError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("singular system in {0}")]
    Singular(&'static str),
}

type Result<T> = std::result::Result<T, TheoryError>;

fn check_distribution(v: &[f64], what: &str) -> Result<()> {
    if v.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
        return Err(TheoryError::InvalidInput(format!(
            "{what} has a negative or non-finite entry"
        )));
    }
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() > 1e-12 {
        return Err(TheoryError::InvalidInput(format!("{what} sums to {s}, not 1")));
    }
    Ok(())
}

fn random_simplex<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Finite MDP with dynamics `P[s][a][s']` stored flat.
///
/// Construction mixes every dynamics row with the uniform row so that each
/// entry is at least `min_prob`; policy-induced chains are then strictly
/// positive.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMDP {
    n_states: usize,
    n_actions: usize,
    p: Vec<f64>,
    pub mu0: Vec<f64>,
    pub min_prob: f64,
}

impl TabularMDP {
    pub fn new(dynamics: &[Vec<Vec<f64>>], mu0: Vec<f64>, min_prob: f64) -> Result<Self> {
        let n = dynamics.len();
        let m = dynamics.first().map_or(0, |r| r.len());
        if n == 0 || m == 0 {
            return Err(TheoryError::InvalidInput("empty state or action set".into()));
        }
        if !(min_prob >= 0.0 && (n as f64) * min_prob < 1.0) {
            return Err(TheoryError::InvalidInput(format!(
                "min_prob {min_prob} invalid for {n} states"
            )));
        }
        if mu0.len() != n {
            return Err(TheoryError::InvalidInput("mu0 length differs from state count".into()));
        }
        check_distribution(&mu0, "mu0")?;
        let mix = 1.0 - n as f64 * min_prob;
        let mut p = Vec::with_capacity(n * m * n);
        for (s, rows) in dynamics.iter().enumerate() {
            if rows.len() != m {
                return Err(TheoryError::InvalidInput(format!(
                    "state {s} has {} actions",
                    rows.len()
                )));
            }
            for row in rows {
                if row.len() != n {
                    return Err(TheoryError::InvalidInput("dynamics row has wrong length".into()));
                }
                check_distribution(row, "dynamics row")?;
                p.extend(row.iter().map(|&v| mix * v + min_prob));
            }
        }
        Ok(Self {
            n_states: n,
            n_actions: m,
            p,
            mu0,
            min_prob,
        })
    }

    pub fn random<R: Rng + ?Sized>(n_states: usize, n_actions: usize, rng: &mut R) -> Self {
        let dynamics: Vec<Vec<Vec<f64>>> = (0..n_states)
            .map(|_| (0..n_actions).map(|_| random_simplex(n_states, rng)).collect())
            .collect();
        let mu0 = random_simplex(n_states, rng);
        Self::new(&dynamics, mu0, MIN_PROB).expect("random instance is valid")
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// `P(s' | s, a)`.
    pub fn prob(&self, s: usize, a: usize, s_next: usize) -> f64 {
        self.p[(s * self.n_actions + a) * self.n_states + s_next]
    }

    /// State-action kernel under `pi`: `P(s'|s,a) pi(a'|s')`, size `NM x NM`.
    pub fn state_action_kernel(&self, pi: &PolicyTable) -> DMatrix<f64> {
        let (n, m) = (self.n_states, self.n_actions);
        DMatrix::from_fn(n * m, n * m, |r, c| {
            let (s, a) = (r / m, r % m);
            let (s2, a2) = (c / m, c % m);
            self.prob(s, a, s2) * pi.prob(s2, a2)
        })
    }
}

/// Conditional action distributions `pi[s][a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    n_states: usize,
    n_actions: usize,
    pi: Vec<f64>,
}

impl PolicyTable {
    pub fn new(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, |r| r.len());
        if n == 0 || m == 0 {
            return Err(TheoryError::InvalidInput("empty policy table".into()));
        }
        let mut pi = Vec::with_capacity(n * m);
        for r in rows {
            if r.len() != m {
                return Err(TheoryError::InvalidInput("ragged policy table".into()));
            }
            check_distribution(r, "policy row")?;
            pi.extend_from_slice(r);
        }
        Ok(Self {
            n_states: n,
            n_actions: m,
            pi,
        })
    }

    pub fn random<R: Rng + ?Sized>(n_states: usize, n_actions: usize, rng: &mut R) -> Self {
        let rows: Vec<Vec<f64>> = (0..n_states).map(|_| random_simplex(n_actions, rng)).collect();
        Self::new(&rows).expect("simplex rows")
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            pi: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    pub fn deterministic(actions: &[usize], n_actions: usize) -> Self {
        let mut pi = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            pi[s * n_actions + a] = 1.0;
        }
        Self {
            n_states: actions.len(),
            n_actions,
            pi,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.pi[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.pi[s * self.n_actions..(s + 1) * self.n_actions]
    }

    /// `max_s || pi(.|s) - other(.|s) ||_1`.
    pub fn max_l1_gap(&self, other: &PolicyTable) -> f64 {
        (0..self.n_states)
            .map(|s| {
                self.row(s)
                    .iter()
                    .zip(other.row(s))
                    .map(|(a, b)| (a - b).abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// `sum_k w_k pi_k`.
    pub fn mixture(components: &[PolicyTable], weights: &[f64]) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| TheoryError::InvalidInput("empty mixture".into()))?;
        let mut pi = vec![0.0; first.pi.len()];
        for (c, &w) in components.iter().zip(weights) {
            for (p, v) in pi.iter_mut().zip(&c.pi) {
                *p += w * v;
            }
        }
        Ok(Self { pi, ..first.clone() })
    }
}

fn check_dims(mdp: &TabularMDP, pi: &PolicyTable) -> Result<()> {
    if pi.n_states != mdp.n_states || pi.n_actions != mdp.n_actions {
        return Err(TheoryError::InvalidInput(format!(
            "policy is {}x{}, MDP is {}x{}",
            pi.n_states, pi.n_actions, mdp.n_states, mdp.n_actions
        )));
    }
    Ok(())
}

/// `T[i][j] = sum_a P(j|i,a) pi(a|i)`, entries floored at `min_prob` and
/// rows renormalized.
pub fn policy_transition(mdp: &TabularMDP, pi: &PolicyTable) -> Result<DMatrix<f64>> {
    check_dims(mdp, pi)?;
    let n = mdp.n_states;
    let mut t = DMatrix::from_fn(n, n, |i, j| {
        (0..mdp.n_actions).map(|a| mdp.prob(i, a, j) * pi.prob(i, a)).sum()
    });
    let floor = mdp.min_prob * (1.0 - 1e-9);
    for i in 0..n {
        let mut row = t.row_mut(i);
        if row.iter().any(|v: &f64| *v < floor) {
            row.iter_mut().for_each(|v: &mut f64| *v = v.max(mdp.min_prob));
            let s = row.sum();
            row /= s;
        }
    }
    Ok(t)
}

/// `[1; I - T^T]`, size `(N + 1) x N`.
pub fn augmented_matrix(t: &DMatrix<f64>) -> DMatrix<f64> {
    let n = t.nrows();
    DMatrix::from_fn(n + 1, n, |r, c| {
        if r == 0 {
            1.0
        } else {
            let i = r - 1;
            (if i == c { 1.0 } else { 0.0 }) - t[(c, i)]
        }
    })
}

/// The augmented matrix with (0-based) row `row` deleted.
pub fn augmented_minor(t: &DMatrix<f64>, row: usize) -> DMatrix<f64> {
    augmented_matrix(t).remove_row(row)
}

/// Stationary distribution from the first `N` rows of `[1; I - T^T] d = e1`.
pub fn stationary_dist(t: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = t.nrows();
    if n == 0 || t.ncols() != n {
        return Err(TheoryError::InvalidInput("transition matrix must be square".into()));
    }
    let a = augmented_minor(t, n);
    let mut e1 = DVector::zeros(n);
    e1[0] = 1.0;
    let d = a.lu().solve(&e1).ok_or(TheoryError::Singular("stationary_dist"))?;
    if d.iter().any(|v| !v.is_finite()) {
        return Err(TheoryError::Singular("stationary_dist"));
    }
    Ok(d.iter().copied().collect())
}

/// 2-norm condition number from singular values; infinite when singular.
pub fn condition_2(a: &DMatrix<f64>) -> f64 {
    let sv = a.singular_values();
    let max = sv.max();
    let min = sv.min();
    if !(min > max * f64::EPSILON * a.nrows().max(a.ncols()) as f64) {
        return f64::INFINITY;
    }
    max / min
}

fn norm_1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Induced 1-norm condition number; infinite when singular.
pub fn condition_1(a: &DMatrix<f64>) -> f64 {
    if condition_2(a).is_infinite() {
        return f64::INFINITY;
    }
    match a.clone().try_inverse() {
        Some(inv) => norm_1(a) * norm_1(&inv),
        None => f64::INFINITY,
    }
}

/// Worst condition number over deleting each augmented row `2..=N+1`.
pub fn kappa_max_with(t: &DMatrix<f64>, cond: fn(&DMatrix<f64>) -> f64) -> f64 {
    (1..=t.nrows())
        .map(|r| cond(&augmented_minor(t, r)))
        .fold(1.0, f64::max)
}

/// [`kappa_max_with`] in the 2-norm.
pub fn kappa_max(t: &DMatrix<f64>) -> f64 {
    kappa_max_with(t, condition_2)
}

/// `eps k / (1 - eps k)`, infinite once `eps k >= 1`.
pub fn perturbation_bound(eps: f64, kappa: f64) -> f64 {
    let x = eps * kappa;
    if x < 1.0 {
        x / (1.0 - x)
    } else if eps == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisitationReport {
    pub d_b: Vec<f64>,
    pub d_phi: Vec<f64>,
    /// `0.5 * ||d_phi - d_b||_1`.
    pub tv: f64,
    pub epsilon: f64,
    /// 2-norm constant.
    pub kappa_max: f64,
    /// Induced 1-norm constant.
    pub kappa_max_1: f64,
    pub bound: f64,
    pub bound_1: f64,
    /// Whether `epsilon < 1 / kappa_max`.
    pub applicable: bool,
    pub holds: bool,
    pub holds_1: bool,
}

impl VisitationReport {
    pub fn l1(&self) -> f64 {
        2.0 * self.tv
    }
}

const BOUND_TOL: f64 = 1e-9;

pub fn check_visitation_bound(mdp: &TabularMDP, pi_b: &PolicyTable, pi_phi: &PolicyTable) -> Result<VisitationReport> {
    let tb = policy_transition(mdp, pi_b)?;
    let tp = policy_transition(mdp, pi_phi)?;
    let d_b = stationary_dist(&tb)?;
    let d_phi = stationary_dist(&tp)?;
    let l1 = l1_distance(&d_b, &d_phi);
    let epsilon = pi_b.max_l1_gap(pi_phi);
    let kappa_max = kappa_max(&tb);
    let kappa_max_1 = kappa_max_with(&tb, condition_1);
    let bound = perturbation_bound(epsilon, kappa_max);
    let bound_1 = perturbation_bound(epsilon, kappa_max_1);
    Ok(VisitationReport {
        d_b,
        d_phi,
        tv: 0.5 * l1,
        epsilon,
        kappa_max,
        kappa_max_1,
        bound,
        bound_1,
        applicable: epsilon * kappa_max < 1.0,
        holds: l1 <= bound + BOUND_TOL,
        holds_1: l1 <= bound_1 + BOUND_TOL,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureReport {
    /// `sum_k w_k d_{b_k}`.
    pub d_b: Vec<f64>,
    pub d_phi: Vec<f64>,
    pub l1: f64,
    pub epsilon: f64,
    pub kappas: Vec<f64>,
    /// `sum_k w_k eps k_k / (1 - eps k_k)`.
    pub bound: f64,
    pub applicable: bool,
    pub holds: bool,
}

pub fn check_mixture_bound(
    mdp: &TabularMDP,
    components: &[PolicyTable],
    weights: &[f64],
    pi_phi: &PolicyTable,
) -> Result<MixtureReport> {
    if components.is_empty() || components.len() != weights.len() {
        return Err(TheoryError::InvalidInput(
            "need one weight per mixture component".into(),
        ));
    }
    check_distribution(weights, "mixture weights")?;
    let d_phi = stationary_dist(&policy_transition(mdp, pi_phi)?)?;
    let mut d_b = vec![0.0; mdp.n_states];
    let mut kappas = Vec::with_capacity(components.len());
    let epsilon = components.iter().map(|c| c.max_l1_gap(pi_phi)).fold(0.0, f64::max);
    let mut bound = 0.0;
    for (c, &w) in components.iter().zip(weights) {
        let t = policy_transition(mdp, c)?;
        let d = stationary_dist(&t)?;
        for (acc, v) in d_b.iter_mut().zip(&d) {
            *acc += w * v;
        }
        let k = kappa_max(&t);
        bound += w * perturbation_bound(epsilon, k);
        kappas.push(k);
    }
    let l1 = l1_distance(&d_b, &d_phi);
    let kmax = kappas.iter().copied().fold(1.0, f64::max);
    Ok(MixtureReport {
        d_b,
        d_phi,
        l1,
        epsilon,
        kappas,
        bound,
        applicable: epsilon * kmax < 1.0,
        holds: l1 <= bound + BOUND_TOL,
    })
}

fn state_action_visitation(d: &[f64], pi: &PolicyTable) -> Vec<f64> {
    let m = pi.n_actions;
    (0..d.len() * m).map(|k| d[k / m] * pi.prob(k / m, k % m)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Average reward `R` of `pi` under reward table `g` (state-major, `N x M`)
/// and the bias `f` solving `f - P_pi f = g - R` with `sum d f = 0`.
pub fn average_reward_bias(mdp: &TabularMDP, pi: &PolicyTable, g: &[f64]) -> Result<(f64, Vec<f64>)> {
    let nm = mdp.n_states * mdp.n_actions;
    if g.len() != nm {
        return Err(TheoryError::InvalidInput(format!(
            "reward table has {} entries, expected {nm}",
            g.len()
        )));
    }
    let d = state_action_visitation(&stationary_dist(&policy_transition(mdp, pi)?)?, pi);
    let r = dot(&d, g);
    let kernel = mdp.state_action_kernel(pi);
    let dv = DVector::from_column_slice(&d);
    let ones = DVector::from_element(nm, 1.0);
    let a = DMatrix::identity(nm, nm) - kernel + ones * dv.transpose();
    let rhs = DVector::from_iterator(nm, g.iter().map(|v| v - r));
    let f = a.lu().solve(&rhs).ok_or(TheoryError::Singular("average_reward_bias"))?;
    Ok((r, f.iter().copied().collect()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
}

impl IdentityCheck {
    fn new(lhs: f64, rhs: f64) -> Self {
        Self {
            lhs,
            rhs,
            gap: (lhs - rhs).abs(),
        }
    }
}

/// `E_{d_phi}[g] - E_{d_b}[g]` against the bias-function form that uses
/// only behavior transitions and actions of `pi_phi` at next states.
pub fn ipm_identity_check(
    mdp: &TabularMDP,
    pi_b: &PolicyTable,
    pi_phi: &PolicyTable,
    g: &[f64],
) -> Result<IdentityCheck> {
    check_dims(mdp, pi_b)?;
    let db = state_action_visitation(&stationary_dist(&policy_transition(mdp, pi_b)?)?, pi_b);
    let dphi = state_action_visitation(&stationary_dist(&policy_transition(mdp, pi_phi)?)?, pi_phi);
    let (_, f) = average_reward_bias(mdp, pi_phi, g)?;
    let lhs = dot(&dphi, g) - dot(&db, g);
    let pf = mdp.state_action_kernel(pi_phi) * DVector::from_column_slice(&f);
    let e_f = dot(&db, &f);
    let e_next = dot(&db, pf.as_slice());
    Ok(IdentityCheck::new(lhs, -(e_f - e_next)))
}

/// Discounted visitation over states, `(1 - gamma) mu0^T (I - gamma T)^-1`.
pub fn discounted_visitation(mdp: &TabularMDP, pi: &PolicyTable, gamma: f64) -> Result<Vec<f64>> {
    let t = policy_transition(mdp, pi)?;
    let n = mdp.n_states;
    let a = (DMatrix::identity(n, n) - t * gamma).transpose();
    let b = DVector::from_iterator(n, mdp.mu0.iter().map(|v| (1.0 - gamma) * v));
    let d = a.lu().solve(&b).ok_or(TheoryError::Singular("discounted_visitation"))?;
    Ok(d.iter().copied().collect())
}

/// `E_{d_phi}[g] - E_{d_b}[g]` for discounted visitations against
/// `E_{d_b(s), a ~ pi_phi}[f] - E_{d_b(s, a)}[f]`, `f = g + gamma P_phi f`.
pub fn discounted_ipm_check(
    mdp: &TabularMDP,
    pi_b: &PolicyTable,
    pi_phi: &PolicyTable,
    g: &[f64],
    gamma: f64,
) -> Result<IdentityCheck> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(TheoryError::InvalidInput(format!("gamma {gamma} outside (0, 1)")));
    }
    check_dims(mdp, pi_b)?;
    check_dims(mdp, pi_phi)?;
    let nm = mdp.n_states * mdp.n_actions;
    if g.len() != nm {
        return Err(TheoryError::InvalidInput("reward table size".into()));
    }
    let db_s = discounted_visitation(mdp, pi_b, gamma)?;
    let db = state_action_visitation(&db_s, pi_b);
    let dphi = state_action_visitation(&discounted_visitation(mdp, pi_phi, gamma)?, pi_phi);
    let a = DMatrix::identity(nm, nm) - mdp.state_action_kernel(pi_phi) * gamma;
    let f = a
        .lu()
        .solve(&DVector::from_column_slice(g))
        .ok_or(TheoryError::Singular("discounted_ipm_check"))?;
    let lhs = dot(&dphi, g) - dot(&db, g);
    let rhs = dot(&state_action_visitation(&db_s, pi_phi), f.as_slice()) - dot(&db, f.as_slice());
    Ok(IdentityCheck::new(lhs, rhs))
}

fn kl_to_mid(p: &[f64], m: &[f64]) -> f64 {
    p.iter()
        .zip(m)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, mi)| pi * (pi / mi).ln())
        .sum()
}

/// Jensen-Shannon divergence in nats.
pub fn jsd(p: &[f64], q: &[f64]) -> f64 {
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    0.5 * kl_to_mid(p, &m) + 0.5 * kl_to_mid(q, &m)
}

/// JSD of the two joints `pi(a|s) d_b(s)` against `E_{d_b}` of per-state
/// conditional JSDs.
pub fn jsd_equivalence_check(d_b: &[f64], pi_b: &PolicyTable, pi_phi: &PolicyTable) -> Result<IdentityCheck> {
    check_distribution(d_b, "d_b")?;
    if pi_b.n_states != d_b.len() || pi_phi.n_states != d_b.len() || pi_b.n_actions != pi_phi.n_actions {
        return Err(TheoryError::InvalidInput("dimension mismatch".into()));
    }
    let joint = jsd(
        &state_action_visitation(d_b, pi_b),
        &state_action_visitation(d_b, pi_phi),
    );
    let cond: f64 = d_b
        .iter()
        .enumerate()
        .map(|(s, w)| w * jsd(pi_b.row(s), pi_phi.row(s)))
        .sum();
    Ok(IdentityCheck::new(joint, cond))
}

/// GAN value of discriminator probabilities `dis` at one state, scaled so
/// the optimum equals the conditional JSD: `(E_b log D + E_phi log(1-D) + log 4) / 2`.
fn gan_value(pb: &[f64], pp: &[f64], dis: &[f64]) -> f64 {
    let mut v = 4f64.ln();
    for ((b, p), d) in pb.iter().zip(pp).zip(dis) {
        if *b > 0.0 {
            v += b * d.ln();
        }
        if *p > 0.0 {
            v += p * (1.0 - d).ln();
        }
    }
    0.5 * v
}

/// `(amortized, per_state)`: one shared table maximizing the expected value,
/// against choosing the best table separately at each state.
///
/// Each table holds `D(s, a)` state-major with entries in `(0, 1)`.
pub fn amortization_gap_demo(
    d_b: &[f64],
    pi_b: &PolicyTable,
    pi_phi: &PolicyTable,
    class: &[Vec<f64>],
) -> Result<(f64, f64)> {
    if class.is_empty() {
        return Err(TheoryError::InvalidInput("empty discriminator class".into()));
    }
    check_distribution(d_b, "d_b")?;
    let (n, m) = (pi_b.n_states, pi_b.n_actions);
    for t in class {
        if t.len() != n * m || t.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
            return Err(TheoryError::InvalidInput(
                "discriminator tables must be N x M with entries in (0, 1)".into(),
            ));
        }
    }
    let value = |t: &[f64], s: usize| gan_value(pi_b.row(s), pi_phi.row(s), &t[s * m..(s + 1) * m]);
    let amortized = class
        .iter()
        .map(|t| (0..n).map(|s| d_b[s] * value(t, s)).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max);
    let per_state = (0..n)
        .map(|s| d_b[s] * class.iter().map(|t| value(t, s)).fold(f64::NEG_INFINITY, f64::max))
        .sum();
    Ok((amortized, per_state))
}

/// Outcome of one perturbed linear solve `(A + Delta)(x + dx) = A x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma1Report {
    pub kappa: f64,
    /// `||Delta|| / ||A||`.
    pub relative_perturbation: f64,
    /// `||dx|| / ||x||`.
    pub relative_change: f64,
    pub bound: f64,
    pub holds: bool,
}

pub fn lemma1_check(
    a: &DMatrix<f64>,
    delta: &DMatrix<f64>,
    x: &DVector<f64>,
    norm: MatrixNorm,
) -> Result<Lemma1Report> {
    if !a.is_square() || a.shape() != delta.shape() || x.len() != a.nrows() {
        return Err(TheoryError::InvalidInput("dimension mismatch".into()));
    }
    let (kappa, ratio) = match norm {
        MatrixNorm::Two => (condition_2(a), delta.norm_2() / a.norm_2()),
        MatrixNorm::One => (condition_1(a), norm_1(delta) / norm_1(a)),
    };
    if !(kappa * ratio < 1.0) {
        return Err(TheoryError::InvalidInput("perturbation too large for the lemma".into()));
    }
    let b = a * x;
    let y = (a + delta)
        .lu()
        .solve(&b)
        .ok_or(TheoryError::Singular("lemma1_check"))?;
    let dx = y - x;
    let vnorm = |v: &DVector<f64>| match norm {
        MatrixNorm::Two => v.norm(),
        MatrixNorm::One => v.iter().map(|e| e.abs()).sum(),
    };
    let relative_change = vnorm(&dx) / vnorm(x);
    let bound = perturbation_bound(ratio, kappa);
    Ok(Lemma1Report {
        kappa,
        relative_perturbation: ratio,
        relative_change,
        bound,
        holds: relative_change <= bound + BOUND_TOL,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixNorm {
    One,
    Two,
}

trait Norm2 {
    fn norm_2(&self) -> f64;
}

impl Norm2 for DMatrix<f64> {
    fn norm_2(&self) -> f64 {
        self.singular_values().max()
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

    fn two_state_mdp() -> TabularMDP {
        let dynamics = vec![
            vec![vec![0.7, 0.3], vec![0.1, 0.9]],
            vec![vec![0.4, 0.6], vec![0.8, 0.2]],
        ];
        TabularMDP::new(&dynamics, vec![0.5, 0.5], 0.0).unwrap()
    }

    #[test]
    fn transition_examples() {
        let mdp = two_state_mdp();
        let t = policy_transition(&mdp, &PolicyTable::deterministic(&[1, 0], 2)).unwrap();
        assert_eq!(t.row(0).iter().copied().collect::<Vec<_>>(), vec![0.1, 0.9]);
        assert_eq!(t.row(1).iter().copied().collect::<Vec<_>>(), vec![0.4, 0.6]);
        let t = policy_transition(&mdp, &PolicyTable::uniform(2, 2)).unwrap();
        assert!((t[(0, 0)] - 0.4).abs() < 1e-15 && (t[(1, 1)] - 0.4).abs() < 1e-15);
        let big = TabularMDP::random(6, 3, &mut rng(0));
        let t = policy_transition(&big, &PolicyTable::random(6, 3, &mut rng(1))).unwrap();
        for r in t.row_iter() {
            assert!((r.sum() - 1.0).abs() < 1e-12);
            assert!(r.iter().all(|&v| v >= MIN_PROB * (1.0 - 1e-9)));
        }
    }

    #[test]
    fn stationary_examples() {
        let t = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.2, 0.8]);
        let d = stationary_dist(&t).unwrap();
        assert!((d[0] - 2.0 / 3.0).abs() < 1e-14 && (d[1] - 1.0 / 3.0).abs() < 1e-14);
        let t = DMatrix::from_row_slice(3, 3, &[0.2, 0.3, 0.5, 0.5, 0.2, 0.3, 0.3, 0.5, 0.2]);
        let d = stationary_dist(&t).unwrap();
        assert!(d.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-14));
    }

    #[test]
    fn stationary_matches_power_iteration() {
        let mut r = rng(2);
        for _ in 0..5 {
            let mdp = TabularMDP::random(6, 2, &mut r);
            let t = policy_transition(&mdp, &PolicyTable::random(6, 2, &mut r)).unwrap();
            let d = stationary_dist(&t).unwrap();
            let mut p = DVector::from_element(6, 1.0 / 6.0).transpose();
            for _ in 0..10_000 {
                p = &p * &t;
            }
            for i in 0..6 {
                assert!((p[i] - d[i]).abs() < 1e-9);
            }
            let dv = DVector::from_column_slice(&d).transpose();
            assert!(((&dv * &t) - &dv).amax() < 1e-10);
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn kappa_examples() {
        let t = DMatrix::from_element(2, 2, 0.5);
        let a = condition_2(&augmented_minor(&t, 1));
        let b = condition_2(&augmented_minor(&t, 2));
        assert!((a - b).abs() < 1e-12);
        assert!(kappa_max(&t) >= 1.0);

        let mdp = TabularMDP::random(4, 2, &mut rng(3));
        let t = policy_transition(&mdp, &PolicyTable::random(4, 2, &mut rng(4))).unwrap();
        // Brute force through the eigenvalues of A^T A.
        let brute = (1..=4)
            .map(|r| {
                let m = augmented_minor(&t, r);
                let eig = (m.transpose() * &m).symmetric_eigenvalues();
                (eig.max() / eig.min()).sqrt()
            })
            .fold(0.0, f64::max);
        assert!((kappa_max(&t) - brute).abs() < 1e-9 * brute);
        assert!(kappa_max_with(&t, condition_1) >= 1.0);
    }

    #[test]
    fn identical_policies_give_zero_everywhere() {
        let mut r = rng(5);
        let mdp = TabularMDP::random(4, 3, &mut r);
        let pi = PolicyTable::random(4, 3, &mut r);
        let rep = check_visitation_bound(&mdp, &pi, &pi).unwrap();
        assert_eq!(rep.epsilon, 0.0);
        assert_eq!(rep.tv, 0.0);
        assert_eq!(rep.bound, 0.0);
        assert!(rep.holds && rep.applicable);
        let g: Vec<f64> = (0..12).map(|_| r.random_range(-1.0..1.0)).collect();
        let c = ipm_identity_check(&mdp, &pi, &pi, &g).unwrap();
        assert!(c.lhs.abs() < 1e-14 && c.rhs.abs() < 1e-12);
        let c = discounted_ipm_check(&mdp, &pi, &pi, &g, 0.9).unwrap();
        assert!(c.lhs.abs() < 1e-14 && c.rhs.abs() < 1e-12);
        let d = stationary_dist(&policy_transition(&mdp, &pi).unwrap()).unwrap();
        let c = jsd_equivalence_check(&d, &pi, &pi).unwrap();
        assert_eq!((c.lhs, c.rhs), (0.0, 0.0));
    }

    #[test]
    fn bound_monotone_in_epsilon() {
        let k = 7.0;
        let mut prev = 0.0;
        for i in 1..100 {
            let b = perturbation_bound(i as f64 / 100.0 / k, k);
            assert!(b > prev);
            prev = b;
        }
    }

    #[test]
    fn bias_examples() {
        let mut r = rng(6);
        let mdp = TabularMDP::random(3, 2, &mut r);
        let pi = PolicyTable::random(3, 2, &mut r);
        let (rr, f) = average_reward_bias(&mdp, &pi, &[2.5; 6]).unwrap();
        assert!((rr - 2.5).abs() < 1e-14);
        assert!(f.iter().all(|v| v.abs() < 1e-12));

        let g: Vec<f64> = (0..6).map(|_| r.random_range(-1.0..1.0)).collect();
        let (rg, f) = average_reward_bias(&mdp, &pi, &g).unwrap();
        let pf = mdp.state_action_kernel(&pi) * DVector::from_column_slice(&f);
        for k in 0..6 {
            assert!((f[k] - pf[k] - (g[k] - rg)).abs() < 1e-10);
        }
        let shifted: Vec<f64> = g.iter().map(|v| v + 3.0).collect();
        let (rs, _) = average_reward_bias(&mdp, &pi, &shifted).unwrap();
        assert!((rs - rg - 3.0).abs() < 1e-12);
    }

    #[test]
    fn constant_reward_ipm_sides_vanish() {
        let mut r = rng(7);
        let mdp = TabularMDP::random(3, 2, &mut r);
        let (a, b) = (PolicyTable::random(3, 2, &mut r), PolicyTable::random(3, 2, &mut r));
        let c = ipm_identity_check(&mdp, &a, &b, &[0.4; 6]).unwrap();
        assert!(c.lhs.abs() < 1e-12 && c.rhs.abs() < 1e-12);
    }

    #[test]
    fn discounted_one_step_limit() {
        let mut r = rng(8);
        let mdp = TabularMDP::random(3, 2, &mut r);
        let pi = PolicyTable::random(3, 2, &mut r);
        let d = discounted_visitation(&mdp, &pi, 1e-9).unwrap();
        for (a, b) in d.iter().zip(&mdp.mu0) {
            assert!((a - b).abs() < 1e-8);
        }
        let (a, b) = (PolicyTable::random(3, 2, &mut r), PolicyTable::random(3, 2, &mut r));
        let g: Vec<f64> = (0..6).map(|_| r.random_range(-1.0..1.0)).collect();
        let c = discounted_ipm_check(&mdp, &a, &b, &g, 1e-6).unwrap();
        assert!(c.gap < 1e-12);
    }

    #[test]
    fn disjoint_supports_give_ln2() {
        let pb = PolicyTable::new(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let pp = PolicyTable::new(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let c = jsd_equivalence_check(&[0.3, 0.7], &pb, &pp).unwrap();
        assert!((c.lhs - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((c.rhs - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn optimal_discriminator_closes_the_gap() {
        let mut r = rng(9);
        let pb = PolicyTable::random(3, 3, &mut r);
        let pp = PolicyTable::random(3, 3, &mut r);
        let d = vec![0.2, 0.5, 0.3];
        let opt: Vec<f64> = (0..9)
            .map(|k| pb.prob(k / 3, k % 3) / (pb.prob(k / 3, k % 3) + pp.prob(k / 3, k % 3)))
            .collect();
        let (am, ps) = amortization_gap_demo(&d, &pb, &pp, &[opt, vec![0.5; 9]]).unwrap();
        let joint = jsd_equivalence_check(&d, &pb, &pp).unwrap().lhs;
        assert!((am - ps).abs() < 1e-12);
        assert!((am - joint).abs() < 1e-12);
        assert!(amortization_gap_demo(&d, &pb, &pp, &[]).is_err());
    }

    #[test]
    fn lemma1_in_both_norms() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let delta = DMatrix::from_row_slice(2, 2, &[0.01, -0.02, 0.0, 0.015]);
        let x = DVector::from_column_slice(&[1.0, -2.0]);
        for norm in [MatrixNorm::One, MatrixNorm::Two] {
            let rep = lemma1_check(&a, &delta, &x, norm).unwrap();
            assert!(rep.holds, "{rep:?}");
        }
        let big = DMatrix::from_element(2, 2, 10.0);
        assert!(lemma1_check(&a, &big, &x, MatrixNorm::Two).is_err());
    }

    #[test]
    fn invalid_inputs() {
        assert!(PolicyTable::new(&[vec![0.5, 0.6]]).is_err());
        assert!(TabularMDP::new(&[vec![vec![1.0]]], vec![0.5], 0.0).is_err());
        let mdp = two_state_mdp();
        assert!(policy_transition(&mdp, &PolicyTable::uniform(3, 2)).is_err());
    }
}
