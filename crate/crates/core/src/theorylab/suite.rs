use std::fmt;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    amortization_gap_demo, check_mixture_bound, check_visitation_bound, condition_2, discounted_ipm_check,
    ipm_identity_check, jsd_equivalence_check, kappa_max, lemma1_check, policy_transition, random_simplex,
    IdentityCheck, MatrixNorm, PolicyTable, TabularMDP, TheoryError, BOUND_TOL,
};
use crate::stream_seed;

pub const REPORT_HEADER: &str = "check_name,instance_seed,lhs,rhs,gap,bound,holds";

/// Discount used by the discounted identity suite.
pub const SUITE_GAMMA: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckKind {
    OccupSingle,
    OccupMix,
    Lemma1,
    IpmUndiscount,
    IpmDiscount,
    JsdJoint,
    Amortization,
}

impl CheckKind {
    pub const ALL: [CheckKind; 7] = [
        CheckKind::OccupSingle,
        CheckKind::OccupMix,
        CheckKind::Lemma1,
        CheckKind::IpmUndiscount,
        CheckKind::IpmDiscount,
        CheckKind::JsdJoint,
        CheckKind::Amortization,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckKind::OccupSingle => "occup_single",
            CheckKind::OccupMix => "occup_mix",
            CheckKind::Lemma1 => "lemma1",
            CheckKind::IpmUndiscount => "ipm_undiscount",
            CheckKind::IpmDiscount => "ipm_discount",
            CheckKind::JsdJoint => "jsd_joint",
            CheckKind::Amortization => "amortization",
        }
    }

    /// Tolerance on `gap`.
    pub fn tolerance(self) -> f64 {
        match self {
            CheckKind::OccupSingle | CheckKind::OccupMix | CheckKind::Lemma1 => BOUND_TOL,
            CheckKind::IpmUndiscount => 1e-8,
            CheckKind::IpmDiscount => 1e-10,
            CheckKind::JsdJoint | CheckKind::Amortization => 1e-12,
        }
    }

    /// Inequality checks report `gap = lhs - rhs`; identities `|lhs - rhs|`.
    pub fn is_inequality(self) -> bool {
        matches!(
            self,
            CheckKind::OccupSingle | CheckKind::OccupMix | CheckKind::Lemma1 | CheckKind::Amortization
        )
    }

    fn index(self) -> u64 {
        CheckKind::ALL.iter().position(|k| *k == self).expect("listed") as u64
    }
}

impl fmt::Display for CheckKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One report line. `bound` is the tolerance `gap` is held to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportRow {
    pub check: CheckKind,
    pub instance_seed: u64,
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
    pub bound: f64,
    pub holds: bool,
}

impl ReportRow {
    pub fn new(check: CheckKind, instance_seed: u64, lhs: f64, rhs: f64) -> Self {
        let gap = if check.is_inequality() {
            lhs - rhs
        } else {
            (lhs - rhs).abs()
        };
        let bound = check.tolerance();
        Self {
            check,
            instance_seed,
            lhs,
            rhs,
            gap,
            bound,
            holds: gap <= bound,
        }
    }

    fn identity(check: CheckKind, seed: u64, c: IdentityCheck) -> Self {
        Self::new(check, seed, c.lhs, c.rhs)
    }
}

pub fn write_report<W: Write>(mut w: W, rows: &[ReportRow]) -> std::io::Result<()> {
    writeln!(w, "{REPORT_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{:e},{:e},{:e},{:e},{}",
            r.check, r.instance_seed, r.lhs, r.rhs, r.gap, r.bound, r.holds
        )?;
    }
    Ok(())
}

fn size<R: Rng + ?Sized>(rng: &mut R) -> (usize, usize) {
    (rng.random_range(2..=6), rng.random_range(2..=3))
}

/// Moves `base` along a random per-state zero-sum direction until the
/// largest per-state L1 change is `eps` or the simplex boundary is hit.
pub fn perturb_policy<R: Rng + ?Sized>(base: &PolicyTable, eps: f64, rng: &mut R) -> PolicyTable {
    let m = base.n_actions();
    let rows: Vec<Vec<f64>> = (0..base.n_states())
        .map(|s| {
            let row = base.row(s);
            let mut dir: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mean = dir.iter().sum::<f64>() / m as f64;
            dir.iter_mut().for_each(|v| *v -= mean);
            let l1: f64 = dir.iter().map(|v| v.abs()).sum();
            if l1 == 0.0 {
                return row.to_vec();
            }
            let mut t = eps / l1;
            for (p, d) in row.iter().zip(&dir) {
                if *d < 0.0 {
                    t = t.min(p / -d);
                }
            }
            let mut out: Vec<f64> = row.iter().zip(&dir).map(|(p, d)| (p + t * d).max(0.0)).collect();
            let s: f64 = out.iter().sum();
            out.iter_mut().for_each(|v| *v /= s);
            out
        })
        .collect();
    PolicyTable::new(&rows).expect("perturbed rows stay on the simplex")
}

/// Random MDP, behavior policy and a perturbation with `eps < 1/kappa_max`.
pub fn visitation_instance(seed: u64) -> (TabularMDP, PolicyTable, PolicyTable) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, m) = size(&mut rng);
    let mdp = TabularMDP::random(n, m, &mut rng);
    let pi_b = PolicyTable::random(n, m, &mut rng);
    let k = kappa_max(&policy_transition(&mdp, &pi_b).expect("dims match"));
    let eps = rng.random_range(0.05..0.95) / k;
    let pi_phi = perturb_policy(&pi_b, eps, &mut rng);
    (mdp, pi_b, pi_phi)
}

/// Mixture components, weights and target policy with
/// `eps * max_k kappa_k < 1`.
pub fn mixture_instance(seed: u64) -> (TabularMDP, Vec<PolicyTable>, Vec<f64>, PolicyTable) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, m) = size(&mut rng);
    let mdp = TabularMDP::random(n, m, &mut rng);
    let pi_phi = PolicyTable::random(n, m, &mut rng);
    let k = rng.random_range(2..=3);
    let weights = random_simplex(k, &mut rng);
    let k_phi = kappa_max(&policy_transition(&mdp, &pi_phi).expect("dims match"));
    let mut scale = rng.random_range(0.05..0.95) / k_phi;
    loop {
        let comps: Vec<PolicyTable> = (0..k).map(|_| perturb_policy(&pi_phi, scale, &mut rng)).collect();
        let eps = comps.iter().map(|c| c.max_l1_gap(&pi_phi)).fold(0.0, f64::max);
        let kmax = comps
            .iter()
            .map(|c| kappa_max(&policy_transition(&mdp, c).expect("dims match")))
            .fold(1.0, f64::max);
        if eps * kmax < 1.0 {
            return (mdp, comps, weights, pi_phi);
        }
        scale *= 0.5;
    }
}

/// Nonsingular `A`, perturbation with `||Delta||_2 / ||A||_2 < 1/kappa_2(A)`,
/// and a solution vector.
pub fn lemma1_instance(seed: u64) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=6);
    let u: f64 = rng.random_range(0.05..0.95);
    let mut normal = || -> f64 { rng.sample(rand_distr::StandardNormal) };
    let a = loop {
        let a = DMatrix::from_fn(n, n, |_, _| normal());
        if condition_2(&a) < 1e6 {
            break a;
        }
    };
    let dir = DMatrix::from_fn(n, n, |_, _| normal());
    let x = DVector::from_fn(n, |_, _| normal());
    let sa = a.singular_values().max();
    let sd = dir.singular_values().max();
    let delta = dir * (u / condition_2(&a) * sa / sd);
    (a, delta, x)
}

/// MDP, two independent policies and a reward table in `[-1, 1]`.
pub fn ipm_instance(seed: u64, n: usize, m: usize) -> (TabularMDP, PolicyTable, PolicyTable, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mdp = TabularMDP::random(n, m, &mut rng);
    let pi_b = PolicyTable::random(n, m, &mut rng);
    let pi_phi = PolicyTable::random(n, m, &mut rng);
    let g = (0..n * m).map(|_| rng.random_range(-1.0..1.0)).collect();
    (mdp, pi_b, pi_phi, g)
}

fn sparse_policy<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> PolicyTable {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let mut r = random_simplex(m, rng);
            let zero = rng.random_range(0..m + 2);
            if zero < m {
                r[zero] = 0.0;
                let s: f64 = r.iter().sum();
                r.iter_mut().for_each(|v| *v /= s);
            }
            r
        })
        .collect();
    PolicyTable::new(&rows).expect("simplex rows")
}

/// State distribution, two policies (some actions with zero mass) and a
/// random finite class of discriminator tables.
pub fn amortization_instance(seed: u64) -> (Vec<f64>, PolicyTable, PolicyTable, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, m) = size(&mut rng);
    let d = random_simplex(n, &mut rng);
    let pi_b = sparse_policy(n, m, &mut rng);
    let pi_phi = sparse_policy(n, m, &mut rng);
    let k = rng.random_range(1..=8);
    let class = (0..k)
        .map(|_| (0..n * m).map(|_| rng.random_range(0.01..0.99)).collect())
        .collect();
    (d, pi_b, pi_phi, class)
}

/// Two equally likely states where the two policies swap, judged by
/// discriminators that ignore the state, on a grid of per-action values.
pub fn strict_gap_example() -> (Vec<f64>, PolicyTable, PolicyTable, Vec<Vec<f64>>) {
    let pi_b = PolicyTable::new(&[vec![0.9, 0.1], vec![0.1, 0.9]]).expect("valid");
    let pi_phi = PolicyTable::new(&[vec![0.1, 0.9], vec![0.9, 0.1]]).expect("valid");
    let grid: Vec<f64> = (1..20).map(|i| i as f64 / 20.0).collect();
    let mut class = Vec::new();
    for &c0 in &grid {
        for &c1 in &grid {
            class.push(vec![c0, c1, c0, c1]);
        }
    }
    (vec![0.5, 0.5], pi_b, pi_phi, class)
}

fn run_one(kind: CheckKind, seed: u64) -> Result<ReportRow, TheoryError> {
    Ok(match kind {
        CheckKind::OccupSingle => {
            let (mdp, pi_b, pi_phi) = visitation_instance(seed);
            let r = check_visitation_bound(&mdp, &pi_b, &pi_phi)?;
            ReportRow::new(kind, seed, r.l1(), r.bound)
        }
        CheckKind::OccupMix => {
            let (mdp, comps, w, pi_phi) = mixture_instance(seed);
            let r = check_mixture_bound(&mdp, &comps, &w, &pi_phi)?;
            ReportRow::new(kind, seed, r.l1, r.bound)
        }
        CheckKind::Lemma1 => {
            let (a, delta, x) = lemma1_instance(seed);
            let r = lemma1_check(&a, &delta, &x, MatrixNorm::Two)?;
            ReportRow::new(kind, seed, r.relative_change, r.bound)
        }
        CheckKind::IpmUndiscount => {
            let (mdp, pi_b, pi_phi, g) = ipm_instance(seed, 3, 2);
            ReportRow::identity(kind, seed, ipm_identity_check(&mdp, &pi_b, &pi_phi, &g)?)
        }
        CheckKind::IpmDiscount => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (n, m) = size(&mut rng);
            let (mdp, pi_b, pi_phi, g) = ipm_instance(seed, n, m);
            ReportRow::identity(kind, seed, discounted_ipm_check(&mdp, &pi_b, &pi_phi, &g, SUITE_GAMMA)?)
        }
        CheckKind::JsdJoint => {
            let (d, pi_b, pi_phi, _) = amortization_instance(seed);
            ReportRow::identity(kind, seed, jsd_equivalence_check(&d, &pi_b, &pi_phi)?)
        }
        CheckKind::Amortization => {
            let (d, pi_b, pi_phi, class) = amortization_instance(seed);
            let (am, ps) = amortization_gap_demo(&d, &pi_b, &pi_phi, &class)?;
            ReportRow::new(kind, seed, am, ps)
        }
    })
}

/// Every check on `instances` random instances. Instance `i` uses seed
/// `seed + i`; each check derives its own stream from that.
pub fn run_suite(seed: u64, instances: usize) -> Result<Vec<ReportRow>, TheoryError> {
    let mut rows = Vec::with_capacity(instances * CheckKind::ALL.len());
    for kind in CheckKind::ALL {
        for i in 0..instances {
            let instance_seed = seed.wrapping_add(i as u64);
            let mut row = run_one(kind, stream_seed(instance_seed, kind.index()))?;
            row.instance_seed = instance_seed;
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Replays one row of [`run_suite`].
pub fn replay(kind: CheckKind, instance_seed: u64) -> Result<ReportRow, TheoryError> {
    let mut row = run_one(kind, stream_seed(instance_seed, kind.index()))?;
    row.instance_seed = instance_seed;
    Ok(row)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_rows_and_determinism() {
        let rows = run_suite(7, 2).unwrap();
        assert_eq!(rows.len(), 2 * CheckKind::ALL.len());
        assert!(rows.iter().all(|r| r.holds), "{rows:?}");
        assert_eq!(rows, run_suite(7, 2).unwrap());
        assert_eq!(replay(CheckKind::OccupMix, 8).unwrap(), rows[3]);
        let mut text = Vec::new();
        write_report(&mut text, &rows).unwrap();
        let text = String::from_utf8(text).unwrap();
        assert_eq!(text.lines().next(), Some(REPORT_HEADER));
        assert_eq!(text.lines().count(), 15);
    }

    #[test]
    fn instances_are_applicable() {
        for s in 0..10 {
            let (mdp, b, p) = visitation_instance(s);
            let r = check_visitation_bound(&mdp, &b, &p).unwrap();
            assert!(r.applicable && r.epsilon > 0.0);
            let (mdp, c, w, p) = mixture_instance(s);
            assert!(check_mixture_bound(&mdp, &c, &w, &p).unwrap().applicable);
        }
    }

    #[test]
    fn single_component_mixture_reduces() {
        let (mdp, b, p) = visitation_instance(3);
        let one = check_visitation_bound(&mdp, &b, &p).unwrap();
        let mix = check_mixture_bound(&mdp, std::slice::from_ref(&b), &[1.0], &p).unwrap();
        assert!((one.l1() - mix.l1).abs() < 1e-15);
        assert!((one.bound - mix.bound).abs() < 1e-15);
    }

    #[test]
    fn uniform_mixture_bound_formula() {
        let (mdp, comps, _, p) = mixture_instance(11);
        let k = comps.len() as f64;
        let w = vec![1.0 / k; comps.len()];
        let r = check_mixture_bound(&mdp, &comps, &w, &p).unwrap();
        let expect: f64 = r
            .kappas
            .iter()
            .map(|kk| r.epsilon * kk / (1.0 - r.epsilon * kk))
            .sum::<f64>()
            / k;
        assert!((r.bound - expect).abs() < 1e-15);
    }

    #[test]
    fn strict_gap_exists() {
        let (d, b, p, class) = strict_gap_example();
        let (am, ps) = amortization_gap_demo(&d, &b, &p, &class).unwrap();
        assert!(am.abs() < 1e-12);
        assert!(ps - am > 1e-3);
        // Exhaustive oracle: with a free value per state the grid optimum at
        // each state is the conditional optimum 0.9 / 0.1.
        let per_state = 0.5 * (2.0 * (0.9f64 * 0.9f64.ln() + 0.1 * 0.1f64.ln()) + 4f64.ln());
        assert!((ps - per_state).abs() < 1e-12);
    }
}
