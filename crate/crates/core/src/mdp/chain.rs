//! Markov-chain utilities for the state chain induced by a behavior policy.

use nalgebra::{DMatrix, DVector};

use super::{Mdp, Policy};
use crate::error::{Error, Result};

/// Largest power examined by [`mixing_time`].
pub const MIXING_CAP: usize = 1_000_000;

/// `P_pi(s, s') = sum_a pi(a|s) P_a(s, s')`.
pub fn policy_transition(mdp: &Mdp, pi: &Policy) -> Result<DMatrix<f64>> {
    pi.check_conforms(mdp)?;
    let n = mdp.n_states();
    let mut p = DMatrix::zeros(n, n);
    for s in 0..n {
        for a in 0..mdp.n_actions() {
            let w = pi.prob(s, a);
            if w == 0.0 {
                continue;
            }
            let pa = mdp.transition(a);
            for s2 in 0..n {
                p[(s, s2)] += w * pa[(s, s2)];
            }
        }
    }
    Ok(p)
}

fn successors(p: &DMatrix<f64>, u: usize) -> impl Iterator<Item = usize> + '_ {
    (0..p.ncols()).filter(move |&v| p[(u, v)] > 0.0)
}

/// Strong connectivity of the positive-entry graph.
pub fn is_irreducible(p: &DMatrix<f64>) -> bool {
    let n = p.nrows();
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for v in 0..n {
                let edge = if forward { p[(u, v)] } else { p[(v, u)] };
                if edge > 0.0 && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|x| x)
    };
    n > 0 && reach(true) && reach(false)
}

/// Period one, computed as the gcd of `level(u) + 1 - level(v)` over all
/// edges of a breadth-first layering. Assumes irreducibility.
pub fn is_aperiodic(p: &DMatrix<f64>) -> bool {
    let n = p.nrows();
    let mut level = vec![usize::MAX; n];
    level[0] = 0;
    let mut queue = std::collections::VecDeque::from([0]);
    while let Some(u) = queue.pop_front() {
        for v in successors(p, u) {
            if level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut period = 0u64;
    for u in (0..n).filter(|&u| level[u] != usize::MAX) {
        for v in successors(p, u) {
            let diff = (level[u] as i64 + 1 - level[v] as i64).unsigned_abs();
            period = gcd(period, diff);
        }
    }
    period == 1
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Validates that `pi` puts positive mass on every pair and induces an
/// irreducible, aperiodic state chain.
pub fn check_exploration(mdp: &Mdp, pi: &Policy) -> Result<()> {
    pi.check_conforms(mdp)?;
    if let Some(i) = pi.probs().iter().position(|&p| !(p > 0.0)) {
        let (s, a) = (i / mdp.n_actions(), i % mdp.n_actions());
        return Err(Error::Assumption(format!(
            "behavior policy gives zero probability to action {a} at state {s}"
        )));
    }
    let p = policy_transition(mdp, pi)?;
    check_chain(&p)
}

fn check_chain(p: &DMatrix<f64>) -> Result<()> {
    if !is_irreducible(p) {
        return Err(Error::Assumption("state chain is reducible".into()));
    }
    if !is_aperiodic(p) {
        return Err(Error::Assumption("state chain is periodic".into()));
    }
    Ok(())
}

/// Unique stationary distribution of an irreducible aperiodic chain, by a
/// direct solve of `mu^T P = mu^T`, `sum(mu) = 1`.
pub fn stationary_distribution(p: &DMatrix<f64>, tol: f64) -> Result<DVector<f64>> {
    if p.nrows() != p.ncols() || p.nrows() == 0 {
        return Err(Error::InvalidArgument(
            "transition matrix must be square and non-empty".into(),
        ));
    }
    check_chain(p)?;
    let n = p.nrows();
    let mut a = p.transpose() - DMatrix::identity(n, n);
    a.row_mut(n - 1).fill(1.0);
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let mut mu = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Rank("stationary system is singular".into()))?;
    mu.iter_mut().for_each(|x| *x = x.max(0.0));
    let total = mu.sum();
    mu /= total;
    let residual = stationary_residual(p, &mu);
    if residual > tol {
        return Err(Error::NonConvergence {
            iterations: 1,
            residual,
        });
    }
    Ok(mu)
}

/// `||mu^T P - mu^T||_1`.
pub(crate) fn stationary_residual(p: &DMatrix<f64>, mu: &DVector<f64>) -> f64 {
    (p.transpose() * mu - mu).abs().sum()
}

fn worst_tv(pk: &DMatrix<f64>, mu: &DVector<f64>) -> f64 {
    pk.row_iter()
        .map(|row| 0.5 * row.iter().zip(mu.iter()).map(|(x, m)| (x - m).abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `t_delta = min{k >= 0 : max_s ||P^k(s, .) - mu||_TV <= delta}` by
/// repeated multiplication.
pub fn mixing_time(p: &DMatrix<f64>, mu: &DVector<f64>, delta: f64) -> Result<usize> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "mixing precision must lie in (0, 1), got {delta}"
        )));
    }
    let n = p.nrows();
    let mut pk = DMatrix::identity(n, n);
    for k in 0..=MIXING_CAP {
        if worst_tv(&pk, mu) <= delta {
            return Ok(k);
        }
        pk = &pk * p;
    }
    Err(Error::MixingCap(MIXING_CAP))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs;
    use crate::mdp::{sample_step, seeded_rng};

    #[test]
    fn example1_uniform_chain() {
        let env = envs::example1(0.9).unwrap();
        let p = policy_transition(&env.mdp, &env.behavior).unwrap();
        assert!(p.iter().all(|&x| x == 0.5));
        let mu = stationary_distribution(&p, 1e-12).unwrap();
        assert!((mu[0] - 0.5).abs() < 1e-15 && (mu[1] - 0.5).abs() < 1e-15);
        // k = 0 has TV 1/2; P itself already equals mu row-wise.
        assert_eq!(mixing_time(&p, &mu, 0.49).unwrap(), 1);
        assert_eq!(mixing_time(&p, &mu, 0.01).unwrap(), 1);
        assert_eq!(mixing_time(&p, &mu, 0.5).unwrap(), 0);
    }

    #[test]
    fn deterministic_policy_chain() {
        let env = envs::example1(0.9).unwrap();
        let pi = Policy::deterministic(2, &[0, 0]).unwrap();
        let p = policy_transition(&env.mdp, &pi).unwrap();
        assert_eq!(p.as_slice(), DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]).as_slice());
    }

    #[test]
    fn baird_chain() {
        let env = envs::baird(0.99).unwrap();
        let p = policy_transition(&env.mdp, &env.behavior).unwrap();
        for s in 0..7 {
            for s2 in 0..6 {
                assert!((p[(s, s2)] - 1.0 / 12.0).abs() < 1e-15);
            }
            assert_eq!(p[(s, 6)], 0.5);
        }
        let mu = stationary_distribution(&p, 1e-12).unwrap();
        for s in 0..6 {
            assert!((mu[s] - 1.0 / 12.0).abs() < 1e-14);
        }
        assert!((mu[6] - 0.5).abs() < 1e-14);
        let t = mixing_time(&p, &mu, 0.01).unwrap();
        assert!(t <= 10, "t = {t}");
    }

    #[test]
    fn baird_stationary_matches_empirical_frequency() {
        let env = envs::baird(0.99).unwrap();
        let mut rng = seeded_rng(11);
        let mut counts = [0usize; 7];
        let mut s = 0;
        let n = 1_000_000;
        for _ in 0..n {
            s = sample_step(&env.mdp, &env.behavior, s, &mut rng).next_state;
            counts[s] += 1;
        }
        for (s, c) in counts.iter().enumerate() {
            let want = if s == 6 { 0.5 } else { 1.0 / 12.0 };
            assert!((*c as f64 / n as f64 - want).abs() < 3e-3);
        }
    }

    #[test]
    fn periodic_and_reducible_rejected() {
        let swap = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(is_irreducible(&swap));
        assert!(!is_aperiodic(&swap));
        assert!(matches!(
            stationary_distribution(&swap, 1e-12),
            Err(Error::Assumption(_))
        ));
        let split = DMatrix::<f64>::identity(2, 2);
        assert!(matches!(
            stationary_distribution(&split, 1e-12),
            Err(Error::Assumption(_))
        ));
    }

    #[test]
    fn single_state_mixes_immediately() {
        let p = DMatrix::from_element(1, 1, 1.0);
        let mu = stationary_distribution(&p, 1e-12).unwrap();
        assert_eq!(mixing_time(&p, &mu, 0.1).unwrap(), 0);
    }

    #[test]
    fn mixing_time_monotone_in_delta() {
        let p = DMatrix::from_row_slice(3, 3, &[0.9, 0.1, 0.0, 0.0, 0.8, 0.2, 0.3, 0.0, 0.7]);
        let mu = stationary_distribution(&p, 1e-12).unwrap();
        let mut last = usize::MAX;
        for delta in [1e-6, 1e-4, 1e-3, 1e-2, 0.1, 0.3, 0.6, 0.9] {
            let t = mixing_time(&p, &mu, delta).unwrap();
            assert!(t <= last);
            last = t;
        }
    }

    #[test]
    fn exploration_check_names_failure() {
        let env = envs::example1(0.9).unwrap();
        let lazy = Policy::deterministic(2, &[1, 1]).unwrap();
        assert!(matches!(
            check_exploration(&env.mdp, &lazy),
            Err(Error::Assumption(_))
        ));
        check_exploration(&env.mdp, &env.behavior).unwrap();
    }
}
