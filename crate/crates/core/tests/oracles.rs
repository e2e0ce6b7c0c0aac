//! Library results against independent reference computations.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use dtl_core::envs;
use dtl_core::linear_fa::{truncate, Projector};
use dtl_core::mdp::{bellman_opt, greedy_policy, optimal_q, Mdp, QVector};

/// Exact `Q*` by solving the linear system of every deterministic policy.
fn q_star_by_enumeration(mdp: &Mdp) -> Vec<f64> {
    let (ns, na, g) = (mdp.n_states(), mdp.n_actions(), mdp.gamma());
    let mut best = vec![f64::NEG_INFINITY; ns * na];
    for code in 0..na.pow(ns as u32) {
        let pi: Vec<usize> = (0..ns).map(|s| code / na.pow(s as u32) % na).collect();
        let p = DMatrix::from_fn(ns, ns, |s, t| mdp.transition(pi[s])[(s, t)]);
        let r = DVector::from_fn(ns, |s, _| mdp.reward(s, pi[s]));
        let v = (DMatrix::identity(ns, ns) - p * g).lu().solve(&r).unwrap();
        for s in 0..ns {
            for a in 0..na {
                let q = mdp.reward(s, a) + g * (mdp.transition(a).row(s) * &v)[0];
                best[s * na + a] = best[s * na + a].max(q);
            }
        }
    }
    best
}

fn sup(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn value_iteration_matches_policy_enumeration() {
    for (seed, s, a, g) in [(1, 3, 2, 0.9), (2, 4, 3, 0.95), (3, 5, 2, 0.99)] {
        let env = envs::random_mdp(seed, s, a, g).unwrap();
        let reference = q_star_by_enumeration(&env.mdp);
        assert!(sup(optimal_q(&env.mdp).unwrap().as_slice(), &reference) < 1e-8, "seed {seed}");
    }
}

#[test]
fn example_q_star_in_closed_form() {
    // Action i moves to state i and a2 is optimal everywhere.
    let g = 0.9;
    let env = envs::example1(g).unwrap();
    let v2 = 4.0 / (1.0 - g);
    let v1 = 2.0 + g * v2;
    let expected = [1.0 + g * v1, 2.0 + g * v2, 2.0 + g * v1, 4.0 + g * v2];
    assert!(sup(env.q_star.as_slice(), &expected) < 1e-8);
    assert!(sup(env.q_star.as_slice(), &q_star_by_enumeration(&env.mdp)) < 1e-8);
}

#[test]
fn baird_q_star_is_zero() {
    let env = envs::baird(0.99).unwrap();
    assert!(env.q_star.sup_norm() < 1e-8);
}

#[test]
fn projector_matches_normal_equations() {
    let env = envs::random_mdp(4, 4, 2, 0.9).unwrap();
    let phi = DMatrix::from_fn(8, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 - 1.5 + if i == j { 2.0 } else { 0.0 });
    let fm = dtl_core::FeatureMap::new(phi.clone()).unwrap();
    let proj = Projector::new(&fm, &env.weights).unwrap();
    let q: Vec<f64> = (0..8).map(|i| (i as f64).sin() * 3.0).collect();
    let d = DMatrix::from_diagonal(&DVector::from_column_slice(env.weights.as_vector().as_slice()));
    let lhs = phi.transpose() * &d * &phi;
    let rhs = phi.transpose() * &d * DVector::from_column_slice(&q);
    let reference = lhs.lu().solve(&rhs).unwrap();
    let got = proj.coefficients(&q);
    assert!(sup(got.as_slice(), reference.as_slice()) < 1e-10);
}

fn arb_q(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-50.0f64..50.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn bellman_is_monotone_and_contracts(q1 in arb_q(6), shift in proptest::collection::vec(0.0f64..5.0, 6)) {
        let env = envs::random_mdp(1, 3, 2, 0.8).unwrap();
        let q2: Vec<f64> = q1.iter().zip(&shift).map(|(a, b)| a + b).collect();
        let h1 = bellman_opt(&env.mdp, &QVector::new(q1.clone()).unwrap()).unwrap();
        let h2 = bellman_opt(&env.mdp, &QVector::new(q2.clone()).unwrap()).unwrap();
        for (a, b) in h1.as_slice().iter().zip(h2.as_slice()) {
            prop_assert!(a <= &(b + 1e-12));
        }
        prop_assert!(sup(h1.as_slice(), h2.as_slice()) <= 0.8 * sup(&q1, &q2) + 1e-12);
    }

    #[test]
    fn truncation_is_idempotent_and_bounded(q in arb_q(8), r in 0.1f64..40.0) {
        let t = truncate(&q, r);
        prop_assert!(t.iter().all(|x| x.abs() <= r));
        prop_assert_eq!(truncate(&t, r), t.clone());
        for (x, y) in q.iter().zip(&t) {
            if x.abs() <= r { prop_assert_eq!(x, y); }
        }
    }

    #[test]
    fn greedy_policy_ignores_state_constant_shifts(q in arb_q(6), c in proptest::collection::vec(-10.0f64..10.0, 3)) {
        let env = envs::random_mdp(2, 3, 2, 0.9).unwrap();
        let shifted: Vec<f64> = q.iter().enumerate().map(|(i, v)| v + c[i / 2]).collect();
        let a = greedy_policy(&env.mdp, &QVector::new(q).unwrap()).unwrap();
        let b = greedy_policy(&env.mdp, &QVector::new(shifted).unwrap()).unwrap();
        for s in 0..3 {
            // Exact ties may break differently after rounding; the inputs are continuous.
            prop_assert_eq!(a.action_at(s), b.action_at(s));
        }
    }

    #[test]
    fn projection_is_idempotent(q in arb_q(6)) {
        let env = envs::random_mdp(3, 3, 2, 0.9).unwrap();
        let phi = DMatrix::from_fn(6, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let fm = dtl_core::FeatureMap::new(phi).unwrap();
        let proj = Projector::new(&fm, &env.weights).unwrap();
        let once = proj.project(&q);
        let twice = proj.project(&once);
        prop_assert!(sup(&once, &twice) < 1e-9 * (1.0 + once.iter().fold(0.0f64, |m, v| m.max(v.abs()))));
    }
}
