//! Property suite behind the `check` subcommand.

use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng as _;

use crate::algorithms::{run, run_observed, Algo, AlgoConfig, Observer};
use crate::envs::{self, Environment};
use crate::error::Result;
use crate::linear_fa::{
    approx_error_estimate, gram_and_lambda_min, truncate, truncation_projection_margin, FeatureMap,
    LpNorm, Projector,
};
use crate::mdp::{
    bellman_opt, check_exploration, policy_transition, seeded_rng, stationary_distribution,
    sup_distance, sup_norm, QVector,
};
use crate::oracles::{
    contraction_modulus_estimate, coupled_q_fixed_point, example1_map, find_fixed_point,
    iterate_map, modified_bellman_solve, negative_drift_check, error_bound, inner_loop_bound,
    tpbe_fixed_points, BoundInputs, CoupledOutcome, HPhi, ModulusNorm, TruncatedPbe,
};

use super::{run_experiment, runs_csv_string, ExperimentSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub module: &'static str,
    pub property: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Outcome = Result<(bool, String)>;

struct Suite {
    results: Vec<CheckResult>,
}

impl Suite {
    fn add(&mut self, module: &'static str, property: &'static str, f: impl FnOnce() -> Outcome) {
        let (passed, detail) = match f() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        self.results.push(CheckResult {
            module,
            property,
            passed,
            detail,
        });
    }
}

fn shipped() -> Result<Vec<Environment>> {
    Ok(vec![
        envs::baird(0.99)?,
        envs::example1(0.9)?,
        envs::random_mdp(1, 3, 2, 0.8)?,
        envs::uniform_weight_mdp(1, 4, 2, 0.9)?,
    ])
}

fn bellman_vec(env: &Environment, q: &[f64]) -> Result<Vec<f64>> {
    Ok(bellman_opt(&env.mdp, &QVector::new(q.to_vec())?)?.as_slice().to_vec())
}

/// Runs every property and returns one result per property, in a fixed
/// order with deterministic detail strings.
pub fn run_checks() -> Vec<CheckResult> {
    let mut s = Suite { results: Vec::new() };

    s.add("mdp_core", "bellman_is_gamma_contraction", || {
        let mut rng = seeded_rng(11);
        let mut worst = f64::NEG_INFINITY;
        for env in shipped()? {
            let g = env.mdp.gamma();
            let m = contraction_modulus_estimate(
                |q| bellman_vec(&env, q),
                ModulusNorm::Sup,
                env.mdp.n_pairs(),
                10.0,
                200,
                &mut rng,
            )?;
            worst = worst.max(m - g);
        }
        Ok((worst <= 1e-12, format!("max(modulus - gamma) = {worst:e}")))
    });

    s.add("mdp_core", "example1_value_iteration", || {
        let env = envs::example1(0.9)?;
        let err = sup_distance(env.q_star.as_slice(), &[35.2, 38.0, 36.2, 40.0]);
        Ok((err < 1e-8, format!("sup error {err:e}")))
    });

    s.add("mdp_core", "baird_stationary_distribution", || {
        let env = envs::baird(0.99)?;
        let mut expected = vec![1.0 / 12.0; 6];
        expected.push(0.5);
        let err = sup_distance(env.mu.as_slice(), &expected);
        Ok((err < 1e-12, format!("sup error {err:e}")))
    });

    s.add("envs", "shipped_envs_explore", || {
        let mut ok = true;
        for env in shipped()? {
            ok &= check_exploration(&env.mdp, &env.behavior).is_ok();
            let p = policy_transition(&env.mdp, &env.behavior)?;
            ok &= stationary_distribution(&p, 1e-10).is_ok();
        }
        Ok((ok, "baird, example1, random:1:3:2, uniform:1:4:2".into()))
    });

    s.add("envs", "example1_gram_and_baird_rank", || {
        let ex = envs::example1(0.9)?;
        let (g, _) = gram_and_lambda_min(&ex.features, &ex.weights)?;
        let baird = envs::baird(0.99)?;
        let rank = baird.features.matrix().rank(1e-10);
        Ok((
            (g[(0, 0)] - 6.25).abs() < 1e-12 && rank == 14,
            format!("gram {} rank {rank}", g[(0, 0)]),
        ))
    });

    s.add("linear_fa", "truncation_is_projection", || {
        let mut rng = seeded_rng(12);
        let mut worst = f64::INFINITY;
        for case in 0..1000 {
            let d = [2, 4, 14][case % 3];
            let p = LpNorm::ALL[(case / 3) % 3];
            let r = rng.gen_range(0.1..5.0);
            let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-3.0 * r..3.0 * r)).collect();
            let nu: Vec<f64> = (0..d).map(|_| rng.gen_range(0.01..1.0)).collect();
            worst = worst.min(truncation_projection_margin(&x, r, &nu, p, 200, &mut rng));
        }
        Ok((worst >= -1e-12, format!("min margin {worst:e} over 1000 cases")))
    });

    s.add("linear_fa", "projection_idempotent_nonexpansive", || {
        let mut rng = seeded_rng(13);
        let mut worst = 0.0f64;
        for env in shipped()? {
            let proj = Projector::new(&env.features, &env.weights)?;
            for _ in 0..50 {
                let q: Vec<f64> = (0..env.mdp.n_pairs()).map(|_| rng.gen_range(-5.0..5.0)).collect();
                let p1 = proj.project(&q);
                let p2 = proj.project(&p1);
                worst = worst.max(sup_distance(&p1, &p2));
                worst = worst.max(env.weights.norm(&p1) - env.weights.norm(&q));
            }
        }
        Ok((worst <= 1e-9, format!("worst violation {worst:e}")))
    });

    s.add("linear_fa", "tabular_approx_error_vanishes", || {
        let env = envs::random_mdp(1, 3, 2, 0.8)?;
        let e = approx_error_estimate(
            &env.features,
            &env.weights,
            &env.mdp,
            env.default_radius(),
            200,
            &mut seeded_rng(14),
            &[],
        )?;
        Ok((e < 1e-9, format!("estimate {e:e}")))
    });

    s.add("linear_fa", "gram_lower_bound", || {
        let mut rng = seeded_rng(15);
        let mut worst = f64::NEG_INFINITY;
        for env in shipped()? {
            let (_, lambda) = gram_and_lambda_min(&env.features, &env.weights)?;
            for _ in 0..50 {
                let th: Vec<f64> = (0..env.features.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let lhs = lambda * th.iter().map(|t| t * t).sum::<f64>();
                let rhs = env.weights.norm(&env.features.q_values(&th)).powi(2);
                worst = worst.max(lhs - rhs);
            }
        }
        Ok((worst <= 1e-12, format!("max(lambda |theta|^2 - |Phi theta|_D^2) = {worst:e}")))
    });

    s.add("algorithms", "truncation_and_projection_variants_agree", || {
        #[derive(Default)]
        struct Iterates(Vec<Vec<f64>>);
        impl Observer for Iterates {
            fn inner_step(&mut self, _: usize, _: usize, theta: &[f64]) {
                self.0.push(theta.to_vec());
            }
        }
        let mut ok = true;
        let mut steps = 0;
        for env in [envs::example1(0.9)?, envs::random_mdp(1, 3, 2, 0.8)?] {
            let cfg = AlgoConfig::new(5, 500, 0.01);
            let mut a = Iterates::default();
            let mut b = Iterates::default();
            run_observed(&env, Algo::TargetTrunc, &cfg, &mut seeded_rng(3), &mut a)?;
            run_observed(&env, Algo::TargetProj, &cfg, &mut seeded_rng(3), &mut b)?;
            ok &= a.0 == b.0;
            steps += a.0.len();
        }
        Ok((ok, format!("{steps} iterates compared exactly")))
    });

    s.add("algorithms", "semi_gradient_diverges_on_baird", || {
        let env = envs::baird(0.99)?;
        let cfg = AlgoConfig::new(100, 1000, 0.01).with_theta0(vec![1.0; 14]);
        let log = run(&env, Algo::SemiGradient, &cfg, &mut seeded_rng(0))?;
        Ok((log.diverged, format!("diverged after {} samples", log.samples())))
    });

    s.add("algorithms", "outer_loop_error_chain", || {
        // ||Q_T - Q*|| <= gamma^T ||Q_0 - Q*|| + sum gamma^(T-i-1) ||Q_{i+1} - trunc(Proj H(Q_i))||
        struct Targets(Vec<Vec<f64>>);
        impl Observer for Targets {
            fn outer_step(&mut self, _: usize, _: usize, _: usize, theta_hat: &[f64]) {
                self.0.push(theta_hat.to_vec());
            }
        }
        let env = envs::random_mdp(2, 3, 2, 0.8)?;
        let r = env.default_radius();
        let map = TruncatedPbe::new(&env.features, &env.weights, &env.mdp, r)?;
        let g = env.mdp.gamma();
        let mut worst = f64::NEG_INFINITY;
        for seed in 0..5 {
            let cfg = AlgoConfig::new(15, 300, 0.05);
            let mut tr = Targets(vec![vec![0.0; 6]]);
            run_observed(&env, Algo::TargetTrunc, &cfg, &mut seeded_rng(seed), &mut tr)?;
            let q: Vec<Vec<f64>> = tr.0.iter().map(|th| truncate(&env.features.q_values(th), r)).collect();
            let t = q.len() - 1;
            let mut rhs = g.powi(t as i32) * sup_distance(&q[0], env.q_star.as_slice());
            for i in 0..t {
                rhs += g.powi((t - i - 1) as i32) * sup_distance(&q[i + 1], &map.apply(&q[i])?);
            }
            let lhs = sup_distance(&q[t], env.q_star.as_slice());
            worst = worst.max(lhs - rhs);
        }
        Ok((worst <= 1e-9, format!("max(lhs - rhs) = {worst:e}")))
    });

    s.add("oracles_analysis", "example1_closed_form_matches_generic", || {
        let env = envs::example1(0.9)?;
        let h = HPhi::new(&env.features, &env.weights, &env.mdp)?;
        let mut rng = seeded_rng(16);
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let th: f64 = rng.gen_range(-100.0..100.0);
            worst = worst.max((h.apply(&[th])?[0] - example1_map(th, 0.9)).abs());
        }
        Ok((worst <= 1e-12, format!("max gap {worst:e}")))
    });

    s.add("oracles_analysis", "example1_growth_envelope", || {
        let mut ok = true;
        for g in [0.85, 0.9, 0.95, 0.99] {
            let c = 1.2 * g;
            let orbit = iterate_map(|x| Ok(vec![example1_map(x[0], g)]), vec![1.0], 80, f64::INFINITY)?;
            for (t, x) in orbit.points.iter().enumerate() {
                let envelope = c.powi(t as i32) - t as f64 / (1.0 - 5.0 / (6.0 * g));
                ok &= x[0].abs() >= envelope;
            }
            ok &= orbit.last()[0] > 1e3 || g < 0.9;
        }
        Ok((ok, "gamma in {0.85, 0.9, 0.95, 0.99}, 80 steps".into()))
    });

    s.add("oracles_analysis", "complete_basis_h_phi", || {
        let baird = envs::baird(0.99)?;
        let h = HPhi::new(&baird.features, &baird.weights, &baird.mdp)?;
        let m = contraction_modulus_estimate(
            |x| h.apply(x),
            ModulusNorm::PhiSup(&baird.features),
            14,
            10.0,
            300,
            &mut seeded_rng(17),
        )?;
        let env = envs::random_mdp(3, 3, 2, 0.8)?;
        let mut rng = seeded_rng(18);
        let phi = DMatrix::from_fn(6, 6, |i, j| if i == j { 2.0 } else { rng.gen_range(-0.5..0.5) });
        let env = env.with_features(FeatureMap::new(phi.clone())?)?;
        let h = HPhi::new(&env.features, &env.weights, &env.mdp)?;
        let fp = find_fixed_point(|x| h.apply(x), vec![0.0; 6], 1e-12, 100_000, 1e12)?;
        let expected = phi.try_inverse().expect("diagonally dominant") * env.q_star.values();
        let err = fp.point().map_or(f64::INFINITY, |p| sup_distance(p, expected.as_slice()));
        Ok((
            m <= 0.99 + 1e-12 && err < 1e-8,
            format!("baird phi-sup modulus {m}; fixed point error {err:e}"),
        ))
    });

    s.add("oracles_analysis", "truncated_map_stays_in_ball", || {
        let mut ok = true;
        let mut rng = seeded_rng(19);
        for env in shipped()? {
            let r = env.default_radius();
            let map = TruncatedPbe::new(&env.features, &env.weights, &env.mdp, r)?;
            for _ in 0..100 {
                let q: Vec<f64> = (0..env.mdp.n_pairs()).map(|_| rng.gen_range(-r..=r)).collect();
                ok &= sup_norm(&map.apply(&q)?) <= r;
            }
            let orbit = iterate_map(|q| map.apply(q), vec![0.0; env.mdp.n_pairs()], 500, r)?;
            ok &= !orbit.diverged;
        }
        Ok((ok, "100 random inputs and a 500-step orbit per environment".into()))
    });

    s.add("oracles_analysis", "example1_truncated_fixed_point", || {
        let env = envs::example1(0.9)?;
        let map = TruncatedPbe::new(&env.features, &env.weights, &env.mdp, 40.0)?;
        let rep = tpbe_fixed_points(&map, 5, 1e-12, 100_000, &mut seeded_rng(20))?;
        let theta = (1.0 + 240.0 * 0.9 / 25.0) / (1.0 - 6.0 * 0.9 / 25.0);
        let got = rep.from_zero.point().map_or(f64::NAN, |p| p[0]);
        Ok((
            (got - theta).abs() < 1e-9 && !rep.disagreement,
            format!("theta {got}, spread over 5 random starts {}", rep.spread),
        ))
    });

    s.add("oracles_analysis", "bounds_monotone", || {
        let base = BoundInputs {
            gamma: 0.9,
            outer: 20,
            inner: 1000,
            alpha: 1e-4,
            t_alpha: 3,
            lambda_min: 0.2,
            e_approx: 0.1,
            init_gap: 10.0,
        };
        let total = |b: BoundInputs| error_bound(&b).map(|t| t.total);
        let mut ok = true;
        for k in [1000, 2000, 5000] {
            ok &= total(BoundInputs { inner: k * 2, ..base })? <= total(BoundInputs { inner: k, ..base })?;
        }
        for t in [5, 10, 20] {
            ok &= total(BoundInputs { outer: t + 1, ..base })? <= total(BoundInputs { outer: t, ..base })?;
        }
        let e3 = |a: f64| error_bound(&BoundInputs { alpha: a, ..base }).map(|t| t.e3);
        ok &= e3(1e-4)? <= e3(2e-4)?;
        let ib = |k| inner_loop_bound(k, 1e-3, 3, 0.2, 0.9);
        ok &= ib(100)? >= ib(1000)? && ib(4)? >= ib(5)?;
        Ok((ok, "K, T, alpha and k grids".into()))
    });

    s.add("oracles_analysis", "negative_drift_infeasible_on_baird", || {
        let env = envs::baird(0.99)?;
        let rep = negative_drift_check(&env.features, &env.weights, 0.99, &env.behavior, 100, &mut seeded_rng(21))?;
        let v = rep.violations.first();
        Ok((
            v.is_some_and(|v| v.lhs >= v.rhs),
            format!("{} violations among {} parameters", rep.violations.len(), rep.checked),
        ))
    });

    s.add("oracles_analysis", "baselines_miss_q_star", || {
        let env = envs::uniform_weight_mdp(1, 4, 2, 0.9)?;
        let n = env.mdp.n_pairs() as f64;
        let eta = 0.1;
        let q = modified_bellman_solve(&env.mdp, &env.weights, eta, 1e-11)?;
        let c = 1.0 + eta * n;
        let reference = crate::mdp::value_iteration(&env.mdp.rescaled(0.9 / c, 1.0 / c)?, 1e-12, 1_000_000)?.0;
        let f_err = q.sup_distance(&reference);
        let f_gap = q.sup_distance(&env.q_star);
        let (g_err, g_gap) = match coupled_q_fixed_point(&env.mdp, &env.features, &env.weights, 1e-13, 1e9)? {
            CoupledOutcome::Converged { u, v, .. } => {
                let reference = crate::mdp::value_iteration(&env.mdp.rescaled(0.9 / n, 1.0 / n)?, 1e-13, 1_000_000)?.0;
                (
                    sup_distance(u.as_slice(), reference.as_slice()),
                    sup_distance(v.as_slice(), env.q_star.as_slice()),
                )
            }
            _ => (f64::INFINITY, 0.0),
        };
        Ok((
            f_err < 1e-8 && g_err < 1e-8 && f_gap > 1e-9 && g_gap > 1e-9,
            format!("modified {f_err:e} (gap {f_gap}); coupled {g_err:e} (gap {g_gap})"),
        ))
    });

    s.add("harness_cli", "csv_is_deterministic", || {
        let spec = ExperimentSpec::from_json(
            r#"{"env":"random:1:3:2","gamma":0.8,"algo":"target_trunc",
                "cfg":{"T":5,"K":200,"alpha":0.05},"n_seeds":3}"#,
        )?;
        let a = runs_csv_string(&run_experiment(&spec, 1)?)?;
        let b = runs_csv_string(&run_experiment(&spec, 3)?)?;
        Ok((a == b, format!("{} bytes", a.len())))
    });

    s.results
}

/// `module,property,passed,detail`.
pub fn write_check_csv<W: Write>(results: &[CheckResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["module", "property", "passed", "detail"])?;
    for r in results {
        w.write_record([r.module, r.property, if r.passed { "1" } else { "0" }, &r.detail])?;
    }
    w.flush()?;
    Ok(())
}
