use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{run, Algo, AlgoConfig};
use crate::error::{Error, Result};
use crate::mdp::seeded_rng;

use super::resolve_env;

fn default_algo() -> Algo {
    Algo::TargetTrunc
}

/// One `(T, K, alpha)` configuration of the sample-complexity ladder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rung {
    #[serde(rename = "T")]
    pub outer: usize,
    #[serde(rename = "K")]
    pub inner: usize,
    pub alpha: f64,
}

impl Rung {
    pub fn samples(&self) -> u64 {
        (self.outer * self.inner) as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub env: String,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default = "default_algo")]
    pub algo: Algo,
    #[serde(default)]
    pub r: Option<f64>,
    pub ladder: Vec<Rung>,
    pub epsilons: Vec<f64>,
    pub n_seeds: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub output: Option<std::path::PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub epsilon: f64,
    /// `T * K` of the cheapest rung reaching `epsilon`; `None` if no rung does.
    pub samples: Option<u64>,
    /// Mean terminal sup error of that rung, or the best mean over the ladder
    /// when unattained.
    pub achieved_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub rows: Vec<SweepRow>,
    /// Least-squares slope of `ln(samples)` against `ln(1/epsilon)` over
    /// attained rows.
    pub slope: Option<f64>,
}

/// For each `epsilon`, the cheapest ladder rung whose mean terminal
/// `||Q_hat_T - Q*||_inf` over the seeds is at most `epsilon`.
pub fn run_sweep(spec: &SweepSpec, jobs: usize) -> Result<SweepSummary> {
    if spec.ladder.is_empty() || spec.epsilons.is_empty() || spec.n_seeds == 0 {
        return Err(Error::InvalidArgument(
            "sweep needs a non-empty ladder, epsilons and n_seeds >= 1".into(),
        ));
    }
    if spec.epsilons.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidArgument("epsilons: must be positive".into()));
    }
    let env = resolve_env(&spec.env, spec.gamma, None, false)?;
    let mut ladder = spec.ladder.clone();
    ladder.sort_by_key(Rung::samples);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("jobs: {e}")))?;
    let mut means: Vec<Option<f64>> = vec![None; ladder.len()];
    let mut mean_error = |i: usize| -> Result<f64> {
        if let Some(m) = means[i] {
            return Ok(m);
        }
        let rung = ladder[i];
        let mut cfg = AlgoConfig::new(rung.outer, rung.inner, rung.alpha);
        cfg.radius = spec.r;
        cfg.log_every = rung.outer;
        let seeds: Vec<u64> = (0..spec.n_seeds as u64)
            .map(|k| spec.base_seed.wrapping_add(k))
            .collect();
        let errors: Vec<f64> = pool.install(|| {
            seeds
                .par_iter()
                .map(|&seed| {
                    let cfg = AlgoConfig { seed, ..cfg.clone() };
                    run(&env, spec.algo, &cfg, &mut seeded_rng(seed)).map(|log| log.last().sup_error)
                })
                .collect::<Result<Vec<f64>>>()
        })?;
        let m = errors.iter().sum::<f64>() / errors.len() as f64;
        means[i] = Some(m);
        Ok(m)
    };

    let mut rows = Vec::with_capacity(spec.epsilons.len());
    for &eps in &spec.epsilons {
        let mut best = f64::INFINITY;
        let mut hit = None;
        for (i, rung) in ladder.iter().enumerate() {
            let m = mean_error(i)?;
            best = best.min(m);
            if m <= eps {
                hit = Some((rung.samples(), m));
                break;
            }
        }
        rows.push(match hit {
            Some((samples, m)) => SweepRow {
                epsilon: eps,
                samples: Some(samples),
                achieved_error: m,
            },
            None => SweepRow {
                epsilon: eps,
                samples: None,
                achieved_error: best,
            },
        });
    }
    let slope = fit_slope(&rows);
    Ok(SweepSummary { rows, slope })
}

fn fit_slope(rows: &[SweepRow]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.samples.map(|s| ((1.0 / r.epsilon).ln(), (s as f64).ln())))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// `epsilon,samples,achieved_error` rows followed by a `# slope,VALUE`
/// comment line (`# slope,NA` when fewer than two rows were attained).
pub fn write_sweep_csv<W: Write>(summary: &SweepSummary, mut out: W) -> Result<()> {
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(["epsilon", "samples", "achieved_error"])?;
        for row in &summary.rows {
            w.write_record([
                row.epsilon.to_string(),
                row.samples.map_or_else(|| "unattained".to_string(), |s| s.to_string()),
                row.achieved_error.to_string(),
            ])?;
        }
        w.flush()?;
    }
    match summary.slope {
        Some(s) => writeln!(out, "# slope,{s}")?,
        None => writeln!(out, "# slope,NA")?,
    }
    Ok(())
}
