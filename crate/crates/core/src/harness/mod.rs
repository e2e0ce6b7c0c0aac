//! Experiment orchestration: spec files, environment resolution, parallel
//! seeded runs and CSV output.

mod check;
mod presets;
mod sweep;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use check::{run_checks, write_check_csv, CheckResult};
pub use presets::{fig_names, preset_json, preset_spec, sweep_preset, PRESETS};
pub use sweep::{run_sweep, write_sweep_csv, Rung, SweepRow, SweepSpec, SweepSummary};

use crate::algorithms::{run, Algo, AlgoConfig, RunLog};
use crate::envs::{self, Environment};
use crate::error::{Error, Result};
use crate::linear_fa::{FeatureFile, FeatureMap};
use crate::mdp::{seeded_rng, Mdp, MdpFile, Policy};

/// Environment variable that replaces `base_seed` when set.
pub const SEED_ENV: &str = "DTL_SEED";

pub const RUN_HEADER: [&str; 9] = [
    "run_id",
    "env",
    "algo",
    "seed",
    "t",
    "samples",
    "sup_error",
    "theta_norm",
    "diverged",
];

fn one() -> usize {
    1
}

/// A batch of seeded runs of one algorithm on one environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// `baird`, `example1`, `random:SEED:S:A`, `uniform:SEED:S:A`, or the
    /// path of an MDP JSON file.
    pub env: String,
    /// Required for built-in environments; overrides the discount stored in
    /// an MDP file.
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Feature JSON file replacing the environment's default features.
    #[serde(default)]
    pub features: Option<PathBuf>,
    #[serde(default)]
    pub normalize_features: bool,
    pub algo: Algo,
    pub cfg: AlgoConfig,
    #[serde(default = "one")]
    pub n_seeds: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_seeds == 0 {
            return Err(Error::InvalidArgument("n_seeds: must be at least 1".into()));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g < 1.0) {
                return Err(Error::InvalidArgument(format!("gamma: must lie in (0, 1), got {g}")));
            }
        }
        self.cfg
            .validate()
            .map_err(|e| Error::InvalidArgument(format!("cfg: {e}")))
    }

    /// Seeds `base_seed, base_seed + 1, ...`.
    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.n_seeds as u64).map(move |i| self.base_seed.wrapping_add(i))
    }

    pub fn environment(&self) -> Result<Environment> {
        resolve_env(
            &self.env,
            self.gamma,
            self.features.as_deref(),
            self.normalize_features,
        )
    }
}

/// Reads `DTL_SEED`, if set.
pub fn seed_override() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::InvalidArgument(format!("{SEED_ENV}: not an unsigned integer: `{v}`"))),
        Err(_) => Ok(None),
    }
}

fn parse_generated(rest: &str) -> Result<(u64, usize, usize)> {
    let parts: Vec<&str> = rest.split(':').collect();
    let bad = || Error::InvalidArgument(format!("env: expected KIND:SEED:STATES:ACTIONS, got `{rest}`"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let seed = parts[0].parse().map_err(|_| bad())?;
    let s = parts[1].parse().map_err(|_| bad())?;
    let a = parts[2].parse().map_err(|_| bad())?;
    if s == 0 || a == 0 {
        return Err(bad());
    }
    Ok((seed, s, a))
}

fn need_gamma(gamma: Option<f64>, name: &str) -> Result<f64> {
    gamma.ok_or_else(|| Error::InvalidArgument(format!("gamma: required for built-in env `{name}`")))
}

/// Builds an environment from a name or MDP file, then applies the feature
/// override and normalization.
pub fn resolve_env(
    name: &str,
    gamma: Option<f64>,
    features: Option<&Path>,
    normalize: bool,
) -> Result<Environment> {
    let mut env = if name == "baird" {
        envs::baird(need_gamma(gamma, name)?)?
    } else if name == "example1" {
        envs::example1(need_gamma(gamma, name)?)?
    } else if let Some(rest) = name.strip_prefix("random:") {
        let (seed, s, a) = parse_generated(rest)?;
        envs::random_mdp(seed, s, a, need_gamma(gamma, name)?)?
    } else if let Some(rest) = name.strip_prefix("uniform:") {
        let (seed, s, a) = parse_generated(rest)?;
        envs::uniform_weight_mdp(seed, s, a, need_gamma(gamma, name)?)?
    } else {
        let path = Path::new(name);
        if !path.is_file() {
            return Err(Error::InvalidArgument(format!(
                "env: `{name}` is neither a built-in environment nor a readable file"
            )));
        }
        let mut mdp = read_mdp(path)?;
        if let Some(g) = gamma {
            mdp = mdp.rescaled(g, 1.0)?;
        }
        let behavior = Policy::uniform(mdp.n_states(), mdp.n_actions());
        let mut env = envs::tabular(mdp, behavior)?;
        env.name = path
            .file_stem()
            .map_or_else(|| name.to_string(), |s| s.to_string_lossy().into_owned());
        env
    };
    if let Some(path) = features {
        env = env.with_features(read_features(path)?)?;
    }
    if normalize && !env.features.is_normalized() {
        let fm = env.features.normalized();
        env = env.with_features(fm)?;
    }
    Ok(env)
}

pub fn read_mdp(path: &Path) -> Result<Mdp> {
    Mdp::from_json(&fs::read_to_string(path)?)
}

pub fn read_features(path: &Path) -> Result<FeatureMap> {
    let file: FeatureFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    FeatureMap::try_from(file)
}

/// Default location of the feature file that accompanies an exported MDP.
pub fn features_path_for(mdp_path: &Path) -> PathBuf {
    let stem = mdp_path
        .file_stem()
        .map_or_else(|| "env".into(), |s| s.to_string_lossy().into_owned());
    mdp_path.with_file_name(format!("{stem}.features.json"))
}

/// Writes the MDP and feature JSON files of `env`.
pub fn export_env(env: &Environment, mdp_path: &Path, features_path: &Path) -> Result<()> {
    let mdp = serde_json::to_string_pretty(&MdpFile::from(&env.mdp))?;
    fs::write(mdp_path, mdp + "\n")?;
    let fm = serde_json::to_string_pretty(&FeatureFile::from(&env.features))?;
    fs::write(features_path, fm + "\n")?;
    Ok(())
}

/// Runs every seed of `spec` on a pool of `jobs` threads. Logs come back in
/// seed order.
pub fn run_experiment(spec: &ExperimentSpec, jobs: usize) -> Result<Vec<RunLog>> {
    spec.validate()?;
    let env = spec.environment()?;
    let seeds: Vec<u64> = spec.seeds().collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("jobs: {e}")))?;
    pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let cfg = AlgoConfig {
                    seed,
                    ..spec.cfg.clone()
                };
                run(&env, spec.algo, &cfg, &mut seeded_rng(seed))
            })
            .collect()
    })
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

/// One row per logged record with `t >= 1`, ordered by `(seed, t)`. Floats
/// use the shortest representation that round-trips.
pub fn write_runs_csv<W: Write>(logs: &[RunLog], out: W) -> Result<()> {
    let mut order: Vec<usize> = (0..logs.len()).collect();
    order.sort_by_key(|&i| logs[i].seed);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RUN_HEADER)?;
    for (run_id, &i) in order.iter().enumerate() {
        let log = &logs[i];
        for rec in &log.records {
            w.write_record([
                run_id.to_string(),
                log.env.clone(),
                log.algo.to_string(),
                log.seed.to_string(),
                rec.t.to_string(),
                rec.samples.to_string(),
                rec.sup_error.to_string(),
                rec.theta_norm.to_string(),
                flag(rec.diverged).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn runs_csv_string(logs: &[RunLog]) -> Result<String> {
    let mut buf = Vec::new();
    write_runs_csv(logs, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

/// Writes `contents` to `path`, creating parent directories.
pub fn write_output(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> ExperimentSpec {
        ExperimentSpec {
            env: "example1".into(),
            gamma: Some(0.9),
            features: None,
            normalize_features: false,
            algo: Algo::TargetTrunc,
            cfg: AlgoConfig::new(1, 1, 1e-3),
            n_seeds: 1,
            base_seed: 0,
            output: None,
        }
    }

    #[test]
    fn single_step_gives_one_row() {
        let logs = run_experiment(&tiny_spec(), 1).unwrap();
        let csv = runs_csv_string(&logs).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], RUN_HEADER.join(","));
        assert!(lines[1].starts_with("0,example1,target_trunc,0,1,1,"));
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = tiny_spec();
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains("\"T\":1"));
        assert_eq!(ExperimentSpec::from_json(&text).unwrap(), spec);
        assert!(ExperimentSpec::from_json(r#"{"env":"baird","algo":"nope","cfg":{}}"#).is_err());
    }

    #[test]
    fn field_level_validation() {
        let mut spec = tiny_spec();
        spec.n_seeds = 0;
        assert!(spec.validate().unwrap_err().to_string().contains("n_seeds"));
        let mut spec = tiny_spec();
        spec.cfg.alpha = -1.0;
        assert!(spec.validate().unwrap_err().to_string().contains("cfg"));
    }

    #[test]
    fn env_names() {
        assert!(resolve_env("random:1:3:2", Some(0.8), None, false).is_ok());
        assert!(resolve_env("random:1:3", Some(0.8), None, false).is_err());
        assert!(resolve_env("baird", None, None, false).is_err());
        assert!(resolve_env("no/such/file.json", None, None, false).is_err());
        let env = resolve_env("baird", Some(0.9), None, true).unwrap();
        assert!(env.features.is_normalized());
    }

    #[test]
    fn export_import_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let env = envs::random_mdp(3, 3, 2, 0.8).unwrap();
        let mdp_path = dir.path().join("r.json");
        let fpath = features_path_for(&mdp_path);
        assert!(fpath.ends_with("r.features.json"));
        export_env(&env, &mdp_path, &fpath).unwrap();
        let back = resolve_env(mdp_path.to_str().unwrap(), None, Some(&fpath), false).unwrap();
        assert_eq!(back.mdp, env.mdp);
        assert_eq!(back.features, env.features);
        assert_eq!(back.name, "r");
    }

    #[test]
    fn parallel_matches_serial() {
        let mut spec = tiny_spec();
        spec.n_seeds = 6;
        spec.cfg = AlgoConfig::new(4, 200, 1e-2);
        let a = runs_csv_string(&run_experiment(&spec, 1).unwrap()).unwrap();
        let b = runs_csv_string(&run_experiment(&spec, 4).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}
