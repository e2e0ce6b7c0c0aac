use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use dtl_core::algorithms::{run, Algo, AlgoConfig};
use dtl_core::envs;
use dtl_core::mdp::{seeded_rng, MdpFile};
use dtl_core::oracles::{error_bound, BoundInputs};
use dtl_ffi::*;

fn last_error() -> String {
    let p = dtl_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn env(name: &str, gamma: f64) -> *mut DtlEnv {
    let name = CString::new(name).unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { dtl_env_new(name.as_ptr(), gamma, &mut out) }, DtlStatus::Ok);
    assert!(!out.is_null());
    out
}

#[test]
fn builtin_env_dims_and_q_star() {
    let e = env("example1", 0.9);
    let (mut s, mut a, mut d) = (0, 0, 0);
    assert_eq!(unsafe { dtl_env_dims(e, &mut s, &mut a, &mut d) }, DtlStatus::Ok);
    assert_eq!((s, a, d), (2, 2, 1));

    let mut needed = 0;
    let mut small = [0.0; 2];
    let st = unsafe { dtl_env_q_star(e, small.as_mut_ptr(), small.len(), &mut needed) };
    assert_eq!(st, DtlStatus::BufferTooSmall);
    assert_eq!(needed, 4);
    assert_eq!(small, [0.0; 2]);

    let mut q = vec![0.0; needed];
    assert_eq!(unsafe { dtl_env_q_star(e, q.as_mut_ptr(), q.len(), &mut needed) }, DtlStatus::Ok);
    let reference = envs::example1(0.9).unwrap().q_star;
    assert_eq!(q.as_slice(), reference.as_slice());
    unsafe { dtl_env_free(e) };
}

#[test]
fn errors_carry_status_and_message() {
    let mut out = ptr::null_mut();
    let name = CString::new("nowhere").unwrap();
    assert_eq!(unsafe { dtl_env_new(name.as_ptr(), 0.9, &mut out) }, DtlStatus::InvalidArgument);
    assert!(out.is_null());
    assert!(last_error().contains("nowhere"));

    assert_eq!(unsafe { dtl_env_new(ptr::null(), 0.9, &mut out) }, DtlStatus::NullPointer);
    assert!(last_error().contains("name"));

    let baird = CString::new("baird").unwrap();
    assert_eq!(unsafe { dtl_env_new(baird.as_ptr(), f64::NAN, &mut out) }, DtlStatus::InvalidArgument);
    assert!(last_error().contains("gamma"));

    let bad = CString::new("{\"n_states\": 2}").unwrap();
    assert_eq!(unsafe { dtl_env_from_json(bad.as_ptr(), &mut out) }, DtlStatus::InvalidModel);

    let e = env("baird", 0.99);
    assert_eq!(unsafe { dtl_env_dims(e, ptr::null_mut(), ptr::null_mut(), ptr::null_mut()) }, DtlStatus::NullPointer);
    // A successful call clears the message.
    let (mut s, mut a, mut d) = (0, 0, 0);
    assert_eq!(unsafe { dtl_env_dims(e, &mut s, &mut a, &mut d) }, DtlStatus::Ok);
    assert!(dtl_last_error().is_null());
    unsafe { dtl_env_free(e) };
    unsafe { dtl_env_free(ptr::null_mut()) };
    unsafe { dtl_runlog_free(ptr::null_mut()) };
}

#[test]
fn json_env_matches_core_model() {
    let core = envs::random_mdp(3, 3, 2, 0.85).unwrap();
    let json = serde_json_text(&core.mdp);
    let text = CString::new(json).unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { dtl_env_from_json(text.as_ptr(), &mut out) }, DtlStatus::Ok);
    let mut q = [0.0; 6];
    let mut needed = 0;
    assert_eq!(unsafe { dtl_env_q_star(out, q.as_mut_ptr(), 6, &mut needed) }, DtlStatus::Ok);
    for (x, y) in q.iter().zip(core.q_star.as_slice()) {
        assert!((x - y).abs() < 1e-9);
    }
    unsafe { dtl_env_free(out) };
}

fn serde_json_text(mdp: &dtl_core::Mdp) -> String {
    let f = MdpFile::from(mdp);
    let mats: Vec<String> = f
        .transitions
        .iter()
        .map(|m| format!("{:?}", m))
        .collect();
    format!(
        "{{\"n_states\":{},\"n_actions\":{},\"gamma\":{:?},\"rewards\":{:?},\"transitions\":[{}]}}",
        f.n_states,
        f.n_actions,
        f.gamma,
        f.rewards,
        mats.join(",")
    )
}

#[test]
fn run_matches_core_and_exposes_records() {
    let e = env("example1", 0.9);
    let mut cfg = dtl_run_config_default();
    cfg.outer = 10;
    cfg.inner = 500;
    cfg.alpha = 0.01;
    cfg.seed = 4;
    let mut log = ptr::null_mut();
    assert_eq!(unsafe { dtl_run(e, &cfg, &mut log) }, DtlStatus::Ok);
    assert_eq!(unsafe { dtl_runlog_len(log) }, 10);
    assert!(!unsafe { dtl_runlog_diverged(log) });

    let core_env = envs::example1(0.9).unwrap();
    let core_cfg = AlgoConfig { seed: 4, ..AlgoConfig::new(10, 500, 0.01) };
    let reference = run(&core_env, Algo::TargetTrunc, &core_cfg, &mut seeded_rng(4)).unwrap();

    let mut rec = DtlRecord::default();
    for i in 0..10 {
        assert_eq!(unsafe { dtl_runlog_record(log, i, &mut rec) }, DtlStatus::Ok);
        let r = &reference.records[i];
        assert_eq!((rec.t, rec.samples, rec.sup_error, rec.theta_norm), (r.t, r.samples, r.sup_error, r.theta_norm));
    }
    assert_eq!(unsafe { dtl_runlog_record(log, 10, &mut rec) }, DtlStatus::InvalidArgument);

    let mut theta = [0.0; 1];
    let mut needed = 0;
    assert_eq!(unsafe { dtl_runlog_theta(log, theta.as_mut_ptr(), 1, &mut needed) }, DtlStatus::Ok);
    assert_eq!(theta.to_vec(), reference.final_theta);

    cfg.algo = 99;
    let mut other = ptr::null_mut();
    assert_eq!(unsafe { dtl_run(e, &cfg, &mut other) }, DtlStatus::InvalidArgument);
    assert!(last_error().contains("99"));
    cfg.algo = DtlAlgo::Target as u32;
    cfg.inner = 0;
    assert_eq!(unsafe { dtl_run(e, &cfg, &mut other) }, DtlStatus::InvalidArgument);

    unsafe {
        dtl_runlog_free(log);
        dtl_env_free(e);
    }
}

#[test]
fn bound_matches_core() {
    let inputs = DtlBoundInputs {
        gamma: 0.9,
        outer: 50,
        inner: 100_000,
        alpha: 1e-4,
        t_alpha: 5,
        lambda_min: 0.25,
        e_approx: 0.1,
        init_gap: 10.0,
    };
    let mut terms = DtlBoundTerms::default();
    assert_eq!(unsafe { dtl_error_bound(&inputs, &mut terms) }, DtlStatus::Ok);
    let core = error_bound(&BoundInputs {
        gamma: 0.9,
        outer: 50,
        inner: 100_000,
        alpha: 1e-4,
        t_alpha: 5,
        lambda_min: 0.25,
        e_approx: 0.1,
        init_gap: 10.0,
    })
    .unwrap();
    assert_eq!((terms.e1, terms.e2, terms.e3, terms.e4, terms.total), (core.e1, core.e2, core.e3, core.e4, core.total));
    assert_eq!(terms.stepsize_warning, core.stepsize_warning);

    let bad = DtlBoundInputs { inner: 3, ..inputs };
    assert_eq!(unsafe { dtl_error_bound(&bad, &mut terms) }, DtlStatus::InvalidArgument);
    assert_eq!(unsafe { dtl_error_bound(ptr::null(), &mut terms) }, DtlStatus::NullPointer);
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(dtl_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(dir.join("include/dtl.h")).unwrap();
    let src = std::fs::read_to_string(dir.join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .split("extern \"C\" fn ")
        .skip(1)
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 15, "{exports:?}");
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    for ty in ["DtlStatus", "DtlAlgo", "typedef struct DtlEnv DtlEnv", "typedef struct DtlRunLog DtlRunLog"] {
        assert!(header.contains(ty), "{ty} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let Ok(status) = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-std=c99", "-x", "c"])
        .arg(dir.join("include/dtl.h"))
        .status()
    else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    assert!(status.success());
}
