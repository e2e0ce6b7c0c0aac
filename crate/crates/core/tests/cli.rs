use std::path::Path;
use std::process::{Command, Output};

fn dtl(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dtl"))
        .args(args)
        .current_dir(dir)
        .env_remove("DTL_SEED")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn run_writes_header_and_one_row_per_step_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let o = dtl(
        dir.path(),
        &["run", "--env", "example1", "--gamma", "0.9", "--algo", "target_trunc", "--T", "4", "--K", "50", "--alpha", "0.01", "--seeds", "3"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("run_id,env,algo,seed,t,samples,sup_error,theta_norm,diverged"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 12);
    let seeds: Vec<&str> = rows.iter().map(|r| r[3]).collect();
    assert_eq!(seeds, ["0", "0", "0", "0", "1", "1", "1", "1", "2", "2", "2", "2"]);
    assert!(rows.iter().all(|r| r.len() == 9 && r[1] == "example1" && r[8] == "0"));
}

#[test]
fn seed_environment_variable_shifts_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["run", "--env", "baird", "--gamma", "0.99", "--algo", "target", "--T", "2", "--K", "10", "--alpha", "0.01"];
    let plain = stdout(&dtl(dir.path(), &args));
    let with_env = Command::new(env!("CARGO_BIN_EXE_dtl"))
        .args(args)
        .env("DTL_SEED", "7")
        .output()
        .unwrap();
    let shifted = stdout(&with_env);
    assert!(shifted.lines().nth(1).unwrap().contains(",7,1,"));
    assert_ne!(plain, shifted);
    let flag = stdout(&dtl(dir.path(), &[&args[..], &["--base-seed", "7"]].concat()));
    assert_eq!(flag, shifted);
}

#[test]
fn spec_file_runs_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let spec = r#"{"env": "random:2:3:2", "gamma": 0.8, "algo": "target_proj",
        "cfg": {"T": 3, "K": 20, "alpha": 0.05}, "n_seeds": 2, "output": "out/runs.csv"}"#;
    std::fs::write(dir.path().join("spec.json"), spec).unwrap();
    let o = dtl(dir.path(), &["run", "--spec", "spec.json", "--T", "5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out/runs.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 5);
    assert!(csv.lines().nth(1).unwrap().contains("random:2:3:2,target_proj"));
}

#[test]
fn invalid_input_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = dtl(dir.path(), &["run", "--env", "nowhere.json", "--algo", "target", "--T", "1", "--K", "1", "--alpha", "0.1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));

    std::fs::write(dir.path().join("bad.json"), r#"{"env": "baird", "algo": "target", "cfg": {"T": 1, "K": 1, "alpha": 0.1}, "typo": 1}"#).unwrap();
    let o = dtl(dir.path(), &["run", "--spec", "bad.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("typo"));
}

#[test]
fn export_then_import_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let o = dtl(dir.path(), &["env", "export", "baird", "--gamma", "0.99", "--out", "b.json"]);
    assert!(o.status.success());
    assert!(dir.path().join("b.features.json").is_file());
    let o = dtl(dir.path(), &["env", "import", "b.json", "--features", "b.features.json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("states      7"));
    assert!(text.contains("actions     2"));
    assert!(text.contains("features    14"));

    // A file MDP runs like a built-in.
    let o = dtl(dir.path(), &["run", "--env", "b.json", "--algo", "target_trunc", "--T", "1", "--K", "5", "--alpha", "0.01"]);
    assert!(o.status.success());
    assert!(stdout(&o).lines().nth(1).unwrap().starts_with("0,b,target_trunc,0,1,5,"));
}

#[test]
fn bound_reports_terms_and_warns_on_large_stepsize() {
    let dir = tempfile::tempdir().unwrap();
    let o = dtl(dir.path(), &["bound", "--env", "example1", "--gamma", "0.9", "--T", "50", "--K", "100000"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for label in ["E1", "E2", "E3", "E4", "total", "t_alpha", "lambda_min"] {
        assert!(text.lines().any(|l| l.starts_with(label)), "{label}");
    }
    assert!(!text.contains("warning"));
    let o = dtl(dir.path(), &["bound", "--env", "example1", "--gamma", "0.9", "--T", "50", "--K", "100000", "--alpha", "0.01"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&[o.stdout, o.stderr].concat()).contains("warning"));
}

#[test]
fn check_passes_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = dtl(dir.path(), &["check", "--out", "check.csv"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let csv = std::fs::read_to_string(dir.path().join("check.csv")).unwrap();
    assert!(csv.starts_with("module,property,passed,detail\n"));
    assert!(csv.lines().skip(1).all(|l| l.split(',').nth(2) == Some("1")));
}

#[test]
fn fig_list_names_six_presets() {
    let dir = tempfile::tempdir().unwrap();
    let o = dtl(dir.path(), &["fig", "--list"]);
    assert_eq!(stdout(&o).lines().collect::<Vec<_>>(), ["fig1", "fig2", "fig3", "fig4", "fig5", "fig6"]);
    let o = dtl(dir.path(), &["fig", "fig9"]);
    assert_eq!(o.status.code(), Some(2));
}
