use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn maxk(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maxk")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn write_spec(dir: &Path, envs: &[&str], objectives: &[&str], seeds: &[u64], steps: usize) -> std::path::PathBuf {
    let spec = serde_json::json!({
        "environments": envs,
        "objectives": objectives,
        "seeds": seeds,
        "overrides": { "steps": steps },
    });
    let path = dir.join("spec.json");
    fs::write(&path, spec.to_string()).unwrap();
    path
}

fn csv_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    names
}

#[test]
fn verify_small_sweep_passes() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("verify.json");
    let out = maxk(
        &["verify", "--max-n", "6", "--trials", "50", "--batches", "20000", "--json", json.to_str().unwrap()],
        dir.path(),
    );
    let stdout = text(&out.stdout);
    assert_eq!(code(&out), 0, "{stdout}{}", text(&out.stderr));
    assert!(stdout.contains("properties passed"));
    assert!(!stdout.contains("FAIL"));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(json).unwrap()).unwrap();
    assert!(report["properties"].as_array().unwrap().len() >= 10);
}

#[test]
fn verify_detects_injected_bug() {
    let dir = tempfile::tempdir().unwrap();
    let out = maxk(
        &["verify", "--max-n", "6", "--trials", "50", "--batches", "2000", "--mutation", "diag-off-by-one"],
        dir.path(),
    );
    let stdout = text(&out.stdout);
    assert_eq!(code(&out), 1, "{stdout}");
    assert!(stdout.contains("FAIL"));
    assert!(stdout.contains("counterexample"));
}

#[test]
fn verify_rejects_oversized_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let out = maxk(&["verify", "--max-n", "40"], dir.path());
    assert_eq!(code(&out), 2);
}

#[test]
fn run_writes_one_csv_per_cell_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        &["safe-vs-risky", "linear"],
        &["vanilla-zscore", "offpolicy-bon", "loo1"],
        &[0, 1, 2, 3, 4],
        25,
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let first = maxk(&["run", "--spec", spec.to_str().unwrap(), "--out", a.to_str().unwrap(), "--jobs", "3"], dir.path());
    assert_eq!(code(&first), 0, "{}", text(&first.stderr));
    let second = maxk(&["run", "--spec", spec.to_str().unwrap(), "--out", b.to_str().unwrap()], dir.path());
    assert_eq!(code(&second), 0, "{}", text(&second.stderr));

    let names = csv_files(&a);
    assert_eq!(names.len(), 30);
    assert!(names.contains(&"linear__loo1__seed4.csv".to_string()));
    assert_eq!(names, csv_files(&b));
    for name in &names {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name} differs");
    }
    assert_eq!(fs::read(a.join("summary.json")).unwrap(), fs::read(b.join("summary.json")).unwrap());

    let csv = fs::read_to_string(a.join("safe-vs-risky__offpolicy-bon__seed0.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("step,objective,n,k,exact_max_at_1,exact_max_at_k,entropy,kl_to_init,mean_reward")
    );
    assert_eq!(lines.count(), 26);
}

#[test]
fn run_seed_flag_replaces_spec_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), &["linear"], &["loo1"], &[0, 1, 2], 5);
    let out_dir = dir.path().join("out");
    let out = maxk(
        &["run", "--spec", spec.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "--seed", "7,9"],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", text(&out.stderr));
    assert_eq!(csv_files(&out_dir), vec!["linear__loo1__seed7.csv", "linear__loo1__seed9.csv"]);
}

#[test]
fn run_resolves_env_files_relative_to_spec() {
    let dir = tempfile::tempdir().unwrap();
    let sub = dir.path().join("specs");
    fs::create_dir_all(sub.join("envs")).unwrap();
    let env = r#"{"arms": [[{"value": 0.0, "prob": 0.5}, {"value": 1.0, "prob": 0.5}], [{"value": 0.4, "prob": 1.0}]]}"#;
    fs::write(sub.join("envs/coin.json"), env).unwrap();
    let spec = write_spec(&sub, &["envs/coin.json"], &["vanilla-zscore"], &[0], 5);
    let out = maxk(&["run", "--spec", spec.to_str().unwrap(), "--out", "res"], dir.path());
    assert_eq!(code(&out), 0, "{}", text(&out.stderr));
    assert!(dir.path().join("res/coin__vanilla-zscore__seed0.csv").exists());
}

#[test]
fn run_rejects_unknown_objective_with_choices() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), &["linear"], &["best-guess"], &[0], 5);
    let out = maxk(&["run", "--spec", spec.to_str().unwrap(), "--out", "res"], dir.path());
    assert_eq!(code(&out), 2);
    let stderr = text(&out.stderr);
    assert!(stderr.contains("best-guess"), "{stderr}");
    assert!(stderr.contains("offpolicy-bon") && stderr.contains("loo1"), "{stderr}");
    assert!(!dir.path().join("res/summary.json").exists());
}

#[test]
fn run_missing_spec_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = maxk(&["run", "--spec", "absent.json"], dir.path());
    assert_eq!(code(&out), 2);
    assert!(text(&out.stderr).contains("absent.json"));
}

#[test]
fn run_svg_renders_curves() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), &["linear"], &["vanilla-zscore", "loo1"], &[0, 1], 10);
    let out = maxk(&["run", "--spec", spec.to_str().unwrap(), "--out", "res", "--svg"], dir.path());
    assert_eq!(code(&out), 0, "{}", text(&out.stderr));
    let svg = fs::read_to_string(dir.path().join("res/linear__max_at_k.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("polyline"));
}

#[test]
fn report_writes_markdown_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), &["safe-vs-risky"], &["vanilla-zscore", "offpolicy-bon"], &[0, 1, 2, 3, 4, 5], 40);
    let run = maxk(&["run", "--spec", spec.to_str().unwrap(), "--out", "res", "--jobs", "2"], dir.path());
    assert_eq!(code(&run), 0, "{}", text(&run.stderr));

    let two = maxk(&["report", "res/summary.json", "--out", "two"], dir.path());
    assert_eq!(code(&two), 0, "{}", text(&two.stderr));
    let one = maxk(&["report", "res/summary.json", "--out", "one", "--one-sided"], dir.path());
    assert_eq!(code(&one), 0, "{}", text(&one.stderr));

    let md = fs::read_to_string(dir.path().join("two/report.md")).unwrap();
    assert!(md.contains("safe-vs-risky") && md.contains("offpolicy-bon"));
    let csv = fs::read_to_string(dir.path().join("two/report.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("environment,objective,k,seeds,mean,std,best,p_value"));
    assert_eq!(lines.count(), 2);

    let p_values = |path: &str| -> Vec<f64> {
        fs::read_to_string(dir.path().join(path))
            .unwrap()
            .lines()
            .skip(1)
            .filter_map(|l| l.rsplit(',').next().and_then(|p| p.parse().ok()))
            .collect()
    };
    let (p2, p1) = (p_values("two/report.csv"), p_values("one/report.csv"));
    assert_eq!(p2.len(), 1);
    assert!((p1[0] - p2[0] / 2.0).abs() < 1e-12, "one-sided {p1:?} vs two-sided {p2:?}");
}

#[test]
fn report_missing_summary_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = maxk(&["report", "nowhere/summary.json"], dir.path());
    assert_eq!(code(&out), 2);
}
