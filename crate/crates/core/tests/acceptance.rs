//! Acceptance criteria, one test each. Every test writes a single
//! `PASS`/`FAIL` line directly to stderr so the verdicts show up in the
//! normal `cargo test` output.

use std::io::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use maxk::bandit::BanditEnv;
use maxk::experiment::{run_grid, ConfigOverrides, ExperimentSpec, RunOptions};
use maxk::stats::{wilcoxon_signed_rank, Alternative};
use maxk::trainer::{run_training, Objective, TrainConfig, TrainTrace};
use maxk::verify::{self, Implementations, PropertyResult, VerifyConfig};

fn verdict(id: usize, title: &str, passed: bool, detail: &str) {
    let line = format!("acceptance {id:>2} {} {title}: {detail}\n", if passed { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(passed, "criterion {id} failed: {detail}");
}

fn summarize(props: &[PropertyResult], elapsed: Duration, limit: Duration) -> (bool, String) {
    let ok = props.iter().all(|p| p.passed) && elapsed <= limit;
    let mut parts: Vec<String> = props
        .iter()
        .map(|p| format!("{} worst={:.2e}/{:.0e}{}", p.name, p.worst, p.tolerance, if p.passed { "" } else { " !" }))
        .collect();
    parts.push(format!("{:.2}s (limit {}s)", elapsed.as_secs_f64(), limit.as_secs()));
    if !ok {
        for p in props.iter().filter(|p| !p.passed) {
            parts.push(format!("counterexample {}", p.counterexample.clone().unwrap_or_default()));
        }
    }
    (ok, parts.join("; "))
}

fn sweep_config() -> VerifyConfig {
    VerifyConfig { max_n: 10, trials: 1000, gap_trials: 100, seed: 2024, ..Default::default() }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

#[test]
fn criterion_01_metric_estimators_match_enumeration() {
    let (cfg, imp) = (sweep_config(), Implementations::default());
    let (props, t) = timed(|| vec![verify::check_max_at_k(&cfg, &imp), verify::check_pass_at_k(&cfg, &imp)]);
    let (ok, detail) = summarize(&props, t, Duration::from_secs(10));
    verdict(1, "metric-estimator exactness", ok, &detail);
}

#[test]
fn criterion_02_on_policy_transform_is_exact() {
    let (cfg, imp) = (sweep_config(), Implementations::default());
    let (props, t) = timed(|| {
        vec![
            verify::check_bon_rewards(&cfg, &imp),
            verify::check_weight_mass(&cfg, &imp),
            verify::check_transform_total(&cfg, &imp),
        ]
    });
    let (ok, detail) = summarize(&props, t, Duration::from_secs(60));
    verdict(2, "on-policy transform exactness", ok, &detail);
}

#[test]
fn criterion_03_off_policy_linearization_is_exact() {
    let (cfg, imp) = (sweep_config(), Implementations::default());
    let (props, t) = timed(|| {
        vec![
            verify::check_offpolicy(&cfg, &imp),
            verify::check_offpolicy_reduction(&cfg, &imp),
            verify::check_linearization_order(&cfg, &imp),
        ]
    });
    let shrink = verify::GAP_SHRINK / props[2].worst;
    let (ok, detail) = summarize(&props, t, Duration::from_secs(60));
    verdict(3, "off-policy linearized exactness", ok, &format!("{detail}; gap shrink on halving {shrink:.2}x"));
}

#[test]
fn criterion_04_loo1_matches_enumeration() {
    let (cfg, imp) = (sweep_config(), Implementations::default());
    let (props, t) = timed(|| vec![verify::check_loo1(&cfg, &imp)]);
    let (ok, detail) = summarize(&props, t, Duration::from_secs(60));
    verdict(4, "LOO-1 correctness", ok, &detail);
}

#[test]
fn criterion_05_gradient_estimate_is_unbiased() {
    let cfg = VerifyConfig { unbiased_batches: 200_000, unbiased_n: 8, seed: 11, ..Default::default() };
    let (prop, t) = timed(|| verify::check_unbiasedness(&cfg, &Implementations::default()));
    let (ok, detail) = summarize(&[prop], t, Duration::from_secs(300));
    verdict(5, "gradient unbiasedness (200k batches, k in 2/4/8, 4 SE)", ok, &detail);
}

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct SafeVsRisky {
    vanilla: Vec<TrainTrace>,
    offpolicy: Vec<TrainTrace>,
    elapsed: Duration,
}

fn safe_vs_risky_runs() -> &'static SafeVsRisky {
    static RUNS: OnceLock<SafeVsRisky> = OnceLock::new();
    RUNS.get_or_init(|| {
        let env = BanditEnv::safe_vs_risky();
        let start = Instant::now();
        let run = |objective: Objective| -> Vec<TrainTrace> {
            SEEDS
                .iter()
                .map(|&seed| run_training(&env, &TrainConfig { objective, seed, ..Default::default() }).unwrap())
                .collect()
        };
        let vanilla = run(Objective::VanillaZscore);
        let offpolicy = run(Objective::OffpolicyBon);
        SafeVsRisky { vanilla, offpolicy, elapsed: start.elapsed() }
    })
}

#[test]
fn criterion_06_max_at_k_crossing() {
    let runs = safe_vs_risky_runs();
    let mut ok = runs.elapsed <= Duration::from_secs(60);
    let mut parts = Vec::new();
    for (v, o) in runs.vanilla.iter().zip(&runs.offpolicy) {
        let (vf, of) = (v.final_record(), o.final_record());
        ok &= vf.exact_max_at_1 >= 0.55 && vf.exact_max_at_k <= 0.65 && of.exact_max_at_k >= 0.95;
        parts.push(format!(
            "seed {}: vanilla max@1={:.3} max@8={:.3}, offpolicy-bon max@8={:.3}",
            v.config.seed, vf.exact_max_at_1, vf.exact_max_at_k, of.exact_max_at_k
        ));
    }
    parts.push(format!("{:.2}s", runs.elapsed.as_secs_f64()));
    verdict(6, "max@1 vs max@8 crossing on safe-vs-risky", ok, &parts.join("; "));
}

#[test]
fn criterion_07_entropy_collapse() {
    let runs = safe_vs_risky_runs();
    let mut ok = true;
    let mut parts = Vec::new();
    for (v, o) in runs.vanilla.iter().zip(&runs.offpolicy) {
        let h0 = v.records[0].entropy;
        let (hv, ho) = (v.final_record().entropy, o.final_record().entropy);
        ok &= hv < 0.25 * h0 && ho > hv;
        parts.push(format!("seed {}: H0={h0:.3} vanilla={hv:.3} offpolicy-bon={ho:.3}", v.config.seed));
    }
    verdict(7, "entropy collapse under vanilla z-score", ok, &parts.join("; "));
}

/// First step whose exact max@1 reaches `target`, or `steps + 1` if none does.
fn steps_to(trace: &TrainTrace, target: f64) -> usize {
    trace.records.iter().find(|r| r.exact_max_at_1 >= target).map_or(trace.config.steps + 1, |r| r.step)
}

#[test]
fn criterion_08_binary_vs_continuous_rewards() {
    let env = BanditEnv::graded();
    let target = 0.9 * env.best_arm_mean();
    let mut ok = true;
    let mut parts = vec![format!("target max@1={target:.3}")];
    for seed in SEEDS {
        let base = TrainConfig { seed, k: 1, ..Default::default() };
        let cont = run_training(&env, &base).unwrap();
        let bin = run_training(&env, &TrainConfig { binarize_threshold: Some(1.0), ..base }).unwrap();
        let (sc, sb) = (steps_to(&cont, target), steps_to(&bin, target));
        ok &= sc <= cont.config.steps && 2 * sc <= sb;
        parts.push(format!("seed {seed}: continuous {sc} steps, binary {sb} steps"));
    }
    verdict(8, "continuous rewards learn at least 2x faster than binary", ok, &parts.join("; "));
}

#[test]
fn criterion_09_wilcoxon_exactness() {
    let cfg = VerifyConfig { wilcoxon_max_pairs: 12, ..sweep_config() };
    let prop = verify::check_wilcoxon(&cfg);
    let p = wilcoxon_signed_rank(&[0.9, 0.8, 0.7, 0.95, 0.85], &[0.5, 0.6, 0.4, 0.3, 0.2], Alternative::TwoSided)
        .unwrap()
        .p_value;
    let (ok, detail) = summarize(&[prop], Duration::ZERO, Duration::from_secs(1));
    verdict(9, "Wilcoxon exact path and n=5 p=0.0625", ok && p == 0.0625, &format!("{detail}; n=5 all positive p={p}"));
}

fn metric_columns(csv: &str) -> Vec<String> {
    csv.lines().map(|l| l.split(',').skip(4).collect::<Vec<_>>().join(",")).collect()
}

#[test]
fn criterion_10_grid_runs_are_deterministic() {
    let spec = ExperimentSpec {
        environments: vec!["safe-vs-risky".into(), "graded".into()],
        objectives: vec!["vanilla-zscore".into(), "offpolicy-bon".into(), "loo1".into()],
        seeds: vec![0, 1, 2],
        overrides: ConfigOverrides { steps: Some(60), ..Default::default() },
        output: None,
        json_traces: false,
        base_dir: None,
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = run_grid(&spec, a.path(), &RunOptions { jobs: 4, svg: false }).unwrap();
    let second = run_grid(&spec, b.path(), &RunOptions { jobs: 1, svg: false }).unwrap();
    let mut ok = first == second;
    for id in first.keys() {
        let read = |d: &std::path::Path| std::fs::read_to_string(d.join(format!("{id}.csv"))).unwrap();
        ok &= metric_columns(&read(a.path())) == metric_columns(&read(b.path()));
    }
    verdict(10, "grid rerun is byte-identical", ok, &format!("{} runs compared (4 workers vs 1)", first.len()));
}
