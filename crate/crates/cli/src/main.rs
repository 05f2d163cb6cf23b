use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use maxk::experiment::{build_report, has_numerical_failure, load_summary, run_grid, ExperimentSpec, RunOptions, RunStatus};
use maxk::verify::{run_suite, Implementations, VerifyConfig};
use maxk::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "maxk", version, about = "max@k estimators, Best-of-N policy gradients and bandit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check every closed form against brute-force enumeration.
    Verify {
        /// Largest group size swept (k <= n <= max-n).
        #[arg(long, default_value_t = 10)]
        max_n: usize,
        /// Random groups per property.
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Monte Carlo batches for the unbiasedness check.
        #[arg(long, default_value_t = 200_000)]
        batches: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the full report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Swap in a deliberately wrong implementation.
        #[arg(long, hide = true)]
        mutation: Option<String>,
    },
    /// Run an environment x objective x seed grid.
    Run {
        #[arg(long)]
        spec: PathBuf,
        /// Output directory (defaults to the spec's `output`, then `results`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Replace the spec's seeds, e.g. `--seed 0,1,2`.
        #[arg(long, value_delimiter = ',')]
        seed: Option<Vec<u64>>,
        /// Also render max@k curves as SVG.
        #[arg(long)]
        svg: bool,
    },
    /// Compare methods across one or more grid summaries.
    Report {
        #[arg(required = true)]
        summaries: Vec<PathBuf>,
        /// Directory for report.md and report.csv.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Test whether the best method is greater, instead of two-sided.
        #[arg(long)]
        one_sided: bool,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::NumericalFailure { .. } => EXIT_NUMERICAL,
        _ => EXIT_CONFIG,
    }
}

fn fail(err: Error) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(exit_code(&err))
}

fn verify(config: VerifyConfig, json: Option<PathBuf>, mutation: Option<String>) -> ExitCode {
    let imp = match mutation.as_deref().map(Implementations::mutated).transpose() {
        Ok(i) => i.unwrap_or_default(),
        Err(e) => return fail(e),
    };
    let report = match run_suite(&config, &imp) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    println!("verify: max_n={} trials={} batches={} seed={}", config.max_n, config.trials, config.unbiased_batches, config.seed);
    for p in &report.properties {
        let status = if p.passed { "PASS" } else { "FAIL" };
        println!("{status}  {:<50} worst={:.3e} tol={:.1e} cases={}", p.name, p.worst, p.tolerance, p.cases);
    }
    for p in report.properties.iter().filter(|p| !p.passed) {
        if let Some(ce) = &p.counterexample {
            println!("counterexample for '{}': {ce}", p.name);
        }
    }
    if let Some(path) = json {
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        if let Err(e) = fs::write(&path, text) {
            return fail(e.into());
        }
    }
    if report.all_passed() {
        println!("all {} properties passed", report.properties.len());
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILURE)
    }
}

fn run(spec: PathBuf, out: Option<PathBuf>, jobs: usize, seeds: Option<Vec<u64>>, svg: bool) -> ExitCode {
    let mut spec = match ExperimentSpec::load(&spec) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    if let Some(s) = seeds {
        spec.seeds = s;
    }
    let out = out.or_else(|| spec.output.clone()).unwrap_or_else(|| PathBuf::from("results"));
    let summary = match run_grid(&spec, &out, &RunOptions { jobs, svg }) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    for (id, r) in &summary {
        match (&r.final_metrics, r.status) {
            (Some(m), RunStatus::Ok) => {
                println!("{id}: max@1={:.4} max@{}={:.4} entropy={:.4}", m.exact_max_at_1, r.config.k, m.exact_max_at_k, m.entropy)
            }
            _ => println!("{id}: {:?} {}", r.status, r.error.as_deref().unwrap_or("")),
        }
    }
    println!("{} runs written to {}", summary.len(), out.display());
    if has_numerical_failure(&summary) {
        ExitCode::from(EXIT_NUMERICAL)
    } else if summary.values().any(|r| r.status != RunStatus::Ok) {
        ExitCode::from(EXIT_CONFIG)
    } else {
        ExitCode::SUCCESS
    }
}

fn report(paths: Vec<PathBuf>, out: Option<PathBuf>, one_sided: bool) -> ExitCode {
    let summaries = match paths.iter().map(|p| load_summary(p)).collect::<Result<Vec<_>, _>>() {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    let report = match build_report(&summaries, one_sided) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    let md = report.to_markdown();
    print!("{md}");
    if let Some(dir) = out {
        let written = fs::create_dir_all(&dir)
            .and_then(|_| fs::write(dir.join("report.md"), &md))
            .and_then(|_| fs::write(dir.join("report.csv"), report.to_csv()));
        if let Err(e) = written {
            return fail(e.into());
        }
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Verify { max_n, trials, batches, seed, json, mutation } => {
            let config = VerifyConfig { max_n, trials, seed, unbiased_batches: batches, ..Default::default() };
            verify(config, json, mutation)
        }
        Command::Run { spec, out, jobs, seed, svg } => run(spec, out, jobs, seed, svg),
        Command::Report { summaries, out, one_sided } => report(summaries, out, one_sided),
    }
}
