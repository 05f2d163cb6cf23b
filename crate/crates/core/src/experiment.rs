//! Experiment grids (environment x objective x seed) and their comparison
//! reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandit::{BanditEnv, BUILTIN_ENVS};
use crate::error::{Error, Result};
use crate::stats::{wilcoxon_signed_rank, Alternative};
use crate::trainer::{run_training, BonNormalization, Objective, TrainConfig, TrainTrace};

pub const SUMMARY_FILE: &str = "summary.json";

/// Per-grid overrides of [`TrainConfig`] fields; `seed` and `objective` come
/// from the grid itself.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigOverrides {
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub lr: Option<f64>,
    pub beta: Option<f64>,
    pub epsilon: Option<f64>,
    pub ppo_iters: Option<usize>,
    pub steps: Option<usize>,
    pub clamp_delta: Option<f64>,
    pub binarize_threshold: Option<f64>,
    pub normalization: Option<BonNormalization>,
    pub baseline_decay: Option<f64>,
}

impl ConfigOverrides {
    pub fn apply(&self, objective: Objective, seed: u64) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            objective,
            seed,
            n: self.n.unwrap_or(d.n),
            k: self.k.unwrap_or(d.k),
            lr: self.lr.unwrap_or(d.lr),
            beta: self.beta.unwrap_or(d.beta),
            epsilon: self.epsilon.unwrap_or(d.epsilon),
            ppo_iters: self.ppo_iters.unwrap_or(d.ppo_iters),
            steps: self.steps.unwrap_or(d.steps),
            clamp_delta: self.clamp_delta.unwrap_or(d.clamp_delta),
            binarize_threshold: self.binarize_threshold.or(d.binarize_threshold),
            normalization: self.normalization.unwrap_or(d.normalization),
            baseline_decay: self.baseline_decay.unwrap_or(d.baseline_decay),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Built-in fixture names or environment JSON paths (relative paths are
    /// taken from the spec file's directory).
    pub environments: Vec<String>,
    pub objectives: Vec<String>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub overrides: ConfigOverrides,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Also write a JSON trace (config and per-step probabilities) per run.
    #[serde(default)]
    pub json_traces: bool,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

/// A resolved grid cell.
#[derive(Debug, Clone)]
pub struct Cell {
    pub env_label: String,
    pub env: BanditEnv<f64>,
    pub config: TrainConfig,
}

impl Cell {
    pub fn run_id(&self) -> String {
        run_id(&self.env_label, self.config.objective, self.config.seed)
    }
}

pub fn run_id(env: &str, objective: Objective, seed: u64) -> String {
    format!("{env}__{objective}__seed{seed}")
}

fn label_for(entry: &str) -> String {
    let raw = if BUILTIN_ENVS.contains(&entry) {
        entry.to_string()
    } else {
        Path::new(entry).file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| entry.to_string())
    };
    raw.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read spec {}: {e}", path.display())))?;
        let mut spec = Self::from_json(&text)?;
        spec.base_dir = path.parent().map(Path::to_path_buf);
        Ok(spec)
    }

    pub fn parsed_objectives(&self) -> Result<Vec<Objective>> {
        self.objectives.iter().map(|o| o.parse()).collect()
    }

    fn resolve_env(&self, entry: &str) -> Result<BanditEnv<f64>> {
        if BUILTIN_ENVS.contains(&entry) {
            return BanditEnv::resolve(entry);
        }
        let p = Path::new(entry);
        let full = match (&self.base_dir, p.is_relative()) {
            (Some(base), true) => base.join(p),
            _ => p.to_path_buf(),
        };
        BanditEnv::resolve(&full.to_string_lossy())
    }

    /// Validates the spec and expands it into cells ordered by
    /// (environment, objective, seed).
    pub fn cells(&self) -> Result<Vec<Cell>> {
        for (name, empty) in [
            ("environments", self.environments.is_empty()),
            ("objectives", self.objectives.is_empty()),
            ("seeds", self.seeds.is_empty()),
        ] {
            if empty {
                return Err(Error::Config(format!("spec lists no {name}")));
            }
        }
        let objectives = self.parsed_objectives()?;
        let mut labels = BTreeSet::new();
        let mut envs = Vec::new();
        for entry in &self.environments {
            let label = label_for(entry);
            if !labels.insert(label.clone()) {
                return Err(Error::Config(format!("environment '{label}' listed twice")));
            }
            envs.push((label, self.resolve_env(entry)?));
        }
        let mut cells = Vec::new();
        let mut ids = BTreeSet::new();
        for (label, env) in &envs {
            for &objective in &objectives {
                for &seed in &self.seeds {
                    let config = self.overrides.apply(objective, seed);
                    config.validate()?;
                    let cell = Cell { env_label: label.clone(), env: env.clone(), config };
                    if !ids.insert(cell.run_id()) {
                        return Err(Error::Config(format!("duplicate run {}", cell.run_id())));
                    }
                    cells.push(cell);
                }
            }
        }
        cells.sort_by(|a, b| {
            (&a.env_label, a.config.objective, a.config.seed).cmp(&(&b.env_label, b.config.objective, b.config.seed))
        });
        Ok(cells)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Ok,
    NumericalFailure,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub step: usize,
    pub exact_max_at_1: f64,
    pub exact_max_at_k: f64,
    pub entropy: f64,
    pub kl_to_init: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub env: String,
    pub objective: Objective,
    pub seed: u64,
    pub config: TrainConfig,
    pub status: RunStatus,
    #[serde(default)]
    pub error: Option<String>,
    pub final_metrics: Option<FinalMetrics>,
}

pub type GridSummary = BTreeMap<String, RunSummary>;

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub jobs: usize,
    pub svg: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { jobs: 1, svg: false }
    }
}

struct CellOutcome {
    summary: RunSummary,
    curve: Vec<f64>,
}

fn run_cell(cell: &Cell, out: &Path, json_traces: bool) -> Result<CellOutcome> {
    let (trace, status, error): (TrainTrace, RunStatus, Option<String>) = match run_training(&cell.env, &cell.config) {
        Ok(t) => (t, RunStatus::Ok, None),
        Err(e) => {
            let status = match e.error {
                Error::NumericalFailure { .. } => RunStatus::NumericalFailure,
                _ => RunStatus::Error,
            };
            (e.trace, status, Some(e.error.to_string()))
        }
    };
    let id = cell.run_id();
    fs::write(out.join(format!("{id}.csv")), trace.to_csv())?;
    if json_traces {
        fs::write(out.join(format!("{id}.json")), trace.to_json())?;
    }
    let final_metrics = trace.records.last().map(|r| FinalMetrics {
        step: r.step,
        exact_max_at_1: r.exact_max_at_1,
        exact_max_at_k: r.exact_max_at_k,
        entropy: r.entropy,
        kl_to_init: r.kl_to_init,
    });
    let summary = RunSummary {
        env: cell.env_label.clone(),
        objective: cell.config.objective,
        seed: cell.config.seed,
        config: cell.config.clone(),
        status,
        error,
        final_metrics: if status == RunStatus::Ok { final_metrics } else { None },
    };
    Ok(CellOutcome { summary, curve: trace.records.iter().map(|r| r.exact_max_at_k).collect() })
}

/// Runs every cell, at most `jobs` at a time, and writes one CSV per run plus
/// [`SUMMARY_FILE`]. A run that fails is recorded in the summary and the
/// others continue.
pub fn run_grid(spec: &ExperimentSpec, out: &Path, opts: &RunOptions) -> Result<GridSummary> {
    let cells = spec.cells()?;
    fs::create_dir_all(out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let outcomes: Vec<Result<CellOutcome>> =
        pool.install(|| cells.par_iter().map(|c| run_cell(c, out, spec.json_traces)).collect());

    let mut summary = GridSummary::new();
    let mut curves: BTreeMap<String, BTreeMap<Objective, Vec<Vec<f64>>>> = BTreeMap::new();
    for o in outcomes {
        let o = o?;
        if o.summary.status == RunStatus::Ok {
            curves.entry(o.summary.env.clone()).or_default().entry(o.summary.objective).or_default().push(o.curve);
        }
        summary.insert(run_id(&o.summary.env, o.summary.objective, o.summary.seed), o.summary);
    }
    fs::write(out.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary).expect("summary serializes"))?;
    if opts.svg {
        for (env, by_objective) in &curves {
            fs::write(out.join(format!("{env}__max_at_k.svg")), render_svg(env, by_objective))?;
        }
    }
    Ok(summary)
}

pub fn has_numerical_failure(summary: &GridSummary) -> bool {
    summary.values().any(|r| r.status == RunStatus::NumericalFailure)
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Seed-averaged `exact_max_at_k` against step, one line per objective.
pub fn render_svg(env: &str, curves: &BTreeMap<Objective, Vec<Vec<f64>>>) -> String {
    let (w, h, pad) = (640.0, 400.0, 50.0);
    let steps = curves.values().flat_map(|c| c.iter().map(Vec::len)).max().unwrap_or(1).max(2) - 1;
    let x = |s: usize| pad + (w - 2.0 * pad) * s as f64 / steps as f64;
    let y = |v: f64| h - pad - (h - 2.0 * pad) * v.clamp(0.0, 1.0);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{pad}\" y=\"25\" font-size=\"14\">{env}: exact max@k</text>\n\
         <line x1=\"{pad}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{b}\" stroke=\"black\"/>\n",
        b = h - pad,
        r = w - pad
    );
    for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let _ = writeln!(svg, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{tick}</text>", pad - 5.0, y(tick) + 4.0);
    }
    let _ = writeln!(svg, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">step ({steps})</text>", w / 2.0, h - 15.0);
    for (i, (objective, runs)) in curves.iter().enumerate() {
        let len = runs.iter().map(Vec::len).min().unwrap_or(0);
        let points: Vec<String> = (0..len)
            .map(|s| {
                let mean = runs.iter().map(|r| r[s]).sum::<f64>() / runs.len() as f64;
                format!("{:.2},{:.2}", x(s), y(mean))
            })
            .collect();
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(svg, "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>", points.join(" "));
        let ly = pad + 16.0 * i as f64;
        let _ = writeln!(svg, "<text x=\"{}\" y=\"{ly}\" fill=\"{color}\" text-anchor=\"end\">{objective}</text>", w - pad - 5.0);
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn load_summary(path: &Path) -> Result<GridSummary> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub environment: String,
    pub objective: Objective,
    pub k: usize,
    pub seeds: usize,
    pub mean: f64,
    pub std: f64,
    pub best: bool,
    /// Wilcoxon p-value of the best method against this one, paired by seed.
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub one_sided: bool,
    pub rows: Vec<ReportRow>,
    pub notes: Vec<String>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Merges grid summaries and compares final `exact_max_at_k` per environment.
/// The result does not depend on the order of `summaries` or of their runs.
type SeedFinals = BTreeMap<u64, (usize, f64)>;

pub fn build_report(summaries: &[GridSummary], one_sided: bool) -> Result<ComparisonReport> {
    let mut merged = GridSummary::new();
    for s in summaries {
        for (id, run) in s {
            match merged.get(id) {
                Some(prev) if prev != run => {
                    return Err(Error::Report(format!("conflicting results for run {id}")));
                }
                _ => {
                    merged.insert(id.clone(), run.clone());
                }
            }
        }
    }
    if merged.is_empty() {
        return Err(Error::Report("no runs to report".into()));
    }

    // env -> objective -> seed -> (k, final max@k)
    let mut table: BTreeMap<&str, BTreeMap<Objective, SeedFinals>> = BTreeMap::new();
    for (id, run) in &merged {
        let m = run
            .final_metrics
            .as_ref()
            .ok_or_else(|| Error::Report(format!("run {id} did not finish ({:?})", run.status)))?;
        table.entry(&run.env).or_default().entry(run.objective).or_default().insert(run.seed, (run.config.k, m.exact_max_at_k));
    }

    let alt = if one_sided { Alternative::Greater } else { Alternative::TwoSided };
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    for (env, by_objective) in &table {
        let seed_sets: BTreeSet<Vec<u64>> = by_objective.values().map(|s| s.keys().copied().collect()).collect();
        if seed_sets.len() > 1 {
            return Err(Error::Report(format!("mismatched grid in '{env}': objectives cover different seeds")));
        }
        let stats: Vec<(Objective, usize, Vec<f64>, f64, f64)> = by_objective
            .iter()
            .map(|(&o, seeds)| {
                let finals: Vec<f64> = seeds.values().map(|v| v.1).collect();
                let k = seeds.values().next().map(|v| v.0).unwrap_or(0);
                let (mean, std) = mean_std(&finals);
                (o, k, finals, mean, std)
            })
            .collect();
        let best = stats
            .iter()
            .enumerate()
            .fold(0, |b, (i, s)| if s.3 > stats[b].3 { i } else { b });
        let n_seeds = stats[best].2.len();
        if stats.len() == 1 {
            notes.push(format!("{env}: only one method ({}), no p-values", stats[0].0));
        } else if n_seeds < 2 {
            notes.push(format!("{env}: fewer than 2 seeds, no p-values"));
        }
        for (i, (o, k, finals, mean, std)) in stats.iter().enumerate() {
            let p_value = if i == best || stats.len() == 1 || n_seeds < 2 {
                None
            } else {
                Some(wilcoxon_signed_rank(&stats[best].2, finals, alt)?.p_value)
            };
            rows.push(ReportRow {
                environment: env.to_string(),
                objective: *o,
                k: *k,
                seeds: finals.len(),
                mean: *mean,
                std: *std,
                best: i == best,
                p_value,
            });
        }
    }
    Ok(ComparisonReport { one_sided, rows, notes })
}

impl ComparisonReport {
    pub fn to_markdown(&self) -> String {
        let sided = if self.one_sided { "one-sided" } else { "two-sided" };
        let mut out = String::from("# Final exact max@k\n\n");
        let _ = writeln!(
            out,
            "p-values: {sided} Wilcoxon signed-rank test of the best method against each other method, paired by seed.\n"
        );
        let mut current = None;
        for r in &self.rows {
            if current != Some(&r.environment) {
                current = Some(&r.environment);
                let _ = writeln!(out, "## {}\n", r.environment);
                out.push_str("| objective | k | seeds | max@k (mean ± std) | p vs best |\n|---|---|---|---|---|\n");
            }
            let name = if r.best { format!("**{}**", r.objective) } else { r.objective.to_string() };
            let p = match (r.best, r.p_value) {
                (true, _) => "best".to_string(),
                (false, Some(p)) => format!("{p:.4}"),
                (false, None) => "-".to_string(),
            };
            let _ = writeln!(out, "| {name} | {} | {} | {:.4} ± {:.4} | {p} |", r.k, r.seeds, r.mean, r.std);
            if self.rows.iter().rfind(|x| x.environment == r.environment) == Some(r) {
                out.push('\n');
            }
        }
        if !self.notes.is_empty() {
            out.push_str("Notes:\n\n");
            for n in &self.notes {
                let _ = writeln!(out, "- {n}");
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("environment,objective,k,seeds,mean,std,best,p_value\n");
        for r in &self.rows {
            let p = r.p_value.map(|p| p.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{},{},{},{},{p}", r.environment, r.objective, r.k, r.seeds, r.mean, r.std, r.best);
        }
        out
    }
}
