//! Monte-Carlo grid runner and metric tables.

use std::fmt::Write as _;
use std::fs;
use std::io::BufReader;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::mean_std;
use crate::error::{Error, Result};
use crate::perception::{Confuser, NoiseModel};
use crate::policy::{GraspPolicyKind, PlaceVariant, SeePolicyKind};
use crate::scene::{generate_cluttered_scene, generate_scene, ClutterParams, ScenarioParams, SceneSpec};
use crate::seed::{derive_seed, stream};
use crate::simulator::{read_traces_jsonl, run_episode, write_trace_jsonl, EpisodeConfig, EpisodeTrace, Policies};

/// Environment variable that caps the worker thread count.
pub const THREADS_ENV: &str = "REARRANGE_THREADS";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum ScenarioKind {
    Structured(ScenarioParams),
    Cluttered(ClutterParams),
}

impl ScenarioKind {
    /// Draws the scene with the generator seed replaced by `seed`.
    pub fn generate(&self, seed: u64) -> Result<SceneSpec> {
        match self {
            ScenarioKind::Structured(p) => generate_scene(&p.clone().with_seed(seed)),
            ScenarioKind::Cluttered(c) => generate_cluttered_scene(&ClutterParams { rng_seed: seed, ..c.clone() }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedScenario {
    pub name: String,
    pub scenario: ScenarioKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedNoise {
    pub name: String,
    pub noise: NoiseModel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub scenarios: Vec<NamedScenario>,
    pub noises: Vec<NamedNoise>,
    pub policies: Vec<Policies>,
    pub episodes: usize,
    /// Budgets reported; episodes run once with the largest.
    pub budgets: Vec<usize>,
    pub master_seed: u64,
    /// Base episode settings; `step_budget` and `rng_seed` are overridden.
    #[serde(default)]
    pub config: EpisodeConfig,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() || self.noises.is_empty() || self.policies.is_empty() || self.budgets.is_empty() {
            return Err(Error::InvalidConfig("experiment grids must be non-empty".into()));
        }
        if self.episodes == 0 || self.budgets.contains(&0) {
            return Err(Error::InvalidConfig("episodes and budgets must be at least 1".into()));
        }
        for n in &self.noises {
            n.noise.validate()?;
        }
        Ok(())
    }

    pub fn max_budget(&self) -> usize {
        self.budgets.iter().copied().max().unwrap_or(1)
    }

    pub fn scene_seed(&self, scenario: usize, episode: usize) -> u64 {
        derive_seed(self.master_seed, stream::SCENE, ((scenario as u64) << 32) | episode as u64)
    }

    /// Shared by every policy of a (scenario, noise) pair, so comparisons
    /// across policies are paired.
    pub fn episode_seed(&self, scenario: usize, noise: usize, episode: usize) -> u64 {
        let cell = derive_seed(self.master_seed, stream::EPISODE, ((scenario as u64) << 32) | noise as u64);
        derive_seed(cell, stream::EPISODE, episode as u64)
    }

    /// Default grid: three scene families, three noise levels, five policies.
    pub fn preset(master_seed: u64, episodes: usize) -> Self {
        let structured = |n, ng, cycles: Vec<usize>| {
            let mut p = ScenarioParams::new(n, cycles);
            p.num_nongoal_objects = ng;
            p.p_chain = 0.5;
            ScenarioKind::Structured(p)
        };
        let named = |name: &str, scenario| NamedScenario { name: name.into(), scenario };
        let noise = |name: &str, noise| NamedNoise { name: name.into(), noise };
        ExperimentSpec {
            scenarios: vec![
                named("swap5", structured(5, 1, vec![2])),
                named("cycles6", structured(6, 2, vec![3, 2])),
                named(
                    "clutter6",
                    ScenarioKind::Cluttered(ClutterParams {
                        num_goal_objects: 5,
                        num_nongoal_objects: 1,
                        slack_cells: 2,
                        rng_seed: 0,
                    }),
                ),
            ],
            noises: vec![
                noise("ideal", NoiseModel::ideal()),
                noise("moderate", NoiseModel::default()),
                noise("hard", NoiseModel { p_bad_view: 0.5, confuser: Confuser::Fraction(0.5), ..NoiseModel::default() }),
            ],
            policies: vec![
                Policies::pi0(),
                Policies::pi1(SeePolicyKind::NoSee),
                Policies::pi1(SeePolicyKind::RandomSee),
                Policies::pi1(SeePolicyKind::GreedySee),
                Policies {
                    grasp: GraspPolicyKind::GreedyFreeGoal,
                    see: SeePolicyKind::GreedySee,
                    place: PlaceVariant::Pi1Place,
                },
            ],
            episodes,
            budgets: vec![15, 20, 30],
            master_seed,
            config: EpisodeConfig::default(),
        }
    }
}

/// What a trace looks like when cut off after `budget` pick-n-places.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetOutcome {
    pub completed: bool,
    /// Steps to completion, or `budget` on failure.
    pub planning_steps: usize,
    pub see_steps: usize,
    pub match_attempts: usize,
    pub match_successes: usize,
    pub reward_grasp_sum: f64,
    pub reward_grasp_count: usize,
    pub reward_see_sum: f64,
    pub reward_see_count: usize,
}

/// Replays the first `budget` steps of a trace. Runs that share everything
/// but the budget take identical steps up to the cut, so this equals running
/// the episode with that budget.
pub fn budget_outcome(trace: &EpisodeTrace, budget: usize) -> BudgetOutcome {
    let prefix = &trace.steps[..trace.steps.len().min(budget)];
    let completed = trace.completed && trace.steps.len() <= budget;
    BudgetOutcome {
        completed,
        planning_steps: if completed { prefix.len() } else { budget },
        see_steps: prefix.iter().map(|s| s.see.len()).sum(),
        match_attempts: prefix.iter().filter(|s| s.match_correct.is_some()).count(),
        match_successes: prefix.iter().filter(|s| s.match_correct == Some(true)).count(),
        reward_grasp_sum: prefix.iter().map(|s| s.reward_grasp).sum(),
        reward_grasp_count: prefix.len(),
        reward_see_sum: prefix.iter().flat_map(|s| s.see.iter().map(|r| r.reward)).sum(),
        reward_see_count: prefix.iter().map(|s| s.see.len()).sum(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub scenario: String,
    pub noise: String,
    pub grasp: GraspPolicyKind,
    pub see: SeePolicyKind,
    pub place: PlaceVariant,
    pub budget: usize,
    pub episodes: usize,
    pub errors: usize,
    /// Percent of episodes completed within the budget.
    pub task_completion: f64,
    pub completion_steps_mean: Option<f64>,
    pub completion_steps_std: Option<f64>,
    /// Failures count as the full budget.
    pub overall_steps_mean: Option<f64>,
    pub overall_steps_std: Option<f64>,
    /// Mean see steps of completed episodes.
    pub see_steps_mean: Option<f64>,
    /// Percent of place decisions whose goal classification was right.
    pub match_success: Option<f64>,
    pub mean_reward_grasp: Option<f64>,
    pub mean_reward_see: Option<f64>,
}

/// One (scenario, noise, policy) cell: traces in episode order, an error
/// message where the episode failed or panicked.
#[derive(Clone, Debug)]
pub struct CellRun {
    pub scenario: usize,
    pub noise: usize,
    pub policy: usize,
    pub traces: Vec<std::result::Result<EpisodeTrace, String>>,
}

pub fn with_thread_pool<R: Send>(f: impl FnOnce() -> R + Send) -> Result<R> {
    match std::env::var(THREADS_ENV).ok().and_then(|s| s.parse::<usize>().ok()) {
        Some(n) if n > 0 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        _ => Ok(f()),
    }
}

fn run_isolated(f: impl FnOnce() -> Result<EpisodeTrace>) -> std::result::Result<EpisodeTrace, String> {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(t)) => Ok(t),
        Ok(Err(e)) => Err(e.to_string()),
        Err(panic) => Err(panic
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into())),
    }
}

/// Runs every episode of the grid. Output order is fixed by the grid, not by
/// scheduling.
pub fn run_cells(spec: &ExperimentSpec) -> Result<Vec<CellRun>> {
    spec.validate()?;
    let budget = spec.max_budget();
    let mut jobs = Vec::new();
    for s in 0..spec.scenarios.len() {
        for n in 0..spec.noises.len() {
            for p in 0..spec.policies.len() {
                for e in 0..spec.episodes {
                    jobs.push((s, n, p, e));
                }
            }
        }
    }
    let results: Vec<_> = with_thread_pool(|| {
        jobs.par_iter()
            .map(|&(s, n, p, e)| {
                run_isolated(|| {
                    let scene = spec.scenarios[s].scenario.generate(spec.scene_seed(s, e))?;
                    let config = EpisodeConfig {
                        step_budget: budget,
                        rng_seed: spec.episode_seed(s, n, e),
                        ..spec.config.clone()
                    };
                    run_episode(&scene, spec.policies[p], &spec.noises[n].noise, &config)
                })
            })
            .collect()
    })?;
    let mut cells = Vec::new();
    let mut it = results.into_iter();
    for s in 0..spec.scenarios.len() {
        for n in 0..spec.noises.len() {
            for p in 0..spec.policies.len() {
                let traces = it.by_ref().take(spec.episodes).collect();
                cells.push(CellRun { scenario: s, noise: n, policy: p, traces });
            }
        }
    }
    Ok(cells)
}

pub fn rows_from_cells(spec: &ExperimentSpec, cells: &[CellRun]) -> Vec<MetricsRow> {
    let mut rows = Vec::new();
    let mut budgets = spec.budgets.clone();
    budgets.sort_unstable();
    budgets.dedup();
    for cell in cells {
        let ok: Vec<&EpisodeTrace> = cell.traces.iter().filter_map(|t| t.as_ref().ok()).collect();
        let errors = cell.traces.len() - ok.len();
        let policy = spec.policies[cell.policy];
        for &b in &budgets {
            let outcomes: Vec<BudgetOutcome> = ok.iter().map(|t| budget_outcome(t, b)).collect();
            rows.push(metrics_row(spec, cell, policy, b, errors, &outcomes));
        }
    }
    rows
}

fn metrics_row(
    spec: &ExperimentSpec,
    cell: &CellRun,
    policy: Policies,
    budget: usize,
    errors: usize,
    outcomes: &[BudgetOutcome],
) -> MetricsRow {
    let completed: Vec<&BudgetOutcome> = outcomes.iter().filter(|o| o.completed).collect();
    let completion_steps: Vec<f64> = completed.iter().map(|o| o.planning_steps as f64).collect();
    let overall_steps: Vec<f64> = outcomes.iter().map(|o| o.planning_steps as f64).collect();
    let see_steps: Vec<f64> = completed.iter().map(|o| o.see_steps as f64).collect();
    let ratio = |num: f64, den: usize| (den > 0).then(|| num / den as f64);
    let attempts = outcomes.iter().map(|o| o.match_attempts).sum();
    let successes: usize = outcomes.iter().map(|o| o.match_successes).sum();
    let (cm, cs) = mean_std(&completion_steps).unzip();
    let (om, os) = mean_std(&overall_steps).unzip();
    MetricsRow {
        scenario: spec.scenarios[cell.scenario].name.clone(),
        noise: spec.noises[cell.noise].name.clone(),
        grasp: policy.grasp,
        see: policy.see,
        place: policy.place,
        budget,
        episodes: outcomes.len(),
        errors,
        task_completion: if outcomes.is_empty() { 0.0 } else { 100.0 * completed.len() as f64 / outcomes.len() as f64 },
        completion_steps_mean: cm,
        completion_steps_std: cs,
        overall_steps_mean: om,
        overall_steps_std: os,
        see_steps_mean: mean_std(&see_steps).map(|(m, _)| m),
        match_success: ratio(100.0 * successes as f64, attempts),
        mean_reward_grasp: ratio(
            outcomes.iter().map(|o| o.reward_grasp_sum).sum(),
            outcomes.iter().map(|o| o.reward_grasp_count).sum(),
        ),
        mean_reward_see: ratio(
            outcomes.iter().map(|o| o.reward_see_sum).sum(),
            outcomes.iter().map(|o| o.reward_see_count).sum(),
        ),
    }
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<MetricsRow>> {
    Ok(rows_from_cells(spec, &run_cells(spec)?))
}

const MANIFEST: &str = "experiment.json";

fn cell_file(cell: &CellRun) -> String {
    format!("cell_s{}_n{}_p{}.jsonl", cell.scenario, cell.noise, cell.policy)
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    spec: ExperimentSpec,
    /// (scenario, noise, policy, episode, message) for episodes that errored.
    errors: Vec<(usize, usize, usize, usize, String)>,
}

/// Writes the spec and every trace under `dir`.
pub fn save_traces(dir: &Path, spec: &ExperimentSpec, cells: &[CellRun]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut errors = Vec::new();
    for cell in cells {
        let mut out = std::io::BufWriter::new(fs::File::create(dir.join(cell_file(cell)))?);
        for (e, t) in cell.traces.iter().enumerate() {
            match t {
                Ok(t) => write_trace_jsonl(t, &mut out)?,
                Err(msg) => errors.push((cell.scenario, cell.noise, cell.policy, e, msg.clone())),
            }
        }
        std::io::Write::flush(&mut out)?;
    }
    let manifest = Manifest { spec: spec.clone(), errors };
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

/// Rebuilds the cells saved by [`save_traces`].
pub fn load_traces(dir: &Path) -> Result<(ExperimentSpec, Vec<CellRun>)> {
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST))?)?;
    let spec = manifest.spec;
    let mut cells = Vec::new();
    for s in 0..spec.scenarios.len() {
        for n in 0..spec.noises.len() {
            for p in 0..spec.policies.len() {
                let mut cell = CellRun { scenario: s, noise: n, policy: p, traces: Vec::new() };
                let file = fs::File::open(dir.join(cell_file(&cell)))?;
                let mut ok = read_traces_jsonl(BufReader::new(file))?.into_iter();
                for e in 0..spec.episodes {
                    let failed = manifest.errors.iter().find(|x| (x.0, x.1, x.2, x.3) == (s, n, p, e));
                    cell.traces.push(match failed {
                        Some(x) => Err(x.4.clone()),
                        None => Ok(ok
                            .next()
                            .ok_or_else(|| Error::InvalidConfig(format!("missing trace in {}", cell_file(&cell))))?),
                    });
                }
                cells.push(cell);
            }
        }
    }
    Ok((spec, cells))
}

pub fn write_csv(rows: &[MetricsRow], out: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(input: impl std::io::Read) -> Result<Vec<MetricsRow>> {
    csv::Reader::from_reader(input).deserialize().map(|r| r.map_err(Error::from)).collect()
}

fn label<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

/// Fixed-width text rendering of the rows.
pub fn render_table(rows: &[MetricsRow]) -> String {
    let opt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.2}"));
    let pm = |m: Option<f64>, s: Option<f64>| match (m, s) {
        (Some(m), Some(s)) => format!("{m:.2} ± {s:.2}"),
        _ => "-".into(),
    };
    let header = [
        "scenario", "noise", "grasp", "see", "place", "b", "n", "err", "TC%", "completion", "overall", "see", "match%",
        "R_G", "R_S",
    ];
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.scenario.clone(),
                r.noise.clone(),
                label(&r.grasp),
                label(&r.see),
                label(&r.place),
                r.budget.to_string(),
                r.episodes.to_string(),
                r.errors.to_string(),
                format!("{:.1}", r.task_completion),
                pm(r.completion_steps_mean, r.completion_steps_std),
                pm(r.overall_steps_mean, r.overall_steps_std),
                opt(r.see_steps_mean),
                r.match_success.map_or("-".into(), |v| format!("{v:.1}")),
                opt(r.mean_reward_grasp),
                opt(r.mean_reward_see),
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|c| body.iter().map(|r| r[c].chars().count()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let mut line = |cells: &[String]| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(out, "{}", padded.join("  ").trim_end());
    };
    line(&header.map(String::from));
    line(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>());
    for r in &body {
        line(r);
    }
    out
}
