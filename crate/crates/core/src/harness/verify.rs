//! Executable checks of the two optimality results.
//!
//! The first block checks, under perfect perception, that the optimal grasp
//! policy's step count equals both the closed-form lower bound (objects to
//! move plus minimum feedback vertex set) and an exhaustive search. The
//! second block compares scene-view placement against in-hand placement on
//! paired episodes across a noise grid.

use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::experiment::{with_thread_pool, NamedNoise, ScenarioKind};
use super::oracle::brute_force_min_steps;
use super::stats::{bootstrap_mean_ci, Interval};
use crate::depgraph::optimal_step_lower_bound;
use crate::error::Result;
use crate::perception::{classify_goal, sample_view, to_distribution, Confuser, LatentViews, NoiseModel, SCENE_VIEW};
use crate::policy::SeePolicyKind;
use crate::scene::{
    Assignment, ClutterParams, Footprint, GoalId, ObjectId, ScenarioParams, SceneSpec, SceneState,
};
use crate::seed::{derive_seed, rng_from_seed, stream};
use crate::simulator::{run_episode, run_see_session, EpisodeConfig, Policies};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub master_seed: u64,
    /// Random scenes for the first block, on top of the exhaustive ones.
    pub random_scenes: usize,
    pub max_objects: usize,
    pub noise_grid: Vec<NamedNoise>,
    pub scenario: ScenarioKind,
    pub episodes_per_point: usize,
    pub accuracy_trials: usize,
    pub bootstrap_resamples: usize,
    pub see: SeePolicyKind,
    pub config: EpisodeConfig,
}

impl VerifyConfig {
    pub fn new(master_seed: u64) -> Self {
        let mut scenario = ScenarioParams::new(5, vec![2]);
        scenario.num_nongoal_objects = 1;
        scenario.p_chain = 0.5;
        VerifyConfig {
            master_seed,
            random_scenes: 200,
            max_objects: 6,
            noise_grid: default_noise_grid(),
            scenario: ScenarioKind::Structured(scenario),
            episodes_per_point: 2000,
            accuracy_trials: 10_000,
            bootstrap_resamples: 2000,
            see: SeePolicyKind::GreedySee,
            config: EpisodeConfig::default(),
        }
    }
}

/// Ideal perception, then ambiguous views without look-alikes, with
/// look-alikes on half the objects, and on every object.
pub fn default_noise_grid() -> Vec<NamedNoise> {
    let point = |name: &str, p_bad_view: f64, confuser: Confuser| NamedNoise {
        name: name.into(),
        noise: NoiseModel { p_bad_view, confuser, ..NoiseModel::default() },
    };
    vec![
        NamedNoise { name: "ideal".into(), noise: NoiseModel::ideal() },
        point("plain10", 0.1, Confuser::None),
        point("plain25", 0.25, Confuser::None),
        point("plain40", 0.4, Confuser::None),
        point("plain55", 0.55, Confuser::None),
        point("plain70", 0.7, Confuser::None),
        point("half25", 0.25, Confuser::Fraction(0.5)),
        point("half40", 0.4, Confuser::Fraction(0.5)),
        point("full25", 0.25, Confuser::Fraction(1.0)),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Case {
    pub label: String,
    pub pi0_steps: Option<usize>,
    pub lower_bound: Option<usize>,
    pub brute_force: Option<usize>,
}

impl Theorem1Case {
    pub fn agrees(&self) -> bool {
        self.pi0_steps.is_some() && self.pi0_steps == self.lower_bound && self.lower_bound == self.brute_force
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Report {
    pub exhaustive_scenes: usize,
    pub random_scenes: usize,
    pub mismatches: Vec<Theorem1Case>,
}

impl Theorem1Report {
    pub fn pass(&self) -> bool {
        self.mismatches.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Point {
    pub name: String,
    pub scene_accuracy: f64,
    pub in_hand_accuracy: f64,
    pub episodes: usize,
    pub pi0_mean_steps: f64,
    pub pi1_mean_steps: f64,
    /// Paired interval for π⁰ steps minus π¹ steps.
    pub difference: Interval,
}

impl Theorem2Point {
    pub fn accuracy_gap_points(&self) -> f64 {
        100.0 * (self.in_hand_accuracy - self.scene_accuracy)
    }

    /// In-hand placement must not be slower once its matching is at least
    /// ten points better, and must be significantly faster at twenty.
    pub fn pass(&self) -> bool {
        let gap = self.accuracy_gap_points();
        let no_worse = gap < 10.0 || self.pi1_mean_steps <= self.pi0_mean_steps;
        let significant = gap < 20.0 || self.difference.lo > 0.0;
        no_worse && significant
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub master_seed: u64,
    pub theorem1: Theorem1Report,
    pub theorem2: Vec<Theorem2Point>,
}

impl VerifyReport {
    pub fn pass(&self) -> bool {
        self.theorem1.pass() && self.theorem2.iter().all(Theorem2Point::pass)
    }
}

/// Every scene of up to three goal objects on three goal slots (plus
/// optionally one non-goal object) where each object starts on some goal or
/// on its own free slot.
pub fn exhaustive_tiny_scenes() -> Vec<(String, SceneSpec)> {
    let mut out = Vec::new();
    for n in 1..=3usize {
        // A softmax over one goal is one-hot, so a lone goal cannot be told
        // apart from a non-goal object.
        for with_nongoal in [false, true].into_iter().filter(|&w| !(w && n == 1)) {
            let m = n + usize::from(with_nongoal);
            // Position code per object: 0..n is goal slot, n is own free slot.
            let mut codes = vec![0usize; m];
            loop {
                let goal_slots: Vec<usize> = codes.iter().copied().filter(|&c| c < n).collect();
                let mut distinct = goal_slots.clone();
                distinct.sort_unstable();
                distinct.dedup();
                if distinct.len() == goal_slots.len() {
                    let goal_fp = |j: usize| Footprint::window(2 * j as u32, 2);
                    let initial = codes
                        .iter()
                        .enumerate()
                        .map(|(i, &c)| if c < n { goal_fp(c) } else { goal_fp(n + i) })
                        .collect();
                    let truth = (0..m).map(|i| if i < n { Assignment::Goal(GoalId(i)) } else { Assignment::NonGoal }).collect();
                    let spec = SceneSpec::new(2 * (n + m) as u32, truth, initial, (0..n).map(goal_fp).collect())
                        .expect("valid tiny scene");
                    out.push((format!("tiny n{n} m{m} {codes:?}"), spec));
                }
                // Odometer over codes in 0..=n.
                let mut k = 0;
                while k < m && codes[k] == n {
                    codes[k] = 0;
                    k += 1;
                }
                if k == m {
                    break;
                }
                codes[k] += 1;
            }
        }
    }
    out
}

/// Random structured and cluttered scenes with at most `max_objects`.
pub fn random_small_scene(seed: u64, max_objects: usize) -> Result<(String, SceneSpec)> {
    let mut rng = rng_from_seed(seed);
    let m = rng.random_range(1..=max_objects);
    let mut nongoal = rng.random_range(0..=m.min(2)).min(m - 1);
    if m - nongoal < 2 {
        nongoal = 0;
    }
    let n = m - nongoal;
    if rng.random_bool(0.5) {
        let mut cycles = Vec::new();
        let mut left = n;
        while left >= 2 && rng.random_bool(0.6) {
            let len = rng.random_range(2..=left);
            cycles.push(len);
            left -= len;
        }
        let mut p = ScenarioParams::new(n, cycles);
        p.num_nongoal_objects = nongoal;
        p.fraction_at_goal = rng.random_range(0.0..0.5);
        p.p_chain = rng.random_range(0.0..1.0);
        p.rng_seed = rng.random();
        let spec = crate::scene::generate_scene(&p)?;
        Ok((format!("structured seed {seed}"), spec))
    } else {
        let c = ClutterParams {
            num_goal_objects: n,
            num_nongoal_objects: nongoal,
            slack_cells: rng.random_range(0..=3),
            rng_seed: rng.random(),
        };
        Ok((format!("cluttered seed {seed}"), crate::scene::generate_cluttered_scene(&c)?))
    }
}

/// Runs π⁰ under perfect perception and compares its length against the
/// closed-form bound and exhaustive search.
pub fn theorem1_case(label: String, spec: &SceneSpec, seed: u64) -> Result<Theorem1Case> {
    let config = EpisodeConfig { rng_seed: seed, step_budget: 4 * spec.num_objects() + 4, ..EpisodeConfig::default() };
    let trace = run_episode(spec, Policies::pi0(), &NoiseModel::ideal(), &config)?;
    Ok(Theorem1Case {
        label,
        pi0_steps: trace.completed.then_some(trace.planning_steps),
        lower_bound: optimal_step_lower_bound(spec, &SceneState::initial(spec))?,
        brute_force: Some(brute_force_min_steps(spec)?),
    })
}

pub fn verify_theorem1(master_seed: u64, random_scenes: usize, max_objects: usize) -> Result<Theorem1Report> {
    let tiny = exhaustive_tiny_scenes();
    let exhaustive_scenes = tiny.len();
    let cases: Vec<Theorem1Case> = with_thread_pool(|| {
        let tiny_cases = tiny
            .into_par_iter()
            .enumerate()
            .map(|(k, (label, spec))| theorem1_case(label, &spec, derive_seed(master_seed, stream::EPISODE, k as u64)));
        let random = (0..random_scenes).into_par_iter().map(|k| {
            let (label, spec) = random_small_scene(derive_seed(master_seed, stream::SCENE, k as u64), max_objects)?;
            theorem1_case(label, &spec, derive_seed(master_seed, stream::EPISODE, (1 << 32) + k as u64))
        });
        tiny_cases.chain(random).collect::<Result<Vec<_>>>()
    })??;
    Ok(Theorem1Report {
        exhaustive_scenes,
        random_scenes,
        mismatches: cases.into_iter().filter(|c| !c.agrees()).collect(),
    })
}

/// Scene-view and fused in-hand classification accuracy over random objects
/// of scenes drawn from `scenario`, paired by trial.
pub fn matching_accuracy(
    scenario: &ScenarioKind,
    noise: &NoiseModel,
    see: SeePolicyKind,
    config: &EpisodeConfig,
    trials: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let hits: Vec<(bool, bool)> = (0..trials)
        .into_par_iter()
        .map(|k| {
            let base = derive_seed(seed, stream::SEE_TRIAL, k as u64);
            let scene = scenario.generate(base)?;
            let mut rng = rng_from_seed(derive_seed(base, stream::PERCEPTION, 0));
            let object = ObjectId(rng.random_range(0..scene.num_objects()));
            let latent = LatentViews::sample(noise, &scene, &mut rng);
            let truth = scene.true_goal(object);
            let s = sample_view(noise, &latent, &scene, object, SCENE_VIEW, &mut rng)?;
            let scene_ok = classify_goal(&to_distribution(&s, noise.temperature), &config.thresholds) == truth;
            let session = run_see_session(&scene, object, &latent, noise, see, config, &mut rng)?;
            let hand_ok = classify_goal(&session.distribution, &config.thresholds) == truth;
            Ok((scene_ok, hand_ok))
        })
        .collect::<Result<_>>()?;
    let rate = |f: fn(&(bool, bool)) -> bool| hits.iter().filter(|h| f(h)).count() as f64 / trials as f64;
    Ok((rate(|h| h.0), rate(|h| h.1)))
}

pub fn theorem2_point(cfg: &VerifyConfig, index: usize, point: &NamedNoise) -> Result<Theorem2Point> {
    let seed = derive_seed(cfg.master_seed, stream::EPISODE, (2 << 32) + index as u64);
    let (scene_accuracy, in_hand_accuracy) =
        matching_accuracy(&cfg.scenario, &point.noise, cfg.see, &cfg.config, cfg.accuracy_trials, seed)?;
    let steps: Vec<(f64, f64)> = (0..cfg.episodes_per_point)
        .into_par_iter()
        .map(|e| {
            let scene = cfg.scenario.generate(derive_seed(seed, stream::SCENE, e as u64))?;
            let config = EpisodeConfig { rng_seed: derive_seed(seed, stream::EPISODE, e as u64), ..cfg.config.clone() };
            let a = run_episode(&scene, Policies::pi0(), &point.noise, &config)?;
            let b = run_episode(&scene, Policies::pi1(cfg.see), &point.noise, &config)?;
            Ok((a.planning_steps as f64, b.planning_steps as f64))
        })
        .collect::<Result<_>>()?;
    let n = steps.len() as f64;
    let diffs: Vec<f64> = steps.iter().map(|(a, b)| a - b).collect();
    Ok(Theorem2Point {
        name: point.name.clone(),
        scene_accuracy,
        in_hand_accuracy,
        episodes: steps.len(),
        pi0_mean_steps: steps.iter().map(|s| s.0).sum::<f64>() / n,
        pi1_mean_steps: steps.iter().map(|s| s.1).sum::<f64>() / n,
        difference: bootstrap_mean_ci(&diffs, cfg.bootstrap_resamples, 0.95, derive_seed(seed, stream::BOOTSTRAP, 0)),
    })
}

pub fn verify_theorems(cfg: &VerifyConfig) -> Result<VerifyReport> {
    let theorem1 = verify_theorem1(cfg.master_seed, cfg.random_scenes, cfg.max_objects)?;
    let theorem2 = with_thread_pool(|| {
        cfg.noise_grid.iter().enumerate().map(|(k, p)| theorem2_point(cfg, k, p)).collect::<Result<Vec<_>>>()
    })??;
    Ok(VerifyReport { master_seed: cfg.master_seed, theorem1, theorem2 })
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

pub fn render_report(r: &VerifyReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "master seed {}", r.master_seed);
    let t1 = &r.theorem1;
    let _ = writeln!(out, "\n[{}] optimal policy under perfect perception", verdict(t1.pass()));
    let _ = writeln!(
        out,
        "  scenes: {} exhaustive + {} random; pi0 steps == objects to move + min FVS == exhaustive search",
        t1.exhaustive_scenes, t1.random_scenes
    );
    let _ = writeln!(out, "  mismatches: {}", t1.mismatches.len());
    for c in &t1.mismatches {
        let _ = writeln!(out, "    {}: pi0 {:?} bound {:?} search {:?}", c.label, c.pi0_steps, c.lower_bound, c.brute_force);
    }
    let all2 = r.theorem2.iter().all(Theorem2Point::pass);
    let _ = writeln!(out, "\n[{}] in-hand placement is no worse than scene-view placement", verdict(all2));
    let _ = writeln!(
        out,
        "  {:<10} {:>9} {:>9} {:>7} {:>8} {:>8} {:>8} {:>20}  verdict",
        "point", "scene%", "hand%", "gap", "n", "pi0", "pi1", "pi0-pi1 [95% CI]"
    );
    for p in &r.theorem2 {
        let _ = writeln!(
            out,
            "  {:<10} {:>9.2} {:>9.2} {:>7.2} {:>8} {:>8.3} {:>8.3} {:>20}  {}",
            p.name,
            100.0 * p.scene_accuracy,
            100.0 * p.in_hand_accuracy,
            p.accuracy_gap_points(),
            p.episodes,
            p.pi0_mean_steps,
            p.pi1_mean_steps,
            format!("{:.3} [{:.3}, {:.3}]", p.difference.estimate, p.difference.lo, p.difference.hi),
            verdict(p.pass())
        );
    }
    let _ = writeln!(out, "\noverall: {}", verdict(r.pass()));
    out
}
