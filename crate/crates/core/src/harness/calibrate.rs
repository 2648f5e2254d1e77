//! Threshold sweeps over the synthetic matcher.

use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::experiment::with_thread_pool;
use crate::error::{Error, Result};
use crate::perception::{
    classify_goal, sample_view, should_terminate, MatchingDistribution, to_distribution, LatentViews, NoiseModel, Thresholds, SCENE_VIEW,
};
use crate::policy::SeePolicyKind;
use crate::scene::{generate_scene, Assignment, ObjectId, ScenarioParams};
use crate::seed::{derive_seed, rng_from_seed, stream};
use crate::simulator::{run_see_session, EpisodeConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSpec {
    pub noise: NoiseModel,
    pub num_goals: usize,
    pub omega_m: Vec<f64>,
    pub omega_g: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    pub see: SeePolicyKind,
    /// Supplies `max_see_steps`, `fusion`, `p_rotate_fail` and the fixed
    /// `omega_g` used while sweeping `omega_m`.
    pub config: EpisodeConfig,
}

impl CalibrationSpec {
    pub fn new(noise: NoiseModel, samples: usize, seed: u64) -> Self {
        CalibrationSpec {
            noise,
            num_goals: 5,
            omega_m: (0..=12).map(|k| k as f64 * 0.05).collect(),
            omega_g: (1..=12).map(|k| k as f64 * 0.02).collect(),
            samples,
            seed,
            see: SeePolicyKind::GreedySee,
            config: EpisodeConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TerminationRow {
    pub omega_m: f64,
    pub zeta_m: f64,
    /// Sessions that ended confident.
    pub terminated: usize,
    /// Of those, the share whose top goal was right.
    pub precision: Option<f64>,
    /// Sessions that ended below the threshold.
    pub below_threshold: usize,
    /// Of those, the share still classified correctly.
    pub below_threshold_success: Option<f64>,
    pub match_success: f64,
    pub mean_see_steps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationRow {
    pub omega_g: f64,
    pub zeta_g: f64,
    /// Share of goal and non-goal objects sorted into the right kind.
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    pub termination: Vec<TerminationRow>,
    pub classification: Vec<ClassificationRow>,
}

/// Sweeps the see-termination and goal-classification offsets.
///
/// Every `omega_m` replays the same sessions (same objects, latent views and
/// RNG), so a larger offset can only keep a session running longer.
pub fn calibrate_thresholds(spec: &CalibrationSpec) -> Result<CalibrationTable> {
    if spec.samples < 100 {
        return Err(Error::InvalidConfig(format!("need at least 100 samples, got {}", spec.samples)));
    }
    spec.noise.validate()?;
    let mut params = ScenarioParams::new(spec.num_goals, vec![]);
    params.num_nongoal_objects = 1;
    params.p_nongoal_on_goal = 0.0;
    let scene = generate_scene(&params)?;
    let n = spec.num_goals;
    let omega_g = spec.config.thresholds.omega_g;

    let termination = with_thread_pool(|| {
        spec.omega_m
            .par_iter()
            .map(|&omega_m| -> Result<TerminationRow> {
                let config = EpisodeConfig { thresholds: Thresholds { omega_m, omega_g }, ..spec.config.clone() };
                let mut terminated = 0;
                let mut precise = 0;
                let mut below = 0;
                let mut below_ok = 0;
                let mut matched = 0;
                let mut see_steps = 0;
                for k in 0..spec.samples {
                    let mut rng = rng_from_seed(derive_seed(spec.seed, stream::CALIBRATION, 2 * k as u64));
                    let object = ObjectId(rng.random_range(0..n));
                    let latent = LatentViews::sample(&spec.noise, &scene, &mut rng);
                    let mut rng = rng_from_seed(derive_seed(spec.seed, stream::CALIBRATION, 2 * k as u64 + 1));
                    let s = run_see_session(&scene, object, &latent, &spec.noise, spec.see, &config, &mut rng)?;
                    let truth = scene.true_goal(object);
                    let ok = classify_goal(&s.distribution, &config.thresholds) == truth;
                    matched += usize::from(ok);
                    see_steps += s.records.len();
                    if should_terminate(&s.distribution, &config.thresholds) {
                        terminated += 1;
                        precise += usize::from(Assignment::Goal(s.distribution.argmax()) == truth);
                    } else {
                        below += 1;
                        below_ok += usize::from(ok);
                    }
                }
                let share = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
                Ok(TerminationRow {
                    omega_m,
                    zeta_m: config.thresholds.zeta_m(n),
                    terminated,
                    precision: share(precise, terminated),
                    below_threshold: below,
                    below_threshold_success: share(below_ok, below),
                    match_success: matched as f64 / spec.samples as f64,
                    mean_see_steps: see_steps as f64 / spec.samples as f64,
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;

    // Alternate goal and non-goal objects, one scene view each.
    let views: Vec<(bool, MatchingDistribution)> = (0..spec.samples)
        .map(|k| {
            let mut rng = rng_from_seed(derive_seed(spec.seed, stream::CALIBRATION, (1 << 40) + k as u64));
            let object = if k % 2 == 0 { ObjectId(rng.random_range(0..n)) } else { ObjectId(n) };
            let latent = LatentViews::sample(&spec.noise, &scene, &mut rng);
            let s = sample_view(&spec.noise, &latent, &scene, object, SCENE_VIEW, &mut rng)?;
            Ok((scene.is_goal_object(object), to_distribution(&s, spec.noise.temperature)))
        })
        .collect::<Result<_>>()?;
    let classification = spec
        .omega_g
        .iter()
        .map(|&omega_g| {
            let t = Thresholds { omega_m: spec.config.thresholds.omega_m, omega_g };
            let right = views
                .iter()
                .filter(|(is_goal, d)| matches!(classify_goal(d, &t), Assignment::Goal(_)) == *is_goal)
                .count();
            ClassificationRow { omega_g, zeta_g: t.zeta_g(n), accuracy: right as f64 / views.len() as f64 }
        })
        .collect();
    Ok(CalibrationTable { termination, classification })
}

pub fn render_calibration(table: &CalibrationTable) -> String {
    let opt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
    let mut out = String::new();
    let _ = writeln!(out, "see termination");
    let _ = writeln!(out, "{:>8} {:>8} {:>10} {:>10} {:>8} {:>10} {:>8} {:>8}", "omega_m", "zeta_m", "terminated", "precision", "below", "below_ok", "match", "see");
    for r in &table.termination {
        let _ = writeln!(
            out,
            "{:>8.3} {:>8.3} {:>10} {:>10} {:>8} {:>10} {:>8.4} {:>8.3}",
            r.omega_m,
            r.zeta_m,
            r.terminated,
            opt(r.precision),
            r.below_threshold,
            opt(r.below_threshold_success),
            r.match_success,
            r.mean_see_steps
        );
    }
    let _ = writeln!(out, "\ngoal classification");
    let _ = writeln!(out, "{:>8} {:>8} {:>8}", "omega_g", "zeta_g", "accuracy");
    for r in &table.classification {
        let _ = writeln!(out, "{:>8.3} {:>8.3} {:>8.4}", r.omega_g, r.zeta_g, r.accuracy);
    }
    out
}
