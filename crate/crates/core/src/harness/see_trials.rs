//! Isolated in-hand matching trials: one grasped object, one see loop.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::experiment::with_thread_pool;
use super::stats::{bootstrap_mean_ci, Interval};
use crate::error::Result;
use crate::perception::{classify_goal, sample_view, to_distribution, LatentViews, NoiseModel, SCENE_VIEW};
use crate::policy::SeePolicyKind;
use crate::scene::{generate_scene, ObjectId, ScenarioParams, SceneSpec};
use crate::seed::{derive_seed, rng_from_seed, stream};
use crate::simulator::{run_see_session, EpisodeConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeeTrialSpec {
    pub noise: NoiseModel,
    pub num_goals: usize,
    pub trials: usize,
    pub seed: u64,
    pub kinds: Vec<SeePolicyKind>,
    pub config: EpisodeConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeeTrialOutcome {
    pub kind: SeePolicyKind,
    pub trials: usize,
    pub successes: usize,
    pub mean_see_steps: f64,
    #[serde(skip)]
    pub per_trial: Vec<bool>,
}

impl SeeTrialOutcome {
    pub fn rate(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }
}

/// Scene used by isolated trials: `num_goals` goal objects, nothing blocked.
pub fn trial_scene(num_goals: usize) -> Result<SceneSpec> {
    generate_scene(&ScenarioParams::new(num_goals, vec![]))
}

/// Every trial draws one goal object and its latent views, then runs each
/// see policy from the same RNG state, so outcomes are paired by trial.
pub fn run_see_trials(spec: &SeeTrialSpec) -> Result<Vec<SeeTrialOutcome>> {
    spec.noise.validate()?;
    let scene = trial_scene(spec.num_goals)?;
    let per_trial: Vec<Vec<(bool, usize)>> = with_thread_pool(|| {
        (0..spec.trials)
            .into_par_iter()
            .map(|k| -> Result<Vec<(bool, usize)>> {
                let mut rng = rng_from_seed(derive_seed(spec.seed, stream::SEE_TRIAL, 2 * k as u64));
                let object = ObjectId(rng.random_range(0..scene.num_objects()));
                let latent = LatentViews::sample(&spec.noise, &scene, &mut rng);
                let session_seed = derive_seed(spec.seed, stream::SEE_TRIAL, 2 * k as u64 + 1);
                spec.kinds
                    .iter()
                    .map(|&kind| {
                        let mut rng = rng_from_seed(session_seed);
                        let s = run_see_session(&scene, object, &latent, &spec.noise, kind, &spec.config, &mut rng)?;
                        let ok = classify_goal(&s.distribution, &spec.config.thresholds) == scene.true_goal(object);
                        Ok((ok, s.records.len()))
                    })
                    .collect()
            })
            .collect::<Result<_>>()
    })??;
    Ok(spec
        .kinds
        .iter()
        .enumerate()
        .map(|(idx, &kind)| {
            let outcomes: Vec<bool> = per_trial.iter().map(|t| t[idx].0).collect();
            let steps: usize = per_trial.iter().map(|t| t[idx].1).sum();
            SeeTrialOutcome {
                kind,
                trials: spec.trials,
                successes: outcomes.iter().filter(|&&b| b).count(),
                mean_see_steps: steps as f64 / spec.trials as f64,
                per_trial: outcomes,
            }
        })
        .collect())
}

/// Paired bootstrap interval for `better − worse` success rates.
pub fn paired_gap(better: &SeeTrialOutcome, worse: &SeeTrialOutcome, resamples: usize, seed: u64) -> Interval {
    let diffs: Vec<f64> = better
        .per_trial
        .iter()
        .zip(&worse.per_trial)
        .map(|(&a, &b)| f64::from(u8::from(a)) - f64::from(u8::from(b)))
        .collect();
    bootstrap_mean_ci(&diffs, resamples, 0.95, seed)
}

/// Fraction of objects in `scene` whose single scene view classifies
/// correctly, over `trials` draws of object and latent views.
pub fn scene_view_accuracy(scene: &SceneSpec, noise: &NoiseModel, config: &EpisodeConfig, trials: usize, seed: u64) -> f64 {
    let correct: usize = (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng_from_seed(derive_seed(seed, stream::SEE_TRIAL, k as u64));
            let object = ObjectId(rng.random_range(0..scene.num_objects()));
            let latent = LatentViews::sample(noise, scene, &mut rng);
            let s = sample_view(noise, &latent, scene, object, SCENE_VIEW, &mut rng).expect("scene view");
            usize::from(classify_goal(&to_distribution(&s, noise.temperature), &config.thresholds) == scene.true_goal(object))
        })
        .sum();
    correct as f64 / trials as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ideal_trials_always_match() {
        let spec = SeeTrialSpec {
            noise: NoiseModel::ideal(),
            num_goals: 5,
            trials: 200,
            seed: 1,
            kinds: vec![SeePolicyKind::NoSee, SeePolicyKind::GreedySee],
            config: EpisodeConfig::default(),
        };
        for o in run_see_trials(&spec).unwrap() {
            assert_eq!(o.successes, 200);
            assert_eq!(o.mean_see_steps, 0.0);
        }
    }

    #[test]
    fn trials_are_reproducible() {
        let spec = SeeTrialSpec {
            noise: NoiseModel { p_bad_view: 0.5, ..NoiseModel::default() },
            num_goals: 5,
            trials: 300,
            seed: 9,
            kinds: vec![SeePolicyKind::RandomSee, SeePolicyKind::GreedySee],
            config: EpisodeConfig::default(),
        };
        let a = run_see_trials(&spec).unwrap();
        let b = run_see_trials(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].per_trial, b[0].per_trial);
    }
}
