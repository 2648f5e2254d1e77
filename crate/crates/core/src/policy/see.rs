//! View selection for the in-hand see loop.
//!
//! The greedy policy knows the noise model but neither the identity of the
//! grasped object nor which views are ambiguous. It scores each unobserved
//! view by the entropy it expects after observing it, averaging over the
//! current identity belief and, per identity, the posterior quality of that
//! view given what has been seen so far (a two-state hidden Markov chain
//! along the view index).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::perception::{
    entropy, to_distribution, FusionMode, LatentViews, NoiseModel, SimilarityVector, ViewQuality, ViewState,
};
use crate::scene::{Assignment, GoalId};

/// Smallest noise scale assumed when weighing an observation; keeps the
/// quality posterior finite for noiseless models.
pub const LIKELIHOOD_SIGMA_FLOOR: f64 = 1e-2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeePolicyKind {
    #[default]
    NoSee,
    RandomSee,
    GreedySee,
    /// Cheats: knows which views are good.
    OracleSee,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeeAction {
    View(usize),
    Stop,
}

/// Next view for the object in `vs`, whose object currently faces
/// `current_view`. Never returns an observed view.
pub fn select_view(
    kind: SeePolicyKind,
    vs: &ViewState,
    current_view: usize,
    noise: &NoiseModel,
    latent: &LatentViews,
    rng: &mut impl Rng,
) -> SeeAction {
    let unobserved: Vec<usize> = (1..=noise.num_views).filter(|&v| !vs.has_observed(v)).collect();
    if unobserved.is_empty() {
        return SeeAction::Stop;
    }
    match kind {
        SeePolicyKind::NoSee => SeeAction::Stop,
        SeePolicyKind::RandomSee => SeeAction::View(unobserved[rng.random_range(0..unobserved.len())]),
        SeePolicyKind::OracleSee => unobserved
            .into_iter()
            .find(|&v| latent.quality(vs.object, v) == ViewQuality::Good)
            .map_or(SeeAction::Stop, SeeAction::View),
        SeePolicyKind::GreedySee => {
            let h_now = current_entropy(vs, noise);
            let mut best: Option<(f64, usize, usize)> = None;
            for v in unobserved {
                let gain = h_now - expected_entropy_after(vs, v, noise);
                let dist = circular_distance(current_view, v, noise.num_views);
                let better = match best {
                    None => true,
                    Some((g, d, _)) => gain > g + 1e-12 || ((gain - g).abs() <= 1e-12 && dist < d),
                };
                if better {
                    best = Some((gain, dist, v));
                }
            }
            SeeAction::View(best.expect("non-empty").2)
        }
    }
}

pub(crate) fn circular_distance(a: usize, b: usize, views: usize) -> usize {
    let d = a.abs_diff(b) % views;
    d.min(views - d)
}

fn current_entropy(vs: &ViewState, noise: &NoiseModel) -> f64 {
    vs.distribution(noise.temperature).map_or_else(
        || (noise_goals(vs) as f64).ln(),
        |d| entropy(&d),
    )
}

fn noise_goals(vs: &ViewState) -> usize {
    vs.samples().first().map_or(1, SimilarityVector::len)
}

/// Expected entropy of the fused distribution after observing `view`, using
/// the noise-free mean of the predicted observation.
pub fn expected_entropy_after(vs: &ViewState, view: usize, noise: &NoiseModel) -> f64 {
    let Some(fused) = vs.fused() else {
        return 0.0;
    };
    let n = fused.len();
    let weights = to_distribution(fused, noise.temperature);
    let k = vs.samples().len() as f64;
    let mut expected = 0.0;
    for (g, &w) in weights.probs().iter().enumerate() {
        if w < 1e-12 {
            continue;
        }
        let posterior = quality_posterior(vs, GoalId(g), noise);
        for (q, p_q) in [(ViewQuality::Good, posterior[view - 1]), (ViewQuality::Bad, 1.0 - posterior[view - 1])] {
            if p_q <= 0.0 {
                continue;
            }
            let mean = noise.mean_vector(Assignment::Goal(GoalId(g)), q, None, n);
            let predicted = match vs.mode() {
                FusionMode::LatestOnly => SimilarityVector(mean),
                FusionMode::Mean => {
                    SimilarityVector(fused.0.iter().zip(&mean).map(|(f, m)| (f * k + m) / (k + 1.0)).collect())
                }
            };
            expected += w * p_q * entropy(&to_distribution(&predicted, noise.temperature));
        }
    }
    expected
}

/// Posterior probability that each in-hand view `1..=V` is good, assuming
/// the object's true goal is `g`. Entry `v - 1` is view `v`.
///
/// Observations enter through their similarity to `g` only, since the
/// look-alike goal of an ambiguous view is unknown.
pub fn quality_posterior(vs: &ViewState, g: GoalId, noise: &NoiseModel) -> Vec<f64> {
    let views = noise.num_views;
    let sigma = noise.sigma.max(LIKELIHOOD_SIGMA_FLOOR);
    let prior = [1.0 - noise.p_bad_view, noise.p_bad_view];
    let means = [noise.mu_match, noise.mu_bad];
    let rho = noise.view_correlation;

    // Emission weights per view, scaled so the larger one is 1.
    let emission: Vec<[f64; 2]> = (1..=views)
        .map(|v| match vs.observed_views().iter().position(|&o| o == v) {
            None => [1.0, 1.0],
            Some(idx) => {
                let x = vs.samples()[idx].0[g.0];
                let ll = means.map(|m| -(x - m).powi(2) / (2.0 * sigma * sigma));
                let top = ll[0].max(ll[1]);
                ll.map(|l| (l - top).exp())
            }
        })
        .collect();
    let step = |from: [f64; 2]| -> [f64; 2] {
        let total = from[0] + from[1];
        [0, 1].map(|q| rho * from[q] + (1.0 - rho) * prior[q] * total)
    };
    let normalize = |x: [f64; 2]| {
        let s = x[0] + x[1];
        if s > 0.0 {
            [x[0] / s, x[1] / s]
        } else {
            [0.5, 0.5]
        }
    };

    let mut forward = vec![[0.0; 2]; views];
    forward[0] = normalize([prior[0] * emission[0][0], prior[1] * emission[0][1]]);
    for v in 1..views {
        let pred = step(forward[v - 1]);
        forward[v] = normalize([pred[0] * emission[v][0], pred[1] * emission[v][1]]);
    }
    let mut backward = vec![[1.0; 2]; views];
    for v in (0..views - 1).rev() {
        let next = [backward[v + 1][0] * emission[v + 1][0], backward[v + 1][1] * emission[v + 1][1]];
        let b = [0, 1].map(|q| rho * next[q] + (1.0 - rho) * (prior[0] * next[0] + prior[1] * next[1]));
        backward[v] = normalize(b);
    }
    (0..views)
        .map(|v| {
            let good = forward[v][0] * backward[v][0];
            let bad = forward[v][1] * backward[v][1];
            if good + bad > 0.0 {
                good / (good + bad)
            } else {
                prior[0]
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::ObjectId;
    use crate::seed::rng_from_seed;

    fn latent_for_one(in_hand: Vec<ViewQuality>) -> LatentViews {
        LatentViews::from_parts(vec![ViewQuality::Good], vec![in_hand], vec![None])
    }

    #[test]
    fn no_see_stops() {
        let noise = NoiseModel::default();
        let vs = ViewState::new(ObjectId(0), FusionMode::Mean);
        let latent = latent_for_one(vec![ViewQuality::Good; noise.num_views]);
        assert_eq!(select_view(SeePolicyKind::NoSee, &vs, 1, &noise, &latent, &mut rng_from_seed(0)), SeeAction::Stop);
    }

    #[test]
    fn oracle_finds_the_single_good_view() {
        let noise = NoiseModel { num_views: 12, ..NoiseModel::default() };
        let mut q = vec![ViewQuality::Bad; 12];
        q[8] = ViewQuality::Good;
        let latent = latent_for_one(q);
        let mut vs = ViewState::new(ObjectId(0), FusionMode::Mean);
        vs.fuse(1, SimilarityVector(vec![0.0, 0.05, 0.0])).unwrap();
        assert_eq!(select_view(SeePolicyKind::OracleSee, &vs, 1, &noise, &latent, &mut rng_from_seed(0)), SeeAction::View(9));
        let all_bad = latent_for_one(vec![ViewQuality::Bad; 12]);
        assert_eq!(select_view(SeePolicyKind::OracleSee, &vs, 1, &noise, &all_bad, &mut rng_from_seed(0)), SeeAction::Stop);
    }

    #[test]
    fn random_and_greedy_skip_observed_views() {
        let noise = NoiseModel { num_views: 4, ..NoiseModel::default() };
        let latent = latent_for_one(vec![ViewQuality::Good; 4]);
        let mut vs = ViewState::new(ObjectId(0), FusionMode::Mean);
        vs.fuse(1, SimilarityVector(vec![0.02, 0.05, 0.01])).unwrap();
        vs.fuse(3, SimilarityVector(vec![0.0, 0.04, 0.02])).unwrap();
        let mut rng = rng_from_seed(7);
        for _ in 0..200 {
            for kind in [SeePolicyKind::RandomSee, SeePolicyKind::GreedySee] {
                let SeeAction::View(v) = select_view(kind, &vs, 3, &noise, &latent, &mut rng) else { panic!() };
                assert!(v == 2 || v == 4);
            }
        }
        vs.fuse(2, SimilarityVector(vec![0.0, 0.04, 0.02])).unwrap();
        vs.fuse(4, SimilarityVector(vec![0.0, 0.04, 0.02])).unwrap();
        assert_eq!(select_view(SeePolicyKind::GreedySee, &vs, 4, &noise, &latent, &mut rng), SeeAction::Stop);
    }

    #[test]
    fn greedy_moves_away_from_a_bad_neighbourhood() {
        let noise = NoiseModel { num_views: 8, view_correlation: 0.9, p_bad_view: 0.5, ..NoiseModel::default() };
        let latent = latent_for_one(vec![ViewQuality::Good; 8]);
        let mut vs = ViewState::new(ObjectId(0), FusionMode::Mean);
        // Ambiguous first view: every goal looks alike.
        vs.fuse(1, SimilarityVector(vec![0.03, 0.02, 0.04])).unwrap();
        let SeeAction::View(v) = select_view(SeePolicyKind::GreedySee, &vs, 1, &noise, &latent, &mut rng_from_seed(0))
        else {
            panic!()
        };
        // Qualities are correlated along the view index, not around the circle.
        assert!(v >= 5, "picked {v}");
    }

    /// Quality posterior by summing over every joint quality assignment.
    fn enumerated_posterior(vs: &ViewState, g: GoalId, noise: &NoiseModel) -> Vec<f64> {
        let views = noise.num_views;
        let sigma = noise.sigma.max(LIKELIHOOD_SIGMA_FLOOR);
        let p = |bad: bool| if bad { noise.p_bad_view } else { 1.0 - noise.p_bad_view };
        let mut good_mass = vec![0.0; views];
        let mut total = 0.0;
        for config in 0u32..(1 << views) {
            let bad = |v: usize| config >> v & 1 == 1;
            let mut w = p(bad(0));
            for v in 1..views {
                let stay = if bad(v) == bad(v - 1) { noise.view_correlation } else { 0.0 };
                w *= stay + (1.0 - noise.view_correlation) * p(bad(v));
            }
            for (idx, &obs) in vs.observed_views().iter().enumerate() {
                let x = vs.samples()[idx].0[g.0];
                let mean = if bad(obs - 1) { noise.mu_bad } else { noise.mu_match };
                w *= (-(x - mean).powi(2) / (2.0 * sigma * sigma)).exp();
            }
            total += w;
            for (v, mass) in good_mass.iter_mut().enumerate() {
                if !bad(v) {
                    *mass += w;
                }
            }
        }
        good_mass.into_iter().map(|m| m / total).collect()
    }

    fn enumerated_expected_entropy(vs: &ViewState, view: usize, noise: &NoiseModel) -> f64 {
        let fused = vs.fused().unwrap();
        let n = fused.len();
        let k = vs.samples().len() as f64;
        let weights = to_distribution(fused, noise.temperature);
        let mut total = 0.0;
        for g in 0..n {
            let post = enumerated_posterior(vs, GoalId(g), noise);
            for (q, pq) in [(ViewQuality::Good, post[view - 1]), (ViewQuality::Bad, 1.0 - post[view - 1])] {
                let mean = noise.mean_vector(Assignment::Goal(GoalId(g)), q, None, n);
                let fused_next: Vec<f64> = match vs.mode() {
                    FusionMode::Mean => fused.0.iter().zip(&mean).map(|(f, m)| (f * k + m) / (k + 1.0)).collect(),
                    FusionMode::LatestOnly => mean,
                };
                total += weights.probs()[g] * pq * entropy(&to_distribution(&SimilarityVector(fused_next), noise.temperature));
            }
        }
        total
    }

    #[test]
    fn hmm_matches_enumeration_on_three_views() {
        let mut rng = rng_from_seed(11);
        for trial in 0..200 {
            let noise = NoiseModel {
                num_views: 3,
                sigma: rng.random_range(0.05..0.3),
                p_bad_view: rng.random_range(0.05..0.95),
                view_correlation: rng.random_range(0.0..0.95),
                mu_bad: rng.random_range(0.0..0.5),
                ..NoiseModel::default()
            };
            let mode = if trial % 2 == 0 { FusionMode::Mean } else { FusionMode::LatestOnly };
            let mut vs = ViewState::new(ObjectId(0), mode);
            let observed = rng.random_range(1..=2);
            let mut order = vec![1, 2, 3];
            rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
            for &v in &order[..observed] {
                vs.fuse(v, SimilarityVector((0..3).map(|_| rng.random_range(-0.1..1.1)).collect())).unwrap();
            }
            for g in 0..3 {
                let hmm = quality_posterior(&vs, GoalId(g), &noise);
                let brute = enumerated_posterior(&vs, GoalId(g), &noise);
                for (a, b) in hmm.iter().zip(&brute) {
                    assert!((a - b).abs() < 1e-9, "trial {trial}: {hmm:?} vs {brute:?}");
                }
            }
            let mut hmm_rank: Vec<(usize, f64)> = Vec::new();
            for &v in &order[observed..] {
                let a = expected_entropy_after(&vs, v, &noise);
                let b = enumerated_expected_entropy(&vs, v, &noise);
                assert!((a - b).abs() < 1e-9, "trial {trial}, view {v}: {a} vs {b}");
                hmm_rank.push((v, b));
            }
            // Ranking: greedy picks the view with the lowest enumerated entropy.
            if hmm_rank.len() == 2 && (hmm_rank[0].1 - hmm_rank[1].1).abs() > 1e-9 {
                let best = if hmm_rank[0].1 < hmm_rank[1].1 { hmm_rank[0].0 } else { hmm_rank[1].0 };
                let latent = latent_for_one(vec![ViewQuality::Good; 3]);
                let current = *vs.observed_views().last().unwrap();
                let pick = select_view(SeePolicyKind::GreedySee, &vs, current, &noise, &latent, &mut rng);
                assert_eq!(pick, SeeAction::View(best));
            }
        }
    }
}
