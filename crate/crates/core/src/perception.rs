//! Synthetic object matching.
//!
//! Stands in for learned image embeddings: each observation of an object is a
//! vector of similarity scores against the N goals, drawn from a Gaussian
//! model whose means depend on whether the view is good or ambiguous. Scores
//! are turned into a categorical matching distribution by a tempered softmax.
//!
//! View indices: `0` is the scene (top-down) view used for the M-to-N
//! matching; `1..=num_views` are the in-hand views reachable by rotating a
//! grasped object. In-hand view `1` is the pose right after grasping.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{Assignment, GoalId, Location, ObjectId, SceneSpec, SceneState};

pub const SCENE_VIEW: usize = 0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimilarityVector(pub Vec<f64>);

impl SimilarityVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn shifted(&self, by: f64) -> Self {
        SimilarityVector(self.0.iter().map(|s| s + by).collect())
    }
}

/// Categorical distribution over the N goals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MatchingDistribution(Vec<f64>);

impl MatchingDistribution {
    /// Wraps probabilities that already sum to one.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        let sum: f64 = probs.iter().sum();
        if probs.is_empty() || probs.iter().any(|p| !(0.0..=1.0 + 1e-12).contains(p)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("not a distribution: {probs:?}")));
        }
        Ok(MatchingDistribution(probs))
    }

    pub fn uniform(n: usize) -> Self {
        MatchingDistribution(vec![1.0 / n as f64; n])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Highest-probability goal; ties go to the lowest index.
    pub fn argmax(&self) -> GoalId {
        let mut best = 0;
        for (j, &p) in self.0.iter().enumerate() {
            if p > self.0[best] {
                best = j;
            }
        }
        GoalId(best)
    }

    /// Matching score: the largest probability.
    pub fn score(&self) -> f64 {
        self.0[self.argmax().0]
    }

    pub fn entropy(&self) -> f64 {
        entropy(self)
    }
}

/// `probs[j] = exp(s[j]/τ) / Σ_k exp(s[k]/τ)`, evaluated after subtracting the
/// maximum score.
pub fn to_distribution(s: &SimilarityVector, temperature: f64) -> MatchingDistribution {
    debug_assert!(temperature > 0.0);
    let max = s.0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = s.0.iter().map(|&x| ((x - max) / temperature).exp()).collect();
    let total: f64 = weights.iter().sum();
    MatchingDistribution(weights.into_iter().map(|w| w / total).collect())
}

/// Shannon entropy in nats, with `0 log 0 = 0`.
pub fn entropy(d: &MatchingDistribution) -> f64 {
    -d.0.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
}

/// Confidence offsets above the uniform level `1/N`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    /// See-termination offset.
    pub omega_m: f64,
    /// Goal / non-goal boundary offset.
    pub omega_g: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { omega_m: 0.12, omega_g: 0.04 }
    }
}

impl Thresholds {
    /// A single goal has no ambiguity to resolve, so only the ordering of
    /// the two offsets is checked there.
    pub fn validate(&self, num_goals: usize) -> Result<()> {
        let ceiling = if num_goals <= 1 { f64::INFINITY } else { 1.0 - 1.0 / num_goals as f64 };
        if !(0.0 < self.omega_g && self.omega_g <= self.omega_m && self.omega_m < ceiling) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < omega_g ({}) <= omega_m ({}) < 1 - 1/N ({ceiling})",
                self.omega_g, self.omega_m
            )));
        }
        Ok(())
    }

    /// Goal-classification threshold, capped at 1 so a one-goal scene still
    /// accepts its (necessarily one-hot) distributions.
    pub fn zeta_g(&self, num_goals: usize) -> f64 {
        (1.0 / num_goals as f64 + self.omega_g).min(1.0)
    }

    pub fn zeta_m(&self, num_goals: usize) -> f64 {
        (1.0 / num_goals as f64 + self.omega_m).min(1.0)
    }
}

/// Matched goal if the score clears `1/N + omega_g`, otherwise non-goal.
pub fn classify_goal(d: &MatchingDistribution, thresholds: &Thresholds) -> Assignment {
    if d.score() >= thresholds.zeta_g(d.len()) {
        Assignment::Goal(d.argmax())
    } else {
        Assignment::NonGoal
    }
}

pub fn should_terminate(d: &MatchingDistribution, thresholds: &Thresholds) -> bool {
    d.score() >= thresholds.zeta_m(d.len())
}

/// Which objects get a look-alike goal that wins on their ambiguous views.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Confuser {
    #[default]
    None,
    /// Each goal object independently, with this probability, gets a
    /// uniformly chosen wrong goal as its look-alike.
    Fraction(f64),
    /// Explicit object index → goal index.
    Map(BTreeMap<usize, usize>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    /// Mean similarity of the true goal on a good view.
    pub mu_match: f64,
    /// Mean similarity of every non-matching goal.
    pub mu_nonmatch: f64,
    /// Per-score noise standard deviation.
    pub sigma: f64,
    /// Probability that a view is ambiguous.
    pub p_bad_view: f64,
    /// Mean similarity of the true goal on an ambiguous view.
    pub mu_bad: f64,
    /// Softmax temperature.
    pub temperature: f64,
    /// Number of in-hand views.
    pub num_views: usize,
    /// Chance that in-hand view `v + 1` copies the quality of view `v`
    /// instead of being drawn afresh. Zero gives independent views.
    pub view_correlation: f64,
    pub confuser: Confuser,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            mu_match: 1.0,
            mu_nonmatch: 0.0,
            sigma: 0.03,
            p_bad_view: 0.3,
            mu_bad: 0.05,
            temperature: 0.1,
            num_views: 8,
            view_correlation: 0.6,
            confuser: Confuser::None,
        }
    }
}

impl NoiseModel {
    /// Noiseless, never ambiguous.
    pub fn ideal() -> Self {
        NoiseModel { sigma: 0.0, p_bad_view: 0.0, ..NoiseModel::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let probability = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name}={p} outside [0,1]")))
            }
        };
        if !(self.mu_match > self.mu_nonmatch) {
            return Err(Error::InvalidConfig("mu_match must exceed mu_nonmatch".into()));
        }
        if self.num_views == 0 {
            return Err(Error::InvalidConfig("num_views must be at least 1".into()));
        }
        if !(self.temperature > 0.0) || !(self.sigma >= 0.0) {
            return Err(Error::InvalidConfig("temperature must be > 0 and sigma >= 0".into()));
        }
        probability("p_bad_view", self.p_bad_view)?;
        probability("view_correlation", self.view_correlation)?;
        if let Confuser::Fraction(f) = self.confuser {
            probability("confuser fraction", f)?;
        }
        Ok(())
    }

    /// Mean similarity vector of object `i`'s view of the given quality.
    pub fn mean_vector(&self, truth: Assignment, quality: ViewQuality, confuser: Option<GoalId>, n: usize) -> Vec<f64> {
        let mut mean = vec![self.mu_nonmatch; n];
        if let Assignment::Goal(g) = truth {
            match quality {
                ViewQuality::Good => mean[g.0] = self.mu_match,
                ViewQuality::Bad => {
                    mean[g.0] = self.mu_bad;
                    if let Some(c) = confuser {
                        mean[c.0] = self.mu_match;
                    }
                }
            }
        }
        mean
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewQuality {
    Good,
    Bad,
}

/// Hidden per-(object, view) qualities and look-alikes, frozen when the
/// episode starts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentViews {
    scene: Vec<ViewQuality>,
    in_hand: Vec<Vec<ViewQuality>>,
    confuser: Vec<Option<GoalId>>,
}

impl LatentViews {
    pub fn sample(noise: &NoiseModel, spec: &SceneSpec, rng: &mut impl Rng) -> Self {
        let v = noise.num_views;
        let draw = |rng: &mut dyn rand::RngCore| {
            if rng.random_bool(noise.p_bad_view) {
                ViewQuality::Bad
            } else {
                ViewQuality::Good
            }
        };
        let mut scene = Vec::with_capacity(spec.num_objects());
        let mut in_hand = Vec::with_capacity(spec.num_objects());
        for _ in spec.objects() {
            scene.push(draw(rng));
            let mut chain = Vec::with_capacity(v);
            chain.push(draw(rng));
            for k in 1..v {
                let q = if rng.random_bool(noise.view_correlation) { chain[k - 1] } else { draw(rng) };
                chain.push(q);
            }
            in_hand.push(chain);
        }
        let n = spec.num_goals();
        let confuser = spec
            .objects()
            .map(|i| match (&noise.confuser, spec.true_goal(i)) {
                (Confuser::None, _) | (_, Assignment::NonGoal) => None,
                (Confuser::Fraction(f), Assignment::Goal(g)) => {
                    (n >= 2 && rng.random_bool(*f)).then(|| {
                        let k = rng.random_range(0..n - 1);
                        GoalId(if k >= g.0 { k + 1 } else { k })
                    })
                }
                (Confuser::Map(map), Assignment::Goal(_)) => map.get(&i.0).map(|&j| GoalId(j)),
            })
            .collect();
        LatentViews { scene, in_hand, confuser }
    }

    /// Explicit qualities, for tests and constructed instances.
    pub fn from_parts(scene: Vec<ViewQuality>, in_hand: Vec<Vec<ViewQuality>>, confuser: Vec<Option<GoalId>>) -> Self {
        LatentViews { scene, in_hand, confuser }
    }

    pub fn quality(&self, i: ObjectId, view: usize) -> ViewQuality {
        if view == SCENE_VIEW {
            self.scene[i.0]
        } else {
            self.in_hand[i.0][view - 1]
        }
    }

    pub fn in_hand_qualities(&self, i: ObjectId) -> &[ViewQuality] {
        &self.in_hand[i.0]
    }

    pub fn confuser(&self, i: ObjectId) -> Option<GoalId> {
        self.confuser[i.0]
    }
}

/// Draws one observation of object `i` from view `view`.
///
/// Always consumes exactly N normal draws, so noise streams stay aligned
/// across noise levels.
pub fn sample_view(
    noise: &NoiseModel,
    latent: &LatentViews,
    spec: &SceneSpec,
    i: ObjectId,
    view: usize,
    rng: &mut impl Rng,
) -> Result<SimilarityVector> {
    if view > noise.num_views {
        return Err(Error::ViewOutOfRange { view, views: noise.num_views });
    }
    let mean = noise.mean_vector(spec.true_goal(i), latent.quality(i, view), latent.confuser(i), spec.num_goals());
    Ok(SimilarityVector(
        mean.into_iter()
            .map(|mu| {
                let z: f64 = rng.sample(StandardNormal);
                mu + noise.sigma * z
            })
            .collect(),
    ))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// Arithmetic mean of every observation so far.
    #[default]
    Mean,
    /// Only the most recent observation counts.
    LatestOnly,
}

/// In-hand observation history of one grasped object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewState {
    pub object: ObjectId,
    observed_views: Vec<usize>,
    samples: Vec<SimilarityVector>,
    fused: Option<SimilarityVector>,
    mode: FusionMode,
}

impl ViewState {
    pub fn new(object: ObjectId, mode: FusionMode) -> Self {
        ViewState { object, observed_views: Vec::new(), samples: Vec::new(), fused: None, mode }
    }

    pub fn observed_views(&self) -> &[usize] {
        &self.observed_views
    }

    pub fn samples(&self) -> &[SimilarityVector] {
        &self.samples
    }

    pub fn fused(&self) -> Option<&SimilarityVector> {
        self.fused.as_ref()
    }

    pub fn mode(&self) -> FusionMode {
        self.mode
    }

    pub fn has_observed(&self, view: usize) -> bool {
        self.observed_views.contains(&view)
    }

    /// Adds an observation from `view` and refreshes the fused vector.
    pub fn fuse(&mut self, view: usize, sample: SimilarityVector) -> Result<()> {
        if let Some(first) = self.samples.first() {
            if first.len() != sample.len() {
                return Err(Error::LengthMismatch { expected: first.len(), got: sample.len() });
            }
        }
        if self.has_observed(view) {
            return Err(Error::InvalidConfig(format!("view {view} already observed")));
        }
        self.observed_views.push(view);
        self.samples.push(sample);
        self.fused = Some(match self.mode {
            FusionMode::LatestOnly => self.samples.last().cloned().expect("just pushed"),
            FusionMode::Mean => fuse_mean(&self.samples),
        });
        Ok(())
    }

    pub fn distribution(&self, temperature: f64) -> Option<MatchingDistribution> {
        self.fused.as_ref().map(|s| to_distribution(s, temperature))
    }
}

pub(crate) fn fuse_mean(samples: &[SimilarityVector]) -> SimilarityVector {
    let k = samples.len() as f64;
    let n = samples[0].len();
    SimilarityVector((0..n).map(|j| samples.iter().map(|s| s.0[j]).sum::<f64>() / k).collect())
}

/// Scene-view matching distribution of every object that is not outside.
pub fn observe_scene(
    noise: &NoiseModel,
    latent: &LatentViews,
    spec: &SceneSpec,
    state: &SceneState,
    rng: &mut impl Rng,
) -> BTreeMap<ObjectId, MatchingDistribution> {
    spec.objects()
        .filter(|&i| !matches!(state.location(i), Location::Outside))
        .map(|i| {
            let s = sample_view(noise, latent, spec, i, SCENE_VIEW, rng).expect("scene view is always in range");
            (i, to_distribution(&s, noise.temperature))
        })
        .collect()
}
