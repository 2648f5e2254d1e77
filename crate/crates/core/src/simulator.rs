//! Episode execution: observe, grasp, see, place, until the scene is done or
//! the pick-n-place budget runs out.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::depgraph::{build_dependency_graph, classify_membership, min_fvs_exact, DependencyGraph, FvsResult};
use crate::error::{Error, Result};
use crate::perception::{
    classify_goal, entropy, observe_scene, sample_view, should_terminate, FusionMode, LatentViews, MatchingDistribution,
    NoiseModel, Thresholds, ViewState,
};
use crate::policy::{
    select_grasp, select_place, select_place_pi0, select_view, GraspPolicyKind, PlaceVariant, SeeAction,
    SeePolicyKind,
};
use crate::scene::{Assignment, GoalId, Location, ObjectId, PlaceTarget, SceneSpec, SceneState};
use crate::seed::{derive_seed, rng_from_seed, stream, EpisodeRng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeConfig {
    /// Pick-n-place budget `b`. See actions do not count against it.
    pub step_budget: usize,
    pub max_see_steps: usize,
    pub p_grasp_fail: f64,
    pub p_rotate_fail: f64,
    /// Rotation-failure penalty weight in the see reward.
    pub lambda: f64,
    /// Rotation-magnitude penalty weight in the see reward.
    pub mu: f64,
    pub thresholds: Thresholds,
    pub fusion: FusionMode,
    pub rng_seed: u64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            step_budget: 30,
            max_see_steps: 5,
            p_grasp_fail: 0.0,
            p_rotate_fail: 0.0,
            lambda: 0.2,
            mu: 0.18,
            thresholds: Thresholds::default(),
            fusion: FusionMode::Mean,
            rng_seed: 0,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self, num_goals: usize) -> Result<()> {
        if self.step_budget == 0 {
            return Err(Error::InvalidConfig("step_budget must be at least 1".into()));
        }
        for (name, p) in [("p_grasp_fail", self.p_grasp_fail), ("p_rotate_fail", self.p_rotate_fail)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!("{name}={p} outside [0,1]")));
            }
        }
        if num_goals > 0 {
            self.thresholds.validate(num_goals)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Policies {
    pub grasp: GraspPolicyKind,
    pub see: SeePolicyKind,
    pub place: PlaceVariant,
}

impl Policies {
    /// Optimal grasping with scene-view placement.
    pub fn pi0() -> Self {
        Policies { grasp: GraspPolicyKind::Pi0, see: SeePolicyKind::NoSee, place: PlaceVariant::Pi0Place }
    }

    /// Optimal grasping with in-hand placement refined by `see`.
    pub fn pi1(see: SeePolicyKind) -> Self {
        Policies { grasp: GraspPolicyKind::Pi0, see, place: PlaceVariant::Pi1Place }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeeRecord {
    pub view: usize,
    pub rotate_ok: bool,
    pub magnitude: f64,
    pub entropy_before: f64,
    pub entropy_after: f64,
    pub delta_h: f64,
    pub match_correct: bool,
    pub reward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based pick-n-place index.
    pub step: usize,
    pub grasp: ObjectId,
    pub grasp_failed: bool,
    pub see: Vec<SeeRecord>,
    pub place: Option<PlaceTarget>,
    pub reward_grasp: f64,
    /// Distribution the place decision was made from.
    pub distribution: Option<MatchingDistribution>,
    pub match_correct: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub seed: u64,
    pub policies: Policies,
    pub completed: bool,
    pub planning_steps: usize,
    pub step_budget: usize,
    pub see_steps_total: usize,
    /// Place decisions taken (one per successful grasp).
    pub match_attempts: usize,
    pub match_successes: usize,
    pub steps: Vec<StepRecord>,
    pub final_state: SceneState,
}

impl EpisodeTrace {
    pub fn mean_reward_grasp(&self) -> Option<f64> {
        mean(self.steps.iter().map(|s| s.reward_grasp))
    }

    pub fn see_rewards(&self) -> impl Iterator<Item = f64> + '_ {
        self.steps.iter().flat_map(|s| s.see.iter().map(|r| r.reward))
    }

    /// Completed-episode step count, or the budget for failures.
    pub fn steps_or_budget(&self, budget: usize) -> usize {
        match self.completed_within(budget) {
            Some(n) => n,
            None => budget,
        }
    }

    /// Number of steps if the episode finished within `budget`.
    pub fn completed_within(&self, budget: usize) -> Option<usize> {
        (self.completed && self.steps.len() <= budget).then_some(self.steps.len())
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// `1_m + ΔH − λ(1 − 1_r) − μ·magnitude`.
pub fn compute_rs(match_correct: bool, delta_h: f64, rotate_ok: bool, magnitude: f64, lambda: f64, mu: f64) -> f64 {
    f64::from(u8::from(match_correct)) + delta_h - lambda * f64::from(u8::from(!rotate_ok)) - mu * magnitude
}

/// Grasp reward of moving `i` from `before` to `after`: −1.5 for disturbing
/// an object that was already at its desired pose, 1 for reaching it, 0
/// otherwise. A non-goal object's desired pose is outside.
pub fn compute_rg(spec: &SceneSpec, before: &SceneState, i: ObjectId, after: &SceneState) -> f64 {
    let at_pose = |s: &SceneState| match spec.true_goal(i) {
        Assignment::Goal(_) => spec.is_at_goal(s, i),
        Assignment::NonGoal => matches!(s.location(i), Location::Outside),
    };
    if at_pose(before) {
        -1.5
    } else if at_pose(after) {
        1.0
    } else {
        0.0
    }
}

/// Outcome of one in-hand see loop.
#[derive(Clone, Debug)]
pub struct SeeSession {
    pub view_state: ViewState,
    pub records: Vec<SeeRecord>,
    pub distribution: MatchingDistribution,
}

fn draw(rng: &mut impl Rng, p: f64) -> bool {
    rng.random::<f64>() < p
}

/// Observes in-hand view 1 for free, then rotates until the distribution is
/// confident, the policy stops, or `max_see_steps` rotations were attempted.
///
/// The RNG is consumed in the same order regardless of thresholds, so runs
/// that differ only in `thresholds` share every draw up to where they stop.
pub fn run_see_session(
    spec: &SceneSpec,
    i: ObjectId,
    latent: &LatentViews,
    noise: &NoiseModel,
    see: SeePolicyKind,
    config: &EpisodeConfig,
    rng: &mut impl Rng,
) -> Result<SeeSession> {
    let views = noise.num_views;
    let truth = spec.true_goal(i);
    let mut vs = ViewState::new(i, config.fusion);
    vs.fuse(1, sample_view(noise, latent, spec, i, 1, rng)?)?;
    let mut current = 1;
    let mut d = vs.distribution(noise.temperature).expect("observed");
    let mut records = Vec::new();
    while records.len() < config.max_see_steps && !should_terminate(&d, &config.thresholds) {
        let SeeAction::View(v) = select_view(see, &vs, current, noise, latent, rng) else {
            break;
        };
        let rotate_ok = !draw(rng, config.p_rotate_fail);
        let magnitude = crate::policy::circular_distance(current, v, views) as f64 * std::f64::consts::TAU / views as f64;
        let entropy_before = entropy(&d);
        if rotate_ok {
            vs.fuse(v, sample_view(noise, latent, spec, i, v, rng)?)?;
            current = v;
            d = vs.distribution(noise.temperature).expect("observed");
        }
        let entropy_after = entropy(&d);
        let delta_h = entropy_before - entropy_after;
        let match_correct = classify_goal(&d, &config.thresholds) == truth;
        records.push(SeeRecord {
            view: v,
            rotate_ok,
            magnitude,
            entropy_before,
            entropy_after,
            delta_h,
            match_correct,
            reward: compute_rs(match_correct, delta_h, rotate_ok, magnitude, config.lambda, config.mu),
        });
    }
    Ok(SeeSession { view_state: vs, records, distribution: d })
}

/// A running episode, advanced one pick-n-place at a time.
pub struct Episode<'a> {
    spec: &'a SceneSpec,
    noise: &'a NoiseModel,
    config: &'a EpisodeConfig,
    policies: Policies,
    latent: LatentViews,
    state: SceneState,
    /// Goal each object was last placed on by this episode. The robot trusts
    /// its own placements over later scene views of the same object.
    placed_on: Vec<Option<GoalId>>,
    scene_rng: EpisodeRng,
    hand_rng: EpisodeRng,
    policy_rng: EpisodeRng,
    fail_rng: EpisodeRng,
    steps: Vec<StepRecord>,
    stuck: bool,
}

/// What the robot believes before a grasp.
#[derive(Clone, Debug)]
pub struct Estimate {
    pub scene: BTreeMap<ObjectId, MatchingDistribution>,
    pub assignment: Vec<Assignment>,
    pub graph: DependencyGraph,
}

impl<'a> Episode<'a> {
    pub fn new(spec: &'a SceneSpec, policies: Policies, noise: &'a NoiseModel, config: &'a EpisodeConfig) -> Result<Self> {
        noise.validate()?;
        config.validate(spec.num_goals())?;
        let seed = config.rng_seed;
        let sub = |s, k| rng_from_seed(derive_seed(seed, s, k));
        let latent = LatentViews::sample(noise, spec, &mut sub(stream::PERCEPTION, 0));
        Ok(Episode {
            spec,
            noise,
            config,
            policies,
            latent,
            state: SceneState::initial(spec),
            placed_on: vec![None; spec.num_objects()],
            scene_rng: sub(stream::PERCEPTION, 1),
            hand_rng: sub(stream::PERCEPTION, 2),
            policy_rng: sub(stream::EPISODE, 0),
            fail_rng: sub(stream::EPISODE, 1),
            steps: Vec::new(),
            stuck: false,
        })
    }

    pub fn state(&self) -> &SceneState {
        &self.state
    }

    pub fn latent(&self) -> &LatentViews {
        &self.latent
    }

    pub fn steps(&self) -> &[StepRecord] {
        &self.steps
    }

    pub fn is_completed(&self) -> bool {
        self.spec.check_completion(&self.state)
    }

    pub fn is_finished(&self) -> bool {
        self.stuck || self.is_completed() || self.state.step_count() >= self.config.step_budget
    }

    /// Observes the scene and builds the estimated dependency graph.
    pub fn estimate(&mut self) -> Result<Estimate> {
        let scene = observe_scene(self.noise, &self.latent, self.spec, &self.state, &mut self.scene_rng);
        let assignment: Vec<Assignment> = self
            .spec
            .objects()
            .map(|i| match (self.placed_on[i.0], scene.get(&i)) {
                (Some(j), _) => Assignment::Goal(j),
                (None, Some(d)) => classify_goal(d, &self.config.thresholds),
                (None, None) => Assignment::NonGoal,
            })
            .collect();
        let graph = build_dependency_graph(self.spec, &self.state, &assignment)?;
        Ok(Estimate { scene, assignment, graph })
    }

    /// Runs one pick-n-place chosen by the grasp policy. Returns `false` once
    /// the episode is over.
    pub fn step(&mut self) -> Result<bool> {
        self.step_with(None)
    }

    /// Like [`Episode::step`], but grasps `forced` if given.
    pub fn step_with(&mut self, forced: Option<ObjectId>) -> Result<bool> {
        if self.is_finished() {
            return Ok(false);
        }
        let est = self.estimate()?;
        let choice = match forced {
            Some(i) => Some(i),
            None => {
                let membership = classify_membership(&est.graph);
                let fvs = if membership.free.is_empty() && self.policies.grasp == GraspPolicyKind::Pi0 {
                    Some(cyclic_fvs(&est.graph, &membership.cyclic)?)
                } else {
                    None
                };
                select_grasp(self.policies.grasp, &est.graph, &membership, fvs.as_ref(), &mut self.policy_rng)
            }
        };
        let Some(i) = choice else {
            self.stuck = true;
            return Ok(false);
        };

        let before = self.state.clone();
        let prior = before.location(i).clone();
        self.state.grasp(i)?;
        let index = self.steps.len() + 1;
        if draw(&mut self.fail_rng, self.config.p_grasp_fail) {
            self.state.restore(i, prior);
            self.state.charge_step();
            self.steps.push(StepRecord {
                step: index,
                grasp: i,
                grasp_failed: true,
                see: Vec::new(),
                place: None,
                reward_grasp: 0.0,
                distribution: None,
                match_correct: None,
            });
            return Ok(!self.is_finished());
        }
        self.placed_on[i.0] = None;

        let (d, see, target) = match self.policies.place {
            PlaceVariant::Pi0Place => {
                let d = est.scene.get(&i).cloned().expect("grasped objects are visible");
                let target = select_place_pi0(&d, self.spec, &self.state, &self.config.thresholds);
                (d, Vec::new(), target)
            }
            PlaceVariant::Pi1Place => {
                let session = run_see_session(
                    self.spec,
                    i,
                    &self.latent,
                    self.noise,
                    self.policies.see,
                    self.config,
                    &mut self.hand_rng,
                )?;
                let target = select_place(&session.distribution, self.spec, &self.state, &self.config.thresholds);
                (session.distribution, session.records, target)
            }
        };
        let match_correct = classify_goal(&d, &self.config.thresholds) == self.spec.true_goal(i);
        self.state.apply_place(self.spec, i, target)?;
        if let PlaceTarget::Goal(j) = target {
            self.placed_on[i.0] = Some(j);
        }
        self.steps.push(StepRecord {
            step: index,
            grasp: i,
            grasp_failed: false,
            see,
            place: Some(target),
            reward_grasp: compute_rg(self.spec, &before, i, &self.state),
            distribution: Some(d),
            match_correct: Some(match_correct),
        });
        Ok(!self.is_finished())
    }

    pub fn run(mut self) -> Result<EpisodeTrace> {
        while self.step()? {}
        Ok(self.finish())
    }

    pub fn finish(self) -> EpisodeTrace {
        let completed = self.is_completed();
        let see_steps_total = self.steps.iter().map(|s| s.see.len()).sum();
        let match_attempts = self.steps.iter().filter(|s| s.match_correct.is_some()).count();
        let match_successes = self.steps.iter().filter(|s| s.match_correct == Some(true)).count();
        EpisodeTrace {
            seed: self.config.rng_seed,
            policies: self.policies,
            completed,
            planning_steps: if completed { self.steps.len() } else { self.config.step_budget },
            step_budget: self.config.step_budget,
            see_steps_total,
            match_attempts,
            match_successes,
            steps: self.steps,
            final_state: self.state,
        }
    }
}

/// Minimum FVS computed on the cyclic part only; acyclic vertices never
/// belong to a minimum set, and dropping them keeps the solver input small.
fn cyclic_fvs(graph: &DependencyGraph, cyclic: &std::collections::BTreeSet<ObjectId>) -> Result<FvsResult> {
    let acyclic = graph.vertices().iter().copied().filter(|v| !cyclic.contains(v)).collect();
    min_fvs_exact(&graph.without(&acyclic))
}

pub fn run_episode(
    spec: &SceneSpec,
    policies: Policies,
    noise: &NoiseModel,
    config: &EpisodeConfig,
) -> Result<EpisodeTrace> {
    Episode::new(spec, policies, noise, config)?.run()
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum TraceLine {
    Step(StepRecord),
    Summary(TraceSummary),
}

#[derive(Serialize, Deserialize)]
struct TraceSummary {
    seed: u64,
    policies: Policies,
    completed: bool,
    planning_steps: usize,
    step_budget: usize,
    see_steps_total: usize,
    match_attempts: usize,
    match_successes: usize,
    final_state: SceneState,
}

/// One line per step, then a summary line.
pub fn write_trace_jsonl(trace: &EpisodeTrace, mut out: impl Write) -> Result<()> {
    for step in &trace.steps {
        serde_json::to_writer(&mut out, &TraceLine::Step(step.clone()))?;
        out.write_all(b"\n")?;
    }
    let summary = TraceSummary {
        seed: trace.seed,
        policies: trace.policies,
        completed: trace.completed,
        planning_steps: trace.planning_steps,
        step_budget: trace.step_budget,
        see_steps_total: trace.see_steps_total,
        match_attempts: trace.match_attempts,
        match_successes: trace.match_successes,
        final_state: trace.final_state.clone(),
    };
    serde_json::to_writer(&mut out, &TraceLine::Summary(summary))?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Reads back every trace in a JSONL stream written by [`write_trace_jsonl`].
pub fn read_traces_jsonl(input: impl BufRead) -> Result<Vec<EpisodeTrace>> {
    let mut traces = Vec::new();
    let mut steps = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line)? {
            TraceLine::Step(s) => steps.push(s),
            TraceLine::Summary(s) => traces.push(EpisodeTrace {
                seed: s.seed,
                policies: s.policies,
                completed: s.completed,
                planning_steps: s.planning_steps,
                step_budget: s.step_budget,
                see_steps_total: s.see_steps_total,
                match_attempts: s.match_attempts,
                match_successes: s.match_successes,
                steps: std::mem::take(&mut steps),
                final_state: s.final_state,
            }),
        }
    }
    if !steps.is_empty() {
        return Err(Error::InvalidConfig("trace stream ends without a summary line".into()));
    }
    Ok(traces)
}
