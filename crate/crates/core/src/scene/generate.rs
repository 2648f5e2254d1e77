//! Seeded scene generators.
//!
//! [`generate_scene`] builds scenes with an exact permutation cycle structure
//! among goal objects. Goals sit side by side on a strip of two-cell slots,
//! followed by a free region with one slot per object.
//!
//! [`generate_cluttered_scene`] drops goals and objects at arbitrary
//! positions on a short strip, so objects may straddle two goals and the
//! dependency graph is not restricted to disjoint cycles.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Assignment, Cell, Footprint, GoalId, SceneSpec};
use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

const SLOT: u32 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioParams {
    pub num_goal_objects: usize,
    #[serde(default)]
    pub num_nongoal_objects: usize,
    /// Lengths of the goal-occupancy cycles. A cycle of length k puts each of
    /// k objects on the goal of the next one.
    #[serde(default)]
    pub cycle_type: Vec<usize>,
    /// Fraction of goal objects outside any cycle that start at their goal.
    #[serde(default)]
    pub fraction_at_goal: f64,
    /// Probability that an off-goal object outside any cycle sits on the free
    /// goal of another such object (acyclic chains).
    #[serde(default)]
    pub p_chain: f64,
    /// Probability that a non-goal object sits on a free goal footprint.
    #[serde(default = "default_p_nongoal_on_goal")]
    pub p_nongoal_on_goal: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

fn default_p_nongoal_on_goal() -> f64 {
    0.5
}

impl ScenarioParams {
    pub fn new(num_goal_objects: usize, cycle_type: Vec<usize>) -> Self {
        ScenarioParams {
            num_goal_objects,
            num_nongoal_objects: 0,
            cycle_type,
            fraction_at_goal: 0.0,
            p_chain: 0.0,
            p_nongoal_on_goal: default_p_nongoal_on_goal(),
            rng_seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let in_cycles: usize = self.cycle_type.iter().sum();
        if in_cycles > self.num_goal_objects {
            return Err(Error::InfeasibleScenario(format!(
                "cycles need {in_cycles} objects, only {} goal objects",
                self.num_goal_objects
            )));
        }
        if self.cycle_type.contains(&0) {
            return Err(Error::InfeasibleScenario("cycle length 0".into()));
        }
        if self.num_goal_objects + self.num_nongoal_objects == 0 {
            return Err(Error::InfeasibleScenario("scene needs at least one object".into()));
        }
        for (name, p) in [
            ("fraction_at_goal", self.fraction_at_goal),
            ("p_chain", self.p_chain),
            ("p_nongoal_on_goal", self.p_nongoal_on_goal),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InfeasibleScenario(format!("{name}={p} outside [0,1]")));
            }
        }
        Ok(())
    }
}

/// Builds a scene realizing `params.cycle_type` exactly among goal objects.
///
/// Goal objects are `0..num_goal_objects`, non-goal objects follow. Goal
/// labels are shuffled so object index and goal index are unrelated.
pub fn generate_scene(params: &ScenarioParams) -> Result<SceneSpec> {
    params.validate()?;
    let mut rng = rng_from_seed(params.rng_seed);
    let n = params.num_goal_objects;
    let m = n + params.num_nongoal_objects;

    let goal_fp = |j: usize| Footprint::window(j as Cell * SLOT, SLOT);
    let free_fp = |k: usize| Footprint::window((n + k) as Cell * SLOT, SLOT);
    let num_cells = (n + m) as Cell * SLOT;

    let mut goal_of: Vec<usize> = (0..n).collect();
    goal_of.shuffle(&mut rng);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    let mut initial: Vec<Option<Footprint>> = vec![None; m];
    let mut goal_taken = vec![false; n];
    let mut cursor = 0;
    for &len in &params.cycle_type {
        let members = &order[cursor..cursor + len];
        for (k, &obj) in members.iter().enumerate() {
            let next = members[(k + 1) % len];
            initial[obj] = Some(goal_fp(goal_of[next]));
            goal_taken[goal_of[next]] = true;
        }
        cursor += len;
    }

    let rest = &order[cursor..];
    let at_goal = (params.fraction_at_goal * rest.len() as f64).round() as usize;
    for &obj in &rest[..at_goal] {
        initial[obj] = Some(goal_fp(goal_of[obj]));
        goal_taken[goal_of[obj]] = true;
    }

    // Off-goal objects either go to the free region or onto the still-free
    // goal of an earlier off-goal object. Arcs then only point from earlier
    // to later objects in this order, which keeps chains acyclic.
    let off_goal = &rest[at_goal..];
    let mut next_free = 0;
    for (k, &obj) in off_goal.iter().enumerate() {
        let hosts: Vec<usize> = off_goal[..k].iter().copied().filter(|&h| !goal_taken[goal_of[h]]).collect();
        if !hosts.is_empty() && rng.random_bool(params.p_chain) {
            let host = *hosts.choose(&mut rng).unwrap();
            initial[obj] = Some(goal_fp(goal_of[host]));
            goal_taken[goal_of[host]] = true;
        } else {
            initial[obj] = Some(free_fp(next_free));
            next_free += 1;
        }
    }

    for obj in n..m {
        let free_goals: Vec<usize> = (0..n).filter(|&j| !goal_taken[j]).collect();
        if !free_goals.is_empty() && rng.random_bool(params.p_nongoal_on_goal) {
            let j = *free_goals.choose(&mut rng).unwrap();
            initial[obj] = Some(goal_fp(j));
            goal_taken[j] = true;
        } else {
            initial[obj] = Some(free_fp(next_free));
            next_free += 1;
        }
    }

    let true_goal = (0..m)
        .map(|i| if i < n { Assignment::Goal(GoalId(goal_of[i])) } else { Assignment::NonGoal })
        .collect();
    let initial = initial.into_iter().map(|f| f.expect("every object placed")).collect();
    let goals = (0..n).map(goal_fp).collect();
    Ok(SceneSpec::new(num_cells, true_goal, initial, goals)?.with_params(params.clone()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClutterParams {
    pub num_goal_objects: usize,
    pub num_nongoal_objects: usize,
    /// Cells beyond the minimum needed to fit every object.
    pub slack_cells: u32,
    pub rng_seed: u64,
}

/// Scatters two-cell goals and objects over a strip of `2 * M + slack_cells`
/// cells, independently and uniformly.
pub fn generate_cluttered_scene(params: &ClutterParams) -> Result<SceneSpec> {
    let n = params.num_goal_objects;
    let m = n + params.num_nongoal_objects;
    if m == 0 {
        return Err(Error::InfeasibleScenario("scene needs at least one object".into()));
    }
    let mut rng = rng_from_seed(params.rng_seed);
    let num_cells = SLOT * m as u32 + params.slack_cells;

    let goals = scatter_windows(&mut rng, n, num_cells);
    let mut objects = scatter_windows(&mut rng, m, num_cells);
    objects.shuffle(&mut rng);
    let mut goal_of: Vec<usize> = (0..n).collect();
    goal_of.shuffle(&mut rng);
    let true_goal = (0..m)
        .map(|i| if i < n { Assignment::Goal(GoalId(goal_of[i])) } else { Assignment::NonGoal })
        .collect();
    SceneSpec::new(num_cells, true_goal, objects, goals)
}

/// `count` disjoint two-cell windows, positions uniform over compositions of
/// the leftover cells into `count + 1` gaps.
fn scatter_windows(rng: &mut impl Rng, count: usize, num_cells: u32) -> Vec<Footprint> {
    let slack = num_cells - SLOT * count as u32;
    let mut cuts: Vec<u32> = (0..count).map(|_| rng.random_range(0..=slack)).collect();
    cuts.sort_unstable();
    cuts.iter()
        .enumerate()
        .map(|(k, &gap_before)| Footprint::window(gap_before + SLOT * k as u32, SLOT))
        .collect()
}
