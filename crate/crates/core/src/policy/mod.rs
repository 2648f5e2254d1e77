//! Grasp, see and place policies.

mod see;

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::depgraph::{DependencyGraph, FvsResult, MembershipSets};
use crate::perception::{MatchingDistribution, Thresholds};
use crate::scene::{Assignment, ObjectId, PlaceTarget, SceneSpec, SceneState};

pub(crate) use see::circular_distance;
pub use see::{expected_entropy_after, quality_posterior, select_view, SeeAction, SeePolicyKind, LIKELIHOOD_SIGMA_FLOOR};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraspPolicyKind {
    /// Free objects uniformly at random, else the first member of a minimum
    /// feedback vertex set.
    #[default]
    Pi0,
    /// First object whose estimated goal is free, else the first blocked one.
    GreedyFreeGoal,
    /// Uniform over every object the estimate says still has to move.
    RandomGrasp,
}

/// How the grasped object's place target is decided.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaceVariant {
    /// From the scene-view distribution of the grasped object.
    Pi0Place,
    /// From the fused in-hand distribution after the see loop.
    #[default]
    Pi1Place,
}

/// Picks the next object to grasp from the estimated dependency graph, or
/// `None` when nothing is left to move.
///
/// `fvs` is only consulted by [`GraspPolicyKind::Pi0`] when no object is free.
pub fn select_grasp(
    kind: GraspPolicyKind,
    graph: &DependencyGraph,
    membership: &MembershipSets,
    fvs: Option<&FvsResult>,
    rng: &mut impl Rng,
) -> Option<ObjectId> {
    match kind {
        GraspPolicyKind::Pi0 => {
            if !membership.free.is_empty() {
                return Some(uniform(&membership.free, rng));
            }
            fvs.and_then(|f| f.members.first().copied()).or_else(|| membership.blocked.first().copied())
        }
        GraspPolicyKind::GreedyFreeGoal => {
            membership.free.first().or_else(|| membership.blocked.first()).copied()
        }
        GraspPolicyKind::RandomGrasp => {
            let vertices = graph.vertices();
            (!vertices.is_empty()).then(|| vertices[rng.random_range(0..vertices.len())])
        }
    }
}

fn uniform(set: &BTreeSet<ObjectId>, rng: &mut impl Rng) -> ObjectId {
    *set.iter().nth(rng.random_range(0..set.len())).expect("non-empty")
}

/// Place rule for an in-hand object with matching distribution `d`: its
/// matched goal if confident and free, the buffer if confident but occupied,
/// outside otherwise.
pub fn select_place(d: &MatchingDistribution, spec: &SceneSpec, state: &SceneState, thresholds: &Thresholds) -> PlaceTarget {
    match crate::perception::classify_goal(d, thresholds) {
        Assignment::NonGoal => PlaceTarget::Outside,
        Assignment::Goal(j) if state.is_goal_free(spec, j) => PlaceTarget::Goal(j),
        Assignment::Goal(_) => PlaceTarget::Buffer,
    }
}

/// Same rule as [`select_place`], fed the grasped object's scene-view
/// distribution instead of an in-hand one.
pub fn select_place_pi0(
    d_scene: &MatchingDistribution,
    spec: &SceneSpec,
    state: &SceneState,
    thresholds: &Thresholds,
) -> PlaceTarget {
    select_place(d_scene, spec, state, thresholds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depgraph::{build_dependency_graph, classify_membership, min_fvs_exact};
    use crate::scene::{generate_scene, GoalId, ScenarioParams};
    use crate::seed::rng_from_seed;

    fn graph_of(spec: &SceneSpec, state: &SceneState) -> (DependencyGraph, MembershipSets, FvsResult) {
        let g = build_dependency_graph(spec, state, spec.true_assignment()).unwrap();
        let m = classify_membership(&g);
        let f = min_fvs_exact(&g).unwrap();
        (g, m, f)
    }

    #[test]
    fn pi0_is_uniform_over_free_objects() {
        let spec = generate_scene(&ScenarioParams::new(3, vec![]).with_seed(2)).unwrap();
        let state = SceneState::initial(&spec);
        let (g, m, f) = graph_of(&spec, &state);
        assert_eq!(m.free.len(), 3);
        let mut rng = rng_from_seed(42);
        let mut counts = [0f64; 3];
        let draws = 10_000;
        for _ in 0..draws {
            counts[select_grasp(GraspPolicyKind::Pi0, &g, &m, Some(&f), &mut rng).unwrap().0] += 1.0;
        }
        let expected = draws as f64 / 3.0;
        let chi2: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
        // 99.9% quantile of chi-square with 2 degrees of freedom.
        assert!(chi2 < 13.82, "chi2 = {chi2}, counts {counts:?}");
    }

    #[test]
    fn pi0_uses_fvs_on_pure_cycle() {
        let spec = generate_scene(&ScenarioParams::new(4, vec![4]).with_seed(5)).unwrap();
        let state = SceneState::initial(&spec);
        let (g, m, f) = graph_of(&spec, &state);
        assert!(m.free.is_empty());
        let pick = select_grasp(GraspPolicyKind::Pi0, &g, &m, Some(&f), &mut rng_from_seed(0)).unwrap();
        assert_eq!(pick, f.members[0]);
        assert!(m.cyclic.contains(&pick));
    }

    #[test]
    fn pi0_never_grasps_at_goal_objects() {
        let mut p = ScenarioParams::new(2, vec![]);
        p.fraction_at_goal = 0.5;
        let spec = generate_scene(&p.with_seed(4)).unwrap();
        let state = SceneState::initial(&spec);
        let at_goal: Vec<_> = spec.objects().filter(|&i| spec.is_at_goal(&state, i)).collect();
        assert_eq!(at_goal.len(), 1);
        let (g, m, f) = graph_of(&spec, &state);
        let mut rng = rng_from_seed(1);
        for _ in 0..1000 {
            assert_ne!(select_grasp(GraspPolicyKind::Pi0, &g, &m, Some(&f), &mut rng), Some(at_goal[0]));
        }
    }

    #[test]
    fn nothing_to_move() {
        let mut p = ScenarioParams::new(2, vec![]);
        p.fraction_at_goal = 1.0;
        let spec = generate_scene(&p).unwrap();
        let (g, m, f) = graph_of(&spec, &SceneState::initial(&spec));
        for kind in [GraspPolicyKind::Pi0, GraspPolicyKind::GreedyFreeGoal, GraspPolicyKind::RandomGrasp] {
            assert_eq!(select_grasp(kind, &g, &m, Some(&f), &mut rng_from_seed(0)), None);
        }
    }

    #[test]
    fn greedy_free_goal_is_deterministic() {
        let mut p = ScenarioParams::new(5, vec![2]);
        p.p_chain = 1.0;
        let spec = generate_scene(&p.with_seed(3)).unwrap();
        let (g, m, f) = graph_of(&spec, &SceneState::initial(&spec));
        let a = select_grasp(GraspPolicyKind::GreedyFreeGoal, &g, &m, Some(&f), &mut rng_from_seed(0));
        let b = select_grasp(GraspPolicyKind::GreedyFreeGoal, &g, &m, Some(&f), &mut rng_from_seed(9));
        assert_eq!(a, b);
        assert_eq!(a, m.free.first().copied());
    }

    #[test]
    fn place_rule_cases() {
        let spec = generate_scene(&ScenarioParams::new(2, vec![2]).with_seed(1)).unwrap();
        let mut state = SceneState::initial(&spec);
        let t = Thresholds::default();
        let i = ObjectId(0);
        let Assignment::Goal(own) = spec.true_goal(i) else { unreachable!() };
        let other = GoalId(1 - own.0);
        let confident = |j: GoalId| {
            let mut p = vec![0.0; 2];
            p[j.0] = 1.0;
            MatchingDistribution::from_probs(p).unwrap()
        };
        state.grasp(i).unwrap();
        // Object 1 still sits on object 0's goal; object 0's old spot is free.
        assert_eq!(select_place(&confident(own), &spec, &state, &t), PlaceTarget::Buffer);
        assert_eq!(select_place(&confident(other), &spec, &state, &t), PlaceTarget::Goal(other));
        assert_eq!(select_place(&MatchingDistribution::uniform(2), &spec, &state, &t), PlaceTarget::Outside);
        assert_eq!(
            select_place_pi0(&confident(other), &spec, &state, &t),
            select_place(&confident(other), &spec, &state, &t)
        );
    }
}
