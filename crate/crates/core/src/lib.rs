//! Tabletop rearrangement planning under noisy object matching.
//!
//! Scenes are strips of cells holding objects and goal footprints. The
//! planner builds a dependency graph between displaced objects, frees
//! circular dependencies through a minimum feedback vertex set, and decides
//! placements from scene-level or in-hand matching distributions.

pub mod depgraph;
pub mod error;
pub mod harness;
pub mod perception;
pub mod policy;
pub mod scene;
pub mod seed;
pub mod simulator;

pub use depgraph::{
    build_dependency_graph, classify_membership, min_fvs_bruteforce, min_fvs_exact, optimal_step_lower_bound,
    DependencyGraph, FvsResult, MembershipSets,
};
pub use error::{Error, Result};
pub use perception::{FusionMode, MatchingDistribution, NoiseModel, Thresholds};
pub use policy::{GraspPolicyKind, PlaceVariant, SeePolicyKind};
pub use scene::{Assignment, GoalId, ObjectId, PlaceTarget, ScenarioParams, SceneSpec, SceneState};
pub use simulator::{run_episode, EpisodeConfig, EpisodeTrace, Policies};
