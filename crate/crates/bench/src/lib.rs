//! Benchmarks live in `benches/`. Shared fixtures are here so tests can
//! check them.

use rand::Rng;
use rearrange_core::depgraph::DependencyGraph;
use rearrange_core::scene::{generate_scene, ObjectId, ScenarioParams, SceneSpec};
use rearrange_core::seed::rng_from_seed;

/// Random digraph on `n` vertices with arc probability `density`.
pub fn random_digraph(n: usize, density: f64, seed: u64) -> DependencyGraph {
    let mut rng = rng_from_seed(seed);
    let arcs: Vec<_> = (0..n)
        .flat_map(|a| (0..n).map(move |b| (a, b)))
        .filter(|&(a, b)| a != b)
        .filter(|_| rng.random_bool(density))
        .map(|(a, b)| (ObjectId(a), ObjectId(b)))
        .collect();
    DependencyGraph::from_arcs((0..n).map(ObjectId), arcs).expect("no self-arcs")
}

/// Structured scene with a two-cycle and a three-cycle plus `extra` chained objects.
pub fn cyclic_scene(extra: usize, seed: u64) -> SceneSpec {
    let mut p = ScenarioParams::new(5 + extra, vec![2, 3]);
    p.num_nongoal_objects = 1;
    p.p_chain = 0.5;
    p.rng_seed = seed;
    generate_scene(&p).expect("valid params")
}
