use std::collections::BTreeSet;

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use proptest::prelude::*;

use rearrange_core::depgraph::{build_dependency_graph, classify_membership, min_fvs_bruteforce, min_fvs_exact};
use rearrange_core::perception::{to_distribution, Confuser, NoiseModel, SimilarityVector, Thresholds};
use rearrange_core::policy::{select_place, SeePolicyKind};
use rearrange_core::scene::{generate_scene, ObjectId, PlaceTarget, ScenarioFile, ScenarioParams, SceneSpec};
use rearrange_core::simulator::{Episode, EpisodeConfig, Policies};
use rearrange_core::DependencyGraph;

fn digraph() -> impl Strategy<Value = DependencyGraph> {
    (1usize..=9).prop_flat_map(|n| {
        proptest::collection::vec((0..n, 0..n), 0..=n * 3).prop_map(move |pairs| {
            let arcs = pairs.into_iter().filter(|(a, b)| a != b).map(|(a, b)| (ObjectId(a), ObjectId(b)));
            DependencyGraph::from_arcs((0..n).map(ObjectId), arcs).unwrap()
        })
    })
}

fn scene_params() -> impl Strategy<Value = ScenarioParams> {
    (2usize..=7, 0usize..=2, 0.0..0.6f64, 0.0..1.0f64, any::<u64>()).prop_flat_map(|(n, nongoal, at_goal, chain, seed)| {
        proptest::collection::vec(2usize..=4, 0..=2).prop_map(move |raw| {
            let mut left = n;
            let cycles: Vec<usize> = raw
                .into_iter()
                .filter_map(|c| {
                    let c = c.min(left);
                    (c >= 2).then(|| {
                        left -= c;
                        c
                    })
                })
                .collect();
            let mut p = ScenarioParams::new(n, cycles);
            p.num_nongoal_objects = nongoal;
            p.fraction_at_goal = at_goal;
            p.p_chain = chain;
            p.rng_seed = seed;
            p
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn cyclic_set_matches_tarjan(g in digraph()) {
        let mut pg = DiGraph::<(), ()>::new();
        let nodes: Vec<_> = g.vertices().iter().map(|_| pg.add_node(())).collect();
        for &(a, b) in g.arcs() {
            pg.add_edge(nodes[a.0], nodes[b.0], ());
        }
        let expected: BTreeSet<ObjectId> = tarjan_scc(&pg)
            .into_iter()
            .filter(|c| c.len() >= 2)
            .flatten()
            .map(|ix| ObjectId(ix.index()))
            .collect();
        let m = classify_membership(&g);
        prop_assert_eq!(&m.cyclic, &expected);
        prop_assert!(m.cyclic.is_subset(&m.cyclic_closure));
        prop_assert_eq!(m.free.len() + m.blocked.len(), g.len());
        prop_assert!(m.free.is_disjoint(&m.blocked));
    }

    #[test]
    fn exact_fvs_is_minimum_and_breaks_every_cycle(g in digraph()) {
        let exact = min_fvs_exact(&g).unwrap();
        let brute = min_fvs_bruteforce(&g).unwrap();
        prop_assert_eq!(exact.size, brute.size);
        prop_assert!(g.without(&exact.member_set()).is_acyclic());
    }

    #[test]
    fn edge_list_round_trip(g in digraph()) {
        prop_assert_eq!(DependencyGraph::from_edge_list(&g.to_edge_list()).unwrap(), g);
    }

    #[test]
    fn scenario_file_round_trip(p in scene_params()) {
        let spec = generate_scene(&p).unwrap();
        let json = serde_json::to_string(&ScenarioFile::from(spec.clone())).unwrap();
        let back = SceneSpec::try_from(serde_json::from_str::<ScenarioFile>(&json).unwrap()).unwrap();
        prop_assert_eq!(back, spec);
    }

    #[test]
    fn true_graph_has_no_settled_blockers(p in scene_params()) {
        let spec = generate_scene(&p).unwrap();
        let state = rearrange_core::SceneState::initial(&spec);
        let g = build_dependency_graph(&spec, &state, spec.true_assignment()).unwrap();
        prop_assert!(g.settled_blockers().is_empty());
    }

    #[test]
    fn noisy_episodes_keep_state_consistent(p in scene_params(), p_bad in 0.0..0.8f64, seed in any::<u64>(), grasp_fail in 0.0..0.3f64) {
        let spec = generate_scene(&p).unwrap();
        let noise = NoiseModel { p_bad_view: p_bad, confuser: Confuser::Fraction(0.5), ..NoiseModel::default() };
        let config = EpisodeConfig { rng_seed: seed, p_grasp_fail: grasp_fail, p_rotate_fail: 0.1, ..EpisodeConfig::default() };
        let thresholds = config.thresholds;
        let mut ep = Episode::new(&spec, Policies::pi1(SeePolicyKind::GreedySee), &noise, &config).unwrap();
        loop {
            // A place decision taken now may never land on an occupied goal.
            for j in spec.goals() {
                let mut v = vec![0.0; spec.num_goals()];
                v[j.0] = 1.0;
                let d = to_distribution(&SimilarityVector(v), 0.1);
                if let PlaceTarget::Goal(k) = select_place(&d, &spec, ep.state(), &thresholds) {
                    prop_assert!(ep.state().is_goal_free(&spec, k));
                }
            }
            if !ep.step().unwrap() {
                break;
            }
            ep.state().check_invariants().unwrap();
            prop_assert!(ep.state().in_hand().is_none());
        }
        let t = ep.finish();
        prop_assert!(t.steps.len() <= config.step_budget);
        prop_assert!(t.steps.iter().all(|s| s.see.len() <= config.max_see_steps));
        prop_assert_eq!(t.completed, spec.check_completion(&t.final_state));
    }

    #[test]
    fn thresholds_order_classification(omega_g in 0.01..0.3f64, extra in 0.0..0.3f64, v in proptest::collection::vec(-2.0..2.0f64, 2..8)) {
        let n = v.len();
        let t = Thresholds { omega_g, omega_m: (omega_g + extra).min(0.99 - 1.0 / n as f64) };
        prop_assume!(t.validate(n).is_ok());
        let d = to_distribution(&SimilarityVector(v), 0.1);
        // Confident enough to stop looking implies confident enough to call it a goal.
        if rearrange_core::perception::should_terminate(&d, &t) {
            prop_assert!(rearrange_core::perception::classify_goal(&d, &t).goal().is_some());
        }
    }
}
