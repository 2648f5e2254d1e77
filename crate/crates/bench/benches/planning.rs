use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use rearrange_bench::{cyclic_scene, random_digraph};
use rearrange_core::depgraph::{build_dependency_graph, classify_membership, min_fvs_bruteforce, min_fvs_exact};
use rearrange_core::harness::oracle::brute_force_min_steps;
use rearrange_core::perception::{Confuser, FusionMode, LatentViews, NoiseModel, ViewState};
use rearrange_core::policy::{expected_entropy_after, select_view, SeePolicyKind};
use rearrange_core::scene::{ObjectId, SceneState};
use rearrange_core::seed::rng_from_seed;
use rearrange_core::simulator::{run_episode, EpisodeConfig, Policies};

fn fvs(c: &mut Criterion) {
    let mut group = c.benchmark_group("fvs");
    for n in [8, 12, 16, 24] {
        let g = random_digraph(n, 0.25, n as u64);
        group.bench_with_input(BenchmarkId::new("exact", n), &g, |b, g| b.iter(|| min_fvs_exact(black_box(g)).unwrap()));
        if n <= 12 {
            group.bench_with_input(BenchmarkId::new("bruteforce", n), &g, |b, g| {
                b.iter(|| min_fvs_bruteforce(black_box(g)).unwrap())
            });
        }
    }
    group.finish();
}

fn graph(c: &mut Criterion) {
    let spec = cyclic_scene(10, 3);
    let state = SceneState::initial(&spec);
    c.bench_function("dependency_graph/16_objects", |b| {
        b.iter(|| {
            let g = build_dependency_graph(black_box(&spec), &state, spec.true_assignment()).unwrap();
            classify_membership(&g)
        })
    });
}

fn oracle(c: &mut Criterion) {
    // Six objects is the search cap.
    let spec = cyclic_scene(0, 8);
    let mut group = c.benchmark_group("bfs_min_steps");
    group.sample_size(10);
    group.bench_function("6_objects", |b| b.iter(|| brute_force_min_steps(black_box(&spec)).unwrap()));
    group.finish();
}

fn episodes(c: &mut Criterion) {
    let spec = cyclic_scene(3, 11);
    let ideal = NoiseModel::ideal();
    let noisy = NoiseModel { p_bad_view: 0.3, confuser: Confuser::Fraction(0.5), ..NoiseModel::default() };
    let mut group = c.benchmark_group("episode");
    group.bench_function("pi0_ideal", |b| {
        let mut seed = 0;
        b.iter(|| {
            seed += 1;
            run_episode(&spec, Policies::pi0(), &ideal, &EpisodeConfig { rng_seed: seed, ..EpisodeConfig::default() }).unwrap()
        })
    });
    for see in [SeePolicyKind::RandomSee, SeePolicyKind::GreedySee] {
        group.bench_function(format!("pi1_{see:?}_noisy"), |b| {
            let mut seed = 0;
            b.iter(|| {
                seed += 1;
                run_episode(&spec, Policies::pi1(see), &noisy, &EpisodeConfig { rng_seed: seed, ..EpisodeConfig::default() })
                    .unwrap()
            })
        });
    }
    group.finish();
}

fn greedy_view(c: &mut Criterion) {
    let spec = cyclic_scene(3, 2);
    let noise = NoiseModel { p_bad_view: 0.5, ..NoiseModel::default() };
    let mut rng = rng_from_seed(5);
    let latent = LatentViews::sample(&noise, &spec, &mut rng);
    let mut vs = ViewState::new(ObjectId(0), FusionMode::Mean);
    for v in [1, 2] {
        vs.fuse(v, rearrange_core::perception::sample_view(&noise, &latent, &spec, ObjectId(0), v, &mut rng).unwrap()).unwrap();
    }
    c.bench_function("see/expected_entropy_after", |b| b.iter(|| expected_entropy_after(black_box(&vs), 5, &noise)));
    c.bench_function("see/greedy_select", |b| {
        b.iter(|| select_view(SeePolicyKind::GreedySee, black_box(&vs), 2, &noise, &latent, &mut rng))
    });
}

criterion_group!(benches, fvs, graph, oracle, episodes, greedy_view);
criterion_main!(benches);
