use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::SeedableRng;

use playtest_bench::{dungeon, model_frames, start_frame, upper_left_route};
use playtest_core::agent::{AgentConfig, RewardStack};
use playtest_core::apf::{train_apf, ApfConfig, TrajectoryMask, DEFAULT_FRAME_SIDE};
use playtest_core::density::{ContextFilter, DensityConfig, DensityModel};
use playtest_core::persona::builtin_persona;
use playtest_core::sim::render::DEFAULT_BLOCK;
use playtest_core::sim::{step, Action, GameState};
use playtest_core::trajectory::path_frames;
use playtest_core::train;

fn sim(c: &mut Criterion) {
    let level = dungeon();
    let state = GameState::initial(&level);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    c.bench_function("sim_step", |b| b.iter(|| step(&level, black_box(&state), Action::Up, &mut rng).unwrap()));
    c.bench_function("render_block3", |b| b.iter(|| start_frame(black_box(&level))));
}

fn density(c: &mut Criterion) {
    let level = dungeon();
    let frames = model_frames(&level, &upper_left_route(&level));
    let cfg = DensityConfig::new(DEFAULT_FRAME_SIDE, DEFAULT_FRAME_SIDE, ContextFilter::l_shaped());
    let mut trained = DensityModel::new(cfg.clone()).unwrap();
    for f in &frames {
        trained.update(f).unwrap();
    }
    c.bench_function("density_log_prob_42", |b| b.iter(|| trained.log_prob(black_box(&frames[3])).unwrap()));
    c.bench_function("density_update_42", |b| {
        b.iter_batched(
            || trained.clone(),
            |mut m| m.update(&frames[3]).unwrap(),
            BatchSize::LargeInput,
        )
    });
}

fn apf(c: &mut Criterion) {
    let level = dungeon();
    let route = upper_left_route(&level);
    let frames = path_frames(&level, &route, DEFAULT_BLOCK).unwrap();
    let (f0, f1) = (&frames.frames[0], &frames.frames[1]);
    for (name, cfg) in [("cts", ApfConfig::cts()), ("icm", ApfConfig::icm())] {
        let m = train_apf(&cfg, std::slice::from_ref(&frames), &[TrajectoryMask::none()]).unwrap();
        c.bench_function(&format!("apf_{name}_raw_feedback"), |b| {
            b.iter(|| m.raw_feedback(black_box(f0), Action::Up, black_box(f1)).unwrap())
        });
    }
    let mut group = c.benchmark_group("apf_train");
    group.sample_size(10);
    group.bench_function("cts", |b| {
        b.iter(|| train_apf(&ApfConfig::cts(), std::slice::from_ref(&frames), &[TrajectoryMask::none()]).unwrap())
    });
    group.finish();
}

fn tabular(c: &mut Criterion) {
    let level = dungeon();
    let exit = builtin_persona("Exit").unwrap();
    let cfg = AgentConfig::tabular(20_000);
    let mut group = c.benchmark_group("tabular");
    group.sample_size(10);
    group.bench_function("train_20k_steps", |b| {
        b.iter(|| train(&cfg, &level, "dungeon", &exit, &RewardStack::persona_only(), 0).unwrap())
    });
    group.finish();
}

criterion_group!(benches, sim, density, apf, tabular);
criterion_main!(benches);
