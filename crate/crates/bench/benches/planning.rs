use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use slumroad::env::Stage;
use slumroad::harness::synthetic_slum;
use slumroad::nn::{forward, ModelConfig, Params};
use slumroad::state::{Slum, SlumGraph};

fn slum() -> Arc<Slum> {
    synthetic_slum(8, 8, 0.2, 3).unwrap()
}

/// Half of the candidates, in id order.
fn half_plan(s: &Arc<Slum>) -> Vec<usize> {
    s.candidates.iter().copied().take(s.candidates.len() / 2).collect()
}

fn set_road(c: &mut Criterion) {
    let s = slum();
    let plan = half_plan(&s);
    let mut group = c.benchmark_group("set_road");
    group.bench_function("incremental", |b| {
        b.iter_batched(
            || {
                let mut st = SlumGraph::new(Arc::clone(&s));
                plan[..plan.len() - 1].iter().for_each(|&e| {
                    st.set_road(e).unwrap();
                });
                st
            },
            |mut st| st.set_road(*plan.last().unwrap()).unwrap(),
            BatchSize::SmallInput,
        )
    });
    group.bench_function("rebuild", |b| {
        b.iter(|| {
            let mut st = SlumGraph::new(Arc::clone(&s));
            for &e in &plan {
                st.set_road(e).unwrap();
            }
            black_box(st.average_face_distance())
        })
    });
    group.finish();
}

fn model(c: &mut Criterion) {
    let s = slum();
    let state = SlumGraph::new(Arc::clone(&s));
    let feats = state.features();
    let params = Params::init(&ModelConfig::default(), 0).unwrap();
    c.bench_function("features", |b| b.iter(|| black_box(state.features())));
    c.bench_function("forward", |b| b.iter(|| black_box(forward(&s.graph, &feats, Stage::StageI, &params).unwrap())));
    let out = forward(&s.graph, &feats, Stage::StageI, &params).unwrap();
    let dscores = vec![1.0; out.scores.len()];
    c.bench_function("backward", |b| {
        b.iter(|| {
            let mut grad = vec![0.0; params.len()];
            out.backward(&s.graph, &feats, &params, &dscores, 1.0, &mut grad);
            black_box(grad)
        })
    });
}

criterion_group!(benches, set_road, model);
criterion_main!(benches);
