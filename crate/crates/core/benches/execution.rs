//! Sequential vs rayon execution of the data-parallel hot paths: per-window
//! gradients of one batch, and imputation of a whole split.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sdagrin::dataio::{inject_missing, windows, Split, SynthConfig};
use sdagrin::exec::Execution;
use sdagrin::imputer::{impute_split, Model, ModelConfig};

fn setup() -> (sdagrin::dataio::TimeSeriesDataset, sdagrin::dataio::StaticGraph, Model) {
    let (ds, graph) = SynthConfig {
        steps: 1024,
        ..SynthConfig::default()
    }
    .generate()
    .unwrap();
    let ds = inject_missing(&ds, 0.25, 0).unwrap();
    let cfg = ModelConfig {
        nodes: 12,
        window: 32,
        heads: 1,
        head_dim: 8,
        d_state: 16,
        d_spatial: 16,
        diffusion_order: 2,
        fusion_hidden: 16,
    };
    (ds, graph, Model::new(cfg, 0).unwrap())
}

fn modes() -> [(&'static str, Execution); 2] {
    [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)]
}

fn batch_gradients(c: &mut Criterion) {
    let (ds, graph, model) = setup();
    let batch: Vec<_> = windows(&ds, 32, 32, Split::Train).unwrap().into_iter().take(8).collect();
    let mut group = c.benchmark_group("batch_gradients");
    for (name, exec) in modes() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                let grads = exec.map(&batch, |w| model.loss_and_gradients(w, &w.x, &w.mask, &graph).unwrap());
                black_box(grads)
            })
        });
    }
    group.finish();
}

fn split_imputation(c: &mut Criterion) {
    let (ds, graph, model) = setup();
    let mut group = c.benchmark_group("split_imputation");
    for (name, exec) in modes() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(impute_split(&model, &ds, &graph, Split::All, exec).unwrap()))
        });
    }
    group.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = batch_gradients, split_imputation
}
criterion_main!(benches);
