use sdagrin::dataio::{inject_missing, synth_regime_var, window_starts, windows, Split, StaticGraph, SynthConfig};
use sdagrin::eval::{covered_steps, volatility_profile, MeanBaseline};
use sdagrin::exec::Execution;
use sdagrin::imputer::{checkpoint, ModelConfig};
use sdagrin::trainer::{fit, TrainConfig};

fn tiny() -> (sdagrin::dataio::TimeSeriesDataset, StaticGraph) {
    let (ds, g) = SynthConfig {
        nodes: 6,
        steps: 480,
        switch_period: 32,
        seed: 3,
        ..SynthConfig::default()
    }
    .generate()
    .unwrap();
    (inject_missing(&ds, 0.25, 0).unwrap(), g)
}

fn small_model() -> ModelConfig {
    ModelConfig {
        nodes: 6,
        window: 16,
        heads: 1,
        head_dim: 4,
        d_state: 8,
        d_spatial: 8,
        diffusion_order: 2,
        fusion_hidden: 8,
    }
}

#[test]
fn trained_model_beats_the_mean_imputer_on_validation() {
    let (ds, g) = tiny();
    let train = TrainConfig {
        learning_rate: 0.01,
        batch_size: 1,
        max_epochs: 10,
        patience: 10,
        ..TrainConfig::default()
    };
    let out = fit(&ds, &g, &small_model(), &train, Execution::default()).unwrap();
    let mean = MeanBaseline::fit(&ds)
        .unwrap()
        .evaluate(&ds, covered_steps(&ds, Split::Val, 16))
        .unwrap();
    assert!(out.diverged.is_none());
    assert!(out.best_val_mae < mean.mae, "{} vs {}", out.best_val_mae, mean.mae);
    let first = out.log.records[0].train_loss;
    let last = out.log.records.last().unwrap().train_loss;
    assert!(last < first);
}

#[test]
fn checkpoint_save_load_save_is_stable() {
    let (ds, g) = tiny();
    let train = TrainConfig {
        max_epochs: 2,
        patience: 2,
        ..TrainConfig::default()
    };
    let out = fit(&ds, &g, &small_model(), &train, Execution::Sequential).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.ckpt");
    let b = dir.path().join("b.ckpt");
    checkpoint::save(&a, &out.model).unwrap();
    let loaded = checkpoint::load(&a).unwrap();
    checkpoint::save(&b, &loaded).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let w = &windows(&ds, 16, 16, Split::Test).unwrap()[0];
    let x = out.model.impute(w, &g).unwrap().imputed;
    let y = loaded.impute(w, &g).unwrap().imputed;
    assert_eq!(x, y);
}

#[test]
fn switching_dispersion_raises_profile_spread() {
    // A complete graph pulls every variable toward a common mean; a pairing
    // keeps pairs apart. Alternating them modulates the pairwise distance.
    let n = 8;
    let complete = StaticGraph::from_pattern(n, |_, _| true).unwrap();
    let pairs = StaticGraph::from_pattern(n, |i, j| i / 2 == j / 2).unwrap();
    let switching = synth_regime_var(n, 4096, &[complete, pairs.clone()], 64, 1.0, 9).unwrap();
    let single = synth_regime_var(n, 4096, &[pairs.clone(), pairs], 64, 1.0, 9).unwrap();
    let a = volatility_profile(&switching, 64, Split::All).unwrap().temporal_std();
    let b = volatility_profile(&single, 64, Split::All).unwrap().temporal_std();
    assert!(a > b, "{a} vs {b}");
}

#[test]
fn windows_cover_the_split_prefix_exactly() {
    let (ds, _) = tiny();
    for split in [Split::Train, Split::Val, Split::Test] {
        let range = ds.splits().range(split);
        let ws = windows(&ds, 16, 16, split).unwrap();
        let covered: Vec<usize> = ws.iter().flat_map(|w| w.start..w.start + 16).collect();
        let expect: Vec<usize> = covered_steps(&ds, split, 16).collect();
        assert_eq!(covered, expect);
        assert_eq!(ws.len(), window_starts(range.len(), 16, 16).len());
    }
}
