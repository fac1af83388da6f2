use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use sdagrin::adapter::export_adjacency;
use sdagrin::dataio::csvio::{read_matrix_csv, read_values_csv, write_mask_csv, write_matrix_csv, write_table_csv, write_values_table};
use sdagrin::dataio::{build_static_adjacency, inject_missing, load_csv, windows, write_csv, Split, Splits, StaticGraph, TimeSeriesDataset};
use sdagrin::eval::{
    score_held_out, static_ablation, sweep, volatility_profile, CellSpec, MeanBaseline, MetricReport, SweepAxis,
    OUTPUT_FORMAT_VERSION,
};
use sdagrin::exec::Execution;
use sdagrin::imputer::{checkpoint, impute_split, Model};
use sdagrin::trainer::fit;

use crate::config::RunConfig;
use crate::failure::Failure;
use crate::{AblateArgs, AxisArg, DiagnoseArgs, EvaluateArgs, ExportArgs, ImputeArgs, ModelFlags, SynthArgs, TrainArgs};

type Outcome = Result<(), Failure>;

fn create_dir(dir: &Path) -> Outcome {
    fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))
}

fn header(cfg: &RunConfig) -> Vec<(String, String)> {
    let mut c = vec![
        ("format_version".to_string(), OUTPUT_FORMAT_VERSION.to_string()),
        ("seed".to_string(), cfg.train.seed.to_string()),
    ];
    c.extend(cfg.echo());
    c
}

/// Writes the fully resolved configuration next to a command's outputs.
fn write_resolved(cfg: &RunConfig, command: &str) -> Outcome {
    create_dir(&cfg.output.dir)?;
    let path = cfg.output.dir.join(format!("resolved_{command}.toml"));
    let body = format!(
        "# format_version={OUTPUT_FORMAT_VERSION}\n# command={command}\n{}",
        cfg.to_toml()
    );
    fs::write(&path, body).map_err(|e| Failure::io(&path, e))
}

fn apply_model(cfg: &mut RunConfig, m: &ModelFlags) {
    if let Some(v) = m.window {
        cfg.model.window = v;
    }
    if let Some(v) = m.heads {
        cfg.model.heads = v;
    }
    if let Some(v) = m.head_dim {
        cfg.model.head_dim = v;
    }
}

/// Loads the dataset with its configured splits and the static graph.
fn load(cfg: &mut RunConfig) -> Result<(TimeSeriesDataset, StaticGraph), Failure> {
    if cfg.data.values.is_none() {
        let (values, adjacency) = synth_paths(cfg);
        if !values.exists() {
            return Err(Failure::Usage(format!(
                "no dataset: set data.values or run `synth` first ({} not found)",
                values.display()
            )));
        }
        cfg.data.values = Some(values);
        if cfg.data.coords.is_none() {
            cfg.data.adjacency.get_or_insert(adjacency);
        }
    }
    let values = cfg.data.values.clone().expect("set above");
    let ds = load_csv(&values, cfg.data.coords.as_deref(), cfg.data.mask.as_deref())?;
    let splits = Splits::by_fraction(ds.n_steps(), cfg.data.train_fraction, cfg.data.val_fraction)?;
    let ds = ds.with_splits(splits)?;
    let graph = if let Some(p) = &cfg.data.adjacency {
        StaticGraph::new(read_matrix_csv(p, ds.ids())?)?
    } else if let Some(coords) = ds.coords() {
        build_static_adjacency(coords, cfg.data.threshold)?
    } else {
        return Err(Failure::Usage("no graph: set data.adjacency or data.coords".into()));
    };
    if cfg.model.nodes == 0 {
        cfg.model.nodes = ds.n_nodes();
    }
    Ok((ds, graph))
}

fn held_out(ds: &TimeSeriesDataset, cfg: &RunConfig) -> Result<TimeSeriesDataset, Failure> {
    Ok(inject_missing(ds, cfg.data.missing_rate, cfg.missing_seed())?)
}

fn load_model(cfg: &RunConfig, path: &Option<PathBuf>) -> Result<Model, Failure> {
    let p = path.clone().unwrap_or_else(|| cfg.output.dir.join("model.ckpt"));
    Ok(checkpoint::load(&p)?)
}

/// Where `synth` writes values and adjacency: the configured paths, else `<output>/data`.
fn synth_paths(cfg: &RunConfig) -> (PathBuf, PathBuf) {
    let values = cfg.data.values.clone().unwrap_or_else(|| cfg.output.dir.join("data/values.csv"));
    let dir = values.parent().map(Path::to_path_buf).unwrap_or_default();
    let adjacency = cfg.data.adjacency.clone().unwrap_or_else(|| dir.join("adjacency.csv"));
    (values, adjacency)
}

pub fn synth(mut cfg: RunConfig, a: SynthArgs) -> Outcome {
    let s = &mut cfg.synth;
    if let Some(v) = a.nodes {
        s.nodes = v;
    }
    if let Some(v) = a.steps {
        s.steps = v;
    }
    if let Some(v) = a.regimes {
        s.regimes = v.into();
    }
    if let Some(v) = a.switch_period {
        s.switch_period = v;
    }
    if let Some(v) = a.noise_scale {
        s.noise_scale = v;
    }
    if let Some(v) = a.data_seed {
        s.seed = v;
    }
    let (ds, graph) = cfg.synth.generate()?;
    let (values, adjacency) = synth_paths(&cfg);
    let dir = values.parent().map(Path::to_path_buf).unwrap_or_default();
    create_dir(&dir)?;
    write_csv(&values, &ds)?;
    let mut comments = vec![("format_version".to_string(), OUTPUT_FORMAT_VERSION.to_string())];
    comments.extend(cfg.echo().into_iter().filter(|(k, _)| k.starts_with("synth.")));
    write_matrix_csv(&adjacency, ds.ids(), graph.weights(), &comments)?;
    for (r, g) in cfg.synth.regime_graphs()?.iter().enumerate() {
        write_matrix_csv(&dir.join(format!("regime_{r}.csv")), ds.ids(), g.weights(), &comments)?;
    }
    cfg.data.values = Some(values.clone());
    cfg.data.adjacency = Some(adjacency);
    write_resolved(&cfg, "synth")?;
    println!("wrote {} ({} variables, {} steps)", values.display(), ds.n_nodes(), ds.n_steps());
    Ok(())
}

pub fn train(mut cfg: RunConfig, a: TrainArgs, exec: Execution) -> Outcome {
    apply_model(&mut cfg, &a.model);
    if let Some(v) = a.epochs {
        cfg.train.max_epochs = v;
        cfg.train.patience = cfg.train.patience.min(v);
    }
    if let Some(v) = a.patience {
        cfg.train.patience = v;
    }
    if let Some(v) = a.learning_rate {
        cfg.train.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        cfg.train.batch_size = v;
    }
    if let Some(v) = a.missing_rate {
        cfg.data.missing_rate = v;
    }
    let (raw, graph) = load(&mut cfg)?;
    let ds = held_out(&raw, &cfg)?;
    let out = fit(&ds, &graph, &cfg.model, &cfg.train, exec)?;
    let dir = cfg.output.dir.clone();
    create_dir(&dir)?;
    checkpoint::save(&dir.join("model.ckpt"), &out.model)?;
    out.log.write(&dir.join("train_log.csv"))?;
    if cfg.train.log_wall_time {
        let p = dir.join("timing.csv");
        fs::write(&p, out.log.timing_csv()).map_err(|e| Failure::io(&p, e))?;
    }
    write_resolved(&cfg, "train")?;
    println!(
        "best epoch {} of {}, validation MAE {}",
        out.best_epoch,
        out.log.records.len(),
        out.best_val_mae
    );
    match out.diverged {
        Some(msg) => Err(Failure::Diverged(msg)),
        None => Ok(()),
    }
}

pub fn impute(mut cfg: RunConfig, a: ImputeArgs, exec: Execution) -> Outcome {
    let (raw, graph) = load(&mut cfg)?;
    let ds = held_out(&raw, &cfg)?;
    let model = load_model(&cfg, &a.checkpoint)?;
    cfg.model = model.config().clone();
    if let Some(s) = a.split {
        cfg.eval.split = s.into();
    }
    let imp = impute_split(&model, &ds, &graph, cfg.eval.split, exec)?;
    let dir = cfg.output.dir.clone();
    create_dir(&dir)?;
    let ts = &ds.timestamps()[imp.steps.clone()];
    write_values_table(&dir.join("imputed.csv"), ds.ids(), ts, &imp.values, &vec![true; imp.values.len()])?;
    write_mask_csv(&dir.join("provenance.csv"), ds.ids(), ts, &imp.imputed)?;
    write_resolved(&cfg, "impute")?;
    println!(
        "imputed {} of {} cells over steps {}..{}",
        imp.imputed.iter().filter(|&&b| b).count(),
        imp.values.len(),
        imp.steps.start,
        imp.steps.end
    );
    Ok(())
}

/// Reads an `impute` output back as `(steps, time-major values)`.
fn read_imputed(path: &Path, ds: &TimeSeriesDataset) -> Result<(Range<usize>, Vec<f64>), Failure> {
    let table = read_values_csv(path)?;
    let bad = |m: String| Failure::Core(sdagrin::Error::Data(format!("{}: {m}", path.display())));
    if table.ids != ds.ids() {
        return Err(bad("variables differ from the dataset".into()));
    }
    let first = table.timestamps.first().ok_or_else(|| bad("no rows".into()))?;
    let start = ds
        .timestamps()
        .iter()
        .position(|t| t == first)
        .ok_or_else(|| bad(format!("timestamp `{first}` not in the dataset")))?;
    let steps = start..start + table.timestamps.len();
    if steps.end > ds.n_steps() || ds.timestamps()[steps.clone()] != table.timestamps[..] {
        return Err(bad("timestamps are not a contiguous run of the dataset".into()));
    }
    let values = table
        .cells
        .iter()
        .map(|c| c.ok_or_else(|| bad("empty cell".into())))
        .collect::<Result<_, _>>()?;
    Ok((steps, values))
}

fn metric_row(name: &str, r: &MetricReport) -> Vec<String> {
    vec![
        name.to_string(),
        r.mae.to_string(),
        r.mse.to_string(),
        r.mre_pct.to_string(),
        r.n_scored.to_string(),
    ]
}

pub fn evaluate(mut cfg: RunConfig, a: EvaluateArgs, exec: Execution) -> Outcome {
    let (raw, graph) = load(&mut cfg)?;
    let ds = held_out(&raw, &cfg)?;
    if let Some(s) = a.split {
        cfg.eval.split = s.into();
    }
    let n = ds.n_nodes();
    let (steps, values) = match &a.imputed {
        Some(p) => read_imputed(p, &ds)?,
        None => {
            let model = load_model(&cfg, &a.checkpoint)?;
            cfg.model = model.config().clone();
            let imp = impute_split(&model, &ds, &graph, cfg.eval.split, exec)?;
            (imp.steps, imp.values)
        }
    };
    let report = score_held_out(&ds, steps.clone(), |t, i| values[(t - steps.start) * n + i])?;
    let baseline = MeanBaseline::fit(&ds)?.evaluate(&ds, steps.clone())?;
    let dir = cfg.output.dir.clone();
    create_dir(&dir)?;
    let mut comments = header(&cfg);
    comments.push(("steps".into(), format!("{}..{}", steps.start, steps.end)));
    write_table_csv(
        &dir.join("metrics.csv"),
        &comments,
        &["method", "mae", "mse", "mre_pct", "n_scored"],
        &[metric_row("model", &report), metric_row("mean", &baseline)],
    )?;
    write_resolved(&cfg, "evaluate")?;
    println!(
        "MAE {} MSE {} MRE {}% over {} entries (mean imputer MAE {})",
        report.mae, report.mse, report.mre_pct, report.n_scored, baseline.mae
    );
    Ok(())
}

pub fn ablate(mut cfg: RunConfig, a: AblateArgs, exec: Execution) -> Outcome {
    apply_model(&mut cfg, &a.model);
    if let Some(v) = a.epochs {
        cfg.train.max_epochs = v;
        cfg.train.patience = cfg.train.patience.min(v);
    }
    if let Some(v) = a.missing_rate {
        cfg.data.missing_rate = v;
    }
    if !a.seeds.is_empty() {
        cfg.eval.seeds = a.seeds.clone();
    }
    let (ds, graph) = load(&mut cfg)?;
    let spec = CellSpec {
        model: cfg.model.clone(),
        train: cfg.train.clone(),
        missing_rate: cfg.data.missing_rate,
    };
    let dir = cfg.output.dir.clone();
    create_dir(&dir)?;
    let comments = header(&cfg);
    let axis = match a.axis {
        AxisArg::Static => {
            let r = static_ablation(&ds, &graph, &spec, &cfg.eval.seeds, exec)?;
            r.write_csv(&dir.join("ablation.csv"), &comments)?;
            write_resolved(&cfg, "ablate")?;
            let (d, s, b) = (r.dynamic_mae(), r.fixed_mae(), r.baseline_mae());
            println!(
                "dynamic MAE {} +- {}, static MAE {} +- {}, mean imputer MAE {} +- {}",
                d.mean, d.std, s.mean, s.std, b.mean, b.std
            );
            return Ok(());
        }
        AxisArg::Window => SweepAxis::Window,
        AxisArg::Missing => SweepAxis::Missing,
        AxisArg::Heads => SweepAxis::Heads,
    };
    let values = if a.values.is_empty() {
        axis.default_values()
    } else {
        a.values.clone()
    };
    let table = sweep(&ds, &graph, &spec, axis, &values, &cfg.eval.seeds, exec)?;
    table.write_csv(&dir.join(format!("sweep_{}.csv", axis.name())), &comments)?;
    write_resolved(&cfg, "ablate")?;
    for row in &table.rows {
        match (&row.infeasible, row.metric(|m| m.mae)) {
            (Some(why), _) => println!("{} = {}: infeasible ({why})", axis.name(), row.value),
            (None, Some(s)) => println!("{} = {}: MAE {} +- {}", axis.name(), row.value, s.mean, s.std),
            (None, None) => {}
        }
    }
    Ok(())
}

pub fn diagnose(mut cfg: RunConfig, a: DiagnoseArgs) -> Outcome {
    let (ds, _) = load(&mut cfg)?;
    let window = a.window.unwrap_or(cfg.model.window);
    let split = a.split.map_or(Split::All, Split::from);
    let p = volatility_profile(&ds, window, split)?;
    let dir = cfg.output.dir.clone();
    create_dir(&dir)?;
    let mut comments = header(&cfg);
    comments.push(("window".into(), window.to_string()));
    comments.push(("split".into(), split.name().into()));
    comments.push((
        "normalizer".into(),
        format!("{} (variance of observed training values pooled over variables)", p.normalizer),
    ));
    comments.push(("skipped_windows".into(), format!("{:?}", p.skipped)));
    let rows: Vec<Vec<String>> = p
        .windows
        .iter()
        .map(|w| {
            vec![
                w.window.to_string(),
                w.start.to_string(),
                w.mean.to_string(),
                w.std.to_string(),
                w.pairs.to_string(),
            ]
        })
        .collect();
    write_table_csv(
        &dir.join("volatility.csv"),
        &comments,
        &["window", "start", "mean", "std", "pairs"],
        &rows,
    )?;
    write_resolved(&cfg, "diagnose")?;
    for w in &p.skipped {
        eprintln!("window {w} skipped: no pair of variables observed at a common step");
    }
    println!("{} windows, std of the per-window mean {}", p.windows.len(), p.temporal_std());
    Ok(())
}

pub fn export_graphs(mut cfg: RunConfig, a: ExportArgs, exec: Execution) -> Outcome {
    let (raw, graph) = load(&mut cfg)?;
    let ds = held_out(&raw, &cfg)?;
    let model = load_model(&cfg, &a.checkpoint)?;
    cfg.model = model.config().clone();
    if let Some(s) = a.split {
        cfg.eval.split = s.into();
    }
    let batches = windows(&ds, cfg.model.window, cfg.model.window, cfg.eval.split)?;
    let picked: Vec<usize> = if a.windows.is_empty() {
        (0..batches.len()).collect()
    } else {
        a.windows.clone()
    };
    if let Some(&k) = picked.iter().find(|&&k| k >= batches.len()) {
        return Err(Failure::Usage(format!("window {k} out of range ({} windows)", batches.len())));
    }
    let dir = cfg.output.dir.join("graphs");
    create_dir(&dir)?;
    let comments = header(&cfg);
    export_adjacency(&dir.join("static.csv"), ds.ids(), graph.weights(), &comments)?;
    let adapted = exec.map(&picked, |&k| model.impute(&batches[k], &graph).map(|o| o.adjacency));
    for (&k, adj) in picked.iter().zip(adapted) {
        let start = batches[k].start;
        let mut c = comments.clone();
        c.push(("window".into(), k.to_string()));
        c.push(("start".into(), start.to_string()));
        c.push(("timestamp".into(), ds.timestamps()[start].clone()));
        export_adjacency(&dir.join(format!("window_{k:04}.csv")), ds.ids(), &adj?, &c)?;
    }
    write_resolved(&cfg, "export-graphs")?;
    println!("wrote static and {} adapted adjacencies to {}", picked.len(), dir.display());
    Ok(())
}
