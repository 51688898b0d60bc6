//! In-memory end-to-end run on synthetic vessels: synthesize, split, grid
//! augment, extract, train, evaluate. Prints the metrics.
//!
//! `cargo run --release -p anglekit-core --example desk_run [config.json]`

use std::time::Instant;

use anglekit::config::RunConfig;
use anglekit::dataset::{augment_grid_all, split, synth_dataset, Manifest, SplitSpec};
use anglekit::features::flatten;
use anglekit::metrics::{binned_metrics, format_table_row, metrics_for};
use anglekit::model::HeadModel;
use anglekit::pipeline::Pipeline;
use anglekit::training::{evaluate, train, TrainSet, TrainingData};

fn main() -> anglekit::Result<()> {
    let cfg = match std::env::args().nth(1) {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let t0 = Instant::now();
    let s = &cfg.synth;
    let originals = Manifest::new(synth_dataset(
        s.count,
        &s.params,
        (s.theta_min, s.theta_max),
        s.lumen_jitter,
        cfg.training.seed,
    )?)?;
    let (train_m, test_m) = split(&originals, &SplitSpec::new(cfg.train_fraction, cfg.split_seed)?)?;
    let train_m = augment_grid_all(&train_m, cfg.augment.fill)?;
    let test_m = augment_grid_all(&test_m, cfg.augment.fill)?;

    let pipeline = Pipeline::new(cfg.preprocess, cfg.extractor.clone())?;
    let xtr = flatten(&pipeline.featurize(&train_m.samples)?);
    let xte = flatten(&pipeline.featurize(&test_m.samples)?);
    eprintln!("features {:?} in {:.1?}", xtr.dim(), t0.elapsed());

    let mut model = HeadModel::<f32>::new(cfg.head.clone().with_input_width(xtr.ncols()))?;
    let set = TrainSet::from_manifest(xtr, &train_m)?;
    let history = train(TrainingData::Offline(&set), &mut model, &cfg.training, &cfg.adam)?;
    for r in history.epochs.iter().step_by(20) {
        eprintln!("epoch {:>3} train {:.5} val {:?}", r.epoch, r.train_loss, r.val_loss);
    }

    let preds = evaluate(&model, xte.view(), &test_m)?;
    println!("{}", format_table_row("builtin", &metrics_for(&preds)?));
    for b in binned_metrics(&preds, &cfg.metrics.bin_edges)? {
        println!("{:<16} n={:<4} mae={:?}", b.label, b.count, b.mae);
    }
    eprintln!("total {:.1?}", t0.elapsed());
    Ok(())
}
