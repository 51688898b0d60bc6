use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use anglekit::dataset::{
    apply_rotation, augment_grid_all, draw_rotation, read_labels, split_by_origin, synth_dataset,
    write_labels, ImageSource, LabelRecord, LabeledSample, Manifest, SplitSpec,
};
use anglekit::features::{flatten, read_features, write_features};
use anglekit::geometry::{
    doppler_velocity, velocity_error_factor, AngleDeg, DopplerParams, LineSegment,
};
use anglekit::imaging::save_png;
use anglekit::metrics::{build_report, emit_report, format_table_row};
use anglekit::model::{load_checkpoint, save_checkpoint, HeadModel};
use anglekit::par;
use anglekit::pipeline::Pipeline;
use anglekit::training::{
    evaluate, read_predictions, train, write_predictions, AugmentationMode, TrainSet, TrainingData,
};

use crate::args::AugmentMode;
use crate::{Cli, Command, UsageError};

pub fn dispatch(cli: Cli) -> Result<()> {
    par::set_threads(cli.threads)?;
    let seed = cli.seed;
    match cli.command {
        Command::Synth { out, synth } => cmd_synth(&out, &synth, seed),
        Command::Split {
            manifest,
            train_fraction,
            out,
        } => cmd_split(&manifest, train_fraction, seed, &out),
        Command::Ingest { labels, images, out } => cmd_ingest(&labels, &images, &out),
        Command::Augment {
            manifest,
            mode,
            copies,
            fill,
            out,
        } => cmd_augment(&manifest, mode, copies, fill, seed, &out),
        Command::Features {
            manifest,
            out,
            import,
            preprocess,
            extractor,
        } => cmd_features(&manifest, &out, import.as_deref(), &preprocess, &extractor),
        Command::Train {
            manifest,
            features,
            out,
            train,
            head,
            adam,
            preprocess,
            extractor,
        } => cmd_train(TrainJob {
            manifest,
            features,
            out,
            train,
            head,
            adam,
            preprocess,
            extractor,
            seed,
        }),
        Command::Eval {
            model,
            manifest,
            features,
            out,
        } => cmd_eval(&model, &manifest, &features, &out),
        Command::Report {
            predictions,
            out,
            bin_edges,
            mape_floor,
            run_config,
        } => cmd_report(&predictions, &out, &bin_edges, mape_floor, run_config.as_deref()),
        Command::Velocity {
            fd,
            f0,
            c,
            theta,
            delta,
        } => cmd_velocity(fd, f0, c, theta, delta),
        Command::Annotate {
            port,
            host,
            images,
            labels,
            ui,
        } => cmd_annotate(std::net::SocketAddr::new(host, port), images, labels, ui),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// Saves every in-memory image as `<dir>/<image_id>.png` and repoints the
/// sample at the file. File-backed samples are left alone.
fn save_images(samples: Vec<LabeledSample>, dir: &Path) -> Result<Vec<LabeledSample>> {
    create_dir(dir)?;
    let saved = par::try_map(&samples, |s| -> anglekit::Result<LabeledSample> {
        match &s.source {
            ImageSource::Memory(img) => {
                let path = dir.join(format!("{}.png", s.image_id));
                save_png(img, &path)?;
                Ok(LabeledSample {
                    source: ImageSource::Path(path),
                    ..s.clone()
                })
            }
            ImageSource::Path(_) => Ok(s.clone()),
        }
    })?;
    Ok(saved)
}

fn read_manifest(path: &Path) -> Result<Manifest> {
    Manifest::read(path).with_context(|| format!("reading manifest {}", path.display()))
}

fn cmd_synth(out: &Path, args: &crate::args::SynthArgs, seed: u64) -> Result<()> {
    let cfg = args.to_config()?;
    let samples = synth_dataset(
        cfg.count,
        &cfg.params,
        (cfg.theta_min, cfg.theta_max),
        cfg.lumen_jitter,
        seed,
    )?;
    let samples = save_images(samples, &out.join("images"))?;

    // a wall-parallel segment through the image center, as an annotator would draw it
    let (w, h) = cfg.params.size;
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let half = 0.4 * w.min(h) as f64;
    let labels = samples
        .iter()
        .map(|s| {
            let (sin, cos) = s.theta.radians().sin_cos();
            let seg = LineSegment::new(cx - half * sin, cy - half * cos, cx + half * sin, cy + half * cos);
            LabelRecord::from_segment(s.image_id.clone(), &seg)
        })
        .collect::<anglekit::Result<Vec<_>>>()?;

    let manifest = Manifest::new(samples)?;
    manifest.write(out.join("manifest.csv"))?;
    write_labels(BufWriter::new(File::create(out.join("labels.csv"))?), &labels)?;
    write_json(
        &out.join("synth.json"),
        &json!({ "seed": seed, "synth": serde_json::to_value(&cfg)? }),
    )?;
    info!("wrote {} images to {}", manifest.len(), out.display());
    println!("{}", manifest.len());
    Ok(())
}

fn cmd_split(manifest: &Path, train_fraction: f64, seed: u64, out: &Path) -> Result<()> {
    let m = read_manifest(manifest)?;
    let (train, test) = split_by_origin(&m, &SplitSpec::new(train_fraction, seed)?)?;
    create_dir(out)?;
    train.write(out.join("train.csv"))?;
    test.write(out.join("test.csv"))?;
    info!("{} train / {} test samples", train.len(), test.len());
    println!("{} {}", train.len(), test.len());
    Ok(())
}

fn cmd_ingest(labels: &Path, images: &Path, out: &Path) -> Result<()> {
    let file = File::open(labels).with_context(|| format!("opening {}", labels.display()))?;
    let records = read_labels(file)?;
    let manifest = Manifest::from_labels(&records, images)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    manifest.write(out)?;
    println!("{}", manifest.len());
    Ok(())
}

fn cmd_augment(
    manifest: &Path,
    mode: AugmentMode,
    copies: usize,
    fill: f64,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let m = read_manifest(manifest)?;
    let augmented = match mode {
        AugmentMode::Grid => augment_grid_all(&m, fill)?,
        AugmentMode::Random => {
            if copies == 0 {
                return Err(UsageError("--copies must be at least 1".into()).into());
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let jobs: Vec<(&LabeledSample, f64)> = m
                .samples
                .iter()
                .flat_map(|s| std::iter::repeat_n(s, copies))
                .map(|s| (s, draw_rotation(&mut rng)))
                .collect();
            let samples = par::try_map(&jobs, |(s, rho)| apply_rotation(s, *rho, fill))?;
            Manifest::new(samples)?
        }
    };
    let samples = save_images(augmented.samples, &out.join("images"))?;
    let augmented = Manifest::new(samples)?;
    augmented.write(out.join("manifest.csv"))?;
    info!("{} originals -> {} samples", m.len(), augmented.len());
    println!("{}", augmented.len());
    Ok(())
}

fn sidecar_path(features: &Path) -> PathBuf {
    let mut name = features.as_os_str().to_os_string();
    name.push(".json");
    PathBuf::from(name)
}

fn cmd_features(
    manifest: &Path,
    out: &Path,
    import: Option<&Path>,
    preprocess: &crate::args::PreprocessArgs,
    extractor: &crate::args::ExtractorArgs,
) -> Result<()> {
    let m = read_manifest(manifest)?;
    let (tensor, meta) = match import {
        Some(path) => {
            let t = read_features(path).with_context(|| format!("importing {}", path.display()))?;
            if t.batch() != m.len() {
                return Err(anglekit::Error::InvalidArgument(format!(
                    "imported tensor has {} samples but the manifest has {}",
                    t.batch(),
                    m.len()
                ))
                .into());
            }
            (t, json!({ "kind": "imported" }))
        }
        None => {
            let pre = preprocess.to_config()?;
            let spec = extractor.to_spec()?;
            let t = Pipeline::new(pre, spec.clone())?.featurize(&m.samples)?;
            (t, json!({ "kind": "builtin", "preprocess": pre, "extractor": spec }))
        }
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_features(&tensor, out)?;
    let mut meta = meta;
    meta["dims"] = json!(tensor.dims());
    meta["n_samples"] = json!(m.len());
    write_json(&sidecar_path(out), &meta)?;
    info!("features {:?} -> {}", tensor.dims(), out.display());
    Ok(())
}

struct TrainJob {
    manifest: PathBuf,
    features: Option<PathBuf>,
    out: PathBuf,
    train: crate::args::TrainArgs,
    head: crate::args::HeadArgs,
    adam: crate::args::AdamArgs,
    preprocess: crate::args::PreprocessArgs,
    extractor: crate::args::ExtractorArgs,
    seed: u64,
}

fn cmd_train(job: TrainJob) -> Result<()> {
    let tcfg = job.train.to_config(job.seed);
    let acfg = job.adam.to_config();
    tcfg.validate()?;
    acfg.validate()?;
    let m = read_manifest(&job.manifest)?;

    let (model, history, extra) = match tcfg.augmentation {
        AugmentationMode::GridOffline => {
            let path = job.features.as_deref().ok_or_else(|| {
                UsageError("--features is required with --augmentation grid-offline".into())
            })?;
            let x = flatten(&read_features(path)?);
            let hcfg = job.head.to_config(x.ncols(), job.seed);
            let mut model = HeadModel::<f32>::new(hcfg)?;
            let set = TrainSet::from_manifest(x, &m)?;
            let history = train(TrainingData::Offline(&set), &mut model, &tcfg, &acfg)?;
            (model, history, json!({}))
        }
        AugmentationMode::RandomOnTheFly => {
            if job.features.is_some() {
                log::warn!("--features is ignored with --augmentation random-on-the-fly");
            }
            let pre = job.preprocess.to_config()?;
            let spec = job.extractor.to_spec()?;
            let (fh, fw, fc) = spec.output_shape();
            let pipeline = Pipeline::new(pre, spec.clone())?;
            let mut model = HeadModel::<f32>::new(job.head.to_config(fh * fw * fc, job.seed))?;
            let data = TrainingData::OnTheFly {
                originals: &m.samples,
                pipeline: &pipeline,
            };
            let history = train(data, &mut model, &tcfg, &acfg)?;
            (model, history, json!({ "preprocess": pre, "extractor": spec }))
        }
    };

    create_dir(&job.out)?;
    save_checkpoint(&model, job.out.join("model.akpt"))?;
    history.save_csv(job.out.join("history.csv"))?;
    let mut config = json!({
        "seed": job.seed,
        "n_train_samples": m.len(),
        "head": job.head.to_config(model.input_width(), job.seed),
        "adam": acfg,
        "training": tcfg,
    });
    if let (Some(obj), serde_json::Value::Object(extra)) = (config.as_object_mut(), extra) {
        obj.extend(extra);
    }
    write_json(&job.out.join("config.json"), &config)?;
    if let Some(last) = history.epochs.last() {
        info!(
            "epoch {} train loss {:.6} val loss {:?}",
            last.epoch, last.train_loss, last.val_loss
        );
    }
    Ok(())
}

fn cmd_eval(model: &Path, manifest: &Path, features: &Path, out: &Path) -> Result<()> {
    let model = load_checkpoint(model).with_context(|| format!("loading {}", model.display()))?;
    let m = read_manifest(manifest)?;
    let x = flatten(&read_features(features)?);
    let preds = evaluate(&model, x.view(), &m)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_predictions(BufWriter::new(File::create(out)?), &preds)?;
    info!("{} predictions -> {}", preds.len(), out.display());
    Ok(())
}

fn cmd_report(
    predictions: &Path,
    out: &Path,
    edges: &[f64],
    mape_floor: f64,
    run_config: Option<&Path>,
) -> Result<()> {
    let preds = read_predictions(
        File::open(predictions).with_context(|| format!("opening {}", predictions.display()))?,
    )?;
    let config = match run_config {
        Some(p) => serde_json::from_slice(&std::fs::read(p)?)
            .with_context(|| format!("parsing {}", p.display()))?,
        None => serde_json::Value::Null,
    };
    let report = build_report(&preds, edges, mape_floor, config)?;
    emit_report(&report, &preds, out)?;
    println!("{}", format_table_row("builtin", &report.metrics));
    Ok(())
}

fn cmd_velocity(fd: f64, f0: f64, c: f64, theta: f64, delta: Option<f64>) -> Result<()> {
    let params = DopplerParams::new(fd, f0, c)?;
    let theta = AngleDeg::new(theta)?;
    println!("{}", doppler_velocity(&params, theta)?);
    if let Some(d) = delta {
        println!("{}", velocity_error_factor(theta, d)?);
    }
    Ok(())
}

fn cmd_annotate(
    addr: std::net::SocketAddr,
    images: PathBuf,
    labels: PathBuf,
    ui_dir: Option<PathBuf>,
) -> Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(anglekit_annotate::serve(anglekit_annotate::ServiceConfig {
        addr,
        images,
        labels,
        ui_dir,
    }))?;
    Ok(())
}
