use std::fs;
use std::path::{Path, PathBuf};

use cuisine_core::classifier::{argmax, train_classifier, FoodClassifier};
use cuisine_core::dataset::{eating_only, load_split, DatasetSplit, Manifest};
use cuisine_core::detector::{
    hyperparam_search, percentile_sweep, train_reconstructor, write_grid_csv, Detector, SearchSpec, AUTO_PERCENTILES,
};
use cuisine_core::imu::{
    read_labels, read_stream, segment, Device, Session, Utensil, WINDOW_HOP, WINDOW_LEN,
};
use cuisine_core::pipeline::{
    ablate_single_stage, ablation_csv, default_thresholds, evaluate, export_report, label_names, measure_latency,
    per_class_csv, true_label, Pipeline,
};
use cuisine_core::synth::generate_dataset;
use serde_json::json;

use crate::config::{Percentile, RunConfig};
use crate::error::{io_err, CliError, Result};

/// Paths written by a command, hashed into `run.json`.
pub type Artifacts = Vec<PathBuf>;

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    cuisine_nn::checkpoint::write_atomic(path, bytes).map_err(io_err(path))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write(path, &bytes)
}

/// Refuse to overwrite any of the command's inputs.
fn guard_output(out: &Path, inputs: &[&Path]) -> Result<()> {
    let Ok(out_abs) = fs::canonicalize(out) else {
        return Ok(());
    };
    for i in inputs {
        if fs::canonicalize(i).is_ok_and(|p| p == out_abs) {
            return Err(CliError::Config(format!("{} is both an input and an output", out.display())));
        }
    }
    Ok(())
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.paths.out_dir.clone();
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    Ok(dir)
}

fn split(cfg: &RunConfig) -> Result<DatasetSplit> {
    Ok(load_split(cfg.require_path("manifest")?, cfg.split())?)
}

fn loss_csv(curve: &[f64]) -> String {
    let mut s = String::from("epoch,loss\n");
    for (i, l) in curve.iter().enumerate() {
        s.push_str(&format!("{},{l}\n", i + 1));
    }
    s
}

pub fn synth(cfg: &RunConfig) -> Result<Artifacts> {
    let spec = cfg.dataset_spec()?;
    let dir = out_dir(cfg)?;
    let (manifest, summary) = generate_dataset(&spec, &dir)?;
    println!(
        "{} sessions, {} windows ({} eating); spectral-oracle accuracy {:.4}",
        summary.sessions, summary.windows, summary.eating_windows, summary.oracle_accuracy
    );
    println!("manifest: {}", manifest.display());
    let mut out = vec![manifest.clone(), dir.join(cuisine_core::synth::SUMMARY_FILE)];
    for e in Manifest::load(&manifest)?.0 {
        for f in [e.watch_csv, e.glasses_csv, e.labels_csv] {
            out.push(dir.join(f));
        }
    }
    Ok(out)
}

pub fn train_detector(cfg: &RunConfig) -> Result<Artifacts> {
    let data = split(cfg)?;
    let train = eating_only(&data.train);
    let opts = cfg.train_options()?;
    let (detector, report) = train_reconstructor(&train, cfg.unet(), cfg.scoring()?, &opts)?;
    let dir = out_dir(cfg)?;
    let ckpt = dir.join("detector.ckpt");
    guard_output(&ckpt, &[cfg.require_path("manifest")?])?;
    detector.save(&ckpt)?;
    let loss = dir.join("detector_loss.csv");
    write(&loss, loss_csv(&report.loss_curve).as_bytes())?;
    println!(
        "trained on {} eating windows for {} epochs; masked MSE {:.5} -> {:.5}",
        train.len(),
        opts.epochs,
        report.loss_curve.first().copied().unwrap_or(f64::NAN),
        report.loss_curve.last().copied().unwrap_or(f64::NAN)
    );
    println!("checkpoint: {}", ckpt.display());
    Ok(vec![ckpt, loss])
}

pub fn calibrate(cfg: &RunConfig) -> Result<Artifacts> {
    let input = cfg.require_path("detector")?;
    let mut detector = Detector::load(input)?;
    let data = split(cfg)?;
    let (cal, sweep) = match &cfg.detector.percentile {
        Percentile::Fixed(p) => {
            let sweep = percentile_sweep(&detector, &data.validation, &[*p])?;
            (detector.calibrate(&eating_only(&data.validation), *p)?, sweep)
        }
        Percentile::Named(_) => detector.calibrate_auto(&data.validation, &AUTO_PERCENTILES)?,
    };
    let dir = out_dir(cfg)?;
    let ckpt = dir.join("detector-calibrated.ckpt");
    guard_output(&ckpt, &[input])?;
    detector.save(&ckpt)?;
    let report = dir.join("calibration.json");
    let sweep_json: Vec<_> = sweep.iter().map(|(p, a)| json!({ "percentile": p, "accuracy": a })).collect();
    write_json(
        &report,
        &json!({
            "percentile": cal.percentile,
            "tau": cal.tau,
            "calibration_size": cal.calibration_size,
            "validation_sweep": sweep_json,
        }),
    )?;
    println!(
        "percentile {} -> tau {:.6} over {} validation eating windows",
        cal.percentile, cal.tau, cal.calibration_size
    );
    for (p, a) in &sweep {
        println!("  validation accuracy at p={p}: {a:.4}");
    }
    println!("checkpoint: {}", ckpt.display());
    Ok(vec![ckpt, report])
}

pub fn search(cfg: &RunConfig) -> Result<Artifacts> {
    let data = split(cfg)?;
    let spec = SearchSpec {
        ratios: cfg.search.ratios.clone(),
        percentiles: cfg.search.percentiles.clone(),
        base: cfg.unet(),
        scoring: cfg.scoring()?,
        training: cfg.train_options()?,
        top_k: cfg.search.top_k,
    };
    let result = hyperparam_search(&eating_only(&data.train), &data.validation, &spec)?;
    let dir = out_dir(cfg)?;
    let grid = dir.join("gridsearch.csv");
    write_grid_csv(&grid, &result.grid)?;
    let top = dir.join("gridsearch_top.csv");
    write_grid_csv(&top, &result.ranked)?;
    let model_dir = dir.join("search");
    fs::create_dir_all(&model_dir).map_err(io_err(&model_dir))?;
    let mut out = vec![grid, top];
    for (ratio, model) in spec.ratios.iter().zip(&result.models) {
        let p = model_dir.join(format!("detector-ratio-{ratio}.ckpt"));
        model.save(&p)?;
        out.push(p);
    }
    for c in result.ranked.iter().take(5) {
        println!("ratio {:<5} percentile {:<5} accuracy {:.4}", c.ratio, c.percentile, c.accuracy);
    }
    Ok(out)
}

pub fn train_classifier_cmd(cfg: &RunConfig) -> Result<Artifacts> {
    let data = split(cfg)?;
    let train = eating_only(&data.train);
    let opts = cfg.train_options()?;
    let (classifier, report) = train_classifier(&train, cfg.swin(), &opts)?;
    let dir = out_dir(cfg)?;
    let ckpt = dir.join("classifier.ckpt");
    classifier.save(&ckpt)?;
    let loss = dir.join("classifier_loss.csv");
    write(&loss, loss_csv(&report.loss_curve).as_bytes())?;
    println!(
        "trained on {} windows for {} epochs; cross-entropy {:.4} -> {:.4}; train accuracy {:.4}",
        train.len(),
        opts.epochs,
        report.loss_curve.first().copied().unwrap_or(f64::NAN),
        report.loss_curve.last().copied().unwrap_or(f64::NAN),
        report.train_accuracy
    );
    println!("checkpoint: {}", ckpt.display());
    Ok(vec![ckpt, loss])
}

fn pipeline(cfg: &RunConfig) -> Result<Pipeline> {
    let detector = Detector::load(cfg.require_path("detector")?)?;
    let classifier = FoodClassifier::load(cfg.require_path("classifier")?)?;
    Ok(Pipeline::new(detector, classifier)?)
}

pub fn eval(cfg: &RunConfig, with_latency: bool) -> Result<Artifacts> {
    let pipe = pipeline(cfg)?;
    let data = split(cfg)?;
    let mut report = evaluate(&pipe, &data.test)?;
    let ablation = ablate_single_stage(&pipe.classifier, &data.test, &default_thresholds())?;
    if with_latency {
        let (stats, _) = measure_latency(&pipe, &data.test[0], cfg.latency.trials, cfg.latency.warmup)?;
        report.latency_ms = Some(stats);
    }
    let dir = out_dir(cfg)?;
    export_report(&report, Some(&ablation), None, &dir)?;
    let per_class = dir.join("per_class.csv");
    write(&per_class, per_class_csv(&report).as_bytes())?;
    println!(
        "{} test windows: two-stage accuracy {:.4}, stage-1 accuracy {:.4}",
        report.windows, report.overall_accuracy, report.stage1_accuracy
    );
    let best = ablation.iter().map(|r| r.accuracy).fold(0.0, f64::max);
    println!("best single-stage accuracy {best:.4}");
    Ok(vec![
        dir.join("metrics.json"),
        dir.join("confusion.csv"),
        dir.join("ablation.csv"),
        per_class,
    ])
}

pub fn ablate(cfg: &RunConfig) -> Result<Artifacts> {
    let classifier = FoodClassifier::load(cfg.require_path("classifier")?)?;
    let data = split(cfg)?;
    let rows = ablate_single_stage(&classifier, &data.test, &default_thresholds())?;
    let dir = out_dir(cfg)?;
    let path = dir.join("ablation.csv");
    write(&path, ablation_csv(&rows).as_bytes())?;
    for r in &rows {
        println!("cst {:.1}: accuracy {:.4} ({} non-eating)", r.cst, r.accuracy, r.non_eating_predictions);
    }
    Ok(vec![path])
}

pub fn infer(cfg: &RunConfig) -> Result<Artifacts> {
    let pipe = pipeline(cfg)?;
    let watch = read_stream(cfg.require_path("watch")?, Device::Watch)?;
    let glasses = read_stream(cfg.require_path("glasses")?, Device::Glasses)?;
    let labels = match &cfg.paths.labels {
        Some(_) => Some(read_labels(cfg.require_path("labels")?)?),
        None => None,
    };
    // the utensil is metadata only and never reaches the models
    let session = Session::new("input", Utensil::Hand, watch, glasses, labels.clone().unwrap_or_default())?;
    let windows = segment(&session, WINDOW_LEN, WINDOW_HOP)?;
    let errors = pipe.detector.reconstruction_errors(&windows)?;
    let predicted = pipe.run_many(&windows)?;
    let probs = pipe.classifier.probabilities(&windows)?;
    let names = label_names(pipe.class_names());
    let mut csv = String::from("start_t,reconstruction_error,label,name,top_food,top_probability");
    csv.push_str(if labels.is_some() { ",true_label\n" } else { "\n" });
    for (i, w) in windows.iter().enumerate() {
        let top = argmax(&probs[i]);
        csv.push_str(&format!(
            "{},{},{},{},{},{}",
            w.start_t(),
            errors[i],
            predicted[i],
            names[predicted[i]],
            names[top],
            probs[i][top]
        ));
        if labels.is_some() {
            csv.push_str(&format!(",{}", true_label(w)));
        }
        csv.push('\n');
    }
    let dir = out_dir(cfg)?;
    let path = dir.join("predictions.csv");
    write(&path, csv.as_bytes())?;
    let eating = predicted.iter().filter(|&&l| l != cuisine_core::pipeline::NON_EATING).count();
    println!("{} windows, {} labeled as eating", windows.len(), eating);
    if labels.is_some() {
        let hits = windows.iter().zip(&predicted).filter(|(w, p)| true_label(w) == **p).count();
        println!("accuracy against labels {:.4}", hits as f64 / windows.len() as f64);
    }
    Ok(vec![path])
}

pub fn latency(cfg: &RunConfig) -> Result<Artifacts> {
    let pipe = pipeline(cfg)?;
    let data = split(cfg)?;
    let w = data.test.first().ok_or(cuisine_core::CoreError::EmptyTestSet)?;
    let (stats, label) = measure_latency(&pipe, w, cfg.latency.trials, cfg.latency.warmup)?;
    let dir = out_dir(cfg)?;
    let path = dir.join("latency.json");
    write_json(&path, &json!({ "latency_ms": stats, "label": label }))?;
    println!(
        "two-stage latency {:.3} ± {:.3} ms (p95 {:.3}) over {} trials",
        stats.mean, stats.std, stats.p95, stats.trials
    );
    Ok(vec![path])
}

pub fn grad_check(cfg: &RunConfig, seeds: u64) -> Result<Artifacts> {
    let base = cfg.seed.unwrap_or(0);
    let mut csv = String::from("op,shape,seed,max_rel_error,max_abs_error,checked\n");
    let mut worst: f64 = 0.0;
    for seed in base..base + seeds {
        for e in cuisine_nn::suite::run_suite(seed).map_err(cuisine_core::CoreError::from)? {
            let r = e.report;
            worst = worst.max(r.max_rel_error);
            println!(
                "{:<5} {:<24} {:<22} seed {seed}: rel {:.2e}",
                if r.max_rel_error < 1e-4 { "PASS" } else { "FAIL" },
                e.op,
                e.shape,
                r.max_rel_error
            );
            csv.push_str(&format!(
                "{},\"{}\",{},{},{},{}\n",
                e.op, e.shape, seed, r.max_rel_error, r.max_abs_error, r.checked
            ));
        }
    }
    let dir = out_dir(cfg)?;
    let path = dir.join("gradcheck.csv");
    write(&path, csv.as_bytes())?;
    println!("worst relative error {worst:.2e}");
    if worst >= 1e-4 {
        return Err(cuisine_core::CoreError::Contract(format!("gradient check failed: worst relative error {worst:e}")).into());
    }
    Ok(vec![path])
}
