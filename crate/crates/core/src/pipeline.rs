//! Two-stage composition, metrics, the single-stage ablation, latency and
//! report files.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::classifier::{argmax, FoodClassifier};
use crate::detector::{detection_accuracy, Detector, SearchCell};
use crate::error::{io_err, CoreError, Result};
use crate::imu::{IntakeState, WindowPair, NUM_FOODS};

/// Label index of the non-eating outcome; foods are `0..NUM_FOODS`.
pub const NON_EATING: usize = NUM_FOODS;
pub const NUM_LABELS: usize = NUM_FOODS + 1;

/// Ground-truth label of a window on the 12-label task.
pub fn true_label(w: &WindowPair) -> usize {
    match (w.state(), w.food()) {
        (IntakeState::Eating, Some(f)) => f,
        _ => NON_EATING,
    }
}

pub struct Pipeline {
    pub detector: Detector,
    pub classifier: FoodClassifier,
}

impl Pipeline {
    /// Both stages must read the same input layout and the detector must be
    /// calibrated.
    pub fn new(detector: Detector, classifier: FoodClassifier) -> Result<Self> {
        let (u, s) = (&detector.unet.config, &classifier.swin.config);
        if u.in_channels != s.in_channels || u.seq_len != s.seq_len {
            return Err(CoreError::Config(format!(
                "detector input {}x{} does not match classifier input {}x{}",
                u.in_channels, u.seq_len, s.in_channels, s.seq_len
            )));
        }
        if s.num_classes != NUM_FOODS {
            return Err(CoreError::Config(format!("classifier has {} classes, expected {NUM_FOODS}", s.num_classes)));
        }
        detector.require_calibration()?;
        Ok(Pipeline { detector, classifier })
    }

    pub fn class_names(&self) -> &[String] {
        &self.classifier.class_names
    }

    /// Non-eating when stage one rejects the window, otherwise the most
    /// probable food (lowest id on ties).
    pub fn run_two_stage(&self, w: &WindowPair) -> Result<usize> {
        Ok(self.run_many(std::slice::from_ref(w))?[0])
    }

    pub fn run_many(&self, windows: &[WindowPair]) -> Result<Vec<usize>> {
        let states = self.detector.detect_many(windows)?;
        let eating: Vec<WindowPair> = windows
            .iter()
            .zip(&states)
            .filter(|(_, s)| **s == IntakeState::Eating)
            .map(|(w, _)| w.clone())
            .collect();
        let mut probs = self.classifier.probabilities(&eating)?.into_iter();
        Ok(states
            .iter()
            .map(|s| match s {
                IntakeState::NonEating => NON_EATING,
                IntakeState::Eating => argmax(&probs.next().expect("one row per eating window")),
            })
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub name: String,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub support: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean: f64,
    pub std: f64,
    pub p95: f64,
    pub trials: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall_accuracy: f64,
    pub stage1_accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub latency_ms: Option<LatencyStats>,
    /// Rows are true labels, columns predictions; foods then non-eating.
    pub confusion: Vec<Vec<u64>>,
    pub labels: Vec<String>,
    pub windows: usize,
    /// The ablation accuracy counts non-eating windows in its denominator.
    pub ablation_includes_non_eating: bool,
}

pub fn label_names(class_names: &[String]) -> Vec<String> {
    let mut v = class_names.to_vec();
    v.push("Non-eating".into());
    v
}

/// Confusion matrix, accuracy and per-label precision/recall from label pairs.
pub fn build_report(truth: &[usize], pred: &[usize], stage1_accuracy: f64, class_names: &[String]) -> Result<EvalReport> {
    if truth.is_empty() {
        return Err(CoreError::EmptyTestSet);
    }
    let mut confusion = vec![vec![0u64; NUM_LABELS]; NUM_LABELS];
    for (&t, &p) in truth.iter().zip(pred) {
        confusion[t][p] += 1;
    }
    let labels = label_names(class_names);
    let per_class = (0..NUM_LABELS)
        .map(|c| {
            let row: u64 = confusion[c].iter().sum();
            let col: u64 = confusion.iter().map(|r| r[c]).sum();
            let tp = confusion[c][c] as f64;
            ClassMetrics {
                name: labels[c].clone(),
                precision: (col > 0).then(|| tp / col as f64),
                recall: (row > 0).then(|| tp / row as f64),
                support: row,
            }
        })
        .collect();
    let hits = truth.iter().zip(pred).filter(|(t, p)| t == p).count();
    Ok(EvalReport {
        overall_accuracy: hits as f64 / truth.len() as f64,
        stage1_accuracy,
        per_class,
        latency_ms: None,
        confusion,
        labels,
        windows: truth.len(),
        ablation_includes_non_eating: true,
    })
}

pub fn evaluate(pipeline: &Pipeline, test: &[WindowPair]) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(CoreError::EmptyTestSet);
    }
    let states = pipeline.detector.detect_many(test)?;
    let stage1 = detection_accuracy(&states, test);
    let pred = pipeline.run_many(test)?;
    let truth: Vec<usize> = test.iter().map(true_label).collect();
    build_report(&truth, &pred, stage1, pipeline.class_names())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub cst: f64,
    pub accuracy: f64,
    pub non_eating_predictions: usize,
}

/// Thresholds 0.1, 0.2, ..., 0.9.
pub fn default_thresholds() -> Vec<f64> {
    (1..=9).map(|k| k as f64 / 10.0).collect()
}

/// Single-stage labels: non-eating when the top probability is below `cst`.
pub fn single_stage_labels(probs: &[Vec<f64>], cst: f64) -> Vec<usize> {
    probs
        .iter()
        .map(|p| {
            let best = argmax(p);
            if p[best] < cst {
                NON_EATING
            } else {
                best
            }
        })
        .collect()
}

/// Classifier-only accuracy on the 12-label task at each confidence threshold.
pub fn ablate_single_stage(classifier: &FoodClassifier, test: &[WindowPair], thresholds: &[f64]) -> Result<Vec<AblationRow>> {
    if test.is_empty() {
        return Err(CoreError::EmptyTestSet);
    }
    let probs = classifier.probabilities(test)?;
    let truth: Vec<usize> = test.iter().map(true_label).collect();
    Ok(thresholds
        .iter()
        .map(|&cst| {
            let pred = single_stage_labels(&probs, cst);
            let hits = pred.iter().zip(&truth).filter(|(p, t)| p == t).count();
            AblationRow {
                cst,
                accuracy: hits as f64 / truth.len() as f64,
                non_eating_predictions: pred.iter().filter(|&&p| p == NON_EATING).count(),
            }
        })
        .collect())
}

/// Wall-clock time of full two-stage inference on one window, single
/// threaded, after `warmup` untimed runs.
pub fn measure_latency(pipeline: &Pipeline, w: &WindowPair, trials: usize, warmup: usize) -> Result<(LatencyStats, usize)> {
    if trials < 2 {
        return Err(CoreError::InvalidArgument("need at least 2 timed trials".into()));
    }
    let mut label = pipeline.run_two_stage(w)?;
    for _ in 0..warmup {
        label = pipeline.run_two_stage(w)?;
    }
    let mut times = Vec::with_capacity(trials);
    for _ in 0..trials {
        let t = Instant::now();
        let l = pipeline.run_two_stage(w)?;
        times.push(t.elapsed().as_secs_f64() * 1e3);
        if l != label {
            return Err(CoreError::Contract("inference label changed between runs".into()));
        }
    }
    Ok((latency_stats(&times), label))
}

/// Mean, sample standard deviation and nearest-rank 95th percentile.
pub fn latency_stats(times_ms: &[f64]) -> LatencyStats {
    let n = times_ms.len();
    let mean = times_ms.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        times_ms.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    let mut sorted = times_ms.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = crate::detector::threshold::nearest_rank(95.0, n);
    LatencyStats {
        mean,
        std: var.sqrt(),
        p95: sorted[rank - 1],
        trials: n,
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    cuisine_nn::checkpoint::write_atomic(path, bytes).map_err(io_err(path))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn confusion_csv(report: &EvalReport) -> String {
    let mut s = String::from("true\\pred");
    for l in &report.labels {
        s.push(',');
        s.push_str(&csv_field(l));
    }
    s.push('\n');
    for (l, row) in report.labels.iter().zip(&report.confusion) {
        s.push_str(&csv_field(l));
        for v in row {
            s.push_str(&format!(",{v}"));
        }
        s.push('\n');
    }
    s
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut s = String::from("cst,accuracy,non_eating_predictions\n");
    for r in rows {
        s.push_str(&format!("{},{},{}\n", r.cst, r.accuracy, r.non_eating_predictions));
    }
    s
}

pub fn metrics_json(report: &EvalReport) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(report)?;
    v.push(b'\n');
    Ok(v)
}

/// Write `metrics.json`, `confusion.csv`, and `ablation.csv` / `gridsearch.csv`
/// when given. Every file is replaced atomically.
pub fn export_report(
    report: &EvalReport,
    ablation: Option<&[AblationRow]>,
    grid: Option<&[SearchCell]>,
    out_dir: &Path,
) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    write(&out_dir.join("metrics.json"), &metrics_json(report)?)?;
    write(&out_dir.join("confusion.csv"), confusion_csv(report).as_bytes())?;
    if let Some(rows) = ablation {
        write(&out_dir.join("ablation.csv"), ablation_csv(rows).as_bytes())?;
    }
    if let Some(cells) = grid {
        crate::detector::write_grid_csv(&out_dir.join("gridsearch.csv"), cells)?;
    }
    Ok(())
}

/// Per-label precision/recall as CSV rows (empty fields when undefined).
pub fn per_class_csv(report: &EvalReport) -> String {
    let mut s = String::from("label,precision,recall,support\n");
    for c in &report.per_class {
        s.push_str(&format!("{},{},{},{}\n", csv_field(&c.name), opt(c.precision), opt(c.recall), c.support));
    }
    s
}
