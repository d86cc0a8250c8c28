//! Stage one: eating-state detection by masked reconstruction error.
//!
//! A U-Net is trained to fill in masked timesteps of eating windows only. At
//! inference a window is masked with a seed derived from its start time and
//! scored by the reconstruction error; errors above a percentile threshold
//! calibrated on held-out eating windows flag non-eating activity.

pub mod mask;
pub mod threshold;
pub mod unet;

use std::path::Path;

use cuisine_nn::{adam_step, Checkpoint, Graph, NormMode, SplitMix64, Tensor};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{CoreError, Result};
use crate::fusion::{fuse_window, Standardizer, CHANNELS};
use crate::imu::{IntakeState, WindowPair};
use crate::train::{epoch_batches, TrainOptions};

pub use mask::{mask_window, sample_mask};
pub use threshold::{calibrate, ThresholdCalibration};
pub use unet::{UNet, UNetConfig};

/// Positions entering the reconstruction error.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMode {
    /// Masked timesteps only.
    #[default]
    Masked,
    /// Every timestep.
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoringConfig {
    pub mode: ScoreMode,
    /// Number of inference masks averaged per window (1 or more).
    pub draws: usize,
    pub seed: u64,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        ScoringConfig {
            mode: ScoreMode::Masked,
            draws: 1,
            seed: 0,
        }
    }
}

pub const CHECKPOINT_KIND: &str = "detector";
const SCORE_BATCH: usize = 64;

#[derive(Clone, Debug)]
pub struct Detector {
    pub unet: UNet<f32>,
    pub standardizer: Standardizer,
    pub scoring: ScoringConfig,
    pub training: TrainOptions,
    pub calibration: Option<ThresholdCalibration>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedDetector {
    pub loss_curve: Vec<f64>,
}

fn check_eating_only(windows: &[WindowPair]) -> Result<()> {
    if windows.is_empty() {
        return Err(CoreError::EmptyTrainingSet);
    }
    if let Some(i) = windows.iter().position(|w| w.state() != IntakeState::Eating) {
        return Err(CoreError::Contract(format!("training window {i} is not labeled eating")));
    }
    Ok(())
}

fn loss_mask(masks: &[Vec<bool>], mode: ScoreMode) -> Option<Vec<bool>> {
    match mode {
        ScoreMode::Full => None,
        ScoreMode::Masked => Some(masks.iter().flat_map(|m| mask::expand_mask(m, CHANNELS)).collect()),
    }
}

/// Train the reconstructor on eating windows. The standardizer is fitted on
/// the same windows.
pub fn train_reconstructor(
    windows: &[WindowPair],
    config: UNetConfig,
    scoring: ScoringConfig,
    opts: &TrainOptions,
) -> Result<(Detector, TrainedDetector)> {
    check_eating_only(windows)?;
    config.validate()?;
    opts.validate()?;
    let standardizer = Standardizer::fit(windows)?;
    let inputs: Vec<Tensor<f32>> = windows.iter().map(|w| fuse_window(w, &standardizer)).collect();
    let mut unet = UNet::<f32>::new(config.clone(), opts.seed)?;
    let mut rng = SplitMix64::for_purpose(opts.seed, "detector/train");
    let adam = opts.adam();
    let mut loss_curve = Vec::with_capacity(opts.epochs);
    let step = CHANNELS * config.seq_len;
    for _ in 0..opts.epochs {
        let (mut total, mut count) = (0.0, 0usize);
        for batch in epoch_batches(inputs.len(), opts.batch_size, &mut rng) {
            let mut masked = Vec::with_capacity(batch.len() * step);
            let mut target = Vec::with_capacity(batch.len() * step);
            let mut masks = Vec::with_capacity(batch.len());
            for &i in &batch {
                let (xm, m) = mask_window(&inputs[i], config.mask_ratio, config.mask_segment_len, rng.next_u64())?;
                masked.extend_from_slice(xm.data());
                target.extend_from_slice(inputs[i].data());
                masks.push(m);
            }
            let shape = [batch.len(), CHANNELS, config.seq_len];
            let mut g = Graph::new();
            let x = g.constant(Tensor::new(&shape, masked)?);
            let y = g.constant(Tensor::new(&shape, target)?);
            let pred = unet.forward(&mut g, x, NormMode::Train)?;
            let lm = loss_mask(&masks, scoring.mode);
            let loss = g.mse_loss(pred, y, lm.as_deref())?;
            total += g.value(loss).item() as f64 * batch.len() as f64;
            count += batch.len();
            let grads = g.backward(loss);
            unet.params.zero_grad();
            unet.params.accumulate(&grads);
            adam_step(unet.params.params_mut(), &adam);
        }
        loss_curve.push(total / count as f64);
    }
    Ok((
        Detector {
            unet,
            standardizer,
            scoring,
            training: opts.clone(),
            calibration: None,
        },
        TrainedDetector { loss_curve },
    ))
}

impl Detector {
    /// Reconstruction error of each window, averaged over the configured
    /// number of inference masks.
    pub fn reconstruction_errors(&self, windows: &[WindowPair]) -> Result<Vec<f64>> {
        let cfg = &self.unet.config;
        let draws = self.scoring.draws.max(1);
        let mut errors = vec![0.0; windows.len()];
        for (chunk_idx, chunk) in windows.chunks(SCORE_BATCH).enumerate() {
            let clean: Vec<Tensor<f32>> = chunk.iter().map(|w| fuse_window(w, &self.standardizer)).collect();
            for draw in 0..draws {
                let mut masked = Vec::with_capacity(chunk.len() * CHANNELS * cfg.seq_len);
                let mut masks = Vec::with_capacity(chunk.len());
                for (w, x) in chunk.iter().zip(&clean) {
                    let seed = mask::inference_seed(self.scoring.seed, w.start_t(), draw);
                    let (xm, m) = mask_window(x, cfg.mask_ratio, cfg.mask_segment_len, seed)?;
                    masked.extend_from_slice(xm.data());
                    masks.push(m);
                }
                let pred = self
                    .unet
                    .predict(Tensor::new(&[chunk.len(), CHANNELS, cfg.seq_len], masked)?)?;
                let per = CHANNELS * cfg.seq_len;
                for (k, (x, m)) in clean.iter().zip(&masks).enumerate() {
                    let p = &pred.data()[k * per..(k + 1) * per];
                    errors[chunk_idx * SCORE_BATCH + k] += window_error(x.data(), p, m, self.scoring.mode);
                }
            }
        }
        errors.iter_mut().for_each(|e| *e /= draws as f64);
        Ok(errors)
    }

    pub fn reconstruction_error(&self, w: &WindowPair) -> Result<f64> {
        Ok(self.reconstruction_errors(std::slice::from_ref(w))?[0])
    }

    /// Calibrate on eating windows and store the result.
    pub fn calibrate(&mut self, windows: &[WindowPair], percentile: f64) -> Result<ThresholdCalibration> {
        check_eating_only(windows).map_err(|e| match e {
            CoreError::EmptyTrainingSet => CoreError::TooFewSamples {
                needed: threshold::MIN_CALIBRATION,
                got: 0,
            },
            other => other,
        })?;
        let errors = self.reconstruction_errors(windows)?;
        let cal = calibrate(&errors, percentile)?;
        self.calibration = Some(cal.clone());
        Ok(cal)
    }

    /// Pick the percentile with the best validation accuracy among
    /// `candidates`, then calibrate on the validation eating windows.
    pub fn calibrate_auto(&mut self, validation: &[WindowPair], candidates: &[f64]) -> Result<(ThresholdCalibration, Vec<(f64, f64)>)> {
        let sweep = percentile_sweep(self, validation, candidates)?;
        let (p, _) = best_percentile(&sweep).ok_or_else(|| CoreError::InvalidArgument("no candidate percentiles".into()))?;
        let cal = self.calibrate(&crate::dataset::eating_only(validation), p)?;
        Ok((cal, sweep))
    }

    pub fn require_calibration(&self) -> Result<&ThresholdCalibration> {
        self.calibration
            .as_ref()
            .ok_or_else(|| CoreError::Config("detector checkpoint has no `calibration` (run calibrate first)".into()))
    }

    pub fn detect_many(&self, windows: &[WindowPair]) -> Result<Vec<IntakeState>> {
        let cal = self.require_calibration()?;
        Ok(self
            .reconstruction_errors(windows)?
            .into_iter()
            .map(|e| threshold::decide(e, cal))
            .collect())
    }

    pub fn detect(&self, w: &WindowPair) -> Result<IntakeState> {
        Ok(self.detect_many(std::slice::from_ref(w))?[0])
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ck = Checkpoint::new(json!({
            "kind": CHECKPOINT_KIND,
            "unet": self.unet.config,
            "standardizer": self.standardizer,
            "scoring": self.scoring,
            "training": self.training,
            "calibration": self.calibration,
        }));
        for (name, t) in self.unet.named_tensors() {
            ck.insert(name, t)?;
        }
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let c = &ck.config;
        if c.get("kind").and_then(|k| k.as_str()) != Some(CHECKPOINT_KIND) {
            return Err(CoreError::Config("checkpoint is not a detector".into()));
        }
        let field = |name: &str| {
            c.get(name)
                .cloned()
                .ok_or_else(|| CoreError::Config(format!("detector checkpoint lacks `{name}`")))
        };
        let config: UNetConfig = serde_json::from_value(field("unet")?)?;
        let standardizer: Standardizer = serde_json::from_value(field("standardizer")?)?;
        standardizer.validate()?;
        let mut unet = UNet::<f32>::new(config, 0)?;
        unet.load_named(&ck.tensors)?;
        Ok(Detector {
            unet,
            standardizer,
            scoring: serde_json::from_value(field("scoring")?)?,
            training: serde_json::from_value(field("training")?)?,
            calibration: serde_json::from_value(field("calibration")?)?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(self.to_checkpoint()?.save(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

fn window_error(x: &[f32], pred: &[f32], mask: &[bool], mode: ScoreMode) -> f64 {
    let len = mask.len();
    let (mut sum, mut n) = (0.0f64, 0usize);
    for (i, (&a, &b)) in x.iter().zip(pred).enumerate() {
        if mode == ScoreMode::Full || mask[i % len] {
            sum += (a as f64 - b as f64).powi(2);
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Fraction of windows whose predicted state matches the label.
pub fn detection_accuracy(pred: &[IntakeState], windows: &[WindowPair]) -> f64 {
    if windows.is_empty() {
        return 0.0;
    }
    let hits = pred.iter().zip(windows).filter(|(p, w)| **p == w.state()).count();
    hits as f64 / windows.len() as f64
}

/// Validation accuracy of a trained model at each percentile, calibrating on
/// the validation set's eating windows. Errors are computed once.
pub fn percentile_sweep(detector: &Detector, validation: &[WindowPair], percentiles: &[f64]) -> Result<Vec<(f64, f64)>> {
    let errors = detector.reconstruction_errors(validation)?;
    let eating: Vec<f64> = errors
        .iter()
        .zip(validation)
        .filter(|(_, w)| w.state() == IntakeState::Eating)
        .map(|(e, _)| *e)
        .collect();
    percentiles
        .iter()
        .map(|&p| {
            let cal = calibrate(&eating, p)?;
            let pred: Vec<IntakeState> = errors.iter().map(|&e| threshold::decide(e, &cal)).collect();
            Ok((p, detection_accuracy(&pred, validation)))
        })
        .collect()
}

/// Candidate percentiles for validation-driven threshold selection.
pub const AUTO_PERCENTILES: [f64; 5] = [80.0, 90.0, 95.0, 99.0, 100.0];

/// Highest-accuracy percentile; ties go to the lower percentile.
pub fn best_percentile(sweep: &[(f64, f64)]) -> Option<(f64, f64)> {
    sweep.iter().copied().reduce(|best, c| if c.1 > best.1 { c } else { best })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchCell {
    pub ratio: f64,
    pub percentile: f64,
    pub accuracy: f64,
}

/// Order by accuracy (descending), then lower ratio, then lower percentile.
pub fn rank_cells(cells: &[SearchCell]) -> Vec<SearchCell> {
    let mut ranked = cells.to_vec();
    ranked.sort_by(|a, b| {
        b.accuracy
            .total_cmp(&a.accuracy)
            .then(a.ratio.total_cmp(&b.ratio))
            .then(a.percentile.total_cmp(&b.percentile))
    });
    ranked
}

#[derive(Clone, Debug)]
pub struct SearchResult {
    /// Every cell, ratios outer, percentiles inner.
    pub grid: Vec<SearchCell>,
    /// Best `top_k` cells.
    pub ranked: Vec<SearchCell>,
    /// One trained model per ratio, in ratio order.
    pub models: Vec<Detector>,
}

/// Grid for [`hyperparam_search`]. `base` supplies every U-Net field except
/// the mask ratio.
#[derive(Clone, Debug)]
pub struct SearchSpec {
    pub ratios: Vec<f64>,
    pub percentiles: Vec<f64>,
    pub base: UNetConfig,
    pub scoring: ScoringConfig,
    pub training: TrainOptions,
    pub top_k: usize,
}

/// Train one reconstructor per mask ratio and evaluate every percentile on
/// the validation set (calibration needs no training).
pub fn hyperparam_search(train: &[WindowPair], validation: &[WindowPair], spec: &SearchSpec) -> Result<SearchResult> {
    let SearchSpec {
        ratios,
        percentiles,
        base,
        scoring,
        training: opts,
        top_k,
    } = spec;
    let states: std::collections::HashSet<_> = validation.iter().map(|w| w.state()).collect();
    if states.len() < 2 {
        return Err(CoreError::InvalidArgument("validation set must contain both intake states".into()));
    }
    let mut grid = Vec::with_capacity(ratios.len() * percentiles.len());
    let mut models = Vec::with_capacity(ratios.len());
    for &ratio in ratios {
        let cfg = UNetConfig {
            mask_ratio: ratio,
            ..base.clone()
        };
        let (detector, _) = train_reconstructor(train, cfg, scoring.clone(), opts)?;
        for (percentile, accuracy) in percentile_sweep(&detector, validation, percentiles)? {
            grid.push(SearchCell {
                ratio,
                percentile,
                accuracy,
            });
        }
        models.push(detector);
    }
    let mut ranked = rank_cells(&grid);
    ranked.truncate(*top_k);
    Ok(SearchResult { grid, ranked, models })
}

pub fn write_grid_csv(path: &Path, cells: &[SearchCell]) -> Result<()> {
    let mut text = String::from("ratio,percentile,accuracy\n");
    for c in cells {
        text.push_str(&format!("{},{},{}\n", c.ratio, c.percentile, c.accuracy));
    }
    cuisine_nn::checkpoint::write_atomic(path, text.as_bytes()).map_err(crate::error::io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranking_tie_breaks() {
        let c = |ratio, percentile, accuracy| SearchCell {
            ratio,
            percentile,
            accuracy,
        };
        let ranked = rank_cells(&[c(0.2, 80.0, 0.9), c(0.1, 90.0, 0.9), c(0.1, 70.0, 0.9), c(0.3, 70.0, 0.95)]);
        assert_eq!(ranked, vec![c(0.3, 70.0, 0.95), c(0.1, 70.0, 0.9), c(0.1, 90.0, 0.9), c(0.2, 80.0, 0.9)]);
    }

    #[test]
    fn window_error_modes() {
        let x = [1.0f32, 2.0, 3.0, 4.0];
        let p = [0.0f32; 4];
        // two channels of length two, first step masked
        assert_eq!(window_error(&x, &p, &[true, false], ScoreMode::Masked), (1.0 + 9.0) / 2.0);
        assert_eq!(window_error(&x, &p, &[true, false], ScoreMode::Full), 30.0 / 4.0);
    }
}
