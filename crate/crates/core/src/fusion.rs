//! Twelve-channel model input: six watch channels at native rate plus six
//! glasses channels linearly upsampled from 25 to 128 timesteps.

use cuisine_nn::{Float, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::imu::{WindowPair, GLASSES_ROWS, WATCH_ROWS};

pub const CHANNELS: usize = 12;
pub const SEQ_LEN: usize = WATCH_ROWS;

/// Unstandardized `[12][128]` channel-major rows.
pub fn fuse_raw(w: &WindowPair) -> [[f64; SEQ_LEN]; CHANNELS] {
    let mut out = [[0.0; SEQ_LEN]; CHANNELS];
    for (j, row) in w.watch().iter().enumerate() {
        for c in 0..6 {
            out[c][j] = row[c];
        }
    }
    // Both grids span the same window: glasses row k sits at watch position
    // k * 128 / 25. Past the last glasses row the value is held.
    let g = w.glasses();
    let scale = GLASSES_ROWS as f64 / SEQ_LEN as f64;
    for j in 0..SEQ_LEN {
        let pos = j as f64 * scale;
        let lo = (pos.floor() as usize).min(GLASSES_ROWS - 1);
        let hi = (lo + 1).min(GLASSES_ROWS - 1);
        let frac = if hi == lo { 0.0 } else { pos - lo as f64 };
        for c in 0..6 {
            out[6 + c][j] = if frac == 0.0 {
                g[lo][c]
            } else {
                g[lo][c] + frac * (g[hi][c] - g[lo][c])
            };
        }
    }
    out
}

/// Per-channel mean and standard deviation over a training set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity() -> Self {
        Standardizer {
            mean: vec![0.0; CHANNELS],
            std: vec![1.0; CHANNELS],
        }
    }

    /// Population statistics over every timestep of every window. Channels
    /// with (near) zero spread keep a unit scale.
    pub fn fit(windows: &[WindowPair]) -> Result<Self> {
        if windows.is_empty() {
            return Err(CoreError::EmptyTrainingSet);
        }
        let n = (windows.len() * SEQ_LEN) as f64;
        let fused: Vec<_> = windows.iter().map(fuse_raw).collect();
        let mut mean = vec![0.0; CHANNELS];
        for f in &fused {
            for (c, m) in mean.iter_mut().enumerate() {
                *m += f[c].iter().sum::<f64>();
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; CHANNELS];
        for f in &fused {
            for (c, v) in var.iter_mut().enumerate() {
                *v += f[c].iter().map(|x| (x - mean[c]).powi(2)).sum::<f64>();
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s < 1e-8 {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        Ok(Standardizer { mean, std })
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != CHANNELS
            || self.std.len() != CHANNELS
            || self.std.iter().any(|s| !(*s > 0.0 && s.is_finite()))
            || self.mean.iter().any(|m| !m.is_finite())
        {
            return Err(CoreError::Config("standardizer must hold 12 finite means and positive stds".into()));
        }
        Ok(())
    }
}

/// Standardized `[12, 128]` model input.
pub fn fuse_window<T: Float>(w: &WindowPair, s: &Standardizer) -> Tensor<T> {
    let raw = fuse_raw(w);
    Tensor::from_fn(&[CHANNELS, SEQ_LEN], |i| {
        let (c, j) = (i / SEQ_LEN, i % SEQ_LEN);
        T::from_f64_lossy((raw[c][j] - s.mean[c]) / s.std[c])
    })
}

/// Stack windows into one `[B, 12, 128]` tensor.
pub fn fuse_batch<T: Float>(windows: &[&WindowPair], s: &Standardizer) -> Tensor<T> {
    let mut data = Vec::with_capacity(windows.len() * CHANNELS * SEQ_LEN);
    for w in windows {
        data.extend_from_slice(fuse_window::<T>(w, s).data());
    }
    Tensor::new(&[windows.len(), CHANNELS, SEQ_LEN], data).expect("batch shape")
}
