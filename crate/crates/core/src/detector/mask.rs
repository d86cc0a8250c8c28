//! Random contiguous time masks for the reconstruction pretext task.

use cuisine_nn::rng::derive_seed;
use cuisine_nn::{Float, SplitMix64, Tensor};

use crate::error::{CoreError, Result};

/// Number of masked timesteps for a ratio.
pub fn mask_count(ratio: f64, seq_len: usize) -> usize {
    (ratio * seq_len as f64).round() as usize
}

/// Choose disjoint contiguous runs of `segment_len` timesteps, each start
/// drawn uniformly among the starts that keep the run free, until exactly
/// `round(ratio * seq_len)` timesteps are masked. The last run is truncated
/// to hit the count; if fragmentation leaves no room for a full run, the run
/// shrinks to the longest free gap.
pub fn sample_mask(seq_len: usize, ratio: f64, segment_len: usize, seed: u64) -> Result<Vec<bool>> {
    let target = mask_count(ratio, seq_len);
    if !(ratio > 0.0 && ratio < 1.0) || target == 0 || segment_len == 0 || target >= seq_len {
        return Err(CoreError::InvalidArgument(format!(
            "mask ratio {ratio} with segment {segment_len} over {seq_len} steps"
        )));
    }
    let mut rng = SplitMix64::for_purpose(seed, "mask");
    let mut mask = vec![false; seq_len];
    let mut remaining = target;
    while remaining > 0 {
        let mut len = segment_len.min(remaining);
        let mut starts = free_starts(&mask, len);
        if starts.is_empty() {
            len = longest_free_run(&mask);
            starts = free_starts(&mask, len);
        }
        let s = starts[rng.below(starts.len())];
        mask[s..s + len].iter_mut().for_each(|m| *m = true);
        remaining -= len;
    }
    Ok(mask)
}

fn free_starts(mask: &[bool], len: usize) -> Vec<usize> {
    if len > mask.len() {
        return Vec::new();
    }
    (0..=mask.len() - len)
        .filter(|&s| mask[s..s + len].iter().all(|m| !m))
        .collect()
}

fn longest_free_run(mask: &[bool]) -> usize {
    let (mut best, mut run) = (0, 0);
    for &m in mask {
        run = if m { 0 } else { run + 1 };
        best = best.max(run);
    }
    best
}

/// Zero masked timesteps across all channels of `x: [C, L]` (zero is the
/// channel mean after standardization).
pub fn apply_mask<T: Float>(x: &Tensor<T>, mask: &[bool]) -> Tensor<T> {
    let len = mask.len();
    let mut out = x.clone();
    for row in out.data_mut().chunks_mut(len) {
        for (v, &m) in row.iter_mut().zip(mask) {
            if m {
                *v = T::zero();
            }
        }
    }
    out
}

/// Mask `x: [C, L]` with a seeded random mask; returns the masked input and
/// the per-timestep mask.
pub fn mask_window<T: Float>(
    x: &Tensor<T>,
    ratio: f64,
    segment_len: usize,
    seed: u64,
) -> Result<(Tensor<T>, Vec<bool>)> {
    if x.rank() != 2 {
        return Err(CoreError::InvalidArgument(format!("mask input shape {:?}", x.shape())));
    }
    let mask = sample_mask(x.shape()[1], ratio, segment_len, seed)?;
    Ok((apply_mask(x, &mask), mask))
}

/// Mask seed for scoring a window at inference; derived from the window start
/// so detection is a deterministic function of the window. `draw` selects one
/// of several seeds for averaged scoring.
pub fn inference_seed(base: u64, start_t: f64, draw: usize) -> u64 {
    derive_seed(base ^ start_t.to_bits(), &format!("inference-mask/{draw}"))
}

/// Broadcast a per-timestep mask over `channels` rows.
pub fn expand_mask(mask: &[bool], channels: usize) -> Vec<bool> {
    let mut out = Vec::with_capacity(mask.len() * channels);
    for _ in 0..channels {
        out.extend_from_slice(mask);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn runs(mask: &[bool]) -> usize {
        mask.iter()
            .enumerate()
            .filter(|&(i, &m)| m && (i == 0 || !mask[i - 1]))
            .count()
    }

    #[test]
    fn exact_counts() {
        for ratio in [0.05, 0.15, 0.3, 0.5, 0.9] {
            for seed in 0..200 {
                let m = sample_mask(128, ratio, 8, seed).unwrap();
                assert_eq!(m.iter().filter(|&&b| b).count(), mask_count(ratio, 128), "ratio {ratio} seed {seed}");
            }
        }
        assert_eq!(mask_count(0.15, 128), 19);
    }

    #[test]
    fn one_segment_is_one_run() {
        for seed in 0..50 {
            let m = sample_mask(128, 8.0 / 128.0, 8, seed).unwrap();
            assert_eq!(runs(&m), 1);
        }
    }

    #[test]
    fn seeded() {
        assert_eq!(sample_mask(128, 0.15, 8, 4).unwrap(), sample_mask(128, 0.15, 8, 4).unwrap());
        assert_ne!(sample_mask(128, 0.15, 8, 4).unwrap(), sample_mask(128, 0.15, 8, 5).unwrap());
    }

    #[test]
    fn masked_steps_are_zeroed() {
        let x = Tensor::<f64>::from_fn(&[3, 16], |i| i as f64 + 1.0);
        let (xm, mask) = mask_window(&x, 0.25, 2, 1).unwrap();
        for c in 0..3 {
            for t in 0..16 {
                let v = xm.data()[c * 16 + t];
                if mask[t] {
                    assert_eq!(v, 0.0);
                } else {
                    assert_eq!(v, x.data()[c * 16 + t]);
                }
            }
        }
    }

    #[test]
    fn rejects_empty_mask() {
        assert!(sample_mask(128, 0.001, 8, 0).is_err());
        assert!(sample_mask(128, 1.0, 8, 0).is_err());
    }
}
