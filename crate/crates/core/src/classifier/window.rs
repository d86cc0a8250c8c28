//! Token window layouts for (shifted) windowed attention.

use cuisine_nn::{Float, Tensor, MASKED};

use crate::error::{CoreError, Result};

/// Cyclic roll by `-shift` followed by chunking into windows of `window`
/// tokens. Rolled position `r` holds original token `(r + shift) % T`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WindowLayout {
    pub tokens: usize,
    pub window: usize,
    pub shift: usize,
}

impl WindowLayout {
    pub fn new(tokens: usize, window: usize, shift: usize) -> Result<Self> {
        if window == 0 || tokens == 0 || !tokens.is_multiple_of(window) || shift >= window {
            return Err(CoreError::InvalidArgument(format!(
                "{tokens} tokens, window {window}, shift {shift}"
            )));
        }
        Ok(WindowLayout { tokens, window, shift })
    }

    /// Layout used by block `index` of a stage: even blocks unshifted, odd
    /// blocks shifted by half a window. A window covering every token is
    /// never shifted.
    pub fn for_block(tokens: usize, window: usize, index: usize) -> Result<Self> {
        let window = window.min(tokens);
        let shift = if index % 2 == 1 && window < tokens { window / 2 } else { 0 };
        Self::new(tokens, window, shift)
    }

    pub fn num_windows(&self) -> usize {
        self.tokens / self.window
    }

    /// Original token at rolled position `r`.
    pub fn source(&self, r: usize) -> usize {
        (r + self.shift) % self.tokens
    }

    /// Rolled position of original token `t`.
    pub fn position(&self, t: usize) -> usize {
        (t + self.tokens - self.shift) % self.tokens
    }

    /// Original token ids of each window.
    pub fn partition(&self) -> Vec<Vec<usize>> {
        (0..self.num_windows())
            .map(|w| (0..self.window).map(|i| self.source(w * self.window + i)).collect())
            .collect()
    }

    /// Undo [`WindowLayout::partition`] on per-window values.
    pub fn inverse<V: Clone>(&self, windows: &[Vec<V>]) -> Vec<V> {
        let flat: Vec<&V> = windows.iter().flatten().collect();
        (0..self.tokens).map(|t| flat[self.position(t)].clone()).collect()
    }

    /// Region id of a rolled position; tokens from different regions were not
    /// neighbours before the roll.
    fn region(&self, r: usize) -> usize {
        if self.shift == 0 || r < self.tokens - self.window {
            0
        } else if r < self.tokens - self.shift {
            1
        } else {
            2
        }
    }

    /// Additive mask `[num_windows, window, window]`: 0 within a region,
    /// `MASKED` across regions. All zeros when unshifted.
    pub fn attention_mask<T: Float>(&self) -> Tensor<T> {
        let (nw, w) = (self.num_windows(), self.window);
        let masked = T::from_f64_lossy(MASKED);
        Tensor::from_fn(&[nw, w, w], |idx| {
            let win = idx / (w * w);
            let (i, j) = ((idx / w) % w, idx % w);
            if self.region(win * w + i) == self.region(win * w + j) {
                T::zero()
            } else {
                masked
            }
        })
    }

    pub fn is_masked(&self) -> bool {
        self.shift > 0
    }
}
