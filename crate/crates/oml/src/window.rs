//! Sliding window over the most recent tasks.
//!
//! At round `t` the buffer holds the oracles of tasks `t-m+1 ... t`
//! intersected with `[1, t]`; earlier rounds have dropped out and rounds
//! with nonpositive index contribute a loss that is identically zero. The
//! window average divides by `m` regardless of how many entries are present,
//! which is exactly the zero-padding convention the regret measure is
//! defined with.
//!
//! Values and true gradients re-evaluate every buffered loss at the *current*
//! point; stochastic gradients query every buffered oracle once with fresh,
//! mutually independent noise.

use std::collections::VecDeque;

use ndarray::Array1;

use crate::error::{ensure, Error, Result};
use crate::oracle::GradientOracle;

/// The last `m` tasks of the stream, newest last.
#[derive(Debug, Clone)]
pub struct WindowBuffer {
    window: usize,
    round: usize,
    entries: VecDeque<GradientOracle>,
}

impl WindowBuffer {
    pub fn new(window: usize) -> Result<Self> {
        ensure!(window >= 1, "window size must be >= 1, got {window}");
        Ok(WindowBuffer {
            window,
            round: 0,
            entries: VecDeque::with_capacity(window),
        })
    }

    /// Admits the next round's task (wrapped in its oracle), evicting the
    /// oldest entry once the buffer is full.
    pub fn push(&mut self, oracle: GradientOracle) {
        self.round += 1;
        self.entries.push_back(oracle);
        if self.entries.len() > self.window {
            self.entries.pop_front();
        }
    }

    /// Window size `m` (the fixed divisor).
    pub fn window(&self) -> usize {
        self.window
    }

    /// Rounds seen so far.
    pub fn round(&self) -> usize {
        self.round
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &GradientOracle> {
        self.entries.iter()
    }

    /// Largest noise scale among the buffered oracles.
    pub fn max_sigma(&self) -> f64 {
        self.entries
            .iter()
            .map(|o| o.sigma())
            .fold(0.0, f64::max)
    }

    fn check_nonempty(&self) -> Result<()> {
        if self.entries.is_empty() {
            Err(Error::EmptyWindow)
        } else {
            Ok(())
        }
    }

    /// Window-averaged loss at `w`: present entries re-evaluated at `w`,
    /// absent (zero-padded) rounds contribute zero, divisor always `m`.
    pub fn value(&self, w: &Array1<f64>) -> Result<f64> {
        self.check_nonempty()?;
        let mut sum = 0.0;
        for entry in &self.entries {
            sum += entry.true_value(w)?;
        }
        Ok(sum / self.window as f64)
    }

    /// Exact gradient of the window-averaged loss at `w`.
    pub fn true_grad(&self, w: &Array1<f64>) -> Result<Array1<f64>> {
        self.check_nonempty()?;
        let mut sum = Array1::zeros(w.len());
        for entry in &self.entries {
            sum += &entry.true_gradient(w)?;
        }
        Ok(sum / self.window as f64)
    }

    /// Stochastic window gradient: one fresh draw per buffered oracle,
    /// averaged with divisor `m`.
    pub fn stoch_grad(&mut self, w: &Array1<f64>) -> Result<Array1<f64>> {
        self.check_nonempty()?;
        let mut sum = Array1::zeros(w.len());
        for entry in &mut self.entries {
            sum += &entry.sample(w)?;
        }
        Ok(sum / self.window as f64)
    }
}
