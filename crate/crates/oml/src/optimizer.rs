//! Scalar-accumulator adaptive gradient descent (AdaGrad-Norm).
//!
//! The step rule maintains a single running sum of squared gradient norms,
//!
//! ```text
//! b_{t+1}^2 = b_t^2 + ||G_t||^2
//! w_{t+1}   = w_t - (eta / b_{t+1}) G_t
//! ```
//!
//! Note the accumulator is updated *before* the step; the step uses the new
//! `b_{t+1}`. The accumulator is stored squared so the square root is taken
//! once per step.
//!
//! Because the effective step `eta / b_{t+1}` shrinks automatically as
//! gradient mass accumulates, the iterates stay bounded for any positive
//! `b_1` and `eta`, unlike plain gradient descent whose fixed step must be
//! matched to the (often unknown) smoothness of the loss.

use ndarray::Array1;

use crate::error::{ensure, Error, Result};
use crate::task::{all_finite, norm_sq};

/// Iterate plus accumulator state of the scalar-step optimizer.
#[derive(Debug, Clone)]
pub struct AdaGradNorm {
    iterate: Array1<f64>,
    accum_sq: f64,
    eta: f64,
    b1: f64,
}

impl AdaGradNorm {
    /// Starts at `w0` with accumulator `b1 > 0` and step scale `eta > 0`.
    pub fn new(w0: Array1<f64>, eta: f64, b1: f64) -> Result<Self> {
        ensure!(
            eta.is_finite() && eta > 0.0,
            "step scale eta must be finite and positive, got {eta}"
        );
        ensure!(
            b1.is_finite() && b1 > 0.0,
            "initial accumulator b1 must be finite and positive, got {b1}"
        );
        if !all_finite(&w0) {
            return Err(Error::NonFinite("initial iterate"));
        }
        Ok(AdaGradNorm {
            iterate: w0,
            accum_sq: b1 * b1,
            eta,
            b1,
        })
    }

    /// One update with gradient estimate `g`.
    pub fn step(&mut self, g: &Array1<f64>) -> Result<()> {
        if g.len() != self.iterate.len() {
            return Err(Error::DimensionMismatch {
                expected: self.iterate.len(),
                got: g.len(),
            });
        }
        if !all_finite(g) {
            return Err(Error::NonFinite("gradient estimate"));
        }
        self.accum_sq += norm_sq(g);
        let scale = self.eta / self.accum_sq.sqrt();
        self.iterate.scaled_add(-scale, g);
        Ok(())
    }

    pub fn iterate(&self) -> &Array1<f64> {
        &self.iterate
    }

    /// The accumulator `b_{t+1}` that the next displacement would divide by.
    pub fn accumulator(&self) -> f64 {
        self.accum_sq.sqrt()
    }

    pub fn accumulator_sq(&self) -> f64 {
        self.accum_sq
    }

    /// Current effective step size `eta / b_{t+1}`.
    pub fn effective_step(&self) -> f64 {
        self.eta / self.accum_sq.sqrt()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn b1(&self) -> f64 {
        self.b1
    }
}
