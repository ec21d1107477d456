//! Stochastic gradient oracles.
//!
//! An oracle wraps a task and a gradient target (train side, test side, or
//! the adapted loss) and answers queries with `true_gradient(w) + noise`.
//! The noise is isotropic Gaussian with per-coordinate variance `sigma^2/d`,
//! so the expected squared noise norm is exactly `sigma^2` and successive
//! queries are independent draws from the oracle's own seeded stream.
//!
//! The adapted-loss target always estimates the *exact* adapted gradient;
//! this keeps every oracle unbiased for the gradient of the loss it stands
//! for, which is what the estimator analysis relies on.

use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::adapter::{self, AdapterConfig};
use crate::error::{ensure, Result};
use crate::task::{Side, TaskSpec};

/// Which gradient field the oracle estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleTarget {
    /// Exact gradient of one side's expected loss.
    Loss(Side),
    /// Exact gradient of the adapted loss with the given inner step size.
    Adapted { alpha: f64 },
}

/// A seeded, unbiased, variance-bounded gradient source for one task.
///
/// Holds mutable RNG state; use one oracle per thread.
#[derive(Debug, Clone)]
pub struct GradientOracle {
    task: TaskSpec,
    target: OracleTarget,
    sigma: f64,
    seed: u64,
    rng: ChaCha8Rng,
}

impl GradientOracle {
    pub fn new(task: TaskSpec, target: OracleTarget, sigma: f64, seed: u64) -> Result<Self> {
        ensure!(
            sigma.is_finite() && sigma >= 0.0,
            "noise scale must be finite and nonnegative, got {sigma}"
        );
        if let OracleTarget::Adapted { alpha } = target {
            ensure!(
                alpha.is_finite() && alpha > 0.0,
                "inner step size must be finite and positive, got {alpha}"
            );
        }
        Ok(GradientOracle {
            task,
            target,
            sigma,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn target(&self) -> OracleTarget {
        self.target
    }

    /// The exact value of the loss this oracle's gradients belong to.
    pub fn true_value(&self, w: &Array1<f64>) -> Result<f64> {
        match self.target {
            OracleTarget::Loss(side) => Ok(self.task.true_loss(side, w)),
            OracleTarget::Adapted { alpha } => {
                let cfg = AdapterConfig::exact(alpha)?;
                adapter::meta_loss(&self.task, &cfg, w)
            }
        }
    }

    /// The noise-free mean of this oracle's answers at `w`.
    pub fn true_gradient(&self, w: &Array1<f64>) -> Result<Array1<f64>> {
        match self.target {
            OracleTarget::Loss(side) => Ok(self.task.true_grad(side, w)),
            OracleTarget::Adapted { alpha } => {
                let cfg = AdapterConfig::exact(alpha)?;
                adapter::meta_grad(&self.task, &cfg, w)
            }
        }
    }

    /// One stochastic query: `true_gradient(w) + eps` with
    /// `E[eps] = 0`, `E[||eps||^2] = sigma^2`, fresh noise per call.
    pub fn sample(&mut self, w: &Array1<f64>) -> Result<Array1<f64>> {
        let mut g = self.true_gradient(w)?;
        if self.sigma > 0.0 {
            let scale = self.sigma / (self.task.dim as f64).sqrt();
            for gi in g.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                *gi += scale * z;
            }
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapter::meta_grad;
    use crate::task::norm_sq;
    use ndarray::array;

    fn fixture() -> (TaskSpec, Array1<f64>) {
        let task = TaskSpec::quadratic(array![1.0, -2.0, 0.5], 10.0).unwrap();
        let w = array![0.2, 0.4, -0.6];
        (task, w)
    }

    #[test]
    fn zero_noise_is_exact() {
        let (task, w) = fixture();
        let mut oracle =
            GradientOracle::new(task.clone(), OracleTarget::Loss(Side::Test), 0.0, 7).unwrap();
        assert_eq!(oracle.sample(&w).unwrap(), task.true_grad(Side::Test, &w));

        let mut oracle =
            GradientOracle::new(task.clone(), OracleTarget::Adapted { alpha: 0.1 }, 0.0, 7)
                .unwrap();
        let cfg = AdapterConfig::exact(0.1).unwrap();
        assert_eq!(
            oracle.sample(&w).unwrap(),
            meta_grad(&task, &cfg, &w).unwrap()
        );
    }

    #[test]
    fn sample_mean_converges_to_true_gradient() {
        let (task, w) = fixture();
        let sigma = 1.0;
        let mut oracle =
            GradientOracle::new(task.clone(), OracleTarget::Loss(Side::Train), sigma, 11).unwrap();
        let truth = task.true_grad(Side::Train, &w);
        let n = 10_000;
        let mut mean = Array1::zeros(3);
        for _ in 0..n {
            mean += &oracle.sample(&w).unwrap();
        }
        mean /= n as f64;
        let tol = 3.0 * sigma / (n as f64).sqrt();
        for j in 0..3 {
            assert!(
                (mean[j] - truth[j]).abs() <= tol,
                "coord {j}: {} vs {}",
                mean[j],
                truth[j]
            );
        }
    }

    #[test]
    fn noise_second_moment_is_near_sigma_squared() {
        let (task, w) = fixture();
        let sigma = 1.0;
        let mut oracle =
            GradientOracle::new(task.clone(), OracleTarget::Loss(Side::Train), sigma, 13).unwrap();
        let truth = task.true_grad(Side::Train, &w);
        let n = 10_000;
        let mut second = 0.0;
        for _ in 0..n {
            let eps = &oracle.sample(&w).unwrap() - &truth;
            second += norm_sq(&eps);
        }
        second /= n as f64;
        assert!(
            second >= 0.9 * sigma * sigma && second <= 1.1 * sigma * sigma,
            "second moment {second}"
        );
    }

    #[test]
    fn distinct_draws_are_uncorrelated() {
        let (task, w) = fixture();
        let sigma = 1.0;
        let mut a =
            GradientOracle::new(task.clone(), OracleTarget::Loss(Side::Train), sigma, 17).unwrap();
        let mut b =
            GradientOracle::new(task.clone(), OracleTarget::Loss(Side::Train), sigma, 18).unwrap();
        let truth = task.true_grad(Side::Train, &w);
        let n = 10_000;
        let mut cov = ndarray::Array2::<f64>::zeros((3, 3));
        for _ in 0..n {
            let ea = &a.sample(&w).unwrap() - &truth;
            let eb = &b.sample(&w).unwrap() - &truth;
            for i in 0..3 {
                for j in 0..3 {
                    cov[(i, j)] += ea[i] * eb[j];
                }
            }
        }
        cov /= n as f64;
        let tol = 4.0 * sigma * sigma / (n as f64).sqrt();
        for v in cov.iter() {
            assert!(v.abs() <= tol, "covariance entry {v} exceeds {tol}");
        }
    }

    #[test]
    fn negative_sigma_is_rejected() {
        let (task, _) = fixture();
        assert!(GradientOracle::new(task, OracleTarget::Loss(Side::Test), -0.1, 0).is_err());
    }

    #[test]
    fn same_seed_replays_the_same_stream() {
        let (task, w) = fixture();
        let mut a =
            GradientOracle::new(task.clone(), OracleTarget::Loss(Side::Train), 1.0, 99).unwrap();
        let mut b =
            GradientOracle::new(task, OracleTarget::Loss(Side::Train), 1.0, 99).unwrap();
        for _ in 0..5 {
            assert_eq!(a.sample(&w).unwrap(), b.sample(&w).unwrap());
        }
    }
}
