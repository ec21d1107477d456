//! One-step inner adaptation and the adapted loss.
//!
//! Given a task and a shared iterate `w`, the adapter takes a single gradient
//! step on the task's train loss, `U(w) = w - alpha * grad_train(w)`, and the
//! adapted loss is the test loss at the adapted point,
//! `l(w) = loss_test(U(w))`. Its exact gradient is
//!
//! ```text
//! grad l(w) = (I - alpha * hess_train(w)) grad_test(U(w))
//! ```
//!
//! computed here with a single Hessian-vector product, never materializing
//! the Hessian.
//!
//! The adapted loss is *defined* with the exact expected train gradient, so
//! [`adapt`], [`meta_loss`] and [`meta_grad`] are deterministic. The
//! sampled-batch mode ([`meta_eval_sampled`]) realizes a stochastic variant
//! where one drawn batch plays the role of the train set; the batch is shared
//! between the adapt step and the Hessian correction so each draw is a
//! well-defined function of `w` with a genuine gradient.

use ndarray::Array1;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::task::{all_finite, LossConstants, SampleBatch, Side, TaskSpec};

/// How the inner adaptation step obtains its train gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum InnerMode {
    /// Use the exact expected train gradient (the definition of the adapted
    /// loss).
    ExactExpectation,
    /// Use the gradient of a freshly sampled batch of `k` train points.
    SampledBatch { k: usize },
}

/// Inner-step configuration: step size and gradient source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdapterConfig {
    pub alpha: f64,
    pub inner_mode: InnerMode,
}

impl AdapterConfig {
    pub fn new(alpha: f64, inner_mode: InnerMode) -> Result<Self> {
        ensure!(
            alpha.is_finite() && alpha > 0.0,
            "inner step size must be finite and positive, got {alpha}"
        );
        if let InnerMode::SampledBatch { k } = inner_mode {
            ensure!(k >= 1, "sampled-batch size must be >= 1, got {k}");
        }
        Ok(AdapterConfig { alpha, inner_mode })
    }

    /// Exact-expectation adapter with the given step size.
    pub fn exact(alpha: f64) -> Result<Self> {
        AdapterConfig::new(alpha, InnerMode::ExactExpectation)
    }
}

/// Constants of the adapted loss derived from the base loss constants:
/// the bound carries over unchanged, the Lipschitz constant becomes
/// `(1 + alpha*beta) L` and the smoothness
/// `alpha*L*H + (1 + alpha*beta)^2 beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetaConstants {
    pub bound: f64,
    pub lipschitz: f64,
    pub smoothness: f64,
}

/// Propagates base-loss constants through the one-step adapter.
pub fn meta_constants(base: &LossConstants, alpha: f64) -> Result<MetaConstants> {
    ensure!(
        alpha.is_finite() && alpha >= 0.0,
        "alpha must be finite and nonnegative, got {alpha}"
    );
    for (name, v) in [
        ("lipschitz", base.lipschitz),
        ("smoothness", base.smoothness),
        ("hessian_lipschitz", base.hessian_lipschitz),
        ("bound", base.bound),
    ] {
        ensure!(
            v.is_finite() && v >= 0.0,
            "loss constant {name} must be finite and nonnegative, got {v}"
        );
    }
    let stretch = 1.0 + alpha * base.smoothness;
    Ok(MetaConstants {
        bound: base.bound,
        lipschitz: stretch * base.lipschitz,
        smoothness: alpha * base.lipschitz * base.hessian_lipschitz
            + stretch * stretch * base.smoothness,
    })
}

fn check_finite(w: &Array1<f64>) -> Result<()> {
    if all_finite(w) {
        Ok(())
    } else {
        Err(Error::NonFinite("iterate"))
    }
}

/// One exact inner step: `U(w) = w - alpha * grad_train(w)`.
pub fn adapt(task: &TaskSpec, cfg: &AdapterConfig, w: &Array1<f64>) -> Result<Array1<f64>> {
    check_finite(w)?;
    let g = task.true_grad(Side::Train, w);
    Ok(w - &(cfg.alpha * &g))
}

/// The adapted loss `l(w) = loss_test(U(w))`, evaluated exactly.
pub fn meta_loss(task: &TaskSpec, cfg: &AdapterConfig, w: &Array1<f64>) -> Result<f64> {
    let adapted = adapt(task, cfg, w)?;
    Ok(task.true_loss(Side::Test, &adapted))
}

/// Exact gradient of the adapted loss via one Hessian-vector product.
pub fn meta_grad(task: &TaskSpec, cfg: &AdapterConfig, w: &Array1<f64>) -> Result<Array1<f64>> {
    let adapted = adapt(task, cfg, w)?;
    let outer = task.true_grad(Side::Test, &adapted);
    let correction = task.true_hvp(Side::Train, w, &outer);
    Ok(&outer - &(cfg.alpha * &correction))
}

/// One coherent evaluation of the adapted loss: the adapted point, its test
/// loss, and the gradient of the same realized function.
#[derive(Debug, Clone)]
pub struct MetaEval {
    pub adapted: Array1<f64>,
    pub loss: f64,
    pub grad: Array1<f64>,
}

/// Evaluates the adapted loss for one realization of the inner mode. In
/// `ExactExpectation` mode this is deterministic and agrees with
/// [`meta_loss`]/[`meta_grad`]; in `SampledBatch` mode one batch is drawn and
/// reused for both the adapt step and the Hessian correction.
pub fn meta_eval_sampled(
    task: &TaskSpec,
    cfg: &AdapterConfig,
    w: &Array1<f64>,
    rng: &mut impl Rng,
) -> Result<MetaEval> {
    match cfg.inner_mode {
        InnerMode::ExactExpectation => {
            let adapted = adapt(task, cfg, w)?;
            let outer = task.true_grad(Side::Test, &adapted);
            let correction = task.true_hvp(Side::Train, w, &outer);
            Ok(MetaEval {
                loss: task.true_loss(Side::Test, &adapted),
                grad: &outer - &(cfg.alpha * &correction),
                adapted,
            })
        }
        InnerMode::SampledBatch { k } => {
            let batch = task.sample_batch(Side::Train, k, rng)?;
            meta_eval_with_batch(task, cfg.alpha, &batch, w)
        }
    }
}

/// Evaluates the adapted loss with a pinned train batch. Useful when the
/// caller wants to treat one draw as a fixed function (e.g. to check its
/// gradient by finite differences).
pub fn meta_eval_with_batch(
    task: &TaskSpec,
    alpha: f64,
    batch: &SampleBatch,
    w: &Array1<f64>,
) -> Result<MetaEval> {
    check_finite(w)?;
    ensure!(
        batch.side() == Side::Train,
        "inner adaptation expects a train-side batch"
    );
    let inner = task.batch_grad(batch, w);
    let adapted = w - &(alpha * &inner);
    let outer = task.true_grad(Side::Test, &adapted);
    let correction = task.batch_hvp(batch, w, &outer);
    Ok(MetaEval {
        loss: task.true_loss(Side::Test, &adapted),
        grad: &outer - &(alpha * &correction),
        adapted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::{make_task, norm, sample_in_ball, TaskFamily};
    use approx::assert_relative_eq;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fd_grad(f: impl Fn(&Array1<f64>) -> f64, w: &Array1<f64>, eps: f64) -> Array1<f64> {
        let mut g = Array1::zeros(w.len());
        let mut p = w.clone();
        for i in 0..w.len() {
            p[i] = w[i] + eps;
            let hi = f(&p);
            p[i] = w[i] - eps;
            let lo = f(&p);
            p[i] = w[i];
            g[i] = (hi - lo) / (2.0 * eps);
        }
        g
    }

    #[test]
    fn adapt_is_affine_for_quadratic() {
        let c = array![2.0, -4.0];
        let task = TaskSpec::quadratic(c.clone(), 10.0).unwrap();
        let cfg = AdapterConfig::exact(0.1).unwrap();
        let w = array![1.0, 1.0];
        let got = adapt(&task, &cfg, &w).unwrap();
        let want = &(0.9 * &w) + &(0.1 * &c);
        assert_relative_eq!(got[0], want[0], max_relative = 1e-15);
        assert_relative_eq!(got[1], want[1], max_relative = 1e-15);

        // zero inner gradient: the center is a fixed point
        assert_eq!(adapt(&task, &cfg, &c).unwrap(), c);
    }

    #[test]
    fn tiny_alpha_approaches_identity() {
        let task = TaskSpec::quadratic(array![5.0, 0.0], 10.0).unwrap();
        let cfg = AdapterConfig::exact(1e-12).unwrap();
        let w = array![1.0, 2.0];
        let out = adapt(&task, &cfg, &w).unwrap();
        assert!(norm(&(&out - &w)) < 1e-10);
    }

    #[test]
    fn meta_loss_hand_values() {
        // shared centers: l(w) = (1-alpha)^2 ||w-c||^2 / 2
        let c = array![1.0, -1.0];
        let task = TaskSpec::quadratic(c.clone(), 10.0).unwrap();
        let cfg = AdapterConfig::exact(0.1).unwrap();
        let w = array![3.0, 0.0];
        let want = 0.5 * 0.81 * ((3.0f64 - 1.0).powi(2) + 1.0);
        assert_relative_eq!(meta_loss(&task, &cfg, &w).unwrap(), want, epsilon = 1e-14);
        assert_eq!(meta_loss(&task, &cfg, &c).unwrap(), 0.0);

        // split centers, w at the train center: the adapt step stays put
        let task =
            TaskSpec::quadratic_shifted(array![0.0, 0.0], array![1.0, 0.0], 10.0).unwrap();
        let w = array![0.0, 0.0];
        assert_eq!(adapt(&task, &cfg, &w).unwrap(), w);
        assert_relative_eq!(meta_loss(&task, &cfg, &w).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn meta_grad_hand_values() {
        let task = TaskSpec::quadratic(array![0.0, 0.0], 10.0).unwrap();
        let cfg = AdapterConfig::exact(0.1).unwrap();
        let g = meta_grad(&task, &cfg, &array![1.0, 0.0]).unwrap();
        assert_relative_eq!(g[0], 0.81, epsilon = 1e-15);
        assert_relative_eq!(g[1], 0.0, epsilon = 1e-15);

        // outer gradient vanishes at the shared center
        let c = array![2.0, 2.0];
        let task = TaskSpec::quadratic(c.clone(), 10.0).unwrap();
        let g = meta_grad(&task, &cfg, &c).unwrap();
        assert_eq!(g, array![0.0, 0.0]);
    }

    #[test]
    fn meta_grad_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let cfg = AdapterConfig::exact(0.1).unwrap();
        for family in [TaskFamily::QuadraticBowl, TaskFamily::SineRegression] {
            for _ in 0..25 {
                let task = make_task(family, 3, &mut rng, 5.0).unwrap();
                let w = sample_in_ball(3, 4.0, &mut rng);
                let g = meta_grad(&task, &cfg, &w).unwrap();
                let fd = fd_grad(|w| meta_loss(&task, &cfg, w).unwrap(), &w, 1e-5);
                let err = norm(&(&g - &fd)) / norm(&g).max(1.0);
                assert!(err <= 1e-5, "{family}: rel err {err}");
            }
        }
    }

    #[test]
    fn meta_constants_hand_values() {
        let base = LossConstants {
            lipschitz: 2.0,
            smoothness: 1.0,
            hessian_lipschitz: 0.0,
            bound: 5.0,
        };
        let k = meta_constants(&base, 0.1).unwrap();
        assert_relative_eq!(k.bound, 5.0);
        assert_relative_eq!(k.lipschitz, 2.2, epsilon = 1e-15);
        assert_relative_eq!(k.smoothness, 1.21, epsilon = 1e-15);

        // alpha = 0 is the identity adapter
        let k = meta_constants(&base, 0.0).unwrap();
        assert_eq!((k.bound, k.lipschitz, k.smoothness), (5.0, 2.0, 1.0));

        let base = LossConstants {
            lipschitz: 1.0,
            smoothness: 2.0,
            hessian_lipschitz: 3.0,
            bound: 1.0,
        };
        let k = meta_constants(&base, 0.5).unwrap();
        assert_eq!((k.bound, k.lipschitz, k.smoothness), (1.0, 2.0, 9.5));
    }

    #[test]
    fn meta_constants_rejects_negative_inputs() {
        let base = LossConstants {
            lipschitz: -1.0,
            smoothness: 1.0,
            hessian_lipschitz: 0.0,
            bound: 1.0,
        };
        assert!(meta_constants(&base, 0.1).is_err());
        let ok = LossConstants {
            lipschitz: 1.0,
            smoothness: 1.0,
            hessian_lipschitz: 0.0,
            bound: 1.0,
        };
        assert!(meta_constants(&ok, -0.1).is_err());
    }

    #[test]
    fn propagated_constants_certify_the_adapted_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let cfg = AdapterConfig::exact(0.1).unwrap();
        for family in [TaskFamily::QuadraticBowl, TaskFamily::SineRegression] {
            let task = make_task(family, 3, &mut rng, 5.0).unwrap();
            let k = meta_constants(&task.constants(), cfg.alpha).unwrap();
            for _ in 0..1000 {
                let u = sample_in_ball(3, task.domain_radius, &mut rng);
                let v = sample_in_ball(3, task.domain_radius, &mut rng);
                let dist = norm(&(&u - &v));
                let dl =
                    (meta_loss(&task, &cfg, &u).unwrap() - meta_loss(&task, &cfg, &v).unwrap())
                        .abs();
                assert!(dl <= k.lipschitz * dist + 1e-12);
                let dg = norm(
                    &(&meta_grad(&task, &cfg, &u).unwrap() - &meta_grad(&task, &cfg, &v).unwrap()),
                );
                assert!(dg <= k.smoothness * dist + 1e-12);
                assert!(meta_loss(&task, &cfg, &u).unwrap().abs() <= k.bound + 1e-12);
            }
        }
    }

    #[test]
    fn meta_loss_is_exactly_the_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let cfg = AdapterConfig::exact(0.1).unwrap();
        for family in [TaskFamily::QuadraticBowl, TaskFamily::SineRegression] {
            for _ in 0..50 {
                let task = make_task(family, 2, &mut rng, 5.0).unwrap();
                let w = sample_in_ball(2, 5.0, &mut rng);
                let composed =
                    task.true_loss(Side::Test, &adapt(&task, &cfg, &w).unwrap());
                // bitwise identical, not just close
                assert_eq!(meta_loss(&task, &cfg, &w).unwrap(), composed);
            }
        }
    }

    #[test]
    fn exact_mode_is_deterministic() {
        let task = TaskSpec::quadratic(array![1.0, 2.0], 10.0).unwrap();
        let cfg = AdapterConfig::exact(0.1).unwrap();
        let w = array![0.25, -0.75];
        let a = meta_grad(&task, &cfg, &w).unwrap();
        let b = meta_grad(&task, &cfg, &w).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn non_finite_iterate_is_a_numeric_error() {
        let task = TaskSpec::quadratic(array![0.0], 10.0).unwrap();
        let cfg = AdapterConfig::exact(0.1).unwrap();
        let w = array![f64::NAN];
        assert!(matches!(
            adapt(&task, &cfg, &w),
            Err(Error::NonFinite(_))
        ));
        assert!(meta_loss(&task, &cfg, &w).is_err());
        assert!(meta_grad(&task, &cfg, &w).is_err());
    }

    #[test]
    fn sampled_eval_gradient_matches_its_own_draw() {
        // with the batch pinned, the reported gradient is the true gradient
        // of the realized function
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        for family in [TaskFamily::QuadraticBowl, TaskFamily::SineRegression] {
            let task = make_task(family, 3, &mut rng, 5.0).unwrap();
            let w = sample_in_ball(3, 3.0, &mut rng);
            let batch = task.sample_batch(Side::Train, 4, &mut rng).unwrap();
            let eval = meta_eval_with_batch(&task, 0.1, &batch, &w).unwrap();
            let fd = fd_grad(
                |w| meta_eval_with_batch(&task, 0.1, &batch, w).unwrap().loss,
                &w,
                1e-5,
            );
            let err = norm(&(&eval.grad - &fd)) / norm(&eval.grad).max(1.0);
            assert!(err <= 1e-5, "{family}: rel err {err}");
        }
    }

    #[test]
    fn sampled_mode_reduces_to_exact_under_exact_config() {
        let task = TaskSpec::quadratic(array![1.0, 0.0], 10.0).unwrap();
        let cfg = AdapterConfig::exact(0.1).unwrap();
        let w = array![0.5, 0.5];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let eval = meta_eval_sampled(&task, &cfg, &w, &mut rng).unwrap();
        assert_eq!(eval.loss, meta_loss(&task, &cfg, &w).unwrap());
        assert_eq!(eval.grad, meta_grad(&task, &cfg, &w).unwrap());
    }
}
