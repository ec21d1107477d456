//! Synthetic task families with closed-form losses, gradients, and
//! Hessian-vector products.
//!
//! A task is a pair of data distributions (train/test) over a common loss
//! family. Every family evaluates its *expected* loss exactly, so the rest of
//! the crate can measure regret against true gradients while the learning
//! algorithm only ever sees stochastic estimates.
//!
//! Two families are provided:
//!
//! * [`TaskFamily::QuadraticBowl`] — `l(w) = 1/2 ||w - c||^2` with a
//!   family-specific center per side. The Hessian is the identity, so the
//!   Hessian-Lipschitz constant is exactly zero.
//! * [`TaskFamily::SineRegression`] — phase regression on a harmonic signal:
//!   the model `y(x; w) = sum_j a_j sin(j x + w_j)` fits the phases of
//!   `y(x) = sum_j a_j sin(j x + phi_j)` under squared error, `x ~ U[0, 2pi)`.
//!   Orthogonality of the harmonics gives the closed form
//!   `l(w) = 1/2 sum_j a_j^2 (1 - cos(w_j - phi_j))`, which is non-convex,
//!   periodic, and has a curvature that genuinely varies with `w`.

use ndarray::Array1;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Which synthetic loss family a task belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskFamily {
    QuadraticBowl,
    SineRegression,
}

impl std::fmt::Display for TaskFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TaskFamily::QuadraticBowl => write!(f, "quadratic-bowl"),
            TaskFamily::SineRegression => write!(f, "sine-regression"),
        }
    }
}

/// Train or test side of a task's data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Train,
    Test,
}

/// Parameters of one sine-regression side: shared harmonic amplitudes and the
/// true phases the learner has to recover.
#[derive(Debug, Clone, PartialEq)]
pub struct SineParams {
    pub amplitudes: Array1<f64>,
    pub phases: Array1<f64>,
}

/// Family-specific parameters for both sides of a task.
#[derive(Debug, Clone, PartialEq)]
pub enum TaskParams {
    Quadratic {
        train_center: Array1<f64>,
        test_center: Array1<f64>,
        /// Per-coordinate standard deviation of sampled data points around
        /// the center; only used by the sampled-batch mode.
        data_std: f64,
    },
    Sine {
        train: SineParams,
        test: SineParams,
    },
}

/// A single synthetic task: dimension, certified domain, and per-side
/// parameters.
///
/// All constant certificates from [`TaskSpec::constants`] are valid on the
/// ball `||w|| <= domain_radius`. Evaluation outside the ball is allowed (the
/// optimizer is unconstrained); callers that care can query
/// [`TaskSpec::contains`].
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub dim: usize,
    pub domain_radius: f64,
    pub params: TaskParams,
}

/// Certified constants of a loss family on the task's domain ball:
/// value Lipschitz, gradient Lipschitz (smoothness), Hessian Lipschitz, and a
/// bound on `|l|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConstants {
    pub lipschitz: f64,
    pub smoothness: f64,
    pub hessian_lipschitz: f64,
    pub bound: f64,
}

impl TaskSpec {
    /// Builds a task after validating dimensional consistency.
    pub fn new(dim: usize, domain_radius: f64, params: TaskParams) -> Result<Self> {
        ensure!(dim >= 1, "task dimension must be >= 1, got {dim}");
        ensure!(
            domain_radius.is_finite() && domain_radius > 0.0,
            "domain radius must be finite and positive, got {domain_radius}"
        );
        match &params {
            TaskParams::Quadratic {
                train_center,
                test_center,
                data_std,
            } => {
                for (name, c) in [("train", train_center), ("test", test_center)] {
                    if c.len() != dim {
                        return Err(Error::DimensionMismatch {
                            expected: dim,
                            got: c.len(),
                        });
                    }
                    ensure!(
                        c.iter().all(|x| x.is_finite()),
                        "{name} center must be finite"
                    );
                }
                ensure!(
                    data_std.is_finite() && *data_std >= 0.0,
                    "data_std must be finite and nonnegative, got {data_std}"
                );
            }
            TaskParams::Sine { train, test } => {
                for (name, p) in [("train", train), ("test", test)] {
                    if p.amplitudes.len() != dim || p.phases.len() != dim {
                        return Err(Error::DimensionMismatch {
                            expected: dim,
                            got: p.amplitudes.len().min(p.phases.len()),
                        });
                    }
                    ensure!(
                        p.amplitudes.iter().all(|a| a.is_finite() && *a >= 0.0),
                        "{name} amplitudes must be finite and nonnegative"
                    );
                    ensure!(
                        p.phases.iter().all(|x| x.is_finite()),
                        "{name} phases must be finite"
                    );
                }
            }
        }
        Ok(TaskSpec {
            dim,
            domain_radius,
            params,
        })
    }

    /// Convenience constructor for a one-sided bowl (train == test center).
    pub fn quadratic(center: Array1<f64>, domain_radius: f64) -> Result<Self> {
        let dim = center.len();
        TaskSpec::new(
            dim,
            domain_radius,
            TaskParams::Quadratic {
                train_center: center.clone(),
                test_center: center,
                data_std: 1.0,
            },
        )
    }

    /// Convenience constructor for a two-center bowl.
    pub fn quadratic_shifted(
        train_center: Array1<f64>,
        test_center: Array1<f64>,
        domain_radius: f64,
    ) -> Result<Self> {
        let dim = train_center.len();
        TaskSpec::new(
            dim,
            domain_radius,
            TaskParams::Quadratic {
                train_center,
                test_center,
                data_std: 1.0,
            },
        )
    }

    pub fn family(&self) -> TaskFamily {
        match self.params {
            TaskParams::Quadratic { .. } => TaskFamily::QuadraticBowl,
            TaskParams::Sine { .. } => TaskFamily::SineRegression,
        }
    }

    /// True while the iterate stays inside the ball on which the constants
    /// are certified. Leaving the ball is not an error, it only voids the
    /// certificates; callers surface it as a flag.
    pub fn contains(&self, w: &Array1<f64>) -> bool {
        norm(w) <= self.domain_radius
    }

    fn side_center(&self, side: Side) -> &Array1<f64> {
        match (&self.params, side) {
            (TaskParams::Quadratic { train_center, .. }, Side::Train) => train_center,
            (TaskParams::Quadratic { test_center, .. }, Side::Test) => test_center,
            _ => unreachable!("side_center on non-quadratic task"),
        }
    }

    fn side_sine(&self, side: Side) -> &SineParams {
        match (&self.params, side) {
            (TaskParams::Sine { train, .. }, Side::Train) => train,
            (TaskParams::Sine { test, .. }, Side::Test) => test,
            _ => unreachable!("side_sine on non-sine task"),
        }
    }

    /// Exact expected loss of the given side at `w`.
    pub fn true_loss(&self, side: Side, w: &Array1<f64>) -> f64 {
        assert_eq!(w.len(), self.dim, "iterate dimension mismatch");
        match &self.params {
            TaskParams::Quadratic { .. } => {
                let c = self.side_center(side);
                0.5 * norm_sq(&(w - c))
            }
            TaskParams::Sine { .. } => {
                let p = self.side_sine(side);
                0.5 * w
                    .iter()
                    .zip(p.amplitudes.iter())
                    .zip(p.phases.iter())
                    .map(|((wj, aj), pj)| aj * aj * (1.0 - (wj - pj).cos()))
                    .sum::<f64>()
            }
        }
    }

    /// Exact gradient of the side's expected loss at `w`.
    pub fn true_grad(&self, side: Side, w: &Array1<f64>) -> Array1<f64> {
        assert_eq!(w.len(), self.dim, "iterate dimension mismatch");
        match &self.params {
            TaskParams::Quadratic { .. } => w - self.side_center(side),
            TaskParams::Sine { .. } => {
                let p = self.side_sine(side);
                Array1::from_iter(
                    w.iter()
                        .zip(p.amplitudes.iter())
                        .zip(p.phases.iter())
                        .map(|((wj, aj), pj)| 0.5 * aj * aj * (wj - pj).sin()),
                )
            }
        }
    }

    /// Exact Hessian-vector product of the side's expected loss at `w`.
    /// The full Hessian is never materialized.
    pub fn true_hvp(&self, side: Side, w: &Array1<f64>, v: &Array1<f64>) -> Array1<f64> {
        assert_eq!(w.len(), self.dim, "iterate dimension mismatch");
        assert_eq!(v.len(), self.dim, "direction dimension mismatch");
        match &self.params {
            // identity Hessian
            TaskParams::Quadratic { .. } => v.clone(),
            TaskParams::Sine { .. } => {
                let p = self.side_sine(side);
                Array1::from_iter(
                    w.iter()
                        .zip(v.iter())
                        .zip(p.amplitudes.iter())
                        .zip(p.phases.iter())
                        .map(|(((wj, vj), aj), pj)| 0.5 * aj * aj * (wj - pj).cos() * vj),
                )
            }
        }
    }

    /// Closed-form constants valid on the ball `||w|| <= domain_radius`,
    /// covering both sides of the task.
    ///
    /// Quadratic: `L = R + ||c||`, `beta = 1`, `H = 0`, `M = (R + ||c||)^2/2`
    /// with `||c||` the larger of the two centers. Sine-regression constants
    /// hold globally: `L = ||a^2||_2 / 2`, `beta = H = max_j a_j^2 / 2`,
    /// `M = sum_j a_j^2`.
    pub fn constants(&self) -> LossConstants {
        match &self.params {
            TaskParams::Quadratic {
                train_center,
                test_center,
                ..
            } => {
                let c = norm(train_center).max(norm(test_center));
                let reach = self.domain_radius + c;
                LossConstants {
                    lipschitz: reach,
                    smoothness: 1.0,
                    hessian_lipschitz: 0.0,
                    bound: 0.5 * reach * reach,
                }
            }
            TaskParams::Sine { train, test } => {
                let mut out = LossConstants {
                    lipschitz: 0.0,
                    smoothness: 0.0,
                    hessian_lipschitz: 0.0,
                    bound: 0.0,
                };
                for p in [train, test] {
                    let sq: Vec<f64> = p.amplitudes.iter().map(|a| a * a).collect();
                    let lip = 0.5 * sq.iter().map(|s| s * s).sum::<f64>().sqrt();
                    let curv = 0.5 * sq.iter().cloned().fold(0.0f64, f64::max);
                    out.lipschitz = out.lipschitz.max(lip);
                    out.smoothness = out.smoothness.max(curv);
                    out.hessian_lipschitz = out.hessian_lipschitz.max(curv);
                    out.bound = out.bound.max(sq.iter().sum());
                }
                out
            }
        }
    }

    /// Draws a batch of `k` data points from one side. Together with
    /// [`TaskSpec::batch_loss`]/[`TaskSpec::batch_grad`]/[`TaskSpec::batch_hvp`]
    /// this realizes the sampled-data view of a task: the batch quantities are
    /// unbiased estimates of the exact ones, with variance shrinking as `1/k`.
    pub fn sample_batch(&self, side: Side, k: usize, rng: &mut impl Rng) -> Result<SampleBatch> {
        ensure!(k >= 1, "batch size must be >= 1, got {k}");
        let data = match &self.params {
            TaskParams::Quadratic { data_std, .. } => {
                let c = self.side_center(side);
                let points = (0..k)
                    .map(|_| {
                        Array1::from_iter(c.iter().map(|ci| {
                            let z: f64 = StandardNormal.sample(rng);
                            ci + data_std * z
                        }))
                    })
                    .collect();
                BatchData::Quadratic { points }
            }
            TaskParams::Sine { .. } => {
                let xs = (0..k)
                    .map(|_| rng.random::<f64>() * std::f64::consts::TAU)
                    .collect();
                BatchData::Sine { xs }
            }
        };
        Ok(SampleBatch { side, data })
    }

    /// Empirical loss of a sampled batch at `w`.
    pub fn batch_loss(&self, batch: &SampleBatch, w: &Array1<f64>) -> f64 {
        match &batch.data {
            BatchData::Quadratic { points } => {
                points.iter().map(|x| 0.5 * norm_sq(&(w - x))).sum::<f64>() / points.len() as f64
            }
            BatchData::Sine { xs } => {
                let p = self.side_sine(batch.side);
                xs.iter()
                    .map(|&x| {
                        let r = sine_residual(p, w, x);
                        0.5 * r * r
                    })
                    .sum::<f64>()
                    / xs.len() as f64
            }
        }
    }

    /// Gradient of the batch loss at `w`.
    pub fn batch_grad(&self, batch: &SampleBatch, w: &Array1<f64>) -> Array1<f64> {
        match &batch.data {
            BatchData::Quadratic { points } => {
                let mut mean = Array1::zeros(self.dim);
                for x in points {
                    mean += x;
                }
                mean /= points.len() as f64;
                w - &mean
            }
            BatchData::Sine { xs } => {
                let p = self.side_sine(batch.side);
                let mut g = Array1::zeros(self.dim);
                for &x in xs {
                    let r = sine_residual(p, w, x);
                    for j in 0..self.dim {
                        let aj = p.amplitudes[j];
                        g[j] += r * aj * ((j as f64 + 1.0) * x + w[j]).cos();
                    }
                }
                g / xs.len() as f64
            }
        }
    }

    /// Hessian-vector product of the batch loss at `w`.
    pub fn batch_hvp(&self, batch: &SampleBatch, w: &Array1<f64>, v: &Array1<f64>) -> Array1<f64> {
        match &batch.data {
            BatchData::Quadratic { .. } => v.clone(),
            BatchData::Sine { xs } => {
                let p = self.side_sine(batch.side);
                let mut out = Array1::zeros(self.dim);
                for &x in xs {
                    let r = sine_residual(p, w, x);
                    // grad of the model output wrt each phase
                    let gy: Vec<f64> = (0..self.dim)
                        .map(|j| p.amplitudes[j] * ((j as f64 + 1.0) * x + w[j]).cos())
                        .collect();
                    let gy_dot_v: f64 = gy.iter().zip(v.iter()).map(|(g, vj)| g * vj).sum();
                    for j in 0..self.dim {
                        let curv = -p.amplitudes[j] * ((j as f64 + 1.0) * x + w[j]).sin();
                        out[j] += gy[j] * gy_dot_v + r * curv * v[j];
                    }
                }
                out / xs.len() as f64
            }
        }
    }
}

/// Model output minus target for one sine-regression sample.
fn sine_residual(p: &SineParams, w: &Array1<f64>, x: f64) -> f64 {
    let mut r = 0.0;
    for j in 0..w.len() {
        let freq = j as f64 + 1.0;
        r += p.amplitudes[j] * ((freq * x + w[j]).sin() - (freq * x + p.phases[j]).sin());
    }
    r
}

/// A batch of sampled data points from one side of a task.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    side: Side,
    data: BatchData,
}

#[derive(Debug, Clone)]
enum BatchData {
    Quadratic { points: Vec<Array1<f64>> },
    Sine { xs: Vec<f64> },
}

impl SampleBatch {
    pub fn side(&self) -> Side {
        self.side
    }

    pub fn len(&self) -> usize {
        match &self.data {
            BatchData::Quadratic { points } => points.len(),
            BatchData::Sine { xs } => xs.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Draws a fresh task from the family's generator distribution.
///
/// * Quadratic: a shared train/test center uniform in the ball of radius
///   `domain_radius`, so the center lies inside the domain by construction.
/// * Sine regression: per-harmonic amplitudes in `[0.1, 5.0]` and phases in
///   `[0, pi]`, shared by both sides.
pub fn make_task(
    family: TaskFamily,
    dim: usize,
    rng: &mut impl Rng,
    domain_radius: f64,
) -> Result<TaskSpec> {
    ensure!(dim >= 1, "task dimension must be >= 1, got {dim}");
    ensure!(
        domain_radius.is_finite() && domain_radius > 0.0,
        "domain radius must be finite and positive, got {domain_radius}"
    );
    match family {
        TaskFamily::QuadraticBowl => {
            let center = sample_in_ball(dim, domain_radius, rng);
            TaskSpec::quadratic(center, domain_radius)
        }
        TaskFamily::SineRegression => {
            let amplitudes =
                Array1::from_iter((0..dim).map(|_| 0.1 + 4.9 * rng.random::<f64>()));
            let phases = Array1::from_iter(
                (0..dim).map(|_| std::f64::consts::PI * rng.random::<f64>()),
            );
            let side = SineParams { amplitudes, phases };
            TaskSpec::new(
                dim,
                domain_radius,
                TaskParams::Sine {
                    train: side.clone(),
                    test: side,
                },
            )
        }
    }
}

/// Uniform sample from the ball of the given radius.
pub fn sample_in_ball(dim: usize, radius: f64, rng: &mut impl Rng) -> Array1<f64> {
    let mut dir = Array1::from_iter((0..dim).map(|_| {
        let z: f64 = StandardNormal.sample(rng);
        z
    }));
    let n = norm(&dir);
    if n > 0.0 {
        dir /= n;
    }
    let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
    dir * r
}

pub(crate) fn norm_sq(a: &Array1<f64>) -> f64 {
    a.dot(a)
}

pub(crate) fn norm(a: &Array1<f64>) -> f64 {
    norm_sq(a).sqrt()
}

pub(crate) fn all_finite(a: &Array1<f64>) -> bool {
    a.iter().all(|x| x.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;
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
    fn quadratic_loss_matches_hand_values() {
        let t = TaskSpec::quadratic(array![1.0, 0.0], 10.0).unwrap();
        assert_eq!(t.true_loss(Side::Test, &array![1.0, 0.0]), 0.0);

        let t = TaskSpec::quadratic(array![0.0, 0.0], 10.0).unwrap();
        assert_eq!(t.true_loss(Side::Test, &array![3.0, 4.0]), 12.5);
    }

    #[test]
    fn quadratic_grad_and_hvp() {
        let c = array![2.0, -1.0];
        let t = TaskSpec::quadratic(c.clone(), 10.0).unwrap();
        let w = array![0.5, 0.5];
        assert_eq!(t.true_grad(Side::Train, &w), &w - &c);
        assert_eq!(t.true_grad(Side::Train, &c), array![0.0, 0.0]);
        let v = array![3.0, -7.0];
        assert_eq!(t.true_hvp(Side::Train, &w, &v), v);
    }

    #[test]
    fn sine_realizable_minimum_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = make_task(TaskFamily::SineRegression, 4, &mut rng, 5.0).unwrap();
        let TaskParams::Sine { test, .. } = &t.params else {
            unreachable!()
        };
        let w = test.phases.clone();
        assert_relative_eq!(t.true_loss(Side::Test, &w), 0.0, epsilon = 1e-15);
        let g = t.true_grad(Side::Test, &w);
        assert!(g.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn sine_grad_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let t = make_task(TaskFamily::SineRegression, 3, &mut rng, 5.0).unwrap();
            let w = sample_in_ball(3, 4.0, &mut rng);
            let g = t.true_grad(Side::Test, &w);
            let fd = fd_grad(|w| t.true_loss(Side::Test, w), &w, 1e-5);
            let err = norm(&(&g - &fd)) / norm(&g).max(1.0);
            assert!(err <= 1e-6, "rel err {err}");
        }
    }

    #[test]
    fn hvp_matches_finite_difference_of_grad() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for family in [TaskFamily::QuadraticBowl, TaskFamily::SineRegression] {
            let t = make_task(family, 3, &mut rng, 5.0).unwrap();
            let w = sample_in_ball(3, 4.0, &mut rng);
            let mut v = sample_in_ball(3, 1.0, &mut rng);
            let n = norm(&v);
            if n > 0.0 {
                v /= n;
            }
            let eps = 1e-5;
            let hvp = t.true_hvp(Side::Train, &w, &v);
            let gp = t.true_grad(Side::Train, &(&w + &(eps * &v)));
            let gm = t.true_grad(Side::Train, &(&w - &(eps * &v)));
            let fd = (&gp - &gm) / (2.0 * eps);
            assert!(norm(&(&hvp - &fd)) <= 1e-4);
        }
    }

    #[test]
    fn constants_quadratic_hand_values() {
        let t = TaskSpec::quadratic(array![0.0, 0.0], 10.0).unwrap();
        let k = t.constants();
        assert_eq!(
            (k.lipschitz, k.smoothness, k.hessian_lipschitz, k.bound),
            (10.0, 1.0, 0.0, 50.0)
        );

        let t = TaskSpec::quadratic(array![3.0, 4.0], 10.0).unwrap();
        let k = t.constants();
        assert_eq!(
            (k.lipschitz, k.smoothness, k.hessian_lipschitz, k.bound),
            (15.0, 1.0, 0.0, 112.5)
        );
    }

    #[test]
    fn sine_smoothness_dominates_sampled_hessians() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let t = make_task(TaskFamily::SineRegression, 3, &mut rng, 5.0).unwrap();
        let beta = t.constants().smoothness;
        let mut worst: f64 = 0.0;
        for _ in 0..10_000 {
            let w = sample_in_ball(3, 5.0, &mut rng);
            // diagonal Hessian: spectral norm is the largest |entry|
            let mut spec: f64 = 0.0;
            for j in 0..3 {
                let mut e = Array1::zeros(3);
                e[j] = 1.0;
                spec = spec.max(t.true_hvp(Side::Test, &w, &e)[j].abs());
            }
            worst = worst.max(spec);
        }
        assert!(
            beta >= worst,
            "certified smoothness {beta} below sampled {worst}"
        );
    }

    #[test]
    fn constant_certificates_hold_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for family in [TaskFamily::QuadraticBowl, TaskFamily::SineRegression] {
            let d = 3;
            let t = make_task(family, d, &mut rng, 6.0).unwrap();
            let k = t.constants();
            for _ in 0..1000 {
                let u = sample_in_ball(d, t.domain_radius, &mut rng);
                let v = sample_in_ball(d, t.domain_radius, &mut rng);
                let dist = norm(&(&u - &v));
                for side in [Side::Train, Side::Test] {
                    let (lu, lv) = (t.true_loss(side, &u), t.true_loss(side, &v));
                    assert!(lu.abs() <= k.bound + 1e-12 && lv.abs() <= k.bound + 1e-12);
                    assert!((lu - lv).abs() <= k.lipschitz * dist + 1e-12);
                    let gd = norm(&(&t.true_grad(side, &u) - &t.true_grad(side, &v)));
                    assert!(gd <= k.smoothness * dist + 1e-12);
                    // Frobenius distance of Hessians, assembled column-wise
                    let mut frob = 0.0;
                    for j in 0..d {
                        let mut e = Array1::zeros(d);
                        e[j] = 1.0;
                        let col =
                            &t.true_hvp(side, &u, &e) - &t.true_hvp(side, &v, &e);
                        frob += norm_sq(&col);
                    }
                    assert!(
                        frob.sqrt()
                            <= (d as f64).sqrt() * k.hessian_lipschitz * dist + 1e-12
                    );
                }
            }
        }
    }

    #[test]
    fn generator_respects_documented_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = make_task(TaskFamily::QuadraticBowl, 2, &mut rng, 10.0).unwrap();
        let TaskParams::Quadratic { train_center, .. } = &t.params else {
            unreachable!()
        };
        assert!(norm(train_center) <= 10.0);

        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = make_task(TaskFamily::SineRegression, 1, &mut rng, 5.0).unwrap();
        let TaskParams::Sine { train, .. } = &t.params else {
            unreachable!()
        };
        assert!(train.amplitudes[0] >= 0.1 && train.amplitudes[0] <= 5.0);
        assert!(train.phases[0] >= 0.0 && train.phases[0] <= std::f64::consts::PI);
    }

    #[test]
    fn generator_rejects_bad_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(make_task(TaskFamily::QuadraticBowl, 0, &mut rng, 10.0).is_err());
        assert!(make_task(TaskFamily::QuadraticBowl, 2, &mut rng, -1.0).is_err());
        assert!(make_task(TaskFamily::SineRegression, 2, &mut rng, 0.0).is_err());
    }

    #[test]
    fn domain_flag_is_a_query_not_an_error() {
        let t = TaskSpec::quadratic(array![0.0, 0.0], 1.0).unwrap();
        let outside = array![3.0, 4.0];
        assert!(!t.contains(&outside));
        // evaluation still proceeds
        assert_eq!(t.true_loss(Side::Test, &outside), 12.5);
    }

    #[test]
    fn batch_grad_is_unbiased_for_quadratic() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let t = TaskSpec::quadratic(array![1.0, -2.0], 10.0).unwrap();
        let w = array![0.3, 0.7];
        let exact = t.true_grad(Side::Train, &w);
        let n = 20_000;
        let mut mean = Array1::zeros(2);
        for _ in 0..n {
            let b = t.sample_batch(Side::Train, 4, &mut rng).unwrap();
            mean += &t.batch_grad(&b, &w);
        }
        mean /= n as f64;
        // per-coordinate std over the mean is (1/sqrt(k))/sqrt(n) ~ 0.0035
        for j in 0..2 {
            assert!((mean[j] - exact[j]).abs() < 0.02);
        }
    }

    #[test]
    fn batch_grad_is_unbiased_for_sine() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let t = make_task(TaskFamily::SineRegression, 2, &mut rng, 5.0).unwrap();
        let w = sample_in_ball(2, 3.0, &mut rng);
        let exact = t.true_grad(Side::Train, &w);
        let n = 40_000;
        let mut mean = Array1::zeros(2);
        for _ in 0..n {
            let b = t.sample_batch(Side::Train, 2, &mut rng).unwrap();
            mean += &t.batch_grad(&b, &w);
        }
        mean /= n as f64;
        for j in 0..2 {
            assert!(
                (mean[j] - exact[j]).abs() < 0.15,
                "coord {j}: {} vs {}",
                mean[j],
                exact[j]
            );
        }
    }

    #[test]
    fn batch_hvp_matches_fd_of_batch_grad() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let t = make_task(TaskFamily::SineRegression, 3, &mut rng, 5.0).unwrap();
        let w = sample_in_ball(3, 3.0, &mut rng);
        let v = array![0.5, -0.3, 0.8];
        let b = t.sample_batch(Side::Train, 5, &mut rng).unwrap();
        let eps = 1e-5;
        let hvp = t.batch_hvp(&b, &w, &v);
        let gp = t.batch_grad(&b, &(&w + &(eps * &v)));
        let gm = t.batch_grad(&b, &(&w - &(eps * &v)));
        let fd = (&gp - &gm) / (2.0 * eps);
        assert!(norm(&(&hvp - &fd)) <= 1e-4, "{hvp} vs {fd}");
    }
}
