//! Local-regret accounting, the high-probability regret bound, and
//! empirical checkers for the supporting estimator/descent/integral facts.
//!
//! The regret measure is the cumulative squared norm of the *exact* gradient
//! of the window-averaged loss at each iterate. The algorithm itself only
//! ever sees stochastic draws; measuring with true gradients keeps estimation
//! noise out of the reported regret.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::adapter::MetaConstants;
use crate::error::{ensure, Error, Result};
use crate::task::norm_sq;
use crate::window::WindowBuffer;

/// Everything observed in one round of the outer loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundObservation {
    /// `||grad F_{t,m}(w_t)||^2`, measured with exact gradients.
    pub grad_norm_sq: f64,
    /// Window-averaged loss at the current iterate, `F_{t,m}(w_t)`.
    pub window_value: f64,
    /// The same window re-evaluated at the next iterate, `F_{t,m}(w_{t+1})`.
    pub window_value_next: f64,
    /// Accumulator `b_{t+1}` after the update.
    pub accumulator: f64,
    /// Effective step `eta / b_{t+1}` after the update.
    pub effective_step: f64,
    /// True if the iterate left the ball the constants are certified on.
    pub domain_flag: bool,
    /// Post-adaptation test loss on the round's task.
    pub adapted_test_loss: f64,
}

/// One ledger row: the observation plus the running regret through round `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub obs: RoundObservation,
    pub running_regret: f64,
}

/// Append-only per-round record of a run.
#[derive(Debug, Clone, Default)]
pub struct RegretLedger {
    rows: Vec<RoundRecord>,
}

impl RegretLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends round `t`; rounds must arrive consecutively starting at 1.
    pub fn record(&mut self, round: usize, obs: RoundObservation) -> Result<()> {
        let expected = self.rows.len() + 1;
        if round != expected {
            return Err(Error::OutOfOrderRound {
                expected,
                got: round,
            });
        }
        ensure!(
            obs.grad_norm_sq.is_finite() && obs.grad_norm_sq >= 0.0,
            "squared gradient norm must be finite and nonnegative, got {}",
            obs.grad_norm_sq
        );
        let running_regret = self.running_regret() + obs.grad_norm_sq;
        self.rows.push(RoundRecord {
            round,
            obs,
            running_regret,
        });
        Ok(())
    }

    /// Cumulative squared gradient norms through the latest round.
    pub fn running_regret(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.running_regret)
    }

    pub fn rows(&self) -> &[RoundRecord] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Inputs of the high-probability regret bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    /// Horizon `T`.
    pub rounds: usize,
    /// Window size `m`, `1 <= m <= T`.
    pub window: usize,
    pub eta: f64,
    pub b1: f64,
    /// Failure probability, in `(0, 1)`.
    pub delta: f64,
    /// Per-oracle noise scale.
    pub sigma: f64,
    /// Constants of the adapted loss.
    pub constants: MetaConstants,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.rounds >= 1, "horizon must be >= 1");
        ensure!(
            self.window >= 1 && self.window <= self.rounds,
            "window must satisfy 1 <= m <= T, got m={} T={}",
            self.window,
            self.rounds
        );
        ensure!(
            self.eta.is_finite() && self.eta > 0.0,
            "eta must be positive, got {}",
            self.eta
        );
        ensure!(
            self.b1.is_finite() && self.b1 > 0.0,
            "b1 must be positive, got {}",
            self.b1
        );
        ensure!(
            self.delta > 0.0 && self.delta < 1.0,
            "delta must lie in (0, 1), got {}",
            self.delta
        );
        ensure!(
            self.sigma.is_finite() && self.sigma >= 0.0,
            "sigma must be nonnegative, got {}",
            self.sigma
        );
        for (name, v) in [
            ("bound", self.constants.bound),
            ("lipschitz", self.constants.lipschitz),
            ("smoothness", self.constants.smoothness),
        ] {
            ensure!(
                v.is_finite() && v >= 0.0,
                "constant {name} must be finite and nonnegative, got {v}"
            );
        }
        Ok(())
    }
}

/// The constant `C` entering the regret bound:
///
/// ```text
/// C = 4 M T / (eta m)
///   + ((eta beta' + 4 sigma / sqrt(m)) / 2) * ln(1 + 2 (sigma^2/m + L'^2) T / b1^2)
/// ```
pub fn bound_constant(inp: &BoundInputs) -> Result<f64> {
    inp.validate()?;
    let t = inp.rounds as f64;
    let m = inp.window as f64;
    let k = &inp.constants;
    let drift = 4.0 * k.bound * t / (inp.eta * m);
    let coeff = (inp.eta * k.smoothness + 4.0 * inp.sigma / m.sqrt()) / 2.0;
    let log_arg = 1.0
        + 2.0 * (inp.sigma * inp.sigma / m + k.lipschitz * k.lipschitz) * t / (inp.b1 * inp.b1);
    Ok(drift + coeff * log_arg.ln())
}

/// High-probability upper bound on the local regret:
///
/// ```text
/// R <= 48 C^2 / delta^2 + 8 b1 C / delta + 8 sigma C sqrt(T) / (delta^{3/2} sqrt(m))
/// ```
pub fn regret_bound(inp: &BoundInputs) -> Result<f64> {
    let c = bound_constant(inp)?;
    let t = inp.rounds as f64;
    let m = inp.window as f64;
    let d = inp.delta;
    Ok(48.0 * c * c / (d * d)
        + 8.0 * inp.b1 * c / d
        + 8.0 * inp.sigma * c * t.sqrt() / (d.powf(1.5) * m.sqrt()))
}

/// Result of the window-estimator check: unbiasedness and variance reduction
/// of the stochastic window gradient at a fixed point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub window: usize,
    pub draws: usize,
    pub sigma: f64,
    /// Largest per-coordinate deviation of the empirical mean from the exact
    /// window gradient.
    pub max_mean_deviation: f64,
    /// `4 (sigma/sqrt(m)) / sqrt(draws)`.
    pub mean_tolerance: f64,
    /// Empirical `E ||G - grad F||^2`.
    pub noise_second_moment: f64,
    /// `1.1 sigma^2 / m`.
    pub variance_bound: f64,
    pub unbiased: bool,
    pub variance_ok: bool,
}

impl EstimatorReport {
    pub fn pass(&self) -> bool {
        self.unbiased && self.variance_ok
    }
}

/// Draws the stochastic window gradient `draws` times at `w` and compares its
/// empirical mean and variance with the exact window gradient.
pub fn check_estimator(
    buffer: &mut WindowBuffer,
    w: &Array1<f64>,
    draws: usize,
) -> Result<EstimatorReport> {
    ensure!(draws >= 2, "need at least two draws, got {draws}");
    let truth = buffer.true_grad(w)?;
    let sigma = buffer.max_sigma();
    let m = buffer.window();

    let mut mean = Array1::<f64>::zeros(w.len());
    let mut second = 0.0;
    for _ in 0..draws {
        let g = buffer.stoch_grad(w)?;
        second += norm_sq(&(&g - &truth));
        mean += &g;
    }
    mean /= draws as f64;
    second /= draws as f64;

    let max_dev = (&mean - &truth)
        .iter()
        .map(|x| x.abs())
        .fold(0.0, f64::max);
    let mean_tol = 4.0 * (sigma / (m as f64).sqrt()) / (draws as f64).sqrt();
    let var_bound = 1.1 * sigma * sigma / m as f64;
    Ok(EstimatorReport {
        window: m,
        draws,
        sigma,
        max_mean_deviation: max_dev,
        mean_tolerance: mean_tol,
        noise_second_moment: second,
        variance_bound: var_bound,
        // a zero-noise window is exact, which counts as unbiased
        unbiased: max_dev <= mean_tol || sigma == 0.0,
        variance_ok: second <= var_bound || sigma == 0.0,
    })
}

/// Seed-averaged telescoped descent sum against its `4 M T / m` budget.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DescentReport {
    pub rounds: usize,
    pub window: usize,
    pub loss_bound: f64,
    /// Telescoped sum per seed: `sum_t F_{t,m}(w_t) - F_{t,m}(w_{t+1})`.
    pub per_seed: Vec<f64>,
    pub mean: f64,
    pub std_error: f64,
    /// `4 M T / m`.
    pub budget: f64,
    pub within_budget: bool,
}

/// Computes the telescoped descent sum of each trace and checks the
/// seed-averaged value against `4 M T / m`.
pub fn descent_report(
    traces: &[&[RoundRecord]],
    loss_bound: f64,
    window: usize,
) -> Result<DescentReport> {
    ensure!(!traces.is_empty(), "need at least one trace");
    ensure!(window >= 1, "window must be >= 1");
    ensure!(
        loss_bound.is_finite() && loss_bound >= 0.0,
        "loss bound must be finite and nonnegative, got {loss_bound}"
    );
    let rounds = traces[0].len();
    ensure!(rounds >= 1, "traces must be nonempty");
    let mut per_seed = Vec::with_capacity(traces.len());
    for trace in traces {
        if trace.len() != rounds {
            return Err(Error::BadInput(format!(
                "trace length mismatch: {} vs {}",
                trace.len(),
                rounds
            )));
        }
        let mut sum = 0.0;
        for row in *trace {
            let step = row.obs.window_value - row.obs.window_value_next;
            if !step.is_finite() {
                return Err(Error::BadInput(
                    "trace has non-finite window values".into(),
                ));
            }
            sum += step;
        }
        per_seed.push(sum);
    }
    let n = per_seed.len() as f64;
    let mean = per_seed.iter().sum::<f64>() / n;
    let std_error = if per_seed.len() > 1 {
        let var = per_seed.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    let budget = 4.0 * loss_bound * rounds as f64 / window as f64;
    Ok(DescentReport {
        rounds,
        window,
        loss_bound,
        mean,
        std_error,
        budget,
        within_budget: mean <= budget,
        per_seed,
    })
}

/// Nonincreasing weight functions with closed-form integrals, used by the
/// sum-versus-integral comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecreasingFn {
    /// `h(x) = 1/x`
    Reciprocal,
    /// `h(x) = 1/sqrt(x)`
    InverseSqrt,
}

impl DecreasingFn {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            DecreasingFn::Reciprocal => 1.0 / x,
            DecreasingFn::InverseSqrt => 1.0 / x.sqrt(),
        }
    }

    /// Exact integral over `[lo, hi]`.
    pub fn integral(&self, lo: f64, hi: f64) -> f64 {
        match self {
            DecreasingFn::Reciprocal => (hi / lo).ln(),
            DecreasingFn::InverseSqrt => 2.0 * (hi.sqrt() - lo.sqrt()),
        }
    }
}

/// Compares `sum_t a_t h(a_0 + sum_{i<=t} a_i)` against
/// `integral of h over [a_0, a_0 + sum a]` and returns `(lhs, rhs)`;
/// for nonincreasing `h` the left side never exceeds the right.
pub fn sum_integral_bound(h: DecreasingFn, a0: f64, weights: &[f64]) -> Result<(f64, f64)> {
    ensure!(
        a0.is_finite() && a0 > 0.0,
        "a0 must be finite and positive, got {a0}"
    );
    for (i, a) in weights.iter().enumerate() {
        ensure!(
            a.is_finite() && *a >= 0.0,
            "weights must be finite and nonnegative, got a[{i}] = {a}"
        );
    }
    let mut partial = a0;
    let mut lhs = 0.0;
    for &a in weights {
        partial += a;
        lhs += a * h.eval(partial);
    }
    let rhs = h.integral(a0, partial);
    Ok((lhs, rhs))
}
