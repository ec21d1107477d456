//! Per-round retraining baselines.
//!
//! Both baselines start every round from a fresh zero iterate and run plain
//! gradient descent with a fixed step:
//!
//! * **Train from scratch** minimizes only the current task's train loss.
//! * **Train on everything** minimizes the uniform mixture of all past
//!   tasks' train and test losses plus the current train loss.
//!
//! Each round reports the current task's test loss at the trained point.
//! Pooling conflicting tasks drags the train-on-everything iterate toward a
//! compromise point, which is how negative transfer shows up in the traces.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::task::{Side, TaskSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    /// Train from scratch on the current task's train data only.
    Tfs,
    /// Train on everything seen so far plus the current train data.
    Toe,
}

impl std::fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BaselineKind::Tfs => write!(f, "tfs"),
            BaselineKind::Toe => write!(f, "toe"),
        }
    }
}

/// Inner-solver settings for a baseline run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub kind: BaselineKind,
    pub inner_steps: usize,
    pub step_size: f64,
    /// Caps how many past tasks the mixture keeps (most recent first);
    /// `None` keeps all of them.
    pub toe_buffer_cap: Option<usize>,
}

impl BaselineConfig {
    pub fn new(kind: BaselineKind, inner_steps: usize, step_size: f64) -> Result<Self> {
        ensure!(inner_steps >= 1, "inner_steps must be >= 1");
        ensure!(
            step_size.is_finite() && step_size > 0.0,
            "step size must be finite and positive, got {step_size}"
        );
        Ok(BaselineConfig {
            kind,
            inner_steps,
            step_size,
            toe_buffer_cap: None,
        })
    }

    pub fn with_buffer_cap(mut self, cap: usize) -> Result<Self> {
        ensure!(cap >= 1, "buffer cap must be >= 1");
        self.toe_buffer_cap = Some(cap);
        Ok(self)
    }
}

/// Runs a baseline over the stream and returns the per-round test loss of
/// the current task at the retrained point.
pub fn run_baseline(stream: &[TaskSpec], cfg: &BaselineConfig) -> Result<Vec<f64>> {
    ensure!(!stream.is_empty(), "stream must be nonempty");
    ensure!(cfg.inner_steps >= 1, "inner_steps must be >= 1");
    ensure!(
        cfg.step_size.is_finite() && cfg.step_size > 0.0,
        "step size must be finite and positive, got {}",
        cfg.step_size
    );
    let dim = stream[0].dim;
    ensure!(
        stream.iter().all(|t| t.dim == dim),
        "stream tasks must share one dimension"
    );

    let mut losses = Vec::with_capacity(stream.len());
    for (i, current) in stream.iter().enumerate() {
        // components of this round's training objective
        let mut components: Vec<(&TaskSpec, Side)> = Vec::new();
        if cfg.kind == BaselineKind::Toe {
            let start = match cfg.toe_buffer_cap {
                Some(cap) => i.saturating_sub(cap),
                None => 0,
            };
            for past in &stream[start..i] {
                components.push((past, Side::Train));
                components.push((past, Side::Test));
            }
        }
        components.push((current, Side::Train));

        let mut w = Array1::<f64>::zeros(dim);
        let n = components.len() as f64;
        for _ in 0..cfg.inner_steps {
            let mut g = Array1::<f64>::zeros(dim);
            for (task, side) in &components {
                g += &task.true_grad(*side, &w);
            }
            w.scaled_add(-cfg.step_size / n, &g);
        }
        losses.push(current.true_loss(Side::Test, &w));
    }
    Ok(losses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::norm_sq;
    use ndarray::array;

    fn gd_config(kind: BaselineKind) -> BaselineConfig {
        // step 0.5/beta with beta = 1 for the quadratic family
        BaselineConfig::new(kind, 100, 0.5).unwrap()
    }

    #[test]
    fn scratch_training_solves_each_task() {
        let stream: Vec<TaskSpec> = (0..5)
            .map(|i| TaskSpec::quadratic(array![i as f64, -(i as f64)], 10.0).unwrap())
            .collect();
        let losses = run_baseline(&stream, &gd_config(BaselineKind::Tfs)).unwrap();
        for l in losses {
            assert!(l < 1e-12, "residual test loss {l}");
        }
    }

    #[test]
    fn scratch_training_pays_the_train_test_gap() {
        let train = array![0.0, 0.0];
        let test = array![2.0, 0.0];
        let task = TaskSpec::quadratic_shifted(train, test.clone(), 10.0).unwrap();
        let losses = run_baseline(&[task], &gd_config(BaselineKind::Tfs)).unwrap();
        // minimizer of the train loss is the train center
        assert!((losses[0] - 0.5 * norm_sq(&test)).abs() < 1e-10);
    }

    #[test]
    fn pooled_training_matches_scratch_on_identical_tasks() {
        let stream: Vec<TaskSpec> = (0..6)
            .map(|_| TaskSpec::quadratic(array![1.0, 2.0], 10.0).unwrap())
            .collect();
        let tfs = run_baseline(&stream, &gd_config(BaselineKind::Tfs)).unwrap();
        let toe = run_baseline(&stream, &gd_config(BaselineKind::Toe)).unwrap();
        for (a, b) in tfs.iter().zip(toe.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn pooled_training_suffers_on_antipodal_tasks() {
        let c = array![2.0, 0.0];
        let stream: Vec<TaskSpec> = (0..20)
            .map(|i| {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                TaskSpec::quadratic(sign * &c, 10.0).unwrap()
            })
            .collect();
        let tfs = run_baseline(&stream, &gd_config(BaselineKind::Tfs)).unwrap();
        let toe = run_baseline(&stream, &gd_config(BaselineKind::Toe)).unwrap();

        // the pooled minimizer sits near the midpoint, so each task's test
        // loss approaches ||c||^2 / 2 while scratch training drives it to 0
        let tail_toe: f64 = toe[10..].iter().sum::<f64>() / 10.0;
        let tail_tfs: f64 = tfs[10..].iter().sum::<f64>() / 10.0;
        assert!(tail_tfs < 1e-10);
        assert!((tail_toe - 0.5 * norm_sq(&c)).abs() < 0.5);
        assert!(tail_toe >= tail_tfs);
    }

    #[test]
    fn buffer_cap_limits_the_mixture() {
        let stream: Vec<TaskSpec> = (0..10)
            .map(|i| TaskSpec::quadratic(array![i as f64, 0.0], 20.0).unwrap())
            .collect();
        let capped = BaselineConfig::new(BaselineKind::Toe, 100, 0.5)
            .unwrap()
            .with_buffer_cap(2)
            .unwrap();
        let uncapped = gd_config(BaselineKind::Toe);
        let a = run_baseline(&stream, &capped).unwrap();
        let b = run_baseline(&stream, &uncapped).unwrap();
        // with drifting centers, restricting the mixture to recent tasks
        // tracks the current task better
        assert!(a[9] < b[9]);
    }

    #[test]
    fn bad_configs_are_rejected() {
        assert!(BaselineConfig::new(BaselineKind::Tfs, 0, 0.5).is_err());
        assert!(BaselineConfig::new(BaselineKind::Tfs, 10, 0.0).is_err());
        let cfg = gd_config(BaselineKind::Tfs);
        assert!(run_baseline(&[], &cfg).is_err());
    }
}
