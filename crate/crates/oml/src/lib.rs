//! Online meta-learning on non-convex task streams.
//!
//! `oml` implements the full loop of a continual learner that carries a
//! shared parameter vector across a stream of tasks: each round it adapts to
//! the new task with one inner gradient step, suffers the adapted test loss,
//! and updates the shared iterate with a scalar-accumulator adaptive step
//! driven by a sliding-window average of stochastic gradients. Because the
//! losses are non-convex, progress is measured by *local regret* — the
//! cumulative squared gradient norm of the window-smoothed objective — and
//! the crate ships the machinery to compute the matching high-probability
//! regret bound and to check its supporting facts empirically.
//!
//! The pieces:
//!
//! * [`task`] — synthetic task families (quadratic bowls, sine phase
//!   regression) with closed-form losses, gradients, Hessian-vector
//!   products, and certified constants.
//! * [`adapter`] — the one-step inner adapter and the adapted loss with its
//!   exact gradient.
//! * [`oracle`] — seeded stochastic gradient oracles (unbiased,
//!   variance-bounded, mutually independent).
//! * [`window`] — the sliding window with zero padding and fixed divisor.
//! * [`optimizer`] — the scalar-accumulator adaptive step.
//! * [`analysis`] — regret ledger, bound evaluation, and the estimator /
//!   descent / integral checkers.
//! * [`baselines`] — per-round retraining baselines (train-from-scratch and
//!   train-on-everything).
//! * [`stream`] / [`harness`] — reproducible stream generation and the
//!   experiment runner behind the `oml` binary.
//!
//! The long-form guide lives in [`guide`] (also rendered by `mdbook` from
//! `book/`); its code snippets double as doc-tests.

pub mod adapter;
pub mod analysis;
pub mod baselines;
pub mod error;
pub mod harness;
pub mod optimizer;
pub mod oracle;
pub mod stream;
pub mod task;
pub mod window;

pub use adapter::{meta_constants, AdapterConfig, InnerMode, MetaConstants};
pub use analysis::{bound_constant, regret_bound, BoundInputs, RegretLedger};
pub use error::{Error, Result};
pub use harness::{run_experiment, run_single, ExperimentConfig};
pub use optimizer::AdaGradNorm;
pub use oracle::{GradientOracle, OracleTarget};
pub use stream::{generate_stream, StreamConfig, StreamPattern};
pub use task::{make_task, LossConstants, Side, TaskFamily, TaskSpec};
pub use window::WindowBuffer;

/// The user guide, chapter by chapter. The same Markdown builds the `mdbook`
/// under `book/`; keeping it in the crate makes every snippet a doc-test.
pub mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/tasks.md")]
    pub mod tasks {}
    #[doc = include_str!("../../../book/src/adaptation.md")]
    pub mod adaptation {}
    #[doc = include_str!("../../../book/src/smoothing.md")]
    pub mod smoothing {}
    #[doc = include_str!("../../../book/src/optimizer.md")]
    pub mod optimizer {}
    #[doc = include_str!("../../../book/src/regret.md")]
    pub mod regret {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    pub mod baselines {}
    #[doc = include_str!("../../../book/src/harness.md")]
    pub mod harness {}
}
