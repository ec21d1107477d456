//! Experiment runner tying the pieces together.
//!
//! One run fixes a `(config, seed)` pair and is fully deterministic: the
//! seed pins the task stream, every oracle's noise stream, and therefore the
//! whole trajectory. Artifacts land in the configured output directory:
//!
//! ```text
//! out/
//!   config.toml                  resolved configuration echo
//!   summary.jsonl                one summary object per seed
//!   streams/stream_<seed>.jsonl  the task stream, replayable
//!   oml/trace_<seed>.csv         per-round trace of the meta-learner
//!   tfs/trace_<seed>.csv         baseline traces (when configured)
//!   toe/trace_<seed>.csv
//! ```
//!
//! Trace rows are written as they are produced, so a run that dies mid-way
//! (for example on a non-finite gradient) still leaves the completed prefix
//! on disk.

use std::fs;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adapter::{self, AdapterConfig, MetaConstants};
use crate::analysis::{
    self, BoundInputs, DecreasingFn, DescentReport, EstimatorReport, RegretLedger,
    RoundObservation, RoundRecord,
};
use crate::baselines::{self, BaselineConfig, BaselineKind};
use crate::error::{Error, Result};
use crate::optimizer::AdaGradNorm;
use crate::oracle::{GradientOracle, OracleTarget};
use crate::stream::{self, StreamConfig, StreamPattern, StreamTask};
use crate::task::{norm, TaskFamily};
use crate::window::WindowBuffer;

/// Columns of the per-round trace, in order.
pub const TRACE_HEADER: &str =
    "t,F_t_at_wt,F_t_at_wt1,grad_norm_sq,running_regret,b_next,eff_step,domain_flag,adapted_test_loss";

/// Baseline settings as they appear in the experiment config. The step size
/// defaults to `0.5 / beta` with `beta` the largest smoothness constant of
/// the generated stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineSpec {
    pub kind: BaselineKind,
    #[serde(default = "default_inner_steps")]
    pub inner_steps: usize,
    #[serde(default)]
    pub step_size: Option<f64>,
    #[serde(default)]
    pub toe_buffer_cap: Option<usize>,
}

fn default_inner_steps() -> usize {
    100
}

/// Full description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Horizon `T`.
    pub rounds: usize,
    /// Window size `m`; when absent, `ceil(T/4)`.
    pub window: Option<usize>,
    /// Inner adaptation step size.
    pub alpha: f64,
    pub eta: f64,
    pub b1: f64,
    /// Per-oracle noise scale.
    pub sigma: f64,
    /// Failure probability of the regret bound.
    pub delta: f64,
    pub seeds: Vec<u64>,
    /// Initial iterate; zero vector when absent.
    pub w_init: Option<Vec<f64>>,
    pub stream: StreamConfig,
    pub baselines: Vec<BaselineSpec>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            rounds: 200,
            window: None,
            alpha: 0.1,
            eta: 1.0,
            b1: 1.0,
            sigma: 0.5,
            delta: 0.1,
            seeds: vec![0],
            w_init: None,
            stream: StreamConfig {
                family: TaskFamily::QuadraticBowl,
                dim: 5,
                domain_radius: 10.0,
                pattern: StreamPattern::Clustered {
                    base_scale: 3.0,
                    spread: 0.5,
                    train_shift: 0.0,
                },
            },
            baselines: Vec::new(),
            output_dir: PathBuf::from("oml-out"),
        }
    }
}

impl ExperimentConfig {
    /// Effective window size.
    pub fn window_size(&self) -> usize {
        self.window.unwrap_or_else(|| self.rounds.div_ceil(4))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.rounds < 1 {
            return fail("rounds must be >= 1".into());
        }
        let m = self.window_size();
        if m < 1 || m > self.rounds {
            return fail(format!(
                "window must satisfy 1 <= m <= T, got m={m} T={}",
                self.rounds
            ));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return fail(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return fail(format!("eta must be positive, got {}", self.eta));
        }
        if !(self.b1.is_finite() && self.b1 > 0.0) {
            return fail(format!("b1 must be positive, got {}", self.b1));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return fail(format!("sigma must be nonnegative, got {}", self.sigma));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return fail(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if self.seeds.is_empty() {
            return fail("seeds must be nonempty".into());
        }
        if let Some(w) = &self.w_init {
            if w.len() != self.stream.dim {
                return fail(format!(
                    "w_init has dimension {}, stream has {}",
                    w.len(),
                    self.stream.dim
                ));
            }
            if !w.iter().all(|x| x.is_finite()) {
                return fail("w_init must be finite".into());
            }
        }
        for b in &self.baselines {
            if b.inner_steps < 1 {
                return fail("baseline inner_steps must be >= 1".into());
            }
            if let Some(s) = b.step_size {
                if !(s.is_finite() && s > 0.0) {
                    return fail(format!("baseline step size must be positive, got {s}"));
                }
            }
            if let Some(c) = b.toe_buffer_cap {
                if c < 1 {
                    return fail("baseline buffer cap must be >= 1".into());
                }
            }
        }
        self.stream
            .validate()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        Ok(())
    }

    /// A copy with the window pinned, ready to be echoed to disk.
    pub fn resolved(&self) -> Result<ExperimentConfig> {
        self.validate()?;
        let mut cfg = self.clone();
        cfg.window = Some(self.window_size());
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }
}

/// Per-seed result digest; one JSON object per line in `summary.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub rounds: usize,
    pub window: usize,
    pub eta: f64,
    pub b1: f64,
    pub sigma: f64,
    pub delta: f64,
    /// Cumulative squared window-gradient norms, `R_m(T)`.
    pub regret: f64,
    pub bound_constant: f64,
    pub regret_bound: f64,
    pub bound_satisfied: bool,
    /// Telescoped descent sum of the window objective.
    pub descent_sum: f64,
    /// `4 M T / m`.
    pub descent_budget: f64,
    pub descent_within_budget: bool,
    /// Worst-case adapted-loss constants over the stream.
    pub loss_bound: f64,
    pub lipschitz: f64,
    pub smoothness: f64,
    pub domain_violations: usize,
    /// Largest iterate norm seen anywhere in the run.
    pub max_iterate_norm: f64,
    pub final_iterate_norm: f64,
}

/// Everything one seed produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub seed: u64,
    pub stream: Vec<StreamTask>,
    pub records: Vec<RoundRecord>,
    pub summary: RunSummary,
}

/// Worst-case adapted-loss constants across a stream.
pub fn stream_meta_constants(stream: &[StreamTask], alpha: f64) -> Result<MetaConstants> {
    let mut out = MetaConstants {
        bound: 0.0,
        lipschitz: 0.0,
        smoothness: 0.0,
    };
    for entry in stream {
        let k = adapter::meta_constants(&entry.task.constants(), alpha)?;
        out.bound = out.bound.max(k.bound);
        out.lipschitz = out.lipschitz.max(k.lipschitz);
        out.smoothness = out.smoothness.max(k.smoothness);
    }
    Ok(out)
}

/// The outer loop for one seed over a pre-generated stream. Each produced
/// row is handed to `on_row` before the next round starts.
fn run_loop(
    cfg: &ExperimentConfig,
    seed: u64,
    stream: &[StreamTask],
    mut on_row: impl FnMut(&RoundRecord) -> Result<()>,
) -> Result<RunOutput> {
    let m = cfg.window_size();
    let adapter_cfg = AdapterConfig::exact(cfg.alpha)?;
    let constants = stream_meta_constants(stream, cfg.alpha)?;
    let radius = cfg.stream.domain_radius;

    let w0 = match &cfg.w_init {
        Some(w) => Array1::from_vec(w.clone()),
        None => Array1::zeros(cfg.stream.dim),
    };
    let mut opt = AdaGradNorm::new(w0, cfg.eta, cfg.b1)?;
    let mut buffer = WindowBuffer::new(m)?;
    let mut ledger = RegretLedger::new();
    let mut descent_sum = 0.0;
    let mut domain_violations = 0usize;
    let mut max_iterate_norm = norm(opt.iterate());

    for (idx, entry) in stream.iter().enumerate() {
        let t = idx + 1;
        let oracle = GradientOracle::new(
            entry.task.clone(),
            OracleTarget::Adapted { alpha: cfg.alpha },
            cfg.sigma,
            entry.oracle_seed,
        )?;
        buffer.push(oracle);

        let w_t = opt.iterate().clone();
        let window_grad = buffer.true_grad(&w_t)?;
        let grad_norm_sq = crate::task::norm_sq(&window_grad);
        let window_value = buffer.value(&w_t)?;
        let adapted_test_loss = adapter::meta_loss(&entry.task, &adapter_cfg, &w_t)?;
        if !(grad_norm_sq.is_finite()
            && window_value.is_finite()
            && adapted_test_loss.is_finite())
        {
            return Err(Error::NonFinite("window objective"));
        }
        let domain_flag = norm(&w_t) > radius;
        if domain_flag {
            domain_violations += 1;
        }

        let estimate = buffer.stoch_grad(&w_t)?;
        opt.step(&estimate)?;
        max_iterate_norm = max_iterate_norm.max(norm(opt.iterate()));
        let window_value_next = buffer.value(opt.iterate())?;
        descent_sum += window_value - window_value_next;
        if !window_value_next.is_finite() {
            return Err(Error::NonFinite("window objective"));
        }

        ledger.record(
            t,
            RoundObservation {
                grad_norm_sq,
                window_value,
                window_value_next,
                accumulator: opt.accumulator(),
                effective_step: opt.effective_step(),
                domain_flag,
                adapted_test_loss,
            },
        )?;
        on_row(ledger.rows().last().expect("row just recorded"))?;
    }

    let inputs = BoundInputs {
        rounds: cfg.rounds,
        window: m,
        eta: cfg.eta,
        b1: cfg.b1,
        delta: cfg.delta,
        sigma: cfg.sigma,
        constants,
    };
    let c = analysis::bound_constant(&inputs)?;
    let bound = analysis::regret_bound(&inputs)?;
    let regret = ledger.running_regret();
    let descent_budget = 4.0 * constants.bound * cfg.rounds as f64 / m as f64;

    let summary = RunSummary {
        seed,
        rounds: cfg.rounds,
        window: m,
        eta: cfg.eta,
        b1: cfg.b1,
        sigma: cfg.sigma,
        delta: cfg.delta,
        regret,
        bound_constant: c,
        regret_bound: bound,
        bound_satisfied: regret <= bound,
        descent_sum,
        descent_budget,
        descent_within_budget: descent_sum <= descent_budget,
        loss_bound: constants.bound,
        lipschitz: constants.lipschitz,
        smoothness: constants.smoothness,
        domain_violations,
        max_iterate_norm,
        final_iterate_norm: norm(opt.iterate()),
    };

    Ok(RunOutput {
        seed,
        stream: stream.to_vec(),
        records: ledger.rows().to_vec(),
        summary,
    })
}

/// Runs one seed in memory (stream generated from the seed, nothing written).
pub fn run_single(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutput> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stream = stream::generate_stream(&cfg.stream, cfg.rounds, &mut rng)?;
    run_loop(cfg, seed, &stream, |_| Ok(()))
}

fn format_row(row: &RoundRecord) -> String {
    let o = &row.obs;
    format!(
        "{},{},{},{},{},{},{},{},{}",
        row.round,
        o.window_value,
        o.window_value_next,
        o.grad_norm_sq,
        row.running_regret,
        o.accumulator,
        o.effective_step,
        o.domain_flag as u8,
        o.adapted_test_loss
    )
}

/// Writes a full trace file (header plus one row per round).
pub fn write_trace(path: &Path, records: &[RoundRecord]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{TRACE_HEADER}")?;
    for row in records {
        writeln!(out, "{}", format_row(row))?;
    }
    out.flush()?;
    Ok(())
}

fn parse_field<T: std::str::FromStr>(field: &str, name: &str, line: usize) -> Result<T> {
    field
        .parse()
        .map_err(|_| Error::BadInput(format!("trace line {line}: bad {name}: {field:?}")))
}

/// Reads a trace produced by [`write_trace`], validating the schema.
pub fn read_trace(path: &Path) -> Result<Vec<RoundRecord>> {
    let file = BufReader::new(File::open(path)?);
    let mut lines = file.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::BadInput("empty trace file".into()))??;
    if header.trim() != TRACE_HEADER {
        return Err(Error::BadInput(format!(
            "unexpected trace header: {header:?}"
        )));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(Error::BadInput(format!(
                "trace line {lineno}: expected 9 fields, got {}",
                fields.len()
            )));
        }
        let flag: u8 = parse_field(fields[7], "domain_flag", lineno)?;
        out.push(RoundRecord {
            round: parse_field(fields[0], "t", lineno)?,
            obs: RoundObservation {
                window_value: parse_field(fields[1], "F_t_at_wt", lineno)?,
                window_value_next: parse_field(fields[2], "F_t_at_wt1", lineno)?,
                grad_norm_sq: parse_field(fields[3], "grad_norm_sq", lineno)?,
                accumulator: parse_field(fields[5], "b_next", lineno)?,
                effective_step: parse_field(fields[6], "eff_step", lineno)?,
                domain_flag: flag != 0,
                adapted_test_loss: parse_field(fields[8], "adapted_test_loss", lineno)?,
            },
            running_regret: parse_field(fields[4], "running_regret", lineno)?,
        });
    }
    Ok(out)
}

fn write_baseline_trace(path: &Path, losses: &[f64]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "t,test_loss")?;
    for (i, l) in losses.iter().enumerate() {
        writeln!(out, "{},{}", i + 1, l)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads the per-round test-loss column from either a main trace
/// (`adapted_test_loss`) or a baseline trace (`test_loss`).
pub fn read_loss_column(path: &Path) -> Result<Vec<f64>> {
    let file = BufReader::new(File::open(path)?);
    let mut lines = file.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::BadInput("empty trace file".into()))??;
    let columns: Vec<&str> = header.trim().split(',').collect();
    let col = columns
        .iter()
        .position(|c| *c == "adapted_test_loss" || *c == "test_loss")
        .ok_or_else(|| {
            Error::BadInput(format!("no test-loss column in header {header:?}"))
        })?;
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns.len() {
            return Err(Error::BadInput(format!(
                "trace line {}: expected {} fields, got {}",
                i + 2,
                columns.len(),
                fields.len()
            )));
        }
        out.push(parse_field(fields[col], "test loss", i + 2)?);
    }
    Ok(out)
}

fn resolve_baseline(
    spec: &BaselineSpec,
    stream: &[StreamTask],
) -> Result<BaselineConfig> {
    let step = match spec.step_size {
        Some(s) => s,
        None => {
            let beta = stream
                .iter()
                .map(|e| e.task.constants().smoothness)
                .fold(0.0f64, f64::max);
            if beta <= 0.0 {
                return Err(Error::InvalidConfig(
                    "cannot derive a baseline step size from a flat stream".into(),
                ));
            }
            0.5 / beta
        }
    };
    let mut cfg = BaselineConfig::new(spec.kind, spec.inner_steps, step)?;
    if let Some(cap) = spec.toe_buffer_cap {
        cfg = cfg.with_buffer_cap(cap)?;
    }
    Ok(cfg)
}

/// Outcome of a full experiment: per-seed summaries plus the output root.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub output_dir: PathBuf,
    pub summaries: Vec<RunSummary>,
}

/// Runs every seed of the experiment and writes all artifacts.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let cfg = cfg.resolved()?;
    let root = &cfg.output_dir;
    fs::create_dir_all(root.join("streams"))?;
    fs::create_dir_all(root.join("oml"))?;
    for b in &cfg.baselines {
        fs::create_dir_all(root.join(b.kind.to_string()))?;
    }
    fs::write(root.join("config.toml"), cfg.to_toml()?)?;

    let mut summaries = Vec::with_capacity(cfg.seeds.len());
    let mut summary_file = BufWriter::new(File::create(root.join("summary.jsonl"))?);
    for &seed in &cfg.seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stream = stream::generate_stream(&cfg.stream, cfg.rounds, &mut rng)?;
        stream::write_stream(&root.join(format!("streams/stream_{seed}.jsonl")), &stream)?;

        let trace_path = root.join(format!("oml/trace_{seed}.csv"));
        let mut trace = BufWriter::new(File::create(&trace_path)?);
        writeln!(trace, "{TRACE_HEADER}")?;
        let run = run_loop(&cfg, seed, &stream, |row| {
            writeln!(trace, "{}", format_row(row))?;
            Ok(())
        });
        // keep whatever prefix completed, then surface the error
        trace.flush()?;
        let run = run?;

        for spec in &cfg.baselines {
            let bl_cfg = resolve_baseline(spec, &stream)?;
            let tasks: Vec<_> = stream.iter().map(|e| e.task.clone()).collect();
            let losses = baselines::run_baseline(&tasks, &bl_cfg)?;
            write_baseline_trace(
                &root.join(format!("{}/trace_{seed}.csv", spec.kind)),
                &losses,
            )?;
        }

        serde_json::to_writer(&mut summary_file, &run.summary)?;
        summary_file.write_all(b"\n")?;
        summaries.push(run.summary);
    }
    summary_file.flush()?;
    Ok(ExperimentOutcome {
        output_dir: root.clone(),
        summaries,
    })
}

/// Per-round mean and standard error of the test loss for several methods.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub labels: Vec<String>,
    pub rounds: usize,
    /// `means[method][t-1]`
    pub means: Vec<Vec<f64>>,
    pub stderrs: Vec<Vec<f64>>,
}

impl Comparison {
    /// Mean test loss of one method restricted to rounds `> warmup`.
    pub fn tail_mean(&self, method: usize, warmup: usize) -> f64 {
        let vals = &self.means[method][warmup.min(self.rounds)..];
        vals.iter().sum::<f64>() / vals.len().max(1) as f64
    }

    /// CSV rendering: per-method mean and stderr columns, then difference
    /// columns against the first method.
    pub fn to_csv(&self) -> String {
        let mut header = String::from("t");
        for label in &self.labels {
            header.push_str(&format!(",{label}_mean,{label}_stderr"));
        }
        for label in &self.labels[1..] {
            header.push_str(&format!(",{label}_minus_{}", self.labels[0]));
        }
        let mut out = header;
        out.push('\n');
        for t in 0..self.rounds {
            out.push_str(&format!("{}", t + 1));
            for i in 0..self.labels.len() {
                out.push_str(&format!(",{},{}", self.means[i][t], self.stderrs[i][t]));
            }
            for i in 1..self.labels.len() {
                out.push_str(&format!(",{}", self.means[i][t] - self.means[0][t]));
            }
            out.push('\n');
        }
        out
    }
}

/// Aggregates the per-seed traces found in each directory (files named
/// `trace_*.csv`) into per-round means and standard errors. All traces must
/// share the same horizon.
pub fn compare(dirs: &[PathBuf]) -> Result<Comparison> {
    if dirs.is_empty() {
        return Err(Error::BadInput("compare needs at least one directory".into()));
    }
    let mut labels: Vec<String> = Vec::new();
    let mut means = Vec::new();
    let mut stderrs = Vec::new();
    let mut rounds: Option<usize> = None;

    for dir in dirs {
        let mut files: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| Error::BadInput(format!("{}: {e}", dir.display())))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("trace_") && n.ends_with(".csv"))
            })
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Error::BadInput(format!(
                "no trace_*.csv files in {}",
                dir.display()
            )));
        }
        let mut per_seed: Vec<Vec<f64>> = Vec::with_capacity(files.len());
        for f in &files {
            let losses = read_loss_column(f)?;
            match rounds {
                None => rounds = Some(losses.len()),
                Some(t) if t != losses.len() => {
                    return Err(Error::BadInput(format!(
                        "trace length mismatch: {} has {} rounds, expected {t}",
                        f.display(),
                        losses.len()
                    )))
                }
                _ => {}
            }
            per_seed.push(losses);
        }
        let t = rounds.expect("set above");
        let n = per_seed.len() as f64;
        let mut mean = vec![0.0; t];
        let mut stderr = vec![0.0; t];
        for row in 0..t {
            let m = per_seed.iter().map(|s| s[row]).sum::<f64>() / n;
            mean[row] = m;
            if per_seed.len() > 1 {
                let var = per_seed
                    .iter()
                    .map(|s| (s[row] - m).powi(2))
                    .sum::<f64>()
                    / (n - 1.0);
                stderr[row] = (var / n).sqrt();
            }
        }
        means.push(mean);
        stderrs.push(stderr);

        let base = dir
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or("method")
            .to_string();
        let mut label = base.clone();
        let mut k = 2;
        while labels.contains(&label) {
            label = format!("{base}_{k}");
            k += 1;
        }
        labels.push(label);
    }

    Ok(Comparison {
        labels,
        rounds: rounds.expect("at least one dir"),
        means,
        stderrs,
    })
}

/// One seed's regret against the recomputed bound.
#[derive(Debug, Clone, Serialize)]
pub struct BoundCheckRow {
    pub seed: u64,
    pub regret: f64,
    pub bound: f64,
    pub satisfied: bool,
}

/// Result of re-checking a finished experiment against its regret bound.
#[derive(Debug, Clone, Serialize)]
pub struct BoundCheck {
    pub rows: Vec<BoundCheckRow>,
    pub violation_fraction: f64,
    pub delta: f64,
}

impl BoundCheck {
    /// The bound holds with probability `1 - delta`, so the empirical
    /// violation fraction should not exceed `delta`.
    pub fn pass(&self) -> bool {
        self.violation_fraction <= self.delta
    }
}

/// Reads `summary.jsonl` in a run directory and re-evaluates the bound from
/// the stored inputs.
pub fn check_bounds(dir: &Path) -> Result<BoundCheck> {
    let path = dir.join("summary.jsonl");
    let file = BufReader::new(File::open(&path).map_err(|e| {
        Error::BadInput(format!("{}: {e}", path.display()))
    })?);
    let mut rows = Vec::new();
    let mut delta = None;
    for line in file.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let summary: RunSummary = serde_json::from_str(&line)?;
        let inputs = BoundInputs {
            rounds: summary.rounds,
            window: summary.window,
            eta: summary.eta,
            b1: summary.b1,
            delta: summary.delta,
            sigma: summary.sigma,
            constants: MetaConstants {
                bound: summary.loss_bound,
                lipschitz: summary.lipschitz,
                smoothness: summary.smoothness,
            },
        };
        let bound = analysis::regret_bound(&inputs)?;
        delta.get_or_insert(summary.delta);
        rows.push(BoundCheckRow {
            seed: summary.seed,
            regret: summary.regret,
            bound,
            satisfied: summary.regret <= bound,
        });
    }
    if rows.is_empty() {
        return Err(Error::BadInput(format!(
            "{}: no summaries found",
            path.display()
        )));
    }
    let violations = rows.iter().filter(|r| !r.satisfied).count();
    Ok(BoundCheck {
        violation_fraction: violations as f64 / rows.len() as f64,
        rows,
        delta: delta.unwrap_or(0.0),
    })
}

/// Settings of the estimator/descent/integral check bundle.
#[derive(Debug, Clone)]
pub struct LemmaCheckConfig {
    /// Monte-Carlo draws for the estimator check.
    pub draws: usize,
    /// Window sizes to exercise.
    pub windows: Vec<usize>,
    /// Oracle noise scale for the estimator check.
    pub estimator_sigma: f64,
    /// Horizon of the descent-sum experiment.
    pub rounds: usize,
    /// Window of the descent-sum experiment.
    pub window: usize,
    /// Number of seeds averaged in the descent-sum experiment.
    pub seed_count: usize,
    /// Random nonincreasing-weight sequences for the integral comparison.
    pub sequences: usize,
    pub seed: u64,
}

impl Default for LemmaCheckConfig {
    fn default() -> Self {
        LemmaCheckConfig {
            draws: 10_000,
            windows: vec![1, 5, 25],
            estimator_sigma: 1.0,
            rounds: 200,
            window: 50,
            seed_count: 20,
            sequences: 100,
            seed: 0,
        }
    }
}

/// Bundled results of the three empirical checks.
#[derive(Debug, Clone)]
pub struct LemmaChecks {
    pub estimator: Vec<EstimatorReport>,
    pub descent: DescentReport,
    pub integral_sequences: usize,
    pub integral_ok: bool,
    /// Smallest observed `rhs - lhs` margin.
    pub integral_worst_margin: f64,
}

impl LemmaChecks {
    pub fn pass(&self) -> bool {
        self.estimator.iter().all(|e| e.pass())
            && self.descent.within_budget
            && self.integral_ok
    }
}

/// Runs the estimator, descent-sum, and sum-integral checks with the given
/// settings.
pub fn lemma_checks(cfg: &LemmaCheckConfig) -> Result<LemmaChecks> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let base = ExperimentConfig::default();

    // estimator: fixed point, fresh window per size
    let mut estimator = Vec::new();
    for &m in &cfg.windows {
        let stream = stream::generate_stream(&base.stream, m, &mut rng)?;
        let mut buffer = WindowBuffer::new(m)?;
        for entry in &stream {
            buffer.push(GradientOracle::new(
                entry.task.clone(),
                OracleTarget::Adapted { alpha: base.alpha },
                cfg.estimator_sigma,
                entry.oracle_seed,
            )?);
        }
        let w = Array1::zeros(base.stream.dim);
        estimator.push(analysis::check_estimator(&mut buffer, &w, cfg.draws)?);
    }

    // descent sum over seed-averaged runs of the default stream
    let mut exp = base.clone();
    exp.rounds = cfg.rounds;
    exp.window = Some(cfg.window);
    let mut traces = Vec::with_capacity(cfg.seed_count);
    let mut loss_bound = 0.0f64;
    for seed in 0..cfg.seed_count as u64 {
        let run = run_single(&exp, seed)?;
        loss_bound = loss_bound.max(run.summary.loss_bound);
        traces.push(run.records);
    }
    let views: Vec<&[RoundRecord]> = traces.iter().map(|t| t.as_slice()).collect();
    let descent = analysis::descent_report(&views, loss_bound, cfg.window)?;

    // sum-versus-integral on random nonnegative sequences
    let mut integral_ok = true;
    let mut worst = f64::INFINITY;
    for _ in 0..cfg.sequences {
        let len = rng.random_range(1..=50);
        let a0 = 0.1 + 9.9 * rng.random::<f64>();
        let weights: Vec<f64> = (0..len).map(|_| 5.0 * rng.random::<f64>()).collect();
        let (lhs, rhs) = analysis::sum_integral_bound(DecreasingFn::Reciprocal, a0, &weights)?;
        worst = worst.min(rhs - lhs);
        if lhs > rhs {
            integral_ok = false;
        }
    }

    Ok(LemmaChecks {
        estimator,
        descent,
        integral_sequences: cfg.sequences,
        integral_ok,
        integral_worst_margin: worst,
    })
}
