use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use oml::adapter::MetaConstants;
use oml::analysis::{self, BoundInputs};
use oml::baselines::BaselineKind;
use oml::error::Error;
use oml::harness::{self, BaselineSpec, ExperimentConfig, LemmaCheckConfig};
use oml::stream::StreamPattern;
use oml::task::TaskFamily;

/// Online meta-learning on synthetic non-convex task streams: run the
/// adaptive outer loop, trace window-smoothed local regret, and check the
/// accompanying bounds.
#[derive(Parser)]
#[command(name = "oml", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment and write streams, traces, and summaries.
    Run(Box<RunArgs>),
    /// Aggregate per-seed traces from method directories into one table.
    Compare(CompareArgs),
    /// Evaluate the regret bound, or re-check a finished run against it.
    CheckBounds(CheckBoundsArgs),
    /// Run the estimator, descent-sum, and sum-integral checks.
    CheckLemmas(CheckLemmasArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML config file; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Horizon T.
    #[arg(long)]
    rounds: Option<usize>,
    /// Window size m (default: ceil(T/4)).
    #[arg(long)]
    window: Option<usize>,
    /// Inner adaptation step size.
    #[arg(long)]
    alpha: Option<f64>,
    /// Outer step scale.
    #[arg(long)]
    eta: Option<f64>,
    /// Initial accumulator.
    #[arg(long)]
    b1: Option<f64>,
    /// Per-oracle noise scale.
    #[arg(long)]
    sigma: Option<f64>,
    /// Failure probability of the bound.
    #[arg(long)]
    delta: Option<f64>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Comma-separated initial iterate (default: zeros).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    w_init: Option<Vec<f64>>,
    /// Output directory.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Task family: quadratic-bowl | sine-regression.
    #[arg(long)]
    family: Option<String>,
    /// Parameter dimension d.
    #[arg(long)]
    dim: Option<usize>,
    /// Radius of the ball the constants are certified on.
    #[arg(long)]
    radius: Option<f64>,
    /// Stream pattern: independent | clustered | antipodal.
    #[arg(long)]
    pattern: Option<String>,
    /// Center scale for independent streams.
    #[arg(long)]
    scale: Option<f64>,
    /// Base scale for clustered streams.
    #[arg(long)]
    base_scale: Option<f64>,
    /// Scatter around the base for clustered streams.
    #[arg(long)]
    spread: Option<f64>,
    /// Train/test separation (clustered and antipodal streams).
    #[arg(long)]
    train_shift: Option<f64>,
    /// Center magnitude for antipodal streams.
    #[arg(long)]
    magnitude: Option<f64>,
    /// Baselines to run alongside: comma-separated tfs,toe.
    #[arg(long, value_delimiter = ',')]
    baselines: Option<Vec<String>>,
    /// Baseline inner gradient steps.
    #[arg(long)]
    inner_steps: Option<usize>,
    /// Baseline step size (default: 0.5 / max stream smoothness).
    #[arg(long)]
    step_size: Option<f64>,
    /// Cap on past tasks in the pooled baseline mixture.
    #[arg(long)]
    buffer_cap: Option<usize>,
}

#[derive(Args)]
struct CompareArgs {
    /// Directories holding per-seed trace_*.csv files, one method each.
    #[arg(required = true)]
    dirs: Vec<PathBuf>,
    /// Write the CSV table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckBoundsArgs {
    /// Finished run directory (reads summary.jsonl).
    #[arg(long)]
    dir: Option<PathBuf>,
    /// Horizon T (standalone evaluation).
    #[arg(long)]
    rounds: Option<usize>,
    /// Window size m.
    #[arg(long)]
    window: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    #[arg(long, default_value_t = 1.0)]
    b1: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    /// Bound M on the adapted loss.
    #[arg(long)]
    loss_bound: Option<f64>,
    /// Lipschitz constant of the adapted loss.
    #[arg(long)]
    lipschitz: Option<f64>,
    /// Smoothness of the adapted loss.
    #[arg(long)]
    smoothness: Option<f64>,
}

#[derive(Args)]
struct CheckLemmasArgs {
    /// Monte-Carlo draws for the estimator check.
    #[arg(long, default_value_t = 10_000)]
    draws: usize,
    /// Window sizes for the estimator check.
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 5, 25])]
    windows: Vec<usize>,
    /// Oracle noise scale for the estimator check.
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Horizon of the descent-sum experiment.
    #[arg(long, default_value_t = 200)]
    rounds: usize,
    /// Window of the descent-sum experiment.
    #[arg(long, default_value_t = 50)]
    window: usize,
    /// Seeds averaged in the descent-sum experiment.
    #[arg(long, default_value_t = 20)]
    seeds: usize,
    /// Random weight sequences for the sum-integral check.
    #[arg(long, default_value_t = 100)]
    sequences: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_family(s: &str) -> Result<TaskFamily, Error> {
    match s {
        "quadratic-bowl" | "quadratic" => Ok(TaskFamily::QuadraticBowl),
        "sine-regression" | "sine" => Ok(TaskFamily::SineRegression),
        other => Err(Error::InvalidConfig(format!(
            "unknown family {other:?} (expected quadratic-bowl or sine-regression)"
        ))),
    }
}

fn parse_baseline(s: &str) -> Result<BaselineKind, Error> {
    match s {
        "tfs" => Ok(BaselineKind::Tfs),
        "toe" => Ok(BaselineKind::Toe),
        other => Err(Error::InvalidConfig(format!(
            "unknown baseline {other:?} (expected tfs or toe)"
        ))),
    }
}

fn build_run_config(args: &RunArgs) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_toml(&std::fs::read_to_string(path)?)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = args.rounds {
        cfg.rounds = v;
    }
    if let Some(v) = args.window {
        cfg.window = Some(v);
    }
    if let Some(v) = args.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = args.eta {
        cfg.eta = v;
    }
    if let Some(v) = args.b1 {
        cfg.b1 = v;
    }
    if let Some(v) = args.sigma {
        cfg.sigma = v;
    }
    if let Some(v) = args.delta {
        cfg.delta = v;
    }
    if let Some(v) = &args.seeds {
        cfg.seeds = v.clone();
    }
    if let Some(v) = &args.w_init {
        cfg.w_init = Some(v.clone());
    }
    if let Some(v) = &args.output {
        cfg.output_dir = v.clone();
    }
    if let Some(v) = &args.family {
        cfg.stream.family = parse_family(v)?;
    }
    if let Some(v) = args.dim {
        cfg.stream.dim = v;
    }
    if let Some(v) = args.radius {
        cfg.stream.domain_radius = v;
    }
    if let Some(kind) = &args.pattern {
        cfg.stream.pattern = match kind.as_str() {
            "independent" => StreamPattern::Independent { scale: 3.0 },
            "clustered" => StreamPattern::Clustered {
                base_scale: 3.0,
                spread: 0.5,
                train_shift: 0.0,
            },
            "antipodal" => StreamPattern::Antipodal {
                magnitude: 2.0,
                train_shift: 0.0,
            },
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown pattern {other:?} (expected independent, clustered, or antipodal)"
                )))
            }
        };
    }
    apply_pattern_flags(&mut cfg.stream.pattern, args)?;

    if let Some(kinds) = &args.baselines {
        cfg.baselines = kinds
            .iter()
            .map(|k| {
                Ok(BaselineSpec {
                    kind: parse_baseline(k)?,
                    inner_steps: args.inner_steps.unwrap_or(100),
                    step_size: args.step_size,
                    toe_buffer_cap: args.buffer_cap,
                })
            })
            .collect::<Result<_, Error>>()?;
    }
    Ok(cfg)
}

fn apply_pattern_flags(pattern: &mut StreamPattern, args: &RunArgs) -> Result<(), Error> {
    let reject = |flag: &str, kind: &str| {
        Err(Error::InvalidConfig(format!(
            "--{flag} does not apply to the {kind} pattern"
        )))
    };
    match pattern {
        StreamPattern::Independent { scale } => {
            if let Some(v) = args.scale {
                *scale = v;
            }
            if args.base_scale.is_some() || args.spread.is_some() {
                return reject("base-scale/--spread", "independent");
            }
            if args.magnitude.is_some() {
                return reject("magnitude", "independent");
            }
            if args.train_shift.is_some() {
                return reject("train-shift", "independent");
            }
        }
        StreamPattern::Clustered {
            base_scale,
            spread,
            train_shift,
        } => {
            if let Some(v) = args.base_scale {
                *base_scale = v;
            }
            if let Some(v) = args.spread {
                *spread = v;
            }
            if let Some(v) = args.train_shift {
                *train_shift = v;
            }
            if args.scale.is_some() {
                return reject("scale", "clustered");
            }
            if args.magnitude.is_some() {
                return reject("magnitude", "clustered");
            }
        }
        StreamPattern::Antipodal {
            magnitude,
            train_shift,
        } => {
            if let Some(v) = args.magnitude {
                *magnitude = v;
            }
            if let Some(v) = args.train_shift {
                *train_shift = v;
            }
            if args.scale.is_some() || args.base_scale.is_some() || args.spread.is_some() {
                return reject("scale/--base-scale/--spread", "antipodal");
            }
        }
    }
    Ok(())
}

fn cmd_run(args: &RunArgs) -> Result<(), Error> {
    let cfg = build_run_config(args)?;
    let outcome = harness::run_experiment(&cfg)?;
    for s in &outcome.summaries {
        println!(
            "seed {}: regret {:.6} | bound {:.6e} ({}) | descent {:.6} <= {:.6} | domain flags {}",
            s.seed,
            s.regret,
            s.regret_bound,
            if s.bound_satisfied { "ok" } else { "VIOLATED" },
            s.descent_sum,
            s.descent_budget,
            s.domain_violations
        );
    }
    println!("artifacts in {}", outcome.output_dir.display());
    Ok(())
}

fn cmd_compare(args: &CompareArgs) -> Result<(), Error> {
    let table = harness::compare(&args.dirs)?;
    let csv = table.to_csv();
    match &args.out {
        Some(path) => std::fs::write(path, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_check_bounds(args: &CheckBoundsArgs) -> Result<bool, Error> {
    if let Some(dir) = &args.dir {
        let check = harness::check_bounds(dir)?;
        for row in &check.rows {
            println!(
                "seed {}: regret {:.6} {} bound {:.6e}",
                row.seed,
                row.regret,
                if row.satisfied { "<=" } else { ">" },
                row.bound
            );
        }
        let violations = check.rows.iter().filter(|r| !r.satisfied).count();
        println!(
            "violations: {}/{} (fraction {:.3} vs delta {})",
            violations,
            check.rows.len(),
            check.violation_fraction,
            check.delta
        );
        return Ok(check.pass());
    }

    let missing = |flag: &str| Error::InvalidConfig(format!("--{flag} is required without --dir"));
    let inputs = BoundInputs {
        rounds: args.rounds.ok_or_else(|| missing("rounds"))?,
        window: args.window.ok_or_else(|| missing("window"))?,
        eta: args.eta,
        b1: args.b1,
        delta: args.delta,
        sigma: args.sigma,
        constants: MetaConstants {
            bound: args.loss_bound.ok_or_else(|| missing("loss-bound"))?,
            lipschitz: args.lipschitz.ok_or_else(|| missing("lipschitz"))?,
            smoothness: args.smoothness.ok_or_else(|| missing("smoothness"))?,
        },
    };
    let c = analysis::bound_constant(&inputs)?;
    let bound = analysis::regret_bound(&inputs)?;
    println!("C = {c:.6}");
    println!("regret bound (prob 1-{}) = {bound:.6}", inputs.delta);
    Ok(true)
}

fn cmd_check_lemmas(args: &CheckLemmasArgs) -> Result<bool, Error> {
    let cfg = LemmaCheckConfig {
        draws: args.draws,
        windows: args.windows.clone(),
        estimator_sigma: args.sigma,
        rounds: args.rounds,
        window: args.window,
        seed_count: args.seeds,
        sequences: args.sequences,
        seed: args.seed,
    };
    let checks = harness::lemma_checks(&cfg)?;
    for e in &checks.estimator {
        println!(
            "estimator m={}: {} (mean dev {:.3e} <= {:.3e}; E||G-gradF||^2 {:.4} <= {:.4})",
            e.window,
            if e.pass() { "PASS" } else { "FAIL" },
            e.max_mean_deviation,
            e.mean_tolerance,
            e.noise_second_moment,
            e.variance_bound
        );
    }
    let d = &checks.descent;
    println!(
        "descent sum: {} (mean {:.4} +- {:.4} over {} seeds <= budget {:.4})",
        if d.within_budget { "PASS" } else { "FAIL" },
        d.mean,
        d.std_error,
        d.per_seed.len(),
        d.budget
    );
    println!(
        "sum-integral: {} ({} sequences, worst margin {:.4})",
        if checks.integral_ok { "PASS" } else { "FAIL" },
        checks.integral_sequences,
        checks.integral_worst_margin
    );
    Ok(checks.pass())
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::InvalidConfig(_)
        | Error::InvalidParameter(_)
        | Error::TomlDe(_)
        | Error::BadInput(_) => 2,
        Error::NonFinite(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args).map(|()| true),
        Command::Compare(args) => cmd_compare(args).map(|()| true),
        Command::CheckBounds(args) => cmd_check_bounds(args),
        Command::CheckLemmas(args) => cmd_check_lemmas(args),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
