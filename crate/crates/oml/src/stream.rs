//! Task-stream generation and its on-disk record format.
//!
//! A stream is an ordered list of tasks plus one oracle seed per task, which
//! is all a run needs to be replayed exactly. Streams serialize to a
//! line-delimited format with one JSON record per task.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array1;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::task::{sample_in_ball, SineParams, TaskFamily, TaskParams, TaskSpec};

/// How task parameters evolve along the stream.
///
/// For the quadratic family the knobs act on bowl centers; for the sine
/// family they act on phases (amplitudes are drawn once per stream from the
/// family's generator range and shared, and `Independent::scale` is unused
/// since phases always come from the generator range).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StreamPattern {
    /// Every task drawn independently from the family generator, centers
    /// uniform in a ball of the given scale.
    Independent { scale: f64 },
    /// Tasks share structure: parameters scatter with the given spread
    /// around a base drawn once per stream. `train_shift` perturbs each
    /// task's train side away from its test side.
    Clustered {
        base_scale: f64,
        spread: f64,
        train_shift: f64,
    },
    /// Tasks alternate between two opposed parameter sets, the classic
    /// negative-transfer stress test.
    Antipodal { magnitude: f64, train_shift: f64 },
}

/// Generator settings for one stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamConfig {
    pub family: TaskFamily,
    pub dim: usize,
    pub domain_radius: f64,
    pub pattern: StreamPattern,
}

impl StreamConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.dim >= 1, "stream dimension must be >= 1");
        ensure!(
            self.domain_radius.is_finite() && self.domain_radius > 0.0,
            "domain radius must be finite and positive, got {}",
            self.domain_radius
        );
        let check_scale = |name: &str, v: f64| -> Result<()> {
            ensure!(
                v.is_finite() && v >= 0.0,
                "{name} must be finite and nonnegative, got {v}"
            );
            Ok(())
        };
        let check_within = |name: &str, v: f64| -> Result<()> {
            check_scale(name, v)?;
            if v > self.domain_radius {
                return Err(Error::InvalidParameter(format!(
                    "{name} {v} exceeds the domain radius"
                )));
            }
            Ok(())
        };
        match self.pattern {
            StreamPattern::Independent { scale } => {
                check_within("scale", scale)?;
            }
            StreamPattern::Clustered {
                base_scale,
                spread,
                train_shift,
            } => {
                check_within("base_scale", base_scale)?;
                check_scale("spread", spread)?;
                check_scale("train_shift", train_shift)?;
            }
            StreamPattern::Antipodal {
                magnitude,
                train_shift,
            } => {
                check_within("magnitude", magnitude)?;
                check_scale("train_shift", train_shift)?;
            }
        }
        Ok(())
    }
}

/// One stream entry: the task and the seed its gradient oracle will use.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamTask {
    pub task: TaskSpec,
    pub oracle_seed: u64,
}

fn gaussian_vec(dim: usize, std: f64, rng: &mut impl Rng) -> Array1<f64> {
    Array1::from_iter((0..dim).map(|_| {
        let z: f64 = StandardNormal.sample(rng);
        std * z
    }))
}

/// Rescales a center back onto the domain ball if the scatter pushed it out.
fn clip_to_ball(v: Array1<f64>, radius: f64) -> Array1<f64> {
    let n = crate::task::norm(&v);
    if n > radius {
        v * (radius / n)
    } else {
        v
    }
}

/// Draws a stream of `length` tasks. Oracle seeds are drawn from the same
/// generator, so a `(config, seed)` pair pins the entire run.
pub fn generate_stream(
    cfg: &StreamConfig,
    length: usize,
    rng: &mut impl Rng,
) -> Result<Vec<StreamTask>> {
    cfg.validate()?;
    ensure!(length >= 1, "stream length must be >= 1");
    let d = cfg.dim;
    let r = cfg.domain_radius;

    // per-stream bases
    let quad_base = match cfg.pattern {
        StreamPattern::Independent { .. } => Array1::zeros(d),
        StreamPattern::Clustered { base_scale, .. } => sample_in_ball(d, base_scale, rng),
        StreamPattern::Antipodal { magnitude, .. } => {
            let dir = sample_in_ball(d, 1.0, rng);
            let n = crate::task::norm(&dir);
            if n > 0.0 {
                dir * (magnitude / n)
            } else {
                let mut e = Array1::zeros(d);
                e[0] = magnitude;
                e
            }
        }
    };
    let sine_amplitudes =
        Array1::from_iter((0..d).map(|_| 0.1 + 4.9 * rng.random::<f64>()));
    let sine_base_phases =
        Array1::from_iter((0..d).map(|_| std::f64::consts::PI * rng.random::<f64>()));

    let mut out = Vec::with_capacity(length);
    for i in 0..length {
        let task = match cfg.family {
            TaskFamily::QuadraticBowl => {
                let (test_center, shift) = match cfg.pattern {
                    StreamPattern::Independent { scale } => (sample_in_ball(d, scale, rng), 0.0),
                    StreamPattern::Clustered {
                        spread,
                        train_shift,
                        ..
                    } => (
                        clip_to_ball(&quad_base + &gaussian_vec(d, spread, rng), r),
                        train_shift,
                    ),
                    StreamPattern::Antipodal { train_shift, .. } => {
                        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                        (sign * &quad_base, train_shift)
                    }
                };
                let train_center = if shift > 0.0 {
                    clip_to_ball(&test_center + &gaussian_vec(d, shift, rng), r)
                } else {
                    test_center.clone()
                };
                TaskSpec::new(
                    d,
                    r,
                    TaskParams::Quadratic {
                        train_center,
                        test_center,
                        data_std: 1.0,
                    },
                )?
            }
            TaskFamily::SineRegression => {
                let (test_phases, shift) = match cfg.pattern {
                    StreamPattern::Independent { .. } => (
                        Array1::from_iter(
                            (0..d).map(|_| std::f64::consts::PI * rng.random::<f64>()),
                        ),
                        0.0,
                    ),
                    StreamPattern::Clustered {
                        spread,
                        train_shift,
                        ..
                    } => (
                        &sine_base_phases + &gaussian_vec(d, spread, rng),
                        train_shift,
                    ),
                    StreamPattern::Antipodal { train_shift, .. } => {
                        let offset = if i % 2 == 0 { 0.0 } else { std::f64::consts::PI };
                        (sine_base_phases.mapv(|p| p + offset), train_shift)
                    }
                };
                let train_phases = if shift > 0.0 {
                    &test_phases + &gaussian_vec(d, shift, rng)
                } else {
                    test_phases.clone()
                };
                TaskSpec::new(
                    d,
                    r,
                    TaskParams::Sine {
                        train: SineParams {
                            amplitudes: sine_amplitudes.clone(),
                            phases: train_phases,
                        },
                        test: SineParams {
                            amplitudes: sine_amplitudes.clone(),
                            phases: test_phases,
                        },
                    },
                )?
            }
        };
        let oracle_seed: u64 = rng.random();
        out.push(StreamTask { task, oracle_seed });
    }
    Ok(out)
}

/// On-disk form of one stream entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct StreamRecord {
    family: TaskFamily,
    dim: usize,
    radius: f64,
    seed: u64,
    #[serde(flatten)]
    params: ParamsRecord,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum ParamsRecord {
    Quadratic {
        train_center: Vec<f64>,
        test_center: Vec<f64>,
        data_std: f64,
    },
    Sine {
        train_amplitudes: Vec<f64>,
        train_phases: Vec<f64>,
        test_amplitudes: Vec<f64>,
        test_phases: Vec<f64>,
    },
}

impl From<&StreamTask> for StreamRecord {
    fn from(entry: &StreamTask) -> Self {
        let t = &entry.task;
        let params = match &t.params {
            TaskParams::Quadratic {
                train_center,
                test_center,
                data_std,
            } => ParamsRecord::Quadratic {
                train_center: train_center.to_vec(),
                test_center: test_center.to_vec(),
                data_std: *data_std,
            },
            TaskParams::Sine { train, test } => ParamsRecord::Sine {
                train_amplitudes: train.amplitudes.to_vec(),
                train_phases: train.phases.to_vec(),
                test_amplitudes: test.amplitudes.to_vec(),
                test_phases: test.phases.to_vec(),
            },
        };
        StreamRecord {
            family: t.family(),
            dim: t.dim,
            radius: t.domain_radius,
            seed: entry.oracle_seed,
            params,
        }
    }
}

impl TryFrom<StreamRecord> for StreamTask {
    type Error = Error;

    fn try_from(rec: StreamRecord) -> Result<Self> {
        let params = match (rec.family, rec.params) {
            (
                TaskFamily::QuadraticBowl,
                ParamsRecord::Quadratic {
                    train_center,
                    test_center,
                    data_std,
                },
            ) => TaskParams::Quadratic {
                train_center: Array1::from_vec(train_center),
                test_center: Array1::from_vec(test_center),
                data_std,
            },
            (
                TaskFamily::SineRegression,
                ParamsRecord::Sine {
                    train_amplitudes,
                    train_phases,
                    test_amplitudes,
                    test_phases,
                },
            ) => TaskParams::Sine {
                train: SineParams {
                    amplitudes: Array1::from_vec(train_amplitudes),
                    phases: Array1::from_vec(train_phases),
                },
                test: SineParams {
                    amplitudes: Array1::from_vec(test_amplitudes),
                    phases: Array1::from_vec(test_phases),
                },
            },
            _ => {
                return Err(Error::BadInput(
                    "stream record family does not match its parameters".into(),
                ))
            }
        };
        Ok(StreamTask {
            task: TaskSpec::new(rec.dim, rec.radius, params)?,
            oracle_seed: rec.seed,
        })
    }
}

/// Writes one JSON record per line.
pub fn write_stream(path: &Path, stream: &[StreamTask]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for entry in stream {
        serde_json::to_writer(&mut out, &StreamRecord::from(entry))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a stream file back, validating every record.
pub fn read_stream(path: &Path) -> Result<Vec<StreamTask>> {
    let file = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: StreamRecord = serde_json::from_str(&line).map_err(|e| {
            Error::BadInput(format!("stream line {}: {e}", lineno + 1))
        })?;
        out.push(StreamTask::try_from(rec)?);
    }
    Ok(out)
}
