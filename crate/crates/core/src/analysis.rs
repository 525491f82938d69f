//! Estimators that turn raw timings into launch overhead, kernel total
//! latency and per-instruction latency.
//!
//! Each estimator differences two arms of an experiment so that everything the
//! arms have in common (launch cost, synchronization with the host, clock read
//! overhead) cancels. Arms are reduced to their mean before differencing; the
//! reported spread propagates the standard error of each mean in quadrature.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::device::DeviceProfile;
use crate::error::{Error, Result};
use crate::io::measurements::{ExperimentKind, MeasurementBatch};
use crate::stats::{quadrature, Summary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockDomain {
    /// Host wall clock, nanoseconds.
    CpuNs,
    /// Device clock register, cycles.
    GpuCycles,
}

impl ClockDomain {
    pub fn as_str(self) -> &'static str {
        match self {
            ClockDomain::CpuNs => "cpu_ns",
            ClockDomain::GpuCycles => "gpu_cycles",
        }
    }

    pub fn parse(s: &str) -> Option<ClockDomain> {
        match s {
            "cpu_ns" => Some(ClockDomain::CpuNs),
            "gpu_cycles" => Some(ClockDomain::GpuCycles),
            _ => None,
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            ClockDomain::CpuNs => "ns",
            ClockDomain::GpuCycles => "cycles",
        }
    }

    pub(crate) fn value_column(self) -> &'static str {
        match self {
            ClockDomain::CpuNs => "value_ns",
            ClockDomain::GpuCycles => "value_cycles",
        }
    }
}

impl fmt::Display for ClockDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingSample {
    pub clock_domain: ClockDomain,
    pub run_index: u32,
    pub value: f64,
}

impl TimingSample {
    pub fn ns(run_index: u32, value: f64) -> Self {
        TimingSample {
            clock_domain: ClockDomain::CpuNs,
            run_index,
            value,
        }
    }

    pub fn cycles(run_index: u32, value: f64) -> Self {
        TimingSample {
            clock_domain: ClockDomain::GpuCycles,
            run_index,
            value,
        }
    }
}

/// How an arm's samples are collapsed before differencing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reducer {
    #[default]
    Mean,
    /// Keep only the fastest run. Intended for warp-level instructions whose
    /// latency jumps erratically as the repeat count grows.
    Fastest,
}

impl Reducer {
    pub fn as_str(self) -> &'static str {
        match self {
            Reducer::Mean => "mean",
            Reducer::Fastest => "fastest",
        }
    }

    pub fn parse(s: &str) -> Option<Reducer> {
        match s {
            "mean" => Some(Reducer::Mean),
            "fastest" => Some(Reducer::Fastest),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Diagnostic {
    /// The estimate came out negative: the difference is dominated by noise.
    NegativeEstimate,
    /// An arm had fewer than two samples (or the fastest-run reducer was used).
    SpreadUnavailable,
    /// Kernels were too short to saturate the launch pipeline.
    Unsaturated,
}

impl Diagnostic {
    pub fn as_str(self) -> &'static str {
        match self {
            Diagnostic::NegativeEstimate => "negative_estimate",
            Diagnostic::SpreadUnavailable => "spread_unavailable",
            Diagnostic::Unsaturated => "unsaturated",
        }
    }
}

/// A derived quantity with its uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    /// Standard deviation of the estimate itself (from standard errors of the arm means).
    pub stddev: Option<f64>,
    /// Spread expected from a single pair of runs (from per-arm sample deviations).
    pub per_run_stddev: Option<f64>,
    pub domain: ClockDomain,
    pub diagnostics: Vec<Diagnostic>,
}

impl Estimate {
    fn from_difference(
        high: &ArmStats,
        low: &ArmStats,
        divisor: f64,
        domain: ClockDomain,
    ) -> Estimate {
        let value = (high.center - low.center) / divisor;
        let stddev = match (high.std_error, low.std_error) {
            (Some(a), Some(b)) => Some(quadrature(a, b) / divisor.abs()),
            _ => None,
        };
        let per_run_stddev = match (high.sample_std, low.sample_std) {
            (Some(a), Some(b)) => Some(quadrature(a, b) / divisor.abs()),
            _ => None,
        };
        let mut diagnostics = Vec::new();
        if value < 0.0 {
            diagnostics.push(Diagnostic::NegativeEstimate);
        }
        if stddev.is_none() {
            diagnostics.push(Diagnostic::SpreadUnavailable);
        }
        Estimate {
            value,
            stddev,
            per_run_stddev,
            domain,
            diagnostics,
        }
    }

    pub fn has(&self, diagnostic: Diagnostic) -> bool {
        self.diagnostics.contains(&diagnostic)
    }

    fn flag(&mut self, diagnostic: Diagnostic) {
        if !self.has(diagnostic) {
            self.diagnostics.push(diagnostic);
            self.diagnostics.sort();
        }
    }

    /// Converts a nanosecond estimate to cycles at the profile's clock.
    pub fn to_cycles(&self, profile: &DeviceProfile) -> Estimate {
        match self.domain {
            ClockDomain::GpuCycles => self.clone(),
            ClockDomain::CpuNs => Estimate {
                value: profile.ns_to_cycles(self.value),
                stddev: self.stddev.map(|s| profile.ns_to_cycles(s)),
                per_run_stddev: self.per_run_stddev.map(|s| profile.ns_to_cycles(s)),
                domain: ClockDomain::GpuCycles,
                diagnostics: self.diagnostics.clone(),
            },
        }
    }
}

struct ArmStats {
    center: f64,
    std_error: Option<f64>,
    sample_std: Option<f64>,
}

fn arm_stats(name: &str, samples: &[TimingSample], reducer: Reducer) -> Result<(ClockDomain, ArmStats)> {
    let first = samples
        .first()
        .ok_or_else(|| Error::validation(format!("{name} arm has no samples")))?;
    let domain = first.clock_domain;
    let mut values = Vec::with_capacity(samples.len());
    for s in samples {
        if s.clock_domain != domain {
            return Err(Error::UnitMismatch(format!("{name} arm mixes {domain} and {}", s.clock_domain)));
        }
        if !(s.value.is_finite() && s.value >= 0.0) {
            return Err(Error::validation(format!("{name} arm has invalid sample {}", s.value)));
        }
        values.push(s.value);
    }
    let summary = Summary::of(&values).expect("non-empty");
    let stats = match reducer {
        Reducer::Mean => ArmStats {
            center: summary.mean,
            std_error: summary.std_error,
            sample_std: summary.sample_std,
        },
        Reducer::Fastest => ArmStats {
            center: summary.min,
            std_error: None,
            sample_std: None,
        },
    };
    Ok((domain, stats))
}

fn paired_arms(
    high: (&str, &[TimingSample]),
    low: (&str, &[TimingSample]),
    reducer: Reducer,
) -> Result<(ClockDomain, ArmStats, ArmStats)> {
    let (d_high, s_high) = arm_stats(high.0, high.1, reducer)?;
    let (d_low, s_low) = arm_stats(low.0, low.1, reducer)?;
    if d_high != d_low {
        return Err(Error::UnitMismatch(format!(
            "{} arm is in {d_high} but {} arm is in {d_low}",
            high.0, low.0
        )));
    }
    Ok((d_high, s_high, s_low))
}

/// Mirrored launch-fusion experiment: `launches` launches of `wait_units` wait
/// units each (`forward`), against `wait_units` launches of `launches` wait
/// units each (`mirrored`). Both arms do the same amount of waiting, so their
/// difference is `(launches - wait_units)` launch overheads.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionExperiment {
    pub launches: u32,
    pub wait_units: u32,
    pub forward: Vec<TimingSample>,
    pub mirrored: Vec<TimingSample>,
    pub reducer: Reducer,
}

/// Two kernels that differ only in how often they repeat the instruction
/// under test; `repeats_high > repeats_low`.
#[derive(Debug, Clone, PartialEq)]
pub struct RepeatDiffExperiment {
    pub repeats_high: u32,
    pub repeats_low: u32,
    pub high: Vec<TimingSample>,
    pub low: Vec<TimingSample>,
    pub reducer: Reducer,
}

/// `O = (mean(L_ij) - mean(L_ji)) / (i - j)`.
///
/// Negative results are kept and flagged rather than clamped.
pub fn launch_overhead(exp: &FusionExperiment) -> Result<Estimate> {
    if exp.launches == exp.wait_units {
        return Err(Error::Degenerate(format!(
            "launches and wait units are both {}; the overhead is not identifiable",
            exp.launches
        )));
    }
    if exp.launches == 0 || exp.wait_units == 0 {
        return Err(Error::validation("launches and wait units must be positive"));
    }
    let (domain, fwd, mir) = paired_arms(("forward", &exp.forward), ("mirrored", &exp.mirrored), exp.reducer)?;
    let divisor = f64::from(exp.launches) - f64::from(exp.wait_units);
    Ok(Estimate::from_difference(&fwd, &mir, divisor, domain))
}

/// `T = (mean(L_k1) - mean(L_k2)) / (r1 - r2)`.
pub fn instruction_latency(exp: &RepeatDiffExperiment) -> Result<Estimate> {
    if exp.repeats_high == exp.repeats_low {
        return Err(Error::Degenerate(format!(
            "both kernels repeat {} times",
            exp.repeats_high
        )));
    }
    if exp.repeats_high < exp.repeats_low {
        return Err(Error::validation(format!(
            "high repeat count {} is below low repeat count {}",
            exp.repeats_high, exp.repeats_low
        )));
    }
    let (domain, high, low) = paired_arms(("high-repeat", &exp.high), ("low-repeat", &exp.low), exp.reducer)?;
    let divisor = f64::from(exp.repeats_high - exp.repeats_low);
    Ok(Estimate::from_difference(&high, &low, divisor, domain))
}

/// Per-kernel total latency from three host timestamps bracketing `reps_a`
/// and then `reps_b` back-to-back launches:
/// `((t3 - t2) - (t2 - t1)) / (reps_b - reps_a)`.
pub fn kernel_total_latency(t1: f64, t2: f64, t3: f64, reps_a: u32, reps_b: u32) -> Result<f64> {
    if ![t1, t2, t3].iter().all(|t| t.is_finite()) {
        return Err(Error::validation("timestamps must be finite"));
    }
    if !(t1 <= t2 && t2 <= t3) {
        return Err(Error::validation(format!(
            "timestamps are not monotone: {t1}, {t2}, {t3}"
        )));
    }
    if reps_a == 0 {
        return Err(Error::validation("the first launch sequence must contain at least one launch"));
    }
    if reps_b <= reps_a {
        return Err(Error::Degenerate(format!(
            "second sequence ({reps_b} launches) must be longer than the first ({reps_a})"
        )));
    }
    Ok(((t3 - t2) - (t2 - t1)) / f64::from(reps_b - reps_a))
}

/// Applies [`kernel_total_latency`] to every run and summarises the results.
pub fn kernel_total_latency_runs(runs: &[[f64; 3]], reps_a: u32, reps_b: u32) -> Result<Estimate> {
    let per_run = runs
        .iter()
        .map(|[t1, t2, t3]| kernel_total_latency(*t1, *t2, *t3, reps_a, reps_b))
        .collect::<Result<Vec<_>>>()?;
    let summary = Summary::of(&per_run).ok_or_else(|| Error::validation("no timestamp runs"))?;
    let mut diagnostics = Vec::new();
    if summary.mean < 0.0 {
        diagnostics.push(Diagnostic::NegativeEstimate);
    }
    if summary.std_error.is_none() {
        diagnostics.push(Diagnostic::SpreadUnavailable);
    }
    Ok(Estimate {
        value: summary.mean,
        stddev: summary.std_error,
        per_run_stddev: summary.sample_std,
        domain: ClockDomain::CpuNs,
        diagnostics,
    })
}

/// One configuration of a throughput sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threads_per_block: u32,
    pub blocks_per_sm: u32,
    pub throughput: f64,
}

impl SweepPoint {
    pub fn total_threads(&self) -> u64 {
        u64::from(self.threads_per_block) * u64::from(self.blocks_per_sm)
    }
}

/// The highest-throughput configuration of a sweep. Ties go to the fewest
/// total threads, then to the smaller `(threads_per_block, blocks_per_sm)`.
pub fn peak_throughput(sweep: &[SweepPoint]) -> Result<SweepPoint> {
    if let Some(bad) = sweep.iter().find(|p| !p.throughput.is_finite()) {
        return Err(Error::validation(format!(
            "non-finite throughput at {} threads x {} blocks",
            bad.threads_per_block, bad.blocks_per_sm
        )));
    }
    sweep
        .iter()
        .copied()
        .reduce(|best, p| {
            let better = p.throughput > best.throughput
                || (p.throughput == best.throughput
                    && (p.total_threads(), p.threads_per_block, p.blocks_per_sm)
                        < (best.total_threads(), best.threads_per_block, best.blocks_per_sm));
            if better {
                p
            } else {
                best
            }
        })
        .ok_or_else(|| Error::validation("empty throughput sweep"))
}

const SATURATION_SINGLE_GPU_NS: f64 = 5_000.0;
const SATURATION_EIGHT_GPU_NS: f64 = 250_000.0;

/// Minimum kernel execution latency for launch-overhead measurements to be
/// trusted: 5 us on one GPU, 250 us on eight, linear in between and beyond.
pub fn saturation_threshold_ns(gpu_count: u32) -> f64 {
    let extra = f64::from(gpu_count.max(1) - 1);
    SATURATION_SINGLE_GPU_NS + extra * (SATURATION_EIGHT_GPU_NS - SATURATION_SINGLE_GPU_NS) / 7.0
}

pub fn saturation_check(kernel_exec_latency_ns: f64, gpu_count: u32) -> bool {
    kernel_exec_latency_ns >= saturation_threshold_ns(gpu_count)
}

/// Which estimator produced an [`AnalysisRecord`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    LaunchOverhead,
    InstructionLatency,
}

impl Quantity {
    pub fn as_str(self) -> &'static str {
        match self {
            Quantity::LaunchOverhead => "launch_overhead",
            Quantity::InstructionLatency => "instruction_latency",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRecord {
    pub group: String,
    pub quantity: Quantity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub estimate: Estimate,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub device: String,
    pub records: Vec<AnalysisRecord>,
}

/// Runs the matching estimator on every experiment group of a batch.
///
/// Groups are processed in name order. With a profile, instruction latencies
/// timed on the host clock are converted to cycles and launch-overhead groups
/// are checked for pipeline saturation against `profile.gpu_count`.
pub fn analyze_batch(batch: &MeasurementBatch, profile: Option<&DeviceProfile>) -> Result<AnalysisReport> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, exp) in batch.experiments.iter().enumerate() {
        groups.entry(exp.descriptor.group.as_str()).or_default().push(i);
    }

    let mut records = Vec::with_capacity(groups.len());
    for (group, members) in groups {
        let exps: Vec<_> = members.iter().map(|&i| &batch.experiments[i]).collect();
        if exps.len() != 2 {
            return Err(Error::validation(format!(
                "group `{group}` has {} arms; estimators need exactly two",
                exps.len()
            )));
        }
        let reducer = if exps.iter().any(|e| e.descriptor.reducer == Reducer::Fastest) {
            Reducer::Fastest
        } else {
            Reducer::Mean
        };
        let record = match (&exps[0].descriptor.kind, &exps[1].descriptor.kind) {
            (
                &ExperimentKind::FusionArm { launches: i, wait_units: j },
                &ExperimentKind::FusionArm { launches: i2, wait_units: j2 },
            ) => {
                if (i2, j2) != (j, i) {
                    return Err(Error::validation(format!(
                        "group `{group}`: arms ({i},{j}) and ({i2},{j2}) are not mirrored"
                    )));
                }
                let (fwd, mir) = if i > j { (exps[0], exps[1]) } else { (exps[1], exps[0]) };
                let exp = FusionExperiment {
                    launches: i.max(j),
                    wait_units: i.min(j),
                    forward: fwd.samples.clone(),
                    mirrored: mir.samples.clone(),
                    reducer,
                };
                let mut estimate = launch_overhead(&exp)?;
                if estimate.domain == ClockDomain::CpuNs {
                    let gpus = profile.map_or(1, |p| p.gpu_count);
                    if !saturation_check(kernel_exec_latency(&exp, estimate.value), gpus) {
                        estimate.flag(Diagnostic::Unsaturated);
                    }
                }
                AnalysisRecord {
                    group: group.to_string(),
                    quantity: Quantity::LaunchOverhead,
                    label: None,
                    estimate,
                }
            }
            (
                ExperimentKind::RepeatArm { repeats: r_a, label: label_a },
                ExperimentKind::RepeatArm { repeats: r_b, label: label_b },
            ) => {
                let (high, low, r_high, r_low) = if r_a >= r_b {
                    (exps[0], exps[1], *r_a, *r_b)
                } else {
                    (exps[1], exps[0], *r_b, *r_a)
                };
                let exp = RepeatDiffExperiment {
                    repeats_high: r_high,
                    repeats_low: r_low,
                    high: high.samples.clone(),
                    low: low.samples.clone(),
                    reducer,
                };
                let mut estimate = instruction_latency(&exp)?;
                if let Some(p) = profile {
                    estimate = estimate.to_cycles(p);
                }
                AnalysisRecord {
                    group: group.to_string(),
                    quantity: Quantity::InstructionLatency,
                    label: label_a.clone().or_else(|| label_b.clone()),
                    estimate,
                }
            }
            _ => {
                return Err(Error::validation(format!(
                    "group `{group}` mixes experiment types"
                )))
            }
        };
        records.push(record);
    }

    Ok(AnalysisReport {
        device: batch.device_name.clone(),
        records,
    })
}

/// Execution latency of one kernel in the shorter-kernel arm, inferred by
/// removing the estimated overhead from the per-launch time.
fn kernel_exec_latency(exp: &FusionExperiment, overhead: f64) -> f64 {
    let mean = |s: &[TimingSample]| s.iter().map(|x| x.value).sum::<f64>() / s.len() as f64;
    // forward arm: `launches` kernels of `wait_units` units each (the shorter kernels)
    mean(&exp.forward) / f64::from(exp.launches) - overhead
}
