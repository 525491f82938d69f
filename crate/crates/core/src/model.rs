//! Analytical model for choosing between fewer and more workers.
//!
//! A configuration is summarised by a [`CostPoint`]: its latency `T` (cycles),
//! its throughput `Thr` (bytes/cycle) and the resulting concurrency
//! `C = T * Thr` (bytes in flight, by Little's Law). Processing `n` bytes with
//! the smaller ("basic") configuration takes
//!
//! ```text
//! T + max(0, n - C_basic) / Thr_basic
//! ```
//!
//! while the larger configuration pays for a barrier on top of the same
//! latency:
//!
//! ```text
//! T + T_sync + max(0, n - C_more) / Thr_more
//! ```
//!
//! Comparing the two sides yields two closed-form switch points: `N_m` for
//! inputs that fit in the larger configuration's concurrency and `N_l` for
//! inputs that exceed it.
//!
//! ```
//! use syncperf_core::model::{CostPoint, SyncCost, SyncLevel, switch_point_between};
//!
//! let one_thread = CostPoint::new("1 thread", 13.0, 0.62).unwrap();
//! let sync = SyncCost::new(SyncLevel::WarpTile, 22.0, 5).unwrap();
//! let n_m = switch_point_between(&one_thread, &sync);
//! assert!((n_m - 76.26).abs() < 1e-9);
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bytes in flight for a configuration with the given latency and throughput.
pub fn little_law_concurrency(latency: f64, throughput: f64) -> Result<f64> {
    ensure_positive("latency", latency)?;
    ensure_positive("throughput", throughput)?;
    Ok(latency * throughput)
}

fn ensure_positive(what: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::validation(format!("{what} must be positive and finite, got {value}")))
    }
}

fn ensure_input_size(n: f64) -> Result<()> {
    if n.is_finite() && n >= 0.0 {
        Ok(())
    } else {
        Err(Error::validation(format!("input size must be a non-negative number, got {n}")))
    }
}

/// Latency/throughput/concurrency triple for one execution configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostPoint {
    label: String,
    latency: f64,
    throughput: f64,
    concurrency: f64,
}

impl CostPoint {
    /// Builds a cost point and derives its concurrency.
    pub fn new(label: impl Into<String>, latency: f64, throughput: f64) -> Result<Self> {
        let concurrency = little_law_concurrency(latency, throughput)?;
        Ok(CostPoint {
            label: label.into(),
            latency,
            throughput,
            concurrency,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Latency in cycles.
    pub fn latency(&self) -> f64 {
        self.latency
    }

    /// Throughput in bytes per cycle.
    pub fn throughput(&self) -> f64 {
        self.throughput
    }

    /// Concurrency in bytes.
    pub fn concurrency(&self) -> f64 {
        self.concurrency
    }

    /// Same configuration with latency multiplied and throughput divided by
    /// `factor`, i.e. expressed in a different time unit. Concurrency is unchanged.
    pub fn rescale_time(&self, factor: f64) -> Result<Self> {
        CostPoint::new(self.label.clone(), self.latency * factor, self.throughput / factor)
    }
}

/// Synchronization scope a barrier cost belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncLevel {
    WarpTile,
    WarpCoalesced,
    Block,
    Grid,
    MultiGrid,
    ImplicitLaunch,
    CpuSide,
}

impl SyncLevel {
    pub const ALL: [SyncLevel; 7] = [
        SyncLevel::WarpTile,
        SyncLevel::WarpCoalesced,
        SyncLevel::Block,
        SyncLevel::Grid,
        SyncLevel::MultiGrid,
        SyncLevel::ImplicitLaunch,
        SyncLevel::CpuSide,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SyncLevel::WarpTile => "warp_tile",
            SyncLevel::WarpCoalesced => "warp_coalesced",
            SyncLevel::Block => "block",
            SyncLevel::Grid => "grid",
            SyncLevel::MultiGrid => "multi_grid",
            SyncLevel::ImplicitLaunch => "implicit_launch",
            SyncLevel::CpuSide => "cpu_side",
        }
    }

    pub fn parse(s: &str) -> Option<SyncLevel> {
        SyncLevel::ALL.into_iter().find(|level| level.as_str() == s)
    }
}

impl fmt::Display for SyncLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Cost of the barriers a larger configuration has to execute.
///
/// The count is always explicit: a reduction step that synchronizes five times
/// carries `per_invocation_count = 5`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncCost {
    pub level: SyncLevel,
    pub latency_cycles: f64,
    pub per_invocation_count: u32,
}

impl SyncCost {
    pub fn new(level: SyncLevel, latency_cycles: f64, per_invocation_count: u32) -> Result<Self> {
        if !(latency_cycles.is_finite() && latency_cycles >= 0.0) {
            return Err(Error::validation(format!(
                "sync latency must be non-negative, got {latency_cycles}"
            )));
        }
        if per_invocation_count == 0 {
            return Err(Error::validation("per_invocation_count must be positive"));
        }
        Ok(SyncCost {
            level,
            latency_cycles,
            per_invocation_count,
        })
    }

    /// A cost whose total is exactly `total_cycles` (count of one).
    pub fn total_of(level: SyncLevel, total_cycles: f64) -> Result<Self> {
        SyncCost::new(level, total_cycles, 1)
    }

    /// `latency_cycles * per_invocation_count`, the `T_sync` used by every threshold.
    pub fn total(&self) -> f64 {
        self.latency_cycles * f64::from(self.per_invocation_count)
    }
}

/// Which side of the two concurrencies an input size falls on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// `n <= C_basic`: fewer workers always win.
    BelowBasic,
    /// `C_basic < n <= C_more`: compare against `N_m`.
    Between,
    /// `n > C_more`: compare against `N_l`.
    AboveMore,
}

impl ScenarioKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::BelowBasic => "below_basic",
            ScenarioKind::Between => "between",
            ScenarioKind::AboveMore => "above_more",
        }
    }
}

/// Result of the `N_l` formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Crossover {
    /// Fewer workers win for inputs strictly below this many bytes.
    At(f64),
    /// The larger configuration is not faster per byte; fewer workers always win.
    NoCrossover,
}

impl Crossover {
    pub fn bytes(self) -> Option<f64> {
        match self {
            Crossover::At(n) => Some(n),
            Crossover::NoCrossover => None,
        }
    }

    fn scaled(self, factor: f64) -> Crossover {
        match self {
            Crossover::At(n) => Crossover::At(n * factor),
            Crossover::NoCrossover => Crossover::NoCrossover,
        }
    }
}

/// Threshold that applies to a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    /// `N_m` (the `Between` scenario).
    Between(f64),
    /// `N_l` (the `AboveMore` scenario).
    Above(Crossover),
}

/// Scenario classification plus the threshold that decides it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchScenario {
    pub kind: ScenarioKind,
    pub applicable_threshold: Option<Threshold>,
}

impl SwitchScenario {
    /// Classifies `n` and attaches the matching threshold.
    pub fn resolve(n: f64, basic: &CostPoint, more: &CostPoint, sync: &SyncCost) -> Result<Self> {
        let kind = classify_scenario(n, basic, more)?;
        let applicable_threshold = match kind {
            ScenarioKind::BelowBasic => None,
            ScenarioKind::Between => Some(Threshold::Between(switch_point_between(basic, sync))),
            ScenarioKind::AboveMore => Some(Threshold::Above(switch_point_above(basic, more, sync))),
        };
        Ok(SwitchScenario {
            kind,
            applicable_threshold,
        })
    }

    /// Whether the threshold rule says fewer workers win for `n`.
    ///
    /// Ties go to the larger configuration.
    pub fn prefers_fewer(&self, n: f64) -> bool {
        match self.applicable_threshold {
            None => true,
            Some(Threshold::Between(n_m)) => n < n_m,
            Some(Threshold::Above(Crossover::At(n_l))) => n < n_l,
            Some(Threshold::Above(Crossover::NoCrossover)) => true,
        }
    }
}

/// Time to process `n` bytes with `basic`.
pub fn fewer_workers_time(n: f64, basic: &CostPoint) -> f64 {
    basic.latency + (n - basic.concurrency).max(0.0) / basic.throughput
}

/// Time to process `n` bytes with `more`, whose latency is the basic latency
/// plus the barrier cost.
pub fn more_workers_time(n: f64, basic: &CostPoint, more: &CostPoint, sync: &SyncCost) -> f64 {
    basic.latency + sync.total() + (n - more.concurrency).max(0.0) / more.throughput
}

/// True when the fewer-workers side is strictly faster for `n` bytes.
///
/// Equal times resolve to the larger configuration.
pub fn prefer_fewer_workers(
    n: f64,
    basic: &CostPoint,
    more: &CostPoint,
    sync: &SyncCost,
) -> Result<bool> {
    ensure_input_size(n)?;
    Ok(fewer_workers_time(n, basic) < more_workers_time(n, basic, more, sync))
}

/// `N_m = (T + T_sync) * Thr_basic`.
pub fn switch_point_between(basic: &CostPoint, sync: &SyncCost) -> f64 {
    (basic.latency + sync.total()) * basic.throughput
}

/// `N_l = T_sync * Thr_more * Thr_basic / (Thr_more - Thr_basic)`.
pub fn switch_point_above(basic: &CostPoint, more: &CostPoint, sync: &SyncCost) -> Crossover {
    let gain = more.throughput - basic.throughput;
    if gain <= 0.0 {
        return Crossover::NoCrossover;
    }
    Crossover::At(sync.total() * more.throughput * basic.throughput / gain)
}

pub fn classify_scenario(n: f64, basic: &CostPoint, more: &CostPoint) -> Result<ScenarioKind> {
    ensure_input_size(n)?;
    if basic.concurrency > more.concurrency {
        return Err(Error::validation(format!(
            "`{}` has more concurrency ({}) than `{}` ({})",
            basic.label, basic.concurrency, more.label, more.concurrency
        )));
    }
    Ok(if n <= basic.concurrency {
        ScenarioKind::BelowBasic
    } else if n <= more.concurrency {
        ScenarioKind::Between
    } else {
        ScenarioKind::AboveMore
    })
}

/// Multiplier applied to reported thresholds to account for pipeline refill
/// after a barrier. `1.0` reports the thresholds unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyFactor(f64);

impl SafetyFactor {
    pub const NONE: SafetyFactor = SafetyFactor(1.0);

    pub fn new(factor: f64) -> Result<Self> {
        ensure_positive("safety factor", factor)?;
        Ok(SafetyFactor(factor))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl Default for SafetyFactor {
    fn default() -> Self {
        SafetyFactor::NONE
    }
}

/// Both switch points for a pair of configurations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchPoints {
    pub between: f64,
    pub above: Crossover,
}

impl SwitchPoints {
    pub fn compute(basic: &CostPoint, more: &CostPoint, sync: &SyncCost, safety: SafetyFactor) -> Self {
        SwitchPoints {
            between: switch_point_between(basic, sync) * safety.get(),
            above: switch_point_above(basic, more, sync).scaled(safety.get()),
        }
    }

    /// Integer byte counts, as tabulated for comparison with published values.
    pub fn rounded_between(&self) -> u64 {
        self.between.round() as u64
    }

    pub fn rounded_above(&self) -> Option<u64> {
        self.above.bytes().map(|n| n.round() as u64)
    }
}
