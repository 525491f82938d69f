//! Practical advice built on the model: how many workers a reduction step
//! should use, and which barrier mechanism an iterative kernel should use.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::device::DeviceProfile;
use crate::error::{Error, Result};
use crate::io::format::sig6;
use crate::model::{CostPoint, Crossover, SafetyFactor, SwitchPoints, SwitchScenario, SyncCost};

/// A worker configuration and the barrier cost it adds per reduction step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub point: CostPoint,
    pub sync: SyncCost,
}

impl Candidate {
    pub fn new(point: CostPoint, sync: SyncCost) -> Self {
        Candidate { point, sync }
    }

    /// `T + T_sync + max(0, n - C) / Thr`.
    pub fn time(&self, n: f64) -> f64 {
        self.point.latency() + self.sync.total() + (n - self.point.concurrency()).max(0.0) / self.point.throughput()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionQuery {
    pub input_bytes: u64,
    pub element_bytes: u32,
    pub device: DeviceProfile,
    /// Ordered by increasing worker count.
    pub candidates: Vec<Candidate>,
    #[serde(default)]
    pub safety: SafetyFactor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateCost {
    pub label: String,
    pub concurrency_bytes: f64,
    pub model_cycles: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionRecommendation {
    pub device: String,
    pub input_bytes: u64,
    pub chosen: String,
    pub chosen_index: usize,
    /// The adjacent pair whose comparison decided the outcome.
    pub basic: String,
    pub more: String,
    pub scenario: SwitchScenario,
    /// Switch points of the decisive pair, multiplied by the safety factor.
    pub thresholds: SwitchPoints,
    pub safety_factor: f64,
    pub costs: Vec<CandidateCost>,
    pub rationale: String,
}

/// Picks the worker configuration with the lowest modelled time.
///
/// Candidates are walked in order and a larger configuration only replaces
/// the current choice when it is strictly faster, so equal times keep the
/// smaller configuration. For two candidates whose first has no barrier
/// cost this is exactly [`crate::model::prefer_fewer_workers`].
pub fn recommend_reduction_config(q: &ReductionQuery) -> Result<ReductionRecommendation> {
    q.device.validate()?;
    if q.element_bytes == 0 {
        return Err(Error::validation("element size must be positive"));
    }
    if !q.input_bytes.is_multiple_of(u64::from(q.element_bytes)) {
        return Err(Error::validation(format!(
            "{} bytes is not a whole number of {}-byte elements",
            q.input_bytes, q.element_bytes
        )));
    }
    if q.candidates.len() < 2 {
        return Err(Error::validation("at least two candidate configurations are required"));
    }
    for pair in q.candidates.windows(2) {
        if pair[1].point.concurrency() < pair[0].point.concurrency() {
            return Err(Error::validation(format!(
                "concurrency drops from `{}` ({}) to `{}` ({}); candidates must be ordered by worker count",
                pair[0].point.label(),
                pair[0].point.concurrency(),
                pair[1].point.label(),
                pair[1].point.concurrency()
            )));
        }
    }

    let n = q.input_bytes as f64;
    let costs: Vec<CandidateCost> = q
        .candidates
        .iter()
        .map(|c| CandidateCost {
            label: c.point.label().to_string(),
            concurrency_bytes: c.point.concurrency(),
            model_cycles: c.time(n),
        })
        .collect();

    let mut chosen = 0;
    for (k, cost) in costs.iter().enumerate().skip(1) {
        if cost.model_cycles < costs[chosen].model_cycles {
            chosen = k;
        }
    }

    let (b, m) = if chosen + 1 < q.candidates.len() {
        (chosen, chosen + 1)
    } else {
        (chosen - 1, chosen)
    };
    let basic = &q.candidates[b];
    let more = &q.candidates[m];
    let scenario = SwitchScenario::resolve(n, &basic.point, &more.point, &more.sync)?;
    let thresholds = SwitchPoints::compute(&basic.point, &more.point, &more.sync, q.safety);
    let rationale = reduction_rationale(q, &costs, chosen, basic, more, &scenario, &thresholds);

    Ok(ReductionRecommendation {
        device: q.device.name.clone(),
        input_bytes: q.input_bytes,
        chosen: costs[chosen].label.clone(),
        chosen_index: chosen,
        basic: basic.point.label().to_string(),
        more: more.point.label().to_string(),
        scenario,
        thresholds,
        safety_factor: q.safety.get(),
        costs,
        rationale,
    })
}

fn reduction_rationale(
    q: &ReductionQuery,
    costs: &[CandidateCost],
    chosen: usize,
    basic: &Candidate,
    more: &Candidate,
    scenario: &SwitchScenario,
    thresholds: &SwitchPoints,
) -> String {
    let n = q.input_bytes as f64;
    let n_l = match thresholds.above {
        Crossover::At(x) => format!("{} B", sig6(x)),
        Crossover::NoCrossover => "none".to_string(),
    };
    let mut text = format!(
        "{} B ({} elements) against `{}` (C = {} B) and `{}` (C = {} B) is in the {} scenario; \
         N_m = {} B, N_l = {}. `{}` has the lowest modelled time at {} cycles.",
        q.input_bytes,
        q.input_bytes / u64::from(q.element_bytes),
        basic.point.label(),
        sig6(basic.point.concurrency()),
        more.point.label(),
        sig6(more.point.concurrency()),
        scenario.kind.as_str(),
        sig6(thresholds.between),
        n_l,
        costs[chosen].label,
        sig6(costs[chosen].model_cycles),
    );
    let factor = q.safety.get();
    if factor != 1.0 {
        let near = |x: f64| {
            let raw = x / factor;
            n >= raw.min(x) && n < raw.max(x)
        };
        let close = near(thresholds.between) || thresholds.above.bytes().is_some_and(near);
        if close {
            text.push_str(&format!(
                " The input lies within the {}x safety margin of a switch point; pipeline refill after the barrier may change the outcome.",
                sig6(factor)
            ));
        }
    }
    text
}

/// Ways to order the work of an iterative kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarrierMechanism {
    /// One kernel launch per iteration in a single stream.
    ImplicitLaunch,
    /// Host threads meeting at a barrier between per-device launches.
    CpuSide,
    /// Grid-wide barrier inside a cooperative kernel.
    Grid,
    /// Multi-device barrier inside a cooperative multi-device kernel.
    MultiGrid,
    /// One cooperative multi-device launch per iteration.
    MultiDeviceLaunch,
}

impl BarrierMechanism {
    pub const ALL: [BarrierMechanism; 5] = [
        BarrierMechanism::ImplicitLaunch,
        BarrierMechanism::CpuSide,
        BarrierMechanism::Grid,
        BarrierMechanism::MultiGrid,
        BarrierMechanism::MultiDeviceLaunch,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BarrierMechanism::ImplicitLaunch => "implicit_launch",
            BarrierMechanism::CpuSide => "cpu_side",
            BarrierMechanism::Grid => "grid",
            BarrierMechanism::MultiGrid => "multi_grid",
            BarrierMechanism::MultiDeviceLaunch => "multi_device_launch",
        }
    }

    pub fn parse(s: &str) -> Option<BarrierMechanism> {
        BarrierMechanism::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

impl fmt::Display for BarrierMechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One-time cost of the launch each mechanism starts with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaunchOverheads {
    pub traditional_ns: f64,
    pub cooperative_ns: f64,
    pub multi_device_ns: f64,
}

impl LaunchOverheads {
    pub fn for_mechanism(&self, m: BarrierMechanism) -> f64 {
        match m {
            BarrierMechanism::ImplicitLaunch | BarrierMechanism::CpuSide => self.traditional_ns,
            BarrierMechanism::Grid => self.cooperative_ns,
            BarrierMechanism::MultiGrid | BarrierMechanism::MultiDeviceLaunch => self.multi_device_ns,
        }
    }
}

/// A per-barrier latency; `None` fields match any value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncEntry {
    pub mechanism: BarrierMechanism,
    pub gpu_count: Option<u32>,
    pub blocks_per_sm: Option<u32>,
    pub threads_per_block: Option<u32>,
    pub latency_ns: f64,
}

impl SyncEntry {
    fn matches(&self, m: BarrierMechanism, gpus: u32, blocks: u32, threads: u32) -> bool {
        self.mechanism == m
            && self.gpu_count.is_none_or(|g| g == gpus)
            && self.blocks_per_sm.is_none_or(|b| b == blocks)
            && self.threads_per_block.is_none_or(|t| t == threads)
    }

    fn specificity(&self) -> usize {
        [self.gpu_count, self.blocks_per_sm, self.threads_per_block]
            .iter()
            .filter(|f| f.is_some())
            .count()
    }
}

/// Barrier latencies keyed by mechanism and launch configuration.
///
/// Text form: tab-separated `mechanism gpu_count blocks_per_sm
/// threads_per_block latency_ns` under a header line, `*` as a wildcard and
/// `#` for comments.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SyncTable {
    pub entries: Vec<SyncEntry>,
}

const SYNC_TABLE_HEADER: [&str; 5] = ["mechanism", "gpu_count", "blocks_per_sm", "threads_per_block", "latency_ns"];

impl SyncTable {
    pub fn load(path: impl AsRef<Path>) -> Result<SyncTable> {
        SyncTable::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<SyncTable> {
        let mut entries = Vec::new();
        let mut header_seen = false;
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if !header_seen {
                if fields != SYNC_TABLE_HEADER {
                    return Err(Error::parse(line_no, 1, "expected sync table header"));
                }
                header_seen = true;
                continue;
            }
            if fields.len() != 5 {
                return Err(Error::parse(line_no, 1, format!("expected 5 fields, found {}", fields.len())));
            }
            let col = |i: usize| 1 + fields[..i].iter().map(|f| f.len() + 1).sum::<usize>();
            let mechanism = BarrierMechanism::parse(fields[0])
                .ok_or_else(|| Error::parse(line_no, 1, format!("unknown mechanism `{}`", fields[0])))?;
            let key = |i: usize| -> Result<Option<u32>> {
                match fields[i] {
                    "*" => Ok(None),
                    v => v
                        .parse::<u32>()
                        .ok()
                        .filter(|&x| x > 0)
                        .map(Some)
                        .ok_or_else(|| Error::parse(line_no, col(i), format!("expected a positive integer or `*`, found `{v}`"))),
                }
            };
            let latency_ns = fields[4]
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite() && *x >= 0.0)
                .ok_or_else(|| Error::parse(line_no, col(4), format!("bad latency `{}`", fields[4])))?;
            entries.push(SyncEntry {
                mechanism,
                gpu_count: key(1)?,
                blocks_per_sm: key(2)?,
                threads_per_block: key(3)?,
                latency_ns,
            });
        }
        if !header_seen && !entries.is_empty() {
            return Err(Error::parse(1, 1, "expected sync table header"));
        }
        let table = SyncTable { entries };
        table.check_unique()?;
        Ok(table)
    }

    fn check_unique(&self) -> Result<()> {
        for (i, a) in self.entries.iter().enumerate() {
            let key = (a.mechanism, a.gpu_count, a.blocks_per_sm, a.threads_per_block);
            if self.entries[..i]
                .iter()
                .any(|b| (b.mechanism, b.gpu_count, b.blocks_per_sm, b.threads_per_block) == key)
            {
                return Err(Error::validation(format!("duplicate sync table entry for {}", a.mechanism)));
            }
        }
        Ok(())
    }

    /// The most specific matching latency.
    pub fn lookup(&self, m: BarrierMechanism, gpus: u32, blocks_per_sm: u32, threads_per_block: u32) -> Option<f64> {
        self.entries
            .iter()
            .filter(|e| e.matches(m, gpus, blocks_per_sm, threads_per_block))
            .max_by_key(|e| e.specificity())
            .map(|e| e.latency_ns)
    }

    /// Distinct GPU counts present for a mechanism, ascending.
    pub fn gpu_counts(&self, m: BarrierMechanism) -> Vec<u32> {
        let mut counts: Vec<u32> = self
            .entries
            .iter()
            .filter(|e| e.mechanism == m)
            .filter_map(|e| e.gpu_count)
            .collect();
        counts.sort_unstable();
        counts.dedup();
        counts
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierQuery {
    pub iterations: u64,
    pub gpu_count: u32,
    pub blocks_per_sm: u32,
    pub threads_per_block: u32,
    /// Multi-grid counts as acceptable when its total is within this factor of the winner.
    pub slack: f64,
    /// Restrict the comparison; every listed mechanism must have data.
    pub mechanisms: Option<Vec<BarrierMechanism>>,
}

impl BarrierQuery {
    pub const DEFAULT_SLACK: f64 = 3.0;

    pub fn new(iterations: u64, gpu_count: u32, blocks_per_sm: u32, threads_per_block: u32) -> Self {
        BarrierQuery {
            iterations,
            gpu_count,
            blocks_per_sm,
            threads_per_block,
            slack: BarrierQuery::DEFAULT_SLACK,
            mechanisms: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanismCost {
    pub mechanism: BarrierMechanism,
    pub launch_overhead_ns: f64,
    pub per_barrier_ns: f64,
    pub total_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierRecommendation {
    pub iterations: u64,
    pub gpu_count: u32,
    pub chosen: BarrierMechanism,
    /// Cheapest first.
    pub costs: Vec<MechanismCost>,
    /// Runner-up total minus winner total.
    pub margin_ns: Option<f64>,
    pub slack: f64,
    /// Whether multi-grid stays within `slack` times the winner; `None` without multi-grid data.
    pub multi_grid_within_slack: Option<bool>,
    /// Mechanisms without data for this configuration.
    pub skipped: Vec<BarrierMechanism>,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum BarrierAdvice {
    Recommended(BarrierRecommendation),
    InsufficientData { missing: Vec<BarrierMechanism>, reason: String },
}

impl BarrierAdvice {
    pub fn recommendation(&self) -> Option<&BarrierRecommendation> {
        match self {
            BarrierAdvice::Recommended(r) => Some(r),
            BarrierAdvice::InsufficientData { .. } => None,
        }
    }
}

/// Total cost per mechanism is its one-time launch overhead plus the
/// per-barrier latency times the iteration count; the cheapest wins.
pub fn recommend_barrier(q: &BarrierQuery, table: &SyncTable, launch: &LaunchOverheads) -> Result<BarrierAdvice> {
    if q.iterations == 0 || q.gpu_count == 0 || q.blocks_per_sm == 0 || q.threads_per_block == 0 {
        return Err(Error::validation("iterations, GPU count and launch configuration must be positive"));
    }
    if !(q.slack.is_finite() && q.slack >= 1.0) {
        return Err(Error::validation(format!("slack must be at least 1, got {}", q.slack)));
    }
    let requested = q.mechanisms.clone().unwrap_or_else(|| BarrierMechanism::ALL.to_vec());

    let mut costs = Vec::new();
    let mut skipped = Vec::new();
    for &m in &requested {
        match table.lookup(m, q.gpu_count, q.blocks_per_sm, q.threads_per_block) {
            Some(per_barrier_ns) => {
                let launch_overhead_ns = launch.for_mechanism(m);
                costs.push(MechanismCost {
                    mechanism: m,
                    launch_overhead_ns,
                    per_barrier_ns,
                    total_ns: launch_overhead_ns + per_barrier_ns * q.iterations as f64,
                });
            }
            None => skipped.push(m),
        }
    }
    skipped.sort();

    let config = format!(
        "{} GPU(s), {} block(s)/SM, {} threads/block",
        q.gpu_count, q.blocks_per_sm, q.threads_per_block
    );
    if q.mechanisms.is_some() && !skipped.is_empty() {
        return Ok(BarrierAdvice::InsufficientData {
            reason: format!("no latency data at {config} for {}", join(&skipped)),
            missing: skipped,
        });
    }
    if costs.is_empty() {
        return Ok(BarrierAdvice::InsufficientData {
            reason: format!("no latency data at {config}"),
            missing: skipped,
        });
    }

    costs.sort_by(|a, b| a.total_ns.total_cmp(&b.total_ns).then(a.mechanism.cmp(&b.mechanism)));
    let winner = costs[0];
    let margin_ns = costs.get(1).map(|c| c.total_ns - winner.total_ns);
    let multi_grid = costs.iter().find(|c| c.mechanism == BarrierMechanism::MultiGrid);
    let multi_grid_within_slack = multi_grid.map(|c| c.total_ns <= q.slack * winner.total_ns);

    let us = |ns: f64| sig6(ns / 1000.0);
    let mut rationale = format!(
        "{} has the lowest total over {} iteration(s) at {config}: {} us.",
        winner.mechanism,
        q.iterations,
        us(winner.total_ns)
    );
    if let (Some(runner), Some(margin)) = (costs.get(1), margin_ns) {
        rationale.push_str(&format!(
            " Next is {} at {} us, a margin of {} us.",
            runner.mechanism,
            us(runner.total_ns),
            us(margin)
        ));
    }
    if let (Some(mg), Some(within)) = (multi_grid, multi_grid_within_slack) {
        if mg.mechanism != winner.mechanism {
            let ratio = mg.total_ns / winner.total_ns;
            if within {
                rationale.push_str(&format!(
                    " multi_grid is {}x the winner, within the {}x slack; the difference is minor if a single multi-device kernel is easier to write.",
                    sig6(ratio),
                    sig6(q.slack)
                ));
            } else {
                rationale.push_str(&format!(
                    " multi_grid is {}x the winner, outside the {}x slack.",
                    sig6(ratio),
                    sig6(q.slack)
                ));
            }
        }
    }
    if !skipped.is_empty() {
        rationale.push_str(&format!(" No data for {}.", join(&skipped)));
    }

    Ok(BarrierAdvice::Recommended(BarrierRecommendation {
        iterations: q.iterations,
        gpu_count: q.gpu_count,
        chosen: winner.mechanism,
        costs,
        margin_ns,
        slack: q.slack,
        multi_grid_within_slack,
        skipped,
        rationale,
    }))
}

fn join(ms: &[BarrierMechanism]) -> String {
    ms.iter().map(|m| m.as_str()).collect::<Vec<_>>().join(", ")
}

/// Launch configurations for which multi-grid barriers perform acceptably:
/// at most 8 blocks and at most 32 active warps per SM.
pub fn multi_grid_config_ok(profile: &DeviceProfile, blocks_per_sm: u32, threads_per_block: u32) -> Result<bool> {
    let warps = profile.active_warps_per_sm(blocks_per_sm, threads_per_block)?;
    Ok(blocks_per_sm <= 8 && warps <= 32)
}
