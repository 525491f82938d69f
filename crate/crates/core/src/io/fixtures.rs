//! Reference data compiled into the library.
//!
//! Every file is checksummed; the typed loaders refuse to read a table whose
//! bytes no longer match, so an accidental edit cannot silently shift the
//! reproduction results.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::SweepPoint;
use crate::device::DeviceProfile;
use crate::error::{Error, Result};
use crate::io::profile::parse_device_profile;
use crate::recommend::{LaunchOverheads, SyncTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fixture {
    LaunchOverheadT1,
    WarpSyncT2,
    ConcurrencyT3,
    SwitchPointsT4,
    ReductionBwT5,
    WarpReductionT6,
    /// Per-barrier latencies for the barrier advisor.
    BarrierLatencyV100,
    ProfileV100,
    ProfileP100,
}

impl Fixture {
    pub const ALL: [Fixture; 9] = [
        Fixture::LaunchOverheadT1,
        Fixture::WarpSyncT2,
        Fixture::ConcurrencyT3,
        Fixture::SwitchPointsT4,
        Fixture::ReductionBwT5,
        Fixture::WarpReductionT6,
        Fixture::BarrierLatencyV100,
        Fixture::ProfileV100,
        Fixture::ProfileP100,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            Fixture::LaunchOverheadT1 => "launch_overhead_t1.tsv",
            Fixture::WarpSyncT2 => "warp_sync_t2.tsv",
            Fixture::ConcurrencyT3 => "concurrency_t3.tsv",
            Fixture::SwitchPointsT4 => "switch_points_t4.tsv",
            Fixture::ReductionBwT5 => "reduction_bw_t5.tsv",
            Fixture::WarpReductionT6 => "warp_reduction_t6.tsv",
            Fixture::BarrierLatencyV100 => "barrier_latency_v100.tsv",
            Fixture::ProfileV100 => "v100.profile",
            Fixture::ProfileP100 => "p100.profile",
        }
    }

    pub fn contents(self) -> &'static str {
        match self {
            Fixture::LaunchOverheadT1 => include_str!("../../fixtures/launch_overhead_t1.tsv"),
            Fixture::WarpSyncT2 => include_str!("../../fixtures/warp_sync_t2.tsv"),
            Fixture::ConcurrencyT3 => include_str!("../../fixtures/concurrency_t3.tsv"),
            Fixture::SwitchPointsT4 => include_str!("../../fixtures/switch_points_t4.tsv"),
            Fixture::ReductionBwT5 => include_str!("../../fixtures/reduction_bw_t5.tsv"),
            Fixture::WarpReductionT6 => include_str!("../../fixtures/warp_reduction_t6.tsv"),
            Fixture::BarrierLatencyV100 => include_str!("../../fixtures/barrier_latency_v100.tsv"),
            Fixture::ProfileV100 => include_str!("../../fixtures/v100.profile"),
            Fixture::ProfileP100 => include_str!("../../fixtures/p100.profile"),
        }
    }

    pub fn expected_sha256(self) -> &'static str {
        match self {
            Fixture::LaunchOverheadT1 => "da06b8f1a1da2ab78070d930666849f274b67c63835eb80c115ed10ad47482b9",
            Fixture::WarpSyncT2 => "05a0f08777a02a5eed4142eb6de9b32f577b1e6b541e11ce02ea48f51cf8eefa",
            Fixture::ConcurrencyT3 => "6757bec5385d30aeeaabea544f051fdc98ec2d99af1c9190d885b70826c53ee5",
            Fixture::SwitchPointsT4 => "8b1145c4d166f1695da8c7336fd087f2f6bd539b2b03372554b93f6ab801a3a3",
            Fixture::ReductionBwT5 => "3474b1088e513442a15d8039d8bc60e26af0f6cfb740994bc1d2b1cc678dce47",
            Fixture::WarpReductionT6 => "978d0a2c3c23e93f3129d1bc39a14474642c4d86aa9537a39ad70bba4ed8b776",
            Fixture::BarrierLatencyV100 => "29789d245d401b938b2e172422280a2178077c270789e25a6a7a0ab75b96fdfc",
            Fixture::ProfileV100 => "97f35a1f1f336a520ab7fe594c31d8a7c6b218196c39b825e5932afcfc0c8b3e",
            Fixture::ProfileP100 => "82b29702de9e43c8e19eeae8fe65e598e2dbf824619e2972b653eb4227460568",
        }
    }

    pub fn sha256(self) -> String {
        Sha256::digest(self.contents().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn verify(self) -> Result<()> {
        let actual = self.sha256();
        if actual != self.expected_sha256() {
            return Err(Error::FixtureChecksum(format!(
                "{}: expected {}, found {actual}",
                self.file_name(),
                self.expected_sha256()
            )));
        }
        Ok(())
    }
}

impl fmt::Display for Fixture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.file_name())
    }
}

/// The two reference devices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Gpu {
    V100,
    P100,
}

impl Gpu {
    pub const ALL: [Gpu; 2] = [Gpu::V100, Gpu::P100];

    pub fn as_str(self) -> &'static str {
        match self {
            Gpu::V100 => "V100",
            Gpu::P100 => "P100",
        }
    }

    /// Case-insensitive.
    pub fn parse(s: &str) -> Option<Gpu> {
        match s.to_ascii_lowercase().as_str() {
            "v100" => Some(Gpu::V100),
            "p100" => Some(Gpu::P100),
            _ => None,
        }
    }

    pub fn profile(self) -> Result<DeviceProfile> {
        let fixture = match self {
            Gpu::V100 => Fixture::ProfileV100,
            Gpu::P100 => Fixture::ProfileP100,
        };
        fixture.verify()?;
        parse_device_profile(fixture.contents())
    }
}

impl fmt::Display for Gpu {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A value tabulated separately for each reference device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerGpu<T> {
    pub v100: T,
    pub p100: T,
}

impl<T: Copy> PerGpu<T> {
    pub fn get(&self, gpu: Gpu) -> T {
        match gpu {
            Gpu::V100 => self.v100,
            Gpu::P100 => self.p100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaunchType {
    Traditional,
    Cooperative,
    CooperativeMultiDevice,
}

impl LaunchType {
    pub fn as_str(self) -> &'static str {
        match self {
            LaunchType::Traditional => "traditional",
            LaunchType::Cooperative => "cooperative",
            LaunchType::CooperativeMultiDevice => "cooperative_multi_device",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaunchOverheadRow {
    pub launch_type: LaunchType,
    pub launch_overhead_ns: f64,
    pub null_kernel_total_latency_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpSyncRow {
    /// tile, shuffle_tile, coalesced, shuffle_coalesced or block_warp.
    pub kind: String,
    /// `*` when the group size does not matter.
    pub group_size: String,
    pub latency_cycles: PerGpu<f64>,
    /// Synchronizations per cycle.
    pub throughput: PerGpu<f64>,
    /// Vendor-documented thread operations per cycle, where one exists.
    pub reference: PerGpu<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcurrencyRow {
    pub scenery: u8,
    pub label: String,
    /// Bytes per cycle.
    pub bandwidth: PerGpu<f64>,
    pub latency_cycles: PerGpu<f64>,
    pub concurrency_bytes: PerGpu<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PointKind {
    #[serde(rename = "N_l")]
    Above,
    #[serde(rename = "N_m")]
    Between,
}

impl PointKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PointKind::Above => "N_l",
            PointKind::Between => "N_m",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchPointRow {
    pub scenery: u8,
    pub label: String,
    pub point: PointKind,
    /// Total barrier cost of one reduction step (five synchronizations); only
    /// given on the `N_l` row of each scenery.
    pub sync_cycles: PerGpu<Option<f64>>,
    pub switch_point_bytes: PerGpu<f64>,
}

/// Reduction bandwidth in GB/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReductionBwRow {
    pub gpu: Gpu,
    pub implicit: f64,
    pub grid_sync: f64,
    pub cub: f64,
    pub cuda_sample: f64,
    pub theory: f64,
}

/// Cycles to sum 32 doubles within a warp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarpReductionRow {
    pub gpu: Gpu,
    pub serial: f64,
    /// Produces a wrong sum; kept for comparison.
    pub nosync: f64,
    pub volatile_tile: f64,
    pub tile: f64,
    pub coa: f64,
    pub tile_shuffle: f64,
    pub coa_shuffle: f64,
}

struct Tsv {
    fixture: Fixture,
    rows: Vec<(usize, Vec<&'static str>)>,
}

impl Tsv {
    fn read(fixture: Fixture, columns: &[&str], expected_rows: usize) -> Result<Tsv> {
        fixture.verify()?;
        let mut lines = fixture
            .contents()
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
        let (header_line, header) = lines
            .next()
            .ok_or_else(|| Error::UnknownFixture(format!("{fixture} is empty")))?;
        let header: Vec<&str> = header.split('\t').collect();
        if header != columns {
            return Err(Error::parse(header_line, 1, format!("{fixture}: unexpected columns {header:?}")));
        }
        let mut rows = Vec::new();
        for (line, text) in lines {
            let fields: Vec<&str> = text.split('\t').collect();
            if fields.len() != columns.len() {
                return Err(Error::InvalidRow {
                    line,
                    message: format!("{fixture}: expected {} fields, found {}", columns.len(), fields.len()),
                });
            }
            rows.push((line, fields));
        }
        if expected_rows != 0 && rows.len() != expected_rows {
            return Err(Error::validation(format!(
                "{fixture}: expected {expected_rows} rows, found {}",
                rows.len()
            )));
        }
        Ok(Tsv { fixture, rows })
    }

    fn number(&self, line: usize, field: &str) -> Result<f64> {
        field.parse::<f64>().map_err(|_| Error::InvalidRow {
            line,
            message: format!("{}: `{field}` is not a number", self.fixture),
        })
    }

    fn optional(&self, line: usize, field: &str) -> Result<Option<f64>> {
        if field == "-" {
            Ok(None)
        } else {
            self.number(line, field).map(Some)
        }
    }

    fn per_gpu(&self, line: usize, v100: &str, p100: &str) -> Result<PerGpu<f64>> {
        Ok(PerGpu {
            v100: self.number(line, v100)?,
            p100: self.number(line, p100)?,
        })
    }

    fn per_gpu_optional(&self, line: usize, v100: &str, p100: &str) -> Result<PerGpu<Option<f64>>> {
        Ok(PerGpu {
            v100: self.optional(line, v100)?,
            p100: self.optional(line, p100)?,
        })
    }

    fn gpu(&self, line: usize, field: &str) -> Result<Gpu> {
        Gpu::parse(field).ok_or_else(|| Error::InvalidRow {
            line,
            message: format!("{}: unknown device `{field}`", self.fixture),
        })
    }

    fn scenery(&self, line: usize, field: &str) -> Result<u8> {
        field.parse().map_err(|_| Error::InvalidRow {
            line,
            message: format!("{}: bad scenery `{field}`", self.fixture),
        })
    }
}

pub fn launch_overhead_rows() -> Result<Vec<LaunchOverheadRow>> {
    let tsv = Tsv::read(
        Fixture::LaunchOverheadT1,
        &["launch_type", "launch_overhead_ns", "null_kernel_total_latency_ns"],
        3,
    )?;
    tsv.rows
        .iter()
        .map(|(line, f)| {
            let launch_type = match f[0] {
                "traditional" => LaunchType::Traditional,
                "cooperative" => LaunchType::Cooperative,
                "cooperative_multi_device" => LaunchType::CooperativeMultiDevice,
                other => {
                    return Err(Error::InvalidRow {
                        line: *line,
                        message: format!("unknown launch type `{other}`"),
                    })
                }
            };
            Ok(LaunchOverheadRow {
                launch_type,
                launch_overhead_ns: tsv.number(*line, f[1])?,
                null_kernel_total_latency_ns: tsv.number(*line, f[2])?,
            })
        })
        .collect()
}

pub fn warp_sync_rows() -> Result<Vec<WarpSyncRow>> {
    let tsv = Tsv::read(
        Fixture::WarpSyncT2,
        &[
            "type",
            "group_size",
            "latency_cycles_v100",
            "latency_cycles_p100",
            "throughput_v100",
            "throughput_p100",
            "reference_v100",
            "reference_p100",
        ],
        6,
    )?;
    tsv.rows
        .iter()
        .map(|(line, f)| {
            Ok(WarpSyncRow {
                kind: f[0].to_string(),
                group_size: f[1].to_string(),
                latency_cycles: tsv.per_gpu(*line, f[2], f[3])?,
                throughput: tsv.per_gpu(*line, f[4], f[5])?,
                reference: tsv.per_gpu_optional(*line, f[6], f[7])?,
            })
        })
        .collect()
}

pub fn concurrency_rows() -> Result<Vec<ConcurrencyRow>> {
    let tsv = Tsv::read(
        Fixture::ConcurrencyT3,
        &[
            "scenery",
            "label",
            "bandwidth_v100",
            "bandwidth_p100",
            "latency_v100",
            "latency_p100",
            "concurrency_v100",
            "concurrency_p100",
        ],
        4,
    )?;
    tsv.rows
        .iter()
        .map(|(line, f)| {
            Ok(ConcurrencyRow {
                scenery: tsv.scenery(*line, f[0])?,
                label: f[1].to_string(),
                bandwidth: tsv.per_gpu(*line, f[2], f[3])?,
                latency_cycles: tsv.per_gpu(*line, f[4], f[5])?,
                concurrency_bytes: tsv.per_gpu(*line, f[6], f[7])?,
            })
        })
        .collect()
}

pub fn switch_point_rows() -> Result<Vec<SwitchPointRow>> {
    let tsv = Tsv::read(
        Fixture::SwitchPointsT4,
        &[
            "scenery",
            "label",
            "point",
            "sync_cycles_v100",
            "sync_cycles_p100",
            "switch_point_v100",
            "switch_point_p100",
        ],
        4,
    )?;
    tsv.rows
        .iter()
        .map(|(line, f)| {
            let point = match f[2] {
                "N_l" => PointKind::Above,
                "N_m" => PointKind::Between,
                other => {
                    return Err(Error::InvalidRow {
                        line: *line,
                        message: format!("unknown switch point `{other}`"),
                    })
                }
            };
            Ok(SwitchPointRow {
                scenery: tsv.scenery(*line, f[0])?,
                label: f[1].to_string(),
                point,
                sync_cycles: tsv.per_gpu_optional(*line, f[3], f[4])?,
                switch_point_bytes: tsv.per_gpu(*line, f[5], f[6])?,
            })
        })
        .collect()
}

pub fn reduction_bw_rows() -> Result<Vec<ReductionBwRow>> {
    let tsv = Tsv::read(
        Fixture::ReductionBwT5,
        &["gpu", "implicit", "grid_sync", "cub", "cuda_sample", "theory"],
        2,
    )?;
    tsv.rows
        .iter()
        .map(|(line, f)| {
            Ok(ReductionBwRow {
                gpu: tsv.gpu(*line, f[0])?,
                implicit: tsv.number(*line, f[1])?,
                grid_sync: tsv.number(*line, f[2])?,
                cub: tsv.number(*line, f[3])?,
                cuda_sample: tsv.number(*line, f[4])?,
                theory: tsv.number(*line, f[5])?,
            })
        })
        .collect()
}

pub fn warp_reduction_rows() -> Result<Vec<WarpReductionRow>> {
    let tsv = Tsv::read(
        Fixture::WarpReductionT6,
        &["gpu", "serial", "nosync", "volatile_tile", "tile", "coa", "tile_shuffle", "coa_shuffle"],
        2,
    )?;
    tsv.rows
        .iter()
        .map(|(line, f)| {
            let n = |i: usize| tsv.number(*line, f[i]);
            Ok(WarpReductionRow {
                gpu: tsv.gpu(*line, f[0])?,
                serial: n(1)?,
                nosync: n(2)?,
                volatile_tile: n(3)?,
                tile: n(4)?,
                coa: n(5)?,
                tile_shuffle: n(6)?,
                coa_shuffle: n(7)?,
            })
        })
        .collect()
}

/// One-time launch costs per launch API.
pub fn launch_overheads() -> Result<LaunchOverheads> {
    let rows = launch_overhead_rows()?;
    let find = |t: LaunchType| {
        rows.iter()
            .find(|r| r.launch_type == t)
            .map(|r| r.launch_overhead_ns)
            .ok_or_else(|| Error::validation(format!("no {} launch row", t.as_str())))
    };
    Ok(LaunchOverheads {
        traditional_ns: find(LaunchType::Traditional)?,
        cooperative_ns: find(LaunchType::Cooperative)?,
        multi_device_ns: find(LaunchType::CooperativeMultiDevice)?,
    })
}

/// Per-barrier latencies for `gpu`. Only V100 has barrier data; P100 yields an
/// empty table.
pub fn barrier_table(gpu: Gpu) -> Result<SyncTable> {
    match gpu {
        Gpu::V100 => {
            Fixture::BarrierLatencyV100.verify()?;
            SyncTable::parse(Fixture::BarrierLatencyV100.contents())
        }
        Gpu::P100 => Ok(SyncTable::default()),
    }
}

/// Block-synchronization throughput over the launch grid, in warp
/// synchronizations per cycle.
///
/// The sweep rises linearly with resident warps and saturates at the
/// tabulated block(warp) throughput once the SM is full.
pub fn block_sync_sweep(gpu: Gpu) -> Result<Vec<SweepPoint>> {
    let profile = gpu.profile()?;
    let peak = warp_sync_rows()?
        .into_iter()
        .find(|r| r.kind == "block_warp")
        .map(|r| r.throughput.get(gpu))
        .ok_or_else(|| Error::validation("no block_warp row"))?;
    let cap = f64::from(profile.max_warps_per_sm);
    let mut sweep = Vec::new();
    for blocks_per_sm in 1..=32 {
        for threads_per_block in (profile.warp_size..=profile.max_threads_per_block).step_by(profile.warp_size as usize) {
            let warps = profile.active_warps_per_sm(blocks_per_sm, threads_per_block)?;
            sweep.push(SweepPoint {
                threads_per_block,
                blocks_per_sm,
                throughput: peak * f64::from(warps) / cap,
            });
        }
    }
    Ok(sweep)
}
