//! Static device parameters and the occupancy calculation built on them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the GPUs of a node talk to each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interconnect {
    Pcie,
    Nvlink,
    None,
}

impl Interconnect {
    pub fn as_str(self) -> &'static str {
        match self {
            Interconnect::Pcie => "pcie",
            Interconnect::Nvlink => "nvlink",
            Interconnect::None => "none",
        }
    }
}

impl fmt::Display for Interconnect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Interconnect {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pcie" => Ok(Interconnect::Pcie),
            "nvlink" => Ok(Interconnect::Nvlink),
            "none" => Ok(Interconnect::None),
            other => Err(Error::validation(format!("unknown interconnect `{other}`"))),
        }
    }
}

/// Device description that scales and bounds every model output.
///
/// Occupancy limiters other than the warp cap (registers, shared memory) are
/// expressed by lowering `max_warps_per_sm`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub name: String,
    pub sm_count: u32,
    pub warp_size: u32,
    pub max_warps_per_sm: u32,
    pub max_threads_per_block: u32,
    pub clock_mhz: f64,
    pub gpu_count: u32,
    pub interconnect: Interconnect,
}

impl DeviceProfile {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("sm_count", self.sm_count),
            ("warp_size", self.warp_size),
            ("max_warps_per_sm", self.max_warps_per_sm),
            ("max_threads_per_block", self.max_threads_per_block),
            ("gpu_count", self.gpu_count),
        ];
        for (field, value) in counts {
            if value == 0 {
                return Err(Error::validation(format!("{field} must be positive")));
            }
        }
        if !(self.clock_mhz.is_finite() && self.clock_mhz > 0.0) {
            return Err(Error::validation("clock_mhz must be a positive number"));
        }
        if !self.max_threads_per_block.is_multiple_of(self.warp_size) {
            return Err(Error::validation(format!(
                "warp_size {} does not divide max_threads_per_block {}",
                self.warp_size, self.max_threads_per_block
            )));
        }
        if u64::from(self.max_warps_per_sm) * u64::from(self.warp_size)
            < u64::from(self.max_threads_per_block)
        {
            return Err(Error::validation(
                "max_warps_per_sm * warp_size must cover max_threads_per_block",
            ));
        }
        Ok(())
    }

    /// Number of warps a block of `threads_per_block` threads occupies.
    pub fn warps_per_block(&self, threads_per_block: u32) -> u32 {
        threads_per_block.div_ceil(self.warp_size)
    }

    /// Resident warps per SM for a launch configuration:
    /// `min(max_warps_per_sm, blocks_per_sm * ceil(threads_per_block / warp_size))`.
    pub fn active_warps_per_sm(&self, blocks_per_sm: u32, threads_per_block: u32) -> Result<u32> {
        if blocks_per_sm == 0 || threads_per_block == 0 {
            return Err(Error::validation(
                "blocks_per_sm and threads_per_block must be positive",
            ));
        }
        if threads_per_block > self.max_threads_per_block {
            return Err(Error::validation(format!(
                "{threads_per_block} threads per block exceeds the device cap of {}",
                self.max_threads_per_block
            )));
        }
        let requested = u64::from(blocks_per_sm) * u64::from(self.warps_per_block(threads_per_block));
        Ok(requested.min(u64::from(self.max_warps_per_sm)) as u32)
    }

    pub fn cycles_to_ns(&self, cycles: f64) -> f64 {
        cycles * 1_000.0 / self.clock_mhz
    }

    pub fn ns_to_cycles(&self, ns: f64) -> f64 {
        ns * self.clock_mhz / 1_000.0
    }
}
