//! Plot-ready data: heatmaps over the launch grid and series over GPU count.

use crate::device::DeviceProfile;
use crate::error::Result;
use crate::io::report::{Heatmap, Series, SeriesSet};
use crate::recommend::{BarrierMechanism, SyncTable};

/// Blocks per SM covered by every heatmap.
pub const BLOCKS_PER_SM: std::ops::RangeInclusive<u32> = 1..=32;

fn launch_grid(profile: &DeviceProfile) -> Heatmap {
    let columns = (profile.warp_size..=profile.max_threads_per_block)
        .step_by(profile.warp_size as usize)
        .collect();
    Heatmap::new("blocks_per_sm", "threads_per_block", BLOCKS_PER_SM.collect(), columns)
}

/// Active warps per SM for every launch configuration.
pub fn occupancy_heatmap(profile: &DeviceProfile) -> Result<Heatmap> {
    profile.validate()?;
    let mut h = launch_grid(profile);
    for (r, &blocks) in h.rows.iter().enumerate() {
        for (c, &threads) in h.columns.iter().enumerate() {
            h.values[r][c] = Some(f64::from(profile.active_warps_per_sm(blocks, threads)?));
        }
    }
    Ok(h)
}

/// Single-GPU grid barrier latency in microseconds; cells without data are empty.
pub fn grid_sync_heatmap(profile: &DeviceProfile, table: &SyncTable) -> Result<Heatmap> {
    profile.validate()?;
    let mut h = launch_grid(profile);
    for (r, &blocks) in h.rows.iter().enumerate() {
        for (c, &threads) in h.columns.iter().enumerate() {
            h.values[r][c] = table
                .lookup(BarrierMechanism::Grid, 1, blocks, threads)
                .map(|ns| ns / 1000.0);
        }
    }
    Ok(h)
}

/// Multi-GPU barrier latency in microseconds against GPU count, one series
/// per mechanism, at a fixed launch configuration.
pub fn multi_gpu_series(table: &SyncTable, blocks_per_sm: u32, threads_per_block: u32) -> SeriesSet {
    let mechanisms = [
        BarrierMechanism::CpuSide,
        BarrierMechanism::MultiDeviceLaunch,
        BarrierMechanism::MultiGrid,
    ];
    let series = mechanisms
        .iter()
        .map(|&m| Series {
            name: m.to_string(),
            points: table
                .gpu_counts(m)
                .into_iter()
                .filter_map(|g| {
                    table
                        .lookup(m, g, blocks_per_sm, threads_per_block)
                        .map(|ns| (f64::from(g), ns / 1000.0))
                })
                .collect(),
        })
        .filter(|s| !s.points.is_empty())
        .collect();
    SeriesSet {
        x_label: "gpu_count".into(),
        y_label: "latency_us".into(),
        series,
    }
}
