//! Recomputes the published concurrency and switch-point tables from their
//! latency and throughput inputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::fixtures::{concurrency_rows, switch_point_rows, Gpu, PointKind};
use crate::model::{little_law_concurrency, CostPoint, Crossover, SafetyFactor, SwitchPoints, SyncCost, SyncLevel};
use crate::recommend::Candidate;

/// Switch points are compared after rounding to whole bytes, as tabulated.
pub const SWITCH_POINT_TOLERANCE: f64 = 0.015;
pub const CONCURRENCY_TOLERANCE: f64 = 0.02;

/// Barriers per reduction step behind the tabulated sync latencies.
pub const SYNCS_PER_STEP: u32 = 5;

pub const SCENERIES: [u8; 2] = [1, 2];

/// The two configurations compared in one scenery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenery {
    pub gpu: Gpu,
    pub id: u8,
    pub basic: CostPoint,
    pub more: CostPoint,
    pub sync: SyncCost,
}

impl Scenery {
    pub fn load(gpu: Gpu, id: u8) -> Result<Scenery> {
        let rows: Vec<_> = concurrency_rows()?.into_iter().filter(|r| r.scenery == id).collect();
        let [basic, more] = rows.as_slice() else {
            return Err(Error::validation(format!("scenery {id} does not exist")));
        };
        let point = |r: &crate::io::fixtures::ConcurrencyRow| {
            CostPoint::new(r.label.clone(), r.latency_cycles.get(gpu), r.bandwidth.get(gpu))
        };
        let total = switch_point_rows()?
            .into_iter()
            .filter(|r| r.scenery == id)
            .find_map(|r| r.sync_cycles.get(gpu))
            .ok_or_else(|| Error::validation(format!("scenery {id} has no sync latency")))?;
        // scenery 1 is a warp-wide step, scenery 2 a block-wide one
        let level = if id == 1 { SyncLevel::WarpTile } else { SyncLevel::Block };
        Ok(Scenery {
            gpu,
            id,
            basic: point(basic)?,
            more: point(more)?,
            sync: SyncCost::new(level, total / f64::from(SYNCS_PER_STEP), SYNCS_PER_STEP)?,
        })
    }

    /// Candidates for the reduction recommender; the smaller configuration
    /// needs no barrier.
    pub fn candidates(&self) -> Result<Vec<Candidate>> {
        Ok(vec![
            Candidate::new(self.basic.clone(), SyncCost::total_of(self.sync.level, 0.0)?),
            Candidate::new(self.more.clone(), self.sync),
        ])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchPointRecord {
    pub device: Gpu,
    pub scenery: u8,
    pub label: String,
    pub sync_cycles: f64,
    pub n_l: Crossover,
    pub n_m: f64,
}

/// One published switch point against its recomputation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCheck {
    pub device: Gpu,
    pub scenery: u8,
    pub point: PointKind,
    pub computed: Option<f64>,
    pub published: f64,
}

impl PointCheck {
    pub fn rounded(&self) -> Option<f64> {
        self.computed.map(f64::round)
    }

    pub fn relative_error(&self) -> Option<f64> {
        self.computed.map(|c| (c - self.published).abs() / self.published)
    }

    pub fn rounded_relative_error(&self) -> Option<f64> {
        self.rounded().map(|c| (c - self.published).abs() / self.published)
    }

    pub fn within_tolerance(&self) -> bool {
        self.rounded_relative_error().is_some_and(|e| e <= SWITCH_POINT_TOLERANCE)
    }
}

pub fn predict_switch_points(gpus: &[Gpu], sceneries: &[u8], safety: SafetyFactor) -> Result<Vec<SwitchPointRecord>> {
    let mut out = Vec::new();
    for &gpu in gpus {
        for &id in sceneries {
            let s = Scenery::load(gpu, id)?;
            let points = SwitchPoints::compute(&s.basic, &s.more, &s.sync, safety);
            out.push(SwitchPointRecord {
                device: gpu,
                scenery: id,
                label: s.more.label().to_string(),
                sync_cycles: s.sync.total(),
                n_l: points.above,
                n_m: points.between,
            });
        }
    }
    Ok(out)
}

/// All eight published switch points, recomputed without a safety factor.
pub fn switch_point_checks() -> Result<Vec<PointCheck>> {
    let published = switch_point_rows()?;
    let mut checks = Vec::new();
    for gpu in Gpu::ALL {
        for rec in predict_switch_points(&[gpu], &SCENERIES, SafetyFactor::NONE)? {
            for row in published.iter().filter(|r| r.scenery == rec.scenery) {
                let computed = match row.point {
                    PointKind::Above => rec.n_l.bytes(),
                    PointKind::Between => Some(rec.n_m),
                };
                checks.push(PointCheck {
                    device: gpu,
                    scenery: rec.scenery,
                    point: row.point,
                    computed,
                    published: row.switch_point_bytes.get(gpu),
                });
            }
        }
    }
    Ok(checks)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcurrencyCheck {
    pub device: Gpu,
    pub scenery: u8,
    pub label: String,
    pub latency_cycles: f64,
    pub throughput: f64,
    pub computed: f64,
    pub published: f64,
}

impl ConcurrencyCheck {
    pub fn relative_error(&self) -> f64 {
        (self.computed - self.published).abs() / self.published
    }

    pub fn within_tolerance(&self) -> bool {
        self.relative_error() <= CONCURRENCY_TOLERANCE
    }
}

pub fn concurrency_checks() -> Result<Vec<ConcurrencyCheck>> {
    let mut checks = Vec::new();
    for gpu in Gpu::ALL {
        for row in concurrency_rows()? {
            let t = row.latency_cycles.get(gpu);
            let thr = row.bandwidth.get(gpu);
            checks.push(ConcurrencyCheck {
                device: gpu,
                scenery: row.scenery,
                label: row.label.clone(),
                latency_cycles: t,
                throughput: thr,
                computed: little_law_concurrency(t, thr)?,
                published: row.concurrency_bytes.get(gpu),
            });
        }
    }
    Ok(checks)
}
