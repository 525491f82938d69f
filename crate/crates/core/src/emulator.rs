//! Synthetic measurements from the closed-form timing models.
//!
//! * fusion arm with `x` launches of `y` wait units: `x*O + x*y*u` ns
//! * repeat arm with `r` repeats of an instruction: `base + r*T` cycles
//!
//! Each sample gets independent Gaussian noise of standard deviation
//! `noise_sigma` (in the arm's unit) and is clamped at zero. Generation is a
//! pure function of the device and request.

use std::collections::BTreeMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::analysis::{Reducer, TimingSample};
use crate::error::{Error, Result};
use crate::io::measurements::{Experiment, ExperimentDescriptor, ExperimentKind, MeasurementBatch, Provenance};
use crate::model::SyncLevel;

/// Where a barrier latency applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SyncKey {
    pub level: SyncLevel,
    pub blocks_per_sm: u32,
    pub threads_per_block: u32,
    pub gpu_count: u32,
}

impl fmt::Display for SyncKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}.{}.{}.{}",
            self.level, self.blocks_per_sm, self.threads_per_block, self.gpu_count
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmulatedDevice {
    pub name: String,
    pub launch_overhead_ns: f64,
    pub wait_unit_ns: f64,
    /// Cycles a repeat kernel spends outside the instruction under test.
    pub kernel_base_cycles: f64,
    pub instr_latency_cycles: BTreeMap<String, f64>,
    pub sync_latency: BTreeMap<SyncKey, f64>,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl EmulatedDevice {
    /// V100 defaults: traditional launch overhead, 4-cycle float add and the
    /// warp and block barrier latencies of a single warp.
    pub fn v100() -> Self {
        let key = |level| SyncKey {
            level,
            blocks_per_sm: 1,
            threads_per_block: 32,
            gpu_count: 1,
        };
        EmulatedDevice {
            name: "V100".into(),
            launch_overhead_ns: 1081.0,
            wait_unit_ns: 10_000.0,
            kernel_base_cycles: 3_000.0,
            instr_latency_cycles: BTreeMap::from([("fadd".to_string(), 4.0)]),
            sync_latency: BTreeMap::from([
                (key(SyncLevel::WarpTile), 14.0),
                (key(SyncLevel::WarpCoalesced), 14.0),
                (key(SyncLevel::Block), 22.0),
            ]),
            noise_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let non_negative = |what: &str, x: f64| {
            if x.is_finite() && x >= 0.0 {
                Ok(())
            } else {
                Err(Error::validation(format!("{what} must be a non-negative number, got {x}")))
            }
        };
        non_negative("launch_overhead_ns", self.launch_overhead_ns)?;
        non_negative("wait_unit_ns", self.wait_unit_ns)?;
        non_negative("kernel_base_cycles", self.kernel_base_cycles)?;
        non_negative("noise_sigma", self.noise_sigma)?;
        for (label, &t) in &self.instr_latency_cycles {
            non_negative(&format!("instr.{label}"), t)?;
        }
        for (key, &t) in &self.sync_latency {
            non_negative(&format!("sync.{key}"), t)?;
        }
        if self.name.trim().is_empty() {
            return Err(Error::validation("emulated device needs a name"));
        }
        Ok(())
    }

    /// Parses a `key=value` description. Unset keys keep their [`EmulatedDevice::v100`]
    /// values; `instr.<label>` and `sync.<level>.<blocks>.<threads>.<gpus>` add entries.
    pub fn parse(text: &str) -> Result<EmulatedDevice> {
        let mut dev = EmulatedDevice::v100();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(line_no, 1, "expected `key=value`"))?;
            let (key, value) = (key.trim(), value.trim());
            let col = raw.find('=').unwrap_or(0) + 2;
            let real = || {
                value
                    .parse::<f64>()
                    .map_err(|_| Error::parse(line_no, col, format!("`{key}` needs a number, got `{value}`")))
            };
            match key {
                "name" => dev.name = value.to_string(),
                "launch_overhead_ns" => dev.launch_overhead_ns = real()?,
                "wait_unit_ns" => dev.wait_unit_ns = real()?,
                "kernel_base_cycles" => dev.kernel_base_cycles = real()?,
                "noise_sigma" => dev.noise_sigma = real()?,
                "seed" => {
                    dev.seed = value
                        .parse()
                        .map_err(|_| Error::parse(line_no, col, format!("bad seed `{value}`")))?
                }
                other => {
                    if let Some(label) = other.strip_prefix("instr.").filter(|l| !l.is_empty()) {
                        dev.instr_latency_cycles.insert(label.to_string(), real()?);
                    } else if let Some(spec) = other.strip_prefix("sync.") {
                        let sync_key = parse_sync_key(spec)
                            .ok_or_else(|| Error::parse(line_no, 1, format!("bad sync key `{other}`")))?;
                        dev.sync_latency.insert(sync_key, real()?);
                    } else {
                        return Err(Error::parse(line_no, 1, format!("unknown emulator key `{other}`")));
                    }
                }
            }
        }
        dev.validate()?;
        Ok(dev)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<EmulatedDevice> {
        EmulatedDevice::parse(&std::fs::read_to_string(path)?)
    }

    fn rng(&self) -> Result<(ChaCha8Rng, Normal<f64>)> {
        self.validate()?;
        let normal = Normal::new(0.0, self.noise_sigma)
            .map_err(|e| Error::validation(format!("noise_sigma: {e}")))?;
        Ok((ChaCha8Rng::seed_from_u64(self.seed), normal))
    }

    fn batch(&self) -> MeasurementBatch {
        let mut batch = MeasurementBatch::new(self.name.clone(), Provenance::Emulator);
        batch.params.insert("seed".into(), self.seed.to_string());
        batch.params.insert("noise_sigma".into(), self.noise_sigma.to_string());
        batch
    }
}

fn parse_sync_key(spec: &str) -> Option<SyncKey> {
    let parts: Vec<&str> = spec.split('.').collect();
    let [level, blocks, threads, gpus] = parts.as_slice() else {
        return None;
    };
    let positive = |s: &str| s.parse::<u32>().ok().filter(|&x| x > 0);
    Some(SyncKey {
        level: SyncLevel::parse(level)?,
        blocks_per_sm: positive(blocks)?,
        threads_per_block: positive(threads)?,
        gpu_count: positive(gpus)?,
    })
}

fn draw(mean: f64, runs: u32, rng: &mut ChaCha8Rng, noise: &Normal<f64>, cycles: bool) -> Vec<TimingSample> {
    (0..runs)
        .map(|run| {
            let value = (mean + noise.sample(rng)).max(0.0);
            if cycles {
                TimingSample::cycles(run, value)
            } else {
                TimingSample::ns(run, value)
            }
        })
        .collect()
}

fn check_positive(pairs: &[(&str, u32)]) -> Result<()> {
    for (what, v) in pairs {
        if *v == 0 {
            return Err(Error::validation(format!("{what} must be at least 1")));
        }
    }
    Ok(())
}

/// Mirrored launch-fusion arms `lat_ij_{i}_{j}` and `lat_ji_{j}_{i}`.
pub fn generate_fusion_batch(dev: &EmulatedDevice, i: u32, j: u32, runs: u32) -> Result<MeasurementBatch> {
    check_positive(&[("launches", i), ("wait units", j), ("runs", runs)])?;
    let (mut rng, noise) = dev.rng()?;
    let mut batch = dev.batch();
    batch.params.insert("launch_overhead_ns".into(), dev.launch_overhead_ns.to_string());
    batch.params.insert("wait_unit_ns".into(), dev.wait_unit_ns.to_string());
    let group = format!("fusion_{i}_{j}");
    for (id, x, y) in [(format!("lat_ij_{i}_{j}"), i, j), (format!("lat_ji_{j}_{i}"), j, i)] {
        let (xf, yf) = (f64::from(x), f64::from(y));
        let mean = xf * dev.launch_overhead_ns + xf * yf * dev.wait_unit_ns;
        batch.experiments.push(Experiment {
            descriptor: ExperimentDescriptor {
                id,
                group: group.clone(),
                kind: ExperimentKind::FusionArm {
                    launches: x,
                    wait_units: y,
                },
                reducer: Reducer::Mean,
            },
            samples: draw(mean, runs, &mut rng, &noise, false),
        });
    }
    Ok(batch)
}

fn repeat_batch(
    dev: &EmulatedDevice,
    label: &str,
    latency: f64,
    r1: u32,
    r2: u32,
    runs: u32,
    reducer: Reducer,
) -> Result<MeasurementBatch> {
    check_positive(&[("repeat count", r2), ("runs", runs)])?;
    if r1 <= r2 {
        return Err(Error::validation(format!(
            "the first kernel must repeat more often than the second ({r1} <= {r2})"
        )));
    }
    let (mut rng, noise) = dev.rng()?;
    let mut batch = dev.batch();
    batch.params.insert("kernel_base_cycles".into(), dev.kernel_base_cycles.to_string());
    for (id, r) in [(format!("k1_{label}"), r1), (format!("k2_{label}"), r2)] {
        let mean = dev.kernel_base_cycles + f64::from(r) * latency;
        batch.experiments.push(Experiment {
            descriptor: ExperimentDescriptor {
                id,
                group: label.to_string(),
                kind: ExperimentKind::RepeatArm {
                    repeats: r,
                    label: Some(label.to_string()),
                },
                reducer,
            },
            samples: draw(mean, runs, &mut rng, &noise, true),
        });
    }
    Ok(batch)
}

/// Two repeat arms for `instr`, with `r1 > r2 >= 1`.
pub fn generate_repeatdiff_batch(dev: &EmulatedDevice, instr: &str, r1: u32, r2: u32, runs: u32) -> Result<MeasurementBatch> {
    let latency = *dev
        .instr_latency_cycles
        .get(instr)
        .ok_or_else(|| Error::UnknownInstruction(instr.to_string()))?;
    repeat_batch(dev, instr, latency, r1, r2, runs, Reducer::Mean)
}

/// Two repeat arms for a barrier. Warp-level barriers use the fastest-run reducer.
pub fn generate_sync_batch(dev: &EmulatedDevice, key: SyncKey, r1: u32, r2: u32, runs: u32) -> Result<MeasurementBatch> {
    let latency = *dev
        .sync_latency
        .get(&key)
        .ok_or_else(|| Error::UnknownInstruction(format!("sync.{key}")))?;
    let reducer = match key.level {
        SyncLevel::WarpTile | SyncLevel::WarpCoalesced => Reducer::Fastest,
        _ => Reducer::Mean,
    };
    let label = format!(
        "{}_b{}_t{}_g{}",
        key.level, key.blocks_per_sm, key.threads_per_block, key.gpu_count
    );
    repeat_batch(dev, &label, latency, r1, r2, runs, reducer)
}
