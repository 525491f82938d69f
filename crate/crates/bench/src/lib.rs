//! Fixed workloads shared by the benchmarks.

use syncperf_core::io::fixtures::{barrier_table, launch_overheads};
use syncperf_core::recommend::{LaunchOverheads, SyncTable};
use syncperf_core::reproduce::Scenery;
use syncperf_core::{
    generate_fusion_batch, generate_repeatdiff_batch, Candidate, CostPoint, EmulatedDevice, Gpu, MeasurementBatch,
    ReductionQuery, SafetyFactor, SyncCost, SyncLevel,
};

/// A noisy fusion batch and a noisy repeat batch, `runs` samples per arm.
pub fn emulated_batches(runs: u32) -> (MeasurementBatch, MeasurementBatch) {
    let mut dev = EmulatedDevice::v100();
    dev.noise_sigma = 150.0;
    dev.seed = 42;
    let fusion = generate_fusion_batch(&dev, 5, 1, runs).expect("valid fusion request");
    let repeat = generate_repeatdiff_batch(&dev, "fadd", 1024, 512, runs).expect("valid repeat request");
    (fusion, repeat)
}

/// V100 scenery-2 candidates for `elements` doubles.
pub fn reduction_query(elements: u64) -> ReductionQuery {
    let scenery = Scenery::load(Gpu::V100, 2).expect("fixture scenery");
    ReductionQuery {
        input_bytes: elements * 8,
        element_bytes: 8,
        device: Gpu::V100.profile().expect("fixture profile"),
        candidates: scenery.candidates().expect("fixture candidates"),
        safety: SafetyFactor::NONE,
    }
}

/// `count` candidates whose throughput doubles at every step.
pub fn candidate_ladder(count: usize) -> Vec<Candidate> {
    (0..count)
        .map(|k| {
            let thr = 0.5 * 2f64.powi(k as i32);
            Candidate::new(
                CostPoint::new(format!("x{k}"), 12.0, thr).expect("positive point"),
                SyncCost::total_of(SyncLevel::Block, 40.0 * k as f64).expect("non-negative sync"),
            )
        })
        .collect()
}

pub fn v100_barrier_inputs() -> (SyncTable, LaunchOverheads) {
    (
        barrier_table(Gpu::V100).expect("fixture table"),
        launch_overheads().expect("fixture overheads"),
    )
}
