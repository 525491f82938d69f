//! Performance model and measurement analysis for GPU synchronization.
//!
//! The model compares a smaller worker configuration against a larger one
//! that pays for barriers, using Little's Law concurrency to decide when the
//! extra workers start to pay off. The analysis side turns raw kernel timings
//! into launch overheads and per-instruction latencies.

pub mod analysis;
pub mod device;
pub mod emulator;
pub mod error;
pub mod io;
pub mod model;
pub mod plot;
pub mod recommend;
pub mod reproduce;
pub mod stats;

pub use analysis::{
    analyze_batch, instruction_latency, kernel_total_latency, launch_overhead, peak_throughput, saturation_check,
    AnalysisRecord, AnalysisReport, ClockDomain, Diagnostic, Estimate, FusionExperiment, Reducer,
    RepeatDiffExperiment, SweepPoint, TimingSample,
};
pub use device::{DeviceProfile, Interconnect};
pub use emulator::{generate_fusion_batch, generate_repeatdiff_batch, generate_sync_batch, EmulatedDevice, SyncKey};
pub use error::{Error, Result};
pub use io::fixtures::{Fixture, Gpu};
pub use io::measurements::{load_measurements, parse_measurements, save_measurements, MeasurementBatch, Provenance};
pub use io::profile::load_device_profile;
pub use io::report::{emit_report, Report, ReportFormat};
pub use model::{
    classify_scenario, little_law_concurrency, prefer_fewer_workers, switch_point_above, switch_point_between,
    CostPoint, Crossover, SafetyFactor, ScenarioKind, SwitchPoints, SwitchScenario, SyncCost, SyncLevel,
};
pub use recommend::{
    multi_grid_config_ok, recommend_barrier, recommend_reduction_config, BarrierAdvice, BarrierMechanism,
    BarrierQuery, Candidate, ReductionQuery, SyncTable,
};
