use proptest::prelude::*;
use syncperf_core::analysis::{Reducer, TimingSample};
use syncperf_core::io::measurements::{Experiment, ExperimentDescriptor, ExperimentKind};
use syncperf_core::io::profile::{parse_device_profile, profile_to_text};
use syncperf_core::{
    analyze_batch, generate_fusion_batch, generate_repeatdiff_batch, instruction_latency, launch_overhead,
    parse_measurements, DeviceProfile, EmulatedDevice, FusionExperiment, Interconnect, MeasurementBatch, Provenance,
    RepeatDiffExperiment,
};

fn ns(values: &[f64]) -> Vec<TimingSample> {
    values.iter().enumerate().map(|(i, &v)| TimingSample::ns(i as u32, v)).collect()
}

fn cycles(values: &[f64]) -> Vec<TimingSample> {
    values.iter().enumerate().map(|(i, &v)| TimingSample::cycles(i as u32, v)).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn fusion_recovers_overhead(o in 1.0f64..1e5, u in 0.0f64..1e5, i in 1u32..50, j in 1u32..50) {
        prop_assume!(i != j);
        let arm = |x: u32, y: u32| f64::from(x) * o + f64::from(x) * f64::from(y) * u;
        let exp = FusionExperiment {
            launches: i,
            wait_units: j,
            forward: ns(&[arm(i, j)]),
            mirrored: ns(&[arm(j, i)]),
            reducer: Reducer::Mean,
        };
        prop_assert!(rel(launch_overhead(&exp).unwrap().value, o) <= 1e-9);
    }

    #[test]
    fn repeat_differencing_recovers_latency(base in 0.0f64..1e7, t in 0.0f64..1e3, r2 in 1u32..5000, dr in 1u32..5000) {
        let r1 = r2 + dr;
        let exp = RepeatDiffExperiment {
            repeats_high: r1,
            repeats_low: r2,
            high: cycles(&[base + f64::from(r1) * t; 2]),
            low: cycles(&[base + f64::from(r2) * t; 2]),
            reducer: Reducer::Mean,
        };
        let est = instruction_latency(&exp).unwrap();
        let scale = (base + f64::from(r1) * t) / f64::from(dr);
        prop_assert!((est.value - t).abs() <= 1e-12 * scale.max(1.0));
    }

    #[test]
    fn constant_offsets_cancel(
        high in prop::collection::vec(0.0f64..1e5, 2..8),
        low in prop::collection::vec(0.0f64..1e5, 2..8),
        offset in 0.0f64..1e6,
        i in 2u32..20,
    ) {
        let shift = |v: &[f64]| v.iter().map(|x| x + offset).collect::<Vec<_>>();
        let plain = FusionExperiment { launches: i, wait_units: 1, forward: ns(&high), mirrored: ns(&low), reducer: Reducer::Mean };
        let moved = FusionExperiment { forward: ns(&shift(&high)), mirrored: ns(&shift(&low)), ..plain.clone() };
        let (a, b) = (launch_overhead(&plain).unwrap(), launch_overhead(&moved).unwrap());
        let tol = 1e-9 * (2e5 + offset);
        prop_assert!((a.value - b.value).abs() <= tol);
        prop_assert!((a.stddev.unwrap() - b.stddev.unwrap()).abs() <= tol);

        let plain = RepeatDiffExperiment { repeats_high: i, repeats_low: 1, high: cycles(&high), low: cycles(&low), reducer: Reducer::Mean };
        let moved = RepeatDiffExperiment { high: cycles(&shift(&high)), low: cycles(&shift(&low)), ..plain.clone() };
        let (a, b) = (instruction_latency(&plain).unwrap(), instruction_latency(&moved).unwrap());
        prop_assert!((a.value - b.value).abs() <= tol);
    }

    #[test]
    fn emulator_and_estimator_compose_to_identity(o in 0.0f64..1e4, u in 0.0f64..1e5, i in 1u32..12, j in 1u32..12, t in 0.0f64..500.0) {
        prop_assume!(i != j);
        let mut dev = EmulatedDevice::v100();
        dev.launch_overhead_ns = o;
        dev.wait_unit_ns = u;
        dev.instr_latency_cycles.insert("op".into(), t);
        let fusion = analyze_batch(&generate_fusion_batch(&dev, i, j, 2).unwrap(), None).unwrap();
        prop_assert!((fusion.records[0].estimate.value - o).abs() <= 1e-9 * (o + f64::from(i * j) * u).max(1.0));
        let repeat = analyze_batch(&generate_repeatdiff_batch(&dev, "op", 64 + i, 64 - j, 2).unwrap(), None).unwrap();
        prop_assert!((repeat.records[0].estimate.value - t).abs() <= 1e-9 * (3000.0 + 80.0 * t));
    }

    #[test]
    fn emulator_is_deterministic(seed in any::<u64>(), sigma in 0.0f64..500.0, i in 1u32..10, j in 1u32..10, runs in 1u32..20) {
        let mut dev = EmulatedDevice::v100();
        dev.seed = seed;
        dev.noise_sigma = sigma;
        let a = generate_fusion_batch(&dev, i, j, runs).unwrap();
        let b = generate_fusion_batch(&dev, i, j, runs).unwrap();
        prop_assert_eq!(a.to_text(), b.to_text());
        let a = generate_repeatdiff_batch(&dev, "fadd", 100 + i, j, runs).unwrap();
        let b = generate_repeatdiff_batch(&dev, "fadd", 100 + i, j, runs).unwrap();
        prop_assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn emulated_batches_survive_save_load(seed in any::<u64>(), sigma in 0.0f64..1e4, i in 1u32..10, j in 1u32..10, runs in 1u32..10) {
        let mut dev = EmulatedDevice::v100();
        dev.seed = seed;
        dev.noise_sigma = sigma;
        let batch = generate_fusion_batch(&dev, i, j, runs).unwrap();
        prop_assert_eq!(&parse_measurements(&batch.to_text()).unwrap(), &batch);
        prop_assert_eq!(&parse_measurements(&batch.to_json()).unwrap(), &batch);
    }

    #[test]
    fn arbitrary_batches_survive_save_load(batch in arb_batch()) {
        let text = parse_measurements(&batch.to_text()).unwrap();
        prop_assert_eq!(&text, &batch);
        let json = parse_measurements(&batch.to_json()).unwrap();
        prop_assert_eq!(&json, &batch);
    }

    #[test]
    fn profiles_survive_save_load(
        sm in 1u32..200, warp_pow in 0u32..7, extra_warps in 0u32..64, blocks_pow in 0u32..6,
        clock in 1.0f64..5000.0, gpus in 1u32..16, ic in 0usize..3, name in "[A-Za-z][A-Za-z0-9 _-]{0,15}",
    ) {
        let warp_size = 1 << warp_pow;
        let max_threads_per_block = warp_size << blocks_pow;
        let profile = DeviceProfile {
            name: name.trim_end().to_string(),
            sm_count: sm,
            warp_size,
            max_warps_per_sm: max_threads_per_block / warp_size + extra_warps,
            max_threads_per_block,
            clock_mhz: clock,
            gpu_count: gpus,
            interconnect: [Interconnect::Pcie, Interconnect::Nvlink, Interconnect::None][ic],
        };
        prop_assert_eq!(parse_device_profile(&profile_to_text(&profile)).unwrap(), profile);
    }
}

fn arb_value() -> impl Strategy<Value = f64> {
    prop_oneof![0.0f64..1e9, (0u64..1_000_000).prop_map(|x| x as f64), Just(0.0), 1e-300f64..1e-290]
}

fn arb_batch() -> impl Strategy<Value = MeasurementBatch> {
    let experiment = (
        prop::bool::ANY,
        1u32..1000,
        1u32..1000,
        prop::option::of("[a-z]{1,6}"),
        prop::bool::ANY,
        prop::bool::ANY,
        prop::collection::vec(arb_value(), 0..6),
    );
    (
        "[A-Za-z0-9]{1,8}( [A-Za-z0-9]{1,4})?",
        prop::collection::btree_map("[a-z_]{1,6}", "[a-z0-9.]{1,8}", 0..3),
        prop::collection::vec(experiment, 0..5),
        0usize..3,
    )
        .prop_map(|(device, params, experiments, prov)| {
            let mut batch = MeasurementBatch::new(device, [Provenance::Hardware, Provenance::Emulator, Provenance::Fixture][prov]);
            batch.params = params;
            for (k, (fusion, a, b, label, fastest, gpu, values)) in experiments.into_iter().enumerate() {
                let kind = if fusion {
                    ExperimentKind::FusionArm { launches: a, wait_units: b }
                } else {
                    ExperimentKind::RepeatArm { repeats: a, label }
                };
                let samples = values
                    .into_iter()
                    .enumerate()
                    .map(|(r, v)| if gpu { TimingSample::cycles(r as u32, v) } else { TimingSample::ns(r as u32, v) })
                    .collect();
                batch.experiments.push(Experiment {
                    descriptor: ExperimentDescriptor {
                        id: format!("e{k}"),
                        group: format!("g{}", k / 2),
                        kind,
                        reducer: if fastest { Reducer::Fastest } else { Reducer::Mean },
                    },
                    samples,
                });
            }
            batch
        })
}
