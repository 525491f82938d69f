//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use syncperf_cli::run;
use syncperf_core::io::fixtures::{barrier_table, concurrency_rows, launch_overheads, switch_point_rows, PointKind};
use syncperf_core::io::profile::{parse_device_profile, profile_to_text};
use syncperf_core::recommend::BarrierMechanism;
use syncperf_core::reproduce::{concurrency_checks, switch_point_checks, Scenery};
use syncperf_core::{
    analyze_batch, generate_fusion_batch, generate_repeatdiff_batch, parse_measurements, recommend_barrier,
    recommend_reduction_config, BarrierQuery, CostPoint, DeviceProfile, EmulatedDevice, Gpu, Interconnect,
    ReductionQuery, SafetyFactor, SwitchScenario, SyncCost, SyncLevel,
};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

struct Cli {
    code: i32,
    stdout: Vec<u8>,
    stderr: String,
}

fn cli(args: &[&str]) -> Cli {
    let mut argv = vec!["syncperf"];
    argv.extend_from_slice(args);
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run(argv, &mut std::io::empty(), &mut out, &mut err);
    Cli {
        code,
        stdout: out,
        stderr: String::from_utf8_lossy(&err).into_owned(),
    }
}

fn sample_stddev(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn switch_points() -> Check {
    let start = Instant::now();
    let o = cli(&["predict", "--fixtures", "all", "--scenery", "all", "--format", "tsv"]);
    let elapsed = start.elapsed();
    ensure(o.code == 0, || format!("predict failed: {}", o.stderr))?;
    let text = String::from_utf8(o.stdout).map_err(|e| e.to_string())?;

    let published = switch_point_rows().map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split('\t').collect();
        let gpu = Gpu::parse(f[0]).ok_or("bad device column")?;
        let scenery: u8 = f[1].parse().map_err(|_| "bad scenery column")?;
        for row in published.iter().filter(|r| r.scenery == scenery) {
            let column = match row.point {
                PointKind::Above => f[4],
                PointKind::Between => f[5],
            };
            let computed: f64 = column.parse().map_err(|_| format!("no switch point in `{line}`"))?;
            let expected = row.switch_point_bytes.get(gpu);
            // published values are whole bytes
            let err = (computed.round() - expected).abs() / expected;
            ensure(err <= 0.015, || {
                format!("{gpu} scenery {scenery} {}: {computed} vs {expected}", row.point.as_str())
            })?;
            worst = worst.max(err);
            compared += 1;
        }
    }
    ensure(compared == 8, || format!("compared {compared} of 8 switch points"))?;
    let checks = switch_point_checks().map_err(|e| e.to_string())?;
    ensure(checks.iter().all(|c| c.within_tolerance()), || "library check disagrees".into())?;
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("8/8 within 1.5% (worst {:.3}%), {elapsed:.1?}", worst * 100.0))
}

fn concurrency() -> Check {
    let rows = concurrency_rows().map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for gpu in Gpu::ALL {
        for r in &rows {
            let c = r.latency_cycles.get(gpu) * r.bandwidth.get(gpu);
            let err = (c - r.concurrency_bytes.get(gpu)).abs() / r.concurrency_bytes.get(gpu);
            ensure(err <= 0.02, || format!("{gpu} {}: {c} vs {}", r.label, r.concurrency_bytes.get(gpu)))?;
            worst = worst.max(err);
            n += 1;
        }
    }
    let checks = concurrency_checks().map_err(|e| e.to_string())?;
    ensure(checks.len() == n && checks.iter().all(|c| c.within_tolerance()), || {
        "library check disagrees".into()
    })?;
    Ok(format!("{n}/{n} within 2% (worst {:.3}%)", worst * 100.0))
}

fn decision_consistency() -> Check {
    const SETS: usize = 20_000;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut by_kind = [0usize; 3];
    for k in 0..SETS {
        let t = rng.random_range(0.5..200.0);
        let thr_b = rng.random_range(0.01..100.0);
        let thr_m = thr_b * rng.random_range(1.001..64.0);
        let t_sync = rng.random_range(0.0..10_000.0);
        // cycle through the three regions around C_b and C_m
        let (c_b, c_m) = (t * thr_b, t * thr_m);
        let n = match k % 3 {
            0 => rng.random_range(0.0..c_b),
            1 => rng.random_range(c_b..=c_m),
            _ => rng.random_range(c_m..c_m + 3.0 * t_sync * thr_m + 1.0),
        };

        let fewer = t + f64::max(0.0, n - t * thr_b) / thr_b;
        let more = t + t_sync + f64::max(0.0, n - t * thr_m) / thr_m;
        let oracle = fewer < more;

        let basic = CostPoint::new("b", t, thr_b).map_err(|e| e.to_string())?;
        let bigger = CostPoint::new("m", t, thr_m).map_err(|e| e.to_string())?;
        let sync = SyncCost::total_of(SyncLevel::Block, t_sync).map_err(|e| e.to_string())?;
        let scenario = SwitchScenario::resolve(n, &basic, &bigger, &sync).map_err(|e| e.to_string())?;
        by_kind[scenario.kind as usize] += 1;
        ensure(scenario.prefers_fewer(n) == oracle, || {
            format!("set {k}: T={t} Thr_b={thr_b} Thr_m={thr_m} T_sync={t_sync} N={n}")
        })?;
    }
    Ok(format!(
        "{SETS}/{SETS} agree ({} below C_b, {} between, {} above C_m)",
        by_kind[0], by_kind[1], by_kind[2]
    ))
}

fn launch_overhead_recovery() -> Check {
    let dev = EmulatedDevice::v100();
    let mut worst: f64 = 0.0;
    for i in 1..=10 {
        for j in (1..=10).filter(|&j| j != i) {
            let batch = generate_fusion_batch(&dev, i, j, 3).map_err(|e| e.to_string())?;
            let value = analyze_batch(&batch, None).map_err(|e| e.to_string())?.records[0].estimate.value;
            let err = (value - dev.launch_overhead_ns).abs() / dev.launch_overhead_ns;
            ensure(err <= 1e-9, || format!("({i},{j}) recovered {value}"))?;
            worst = worst.max(err);
        }
    }

    const TRIALS: usize = 10_000;
    let sigma = 200.0;
    let (i, j) = (5u32, 1u32);
    let mut seeds = ChaCha8Rng::seed_from_u64(6);
    let mut noisy = dev.clone();
    noisy.noise_sigma = sigma;
    let mut estimates = Vec::with_capacity(TRIALS);
    for _ in 0..TRIALS {
        noisy.seed = seeds.random();
        let batch = generate_fusion_batch(&noisy, i, j, 1).map_err(|e| e.to_string())?;
        estimates.push(analyze_batch(&batch, None).map_err(|e| e.to_string())?.records[0].estimate.value);
    }
    let observed = sample_stddev(&estimates);
    let predicted = (2.0 * sigma * sigma).sqrt() / f64::from(i - j);
    let rel = (observed - predicted).abs() / predicted;
    ensure(rel <= 0.10, || format!("Monte Carlo stddev {observed} vs predicted {predicted}"))?;
    Ok(format!(
        "90 noiseless pairs exact (worst {worst:.1e}); stddev {observed:.2} vs {predicted:.2} ns ({:.1}% off)",
        rel * 100.0
    ))
}

fn instruction_latency_recovery() -> Check {
    let dev = EmulatedDevice::v100();
    let batch = generate_repeatdiff_batch(&dev, "fadd", 1024, 512, 5).map_err(|e| e.to_string())?;
    let value = analyze_batch(&batch, None).map_err(|e| e.to_string())?.records[0].estimate.value;
    ensure(value == 4.0, || format!("fadd recovered {value}"))?;

    const TRIALS: usize = 10_000;
    let (r1, r2, runs, sigma) = (1024u32, 512u32, 8u32, 40.0);
    let mut seeds = ChaCha8Rng::seed_from_u64(7);
    let mut noisy = dev.clone();
    noisy.noise_sigma = sigma;
    let mut estimates = Vec::with_capacity(TRIALS);
    let mut reported = Vec::with_capacity(TRIALS);
    for _ in 0..TRIALS {
        noisy.seed = seeds.random();
        let batch = generate_repeatdiff_batch(&noisy, "fadd", r1, r2, runs).map_err(|e| e.to_string())?;
        let e = analyze_batch(&batch, None).map_err(|e| e.to_string())?.records.remove(0).estimate;
        estimates.push(e.value);
        reported.push(e.stddev.ok_or("no spread reported")?);
    }
    let observed = sample_stddev(&estimates);
    // root mean square of the per-trial propagated spreads
    let propagated = (reported.iter().map(|s| s * s).sum::<f64>() / TRIALS as f64).sqrt();
    let closed_form = (2.0 * sigma * sigma / f64::from(runs)).sqrt() / f64::from(r1 - r2);
    let rel = (observed - propagated).abs() / propagated;
    ensure(rel <= 0.10, || format!("Monte Carlo stddev {observed} vs propagated {propagated}"))?;
    ensure((observed - closed_form).abs() / closed_form <= 0.10, || {
        format!("Monte Carlo stddev {observed} vs closed form {closed_form}")
    })?;
    Ok(format!(
        "fadd = 4 cycles exactly; stddev {observed:.5} vs propagated {propagated:.5} cycles ({:.1}% off)",
        rel * 100.0
    ))
}

fn reduction_conclusions() -> Check {
    let device = Gpu::V100.profile().map_err(|e| e.to_string())?;
    let mut details = Vec::new();
    for (scenery, elements, expected) in [(1u8, 32u64, "1 warp"), (2, 1024, "32 thrd")] {
        let s = Scenery::load(Gpu::V100, scenery).map_err(|e| e.to_string())?;
        let q = ReductionQuery {
            input_bytes: elements * 8,
            element_bytes: 8,
            device: device.clone(),
            candidates: s.candidates().map_err(|e| e.to_string())?,
            safety: SafetyFactor::NONE,
        };
        let r = recommend_reduction_config(&q).map_err(|e| e.to_string())?;
        ensure(r.chosen == expected, || format!("{elements} doubles: chose `{}`", r.chosen))?;

        let via_cli = cli(&[
            "recommend",
            "reduction",
            "--elements",
            &elements.to_string(),
            "--scenery",
            &scenery.to_string(),
        ]);
        let text = String::from_utf8_lossy(&via_cli.stdout);
        ensure(text.starts_with(&format!("use `{expected}`")), || format!("cli said: {text}"))?;
        details.push(format!("{elements} doubles -> {expected}"));
    }
    // 8192 B against the recomputed and the published switch point
    let n_l = 420.0 * 215.0 * 19.6 / (215.0 - 19.6);
    ensure(8192.0 < n_l && 8192.0 < 9076.0, || format!("N_l = {n_l}"))?;
    Ok(format!("{}; 8192 B < N_l = {n_l:.0} B", details.join(", ")))
}

fn barrier_advice() -> Check {
    let table = barrier_table(Gpu::V100).map_err(|e| e.to_string())?;
    let launch = launch_overheads().map_err(|e| e.to_string())?;

    let single = recommend_barrier(&BarrierQuery::new(1, 1, 2, 256), &table, &launch).map_err(|e| e.to_string())?;
    let single = single.recommendation().ok_or("no single-GPU recommendation")?;
    ensure(single.chosen == BarrierMechanism::ImplicitLaunch, || format!("1 GPU chose {}", single.chosen))?;
    let grid = launch.cooperative_ns
        + table
            .lookup(BarrierMechanism::Grid, 1, 2, 256)
            .ok_or("no grid entry at 2 blocks/SM")?;
    let implicit = launch.traditional_ns
        + table
            .lookup(BarrierMechanism::ImplicitLaunch, 1, 2, 256)
            .ok_or("no implicit entry")?;
    let margin1 = single.margin_ns.ok_or("no margin")?;
    ensure((margin1 - (grid - implicit)).abs() < 1e-9, || format!("margin {margin1} vs {}", grid - implicit))?;
    ensure(margin1 > 0.0 && margin1 <= 2500.0, || format!("1 GPU margin {margin1} ns"))?;

    let eight = recommend_barrier(&BarrierQuery::new(1, 8, 1, 1024), &table, &launch).map_err(|e| e.to_string())?;
    let eight = eight.recommendation().ok_or("no 8-GPU recommendation")?;
    ensure(eight.chosen == BarrierMechanism::CpuSide, || format!("8 GPUs chose {}", eight.chosen))?;
    let margin8 = eight.margin_ns.ok_or("no margin")?;
    ensure(eight.costs[1].mechanism == BarrierMechanism::MultiGrid, || "runner-up is not multi-grid".into())?;
    ensure((margin8 - 16_000.0).abs() <= 1_600.0, || format!("8 GPU margin {margin8} ns"))?;
    ensure(eight.multi_grid_within_slack == Some(true), || "multi-grid not within slack".into())?;
    ensure(eight.rationale.contains("within the 3x slack"), || eight.rationale.clone())?;
    Ok(format!(
        "1 GPU implicit_launch by {:.3} us; 8 GPUs cpu_side by {:.3} us, multi-grid within 3x",
        margin1 / 1000.0,
        margin8 / 1000.0
    ))
}

fn fuzz_case(
    (o, u, sigma, seed, i, j, runs, fadd): (f64, f64, f64, u64, u32, u32, u32, f64),
    profile: DeviceProfile,
    dir: &std::path::Path,
) -> Result<(), TestCaseError> {
    let mut dev = EmulatedDevice::v100();
    dev.launch_overhead_ns = o;
    dev.wait_unit_ns = u;
    dev.noise_sigma = sigma;
    dev.seed = seed;
    dev.instr_latency_cycles.insert("fadd".into(), fadd);

    // emulator determinism and measurement round trips
    let generate = |fusion: bool| {
        if fusion {
            generate_fusion_batch(&dev, i, j, runs)
        } else {
            generate_repeatdiff_batch(&dev, "fadd", i + j, j, runs)
        }
        .map_err(|e| TestCaseError::fail(e.to_string()))
    };
    for fusion in [true, false] {
        let (a, b) = (generate(fusion)?, generate(fusion)?);
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.to_text(), b.to_text());
        prop_assert_eq!(&parse_measurements(&a.to_text()).unwrap(), &a);
        prop_assert_eq!(&parse_measurements(&a.to_json()).unwrap(), &a);
    }

    prop_assert_eq!(parse_device_profile(&profile_to_text(&profile)).unwrap(), profile);

    // command-line determinism, and files equal to what stdout would carry
    let (seed, noise, i, j, runs) = (seed.to_string(), sigma.to_string(), i.to_string(), j.to_string(), runs.to_string());
    let args = [
        "emulate", "fusion", "--i", &i, "--j", &j, "--runs", &runs, "--seed", &seed, "--noise", &noise, "--format", "tsv",
    ];
    let first = cli(&args);
    prop_assert_eq!(first.code, 0, "{}", first.stderr);
    prop_assert_eq!(&first.stdout, &cli(&args).stdout);

    let path = dir.join(format!("fusion_{seed}.txt"));
    let path = path.to_str().unwrap();
    let mut to_file = args.to_vec();
    to_file.extend(["--out", path]);
    prop_assert_eq!(cli(&to_file).code, 0);
    prop_assert_eq!(std::fs::read(path).unwrap(), first.stdout);

    let analyze = ["analyze", "--measurements", path, "--format", "structured"];
    let a = cli(&analyze);
    prop_assert_eq!(a.code, 0, "{}", a.stderr);
    prop_assert_eq!(a.stdout, cli(&analyze).stdout);
    Ok(())
}

fn fuzz_round_trips() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let device = (
        0.0f64..1e5,
        0.0f64..1e5,
        prop_oneof![Just(0.0), 0.0f64..500.0],
        any::<u64>(),
        1u32..12,
        1u32..12,
        1u32..6,
        0.0f64..100.0,
    )
        .prop_filter("distinct launch counts", |d| d.4 != d.5);
    let profile = (1u32..200, 0u32..7, 0u32..64, 0u32..6, 1.0f64..5000.0, 1u32..16, 0usize..3).prop_map(
        |(sm, warp_pow, extra, blocks_pow, clock, gpus, ic)| {
            let warp_size = 1 << warp_pow;
            let max_threads_per_block = warp_size << blocks_pow;
            DeviceProfile {
                name: format!("dev{sm}"),
                sm_count: sm,
                warp_size,
                max_warps_per_sm: max_threads_per_block / warp_size + extra,
                max_threads_per_block,
                clock_mhz: clock,
                gpu_count: gpus,
                interconnect: [Interconnect::Pcie, Interconnect::Nvlink, Interconnect::None][ic],
            }
        },
    );
    let config = Config {
        cases: 100,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(
        config,
        proptest::test_runner::TestRng::deterministic_rng(proptest::test_runner::RngAlgorithm::ChaCha),
    );
    runner
        .run(&(device, profile), |(d, p)| fuzz_case(d, p, dir.path()))
        .map_err(|e| e.to_string())?;
    Ok("100 cases: measurement and profile round trips, emulator and command-line determinism".into())
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("switch points reproduced", switch_points),
        ("concurrency reproduced", concurrency),
        ("threshold rule matches direct evaluation", decision_consistency),
        ("launch overhead recovery", launch_overhead_recovery),
        ("instruction latency recovery", instruction_latency_recovery),
        ("reduction recommendations", reduction_conclusions),
        ("barrier recommendations", barrier_advice),
        ("round trip and determinism fuzz", fuzz_round_trips),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(msg)
        });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
