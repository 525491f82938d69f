use proptest::prelude::*;
use syncperf_core::io::fixtures::{barrier_table, launch_overheads, Gpu};
use syncperf_core::recommend::{LaunchOverheads, SyncEntry};
use syncperf_core::{
    prefer_fewer_workers, recommend_barrier, recommend_reduction_config, BarrierMechanism, BarrierQuery, Candidate,
    CostPoint, ReductionQuery, SafetyFactor, SyncCost, SyncLevel, SyncTable,
};

#[derive(Debug, Clone)]
struct RawCandidate {
    t: f64,
    thr: f64,
    sync: f64,
}

/// Candidates whose concurrency never decreases, the first one barrier-free.
fn candidates() -> impl Strategy<Value = Vec<RawCandidate>> {
    prop::collection::vec((0.5f64..50.0, 1.0f64..4.0, 0.0f64..2000.0), 2..6).prop_map(|raw| {
        let mut out = Vec::new();
        let mut thr = 0.25;
        let mut c: f64 = 0.0;
        for (k, (t, growth, sync)) in raw.into_iter().enumerate() {
            thr *= growth;
            // keep T * Thr non-decreasing
            let mut t = t.max(c / thr);
            while t * thr < c {
                t = t.next_up();
            }
            c = t * thr;
            out.push(RawCandidate { t, thr, sync: if k == 0 { 0.0 } else { sync } });
        }
        out
    })
}

fn build(raw: &[RawCandidate], scale: f64) -> Vec<Candidate> {
    raw.iter()
        .enumerate()
        .map(|(k, c)| {
            Candidate::new(
                CostPoint::new(format!("c{k}"), c.t * scale, c.thr / scale).unwrap(),
                SyncCost::total_of(SyncLevel::Block, c.sync * scale).unwrap(),
            )
        })
        .collect()
}

fn query(bytes: u64, candidates: Vec<Candidate>) -> ReductionQuery {
    ReductionQuery {
        input_bytes: bytes,
        element_bytes: 8,
        device: Gpu::V100.profile().unwrap(),
        candidates,
        safety: SafetyFactor::NONE,
    }
}

/// Cost of every candidate evaluated independently; first minimum wins.
fn brute_force(raw: &[RawCandidate], n: f64) -> usize {
    let cost = |c: &RawCandidate| c.t + c.sync + f64::max(0.0, n - c.t * c.thr) / c.thr;
    let mut best = 0;
    for k in 1..raw.len() {
        if cost(&raw[k]) < cost(&raw[best]) {
            best = k;
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn ladder_matches_exhaustive_minimum(raw in candidates(), elements in 0u64..20_000) {
        let r = recommend_reduction_config(&query(elements * 8, build(&raw, 1.0))).unwrap();
        prop_assert_eq!(r.chosen_index, brute_force(&raw, (elements * 8) as f64));
        prop_assert_eq!(&r.chosen, &format!("c{}", r.chosen_index));
    }

    #[test]
    fn two_candidates_agree_with_decision_inequality(
        t in 0.5f64..50.0, thr_b in 0.1f64..50.0, ratio in 1.01f64..30.0, s in 0.1f64..3000.0, elements in 0u64..50_000,
    ) {
        let basic = CostPoint::new("basic", t, thr_b).unwrap();
        let more = CostPoint::new("more", t, thr_b * ratio).unwrap();
        let sync = SyncCost::total_of(SyncLevel::Block, s).unwrap();
        let candidates = vec![
            Candidate::new(basic.clone(), SyncCost::total_of(SyncLevel::Block, 0.0).unwrap()),
            Candidate::new(more.clone(), sync),
        ];
        let n = elements * 8;
        let r = recommend_reduction_config(&query(n, candidates)).unwrap();
        let fewer = prefer_fewer_workers(n as f64, &basic, &more, &sync).unwrap();
        prop_assert_eq!(r.chosen_index == 0, fewer);
    }

    #[test]
    fn choice_independent_of_time_unit(raw in candidates(), elements in 0u64..20_000, exp in -8i32..8) {
        // powers of two keep the rescaling exact
        let scale = 2f64.powi(exp);
        let a = recommend_reduction_config(&query(elements * 8, build(&raw, 1.0))).unwrap();
        let b = recommend_reduction_config(&query(elements * 8, build(&raw, scale))).unwrap();
        prop_assert_eq!(a.chosen, b.chosen);
    }

    #[test]
    fn slower_multi_grid_never_wins(
        gpus in 1u32..9, iterations in 1u64..100_000, factor in 1.0f64..10.0, layout in 0usize..3,
    ) {
        let (blocks, threads) = [(1, 1024), (1, 32), (32, 64)][layout];
        let table = barrier_table(Gpu::V100).unwrap();
        let launch = launch_overheads().unwrap();
        let q = BarrierQuery::new(iterations, gpus, blocks, threads);
        let before = recommend_barrier(&q, &table, &launch).unwrap();
        let mut slower = table.clone();
        for e in slower.entries.iter_mut().filter(|e| e.mechanism == BarrierMechanism::MultiGrid) {
            e.latency_ns *= factor;
        }
        let after = recommend_barrier(&q, &slower, &launch).unwrap();
        let (before, after) = (before.recommendation().unwrap(), after.recommendation().unwrap());
        if before.chosen != BarrierMechanism::MultiGrid {
            prop_assert_ne!(after.chosen, BarrierMechanism::MultiGrid);
        }
    }

    #[test]
    fn slower_multi_grid_never_wins_random_tables(
        latencies in prop::collection::vec(1.0f64..1e5, 5), launch in prop::collection::vec(0.0f64..1e4, 3),
        iterations in 1u64..1000, factor in 1.0f64..5.0,
    ) {
        let table = SyncTable {
            entries: BarrierMechanism::ALL
                .iter()
                .zip(&latencies)
                .map(|(&mechanism, &latency_ns)| SyncEntry {
                    mechanism,
                    gpu_count: None,
                    blocks_per_sm: None,
                    threads_per_block: None,
                    latency_ns,
                })
                .collect(),
        };
        let launch = LaunchOverheads { traditional_ns: launch[0], cooperative_ns: launch[1], multi_device_ns: launch[2] };
        let q = BarrierQuery::new(iterations, 1, 1, 32);
        let before = recommend_barrier(&q, &table, &launch).unwrap();
        let mut slower = table.clone();
        slower.entries[3].latency_ns *= factor;
        let after = recommend_barrier(&q, &slower, &launch).unwrap();
        if before.recommendation().unwrap().chosen != BarrierMechanism::MultiGrid {
            prop_assert_ne!(after.recommendation().unwrap().chosen, BarrierMechanism::MultiGrid);
        }
    }
}

#[test]
fn long_runs_order_by_per_barrier_latency() {
    let table = barrier_table(Gpu::V100).unwrap();
    let launch = launch_overheads().unwrap();
    for gpus in 1..=8 {
        let q = BarrierQuery::new(1_000_000, gpus, 1, 1024);
        let r = recommend_barrier(&q, &table, &launch).unwrap();
        let r = r.recommendation().unwrap();
        for pair in r.costs.windows(2) {
            assert!(pair[0].per_barrier_ns <= pair[1].per_barrier_ns, "{gpus} GPUs: {pair:?}");
        }
        for c in &r.costs {
            let per_iteration = c.total_ns / 1e6;
            assert!((per_iteration - c.per_barrier_ns).abs() <= 1e-3 * c.per_barrier_ns);
        }
    }
}

#[test]
fn single_gpu_implicit_beats_grid() {
    let table = barrier_table(Gpu::V100).unwrap();
    let launch = launch_overheads().unwrap();
    let advice = recommend_barrier(&BarrierQuery::new(1, 1, 2, 256), &table, &launch).unwrap();
    let r = advice.recommendation().unwrap();
    assert_eq!(r.chosen, BarrierMechanism::ImplicitLaunch);
    assert_eq!(r.costs[1].mechanism, BarrierMechanism::Grid);
    let margin = r.margin_ns.unwrap();
    assert!(margin > 0.0 && margin <= 2500.0, "{margin}");
}

#[test]
fn eight_gpu_cpu_side_beats_multi_grid() {
    let table = barrier_table(Gpu::V100).unwrap();
    let launch = launch_overheads().unwrap();
    let advice = recommend_barrier(&BarrierQuery::new(1, 8, 1, 1024), &table, &launch).unwrap();
    let r = advice.recommendation().unwrap();
    assert_eq!(r.chosen, BarrierMechanism::CpuSide);
    assert_eq!(r.costs[1].mechanism, BarrierMechanism::MultiGrid);
    assert!((r.margin_ns.unwrap() - 16_000.0).abs() <= 1000.0);
    assert_eq!(r.multi_grid_within_slack, Some(true));
    assert!(r.skipped.contains(&BarrierMechanism::Grid));
}

#[test]
fn p100_has_no_barrier_data() {
    let table = barrier_table(Gpu::P100).unwrap();
    let launch = launch_overheads().unwrap();
    let advice = recommend_barrier(&BarrierQuery::new(1, 2, 1, 32), &table, &launch).unwrap();
    assert!(advice.recommendation().is_none());
}
