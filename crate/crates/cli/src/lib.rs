//! The `syncperf` command line.
//!
//! [`run`] takes the full argument vector and two output streams so that
//! tests can drive every verb in-process. Exit status is 0 on success, 1 for
//! data and validation errors and 2 for usage errors. Errors go to the
//! diagnostic stream as `error[CODE]: message`.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use syncperf_core::emulator::EmulatedDevice;
use syncperf_core::io::fixtures::{barrier_table, launch_overheads};
use syncperf_core::io::format::sig6;
use syncperf_core::io::report::Heatmap;
use syncperf_core::model::{Crossover, SafetyFactor, SyncCost, SyncLevel};
use syncperf_core::plot::{grid_sync_heatmap, multi_gpu_series, occupancy_heatmap};
use syncperf_core::recommend::{BarrierAdvice, BarrierMechanism, BarrierQuery, Candidate, ReductionQuery, SyncTable};
use syncperf_core::reproduce::{
    concurrency_checks, predict_switch_points, switch_point_checks, Scenery, CONCURRENCY_TOLERANCE, SCENERIES,
    SWITCH_POINT_TOLERANCE,
};
use syncperf_core::{
    analyze_batch, emit_report, generate_fusion_batch, generate_repeatdiff_batch, generate_sync_batch,
    load_device_profile, parse_measurements, CostPoint, DeviceProfile, Error, Fixture, Gpu, MeasurementBatch, Report,
    ReportFormat, SyncKey,
};

#[derive(Debug, Parser)]
#[command(name = "syncperf", version, about = "Model and analyze GPU synchronization costs")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Common {
    /// Device profile (key=value file); defaults to the profile of the selected fixture GPU
    #[arg(long, global = true, value_name = "PATH")]
    device: Option<PathBuf>,
    /// Write machine-readable output to this file
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Machine-readable output format; without --out it goes to stdout
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Tsv,
    Structured,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> ReportFormat {
        match f {
            Format::Tsv => ReportFormat::Tsv,
            Format::Structured => ReportFormat::Structured,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FixtureSet {
    V100,
    P100,
    All,
}

impl FixtureSet {
    fn gpus(self) -> Vec<Gpu> {
        match self {
            FixtureSet::V100 => vec![Gpu::V100],
            FixtureSet::P100 => vec![Gpu::P100],
            FixtureSet::All => Gpu::ALL.to_vec(),
        }
    }

    fn single(self) -> Result<Gpu, Error> {
        match self {
            FixtureSet::V100 => Ok(Gpu::V100),
            FixtureSet::P100 => Ok(Gpu::P100),
            FixtureSet::All => Err(Error::Validation("this verb needs a single GPU: v100 or p100".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScenerySel {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    All,
}

impl ScenerySel {
    fn ids(self) -> Vec<u8> {
        match self {
            ScenerySel::One => vec![1],
            ScenerySel::Two => vec![2],
            ScenerySel::All => SCENERIES.to_vec(),
        }
    }
}

#[derive(Debug, Subcommand)]
enum Verb {
    /// Estimate launch overheads and instruction latencies from measurement files
    Analyze {
        /// Measurement files; `-` reads standard input
        #[arg(long, num_args = 1.., required = true, value_name = "PATH")]
        measurements: Vec<String>,
    },
    /// Compute the switch points N_m and N_l from the reference tables
    Predict {
        #[arg(long, value_enum, default_value = "all")]
        fixtures: FixtureSet,
        #[arg(long, value_enum, default_value = "all")]
        scenery: ScenerySel,
        /// Multiply reported switch points by this factor (>= 1)
        #[arg(long, default_value_t = 1.0)]
        safety_factor: f64,
    },
    /// Recommend a reduction configuration or a barrier mechanism
    Recommend {
        #[command(subcommand)]
        what: RecommendWhat,
    },
    /// Emit plot-ready matrices and series
    EmitPlot {
        #[arg(value_enum)]
        plot: PlotKind,
        #[arg(long, value_enum, default_value = "v100")]
        fixtures: FixtureSet,
        /// Barrier latency table (TSV) replacing the fixture table
        #[arg(long, value_name = "PATH")]
        sync_table: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        blocks_per_sm: u32,
        #[arg(long, default_value_t = 1024)]
        threads_per_block: u32,
        #[arg(long, default_value_t = 1.0)]
        safety_factor: f64,
    },
    /// Generate synthetic measurement files
    Emulate {
        #[command(subcommand)]
        what: EmulateWhat,
    },
    /// Verify fixture checksums and recompute the reference tables
    Validate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PlotKind {
    Occupancy,
    GridSync,
    MultiGpu,
    SwitchPoints,
}

#[derive(Debug, Subcommand)]
enum RecommendWhat {
    /// Pick the worker configuration for one reduction step
    Reduction {
        /// Number of input elements
        #[arg(long)]
        elements: u64,
        #[arg(long, default_value_t = 8)]
        element_bytes: u32,
        #[arg(long, value_enum, default_value = "v100")]
        fixtures: FixtureSet,
        /// Reference scenery providing the candidates
        #[arg(long, value_enum, default_value = "2", conflicts_with = "candidates")]
        scenery: ScenerySel,
        /// Candidate file: `label<TAB>latency_cycles<TAB>throughput<TAB>sync_cycles`, one per line
        #[arg(long, value_name = "PATH")]
        candidates: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        safety_factor: f64,
    },
    /// Pick the barrier mechanism for an iterative kernel
    Barrier {
        #[arg(long, default_value_t = 1)]
        iterations: u64,
        #[arg(long, default_value_t = 1)]
        gpus: u32,
        #[arg(long, default_value_t = 1)]
        blocks_per_sm: u32,
        #[arg(long, default_value_t = 1024)]
        threads_per_block: u32,
        /// Multi-grid counts as acceptable within this factor of the winner
        #[arg(long, default_value_t = BarrierQuery::DEFAULT_SLACK)]
        slack: f64,
        /// Only compare these mechanisms
        #[arg(long = "mechanism", value_name = "NAME")]
        mechanisms: Vec<String>,
        #[arg(long, value_enum, default_value = "v100")]
        fixtures: FixtureSet,
        /// Barrier latency table (TSV) replacing the fixture table
        #[arg(long, value_name = "PATH")]
        sync_table: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct EmulatorArgs {
    /// Emulated device description (key=value); defaults to the V100 parameters
    #[arg(long, value_name = "PATH")]
    emulator: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    runs: u32,
    /// Overrides the seed of the device description
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the noise standard deviation of the device description
    #[arg(long)]
    noise: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum EmulateWhat {
    /// Launch-fusion arms (i launches of j wait units and the mirror)
    Fusion {
        #[arg(long, default_value_t = 5)]
        i: u32,
        #[arg(long, default_value_t = 1)]
        j: u32,
        #[command(flatten)]
        emu: EmulatorArgs,
    },
    /// Two repeat counts of one instruction
    Repeat {
        #[arg(long, default_value = "fadd")]
        instr: String,
        #[arg(long, default_value_t = 1024)]
        r1: u32,
        #[arg(long, default_value_t = 512)]
        r2: u32,
        #[command(flatten)]
        emu: EmulatorArgs,
    },
    /// Two repeat counts of one barrier
    Sync {
        #[arg(long, default_value = "block")]
        level: String,
        #[arg(long, default_value_t = 1)]
        blocks_per_sm: u32,
        #[arg(long, default_value_t = 32)]
        threads_per_block: u32,
        #[arg(long, default_value_t = 1)]
        gpus: u32,
        #[arg(long, default_value_t = 64)]
        r1: u32,
        #[arg(long, default_value_t = 32)]
        r2: u32,
        #[command(flatten)]
        emu: EmulatorArgs,
    },
}

/// Runs one invocation and returns its exit status.
pub fn run<I, S>(args: I, stdin: &mut dyn Read, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let rendered = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{rendered}");
                return 2;
            }
            let _ = write!(out, "{rendered}");
            return 0;
        }
    };
    match dispatch(&cli, stdin, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error[{}]: {e}", e.code());
            1
        }
    }
}

/// Emitted machine output plus the summary shown when it is not on stdout.
struct Output {
    report: Vec<u8>,
    summary: String,
}

fn deliver(common: &Common, o: Output, out: &mut dyn Write) -> Result<(), Error> {
    match &common.out {
        Some(path) => {
            std::fs::write(path, &o.report)?;
            out.write_all(o.summary.as_bytes())?;
        }
        None if common.format.is_some() => out.write_all(&o.report)?,
        None => out.write_all(o.summary.as_bytes())?,
    }
    Ok(())
}

fn format_of(common: &Common) -> ReportFormat {
    common.format.map(ReportFormat::from).unwrap_or_default()
}

fn report_output(common: &Common, report: &Report, summary: String) -> Output {
    Output {
        report: emit_report(report, format_of(common)),
        summary,
    }
}

fn profile_for(common: &Common, gpu: Gpu) -> Result<DeviceProfile, Error> {
    match &common.device {
        Some(path) => load_device_profile(path),
        None => gpu.profile(),
    }
}

fn safety(f: f64) -> Result<SafetyFactor, Error> {
    SafetyFactor::new(f)
}

fn dispatch(cli: &Cli, stdin: &mut dyn Read, out: &mut dyn Write) -> Result<i32, Error> {
    let common = &cli.common;
    let output = match &cli.verb {
        Verb::Analyze { measurements } => analyze(common, measurements, stdin)?,
        Verb::Predict {
            fixtures,
            scenery,
            safety_factor,
        } => predict(common, *fixtures, *scenery, *safety_factor)?,
        Verb::Recommend { what } => recommend(common, what)?,
        Verb::EmitPlot {
            plot,
            fixtures,
            sync_table,
            blocks_per_sm,
            threads_per_block,
            safety_factor,
        } => emit_plot(
            common,
            *plot,
            *fixtures,
            sync_table.as_deref(),
            (*blocks_per_sm, *threads_per_block),
            *safety_factor,
        )?,
        Verb::Emulate { what } => emulate(common, what)?,
        Verb::Validate => return validate(out),
    };
    deliver(common, output, out)?;
    Ok(0)
}

fn read_input(path: &str, stdin: &mut dyn Read) -> Result<String, Error> {
    if path == "-" {
        let mut text = String::new();
        stdin.read_to_string(&mut text)?;
        Ok(text)
    } else {
        Ok(std::fs::read_to_string(path)?)
    }
}

fn analyze(common: &Common, paths: &[String], stdin: &mut dyn Read) -> Result<Output, Error> {
    let profile = common.device.as_deref().map(load_device_profile).transpose()?;
    let mut merged: Option<syncperf_core::AnalysisReport> = None;
    for path in paths {
        let batch: MeasurementBatch = parse_measurements(&read_input(path, stdin)?)?;
        let report = analyze_batch(&batch, profile.as_ref())?;
        match &mut merged {
            None => merged = Some(report),
            Some(m) => m.records.extend(report.records),
        }
    }
    let report = merged.unwrap_or_default();
    let mut summary = format!("{}: {} estimate(s)\n", report.device, report.records.len());
    for r in &report.records {
        let e = &r.estimate;
        let spread = e.stddev.map_or_else(|| "n/a".to_string(), sig6);
        summary.push_str(&format!(
            "  {} {}{}: {} {} (stddev {})",
            r.group,
            r.quantity.as_str(),
            r.label.as_deref().map(|l| format!(" {l}")).unwrap_or_default(),
            sig6(e.value),
            e.domain.unit(),
            spread
        ));
        for d in &e.diagnostics {
            summary.push_str(&format!(" [{}]", d.as_str()));
        }
        summary.push('\n');
    }
    Ok(report_output(common, &Report::Analysis(report), summary))
}

fn predict(common: &Common, fixtures: FixtureSet, scenery: ScenerySel, factor: f64) -> Result<Output, Error> {
    let records = predict_switch_points(&fixtures.gpus(), &scenery.ids(), safety(factor)?)?;
    let mut summary = String::new();
    for r in &records {
        let n_l = match r.n_l {
            Crossover::At(x) => format!("{x:.0} B"),
            Crossover::NoCrossover => "none".into(),
        };
        summary.push_str(&format!(
            "{} scenery {} ({}): sync {} cycles, N_l {}, N_m {:.0} B\n",
            r.device,
            r.scenery,
            r.label,
            sig6(r.sync_cycles),
            n_l,
            r.n_m
        ));
    }
    Ok(report_output(common, &Report::SwitchPoints(records), summary))
}

fn recommend(common: &Common, what: &RecommendWhat) -> Result<Output, Error> {
    match what {
        RecommendWhat::Reduction {
            elements,
            element_bytes,
            fixtures,
            scenery,
            candidates,
            safety_factor,
        } => {
            let gpu = fixtures.single()?;
            let candidates = match candidates {
                Some(path) => parse_candidates(&std::fs::read_to_string(path)?)?,
                None => match scenery.ids().as_slice() {
                    [id] => Scenery::load(gpu, *id)?.candidates()?,
                    _ => return Err(Error::Validation("pick one scenery: 1 or 2".into())),
                },
            };
            let input_bytes = elements
                .checked_mul(u64::from(*element_bytes))
                .ok_or_else(|| Error::Validation("input size overflows".into()))?;
            let q = ReductionQuery {
                input_bytes,
                element_bytes: *element_bytes,
                device: profile_for(common, gpu)?,
                candidates,
                safety: safety(*safety_factor)?,
            };
            let r = syncperf_core::recommend_reduction_config(&q)?;
            let summary = format!("use `{}`\n{}\n", r.chosen, r.rationale);
            Ok(report_output(common, &Report::Reduction(r), summary))
        }
        RecommendWhat::Barrier {
            iterations,
            gpus,
            blocks_per_sm,
            threads_per_block,
            slack,
            mechanisms,
            fixtures,
            sync_table,
        } => {
            let table = sync_table_for(fixtures.single()?, sync_table.as_deref())?;
            let mut q = BarrierQuery::new(*iterations, *gpus, *blocks_per_sm, *threads_per_block);
            q.slack = *slack;
            if !mechanisms.is_empty() {
                let parsed = mechanisms
                    .iter()
                    .map(|m| {
                        BarrierMechanism::parse(m)
                            .ok_or_else(|| Error::Validation(format!("unknown barrier mechanism `{m}`")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                q.mechanisms = Some(parsed);
            }
            let advice = syncperf_core::recommend_barrier(&q, &table, &launch_overheads()?)?;
            let summary = match &advice {
                BarrierAdvice::Recommended(r) => format!("use {}\n{}\n", r.chosen, r.rationale),
                BarrierAdvice::InsufficientData { reason, .. } => format!("insufficient data: {reason}\n"),
            };
            Ok(report_output(common, &Report::Barrier(advice), summary))
        }
    }
}

fn sync_table_for(gpu: Gpu, path: Option<&Path>) -> Result<SyncTable, Error> {
    match path {
        Some(p) => SyncTable::load(p),
        None => barrier_table(gpu),
    }
}

fn parse_candidates(text: &str) -> Result<Vec<Candidate>, Error> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |msg: &str| Error::InvalidRow {
            line: i + 1,
            message: msg.to_string(),
        };
        let fields: Vec<&str> = line.split('\t').collect();
        let [label, latency, throughput, sync] = fields.as_slice() else {
            return Err(bad("expected label, latency_cycles, throughput and sync_cycles"));
        };
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(&format!("`{s}` is not a number")));
        out.push(Candidate::new(
            CostPoint::new(*label, num(latency)?, num(throughput)?)?,
            SyncCost::total_of(SyncLevel::Block, num(sync)?)?,
        ));
    }
    Ok(out)
}

fn heatmap_summary(what: &str, h: &Heatmap) -> String {
    let filled = h.values.iter().flatten().filter(|v| v.is_some()).count();
    format!(
        "{what}: {} x {} matrix ({} by {}), {filled} cells with data\n",
        h.rows.len(),
        h.columns.len(),
        h.row_label,
        h.column_label
    )
}

fn emit_plot(
    common: &Common,
    plot: PlotKind,
    fixtures: FixtureSet,
    sync_table: Option<&Path>,
    (blocks, threads): (u32, u32),
    factor: f64,
) -> Result<Output, Error> {
    match plot {
        PlotKind::Occupancy => {
            let h = occupancy_heatmap(&profile_for(common, fixtures.single()?)?)?;
            let summary = heatmap_summary("active warps per SM", &h);
            Ok(report_output(common, &Report::Heatmap(h), summary))
        }
        PlotKind::GridSync => {
            let gpu = fixtures.single()?;
            let h = grid_sync_heatmap(&profile_for(common, gpu)?, &sync_table_for(gpu, sync_table)?)?;
            let summary = heatmap_summary("grid barrier latency (us)", &h);
            Ok(report_output(common, &Report::Heatmap(h), summary))
        }
        PlotKind::MultiGpu => {
            let s = multi_gpu_series(&sync_table_for(fixtures.single()?, sync_table)?, blocks, threads);
            let mut summary = format!("barrier latency (us) against GPU count at {blocks} block(s)/SM, {threads} threads/block\n");
            for series in &s.series {
                summary.push_str(&format!("  {}: {} point(s)\n", series.name, series.points.len()));
            }
            Ok(report_output(common, &Report::Series(s), summary))
        }
        PlotKind::SwitchPoints => predict(common, fixtures, ScenerySel::All, factor),
    }
}

fn emulated_device(args: &EmulatorArgs) -> Result<EmulatedDevice, Error> {
    let mut dev = match &args.emulator {
        Some(path) => EmulatedDevice::load(path)?,
        None => EmulatedDevice::v100(),
    };
    if let Some(seed) = args.seed {
        dev.seed = seed;
    }
    if let Some(noise) = args.noise {
        dev.noise_sigma = noise;
    }
    dev.validate()?;
    Ok(dev)
}

fn emulate(common: &Common, what: &EmulateWhat) -> Result<Output, Error> {
    let (batch, runs) = match what {
        EmulateWhat::Fusion { i, j, emu } => (generate_fusion_batch(&emulated_device(emu)?, *i, *j, emu.runs)?, emu.runs),
        EmulateWhat::Repeat { instr, r1, r2, emu } => (
            generate_repeatdiff_batch(&emulated_device(emu)?, instr, *r1, *r2, emu.runs)?,
            emu.runs,
        ),
        EmulateWhat::Sync {
            level,
            blocks_per_sm,
            threads_per_block,
            gpus,
            r1,
            r2,
            emu,
        } => {
            let level = SyncLevel::parse(level)
                .ok_or_else(|| Error::Validation(format!("unknown synchronization level `{level}`")))?;
            let key = SyncKey {
                level,
                blocks_per_sm: *blocks_per_sm,
                threads_per_block: *threads_per_block,
                gpu_count: *gpus,
            };
            (generate_sync_batch(&emulated_device(emu)?, key, *r1, *r2, emu.runs)?, emu.runs)
        }
    };
    let report = match common.format {
        Some(Format::Structured) => batch.to_json(),
        _ => batch.to_text(),
    };
    let ids: Vec<&str> = batch.experiments.iter().map(|e| e.descriptor.id.as_str()).collect();
    let summary = format!(
        "{}: {} experiment(s) x {runs} run(s): {}\n",
        batch.device_name,
        ids.len(),
        ids.join(", ")
    );
    Ok(Output {
        report: report.into_bytes(),
        summary,
    })
}

fn validate(out: &mut dyn Write) -> Result<i32, Error> {
    let mut ok = true;
    for f in Fixture::ALL {
        let good = f.verify().is_ok();
        ok &= good;
        writeln!(out, "{} {} {}", if good { "ok  " } else { "FAIL" }, f.sha256(), f.file_name())?;
    }

    let points = switch_point_checks()?;
    let within = points.iter().filter(|c| c.within_tolerance()).count();
    for c in points.iter().filter(|c| !c.within_tolerance()) {
        writeln!(
            out,
            "  {} scenery {} {}: computed {} vs published {}",
            c.device,
            c.scenery,
            c.point.as_str(),
            c.computed.map_or_else(|| "none".into(), sig6),
            sig6(c.published)
        )?;
    }
    writeln!(
        out,
        "{within}/{} switch points within {}%",
        points.len(),
        sig6(SWITCH_POINT_TOLERANCE * 100.0)
    )?;
    ok &= within == points.len();

    let conc = concurrency_checks()?;
    let within = conc.iter().filter(|c| c.within_tolerance()).count();
    for c in conc.iter().filter(|c| !c.within_tolerance()) {
        writeln!(
            out,
            "  {} {}: computed {} vs published {}",
            c.device,
            c.label,
            sig6(c.computed),
            sig6(c.published)
        )?;
    }
    writeln!(
        out,
        "{within}/{} concurrency values within {}%",
        conc.len(),
        sig6(CONCURRENCY_TOLERANCE * 100.0)
    )?;
    ok &= within == conc.len();
    Ok(if ok { 0 } else { 1 })
}
