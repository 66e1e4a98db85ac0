//! Command-line entry point: cohort synthesis, threshold sweeps,
//! statistics, and manifest validation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use segsweep_core::metrics::Convention;
use segsweep_core::model::{self, DatasetManifest};
use segsweep_core::phantom::{generate_cohort, CohortSpec};
use segsweep_core::raster;
use segsweep_core::report;
use segsweep_core::stats;
use segsweep_core::sweep::{self, Grouping, MetricKind, Region};
use segsweep_core::{Metrics, Thresholds};

#[derive(Parser)]
#[command(
    name = "segsweep",
    version,
    about = "Evaluate probabilistic tumor segmentations against reference masks across binarization thresholds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic phantom cohort (manifest + rasters).
    Phantom(PhantomArgs),
    /// Evaluate a dataset across a threshold grid and emit report artifacts.
    Sweep(SweepArgs),
    /// Pairwise threshold comparisons and Bland-Altman agreement.
    Stats(StatsArgs),
    /// Check a manifest and its rasters; exits nonzero on violations.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum GroupingArg {
    PerScan,
    PerPatient,
}

impl From<GroupingArg> for Grouping {
    fn from(g: GroupingArg) -> Self {
        match g {
            GroupingArg::PerScan => Grouping::PerScan,
            GroupingArg::PerPatient => Grouping::PerPatient,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RegionArg {
    Whole,
    Subset,
}

impl From<RegionArg> for Region {
    fn from(r: RegionArg) -> Self {
        match r {
            RegionArg::Whole => Region::Whole,
            RegionArg::Subset => Region::Subset,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ConventionArg {
    /// Denominator is the reference volume.
    Ref,
    /// Denominator is the pairwise mean volume.
    Mean,
}

impl From<ConventionArg> for Convention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::Ref => Convention::RefDenominator,
            ConventionArg::Mean => Convention::MeanDenominator,
        }
    }
}

#[derive(Args)]
struct PhantomArgs {
    /// Number of patients in the cohort.
    #[arg(long, default_value_t = 21)]
    patients: usize,
    #[arg(long, default_value_t = 3)]
    scans_min: usize,
    #[arg(long, default_value_t = 6)]
    scans_max: usize,
    /// Exact total scan count, distributed within [scans-min, scans-max].
    #[arg(long)]
    scans_total: Option<usize>,
    /// Predicted area at threshold 0.5 as a fraction of the reference area.
    #[arg(long = "bias-underseg", default_value_t = 0.5625)]
    bias_underseg: f64,
    /// Probability that a scan carries an off-target low-level plateau.
    #[arg(long, default_value_t = 0.0)]
    effusion_prob: f64,
    #[arg(long, default_value_t = 0.3)]
    effusion_level: f64,
    /// Fraction of scans whose prediction misses the reference entirely.
    #[arg(long, default_value_t = 0.6)]
    miss_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 512)]
    rows: usize,
    #[arg(long, default_value_t = 512)]
    cols: usize,
    /// Sections per scan.
    #[arg(long, default_value_t = 50)]
    sections: usize,
    /// Inter-section distance in mm.
    #[arg(long, default_value_t = 5.0)]
    distance: f64,
    /// Reference disk radius range in pixels.
    #[arg(long, default_value_t = 20.0)]
    ref_radius_min: f64,
    #[arg(long, default_value_t = 26.0)]
    ref_radius_max: f64,
    /// Output directory for manifest.json and rasters/.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Comma-separated thresholds in (0, 1]; defaults to the standard grid.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long, value_enum, default_value = "per-scan")]
    group: GroupingArg,
    #[arg(long, value_enum, default_value = "whole")]
    region: RegionArg,
    #[arg(long, value_enum, default_value = "ref")]
    convention: ConventionArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    /// Per-scan metrics CSV produced by `sweep` (alternative to --manifest).
    #[arg(long, conflicts_with = "manifest", required_unless_present = "manifest")]
    metrics: Option<PathBuf>,
    /// Compute metrics directly from a manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    grid: Option<String>,
    #[arg(long, value_enum, default_value = "whole")]
    region: RegionArg,
    #[arg(long, value_enum, default_value = "per-scan")]
    group: GroupingArg,
    #[arg(long, value_enum, default_value = "ref")]
    convention: ConventionArg,
    /// Half-width of the agreement band, in percent.
    #[arg(long, default_value_t = 5.0)]
    band: f64,
    /// Threshold at which the Bland-Altman analysis runs.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    manifest: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_thread_pool();
    let result = match cli.command {
        Command::Phantom(args) => cmd_phantom(&args),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::Stats(args) => cmd_stats(&args),
        Command::Validate(args) => cmd_validate(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// SEGSWEEP_THREADS caps the worker count; default is the available
/// parallelism. Results are identical regardless of worker count.
fn init_thread_pool() {
    if let Ok(v) = std::env::var("SEGSWEEP_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn cmd_phantom(args: &PhantomArgs) -> Result<()> {
    let spec = CohortSpec {
        n_patients: args.patients,
        scans_min: args.scans_min,
        scans_max: args.scans_max,
        scans_total: args.scans_total,
        rows: args.rows,
        cols: args.cols,
        n_sections: args.sections,
        section_distance_mm: args.distance,
        underseg_factor: args.bias_underseg,
        effusion_prob: args.effusion_prob,
        effusion_level: args.effusion_level,
        miss_fraction: args.miss_fraction,
        ref_radius_range_px: (args.ref_radius_min, args.ref_radius_max),
        seed: args.seed,
        ..CohortSpec::default()
    };
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    let manifest_path = generate_cohort(&spec, &args.out)?;
    println!("{}", manifest_path.display());
    Ok(())
}

fn parse_grid(grid: &Option<String>) -> Result<Thresholds> {
    match grid {
        Some(s) => Ok(Thresholds::parse(s)?),
        None => Ok(Thresholds::default_grid()),
    }
}

/// Loads rasters and evaluates every scan; scans run in parallel and
/// results keep manifest order.
fn evaluate_manifest(
    manifest_path: &Path,
    grid: &Thresholds,
    region: Region,
    convention: Convention,
) -> Result<Vec<Metrics>> {
    let manifest: DatasetManifest<f64> = model::load_manifest(manifest_path)?;
    let base_dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    manifest
        .scans
        .par_iter()
        .map(|entry| {
            let prob_path = DatasetManifest::<f64>::resolve_path(base_dir, &entry.prob_path);
            let ref_path = DatasetManifest::<f64>::resolve_path(base_dir, &entry.ref_path);
            let prob = raster::load_probability_raster(&prob_path)?;
            let reference = raster::load_reference_mask(&ref_path)?;
            let metrics =
                sweep::evaluate_scan(&entry.scan, &prob, &reference, grid, region, convention)?;
            Ok(metrics)
        })
        .collect()
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let grid = parse_grid(&args.grid)?;
    let grouping: Grouping = args.group.into();
    let metrics = evaluate_manifest(
        &args.manifest,
        &grid,
        args.region.into(),
        args.convention.into(),
    )?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;

    let report_table = sweep::aggregate(&metrics, grouping)?;
    report::write_sweep_report_csv(&args.out.join("sweep_report.csv"), &report_table)?;
    report::write_per_scan_csv(&args.out.join("per_scan_metrics.csv"), &metrics)?;

    let (thresholds, _, dsc_values) =
        sweep::unit_metric_values(&metrics, grouping, MetricKind::MeanDsc)?;
    let per_threshold: Vec<Vec<f64>> = dsc_values
        .iter()
        .map(|col| col.iter().filter_map(|v| *v).collect())
        .collect();
    let boxplot = report::dsc_boxplot_svg(
        &thresholds,
        &per_threshold,
        &format!("DSC by threshold ({})", grouping.label()),
    );
    report::write_svg(&args.out.join("dsc_boxplot.svg"), &boxplot)?;

    let histogram = sweep::optimal_histogram(&metrics)?;
    report::write_svg(
        &args.out.join("optimal_histogram.svg"),
        &report::optimal_histogram_svg(&histogram),
    )?;
    println!(
        "sweep: {} scans, {} thresholds, outputs in {}",
        metrics.len(),
        grid.len(),
        args.out.display()
    );
    Ok(())
}

fn obtain_metrics(args: &StatsArgs) -> Result<Vec<Metrics>> {
    match (&args.metrics, &args.manifest) {
        (Some(csv), None) => Ok(report::read_per_scan_csv(csv)?),
        (None, Some(manifest)) => {
            let grid = parse_grid(&args.grid)?;
            evaluate_manifest(manifest, &grid, args.region.into(), args.convention.into())
        }
        _ => bail!("provide exactly one of --metrics or --manifest"),
    }
}

/// Per-unit reference and prediction volumes at one grid threshold.
fn unit_volumes(
    metrics: &[Metrics],
    grouping: Grouping,
    threshold: f64,
) -> Result<Vec<(String, f64, f64)>> {
    let k = metrics
        .first()
        .ok_or_else(|| anyhow!("no scan metrics"))?
        .per_threshold
        .iter()
        .position(|m| (m.threshold - threshold).abs() < 1e-9)
        .ok_or_else(|| anyhow!("threshold {threshold} is not in the evaluated grid"))?;
    let mut ordered: Vec<&Metrics> = metrics.iter().collect();
    ordered.sort_by(|a, b| (&a.patient_id, &a.scan_id).cmp(&(&b.patient_id, &b.scan_id)));
    match grouping {
        Grouping::PerScan => Ok(ordered
            .iter()
            .map(|m| {
                (
                    m.scan_id.clone(),
                    m.volume_ref_mm3,
                    m.per_threshold[k].volume_pred_mm3,
                )
            })
            .collect()),
        Grouping::PerPatient => {
            let mut by_patient: std::collections::BTreeMap<String, (f64, f64, usize)> =
                std::collections::BTreeMap::new();
            for m in &ordered {
                let e = by_patient
                    .entry(m.patient_id.clone())
                    .or_insert((0.0, 0.0, 0));
                e.0 += m.volume_ref_mm3;
                e.1 += m.per_threshold[k].volume_pred_mm3;
                e.2 += 1;
            }
            Ok(by_patient
                .into_iter()
                .map(|(id, (r, p, n))| (id, r / n as f64, p / n as f64))
                .collect())
        }
    }
}

fn cmd_stats(args: &StatsArgs) -> Result<()> {
    let metrics = obtain_metrics(args)?;
    let grouping: Grouping = args.group.into();
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;

    for (kind, name) in [
        (MetricKind::AbsPctDiff, "pvalue_matrix_volume.csv"),
        (MetricKind::MeanDsc, "pvalue_matrix_dsc.csv"),
    ] {
        let matrix = stats::pvalue_matrix(kind, &metrics, grouping)?;
        report::write_pvalue_matrix_csv(&args.out.join(name), &matrix)?;
    }
    write_ks_table(&args.out.join("ks_normality.csv"), &metrics, grouping)?;

    let volumes = unit_volumes(&metrics, grouping, args.threshold)?;
    let v_ref: Vec<f64> = volumes.iter().map(|v| v.1).collect();
    let v_pred: Vec<f64> = volumes.iter().map(|v| v.2).collect();
    let convention: Convention = args.convention.into();
    let ba = stats::bland_altman(&v_ref, &v_pred, convention, args.band)?;
    report::write_bland_altman_csv(&args.out.join("bland_altman.csv"), &ba)?;

    let diffs = stats::paired_differences(&v_ref, &v_pred, convention);
    let pairs: Vec<(String, f64, f64, Option<f64>)> = volumes
        .iter()
        .zip(&diffs)
        .map(|((label, r, p), d)| (label.clone(), *r, *p, *d))
        .collect();
    report::write_bland_altman_pairs_csv(
        &args.out.join("bland_altman_pairs.csv"),
        &pairs,
        args.band,
    )?;
    let svg = report::bland_altman_svg(&pairs, ba.mean_diff, ba.loa_low, ba.loa_high, args.band);
    report::write_svg(&args.out.join("bland_altman.svg"), &svg)?;
    println!(
        "stats: {} units at threshold {}, outputs in {}",
        volumes.len(),
        args.threshold,
        args.out.display()
    );
    Ok(())
}

/// Per-threshold normality check of the unit values for both figures
/// of merit; degenerate or undersized samples appear as n/a rows.
fn write_ks_table(path: &Path, metrics: &[Metrics], grouping: Grouping) -> Result<()> {
    use std::fmt::Write as _;
    let mut out = String::from("metric,threshold,n,statistic,p_value,reject_at_0_05\n");
    for kind in [MetricKind::AbsPctDiff, MetricKind::MeanDsc] {
        let (thresholds, _, values) = sweep::unit_metric_values(metrics, grouping, kind)?;
        for (k, &t) in thresholds.iter().enumerate() {
            let sample: Vec<f64> = values[k].iter().filter_map(|v| *v).collect();
            let row = match stats::ks_normality(&sample) {
                Ok(r) => format!(
                    "{},{},{},{},{},{}",
                    kind.label(),
                    report::fmt_sig(t),
                    r.n,
                    report::fmt_sig(r.statistic),
                    report::fmt_sig(r.p_value),
                    u8::from(r.reject_at_0_05),
                ),
                Err(_) => format!(
                    "{},{},{},n/a,n/a,n/a",
                    kind.label(),
                    report::fmt_sig(t),
                    sample.len(),
                ),
            };
            let _ = writeln!(out, "{row}");
        }
    }
    std::fs::write(path, out.as_bytes())
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn cmd_validate(args: &ValidateArgs) -> Result<()> {
    let manifest: DatasetManifest<f64> = model::load_manifest(&args.manifest)?;
    let base_dir = args.manifest.parent().unwrap_or_else(|| Path::new("."));
    let reports: Vec<model::ValidationReport> = manifest
        .scans
        .par_iter()
        .map(|entry| {
            let prob_path = DatasetManifest::<f64>::resolve_path(base_dir, &entry.prob_path);
            let ref_path = DatasetManifest::<f64>::resolve_path(base_dir, &entry.ref_path);
            let prob = raster::load_probability_raster::<f64>(&prob_path)?;
            let reference = raster::load_reference_mask(&ref_path)?;
            Ok(model::validate_scan(&entry.scan, &prob, &reference))
        })
        .collect::<Result<_>>()?;
    let mut violations = 0usize;
    for report in &reports {
        for v in &report.violations {
            eprintln!("{}: {v}", report.scan_id);
            violations += 1;
        }
    }
    if violations > 0 {
        bail!("{violations} violation(s) across {} scan(s)", reports.len());
    }
    println!("OK: {} scan(s) validated", reports.len());
    Ok(())
}
