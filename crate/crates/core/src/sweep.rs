//! The threshold-sweep engine: per-scan evaluation across a threshold
//! grid, cohort aggregation, optimal-threshold selection, and
//! anatomic-subset filtering.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::metrics::{self, Convention, MetricsError};
use crate::model::{ModelError, ProbabilityRaster, ReferenceMask, ScanRecord};
use crate::scalar::{cast, cast_usize, Scalar};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("threshold grid must be non-empty, strictly increasing, and within (0, 1]")]
    BadGrid,
    #[error("cannot parse threshold {0:?}")]
    BadGridToken(String),
    #[error("scan `{scan_id}`: subset evaluation requested but the scan has no subset_range")]
    MissingSubsetRange { scan_id: String },
    #[error("scan `{scan_id}`: subset_range excludes every reviewed section")]
    EmptySubset { scan_id: String },
    #[error("scan `{scan_id}`: raster does not cover the evaluated sections")]
    RasterCoverage { scan_id: String },
    #[error("scan `{scan_id}` section {section}: raster grid does not match scan geometry")]
    GeometryMismatch { scan_id: String, section: u32 },
    #[error("cannot aggregate: no scan metrics supplied")]
    EmptyCohort,
    #[error("cannot aggregate scans evaluated over different threshold grids")]
    MixedGrids,
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Strictly increasing probability cutoffs in (0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdGrid<F> {
    values: Vec<F>,
}

impl<F: Scalar> ThresholdGrid<F> {
    pub fn new(values: Vec<F>) -> Result<Self, SweepError> {
        if values.is_empty() {
            return Err(SweepError::BadGrid);
        }
        for v in &values {
            if !(*v > F::zero() && *v <= F::one()) {
                return Err(SweepError::BadGrid);
            }
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SweepError::BadGrid);
        }
        Ok(ThresholdGrid { values })
    }

    /// The default grid covering every cutoff the sweep reports on.
    pub fn default_grid() -> Self {
        let values = [0.001, 0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
            .iter()
            .map(|&v| cast(v))
            .collect();
        ThresholdGrid::new(values).expect("default grid is valid")
    }

    /// Parses a comma-separated list such as `0.01,0.1,0.5`.
    pub fn parse(s: &str) -> Result<Self, SweepError> {
        let values = s
            .split(',')
            .map(|tok| {
                let tok = tok.trim();
                tok.parse::<f64>()
                    .map(cast::<F>)
                    .map_err(|_| SweepError::BadGridToken(tok.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        ThresholdGrid::new(values)
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Section range used for evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Whole,
    Subset,
}

impl Region {
    pub fn label(self) -> &'static str {
        match self {
            Region::Whole => "whole",
            Region::Subset => "subset",
        }
    }
}

/// Aggregation unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grouping {
    PerScan,
    PerPatient,
}

impl Grouping {
    pub fn label(self) -> &'static str {
        match self {
            Grouping::PerScan => "per-scan",
            Grouping::PerPatient => "per-patient",
        }
    }
}

/// Metrics for one scan at one threshold.
///
/// Percent differences and DSC summaries are `None` where undefined
/// (zero denominator; no comparable sections).
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdMetrics<F> {
    pub threshold: F,
    pub volume_pred_mm3: F,
    pub signed_pct_diff: Option<F>,
    pub abs_pct_diff: Option<F>,
    pub mean_dsc: Option<F>,
    pub median_dsc: Option<F>,
    pub excluded_sections: usize,
}

/// Per-threshold metrics for one scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanMetrics<F> {
    pub scan_id: String,
    pub patient_id: String,
    pub region: Region,
    pub volume_ref_mm3: F,
    pub per_threshold: Vec<ThresholdMetrics<F>>,
}

/// Reviewed section indices falling inside the scan's subset range,
/// bounds inclusive.
pub fn subset_sections<F: Scalar>(scan: &ScanRecord<F>) -> Result<Vec<u32>, SweepError> {
    let range = scan
        .subset_range
        .ok_or_else(|| SweepError::MissingSubsetRange {
            scan_id: scan.scan_id.clone(),
        })?;
    let selected: Vec<u32> = scan
        .reviewed_indices
        .iter()
        .copied()
        .filter(|&i| i >= range.superior && i <= range.inferior)
        .collect();
    if selected.is_empty() {
        return Err(SweepError::EmptySubset {
            scan_id: scan.scan_id.clone(),
        });
    }
    Ok(selected)
}

/// Evaluates one scan at every grid threshold over the selected region.
///
/// The reference volume is computed once; prediction volumes and DSC
/// summaries are produced per threshold. A single pass per section
/// buckets each pixel by the largest threshold it reaches, which yields
/// exactly the same counts as thresholding at each cutoff separately.
pub fn evaluate_scan<F: Scalar>(
    scan: &ScanRecord<F>,
    prob: &ProbabilityRaster<F>,
    reference: &ReferenceMask,
    grid: &ThresholdGrid<F>,
    region: Region,
    convention: Convention,
) -> Result<ScanMetrics<F>, SweepError> {
    let sections: Vec<u32> = match region {
        Region::Whole => scan.reviewed_indices.clone(),
        Region::Subset => subset_sections(scan)?,
    };
    let distances = scan.distances_over(&sections, None)?;
    let n_thresholds = grid.len();
    let thresholds = grid.values();

    let mut volume_ref = F::zero();
    let mut volume_pred = vec![F::zero(); n_thresholds];
    // Per threshold, per section: (intersection, pred count, ref count).
    let mut section_counts: Vec<Vec<(usize, usize, usize)>> =
        vec![Vec::with_capacity(sections.len()); n_thresholds];

    for &(index, gap_mm) in &distances {
        let geom = scan.section(index).ok_or_else(|| SweepError::GeometryMismatch {
            scan_id: scan.scan_id.clone(),
            section: index,
        })?;
        let prob_grid = prob
            .sections
            .iter()
            .find(|s| s.index == index)
            .map(|s| &s.grid)
            .ok_or_else(|| SweepError::RasterCoverage {
                scan_id: scan.scan_id.clone(),
            })?;
        let ref_grid = reference
            .sections
            .iter()
            .find(|s| s.index == index)
            .map(|s| &s.grid)
            .ok_or_else(|| SweepError::RasterCoverage {
                scan_id: scan.scan_id.clone(),
            })?;
        if prob_grid.rows() != geom.rows
            || prob_grid.cols() != geom.cols
            || ref_grid.rows() != geom.rows
            || ref_grid.cols() != geom.cols
        {
            return Err(SweepError::GeometryMismatch {
                scan_id: scan.scan_id.clone(),
                section: index,
            });
        }

        // Bucket b counts pixels whose probability reaches thresholds[b]
        // but not thresholds[b+1]; suffix sums then give the >= t counts.
        let mut pred_buckets = vec![0usize; n_thresholds + 1];
        let mut inter_buckets = vec![0usize; n_thresholds + 1];
        let mut ref_count = 0usize;
        for (&p, &is_ref) in prob_grid.as_slice().iter().zip(ref_grid.as_slice()) {
            let b = thresholds.partition_point(|&t| t <= p);
            pred_buckets[b] += 1;
            if is_ref {
                inter_buckets[b] += 1;
                ref_count += 1;
            }
        }
        let voxel = geom.pixel_spacing_mm * geom.pixel_spacing_mm * gap_mm;
        volume_ref = volume_ref + cast_usize::<F>(ref_count) * voxel;
        let mut pred_suffix = 0usize;
        let mut inter_suffix = 0usize;
        let mut per_threshold = vec![(0usize, 0usize, 0usize); n_thresholds];
        for b in (0..n_thresholds).rev() {
            pred_suffix += pred_buckets[b + 1];
            inter_suffix += inter_buckets[b + 1];
            per_threshold[b] = (inter_suffix, pred_suffix, ref_count);
        }
        for (k, counts) in per_threshold.into_iter().enumerate() {
            volume_pred[k] = volume_pred[k] + cast_usize::<F>(counts.1) * voxel;
            section_counts[k].push(counts);
        }
    }

    let mut per_threshold = Vec::with_capacity(n_thresholds);
    for (k, &t) in thresholds.iter().enumerate() {
        let signed =
            metrics::percent_volume_difference(volume_ref, volume_pred[k], convention, true).ok();
        let per_section: Vec<(u32, Option<F>)> = sections
            .iter()
            .zip(&section_counts[k])
            .map(|(&idx, &(inter, a, b))| (idx, metrics::dsc_from_counts(inter, a, b)))
            .collect();
        let dsc_summary = metrics::summarize_section_dscs(&scan.scan_id, per_section).ok();
        per_threshold.push(ThresholdMetrics {
            threshold: t,
            volume_pred_mm3: volume_pred[k],
            signed_pct_diff: signed,
            abs_pct_diff: signed.map(|d| d.abs()),
            mean_dsc: dsc_summary.as_ref().map(|d| d.mean),
            median_dsc: dsc_summary.as_ref().map(|d| d.median),
            excluded_sections: dsc_summary.map_or(sections.len(), |d| d.excluded_sections),
        });
    }

    debug_assert!(
        per_threshold
            .windows(2)
            .all(|w| w[1].volume_pred_mm3 <= w[0].volume_pred_mm3),
        "prediction volume must be non-increasing in threshold"
    );

    Ok(ScanMetrics {
        scan_id: scan.scan_id.clone(),
        patient_id: scan.patient_id.clone(),
        region,
        volume_ref_mm3: volume_ref,
        per_threshold,
    })
}

/// Linear-interpolation quantile of an ascending-sorted slice.
pub(crate) fn quantile<F: Scalar>(sorted: &[F], q: f64) -> F {
    assert!(!sorted.is_empty());
    let h = cast::<F>(q) * cast_usize::<F>(sorted.len() - 1);
    let lo = h.floor().to_usize().unwrap_or(0);
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - cast_usize::<F>(lo);
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Mean and sample standard deviation (n - 1); a single value has SD 0.
fn mean_sd<F: Scalar>(values: &[F]) -> (F, F) {
    let n = values.len();
    let mean = values.iter().copied().sum::<F>() / cast_usize(n);
    if n < 2 {
        return (mean, F::zero());
    }
    let ss = values
        .iter()
        .map(|&v| (v - mean) * (v - mean))
        .sum::<F>();
    (mean, (ss / cast_usize(n - 1)).sqrt())
}

/// Cohort statistics at one threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow<F> {
    pub threshold: F,
    pub mean_abs_pct_diff: Option<F>,
    pub sd_abs_pct_diff: Option<F>,
    pub mean_dsc: Option<F>,
    pub sd_dsc: Option<F>,
    pub median_dsc: Option<F>,
    pub iqr_dsc: Option<F>,
    /// Number of aggregation units (scans or patients) in the cohort.
    pub n_units: usize,
}

/// The cohort-level sweep table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport<F> {
    pub thresholds: Vec<F>,
    pub grouping: Grouping,
    pub region: Region,
    pub rows: Vec<SweepRow<F>>,
}

/// Which per-scan metric to aggregate or compare.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    AbsPctDiff,
    MeanDsc,
}

impl MetricKind {
    pub fn label(self) -> &'static str {
        match self {
            MetricKind::AbsPctDiff => "abs_pct_diff",
            MetricKind::MeanDsc => "mean_dsc",
        }
    }
}

fn check_consistent_grids<F: Scalar>(metrics: &[ScanMetrics<F>]) -> Result<Vec<F>, SweepError> {
    let first = metrics.first().ok_or(SweepError::EmptyCohort)?;
    let thresholds: Vec<F> = first.per_threshold.iter().map(|m| m.threshold).collect();
    for m in metrics {
        let t: Vec<F> = m.per_threshold.iter().map(|x| x.threshold).collect();
        if t != thresholds {
            return Err(SweepError::MixedGrids);
        }
    }
    Ok(thresholds)
}

/// Thresholds, unit labels, and per-threshold per-unit values.
pub type UnitValues<F> = (Vec<F>, Vec<String>, Vec<Vec<Option<F>>>);

/// Per-unit metric values at every threshold, under the given grouping.
///
/// Per-patient grouping first averages each patient's scans (over the
/// scans where the value is defined); a patient with no defined scan at
/// a threshold is undefined there. Units are ordered by identifier, so
/// the result is independent of the input ordering.
pub fn unit_metric_values<F: Scalar>(
    metrics: &[ScanMetrics<F>],
    grouping: Grouping,
    kind: MetricKind,
) -> Result<UnitValues<F>, SweepError> {
    let thresholds = check_consistent_grids(metrics)?;
    let pick = |m: &ThresholdMetrics<F>| match kind {
        MetricKind::AbsPctDiff => m.abs_pct_diff,
        MetricKind::MeanDsc => m.mean_dsc,
    };
    let mut ordered: Vec<&ScanMetrics<F>> = metrics.iter().collect();
    ordered.sort_by(|a, b| {
        (&a.patient_id, &a.scan_id).cmp(&(&b.patient_id, &b.scan_id))
    });
    match grouping {
        Grouping::PerScan => {
            let labels = ordered.iter().map(|m| m.scan_id.clone()).collect();
            let per_threshold = (0..thresholds.len())
                .map(|k| ordered.iter().map(|m| pick(&m.per_threshold[k])).collect())
                .collect();
            Ok((thresholds, labels, per_threshold))
        }
        Grouping::PerPatient => {
            let mut by_patient: BTreeMap<&str, Vec<&ScanMetrics<F>>> = BTreeMap::new();
            for m in &ordered {
                by_patient.entry(&m.patient_id).or_default().push(m);
            }
            let labels: Vec<String> = by_patient.keys().map(|s| s.to_string()).collect();
            let per_threshold = (0..thresholds.len())
                .map(|k| {
                    by_patient
                        .values()
                        .map(|scans| {
                            let defined: Vec<F> = scans
                                .iter()
                                .filter_map(|m| pick(&m.per_threshold[k]))
                                .collect();
                            if defined.is_empty() {
                                None
                            } else {
                                Some(
                                    defined.iter().copied().sum::<F>()
                                        / cast_usize(defined.len()),
                                )
                            }
                        })
                        .collect()
                })
                .collect();
            Ok((thresholds, labels, per_threshold))
        }
    }
}

/// Aggregates scan metrics into the cohort sweep table.
///
/// Statistics at each threshold are computed over the units where the
/// metric is defined; `n_units` records the cohort size.
pub fn aggregate<F: Scalar>(
    metrics: &[ScanMetrics<F>],
    grouping: Grouping,
) -> Result<SweepReport<F>, SweepError> {
    let (thresholds, labels, pct) = unit_metric_values(metrics, grouping, MetricKind::AbsPctDiff)?;
    let (_, _, dsc) = unit_metric_values(metrics, grouping, MetricKind::MeanDsc)?;
    let n_units = labels.len();
    let region = metrics[0].region;
    let rows = thresholds
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let pct_defined: Vec<F> = pct[k].iter().filter_map(|v| *v).collect();
            let dsc_defined: Vec<F> = dsc[k].iter().filter_map(|v| *v).collect();
            let (mean_pct, sd_pct) = if pct_defined.is_empty() {
                (None, None)
            } else {
                let (m, s) = mean_sd(&pct_defined);
                (Some(m), Some(s))
            };
            let (mean_dsc, sd_dsc, median_dsc, iqr_dsc) = if dsc_defined.is_empty() {
                (None, None, None, None)
            } else {
                let (m, s) = mean_sd(&dsc_defined);
                let mut sorted = dsc_defined;
                sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let median = quantile(&sorted, 0.5);
                let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
                (Some(m), Some(s), Some(median), Some(iqr))
            };
            SweepRow {
                threshold: t,
                mean_abs_pct_diff: mean_pct,
                sd_abs_pct_diff: sd_pct,
                mean_dsc,
                sd_dsc,
                median_dsc,
                iqr_dsc,
                n_units,
            }
        })
        .collect();
    Ok(SweepReport {
        thresholds,
        grouping,
        region,
        rows,
    })
}

/// Per-scan optimal thresholds for the two figures of merit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalThresholds<F> {
    /// Threshold minimizing the absolute percent volume difference.
    pub t_volume: F,
    /// Threshold maximizing the mean DSC.
    pub t_dsc: F,
}

/// Selects the optimal threshold per figure of merit, breaking ties by
/// the largest threshold. Undefined entries are skipped; if nothing is
/// defined the largest grid threshold is returned (everything tied).
pub fn optimal_thresholds<F: Scalar>(metrics: &ScanMetrics<F>) -> OptimalThresholds<F> {
    let last = metrics
        .per_threshold
        .last()
        .expect("metrics cover the grid")
        .threshold;
    let mut t_volume = last;
    let mut best_pct: Option<F> = None;
    let mut t_dsc = last;
    let mut best_dsc: Option<F> = None;
    for m in &metrics.per_threshold {
        if let Some(p) = m.abs_pct_diff {
            if best_pct.is_none_or(|b| p <= b) {
                best_pct = Some(p);
                t_volume = m.threshold;
            }
        }
        if let Some(d) = m.mean_dsc {
            if best_dsc.is_none_or(|b| d >= b) {
                best_dsc = Some(d);
                t_dsc = m.threshold;
            }
        }
    }
    OptimalThresholds { t_volume, t_dsc }
}

/// How often each grid threshold is optimal, per figure of merit.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalHistogram<F> {
    pub thresholds: Vec<F>,
    pub volume_counts: Vec<usize>,
    pub dsc_counts: Vec<usize>,
}

/// Tallies per-scan optimal thresholds; each count vector sums to the
/// number of scans.
pub fn optimal_histogram<F: Scalar>(
    metrics: &[ScanMetrics<F>],
) -> Result<OptimalHistogram<F>, SweepError> {
    let thresholds = check_consistent_grids(metrics)?;
    let mut volume_counts = vec![0usize; thresholds.len()];
    let mut dsc_counts = vec![0usize; thresholds.len()];
    for m in metrics {
        let opt = optimal_thresholds(m);
        let vi = thresholds.iter().position(|&t| t == opt.t_volume).unwrap();
        let di = thresholds.iter().position(|&t| t == opt.t_dsc).unwrap();
        volume_counts[vi] += 1;
        dsc_counts[di] += 1;
    }
    Ok(OptimalHistogram {
        thresholds,
        volume_counts,
        dsc_counts,
    })
}
