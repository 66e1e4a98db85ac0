//! Binarization and the two figures of merit: tumor volume and the
//! Dice similarity coefficient, plus percent-difference conventions.

use thiserror::Error;

use crate::grid::Grid;
use crate::model::{ModelError, ProbabilityRaster, ReferenceMask, ScanRecord, SectionGrid};
use crate::scalar::{cast, cast_usize, Scalar};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("threshold {0} outside (0, 1]")]
    BadThreshold(f64),
    #[error("section {section}: mask is {actual_rows}x{actual_cols} but expected {expected_rows}x{expected_cols}")]
    DimensionMismatch {
        section: u32,
        expected_rows: usize,
        expected_cols: usize,
        actual_rows: usize,
        actual_cols: usize,
    },
    #[error("masks cover different section sets")]
    SectionSetMismatch,
    #[error("scan `{scan_id}`: no comparable sections (all section pairs empty)")]
    NoComparableSections { scan_id: String },
    #[error("scan `{scan_id}`: undefined percent difference (zero denominator)")]
    UndefinedDifference { scan_id: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Where a binary mask came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdLabel<F> {
    /// Thresholded prediction at this probability cutoff.
    Probability(F),
    /// The reference standard.
    Reference,
}

/// Boolean tumor grids for the reviewed sections of one scan.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask<F> {
    pub scan_id: String,
    pub threshold_used: ThresholdLabel<F>,
    pub sections: Vec<SectionGrid<bool>>,
}

impl<F: Scalar> BinaryMask<F> {
    pub fn from_reference(mask: &ReferenceMask) -> Self {
        BinaryMask {
            scan_id: mask.scan_id.clone(),
            threshold_used: ThresholdLabel::Reference,
            sections: mask.sections.clone(),
        }
    }
}

/// Tumor volume for one mask.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeResult<F> {
    pub scan_id: String,
    pub threshold: ThresholdLabel<F>,
    pub volume_mm3: F,
    pub per_section_pixel_counts: Vec<(u32, usize)>,
}

/// Labels a pixel tumor iff its probability is `>= threshold`.
///
/// The comparison is inclusive, so the mask at a higher threshold is
/// always a subset of the mask at a lower one.
pub fn binarize<F: Scalar>(
    prob: &ProbabilityRaster<F>,
    threshold: F,
) -> Result<BinaryMask<F>, MetricsError> {
    if !(threshold > F::zero() && threshold <= F::one()) {
        return Err(MetricsError::BadThreshold(
            threshold.to_f64().unwrap_or(f64::NAN),
        ));
    }
    let sections = prob
        .sections
        .iter()
        .map(|s| SectionGrid {
            index: s.index,
            grid: Grid::from_vec(
                s.grid.rows(),
                s.grid.cols(),
                s.grid.as_slice().iter().map(|&p| p >= threshold).collect(),
            ),
        })
        .collect();
    Ok(BinaryMask {
        scan_id: prob.scan_id.clone(),
        threshold_used: ThresholdLabel::Probability(threshold),
        sections,
    })
}

/// Tumor volume: per reviewed section, pixel count x pixel spacing
/// squared x inter-section distance, summed in mm^3.
pub fn tumor_volume<F: Scalar>(
    mask: &BinaryMask<F>,
    scan: &ScanRecord<F>,
) -> Result<VolumeResult<F>, MetricsError> {
    let distances = scan.inter_section_distances()?;
    let mut volume = F::zero();
    let mut counts = Vec::with_capacity(mask.sections.len());
    if mask.sections.len() != distances.len()
        || mask
            .sections
            .iter()
            .zip(&distances)
            .any(|(s, &(idx, _))| s.index != idx)
    {
        return Err(MetricsError::SectionSetMismatch);
    }
    for (section, &(index, gap_mm)) in mask.sections.iter().zip(&distances) {
        let geom = scan.section(index).ok_or(MetricsError::SectionSetMismatch)?;
        if section.grid.rows() != geom.rows || section.grid.cols() != geom.cols {
            return Err(MetricsError::DimensionMismatch {
                section: index,
                expected_rows: geom.rows,
                expected_cols: geom.cols,
                actual_rows: section.grid.rows(),
                actual_cols: section.grid.cols(),
            });
        }
        let count = section.grid.count_true();
        volume = volume
            + cast_usize::<F>(count) * geom.pixel_spacing_mm * geom.pixel_spacing_mm * gap_mm;
        counts.push((index, count));
    }
    Ok(VolumeResult {
        scan_id: mask.scan_id.clone(),
        threshold: mask.threshold_used,
        volume_mm3: volume,
        per_section_pixel_counts: counts,
    })
}

/// Dice similarity coefficient between two sections: 2|A n B| / (|A| + |B|).
///
/// Returns `None` when both sections are empty (the 0/0 case); such
/// sections are excluded from per-scan averages. If exactly one section
/// is empty the overlap is genuinely zero and 0 is returned.
pub fn dsc<F: Scalar>(a: &Grid<bool>, b: &Grid<bool>) -> Result<Option<F>, MetricsError> {
    if !a.same_shape(b) {
        return Err(MetricsError::DimensionMismatch {
            section: 0,
            expected_rows: a.rows(),
            expected_cols: a.cols(),
            actual_rows: b.rows(),
            actual_cols: b.cols(),
        });
    }
    let mut inter = 0usize;
    let mut count_a = 0usize;
    let mut count_b = 0usize;
    for (&x, &y) in a.as_slice().iter().zip(b.as_slice()) {
        count_a += usize::from(x);
        count_b += usize::from(y);
        inter += usize::from(x && y);
    }
    Ok(dsc_from_counts(inter, count_a, count_b))
}

/// DSC from raw counts; shared by the direct and sweep paths.
#[inline]
pub(crate) fn dsc_from_counts<F: Scalar>(
    intersection: usize,
    count_a: usize,
    count_b: usize,
) -> Option<F> {
    if count_a + count_b == 0 {
        None
    } else {
        Some(cast::<F>(2.0) * cast_usize::<F>(intersection) / cast_usize::<F>(count_a + count_b))
    }
}

/// Per-scan DSC summary over the reviewed sections.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanDsc<F> {
    pub mean: F,
    pub median: F,
    pub per_section: Vec<(u32, Option<F>)>,
    /// Sections excluded because both masks were empty there.
    pub excluded_sections: usize,
}

/// DSC per section, then mean/median over the sections where it is
/// defined; both-empty sections are excluded and counted.
pub fn scan_dsc<F: Scalar>(
    pred: &BinaryMask<F>,
    reference: &ReferenceMask,
) -> Result<ScanDsc<F>, MetricsError> {
    if pred.sections.len() != reference.sections.len()
        || pred
            .sections
            .iter()
            .zip(&reference.sections)
            .any(|(a, b)| a.index != b.index)
    {
        return Err(MetricsError::SectionSetMismatch);
    }
    let mut per_section = Vec::with_capacity(pred.sections.len());
    for (a, b) in pred.sections.iter().zip(&reference.sections) {
        per_section.push((a.index, dsc::<F>(&a.grid, &b.grid)?));
    }
    summarize_section_dscs(&pred.scan_id, per_section)
}

pub(crate) fn summarize_section_dscs<F: Scalar>(
    scan_id: &str,
    per_section: Vec<(u32, Option<F>)>,
) -> Result<ScanDsc<F>, MetricsError> {
    let defined: Vec<F> = per_section.iter().filter_map(|&(_, d)| d).collect();
    if defined.is_empty() {
        return Err(MetricsError::NoComparableSections {
            scan_id: scan_id.to_string(),
        });
    }
    let excluded = per_section.len() - defined.len();
    let mean = defined.iter().copied().sum::<F>() / cast_usize(defined.len());
    let mut sorted = defined;
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = crate::sweep::quantile(&sorted, 0.5);
    Ok(ScanDsc {
        mean,
        median,
        per_section,
        excluded_sections: excluded,
    })
}

/// Denominator used for relative volume differences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Convention {
    /// 100 * (v_ref - v_pred) / v_ref. Positive means the prediction
    /// undermeasures the reference. This is the default.
    RefDenominator,
    /// 100 * (v_ref - v_pred) / ((v_ref + v_pred) / 2).
    MeanDenominator,
}

/// Relative volume difference in percent.
pub fn percent_volume_difference<F: Scalar>(
    v_ref: F,
    v_pred: F,
    convention: Convention,
    signed: bool,
) -> Result<F, MetricsError> {
    let denom = match convention {
        Convention::RefDenominator => v_ref,
        Convention::MeanDenominator => (v_ref + v_pred) / cast(2.0),
    };
    if !(denom > F::zero()) {
        return Err(MetricsError::UndefinedDifference {
            scan_id: String::new(),
        });
    }
    let diff = cast::<F>(100.0) * (v_ref - v_pred) / denom;
    Ok(if signed { diff } else { diff.abs() })
}
