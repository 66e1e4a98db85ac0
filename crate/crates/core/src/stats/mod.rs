//! Nonparametric statistics: one-sample Kolmogorov-Smirnov normality
//! check, Wilcoxon signed-rank paired comparisons, threshold p-value
//! matrices, and Bland-Altman limits of agreement.

pub mod normal;

use thiserror::Error;

use crate::metrics::{percent_volume_difference, Convention};
use crate::scalar::{cast, cast_usize, Scalar};
use crate::sweep::{unit_metric_values, Grouping, MetricKind, ScanMetrics, SweepError};

use normal::{kolmogorov_survival, normal_cdf};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("paired sample requires equal, non-zero lengths (got {a} and {b})")]
    BadPairedSample { a: usize, b: usize },
    #[error("sample too small: need at least {need}, got {got}")]
    SampleTooSmall { need: usize, got: usize },
    #[error("degenerate sample: zero variance")]
    DegenerateSample,
    #[error("no nonzero pairs: every difference is zero")]
    NoNonzeroPairs,
    #[error("exact method unavailable: {0}")]
    ExactUnavailable(String),
    #[error(transparent)]
    Sweep(#[from] SweepError),
}

/// Label-aligned paired observations (e.g. one metric at two thresholds).
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample<F> {
    pub labels: Vec<String>,
    pub a: Vec<F>,
    pub b: Vec<F>,
}

impl<F: Scalar> PairedSample<F> {
    pub fn new(labels: Vec<String>, a: Vec<F>, b: Vec<F>) -> Result<Self, StatsError> {
        if a.len() != b.len() || a.is_empty() || labels.len() != a.len() {
            return Err(StatsError::BadPairedSample {
                a: a.len(),
                b: b.len(),
            });
        }
        Ok(PairedSample { labels, a, b })
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }
}

/// How a Wilcoxon p-value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WilcoxonMethod {
    /// Choose exactly when n_effective <= 25 and ranks carry no ties.
    Auto,
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WilcoxonResult<F> {
    /// min(W+, W-) over the signed ranks.
    pub w_statistic: F,
    pub p_value_two_sided: F,
    /// Pairs remaining after dropping zero differences.
    pub n_effective: usize,
    pub used_exact: bool,
}

/// Wilcoxon signed-rank test, two-sided.
///
/// Zero differences are dropped; absolute differences are ranked with
/// mid-ranks for ties. The exact null distribution (all 2^n sign
/// assignments) is used when `n_effective <= 25` and there are no ties;
/// otherwise the normal approximation with continuity and tie-variance
/// corrections applies.
pub fn wilcoxon_signed_rank<F: Scalar>(
    pairs: &PairedSample<F>,
) -> Result<WilcoxonResult<F>, StatsError> {
    wilcoxon_signed_rank_with(pairs, WilcoxonMethod::Auto)
}

pub fn wilcoxon_signed_rank_with<F: Scalar>(
    pairs: &PairedSample<F>,
    method: WilcoxonMethod,
) -> Result<WilcoxonResult<F>, StatsError> {
    let mut diffs: Vec<F> = pairs
        .a
        .iter()
        .zip(&pairs.b)
        .map(|(&x, &y)| x - y)
        .filter(|d| !d.is_zero())
        .collect();
    if diffs.is_empty() {
        return Err(StatsError::NoNonzeroPairs);
    }
    let n = diffs.len();
    diffs.sort_by(|x, y| x.abs().partial_cmp(&y.abs()).unwrap());

    // Mid-ranks over |d|; tie_term accumulates sum(t^3 - t).
    let mut ranks = vec![F::zero(); n];
    let mut has_ties = false;
    let mut tie_term = 0.0f64;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && diffs[j + 1].abs() == diffs[i].abs() {
            j += 1;
        }
        let tied = j - i + 1;
        if tied > 1 {
            has_ties = true;
            tie_term += (tied * tied * tied - tied) as f64;
        }
        let avg_rank = cast::<F>((i + j) as f64 / 2.0 + 1.0);
        for r in ranks.iter_mut().take(j + 1).skip(i) {
            *r = avg_rank;
        }
        i = j + 1;
    }

    let mut w_plus = F::zero();
    for (d, &r) in diffs.iter().zip(&ranks) {
        if *d > F::zero() {
            w_plus = w_plus + r;
        }
    }
    let total = cast::<F>((n * (n + 1)) as f64 / 2.0);
    let w_minus = total - w_plus;
    let w = w_plus.min(w_minus);

    let exact_possible = n <= 25 && !has_ties;
    let use_exact = match method {
        WilcoxonMethod::Auto => exact_possible,
        WilcoxonMethod::Exact => {
            if !exact_possible {
                return Err(StatsError::ExactUnavailable(if has_ties {
                    "ties present".into()
                } else {
                    format!("n_effective {n} > 25")
                }));
            }
            true
        }
        WilcoxonMethod::NormalApprox => false,
    };

    let p = if use_exact {
        exact_two_sided_p(n, w_plus.to_f64().unwrap().round() as u64)
    } else {
        let nf = n as f64;
        let mu = nf * (nf + 1.0) / 4.0;
        let sigma2 = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
        let sigma = sigma2.sqrt();
        let d = w_plus.to_f64().unwrap() - mu;
        let correction = 0.5 * d.signum() * f64::from(d != 0.0);
        let z = (d - correction) / sigma;
        let phi = normal_cdf::<f64>(z);
        (2.0 * phi.min(1.0 - phi)).min(1.0)
    };

    Ok(WilcoxonResult {
        w_statistic: w,
        p_value_two_sided: cast(p),
        n_effective: n,
        used_exact: use_exact,
    })
}

/// Exact two-sided p over the null distribution of W+ for untied integer
/// ranks 1..=n, computed by convolution over achievable rank sums. This
/// enumerates the same 2^n sign-assignment distribution directly.
fn exact_two_sided_p(n: usize, w_plus: u64) -> f64 {
    let max_sum = n * (n + 1) / 2;
    let mut counts = vec![0u64; max_sum + 1];
    counts[0] = 1;
    for rank in 1..=n {
        for s in (rank..=max_sum).rev() {
            counts[s] += counts[s - rank];
        }
    }
    let total = 2f64.powi(n as i32);
    let w = w_plus as usize;
    let p_le: u64 = counts[..=w].iter().sum();
    let p_ge: u64 = counts[w..].iter().sum();
    let p = 2.0 * (p_le.min(p_ge) as f64) / total;
    p.min(1.0)
}

/// One-sample KS test outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct KsResult<F> {
    pub statistic: F,
    pub p_value: F,
    pub reject_at_0_05: bool,
    pub n: usize,
}

/// KS normality check: standardizes by sample mean and SD, then tests
/// against the standard normal CDF with the asymptotic Kolmogorov
/// p-value. Note that estimating the parameters from the sample makes
/// the nominal p-value conservative.
pub fn ks_normality<F: Scalar>(sample: &[F]) -> Result<KsResult<F>, StatsError> {
    if sample.len() < 4 {
        return Err(StatsError::SampleTooSmall {
            need: 4,
            got: sample.len(),
        });
    }
    let n = cast_usize::<F>(sample.len());
    let mean = sample.iter().copied().sum::<F>() / n;
    let ss = sample.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>();
    let sd = (ss / (n - F::one())).sqrt();
    if !(sd > F::zero()) {
        return Err(StatsError::DegenerateSample);
    }
    let standardized: Vec<F> = sample.iter().map(|&v| (v - mean) / sd).collect();
    ks_against_standard_normal(&standardized)
}

/// KS test of the raw sample against the standard normal, without
/// standardization.
pub fn ks_against_standard_normal<F: Scalar>(sample: &[F]) -> Result<KsResult<F>, StatsError> {
    if sample.len() < 4 {
        return Err(StatsError::SampleTooSmall {
            need: 4,
            got: sample.len(),
        });
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let nf = cast_usize::<F>(n);
    let mut d = F::zero();
    for (i, &x) in sorted.iter().enumerate() {
        let phi = normal_cdf(x);
        let above = cast_usize::<F>(i + 1) / nf - phi;
        let below = phi - cast_usize::<F>(i) / nf;
        d = d.max(above).max(below);
    }
    let lambda = nf.sqrt() * d;
    let p = kolmogorov_survival(lambda);
    Ok(KsResult {
        statistic: d,
        p_value: p,
        reject_at_0_05: p < cast(0.05),
        n,
    })
}

/// Symmetric matrix of two-sided Wilcoxon p-values across thresholds.
///
/// Cells are `None` where the test is undefined (the diagonal, all-zero
/// differences, or no complete pairs).
#[derive(Debug, Clone, PartialEq)]
pub struct PValueMatrix<F> {
    pub thresholds: Vec<F>,
    pub metric: MetricKind,
    pub grouping: Grouping,
    pub cells: Vec<Vec<Option<F>>>,
}

/// Builds the threshold-by-threshold comparison matrix for one figure
/// of merit, pairing units under the given grouping. Pairs where either
/// value is undefined are dropped per cell.
pub fn pvalue_matrix<F: Scalar>(
    metric: MetricKind,
    metrics: &[ScanMetrics<F>],
    grouping: Grouping,
) -> Result<PValueMatrix<F>, StatsError> {
    let (thresholds, labels, values) = unit_metric_values(metrics, grouping, metric)?;
    if thresholds.len() < 2 {
        return Err(StatsError::SampleTooSmall {
            need: 2,
            got: thresholds.len(),
        });
    }
    let k = thresholds.len();
    let mut cells = vec![vec![None; k]; k];
    for i in 0..k {
        for j in (i + 1)..k {
            let mut pl = Vec::new();
            let mut pa = Vec::new();
            let mut pb = Vec::new();
            for (u, label) in labels.iter().enumerate() {
                if let (Some(x), Some(y)) = (values[i][u], values[j][u]) {
                    pl.push(label.clone());
                    pa.push(x);
                    pb.push(y);
                }
            }
            let p = PairedSample::new(pl, pa, pb)
                .and_then(|s| wilcoxon_signed_rank(&s))
                .ok()
                .map(|r| r.p_value_two_sided);
            cells[i][j] = p;
            cells[j][i] = p;
        }
    }
    Ok(PValueMatrix {
        thresholds,
        metric,
        grouping,
        cells,
    })
}

/// Limits-of-agreement summary for paired volumes.
#[derive(Debug, Clone, PartialEq)]
pub struct BlandAltmanResult<F> {
    pub mean_diff: F,
    pub sd_diff: F,
    pub loa_low: F,
    pub loa_high: F,
    pub band_halfwidth: F,
    /// Pairs whose |difference| <= band_halfwidth.
    pub within_band_count: usize,
    pub n_pairs: usize,
    /// Pairs dropped because the denominator was invalid.
    pub excluded_pairs: usize,
}

/// Per-pair relative differences under a convention; `None` where the
/// denominator is invalid.
pub fn paired_differences<F: Scalar>(
    v_ref: &[F],
    v_pred: &[F],
    convention: Convention,
) -> Vec<Option<F>> {
    v_ref
        .iter()
        .zip(v_pred)
        .map(|(&r, &p)| percent_volume_difference(r, p, convention, true).ok())
        .collect()
}

/// Bland-Altman analysis of relative volume differences: mean bias,
/// sample SD, limits of agreement at mean +/- 1.96 SD, and the count of
/// pairs within the +/- band.
pub fn bland_altman<F: Scalar>(
    v_ref: &[F],
    v_pred: &[F],
    convention: Convention,
    band_halfwidth: F,
) -> Result<BlandAltmanResult<F>, StatsError> {
    if v_ref.len() != v_pred.len() || v_ref.is_empty() {
        return Err(StatsError::BadPairedSample {
            a: v_ref.len(),
            b: v_pred.len(),
        });
    }
    let all = paired_differences(v_ref, v_pred, convention);
    let diffs: Vec<F> = all.iter().filter_map(|d| *d).collect();
    let excluded = all.len() - diffs.len();
    if diffs.is_empty() {
        return Err(StatsError::DegenerateSample);
    }
    let n = diffs.len();
    let mean = diffs.iter().copied().sum::<F>() / cast_usize(n);
    let sd = if n < 2 {
        F::zero()
    } else {
        (diffs
            .iter()
            .map(|&d| (d - mean) * (d - mean))
            .sum::<F>()
            / cast_usize(n - 1))
        .sqrt()
    };
    let margin = cast::<F>(1.96) * sd;
    let within = diffs
        .iter()
        .filter(|&&d| d.abs() <= band_halfwidth)
        .count();
    Ok(BlandAltmanResult {
        mean_diff: mean,
        sd_diff: sd,
        loa_low: mean - margin,
        loa_high: mean + margin,
        band_halfwidth,
        within_band_count: within,
        n_pairs: n,
        excluded_pairs: excluded,
    })
}
