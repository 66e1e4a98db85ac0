//! CSV and SVG artifact emission.
//!
//! Numeric CSV fields use 6 significant digits with a `.` decimal
//! separator and no locale dependence; undefined values are written as
//! `n/a`. SVG output embeds no timestamps or nondeterministic ids, so
//! reruns produce byte-identical files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::scalar::Scalar;
use crate::stats::{BlandAltmanResult, PValueMatrix};
use crate::sweep::{OptimalHistogram, Region, ScanMetrics, SweepReport, ThresholdMetrics};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

const NA: &str = "n/a";

/// Formats a value with 6 significant digits, `%g` style: fixed-point
/// for moderate magnitudes, scientific otherwise, trailing zeros
/// trimmed.
pub fn fmt_sig(x: f64) -> String {
    if !x.is_finite() {
        return NA.to_string();
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let mag = x.abs().log10().floor() as i32;
    if (-4..15).contains(&mag) {
        let decimals = (5 - mag).max(0) as usize;
        let s = format!("{x:.decimals$}");
        trim_zeros(s)
    } else {
        let s = format!("{x:.5e}");
        let (mantissa, exp) = s.split_once('e').expect("exponent form");
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn fmt_opt<F: Scalar>(v: Option<F>) -> String {
    v.and_then(|x| x.to_f64())
        .map(fmt_sig)
        .unwrap_or_else(|| NA.to_string())
}

fn fmt_val<F: Scalar>(v: F) -> String {
    fmt_opt(Some(v))
}

fn write_file(path: &Path, contents: &str) -> Result<(), ReportError> {
    std::fs::write(path, contents.as_bytes()).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// One row per grid threshold, the cohort-table layout.
pub fn write_sweep_report_csv<F: Scalar>(
    path: &Path,
    report: &SweepReport<F>,
) -> Result<(), ReportError> {
    let mut out = String::from(
        "threshold,mean_abs_pct_diff,sd_abs_pct_diff,mean_dsc,sd_dsc,median_dsc,iqr_dsc,n\n",
    );
    for row in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            fmt_val(row.threshold),
            fmt_opt(row.mean_abs_pct_diff),
            fmt_opt(row.sd_abs_pct_diff),
            fmt_opt(row.mean_dsc),
            fmt_opt(row.sd_dsc),
            fmt_opt(row.median_dsc),
            fmt_opt(row.iqr_dsc),
            row.n_units,
        );
    }
    write_file(path, &out)
}

const PER_SCAN_METRICS: [&str; 7] = [
    "volume_ref",
    "volume_pred",
    "signed_pct_diff",
    "abs_pct_diff",
    "mean_dsc",
    "median_dsc",
    "excluded_sections",
];

/// Long-format per-scan metrics: scan_id, patient_id, threshold,
/// metric, value.
pub fn write_per_scan_csv<F: Scalar>(
    path: &Path,
    metrics: &[ScanMetrics<F>],
) -> Result<(), ReportError> {
    let mut out = String::from("scan_id,patient_id,threshold,metric,value\n");
    for scan in metrics {
        for m in &scan.per_threshold {
            let values = [
                fmt_val(scan.volume_ref_mm3),
                fmt_val(m.volume_pred_mm3),
                fmt_opt(m.signed_pct_diff),
                fmt_opt(m.abs_pct_diff),
                fmt_opt(m.mean_dsc),
                fmt_opt(m.median_dsc),
                m.excluded_sections.to_string(),
            ];
            for (name, value) in PER_SCAN_METRICS.iter().zip(values) {
                let _ = writeln!(
                    out,
                    "{},{},{},{name},{value}",
                    scan.scan_id,
                    scan.patient_id,
                    fmt_val(m.threshold),
                );
            }
        }
    }
    write_file(path, &out)
}

/// Reads the long-format per-scan CSV back into scan metrics.
///
/// The evaluation region is not stored in the CSV; reloaded metrics are
/// tagged `whole`, which downstream statistics do not consult.
pub fn read_per_scan_csv(path: &Path) -> Result<Vec<ScanMetrics<f64>>, ReportError> {
    let text = std::fs::read_to_string(path).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let bad = |line: usize, message: String| ReportError::Malformed {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut scans: Vec<ScanMetrics<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != "scan_id,patient_id,threshold,metric,value" {
                return Err(bad(1, "unexpected header".into()));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(bad(i + 1, format!("expected 5 fields, got {}", fields.len())));
        }
        let (scan_id, patient_id, threshold_s, metric, value_s) =
            (fields[0], fields[1], fields[2], fields[3], fields[4]);
        let threshold: f64 = threshold_s
            .parse()
            .map_err(|_| bad(i + 1, format!("bad threshold {threshold_s:?}")))?;
        let value: Option<f64> = if value_s == NA {
            None
        } else {
            Some(
                value_s
                    .parse()
                    .map_err(|_| bad(i + 1, format!("bad value {value_s:?}")))?,
            )
        };
        let scan = match scans.last_mut() {
            Some(s) if s.scan_id == scan_id => s,
            _ => {
                scans.push(ScanMetrics {
                    scan_id: scan_id.to_string(),
                    patient_id: patient_id.to_string(),
                    region: Region::Whole,
                    volume_ref_mm3: 0.0,
                    per_threshold: Vec::new(),
                });
                scans.last_mut().unwrap()
            }
        };
        let entry = match scan.per_threshold.last_mut() {
            Some(e) if e.threshold == threshold => e,
            _ => {
                scan.per_threshold.push(ThresholdMetrics {
                    threshold,
                    volume_pred_mm3: 0.0,
                    signed_pct_diff: None,
                    abs_pct_diff: None,
                    mean_dsc: None,
                    median_dsc: None,
                    excluded_sections: 0,
                });
                scan.per_threshold.last_mut().unwrap()
            }
        };
        match metric {
            "volume_ref" => scan.volume_ref_mm3 = value.unwrap_or(0.0),
            "volume_pred" => entry.volume_pred_mm3 = value.unwrap_or(0.0),
            "signed_pct_diff" => entry.signed_pct_diff = value,
            "abs_pct_diff" => entry.abs_pct_diff = value,
            "mean_dsc" => entry.mean_dsc = value,
            "median_dsc" => entry.median_dsc = value,
            "excluded_sections" => entry.excluded_sections = value.unwrap_or(0.0) as usize,
            other => return Err(bad(i + 1, format!("unknown metric {other:?}"))),
        }
    }
    Ok(scans)
}

/// Symmetric p-value matrix with threshold labels on both axes.
pub fn write_pvalue_matrix_csv<F: Scalar>(
    path: &Path,
    matrix: &PValueMatrix<F>,
) -> Result<(), ReportError> {
    let mut out = String::from("threshold");
    for t in &matrix.thresholds {
        let _ = write!(out, ",{}", fmt_val(*t));
    }
    out.push('\n');
    for (i, t) in matrix.thresholds.iter().enumerate() {
        let _ = write!(out, "{}", fmt_val(*t));
        for j in 0..matrix.thresholds.len() {
            let _ = write!(out, ",{}", fmt_opt(matrix.cells[i][j]));
        }
        out.push('\n');
    }
    write_file(path, &out)
}

/// Bland-Altman summary, one row.
pub fn write_bland_altman_csv<F: Scalar>(
    path: &Path,
    result: &BlandAltmanResult<F>,
) -> Result<(), ReportError> {
    let mut out = String::from(
        "n,mean_diff,sd_diff,loa_low,loa_high,band_halfwidth,within_band_count,excluded_pairs\n",
    );
    let _ = writeln!(
        out,
        "{},{},{},{},{},{},{},{}",
        result.n_pairs,
        fmt_val(result.mean_diff),
        fmt_val(result.sd_diff),
        fmt_val(result.loa_low),
        fmt_val(result.loa_high),
        fmt_val(result.band_halfwidth),
        result.within_band_count,
        result.excluded_pairs,
    );
    write_file(path, &out)
}

/// Per-pair Bland-Altman table backing the scatter plot.
pub fn write_bland_altman_pairs_csv(
    path: &Path,
    pairs: &[(String, f64, f64, Option<f64>)],
    band_halfwidth: f64,
) -> Result<(), ReportError> {
    let mut out = String::from("label,v_ref_mm3,v_pred_mm3,mean_mm3,diff_pct,within_band\n");
    for (label, v_ref, v_pred, diff) in pairs {
        let within = diff
            .map(|d| usize::from(d.abs() <= band_halfwidth).to_string())
            .unwrap_or_else(|| NA.to_string());
        let _ = writeln!(
            out,
            "{label},{},{},{},{},{within}",
            fmt_sig(*v_ref),
            fmt_sig(*v_pred),
            fmt_sig((v_ref + v_pred) / 2.0),
            diff.map(fmt_sig).unwrap_or_else(|| NA.to_string()),
        );
    }
    write_file(path, &out)
}

// --- SVG emission ------------------------------------------------------

const SVG_W: f64 = 860.0;
const SVG_H: f64 = 520.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 30.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 60.0;

struct Plot {
    body: String,
    y_min: f64,
    y_max: f64,
    n_slots: usize,
}

impl Plot {
    fn new(y_min: f64, y_max: f64, n_slots: usize) -> Self {
        let pad = ((y_max - y_min) * 0.08).max(1e-9);
        Plot {
            body: String::new(),
            y_min: y_min - pad,
            y_max: y_max + pad,
            n_slots,
        }
    }

    fn x_slot(&self, slot: usize, frac: f64) -> f64 {
        let width = SVG_W - MARGIN_L - MARGIN_R;
        MARGIN_L + width * (slot as f64 + frac) / self.n_slots as f64
    }

    fn y(&self, v: f64) -> f64 {
        let height = SVG_H - MARGIN_T - MARGIN_B;
        MARGIN_T + height * (1.0 - (v - self.y_min) / (self.y_max - self.y_min))
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, style: &str) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" {style}/>"#
        );
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, style: &str) {
        let _ = writeln!(
            self.body,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" {style}/>"#
        );
    }

    fn circle(&mut self, cx: f64, cy: f64, r: f64, style: &str) {
        let _ = writeln!(
            self.body,
            r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="{r:.2}" {style}/>"#
        );
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, content: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" text-anchor="{anchor}" font-family="sans-serif" font-size="12">{content}</text>"#
        );
    }

    fn axes(&mut self, title: &str, y_label: &str, x_labels: &[String]) {
        let x0 = MARGIN_L;
        let x1 = SVG_W - MARGIN_R;
        let y0 = SVG_H - MARGIN_B;
        let y1 = MARGIN_T;
        self.line(x0, y0, x1, y0, r#"stroke="black" stroke-width="1""#);
        self.line(x0, y0, x0, y1, r#"stroke="black" stroke-width="1""#);
        self.text((x0 + x1) / 2.0, 20.0, "middle", title);
        // Y ticks at 5 even divisions.
        for k in 0..=5 {
            let v = self.y_min + (self.y_max - self.y_min) * k as f64 / 5.0;
            let y = self.y(v);
            self.line(x0 - 4.0, y, x0, y, r#"stroke="black" stroke-width="1""#);
            self.text(x0 - 8.0, y + 4.0, "end", &fmt_sig((v * 1e4).round() / 1e4));
        }
        self.text(14.0, (y0 + y1) / 2.0, "middle", y_label);
        for (slot, label) in x_labels.iter().enumerate() {
            let x = self.x_slot(slot, 0.5);
            self.line(x, y0, x, y0 + 4.0, r#"stroke="black" stroke-width="1""#);
            self.text(x, y0 + 18.0, "middle", label);
        }
    }

    fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_W}\" height=\"{SVG_H}\" viewBox=\"0 0 {SVG_W} {SVG_H}\">\n<rect width=\"{SVG_W}\" height=\"{SVG_H}\" fill=\"white\"/>\n{}</svg>\n",
            self.body
        )
    }
}

/// Box-and-whisker plot of per-unit values per threshold: median line,
/// box spanning the IQR, whiskers at the most extreme values within
/// 1.5 IQR of the box, outliers as open circles.
pub fn dsc_boxplot_svg<F: Scalar>(
    thresholds: &[F],
    per_threshold_values: &[Vec<F>],
    title: &str,
) -> String {
    let values_f64: Vec<Vec<f64>> = per_threshold_values
        .iter()
        .map(|vs| {
            let mut v: Vec<f64> = vs.iter().filter_map(|x| x.to_f64()).collect();
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v
        })
        .collect();
    let y_min = values_f64
        .iter()
        .flatten()
        .copied()
        .fold(f64::INFINITY, f64::min)
        .min(0.0);
    let y_max = values_f64
        .iter()
        .flatten()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
        .max(1e-9);
    let mut plot = Plot::new(y_min, y_max, thresholds.len());
    let labels: Vec<String> = thresholds
        .iter()
        .map(|t| fmt_sig(t.to_f64().unwrap_or(f64::NAN)))
        .collect();
    plot.axes(title, "DSC", &labels);

    for (slot, sorted) in values_f64.iter().enumerate() {
        if sorted.is_empty() {
            continue;
        }
        let q = |p: f64| {
            let h = p * (sorted.len() - 1) as f64;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(sorted.len() - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        };
        let (q1, med, q3) = (q(0.25), q(0.5), q(0.75));
        let iqr = q3 - q1;
        let lo_fence = q1 - 1.5 * iqr;
        let hi_fence = q3 + 1.5 * iqr;
        let whisk_lo = sorted
            .iter()
            .copied()
            .find(|&v| v >= lo_fence)
            .unwrap_or(q1);
        let whisk_hi = sorted
            .iter()
            .rev()
            .copied()
            .find(|&v| v <= hi_fence)
            .unwrap_or(q3);

        let xc = plot.x_slot(slot, 0.5);
        let half = (plot.x_slot(slot, 0.85) - plot.x_slot(slot, 0.15)) / 2.0;
        let box_style = r#"stroke="black" fill="none" stroke-width="1""#;
        let (yq1, ymed, yq3) = (plot.y(q1), plot.y(med), plot.y(q3));
        plot.rect(xc - half, yq3, 2.0 * half, yq1 - yq3, box_style);
        plot.line(
            xc - half,
            ymed,
            xc + half,
            ymed,
            r#"stroke="red" stroke-width="2""#,
        );
        for (a, b) in [(q1, whisk_lo), (q3, whisk_hi)] {
            plot.line(xc, plot.y(a), xc, plot.y(b), box_style);
            plot.line(
                xc - half / 2.0,
                plot.y(b),
                xc + half / 2.0,
                plot.y(b),
                box_style,
            );
        }
        for &v in sorted {
            if v < whisk_lo || v > whisk_hi {
                plot.circle(xc, plot.y(v), 2.5, box_style);
            }
        }
    }
    plot.finish()
}

/// Grouped bar chart of how often each threshold is optimal, per figure
/// of merit.
pub fn optimal_histogram_svg<F: Scalar>(histogram: &OptimalHistogram<F>) -> String {
    let max_count = histogram
        .volume_counts
        .iter()
        .chain(&histogram.dsc_counts)
        .copied()
        .max()
        .unwrap_or(1)
        .max(1);
    let mut plot = Plot::new(0.0, max_count as f64, histogram.thresholds.len());
    let labels: Vec<String> = histogram
        .thresholds
        .iter()
        .map(|t| fmt_sig(t.to_f64().unwrap_or(f64::NAN)))
        .collect();
    plot.axes("Optimal-threshold frequency", "scans", &labels);
    let y0 = plot.y(0.0);
    for (slot, (&v, &d)) in histogram
        .volume_counts
        .iter()
        .zip(&histogram.dsc_counts)
        .enumerate()
    {
        let x_lo = plot.x_slot(slot, 0.15);
        let x_mid = plot.x_slot(slot, 0.5);
        let x_hi = plot.x_slot(slot, 0.85);
        let yv = plot.y(v as f64);
        let yd = plot.y(d as f64);
        plot.rect(
            x_lo,
            yv,
            x_mid - x_lo,
            y0 - yv,
            r##"fill="#4477aa" stroke="black" stroke-width="0.5""##,
        );
        plot.rect(
            x_mid,
            yd,
            x_hi - x_mid,
            y0 - yd,
            r##"fill="#cc6677" stroke="black" stroke-width="0.5""##,
        );
    }
    // Legend.
    plot.rect(
        SVG_W - 220.0,
        MARGIN_T + 6.0,
        12.0,
        12.0,
        r##"fill="#4477aa""##,
    );
    plot.text(SVG_W - 202.0, MARGIN_T + 16.0, "start", "volume optimal");
    plot.rect(
        SVG_W - 220.0,
        MARGIN_T + 26.0,
        12.0,
        12.0,
        r##"fill="#cc6677""##,
    );
    plot.text(SVG_W - 202.0, MARGIN_T + 36.0, "start", "DSC optimal");
    plot.finish()
}

/// Bland-Altman scatter: pair means against relative differences, with
/// the bias line, limits of agreement, and the +/- band shaded.
pub fn bland_altman_svg(
    pairs: &[(String, f64, f64, Option<f64>)],
    mean_diff: f64,
    loa_low: f64,
    loa_high: f64,
    band_halfwidth: f64,
) -> String {
    let points: Vec<(f64, f64)> = pairs
        .iter()
        .filter_map(|(_, r, p, d)| d.map(|d| ((r + p) / 2.0, d)))
        .collect();
    let x_max = points.iter().map(|p| p.0).fold(1e-9, f64::max);
    let y_min = points
        .iter()
        .map(|p| p.1)
        .fold(loa_low.min(-band_halfwidth), f64::min);
    let y_max = points
        .iter()
        .map(|p| p.1)
        .fold(loa_high.max(band_halfwidth), f64::max);
    let mut plot = Plot::new(y_min, y_max, 1);
    plot.axes(
        "Relative volume difference vs pair mean",
        "% diff",
        &[String::new()],
    );
    let x_of = |v: f64| MARGIN_L + (SVG_W - MARGIN_L - MARGIN_R) * (v / x_max).clamp(0.0, 1.0);

    // +/- band.
    let band_top = plot.y(band_halfwidth);
    let band_bot = plot.y(-band_halfwidth);
    plot.rect(
        MARGIN_L,
        band_top,
        SVG_W - MARGIN_L - MARGIN_R,
        band_bot - band_top,
        r##"fill="#ffdddd" stroke="none""##,
    );
    for (v, style) in [
        (mean_diff, r##"stroke="#2255cc" stroke-width="1.5""##),
        (
            loa_low,
            r##"stroke="#2255cc" stroke-width="1" stroke-dasharray="6,4""##,
        ),
        (
            loa_high,
            r##"stroke="#2255cc" stroke-width="1" stroke-dasharray="6,4""##,
        ),
    ] {
        let y = plot.y(v);
        plot.line(MARGIN_L, y, SVG_W - MARGIN_R, y, style);
    }
    for &(x, y) in &points {
        plot.circle(
            x_of(x),
            plot.y(y),
            3.0,
            r##"fill="#333333" stroke="none""##,
        );
    }
    // X-axis extent label.
    plot.text(
        SVG_W - MARGIN_R,
        SVG_H - MARGIN_B + 18.0,
        "end",
        &format!("mean volume (mm3), max {}", fmt_sig(x_max)),
    );
    plot.finish()
}

pub fn write_svg(path: &Path, svg: &str) -> Result<(), ReportError> {
    write_file(path, svg)
}
