//! Domain types, dataset manifest ingestion, and geometric bookkeeping.
//!
//! A dataset is described by a JSON manifest listing scans; each scan
//! references a probability raster (the network-output surrogate) and a
//! reference mask, both stored in the `SGSW` raster format (see
//! [`crate::raster`]). All metric computation is restricted to the
//! sections the reviewer actually checked (`reviewed_indices`).

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::Grid;
use crate::raster::{self, RasterDtype};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed manifest {path} (line {line}, column {column}): {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("manifest invariant violated for scan `{scan_id}`: {message}")]
    Invalid { scan_id: String, message: String },
    #[error("duplicate scan_id `{0}`")]
    DuplicateScanId(String),
    #[error("scan `{scan_id}`: referenced raster {path} does not exist")]
    MissingRaster { scan_id: String, path: PathBuf },
    #[error("scan `{scan_id}` section {section}: manifest geometry {expected} but raster header has {actual} in {path}")]
    GeometryMismatch {
        scan_id: String,
        section: u32,
        expected: String,
        actual: String,
        path: PathBuf,
    },
    #[error("scan `{scan_id}`: raster {path}: {message}")]
    RasterHeader {
        scan_id: String,
        path: PathBuf,
        message: String,
    },
    #[error("scan `{scan_id}` has a single reviewed section and no fallback thickness; cannot derive inter-section distance")]
    SingleSection { scan_id: String },
    #[error(transparent)]
    Raster(#[from] raster::RasterError),
}

/// Per-section acquisition geometry.
///
/// Pixels are assumed square, so one spacing value covers both in-plane
/// axes; anisotropic spacing is out of scope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionGeometry<F> {
    #[serde(rename = "index")]
    pub section_index: u32,
    pub table_position_mm: F,
    pub pixel_spacing_mm: F,
    pub rows: usize,
    pub cols: usize,
}

/// Inclusive section-index range delimiting an anatomic subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetRange {
    pub superior: u32,
    pub inferior: u32,
}

/// One CT scan: ordered sections plus the reviewed subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord<F> {
    pub scan_id: String,
    pub patient_id: String,
    pub sections: Vec<SectionGeometry<F>>,
    pub reviewed_indices: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset_range: Option<SubsetRange>,
}

/// One section of pixel data paired with its section index.
#[derive(Debug, Clone, PartialEq)]
pub struct SectionGrid<T> {
    pub index: u32,
    pub grid: Grid<T>,
}

/// Pixel-wise tumor probabilities for the reviewed sections of one scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityRaster<F> {
    pub scan_id: String,
    pub sections: Vec<SectionGrid<F>>,
}

/// Reviewer-adjusted boolean tumor masks for the reviewed sections.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceMask {
    pub scan_id: String,
    pub sections: Vec<SectionGrid<bool>>,
}

/// One manifest entry: scan record plus raster file paths.
///
/// Paths are kept verbatim as written in the manifest; relative paths
/// resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry<F> {
    #[serde(flatten)]
    pub scan: ScanRecord<F>,
    pub prob_path: String,
    pub ref_path: String,
}

/// The full dataset description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest<F> {
    pub scans: Vec<ManifestEntry<F>>,
}

impl<F: Scalar> ScanRecord<F> {
    pub fn section(&self, index: u32) -> Option<&SectionGeometry<F>> {
        self.sections.iter().find(|s| s.section_index == index)
    }

    /// Checks the structural invariants of this record.
    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |message: String| ModelError::Invalid {
            scan_id: self.scan_id.clone(),
            message,
        };
        for id in [&self.scan_id, &self.patient_id] {
            if id.is_empty() || id.contains([',', '"', '\n', '\r']) {
                return Err(fail(format!("identifier {id:?} is empty or contains a CSV-unsafe character")));
            }
        }
        if self.sections.is_empty() {
            return Err(fail("scan has no sections".into()));
        }
        let mut seen = BTreeSet::new();
        for s in &self.sections {
            if !seen.insert(s.section_index) {
                return Err(fail(format!("duplicate section index {}", s.section_index)));
            }
            if !(s.pixel_spacing_mm > F::zero()) {
                return Err(fail(format!(
                    "section {}: pixel_spacing_mm must be > 0, got {}",
                    s.section_index, s.pixel_spacing_mm
                )));
            }
            if s.rows == 0 || s.cols == 0 {
                return Err(fail(format!("section {}: rows and cols must be > 0", s.section_index)));
            }
        }
        for w in self.sections.windows(2) {
            if !(w[1].table_position_mm > w[0].table_position_mm) {
                return Err(fail(format!(
                    "table_position_mm must be strictly increasing in section order (sections {} -> {})",
                    w[0].section_index, w[1].section_index
                )));
            }
        }
        if self.reviewed_indices.is_empty() {
            return Err(fail("reviewed_indices is empty".into()));
        }
        for w in self.reviewed_indices.windows(2) {
            if w[1] <= w[0] {
                return Err(fail("reviewed_indices must be strictly increasing".into()));
            }
        }
        for idx in &self.reviewed_indices {
            if self.section(*idx).is_none() {
                return Err(fail(format!("reviewed index {idx} is not a section of this scan")));
            }
        }
        if let Some(range) = self.subset_range {
            if range.superior >= range.inferior {
                return Err(fail(format!(
                    "subset_range superior ({}) must be < inferior ({})",
                    range.superior, range.inferior
                )));
            }
            for idx in [range.superior, range.inferior] {
                if self.section(idx).is_none() {
                    return Err(fail(format!("subset_range index {idx} is not a section of this scan")));
                }
            }
        }
        Ok(())
    }

    /// Through-plane distance owned by each reviewed section, in mm.
    ///
    /// A reviewed section owns the gap to the next reviewed section; the
    /// last one inherits the preceding gap, so every contoured section
    /// contributes volume. A scan with a single reviewed section has no
    /// derivable gap and fails unless `fallback_mm` supplies one.
    pub fn inter_section_distances_with_fallback(
        &self,
        fallback_mm: Option<F>,
    ) -> Result<Vec<(u32, F)>, ModelError> {
        self.distances_over(&self.reviewed_indices, fallback_mm)
    }

    pub fn inter_section_distances(&self) -> Result<Vec<(u32, F)>, ModelError> {
        self.inter_section_distances_with_fallback(None)
    }

    /// Distances over an explicit ordered subset of reviewed sections.
    pub(crate) fn distances_over(
        &self,
        indices: &[u32],
        fallback_mm: Option<F>,
    ) -> Result<Vec<(u32, F)>, ModelError> {
        if indices.len() < 2 {
            return match (indices.len(), fallback_mm) {
                (1, Some(d)) => Ok(vec![(indices[0], d)]),
                _ => Err(ModelError::SingleSection {
                    scan_id: self.scan_id.clone(),
                }),
            };
        }
        let pos: Vec<F> = indices
            .iter()
            .map(|idx| {
                self.section(*idx)
                    .map(|s| s.table_position_mm)
                    .ok_or_else(|| ModelError::Invalid {
                        scan_id: self.scan_id.clone(),
                        message: format!("section index {idx} not found"),
                    })
            })
            .collect::<Result<_, _>>()?;
        let mut out = Vec::with_capacity(indices.len());
        for i in 0..indices.len() {
            let gap = if i + 1 < indices.len() {
                pos[i + 1] - pos[i]
            } else {
                pos[i] - pos[i - 1]
            };
            out.push((indices[i], gap));
        }
        Ok(out)
    }
}

/// A single invariant violation found by [`validate_scan`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonMonotoneTablePosition {
        section: u32,
        previous_mm: f64,
        current_mm: f64,
    },
    DimensionMismatch {
        raster: &'static str,
        section: u32,
        expected_rows: usize,
        expected_cols: usize,
        actual_rows: usize,
        actual_cols: usize,
    },
    ProbabilityOutOfRange {
        section: u32,
        row: usize,
        col: usize,
        value: f64,
    },
    MissingSection {
        raster: &'static str,
        section: u32,
    },
    UnexpectedSection {
        raster: &'static str,
        section: u32,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonMonotoneTablePosition {
                section,
                previous_mm,
                current_mm,
            } => write!(
                f,
                "section {section}: table position {current_mm} mm does not increase past {previous_mm} mm"
            ),
            Violation::DimensionMismatch {
                raster,
                section,
                expected_rows,
                expected_cols,
                actual_rows,
                actual_cols,
            } => write!(
                f,
                "{raster} section {section}: grid is {actual_rows}x{actual_cols} but geometry says {expected_rows}x{expected_cols}"
            ),
            Violation::ProbabilityOutOfRange {
                section,
                row,
                col,
                value,
            } => write!(
                f,
                "section {section}: probability {value} at ({row}, {col}) outside [0, 1]"
            ),
            Violation::MissingSection { raster, section } => {
                write!(f, "{raster}: reviewed section {section} missing")
            }
            Violation::UnexpectedSection { raster, section } => {
                write!(f, "{raster}: section {section} is not a reviewed section")
            }
        }
    }
}

/// Validation outcome for one scan; empty iff everything checks out.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub scan_id: String,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Reports every invariant violation across a scan and its rasters.
///
/// Pure: never fails, never mutates; violations are report entries.
pub fn validate_scan<F: Scalar>(
    scan: &ScanRecord<F>,
    prob: &ProbabilityRaster<F>,
    reference: &ReferenceMask,
) -> ValidationReport {
    let mut violations = Vec::new();

    for w in scan.sections.windows(2) {
        if !(w[1].table_position_mm > w[0].table_position_mm) {
            violations.push(Violation::NonMonotoneTablePosition {
                section: w[1].section_index,
                previous_mm: w[0].table_position_mm.to_f64().unwrap_or(f64::NAN),
                current_mm: w[1].table_position_mm.to_f64().unwrap_or(f64::NAN),
            });
        }
    }

    let reviewed: BTreeSet<u32> = scan.reviewed_indices.iter().copied().collect();
    for (name, indices) in [
        ("probability raster", prob.sections.iter().map(|s| s.index).collect::<Vec<_>>()),
        ("reference mask", reference.sections.iter().map(|s| s.index).collect()),
    ] {
        let present: BTreeSet<u32> = indices.iter().copied().collect();
        for idx in reviewed.difference(&present) {
            violations.push(Violation::MissingSection {
                raster: name,
                section: *idx,
            });
        }
        for idx in present.difference(&reviewed) {
            violations.push(Violation::UnexpectedSection {
                raster: name,
                section: *idx,
            });
        }
    }

    for section in &prob.sections {
        let Some(geom) = scan.section(section.index) else {
            continue;
        };
        if section.grid.rows() != geom.rows || section.grid.cols() != geom.cols {
            violations.push(Violation::DimensionMismatch {
                raster: "probability raster",
                section: section.index,
                expected_rows: geom.rows,
                expected_cols: geom.cols,
                actual_rows: section.grid.rows(),
                actual_cols: section.grid.cols(),
            });
        } else {
            let cols = section.grid.cols();
            for (i, &p) in section.grid.as_slice().iter().enumerate() {
                if !(p >= F::zero() && p <= F::one()) {
                    violations.push(Violation::ProbabilityOutOfRange {
                        section: section.index,
                        row: i / cols,
                        col: i % cols,
                        value: p.to_f64().unwrap_or(f64::NAN),
                    });
                }
            }
        }
    }

    for section in &reference.sections {
        let Some(geom) = scan.section(section.index) else {
            continue;
        };
        if section.grid.rows() != geom.rows || section.grid.cols() != geom.cols {
            violations.push(Violation::DimensionMismatch {
                raster: "reference mask",
                section: section.index,
                expected_rows: geom.rows,
                expected_cols: geom.cols,
                actual_rows: section.grid.rows(),
                actual_cols: section.grid.cols(),
            });
        }
    }

    ValidationReport {
        scan_id: scan.scan_id.clone(),
        violations,
    }
}

impl<F: Scalar> DatasetManifest<F> {
    /// Structural validation: per-scan invariants and scan-id uniqueness.
    pub fn validate(&self) -> Result<(), ModelError> {
        let mut ids = BTreeSet::new();
        for entry in &self.scans {
            entry.scan.validate()?;
            if !ids.insert(entry.scan.scan_id.clone()) {
                return Err(ModelError::DuplicateScanId(entry.scan.scan_id.clone()));
            }
        }
        Ok(())
    }

    /// Resolves an entry's raster path against the manifest's directory.
    pub fn resolve_path(base_dir: &Path, path: &str) -> PathBuf {
        let p = Path::new(path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base_dir.join(p)
        }
    }
}

/// Parses and structurally validates a manifest from JSON text.
///
/// No filesystem access; referenced rasters are checked by
/// [`load_manifest`].
pub fn parse_manifest<F>(json: &str) -> Result<DatasetManifest<F>, ModelError>
where
    F: Scalar + for<'de> Deserialize<'de>,
{
    let manifest: DatasetManifest<F> =
        serde_json::from_str(json).map_err(|e| ModelError::Parse {
            path: PathBuf::from("<string>"),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
    manifest.validate()?;
    Ok(manifest)
}

/// Loads a manifest from disk and cross-checks every referenced raster.
///
/// Raster headers must exist, carry the expected dtype and scan id, and
/// list exactly the reviewed sections with dimensions matching the
/// manifest geometry. Pixel data is not read here.
pub fn load_manifest<F>(path: &Path) -> Result<DatasetManifest<F>, ModelError>
where
    F: Scalar + for<'de> Deserialize<'de>,
{
    let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let manifest: DatasetManifest<F> =
        serde_json::from_str(&text).map_err(|e| ModelError::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
    manifest.validate()?;

    let base_dir = path.parent().unwrap_or_else(|| Path::new("."));
    for entry in &manifest.scans {
        for (raster_path, dtype) in [
            (&entry.prob_path, RasterDtype::F32),
            (&entry.ref_path, RasterDtype::U8),
        ] {
            let resolved = DatasetManifest::<F>::resolve_path(base_dir, raster_path);
            if !resolved.is_file() {
                return Err(ModelError::MissingRaster {
                    scan_id: entry.scan.scan_id.clone(),
                    path: resolved,
                });
            }
            let header = raster::read_header(&resolved)?;
            if header.scan_id != entry.scan.scan_id {
                return Err(ModelError::RasterHeader {
                    scan_id: entry.scan.scan_id.clone(),
                    path: resolved,
                    message: format!("header scan_id `{}` does not match", header.scan_id),
                });
            }
            if header.dtype != dtype {
                return Err(ModelError::RasterHeader {
                    scan_id: entry.scan.scan_id.clone(),
                    path: resolved,
                    message: format!("expected dtype {dtype}, found {}", header.dtype),
                });
            }
            let header_indices: Vec<u32> = header.sections.iter().map(|s| s.index).collect();
            if header_indices != entry.scan.reviewed_indices {
                return Err(ModelError::RasterHeader {
                    scan_id: entry.scan.scan_id.clone(),
                    path: resolved,
                    message: format!(
                        "header sections {header_indices:?} do not match reviewed indices {:?}",
                        entry.scan.reviewed_indices
                    ),
                });
            }
            for hs in &header.sections {
                let geom = entry.scan.section(hs.index).expect("validated above");
                if hs.rows != geom.rows || hs.cols != geom.cols {
                    return Err(ModelError::GeometryMismatch {
                        scan_id: entry.scan.scan_id.clone(),
                        section: hs.index,
                        expected: format!("{}x{}", geom.rows, geom.cols),
                        actual: format!("{}x{}", hs.rows, hs.cols),
                        path: resolved,
                    });
                }
            }
        }
    }
    Ok(manifest)
}

/// Serializes a manifest as pretty-printed JSON.
pub fn write_manifest<F>(manifest: &DatasetManifest<F>, path: &Path) -> Result<(), ModelError>
where
    F: Scalar + Serialize,
{
    let json = serde_json::to_string_pretty(manifest).expect("manifest serialization");
    std::fs::write(path, json.as_bytes()).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::cast;

    pub(crate) fn scan_with_positions(positions: &[f64]) -> ScanRecord<f64> {
        let sections = positions
            .iter()
            .enumerate()
            .map(|(i, &p)| SectionGeometry {
                section_index: i as u32,
                table_position_mm: p,
                pixel_spacing_mm: 1.0,
                rows: 4,
                cols: 4,
            })
            .collect::<Vec<_>>();
        let reviewed = sections.iter().map(|s| s.section_index).collect();
        ScanRecord {
            scan_id: "s1".into(),
            patient_id: "p1".into(),
            sections,
            reviewed_indices: reviewed,
            subset_range: None,
        }
    }

    #[test]
    fn distances_uniform_spacing() {
        let scan = scan_with_positions(&[0.0, 5.0, 10.0]);
        let d = scan.inter_section_distances().unwrap();
        assert_eq!(d, vec![(0, 5.0), (1, 5.0), (2, 5.0)]);
    }

    #[test]
    fn distances_last_section_inherits_previous_gap() {
        // Hand computation per the last-section rule: gaps 5 and 7,
        // terminal section inherits 7.
        let scan = scan_with_positions(&[0.0, 5.0, 12.0]);
        let d = scan.inter_section_distances().unwrap();
        assert_eq!(d, vec![(0, 5.0), (1, 7.0), (2, 7.0)]);
    }

    #[test]
    fn distances_single_section_errors_without_fallback() {
        let scan = scan_with_positions(&[0.0]);
        assert!(matches!(
            scan.inter_section_distances(),
            Err(ModelError::SingleSection { .. })
        ));
        let d = scan
            .inter_section_distances_with_fallback(Some(3.0))
            .unwrap();
        assert_eq!(d, vec![(0, 3.0)]);
    }

    #[test]
    fn distances_sum_property() {
        // One distance per reviewed section, all positive, summing to
        // (last - first) + last gap.
        let positions = [0.0, 1.25, 4.0, 9.5, 10.25];
        let scan = scan_with_positions(&positions);
        let d = scan.inter_section_distances().unwrap();
        assert_eq!(d.len(), positions.len());
        assert!(d.iter().all(|&(_, g)| g > 0.0));
        let total: f64 = d.iter().map(|&(_, g)| g).sum();
        let expected = (10.25 - 0.0) + (10.25 - 9.5);
        assert!((total - expected).abs() < 1e-12);
    }

    #[test]
    fn validate_rejects_nonmonotone_positions() {
        let mut scan = scan_with_positions(&[0.0, 5.0, 4.0]);
        assert!(scan.validate().is_err());
        scan.sections[2].table_position_mm = 6.0;
        assert!(scan.validate().is_ok());
    }

    #[test]
    fn validate_rejects_bad_subset_range() {
        let mut scan = scan_with_positions(&[0.0, 5.0, 10.0]);
        scan.subset_range = Some(SubsetRange {
            superior: 2,
            inferior: 1,
        });
        assert!(scan.validate().is_err());
    }

    fn raster_for(scan: &ScanRecord<f64>, value: f64) -> ProbabilityRaster<f64> {
        ProbabilityRaster {
            scan_id: scan.scan_id.clone(),
            sections: scan
                .reviewed_indices
                .iter()
                .map(|&idx| {
                    let g = scan.section(idx).unwrap();
                    SectionGrid {
                        index: idx,
                        grid: Grid::filled(g.rows, g.cols, cast(value)),
                    }
                })
                .collect(),
        }
    }

    fn mask_for(scan: &ScanRecord<f64>) -> ReferenceMask {
        ReferenceMask {
            scan_id: scan.scan_id.clone(),
            sections: scan
                .reviewed_indices
                .iter()
                .map(|&idx| {
                    let g = scan.section(idx).unwrap();
                    SectionGrid {
                        index: idx,
                        grid: Grid::filled(g.rows, g.cols, false),
                    }
                })
                .collect(),
        }
    }

    #[test]
    fn validate_scan_clean_inputs_empty_report() {
        let scan = scan_with_positions(&[0.0, 5.0]);
        let report = validate_scan(&scan, &raster_for(&scan, 0.5), &mask_for(&scan));
        assert!(report.is_valid(), "{:?}", report.violations);
    }

    #[test]
    fn validate_scan_flags_out_of_range_probability() {
        let scan = scan_with_positions(&[0.0, 5.0]);
        let mut prob = raster_for(&scan, 0.5);
        prob.sections[1].grid.set(2, 3, 1.2);
        let report = validate_scan(&scan, &prob, &mask_for(&scan));
        assert_eq!(report.violations.len(), 1);
        assert_eq!(
            report.violations[0],
            Violation::ProbabilityOutOfRange {
                section: 1,
                row: 2,
                col: 3,
                value: 1.2
            }
        );
    }

    #[test]
    fn validate_scan_flags_dimension_mismatch() {
        let scan = scan_with_positions(&[0.0, 5.0]);
        let prob = raster_for(&scan, 0.5);
        let mut mask = mask_for(&scan);
        mask.sections[0].grid = Grid::filled(2, 2, false);
        let report = validate_scan(&scan, &prob, &mask);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::DimensionMismatch { raster: "reference mask", section: 0, .. })));
    }

    #[test]
    fn validate_scan_is_pure() {
        let scan = scan_with_positions(&[0.0, 5.0]);
        let prob = raster_for(&scan, 0.5);
        let mask = mask_for(&scan);
        let a = validate_scan(&scan, &prob, &mask);
        let b = validate_scan(&scan, &prob, &mask);
        assert_eq!(a, b);
    }

    #[test]
    fn parse_manifest_minimal() {
        let json = r#"{
            "scans": [{
                "scan_id": "s1",
                "patient_id": "p1",
                "sections": [
                    {"index": 0, "table_position_mm": 0.0, "pixel_spacing_mm": 0.76, "rows": 4, "cols": 4},
                    {"index": 1, "table_position_mm": 5.0, "pixel_spacing_mm": 0.76, "rows": 4, "cols": 4},
                    {"index": 2, "table_position_mm": 10.0, "pixel_spacing_mm": 0.76, "rows": 4, "cols": 4}
                ],
                "reviewed_indices": [0, 1, 2],
                "prob_path": "s1.prob.sgsw",
                "ref_path": "s1.ref.sgsw"
            }]
        }"#;
        let m: DatasetManifest<f64> = parse_manifest(json).unwrap();
        assert_eq!(m.scans.len(), 1);
        assert_eq!(m.scans[0].scan.reviewed_indices, vec![0, 1, 2]);
        assert!(m.scans[0].scan.subset_range.is_none());
    }

    #[test]
    fn parse_manifest_reports_line_and_column() {
        let err = parse_manifest::<f64>("{\n  \"scans\": [,]\n}").unwrap_err();
        match err {
            ModelError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn manifest_json_round_trip_is_identity() {
        let mut scan = scan_with_positions(&[0.0, 5.0, 12.5]);
        scan.subset_range = Some(SubsetRange {
            superior: 0,
            inferior: 2,
        });
        let manifest = DatasetManifest {
            scans: vec![ManifestEntry {
                scan,
                prob_path: "a.prob.sgsw".into(),
                ref_path: "a.ref.sgsw".into(),
            }],
        };
        let json = serde_json::to_string_pretty(&manifest).unwrap();
        let back: DatasetManifest<f64> = parse_manifest(&json).unwrap();
        assert_eq!(back, manifest);
    }
}
