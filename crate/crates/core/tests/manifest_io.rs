//! Manifest loading against real raster files on disk.

use std::collections::BTreeSet;

use segsweep_core::model::{self, DatasetManifest, ModelError};
use segsweep_core::phantom::{generate_cohort, CohortSpec};
use segsweep_core::raster;

fn tiny_cohort(seed: u64) -> CohortSpec {
    CohortSpec {
        n_patients: 3,
        scans_min: 1,
        scans_max: 2,
        rows: 96,
        cols: 96,
        n_sections: 3,
        ref_radius_range_px: (5.0, 6.0),
        seed,
        ..CohortSpec::default()
    }
}

#[test]
fn write_then_load_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let manifest_path = generate_cohort(&tiny_cohort(3), dir.path()).unwrap();
    let loaded: DatasetManifest<f64> = model::load_manifest(&manifest_path).unwrap();
    let text = std::fs::read_to_string(&manifest_path).unwrap();
    let parsed: DatasetManifest<f64> = model::parse_manifest(&text).unwrap();
    assert_eq!(loaded, parsed);

    // Loading rasters matches the geometry the manifest promises.
    for entry in &loaded.scans {
        let prob_path = DatasetManifest::<f64>::resolve_path(dir.path(), &entry.prob_path);
        let prob = raster::load_probability_raster::<f64>(&prob_path).unwrap();
        assert_eq!(prob.scan_id, entry.scan.scan_id);
        let indices: Vec<u32> = prob.sections.iter().map(|s| s.index).collect();
        assert_eq!(indices, entry.scan.reviewed_indices);
    }
}

#[test]
fn missing_raster_is_reported_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let manifest_path = generate_cohort(&tiny_cohort(4), dir.path()).unwrap();
    // Remove one raster file.
    let loaded: DatasetManifest<f64> = model::load_manifest(&manifest_path).unwrap();
    let victim = DatasetManifest::<f64>::resolve_path(dir.path(), &loaded.scans[0].prob_path);
    std::fs::remove_file(&victim).unwrap();
    match model::load_manifest::<f64>(&manifest_path) {
        Err(ModelError::MissingRaster { path, .. }) => assert_eq!(path, victim),
        other => panic!("expected MissingRaster, got {other:?}"),
    }
}

#[test]
fn geometry_mismatch_names_scan_and_section() {
    let dir = tempfile::tempdir().unwrap();
    let manifest_path = generate_cohort(&tiny_cohort(5), dir.path()).unwrap();
    // Corrupt the manifest geometry: claim 32 columns for one section.
    let text = std::fs::read_to_string(&manifest_path).unwrap();
    let mut manifest: DatasetManifest<f64> = model::parse_manifest(&text).unwrap();
    manifest.scans[1].scan.sections[0].cols = 32;
    model::write_manifest(&manifest, &manifest_path).unwrap();
    match model::load_manifest::<f64>(&manifest_path) {
        Err(ModelError::GeometryMismatch {
            scan_id, section, ..
        }) => {
            assert_eq!(scan_id, manifest.scans[1].scan.scan_id);
            assert_eq!(section, 0);
        }
        other => panic!("expected GeometryMismatch, got {other:?}"),
    }
}

#[test]
fn cohort_of_88_scans_under_21_patients() {
    // The full-scale cohort shape at miniature raster size.
    let dir = tempfile::tempdir().unwrap();
    let spec = CohortSpec {
        n_patients: 21,
        scans_min: 3,
        scans_max: 6,
        scans_total: Some(88),
        rows: 80,
        cols: 80,
        n_sections: 2,
        ref_radius_range_px: (4.0, 5.0),
        seed: 9,
        ..CohortSpec::default()
    };
    let manifest_path = generate_cohort(&spec, dir.path()).unwrap();
    let loaded: DatasetManifest<f64> = model::load_manifest(&manifest_path).unwrap();
    assert_eq!(loaded.scans.len(), 88);
    let patients: BTreeSet<&str> = loaded
        .scans
        .iter()
        .map(|e| e.scan.patient_id.as_str())
        .collect();
    assert_eq!(patients.len(), 21);
}
