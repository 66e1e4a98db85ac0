//! End-to-end CLI behavior: flags, exit codes, artifact layout.

use std::path::Path;
use std::process::{Command, Output};

fn segsweep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_segsweep"))
        .args(args)
        .output()
        .expect("spawn segsweep")
}

fn run_ok(args: &[&str]) -> Output {
    let out = segsweep(args);
    assert!(
        out.status.success(),
        "command {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn small_cohort(dir: &Path, seed: &str, sections: &str) -> String {
    run_ok(&[
        "phantom",
        "--patients",
        "3",
        "--scans-min",
        "2",
        "--scans-max",
        "3",
        "--seed",
        seed,
        "--rows",
        "128",
        "--cols",
        "128",
        "--sections",
        sections,
        "--ref-radius-min",
        "8",
        "--ref-radius-max",
        "10",
        "--out",
        dir.to_str().unwrap(),
    ]);
    dir.join("manifest.json").to_str().unwrap().to_string()
}

#[test]
fn missing_out_is_a_usage_error() {
    let out = segsweep(&["phantom", "--patients", "2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = segsweep(&["sweep", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn stats_requires_exactly_one_source() {
    let out = segsweep(&["stats", "--out", "/tmp/x"]);
    assert_eq!(out.status.code(), Some(2));
    let out = segsweep(&[
        "stats",
        "--metrics",
        "a.csv",
        "--manifest",
        "m.json",
        "--out",
        "/tmp/x",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_manifest_is_a_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = segsweep(&[
        "sweep",
        "--manifest",
        "/nonexistent/manifest.json",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn sweep_report_has_one_row_per_grid_threshold() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = small_cohort(&tmp.path().join("data"), "11", "4");
    let results = tmp.path().join("results");
    run_ok(&[
        "sweep",
        "--manifest",
        &manifest,
        "--grid",
        "0.01,0.1,0.2,0.3,0.4,0.5",
        "--group",
        "per-patient",
        "--region",
        "whole",
        "--out",
        results.to_str().unwrap(),
    ]);
    let report = std::fs::read_to_string(results.join("sweep_report.csv")).unwrap();
    let rows: Vec<&str> = report.lines().collect();
    assert_eq!(rows.len(), 1 + 6, "header plus six thresholds");
    assert!(rows[0].starts_with("threshold,"));
    for name in [
        "per_scan_metrics.csv",
        "dsc_boxplot.svg",
        "optimal_histogram.svg",
    ] {
        assert!(results.join(name).is_file(), "{name} missing");
    }
}

#[test]
fn subset_region_without_subset_range_fails() {
    let tmp = tempfile::tempdir().unwrap();
    // Two-section scans carry no subset range.
    let manifest = small_cohort(&tmp.path().join("data"), "12", "2");
    let out = segsweep(&[
        "sweep",
        "--manifest",
        &manifest,
        "--region",
        "subset",
        "--out",
        tmp.path().join("results").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("subset"));
}

#[test]
fn subset_region_runs_when_range_present() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = small_cohort(&tmp.path().join("data"), "13", "4");
    run_ok(&[
        "sweep",
        "--manifest",
        &manifest,
        "--grid",
        "0.3,0.5",
        "--region",
        "subset",
        "--out",
        tmp.path().join("results").to_str().unwrap(),
    ]);
}

#[test]
fn validate_reports_violations_and_fails() {
    use segsweep_core::grid::Grid;
    use segsweep_core::model::{
        DatasetManifest, ManifestEntry, ProbabilityRaster, ReferenceMask, ScanRecord,
        SectionGeometry, SectionGrid,
    };
    use segsweep_core::raster;

    let tmp = tempfile::tempdir().unwrap();
    let sections: Vec<SectionGeometry<f64>> = (0..2)
        .map(|i| SectionGeometry {
            section_index: i,
            table_position_mm: 5.0 * i as f64,
            pixel_spacing_mm: 1.0,
            rows: 4,
            cols: 4,
        })
        .collect();
    let scan = ScanRecord {
        scan_id: "bad".into(),
        patient_id: "p".into(),
        sections,
        reviewed_indices: vec![0, 1],
        subset_range: None,
    };
    // One probability of 1.5: loads fine, fails validation.
    let mut grid = Grid::filled(4, 4, 0.5f64);
    grid.set(1, 2, 1.5);
    let prob = ProbabilityRaster {
        scan_id: "bad".into(),
        sections: vec![
            SectionGrid {
                index: 0,
                grid: grid.clone(),
            },
            SectionGrid {
                index: 1,
                grid: Grid::filled(4, 4, 0.5),
            },
        ],
    };
    let mask = ReferenceMask {
        scan_id: "bad".into(),
        sections: (0..2)
            .map(|index| SectionGrid {
                index,
                grid: Grid::filled(4, 4, false),
            })
            .collect(),
    };
    raster::write_probability_raster(&tmp.path().join("bad.prob.sgsw"), &prob).unwrap();
    raster::write_reference_mask(&tmp.path().join("bad.ref.sgsw"), &mask).unwrap();
    let manifest = DatasetManifest {
        scans: vec![ManifestEntry {
            scan,
            prob_path: "bad.prob.sgsw".into(),
            ref_path: "bad.ref.sgsw".into(),
        }],
    };
    let manifest_path = tmp.path().join("manifest.json");
    segsweep_core::model::write_manifest(&manifest, &manifest_path).unwrap();

    let out = segsweep(&["validate", "--manifest", manifest_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("probability 1.5"), "stderr: {stderr}");
    assert!(stderr.contains("(1, 2)"), "stderr: {stderr}");
}

#[test]
fn validate_passes_clean_cohort() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = small_cohort(&tmp.path().join("data"), "14", "3");
    let out = run_ok(&["validate", "--manifest", &manifest]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("OK"));
}

#[test]
fn stats_band_flag_lands_in_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = small_cohort(&tmp.path().join("data"), "15", "3");
    let results = tmp.path().join("results");
    run_ok(&[
        "sweep",
        "--manifest",
        &manifest,
        "--grid",
        "0.1,0.5",
        "--out",
        results.to_str().unwrap(),
    ]);
    let stats_dir = tmp.path().join("stats");
    run_ok(&[
        "stats",
        "--metrics",
        results.join("per_scan_metrics.csv").to_str().unwrap(),
        "--band",
        "7.5",
        "--threshold",
        "0.5",
        "--out",
        stats_dir.to_str().unwrap(),
    ]);
    let ba = std::fs::read_to_string(stats_dir.join("bland_altman.csv")).unwrap();
    let data_row = ba.lines().nth(1).unwrap();
    assert!(data_row.split(',').nth(5) == Some("7.5"), "row: {data_row}");
    for name in [
        "pvalue_matrix_volume.csv",
        "pvalue_matrix_dsc.csv",
        "bland_altman_pairs.csv",
        "bland_altman.svg",
    ] {
        assert!(stats_dir.join(name).is_file(), "{name} missing");
    }
}

#[test]
fn thread_cap_env_var_does_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = small_cohort(&tmp.path().join("data"), "18", "3");
    let default_out = tmp.path().join("default");
    run_ok(&["sweep", "--manifest", &manifest, "--out", default_out.to_str().unwrap()]);
    let capped_out = tmp.path().join("capped");
    let out = Command::new(env!("CARGO_BIN_EXE_segsweep"))
        .env("SEGSWEEP_THREADS", "2")
        .args(["sweep", "--manifest", &manifest, "--out", capped_out.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    for name in ["sweep_report.csv", "per_scan_metrics.csv"] {
        assert_eq!(
            std::fs::read(default_out.join(name)).unwrap(),
            std::fs::read(capped_out.join(name)).unwrap(),
            "{name} differs under SEGSWEEP_THREADS"
        );
    }
}

#[test]
fn pvalue_matrices_are_symmetric_in_emitted_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = small_cohort(&tmp.path().join("data"), "16", "3");
    let stats_dir = tmp.path().join("stats");
    run_ok(&[
        "stats",
        "--manifest",
        &manifest,
        "--grid",
        "0.1,0.3,0.5",
        "--out",
        stats_dir.to_str().unwrap(),
    ]);
    for name in ["pvalue_matrix_volume.csv", "pvalue_matrix_dsc.csv"] {
        let text = std::fs::read_to_string(stats_dir.join(name)).unwrap();
        let cells: Vec<Vec<&str>> = text.lines().map(|l| l.split(',').collect()).collect();
        let n = cells.len() - 1;
        for (i, j) in (1..=n).flat_map(|i| (1..=n).map(move |j| (i, j))) {
            assert_eq!(cells[i][j], cells[j][i], "{name} asymmetric at {i},{j}");
            if i == j {
                assert_eq!(cells[i][i], "n/a");
            }
        }
    }
}

#[test]
fn stats_identical_metrics_yield_na_cells() {
    // Hard 0/1 probabilities binarize identically at every threshold:
    // all paired differences are zero, so matrix cells are n/a.
    use segsweep_core::grid::Grid;
    use segsweep_core::model::{
        DatasetManifest, ManifestEntry, ProbabilityRaster, ReferenceMask, ScanRecord,
        SectionGeometry, SectionGrid,
    };
    use segsweep_core::raster;

    let tmp = tempfile::tempdir().unwrap();
    let mut entries = Vec::new();
    for (scan_id, size) in [("a", 3usize), ("b", 5)] {
        let sections: Vec<SectionGeometry<f64>> = (0..2)
            .map(|i| SectionGeometry {
                section_index: i,
                table_position_mm: 5.0 * i as f64,
                pixel_spacing_mm: 1.0,
                rows: 8,
                cols: 8,
            })
            .collect();
        let scan = ScanRecord {
            scan_id: scan_id.into(),
            patient_id: scan_id.into(),
            sections,
            reviewed_indices: vec![0, 1],
            subset_range: None,
        };
        let hard = Grid::from_fn(8, 8, |r, c| if r < size && c < size { 1.0 } else { 0.0 });
        let prob = ProbabilityRaster {
            scan_id: scan_id.into(),
            sections: (0..2)
                .map(|index| SectionGrid {
                    index,
                    grid: hard.clone(),
                })
                .collect(),
        };
        let mask = ReferenceMask {
            scan_id: scan_id.into(),
            sections: (0..2)
                .map(|index| SectionGrid {
                    index,
                    grid: Grid::from_fn(8, 8, |r, c| r < size && c < size),
                })
                .collect(),
        };
        raster::write_probability_raster(&tmp.path().join(format!("{scan_id}.prob.sgsw")), &prob)
            .unwrap();
        raster::write_reference_mask(&tmp.path().join(format!("{scan_id}.ref.sgsw")), &mask)
            .unwrap();
        entries.push(ManifestEntry {
            scan,
            prob_path: format!("{scan_id}.prob.sgsw"),
            ref_path: format!("{scan_id}.ref.sgsw"),
        });
    }
    let manifest_path = tmp.path().join("manifest.json");
    segsweep_core::model::write_manifest(&DatasetManifest { scans: entries }, &manifest_path)
        .unwrap();

    let stats_dir = tmp.path().join("stats");
    run_ok(&[
        "stats",
        "--manifest",
        manifest_path.to_str().unwrap(),
        "--grid",
        "0.25,0.75",
        "--threshold",
        "0.25",
        "--out",
        stats_dir.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(stats_dir.join("pvalue_matrix_volume.csv")).unwrap();
    let second_line = text.lines().nth(1).unwrap();
    assert_eq!(second_line.split(',').nth(2), Some("n/a"));
}
