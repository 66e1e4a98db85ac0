//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with the measured values (visible with `--nocapture`).
//!
//! Tolerances are pinned here, not calibrated elsewhere:
//! - rasterized volume vs closed form: 2% relative at radius >= 15 px
//! - rasterized scan DSC vs closed form: 0.02 absolute
//! - exact section DSC vs set-counting oracle: equality
//! - Wilcoxon exact vs normal approximation at n = 25: |dp| <= 0.02
//! - KS statistic vs brute force: 1e-12
//! - Bland-Altman limits on hand data: 1e-9
//! - full-scale sweep wall time: < 300 s; volume oracle set: < 10 s

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use segsweep_core::grid::Grid;
use segsweep_core::metrics::{binarize, dsc, scan_dsc, tumor_volume, Convention};
use segsweep_core::model::{self, DatasetManifest};
use segsweep_core::phantom::{
    analytic_dsc, analytic_volume, generate, generate_cohort, CohortSpec, Effusion, PhantomSpec,
};
use segsweep_core::raster;
use segsweep_core::stats::{
    bland_altman, ks_against_standard_normal, ks_normality, wilcoxon_signed_rank,
    wilcoxon_signed_rank_with, PairedSample, WilcoxonMethod,
};
use segsweep_core::stats::normal::normal_cdf;
use segsweep_core::sweep::{self, Grouping, Region};
use segsweep_core::Thresholds;

/// Random plain-cone spec whose thresholded radius stays >= 15 px.
fn random_spec(rng: &mut ChaCha8Rng, concentric: bool) -> (PhantomSpec<f64>, f64) {
    let threshold = rng.gen_range(0.1..0.7);
    let r_t_target: f64 = rng.gen_range(15.0..40.0);
    let cone_radius = r_t_target / (1.0 - threshold);
    let ref_radius = rng.gen_range(15.0..35.0);
    let margin = cone_radius.max(ref_radius) + 4.0;
    let rows = (2.0f64 * margin + cone_radius + ref_radius + 24.0).ceil() as usize;
    let center = (rows as f64 - 1.0) / 2.0;
    let jitter = (rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
    let offset = if concentric {
        (0.0, 0.0)
    } else {
        let d = rng.gen_range(0.0..0.9) * (r_t_target + ref_radius).min(center - margin.max(0.0));
        let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        (d * a.sin(), d * a.cos())
    };
    let spec = PhantomSpec {
        rows,
        cols: rows,
        n_sections: 2,
        pixel_spacing_mm: rng.gen_range(0.5..1.5),
        section_distance_mm: rng.gen_range(2.0..6.0),
        cone_center: (center + jitter.0 + offset.0, center + jitter.1 + offset.1),
        cone_radius_px: cone_radius,
        ref_center: (center + jitter.0, center + jitter.1),
        ref_radius_px: ref_radius,
        effusion: None,
        gap: None,
        seed: rng.gen(),
    };
    spec.validate().expect("random spec fits");
    (spec, threshold)
}

#[test]
fn acceptance_eq1_volume_oracle() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for i in 0..50 {
        let (spec, threshold) = random_spec(&mut rng, i % 2 == 0);
        let (scan, prob, _) = generate(&spec).unwrap();
        let mask = binarize(&prob, threshold).unwrap();
        let measured = tumor_volume(&mask, &scan).unwrap().volume_mm3;
        let expected = analytic_volume(&spec, threshold);
        let rel = (measured - expected).abs() / expected;
        assert!(
            rel <= 0.02,
            "spec {i}: rasterized {measured} vs analytic {expected} (rel {rel})"
        );
        worst = worst.max(rel);
    }
    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs_f64() < 10.0,
        "volume oracle took {elapsed:?}"
    );
    println!(
        "PASS eq1-volume-oracle: 50 specs, worst relative error {worst:.5} (<= 0.02), {:.2}s (< 10s)",
        elapsed.as_secs_f64()
    );
}

#[test]
fn acceptance_eq2_dsc_oracle() {
    // Rasterized scan-mean DSC against the closed form, concentric and
    // offset cases.
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for i in 0..50 {
        let (spec, threshold) = random_spec(&mut rng, i % 2 == 0);
        let (_, prob, reference) = generate(&spec).unwrap();
        let mask = binarize(&prob, threshold).unwrap();
        let measured = scan_dsc::<f64>(&mask, &reference).unwrap().mean;
        let expected = analytic_dsc(&spec, threshold);
        let err = (measured - expected).abs();
        assert!(
            err <= 0.02,
            "spec {i}: rasterized {measured} vs analytic {expected}"
        );
        worst = worst.max(err);
    }

    // Exact agreement with a brute-force pixel-set oracle.
    let mut oracle_rng = ChaCha8Rng::seed_from_u64(202);
    for _ in 0..1000 {
        let density_a = oracle_rng.gen_range(0.0..0.6);
        let density_b = oracle_rng.gen_range(0.0..0.6);
        let a = Grid::from_fn(16, 16, |_, _| oracle_rng.gen_bool(density_a));
        let b = Grid::from_fn(16, 16, |_, _| oracle_rng.gen_bool(density_b));
        let mut inter = 0usize;
        let mut na = 0usize;
        let mut nb = 0usize;
        for r in 0..16 {
            for c in 0..16 {
                let (x, y) = (*a.get(r, c), *b.get(r, c));
                inter += usize::from(x && y);
                na += usize::from(x);
                nb += usize::from(y);
            }
        }
        let expected = if na + nb == 0 {
            None
        } else {
            Some(2.0 * inter as f64 / (na + nb) as f64)
        };
        assert_eq!(dsc::<f64>(&a, &b).unwrap(), expected);
    }
    println!(
        "PASS eq2-dsc-oracle: 50 specs worst |dDSC| {worst:.5} (<= 0.02); 1000 random pairs exact"
    );
}

#[test]
fn acceptance_threshold_monotonicity() {
    let grid = Thresholds::default_grid();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut checked = 0usize;
    for i in 0..12 {
        let (mut spec, _) = random_spec(&mut rng, i % 2 == 0);
        if i % 3 == 0 {
            // Exercise the error modes too.
            spec.effusion = Some(Effusion {
                center: (spec.cone_radius_px * 0.6 + 4.0, spec.cone_radius_px * 0.6 + 4.0),
                radius_px: 3.0,
                level: 0.3,
            });
        }
        spec.validate().unwrap();
        let (scan, prob, reference) = generate(&spec).unwrap();
        let metrics = sweep::evaluate_scan(
            &scan,
            &prob,
            &reference,
            &grid,
            Region::Whole,
            Convention::RefDenominator,
        )
        .unwrap();
        for w in metrics.per_threshold.windows(2) {
            assert!(
                w[1].volume_pred_mm3 <= w[0].volume_pred_mm3,
                "volume increased from t={} to t={}",
                w[0].threshold,
                w[1].threshold
            );
            checked += 1;
        }
    }
    println!("PASS threshold-monotonicity: {checked} adjacent grid pairs, zero violations");
}

#[test]
fn acceptance_wilcoxon_exactness() {
    // All-positive n = 5: the exact two-sided p is 2/2^5.
    let labels: Vec<String> = (0..5).map(|i| format!("s{i}")).collect();
    let a = vec![2.0, 3.0, 5.0, 9.0, 17.0];
    let b = vec![1.0, 1.0, 1.0, 1.0, 1.0];
    let sample = PairedSample::new(labels, a, b).unwrap();
    let result = wilcoxon_signed_rank(&sample).unwrap();
    assert!(result.used_exact);
    assert_eq!(result.p_value_two_sided, 0.0625);

    // Exact vs normal approximation at n = 25 over 100 random samples.
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut max_gap = 0.0f64;
    for _ in 0..100 {
        let labels: Vec<String> = (0..25).map(|i| format!("u{i}")).collect();
        let a: Vec<f64> = (0..25).map(|_| rng.gen::<f64>()).collect();
        let b: Vec<f64> = (0..25).map(|_| rng.gen::<f64>()).collect();
        let sample = PairedSample::new(labels, a, b).unwrap();
        let exact = wilcoxon_signed_rank_with(&sample, WilcoxonMethod::Exact).unwrap();
        let approx = wilcoxon_signed_rank_with(&sample, WilcoxonMethod::NormalApprox).unwrap();
        max_gap = max_gap.max((exact.p_value_two_sided - approx.p_value_two_sided).abs());
    }
    assert!(max_gap <= 0.02, "max |exact - approx| = {max_gap}");
    println!(
        "PASS wilcoxon-exactness: n=5 all-positive p = 0.0625 exactly; n=25 max |dp| {max_gap:.5} (<= 0.02)"
    );
}

#[test]
fn acceptance_ks_oracle() {
    // D equals the brute-force sorted-sample formula.
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(4..80);
        let sample: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 6.0 - 3.0).collect();
        let result = ks_against_standard_normal(&sample).unwrap();
        let mut sorted = sample.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let nf = n as f64;
        let mut d = 0.0f64;
        for (i, &x) in sorted.iter().enumerate() {
            let phi = normal_cdf::<f64>(x);
            d = d.max((i + 1) as f64 / nf - phi).max(phi - i as f64 / nf);
        }
        let gap = (result.statistic - d).abs();
        assert!(gap <= 1e-12, "D mismatch: {} vs {d}", result.statistic);
        worst = worst.max(gap);
    }

    // Equally spaced normal quantiles: not rejected at 0.05.
    let n = 50;
    let quantiles: Vec<f64> = (1..=n)
        .map(|i| {
            let p = (i as f64 - 0.5) / n as f64;
            let (mut lo, mut hi) = (-8.0f64, 8.0f64);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if normal_cdf::<f64>(mid) < p {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        })
        .collect();
    let smooth = ks_normality(&quantiles).unwrap();
    assert!(!smooth.reject_at_0_05, "p = {}", smooth.p_value);
    assert!(smooth.statistic < 1.36 / (n as f64).sqrt());

    // Heavily skewed sample: rejected.
    let mut skewed = vec![0.0f64; 29];
    skewed.push(100.0);
    let reject = ks_normality(&skewed).unwrap();
    assert!(reject.reject_at_0_05, "p = {}", reject.p_value);
    println!(
        "PASS ks-oracle: 100 samples max |dD| {worst:.2e} (<= 1e-12); quantiles kept (p={:.3}), skewed rejected (p={:.2e})",
        smooth.p_value, reject.p_value
    );
}

#[test]
fn acceptance_bland_altman() {
    // Differences 10, 20, 30 percent: mean 20, LOA [0.4, 39.6].
    let v_ref: Vec<f64> = vec![100.0, 100.0, 100.0];
    let v_pred = vec![90.0, 80.0, 70.0];
    let result = bland_altman(&v_ref, &v_pred, Convention::RefDenominator, 5.0).unwrap();
    assert!((result.mean_diff - 20.0).abs() < 1e-9);
    assert!((result.loa_low - 0.4).abs() < 1e-9);
    assert!((result.loa_high - 39.6).abs() < 1e-9);

    // Hand-checked band counts: diffs {3, -4, 12} with a +/-5 band.
    let v_ref2: Vec<f64> = vec![100.0, 100.0, 100.0];
    let v_pred2 = vec![97.0, 104.0, 88.0];
    let banded = bland_altman(&v_ref2, &v_pred2, Convention::RefDenominator, 5.0).unwrap();
    assert_eq!(banded.within_band_count, 2);
    // Identity: all pairs inside any band.
    let same = bland_altman(&v_ref2, &v_ref2, Convention::RefDenominator, 5.0).unwrap();
    assert_eq!(same.within_band_count, 3);
    assert_eq!(same.mean_diff, 0.0);
    println!(
        "PASS bland-altman: LOA [{:.10}, {:.10}] within 1e-9 of [0.4, 39.6]; band counts exact",
        result.loa_low, result.loa_high
    );
}

/// The full-scale cohort: 21 patients, 88 scans, 50 sections of
/// 512x512, undersegmentation factor 0.5625 (volume match near
/// t = 1/3). This is the heavyweight test (~6 GB of rasters in a temp
/// directory).
#[test]
fn acceptance_trend_reproduction() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let spec = CohortSpec {
        n_patients: 21,
        scans_min: 3,
        scans_max: 6,
        scans_total: Some(88),
        rows: 512,
        cols: 512,
        n_sections: 50,
        underseg_factor: 0.5625,
        seed: 7,
        ..CohortSpec::default()
    };
    assert!((spec.volume_matching_threshold() - 1.0 / 3.0).abs() < 1e-12);
    let manifest_path = generate_cohort(&spec, tmp.path()).expect("cohort generation");

    // The timed portion: load + evaluate + aggregate over the default
    // 12-threshold grid.
    let started = Instant::now();
    let manifest: DatasetManifest<f64> = model::load_manifest(&manifest_path).unwrap();
    assert_eq!(manifest.scans.len(), 88);
    let grid = Thresholds::default_grid();
    let base = manifest_path.parent().unwrap();
    let mut metrics = Vec::with_capacity(88);
    for entry in &manifest.scans {
        let prob = raster::load_probability_raster::<f64>(&DatasetManifest::<f64>::resolve_path(
            base,
            &entry.prob_path,
        ))
        .unwrap();
        let reference = raster::load_reference_mask(&DatasetManifest::<f64>::resolve_path(
            base,
            &entry.ref_path,
        ))
        .unwrap();
        metrics.push(
            sweep::evaluate_scan(
                &entry.scan,
                &prob,
                &reference,
                &grid,
                Region::Whole,
                Convention::RefDenominator,
            )
            .unwrap(),
        );
    }
    let report = sweep::aggregate(&metrics, Grouping::PerScan).unwrap();
    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs_f64() < 300.0,
        "full sweep took {elapsed:?} (>= 5 min)"
    );

    let mean_pct = |t: f64| -> f64 {
        report
            .rows
            .iter()
            .find(|r| (r.threshold - t).abs() < 1e-9)
            .and_then(|r| r.mean_abs_pct_diff)
            .unwrap()
    };
    let mean_dsc = |t: f64| -> f64 {
        report
            .rows
            .iter()
            .find(|r| (r.threshold - t).abs() < 1e-9)
            .and_then(|r| r.mean_dsc)
            .unwrap()
    };

    // Mean |% volume difference| falls strictly from 0.5 through 0.4 to
    // the grid point nearest t* (0.3).
    let (p50, p40, p30) = (mean_pct(0.5), mean_pct(0.4), mean_pct(0.3));
    assert!(
        p50 > p40 && p40 > p30,
        "volume trend not strictly decreasing: {p50:.2} -> {p40:.2} -> {p30:.2}"
    );

    // Mean DSC stays flat (< 0.05 total range) across 0.1..=0.5.
    let dscs: Vec<f64> = [0.1, 0.2, 0.3, 0.4, 0.5].iter().map(|&t| mean_dsc(t)).collect();
    let dsc_range = dscs.iter().cloned().fold(f64::MIN, f64::max)
        - dscs.iter().cloned().fold(f64::MAX, f64::min);
    assert!(
        dsc_range < 0.05,
        "mean DSC range {dsc_range:.4} across 0.1..0.5 (values {dscs:?})"
    );

    println!(
        "PASS trend-reproduction: |%vol diff| {p50:.2} -> {p40:.2} -> {p30:.2} strictly decreasing; \
         mean DSC range {dsc_range:.4} (< 0.05); sweep {:.1}s (< 300s)",
        elapsed.as_secs_f64()
    );
}

#[test]
fn acceptance_effusion_mode() {
    let base = PhantomSpec::<f64>::concentric(200, 200, 2, 30.0, 20.0);
    let with_effusion = PhantomSpec {
        effusion: Some(Effusion {
            center: (40.0, 40.0),
            radius_px: 12.0,
            level: 0.3,
        }),
        ..base.clone()
    };
    let (scan, prob0, ref0) = generate(&base).unwrap();
    let (_, prob1, ref1) = generate(&with_effusion).unwrap();

    // Unchanged at t = 0.5 (the plateau sits below the cutoff).
    let eval = |prob, reference, t| {
        let mask = binarize(prob, t).unwrap();
        let volume = tumor_volume(&mask, &scan).unwrap().volume_mm3;
        let mean_dsc = scan_dsc::<f64>(&mask, reference).unwrap().mean;
        (volume, mean_dsc)
    };
    let (v0_half, d0_half) = eval(&prob0, &ref0, 0.5);
    let (v1_half, d1_half) = eval(&prob1, &ref1, 0.5);
    assert_eq!(v0_half, v1_half);
    assert_eq!(d0_half, d1_half);

    // At t = 0.01 the plateau is included: volume strictly up, DSC
    // strictly down.
    let (v0_low, d0_low) = eval(&prob0, &ref0, 0.01);
    let (v1_low, d1_low) = eval(&prob1, &ref1, 0.01);
    assert!(v1_low > v0_low, "volume {v0_low} -> {v1_low}");
    assert!(d1_low < d0_low, "DSC {d0_low} -> {d1_low}");
    println!(
        "PASS effusion-mode: t=0.5 unchanged; t=0.01 volume {v0_low:.0} -> {v1_low:.0} up, DSC {d0_low:.4} -> {d1_low:.4} down"
    );
}

#[test]
fn acceptance_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |tag: &str| -> std::path::PathBuf {
        let root = tmp.path().join(tag);
        let data = root.join("data");
        let bin = env!("CARGO_BIN_EXE_segsweep");
        let ok = |out: std::process::Output, what: &str| {
            assert!(
                out.status.success(),
                "{what}: {}",
                String::from_utf8_lossy(&out.stderr)
            );
        };
        ok(
            Command::new(bin)
                .args([
                    "phantom",
                    "--patients",
                    "4",
                    "--scans-min",
                    "2",
                    "--scans-max",
                    "3",
                    "--seed",
                    "42",
                    "--rows",
                    "128",
                    "--cols",
                    "128",
                    "--sections",
                    "4",
                    "--ref-radius-min",
                    "8",
                    "--ref-radius-max",
                    "10",
                    "--out",
                    data.to_str().unwrap(),
                ])
                .output()
                .unwrap(),
            "phantom",
        );
        ok(
            Command::new(bin)
                .args([
                    "sweep",
                    "--manifest",
                    data.join("manifest.json").to_str().unwrap(),
                    "--out",
                    root.join("results").to_str().unwrap(),
                ])
                .output()
                .unwrap(),
            "sweep",
        );
        ok(
            Command::new(bin)
                .args([
                    "stats",
                    "--metrics",
                    root.join("results/per_scan_metrics.csv").to_str().unwrap(),
                    "--band",
                    "5",
                    "--out",
                    root.join("stats").to_str().unwrap(),
                ])
                .output()
                .unwrap(),
            "stats",
        );
        root
    };
    let a = run("a");
    let b = run("b");

    let mut compared = 0usize;
    compare_trees(&a, &b, &mut compared);
    assert!(compared >= 10, "expected to compare many files, saw {compared}");
    println!("PASS determinism: {compared} output files byte-identical across reruns");
}

fn compare_trees(a: &Path, b: &Path, compared: &mut usize) {
    let mut names: Vec<_> = std::fs::read_dir(a)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    for name in names {
        let (pa, pb) = (a.join(&name), b.join(&name));
        if pa.is_dir() {
            compare_trees(&pa, &pb, compared);
        } else {
            let ba = std::fs::read(&pa).unwrap();
            let bb = std::fs::read(&pb).unwrap_or_default();
            assert_eq!(ba, bb, "{} differs between reruns", pa.display());
            *compared += 1;
        }
    }
}
