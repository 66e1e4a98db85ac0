//! Synthetic scans with analytically known per-threshold volume and
//! overlap, used as verification oracles and as a stand-in cohort.
//!
//! The prediction surrogate is a radial probability cone
//! `p = clamp(1 - d/R_p, 0, 1)`: thresholding at `t` yields a disk of
//! radius `R_p (1 - t)` pixels, so volume and DSC against a disk-shaped
//! reference follow in closed form. Optional error modes mimic real
//! failure cases: a low-probability plateau that appears only at low
//! thresholds, and a zeroed band cutting through the prediction.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::grid::Grid;
use crate::model::{
    DatasetManifest, ManifestEntry, ModelError, ProbabilityRaster, ReferenceMask, ScanRecord,
    SectionGeometry, SectionGrid, SubsetRange,
};
use crate::raster::{RasterDtype, RasterError, RasterHeader, RasterWriter, SectionDims};
use crate::scalar::{cast, cast_usize, Scalar};

#[derive(Debug, Error)]
pub enum PhantomError {
    #[error("invalid phantom spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("cohort: {0}")]
    Cohort(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Plateau of constant probability, visible only below its level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Effusion<F> {
    pub center: (F, F),
    pub radius_px: F,
    pub level: F,
}

/// Grid rows whose probabilities are forced to zero, mimicking a
/// structure the predictor cannot see across.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GapBand {
    pub start_row: usize,
    /// Inclusive.
    pub end_row: usize,
    /// When false the band is configured but inert.
    pub zero: bool,
}

/// Full description of one synthetic scan.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec<F> {
    pub rows: usize,
    pub cols: usize,
    pub n_sections: usize,
    pub pixel_spacing_mm: F,
    pub section_distance_mm: F,
    /// (row, col) of the probability cone apex; fractional centers allowed.
    pub cone_center: (F, F),
    /// Cone base radius R_p in pixels.
    pub cone_radius_px: F,
    pub ref_center: (F, F),
    pub ref_radius_px: F,
    pub effusion: Option<Effusion<F>>,
    pub gap: Option<GapBand>,
    pub seed: u64,
}

impl<F: Scalar> PhantomSpec<F> {
    /// Concentric cone/reference pair centered in the grid.
    pub fn concentric(
        rows: usize,
        cols: usize,
        n_sections: usize,
        cone_radius_px: f64,
        ref_radius_px: f64,
    ) -> Self {
        let center = (cast((rows as f64 - 1.0) / 2.0), cast((cols as f64 - 1.0) / 2.0));
        PhantomSpec {
            rows,
            cols,
            n_sections,
            pixel_spacing_mm: F::one(),
            section_distance_mm: F::one(),
            cone_center: center,
            cone_radius_px: cast(cone_radius_px),
            ref_center: center,
            ref_radius_px: cast(ref_radius_px),
            effusion: None,
            gap: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), PhantomError> {
        let fail = |m: String| Err(PhantomError::InvalidSpec(m));
        if self.rows == 0 || self.cols == 0 || self.n_sections == 0 {
            return fail("rows, cols, n_sections must be > 0".into());
        }
        if !(self.pixel_spacing_mm > F::zero()) || !(self.section_distance_mm > F::zero()) {
            return fail("pixel spacing and section distance must be > 0".into());
        }
        if !(self.cone_radius_px > F::zero()) || !(self.ref_radius_px > F::zero()) {
            return fail("radii must be > 0".into());
        }
        let fits = |center: (F, F), radius: F| {
            center.0 - radius >= F::zero()
                && center.1 - radius >= F::zero()
                && center.0 + radius <= cast(self.rows as f64 - 1.0)
                && center.1 + radius <= cast(self.cols as f64 - 1.0)
        };
        if !fits(self.cone_center, self.cone_radius_px) {
            return fail("cone support does not fit within the grid".into());
        }
        if !fits(self.ref_center, self.ref_radius_px) {
            return fail("reference disk does not fit within the grid".into());
        }
        if let Some(e) = self.effusion {
            if !(e.level > F::zero() && e.level < F::one()) {
                return fail(format!("effusion level {} outside (0, 1)", e.level));
            }
            if !(e.radius_px > F::zero()) || !fits(e.center, e.radius_px) {
                return fail("effusion disk does not fit within the grid".into());
            }
        }
        if let Some(g) = self.gap {
            if g.start_row > g.end_row || g.end_row >= self.rows {
                return fail("gap band rows out of range".into());
            }
        }
        Ok(())
    }

    /// The single probability section; all sections are identical.
    pub fn probability_section(&self) -> Grid<F> {
        let (cr, cc) = (
            self.cone_center.0.to_f64().unwrap(),
            self.cone_center.1.to_f64().unwrap(),
        );
        let rp = self.cone_radius_px.to_f64().unwrap();
        let eff = self.effusion.map(|e| {
            (
                e.center.0.to_f64().unwrap(),
                e.center.1.to_f64().unwrap(),
                e.radius_px.to_f64().unwrap(),
                e.level.to_f64().unwrap(),
            )
        });
        let gap = self.gap.filter(|g| g.zero);
        Grid::from_fn(self.rows, self.cols, |r, c| {
            if let Some(g) = gap {
                if r >= g.start_row && r <= g.end_row {
                    return F::zero();
                }
            }
            let d = ((r as f64 - cr).powi(2) + (c as f64 - cc).powi(2)).sqrt();
            let mut p = (1.0 - d / rp).clamp(0.0, 1.0);
            if let Some((er, ec, erad, level)) = eff {
                let de = ((r as f64 - er).powi(2) + (c as f64 - ec).powi(2)).sqrt();
                if de <= erad {
                    p = p.max(level);
                }
            }
            // Materialize at storage precision so in-memory evaluation
            // matches a disk round trip bit for bit.
            cast(f64::from(p as f32))
        })
    }

    /// The single reference section: a disk of `ref_radius_px`.
    pub fn reference_section(&self) -> Grid<bool> {
        let (cr, cc) = (
            self.ref_center.0.to_f64().unwrap(),
            self.ref_center.1.to_f64().unwrap(),
        );
        let rr = self.ref_radius_px.to_f64().unwrap();
        Grid::from_fn(self.rows, self.cols, |r, c| {
            ((r as f64 - cr).powi(2) + (c as f64 - cc).powi(2)).sqrt() <= rr
        })
    }

    fn scan_record(&self, scan_id: &str, patient_id: &str) -> ScanRecord<F> {
        let sections = (0..self.n_sections)
            .map(|i| SectionGeometry {
                section_index: i as u32,
                table_position_mm: cast_usize::<F>(i) * self.section_distance_mm,
                pixel_spacing_mm: self.pixel_spacing_mm,
                rows: self.rows,
                cols: self.cols,
            })
            .collect::<Vec<_>>();
        ScanRecord {
            scan_id: scan_id.to_string(),
            patient_id: patient_id.to_string(),
            reviewed_indices: sections.iter().map(|s| s.section_index).collect(),
            sections,
            subset_range: if self.n_sections >= 3 {
                Some(SubsetRange {
                    superior: (self.n_sections / 4) as u32,
                    inferior: (3 * self.n_sections / 4) as u32,
                })
            } else {
                None
            },
        }
    }
}

/// Materializes a phantom in memory. Every section carries the same
/// grids; deterministic for a given spec.
pub fn generate<F: Scalar>(
    spec: &PhantomSpec<F>,
) -> Result<(ScanRecord<F>, ProbabilityRaster<F>, ReferenceMask), PhantomError> {
    generate_named(spec, "phantom", "phantom-patient")
}

pub fn generate_named<F: Scalar>(
    spec: &PhantomSpec<F>,
    scan_id: &str,
    patient_id: &str,
) -> Result<(ScanRecord<F>, ProbabilityRaster<F>, ReferenceMask), PhantomError> {
    spec.validate()?;
    let prob_section = spec.probability_section();
    let ref_section = spec.reference_section();
    let scan = spec.scan_record(scan_id, patient_id);
    let prob = ProbabilityRaster {
        scan_id: scan.scan_id.clone(),
        sections: (0..spec.n_sections as u32)
            .map(|index| SectionGrid {
                index,
                grid: prob_section.clone(),
            })
            .collect(),
    };
    let mask = ReferenceMask {
        scan_id: scan.scan_id.clone(),
        sections: (0..spec.n_sections as u32)
            .map(|index| SectionGrid {
                index,
                grid: ref_section.clone(),
            })
            .collect(),
    };
    Ok((scan, prob, mask))
}

/// Intersection area of two circles with radii `r1`, `r2` whose centers
/// are `d` apart (the circular-lens formula).
pub fn lens_area(r1: f64, r2: f64, d: f64) -> f64 {
    if d >= r1 + r2 {
        return 0.0;
    }
    let rmin = r1.min(r2);
    if d <= (r1 - r2).abs() {
        return PI * rmin * rmin;
    }
    let alpha = ((d * d + r1 * r1 - r2 * r2) / (2.0 * d * r1)).clamp(-1.0, 1.0);
    let beta = ((d * d + r2 * r2 - r1 * r1) / (2.0 * d * r2)).clamp(-1.0, 1.0);
    let kite = 0.5
        * ((-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2))
            .max(0.0)
            .sqrt();
    r1 * r1 * alpha.acos() + r2 * r2 * beta.acos() - kite
}

/// Closed-form thresholded volume of the plain cone, in mm^3.
///
/// Rasterized volumes agree within 2% relative once the thresholded
/// radius reaches 15 px; effusion and gap modes are not modeled here.
pub fn analytic_volume<F: Scalar>(spec: &PhantomSpec<F>, threshold: F) -> F {
    let rp = spec.cone_radius_px.to_f64().unwrap();
    let t = threshold.to_f64().unwrap();
    let spacing = spec.pixel_spacing_mm.to_f64().unwrap();
    let r_mm = rp * (1.0 - t) * spacing;
    cast(
        spec.n_sections as f64
            * PI
            * r_mm
            * r_mm
            * spec.section_distance_mm.to_f64().unwrap(),
    )
}

/// Closed-form DSC of the thresholded cone disk against the reference
/// disk (concentric, offset, or disjoint). Rasterized scan means agree
/// within 0.02 absolute once both radii reach 15 px.
pub fn analytic_dsc<F: Scalar>(spec: &PhantomSpec<F>, threshold: F) -> F {
    let rp = spec.cone_radius_px.to_f64().unwrap();
    let t = threshold.to_f64().unwrap();
    let r_t = rp * (1.0 - t);
    let r_ref = spec.ref_radius_px.to_f64().unwrap();
    let d = {
        let dr = spec.cone_center.0.to_f64().unwrap() - spec.ref_center.0.to_f64().unwrap();
        let dc = spec.cone_center.1.to_f64().unwrap() - spec.ref_center.1.to_f64().unwrap();
        (dr * dr + dc * dc).sqrt()
    };
    if r_t <= 0.0 {
        return F::zero();
    }
    let overlap = lens_area(r_t, r_ref, d);
    cast(2.0 * overlap / (PI * r_t * r_t + PI * r_ref * r_ref))
}

/// Cohort construction parameters.
///
/// Per-scan structure follows the undersegmentation construction: the
/// cone radius is chosen so the thresholded disk at t = 0.5 has
/// `underseg_factor` times the reference area, which puts the
/// volume-matching threshold at `t* = 1 - ref_radius/cone_radius`
/// for every scan. A fixed fraction of scans places the cone away from
/// the reference entirely (a complete miss): those scans score DSC 0 at
/// every threshold, which keeps the cohort mean DSC insensitive to the
/// threshold while leaving volumes untouched (volume does not depend on
/// placement). The remaining scans offset the cone by a fraction of the
/// reference radius.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortSpec {
    pub n_patients: usize,
    pub scans_min: usize,
    pub scans_max: usize,
    /// Exact total scan count; distributed over patients within
    /// [scans_min, scans_max] when present.
    pub scans_total: Option<usize>,
    pub rows: usize,
    pub cols: usize,
    pub n_sections: usize,
    pub section_distance_mm: f64,
    pub spacing_range_mm: (f64, f64),
    pub ref_radius_range_px: (f64, f64),
    /// Thresholded-at-0.5 area as a fraction of the reference area.
    pub underseg_factor: f64,
    /// Probability that a scan carries an off-target effusion plateau.
    pub effusion_prob: f64,
    pub effusion_level: f64,
    /// Fraction of scans whose prediction misses the reference entirely.
    pub miss_fraction: f64,
    /// Cone-center offset for overlapping scans, as a fraction of the
    /// reference radius.
    pub overlap_offset_factor: f64,
    pub seed: u64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        CohortSpec {
            n_patients: 21,
            scans_min: 3,
            scans_max: 6,
            scans_total: None,
            rows: 512,
            cols: 512,
            n_sections: 50,
            section_distance_mm: 5.0,
            spacing_range_mm: (0.7, 1.0),
            ref_radius_range_px: (20.0, 26.0),
            underseg_factor: 0.5625,
            effusion_prob: 0.0,
            effusion_level: 0.3,
            miss_fraction: 0.6,
            overlap_offset_factor: 0.45,
            seed: 0,
        }
    }
}

impl CohortSpec {
    /// The volume-matching threshold implied by the construction.
    pub fn volume_matching_threshold(&self) -> f64 {
        1.0 - 1.0 / (2.0 * self.underseg_factor.sqrt())
    }

    fn scans_per_patient(&self, rng: &mut ChaCha8Rng) -> Result<Vec<usize>, PhantomError> {
        if self.n_patients == 0 || self.scans_min == 0 || self.scans_min > self.scans_max {
            return Err(PhantomError::Cohort(
                "need n_patients >= 1 and 1 <= scans_min <= scans_max".into(),
            ));
        }
        match self.scans_total {
            None => Ok((0..self.n_patients)
                .map(|_| rng.gen_range(self.scans_min..=self.scans_max))
                .collect()),
            Some(total) => {
                let lo = self.scans_min * self.n_patients;
                let hi = self.scans_max * self.n_patients;
                if total < lo || total > hi {
                    return Err(PhantomError::Cohort(format!(
                        "scans_total {total} outside feasible range [{lo}, {hi}]"
                    )));
                }
                let mut counts = vec![self.scans_min; self.n_patients];
                let mut remaining = total - lo;
                while remaining > 0 {
                    let i = rng.gen_range(0..self.n_patients);
                    if counts[i] < self.scans_max {
                        counts[i] += 1;
                        remaining -= 1;
                    }
                }
                Ok(counts)
            }
        }
    }

    /// Builds one scan's phantom description. Deterministic per (seed, ordinal).
    fn scan_spec(&self, ordinal: usize, total: usize) -> Result<PhantomSpec<f64>, PhantomError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(1 + ordinal as u64);

        let spacing = rng.gen_range(self.spacing_range_mm.0..=self.spacing_range_mm.1);
        let ref_radius = rng.gen_range(self.ref_radius_range_px.0..=self.ref_radius_range_px.1);
        let cone_radius = 2.0 * self.underseg_factor.sqrt() * ref_radius;

        let center_r = (self.rows as f64 - 1.0) / 2.0 + rng.gen_range(-8.0..8.0);
        let center_c = (self.cols as f64 - 1.0) / 2.0 + rng.gen_range(-8.0..8.0);

        // Evenly interleaved deterministic miss assignment: exactly
        // floor(total * miss_fraction) scans miss, independent of the
        // random stream.
        let q = self.miss_fraction;
        let is_miss = ((ordinal + 1) as f64 * q).floor() > (ordinal as f64 * q).floor();

        let angle = rng.gen_range(0.0..(2.0 * PI));
        let offset = if is_miss {
            // Clear of the cone's full support at the lowest threshold.
            cone_radius + ref_radius + 6.0
        } else {
            self.overlap_offset_factor * ref_radius
        };
        // Keep the drawn direction when it fits; otherwise rotate
        // through fixed candidates so tight grids stay usable.
        let fits = |center: (f64, f64), radius: f64| {
            center.0 - radius >= 0.0
                && center.1 - radius >= 0.0
                && center.0 + radius <= self.rows as f64 - 1.0
                && center.1 + radius <= self.cols as f64 - 1.0
        };
        let placed = |base: f64, dist: f64, radius: f64| -> Option<(f64, f64)> {
            (0..8)
                .map(|k| base + k as f64 * PI / 4.0)
                .map(|a| (center_r + dist * a.sin(), center_c + dist * a.cos()))
                .find(|&c| fits(c, radius))
        };
        let cone_center = placed(angle, offset, cone_radius).ok_or_else(|| {
            PhantomError::Cohort(format!(
                "scan {ordinal}: cone of radius {cone_radius:.1} px at offset {offset:.1} px                  does not fit a {}x{} grid",
                self.rows, self.cols
            ))
        })?;

        let effusion = if rng.gen_bool(self.effusion_prob.clamp(0.0, 1.0)) {
            // Off to the side, disjoint from both structures.
            let edist = cone_radius + ref_radius + 14.0;
            let center = placed(angle + PI, edist, 6.0).ok_or_else(|| {
                PhantomError::Cohort(format!(
                    "scan {ordinal}: effusion does not fit a {}x{} grid",
                    self.rows, self.cols
                ))
            })?;
            Some(Effusion {
                center,
                radius_px: 6.0,
                level: self.effusion_level,
            })
        } else {
            None
        };

        let spec = PhantomSpec {
            rows: self.rows,
            cols: self.cols,
            n_sections: self.n_sections,
            pixel_spacing_mm: spacing,
            section_distance_mm: self.section_distance_mm,
            cone_center,
            cone_radius_px: cone_radius,
            ref_center: (center_r, center_c),
            ref_radius_px: ref_radius,
            effusion,
            gap: None,
            seed: self.seed.wrapping_add(ordinal as u64),
        };
        spec.validate()?;
        debug_assert!(ordinal < total);
        Ok(spec)
    }
}

/// Writes a full synthetic cohort (manifest plus rasters) under
/// `out_dir` and returns the manifest path. Fully determined by the
/// spec's seed; rerunning produces bit-identical files.
pub fn generate_cohort(spec: &CohortSpec, out_dir: &Path) -> Result<PathBuf, PhantomError> {
    let raster_dir = out_dir.join("rasters");
    std::fs::create_dir_all(&raster_dir).map_err(|source| PhantomError::Io {
        path: raster_dir.clone(),
        source,
    })?;

    let mut cohort_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    cohort_rng.set_stream(u64::MAX);
    let counts = spec.scans_per_patient(&mut cohort_rng)?;
    let total: usize = counts.iter().sum();

    let mut entries = Vec::with_capacity(total);
    let mut ordinal = 0usize;
    for (p, &count) in counts.iter().enumerate() {
        let patient_id = format!("p{:02}", p + 1);
        for s in 0..count {
            let scan_id = format!("{patient_id}_s{:02}", s + 1);
            let phantom = spec.scan_spec(ordinal, total)?;
            write_scan(&phantom, &scan_id, &raster_dir)?;
            let scan = phantom.scan_record(&scan_id, &patient_id);
            entries.push(ManifestEntry {
                scan,
                prob_path: format!("rasters/{scan_id}.prob.sgsw"),
                ref_path: format!("rasters/{scan_id}.ref.sgsw"),
            });
            ordinal += 1;
        }
    }

    let manifest = DatasetManifest { scans: entries };
    let manifest_path = out_dir.join("manifest.json");
    crate::model::write_manifest(&manifest, &manifest_path)?;
    Ok(manifest_path)
}

/// Streams one scan's sections to disk without holding the whole
/// raster in memory (sections are identical by construction).
fn write_scan(
    phantom: &PhantomSpec<f64>,
    scan_id: &str,
    raster_dir: &Path,
) -> Result<(), PhantomError> {
    let prob_section = phantom.probability_section();
    let ref_section = phantom.reference_section();
    let dims: Vec<SectionDims> = (0..phantom.n_sections as u32)
        .map(|index| SectionDims {
            index,
            rows: phantom.rows,
            cols: phantom.cols,
        })
        .collect();

    let prob_path = raster_dir.join(format!("{scan_id}.prob.sgsw"));
    let mut writer = RasterWriter::create(
        &prob_path,
        RasterHeader {
            scan_id: scan_id.to_string(),
            dtype: RasterDtype::F32,
            sections: dims.clone(),
        },
    )?;
    for _ in 0..phantom.n_sections {
        writer.write_section_f32(&prob_section)?;
    }
    writer.finish()?;

    let ref_path = raster_dir.join(format!("{scan_id}.ref.sgsw"));
    let mut writer = RasterWriter::create(
        &ref_path,
        RasterHeader {
            scan_id: scan_id.to_string(),
            dtype: RasterDtype::U8,
            sections: dims,
        },
    )?;
    for _ in 0..phantom.n_sections {
        writer.write_section_mask(&ref_section)?;
    }
    writer.finish()?;
    Ok(())
}
