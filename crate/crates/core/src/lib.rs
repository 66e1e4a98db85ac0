//! Threshold-sweep evaluation of probabilistic tumor segmentations
//! against reference masks: volumetry, overlap, agreement statistics,
//! and a synthetic phantom oracle for verification.
//!
//! The pipeline: a JSON manifest describes scans and references their
//! probability rasters and reference masks ([`model`]); predictions are
//! binarized across a threshold grid and scored by tumor volume and
//! Dice overlap ([`metrics`], [`sweep`]); cohort-level comparisons use
//! nonparametric tests and Bland-Altman agreement ([`stats`]); and
//! [`phantom`] synthesizes scans whose per-threshold volume and DSC are
//! known in closed form.
//!
//! All numeric code is generic over the scalar type via [`scalar::Scalar`]
//! (any `num_traits::Float`); the aliases below pin the standard
//! pipeline to `f64`.

// Validation uses `!(x > 0)` rather than `x <= 0` so that NaN fails the
// check instead of slipping through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod grid;
pub mod metrics;
pub mod model;
pub mod phantom;
pub mod raster;
pub mod report;
pub mod scalar;
pub mod stats;
pub mod sweep;

pub use scalar::Scalar;

/// Standard-precision pipeline aliases.
pub type Scan = model::ScanRecord<f64>;
pub type Manifest = model::DatasetManifest<f64>;
pub type Raster = model::ProbabilityRaster<f64>;
pub type Mask = metrics::BinaryMask<f64>;
pub type RefMask = model::ReferenceMask;
pub type Thresholds = sweep::ThresholdGrid<f64>;
pub type Metrics = sweep::ScanMetrics<f64>;
pub type Report = sweep::SweepReport<f64>;
pub type Phantom = phantom::PhantomSpec<f64>;
