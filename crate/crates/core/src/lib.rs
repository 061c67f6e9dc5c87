//! Fully-unsupervised anomaly detection on frozen multi-level embeddings.
//!
//! The crate bundles four one-class detectors (image-level KNN with SPADE
//! localization, image-level Mahalanobis, PaDiM and PatchCore), training-set
//! refinement strategies for polluted data (SROC, random removal,
//! cross-validation and STOC-style split ensembles), the pollution protocol
//! used to build contaminated training sets, and the evaluation metrics
//! (ROC AUC, AU-IoU and AU-PRO capped at a false-positive-rate limit).
//!
//! Everything operates on precomputed feature tensors stored as NPY files
//! alongside a JSON manifest; see [`tensor`] for the on-disk layout.

pub mod ann;
pub mod covariance;
pub mod detectors;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod refine;
pub mod tensor;

pub use ann::{IvfIndex, Neighbor, PayloadId, VectorBank};
pub use covariance::GaussianModel;
pub use detectors::{DetectorConfig, DetectorKind, FittedDetector, PixelMapConfig, ScoreMap};
pub use error::{Error, Result};
pub use harness::{ExperimentReport, PollutionPlan, ReportRow, SweepConfig};
pub use metrics::{CappedCurve, GroundTruthRegions, Prf, RocCurve};
pub use refine::{RefinementConfig, RefinementOutcome, Strategy};
pub use tensor::{
    AlignedPatchGrid, EmbeddingSet, FeatureLevel, HealthLabel, Manifest, SampleRecord, Split,
};
