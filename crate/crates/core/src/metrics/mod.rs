//! Evaluation metrics: image ROC AUC, capped pixel curves (AU-IoU, AU-PRO)
//! and precision/recall/F1 of a refinement.
//!
//! Pixel FPR is pooled over every pixel of every image. Both capped areas are
//! divided by the cap so a perfect detector scores 1.

mod capped;
mod prf;
mod regions;
mod roc;

pub use capped::{au_iou, au_pro, iou_curve, pixel_curves, pro_curve, CappedCurve, PixelCurves, DEFAULT_FPR_CAP};
pub use prf::{refinement_prf, Prf};
pub use regions::{connected_components, GroundTruthRegions};
pub use roc::{roc_auc, RocCurve};

/// Conventions recorded alongside every report.
pub const METRIC_CONVENTIONS: &str = "AU-IoU and AU-PRO: pooled-pixel FPR over all images, \
8-connected regions, trapezoidal area up to FPR 0.3 divided by 0.3; operating points are the \
distinct score thresholds, extended flat to FPR 0; ROC AUC groups tied scores into one step";
