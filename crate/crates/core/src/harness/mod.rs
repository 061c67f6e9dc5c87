//! Experiment orchestration: pollution plans, seeded sweeps, analyses and
//! report emission.

pub mod analysis;
pub mod config;
pub mod masks;
pub mod pollution;
pub mod report;
pub mod seeds;
pub mod sweep;
pub mod synthetic;

pub use analysis::{mvg_contour_projection, pairwise_distance_summary, ContourProjection, DistanceSummary};
pub use config::{CategorySource, SweepConfig};
pub use pollution::{build_pollution_plan, PollutionPlan};
pub use report::{ExperimentReport, ReportRow, SummaryRow, CSV_HEADER};
pub use sweep::{evaluate, run_refinement_sweep, run_robustness_sweep, CategoryData};
