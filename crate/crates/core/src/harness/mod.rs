//! Experiments that measure the schemes against their error bounds, and
//! report output.

pub mod barrier;
pub mod boundary_layer;
pub mod consistency;
pub mod convergence;
pub mod dependence;
pub mod fit;
pub mod properties;
pub mod report;
pub mod switching;

pub use barrier::{barrier_audit, BarrierReport};
pub use boundary_layer::{boundary_layer_demo, BoundaryLayerReport};
pub use consistency::{consistency_probe, ConsistencyReport, TestFamily};
pub use convergence::{convergence_study, ConvergenceReport, DtRule, LadderSpec};
pub use dependence::{continuous_dependence_probe, DependenceReport, Field};
pub use properties::{
    cfl_study, comparison_probe, monotonicity_probe, smoothing_study, CflReport, ComparisonReport,
    MonotonicityReport, SmoothingStudy,
};
pub use report::{write_report, Report, Table};
pub use switching::{switching_study, SwitchingReport};
