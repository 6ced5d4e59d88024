//! Calibration diagnostics for prediction uncertainties: average
//! calibration, consistency against the uncertainty, and adaptivity
//! against input features, from error/uncertainty tables.

pub mod analysis;
pub mod binning;
pub mod dataset;
pub mod error;
pub mod plots;
pub mod report;
pub mod seed;
pub mod stats;
pub mod synth;

pub use analysis::{
    acf, average_calibration_report, fraction_valid, lz_analysis, rce, reliability_diagram,
    reorder_perturbation, AnalysisParams, AverageCalibration, LzResult,
};
pub use binning::{equal_count_bins, sliding_window, stratified_bins, BinCount, BinPartition, Scheme};
pub use dataset::{load_dataset, zscores, ColumnMapping, Dataset, Variable, ZScores};
pub use error::{Error, Result};
pub use plots::{emit_plot_series, PlotKind};
pub use report::{run_validate, validate_dataset, AnalysisConfig, ValidationReport};
pub use stats::{binomial_fv_interval, Interval, StatEstimate, StatKind};
pub use synth::{generate, generate_calibrated, inject_miscalibration, SynthSpec};
