//! Proof-of-Search: a blockchain where hash attempts double as evaluations
//! of candidate solutions to client-submitted optimization jobs.

pub mod analysis;
pub mod codec;
pub mod consensus;
pub mod hash;
pub mod mining;
pub mod netsim;
pub mod tsp;
pub mod types;
pub mod vm;

/// Analysis parameters over `f64`.
pub type AnalysisParams = analysis::AnalysisParams<f64>;
/// Monte Carlo estimate over `f64`.
pub type Estimate = analysis::Estimate<f64>;
/// Block-time sample over `f64`.
pub type BlockTimeSample = analysis::BlockTimeSample<f64>;
/// Mean and variance over `f64`.
pub type Moments = analysis::Moments<f64>;
/// Comparison table row over `f64`.
pub type SeriesPoint = analysis::SeriesPoint<f64>;
