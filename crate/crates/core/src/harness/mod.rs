//! Simulation scenario, Monte Carlo sweeps and result files.

pub mod channels;
pub mod experiment;
pub mod oracle;
pub mod results;

pub use channels::{generate_channels, realization_seed, Preset};
pub use experiment::{run_experiment, Algorithm, ExperimentResult, ExperimentSpec, MeanRow, Mode, ResultRow};
pub use oracle::{compare_with_oracle, OracleComparison};
pub use results::{write_results, OutputPaths};
