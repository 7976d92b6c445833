//! Experiment orchestration: simulate a system, add noise, estimate
//! derivatives, run each method on each state dimension, and tabulate
//! selection frequencies and exact-support success over seeded replicates.

mod config;
mod emit;
mod plot;
mod run;

pub use config::{DerivativeSource, ExperimentConfig, Grid, GridVar, Method, MethodSettings, ResolvedProtocol};
pub use emit::{
    coefficient_records, prepare_output_dir, read_boxplot, read_coefficients, read_summary, read_sweep,
    write_boxplot, write_coefficients, write_config, write_failures, write_summary, write_sweep, CoefficientRecord,
    BOXPLOT_CSV, COEFFICIENTS_CSV, CONFIG_JSON, FAILURES_CSV, SWEEP_CSV,
};
pub use plot::{plot_boxplot, plot_coefficients, plot_sweep};
pub use run::{
    build_dataset, grid_points, run_methods, run_single, sweep, BoxRow, Cell, CellError, CoefficientReport, Dataset,
    Diagnostics, FailureRow, Simulation, SingleRun, SweepRow, SweepSummary, TermRow,
};
