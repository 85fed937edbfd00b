//! Scenario-driven experiments: TOML configuration, engine dispatch, Monte
//! Carlo replicates, sweeps, closed/open comparisons and CSV/SVG output.

pub mod config;
pub mod output;
pub mod run;

pub use config::{Compare, Engine, Format, Mode, MonteCarlo, Perturbation, Scenario, Sweep};
pub use output::{emit_plot, PlotSpec, Series, SeriesStyle, Table, Value};
pub use run::{
    closed_vs_open_loop, composition_sweep, monte_carlo, run_compare, run_monte_carlo, run_scenario, run_single,
    run_sweep, sweep, CompareResult, MonteCarloResult, RunOptions, RunOutput, SweepResult,
};
