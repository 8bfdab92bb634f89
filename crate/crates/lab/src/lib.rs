//! Scenario files, experiment runners and result exports for
//! [`edgeprice_core`].

pub mod experiments;
pub mod export;
pub mod scenario;

pub use experiments::{
    check_trends, oracle_checks, run_convergence, run_sweep, sweep_table, write_convergence,
    ExperimentError, SweepRow, TrendCheck,
};
pub use export::{export_results, format_real, Format, Table, Value};
pub use scenario::{
    load_scenario, parse_scenario, Experiment, Scenario, ScenarioError, SweepSpec, SweepTarget,
};
