//! Episode loop, regret accounting, parameter sweeps and result files.

mod config;
mod emit;
mod regret;
mod run;
mod sweep;

pub use config::{
    Algorithm, AdversarySpec, ExperimentConfig, InstanceSpec, OutputFormat, OutputSpec, Overrides,
    ResolvedParams, DEFAULT_DELTA,
};
pub use emit::{
    emit_run, emit_sweep, line_plot_svg, read_records_csv, regret_svg, sweep_svg,
    write_records_csv, write_summary_json, write_sweep_csv, SummaryDocument, SUMMARY_FORMAT,
    SUMMARY_SCHEMA,
};
pub use regret::{comparator_values, compute_regret, cumulative_gaps, log_log_slope};
pub use run::{
    drive, run_experiment, run_with, trajectory_rng, EpisodeRecord, Feedback, Learner, Plan,
    RunOptions, RunOutput, RunSummary, StepDiagnostics, VALUE_ORDER_TOL,
};
pub use sweep::{apply_axis, mean_stderr, sweep, SweepAxis, SweepCell, SweepRow, SweepTable};
