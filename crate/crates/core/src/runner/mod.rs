//! Experiment orchestration: config, the per-seed outer loop, baselines,
//! sweeps and report files.

mod config;
mod experiment;
mod report;

pub use config::{DatasetConfig, Mode, RunConfig, StudentConfig, TeacherConfig, SWEEP_PARAMS};
pub use experiment::{
    prepare_data, run_experiment, run_seed, run_sweep, AuditAction, AuditRow, PreparedData,
    RoundMetrics, RunReport, SeedResult, SweepRow,
};
pub use report::{
    emit_report, read_report_csv, render_table, report_rows, write_audit_csv, write_history_csv,
    write_report_csv, write_rounds_csv, write_sweep_csv, ReportRow,
};
