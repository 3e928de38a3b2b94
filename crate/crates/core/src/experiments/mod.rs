//! Synthetic anomaly scenarios, ROC/AUC evaluation and the benchmark harness.

mod benchmark;
mod roc;
mod scenario;

pub use benchmark::{
    evaluate_run, run_benchmark, write_runs_csv, write_summary_json, BenchmarkConfig, BenchmarkResult, NamedScenario,
    RunRecord, SummaryRow,
};
pub use roc::{roc_auc, RocResult};
pub use scenario::{
    generate_scenario, random_ground_truth, AnomalyKind, InjectedEvent, LabeledDataset, ScenarioConfig,
};
