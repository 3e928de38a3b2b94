//! The synthetic detection benchmark: every detector on every anomaly type,
//! averaged over seeded runs.
//!
//! `cargo run --release --example benchmark -- [runs]` (30 runs take a few minutes)

use smsvar::experiments::{run_benchmark, BenchmarkConfig};

fn main() -> smsvar::Result<()> {
    let runs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let cfg = BenchmarkConfig {
        n_runs: runs,
        ..BenchmarkConfig::default()
    };
    let result = run_benchmark(&cfg)?;
    println!("{:<8} {:<6} {:>9} {:>9}", "scenario", "method", "auc_mean", "auc_std");
    for row in &result.summary {
        println!("{:<8} {:<6} {:>9.3} {:>9.3}", row.scenario, row.detector.as_str(), row.auc_mean, row.auc_std);
    }
    Ok(())
}
