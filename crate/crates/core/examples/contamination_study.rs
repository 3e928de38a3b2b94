//! How the KL detector degrades as the training mixture fills with anomalies.
//!
//! `cargo run --release --example contamination_study -- [runs]`

use smsvar::detection::Method;
use smsvar::experiments::{run_benchmark, AnomalyKind, BenchmarkConfig};

fn main() -> smsvar::Result<()> {
    let runs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let fractions = [0.05, 0.10, 0.15, 0.25, 0.50];
    let mut cfg = BenchmarkConfig::contamination(AnomalyKind::Switch, 100, &fractions, vec![Method::Kl, Method::Smm])?;
    cfg.n_runs = runs;
    let result = run_benchmark(&cfg)?;
    println!("{:>13} {:>8} {:>8}", "contamination", "KL", "SMM");
    for (f, s) in fractions.iter().zip(&cfg.scenarios) {
        let kl = result.mean_auc(&s.name, Method::Kl).unwrap_or(f64::NAN);
        let smm = result.mean_auc(&s.name, Method::Smm).unwrap_or(f64::NAN);
        println!("{:>12.0}% {kl:>8.3} {smm:>8.3}", 100.0 * f);
    }
    println!("({runs} runs per cell; at 50% the anomalous pattern is as common as the normal one)");
    Ok(())
}
