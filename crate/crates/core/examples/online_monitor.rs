//! Scores a flight row by row, as a monitor would while it is recorded, and
//! raises an alert when a KL value exceeds a threshold set on clean flights.

use smsvar::detection::{score_flight, Method, ScoringModel};
use smsvar::experiments::{generate_scenario, AnomalyKind, ScenarioConfig};
use smsvar::learning::{em_fit, EmConfig};
use smsvar::streaming::StreamingScorer;

fn main() -> smsvar::Result<()> {
    let cfg = ScenarioConfig {
        n_normal: 60,
        n_anomalous: 1,
        ..ScenarioConfig::with_kind(AnomalyKind::Phase)
    };
    let ds = generate_scenario(&cfg)?;
    let report = em_fit(&ds.flights, ds.ground_truth.n_modes(), &EmConfig::default())?;
    let model = ScoringModel {
        params: report.params,
        var_matrix: None,
    };

    // threshold: the 99.5th percentile of per-step values on the normal flights
    let mut clean: Vec<f64> = Vec::new();
    for f in &ds.flights[..cfg.n_normal] {
        clean.extend(score_flight(f, Method::Kl, &model)?.values);
    }
    clean.sort_by(f64::total_cmp);
    let threshold = clean[(clean.len() as f64 * 0.995) as usize];
    println!("alert threshold {threshold:.4}");

    let flight = ds.flights.last().expect("one anomalous flight");
    for e in ds.events.last().into_iter().flatten() {
        println!("injected: {} over t={}..{}", e.kind.as_str(), e.start, e.end);
    }
    let mut scorer = StreamingScorer::new(flight.id.clone(), Method::Kl, &model)?;
    let mut alerts = 0;
    for t in 0..flight.len() {
        for (step, value) in scorer.push(flight.modes[t], flight.sensors[t].clone())? {
            if value > threshold {
                alerts += 1;
                println!("row {t:3}: ALERT  D_{step} = {value:.4}");
            }
        }
    }
    let (_, series) = scorer.finish()?;
    println!("{} rows, {alerts} alerts, flight summary {:.5}", flight.len(), series.summary);
    Ok(())
}
