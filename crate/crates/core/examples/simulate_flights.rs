//! Generates a labeled synthetic dataset and shows what was injected.
//!
//! `cargo run --example simulate_flights -- [mode|phase|sensor|switch]`

use smsvar::experiments::{generate_scenario, AnomalyKind, ScenarioConfig};

fn main() -> smsvar::Result<()> {
    let kind = match std::env::args().nth(1).as_deref() {
        Some("mode") => AnomalyKind::Mode,
        Some("sensor") => AnomalyKind::Sensor,
        Some("switch") => AnomalyKind::Switch,
        _ => AnomalyKind::Phase,
    };
    let cfg = ScenarioConfig {
        n_normal: 20,
        n_anomalous: 4,
        ..ScenarioConfig::with_kind(kind)
    };
    let ds = generate_scenario(&cfg)?;
    let truth = &ds.ground_truth;
    println!(
        "{} flights of {} steps: {} modes, {} phases, {} sensors",
        ds.flights.len(),
        cfg.length,
        truth.n_modes(),
        truth.n_phases(),
        truth.n_sensors()
    );
    for (m, rate) in truth.duration_rates.iter().enumerate().take(4) {
        println!("mode {m:2}: mean run length {:.1}", rate + 1.0);
    }

    for (i, f) in ds.flights.iter().enumerate() {
        let runs = 1 + f.modes.windows(2).filter(|w| w[0] != w[1]).count();
        let label = if ds.labels[i] { "ANOMALOUS" } else { "normal" };
        print!("{}  {label:9}  {runs:3} mode runs", f.id);
        for e in &ds.events[i] {
            print!("  [{} t={}..{} detail={}]", e.kind.as_str(), e.start, e.end, e.detail);
        }
        println!();
        // anomalous flights keep their clean twin for comparison
        if let Some(twin) = &ds.twins[i] {
            let changed = (0..f.len())
                .filter(|&t| f.modes[t] != twin.modes[t] || f.sensors[t] != twin.sensors[t])
                .count();
            println!("          {changed} of {} steps differ from the clean twin", f.len());
        }
    }
    Ok(())
}
