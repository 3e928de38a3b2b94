//! Trains on an unlabeled mixture, scores every flight with the KL and LL
//! detectors and compares the rankings with the hidden labels.

use smsvar::detection::{rank_flights, score_dataset, Method, ScoringModel};
use smsvar::experiments::{generate_scenario, roc_auc, AnomalyKind, ScenarioConfig};
use smsvar::learning::{em_fit, EmConfig};

fn main() -> smsvar::Result<()> {
    let cfg = ScenarioConfig::with_kind(AnomalyKind::Phase);
    let ds = generate_scenario(&cfg)?;
    let report = em_fit(&ds.flights, ds.ground_truth.n_modes(), &EmConfig::default())?;
    let model = ScoringModel {
        params: report.params,
        var_matrix: None,
    };
    for method in [Method::Kl, Method::Ll] {
        let scores = score_dataset(&ds.flights, method, &model, &Default::default())?;
        let summaries: Vec<f64> = scores.iter().map(|s| s.summary).collect();
        let auc = roc_auc(&summaries, &ds.labels)?.auc;
        let top = rank_flights(&scores, Some(10))?;
        let hits = top
            .iter()
            .filter(|id| ds.flights.iter().zip(&ds.labels).any(|(f, &l)| l && &f.id == *id))
            .count();
        println!("{method}: AUC {auc:.3}, {hits} of the top 10 are injected anomalies");
        println!("  top 10: {}", top.join(" "));
    }
    Ok(())
}
