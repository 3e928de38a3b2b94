//! The three baseline detectors on each synthetic anomaly type.

use smsvar::baselines::{mkad_score, smm_score, var_baseline_fit, var_baseline_score, MkadConfig};
use smsvar::experiments::{generate_scenario, roc_auc, AnomalyKind, ScenarioConfig};
use smsvar::learning::estimate_observed_params;

fn main() -> smsvar::Result<()> {
    println!("{:<8} {:>8} {:>8} {:>8}", "anomaly", "VAR", "SMM", "MKAD");
    for kind in AnomalyKind::ALL {
        let ds = generate_scenario(&ScenarioConfig::with_kind(kind))?;
        let auc = |s: Vec<f64>| roc_auc(&s, &ds.labels).map(|r| r.auc);

        let a = var_baseline_fit(&ds.flights, 1e-8)?;
        let var = ds
            .flights
            .iter()
            .map(|f| var_baseline_score(f, &a).map(|s| s.summary))
            .collect::<smsvar::Result<Vec<_>>>()?;

        let observed = estimate_observed_params(&ds.flights, ds.ground_truth.n_modes())?;
        let smm = ds
            .flights
            .iter()
            .map(|f| smm_score(f, &observed.mode_transitions, &observed.duration_rates).map(|s| s.summary))
            .collect::<smsvar::Result<Vec<_>>>()?;

        let mkad = mkad_score(&ds.flights, &MkadConfig::default())?;
        let mkad: Vec<f64> = mkad.scores.iter().map(|s| s.summary).collect();

        println!("{:<8} {:>8.3} {:>8.3} {:>8.3}", kind.as_str(), auc(var)?, auc(smm)?, auc(mkad)?);
    }
    Ok(())
}
