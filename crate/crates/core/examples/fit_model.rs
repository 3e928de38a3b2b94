//! Fits a model with EM and decodes the hidden phase of a fresh flight.
//!
//! The learned phases are only identified up to relabeling, so decoding is
//! scored against the true path after matching labels by majority vote.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use smsvar::experiments::{generate_scenario, AnomalyKind, ScenarioConfig};
use smsvar::inference::viterbi_phases;
use smsvar::learning::{em_fit, EmConfig};
use smsvar::linalg::spectral_radius;
use smsvar::model::{sample_flight, InitialState};

fn main() -> smsvar::Result<()> {
    let cfg = ScenarioConfig {
        n_normal: 60,
        n_anomalous: 0,
        ..ScenarioConfig::with_kind(AnomalyKind::Phase)
    };
    let ds = generate_scenario(&cfg)?;
    let truth = &ds.ground_truth;
    let em = EmConfig {
        n_phases: cfg.n_phases,
        ..EmConfig::default()
    };
    let report = em_fit(&ds.flights, truth.n_modes(), &em)?;
    println!(
        "EM: {} iterations, converged={}, best of {} restarts",
        report.iterations_run, report.converged, em.restarts
    );
    let h = &report.loglik_history;
    println!("log-likelihood {:.2} -> {:.2}", h[0], h[h.len() - 1]);
    for flag in &report.flags {
        println!("note: {flag:?}");
    }
    for (x, a) in report.params.var_matrices.iter().enumerate() {
        println!("learned phase {x}: spectral radius {:.3}", spectral_radius(a));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let fresh = sample_flight(truth, 400, &InitialState::default(), "fresh", &mut rng)?;
    let oracle = viterbi_phases(&fresh.record, truth)?;
    let learned = viterbi_phases(&fresh.record, &report.params)?;

    let n_x = truth.n_phases();
    let mut votes = vec![vec![0usize; n_x]; n_x];
    for (&l, &t) in learned.phases.iter().zip(&fresh.phases) {
        votes[l][t] += 1;
    }
    let map: Vec<usize> = votes
        .iter()
        .map(|v| (0..n_x).max_by_key(|&t| v[t]).unwrap_or(0))
        .collect();
    let accuracy = |path: &[usize], relabel: &dyn Fn(usize) -> usize| {
        path.iter().zip(&fresh.phases).filter(|(&p, &t)| relabel(p) == t).count() as f64 / path.len() as f64
    };
    println!("Viterbi with true parameters:    {:.1}% of phases recovered", 100.0 * accuracy(&oracle.phases, &|p| p));
    println!("Viterbi with learned parameters: {:.1}% of phases recovered", 100.0 * accuracy(&learned.phases, &|p| map[p]));
    println!("decoded path log-probability {:.2}", learned.log_prob);
    Ok(())
}
