use nalgebra::DMatrix;

use crate::detection::{Method, ScoreSeries};
use crate::error::{Error, Result};
use crate::flight::FlightRecord;
use crate::model::{duration_logprob_unchecked, mode_logprob_unchecked};

pub(crate) fn smm_step(flight: &FlightRecord, t: usize, mode_transitions: &DMatrix<f64>, rates: &[f64]) -> f64 {
    let (m_prev, d_prev) = (flight.modes[t - 1], flight.durations[t - 1]);
    let (m, d) = (flight.modes[t], flight.durations[t]);
    mode_logprob_unchecked(m, m_prev, d_prev, mode_transitions) + duration_logprob_unchecked(d, d_prev, rates[m])
}

/// Per-step `log p(d_t, m_t | d_{t-1}, m_{t-1})` under the semi-Markov mode model.
pub fn smm_score(flight: &FlightRecord, mode_transitions: &DMatrix<f64>, rates: &[f64]) -> Result<ScoreSeries> {
    let n_m = mode_transitions.nrows();
    if rates.len() != n_m {
        return Err(Error::Dimension("rates do not match mode matrix".into()));
    }
    if let Some(&m) = flight.modes.iter().find(|&&m| m >= n_m) {
        return Err(Error::OutOfRange(format!("flight `{}` uses mode {m}", flight.id)));
    }
    let values = (1..flight.len())
        .map(|t| smm_step(flight, t, mode_transitions, rates))
        .collect();
    Ok(ScoreSeries::from_values(flight.id.clone(), Method::Smm, values))
}
