//! Exact inference over the hidden phase chain.
//!
//! Durations, modes and sensors are all observed, so the only latent variable
//! is the phase and every message is a vector over `n_x` phases. The first
//! frame of a flight is conditioning context: its phase is uniform and its
//! observations are not scored. Step `t` (zero-based, `t >= 1`) mixes the
//! previous filtered distribution through the phase transition selected by the
//! observed countdown `d_{t-1}` and mode `m_t`, then weighs in the VAR emission
//! of `y_t` given `y_{t-1}` in log space.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flight::FlightRecord;
use crate::model::{duration_logprob_unchecked, emission_logprob_unchecked, mode_logprob_unchecked, ModelParams};

const NORM_TOL: f64 = 1e-10;

/// Probability vector over phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDistribution(Vec<f64>);

impl PhaseDistribution {
    pub fn uniform(n_x: usize) -> Self {
        PhaseDistribution(vec![1.0 / n_x as f64; n_x])
    }

    /// Wraps a vector after checking it is non-negative and sums to one.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        let sum: f64 = probs.iter().sum();
        if probs.is_empty() || probs.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidParam(format!("not a distribution: {probs:?}")));
        }
        Ok(PhaseDistribution(probs))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Most probable phase, lowest id on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate() {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }
}

/// Output of [`forward_filter`]. Vectors are indexed by step `t = 1..T`
/// (entry `k` holds step `k + 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct FilterTrace {
    /// Filtered distribution of the first frame (uniform).
    pub initial: PhaseDistribution,
    /// One-step-ahead predictions `p(x_t | F_{1:t-1})`.
    pub priors: Vec<PhaseDistribution>,
    /// Filtered distributions `p(x_t | F_{1:t})`.
    pub posteriors: Vec<PhaseDistribution>,
    /// `log l_t`, the log-likelihood of frame `t` given all earlier frames.
    pub step_loglik: Vec<f64>,
    pub total_loglik: f64,
}

impl FilterTrace {
    /// Number of scored steps (`T - 1`, or 0 for empty flights).
    pub fn len(&self) -> usize {
        self.priors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.priors.is_empty()
    }

    /// Writes `t,loglik,prior_1..prior_n,post_1..post_n` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let n_x = self.initial.len();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string(), "loglik".to_string()];
        header.extend((1..=n_x).map(|i| format!("prior_{i}")));
        header.extend((1..=n_x).map(|i| format!("post_{i}")));
        w.write_record(&header)?;
        for k in 0..self.len() {
            let mut row = vec![(k + 1).to_string(), self.step_loglik[k].to_string()];
            row.extend(self.priors[k].probs().iter().map(|p| p.to_string()));
            row.extend(self.posteriors[k].probs().iter().map(|p| p.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Observed quantities entering one filtering step.
#[derive(Debug, Clone, Copy)]
pub struct StepObservation<'a> {
    pub prev_mode: usize,
    pub prev_duration: u32,
    pub mode: usize,
    pub duration: u32,
    pub prev_sensors: &'a DVector<f64>,
    pub sensors: &'a DVector<f64>,
}

pub(crate) fn predict_prior_expired(
    posterior: &PhaseDistribution,
    expired: bool,
    next_mode: usize,
    params: &ModelParams,
) -> PhaseDistribution {
    if !expired {
        return posterior.clone();
    }
    let px = &params.phase_transitions[next_mode];
    let n_x = posterior.len();
    let mut prior = vec![0.0; n_x];
    for (i, &p) in posterior.probs().iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        for (j, slot) in prior.iter_mut().enumerate() {
            *slot += p * px[(i, j)];
        }
    }
    PhaseDistribution(prior)
}

/// One-step-ahead phase prediction from the filtered distribution at `t`.
///
/// While the countdown runs (`prev_duration > 1`) the phase is frozen and the
/// prior equals the posterior. On expiry the posterior is mixed through the
/// phase transition matrix of the next (observed) mode.
pub fn predict_prior(
    posterior: &PhaseDistribution,
    prev_duration: u32,
    next_mode: usize,
    params: &ModelParams,
) -> Result<PhaseDistribution> {
    if next_mode >= params.n_modes() {
        return Err(Error::OutOfRange(format!("mode {next_mode}")));
    }
    if posterior.len() != params.n_phases() {
        return Err(Error::Dimension("posterior length differs from n_x".into()));
    }
    Ok(predict_prior_expired(posterior, prev_duration == 1, next_mode, params))
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Phase-dependent half of the update: weights the prior by the emission
/// density and normalizes. Returns the posterior and the log normalizer.
pub(crate) fn phase_update(
    prior: &PhaseDistribution,
    prev_y: &DVector<f64>,
    y: &DVector<f64>,
    params: &ModelParams,
    t: usize,
) -> Result<(PhaseDistribution, f64)> {
    let log_joint: Vec<f64> = prior
        .probs()
        .iter()
        .zip(&params.var_matrices)
        .map(|(&p, a)| {
            if p == 0.0 {
                f64::NEG_INFINITY
            } else {
                p.ln() + emission_logprob_unchecked(y, prev_y, a)
            }
        })
        .collect();
    let norm = log_sum_exp(&log_joint);
    if !norm.is_finite() {
        return Err(Error::DegenerateEvidence { t });
    }
    let post = log_joint.iter().map(|&lj| (lj - norm).exp()).collect();
    Ok((PhaseDistribution(post), norm))
}

/// `log p(m_t | m_{t-1}, d_{t-1}) + log p(d_t | m_t, d_{t-1})`; independent of the phase.
pub(crate) fn observed_logprob(step: &StepObservation<'_>, params: &ModelParams) -> f64 {
    mode_logprob_unchecked(step.mode, step.prev_mode, step.prev_duration, &params.mode_transitions)
        + duration_logprob_unchecked(step.duration, step.prev_duration, params.duration_rates[step.mode])
}

/// Filtered distribution at `t` and the step log-likelihood `log l_t`.
pub fn update_posterior(
    prior: &PhaseDistribution,
    step: &StepObservation<'_>,
    params: &ModelParams,
    t: usize,
) -> Result<(PhaseDistribution, f64)> {
    if step.mode >= params.n_modes() || step.prev_mode >= params.n_modes() {
        return Err(Error::OutOfRange(format!("mode at t={t}")));
    }
    let n_y = params.n_sensors();
    if step.sensors.len() != n_y || step.prev_sensors.len() != n_y {
        return Err(Error::Dimension(format!("sensor width at t={t}")));
    }
    let (post, phase_ll) = phase_update(prior, step.prev_sensors, step.sensors, params, t)?;
    let log_l = phase_ll + observed_logprob(step, params);
    if !log_l.is_finite() {
        return Err(Error::DegenerateEvidence { t });
    }
    Ok((post, log_l))
}

fn check_compatible(flight: &FlightRecord, params: &ModelParams) -> Result<()> {
    if let Some(n_y) = flight.n_sensors() {
        if n_y != params.n_sensors() {
            return Err(Error::Dimension(format!(
                "flight `{}` has {} sensors, model expects {}",
                flight.id,
                n_y,
                params.n_sensors()
            )));
        }
    }
    if let Some(&m) = flight.modes.iter().find(|&&m| m >= params.n_modes()) {
        return Err(Error::OutOfRange(format!("flight `{}` uses mode {m}", flight.id)));
    }
    Ok(())
}

/// Runs the forward recursion over one flight.
pub fn forward_filter(flight: &FlightRecord, params: &ModelParams) -> Result<FilterTrace> {
    check_compatible(flight, params)?;
    let n_x = params.n_phases();
    let t_len = flight.len();
    let steps = t_len.saturating_sub(1);
    let mut trace = FilterTrace {
        initial: PhaseDistribution::uniform(n_x),
        priors: Vec::with_capacity(steps),
        posteriors: Vec::with_capacity(steps),
        step_loglik: Vec::with_capacity(steps),
        total_loglik: 0.0,
    };
    let mut post = trace.initial.clone();
    for t in 1..t_len {
        let prior = predict_prior_expired(&post, flight.durations[t - 1] == 1, flight.modes[t], params);
        let step = StepObservation {
            prev_mode: flight.modes[t - 1],
            prev_duration: flight.durations[t - 1],
            mode: flight.modes[t],
            duration: flight.durations[t],
            prev_sensors: &flight.sensors[t - 1],
            sensors: &flight.sensors[t],
        };
        let (next, log_l) = update_posterior(&prior, &step, params, t)?;
        trace.total_loglik += log_l;
        trace.step_loglik.push(log_l);
        trace.priors.push(prior);
        trace.posteriors.push(next.clone());
        post = next;
    }
    Ok(trace)
}

/// Smoothed phase marginals `p(x_t | F)` (length `T`) and pairwise joints
/// `p(x_t, x_{t+1} | F)` (length `T - 1`, entry `(i, j)` for `x_t = i, x_{t+1} = j`).
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedPhases {
    pub marginals: Vec<PhaseDistribution>,
    pub pairwise: Vec<DMatrix<f64>>,
}

/// Backward pass over a forward trace.
///
/// Uses `p(x_t | x_{t+1}, F) = p(x_t | F_{1:t}) T(x_t, x_{t+1}) / p(x_{t+1} | F_{1:t})`,
/// so emissions do not need to be re-evaluated.
pub fn backward_smooth(flight: &FlightRecord, params: &ModelParams, trace: &FilterTrace) -> Result<SmoothedPhases> {
    let t_len = flight.len();
    if trace.len() != t_len.saturating_sub(1) {
        return Err(Error::Dimension("trace does not match flight length".into()));
    }
    if t_len == 0 {
        return Ok(SmoothedPhases {
            marginals: Vec::new(),
            pairwise: Vec::new(),
        });
    }
    let n_x = params.n_phases();
    let filtered = |t: usize| -> &PhaseDistribution {
        if t == 0 {
            &trace.initial
        } else {
            &trace.posteriors[t - 1]
        }
    };

    let mut marginals = vec![PhaseDistribution(Vec::new()); t_len];
    let mut pairwise = vec![DMatrix::zeros(n_x, n_x); t_len - 1];
    marginals[t_len - 1] = filtered(t_len - 1).clone();

    for t in (0..t_len - 1).rev() {
        let alpha = filtered(t).probs();
        let prior = trace.priors[t].probs();
        let next = marginals[t + 1].probs();
        let expired = flight.durations[t] == 1;
        let px = &params.phase_transitions[flight.modes[t + 1]];
        let xi = &mut pairwise[t];
        let mut gamma = vec![0.0; n_x];
        for j in 0..n_x {
            if prior[j] == 0.0 || next[j] == 0.0 {
                continue;
            }
            if expired {
                // alpha_i px_ij <= prior_j, so the share is at most one even when prior_j is subnormal
                for i in 0..n_x {
                    let v = (alpha[i] * px[(i, j)] / prior[j]).min(1.0) * next[j];
                    xi[(i, j)] = v;
                    gamma[i] += v;
                }
            } else {
                // the prior is the filtered distribution itself
                xi[(j, j)] = next[j];
                gamma[j] += next[j];
            }
        }
        marginals[t] = PhaseDistribution(gamma);
    }
    Ok(SmoothedPhases { marginals, pairwise })
}

/// Most probable phase path and its joint log-probability
/// `log p(x_{1:T}, F_{2:T} | F_1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ViterbiPath {
    pub phases: Vec<usize>,
    pub log_prob: f64,
}

/// Max-product decoding of the phase path. Ties go to the lowest phase id.
pub fn viterbi_phases(flight: &FlightRecord, params: &ModelParams) -> Result<ViterbiPath> {
    check_compatible(flight, params)?;
    let t_len = flight.len();
    let n_x = params.n_phases();
    if t_len == 0 {
        return Ok(ViterbiPath {
            phases: Vec::new(),
            log_prob: 0.0,
        });
    }
    let mut score = vec![-(n_x as f64).ln(); n_x];
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(t_len - 1);
    for t in 1..t_len {
        let expired = flight.durations[t - 1] == 1;
        let px = &params.phase_transitions[flight.modes[t]];
        let step = StepObservation {
            prev_mode: flight.modes[t - 1],
            prev_duration: flight.durations[t - 1],
            mode: flight.modes[t],
            duration: flight.durations[t],
            prev_sensors: &flight.sensors[t - 1],
            sensors: &flight.sensors[t],
        };
        let observed = observed_logprob(&step, params);
        let mut next = vec![f64::NEG_INFINITY; n_x];
        let mut ptr = vec![0usize; n_x];
        for j in 0..n_x {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for i in 0..n_x {
                let trans = if expired {
                    px[(i, j)].ln()
                } else if i == j {
                    0.0
                } else {
                    f64::NEG_INFINITY
                };
                let cand = score[i] + trans;
                if cand > best {
                    best = cand;
                    arg = i;
                }
            }
            let emission = emission_logprob_unchecked(&flight.sensors[t], &flight.sensors[t - 1], &params.var_matrices[j]);
            next[j] = best + emission + observed;
            ptr[j] = arg;
        }
        score = next;
        back.push(ptr);
    }
    let mut last = 0;
    for j in 1..n_x {
        if score[j] > score[last] {
            last = j;
        }
    }
    let log_prob = score[last];
    let mut phases = vec![0usize; t_len];
    phases[t_len - 1] = last;
    for t in (1..t_len).rev() {
        phases[t - 1] = back[t - 1][phases[t]];
    }
    Ok(ViterbiPath { phases, log_prob })
}
