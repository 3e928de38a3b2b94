//! Anomaly scores from filter traces.
//!
//! The KL score compares, at every step, the predicted phase distribution with
//! the filtered one; the log-likelihood score looks at `log l_t` instead. Both
//! are reduced to one number per flight by the mean squared deviation of the
//! per-step series, so isolated spikes dominate the summary.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{mkad_score, smm_score, var_baseline_score, MkadConfig};
use crate::error::{Error, Result};
use crate::flight::FlightRecord;
use crate::inference::{forward_filter, FilterTrace, PhaseDistribution};
use crate::model::ModelParams;

/// Floor applied to the second argument of [`kl_divergence`].
pub const KL_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// KL divergence between predicted and filtered phase distributions.
    Kl,
    /// Step log-likelihood of the full model.
    Ll,
    /// Residual norm of a single pooled VAR.
    Var,
    /// Log-probability of modes and durations only.
    Smm,
    /// Multiple-kernel one-class detector.
    Mkad,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Kl, Method::Ll, Method::Var, Method::Smm, Method::Mkad];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Kl => "kl",
            Method::Ll => "ll",
            Method::Var => "var",
            Method::Smm => "smm",
            Method::Mkad => "mkad",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Usage(format!("unknown method `{s}` (expected kl, ll, var, smm or mkad)")))
    }
}

/// Per-step values of one detector on one flight plus their summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSeries {
    pub flight_id: String,
    pub method: Method,
    /// Per-step values for steps `1..T`; empty for scalar-only detectors.
    pub values: Vec<f64>,
    pub summary: f64,
}

impl ScoreSeries {
    pub fn from_values(flight_id: impl Into<String>, method: Method, values: Vec<f64>) -> Self {
        let summary = variance_summary(&values);
        ScoreSeries {
            flight_id: flight_id.into(),
            method,
            values,
            summary,
        }
    }

    /// Square root of the summary (the standard deviation when the summary is a variance).
    pub fn summary_sqrt(&self) -> f64 {
        self.summary.max(0.0).sqrt()
    }
}

/// `(1/n) sum (v - mean)^2`; zero for an empty series.
pub fn variance_summary(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

pub(crate) fn kl_slices(p: &[f64], q: &[f64]) -> f64 {
    let d: f64 = p
        .iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi.max(KL_FLOOR)).ln())
        .sum();
    d.max(0.0)
}

/// `KL(p || q) = sum p_i ln(p_i / q_i)` with `q` floored at [`KL_FLOOR`].
pub fn kl_divergence(p: &PhaseDistribution, q: &PhaseDistribution) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Dimension(format!("KL between lengths {} and {}", p.len(), q.len())));
    }
    Ok(kl_slices(p.probs(), q.probs()))
}

/// `D_t = KL(prior_t || posterior_t)` for every step of the trace.
pub fn score_kl(flight_id: &str, trace: &FilterTrace) -> ScoreSeries {
    let values = trace
        .priors
        .iter()
        .zip(&trace.posteriors)
        .map(|(p, q)| kl_slices(p.probs(), q.probs()))
        .collect();
    ScoreSeries::from_values(flight_id, Method::Kl, values)
}

/// Per-step `log l_t` of the trace.
pub fn score_ll(flight_id: &str, trace: &FilterTrace) -> ScoreSeries {
    ScoreSeries::from_values(flight_id, Method::Ll, trace.step_loglik.clone())
}

/// Everything a per-flight detector needs from training.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoringModel {
    pub params: ModelParams,
    /// Pooled VAR matrix for the residual baseline, if it was fitted.
    pub var_matrix: Option<DMatrix<f64>>,
}

/// Scores one flight with a per-flight detector. MKAD needs the whole dataset;
/// use [`score_dataset`] for it.
pub fn score_flight(flight: &FlightRecord, method: Method, model: &ScoringModel) -> Result<ScoreSeries> {
    match method {
        Method::Kl => Ok(score_kl(&flight.id, &forward_filter(flight, &model.params)?)),
        Method::Ll => Ok(score_ll(&flight.id, &forward_filter(flight, &model.params)?)),
        Method::Var => {
            let a = model
                .var_matrix
                .as_ref()
                .ok_or_else(|| Error::Usage("model has no VAR baseline matrix".into()))?;
            var_baseline_score(flight, a)
        }
        Method::Smm => smm_score(flight, &model.params.mode_transitions, &model.params.duration_rates),
        Method::Mkad => Err(Error::Usage("mkad scores a whole dataset, not a single flight".into())),
    }
}

/// Scores every flight, in input order. Per-flight detectors run in parallel.
pub fn score_dataset(
    flights: &[FlightRecord],
    method: Method,
    model: &ScoringModel,
    mkad: &MkadConfig,
) -> Result<Vec<ScoreSeries>> {
    if method == Method::Mkad {
        return Ok(mkad_score(flights, mkad)?.scores);
    }
    flights.par_iter().map(|f| score_flight(f, method, model)).collect()
}

/// Flight ids ordered by decreasing summary (ties by id), truncated to `top_k`.
pub fn rank_flights(scores: &[ScoreSeries], top_k: Option<usize>) -> Result<Vec<String>> {
    if let Some(first) = scores.first() {
        if scores.iter().any(|s| s.method != first.method) {
            return Err(Error::Usage("cannot rank scores of different methods together".into()));
        }
    }
    let mut order: Vec<&ScoreSeries> = scores.iter().collect();
    order.sort_by(|a, b| b.summary.total_cmp(&a.summary).then_with(|| a.flight_id.cmp(&b.flight_id)));
    let k = top_k.unwrap_or(order.len()).min(order.len());
    Ok(order[..k].iter().map(|s| s.flight_id.clone()).collect())
}

/// Writes `flight_id,method,summary,n_steps,summary_sqrt`, one row per flight.
pub fn write_scores_csv<W: Write>(scores: &[ScoreSeries], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["flight_id", "method", "summary", "n_steps", "summary_sqrt"])?;
    for s in scores {
        w.write_record([
            s.flight_id.clone(),
            s.method.to_string(),
            s.summary.to_string(),
            s.values.len().to_string(),
            s.summary_sqrt().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `flight_id,method,t,value`, one row per scored step.
pub fn write_steps_csv<W: Write>(scores: &[ScoreSeries], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["flight_id", "method", "t", "value"])?;
    for s in scores {
        for (k, v) in s.values.iter().enumerate() {
            w.write_record([s.flight_id.clone(), s.method.to_string(), (k + 1).to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
