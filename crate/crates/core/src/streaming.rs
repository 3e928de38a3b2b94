//! Row-at-a-time scoring for monitoring a flight while it is recorded.
//!
//! The KL and VAR scores at step `t` only need rows up to `t`: whether the
//! countdown expired before `t` is visible as a mode change. The LL and SMM
//! scores also contain the log-probability of the duration drawn on entering a
//! mode, which is only known once that mode's run ends, so their values are
//! released run by run. Released values are bit-identical to batch scoring of
//! the same rows, with durations derived from the observed modes. A record
//! straight from the sampler may carry a longer true countdown for its final,
//! truncated run, which no stream can see.

use nalgebra::DVector;

use crate::detection::{kl_slices, Method, ScoreSeries, ScoringModel};
use crate::error::{Error, Result};
use crate::inference::{phase_update, predict_prior_expired, PhaseDistribution};
use crate::model::{duration_logprob_unchecked, mode_logprob_unchecked};

struct Pending {
    t: usize,
    prev_mode: usize,
    mode: usize,
    phase_ll: f64,
}

/// Incremental scorer for one flight. Feed rows with [`push`](Self::push) and
/// collect the tail with [`finish`](Self::finish).
pub struct StreamingScorer<'m> {
    flight_id: String,
    method: Method,
    model: &'m ScoringModel,
    t: usize,
    prev: Option<(usize, DVector<f64>)>,
    posterior: PhaseDistribution,
    // steps of the current run whose duration term is still unknown
    pending: Vec<Pending>,
    run_start: usize,
    values: Vec<f64>,
}

impl<'m> StreamingScorer<'m> {
    pub fn new(flight_id: impl Into<String>, method: Method, model: &'m ScoringModel) -> Result<Self> {
        match method {
            Method::Mkad => {
                return Err(Error::Usage("mkad compares whole flights and cannot be streamed".into()));
            }
            Method::Var if model.var_matrix.is_none() => {
                return Err(Error::Usage("model file has no VAR baseline matrix".into()));
            }
            _ => {}
        }
        Ok(StreamingScorer {
            flight_id: flight_id.into(),
            method,
            model,
            t: 0,
            prev: None,
            posterior: PhaseDistribution::uniform(model.params.n_phases()),
            pending: Vec::new(),
            run_start: 0,
            values: Vec::new(),
        })
    }

    /// Number of rows consumed so far.
    pub fn rows(&self) -> usize {
        self.t
    }

    /// Consumes the row at the next time step and returns the `(t, value)`
    /// pairs that became final.
    pub fn push(&mut self, mode: usize, sensors: DVector<f64>) -> Result<Vec<(usize, f64)>> {
        let params = &self.model.params;
        let t = self.t;
        if mode >= params.n_modes() {
            return Err(Error::OutOfRange(format!("mode {mode} at t={t}")));
        }
        if sensors.len() != params.n_sensors() {
            return Err(Error::Dimension(format!(
                "row t={t} has {} sensors, model expects {}",
                sensors.len(),
                params.n_sensors()
            )));
        }
        let Some((prev_mode, prev_y)) = self.prev.take() else {
            self.prev = Some((mode, sensors));
            self.t = 1;
            return Ok(Vec::new());
        };
        let expired = mode != prev_mode;
        let start = self.values.len();
        if expired {
            self.close_run(t)?;
        }
        match self.method {
            Method::Kl => {
                let prior = predict_prior_expired(&self.posterior, expired, mode, params);
                let (post, _) = phase_update(&prior, &prev_y, &sensors, params, t)?;
                let d_prev = if expired { 1 } else { 2 };
                if !mode_logprob_unchecked(mode, prev_mode, d_prev, &params.mode_transitions).is_finite() {
                    return Err(Error::DegenerateEvidence { t });
                }
                self.values.push(kl_slices(prior.probs(), post.probs()));
                self.posterior = post;
            }
            Method::Var => {
                let a = self.model.var_matrix.as_ref().expect("checked in new");
                self.values.push((&sensors - a * &prev_y).norm());
            }
            Method::Ll | Method::Smm => {
                let phase_ll = if self.method == Method::Ll {
                    let prior = predict_prior_expired(&self.posterior, expired, mode, params);
                    let (post, ll) = phase_update(&prior, &prev_y, &sensors, params, t)?;
                    self.posterior = post;
                    ll
                } else {
                    0.0
                };
                self.pending.push(Pending {
                    t,
                    prev_mode,
                    mode,
                    phase_ll,
                });
            }
            Method::Mkad => unreachable!("rejected in new"),
        }
        self.prev = Some((mode, sensors));
        self.t += 1;
        Ok(self.released_since(start))
    }

    /// Ends the flight, releasing the values of the last run.
    pub fn finish(mut self) -> Result<(Vec<(usize, f64)>, ScoreSeries)> {
        let start = self.values.len();
        let end = self.t;
        self.close_run(end)?;
        let tail = self.released_since(start);
        Ok((tail, ScoreSeries::from_values(self.flight_id, self.method, self.values)))
    }

    fn released_since(&self, start: usize) -> Vec<(usize, f64)> {
        self.values[start..]
            .iter()
            .enumerate()
            .map(|(k, &v)| (start + k + 1, v))
            .collect()
    }

    /// Resolves the duration terms of the run occupying `run_start..end`.
    fn close_run(&mut self, end: usize) -> Result<()> {
        let params = &self.model.params;
        let len = (end - self.run_start) as u32;
        for p in self.pending.drain(..) {
            let d = len - (p.t - self.run_start) as u32;
            let d_prev = if p.t == self.run_start { 1 } else { d + 1 };
            let observed = mode_logprob_unchecked(p.mode, p.prev_mode, d_prev, &params.mode_transitions)
                + duration_logprob_unchecked(d, d_prev, params.duration_rates[p.mode]);
            let v = match self.method {
                Method::Ll => p.phase_ll + observed,
                _ => observed,
            };
            if self.method == Method::Ll && !v.is_finite() {
                return Err(Error::DegenerateEvidence { t: p.t });
            }
            self.values.push(v);
        }
        self.run_start = end;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::score_flight;
    use crate::flight::FlightRecord;
    use crate::model::{sample_flight, InitialState, ModelParams};
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> ScoringModel {
        let params = ModelParams {
            mode_transitions: DMatrix::from_row_slice(3, 3, &[0.0, 0.6, 0.4, 0.5, 0.0, 0.5, 0.9, 0.1, 0.0]),
            duration_rates: vec![2.0, 4.0, 1.0],
            phase_transitions: vec![
                DMatrix::from_row_slice(2, 2, &[0.8, 0.2, 0.3, 0.7]),
                DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]),
                DMatrix::from_row_slice(2, 2, &[0.1, 0.9, 0.9, 0.1]),
            ],
            var_matrices: vec![
                DMatrix::from_row_slice(2, 2, &[0.9, 0.0, 0.0, 0.5]),
                DMatrix::from_row_slice(2, 2, &[0.0, -0.7, 0.7, 0.0]),
            ],
        };
        ScoringModel {
            params,
            var_matrix: Some(DMatrix::from_row_slice(2, 2, &[0.4, 0.0, 0.1, 0.3])),
        }
    }

    fn flight(seed: u64, len: usize, m: &ScoringModel) -> FlightRecord {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let init = InitialState {
            mode: Some(0),
            duration: Some(3),
            phase: Some(0),
            sensors: None,
        };
        let r = sample_flight(&m.params, len, &init, format!("s{seed}"), &mut rng).unwrap().record;
        FlightRecord::from_modes(r.id, r.modes, r.sensors).unwrap()
    }

    fn stream(f: &FlightRecord, method: Method, m: &ScoringModel) -> (Vec<(usize, f64)>, ScoreSeries) {
        let mut s = StreamingScorer::new(f.id.clone(), method, m).unwrap();
        let mut released = Vec::new();
        for t in 0..f.len() {
            released.extend(s.push(f.modes[t], f.sensors[t].clone()).unwrap());
        }
        let (tail, series) = s.finish().unwrap();
        released.extend(tail);
        (released, series)
    }

    #[test]
    fn matches_batch_bit_for_bit() {
        let m = model();
        for seed in 0..10 {
            let f = flight(seed, 40, &m);
            for method in [Method::Kl, Method::Ll, Method::Var, Method::Smm] {
                let batch = score_flight(&f, method, &m).unwrap();
                let (released, series) = stream(&f, method, &m);
                assert_eq!(series, batch, "{method} seed {seed}");
                let ts: Vec<usize> = released.iter().map(|r| r.0).collect();
                assert_eq!(ts, (1..f.len()).collect::<Vec<_>>());
                let vs: Vec<u64> = released.iter().map(|r| r.1.to_bits()).collect();
                let bs: Vec<u64> = batch.values.iter().map(|v| v.to_bits()).collect();
                assert_eq!(vs, bs);
            }
        }
    }

    #[test]
    fn kl_is_released_immediately() {
        let m = model();
        let f = flight(3, 12, &m);
        let mut s = StreamingScorer::new("x", Method::Kl, &m).unwrap();
        assert!(s.push(f.modes[0], f.sensors[0].clone()).unwrap().is_empty());
        for t in 1..f.len() {
            let out = s.push(f.modes[t], f.sensors[t].clone()).unwrap();
            assert_eq!(out.len(), 1);
            assert_eq!(out[0].0, t);
        }
    }

    #[test]
    fn ll_waits_for_run_end() {
        let m = model();
        let mut s = StreamingScorer::new("x", Method::Ll, &m).unwrap();
        let y = DVector::from_vec(vec![0.1, 0.2]);
        assert!(s.push(0, y.clone()).unwrap().is_empty());
        assert!(s.push(1, y.clone()).unwrap().is_empty());
        assert!(s.push(1, y.clone()).unwrap().is_empty());
        // leaving mode 1 settles its duration and releases steps 1 and 2
        let out = s.push(2, y.clone()).unwrap();
        assert_eq!(out.iter().map(|r| r.0).collect::<Vec<_>>(), vec![1, 2]);
        let (tail, series) = s.finish().unwrap();
        assert_eq!(tail.len(), 1);
        assert_eq!(series.values.len(), 3);
    }

    #[test]
    fn rejects_bad_rows_and_methods() {
        let m = model();
        assert!(matches!(StreamingScorer::new("x", Method::Mkad, &m), Err(Error::Usage(_))));
        let no_var = ScoringModel {
            params: m.params.clone(),
            var_matrix: None,
        };
        assert!(matches!(StreamingScorer::new("x", Method::Var, &no_var), Err(Error::Usage(_))));
        let mut s = StreamingScorer::new("x", Method::Kl, &m).unwrap();
        assert!(matches!(s.push(7, DVector::zeros(2)), Err(Error::OutOfRange(_))));
        assert!(matches!(s.push(0, DVector::zeros(3)), Err(Error::Dimension(_))));
    }

    #[test]
    fn empty_and_single_row_flights() {
        let m = model();
        let (tail, series) = StreamingScorer::new("x", Method::Ll, &m).unwrap().finish().unwrap();
        assert!(tail.is_empty() && series.values.is_empty());
        let mut s = StreamingScorer::new("x", Method::Smm, &m).unwrap();
        s.push(1, DVector::zeros(2)).unwrap();
        assert!(s.finish().unwrap().1.values.is_empty());
    }
}
