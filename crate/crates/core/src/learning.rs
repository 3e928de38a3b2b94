//! Expectation-maximization for the model parameters.
//!
//! Mode transitions and duration rates depend only on observed variables and
//! are estimated once, in closed form. EM then alternates between smoothing
//! the hidden phases of every flight (E-step) and re-estimating the per-mode
//! phase transition matrices and per-phase VAR matrices (M-step).

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flight::FlightRecord;
use crate::inference::{backward_smooth, forward_filter, SmoothedPhases};
use crate::linalg::{spectral_radius, tsqr_solve, Panel, DEFAULT_RIDGE};
use crate::model::{sample_flat_dirichlet, ModelParams, PROB_SMOOTHING, RATE_FLOOR};

/// How the smoothed phase probabilities weight the VAR regression rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VarWeighting {
    /// Rows scaled by `sqrt(w_t)`, so each residual enters the loss with weight `w_t`.
    #[default]
    Responsibility,
    /// Rows scaled by `w_t`, so each residual enters the loss with weight `w_t^2`.
    Squared,
}

impl VarWeighting {
    fn row_scale(self, w: f64) -> f64 {
        match self {
            VarWeighting::Responsibility => w.sqrt(),
            VarWeighting::Squared => w,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    pub max_iters: usize,
    /// Stop once the relative log-likelihood improvement falls below this.
    pub rel_tol: f64,
    pub n_phases: usize,
    pub seed: u64,
    pub restarts: usize,
    /// Ridge used only when a VAR design turns out rank deficient.
    pub ridge: f64,
    pub weighting: VarWeighting,
    /// Length of the random segments used to initialize the VAR matrices.
    pub init_segment: usize,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            max_iters: 100,
            rel_tol: 1e-6,
            n_phases: 3,
            seed: 0,
            restarts: 3,
            ridge: DEFAULT_RIDGE,
            weighting: VarWeighting::Responsibility,
            init_segment: 20,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_phases == 0 {
            return Err(Error::InvalidParam("n_phases must be positive".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::InvalidParam("rel_tol must be positive".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidParam("restarts must be at least 1".into()));
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::InvalidParam("ridge must be non-negative".into()));
        }
        if self.init_segment < 2 {
            return Err(Error::InvalidParam("init_segment must be at least 2".into()));
        }
        Ok(())
    }
}

/// Conditions noticed while estimating parameters. None of them stop learning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearningFlag {
    /// Only one mode exists; its transition row is the degenerate `[[0]]`.
    SingleMode,
    /// No transitions out of this mode were observed; its row is uniform off the diagonal.
    UnobservedMode { mode: usize },
    /// No duration drawn on entering this mode; the rate fell back to a pooled estimate.
    NoDurationEvidence { mode: usize },
    /// No countdown expiry leads into this mode; its phase matrix is uniform.
    NoPhaseEvidence { mode: usize },
    /// The phase had zero total weight; its VAR matrix was kept.
    StarvedPhase { phase: usize },
    /// The phase's VAR design was rank deficient and solved with a ridge.
    RidgeFallback { phase: usize },
    /// Learned VAR matrix with spectral radius at least one.
    UnstableVar { phase: usize, radius: f64 },
}

/// Closed-form estimates of the parameters that involve only observed variables.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedParams {
    pub mode_transitions: DMatrix<f64>,
    pub duration_rates: Vec<f64>,
    pub flags: Vec<LearningFlag>,
}

/// Mode transition matrix from changes at countdown expiry, and shifted-Poisson
/// rates from the durations drawn on entering each mode.
///
/// The rate of mode `m` is the mean of those durations minus one, floored at
/// [`RATE_FLOOR`]. Durations that start a flight are not draws from the
/// duration law and are only used when a mode has no other evidence.
pub fn estimate_observed_params(flights: &[FlightRecord], n_modes: usize) -> Result<ObservedParams> {
    if n_modes == 0 {
        return Err(Error::InvalidParam("n_modes must be positive".into()));
    }
    let mut flags = Vec::new();
    let mut counts = DMatrix::<f64>::zeros(n_modes, n_modes);
    let mut dur_sum = vec![0.0; n_modes];
    let mut dur_n = vec![0usize; n_modes];
    let mut first_sum = vec![0.0; n_modes];
    let mut first_n = vec![0usize; n_modes];
    for f in flights {
        if let Some(&m) = f.modes.iter().find(|&&m| m >= n_modes) {
            return Err(Error::OutOfRange(format!("flight `{}` uses mode {m}", f.id)));
        }
        if let (Some(&m0), Some(&d0)) = (f.modes.first(), f.durations.first()) {
            first_sum[m0] += f64::from(d0);
            first_n[m0] += 1;
        }
        for t in 1..f.len() {
            if f.durations[t - 1] != 1 {
                continue;
            }
            let (a, b) = (f.modes[t - 1], f.modes[t]);
            if a != b {
                counts[(a, b)] += 1.0;
            }
            dur_sum[b] += f64::from(f.durations[t]);
            dur_n[b] += 1;
        }
    }

    let mut mode_transitions = DMatrix::<f64>::zeros(n_modes, n_modes);
    if n_modes == 1 {
        flags.push(LearningFlag::SingleMode);
    } else {
        for i in 0..n_modes {
            let observed: f64 = counts.row(i).sum();
            if observed == 0.0 {
                flags.push(LearningFlag::UnobservedMode { mode: i });
            }
            let total = observed + PROB_SMOOTHING * (n_modes - 1) as f64;
            for j in 0..n_modes {
                if i != j {
                    mode_transitions[(i, j)] = (counts[(i, j)] + PROB_SMOOTHING) / total;
                }
            }
        }
    }

    let pooled_n: usize = dur_n.iter().sum();
    let pooled = if pooled_n > 0 {
        dur_sum.iter().sum::<f64>() / pooled_n as f64
    } else {
        let n: usize = first_n.iter().sum();
        if n > 0 {
            first_sum.iter().sum::<f64>() / n as f64
        } else {
            2.0
        }
    };
    let duration_rates = (0..n_modes)
        .map(|m| {
            let mean = if dur_n[m] > 0 {
                dur_sum[m] / dur_n[m] as f64
            } else {
                flags.push(LearningFlag::NoDurationEvidence { mode: m });
                if first_n[m] > 0 {
                    first_sum[m] / first_n[m] as f64
                } else {
                    pooled
                }
            };
            (mean - 1.0).max(RATE_FLOOR)
        })
        .collect();

    Ok(ObservedParams {
        mode_transitions,
        duration_rates,
        flags,
    })
}

/// Smoothed phase posteriors for every flight plus the total log-likelihood.
#[derive(Debug, Clone)]
pub struct EStep {
    pub smoothed: Vec<SmoothedPhases>,
    pub loglik: f64,
}

/// Forward filtering and backward smoothing of each flight, in parallel.
pub fn e_step(flights: &[FlightRecord], params: &ModelParams) -> Result<EStep> {
    let per_flight: Vec<(SmoothedPhases, f64)> = flights
        .par_iter()
        .map(|f| {
            let trace = forward_filter(f, params)?;
            let smoothed = backward_smooth(f, params, &trace)?;
            Ok((smoothed, trace.total_loglik))
        })
        .collect::<Result<_>>()?;
    let mut loglik = 0.0;
    let mut smoothed = Vec::with_capacity(per_flight.len());
    for (s, ll) in per_flight {
        loglik += ll;
        smoothed.push(s);
    }
    Ok(EStep { smoothed, loglik })
}

/// Re-estimates one phase transition matrix per mode from the expected
/// transition counts at expiry steps leading into that mode.
pub fn m_step_phase(
    flights: &[FlightRecord],
    smoothed: &[SmoothedPhases],
    n_modes: usize,
    n_phases: usize,
) -> Result<(Vec<DMatrix<f64>>, Vec<LearningFlag>)> {
    if flights.len() != smoothed.len() {
        return Err(Error::Dimension("smoothed phases do not match flights".into()));
    }
    let mut counts = vec![DMatrix::<f64>::zeros(n_phases, n_phases); n_modes];
    let mut seen = vec![false; n_modes];
    for (f, s) in flights.iter().zip(smoothed) {
        if s.pairwise.len() != f.len().saturating_sub(1) {
            return Err(Error::Dimension(format!("pairwise joints of flight `{}`", f.id)));
        }
        for t in 0..s.pairwise.len() {
            if f.durations[t] == 1 {
                let m = f.modes[t + 1];
                counts[m] += &s.pairwise[t];
                seen[m] = true;
            }
        }
    }
    let mut flags = Vec::new();
    let matrices = counts
        .into_iter()
        .enumerate()
        .map(|(m, c)| {
            if !seen[m] {
                flags.push(LearningFlag::NoPhaseEvidence { mode: m });
                return DMatrix::from_element(n_phases, n_phases, 1.0 / n_phases as f64);
            }
            let mut c = c.add_scalar(PROB_SMOOTHING);
            for mut row in c.row_iter_mut() {
                let s: f64 = row.sum();
                row /= s;
            }
            c
        })
        .collect();
    Ok((matrices, flags))
}

/// Builds the weighted regression panels of one phase, one panel per flight.
/// Row `t` (for `t >= 1`) regresses `y_t` on `y_{t-1}` scaled by the weighting of `weights[f][t]`.
fn var_panels(flights: &[FlightRecord], weights: &[Vec<f64>], weighting: VarWeighting) -> (Vec<Panel>, f64) {
    let mut total = 0.0;
    let panels = flights
        .iter()
        .zip(weights)
        .filter(|(f, _)| f.len() > 1)
        .map(|(f, w)| {
            let n_y = f.sensors[0].len();
            let rows = f.len() - 1;
            let mut design = DMatrix::zeros(rows, n_y);
            let mut response = DMatrix::zeros(rows, n_y);
            for t in 1..f.len() {
                total += w[t];
                let s = weighting.row_scale(w[t]);
                for j in 0..n_y {
                    design[(t - 1, j)] = s * f.sensors[t - 1][j];
                    response[(t - 1, j)] = s * f.sensors[t][j];
                }
            }
            Panel::new(design, response)
        })
        .collect();
    (panels, total)
}

/// Weighted least-squares update of each phase's VAR matrix.
///
/// Phase `x` solves `min_B sum_t w_t ||y_t - B^T y_{t-1}||^2` (or `w_t^2` with
/// [`VarWeighting::Squared`]) with `w_t = p(x_t = x | F)` and returns `A_x = B^T`.
pub fn m_step_var(
    flights: &[FlightRecord],
    marginals: &[Vec<DVector<f64>>],
    previous: &[DMatrix<f64>],
    ridge: f64,
    weighting: VarWeighting,
) -> Result<(Vec<DMatrix<f64>>, Vec<LearningFlag>)> {
    if flights.len() != marginals.len() {
        return Err(Error::Dimension("marginals do not match flights".into()));
    }
    let n_phases = previous.len();
    let mut flags = Vec::new();
    let mut out = Vec::with_capacity(n_phases);
    for x in 0..n_phases {
        let weights: Vec<Vec<f64>> = flights
            .iter()
            .zip(marginals)
            .map(|(f, m)| {
                if m.len() != f.len() {
                    return Err(Error::Dimension(format!("marginals of flight `{}`", f.id)));
                }
                Ok(m.iter().map(|g| g[x]).collect())
            })
            .collect::<Result<_>>()?;
        let (panels, total) = var_panels(flights, &weights, weighting);
        if panels.is_empty() || total <= f64::EPSILON {
            flags.push(LearningFlag::StarvedPhase { phase: x });
            out.push(previous[x].clone());
            continue;
        }
        let sol = tsqr_solve(&panels, ridge)?;
        if sol.ridge_applied {
            flags.push(LearningFlag::RidgeFallback { phase: x });
        }
        out.push(sol.coefficients.transpose());
    }
    Ok((out, flags))
}

fn marginals_as_vectors(smoothed: &[SmoothedPhases]) -> Vec<Vec<DVector<f64>>> {
    smoothed
        .iter()
        .map(|s| s.marginals.iter().map(|d| DVector::from_column_slice(d.probs())).collect())
        .collect()
}

/// Random starting point: Dirichlet(1) phase rows and VAR matrices fitted by
/// OLS on random segment-to-phase assignments.
fn initial_params(
    flights: &[FlightRecord],
    observed: &ObservedParams,
    n_y: usize,
    config: &EmConfig,
    rng: &mut ChaCha8Rng,
) -> Result<ModelParams> {
    let n_x = config.n_phases;
    let n_m = observed.duration_rates.len();
    let phase_transitions = (0..n_m)
        .map(|_| {
            let mut m = DMatrix::zeros(n_x, n_x);
            for i in 0..n_x {
                for (j, p) in sample_flat_dirichlet(n_x, rng).into_iter().enumerate() {
                    m[(i, j)] = p;
                }
            }
            m
        })
        .collect();

    let assignments: Vec<Vec<usize>> = flights
        .iter()
        .map(|f| {
            let mut phase = 0;
            (0..f.len())
                .map(|t| {
                    if t % config.init_segment == 0 {
                        phase = rng.random_range(0..n_x);
                    }
                    phase
                })
                .collect()
        })
        .collect();
    let fallback = DMatrix::from_diagonal_element(n_y, n_y, 0.5);
    let mut var_matrices = Vec::with_capacity(n_x);
    for x in 0..n_x {
        let weights: Vec<Vec<f64>> = assignments
            .iter()
            .map(|a| a.iter().map(|&p| if p == x { 1.0 } else { 0.0 }).collect())
            .collect();
        let (panels, total) = var_panels(flights, &weights, VarWeighting::Responsibility);
        let a = if total > 0.0 {
            let ridge = if config.ridge > 0.0 { config.ridge } else { DEFAULT_RIDGE };
            tsqr_solve(&panels, ridge)?.coefficients.transpose()
        } else {
            fallback.clone()
        };
        var_matrices.push(a);
    }
    Ok(ModelParams {
        mode_transitions: observed.mode_transitions.clone(),
        duration_rates: observed.duration_rates.clone(),
        phase_transitions,
        var_matrices,
    })
}

/// Outcome of [`em_fit`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmReport {
    /// Log-likelihood of every parameter set visited by the winning restart;
    /// the last entry belongs to `params`.
    pub loglik_history: Vec<f64>,
    pub iterations_run: usize,
    pub converged: bool,
    pub params: ModelParams,
    pub best_restart: usize,
    /// Histories of all restarts, in order.
    pub restart_histories: Vec<Vec<f64>>,
    pub flags: Vec<LearningFlag>,
}

impl EmReport {
    pub fn final_loglik(&self) -> f64 {
        *self.loglik_history.last().expect("history always has the initial entry")
    }
}

struct RunOutcome {
    history: Vec<f64>,
    iterations: usize,
    converged: bool,
    params: ModelParams,
    flags: Vec<LearningFlag>,
}

fn run_em(flights: &[FlightRecord], mut params: ModelParams, config: &EmConfig) -> Result<RunOutcome> {
    let n_m = params.n_modes();
    let n_x = params.n_phases();
    let mut history = Vec::new();
    let mut flags = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let estep = e_step(flights, &params)?;
        if let Some(&prev) = history.last() {
            let improvement: f64 = (estep.loglik - prev) / f64::abs(prev).max(f64::MIN_POSITIVE);
            if improvement < config.rel_tol {
                converged = true;
            }
        }
        history.push(estep.loglik);
        if converged || iterations >= config.max_iters {
            break;
        }
        let (phase_transitions, phase_flags) = m_step_phase(flights, &estep.smoothed, n_m, n_x)?;
        let marginals = marginals_as_vectors(&estep.smoothed);
        let (var_matrices, var_flags) =
            m_step_var(flights, &marginals, &params.var_matrices, config.ridge, config.weighting)?;
        params.phase_transitions = phase_transitions;
        params.var_matrices = var_matrices;
        flags = phase_flags;
        flags.extend(var_flags);
        iterations += 1;
    }
    Ok(RunOutcome {
        history,
        iterations,
        converged,
        params,
        flags,
    })
}

/// Fits the model to `flights` with `n_modes` modes.
///
/// Each restart draws its own initialization from `config.seed`; the restart
/// with the highest final log-likelihood is returned.
pub fn em_fit(flights: &[FlightRecord], n_modes: usize, config: &EmConfig) -> Result<EmReport> {
    config.validate()?;
    let n_y = flights
        .iter()
        .find_map(|f| f.n_sensors())
        .ok_or_else(|| Error::InvalidParam("no observations to fit".into()))?;
    for f in flights {
        f.validate()?;
        if f.n_sensors().is_some_and(|n| n != n_y) {
            return Err(Error::Dimension(format!("flight `{}` sensor width", f.id)));
        }
    }
    let observed = estimate_observed_params(flights, n_modes)?;

    let mut best: Option<(usize, RunOutcome)> = None;
    let mut histories = Vec::with_capacity(config.restarts);
    for restart in 0..config.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(restart as u64);
        let init = initial_params(flights, &observed, n_y, config, &mut rng)?;
        let run = run_em(flights, init, config)?;
        histories.push(run.history.clone());
        let better = match &best {
            None => true,
            Some((_, b)) => run.history.last() > b.history.last(),
        };
        if better {
            best = Some((restart, run));
        }
    }
    let (best_restart, run) = best.expect("at least one restart");
    let mut flags = observed.flags.clone();
    flags.extend(run.flags);
    for (x, a) in run.params.var_matrices.iter().enumerate() {
        let radius = spectral_radius(a);
        if radius >= 1.0 {
            log::warn!("learned VAR matrix of phase {x} is unstable (spectral radius {radius:.4})");
            flags.push(LearningFlag::UnstableVar { phase: x, radius });
        }
    }
    Ok(EmReport {
        loglik_history: run.history,
        iterations_run: run.iterations,
        converged: run.converged,
        params: run.params,
        best_restart,
        restart_histories: histories,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn record(modes: Vec<usize>) -> FlightRecord {
        let n = modes.len();
        FlightRecord::from_modes("r", modes, vec![DVector::zeros(1); n]).unwrap()
    }

    #[test]
    fn single_mode_is_degenerate() {
        let obs = estimate_observed_params(&[record(vec![0; 10])], 1).unwrap();
        assert_eq!(obs.mode_transitions, DMatrix::zeros(1, 1));
        assert!(obs.flags.contains(&LearningFlag::SingleMode));
    }

    #[test]
    fn rate_is_mean_run_length_minus_one() {
        // runs of mode 1 of lengths 2 and 4, each entered at an expiry
        let obs = estimate_observed_params(&[record(vec![0, 1, 1, 0, 1, 1, 1, 1])], 2).unwrap();
        assert_relative_eq!(obs.duration_rates[1], 2.0, epsilon = 1e-12);
        let short = estimate_observed_params(&[record(vec![0, 1, 0, 1])], 2).unwrap();
        assert_eq!(short.duration_rates[1], RATE_FLOOR);
    }

    #[test]
    fn alternating_modes_give_permutation_matrix() {
        let obs = estimate_observed_params(&[record((0..20).map(|t| t % 2).collect())], 2).unwrap();
        assert_eq!(obs.mode_transitions, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
    }

    #[test]
    fn unobserved_mode_gets_uniform_row() {
        let obs = estimate_observed_params(&[record(vec![0, 0, 1, 1])], 3).unwrap();
        assert!(obs.flags.contains(&LearningFlag::UnobservedMode { mode: 2 }));
        assert_relative_eq!(obs.mode_transitions[(2, 0)], 0.5);
        assert_relative_eq!(obs.mode_transitions[(2, 1)], 0.5);
        assert_eq!(obs.mode_transitions[(2, 2)], 0.0);
    }

    #[test]
    fn phase_step_from_hand_set_joints() {
        let f = record(vec![0, 1, 1]);
        // durations [1, 2, 1]: only t=0 is an expiry, leading into mode 1
        let joints = vec![
            DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.2, 0.4]),
            DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5]),
        ];
        let smoothed = SmoothedPhases {
            marginals: vec![crate::inference::PhaseDistribution::uniform(2); 3],
            pairwise: joints,
        };
        let (px, flags) = m_step_phase(&[f], &[smoothed], 2, 2).unwrap();
        let e = PROB_SMOOTHING;
        assert_relative_eq!(px[1][(0, 0)], (0.3 + e) / (0.4 + 2.0 * e), epsilon = 1e-15);
        assert_relative_eq!(px[1][(1, 1)], (0.4 + e) / (0.6 + 2.0 * e), epsilon = 1e-15);
        assert!(flags.contains(&LearningFlag::NoPhaseEvidence { mode: 0 }));
        assert_relative_eq!(px[0][(0, 1)], 0.5);
    }

    #[test]
    fn identity_joints_give_identity() {
        let f = record(vec![0, 1, 0, 1]);
        let smoothed = SmoothedPhases {
            marginals: vec![crate::inference::PhaseDistribution::uniform(3); 4],
            pairwise: vec![DMatrix::identity(3, 3) / 3.0; 3],
        };
        let (px, _) = m_step_phase(&[f], &[smoothed], 2, 3).unwrap();
        for m in &px {
            assert!((m - DMatrix::identity(3, 3)).abs().max() < 1e-5);
        }
    }

    #[test]
    fn var_step_recovers_noiseless_system_and_flags_starvation() {
        let a_true = DMatrix::from_row_slice(2, 2, &[0.5, 0.2, -0.3, 0.8]);
        let mut ys = vec![DVector::from_vec(vec![1.0, -0.5])];
        for t in 1..50 {
            let kick = DVector::from_vec(vec![(t as f64).sin(), (t as f64 * 1.7).cos()]);
            let next = if t % 7 == 0 { kick } else { &a_true * &ys[t - 1] };
            ys.push(next);
        }
        // make the system exactly consistent: only keep exact transitions by zero weight elsewhere
        let f = FlightRecord::from_modes("v", vec![0; 50], ys).unwrap();
        let w: Vec<DVector<f64>> = (0..50)
            .map(|t| {
                let exact = t % 7 != 0;
                DVector::from_vec(vec![if exact { 1.0 } else { 0.0 }, 0.0])
            })
            .collect();
        let prev = vec![DMatrix::identity(2, 2) * 0.1, DMatrix::identity(2, 2) * 0.2];
        let (a, flags) = m_step_var(&[f], &[w], &prev, DEFAULT_RIDGE, VarWeighting::Responsibility).unwrap();
        assert!((&a[0] - &a_true).abs().max() < 1e-8);
        assert_eq!(a[1], prev[1]);
        assert_eq!(flags, vec![LearningFlag::StarvedPhase { phase: 1 }]);
    }

    #[test]
    fn max_iters_zero_returns_initialization() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let flights: Vec<FlightRecord> = (0..3)
            .map(|i| {
                let modes: Vec<usize> = (0..30).map(|t| (t / 5) % 2).collect();
                let ys = (0..30).map(|_| crate::model::sample_standard_normal(2, &mut rng)).collect();
                FlightRecord::from_modes(format!("f{i}"), modes, ys).unwrap()
            })
            .collect();
        let cfg = EmConfig {
            max_iters: 0,
            restarts: 1,
            ..EmConfig::default()
        };
        let report = em_fit(&flights, 2, &cfg).unwrap();
        assert_eq!(report.loglik_history.len(), 1);
        assert_eq!(report.iterations_run, 0);
        let again = em_fit(&flights, 2, &cfg).unwrap();
        assert_eq!(report.params, again.params);
        let trace_ll: f64 = flights.iter().map(|f| forward_filter(f, &report.params).unwrap().total_loglik).sum();
        assert_relative_eq!(report.final_loglik(), trace_ll, epsilon = 1e-9);
    }

    #[test]
    fn config_validation() {
        let bad = EmConfig {
            restarts: 0,
            ..EmConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = EmConfig {
            rel_tol: 0.0,
            ..EmConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
