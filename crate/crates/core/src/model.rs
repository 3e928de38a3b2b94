//! Conditional distributions of the semi-Markov switching VAR model and
//! ancestral sampling from it.
//!
//! Variables at step `t`: observed mode `m_t`, observed countdown `d_t`,
//! hidden phase `x_t` and sensor vector `y_t`. Durations follow a shifted
//! Poisson law with support `{1, 2, ...}` and sensor noise has identity
//! covariance.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flight::FlightRecord;
use crate::linalg::spectral_radius;

/// Natural-log probability, `<= 0` or `-inf`.
pub type LogProb = f64;

/// Additive constant applied to learned multinomial entries before normalization.
pub const PROB_SMOOTHING: f64 = 1e-6;
/// Lower bound on learned Poisson rates.
pub const RATE_FLOOR: f64 = 1e-3;

const ROW_TOL: f64 = 1e-12;

/// Full parameter set of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsRepr", into = "ParamsRepr")]
pub struct ModelParams {
    /// `n_m x n_m`, row-stochastic, zero diagonal.
    pub mode_transitions: DMatrix<f64>,
    /// Poisson rate per mode.
    pub duration_rates: Vec<f64>,
    /// One `n_x x n_x` row-stochastic matrix per mode.
    pub phase_transitions: Vec<DMatrix<f64>>,
    /// One `n_y x n_y` VAR transition matrix per phase.
    pub var_matrices: Vec<DMatrix<f64>>,
}

#[derive(Serialize, Deserialize)]
struct ParamsRepr {
    n_modes: usize,
    n_phases: usize,
    n_sensors: usize,
    mode_transitions: Vec<Vec<f64>>,
    duration_rates: Vec<f64>,
    phase_transitions: Vec<Vec<Vec<f64>>>,
    var_matrices: Vec<Vec<Vec<f64>>>,
}

pub(crate) fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>], ncols: usize) -> std::result::Result<DMatrix<f64>, String> {
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(format!("expected rows of length {ncols}"));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

impl From<ModelParams> for ParamsRepr {
    fn from(p: ModelParams) -> Self {
        ParamsRepr {
            n_modes: p.n_modes(),
            n_phases: p.n_phases(),
            n_sensors: p.n_sensors(),
            mode_transitions: matrix_rows(&p.mode_transitions),
            duration_rates: p.duration_rates,
            phase_transitions: p.phase_transitions.iter().map(matrix_rows).collect(),
            var_matrices: p.var_matrices.iter().map(matrix_rows).collect(),
        }
    }
}

impl TryFrom<ParamsRepr> for ModelParams {
    type Error = String;

    fn try_from(r: ParamsRepr) -> std::result::Result<Self, String> {
        let params = ModelParams {
            mode_transitions: matrix_from_rows(&r.mode_transitions, r.n_modes)?,
            duration_rates: r.duration_rates,
            phase_transitions: r
                .phase_transitions
                .iter()
                .map(|m| matrix_from_rows(m, r.n_phases))
                .collect::<std::result::Result<_, _>>()?,
            var_matrices: r
                .var_matrices
                .iter()
                .map(|m| matrix_from_rows(m, r.n_sensors))
                .collect::<std::result::Result<_, _>>()?,
        };
        params.validate().map_err(|e| e.to_string())?;
        Ok(params)
    }
}

fn check_stochastic_rows(m: &DMatrix<f64>, what: &str) -> Result<()> {
    for (i, row) in m.row_iter().enumerate() {
        if row.iter().any(|&p| !(0.0..=1.0 + ROW_TOL).contains(&p)) {
            return Err(Error::InvalidParam(format!("{what} row {i} has an entry outside [0,1]")));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_TOL {
            return Err(Error::InvalidParam(format!("{what} row {i} sums to {sum}")));
        }
    }
    Ok(())
}

impl ModelParams {
    pub fn n_modes(&self) -> usize {
        self.mode_transitions.nrows()
    }

    pub fn n_phases(&self) -> usize {
        self.var_matrices.len()
    }

    pub fn n_sensors(&self) -> usize {
        self.var_matrices.first().map_or(0, |a| a.nrows())
    }

    /// Checks shapes, stochasticity, the zero diagonal of the mode matrix and
    /// positivity of the rates. A single-mode model is allowed an all-zero
    /// `1 x 1` mode matrix since it has no other mode to move to.
    pub fn validate(&self) -> Result<()> {
        let n_m = self.n_modes();
        let n_x = self.n_phases();
        let n_y = self.n_sensors();
        if n_m == 0 || n_x == 0 || n_y == 0 {
            return Err(Error::InvalidParam("model dimensions must be positive".into()));
        }
        if self.mode_transitions.ncols() != n_m {
            return Err(Error::Dimension("mode transition matrix is not square".into()));
        }
        if self.duration_rates.len() != n_m || self.phase_transitions.len() != n_m {
            return Err(Error::Dimension("per-mode parameters do not match n_m".into()));
        }
        if (0..n_m).any(|i| self.mode_transitions[(i, i)] != 0.0) {
            return Err(Error::InvalidParam("mode transition diagonal must be zero".into()));
        }
        if n_m > 1 {
            check_stochastic_rows(&self.mode_transitions, "mode transition")?;
        } else if self.mode_transitions[(0, 0)] != 0.0 {
            return Err(Error::InvalidParam("single-mode transition matrix must be [[0]]".into()));
        }
        if let Some(bad) = self.duration_rates.iter().find(|&&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidParam(format!("duration rate {bad} must be positive")));
        }
        for (m, px) in self.phase_transitions.iter().enumerate() {
            if px.nrows() != n_x || px.ncols() != n_x {
                return Err(Error::Dimension(format!("phase transitions of mode {m} are not {n_x}x{n_x}")));
            }
            check_stochastic_rows(px, &format!("phase transition (mode {m})"))?;
        }
        for (x, a) in self.var_matrices.iter().enumerate() {
            if a.nrows() != n_y || a.ncols() != n_y {
                return Err(Error::Dimension(format!("VAR matrix of phase {x} is not {n_y}x{n_y}")));
            }
        }
        Ok(())
    }

    /// Phases whose VAR matrix has spectral radius `>= 1`.
    pub fn unstable_phases(&self) -> Vec<usize> {
        self.var_matrices
            .iter()
            .enumerate()
            .filter(|(_, a)| spectral_radius(a) >= 1.0)
            .map(|(x, _)| x)
            .collect()
    }

    fn check_mode(&self, m: usize) -> Result<()> {
        if m >= self.n_modes() {
            return Err(Error::OutOfRange(format!("mode {m} (n_m = {})", self.n_modes())));
        }
        Ok(())
    }

    fn check_phase(&self, x: usize) -> Result<()> {
        if x >= self.n_phases() {
            return Err(Error::OutOfRange(format!("phase {x} (n_x = {})", self.n_phases())));
        }
        Ok(())
    }
}

/// `log p(m_t | m_prev, d_prev)`.
pub fn mode_logprob(m_t: usize, m_prev: usize, d_prev: u32, params: &ModelParams) -> Result<LogProb> {
    params.check_mode(m_t)?;
    params.check_mode(m_prev)?;
    if d_prev == 0 {
        return Err(Error::InvalidParam("previous duration must be at least 1".into()));
    }
    Ok(mode_logprob_unchecked(m_t, m_prev, d_prev, &params.mode_transitions))
}

pub(crate) fn mode_logprob_unchecked(m_t: usize, m_prev: usize, d_prev: u32, pm: &DMatrix<f64>) -> LogProb {
    if d_prev > 1 {
        if m_t == m_prev {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    } else {
        pm[(m_prev, m_t)].ln()
    }
}

/// `log P(d = k)` for `d = 1 + Poisson(rate)`.
pub fn shifted_poisson_logpmf(k: u32, rate: f64) -> LogProb {
    if k == 0 {
        return f64::NEG_INFINITY;
    }
    let n = u64::from(k - 1);
    n as f64 * rate.ln() - rate - statrs::function::factorial::ln_factorial(n)
}

/// `log p(d_t | m_t, d_prev)`.
pub fn duration_logprob(d_t: u32, m_t: usize, d_prev: u32, rates: &[f64]) -> Result<LogProb> {
    let rate = *rates
        .get(m_t)
        .ok_or_else(|| Error::OutOfRange(format!("mode {m_t} has no duration rate")))?;
    if !(rate > 0.0) {
        return Err(Error::InvalidParam(format!("duration rate {rate} must be positive")));
    }
    if d_t == 0 || d_prev == 0 {
        return Err(Error::InvalidParam("durations must be at least 1".into()));
    }
    Ok(duration_logprob_unchecked(d_t, d_prev, rate))
}

pub(crate) fn duration_logprob_unchecked(d_t: u32, d_prev: u32, rate: f64) -> LogProb {
    if d_prev > 1 {
        if d_t + 1 == d_prev {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    } else {
        shifted_poisson_logpmf(d_t, rate)
    }
}

/// `log p(x_t | x_prev, m_t, d_prev)`. Self-transitions are allowed on expiry.
pub fn phase_logprob(x_t: usize, x_prev: usize, m_t: usize, d_prev: u32, params: &ModelParams) -> Result<LogProb> {
    params.check_phase(x_t)?;
    params.check_phase(x_prev)?;
    params.check_mode(m_t)?;
    Ok(if d_prev > 1 {
        if x_t == x_prev {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    } else {
        params.phase_transitions[m_t][(x_prev, x_t)].ln()
    })
}

/// Gaussian log-density of `y_t` around `a * y_prev` with identity covariance.
pub fn emission_logprob(y_t: &DVector<f64>, y_prev: &DVector<f64>, a: &DMatrix<f64>) -> Result<LogProb> {
    let n_y = y_t.len();
    if y_prev.len() != n_y || a.nrows() != n_y || a.ncols() != n_y {
        return Err(Error::Dimension(format!(
            "emission: |y_t|={}, |y_prev|={}, A is {}x{}",
            n_y,
            y_prev.len(),
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(emission_logprob_unchecked(y_t, y_prev, a))
}

pub(crate) fn emission_logprob_unchecked(y_t: &DVector<f64>, y_prev: &DVector<f64>, a: &DMatrix<f64>) -> LogProb {
    let n_y = y_t.len();
    let mut sq = 0.0;
    for i in 0..n_y {
        let mut pred = 0.0;
        for j in 0..n_y {
            pred += a[(i, j)] * y_prev[j];
        }
        let r = y_t[i] - pred;
        sq += r * r;
    }
    -0.5 * n_y as f64 * (2.0 * std::f64::consts::PI).ln() - 0.5 * sq
}

/// Starting point for [`sample_flight`]; `None` fields are drawn at random
/// (mode and phase uniformly, duration from the mode's law, `y` standard normal).
#[derive(Debug, Clone, Default)]
pub struct InitialState {
    pub mode: Option<usize>,
    pub duration: Option<u32>,
    pub phase: Option<usize>,
    pub sensors: Option<DVector<f64>>,
}

/// A sampled flight together with the hidden phase path and the noise draws
/// that produced its sensor values.
#[derive(Debug, Clone)]
pub struct SampledFlight {
    pub record: FlightRecord,
    pub phases: Vec<usize>,
    pub noise: Vec<DVector<f64>>,
}

pub(crate) fn sample_categorical<R: Rng + ?Sized>(weights: impl IntoIterator<Item = f64>, rng: &mut R) -> Option<usize> {
    let weights: Vec<f64> = weights.into_iter().collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = None;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last_positive = Some(i);
        }
        acc += w;
        if u < acc && w > 0.0 {
            return Some(i);
        }
    }
    last_positive
}

pub(crate) fn sample_shifted_poisson<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> u32 {
    let extra: f64 = Poisson::new(rate).map(|p| p.sample(rng)).unwrap_or(0.0);
    1 + extra as u32
}

pub(crate) fn sample_standard_normal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Symmetric Dirichlet(1) draw of length `n`.
pub(crate) fn sample_flat_dirichlet<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let g: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Draws one flight of `length` steps by ancestral sampling.
///
/// Fails if the parameters are invalid or any VAR matrix is unstable.
pub fn sample_flight<R: Rng + ?Sized>(
    params: &ModelParams,
    length: usize,
    init: &InitialState,
    id: impl Into<String>,
    rng: &mut R,
) -> Result<SampledFlight> {
    params.validate()?;
    let unstable = params.unstable_phases();
    if !unstable.is_empty() {
        return Err(Error::InvalidParam(format!("unstable VAR matrices for phases {unstable:?}")));
    }
    let n_m = params.n_modes();
    let n_x = params.n_phases();
    let n_y = params.n_sensors();

    let mut modes = Vec::with_capacity(length);
    let mut durations = Vec::with_capacity(length);
    let mut phases = Vec::with_capacity(length);
    let mut sensors: Vec<DVector<f64>> = Vec::with_capacity(length);
    let mut noise = Vec::with_capacity(length);

    for t in 0..length {
        let (m, d, x, y, eps);
        if t == 0 {
            m = match init.mode {
                Some(m) => {
                    params.check_mode(m)?;
                    m
                }
                None => rng.random_range(0..n_m),
            };
            d = init
                .duration
                .unwrap_or_else(|| sample_shifted_poisson(params.duration_rates[m], rng));
            x = match init.phase {
                Some(x) => {
                    params.check_phase(x)?;
                    x
                }
                None => rng.random_range(0..n_x),
            };
            eps = sample_standard_normal(n_y, rng);
            y = match &init.sensors {
                Some(y0) if y0.len() == n_y => y0.clone(),
                Some(_) => return Err(Error::Dimension("initial sensor vector".into())),
                None => eps.clone(),
            };
        } else {
            let (m_prev, d_prev, x_prev) = (modes[t - 1], durations[t - 1], phases[t - 1]);
            if d_prev > 1 {
                m = m_prev;
                d = d_prev - 1;
                x = x_prev;
            } else {
                m = sample_categorical(params.mode_transitions.row(m_prev).iter().copied(), rng).unwrap_or(m_prev);
                d = sample_shifted_poisson(params.duration_rates[m], rng);
                x = sample_categorical(params.phase_transitions[m].row(x_prev).iter().copied(), rng)
                    .expect("validated stochastic row");
            }
            eps = sample_standard_normal(n_y, rng);
            y = &params.var_matrices[x] * &sensors[t - 1] + &eps;
        }
        modes.push(m);
        durations.push(d);
        phases.push(x);
        sensors.push(y);
        noise.push(eps);
    }

    Ok(SampledFlight {
        record: FlightRecord {
            id: id.into(),
            durations,
            modes,
            sensors,
        },
        phases,
        noise,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_mode_params() -> ModelParams {
        ModelParams {
            mode_transitions: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
            duration_rates: vec![2.0, 4.0],
            phase_transitions: vec![
                DMatrix::from_row_slice(2, 2, &[0.7, 0.3, 0.4, 0.6]),
                DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]),
            ],
            var_matrices: vec![DMatrix::identity(2, 2) * 0.5, DMatrix::from_row_slice(2, 2, &[0.0, 0.3, -0.3, 0.0])],
        }
    }

    #[test]
    fn mode_branches() {
        let p = two_mode_params();
        assert_eq!(mode_logprob(0, 0, 4, &p).unwrap(), 0.0);
        assert_eq!(mode_logprob(1, 0, 4, &p).unwrap(), f64::NEG_INFINITY);
        assert_eq!(mode_logprob(0, 0, 1, &p).unwrap(), f64::NEG_INFINITY);
        assert_eq!(mode_logprob(1, 0, 1, &p).unwrap(), 0.0);
        assert!(matches!(mode_logprob(2, 0, 1, &p), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn duration_branches() {
        assert_eq!(duration_logprob(2, 0, 3, &[1.0]).unwrap(), 0.0);
        assert_eq!(duration_logprob(3, 0, 3, &[1.0]).unwrap(), f64::NEG_INFINITY);
        assert_relative_eq!(duration_logprob(1, 0, 1, &[1.0]).unwrap(), -1.0, epsilon = 1e-12);
        // direct pmf evaluation: 2^2 e^-2 / 2!
        let direct = (2.0f64.powi(2) * (-2.0f64).exp() / 2.0).ln();
        assert_relative_eq!(duration_logprob(3, 0, 1, &[2.0]).unwrap(), direct, epsilon = 1e-12);
        assert_relative_eq!(direct, (2.0 * (-2.0f64).exp()).ln(), epsilon = 1e-12);
        assert!(matches!(duration_logprob(1, 0, 1, &[0.0]), Err(Error::InvalidParam(_))));
    }

    #[test]
    fn phase_branches() {
        let p = two_mode_params();
        assert_eq!(phase_logprob(1, 1, 0, 2, &p).unwrap(), 0.0);
        assert_eq!(phase_logprob(0, 1, 0, 2, &p).unwrap(), f64::NEG_INFINITY);
        assert_relative_eq!(phase_logprob(0, 0, 0, 1, &p).unwrap(), 0.7f64.ln());
        let mut uniform = p.clone();
        uniform.phase_transitions[1] = DMatrix::from_element(4, 4, 0.25);
        uniform.phase_transitions[0] = DMatrix::from_element(4, 4, 0.25);
        uniform.var_matrices = vec![DMatrix::zeros(2, 2); 4];
        for x in 0..4 {
            assert_relative_eq!(phase_logprob(x, 2, 1, 1, &uniform).unwrap(), 0.25f64.ln());
        }
    }

    #[test]
    fn emission_values() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.2]);
        let y_prev = DVector::from_vec(vec![1.0, -2.0]);
        let exact = &a * &y_prev;
        let two_pi_ln = (2.0 * std::f64::consts::PI).ln();
        assert_relative_eq!(emission_logprob(&exact, &y_prev, &a).unwrap(), -two_pi_ln, epsilon = 1e-14);
        let off = &exact + DVector::from_vec(vec![1.0, -1.0]);
        assert_relative_eq!(emission_logprob(&off, &y_prev, &a).unwrap(), -two_pi_ln - 1.0, epsilon = 1e-14);
        let y = DVector::from_vec(vec![0.3, 1.1]);
        let std_normal: f64 = y.iter().map(|v| -0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * v * v).sum();
        assert_relative_eq!(
            emission_logprob(&y, &y_prev, &DMatrix::zeros(2, 2)).unwrap(),
            std_normal,
            epsilon = 1e-14
        );
        assert!(emission_logprob(&y, &DVector::zeros(3), &a).is_err());
    }

    #[test]
    fn conditionals_normalize() {
        let p = two_mode_params();
        for m_prev in 0..2 {
            for d_prev in [1u32, 3] {
                let s: f64 = (0..2).map(|m| mode_logprob(m, m_prev, d_prev, &p).unwrap().exp()).sum();
                assert_relative_eq!(s, 1.0, epsilon = 1e-10);
            }
        }
        for rate in [0.01, 1.0, 7.5, 30.0] {
            let s: f64 = (1..400).map(|k| duration_logprob(k, 0, 1, &[rate]).unwrap().exp()).sum();
            assert_relative_eq!(s, 1.0, epsilon = 1e-10);
        }
        for m in 0..2 {
            for x_prev in 0..2 {
                for d_prev in [1u32, 5] {
                    let s: f64 = (0..2).map(|x| phase_logprob(x, x_prev, m, d_prev, &p).unwrap().exp()).sum();
                    assert_relative_eq!(s, 1.0, epsilon = 1e-10);
                }
            }
        }
        // 1-D emission integrates to one (trapezoid on a wide grid)
        let a = DMatrix::from_element(1, 1, 0.4);
        let y_prev = DVector::from_element(1, 1.5);
        let h = 1e-3;
        let s: f64 = (-12000..=12000)
            .map(|i| {
                let y = DVector::from_element(1, i as f64 * h);
                emission_logprob(&y, &y_prev, &a).unwrap().exp() * h
            })
            .sum();
        assert_relative_eq!(s, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn emission_rotation_invariance() {
        let theta: f64 = 0.7;
        let q = DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()]);
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.2, -0.1, 0.3]);
        let y_prev = DVector::from_vec(vec![0.4, -1.2]);
        let y = DVector::from_vec(vec![1.0, 0.5]);
        let lhs = emission_logprob(&y, &y_prev, &a).unwrap();
        let rhs = emission_logprob(&(&q * &y), &(&q * &y_prev), &(&q * &a * q.transpose())).unwrap();
        assert_relative_eq!(lhs, rhs, epsilon = 1e-12);
    }

    #[test]
    fn sample_zero_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sample_flight(&two_mode_params(), 0, &InitialState::default(), "z", &mut rng).unwrap();
        assert!(s.record.is_empty());
    }

    #[test]
    fn sampled_records_satisfy_countdown() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let s = sample_flight(&two_mode_params(), 300, &InitialState::default(), "f", &mut rng).unwrap();
            s.record.validate().unwrap();
            for t in 1..s.phases.len() {
                if s.record.durations[t - 1] > 1 {
                    assert_eq!(s.phases[t], s.phases[t - 1]);
                }
            }
        }
    }

    #[test]
    fn degenerate_chain_is_white_noise() {
        let p = ModelParams {
            mode_transitions: DMatrix::zeros(1, 1),
            duration_rates: vec![1e-9],
            phase_transitions: vec![DMatrix::identity(1, 1)],
            var_matrices: vec![DMatrix::zeros(2, 2)],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = sample_flight(&p, 20_000, &InitialState::default(), "w", &mut rng).unwrap();
        assert!(s.record.durations.iter().all(|&d| d == 1));
        let mean: DVector<f64> = s.record.sensors.iter().fold(DVector::zeros(2), |acc, y| acc + y) / 20_000.0;
        assert!(mean.norm() < 0.05, "mean {mean}");
    }

    #[test]
    fn expiry_transitions_match_mode_matrix() {
        let pm = DMatrix::from_row_slice(3, 3, &[0.0, 0.2, 0.8, 0.5, 0.0, 0.5, 0.9, 0.1, 0.0]);
        let p = ModelParams {
            mode_transitions: pm.clone(),
            duration_rates: vec![1.0, 2.0, 0.5],
            phase_transitions: vec![DMatrix::identity(1, 1); 3],
            var_matrices: vec![DMatrix::zeros(1, 1)],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = sample_flight(&p, 100_000, &InitialState::default(), "mc", &mut rng).unwrap();
        let mut counts = DMatrix::<f64>::zeros(3, 3);
        for t in 1..s.record.len() {
            if s.record.durations[t - 1] == 1 {
                counts[(s.record.modes[t - 1], s.record.modes[t])] += 1.0;
            }
        }
        for i in 0..3 {
            let n: f64 = counts.row(i).sum();
            let tv: f64 = (0..3).map(|j| (counts[(i, j)] / n - pm[(i, j)]).abs()).sum::<f64>() / 2.0;
            assert!(tv < 0.05, "row {i} tv {tv}");
        }
    }

    #[test]
    fn rejects_unstable_var() {
        let mut p = two_mode_params();
        p.var_matrices[0] = DMatrix::identity(2, 2) * 1.1;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(sample_flight(&p, 10, &InitialState::default(), "u", &mut rng).is_err());
    }

    #[test]
    fn params_serde_round_trip() {
        let p = two_mode_params();
        let json = serde_json::to_string(&p).unwrap();
        let back: ModelParams = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
    }
}
