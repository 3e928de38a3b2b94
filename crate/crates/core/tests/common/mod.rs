//! Shared test oracles: exhaustive phase-path enumeration and dense
//! least-squares solvers, written without reference to the library's own
//! recursions.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use smsvar::flight::FlightRecord;
use smsvar::model::ModelParams;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_stochastic_row(n: usize, zero_at: Option<usize>, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut row: Vec<f64> = (0..n)
        .map(|j| if Some(j) == zero_at { 0.0 } else { rng.random_range(0.05..1.0) })
        .collect();
    let s: f64 = row.iter().sum();
    row.iter_mut().for_each(|p| *p /= s);
    row
}

/// Random parameters with strictly positive off-diagonal mode transitions.
pub fn random_params(n_m: usize, n_x: usize, n_y: usize, rng: &mut ChaCha8Rng) -> ModelParams {
    let mut pm = DMatrix::zeros(n_m, n_m);
    for i in 0..n_m {
        for (j, p) in random_stochastic_row(n_m, Some(i), rng).into_iter().enumerate() {
            pm[(i, j)] = p;
        }
    }
    let phase_transitions = (0..n_m)
        .map(|_| {
            let mut px = DMatrix::zeros(n_x, n_x);
            for i in 0..n_x {
                for (j, p) in random_stochastic_row(n_x, None, rng).into_iter().enumerate() {
                    px[(i, j)] = p;
                }
            }
            px
        })
        .collect();
    let var_matrices = (0..n_x)
        .map(|_| DMatrix::from_fn(n_y, n_y, |_, _| rng.random_range(-0.9..0.9)))
        .collect();
    let params = ModelParams {
        mode_transitions: pm,
        duration_rates: (0..n_m).map(|_| rng.random_range(0.3..3.0)).collect(),
        phase_transitions,
        var_matrices,
    };
    params.validate().expect("random params are valid");
    params
}

/// A flight of `len` rows built from whole runs, then truncated. Countdowns
/// are explicit, so the first row may sit in the middle of a run and the last
/// run may be cut short.
pub fn random_flight(id: &str, len: usize, n_m: usize, n_y: usize, rng: &mut ChaCha8Rng) -> FlightRecord {
    let mut modes = Vec::with_capacity(len);
    let mut durations = Vec::with_capacity(len);
    let mut mode = rng.random_range(0..n_m);
    let mut countdown: u32 = rng.random_range(1..=4);
    while modes.len() < len {
        modes.push(mode);
        durations.push(countdown);
        if countdown == 1 {
            let mut next = rng.random_range(0..n_m - 1);
            if next >= mode {
                next += 1;
            }
            mode = next;
            countdown = rng.random_range(1..=4);
        } else {
            countdown -= 1;
        }
    }
    let sensors = (0..len)
        .map(|_| DVector::from_fn(n_y, |_, _| rng.random_range(-2.0..2.0)))
        .collect();
    let flight = FlightRecord {
        id: id.to_string(),
        durations,
        modes,
        sensors,
    };
    flight.validate().expect("random flight is valid");
    flight
}

/// A small random problem: `T <= 6`, `n_x <= 3`, `n_y <= 2`, `n_m` in 2..=3.
pub struct Instance {
    pub params: ModelParams,
    pub flight: FlightRecord,
}

pub fn random_instance(seed: u64) -> Instance {
    let mut r = rng(seed);
    let n_m = r.random_range(2..=3);
    let n_x = r.random_range(1..=3);
    let n_y = r.random_range(1..=2);
    let len = r.random_range(2..=6);
    let params = random_params(n_m, n_x, n_y, &mut r);
    let flight = random_flight(&format!("inst{seed}"), len, n_m, n_y, &mut r);
    Instance { params, flight }
}

fn log_factorial(k: u32) -> f64 {
    (1..=k).map(|i| (i as f64).ln()).sum()
}

/// `log p(m_t, d_t | m_{t-1}, d_{t-1})`, independent of the phase.
pub fn oracle_observed_term(p: &ModelParams, f: &FlightRecord, t: usize) -> f64 {
    let (m_prev, d_prev, m, d) = (f.modes[t - 1], f.durations[t - 1], f.modes[t], f.durations[t]);
    if d_prev > 1 {
        if m == m_prev && d == d_prev - 1 {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    } else {
        let lam = p.duration_rates[m];
        let k = d - 1;
        p.mode_transitions[(m_prev, m)].ln() + k as f64 * lam.ln() - lam - log_factorial(k)
    }
}

pub fn oracle_phase_term(p: &ModelParams, f: &FlightRecord, t: usize, x_prev: usize, x: usize) -> f64 {
    if f.durations[t - 1] > 1 {
        if x == x_prev {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    } else {
        p.phase_transitions[f.modes[t]][(x_prev, x)].ln()
    }
}

pub fn oracle_emission(p: &ModelParams, f: &FlightRecord, t: usize, x: usize) -> f64 {
    let r = &f.sensors[t] - &p.var_matrices[x] * &f.sensors[t - 1];
    -0.5 * r.len() as f64 * (2.0 * std::f64::consts::PI).ln() - 0.5 * r.norm_squared()
}

/// `log p(x_{1:n}, F_{2:n} | F_1)` for a path over the first `path.len()` rows.
pub fn path_logjoint(p: &ModelParams, f: &FlightRecord, path: &[usize]) -> f64 {
    let mut lp = -(p.n_phases() as f64).ln();
    for t in 1..path.len() {
        lp += oracle_observed_term(p, f, t) + oracle_phase_term(p, f, t, path[t - 1], path[t]) + oracle_emission(p, f, t, path[t]);
    }
    lp
}

/// All phase paths of length `n` over `n_x` phases.
pub fn all_paths(n_x: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..n_x).map(move |x| {
                    let mut q = p.clone();
                    q.push(x);
                    q
                })
            })
            .collect();
    }
    out
}

pub fn logsumexp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Everything the brute-force enumeration yields for one instance.
pub struct Enumerated {
    pub total_loglik: f64,
    /// `log p(F_{2:t} | F_1)` for `t = 1..T` (index 0 is `0`).
    pub prefix_loglik: Vec<f64>,
    /// Filtered `p(x_t | F_{1:t})`, length `T`.
    pub filtered: Vec<Vec<f64>>,
    /// Predicted `p(x_t | F_{1:t-1}, m_t, d_t)` for `t >= 1`, length `T - 1`.
    pub predicted: Vec<Vec<f64>>,
    pub smoothed: Vec<Vec<f64>>,
    pub pairwise: Vec<DMatrix<f64>>,
    pub best_path: Vec<usize>,
    pub best_logjoint: f64,
}

fn normalize_logs(logs: &[f64]) -> Vec<f64> {
    let z = logsumexp(logs);
    logs.iter().map(|l| (l - z).exp()).collect()
}

pub fn enumerate(p: &ModelParams, f: &FlightRecord) -> Enumerated {
    let n_x = p.n_phases();
    let t_len = f.len();
    let mut prefix_loglik = Vec::with_capacity(t_len);
    let mut filtered = Vec::with_capacity(t_len);
    let mut predicted = Vec::with_capacity(t_len.saturating_sub(1));
    for n in 1..=t_len {
        let paths = all_paths(n_x, n);
        let joints: Vec<f64> = paths.iter().map(|q| path_logjoint(p, f, q)).collect();
        prefix_loglik.push(logsumexp(&joints));
        let per_x: Vec<f64> = (0..n_x)
            .map(|x| {
                let sel: Vec<f64> = paths.iter().zip(&joints).filter(|(q, _)| q[n - 1] == x).map(|(_, &j)| j).collect();
                logsumexp(&sel)
            })
            .collect();
        filtered.push(normalize_logs(&per_x));
        if n >= 2 {
            let t = n - 1;
            let per_x: Vec<f64> = (0..n_x)
                .map(|x| {
                    let sel: Vec<f64> = paths
                        .iter()
                        .filter(|q| q[t] == x)
                        .map(|q| path_logjoint(p, f, &q[..t]) + oracle_phase_term(p, f, t, q[t - 1], x))
                        .collect();
                    logsumexp(&sel)
                })
                .collect();
            predicted.push(normalize_logs(&per_x));
        }
    }
    let paths = all_paths(n_x, t_len);
    let joints: Vec<f64> = paths.iter().map(|q| path_logjoint(p, f, q)).collect();
    let total = logsumexp(&joints);
    let mut smoothed = vec![vec![0.0; n_x]; t_len];
    let mut pairwise = vec![DMatrix::zeros(n_x, n_x); t_len.saturating_sub(1)];
    let mut best = 0;
    for (k, (q, &j)) in paths.iter().zip(&joints).enumerate() {
        let w = (j - total).exp();
        for t in 0..t_len {
            smoothed[t][q[t]] += w;
            if t + 1 < t_len {
                pairwise[t][(q[t], q[t + 1])] += w;
            }
        }
        if j > joints[best] {
            best = k;
        }
    }
    Enumerated {
        total_loglik: total,
        prefix_loglik,
        filtered,
        predicted,
        smoothed,
        pairwise,
        best_path: paths[best].clone(),
        best_logjoint: joints[best],
    }
}

/// Largest `|a - b| / max(1, |b|)` over two equal-length slices.
pub fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / y.abs().max(1.0)).fold(0.0, f64::max)
}

/// Solves `design * B ~ response` through the normal equations.
pub fn normal_equations(design: &DMatrix<f64>, response: &DMatrix<f64>) -> DMatrix<f64> {
    let gram = design.transpose() * design;
    let rhs = design.transpose() * response;
    gram.cholesky().expect("gram matrix is positive definite").solve(&rhs)
}

/// Solves `design * B ~ response` with a dense Householder QR.
pub fn dense_qr(design: &DMatrix<f64>, response: &DMatrix<f64>) -> DMatrix<f64> {
    let qr = design.clone().qr();
    let qty = qr.q().transpose() * response;
    qr.r().solve_upper_triangular(&qty).expect("full rank")
}

/// A tall random least-squares problem with a planted solution plus noise.
pub fn tall_system(rows: usize, p: usize, q: usize, rng: &mut ChaCha8Rng) -> (DMatrix<f64>, DMatrix<f64>) {
    let design = DMatrix::from_fn(rows, p, |_, _| rng.random_range(-1.0..1.0));
    let truth = DMatrix::from_fn(p, q, |_, _| rng.random_range(-2.0..2.0));
    let noise = DMatrix::from_fn(rows, q, |_, _| rng.random_range(-0.1..0.1));
    let response = &design * truth + noise;
    (design, response)
}

/// Splits `rows` into consecutive blocks at random cut points.
pub fn random_cuts(rows: usize, blocks: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut cuts: Vec<usize> = (0..blocks.saturating_sub(1)).map(|_| rng.random_range(0..=rows)).collect();
    cuts.push(0);
    cuts.push(rows);
    cuts.sort_unstable();
    cuts.windows(2).map(|w| (w[0], w[1] - w[0])).collect()
}

pub fn panels_from_cuts(design: &DMatrix<f64>, response: &DMatrix<f64>, cuts: &[(usize, usize)]) -> Vec<smsvar::linalg::Panel> {
    cuts.iter()
        .map(|&(start, n)| smsvar::linalg::Panel::new(design.rows(start, n).into_owned(), response.rows(start, n).into_owned()))
        .collect()
}
