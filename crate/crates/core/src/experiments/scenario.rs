use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flight::FlightRecord;
use crate::linalg::spectral_radius;
use crate::model::{sample_flight, InitialState, ModelParams, SampledFlight};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnomalyKind {
    /// A mode run relabeled to an improbable successor.
    Mode,
    /// A window in which the sensors follow another phase's VAR matrix.
    Phase,
    /// A window of large additive sensor noise.
    Sensor,
    /// One switch reads inverted for the whole flight.
    Switch,
}

impl AnomalyKind {
    /// Kinds used by the standard benchmark.
    pub const ALL: [AnomalyKind; 3] = [AnomalyKind::Mode, AnomalyKind::Phase, AnomalyKind::Sensor];

    pub fn as_str(self) -> &'static str {
        match self {
            AnomalyKind::Mode => "mode",
            AnomalyKind::Phase => "phase",
            AnomalyKind::Sensor => "sensor",
            AnomalyKind::Switch => "switch",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub n_normal: usize,
    pub n_anomalous: usize,
    pub length: usize,
    pub n_phases: usize,
    pub n_sensors: usize,
    /// Number of binary switches; the ground truth has `2^n_switches` modes.
    pub n_switches: usize,
    pub kind: AnomalyKind,
    pub min_events: usize,
    pub max_events: usize,
    /// Steps relabeled per mode event; 0 relabels the whole run.
    pub mode_window: usize,
    pub phase_window: usize,
    pub sensor_window: usize,
    pub sensor_noise: f64,
    /// Switch that is stuck inverted in every switch-fault flight.
    pub fault_switch: usize,
    /// Spectral radius of the ground-truth VAR matrices.
    pub var_radius: f64,
    pub min_rate: f64,
    pub max_rate: f64,
    /// Dirichlet concentration of the ground-truth phase transition rows.
    pub phase_concentration: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_normal: 100,
            n_anomalous: 10,
            length: 200,
            n_phases: 3,
            n_sensors: 4,
            n_switches: 5,
            kind: AnomalyKind::Mode,
            min_events: 2,
            max_events: 5,
            mode_window: 3,
            phase_window: 10,
            sensor_window: 5,
            sensor_noise: 3.0,
            fault_switch: 0,
            var_radius: 0.9,
            min_rate: 3.0,
            max_rate: 15.0,
            phase_concentration: 0.1,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn with_kind(kind: AnomalyKind) -> Self {
        ScenarioConfig {
            kind,
            ..ScenarioConfig::default()
        }
    }

    /// `total` flights of which `round(fraction * total)` are anomalous.
    pub fn with_contamination(kind: AnomalyKind, total: usize, fraction: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::InvalidParam(format!("contamination {fraction} not in [0, 1]")));
        }
        let n_anomalous = (fraction * total as f64).round() as usize;
        Ok(ScenarioConfig {
            kind,
            n_normal: total - n_anomalous,
            n_anomalous,
            ..ScenarioConfig::default()
        })
    }

    pub fn total(&self) -> usize {
        self.n_normal + self.n_anomalous
    }

    pub fn contamination(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            self.n_anomalous as f64 / self.total() as f64
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParam(m.to_string()));
        if self.total() == 0 {
            return bad("scenario needs at least one flight");
        }
        if self.length < 2 || self.n_phases == 0 || self.n_sensors == 0 {
            return bad("length must be at least 2 and n_phases, n_sensors positive");
        }
        if self.n_switches == 0 || self.n_switches > 16 {
            return bad("n_switches must be in 1..=16");
        }
        if self.min_events == 0 || self.min_events > self.max_events {
            return bad("need 1 <= min_events <= max_events");
        }
        if self.phase_window == 0 || self.sensor_window == 0 {
            return bad("anomaly windows must be positive");
        }
        if self.phase_window >= self.length || self.sensor_window >= self.length {
            return bad("anomaly windows must be shorter than the flight");
        }
        if !(self.sensor_noise >= 0.0) {
            return bad("sensor_noise must be non-negative");
        }
        if !(self.var_radius > 0.0 && self.var_radius < 1.0) {
            return bad("var_radius must be in (0, 1)");
        }
        if !(self.min_rate > 0.0 && self.min_rate <= self.max_rate) {
            return bad("need 0 < min_rate <= max_rate");
        }
        if !(self.phase_concentration > 0.0) {
            return bad("phase_concentration must be positive");
        }
        if self.kind == AnomalyKind::Mode && self.n_switches < 2 {
            return bad("mode anomalies need at least 4 modes");
        }
        if self.kind == AnomalyKind::Switch && self.fault_switch >= self.n_switches {
            return bad("fault_switch must name an existing switch");
        }
        Ok(())
    }
}

/// One injected anomaly. `start..end` are the affected time steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectedEvent {
    pub kind: AnomalyKind,
    pub start: usize,
    pub end: usize,
    /// Replacement mode (mode events), phase offset (phase events) or the
    /// inverted switch (switch events).
    pub detail: usize,
}

#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub flights: Vec<FlightRecord>,
    /// `true` for anomalous flights.
    pub labels: Vec<bool>,
    /// For anomalous flights, the sampled flight before injection.
    pub twins: Vec<Option<FlightRecord>>,
    pub events: Vec<Vec<InjectedEvent>>,
    pub ground_truth: ModelParams,
}

fn dirichlet_row<R: Rng + ?Sized>(n: usize, concentration: f64, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).expect("positive concentration");
    loop {
        let g: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
        let s: f64 = g.iter().sum();
        if s > 0.0 {
            return g.into_iter().map(|v| v / s).collect();
        }
    }
}

/// Random model with Dirichlet rows (mode rows with a zero diagonal), rates
/// uniform in `[min_rate, max_rate]` and Gaussian VAR matrices rescaled to
/// spectral radius `var_radius`.
pub fn random_ground_truth<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Result<ModelParams> {
    cfg.validate()?;
    let n_m = 1usize << cfg.n_switches;
    let (n_x, n_y) = (cfg.n_phases, cfg.n_sensors);
    let mut mode_transitions = DMatrix::zeros(n_m, n_m);
    if n_m > 1 {
        for i in 0..n_m {
            let row = dirichlet_row(n_m - 1, 1.0, rng);
            for (k, p) in row.into_iter().enumerate() {
                let j = if k < i { k } else { k + 1 };
                mode_transitions[(i, j)] = p;
            }
        }
    }
    let duration_rates = (0..n_m).map(|_| rng.random_range(cfg.min_rate..=cfg.max_rate)).collect();
    let phase_transitions = (0..n_m)
        .map(|_| {
            let mut m = DMatrix::zeros(n_x, n_x);
            for i in 0..n_x {
                for (j, p) in dirichlet_row(n_x, cfg.phase_concentration, rng).into_iter().enumerate() {
                    m[(i, j)] = p;
                }
            }
            m
        })
        .collect();
    let var_matrices = (0..n_x)
        .map(|_| loop {
            let g = DMatrix::from_fn(n_y, n_y, |_, _| rng.sample::<f64, _>(StandardNormal));
            let r = spectral_radius(&g);
            if r > 1e-6 {
                break g * (cfg.var_radius / r);
            }
        })
        .collect();
    let params = ModelParams {
        mode_transitions,
        duration_rates,
        phase_transitions,
        var_matrices,
    };
    params.validate()?;
    Ok(params)
}

/// Picks up to `k` non-overlapping windows of length `w` inside `1..len`.
fn windows<R: Rng + ?Sized>(len: usize, w: usize, k: usize, rng: &mut R) -> Vec<usize> {
    let mut starts: Vec<usize> = Vec::with_capacity(k);
    for _ in 0..(k * 50) {
        if starts.len() == k {
            break;
        }
        let s = rng.random_range(1..=len - w);
        if starts.iter().all(|&o| s + w <= o || o + w <= s) {
            starts.push(s);
        }
    }
    starts.sort_unstable();
    starts
}

fn inject_mode<R: Rng + ?Sized>(
    f: &mut FlightRecord,
    pm: &DMatrix<f64>,
    window: usize,
    k: usize,
    rng: &mut R,
) -> Result<Vec<InjectedEvent>> {
    let run_starts: Vec<usize> = (1..f.len()).filter(|&t| f.modes[t] != f.modes[t - 1]).collect();
    let mut chosen: Vec<usize> = sample(rng, run_starts.len(), k.min(run_starts.len()))
        .into_iter()
        .map(|i| run_starts[i])
        .collect();
    chosen.sort_unstable();
    let mut events = Vec::with_capacity(chosen.len());
    for s in chosen {
        let mut e = s;
        while e < f.len() && f.modes[e] == f.modes[s] {
            e += 1;
        }
        if window > 0 && s + window < e {
            e = s + window;
        }
        let (orig, prev) = (f.modes[s], f.modes[s - 1]);
        let next = f.modes.get(e).copied();
        let replacement = (0..pm.nrows())
            .filter(|&j| j != orig && j != prev && Some(j) != next)
            .min_by(|&a, &b| pm[(prev, a)].total_cmp(&pm[(prev, b)]))
            .ok_or_else(|| Error::InvalidParam("too few modes for a mode anomaly".into()))?;
        for t in s..e {
            f.modes[t] = replacement;
        }
        events.push(InjectedEvent {
            kind: AnomalyKind::Mode,
            start: s,
            end: e,
            detail: replacement,
        });
    }
    Ok(events)
}

fn inject_phase<R: Rng + ?Sized>(
    f: &mut FlightRecord,
    sampled: &SampledFlight,
    params: &ModelParams,
    cfg: &ScenarioConfig,
    k: usize,
    rng: &mut R,
) -> Vec<InjectedEvent> {
    let n_x = params.n_phases();
    let mut events = Vec::new();
    if n_x < 2 {
        return events;
    }
    for s in windows(f.len(), cfg.phase_window, k, rng) {
        let offset = rng.random_range(1..n_x);
        let e = s + cfg.phase_window;
        for t in s..e {
            let other = (sampled.phases[t] + offset) % n_x;
            let y = &params.var_matrices[other] * &f.sensors[t - 1] + &sampled.noise[t];
            f.sensors[t] = y;
        }
        events.push(InjectedEvent {
            kind: AnomalyKind::Phase,
            start: s,
            end: e,
            detail: offset,
        });
    }
    events
}

fn inject_sensor<R: Rng + ?Sized>(f: &mut FlightRecord, cfg: &ScenarioConfig, k: usize, rng: &mut R) -> Vec<InjectedEvent> {
    let n_y = cfg.n_sensors;
    windows(f.len(), cfg.sensor_window, k, rng)
        .into_iter()
        .map(|s| {
            let e = s + cfg.sensor_window;
            for t in s..e {
                let kick = DVector::from_fn(n_y, |_, _| cfg.sensor_noise * rng.sample::<f64, _>(StandardNormal));
                f.sensors[t] += kick;
            }
            InjectedEvent {
                kind: AnomalyKind::Sensor,
                start: s,
                end: e,
                detail: 0,
            }
        })
        .collect()
}

fn inject_switch(f: &mut FlightRecord, switch: usize) -> Vec<InjectedEvent> {
    for m in &mut f.modes {
        *m ^= 1 << switch;
    }
    vec![InjectedEvent {
        kind: AnomalyKind::Switch,
        start: 0,
        end: f.len(),
        detail: switch,
    }]
}

/// Samples a ground-truth model and `n_normal + n_anomalous` flights from it,
/// then injects anomalies into the last `n_anomalous` flights.
///
/// The same seed always gives bit-identical output.
pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<LabeledDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let params = random_ground_truth(cfg, &mut rng)?;
    let total = cfg.total();
    let mut out = LabeledDataset {
        flights: Vec::with_capacity(total),
        labels: Vec::with_capacity(total),
        twins: Vec::with_capacity(total),
        events: Vec::with_capacity(total),
        ground_truth: params,
    };
    for i in 0..total {
        let id = format!("f{i:04}");
        let sampled = sample_flight(&out.ground_truth, cfg.length, &InitialState::default(), id, &mut rng)?;
        // observed data only carries durations implied by the modes
        let r = &sampled.record;
        let twin = FlightRecord::from_modes(r.id.clone(), r.modes.clone(), r.sensors.clone())?;
        if i < cfg.n_normal {
            out.flights.push(twin);
            out.labels.push(false);
            out.twins.push(None);
            out.events.push(Vec::new());
            continue;
        }
        let k = rng.random_range(cfg.min_events..=cfg.max_events);
        let mut f = twin.clone();
        let events = match cfg.kind {
            AnomalyKind::Mode => inject_mode(&mut f, &out.ground_truth.mode_transitions, cfg.mode_window, k, &mut rng)?,
            AnomalyKind::Phase => inject_phase(&mut f, &sampled, &out.ground_truth, cfg, k, &mut rng),
            AnomalyKind::Sensor => inject_sensor(&mut f, cfg, k, &mut rng),
            AnomalyKind::Switch => inject_switch(&mut f, cfg.fault_switch),
        };
        let f = FlightRecord::from_modes(f.id, f.modes, f.sensors)?;
        out.flights.push(f);
        out.labels.push(true);
        out.twins.push(Some(twin));
        out.events.push(events);
    }
    Ok(out)
}
