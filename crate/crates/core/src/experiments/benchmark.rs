use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::roc::roc_auc;
use super::scenario::{generate_scenario, AnomalyKind, ScenarioConfig};
use crate::baselines::{var_baseline_fit, MkadConfig};
use crate::detection::{score_dataset, Method, ScoringModel};
use crate::error::{Error, Result};
use crate::learning::{em_fit, EmConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedScenario {
    pub name: String,
    pub config: ScenarioConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub scenarios: Vec<NamedScenario>,
    pub methods: Vec<Method>,
    pub n_runs: usize,
    /// Run `r` uses seed `base_seed + r` for both the data and EM.
    pub base_seed: u64,
    pub em: EmConfig,
    pub mkad: MkadConfig,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            scenarios: AnomalyKind::ALL
                .into_iter()
                .map(|kind| NamedScenario {
                    name: kind.as_str().to_string(),
                    config: ScenarioConfig::with_kind(kind),
                })
                .collect(),
            methods: Method::ALL.to_vec(),
            n_runs: 30,
            base_seed: 0,
            em: EmConfig::default(),
            mkad: MkadConfig::default(),
        }
    }
}

impl BenchmarkConfig {
    /// One scenario per contamination fraction, `total` flights each.
    pub fn contamination(kind: AnomalyKind, total: usize, fractions: &[f64], methods: Vec<Method>) -> Result<Self> {
        let scenarios = fractions
            .iter()
            .map(|&f| {
                Ok(NamedScenario {
                    name: format!("{}-{f:.2}", kind.as_str()),
                    config: ScenarioConfig::with_contamination(kind, total, f)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(BenchmarkConfig {
            scenarios,
            methods,
            ..BenchmarkConfig::default()
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() || self.methods.is_empty() || self.n_runs == 0 {
            return Err(Error::InvalidParam("benchmark needs scenarios, methods and at least one run".into()));
        }
        for s in &self.scenarios {
            s.config.validate()?;
            if s.config.n_anomalous == 0 || s.config.n_normal == 0 {
                return Err(Error::InvalidParam(format!("scenario `{}` needs both normal and anomalous flights", s.name)));
            }
        }
        self.em.validate()?;
        self.mkad.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario: String,
    pub detector: Method,
    pub seed: u64,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub detector: Method,
    pub n_runs: usize,
    pub auc_mean: f64,
    /// Sample standard deviation (zero for a single run).
    pub auc_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub runs: Vec<RunRecord>,
    pub summary: Vec<SummaryRow>,
}

impl BenchmarkResult {
    pub fn mean_auc(&self, scenario: &str, detector: Method) -> Option<f64> {
        self.summary
            .iter()
            .find(|r| r.scenario == scenario && r.detector == detector)
            .map(|r| r.auc_mean)
    }
}

/// Generates one dataset, fits everything on the unlabeled mixture and
/// returns the AUC of each method.
pub fn evaluate_run(
    scenario: &ScenarioConfig,
    methods: &[Method],
    em: &EmConfig,
    mkad: &MkadConfig,
    seed: u64,
) -> Result<Vec<(Method, f64)>> {
    let data = generate_scenario(&ScenarioConfig {
        seed,
        ..scenario.clone()
    })?;
    let n_modes = data.ground_truth.n_modes();
    let needs_em = methods.iter().any(|m| matches!(m, Method::Kl | Method::Ll | Method::Smm));
    let params = if needs_em {
        let cfg = EmConfig { seed, ..em.clone() };
        Some(em_fit(&data.flights, n_modes, &cfg)?.params)
    } else {
        None
    };
    let var_matrix = if methods.contains(&Method::Var) {
        Some(var_baseline_fit(&data.flights, em.ridge)?)
    } else {
        None
    };
    let model = ScoringModel {
        params: params.unwrap_or_else(|| data.ground_truth.clone()),
        var_matrix,
    };
    methods
        .iter()
        .map(|&m| {
            let scores = score_dataset(&data.flights, m, &model, mkad)?;
            let summaries: Vec<f64> = scores.iter().map(|s| s.summary).collect();
            Ok((m, roc_auc(&summaries, &data.labels)?.auc))
        })
        .collect()
}

/// Every (scenario, run) pair is evaluated independently, in parallel; the
/// result is ordered by scenario, run and method regardless of scheduling.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkResult> {
    cfg.validate()?;
    let jobs: Vec<(usize, u64)> = (0..cfg.scenarios.len())
        .flat_map(|s| (0..cfg.n_runs as u64).map(move |r| (s, r)))
        .collect();
    let results: Vec<Vec<RunRecord>> = jobs
        .par_iter()
        .map(|&(s, r)| {
            let scenario = &cfg.scenarios[s];
            let seed = cfg.base_seed + r;
            let aucs = evaluate_run(&scenario.config, &cfg.methods, &cfg.em, &cfg.mkad, seed)?;
            log::info!("{} run {r} done", scenario.name);
            Ok(aucs
                .into_iter()
                .map(|(detector, auc)| RunRecord {
                    scenario: scenario.name.clone(),
                    detector,
                    seed,
                    auc,
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let runs: Vec<RunRecord> = results.into_iter().flatten().collect();

    let mut groups: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for run in &runs {
        let s = cfg.scenarios.iter().position(|n| n.name == run.scenario).unwrap_or(0);
        let d = cfg.methods.iter().position(|&m| m == run.detector).unwrap_or(0);
        groups.entry((s, d)).or_default().push(run.auc);
    }
    let summary = groups
        .into_iter()
        .map(|((s, d), aucs)| {
            let n = aucs.len() as f64;
            let mean = aucs.iter().sum::<f64>() / n;
            let var = if aucs.len() > 1 {
                aucs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            SummaryRow {
                scenario: cfg.scenarios[s].name.clone(),
                detector: cfg.methods[d],
                n_runs: aucs.len(),
                auc_mean: mean,
                auc_std: var.sqrt(),
            }
        })
        .collect();
    Ok(BenchmarkResult { runs, summary })
}

/// `scenario,detector,seed,auc`, one row per run and detector.
pub fn write_runs_csv<W: Write>(result: &BenchmarkResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in &result.runs {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_json<W: Write>(result: &BenchmarkResult, out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, &result.summary)?;
    Ok(())
}
