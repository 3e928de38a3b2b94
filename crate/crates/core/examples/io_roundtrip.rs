//! The file-level pipeline: write raw data, read it back, train, save the
//! model, reload it and score new data with the frozen encoding.

use smsvar::detection::{score_dataset, Method};
use smsvar::experiments::{generate_scenario, AnomalyKind, ScenarioConfig};
use smsvar::flight::ModeDictionary;
use smsvar::io::{self, build_scoring, build_training, ModelFile, RawDataset, RawFlight};
use smsvar::learning::{em_fit, EmConfig};

fn to_raw(cfg: &ScenarioConfig) -> smsvar::Result<RawDataset> {
    let ds = generate_scenario(cfg)?;
    let dict = ModeDictionary::full(cfg.n_switches);
    Ok(RawDataset {
        sensor_names: (0..cfg.n_sensors).map(|j| format!("sensor_{j}")).collect(),
        flights: ds
            .flights
            .iter()
            .map(|f| RawFlight::from_record(f, &dict, None))
            .collect::<smsvar::Result<_>>()?,
    })
}

fn main() -> smsvar::Result<()> {
    let dir = tempfile::tempdir()?;
    let cfg = ScenarioConfig {
        n_normal: 30,
        n_anomalous: 0,
        ..ScenarioConfig::with_kind(AnomalyKind::Sensor)
    };
    let train_csv = dir.path().join("train.csv");
    io::write_atomic(&train_csv, |w| io::write_csv(&to_raw(&cfg)?, w))?;
    let test_jsonl = dir.path().join("test.jsonl");
    let test_cfg = ScenarioConfig { seed: 1, ..cfg.clone() };
    io::write_atomic(&test_jsonl, |w| io::write_jsonl(&to_raw(&test_cfg)?, w))?;
    println!("wrote {} ({} bytes)", train_csv.display(), std::fs::metadata(&train_csv)?.len());

    let train = build_training(&io::read_raw(&train_csv)?)?;
    println!(
        "training data: {} flights, {} distinct switch patterns",
        train.flights.len(),
        train.dictionary.len()
    );
    let em = EmConfig {
        max_iters: 30,
        restarts: 1,
        ..EmConfig::default()
    };
    let report = em_fit(&train.flights, train.dictionary.len() + 1, &em)?;
    let model_path = dir.path().join("model.json");
    ModelFile::new(report.params, train.dictionary, train.standardizer, None).write(&model_path)?;

    let model = ModelFile::read(&model_path)?;
    let test = build_scoring(&io::read_raw(&test_jsonl)?, &model.dictionary, &model.standardizer)?;
    let novel = test
        .iter()
        .flat_map(|f| &f.modes)
        .filter(|&&m| m == model.dictionary.novel_id())
        .count();
    println!("test data: {} flights, {novel} rows with switch patterns unseen in training", test.len());
    let scores = score_dataset(&test, Method::Ll, &model.scoring_model(), &Default::default())?;
    for s in scores.iter().take(5) {
        println!("{}: LL summary {:.4}", s.flight_id, s.summary);
    }
    Ok(())
}
