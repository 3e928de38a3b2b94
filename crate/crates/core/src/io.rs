//! Flight data and model files.
//!
//! Flight data comes as CSV with a `flight_id,t,switches,<sensor...>` header
//! (one row per time step, any number of flights per file) or as JSONL with
//! one flight per line. A directory is read file by file in name order.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::detection::ScoringModel;
use crate::error::{Error, Result};
use crate::flight::{FlightRecord, ModeDictionary, Standardizer, SwitchFrame};
use crate::model::{matrix_from_rows, matrix_rows, ModelParams};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// One flight as read from disk: raw switch frames and unscaled sensors.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFlight {
    pub id: String,
    pub times: Vec<i64>,
    pub switches: Vec<SwitchFrame>,
    pub sensors: Vec<DVector<f64>>,
}

impl RawFlight {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Inverse of the encoding: decodes mode ids through `dictionary` and
    /// optionally undoes standardization. Time stamps are `0..T`.
    pub fn from_record(record: &FlightRecord, dictionary: &ModeDictionary, standardizer: Option<&Standardizer>) -> Result<Self> {
        let switches = record
            .modes
            .iter()
            .map(|&m| {
                dictionary
                    .decode(m)
                    .cloned()
                    .ok_or_else(|| Error::OutOfRange(format!("mode {m} has no switch pattern")))
            })
            .collect::<Result<_>>()?;
        let sensors = match standardizer {
            Some(s) => record.sensors.iter().map(|y| s.invert(y)).collect(),
            None => record.sensors.clone(),
        };
        Ok(RawFlight {
            id: record.id.clone(),
            times: (0..record.len() as i64).collect(),
            switches,
            sensors,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawDataset {
    pub sensor_names: Vec<String>,
    pub flights: Vec<RawFlight>,
}

impl RawDataset {
    pub fn n_sensors(&self) -> usize {
        self.sensor_names.len()
    }

    pub fn switch_width(&self) -> Option<usize> {
        self.flights.iter().flat_map(|f| f.switches.first()).map(|s| s.width()).next()
    }

    fn absorb(&mut self, other: RawDataset, source: &str) -> Result<()> {
        if self.flights.is_empty() && self.sensor_names.is_empty() {
            self.sensor_names = other.sensor_names;
        } else if !other.flights.is_empty() && other.sensor_names.len() != self.sensor_names.len() {
            return Err(Error::Format(format!(
                "{source}: {} sensor columns, earlier files had {}",
                other.sensor_names.len(),
                self.sensor_names.len()
            )));
        }
        for f in other.flights {
            if self.flights.iter().any(|g| g.id == f.id) {
                return Err(Error::ingestion(&f.id, 0, format!("flight id repeated in {source}")));
            }
            self.flights.push(f);
        }
        Ok(())
    }
}

/// Orders rows by time stamp and checks that all rows agree on widths.
fn finish_flight(id: String, mut rows: Vec<(i64, SwitchFrame, DVector<f64>)>) -> Result<RawFlight> {
    rows.sort_by_key(|r| r.0);
    if let Some(w) = rows.windows(2).position(|w| w[0].0 == w[1].0) {
        return Err(Error::ingestion(&id, w + 1, format!("duplicate time stamp {}", rows[w].0)));
    }
    let mut flight = RawFlight {
        id,
        times: Vec::with_capacity(rows.len()),
        switches: Vec::with_capacity(rows.len()),
        sensors: Vec::with_capacity(rows.len()),
    };
    for (t, s, y) in rows {
        flight.times.push(t);
        flight.switches.push(s);
        flight.sensors.push(y);
    }
    Ok(flight)
}

fn check_widths(flights: &[RawFlight], n_y: usize) -> Result<()> {
    let mut width = None;
    for f in flights {
        for (k, (s, y)) in f.switches.iter().zip(&f.sensors).enumerate() {
            match width {
                None => width = Some(s.width()),
                Some(w) if w != s.width() => {
                    return Err(Error::ingestion(&f.id, k, format!("{} switches, expected {w}", s.width())));
                }
                _ => {}
            }
            if y.len() != n_y {
                return Err(Error::ingestion(&f.id, k, format!("{} sensor values, expected {n_y}", y.len())));
            }
        }
    }
    Ok(())
}

fn parse_sensor(id: &str, t: usize, name: &str, text: &str) -> Result<f64> {
    let v: f64 = text
        .trim()
        .parse()
        .map_err(|_| Error::ingestion(id, t, format!("sensor `{name}` is not a number: `{text}`")))?;
    if !v.is_finite() {
        return Err(Error::ingestion(id, t, format!("sensor `{name}` is {v}")));
    }
    Ok(v)
}

/// One CSV data row.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub flight_id: String,
    pub t: i64,
    pub switches: SwitchFrame,
    pub sensors: DVector<f64>,
}

/// Row-by-row CSV reader. Errors carry the row's index within its flight.
pub struct CsvRows<R: Read> {
    records: csv::StringRecordsIntoIter<R>,
    n_fields: usize,
    columns: (usize, usize, usize),
    sensor_cols: Vec<usize>,
    sensor_names: Vec<String>,
    seen: HashMap<String, usize>,
}

impl<R: Read> CsvRows<R> {
    pub fn new(input: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(input);
        let headers = reader.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::ingestion("<header>", 0, format!("missing column `{name}`")))
        };
        let columns = if headers.is_empty() {
            (0, 0, 0)
        } else {
            (col("flight_id")?, col("t")?, col("switches")?)
        };
        let (c_id, c_t, c_sw) = columns;
        let sensor_cols: Vec<usize> = if headers.is_empty() {
            Vec::new()
        } else {
            (0..headers.len()).filter(|c| ![c_id, c_t, c_sw].contains(c)).collect()
        };
        let sensor_names = sensor_cols.iter().map(|&c| headers[c].trim().to_string()).collect();
        Ok(CsvRows {
            records: reader.into_records(),
            n_fields: headers.len(),
            columns,
            sensor_cols,
            sensor_names,
            seen: HashMap::new(),
        })
    }

    pub fn sensor_names(&self) -> &[String] {
        &self.sensor_names
    }

    fn parse(&mut self, record: csv::StringRecord) -> Result<RawRow> {
        let (c_id, c_t, c_sw) = self.columns;
        let id = record.get(c_id).unwrap_or("").trim().to_string();
        let k = self.seen.get(&id).copied().unwrap_or(0);
        if record.len() != self.n_fields {
            return Err(Error::ingestion(&id, k, format!("{} fields, header has {}", record.len(), self.n_fields)));
        }
        let t: i64 = record[c_t]
            .trim()
            .parse()
            .map_err(|_| Error::ingestion(&id, k, format!("bad time stamp `{}`", &record[c_t])))?;
        let switches = SwitchFrame::parse(record[c_sw].trim())
            .ok_or_else(|| Error::ingestion(&id, k, format!("non-binary switch value `{}`", &record[c_sw])))?;
        let y = self
            .sensor_cols
            .iter()
            .zip(&self.sensor_names)
            .map(|(&c, name)| parse_sensor(&id, k, name, &record[c]))
            .collect::<Result<Vec<_>>>()?;
        *self.seen.entry(id.clone()).or_default() += 1;
        Ok(RawRow {
            flight_id: id,
            t,
            switches,
            sensors: DVector::from_vec(y),
        })
    }
}

impl<R: Read> Iterator for CsvRows<R> {
    type Item = Result<RawRow>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.n_fields == 0 {
            return None;
        }
        let record = self.records.next()?;
        Some(record.map_err(Error::from).and_then(|r| self.parse(r)))
    }
}

/// Reads CSV flight data. Rows of one flight need not be contiguous.
pub fn read_csv<R: Read>(input: R) -> Result<RawDataset> {
    let mut rows_iter = CsvRows::new(input)?;
    let sensor_names = rows_iter.sensor_names().to_vec();
    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<(i64, SwitchFrame, DVector<f64>)>> = HashMap::new();
    for row in &mut rows_iter {
        let row = row?;
        if !rows.contains_key(&row.flight_id) {
            order.push(row.flight_id.clone());
        }
        rows.entry(row.flight_id).or_default().push((row.t, row.switches, row.sensors));
    }
    let flights = order
        .into_iter()
        .map(|id| {
            let r = rows.remove(&id).unwrap_or_default();
            finish_flight(id, r)
        })
        .collect::<Result<Vec<_>>>()?;
    check_widths(&flights, sensor_names.len())?;
    Ok(RawDataset { sensor_names, flights })
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SwitchField {
    Text(String),
    Ints(Vec<i64>),
}

#[derive(Serialize, Deserialize)]
struct JsonFlight {
    flight_id: String,
    t: Vec<i64>,
    switches: Vec<SwitchField>,
    sensors: Vec<Vec<Option<f64>>>,
}

/// Parses one JSONL flight line. `lineno` is one-based and only used in messages.
pub fn parse_jsonl_flight(line: &str, lineno: usize) -> Result<RawFlight> {
    let jf: JsonFlight = serde_json::from_str(line).map_err(|e| Error::Format(format!("line {lineno}: {e}")))?;
    let id = jf.flight_id;
    let len = jf.t.len();
    if jf.switches.len() != len || jf.sensors.len() != len {
        let k = len.min(jf.switches.len()).min(jf.sensors.len());
        return Err(Error::ingestion(&id, k, "t, switches and sensors have different lengths"));
    }
    let mut rows = Vec::with_capacity(len);
    let mut n_y = None;
    for (k, ((t, sw), ys)) in jf.t.into_iter().zip(jf.switches).zip(jf.sensors).enumerate() {
        let frame = match &sw {
            SwitchField::Text(s) => SwitchFrame::parse(s),
            SwitchField::Ints(v) => SwitchFrame::from_ints(v),
        }
        .ok_or_else(|| Error::ingestion(&id, k, "non-binary switch value"))?;
        let y = ys
            .iter()
            .enumerate()
            .map(|(j, v)| match v {
                Some(v) if v.is_finite() => Ok(*v),
                _ => Err(Error::ingestion(&id, k, format!("sensor {j} is missing or not finite"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if *n_y.get_or_insert(y.len()) != y.len() {
            return Err(Error::ingestion(&id, k, format!("{} sensor values, expected {}", y.len(), n_y.unwrap_or(0))));
        }
        rows.push((t, frame, DVector::from_vec(y)));
    }
    finish_flight(id, rows)
}

/// Reads JSONL flight data, one flight object per non-blank line.
pub fn read_jsonl<R: Read>(input: R) -> Result<RawDataset> {
    let mut flights = Vec::new();
    for (lineno, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        flights.push(parse_jsonl_flight(&line, lineno + 1)?);
    }
    let n_y = flights.iter().flat_map(|f| f.sensors.first()).map(|y| y.len()).next().unwrap_or(0);
    check_widths(&flights, n_y)?;
    let mut ds = RawDataset::default();
    ds.absorb(
        RawDataset {
            sensor_names: (0..n_y).map(|j| format!("y{j}")).collect(),
            flights,
        },
        "jsonl",
    )?;
    Ok(ds)
}

fn read_file(path: &Path) -> Result<RawDataset> {
    let file = File::open(path)?;
    match extension(path).as_deref() {
        Some("csv") => read_csv(file),
        Some("jsonl") | Some("json") | Some("ndjson") => read_jsonl(file),
        _ => Err(Error::Format(format!("{}: unknown data file extension", path.display()))),
    }
}

fn extension(p: &Path) -> Option<String> {
    p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase)
}

/// Files [`read_raw`] reads for `path`, in order. A directory contributes its
/// `.csv`, `.jsonl` and `.ndjson` files; `.json` is accepted only when named
/// explicitly, so manifests and model files next to the data are skipped.
pub fn data_files(path: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let path = path.as_ref();
    if !path.is_dir() {
        if !matches!(extension(path).as_deref(), Some("csv" | "jsonl" | "json" | "ndjson")) {
            return Err(Error::Format(format!("{}: unknown data file extension", path.display())));
        }
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.retain(|p| p.is_file() && matches!(extension(p).as_deref(), Some("csv" | "jsonl" | "ndjson")));
    files.sort();
    Ok(files)
}

/// Reads a CSV or JSONL file, or every such file in a directory.
pub fn read_raw(path: impl AsRef<Path>) -> Result<RawDataset> {
    let mut ds = RawDataset::default();
    for f in data_files(path)? {
        let part = read_file(&f)?;
        ds.absorb(part, &f.display().to_string())?;
    }
    Ok(ds)
}

/// Writes CSV with the layout [`read_csv`] expects. Values round-trip exactly.
pub fn write_csv<W: Write>(data: &RawDataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["flight_id".to_string(), "t".into(), "switches".into()];
    header.extend(data.sensor_names.iter().cloned());
    w.write_record(&header)?;
    for f in &data.flights {
        for k in 0..f.len() {
            let mut row = vec![f.id.clone(), f.times[k].to_string(), f.switches[k].to_string()];
            row.extend(f.sensors[k].iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes JSONL, one flight per line, switches as 0/1 strings.
pub fn write_jsonl<W: Write>(data: &RawDataset, mut out: W) -> Result<()> {
    for f in &data.flights {
        let jf = JsonFlight {
            flight_id: f.id.clone(),
            t: f.times.clone(),
            switches: f.switches.iter().map(|s| SwitchField::Text(s.to_string())).collect(),
            sensors: f.sensors.iter().map(|y| y.iter().map(|&v| Some(v)).collect()).collect(),
        };
        serde_json::to_writer(&mut out, &jf)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Encoded, standardized flights plus the statistics needed to encode more.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub flights: Vec<FlightRecord>,
    pub dictionary: ModeDictionary,
    pub standardizer: Standardizer,
}

/// Training-mode encoding: builds the dictionary and fits the standardizer.
pub fn build_training(raw: &RawDataset) -> Result<Dataset> {
    let n_y = raw.n_sensors();
    let mut dictionary = ModeDictionary::new(raw.switch_width().unwrap_or(0));
    let standardizer = Standardizer::fit(raw.flights.iter().flat_map(|f| f.sensors.iter()), n_y);
    let flights = raw
        .flights
        .iter()
        .map(|f| {
            let modes = f
                .switches
                .iter()
                .map(|s| dictionary.encode_or_insert(s))
                .collect::<Result<Vec<_>>>()?;
            record(f, modes, &standardizer)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        flights,
        dictionary,
        standardizer,
    })
}

/// Scoring-mode encoding with frozen statistics; unknown patterns map to the novel id.
pub fn build_scoring(raw: &RawDataset, dictionary: &ModeDictionary, standardizer: &Standardizer) -> Result<Vec<FlightRecord>> {
    if !raw.flights.is_empty() && raw.n_sensors() != standardizer.dim() {
        return Err(Error::Dimension(format!(
            "data has {} sensor channels, model expects {}",
            raw.n_sensors(),
            standardizer.dim()
        )));
    }
    raw.flights
        .iter()
        .map(|f| {
            let modes = f
                .switches
                .iter()
                .enumerate()
                .map(|(k, s)| dictionary.encode(s).map_err(|e| Error::ingestion(&f.id, k, e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            record(f, modes, standardizer)
        })
        .collect()
}

fn record(f: &RawFlight, modes: Vec<usize>, standardizer: &Standardizer) -> Result<FlightRecord> {
    let sensors = f.sensors.iter().map(|y| standardizer.apply(y)).collect();
    FlightRecord::from_modes(f.id.clone(), modes, sensors)
}

/// Reads and encodes a training dataset.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    build_training(&read_raw(path)?)
}

mod opt_matrix {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &Option<DMatrix<f64>>, s: S) -> std::result::Result<S::Ok, S::Error> {
        m.as_ref().map(matrix_rows).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<DMatrix<f64>>, D::Error> {
        let rows: Option<Vec<Vec<f64>>> = Option::deserialize(d)?;
        rows.map(|r| {
            let n = r.first().map_or(0, Vec::len);
            matrix_from_rows(&r, n).map_err(serde::de::Error::custom)
        })
        .transpose()
    }
}

/// Everything `score` needs from `train`, stored as one JSON document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub params: ModelParams,
    pub dictionary: ModeDictionary,
    pub standardizer: Standardizer,
    #[serde(default, with = "opt_matrix", skip_serializing_if = "Option::is_none")]
    pub var_baseline: Option<DMatrix<f64>>,
}

impl ModelFile {
    pub fn new(params: ModelParams, dictionary: ModeDictionary, standardizer: Standardizer, var_baseline: Option<DMatrix<f64>>) -> Self {
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            params,
            dictionary,
            standardizer,
            var_baseline,
        }
    }

    fn check(&self) -> Result<()> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "model format version {} (this build reads {MODEL_FORMAT_VERSION})",
                self.format_version
            )));
        }
        let n_y = self.params.n_sensors();
        if self.standardizer.dim() != n_y {
            return Err(Error::Dimension("standardizer and VAR matrices disagree on n_y".into()));
        }
        if self.dictionary.len() + 1 != self.params.n_modes() {
            return Err(Error::Dimension(format!(
                "dictionary has {} patterns but the model has {} modes (expected one extra for novel patterns)",
                self.dictionary.len(),
                self.params.n_modes()
            )));
        }
        if let Some(a) = &self.var_baseline {
            if a.shape() != (n_y, n_y) {
                return Err(Error::Dimension("VAR baseline matrix has the wrong shape".into()));
            }
        }
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let model: ModelFile = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        model.check()?;
        Ok(model)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        self.check()?;
        write_atomic(path, |w| Ok(serde_json::to_writer_pretty(w, self)?))
    }

    pub fn scoring_model(&self) -> ScoringModel {
        ScoringModel {
            params: self.params.clone(),
            var_matrix: self.var_baseline.clone(),
        }
    }
}

/// Writes through a temporary file in the same directory and renames it into
/// place, so readers never see a partial file.
pub fn write_atomic(path: impl AsRef<Path>, fill: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut builder = tempfile::Builder::new();
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        // tempfile defaults to owner-only access; outputs are ordinary files
        builder.permissions(std::fs::Permissions::from_mode(0o644));
    }
    let mut tmp = builder.tempfile_in(dir)?;
    {
        let mut w = std::io::BufWriter::new(tmp.as_file_mut());
        fill(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}
