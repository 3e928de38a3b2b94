//! Flight records and the mode encoding that turns switch bit-patterns into
//! dense integer ids.
//!
//! Mode ids and phase ids are zero-based throughout the crate. A dictionary
//! with `n` known patterns reserves id `n` for patterns first seen at
//! scoring time (see [`ModeDictionary::novel_id`]).

use std::collections::HashMap;
use std::fmt;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Values of the binary pilot switches at one time step.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SwitchFrame(Vec<bool>);

impl SwitchFrame {
    pub fn new(bits: Vec<bool>) -> Self {
        SwitchFrame(bits)
    }

    /// Parses a fixed-width string of `0`/`1` characters.
    pub fn parse(s: &str) -> Option<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Some(false),
                '1' => Some(true),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()
            .map(SwitchFrame)
    }

    /// Builds a frame from integer values, rejecting anything other than 0 or 1.
    pub fn from_ints(values: &[i64]) -> Option<Self> {
        values
            .iter()
            .map(|&v| match v {
                0 => Some(false),
                1 => Some(true),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()
            .map(SwitchFrame)
    }

    /// The `width` low bits of `value`, most significant bit first.
    pub fn from_bits(value: usize, width: usize) -> Self {
        SwitchFrame((0..width).rev().map(|i| (value >> i) & 1 == 1).collect())
    }

    pub fn width(&self) -> usize {
        self.0.len()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }
}

impl fmt::Display for SwitchFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Dense re-indexing of the switch patterns observed in a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DictionaryRepr", into = "DictionaryRepr")]
pub struct ModeDictionary {
    width: usize,
    patterns: Vec<SwitchFrame>,
    index: HashMap<SwitchFrame, usize>,
}

#[derive(Serialize, Deserialize)]
struct DictionaryRepr {
    width: usize,
    patterns: Vec<String>,
}

impl TryFrom<DictionaryRepr> for ModeDictionary {
    type Error = String;

    fn try_from(repr: DictionaryRepr) -> std::result::Result<Self, String> {
        let mut dict = ModeDictionary::new(repr.width);
        for p in &repr.patterns {
            let frame = SwitchFrame::parse(p).ok_or_else(|| format!("bad pattern `{p}`"))?;
            if frame.width() != repr.width {
                return Err(format!("pattern `{p}` has width {}", frame.width()));
            }
            if dict.index.contains_key(&frame) {
                return Err(format!("duplicate pattern `{p}`"));
            }
            dict.insert(frame);
        }
        Ok(dict)
    }
}

impl From<ModeDictionary> for DictionaryRepr {
    fn from(dict: ModeDictionary) -> Self {
        DictionaryRepr {
            width: dict.width,
            patterns: dict.patterns.iter().map(|p| p.to_string()).collect(),
        }
    }
}

impl ModeDictionary {
    pub fn new(width: usize) -> Self {
        ModeDictionary {
            width,
            patterns: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Dictionary containing every pattern of `width` switches, where id `k`
    /// is the binary representation of `k`.
    pub fn full(width: usize) -> Self {
        let mut dict = ModeDictionary::new(width);
        for k in 0..(1usize << width) {
            dict.insert(SwitchFrame::from_bits(k, width));
        }
        dict
    }

    fn insert(&mut self, frame: SwitchFrame) -> usize {
        let id = self.patterns.len();
        self.index.insert(frame.clone(), id);
        self.patterns.push(frame);
        id
    }

    fn check_width(&self, frame: &SwitchFrame) -> Result<()> {
        if frame.width() != self.width {
            return Err(Error::Dimension(format!(
                "switch frame has {} entries, dictionary expects {}",
                frame.width(),
                self.width
            )));
        }
        Ok(())
    }

    /// Training-mode encoding: unknown patterns get the next free id.
    pub fn encode_or_insert(&mut self, frame: &SwitchFrame) -> Result<usize> {
        self.check_width(frame)?;
        match self.index.get(frame) {
            Some(&id) => Ok(id),
            None => Ok(self.insert(frame.clone())),
        }
    }

    /// Scoring-mode encoding: unknown patterns map to [`Self::novel_id`].
    pub fn encode(&self, frame: &SwitchFrame) -> Result<usize> {
        self.check_width(frame)?;
        Ok(self.index.get(frame).copied().unwrap_or(self.novel_id()))
    }

    pub fn decode(&self, id: usize) -> Option<&SwitchFrame> {
        self.patterns.get(id)
    }

    /// Reserved id for patterns that were never seen during training.
    pub fn novel_id(&self) -> usize {
        self.patterns.len()
    }

    /// Number of known patterns.
    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }
}

/// Countdown durations implied by a mode sequence: each maximal run of
/// length `L` becomes `L, L-1, ..., 1`. The final run is counted to the end
/// of the sequence.
pub fn derive_durations(modes: &[usize]) -> Vec<u32> {
    let mut durations = vec![0u32; modes.len()];
    let mut remaining = 0u32;
    for t in (0..modes.len()).rev() {
        if t + 1 < modes.len() && modes[t + 1] == modes[t] {
            remaining += 1;
        } else {
            remaining = 1;
        }
        durations[t] = remaining;
    }
    durations
}

/// One observed sequence: durations, modes and sensor vectors, all of length `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlightRecord {
    pub id: String,
    pub durations: Vec<u32>,
    pub modes: Vec<usize>,
    pub sensors: Vec<DVector<f64>>,
}

impl FlightRecord {
    /// Builds a record from modes and sensors, deriving the durations.
    pub fn from_modes(id: impl Into<String>, modes: Vec<usize>, sensors: Vec<DVector<f64>>) -> Result<Self> {
        let record = FlightRecord {
            id: id.into(),
            durations: derive_durations(&modes),
            modes,
            sensors,
        };
        record.validate()?;
        Ok(record)
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Sensor dimension, or `None` for an empty record.
    pub fn n_sensors(&self) -> Option<usize> {
        self.sensors.first().map(|y| y.len())
    }

    /// Checks lengths, sensor widths and the countdown semantics.
    pub fn validate(&self) -> Result<()> {
        let t_len = self.modes.len();
        if self.durations.len() != t_len || self.sensors.len() != t_len {
            return Err(Error::Dimension(format!(
                "flight `{}`: |d|={}, |m|={}, |y|={}",
                self.id,
                self.durations.len(),
                t_len,
                self.sensors.len()
            )));
        }
        let n_y = self.n_sensors().unwrap_or(0);
        for t in 0..t_len {
            if self.sensors[t].len() != n_y {
                return Err(Error::ingestion(&self.id, t, "inconsistent sensor width"));
            }
            if self.durations[t] == 0 {
                return Err(Error::ingestion(&self.id, t, "duration must be at least 1"));
            }
            if t > 0 && self.durations[t - 1] > 1 {
                if self.modes[t] != self.modes[t - 1] {
                    return Err(Error::ingestion(&self.id, t, "mode changed before countdown expired"));
                }
                if self.durations[t] != self.durations[t - 1] - 1 {
                    return Err(Error::ingestion(&self.id, t, "countdown did not decrement"));
                }
            }
        }
        Ok(())
    }
}

/// Per-channel z-score statistics, computed on a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Fits channel means and standard deviations over every time step of every
    /// flight. Constant channels get a unit scale.
    pub fn fit<'a>(sensors: impl IntoIterator<Item = &'a DVector<f64>>, n_y: usize) -> Self {
        let mut count = 0usize;
        let mut mean = vec![0.0; n_y];
        let mut m2 = vec![0.0; n_y];
        for y in sensors {
            count += 1;
            for j in 0..n_y {
                let delta = y[j] - mean[j];
                mean[j] += delta / count as f64;
                m2[j] += delta * (y[j] - mean[j]);
            }
        }
        let std = m2
            .iter()
            .map(|&s| {
                let sd = if count > 1 { (s / (count - 1) as f64).sqrt() } else { 0.0 };
                if sd > 0.0 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, y: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(y.len(), y.iter().enumerate().map(|(j, v)| (v - self.mean[j]) / self.std[j]))
    }

    pub fn invert(&self, z: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(z.len(), z.iter().enumerate().map(|(j, v)| v * self.std[j] + self.mean[j]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn durations_count_down_within_runs() {
        assert_eq!(derive_durations(&[0, 0, 0, 1, 1]), vec![3, 2, 1, 2, 1]);
        assert_eq!(derive_durations(&[4]), vec![1]);
        assert_eq!(derive_durations(&[0, 1, 0]), vec![1, 1, 1]);
        assert!(derive_durations(&[]).is_empty());
    }

    // Forward simulation of the countdown rules: a mode may change only when the
    // previous countdown hit 1, and otherwise the countdown decrements.
    fn consistent_with_delta_rules(modes: &[usize], d: &[u32]) -> bool {
        (1..modes.len()).all(|t| {
            if d[t - 1] > 1 {
                modes[t] == modes[t - 1] && d[t] == d[t - 1] - 1
            } else {
                modes[t] != modes[t - 1]
            }
        }) && d.last().is_none_or(|&v| v == 1)
    }

    proptest! {
        #[test]
        fn derived_durations_satisfy_countdown(modes in proptest::collection::vec(0usize..4, 1..60)) {
            let d = derive_durations(&modes);
            prop_assert!(consistent_with_delta_rules(&modes, &d));
            let sensors = vec![DVector::zeros(1); modes.len()];
            prop_assert!(FlightRecord::from_modes("p", modes, sensors).is_ok());
        }

        #[test]
        fn standardize_round_trip(rows in proptest::collection::vec(proptest::collection::vec(-1e3f64..1e3, 3), 2..40)) {
            let ys: Vec<DVector<f64>> = rows.iter().map(|r| DVector::from_vec(r.clone())).collect();
            let st = Standardizer::fit(ys.iter(), 3);
            for y in &ys {
                let back = st.invert(&st.apply(y));
                for j in 0..3 {
                    prop_assert!((back[j] - y[j]).abs() <= 1e-10 * (1.0 + y[j].abs()));
                }
            }
        }

        #[test]
        fn encode_is_injective(codes in proptest::collection::vec(0usize..32, 1..100)) {
            let mut dict = ModeDictionary::new(5);
            let ids: Vec<usize> = codes.iter().map(|&c| dict.encode_or_insert(&SwitchFrame::from_bits(c, 5)).unwrap()).collect();
            for (i, a) in codes.iter().enumerate() {
                for (j, b) in codes.iter().enumerate() {
                    prop_assert_eq!(a == b, ids[i] == ids[j]);
                }
            }
            // a frozen dictionary reproduces the same ids
            for (c, id) in codes.iter().zip(&ids) {
                prop_assert_eq!(dict.encode(&SwitchFrame::from_bits(*c, 5)).unwrap(), *id);
            }
        }
    }

    #[test]
    fn encode_first_seen_and_novel() {
        let mut dict = ModeDictionary::new(5);
        let zero = SwitchFrame::parse("00000").unwrap();
        assert_eq!(dict.encode_or_insert(&zero).unwrap(), 0);
        let other = SwitchFrame::parse("10000").unwrap();
        assert_eq!(dict.encode(&other).unwrap(), dict.novel_id());
        assert_eq!(dict.novel_id(), 1);
        assert!(matches!(
            dict.encode(&SwitchFrame::parse("000").unwrap()),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn five_switches_give_at_most_32_ids() {
        let mut dict = ModeDictionary::new(5);
        for k in 0..200usize {
            dict.encode_or_insert(&SwitchFrame::from_bits(k * 7 % 32, 5)).unwrap();
        }
        assert!(dict.len() <= 32);
        assert_eq!(ModeDictionary::full(5).len(), 32);
    }

    #[test]
    fn dense_ids_count_only_observed_patterns() {
        let rows = ["10110", "00000", "10110", "11111", "00000", "11111"];
        let mut dict = ModeDictionary::new(5);
        for r in rows {
            dict.encode_or_insert(&SwitchFrame::parse(r).unwrap()).unwrap();
        }
        let distinct: std::collections::BTreeSet<&str> = rows.iter().copied().collect();
        assert_eq!(dict.len(), distinct.len());
        assert_eq!(dict.len(), 3);
    }

    #[test]
    fn dictionary_serde_is_stable() {
        let mut dict = ModeDictionary::new(3);
        for p in ["101", "000", "111"] {
            dict.encode_or_insert(&SwitchFrame::parse(p).unwrap()).unwrap();
        }
        let json = serde_json::to_string(&dict).unwrap();
        let back: ModeDictionary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, dict);
        assert_eq!(back.encode(&SwitchFrame::parse("111").unwrap()).unwrap(), 2);
    }

    #[test]
    fn validate_rejects_broken_countdown() {
        let sensors = vec![DVector::zeros(1); 3];
        let rec = FlightRecord {
            id: "x".into(),
            durations: vec![2, 2, 1],
            modes: vec![0, 0, 0],
            sensors,
        };
        assert!(matches!(rec.validate(), Err(Error::Ingestion { t: 1, .. })));
    }
}
