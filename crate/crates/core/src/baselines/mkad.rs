//! Multiple-kernel anomaly detection over whole flights.
//!
//! The discrete kernel compares mode-id sequences through their normalized
//! longest common subsequence. The continuous kernel compares per-channel SAX
//! words. A one-class SVM on the convex combination decides which flights lie
//! outside the bulk.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::lcs::lcs_kernel;
use super::ocsvm::OneClassSvm;
use super::sax::{sax_transform, SaxConfig};
use crate::detection::{Method, ScoreSeries};
use crate::error::{Error, Result};
use crate::flight::{FlightRecord, Standardizer};

/// Eigenvalues below `-PSD_TOL` trigger diagonal jitter.
const PSD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MkadConfig {
    /// Weight of the discrete kernel.
    pub alpha: f64,
    pub nu: f64,
    pub sax: SaxConfig,
}

impl Default for MkadConfig {
    fn default() -> Self {
        MkadConfig {
            alpha: 0.5,
            nu: 0.1,
            sax: SaxConfig::new(8, 2).expect("valid default"),
        }
    }
}

impl MkadConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidParam(format!("alpha = {} not in [0, 1]", self.alpha)));
        }
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return Err(Error::InvalidParam(format!("nu = {} not in (0, 1]", self.nu)));
        }
        Ok(())
    }

    /// Hex SHA-256 of the JSON form, used to tag kernel dumps.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub values: DMatrix<f64>,
    pub alpha: f64,
    /// Amount added to the diagonal to make the matrix positive semidefinite.
    pub jitter: f64,
}

#[derive(Serialize, Deserialize)]
struct DumpHeader {
    rows: usize,
    cols: usize,
    alpha: f64,
    jitter: f64,
    config_hash: String,
}

impl KernelMatrix {
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Little-endian `u32` header length, JSON header, then row-major `f64` values.
    pub fn write_to<W: Write>(&self, config_hash: &str, mut out: W) -> Result<()> {
        let header = serde_json::to_vec(&DumpHeader {
            rows: self.values.nrows(),
            cols: self.values.ncols(),
            alpha: self.alpha,
            jitter: self.jitter,
            config_hash: config_hash.to_string(),
        })?;
        let len = u32::try_from(header.len()).map_err(|_| Error::Format("kernel header too large".into()))?;
        out.write_all(&len.to_le_bytes())?;
        out.write_all(&header)?;
        for i in 0..self.values.nrows() {
            for j in 0..self.values.ncols() {
                out.write_all(&self.values[(i, j)].to_le_bytes())?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a dump written by [`KernelMatrix::write_to`]; returns the stored config hash too.
    pub fn read_from<R: Read>(mut input: R) -> Result<(Self, String)> {
        let mut len = [0u8; 4];
        input.read_exact(&mut len)?;
        let mut header = vec![0u8; u32::from_le_bytes(len) as usize];
        input.read_exact(&mut header)?;
        let header: DumpHeader = serde_json::from_slice(&header)?;
        if header.rows != header.cols {
            return Err(Error::Format(format!("kernel dump is {}x{}", header.rows, header.cols)));
        }
        let mut values = DMatrix::zeros(header.rows, header.cols);
        let mut buf = [0u8; 8];
        for i in 0..header.rows {
            for j in 0..header.cols {
                input.read_exact(&mut buf)?;
                values[(i, j)] = f64::from_le_bytes(buf);
            }
        }
        Ok((
            KernelMatrix {
                values,
                alpha: header.alpha,
                jitter: header.jitter,
            },
            header.config_hash,
        ))
    }
}

#[derive(Debug, Clone)]
pub struct MkadOutput {
    pub kernel: KernelMatrix,
    pub svm: OneClassSvm,
    /// One scalar-only series per flight; larger means more anomalous.
    pub scores: Vec<ScoreSeries>,
}

impl MkadOutput {
    pub fn jitter_added(&self) -> bool {
        self.kernel.jitter > 0.0
    }
}

// SAX words for every sensor channel, after z-scoring each channel over the whole dataset.
fn continuous_words(flights: &[FlightRecord], sax: &SaxConfig) -> Result<Vec<Vec<Vec<u8>>>> {
    let n_y = flights[0].n_sensors().unwrap_or(0);
    let standardizer = Standardizer::fit(flights.iter().flat_map(|f| f.sensors.iter()), n_y);
    flights
        .iter()
        .map(|f| {
            let z: Vec<_> = f.sensors.iter().map(|y| standardizer.apply(y)).collect();
            (0..n_y)
                .map(|c| sax_transform(&z.iter().map(|v| v[c]).collect::<Vec<_>>(), sax))
                .collect()
        })
        .collect()
}

/// Symbol distance scaled to `[0, 1]`; unmatched tail symbols count as maximal mismatch.
fn word_distance(s: &[u8], u: &[u8], alphabet_size: usize) -> f64 {
    let longest = s.len().max(u.len());
    if longest == 0 {
        return 0.0;
    }
    let scale = (alphabet_size - 1) as f64;
    let common: f64 = s
        .iter()
        .zip(u)
        .map(|(&a, &b)| f64::from(a.abs_diff(b)) / scale)
        .sum();
    (common + s.len().abs_diff(u.len()) as f64) / longest as f64
}

fn continuous_kernel(a: &[Vec<u8>], b: &[Vec<u8>], alphabet_size: usize) -> f64 {
    if a.is_empty() {
        return 1.0;
    }
    let mean = a
        .iter()
        .zip(b)
        .map(|(s, u)| word_distance(s, u, alphabet_size))
        .sum::<f64>()
        / a.len() as f64;
    1.0 / (1.0 + mean)
}

/// Combined kernel `alpha K_d + (1 - alpha) K_c` over all flight pairs,
/// with diagonal jitter if rounding left it indefinite.
pub fn mkad_kernel(flights: &[FlightRecord], cfg: &MkadConfig) -> Result<KernelMatrix> {
    cfg.validate()?;
    if flights.is_empty() {
        return Err(Error::InvalidParam("MKAD needs at least one flight".into()));
    }
    let n_y = flights[0].n_sensors().unwrap_or(0);
    for f in flights {
        if f.is_empty() {
            return Err(Error::InvalidParam(format!("flight `{}` is empty", f.id)));
        }
        if f.n_sensors() != Some(n_y) {
            return Err(Error::Dimension(format!("flight `{}` has a different sensor count", f.id)));
        }
    }
    let words = continuous_words(flights, &cfg.sax)?;
    let n = flights.len();
    let a = cfg.sax.alphabet_size();
    let upper: Vec<(usize, usize, f64)> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let words = &words;
            (i..n).map(move |j| {
                let kd = lcs_kernel(&flights[i].modes, &flights[j].modes);
                let kc = continuous_kernel(&words[i], &words[j], a);
                (i, j, cfg.alpha * kd + (1.0 - cfg.alpha) * kc)
            })
        })
        .collect();
    let mut values = DMatrix::zeros(n, n);
    for (i, j, v) in upper {
        values[(i, j)] = v;
        values[(j, i)] = v;
    }
    let min_eig = values.clone().symmetric_eigenvalues().min();
    let jitter = if min_eig < -PSD_TOL { -min_eig + PSD_TOL } else { 0.0 };
    if jitter > 0.0 {
        log::warn!("MKAD kernel indefinite (min eigenvalue {min_eig:.3e}); adding {jitter:.3e} to the diagonal");
        for i in 0..n {
            values[(i, i)] += jitter;
        }
    }
    Ok(KernelMatrix {
        values,
        alpha: cfg.alpha,
        jitter,
    })
}

/// Scores every flight by its negated one-class decision value.
pub fn mkad_score(flights: &[FlightRecord], cfg: &MkadConfig) -> Result<MkadOutput> {
    let kernel = mkad_kernel(flights, cfg)?;
    mkad_score_kernel(flights, kernel, cfg.nu)
}

/// Same as [`mkad_score`] for a kernel built earlier (for example one read back from a dump).
pub fn mkad_score_kernel(flights: &[FlightRecord], kernel: KernelMatrix, nu: f64) -> Result<MkadOutput> {
    if kernel.len() != flights.len() {
        return Err(Error::Dimension(format!(
            "kernel covers {} flights, dataset has {}",
            kernel.len(),
            flights.len()
        )));
    }
    let svm = OneClassSvm::fit(&kernel.values, nu)?;
    let scores = flights
        .iter()
        .zip(svm.decision_values())
        .map(|(f, d)| ScoreSeries {
            flight_id: f.id.clone(),
            method: Method::Mkad,
            values: Vec::new(),
            summary: -d,
        })
        .collect();
    Ok(MkadOutput { kernel, svm, scores })
}
