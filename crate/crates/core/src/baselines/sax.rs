use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Symbolic aggregate approximation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SaxParams", into = "SaxParams")]
pub struct SaxConfig {
    alphabet_size: usize,
    window: usize,
    breakpoints: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SaxParams {
    alphabet_size: usize,
    window: usize,
}

impl TryFrom<SaxParams> for SaxConfig {
    type Error = Error;
    fn try_from(p: SaxParams) -> Result<Self> {
        SaxConfig::new(p.alphabet_size, p.window)
    }
}

impl From<SaxConfig> for SaxParams {
    fn from(c: SaxConfig) -> Self {
        SaxParams {
            alphabet_size: c.alphabet_size,
            window: c.window,
        }
    }
}

impl SaxConfig {
    /// Alphabet of `alphabet_size` symbols with equiprobable standard-normal
    /// breakpoints; segments of `window` steps.
    pub fn new(alphabet_size: usize, window: usize) -> Result<Self> {
        if !(2..=256).contains(&alphabet_size) {
            return Err(Error::InvalidParam(format!("alphabet size {alphabet_size} not in 2..=256")));
        }
        if window == 0 {
            return Err(Error::InvalidParam("SAX window must be at least 1".into()));
        }
        let normal = Normal::standard();
        let breakpoints = (1..alphabet_size)
            .map(|i| normal.inverse_cdf(i as f64 / alphabet_size as f64))
            .collect();
        Ok(SaxConfig {
            alphabet_size,
            window,
            breakpoints,
        })
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn symbol(&self, value: f64) -> u8 {
        self.breakpoints.partition_point(|&b| b <= value) as u8
    }
}

/// Piecewise means over consecutive windows mapped to symbols `0..alphabet_size`.
/// A shorter final window is averaged over its own length.
pub fn sax_transform(series: &[f64], cfg: &SaxConfig) -> Result<Vec<u8>> {
    if series.is_empty() {
        return Err(Error::InvalidParam("cannot SAX-transform an empty series".into()));
    }
    Ok(series
        .chunks(cfg.window)
        .map(|seg| cfg.symbol(seg.iter().sum::<f64>() / seg.len() as f64))
        .collect())
}
