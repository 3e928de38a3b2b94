use nalgebra::DMatrix;

use crate::detection::{Method, ScoreSeries};
use crate::error::{Error, Result};
use crate::flight::FlightRecord;
use crate::linalg::{tsqr_solve, Panel};

/// Pooled OLS estimate of one VAR(1) matrix over all flights.
pub fn var_baseline_fit(flights: &[FlightRecord], ridge: f64) -> Result<DMatrix<f64>> {
    let panels: Vec<Panel> = flights
        .iter()
        .filter(|f| f.len() > 1)
        .map(|f| {
            let rows = f.len() - 1;
            let n_y = f.sensors[0].len();
            let design = DMatrix::from_fn(rows, n_y, |t, j| f.sensors[t][j]);
            let response = DMatrix::from_fn(rows, n_y, |t, j| f.sensors[t + 1][j]);
            Panel::new(design, response)
        })
        .collect();
    if panels.is_empty() {
        return Err(Error::InvalidParam("VAR baseline needs at least one flight with two steps".into()));
    }
    let sol = tsqr_solve(&panels, ridge)?;
    if sol.ridge_applied {
        log::warn!("VAR baseline design is rank deficient; ridge fallback used");
    }
    Ok(sol.coefficients.transpose())
}

/// One-step prediction error norms `||y_t - A y_{t-1}||`.
pub fn var_baseline_score(flight: &FlightRecord, a: &DMatrix<f64>) -> Result<ScoreSeries> {
    if let Some(n_y) = flight.n_sensors() {
        if a.nrows() != n_y || a.ncols() != n_y {
            return Err(Error::Dimension(format!("VAR matrix is {}x{}, flight has {n_y} sensors", a.nrows(), a.ncols())));
        }
    }
    let values = (1..flight.len())
        .map(|t| residual_norm(a, &flight.sensors[t - 1], &flight.sensors[t]))
        .collect();
    Ok(ScoreSeries::from_values(flight.id.clone(), Method::Var, values))
}

pub(crate) fn residual_norm(a: &DMatrix<f64>, prev: &nalgebra::DVector<f64>, y: &nalgebra::DVector<f64>) -> f64 {
    (y - a * prev).norm()
}
