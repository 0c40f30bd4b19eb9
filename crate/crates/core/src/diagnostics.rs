//! Residual diagnostics: residual series, auto- and cross-correlations,
//! partial autocorrelations and normal QQ coordinates.

use nalgebra::DMatrix;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{GstvarError, Result};
use crate::model::{log_likelihood_trace, ParameterVector, SeriesMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSet {
    /// `T x d`, `y_t - μ_{y,t}`.
    pub raw: DMatrix<f64>,
    /// `T x d`, `B_t^{-1}(y_t - μ_{y,t})`.
    pub standardized: DMatrix<f64>,
}

pub fn residuals(params: &ParameterVector, data: &SeriesMatrix) -> Result<ResidualSet> {
    let trace = log_likelihood_trace(params, data)?;
    Ok(ResidualSet { raw: trace.residuals, standardized: trace.standardized })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Correlogram {
    /// `values[ℓ][(i, j)] = corr(x_{i,t}, x_{j,t-ℓ})`.
    pub values: Vec<DMatrix<f64>>,
    /// `1.96 / √T`.
    pub band: f64,
}

impl Correlogram {
    /// Long format `(lag, i, j, value)` with 0-based indices.
    pub fn long_rows(&self) -> Vec<(usize, usize, usize, f64)> {
        let mut out = Vec::new();
        for (lag, m) in self.values.iter().enumerate() {
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    out.push((lag, i, j, m[(i, j)]));
                }
            }
        }
        out
    }
}

fn centered_columns(series: &DMatrix<f64>) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let t = series.nrows();
    let mut cols = Vec::with_capacity(series.ncols());
    let mut var = Vec::with_capacity(series.ncols());
    for j in 0..series.ncols() {
        let col = series.column(j);
        let first = col[0];
        if col.iter().all(|v| *v == first) {
            return Err(GstvarError::ZeroVariance { column: j + 1 });
        }
        let mean = col.sum() / t as f64;
        let c: Vec<f64> = col.iter().map(|v| v - mean).collect();
        let v = c.iter().map(|x| x * x).sum::<f64>() / t as f64;
        if !(v > 0.0) {
            return Err(GstvarError::ZeroVariance { column: j + 1 });
        }
        cols.push(c);
        var.push(v);
    }
    Ok((cols, var))
}

/// Sample auto- and cross-correlations up to `max_lag` using the full-sample
/// means and lag-0 variances.
pub fn acf_ccf(series: &DMatrix<f64>, max_lag: usize) -> Result<Correlogram> {
    let t = series.nrows();
    if t == 0 || max_lag >= t {
        return Err(GstvarError::InvalidInput(format!("max lag {max_lag} needs more than {t} observations")));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(GstvarError::InvalidInput("non-finite values".into()));
    }
    let d = series.ncols();
    let (cols, var) = centered_columns(series)?;
    let values = (0..=max_lag)
        .map(|lag| {
            DMatrix::from_fn(d, d, |i, j| {
                if lag == 0 && i == j {
                    return 1.0;
                }
                let c: f64 = (lag..t).map(|s| cols[i][s] * cols[j][s - lag]).sum::<f64>() / t as f64;
                c / (var[i] * var[j]).sqrt()
            })
        })
        .collect();
    Ok(Correlogram { values, band: 1.96 / (t as f64).sqrt() })
}

pub fn squared_std_residual_acf(residuals: &ResidualSet, max_lag: usize) -> Result<Correlogram> {
    acf_ccf(&residuals.standardized.map(|v| v * v), max_lag)
}

/// Partial autocorrelations at lags `1..=max_lag` (Durbin–Levinson).
pub fn pacf(column: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let t = column.len();
    if max_lag == 0 || 2 * max_lag >= t {
        return Err(GstvarError::InvalidInput(format!("max lag {max_lag} must be below T/2 = {}", t / 2)));
    }
    let acf = acf_ccf(&DMatrix::from_column_slice(t, 1, column), max_lag)?;
    let r: Vec<f64> = acf.values.iter().map(|m| m[(0, 0)]).collect();
    let mut out = Vec::with_capacity(max_lag);
    let mut phi: Vec<f64> = Vec::with_capacity(max_lag);
    for k in 1..=max_lag {
        let num = r[k] - (1..k).map(|j| phi[j - 1] * r[k - j]).sum::<f64>();
        let den = 1.0 - (1..k).map(|j| phi[j - 1] * r[j]).sum::<f64>();
        let kk = num / den;
        let prev = phi.clone();
        for j in 1..k {
            phi[j - 1] = prev[j - 1] - kk * prev[k - j - 1];
        }
        phi.push(kk);
        out.push(kk);
    }
    Ok(out)
}

/// `(Φ^{-1}((k - 0.5)/T), x_(k))` for `k = 1..T`.
pub fn qq_points(column: &[f64]) -> Result<Vec<(f64, f64)>> {
    let t = column.len();
    if t < 2 {
        return Err(GstvarError::InvalidInput("QQ points need at least two observations".into()));
    }
    if column.iter().any(|v| !v.is_finite()) {
        return Err(GstvarError::InvalidInput("non-finite values".into()));
    }
    let mut sorted = column.to_vec();
    sorted.sort_by(f64::total_cmp);
    let normal = Normal::standard();
    Ok(sorted
        .into_iter()
        .enumerate()
        .map(|(k, x)| (normal.inverse_cdf((k as f64 + 0.5) / t as f64), x))
        .collect())
}
