//! Data CSV ingestion, model JSON persistence and atomic output writes.

use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use gstvar::estimation::{information_criteria, FittedModel};
use gstvar::linalg::{unvech, vec_of, vech};
use gstvar::{JsrCertificate, ModelOrder, ParameterVector, RegimeParameters, SeriesMatrix};

pub const SCHEMA_VERSION: &str = "1";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Writes `bytes` to a temporary file next to `path` and renames it into
/// place, so a failed command never leaves partial output.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating a file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| anyhow!("writing {}: {}", path.display(), e.error))?;
    Ok(())
}

/// Reads a headed CSV; an optional first column named `date` is kept as
/// labels, every other cell must be a finite number.
pub fn read_data(path: &Path) -> Result<SeriesMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let has_date = headers.first().is_some_and(|h| h.eq_ignore_ascii_case("date"));
    let first = usize::from(has_date);
    let names = headers[first..].to_vec();
    if names.is_empty() {
        bail!("{}: no data columns", path.display());
    }
    let mut values = Vec::new();
    let mut dates = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.with_context(|| format!("reading {}", path.display()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != headers.len() {
            bail!("{}: line {line}: expected {} cells, found {}", path.display(), headers.len(), record.len());
        }
        if has_date {
            dates.push(record[0].to_string());
        }
        for (col, cell) in record.iter().enumerate().skip(first) {
            let v: f64 = cell.parse().map_err(|_| {
                anyhow!("{}: line {line}, column {} ({}): '{cell}' is not a number", path.display(), col + 1, headers[col])
            })?;
            if !v.is_finite() {
                bail!("{}: line {line}, column {} ({}): non-finite value", path.display(), col + 1, headers[col]);
            }
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        bail!("{}: no observations", path.display());
    }
    let mut data = SeriesMatrix::from_row_major(rows, names.len(), values)?.with_names(names)?;
    if has_date {
        data = data.with_timestamps(dates)?;
    }
    Ok(data)
}

/// CSV text for a data matrix, with a `date` column when timestamps exist.
pub fn data_csv(data: &SeriesMatrix) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = Vec::new();
    if data.timestamps().is_some() {
        header.push("date".into());
    }
    header.extend(data.names().iter().cloned());
    w.write_record(&header)?;
    for t in 0..data.nrows() {
        let mut rec: Vec<String> = Vec::with_capacity(header.len());
        if let Some(ts) = data.timestamps() {
            rec.push(ts[t].clone());
        }
        rec.extend(data.row(t).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    Ok(w.into_inner()?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderJson {
    pub d: usize,
    pub p: usize,
    #[serde(rename = "M")]
    pub m: usize,
}

/// Parameters as named arrays; `ar[m][i]` is column-major `vec(A_{m,i})`,
/// `omega[m]` is column-major `vech(Ω_m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaJson {
    pub phi0: Vec<Vec<f64>>,
    pub ar: Vec<Vec<Vec<f64>>>,
    pub omega: Vec<Vec<f64>>,
    pub alphas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsrJson {
    pub lower: f64,
    pub upper: f64,
    pub tolerance: f64,
    pub converged: bool,
    pub products_explored: usize,
    pub iterations: usize,
}

impl From<&JsrCertificate> for JsrJson {
    fn from(c: &JsrCertificate) -> Self {
        Self {
            lower: c.lower,
            upper: c.upper,
            tolerance: c.tolerance_requested,
            converged: c.converged,
            products_explored: c.products_explored,
            iterations: c.iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundJson {
    pub round: usize,
    pub loglik: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitJson {
    pub loglik: f64,
    #[serde(rename = "T")]
    pub t: usize,
    pub seed: u64,
    pub aic: f64,
    pub bic: f64,
    pub hqic: f64,
    pub jsr: Option<JsrJson>,
    pub rounds: Vec<RoundJson>,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: String,
    pub order: OrderJson,
    pub variable_names: Vec<String>,
    pub theta: ThetaJson,
    pub fit: Option<FitJson>,
}

impl ModelFile {
    pub fn from_params(params: &ParameterVector, names: &[String]) -> Self {
        let order = params.order();
        let regimes = params.regimes();
        Self {
            schema_version: SCHEMA_VERSION.into(),
            order: OrderJson { d: order.dim, p: order.lags, m: order.regimes },
            variable_names: names.to_vec(),
            theta: ThetaJson {
                phi0: regimes.iter().map(|r| r.intercept.iter().copied().collect()).collect(),
                ar: regimes.iter().map(|r| r.ar.iter().map(vec_of).collect()).collect(),
                omega: regimes.iter().map(|r| vech(&r.omega)).collect(),
                alphas: params.alphas().to_vec(),
            },
            fit: None,
        }
    }

    pub fn from_fit(fit: &FittedModel, names: &[String]) -> Self {
        let mut file = Self::from_params(&fit.params, names);
        let ic = information_criteria(fit);
        file.fit = Some(FitJson {
            loglik: fit.loglik,
            t: fit.data_t,
            seed: fit.seed,
            aic: ic.aic,
            bic: ic.bic,
            hqic: ic.hqic,
            jsr: fit.jsr.as_ref().map(JsrJson::from),
            rounds: fit
                .rounds_summary
                .iter()
                .map(|r| RoundJson { round: r.round, loglik: r.loglik, status: r.status.label().to_string() })
                .collect(),
            tool_version: TOOL_VERSION.into(),
        });
        file
    }

    pub fn params(&self) -> Result<ParameterVector> {
        let OrderJson { d, p, m } = self.order;
        ModelOrder::new(d, p, m)?;
        let t = &self.theta;
        if t.phi0.len() != m || t.ar.len() != m || t.omega.len() != m || t.alphas.len() != m {
            bail!("model file: theta arrays must have one entry per regime ({m})");
        }
        let regimes = (0..m)
            .map(|r| -> Result<RegimeParameters> {
                if t.phi0[r].len() != d {
                    bail!("model file: phi0[{r}] must have {d} entries");
                }
                if t.ar[r].len() != p || t.ar[r].iter().any(|a| a.len() != d * d) {
                    bail!("model file: ar[{r}] must hold {p} arrays of {} entries", d * d);
                }
                let ar = t.ar[r].iter().map(|a| DMatrix::from_column_slice(d, d, a)).collect();
                let omega = unvech(&t.omega[r], d).map_err(|e| anyhow!("model file: omega[{r}]: {e}"))?;
                Ok(RegimeParameters::new(DVector::from_column_slice(&t.phi0[r]), ar, omega)?)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ParameterVector::new(regimes, t.alphas.clone())?)
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec_pretty(self)?;
        out.push(b'\n');
        Ok(out)
    }
}

pub fn read_model(path: &Path) -> Result<ModelFile> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: ModelFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if file.schema_version != SCHEMA_VERSION {
        bail!("{}: unsupported schema version {}", path.display(), file.schema_version);
    }
    file.params().with_context(|| format!("validating {}", path.display()))?;
    Ok(file)
}

/// CSV bytes from a header and rows of already formatted cells.
pub fn table_csv<I>(header: &[&str], rows: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    Ok(w.into_inner()?)
}
