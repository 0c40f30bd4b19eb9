//! Model objects, transition weights, conditional moments, the conditional
//! log-likelihood and simulation.
//!
//! Histories are always stored most-recent-first: the stacked history vector
//! for time `t` is `(y_{t-1}, y_{t-2}, ..., y_{t-p})`, which is also the
//! ordering of the companion state whose stationary covariance defines the
//! regime densities inside the transition weights.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{GstvarError, Result};
use crate::linalg::{self, LN_2PI};
use crate::seeding::rng_from_seed;
use crate::stationarity::companion_matrix;

/// Number of variables, autoregressive order and number of regimes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelOrder {
    pub dim: usize,
    pub lags: usize,
    pub regimes: usize,
}

impl ModelOrder {
    pub fn new(dim: usize, lags: usize, regimes: usize) -> Result<Self> {
        if dim == 0 || lags == 0 || regimes == 0 {
            return Err(GstvarError::InvalidInput(format!(
                "model order must be positive, got d={dim}, p={lags}, M={regimes}"
            )));
        }
        Ok(Self { dim, lags, regimes })
    }

    /// `dp`, the dimension of the stacked history.
    pub fn companion_dim(&self) -> usize {
        self.dim * self.lags
    }

    /// Free parameters of one regime: intercept, AR entries and vech(Ω).
    pub fn regime_param_count(&self) -> usize {
        let d = self.dim;
        d + d * d * self.lags + d * (d + 1) / 2
    }

    /// Length of the flattened parameter vector.
    pub fn param_count(&self) -> usize {
        self.regimes * self.regime_param_count() + (self.regimes - 1)
    }
}

/// Intercept, AR matrices and error covariance of one regime.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeParameters {
    pub intercept: DVector<f64>,
    pub ar: Vec<DMatrix<f64>>,
    pub omega: DMatrix<f64>,
}

impl RegimeParameters {
    pub fn new(intercept: DVector<f64>, ar: Vec<DMatrix<f64>>, omega: DMatrix<f64>) -> Result<Self> {
        let regime = Self { intercept, ar, omega };
        regime.validate()?;
        Ok(regime)
    }

    pub fn dim(&self) -> usize {
        self.intercept.len()
    }

    pub fn lags(&self) -> usize {
        self.ar.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 || self.ar.is_empty() {
            return Err(GstvarError::InvalidInput("regime needs d >= 1 and p >= 1".into()));
        }
        for (i, a) in self.ar.iter().enumerate() {
            if a.nrows() != d || a.ncols() != d {
                return Err(GstvarError::DimensionMismatch(format!(
                    "AR matrix {} is {}x{}, expected {d}x{d}",
                    i + 1,
                    a.nrows(),
                    a.ncols()
                )));
            }
        }
        if self.omega.nrows() != d || self.omega.ncols() != d {
            return Err(GstvarError::DimensionMismatch("omega".into()));
        }
        let finite = self.intercept.iter().chain(self.omega.iter()).all(|v| v.is_finite())
            && self.ar.iter().all(|a| a.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(GstvarError::InvalidInput("non-finite regime parameters".into()));
        }
        if !linalg::is_symmetric(&self.omega, 1e-12) {
            return Err(GstvarError::NotPositiveDefinite("omega is not symmetric".into()));
        }
        linalg::cholesky_lower(&self.omega)?;
        Ok(())
    }

    /// `I - Σ_i A_i`.
    fn mean_system(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut m = DMatrix::identity(d, d);
        for a in &self.ar {
            m -= a;
        }
        m
    }
}

/// Full parameter point: regimes plus transition weight parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    order: ModelOrder,
    regimes: Vec<RegimeParameters>,
    alphas: Vec<f64>,
}

impl ParameterVector {
    pub fn new(regimes: Vec<RegimeParameters>, alphas: Vec<f64>) -> Result<Self> {
        let first = regimes
            .first()
            .ok_or_else(|| GstvarError::InvalidInput("at least one regime is required".into()))?;
        let order = ModelOrder::new(first.dim(), first.lags(), regimes.len())?;
        for r in &regimes {
            r.validate()?;
            if r.dim() != order.dim || r.lags() != order.lags {
                return Err(GstvarError::DimensionMismatch("regimes disagree on d or p".into()));
            }
        }
        if alphas.len() != order.regimes {
            return Err(GstvarError::DimensionMismatch(format!(
                "{} alphas for {} regimes",
                alphas.len(),
                order.regimes
            )));
        }
        if alphas.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(GstvarError::InvalidInput("alphas must be strictly positive".into()));
        }
        let total: f64 = alphas.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(GstvarError::InvalidInput(format!("alphas sum to {total}, not 1")));
        }
        Ok(Self { order, regimes, alphas })
    }

    pub fn order(&self) -> ModelOrder {
        self.order
    }

    pub fn regimes(&self) -> &[RegimeParameters] {
        &self.regimes
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    /// Whether `α_1 > ... > α_M` holds.
    pub fn is_identified(&self) -> bool {
        self.alphas.windows(2).all(|w| w[0] > w[1])
    }

    /// Flattened layout: all intercepts, then `vec(A_{m,1}), ..., vec(A_{m,p})`
    /// regime by regime, then `vech(Ω_m)` regime by regime, then
    /// `α_1, ..., α_{M-1}`. `vec`/`vech` are column-major.
    pub fn to_theta(&self) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.order.param_count());
        for r in &self.regimes {
            theta.extend(r.intercept.iter());
        }
        for r in &self.regimes {
            for a in &r.ar {
                theta.extend(linalg::vec_of(a));
            }
        }
        for r in &self.regimes {
            theta.extend(linalg::vech(&r.omega));
        }
        theta.extend(&self.alphas[..self.order.regimes - 1]);
        theta
    }

    /// Inverse of [`ParameterVector::to_theta`]; `α_M = 1 - Σ α_m`.
    pub fn from_theta(order: ModelOrder, theta: &[f64]) -> Result<Self> {
        if theta.len() != order.param_count() {
            return Err(GstvarError::DimensionMismatch(format!(
                "theta has {} entries, order needs {}",
                theta.len(),
                order.param_count()
            )));
        }
        let (d, p, m) = (order.dim, order.lags, order.regimes);
        let mut pos = 0;
        let mut take = |n: usize| {
            let s = &theta[pos..pos + n];
            pos += n;
            s
        };
        let intercepts: Vec<DVector<f64>> = (0..m).map(|_| DVector::from_column_slice(take(d))).collect();
        let ars: Vec<Vec<DMatrix<f64>>> = (0..m)
            .map(|_| (0..p).map(|_| DMatrix::from_column_slice(d, d, take(d * d))).collect())
            .collect();
        let mut omegas = Vec::with_capacity(m);
        for _ in 0..m {
            omegas.push(linalg::unvech(take(d * (d + 1) / 2), d)?);
        }
        let mut alphas: Vec<f64> = take(m - 1).to_vec();
        alphas.push(1.0 - alphas.iter().sum::<f64>());
        let regimes = intercepts
            .into_iter()
            .zip(ars)
            .zip(omegas)
            .map(|((c, a), o)| RegimeParameters::new(c, a, o))
            .collect::<Result<Vec<_>>>()?;
        Self::new(regimes, alphas)
    }

    /// Human-readable names for the entries of [`ParameterVector::to_theta`].
    pub fn theta_names(order: ModelOrder) -> Vec<String> {
        let (d, p, m) = (order.dim, order.lags, order.regimes);
        let mut names = Vec::with_capacity(order.param_count());
        for r in 1..=m {
            for i in 1..=d {
                names.push(format!("phi_{r}[{i}]"));
            }
        }
        for r in 1..=m {
            for lag in 1..=p {
                for col in 1..=d {
                    for row in 1..=d {
                        names.push(format!("A_{r}_{lag}[{row};{col}]"));
                    }
                }
            }
        }
        for r in 1..=m {
            for col in 1..=d {
                for row in col..=d {
                    names.push(format!("Omega_{r}[{row};{col}]"));
                }
            }
        }
        for r in 1..m {
            names.push(format!("alpha_{r}"));
        }
        names
    }
}

/// Observations in time order, rows are time points.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesMatrix {
    nrows: usize,
    ncols: usize,
    values: Vec<f64>,
    names: Vec<String>,
    timestamps: Option<Vec<String>>,
}

impl SeriesMatrix {
    /// Builds from row-major values. Non-finite entries are rejected.
    pub fn from_row_major(nrows: usize, ncols: usize, values: Vec<f64>) -> Result<Self> {
        if ncols == 0 || values.len() != nrows * ncols {
            return Err(GstvarError::DimensionMismatch(format!(
                "{} values for a {nrows}x{ncols} series",
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(GstvarError::InvalidInput(format!(
                "non-finite value at row {}, column {}",
                k / ncols + 1,
                k % ncols + 1
            )));
        }
        let names = (1..=ncols).map(|i| format!("y{i}")).collect();
        Ok(Self { nrows, ncols, values, names, timestamps: None })
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        Self::from_row_major(m.nrows(), m.ncols(), linalg::to_row_major(m))
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.ncols {
            return Err(GstvarError::DimensionMismatch("column names".into()));
        }
        self.names = names;
        Ok(self)
    }

    pub fn with_timestamps(mut self, timestamps: Vec<String>) -> Result<Self> {
        if timestamps.len() != self.nrows {
            return Err(GstvarError::DimensionMismatch("timestamps".into()));
        }
        self.timestamps = Some(timestamps);
        Ok(self)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn timestamps(&self) -> Option<&[String]> {
        self.timestamps.as_deref()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.ncols..(t + 1) * self.ncols]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, t: usize, j: usize) -> f64 {
        self.values[t * self.ncols + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.nrows).map(|t| self.get(t, j)).collect()
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.nrows, self.ncols, &self.values)
    }

    /// Rows `start..end` as a new series (names and timestamps carried).
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end > self.nrows {
            return Err(GstvarError::InvalidInput(format!("row range {start}..{end} out of bounds")));
        }
        Ok(Self {
            nrows: end - start,
            ncols: self.ncols,
            values: self.values[start * self.ncols..end * self.ncols].to_vec(),
            names: self.names.clone(),
            timestamps: self.timestamps.as_ref().map(|ts| ts[start..end].to_vec()),
        })
    }

    /// Stacked history `(y_{t-1}, ..., y_{t-p})` for row index `t >= p`.
    pub fn stacked_history(&self, t: usize, lags: usize, out: &mut [f64]) {
        let d = self.ncols;
        for i in 0..lags {
            out[i * d..(i + 1) * d].copy_from_slice(self.row(t - 1 - i));
        }
    }

    fn check_likelihood_shape(&self, order: ModelOrder) -> Result<()> {
        if self.ncols != order.dim {
            return Err(GstvarError::DimensionMismatch(format!(
                "data has {} columns, model has d = {}",
                self.ncols, order.dim
            )));
        }
        if self.nrows < order.lags + 1 {
            return Err(GstvarError::InvalidInput(format!(
                "need at least p + 1 = {} rows, got {}",
                order.lags + 1,
                self.nrows
            )));
        }
        Ok(())
    }
}

/// The `p` observations preceding a time point, most recent first.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    /// `p x d`; row 0 is `y_{t-1}`.
    pub rows: DMatrix<f64>,
    /// Row index `t` of the data this history precedes.
    pub origin_index: Option<usize>,
    pub weight_at_origin: Option<Vec<f64>>,
    /// Structural shock recovered at the origin.
    pub shock_at_origin: Option<Vec<f64>>,
}

impl History {
    pub fn new(rows: DMatrix<f64>) -> Result<Self> {
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(GstvarError::InvalidInput("non-finite history".into()));
        }
        Ok(Self { rows, origin_index: None, weight_at_origin: None, shock_at_origin: None })
    }

    /// History preceding data row `t` (requires `t >= p`).
    pub fn from_data(data: &SeriesMatrix, t: usize, lags: usize) -> Result<Self> {
        if t < lags || t > data.nrows() {
            return Err(GstvarError::InvalidInput(format!("no length-{lags} history before row {t}")));
        }
        let d = data.ncols();
        let rows = DMatrix::from_fn(lags, d, |i, j| data.get(t - 1 - i, j));
        let mut h = Self::new(rows)?;
        h.origin_index = Some(t);
        Ok(h)
    }

    pub fn lags(&self) -> usize {
        self.rows.nrows()
    }

    /// `(y_{t-1}, ..., y_{t-p})` stacked into one vector.
    pub fn stacked(&self) -> Vec<f64> {
        linalg::to_row_major(&self.rows)
    }
}

/// Transition weights over the effective sample, `T x M`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionWeightSeries {
    pub weights: DMatrix<f64>,
}

impl TransitionWeightSeries {
    /// `Σ_t α_{m,t}` per regime.
    pub fn regime_totals(&self) -> Vec<f64> {
        (0..self.weights.ncols()).map(|m| self.weights.column(m).sum()).collect()
    }
}

/// `μ_m = (I - Σ A_i)^{-1} φ_{m,0}`.
pub fn regime_unconditional_mean(regime: &RegimeParameters) -> Result<DVector<f64>> {
    regime_mean_indexed(regime, 0)
}

fn regime_mean_indexed(regime: &RegimeParameters, index: usize) -> Result<DVector<f64>> {
    let system = regime.mean_system();
    let svd = system.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 0.0) || smax / smin > 1e12 {
        return Err(GstvarError::SingularMeanSystem { regime: index + 1 });
    }
    system
        .lu()
        .solve(&regime.intercept)
        .ok_or(GstvarError::SingularMeanSystem { regime: index + 1 })
}

/// Covariance of `p` consecutive observations (most recent first) from the
/// stationary distribution of the regime.
pub fn regime_stationary_covariance(regime: &RegimeParameters) -> Result<DMatrix<f64>> {
    regime_covariance_indexed(regime, 0)
}

fn regime_covariance_indexed(regime: &RegimeParameters, index: usize) -> Result<DMatrix<f64>> {
    let d = regime.dim();
    let dp = d * regime.lags();
    let comp = companion_matrix(regime);
    let radius = linalg::spectral_radius(comp.matrix())?;
    if radius >= 1.0 - 1e-10 {
        return Err(GstvarError::NonstationaryRegime { regime: index + 1, radius });
    }
    let mut q = DMatrix::zeros(dp, dp);
    q.view_mut((0, 0), (d, d)).copy_from(&regime.omega);
    linalg::discrete_lyapunov(comp.matrix(), &q)
}

/// Normalizes log-space regime terms `log α_m + log n(·)` into weights.
pub fn weights_from_log_terms(log_terms: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; log_terms.len()];
    softmax_into(log_terms, &mut out).ok_or(GstvarError::AllDensitiesUnderflow { t: 0 })?;
    Ok(out)
}

#[inline]
fn softmax_into(log_terms: &[f64], out: &mut [f64]) -> Option<()> {
    let max = log_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let mut total = 0.0;
    for (o, l) in out.iter_mut().zip(log_terms) {
        *o = (l - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
    Some(())
}

/// Transition weights `α_{m,t}` for a history.
pub fn transition_weights(params: &ParameterVector, history: &History) -> Result<Vec<f64>> {
    check_history(params.order(), history)?;
    let prepared = PreparedModel::new(params)?;
    let mut out = vec![0.0; params.order().regimes];
    prepared.weights(&history.stacked(), &mut out).ok_or(GstvarError::AllDensitiesUnderflow { t: 0 })?;
    Ok(out)
}

fn check_history(order: ModelOrder, history: &History) -> Result<()> {
    if history.rows.nrows() != order.lags || history.rows.ncols() != order.dim {
        return Err(GstvarError::DimensionMismatch(format!(
            "history is {}x{}, expected {}x{}",
            history.rows.nrows(),
            history.rows.ncols(),
            order.lags,
            order.dim
        )));
    }
    Ok(())
}

/// Conditional mean `Σ α_m (φ_m + Σ_i A_{m,i} y_{t-i})` and covariance
/// `Σ α_m Ω_m`.
pub fn conditional_moments(
    params: &ParameterVector,
    history: &History,
    weights: &[f64],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let order = params.order();
    check_history(order, history)?;
    if weights.len() != order.regimes {
        return Err(GstvarError::DimensionMismatch("weights".into()));
    }
    let total: f64 = weights.iter().sum();
    if weights.iter().any(|w| !(0.0..=1.0).contains(w)) || (total - 1.0).abs() > 1e-12 {
        return Err(GstvarError::InvalidInput("weights must lie on the simplex".into()));
    }
    let d = order.dim;
    let mut mean = DVector::zeros(d);
    let mut cov = DMatrix::zeros(d, d);
    for (regime, &w) in params.regimes().iter().zip(weights) {
        let mut regime_mean = regime.intercept.clone();
        for (i, a) in regime.ar.iter().enumerate() {
            regime_mean += a * history.rows.row(i).transpose();
        }
        mean += w * regime_mean;
        cov += w * &regime.omega;
    }
    Ok((mean, cov))
}

/// Precomputed per-regime quantities in flat row-major form for the
/// per-observation loops.
#[derive(Debug, Clone)]
pub struct PreparedModel {
    order: ModelOrder,
    regimes: Vec<PreparedRegime>,
}

#[derive(Debug, Clone)]
struct PreparedRegime {
    intercept: Vec<f64>,
    /// `d x dp`, `[A_1 | ... | A_p]`.
    ar: Vec<f64>,
    omega: Vec<f64>,
    /// `1_p ⊗ μ_m`; empty for single-regime models.
    stationary_mean: Vec<f64>,
    /// Lower Cholesky factor of `Σ_{m,p}`, row-major.
    stationary_chol: Vec<f64>,
    /// `log α_m - dp/2 log 2π - 1/2 log det Σ_{m,p}`.
    log_const: f64,
}

/// Reusable buffers for [`PreparedModel`] evaluations.
#[derive(Debug, Clone)]
pub struct Scratch {
    pub history: Vec<f64>,
    pub log_terms: Vec<f64>,
    pub weights: Vec<f64>,
    pub mean: Vec<f64>,
    pub cov: Vec<f64>,
    pub diff: Vec<f64>,
    centered: Vec<f64>,
}

impl Scratch {
    pub fn new(order: ModelOrder) -> Self {
        let (d, m, dp) = (order.dim, order.regimes, order.companion_dim());
        Self {
            history: vec![0.0; dp],
            log_terms: vec![0.0; m],
            weights: vec![0.0; m],
            mean: vec![0.0; d],
            cov: vec![0.0; d * d],
            diff: vec![0.0; d],
            centered: vec![0.0; dp],
        }
    }
}

impl PreparedModel {
    /// Fails with `NonstationaryRegime` or `SingularMeanSystem` when some
    /// regime has no stationary distribution (only checked for `M >= 2`,
    /// where the weights need it).
    pub fn new(params: &ParameterVector) -> Result<Self> {
        let order = params.order();
        let (d, p) = (order.dim, order.lags);
        let dp = order.companion_dim();
        let mut regimes = Vec::with_capacity(order.regimes);
        for (idx, (r, &alpha)) in params.regimes().iter().zip(params.alphas()).enumerate() {
            let mut ar = vec![0.0; d * dp];
            for (lag, a) in r.ar.iter().enumerate() {
                for i in 0..d {
                    for j in 0..d {
                        ar[i * dp + lag * d + j] = a[(i, j)];
                    }
                }
            }
            let (stationary_mean, stationary_chol, log_const) = if order.regimes > 1 {
                let mu = regime_mean_indexed(r, idx)?;
                let sigma = regime_covariance_indexed(r, idx)?;
                let mut chol = linalg::to_row_major(&sigma);
                if !linalg::chol_in_place(&mut chol, dp) {
                    return Err(GstvarError::NotPositiveDefinite(format!(
                        "stationary covariance of regime {}",
                        idx + 1
                    )));
                }
                let mean: Vec<f64> = (0..p).flat_map(|_| mu.iter().copied()).collect();
                let c = alpha.ln() - 0.5 * dp as f64 * LN_2PI - linalg::half_log_det_from_chol(&chol, dp);
                (mean, chol, c)
            } else {
                (Vec::new(), Vec::new(), 0.0)
            };
            regimes.push(PreparedRegime {
                intercept: r.intercept.iter().copied().collect(),
                ar,
                omega: linalg::to_row_major(&r.omega),
                stationary_mean,
                stationary_chol,
                log_const,
            });
        }
        Ok(Self { order, regimes })
    }

    pub fn order(&self) -> ModelOrder {
        self.order
    }

    /// `log α_m + log n_dp(history; 1_p ⊗ μ_m, Σ_{m,p})` per regime.
    pub fn log_weight_terms(&self, history: &[f64], centered: &mut [f64], out: &mut [f64]) {
        let dp = self.order.companion_dim();
        if self.order.regimes == 1 {
            out[0] = 0.0;
            return;
        }
        for (r, o) in self.regimes.iter().zip(out.iter_mut()) {
            for k in 0..dp {
                centered[k] = history[k] - r.stationary_mean[k];
            }
            linalg::forward_solve_in_place(&r.stationary_chol, dp, centered);
            let quad: f64 = centered.iter().map(|v| v * v).sum();
            *o = r.log_const - 0.5 * quad;
        }
    }

    /// Writes the transition weights; `None` when no regime density is
    /// representable.
    pub fn weights(&self, history: &[f64], out: &mut [f64]) -> Option<()> {
        let mut centered = vec![0.0; self.order.companion_dim()];
        let mut terms = vec![0.0; self.order.regimes];
        self.log_weight_terms(history, &mut centered, &mut terms);
        softmax_into(&terms, out)
    }

    /// Weights into `scratch.weights` from `scratch.history`.
    #[inline]
    pub fn weights_scratch(&self, s: &mut Scratch) -> Option<()> {
        self.log_weight_terms(&s.history, &mut s.centered, &mut s.log_terms);
        softmax_into(&s.log_terms, &mut s.weights)
    }

    /// Conditional mean and covariance into `scratch.mean` / `scratch.cov`
    /// from `scratch.history` and `scratch.weights`.
    #[inline]
    pub fn moments_scratch(&self, s: &mut Scratch) {
        let d = self.order.dim;
        let dp = self.order.companion_dim();
        s.mean.iter_mut().for_each(|v| *v = 0.0);
        s.cov.iter_mut().for_each(|v| *v = 0.0);
        for (r, &w) in self.regimes.iter().zip(&s.weights) {
            if w == 0.0 {
                continue;
            }
            for i in 0..d {
                let row = &r.ar[i * dp..(i + 1) * dp];
                let mut acc = r.intercept[i];
                for k in 0..dp {
                    acc += row[k] * s.history[k];
                }
                s.mean[i] += w * acc;
            }
            for (c, o) in s.cov.iter_mut().zip(&r.omega) {
                *c += w * o;
            }
        }
    }

    /// Conditional log density of `y` given the history in `scratch`; on
    /// return `scratch.cov` holds the lower Cholesky factor of `Ω_{y,t}` and
    /// `scratch.diff` the standardized residual `B_t^{-1}(y - μ_{y,t})`.
    #[inline]
    pub fn step_log_density(&self, y: &[f64], s: &mut Scratch, t: usize) -> Result<f64> {
        let d = self.order.dim;
        self.weights_scratch(s).ok_or(GstvarError::AllDensitiesUnderflow { t })?;
        self.moments_scratch(s);
        if !linalg::chol_in_place(&mut s.cov, d) {
            return Err(GstvarError::NotPositiveDefinite(format!("conditional covariance at t = {t}")));
        }
        for i in 0..d {
            s.diff[i] = y[i] - s.mean[i];
        }
        linalg::forward_solve_in_place(&s.cov, d, &mut s.diff);
        let quad: f64 = s.diff.iter().map(|v| v * v).sum();
        Ok(-0.5 * (d as f64 * LN_2PI + quad) - linalg::half_log_det_from_chol(&s.cov, d))
    }

    /// Draws `p` consecutive observations (most recent first) from the
    /// stationary distribution of `regime` into `out`.
    pub fn draw_stationary_history<R: Rng>(
        params: &ParameterVector,
        regime: usize,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let r = params
            .regimes()
            .get(regime)
            .ok_or_else(|| GstvarError::InvalidInput(format!("no regime {}", regime + 1)))?;
        let mu = regime_mean_indexed(r, regime)?;
        let sigma = regime_covariance_indexed(r, regime)?;
        let l = linalg::cholesky_lower(&sigma)?;
        let p = r.lags();
        let z = DVector::from_fn(sigma.nrows(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let mean = DVector::from_fn(sigma.nrows(), |k, _| mu[k % r.dim()]);
        let draw = mean + l * z;
        debug_assert_eq!(draw.len(), p * r.dim());
        Ok(draw.as_slice().to_vec())
    }
}

/// Per-observation output of [`log_likelihood_trace`].
#[derive(Debug, Clone)]
pub struct LikelihoodTrace {
    pub loglik: f64,
    pub weights: TransitionWeightSeries,
    /// `T x d` conditional means.
    pub means: DMatrix<f64>,
    /// Conditional covariances `Ω_{y,t}`.
    pub covariances: Vec<DMatrix<f64>>,
    /// `T x d` raw residuals `y_t - μ_{y,t}`.
    pub residuals: DMatrix<f64>,
    /// `T x d` standardized residuals `B_t^{-1}(y_t - μ_{y,t})` with `B_t`
    /// the lower Cholesky factor of `Ω_{y,t}`.
    pub standardized: DMatrix<f64>,
}

/// Conditional log-likelihood; the first `p` rows only condition.
pub fn log_likelihood(params: &ParameterVector, data: &SeriesMatrix) -> Result<f64> {
    let order = params.order();
    data.check_likelihood_shape(order)?;
    let prepared = PreparedModel::new(params)?;
    log_likelihood_prepared(&prepared, data)
}

pub fn log_likelihood_prepared(prepared: &PreparedModel, data: &SeriesMatrix) -> Result<f64> {
    let order = prepared.order();
    let p = order.lags;
    let mut s = Scratch::new(order);
    let mut total = 0.0;
    for t in p..data.nrows() {
        data.stacked_history(t, p, &mut s.history);
        total += prepared.step_log_density(data.row(t), &mut s, t - p + 1)?;
    }
    Ok(total)
}

/// Log-likelihood together with the per-observation weights and moments.
pub fn log_likelihood_trace(params: &ParameterVector, data: &SeriesMatrix) -> Result<LikelihoodTrace> {
    let order = params.order();
    data.check_likelihood_shape(order)?;
    let prepared = PreparedModel::new(params)?;
    let (d, p, m) = (order.dim, order.lags, order.regimes);
    let n = data.nrows() - p;
    let mut s = Scratch::new(order);
    let mut weights = DMatrix::zeros(n, m);
    let mut means = DMatrix::zeros(n, d);
    let mut residuals = DMatrix::zeros(n, d);
    let mut standardized = DMatrix::zeros(n, d);
    let mut covariances = Vec::with_capacity(n);
    let mut total = 0.0;
    for k in 0..n {
        let t = k + p;
        data.stacked_history(t, p, &mut s.history);
        total += prepared.step_log_density(data.row(t), &mut s, k + 1)?;
        for j in 0..m {
            weights[(k, j)] = s.weights[j];
        }
        for i in 0..d {
            means[(k, i)] = s.mean[i];
            residuals[(k, i)] = data.get(t, i) - s.mean[i];
            standardized[(k, i)] = s.diff[i];
        }
        let mut cov = DMatrix::zeros(d, d);
        for (r, &w) in params.regimes().iter().zip(&s.weights) {
            cov += w * &r.omega;
        }
        covariances.push(cov);
    }
    Ok(LikelihoodTrace {
        loglik: total,
        weights: TransitionWeightSeries { weights },
        means,
        covariances,
        residuals,
        standardized,
    })
}

/// How the first `p` observations of a simulated path are obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum SimulationInit {
    /// Given history, most recent first.
    History(History),
    /// Drawn from the stationary distribution of this regime (0-based).
    Regime(usize),
}

/// A simulated path with the standard-normal innovations that produced it.
#[derive(Debug, Clone)]
pub struct Simulation {
    /// `p + T` rows: the initial values followed by the generated path.
    pub series: SeriesMatrix,
    /// `T x d`; `y_t = μ_{y,t} + B_t ε_t`.
    pub innovations: DMatrix<f64>,
}

pub fn simulate(params: &ParameterVector, steps: usize, init: &SimulationInit, seed: u64) -> Result<SeriesMatrix> {
    Ok(simulate_with_innovations(params, steps, init, seed)?.series)
}

pub fn simulate_with_innovations(
    params: &ParameterVector,
    steps: usize,
    init: &SimulationInit,
    seed: u64,
) -> Result<Simulation> {
    if steps == 0 {
        return Err(GstvarError::InvalidInput("simulation length must be at least 1".into()));
    }
    let order = params.order();
    let (d, p) = (order.dim, order.lags);
    let mut rng = rng_from_seed(seed);
    let initial: Vec<f64> = match init {
        SimulationInit::History(h) => {
            check_history(order, h)?;
            h.stacked()
        }
        SimulationInit::Regime(m) => PreparedModel::draw_stationary_history(params, *m, &mut rng)?,
    };
    let prepared = PreparedModel::new(params)?;
    let total = p + steps;
    let mut values = vec![0.0; total * d];
    // stacked history is most recent first; rows are chronological
    for i in 0..p {
        values[(p - 1 - i) * d..(p - i) * d].copy_from_slice(&initial[i * d..(i + 1) * d]);
    }
    let mut innovations = DMatrix::zeros(steps, d);
    let mut s = Scratch::new(order);
    let mut eps = vec![0.0; d];
    for t in p..total {
        for i in 0..p {
            s.history[i * d..(i + 1) * d].copy_from_slice(&values[(t - 1 - i) * d..(t - i) * d]);
        }
        prepared
            .weights_scratch(&mut s)
            .ok_or(GstvarError::AllDensitiesUnderflow { t: t - p + 1 })?;
        prepared.moments_scratch(&mut s);
        if !linalg::chol_in_place(&mut s.cov, d) {
            return Err(GstvarError::NotPositiveDefinite(format!("conditional covariance at t = {}", t - p + 1)));
        }
        for e in eps.iter_mut() {
            *e = rng.sample(StandardNormal);
        }
        for i in 0..d {
            let mut v = s.mean[i];
            for k in 0..=i {
                v += s.cov[i * d + k] * eps[k];
            }
            values[t * d + i] = v;
            innovations[(t - p, i)] = eps[i];
        }
    }
    let series = SeriesMatrix::from_row_major(total, d, values)
        .map_err(|_| GstvarError::NumericalFailure("simulated path diverged".into()))?;
    Ok(Simulation { series, innovations })
}
