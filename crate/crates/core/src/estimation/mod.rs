//! Two-phase maximum-likelihood estimation: genetic-algorithm search followed
//! by quasi-Newton refinement, repeated over independently seeded rounds.

mod ga;
mod refine;
mod transform;
mod wald;

pub use ga::{ga_search, population_size, GaOutcome};
pub use refine::{constrained_objective, refine, RefineOutcome};
pub use transform::{from_unconstrained, identify, permute_regimes, to_unconstrained};
pub use wald::{restriction_matrix, wald_constancy_test, wald_test, WaldRestriction, WaldResult};

use nalgebra::{DMatrix, DVector};

use crate::error::{GstvarError, Result};
use crate::model::{
    log_likelihood, log_likelihood_trace, ModelOrder, ParameterVector, PreparedModel, RegimeParameters, SeriesMatrix,
};
use crate::optim::OptimStatus;
use crate::par;
use crate::seeding::derive_seed;
use crate::stationarity::{companion_jsr, JsrCertificate, DEFAULT_JSR_MAX_PRODUCTS, DEFAULT_JSR_TOLERANCE};

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationConfig {
    pub rounds: usize,
    pub ga_generations: usize,
    /// `None` selects `2 · dim(θ)` clamped to `[10, 400]`.
    pub ga_population: Option<usize>,
    /// Per-coordinate mutation probability.
    pub mutation_rate: f64,
    /// Regimes must satisfy `ρ(A_m) < 1 - margin`.
    pub stationarity_margin: f64,
    /// Rounds with `Σ_t α_{m,t} < fraction · T` for some regime are discarded.
    pub min_regime_obs_fraction: f64,
    pub gradient_step: f64,
    pub max_refine_iterations: usize,
    pub seed: u64,
    /// Individuals placed in every round's initial population.
    pub ga_seeds: Vec<ParameterVector>,
    pub compute_hessian: bool,
    /// `(tolerance, max_products)` for the post-fit JSR check; `None` skips it.
    pub jsr: Option<(f64, usize)>,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            rounds: 16,
            ga_generations: 50,
            ga_population: None,
            mutation_rate: 0.15,
            stationarity_margin: 0.02,
            min_regime_obs_fraction: 0.01,
            gradient_step: 6e-6,
            max_refine_iterations: 500,
            seed: 0,
            ga_seeds: Vec::new(),
            compute_hessian: false,
            jsr: Some((DEFAULT_JSR_TOLERANCE, DEFAULT_JSR_MAX_PRODUCTS)),
        }
    }
}

impl EstimationConfig {
    pub fn validate(&self, order: ModelOrder) -> Result<()> {
        let bad = |msg: &str| Err(GstvarError::InvalidInput(msg.into()));
        if self.rounds == 0 {
            return bad("rounds must be positive");
        }
        if matches!(self.ga_population, Some(n) if n < 3) {
            return bad("GA population must be at least 3");
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return bad("mutation rate must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.stationarity_margin) {
            return bad("stationarity margin must lie in [0, 1)");
        }
        if !(self.min_regime_obs_fraction >= 0.0 && self.min_regime_obs_fraction * (order.regimes as f64) < 1.0) {
            return bad("min_regime_obs_fraction · M must lie in [0, 1)");
        }
        if !(self.gradient_step > 0.0) {
            return bad("gradient step must be positive");
        }
        if matches!(self.jsr, Some((tol, _)) if !(tol > 0.0)) {
            return bad("JSR tolerance must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RoundStatus {
    Converged,
    MaxIter,
    Boundary,
    /// Some regime receives too little total weight.
    DegenerateRegime,
    TiedAlphas,
    Failed(String),
}

impl RoundStatus {
    pub fn from_optim(status: OptimStatus) -> Self {
        match status {
            OptimStatus::Converged => Self::Converged,
            OptimStatus::MaxIter => Self::MaxIter,
            OptimStatus::Boundary => Self::Boundary,
        }
    }

    /// Whether the round's solution competes in the final selection.
    pub fn is_admissible(&self) -> bool {
        matches!(self, Self::Converged | Self::MaxIter | Self::Boundary)
    }

    pub fn label(&self) -> &str {
        match self {
            Self::Converged => "converged",
            Self::MaxIter => "max_iter",
            Self::Boundary => "boundary",
            Self::DegenerateRegime => "degenerate_regime",
            Self::TiedAlphas => "tied_alphas",
            Self::Failed(_) => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundSummary {
    pub round: usize,
    pub loglik: Option<f64>,
    pub status: RoundStatus,
    /// Identified local optimum, when one was reached.
    pub params: Option<ParameterVector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub params: ParameterVector,
    pub loglik: f64,
    /// Effective sample size `T` (data rows minus `p`).
    pub data_t: usize,
    pub jsr: Option<JsrCertificate>,
    pub rounds_summary: Vec<RoundSummary>,
    /// Hessian of the log-likelihood in the flattened parameterization.
    pub hessian: Option<DMatrix<f64>>,
    pub seed: u64,
}

/// Criteria divided by the effective sample size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InformationCriteria {
    pub aic: f64,
    pub bic: f64,
    pub hqic: f64,
}

pub fn information_criteria_from(loglik: f64, k: usize, t: usize) -> InformationCriteria {
    let (k, t) = (k as f64, t as f64);
    InformationCriteria {
        aic: (-2.0 * loglik + 2.0 * k) / t,
        bic: (-2.0 * loglik + k * t.ln()) / t,
        hqic: (-2.0 * loglik + 2.0 * k * t.ln().ln()) / t,
    }
}

pub fn information_criteria(fit: &FittedModel) -> InformationCriteria {
    information_criteria_from(fit.loglik, fit.params.order().param_count(), fit.data_t)
}

/// Least-squares VAR(p) on the whole sample; the residual covariance uses
/// the divisor `T`, so this is the conditional ML estimate of a linear VAR.
pub fn least_squares_var(data: &SeriesMatrix, lags: usize) -> Result<RegimeParameters> {
    let d = data.ncols();
    if lags == 0 {
        return Err(GstvarError::InvalidInput("lag order must be positive".into()));
    }
    let n = data.nrows().saturating_sub(lags);
    let q = 1 + d * lags;
    if n < q + 1 {
        return Err(GstvarError::InvalidInput("too few observations for least squares".into()));
    }
    let x = DMatrix::from_fn(n, q, |r, c| if c == 0 { 1.0 } else { data.get(r + lags - 1 - (c - 1) / d, (c - 1) % d) });
    let y = DMatrix::from_fn(n, d, |r, c| data.get(r + lags, c));
    let coef = (x.transpose() * &x)
        .cholesky()
        .map(|c| c.solve(&(x.transpose() * &y)))
        .ok_or_else(|| GstvarError::NumericalFailure("rank-deficient regressors".into()))?;
    let resid = &y - &x * &coef;
    let omega = resid.transpose() * &resid / n as f64;
    let omega = 0.5 * (&omega + omega.transpose());
    let intercept = DVector::from_fn(d, |i, _| coef[(0, i)]);
    let ar = (0..lags)
        .map(|lag| DMatrix::from_fn(d, d, |i, j| coef[(1 + lag * d + j, i)]))
        .collect();
    RegimeParameters::new(intercept, ar, omega)
}

/// Central second differences of the log-likelihood in the flattened
/// parameterization, step `1e-3 · max(|θ_i|, 1)`, symmetrized. Steps of
/// coordinates whose perturbations leave the parameter space (for example a
/// nearly singular `Ω`) are halved until every stencil point is valid.
pub fn loglik_hessian(params: &ParameterVector, data: &SeriesMatrix) -> Result<DMatrix<f64>> {
    let order = params.order();
    let theta = params.to_theta();
    let k = theta.len();
    let mut h: Vec<f64> = theta.iter().map(|v| 1e-3 * v.abs().max(1.0)).collect();
    let valid = |shifts: &[(usize, f64)]| {
        let mut t = theta.clone();
        for &(i, s) in shifts {
            t[i] += s;
        }
        ParameterVector::from_theta(order, &t).and_then(|p| PreparedModel::new(&p)).is_ok()
    };
    for _ in 0..40 {
        let mut shrink = vec![false; k];
        for i in 0..k {
            for j in i..k {
                let ok = if i == j {
                    valid(&[(i, h[i])]) && valid(&[(i, -h[i])])
                } else {
                    [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)]
                        .iter()
                        .all(|&(a, b)| valid(&[(i, a * h[i]), (j, b * h[j])]))
                };
                if !ok {
                    shrink[i] = true;
                    shrink[j] = true;
                }
            }
        }
        if !shrink.contains(&true) {
            break;
        }
        for (hi, s) in h.iter_mut().zip(&shrink) {
            if *s {
                *hi *= 0.5;
            }
        }
    }
    let eval = |shifts: &[(usize, f64)]| -> Result<f64> {
        let mut t = theta.clone();
        for &(i, s) in shifts {
            t[i] += s;
        }
        let p = ParameterVector::from_theta(order, &t)
            .map_err(|e| GstvarError::NumericalFailure(format!("Hessian step left the parameter space: {e}")))?;
        log_likelihood(&p, data)
    };
    let f0 = eval(&[])?;
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i..k).map(move |j| (i, j))).collect();
    let values = par::map_slice(&pairs, |&(i, j)| -> Result<f64> {
        if i == j {
            let up = eval(&[(i, h[i])])?;
            let down = eval(&[(i, -h[i])])?;
            Ok((up - 2.0 * f0 + down) / (h[i] * h[i]))
        } else {
            let pp = eval(&[(i, h[i]), (j, h[j])])?;
            let pm = eval(&[(i, h[i]), (j, -h[j])])?;
            let mp = eval(&[(i, -h[i]), (j, h[j])])?;
            let mm = eval(&[(i, -h[i]), (j, -h[j])])?;
            Ok((pp - pm - mp + mm) / (4.0 * h[i] * h[j]))
        }
    });
    let mut out = DMatrix::zeros(k, k);
    for (&(i, j), v) in pairs.iter().zip(values) {
        let v = v?;
        out[(i, j)] = v;
        out[(j, i)] = v;
    }
    Ok(out)
}

fn run_round(data: &SeriesMatrix, order: ModelOrder, config: &EstimationConfig, round: usize) -> RoundSummary {
    let failed = |e: GstvarError| RoundSummary { round, loglik: None, status: RoundStatus::Failed(e.to_string()), params: None };
    let seed = derive_seed(config.seed, round as u64);
    let ga = match ga_search(data, order, config, seed) {
        Ok(g) => g,
        Err(e) => return failed(e),
    };
    let refined = match refine(&ga.best, data, config) {
        Ok(r) => r,
        Err(e) => return failed(e),
    };
    let params = match identify(&refined.params) {
        Ok(p) => p,
        Err(GstvarError::TiedAlphas) => {
            return RoundSummary { round, loglik: Some(refined.loglik), status: RoundStatus::TiedAlphas, params: None }
        }
        Err(e) => return failed(e),
    };
    let trace = match log_likelihood_trace(&params, data) {
        Ok(t) => t,
        Err(e) => return failed(e),
    };
    let t = (data.nrows() - order.lags) as f64;
    let degenerate = trace
        .weights
        .regime_totals()
        .iter()
        .any(|&total| total < config.min_regime_obs_fraction * t);
    let status = if degenerate { RoundStatus::DegenerateRegime } else { RoundStatus::from_optim(refined.status) };
    RoundSummary { round, loglik: Some(trace.loglik), status, params: Some(params) }
}

/// Runs `config.rounds` seeded GA → refinement pipelines and keeps the best
/// admissible local optimum.
pub fn fit(data: &SeriesMatrix, order: ModelOrder, config: &EstimationConfig) -> Result<FittedModel> {
    config.validate(order)?;
    if data.ncols() != order.dim {
        return Err(GstvarError::DimensionMismatch(format!(
            "data has {} columns, model has d = {}",
            data.ncols(),
            order.dim
        )));
    }
    if data.nrows() < order.lags + 2 {
        return Err(GstvarError::InvalidInput("not enough observations".into()));
    }
    let recommended = order.lags as f64 + 10.0 * order.param_count() as f64 / order.dim as f64;
    if (data.nrows() as f64) < recommended {
        log::warn!("{} observations is below the recommended {:.0} for this model order", data.nrows(), recommended);
    }
    let rounds = par::map_range(config.rounds, |r| run_round(data, order, config, r));
    for r in &rounds {
        match r.loglik {
            Some(ll) => log::info!("round {} loglik {:.6} {}", r.round, ll, r.status.label()),
            None => log::info!("round {} {}", r.round, r.status.label()),
        }
    }
    let best = rounds
        .iter()
        .filter(|r| r.status.is_admissible())
        .filter_map(|r| Some((r.loglik?, r.params.as_ref()?)))
        .fold(None::<(f64, &ParameterVector)>, |acc, (ll, p)| match acc {
            Some((best, _)) if best >= ll => acc,
            _ => Some((ll, p)),
        });
    let Some((loglik, params)) = best else {
        return Err(if rounds.iter().any(|r| r.loglik.is_some()) {
            GstvarError::NoAdequateSolution { rounds: config.rounds }
        } else {
            GstvarError::AllRoundsFailed { rounds: config.rounds }
        });
    };
    let params = params.clone();
    let jsr = match config.jsr {
        Some((tol, max)) => match companion_jsr(&params, tol, max) {
            Ok(c) => Some(c),
            Err(e) => {
                log::warn!("JSR bounds failed: {e}");
                None
            }
        },
        None => None,
    };
    let hessian = if config.compute_hessian {
        match loglik_hessian(&params, data) {
            Ok(h) => Some(h),
            Err(e) => {
                log::warn!("Hessian failed: {e}");
                None
            }
        }
    } else {
        None
    };
    Ok(FittedModel {
        params,
        loglik,
        data_t: data.nrows() - order.lags,
        jsr,
        rounds_summary: rounds,
        hessian,
        seed: config.seed,
    })
}
