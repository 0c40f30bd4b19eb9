//! Wald tests of equal intercepts and AR matrices across regimes.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::{loglik_hessian, FittedModel};
use crate::error::{GstvarError, Result};
use crate::model::{ParameterVector, SeriesMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaldRestriction {
    InterceptsAndAr,
    ArOnly,
}

impl WaldRestriction {
    pub fn name(self) -> &'static str {
        match self {
            Self::InterceptsAndAr => "intercepts_and_ar",
            Self::ArOnly => "ar_only",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaldResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub restriction: WaldRestriction,
}

/// Restriction matrix equating regime `m >= 2` blocks with regime 1.
pub fn restriction_matrix(params: &ParameterVector, restriction: WaldRestriction) -> Result<DMatrix<f64>> {
    let order = params.order();
    let (d, p, m) = (order.dim, order.lags, order.regimes);
    if m < 2 {
        return Err(GstvarError::InvalidInput("the constancy test needs at least two regimes".into()));
    }
    let ar_len = d * d * p;
    let mut pairs = Vec::new();
    for r in 1..m {
        if restriction == WaldRestriction::InterceptsAndAr {
            for i in 0..d {
                pairs.push((i, r * d + i));
            }
        }
        for i in 0..ar_len {
            pairs.push((m * d + i, m * d + r * ar_len + i));
        }
    }
    let mut rm = DMatrix::zeros(pairs.len(), order.param_count());
    for (row, (a, b)) in pairs.into_iter().enumerate() {
        rm[(row, a)] = 1.0;
        rm[(row, b)] = -1.0;
    }
    Ok(rm)
}

/// Wald statistic `(Rθ)'[R Σ R']^{-1}(Rθ)` with `Σ = (-H)^{-1}`.
pub fn wald_test(params: &ParameterVector, hessian: &DMatrix<f64>, restriction: WaldRestriction) -> Result<WaldResult> {
    let k = params.order().param_count();
    if hessian.shape() != (k, k) {
        return Err(GstvarError::DimensionMismatch(format!("Hessian must be {k}x{k}")));
    }
    let rm = restriction_matrix(params, restriction)?;
    let theta = DVector::from_vec(params.to_theta());
    let r_theta = &rm * theta;
    let df = rm.nrows();
    let neg_h = -hessian;
    let cov = neg_h.lu().try_inverse().ok_or(GstvarError::SingularHessian)?;
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(GstvarError::SingularHessian);
    }
    let v = &rm * cov * rm.transpose();
    let v = 0.5 * (&v + v.transpose());
    let chol = v.cholesky().ok_or(GstvarError::SingularHessian)?;
    let statistic = r_theta.dot(&chol.solve(&r_theta)).max(0.0);
    let chi = ChiSquared::new(df as f64).map_err(|e| GstvarError::NumericalFailure(e.to_string()))?;
    let p_value = if statistic == 0.0 { 1.0 } else { chi.sf(statistic).clamp(0.0, 1.0) };
    Ok(WaldResult { statistic, df, p_value, restriction })
}

/// Wald test on a fitted model, computing the Hessian if the fit lacks one.
pub fn wald_constancy_test(fit: &FittedModel, data: &SeriesMatrix, restriction: WaldRestriction) -> Result<WaldResult> {
    let hessian = match &fit.hessian {
        Some(h) => h.clone(),
        None => loglik_hessian(&fit.params, data)?,
    };
    wald_test(&fit.params, &hessian, restriction)
}
