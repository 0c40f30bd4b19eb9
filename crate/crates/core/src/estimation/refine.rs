//! Variable-metric refinement of a starting value.

use super::transform::{from_unconstrained, to_unconstrained};
use super::EstimationConfig;
use crate::error::{GstvarError, Result};
use crate::model::{log_likelihood, ModelOrder, ParameterVector, SeriesMatrix};
use crate::optim::{maximize, OptimOptions, OptimStatus};
use crate::stationarity::check_necessary;

#[derive(Debug, Clone)]
pub struct RefineOutcome {
    pub params: ParameterVector,
    pub loglik: f64,
    /// `Boundary` when the final iteration ran into the stability margin.
    pub status: OptimStatus,
    pub iterations: usize,
    pub gradient_norm: f64,
}

/// Log-likelihood at unconstrained coordinates; `None` outside the region
/// where every regime's radius is below `1 - margin`.
pub fn constrained_objective(x: &[f64], order: ModelOrder, data: &SeriesMatrix, margin: f64) -> Option<f64> {
    let params = from_unconstrained(x, order).ok()?;
    if !check_necessary(&params, margin).ok()?.holds {
        return None;
    }
    log_likelihood(&params, data).ok().filter(|v| v.is_finite())
}

pub fn refine(start: &ParameterVector, data: &SeriesMatrix, config: &EstimationConfig) -> Result<RefineOutcome> {
    let order = start.order();
    let margin = config.stationarity_margin;
    if !check_necessary(start, margin)?.holds {
        return Err(GstvarError::InvalidInput("refinement start violates the stability margin".into()));
    }
    let x0 = to_unconstrained(start)?;
    let opts = OptimOptions {
        gradient_step: config.gradient_step,
        max_iter: config.max_refine_iterations,
        ..OptimOptions::default()
    };
    let out = maximize(|x| constrained_objective(x, order, data, margin), &x0, &opts)?;
    Ok(RefineOutcome {
        params: from_unconstrained(&out.x, order)?,
        loglik: out.value,
        status: out.status,
        iterations: out.iterations,
        gradient_norm: out.gradient_norm,
    })
}
