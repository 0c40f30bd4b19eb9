//! Quasi-Newton (BFGS) maximization with central-difference gradients.
//!
//! Objectives return `None` outside their domain; the line search treats such
//! points as infeasible and backtracks.

use crate::error::{GstvarError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimOptions {
    /// Relative finite-difference step, scaled by `max(|x_i|, 1)`.
    pub gradient_step: f64,
    pub max_iter: usize,
    /// Stop once the gradient sup-norm falls below this.
    pub gradient_tol: f64,
    /// Stop once the relative objective improvement falls below this.
    pub relative_tol: f64,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self { gradient_step: 6e-6, max_iter: 500, gradient_tol: 1e-4, relative_tol: 1e-10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimStatus {
    Converged,
    MaxIter,
    /// The last iteration ran into the edge of the feasible region.
    Boundary,
}

#[derive(Debug, Clone)]
pub struct OptimOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub status: OptimStatus,
    pub iterations: usize,
    pub gradient_norm: f64,
}

/// Central-difference gradient. Falls back to a one-sided difference when
/// one neighbour is infeasible; returns whether any fallback was needed.
pub fn central_gradient<F>(f: &F, x: &[f64], fx: f64, rel_step: f64, grad: &mut [f64]) -> bool
where
    F: Fn(&[f64]) -> Option<f64>,
{
    let mut probe = x.to_vec();
    let mut one_sided = false;
    for i in 0..x.len() {
        let h = rel_step * x[i].abs().max(1.0);
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        grad[i] = match (up, down) {
            (Some(u), Some(d)) => (u - d) / (2.0 * h),
            (Some(u), None) => {
                one_sided = true;
                (u - fx) / h
            }
            (None, Some(d)) => {
                one_sided = true;
                (fx - d) / h
            }
            (None, None) => {
                one_sided = true;
                0.0
            }
        };
    }
    one_sided
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Maximizes `f` from `x0`.
pub fn maximize<F>(f: F, x0: &[f64], opts: &OptimOptions) -> Result<OptimOutcome>
where
    F: Fn(&[f64]) -> Option<f64>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(&x)
        .filter(|v| v.is_finite())
        .ok_or_else(|| GstvarError::NumericalFailure("objective is not finite at the start".into()))?;
    let mut grad = vec![0.0; n];
    let mut boundary = central_gradient(&f, &x, fx, opts.gradient_step, &mut grad);
    // inverse Hessian approximation of -f, row-major
    let mut h_inv = identity(n);
    let mut first = true;
    let mut status = OptimStatus::MaxIter;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        if sup_norm(&grad) < opts.gradient_tol {
            status = OptimStatus::Converged;
            break;
        }
        iterations += 1;
        let mut dir = mat_vec(&h_inv, &grad, n);
        let mut slope = dot(&dir, &grad);
        if !(slope > 0.0) {
            h_inv = identity(n);
            dir = grad.clone();
            slope = dot(&dir, &grad);
        }
        let mut step = if first { (1.0 / sup_norm(&dir)).min(1.0) } else { 1.0 };
        let mut hit_infeasible = false;
        let mut accepted = None;
        let mut trial = vec![0.0; n];
        for _ in 0..60 {
            for i in 0..n {
                trial[i] = x[i] + step * dir[i];
            }
            match f(&trial).filter(|v| v.is_finite()) {
                Some(v) if v >= fx + 1e-4 * step * slope => {
                    accepted = Some(v);
                    break;
                }
                Some(_) => {}
                None => hit_infeasible = true,
            }
            step *= 0.5;
        }
        let Some(f_new) = accepted else {
            if !first && h_inv != identity(n) {
                // retry along the gradient before giving up
                h_inv = identity(n);
                first = true;
                continue;
            }
            status = if boundary || hit_infeasible { OptimStatus::Boundary } else { OptimStatus::Converged };
            break;
        };
        let s: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
        let mut grad_new = vec![0.0; n];
        boundary = central_gradient(&f, &trial, f_new, opts.gradient_step, &mut grad_new) || hit_infeasible;
        // gradient change of the minimized function -f
        let y: Vec<f64> = grad.iter().zip(&grad_new).map(|(g0, g1)| g0 - g1).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if first {
                let scale = sy / dot(&y, &y);
                h_inv = identity(n);
                h_inv.iter_mut().for_each(|v| *v *= scale);
            }
            bfgs_update(&mut h_inv, &s, &y, sy, n);
        }
        first = false;
        let improvement = (f_new - fx) / fx.abs().max(1.0);
        x = trial;
        fx = f_new;
        grad = grad_new;
        if improvement < opts.relative_tol {
            status = if boundary { OptimStatus::Boundary } else { OptimStatus::Converged };
            break;
        }
    }
    if status == OptimStatus::MaxIter && boundary {
        status = OptimStatus::Boundary;
    }
    Ok(OptimOutcome { gradient_norm: sup_norm(&grad), x, value: fx, status, iterations })
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

fn mat_vec(m: &[f64], v: &[f64], n: usize) -> Vec<f64> {
    (0..n).map(|i| dot(&m[i * n..(i + 1) * n], v)).collect()
}

/// `H ← (I - ρ s y') H (I - ρ y s') + ρ s s'`
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64, n: usize) {
    let rho = 1.0 / sy;
    let hy = mat_vec(h, y, n);
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}
