//! Shared generators and straight-line reference implementations.
#![allow(dead_code)]

use gstvar::linalg::spectral_radius;
use gstvar::seeding::{rng_from_seed, SimRng};
use gstvar::stationarity::companion_matrix;
use gstvar::{ParameterVector, RegimeParameters, SeriesMatrix};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn normal(rng: &mut SimRng) -> f64 {
    rng.sample(StandardNormal)
}

/// Random regime whose companion spectral radius equals `radius`.
pub fn random_regime(rng: &mut SimRng, d: usize, p: usize, radius: f64) -> RegimeParameters {
    let intercept = DVector::from_fn(d, |_, _| normal(rng));
    let mut ar: Vec<DMatrix<f64>> = (0..p).map(|_| DMatrix::from_fn(d, d, |_, _| 0.4 * normal(rng))).collect();
    let l = DMatrix::from_fn(d, d, |i, j| if i >= j { 0.5 * normal(rng) } else { 0.0 });
    let omega = &l * l.transpose() + DMatrix::identity(d, d) * 0.2;
    let probe = RegimeParameters::new(intercept.clone(), ar.clone(), omega.clone()).unwrap();
    let rho = spectral_radius(companion_matrix(&probe).matrix()).unwrap();
    let c = radius / rho;
    for (i, a) in ar.iter_mut().enumerate() {
        *a *= c.powi(i as i32 + 1);
    }
    RegimeParameters::new(intercept, ar, omega).unwrap()
}

pub fn random_params(seed: u64, d: usize, p: usize, m: usize) -> ParameterVector {
    let mut rng = rng_from_seed(seed);
    let regimes = (0..m)
        .map(|_| {
            let radius = rng.random_range(0.3..0.9);
            random_regime(&mut rng, d, p, radius)
        })
        .collect();
    let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut alphas: Vec<f64> = raw.iter().map(|a| a / total).collect();
    alphas.sort_by(|a, b| b.partial_cmp(a).unwrap());
    ParameterVector::new(regimes, alphas).unwrap()
}

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac, br, bc) = (a.nrows(), a.ncols(), b.nrows(), b.ncols());
    DMatrix::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

/// Mean and covariance of `(y_{t-1}, ..., y_{t-p})` under the regime's
/// stationary distribution, via `vec Σ = (I - A⊗A)^{-1} vec Q`.
pub fn stationary_moments(r: &RegimeParameters) -> (DVector<f64>, DMatrix<f64>) {
    let (d, p) = (r.intercept.len(), r.ar.len());
    let mut sum_a = DMatrix::identity(d, d);
    for a in &r.ar {
        sum_a -= a;
    }
    let mu = sum_a.try_inverse().unwrap() * &r.intercept;
    let mean = DVector::from_fn(d * p, |i, _| mu[i % d]);
    let n = d * p;
    let comp = companion_matrix(r).matrix().clone();
    let mut q = DMatrix::zeros(n, n);
    q.view_mut((0, 0), (d, d)).copy_from(&r.omega);
    let big = DMatrix::identity(n * n, n * n) - kron(&comp, &comp);
    let vec_q = DVector::from_column_slice(q.as_slice());
    let vec_s = big.try_inverse().unwrap() * vec_q;
    (mean, DMatrix::from_column_slice(n, n, vec_s.as_slice()))
}

/// Gaussian density from an explicit inverse and determinant; returns the
/// log value.
pub fn log_density(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let n = x.len() as f64;
    let diff = x - mean;
    let inv = cov.clone().try_inverse().unwrap();
    let q = (diff.transpose() * inv * &diff)[(0, 0)];
    -0.5 * (n * (2.0 * std::f64::consts::PI).ln() + cov.determinant().ln() + q)
}

/// Transition weights with linear-space densities where they do not
/// underflow, otherwise shifted by the largest log term.
pub fn reference_weights(params: &ParameterVector, stacked: &DVector<f64>) -> Vec<f64> {
    let logs: Vec<f64> = params
        .regimes()
        .iter()
        .zip(params.alphas())
        .map(|(r, a)| {
            let (m, s) = stationary_moments(r);
            a.ln() + log_density(stacked, &m, &s)
        })
        .collect();
    let linear: Vec<f64> = logs.iter().map(|l| l.exp()).collect();
    let total: f64 = linear.iter().sum();
    if total > 1e-250 && total.is_finite() {
        linear.iter().map(|v| v / total).collect()
    } else {
        let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let shifted: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
        let s: f64 = shifted.iter().sum();
        shifted.iter().map(|v| v / s).collect()
    }
}

pub fn stacked_history(data: &SeriesMatrix, t: usize, p: usize) -> DVector<f64> {
    let d = data.ncols();
    DVector::from_fn(d * p, |k, _| data.get(t - 1 - k / d, k % d))
}

pub fn reference_loglik(params: &ParameterVector, data: &SeriesMatrix) -> f64 {
    let order = params.order();
    let (d, p) = (order.dim, order.lags);
    let mut total = 0.0;
    for t in p..data.nrows() {
        let stacked = stacked_history(data, t, p);
        let w = if order.regimes == 1 { vec![1.0] } else { reference_weights(params, &stacked) };
        let mut mean = DVector::zeros(d);
        let mut cov = DMatrix::zeros(d, d);
        for (r, wm) in params.regimes().iter().zip(&w) {
            let mut mu = r.intercept.clone();
            for (i, a) in r.ar.iter().enumerate() {
                mu += a * DVector::from_fn(d, |j, _| data.get(t - 1 - i, j));
            }
            mean += *wm * mu;
            cov += *wm * &r.omega;
        }
        let y = DVector::from_row_slice(data.row(t));
        total += log_density(&y, &mean, &cov);
    }
    total
}

/// Least squares VAR by explicit inversion of `X'X`.
pub fn reference_ols(data: &SeriesMatrix, p: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let (t, d) = (data.nrows(), data.ncols());
    let n = t - p;
    let x = DMatrix::from_fn(n, 1 + d * p, |r, c| if c == 0 { 1.0 } else { data.get(r + p - 1 - (c - 1) / d, (c - 1) % d) });
    let y = DMatrix::from_fn(n, d, |r, c| data.get(r + p, c));
    let b = (x.transpose() * &x).try_inverse().unwrap() * x.transpose() * &y;
    let resid = &y - &x * &b;
    let omega = resid.transpose() * &resid / n as f64;
    (b, omega)
}
