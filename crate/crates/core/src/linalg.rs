//! Dense linear-algebra helpers shared by the model, stationarity and
//! estimation code.
//!
//! Two flavours live here: `nalgebra` based routines used at setup time, and
//! small allocation-free kernels over row-major `f64` slices used inside the
//! per-observation loops of the likelihood, simulation and GIRF code.

use nalgebra::{DMatrix, DVector, Schur, SVD};

use crate::error::{GstvarError, Result};

/// ln(2π)
pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Above this companion dimension the stationary covariance switches from the
/// dense Kronecker solve to doubling iteration.
pub const KRONECKER_MAX_DIM: usize = 40;

/// Lower Cholesky factor `L` with `L L' = m`.
pub fn cholesky_lower(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(GstvarError::DimensionMismatch(format!(
            "cholesky of a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(GstvarError::NotPositiveDefinite("non-finite entries".into()));
    }
    nalgebra::Cholesky::new(m.clone())
        .map(|c| c.unpack())
        .ok_or_else(|| GstvarError::NotPositiveDefinite("cholesky failed".into()))
}

/// Log density of `N(mean, cov)` at `x`, evaluated through a Cholesky solve.
pub fn mvn_log_density(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    let k = x.len();
    if mean.len() != k || cov.nrows() != k || cov.ncols() != k {
        return Err(GstvarError::DimensionMismatch(format!(
            "x has length {k}, mean {}, cov {}x{}",
            mean.len(),
            cov.nrows(),
            cov.ncols()
        )));
    }
    let l = cholesky_lower(cov)?;
    let diff = x - mean;
    let z = l
        .solve_lower_triangular(&diff)
        .ok_or_else(|| GstvarError::NotPositiveDefinite("zero pivot".into()))?;
    let log_det: f64 = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok(-0.5 * (k as f64 * LN_2PI + log_det + z.norm_squared()))
}

/// Column-major stacking of all entries.
pub fn vec_of(m: &DMatrix<f64>) -> Vec<f64> {
    m.as_slice().to_vec()
}

/// Column-major stacking of the lower triangle including the diagonal.
pub fn vech(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for j in 0..n {
        for i in j..n {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Inverse of [`vech`]: rebuilds the symmetric matrix.
pub fn unvech(values: &[f64], n: usize) -> Result<DMatrix<f64>> {
    if values.len() != n * (n + 1) / 2 {
        return Err(GstvarError::DimensionMismatch(format!(
            "vech of a {n}x{n} matrix needs {} entries, got {}",
            n * (n + 1) / 2,
            values.len()
        )));
    }
    let mut m = DMatrix::zeros(n, n);
    let mut k = 0;
    for j in 0..n {
        for i in j..n {
            m[(i, j)] = values[k];
            m[(j, i)] = values[k];
            k += 1;
        }
    }
    Ok(m)
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let n = m.nrows();
    (0..n).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol))
}

/// Largest eigenvalue modulus, from a real Schur decomposition.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    if !m.is_square() {
        return Err(GstvarError::DimensionMismatch("spectral radius of a non-square matrix".into()));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(GstvarError::InvalidInput("non-finite matrix entries".into()));
    }
    match m.nrows() {
        0 => Ok(0.0),
        1 => Ok(m[(0, 0)].abs()),
        2 => Ok(spectral_radius_2x2(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)])),
        _ => {
            let schur = Schur::try_new(m.clone(), f64::EPSILON, 10_000).ok_or(GstvarError::EigenFailure)?;
            Ok(schur
                .complex_eigenvalues()
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max))
        }
    }
}

fn spectral_radius_2x2(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let half_tr = 0.5 * (a + d);
    let det = a * d - b * c;
    let disc = half_tr * half_tr - det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        (half_tr + s).abs().max((half_tr - s).abs())
    } else {
        // complex pair, |λ|² = det
        det.abs().sqrt()
    }
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() == 1 && m.ncols() == 1 {
        return Ok(m[(0, 0)].abs());
    }
    let svd = SVD::try_new(m.clone(), false, false, f64::EPSILON, 10_000).ok_or(GstvarError::EigenFailure)?;
    Ok(svd.singular_values.iter().copied().fold(0.0, f64::max))
}

/// Solves `X = A X A' + Q` for stable `A`.
///
/// Dense Kronecker solve up to [`KRONECKER_MAX_DIM`], squared-power doubling
/// above it.
pub fn discrete_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if !a.is_square() || q.nrows() != n || q.ncols() != n {
        return Err(GstvarError::DimensionMismatch("lyapunov operands".into()));
    }
    let x = if n <= KRONECKER_MAX_DIM {
        let kron = a.kronecker(a);
        let system = DMatrix::<f64>::identity(n * n, n * n) - kron;
        let rhs = DVector::from_column_slice(q.as_slice());
        let sol = system
            .lu()
            .solve(&rhs)
            .ok_or_else(|| GstvarError::NumericalFailure("singular Kronecker system".into()))?;
        DMatrix::from_column_slice(n, n, sol.as_slice())
    } else {
        lyapunov_doubling(a, q, 1e-12, 200)?
    };
    Ok(0.5 * (&x + x.transpose()))
}

/// Smith doubling: `X_{k+1} = X_k + A^{2^k} X_k (A')^{2^k}`.
pub fn lyapunov_doubling(a: &DMatrix<f64>, q: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<DMatrix<f64>> {
    let mut x = q.clone();
    let mut power = a.clone();
    for _ in 0..max_iter {
        let incr = &power * &x * power.transpose();
        let size = incr.amax();
        x += incr;
        if size <= tol * x.amax().max(1.0) {
            return Ok(x);
        }
        power = &power * &power;
        if power.iter().any(|v| !v.is_finite()) {
            break;
        }
    }
    Err(GstvarError::NumericalFailure("lyapunov doubling did not converge".into()))
}

// ---- flat row-major kernels ------------------------------------------------

/// In-place lower Cholesky of a row-major `n x n` matrix; the strict upper
/// triangle is zeroed. Returns `false` on a non-positive pivot.
#[inline]
pub fn chol_in_place(a: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= a[j * n + k] * a[j * n + k];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return false;
        }
        let ljj = diag.sqrt();
        a[j * n + j] = ljj;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / ljj;
        }
        for k in (j + 1)..n {
            a[j * n + k] = 0.0;
        }
    }
    true
}

/// Solves `L z = b` in place for row-major lower-triangular `L`.
#[inline]
pub fn forward_solve_in_place(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// `sum(log diag(L))` for row-major `L`.
#[inline]
pub fn half_log_det_from_chol(l: &[f64], n: usize) -> f64 {
    (0..n).map(|i| l[i * n + i].ln()).sum()
}

/// Row-major copy of a matrix.
pub fn to_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}
