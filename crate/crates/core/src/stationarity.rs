//! Companion matrices, the per-regime stability check and certified bounds on
//! the joint spectral radius of the regime companion matrices.

use nalgebra::DMatrix;

use crate::error::{GstvarError, Result};
use crate::linalg::{spectral_norm, spectral_radius};
use crate::model::{ParameterVector, RegimeParameters};
use crate::par;

/// `dp x dp` companion form of a regime's AR matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct CompanionMatrix(DMatrix<f64>);

impl CompanionMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

/// Top block row `[A_1 ... A_p]`, identity blocks on the block subdiagonal.
pub fn companion_matrix(regime: &RegimeParameters) -> CompanionMatrix {
    let d = regime.dim();
    let p = regime.lags();
    let mut m = DMatrix::zeros(d * p, d * p);
    for (i, a) in regime.ar.iter().enumerate() {
        m.view_mut((0, i * d), (d, d)).copy_from(a);
    }
    for k in d..d * p {
        m[(k, k - d)] = 1.0;
    }
    CompanionMatrix(m)
}

/// Outcome of the per-regime stability check.
#[derive(Debug, Clone, PartialEq)]
pub struct NecessaryCheck {
    pub holds: bool,
    pub radii: Vec<f64>,
}

/// Every regime's companion spectral radius is below `1 - margin`.
pub fn check_necessary(params: &ParameterVector, margin: f64) -> Result<NecessaryCheck> {
    let radii = params
        .regimes()
        .iter()
        .map(|r| spectral_radius(companion_matrix(r).matrix()))
        .collect::<Result<Vec<_>>>()?;
    let holds = radii.iter().all(|&r| r < 1.0 - margin);
    Ok(NecessaryCheck { holds, radii })
}

pub const DEFAULT_JSR_TOLERANCE: f64 = 1e-2;
pub const DEFAULT_JSR_MAX_PRODUCTS: usize = 1_000_000;

/// Lower and upper bounds on the joint spectral radius.
#[derive(Debug, Clone, PartialEq)]
pub struct JsrCertificate {
    pub lower: f64,
    pub upper: f64,
    pub tolerance_requested: f64,
    /// Deepest product length expanded.
    pub iterations: usize,
    pub products_explored: usize,
    pub converged: bool,
    /// Index sequence of the product attaining `lower`; `lower` equals
    /// `ρ(A_{w_1} ... A_{w_k})^{1/k}`.
    pub witness: Vec<usize>,
}

impl JsrCertificate {
    /// Upper bound strictly below one.
    pub fn certifies_stability(&self) -> bool {
        self.upper < 1.0
    }
}

struct Node {
    product: DMatrix<f64>,
    sequence: Vec<usize>,
    /// Minimum over prefixes of `‖prefix‖^{1/len}`.
    bound: f64,
}

struct Child {
    node: Node,
    rate: f64,
}

/// Gripenberg's branch-and-bound over products of `matrices`.
///
/// Products are extended one factor at a time, generation by generation. A
/// product is closed once its prefix norm bound is at most `lower +
/// tolerance`; the lower bound used for closing is the one known at the start
/// of the generation, so the result does not depend on evaluation order.
/// `upper` is the largest norm bound among closed and open products, which is
/// a valid bound because every infinite product splits into blocks each
/// starting at the root and ending at a closed product or at a frontier
/// product. Norms are spectral norms after an ellipsoidal change of basis
/// whenever that lowers the largest factor norm.
pub fn jsr_bounds(matrices: &[DMatrix<f64>], tolerance: f64, max_products: usize) -> Result<JsrCertificate> {
    let first = matrices
        .first()
        .ok_or_else(|| GstvarError::InvalidInput("empty matrix set".into()))?;
    let n = first.nrows();
    if matrices.iter().any(|m| m.nrows() != n || m.ncols() != n) {
        return Err(GstvarError::DimensionMismatch("JSR matrices must share one square shape".into()));
    }
    if !(tolerance > 0.0) {
        return Err(GstvarError::InvalidInput("tolerance must be positive".into()));
    }

    let original = matrices;
    let conditioned = ellipsoid_precondition(matrices);
    let matrices: &[DMatrix<f64>] = match &conditioned {
        Some(b) if max_norm(b)? < max_norm(original)? => b,
        _ => original,
    };

    let mut lower = 0.0f64;
    let mut witness = vec![0];
    let mut frontier = Vec::with_capacity(matrices.len());
    for (i, m) in matrices.iter().enumerate() {
        let rate = spectral_radius(m)?;
        if rate > lower {
            lower = rate;
            witness = vec![i];
        }
        frontier.push(Node { product: m.clone(), sequence: vec![i], bound: spectral_norm(m)? });
    }
    let mut explored = matrices.len();
    let mut depth = 1;
    let mut closed_max = 0.0f64;

    loop {
        let threshold = lower + tolerance;
        let (open, closed): (Vec<Node>, Vec<Node>) = frontier.into_iter().partition(|node| node.bound > threshold);
        closed_max = closed.iter().map(|n| n.bound).fold(closed_max, f64::max);
        frontier = open;
        let open_max = frontier.iter().map(|n| n.bound).fold(0.0, f64::max);
        let upper = closed_max.max(open_max).max(lower);

        if frontier.is_empty() || upper - lower <= tolerance {
            return Ok(JsrCertificate {
                lower,
                upper: upper.max(lower),
                tolerance_requested: tolerance,
                iterations: depth,
                products_explored: explored,
                converged: true,
                witness,
            });
        }
        let next_count = frontier.len() * matrices.len();
        if explored + next_count > max_products {
            return Ok(JsrCertificate {
                lower,
                upper,
                tolerance_requested: tolerance,
                iterations: depth,
                products_explored: explored,
                converged: false,
                witness,
            });
        }

        // best-first within the generation
        frontier.sort_by(|a, b| b.bound.total_cmp(&a.bound).then_with(|| a.sequence.cmp(&b.sequence)));
        let len = (depth + 1) as f64;
        let expanded: Vec<Result<Vec<Child>>> = par::map_slice(&frontier, |node| {
            matrices
                .iter()
                .enumerate()
                .map(|(i, m)| {
                    let product = &node.product * m;
                    let rate = spectral_radius(&product)?.powf(1.0 / len);
                    let bound = node.bound.min(spectral_norm(&product)?.powf(1.0 / len));
                    let mut sequence = node.sequence.clone();
                    sequence.push(i);
                    Ok(Child { node: Node { product, sequence, bound }, rate })
                })
                .collect()
        });
        explored += next_count;
        depth += 1;
        let mut next = Vec::with_capacity(next_count);
        for group in expanded {
            for child in group? {
                if child.rate > lower {
                    lower = child.rate;
                    witness = child.node.sequence.clone();
                }
                next.push(child.node);
            }
        }
        frontier = next;
    }
}

fn max_norm(matrices: &[DMatrix<f64>]) -> Result<f64> {
    matrices.iter().try_fold(0.0f64, |acc, m| Ok(acc.max(spectral_norm(m)?)))
}

/// Similarity transform `L' A L'^{-T}` with `P = L L'` an approximate
/// common quadratic Lyapunov matrix, the normalized resolvent of
/// `P ↦ Σ A_i' P A_i`. The joint spectral radius is unchanged while the
/// spectral norms of the transformed products are usually much closer to
/// their growth rates, which shortens the search.
fn ellipsoid_precondition(matrices: &[DMatrix<f64>]) -> Option<Vec<DMatrix<f64>>> {
    let n = matrices[0].nrows();
    let apply = |p: &DMatrix<f64>| matrices.iter().fold(DMatrix::zeros(n, n), |acc, a| acc + a.transpose() * p * a);
    let mut p = DMatrix::identity(n, n);
    let mut lambda = 0.0;
    for _ in 0..100 {
        let q = apply(&p);
        lambda = q.trace() / p.trace();
        if !(lambda > 0.0 && lambda.is_finite()) {
            return None;
        }
        p = q / lambda;
        p = (&p + p.transpose()) * 0.5;
    }
    let identity = DMatrix::<f64>::identity(n, n);
    let mut p = identity.clone();
    for _ in 0..500 {
        p = &identity + apply(&p) / (1.1 * lambda);
        let t = p.trace();
        p /= t;
        p = (&p + p.transpose()) * 0.5;
    }
    if p.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let l = p.cholesky()?.l();
    let lt = l.transpose();
    let lt_inv = lt.clone().try_inverse()?;
    Some(matrices.iter().map(|a| &lt * a * &lt_inv).collect())
}

/// JSR bounds for the companion matrices of all regimes.
pub fn companion_jsr(params: &ParameterVector, tolerance: f64, max_products: usize) -> Result<JsrCertificate> {
    let mats: Vec<DMatrix<f64>> = params.regimes().iter().map(|r| companion_matrix(r).into_inner()).collect();
    jsr_bounds(&mats, tolerance, max_products)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::StudyModel;
    use nalgebra::DVector;

    #[test]
    fn companion_p1_is_ar_matrix() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, -0.3, 0.2, 0.7]);
        let r = RegimeParameters::new(DVector::zeros(2), vec![a.clone()], DMatrix::identity(2, 2)).unwrap();
        assert_eq!(companion_matrix(&r).into_inner(), a);
    }

    #[test]
    fn companion_block_pattern() {
        let r = RegimeParameters::new(
            DVector::zeros(2),
            vec![DMatrix::identity(2, 2), DMatrix::zeros(2, 2)],
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let c = companion_matrix(&r).into_inner();
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        );
        assert_eq!(c, expected);
    }

    #[test]
    fn table_d1_moduli() {
        let m1 = StudyModel::Model1.params();
        let check = check_necessary(&m1, 0.0).unwrap();
        assert!(check.holds);
        assert!((check.radii[0] - 0.64).abs() < 0.005);
        assert!((check.radii[1] - 0.37).abs() < 0.005);
        let m2 = StudyModel::Model2.params();
        let check = check_necessary(&m2, 0.0).unwrap();
        assert!(check.holds);
        assert!((check.radii[0] - 0.97).abs() < 0.005);
        assert!((check.radii[1] - 0.96).abs() < 0.005);
    }

    #[test]
    fn necessary_condition_edge_cases() {
        let zero = RegimeParameters::new(DVector::zeros(1), vec![DMatrix::zeros(1, 1)], DMatrix::identity(1, 1)).unwrap();
        let unit =
            RegimeParameters::new(DVector::zeros(1), vec![DMatrix::identity(1, 1)], DMatrix::identity(1, 1)).unwrap();
        let ok = ParameterVector::new(vec![zero.clone(), zero.clone()], vec![0.6, 0.4]).unwrap();
        let check = check_necessary(&ok, 0.0).unwrap();
        assert!(check.holds && check.radii.iter().all(|&r| r == 0.0));
        let bad = ParameterVector::new(vec![unit, zero], vec![0.6, 0.4]).unwrap();
        assert!(!check_necessary(&bad, 0.0).unwrap().holds);
    }

    #[test]
    fn singleton_collapses_to_radius() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.9, 0.0, 0.3]);
        let cert = jsr_bounds(&[a.clone()], 1e-2, 100_000).unwrap();
        let rho = spectral_radius(&a).unwrap();
        assert!(cert.converged);
        assert!((cert.lower - rho).abs() < 1e-12);
        assert!(cert.upper - cert.lower <= 1e-2);
    }

    #[test]
    fn commuting_diagonals() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.2]));
        let b = DMatrix::from_diagonal(&DVector::from_vec(vec![0.3, 0.6]));
        let cert = jsr_bounds(&[a, b], 1e-3, 100_000).unwrap();
        assert!(cert.converged);
        assert!(cert.lower <= 0.6 + 1e-12 && cert.upper >= 0.6 - 1e-12);
        assert!(cert.upper - cert.lower <= 1e-3);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let m = StudyModel::Model2.params();
        let cert = companion_jsr(&m, 1e-6, 50).unwrap();
        assert!(!cert.converged);
        assert!(cert.lower <= cert.upper);
    }

    #[test]
    fn rejects_mismatched_shapes() {
        let a = DMatrix::identity(2, 2);
        let b = DMatrix::identity(3, 3);
        assert!(matches!(jsr_bounds(&[a, b], 1e-2, 10), Err(GstvarError::DimensionMismatch(_))));
    }
}
