//! Unconstrained reparameterization and regime relabeling.
//!
//! Unconstrained layout mirrors the flattened parameter vector: intercepts,
//! AR entries, then per regime the column-major lower triangle of the
//! Cholesky factor of `Ω_m` with its diagonal on the log scale, then the
//! additive log-ratios `log(α_m / α_M)`, `m < M`.

use nalgebra::{DMatrix, DVector};

use crate::error::{GstvarError, Result};
use crate::linalg;
use crate::model::{ModelOrder, ParameterVector, RegimeParameters};

pub fn to_unconstrained(params: &ParameterVector) -> Result<Vec<f64>> {
    let order = params.order();
    let d = order.dim;
    let mut out = Vec::with_capacity(order.param_count());
    for r in params.regimes() {
        out.extend(r.intercept.iter());
    }
    for r in params.regimes() {
        for a in &r.ar {
            out.extend(linalg::vec_of(a));
        }
    }
    for r in params.regimes() {
        let l = linalg::cholesky_lower(&r.omega)?;
        for j in 0..d {
            out.push(l[(j, j)].ln());
            for i in (j + 1)..d {
                out.push(l[(i, j)]);
            }
        }
    }
    let alphas = params.alphas();
    let last = alphas[order.regimes - 1];
    out.extend(alphas[..order.regimes - 1].iter().map(|a| (a / last).ln()));
    Ok(out)
}

pub fn from_unconstrained(x: &[f64], order: ModelOrder) -> Result<ParameterVector> {
    if x.len() != order.param_count() {
        return Err(GstvarError::DimensionMismatch(format!(
            "unconstrained vector has {} entries, expected {}",
            x.len(),
            order.param_count()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(GstvarError::InvalidInput("non-finite unconstrained coordinates".into()));
    }
    let (d, p, m) = (order.dim, order.lags, order.regimes);
    let mut pos = 0;
    let mut take = |n: usize| {
        let s = &x[pos..pos + n];
        pos += n;
        s
    };
    let intercepts: Vec<DVector<f64>> = (0..m).map(|_| DVector::from_column_slice(take(d))).collect();
    let ars: Vec<Vec<DMatrix<f64>>> = (0..m)
        .map(|_| (0..p).map(|_| DMatrix::from_column_slice(d, d, take(d * d))).collect())
        .collect();
    let omegas: Vec<DMatrix<f64>> = (0..m)
        .map(|_| {
            let v = take(d * (d + 1) / 2);
            let mut l = DMatrix::zeros(d, d);
            let mut k = 0;
            for j in 0..d {
                l[(j, j)] = v[k].exp();
                k += 1;
                for i in (j + 1)..d {
                    l[(i, j)] = v[k];
                    k += 1;
                }
            }
            let o = &l * l.transpose();
            0.5 * (&o + o.transpose())
        })
        .collect();
    let logits = take(m - 1);
    let max = logits.iter().copied().fold(0.0f64, f64::max);
    let mut alphas: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    alphas.push((-max).exp());
    let total: f64 = alphas.iter().sum();
    alphas.iter_mut().for_each(|a| *a /= total);
    if alphas.iter().any(|a| !(*a > 0.0)) {
        return Err(GstvarError::InvalidInput("transition weight parameter underflow".into()));
    }
    let regimes = intercepts
        .into_iter()
        .zip(ars)
        .zip(omegas)
        .map(|((c, a), o)| RegimeParameters::new(c, a, o))
        .collect::<Result<Vec<_>>>()?;
    ParameterVector::new(regimes, alphas)
}

/// Reorders regimes so that `α_1 > ... > α_M`.
pub fn identify(params: &ParameterVector) -> Result<ParameterVector> {
    let alphas = params.alphas();
    for i in 0..alphas.len() {
        for j in (i + 1)..alphas.len() {
            if (alphas[i] - alphas[j]).abs() <= 1e-12 {
                return Err(GstvarError::TiedAlphas);
            }
        }
    }
    let mut perm: Vec<usize> = (0..alphas.len()).collect();
    perm.sort_by(|&a, &b| alphas[b].total_cmp(&alphas[a]));
    Ok(permute_regimes(params, &perm))
}

/// New parameter point whose regime `k` is regime `perm[k]` of `params`.
pub fn permute_regimes(params: &ParameterVector, perm: &[usize]) -> ParameterVector {
    let regimes = perm.iter().map(|&i| params.regimes()[i].clone()).collect();
    let alphas: Vec<f64> = perm.iter().map(|&i| params.alphas()[i]).collect();
    ParameterVector::new(regimes, alphas).expect("permutation of a valid parameter point")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::StudyModel;
    use proptest::prelude::*;

    #[test]
    fn identity_covariance_maps_to_zero() {
        let r = RegimeParameters::new(DVector::zeros(2), vec![DMatrix::zeros(2, 2)], DMatrix::identity(2, 2)).unwrap();
        let p = ParameterVector::new(vec![r], vec![1.0]).unwrap();
        let x = to_unconstrained(&p).unwrap();
        assert!(x[6..9].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn two_regime_logit() {
        let params = StudyModel::Model1.params();
        let x = to_unconstrained(&params).unwrap();
        assert!((x[18] - (0.7f64 / 0.3).ln()).abs() < 1e-15);
        assert!((x[18] - 0.8473).abs() < 1e-4);
        let back = from_unconstrained(&x, params.order()).unwrap();
        assert!((back.alphas()[0] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn identify_orders_and_detects_ties() {
        let params = StudyModel::Model1.params();
        assert_eq!(identify(&params).unwrap(), params);
        let swapped = permute_regimes(&params, &[1, 0]);
        let fixed = identify(&swapped).unwrap();
        assert_eq!(fixed.regimes(), params.regimes());
        assert!((fixed.alphas()[0] - 0.7).abs() < 1e-15);
        let r = params.regimes()[0].clone();
        let tied = ParameterVector::new(vec![r.clone(), r], vec![0.5, 0.5]).unwrap();
        assert_eq!(identify(&tied), Err(GstvarError::TiedAlphas));
    }

    #[test]
    fn identify_three_regimes() {
        let base = StudyModel::Model1.params();
        let regs = vec![base.regimes()[0].clone(), base.regimes()[1].clone(), base.regimes()[0].clone()];
        let p = ParameterVector::new(regs.clone(), vec![0.2, 0.5, 0.3]).unwrap();
        let out = identify(&p).unwrap();
        assert_eq!(out.alphas(), &[0.5, 0.3, 0.2]);
        assert_eq!(out.regimes()[0], regs[1]);
        assert_eq!(out.regimes()[1], regs[2]);
        assert_eq!(out.regimes()[2], regs[0]);
        assert_eq!(identify(&out).unwrap(), out);
    }

    fn arb_params() -> impl Strategy<Value = ParameterVector> {
        (1usize..=3, 1usize..=2, 1usize..=3)
            .prop_flat_map(|(d, p, m)| {
                let n = ModelOrder::new(d, p, m).unwrap().param_count();
                (Just(ModelOrder::new(d, p, m).unwrap()), prop::collection::vec(-1.5f64..1.5, n))
            })
            .prop_map(|(order, x)| from_unconstrained(&x, order).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn unconstrained_roundtrip(params in arb_params()) {
            let x = to_unconstrained(&params).unwrap();
            let back = from_unconstrained(&x, params.order()).unwrap();
            let err = params
                .to_theta()
                .iter()
                .zip(back.to_theta())
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            prop_assert!(err < 1e-10);
        }
    }
}
