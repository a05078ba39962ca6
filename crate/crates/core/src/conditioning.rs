//! Gaussian conditioning of the missing node on everything else, in
//! precision form.

use nalgebra::{DMatrix, DVector};

use crate::data::ObservedData;
use crate::error::{Error, Result};
use crate::linalg;
use crate::sem::{GaussianMoments, SemParams, DEFAULT_VARIANCE_FLOOR};

/// `T | X_{-t} = x ~ N(offset + w^T (x - m_{-t}), variance)`.
///
/// `weights` and `observed_mean` are indexed by observed column (node order
/// with `target` skipped).
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalLaw {
    pub target: usize,
    pub weights: DVector<f64>,
    pub offset: f64,
    pub observed_mean: DVector<f64>,
    pub variance: f64,
}

impl ConditionalLaw {
    /// Builds the law from row `t` of the precision and the joint mean.
    pub fn from_precision_row(target: usize, row: &DVector<f64>, mean: &DVector<f64>) -> Result<Self> {
        let k_tt = row[target];
        if !(k_tt > 0.0) || !k_tt.is_finite() {
            return Err(Error::NotPositiveDefinite(format!(
                "precision diagonal K_tt = {k_tt}"
            )));
        }
        let weights = -linalg::drop_index(row, target) / k_tt;
        Ok(Self {
            target,
            weights,
            offset: mean[target],
            observed_mean: linalg::drop_index(mean, target),
            variance: 1.0 / k_tt,
        })
    }

    /// Conditional mean at one observed vector.
    pub fn mean_at(&self, x: &DVector<f64>) -> f64 {
        self.offset + self.weights.dot(&(x - &self.observed_mean))
    }

    /// `mu(x) = intercept + w^T x` with `intercept = m_t - w^T m_{-t}`.
    pub fn affine_intercept(&self) -> f64 {
        self.offset - self.weights.dot(&self.observed_mean)
    }
}

/// Conditional law from dense joint moments, using row `t` of `K`.
pub fn conditional_law(moments: &GaussianMoments, target: usize) -> Result<ConditionalLaw> {
    let p = moments.mean.len();
    if target >= p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: target,
        });
    }
    let row = moments.precision.row(target).transpose();
    ConditionalLaw::from_precision_row(target, &row, &moments.mean)
}

/// Conditional law straight from SEM parameters. Row `t` of `K` is assembled
/// from the equations of `t` and its children only; the covariance is never
/// formed.
pub fn conditional_law_from_params(params: &SemParams, target: usize) -> Result<ConditionalLaw> {
    let p = params.node_count();
    if target >= p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: target,
        });
    }
    let floor = DEFAULT_VARIANCE_FLOOR;
    let dag = params.dag();
    for k in std::iter::once(target).chain(dag.children(target).iter().copied()) {
        if params.variance(k) < floor {
            return Err(Error::DegenerateVariance {
                node: dag.name(k).to_string(),
                value: params.variance(k),
                floor,
            });
        }
    }
    let row = params.precision_row(target);
    ConditionalLaw::from_precision_row(target, &row, &params.implied_mean())
}

/// Reference conditioning through the covariance Schur complement:
/// `w = Sigma_{-t,-t}^{-1} Sigma_{-t,t}`, `V = Sigma_tt - Sigma_{t,-t} w`.
///
/// Solves with a Cholesky factor of `Sigma_{-t,-t}`; kept as an independent
/// cross-check of the precision path.
pub fn schur_conditional_law(moments: &GaussianMoments, target: usize) -> Result<ConditionalLaw> {
    let p = moments.mean.len();
    let rest: Vec<usize> = (0..p).filter(|&k| k != target).collect();
    let s_oo = linalg::submatrix(&moments.covariance, &rest, &rest);
    let s_ot = linalg::submatrix(&moments.covariance, &rest, &[target]).column(0).clone_owned();
    let weights = if rest.is_empty() {
        DVector::zeros(0)
    } else {
        linalg::cholesky_spd(&s_oo, linalg::SPD_PIVOT_TOL)?.solve(&s_ot)
    };
    let variance = moments.covariance[(target, target)] - s_ot.dot(&weights);
    Ok(ConditionalLaw {
        target,
        weights,
        offset: moments.mean[target],
        observed_mean: linalg::drop_index(&moments.mean, target),
        variance,
    })
}

/// Conditional means for every row of an `n x (p-1)` observed matrix.
pub fn impute_batch(law: &ConditionalLaw, data: &DMatrix<f64>) -> Result<DVector<f64>> {
    if data.ncols() != law.weights.len() {
        return Err(Error::DimensionMismatch {
            expected: law.weights.len(),
            got: data.ncols(),
        });
    }
    let mut out = data * &law.weights;
    out.add_scalar_mut(law.affine_intercept());
    Ok(out)
}

/// Conditional means for observed target-domain data.
pub fn impute_observed(law: &ConditionalLaw, data: &ObservedData) -> Result<DVector<f64>> {
    if data.target() != law.target {
        return Err(Error::DimensionMismatch {
            expected: law.target,
            got: data.target(),
        });
    }
    impute_batch(law, data.matrix())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::DagSpec;
    use crate::sem::implied_covariance;
    use std::sync::Arc;

    fn chain(theta: f64, c: [f64; 2]) -> SemParams {
        let dag = Arc::new(DagSpec::new(vec!["X1".into(), "X2".into()], &[(0, 1)]).unwrap());
        let mut b = DMatrix::zeros(2, 2);
        b[(1, 0)] = theta;
        SemParams::new(dag, b, DVector::from_row_slice(&c), DVector::from_element(2, 1.0)).unwrap()
    }

    #[test]
    fn isolated_node_is_unconditioned() {
        let dag = Arc::new(
            DagSpec::new(vec!["a".into(), "b".into(), "t".into()], &[(0, 1)]).unwrap(),
        );
        let mut params = SemParams::standard(dag);
        params.set_variance(2, 2.5).unwrap();
        params.set_intercept(2, 0.7);
        let law = conditional_law_from_params(&params, 2).unwrap();
        assert_eq!(law.weights, DVector::zeros(2));
        assert_eq!(law.variance, 2.5);
        assert_eq!(law.offset, 0.7);
    }

    #[test]
    fn chain_child_missing() {
        let params = chain(2.0, [0.0, 3.0]);
        let mom = implied_covariance(&params).unwrap();
        let law = conditional_law(&mom, 1).unwrap();
        assert_eq!(law.weights.as_slice(), &[2.0]);
        assert_eq!(law.variance, 1.0);
        assert_eq!(law.offset, 3.0);
        let oracle = schur_conditional_law(&mom, 1).unwrap();
        assert!((oracle.weights[0] - 2.0).abs() < 1e-12);
        assert!((oracle.variance - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chain_parent_missing() {
        // X1 | X2: w = 2/5, V = 1/5
        let params = chain(2.0, [0.0, 0.0]);
        let law = conditional_law_from_params(&params, 0).unwrap();
        assert!((law.weights[0] - 0.4).abs() < 1e-15);
        assert!((law.variance - 0.2).abs() < 1e-15);
    }

    #[test]
    fn impute_constant_and_centered() {
        let law = ConditionalLaw {
            target: 0,
            weights: DVector::zeros(2),
            offset: 1.25,
            observed_mean: DVector::from_row_slice(&[3.0, -1.0]),
            variance: 1.0,
        };
        let data = DMatrix::from_row_slice(3, 2, &[0.0, 1.0, 5.0, 2.0, -4.0, 8.0]);
        assert_eq!(impute_batch(&law, &data).unwrap(), DVector::from_element(3, 1.25));

        let law = ConditionalLaw {
            weights: DVector::from_row_slice(&[0.3, -2.0]),
            ..law
        };
        let at_mean = DMatrix::from_row_slice(1, 2, &[3.0, -1.0]);
        let out = impute_batch(&law, &at_mean).unwrap();
        assert!((out[0] - 1.25).abs() < 1e-14);
    }

    #[test]
    fn impute_dimension_mismatch() {
        let law = conditional_law_from_params(&chain(1.0, [0.0, 0.0]), 1).unwrap();
        let bad = DMatrix::zeros(4, 2);
        assert!(matches!(impute_batch(&law, &bad), Err(Error::DimensionMismatch { .. })));
    }
}
