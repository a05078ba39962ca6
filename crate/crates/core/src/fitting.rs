//! Node-wise least-squares fit of every mechanism from fully observed data.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dag::DagSpec;
use crate::data::ObservedData;
use crate::error::{Error, Result};
use crate::sem::SemParams;

/// Relative threshold on the diagonal of R below which a design is treated
/// as rank deficient.
const RANK_TOL: f64 = 1e-10;

struct NodeFit {
    coefs: Vec<f64>,
    intercept: f64,
    variance: f64,
}

/// Fits `(b_k, c_k, sigma_k^2)` for every node by OLS of column `k` on its
/// parent columns plus an intercept. Variances use the 1/n divisor.
pub fn fit_dag_source(dag: Arc<DagSpec>, data: &DMatrix<f64>) -> Result<SemParams> {
    let p = dag.node_count();
    if data.ncols() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: data.ncols(),
        });
    }
    let n = data.nrows();
    let max_pa = (0..p).map(|k| dag.parents(k).len()).max().unwrap_or(0);
    if n <= max_pa + 1 {
        return Err(Error::InsufficientSamples {
            needed: max_pa + 1,
            got: n,
        });
    }
    for k in 0..p {
        let col = data.column(k);
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::DataFile(format!("column `{}` has non-finite values", dag.name(k))));
        }
        if col.max() == col.min() {
            return Err(Error::ZeroVarianceColumn {
                node: dag.name(k).to_string(),
            });
        }
    }

    let fits: Vec<NodeFit> = (0..p)
        .into_par_iter()
        .map(|k| fit_node(&dag, data, k))
        .collect::<Result<_>>()?;

    let mut b = DMatrix::zeros(p, p);
    let mut c = DVector::zeros(p);
    let mut v = DVector::zeros(p);
    for (k, fit) in fits.into_iter().enumerate() {
        for (&j, &coef) in dag.parents(k).iter().zip(&fit.coefs) {
            b[(k, j)] = coef;
        }
        c[k] = fit.intercept;
        v[k] = fit.variance;
    }
    SemParams::new(dag, b, c, v)
}

fn fit_node(dag: &DagSpec, data: &DMatrix<f64>, k: usize) -> Result<NodeFit> {
    let n = data.nrows();
    let parents = dag.parents(k);
    let y = data.column(k).clone_owned();
    let mut design = DMatrix::from_element(n, parents.len() + 1, 1.0);
    for (col, &j) in parents.iter().enumerate() {
        design.set_column(col + 1, &data.column(j));
    }
    let qr = design.clone().qr();
    let r = qr.r();
    let diag_max = r.diagonal().abs().max();
    if r.diagonal().iter().any(|d| d.abs() <= RANK_TOL * diag_max.max(f64::MIN_POSITIVE)) {
        return Err(Error::RankDeficient {
            node: dag.name(k).to_string(),
        });
    }
    // thin QR: beta = R^{-1} Q^T y
    let qty = qr.q().tr_mul(&y);
    let beta = r.solve_upper_triangular(&qty).ok_or_else(|| Error::RankDeficient {
        node: dag.name(k).to_string(),
    })?;
    let resid = &y - &design * &beta;
    let variance = resid.norm_squared() / n as f64;
    if !(variance > 0.0) {
        return Err(Error::DegenerateVariance {
            node: dag.name(k).to_string(),
            value: variance,
            floor: 0.0,
        });
    }
    Ok(NodeFit {
        coefs: beta.iter().skip(1).copied().collect(),
        intercept: beta[0],
        variance,
    })
}

/// Re-estimates the listed root marginals from target-domain data: intercept
/// becomes the sample mean, variance the 1/n sample variance. Nothing else
/// changes.
pub fn refit_root_marginals(
    params: &SemParams,
    target_data: &ObservedData,
    roots: &[usize],
) -> Result<SemParams> {
    let dag = params.dag();
    if target_data.node_count() != dag.node_count() {
        return Err(Error::DimensionMismatch {
            expected: dag.node_count(),
            got: target_data.node_count(),
        });
    }
    let mut out = params.clone();
    let n = target_data.n();
    if n == 0 && !roots.is_empty() {
        return Err(Error::InsufficientSamples { needed: 0, got: 0 });
    }
    for &r in roots {
        if r >= dag.node_count() {
            return Err(Error::UnknownNode(format!("#{r}")));
        }
        if !dag.is_root(r) {
            return Err(Error::NotARoot(dag.name(r).to_string()));
        }
        let col = target_data
            .column_of(r)
            .ok_or_else(|| Error::MissingColumn(dag.name(r).to_string()))?;
        let x = target_data.matrix().column(col);
        let mean = x.mean();
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        if !(var > 0.0) {
            return Err(Error::ZeroVarianceColumn {
                node: dag.name(r).to_string(),
            });
        }
        out.set_intercept(r, mean);
        out.set_variance(r, var)?;
    }
    Ok(out)
}
