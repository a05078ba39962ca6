//! Linear-Gaussian SEM parameters and the joint Gaussian they imply.
//!
//! Each node follows `X_k = c_k + sum_{j in pa(k)} B[k, j] X_j + eps_k` with
//! `eps_k ~ N(0, Delta_k)`. With `S = I - B` the implied precision is
//! `K = S^T diag(Delta)^{-1} S` and the covariance is its inverse.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dag::DagSpec;
use crate::error::{Error, Result};
use crate::linalg;

/// Noise variances below this value are rejected when forming moments.
pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-30;

/// Coefficients, intercepts and noise variances of a SEM over a fixed DAG.
///
/// Storage keeps the original node indexing; `B[(k, j)]` is the coefficient
/// of parent `j` in the equation of node `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SemParams {
    dag: Arc<DagSpec>,
    coefficients: DMatrix<f64>,
    intercepts: DVector<f64>,
    variances: DVector<f64>,
}

impl SemParams {
    /// Validates the sparsity pattern against the DAG and positivity of the
    /// variances.
    pub fn new(
        dag: Arc<DagSpec>,
        coefficients: DMatrix<f64>,
        intercepts: DVector<f64>,
        variances: DVector<f64>,
    ) -> Result<Self> {
        let p = dag.node_count();
        if coefficients.shape() != (p, p) {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: coefficients.nrows(),
            });
        }
        if intercepts.len() != p || variances.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: intercepts.len().min(variances.len()),
            });
        }
        for k in 0..p {
            for j in 0..p {
                let v = coefficients[(k, j)];
                if !v.is_finite() {
                    return Err(Error::InvalidParams(format!("B[{k},{j}] is not finite")));
                }
                if v != 0.0 && !dag.has_edge(j, k) {
                    return Err(Error::Structure(format!(
                        "coefficient {} -> {} is not an edge of the DAG",
                        dag.name(j),
                        dag.name(k)
                    )));
                }
            }
            if !(variances[k] > 0.0) || !variances[k].is_finite() {
                return Err(Error::InvalidParams(format!(
                    "variance of `{}` must be positive, got {}",
                    dag.name(k),
                    variances[k]
                )));
            }
            if !intercepts[k].is_finite() {
                return Err(Error::InvalidParams(format!(
                    "intercept of `{}` is not finite",
                    dag.name(k)
                )));
            }
        }
        Ok(Self {
            dag,
            coefficients,
            intercepts,
            variances,
        })
    }

    /// Independent standard normals over `dag` (B = 0, c = 0, Delta = 1).
    pub fn standard(dag: Arc<DagSpec>) -> Self {
        let p = dag.node_count();
        Self {
            dag,
            coefficients: DMatrix::zeros(p, p),
            intercepts: DVector::zeros(p),
            variances: DVector::from_element(p, 1.0),
        }
    }

    pub fn dag(&self) -> &DagSpec {
        &self.dag
    }

    pub fn dag_arc(&self) -> &Arc<DagSpec> {
        &self.dag
    }

    pub fn node_count(&self) -> usize {
        self.dag.node_count()
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coefficients
    }

    pub fn intercepts(&self) -> &DVector<f64> {
        &self.intercepts
    }

    pub fn variances(&self) -> &DVector<f64> {
        &self.variances
    }

    pub fn coefficient(&self, parent: usize, child: usize) -> f64 {
        self.coefficients[(child, parent)]
    }

    pub fn intercept(&self, node: usize) -> f64 {
        self.intercepts[node]
    }

    pub fn variance(&self, node: usize) -> f64 {
        self.variances[node]
    }

    /// Coefficients of `node` on its parents, in parent-list order.
    pub fn parent_coefficients(&self, node: usize) -> DVector<f64> {
        let ps = self.dag.parents(node);
        DVector::from_iterator(ps.len(), ps.iter().map(|&j| self.coefficients[(node, j)]))
    }

    /// Replaces the mechanism of `node`: parent coefficients (in parent-list
    /// order), intercept and noise variance. No other entry is touched.
    pub fn set_mechanism(
        &mut self,
        node: usize,
        parent_coefs: &[f64],
        intercept: f64,
        variance: f64,
    ) -> Result<()> {
        let ps = self.dag.parents(node);
        if parent_coefs.len() != ps.len() {
            return Err(Error::DimensionMismatch {
                expected: ps.len(),
                got: parent_coefs.len(),
            });
        }
        if !(variance > 0.0) || !variance.is_finite() {
            return Err(Error::InvalidParams(format!(
                "variance of `{}` must be positive, got {variance}",
                self.dag.name(node)
            )));
        }
        for (&j, &v) in ps.iter().zip(parent_coefs) {
            self.coefficients[(node, j)] = v;
        }
        self.intercepts[node] = intercept;
        self.variances[node] = variance;
        Ok(())
    }

    pub fn set_intercept(&mut self, node: usize, value: f64) {
        self.intercepts[node] = value;
    }

    pub fn set_variance(&mut self, node: usize, value: f64) -> Result<()> {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::InvalidParams(format!(
                "variance of `{}` must be positive, got {value}",
                self.dag.name(node)
            )));
        }
        self.variances[node] = value;
        Ok(())
    }

    /// Implied mean, solved from `m = B m + c` in topological order.
    pub fn implied_mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.node_count());
        for &k in self.dag.topo_order() {
            let mut v = self.intercepts[k];
            for &j in self.dag.parents(k) {
                v += self.coefficients[(k, j)] * m[j];
            }
            m[k] = v;
        }
        m
    }

    /// Row `node` of the implied precision, computed without forming K.
    ///
    /// Only the equation of `node` itself and those of its children involve
    /// `X_node`, so the row is a sum over `{node} ∪ children(node)`.
    pub fn precision_row(&self, node: usize) -> DVector<f64> {
        let mut row = DVector::zeros(self.node_count());
        let mut add_equation = |k: usize, weight: f64| {
            // s_k = e_k - B[k, .]; contributes weight * s_k[node] * s_k
            row[k] += weight;
            for &j in self.dag.parents(k) {
                row[j] -= weight * self.coefficients[(k, j)];
            }
        };
        add_equation(node, 1.0 / self.variances[node]);
        for &k in self.dag.children(node) {
            let s_kt = -self.coefficients[(k, node)];
            add_equation(k, s_kt / self.variances[k]);
        }
        row
    }

    pub fn to_file(&self) -> ParamsFile {
        let dag = &self.dag;
        let mut coefficients = BTreeMap::new();
        for (parent, child) in dag.edges() {
            coefficients.insert(
                format!("{}->{}", dag.name(parent), dag.name(child)),
                self.coefficients[(child, parent)],
            );
        }
        let by_name = |v: &DVector<f64>| -> BTreeMap<String, f64> {
            dag.names().iter().cloned().zip(v.iter().copied()).collect()
        };
        ParamsFile {
            coefficients,
            intercepts: by_name(&self.intercepts),
            variances: by_name(&self.variances),
        }
    }

    /// Reads a parameter file against a known DAG. Missing intercepts default
    /// to zero; every edge coefficient and every variance must be present.
    pub fn from_file(dag: Arc<DagSpec>, file: &ParamsFile) -> Result<Self> {
        let p = dag.node_count();
        let mut coefficients = DMatrix::zeros(p, p);
        for (key, &value) in &file.coefficients {
            let (from, to) = key.split_once("->").ok_or_else(|| {
                Error::config(format!("coefficients.{key}"), "expected `parent->child`")
            })?;
            let f = dag.index_of(from.trim())?;
            let t = dag.index_of(to.trim())?;
            if !dag.has_edge(f, t) {
                return Err(Error::Structure(format!("{key} is not an edge of the DAG")));
            }
            coefficients[(t, f)] = value;
        }
        for (parent, child) in dag.edges() {
            let key = format!("{}->{}", dag.name(parent), dag.name(child));
            if !file.coefficients.contains_key(&key) {
                return Err(Error::config(format!("coefficients.{key}"), "missing coefficient"));
            }
        }
        let mut intercepts = DVector::zeros(p);
        for (name, &v) in &file.intercepts {
            intercepts[dag.index_of(name)?] = v;
        }
        let mut variances = DVector::from_element(p, f64::NAN);
        for (name, &v) in &file.variances {
            variances[dag.index_of(name)?] = v;
        }
        if let Some(k) = (0..p).find(|&k| variances[k].is_nan()) {
            return Err(Error::config(
                format!("variances.{}", dag.name(k)),
                "missing variance",
            ));
        }
        Self::new(dag, coefficients, intercepts, variances)
    }

    pub fn load_json(dag: Arc<DagSpec>, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: ParamsFile = serde_json::from_str(&text)?;
        Self::from_file(dag, &file)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.to_file())?)?;
        Ok(())
    }
}

/// On-disk parameter form. Coefficient keys are `"parent->child"`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ParamsFile {
    pub coefficients: BTreeMap<String, f64>,
    #[serde(default)]
    pub intercepts: BTreeMap<String, f64>,
    pub variances: BTreeMap<String, f64>,
}

/// Mean, covariance and precision of the joint Gaussian implied by a SEM.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMoments {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub precision: DMatrix<f64>,
}

fn check_variances(params: &SemParams, floor: f64) -> Result<()> {
    for k in 0..params.node_count() {
        let v = params.variances[k];
        if v < floor {
            return Err(Error::DegenerateVariance {
                node: params.dag.name(k).to_string(),
                value: v,
                floor,
            });
        }
    }
    Ok(())
}

/// `K = S^T diag(Delta)^{-1} S`, accumulated equation by equation so the
/// structural zeros of the moral graph stay exactly zero.
pub fn implied_precision(params: &SemParams) -> Result<DMatrix<f64>> {
    implied_precision_with_floor(params, DEFAULT_VARIANCE_FLOOR)
}

pub fn implied_precision_with_floor(params: &SemParams, floor: f64) -> Result<DMatrix<f64>> {
    check_variances(params, floor)?;
    let p = params.node_count();
    let mut k_mat = DMatrix::zeros(p, p);
    let mut support: Vec<(usize, f64)> = Vec::new();
    for k in 0..p {
        support.clear();
        support.push((k, 1.0));
        for &j in params.dag.parents(k) {
            support.push((j, -params.coefficients[(k, j)]));
        }
        let w = 1.0 / params.variances[k];
        for &(a, sa) in &support {
            for &(b, sb) in &support {
                k_mat[(a, b)] += w * sa * sb;
            }
        }
    }
    Ok(k_mat)
}

/// Implied mean, covariance and precision.
///
/// The covariance is `W diag(Delta) W^T` with `W = S^{-1}` obtained by forward
/// substitution in topological order (row `k` of `W` is `e_k` plus the
/// parent-weighted rows of `W`), so no general inverse is taken.
pub fn implied_covariance(params: &SemParams) -> Result<GaussianMoments> {
    let precision = implied_precision(params)?;
    let p = params.node_count();
    let mut w = DMatrix::<f64>::zeros(p, p);
    for &k in params.dag.topo_order() {
        w[(k, k)] = 1.0;
        for &j in params.dag.parents(k) {
            let coef = params.coefficients[(k, j)];
            if coef != 0.0 {
                for col in 0..p {
                    w[(k, col)] += coef * w[(j, col)];
                }
            }
        }
    }
    let mut wd = w.clone();
    for (col, &v) in params.variances.iter().enumerate() {
        wd.column_mut(col).scale_mut(v);
    }
    let covariance = linalg::symmetrize(&(&wd * w.transpose()));
    Ok(GaussianMoments {
        mean: params.implied_mean(),
        covariance,
        precision,
    })
}

impl GaussianMoments {
    /// True when `K Σ` is within `tol` of the identity (max abs entry) and Σ
    /// passes the Cholesky positivity test.
    pub fn is_consistent(&self, tol: f64) -> bool {
        let p = self.mean.len();
        let prod = &self.precision * &self.covariance;
        let dev = (prod - DMatrix::<f64>::identity(p, p)).abs().max();
        dev <= tol && linalg::is_spd(&self.covariance)
    }
}
