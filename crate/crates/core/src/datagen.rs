//! Synthetic SEMs, domain shifts and seeded ancestral sampling.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dag::DagSpec;
use crate::error::{Error, Result};
use crate::sem::SemParams;

/// Node order of the seven-node example.
pub const SEVEN_NODE_NAMES: [&str; 7] = ["C1", "C2", "X", "Z", "T", "P", "Y"];
/// Index of `T` in the seven-node example.
pub const SEVEN_NODE_TARGET: usize = 4;

/// Free parameters of the seven-node example: the source mechanism of `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SevenNodeConfig {
    /// Coefficients of `T` on `(C1, X, Z)`.
    pub t_coefficients: [f64; 3],
    pub t_intercept: f64,
}

impl Default for SevenNodeConfig {
    fn default() -> Self {
        Self {
            t_coefficients: [1.0, 1.0, 1.0],
            t_intercept: 0.0,
        }
    }
}

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

/// `C1, C2` roots; `X = 3 C1`, `Z = 2 C1 + 3 C2`,
/// `T = b1 C1 + b2 X + b3 Z + c`, `P = T`, `Y = 2 T`; unit noise everywhere.
pub fn seven_node_example(config: &SevenNodeConfig) -> (Arc<DagSpec>, SemParams) {
    let [c1, c2, x, z, t, p, y] = [0, 1, 2, 3, 4, 5, 6];
    let edges = [(c1, x), (c1, z), (c2, z), (c1, t), (x, t), (z, t), (t, p), (t, y)];
    let dag = Arc::new(DagSpec::new(names(&SEVEN_NODE_NAMES), &edges).expect("static DAG"));
    let mut b = DMatrix::zeros(7, 7);
    b[(x, c1)] = 3.0;
    b[(z, c1)] = 2.0;
    b[(z, c2)] = 3.0;
    b[(t, c1)] = config.t_coefficients[0];
    b[(t, x)] = config.t_coefficients[1];
    b[(t, z)] = config.t_coefficients[2];
    b[(p, t)] = 1.0;
    b[(y, t)] = 2.0;
    let mut c = DVector::zeros(7);
    c[t] = config.t_intercept;
    let params = SemParams::new(dag.clone(), b, c, DVector::from_element(7, 1.0)).expect("static params");
    (dag, params)
}

/// Index of `T` in [`well_conditioned_example`].
pub const WELL_CONDITIONED_TARGET: usize = 3;

/// Three independent standard-normal roots driving `T = A1 + A2 + A3 + e`,
/// observed through `P = T + e` and `Y = 2 T + e`.
///
/// The parent design is close to the identity, so gradient EM with the
/// default step behaves like exact EM and its error decays at a clean
/// geometric rate; used for convergence-rate studies.
pub fn well_conditioned_example() -> (Arc<DagSpec>, SemParams) {
    let edges = [(0, 3), (1, 3), (2, 3), (3, 4), (3, 5)];
    let dag = Arc::new(
        DagSpec::new(names(&["A1", "A2", "A3", "T", "P", "Y"]), &edges).expect("static DAG"),
    );
    let mut b = DMatrix::zeros(6, 6);
    for j in 0..3 {
        b[(3, j)] = 1.0;
    }
    b[(4, 3)] = 1.0;
    b[(5, 3)] = 2.0;
    let params = SemParams::new(dag.clone(), b, DVector::zeros(6), DVector::from_element(6, 1.0))
        .expect("static params");
    (dag, params)
}

/// A change of one mechanism between source and target domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShiftScenario {
    /// Replace the marginal of a root by `N(mean, variance)`.
    CovariateShift { node: String, mean: f64, variance: f64 },
    /// Replace the mechanism of `node`. Parents absent from `coefficients`
    /// keep their coefficient.
    MechanismShift {
        node: String,
        #[serde(default)]
        coefficients: BTreeMap<String, f64>,
        intercept: f64,
        variance: f64,
    },
}

/// Applies a shift, touching only the entries the scenario declares.
pub fn apply_shift(params: &SemParams, scenario: &ShiftScenario) -> Result<SemParams> {
    let dag = params.dag();
    let mut out = params.clone();
    match scenario {
        ShiftScenario::CovariateShift {
            node,
            mean,
            variance,
        } => {
            let k = dag.index_of(node)?;
            if !dag.is_root(k) {
                return Err(Error::NotARoot(node.clone()));
            }
            out.set_intercept(k, *mean);
            out.set_variance(k, *variance)?;
        }
        ShiftScenario::MechanismShift {
            node,
            coefficients,
            intercept,
            variance,
        } => {
            let k = dag.index_of(node)?;
            let mut coefs: Vec<f64> = params.parent_coefficients(k).iter().copied().collect();
            for (parent, &value) in coefficients {
                let j = dag.index_of(parent)?;
                let pos = dag.parents(k).iter().position(|&q| q == j).ok_or_else(|| {
                    Error::Structure(format!("{parent} -> {node} is not an edge of the DAG"))
                })?;
                coefs[pos] = value;
            }
            out.set_mechanism(k, &coefs, *intercept, *variance)?;
        }
    }
    Ok(out)
}

/// Applies shifts in order.
pub fn apply_shifts(params: &SemParams, scenarios: &[ShiftScenario]) -> Result<SemParams> {
    scenarios
        .iter()
        .try_fold(params.clone(), |acc, s| apply_shift(&acc, s))
}

/// Relative mechanism shift: parent coefficients scaled, intercept offset,
/// noise variance scaled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MechanismShiftSpec {
    pub coefficient_scale: f64,
    pub intercept_shift: f64,
    pub variance_scale: f64,
}

impl Default for MechanismShiftSpec {
    fn default() -> Self {
        Self {
            coefficient_scale: 1.5,
            intercept_shift: 12.0,
            variance_scale: 2.0,
        }
    }
}

impl MechanismShiftSpec {
    /// Concrete scenario for `node` relative to `params`.
    pub fn scenario(&self, params: &SemParams, node: usize) -> ShiftScenario {
        let dag = params.dag();
        let coefficients = dag
            .parents(node)
            .iter()
            .map(|&j| {
                (
                    dag.name(j).to_string(),
                    params.coefficient(j, node) * self.coefficient_scale,
                )
            })
            .collect();
        ShiftScenario::MechanismShift {
            node: dag.name(node).to_string(),
            coefficients,
            intercept: params.intercept(node) + self.intercept_shift,
            variance: params.variance(node) * self.variance_scale,
        }
    }
}

/// Default covariate shift of the seven-node example: `C2 ~ N(5, 4)`.
pub fn default_covariate_shift() -> ShiftScenario {
    ShiftScenario::CovariateShift {
        node: "C2".into(),
        mean: 5.0,
        variance: 4.0,
    }
}

/// `n` i.i.d. rows by ancestral sampling; columns in node-index order.
pub fn sample(params: &SemParams, n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let dag = params.dag();
    let p = dag.node_count();
    let mut data = DMatrix::zeros(n, p);
    for &k in dag.topo_order() {
        let sd = params.variance(k).sqrt();
        let c = params.intercept(k);
        let parents: Vec<(usize, f64)> = dag
            .parents(k)
            .iter()
            .map(|&j| (j, params.coefficient(j, k)))
            .collect();
        for i in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            let mut v = c + sd * z;
            for &(j, coef) in &parents {
                v += coef * data[(i, j)];
            }
            data[(i, k)] = v;
        }
    }
    data
}

/// Settings for [`random_sparse_dag`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomDagSpec {
    pub p: usize,
    pub expected_parents: f64,
    pub coef_range: (f64, f64),
    pub var_range: (f64, f64),
}

impl Default for RandomDagSpec {
    fn default() -> Self {
        Self {
            p: 64,
            expected_parents: 1.5,
            coef_range: (0.5, 1.5),
            var_range: (0.5, 1.5),
        }
    }
}

/// Random DAG over nodes `V0..V{p-1}`: a random permutation fixes the
/// causal order, and the node at position `i` takes each predecessor as a
/// parent with probability `min(1, expected_parents / i)`. Coefficients and
/// variances are uniform in their ranges; intercepts are zero.
pub fn random_sparse_dag(spec: &RandomDagSpec, seed: u64) -> Result<(Arc<DagSpec>, SemParams)> {
    let RandomDagSpec {
        p,
        expected_parents,
        coef_range,
        var_range,
    } = *spec;
    if p < 2 {
        return Err(Error::InvalidDag(format!("need p >= 2, got {p}")));
    }
    if !(var_range.0 > 0.0 && var_range.0 <= var_range.1) {
        return Err(Error::InvalidParams(format!("bad variance range {var_range:?}")));
    }
    if coef_range.0 > coef_range.1 || expected_parents < 0.0 {
        return Err(Error::InvalidParams(format!("bad coefficient range {coef_range:?}")));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..p).collect();
    order.shuffle(&mut rng);
    let mut edges = Vec::new();
    for pos in 1..p {
        let prob = (expected_parents / pos as f64).min(1.0);
        for &pred in &order[..pos] {
            if rng.random::<f64>() < prob {
                edges.push((pred, order[pos]));
            }
        }
    }
    let dag = Arc::new(DagSpec::new((0..p).map(|i| format!("V{i}")).collect(), &edges)?);
    let mut b = DMatrix::zeros(p, p);
    for &(from, to) in &edges {
        b[(to, from)] = uniform(&mut rng, coef_range);
    }
    let variances = DVector::from_fn(p, |_, _| uniform(&mut rng, var_range));
    let params = SemParams::new(dag.clone(), b, DVector::zeros(p), variances)?;
    Ok((dag, params))
}

fn uniform(rng: &mut ChaCha20Rng, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}
