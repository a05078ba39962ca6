#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use shiftem::datagen::{self, random_sparse_dag, RandomDagSpec};
use shiftem::{split_target, ObservedData, SemParams};

/// Random SEM with signed coefficients and nonzero intercepts.
pub fn random_sem(p: usize, seed: u64) -> SemParams {
    let spec = RandomDagSpec {
        p,
        expected_parents: 2.0,
        coef_range: (0.3, 1.5),
        var_range: (0.3, 2.0),
    };
    let (dag, base) = random_sparse_dag(&spec, seed).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0xABCD);
    let mut b = base.coefficients().clone();
    for v in b.iter_mut() {
        if *v != 0.0 && rng.random::<bool>() {
            *v = -*v;
        }
    }
    let c = DVector::from_fn(p, |_, _| rng.random_range(-3.0..3.0));
    SemParams::new(dag, b, c, base.variances().clone()).unwrap()
}

/// A node with at least one parent and one child, if any.
pub fn interior_node(params: &SemParams) -> Option<usize> {
    let dag = params.dag();
    (0..dag.node_count()).find(|&k| !dag.parents(k).is_empty() && !dag.children(k).is_empty())
}

pub fn observed_sample(params: &SemParams, t: usize, n: usize, seed: u64) -> (ObservedData, DVector<f64>) {
    let full = datagen::sample(params, n, seed);
    split_target(&full, t).unwrap()
}

pub fn sample_covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    let mean = x.row_mean();
    let mut c = x.clone();
    for mut row in c.row_iter_mut() {
        row -= &mean;
    }
    c.tr_mul(&c) / (n - 1.0)
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

pub fn arc_of(params: &SemParams) -> Arc<shiftem::DagSpec> {
    params.dag_arc().clone()
}
