//! Full EM baseline: the target is latent and *every* mechanism is
//! re-estimated from target data.
//!
//! Because the conditional mean of the target is affine in the observed
//! vector, the averaged completed moments depend on the data only through
//! the observed mean and second moment, so each E-step is `O(p^2)`
//! regardless of `n`.

use nalgebra::{DMatrix, DVector};

use crate::conditioning::{conditional_law_from_params, ConditionalLaw};
use crate::data::ObservedData;
use crate::em::{active_block, active_labels, EmConfig, EmTrace, IterationRecord, Termination};
use crate::error::{Error, Result};
use crate::linalg;
use crate::sem::{implied_covariance, SemParams};

/// `E[X | X_{-t} = x]` and `E[X X^T | X_{-t} = x]` under `params`.
pub fn expected_complete_moments(
    params: &SemParams,
    target: usize,
    x_minus_t: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let p = params.node_count();
    if x_minus_t.len() + 1 != p {
        return Err(Error::DimensionMismatch {
            expected: p - 1,
            got: x_minus_t.len(),
        });
    }
    let law = conditional_law_from_params(params, target)?;
    let mut mean = x_minus_t.clone().insert_row(target, 0.0);
    mean[target] = law.mean_at(x_minus_t);
    let mut second = &mean * mean.transpose();
    second[(target, target)] += law.variance;
    Ok((mean, second))
}

/// Observed-data sufficient statistics: mean and raw second moment.
#[derive(Debug, Clone)]
pub struct ObservedMoments {
    pub target: usize,
    pub n: usize,
    pub mean: DVector<f64>,
    /// `(1/n) sum_i x_i x_i^T`.
    pub second: DMatrix<f64>,
}

impl ObservedMoments {
    pub fn new(data: &ObservedData) -> Self {
        let n = data.n();
        let x = data.matrix();
        Self {
            target: data.target(),
            n,
            mean: data.column_means(),
            second: linalg::symmetrize(&(x.tr_mul(x) / n as f64)),
        }
    }
}

/// Averaged completed moments over a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletedMoments {
    pub mean: DVector<f64>,
    pub second: DMatrix<f64>,
}

impl CompletedMoments {
    /// Moments of a fully observed `n x p` matrix.
    pub fn from_full_data(data: &DMatrix<f64>) -> Self {
        let n = data.nrows() as f64;
        Self {
            mean: data.row_mean().transpose(),
            second: linalg::symmetrize(&(data.tr_mul(data) / n)),
        }
    }

    /// `(1/n) sum_i E[.| x_i]` computed from the observed moments, with
    /// `mu(x) = a + w^T x`.
    pub fn from_observed(obs: &ObservedMoments, law: &ConditionalLaw) -> Self {
        let t = obs.target;
        let a = law.affine_intercept();
        let w = &law.weights;
        let s_w = &obs.second * w;
        let mu_bar = a + w.dot(&obs.mean);
        let cross = &s_w + &obs.mean * a;
        let tt = law.variance + a * a + 2.0 * a * w.dot(&obs.mean) + w.dot(&s_w);

        let mean = obs.mean.clone().insert_row(t, mu_bar);
        let p = mean.len();
        let mut second = DMatrix::zeros(p, p);
        for i in 0..p {
            for j in 0..p {
                second[(i, j)] = match (i == t, j == t) {
                    (true, true) => tt,
                    (true, false) => cross[j - usize::from(j > t)],
                    (false, true) => cross[i - usize::from(i > t)],
                    (false, false) => {
                        obs.second[(i - usize::from(i > t), j - usize::from(j > t))]
                    }
                };
            }
        }
        Self { mean, second }
    }
}

/// Refits every node by least squares on completed moments: for node `k`
/// with design `(1, x_pa)`, solve `G beta = h` with
/// `G = [[1, m_pa^T], [m_pa, S_pa,pa]]`, `h = [m_k; S_pa,k]`, and set
/// `sigma^2 = S_kk - beta^T h`, clamped to `bounds`.
pub fn m_step_from_moments(
    template: &SemParams,
    moments: &CompletedMoments,
    bounds: (f64, f64),
    condition_cap: f64,
) -> Result<SemParams> {
    let dag = template.dag();
    let mut out = template.clone();
    for k in 0..dag.node_count() {
        let pa = dag.parents(k);
        let d = pa.len() + 1;
        let mut g = DMatrix::zeros(d, d);
        let mut h = DVector::zeros(d);
        g[(0, 0)] = 1.0;
        h[0] = moments.mean[k];
        for (a, &ja) in pa.iter().enumerate() {
            g[(0, a + 1)] = moments.mean[ja];
            g[(a + 1, 0)] = moments.mean[ja];
            h[a + 1] = moments.second[(ja, k)];
            for (b, &jb) in pa.iter().enumerate() {
                g[(a + 1, b + 1)] = moments.second[(ja, jb)];
            }
        }
        let (lmin, lmax) = linalg::eigen_extremes(&g);
        let cond = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
        if cond > condition_cap {
            return Err(Error::IllConditioned {
                cond,
                cap: condition_cap,
            });
        }
        let beta = linalg::cholesky_spd(&g, 0.0)?.solve(&h);
        let var = (moments.second[(k, k)] - beta.dot(&h)).clamp(bounds.0, bounds.1);
        out.set_mechanism(k, &beta.as_slice()[1..], beta[0], var)?;
    }
    Ok(out)
}

/// Mean observed-data log-likelihood per sample,
/// `-1/2 [ (p-1) log 2 pi + log det S_oo + tr(S_oo^{-1} C) ]` with `C` the
/// observed second moment centered at the model mean.
pub fn observed_loglik(params: &SemParams, obs: &ObservedMoments) -> Result<f64> {
    let t = obs.target;
    let mom = implied_covariance(params)?;
    let p = params.node_count();
    let rest: Vec<usize> = (0..p).filter(|&k| k != t).collect();
    let sigma_oo = linalg::submatrix(&mom.covariance, &rest, &rest);
    let m_o = linalg::drop_index(&mom.mean, t);
    let c = &obs.second - &obs.mean * m_o.transpose() - &m_o * obs.mean.transpose()
        + &m_o * m_o.transpose();
    let chol = linalg::cholesky_spd(&sigma_oo, linalg::SPD_PIVOT_TOL)?;
    let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let trace = (chol.solve(&c)).trace();
    let q = rest.len() as f64;
    Ok(-0.5 * (q * (2.0 * std::f64::consts::PI).ln() + logdet + trace))
}

/// Starting point that uses target data only, as a latent-variable EM would:
/// mechanisms not involving the target are OLS fits on the target data; the
/// target gets a standard-normal marginal (zero coefficients, unit
/// variance), and each child of the target regresses on its observed
/// parents with a unit loading on the target.
pub fn target_only_init(template: &SemParams, data: &ObservedData) -> Result<SemParams> {
    let dag = template.dag();
    let t = data.target();
    let obs = ObservedMoments::new(data);
    let mut completed = CompletedMoments::from_observed(
        &obs,
        &ConditionalLaw {
            target: t,
            weights: DVector::zeros(dag.node_count() - 1),
            offset: 0.0,
            observed_mean: obs.mean.clone(),
            variance: 1.0,
        },
    );
    // T ~ N(0, 1), uncorrelated with everything observed
    completed.mean[t] = 0.0;
    for k in 0..dag.node_count() {
        let v = if k == t { 1.0 } else { 0.0 };
        completed.second[(t, k)] = v;
        completed.second[(k, t)] = v;
    }
    let mut out = m_step_from_moments(template, &completed, (1e-6, 1e6), f64::INFINITY)?;
    for &c in dag.children(t) {
        let pos = dag.parents(c).iter().position(|&j| j == t).expect("child of t");
        let mut coefs: Vec<f64> = out.parent_coefficients(c).iter().copied().collect();
        coefs[pos] = 1.0;
        let (ic, var) = (out.intercept(c), out.variance(c));
        out.set_mechanism(c, &coefs, ic, var)?;
    }
    Ok(out)
}

/// Full EM from `init`. The trace tracks the target's mechanism and the
/// observed-data log-likelihood after every iteration.
///
/// Convergence uses the largest change over all coefficients and intercepts
/// (`tol_b`) and over all variances (`tol_sigma`).
pub fn kiiveri_adapt(init: &SemParams, data: &ObservedData, config: &EmConfig) -> Result<(SemParams, EmTrace)> {
    config.validate()?;
    let t = data.target();
    if data.node_count() != init.node_count() {
        return Err(Error::DimensionMismatch {
            expected: init.node_count(),
            got: data.node_count(),
        });
    }
    let obs = ObservedMoments::new(data);
    let mut params = init.clone();
    let mut trace = EmTrace {
        labels: active_labels(init, t, true),
        initial_b: active_block(init, t, true).iter().copied().collect(),
        initial_sigma2: init.variance(t),
        initial_observed_loglik: Some(observed_loglik(init, &obs)?),
        records: Vec::new(),
        termination: Termination::MaxIterations,
    };
    for r in 0..config.max_iterations {
        let law = conditional_law_from_params(&params, t)?;
        let completed = CompletedMoments::from_observed(&obs, &law);
        let next = m_step_from_moments(&params, &completed, config.bounds(), config.condition_cap)?;
        let ll = observed_loglik(&next, &obs)?;
        trace.records.push(IterationRecord {
            iteration: r + 1,
            b: active_block(&next, t, true).iter().copied().collect(),
            sigma2: next.variance(t),
            surrogate: f64::NAN,
            surrogate_before: f64::NAN,
            grad_norm: f64::NAN,
            step_size: f64::NAN,
            observed_loglik: Some(ll),
        });
        let dcoef = (next.coefficients() - params.coefficients())
            .abs()
            .max()
            .max((next.intercepts() - params.intercepts()).abs().max());
        let dvar = (next.variances() - params.variances()).abs().max();
        params = next;
        if dcoef <= config.tol_b && dvar <= config.tol_sigma {
            trace.termination = Termination::Converged;
            break;
        }
    }
    Ok((params, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::DagSpec;
    use std::sync::Arc;

    fn chain() -> SemParams {
        let dag = Arc::new(DagSpec::new(vec!["X1".into(), "X2".into()], &[(0, 1)]).unwrap());
        let mut b = DMatrix::zeros(2, 2);
        b[(1, 0)] = 2.0;
        SemParams::new(dag, b, DVector::from_row_slice(&[0.5, 1.0]), DVector::from_element(2, 1.0))
            .unwrap()
    }

    #[test]
    fn isolated_target_moments() {
        let dag = Arc::new(DagSpec::new(vec!["a".into(), "t".into()], &[]).unwrap());
        let mut params = SemParams::standard(dag);
        params.set_intercept(1, 2.0);
        params.set_variance(1, 3.0).unwrap();
        let (m, s) = expected_complete_moments(&params, 1, &DVector::from_row_slice(&[7.0])).unwrap();
        assert_eq!(m.as_slice(), &[7.0, 2.0]);
        assert_eq!(s[(1, 1)] - 4.0, 3.0);
        assert_eq!(s[(0, 1)], 14.0);
    }

    #[test]
    fn second_moment_diagonal_is_mean_sq_plus_v() {
        let params = chain();
        let x = DVector::from_row_slice(&[4.0]);
        let (m, s) = expected_complete_moments(&params, 0, &x).unwrap();
        let law = conditional_law_from_params(&params, 0).unwrap();
        assert!((s[(0, 0)] - m[0] * m[0] - law.variance).abs() < 1e-12);
        assert_eq!(m[1], 4.0);
    }

    #[test]
    fn observed_moments_match_per_sample_sum() {
        let params = chain();
        let data = DMatrix::from_column_slice(4, 1, &[1.0, -2.0, 0.5, 3.0]);
        let obs_data = ObservedData::new(0, 2, data.clone()).unwrap();
        let law = conditional_law_from_params(&params, 0).unwrap();
        let fast = CompletedMoments::from_observed(&ObservedMoments::new(&obs_data), &law);
        let mut mean = DVector::zeros(2);
        let mut second = DMatrix::zeros(2, 2);
        for i in 0..4 {
            let (m, s) = expected_complete_moments(&params, 0, &data.row(i).transpose()).unwrap();
            mean += m / 4.0;
            second += s / 4.0;
        }
        assert!((fast.mean - mean).abs().max() < 1e-12);
        assert!((fast.second - second).abs().max() < 1e-12);
    }

    #[test]
    fn zero_iterations_returns_init() {
        let params = chain();
        let obs = ObservedData::new(1, 2, DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 2.5])).unwrap();
        let cfg = EmConfig {
            max_iterations: 0,
            ..Default::default()
        };
        let (out, trace) = kiiveri_adapt(&params, &obs, &cfg).unwrap();
        assert_eq!(out, params);
        assert!(trace.records.is_empty());
    }
}
