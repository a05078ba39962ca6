//! Numerical checks of the local convergence theory for the adapted block
//! `theta = (b, alpha)` with `alpha = log sigma_t^2`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::conditioning::conditional_law_from_params;
use crate::data::ObservedData;
use crate::em::{active_block, EmTrace, ParentDesign};
use crate::error::{Error, Result};
use crate::kiiveri::{observed_loglik, ObservedMoments};
use crate::linalg;
use crate::sem::SemParams;

/// Curvature constants of the active-block surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureReport {
    pub lambda_b: f64,
    pub mu_b: f64,
    pub lambda_alpha: f64,
    pub mu_alpha: f64,
    pub rho: f64,
    /// Combined strong-concavity constant; nonpositive when `rho^2 >=
    /// lambda_b * lambda_alpha`.
    pub lambda: f64,
    pub mu: f64,
    /// `rho^2 < lambda_b * lambda_alpha`.
    pub schur_ok: bool,
    pub gamma: Option<f64>,
    pub margin: Option<f64>,
    /// `gamma / lambda`; infinite when `lambda <= 0`.
    pub kappa: Option<f64>,
}

impl CurvatureReport {
    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = Some(gamma);
        self.margin = Some(self.lambda - gamma);
        self.kappa = Some(if self.lambda > 0.0 {
            gamma / self.lambda
        } else {
            f64::INFINITY
        });
        self
    }
}

/// `lambda_b = l_min(M)/D_max`, `mu_b = l_max(M)/D_min`,
/// `lambda_a = v_min/(2 D_max)`, `mu_a = v_max/(2 D_min)`, combined through
/// the extreme eigenvalues of `[[lambda_b, rho], [rho, lambda_a]]`-type
/// blocks:
/// `lambda = (lb + la - sqrt((lb - la)^2 + 4 rho^2)) / 2`,
/// `mu = (mb + ma + sqrt((mb - ma)^2 + 4 rho^2)) / 2`.
pub fn curvature_constants(
    parent_moment: &DMatrix<f64>,
    bounds: (f64, f64),
    residual_bounds: (f64, f64),
    rho: f64,
) -> Result<CurvatureReport> {
    let (d_min, d_max) = bounds;
    let (v_min, v_max) = residual_bounds;
    if !(d_min > 0.0 && d_min <= d_max) {
        return Err(Error::config("bounds", "need 0 < min <= max"));
    }
    if !(v_min > 0.0 && v_min <= v_max) {
        return Err(Error::config("residual_bounds", "need 0 < min <= max"));
    }
    if !(rho >= 0.0) {
        return Err(Error::config("rho", "must be nonnegative"));
    }
    let (m_min, m_max) = linalg::eigen_extremes(parent_moment);
    if !(m_min > 0.0) || !linalg::is_spd(parent_moment) {
        return Err(Error::NotPositiveDefinite(format!(
            "parent moment has smallest eigenvalue {m_min:e}"
        )));
    }
    let lambda_b = m_min / d_max;
    let mu_b = m_max / d_min;
    let lambda_alpha = v_min / (2.0 * d_max);
    let mu_alpha = v_max / (2.0 * d_min);
    let r2 = 4.0 * rho * rho;
    let lambda = 0.5 * (lambda_b + lambda_alpha - ((lambda_b - lambda_alpha).powi(2) + r2).sqrt());
    let mu = 0.5 * (mu_b + mu_alpha + ((mu_b - mu_alpha).powi(2) + r2).sqrt());
    Ok(CurvatureReport {
        lambda_b,
        mu_b,
        lambda_alpha,
        mu_alpha,
        rho,
        lambda,
        mu,
        schur_ok: rho * rho < lambda_b * lambda_alpha,
        gamma: None,
        margin: None,
        kappa: None,
    })
}

/// Sup-norm estimates over the ball `||theta - theta*|| <= r`.
///
/// Suprema are taken over a finite probe set, so these are lower bounds on
/// the true suprema.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEnvelope {
    /// `sup ||d m / d theta||` (operator norm).
    pub c_m: f64,
    /// `sup ||d A / d theta||` with `A = K_tt^{-1} K_{t,-t}`.
    pub c_k: f64,
    /// `sup ||A||`.
    pub c_a: f64,
    pub radius: f64,
    pub probes: usize,
}

/// Floor on `K_tt` inside the probe ball.
pub const K_TT_FLOOR: f64 = 1e-12;

const JACOBIAN_STEP: f64 = 1e-6;

fn with_theta(base: &SemParams, t: usize, include_intercept: bool, theta: &DVector<f64>) -> Result<SemParams> {
    let mut out = base.clone();
    let d = theta.len() - 1;
    let sigma2 = theta[d].exp();
    let (intercept, coefs) = if include_intercept {
        (theta[0], &theta.as_slice()[1..d])
    } else {
        (base.intercept(t), &theta.as_slice()[..d])
    };
    out.set_mechanism(t, coefs, intercept, sigma2)?;
    Ok(out)
}

/// `(b, log sigma^2)` of node `t`.
pub fn theta_of(params: &SemParams, t: usize, include_intercept: bool) -> DVector<f64> {
    let b = active_block(params, t, include_intercept);
    let d = b.len();
    b.insert_row(d, params.variance(t).ln())
}

/// `A(theta) = K_tt^{-1} K_{t,-t}` (equal to minus the conditioning weights).
fn slope_map(params: &SemParams, t: usize) -> Result<DVector<f64>> {
    let row = params.precision_row(t);
    let k_tt = row[t];
    if !(k_tt >= K_TT_FLOOR) {
        return Err(Error::DegenerateConditioning {
            value: k_tt,
            floor: K_TT_FLOOR,
        });
    }
    Ok(linalg::drop_index(&row, t) / k_tt)
}

fn central_jacobian<F>(theta: &DVector<f64>, f: F) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let f0 = f(theta)?;
    let mut jac = DMatrix::zeros(f0.len(), theta.len());
    for j in 0..theta.len() {
        let h = JACOBIAN_STEP * theta[j].abs().max(1.0);
        let mut plus = theta.clone();
        plus[j] += h;
        let mut minus = theta.clone();
        minus[j] -= h;
        let col = (f(&plus)? - f(&minus)?) / (2.0 * h);
        jac.set_column(j, &col);
    }
    Ok(jac)
}

/// Finite-difference Jacobians `(d m / d theta, d A / d theta)` and `A` at
/// the parameters in `params`.
pub fn local_derivatives(
    params: &SemParams,
    t: usize,
    include_intercept: bool,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DVector<f64>)> {
    let theta = theta_of(params, t, include_intercept);
    let mean_jac = central_jacobian(&theta, |th| {
        Ok(with_theta(params, t, include_intercept, th)?.implied_mean())
    })?;
    let slope_jac = central_jacobian(&theta, |th| slope_map(&with_theta(params, t, include_intercept, th)?, t))?;
    Ok((mean_jac, slope_jac, slope_map(params, t)?))
}

/// Probes the ball of radius `r` around the active block of `params`: the
/// center first, then points drawn uniformly from the ball by a fixed seeded
/// stream (so a larger `probe_count` always probes a superset).
pub fn lipschitz_envelope(
    params: &SemParams,
    t: usize,
    include_intercept: bool,
    radius: f64,
    probe_count: usize,
    seed: u64,
) -> Result<LipschitzEnvelope> {
    if !(radius > 0.0) {
        return Err(Error::config("radius", "must be positive"));
    }
    let center = theta_of(params, t, include_intercept);
    let dim = center.len();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut env = LipschitzEnvelope {
        c_m: 0.0,
        c_k: 0.0,
        c_a: 0.0,
        radius,
        probes: probe_count.max(1),
    };
    for i in 0..env.probes {
        let theta = if i == 0 {
            center.clone()
        } else {
            let dir = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
            let u: f64 = rng.random();
            let scale = radius * u.powf(1.0 / dim as f64) / dir.norm().max(f64::MIN_POSITIVE);
            &center + dir * scale
        };
        let probe = with_theta(params, t, include_intercept, &theta)?;
        let (mj, sj, a) = local_derivatives(&probe, t, include_intercept)?;
        env.c_m = env.c_m.max(linalg::op_norm(&mj));
        env.c_k = env.c_k.max(linalg::op_norm(&sj));
        env.c_a = env.c_a.max(a.norm());
    }
    Ok(env)
}

/// `(1/D_min) * mean_i ||x_pa,i|| (C0 + C_K ||x_{-t,i} - m_{-t}||)` with
/// `C0 = C_m + C_A C_m + C_K C_m r`.
pub fn gamma_bound(
    env: &LipschitzEnvelope,
    delta_min: f64,
    parent_design: &DMatrix<f64>,
    observed: &DMatrix<f64>,
    observed_mean: &DVector<f64>,
) -> Result<f64> {
    let n = parent_design.nrows();
    if observed.nrows() != n || observed.ncols() != observed_mean.len() {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: observed.nrows(),
        });
    }
    if n == 0 {
        return Err(Error::InsufficientSamples { needed: 0, got: 0 });
    }
    let c0 = env.c_m + env.c_a * env.c_m + env.c_k * env.c_m * env.radius;
    let mut acc = 0.0;
    for i in 0..n {
        let xpa = parent_design.row(i).norm();
        let dev = (observed.row(i).transpose() - observed_mean).norm();
        acc += xpa * (c0 + env.c_k * dev);
    }
    Ok(acc / n as f64 / delta_min)
}

/// Louis decomposition of the observed-data curvature of the active block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InformationReport {
    pub labels: Vec<String>,
    pub i_obs: Vec<Vec<f64>>,
    pub i_comp: Vec<Vec<f64>>,
    pub i_miss: Vec<Vec<f64>>,
    /// `||I_obs - (I_comp - I_miss)||_F` with Richardson-refined `I_obs`.
    pub residual: f64,
    /// Same residual from plain central differences at `fd_step`.
    pub residual_plain: f64,
    /// Richardson residual recomputed at `fd_step / 2`.
    pub residual_half_step: f64,
    /// Set when halving the step increases the residual noticeably, the
    /// signature of round-off domination.
    pub roundoff_suspect: bool,
    pub min_eig_i_miss: f64,
    pub min_eig_comp_minus_obs: f64,
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Closed-form `E[H_c | obs]` and `Var(score_c | obs)` averaged over samples,
/// for the negative complete-data log-likelihood of the target mechanism.
pub fn complete_and_missing_information(
    params: &SemParams,
    data: &ObservedData,
    include_intercept: bool,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let t = data.target();
    let design = ParentDesign::new(params, data, include_intercept)?;
    let law = conditional_law_from_params(params, t)?;
    let means = crate::conditioning::impute_batch(&law, data.matrix())?;
    let b = active_block(params, t, include_intercept);
    let offset = if include_intercept { 0.0 } else { params.intercept(t) };
    let v = law.variance;
    let e1 = 1.0 / params.variance(t);
    let e2 = e1 * e1;
    let d = design.dim();
    let n = data.n();
    let mut comp = DMatrix::zeros(d + 1, d + 1);
    let mut miss = DMatrix::zeros(d + 1, d + 1);
    for i in 0..n {
        let x = design.x.row(i).transpose();
        let r = means[i] - offset - b.dot(&x);
        let xx = &x * x.transpose();
        let mut c = DMatrix::zeros(d + 1, d + 1);
        c.view_mut((0, 0), (d, d)).copy_from(&(&xx * e1));
        let cross_c = &x * (e1 * r);
        c.view_mut((0, d), (d, 1)).copy_from(&cross_c);
        c.view_mut((d, 0), (1, d)).copy_from(&cross_c.transpose());
        c[(d, d)] = 0.5 * e1 * (r * r + v);

        let mut m = DMatrix::zeros(d + 1, d + 1);
        m.view_mut((0, 0), (d, d)).copy_from(&(&xx * (e2 * v)));
        let cross_m = &x * (e2 * r * v);
        m.view_mut((0, d), (d, 1)).copy_from(&cross_m);
        m.view_mut((d, 0), (1, d)).copy_from(&cross_m.transpose());
        m[(d, d)] = e2 * (r * r * v + 0.5 * v * v);

        comp += c;
        miss += m;
    }
    Ok((comp / n as f64, miss / n as f64))
}

/// Central-difference Hessian of `f` at `x` with per-coordinate steps `h`.
fn fd_hessian<F>(f: &F, x: &DVector<f64>, h: &DVector<f64>) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<f64>,
{
    let k = x.len();
    let f0 = f(x)?;
    let mut hess = DMatrix::zeros(k, k);
    let shifted = |i: usize, si: f64, j: usize, sj: f64| {
        let mut y = x.clone();
        y[i] += si * h[i];
        y[j] += sj * h[j];
        f(&y)
    };
    for i in 0..k {
        let mut up = x.clone();
        up[i] += h[i];
        let mut dn = x.clone();
        dn[i] -= h[i];
        hess[(i, i)] = (f(&up)? - 2.0 * f0 + f(&dn)?) / (h[i] * h[i]);
        for j in 0..i {
            let v = (shifted(i, 1.0, j, 1.0)? - shifted(i, 1.0, j, -1.0)? - shifted(i, -1.0, j, 1.0)?
                + shifted(i, -1.0, j, -1.0)?)
                / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Ok(hess)
}

/// Observed-data information of the active block by finite differences,
/// `(plain(h), richardson(h))` where `richardson = (4 H(h/2) - H(h)) / 3`.
/// Steps are `fd_step * max(1, |theta_j|)`.
pub fn observed_information(
    params: &SemParams,
    data: &ObservedData,
    include_intercept: bool,
    fd_step: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let t = data.target();
    let obs = ObservedMoments::new(data);
    let theta = theta_of(params, t, include_intercept);
    let nll = |th: &DVector<f64>| -> Result<f64> {
        Ok(-observed_loglik(&with_theta(params, t, include_intercept, th)?, &obs)?)
    };
    let steps = theta.map(|v| fd_step * v.abs().max(1.0));
    let coarse = fd_hessian(&nll, &theta, &steps)?;
    let fine = fd_hessian(&nll, &theta, &(&steps * 0.5))?;
    Ok((coarse.clone(), (fine * 4.0 - coarse) / 3.0))
}

pub const DEFAULT_FD_STEP: f64 = 1e-4;

/// Louis identity check `I_obs = I_comp - I_miss` at `params`.
pub fn louis_check(
    params: &SemParams,
    data: &ObservedData,
    include_intercept: bool,
    fd_step: f64,
) -> Result<InformationReport> {
    if !(fd_step > 0.0) {
        return Err(Error::config("fd_step", "must be positive"));
    }
    let t = data.target();
    let (comp, miss) = complete_and_missing_information(params, data, include_intercept)?;
    let expected = &comp - &miss;
    let (plain, rich) = observed_information(params, data, include_intercept, fd_step)?;
    let (_, rich_half) = observed_information(params, data, include_intercept, fd_step / 2.0)?;
    let residual = (&rich - &expected).norm();
    let residual_half_step = (&rich_half - &expected).norm();
    let mut labels = crate::em::active_labels(params, t, include_intercept);
    labels.push("log_sigma2".into());
    Ok(InformationReport {
        labels,
        i_obs: to_rows(&rich),
        i_comp: to_rows(&comp),
        i_miss: to_rows(&miss),
        residual,
        residual_plain: (&plain - &expected).norm(),
        residual_half_step,
        roundoff_suspect: residual_half_step > 2.0 * residual && residual_half_step > 1e-8,
        min_eig_i_miss: linalg::min_eigenvalue(&miss),
        min_eig_comp_minus_obs: linalg::min_eigenvalue(&(&comp - &rich)),
    })
}

/// Empirical contraction of an EM trace toward a reference point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionEstimate {
    /// Geometric mean of `e_{r+1} / e_r` over the pre-plateau segment.
    pub kappa: f64,
    /// Error level on the plateau (median over it), or the last error when
    /// no plateau is reached.
    pub floor: f64,
    /// Number of ratios before the plateau.
    pub pre_plateau: usize,
    pub errors: Vec<f64>,
}

/// Ratio above which the error sequence is considered flat.
pub const PLATEAU_RATIO: f64 = 0.98;

/// Estimates the contraction factor and statistical floor from a sequence
/// of parameter errors `e_0, e_1, ...`.
pub fn contraction_from_errors(errors: &[f64]) -> Result<ContractionEstimate> {
    if errors.len() < 6 {
        return Err(Error::TooFewIterations {
            needed: 5,
            got: errors.len().saturating_sub(1),
        });
    }
    let mut log_sum = 0.0;
    let mut count = 0;
    let mut plateau_at = None;
    let mut hit_zero = false;
    for r in 0..errors.len() - 1 {
        if errors[r + 1] == 0.0 {
            hit_zero = true;
            count += 1;
            break;
        }
        if errors[r] == 0.0 {
            break;
        }
        let ratio = errors[r + 1] / errors[r];
        if ratio > PLATEAU_RATIO {
            plateau_at = Some(r);
            break;
        }
        log_sum += ratio.ln();
        count += 1;
    }
    let kappa = if hit_zero {
        0.0
    } else if count == 0 {
        errors[1] / errors[0]
    } else {
        (log_sum / count as f64).exp()
    };
    let floor = match plateau_at {
        Some(r) => median(&errors[r..]),
        None if hit_zero => 0.0,
        None => *errors.last().expect("nonempty"),
    };
    Ok(ContractionEstimate {
        kappa,
        floor,
        pre_plateau: count,
        errors: errors.to_vec(),
    })
}

/// [`contraction_from_errors`] on `||theta_r - reference||` along a trace,
/// with `theta = (b, log sigma^2)`.
pub fn contraction_rate(trace: &EmTrace, reference: &DVector<f64>) -> Result<ContractionEstimate> {
    let path = trace.theta_path();
    if path[0].len() != reference.len() {
        return Err(Error::DimensionMismatch {
            expected: path[0].len(),
            got: reference.len(),
        });
    }
    let errors: Vec<f64> = path.iter().map(|th| (th - reference).norm()).collect();
    contraction_from_errors(&errors)
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Everything the `theory-check` command reports for one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub target: String,
    pub n: usize,
    pub radius: f64,
    pub curvature: CurvatureReport,
    pub envelope: LipschitzEnvelope,
    pub gamma_bound: f64,
    pub information: InformationReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contraction: Option<ContractionEstimate>,
    /// `kappa_hat <= gamma / lambda` when both are available; `None` when
    /// the bound is vacuous (`>= 1`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound_consistent: Option<bool>,
}

/// Local curvature constants for the ball of radius `r` in `theta` around
/// `params`: variances range over `sigma^2 e^{+-r}`, residual second moments
/// over `[v*, v* + r^2 l_max(M)]`, and the cross term is bounded by
/// `r l_max(M) / D_min`.
pub fn local_curvature(
    params: &SemParams,
    data: &ObservedData,
    include_intercept: bool,
    radius: f64,
) -> Result<CurvatureReport> {
    let t = data.target();
    let stats = crate::em::e_step(params, data, include_intercept)?;
    let b = active_block(params, t, include_intercept);
    let resid = &stats.response - &stats.design.x * &b;
    let v_star = stats.variance + resid.norm_squared() / data.n() as f64;
    let s2 = params.variance(t);
    let bounds = (s2 * (-radius).exp(), s2 * radius.exp());
    let lmax = linalg::max_eigenvalue(stats.parent_moment());
    let rho = radius * lmax / bounds.0;
    curvature_constants(
        stats.parent_moment(),
        bounds,
        (v_star, v_star + radius * radius * lmax),
        rho,
    )
}

/// Curvature, envelope, gamma bound and Louis check at `params` (and the
/// contraction estimate of `trace`, when given).
pub fn theory_report(
    params: &SemParams,
    data: &ObservedData,
    include_intercept: bool,
    radius: f64,
    probes: usize,
    seed: u64,
    trace: Option<&EmTrace>,
) -> Result<TheoryReport> {
    let t = data.target();
    let env = lipschitz_envelope(params, t, include_intercept, radius, probes, seed)?;
    let design = ParentDesign::new(params, data, include_intercept)?;
    let law = conditional_law_from_params(params, t)?;
    let delta_min = params.variance(t) * (-radius).exp();
    let gamma = gamma_bound(&env, delta_min, &design.x, data.matrix(), &law.observed_mean)?;
    let curvature = local_curvature(params, data, include_intercept, radius)?.with_gamma(gamma);
    let information = louis_check(params, data, include_intercept, DEFAULT_FD_STEP)?;
    let contraction = match trace {
        Some(tr) => Some(contraction_rate(tr, &theta_of(params, t, include_intercept))?),
        None => None,
    };
    let bound_consistent = match (&contraction, curvature.kappa) {
        (Some(c), Some(k)) if k < 1.0 => Some(c.kappa <= k),
        _ => None,
    };
    Ok(TheoryReport {
        target: params.dag().name(t).to_string(),
        n: data.n(),
        radius,
        curvature,
        envelope: env,
        gamma_bound: gamma,
        information,
        contraction,
        bound_consistent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dag::DagSpec;
    use std::sync::Arc;

    #[test]
    fn curvature_identity_example() {
        let r = curvature_constants(&DMatrix::identity(2, 2), (1.0, 1.0), (2.0, 2.0), 0.0).unwrap();
        for v in [r.lambda_b, r.mu_b, r.lambda_alpha, r.mu_alpha, r.lambda, r.mu] {
            assert!((v - 1.0).abs() < 1e-14);
        }
        assert!(r.schur_ok);
    }

    #[test]
    fn curvature_schur_violation() {
        let r = curvature_constants(&DMatrix::identity(2, 2), (1.0, 1.0), (2.0, 2.0), 1.0).unwrap();
        assert!(!r.schur_ok);
        assert!(r.lambda <= 0.0);
        assert_eq!(r.with_gamma(0.1).kappa, Some(f64::INFINITY));
    }

    #[test]
    fn curvature_diag_example() {
        let m = DMatrix::from_diagonal(&DVector::from_row_slice(&[2.0, 8.0]));
        let r = curvature_constants(&m, (1.0, 4.0), (1.0, 1.0), 0.0).unwrap();
        assert!((r.lambda_b - 0.5).abs() < 1e-14);
        assert!((r.mu_b - 8.0).abs() < 1e-14);
        let bad = DMatrix::from_diagonal(&DVector::from_row_slice(&[0.0, 1.0]));
        assert!(curvature_constants(&bad, (1.0, 1.0), (1.0, 1.0), 0.0).is_err());
    }

    #[test]
    fn contraction_synthetic_half() {
        let errors: Vec<f64> = (0..12).map(|r| 0.5f64.powi(r)).collect();
        let c = contraction_from_errors(&errors).unwrap();
        assert!((c.kappa - 0.5).abs() < 1e-12);
    }

    #[test]
    fn contraction_jump_and_floor() {
        let c = contraction_from_errors(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(c.kappa, 0.0);
        let mut errors: Vec<f64> = (0..8).map(|r| 0.3f64.powi(r)).collect();
        errors.extend([1e-3; 6]);
        errors[7] = 1e-3 / 0.3 * 0.3 + 1e-3;
        let c = contraction_from_errors(&errors).unwrap();
        assert!(c.floor > 0.9e-3 && c.floor < 2.1e-3);
        assert!(contraction_from_errors(&[1.0, 0.5]).is_err());
    }

    #[test]
    fn parentless_isolated_target_has_zero_slope() {
        let dag = Arc::new(DagSpec::new(vec!["a".into(), "t".into()], &[]).unwrap());
        let params = SemParams::standard(dag);
        let env = lipschitz_envelope(&params, 1, true, 1.0, 16, 0).unwrap();
        assert_eq!(env.c_k, 0.0);
        assert_eq!(env.c_a, 0.0);
    }

    #[test]
    fn gamma_zero_constants() {
        let env = LipschitzEnvelope {
            c_m: 0.0,
            c_k: 0.0,
            c_a: 3.0,
            radius: 1.0,
            probes: 1,
        };
        let x = DMatrix::from_element(3, 2, 1.0);
        let g = gamma_bound(&env, 1.0, &x, &x, &DVector::zeros(2)).unwrap();
        assert_eq!(g, 0.0);
    }
}
