//! Domain-adaptive EM: every mechanism except the target's stays frozen at
//! its source estimate; the target mechanism `(b_t, sigma_t^2)` is updated
//! from unlabeled target data.
//!
//! The parent block `b` carries the intercept first when
//! [`EmConfig::include_intercept`] is set.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::conditioning::conditional_law_from_params;
use crate::data::ObservedData;
use crate::error::{Error, Result};
use crate::fitting::refit_root_marginals;
use crate::linalg;
use crate::sem::SemParams;

/// Largest eigenvalue of `M` below which a step size cannot be derived.
pub const MOMENT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MStepMode {
    #[default]
    Gradient,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "rule", deny_unknown_fields)]
pub enum StepRule {
    /// `eta = sigma^2 / lambda_max(M)`, recomputed every iteration.
    #[default]
    Safe,
    Fixed { eta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmConfig {
    pub m_step_mode: MStepMode,
    pub step_rule: StepRule,
    pub update_variance: bool,
    pub variance_bounds: [f64; 2],
    pub tol_b: f64,
    pub tol_sigma: f64,
    pub max_iterations: usize,
    /// Root nodes (by name) whose marginals are re-estimated from target data
    /// once, before the first iteration.
    pub refit_roots: Vec<String>,
    pub include_intercept: bool,
    /// In gradient mode, replace every k-th step by an exact M-step.
    pub exact_refit_every: Option<usize>,
    /// Condition-number cap for exact M-steps.
    pub condition_cap: f64,
    /// Permit a target without parents (intercept-only mechanism).
    pub allow_parentless_target: bool,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            m_step_mode: MStepMode::Gradient,
            step_rule: StepRule::Safe,
            update_variance: true,
            variance_bounds: [1e-6, 1e6],
            tol_b: 1e-8,
            tol_sigma: 1e-8,
            max_iterations: 500,
            refit_roots: Vec::new(),
            include_intercept: true,
            exact_refit_every: None,
            condition_cap: 1e12,
            allow_parentless_target: false,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.variance_bounds;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::config(
                "variance_bounds",
                format!("need 0 < min <= max, got [{lo}, {hi}]"),
            ));
        }
        if !(self.tol_b > 0.0) {
            return Err(Error::config("tol_b", "must be positive"));
        }
        if !(self.tol_sigma > 0.0) {
            return Err(Error::config("tol_sigma", "must be positive"));
        }
        if let StepRule::Fixed { eta } = self.step_rule {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(Error::config("step_rule.eta", "must be positive"));
            }
        }
        if self.exact_refit_every == Some(0) {
            return Err(Error::config("exact_refit_every", "must be at least 1"));
        }
        if !(self.condition_cap > 1.0) {
            return Err(Error::config("condition_cap", "must exceed 1"));
        }
        Ok(())
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.variance_bounds[0], self.variance_bounds[1])
    }
}

/// Parent design of the target on the observed data. Parents are always
/// observed, so this (and its second moment) is fixed for a dataset.
#[derive(Debug, Clone)]
pub struct ParentDesign {
    pub target: usize,
    pub include_intercept: bool,
    /// `n x d`; first column is all ones when `include_intercept`.
    pub x: DMatrix<f64>,
    /// `(1/n) X^T X`.
    pub moment: DMatrix<f64>,
}

impl ParentDesign {
    pub fn new(params: &SemParams, data: &ObservedData, include_intercept: bool) -> Result<Self> {
        let t = data.target();
        let n = data.n();
        if n == 0 {
            return Err(Error::InsufficientSamples { needed: 0, got: 0 });
        }
        let parents = params.dag().parents(t);
        let offset = usize::from(include_intercept);
        let d = parents.len() + offset;
        let mut x = DMatrix::from_element(n, d, 1.0);
        for (pos, &j) in parents.iter().enumerate() {
            let col = data.column_of(j).expect("parent of the target is observed");
            x.set_column(pos + offset, &data.matrix().column(col));
        }
        let moment = linalg::symmetrize(&(x.tr_mul(&x) / n as f64));
        Ok(Self {
            target: t,
            include_intercept,
            x,
            moment,
        })
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }
}

/// E-step output for one iteration.
#[derive(Debug, Clone)]
pub struct ImputedStats {
    pub design: Arc<ParentDesign>,
    /// `v = (1/n) sum_i x_pa,i r_i`.
    pub cross_moment: DVector<f64>,
    /// Conditional means `mu_i` of the target.
    pub means: DVector<f64>,
    /// Regression response `r_i`: `mu_i`, or `mu_i - c_t` without intercept.
    pub response: DVector<f64>,
    /// Shared conditional variance `V_t`.
    pub variance: f64,
}

impl ImputedStats {
    pub fn parent_moment(&self) -> &DMatrix<f64> {
        &self.design.moment
    }

    pub fn n(&self) -> usize {
        self.means.len()
    }

    /// Gradient of the surrogate in `b`: `(v - M b) / sigma^2`.
    pub fn gradient(&self, b: &DVector<f64>, sigma2: f64) -> DVector<f64> {
        (&self.cross_moment - self.parent_moment() * b) / sigma2
    }
}

/// E-step under `params` with a freshly built parent design.
pub fn e_step(params: &SemParams, data: &ObservedData, include_intercept: bool) -> Result<ImputedStats> {
    let design = Arc::new(ParentDesign::new(params, data, include_intercept)?);
    e_step_with_design(params, data, &design)
}

/// E-step reusing a parent design built for the same dataset.
pub fn e_step_with_design(
    params: &SemParams,
    data: &ObservedData,
    design: &Arc<ParentDesign>,
) -> Result<ImputedStats> {
    let t = data.target();
    let law = conditional_law_from_params(params, t)?;
    let means = crate::conditioning::impute_batch(&law, data.matrix())?;
    let response = if design.include_intercept {
        means.clone()
    } else {
        means.add_scalar(-params.intercept(t))
    };
    let cross_moment = design.x.tr_mul(&response) / data.n() as f64;
    Ok(ImputedStats {
        design: design.clone(),
        cross_moment,
        means,
        response,
        variance: law.variance,
    })
}

/// Active-block expected complete-data log-likelihood per sample, up to an
/// additive constant:
/// `-1/2 log s2 - (V + mean r^2) / (2 s2) + (b^T v - 1/2 b^T M b) / s2`.
pub fn surrogate_value(stats: &ImputedStats, b: &DVector<f64>, sigma2: f64) -> f64 {
    let r2 = stats.response.norm_squared() / stats.n() as f64;
    let quad = b.dot(&stats.cross_moment) - 0.5 * b.dot(&(stats.parent_moment() * b));
    -0.5 * sigma2.ln() - (stats.variance + r2) / (2.0 * sigma2) + quad / sigma2
}

/// One gradient-ascent step `b + (eta / s2)(v - M b)`.
pub fn gradient_m_step(stats: &ImputedStats, b: &DVector<f64>, sigma2: f64, eta: f64) -> DVector<f64> {
    b + (&stats.cross_moment - stats.parent_moment() * b) * (eta / sigma2)
}

/// `eta = sigma^2 / lambda_max(M)`.
pub fn default_step_size(stats: &ImputedStats, sigma2: f64) -> Result<f64> {
    let lmax = linalg::max_eigenvalue(stats.parent_moment());
    if !(lmax > MOMENT_TOL) {
        return Err(Error::DegenerateMoment(lmax));
    }
    Ok(sigma2 / lmax)
}

/// `M^{-1} v`, refused when `cond(M)` exceeds `condition_cap`.
pub fn exact_m_step(stats: &ImputedStats, condition_cap: f64) -> Result<DVector<f64>> {
    let m = stats.parent_moment();
    let (lmin, lmax) = linalg::eigen_extremes(m);
    let cond = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
    if cond > condition_cap {
        return Err(Error::IllConditioned {
            cond,
            cap: condition_cap,
        });
    }
    let chol = linalg::cholesky_spd(m, 0.0)?;
    Ok(chol.solve(&stats.cross_moment))
}

/// `clamp(V + (1/n) sum_i (r_i - b^T x_i)^2, lo, hi)`.
pub fn variance_update(stats: &ImputedStats, b_new: &DVector<f64>, bounds: (f64, f64)) -> f64 {
    let resid = &stats.response - &stats.design.x * b_new;
    let raw = stats.variance + resid.norm_squared() / stats.n() as f64;
    raw.clamp(bounds.0, bounds.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Active block after the update.
    pub b: Vec<f64>,
    pub sigma2: f64,
    /// Surrogate at the new parameters, under this iteration's E-step.
    pub surrogate: f64,
    /// Surrogate at the old parameters, under the same E-step.
    pub surrogate_before: f64,
    /// Norm of the surrogate gradient in `b` at the old parameters.
    pub grad_norm: f64,
    /// Step size used (`NaN` for exact steps).
    pub step_size: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed_loglik: Option<f64>,
}

/// Per-iteration history of the target mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmTrace {
    /// Labels of the entries of `b` (`"(intercept)"` then parent names).
    pub labels: Vec<String>,
    pub initial_b: Vec<f64>,
    pub initial_sigma2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_observed_loglik: Option<f64>,
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
}

impl EmTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    /// `(b, log sigma^2)` at the start and after every iteration.
    pub fn theta_path(&self) -> Vec<DVector<f64>> {
        let pack = |b: &[f64], s2: f64| {
            DVector::from_iterator(b.len() + 1, b.iter().copied().chain(std::iter::once(s2.ln())))
        };
        std::iter::once(pack(&self.initial_b, self.initial_sigma2))
            .chain(self.records.iter().map(|r| pack(&r.b, r.sigma2)))
            .collect()
    }

    pub fn final_b(&self) -> &[f64] {
        self.records.last().map_or(&self.initial_b, |r| &r.b)
    }

    /// CSV with columns `iteration, b_<label>..., sigma2, surrogate,
    /// grad_norm, step_size` (plus `observed_loglik` when recorded).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let with_ll = self.records.iter().any(|r| r.observed_loglik.is_some());
        let mut header = vec!["iteration".to_string()];
        header.extend(self.labels.iter().map(|l| format!("b_{l}")));
        header.extend(["sigma2", "surrogate", "grad_norm", "step_size"].map(String::from));
        if with_ll {
            header.push("observed_loglik".into());
        }
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![r.iteration.to_string()];
            row.extend(r.b.iter().map(|v| v.to_string()));
            row.extend([r.sigma2, r.surrogate, r.grad_norm, r.step_size].map(|v| v.to_string()));
            if with_ll {
                row.push(r.observed_loglik.map_or(String::new(), |v| v.to_string()));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Labels for the active block of `t`.
pub fn active_labels(params: &SemParams, t: usize, include_intercept: bool) -> Vec<String> {
    let dag = params.dag();
    let mut labels = Vec::new();
    if include_intercept {
        labels.push("(intercept)".to_string());
    }
    labels.extend(dag.parents(t).iter().map(|&j| dag.name(j).to_string()));
    labels
}

/// Current active block of `t` read from `params`.
pub fn active_block(params: &SemParams, t: usize, include_intercept: bool) -> DVector<f64> {
    let coefs = params.parent_coefficients(t);
    if include_intercept {
        DVector::from_iterator(
            coefs.len() + 1,
            std::iter::once(params.intercept(t)).chain(coefs.iter().copied()),
        )
    } else {
        coefs
    }
}

fn write_active_block(
    params: &mut SemParams,
    t: usize,
    include_intercept: bool,
    b: &DVector<f64>,
    sigma2: f64,
) -> Result<()> {
    let (intercept, coefs) = if include_intercept {
        (b[0], &b.as_slice()[1..])
    } else {
        (params.intercept(t), b.as_slice())
    };
    params.set_mechanism(t, coefs, intercept, sigma2)
}

/// Resolves root names to indices.
pub fn resolve_roots(params: &SemParams, names: &[String]) -> Result<Vec<usize>> {
    names.iter().map(|n| params.dag().index_of(n)).collect()
}

/// Runs domain-adaptive EM on the mechanism of `data.target()`.
///
/// Only row `t` of `B`, `c_t` (with intercept), `sigma_t^2` and any roots in
/// `config.refit_roots` can differ from `source` in the result.
pub fn adapt(source: &SemParams, data: &ObservedData, config: &EmConfig) -> Result<(SemParams, EmTrace)> {
    config.validate()?;
    let t = data.target();
    if data.node_count() != source.node_count() {
        return Err(Error::DimensionMismatch {
            expected: source.node_count(),
            got: data.node_count(),
        });
    }
    if source.dag().parents(t).is_empty() && !config.allow_parentless_target {
        return Err(Error::config(
            "allow_parentless_target",
            format!("target `{}` has no parents", source.dag().name(t)),
        ));
    }
    let roots = resolve_roots(source, &config.refit_roots)?;
    let mut params = refit_root_marginals(source, data, &roots)?;

    let design = Arc::new(ParentDesign::new(&params, data, config.include_intercept)?);
    if design.dim() == 0 {
        return Err(Error::config("include_intercept", "active block is empty"));
    }
    let mut b = active_block(&params, t, config.include_intercept);
    let mut sigma2 = params.variance(t);
    let mut trace = EmTrace {
        labels: active_labels(&params, t, config.include_intercept),
        initial_b: b.iter().copied().collect(),
        initial_sigma2: sigma2,
        initial_observed_loglik: None,
        records: Vec::new(),
        termination: Termination::MaxIterations,
    };

    for r in 0..config.max_iterations {
        let stats = e_step_with_design(&params, data, &design)?;
        let q_before = surrogate_value(&stats, &b, sigma2);
        let grad_norm = stats.gradient(&b, sigma2).norm();
        let exact_now = match config.m_step_mode {
            MStepMode::Exact => true,
            MStepMode::Gradient => config.exact_refit_every.is_some_and(|k| (r + 1) % k == 0),
        };
        let (b_new, eta) = if exact_now {
            (exact_m_step(&stats, config.condition_cap)?, f64::NAN)
        } else {
            let eta = match config.step_rule {
                StepRule::Safe => default_step_size(&stats, sigma2)?,
                StepRule::Fixed { eta } => eta,
            };
            (gradient_m_step(&stats, &b, sigma2, eta), eta)
        };
        let sigma2_new = if config.update_variance {
            variance_update(&stats, &b_new, config.bounds())
        } else {
            sigma2
        };
        trace.records.push(IterationRecord {
            iteration: r + 1,
            b: b_new.iter().copied().collect(),
            sigma2: sigma2_new,
            surrogate: surrogate_value(&stats, &b_new, sigma2_new),
            surrogate_before: q_before,
            grad_norm,
            step_size: eta,
            observed_loglik: None,
        });
        write_active_block(&mut params, t, config.include_intercept, &b_new, sigma2_new)?;
        let db = (&b_new - &b).norm();
        let ds = (sigma2_new - sigma2).abs();
        b = b_new;
        sigma2 = sigma2_new;
        if db <= config.tol_b && ds <= config.tol_sigma {
            trace.termination = Termination::Converged;
            break;
        }
    }
    Ok((params, trace))
}

/// Conditional-mean imputation of the target under (adapted) parameters.
pub fn impute_adapted(params: &SemParams, data: &ObservedData) -> Result<DVector<f64>> {
    let law = conditional_law_from_params(params, data.target())?;
    crate::conditioning::impute_observed(&law, data)
}
