//! Experiment orchestration: generate (or ingest) source and target data,
//! fit the source, run each imputation method, score against held-out truth.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dag::DagSpec;
use crate::data::{split_target, ObservedData};
use crate::datagen::{
    self, apply_shifts, MechanismShiftSpec, RandomDagSpec, SevenNodeConfig, ShiftScenario,
};
use crate::em::{adapt, impute_adapted, EmConfig};
use crate::error::{Error, Result};
use crate::fitting::fit_dag_source;
use crate::kiiveri::{kiiveri_adapt, target_only_init};
use crate::metrics::{mean_sd, metrics};
use crate::sem::SemParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    FitOnSource,
    KiiveriEm,
    FirstOrderEm,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::FitOnSource, Method::KiiveriEm, Method::FirstOrderEm];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::FitOnSource => "fit_on_source",
            Method::KiiveriEm => "kiiveri_em",
            Method::FirstOrderEm => "first_order_em",
        }
    }
}

/// How the target domain differs from the source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShiftSpec {
    #[default]
    None,
    /// Relative shift of the target's own mechanism.
    Mechanism {
        #[serde(default = "default_mech_scale")]
        coefficient_scale: f64,
        #[serde(default = "default_mech_shift")]
        intercept_shift: f64,
        #[serde(default = "default_mech_var")]
        variance_scale: f64,
    },
    /// Root-marginal shifts; defaults to `C2 ~ N(5, 4)`.
    Covariate {
        #[serde(default = "default_covariate")]
        scenarios: Vec<ShiftScenario>,
    },
    /// Arbitrary absolute shifts applied in order.
    Custom { scenarios: Vec<ShiftScenario> },
}

fn default_mech_scale() -> f64 {
    MechanismShiftSpec::default().coefficient_scale
}
fn default_mech_shift() -> f64 {
    MechanismShiftSpec::default().intercept_shift
}
fn default_mech_var() -> f64 {
    MechanismShiftSpec::default().variance_scale
}
fn default_covariate() -> Vec<ShiftScenario> {
    vec![datagen::default_covariate_shift()]
}

impl ShiftSpec {
    fn scenarios(&self, params: &SemParams, target: usize) -> Vec<ShiftScenario> {
        match self {
            ShiftSpec::None => Vec::new(),
            ShiftSpec::Mechanism {
                coefficient_scale,
                intercept_shift,
                variance_scale,
            } => vec![MechanismShiftSpec {
                coefficient_scale: *coefficient_scale,
                intercept_shift: *intercept_shift,
                variance_scale: *variance_scale,
            }
            .scenario(params, target)],
            ShiftSpec::Covariate { scenarios } | ShiftSpec::Custom { scenarios } => scenarios.clone(),
        }
    }
}

fn default_interventions() -> usize {
    3
}
fn default_mean_shift_sd() -> f64 {
    3.0
}
fn default_variance_scale() -> f64 {
    4.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scenario {
    /// The seven-node example with target `T`.
    SevenNode {
        #[serde(default = "default_t_coefs")]
        t_coefficients: [f64; 3],
        #[serde(default)]
        t_intercept: f64,
        #[serde(default)]
        shift: ShiftSpec,
    },
    /// Three roots into `T`, observed through two children.
    WellConditioned {
        #[serde(default)]
        shift: ShiftSpec,
    },
    /// Random sparse DAG with marginal interventions on roots. With
    /// `target` unset, the target is the root with the most descendants and
    /// it is among the intervened roots.
    RandomDag {
        #[serde(default)]
        dag: RandomDagSpec,
        #[serde(default)]
        dag_seed: u64,
        #[serde(default)]
        target: Option<String>,
        #[serde(default = "default_interventions")]
        interventions: usize,
        /// New root mean is `old mean + mean_shift_sd * old sd`.
        #[serde(default = "default_mean_shift_sd")]
        mean_shift_sd: f64,
        #[serde(default = "default_variance_scale")]
        variance_scale: f64,
    },
    /// User-supplied DAG and CSV files; runs exactly once.
    External {
        dag: PathBuf,
        source: PathBuf,
        target_data: PathBuf,
        #[serde(default)]
        truth: Option<PathBuf>,
        target_node: String,
    },
}

fn default_t_coefs() -> [f64; 3] {
    SevenNodeConfig::default().t_coefficients
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KiiveriInit {
    /// Target data only; the latent node starts standard normal.
    #[default]
    Target,
    /// The source fit.
    Source,
}

fn default_n() -> usize {
    5000
}
fn default_repeats() -> usize {
    1
}
fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub scenario: Scenario,
    #[serde(default = "default_n")]
    pub n_source: usize,
    #[serde(default = "default_n")]
    pub n_target: usize,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub em: EmConfig,
    #[serde(default)]
    pub kiiveri: EmConfig,
    #[serde(default)]
    pub kiiveri_init: KiiveriInit,
    /// Add covariate-shifted roots (other than the target) to
    /// `em.refit_roots`.
    #[serde(default = "default_true")]
    pub refit_shifted_roots: bool,
    /// Include wall-clock runtimes in reports (makes them nondeterministic).
    #[serde(default)]
    pub record_runtime: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| {
            Error::config(format!("line {} column {}", e.line(), e.column()), e.to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::config("repeats", "must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::config("methods", "must name at least one method"));
        }
        if self.n_source < 2 || self.n_target < 2 {
            return Err(Error::config("n_source", "sample sizes must be at least 2"));
        }
        self.em.validate().map_err(|e| nest("em", e))?;
        self.kiiveri.validate().map_err(|e| nest("kiiveri", e))?;
        if let Scenario::External { .. } = self.scenario {
            if self.repeats != 1 {
                return Err(Error::config("repeats", "external data runs exactly once"));
            }
        }
        if let Scenario::RandomDag { interventions, variance_scale, .. } = &self.scenario {
            if *interventions == 0 {
                return Err(Error::config("scenario.interventions", "must be at least 1"));
            }
            if !(*variance_scale > 0.0) {
                return Err(Error::config("scenario.variance_scale", "must be positive"));
            }
        }
        Ok(())
    }
}

fn nest(prefix: &str, e: Error) -> Error {
    match e {
        Error::Config { path, message } => Error::config(format!("{prefix}.{path}"), message),
        other => other,
    }
}

/// Fixed part of a synthetic scenario: DAG, truth in both domains, target.
#[derive(Debug, Clone)]
pub struct ScenarioModel {
    pub dag: Arc<DagSpec>,
    pub target: usize,
    pub source_params: SemParams,
    pub target_params: SemParams,
    pub shifts: Vec<ShiftScenario>,
}

impl ScenarioModel {
    /// Root nodes changed by covariate shifts, excluding the target.
    pub fn shifted_roots(&self) -> Vec<String> {
        let t_name = self.dag.name(self.target);
        let mut out: Vec<String> = self
            .shifts
            .iter()
            .filter_map(|s| match s {
                ShiftScenario::CovariateShift { node, .. } if node != t_name => Some(node.clone()),
                _ => None,
            })
            .collect();
        out.sort();
        out.dedup();
        out
    }
}

/// Builds the synthetic model of a scenario (`None` for external data).
pub fn build_model(scenario: &Scenario) -> Result<Option<ScenarioModel>> {
    let (dag, source, target, shifts) = match scenario {
        Scenario::SevenNode {
            t_coefficients,
            t_intercept,
            shift,
        } => {
            let (dag, p) = datagen::seven_node_example(&SevenNodeConfig {
                t_coefficients: *t_coefficients,
                t_intercept: *t_intercept,
            });
            let t = datagen::SEVEN_NODE_TARGET;
            let shifts = shift.scenarios(&p, t);
            (dag, p, t, shifts)
        }
        Scenario::WellConditioned { shift } => {
            let (dag, p) = datagen::well_conditioned_example();
            let t = datagen::WELL_CONDITIONED_TARGET;
            let shifts = shift.scenarios(&p, t);
            (dag, p, t, shifts)
        }
        Scenario::RandomDag {
            dag: spec,
            dag_seed,
            target,
            interventions,
            mean_shift_sd,
            variance_scale,
        } => {
            let (dag, p) = datagen::random_sparse_dag(spec, *dag_seed)?;
            let descendants = descendant_counts(&dag);
            let mut roots: Vec<usize> = dag.roots();
            roots.sort_by_key(|&r| (std::cmp::Reverse(descendants[r]), r));
            let t = match target {
                Some(name) => dag.index_of(name)?,
                None => *roots
                    .iter()
                    .find(|&&r| descendants[r] > 0)
                    .ok_or_else(|| Error::InvalidDag("no root has descendants".into()))?,
            };
            let mut chosen = Vec::new();
            if dag.is_root(t) {
                chosen.push(t);
            }
            chosen.extend(roots.iter().copied().filter(|&r| r != t));
            chosen.truncate(*interventions);
            let shifts = chosen
                .iter()
                .map(|&r| ShiftScenario::CovariateShift {
                    node: dag.name(r).to_string(),
                    mean: p.intercept(r) + mean_shift_sd * p.variance(r).sqrt(),
                    variance: p.variance(r) * variance_scale,
                })
                .collect();
            (dag, p, t, shifts)
        }
        Scenario::External { .. } => return Ok(None),
    };
    let target_params = apply_shifts(&source, &shifts)?;
    Ok(Some(ScenarioModel {
        dag,
        target,
        source_params: source,
        target_params,
        shifts,
    }))
}

fn descendant_counts(dag: &DagSpec) -> Vec<usize> {
    let p = dag.node_count();
    let mut reach = vec![vec![false; p]; p];
    for &k in dag.topo_order().iter().rev() {
        for &c in dag.children(k) {
            reach[k][c] = true;
            let (head, tail) = reach.split_at_mut(k.max(c));
            let (rk, rc) = if k < c { (&mut head[k], &tail[0]) } else { (&mut tail[0], &head[c]) };
            for j in 0..p {
                rk[j] |= rc[j];
            }
        }
    }
    reach.iter().map(|r| r.iter().filter(|&&b| b).count()).collect()
}

/// SplitMix64 finalizer; derives independent stream seeds.
pub fn mix_seed(seed: u64, repeat: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(repeat.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One repeat's data. `truth` is only ever passed to scoring.
pub struct RepeatData {
    pub dag: Arc<DagSpec>,
    pub source: DMatrix<f64>,
    pub observed: ObservedData,
    pub truth: Option<DVector<f64>>,
    pub source_seed: Option<u64>,
    pub target_seed: Option<u64>,
}

/// Draws (or loads) the data for repeat `r`.
pub fn repeat_data(cfg: &ExperimentConfig, model: Option<&ScenarioModel>, r: usize) -> Result<RepeatData> {
    match (&cfg.scenario, model) {
        (
            Scenario::External {
                dag,
                source,
                target_data,
                truth,
                target_node,
            },
            _,
        ) => {
            let dag = Arc::new(DagSpec::load_json(dag)?);
            let t = dag.index_of(target_node)?;
            let src = crate::io::read_source_csv(source, &dag)?;
            let observed = crate::io::read_target_csv(target_data, &dag, t)?;
            let truth = match truth {
                Some(path) => {
                    let v = crate::io::read_vector_csv(path, None)
                        .or_else(|_| crate::io::read_vector_csv(path, Some(target_node)))?;
                    if v.len() != observed.n() {
                        return Err(Error::DimensionMismatch {
                            expected: observed.n(),
                            got: v.len(),
                        });
                    }
                    Some(v)
                }
                None => None,
            };
            Ok(RepeatData {
                dag,
                source: src,
                observed,
                truth,
                source_seed: None,
                target_seed: None,
            })
        }
        (_, Some(m)) => {
            let s_seed = mix_seed(cfg.seed, r as u64, 0);
            let t_seed = mix_seed(cfg.seed, r as u64, 1);
            let source = datagen::sample(&m.source_params, cfg.n_source, s_seed);
            let full = datagen::sample(&m.target_params, cfg.n_target, t_seed);
            let (observed, truth) = split_target(&full, m.target)?;
            Ok(RepeatData {
                dag: m.dag.clone(),
                source,
                observed,
                truth: Some(truth),
                source_seed: Some(s_seed),
                target_seed: Some(t_seed),
            })
        }
        _ => unreachable!("synthetic scenarios always have a model"),
    }
}

/// One method on one repeat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub scenario: String,
    pub method: Method,
    pub repeat: usize,
    pub source_seed: Option<u64>,
    pub target_seed: Option<u64>,
    pub mae: f64,
    pub rmse: f64,
    pub r2: f64,
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub method: Method,
    pub repeats: usize,
    pub failures: usize,
    pub mean_mae: f64,
    pub mean_rmse: f64,
    pub mean_r2: f64,
}

/// Imputations of one repeat, kept for scatter output.
#[derive(Debug, Clone, PartialEq)]
pub struct Scatter {
    pub method: Method,
    pub truth: DVector<f64>,
    pub predicted: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub target: String,
    pub rows: Vec<MetricsRow>,
    pub summary: Vec<SummaryRow>,
    #[serde(skip)]
    pub scatter: Vec<Scatter>,
}

/// Output of one method: imputations and the iteration count, if any.
pub struct MethodOutput {
    pub params: SemParams,
    pub imputed: DVector<f64>,
    pub iterations: Option<usize>,
}

/// Runs one method given the source fit. Never sees the truth.
pub fn run_method(
    method: Method,
    cfg: &ExperimentConfig,
    em_cfg: &EmConfig,
    fit: &SemParams,
    observed: &ObservedData,
) -> Result<MethodOutput> {
    let (params, iterations) = match method {
        Method::FitOnSource => (fit.clone(), None),
        Method::FirstOrderEm => {
            let (p, tr) = adapt(fit, observed, em_cfg)?;
            (p, Some(tr.iterations()))
        }
        Method::KiiveriEm => {
            let init = match cfg.kiiveri_init {
                KiiveriInit::Source => fit.clone(),
                KiiveriInit::Target => target_only_init(fit, observed)?,
            };
            let (p, tr) = kiiveri_adapt(&init, observed, &cfg.kiiveri)?;
            (p, Some(tr.iterations()))
        }
    };
    let imputed = impute_adapted(&params, observed)?;
    Ok(MethodOutput {
        params,
        imputed,
        iterations,
    })
}

/// EM settings for a scenario: root refits and parentless targets resolved.
pub fn effective_em_config(cfg: &ExperimentConfig, model: Option<&ScenarioModel>, dag: &DagSpec, target: usize) -> EmConfig {
    let mut em = cfg.em.clone();
    if let (true, Some(m)) = (cfg.refit_shifted_roots, model) {
        for r in m.shifted_roots() {
            if !em.refit_roots.contains(&r) {
                em.refit_roots.push(r);
            }
        }
    }
    if dag.is_root(target) {
        em.allow_parentless_target = true;
    }
    em
}

struct RepeatResult {
    rows: Vec<MetricsRow>,
    scatter: Vec<Scatter>,
}

fn run_repeat(cfg: &ExperimentConfig, model: Option<&ScenarioModel>, r: usize) -> Result<RepeatResult> {
    let data = repeat_data(cfg, model, r)?;
    let t = data.observed.target();
    let fit = fit_dag_source(data.dag.clone(), &data.source)?;
    let (src_mean, src_sd) = mean_sd(&data.source.column(t).clone_owned());
    let em_cfg = effective_em_config(cfg, model, &data.dag, t);
    let label = if cfg.name.is_empty() { "experiment".to_string() } else { cfg.name.clone() };
    let mut rows = Vec::new();
    let mut scatter = Vec::new();
    for &method in &cfg.methods {
        let start = Instant::now();
        let outcome = run_method(method, cfg, &em_cfg, &fit, &data.observed);
        let elapsed = start.elapsed().as_secs_f64();
        let mut row = MetricsRow {
            scenario: label.clone(),
            method,
            repeat: r,
            source_seed: data.source_seed,
            target_seed: data.target_seed,
            mae: f64::NAN,
            rmse: f64::NAN,
            r2: f64::NAN,
            iterations: None,
            runtime_s: cfg.record_runtime.then_some(elapsed),
            failure: None,
        };
        match outcome {
            Ok(out) => {
                row.iterations = out.iterations;
                if let Some(truth) = &data.truth {
                    match metrics(truth, &out.imputed, src_mean, src_sd) {
                        Ok(s) => {
                            row.mae = s.mae;
                            row.rmse = s.rmse;
                            row.r2 = s.r2;
                        }
                        Err(e) => row.failure = Some(e.to_string()),
                    }
                    if r == 0 {
                        scatter.push(Scatter {
                            method,
                            truth: truth.clone(),
                            predicted: out.imputed,
                        });
                    }
                }
            }
            Err(e) => row.failure = Some(e.to_string()),
        }
        rows.push(row);
    }
    Ok(RepeatResult { rows, scatter })
}

/// Runs every repeat (in parallel) and assembles per-repeat rows and
/// per-method means. Output depends only on the configuration.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let model = build_model(&cfg.scenario)?;
    let results: Vec<RepeatResult> = (0..cfg.repeats)
        .into_par_iter()
        .map(|r| run_repeat(cfg, model.as_ref(), r))
        .collect::<Result<_>>()?;
    let target = match &model {
        Some(m) => m.dag.name(m.target).to_string(),
        None => match &cfg.scenario {
            Scenario::External { target_node, .. } => target_node.clone(),
            _ => unreachable!(),
        },
    };
    let mut rows = Vec::new();
    let mut scatter = Vec::new();
    for res in results {
        rows.extend(res.rows);
        scatter.extend(res.scatter);
    }
    let summary = summarize(&rows, &cfg.methods);
    Ok(ExperimentReport {
        name: cfg.name.clone(),
        target,
        rows,
        summary,
        scatter,
    })
}

fn summarize(rows: &[MetricsRow], methods: &[Method]) -> Vec<SummaryRow> {
    methods
        .iter()
        .map(|&m| {
            let mine: Vec<&MetricsRow> = rows.iter().filter(|r| r.method == m).collect();
            let ok: Vec<&&MetricsRow> = mine.iter().filter(|r| r.failure.is_none()).collect();
            let mean = |f: fn(&MetricsRow) -> f64| {
                if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64
                }
            };
            SummaryRow {
                scenario: mine.first().map(|r| r.scenario.clone()).unwrap_or_default(),
                method: m,
                repeats: mine.len(),
                failures: mine.len() - ok.len(),
                mean_mae: mean(|r| r.mae),
                mean_rmse: mean(|r| r.rmse),
                mean_r2: mean(|r| r.r2),
            }
        })
        .collect()
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or(String::new(), T::to_string)
}

impl ExperimentReport {
    pub fn summary_for(&self, method: Method) -> Option<&SummaryRow> {
        self.summary.iter().find(|s| s.method == method)
    }

    /// One row per method x repeat, then one `mean` row per method.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "scenario",
            "method",
            "repeat",
            "source_seed",
            "target_seed",
            "mae",
            "rmse",
            "r2",
            "iterations",
            "runtime_s",
            "failure",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.scenario.clone(),
                r.method.as_str().to_string(),
                r.repeat.to_string(),
                opt(&r.source_seed),
                opt(&r.target_seed),
                r.mae.to_string(),
                r.rmse.to_string(),
                r.r2.to_string(),
                opt(&r.iterations),
                opt(&r.runtime_s),
                r.failure.clone().unwrap_or_default(),
            ])?;
        }
        for s in &self.summary {
            w.write_record([
                s.scenario.clone(),
                s.method.as_str().to_string(),
                "mean".to_string(),
                String::new(),
                String::new(),
                s.mean_mae.to_string(),
                s.mean_rmse.to_string(),
                s.mean_r2.to_string(),
                String::new(),
                String::new(),
                if s.failures > 0 {
                    format!("{} of {} repeats failed", s.failures, s.repeats)
                } else {
                    String::new()
                },
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::DataFile(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Plain-text summary table.
    pub fn summary_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "target: {}", self.target);
        let _ = writeln!(
            out,
            "{:<16} {:>8} {:>10} {:>10} {:>10}",
            "method", "repeats", "MAE", "RMSE", "R2"
        );
        for s in &self.summary {
            let _ = writeln!(
                out,
                "{:<16} {:>8} {:>10.4} {:>10.4} {:>10.4}{}",
                s.method.as_str(),
                s.repeats,
                s.mean_mae,
                s.mean_rmse,
                s.mean_r2,
                if s.failures > 0 {
                    format!("  ({} failed)", s.failures)
                } else {
                    String::new()
                }
            );
        }
        out
    }

    /// `method,truth,predicted` pairs from the first repeat.
    pub fn scatter_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["method", "truth", "predicted"])?;
        for s in &self.scatter {
            for (t, p) in s.truth.iter().zip(s.predicted.iter()) {
                w.write_record([s.method.as_str().to_string(), t.to_string(), p.to_string()])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::DataFile(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Minimal SVG with one true-vs-predicted panel per method.
    pub fn scatter_svg(&self) -> String {
        const W: f64 = 300.0;
        const PAD: f64 = 30.0;
        let panels = self.scatter.len().max(1) as f64;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for s in &self.scatter {
            for v in s.truth.iter().chain(s.predicted.iter()).filter(|v| v.is_finite()) {
                lo = lo.min(*v);
                hi = hi.max(*v);
            }
        }
        if !(hi > lo) {
            lo = 0.0;
            hi = 1.0;
        }
        let scale = |v: f64| PAD + (v - lo) / (hi - lo) * (W - 2.0 * PAD);
        let mut svg = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\">\n",
            W * panels,
            W
        );
        for (i, s) in self.scatter.iter().enumerate() {
            let x0 = W * i as f64;
            let _ = writeln!(
                svg,
                "<g transform=\"translate({x0},0)\"><text x=\"{PAD}\" y=\"18\" font-size=\"12\">{}</text>",
                s.method.as_str()
            );
            let _ = writeln!(
                svg,
                "<line x1=\"{PAD}\" y1=\"{}\" x2=\"{}\" y2=\"{PAD}\" stroke=\"#999\"/>",
                W - PAD,
                W - PAD
            );
            for (t, p) in s.truth.iter().zip(s.predicted.iter()).take(2000) {
                if t.is_finite() && p.is_finite() {
                    let _ = writeln!(
                        svg,
                        "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"1.2\" fill=\"#1f77b4\" fill-opacity=\"0.4\"/>",
                        scale(*t),
                        W - scale(*p)
                    );
                }
            }
            svg.push_str("</g>\n");
        }
        svg.push_str("</svg>\n");
        svg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_errors() {
        let cfg = ExperimentConfig::from_json(r#"{"scenario":{"kind":"seven_node"}}"#).unwrap();
        assert_eq!(cfg.n_source, 5000);
        assert_eq!(cfg.methods, Method::ALL.to_vec());
        let err = ExperimentConfig::from_json(r#"{"scenario":{"kind":"seven_node"},"repeats":0}"#)
            .unwrap_err();
        assert!(matches!(err, Error::Config { ref path, .. } if path == "repeats"));
        let err = ExperimentConfig::from_json(
            r#"{"scenario":{"kind":"seven_node"},"em":{"variance_bounds":[2,1]}}"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config { ref path, .. } if path == "em.variance_bounds"));
        assert!(ExperimentConfig::from_json(r#"{"scenario":{"kind":"nope"}}"#).is_err());
    }

    #[test]
    fn shift_spec_json() {
        let s: ShiftSpec = serde_json::from_str(r#"{"type":"mechanism"}"#).unwrap();
        assert_eq!(
            s,
            ShiftSpec::Mechanism {
                coefficient_scale: 1.5,
                intercept_shift: 12.0,
                variance_scale: 2.0
            }
        );
        let c: ShiftSpec = serde_json::from_str(r#"{"type":"covariate"}"#).unwrap();
        assert_eq!(c, ShiftSpec::Covariate { scenarios: default_covariate() });
    }

    #[test]
    fn seeds_are_distinct() {
        let a = mix_seed(0, 0, 0);
        assert_ne!(a, mix_seed(0, 0, 1));
        assert_ne!(a, mix_seed(0, 1, 0));
        assert_ne!(a, mix_seed(1, 0, 0));
        assert_eq!(a, mix_seed(0, 0, 0));
    }

    #[test]
    fn descendant_counts_chain() {
        let dag = DagSpec::new(vec!["a".into(), "b".into(), "c".into(), "d".into()], &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(descendant_counts(&dag), vec![2, 1, 0, 0]);
    }

    #[test]
    fn random_scenario_targets_an_intervened_root() {
        let sc = Scenario::RandomDag {
            dag: RandomDagSpec::default(),
            dag_seed: 0,
            target: None,
            interventions: 3,
            mean_shift_sd: 3.0,
            variance_scale: 4.0,
        };
        let m = build_model(&sc).unwrap().unwrap();
        assert!(m.dag.is_root(m.target));
        assert_eq!(m.shifts.len(), 3);
        assert_eq!(m.shifted_roots().len(), 2);
        assert!(!m.dag.children(m.target).is_empty());
    }
}
