mod common;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use common::{observed_sample, random_sem};
use shiftem::datagen::{self, apply_shift, default_covariate_shift, seven_node_example, MechanismShiftSpec, SevenNodeConfig, SEVEN_NODE_TARGET};
use shiftem::em::{adapt, impute_adapted, EmConfig};
use shiftem::kiiveri::{expected_complete_moments, kiiveri_adapt, m_step_from_moments, target_only_init, CompletedMoments};
use shiftem::metrics::{mean_sd, metrics};
use shiftem::{conditional_law_from_params, fit_dag_source, DagSpec, SemParams};

fn assert_monotone(params: &SemParams, obs: &shiftem::ObservedData) {
    let cfg = EmConfig { max_iterations: 200, ..EmConfig::default() };
    let (_, trace) = kiiveri_adapt(params, obs, &cfg).unwrap();
    let mut prev = trace.initial_observed_loglik.unwrap();
    for r in &trace.records {
        let ll = r.observed_loglik.unwrap();
        assert!(ll - prev >= -1e-9, "iteration {}: {prev} -> {ll}", r.iteration);
        prev = ll;
    }
}

#[test]
fn observed_loglik_is_monotone() {
    let (dag, src) = seven_node_example(&SevenNodeConfig::default());
    let t = SEVEN_NODE_TARGET;
    let fit = fit_dag_source(dag, &datagen::sample(&src, 2000, 1)).unwrap();
    for shift in [default_covariate_shift(), MechanismShiftSpec::default().scenario(&src, t)] {
        let (obs, _) = observed_sample(&apply_shift(&src, &shift).unwrap(), t, 2000, 2);
        assert_monotone(&fit, &obs);
        assert_monotone(&target_only_init(&fit, &obs).unwrap(), &obs);
    }
    for seed in 0..5u64 {
        let params = random_sem(9, seed + 40);
        let Some(t) = common::interior_node(&params) else { continue };
        let (obs, _) = observed_sample(&params, t, 800, seed);
        assert_monotone(&target_only_init(&params, &obs).unwrap(), &obs);
    }
}

#[test]
fn revealed_target_reproduces_source_fit() {
    let (dag, src) = seven_node_example(&SevenNodeConfig::default());
    let x = datagen::sample(&src, 3000, 9);
    let fit = fit_dag_source(dag, &x).unwrap();
    let moments = CompletedMoments::from_full_data(&x);
    let from_moments = m_step_from_moments(&SemParams::standard(src.dag_arc().clone()), &moments, (1e-300, 1e300), f64::INFINITY).unwrap();
    let db = (from_moments.coefficients() - fit.coefficients()).abs().max();
    let dc = (from_moments.intercepts() - fit.intercepts()).abs().max();
    let dv = (from_moments.variances() - fit.variances()).abs().max();
    assert!(db.max(dc).max(dv) < 1e-8, "{db} {dc} {dv}");
}

#[test]
fn chain_conditional_moments_match_monte_carlo() {
    // X2 = 2 X1 + 1 + e, target X1, observed X2 = 4.
    let dag = std::sync::Arc::new(DagSpec::new(vec!["x1".into(), "x2".into()], &[(0, 1)]).unwrap());
    let b = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 2.0, 0.0]);
    let params = SemParams::new(dag, b, DVector::from_row_slice(&[0.5, 1.0]), DVector::from_row_slice(&[1.0, 0.5])).unwrap();
    let x = DVector::from_row_slice(&[4.0]);
    let (mean, second) = expected_complete_moments(&params, 0, &x).unwrap();
    let law = conditional_law_from_params(&params, 0).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(0);
    let n = 100_000;
    let draws: Vec<f64> = (0..n)
        .map(|_| law.mean_at(&x) + law.variance.sqrt() * Distribution::<f64>::sample(&StandardNormal, &mut rng))
        .collect();
    let d = DVector::from_vec(draws);
    let sq = d.map(|v| v * v);
    let se = |v: &DVector<f64>| (v.variance() / n as f64).sqrt();
    assert!((d.mean() - mean[0]).abs() < 3.0 * se(&d));
    assert!((sq.mean() - second[(0, 0)]).abs() < 3.0 * se(&sq));
    assert!((4.0 * d.mean() - second[(0, 1)]).abs() < 3.0 * 4.0 * se(&d));
    assert_eq!(mean[1], 4.0);
    assert_eq!(second[(1, 1)], 16.0);
}

#[test]
fn no_shift_from_truth_stays_near_truth() {
    let (_, src) = seven_node_example(&SevenNodeConfig::default());
    let t = SEVEN_NODE_TARGET;
    let (obs, _) = observed_sample(&src, t, 20_000, 3);
    let (out, _) = kiiveri_adapt(&src, &obs, &EmConfig { max_iterations: 50, ..EmConfig::default() }).unwrap();
    for k in 0..7 {
        assert!((out.variance(k) - src.variance(k)).abs() < 0.15, "variance {k}: {}", out.variance(k));
    }
    let mean_shift = (out.implied_mean() - src.implied_mean()).amax();
    assert!(mean_shift < 0.2, "implied mean moved {mean_shift}");
}

#[test]
fn latent_em_trails_first_order_under_covariate_shift() {
    let (dag, src) = seven_node_example(&SevenNodeConfig::default());
    let t = SEVEN_NODE_TARGET;
    let x = datagen::sample(&src, 5000, 1);
    let fit = fit_dag_source(dag, &x).unwrap();
    let tgt = apply_shift(&src, &default_covariate_shift()).unwrap();
    let (obs, truth) = observed_sample(&tgt, t, 5000, 2);
    let (mu, sd) = mean_sd(&x.column(t).clone_owned());
    let cfg = EmConfig { refit_roots: vec!["C2".into()], ..EmConfig::default() };
    let (em, _) = adapt(&fit, &obs, &cfg).unwrap();
    let (kv, _) = kiiveri_adapt(&target_only_init(&fit, &obs).unwrap(), &obs, &EmConfig::default()).unwrap();
    let em_rmse = metrics(&truth, &impute_adapted(&em, &obs).unwrap(), mu, sd).unwrap().rmse;
    let kv_rmse = metrics(&truth, &impute_adapted(&kv, &obs).unwrap(), mu, sd).unwrap().rmse;
    assert!(kv_rmse > 5.0 * em_rmse, "kiiveri {kv_rmse} vs em {em_rmse}");
}
