mod common;

use multirem::event_data::validate_dataset;
use multirem::model::{
    receiver_log_lik_at, sender_log_lik_at, EffectValues, HyperPriorConfig, Model, ModelSpec, ModelTerm,
};
use multirem::simulator::*;
use multirem::statistics::{StatKind, StatisticSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn attr(name: &str) -> AttributeSpec {
    AttributeSpec {
        name: name.into(),
        dist: AttributeDist::Normal { mean: 0.0, sd: 1.0 },
    }
}

fn config(spec: ModelSpec, params: PopulationParams, k: usize, n: usize, m: usize, seed: u64) -> SimConfig {
    SimConfig {
        clusters: k,
        actors: Count::Fixed(n),
        events: Count::Fixed(m),
        attributes: vec![attr("x1"), attr("x2")],
        spec,
        params,
        seed,
    }
}

fn intercept_only(value: f64) -> (ModelSpec, PopulationParams) {
    let spec = ModelSpec {
        sender: vec![ModelTerm::fixed(StatisticSpec::new(StatKind::Intercept))],
        receiver: vec![],
        hyper: HyperPriorConfig::default(),
    };
    let params = PopulationParams {
        phi: vec![value],
        ..Default::default()
    };
    (spec, params)
}

fn mixed_params() -> PopulationParams {
    PopulationParams {
        phi: vec![0.4],
        psi: vec![0.6],
        zeta: vec![-1.0, 0.3, 0.5],
        mu: vec![0.5, 0.8],
        sigma_gamma: vec![0.3, 0.4, 0.2],
        sigma_beta: vec![0.3, 0.5],
        corr_gamma: Some(vec![1.0, 0.2, 0.0, 0.2, 1.0, -0.3, 0.0, -0.3, 1.0]),
        corr_beta: None,
    }
}

#[test]
fn zero_scale_effects_equal_the_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let l = vec![1.0, 0.0, 0.0, 1.0];
    let (rows, _) = draw_random_effects(&[1.5, -2.0], &[0.0, 0.0], &l, 20, &mut rng).unwrap();
    assert!(rows.iter().all(|r| r == &vec![1.5, -2.0]));
    let (rows, z) = draw_random_effects(&[1.5, -2.0], &[1.0, 1.0], &l, 0, &mut rng).unwrap();
    assert!(rows.is_empty() && z.is_empty());
}

#[test]
fn random_effect_covariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let sigma = [[1.0, 0.5], [0.5, 1.0]];
    let l = correlation_cholesky(&[1.0, 0.5, 0.5, 1.0], 2).unwrap();
    let k = 10_000;
    let (rows, _) = draw_random_effects(&[0.0, 0.0], &[1.0, 1.0], &l, k, &mut rng).unwrap();
    let n = k as f64;
    let mean: Vec<f64> = (0..2).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    for i in 0..2 {
        for j in 0..2 {
            let c = rows.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum::<f64>() / (n - 1.0);
            // Var of a sample covariance of a bivariate normal: (σ_ii σ_jj + σ_ij²) / n
            let se = ((sigma[i][i] * sigma[j][j] + sigma[i][j] * sigma[i][j]) / n).sqrt();
            assert!((c - sigma[i][j]).abs() < 3.0 * se, "cov[{i}][{j}] = {c}");
        }
    }
}

#[test]
fn null_model_senders_are_uniform() {
    let (spec, params) = intercept_only(0.0);
    let sim = simulate(&config(spec, params, 1, 5, 10_000, 3)).unwrap();
    let mut counts = [0f64; 5];
    for e in sim.dataset.clusters()[0].events() {
        counts[e.sender] += 1.0;
    }
    let expected = 10_000.0 / 5.0;
    let chi2: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new(4.0).unwrap().cdf(chi2);
    assert!(p > 0.01, "chi2 = {chi2}, p = {p}");
}

#[test]
fn null_model_waiting_times() {
    let (spec, params) = intercept_only(0.0);
    let m = 20_000;
    let sim = simulate(&config(spec, params, 1, 5, m, 4)).unwrap();
    let ev = sim.dataset.clusters()[0].events();
    let mean = ev.last().unwrap().time / m as f64;
    let se = 0.2 / (m as f64).sqrt();
    assert!((mean - 0.2).abs() < 3.0 * se, "{mean}");
}

#[test]
fn rescaled_waiting_times_are_unit_exponential() {
    // constant rates: sum over actors of exp(0.7 + 0.5 x1)
    let spec = ModelSpec {
        sender: vec![
            ModelTerm::fixed(StatisticSpec::new(StatKind::Intercept)),
            ModelTerm::fixed(StatisticSpec::new(StatKind::ActorAttribute("x1".into()))),
        ],
        receiver: vec![],
        hyper: HyperPriorConfig::default(),
    };
    let params = PopulationParams {
        phi: vec![0.7, 0.5],
        ..Default::default()
    };
    let sim = simulate(&config(spec, params, 1, 6, 4000, 5)).unwrap();
    let c = &sim.dataset.clusters()[0];
    let rate: f64 = (0..c.n_actors()).map(|i| (0.7 + 0.5 * c.attributes(i)[0]).exp()).sum();
    let mut prev = 0.0;
    let mut x: Vec<f64> = c
        .events()
        .iter()
        .map(|e| {
            let d = (e.time - prev) * rate;
            prev = e.time;
            d
        })
        .collect();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let ks = x
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let f = 1.0 - (-v).exp();
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    assert!(ks < 1.628 / n.sqrt(), "KS = {ks}");
}

#[test]
fn same_seed_same_data() {
    let cfg = config(common::mixed_spec(), mixed_params(), 4, 6, 30, 9);
    let a = simulate(&cfg).unwrap();
    let b = simulate(&cfg).unwrap();
    assert_eq!(a.dataset, b.dataset);
    assert_eq!(a.truth, b.truth);
    let c = simulate(&SimConfig { seed: 10, ..cfg }).unwrap();
    assert_ne!(a.dataset, c.dataset);
}

#[test]
fn output_passes_validation_and_truth_is_complete() {
    let mut cfg = config(common::mixed_spec(), mixed_params(), 5, 4, 25, 11);
    cfg.actors = Count::Range([3, 7]);
    cfg.events = Count::Range([10, 40]);
    let sim = simulate(&cfg).unwrap();
    let (ev, ac, tau) = sim.dataset.to_raw();
    let back = validate_dataset(&ev, &ac, &[]).unwrap();
    assert_eq!(back, sim.dataset);
    assert_eq!(tau.len(), 5);
    for c in sim.dataset.clusters() {
        assert!((3..=7).contains(&c.n_actors()));
        assert!((10..=40).contains(&c.n_events()));
    }
    let model = Model::new(sim.dataset.clone(), cfg.spec.clone()).unwrap();
    let table = sim.truth_table(&cfg.spec).unwrap();
    let names: Vec<&String> = table.iter().map(|(n, _)| n).collect();
    assert_eq!(names, model.output_names().iter().collect::<Vec<_>>());
    let get = |n: &str| table.iter().find(|(k, _)| k == n).unwrap().1;
    assert_eq!(get("zeta.intercept"), -1.0);
    assert_eq!(get("sigma_beta.abba"), 0.5);
    assert!((get("L_gamma[1,0]") - 0.2).abs() < 1e-12);
}

#[test]
fn truth_beats_perturbed_parameters() {
    let spec = common::mixed_spec();
    let mut wins = 0;
    let reps = 40;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let nd = Normal::new(0.0, 1.0).unwrap();
    for rep in 0..reps {
        let cfg = config(spec.clone(), mixed_params(), 3, 6, 60, 100 + rep);
        let sim = simulate(&cfg).unwrap();
        let model = Model::new(sim.dataset.clone(), spec.clone()).unwrap();
        let truth = sim.truth.effects().unwrap();
        let mut jitter = |v: &[f64]| -> Vec<f64> { v.iter().map(|x| x + nd.sample(&mut rng)).collect() };
        let perturbed = EffectValues {
            phi: jitter(&truth.phi),
            psi: jitter(&truth.psi),
            gamma: jitter(&truth.gamma),
            beta: jitter(&truth.beta),
            p: truth.p,
            v: truth.v,
        };
        let ll = |e: &EffectValues| {
            sender_log_lik_at(&model, e).unwrap() + receiver_log_lik_at(&model, e).unwrap()
        };
        if ll(&truth) > ll(&perturbed) {
            wins += 1;
        }
    }
    assert!(wins as f64 >= 0.95 * reps as f64, "{wins}/{reps}");
}

#[test]
fn overflow_names_the_step() {
    let (spec, params) = intercept_only(800.0);
    let err = simulate(&config(spec, params, 1, 3, 5, 1)).unwrap_err();
    assert!(matches!(err, SimError::Intensity { step: 0, .. }), "{err}");
}

#[test]
fn config_checks() {
    let (spec, params) = intercept_only(0.0);
    let mut cfg = config(spec, params, 1, 1, 5, 1);
    assert!(matches!(simulate(&cfg), Err(SimError::Config(_))));
    cfg.actors = Count::Fixed(3);
    cfg.params.phi = vec![];
    assert!(matches!(simulate(&cfg), Err(SimError::Config(_))));
    assert!(correlation_cholesky(&[1.0, 2.0, 2.0, 1.0], 2).is_err());
}
