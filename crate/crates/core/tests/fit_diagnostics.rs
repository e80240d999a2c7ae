mod common;

use multirem::event_data::{ClusterSequence, Dataset, IndexedEvent};
use multirem::fit_diagnostics::*;
use multirem::model::{
    receiver_log_lik_at, sender_log_lik_at, HyperPriorConfig, Model, ModelSpec, ModelTerm,
};
use multirem::sampler::PosteriorDraws;
use multirem::statistics::{StatKind, StatisticSpec};
use proptest::prelude::*;

fn model_at(seed: u64, k: usize) -> (Model, Vec<f64>) {
    let model = Model::new(common::random_dataset(seed, k), common::mixed_spec()).unwrap();
    let u = common::random_point(&model, seed + 1, 1.0);
    (model, u)
}

#[test]
fn single_event_by_hand() {
    let c = ClusterSequence::new_unchecked(
        "c",
        common::actors(2),
        vec![vec![], vec![]],
        vec![IndexedEvent { time: 1.0, sender: 0, receiver: 1 }],
        1.0,
    );
    let spec = ModelSpec {
        sender: vec![ModelTerm::fixed(StatisticSpec::new(StatKind::Intercept))],
        receiver: vec![],
        hyper: HyperPriorConfig::default(),
    };
    let model = Model::new(Dataset::new_unchecked(vec![c], vec![]), spec).unwrap();
    let s = model.constrain(&[0.0]).unwrap();
    let r = deviance_residuals(&model, &s.effects().unwrap()).unwrap();
    assert_eq!(r.len(), 1);
    assert!((r[0].residual - 4.0).abs() < 1e-14);
}

#[test]
fn one_record_per_event() {
    let (model, u) = model_at(3, 4);
    let eff = model.constrain(&u).unwrap().effects().unwrap();
    let r = deviance_residuals(&model, &eff).unwrap();
    for c in model.dataset.clusters() {
        let mine: Vec<_> = r.iter().filter(|x| x.cluster == c.id()).collect();
        assert_eq!(mine.len(), c.n_events());
        assert!(mine.iter().enumerate().all(|(m, x)| x.event == m));
    }
}

#[test]
fn equal_intensities_give_equal_residuals() {
    let (model, u) = model_at(5, 3);
    let a = model.constrain(&u).unwrap();
    // same cluster effects through a different scale / standardized split
    let mut b = a.clone();
    for s in b.sigma_gamma.iter_mut() {
        *s *= 2.0;
    }
    for z in b.z_gamma.iter_mut() {
        *z /= 2.0;
    }
    let ra = deviance_residuals(&model, &a.effects().unwrap()).unwrap();
    let rb = deviance_residuals(&model, &b.effects().unwrap()).unwrap();
    for (x, y) in ra.iter().zip(&rb) {
        assert!((x.residual - y.residual).abs() < 1e-12);
    }
}

#[test]
fn identical_models_pair_on_the_diagonal() {
    let (model, u) = model_at(8, 3);
    let eff = model.constrain(&u).unwrap().effects().unwrap();
    let r = deviance_residuals(&model, &eff).unwrap();
    let mut buf = Vec::new();
    write_paired(&r, &r, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("cluster,event,residual_model_a,residual_model_b"));
    let mut n = 0;
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[2], f[3]);
        n += 1;
    }
    assert_eq!(n, r.len());
    assert!(matches!(write_paired(&r, &r[1..], Vec::new()), Err(DiagnosticsError::Mismatch(_))));
}

#[test]
fn residual_csv_layout() {
    let (model, u) = model_at(2, 2);
    let eff = model.constrain(&u).unwrap().effects().unwrap();
    let r = deviance_residuals(&model, &eff).unwrap();
    let mut buf = Vec::new();
    write_residuals(&r, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("cluster,event,residual\n"));
    assert_eq!(text.lines().count(), r.len() + 1);
}

#[test]
fn distribution_over_constant_draws_collapses() {
    let (model, u) = model_at(4, 2);
    let row = model.constrained_row(&u).unwrap();
    let draws = PosteriorDraws {
        names: model.output_names(),
        draws: vec![vec![row.clone(); 6]; 2],
        stats: vec![Vec::new(); 2],
        step_sizes: vec![1.0; 2],
        inv_metrics: vec![Vec::new(); 2],
    };
    let point = deviance_residuals(&model, &posterior_mean_effects(&model, &draws).unwrap()).unwrap();
    let dist = residual_distribution(&model, &draws, 2).unwrap();
    for (p, d) in point.iter().zip(&dist) {
        assert!((p.residual - d.mean).abs() < 1e-9);
        assert!((d.q025 - d.q975).abs() < 1e-9);
    }
    let mut bad = draws.clone();
    bad.names.pop();
    assert!(matches!(posterior_mean_effects(&model, &bad), Err(DiagnosticsError::Draws(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]
    #[test]
    fn residuals_sum_to_deviance(seed in 0u64..10_000, k in 1usize..4) {
        let (model, u) = model_at(seed, k);
        let eff = model.constrain(&u).unwrap().effects().unwrap();
        let total: f64 = deviance_residuals(&model, &eff).unwrap().iter().map(|r| r.residual).sum();
        let ll = sender_log_lik_at(&model, &eff).unwrap() + receiver_log_lik_at(&model, &eff).unwrap();
        prop_assert!((total + 2.0 * ll).abs() < 1e-8 * (1.0 + ll.abs()));
    }
}
