#![allow(dead_code)]

use multirem::event_data::{ClusterSequence, Dataset, IndexedEvent};
use multirem::model::{HyperPriorConfig, Model, ModelSpec, ModelTerm};
use multirem::statistics::{StatKind, StatisticSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn actors(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("a{i}")).collect()
}

/// Random events with strictly increasing times and no self-loops.
pub fn random_cluster(id: &str, n: usize, m: usize, n_attr: usize, rng: &mut ChaCha8Rng) -> ClusterSequence {
    let attributes = (0..n)
        .map(|_| (0..n_attr).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let mut t = 0.0;
    let events = (0..m)
        .map(|_| {
            t += rng.random_range(0.05..1.0);
            let s = rng.random_range(0..n);
            let mut r = rng.random_range(0..n - 1);
            if r >= s {
                r += 1;
            }
            IndexedEvent { time: t, sender: s, receiver: r }
        })
        .collect();
    ClusterSequence::new_unchecked(id, actors(n), attributes, events, t)
}

pub fn random_dataset(seed: u64, k: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clusters = (0..k)
        .map(|i| {
            let n = rng.random_range(3..=6);
            let m = rng.random_range(5..=20);
            random_cluster(&format!("c{i}"), n, m, 2, &mut rng)
        })
        .collect();
    Dataset::new_unchecked(clusters, vec!["x1".into(), "x2".into()])
}

/// A mixed model touching every block of the parameter vector.
pub fn mixed_spec() -> ModelSpec {
    let s = |k: StatKind| StatisticSpec::new(k);
    ModelSpec {
        sender: vec![
            ModelTerm::random(s(StatKind::Intercept)),
            ModelTerm::fixed(s(StatKind::ActorAttribute("x1".into()))),
            ModelTerm::random(s(StatKind::ActorAttribute("x2".into()))),
            ModelTerm::random(s(StatKind::Outgoingness)),
        ],
        receiver: vec![
            ModelTerm::random(s(StatKind::ActorAttribute("x1".into()))),
            ModelTerm::fixed(s(StatKind::Inertia)),
            ModelTerm::random(s(StatKind::PShiftAbba)),
        ],
        hyper: HyperPriorConfig::default(),
    }
}

pub fn random_point(model: &Model, seed: u64, scale: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..model.layout().len)
        .map(|_| rng.random_range(-scale..scale))
        .collect()
}
