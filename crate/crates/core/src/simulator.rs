//! Synthetic multilevel event sequences drawn from known parameters.

use nalgebra::DMatrix;
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event_data::{risk_set_actor, ClusterSequence, Dataset, IndexedEvent};
use crate::model::{
    identity, noncentered_transform, output_names_for, state_row, Dims, EffectType, ModelError,
    ModelSpec, ParameterState,
};
use crate::statistics::{History, Side, StatError, StatEvaluator};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("cluster {cluster}, event {step}: {what}")]
    Intensity {
        cluster: String,
        step: usize,
        what: String,
    },
    #[error("invalid simulation setup: {0}")]
    Config(String),
    #[error(transparent)]
    Stat(#[from] StatError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, SimError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "distribution", rename_all = "lowercase")]
pub enum AttributeDist {
    Bernoulli { p: f64 },
    Normal { mean: f64, sd: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    #[serde(flatten)]
    pub dist: AttributeDist,
}

/// A per-cluster count: fixed, or uniform over an inclusive range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Count {
    Fixed(usize),
    Range([usize; 2]),
}

impl Count {
    fn draw<R: Rng>(&self, rng: &mut R) -> usize {
        match *self {
            Count::Fixed(n) => n,
            Count::Range([lo, hi]) => rng.random_range(lo..=hi),
        }
    }

    fn min(&self) -> usize {
        match *self {
            Count::Fixed(n) => n,
            Count::Range([lo, _]) => lo,
        }
    }
}

/// Population-level parameters. Correlation matrices are row-major; `None` means
/// independent random effects.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PopulationParams {
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    pub zeta: Vec<f64>,
    pub mu: Vec<f64>,
    pub sigma_gamma: Vec<f64>,
    pub sigma_beta: Vec<f64>,
    pub corr_gamma: Option<Vec<f64>>,
    pub corr_beta: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub clusters: usize,
    pub actors: Count,
    pub events: Count,
    pub attributes: Vec<AttributeSpec>,
    pub spec: ModelSpec,
    pub params: PopulationParams,
    pub seed: u64,
}

/// A simulated dataset with the parameters that generated it.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub dataset: Dataset,
    pub truth: ParameterState,
}

impl Simulation {
    /// Ground-truth values keyed by the names the fitter reports.
    pub fn truth_table(&self, spec: &ModelSpec) -> Result<Vec<(String, f64)>> {
        let ids: Vec<&str> = self.dataset.clusters().iter().map(|c| c.id()).collect();
        let names = output_names_for(spec, &ids);
        let row = state_row(&self.truth)?;
        Ok(names.into_iter().zip(row).collect())
    }

    pub fn truth_json(&self, spec: &ModelSpec) -> Result<serde_json::Value> {
        let map: serde_json::Map<String, serde_json::Value> = self
            .truth_table(spec)?
            .into_iter()
            .map(|(k, v)| (k, v.into()))
            .collect();
        Ok(serde_json::Value::Object(map))
    }
}

/// Lower Cholesky factor of a correlation matrix, checked for unit diagonal.
pub fn correlation_cholesky(corr: &[f64], p: usize) -> Result<Vec<f64>> {
    if corr.len() != p * p {
        return Err(SimError::Config(format!("correlation matrix needs {p}x{p} entries")));
    }
    let m = DMatrix::from_row_slice(p, p, corr);
    if (0..p).any(|i| (m[(i, i)] - 1.0).abs() > 1e-12) || (&m - m.transpose()).amax() > 1e-12 {
        return Err(SimError::Config("correlation matrix must be symmetric with unit diagonal".into()));
    }
    let l = m
        .cholesky()
        .ok_or_else(|| SimError::Config("correlation matrix is not positive definite".into()))?
        .l();
    Ok((0..p * p).map(|t| l[(t / p, t % p)]).collect())
}

/// `k` rows drawn i.i.d. from `N(mean, diag(σ) L Lᵀ diag(σ))` through the non-centered
/// transform; also returns the standard-normal draws.
pub fn draw_random_effects<R: Rng>(
    mean: &[f64],
    sigma: &[f64],
    l: &[f64],
    k: usize,
    rng: &mut R,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let p = mean.len();
    let mut rows = Vec::with_capacity(k);
    let mut zs = Vec::with_capacity(k * p);
    for _ in 0..k {
        let z: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        rows.push(noncentered_transform(&z, mean, sigma, l)?);
        zs.extend(z);
    }
    Ok((rows, zs))
}

fn check_len(what: &str, v: &[f64], n: usize) -> Result<()> {
    if v.len() == n {
        Ok(())
    } else {
        Err(SimError::Config(format!("{what} has {} values, model needs {n}", v.len())))
    }
}

fn validate(cfg: &SimConfig, d: &Dims) -> Result<()> {
    if cfg.actors.min() < 2 {
        return Err(SimError::Config("clusters need at least 2 actors".into()));
    }
    if cfg.events.min() < 1 {
        return Err(SimError::Config("clusters need at least 1 event".into()));
    }
    for c in [cfg.actors, cfg.events] {
        if let Count::Range([lo, hi]) = c {
            if lo > hi {
                return Err(SimError::Config(format!("empty range [{lo}, {hi}]")));
            }
        }
    }
    let p = &cfg.params;
    check_len("phi", &p.phi, d.q)?;
    check_len("psi", &p.psi, d.u)?;
    check_len("zeta", &p.zeta, d.p)?;
    check_len("mu", &p.mu, d.v)?;
    check_len("sigma_gamma", &p.sigma_gamma, d.p)?;
    check_len("sigma_beta", &p.sigma_beta, d.v)?;
    if p.sigma_gamma.iter().chain(&p.sigma_beta).any(|s| !(*s >= 0.0 && s.is_finite())) {
        return Err(SimError::Config("standard deviations must be finite and non-negative".into()));
    }
    for a in &cfg.attributes {
        match a.dist {
            AttributeDist::Bernoulli { p } if !(0.0..=1.0).contains(&p) => {
                return Err(SimError::Config(format!("attribute {}: p = {p}", a.name)))
            }
            AttributeDist::Normal { sd, .. } if !(sd >= 0.0) => {
                return Err(SimError::Config(format!("attribute {}: sd = {sd}", a.name)))
            }
            _ => {}
        }
    }
    Ok(())
}

fn cluster_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Simulates a whole dataset. Cluster `k` uses its own random stream, so results do not
/// depend on thread scheduling.
pub fn simulate(cfg: &SimConfig) -> Result<Simulation> {
    let d = Dims::new(&cfg.spec, cfg.clusters);
    validate(cfg, &d)?;
    let schema: Vec<String> = cfg.attributes.iter().map(|a| a.name.clone()).collect();
    let eval_s = StatEvaluator::new(&cfg.spec.sender_specs(), Side::Sender, &schema)?;
    let eval_r = StatEvaluator::new(&cfg.spec.receiver_specs(), Side::Receiver, &schema)?;

    let pp = &cfg.params;
    let l_gamma = match &pp.corr_gamma {
        Some(c) => correlation_cholesky(c, d.p)?,
        None => identity(d.p),
    };
    let l_beta = match &pp.corr_beta {
        Some(c) => correlation_cholesky(c, d.v)?,
        None => identity(d.v),
    };
    let mut rng = cluster_rng(cfg.seed, 0);
    let (gammas, z_gamma) = draw_random_effects(&pp.zeta, &pp.sigma_gamma, &l_gamma, d.k, &mut rng)?;
    let (betas, z_beta) = draw_random_effects(&pp.mu, &pp.sigma_beta, &l_beta, d.k, &mut rng)?;
    let truth = ParameterState {
        phi: pp.phi.clone(),
        psi: pp.psi.clone(),
        zeta: pp.zeta.clone(),
        mu: pp.mu.clone(),
        sigma_gamma: pp.sigma_gamma.clone(),
        sigma_beta: pp.sigma_beta.clone(),
        l_gamma,
        l_beta,
        z_gamma,
        z_beta,
    };

    let clusters = (0..d.k)
        .into_par_iter()
        .map(|k| {
            let mut rng = cluster_rng(cfg.seed, k as u64 + 1);
            let n = cfg.actors.draw(&mut rng);
            let m = cfg.events.draw(&mut rng);
            let attributes: Vec<Vec<f64>> = (0..n)
                .map(|_| cfg.attributes.iter().map(|a| draw_attribute(a.dist, &mut rng)).collect())
                .collect();
            let snd = coefs(&cfg.spec.sender, &pp.phi, &gammas[k]);
            let rec = coefs(&cfg.spec.receiver, &pp.psi, &betas[k]);
            let actors = (1..=n).map(|i| format!("a{i}")).collect();
            let roster = ClusterSequence::new_unchecked(format!("c{}", k + 1), actors, attributes, vec![], 0.0);
            simulate_cluster(roster, m, &eval_s, &eval_r, &snd, &rec, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Simulation {
        dataset: Dataset::new_unchecked(clusters, schema),
        truth,
    })
}

fn draw_attribute<R: Rng>(dist: AttributeDist, rng: &mut R) -> f64 {
    match dist {
        AttributeDist::Bernoulli { p } => f64::from(u8::from(rng.random::<f64>() < p)),
        AttributeDist::Normal { mean, sd } => mean + sd * rng.sample::<f64, _>(StandardNormal),
    }
}

fn coefs(terms: &[crate::model::ModelTerm], fixed: &[f64], random: &[f64]) -> Vec<f64> {
    let (mut f, mut r) = (0, 0);
    terms
        .iter()
        .map(|t| match t.effect {
            EffectType::Fixed => {
                f += 1;
                fixed[f - 1]
            }
            EffectType::Random => {
                r += 1;
                random[r - 1]
            }
        })
        .collect()
}

fn linear(x: &[f64], coefs: &[f64], out: &mut [f64]) {
    let p = coefs.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o = x[i * p..(i + 1) * p].iter().zip(coefs).map(|(a, b)| a * b).sum();
    }
}

/// Appends `m` events to the (event-free) `roster`, drawing each waiting time from the
/// total sender rate, then the sender, then the receiver. The window ends at the last
/// event.
pub fn simulate_cluster<R: Rng>(
    roster: ClusterSequence,
    m: usize,
    eval_s: &StatEvaluator,
    eval_r: &StatEvaluator,
    snd: &[f64],
    rec: &[f64],
    rng: &mut R,
) -> Result<ClusterSequence> {
    let n = roster.n_actors();
    let id = roster.id().to_string();
    let fail = |step: usize, what: String| SimError::Intensity {
        cluster: id.clone(),
        step,
        what,
    };
    let mut xs = vec![0.0; n * snd.len()];
    let mut xr = vec![0.0; (n - 1) * rec.len()];
    let mut eta_s = vec![0.0; n];
    let mut eta_r = vec![0.0; n - 1];
    let mut h = History::new(n);
    let mut events = Vec::with_capacity(m);
    let mut t = 0.0f64;
    for step in 0..m {
        eval_s.sender_slice(&roster, &h, &mut xs);
        linear(&xs, snd, &mut eta_s);
        let lam: Vec<f64> = eta_s.iter().map(|e| e.exp()).collect();
        let total: f64 = lam.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(fail(step, format!("total sender rate is {total}")));
        }
        let dt = Exp::new(total).expect("positive finite rate").sample(rng);
        if t + dt <= t {
            return Err(fail(step, format!("waiting time {dt:e} vanishes at t = {t}")));
        }
        t += dt;
        let sender = WeightedIndex::new(&lam)
            .map_err(|e| fail(step, e.to_string()))?
            .sample(rng);

        eval_r.receiver_slice(&roster, &h, sender, &mut xr);
        linear(&xr, rec, &mut eta_r);
        let max = eta_r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(fail(step, "receiver log-weights are not finite".into()));
        }
        let w: Vec<f64> = eta_r.iter().map(|e| (e - max).exp()).collect();
        let pos = WeightedIndex::new(&w)
            .map_err(|e| fail(step, e.to_string()))?
            .sample(rng);
        let receiver = risk_set_actor(sender, pos);
        events.push(IndexedEvent { time: t, sender, receiver });
        h.push(sender, receiver);
    }
    let attributes = (0..n).map(|i| roster.attributes(i).to_vec()).collect();
    Ok(ClusterSequence::new_unchecked(
        id,
        roster.actors().to_vec(),
        attributes,
        events,
        t,
    ))
}
