//! Adaptive NUTS over an unconstrained log density, run as independent chains.

pub mod adapt;
pub mod diagnostics;
pub mod nuts;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Model;
use adapt::{MetricAdaptation, StepSizeAdaptation};
pub use diagnostics::{diagnose, ess, split_rhat, DiagError, EssMode, ParamDiagnostics};
use nuts::{Nuts, Point};
pub use nuts::TransitionStats;

const INIT_ATTEMPTS: usize = 100;

#[derive(Debug, Error, PartialEq)]
pub enum SamplerError {
    #[error("chain {chain}: no finite starting point after {attempts} attempts")]
    Init { chain: usize, attempts: usize },
    #[error("chain {chain}: {msg}")]
    StepSize { chain: usize, msg: String },
    #[error("invalid sampler configuration: {0}")]
    Config(String),
    #[error("{divergent} of {total} post-warmup iterations diverged")]
    TooManyDivergences { divergent: usize, total: usize },
}

/// An unnormalized log density on `R^dim` with gradient.
pub trait Target: Sync {
    fn dim(&self) -> usize;

    /// Writes the gradient into `grad` and returns the log density, or `None` where it
    /// cannot be evaluated.
    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> Option<f64>;

    fn names(&self) -> Vec<String> {
        (0..self.dim()).map(|i| format!("x{i}")).collect()
    }

    /// Maps an unconstrained point to the reported coordinates.
    fn constrained(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }
}

impl Target for Model {
    fn dim(&self) -> usize {
        self.layout().len
    }

    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> Option<f64> {
        self.log_posterior_grad_into(x, grad).ok()
    }

    fn names(&self) -> Vec<String> {
        self.output_names()
    }

    fn constrained(&self, x: &[f64]) -> Vec<f64> {
        self.constrained_row(x)
            .expect("unconstrained vector has the model's length")
    }
}

/// Starting points for the chains.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// Each coordinate uniform on `[-r, r]`.
    Uniform(f64),
    /// The same point for every chain.
    Fixed(Vec<f64>),
}

impl Default for Init {
    fn default() -> Self {
        Init::Uniform(2.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    /// Total iterations per chain, warmup included.
    pub iterations: usize,
    pub warmup: usize,
    pub seed: u64,
    pub target_accept: f64,
    pub max_tree_depth: usize,
    pub chains: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            warmup: 1000,
            seed: 1,
            target_accept: 0.8,
            max_tree_depth: 10,
            chains: 4,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        let bad = |m: &str| Err(SamplerError::Config(m.to_string()));
        if self.iterations == 0 {
            return bad("iterations must be positive");
        }
        if self.warmup >= self.iterations {
            return bad("warmup must be smaller than iterations");
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return bad("target_accept must lie in (0, 1)");
        }
        if self.max_tree_depth == 0 || self.chains == 0 {
            return bad("max_tree_depth and chains must be positive");
        }
        Ok(())
    }

    pub fn kept(&self) -> usize {
        self.iterations - self.warmup
    }
}

/// Post-warmup draws in reported coordinates, `[chain][iteration][parameter]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub names: Vec<String>,
    pub draws: Vec<Vec<Vec<f64>>>,
    pub stats: Vec<Vec<TransitionStats>>,
    /// Final adapted step size and inverse metric of each chain.
    pub step_sizes: Vec<f64>,
    pub inv_metrics: Vec<Vec<f64>>,
}

impl PosteriorDraws {
    pub fn n_chains(&self) -> usize {
        self.draws.len()
    }

    pub fn n_kept(&self) -> usize {
        self.draws.first().map_or(0, Vec::len)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Per-chain series of one parameter.
    pub fn chains_of(&self, j: usize) -> Vec<Vec<f64>> {
        self.draws
            .iter()
            .map(|c| c.iter().map(|row| row[j]).collect())
            .collect()
    }

    /// All draws of one parameter, chains concatenated.
    pub fn pooled(&self, j: usize) -> Vec<f64> {
        self.draws.iter().flatten().map(|row| row[j]).collect()
    }

    /// Rows of all chains concatenated.
    pub fn rows(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.draws.iter().flatten()
    }

    pub fn divergences(&self) -> usize {
        self.stats.iter().flatten().filter(|s| s.divergent).count()
    }

    pub fn mean_accept_stat(&self) -> f64 {
        let all: Vec<f64> = self.stats.iter().flatten().map(|s| s.accept_stat).collect();
        all.iter().sum::<f64>() / all.len().max(1) as f64
    }

    /// Fails when more than `max_fraction` of the post-warmup iterations diverged.
    pub fn check_divergences(&self, max_fraction: f64) -> Result<(), SamplerError> {
        let total = self.n_chains() * self.n_kept();
        let divergent = self.divergences();
        if divergent as f64 > max_fraction * total as f64 {
            Err(SamplerError::TooManyDivergences { divergent, total })
        } else {
            Ok(())
        }
    }

    pub fn diagnostics(&self, j: usize) -> Result<ParamDiagnostics, DiagError> {
        diagnose(&self.chains_of(j))
    }
}

fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

fn initial_point<T: Target + ?Sized>(
    target: &T,
    init: &Init,
    chain: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Point, SamplerError> {
    let d = target.dim();
    for _ in 0..INIT_ATTEMPTS {
        let q = match init {
            Init::Uniform(r) => (0..d).map(|_| rng.random_range(-*r..=*r)).collect(),
            Init::Fixed(q) => q.clone(),
        };
        let z = Point::new(target, q);
        if z.logp.is_finite() && z.grad.iter().all(|g| g.is_finite()) {
            return Ok(z);
        }
        if matches!(init, Init::Fixed(_)) {
            break;
        }
    }
    Err(SamplerError::Init {
        chain,
        attempts: INIT_ATTEMPTS,
    })
}

struct ChainOutput {
    draws: Vec<Vec<f64>>,
    stats: Vec<TransitionStats>,
    step_size: f64,
    inv_metric: Vec<f64>,
}

fn run_chain<T: Target + ?Sized>(
    target: &T,
    init: &Init,
    cfg: &ChainConfig,
    chain: usize,
) -> Result<ChainOutput, SamplerError> {
    let mut rng = chain_rng(cfg.seed, chain);
    let mut z = initial_point(target, init, chain, &mut rng)?;
    let dim = target.dim();
    let mut nuts = Nuts::new(target, vec![1.0; dim], 1.0, cfg.max_tree_depth);
    let step_err = |msg| SamplerError::StepSize { chain, msg };
    nuts.init_step_size(&z, &mut rng).map_err(step_err)?;

    let mut step = StepSizeAdaptation::new(cfg.target_accept);
    step.set_mu((10.0 * nuts.step_size).ln());
    let mut metric = MetricAdaptation::new(dim, cfg.warmup);

    for _ in 0..cfg.warmup {
        let s = nuts.transition(&mut z, &mut rng);
        nuts.step_size = step.learn(s.accept_stat);
        if metric.learn(&mut nuts.inv_metric, &z.q) {
            nuts.init_step_size(&z, &mut rng).map_err(step_err)?;
            step.set_mu((10.0 * nuts.step_size).ln());
            step.restart();
        }
    }
    if cfg.warmup > 0 {
        nuts.step_size = step.final_step_size();
    }

    let kept = cfg.kept();
    let mut draws = Vec::with_capacity(kept);
    let mut stats = Vec::with_capacity(kept);
    for _ in 0..kept {
        let s = nuts.transition(&mut z, &mut rng);
        draws.push(target.constrained(&z.q));
        stats.push(s);
    }
    Ok(ChainOutput {
        draws,
        stats,
        step_size: nuts.step_size,
        inv_metric: nuts.inv_metric,
    })
}

/// Runs `cfg.chains` independent adaptive NUTS chains in parallel.
///
/// Chain `c` uses the ChaCha stream `c` of `cfg.seed`, so results do not depend on
/// scheduling.
pub fn run_chains<T: Target + ?Sized>(
    target: &T,
    init: &Init,
    cfg: &ChainConfig,
) -> Result<PosteriorDraws, SamplerError> {
    cfg.validate()?;
    if let Init::Fixed(q) = init {
        if q.len() != target.dim() {
            return Err(SamplerError::Config(format!(
                "initial point has length {}, target has dimension {}",
                q.len(),
                target.dim()
            )));
        }
    }
    let outputs = (0..cfg.chains)
        .into_par_iter()
        .map(|c| run_chain(target, init, cfg, c))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = PosteriorDraws {
        names: target.names(),
        draws: Vec::with_capacity(cfg.chains),
        stats: Vec::with_capacity(cfg.chains),
        step_sizes: Vec::with_capacity(cfg.chains),
        inv_metrics: Vec::with_capacity(cfg.chains),
    };
    for o in outputs {
        out.draws.push(o.draws);
        out.stats.push(o.stats);
        out.step_sizes.push(o.step_size);
        out.inv_metrics.push(o.inv_metric);
    }
    Ok(out)
}
