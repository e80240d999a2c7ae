//! Running the sampler on a model and summarizing or storing the draws.

use std::io::{Read, Write};

use serde::Serialize;
use thiserror::Error;

use crate::model::{Dims, Model};
use crate::sampler::diagnostics::quantile;
use crate::sampler::{run_chains, ChainConfig, Init, PosteriorDraws, SamplerError, TransitionStats};

/// Fits abort when more than this share of post-warmup transitions diverge.
pub const MAX_DIVERGENT_FRACTION: f64 = 0.1;

#[derive(Debug, Error)]
pub enum FitError {
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error("draws file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FitError>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q975: f64,
    /// `None` when the diagnostic is undefined (constant column or too few draws).
    pub rhat: Option<f64>,
    pub ess_bulk: Option<f64>,
    pub ess_tail: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSummary {
    pub chains: usize,
    pub iterations: usize,
    pub warmup: usize,
    pub seed: u64,
    pub divergences: usize,
    pub mean_accept_stat: f64,
    pub step_sizes: Vec<f64>,
    pub dims: Dims,
    pub total_actors: usize,
    pub clusters: Vec<String>,
    pub max_rhat: Option<f64>,
    pub min_ess_bulk: Option<f64>,
    pub min_ess_tail: Option<f64>,
    pub parameters: Vec<ParamSummary>,
}

impl FitSummary {
    pub fn parameter(&self, name: &str) -> Option<&ParamSummary> {
        self.parameters.iter().find(|p| p.name == name)
    }
}

/// Posterior mean, sd, equal-tailed 95% interval and convergence diagnostics per column.
pub fn summarize(draws: &PosteriorDraws) -> Vec<ParamSummary> {
    (0..draws.names.len())
        .map(|j| {
            let x = draws.pooled(j);
            let n = x.len() as f64;
            let mean = x.iter().sum::<f64>() / n;
            let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
            let diag = draws.diagnostics(j).ok();
            ParamSummary {
                name: draws.names[j].clone(),
                mean,
                sd,
                q025: quantile(&x, 0.025),
                q975: quantile(&x, 0.975),
                rhat: diag.as_ref().map(|d| d.rhat),
                ess_bulk: diag.as_ref().map(|d| d.ess_bulk),
                ess_tail: diag.as_ref().map(|d| d.ess_tail),
            }
        })
        .collect()
}

fn fold(values: impl Iterator<Item = Option<f64>>, f: fn(f64, f64) -> f64) -> Option<f64> {
    values.flatten().reduce(f)
}

/// Samples the posterior and fails when more than 10% of transitions diverge.
pub fn fit(model: &Model, cfg: &ChainConfig) -> Result<(PosteriorDraws, FitSummary)> {
    let draws = run_chains(model, &Init::default(), cfg)?;
    draws.check_divergences(MAX_DIVERGENT_FRACTION)?;
    let summary = summary_of(model, cfg, &draws);
    Ok((draws, summary))
}

pub fn summary_of(model: &Model, cfg: &ChainConfig, draws: &PosteriorDraws) -> FitSummary {
    let parameters = summarize(draws);
    FitSummary {
        chains: cfg.chains,
        iterations: cfg.iterations,
        warmup: cfg.warmup,
        seed: cfg.seed,
        divergences: draws.divergences(),
        mean_accept_stat: draws.mean_accept_stat(),
        step_sizes: draws.step_sizes.clone(),
        dims: model.dims(),
        total_actors: model.dataset.total_actors(),
        clusters: model.dataset.clusters().iter().map(|c| c.id().to_string()).collect(),
        max_rhat: fold(parameters.iter().map(|p| p.rhat), f64::max),
        min_ess_bulk: fold(parameters.iter().map(|p| p.ess_bulk), f64::min),
        min_ess_tail: fold(parameters.iter().map(|p| p.ess_tail), f64::min),
        parameters,
    }
}

/// `chain,iteration,<names>` with values in round-trip precision.
pub fn write_draws<W: Write>(draws: &PosteriorDraws, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["chain".to_string(), "iteration".to_string()];
    header.extend(draws.names.iter().cloned());
    wtr.write_record(&header)?;
    for (c, chain) in draws.draws.iter().enumerate() {
        for (i, row) in chain.iter().enumerate() {
            let mut rec = vec![c.to_string(), i.to_string()];
            rec.extend(row.iter().map(|v| format!("{v}")));
            wtr.write_record(&rec)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_sampler_stats<W: Write>(draws: &PosteriorDraws, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "chain",
        "iteration",
        "accept_stat",
        "tree_depth",
        "n_leapfrog",
        "divergent",
        "step_size",
        "energy",
        "logp",
    ])?;
    for (c, chain) in draws.stats.iter().enumerate() {
        for (i, s) in chain.iter().enumerate() {
            wtr.write_record([
                c.to_string(),
                i.to_string(),
                format!("{}", s.accept_stat),
                s.tree_depth.to_string(),
                s.n_leapfrog.to_string(),
                u8::from(s.divergent).to_string(),
                format!("{}", s.step_size),
                format!("{}", s.energy),
                format!("{}", s.logp),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a file written by [`write_draws`]. Chains must be numbered `0..C` and appear
/// in order; sampler statistics are left empty.
pub fn read_draws<R: Read>(r: R) -> Result<PosteriorDraws> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    if header.len() < 3 || &header[0] != "chain" || &header[1] != "iteration" {
        return Err(FitError::Parse {
            line: 1,
            msg: "expected header `chain,iteration,<parameters>`".into(),
        });
    }
    let names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
    let mut draws: Vec<Vec<Vec<f64>>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let bad = |msg: String| FitError::Parse { line, msg };
        let chain: usize = rec[0].parse().map_err(|_| bad(format!("bad chain `{}`", &rec[0])))?;
        if chain == draws.len() {
            draws.push(Vec::new());
        } else if chain + 1 != draws.len() {
            return Err(bad(format!("chain {chain} out of order")));
        }
        let row = rec
            .iter()
            .skip(2)
            .map(|v| v.parse::<f64>().map_err(|_| bad(format!("bad number `{v}`"))))
            .collect::<Result<Vec<_>>>()?;
        draws[chain].push(row);
    }
    if draws.is_empty() {
        return Err(FitError::Parse { line: 1, msg: "no draws".into() });
    }
    let n = draws.len();
    Ok(PosteriorDraws {
        names,
        draws,
        stats: vec![Vec::<TransitionStats>::new(); n],
        step_sizes: vec![f64::NAN; n],
        inv_metrics: vec![Vec::new(); n],
    })
}
