//! Rank-normalized split R-hat and bulk/tail effective sample size.

use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DiagError {
    #[error("chains are constant; convergence diagnostics are undefined")]
    ConstantChain,
    #[error("need at least {needed} draws per split chain, got {got}")]
    TooFewDraws { needed: usize, got: usize },
    #[error("chains have different lengths")]
    Ragged,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EssMode {
    Bulk,
    Tail,
}

fn check(chains: &[Vec<f64>]) -> Result<usize, DiagError> {
    let n = chains.first().map_or(0, Vec::len);
    if chains.iter().any(|c| c.len() != n) {
        return Err(DiagError::Ragged);
    }
    if n / 2 < 4 {
        return Err(DiagError::TooFewDraws {
            needed: 4,
            got: n / 2,
        });
    }
    let first = chains[0][0];
    if chains.iter().flatten().all(|&x| x == first) {
        return Err(DiagError::ConstantChain);
    }
    Ok(n)
}

/// Halves every chain; the middle draw of an odd-length chain is dropped.
pub fn split_chains(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let half = c.len() / 2;
        out.push(c[..half].to_vec());
        out.push(c[c.len() - half..].to_vec());
    }
    out
}

/// Replaces every draw by the normal score of its pooled rank (ties averaged).
pub fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let total: usize = chains.iter().map(Vec::len).sum();
    let mut idx: Vec<(f64, usize, usize)> = chains
        .iter()
        .enumerate()
        .flat_map(|(c, v)| v.iter().enumerate().map(move |(i, &x)| (x, c, i)))
        .collect();
    idx.sort_by(|a, b| a.0.total_cmp(&b.0));
    let normal = Normal::standard();
    let mut out: Vec<Vec<f64>> = chains.iter().map(|c| vec![0.0; c.len()]).collect();
    let s = total as f64;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && idx[j + 1].0 == idx[i].0 {
            j += 1;
        }
        // average 1-based rank of the tie group
        let rank = (i + j) as f64 / 2.0 + 1.0;
        let z = normal.inverse_cdf((rank - 0.375) / (s + 0.25));
        for item in &idx[i..=j] {
            out[item.1][item.2] = z;
        }
        i = j + 1;
    }
    out
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Classic potential scale reduction over the given chains.
pub fn basic_rhat(chains: &[Vec<f64>]) -> f64 {
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let var_between = n * sample_var(&means);
    let var_within = mean(&chains.iter().map(|c| sample_var(c)).collect::<Vec<_>>());
    ((var_between / var_within + n - 1.0) / n).sqrt()
}

/// Rank-normalized split R-hat: the larger of the bulk and folded-tail versions.
pub fn split_rhat(chains: &[Vec<f64>]) -> Result<f64, DiagError> {
    check(chains)?;
    let split = split_chains(chains);
    let bulk = basic_rhat(&rank_normalize(&split));
    let pooled: Vec<f64> = chains.iter().flatten().copied().collect();
    let med = quantile(&pooled, 0.5);
    let folded: Vec<Vec<f64>> = split
        .iter()
        .map(|c| c.iter().map(|x| (x - med).abs()).collect())
        .collect();
    let tail = if folded.iter().flatten().all(|&x| x == folded[0][0]) {
        bulk
    } else {
        basic_rhat(&rank_normalize(&folded))
    };
    Ok(bulk.max(tail))
}

/// Sample quantile with linear interpolation between order statistics.
pub fn quantile(x: &[f64], prob: f64) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Biased autocovariance at `lag` of one chain.
fn autocov(x: &[f64], m: f64, lag: usize) -> f64 {
    let n = x.len();
    (0..n - lag).map(|i| (x[i] - m) * (x[i + lag] - m)).sum::<f64>() / n as f64
}

/// Multi-chain ESS with Geyer's initial monotone sequence; chains are used as given.
pub fn basic_ess(chains: &[Vec<f64>]) -> Result<f64, DiagError> {
    let m = chains.len();
    let n = chains[0].len();
    if n < 3 {
        return Err(DiagError::TooFewDraws { needed: 3, got: n });
    }
    let first = chains[0][0];
    if chains.iter().flatten().all(|&x| x == first) {
        return Err(DiagError::ConstantChain);
    }
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let acov = |lag: usize| -> f64 {
        chains
            .iter()
            .zip(&means)
            .map(|(c, &mu)| autocov(c, mu, lag))
            .sum::<f64>()
            / m as f64
    };
    let nf = n as f64;
    let mean_var = acov(0) * nf / (nf - 1.0);
    let mut var_plus = mean_var * (nf - 1.0) / nf;
    if m > 1 {
        var_plus += sample_var(&means);
    }
    let rho_at = |lag: usize| 1.0 - (mean_var - acov(lag)) / var_plus;

    let mut rho = vec![0.0; n];
    rho[0] = 1.0;
    let mut even = 1.0;
    let mut odd = rho_at(1);
    rho[1] = odd;
    let mut t = 0;
    while t + 5 < n && !(even + odd).is_nan() && even + odd > 0.0 {
        t += 2;
        even = rho_at(t);
        odd = rho_at(t + 1);
        if even + odd >= 0.0 {
            rho[t] = even;
            rho[t + 1] = odd;
        }
    }
    let max_t = t;
    if even > 0.0 {
        rho[max_t] = even;
    }
    let mut t = 0;
    while t + 4 <= max_t {
        t += 2;
        if rho[t] + rho[t + 1] > rho[t - 2] + rho[t - 1] {
            rho[t] = (rho[t - 2] + rho[t - 1]) / 2.0;
            rho[t + 1] = rho[t];
        }
    }
    let total = (m * n) as f64;
    let tau = -1.0 + 2.0 * rho[..max_t].iter().sum::<f64>() + rho[max_t];
    let tau = tau.max(1.0 / total.log10());
    Ok(total / tau)
}

/// Effective sample size of split chains: rank-normalized for bulk, minimum over the
/// 5% and 95% quantile indicators for tail.
pub fn ess(chains: &[Vec<f64>], mode: EssMode) -> Result<f64, DiagError> {
    check(chains)?;
    let split = split_chains(chains);
    match mode {
        EssMode::Bulk => basic_ess(&rank_normalize(&split)),
        EssMode::Tail => {
            let pooled: Vec<f64> = chains.iter().flatten().copied().collect();
            let mut best = f64::INFINITY;
            for prob in [0.05, 0.95] {
                let q = quantile(&pooled, prob);
                let ind: Vec<Vec<f64>> = split
                    .iter()
                    .map(|c| c.iter().map(|&x| f64::from(u8::from(x <= q))).collect())
                    .collect();
                best = best.min(basic_ess(&ind)?);
            }
            Ok(best)
        }
    }
}

/// Per-parameter convergence summary.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ParamDiagnostics {
    pub rhat: f64,
    pub ess_bulk: f64,
    pub ess_tail: f64,
}

pub fn diagnose(chains: &[Vec<f64>]) -> Result<ParamDiagnostics, DiagError> {
    Ok(ParamDiagnostics {
        rhat: split_rhat(chains)?,
        ess_bulk: ess(chains, EssMode::Bulk)?,
        ess_tail: ess(chains, EssMode::Tail)?,
    })
}
