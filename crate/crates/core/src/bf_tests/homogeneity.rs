use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::gaussian::mvn_log_pdf;
use super::{BfError, GaussianApprox, Result};
use crate::sampler::diagnostics::quantile;
use crate::sampler::PosteriorDraws;
use crate::statistics::Side;

/// Point estimate of the random-effect variance used in the contrast prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlugIn {
    #[default]
    Mean,
    Median,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomogeneityResult {
    pub effect: String,
    pub side: Side,
    pub n_clusters: usize,
    pub sigma2: f64,
    pub log_bf01: f64,
    pub bf01: f64,
    /// `P(H0 | data)` under equal prior odds.
    pub posterior_prob_h0: f64,
    /// Positive evidence that the effect varies across clusters (`BF01 < 1/3`).
    pub random: bool,
}

/// `log BF01` for "all cluster effects equal" from the Gaussian approximation of the
/// adjacent contrasts and the variance estimate `sigma2`.
///
/// The contrast prior is `N(0, Λ)` with `Λ_jj = 2σ²` and `Λ_j,j±1 = -σ²`.
pub fn homogeneity_bf_from_moments(xi: &GaussianApprox, sigma2: f64) -> Result<f64> {
    let d = xi.dim();
    if d == 0 {
        return Err(BfError::NoContrast);
    }
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(BfError::Config(format!("variance estimate must be positive, got {sigma2}")));
    }
    let zeros = vec![0.0; d];
    let post = xi.log_pdf(&zeros)?;
    let lambda = DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            2.0 * sigma2
        } else if i.abs_diff(j) == 1 {
            -sigma2
        } else {
            0.0
        }
    });
    let prior = mvn_log_pdf(&zeros, &zeros, &lambda)?;
    Ok(post - prior)
}

/// Savage-Dickey test of whether the cluster-level coefficients of `effect` coincide.
pub fn test_homogeneity(
    draws: &PosteriorDraws,
    effect: &str,
    side: Side,
    plug_in: PlugIn,
) -> Result<HomogeneityResult> {
    let (cluster_prefix, sd_prefix) = match side {
        Side::Sender => ("gamma.", "sigma_gamma."),
        Side::Receiver => ("beta.", "sigma_beta."),
    };
    let suffix = format!(".{effect}");
    let cols: Vec<usize> = draws
        .names
        .iter()
        .enumerate()
        .filter(|(_, n)| {
            n.starts_with(cluster_prefix)
                && n.ends_with(&suffix)
                && n.len() > cluster_prefix.len() + suffix.len()
        })
        .map(|(j, _)| j)
        .collect();
    let sd_name = format!("{sd_prefix}{effect}");
    let sd_col = draws
        .index_of(&sd_name)
        .ok_or_else(|| BfError::UnknownParameter(sd_name.clone()))?;
    if cols.len() < 2 {
        return Err(BfError::NoContrast);
    }
    let pooled: Vec<Vec<f64>> = cols.iter().map(|&j| draws.pooled(j)).collect();
    let contrasts: Vec<Vec<f64>> = pooled
        .windows(2)
        .map(|w| w[1].iter().zip(&w[0]).map(|(b, a)| b - a).collect())
        .collect();
    let xi = GaussianApprox::from_columns(&contrasts)?;
    let var_draws: Vec<f64> = draws.pooled(sd_col).iter().map(|s| s * s).collect();
    let sigma2 = match plug_in {
        PlugIn::Mean => var_draws.iter().sum::<f64>() / var_draws.len() as f64,
        PlugIn::Median => quantile(&var_draws, 0.5),
    };
    let log_bf01 = homogeneity_bf_from_moments(&xi, sigma2)?;
    let bf01 = log_bf01.exp();
    // P = 1 / (1 + 1/BF) evaluated stably
    let posterior_prob_h0 = 1.0 / (1.0 + (-log_bf01).exp());
    Ok(HomogeneityResult {
        effect: effect.to_string(),
        side,
        n_clusters: cols.len(),
        sigma2,
        log_bf01,
        bf01,
        posterior_prob_h0,
        random: bf01 < 1.0 / 3.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_cluster_density_ratio() {
        let xi = GaussianApprox::new(vec![0.0], vec![0.01]).unwrap();
        let bf = homogeneity_bf_from_moments(&xi, 1.0).unwrap().exp();
        assert!((bf - 200f64.sqrt()).abs() < 1e-10);
        assert!((bf - 14.142).abs() < 1e-3);
        let far = GaussianApprox::new(vec![5.0], vec![0.01]).unwrap();
        assert!(homogeneity_bf_from_moments(&far, 1.0).unwrap().exp() < 1e-6);
    }

    #[test]
    fn monotone_in_contrast_variance_and_mean() {
        let mut last = 0.0;
        for v in [1.0, 0.3, 0.1, 0.01, 0.001] {
            let xi = GaussianApprox::new(vec![0.0, 0.0], vec![v, 0.0, 0.0, v]).unwrap();
            let b = homogeneity_bf_from_moments(&xi, 1.0).unwrap();
            assert!(b > last);
            last = b;
        }
        let mut last = f64::INFINITY;
        for m in [0.0, 0.5, 1.0, 2.0, 4.0] {
            let xi = GaussianApprox::new(vec![m, 0.0], vec![0.1, 0.0, 0.0, 0.1]).unwrap();
            let b = homogeneity_bf_from_moments(&xi, 1.0).unwrap();
            assert!(b < last);
            last = b;
        }
    }
}
