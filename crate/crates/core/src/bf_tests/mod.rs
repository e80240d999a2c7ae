//! Bayes-factor tests on posterior draws: homogeneity of random effects, orderings of
//! random-effect standard deviations, and fractional Bayes factors for constrained
//! hypotheses on fixed effects and random-effect means.

mod fractional;
pub mod gaussian;
mod homogeneity;
pub mod hypothesis;
mod variance_order;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fractional::{fractional_bf, fractional_bf_gaussian, prior_center, Fraction, TestConfig};
pub use gaussian::GaussianApprox;
pub use homogeneity::{homogeneity_bf_from_moments, test_homogeneity, HomogeneityResult, PlugIn};
pub use hypothesis::{parse_hypotheses, Constraint, HypothesisSpec, LinearForm, Relation, Term};
pub use variance_order::{
    all_orderings, ordering_prior_probability, test_variance_order, PriorMode, VarianceOrderConfig,
};

use crate::statistics::Side;

#[derive(Debug, Error, PartialEq)]
pub enum BfError {
    #[error("need at least 2 draws, got {0}")]
    InsufficientDraws(usize),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("hypothesis file line {line}: {msg}")]
    Hypothesis { line: usize, msg: String },
    #[error("homogeneity test needs at least 2 clusters")]
    NoContrast,
    #[error("{0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("covariance is not positive semidefinite: {0}")]
    NotPsd(String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("Bayes factors must be positive to form an evidence matrix ({0})")]
    NonPositive(String),
    #[error("hypothesis `{0}` has zero prior probability")]
    ZeroPrior(String),
}

pub type Result<T> = std::result::Result<T, BfError>;

/// Pairwise Bayes factors among hypotheses and their posterior probabilities under
/// equal prior odds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvidenceMatrix {
    pub labels: Vec<String>,
    /// Each hypothesis against the unconstrained model.
    pub bf_unconstrained: Vec<f64>,
    /// `bf[i][j]` is the Bayes factor of hypothesis `i` against `j`.
    pub bf: Vec<Vec<f64>>,
    pub posterior_probs: Vec<f64>,
}

/// Builds the evidence matrix from Bayes factors against a common unconstrained model.
pub fn evidence_matrix(labels: &[String], bf_u: &[f64]) -> Result<EvidenceMatrix> {
    if labels.len() != bf_u.len() {
        return Err(BfError::Shape(format!("{} labels for {} Bayes factors", labels.len(), bf_u.len())));
    }
    if let Some(i) = bf_u.iter().position(|b| !(b.is_finite() && *b > 0.0)) {
        return Err(BfError::NonPositive(format!("{} = {}", labels[i], bf_u[i])));
    }
    let n = bf_u.len();
    // log scale keeps ratios of very large or small factors exact
    let logs: Vec<f64> = bf_u.iter().map(|b| b.ln()).collect();
    let bf = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { (logs[i] - logs[j]).exp() }).collect())
        .collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(EvidenceMatrix {
        labels: labels.to_vec(),
        bf_unconstrained: bf_u.to_vec(),
        bf,
        posterior_probs: w.iter().map(|x| x / total).collect(),
    })
}

/// Fraction of the data used for the default prior of one model part:
/// `(P(P+1)/2 + P + Q) / ΣN_k`, with `P` random and `Q` fixed effects.
pub fn compute_fraction(random: usize, fixed: usize, total_actors: usize) -> Result<f64> {
    let num = random * (random + 1) / 2 + random + fixed;
    let b = num as f64 / total_actors as f64;
    if num == 0 {
        return Err(BfError::Config("fraction is 0: the model part has no parameters to test".into()));
    }
    if !(b < 1.0) {
        return Err(BfError::Config(format!(
            "fraction {num}/{total_actors} is not below 1: too many parameters for the number of actors"
        )));
    }
    Ok(b)
}

/// Sender and receiver fractions for a model with sender `P`/`Q` and receiver `V`/`U`
/// random/fixed effects.
pub fn compute_fractions(p: usize, q: usize, v: usize, u: usize, total_actors: usize) -> Result<(f64, f64)> {
    Ok((
        compute_fraction(p, q, total_actors)?,
        compute_fraction(v, u, total_actors)?,
    ))
}

/// Which model part a qualified parameter name belongs to, by prefix.
pub fn side_of(name: &str) -> Option<Side> {
    let prefix = name.split('.').next()?;
    match prefix {
        "phi" | "zeta" | "sigma_gamma" | "gamma" => Some(Side::Sender),
        "psi" | "mu" | "sigma_beta" | "beta" => Some(Side::Receiver),
        _ => None,
    }
}

/// Result for one hypothesis against the unconstrained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisResult {
    pub label: String,
    pub bf_unconstrained: f64,
    /// Posterior probability (or density, for equality constraints) of the constraints.
    pub posterior: f64,
    /// Prior probability (or density) of the constraints.
    pub prior: f64,
    /// Monte-Carlo standard errors of `posterior` and `prior`, when estimated by sampling.
    pub posterior_se: Option<f64>,
    pub prior_se: Option<f64>,
    /// True when no posterior draw satisfied the constraints.
    pub zero: bool,
}

/// Bayes factors for a set of hypotheses plus the evidence matrix over those with
/// positive Bayes factors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestReport {
    pub test: String,
    pub parameters: Vec<String>,
    pub results: Vec<HypothesisResult>,
    pub evidence: Option<EvidenceMatrix>,
    pub warnings: Vec<String>,
    /// Smallest nonzero proportion resolvable with the number of draws.
    pub resolution: Option<f64>,
    /// Draws in which two referenced parameters were exactly equal.
    pub ties: Option<usize>,
}

impl TestReport {
    pub(crate) fn finish(mut self) -> Self {
        let positive: Vec<&HypothesisResult> = self
            .results
            .iter()
            .filter(|r| r.bf_unconstrained > 0.0 && r.bf_unconstrained.is_finite())
            .collect();
        let dropped: Vec<&str> = self
            .results
            .iter()
            .filter(|r| !(r.bf_unconstrained > 0.0 && r.bf_unconstrained.is_finite()))
            .map(|r| r.label.as_str())
            .collect();
        if !dropped.is_empty() {
            self.warnings.push(format!(
                "Bayes factor 0 for {}: no posterior draw satisfies the constraints; excluded from the evidence matrix",
                dropped.join(", ")
            ));
        }
        if !positive.is_empty() {
            let labels: Vec<String> = positive.iter().map(|r| r.label.clone()).collect();
            let bfs: Vec<f64> = positive.iter().map(|r| r.bf_unconstrained).collect();
            self.evidence = evidence_matrix(&labels, &bfs).ok();
        }
        self
    }

    pub fn result(&self, label: &str) -> Option<&HypothesisResult> {
        self.results.iter().find(|r| r.label == label)
    }
}
