use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::hypothesis::{Constraint, LinearForm, Relation, Term};
use super::{BfError, HypothesisResult, HypothesisSpec, Result, TestReport};
use crate::sampler::PosteriorDraws;

/// How prior probabilities of orderings are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorMode {
    /// `1/n!` for strict chains over `n` exchangeable scales; sampling otherwise.
    Analytic,
    /// Always by sampling independent half-Cauchy scales.
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceOrderConfig {
    pub prior: PriorMode,
    pub prior_samples: usize,
    pub cauchy_scale: f64,
    pub seed: u64,
}

impl Default for VarianceOrderConfig {
    fn default() -> Self {
        Self {
            prior: PriorMode::Analytic,
            prior_samples: 1_000_000,
            cauchy_scale: 10.0,
            seed: 1,
        }
    }
}

/// Every strict ordering of the named scales, largest first; labels list the order.
pub fn all_orderings(names: &[String]) -> Vec<HypothesisSpec> {
    let mut perms = Vec::new();
    let mut idx: Vec<usize> = (0..names.len()).collect();
    permute(&mut idx, 0, &mut perms);
    perms
        .into_iter()
        .map(|order| {
            let label = order
                .iter()
                .map(|&i| names[i].as_str())
                .collect::<Vec<_>>()
                .join(" > ");
            let constraints = order
                .windows(2)
                .map(|w| Constraint {
                    form: LinearForm {
                        terms: vec![
                            Term { param: w[0], coef: 1.0, abs: false },
                            Term { param: w[1], coef: -1.0, abs: false },
                        ],
                        constant: 0.0,
                    },
                    relation: Relation::Positive,
                })
                .collect();
            HypothesisSpec {
                label,
                constraints,
                complement: false,
            }
        })
        .collect()
}

fn permute(v: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == v.len() {
        out.push(v.clone());
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permute(v, k + 1, out);
        v.swap(k, i);
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

fn half_cauchy<R: Rng>(rng: &mut R, scale: f64) -> f64 {
    let u: f64 = rng.random();
    scale * (std::f64::consts::FRAC_PI_2 * u).tan()
}

/// Prior probability that `h` holds when the `n_params` scales are independent
/// half-Cauchy variables. Returns the probability and its Monte-Carlo standard error
/// (`None` when exact).
pub fn ordering_prior_probability(
    h: &HypothesisSpec,
    n_params: usize,
    others: &[HypothesisSpec],
    cfg: &VarianceOrderConfig,
) -> (f64, Option<f64>) {
    if cfg.prior == PriorMode::Analytic {
        if let Some(chain) = h.strict_chain() {
            return (1.0 / factorial(chain.len()), None);
        }
        if h.complement && others.iter().all(|o| o.strict_chain().is_some()) {
            let sets: Vec<Vec<usize>> = others
                .iter()
                .map(|o| {
                    let mut c = o.strict_chain().unwrap();
                    c.sort();
                    c
                })
                .collect();
            let distinct: std::collections::BTreeSet<_> = others.iter().map(|o| o.strict_chain()).collect();
            // distinct full orderings of one common set are mutually exclusive
            if sets.windows(2).all(|w| w[0] == w[1]) && distinct.len() == others.len() {
                let total: f64 = others.iter().map(|o| 1.0 / factorial(o.strict_chain().unwrap().len())).sum();
                return ((1.0 - total).max(0.0), None);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.prior_samples;
    let mut theta = vec![0.0; n_params];
    let mut hits = 0usize;
    for _ in 0..n {
        for t in theta.iter_mut() {
            *t = half_cauchy(&mut rng, cfg.cauchy_scale);
        }
        if satisfies(h, others, &theta) {
            hits += 1;
        }
    }
    let p = hits as f64 / n as f64;
    (p, Some((p * (1.0 - p) / n as f64).sqrt()))
}

fn satisfies(h: &HypothesisSpec, others: &[HypothesisSpec], theta: &[f64]) -> bool {
    if h.complement {
        !others.iter().any(|o| o.region_contains(theta))
    } else {
        h.region_contains(theta)
    }
}

/// Bayes factors of order constraints on random-effect standard deviations against the
/// unconstrained model: posterior proportion of draws satisfying the constraints over
/// the prior probability.
pub fn test_variance_order(
    draws: &PosteriorDraws,
    names: &[String],
    hypotheses: &[HypothesisSpec],
    cfg: &VarianceOrderConfig,
) -> Result<TestReport> {
    let cols = names
        .iter()
        .map(|n| {
            if !(n.starts_with("sigma_gamma.") || n.starts_with("sigma_beta.")) {
                return Err(BfError::Config(format!(
                    "`{n}` is not a random-effect standard deviation"
                )));
            }
            draws
                .index_of(n)
                .ok_or_else(|| BfError::UnknownParameter(n.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(h) = hypotheses.iter().find(|h| h.has_equality()) {
        return Err(BfError::Config(format!(
            "`{}`: orderings of standard deviations support only `<` and `>`",
            h.label
        )));
    }
    let listed: Vec<HypothesisSpec> = hypotheses.iter().filter(|h| !h.complement).cloned().collect();
    let rows: Vec<Vec<f64>> = draws
        .rows()
        .map(|r| cols.iter().map(|&j| r[j]).collect())
        .collect();
    let n = rows.len();
    if n == 0 {
        return Err(BfError::InsufficientDraws(0));
    }
    let ties = rows
        .iter()
        .filter(|r| (0..r.len()).any(|i| (0..i).any(|j| r[i] == r[j])))
        .count();

    let mut results = Vec::new();
    for (i, h) in hypotheses.iter().enumerate() {
        let hits = rows.iter().filter(|r| satisfies(h, &listed, r)).count();
        let post = hits as f64 / n as f64;
        let sub = VarianceOrderConfig {
            seed: cfg.seed.wrapping_add(i as u64),
            ..*cfg
        };
        let (prior, prior_se) = ordering_prior_probability(h, names.len(), &listed, &sub);
        if prior == 0.0 {
            return Err(BfError::ZeroPrior(h.label.clone()));
        }
        results.push(HypothesisResult {
            label: h.label.clone(),
            bf_unconstrained: post / prior,
            posterior: post,
            prior,
            posterior_se: Some((post * (1.0 - post) / n as f64).sqrt()),
            prior_se,
            zero: hits == 0,
        });
    }
    let mut warnings = Vec::new();
    if ties > 0 {
        warnings.push(format!("{ties} draws have tied standard deviations"));
    }
    Ok(TestReport {
        test: "variance_order".into(),
        parameters: names.to_vec(),
        results,
        evidence: None,
        warnings,
        resolution: Some(1.0 / n as f64),
        ties: Some(ties),
    }
    .finish())
}
