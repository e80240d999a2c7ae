use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::gaussian::PsdSampler;
use super::hypothesis::Relation;
use super::{
    compute_fraction, BfError, GaussianApprox, HypothesisResult, HypothesisSpec, Result, TestReport,
};
use crate::model::Dims;
use crate::sampler::PosteriorDraws;
use crate::statistics::Side;

/// A data fraction: a number in (0, 1) or derived from the model size.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Fraction {
    #[default]
    Auto,
    Value(f64),
}

impl Serialize for Fraction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Fraction::Auto => s.serialize_str("auto"),
            Fraction::Value(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Fraction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Fraction::Value(v)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl std::str::FromStr for Fraction {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Fraction::Auto);
        }
        s.parse::<f64>()
            .map(Fraction::Value)
            .map_err(|_| format!("expected `auto` or a number, got `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TestConfig {
    pub b_snd: Fraction,
    pub b_rec: Fraction,
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            b_snd: Fraction::Auto,
            b_rec: Fraction::Auto,
            mc_samples: 1_000_000,
            seed: 1,
        }
    }
}

fn resolve(f: Fraction, random: usize, fixed: usize, total: Option<usize>) -> Result<f64> {
    match f {
        Fraction::Value(b) if b > 0.0 && b < 1.0 => Ok(b),
        Fraction::Value(b) => Err(BfError::Config(format!("fraction must lie in (0, 1), got {b}"))),
        Fraction::Auto => match total {
            Some(t) => compute_fraction(random, fixed, t),
            None => Err(BfError::Config("automatic fraction needs the model dimensions".into())),
        },
    }
}

/// Fractional Bayes factors for hypotheses on fixed effects and random-effect means,
/// computed from the draws' Gaussian approximation.
///
/// `model` supplies the dimensions and total actor count for automatic fractions.
pub fn fractional_bf(
    draws: &PosteriorDraws,
    names: &[String],
    hypotheses: &[HypothesisSpec],
    cfg: &TestConfig,
    model: Option<(Dims, usize)>,
) -> Result<TestReport> {
    let total = model.map(|m| m.1);
    let dims = model.map(|m| m.0);
    let mut b = Vec::with_capacity(names.len());
    for n in names {
        let prefix = n.split('.').next().unwrap_or("");
        let side = match prefix {
            "phi" | "zeta" => Side::Sender,
            "psi" | "mu" => Side::Receiver,
            _ => {
                return Err(BfError::Config(format!(
                    "`{n}` is not a fixed effect or random-effect mean"
                )))
            }
        };
        b.push(match side {
            Side::Sender => resolve(cfg.b_snd, dims.map_or(0, |d| d.p), dims.map_or(0, |d| d.q), total)?,
            Side::Receiver => resolve(cfg.b_rec, dims.map_or(0, |d| d.v), dims.map_or(0, |d| d.u), total)?,
        });
    }
    let post = GaussianApprox::from_draws(draws, names)?;
    fractional_bf_gaussian(&post, &b, names, hypotheses, cfg.mc_samples, cfg.seed)
}

/// Point where every constraint of every hypothesis holds with equality, nearest to
/// the posterior mean; parameters that appear inside `|·|` are set to 0.
pub fn prior_center(mean: &[f64], hypotheses: &[HypothesisSpec]) -> Vec<f64> {
    let d = mean.len();
    let zeroed: BTreeSet<usize> = hypotheses.iter().flat_map(|h| h.abs_params()).collect();
    let free: Vec<usize> = (0..d).filter(|i| !zeroed.contains(i)).collect();
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for h in hypotheses {
        for c in &h.constraints {
            let mut row = vec![0.0; free.len()];
            for t in &c.form.terms {
                if let Some(k) = free.iter().position(|&f| f == t.param) {
                    row[k] += t.coef;
                }
            }
            if row.iter().any(|v| *v != 0.0) {
                rows.push((row, c.form.constant));
            }
        }
    }
    let mut center = vec![0.0; d];
    let m_free = DVector::from_iterator(free.len(), free.iter().map(|&i| mean[i]));
    let projected = if rows.is_empty() {
        m_free
    } else {
        let a = DMatrix::from_fn(rows.len(), free.len(), |i, j| rows[i].0[j]);
        let c = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
        let pinv = a.clone().pseudo_inverse(1e-12).expect("pseudo-inverse with positive tolerance");
        &m_free - pinv * (&a * &m_free + c)
    };
    for (k, &i) in free.iter().enumerate() {
        center[i] = projected[k];
    }
    center
}

/// Probability estimate with an optional Monte-Carlo standard error.
#[derive(Debug, Clone, Copy)]
struct Prob {
    p: f64,
    se: Option<f64>,
}

fn mc_orthant(mean: &DVector<f64>, cov: &DMatrix<f64>, lower: &[f64], n: usize, seed: u64) -> Prob {
    let sampler = PsdSampler::new(mean, cov);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = mean.len();
    let (mut z, mut y) = (vec![0.0; d], vec![0.0; d]);
    let mut hits = 0usize;
    for _ in 0..n {
        sampler.sample_into(&mut rng, &mut z, &mut y);
        if y.iter().zip(lower).all(|(a, b)| a > b) {
            hits += 1;
        }
    }
    let p = hits as f64 / n as f64;
    Prob { p, se: Some((p * (1.0 - p) / n as f64).sqrt()) }
}

/// `P(G θ > g)` for `θ ~ N(mean, cov)`.
fn region_prob(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    g_mat: &DMatrix<f64>,
    g: &[f64],
    n: usize,
    seed: u64,
) -> Prob {
    if g_mat.nrows() == 0 {
        return Prob { p: 1.0, se: None };
    }
    let ym = g_mat * mean;
    let yc = g_mat * cov * g_mat.transpose();
    if g_mat.nrows() == 1 {
        let sd = yc[(0, 0)].max(0.0).sqrt();
        let p = if sd <= 1e-14 * (1.0 + ym[0].abs()) {
            f64::from(u8::from(ym[0] > g[0]))
        } else {
            Normal::standard().cdf((ym[0] - g[0]) / sd)
        };
        return Prob { p, se: None };
    }
    mc_orthant(&ym, &(&yc + yc.transpose()).scale(0.5), g, n, seed)
}

/// `P(θ in region)` by sampling θ directly; used for regions with `|·|` terms.
fn mc_region<F: Fn(&[f64]) -> bool>(gauss: &GaussianApprox, inside: F, n: usize, seed: u64) -> Prob {
    let sampler = PsdSampler::new(&DVector::from_column_slice(&gauss.mean), &gauss.cov_matrix());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = gauss.dim();
    let (mut z, mut th) = (vec![0.0; d], vec![0.0; d]);
    let mut hits = 0usize;
    for _ in 0..n {
        sampler.sample_into(&mut rng, &mut z, &mut th);
        if inside(&th) {
            hits += 1;
        }
    }
    let p = hits as f64 / n as f64;
    Prob { p, se: Some((p * (1.0 - p) / n as f64).sqrt()) }
}

/// Log of the constraint "mass": probability for order constraints, density times
/// conditional probability for hypotheses with equalities. Returns (log value, relative
/// standard error).
fn constraint_mass(
    gauss: &GaussianApprox,
    h: &HypothesisSpec,
    n: usize,
    seed: u64,
    warnings: &mut Vec<String>,
    what: &str,
) -> Result<(f64, Option<f64>)> {
    let d = gauss.dim();
    let abs: Vec<usize> = h.abs_params().into_iter().collect();
    if !h.has_equality() {
        let prob = if abs.is_empty() {
            let (rows, lower) = linear_rows(h, &[], &[], Relation::Positive, d);
            region_prob(
                &DVector::from_column_slice(&gauss.mean),
                &gauss.cov_matrix(),
                &rows,
                &lower,
                n,
                seed,
            )
        } else {
            mc_region(gauss, |t| h.region_contains(t), n, seed)
        };
        precision_check(prob, &h.label, what, n, warnings);
        let rel = prob.se.map(|se| if prob.p > 0.0 { se / prob.p } else { f64::INFINITY });
        return Ok((prob.p.ln(), rel));
    }

    let mut terms: Vec<(f64, f64, Option<f64>)> = Vec::new();
    for mask in 0..(1usize << abs.len()) {
        let signs: Vec<f64> = (0..abs.len())
            .map(|k| if mask >> k & 1 == 1 { -1.0 } else { 1.0 })
            .collect();
        let (e_mat, e) = linear_rows(h, &abs, &signs, Relation::Equal, d);
        let (mut g_mat, mut g) = linear_rows(h, &abs, &signs, Relation::Positive, d);
        // restrict to the orthant where |θ_p| = s_p θ_p
        for (k, &p) in abs.iter().enumerate() {
            let mut row = DMatrix::zeros(1, d);
            row[(0, p)] = signs[k];
            g_mat = stack(&g_mat, &row);
            g.push(0.0);
        }
        let (log_dens, cond) = gauss.condition(&e_mat, &DVector::from_vec(e))?;
        let prob = region_prob(
            &DVector::from_column_slice(&cond.mean),
            &cond.cov_matrix(),
            &g_mat,
            &g,
            n,
            seed.wrapping_add(mask as u64 + 1),
        );
        precision_check(prob, &h.label, what, n, warnings);
        terms.push((log_dens, prob.p, prob.se));
    }
    let max = terms.iter().map(|t| t.0).fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = terms.iter().map(|t| (t.0 - max).exp() * t.1).sum();
    let var: f64 = terms
        .iter()
        .map(|t| ((t.0 - max).exp() * t.2.unwrap_or(0.0)).powi(2))
        .sum();
    let any_mc = terms.iter().any(|t| t.2.is_some());
    let rel = any_mc.then(|| if total > 0.0 { var.sqrt() / total } else { f64::INFINITY });
    Ok((max + total.ln(), rel))
}

fn stack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols().max(b.ncols()));
    out.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    out.view_mut((a.nrows(), 0), (b.nrows(), b.ncols())).copy_from(b);
    out
}

/// Rows of the constraints with relation `rel`, with `|θ_p|` replaced by `s_p θ_p`.
/// Returns `A` and `-constant` so that the constraint reads `A θ (=|>) -constant`.
fn linear_rows(
    h: &HypothesisSpec,
    abs: &[usize],
    signs: &[f64],
    rel: Relation,
    d: usize,
) -> (DMatrix<f64>, Vec<f64>) {
    let cons: Vec<_> = h.constraints.iter().filter(|c| c.relation == rel).collect();
    let mut a = DMatrix::zeros(cons.len(), d);
    let mut rhs = Vec::with_capacity(cons.len());
    for (i, c) in cons.iter().enumerate() {
        for t in &c.form.terms {
            let s = if t.abs {
                signs[abs.iter().position(|&p| p == t.param).expect("abs parameter listed")]
            } else {
                1.0
            };
            a[(i, t.param)] += t.coef * s;
        }
        rhs.push(-c.form.constant);
    }
    (a, rhs)
}

fn precision_check(prob: Prob, label: &str, what: &str, n: usize, warnings: &mut Vec<String>) {
    if let Some(se) = prob.se {
        if prob.p > 0.0 && se > 0.05 * prob.p {
            let needed = (n as f64 * (se / (0.05 * prob.p)).powi(2)).ceil();
            warnings.push(format!(
                "precision: {what} probability of `{label}` is {:.3e} with Monte-Carlo error {:.1e}; about {needed:.0} samples are needed for 5% relative error",
                prob.p, se
            ));
        }
    }
}

/// Fractional Bayes factors from a Gaussian posterior approximation.
///
/// `b[i]` is the data fraction of parameter `i`; the default prior is
/// `N(θ0, D S D)` with `D = diag(1/sqrt(b))`, `S` the posterior covariance and `θ0`
/// from [`prior_center`].
pub fn fractional_bf_gaussian(
    post: &GaussianApprox,
    b: &[f64],
    names: &[String],
    hypotheses: &[HypothesisSpec],
    mc_samples: usize,
    seed: u64,
) -> Result<TestReport> {
    let d = post.dim();
    if b.len() != d || names.len() != d {
        return Err(BfError::Shape(format!(
            "{d} parameters, {} fractions, {} names",
            b.len(),
            names.len()
        )));
    }
    if let Some(x) = b.iter().find(|x| !(**x > 0.0 && **x < 1.0)) {
        return Err(BfError::Config(format!("fraction must lie in (0, 1), got {x}")));
    }
    if mc_samples == 0 {
        return Err(BfError::Config("mc_samples must be positive".into()));
    }
    for h in hypotheses {
        if let Some(&p) = h.params().iter().find(|&&p| p >= d) {
            return Err(BfError::Shape(format!("`{}` references parameter {p} of {d}", h.label)));
        }
    }
    let listed: Vec<HypothesisSpec> = hypotheses.iter().filter(|h| !h.complement).cloned().collect();
    let center = prior_center(&post.mean, &listed);
    let mut prior_cov = post.cov.clone();
    for i in 0..d {
        for j in 0..d {
            prior_cov[i * d + j] /= (b[i] * b[j]).sqrt();
        }
    }
    let prior = GaussianApprox::new(center, prior_cov)?;

    let mut warnings = Vec::new();
    let mut results = Vec::new();
    for (i, h) in hypotheses.iter().enumerate() {
        let s_post = seed.wrapping_mul(1_000_003).wrapping_add(2 * i as u64);
        let s_prior = s_post.wrapping_add(1) ^ 0x9e37_79b9_7f4a_7c15;
        let (lpost, rpost, lprior, rprior) = if h.complement {
            let order_only: Vec<&HypothesisSpec> = listed.iter().filter(|o| !o.has_equality()).collect();
            let outside = |t: &[f64]| !order_only.iter().any(|o| o.region_contains(t));
            let pp = mc_region(post, outside, mc_samples, s_post);
            let pr = mc_region(&prior, outside, mc_samples, s_prior);
            precision_check(pp, &h.label, "posterior", mc_samples, &mut warnings);
            precision_check(pr, &h.label, "prior", mc_samples, &mut warnings);
            let overlap = mc_region(
                &prior,
                |t| order_only.iter().filter(|o| o.region_contains(t)).count() > 1,
                mc_samples.min(100_000),
                s_prior ^ 1,
            );
            if overlap.p > 0.0 {
                warnings.push(format!(
                    "hypotheses overlap (prior probability about {:.3}); `{}` is the region outside all of them",
                    overlap.p, h.label
                ));
            }
            let rel = |p: Prob| p.se.map(|se| if p.p > 0.0 { se / p.p } else { f64::INFINITY });
            (pp.p.ln(), rel(pp), pr.p.ln(), rel(pr))
        } else {
            let (lp, rp) = constraint_mass(post, h, mc_samples, s_post, &mut warnings, "posterior")?;
            let (lq, rq) = constraint_mass(&prior, h, mc_samples, s_prior, &mut warnings, "prior")?;
            (lp, rp, lq, rq)
        };
        if lprior == f64::NEG_INFINITY {
            return Err(BfError::ZeroPrior(h.label.clone()));
        }
        let post_val = lpost.exp();
        let prior_val = lprior.exp();
        results.push(HypothesisResult {
            label: h.label.clone(),
            bf_unconstrained: (lpost - lprior).exp(),
            posterior: post_val,
            prior: prior_val,
            posterior_se: rpost.map(|r| r * post_val),
            prior_se: rprior.map(|r| r * prior_val),
            zero: lpost == f64::NEG_INFINITY,
        });
    }
    let any_mc = results.iter().any(|r| r.posterior_se.is_some() || r.prior_se.is_some());
    Ok(TestReport {
        test: "fractional".into(),
        parameters: names.to_vec(),
        results,
        evidence: None,
        warnings,
        resolution: any_mc.then(|| 1.0 / mc_samples as f64),
        ties: None,
    }
    .finish())
}
