//! Hierarchical actor-oriented relational event model.
//!
//! Sender intensities are `exp(φ'z_s + γ_k'x_s)` and receiver choice weights are
//! `exp(ψ'z_sr + β_k'x_sr)`, with cluster effects `γ_k ~ N(ζ, Σ_γ)` and
//! `β_k ~ N(μ, Σ_β)`. Random effects are stored non-centered: `γ_k = ζ + diag(σ_γ) L_γ z_k`.

pub mod corr;
mod likelihood;
mod poisson;
mod prior;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event_data::Dataset;
use crate::statistics::{Panels, StatError, StatisticSpec};

pub use likelihood::{
    event_terms, receiver_cluster, receiver_log_lik, receiver_log_lik_at, sender_cluster,
    sender_log_lik, sender_log_lik_at, EventTerms,
};
pub use poisson::{poisson_oracle_receiver, poisson_oracle_sender, profiled_intercept};
pub use prior::{half_cauchy_log_density, lkj_log_density, log_prior, normal_log_density};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite {what} in cluster {cluster} at event {event}")]
    Numerical {
        what: &'static str,
        cluster: usize,
        event: usize,
    },
    #[error("non-finite log posterior or gradient")]
    NonFinite,
    #[error("zero-length interval before event {event} in cluster {cluster}")]
    ZeroDuration { cluster: usize, event: usize },
    #[error("invalid hyperprior: {0}")]
    Hyper(String),
    #[error(transparent)]
    Stat(#[from] StatError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EffectType {
    Fixed,
    Random,
}

/// One statistic together with its fixed/random status.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelTerm {
    pub spec: StatisticSpec,
    pub effect: EffectType,
}

impl ModelTerm {
    pub fn fixed(spec: StatisticSpec) -> Self {
        Self {
            spec,
            effect: EffectType::Fixed,
        }
    }

    pub fn random(spec: StatisticSpec) -> Self {
        Self {
            spec,
            effect: EffectType::Random,
        }
    }

    pub fn name(&self) -> String {
        self.spec.name()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperPriorConfig {
    /// Prior variance of the fixed effects φ and ψ.
    pub fixed_effect_variance: f64,
    /// Prior variance of the random-effect means ζ and μ.
    pub mean_variance: f64,
    /// Half-Cauchy scale of the random-effect standard deviations.
    pub cauchy_scale: f64,
    /// LKJ shape of the random-effect correlation matrices.
    pub lkj_eta: f64,
}

impl Default for HyperPriorConfig {
    fn default() -> Self {
        Self {
            fixed_effect_variance: 10.0,
            mean_variance: 10.0,
            cauchy_scale: 10.0,
            lkj_eta: 2.0,
        }
    }
}

impl HyperPriorConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = [
            self.fixed_effect_variance,
            self.mean_variance,
            self.cauchy_scale,
            self.lkj_eta,
        ]
        .iter()
        .all(|v| v.is_finite() && *v > 0.0);
        if ok {
            Ok(())
        } else {
            Err(ModelError::Hyper(format!("all entries must be positive: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub sender: Vec<ModelTerm>,
    pub receiver: Vec<ModelTerm>,
    pub hyper: HyperPriorConfig,
}

impl ModelSpec {
    pub fn sender_specs(&self) -> Vec<StatisticSpec> {
        self.sender.iter().map(|t| t.spec.clone()).collect()
    }

    pub fn receiver_specs(&self) -> Vec<StatisticSpec> {
        self.receiver.iter().map(|t| t.spec.clone()).collect()
    }
}

/// Where the coefficient of one statistic comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoefSource {
    Fixed(usize),
    Random(usize),
}

fn sources(terms: &[ModelTerm]) -> (Vec<CoefSource>, usize, usize) {
    let (mut nf, mut nr) = (0, 0);
    let src = terms
        .iter()
        .map(|t| match t.effect {
            EffectType::Fixed => {
                nf += 1;
                CoefSource::Fixed(nf - 1)
            }
            EffectType::Random => {
                nr += 1;
                CoefSource::Random(nr - 1)
            }
        })
        .collect();
    (src, nf, nr)
}

/// Parameter counts: `q`/`p` sender fixed/random, `u`/`v` receiver fixed/random, `k` clusters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub q: usize,
    pub u: usize,
    pub p: usize,
    pub v: usize,
    pub k: usize,
}

impl Dims {
    pub fn new(spec: &ModelSpec, k: usize) -> Self {
        let (_, q, p) = sources(&spec.sender);
        let (_, u, v) = sources(&spec.receiver);
        Self { q, u, p, v, k }
    }

    /// Length of the unconstrained vector.
    pub fn n_unconstrained(&self) -> usize {
        self.q
            + self.u
            + 2 * (self.p + self.v)
            + corr::n_free(self.p)
            + corr::n_free(self.v)
            + self.k * (self.p + self.v)
    }
}

/// Offsets of each block inside the unconstrained vector.
#[derive(Debug, Clone, Copy)]
pub struct Layout {
    pub dims: Dims,
    pub phi: usize,
    pub psi: usize,
    pub zeta: usize,
    pub mu: usize,
    pub log_sigma_gamma: usize,
    pub log_sigma_beta: usize,
    pub chol_gamma: usize,
    pub chol_beta: usize,
    pub z_gamma: usize,
    pub z_beta: usize,
    pub len: usize,
}

impl Layout {
    pub fn new(d: Dims) -> Self {
        let phi = 0;
        let psi = phi + d.q;
        let zeta = psi + d.u;
        let mu = zeta + d.p;
        let log_sigma_gamma = mu + d.v;
        let log_sigma_beta = log_sigma_gamma + d.p;
        let chol_gamma = log_sigma_beta + d.v;
        let chol_beta = chol_gamma + corr::n_free(d.p);
        let z_gamma = chol_beta + corr::n_free(d.v);
        let z_beta = z_gamma + d.k * d.p;
        let len = z_beta + d.k * d.v;
        Self {
            dims: d,
            phi,
            psi,
            zeta,
            mu,
            log_sigma_gamma,
            log_sigma_beta,
            chol_gamma,
            chol_beta,
            z_gamma,
            z_beta,
            len,
        }
    }
}

/// Full hierarchical parameter set in constrained coordinates.
///
/// Cholesky factors are dense row-major; `z_gamma`/`z_beta` are `K × P` / `K × V`
/// row-major standardized random effects.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterState {
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    pub zeta: Vec<f64>,
    pub mu: Vec<f64>,
    pub sigma_gamma: Vec<f64>,
    pub sigma_beta: Vec<f64>,
    pub l_gamma: Vec<f64>,
    pub l_beta: Vec<f64>,
    pub z_gamma: Vec<f64>,
    pub z_beta: Vec<f64>,
}

impl ParameterState {
    /// All effects zero, unit scales, identity correlations.
    pub fn zeros(d: Dims) -> Self {
        Self {
            phi: vec![0.0; d.q],
            psi: vec![0.0; d.u],
            zeta: vec![0.0; d.p],
            mu: vec![0.0; d.v],
            sigma_gamma: vec![1.0; d.p],
            sigma_beta: vec![1.0; d.v],
            l_gamma: identity(d.p),
            l_beta: identity(d.v),
            z_gamma: vec![0.0; d.k * d.p],
            z_beta: vec![0.0; d.k * d.v],
        }
    }

    pub fn dims(&self) -> Dims {
        let p = self.zeta.len();
        let v = self.mu.len();
        let k = if p > 0 {
            self.z_gamma.len() / p
        } else if v > 0 {
            self.z_beta.len() / v
        } else {
            0
        };
        Dims {
            q: self.phi.len(),
            u: self.psi.len(),
            p,
            v,
            k,
        }
    }

    /// Cluster-level coefficients implied by the non-centered representation.
    pub fn effects(&self) -> Result<EffectValues> {
        let d = self.dims();
        let mut gamma = Vec::with_capacity(d.k * d.p);
        let mut beta = Vec::with_capacity(d.k * d.v);
        for k in 0..d.k {
            if d.p > 0 {
                gamma.extend(noncentered_transform(
                    &self.z_gamma[k * d.p..(k + 1) * d.p],
                    &self.zeta,
                    &self.sigma_gamma,
                    &self.l_gamma,
                )?);
            }
            if d.v > 0 {
                beta.extend(noncentered_transform(
                    &self.z_beta[k * d.v..(k + 1) * d.v],
                    &self.mu,
                    &self.sigma_beta,
                    &self.l_beta,
                )?);
            }
        }
        Ok(EffectValues {
            phi: self.phi.clone(),
            psi: self.psi.clone(),
            gamma,
            beta,
            p: d.p,
            v: d.v,
        })
    }
}

pub fn identity(p: usize) -> Vec<f64> {
    let mut m = vec![0.0; p * p];
    for i in 0..p {
        m[i * p + i] = 1.0;
    }
    m
}

/// Intensity-determining coefficients: fixed effects plus per-cluster random effects.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectValues {
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    /// `K × P`, row-major.
    pub gamma: Vec<f64>,
    /// `K × V`, row-major.
    pub beta: Vec<f64>,
    pub p: usize,
    pub v: usize,
}

impl EffectValues {
    pub fn gamma_row(&self, k: usize) -> &[f64] {
        &self.gamma[k * self.p..(k + 1) * self.p]
    }

    pub fn beta_row(&self, k: usize) -> &[f64] {
        &self.beta[k * self.v..(k + 1) * self.v]
    }
}

/// `mean + diag(sigma)·L·z` for a row-major lower-triangular `L`.
pub fn noncentered_transform(z: &[f64], mean: &[f64], sigma: &[f64], l: &[f64]) -> Result<Vec<f64>> {
    let p = mean.len();
    if z.len() != p || sigma.len() != p || l.len() != p * p {
        return Err(ModelError::Shape(format!(
            "z {} / mean {} / sigma {} / L {} (expected {p}, {p}, {p}, {})",
            z.len(),
            mean.len(),
            sigma.len(),
            l.len(),
            p * p
        )));
    }
    Ok((0..p)
        .map(|i| {
            let lz: f64 = (0..=i).map(|j| l[i * p + j] * z[j]).sum();
            mean[i] + sigma[i] * lz
        })
        .collect())
}

/// Dataset, panels and model spec bundled as a log-posterior target.
#[derive(Debug, Clone)]
pub struct Model {
    pub dataset: Dataset,
    pub panels: Panels,
    pub spec: ModelSpec,
    dims: Dims,
    layout: Layout,
    sender_src: Vec<CoefSource>,
    receiver_src: Vec<CoefSource>,
}

impl Model {
    pub fn new(dataset: Dataset, spec: ModelSpec) -> Result<Self> {
        spec.hyper.validate()?;
        let panels = Panels::compute(&dataset, &spec.sender_specs(), &spec.receiver_specs())?;
        Ok(Self::with_panels(dataset, panels, spec))
    }

    /// Uses precomputed panels, which must have been computed from `spec`'s statistics.
    pub fn with_panels(dataset: Dataset, panels: Panels, spec: ModelSpec) -> Self {
        let dims = Dims::new(&spec, dataset.n_clusters());
        let (sender_src, _, _) = sources(&spec.sender);
        let (receiver_src, _, _) = sources(&spec.receiver);
        Self {
            dataset,
            panels,
            spec,
            dims,
            layout: Layout::new(dims),
            sender_src,
            receiver_src,
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn sender_sources(&self) -> &[CoefSource] {
        &self.sender_src
    }

    pub fn receiver_sources(&self) -> &[CoefSource] {
        &self.receiver_src
    }

    fn names_of(&self, terms: &[ModelTerm], effect: EffectType) -> Vec<String> {
        terms
            .iter()
            .filter(|t| t.effect == effect)
            .map(ModelTerm::name)
            .collect()
    }

    pub fn sender_fixed_names(&self) -> Vec<String> {
        self.names_of(&self.spec.sender, EffectType::Fixed)
    }

    pub fn sender_random_names(&self) -> Vec<String> {
        self.names_of(&self.spec.sender, EffectType::Random)
    }

    pub fn receiver_fixed_names(&self) -> Vec<String> {
        self.names_of(&self.spec.receiver, EffectType::Fixed)
    }

    pub fn receiver_random_names(&self) -> Vec<String> {
        self.names_of(&self.spec.receiver, EffectType::Random)
    }

    /// Maps constrained parameters to the sampler's unconstrained coordinates.
    pub fn unconstrain(&self, s: &ParameterState) -> Result<Vec<f64>> {
        let d = self.dims;
        if s.dims() != d && !(d.p == 0 && d.v == 0) {
            return Err(ModelError::Shape(format!(
                "parameter dims {:?} do not match model dims {d:?}",
                s.dims()
            )));
        }
        let mut u = Vec::with_capacity(self.layout.len);
        u.extend(&s.phi);
        u.extend(&s.psi);
        u.extend(&s.zeta);
        u.extend(&s.mu);
        u.extend(s.sigma_gamma.iter().map(|x| x.ln()));
        u.extend(s.sigma_beta.iter().map(|x| x.ln()));
        u.extend(corr::unconstrain(&s.l_gamma, d.p));
        u.extend(corr::unconstrain(&s.l_beta, d.v));
        u.extend(&s.z_gamma);
        u.extend(&s.z_beta);
        if u.len() != self.layout.len {
            return Err(ModelError::Shape(format!(
                "unconstrained length {} != {}",
                u.len(),
                self.layout.len
            )));
        }
        Ok(u)
    }

    /// Inverse of [`Model::unconstrain`]; also returns the log-Jacobian of the map.
    pub fn constrain_with_jacobian(&self, u: &[f64]) -> Result<(ParameterState, f64)> {
        let lay = &self.layout;
        let d = self.dims;
        if u.len() != lay.len {
            return Err(ModelError::Shape(format!(
                "unconstrained length {} != {}",
                u.len(),
                lay.len
            )));
        }
        let log_sg = &u[lay.log_sigma_gamma..lay.log_sigma_gamma + d.p];
        let log_sb = &u[lay.log_sigma_beta..lay.log_sigma_beta + d.v];
        let (l_gamma, jg) = corr::constrain(&u[lay.chol_gamma..lay.chol_beta], d.p);
        let (l_beta, jb) = corr::constrain(&u[lay.chol_beta..lay.z_gamma], d.v);
        let state = ParameterState {
            phi: u[lay.phi..lay.psi].to_vec(),
            psi: u[lay.psi..lay.zeta].to_vec(),
            zeta: u[lay.zeta..lay.mu].to_vec(),
            mu: u[lay.mu..lay.log_sigma_gamma].to_vec(),
            sigma_gamma: log_sg.iter().map(|x| x.exp()).collect(),
            sigma_beta: log_sb.iter().map(|x| x.exp()).collect(),
            l_gamma,
            l_beta,
            z_gamma: u[lay.z_gamma..lay.z_beta].to_vec(),
            z_beta: u[lay.z_beta..lay.len].to_vec(),
        };
        let jac = log_sg.iter().sum::<f64>() + log_sb.iter().sum::<f64>() + jg + jb;
        Ok((state, jac))
    }

    /// Change-of-variables terms: scales, correlation factors, and `Ω ← L`.
    pub fn log_jacobian(&self, u: &[f64]) -> Result<f64> {
        let (state, jac) = self.constrain_with_jacobian(u)?;
        Ok(jac + prior::lkj_cholesky_jacobian(&state))
    }

    pub fn constrain(&self, u: &[f64]) -> Result<ParameterState> {
        self.constrain_with_jacobian(u).map(|(s, _)| s)
    }

    /// Per-statistic coefficient vector for the sender model of cluster `k`.
    pub fn sender_coefs(&self, eff: &EffectValues, k: usize) -> Vec<f64> {
        resolve_coefs(&self.sender_src, &eff.phi, eff.gamma_row(k))
    }

    pub fn receiver_coefs(&self, eff: &EffectValues, k: usize) -> Vec<f64> {
        resolve_coefs(&self.receiver_src, &eff.psi, eff.beta_row(k))
    }

    /// Log posterior in unconstrained coordinates and its gradient.
    pub fn log_posterior_and_grad(&self, u: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; self.layout.len];
        let v = self.log_posterior_grad_into(u, &mut grad)?;
        Ok((v, grad))
    }

    pub fn log_posterior(&self, u: &[f64]) -> Result<f64> {
        let (state, jac) = self.constrain_with_jacobian(u)?;
        let eff = state.effects()?;
        let ll = sender_log_lik_at(self, &eff)? + receiver_log_lik_at(self, &eff)?;
        Ok(ll + log_prior(&state, &self.spec.hyper) + jac + prior::lkj_cholesky_jacobian(&state))
    }

    /// Writes the gradient into `grad` and returns the log posterior.
    pub fn log_posterior_grad_into(&self, u: &[f64], grad: &mut [f64]) -> Result<f64> {
        let lay = self.layout;
        let d = self.dims;
        let hyper = &self.spec.hyper;
        let (state, jac) = self.constrain_with_jacobian(u)?;
        let eff = state.effects()?;
        grad.iter_mut().for_each(|g| *g = 0.0);

        // likelihood with gradients w.r.t. fixed effects and cluster-level effects
        let mut g_gamma = vec![0.0; d.k * d.p];
        let mut g_beta = vec![0.0; d.k * d.v];
        let mut value = 0.0;
        {
            let (g_phi, rest) = grad.split_at_mut(lay.psi);
            let g_psi = &mut rest[..d.u];
            value += likelihood::sender_ll_grad(self, &eff, g_phi, &mut g_gamma)?;
            value += likelihood::receiver_ll_grad(self, &eff, g_psi, &mut g_beta)?;
        }

        // fixed-effect priors
        let vf = hyper.fixed_effect_variance;
        for i in lay.phi..lay.zeta {
            grad[i] -= u[i] / vf;
        }

        // random-effect blocks
        self.random_block_grad(
            &state.zeta,
            &state.sigma_gamma,
            &state.l_gamma,
            &state.z_gamma,
            &g_gamma,
            &u[lay.chol_gamma..lay.chol_beta],
            grad,
            (lay.zeta, lay.log_sigma_gamma, lay.chol_gamma, lay.z_gamma),
            d.p,
        );
        self.random_block_grad(
            &state.mu,
            &state.sigma_beta,
            &state.l_beta,
            &state.z_beta,
            &g_beta,
            &u[lay.chol_beta..lay.z_gamma],
            grad,
            (lay.mu, lay.log_sigma_beta, lay.chol_beta, lay.z_beta),
            d.v,
        );

        value += log_prior(&state, hyper) + jac + prior::lkj_cholesky_jacobian(&state);
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(ModelError::NonFinite);
        }
        Ok(value)
    }

    /// Chain rule through `effect_k = mean + diag(σ) L z_k` plus prior and Jacobian terms.
    #[allow(clippy::too_many_arguments)]
    fn random_block_grad(
        &self,
        mean: &[f64],
        sigma: &[f64],
        l: &[f64],
        z: &[f64],
        g_eff: &[f64],
        y_chol: &[f64],
        grad: &mut [f64],
        (o_mean, o_logsig, o_chol, o_z): (usize, usize, usize, usize),
        p: usize,
    ) {
        if p == 0 {
            return;
        }
        let hyper = &self.spec.hyper;
        let k_total = self.dims.k;
        let mut g_l = vec![0.0; p * p];
        let mut g_sigma = vec![0.0; p];
        for k in 0..k_total {
            let zk = &z[k * p..(k + 1) * p];
            let gk = &g_eff[k * p..(k + 1) * p];
            for i in 0..p {
                grad[o_mean + i] += gk[i];
                let lz: f64 = (0..=i).map(|j| l[i * p + j] * zk[j]).sum();
                g_sigma[i] += gk[i] * lz;
                for j in 0..=i {
                    g_l[i * p + j] += sigma[i] * gk[i] * zk[j];
                }
            }
            // z_k ← Lᵀ (σ ⊙ g_k), plus the standard-normal prior
            for j in 0..p {
                let mut acc = 0.0;
                for i in j..p {
                    acc += l[i * p + j] * sigma[i] * gk[i];
                }
                grad[o_z + k * p + j] += acc - zk[j];
            }
        }
        let vm = hyper.mean_variance;
        let tau = hyper.cauchy_scale;
        for i in 0..p {
            grad[o_mean + i] -= mean[i] / vm;
            let s = sigma[i];
            grad[o_logsig + i] += s * (g_sigma[i] - 2.0 * s / (tau * tau + s * s)) + 1.0;
        }
        // LKJ density plus the Ω ← L Jacobian, both in log L_ii
        let eta = hyper.lkj_eta;
        for i in 1..p {
            let coef = 2.0 * (eta - 1.0) + (p - i - 1) as f64;
            g_l[i * p + i] += coef / l[i * p + i];
        }
        let gy = corr::backprop(y_chol, l, &g_l, p, true);
        for (t, g) in gy.into_iter().enumerate() {
            grad[o_chol + t] += g;
        }
    }

    /// Names of the constrained output columns produced by [`Model::constrained_row`].
    pub fn output_names(&self) -> Vec<String> {
        let ids: Vec<&str> = self.dataset.clusters().iter().map(|c| c.id()).collect();
        output_names_for(&self.spec, &ids)
    }

    /// Constrained summary of an unconstrained point, aligned with [`Model::output_names`].
    pub fn constrained_row(&self, u: &[f64]) -> Result<Vec<f64>> {
        state_row(&self.constrain(u)?)
    }

    /// Rebuilds cluster-level coefficients from a constrained output row.
    pub fn effects_from_row(&self, row: &[f64]) -> Result<EffectValues> {
        let d = self.dims;
        let n_l = |p: usize| if p > 1 { p * (p + 1) / 2 - 1 } else { 0 };
        let head = d.q + d.u + 2 * (d.p + d.v) + n_l(d.p) + n_l(d.v);
        let expected = head + d.k * (d.p + d.v);
        if row.len() != expected {
            return Err(ModelError::Shape(format!(
                "row length {} != {expected}",
                row.len()
            )));
        }
        Ok(EffectValues {
            phi: row[..d.q].to_vec(),
            psi: row[d.q..d.q + d.u].to_vec(),
            gamma: row[head..head + d.k * d.p].to_vec(),
            beta: row[head + d.k * d.p..].to_vec(),
            p: d.p,
            v: d.v,
        })
    }
}

/// Output column names for a model over clusters `cluster_ids`: fixed effects, means,
/// standard deviations, free Cholesky entries, then cluster-level effects.
pub fn output_names_for(spec: &ModelSpec, cluster_ids: &[&str]) -> Vec<String> {
    let names_of = |terms: &[ModelTerm], e: EffectType| -> Vec<String> {
        terms.iter().filter(|t| t.effect == e).map(ModelTerm::name).collect()
    };
    let sf = names_of(&spec.sender, EffectType::Fixed);
    let sr = names_of(&spec.sender, EffectType::Random);
    let rf = names_of(&spec.receiver, EffectType::Fixed);
    let rr = names_of(&spec.receiver, EffectType::Random);
    let mut names = Vec::new();
    names.extend(sf.iter().map(|n| format!("phi.{n}")));
    names.extend(rf.iter().map(|n| format!("psi.{n}")));
    names.extend(sr.iter().map(|n| format!("zeta.{n}")));
    names.extend(rr.iter().map(|n| format!("mu.{n}")));
    names.extend(sr.iter().map(|n| format!("sigma_gamma.{n}")));
    names.extend(rr.iter().map(|n| format!("sigma_beta.{n}")));
    for (tag, p) in [("L_gamma", sr.len()), ("L_beta", rr.len())] {
        for i in 1..p {
            for j in 0..=i {
                names.push(format!("{tag}[{i},{j}]"));
            }
        }
    }
    for id in cluster_ids {
        names.extend(sr.iter().map(|n| format!("gamma.{id}.{n}")));
    }
    for id in cluster_ids {
        names.extend(rr.iter().map(|n| format!("beta.{id}.{n}")));
    }
    names
}

/// Constrained values of `s`, aligned with [`output_names_for`].
pub fn state_row(s: &ParameterState) -> Result<Vec<f64>> {
    let d = s.dims();
    let eff = s.effects()?;
    let mut row = Vec::new();
    row.extend(&s.phi);
    row.extend(&s.psi);
    row.extend(&s.zeta);
    row.extend(&s.mu);
    row.extend(&s.sigma_gamma);
    row.extend(&s.sigma_beta);
    for (l, p) in [(&s.l_gamma, d.p), (&s.l_beta, d.v)] {
        for i in 1..p {
            for j in 0..=i {
                row.push(l[i * p + j]);
            }
        }
    }
    row.extend(&eff.gamma);
    row.extend(&eff.beta);
    Ok(row)
}

fn resolve_coefs(src: &[CoefSource], fixed: &[f64], random: &[f64]) -> Vec<f64> {
    src.iter()
        .map(|s| match *s {
            CoefSource::Fixed(i) => fixed[i],
            CoefSource::Random(i) => random[i],
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noncentered_examples() {
        let l = identity(2);
        assert_eq!(
            noncentered_transform(&[0.0, 0.0], &[1.5, -2.0], &[3.0, 4.0], &l).unwrap(),
            vec![1.5, -2.0]
        );
        assert_eq!(
            noncentered_transform(&[0.3, -0.7], &[0.0, 0.0], &[1.0, 1.0], &l).unwrap(),
            vec![0.3, -0.7]
        );
        // Σ = [[4,2],[2,2]]: σ = (2, √2), Ω = [[1, 1/√2],[1/√2, 1]], A = diag(σ) L = [[2,0],[1,1]]
        let s2 = 2f64.sqrt();
        let lc = vec![1.0, 0.0, 1.0 / s2, 1.0 / s2];
        let out = noncentered_transform(&[1.0, 1.0], &[0.0, 0.0], &[2.0, s2], &lc).unwrap();
        assert!((out[0] - 2.0).abs() < 1e-12 && (out[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn noncentered_shape_error() {
        let err = noncentered_transform(&[0.0], &[0.0, 0.0], &[1.0, 1.0], &identity(2)).unwrap_err();
        assert!(matches!(err, ModelError::Shape(_)));
    }

    #[test]
    fn hyper_validation() {
        assert!(HyperPriorConfig::default().validate().is_ok());
        let bad = HyperPriorConfig {
            lkj_eta: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
