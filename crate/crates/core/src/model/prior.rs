use std::f64::consts::PI;

use super::{HyperPriorConfig, ParameterState};

/// Log-density of `N(0, variance)` at `x`.
pub fn normal_log_density(x: f64, variance: f64) -> f64 {
    -0.5 * (2.0 * PI * variance).ln() - 0.5 * x * x / variance
}

/// Log-density of the half-Cauchy distribution with location 0 and scale `tau`.
pub fn half_cauchy_log_density(sigma: f64, tau: f64) -> f64 {
    let r = sigma / tau;
    (2.0 / (PI * tau * (1.0 + r * r))).ln()
}

/// Unnormalized LKJ log-density `(eta - 1) log det Ω` for `Ω = L Lᵀ`.
pub fn lkj_log_density(l: &[f64], p: usize, eta: f64) -> f64 {
    let log_det: f64 = (0..p).map(|i| 2.0 * l[i * p + i].ln()).sum();
    (eta - 1.0) * log_det
}

/// Log-Jacobian of `L ↦ L Lᵀ` restricted to correlation factors.
fn corr_cholesky_jacobian(l: &[f64], p: usize) -> f64 {
    (1..p)
        .map(|i| (p - i - 1) as f64 * l[i * p + i].ln())
        .sum()
}

/// Density terms of the correlation factors that live on the Cholesky scale.
pub(super) fn lkj_cholesky_jacobian(s: &ParameterState) -> f64 {
    corr_cholesky_jacobian(&s.l_gamma, s.zeta.len()) + corr_cholesky_jacobian(&s.l_beta, s.mu.len())
}

/// Log prior of a constrained parameter state (no change-of-variables terms).
pub fn log_prior(s: &ParameterState, h: &HyperPriorConfig) -> f64 {
    let normal = |xs: &[f64], var: f64| xs.iter().map(|&x| normal_log_density(x, var)).sum::<f64>();
    let cauchy = |xs: &[f64]| {
        xs.iter()
            .map(|&x| half_cauchy_log_density(x, h.cauchy_scale))
            .sum::<f64>()
    };
    normal(&s.phi, h.fixed_effect_variance)
        + normal(&s.psi, h.fixed_effect_variance)
        + normal(&s.zeta, h.mean_variance)
        + normal(&s.mu, h.mean_variance)
        + cauchy(&s.sigma_gamma)
        + cauchy(&s.sigma_beta)
        + lkj_log_density(&s.l_gamma, s.zeta.len(), h.lkj_eta)
        + lkj_log_density(&s.l_beta, s.mu.len(), h.lkj_eta)
        + normal(&s.z_gamma, 1.0)
        + normal(&s.z_beta, 1.0)
}
