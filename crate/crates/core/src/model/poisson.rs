//! The sender and receiver likelihoods rewritten as Poisson regressions.
//!
//! These are evaluated term by term from their Poisson form and serve as independent
//! checks: each differs from the direct likelihood by a parameter-free constant.

use crate::event_data::risk_set_position;

use super::{Model, ModelError, ParameterState, Result};

fn poisson_log_pmf(y: u32, log_mean: f64) -> f64 {
    // y is 0 or 1 here, so log y! = 0
    f64::from(y) * log_mean - log_mean.exp()
}

/// Piecewise-exponential sender likelihood as a Poisson model with offsets
/// `log(t_m - t_{m-1})` and indicator outcomes.
pub fn poisson_oracle_sender(model: &Model, params: &ParameterState) -> Result<f64> {
    let eff = params.effects()?;
    let mut total = 0.0;
    for (k, c) in model.dataset.clusters().iter().enumerate() {
        let panel = &model.panels.sender[k];
        let coefs = model.sender_coefs(&eff, k);
        let linear = |block: &[f64], s: usize| -> f64 {
            let p = panel.n_stats;
            block[s * p..(s + 1) * p]
                .iter()
                .zip(&coefs)
                .map(|(x, b)| x * b)
                .sum()
        };
        let mut prev = 0.0;
        for (m, e) in c.events().iter().enumerate() {
            let dt = e.time - prev;
            if dt <= 0.0 {
                return Err(ModelError::ZeroDuration { cluster: k, event: m });
            }
            let offset = dt.ln();
            let block = panel.event(m);
            for s in 0..panel.n_candidates {
                let y = u32::from(s == e.sender);
                total += poisson_log_pmf(y, offset + linear(block, s));
            }
            prev = e.time;
        }
        if let Some(block) = panel.trailing() {
            let offset = (c.tau() - prev).ln();
            for s in 0..panel.n_candidates {
                total += poisson_log_pmf(0, offset + linear(block, s));
            }
        }
    }
    if total.is_finite() {
        Ok(total)
    } else {
        Err(ModelError::NonFinite)
    }
}

/// Multinomial receiver likelihood as a Poisson model with one intercept per event,
/// each set to its maximum-likelihood value.
pub fn poisson_oracle_receiver(model: &Model, params: &ParameterState) -> Result<f64> {
    let eff = params.effects()?;
    let mut total = 0.0;
    for (k, c) in model.dataset.clusters().iter().enumerate() {
        let panel = &model.panels.receiver[k];
        let coefs = model.receiver_coefs(&eff, k);
        let p = panel.n_stats;
        for (m, e) in c.events().iter().enumerate() {
            let block = panel.event(m);
            let eta: Vec<f64> = (0..panel.n_candidates)
                .map(|r| block[r * p..(r + 1) * p].iter().zip(&coefs).map(|(x, b)| x * b).sum())
                .collect();
            let alpha = profiled_intercept(&eta);
            let chosen = risk_set_position(e.sender, e.receiver);
            for (r, &h) in eta.iter().enumerate() {
                total += poisson_log_pmf(u32::from(r == chosen), h + alpha);
            }
        }
    }
    if total.is_finite() {
        Ok(total)
    } else {
        Err(ModelError::NonFinite)
    }
}

/// Maximizer over `α` of `Σ_r [y_r(η_r + α) - exp(η_r + α)]` when exactly one `y_r` is 1.
pub fn profiled_intercept(eta: &[f64]) -> f64 {
    let max = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    -(max + eta.iter().map(|x| (x - max).exp()).sum::<f64>().ln())
}
