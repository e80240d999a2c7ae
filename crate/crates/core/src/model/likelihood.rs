use crate::event_data::{risk_set_position, ClusterSequence};
use crate::statistics::{ReceiverPanel, SenderPanel};

use super::{CoefSource, EffectValues, Model, ModelError, ParameterState, Result};

/// Log-likelihood contributions of one event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventTerms {
    pub sender: f64,
    pub receiver: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Sender log-likelihood of one cluster for per-statistic coefficients `coefs`.
///
/// When `grad` is given, `∂ll/∂coefs` is added to it. `per_event`, if given, receives
/// each event's contribution.
pub fn sender_cluster(
    k: usize,
    cluster: &ClusterSequence,
    panel: &SenderPanel,
    coefs: &[f64],
    mut grad: Option<&mut [f64]>,
    mut per_event: Option<&mut Vec<f64>>,
) -> Result<f64> {
    let n = panel.n_candidates;
    let p = panel.n_stats;
    if let (Some(st), None) = (panel.static_summary(), per_event.as_deref()) {
        // rates never change: counts and total exposure suffice
        let block = panel.event(0);
        let mut total = 0.0;
        for s in 0..n {
            let x = &block[s * p..(s + 1) * p];
            let eta = dot(x, coefs);
            let l = eta.exp();
            if !l.is_finite() {
                return Err(ModelError::Numerical {
                    what: "sender intensity",
                    cluster: k,
                    event: 0,
                });
            }
            total += st.counts[s] * eta - st.exposure * l;
            if let Some(g) = grad.as_deref_mut() {
                let w = st.counts[s] - st.exposure * l;
                for (gi, xi) in g.iter_mut().zip(x) {
                    *gi += w * xi;
                }
            }
        }
        return Ok(total);
    }
    let mut total = 0.0;
    let mut prev = 0.0;
    let mut lambda = vec![0.0; n];
    let mut interval = |block: &[f64],
                        dt: f64,
                        sender: Option<usize>,
                        m: usize,
                        grad: &mut Option<&mut [f64]>|
     -> Result<f64> {
        let mut sum = 0.0;
        let mut eta_s = 0.0;
        for s in 0..n {
            let eta = dot(&block[s * p..(s + 1) * p], coefs);
            let l = eta.exp();
            if !l.is_finite() {
                return Err(ModelError::Numerical {
                    what: "sender intensity",
                    cluster: k,
                    event: m,
                });
            }
            lambda[s] = l;
            sum += l;
            if Some(s) == sender {
                eta_s = eta;
            }
        }
        if let Some(g) = grad.as_deref_mut() {
            for s in 0..n {
                let w = if Some(s) == sender { 1.0 } else { 0.0 } - dt * lambda[s];
                if w != 0.0 {
                    for (gi, x) in g.iter_mut().zip(&block[s * p..(s + 1) * p]) {
                        *gi += w * x;
                    }
                }
            }
        }
        Ok(eta_s - dt * sum)
    };
    for (m, e) in cluster.events().iter().enumerate() {
        let v = interval(panel.event(m), e.time - prev, Some(e.sender), m, &mut grad)?;
        if let Some(pe) = per_event.as_deref_mut() {
            pe.push(v);
        }
        total += v;
        prev = e.time;
    }
    if let Some(block) = panel.trailing() {
        total += interval(block, cluster.tau() - prev, None, cluster.n_events(), &mut grad)?;
    }
    Ok(total)
}

/// Receiver log-likelihood of one cluster; same conventions as [`sender_cluster`].
pub fn receiver_cluster(
    k: usize,
    cluster: &ClusterSequence,
    panel: &ReceiverPanel,
    coefs: &[f64],
    mut grad: Option<&mut [f64]>,
    mut per_event: Option<&mut Vec<f64>>,
) -> Result<f64> {
    let c = panel.n_candidates;
    let p = panel.n_stats;
    let mut eta = vec![0.0; c];
    if let (Some(st), None) = (panel.static_summary(), per_event.as_deref()) {
        let mut total = 0.0;
        for (s, f) in st.first.iter().enumerate() {
            let Some(m) = *f else { continue };
            let block = panel.event(m);
            let counts = &st.counts[s];
            let n_s: f64 = counts.iter().sum();
            let mut max = f64::NEG_INFINITY;
            for r in 0..c {
                eta[r] = dot(&block[r * p..(r + 1) * p], coefs);
                max = max.max(eta[r]);
            }
            if !max.is_finite() {
                return Err(ModelError::Numerical {
                    what: "receiver weight",
                    cluster: k,
                    event: m,
                });
            }
            let mut fit = 0.0;
            let mut sum = 0.0;
            for r in 0..c {
                fit += counts[r] * eta[r];
                eta[r] = (eta[r] - max).exp();
                sum += eta[r];
            }
            total += fit - n_s * (max + sum.ln());
            if let Some(g) = grad.as_deref_mut() {
                for r in 0..c {
                    let w = counts[r] - n_s * eta[r] / sum;
                    for (gi, x) in g.iter_mut().zip(&block[r * p..(r + 1) * p]) {
                        *gi += w * x;
                    }
                }
            }
        }
        return Ok(total);
    }
    let mut total = 0.0;
    for (m, e) in cluster.events().iter().enumerate() {
        let block = panel.event(m);
        let mut max = f64::NEG_INFINITY;
        for r in 0..c {
            eta[r] = dot(&block[r * p..(r + 1) * p], coefs);
            max = max.max(eta[r]);
        }
        if !max.is_finite() {
            return Err(ModelError::Numerical {
                what: "receiver weight",
                cluster: k,
                event: m,
            });
        }
        let chosen = risk_set_position(e.sender, e.receiver);
        let v_chosen = eta[chosen];
        let mut sum = 0.0;
        for x in eta.iter_mut() {
            *x = (*x - max).exp();
            sum += *x;
        }
        let v = v_chosen - max - sum.ln();
        if let Some(g) = grad.as_deref_mut() {
            for r in 0..c {
                let prob = eta[r] / sum;
                let w = if r == chosen { 1.0 } else { 0.0 } - prob;
                for (gi, x) in g.iter_mut().zip(&block[r * p..(r + 1) * p]) {
                    *gi += w * x;
                }
            }
        }
        if let Some(pe) = per_event.as_deref_mut() {
            pe.push(v);
        }
        total += v;
    }
    Ok(total)
}

fn route(src: &[CoefSource], g_coef: &[f64], g_fixed: &mut [f64], g_random: &mut [f64]) {
    for (s, g) in src.iter().zip(g_coef) {
        match *s {
            CoefSource::Fixed(i) => g_fixed[i] += g,
            CoefSource::Random(i) => g_random[i] += g,
        }
    }
}

pub fn sender_log_lik_at(model: &Model, eff: &EffectValues) -> Result<f64> {
    let mut total = 0.0;
    for (k, c) in model.dataset.clusters().iter().enumerate() {
        let coefs = model.sender_coefs(eff, k);
        total += sender_cluster(k, c, &model.panels.sender[k], &coefs, None, None)?;
    }
    Ok(total)
}

pub fn receiver_log_lik_at(model: &Model, eff: &EffectValues) -> Result<f64> {
    let mut total = 0.0;
    for (k, c) in model.dataset.clusters().iter().enumerate() {
        let coefs = model.receiver_coefs(eff, k);
        total += receiver_cluster(k, c, &model.panels.receiver[k], &coefs, None, None)?;
    }
    Ok(total)
}

/// Sender log-likelihood summed over clusters.
pub fn sender_log_lik(model: &Model, params: &ParameterState) -> Result<f64> {
    sender_log_lik_at(model, &params.effects()?)
}

/// Receiver log-likelihood summed over clusters.
pub fn receiver_log_lik(model: &Model, params: &ParameterState) -> Result<f64> {
    receiver_log_lik_at(model, &params.effects()?)
}

/// Per-cluster, per-event log-likelihood contributions.
pub fn event_terms(model: &Model, eff: &EffectValues) -> Result<Vec<Vec<EventTerms>>> {
    let mut out = Vec::with_capacity(model.dataset.n_clusters());
    for (k, c) in model.dataset.clusters().iter().enumerate() {
        let mut snd = Vec::with_capacity(c.n_events());
        let mut rec = Vec::with_capacity(c.n_events());
        let sc = model.sender_coefs(eff, k);
        let rc = model.receiver_coefs(eff, k);
        sender_cluster(k, c, &model.panels.sender[k], &sc, None, Some(&mut snd))?;
        receiver_cluster(k, c, &model.panels.receiver[k], &rc, None, Some(&mut rec))?;
        out.push(
            snd.into_iter()
                .zip(rec)
                .map(|(sender, receiver)| EventTerms { sender, receiver })
                .collect(),
        );
    }
    Ok(out)
}

pub(super) fn sender_ll_grad(
    model: &Model,
    eff: &EffectValues,
    g_fixed: &mut [f64],
    g_random: &mut [f64],
) -> Result<f64> {
    let p = eff.p;
    let n_stats = model.sender_sources().len();
    let mut g_coef = vec![0.0; n_stats];
    let mut total = 0.0;
    for (k, c) in model.dataset.clusters().iter().enumerate() {
        g_coef.iter_mut().for_each(|g| *g = 0.0);
        let coefs = model.sender_coefs(eff, k);
        total += sender_cluster(k, c, &model.panels.sender[k], &coefs, Some(&mut g_coef), None)?;
        route(
            model.sender_sources(),
            &g_coef,
            g_fixed,
            &mut g_random[k * p..(k + 1) * p],
        );
    }
    Ok(total)
}

pub(super) fn receiver_ll_grad(
    model: &Model,
    eff: &EffectValues,
    g_fixed: &mut [f64],
    g_random: &mut [f64],
) -> Result<f64> {
    let v = eff.v;
    let n_stats = model.receiver_sources().len();
    let mut g_coef = vec![0.0; n_stats];
    let mut total = 0.0;
    for (k, c) in model.dataset.clusters().iter().enumerate() {
        g_coef.iter_mut().for_each(|g| *g = 0.0);
        let coefs = model.receiver_coefs(eff, k);
        total += receiver_cluster(k, c, &model.panels.receiver[k], &coefs, Some(&mut g_coef), None)?;
        route(
            model.receiver_sources(),
            &g_coef,
            g_fixed,
            &mut g_random[k * v..(k + 1) * v],
        );
    }
    Ok(total)
}
