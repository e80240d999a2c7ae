//! Per-event deviance residuals and paired model comparisons.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::{event_terms, EffectValues, Model, ModelError};
use crate::sampler::diagnostics::quantile;
use crate::sampler::PosteriorDraws;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("residual sets do not line up: {0}")]
    Mismatch(String),
    #[error("draws do not match the model: {0}")]
    Draws(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, DiagnosticsError>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DevianceRecord {
    pub cluster: String,
    pub event: usize,
    pub residual: f64,
}

/// `-2` times each event's sender plus receiver log-likelihood contribution.
pub fn deviance_residuals(model: &Model, eff: &EffectValues) -> Result<Vec<DevianceRecord>> {
    let terms = event_terms(model, eff)?;
    let mut out = Vec::with_capacity(model.dataset.total_events());
    for (c, t) in model.dataset.clusters().iter().zip(terms) {
        for (m, e) in t.into_iter().enumerate() {
            let residual = -2.0 * (e.sender + e.receiver);
            if !residual.is_finite() {
                return Err(ModelError::NonFinite.into());
            }
            out.push(DevianceRecord {
                cluster: c.id().to_string(),
                event: m,
                residual,
            });
        }
    }
    Ok(out)
}

fn check_names(model: &Model, draws: &PosteriorDraws) -> Result<()> {
    let want = model.output_names();
    if draws.names != want {
        return Err(DiagnosticsError::Draws(format!(
            "{} columns in draws, {} expected by the model",
            draws.names.len(),
            want.len()
        )));
    }
    Ok(())
}

/// Cluster-level coefficients at the posterior mean of every output column.
pub fn posterior_mean_effects(model: &Model, draws: &PosteriorDraws) -> Result<EffectValues> {
    check_names(model, draws)?;
    let n = draws.rows().count();
    if n == 0 {
        return Err(DiagnosticsError::Draws("no draws".into()));
    }
    let mut mean = vec![0.0; draws.names.len()];
    for row in draws.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    Ok(model.effects_from_row(&mean)?)
}

/// Residual distribution of one event across posterior draws.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualSummary {
    pub cluster: String,
    pub event: usize,
    pub mean: f64,
    pub q025: f64,
    pub q975: f64,
}

/// Residuals evaluated at every `thin`-th pooled draw, summarized per event.
pub fn residual_distribution(
    model: &Model,
    draws: &PosteriorDraws,
    thin: usize,
) -> Result<Vec<ResidualSummary>> {
    check_names(model, draws)?;
    let rows: Vec<&Vec<f64>> = draws.rows().step_by(thin.max(1)).collect();
    if rows.is_empty() {
        return Err(DiagnosticsError::Draws("no draws".into()));
    }
    let per_draw = rows
        .par_iter()
        .map(|row| {
            let eff = model.effects_from_row(row)?;
            deviance_residuals(model, &eff)
        })
        .collect::<Result<Vec<_>>>()?;
    let first = &per_draw[0];
    Ok((0..first.len())
        .map(|i| {
            let vals: Vec<f64> = per_draw.iter().map(|r| r[i].residual).collect();
            ResidualSummary {
                cluster: first[i].cluster.clone(),
                event: first[i].event,
                mean: vals.iter().sum::<f64>() / vals.len() as f64,
                q025: quantile(&vals, 0.025),
                q975: quantile(&vals, 0.975),
            }
        })
        .collect())
}

pub fn write_residuals<W: Write>(records: &[DevianceRecord], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in records {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_residual_summary<W: Write>(rows: &[ResidualSummary], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes `cluster,event,residual_model_a,residual_model_b` for two residual sets over the
/// same events.
pub fn write_paired<W: Write>(a: &[DevianceRecord], b: &[DevianceRecord], w: W) -> Result<()> {
    if a.len() != b.len() {
        return Err(DiagnosticsError::Mismatch(format!("{} vs {} events", a.len(), b.len())));
    }
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["cluster", "event", "residual_model_a", "residual_model_b"])?;
    for (x, y) in a.iter().zip(b) {
        if x.cluster != y.cluster || x.event != y.event {
            return Err(DiagnosticsError::Mismatch(format!(
                "{}#{} vs {}#{}",
                x.cluster, x.event, y.cluster, y.event
            )));
        }
        wtr.write_record([
            x.cluster.as_str(),
            &x.event.to_string(),
            &format!("{}", x.residual),
            &format!("{}", y.residual),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
