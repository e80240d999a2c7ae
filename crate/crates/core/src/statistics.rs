//! Endogenous and exogenous statistics for the sender and receiver steps.
//!
//! Panels are dense arrays indexed `(event, candidate, statistic)`. Values at event
//! `m` only use events `0..m` and static attributes. Standardization, when enabled for
//! a statistic, is a z-score across the candidate axis of a single event.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event_data::{risk_set_actor, risk_set_position, ClusterSequence, Dataset};

#[derive(Debug, Error, PartialEq)]
pub enum StatError {
    #[error("statistic '{stat}' cannot be used in the {side} model")]
    SpecPlacement { stat: String, side: Side },
    #[error("unknown actor attribute '{0}'")]
    UnknownAttribute(String),
    #[error("unknown statistic '{0}'")]
    UnknownStatistic(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Sender,
    Receiver,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::Sender => "sender",
            Side::Receiver => "receiver",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum StatKind {
    Intercept,
    ActorAttribute(String),
    Inertia,
    /// (A→B) immediately followed by (B→A).
    PShiftAbba,
    /// (A→B) immediately followed by (A→B).
    PShiftAbab,
    /// Sender variant: after (A→B), B speaks next.
    PShiftAbb,
    /// Sender variant: after (A→B), A speaks again.
    PShiftAba,
    Outgoingness,
    Popularity,
}

impl StatKind {
    /// Resolves a statistic name. Reserved names take precedence over attributes.
    pub fn from_name(name: &str) -> StatKind {
        match name.to_ascii_lowercase().as_str() {
            "intercept" => StatKind::Intercept,
            "inertia" => StatKind::Inertia,
            "abba" | "pshift_abba" => StatKind::PShiftAbba,
            "abab" | "pshift_abab" => StatKind::PShiftAbab,
            "abb" | "pshift_abb" => StatKind::PShiftAbb,
            "aba" | "pshift_aba" => StatKind::PShiftAba,
            "outgoingness" => StatKind::Outgoingness,
            "popularity" => StatKind::Popularity,
            _ => StatKind::ActorAttribute(name.to_string()),
        }
    }

    pub fn name(&self) -> String {
        match self {
            StatKind::Intercept => "intercept".into(),
            StatKind::ActorAttribute(a) => a.clone(),
            StatKind::Inertia => "inertia".into(),
            StatKind::PShiftAbba => "abba".into(),
            StatKind::PShiftAbab => "abab".into(),
            StatKind::PShiftAbb => "abb".into(),
            StatKind::PShiftAba => "aba".into(),
            StatKind::Outgoingness => "outgoingness".into(),
            StatKind::Popularity => "popularity".into(),
        }
    }

    pub fn allowed_in(&self, side: Side) -> bool {
        match self {
            StatKind::Intercept | StatKind::PShiftAbb | StatKind::PShiftAba => side == Side::Sender,
            StatKind::Inertia | StatKind::PShiftAbba | StatKind::PShiftAbab => {
                side == Side::Receiver
            }
            StatKind::ActorAttribute(_) | StatKind::Outgoingness | StatKind::Popularity => true,
        }
    }

    /// Cumulative counts are standardized by default; indicators and attributes are not.
    pub fn default_standardize(&self) -> bool {
        matches!(
            self,
            StatKind::Inertia | StatKind::Outgoingness | StatKind::Popularity
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatisticSpec {
    pub kind: StatKind,
    pub standardize: bool,
}

impl StatisticSpec {
    pub fn new(kind: StatKind) -> Self {
        let standardize = kind.default_standardize();
        Self { kind, standardize }
    }

    pub fn raw(kind: StatKind) -> Self {
        Self {
            kind,
            standardize: false,
        }
    }

    pub fn standardized(kind: StatKind) -> Self {
        Self {
            kind,
            standardize: true,
        }
    }

    pub fn name(&self) -> String {
        self.kind.name()
    }
}

#[derive(Debug, Clone, Copy)]
enum Resolved {
    Intercept,
    Attribute(usize),
    Inertia,
    Abba,
    Abab,
    Abb,
    Aba,
    Outgoingness,
    Popularity,
}

/// Checks placement and resolves attribute names against `schema`.
fn resolve(specs: &[StatisticSpec], side: Side, schema: &[String]) -> Result<Vec<Resolved>, StatError> {
    specs
        .iter()
        .map(|s| {
            if !s.kind.allowed_in(side) {
                return Err(StatError::SpecPlacement {
                    stat: s.name(),
                    side,
                });
            }
            Ok(match &s.kind {
                StatKind::Intercept => Resolved::Intercept,
                StatKind::ActorAttribute(a) => Resolved::Attribute(
                    schema
                        .iter()
                        .position(|n| n == a)
                        .ok_or_else(|| StatError::UnknownAttribute(a.clone()))?,
                ),
                StatKind::Inertia => Resolved::Inertia,
                StatKind::PShiftAbba => Resolved::Abba,
                StatKind::PShiftAbab => Resolved::Abab,
                StatKind::PShiftAbb => Resolved::Abb,
                StatKind::PShiftAba => Resolved::Aba,
                StatKind::Outgoingness => Resolved::Outgoingness,
                StatKind::Popularity => Resolved::Popularity,
            })
        })
        .collect()
}

/// Validates a spec list for one side of the model.
pub fn check_specs(specs: &[StatisticSpec], side: Side, schema: &[String]) -> Result<(), StatError> {
    resolve(specs, side, schema).map(|_| ())
}

/// z-scores `values` in place using the sample standard deviation.
///
/// Slices of length one or with zero variance become all zeros.
pub fn standardize_in_place(values: &mut [f64]) {
    let n = values.len();
    if n < 2 {
        values.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let sd = (ss / (n - 1) as f64).sqrt();
    if sd <= f64::EPSILON * mean.abs().max(1.0) {
        values.iter_mut().for_each(|v| *v = 0.0);
    } else {
        values.iter_mut().for_each(|v| *v = (*v - mean) / sd);
    }
}

pub fn standardize_slice(values: &[f64]) -> Vec<f64> {
    let mut out = values.to_vec();
    standardize_in_place(&mut out);
    out
}

/// Running summary of a cluster's event history.
#[derive(Debug, Clone)]
pub struct History {
    n: usize,
    sent: Vec<f64>,
    received: Vec<f64>,
    dyad: Vec<f64>,
    last: Option<(usize, usize)>,
}

impl History {
    pub fn new(n_actors: usize) -> Self {
        Self {
            n: n_actors,
            sent: vec![0.0; n_actors],
            received: vec![0.0; n_actors],
            dyad: vec![0.0; n_actors * n_actors],
            last: None,
        }
    }

    pub fn push(&mut self, sender: usize, receiver: usize) {
        self.sent[sender] += 1.0;
        self.received[receiver] += 1.0;
        self.dyad[sender * self.n + receiver] += 1.0;
        self.last = Some((sender, receiver));
    }
}

/// Bound statistic list for one side of the model, ready for incremental evaluation.
#[derive(Debug, Clone)]
pub struct StatEvaluator {
    resolved: Vec<Resolved>,
    standardize: Vec<bool>,
}

impl StatEvaluator {
    pub fn new(specs: &[StatisticSpec], side: Side, schema: &[String]) -> Result<Self, StatError> {
        Ok(Self {
            resolved: resolve(specs, side, schema)?,
            standardize: specs.iter().map(|s| s.standardize).collect(),
        })
    }

    pub fn n_stats(&self) -> usize {
        self.resolved.len()
    }

    /// Fills `out` (candidate-major, `N × P`) with sender statistics for the next event.
    pub fn sender_slice(&self, cluster: &ClusterSequence, h: &History, out: &mut [f64]) {
        let p = self.resolved.len();
        let n = h.n;
        debug_assert_eq!(out.len(), n * p);
        for i in 0..n {
            let row = &mut out[i * p..(i + 1) * p];
            for (slot, stat) in row.iter_mut().zip(&self.resolved) {
                *slot = match *stat {
                    Resolved::Intercept => 1.0,
                    Resolved::Attribute(a) => cluster.attributes(i)[a],
                    Resolved::Outgoingness => h.sent[i],
                    Resolved::Popularity => h.received[i],
                    Resolved::Abb => indicator(matches!(h.last, Some((a, b)) if b == i && a != i)),
                    Resolved::Aba => indicator(matches!(h.last, Some((a, _)) if a == i)),
                    Resolved::Inertia | Resolved::Abba | Resolved::Abab => {
                        unreachable!("placement checked at construction")
                    }
                };
            }
        }
        self.standardize_columns(out, n);
    }

    /// Fills `out` (`(N-1) × P`) with receiver statistics for candidates of `sender`.
    pub fn receiver_slice(
        &self,
        cluster: &ClusterSequence,
        h: &History,
        sender: usize,
        out: &mut [f64],
    ) {
        let p = self.resolved.len();
        let n = h.n;
        let c = n - 1;
        debug_assert_eq!(out.len(), c * p);
        for pos in 0..c {
            let r = risk_set_actor(sender, pos);
            let row = &mut out[pos * p..(pos + 1) * p];
            for (slot, stat) in row.iter_mut().zip(&self.resolved) {
                *slot = match *stat {
                    Resolved::Attribute(a) => cluster.attributes(r)[a],
                    Resolved::Inertia => h.dyad[sender * n + r],
                    Resolved::Abba => indicator(h.last == Some((r, sender))),
                    Resolved::Abab => indicator(h.last == Some((sender, r))),
                    Resolved::Outgoingness => h.sent[r],
                    Resolved::Popularity => h.received[r],
                    Resolved::Intercept | Resolved::Abb | Resolved::Aba => {
                        unreachable!("placement checked at construction")
                    }
                };
            }
        }
        self.standardize_columns(out, c);
    }

    fn standardize_columns(&self, out: &mut [f64], n_cand: usize) {
        let p = self.resolved.len();
        let mut col = vec![0.0; n_cand];
        for (j, &flag) in self.standardize.iter().enumerate() {
            if !flag {
                continue;
            }
            for i in 0..n_cand {
                col[i] = out[i * p + j];
            }
            standardize_in_place(&mut col);
            for i in 0..n_cand {
                out[i * p + j] = col[i];
            }
        }
    }
}

#[inline]
fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Sender statistics of one cluster, indexed `(event, candidate sender, statistic)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SenderPanel {
    pub n_events: usize,
    pub n_candidates: usize,
    pub n_stats: usize,
    values: Vec<f64>,
    /// Statistics in force between the last event and the window end, when the window
    /// extends past the last event.
    trailing: Option<Vec<f64>>,
    summary: Option<StaticSenders>,
}

/// Sufficient statistics of a sender panel whose rows are the same at every event.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticSenders {
    /// Events sent by each actor.
    pub counts: Vec<f64>,
    /// Length of the observation window.
    pub exposure: f64,
}

/// Sufficient statistics of a receiver panel whose rows depend only on the sender.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticReceivers {
    /// For each sender, an event whose block is that sender's rows.
    pub first: Vec<Option<usize>>,
    /// `counts[s][pos]`: events from `s` to risk-set position `pos`.
    pub counts: Vec<Vec<f64>>,
}

impl SenderPanel {
    /// Candidate-major `N × P` block for event `m`.
    pub fn event(&self, m: usize) -> &[f64] {
        let w = self.n_candidates * self.n_stats;
        &self.values[m * w..(m + 1) * w]
    }

    pub fn value(&self, m: usize, candidate: usize, stat: usize) -> f64 {
        self.event(m)[candidate * self.n_stats + stat]
    }

    pub fn trailing(&self) -> Option<&[f64]> {
        self.trailing.as_deref()
    }

    /// Present when no statistic changes over the sequence.
    pub fn static_summary(&self) -> Option<&StaticSenders> {
        self.summary.as_ref()
    }
}

/// Receiver statistics of one cluster, indexed `(event, risk-set position, statistic)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverPanel {
    pub n_events: usize,
    pub n_candidates: usize,
    pub n_stats: usize,
    values: Vec<f64>,
    summary: Option<StaticReceivers>,
}

impl ReceiverPanel {
    pub fn event(&self, m: usize) -> &[f64] {
        let w = self.n_candidates * self.n_stats;
        &self.values[m * w..(m + 1) * w]
    }

    pub fn value(&self, m: usize, candidate: usize, stat: usize) -> f64 {
        self.event(m)[candidate * self.n_stats + stat]
    }

    /// Present when every sender sees the same rows at each of its events.
    pub fn static_summary(&self) -> Option<&StaticReceivers> {
        self.summary.as_ref()
    }
}

pub fn compute_sender_panel(
    cluster: &ClusterSequence,
    specs: &[StatisticSpec],
    schema: &[String],
) -> Result<SenderPanel, StatError> {
    let eval = StatEvaluator::new(specs, Side::Sender, schema)?;
    let n = cluster.n_actors();
    let p = eval.n_stats();
    let m_total = cluster.n_events();
    let w = n * p;
    let mut values = vec![0.0; m_total * w];
    let mut h = History::new(n);
    for (m, e) in cluster.events().iter().enumerate() {
        eval.sender_slice(cluster, &h, &mut values[m * w..(m + 1) * w]);
        h.push(e.sender, e.receiver);
    }
    let last = cluster.events().last().map_or(0.0, |e| e.time);
    let trailing = (cluster.tau() > last).then(|| {
        let mut t = vec![0.0; w];
        eval.sender_slice(cluster, &h, &mut t);
        t
    });
    let first = &values[..w.min(values.len())];
    let unchanging = m_total > 0
        && values.chunks(w.max(1)).all(|b| b == first)
        && trailing.as_deref().is_none_or(|t| t == first);
    let summary = unchanging.then(|| {
        let mut counts = vec![0.0; n];
        for e in cluster.events() {
            counts[e.sender] += 1.0;
        }
        StaticSenders {
            counts,
            exposure: if trailing.is_some() { cluster.tau() } else { last },
        }
    });
    Ok(SenderPanel {
        n_events: m_total,
        n_candidates: n,
        n_stats: p,
        values,
        trailing,
        summary,
    })
}

pub fn compute_receiver_panel(
    cluster: &ClusterSequence,
    specs: &[StatisticSpec],
    schema: &[String],
) -> Result<ReceiverPanel, StatError> {
    let eval = StatEvaluator::new(specs, Side::Receiver, schema)?;
    let n = cluster.n_actors();
    let p = eval.n_stats();
    let c = n.saturating_sub(1);
    let w = c * p;
    let m_total = cluster.n_events();
    let mut values = vec![0.0; m_total * w];
    let mut h = History::new(n);
    for (m, e) in cluster.events().iter().enumerate() {
        eval.receiver_slice(cluster, &h, e.sender, &mut values[m * w..(m + 1) * w]);
        h.push(e.sender, e.receiver);
    }
    let mut first: Vec<Option<usize>> = vec![None; n];
    let mut counts = vec![vec![0.0; c]; n];
    let mut unchanging = m_total > 0;
    for (m, e) in cluster.events().iter().enumerate() {
        let f = *first[e.sender].get_or_insert(m);
        if values[m * w..(m + 1) * w] != values[f * w..(f + 1) * w] {
            unchanging = false;
            break;
        }
        counts[e.sender][risk_set_position(e.sender, e.receiver)] += 1.0;
    }
    let summary = unchanging.then_some(StaticReceivers { first, counts });
    Ok(ReceiverPanel {
        n_events: m_total,
        n_candidates: c,
        n_stats: p,
        values,
        summary,
    })
}

/// Sender and receiver panels for every cluster of a dataset.
#[derive(Debug, Clone)]
pub struct Panels {
    pub sender_specs: Vec<StatisticSpec>,
    pub receiver_specs: Vec<StatisticSpec>,
    pub sender: Vec<SenderPanel>,
    pub receiver: Vec<ReceiverPanel>,
}

impl Panels {
    pub fn compute(
        dataset: &Dataset,
        sender_specs: &[StatisticSpec],
        receiver_specs: &[StatisticSpec],
    ) -> Result<Self, StatError> {
        let schema = dataset.attribute_names();
        check_specs(sender_specs, Side::Sender, schema)?;
        check_specs(receiver_specs, Side::Receiver, schema)?;
        let sender = dataset
            .clusters()
            .par_iter()
            .map(|c| compute_sender_panel(c, sender_specs, schema))
            .collect::<Result<Vec<_>, _>>()?;
        let receiver = dataset
            .clusters()
            .par_iter()
            .map(|c| compute_receiver_panel(c, receiver_specs, schema))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            sender_specs: sender_specs.to_vec(),
            receiver_specs: receiver_specs.to_vec(),
            sender,
            receiver,
        })
    }
}

/// Dumps a sender panel as `event,candidate,<stat names>`.
pub fn write_sender_panel<W: Write>(
    cluster: &ClusterSequence,
    panel: &SenderPanel,
    specs: &[StatisticSpec],
    w: W,
) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["event".to_string(), "candidate".to_string()];
    header.extend(specs.iter().map(StatisticSpec::name));
    wtr.write_record(&header)?;
    for m in 0..panel.n_events {
        for i in 0..panel.n_candidates {
            let mut row = vec![m.to_string(), cluster.actors()[i].clone()];
            row.extend((0..panel.n_stats).map(|p| panel.value(m, i, p).to_string()));
            wtr.write_record(&row)?;
        }
    }
    wtr.flush()
}

/// Dumps a receiver panel; candidates are labeled by actor id.
pub fn write_receiver_panel<W: Write>(
    cluster: &ClusterSequence,
    panel: &ReceiverPanel,
    specs: &[StatisticSpec],
    w: W,
) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["event".to_string(), "candidate".to_string()];
    header.extend(specs.iter().map(StatisticSpec::name));
    wtr.write_record(&header)?;
    for (m, e) in cluster.events().iter().enumerate() {
        for pos in 0..panel.n_candidates {
            let r = risk_set_actor(e.sender, pos);
            let mut row = vec![m.to_string(), cluster.actors()[r].clone()];
            row.extend((0..panel.n_stats).map(|p| panel.value(m, pos, p).to_string()));
            wtr.write_record(&row)?;
        }
    }
    wtr.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_data::IndexedEvent;
    use proptest::prelude::*;

    fn cluster(n: usize, evs: &[(usize, usize)]) -> ClusterSequence {
        let actors = (0..n).map(|i| format!("a{i}")).collect();
        let attrs = (0..n).map(|i| vec![i as f64]).collect();
        let events = evs
            .iter()
            .enumerate()
            .map(|(m, &(s, r))| IndexedEvent {
                time: (m + 1) as f64,
                sender: s,
                receiver: r,
            })
            .collect::<Vec<_>>();
        let tau = events.last().map_or(0.0, |e: &IndexedEvent| e.time);
        ClusterSequence::new_unchecked("c", actors, attrs, events, tau)
    }

    fn schema() -> Vec<String> {
        vec!["x".into()]
    }

    #[test]
    fn standardize_examples() {
        assert_eq!(standardize_slice(&[1.0, 2.0, 3.0]), vec![-1.0, 0.0, 1.0]);
        assert_eq!(standardize_slice(&[5.0, 5.0, 5.0]), vec![0.0; 3]);
        assert_eq!(standardize_slice(&[7.0]), vec![0.0]);
    }

    #[test]
    fn outgoingness_counts() {
        // A=0, B=1, C=2: (A→B), (A→C), (B→A), then one more event
        let c = cluster(3, &[(0, 1), (0, 2), (1, 0), (2, 0)]);
        let specs = [StatisticSpec::raw(StatKind::Outgoingness)];
        let p = compute_sender_panel(&c, &specs, &schema()).unwrap();
        for i in 0..3 {
            assert_eq!(p.value(0, i, 0), 0.0);
        }
        assert_eq!(p.value(3, 0, 0), 2.0);
        assert_eq!(p.value(3, 1, 0), 1.0);
        assert_eq!(p.value(3, 2, 0), 0.0);
    }

    #[test]
    fn sender_participation_shifts() {
        let c = cluster(3, &[(0, 1), (1, 0)]);
        let specs = [
            StatisticSpec::new(StatKind::PShiftAbb),
            StatisticSpec::new(StatKind::PShiftAba),
        ];
        let p = compute_sender_panel(&c, &specs, &schema()).unwrap();
        // event 1 follows (A→B)
        assert_eq!(
            (0..3).map(|i| p.value(1, i, 0)).collect::<Vec<_>>(),
            vec![0.0, 1.0, 0.0]
        );
        assert_eq!(
            (0..3).map(|i| p.value(1, i, 1)).collect::<Vec<_>>(),
            vec![1.0, 0.0, 0.0]
        );
        // no previous event at m = 0
        assert!((0..3).all(|i| p.value(0, i, 0) == 0.0 && p.value(0, i, 1) == 0.0));
    }

    #[test]
    fn receiver_inertia_and_shifts() {
        let c = cluster(3, &[(0, 1), (0, 1), (1, 0), (0, 2)]);
        let specs = [
            StatisticSpec::raw(StatKind::Inertia),
            StatisticSpec::new(StatKind::PShiftAbba),
            StatisticSpec::new(StatKind::PShiftAbab),
        ];
        let p = compute_receiver_panel(&c, &specs, &schema()).unwrap();
        // event 3 has sender A; candidate B is position 0
        assert_eq!(p.value(3, 0, 0), 2.0);
        assert_eq!(p.value(3, 1, 0), 0.0);

        // event 2: previous (A→B), sender B, candidate A at position 0 gets ABBA
        assert_eq!(p.value(2, 0, 1), 1.0);
        assert_eq!(p.value(2, 1, 1), 0.0);
        // event 1: previous (A→B), sender A, candidate B gets ABAB
        assert_eq!(p.value(1, 0, 2), 1.0);
        assert_eq!(p.value(1, 1, 2), 0.0);
    }

    #[test]
    fn placement_errors() {
        let c = cluster(3, &[(0, 1)]);
        let err = compute_sender_panel(&c, &[StatisticSpec::new(StatKind::Inertia)], &schema())
            .unwrap_err();
        assert!(matches!(err, StatError::SpecPlacement { .. }));
        let err =
            compute_receiver_panel(&c, &[StatisticSpec::new(StatKind::Intercept)], &schema())
                .unwrap_err();
        assert!(matches!(err, StatError::SpecPlacement { .. }));
        let err = compute_receiver_panel(
            &c,
            &[StatisticSpec::new(StatKind::ActorAttribute("nope".into()))],
            &schema(),
        )
        .unwrap_err();
        assert_eq!(err, StatError::UnknownAttribute("nope".into()));
    }

    #[test]
    fn trailing_slice_when_window_extends() {
        let mut c = cluster(3, &[(0, 1), (1, 2)]);
        let specs = [StatisticSpec::raw(StatKind::Outgoingness)];
        assert!(compute_sender_panel(&c, &specs, &schema()).unwrap().trailing().is_none());
        c = ClusterSequence::new_unchecked(
            "c",
            c.actors().to_vec(),
            (0..3).map(|i| vec![i as f64]).collect(),
            c.events().to_vec(),
            5.0,
        );
        let p = compute_sender_panel(&c, &specs, &schema()).unwrap();
        assert_eq!(p.trailing().unwrap(), &[1.0, 1.0, 0.0]);
    }

    fn arb_events(n: usize, m: usize) -> impl Strategy<Value = Vec<(usize, usize)>> {
        proptest::collection::vec((0..n, 1..n), m).prop_map(move |v| {
            v.into_iter().map(|(s, off)| (s, (s + off) % n)).collect()
        })
    }

    fn all_specs() -> (Vec<StatisticSpec>, Vec<StatisticSpec>) {
        let snd = vec![
            StatisticSpec::new(StatKind::Intercept),
            StatisticSpec::new(StatKind::ActorAttribute("x".into())),
            StatisticSpec::new(StatKind::PShiftAbb),
            StatisticSpec::new(StatKind::PShiftAba),
            StatisticSpec::new(StatKind::Outgoingness),
            StatisticSpec::new(StatKind::Popularity),
        ];
        let rec = vec![
            StatisticSpec::new(StatKind::ActorAttribute("x".into())),
            StatisticSpec::new(StatKind::Inertia),
            StatisticSpec::new(StatKind::PShiftAbba),
            StatisticSpec::new(StatKind::PShiftAbab),
            StatisticSpec::new(StatKind::Outgoingness),
            StatisticSpec::new(StatKind::Popularity),
        ];
        (snd, rec)
    }

    proptest! {
        #[test]
        fn panels_are_causal(evs in arb_events(5, 12), cut in 1usize..11, alt in arb_events(5, 12)) {
            let (snd, rec) = all_specs();
            let a = cluster(5, &evs);
            let mut mixed = evs[..cut].to_vec();
            mixed.extend_from_slice(&alt[cut..]);
            let b = cluster(5, &mixed);
            let pa = compute_sender_panel(&a, &snd, &schema()).unwrap();
            let pb = compute_sender_panel(&b, &snd, &schema()).unwrap();
            for m in 0..=cut {
                prop_assert_eq!(pa.event(m), pb.event(m));
            }
            let ra = compute_receiver_panel(&a, &rec, &schema()).unwrap();
            let rb = compute_receiver_panel(&b, &rec, &schema()).unwrap();
            // receiver slices also depend on the current sender
            for m in 0..cut {
                prop_assert_eq!(ra.event(m), rb.event(m));
            }
        }

        #[test]
        fn standardized_columns_have_unit_moments(evs in arb_events(6, 15)) {
            let (snd, _) = all_specs();
            let c = cluster(6, &evs);
            let p = compute_sender_panel(&c, &snd, &schema()).unwrap();
            for m in 0..p.n_events {
                for (j, spec) in snd.iter().enumerate() {
                    if !spec.standardize { continue; }
                    let col: Vec<f64> = (0..6).map(|i| p.value(m, i, j)).collect();
                    let mean = col.iter().sum::<f64>() / 6.0;
                    let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 5.0;
                    prop_assert!(mean.abs() < 1e-12);
                    prop_assert!(var == 0.0 || (var.sqrt() - 1.0).abs() < 1e-10);
                }
            }
        }

        #[test]
        fn shifts_are_binary_and_unique(evs in arb_events(5, 12)) {
            let (snd, rec) = all_specs();
            let c = cluster(5, &evs);
            let p = compute_sender_panel(&c, &snd, &schema()).unwrap();
            let r = compute_receiver_panel(&c, &rec, &schema()).unwrap();
            for m in 0..c.n_events() {
                for j in [2usize, 3] {
                    let col: Vec<f64> = (0..5).map(|i| p.value(m, i, j)).collect();
                    prop_assert!(col.iter().all(|&v| v == 0.0 || v == 1.0));
                    prop_assert!(col.iter().sum::<f64>() <= 1.0);
                }
                for j in [2usize, 3] {
                    let col: Vec<f64> = (0..4).map(|i| r.value(m, i, j)).collect();
                    prop_assert!(col.iter().all(|&v| v == 0.0 || v == 1.0));
                    prop_assert!(col.iter().sum::<f64>() <= 1.0);
                }
            }
        }

        #[test]
        fn raw_inertia_nondecreasing(evs in arb_events(4, 15)) {
            let c = cluster(4, &evs);
            let mut h = History::new(4);
            let mut prev = vec![0.0; 16];
            for e in c.events() {
                h.push(e.sender, e.receiver);
                for k in 0..16 {
                    prop_assert!(h.dyad[k] >= prev[k]);
                }
                prev = h.dyad.clone();
            }
        }
    }
}
