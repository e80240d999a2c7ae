//! Parsing, validation and indexing of multi-cluster relational event sequences.
//!
//! Three CSV inputs are understood:
//!
//! * events: `cluster,time,sender,receiver`
//! * actors: `cluster,actor,<attr>...` (numeric attribute cells)
//! * tau (optional): `cluster,tau`
//!
//! Actor identifiers are arbitrary strings. Inside a validated [`ClusterSequence`]
//! they are mapped to dense indices following the roster order of the actors file.

use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("self-loop at line {line}: sender and receiver are both '{actor}'")]
    SelfLoop { line: u64, actor: String },
    #[error("invalid time at line {line}: {time}")]
    Time { line: u64, time: f64 },
    #[error("duplicate actor '{actor}' in cluster '{cluster}'")]
    DuplicateActor { cluster: String, actor: String },
    #[error("event times not strictly increasing in cluster '{cluster}' at event index {index}")]
    NonMonotoneTime { cluster: String, index: usize },
    #[error("unknown actor '{actor}' in cluster '{cluster}'")]
    UnknownActor { cluster: String, actor: String },
    #[error("cluster '{cluster}' is degenerate: {reason}")]
    DegenerateCluster { cluster: String, reason: String },
    #[error("duplicate cluster id '{0}'")]
    DuplicateCluster(String),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// One raw event as read from the events file.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub cluster: String,
    pub time: f64,
    pub sender: String,
    pub receiver: String,
}

/// Per-cluster actor rosters with dense attribute vectors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ActorTable {
    /// Attribute names, in header order.
    pub schema: Vec<String>,
    /// Clusters in order of first appearance.
    pub clusters: Vec<ClusterRoster>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterRoster {
    pub cluster: String,
    pub actors: Vec<String>,
    pub attributes: Vec<Vec<f64>>,
}

impl ActorTable {
    fn roster(&self, cluster: &str) -> Option<&ClusterRoster> {
        self.clusters.iter().find(|r| r.cluster == cluster)
    }
}

/// An event with actor identifiers replaced by roster indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexedEvent {
    pub time: f64,
    pub sender: usize,
    pub receiver: usize,
}

/// One ordered relational event sequence with its roster and attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSequence {
    id: String,
    actors: Vec<String>,
    index: HashMap<String, usize>,
    attributes: Vec<Vec<f64>>,
    events: Vec<IndexedEvent>,
    tau: f64,
}

impl ClusterSequence {
    /// Builds a cluster without the ingest checks on event count and window end.
    ///
    /// Intended for tests that need clusters with zero events. Actor indices in
    /// `events` must still be in range.
    #[doc(hidden)]
    pub fn new_unchecked(
        id: impl Into<String>,
        actors: Vec<String>,
        attributes: Vec<Vec<f64>>,
        events: Vec<IndexedEvent>,
        tau: f64,
    ) -> Self {
        let index = actors
            .iter()
            .enumerate()
            .map(|(i, a)| (a.clone(), i))
            .collect();
        Self {
            id: id.into(),
            actors,
            index,
            attributes,
            events,
            tau,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn actors(&self) -> &[String] {
        &self.actors
    }

    pub fn n_actors(&self) -> usize {
        self.actors.len()
    }

    pub fn events(&self) -> &[IndexedEvent] {
        &self.events
    }

    pub fn n_events(&self) -> usize {
        self.events.len()
    }

    /// Observation-window end.
    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Attribute vector of actor `i`, aligned with the dataset schema.
    pub fn attributes(&self, actor: usize) -> &[f64] {
        &self.attributes[actor]
    }

    pub fn actor_index(&self, actor: &str) -> Option<usize> {
        self.index.get(actor).copied()
    }

    /// Keeps only the first `m` events; the window end moves to the last kept event.
    pub fn truncated(&self, m: usize) -> ClusterSequence {
        let m = m.min(self.events.len());
        let mut out = self.clone();
        out.events.truncate(m);
        out.tau = out.events.last().map_or(0.0, |e| e.time);
        out
    }

    /// Candidate receivers for `sender`: the roster without the sender, in roster order.
    pub fn receiver_risk_set(&self, sender: &str) -> Result<Vec<&str>> {
        let s = self.actor_index(sender).ok_or_else(|| DataError::UnknownActor {
            cluster: self.id.clone(),
            actor: sender.to_string(),
        })?;
        Ok(self
            .actors
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != s)
            .map(|(_, a)| a.as_str())
            .collect())
    }
}

/// Dense index of the risk-set position of `receiver` among the candidates of `sender`.
#[inline]
pub fn risk_set_position(sender: usize, receiver: usize) -> usize {
    if receiver < sender {
        receiver
    } else {
        receiver - 1
    }
}

/// Roster index of the candidate at risk-set position `pos` for `sender`.
#[inline]
pub fn risk_set_actor(sender: usize, pos: usize) -> usize {
    if pos < sender {
        pos
    } else {
        pos + 1
    }
}

/// A validated collection of clusters sharing one attribute schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    clusters: Vec<ClusterSequence>,
    attribute_names: Vec<String>,
}

impl Dataset {
    #[doc(hidden)]
    pub fn new_unchecked(clusters: Vec<ClusterSequence>, attribute_names: Vec<String>) -> Self {
        Self {
            clusters,
            attribute_names,
        }
    }

    pub fn clusters(&self) -> &[ClusterSequence] {
        &self.clusters
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn attribute_names(&self) -> &[String] {
        &self.attribute_names
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attribute_names.iter().position(|n| n == name)
    }

    /// Total number of actors across clusters.
    pub fn total_actors(&self) -> usize {
        self.clusters.iter().map(|c| c.n_actors()).sum()
    }

    pub fn total_events(&self) -> usize {
        self.clusters.iter().map(|c| c.n_events()).sum()
    }

    /// Keeps the first `⌈f·M_k⌉` events of every cluster.
    pub fn truncate_fraction(&self, f: f64) -> Result<Dataset> {
        if !(f > 0.0 && f <= 1.0) {
            return Err(DataError::Parse {
                line: 0,
                msg: format!("sequence fraction must lie in (0, 1], got {f}"),
            });
        }
        let clusters = self
            .clusters
            .iter()
            .map(|c| c.truncated(fraction_count(c.n_events(), f)))
            .collect();
        Ok(Dataset {
            clusters,
            attribute_names: self.attribute_names.clone(),
        })
    }

    /// Splits the dataset back into raw inputs, suitable for [`validate_dataset`].
    pub fn to_raw(&self) -> (Vec<Event>, ActorTable, Vec<(String, f64)>) {
        let mut events = Vec::with_capacity(self.total_events());
        let mut rosters = Vec::with_capacity(self.clusters.len());
        let mut taus = Vec::with_capacity(self.clusters.len());
        for c in &self.clusters {
            for e in &c.events {
                events.push(Event {
                    cluster: c.id.clone(),
                    time: e.time,
                    sender: c.actors[e.sender].clone(),
                    receiver: c.actors[e.receiver].clone(),
                });
            }
            rosters.push(ClusterRoster {
                cluster: c.id.clone(),
                actors: c.actors.clone(),
                attributes: c.attributes.clone(),
            });
            taus.push((c.id.clone(), c.tau));
        }
        (
            events,
            ActorTable {
                schema: self.attribute_names.clone(),
                clusters: rosters,
            },
            taus,
        )
    }

    pub fn write_events<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["cluster", "time", "sender", "receiver"])?;
        for c in &self.clusters {
            for e in &c.events {
                wtr.write_record([
                    c.id.as_str(),
                    &format!("{}", e.time),
                    &c.actors[e.sender],
                    &c.actors[e.receiver],
                ])?;
            }
        }
        wtr.flush()
    }

    pub fn write_actors<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["cluster".to_string(), "actor".to_string()];
        header.extend(self.attribute_names.iter().cloned());
        wtr.write_record(&header)?;
        for c in &self.clusters {
            for (a, attrs) in c.actors.iter().zip(&c.attributes) {
                let mut row = vec![c.id.clone(), a.clone()];
                row.extend(attrs.iter().map(|v| format!("{v}")));
                wtr.write_record(&row)?;
            }
        }
        wtr.flush()
    }

    pub fn write_tau<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["cluster", "tau"])?;
        for c in &self.clusters {
            wtr.write_record([c.id.as_str(), &format!("{}", c.tau)])?;
        }
        wtr.flush()
    }
}

/// Number of events kept by a sequence fraction `f`: `⌈f·m⌉`, at least one when `m > 0`.
pub fn fraction_count(m: usize, f: f64) -> usize {
    // guard against 0.2 * 85 style products landing a hair above an integer
    let raw = f * m as f64;
    let rounded = raw.round();
    let k = if (raw - rounded).abs() < 1e-9 {
        rounded
    } else {
        raw.ceil()
    };
    (k as usize).clamp(usize::from(m > 0), m)
}

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn csv_err(e: csv::Error) -> DataError {
    let line = e.position().map_or(0, |p| p.line());
    DataError::Parse {
        line,
        msg: e.to_string(),
    }
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .has_headers(true)
        .from_reader(r)
}

fn check_header(rdr: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<Vec<String>> {
    let header = rdr.headers().map_err(csv_err)?.clone();
    let names: Vec<String> = header.iter().map(str::to_string).collect();
    if names.len() < expected.len() || names.iter().zip(expected).any(|(a, b)| a != b) {
        return Err(DataError::Parse {
            line: 1,
            msg: format!(
                "expected header starting with '{}', found '{}'",
                expected.join(","),
                names.join(",")
            ),
        });
    }
    Ok(names)
}

fn parse_f64(cell: &str, line: u64, what: &str) -> Result<f64> {
    cell.parse::<f64>().map_err(|_| DataError::Parse {
        line,
        msg: format!("non-numeric {what} '{cell}'"),
    })
}

/// Reads an events CSV file.
pub fn parse_events(path: impl AsRef<Path>) -> Result<Vec<Event>> {
    parse_events_from(open(path.as_ref())?)
}

pub fn parse_events_from<R: Read>(r: R) -> Result<Vec<Event>> {
    let mut rdr = reader(r);
    let header = check_header(&mut rdr, &["cluster", "time", "sender", "receiver"])?;
    if header.len() != 4 {
        return Err(DataError::Parse {
            line: 1,
            msg: "events file must have exactly 4 columns".into(),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = line_of(&rec);
        let time = parse_f64(&rec[1], line, "time")?;
        if !time.is_finite() || time < 0.0 {
            return Err(DataError::Time { line, time });
        }
        let (sender, receiver) = (rec[2].to_string(), rec[3].to_string());
        if sender == receiver {
            return Err(DataError::SelfLoop {
                line,
                actor: sender,
            });
        }
        out.push(Event {
            cluster: rec[0].to_string(),
            time,
            sender,
            receiver,
        });
    }
    Ok(out)
}

/// Reads an actors CSV file. The header tail after `cluster,actor` is the attribute schema.
pub fn parse_actors(path: impl AsRef<Path>) -> Result<ActorTable> {
    parse_actors_from(open(path.as_ref())?)
}

pub fn parse_actors_from<R: Read>(r: R) -> Result<ActorTable> {
    let mut rdr = reader(r);
    let header = check_header(&mut rdr, &["cluster", "actor"])?;
    let schema: Vec<String> = header[2..].to_vec();
    let mut table = ActorTable {
        schema,
        clusters: Vec::new(),
    };
    let mut seen: BTreeSet<(String, String)> = BTreeSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = line_of(&rec);
        let (cluster, actor) = (rec[0].to_string(), rec[1].to_string());
        if !seen.insert((cluster.clone(), actor.clone())) {
            return Err(DataError::DuplicateActor { cluster, actor });
        }
        let attrs = (2..rec.len())
            .map(|i| parse_f64(&rec[i], line, "attribute"))
            .collect::<Result<Vec<_>>>()?;
        match table.clusters.iter_mut().find(|c| c.cluster == cluster) {
            Some(roster) => {
                roster.actors.push(actor);
                roster.attributes.push(attrs);
            }
            None => table.clusters.push(ClusterRoster {
                cluster,
                actors: vec![actor],
                attributes: vec![attrs],
            }),
        }
    }
    Ok(table)
}

/// Reads an optional `cluster,tau` window-end override file.
pub fn parse_tau(path: impl AsRef<Path>) -> Result<Vec<(String, f64)>> {
    parse_tau_from(open(path.as_ref())?)
}

pub fn parse_tau_from<R: Read>(r: R) -> Result<Vec<(String, f64)>> {
    let mut rdr = reader(r);
    check_header(&mut rdr, &["cluster", "tau"])?;
    let mut out: Vec<(String, f64)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = line_of(&rec);
        let tau = parse_f64(&rec[1], line, "tau")?;
        if !tau.is_finite() || tau < 0.0 {
            return Err(DataError::Time { line, time: tau });
        }
        if out.iter().any(|(c, _)| c == &rec[0]) {
            return Err(DataError::DuplicateCluster(rec[0].to_string()));
        }
        out.push((rec[0].to_string(), tau));
    }
    Ok(out)
}

/// Assembles and checks a [`Dataset`] from parsed events, rosters and optional window ends.
///
/// Clusters appear in the order of the actors table. Every cluster needs at least two
/// actors, at least one event, strictly increasing event times and a window end no
/// earlier than its last event (the last event time when no override is given).
pub fn validate_dataset(
    events: &[Event],
    actors: &ActorTable,
    tau: &[(String, f64)],
) -> Result<Dataset> {
    let mut ids: BTreeSet<&str> = BTreeSet::new();
    for r in &actors.clusters {
        if !ids.insert(&r.cluster) {
            return Err(DataError::DuplicateCluster(r.cluster.clone()));
        }
        if r.attributes.iter().any(|a| a.len() != actors.schema.len()) {
            return Err(DataError::Parse {
                line: 0,
                msg: format!("attribute row length mismatch in cluster '{}'", r.cluster),
            });
        }
    }
    let mut grouped: HashMap<&str, Vec<&Event>> = HashMap::new();
    for e in events {
        if actors.roster(&e.cluster).is_none() {
            return Err(DataError::UnknownActor {
                cluster: e.cluster.clone(),
                actor: e.sender.clone(),
            });
        }
        grouped.entry(e.cluster.as_str()).or_default().push(e);
    }
    for (c, _) in tau {
        if actors.roster(c).is_none() {
            return Err(DataError::DegenerateCluster {
                cluster: c.clone(),
                reason: "window end given for a cluster without actors".into(),
            });
        }
    }

    let mut clusters = Vec::with_capacity(actors.clusters.len());
    for roster in &actors.clusters {
        let id = roster.cluster.clone();
        if roster.actors.len() < 2 {
            return Err(DataError::DegenerateCluster {
                cluster: id,
                reason: format!("{} actor(s), at least 2 required", roster.actors.len()),
            });
        }
        let raw = grouped.get(roster.cluster.as_str()).cloned().unwrap_or_default();
        if raw.is_empty() {
            return Err(DataError::DegenerateCluster {
                cluster: id,
                reason: "no events".into(),
            });
        }
        let seq = ClusterSequence::new_unchecked(
            id.clone(),
            roster.actors.clone(),
            roster.attributes.clone(),
            Vec::new(),
            0.0,
        );
        let mut indexed = Vec::with_capacity(raw.len());
        let mut last = f64::NEG_INFINITY;
        for (i, e) in raw.iter().enumerate() {
            let lookup = |a: &str| {
                seq.actor_index(a).ok_or_else(|| DataError::UnknownActor {
                    cluster: id.clone(),
                    actor: a.to_string(),
                })
            };
            let sender = lookup(&e.sender)?;
            let receiver = lookup(&e.receiver)?;
            if sender == receiver {
                return Err(DataError::SelfLoop {
                    line: 0,
                    actor: e.sender.clone(),
                });
            }
            if !e.time.is_finite() || e.time < 0.0 {
                return Err(DataError::Time {
                    line: 0,
                    time: e.time,
                });
            }
            if e.time <= last {
                return Err(DataError::NonMonotoneTime {
                    cluster: id,
                    index: i,
                });
            }
            last = e.time;
            indexed.push(IndexedEvent {
                time: e.time,
                sender,
                receiver,
            });
        }
        let window_end = match tau.iter().find(|(c, _)| c == &id) {
            Some(&(_, t)) if t < last => {
                return Err(DataError::DegenerateCluster {
                    cluster: id,
                    reason: format!("window end {t} precedes last event time {last}"),
                })
            }
            Some(&(_, t)) => t,
            None => last,
        };
        clusters.push(ClusterSequence {
            events: indexed,
            tau: window_end,
            ..seq
        });
    }
    if clusters.is_empty() {
        return Err(DataError::DegenerateCluster {
            cluster: String::new(),
            reason: "dataset has no clusters".into(),
        });
    }
    Ok(Dataset {
        clusters,
        attribute_names: actors.schema.clone(),
    })
}

/// Convenience loader for the three CSV inputs.
pub fn load_dataset(
    events: impl AsRef<Path>,
    actors: impl AsRef<Path>,
    tau: Option<&Path>,
) -> Result<Dataset> {
    let ev = parse_events(events)?;
    let ac = parse_actors(actors)?;
    let ta = match tau {
        Some(p) => parse_tau(p)?,
        None => Vec::new(),
    };
    validate_dataset(&ev, &ac, &ta)
}
