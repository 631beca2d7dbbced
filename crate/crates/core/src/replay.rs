//! Event files and the partitioned replay source that stands in for a
//! message broker. Arrival timestamps in the file fully determine delivery
//! order, so every replay of a file is identical.

use std::collections::{BTreeMap, VecDeque};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::mpsc::{sync_channel, Receiver};
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};

use crate::engine::{Counters, Engine};
use crate::error::{Error, Result};
use crate::model::{Event, Millis, Payload};
use crate::pattern::PatternSpec;
use crate::results::{LatencyStats, OutputEvent, OutputKind};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Line {
    id: serde_json::Value,
    #[serde(rename = "type")]
    et: String,
    t_gen_ms: Millis,
    t_arr_ms: Option<Millis>,
    source: Option<String>,
    #[serde(default)]
    partition: u32,
    #[serde(default)]
    payload: Payload,
}

#[derive(Serialize)]
struct OutLine<'a> {
    id: &'a str,
    #[serde(rename = "type")]
    et: &'a str,
    t_gen_ms: Millis,
    t_arr_ms: Millis,
    source: &'a str,
    partition: u32,
    payload: &'a Payload,
}

/// Parse an event file (one JSON object per line, blank lines ignored) and
/// order it by arrival time, file order breaking ties.
pub fn load_events(path: &Path) -> Result<Vec<Event>> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| Error::EventFile {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let raw: Line = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        let id = match raw.id {
            serde_json::Value::String(s) => s,
            serde_json::Value::Number(n) => n.to_string(),
            other => return Err(bad(format!("id must be a string or number, got {other}"))),
        };
        out.push(Event {
            id,
            source: raw.source.unwrap_or_else(|| raw.et.clone()),
            et: raw.et,
            t_gen: raw.t_gen_ms,
            t_arr: raw.t_arr_ms.unwrap_or(i as Millis),
            partition: raw.partition,
            payload: raw.payload,
        });
    }
    out.sort_by_key(|e| e.t_arr);
    Ok(out)
}

pub fn write_events<W: Write>(events: &[Event], w: &mut W) -> Result<()> {
    for e in events {
        let line = OutLine {
            id: &e.id,
            et: &e.et,
            t_gen_ms: e.t_gen,
            t_arr_ms: e.t_arr,
            source: &e.source,
            partition: e.partition,
            payload: &e.payload,
        };
        serde_json::to_writer(&mut *w, &line)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_events(path: &Path, events: &[Event]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_events(events, &mut f)?;
    f.flush()?;
    Ok(())
}

/// Per-partition ordered queues merged by arrival time; ties go to the lower
/// partition index. Order within a partition is always preserved.
#[derive(Debug, Clone, Default)]
pub struct ReplaySource {
    partitions: Vec<VecDeque<Event>>,
}

impl ReplaySource {
    pub fn new(events: impl IntoIterator<Item = Event>) -> Self {
        let mut by_part: BTreeMap<u32, VecDeque<Event>> = BTreeMap::new();
        for e in events {
            by_part.entry(e.partition).or_default().push_back(e);
        }
        ReplaySource {
            partitions: by_part.into_values().collect(),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Ok(Self::new(load_events(path)?))
    }

    pub fn remaining(&self) -> usize {
        self.partitions.iter().map(VecDeque::len).sum()
    }

    /// Hand delivery to a producer thread feeding a bounded queue.
    pub fn spawn(self, bound: usize) -> (Receiver<Event>, JoinHandle<()>) {
        let (tx, rx) = sync_channel(bound.max(1));
        let handle = std::thread::spawn(move || {
            for e in self {
                if tx.send(e).is_err() {
                    break;
                }
            }
        });
        (rx, handle)
    }
}

impl Iterator for ReplaySource {
    type Item = Event;

    fn next(&mut self) -> Option<Event> {
        let (i, _) = self
            .partitions
            .iter()
            .enumerate()
            .filter_map(|(i, q)| q.front().map(|e| (i, e.t_arr)))
            .min_by_key(|&(i, t)| (t, i))?;
        self.partitions[i].pop_front()
    }
}

/// Where on-demand retrieval would go for events no longer in the index.
/// Replays retain every event for the lifetime of the run, so nothing
/// implements this; it marks the seam for a real log-backed deployment.
pub trait ArchiveFetch {
    fn fetch(&self, et: &str, from: Millis, to: Millis) -> Result<Vec<Event>>;
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunSummary {
    pub events: u64,
    pub counters: Counters,
    pub adds: u64,
    pub corrects: u64,
    pub invalidates: u64,
    pub latency: LatencyStats,
    /// Virtual time after the final flush.
    pub finished_at: Millis,
}

impl RunSummary {
    pub fn from_engine(engine: &Engine) -> Self {
        let mut s = RunSummary {
            events: engine.counters().delivered,
            counters: engine.counters(),
            latency: engine.latency(),
            finished_at: engine.now(),
            ..Default::default()
        };
        for e in engine.emissions() {
            match e.kind {
                OutputKind::Add => s.adds += 1,
                OutputKind::Correct => s.corrects += 1,
                OutputKind::Invalidate => s.invalidates += 1,
            }
        }
        s
    }
}

/// Drive `engine` with every event of `seq`, then flush deferred work.
pub fn replay<I: IntoIterator<Item = Event>>(seq: I, engine: &mut Engine) -> Result<RunSummary> {
    for e in seq {
        engine.process(e)?;
    }
    engine.flush()?;
    Ok(RunSummary::from_engine(engine))
}

/// Like [`replay`], but reading from a producer thread through a bounded
/// queue.
pub fn replay_threaded(
    source: ReplaySource,
    engine: &mut Engine,
    bound: usize,
) -> Result<RunSummary> {
    let (rx, handle) = source.spawn(bound);
    let summary = replay(rx, engine);
    handle.join().expect("replay producer panicked");
    summary
}

/// Pattern → event types, and the inverse event type → patterns.
pub fn register_mapping(
    patterns: &[PatternSpec],
) -> (BTreeMap<String, Vec<String>>, BTreeMap<String, Vec<String>>) {
    let mut q_to_events = BTreeMap::new();
    let mut e_to_patterns: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for p in patterns {
        let types: Vec<String> = p.event_types().map(str::to_string).collect();
        for t in &types {
            e_to_patterns
                .entry(t.clone())
                .or_default()
                .push(p.id.clone());
        }
        q_to_events.insert(p.id.clone(), types);
    }
    (q_to_events, e_to_patterns)
}

/// Final match sets per pattern after applying every correction and
/// invalidation of an emission log in order. Matches are sorted key lists.
pub fn final_matches(
    log: &[OutputEvent],
) -> BTreeMap<String, std::collections::BTreeSet<Vec<crate::model::EventKey>>> {
    let mut out: BTreeMap<String, std::collections::BTreeSet<_>> = BTreeMap::new();
    for e in log {
        let set = out.entry(e.pattern_id.clone()).or_default();
        if let Some(old) = &e.replaces {
            set.remove(old);
        }
        if !e.events.is_empty() {
            set.insert(e.events.clone());
        }
    }
    out
}
