use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EventKey, MatchRecord};
use crate::results::{OutputEvent, OutputKind};

/// Pattern id → final set of matches, each a sorted list of event keys.
pub type MatchSets = BTreeMap<String, BTreeSet<Vec<EventKey>>>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
}

impl Counts {
    pub fn new(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                1.0
            } else {
                num as f64 / den as f64
            }
        };
        Counts {
            tp,
            fp,
            fn_,
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    #[serde(flatten)]
    pub total: Counts,
    pub per_pattern: BTreeMap<String, Counts>,
    pub mean_latency_ms: f64,
    pub max_latency_ms: i64,
}

/// Compare final emitted matches with the reference answer by event-key set
/// equality.
pub fn evaluate(emitted: &MatchSets, truth: &MatchSets) -> ScoreReport {
    let ids: BTreeSet<&String> = emitted.keys().chain(truth.keys()).collect();
    let empty = BTreeSet::new();
    let mut report = ScoreReport::default();
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for id in ids {
        let e = emitted.get(id).unwrap_or(&empty);
        let t = truth.get(id).unwrap_or(&empty);
        let c = Counts::new(
            e.intersection(t).count(),
            e.difference(t).count(),
            t.difference(e).count(),
        );
        tp += c.tp;
        fp += c.fp;
        fn_ += c.fn_;
        report.per_pattern.insert(id.clone(), c);
    }
    report.total = Counts::new(tp, fp, fn_);
    report
}

/// Apply every correction and invalidation of a log, in order.
pub fn final_set(log: &[OutputEvent]) -> MatchSets {
    crate::replay::final_matches(log)
}

pub fn match_sets<'a>(matches: impl IntoIterator<Item = &'a MatchRecord>) -> MatchSets {
    let mut out = MatchSets::new();
    for m in matches {
        out.entry(m.pattern_id.clone())
            .or_default()
            .insert(m.keys());
    }
    out
}

/// Encode reference matches as an all-`add` emission log.
pub fn truth_log<'a>(matches: impl IntoIterator<Item = &'a MatchRecord>) -> Vec<OutputEvent> {
    matches
        .into_iter()
        .map(|m| OutputEvent {
            kind: OutputKind::Add,
            pattern_id: m.pattern_id.clone(),
            events: m.keys(),
            replaces: None,
            latency_ms: 0,
            at: m.end_t(),
        })
        .collect()
}

pub fn load_emissions(path: &Path) -> Result<Vec<OutputEvent>> {
    let f = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::EventFile {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}
