//! Per-pattern result store: deduplicates detections, corrects emitted
//! matches that turned out non-maximal, invalidates ones a late event made
//! wrong, and keeps the append-only emission log.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::model::{Event, EventKey, MatchRecord, Millis};
use crate::pattern::{PatternSpec, Policy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputKind {
    Add,
    Correct,
    Invalidate,
}

/// One line of the emission log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputEvent {
    pub kind: OutputKind,
    pub pattern_id: String,
    /// The match being added, or the replacement for a corrected or
    /// invalidated match (empty when an invalidation has no replacement).
    pub events: Vec<EventKey>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replaces: Option<Vec<EventKey>>,
    pub latency_ms: Millis,
    pub at: Millis,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LatencyStats {
    pub count: u64,
    pub mean_ms: f64,
    pub max_ms: Millis,
    /// Measured from the arrival of the match's last event instead of its
    /// first; reported for comparison only.
    pub mean_from_last_ms: f64,
}

impl LatencyStats {
    fn fold(&mut self, from_first: Millis, from_last: Millis) {
        self.count += 1;
        let k = self.count as f64;
        self.mean_ms += (from_first as f64 - self.mean_ms) / k;
        self.mean_from_last_ms += (from_last as f64 - self.mean_from_last_ms) / k;
        self.max_ms = self.max_ms.max(from_first);
    }

    pub fn merge(&mut self, other: &LatencyStats) {
        let total = self.count + other.count;
        if total == 0 {
            return;
        }
        let (a, b) = (self.count as f64, other.count as f64);
        self.mean_ms = (self.mean_ms * a + other.mean_ms * b) / total as f64;
        self.mean_from_last_ms =
            (self.mean_from_last_ms * a + other.mean_from_last_ms * b) / total as f64;
        self.max_ms = self.max_ms.max(other.max_ms);
        self.count = total;
    }
}

/// `now` minus the arrival time of the match's first event.
pub fn detection_latency(m: &MatchRecord, now: Millis) -> Millis {
    now - m.first().t_arr
}

#[derive(Debug, Clone)]
pub struct ResultManager {
    pattern: Arc<PatternSpec>,
    correction: bool,
    by_last: BTreeMap<EventKey, Vec<MatchRecord>>,
    emissions: Vec<OutputEvent>,
    latency: LatencyStats,
}

impl ResultManager {
    pub fn new(pattern: Arc<PatternSpec>, correction: bool) -> Self {
        ResultManager {
            pattern,
            correction,
            by_last: BTreeMap::new(),
            emissions: Vec::new(),
            latency: LatencyStats::default(),
        }
    }

    pub fn emissions(&self) -> &[OutputEvent] {
        &self.emissions
    }

    pub fn latency(&self) -> LatencyStats {
        self.latency
    }

    pub fn stored(&self) -> impl Iterator<Item = &MatchRecord> {
        self.by_last.values().flatten()
    }

    pub fn stored_len(&self) -> usize {
        self.by_last.values().map(Vec::len).sum()
    }

    fn emit(
        &mut self,
        kind: OutputKind,
        new: Option<&MatchRecord>,
        old: Option<&MatchRecord>,
        now: Millis,
    ) -> OutputEvent {
        // corrections keep the latency clock of the match they replace
        let basis = old.or(new).expect("emission names a match");
        let latency = detection_latency(basis, now);
        self.latency.fold(latency, now - basis.last().t_arr);
        let out = OutputEvent {
            kind,
            pattern_id: self.pattern.id.clone(),
            events: new.map(MatchRecord::keys).unwrap_or_default(),
            replaces: old.map(MatchRecord::keys),
            latency_ms: latency,
            at: now,
        };
        self.emissions.push(out.clone());
        out
    }

    fn store(&mut self, mut m: MatchRecord, now: Millis, updated: bool) {
        m.emitted = true;
        m.updated = updated;
        m.emit_wallclock.get_or_insert(now);
        self.by_last.entry(m.last().key()).or_default().push(m);
    }

    /// Hand one detected match to the store. Returns the emissions it caused
    /// (empty for a duplicate or a match already covered).
    pub fn submit(&mut self, m: MatchRecord, now: Millis) -> Vec<OutputEvent> {
        let key = m.last().key();
        let group = self.by_last.get(&key).map(Vec::as_slice).unwrap_or(&[]);
        if group.iter().any(|s| s.same_events(&m)) {
            return Vec::new();
        }
        if !self.correction {
            let ev = self.emit(OutputKind::Add, Some(&m), None, now);
            self.store(m, now, false);
            return vec![ev];
        }
        if group.iter().any(|s| m.strict_subset_of(s)) {
            return Vec::new();
        }

        let (subsets, rest): (Vec<MatchRecord>, Vec<MatchRecord>) = self
            .by_last
            .remove(&key)
            .unwrap_or_default()
            .into_iter()
            .partition(|s| s.strict_subset_of(&m));
        let (superseded, rest): (Vec<MatchRecord>, Vec<MatchRecord>) =
            if self.pattern.policy == Policy::Stnm {
                rest.into_iter().partition(|s| self.binds_earlier(&m, s))
            } else {
                (Vec::new(), rest)
            };
        if !rest.is_empty() {
            self.by_last.insert(key, rest);
        }

        let mut out = Vec::new();
        for s in &subsets {
            out.push(self.emit(OutputKind::Correct, Some(&m), Some(s), now));
        }
        for s in &superseded {
            out.push(self.emit(OutputKind::Invalidate, Some(&m), Some(s), now));
        }
        if out.is_empty() {
            out.push(self.emit(OutputKind::Add, Some(&m), None, now));
        }
        let first_emit = subsets
            .iter()
            .chain(&superseded)
            .filter_map(|s| s.emit_wallclock)
            .min();
        let replaced = !subsets.is_empty() || !superseded.is_empty();
        let mut m = m;
        m.emit_wallclock = first_emit;
        self.store(m, now, replaced);
        out
    }

    /// Same first and last event, and `m` binds at least one intermediate
    /// non-Kleene position to an earlier event than `s` and none to a later.
    fn binds_earlier(&self, m: &MatchRecord, s: &MatchRecord) -> bool {
        if m.first() != s.first() {
            return false;
        }
        let p = &self.pattern;
        let n = p.elements.len();
        let mut earlier = false;
        for k in 1..n.saturating_sub(1) {
            if p.elements[k].kleene {
                continue;
            }
            let et = &p.elements[k].et;
            let (Some(a), Some(b)) = (
                m.events.iter().find(|e| &e.et == et),
                s.events.iter().find(|e| &e.et == et),
            ) else {
                return false;
            };
            if a > b {
                return false;
            }
            earlier |= a < b;
        }
        earlier
    }

    /// Submit the complete, freshly computed match set for one end event.
    /// With correction on, stored matches for that end which the new set no
    /// longer supports are invalidated.
    pub fn reconcile(
        &mut self,
        end: &Event,
        matches: Vec<MatchRecord>,
        now: Millis,
    ) -> Vec<OutputEvent> {
        let mut out = Vec::new();
        for m in &matches {
            out.extend(self.submit(m.clone(), now));
        }
        if self.correction {
            let key = end.key();
            if let Some(group) = self.by_last.remove(&key) {
                let (keep, stale): (Vec<_>, Vec<_>) = group
                    .into_iter()
                    .partition(|s| matches.iter().any(|m| m.same_events(s)));
                for s in &stale {
                    out.push(self.emit(OutputKind::Invalidate, None, Some(s), now));
                }
                if !keep.is_empty() {
                    self.by_last.insert(key, keep);
                }
            }
        }
        out
    }

    /// Drop stored matches whose end lies more than `2·w` before `now`.
    pub fn expire(&mut self, now: Millis, w: Millis) -> usize {
        let horizon = now - 2 * w;
        let keep = self.by_last.split_off(&EventKey {
            et: String::new(),
            t_gen: horizon,
            id: String::new(),
        });
        let removed = self.stored_len();
        self.by_last = keep;
        removed
    }
}
