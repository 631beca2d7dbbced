//! Composition root: one shared index and statistics, one event manager and
//! one result manager per pattern, and the deferred-trigger queue driven by
//! the virtual arrival clock.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::config::SourceConfig;
use crate::detect::{detect_from_end, DetectionRequest, Universe};
use crate::error::{Error, Result};
use crate::index::{InsertOutcome, SharedIndex};
use crate::manager::{ooo_score, ActionKind, EventManager, Interval, ManagerConfig};
use crate::model::{Event, EventKey, EventRef, MatchRecord, Millis};
use crate::pattern::PatternSpec;
use crate::results::{LatencyStats, OutputEvent, ResultManager};
use crate::stats::StreamStats;

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub patterns: Vec<PatternSpec>,
    pub manager: ManagerConfig,
    /// Per-pattern replacements for `manager`, keyed by pattern id.
    pub overrides: BTreeMap<String, ManagerConfig>,
    pub sources: Vec<SourceConfig>,
    /// Index retention; defaults to four times the largest window.
    pub retention: Option<Millis>,
}

impl EngineConfig {
    /// Patterns with default settings and a source declared (without an
    /// inter-arrival estimate) for every event type they use.
    pub fn new(patterns: Vec<PatternSpec>) -> Self {
        let mut names = BTreeSet::new();
        for p in &patterns {
            names.extend(p.event_types().map(str::to_string));
        }
        EngineConfig {
            patterns,
            manager: ManagerConfig::default(),
            overrides: BTreeMap::new(),
            sources: names
                .into_iter()
                .map(|name| SourceConfig {
                    name,
                    estimated_inter_arrival_seconds: None,
                })
                .collect(),
            retention: None,
        }
    }

    pub fn with_manager(mut self, manager: ManagerConfig) -> Self {
        self.manager = manager;
        self
    }

    pub fn with_sources(mut self, sources: Vec<SourceConfig>) -> Self {
        self.sources = sources;
        self
    }
}

/// Event-level counters of a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counters {
    pub delivered: u64,
    pub stored: u64,
    pub duplicates: u64,
    /// Events of types no pattern uses.
    pub irrelevant: u64,
    /// Events every interested pattern refused; removed from the index.
    pub discarded: u64,
    /// Per-pattern refusals (extremely late or malformed).
    pub refusals: u64,
    pub end_triggers: u64,
    pub on_demand_triggers: u64,
    pub deferred_triggers: u64,
    pub evaluations: u64,
    pub skipped_expired: u64,
    pub evicted: u64,
}

struct Slot {
    pattern: Arc<PatternSpec>,
    manager: EventManager,
    results: ResultManager,
    /// End events waiting for a deferred re-evaluation, with their due time.
    pending: BTreeMap<EventKey, (Millis, EventRef)>,
}

pub struct Engine {
    index: SharedIndex,
    stats: StreamStats,
    slots: Vec<Slot>,
    by_type: HashMap<String, Vec<usize>>,
    now: Millis,
    counters: Counters,
    log: Vec<OutputEvent>,
}

impl Engine {
    pub fn build(cfg: EngineConfig) -> Result<Engine> {
        if cfg.patterns.is_empty() {
            return Err(Error::Config("at least one pattern is required".into()));
        }
        let mut ids = HashSet::new();
        for p in &cfg.patterns {
            if !ids.insert(p.id.as_str()) {
                return Err(Error::Config(format!("duplicate pattern id `{}`", p.id)));
            }
            p.check_params()?;
        }
        for id in cfg.overrides.keys() {
            if !ids.contains(id.as_str()) {
                return Err(Error::Config(format!(
                    "override for unknown pattern `{id}`"
                )));
            }
        }
        let declared: HashSet<&str> = cfg.sources.iter().map(|s| s.name.as_str()).collect();
        for p in &cfg.patterns {
            if let Some(t) = p.event_types().find(|t| !declared.contains(t)) {
                return Err(Error::Config(format!(
                    "pattern `{}` uses undeclared event type `{t}`",
                    p.id
                )));
            }
        }
        let w_max = cfg.patterns.iter().map(|p| p.window).max().unwrap_or(0);
        // window plus a slack of at most one window, doubled
        let retention = cfg.retention.unwrap_or(4 * w_max);
        if retention < 2 * w_max {
            return Err(Error::Config(
                "retention must cover at least two windows".into(),
            ));
        }
        let mut slots = Vec::new();
        let mut by_type: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, p) in cfg.patterns.into_iter().enumerate() {
            let mcfg = cfg.overrides.get(&p.id).copied().unwrap_or(cfg.manager);
            mcfg.validate()?;
            for t in p.event_types() {
                by_type.entry(t.to_string()).or_default().push(i);
            }
            let p = Arc::new(p);
            slots.push(Slot {
                manager: EventManager::new(p.clone(), mcfg),
                results: ResultManager::new(p.clone(), mcfg.correction),
                pattern: p,
                pending: BTreeMap::new(),
            });
        }
        let stats = StreamStats::with_estimates(cfg.sources.iter().filter_map(|s| {
            s.estimated_inter_arrival_seconds
                .map(|g| (s.name.clone(), g))
        }));
        Ok(Engine {
            index: SharedIndex::new(retention),
            stats,
            slots,
            by_type,
            now: Millis::MIN,
            counters: Counters::default(),
            log: Vec::new(),
        })
    }

    /// Ingest one event; returns every emission it caused, including those of
    /// deferred triggers that became due at its arrival.
    pub fn process(&mut self, e: Event) -> Result<Vec<OutputEvent>> {
        self.counters.delivered += 1;
        self.now = self.now.max(e.t_arr);
        let mut out = self.fire_due(self.now)?;
        let Some(interested) = self.by_type.get(&e.et).cloned() else {
            self.counters.irrelevant += 1;
            return Ok(out);
        };
        let e = Arc::new(e);
        if self.index.insert(e.clone()) == InsertOutcome::Duplicate {
            self.counters.duplicates += 1;
            return Ok(out);
        }
        self.counters.stored += 1;

        let mut scores = Vec::with_capacity(interested.len());
        for &i in &interested {
            let s = &self.slots[i];
            scores.push(ooo_score(
                &e,
                &s.pattern,
                &self.stats,
                &s.manager.config().weights,
            )?);
        }
        let ooo_time = self.stats.ooo_time(&e);
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        self.stats.record_arrival(&e, ooo_time, mean);

        let now = self.now;
        let mut refused = 0;
        for (&i, &score) in interested.iter().zip(&scores) {
            let actions = self.slots[i]
                .manager
                .on_event(&e, score, &self.index, &self.stats, now);
            for a in actions {
                match a.kind {
                    ActionKind::Discard => {
                        refused += 1;
                        self.counters.refusals += 1;
                    }
                    ActionKind::Buffer => {}
                    ActionKind::TriggerEnd(c) => {
                        self.counters.end_triggers += 1;
                        out.extend(self.evaluate_end(i, &c, now, false)?);
                    }
                    ActionKind::TriggerOnDemand { mpw, .. } => {
                        self.counters.on_demand_triggers += 1;
                        if a.scheduled_at <= now {
                            out.extend(self.on_demand(i, mpw, now)?);
                        } else {
                            self.counters.deferred_triggers += 1;
                            self.defer(i, mpw, a.scheduled_at);
                        }
                    }
                }
            }
        }
        if refused == interested.len() {
            self.index.remove(&e);
            self.counters.discarded += 1;
        }

        if let Some(lta) = self.stats.lta {
            self.counters.evicted += self.index.evict(lta) as u64;
            let horizon = self.index.horizon(lta);
            for s in &mut self.slots {
                s.results.expire(lta, s.pattern.window);
                s.manager.forget_before(horizon);
            }
        }
        Ok(out)
    }

    /// Run every deferred trigger still pending, in due order.
    pub fn flush(&mut self) -> Result<Vec<OutputEvent>> {
        self.fire_due(Millis::MAX)
    }

    fn defer(&mut self, i: usize, mpw: Interval, due: Millis) {
        let slot = &mut self.slots[i];
        for c in self
            .index
            .range(slot.pattern.end_type(), mpw.start, mpw.end)
        {
            if slot.manager.refuses(&c) {
                continue;
            }
            // an end already waiting keeps its original due time
            slot.pending.entry(c.key()).or_insert((due, c));
        }
    }

    fn fire_due(&mut self, upto: Millis) -> Result<Vec<OutputEvent>> {
        let mut due: Vec<(Millis, usize, EventKey)> = Vec::new();
        for (i, s) in self.slots.iter().enumerate() {
            for (k, (t, _)) in &s.pending {
                if *t <= upto {
                    due.push((*t, i, k.clone()));
                }
            }
        }
        due.sort();
        let mut out = Vec::new();
        for (t, i, k) in due {
            let (_, c) = self.slots[i].pending.remove(&k).expect("pending entry");
            self.now = self.now.max(t);
            out.extend(self.evaluate_end(i, &c, t, true)?);
        }
        Ok(out)
    }

    fn on_demand(&mut self, i: usize, mpw: Interval, now: Millis) -> Result<Vec<OutputEvent>> {
        let ends = self
            .index
            .range(self.slots[i].pattern.end_type(), mpw.start, mpw.end);
        let mut out = Vec::new();
        for c in ends {
            if self.slots[i].manager.refuses(&c) {
                continue;
            }
            out.extend(self.evaluate_end(i, &c, now, true)?);
        }
        Ok(out)
    }

    /// Detect all matches ending at `c` over its full window and hand them to
    /// the pattern's result manager.
    fn evaluate_end(
        &mut self,
        i: usize,
        c: &EventRef,
        now: Millis,
        recompute: bool,
    ) -> Result<Vec<OutputEvent>> {
        let slot = &mut self.slots[i];
        let w = slot.pattern.window;
        let lta = self.stats.lta.unwrap_or(c.t_gen);
        let window_evicted = c.t_gen - w < self.index.horizon(lta);
        let results_expired = recompute && c.t_gen < lta - 2 * w;
        if window_evicted || results_expired {
            self.counters.skipped_expired += 1;
            return Ok(Vec::new());
        }
        self.counters.evaluations += 1;
        let manager = &slot.manager;
        let universe =
            Universe::from_index(&self.index, &slot.pattern, c.t_gen - w, c.t_gen, |e| {
                manager.refuses(e)
            });
        let req = DetectionRequest {
            pattern: &slot.pattern,
            end_event: c.clone(),
            universe: &universe,
        };
        let matches: Vec<MatchRecord> = detect_from_end(&req)?
            .into_iter()
            .map(|mut m| {
                m.ooo = recompute;
                m
            })
            .collect();
        let out = slot.results.reconcile(c, matches, now);
        self.log.extend(out.iter().cloned());
        Ok(out)
    }

    pub fn snapshot_stats(&self) -> StreamStats {
        self.stats.clone()
    }

    pub fn index(&self) -> &SharedIndex {
        &self.index
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    pub fn now(&self) -> Millis {
        self.now
    }

    pub fn patterns(&self) -> impl Iterator<Item = &PatternSpec> {
        self.slots.iter().map(|s| s.pattern.as_ref())
    }

    /// Emission log across all patterns, in emission order.
    pub fn emissions(&self) -> &[OutputEvent] {
        &self.log
    }

    pub fn results(&self, pattern_id: &str) -> Option<&ResultManager> {
        self.slots
            .iter()
            .find(|s| s.pattern.id == pattern_id)
            .map(|s| &s.results)
    }

    pub fn latency(&self) -> LatencyStats {
        let mut total = LatencyStats::default();
        for s in &self.slots {
            total.merge(&s.results.latency());
        }
        total
    }

    /// Pattern ids interested in each event type.
    pub fn mapping(&self) -> BTreeMap<String, Vec<String>> {
        self.by_type
            .iter()
            .map(|(t, v)| {
                (
                    t.clone(),
                    v.iter()
                        .map(|&i| self.slots[i].pattern.id.clone())
                        .collect(),
                )
            })
            .collect()
    }

    pub fn write_emissions<W: Write>(&self, mut w: W) -> Result<()> {
        write_emissions(&self.log, &mut w)
    }
}

/// JSON-lines encoding of an emission log.
pub fn write_emissions<W: Write>(log: &[OutputEvent], w: &mut W) -> Result<()> {
    for ev in log {
        serde_json::to_writer(&mut *w, ev)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pattern::parse_pattern;
    use crate::results::OutputKind;

    fn engine(text: &str) -> Engine {
        let p = parse_pattern("p", text).unwrap();
        Engine::build(EngineConfig::new(vec![p])).unwrap()
    }

    #[test]
    fn end_event_completes_match() {
        let mut eng = engine("PATTERN SEQ(A a, B b) WITHIN 10 s");
        assert!(eng
            .process(Event::new("a1", "A", 1_000))
            .unwrap()
            .is_empty());
        let out = eng.process(Event::new("b2", "B", 2_000)).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].kind, OutputKind::Add);
    }

    #[test]
    fn duplicate_changes_nothing_but_a_counter() {
        let mut eng = engine("PATTERN SEQ(A a, B b) WITHIN 10 s");
        eng.process(Event::new("a1", "A", 1_000)).unwrap();
        let before = eng.snapshot_stats();
        let out = eng
            .process(Event::new("a1", "A", 1_000).arriving_at(1_500))
            .unwrap();
        assert!(out.is_empty());
        assert_eq!(eng.snapshot_stats(), before);
        assert_eq!(eng.counters().duplicates, 1);
    }

    #[test]
    fn late_event_triggers_correction() {
        let mut eng = engine("PATTERN SEQ(A a, B+ b[], C c) WITHIN 10 s");
        eng.process(Event::new("a1", "A", 1_000)).unwrap();
        eng.process(Event::new("b3", "B", 3_000)).unwrap();
        eng.process(Event::new("c5", "C", 5_000)).unwrap();
        let out = eng
            .process(Event::new("b2", "B", 2_000).arriving_at(6_000))
            .unwrap();
        let out = if out.is_empty() {
            eng.flush().unwrap()
        } else {
            out
        };
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].kind, OutputKind::Correct);
    }

    #[test]
    fn build_errors() {
        let p = parse_pattern("p", "PATTERN SEQ(A a, B b) WITHIN 10 s").unwrap();
        assert!(Engine::build(EngineConfig::new(vec![])).is_err());
        let twice = EngineConfig::new(vec![p.clone(), p.clone()]);
        assert!(matches!(Engine::build(twice), Err(Error::Config(_))));
        let undeclared = EngineConfig::new(vec![p]).with_sources(vec![SourceConfig::new("A", 1.0)]);
        assert!(matches!(Engine::build(undeclared), Err(Error::Config(_))));
        let q = parse_pattern("q", "PATTERN SEQ(A a, B b) WHERE a.x > limit WITHIN 10 s").unwrap();
        assert!(matches!(
            Engine::build(EngineConfig::new(vec![q])),
            Err(Error::UnboundParam(_))
        ));
    }

    #[test]
    fn one_index_for_many_patterns() {
        let ps: Vec<_> = (0..5)
            .map(|i| parse_pattern(&format!("p{i}"), "PATTERN SEQ(A a, B b) WITHIN 10 s").unwrap())
            .collect();
        let mut eng = Engine::build(EngineConfig::new(ps)).unwrap();
        eng.process(Event::new("a1", "A", 1_000)).unwrap();
        let out = eng.process(Event::new("b2", "B", 2_000)).unwrap();
        assert_eq!(out.len(), 5);
        assert_eq!(eng.index().len(), 2);
        assert_eq!(eng.mapping()["A"].len(), 5);
    }
}
