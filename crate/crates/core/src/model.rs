//! Events, matches and the ordering/compatibility relations shared by every
//! other module.
//!
//! Timestamps are integer milliseconds on a logical axis. Anything that feeds
//! a formula (scores, rates, slack) converts to seconds as `f64`.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::pattern::PatternSpec;

/// Milliseconds on the logical time axis.
pub type Millis = i64;

pub fn millis_to_secs(ms: Millis) -> f64 {
    ms as f64 / 1000.0
}

/// A payload value. Numbers compare numerically, strings lexicographically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Num(f64),
    Bool(bool),
    Str(String),
}

impl Scalar {
    /// Ordering between two scalars of the same kind; `None` when the kinds
    /// differ or a number is NaN.
    pub fn partial_cmp_same_kind(&self, other: &Scalar) -> Option<Ordering> {
        match (self, other) {
            (Scalar::Num(a), Scalar::Num(b)) => a.partial_cmp(b),
            (Scalar::Str(a), Scalar::Str(b)) => Some(a.cmp(b)),
            (Scalar::Bool(a), Scalar::Bool(b)) => Some(a.cmp(b)),
            _ => None,
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Num(n) => write!(f, "{n}"),
            Scalar::Bool(b) => write!(f, "{b}"),
            Scalar::Str(s) if s.contains('"') => write!(f, "'{s}'"),
            Scalar::Str(s) => write!(f, "\"{s}\""),
        }
    }
}

impl From<f64> for Scalar {
    fn from(v: f64) -> Self {
        Scalar::Num(v)
    }
}

impl From<&str> for Scalar {
    fn from(v: &str) -> Self {
        Scalar::Str(v.to_string())
    }
}

pub type Payload = BTreeMap<String, Scalar>;

/// Identity of an event. Ordered like events: generation time, then type
/// name, then id.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EventKey {
    #[serde(rename = "type")]
    pub et: String,
    pub t_gen: Millis,
    pub id: String,
}

impl EventKey {
    fn order_tuple(&self) -> (Millis, &str, &str) {
        (self.t_gen, &self.et, &self.id)
    }
}

impl PartialOrd for EventKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for EventKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.order_tuple().cmp(&other.order_tuple())
    }
}

/// A typed, timestamped stream element.
///
/// Equality, hashing and ordering use only the identity key
/// `(t_gen, et, id)`: two deliveries of the same event compare equal even if
/// they arrived at different times.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Event {
    pub id: String,
    pub et: String,
    pub t_gen: Millis,
    pub t_arr: Millis,
    pub source: String,
    #[serde(default)]
    pub partition: u32,
    #[serde(default)]
    pub payload: Payload,
}

pub type EventRef = Arc<Event>;

impl Event {
    /// Event whose source is named after its type and which arrives when it
    /// is generated. Mostly useful in tests and examples.
    pub fn new(id: impl Into<String>, et: impl Into<String>, t_gen: Millis) -> Self {
        let et = et.into();
        Event {
            id: id.into(),
            source: et.clone(),
            et,
            t_gen,
            t_arr: t_gen,
            partition: 0,
            payload: Payload::new(),
        }
    }

    pub fn arriving_at(mut self, t_arr: Millis) -> Self {
        self.t_arr = t_arr;
        self
    }

    pub fn with(mut self, attr: impl Into<String>, value: impl Into<Scalar>) -> Self {
        self.payload.insert(attr.into(), value.into());
        self
    }

    pub fn key(&self) -> EventKey {
        EventKey {
            et: self.et.clone(),
            t_gen: self.t_gen,
            id: self.id.clone(),
        }
    }

    pub fn attr(&self, name: &str) -> Option<&Scalar> {
        self.payload.get(name)
    }

    fn order_tuple(&self) -> (Millis, &str, &str) {
        (self.t_gen, &self.et, &self.id)
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.order_tuple() == other.order_tuple()
    }
}

impl Eq for Event {}

impl Hash for Event {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.order_tuple().hash(state);
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.order_tuple().cmp(&other.order_tuple())
    }
}

impl PartialEq<EventKey> for Event {
    fn eq(&self, other: &EventKey) -> bool {
        self.order_tuple() == other.order_tuple()
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id)
    }
}

/// Strict total order on events: `t_gen`, then type name, then id.
pub fn precedes(e1: &Event, e2: &Event) -> bool {
    e1 < e2
}

/// A detected match. `events` is kept sorted by the global event order.
#[derive(Debug, Clone)]
pub struct MatchRecord {
    pub pattern_id: String,
    pub events: Vec<EventRef>,
    pub emitted: bool,
    /// Produced by a recomputation triggered by a late event.
    pub ooo: bool,
    /// Replaced a previously emitted match.
    pub updated: bool,
    pub emit_wallclock: Option<Millis>,
}

impl MatchRecord {
    pub fn new(pattern_id: impl Into<String>, mut events: Vec<EventRef>) -> Self {
        events.sort();
        MatchRecord {
            pattern_id: pattern_id.into(),
            events,
            emitted: false,
            ooo: false,
            updated: false,
            emit_wallclock: None,
        }
    }

    pub fn first(&self) -> &EventRef {
        &self.events[0]
    }

    pub fn last(&self) -> &EventRef {
        self.events.last().expect("match has at least one event")
    }

    pub fn start_t(&self) -> Millis {
        self.first().t_gen
    }

    pub fn end_t(&self) -> Millis {
        self.last().t_gen
    }

    /// Sorted identity keys; two matches are the same match iff these agree.
    pub fn keys(&self) -> Vec<EventKey> {
        self.events.iter().map(|e| e.key()).collect()
    }

    pub fn same_events(&self, other: &MatchRecord) -> bool {
        self.events.len() == other.events.len()
            && self.events.iter().zip(&other.events).all(|(a, b)| a == b)
    }

    /// True when every event of `self` occurs in `other` and `other` is larger.
    pub fn strict_subset_of(&self, other: &MatchRecord) -> bool {
        if self.events.len() >= other.events.len() {
            return false;
        }
        let mut it = other.events.iter();
        self.events.iter().all(|e| it.any(|o| o == e))
    }

    pub fn contains(&self, e: &Event) -> bool {
        self.events.binary_search_by(|x| x.as_ref().cmp(e)).is_ok()
    }
}

impl fmt::Display for MatchRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, e) in self.events.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, "]")
    }
}

pub fn within_window(m: &MatchRecord, w: Millis) -> bool {
    m.end_t() - m.start_t() <= w
}

/// `e ~ m` for pattern `p`: `e` has a pattern type, every predicate that
/// involves `e`'s element and is fully bound by `m ∪ {e}` holds, `e` strictly
/// follows all of `m`, and the extended span stays within the window.
pub fn is_compatible(e: &Event, m: &MatchRecord, p: &PatternSpec) -> Result<bool> {
    let Some(pos) = p.position_of(&e.et) else {
        return Ok(false);
    };
    if let Some(last) = m.events.last() {
        if !precedes(last, e) {
            return Ok(false);
        }
    }
    let start = m.events.first().map_or(e.t_gen, |f| f.t_gen);
    if e.t_gen - start > p.window {
        return Ok(false);
    }
    let mut bound: Vec<&Event> = m.events.iter().map(|x| x.as_ref()).collect();
    bound.push(e);
    let bindings = p.bindings(bound.iter().copied());
    let alias = &p.elements[pos].alias;
    for pred in &p.predicates {
        let aliases = pred.aliases();
        if !aliases.contains(&alias.as_str()) {
            continue;
        }
        if !aliases.iter().all(|a| bindings.contains_key(a)) {
            continue;
        }
        if !crate::pattern::eval_predicate(pred, &bindings, &p.params)? {
            return Ok(false);
        }
    }
    Ok(true)
}
