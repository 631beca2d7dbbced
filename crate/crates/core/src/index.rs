//! Shared, per-type ordered event store. Every pattern reads from the same
//! index, so an event of a type used by several patterns is stored once.

use std::collections::{BTreeMap, HashMap};
use std::ops::Bound;
use std::sync::Arc;

use crate::model::{Event, EventRef, Millis};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    Inserted,
    Duplicate,
}

/// Key inside one type's store; the type is implied by the store.
type StoreKey = (Millis, String);

#[derive(Debug, Default, Clone)]
pub struct SharedIndex {
    stores: HashMap<String, BTreeMap<StoreKey, EventRef>>,
    retention: Millis,
}

impl SharedIndex {
    pub fn new(retention: Millis) -> Self {
        SharedIndex {
            stores: HashMap::new(),
            retention,
        }
    }

    pub fn retention(&self) -> Millis {
        self.retention
    }

    pub fn insert(&mut self, e: EventRef) -> InsertOutcome {
        let store = self.stores.entry(e.et.clone()).or_default();
        let key = (e.t_gen, e.id.clone());
        if store.contains_key(&key) {
            return InsertOutcome::Duplicate;
        }
        store.insert(key, e);
        InsertOutcome::Inserted
    }

    pub fn contains(&self, e: &Event) -> bool {
        self.stores
            .get(&e.et)
            .is_some_and(|s| s.contains_key(&(e.t_gen, e.id.clone())))
    }

    /// Stored events of `et` with `from ≤ t_gen ≤ to`, ascending.
    pub fn range(&self, et: &str, from: Millis, to: Millis) -> Vec<EventRef> {
        if from > to {
            return Vec::new();
        }
        let Some(store) = self.stores.get(et) else {
            return Vec::new();
        };
        let lo = Bound::Included((from, String::new()));
        let hi = Bound::Excluded((to.saturating_add(1), String::new()));
        store.range((lo, hi)).map(|(_, e)| e.clone()).collect()
    }

    pub fn last_of(&self, et: &str) -> Option<EventRef> {
        self.stores
            .get(et)
            .and_then(|s| s.last_key_value())
            .map(|(_, e)| e.clone())
    }

    /// Drop events with `t_gen < now − retention`.
    pub fn evict(&mut self, now: Millis) -> usize {
        let horizon = now - self.retention;
        let mut removed = 0;
        for store in self.stores.values_mut() {
            let keep = store.split_off(&(horizon, String::new()));
            removed += store.len();
            *store = keep;
        }
        removed
    }

    /// Oldest `t_gen` still guaranteed to be stored, i.e. the eviction
    /// horizon for a given watermark.
    pub fn horizon(&self, now: Millis) -> Millis {
        now - self.retention
    }

    pub fn remove(&mut self, e: &Event) -> bool {
        self.stores
            .get_mut(&e.et)
            .is_some_and(|s| s.remove(&(e.t_gen, e.id.clone())).is_some())
    }

    pub fn len(&self) -> usize {
        self.stores.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn len_of(&self, et: &str) -> usize {
        self.stores.get(et).map_or(0, BTreeMap::len)
    }

    /// All stored events, grouped by type name (types in name order).
    pub fn snapshot(&self) -> Vec<EventRef> {
        let mut types: Vec<&String> = self.stores.keys().collect();
        types.sort();
        types
            .into_iter()
            .flat_map(|t| self.stores[t].values().cloned())
            .collect()
    }

    /// Convenience for callers holding an owned event.
    pub fn insert_event(&mut self, e: Event) -> InsertOutcome {
        self.insert(Arc::new(e))
    }
}
