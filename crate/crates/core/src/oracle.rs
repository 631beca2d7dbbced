//! Brute-force reference enumeration. Deliberately shares nothing with the
//! detector except predicate evaluation: it walks the in-order stream and
//! tries every way of extending a partial match.

use crate::detect::{accepts, maximal_filter};
use crate::error::{Error, Result};
use crate::model::{EventRef, MatchRecord};
use crate::pattern::{PatternSpec, Policy};

pub const MAX_EVENTS: usize = 300;
const NODE_BUDGET: u64 = 20_000_000;

struct Search<'a> {
    p: &'a PatternSpec,
    events: &'a [EventRef],
    nodes: u64,
    out: Vec<MatchRecord>,
}

impl Search<'_> {
    /// `chosen` holds stream indices; `elem` is the element the last chosen
    /// event was bound to.
    fn extend(&mut self, chosen: &mut Vec<usize>, elem: usize) -> Result<()> {
        let n = self.p.elements.len();
        let first_t = self.events[chosen[0]].t_gen;
        let last = *chosen.last().unwrap();
        for i in last + 1..self.events.len() {
            let e = &self.events[i];
            if e.t_gen - first_t > self.p.window {
                break;
            }
            let Some(pos) = self.p.position_of(&e.et) else {
                continue;
            };
            let same = pos == elem && self.p.elements[elem].kleene;
            let next = pos == elem + 1;
            if !(same || next) {
                continue;
            }
            self.nodes += 1;
            if self.nodes > NODE_BUDGET {
                return Err(Error::TooLarge(format!(
                    "more than {NODE_BUDGET} partial matches"
                )));
            }
            chosen.push(i);
            if pos == n - 1 {
                self.record(chosen)?;
            }
            if pos < n - 1 || self.p.elements[pos].kleene {
                self.extend(chosen, pos)?;
            }
            chosen.pop();
        }
        Ok(())
    }

    fn record(&mut self, chosen: &[usize]) -> Result<()> {
        let evs: Vec<EventRef> = chosen.iter().map(|&i| self.events[i].clone()).collect();
        if accepts(self.p, &evs)? {
            self.out.push(MatchRecord::new(self.p.id.clone(), evs));
        }
        Ok(())
    }
}

/// Every valid match of `p` in `events`, without any maximality filter.
/// Under skip-till-next-match, matches whose intermediate non-Kleene binding
/// could be replaced by an earlier fitting event are excluded.
pub fn oracle_all_matches(events: &[EventRef], p: &PatternSpec) -> Result<Vec<MatchRecord>> {
    if events.len() > MAX_EVENTS {
        return Err(Error::TooLarge(format!(
            "{} events exceeds the oracle limit of {MAX_EVENTS}",
            events.len()
        )));
    }
    let mut sorted = events.to_vec();
    sorted.sort();
    sorted.dedup();
    let mut s = Search {
        p,
        events: &sorted,
        nodes: 0,
        out: Vec::new(),
    };
    for (i, e) in sorted.iter().enumerate() {
        if e.et == p.start_type() {
            let mut chosen = vec![i];
            s.extend(&mut chosen, 0)?;
        }
    }
    let mut out = s.out;
    if p.policy == Policy::Stnm {
        let mut kept = Vec::with_capacity(out.len());
        for m in out {
            if !replaceable_intermediate(p, &sorted, &m)? {
                kept.push(m);
            }
        }
        out = kept;
    }
    out.sort_by(|a, b| a.events.cmp(&b.events));
    Ok(out)
}

fn replaceable_intermediate(p: &PatternSpec, stream: &[EventRef], m: &MatchRecord) -> Result<bool> {
    let n = p.elements.len();
    for (i, b) in m.events.iter().enumerate() {
        let k = p.position_of(&b.et).unwrap();
        if k == 0 || k == n - 1 || p.elements[k].kleene {
            continue;
        }
        let prev = &m.events[i - 1];
        for x in stream
            .iter()
            .filter(|x| x.et == b.et && x > &prev && x < &b)
        {
            let mut alt = m.events.clone();
            alt[i] = x.clone();
            if accepts(p, &alt)? {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

/// The reference answer for a complete in-order stream.
pub fn ground_truth(events: &[EventRef], p: &PatternSpec) -> Result<Vec<MatchRecord>> {
    Ok(maximal_filter(&oracle_all_matches(events, p)?, p))
}
