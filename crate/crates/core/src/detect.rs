//! Lazy match construction. Matches are built backwards from one end event
//! over the sorted per-type index: non-Kleene positions are bound first
//! (right to left), then every Kleene run between two bound positions is
//! filled with all of its maximal chains.

use std::collections::{BTreeSet, HashMap};

use crate::error::Result;
use crate::index::SharedIndex;
use crate::manager::Interval;
use crate::model::{Event, EventRef, MatchRecord, Millis};
use crate::pattern::{eval_predicate, Bindings, PatternSpec, Policy, Predicate, PredicateKind};

/// Per-type sorted event lists a detection runs over.
#[derive(Debug, Clone, Default)]
pub struct Universe {
    by_type: HashMap<String, Vec<EventRef>>,
}

impl Universe {
    pub fn from_events<I: IntoIterator<Item = EventRef>>(events: I) -> Self {
        let mut by_type: HashMap<String, Vec<EventRef>> = HashMap::new();
        for e in events {
            by_type.entry(e.et.clone()).or_default().push(e);
        }
        for v in by_type.values_mut() {
            v.sort();
            v.dedup();
        }
        Universe { by_type }
    }

    /// Events of `p`'s types with `from ≤ t_gen ≤ to`, minus those `skip`
    /// rejects.
    pub fn from_index(
        index: &SharedIndex,
        p: &PatternSpec,
        from: Millis,
        to: Millis,
        skip: impl Fn(&Event) -> bool,
    ) -> Self {
        let by_type = p
            .event_types()
            .map(|et| {
                let mut evs = index.range(et, from, to);
                evs.retain(|e| !skip(e));
                (et.to_string(), evs)
            })
            .collect();
        Universe { by_type }
    }

    pub fn events_of(&self, et: &str) -> &[EventRef] {
        self.by_type.get(et).map_or(&[], Vec::as_slice)
    }

    /// Events of `et` with `lo ≤ t_gen ≤ hi`.
    pub fn slice(&self, et: &str, lo: Millis, hi: Millis) -> &[EventRef] {
        let all = self.events_of(et);
        let a = all.partition_point(|e| e.t_gen < lo);
        let b = all.partition_point(|e| e.t_gen <= hi);
        &all[a..b.max(a)]
    }

    pub fn len(&self) -> usize {
        self.by_type.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub struct DetectionRequest<'a> {
    pub pattern: &'a PatternSpec,
    pub end_event: EventRef,
    pub universe: &'a Universe,
}

/// Predicates of a pattern grouped by the element positions they touch.
struct Plan<'p> {
    constants: Vec<Vec<&'p Predicate>>,
    iteration: Vec<Vec<&'p Predicate>>,
    cross: Vec<(&'p Predicate, usize, usize)>,
}

impl<'p> Plan<'p> {
    fn new(p: &'p PatternSpec) -> Self {
        let n = p.elements.len();
        let mut plan = Plan {
            constants: vec![Vec::new(); n],
            iteration: vec![Vec::new(); n],
            cross: Vec::new(),
        };
        for pred in &p.predicates {
            let pos: Vec<usize> = pred
                .aliases()
                .iter()
                .map(|a| p.alias_position(a).expect("validated alias"))
                .collect();
            match pred.kind {
                PredicateKind::Constant => plan.constants[pos[0]].push(pred),
                PredicateKind::IterationAdjacent => plan.iteration[pos[0]].push(pred),
                PredicateKind::CrossElement => plan.cross.push((pred, pos[0], pos[1])),
            }
        }
        plan
    }
}

struct Ctx<'a> {
    p: &'a PatternSpec,
    plan: Plan<'a>,
    /// Unary-filtered candidates per element, ascending.
    cands: Vec<Vec<EventRef>>,
    /// `rel[j][x][y]`: the iteration predicates of Kleene element `j` hold
    /// for the consecutive pair (cands[j][x], cands[j][y]). `None` = no such
    /// predicates.
    rel: Vec<Option<Vec<Vec<bool>>>>,
    end: EventRef,
}

fn eval_with(p: &PatternSpec, pred: &Predicate, binds: &[(usize, Vec<&Event>)]) -> Result<bool> {
    let mut b = Bindings::new();
    for (pos, evs) in binds {
        b.insert(p.elements[*pos].alias.as_str(), evs.clone());
    }
    eval_predicate(pred, &b, &p.params)
}

impl<'a> Ctx<'a> {
    fn new(req: &DetectionRequest<'a>) -> Result<Option<Self>> {
        let p = req.pattern;
        let c = req.end_event.clone();
        let n = p.elements.len();
        let plan = Plan::new(p);
        let lo = c.t_gen - p.window;
        let mut cands = Vec::with_capacity(n);
        for (j, el) in p.elements.iter().enumerate() {
            let pool: Vec<EventRef> = if j == n - 1 && !el.kleene {
                vec![c.clone()]
            } else {
                req.universe
                    .slice(&el.et, lo, c.t_gen)
                    .iter()
                    .filter(|x| x.as_ref() < c.as_ref() || (j == n - 1 && x.as_ref() == c.as_ref()))
                    .cloned()
                    .collect()
            };
            let mut kept = Vec::with_capacity(pool.len());
            'next: for x in pool {
                for pred in &plan.constants[j] {
                    if !eval_with(p, pred, &[(j, vec![x.as_ref()])])? {
                        continue 'next;
                    }
                }
                kept.push(x);
            }
            if kept.is_empty() {
                return Ok(None);
            }
            cands.push(kept);
        }
        if p.elements[n - 1].kleene && cands[n - 1].last() != Some(&c) {
            // a Kleene run ending at `c` must contain `c`
            return Ok(None);
        }
        let mut rel = Vec::with_capacity(n);
        for (j, xs) in cands.iter().enumerate().take(n) {
            if plan.iteration[j].is_empty() {
                rel.push(None);
                continue;
            }
            let mut m = vec![vec![false; xs.len()]; xs.len()];
            for a in 0..xs.len() {
                for b in a + 1..xs.len() {
                    let mut ok = true;
                    for pred in &plan.iteration[j] {
                        if !eval_with(p, pred, &[(j, vec![xs[a].as_ref(), xs[b].as_ref()])])? {
                            ok = false;
                            break;
                        }
                    }
                    m[a][b] = ok;
                }
            }
            rel.push(Some(m));
        }
        Ok(Some(Ctx {
            p,
            plan,
            cands,
            rel,
            end: c,
        }))
    }

    fn rel(&self, j: usize, a: usize, b: usize) -> bool {
        self.rel[j].as_ref().is_none_or(|m| m[a][b])
    }

    fn anchors(&self) -> Vec<usize> {
        (0..self.p.elements.len())
            .filter(|&j| !self.p.elements[j].kleene)
            .collect()
    }

    /// Cross predicates between position `j` (bound to `x`) and already bound
    /// anchors.
    fn cross_ok(&self, j: usize, x: &Event, bound: &[Option<usize>]) -> Result<bool> {
        for &(pred, a, b) in &self.plan.cross {
            let other = if a == j {
                b
            } else if b == j {
                a
            } else {
                continue;
            };
            let Some(oi) = bound[other] else { continue };
            if self.p.elements[other].kleene {
                continue;
            }
            let o = self.cands[other][oi].as_ref();
            if !eval_with(self.p, pred, &[(j, vec![x]), (other, vec![o])])? {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// All maximal matches ending exactly at the request's end event.
pub fn detect_from_end(req: &DetectionRequest<'_>) -> Result<Vec<MatchRecord>> {
    let p = req.pattern;
    if req.end_event.et != p.end_type() {
        return Ok(Vec::new());
    }
    let Some(ctx) = Ctx::new(req)? else {
        return Ok(Vec::new());
    };
    let n = p.elements.len();
    let anchors = ctx.anchors();
    let mut bound: Vec<Option<usize>> = vec![None; n];
    let mut found: BTreeSet<Vec<EventRef>> = BTreeSet::new();
    bind_anchors(&ctx, &anchors, anchors.len(), &mut bound, &mut found)?;

    let mut out = Vec::with_capacity(found.len());
    for events in found {
        if p.policy == Policy::Stnm && !stnm_valid(&ctx, &events)? {
            continue;
        }
        debug_assert!(accepts(p, &events)?, "engine produced an invalid match");
        out.push(MatchRecord::new(p.id.clone(), events));
    }
    Ok(out)
}

/// Phase A: bind the non-Kleene positions right to left.
fn bind_anchors(
    ctx: &Ctx<'_>,
    anchors: &[usize],
    remaining: usize,
    bound: &mut Vec<Option<usize>>,
    found: &mut BTreeSet<Vec<EventRef>>,
) -> Result<()> {
    if remaining == 0 {
        return fill_runs(ctx, bound, found);
    }
    let j = anchors[remaining - 1];
    let limit: Option<&EventRef> = anchors[remaining..]
        .first()
        .map(|&k| &ctx.cands[k][bound[k].expect("bound to the right")]);
    for (i, x) in ctx.cands[j].iter().enumerate() {
        if let Some(l) = limit {
            if x >= l {
                break;
            }
        }
        if !ctx.cross_ok(j, x, bound)? {
            continue;
        }
        bound[j] = Some(i);
        bind_anchors(ctx, anchors, remaining - 1, bound, found)?;
        bound[j] = None;
    }
    Ok(())
}

/// One maximal choice of sets for a run of consecutive Kleene elements.
type RunChoice = Vec<Vec<usize>>;

/// Phase B: enumerate the maximal chains of every Kleene run given the
/// anchors, and combine them.
fn fill_runs(
    ctx: &Ctx<'_>,
    bound: &[Option<usize>],
    found: &mut BTreeSet<Vec<EventRef>>,
) -> Result<()> {
    let n = ctx.p.elements.len();
    let mut runs: Vec<(Vec<usize>, Vec<RunChoice>)> = Vec::new();
    let mut j = 0;
    while j < n {
        if !ctx.p.elements[j].kleene {
            j += 1;
            continue;
        }
        let start = j;
        while j < n && ctx.p.elements[j].kleene {
            j += 1;
        }
        let run: Vec<usize> = (start..j).collect();
        let lower = (start > 0).then(|| &ctx.cands[start - 1][bound[start - 1].unwrap()]);
        let upper = (j < n).then(|| &ctx.cands[j][bound[j].unwrap()]);
        // candidates inside the region that agree with every bound anchor
        let mut pools = Vec::with_capacity(run.len());
        for &k in &run {
            let mut pool = Vec::new();
            for (i, x) in ctx.cands[k].iter().enumerate() {
                if lower.is_some_and(|l| x <= l) || upper.is_some_and(|u| x >= u) {
                    continue;
                }
                if ctx.cross_ok(k, x, bound)? {
                    pool.push(i);
                }
            }
            if pool.is_empty() {
                return Ok(());
            }
            pools.push(pool);
        }
        let ends_at_c = j == n;
        let mut choices = Vec::new();
        let mut sets: RunChoice = Vec::new();
        run_first(
            ctx,
            &run,
            &pools,
            0,
            None,
            ends_at_c,
            &mut sets,
            &mut choices,
        );
        if choices.is_empty() {
            return Ok(());
        }
        runs.push((run, choices));
    }

    let anchor_events: Vec<EventRef> = (0..n)
        .filter_map(|k| bound[k].map(|i| ctx.cands[k][i].clone()))
        .collect();
    let mut pick = vec![0usize; runs.len()];
    loop {
        let mut events = anchor_events.clone();
        for (r, (run, choices)) in runs.iter().enumerate() {
            for (slot, &k) in run.iter().enumerate() {
                events.extend(
                    choices[pick[r]][slot]
                        .iter()
                        .map(|&i| ctx.cands[k][i].clone()),
                );
            }
        }
        events.sort();
        found.insert(events);
        // odometer over the per-run choices
        let mut r = 0;
        loop {
            if r == runs.len() {
                return Ok(());
            }
            pick[r] += 1;
            if pick[r] < runs[r].1.len() {
                break;
            }
            pick[r] = 0;
            r += 1;
        }
    }
}

/// Choose the first event of run element `slot`. `prev` is the last event
/// (candidate index) of the previous run element, if any.
#[allow(clippy::too_many_arguments)]
fn run_first(
    ctx: &Ctx<'_>,
    run: &[usize],
    pools: &[Vec<usize>],
    slot: usize,
    prev: Option<usize>,
    ends_at_c: bool,
    sets: &mut RunChoice,
    out: &mut Vec<RunChoice>,
) {
    let k = run[slot];
    let pool = &pools[slot];
    let prev_ev = prev.map(|i| &ctx.cands[run[slot - 1]][i]);
    let after_prev = |x: &EventRef| prev_ev.is_none_or(|pe| x > pe);
    for (pi, &fi) in pool.iter().enumerate() {
        let f = &ctx.cands[k][fi];
        if !after_prev(f) {
            continue;
        }
        // nothing of this type before `f` could have started the chain
        let blocked_here = pool[..pi]
            .iter()
            .any(|&xi| after_prev(&ctx.cands[k][xi]) && ctx.rel(k, xi, fi));
        if blocked_here {
            continue;
        }
        // the previous element's chain could not have continued up to `f`
        if let Some(li) = prev {
            let pk = run[slot - 1];
            let blocked_prev = pools[slot - 1].iter().any(|&xi| {
                let x = &ctx.cands[pk][xi];
                x > &ctx.cands[pk][li] && x < f && ctx.rel(pk, li, xi)
            });
            if blocked_prev {
                continue;
            }
        }
        sets.push(vec![fi]);
        run_chain(ctx, run, pools, slot, ends_at_c, sets, out);
        sets.pop();
    }
}

fn run_chain(
    ctx: &Ctx<'_>,
    run: &[usize],
    pools: &[Vec<usize>],
    slot: usize,
    ends_at_c: bool,
    sets: &mut RunChoice,
    out: &mut Vec<RunChoice>,
) {
    let k = run[slot];
    let pool = &pools[slot];
    let cur = *sets[slot].last().unwrap();
    let cur_pos = pool.iter().position(|&i| i == cur).unwrap();

    // close the chain at `cur`
    if slot + 1 < run.len() {
        run_first(ctx, run, pools, slot + 1, Some(cur), ends_at_c, sets, out);
    } else if ends_at_c {
        if ctx.cands[k][cur] == ctx.end {
            out.push(sets.clone());
        }
    } else if !pool[cur_pos + 1..].iter().any(|&xi| ctx.rel(k, cur, xi)) {
        out.push(sets.clone());
    }

    // or continue it with a later event `y`, skipping nothing that fits between
    for (off, &yi) in pool[cur_pos + 1..].iter().enumerate() {
        if !ctx.rel(k, cur, yi) {
            continue;
        }
        let between = &pool[cur_pos + 1..cur_pos + 1 + off];
        if between
            .iter()
            .any(|&xi| ctx.rel(k, cur, xi) && ctx.rel(k, xi, yi))
        {
            continue;
        }
        sets[slot].push(yi);
        run_chain(ctx, run, pools, slot, ends_at_c, sets, out);
        sets[slot].pop();
    }
}

/// Skip-till-next-match: no intermediate non-Kleene binding may be
/// replaceable by an earlier event that follows the previous position.
fn stnm_valid(ctx: &Ctx<'_>, events: &[EventRef]) -> Result<bool> {
    let p = ctx.p;
    let n = p.elements.len();
    let binds = group(p, events);
    for k in 1..n - 1 {
        if p.elements[k].kleene {
            continue;
        }
        let b = &binds[k][0];
        let prev_last = binds[k - 1].last().unwrap();
        for x in &ctx.cands[k] {
            if x <= prev_last {
                continue;
            }
            if x >= b {
                break;
            }
            let mut ok = true;
            for &(pred, a, bb) in &ctx.plan.cross {
                let other = if a == k {
                    bb
                } else if bb == k {
                    a
                } else {
                    continue;
                };
                let others: Vec<&Event> = binds[other].iter().map(|e| e.as_ref()).collect();
                if !eval_with(p, pred, &[(k, vec![x.as_ref()]), (other, others)])? {
                    ok = false;
                    break;
                }
            }
            if ok {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn group<'e>(p: &PatternSpec, events: &'e [EventRef]) -> Vec<Vec<&'e EventRef>> {
    let mut out = vec![Vec::new(); p.elements.len()];
    for e in events {
        if let Some(pos) = p.position_of(&e.et) {
            out[pos].push(e);
        }
    }
    out
}

/// Full check that `events` (sorted) form a valid match of `p`: structure,
/// strict order, window and every predicate.
pub fn accepts(p: &PatternSpec, events: &[EventRef]) -> Result<bool> {
    if events.is_empty() || events.windows(2).any(|w| w[0] >= w[1]) {
        return Ok(false);
    }
    if events.last().unwrap().t_gen - events[0].t_gen > p.window {
        return Ok(false);
    }
    let mut expect = 0usize;
    let mut count = 0usize;
    for e in events {
        let Some(pos) = p.position_of(&e.et) else {
            return Ok(false);
        };
        if pos == expect && (count == 0 || p.elements[pos].kleene) {
            count += 1;
        } else if pos == expect + 1 && count > 0 {
            expect = pos;
            count = 1;
        } else {
            return Ok(false);
        }
    }
    if expect != p.elements.len() - 1 {
        return Ok(false);
    }
    let bindings = p.bindings(events.iter().map(|e| e.as_ref()));
    for pred in &p.predicates {
        if !eval_predicate(pred, &bindings, &p.params)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Re-evaluate every end event inside `mpw`. Each end event is evaluated on
/// its complete window, so `universe` must cover `[mpw.start − W, mpw.end]`.
pub fn detect_on_demand(
    p: &PatternSpec,
    universe: &Universe,
    mpw: Interval,
) -> Result<Vec<MatchRecord>> {
    let mut out = Vec::new();
    for c in universe.slice(p.end_type(), mpw.start, mpw.end) {
        let req = DetectionRequest {
            pattern: p,
            end_event: c.clone(),
            universe,
        };
        out.extend(detect_from_end(&req)?);
    }
    Ok(out)
}

/// Keep a match unless another match in the list strictly contains it.
/// Containment implies equal non-Kleene bindings, since each of those
/// positions binds exactly one event.
pub fn maximal_filter(matches: &[MatchRecord], p: &PatternSpec) -> Vec<MatchRecord> {
    let mut groups: HashMap<Vec<&Event>, Vec<&MatchRecord>> = HashMap::new();
    for m in matches {
        let sig: Vec<&Event> = m
            .events
            .iter()
            .filter(|e| p.position_of(&e.et).is_some_and(|k| !p.elements[k].kleene))
            .map(|e| e.as_ref())
            .collect();
        groups.entry(sig).or_default().push(m);
    }
    let mut out: Vec<MatchRecord> = matches
        .iter()
        .filter(|m| {
            let sig: Vec<&Event> = m
                .events
                .iter()
                .filter(|e| p.position_of(&e.et).is_some_and(|k| !p.elements[k].kleene))
                .map(|e| e.as_ref())
                .collect();
            !groups[&sig].iter().any(|o| m.strict_subset_of(o))
        })
        .cloned()
        .collect();
    out.sort_by(|a, b| a.events.cmp(&b.events));
    out.dedup_by(|a, b| a.same_events(b));
    out
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::pattern::parse_pattern;

    fn stream(spec: &str) -> Vec<EventRef> {
        // "A1 A2 B3" → events with t_gen in seconds
        spec.split_whitespace()
            .map(|tok| {
                let (et, t) = tok.split_at(1);
                let t: Millis = t.parse().unwrap();
                Arc::new(Event::new(tok.to_lowercase(), et, t * 1_000))
            })
            .collect()
    }

    fn show(ms: &[MatchRecord]) -> Vec<String> {
        ms.iter().map(|m| m.to_string()).collect()
    }

    fn run(pattern: &str, policy: Policy, events: &str) -> Vec<String> {
        let p = parse_pattern("p", pattern).unwrap().with_policy(policy);
        let evs = stream(events);
        let u = Universe::from_events(evs.clone());
        let mut all = Vec::new();
        for c in evs.iter().filter(|e| e.et == p.end_type()) {
            let req = DetectionRequest {
                pattern: &p,
                end_event: c.clone(),
                universe: &u,
            };
            all.extend(detect_from_end(&req).unwrap());
        }
        show(&all)
    }

    #[test]
    fn kleene_kleene_example() {
        let got = run(
            "PATTERN SEQ(A+ a[], B+ b[], C c) WITHIN 10 s",
            Policy::Stam,
            "A1 A2 B3 A4 B5 B6 C7",
        );
        assert_eq!(
            got,
            ["[a1, a2, b3, b5, b6, c7]", "[a1, a2, a4, b5, b6, c7]"]
        );
    }

    #[test]
    fn plain_sequence_stam() {
        let got = run(
            "PATTERN SEQ(A a, B b, C c) WITHIN 10 s",
            Policy::Stam,
            "A1 A2 B3 C4",
        );
        assert_eq!(got, ["[a1, b3, c4]", "[a2, b3, c4]"]);
    }

    #[test]
    fn stnm_binds_next_intermediate() {
        let got = run(
            "PATTERN SEQ(A a, B b, C c) WITHIN 10 s",
            Policy::Stnm,
            "A1 A2 B3 B4 C5",
        );
        assert_eq!(got, ["[a1, b3, c5]", "[a2, b3, c5]"]);
        let got = run(
            "PATTERN SEQ(A a, B b, C c) WITHIN 10 s",
            Policy::Stam,
            "A1 A2 B3 B4 C5",
        );
        assert_eq!(got.len(), 4);
    }

    #[test]
    fn nothing_before_end() {
        assert!(run(
            "PATTERN SEQ(A a, B b, C c) WITHIN 10 s",
            Policy::Stam,
            "C1 A2 B3"
        )
        .is_empty());
    }

    #[test]
    fn iteration_predicate_chains() {
        let p = parse_pattern(
            "p",
            "PATTERN SEQ(A a, B+ b[], C c) WHERE b[i+1].v > b[i].v WITHIN 10 s",
        )
        .unwrap()
        .with_policy(Policy::Stam);
        let mk =
            |id: &str, et: &str, t: Millis, v: f64| Arc::new(Event::new(id, et, t).with("v", v));
        let evs = vec![
            mk("a", "A", 0, 0.0),
            mk("b1", "B", 1, 1.0),
            mk("b2", "B", 2, 3.0),
            mk("b3", "B", 3, 2.0),
            mk("b4", "B", 4, 4.0),
            mk("c", "C", 5, 0.0),
        ];
        let u = Universe::from_events(evs.clone());
        let req = DetectionRequest {
            pattern: &p,
            end_event: evs[5].clone(),
            universe: &u,
        };
        let got: Vec<Vec<String>> = detect_from_end(&req)
            .unwrap()
            .iter()
            .map(|m| m.events.iter().map(|e| e.id.clone()).collect())
            .collect();
        assert_eq!(
            got,
            [
                vec!["a", "b1", "b2", "b4", "c"],
                vec!["a", "b1", "b3", "b4", "c"]
            ]
        );
    }

    #[test]
    fn kleene_end() {
        let got = run(
            "PATTERN SEQ(A a, B+ b[]) WITHIN 10 s",
            Policy::Stam,
            "A1 B2 B3",
        );
        assert_eq!(got, ["[a1, b2]", "[a1, b2, b3]"]);
    }

    #[test]
    fn maximal_filter_drops_subsets() {
        let p = parse_pattern("p", "PATTERN SEQ(A+ a[], B b, C c) WITHIN 10 s").unwrap();
        let evs = stream("A1 A2 B3 C4");
        let small = MatchRecord::new("p", vec![evs[0].clone(), evs[2].clone(), evs[3].clone()]);
        let big = MatchRecord::new("p", evs.clone());
        assert_eq!(
            show(&maximal_filter(&[small.clone(), big.clone()], &p)),
            ["[a1, a2, b3, c4]"]
        );
        assert_eq!(show(&maximal_filter(&[small], &p)), ["[a1, b3, c4]"]);
    }

    #[test]
    fn accepts_checks_structure() {
        let p = parse_pattern("p", "PATTERN SEQ(A a, B+ b[], C c) WITHIN 10 s").unwrap();
        let evs = stream("A1 B2 B3 C4");
        assert!(accepts(&p, &evs).unwrap());
        assert!(!accepts(&p, &evs[1..]).unwrap());
        assert!(!accepts(&p, &[evs[0].clone(), evs[3].clone()]).unwrap());
        let wide = stream("A1 B2 C12");
        assert!(!accepts(&p, &wide).unwrap());
    }
}
