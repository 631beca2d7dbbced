mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use proptest::prelude::*;

use common::{abc_patterns, abc_sources, tolerant};
use limecep::bench::{evaluate, final_set, generate_dataset, match_sets, truth_for, DatasetSpec};
use limecep::detect::accepts;
use limecep::manager::{classify, compute_mpw, ooo_score, Lateness};
use limecep::replay::{replay, write_events, ReplaySource};
use limecep::{
    detect_from_end, is_compatible, oracle_all_matches, parse_pattern, precedes, within_window,
    DetectionRequest, Engine, EngineConfig, Event, EventRef, ManagerConfig, MatchRecord,
    OutputKind, PatternSpec, Policy, SharedIndex, StreamStats, Universe, Weights,
};

fn event() -> impl Strategy<Value = Event> {
    (0i64..6, prop::sample::select(vec!["A", "B", "C"]), 0u8..3)
        .prop_map(|(t, et, id)| Event::new(format!("{id}"), et, t))
}

/// Distinct-time events over A/B/C with a small integer `value`.
fn universe(max: usize) -> impl Strategy<Value = Vec<EventRef>> {
    prop::collection::btree_set(0i64..25_000, 1..max).prop_flat_map(|times| {
        let n = times.len();
        (Just(times), prop::collection::vec((0usize..3, 0i64..6), n)).prop_map(|(times, tv)| {
            times
                .into_iter()
                .zip(tv)
                .enumerate()
                .map(|(i, (t, (k, v)))| {
                    let et = ["A", "B", "C"][k];
                    Arc::new(
                        Event::new(format!("{}{i}", et.to_lowercase()), et, t)
                            .with("value", v as f64),
                    )
                })
                .collect()
        })
    })
}

fn pattern_pool(policy: Policy) -> Vec<PatternSpec> {
    let mut v = abc_patterns(policy);
    v.push(
        parse_pattern(
            "pred",
            "PATTERN SEQ(A a, B+ b[], C c) WHERE b[i+1].value >= b[i].value AND a.value <= c.value WITHIN 10 s",
        )
        .unwrap()
        .with_policy(policy),
    );
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn precedes_is_a_strict_total_order(a in event(), b in event(), c in event()) {
        prop_assert!(!precedes(&a, &a));
        if a != b {
            prop_assert!(precedes(&a, &b) ^ precedes(&b, &a));
        } else {
            prop_assert!(!precedes(&a, &b) && !precedes(&b, &a));
        }
        if precedes(&a, &b) && precedes(&b, &c) {
            prop_assert!(precedes(&a, &c));
        }
    }

    #[test]
    fn compatible_extension_stays_in_window(evs in universe(8), k in 0usize..4) {
        let p = &pattern_pool(Policy::Stam)[k];
        let (head, tail) = evs.split_at(evs.len() / 2);
        let m = MatchRecord::new(&p.id, head.to_vec());
        for e in tail {
            if is_compatible(e, &m, p).unwrap() {
                let mut all = m.events.clone();
                all.push(e.clone());
                prop_assert!(within_window(&MatchRecord::new(&p.id, all), p.window));
            }
        }
    }

    #[test]
    fn match_minus_end_is_a_prefix_match(evs in universe(14), k in 0usize..3) {
        let p = &abc_patterns(Policy::Stam)[k];
        let prefix_text = ["SEQ(A a, B b)", "SEQ(A a, B+ b[])", "SEQ(A+ a[], B+ b[])"][k];
        let prefix = parse_pattern("prefix", &format!("PATTERN {prefix_text} WITHIN 10 s")).unwrap();
        for m in oracle_all_matches(&evs, p).unwrap() {
            let head = &m.events[..m.events.len() - 1];
            prop_assert!(accepts(&prefix, head).unwrap());
        }
    }

    #[test]
    fn index_contents_ignore_arrival_order(evs in prop::collection::vec(event(), 0..40), seed in any::<u64>()) {
        use rand::{seq::SliceRandom, SeedableRng};
        let fill = |xs: &[Event]| {
            let mut ix = SharedIndex::new(1_000_000);
            for e in xs {
                ix.insert_event(e.clone());
            }
            ix
        };
        let mut shuffled = evs.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        shuffled.extend(evs.iter().take(5).cloned());
        let (a, b) = (fill(&evs), fill(&shuffled));
        let keys = |ix: &SharedIndex| ix.snapshot().iter().map(|e| e.key()).collect::<Vec<_>>();
        prop_assert_eq!(keys(&a), keys(&b));
        let uniq: BTreeSet<_> = evs.iter().map(|e| e.key()).collect();
        prop_assert_eq!(a.len(), uniq.len());
        for et in ["A", "B", "C"] {
            let r = b.range(et, i64::MIN, i64::MAX);
            prop_assert!(r.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn avg_ooo_score_is_the_mean_of_recorded_scores(
        arrivals in prop::collection::vec((0i64..50, 0.0f64..10.0, prop::bool::ANY), 1..60)
    ) {
        let mut s = StreamStats::new();
        let mut scores = Vec::new();
        for (i, (t, score, late)) in arrivals.iter().enumerate() {
            let e = Event::new(format!("a{i}"), "A", *t).arriving_at(i as i64);
            let ooo_time = if *late { 1.5 } else { 0.0 };
            if *late {
                scores.push(*score);
            }
            s.record_arrival(&e, ooo_time, *score);
        }
        let got = s.source("A").unwrap().avg_ooo_score();
        if scores.is_empty() {
            prop_assert!(got.is_none());
        } else {
            let want = scores.iter().sum::<f64>() / scores.len() as f64;
            prop_assert!((got.unwrap() - want).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_score_iff_in_order(evs in universe(20), w in (0.0f64..3.0, 0.0f64..3.0, 0.0f64..3.0)) {
        let p = &abc_patterns(Policy::Stnm)[0];
        let weights = Weights::new(0.5 + w.0, w.1, w.2);
        let cfg = ManagerConfig { weights, ..ManagerConfig::default() };
        let mut s = StreamStats::with_estimates([("A", 3.0), ("B", 3.0), ("C", 3.0)]);
        // scrambled delivery: reverse every other pair
        let mut order: Vec<_> = evs.iter().map(|e| e.as_ref().clone()).collect();
        for pair in order.chunks_mut(2) {
            pair.reverse();
        }
        for (i, e) in order.into_iter().enumerate() {
            let e = e.arriving_at(i as i64 * 700);
            let score = ooo_score(&e, p, &s, &weights).unwrap();
            let class = classify(&e, p, &s, &cfg).unwrap();
            prop_assert_eq!(score == 0.0, class == Lateness::InOrder);
            prop_assert_eq!(score == 0.0, !s.is_late(&e));
            s.record_arrival(&e, s.ooo_time(&e), score);
        }
    }

    #[test]
    fn mpw_contains_the_event(evs in universe(10), k in 0usize..4, lta in 0i64..40_000) {
        let p = &pattern_pool(Policy::Stnm)[k];
        let mut s = StreamStats::new();
        s.record_arrival(&Event::new("w", "A", lta), 0.0, 0.0);
        for e in evs.iter() {
            let iv = compute_mpw(e, p, &s).unwrap();
            prop_assert!(iv.start <= iv.end);
            prop_assert!(iv.contains(e.t_gen), "{} not in {:?}", e.t_gen, iv);
        }
    }

    #[test]
    fn parse_render_round_trip(
        n in 2usize..5,
        kleene in prop::collection::vec(prop::bool::ANY, 4),
        preds in prop::collection::vec((0usize..6, 0usize..4, 0usize..4, -3i64..9), 0..4),
        window in 1i64..100_000,
        in_ms in prop::bool::ANY,
    ) {
        let types = ["Alpha", "Beta", "Gamma", "Delta"];
        let alias = |i: usize| format!("x{i}");
        let mut elems = Vec::new();
        for i in 0..n {
            elems.push(if kleene[i] { format!("{}+ {}[]", types[i], alias(i)) } else { format!("{} {}", types[i], alias(i)) });
        }
        let mut clauses = Vec::new();
        for (kind, i, j, v) in preds {
            let (i, j) = (i % n, j % n);
            let c = match kind {
                0 => format!("{}.value > {v}", alias(i)),
                1 => format!("{}.tag == 'k{v}'", alias(i)),
                2 if kleene[i] => format!("{0}[i+1].value >= {0}[i].value", alias(i)),
                3 if i != j && !(kleene[i] && kleene[j]) => format!("{}.value <= {}.value", alias(i), alias(j)),
                4 => format!("{}.value != limit", alias(i)),
                _ => format!("{}.value < {v}.5", alias(i)),
            };
            clauses.push(c);
        }
        let mut text = format!("PATTERN SEQ({})", elems.join(", "));
        if !clauses.is_empty() {
            text += &format!(" WHERE {}", clauses.join(" AND "));
        }
        text += &if in_ms { format!(" WITHIN {window} milliseconds") } else { format!(" WITHIN {} seconds", window / 1000 + 1) };

        let p = parse_pattern("q", &text).unwrap();
        let again = parse_pattern("q", &p.to_string()).unwrap();
        prop_assert_eq!(&p, &again);
        for pred in &p.predicates {
            for a in pred.aliases() {
                prop_assert!(p.alias_position(a).is_some());
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn detection_is_sound_maximal_and_deterministic(evs in universe(30), k in 0usize..4, stam in prop::bool::ANY) {
        let policy = if stam { Policy::Stam } else { Policy::Stnm };
        let p = &pattern_pool(policy)[k];
        let u = Universe::from_events(evs.iter().cloned());
        let all: BTreeSet<_> = oracle_all_matches(&evs, p).unwrap().iter().map(|m| m.keys()).collect();
        for c in evs.iter().filter(|e| e.et == p.end_type()) {
            let req = DetectionRequest { pattern: p, end_event: c.clone(), universe: &u };
            let got = detect_from_end(&req).unwrap();
            prop_assert_eq!(&got.iter().map(|m| m.keys()).collect::<Vec<_>>(),
                &detect_from_end(&req).unwrap().iter().map(|m| m.keys()).collect::<Vec<_>>());
            for m in &got {
                prop_assert!(all.contains(&m.keys()), "unsound {}", m);
                // no single event of the universe extends it into a match
                for x in evs.iter().filter(|x| !m.contains(x)) {
                    let mut bigger = m.events.clone();
                    bigger.push(x.clone());
                    bigger.sort();
                    prop_assert!(!accepts(p, &bigger).unwrap(), "{} extends {}", x, m);
                }
            }
        }
    }

    #[test]
    fn detection_equals_maximal_oracle(evs in universe(40), k in 0usize..4, stam in prop::bool::ANY) {
        let policy = if stam { Policy::Stam } else { Policy::Stnm };
        let p = &pattern_pool(policy)[k];
        let u = Universe::from_events(evs.iter().cloned());
        let mut got = BTreeSet::new();
        for c in evs.iter().filter(|e| e.et == p.end_type()) {
            let req = DetectionRequest { pattern: p, end_event: c.clone(), universe: &u };
            got.extend(detect_from_end(&req).unwrap().iter().map(|m| m.keys()));
        }
        let want: BTreeSet<_> = limecep::ground_truth(&evs, p).unwrap().iter().map(|m| m.keys()).collect();
        prop_assert_eq!(got, want);
    }
}

fn disordered(seed: u64, n: usize, p: f64) -> Vec<Event> {
    let spec = DatasetSpec::uniform(n, &["A", "B", "C"], 2.0, seed).disordered(p, 6_000);
    generate_dataset(&spec).unwrap().variant
}

fn engine_run(patterns: Vec<PatternSpec>, m: ManagerConfig, events: Vec<Event>) -> Engine {
    let cfg = EngineConfig::new(patterns)
        .with_manager(m)
        .with_sources(abc_sources());
    let mut engine = Engine::build(cfg).unwrap();
    replay(ReplaySource::new(events), &mut engine).unwrap();
    engine
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scaling_weights_keeps_every_decision(seed in any::<u64>(), k in prop::sample::select(vec![0.5, 2.0, 4.0, 8.0])) {
        let events = disordered(seed, 80, 0.5);
        let base = Weights::new(1.0, 0.5, 1.0);
        let scaled = Weights::new(base.alpha * k, base.beta * k, base.gamma * k);
        let cfg = |w| ManagerConfig { weights: w, theta_multiplier: 1.5, ..ManagerConfig::default() };
        let a = engine_run(abc_patterns(Policy::Stnm), cfg(base), events.clone());
        let b = engine_run(abc_patterns(Policy::Stnm), cfg(scaled), events);
        prop_assert_eq!(a.counters(), b.counters());
        prop_assert_eq!(a.emissions(), b.emissions());
    }

    #[test]
    fn infinite_threshold_never_discards(seed in any::<u64>()) {
        let m = ManagerConfig { theta_multiplier: f64::INFINITY, ..ManagerConfig::default() };
        let e = engine_run(abc_patterns(Policy::Stnm), m, disordered(seed, 80, 0.7));
        prop_assert_eq!(e.counters().discarded, 0);
    }

    #[test]
    fn replay_yields_identical_stats_and_logs(seed in any::<u64>()) {
        let events = disordered(seed, 60, 0.7);
        let a = engine_run(abc_patterns(Policy::Stam), ManagerConfig::default(), events.clone());
        let b = engine_run(abc_patterns(Policy::Stam), ManagerConfig::default(), events);
        prop_assert_eq!(a.snapshot_stats(), b.snapshot_stats());
        let (mut la, mut lb) = (Vec::new(), Vec::new());
        a.write_emissions(&mut la).unwrap();
        b.write_emissions(&mut lb).unwrap();
        prop_assert_eq!(la, lb);
    }

    #[test]
    fn final_state_is_sound_and_repaired(seed in any::<u64>(), stam in prop::bool::ANY) {
        let policy = if stam { Policy::Stam } else { Policy::Stnm };
        let events = disordered(seed, 90, 0.7);
        let patterns = abc_patterns(policy);
        let truth = truth_for(&events, &patterns).unwrap();
        let e = engine_run(patterns.clone(), tolerant(), events.clone());
        // soundness against every (not only maximal) oracle match
        for p in &patterns {
            let evs: Vec<EventRef> = events.iter().map(|e| Arc::new(e.clone())).collect::<BTreeSet<_>>().into_iter().collect();
            let all: BTreeSet<_> = oracle_all_matches(&evs, p).unwrap().iter().map(|m| m.keys()).collect();
            for m in e.results(&p.id).unwrap().stored() {
                prop_assert!(all.contains(&m.keys()));
            }
        }
        prop_assert_eq!(final_set(e.emissions()), match_sets(&truth));
        let mut adds = BTreeSet::new();
        for o in e.emissions().iter().filter(|o| o.kind == OutputKind::Add) {
            prop_assert!(adds.insert((o.pattern_id.clone(), o.events.clone())), "repeated add");
        }
    }

    #[test]
    fn partitions_keep_their_order(seed in any::<u64>()) {
        let events = disordered(seed, 100, 0.6);
        let delivered: Vec<Event> = ReplaySource::new(events.clone()).collect();
        for part in 0..3 {
            let want: Vec<_> = events.iter().filter(|e| e.partition == part).map(|e| e.id.clone()).collect();
            let got: Vec<_> = delivered.iter().filter(|e| e.partition == part).map(|e| e.id.clone()).collect();
            prop_assert_eq!(got, want);
        }
        prop_assert!(delivered.windows(2).all(|w| w[0].t_arr <= w[1].t_arr));
    }

    #[test]
    fn generated_variants_are_seeded_permutations(seed in any::<u64>(), p in 0.0f64..1.0, dups in 0usize..20) {
        let spec = DatasetSpec::uniform(70, &["A", "B", "C"], 1.5, seed).disordered(p, 4_000).with_duplicates(dups);
        let d = generate_dataset(&spec).unwrap();
        let base: BTreeSet<_> = d.base.iter().map(|e| e.key()).collect();
        let variant: BTreeSet<_> = d.variant.iter().map(|e| e.key()).collect();
        prop_assert_eq!(base, variant);
        prop_assert_eq!(d.variant.len(), 70 + dups);
        let (mut a, mut b) = (Vec::new(), Vec::new());
        write_events(&d.variant, &mut a).unwrap();
        write_events(&generate_dataset(&spec).unwrap().variant, &mut b).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn scoring_a_set_against_itself_is_perfect(seed in any::<u64>()) {
        let events = disordered(seed, 50, 0.0);
        let truth = truth_for(&events, &abc_patterns(Policy::Stam)).unwrap();
        let r = evaluate(&match_sets(&truth), &match_sets(&truth));
        prop_assert_eq!((r.total.precision, r.total.recall, r.total.fp, r.total.fn_), (1.0, 1.0, 0, 0));
    }
}
