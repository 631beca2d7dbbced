//! Several patterns over overlapping event types read from one store: each
//! event is kept once however many patterns use its type.

use limecep::bench::{generate_dataset, DatasetSpec};
use limecep::replay::{register_mapping, replay, ReplaySource};
use limecep::{parse_pattern, Engine, EngineConfig};

fn main() -> limecep::Result<()> {
    let patterns = vec![
        parse_pattern("p1", "PATTERN SEQ(A+ a[], B b, C c) WITHIN 10 seconds")?,
        parse_pattern("p2", "PATTERN SEQ(B b, C+ c[], D d) WITHIN 10 seconds")?,
        parse_pattern(
            "p3",
            "PATTERN SEQ(A a, D d) WHERE a.value < d.value WITHIN 5 seconds",
        )?,
    ];
    let (q_to_types, type_to_q) = register_mapping(&patterns);
    println!("pattern → types: {q_to_types:?}");
    println!("type → patterns: {type_to_q:?}\n");

    let spec = DatasetSpec::uniform(400, &["A", "B", "C", "D"], 2.0, 21).disordered(0.3, 4_000);
    let events = generate_dataset(&spec)?.variant;
    let copies: usize = events
        .iter()
        .map(|e| type_to_q.get(&e.et).map_or(0, Vec::len))
        .sum();
    let mut engine = Engine::build(EngineConfig::new(patterns))?;
    let summary = replay(ReplaySource::new(events), &mut engine)?;

    let c = summary.counters;
    println!(
        "delivered {}, stored {} (held now {}, evicted {})",
        c.delivered,
        c.stored,
        engine.index().len(),
        c.evicted
    );
    println!("one store per pattern would have taken {copies} insertions");
    for p in engine.patterns() {
        let r = engine
            .results(&p.id)
            .expect("every pattern has a result store");
        let l = r.latency();
        println!(
            "{}: {} detections, {} still live, mean latency {:.0} ms",
            p.id,
            l.count,
            r.stored_len(),
            l.mean_ms
        );
    }
    Ok(())
}
