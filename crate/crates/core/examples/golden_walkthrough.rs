//! Replays the twenty-event A B+ C stream in `data/s43` and prints every
//! emission as it happens, then the final match set next to the oracle's.

use std::path::Path;

use limecep::bench::{final_set, match_sets, truth_for};
use limecep::pattern::load_patterns;
use limecep::replay::load_events;
use limecep::{Engine, EngineConfig, OutputEvent};

fn show(o: &OutputEvent) -> String {
    let ids = |ks: &[limecep::EventKey]| {
        ks.iter()
            .map(|k| k.id.clone())
            .collect::<Vec<_>>()
            .join(",")
    };
    match &o.replaces {
        Some(old) => format!(
            "{:?} [{}] -> [{}] at {}s",
            o.kind,
            ids(old),
            ids(&o.events),
            o.at as f64 / 1e3
        ),
        None => format!(
            "{:?} [{}] at {}s",
            o.kind,
            ids(&o.events),
            o.at as f64 / 1e3
        ),
    }
}

fn main() -> limecep::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/s43");
    let patterns = load_patterns(&dir.join("patterns"))?;
    let events = load_events(&dir.join("events.jsonl"))?;
    let truth = truth_for(&events, &patterns)?;

    let mut engine = Engine::build(EngineConfig::new(patterns))?;
    for e in events {
        let id = e.id.clone();
        for o in engine.process(e)? {
            println!("after {id:>3}: {}", show(&o));
        }
    }
    for o in engine.flush()? {
        println!("flush     : {}", show(&o));
    }

    let got = final_set(engine.emissions());
    let want = match_sets(&truth);
    println!(
        "\nfinal {} matches, oracle {} — equal: {}",
        got.values().map(|s| s.len()).sum::<usize>(),
        want.values().map(|s| s.len()).sum::<usize>(),
        got == want
    );
    Ok(())
}
