//! Fire alarm over three sensor feeds: a gas leak above a configurable level,
//! then rising temperatures, then smoke. One temperature reading is held up
//! by a gateway and shows up after the alarm went out, so both alarms get
//! corrected to include it.

use std::path::Path;

use limecep::config::{load_sources, ManagerFile};
use limecep::pattern::load_patterns;
use limecep::replay::{replay, ReplaySource};
use limecep::{Engine, EngineConfig, ManagerConfig};

fn main() -> limecep::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/smart_home");
    let patterns: Vec<_> = load_patterns(&dir.join("patterns"))?
        .into_iter()
        .map(|p| p.with_param("thresholdGas", 300.0))
        .collect();
    println!("{}\n", patterns[0]);

    let (global, overrides) =
        ManagerFile::load(&dir.join("manager.json"))?.resolve(&ManagerConfig::default());
    let mut cfg = EngineConfig::new(patterns)
        .with_manager(global)
        .with_sources(load_sources(&dir.join("sources.json"))?);
    cfg.overrides = overrides;

    let mut engine = Engine::build(cfg)?;
    let summary = replay(
        ReplaySource::from_file(&dir.join("events.jsonl"))?,
        &mut engine,
    )?;
    for o in engine.emissions() {
        let ids: Vec<_> = o.events.iter().map(|k| k.id.as_str()).collect();
        match &o.replaces {
            Some(old) => {
                let old: Vec<_> = old.iter().map(|k| k.id.as_str()).collect();
                println!("{:>5}ms {:?}: {old:?} -> {ids:?}", o.at, o.kind);
            }
            None => println!("{:>5}ms {:?}: {ids:?}", o.at, o.kind),
        }
    }
    println!(
        "\n{} events, {} adds, {} corrections, mean latency {:.0} ms",
        summary.events, summary.adds, summary.corrects, summary.latency.mean_ms
    );
    Ok(())
}
