#![allow(dead_code)]

use std::path::PathBuf;

use limecep::bench::{score_run, DatasetSpec, RunOutcome};
use limecep::config::SourceConfig;
use limecep::{parse_pattern, EngineConfig, Event, ManagerConfig, PatternSpec, Policy};

pub const WINDOW: &str = "10 seconds";
pub const MEAN_GAP_S: f64 = 3.0;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data")
}

/// ABC, AB+C and A+B+C over one ten-second window.
pub fn abc_patterns(policy: Policy) -> Vec<PatternSpec> {
    [
        ("abc", "SEQ(A a, B b, C c)"),
        ("ab_plus_c", "SEQ(A a, B+ b[], C c)"),
        ("a_plus_b_plus_c", "SEQ(A+ a[], B+ b[], C c)"),
    ]
    .into_iter()
    .map(|(id, seq)| {
        parse_pattern(id, &format!("PATTERN {seq} WITHIN {WINDOW}"))
            .unwrap()
            .with_policy(policy)
    })
    .collect()
}

pub fn abc_sources() -> Vec<SourceConfig> {
    ["A", "B", "C"]
        .into_iter()
        .map(|t| SourceConfig::new(t, MEAN_GAP_S))
        .collect()
}

/// Seeded stream of 60–200 events, 70% of them delayed by up to 8 s.
pub fn disorder_spec(seed: u64) -> DatasetSpec {
    let n = 60 + (seed as usize * 37) % 141;
    DatasetSpec::uniform(n, &["A", "B", "C"], MEAN_GAP_S, seed).disordered(0.7, 8_000)
}

/// Settings under which no event can be refused as extremely late.
pub fn tolerant() -> ManagerConfig {
    ManagerConfig {
        theta_multiplier: 1e9,
        ..ManagerConfig::default()
    }
}

pub fn run(patterns: Vec<PatternSpec>, manager: ManagerConfig, events: Vec<Event>) -> RunOutcome {
    let cfg = EngineConfig::new(patterns)
        .with_manager(manager)
        .with_sources(abc_sources());
    score_run(cfg, events).unwrap()
}
