//! How the lateness threshold trades completeness for refusing stragglers,
//! and how little the three score weights matter once it is tolerant.

use limecep::bench::{generate_dataset, score_run, DatasetSpec};
use limecep::config::SourceConfig;
use limecep::{parse_pattern, EngineConfig, ManagerConfig, Weights};

fn main() -> limecep::Result<()> {
    let pattern = parse_pattern("q", "PATTERN SEQ(A a, B+ b[], C c) WITHIN 10 seconds")?;
    let events = generate_dataset(
        &DatasetSpec::uniform(200, &["A", "B", "C"], 3.0, 17).disordered(0.7, 8_000),
    )?
    .variant;
    let sources = ["A", "B", "C"].map(|t| SourceConfig::new(t, 3.0)).to_vec();
    let run = |m: ManagerConfig| {
        let cfg = EngineConfig::new(vec![pattern.clone()])
            .with_manager(m)
            .with_sources(sources.clone());
        score_run(cfg, events.clone())
    };

    println!("theta multiplier sweep, weights (1,1,1):");
    for mult in [0.0, 0.5, 1.0, 1.5, 2.5, 5.0, 1e9] {
        let out = run(ManagerConfig {
            theta_multiplier: mult,
            ..ManagerConfig::default()
        })?;
        let t = out.score.total;
        println!(
            "  ×{mult:<6} refused {:>3}  precision {:.3} recall {:.3}",
            out.summary.counters.discarded, t.precision, t.recall
        );
    }
    println!("weights with a tolerant threshold:");
    for w in [
        Weights::new(1.0, 0.0, 0.0),
        Weights::new(0.3, 0.3, 0.3),
        Weights::new(0.0, 1.0, 1.0),
    ] {
        let out = run(ManagerConfig {
            weights: w,
            theta_multiplier: 1e9,
            ..ManagerConfig::default()
        })?;
        let t = out.score.total;
        println!(
            "  ({}, {}, {})  precision {:.3} recall {:.3}",
            w.alpha, w.beta, w.gamma, t.precision, t.recall
        );
    }
    Ok(())
}
