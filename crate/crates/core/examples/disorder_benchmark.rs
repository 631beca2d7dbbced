//! Accuracy of the engine with and without correction as the share of
//! delayed events grows, scored against the oracle. Prints the same columns
//! as the experiment CSV.

use limecep::bench::{generate_dataset, score_run, DatasetSpec};
use limecep::config::SourceConfig;
use limecep::{parse_pattern, EngineConfig, ManagerConfig, Policy};

fn main() -> limecep::Result<()> {
    let seeds = 10;
    println!("config,ooo_p,tp,fp,fn,precision,recall,mean_latency_ms");
    for policy in [Policy::Stnm, Policy::Stam] {
        let patterns = [
            "SEQ(A a, B b, C c)",
            "SEQ(A a, B+ b[], C c)",
            "SEQ(A+ a[], B+ b[], C c)",
        ]
        .iter()
        .enumerate()
        .map(|(i, s)| {
            parse_pattern(&format!("q{i}"), &format!("PATTERN {s} WITHIN 10 s"))
                .map(|p| p.with_policy(policy))
        })
        .collect::<limecep::Result<Vec<_>>>()?;
        for p in [0.0, 0.2, 0.5, 0.7] {
            for correction in [true, false] {
                let (mut tp, mut fp, mut fn_, mut lat) = (0, 0, 0, 0.0);
                for seed in 0..seeds {
                    let spec =
                        DatasetSpec::uniform(200, &["A", "B", "C"], 3.0, seed).disordered(p, 8_000);
                    let cfg = EngineConfig::new(patterns.clone())
                        .with_manager(ManagerConfig {
                            correction,
                            theta_multiplier: 1e9,
                            ..ManagerConfig::default()
                        })
                        .with_sources(["A", "B", "C"].map(|t| SourceConfig::new(t, 3.0)).to_vec());
                    let r = score_run(cfg, generate_dataset(&spec)?.variant)?.score;
                    (tp, fp, fn_) = (tp + r.total.tp, fp + r.total.fp, fn_ + r.total.fn_);
                    lat += r.mean_latency_ms / seeds as f64;
                }
                let prec = if tp + fp == 0 {
                    1.0
                } else {
                    tp as f64 / (tp + fp) as f64
                };
                let rec = if tp + fn_ == 0 {
                    1.0
                } else {
                    tp as f64 / (tp + fn_) as f64
                };
                let name = format!("{policy}-{}", if correction { "c" } else { "nc" });
                println!("{name},{p},{tp},{fp},{fn_},{prec:.3},{rec:.3},{lat:.0}");
            }
        }
    }
    Ok(())
}
