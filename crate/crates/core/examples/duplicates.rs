//! Redelivered events are dropped at the store: an in-order stream with
//! injected copies yields exactly the matches of the clean stream.

use limecep::bench::{generate_dataset, score_run, DatasetSpec};
use limecep::{parse_pattern, EngineConfig};

fn main() -> limecep::Result<()> {
    let pattern = parse_pattern("q", "PATTERN SEQ(A a, B+ b[], C c) WITHIN 10 seconds")?;
    for dups in [0, 10, 50, 200] {
        let spec = DatasetSpec::uniform(300, &["A", "B", "C"], 2.0, 5)
            .disordered(0.0, 5_000)
            .with_duplicates(dups);
        let out = score_run(
            EngineConfig::new(vec![pattern.clone()]),
            generate_dataset(&spec)?.variant,
        )?;
        let t = out.score.total;
        println!(
            "{dups:>3} copies: dropped {:>3}, tp {} fp {} fn {}",
            out.summary.counters.duplicates, t.tp, t.fp, t.fn_
        );
    }
    Ok(())
}
