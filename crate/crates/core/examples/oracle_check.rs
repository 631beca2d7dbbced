//! Backward detection from each end event next to the brute-force oracle on
//! a small hand-written universe, under both selection policies.

use std::sync::Arc;

use limecep::{
    detect_from_end, ground_truth, parse_pattern, DetectionRequest, Event, EventRef, Policy,
    Universe,
};

fn main() -> limecep::Result<()> {
    // A1 A2 B3 A4 B5 B6 C7 C8, one second apart
    let events: Vec<EventRef> = "A1 A2 B3 A4 B5 B6 C7 C8"
        .split_whitespace()
        .map(|s| {
            let (et, n) = s.split_at(1);
            Arc::new(Event::new(
                s.to_lowercase(),
                et,
                n.parse::<i64>().unwrap() * 1_000,
            ))
        })
        .collect();
    let universe = Universe::from_events(events.iter().cloned());
    for policy in [Policy::Stam, Policy::Stnm] {
        for text in ["SEQ(A a, B b, C c)", "SEQ(A+ a[], B+ b[], C c)"] {
            let p = parse_pattern("q", &format!("PATTERN {text} WITHIN 10 s"))?.with_policy(policy);
            println!("{policy} {text}");
            for c in events.iter().filter(|e| e.et == "C") {
                let req = DetectionRequest {
                    pattern: &p,
                    end_event: c.clone(),
                    universe: &universe,
                };
                for m in detect_from_end(&req)? {
                    println!("  engine {m}");
                }
            }
            for m in ground_truth(&events, &p)? {
                println!("  oracle {m}");
            }
        }
    }
    Ok(())
}
