//! Lazy maximal-match complex event processing over streams that arrive out
//! of order, late, or duplicated.
//!
//! Events land in one shared, per-type sorted index. Detection is lazy: it
//! runs backwards from end-type events, and from late events that may change
//! results already emitted. Emitted matches are later corrected or
//! invalidated when late data reveals a larger or more valid match.
//!
//! ```
//! use limecep::{parse_pattern, Engine, EngineConfig, Event};
//!
//! let p = parse_pattern("abc", "PATTERN SEQ(A a, B+ b[], C c) WITHIN 10 seconds").unwrap();
//! let mut engine = Engine::build(EngineConfig::new(vec![p])).unwrap();
//! for (id, et, t) in [("a1", "A", 1_000), ("b2", "B", 2_000), ("c3", "C", 3_000)] {
//!     engine.process(Event::new(id, et, t)).unwrap();
//! }
//! assert_eq!(engine.emissions().len(), 1);
//! ```

pub mod bench;
pub mod config;
pub mod detect;
pub mod engine;
pub mod error;
pub mod index;
pub mod manager;
pub mod model;
pub mod oracle;
pub mod pattern;
pub mod replay;
pub mod results;
pub mod stats;

pub use detect::{detect_from_end, detect_on_demand, maximal_filter, DetectionRequest, Universe};
pub use engine::{Engine, EngineConfig};
pub use error::{Error, Result};
pub use index::{InsertOutcome, SharedIndex};
pub use manager::{ManagerConfig, Weights};
pub use model::{
    is_compatible, precedes, within_window, Event, EventKey, EventRef, MatchRecord, Millis, Scalar,
};
pub use oracle::{ground_truth, oracle_all_matches};
pub use pattern::{parse_pattern, PatternSpec, Policy};
pub use results::{OutputEvent, OutputKind};
pub use stats::StreamStats;
