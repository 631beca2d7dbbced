//! Per-pattern event manager: lateness scoring, extreme-lateness filtering,
//! the "affects prior results" test, reprocessing windows and slack.

use std::collections::HashSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::SharedIndex;
use crate::model::{millis_to_secs, Event, EventKey, EventRef, Millis};
use crate::pattern::PatternSpec;
use crate::stats::StreamStats;

/// Factors of the three lateness terms. Written as `[α, β, γ]` in config files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Weights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Weights {
    pub const fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        Weights { alpha, beta, gamma }
    }
}

impl Default for Weights {
    fn default() -> Self {
        Weights::new(1.0, 1.0, 1.0)
    }
}

impl From<[f64; 3]> for Weights {
    fn from([alpha, beta, gamma]: [f64; 3]) -> Self {
        Weights { alpha, beta, gamma }
    }
}

impl From<Weights> for [f64; 3] {
    fn from(w: Weights) -> Self {
        [w.alpha, w.beta, w.gamma]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManagerConfig {
    pub weights: Weights,
    pub theta_multiplier: f64,
    pub slack_ratio_threshold: f64,
    /// Emit corrections and invalidations. Off, late events still trigger
    /// recomputation but the result store only deduplicates and adds.
    pub correction: bool,
}

impl Default for ManagerConfig {
    fn default() -> Self {
        ManagerConfig {
            weights: Weights::default(),
            theta_multiplier: 2.5,
            slack_ratio_threshold: 0.10,
            correction: true,
        }
    }
}

impl ManagerConfig {
    pub fn validate(&self) -> Result<()> {
        let w = self.weights;
        let finite_nonneg = |x: f64| x.is_finite() && x >= 0.0;
        if !(finite_nonneg(w.alpha) && finite_nonneg(w.beta) && finite_nonneg(w.gamma)) {
            return Err(Error::Config(
                "weights must be finite and nonnegative".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.slack_ratio_threshold) {
            return Err(Error::Config(
                "slack_ratio_threshold must lie in [0, 1]".into(),
            ));
        }
        if self.theta_multiplier.is_nan() || self.theta_multiplier < 0.0 {
            return Err(Error::Config("theta_multiplier must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lateness {
    InOrder,
    Late(f64),
    ExtremelyLate(f64),
}

/// Closed interval of generation times, in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Interval {
    pub start: Millis,
    pub end: Millis,
}

impl Interval {
    pub fn contains(&self, t: Millis) -> bool {
        self.start <= t && t <= self.end
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ActionKind {
    TriggerEnd(EventRef),
    TriggerOnDemand { mpw: Interval, trigger: EventRef },
    Buffer,
    Discard,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineAction {
    pub kind: ActionKind,
    /// Virtual time at which the action runs.
    pub scheduled_at: Millis,
}

/// Lateness score of `e` against the current statistics:
/// `α·ln(1+Δt) + β·(esar−acar)² + γ·acar/W`, where `Δt` is how far `e` lags
/// the watermark. Zero for in-order events.
pub fn ooo_score(e: &Event, p: &PatternSpec, stats: &StreamStats, w: &Weights) -> Result<f64> {
    if p.window <= 0 {
        return Err(Error::Config(format!(
            "pattern `{}` has a zero window",
            p.id
        )));
    }
    let time_diff = stats.ooo_time(e);
    if time_diff == 0.0 {
        return Ok(0.0);
    }
    let src = stats.source(&e.et);
    let acar = src.and_then(|s| s.acar()).unwrap_or(0.0);
    let esar = src.and_then(|s| s.esar).unwrap_or(acar);
    let arrival_diff = (esar - acar).abs();
    let norm_window = acar / millis_to_secs(p.window);
    Ok(w.alpha * time_diff.ln_1p() + w.beta * arrival_diff.powi(2) + w.gamma * norm_window)
}

pub fn classify_score(score: f64, theta: f64) -> Lateness {
    if score == 0.0 {
        Lateness::InOrder
    } else if score > theta {
        Lateness::ExtremelyLate(score)
    } else {
        Lateness::Late(score)
    }
}

pub fn classify(
    e: &Event,
    p: &PatternSpec,
    stats: &StreamStats,
    cfg: &ManagerConfig,
) -> Result<Lateness> {
    let score = ooo_score(e, p, stats, &cfg.weights)?;
    Ok(classify_score(
        score,
        stats.threshold(&e.et, cfg.theta_multiplier),
    ))
}

/// A late event can change results already produced when it is an end event
/// or precedes the latest stored end event.
pub fn affects_prior(e: &Event, p: &PatternSpec, index: &SharedIndex, stats: &StreamStats) -> bool {
    if !stats.is_late(e) {
        return false;
    }
    let Some(last_end) = index.last_of(p.end_type()) else {
        return false;
    };
    e.et == p.end_type() || e.t_gen < last_end.t_gen
}

/// Interval of generation times whose end events must be re-evaluated when
/// `e` arrives late.
pub fn compute_mpw(e: &Event, p: &PatternSpec, stats: &StreamStats) -> Result<Interval> {
    let pos = p
        .position_of(&e.et)
        .ok_or_else(|| Error::UnknownEventType(e.et.clone()))?;
    let n = p.elements.len();
    let w = p.window as f64;
    let ts = e.t_gen as f64;
    let lta = stats.lta.unwrap_or(e.t_gen) as f64;
    let t = w / n as f64;
    let n_left = pos as f64;
    let n_right = (n - 1 - pos) as f64;
    let (lo, hi) = if pos == n - 1 {
        (ts - w, ts)
    } else if p.elements[pos].kleene {
        (ts - w + n_right * t, ts + w)
    } else if pos == 0 {
        (ts, (ts + w).max(lta))
    } else {
        (ts - w + n_right * t, (ts + w - n_left * t).max(lta))
    };
    Ok(Interval {
        start: lo.floor() as Millis,
        end: hi.ceil() as Millis,
    })
}

/// Deliberate delay before on-demand recomputation: the disorder ratio
/// times the window.
pub fn slack_duration(p: &PatternSpec, stats: &StreamStats) -> Millis {
    (stats.ooo_ratio() * p.window as f64).round() as Millis
}

#[derive(Debug, Clone)]
pub struct EventManager {
    pattern: Arc<PatternSpec>,
    cfg: ManagerConfig,
    /// Events this pattern refused (extremely late or malformed).
    ignored: HashSet<EventKey>,
}

impl EventManager {
    pub fn new(pattern: Arc<PatternSpec>, cfg: ManagerConfig) -> Self {
        EventManager {
            pattern,
            cfg,
            ignored: HashSet::new(),
        }
    }

    pub fn pattern(&self) -> &Arc<PatternSpec> {
        &self.pattern
    }

    pub fn config(&self) -> &ManagerConfig {
        &self.cfg
    }

    pub fn is_relevant(&self, e: &Event) -> bool {
        self.pattern.position_of(&e.et).is_some()
    }

    pub fn refuses(&self, e: &Event) -> bool {
        !self.ignored.is_empty() && self.ignored.contains(&e.key())
    }

    pub fn forget_before(&mut self, horizon: Millis) {
        self.ignored.retain(|k| k.t_gen >= horizon);
    }

    fn malformed(&self, e: &Event) -> bool {
        self.pattern
            .attrs_of_type(&e.et)
            .into_iter()
            .any(|a| e.attr(a).is_none())
    }

    /// Decide what to do with `e`, which is already stored and folded into
    /// `stats`. `score` is this pattern's lateness score for `e`, computed
    /// before the statistics update; `now` is the virtual clock.
    pub fn on_event(
        &mut self,
        e: &EventRef,
        score: f64,
        index: &SharedIndex,
        stats: &StreamStats,
        now: Millis,
    ) -> Vec<EngineAction> {
        let at_now = |kind| EngineAction {
            kind,
            scheduled_at: now,
        };
        let p = &self.pattern;
        let Some(pos) = p.position_of(&e.et) else {
            return vec![at_now(ActionKind::Discard)];
        };
        // lateness is decided on the watermark so that degenerate all-zero
        // weights still route late events to recomputation
        let late = stats.is_late(e);
        let theta = stats.threshold(&e.et, self.cfg.theta_multiplier);
        if (late && score > theta) || self.malformed(e) {
            self.ignored.insert(e.key());
            return vec![at_now(ActionKind::Discard)];
        }
        let is_end = pos == p.elements.len() - 1;
        let mut actions = Vec::new();
        if is_end {
            actions.push(at_now(ActionKind::TriggerEnd(e.clone())));
            if !(late && p.elements[pos].kleene) {
                return actions;
            }
        }
        if late && affects_prior(e, p, index, stats) {
            let mut mpw = compute_mpw(e, p, stats).expect("relevant event");
            if is_end {
                // later end events may now absorb `e` into their Kleene run
                mpw = Interval {
                    start: e.t_gen + 1,
                    end: (e.t_gen + p.window).max(stats.lta.unwrap_or(e.t_gen)),
                };
            }
            let delay = if stats.ooo_ratio() >= self.cfg.slack_ratio_threshold {
                slack_duration(p, stats)
            } else {
                0
            };
            actions.push(EngineAction {
                kind: ActionKind::TriggerOnDemand {
                    mpw,
                    trigger: e.clone(),
                },
                scheduled_at: now + delay,
            });
        }
        if actions.is_empty() {
            actions.push(at_now(ActionKind::Buffer));
        }
        actions
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pattern::parse_pattern;

    fn pat(text: &str) -> PatternSpec {
        parse_pattern("p", text).unwrap()
    }

    fn ev(et: &str, t: Millis) -> Event {
        Event::new(format!("{}{t}", et.to_lowercase()), et, t)
    }

    #[test]
    fn score_in_order_is_zero() {
        let p = pat("PATTERN SEQ(A a, B b) WITHIN 10 s");
        let mut s = StreamStats::new();
        s.record_arrival(&ev("A", 1_000), 0.0, 0.0);
        let w = Weights::default();
        assert_eq!(ooo_score(&ev("B", 2_000), &p, &s, &w).unwrap(), 0.0);
    }

    #[test]
    fn score_hand_evaluated() {
        // Δt = 3 s, |esar − acar| = 0.5 s, acar = 1 s, W = 10 s
        let p = pat("PATTERN SEQ(A a, B b) WITHIN 10 s");
        let mut s = StreamStats::with_estimates([("B", 1.5)]);
        s.record_arrival(&ev("B", 0), 0.0, 0.0);
        s.record_arrival(&ev("B", 1_000), 0.0, 0.0);
        s.record_arrival(&ev("A", 5_000), 0.0, 0.0);
        let late = ev("B", 2_000).arriving_at(2_000);
        let got = ooo_score(&late, &p, &s, &Weights::default()).unwrap();
        let want = 4f64.ln() + 0.25 + 0.1;
        assert!((got - want).abs() < 1e-12, "{got}");
        assert!((got - 1.736).abs() < 1e-3);
        let zero = ooo_score(&late, &p, &s, &Weights::new(0.0, 0.0, 0.0)).unwrap();
        assert_eq!(zero, 0.0);
    }

    #[test]
    fn zero_window_is_config_error() {
        let mut p = pat("PATTERN SEQ(A a, B b) WITHIN 10 s");
        p.window = 0;
        let s = StreamStats::new();
        assert!(matches!(
            ooo_score(&ev("A", 0), &p, &s, &Weights::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn classification() {
        assert_eq!(classify_score(0.0, 2.0), Lateness::InOrder);
        assert_eq!(classify_score(1.7, 2.0), Lateness::Late(1.7));
        assert_eq!(classify_score(2.4, 2.0), Lateness::ExtremelyLate(2.4));
        assert_eq!(classify_score(2.0, 2.0), Lateness::Late(2.0));
    }

    #[test]
    fn aff_examples() {
        let p = pat("PATTERN SEQ(A a, B+ b[], C c) WITHIN 10 s");
        let mut ix = SharedIndex::new(100_000);
        let mut s = StreamStats::new();
        assert!(!affects_prior(&ev("B", 1_000), &p, &ix, &s));
        for e in [ev("C", 10_000), ev("C", 20_000)] {
            s.record_arrival(&e, 0.0, 0.0);
            ix.insert_event(e);
        }
        assert!(affects_prior(&ev("B", 8_000), &p, &ix, &s));
        assert!(!affects_prior(&ev("B", 21_000), &p, &ix, &s));
        s.record_arrival(&ev("A", 25_000), 0.0, 0.0);
        assert!(!affects_prior(&ev("A", 21_000), &p, &ix, &s));
        assert!(affects_prior(&ev("C", 21_000), &p, &ix, &s));
    }

    #[test]
    fn mpw_examples() {
        let p = pat("PATTERN SEQ(A a, B b, C c, D d) WITHIN 10 ms");
        let mut s = StreamStats::new();
        s.record_arrival(&ev("A", 104), 0.0, 0.0);
        // [95, 107.5] widened to whole milliseconds
        assert_eq!(
            compute_mpw(&ev("B", 100), &p, &s).unwrap(),
            Interval {
                start: 95,
                end: 108
            }
        );
        assert_eq!(
            compute_mpw(&ev("D", 100), &p, &s).unwrap(),
            Interval {
                start: 90,
                end: 100
            }
        );
        s.record_arrival(&ev("A", 115), 0.0, 0.0);
        assert_eq!(
            compute_mpw(&ev("A", 100), &p, &s).unwrap(),
            Interval {
                start: 100,
                end: 115
            }
        );
        assert!(matches!(
            compute_mpw(&ev("Z", 100), &p, &s),
            Err(Error::UnknownEventType(_))
        ));
    }

    #[test]
    fn slack_examples() {
        let p = pat("PATTERN SEQ(A a, B b) WITHIN 60 s");
        let mut s = StreamStats::new();
        assert_eq!(slack_duration(&p, &s), 0);
        for i in 0..100 {
            s.record_arrival(&ev("A", i), if i < 15 { 1.0 } else { 0.0 }, 0.0);
        }
        assert_eq!(slack_duration(&p, &s), 9_000);
        let p10 = pat("PATTERN SEQ(A a, B b) WITHIN 10 s");
        let mut all = StreamStats::new();
        all.record_arrival(&ev("A", 0), 1.0, 0.0);
        assert_eq!(slack_duration(&p10, &all), 10_000);
    }

    #[test]
    fn actions() {
        let p = Arc::new(pat("PATTERN SEQ(A a, B+ b[], C c) WITHIN 10 s"));
        let mut em = EventManager::new(p, ManagerConfig::default());
        let ix = SharedIndex::new(100_000);
        let s = StreamStats::new();
        let c = Arc::new(ev("C", 10_000));
        assert!(matches!(
            em.on_event(&c, 0.0, &ix, &s, 0)[0].kind,
            ActionKind::TriggerEnd(_)
        ));
        let d = Arc::new(ev("D", 10_000));
        assert_eq!(
            em.on_event(&d, 0.0, &ix, &s, 0)[0].kind,
            ActionKind::Discard
        );
        let a = Arc::new(ev("A", 10_000));
        assert_eq!(em.on_event(&a, 0.0, &ix, &s, 0)[0].kind, ActionKind::Buffer);
    }
}
