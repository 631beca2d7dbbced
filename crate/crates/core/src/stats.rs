//! Shared stream statistics: counts, arrival-gap means, lateness aggregates
//! and the generation-time watermark.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::model::{millis_to_secs, Event, Millis};

/// Per-source (= per event type) measurements. Times are seconds.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SourceStats {
    pub ne: u64,
    pub no: u64,
    /// Declared mean inter-arrival gap.
    pub esar: Option<f64>,
    #[serde(skip)]
    last_arr: Option<Millis>,
    #[serde(skip)]
    gap_sum: f64,
    #[serde(skip)]
    gaps: u64,
    pub ooo_time_sum: f64,
    pub max_ooo: f64,
    pub min_ooo: f64,
    pub ooo_score_sum: f64,
}

impl SourceStats {
    /// Mean observed inter-arrival gap, seeded with the declared estimate
    /// until two arrivals have been seen.
    pub fn acar(&self) -> Option<f64> {
        if self.gaps > 0 {
            Some(self.gap_sum / self.gaps as f64)
        } else {
            self.esar
        }
    }

    pub fn avg_ooo(&self) -> Option<f64> {
        (self.no > 0).then(|| self.ooo_time_sum / self.no as f64)
    }

    pub fn avg_ooo_score(&self) -> Option<f64> {
        (self.no > 0).then(|| self.ooo_score_sum / self.no as f64)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StreamStats {
    pub ne_all: u64,
    pub no_all: u64,
    /// Latest generation time seen; `None` before the first event.
    pub lta: Option<Millis>,
    pub ooo_time_sum: f64,
    pub max_ooo: f64,
    pub min_ooo: f64,
    pub sources: BTreeMap<String, SourceStats>,
}

impl StreamStats {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stats with declared inter-arrival estimates (seconds) per type.
    pub fn with_estimates<I, S>(esar: I) -> Self
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut s = Self::new();
        for (et, gap) in esar {
            s.sources.entry(et.into()).or_default().esar = Some(gap);
        }
        s
    }

    pub fn source(&self, et: &str) -> Option<&SourceStats> {
        self.sources.get(et)
    }

    /// True when `e` was generated before the current watermark.
    pub fn is_late(&self, e: &Event) -> bool {
        self.lta.is_some_and(|lta| e.t_gen < lta)
    }

    /// Lateness in seconds relative to the current watermark, 0 if in order.
    pub fn ooo_time(&self, e: &Event) -> f64 {
        match self.lta {
            Some(lta) if e.t_gen < lta => millis_to_secs(lta - e.t_gen),
            _ => 0.0,
        }
    }

    /// Fold one arrival into the statistics. `ooo_time` is the lateness
    /// computed before this call, `ooo_score` the score assigned to `e`.
    pub fn record_arrival(&mut self, e: &Event, ooo_time: f64, ooo_score: f64) {
        self.ne_all += 1;
        let src = self.sources.entry(e.et.clone()).or_default();
        src.ne += 1;
        if let Some(prev) = src.last_arr {
            src.gap_sum += millis_to_secs((e.t_arr - prev).abs());
            src.gaps += 1;
        }
        src.last_arr = Some(e.t_arr);
        if ooo_time > 0.0 {
            fold_extrema(&mut src.max_ooo, &mut src.min_ooo, src.no, ooo_time);
            src.no += 1;
            src.ooo_time_sum += ooo_time;
            src.ooo_score_sum += ooo_score;
            fold_extrema(&mut self.max_ooo, &mut self.min_ooo, self.no_all, ooo_time);
            self.no_all += 1;
            self.ooo_time_sum += ooo_time;
        }
        self.lta = Some(self.lta.map_or(e.t_gen, |l| l.max(e.t_gen)));
    }

    /// Lateness threshold for a source: `multiplier × avg_ooo_score`, or +∞
    /// before any out-of-order event of that source has been seen. A zero
    /// multiplier tolerates nothing, history or not.
    pub fn threshold(&self, et: &str, multiplier: f64) -> f64 {
        if multiplier == 0.0 {
            return 0.0;
        }
        match self.source(et).and_then(SourceStats::avg_ooo_score) {
            Some(avg) => multiplier * avg,
            None => f64::INFINITY,
        }
    }

    pub fn ooo_ratio(&self) -> f64 {
        self.no_all as f64 / self.ne_all.max(1) as f64
    }

    pub fn avg_ooo(&self) -> Option<f64> {
        (self.no_all > 0).then(|| self.ooo_time_sum / self.no_all as f64)
    }
}

fn fold_extrema(max: &mut f64, min: &mut f64, seen: u64, v: f64) {
    if seen == 0 {
        *max = v;
        *min = v;
    } else {
        *max = max.max(v);
        *min = min.min(v);
    }
}
