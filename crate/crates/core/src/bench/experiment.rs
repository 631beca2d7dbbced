use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::dataset::{generate_dataset, DatasetSpec};
use super::score::{evaluate, final_set, match_sets, ScoreReport};
use crate::config::{ManagerFile, SourceConfig};
use crate::engine::{write_emissions, Engine, EngineConfig};
use crate::error::{Error, Result};
use crate::manager::ManagerConfig;
use crate::model::{Event, EventRef, MatchRecord, Scalar};
use crate::oracle::ground_truth;
use crate::pattern::{load_patterns, PatternSpec, Policy};
use crate::replay::{load_events, replay, ReplaySource, RunSummary};
use crate::results::OutputEvent;

/// Everything one scored replay produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub emissions: Vec<OutputEvent>,
    pub summary: RunSummary,
    pub truth: Vec<MatchRecord>,
    pub score: ScoreReport,
}

/// Reference answer over the deduplicated, in-order version of `events`.
pub fn truth_for(events: &[Event], patterns: &[PatternSpec]) -> Result<Vec<MatchRecord>> {
    let mut uniq: BTreeSet<EventRef> = BTreeSet::new();
    for e in events {
        // first delivery wins; later copies share its identity key
        if !uniq.contains(e) {
            uniq.insert(Arc::new(e.clone()));
        }
    }
    let ordered: Vec<EventRef> = uniq.into_iter().collect();
    let mut out = Vec::new();
    for p in patterns {
        let relevant: Vec<EventRef> = ordered
            .iter()
            .filter(|e| p.position_of(&e.et).is_some())
            .cloned()
            .collect();
        out.extend(ground_truth(&relevant, p)?);
    }
    Ok(out)
}

/// Replay `delivered` through an engine built from `cfg` and score the final
/// emitted set against the oracle.
pub fn score_run(cfg: EngineConfig, delivered: Vec<Event>) -> Result<RunOutcome> {
    let truth = truth_for(&delivered, &cfg.patterns)?;
    let mut engine = Engine::build(cfg)?;
    let summary = replay(ReplaySource::new(delivered), &mut engine)?;
    let emissions = engine.emissions().to_vec();
    let mut score = evaluate(&final_set(&emissions), &match_sets(&truth));
    score.mean_latency_ms = summary.latency.mean_ms;
    score.max_latency_ms = summary.latency.max_ms;
    Ok(RunOutcome {
        emissions,
        summary,
        truth,
        score,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Pattern file or directory, relative to the config file.
    pub patterns: PathBuf,
    /// Policy applied to every pattern (default: skip-till-next-match).
    #[serde(default)]
    pub policy: Policy,
    #[serde(default)]
    pub params: BTreeMap<String, Scalar>,
    /// Event file, relative to the config file. Exclusive with `dataset`.
    #[serde(default)]
    pub events: Option<PathBuf>,
    #[serde(default)]
    pub dataset: Option<DatasetSpec>,
    #[serde(default)]
    pub manager: ManagerFile,
    /// Declared sources; derived from the dataset or the patterns if absent.
    #[serde(default)]
    pub sources: Option<Vec<SourceConfig>>,
    #[serde(default = "one")]
    pub repetitions: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Serialize)]
pub struct Spread {
    pub mean: f64,
    pub std_dev: f64,
}

impl Spread {
    fn of(xs: &[f64]) -> Self {
        let n = xs.len().max(1) as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Spread {
            mean,
            std_dev: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub name: String,
    pub policy: Policy,
    pub manager: ManagerConfig,
    pub ooo_probability: f64,
    /// Arrival-delay model of generated datasets, stated for the record.
    pub displacement_model: String,
    pub repetitions: usize,
    pub precision: Spread,
    pub recall: Spread,
    pub runs: Vec<ScoreReport>,
    pub summary: RunSummary,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

fn input_events(cfg: &ExperimentConfig, base_dir: &Path) -> Result<(Vec<Event>, f64)> {
    match (&cfg.events, &cfg.dataset) {
        (Some(path), None) => Ok((load_events(&base_dir.join(path))?, 0.0)),
        (None, Some(spec)) => Ok((generate_dataset(spec)?.variant, spec.ooo_probability)),
        _ => Err(Error::Config(
            "an experiment needs exactly one of `events` and `dataset`".into(),
        )),
    }
}

/// Run an experiment config, writing `<name>.report.json`, `<name>.csv` and
/// `<name>.emissions.jsonl` (emissions of the last repetition) to `out_dir`.
pub fn run_experiment(config_path: &Path, out_dir: &Path) -> Result<ExperimentReport> {
    let cfg = ExperimentConfig::load(config_path)?;
    let base_dir = config_path.parent().unwrap_or(Path::new("."));
    let patterns: Vec<PatternSpec> = load_patterns(&base_dir.join(&cfg.patterns))?
        .into_iter()
        .map(|mut p| {
            p.policy = cfg.policy;
            p.params.extend(cfg.params.clone());
            p
        })
        .collect();
    let (global, overrides) = cfg.manager.resolve(&ManagerConfig::default());
    let (events, ooo_p) = input_events(&cfg, base_dir)?;
    let mut engine_cfg = EngineConfig::new(patterns).with_manager(global);
    engine_cfg.overrides = overrides;
    if let Some(sources) = &cfg.sources {
        engine_cfg.sources = sources.clone();
    } else if let Some(ds) = &cfg.dataset {
        engine_cfg.sources = ds
            .type_alphabet
            .iter()
            .map(|t| SourceConfig::new(t.name.clone(), t.mean_gap_seconds))
            .collect();
    }
    if cfg.repetitions == 0 {
        return Err(Error::Config("repetitions must be at least 1".into()));
    }

    let mut runs = Vec::with_capacity(cfg.repetitions);
    let mut last = None;
    for _ in 0..cfg.repetitions {
        let outcome = score_run(engine_cfg.clone(), events.clone())?;
        runs.push(outcome.score.clone());
        last = Some(outcome);
    }
    let last = last.expect("at least one repetition");
    let report = ExperimentReport {
        name: cfg.name.clone(),
        policy: cfg.policy,
        manager: global,
        ooo_probability: ooo_p,
        displacement_model: "forward arrival delay, uniform integer ms in [1, max_displacement_ms]"
            .into(),
        repetitions: cfg.repetitions,
        precision: Spread::of(&runs.iter().map(|r| r.total.precision).collect::<Vec<_>>()),
        recall: Spread::of(&runs.iter().map(|r| r.total.recall).collect::<Vec<_>>()),
        runs,
        summary: last.summary.clone(),
    };

    std::fs::create_dir_all(out_dir)?;
    let stem = out_dir.join(&cfg.name);
    std::fs::write(
        stem.with_extension("report.json"),
        serde_json::to_string_pretty(&report)? + "\n",
    )?;
    let mut csv = std::fs::File::create(stem.with_extension("csv"))?;
    writeln!(
        csv,
        "config,ooo_p,tp,fp,fn,precision,recall,mean_latency_ms"
    )?;
    for r in &report.runs {
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            cfg.name,
            ooo_p,
            r.total.tp,
            r.total.fp,
            r.total.fn_,
            r.total.precision,
            r.total.recall,
            r.mean_latency_ms
        )?;
    }
    let mut log = std::io::BufWriter::new(std::fs::File::create(
        stem.with_extension("emissions.jsonl"),
    )?);
    write_emissions(&last.emissions, &mut log)?;
    log.flush()?;
    Ok(report)
}
