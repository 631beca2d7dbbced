//! Dataset generation, scoring against the oracle, and experiment runs.

pub mod dataset;
pub mod experiment;
pub mod score;

pub use dataset::{generate_dataset, Dataset, DatasetSpec, TypeSpec};
pub use experiment::{
    run_experiment, score_run, truth_for, ExperimentConfig, ExperimentReport, RunOutcome,
};
pub use score::{
    evaluate, final_set, load_emissions, match_sets, truth_log, Counts, MatchSets, ScoreReport,
};
