use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use limecep::bench::{
    evaluate, final_set, generate_dataset, load_emissions, run_experiment, truth_for, truth_log,
    DatasetSpec, ScoreReport,
};
use limecep::config::{load_sources, ManagerFile};
use limecep::engine::write_emissions;
use limecep::pattern::load_patterns;
use limecep::replay::{load_events, replay_threaded, save_events, ReplaySource, RunSummary};
use limecep::{Engine, EngineConfig, ManagerConfig, Policy, Weights};

#[derive(Parser)]
#[command(
    name = "limecep",
    version,
    about = "Out-of-order complex event processing"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Replay an event file through the engine, or run an experiment config.
    Run(Box<RunArgs>),
    /// Generate a seeded (optionally disordered) event file.
    Gen {
        #[arg(long)]
        spec: PathBuf,
        /// Delivered stream, in arrival order.
        #[arg(long)]
        out: PathBuf,
        /// The in-order stream before displacement and duplicates.
        #[arg(long)]
        base_out: Option<PathBuf>,
    },
    /// Score an emission log against a reference log.
    Score {
        #[arg(long)]
        emissions: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Write the oracle's matches for an event file as a log of adds.
    Truth {
        #[arg(long)]
        patterns: PathBuf,
        #[arg(long)]
        events: PathBuf,
        #[arg(long, default_value = "stnm")]
        policy: Policy,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config; writes its report, CSV and log into --out-dir.
    #[arg(long, conflicts_with_all = ["patterns", "events"], requires = "out_dir")]
    experiment: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,

    /// Pattern file, or directory of pattern files.
    #[arg(long, required_unless_present = "experiment")]
    patterns: Option<PathBuf>,
    #[arg(long, required_unless_present = "experiment")]
    events: Option<PathBuf>,
    #[arg(long, default_value = "stnm")]
    policy: Policy,
    #[arg(long, value_enum)]
    correction: Option<Switch>,
    #[arg(long)]
    theta_mult: Option<f64>,
    /// α,β,γ
    #[arg(long, value_parser = parse_weights)]
    weights: Option<Weights>,
    #[arg(long)]
    slack_threshold: Option<f64>,
    /// Manager config file (global settings plus per-pattern overrides);
    /// the flags above take precedence over its global part.
    #[arg(long)]
    manager: Option<PathBuf>,
    /// Source declarations with inter-arrival estimates.
    #[arg(long)]
    sources: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    emissions: Option<PathBuf>,
    /// Score the final emitted set against this reference log.
    #[arg(long)]
    truth: Option<PathBuf>,
}

fn parse_weights(s: &str) -> Result<Weights, String> {
    let xs: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match xs[..] {
        [a, b, c] => Ok(Weights::new(a, b, c)),
        _ => Err("expected three comma-separated numbers".into()),
    }
}

#[derive(Serialize)]
struct RunReport {
    patterns: Vec<String>,
    manager: ManagerConfig,
    summary: RunSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    score: Option<ScoreReport>,
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> limecep::Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run(args: RunArgs) -> limecep::Result<()> {
    if let Some(cfg) = &args.experiment {
        let out = args.out_dir.as_deref().expect("clap enforces --out-dir");
        let report = run_experiment(cfg, out)?;
        println!(
            "{}: precision {:.4} ± {:.4}, recall {:.4} ± {:.4} over {} run(s)",
            report.name,
            report.precision.mean,
            report.precision.std_dev,
            report.recall.mean,
            report.recall.std_dev,
            report.repetitions
        );
        return Ok(());
    }
    let patterns_path = args.patterns.as_deref().expect("clap enforces --patterns");
    let events_path = args.events.as_deref().expect("clap enforces --events");

    let patterns: Vec<_> = load_patterns(patterns_path)?
        .into_iter()
        .map(|p| p.with_policy(args.policy))
        .collect();
    let file = match &args.manager {
        Some(p) => ManagerFile::load(p)?,
        None => ManagerFile::default(),
    };
    let (mut global, overrides) = file.resolve(&ManagerConfig::default());
    if let Some(c) = args.correction {
        global.correction = matches!(c, Switch::On);
    }
    if let Some(x) = args.theta_mult {
        global.theta_multiplier = x;
    }
    if let Some(w) = args.weights {
        global.weights = w;
    }
    if let Some(x) = args.slack_threshold {
        global.slack_ratio_threshold = x;
    }

    let ids = patterns.iter().map(|p| p.id.clone()).collect();
    let mut cfg = EngineConfig::new(patterns).with_manager(global);
    cfg.overrides = overrides;
    if let Some(s) = &args.sources {
        cfg.sources = load_sources(s)?;
    }
    let mut engine = Engine::build(cfg)?;
    let summary = replay_threaded(ReplaySource::from_file(events_path)?, &mut engine, 1024)?;

    if let Some(path) = &args.emissions {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        engine.write_emissions(&mut w)?;
        w.flush()?;
    }
    let score = match &args.truth {
        Some(t) => Some(evaluate(
            &final_set(engine.emissions()),
            &final_set(&load_emissions(t)?),
        )),
        None => None,
    };
    let report = RunReport {
        patterns: ids,
        manager: global,
        summary,
        score,
    };
    write_json(args.report.as_deref(), &report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Run(args) => run(*args),
        Cmd::Gen {
            spec,
            out,
            base_out,
        } => (|| {
            let spec: DatasetSpec = serde_json::from_str(&std::fs::read_to_string(&spec)?)?;
            let d = generate_dataset(&spec)?;
            save_events(&out, &d.variant)?;
            if let Some(b) = base_out {
                save_events(&b, &d.base)?;
            }
            eprintln!(
                "{} events ({} in-order base) → {}",
                d.variant.len(),
                d.base.len(),
                out.display()
            );
            Ok(())
        })(),
        Cmd::Score {
            emissions,
            truth,
            report,
        } => (|| {
            let got = final_set(&load_emissions(&emissions)?);
            let want = final_set(&load_emissions(&truth)?);
            write_json(report.as_deref(), &evaluate(&got, &want))
        })(),
        Cmd::Truth {
            patterns,
            events,
            policy,
            out,
        } => (|| {
            let patterns: Vec<_> = load_patterns(&patterns)?
                .into_iter()
                .map(|p| p.with_policy(policy))
                .collect();
            let truth = truth_for(&load_events(&events)?, &patterns)?;
            let mut w = BufWriter::new(std::fs::File::create(&out)?);
            write_emissions(&truth_log(&truth), &mut w)?;
            w.flush()?;
            Ok(())
        })(),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("limecep: {e}");
            ExitCode::FAILURE
        }
    }
}
