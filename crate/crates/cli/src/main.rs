//! Command-line entry point for the attack-and-evaluate pipeline.
//!
//! Verbs: `validate` (config check), `run` (full pipeline), `attack`
//! (attacks only, against saved models), `evaluate` (metrics on saved
//! ledgers), `stats` (statistical tests on saved ledgers). Exit codes:
//! 0 success, 2 config error, 3 data error, 4 runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tabadv_core::parallel::with_jobs;
use tabadv_core::runner::{
    emit_plot_data, emit_report, load_ledgers, load_models, save_ledgers, save_models,
    ExperimentConfig, Pipeline, RunnerError,
};
use tabadv_core::schema::Schema;

#[derive(Parser)]
#[command(
    name = "tabadv",
    version,
    about = "Black-box adversarial attacks on tabular models with coherence constraints and class-specific anomaly detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate the configuration, then exit.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the full pipeline: preprocess, train, attack, evaluate, stats.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for the attack and evaluation stages.
        #[arg(long)]
        jobs: Option<usize>,
        /// Stop after this stage: preprocess, train, attack, evaluate, stats.
        #[arg(long)]
        stage: Option<String>,
    },
    /// Run attacks against the saved model archive in OUT.
    Attack {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Compute all metric families from saved models and ledgers in OUT.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Run the statistical comparison suite and rewrite the report in OUT.
    Stats {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        jobs: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig, RunnerError> {
    let mut cfg =
        ExperimentConfig::from_file(path).map_err(|e| RunnerError::Config(e.to_string()))?;
    if let Some(seed) = seed {
        cfg.master_seed = seed;
    }
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Result<(), RunnerError> {
    match cli.command {
        Command::Validate { config } => {
            let cfg = load_config(&config, None)?;
            let schema = Schema::from_toml_file(&cfg.dataset.schema)
                .map_err(|e| RunnerError::Data(e.to_string()))?;
            cfg.validate(&schema)
                .map_err(|e| RunnerError::Config(e.to_string()))?;
            if !cfg.dataset.data.exists() {
                return Err(RunnerError::Data(format!(
                    "dataset file not found: {}",
                    cfg.dataset.data.display()
                )));
            }
            println!(
                "config ok: {} models, {} attacks",
                cfg.models.len(),
                cfg.attacks.len()
            );
            Ok(())
        }
        Command::Run {
            config,
            out,
            seed,
            jobs,
            stage,
        } => {
            let cfg = load_config(&config, seed)?;
            let stop = parse_stage(stage.as_deref())?;
            with_jobs(jobs, move || run_stages(cfg, &out, stop))
        }
        Command::Attack {
            config,
            out,
            seed,
            jobs,
        } => {
            let cfg = load_config(&config, seed)?;
            with_jobs(jobs, move || {
                let mut pipeline = Pipeline::load(cfg)?;
                let archive = load_models(&out.join("models.json"))
                    .map_err(|e| RunnerError::Data(e.to_string()))?;
                pipeline.use_models(archive);
                pipeline.attack()?;
                persist_ledgers(&pipeline, &out)?;
                println!("ledgers written to {}", out.join("ledgers.json").display());
                Ok(())
            })
        }
        Command::Evaluate {
            config,
            out,
            seed,
            jobs,
        } => {
            let cfg = load_config(&config, seed)?;
            with_jobs(jobs, move || {
                let mut pipeline = resume(cfg, &out)?;
                pipeline.evaluate()?;
                persist_archive(&pipeline, &out)?;
                persist_report(&pipeline, &out)?;
                println!("report written to {}", out.join("report.json").display());
                Ok(())
            })
        }
        Command::Stats {
            config,
            out,
            seed,
            jobs,
        } => {
            let cfg = load_config(&config, seed)?;
            with_jobs(jobs, move || {
                let mut pipeline = resume(cfg, &out)?;
                pipeline.evaluate()?;
                pipeline.stats()?;
                persist_report(&pipeline, &out)?;
                println!(
                    "report with stats written to {}",
                    out.join("report.json").display()
                );
                Ok(())
            })
        }
    }
}

#[derive(Clone, Copy, PartialEq, PartialOrd)]
enum Stage {
    Preprocess,
    Train,
    Attack,
    Evaluate,
    Stats,
}

fn parse_stage(name: Option<&str>) -> Result<Stage, RunnerError> {
    match name {
        None => Ok(Stage::Stats),
        Some("preprocess") => Ok(Stage::Preprocess),
        Some("train") => Ok(Stage::Train),
        Some("attack") => Ok(Stage::Attack),
        Some("evaluate") => Ok(Stage::Evaluate),
        Some("stats") => Ok(Stage::Stats),
        Some(other) => Err(RunnerError::Config(format!("unknown stage {other:?}"))),
    }
}

fn run_stages(cfg: ExperimentConfig, out: &Path, stop: Stage) -> Result<(), RunnerError> {
    std::fs::create_dir_all(out).map_err(|e| RunnerError::Runtime {
        stage: "run",
        detail: e.to_string(),
    })?;
    let mut pipeline = Pipeline::load(cfg)?;
    println!(
        "preprocess: {} rows, {} train / {} test",
        pipeline.data.dataset.n_rows(),
        pipeline.data.train.n_rows(),
        pipeline.data.test.n_rows()
    );
    if stop == Stage::Preprocess {
        return Ok(());
    }

    pipeline.train()?;
    if let Some(archive) = pipeline.archive() {
        save_models(&archive, &out.join("models.json")).map_err(|e| RunnerError::Runtime {
            stage: "train",
            detail: e.to_string(),
        })?;
    }
    println!(
        "train: models written to {}",
        out.join("models.json").display()
    );
    if stop == Stage::Train {
        return Ok(());
    }

    pipeline.attack()?;
    persist_ledgers(&pipeline, out)?;
    println!(
        "attack: ledgers written to {}",
        out.join("ledgers.json").display()
    );
    if stop == Stage::Attack {
        return Ok(());
    }

    pipeline.evaluate()?;
    if stop == Stage::Evaluate {
        persist_report(&pipeline, out)?;
        println!(
            "evaluate: report written to {}",
            out.join("report.json").display()
        );
        return Ok(());
    }

    pipeline.stats()?;
    persist_report(&pipeline, out)?;
    println!(
        "run complete: report written to {}",
        out.join("report.json").display()
    );
    Ok(())
}

fn resume(cfg: ExperimentConfig, out: &Path) -> Result<Pipeline, RunnerError> {
    let mut pipeline = Pipeline::load(cfg)?;
    let archive =
        load_models(&out.join("models.json")).map_err(|e| RunnerError::Data(e.to_string()))?;
    pipeline.use_models(archive);
    pipeline.ledgers = Some(load_ledgers(&out.join("ledgers.json"))?);
    Ok(pipeline)
}

fn persist_archive(pipeline: &Pipeline, out: &Path) -> Result<(), RunnerError> {
    if let Some(archive) = pipeline.archive() {
        save_models(&archive, &out.join("models.json")).map_err(|e| RunnerError::Runtime {
            stage: "evaluate",
            detail: e.to_string(),
        })?;
    }
    Ok(())
}

fn persist_ledgers(pipeline: &Pipeline, out: &Path) -> Result<(), RunnerError> {
    std::fs::create_dir_all(out).map_err(|e| RunnerError::Runtime {
        stage: "attack",
        detail: e.to_string(),
    })?;
    let ledgers = pipeline
        .ledgers
        .as_ref()
        .ok_or_else(|| RunnerError::Runtime {
            stage: "attack",
            detail: "no ledgers".into(),
        })?;
    save_ledgers(ledgers, &out.join("ledgers.json"))
}

fn persist_report(pipeline: &Pipeline, out: &Path) -> Result<(), RunnerError> {
    let report = pipeline
        .report
        .as_ref()
        .ok_or_else(|| RunnerError::Runtime {
            stage: "evaluate",
            detail: "no report".into(),
        })?;
    emit_report(report, out).map_err(|e| RunnerError::Runtime {
        stage: "evaluate",
        detail: e.to_string(),
    })?;
    emit_plot_data(report, out).map_err(|e| RunnerError::Runtime {
        stage: "evaluate",
        detail: e.to_string(),
    })?;
    pipeline.emit_attributions(out)
}
