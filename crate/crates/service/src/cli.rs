//! Command-line entry points.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use hiergrounding::config::Config;
use hiergrounding::corpus::{gen_synthetic_corpus, load_corpus, save_corpus, write_corpus, CorpusEntry};
use hiergrounding::eval::{cross_level_matrix, kfold_cv, timing_harness};
use hiergrounding::grounder::{Grounder, ModelKind};
use hiergrounding::grounding::RewardSpace;
use hiergrounding::planners::PlannerKind;
use hiergrounding::session::Session;
use hiergrounding::world::{bundled, BundledEnv, GridEnv};

use crate::api::{router, AppState};

#[derive(Debug, Parser)]
#[command(name = "hiergrounding", version, about = "Ground robot commands and plan them in Cleanup World")]
pub struct Cli {
    /// TOML run configuration; defaults apply to anything missing.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalMode {
    Cv,
    CrossLevel,
    Timing,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic command corpus as JSON Lines.
    Gen {
        /// Environment file or bundled name (small, regular, large).
        #[arg(long, default_value = "regular")]
        env: String,
        /// Commands per reward function.
        #[arg(long, default_value_t = 22)]
        n: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a grounding model and write it as JSON.
    Train {
        #[arg(long)]
        model: ModelKind,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Environment whose reward functions the model chooses among.
        #[arg(long, default_value = "regular")]
        env: String,
    },
    /// Run an evaluation and write JSON and CSV reports.
    Eval {
        #[arg(long, value_enum)]
        mode: EvalMode,
        /// Model kind; every kind (cv), ibm2 and single-rnn (cross-level)
        /// or single-rnn (timing) when absent.
        #[arg(long)]
        model: Option<ModelKind>,
        /// Trained model for timing runs.
        #[arg(long)]
        model_file: Option<PathBuf>,
        /// Corpus file; generated from the environment when absent.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value = "regular")]
        env: String,
        #[arg(long, default_value = "reports")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Ground one command, plan it and print the trace.
    Plan {
        #[arg(long, default_value = "regular")]
        env: String,
        #[arg(long)]
        command: String,
        #[arg(long, default_value = "amdp")]
        planner: PlannerKind,
        /// Trained model; IBM2 is trained on the synthetic corpus when absent.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Print the outcome as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Serve the /v1 HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "regular")]
        env: String,
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

/// A bundled environment name or a path to an environment file.
pub fn load_env(name_or_path: &str) -> Result<GridEnv> {
    if let Ok(b) = name_or_path.parse::<BundledEnv>() {
        return Ok(bundled(b));
    }
    GridEnv::load(name_or_path).with_context(|| format!("loading environment {name_or_path}"))
}

/// IBM2 trained on the configured synthetic corpus of `env`; fast enough
/// to build on every start.
pub fn default_grounder(env: &GridEnv, cfg: &Config) -> Result<Grounder> {
    let corpus = gen_synthetic_corpus(env, cfg.corpus.n_per_task, cfg.corpus.seed)?;
    Ok(Grounder::train(ModelKind::Ibm2, &corpus, &RewardSpace::from_env(env), &cfg.train, cfg.seed)?)
}

fn load_grounder(path: Option<&Path>, env: &GridEnv, cfg: &Config) -> Result<Grounder> {
    match path {
        Some(p) => Grounder::load(p, &RewardSpace::from_env(env)).with_context(|| format!("loading model {}", p.display())),
        None => default_grounder(env, cfg),
    }
}

fn corpus_for(path: Option<&Path>, env: &GridEnv, cfg: &Config) -> Result<Vec<CorpusEntry>> {
    match path {
        Some(p) => load_corpus(p).with_context(|| format!("loading corpus {}", p.display())),
        None => Ok(gen_synthetic_corpus(env, cfg.corpus.n_per_task, cfg.corpus.seed)?),
    }
}

fn write_report(dir: &Path, name: &str, json: String, csv: &[(&str, String)]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(format!("{name}.json")), json)?;
    for (suffix, text) in csv {
        std::fs::write(dir.join(format!("{name}{suffix}.csv")), text)?;
    }
    println!("wrote {}", dir.join(format!("{name}.json")).display());
    Ok(())
}

pub fn execute(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => Config::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => Config::default(),
    };
    match cli.command {
        Command::Gen { env, n, seed, out } => {
            if n == 0 {
                bail!("--n must be at least 1");
            }
            let corpus = gen_synthetic_corpus(&load_env(&env)?, n, seed)?;
            match out {
                Some(path) => save_corpus(&path, &corpus)?,
                None => write_corpus(std::io::stdout().lock(), &corpus)?,
            }
        }
        Command::Train { model, corpus, out, seed, env } => {
            let env = load_env(&env)?;
            let corpus = load_corpus(&corpus).with_context(|| format!("loading corpus {}", corpus.display()))?;
            let g = Grounder::train(model, &corpus, &RewardSpace::from_env(&env), &cfg.train, seed)?;
            g.save(&out)?;
            println!("trained {model} on {} commands, wrote {}", corpus.len(), out.display());
        }
        Command::Eval { mode, model, model_file, corpus, env, out, seed } => {
            let env = load_env(&env)?;
            let space = RewardSpace::from_env(&env);
            let corpus = corpus_for(corpus.as_deref(), &env, &cfg)?;
            let seed = seed.unwrap_or(cfg.seed);
            match mode {
                EvalMode::Cv => {
                    let kinds = model.map_or(ModelKind::ALL.to_vec(), |k| vec![k]);
                    for kind in kinds {
                        let r = kfold_cv(&corpus, &space, kind, &cfg.train, cfg.eval.folds, seed)?;
                        println!("{kind}: level {:.4} reward {:.4}", r.level_accuracy, r.reward_accuracy);
                        write_report(&out, &format!("cv_{kind}"), serde_json::to_string_pretty(&r)?, &[("", r.to_csv())])?;
                    }
                }
                EvalMode::CrossLevel => {
                    let kinds = model.map_or(vec![ModelKind::Ibm2, ModelKind::SingleRnn], |k| vec![k]);
                    for kind in kinds {
                        let e = &cfg.eval;
                        let m = cross_level_matrix(&corpus, &space, kind, &cfg.train, e.cross_level_trials, e.cross_level_holdout, seed)?;
                        print!("{}", m.to_csv());
                        write_report(&out, &format!("cross_level_{kind}"), serde_json::to_string_pretty(&m)?, &[("", m.to_csv())])?;
                    }
                }
                EvalMode::Timing => {
                    let g = match model_file {
                        Some(p) => Grounder::load(&p, &space)?,
                        None => Grounder::train(model.unwrap_or(ModelKind::SingleRnn), &corpus, &space, &cfg.train, seed)?,
                    };
                    let mut commands: Vec<CorpusEntry> =
                        corpus.into_iter().filter(|e| e.reward.predicate.direction().is_none()).collect();
                    if let Some(cap) = cfg.eval.timing_max_commands {
                        commands.truncate(cap);
                    }
                    let r = timing_harness(&g, &commands, &env, &cfg.planner, cfg.eval.timing_repeats)?;
                    print!("{}", r.quartiles_csv());
                    let csv = [("", r.to_csv()), ("_quartiles", r.quartiles_csv())];
                    write_report(&out, "timing", serde_json::to_string_pretty(&r)?, &csv)?;
                }
            }
        }
        Command::Plan { env, command, planner, model, json } => {
            let env = load_env(&env)?;
            let grounder = load_grounder(model.as_deref(), &env, &cfg)?;
            let mut session = Session::new(env);
            let outcome = session.command(&grounder, &command, planner, &cfg.planner)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&outcome)?);
            } else {
                let steps: Vec<&str> = outcome.plan_steps.iter().map(|d| d.name()).collect();
                println!("command:   {}", outcome.command);
                println!("level:     L{}", outcome.level);
                println!("lifted:    {}", outcome.lifted);
                println!("grounded:  {}", outcome.grounded);
                println!("planner:   {planner}");
                println!("steps ({}): {}", steps.len(), steps.join(" "));
                println!("time:      {:.2} ms", outcome.planning_ms);
                println!("satisfied: {}", outcome.satisfied);
                if outcome.low_confidence {
                    println!("warning:   low-confidence grounding");
                }
                println!("\n{}", session.env().render());
            }
        }
        Command::Serve { port, env, model } => {
            let env = load_env(&env)?;
            let grounder = load_grounder(model.as_deref(), &env, &cfg)?;
            let state = Arc::new(AppState::new(env, grounder, cfg.planner.clone()));
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
                log::info!("listening on {}", listener.local_addr()?);
                axum::serve(listener, router(state)).await
            })?;
        }
    }
    Ok(())
}

/// Parses arguments and runs. Usage errors exit with status 2, failures
/// with status 1.
pub fn run() -> ExitCode {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
