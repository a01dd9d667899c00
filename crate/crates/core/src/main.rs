use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use collective_sim::corpus::{generate_synthetic, load_mpd_slices, save_canonical, SyntheticConfig};
use collective_sim::recommender::RecommenderConfig;
use collective_sim::runner::{emit_reports, run_experiment, ExperimentConfig};
use collective_sim::strategy::{StrategyConfig, StrategyKind};
use collective_sim::Error;

#[derive(Parser)]
#[command(version, about = "Collective action against playlist-continuation recommenders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum RecommenderKind {
    Oracle,
    Neural,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus in canonical format.
    Generate {
        /// Synthetic corpus config (TOML or JSON); defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Convert MPD slice files to canonical format.
    Ingest {
        #[arg(required = true)]
        slices: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Replace the configured recommenders with one default model.
        #[arg(long, value_enum)]
        recommender: Option<RecommenderKind>,
        /// Replace the configured strategies, e.g. `dirlof`, `insert@0`, `hybrid10`.
        #[arg(long)]
        strategy: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        alpha: Option<Vec<f64>>,
    },
    /// Re-emit CSV reports from a finished run directory.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_synthetic(path: &PathBuf) -> Result<SyntheticConfig, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Generate { config, out, seed } => {
            let mut cfg = match &config {
                Some(p) => read_synthetic(p)?,
                None => SyntheticConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let corpus = generate_synthetic(&cfg)?;
            save_canonical(&corpus, &out)?;
            println!(
                "wrote {} playlists over {} songs to {}",
                corpus.n(),
                corpus.catalog.len(),
                out.display()
            );
        }
        Command::Ingest { slices, out } => {
            let load = load_mpd_slices(&slices)?;
            save_canonical(&load.corpus, &out)?;
            println!(
                "wrote {} playlists ({} duplicate tracks dropped) to {}",
                load.corpus.n(),
                load.duplicates_dropped,
                out.display()
            );
        }
        Command::Run {
            config,
            out,
            folds,
            seed,
            recommender,
            strategy,
            alpha,
        } => {
            let mut cfg = ExperimentConfig::load(&config).map_err(|e| match e {
                Error::Config(_) => e,
                other => Error::Config(other.to_string()),
            })?;
            if let Some(o) = out {
                cfg.out_dir = Some(o);
            }
            if let Some(f) = folds {
                cfg.folds = f;
            }
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            if let Some(r) = recommender {
                cfg.recommenders = vec![match r {
                    RecommenderKind::Oracle => RecommenderConfig::Oracle(Default::default()),
                    RecommenderKind::Neural => RecommenderConfig::Neural(Default::default()),
                }];
            }
            if !strategy.is_empty() {
                cfg.strategies = strategy
                    .iter()
                    .map(|s| s.parse::<StrategyKind>().map(StrategyConfig::new))
                    .collect::<Result<_, _>>()?;
            }
            if let Some(a) = alpha {
                cfg.alphas = a;
            }
            if cfg.out_dir.is_none() {
                return Err(Error::Config("no output directory: pass --out or set out_dir".into()));
            }
            cfg.validate()?;
            let run = run_experiment(&cfg)?;
            for rec in &run.report.recommenders {
                for a in &rec.amplification {
                    println!(
                        "{} {} alpha={} S={:.5} Amp={:.3} [{:.3}, {:.3}]",
                        rec.label, a.strategy, a.alpha, a.s_alpha, a.amp, a.ci.low, a.ci.high
                    );
                }
            }
        }
        Command::Report { out } => {
            for f in emit_reports(&out)? {
                println!("{}", out.join(f).display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}
