use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ddi_gfn::pipeline::{write_fixture, FixtureParams, Pipeline, RunManifest};
use ddi_gfn::Error;
use log::info;

/// Rebalance a drug-drug interaction dataset with a generative flow
/// network over autoencoder embeddings.
#[derive(Parser, Debug)]
#[command(name = "ddi-gfn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Pipeline config (TOML). Relative paths inside it resolve against its directory.
    #[arg(long, short)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Stage 1: train the autoencoder on the training split.
    Pretrain(RunArgs),
    /// Stage 2: train the flow network against the stage-1 model.
    TrainGfn(RunArgs),
    /// Stage 3: sample, merge, retrain, then evaluate.
    AugmentRetrain(RunArgs),
    /// Score the stage-1 and stage-3 models and rewrite the reports.
    Evaluate(RunArgs),
    /// All stages in order.
    RunAll(RunArgs),
    /// Write a synthetic imbalanced dataset with a ready-to-run config.
    MakeFixture(FixtureArgs),
}

/// Unset options take the library defaults (50 drugs, 8 types, 2000
/// edges, ratio 0.5, 5 clusters, p_home 0.8).
#[derive(Args, Debug)]
struct FixtureArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    drugs: Option<usize>,
    #[arg(long)]
    types: Option<usize>,
    #[arg(long)]
    edges: Option<usize>,
    /// Size ratio between consecutive types.
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    clusters: Option<usize>,
    /// Share of each type's edges placed inside its home cluster.
    #[arg(long)]
    p_home: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::MissingPrerequisite(_) => 3,
        Error::Diverged { .. } => 4,
        Error::Parse { .. } | Error::Validation(_) | Error::Config(_) | Error::Io { .. } | Error::Contract(_) => 2,
    }
}

fn pipeline(a: RunArgs) -> Result<Pipeline, Error> {
    Pipeline::load(&a.config, a.seed, a.out)
}

fn report(p: &Pipeline, m: &RunManifest) {
    for (stage, rec) in &m.stages {
        info!("{stage}: {:.2}s, {} artifacts", rec.seconds, rec.artifacts.len());
    }
    println!("wrote {}", p.out_dir().display());
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Pretrain(a) => {
            let p = pipeline(a)?;
            report(&p, &p.pretrain()?);
        }
        Command::TrainGfn(a) => {
            let p = pipeline(a)?;
            report(&p, &p.train_gfn()?);
        }
        Command::AugmentRetrain(a) => {
            let p = pipeline(a)?;
            let (m, eval) = p.augment_retrain()?;
            print!("{}", eval.summary());
            report(&p, &m);
        }
        Command::Evaluate(a) => {
            let p = pipeline(a)?;
            let (m, eval) = p.evaluate()?;
            print!("{}", eval.summary());
            report(&p, &m);
        }
        Command::RunAll(a) => {
            let p = pipeline(a)?;
            let (m, eval) = p.run_all()?;
            print!("{}", eval.summary());
            report(&p, &m);
        }
        Command::MakeFixture(a) => {
            let d = FixtureParams::default();
            let params = FixtureParams {
                num_drugs: a.drugs.unwrap_or(d.num_drugs),
                num_types: a.types.unwrap_or(d.num_types),
                num_edges: a.edges.unwrap_or(d.num_edges),
                ratio: a.ratio.unwrap_or(d.ratio),
                num_clusters: a.clusters.unwrap_or(d.num_clusters),
                p_home: a.p_home.unwrap_or(d.p_home),
                seed: a.seed,
                ..d
            };
            for path in write_fixture(&params, &a.out)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
