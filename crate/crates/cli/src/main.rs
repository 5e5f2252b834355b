use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rgi_cli::commands::{self, Method};
use rgi_cli::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "rgi",
    version,
    about = "Robust generator inversion experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// key = value configuration file
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (overrides `out` in the config)
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Master seed (overrides `seed` in the config)
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Larger sample counts (100 per level) for `simulate`
    #[arg(long)]
    full: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolveMethod {
    Baseline,
    Rgi,
    Rrgi,
}

#[derive(Subcommand)]
enum Command {
    /// Build a generator and a corrupted sample with ground truth
    MakeFixture(Common),
    /// Fit a decoder to samples of the configured generator
    TrainDecoder(Common),
    /// Invert one image
    Solve {
        method: SolveMethod,
        #[command(flatten)]
        common: Common,
    },
    /// RGI over a decreasing λ list
    Sweep(Common),
    /// Latent and mask recovery checks; exit status 0 iff both pass
    Verify(Common),
    /// RMSE versus corruption level for the l2 / l1 baselines and RGI
    Simulate(Common),
    /// Metrics between image / mask files
    Metrics(Common),
}

fn setup(c: &Common) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if c.full {
        cfg.samples = 100;
    }
    if let Some(o) = &c.out {
        cfg.out = Some(o.clone());
    }
    let out = cfg
        .out
        .clone()
        .context("no output directory: pass --out DIR or set `out`")?;
    Ok((cfg, out))
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::MakeFixture(c) => {
            let (cfg, out) = setup(&c)?;
            commands::make_fixture(&cfg, &out)?;
        }
        Command::TrainDecoder(c) => {
            let (cfg, out) = setup(&c)?;
            commands::train_decoder(&cfg, &out)?;
        }
        Command::Solve { method, common } => {
            let (cfg, out) = setup(&common)?;
            let method = match method {
                SolveMethod::Baseline => Method::Baseline,
                SolveMethod::Rgi => Method::Rgi,
                SolveMethod::Rrgi => Method::Rrgi,
            };
            let r = commands::solve(&cfg, method, &out)?;
            println!(
                "{}: final objective {:.6e}",
                method.name(),
                r.final_objective
            );
        }
        Command::Sweep(c) => {
            let (cfg, out) = setup(&c)?;
            let points = commands::sweep(&cfg, &out)?;
            for p in points {
                println!(
                    "lambda {:>10}: objective {:.6e} dice {:?}",
                    p.lambda, p.metrics.objective, p.metrics.dice
                );
            }
        }
        Command::Verify(c) => {
            let (cfg, out) = setup(&c)?;
            let v = commands::verify(&cfg, &out)?;
            print!("{}\n{}", v.latent.to_table(), v.mask.to_table());
            return Ok(v.pass());
        }
        Command::Simulate(c) => {
            let (cfg, out) = setup(&c)?;
            for (e, m, v) in commands::simulate(&cfg, &out)? {
                println!("e {e:>5}: {m:<3} rmse {v:.6}");
            }
        }
        Command::Metrics(c) => {
            let (cfg, out) = setup(&c)?;
            for (m, v) in commands::metrics_cmd(&cfg, &out)? {
                println!("{m} {v:.9}");
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
