mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use blhedge_core::error::Error;
use clap::{Parser, Subcommand};

use config::{PriceMethod, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "blhedge", version, about = "Payoff pricing, density recovery and static hedging from call prices")]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `mc.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: logical cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write the primary output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print the resolved configuration and exit.
    #[arg(long, global = true)]
    dump_config: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Price the configured payoff under the configured measure.
    Price {
        #[arg(long, value_enum)]
        method: Option<PriceMethod>,
        /// Price even when the membership probe fails.
        #[arg(long)]
        force: bool,
    },
    /// Recover a state-price density from a call surface CSV.
    Density {
        #[arg(long)]
        surface: Option<PathBuf>,
    },
    /// Build a static hedge portfolio and its replication report.
    Hedge,
    /// Run identity checks and print one JSON report per line.
    Verify {
        /// thm21, thm22, thm23, prop_fA, parisian, thmAB or rectangle; repeatable.
        #[arg(long)]
        identity: Vec<String>,
    },
    /// Mollifier convergence study over a decreasing ε sequence.
    Mollify,
}

/// Exit codes.
const EXIT_FAILED: u8 = 1;
const EXIT_MEMBERSHIP: u8 = 2;
const EXIT_CONFIG: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Membership(_) => EXIT_MEMBERSHIP,
        Error::Divergent { .. } | Error::NonFinitePayoff { .. } => EXIT_FAILED,
        _ => EXIT_CONFIG,
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.mc.seed = s;
    }
    match &cli.command {
        Command::Price { method, force } => {
            if let Some(m) = method {
                cfg.price.method = *m;
            }
            cfg.price.force |= *force;
        }
        Command::Density { surface: Some(s) } => match &mut cfg.density {
            Some(d) => d.surface = s.clone(),
            None => cfg.density = Some(config::DensityOptions { surface: s.clone(), kind: None }),
        },
        Command::Verify { identity } if !identity.is_empty() => {
            cfg.verify.identities = identity.iter().map(|s| config::Identity::parse(s)).collect::<Result<_, _>>()?;
        }
        _ => {}
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BLHEDGE_LOG", "warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    let cfg = match resolve(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if cli.dump_config {
        let text = serde_json::to_string_pretty(&cfg).expect("config serializes");
        return match commands::Output::new(cli.out.clone()).primary(format!("{text}\n")).flush() {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_CONFIG)
            }
        };
    }
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: cannot build thread pool: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    let out = commands::Output::new(cli.out.clone());
    let run = match &cli.command {
        Command::Price { .. } => commands::price(&cfg, out),
        Command::Density { .. } => commands::density(&cfg, out),
        Command::Hedge => commands::hedge(&cfg, out),
        Command::Verify { .. } => commands::verify(&cfg, out),
        Command::Mollify => commands::mollify(&cfg, out),
    };
    match run.and_then(|(out, ok)| out.flush().map(|_| ok)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAILED),
        Err(e) => {
            let _ = std::io::stdout().flush();
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
