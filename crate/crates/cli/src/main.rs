//! `fracmono` — batch driver for the fractional-conductivity toolbox.
//!
//! Every command runs standalone from a single TOML config and writes
//! `metrics.json`, CSV curves/matrices, and `provenance.json` into the
//! output directory. Exit codes: 0 success, 1 configuration/validation
//! error, 2 numerical failure.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;
use fracmono_core::CoreError;
use output::{default_out_dir, write_provenance, Provenance};

#[derive(Parser)]
#[command(
    name = "fracmono",
    version,
    about = "Fractional conductivity operators, DN maps, monotonicity tests, and reconstruction on truncated grids",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Path to the TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: out-<scenario>-<command>).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Random seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker-thread count (overrides FRACMONO_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Solve the exterior problem and dump the solution field.
    Forward,
    /// Assemble and dump the Dirichlet-to-Neumann matrix.
    Dnmap,
    /// Trace-vs-spectral consistency report with a refinement trend.
    ExtensionCheck,
    /// Sandwich-inequality and Loewner-order battery.
    MonoTest,
    /// Localized-potential sequence with its energy table.
    Localize,
    /// Cutoff-profile properties and the Runge residual curve.
    Runge,
    /// Pixel-wise inclusion reconstruction map.
    Reconstruct,
    /// Local-uniqueness contrapositive probe.
    Uniqueness,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Forward => "forward",
            Command::Dnmap => "dnmap",
            Command::ExtensionCheck => "extension-check",
            Command::MonoTest => "mono-test",
            Command::Localize => "localize",
            Command::Runge => "runge",
            Command::Reconstruct => "reconstruct",
            Command::Uniqueness => "uniqueness",
        }
    }
}

fn is_numerical(err: &anyhow::Error) -> bool {
    match err.downcast_ref::<CoreError>() {
        Some(
            CoreError::Eigensolver(_)
            | CoreError::LinearSolver(_)
            | CoreError::QuadratureRange(_)
            | CoreError::RootSolve(_),
        ) => true,
        Some(_) => false,
        None => false,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let threads = cli.threads.or_else(|| {
        std::env::var("FRACMONO_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build_global()
            .ok();
    }
    let config_path = cli
        .config
        .ok_or_else(|| anyhow::anyhow!("--config <path> is required"))?;
    let (mut cfg, config_hash) = RunConfig::load(&config_path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let resolved = cfg.resolve()?;
    let command = cli.command;
    let bundle = match command {
        Command::Forward => commands::forward(&cfg, &resolved)?,
        Command::Dnmap => commands::dnmap(&cfg, &resolved)?,
        Command::ExtensionCheck => commands::extension_check(&cfg, &resolved)?,
        Command::MonoTest => commands::mono_test(&cfg, &resolved)?,
        Command::Localize => commands::localize(&cfg, &resolved)?,
        Command::Runge => commands::runge(&cfg, &resolved)?,
        Command::Reconstruct => commands::reconstruct(&cfg, &resolved)?,
        Command::Uniqueness => commands::uniqueness(&cfg, &resolved)?,
    };
    let out_dir = cli
        .out
        .or_else(|| cfg.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| default_out_dir(&cfg.scenario, command.name()));
    bundle.write(&out_dir)?;
    write_provenance(
        &out_dir,
        &Provenance {
            config_hash: format!("{config_hash:016x}"),
            seed: cfg.seed,
            command: command.name().to_string(),
            scenario: cfg.scenario.clone(),
            package_version: env!("CARGO_PKG_VERSION").to_string(),
            threads: rayon::current_num_threads(),
        },
    )?;
    println!(
        "{}: wrote {} metrics, {} curves, {} matrices to {}",
        command.name(),
        bundle.metrics.len(),
        bundle.curves.len(),
        bundle.matrices.len(),
        out_dir.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // usage text on stderr, validation exit code
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_numerical(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
