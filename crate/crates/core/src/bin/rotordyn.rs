use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use rotordyn::runner::{self, default_out_dir, parse_config_with, run_scenario, Scenario};
use rotordyn::{Error, Result};

/// Rotational dynamics of a non-polar diatomic molecule in a far-detuned
/// laser field.
#[derive(Debug, Parser)]
#[command(name = "rotordyn", version, after_help = AFTER_HELP)]
struct Cli {
    /// classical, spectrum, evolve-unitary, evolve-master, evolve-trajectory
    /// or wigner-snapshots.
    #[arg(value_parser = |s: &str| s.parse::<Scenario>())]
    scenario: Scenario,

    /// Configuration document (`key = value` lines).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,

    /// Built-in configuration: fig4, fig5, fig8, fig9, fig15, wigner-coh,
    /// wigner-sup, purity, populations.
    #[arg(long)]
    preset: Option<String>,

    /// Output prefix, relative to $ROTORDYN_OUT_DIR (default `.`).
    #[arg(long)]
    out: Option<String>,

    /// Random seed for evolve-trajectory.
    #[arg(long)]
    seed: Option<u64>,

    /// Override one key; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Print the resolved configuration and exit.
    #[arg(long)]
    dry_run: bool,
}

const AFTER_HELP: &str = "Exit codes: 0 ok, 2 parse error, 3 convergence or truncation, \
4 numerical error, 5 I/O error.";

fn run(cli: Cli) -> Result<()> {
    let text = match (&cli.config, &cli.preset) {
        (Some(path), _) => std::fs::read_to_string(path)?,
        (None, Some(name)) => runner::preset(name)
            .ok_or_else(|| Error::Parse {
                line: 0,
                msg: format!("unknown preset `{name}`"),
            })?
            .to_string(),
        (None, None) => String::new(),
    };
    let mut overrides = cli.set.clone();
    if let Some(out) = &cli.out {
        overrides.push(format!("out={out}"));
    }
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    let cfg = parse_config_with(&text, Some(cli.scenario), &overrides)?;
    if cli.dry_run {
        print!("{}", cfg.to_document());
        return Ok(());
    }
    for path in run_scenario(&cfg, &default_out_dir())? {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rotordyn: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
