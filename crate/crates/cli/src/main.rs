//! `equikoop` command-line tool.
//!
//! Exit codes: 0 success, 1 check failure, 2 configuration or parse error,
//! 3 numerical divergence.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use equikoop::dictionary::DictionarySpec;
use equikoop::Error;

use config::{parse_dictionary, parse_key_value, parse_vector, RunConfig};

#[derive(Parser)]
#[command(name = "equikoop", version, about = "Koopman operators for equivariant dynamical systems")]
struct Cli {
    /// JSON run configuration; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    common: CommonArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Built-in system: lorenz, toggle_switch, hamiltonian.
    #[arg(long, global = true)]
    system: Option<String>,
    /// System parameter override, KEY=VALUE (repeatable).
    #[arg(long = "param", global = true, value_parser = parse_key_value)]
    params: Vec<(String, f64)>,
    #[arg(long, global = true)]
    dt: Option<f64>,
    #[arg(long = "steps", global = true)]
    n_steps: Option<usize>,
    #[arg(long, global = true)]
    discard: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// identity | monomial:D[:noconst] | JSON spec.
    #[arg(long, global = true, value_parser = parse_dictionary)]
    dictionary: Option<DictionarySpec>,
    /// Group file: {"dim": n, "generators": [{"label", "matrix"}]}.
    #[arg(long, global = true)]
    group: Option<PathBuf>,
    /// Registry file: {"labels", "base", "mapping"}.
    #[arg(long, global = true)]
    registry: Option<PathBuf>,
    #[arg(long, global = true)]
    rank_tol: Option<f64>,
    /// Tolerance override, NAME=VALUE (repeatable).
    #[arg(long = "tol", global = true, value_parser = parse_key_value)]
    tolerances: Vec<(String, f64)>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a system and write trajectory CSVs.
    Simulate {
        /// Initial state, comma separated (repeatable).
        #[arg(long = "x0", value_parser = parse_vector, allow_hyphen_values = true)]
        x0: Vec<Vec<f64>>,
        /// Number of seeded initial states when no --x0 is given.
        #[arg(long)]
        count: Option<usize>,
        /// Also write all trajectories and their group images to one CSV.
        #[arg(long)]
        emit_phase_portrait: bool,
    },
    /// Fit an EDMD operator to a trajectory CSV.
    Fit {
        trajectory: PathBuf,
        #[arg(long)]
        label: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Conjugate an operator onto the image set of a group element.
    Transport {
        #[arg(long)]
        operator: PathBuf,
        #[arg(long)]
        element: String,
        #[arg(long)]
        label: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the block-diagonal global operator from a registry.
    Assemble {
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the verification suite on a built-in scenario.
    Verify {
        /// Comma-separated check names; an empty string runs none.
        #[arg(long)]
        checks: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Group utilities.
    Group {
        #[command(subcommand)]
        command: GroupCommand,
    },
    /// Eigenvalues and left eigenvectors of an operator.
    Spectrum {
        #[arg(long)]
        operator: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum GroupCommand {
    /// Generate the group, verify axioms, and optionally equivariance of --system.
    Check {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn flags_config(common: CommonArgs) -> equikoop::Result<RunConfig> {
    let mut cfg = RunConfig {
        system: common.system,
        params: common.params.into_iter().collect(),
        dt: common.dt,
        n_steps: common.n_steps,
        discard: common.discard,
        seed: common.seed,
        dictionary: common.dictionary,
        group: common.group,
        registry: common.registry,
        rank_tol: common.rank_tol,
        output_dir: common.output_dir,
        ..Default::default()
    };
    for (k, v) in common.tolerances {
        cfg.tolerances.set(&k, v)?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> equikoop::Result<ExitCode> {
    let file = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut cfg = file.merged(&flags_config(cli.common)?);
    cfg.check_paths()?;
    match cli.command {
        Command::Simulate {
            x0,
            count,
            emit_phase_portrait,
        } => {
            if !x0.is_empty() {
                cfg.x0 = x0;
            }
            cfg.count = count.or(cfg.count);
            commands::simulate(&cfg, emit_phase_portrait)
        }
        Command::Fit { trajectory, label, out } => commands::fit(&cfg, &trajectory, label, out),
        Command::Transport {
            operator,
            element,
            label,
            out,
        } => commands::transport(&cfg, &operator, &element, label, out),
        Command::Assemble { base, out } => commands::assemble(&cfg, &base, out),
        Command::Verify { checks, out } => {
            if let Some(list) = checks {
                cfg.checks = Some(
                    list.split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(str::to_string)
                        .collect(),
                );
            }
            commands::verify(&cfg, out)
        }
        Command::Group {
            command: GroupCommand::Check { out },
        } => commands::group_check(&cfg, out),
        Command::Spectrum { operator, out } => commands::spectrum(&cfg, &operator, out),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Divergence { .. } | Error::Numerical(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
