//! `volterra-stealth` — simulate, check, and sweep false-data injections
//! against linear time-varying feedback loops with integrator chains.
//!
//! Exit codes are a stable contract: 0 success, 1 condition-check failure,
//! 2 usage/config error, 3 numerical error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod plot;

use commands::CommonOpts;

#[derive(Parser)]
#[command(
    name = "volterra-stealth",
    version,
    about = "Stealth analysis of false-data injections on LTV feedback loops",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate the attacked loop; write trajectories.csv and verdict.json
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Also write one SVG line plot per signal
        #[arg(long)]
        plots: bool,
    },
    /// Machine-check the boundedness and decay conditions on the loop kernels
    Check {
        #[command(flatten)]
        common: CommonArgs,
        /// Check |G| instead of G (pass is sufficient; fail is inconclusive)
        #[arg(long)]
        abs: bool,
    },
    /// Sweep attack parameters; write sweep.csv and a stealth-class summary
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Attack degrees, comma/range list (e.g. "0..3" or "0,2"); default:
        /// the config's degree
        #[arg(long = "a-list", value_name = "LIST")]
        a_list: Option<String>,
        /// Attack weights, comma list (e.g. "0.5,1,2"); default: the
        /// config's weight
        #[arg(long = "h-list", value_name = "LIST")]
        h_list: Option<String>,
        /// Chain lengths, comma/range list; default: the config's q
        #[arg(long = "q-list", value_name = "LIST")]
        q_list: Option<String>,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// Path to a system-config JSON file
    #[arg(long, value_name = "PATH", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in example loop: ex1 (positive kernel) or ex2 (negative kernel)
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// Directory for generated files
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// Override the grid step
    #[arg(long, value_name = "X")]
    dt: Option<f64>,
    /// Override the horizon
    #[arg(long = "t-end", value_name = "X")]
    t_end: Option<f64>,
    /// Override the attack degree a (injection h·t^a/a!)
    #[arg(long = "attack-degree", value_name = "N")]
    attack_degree: Option<u32>,
    /// Override the attack weight h
    #[arg(long = "attack-weight", value_name = "H")]
    attack_weight: Option<f64>,
    /// Stealth threshold ε (default: the preset's ε, else 1)
    #[arg(long, value_name = "E", allow_hyphen_values = true)]
    epsilon: Option<f64>,
}

impl From<CommonArgs> for CommonOpts {
    fn from(a: CommonArgs) -> Self {
        CommonOpts {
            config: a.config,
            preset: a.preset,
            out: a.out,
            dt: a.dt,
            t_end: a.t_end,
            attack_degree: a.attack_degree,
            attack_weight: a.attack_weight,
            epsilon: a.epsilon,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Simulate { common, plots } => commands::cmd_simulate(&common.into(), plots),
        Cmd::Check { common, abs } => commands::cmd_check(&common.into(), abs),
        Cmd::Sweep { common, a_list, h_list, q_list } => commands::cmd_sweep(
            &common.into(),
            a_list.as_deref(),
            h_list.as_deref(),
            q_list.as_deref(),
        ),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            eprintln!("error: {}", failure.msg);
            ExitCode::from(failure.code)
        }
    }
}
