use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vcpanel_cli::config::ModelKind;
use vcpanel_cli::{cmd_fit, cmd_select, cmd_simulate, CliResult, RunOverrides, SimOverrides};

/// Varying-coefficient panel models with interactive fixed effects.
#[derive(Parser)]
#[command(name = "vcpanel", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model and write summary.json and curves.csv.
    Fit(RunArgs),
    /// Select knots and/or the factor count and write selection.json.
    Select(RunArgs),
    /// Run a Monte Carlo study and write mc_table.csv and mc_report.json.
    Simulate(SimArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Long-format CSV with one row per (subject, time).
    #[arg(long)]
    data: PathBuf,
    /// TOML run configuration; flags below override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum)]
    model: Option<Model>,
    /// Fixed number of factors.
    #[arg(long, conflicts_with = "r_max")]
    r: Option<usize>,
    /// Select the number of factors by BIC over 0..=R_MAX.
    #[arg(long)]
    r_max: Option<usize>,
    /// Fixed number of interior knots.
    #[arg(long, conflicts_with = "knot_grid")]
    knots: Option<usize>,
    /// Cross-validate the interior knot count over this list.
    #[arg(long, value_delimiter = ',')]
    knot_grid: Option<Vec<usize>>,
    #[arg(long)]
    degree: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Points on the output grid.
    #[arg(long)]
    grid_size: Option<usize>,
    /// Bootstrap draws (enables bands).
    #[arg(long)]
    bootstrap_draws: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    block_constant: Option<f64>,
    /// Disable the bootstrap even if the config enables it.
    #[arg(long)]
    no_bootstrap: bool,
    /// Worker threads (default: config, then VCPANEL_THREADS, then all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Model {
    Ife,
    Lsdv,
}

#[derive(Args)]
struct SimArgs {
    /// TOML file with a [simulation] table.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
}

impl RunArgs {
    fn overrides(&self) -> RunOverrides {
        RunOverrides {
            model: self.model.map(|m| match m {
                Model::Ife => ModelKind::Ife,
                Model::Lsdv => ModelKind::Lsdv,
            }),
            r: self.r,
            r_max: self.r_max,
            interior_knots: self.knots,
            knot_grid: self.knot_grid.clone(),
            degree: self.degree,
            seed: self.seed,
            grid_size: self.grid_size,
            bootstrap_draws: self.bootstrap_draws,
            alpha: self.alpha,
            block_constant: self.block_constant,
            no_bootstrap: self.no_bootstrap,
            threads: self.threads,
        }
    }
}

fn run(cli: Cli) -> CliResult<Vec<PathBuf>> {
    match cli.command {
        Command::Fit(a) => cmd_fit(a.config.as_deref(), &a.data, &a.out, &a.overrides()),
        Command::Select(a) => cmd_select(a.config.as_deref(), &a.data, &a.out, &a.overrides()),
        Command::Simulate(a) => cmd_simulate(
            &a.spec,
            &a.out,
            &SimOverrides {
                replications: a.replications,
                seed: a.seed,
                threads: a.threads,
            },
        ),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
