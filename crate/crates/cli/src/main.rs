use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bulksurf_cli::commands::{self, Axis};
use bulksurf_cli::config::{parse_config, MeshSpec, RunConfig};
use bulksurf_cli::selftest;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bulksurf", version, about = "Bulk-surface Cahn-Hilliard experiments on the unit disk")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate, run and write diagnostics.csv and checkpoints.txt.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Fail with exit code 2 when the step size violates the guard.
        #[arg(long)]
        strict_guard: bool,
        /// Overrides the output directory of the configuration.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a ladder of step sizes, regularisations or viscosities.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        axis: Axis,
        /// Comma-separated, strictly decreasing.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        ladder: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        strict_guard: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare two runs that differ in initial data or sources.
    Contdep {
        /// Give exactly two configurations.
        #[arg(long, num_args = 2, required = true)]
        config: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the invariant suite on tiny meshes.
    Selftest {
        #[arg(long, hide = true)]
        mesh_file: Option<PathBuf>,
    },
    /// Print mesh statistics.
    MeshInfo {
        #[arg(long, conflicts_with_all = ["rings", "sectors"])]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 40)]
        rings: usize,
        #[arg(long, default_value_t = 160)]
        sectors: usize,
        #[arg(long)]
        mesh_file: Option<PathBuf>,
        /// Also write the mesh in text format to this file.
        #[arg(long)]
        write: Option<PathBuf>,
    },
}

fn load(path: &Path, strict: bool) -> Result<RunConfig, i32> {
    match parse_config(path) {
        Ok(mut cfg) => {
            cfg.strict_guard |= strict;
            Ok(cfg)
        }
        Err(e) => {
            eprintln!("error: {e}");
            Err(commands::CliError::from(e).exit_code())
        }
    }
}

fn dispatch(cli: Cli) -> i32 {
    match cli.command {
        Command::Run { config, strict_guard, out } => match load(&config, strict_guard) {
            Ok(cfg) => {
                let out = out.unwrap_or_else(|| cfg.out.clone());
                commands::cmd_run(&cfg, &out)
            }
            Err(code) => code,
        },
        Command::Sweep { config, axis, ladder, workers, strict_guard, out } => match load(&config, strict_guard) {
            Ok(cfg) => {
                let out = out.unwrap_or_else(|| cfg.out.clone());
                commands::cmd_sweep(&cfg, axis, &ladder, workers, &out)
            }
            Err(code) => code,
        },
        Command::Contdep { config, out } => match (load(&config[0], false), load(&config[1], false)) {
            (Ok(a), Ok(b)) => {
                let out = out.unwrap_or_else(|| a.out.clone());
                commands::cmd_contdep(&a, &b, &out)
            }
            (Err(code), _) | (_, Err(code)) => code,
        },
        Command::Selftest { mesh_file } => selftest::cmd_selftest(mesh_file.as_deref()),
        Command::MeshInfo { config, rings, sectors, mesh_file, write } => {
            let spec = match (config, mesh_file) {
                (_, Some(p)) => MeshSpec::File(p),
                (Some(c), None) => match load(&c, false) {
                    Ok(cfg) => cfg.mesh,
                    Err(code) => return code,
                },
                (None, None) => MeshSpec::Disk { rings, sectors },
            };
            commands::cmd_mesh_info(&spec, write.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let code = dispatch(Cli::parse());
    ExitCode::from(code as u8)
}
