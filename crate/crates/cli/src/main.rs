use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use rdcontrol_cli::commands::{cmd_analyze, cmd_reduce, cmd_simulate, cmd_synthesize};
use rdcontrol_cli::error::{CliError, CliResult};
use rdcontrol_cli::repro::{run_reproduce, ReproId};

#[derive(Parser)]
#[command(
    name = "rdcontrol",
    version,
    about = "Certified boundary control synthesis for discretized reaction-diffusion systems"
)]
struct Cli {
    /// Output directory for reports and artifacts; falls back to the
    /// config's `output.dir`, then to `out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for the parallel build phases (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,

    #[command(subcommand)]
    command: Command,
}

/// `--out` wins; otherwise use the config's output section, then `out`.
fn resolve_out(flag: Option<PathBuf>, config_path: Option<&PathBuf>) -> PathBuf {
    if let Some(dir) = flag {
        return dir;
    }
    if let Some(path) = config_path {
        if let Ok(config) = rdcontrol_cli::RunConfig::from_path(path) {
            if let Some(output) = config.output {
                return output.dir;
            }
        }
    }
    PathBuf::from("out")
}

#[derive(Subcommand)]
enum Command {
    /// Check the stability hypothesis and write the bounds report.
    Analyze {
        #[arg(long)]
        config: PathBuf,
    },
    /// Build the successor table, run value iteration and store the
    /// controller artifact.
    Synthesize {
        #[arg(long)]
        config: PathBuf,
    },
    /// Extract the pattern for the configured initial state and simulate it.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        artifact: PathBuf,
    },
    /// Apply controllers synthesized on a reduced system to the full system.
    Reduce {
        #[arg(long)]
        config_full: PathBuf,
        #[arg(long)]
        config_reduced: PathBuf,
        /// Controller artifact from the reduced system (repeatable).
        #[arg(long = "artifact", required = true)]
        artifacts: Vec<PathBuf>,
        /// Override for the reduced OSL constant in the error bound.
        #[arg(long)]
        lambda_h1: Option<f64>,
        #[arg(long, value_enum, default_value_t = K2MethodArg::VertexEnumeration)]
        k2_method: K2MethodArg,
    },
    /// Run a bundled experiment and compare against the reference values.
    Reproduce {
        #[arg(long)]
        id: String,
        /// Run the full-lattice length-4 synthesis instead of the fast
        /// 8-point fallback (hours of CPU time).
        #[arg(long)]
        allow_long: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum K2MethodArg {
    VertexEnumeration,
    IntervalBound,
}

impl From<K2MethodArg> for rdcontrol::reduce::K2Method {
    fn from(arg: K2MethodArg) -> Self {
        match arg {
            K2MethodArg::VertexEnumeration => rdcontrol::reduce::K2Method::VertexEnumeration,
            K2MethodArg::IntervalBound => rdcontrol::reduce::K2Method::IntervalBound,
        }
    }
}

fn run(cli: Cli) -> CliResult<u8> {
    if cli.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.workers)
            .build_global()
            .map_err(|e| CliError::Internal(format!("cannot configure worker pool: {e}")))?;
    }
    match cli.command {
        Command::Analyze { config } => {
            let out = resolve_out(cli.out, Some(&config));
            let satisfied = cmd_analyze(&config, &out)?;
            Ok(if satisfied { 0 } else { 1 })
        }
        Command::Synthesize { config } => {
            let out = resolve_out(cli.out, Some(&config));
            cmd_synthesize(&config, &out)?;
            Ok(0)
        }
        Command::Simulate { config, artifact } => {
            let out = resolve_out(cli.out, Some(&config));
            cmd_simulate(&config, &artifact, &out)?;
            Ok(0)
        }
        Command::Reduce {
            config_full,
            config_reduced,
            artifacts,
            lambda_h1,
            k2_method,
        } => {
            let out = resolve_out(cli.out, Some(&config_reduced));
            cmd_reduce(
                &config_full,
                &config_reduced,
                &artifacts,
                lambda_h1,
                k2_method.into(),
                &out,
            )?;
            Ok(0)
        }
        Command::Reproduce { id, allow_long } => {
            let id = ReproId::parse(&id)?;
            let out = resolve_out(cli.out, None);
            let report = run_reproduce(id, Some(&out), allow_long)?;
            for row in &report.rows {
                println!(
                    "{}: reference {:.5} ({}), achieved {:.5} -> {}",
                    row.quantity,
                    row.reference,
                    row.reference_source,
                    row.achieved,
                    if row.pass { "pass" } else { "FAIL" }
                );
            }
            Ok(if report.all_pass { 0 } else { 1 })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
