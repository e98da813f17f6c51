use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use so3lab::sim::Sampler;
use so3lab_cli::commands::{
    self, CliError, ModeOverride, MonteCarloOptions, Preset, ScenarioSource, EXIT_OK, EXIT_VALIDATION,
};
use so3lab_cli::report::Report;

/// Attitude control on SO(3) with an angular-velocity observer.
///
/// Exit codes: 0 success, 1 I/O or internal failure, 2 configuration or
/// usage error, 3 numerical blow-up, 4 derivative validation failure.
#[derive(Parser)]
#[command(name = "so3lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its trajectory as CSV.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// CSV output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the separation certificate conditions.
    Certify {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Also simulate and report whether an uncertified scenario converges.
        #[arg(long)]
        simulate: bool,
    },
    /// Sample initial estimates and classify where each run ends.
    Montecarlo {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Per-run CSV output path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Radius of the ball the initial angular velocity estimate is drawn from.
        #[arg(long, default_value_t = 5.0)]
        max_rate: f64,
        /// Start every run at undesired equilibrium 1, 2 or 3 instead.
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        equilibrium: Option<u8>,
        /// Rotate the equilibrium estimate by this angle about a random axis.
        #[arg(long, requires = "equilibrium")]
        perturb: Option<f64>,
    },
    /// Check the error-dynamics identities by central differences.
    Validate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Comma-separated step sizes, largest first (default: 4h, 2h, h).
        #[arg(long, value_delimiter = ',')]
        steps: Option<Vec<f64>>,
        /// Perturb the middle sample of every log by this magnitude.
        #[arg(long)]
        corrupt: Option<f64>,
    },
}

#[derive(Args)]
struct ScenarioArgs {
    /// TOML scenario file.
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    #[value(name = "v-a")]
    VA,
    #[value(name = "v-b")]
    VB,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    FullState,
    VelocityFree,
    OpenLoop,
}

impl ScenarioArgs {
    fn source(self) -> ScenarioSource {
        ScenarioSource {
            config: self.config,
            preset: self.preset.map(|p| match p {
                PresetArg::VA => Preset::VA,
                PresetArg::VB => Preset::VB,
            }),
            mode: self.mode.map(|m| match m {
                ModeArg::FullState => ModeOverride::FullState,
                ModeArg::VelocityFree => ModeOverride::VelocityFree,
                ModeArg::OpenLoop => ModeOverride::OpenLoop,
            }),
        }
    }
}

fn print(report: &Report) -> Result<(), CliError> {
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    report.write_to(&mut lock).and_then(|_| lock.flush()).map_err(|e| CliError::Io("<stdout>".into(), e))
}

fn execute(command: Command) -> Result<u8, CliError> {
    match command {
        Command::Simulate { scenario, out } => {
            let output = commands::simulate(&scenario.source(), out.as_deref())?;
            print(&output.report)?;
        }
        Command::Certify { scenario, simulate } => {
            print(&commands::certify_command(&scenario.source(), simulate)?)?;
        }
        Command::Montecarlo { scenario, n, seed, out, max_rate, equilibrium, perturb } => {
            let sampler = match (equilibrium, perturb) {
                (None, _) => Sampler::Uniform { max_rate },
                (Some(i), None) => Sampler::AtEquilibrium(i),
                (Some(index), Some(magnitude)) => Sampler::Perturbed { index, magnitude },
            };
            let opts = MonteCarloOptions { n, seed, sampler, threads: commands::threads_from_env()? };
            print(&commands::montecarlo(&scenario.source(), &opts, out.as_deref())?)?;
        }
        Command::Validate { scenario, steps, corrupt } => {
            let output = commands::validate(&scenario.source(), steps.as_deref(), corrupt)?;
            print(&output.report)?;
            if !output.passed {
                return Ok(EXIT_VALIDATION);
            }
        }
    }
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
