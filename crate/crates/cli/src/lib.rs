//! Command-line front end for the curved n-body toolkit.
//!
//! Every command reads a scenario (a JSON file, flags, or both, with flags
//! taking precedence), runs one computation and writes a JSON document or a
//! CSV table. Failures are reported on stderr as a JSON object naming the
//! error, with exit code 1 for numerical failures and 2 for bad input.

pub mod commands;
pub mod error;
pub mod output;
pub mod scenario;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::run;
pub use error::CliError;
pub use output::{Format, Payload};
pub use scenario::{parse_scenario, Scenario, ScenarioFile};

#[derive(Debug, Parser)]
#[command(
    name = "curved-nbody",
    version,
    about = "Relative equilibria of the curved n-body problem on S³"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

/// Scenario inputs and output options shared by all commands.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON scenario file; flags override its fields.
    #[arg(long, global = true)]
    pub scenario: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Write the payload here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Number of bodies.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Comma-separated masses.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub masses: Option<Vec<f64>>,
    /// Comma-separated azimuths in radians.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub phi: Option<Vec<f64>>,
    /// Comma-separated polar angles in radians.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta: Option<Vec<f64>>,
    /// Angular velocity of the rotating frame.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    /// Integration horizon.
    #[arg(long = "t-end", global = true)]
    pub t_end: Option<f64>,
    /// Keep every k-th integration step.
    #[arg(long, global = true)]
    pub stride: Option<usize>,
    /// Stop once the shape deviation exceeds this value.
    #[arg(long = "stop-deviation", global = true)]
    pub stop_deviation: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ManifoldArg {
    S1,
    S2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    /// The fastest-growing out-of-plane mode.
    Unstable,
    /// A seeded random direction.
    Random,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Positions, potential and separations of the scenario configuration.
    Polygon,
    /// Equilibrium residuals of the scenario configuration.
    Verify,
    /// Closed-form Hessian spectra of the regular polygon.
    Spectrum,
    /// Check the inequality chains behind the sign pattern of the spectra.
    Certify,
    /// Stability verdict for the rotating regular polygon.
    Classify {
        #[arg(long, value_enum, default_value_t = ManifoldArg::S2)]
        manifold: ManifoldArg,
    },
    /// Integrate the scenario rotating rigidly at angular velocity alpha.
    Simulate,
    /// Perturb the rotating polygon and measure the growth of the shape deviation.
    Probe {
        #[arg(long, default_value_t = 1e-6)]
        epsilon: f64,
        #[arg(long, value_enum, default_value_t = DirectionArg::Unstable)]
        direction: DirectionArg,
    },
    /// Masses that make the scenario azimuths a circle equilibrium.
    Masses {
        /// Largest accepted offset from the regular polygon, in radians.
        #[arg(long, default_value_t = curved_nbody::families::PERTURBATION_BOUND)]
        bound: f64,
    },
    /// Tabulate the latitude-circle family of rotating polygons.
    Bifurcate {
        /// Number of equally spaced latitudes in (0, π).
        #[arg(long, default_value_t = 99)]
        points: usize,
        /// Explicit comma-separated latitudes; overrides --points.
        #[arg(long, value_delimiter = ',')]
        thetas: Option<Vec<f64>>,
    },
    /// Classify every (n, alpha) cell of a grid.
    Sweep {
        #[arg(long = "n-list", value_delimiter = ',', required = true)]
        n_list: Vec<usize>,
        /// Explicit comma-separated alpha values.
        #[arg(long = "alpha-grid", value_delimiter = ',', allow_hyphen_values = true)]
        alpha_grid: Option<Vec<f64>>,
        #[arg(long = "alpha-min", allow_hyphen_values = true)]
        alpha_min: Option<f64>,
        #[arg(long = "alpha-max", allow_hyphen_values = true)]
        alpha_max: Option<f64>,
        #[arg(long = "alpha-steps")]
        alpha_steps: Option<usize>,
        #[arg(long, value_enum, default_value_t = ManifoldArg::S2)]
        manifold: ManifoldArg,
    },
}

/// Outcome of one invocation, ready to be written by the binary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandResult {
    pub exit_code: u8,
    pub stdout: String,
    pub stderr: String,
}

/// Runs a parsed command line, writing the payload to `--out` when given.
pub fn execute(cli: Cli) -> CommandResult {
    let out = cli.common.out.clone();
    let format = cli.common.format;
    let outcome = run(&cli.command, &cli.common);
    let (payload, error) = match outcome {
        Ok(p) => (Some(p), None),
        Err(commands::Failure { partial, error }) => (partial.map(|p| *p), Some(error)),
    };
    let mut result = CommandResult {
        exit_code: 0,
        stdout: String::new(),
        stderr: String::new(),
    };
    let mut error = error;
    if let Some(p) = payload {
        match output::render(&p, format).and_then(|text| emit(text, out.as_ref())) {
            Ok(stdout) => result.stdout = stdout,
            Err(e) => error = error.or(Some(e)),
        }
    }
    if let Some(e) = error {
        result.exit_code = e.exit_code();
        result.stderr = format!("{}\n", e.to_json());
    }
    result
}

fn emit(text: String, out: Option<&PathBuf>) -> Result<String, CliError> {
    match out {
        None => Ok(text),
        Some(path) => std::fs::write(path, text)
            .map(|_| String::new())
            .map_err(|e| CliError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            }),
    }
}
