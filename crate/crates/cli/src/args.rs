use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use medmarg::mediation::Method;

use crate::input::ColumnMap;

/// Marginal effects and causal mediation for a binary outcome with a continuous mediator.
#[derive(Debug, Parser)]
#[command(name = "medmarg", version)]
pub struct Cli {
    /// Worker threads (default: all cores); MEDMARG_THREADS caps this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the outcome and mediator models and report estimates with Wald intervals.
    Fit(FitArgs),
    /// Estimate natural direct, indirect and total effects.
    Mediate(MediateArgs),
    /// Tabulate the marginal log-odds and probability over an exposure grid.
    Marginal(MarginalArgs),
    /// Sweep the unmeasured-confounder bias correction over a (beta_w, rho) grid.
    Sensitivity(SensitivityArgs),
    /// Run a Monte-Carlo study described by a TOML config.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InteractionMode {
    /// Keep the exposure-mediator term when its Wald test has p < 0.10.
    Auto,
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Input CSV with a header row (comma or semicolon separated).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Binary outcome column.
    #[arg(long, default_value = "y")]
    pub y_col: String,
    /// Exposure column.
    #[arg(long, default_value = "x")]
    pub x_col: String,
    /// Mediator column.
    #[arg(long, default_value = "w")]
    pub w_col: String,
}

impl DataArgs {
    pub fn columns(&self) -> ColumnMap {
        ColumnMap { y: self.y_col.clone(), x: self.x_col.clone(), w: self.w_col.clone() }
    }
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Output file (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value_t = InteractionMode::Auto)]
    pub interaction: InteractionMode,
    /// Firth-penalized outcome fit.
    #[arg(long)]
    pub firth: bool,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Wald interval level.
    #[arg(long, default_value_t = 0.90)]
    pub level: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse::<Method>().map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Args)]
pub struct MediateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Reference and target exposure levels.
    #[arg(long, num_args = 2, value_names = ["X_STAR", "X"], default_values_t = [0.0, 1.0], allow_negative_numbers = true)]
    pub contrast: Vec<f64>,
    #[arg(long, value_delimiter = ',', value_parser = parse_method, default_value = "closed,exact,vv,gaynor")]
    pub methods: Vec<Method>,
    /// Bootstrap replications (0 disables the bootstrap).
    #[arg(long, default_value_t = 0)]
    pub boot_reps: usize,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
    /// Probit-to-logit scaling constant of the Gaynor baseline.
    #[arg(long, default_value_t = medmarg::mediation::GAYNOR_DEFAULT_C)]
    pub gaynor_c: f64,
    /// Gauss-Hermite nodes for the exact method.
    #[arg(long, default_value_t = 80)]
    pub quad_nodes: usize,
    /// Treat the residual variance as known in the Delta-method standard errors.
    #[arg(long)]
    pub fixed_sigma2: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct MarginalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Parameters b0,bx,bw,bxw,t0,tx,sigma instead of fitting --input.
    #[arg(long, value_delimiter = ',', num_args = 1, allow_hyphen_values = true, conflicts_with = "input")]
    pub params: Option<Vec<f64>>,
    /// Exposure grid as start:stop:step or a comma list.
    #[arg(long, default_value = "0:1:0.1", allow_hyphen_values = true)]
    pub grid: String,
    #[arg(long, default_value_t = 80)]
    pub quad_nodes: usize,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SensitivityArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Observed marginal log-odds slope; fitted from --input when absent.
    #[arg(long, allow_negative_numbers = true, conflicts_with = "input")]
    pub eta_x: Option<f64>,
    /// Exposure standard deviation; omit with --eta-x for a standardized exposure.
    #[arg(long)]
    pub sigma_x: Option<f64>,
    /// Confounder-outcome coefficients, start:stop:step or a comma list.
    #[arg(long, default_value = "0:2:0.25", allow_hyphen_values = true)]
    pub beta_w: String,
    /// Exposure-confounder correlations, start:stop:step or a comma list.
    #[arg(long, default_value = "-0.9:0.9:0.1", allow_hyphen_values = true)]
    pub rho: String,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Study config (TOML).
    pub config: PathBuf,
    /// Output prefix; writes PREFIX.csv and PREFIX.json.
    #[arg(long, default_value = "study")]
    pub out: PathBuf,
}
