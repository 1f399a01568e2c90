use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use optport::OptionKind;

#[derive(Debug, Parser)]
#[command(
    name = "optport",
    version,
    about = "Gosset option pricing and delta-gamma portfolio optimization"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Price one European option
    Price(PriceArgs),
    /// Price and finite-difference Greeks of one option
    Greeks(PriceArgs),
    /// Minimum-variance and minimum-CFVaR portfolios of an ATM book
    Optimize(OptimizeArgs),
    /// Run the oracle suite against the closed forms
    Verify(VerifyArgs),
    /// Reproduce a preset experiment
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, Args)]
pub struct MarketArgs {
    /// Market file (.json, or .csv with a sibling <stem>_corr.csv); defaults to the bundled dataset
    #[arg(long)]
    pub market: Option<PathBuf>,
    /// Override the degrees of freedom
    #[arg(long)]
    pub nu: Option<f64>,
    /// Override the risk horizon in years
    #[arg(long)]
    pub dt: Option<f64>,
    /// Override the risk-free rate
    #[arg(long)]
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Call,
    Put,
}

impl From<KindArg> for OptionKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Call => OptionKind::Call,
            KindArg::Put => OptionKind::Put,
        }
    }
}

/// Strike as an absolute level or `atm` (the spot of the underlying).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strike {
    Atm,
    Level(f64),
}

impl FromStr for Strike {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("atm") {
            return Ok(Strike::Atm);
        }
        match s.parse::<f64>() {
            Ok(k) if k > 0.0 && k.is_finite() => Ok(Strike::Level(k)),
            _ => Err(format!(
                "strike must be a positive number or `atm`, got `{s}`"
            )),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct PriceArgs {
    #[command(flatten)]
    pub market: MarketArgs,
    /// Stock name from the market file
    #[arg(long)]
    pub underlying: String,
    #[arg(long, value_enum, default_value_t = KindArg::Call)]
    pub kind: KindArg,
    #[arg(long, default_value = "atm")]
    pub strike: Strike,
    /// Years to expiry
    #[arg(long, default_value_t = 1.0)]
    pub expiry: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Clone, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub market: MarketArgs,
    /// Option kind of the book; both books when omitted
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
    #[arg(long, default_value_t = 1.0)]
    pub expiry: f64,
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,
    /// Write result files here instead of printing JSON to stdout
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Format::Csv, Format::Json])]
    pub format: Vec<Format>,
    /// Include zeta, U and the Greek aggregates in the JSON
    #[arg(long)]
    pub dump_moments: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum Check {
    Moments,
    Optimizer,
    Parity,
    BsLimit,
    McPrice,
}

impl Check {
    pub const ALL: [Check; 5] = [
        Check::Moments,
        Check::Optimizer,
        Check::Parity,
        Check::BsLimit,
        Check::McPrice,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::Moments => "moments",
            Check::Optimizer => "optimizer",
            Check::Parity => "parity",
            Check::BsLimit => "bs-limit",
            Check::McPrice => "mc-price",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub market: MarketArgs,
    #[arg(long, default_value_t = 1.0)]
    pub expiry: f64,
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Monte Carlo draws per check
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: usize,
    /// Subset of checks to run (default: all)
    #[arg(long, value_enum, value_delimiter = ',')]
    pub checks: Vec<Check>,
    /// Fault injection: perturb U after solving so the moment check must fail
    #[arg(long, hide = true)]
    pub corrupt_u: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    #[value(name = "fig1")]
    Fig1,
    #[value(name = "appB-01")]
    AppB01,
    #[value(name = "appB-001")]
    AppB001,
}

impl Preset {
    pub fn alpha(self) -> f64 {
        match self {
            Preset::Fig1 => 0.01,
            Preset::AppB01 => 0.1,
            Preset::AppB001 => 0.001,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig1 => "fig1",
            Preset::AppB01 => "appB-01",
            Preset::AppB001 => "appB-001",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    #[arg(value_enum)]
    pub preset: Preset,
    #[command(flatten)]
    pub market: MarketArgs,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Monte Carlo draws for the moment cross-check
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: usize,
    /// Output directory; files go to <out-dir>/<preset>/
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Format::Csv, Format::Json, Format::Svg])]
    pub format: Vec<Format>,
    #[arg(long)]
    pub dump_moments: bool,
}
