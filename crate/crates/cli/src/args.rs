use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use qnflow_core::FlowConfig;

#[derive(Debug, Parser)]
#[command(name = "qnflow", version, about = "Nearest classical-classical states by gradient flow")]
pub struct Cli {
    /// Worker threads for restarts and sweep cells (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decompose a synthetic classical-classical state of known rank.
    Decompose(DecomposeArgs),
    /// Repeat the flow from random starts on one fixed random target.
    Consistency(ConsistencyArgs),
    /// Best objective for every factorisation n·m = D and rank r.
    Ranksweep(RanksweepArgs),
    /// Estimate the quantumness of a density matrix read from a file.
    Quantify(QuantifyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SeedArg {
    /// Master seed; every random draw derives from it.
    #[arg(long, env = "QN_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct OutArg {
    /// Output directory (created if missing).
    #[arg(long, default_value = "qnflow-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct FlowArgs {
    #[arg(long)]
    pub abs_tol: Option<f64>,
    #[arg(long)]
    pub rel_tol: Option<f64>,
    #[arg(long)]
    pub t_max: Option<f64>,
    #[arg(long)]
    pub grad_tol: Option<f64>,
    #[arg(long)]
    pub discard_eps: Option<f64>,
    #[arg(long)]
    pub drift_tol: Option<f64>,
    /// Keep every k-th accepted step in trajectory output.
    #[arg(long)]
    pub record_stride: Option<usize>,
}

impl FlowArgs {
    pub fn config(&self) -> FlowConfig {
        let d = FlowConfig::default();
        FlowConfig {
            abs_tol: self.abs_tol.unwrap_or(d.abs_tol),
            rel_tol: self.rel_tol.unwrap_or(d.rel_tol),
            t_max: self.t_max.unwrap_or(d.t_max),
            grad_tol: self.grad_tol.unwrap_or(d.grad_tol),
            discard_eps: self.discard_eps.unwrap_or(d.discard_eps),
            drift_tol: self.drift_tol.unwrap_or(d.drift_tol),
            record_stride: self.record_stride.unwrap_or(d.record_stride),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DecomposeArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub m: usize,
    /// Rank of the synthetic target.
    #[arg(long)]
    pub rank: usize,
    /// Number of product terms in the initial guess (default min(n, m)).
    #[arg(long)]
    pub init_rank: Option<usize>,
    #[command(flatten)]
    pub seed: SeedArg,
    #[command(flatten)]
    pub out: OutArg,
    #[command(flatten)]
    pub flow: FlowArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetRank {
    Full,
    Rank(usize),
}

impl std::str::FromStr for TargetRank {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(TargetRank::Full),
            _ => match s.parse::<usize>() {
                Ok(r) if r > 0 => Ok(TargetRank::Rank(r)),
                _ => Err(format!("expected `full` or a positive integer, got `{s}`")),
            },
        }
    }
}

impl std::fmt::Display for TargetRank {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TargetRank::Full => f.write_str("full"),
            TargetRank::Rank(r) => write!(f, "{r}"),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ConsistencyArgs {
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    #[arg(long, default_value_t = 5)]
    pub m: usize,
    /// Rank of the random target: `full` or a number.
    #[arg(long, default_value = "full")]
    pub target_rank: TargetRank,
    /// Product terms per trial (default min(n, m)).
    #[arg(long = "N")]
    pub terms: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[command(flatten)]
    pub seed: SeedArg,
    #[command(flatten)]
    pub out: OutArg,
    #[command(flatten)]
    pub flow: FlowArgs,
}

#[derive(Debug, Clone, Args)]
pub struct RanksweepArgs {
    /// Total dimension D.
    #[arg(long)]
    pub dim: usize,
    #[arg(long, default_value_t = 5)]
    pub restarts: usize,
    /// Density matrix to sweep (CSV or JSON); a random full-rank one if absent.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub seed: SeedArg,
    #[command(flatten)]
    pub out: OutArg,
    #[command(flatten)]
    pub flow: FlowArgs,
}

#[derive(Debug, Clone, Args)]
pub struct QuantifyArgs {
    /// Density matrix as dense CSV (one row per line) or JSON {n, m, data}.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    /// Product terms in the candidate (default min(n, m)).
    #[arg(long = "N")]
    pub terms: Option<usize>,
    #[arg(long, default_value_t = 5)]
    pub restarts: usize,
    #[command(flatten)]
    pub seed: SeedArg,
    #[command(flatten)]
    pub out: OutArg,
    #[command(flatten)]
    pub flow: FlowArgs,
}
