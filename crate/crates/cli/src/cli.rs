use std::path::PathBuf;

use aim_core::baseline_model::ModelKind;
use clap::{Parser, Subcommand};

use crate::config::Solver;

/// Acquisition impact model: estimate and attribute signups driven by content launches.
#[derive(Debug, Parser)]
#[command(name = "aim", version, about)]
pub struct Args {
    #[command(subcommand)]
    pub command: Command,

    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Directory containing signups.csv, consumption.csv, promotion.csv and launches.json.
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,

    /// Launch configuration, if not in the data directory.
    #[arg(long, global = true)]
    pub launches: Option<PathBuf>,

    /// Scenario JSON for `simulate`.
    #[arg(long, global = true)]
    pub scenario: Option<PathBuf>,

    /// Random seed, overriding the scenario's.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[arg(long, global = true, value_parser = parse_model)]
    pub model: Option<ModelKind>,

    /// Use a saved model instead of fitting one.
    #[arg(long, global = true)]
    pub model_file: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    pub solver: Option<Solver>,

    /// Weight on total affinity in the exact attribution objective.
    #[arg(long, global = true)]
    pub lambda: Option<f64>,

    /// Comma-separated lambda grid for `pareto`.
    #[arg(long, global = true, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,

    /// Discount affinity by gamma^(order - 1) of consumption order; 0.8 when given without a value.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "0.8")]
    pub decay_gamma: Option<f64>,
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: aim_core::AimError| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with ground truth.
    Simulate,
    /// Fit the baseline consumption model on pre-launch cohorts.
    Fit,
    /// Estimate daily incremental signups per launch and group.
    Estimate,
    /// Attribute incremental signups to subscribers.
    Attribute,
    /// Sweep lambda and report the multi-assignment / affinity trade-off.
    Pareto,
    /// Score estimates and attributions with the validation diagnostics.
    Validate,
}
