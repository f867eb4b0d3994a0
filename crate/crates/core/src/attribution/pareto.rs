//! Sweeping lambda to trace the multiple-assignment / affinity frontier.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::instance::{Assignment, AttributionInstance};
use super::milp::solve_exact;
use crate::error::{AimError, Result};

/// One solved point of the multiple-assignment / affinity trade-off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub lambda: f64,
    pub multi_rate: f64,
    pub mean_affinity: f64,
    pub multi_count: usize,
    pub assigned: usize,
}

fn check_grid(lambda_grid: &[f64]) -> Result<()> {
    if lambda_grid.iter().any(|&l| !(l >= 0.0 && l.is_finite())) {
        return Err(AimError::Config(
            "lambda grid values must be finite and >= 0".into(),
        ));
    }
    if lambda_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(AimError::Config(
            "lambda grid must be sorted ascending".into(),
        ));
    }
    Ok(())
}

/// Solves the exact attribution once per lambda.
pub fn pareto_sweep(
    instance: &AttributionInstance,
    lambda_grid: &[f64],
) -> Result<Vec<ParetoPoint>> {
    pareto_sweep_many(std::slice::from_ref(instance), lambda_grid)
}

/// Sweep over independent instances (e.g. every day of a period), pooling the
/// attributed pairs of all instances into one point per lambda.
pub fn pareto_sweep_many(
    instances: &[AttributionInstance],
    lambda_grid: &[f64],
) -> Result<Vec<ParetoPoint>> {
    check_grid(lambda_grid)?;
    lambda_grid
        .iter()
        .map(|&lambda| {
            let solved = instances
                .par_iter()
                .map(|inst| solve_exact(inst, lambda))
                .collect::<Result<Vec<_>>>()?;
            Ok(pool(lambda, &solved))
        })
        .collect()
}

pub(crate) fn pool(lambda: f64, solved: &[Assignment]) -> ParetoPoint {
    let assigned: usize = solved.iter().map(|a| a.assigned.len()).sum();
    let total_affinity: f64 = solved.iter().map(|a| a.total_affinity).sum();
    let multi_count: usize = solved.iter().map(|a| a.multi_assigned.len()).sum();
    let attributed: usize = solved.iter().map(|a| a.attributed_subscribers).sum();
    ParetoPoint {
        lambda,
        multi_rate: if attributed > 0 {
            multi_count as f64 / attributed as f64
        } else {
            0.0
        },
        mean_affinity: if assigned > 0 {
            total_affinity / assigned as f64
        } else {
            0.0
        },
        multi_count,
        assigned,
    }
}
