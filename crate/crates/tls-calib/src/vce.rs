//! Variance-component estimation over the three observation channels.
//!
//! The a-priori standard deviations of ρ, θ, and α are guesses; after an
//! adjustment, each group's weighted residual square sum divided by its
//! accumulated redundancy estimates how wrong the guess was. Rescaling the
//! group σ by the square root of that factor and re-solving drives every
//! factor toward one. The procedure runs on point-based networks, where
//! each scalar row belongs to exactly one channel; levelling
//! pseudo-observations keep their stated precisions throughout.

use crate::adjust::{solve_point_based, AdjustOptions, AdjustmentResult, ObservationGroup};
use crate::network::CalibrationNetwork;
use crate::stochastic::TlsStochasticModel;
use crate::{Result, TlsError};

/// Iteration controls for variance-component estimation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VceOptions {
    /// Maximum number of solve–rescale passes.
    pub max_passes: usize,
    /// Acceptance band around one: every group factor must satisfy
    /// |factor − 1| ≤ tolerance.
    pub tolerance: f64,
}

impl Default for VceOptions {
    fn default() -> Self {
        Self {
            max_passes: 12,
            tolerance: 0.05,
        }
    }
}

/// Converged output of the estimation.
#[derive(Debug, Clone)]
pub struct VceOutcome {
    /// Adjustment under the final, rescaled stochastic model.
    pub result: AdjustmentResult,
    /// The rescaled model itself.
    pub stochastic: TlsStochasticModel,
    /// Group variance factors (ρ, θ, α) of every pass, in order; the last
    /// entry is within the acceptance band.
    pub factors: Vec<[f64; 3]>,
    /// Number of passes actually run.
    pub passes: usize,
}

const GROUPS: [(ObservationGroup, &str); 3] = [
    (ObservationGroup::Range, "rho"),
    (ObservationGroup::Horizontal, "theta"),
    (ObservationGroup::Vertical, "alpha"),
];

fn group_factors(result: &AdjustmentResult) -> Result<[f64; 3]> {
    let mut factors = [0.0; 3];
    for (slot, (group, label)) in GROUPS.iter().enumerate() {
        let redundancy = result.group_redundancy(*group);
        if redundancy < 1e-6 {
            return Err(TlsError::UndefinedVarianceComponent {
                group: label,
                redundancy,
            });
        }
        let factor = result.group_weighted_square_sum(*group) / redundancy;
        if !factor.is_finite() || factor <= 0.0 {
            return Err(TlsError::SingularSystem {
                diagnostic: format!("degenerate variance factor {factor:e} for group {label}"),
            });
        }
        factors[slot] = factor;
    }
    Ok(factors)
}

/// Iterates point-based adjustments, rescaling the channel σs until every
/// group variance factor sits within `1 ± tolerance`.
pub fn run_vce(
    network: &CalibrationNetwork,
    options: &AdjustOptions,
    vce: &VceOptions,
) -> Result<VceOutcome> {
    let mut net = network.clone();
    let mut history = Vec::new();
    let mut worst = f64::INFINITY;
    for pass in 1..=vce.max_passes {
        let result = solve_point_based(&net, options)?;
        let factors = group_factors(&result)?;
        history.push(factors);
        worst = factors
            .iter()
            .map(|f| (f - 1.0).abs())
            .fold(0.0, f64::max);
        if worst <= vce.tolerance {
            return Ok(VceOutcome {
                stochastic: net.stochastic,
                result,
                factors: history,
                passes: pass,
            });
        }
        // Warm-start the next pass from the estimates, with the channel σs
        // rescaled by the square roots of the observed factors.
        net = result.network;
        net.stochastic.sigma_rho0 *= factors[0].sqrt();
        net.stochastic.sigma_theta *= factors[1].sqrt();
        net.stochastic.sigma_alpha *= factors[2].sqrt();
    }
    Err(TlsError::NoConvergence {
        iterations: vce.max_passes,
        last_correction: worst,
    })
}
