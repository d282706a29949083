//! Stochastic model of the scanner observations.
//!
//! Range precision degrades with the incidence angle β between the laser
//! ray and the surface normal: the footprint stretches, so
//! `Var(ρ) = σρ0²·sec²β`. The circle readings keep constant variances.
//! Observations at grazing incidence (β ≥ cutoff) carry so little range
//! information that they are rejected outright.

use crate::{Result, TlsError};

/// A-priori observation precisions and the grazing cutoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TlsStochasticModel {
    /// Range standard deviation at normal incidence (m).
    pub sigma_rho0: f64,
    /// Horizontal-direction standard deviation (rad).
    pub sigma_theta: f64,
    /// Elevation standard deviation (rad).
    pub sigma_alpha: f64,
    /// Grazing-incidence cutoff β_max (rad).
    pub beta_max: f64,
}

impl Default for TlsStochasticModel {
    /// Survey-grade defaults: 0.5 mm range, 20″ circles, 85° cutoff.
    fn default() -> Self {
        const ARCSEC: f64 = std::f64::consts::PI / (180.0 * 3600.0);
        Self {
            sigma_rho0: 0.5e-3,
            sigma_theta: 20.0 * ARCSEC,
            sigma_alpha: 20.0 * ARCSEC,
            beta_max: 85f64.to_radians(),
        }
    }
}

/// Per-component a-priori variances of one observation (no cross terms).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentVariances {
    /// Range variance (m²), incidence-inflated.
    pub rho: f64,
    /// Direction variance (rad²).
    pub theta: f64,
    /// Elevation variance (rad²).
    pub alpha: f64,
}

/// Variances for an observation at incidence `beta`, or a grazing-incidence
/// rejection once β reaches the cutoff.
pub fn observation_weight(beta: f64, model: &TlsStochasticModel) -> Result<ComponentVariances> {
    if !(0.0..model.beta_max).contains(&beta) {
        return Err(TlsError::GrazingIncidence {
            beta_deg: beta.to_degrees(),
            beta_max_deg: model.beta_max.to_degrees(),
        });
    }
    let sec = 1.0 / beta.cos();
    Ok(ComponentVariances {
        rho: model.sigma_rho0 * model.sigma_rho0 * sec * sec,
        theta: model.sigma_theta * model.sigma_theta,
        alpha: model.sigma_alpha * model.sigma_alpha,
    })
}

/// Direct observations of a station's orientation angles from levelling
/// (ω, φ) and a heading reference (κ). Any subset may be present.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LevellingPseudoObs {
    /// Observed roll with its standard deviation (rad).
    pub omega: Option<(f64, f64)>,
    /// Observed pitch with its standard deviation (rad).
    pub phi: Option<(f64, f64)>,
    /// Observed yaw with its standard deviation (rad).
    pub kappa: Option<(f64, f64)>,
}

impl LevellingPseudoObs {
    /// Level station with all three angles observed at the given
    /// precisions (rad).
    pub fn level(sigma_tilt: f64, sigma_heading: f64) -> Self {
        Self {
            omega: Some((0.0, sigma_tilt)),
            phi: Some((0.0, sigma_tilt)),
            kappa: Some((0.0, sigma_heading)),
        }
    }

    /// True when at least one component is active.
    pub fn any(&self) -> bool {
        self.omega.is_some() || self.phi.is_some() || self.kappa.is_some()
    }

    /// Validates that every supplied σ is positive.
    pub fn validate(&self) -> Result<()> {
        for comp in [self.omega, self.phi, self.kappa].iter().flatten() {
            if comp.1 <= 0.0 || !comp.1.is_finite() {
                return Err(TlsError::InvalidNetwork {
                    reason: format!("non-positive levelling sigma {}", comp.1),
                });
            }
        }
        Ok(())
    }
}
