//! Self-calibration of terrestrial laser scanners.
//!
//! A scanner measures range ρ, horizontal direction θ, and elevation α.
//! Each channel carries small systematic errors described by additional
//! parameters (APs): offsets, scales, cyclic range errors, axis errors of
//! the two circles, and eccentricities. This crate estimates those APs
//! simultaneously with station orientations and object-space geometry in a
//! free-network least-squares adjustment, using either
//!
//! * **point-based** mode — signalized targets observed from several
//!   stations (parametric model, three measurement rows per observation), or
//! * **plane-based** mode — unstructured hits on planar surfaces
//!   (condition model, one point-on-plane equation per observation).
//!
//! Supporting machinery: an incidence-angle-dependent stochastic model,
//! levelling pseudo-observations, variance-component estimation across the
//! {ρ, θ, α} groups, Baarda-style data snooping, and a simulation-based
//! compatibility test between two estimated AP sets.

pub mod adjust;
pub mod aps;
pub mod compat;
pub mod network;
pub mod snoop;
pub mod stochastic;
pub mod vce;

pub use adjust::{
    solve_plane_based, solve_point_based, AdjustMode, AdjustOptions, AdjustmentResult,
    IterationRecord, ObservationGroup, ResidualRecord,
};
pub use aps::{
    eval_hz_ap, eval_range_ap, eval_v_ap, ApSelection, ApSet, EmpiricalBasis, HzAps, RangeAps,
    ScannerArchitecture, VAps,
};
pub use compat::{ap_set_compatibility, CompatOptions, CompatVerdict};
pub use network::{
    CalibrationNetwork, PrimitiveId, StationSetup, TlsObservation,
};
pub use snoop::{critical_value, snoop, snoop_records, SnoopFlag, SnoopOptions};
pub use stochastic::{observation_weight, ComponentVariances, LevellingPseudoObs, TlsStochasticModel};
pub use vce::{run_vce, VceOptions, VceOutcome};

/// Errors raised by network construction and adjustment.
#[derive(Debug, Clone, thiserror::Error)]
pub enum TlsError {
    /// Network shape violates a mode prerequisite.
    #[error("invalid network: {reason}")]
    InvalidNetwork {
        /// Violated prerequisite.
        reason: String,
    },
    /// An observation's incidence angle reached the grazing cutoff.
    #[error("grazing incidence {beta_deg:.1}° ≥ cutoff {beta_max_deg:.1}°")]
    GrazingIncidence {
        /// Incidence angle of the observation (deg).
        beta_deg: f64,
        /// Configured cutoff (deg).
        beta_max_deg: f64,
    },
    /// A circle-error term is singular at the requested elevation.
    #[error("horizontal correction singular at elevation {alpha_deg:.2}° (sec/tan terms)")]
    SingularElevation {
        /// Offending elevation (deg).
        alpha_deg: f64,
    },
    /// The normal system lost more rank than a free-network datum explains.
    #[error("singular normal system: {diagnostic}")]
    SingularSystem {
        /// Description of the offending null-space direction.
        diagnostic: String,
    },
    /// The adjustment did not meet the convergence tolerance.
    #[error("no convergence after {iterations} iterations (last max correction {last_correction:.3e})")]
    NoConvergence {
        /// Iterations performed.
        iterations: usize,
        /// Largest parameter correction of the final iteration.
        last_correction: f64,
    },
    /// Variance-component estimation hit a group without redundancy.
    #[error("variance component undefined for group {group} (redundancy {redundancy:.3e})")]
    UndefinedVarianceComponent {
        /// Group name (rho, theta, alpha).
        group: &'static str,
        /// Accumulated redundancy of the group.
        redundancy: f64,
    },
    /// Compatibility test invoked on results with different AP selections.
    #[error("AP selections differ between the two results")]
    SelectionMismatch,
    /// Text I/O parse failure.
    #[error("parse error at line {line}: {reason}")]
    Parse {
        /// 1-based line number.
        line: usize,
        /// What went wrong.
        reason: String,
    },
    /// A geometric primitive operation failed.
    #[error(transparent)]
    Geometry(#[from] geometry_core::GeometryError),
}

/// Convenience result alias for this crate.
pub type Result<T> = std::result::Result<T, TlsError>;
