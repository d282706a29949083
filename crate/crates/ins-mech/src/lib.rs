//! Strapdown inertial navigation for the indoor mapping pipeline.
//!
//! The crate covers the deterministic half of IMU handling:
//!
//! * inverting the lab calibration model (bias, scale, axis
//!   non-orthogonality) to recover true specific force and angular rate
//!   from raw triad readings;
//! * advancing a 16-scalar navigation state (position, velocity,
//!   body→navigation quaternion, two bias triads) one sample at a time in
//!   a local-level, z-up navigation frame, including gravity, Coriolis,
//!   and Earth-rate removal;
//! * first-order Gauss-Markov bias statistics;
//! * the 15-dimensional error-state transition and process-noise matrices
//!   consumed by the fusion filter.
//!
//! Everything is a pure function over immutable values: independent
//! trajectories can be advanced concurrently, a single trajectory is a
//! sequential fold.

pub mod intrinsics;
pub mod mechanization;
pub mod process;
pub mod types;

pub use intrinsics::{ImuIntrinsics, TriadIntrinsics};
pub use mechanization::{correct_accel, correct_gyro, propagate_bias, strapdown_predict};
pub use process::{process_model, right_jacobian, ErrorStateMat, ATT, BA, BG, POS, VEL};
pub use types::{EarthModel, GaussMarkovParams, ImuNoiseModel, ImuSample, NavState};

/// Errors raised by the inertial operations.
#[derive(Debug, Clone, thiserror::Error)]
pub enum InsError {
    /// A calibration scale factor of exactly −1 makes an axis unobservable.
    #[error("non-invertible scale factor on axis {axis}")]
    NonInvertibleScale {
        /// Triad axis index (0 = x, 1 = y, 2 = z).
        axis: usize,
    },
    /// Intrinsics outside the plausibility gate (|non-orthogonality| < 0.1 rad).
    #[error("implausible intrinsics: {reason}")]
    ImplausibleIntrinsics {
        /// Which gate failed.
        reason: &'static str,
    },
    /// Prediction interval outside (0, 0.1] s.
    #[error("time step {dt} s outside (0, 0.1] s")]
    TimeStepGate {
        /// Offending interval.
        dt: f64,
    },
    /// Earth model outside the plausibility gate (‖g‖ ∈ [9.7, 9.9] m/s²).
    #[error("implausible earth model: gravity norm {gravity_norm} m/s²")]
    ImplausibleEarthModel {
        /// Norm of the supplied gravity vector.
        gravity_norm: f64,
    },
    /// Gauss-Markov parameters outside σ ≥ 0, τ > 0.
    #[error("invalid Gauss-Markov parameters (sigma {sigma}, tau {tau})")]
    InvalidGaussMarkov {
        /// Supplied driving standard deviation.
        sigma: f64,
        /// Supplied correlation time (s).
        tau: f64,
    },
}

/// Convenience result alias for this crate.
pub type Result<T> = std::result::Result<T, InsError>;
