//! Shared geometric vocabulary for the multi-sensor calibration and fusion
//! crates: Cardan rotations, unit quaternions, spherical/Cartesian
//! conversions, rigid transforms, orthogonal plane fitting, and the
//! least-squares building blocks (minimum-norm free-network solver,
//! condition-equation accumulation) used by every adjustment.
//!
//! All angles are radians and all lengths are meters internally; degree or
//! arcsecond values appear only at I/O boundaries. Every type in this crate
//! is an immutable value and every operation is a pure function, so
//! concurrent use needs no synchronization.

pub mod lsq;
pub mod par;
pub mod plane;
pub mod rotation;
pub mod spherical;
pub mod transform;

pub use plane::{fit_plane_orthogonal, Plane, PlaneFitStats};
pub use rotation::{quaternion_rate_update, CardanRotation, UnitQuaternion};
pub use spherical::{
    cartesian_to_spherical, spherical_to_cartesian, wrap_0_2pi, wrap_pi, SphericalObservation,
};
pub use transform::{fit_rigid_transform, transform_point, RigidTransform};

/// 3D point in meters.
pub type Point3 = nalgebra::Point3<f64>;
/// 3D vector.
pub type Vec3 = nalgebra::Vector3<f64>;
/// 3×3 matrix.
pub type Mat3 = nalgebra::Matrix3<f64>;

/// Errors raised by geometric operations.
#[derive(Debug, Clone, thiserror::Error)]
pub enum GeometryError {
    /// An operation that needs a direction received a (near-)zero-length input.
    #[error("zero-length input vector (norm {norm:.3e})")]
    ZeroLength {
        /// Norm of the offending vector.
        norm: f64,
    },
    /// A fit received a degenerate point set (collinear or too few points).
    #[error("degenerate point set: {reason}")]
    DegeneratePointSet {
        /// Human-readable description of the defect.
        reason: &'static str,
    },
    /// An input contained NaN or infinity.
    #[error("non-finite input in {context}")]
    NonFinite {
        /// Operation that rejected the value.
        context: &'static str,
    },
}

/// Convenience result alias for this crate.
pub type Result<T> = std::result::Result<T, GeometryError>;
