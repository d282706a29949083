//! System calibration of a structured-light range camera.
//!
//! The device bundles three optical components rigidly mounted on one bar:
//! an infrared (IR) camera, an infrared pattern projector offset along the
//! bar, and a colour (RGB) camera. Depth comes from triangulating the
//! projected pattern against the IR image, so every depth pixel is really a
//! stereo measurement between the IR camera and the projector. The factory
//! model behind that triangulation — principal point, principal distance,
//! lens distortion, and the projector's pose relative to the IR camera —
//! carries small errors that bend reconstructed surfaces and misalign the
//! colour overlay.
//!
//! This crate estimates all of it at once from observations of a flat
//! checkerboard: interior orientation and Brown distortion coefficients for
//! the IR and RGB cameras, and the boresight rotation and lever arm of both
//! the projector and the RGB camera, together with board poses, target
//! coordinates, and the board plane. Checkerboard corners contribute
//! parametric collinearity rows; depth pixels contribute condition rows in
//! which the sampled surface point is eliminated analytically by
//! intersecting the IR ray with the board plane, leaving a reprojection
//! condition on the synthesized projector coordinates. A free-network
//! minimum-norm datum handles the seven-fold gauge freedom (translation,
//! rotation, scale), variance components are re-estimated per observation
//! group, and standardized residuals are screened for blunders.
//!
//! Supporting machinery: pixel-grid conversions with the vertical null-band
//! offset of the depth map, iterative distortion removal, disparity
//! quantization stochastics, misclosure diagnostics between IR-ray and
//! projector-ray surface intersections, and plain-text/JSON I/O for
//! networks, calibrated rigs, and result reports.

pub mod bundle;
pub mod camera;
pub mod network;
pub mod rig;

pub use bundle::{
    misclosure_rms, misclosure_vectors, solve_kinect_bundle, BundleOptions, BundleReport,
    BundleResult, CameraReport, KinectGroup, KinectResidual, RejectedObservation, RopReport,
    GROUP_NAMES,
};
pub use camera::{
    brown_basis, brown_correction, brown_gradient, collinearity_project, depth_pixel_to_point,
    project_camera_frame, undistort, CameraIntrinsics, IopSelection, IOP_NAMES,
    UNDISTORT_MAX_ITERATIONS, UNDISTORT_TOLERANCE_MM,
};
pub use network::{
    BoardObservation, BoardTarget, CameraId, DepthSample, KinectNetwork, KinectStochasticModel,
    PoseSetup,
};
pub use rig::{
    backproject_to_projector, depth_precision_sigma, quantized_disparity_variance, KinectRig,
    QuantizationModel, RelativeOrientation, DEFAULT_BASELINE_GATE, DEFAULT_NULL_BAND,
};

/// Errors raised by camera operations, network construction, and the bundle.
#[derive(Debug, Clone, thiserror::Error)]
pub enum KinectError {
    /// Network or rig shape violates a prerequisite.
    #[error("invalid network: {reason}")]
    InvalidNetwork {
        /// Violated prerequisite.
        reason: String,
    },
    /// A scalar argument to a geometric operation is outside its domain.
    #[error("invalid argument: {reason}")]
    InvalidArgument {
        /// What went wrong.
        reason: String,
    },
    /// A point cannot be projected because it lies beside or behind the
    /// camera (the image plane sees the half-space z < 0).
    #[error("point with camera-frame z = {z:.3e} m cannot be projected")]
    NotInFrontOfCamera {
        /// Camera-frame z coordinate of the offending point (m).
        z: f64,
    },
    /// The fixed-point distortion removal failed to settle.
    #[error("distortion removal did not converge after {iterations} iterations (last step {last_step:.3e} mm)")]
    DistortionDivergence {
        /// Iterations performed.
        iterations: usize,
        /// Coordinate movement of the final sweep (mm).
        last_step: f64,
    },
    /// The normal system lost more rank than the free-network datum explains.
    #[error("datum defect {detected} exceeds the expected {expected}: {diagnostic}")]
    DatumDefectExceeded {
        /// Numerically detected rank defect.
        detected: usize,
        /// Gauge freedoms a free network is allowed.
        expected: usize,
        /// Parameters most involved in the surplus null-space directions.
        diagnostic: String,
    },
    /// A matrix operation degenerated outside the expected datum defect.
    #[error("singular system: {diagnostic}")]
    SingularSystem {
        /// Description of the failure.
        diagnostic: String,
    },
    /// The inner Gauss–Newton iteration did not meet its tolerance.
    #[error("no convergence after {iterations} iterations (last max correction {last_correction:.3e})")]
    NoConvergence {
        /// Iterations performed.
        iterations: usize,
        /// Largest parameter correction of the final iteration.
        last_correction: f64,
    },
    /// The synthesized projector observations kept moving between passes.
    #[error("projector-coordinate synthesis did not settle after {iterations} passes (shift history {history:?})")]
    SynthesisNoConvergence {
        /// Outer passes performed.
        iterations: usize,
        /// Largest synthesized-coordinate shift after each pass (mm).
        history: Vec<f64>,
    },
    /// Variance-component estimation hit a group without redundancy.
    #[error("variance component undefined for group {group} (redundancy {redundancy:.3e})")]
    UndefinedVarianceComponent {
        /// Group name.
        group: &'static str,
        /// Accumulated redundancy of the group.
        redundancy: f64,
    },
    /// Text or JSON I/O parse failure.
    #[error("parse error at line {line}: {reason}")]
    Parse {
        /// 1-based line number (0 when unknown).
        line: usize,
        /// What went wrong.
        reason: String,
    },
    /// A geometric primitive operation failed.
    #[error(transparent)]
    Geometry(#[from] geometry_core::GeometryError),
}

/// Convenience result alias for this crate.
pub type Result<T> = std::result::Result<T, KinectError>;
