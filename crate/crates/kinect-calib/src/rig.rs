//! The assembled device: three optical components on one rigid bar.
//!
//! Everything is expressed relative to the IR camera. A component's frame
//! relates to the IR frame through a boresight rotation (small Cardan
//! angles) and a lever arm (the baseline vector, metres, resolved in the IR
//! frame): a point `p` in IR coordinates appears in the component frame as
//! `ΔR·(p − b)`.
//!
//! The pattern projector has no image readout, so its interior orientation
//! cannot be observed directly; it is pinned to the IR camera's nominal
//! values by default and only estimated when explicitly selected. Depth is
//! triangulated from pattern disparity, which the hardware measures in
//! coarse fractional-pixel steps — [`quantized_disparity_variance`] models
//! the resulting rounding noise on top of the matching noise.

use geometry_core::{CardanRotation, Mat3, Point3, Vec3};
use serde::{Deserialize, Serialize};

use crate::camera::{project_camera_frame, CameraIntrinsics};
use crate::{KinectError, Result};

/// Plausibility gate on the IR→projector baseline length (m): consumer
/// structured-light bars put the projector 5–10 cm from the IR camera.
pub const DEFAULT_BASELINE_GATE: (f64, f64) = (0.05, 0.10);

/// Default vertical crop of the depth map against the IR sensor (pixels).
/// The stereo correlator cannot match a window-wide band at one edge, and
/// the shipped depth image drops it.
pub const DEFAULT_NULL_BAND: f64 = 32.0;

/// Boresight rotation and lever arm of one component relative to the IR
/// camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeOrientation {
    /// Boresight roll about x (rad).
    pub d_omega: f64,
    /// Boresight pitch about y (rad).
    pub d_phi: f64,
    /// Boresight yaw about z (rad).
    pub d_kappa: f64,
    /// Lever arm x component in the IR frame (m).
    pub bx: f64,
    /// Lever arm y component (m).
    pub by: f64,
    /// Lever arm z component (m).
    pub bz: f64,
}

impl RelativeOrientation {
    /// Pure translation along the IR x-axis, no boresight rotation.
    pub fn along_x(bx: f64) -> Self {
        Self {
            d_omega: 0.0,
            d_phi: 0.0,
            d_kappa: 0.0,
            bx,
            by: 0.0,
            bz: 0.0,
        }
    }

    /// The boresight Cardan triplet.
    pub fn rotation(&self) -> CardanRotation {
        CardanRotation::new(self.d_omega, self.d_phi, self.d_kappa)
    }

    /// The boresight direction-cosine matrix (IR frame → component frame).
    pub fn matrix(&self) -> Mat3 {
        self.rotation().matrix()
    }

    /// The lever arm as a vector (m, IR frame).
    pub fn baseline(&self) -> Vec3 {
        Vec3::new(self.bx, self.by, self.bz)
    }

    fn validate(&self, name: &str) -> Result<()> {
        let finite = [self.d_omega, self.d_phi, self.d_kappa, self.bx, self.by, self.bz]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(KinectError::InvalidNetwork {
                reason: format!("relative orientation {name} is not finite"),
            });
        }
        Ok(())
    }
}

/// Disparity measurement stochastics (pixels): Gaussian matching noise plus
/// uniform rounding to the hardware's fractional-pixel step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizationModel {
    /// Standard deviation of the pattern-matching noise (px).
    pub sigma_disparity: f64,
    /// Disparity rounding step (px); 0 disables rounding.
    pub q: f64,
}

impl QuantizationModel {
    /// Checks the noise terms for sign and finiteness.
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_disparity.is_finite() && self.q.is_finite()) {
            return Err(KinectError::InvalidNetwork {
                reason: "quantization model is not finite".into(),
            });
        }
        if self.sigma_disparity <= 0.0 {
            return Err(KinectError::InvalidNetwork {
                reason: format!(
                    "disparity noise must be positive, got {}",
                    self.sigma_disparity
                ),
            });
        }
        if self.q < 0.0 {
            return Err(KinectError::InvalidNetwork {
                reason: format!("quantization step must be non-negative, got {}", self.q),
            });
        }
        Ok(())
    }
}

/// Total disparity variance (px²): matching noise plus the `q²/12`
/// variance of rounding to steps of width q under a uniformly distributed
/// phase.
pub fn quantized_disparity_variance(model: &QuantizationModel) -> f64 {
    model.sigma_disparity * model.sigma_disparity + model.q * model.q / 12.0
}

/// Predicted depth precision (m, one sigma) at range `z` (m) for a
/// triangulating depth camera: `σ_Z = Z²·pitch·σ_d / (c·b)` with the
/// effective disparity noise from [`quantized_disparity_variance`].
pub fn depth_precision_sigma(
    z: f64,
    c_mm: f64,
    pitch_um: f64,
    baseline_m: f64,
    quant: &QuantizationModel,
) -> f64 {
    let sigma_px = quantized_disparity_variance(quant).sqrt();
    z * z * (pitch_um * 1e-3) * sigma_px / (c_mm * baseline_m)
}

/// Full device description: three cameras, two relative orientations, and
/// the depth-map crop. This is the artifact a calibration produces and the
/// sensor-fusion consumers load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinectRig {
    /// IR camera interior orientation.
    pub ir: CameraIntrinsics,
    /// Pattern projector modelled as a camera; fixed at IR-nominal values
    /// unless explicitly selected for estimation.
    pub pro: CameraIntrinsics,
    /// RGB camera interior orientation.
    pub rgb: CameraIntrinsics,
    /// IR → projector mounting.
    pub rop_pro: RelativeOrientation,
    /// IR → RGB mounting.
    pub rop_rgb: RelativeOrientation,
    /// Vertical depth-map crop (pixels); see [`DEFAULT_NULL_BAND`].
    pub null_band: f64,
}

impl KinectRig {
    /// Manufacturer-nominal rig: 6 mm IR/projector optics on 10.4 µm VGA
    /// sensors 7.5 cm apart, a 2.9 mm RGB camera on a 5.6 µm VGA sensor
    /// 2.5 cm away, no boresight rotations, no distortion.
    pub fn nominal() -> Self {
        Self {
            ir: CameraIntrinsics::nominal(6.0, 10.4, 640, 480),
            pro: CameraIntrinsics::nominal(6.0, 10.4, 640, 480),
            rgb: CameraIntrinsics::nominal(2.9, 5.6, 640, 480),
            rop_pro: RelativeOrientation::along_x(0.075),
            rop_rgb: RelativeOrientation::along_x(0.025),
            null_band: DEFAULT_NULL_BAND,
        }
    }

    /// Validates the cameras, mountings, and the baseline plausibility
    /// gate `‖b(IR→projector)‖ ∈ [gate.0, gate.1]` (m).
    pub fn validate(&self, baseline_gate: (f64, f64)) -> Result<()> {
        self.ir.validate()?;
        self.pro.validate()?;
        self.rgb.validate()?;
        self.rop_pro.validate("ir→projector")?;
        self.rop_rgb.validate("ir→rgb")?;
        if !self.null_band.is_finite() {
            return Err(KinectError::InvalidNetwork {
                reason: "null band is not finite".into(),
            });
        }
        let b = self.rop_pro.baseline().norm();
        if !(b >= baseline_gate.0 && b <= baseline_gate.1) {
            return Err(KinectError::InvalidNetwork {
                reason: format!(
                    "projector baseline {b:.4} m outside the plausible range [{}, {}] m",
                    baseline_gate.0, baseline_gate.1
                ),
            });
        }
        Ok(())
    }

    /// Serializes the rig as pretty-printed JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("rig serialization cannot fail")
    }

    /// Parses a rig from JSON.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| KinectError::Parse {
            line: e.line(),
            reason: e.to_string(),
        })
    }
}

/// Projects a point given in the IR camera frame (m) into the projector's
/// image plane (mm).
///
/// This synthesizes the projector-side coordinate of a depth measurement:
/// the depth pixel fixes a point in the IR frame, and the pattern that
/// produced it must have left the projector along the ray through this
/// image position.
pub fn backproject_to_projector(p: &Point3, rig: &KinectRig) -> Result<(f64, f64)> {
    let q = rig.rop_pro.matrix() * (p.coords - rig.rop_pro.baseline());
    project_camera_frame(&q, &rig.pro)
}
