//! Pinhole cameras with Brown lens corrections.
//!
//! Frame conventions used throughout the crate:
//!
//! * The camera frame is right-handed with x to the right and y up on the
//!   image plane; the optical axis points along **−z into the scene**, so
//!   every visible point has a negative camera-frame z coordinate.
//! * Image coordinates are millimetres on the image plane, origin at the
//!   format centre. A point `q` in the camera frame maps to
//!   `x = xp − c·qx/qz + Δx` and `y = yp − c·qy/qz + Δy`, where `(xp, yp)`
//!   is the principal point, `c` the principal distance, and `(Δx, Δy)` the
//!   Brown correction evaluated at the *distortion-free* offsets from the
//!   principal point.
//! * Pixel coordinates place `(0, 0)` at the top-left sample with u growing
//!   right and v growing **down**; the mm/pixel conversions flip v so the
//!   mm frame keeps y up.
//!
//! The Brown correction:
//!
//! ```text
//! Δx = x'(k1·r² + k2·r⁴ + k3·r⁶) + p1(r² + 2x'²) + 2p2·x'y' + a1·x' + a2·y'
//! Δy = y'(k1·r² + k2·r⁴ + k3·r⁶) + p2(r² + 2y'²) + 2p1·x'y'
//! ```
//!
//! with `(x', y')` the offsets from the principal point (mm) and
//! `r² = x'² + y'²`. The affinity/shear pair (a1, a2) acts on x only.
//! Forward projection applies the correction directly; removing it from a
//! measured coordinate pair is the fixed-point iteration [`undistort`].

use geometry_core::{Point3, RigidTransform, Vec3};
use nalgebra::{Matrix2, Matrix2x3};
use serde::{Deserialize, Serialize};

use crate::{KinectError, Result};

/// Projection rejects points closer to the principal plane than this (m).
const MIN_PROJECTION_DEPTH: f64 = 1e-9;

/// Convergence tolerance of the fixed-point distortion removal (mm).
pub const UNDISTORT_TOLERANCE_MM: f64 = 1e-10;

/// Sweep limit of the fixed-point distortion removal.
pub const UNDISTORT_MAX_ITERATIONS: usize = 20;

/// Interior orientation and Brown coefficients of one camera (or of the
/// pattern projector, which is modelled as a camera in reverse).
///
/// Linear units are millimetres except the pixel pitch (µm). Distortion
/// coefficients carry the matching reciprocal powers: k1 mm⁻², k2 mm⁻⁴,
/// k3 mm⁻⁶, p1/p2 mm⁻¹, a1/a2 dimensionless.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    /// Principal point offset in x (mm).
    pub xp: f64,
    /// Principal point offset in y (mm).
    pub yp: f64,
    /// Principal distance (mm), strictly positive.
    pub c: f64,
    /// Radial distortion, r³ term (mm⁻²).
    pub k1: f64,
    /// Radial distortion, r⁵ term (mm⁻⁴).
    pub k2: f64,
    /// Radial distortion, r⁷ term (mm⁻⁶).
    pub k3: f64,
    /// Decentring distortion, first coefficient (mm⁻¹).
    pub p1: f64,
    /// Decentring distortion, second coefficient (mm⁻¹).
    pub p2: f64,
    /// In-plane affinity (scale difference) on x, dimensionless.
    pub a1: f64,
    /// In-plane shear on x, dimensionless.
    pub a2: f64,
    /// Pixel pitch (µm per pixel), strictly positive.
    pub pitch_um: f64,
    /// Sensor width (pixels).
    pub width: u32,
    /// Sensor height (pixels).
    pub height: u32,
}

impl CameraIntrinsics {
    /// Distortion-free camera with centred principal point.
    pub fn nominal(c: f64, pitch_um: f64, width: u32, height: u32) -> Self {
        Self {
            xp: 0.0,
            yp: 0.0,
            c,
            k1: 0.0,
            k2: 0.0,
            k3: 0.0,
            p1: 0.0,
            p2: 0.0,
            a1: 0.0,
            a2: 0.0,
            pitch_um,
            width,
            height,
        }
    }

    /// Checks positivity of the principal distance, pixel pitch, and format.
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.xp, self.yp, self.c, self.k1, self.k2, self.k3, self.p1, self.p2, self.a1,
            self.a2, self.pitch_um,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(KinectError::InvalidNetwork {
                reason: "camera parameter is not finite".into(),
            });
        }
        if self.c <= 0.0 {
            return Err(KinectError::InvalidNetwork {
                reason: format!("principal distance must be positive, got {}", self.c),
            });
        }
        if self.pitch_um <= 0.0 {
            return Err(KinectError::InvalidNetwork {
                reason: format!("pixel pitch must be positive, got {}", self.pitch_um),
            });
        }
        if self.width < 2 || self.height < 2 {
            return Err(KinectError::InvalidNetwork {
                reason: format!("format {}×{} is too small", self.width, self.height),
            });
        }
        Ok(())
    }

    /// Pixel pitch in millimetres.
    pub fn pitch_mm(&self) -> f64 {
        self.pitch_um * 1e-3
    }

    /// Pixel indices → image-plane millimetres (y up, origin mid-format).
    pub fn pixel_to_image(&self, u: f64, v: f64) -> (f64, f64) {
        let pitch = self.pitch_mm();
        let cu = 0.5 * (self.width as f64 - 1.0);
        let cv = 0.5 * (self.height as f64 - 1.0);
        ((u - cu) * pitch, (cv - v) * pitch)
    }

    /// Image-plane millimetres → pixel indices (inverse of
    /// [`CameraIntrinsics::pixel_to_image`]).
    pub fn image_to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        let pitch = self.pitch_mm();
        let cu = 0.5 * (self.width as f64 - 1.0);
        let cv = 0.5 * (self.height as f64 - 1.0);
        (cu + x / pitch, cv - y / pitch)
    }

    /// Whether a pixel index pair lies on the sensor.
    pub fn contains_pixel(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u <= self.width as f64 - 1.0 && v <= self.height as f64 - 1.0
    }
}

/// Canonical order of the estimable per-camera parameters.
pub const IOP_NAMES: [&str; 10] = ["xp", "yp", "c", "k1", "k2", "k3", "p1", "p2", "a1", "a2"];

/// Which interior/distortion parameters of one camera an adjustment
/// estimates; unselected ones stay at their input values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IopSelection(pub [bool; 10]);

impl IopSelection {
    /// Nothing selected.
    pub fn none() -> Self {
        Self([false; 10])
    }

    /// Every modelled parameter selected.
    pub fn all() -> Self {
        Self([true; 10])
    }

    /// The set that is reliably significant for consumer range cameras:
    /// principal point, principal distance, and the three radial terms.
    pub fn standard() -> Self {
        let mut sel = Self::none();
        for name in ["xp", "yp", "c", "k1", "k2", "k3"] {
            let idx = IOP_NAMES.iter().position(|n| *n == name).unwrap();
            sel.0[idx] = true;
        }
        sel
    }

    /// Selection from parameter names, e.g. `["xp", "c", "k1"]`.
    pub fn from_names<'a, I: IntoIterator<Item = &'a str>>(names: I) -> Result<Self> {
        let mut sel = Self::none();
        for name in names {
            let name = name.trim();
            if name.is_empty() {
                continue;
            }
            let idx = IOP_NAMES
                .iter()
                .position(|n| n.eq_ignore_ascii_case(name))
                .ok_or_else(|| KinectError::InvalidNetwork {
                    reason: format!("unknown camera parameter name {name:?}"),
                })?;
            sel.0[idx] = true;
        }
        Ok(sel)
    }

    /// Names of the selected parameters in canonical order.
    pub fn names(&self) -> Vec<String> {
        self.indices().map(|i| IOP_NAMES[i].to_string()).collect()
    }

    /// Indices of the selected parameters into [`IOP_NAMES`].
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, on)| **on).map(|(i, _)| i)
    }

    /// Number of selected parameters.
    pub fn count(&self) -> usize {
        self.0.iter().filter(|b| **b).count()
    }
}

/// Brown correction `(Δx, Δy)` (mm) at distortion-free offsets `(x, y)`
/// from the principal point (mm).
pub fn brown_correction(x: f64, y: f64, cam: &CameraIntrinsics) -> (f64, f64) {
    let r2 = x * x + y * y;
    let radial = (cam.k1 + (cam.k2 + cam.k3 * r2) * r2) * r2;
    let dx = x * radial + cam.p1 * (r2 + 2.0 * x * x) + 2.0 * cam.p2 * x * y + cam.a1 * x
        + cam.a2 * y;
    let dy = y * radial + cam.p2 * (r2 + 2.0 * y * y) + 2.0 * cam.p1 * x * y;
    (dx, dy)
}

/// Jacobian `∂(Δx, Δy)/∂(x, y)` of [`brown_correction`].
pub fn brown_gradient(x: f64, y: f64, cam: &CameraIntrinsics) -> Matrix2<f64> {
    let r2 = x * x + y * y;
    let radial = (cam.k1 + (cam.k2 + cam.k3 * r2) * r2) * r2;
    let dradial = cam.k1 + 2.0 * cam.k2 * r2 + 3.0 * cam.k3 * r2 * r2;
    Matrix2::new(
        radial + 2.0 * x * x * dradial + 6.0 * cam.p1 * x + 2.0 * cam.p2 * y + cam.a1,
        2.0 * x * y * dradial + 2.0 * cam.p1 * y + 2.0 * cam.p2 * x + cam.a2,
        2.0 * x * y * dradial + 2.0 * cam.p2 * x + 2.0 * cam.p1 * y,
        radial + 2.0 * y * y * dradial + 6.0 * cam.p2 * y + 2.0 * cam.p1 * x,
    )
}

/// Partials of the Brown correction with respect to the seven distortion
/// coefficients, in the order k1, k2, k3, p1, p2, a1, a2.
pub fn brown_basis(x: f64, y: f64) -> [(f64, f64); 7] {
    let r2 = x * x + y * y;
    let r4 = r2 * r2;
    let r6 = r4 * r2;
    [
        (x * r2, y * r2),
        (x * r4, y * r4),
        (x * r6, y * r6),
        (r2 + 2.0 * x * x, 2.0 * x * y),
        (2.0 * x * y, r2 + 2.0 * y * y),
        (x, 0.0),
        (y, 0.0),
    ]
}

/// Removes the Brown correction from measured principal-point offsets.
///
/// Solves `x + Δx(x, y) = x_obs` by damping-free fixed-point sweeps
/// starting at the measured pair, stopping when a sweep moves both
/// coordinates by less than [`UNDISTORT_TOLERANCE_MM`]. Fails with
/// [`KinectError::DistortionDivergence`] when
/// [`UNDISTORT_MAX_ITERATIONS`] sweeps do not settle, which happens only
/// when the distortion polynomial is no longer a contraction (far outside
/// the calibrated field).
pub fn undistort(x_obs: f64, y_obs: f64, cam: &CameraIntrinsics) -> Result<(f64, f64)> {
    let (mut x, mut y) = (x_obs, y_obs);
    let mut last_step = f64::INFINITY;
    for _ in 0..UNDISTORT_MAX_ITERATIONS {
        let (dx, dy) = brown_correction(x, y, cam);
        let (nx, ny) = (x_obs - dx, y_obs - dy);
        last_step = (nx - x).abs().max((ny - y).abs());
        x = nx;
        y = ny;
        if last_step < UNDISTORT_TOLERANCE_MM {
            return Ok((x, y));
        }
    }
    Err(KinectError::DistortionDivergence {
        iterations: UNDISTORT_MAX_ITERATIONS,
        last_step,
    })
}

/// Distortion-free offsets from the principal point, with the camera-frame
/// behind/beside check shared by all projection paths.
fn ideal_offsets(q: &Vec3, cam: &CameraIntrinsics) -> Result<(f64, f64)> {
    if q.z >= -MIN_PROJECTION_DEPTH {
        return Err(KinectError::NotInFrontOfCamera { z: q.z });
    }
    Ok((-cam.c * q.x / q.z, -cam.c * q.y / q.z))
}

/// Projects a camera-frame point (m, z negative into the scene) to image
/// millimetres, Brown correction included.
pub fn project_camera_frame(q: &Vec3, cam: &CameraIntrinsics) -> Result<(f64, f64)> {
    let (xi, eta) = ideal_offsets(q, cam)?;
    let (dx, dy) = brown_correction(xi, eta, cam);
    Ok((cam.xp + xi + dx, cam.yp + eta + dy))
}

/// Projects an object-space point through a camera pose to image
/// millimetres. The pose maps object coordinates into the camera frame.
pub fn collinearity_project(
    p: &Point3,
    pose: &RigidTransform,
    cam: &CameraIntrinsics,
) -> Result<(f64, f64)> {
    let q = pose.to_local(p);
    project_camera_frame(&q.coords, cam)
}

/// Depth-map pixel and range → point in the IR camera frame (m).
///
/// The depth image is cropped vertically relative to the IR sensor by a
/// correlation-window null band: row v of the depth map is row
/// `v + null_band` of the IR image. The ray through the shifted,
/// distortion-corrected pixel is scaled so its z component equals −z
/// (the camera looks along −z; `z` itself is the positive range to the
/// principal plane).
pub fn depth_pixel_to_point(
    u: f64,
    v: f64,
    z: f64,
    cam: &CameraIntrinsics,
    null_band: f64,
) -> Result<Point3> {
    if !(z > 0.0) {
        return Err(KinectError::InvalidArgument {
            reason: format!("depth must be positive, got {z}"),
        });
    }
    let (x_mm, y_mm) = cam.pixel_to_image(u, v + null_band);
    let (xi, eta) = undistort(x_mm - cam.xp, y_mm - cam.yp, cam)?;
    Ok(Point3::new(z * xi / cam.c, z * eta / cam.c, -z))
}

/// Forward projection with everything the bundle needs to linearize it.
pub(crate) struct Projection {
    /// Final image coordinates (mm).
    pub x: f64,
    /// Final image coordinates (mm).
    pub y: f64,
    /// Distortion-free offsets from the principal point (mm).
    pub ideal: (f64, f64),
    /// `I + ∂Δ/∂(x', y')` at the ideal offsets.
    pub chain: Matrix2<f64>,
    /// `∂(x, y)/∂q` (mm per m), Brown chain included.
    pub jac_q: Matrix2x3<f64>,
}

pub(crate) fn project_with_jacobian(q: &Vec3, cam: &CameraIntrinsics) -> Result<Projection> {
    let (xi, eta) = ideal_offsets(q, cam)?;
    let (dx, dy) = brown_correction(xi, eta, cam);
    let s = -cam.c / q.z;
    let j_ideal = Matrix2x3::new(s, 0.0, -s * q.x / q.z, 0.0, s, -s * q.y / q.z);
    let chain = Matrix2::identity() + brown_gradient(xi, eta, cam);
    Ok(Projection {
        x: cam.xp + xi + dx,
        y: cam.yp + eta + dy,
        ideal: (xi, eta),
        chain,
        jac_q: chain * j_ideal,
    })
}

/// Partials of the projected coordinates with respect to the camera's own
/// selected parameters, aligned with `selection.indices()`.
pub(crate) fn iop_partials(
    proj: &Projection,
    cam: &CameraIntrinsics,
    selection: &IopSelection,
) -> Vec<(f64, f64)> {
    let (xi, eta) = proj.ideal;
    let basis = brown_basis(xi, eta);
    selection
        .indices()
        .map(|idx| match idx {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => {
                // x' scales linearly with c, and the change feeds through
                // the distortion polynomial.
                let v = proj.chain * nalgebra::Vector2::new(xi / cam.c, eta / cam.c);
                (v.x, v.y)
            }
            _ => basis[idx - 3],
        })
        .collect()
}

/// Distortion removal plus the Jacobian of the corrected offsets with
/// respect to the measured offsets: `(I + ∂Δ/∂(x,y))⁻¹` at the solution.
pub(crate) fn undistort_with_jacobian(
    x_obs: f64,
    y_obs: f64,
    cam: &CameraIntrinsics,
) -> Result<((f64, f64), Matrix2<f64>)> {
    let (xi, eta) = undistort(x_obs, y_obs, cam)?;
    let chain = Matrix2::identity() + brown_gradient(xi, eta, cam);
    let inv = chain.try_inverse().ok_or_else(|| KinectError::SingularSystem {
        diagnostic: format!("distortion chain singular at offsets ({xi:.3}, {eta:.3}) mm"),
    })?;
    Ok(((xi, eta), inv))
}
