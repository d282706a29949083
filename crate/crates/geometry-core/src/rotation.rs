//! Rotation parameterizations: Cardan angle triplets and unit quaternions.
//!
//! Both parameterizations encode the same orthogonal matrix and convert
//! losslessly into each other away from the gimbal singularity. Cardan
//! angles are the natural unknowns for terrestrial sensor orientations
//! (small, near-level tilts); quaternions drive the inertial attitude
//! integration where angles would wrap.

use crate::{GeometryError, Mat3, Result, Vec3};

/// Elementary rotation about the x-axis that re-expresses a fixed vector in
/// axes rotated by `angle` (row convention: `[1 0 0; 0 c s; 0 -s c]`).
pub fn rot_x(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::new(1.0, 0.0, 0.0, 0.0, c, s, 0.0, -s, c)
}

/// Elementary rotation about the y-axis (same axes-rotation convention).
pub fn rot_y(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::new(c, 0.0, -s, 0.0, 1.0, 0.0, s, 0.0, c)
}

/// Elementary rotation about the z-axis (same axes-rotation convention).
pub fn rot_z(angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    Mat3::new(c, s, 0.0, -s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Cardan (ω, φ, κ) angle triplet composing `R = R3(κ)·R2(φ)·R1(ω)`.
///
/// The matrix re-expresses world-frame coordinates in the rotated sensor
/// frame: a sensor yawed by κ = +90° maps the world x-axis onto its local
/// −y axis. Angles are radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CardanRotation {
    /// Roll about the x-axis (rad), applied first.
    pub omega: f64,
    /// Pitch about the intermediate y-axis (rad).
    pub phi: f64,
    /// Yaw about the final z-axis (rad), applied last.
    pub kappa: f64,
}

impl CardanRotation {
    /// Builds a triplet from roll, pitch, yaw in radians.
    pub fn new(omega: f64, phi: f64, kappa: f64) -> Self {
        Self { omega, phi, kappa }
    }

    /// Identity rotation.
    pub fn identity() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    /// Composed direction-cosine matrix `R3(κ)·R2(φ)·R1(ω)`.
    pub fn matrix(&self) -> Mat3 {
        rot_z(self.kappa) * rot_y(self.phi) * rot_x(self.omega)
    }

    /// Recovers the angle triplet from a direction-cosine matrix.
    ///
    /// Returns angles with φ ∈ [−π/2, π/2]. At the gimbal singularity
    /// (|cos φ| ≈ 0) the split between ω and κ is not observable; this
    /// implementation then reports ω = 0 and folds the remaining yaw into κ.
    pub fn from_matrix(m: &Mat3) -> Self {
        let phi = m[(2, 0)].clamp(-1.0, 1.0).asin();
        if m[(2, 0)].abs() < 1.0 - 1e-12 {
            let omega = (-m[(2, 1)]).atan2(m[(2, 2)]);
            let kappa = (-m[(1, 0)]).atan2(m[(0, 0)]);
            Self::new(omega, phi, kappa)
        } else {
            // cos φ ≈ 0: only ω ∓ κ is determined; pick ω = 0.
            let kappa = m[(0, 1)].atan2(m[(1, 1)]);
            Self::new(0.0, phi, kappa)
        }
    }

    /// Quaternion encoding the same direction-cosine matrix.
    pub fn to_quaternion(&self) -> UnitQuaternion {
        UnitQuaternion::from_matrix(&self.matrix())
    }

    /// Partial derivatives `[∂R/∂ω, ∂R/∂φ, ∂R/∂κ]` of the composed matrix,
    /// used by the adjustment Jacobians.
    pub fn partials(&self) -> [Mat3; 3] {
        let (so, co) = self.omega.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        let (sk, ck) = self.kappa.sin_cos();
        let r1 = rot_x(self.omega);
        let r2 = rot_y(self.phi);
        let r3 = rot_z(self.kappa);
        let dr1 = Mat3::new(0.0, 0.0, 0.0, 0.0, -so, co, 0.0, -co, -so);
        let dr2 = Mat3::new(-sp, 0.0, -cp, 0.0, 0.0, 0.0, cp, 0.0, -sp);
        let dr3 = Mat3::new(-sk, ck, 0.0, -ck, -sk, 0.0, 0.0, 0.0, 0.0);
        [r3 * r2 * dr1, r3 * dr2 * r1, dr3 * r2 * r1]
    }
}

/// Unit quaternion `w + xi + yj + zk` stored in canonical sign (`w ≥ 0`).
///
/// `rotate` applies the same linear map as the matrix returned by
/// [`UnitQuaternion::matrix`], so quaternions and matrices are freely
/// interchangeable everywhere in the workspace. Composition follows the
/// Hamilton product: `(a * b).rotate(v) == a.rotate(b.rotate(v))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitQuaternion {
    /// Scalar part.
    pub w: f64,
    /// First vector component.
    pub x: f64,
    /// Second vector component.
    pub y: f64,
    /// Third vector component.
    pub z: f64,
}

impl UnitQuaternion {
    /// Normalizes the four components and fixes the canonical sign.
    ///
    /// Fails if the component vector is numerically zero or non-finite.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let norm = (w * w + x * x + y * y + z * z).sqrt();
        if !norm.is_finite() {
            return Err(GeometryError::NonFinite {
                context: "quaternion normalization",
            });
        }
        if norm < 1e-300 {
            return Err(GeometryError::ZeroLength { norm });
        }
        Ok(Self {
            w: w / norm,
            x: x / norm,
            y: y / norm,
            z: z / norm,
        }
        .canonicalized())
    }

    /// Identity rotation.
    pub fn identity() -> Self {
        Self {
            w: 1.0,
            x: 0.0,
            y: 0.0,
            z: 0.0,
        }
    }

    /// Resolves the double cover deterministically: `w > 0`, and when
    /// `w == 0` the first nonzero vector component is positive.
    pub fn canonicalized(self) -> Self {
        let flip = if self.w != 0.0 {
            self.w < 0.0
        } else if self.x != 0.0 {
            self.x < 0.0
        } else if self.y != 0.0 {
            self.y < 0.0
        } else {
            self.z < 0.0
        };
        if flip {
            Self {
                w: -self.w,
                x: -self.x,
                y: -self.y,
                z: -self.z,
            }
        } else {
            self
        }
    }

    /// Rotation of angle ‖v‖ (rad) about the axis v/‖v‖.
    ///
    /// Uses the series form of sin(θ/2)/θ below 1e-8 rad so the map is
    /// smooth through zero — important when integrating gyro increments
    /// that may vanish for stationary epochs.
    pub fn from_rotation_vector(v: &Vec3) -> Self {
        let angle = v.norm();
        let half = 0.5 * angle;
        // k = sin(θ/2)/θ, series-expanded near zero.
        let k = if angle < 1e-8 {
            0.5 - angle * angle / 48.0
        } else {
            half.sin() / angle
        };
        Self {
            w: half.cos(),
            x: k * v.x,
            y: k * v.y,
            z: k * v.z,
        }
        .canonicalized()
    }

    /// Rotation vector (axis × angle, rad) inverting
    /// [`UnitQuaternion::from_rotation_vector`]. Canonical sign keeps the
    /// returned angle in [0, π].
    pub fn rotation_vector(&self) -> Vec3 {
        let q = self.canonicalized();
        let vec_norm = (q.x * q.x + q.y * q.y + q.z * q.z).sqrt();
        let angle = 2.0 * vec_norm.atan2(q.w);
        // angle / sin(θ/2), series-expanded near zero.
        let k = if vec_norm < 1e-8 {
            2.0 + angle * angle / 12.0
        } else {
            angle / vec_norm
        };
        Vec3::new(k * q.x, k * q.y, k * q.z)
    }

    /// Hamilton product `self ⊗ rhs` (apply `rhs` first, then `self`).
    pub fn compose(&self, rhs: &Self) -> Self {
        let (aw, ax, ay, az) = (self.w, self.x, self.y, self.z);
        let (bw, bx, by, bz) = (rhs.w, rhs.x, rhs.y, rhs.z);
        Self {
            w: aw * bw - ax * bx - ay * by - az * bz,
            x: aw * bx + ax * bw + ay * bz - az * by,
            y: aw * by - ax * bz + ay * bw + az * bx,
            z: aw * bz + ax * by - ay * bx + az * bw,
        }
        .renormalized()
    }

    /// Inverse rotation (conjugate for unit quaternions).
    pub fn conjugate(&self) -> Self {
        Self {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
        .canonicalized()
    }

    /// Applies the rotation to a vector.
    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        // v' = v + 2 u × (u × v + w v) with u the vector part.
        let u = Vec3::new(self.x, self.y, self.z);
        let t = u.cross(v) * 2.0;
        v + t * self.w + u.cross(&t)
    }

    /// Direction-cosine matrix applying the same map as [`Self::rotate`].
    pub fn matrix(&self) -> Mat3 {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        Mat3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    /// Extracts the quaternion from a direction-cosine matrix using the
    /// largest-pivot (Shepperd) branch for numerical stability.
    pub fn from_matrix(m: &Mat3) -> Self {
        let trace = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
        let q = if trace > 0.0 {
            let s = (trace + 1.0).sqrt() * 2.0;
            Self {
                w: 0.25 * s,
                x: (m[(2, 1)] - m[(1, 2)]) / s,
                y: (m[(0, 2)] - m[(2, 0)]) / s,
                z: (m[(1, 0)] - m[(0, 1)]) / s,
            }
        } else if m[(0, 0)] > m[(1, 1)] && m[(0, 0)] > m[(2, 2)] {
            let s = (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt() * 2.0;
            Self {
                w: (m[(2, 1)] - m[(1, 2)]) / s,
                x: 0.25 * s,
                y: (m[(0, 1)] + m[(1, 0)]) / s,
                z: (m[(0, 2)] + m[(2, 0)]) / s,
            }
        } else if m[(1, 1)] > m[(2, 2)] {
            let s = (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt() * 2.0;
            Self {
                w: (m[(0, 2)] - m[(2, 0)]) / s,
                x: (m[(0, 1)] + m[(1, 0)]) / s,
                y: 0.25 * s,
                z: (m[(1, 2)] + m[(2, 1)]) / s,
            }
        } else {
            let s = (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt() * 2.0;
            Self {
                w: (m[(1, 0)] - m[(0, 1)]) / s,
                x: (m[(0, 2)] + m[(2, 0)]) / s,
                y: (m[(1, 2)] + m[(2, 1)]) / s,
                z: 0.25 * s,
            }
        };
        q.renormalized()
    }

    /// Cardan triplet of the matrix form of this quaternion.
    pub fn to_cardan(&self) -> CardanRotation {
        CardanRotation::from_matrix(&self.matrix())
    }

    /// Smallest rotation angle (rad) taking `self` to `other`.
    pub fn angle_to(&self, other: &Self) -> f64 {
        self.conjugate().compose(other).rotation_vector().norm()
    }

    fn renormalized(self) -> Self {
        let norm =
            (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt();
        Self {
            w: self.w / norm,
            x: self.x / norm,
            y: self.y / norm,
            z: self.z / norm,
        }
        .canonicalized()
    }
}

/// Advances an attitude quaternion by one body-rate interval:
/// `q ⊗ exp(ω·Δt / 2)` with ω the body angular rate (rad/s).
///
/// The update appends the incremental body rotation on the right, which is
/// the correct side when `q` maps body coordinates into the reference frame.
pub fn quaternion_rate_update(q: &UnitQuaternion, omega_body: &Vec3, dt: f64) -> UnitQuaternion {
    q.compose(&UnitQuaternion::from_rotation_vector(&(omega_body * dt)))
}
