//! Deterministic IMU triad calibration model and its inversion.
//!
//! Raw readings of one triad relate to the true vector `u` through bias,
//! per-axis scale error, and small inter-axis non-orthogonality couplings
//! in lower-triangular form:
//!
//! ```text
//! r_x = b_x + (1+s_x)·u_x
//! r_y = b_y + (1+s_y)·u_y + θ_yx·u_x
//! r_z = b_z + (1+s_z)·u_z + θ_zx·u_x + θ_zy·u_y
//! ```
//!
//! The triangular structure makes the inversion exact forward substitution
//! rather than a matrix solve. Both the accelerometer and the gyroscope
//! triads use the same structure with independent parameters.

use geometry_core::Vec3;

use crate::{InsError, Result};

/// Bias, scale-error, and non-orthogonality parameters of one sensor triad.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TriadIntrinsics {
    /// Additive bias per axis (sensor units).
    pub bias: Vec3,
    /// Dimensionless scale errors `s` (reading scales by 1 + s).
    pub scale: Vec3,
    /// Non-orthogonality couplings (rad): `[θ_yx, θ_zx, θ_zy]`.
    pub nonorth: Vec3,
}

impl TriadIntrinsics {
    /// Forward model: maps a true vector to the raw reading.
    pub fn apply(&self, truth: &Vec3) -> Vec3 {
        Vec3::new(
            self.bias.x + (1.0 + self.scale.x) * truth.x,
            self.bias.y + (1.0 + self.scale.y) * truth.y + self.nonorth.x * truth.x,
            self.bias.z
                + (1.0 + self.scale.z) * truth.z
                + self.nonorth.y * truth.x
                + self.nonorth.z * truth.y,
        )
    }

    /// Inverse model by forward substitution down the triangle.
    pub fn correct(&self, raw: &Vec3) -> Result<Vec3> {
        for (axis, s) in [self.scale.x, self.scale.y, self.scale.z].iter().enumerate() {
            if (1.0 + s).abs() < 1e-12 {
                return Err(InsError::NonInvertibleScale { axis });
            }
        }
        let x = (raw.x - self.bias.x) / (1.0 + self.scale.x);
        let y = (raw.y - self.bias.y - self.nonorth.x * x) / (1.0 + self.scale.y);
        let z = (raw.z - self.bias.z - self.nonorth.y * x - self.nonorth.z * y)
            / (1.0 + self.scale.z);
        Ok(Vec3::new(x, y, z))
    }

    /// Plausibility gate: non-orthogonality angles stay below 0.1 rad.
    pub fn validate(&self) -> Result<()> {
        if self.nonorth.amax() >= 0.1 {
            return Err(InsError::ImplausibleIntrinsics {
                reason: "non-orthogonality angle ≥ 0.1 rad",
            });
        }
        Ok(())
    }
}

/// Calibration parameters of a complete six-axis IMU.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ImuIntrinsics {
    /// Accelerometer triad parameters.
    pub accel: TriadIntrinsics,
    /// Gyroscope triad parameters.
    pub gyro: TriadIntrinsics,
}

impl ImuIntrinsics {
    /// Gate on both triads.
    pub fn validate(&self) -> Result<()> {
        self.accel.validate()?;
        self.gyro.validate()
    }
}
