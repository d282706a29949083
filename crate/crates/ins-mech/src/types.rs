//! Value types shared by the mechanization and the process model.

use geometry_core::{UnitQuaternion, Vec3};

use crate::{InsError, Result};

/// One timestamped IMU epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    /// Timestamp (s), monotone within a stream.
    pub t: f64,
    /// Specific force reading (m/s²) in the sensor frame.
    pub f: Vec3,
    /// Angular rate reading (rad/s) in the sensor frame.
    pub w: Vec3,
}

/// Full navigation state: 16 scalars.
///
/// `attitude` rotates sensor-frame vectors into the navigation frame. The
/// navigation frame is local-level and fixed at the first epoch: z up,
/// x toward the initial heading reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavState {
    /// Position (m) in the navigation frame.
    pub position: Vec3,
    /// Velocity (m/s) in the navigation frame.
    pub velocity: Vec3,
    /// Sensor→navigation rotation.
    pub attitude: UnitQuaternion,
    /// Accelerometer bias estimate (m/s²), sensor frame.
    pub accel_bias: Vec3,
    /// Gyroscope bias estimate (rad/s), sensor frame.
    pub gyro_bias: Vec3,
}

impl NavState {
    /// State at the navigation origin: zero position/velocity/biases,
    /// identity attitude.
    pub fn at_origin() -> Self {
        Self {
            position: Vec3::zeros(),
            velocity: Vec3::zeros(),
            attitude: UnitQuaternion::identity(),
            accel_bias: Vec3::zeros(),
            gyro_bias: Vec3::zeros(),
        }
    }
}

/// Local gravity and Earth rotation expressed in the navigation frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EarthModel {
    /// Gravity vector (m/s²); points down, so ≈ (0, 0, −9.81) in a z-up frame.
    pub gravity: Vec3,
    /// Earth rotation rate (rad/s) in the navigation frame.
    pub earth_rate: Vec3,
}

/// Sidereal Earth rotation rate magnitude (rad/s).
pub const EARTH_RATE_MAGNITUDE: f64 = 7.292_115e-5;

impl EarthModel {
    /// Validates the gravity-magnitude gate ‖g‖ ∈ [9.7, 9.9] m/s².
    pub fn new(gravity: Vec3, earth_rate: Vec3) -> Result<Self> {
        let gravity_norm = gravity.norm();
        if !(9.7..=9.9).contains(&gravity_norm) {
            return Err(InsError::ImplausibleEarthModel { gravity_norm });
        }
        Ok(Self {
            gravity,
            earth_rate,
        })
    }

    /// Level frame at geodetic latitude `lat` (rad): gravity straight down
    /// with magnitude `gravity_mag`, Earth rate split into its north and up
    /// components (x north, z up).
    pub fn level_at_latitude(gravity_mag: f64, lat: f64) -> Result<Self> {
        Self::new(
            Vec3::new(0.0, 0.0, -gravity_mag),
            Vec3::new(
                EARTH_RATE_MAGNITUDE * lat.cos(),
                0.0,
                EARTH_RATE_MAGNITUDE * lat.sin(),
            ),
        )
    }

    /// Convenience model that ignores Earth rotation entirely (indoor
    /// MEMS-grade scenarios where it is far below the noise floor).
    pub fn non_rotating(gravity_mag: f64) -> Result<Self> {
        Self::new(Vec3::new(0.0, 0.0, -gravity_mag), Vec3::zeros())
    }
}

/// First-order Gauss-Markov process parameters for one bias triad.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussMarkovParams {
    /// Stationary standard deviation per axis (sensor units).
    pub sigma: f64,
    /// Correlation time τ (s).
    pub tau: f64,
}

impl GaussMarkovParams {
    /// Validates σ ≥ 0 and τ > 0.
    pub fn new(sigma: f64, tau: f64) -> Result<Self> {
        if sigma < 0.0 || tau <= 0.0 || !sigma.is_finite() || !tau.is_finite() {
            return Err(InsError::InvalidGaussMarkov { sigma, tau });
        }
        Ok(Self { sigma, tau })
    }
}

/// Stochastic description of one IMU: white-noise densities plus the
/// Gauss-Markov bias processes driving the filter's process noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuNoiseModel {
    /// Accelerometer white-noise density (m/s²/√Hz).
    pub accel_noise_density: f64,
    /// Gyroscope white-noise density (rad/s/√Hz).
    pub gyro_noise_density: f64,
    /// Accelerometer bias process.
    pub accel_bias: GaussMarkovParams,
    /// Gyroscope bias process.
    pub gyro_bias: GaussMarkovParams,
}

impl Default for ImuNoiseModel {
    /// Consumer-MEMS defaults: 0.002 m/s²/√Hz accelerometer and
    /// 0.05 °/s/√Hz gyroscope densities; bias processes with 100 s
    /// correlation time and stationary spreads of 0.01 m/s² and 0.1 °/s.
    fn default() -> Self {
        Self {
            accel_noise_density: 0.002,
            gyro_noise_density: 0.05_f64.to_radians(),
            accel_bias: GaussMarkovParams {
                sigma: 0.01,
                tau: 100.0,
            },
            gyro_bias: GaussMarkovParams {
                sigma: 0.1_f64.to_radians(),
                tau: 100.0,
            },
        }
    }
}
