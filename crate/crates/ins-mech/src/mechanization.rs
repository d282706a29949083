//! Strapdown mechanization in a local-level navigation frame.
//!
//! One prediction step treats specific force and angular rate as constant
//! over the sample interval: velocity and position integrate a constant
//! acceleration, attitude applies the quaternion exponential of the body
//! rotation increment. The specific force is rotated at the mid-interval
//! attitude, which removes the leading-order commutation error of the
//! piecewise-constant scheme while keeping it a one-sample update.

use geometry_core::{quaternion_rate_update, UnitQuaternion, Vec3};

use crate::types::{EarthModel, GaussMarkovParams, ImuSample, NavState};
use crate::{ImuIntrinsics, InsError, Result};

/// Recovers true specific force from a raw accelerometer reading.
pub fn correct_accel(raw: &Vec3, intr: &ImuIntrinsics) -> Result<Vec3> {
    intr.accel.validate()?;
    intr.accel.correct(raw)
}

/// Recovers true angular rate from a raw gyroscope reading.
pub fn correct_gyro(raw: &Vec3, intr: &ImuIntrinsics) -> Result<Vec3> {
    intr.gyro.validate()?;
    intr.gyro.correct(raw)
}

/// Advances the navigation state by one IMU interval.
///
/// Discrete form: with bias-corrected body rate ω (Earth rate removed) and
/// specific force f,
///
/// ```text
/// a    = R_mid·(f − b_a) − 2 ω_e × v + g
/// x +=  v·Δt + a·Δt²/2
/// v +=  a·Δt
/// q  =  q ⊗ exp(ω·Δt/2)
/// ```
///
/// where `R_mid` is the attitude advanced by half the rotation increment.
/// Biases pass through unchanged; their stochastic evolution lives in
/// [`propagate_bias`].
pub fn strapdown_predict(
    state: &NavState,
    sample: &ImuSample,
    dt: f64,
    earth: &EarthModel,
) -> Result<NavState> {
    if !(dt > 0.0 && dt <= 0.1) {
        return Err(InsError::TimeStepGate { dt });
    }
    // Earth rate seen by the gyros, removed in the body frame.
    let earth_rate_body = state.attitude.conjugate().rotate(&earth.earth_rate);
    let omega_body = sample.w - state.gyro_bias - earth_rate_body;
    let force_body = sample.f - state.accel_bias;

    let attitude_mid = quaternion_rate_update(&state.attitude, &omega_body, 0.5 * dt);
    let accel_nav = attitude_mid.rotate(&force_body)
        - 2.0 * earth.earth_rate.cross(&state.velocity)
        + earth.gravity;

    Ok(NavState {
        position: state.position + state.velocity * dt + accel_nav * (0.5 * dt * dt),
        velocity: state.velocity + accel_nav * dt,
        attitude: quaternion_rate_update(&state.attitude, &omega_body, dt),
        accel_bias: state.accel_bias,
        gyro_bias: state.gyro_bias,
    })
}

/// Mid-interval attitude used by [`strapdown_predict`]; exposed so the
/// process model linearizes exactly the implemented map.
pub fn midpoint_attitude(state: &NavState, omega_body: &Vec3, dt: f64) -> UnitQuaternion {
    quaternion_rate_update(&state.attitude, omega_body, 0.5 * dt)
}

/// First-order Gauss-Markov propagation over `dt`: returns the conditional
/// mean `e^{−dt/τ}·bias` and the per-axis driving variance
/// `σ²·(1 − e^{−2dt/τ})`.
pub fn propagate_bias(bias: &Vec3, dt: f64, gm: &GaussMarkovParams) -> (Vec3, f64) {
    debug_assert!(dt >= 0.0, "negative propagation interval");
    let decay = (-dt / gm.tau).exp();
    let variance = gm.sigma * gm.sigma * (1.0 - decay * decay);
    (bias * decay, variance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sample(f: Vec3, w: Vec3) -> ImuSample {
        ImuSample { t: 0.0, f, w }
    }

    #[test]
    fn dt_gate() {
        let earth = EarthModel::non_rotating(9.81).unwrap();
        let s = NavState::at_origin();
        let m = sample(Vec3::zeros(), Vec3::zeros());
        assert!(strapdown_predict(&s, &m, 0.0, &earth).is_err());
        assert!(strapdown_predict(&s, &m, 0.2, &earth).is_err());
        assert!(strapdown_predict(&s, &m, 0.01, &earth).is_ok());
    }

    #[test]
    fn free_fall_single_step() {
        let earth = EarthModel::non_rotating(9.81).unwrap();
        let s = NavState::at_origin();
        let m = sample(Vec3::zeros(), Vec3::zeros());
        let dt = 0.01;
        let next = strapdown_predict(&s, &m, dt, &earth).unwrap();
        assert_relative_eq!(next.position.z, -0.5 * 9.81 * dt * dt, epsilon = 1e-15);
        assert_relative_eq!(next.velocity.z, -9.81 * dt, epsilon = 1e-15);
        assert_relative_eq!(next.position.x, 0.0);
    }

    #[test]
    fn level_stationary_imu_stays_put() {
        let earth = EarthModel::level_at_latitude(9.81, 51_f64.to_radians()).unwrap();
        let s = NavState::at_origin();
        // Accelerometers read the gravity reaction; gyros read Earth rate.
        let m = sample(-earth.gravity, earth.earth_rate);
        let next = strapdown_predict(&s, &m, 0.01, &earth).unwrap();
        assert!(next.position.norm() < 1e-9);
        assert!(next.velocity.norm() < 1e-9);
        assert!(next.attitude.angle_to(&s.attitude) < 1e-12);
    }

    #[test]
    fn biases_are_untouched_by_prediction() {
        let earth = EarthModel::non_rotating(9.81).unwrap();
        let mut s = NavState::at_origin();
        s.accel_bias = Vec3::new(0.01, -0.02, 0.03);
        s.gyro_bias = Vec3::new(1e-3, 2e-3, -1e-3);
        let m = sample(Vec3::new(0.0, 0.0, 9.81), Vec3::zeros());
        let next = strapdown_predict(&s, &m, 0.01, &earth).unwrap();
        assert_eq!(next.accel_bias, s.accel_bias);
        assert_eq!(next.gyro_bias, s.gyro_bias);
    }

    #[test]
    fn gauss_markov_limits() {
        let gm = GaussMarkovParams::new(0.05, 100.0).unwrap();
        let b = Vec3::new(0.02, -0.01, 0.0);
        let (m0, v0) = propagate_bias(&b, 0.0, &gm);
        assert_relative_eq!(m0, b);
        assert_relative_eq!(v0, 0.0);
        let (minf, vinf) = propagate_bias(&b, 1e9, &gm);
        assert!(minf.norm() < 1e-12);
        assert_relative_eq!(vinf, gm.sigma * gm.sigma, epsilon = 1e-12);
        let (mtau, vtau) = propagate_bias(&b, 100.0, &gm);
        assert_relative_eq!(mtau, b * (-1.0f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(
            vtau,
            gm.sigma * gm.sigma * (1.0 - (-2.0f64).exp()),
            epsilon = 1e-15
        );
    }
}
