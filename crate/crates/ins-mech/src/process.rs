//! Linearized process model for the 15-dimensional error state.
//!
//! Error-state ordering (all blocks 3-wide):
//!
//! | offset | block | meaning                                   |
//! |--------|-------|-------------------------------------------|
//! | 0      | δψ    | attitude error, navigation frame (rad)    |
//! | 3      | δp    | position error (m)                        |
//! | 6      | δv    | velocity error (m/s)                      |
//! | 9      | δb_a  | accelerometer bias error (m/s²)           |
//! | 12     | δb_g  | gyroscope bias error (rad/s)              |
//!
//! The transition matrix is the exact Jacobian of one discrete
//! [`strapdown_predict`](crate::strapdown_predict) step followed by the
//! Gauss-Markov bias decay, with the attitude error defined
//! multiplicatively on the left: `q_true = exp(δψ) ⊗ q̂`. The only dropped
//! term is the attitude dependence of the Earth-rate removal, whose
//! magnitude `‖ω_e‖·Δt ≈ 7e−7` sits well below the finite-difference
//! verification tolerance.

use geometry_core::{Mat3, Vec3};
use nalgebra::SMatrix;

use crate::types::{EarthModel, ImuNoiseModel, ImuSample, NavState};
use crate::{InsError, Result};

/// 15×15 matrix over the error state.
pub type ErrorStateMat = SMatrix<f64, 15, 15>;

/// Offset of the attitude-error block.
pub const ATT: usize = 0;
/// Offset of the position-error block.
pub const POS: usize = 3;
/// Offset of the velocity-error block.
pub const VEL: usize = 6;
/// Offset of the accelerometer-bias-error block.
pub const BA: usize = 9;
/// Offset of the gyroscope-bias-error block.
pub const BG: usize = 12;

/// Skew-symmetric cross-product matrix `[v×]`.
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Right Jacobian of the rotation-vector exponential:
/// `Exp(θ + δ) ≈ Exp(θ)·Exp(J_r(θ)·δ)`.
pub fn right_jacobian(theta: &Vec3) -> Mat3 {
    let angle = theta.norm();
    let k = skew(theta);
    if angle < 1e-6 {
        Mat3::identity() - k * 0.5 + k * k / 6.0
    } else {
        let a2 = angle * angle;
        Mat3::identity() - k * ((1.0 - angle.cos()) / a2)
            + k * k * ((angle - angle.sin()) / (a2 * angle))
    }
}

fn set_block(m: &mut ErrorStateMat, row: usize, col: usize, b: &Mat3) {
    for r in 0..3 {
        for c in 0..3 {
            m[(row + r, col + c)] = b[(r, c)];
        }
    }
}

/// Builds the discrete error-state transition Φ and process-noise Q for one
/// interval, linearized at `state` with the given sample.
///
/// Φ is the Jacobian of `strapdown_predict` composed with the
/// deterministic Gauss-Markov decay of both bias blocks. Q collects the
/// white-noise contributions (gyro → attitude, accelerometer → velocity
/// and position with their exact constant-acceleration cross term) and the
/// Gauss-Markov driving variances.
pub fn process_model(
    state: &NavState,
    sample: &ImuSample,
    dt: f64,
    earth: &EarthModel,
    noise: &ImuNoiseModel,
) -> Result<(ErrorStateMat, ErrorStateMat)> {
    if !(dt > 0.0 && dt <= 0.1) {
        return Err(InsError::TimeStepGate { dt });
    }
    let earth_rate_body = state.attitude.conjugate().rotate(&earth.earth_rate);
    let omega_body = sample.w - state.gyro_bias - earth_rate_body;
    let force_body = sample.f - state.accel_bias;

    let q_mid = geometry_core::quaternion_rate_update(&state.attitude, &omega_body, 0.5 * dt);
    let q_new = geometry_core::quaternion_rate_update(&state.attitude, &omega_body, dt);
    let r_mid = q_mid.matrix();
    let r_new = q_new.matrix();
    let force_nav = q_mid.rotate(&force_body);

    // Acceleration sensitivities of the discrete step.
    let da_dpsi = -skew(&force_nav);
    let da_dv = -2.0 * skew(&earth.earth_rate);
    let da_dba = -r_mid;
    // Midpoint attitude shifts with gyro-bias error: the mid rotation
    // vector is ω·Δt/2, so δa = R_mid·[f_b×]·J_r(ω·Δt/2)·(Δt/2)·δb_g.
    let da_dbg = r_mid * skew(&force_body) * right_jacobian(&(omega_body * (0.5 * dt))) * (0.5 * dt);

    let decay_a = (-dt / noise.accel_bias.tau).exp();
    let decay_g = (-dt / noise.gyro_bias.tau).exp();

    let mut f = ErrorStateMat::identity();
    // Attitude rows.
    set_block(
        &mut f,
        ATT,
        BG,
        &(-(r_new * right_jacobian(&(omega_body * dt)) * dt)),
    );
    // Position rows: δp += δv·Δt + δa·Δt²/2.
    let half_dt2 = 0.5 * dt * dt;
    set_block(&mut f, POS, ATT, &(da_dpsi * half_dt2));
    set_block(&mut f, POS, VEL, &(Mat3::identity() * dt + da_dv * half_dt2));
    set_block(&mut f, POS, BA, &(da_dba * half_dt2));
    set_block(&mut f, POS, BG, &(da_dbg * half_dt2));
    // Velocity rows: δv += δa·Δt.
    set_block(&mut f, VEL, ATT, &(da_dpsi * dt));
    set_block(&mut f, VEL, VEL, &(Mat3::identity() + da_dv * dt));
    set_block(&mut f, VEL, BA, &(da_dba * dt));
    set_block(&mut f, VEL, BG, &(da_dbg * dt));
    // Bias rows: exponential decay toward zero mean.
    set_block(&mut f, BA, BA, &(Mat3::identity() * decay_a));
    set_block(&mut f, BG, BG, &(Mat3::identity() * decay_g));

    let mut q = ErrorStateMat::zeros();
    let gyro_var = noise.gyro_noise_density * noise.gyro_noise_density * dt;
    let accel_var = noise.accel_noise_density * noise.accel_noise_density * dt;
    set_block(&mut q, ATT, ATT, &(Mat3::identity() * gyro_var));
    set_block(&mut q, VEL, VEL, &(Mat3::identity() * accel_var));
    set_block(
        &mut q,
        POS,
        POS,
        &(Mat3::identity() * (accel_var * dt * dt / 3.0)),
    );
    let cross = Mat3::identity() * (accel_var * dt / 2.0);
    set_block(&mut q, POS, VEL, &cross);
    set_block(&mut q, VEL, POS, &cross);
    let sa = noise.accel_bias.sigma;
    let sg = noise.gyro_bias.sigma;
    set_block(
        &mut q,
        BA,
        BA,
        &(Mat3::identity() * (sa * sa * (1.0 - decay_a * decay_a))),
    );
    set_block(
        &mut q,
        BG,
        BG,
        &(Mat3::identity() * (sg * sg * (1.0 - decay_g * decay_g))),
    );

    Ok((f, q))
}
