//! Verification of the error-state transition against central finite
//! differences of the actual discrete propagation, plus noise-matrix
//! properties.

use geometry_core::{UnitQuaternion, Vec3};
use ins_mech::{
    process_model, propagate_bias, strapdown_predict, EarthModel, ErrorStateMat, ImuNoiseModel,
    ImuSample, NavState, ATT, BA, BG, POS, VEL,
};
use nalgebra::SVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type ErrVec = SVector<f64, 15>;

/// Injects an error vector into a nominal state (left-multiplicative
/// attitude error).
fn apply_error(state: &NavState, xi: &ErrVec) -> NavState {
    let dpsi = Vec3::new(xi[ATT], xi[ATT + 1], xi[ATT + 2]);
    NavState {
        attitude: UnitQuaternion::from_rotation_vector(&dpsi).compose(&state.attitude),
        position: state.position + Vec3::new(xi[POS], xi[POS + 1], xi[POS + 2]),
        velocity: state.velocity + Vec3::new(xi[VEL], xi[VEL + 1], xi[VEL + 2]),
        accel_bias: state.accel_bias + Vec3::new(xi[BA], xi[BA + 1], xi[BA + 2]),
        gyro_bias: state.gyro_bias + Vec3::new(xi[BG], xi[BG + 1], xi[BG + 2]),
    }
}

/// Extracts the error vector between a perturbed and a nominal state.
fn error_between(perturbed: &NavState, nominal: &NavState) -> ErrVec {
    let dq = perturbed
        .attitude
        .compose(&nominal.attitude.conjugate())
        .rotation_vector();
    let mut xi = ErrVec::zeros();
    for i in 0..3 {
        xi[ATT + i] = dq[i];
        xi[POS + i] = perturbed.position[i] - nominal.position[i];
        xi[VEL + i] = perturbed.velocity[i] - nominal.velocity[i];
        xi[BA + i] = perturbed.accel_bias[i] - nominal.accel_bias[i];
        xi[BG + i] = perturbed.gyro_bias[i] - nominal.gyro_bias[i];
    }
    xi
}

/// The discrete map the transition matrix claims to linearize: strapdown
/// prediction followed by the deterministic Gauss-Markov decay.
fn discrete_map(
    state: &NavState,
    sample: &ImuSample,
    dt: f64,
    earth: &EarthModel,
    noise: &ImuNoiseModel,
) -> NavState {
    let mut next = strapdown_predict(state, sample, dt, earth).unwrap();
    next.accel_bias = propagate_bias(&next.accel_bias, dt, &noise.accel_bias).0;
    next.gyro_bias = propagate_bias(&next.gyro_bias, dt, &noise.gyro_bias).0;
    next
}

fn random_state(rng: &mut ChaCha8Rng) -> (NavState, ImuSample) {
    let attitude = UnitQuaternion::from_rotation_vector(&Vec3::new(
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-3.0..3.0),
    ));
    let state = NavState {
        attitude,
        position: Vec3::new(
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-2.0..2.0),
        ),
        velocity: Vec3::new(
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-0.5..0.5),
        ),
        accel_bias: Vec3::new(
            rng.gen_range(-0.05..0.05),
            rng.gen_range(-0.05..0.05),
            rng.gen_range(-0.05..0.05),
        ),
        gyro_bias: Vec3::new(
            rng.gen_range(-0.01..0.01),
            rng.gen_range(-0.01..0.01),
            rng.gen_range(-0.01..0.01),
        ),
    };
    // Plausible indoor handheld motion: modest forces around the gravity
    // reaction, sub-rad/s rates.
    let gravity_reaction = attitude.conjugate().rotate(&Vec3::new(0.0, 0.0, 9.81));
    let sample = ImuSample {
        t: 0.0,
        f: gravity_reaction
            + Vec3::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            ),
        w: Vec3::new(
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
        ),
    };
    (state, sample)
}

/// Transition matrix vs central finite differences of the discrete map at
/// 100 random states: normalized error below 1e−5 element-wise.
#[test]
fn transition_matches_finite_differences() {
    let earth = EarthModel::level_at_latitude(9.81, 51.0_f64.to_radians()).unwrap();
    let noise = ImuNoiseModel::default();
    let dt = 0.01;
    let h = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;

    for _ in 0..100 {
        let (state, sample) = random_state(&mut rng);
        let (f_analytic, _) = process_model(&state, &sample, dt, &earth, &noise).unwrap();
        let nominal_next = discrete_map(&state, &sample, dt, &earth, &noise);

        let mut f_numeric = ErrorStateMat::zeros();
        for j in 0..15 {
            let mut plus = ErrVec::zeros();
            plus[j] = h;
            let mut minus = ErrVec::zeros();
            minus[j] = -h;
            let xp = discrete_map(&apply_error(&state, &plus), &sample, dt, &earth, &noise);
            let xm = discrete_map(&apply_error(&state, &minus), &sample, dt, &earth, &noise);
            let col = (error_between(&xp, &nominal_next) - error_between(&xm, &nominal_next))
                / (2.0 * h);
            f_numeric.set_column(j, &col);
        }

        for r in 0..15 {
            for c in 0..15 {
                let denom = 1.0 + f_analytic[(r, c)].abs();
                worst = worst.max((f_analytic[(r, c)] - f_numeric[(r, c)]).abs() / denom);
            }
        }
    }
    assert!(worst < 1e-5, "worst normalized Jacobian error {worst:.3e}");
}

/// Process noise must be symmetric positive semidefinite for random inputs.
#[test]
fn process_noise_is_psd() {
    let earth = EarthModel::level_at_latitude(9.81, 51.0_f64.to_radians()).unwrap();
    let noise = ImuNoiseModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let (state, sample) = random_state(&mut rng);
        let dt = rng.gen_range(0.001..0.1);
        let (_, q) = process_model(&state, &sample, dt, &earth, &noise).unwrap();
        assert_eq!(q, q.transpose(), "Q must be exactly symmetric");
        let eig = nalgebra::SymmetricEigen::new(q);
        let min = eig.eigenvalues.min();
        let scale = eig.eigenvalues.max().max(1e-300);
        assert!(
            min > -1e-12 * scale,
            "negative eigenvalue {min:.3e} (scale {scale:.3e})"
        );
    }
}

/// The transition of a pure bias perturbation matches the Gauss-Markov
/// decay applied directly.
#[test]
fn bias_blocks_decay_exactly() {
    let earth = EarthModel::non_rotating(9.81).unwrap();
    let noise = ImuNoiseModel::default();
    let state = NavState::at_origin();
    let sample = ImuSample {
        t: 0.0,
        f: Vec3::new(0.0, 0.0, 9.81),
        w: Vec3::zeros(),
    };
    let dt = 0.02;
    let (f, _) = process_model(&state, &sample, dt, &earth, &noise).unwrap();
    for i in 0..3 {
        approx::assert_relative_eq!(
            f[(BA + i, BA + i)],
            (-dt / noise.accel_bias.tau).exp(),
            epsilon = 1e-15
        );
        approx::assert_relative_eq!(
            f[(BG + i, BG + i)],
            (-dt / noise.gyro_bias.tau).exp(),
            epsilon = 1e-15
        );
    }
}
