//! Shared network simulators for the integration suite.
#![allow(dead_code)]

use geometry_core::{cartesian_to_spherical, CardanRotation, Plane, Point3, SphericalObservation, Vec3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tls_calib::{
    eval_hz_ap, eval_range_ap, eval_v_ap, ApSelection, ApSet, CalibrationNetwork,
    LevellingPseudoObs, PrimitiveId, ScannerArchitecture, StationSetup, TlsObservation,
    TlsStochasticModel,
};

pub const ARCSEC: f64 = std::f64::consts::PI / (180.0 * 3600.0);

/// Configuration of a simulated target-calibration campaign.
pub struct PointSimConfig {
    pub seed: u64,
    pub truth: ApSet,
    pub selection: ApSelection,
    pub architecture: ScannerArchitecture,
    /// Add measurement noise per the stochastic model (σρ0, σθ, σα).
    pub noisy: bool,
    /// Re-observe above-horizon targets in the second face on an
    /// alternating pattern.
    pub two_face: bool,
    /// Station levelling pseudo-observations: (σ_tilt, σ_heading).
    pub levelling: Option<(f64, f64)>,
    /// Overrides the default stochastic model.
    pub stochastic: TlsStochasticModel,
}

impl Default for PointSimConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            truth: ApSet::default(),
            selection: ApSelection::none(),
            architecture: ScannerArchitecture::Panoramic,
            noisy: true,
            two_face: true,
            levelling: None,
            stochastic: TlsStochasticModel::default(),
        }
    }
}

/// Three stations spread through an 8 × 7 × 3 m room.
pub fn true_stations() -> Vec<StationSetup> {
    vec![
        StationSetup {
            position: Vec3::new(2.5, 2.0, 1.4),
            rotation: CardanRotation::new(0.004, -0.007, 0.35),
            levelling: LevellingPseudoObs::default(),
        },
        StationSetup {
            position: Vec3::new(5.5, 5.0, 1.7),
            rotation: CardanRotation::new(-0.002, 0.005, -2.1),
            levelling: LevellingPseudoObs::default(),
        },
        StationSetup {
            position: Vec3::new(6.5, 1.5, 1.1),
            rotation: CardanRotation::new(0.001, 0.003, 1.6),
            levelling: LevellingPseudoObs::default(),
        },
    ]
}

/// 27 wall/floor/ceiling targets on a 3 × 3 × 3 grid.
pub fn room_targets() -> Vec<Point3> {
    let mut targets = Vec::new();
    for &x in &[0.0, 4.0, 8.0] {
        for &y in &[0.0, 3.5, 7.0] {
            for &z in &[0.2, 1.5, 2.8] {
                targets.push(Point3::new(x, y, z));
            }
        }
    }
    targets
}

/// Forward-models a full campaign: every station observes every target,
/// systematic errors evaluated at the native (face-aware) geometry, noise
/// drawn from the stated stochastic model when enabled.
pub fn simulate_point_network(cfg: &PointSimConfig) -> CalibrationNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let mut stations = true_stations();
    if let Some((sigma_tilt, sigma_heading)) = cfg.levelling {
        for st in stations.iter_mut() {
            let mut observed = |truth: f64, sigma: f64| {
                let noise = if cfg.noisy {
                    sigma * unit.sample(&mut rng)
                } else {
                    0.0
                };
                Some((truth + noise, sigma))
            };
            st.levelling = LevellingPseudoObs {
                omega: observed(st.rotation.omega, sigma_tilt),
                phi: observed(st.rotation.phi, sigma_tilt),
                kappa: observed(st.rotation.kappa, sigma_heading),
            };
        }
    }
    let targets = room_targets();
    let mut observations = Vec::new();
    for (s, st) in stations.iter().enumerate() {
        let m = st.rotation.matrix();
        for (t, target) in targets.iter().enumerate() {
            let local = m * (target.coords - st.position);
            let first = cartesian_to_spherical(&Point3::from(local)).unwrap();
            let second = cfg.two_face && local.z >= 0.0 && (s + t) % 2 == 0;
            let native = if second {
                first.to_second_face()
            } else {
                first
            };
            let d_rho = eval_range_ap(native.rho, native.alpha, &cfg.truth.range, &[]);
            let d_theta = eval_hz_ap(
                native.theta,
                native.alpha,
                native.rho,
                &cfg.truth.hz,
                cfg.architecture,
            )
            .unwrap();
            let d_alpha = eval_v_ap(native.alpha, native.theta, native.rho, &cfg.truth.v);
            let (mut rho, mut theta, mut alpha) = (
                native.rho + d_rho,
                native.theta + d_theta,
                native.alpha + d_alpha,
            );
            if cfg.noisy {
                rho += cfg.stochastic.sigma_rho0 * unit.sample(&mut rng);
                theta += cfg.stochastic.sigma_theta * unit.sample(&mut rng);
                alpha += cfg.stochastic.sigma_alpha * unit.sample(&mut rng);
            }
            observations.push(TlsObservation {
                station: s,
                primitive: PrimitiveId::Target(t),
                obs: SphericalObservation::new(rho, theta, alpha).unwrap(),
                beta: 0.0,
            });
        }
    }
    CalibrationNetwork {
        architecture: cfg.architecture,
        stations,
        targets,
        planes: vec![],
        observations,
        stochastic: cfg.stochastic,
        selection: cfg.selection,
        initial_aps: ApSet::default(),
    }
}

/// Deterministic small perturbation of the initial station and target
/// values, so solves never start at the truth.
pub fn perturb_initials(net: &mut CalibrationNetwork, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pos = Normal::new(0.0, 3e-3).unwrap();
    let ang = Normal::new(0.0, 5e-4).unwrap();
    for st in net.stations.iter_mut() {
        st.position += Vec3::new(
            pos.sample(&mut rng),
            pos.sample(&mut rng),
            pos.sample(&mut rng),
        );
        st.rotation.omega += ang.sample(&mut rng);
        st.rotation.phi += ang.sample(&mut rng);
        st.rotation.kappa += ang.sample(&mut rng);
    }
    for t in net.targets.iter_mut() {
        t.coords += Vec3::new(
            pos.sample(&mut rng),
            pos.sample(&mut rng),
            pos.sample(&mut rng),
        );
    }
}

/// Configuration of a simulated plane-scanning campaign inside a closed
/// box room.
pub struct PlaneSimConfig {
    pub seed: u64,
    pub truth: ApSet,
    pub selection: ApSelection,
    pub architecture: ScannerArchitecture,
    pub noisy: bool,
    pub stochastic: TlsStochasticModel,
}

impl Default for PlaneSimConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            truth: ApSet::default(),
            selection: ApSelection::none(),
            architecture: ScannerArchitecture::Hybrid,
            noisy: true,
            stochastic: TlsStochasticModel::default(),
        }
    }
}

/// Rays on a direction grid from two interior stations, intersected with
/// the six faces of a box room; raw observations satisfy
/// `raw − Δ(raw) on plane` exactly before noise.
pub fn simulate_plane_network(cfg: &PlaneSimConfig) -> CalibrationNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let planes = vec![
        Plane::new(Vec3::new(1.0, 0.0, 0.0), 4.0).unwrap(),
        Plane::new(Vec3::new(-1.0, 0.0, 0.0), 4.0).unwrap(),
        Plane::new(Vec3::new(0.0, 1.0, 0.0), 3.0).unwrap(),
        Plane::new(Vec3::new(0.0, -1.0, 0.0), 3.0).unwrap(),
        Plane::new(Vec3::new(0.0, 0.0, 1.0), 2.2).unwrap(),
        Plane::new(Vec3::new(0.0, 0.0, -1.0), 0.8).unwrap(),
    ];
    let stations = vec![
        StationSetup {
            position: Vec3::new(0.4, -0.3, 0.25),
            rotation: CardanRotation::new(0.002, -0.004, 0.6),
            levelling: LevellingPseudoObs::default(),
        },
        StationSetup {
            position: Vec3::new(-0.8, 0.9, -0.1),
            rotation: CardanRotation::new(-0.003, 0.001, -1.4),
            levelling: LevellingPseudoObs::default(),
        },
    ];
    let mut observations = Vec::new();
    for (s, st) in stations.iter().enumerate() {
        let m = st.rotation.matrix();
        for step_t in 0..36 {
            for step_a in [-5i32, -4, -3, -2, -1, 1, 2, 3, 4, 5] {
                let theta = step_t as f64 * std::f64::consts::TAU / 36.0 + 0.05;
                let alpha = step_a as f64 * 0.13;
                let (sa, ca) = alpha.sin_cos();
                let (stt, ctt) = theta.sin_cos();
                let dir_local = Vec3::new(ca * ctt, ca * stt, sa);
                let dir_world = m.transpose() * dir_local;
                let mut best: Option<(f64, usize)> = None;
                for (p, plane) in planes.iter().enumerate() {
                    let denom = plane.normal.dot(&dir_world);
                    if denom.abs() < 1e-9 {
                        continue;
                    }
                    let rho = (plane.d - plane.normal.dot(&st.position)) / denom;
                    if rho > 0.1 && best.map_or(true, |(r, _)| rho < r) {
                        best = Some((rho, p));
                    }
                }
                let (rho_true, p) = best.expect("closed box: every ray hits");
                let plane = &planes[p];
                let cos_beta = plane.normal.dot(&dir_world).abs().min(1.0);
                let beta = cos_beta.acos();
                if beta > cfg.stochastic.beta_max - 0.05 {
                    continue;
                }
                // Fixed point: raw = true + Δ(raw).
                let (mut r, mut t, mut a) = (rho_true, theta, alpha);
                for _ in 0..6 {
                    let d_rho = eval_range_ap(r, a, &cfg.truth.range, &[]);
                    let d_theta = eval_hz_ap(t, a, r, &cfg.truth.hz, cfg.architecture).unwrap();
                    let d_alpha = eval_v_ap(a, t, r, &cfg.truth.v);
                    r = rho_true + d_rho;
                    t = theta + d_theta;
                    a = alpha + d_alpha;
                }
                if cfg.noisy {
                    r += cfg.stochastic.sigma_rho0 / beta.cos() * unit.sample(&mut rng);
                    t += cfg.stochastic.sigma_theta * unit.sample(&mut rng);
                    a += cfg.stochastic.sigma_alpha * unit.sample(&mut rng);
                }
                observations.push(TlsObservation {
                    station: s,
                    primitive: PrimitiveId::Plane(p),
                    obs: SphericalObservation::new(r, t, a).unwrap(),
                    beta,
                });
            }
        }
    }
    CalibrationNetwork {
        architecture: cfg.architecture,
        stations,
        targets: vec![],
        planes,
        observations,
        stochastic: cfg.stochastic,
        selection: cfg.selection,
        initial_aps: ApSet::default(),
    }
}
