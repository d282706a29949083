//! Synthetic range-camera sessions for the integration suite.
//!
//! A ground-truth device observes a planar checkerboard field from a ring
//! of convergent poses. Corner images and depth-map samples are generated
//! through the same physical chain the estimator models — perspective
//! projection with Brown distortion, the stereo parallax between IR
//! camera and pattern projector, matching noise, and disparity rounding —
//! so closed-loop tests can compare estimates against the exact truth.
#![allow(dead_code)]

use geometry_core::{CardanRotation, Mat3, Plane, Point3, Vec3};
use kinect_calib::{
    backproject_to_projector, depth_pixel_to_point, project_camera_frame, BoardObservation,
    BoardTarget, CameraId, DepthSample, KinectNetwork, KinectRig, PoseSetup, RelativeOrientation,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Arcseconds → radians.
pub fn arcsec(a: f64) -> f64 {
    a * std::f64::consts::PI / (180.0 * 3600.0)
}

/// The ground-truth device: noticeably decentred principal points, strong
/// RGB distortion, and mountings that deviate from the nominal geometry
/// by hundreds of arcseconds and a few tenths of a millimetre.
pub fn truth_rig() -> KinectRig {
    let mut rig = KinectRig::nominal();
    rig.ir.xp = -0.0302;
    rig.ir.yp = -0.0004;
    rig.ir.c = 6.045;
    rig.ir.k1 = -3.9e-3;
    rig.ir.k2 = 3.8e-4;
    rig.ir.k3 = -1.2e-5;
    rig.rgb.xp = 0.0521;
    rig.rgb.yp = -0.1759;
    rig.rgb.c = 2.896;
    rig.rgb.k1 = 2.3e-2;
    rig.rgb.k2 = -1.0e-2;
    rig.rgb.k3 = 1.5e-3;
    rig.rop_pro = RelativeOrientation {
        d_omega: arcsec(585.0),
        d_phi: arcsec(844.0),
        d_kappa: arcsec(152.0),
        bx: 0.0765,
        by: -0.0001,
        bz: -0.0009,
    };
    rig.rop_rgb = RelativeOrientation {
        d_omega: arcsec(431.0),
        d_phi: arcsec(-1970.0),
        d_kappa: arcsec(-2185.0),
        bx: 0.0256,
        by: 0.0007,
        bz: 0.0007,
    };
    rig
}

/// Ground-truth scene geometry.
pub struct Scene {
    pub poses: Vec<PoseSetup>,
    pub targets: Vec<BoardTarget>,
    pub planes: Vec<Plane>,
}

/// An orthonormal tangent frame spanning the plane.
pub fn plane_frame(plane: &Plane) -> (Vec3, Vec3) {
    let n = plane.normal;
    let seed = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let e1 = (seed - n * seed.dot(&n)).normalize();
    let e2 = n.cross(&e1);
    (e1, e2)
}

/// A 6×4 target field on a flat, slightly tilted board 0.3 m from the
/// world origin, observed from eleven convergent poses 1.3–2.0 m away
/// with varied tilt, azimuth, and roll. The board is tilted against all
/// three world axes so that misclosure vectors, which lie in the board
/// plane, have honest components on every axis.
pub fn truth_scene() -> Scene {
    let plane = Plane::new(Vec3::new(0.22, -0.16, 0.96), 0.3).expect("board plane");
    let (e1, e2) = plane_frame(&plane);
    let centre = Point3::from(plane.normal * plane.d);
    let mut targets = Vec::new();
    for gy in 0..4 {
        for gx in 0..6 {
            let s = -0.5 + 0.2 * gx as f64;
            let t = -0.3 + 0.2 * gy as f64;
            targets.push(BoardTarget {
                coords: centre + e1 * s + e2 * t,
                plane: Some(0),
            });
        }
    }

    let mut poses = Vec::new();
    for j in 0..11 {
        let az = std::f64::consts::TAU * j as f64 / 11.0;
        let tilt = (10.0 + 2.0 * j as f64).to_radians();
        let dist = 1.3 + 0.07 * j as f64;
        let dir = plane.normal * tilt.cos() + (e1 * az.cos() + e2 * az.sin()) * tilt.sin();
        let position = centre + dir * dist;

        // Look at the board centre: the camera's −z axis points at it.
        let z_cam = dir;
        let seed = if z_cam.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let e1 = (seed - z_cam * seed.dot(&z_cam)).normalize();
        let e2 = z_cam.cross(&e1);
        let roll = 0.6 * j as f64;
        let x_cam = e1 * roll.cos() + e2 * roll.sin();
        let y_cam = z_cam.cross(&x_cam);
        let m = Mat3::new(
            x_cam.x, x_cam.y, x_cam.z, y_cam.x, y_cam.y, y_cam.z, z_cam.x, z_cam.y, z_cam.z,
        );
        poses.push(PoseSetup {
            position,
            rotation: CardanRotation::from_matrix(&m),
        });
    }
    Scene {
        poses,
        targets,
        planes: vec![plane],
    }
}

/// Generation controls.
pub struct SimOptions {
    pub seed: u64,
    /// Apply measurement noise (corner image noise, depth pixel noise,
    /// disparity matching noise).
    pub noisy: bool,
    /// Round the generated disparities to the correlator step.
    pub quantize: bool,
    /// Inflate the generated depth-pixel noise relative to the stated
    /// stochastic model (1.0 = matched).
    pub depth_noise_scale: f64,
    /// Inflate the generated disparity matching noise (1.0 = matched).
    pub disparity_noise_scale: f64,
    /// The firmware model that converts measured parallax into the stored
    /// range value. `None` uses the true device itself (an ideal
    /// conversion); a realistic device ships nominal factory constants.
    pub conversion: Option<KinectRig>,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            seed: 71,
            noisy: true,
            quantize: true,
            depth_noise_scale: 1.0,
            disparity_noise_scale: 1.0,
            conversion: None,
        }
    }
}

/// Margin (px) kept between generated image measurements and the sensor
/// border.
const PIXEL_MARGIN: f64 = 30.0;

/// Builds a measurement session for the given device over the standard
/// scene. The returned network is initialised at the exact truth; tests
/// perturb the initial values as needed.
pub fn simulate(rig: &KinectRig, opts: &SimOptions) -> KinectNetwork {
    let scene = truth_scene();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");

    let mut net = KinectNetwork::new(*rig);
    net.poses = scene.poses.clone();
    net.targets = scene.targets.clone();
    net.planes = scene.planes.clone();
    let sigma_ir = net.stochastic.sigma_ir;
    let sigma_rgb = net.stochastic.sigma_rgb;
    let sigma_depth = net.stochastic.sigma_depth_px * opts.depth_noise_scale;
    let sigma_disp = net.stochastic.quantization.sigma_disparity * opts.disparity_noise_scale;
    let q_step = net.stochastic.quantization.q * rig.pro.pitch_mm();

    // Checkerboard corners in both cameras.
    for (j, pose) in scene.poses.iter().enumerate() {
        let m = pose.rotation.matrix();
        let dr_rgb = rig.rop_rgb.matrix();
        let b_rgb = rig.rop_rgb.baseline();
        for (t, target) in scene.targets.iter().enumerate() {
            let p_ir = m * (target.coords - pose.position);
            for camera in [CameraId::Ir, CameraId::Rgb] {
                let (cam, q) = match camera {
                    CameraId::Ir => (&rig.ir, p_ir),
                    CameraId::Rgb => (&rig.rgb, dr_rgb * (p_ir - b_rgb)),
                };
                if q.z > -0.2 {
                    continue;
                }
                let Ok((x, y)) = project_camera_frame(&q, cam) else {
                    continue;
                };
                let (u, v) = cam.image_to_pixel(x, y);
                if u < PIXEL_MARGIN
                    || u > f64::from(cam.width - 1) - PIXEL_MARGIN
                    || v < PIXEL_MARGIN
                    || v > f64::from(cam.height - 1) - PIXEL_MARGIN
                {
                    continue;
                }
                let sigma = match camera {
                    CameraId::Ir => sigma_ir,
                    CameraId::Rgb => sigma_rgb,
                };
                let (nx, ny) = if opts.noisy {
                    (sigma * unit.sample(&mut rng), sigma * unit.sample(&mut rng))
                } else {
                    (0.0, 0.0)
                };
                net.board.push(BoardObservation {
                    pose: j,
                    camera,
                    target: t,
                    x: x + nx,
                    y: y + ny,
                });
            }
        }
    }

    // Depth-map samples over the board.
    let plane = &scene.planes[0];
    let (e1, e2) = plane_frame(plane);
    let board_centre = Point3::from(plane.normal * plane.d);
    let conversion = opts.conversion.as_ref().unwrap_or(rig);
    for (j, pose) in scene.poses.iter().enumerate() {
        let m = pose.rotation.matrix();
        for gy in 0..4 {
            for gx in 0..6 {
                let surface = board_centre
                    + e1 * (-0.45 + 0.18 * gx as f64)
                    + e2 * (-0.27 + 0.18 * gy as f64);
                let q = m * (surface - pose.position);
                if q.z > -0.2 {
                    continue;
                }
                let Ok((x, y)) = project_camera_frame(&q, &rig.ir) else {
                    continue;
                };
                let (u_f, v_f) = rig.ir.image_to_pixel(x, y);
                let u = u_f.round();
                let v = (v_f - rig.null_band).round();
                if u < PIXEL_MARGIN
                    || u > f64::from(rig.ir.width - 1) - PIXEL_MARGIN
                    || v < 2.0
                    || v + rig.null_band > f64::from(rig.ir.height - 1) - 2.0
                {
                    continue;
                }

                // The range reported at (u, v) actually stems from a spot a
                // fraction of a pixel away: perturb the sampling ray, read
                // the surface there, and measure its parallax.
                let (eu, ev) = if opts.noisy {
                    (
                        sigma_depth * unit.sample(&mut rng),
                        sigma_depth * unit.sample(&mut rng),
                    )
                } else {
                    (0.0, 0.0)
                };
                let ray_pt = depth_pixel_to_point(u + eu, v + ev, 1.0, &rig.ir, rig.null_band)
                    .expect("sampling ray");
                let dir = m.transpose() * ray_pt.coords;
                let mu = (plane.d - plane.normal.dot(&pose.position.coords))
                    / plane.normal.dot(&dir);
                let sampled = pose.position + dir * mu;
                let q_s = m * (sampled - pose.position);
                let (x_pro, _) = backproject_to_projector(&Point3::from(q_s), rig)
                    .expect("projector sees the board");

                let mut x_meas = x_pro;
                if opts.noisy {
                    x_meas += sigma_disp * rig.pro.pitch_mm() * unit.sample(&mut rng);
                }
                if opts.quantize {
                    x_meas = (x_meas / q_step).round() * q_step;
                }

                let z = solve_range_for_parallax(u, v, x_meas, -q_s.z, conversion);
                net.depth.push(DepthSample {
                    pose: j,
                    plane: 0,
                    u,
                    v,
                    z,
                });
            }
        }
    }

    net
}

/// Inverts the parallax chain: finds the range that makes the stored
/// pixel reproduce the measured projector coordinate, exactly as the
/// device's range conversion would.
fn solve_range_for_parallax(u: f64, v: f64, x_target: f64, z0: f64, rig: &KinectRig) -> f64 {
    let x_of = |z: f64| {
        let p = depth_pixel_to_point(u, v, z, &rig.ir, rig.null_band).expect("depth ray");
        backproject_to_projector(&p, rig).expect("projector projection").0
    };
    let mut z = z0;
    for _ in 0..40 {
        let f = x_of(z) - x_target;
        if f.abs() < 1e-12 {
            return z;
        }
        let h = 1e-6;
        let dfdz = (x_of(z + h) - x_of(z - h)) / (2.0 * h);
        z -= f / dfdz;
    }
    panic!("range inversion did not converge at pixel ({u}, {v})");
}

/// Moves the rig's initial values away from the truth: tens of
/// micrometres on the principal points, relative distortion shifts, a few
/// hundred arcseconds and millimetres on the mountings.
pub fn perturb_rig(rig: &mut KinectRig, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut n = |s: f64| s * unit.sample(&mut rng);
    for cam in [&mut rig.ir, &mut rig.rgb] {
        cam.xp += n(0.01);
        cam.yp += n(0.01);
        cam.c += n(0.005);
        cam.k1 *= 1.0 + n(0.1);
        cam.k2 *= 1.0 + n(0.1);
        cam.k3 *= 1.0 + n(0.1);
    }
    for rop in [&mut rig.rop_pro, &mut rig.rop_rgb] {
        rop.d_omega += arcsec(n(200.0));
        rop.d_phi += arcsec(n(200.0));
        rop.d_kappa += arcsec(n(200.0));
        rop.bx += n(1.5e-3);
        rop.by += n(1.5e-3);
        rop.bz += n(1.5e-3);
    }
}
