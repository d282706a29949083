//! Calibration network: board poses, targets, planes, and the two
//! observation families (checkerboard corners, depth-map samples), plus the
//! stochastic model and plain-text I/O.
//!
//! Object space is the world frame the board and device poses live in.
//! Each pose maps object coordinates into the IR camera frame:
//! `q = M·(X − T)` with `M` the pose's direction-cosine matrix and `T` the
//! IR perspective centre. The RGB camera and the projector hang off that
//! frame through the rig's relative orientations.

use geometry_core::{CardanRotation, Plane, Point3, RigidTransform};

use crate::camera::IopSelection;
use crate::rig::{KinectRig, QuantizationModel, DEFAULT_BASELINE_GATE};
use crate::{KinectError, Result};

/// Which imaging camera produced a checkerboard-corner observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CameraId {
    /// The infrared camera.
    Ir,
    /// The colour camera.
    Rgb,
}

/// Exterior orientation of the device for one board arrangement: position
/// of the IR perspective centre (m) and the object→IR rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSetup {
    /// IR perspective centre in object space (m).
    pub position: Point3,
    /// Object → IR camera rotation.
    pub rotation: CardanRotation,
}

impl PoseSetup {
    /// The pose as a rigid transform (object space → IR camera frame).
    pub fn transform(&self) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation.to_quaternion(),
            origin: self.position.coords,
        }
    }
}

/// A signalized board target: object-space coordinates plus the planar
/// surface it is painted on (used as a flatness pseudo-observation).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoardTarget {
    /// Object-space coordinates (m).
    pub coords: Point3,
    /// Index of the plane the target lies on, if any.
    pub plane: Option<usize>,
}

/// One measured checkerboard corner in one image (mm on the image plane).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoardObservation {
    /// Pose index.
    pub pose: usize,
    /// Which camera took the image.
    pub camera: CameraId,
    /// Target index.
    pub target: usize,
    /// Measured image x (mm).
    pub x: f64,
    /// Measured image y (mm).
    pub y: f64,
}

/// One depth-map sample: a pixel of the depth image together with the
/// range it reports, attributed to a planar surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthSample {
    /// Pose index.
    pub pose: usize,
    /// Index of the plane the sampled surface belongs to.
    pub plane: usize,
    /// Depth-map column (px).
    pub u: f64,
    /// Depth-map row (px, before the null-band shift).
    pub v: f64,
    /// Reported range (m), positive.
    pub z: f64,
}

/// A-priori standard deviations of the observation groups.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinectStochasticModel {
    /// IR corner measurement noise (mm on the image plane).
    pub sigma_ir: f64,
    /// RGB corner measurement noise (mm on the image plane).
    pub sigma_rgb: f64,
    /// Depth-map pixel position noise (px): how precisely the reported
    /// range can be attributed to a sensor location.
    pub sigma_depth_px: f64,
    /// Disparity matching noise and rounding step (px), mapped onto the
    /// synthesized projector coordinates.
    pub quantization: QuantizationModel,
    /// Board flatness: standard deviation of the target-on-plane
    /// pseudo-observation (m). Models manufacturing flatness of the board
    /// instead of forcing targets exactly onto the plane.
    pub sigma_flatness: f64,
}

impl Default for KinectStochasticModel {
    fn default() -> Self {
        Self {
            // Quarter-pixel corner localization on the 10.4 µm IR sensor,
            // a third of a pixel on the 5.6 µm RGB sensor.
            sigma_ir: 2.6e-3,
            sigma_rgb: 1.9e-3,
            sigma_depth_px: 0.125,
            quantization: QuantizationModel {
                sigma_disparity: 0.125,
                q: 0.125,
            },
            // 0.02 mm: flatness of a rigid composite board.
            sigma_flatness: 2.0e-5,
        }
    }
}

impl KinectStochasticModel {
    /// Checks every component for positivity.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma_ir", self.sigma_ir),
            ("sigma_rgb", self.sigma_rgb),
            ("sigma_depth_px", self.sigma_depth_px),
            ("sigma_flatness", self.sigma_flatness),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(KinectError::InvalidNetwork {
                    reason: format!("{name} must be positive and finite, got {v}"),
                });
            }
        }
        self.quantization.validate()
    }
}

/// A complete calibration data set: initial rig values, geometry, both
/// observation families, and the stochastic model.
#[derive(Debug, Clone, PartialEq)]
pub struct KinectNetwork {
    /// Initial rig values; interior parameters and relative orientations
    /// are refined by the bundle.
    pub rig: KinectRig,
    /// Initial device poses, one per board arrangement.
    pub poses: Vec<PoseSetup>,
    /// Initial board target coordinates.
    pub targets: Vec<BoardTarget>,
    /// Initial board planes.
    pub planes: Vec<Plane>,
    /// Checkerboard corner observations.
    pub board: Vec<BoardObservation>,
    /// Depth-map samples.
    pub depth: Vec<DepthSample>,
    /// A-priori observation noise.
    pub stochastic: KinectStochasticModel,
    /// IR parameters to estimate.
    pub ir_select: IopSelection,
    /// RGB parameters to estimate.
    pub rgb_select: IopSelection,
    /// Projector parameters to estimate (normally none: the projector has
    /// no image readout of its own).
    pub pro_select: IopSelection,
    /// Plausibility gate on the projector baseline length (m).
    pub baseline_gate: (f64, f64),
}

impl KinectNetwork {
    /// An empty network around an initial rig, with default stochastics
    /// and the standard parameter selections.
    pub fn new(rig: KinectRig) -> Self {
        Self {
            rig,
            poses: Vec::new(),
            targets: Vec::new(),
            planes: Vec::new(),
            board: Vec::new(),
            depth: Vec::new(),
            stochastic: KinectStochasticModel::default(),
            ir_select: IopSelection::standard(),
            rgb_select: IopSelection::standard(),
            pro_select: IopSelection::none(),
            baseline_gate: DEFAULT_BASELINE_GATE,
        }
    }

    /// Validates rig, stochastics, index bounds, pixel bounds, and
    /// duplicate observations.
    pub fn validate(&self) -> Result<()> {
        self.rig.validate(self.baseline_gate)?;
        self.stochastic.validate()?;
        if self.poses.is_empty() {
            return Err(KinectError::InvalidNetwork {
                reason: "network has no poses".into(),
            });
        }
        if self.board.is_empty() && self.depth.is_empty() {
            return Err(KinectError::InvalidNetwork {
                reason: "network has no observations".into(),
            });
        }
        for (i, t) in self.targets.iter().enumerate() {
            if let Some(k) = t.plane {
                if k >= self.planes.len() {
                    return Err(KinectError::InvalidNetwork {
                        reason: format!("target {i} references missing plane {k}"),
                    });
                }
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for (i, o) in self.board.iter().enumerate() {
            if o.pose >= self.poses.len() {
                return Err(KinectError::InvalidNetwork {
                    reason: format!("board observation {i} references missing pose {}", o.pose),
                });
            }
            if o.target >= self.targets.len() {
                return Err(KinectError::InvalidNetwork {
                    reason: format!(
                        "board observation {i} references missing target {}",
                        o.target
                    ),
                });
            }
            if !(o.x.is_finite() && o.y.is_finite()) {
                return Err(KinectError::InvalidNetwork {
                    reason: format!("board observation {i} is not finite"),
                });
            }
            let cam_tag = matches!(o.camera, CameraId::Rgb) as usize;
            if !seen.insert((o.pose, cam_tag, o.target)) {
                return Err(KinectError::InvalidNetwork {
                    reason: format!(
                        "duplicate corner observation of target {} at pose {}",
                        o.target, o.pose
                    ),
                });
            }
        }
        for (i, s) in self.depth.iter().enumerate() {
            if s.pose >= self.poses.len() {
                return Err(KinectError::InvalidNetwork {
                    reason: format!("depth sample {i} references missing pose {}", s.pose),
                });
            }
            if s.plane >= self.planes.len() {
                return Err(KinectError::InvalidNetwork {
                    reason: format!("depth sample {i} references missing plane {}", s.plane),
                });
            }
            if !(s.z.is_finite() && s.z > 0.0) {
                return Err(KinectError::InvalidNetwork {
                    reason: format!("depth sample {i} has non-positive range {}", s.z),
                });
            }
            if !self.rig.ir.contains_pixel(s.u, s.v) {
                return Err(KinectError::InvalidNetwork {
                    reason: format!(
                        "depth sample {i} pixel ({}, {}) is outside the sensor",
                        s.u, s.v
                    ),
                });
            }
        }
        Ok(())
    }

    /// Serializes the network as a sectioned plain-text document.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("# range-camera calibration network\n");
        for (tag, cam) in [("ir", &self.rig.ir), ("pro", &self.rig.pro), ("rgb", &self.rig.rgb)] {
            s.push_str(&format!("\n[camera {tag}]\n"));
            s.push_str(&format!("pitch_um = {:e}\n", cam.pitch_um));
            s.push_str(&format!("format = {} {}\n", cam.width, cam.height));
            s.push_str(&format!("xp = {:e}\nyp = {:e}\nc = {:e}\n", cam.xp, cam.yp, cam.c));
            s.push_str(&format!(
                "k = {:e} {:e} {:e}\np = {:e} {:e}\na = {:e} {:e}\n",
                cam.k1, cam.k2, cam.k3, cam.p1, cam.p2, cam.a1, cam.a2
            ));
        }
        for (tag, rop) in [("pro", &self.rig.rop_pro), ("rgb", &self.rig.rop_rgb)] {
            s.push_str(&format!("\n[mount {tag}]\n"));
            s.push_str(&format!(
                "angles = {:e} {:e} {:e}\n",
                rop.d_omega, rop.d_phi, rop.d_kappa
            ));
            s.push_str(&format!("baseline = {:e} {:e} {:e}\n", rop.bx, rop.by, rop.bz));
        }
        s.push_str("\n[options]\n");
        s.push_str(&format!("null_band = {:e}\n", self.rig.null_band));
        s.push_str(&format!("sigma_ir = {:e}\n", self.stochastic.sigma_ir));
        s.push_str(&format!("sigma_rgb = {:e}\n", self.stochastic.sigma_rgb));
        s.push_str(&format!("sigma_depth_px = {:e}\n", self.stochastic.sigma_depth_px));
        s.push_str(&format!(
            "sigma_disparity = {:e}\n",
            self.stochastic.quantization.sigma_disparity
        ));
        s.push_str(&format!("quantization_step = {:e}\n", self.stochastic.quantization.q));
        s.push_str(&format!("sigma_flatness = {:e}\n", self.stochastic.sigma_flatness));
        s.push_str(&format!("ir_select = {}\n", self.ir_select.names().join(" ")));
        s.push_str(&format!("rgb_select = {}\n", self.rgb_select.names().join(" ")));
        s.push_str(&format!("pro_select = {}\n", self.pro_select.names().join(" ")));
        s.push_str(&format!(
            "baseline_gate = {:e} {:e}\n",
            self.baseline_gate.0, self.baseline_gate.1
        ));
        s.push_str("\n[poses]\n");
        for p in &self.poses {
            s.push_str(&format!(
                "{:e} {:e} {:e} {:e} {:e} {:e}\n",
                p.position.x,
                p.position.y,
                p.position.z,
                p.rotation.omega,
                p.rotation.phi,
                p.rotation.kappa
            ));
        }
        s.push_str("\n[targets]\n");
        for t in &self.targets {
            let plane = t
                .plane
                .map(|k| k.to_string())
                .unwrap_or_else(|| "-".to_string());
            s.push_str(&format!(
                "{:e} {:e} {:e} {plane}\n",
                t.coords.x, t.coords.y, t.coords.z
            ));
        }
        s.push_str("\n[planes]\n");
        for p in &self.planes {
            s.push_str(&format!(
                "{:e} {:e} {:e} {:e}\n",
                p.normal.x, p.normal.y, p.normal.z, p.d
            ));
        }
        s.push_str("\n[board]\n");
        for o in &self.board {
            let cam = match o.camera {
                CameraId::Ir => "ir",
                CameraId::Rgb => "rgb",
            };
            s.push_str(&format!("{} {cam} {} {:e} {:e}\n", o.pose, o.target, o.x, o.y));
        }
        s.push_str("\n[depth]\n");
        for d in &self.depth {
            s.push_str(&format!(
                "{} {} {:e} {:e} {:e}\n",
                d.pose, d.plane, d.u, d.v, d.z
            ));
        }
        s
    }

    /// Parses the sectioned plain-text format written by
    /// [`KinectNetwork::to_text`] and validates the result.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut net = KinectNetwork::new(KinectRig::nominal());
        net.ir_select = IopSelection::none();
        net.rgb_select = IopSelection::none();

        #[derive(Clone, Copy, PartialEq)]
        enum Section {
            None,
            Camera(usize), // 0 = ir, 1 = pro, 2 = rgb
            Mount(usize),  // 0 = pro, 1 = rgb
            Options,
            Poses,
            Targets,
            Planes,
            Board,
            Depth,
        }
        let mut section = Section::None;

        let parse_err = |line: usize, reason: &str| KinectError::Parse {
            line,
            reason: reason.to_string(),
        };
        let floats = |line_no: usize, s: &str, n: usize| -> Result<Vec<f64>> {
            let vals: Vec<f64> = s
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| parse_err(line_no, &format!("expected {n} numbers, got {s:?}")))?;
            if vals.len() != n {
                return Err(parse_err(
                    line_no,
                    &format!("expected {n} numbers, got {}", vals.len()),
                ));
            }
            Ok(vals)
        };

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = match name.trim() {
                    "camera ir" => Section::Camera(0),
                    "camera pro" => Section::Camera(1),
                    "camera rgb" => Section::Camera(2),
                    "mount pro" => Section::Mount(0),
                    "mount rgb" => Section::Mount(1),
                    "options" => Section::Options,
                    "poses" => Section::Poses,
                    "targets" => Section::Targets,
                    "planes" => Section::Planes,
                    "board" => Section::Board,
                    "depth" => Section::Depth,
                    other => return Err(parse_err(line_no, &format!("unknown section {other:?}"))),
                };
                continue;
            }
            match section {
                Section::None => {
                    return Err(parse_err(line_no, "content before the first section"))
                }
                Section::Camera(which) => {
                    let cam = match which {
                        0 => &mut net.rig.ir,
                        1 => &mut net.rig.pro,
                        _ => &mut net.rig.rgb,
                    };
                    let (key, value) = line
                        .split_once('=')
                        .ok_or_else(|| parse_err(line_no, "expected key = value"))?;
                    let value = value.trim();
                    match key.trim() {
                        "pitch_um" => cam.pitch_um = floats(line_no, value, 1)?[0],
                        "format" => {
                            let v = floats(line_no, value, 2)?;
                            cam.width = v[0] as u32;
                            cam.height = v[1] as u32;
                        }
                        "xp" => cam.xp = floats(line_no, value, 1)?[0],
                        "yp" => cam.yp = floats(line_no, value, 1)?[0],
                        "c" => cam.c = floats(line_no, value, 1)?[0],
                        "k" => {
                            let v = floats(line_no, value, 3)?;
                            cam.k1 = v[0];
                            cam.k2 = v[1];
                            cam.k3 = v[2];
                        }
                        "p" => {
                            let v = floats(line_no, value, 2)?;
                            cam.p1 = v[0];
                            cam.p2 = v[1];
                        }
                        "a" => {
                            let v = floats(line_no, value, 2)?;
                            cam.a1 = v[0];
                            cam.a2 = v[1];
                        }
                        other => {
                            return Err(parse_err(line_no, &format!("unknown camera key {other:?}")))
                        }
                    }
                }
                Section::Mount(which) => {
                    let rop = match which {
                        0 => &mut net.rig.rop_pro,
                        _ => &mut net.rig.rop_rgb,
                    };
                    let (key, value) = line
                        .split_once('=')
                        .ok_or_else(|| parse_err(line_no, "expected key = value"))?;
                    let v = floats(line_no, value.trim(), 3)?;
                    match key.trim() {
                        "angles" => {
                            rop.d_omega = v[0];
                            rop.d_phi = v[1];
                            rop.d_kappa = v[2];
                        }
                        "baseline" => {
                            rop.bx = v[0];
                            rop.by = v[1];
                            rop.bz = v[2];
                        }
                        other => {
                            return Err(parse_err(line_no, &format!("unknown mount key {other:?}")))
                        }
                    }
                }
                Section::Options => {
                    let (key, value) = line
                        .split_once('=')
                        .ok_or_else(|| parse_err(line_no, "expected key = value"))?;
                    let value = value.trim();
                    match key.trim() {
                        "null_band" => net.rig.null_band = floats(line_no, value, 1)?[0],
                        "sigma_ir" => net.stochastic.sigma_ir = floats(line_no, value, 1)?[0],
                        "sigma_rgb" => net.stochastic.sigma_rgb = floats(line_no, value, 1)?[0],
                        "sigma_depth_px" => {
                            net.stochastic.sigma_depth_px = floats(line_no, value, 1)?[0]
                        }
                        "sigma_disparity" => {
                            net.stochastic.quantization.sigma_disparity =
                                floats(line_no, value, 1)?[0]
                        }
                        "quantization_step" => {
                            net.stochastic.quantization.q = floats(line_no, value, 1)?[0]
                        }
                        "sigma_flatness" => {
                            net.stochastic.sigma_flatness = floats(line_no, value, 1)?[0]
                        }
                        "ir_select" => {
                            net.ir_select = IopSelection::from_names(value.split_whitespace())?
                        }
                        "rgb_select" => {
                            net.rgb_select = IopSelection::from_names(value.split_whitespace())?
                        }
                        "pro_select" => {
                            net.pro_select = IopSelection::from_names(value.split_whitespace())?
                        }
                        "baseline_gate" => {
                            let v = floats(line_no, value, 2)?;
                            net.baseline_gate = (v[0], v[1]);
                        }
                        other => {
                            return Err(parse_err(line_no, &format!("unknown option {other:?}")))
                        }
                    }
                }
                Section::Poses => {
                    let v = floats(line_no, line, 6)?;
                    net.poses.push(PoseSetup {
                        position: Point3::new(v[0], v[1], v[2]),
                        rotation: CardanRotation::new(v[3], v[4], v[5]),
                    });
                }
                Section::Targets => {
                    let mut parts: Vec<&str> = line.split_whitespace().collect();
                    if parts.len() != 4 {
                        return Err(parse_err(line_no, "expected x y z plane"));
                    }
                    let plane_tok = parts.pop().unwrap();
                    let plane = if plane_tok == "-" {
                        None
                    } else {
                        Some(plane_tok.parse::<usize>().map_err(|_| {
                            parse_err(line_no, &format!("bad plane index {plane_tok:?}"))
                        })?)
                    };
                    let v = floats(line_no, &parts.join(" "), 3)?;
                    net.targets.push(BoardTarget {
                        coords: Point3::new(v[0], v[1], v[2]),
                        plane,
                    });
                }
                Section::Planes => {
                    let v = floats(line_no, line, 4)?;
                    let plane =
                        Plane::new(geometry_core::Vec3::new(v[0], v[1], v[2]), v[3])
                            .map_err(|e| parse_err(line_no, &format!("bad plane: {e}")))?;
                    net.planes.push(plane);
                }
                Section::Board => {
                    let parts: Vec<&str> = line.split_whitespace().collect();
                    if parts.len() != 5 {
                        return Err(parse_err(line_no, "expected pose cam target x y"));
                    }
                    let pose = parts[0]
                        .parse::<usize>()
                        .map_err(|_| parse_err(line_no, "bad pose index"))?;
                    let camera = match parts[1] {
                        "ir" => CameraId::Ir,
                        "rgb" => CameraId::Rgb,
                        other => {
                            return Err(parse_err(line_no, &format!("unknown camera {other:?}")))
                        }
                    };
                    let target = parts[2]
                        .parse::<usize>()
                        .map_err(|_| parse_err(line_no, "bad target index"))?;
                    let x = parts[3]
                        .parse::<f64>()
                        .map_err(|_| parse_err(line_no, "bad x coordinate"))?;
                    let y = parts[4]
                        .parse::<f64>()
                        .map_err(|_| parse_err(line_no, "bad y coordinate"))?;
                    net.board.push(BoardObservation {
                        pose,
                        camera,
                        target,
                        x,
                        y,
                    });
                }
                Section::Depth => {
                    let parts: Vec<&str> = line.split_whitespace().collect();
                    if parts.len() != 5 {
                        return Err(parse_err(line_no, "expected pose plane u v z"));
                    }
                    let pose = parts[0]
                        .parse::<usize>()
                        .map_err(|_| parse_err(line_no, "bad pose index"))?;
                    let plane = parts[1]
                        .parse::<usize>()
                        .map_err(|_| parse_err(line_no, "bad plane index"))?;
                    let v = floats(line_no, &parts[2..].join(" "), 3)?;
                    net.depth.push(DepthSample {
                        pose,
                        plane,
                        u: v[0],
                        v: v[1],
                        z: v[2],
                    });
                }
            }
        }
        net.validate()?;
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use geometry_core::Vec3;

    fn tiny_network() -> KinectNetwork {
        let mut net = KinectNetwork::new(KinectRig::nominal());
        net.poses.push(PoseSetup {
            position: Point3::new(0.1, -0.2, 1.8),
            rotation: CardanRotation::new(0.01, -0.02, 0.3),
        });
        net.planes.push(Plane::new(Vec3::new(0.0, 0.0, 1.0), 0.3).unwrap());
        net.targets.push(BoardTarget {
            coords: Point3::new(0.4, 0.2, 0.3),
            plane: Some(0),
        });
        net.targets.push(BoardTarget {
            coords: Point3::new(-0.4, 0.1, 0.3),
            plane: None,
        });
        net.board.push(BoardObservation {
            pose: 0,
            camera: CameraId::Ir,
            target: 0,
            x: 1.25,
            y: -0.75,
        });
        net.board.push(BoardObservation {
            pose: 0,
            camera: CameraId::Rgb,
            target: 1,
            x: -0.5,
            y: 0.25,
        });
        net.depth.push(DepthSample {
            pose: 0,
            plane: 0,
            u: 320.0,
            v: 200.0,
            z: 1.5,
        });
        net
    }

    #[test]
    fn text_round_trip_preserves_the_network() {
        let mut net = tiny_network();
        net.rig.ir.k1 = -3.9e-3;
        net.rig.rop_pro.bx = 0.0765;
        net.rig.rop_pro.d_kappa = 7.4e-4;
        net.stochastic.sigma_depth_px = 0.0625;
        net.pro_select = IopSelection::from_names(["c"]).unwrap();
        let text = net.to_text();
        let back = KinectNetwork::from_text(&text).unwrap();
        assert_eq!(net, back);
    }

    #[test]
    fn validation_catches_broken_references() {
        let mut net = tiny_network();
        net.depth[0].plane = 7;
        assert!(net.validate().is_err());

        let mut net = tiny_network();
        net.board.push(net.board[0]);
        assert!(net.validate().is_err());

        let mut net = tiny_network();
        net.depth[0].z = -0.5;
        assert!(net.validate().is_err());

        let mut net = tiny_network();
        net.depth[0].u = 900.0;
        assert!(net.validate().is_err());

        let mut net = tiny_network();
        net.rig.rop_pro.bx = 0.3;
        assert!(net.validate().is_err());
    }

    #[test]
    fn parse_reports_line_numbers() {
        let text = "[poses]\n1 2 3\n";
        match KinectNetwork::from_text(text) {
            Err(KinectError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn pose_transform_matches_rotation_matrix() {
        let pose = PoseSetup {
            position: Point3::new(0.3, -0.1, 2.0),
            rotation: CardanRotation::new(0.1, -0.2, 0.4),
        };
        let p = Point3::new(0.5, 0.6, 0.1);
        let via_matrix = pose.rotation.matrix() * (p - pose.position);
        let via_transform = pose.transform().to_local(&p);
        assert!((via_matrix - via_transform.coords).norm() < 1e-12);
    }
}
