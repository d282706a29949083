//! Combined bundle adjustment over checkerboard corners and depth samples.
//!
//! Two observation families meet in one free-network least-squares problem:
//!
//! * **Corner rows** — each checkerboard corner measured in an IR or RGB
//!   image contributes two parametric collinearity rows linking the image
//!   coordinates to the device pose, the target coordinates, the camera's
//!   selected interior parameters, and (for RGB) its mounting.
//! * **Depth conditions** — each depth-map sample contributes two
//!   condition equations. The sampled surface point never becomes an
//!   unknown: the IR ray through the (corrected) depth pixel is intersected
//!   with the board plane analytically, and the intersection is projected
//!   into the pattern projector, where it must reproduce the synthesized
//!   projector coordinates of the sample. The pixel coordinates (u, v) and
//!   the synthesized pair (x_pro, y_pro) are four observations per sample;
//!   their joint effect is folded into a 2×2 equivalent covariance and the
//!   pair of conditions is whitened into two unit-weight rows.
//!
//! The synthesized projector pair is recovered once through the device's
//! fixed conversion model ([`BundleOptions::conversion`]) and then held
//! fixed. The horizontal coordinate encodes the measured stereo parallax —
//! the stored depth value is a bijective re-encoding of it through that
//! model — while the vertical coordinate rides on the same factory
//! geometry that produced the ranges, so its variance is the depth pixel
//! noise pushed through the transfer rather than an independent
//! measurement accuracy. Neither coordinate is re-derived from the
//! evolving estimate for use as data: that would feed the candidate
//! mounting back into its own observations, progressively discard the
//! parallax information, and let a self-synthesized coordinate confirm
//! whatever estimate it came from. An outer loop still re-projects the
//! point cloud with the current parameters after every pass; the shift of
//! that re-synthesis between passes is the outer convergence measure, and
//! a loop that keeps drifting past the pass limit is reported as a
//! failure with its history.
//!
//! Board targets tied to a plane add a flatness pseudo-observation each
//! (soft target-on-plane constraint) instead of a hard constraint, which
//! keeps the normal system well-conditioned and models real board
//! flatness. The free network keeps its seven gauge freedoms (translation,
//! rotation, scale — the scale direction includes the lever arms); the
//! minimum-norm solution pins them to the initial values, and a larger
//! numerically detected defect is reported as an error with the most
//! involved parameters named.
//!
//! After convergence, variance components are re-estimated for the four
//! measurement groups (IR corners, RGB corners, depth pixels, synthesized
//! projector coordinates) and the adjustment is repeated under the updated
//! weights until the factors settle. Standardized residuals are screened
//! against a normal quantile; optionally the worst offender is removed and
//! the whole solution repeated.

use std::collections::{BTreeMap, BTreeSet};

use geometry_core::lsq::{row_redundancy, solve_min_norm, MinNormSolution, NormalAccumulator};
use geometry_core::{Mat3, Plane, Point3, Vec3};
use nalgebra::{DMatrix, Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::camera::{
    iop_partials, project_with_jacobian, undistort, undistort_with_jacobian, CameraIntrinsics,
};
use crate::network::{CameraId, DepthSample, KinectNetwork, PoseSetup};
use crate::rig::{quantized_disparity_variance, KinectRig};
use crate::{KinectError, Result};

/// Observation groups of the bundle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KinectGroup {
    /// IR checkerboard corners (mm).
    Ir,
    /// RGB checkerboard corners (mm).
    Rgb,
    /// Depth-map pixel coordinates (px).
    Depth,
    /// Synthesized projector coordinates (mm).
    Projector,
    /// Target-on-plane flatness pseudo-observations (m).
    Flatness,
}

/// Display names of the groups, aligned with [`KinectGroup`] discriminants.
pub const GROUP_NAMES: [&str; 5] = ["ir", "rgb", "depth", "projector", "flatness"];

impl KinectGroup {
    fn index(self) -> usize {
        match self {
            KinectGroup::Ir => 0,
            KinectGroup::Rgb => 1,
            KinectGroup::Depth => 2,
            KinectGroup::Projector => 3,
            KinectGroup::Flatness => 4,
        }
    }
}

/// Solver configuration.
#[derive(Debug, Clone, Copy)]
pub struct BundleOptions {
    /// Gauss–Newton iteration limit per synthesis pass.
    pub max_inner_iterations: usize,
    /// Convergence tolerance on the largest parameter correction
    /// (native units: mm, m, rad).
    pub inner_tol: f64,
    /// Synthesis (outer) pass limit.
    pub max_outer_iterations: usize,
    /// Convergence tolerance on the largest synthesized projector
    /// coordinate shift between passes (mm).
    pub outer_tol: f64,
    /// Relative eigenvalue cutoff for the minimum-norm pseudo-inverse.
    pub rank_rel_tol: f64,
    /// Gauge freedoms a free network is allowed before the solver reports
    /// a datum failure.
    pub expected_defect: usize,
    /// Variance-component re-estimation passes (0 disables).
    pub vce_passes: usize,
    /// VCE stops once every group factor is within this of one.
    pub vce_tolerance: f64,
    /// Two-sided significance level of the residual screening.
    pub snoop_significance: f64,
    /// Maximum number of observations the rejection loop may remove
    /// (0 keeps screening purely diagnostic).
    pub max_rejected: usize,
    /// The model that converted raw stereo matches into the stored depth
    /// values (device firmware constants). The horizontal projector
    /// coordinate is synthesized through this fixed model exactly once,
    /// because it carries the measured parallax: pushing it through the
    /// current estimate instead would feed the candidate mounting back
    /// into its own observations and cancel the information. `None` uses
    /// the network's initial rig.
    pub conversion: Option<KinectRig>,
}

impl Default for BundleOptions {
    fn default() -> Self {
        Self {
            max_inner_iterations: 40,
            inner_tol: 1e-9,
            max_outer_iterations: 15,
            outer_tol: 1e-6,
            rank_rel_tol: 1e-10,
            expected_defect: 7,
            vce_passes: 8,
            vce_tolerance: 0.05,
            snoop_significance: 0.05,
            max_rejected: 0,
            conversion: None,
        }
    }
}

/// One residual of the adjusted network.
#[derive(Debug, Clone, Copy)]
pub struct KinectResidual {
    /// Observation group.
    pub group: KinectGroup,
    /// Index into the group's source collection: board observations for
    /// Ir/Rgb, depth samples for Depth/Projector, targets for Flatness.
    pub source: usize,
    /// Component within the observation (0 = x/u, 1 = y/v).
    pub component: usize,
    /// Estimated observation correction, in the group's units.
    pub residual: f64,
    /// A-priori standard deviation (after VCE scaling).
    pub sigma: f64,
    /// Redundancy share of this component.
    pub redundancy: f64,
    /// Standardized residual `v/(σ√r)`; NaN when untestable.
    pub standardized: f64,
}

/// An observation removed by the rejection loop.
#[derive(Debug, Clone, Copy)]
pub struct RejectedObservation {
    /// Group the flagged component belonged to.
    pub group: KinectGroup,
    /// Board-observation or depth-sample index.
    pub source: usize,
    /// Standardized residual that triggered the removal.
    pub standardized: f64,
}

/// Everything the bundle estimated, with its quality numbers.
#[derive(Debug, Clone)]
pub struct BundleResult {
    /// Estimated rig (interior orientations and mountings).
    pub rig: KinectRig,
    /// Estimated device poses.
    pub poses: Vec<PoseSetup>,
    /// Estimated target coordinates.
    pub targets: Vec<Point3>,
    /// Estimated board planes.
    pub planes: Vec<Plane>,
    /// Parameter labels, aligned with the covariance matrix.
    pub labels: Vec<String>,
    /// Posterior covariance of the unknowns (variance-factor scaled,
    /// pseudo-inverse cofactors under the minimum-norm datum).
    pub covariance: DMatrix<f64>,
    /// Posterior standard deviations, aligned with `labels`.
    pub sigmas: Vec<f64>,
    /// A-posteriori variance factor.
    pub variance_factor: f64,
    /// Numerical rank of the normal system.
    pub rank: usize,
    /// Detected datum defect.
    pub rank_defect: usize,
    /// Orthonormal basis of the null space (columns).
    pub null_basis: DMatrix<f64>,
    /// Total redundancy (observation rows minus rank).
    pub redundancy_total: f64,
    /// Redundancy accumulated per group.
    pub group_redundancy: [f64; 5],
    /// Weighted squared residual sum per group.
    pub group_vtwv: [f64; 5],
    /// Cumulative VCE variance scales for {ir, rgb, depth, projector},
    /// relative to the stated stochastic model.
    pub variance_components: [f64; 4],
    /// Stated stochastic model the components refer to.
    pub stochastic: crate::network::KinectStochasticModel,
    /// All residuals.
    pub residuals: Vec<KinectResidual>,
    /// Indices into `residuals` exceeding the screening quantile, worst
    /// first.
    pub snoop_flags: Vec<usize>,
    /// The screening quantile used.
    pub snoop_critical: f64,
    /// Observations removed by the rejection loop, in removal order.
    pub rejected: Vec<RejectedObservation>,
    /// Per-axis RMS of the dual-ray surface misclosure at the estimate
    /// (m); `None` without depth samples.
    pub misclosure_rmse: Option<[f64; 3]>,
    /// Final synthesized projector coordinates per depth sample (mm);
    /// rejected samples keep their last value.
    pub synthesized_projector: Vec<(f64, f64)>,
    /// Estimated observation corrections per depth sample
    /// (u px, v px, x_pro mm).
    pub depth_corrections: Vec<[f64; 3]>,
    /// Total Gauss–Newton iterations across all passes.
    pub inner_iterations: usize,
    /// Largest synthesized-coordinate shift after each outer pass (mm).
    pub outer_history: Vec<f64>,
    layout: Layout,
}

// ---------------------------------------------------------------------------
// Parameter layout
// ---------------------------------------------------------------------------

/// Column bookkeeping of the unknown vector:
/// `[ir iops | rgb iops | pro iops | rop_pro (3 angles + lever arm) |
///   rop_rgb | poses (position + angles) | targets | planes (2 tangent
///   tilts + offset)]`.
#[derive(Debug, Clone)]
struct Layout {
    ir: Vec<usize>,
    rgb: Vec<usize>,
    pro: Vec<usize>,
    ir_off: usize,
    rgb_off: usize,
    pro_off: usize,
    rop_pro_off: usize,
    rop_rgb_off: usize,
    pose_off: usize,
    target_off: usize,
    plane_off: usize,
    n_poses: usize,
    n_targets: usize,
    n_planes: usize,
    n: usize,
}

impl Layout {
    fn new(net: &KinectNetwork) -> Self {
        let ir: Vec<usize> = net.ir_select.indices().collect();
        let rgb: Vec<usize> = net.rgb_select.indices().collect();
        let pro: Vec<usize> = net.pro_select.indices().collect();
        let ir_off = 0;
        let rgb_off = ir_off + ir.len();
        let pro_off = rgb_off + rgb.len();
        let rop_pro_off = pro_off + pro.len();
        let rop_rgb_off = rop_pro_off + 6;
        let pose_off = rop_rgb_off + 6;
        let target_off = pose_off + 6 * net.poses.len();
        let plane_off = target_off + 3 * net.targets.len();
        let n = plane_off + 3 * net.planes.len();
        Self {
            ir,
            rgb,
            pro,
            ir_off,
            rgb_off,
            pro_off,
            rop_pro_off,
            rop_rgb_off,
            pose_off,
            target_off,
            plane_off,
            n_poses: net.poses.len(),
            n_targets: net.targets.len(),
            n_planes: net.planes.len(),
            n,
        }
    }

    fn pose_cols(&self, j: usize) -> usize {
        self.pose_off + 6 * j
    }

    fn target_cols(&self, t: usize) -> usize {
        self.target_off + 3 * t
    }

    fn plane_cols(&self, k: usize) -> usize {
        self.plane_off + 3 * k
    }

    fn iop_cols(&self, cam: CameraSlot) -> (usize, &[usize]) {
        match cam {
            CameraSlot::Ir => (self.ir_off, &self.ir),
            CameraSlot::Rgb => (self.rgb_off, &self.rgb),
            CameraSlot::Pro => (self.pro_off, &self.pro),
        }
    }

    fn labels(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.n);
        for idx in &self.ir {
            out.push(format!("ir.{}", crate::camera::IOP_NAMES[*idx]));
        }
        for idx in &self.rgb {
            out.push(format!("rgb.{}", crate::camera::IOP_NAMES[*idx]));
        }
        for idx in &self.pro {
            out.push(format!("pro.{}", crate::camera::IOP_NAMES[*idx]));
        }
        for mount in ["rop_pro", "rop_rgb"] {
            for part in ["domega", "dphi", "dkappa", "bx", "by", "bz"] {
                out.push(format!("{mount}.{part}"));
            }
        }
        for j in 0..self.n_poses {
            for part in ["x", "y", "z", "omega", "phi", "kappa"] {
                out.push(format!("pose{j}.{part}"));
            }
        }
        for t in 0..self.n_targets {
            for part in ["x", "y", "z"] {
                out.push(format!("target{t}.{part}"));
            }
        }
        for k in 0..self.n_planes {
            for part in ["t1", "t2", "d"] {
                out.push(format!("plane{k}.{part}"));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CameraSlot {
    Ir,
    Rgb,
    Pro,
}

// ---------------------------------------------------------------------------
// Mutable estimate
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct State {
    rig: KinectRig,
    poses: Vec<PoseSetup>,
    targets: Vec<Point3>,
    planes: Vec<Plane>,
}

impl State {
    fn from_network(net: &KinectNetwork) -> Self {
        Self {
            rig: net.rig,
            poses: net.poses.clone(),
            targets: net.targets.iter().map(|t| t.coords).collect(),
            planes: net.planes.clone(),
        }
    }

    fn camera(&self, slot: CameraSlot) -> &CameraIntrinsics {
        match slot {
            CameraSlot::Ir => &self.rig.ir,
            CameraSlot::Rgb => &self.rig.rgb,
            CameraSlot::Pro => &self.rig.pro,
        }
    }

    fn camera_mut(&mut self, slot: CameraSlot) -> &mut CameraIntrinsics {
        match slot {
            CameraSlot::Ir => &mut self.rig.ir,
            CameraSlot::Rgb => &mut self.rig.rgb,
            CameraSlot::Pro => &mut self.rig.pro,
        }
    }
}

fn apply_iop(cam: &mut CameraIntrinsics, idx: usize, dv: f64) {
    match idx {
        0 => cam.xp += dv,
        1 => cam.yp += dv,
        2 => cam.c += dv,
        3 => cam.k1 += dv,
        4 => cam.k2 += dv,
        5 => cam.k3 += dv,
        6 => cam.p1 += dv,
        7 => cam.p2 += dv,
        8 => cam.a1 += dv,
        _ => cam.a2 += dv,
    }
}

// ---------------------------------------------------------------------------
// Row bookkeeping
// ---------------------------------------------------------------------------

/// A parametric measurement row (corner and flatness families).
struct ParamRow {
    group: KinectGroup,
    source: usize,
    component: usize,
    cols: Vec<usize>,
    vals: Vec<f64>,
    w: f64,
    l: f64,
}

/// A whitened pair of depth condition rows with everything needed to back-
/// substitute observation corrections and split redundancy per component.
struct DepthRecord {
    sample: usize,
    cols: Vec<usize>,
    /// Condition Jacobian pairs over `cols` (mm per unit): horizontal and
    /// vertical projector component.
    a: Vec<[f64; 2]>,
    /// Linearization constants `g₀ − B·v₀` (mm).
    w_const: Vector2<f64>,
    /// `∂g/∂(u, v)` (mm/px).
    b_uv: Matrix2<f64>,
    /// Component standard deviations (u px, v px, x mm, y mm), VCE-scaled.
    sigma: [f64; 4],
    /// Equivalent covariance `C = BΣBᵀ` (mm²) and its inverse.
    c: Matrix2<f64>,
    c_inv: Matrix2<f64>,
}

struct Built {
    acc: NormalAccumulator,
    rows: Vec<ParamRow>,
    depth: Vec<DepthRecord>,
    frames: Vec<(Vec3, Vec3)>,
}

/// Deterministic orthonormal basis of a plane's tangent space.
fn tangent_frame(n: &Vec3) -> (Vec3, Vec3) {
    let pick = if n.x.abs() <= n.y.abs() && n.x.abs() <= n.z.abs() {
        Vec3::x()
    } else if n.y.abs() <= n.z.abs() {
        Vec3::y()
    } else {
        Vec3::z()
    };
    let e1 = (pick - n * pick.dot(n)).normalize();
    let e2 = n.cross(&e1);
    (e1, e2)
}

// ---------------------------------------------------------------------------
// System construction
// ---------------------------------------------------------------------------

struct PoseCache {
    m: Mat3,
    dm: [Mat3; 3],
}

#[allow(clippy::too_many_arguments)]
fn build_system(
    state: &State,
    net: &KinectNetwork,
    synth: &[Option<(f64, f64)>],
    v0: &[[f64; 3]],
    scales: &[f64; 4],
    excluded_board: &BTreeSet<usize>,
    layout: &Layout,
) -> Result<Built> {
    let mut acc = NormalAccumulator::new(layout.n);
    let mut rows = Vec::new();
    let mut depth = Vec::new();
    let frames: Vec<(Vec3, Vec3)> = state.planes.iter().map(|p| tangent_frame(&p.normal)).collect();

    let poses: Vec<PoseCache> = state
        .poses
        .iter()
        .map(|p| PoseCache {
            m: p.rotation.matrix(),
            dm: p.rotation.partials(),
        })
        .collect();

    let rot_pro = state.rig.rop_pro.rotation();
    let dr_pro = rot_pro.matrix();
    let ddr_pro = rot_pro.partials();
    let b_pro = state.rig.rop_pro.baseline();
    let rot_rgb = state.rig.rop_rgb.rotation();
    let dr_rgb = rot_rgb.matrix();
    let ddr_rgb = rot_rgb.partials();
    let b_rgb = state.rig.rop_rgb.baseline();

    let w_ir = {
        let s = net.stochastic.sigma_ir * scales[0].sqrt();
        1.0 / (s * s)
    };
    let w_rgb = {
        let s = net.stochastic.sigma_rgb * scales[1].sqrt();
        1.0 / (s * s)
    };
    let w_flat = 1.0 / (net.stochastic.sigma_flatness * net.stochastic.sigma_flatness);

    // Corner rows.
    for (o_idx, obs) in net.board.iter().enumerate() {
        if excluded_board.contains(&o_idx) {
            continue;
        }
        let cache = &poses[obs.pose];
        let t_pos = state.poses[obs.pose].position;
        let rel = state.targets[obs.target] - t_pos;
        let p_ir = cache.m * rel;

        let (slot, q, group, w) = match obs.camera {
            CameraId::Ir => (CameraSlot::Ir, p_ir, KinectGroup::Ir, w_ir),
            CameraId::Rgb => (
                CameraSlot::Rgb,
                dr_rgb * (p_ir - b_rgb),
                KinectGroup::Rgb,
                w_rgb,
            ),
        };
        let cam = state.camera(slot);
        let pre = project_with_jacobian(&q, cam)?;
        let g = &pre.jac_q;

        // ∂q/∂(world target), shared by target and pose-position columns.
        let world_map = match obs.camera {
            CameraId::Ir => cache.m,
            CameraId::Rgb => dr_rgb * cache.m,
        };
        let gw = g * world_map; // 2×3

        let mut cols = Vec::with_capacity(16);
        let mut vals_x = Vec::with_capacity(16);
        let mut vals_y = Vec::with_capacity(16);
        let push = |col: usize, vx: f64, vy: f64, cols: &mut Vec<usize>,
                    vals_x: &mut Vec<f64>, vals_y: &mut Vec<f64>| {
            cols.push(col);
            vals_x.push(vx);
            vals_y.push(vy);
        };

        // Camera interior parameters.
        let (iop_off, iop_idx) = layout.iop_cols(slot);
        let selection = match slot {
            CameraSlot::Ir => &net.ir_select,
            CameraSlot::Rgb => &net.rgb_select,
            CameraSlot::Pro => &net.pro_select,
        };
        for (slot_i, part) in iop_partials(&pre, cam, selection).into_iter().enumerate() {
            debug_assert!(slot_i < iop_idx.len());
            push(iop_off + slot_i, part.0, part.1, &mut cols, &mut vals_x, &mut vals_y);
        }

        // RGB mounting.
        if slot == CameraSlot::Rgb {
            let arm = p_ir - b_rgb;
            for (a, ddr) in ddr_rgb.iter().enumerate() {
                let dq = ddr * arm;
                let v = g * dq;
                push(layout.rop_rgb_off + a, v.x, v.y, &mut cols, &mut vals_x, &mut vals_y);
            }
            let gb = g * dr_rgb; // ∂(x,y)/∂b = −G·ΔR
            for a in 0..3 {
                push(
                    layout.rop_rgb_off + 3 + a,
                    -gb[(0, a)],
                    -gb[(1, a)],
                    &mut cols,
                    &mut vals_x,
                    &mut vals_y,
                );
            }
        }

        // Pose position and angles.
        let base = layout.pose_cols(obs.pose);
        for a in 0..3 {
            push(base + a, -gw[(0, a)], -gw[(1, a)], &mut cols, &mut vals_x, &mut vals_y);
        }
        for (a, dm) in cache.dm.iter().enumerate() {
            let dq_ir = dm * rel;
            let dq = match obs.camera {
                CameraId::Ir => dq_ir,
                CameraId::Rgb => dr_rgb * dq_ir,
            };
            let v = g * dq;
            push(base + 3 + a, v.x, v.y, &mut cols, &mut vals_x, &mut vals_y);
        }

        // Target coordinates.
        let tbase = layout.target_cols(obs.target);
        for a in 0..3 {
            push(tbase + a, gw[(0, a)], gw[(1, a)], &mut cols, &mut vals_x, &mut vals_y);
        }

        let lx = obs.x - pre.x;
        let ly = obs.y - pre.y;
        acc.add_sparse_row(&cols, &vals_x, w, lx);
        acc.add_sparse_row(&cols, &vals_y, w, ly);
        rows.push(ParamRow {
            group,
            source: o_idx,
            component: 0,
            cols: cols.clone(),
            vals: vals_x,
            w,
            l: lx,
        });
        rows.push(ParamRow {
            group,
            source: o_idx,
            component: 1,
            cols,
            vals: vals_y,
            w,
            l: ly,
        });
    }

    // Flatness pseudo-observations.
    for (t_idx, target) in net.targets.iter().enumerate() {
        let Some(k) = target.plane else { continue };
        let plane = &state.planes[k];
        let coords = state.targets[t_idx];
        let (e1, e2) = frames[k];
        let f = plane.normal.dot(&coords.coords) - plane.d;
        let tbase = layout.target_cols(t_idx);
        let pbase = layout.plane_cols(k);
        let cols = vec![tbase, tbase + 1, tbase + 2, pbase, pbase + 1, pbase + 2];
        let vals = vec![
            plane.normal.x,
            plane.normal.y,
            plane.normal.z,
            e1.dot(&coords.coords),
            e2.dot(&coords.coords),
            -1.0,
        ];
        acc.add_sparse_row(&cols, &vals, w_flat, -f);
        rows.push(ParamRow {
            group: KinectGroup::Flatness,
            source: t_idx,
            component: 0,
            cols,
            vals,
            w: w_flat,
            l: -f,
        });
    }

    // Depth conditions.
    let pitch_pro = state.rig.pro.pitch_mm();
    let sigma_d = net.stochastic.sigma_depth_px * scales[2].sqrt();
    let var_disp_mm = quantized_disparity_variance(&net.stochastic.quantization)
        * pitch_pro
        * pitch_pro
        * scales[3];
    let ir_cam = &state.rig.ir;

    for (s_idx, sample) in net.depth.iter().enumerate() {
        let Some(pro_obs) = synth[s_idx] else { continue };
        let corr = v0[s_idx];
        let cache = &poses[sample.pose];
        let t_pos = state.poses[sample.pose].position;
        let plane = &state.planes[sample.plane];
        let n = plane.normal;

        // Corrected depth pixel → IR-frame ray.
        let u_hat = sample.u + corr[0];
        let v_hat = sample.v + corr[1];
        let (x_mm, y_mm) = ir_cam.pixel_to_image(u_hat, v_hat + state.rig.null_band);
        let ((xi, eta), kinv) =
            undistort_with_jacobian(x_mm - ir_cam.xp, y_mm - ir_cam.yp, ir_cam)?;
        let r_l = Vec3::new(xi / ir_cam.c, eta / ir_cam.c, -1.0);

        // Ray ∩ plane in object space.
        let d_world = cache.m.transpose() * r_l;
        let nd = n.dot(&d_world);
        if nd.abs() < 1e-9 {
            return Err(KinectError::SingularSystem {
                diagnostic: format!("depth sample {s_idx}: ray grazes its plane (n·D = {nd:.2e})"),
            });
        }
        let mu = (plane.d - n.dot(&t_pos.coords)) / nd;
        if mu <= 0.0 {
            return Err(KinectError::SingularSystem {
                diagnostic: format!(
                    "depth sample {s_idx}: plane intersection behind the camera (μ = {mu:.3e})"
                ),
            });
        }
        let x_world = t_pos + d_world * mu;
        let p_ir = cache.m * (x_world - t_pos);

        // Into the projector.
        let q = dr_pro * (p_ir - b_pro);
        let pre = project_with_jacobian(&q, &state.rig.pro)?;
        let g = &pre.jac_q;
        let gs = g * dr_pro; // per IR-frame delta
        let h = gs * r_l; // ∂g/∂μ

        let mut cols = Vec::with_capacity(24);
        let mut a0 = Vec::with_capacity(24);
        // The condition is the horizontal projector component only; the
        // vertical partials fall out of the same 2-row projection algebra
        // and are simply not assembled.
        let push = |col: usize, vx: f64, _vy: f64, cols: &mut Vec<usize>, a0: &mut Vec<f64>| {
            cols.push(col);
            a0.push(vx);
        };

        // Chain from a ray-direction disturbance to the condition value:
        // the intersection slides along the plane and the projector sees
        // the slide plus the direct ray change.
        let chain_ray = |dr: Vec3| -> (f64, f64) {
            let dd_world = cache.m.transpose() * dr;
            let dmu = -mu * n.dot(&dd_world) / nd;
            let dp = dr * mu + r_l * dmu;
            let v = gs * dp;
            (v.x, v.y)
        };

        // IR interior parameters steer the ray.
        let (ir_off, _) = layout.iop_cols(CameraSlot::Ir);
        for (slot_i, idx) in layout.ir.iter().enumerate() {
            let dr = match idx {
                0 => {
                    let d = kinv * Vector2::new(-1.0, 0.0);
                    Vec3::new(d.x / ir_cam.c, d.y / ir_cam.c, 0.0)
                }
                1 => {
                    let d = kinv * Vector2::new(0.0, -1.0);
                    Vec3::new(d.x / ir_cam.c, d.y / ir_cam.c, 0.0)
                }
                2 => Vec3::new(-xi / (ir_cam.c * ir_cam.c), -eta / (ir_cam.c * ir_cam.c), 0.0),
                _ => {
                    let basis = crate::camera::brown_basis(xi, eta)[idx - 3];
                    let d = kinv * Vector2::new(-basis.0, -basis.1);
                    Vec3::new(d.x / ir_cam.c, d.y / ir_cam.c, 0.0)
                }
            };
            let v = chain_ray(dr);
            push(ir_off + slot_i, v.0, v.1, &mut cols, &mut a0);
        }

        // Projector interior parameters act on the prediction directly.
        let (pro_off, _) = layout.iop_cols(CameraSlot::Pro);
        for (slot_i, part) in iop_partials(&pre, &state.rig.pro, &net.pro_select)
            .into_iter()
            .enumerate()
        {
            push(pro_off + slot_i, part.0, part.1, &mut cols, &mut a0);
        }

        // Projector mounting.
        let arm = p_ir - b_pro;
        for (a, ddr) in ddr_pro.iter().enumerate() {
            let v = g * (ddr * arm);
            push(layout.rop_pro_off + a, v.x, v.y, &mut cols, &mut a0);
        }
        for a in 0..3 {
            push(layout.rop_pro_off + 3 + a, -gs[(0, a)], -gs[(1, a)], &mut cols, &mut a0);
        }

        // Pose position: the intersection slides as the ray origin moves.
        let base = layout.pose_cols(sample.pose);
        let scale = -1.0 / nd;
        for a in 0..3 {
            let na = n[a];
            push(base + a, h.x * na * scale, h.y * na * scale, &mut cols, &mut a0);
        }
        // Pose angles: both the world ray and the frame of the projector
        // chain rotate.
        for (a, dm) in cache.dm.iter().enumerate() {
            let dd_world = dm.transpose() * r_l;
            let dmu = -mu * n.dot(&dd_world) / nd;
            let dx_world = dd_world * mu + d_world * dmu;
            let dp_ir = dm * (x_world - t_pos) + cache.m * dx_world;
            let v = gs * dp_ir;
            push(base + 3 + a, v.x, v.y, &mut cols, &mut a0);
        }

        // Plane parameters.
        let pbase = layout.plane_cols(sample.plane);
        let (e1, e2) = frames[sample.plane];
        for (a, e) in [e1, e2].iter().enumerate() {
            let dmu = -x_world.coords.dot(e) / nd;
            push(pbase + a, h.x * dmu, h.y * dmu, &mut cols, &mut a0);
        }
        push(pbase + 2, h.x / nd, h.y / nd, &mut cols, &mut a0);

        // Observation partials B = [B_u, B_v, −1].
        let pitch_ir = ir_cam.pitch_mm();
        let du = kinv * Vector2::new(pitch_ir, 0.0);
        let dv = kinv * Vector2::new(0.0, -pitch_ir);
        let cu = chain_ray(Vec3::new(du.x / ir_cam.c, du.y / ir_cam.c, 0.0));
        let cv = chain_ray(Vec3::new(dv.x / ir_cam.c, dv.y / ir_cam.c, 0.0));
        let b_uv = [cu.0, cv.0];

        // Misclosure at the corrected observations.
        let g0 = pre.x - (pro_obs.0 + corr[2]);
        let w_const = g0 - b_uv[0] * corr[0] - b_uv[1] * corr[1] + corr[2];

        // Equivalent variance and whitening.
        let sigma = [sigma_d, sigma_d, var_disp_mm.sqrt()];
        let c = sigma_d * sigma_d * (b_uv[0] * b_uv[0] + b_uv[1] * b_uv[1]) + var_disp_mm;
        if c <= 0.0 {
            return Err(KinectError::SingularSystem {
                diagnostic: format!("depth sample {s_idx}: equivalent variance not positive"),
            });
        }
        let inv_sqrt_c = c.sqrt().recip();

        // The whitened row carries unit weight.
        let w0: Vec<f64> = a0.iter().map(|a| a * inv_sqrt_c).collect();
        acc.add_sparse_row(&cols, &w0, 1.0, -w_const * inv_sqrt_c);

        depth.push(DepthRecord {
            sample: s_idx,
            cols,
            a: a0,
            w_const,
            b_uv,
            sigma,
            c,
        });
    }

    Ok(Built {
        acc,
        rows,
        depth,
        frames,
    })
}

// ---------------------------------------------------------------------------
// Updates
// ---------------------------------------------------------------------------

fn apply_updates(
    state: &mut State,
    built: &Built,
    sol: &MinNormSolution,
    layout: &Layout,
) -> Result<()> {
    let d = &sol.delta;
    for (slot_i, idx) in layout.ir.iter().enumerate() {
        apply_iop(state.camera_mut(CameraSlot::Ir), *idx, d[layout.ir_off + slot_i]);
    }
    for (slot_i, idx) in layout.rgb.iter().enumerate() {
        apply_iop(state.camera_mut(CameraSlot::Rgb), *idx, d[layout.rgb_off + slot_i]);
    }
    for (slot_i, idx) in layout.pro.iter().enumerate() {
        apply_iop(state.camera_mut(CameraSlot::Pro), *idx, d[layout.pro_off + slot_i]);
    }
    let rp = layout.rop_pro_off;
    state.rig.rop_pro.d_omega += d[rp];
    state.rig.rop_pro.d_phi += d[rp + 1];
    state.rig.rop_pro.d_kappa += d[rp + 2];
    state.rig.rop_pro.bx += d[rp + 3];
    state.rig.rop_pro.by += d[rp + 4];
    state.rig.rop_pro.bz += d[rp + 5];
    let rr = layout.rop_rgb_off;
    state.rig.rop_rgb.d_omega += d[rr];
    state.rig.rop_rgb.d_phi += d[rr + 1];
    state.rig.rop_rgb.d_kappa += d[rr + 2];
    state.rig.rop_rgb.bx += d[rr + 3];
    state.rig.rop_rgb.by += d[rr + 4];
    state.rig.rop_rgb.bz += d[rr + 5];
    for (j, pose) in state.poses.iter_mut().enumerate() {
        let base = layout.pose_cols(j);
        pose.position += Vec3::new(d[base], d[base + 1], d[base + 2]);
        pose.rotation.omega += d[base + 3];
        pose.rotation.phi += d[base + 4];
        pose.rotation.kappa += d[base + 5];
    }
    for (t, target) in state.targets.iter_mut().enumerate() {
        let base = layout.target_cols(t);
        *target += Vec3::new(d[base], d[base + 1], d[base + 2]);
    }
    for (k, plane) in state.planes.iter_mut().enumerate() {
        let base = layout.plane_cols(k);
        let (e1, e2) = built.frames[k];
        let n_raw = plane.normal + e1 * d[base] + e2 * d[base + 1];
        *plane = Plane::new(n_raw, plane.d + d[base + 2]).map_err(|e| {
            KinectError::SingularSystem {
                diagnostic: format!("plane {k} update degenerated: {e}"),
            }
        })?;
    }
    Ok(())
}

/// Total observation corrections (u, v, x_pro) of one depth condition:
/// `v̂ = Σ Bᵀ C⁻¹ r` with `r = −(w₀ + A·δ)`.
fn depth_corrections_of(rec: &DepthRecord, sol: &MinNormSolution) -> [f64; 3] {
    let mut a_delta = 0.0;
    for (i, col) in rec.cols.iter().enumerate() {
        a_delta += rec.a[i] * sol.delta[*col];
    }
    let y = -(rec.w_const + a_delta) / rec.c;
    let s = &rec.sigma;
    [
        s[0] * s[0] * rec.b_uv[0] * y,
        s[1] * s[1] * rec.b_uv[1] * y,
        -s[2] * s[2] * y,
    ]
}

/// Back-substitutes the total observation corrections of each depth sample.
fn update_depth_corrections(v0: &mut [[f64; 3]], built: &Built, sol: &MinNormSolution) {
    for rec in &built.depth {
        v0[rec.sample] = depth_corrections_of(rec, sol);
    }
}

fn check_defect(sol: &MinNormSolution, layout: &Layout, opts: &BundleOptions) -> Result<()> {
    if sol.defect > opts.expected_defect {
        let labels = layout.labels();
        let mut involved = Vec::new();
        for col in 0..sol.defect {
            let mut best = 0;
            let mut best_val = 0.0;
            for r in 0..layout.n {
                let v = sol.null_basis[(r, col)].abs();
                if v > best_val {
                    best_val = v;
                    best = r;
                }
            }
            let label = labels[best].clone();
            if !involved.contains(&label) {
                involved.push(label);
            }
        }
        return Err(KinectError::DatumDefectExceeded {
            detected: sol.defect,
            expected: opts.expected_defect,
            diagnostic: format!("null space touches {}", involved.join(", ")),
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Assessment (residuals, redundancy, variance components)
// ---------------------------------------------------------------------------

struct Assessment {
    residuals: Vec<KinectResidual>,
    group_redundancy: [f64; 5],
    group_vtwv: [f64; 5],
    redundancy_total: f64,
    variance_factor: f64,
    depth_corrections: Vec<[f64; 3]>,
}

fn assess(built: &Built, sol: &MinNormSolution, n_samples: usize) -> Assessment {
    let mut residuals = Vec::with_capacity(built.rows.len() + 3 * built.depth.len());
    let mut group_redundancy = [0.0; 5];
    let mut group_vtwv = [0.0; 5];

    for row in &built.rows {
        let mut a_delta = 0.0;
        for (i, col) in row.cols.iter().enumerate() {
            a_delta += row.vals[i] * sol.delta[*col];
        }
        let v = a_delta - row.l;
        let r = row_redundancy(&row.cols, &row.vals, row.w, &sol.cov);
        let sigma = row.w.sqrt().recip();
        let standardized = if r > 1e-12 {
            v / (sigma * r.sqrt())
        } else {
            f64::NAN
        };
        let gi = row.group.index();
        group_redundancy[gi] += r;
        group_vtwv[gi] += row.w * v * v;
        residuals.push(KinectResidual {
            group: row.group,
            source: row.source,
            component: row.component,
            residual: v,
            sigma,
            redundancy: r,
            standardized,
        });
    }

    let mut depth_corrections = vec![[0.0; 3]; n_samples];
    for rec in &built.depth {
        let v3 = depth_corrections_of(rec, sol);
        depth_corrections[rec.sample] = v3;

        // a·N⁺·aᵀ over the sample's columns → redundancy split per
        // observation component through M = C⁻¹(C − aN⁺aᵀ)C⁻¹.
        let mut anat = 0.0;
        for (i, ci) in rec.cols.iter().enumerate() {
            for (j, cj) in rec.cols.iter().enumerate() {
                anat += rec.a[i] * sol.cov[(*ci, *cj)] * rec.a[j];
            }
        }
        let m = (rec.c - anat) / (rec.c * rec.c);
        let b_comps = [rec.b_uv[0], rec.b_uv[1], -1.0];
        let s = &rec.sigma;
        for comp in 0..3 {
            let r = (s[comp] * s[comp] * b_comps[comp] * b_comps[comp] * m).max(0.0);
            let group = if comp < 2 {
                KinectGroup::Depth
            } else {
                KinectGroup::Projector
            };
            let standardized = if r > 1e-12 {
                v3[comp] / (s[comp] * r.sqrt())
            } else {
                f64::NAN
            };
            let gi = group.index();
            group_redundancy[gi] += r;
            group_vtwv[gi] += v3[comp] * v3[comp] / (s[comp] * s[comp]);
            residuals.push(KinectResidual {
                group,
                source: rec.sample,
                component: if comp < 2 { comp } else { 0 },
                residual: v3[comp],
                sigma: s[comp],
                redundancy: r,
                standardized,
            });
        }
    }

    let redundancy_total: f64 = group_redundancy.iter().sum();
    let vtwv_total: f64 = group_vtwv.iter().sum();
    let variance_factor = if redundancy_total > 1e-9 {
        vtwv_total / redundancy_total
    } else {
        f64::NAN
    };
    Assessment {
        residuals,
        group_redundancy,
        group_vtwv,
        redundancy_total,
        variance_factor,
        depth_corrections,
    }
}

// ---------------------------------------------------------------------------
// Synthesis of projector coordinates
// ---------------------------------------------------------------------------

fn synthesize(
    rig: &KinectRig,
    net: &KinectNetwork,
    excluded_depth: &BTreeSet<usize>,
) -> Result<Vec<Option<(f64, f64)>>> {
    net.depth
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if excluded_depth.contains(&i) {
                return Ok(None);
            }
            let p = crate::camera::depth_pixel_to_point(s.u, s.v, s.z, &rig.ir, rig.null_band)?;
            crate::rig::backproject_to_projector(&p, rig).map(Some)
        })
        .collect()
}

/// Pins the horizontal coordinate to its conversion-model value: that
/// component encodes the measured parallax and must not follow the
/// estimate, while the epipolar vertical transfer legitimately does.
fn anchor_parallax(synth: &mut [Option<(f64, f64)>], anchor: &[Option<(f64, f64)>]) {
    for (s, a) in synth.iter_mut().zip(anchor) {
        if let (Some(s), Some(a)) = (s, a) {
            s.0 = a.0;
        }
    }
}

fn synth_shift(a: &[Option<(f64, f64)>], b: &[Option<(f64, f64)>]) -> f64 {
    a.iter()
        .zip(b)
        .filter_map(|(x, y)| match (x, y) {
            (Some(x), Some(y)) => Some((x.0 - y.0).abs().max((x.1 - y.1).abs())),
            _ => None,
        })
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Misclosure diagnostics
// ---------------------------------------------------------------------------

/// For each depth sample, the gap between the surface point seen along the
/// IR ray and the one seen along the projector ray (object space, m).
///
/// Both rays are intersected with the sample's plane: the IR ray comes
/// straight from the depth pixel, the projector ray from the supplied
/// projector coordinates (mm, one pair per sample, which embed the
/// measured range through the stereo parallax). The observations are held
/// fixed while `rig` varies, so the same data can be scored under a
/// nominal and an estimated device model: a well calibrated rig closes
/// the loop, while interior or mounting errors leave gaps that grow with
/// range.
pub fn misclosure_vectors(
    rig: &KinectRig,
    poses: &[PoseSetup],
    planes: &[Plane],
    samples: &[DepthSample],
    projector_obs: &[(f64, f64)],
) -> Result<Vec<Vec3>> {
    if projector_obs.len() != samples.len() {
        return Err(KinectError::InvalidNetwork {
            reason: format!(
                "{} projector observation pairs supplied for {} depth samples",
                projector_obs.len(),
                samples.len()
            ),
        });
    }
    let dr_pro = rig.rop_pro.matrix();
    let b_pro = rig.rop_pro.baseline();
    samples
        .iter()
        .zip(projector_obs)
        .enumerate()
        .map(|(i, (s, &(xp, yp)))| {
            let pose = poses.get(s.pose).ok_or_else(|| KinectError::InvalidNetwork {
                reason: format!("depth sample {i} references missing pose {}", s.pose),
            })?;
            let plane = planes.get(s.plane).ok_or_else(|| KinectError::InvalidNetwork {
                reason: format!("depth sample {i} references missing plane {}", s.plane),
            })?;
            let m = pose.rotation.matrix();
            let mt = m.transpose();
            let t = pose.position;

            let q = crate::camera::depth_pixel_to_point(s.u, s.v, s.z, &rig.ir, rig.null_band)?;
            let x_ir = intersect(&(mt * q.coords), &t, plane, i)?;

            let (xi_p, eta_p) = undistort(xp - rig.pro.xp, yp - rig.pro.yp, &rig.pro)?;
            let ray_pro = Vec3::new(xi_p / rig.pro.c, eta_p / rig.pro.c, -1.0);
            let dir = mt * (dr_pro.transpose() * ray_pro);
            let origin = t + mt * b_pro;
            let x_pro = intersect(&dir, &origin, plane, i)?;

            Ok(x_pro - x_ir)
        })
        .collect()
}

fn intersect(dir: &Vec3, origin: &Point3, plane: &Plane, sample: usize) -> Result<Point3> {
    let nd = plane.normal.dot(dir);
    if nd.abs() < 1e-9 {
        return Err(KinectError::SingularSystem {
            diagnostic: format!("depth sample {sample}: ray grazes its plane (n·D = {nd:.2e})"),
        });
    }
    let mu = (plane.d - plane.normal.dot(&origin.coords)) / nd;
    Ok(origin + dir * mu)
}

/// Per-axis RMS of misclosure vectors (m); `None` when empty.
pub fn misclosure_rms(vectors: &[Vec3]) -> Option<[f64; 3]> {
    if vectors.is_empty() {
        return None;
    }
    let n = vectors.len() as f64;
    let mut acc = [0.0; 3];
    for v in vectors {
        acc[0] += v.x * v.x;
        acc[1] += v.y * v.y;
        acc[2] += v.z * v.z;
    }
    Some([(acc[0] / n).sqrt(), (acc[1] / n).sqrt(), (acc[2] / n).sqrt()])
}

// ---------------------------------------------------------------------------
// Solver driver
// ---------------------------------------------------------------------------

/// Runs the full estimation: synthesis passes around a Gauss–Newton core,
/// variance-component re-estimation, residual screening, and (optionally)
/// worst-first rejection.
pub fn solve_kinect_bundle(net: &KinectNetwork, opts: &BundleOptions) -> Result<BundleResult> {
    net.validate()?;
    let mut excluded_board: BTreeSet<usize> = BTreeSet::new();
    let mut excluded_depth: BTreeSet<usize> = BTreeSet::new();
    let mut rejected: Vec<RejectedObservation> = Vec::new();

    loop {
        let mut result = solve_once(net, opts, &excluded_board, &excluded_depth)?;
        result.rejected = rejected.clone();
        if rejected.len() >= opts.max_rejected {
            return Ok(result);
        }
        let worst = result
            .snoop_flags
            .iter()
            .map(|&i| result.residuals[i])
            .find(|r| !matches!(r.group, KinectGroup::Flatness));
        let Some(r) = worst else {
            return Ok(result);
        };
        match r.group {
            KinectGroup::Ir | KinectGroup::Rgb => {
                excluded_board.insert(r.source);
            }
            _ => {
                excluded_depth.insert(r.source);
            }
        }
        rejected.push(RejectedObservation {
            group: r.group,
            source: r.source,
            standardized: r.standardized,
        });
    }
}

fn solve_once(
    net: &KinectNetwork,
    opts: &BundleOptions,
    excluded_board: &BTreeSet<usize>,
    excluded_depth: &BTreeSet<usize>,
) -> Result<BundleResult> {
    let layout = Layout::new(net);
    let mut state = State::from_network(net);
    let mut scales = [1.0f64; 4];
    let mut inner_total = 0usize;
    let mut outer_history = Vec::new();

    // The horizontal projector coordinate carries the measured parallax and
    // is recovered once through the fixed conversion model; only the
    // epipolar vertical transfer follows the evolving estimate.
    let conversion = opts.conversion.unwrap_or(net.rig);
    let anchor = synthesize(&conversion, net, excluded_depth)?;

    let mut vce_pass = 0usize;
    let (sol, assessment, synth) = loop {
        // Synthesis passes under the current weights.
        let mut synth = synthesize(&state.rig, net, excluded_depth)?;
        anchor_parallax(&mut synth, &anchor);
        let mut v0 = vec![[0.0; 3]; net.depth.len()];
        let mut settled = false;
        let mut last_inner = None;
        for _ in 0..opts.max_outer_iterations {
            let (built, sol, iters) = inner_solve(
                &mut state,
                net,
                &synth,
                &mut v0,
                &scales,
                excluded_board,
                &layout,
                opts,
            )?;
            inner_total += iters;
            let mut new_synth = synthesize(&state.rig, net, excluded_depth)?;
            anchor_parallax(&mut new_synth, &anchor);
            let shift = synth_shift(&synth, &new_synth);
            outer_history.push(shift);
            synth = new_synth;
            last_inner = Some((built, sol));
            if shift < opts.outer_tol {
                settled = true;
                break;
            }
            // Projector observations moved: restart their corrections.
            v0 = vec![[0.0; 3]; net.depth.len()];
        }
        if !settled && !net.depth.is_empty() {
            return Err(KinectError::SynthesisNoConvergence {
                iterations: opts.max_outer_iterations,
                history: outer_history,
            });
        }
        let (built, sol) = last_inner.expect("at least one synthesis pass runs");
        let assessment = assess(&built, &sol, net.depth.len());

        // Variance components: refine group weights and repeat, unless the
        // fit is exact (synthetic noise-free data) or the factors settled.
        if vce_pass >= opts.vce_passes || !assessment.variance_factor.is_finite()
            || assessment.variance_factor < 1e-18
        {
            break (sol, assessment, synth);
        }
        let mut settled_vce = true;
        let mut factors = [1.0f64; 4];
        for g in 0..4 {
            let r = assessment.group_redundancy[g];
            let has_rows = r > 0.0 || assessment.group_vtwv[g] > 0.0;
            if !has_rows {
                continue;
            }
            if r < 1e-3 {
                return Err(KinectError::UndefinedVarianceComponent {
                    group: GROUP_NAMES[g],
                    redundancy: r,
                });
            }
            factors[g] = assessment.group_vtwv[g] / r;
            if (factors[g] - 1.0).abs() > opts.vce_tolerance {
                settled_vce = false;
            }
        }
        if settled_vce {
            break (sol, assessment, synth);
        }
        for g in 0..4 {
            scales[g] *= factors[g];
        }
        vce_pass += 1;
    };

    // Residual screening.
    let critical = Normal::new(0.0, 1.0)
        .expect("unit normal")
        .inverse_cdf(1.0 - opts.snoop_significance / 2.0);
    let mut flags: Vec<usize> = (0..assessment.residuals.len())
        .filter(|&i| {
            let s = assessment.residuals[i].standardized;
            s.is_finite() && s.abs() > critical
        })
        .collect();
    flags.sort_by(|&a, &b| {
        assessment.residuals[b]
            .standardized
            .abs()
            .total_cmp(&assessment.residuals[a].standardized.abs())
    });

    // Final bookkeeping.
    let labels = layout.labels();
    let vf = if assessment.variance_factor.is_finite() {
        assessment.variance_factor
    } else {
        1.0
    };
    let covariance = &sol.cov * vf;
    let sigmas: Vec<f64> = (0..layout.n)
        .map(|i| covariance[(i, i)].max(0.0).sqrt())
        .collect();

    let mut included = Vec::new();
    let mut included_obs = Vec::new();
    for (i, s) in net.depth.iter().enumerate() {
        if let Some(obs) = synth.get(i).copied().flatten() {
            included.push(*s);
            included_obs.push(obs);
        }
    }
    let misclosure_rmse = if included.is_empty() {
        None
    } else {
        misclosure_rms(&misclosure_vectors(
            &state.rig,
            &state.poses,
            &state.planes,
            &included,
            &included_obs,
        )?)
    };

    let synthesized_projector: Vec<(f64, f64)> = synth
        .iter()
        .map(|s| s.unwrap_or((f64::NAN, f64::NAN)))
        .collect();

    Ok(BundleResult {
        rig: state.rig,
        poses: state.poses,
        targets: state.targets,
        planes: state.planes,
        labels,
        covariance,
        sigmas,
        variance_factor: assessment.variance_factor,
        rank: sol.rank,
        rank_defect: sol.defect,
        null_basis: sol.null_basis.clone(),
        redundancy_total: assessment.redundancy_total,
        group_redundancy: assessment.group_redundancy,
        group_vtwv: assessment.group_vtwv,
        variance_components: scales,
        stochastic: net.stochastic,
        residuals: assessment.residuals,
        snoop_flags: flags,
        snoop_critical: critical,
        rejected: Vec::new(),
        misclosure_rmse,
        synthesized_projector,
        depth_corrections: assessment.depth_corrections,
        inner_iterations: inner_total,
        outer_history,
        layout,
    })
}

#[allow(clippy::too_many_arguments)]
fn inner_solve(
    state: &mut State,
    net: &KinectNetwork,
    synth: &[Option<(f64, f64)>],
    v0: &mut Vec<[f64; 3]>,
    scales: &[f64; 4],
    excluded_board: &BTreeSet<usize>,
    layout: &Layout,
    opts: &BundleOptions,
) -> Result<(Built, MinNormSolution, usize)> {
    let mut last = f64::INFINITY;
    for it in 1..=opts.max_inner_iterations {
        let built = build_system(state, net, synth, v0, scales, excluded_board, layout)?;
        let sol = solve_min_norm(&built.acc.symmetric_n(), &built.acc.u, opts.rank_rel_tol);
        check_defect(&sol, layout, opts)?;
        apply_updates(state, &built, &sol, layout)?;
        update_depth_corrections(v0, &built, &sol);
        last = sol.delta.amax();
        if last < opts.inner_tol {
            // Relinearize at the accepted estimate so covariance and
            // residuals refer to it.
            let built = build_system(state, net, synth, v0, scales, excluded_board, layout)?;
            let sol = solve_min_norm(&built.acc.symmetric_n(), &built.acc.u, opts.rank_rel_tol);
            check_defect(&sol, layout, opts)?;
            return Ok((built, sol, it));
        }
    }
    Err(KinectError::NoConvergence {
        iterations: opts.max_inner_iterations,
        last_correction: last,
    })
}

// ---------------------------------------------------------------------------
// Result accessors and reporting
// ---------------------------------------------------------------------------

impl BundleResult {
    /// Column index of a parameter label such as `"ir.xp"` or
    /// `"rop_pro.bx"`.
    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Correlation coefficient between two unknowns.
    pub fn correlation(&self, i: usize, j: usize) -> f64 {
        let qii = self.covariance[(i, i)];
        let qjj = self.covariance[(j, j)];
        if qii <= 1e-300 || qjj <= 1e-300 {
            return 0.0;
        }
        self.covariance[(i, j)] / (qii * qjj).sqrt()
    }

    /// Largest |correlation| between two sets of unknowns.
    pub fn max_abs_correlation(&self, rows: &[usize], cols: &[usize]) -> f64 {
        let mut best = 0.0f64;
        for &i in rows {
            for &j in cols {
                if i == j {
                    continue;
                }
                best = best.max(self.correlation(i, j).abs());
            }
        }
        best
    }

    /// Columns of all estimated interior/distortion parameters.
    pub fn iop_indices(&self) -> Vec<usize> {
        (0..self.layout.rop_pro_off).collect()
    }

    /// Columns of both mountings (boresight angles and lever arms).
    pub fn rop_indices(&self) -> Vec<usize> {
        (self.layout.rop_pro_off..self.layout.pose_off).collect()
    }

    /// Columns of the device poses.
    pub fn pose_indices(&self) -> Vec<usize> {
        (self.layout.pose_off..self.layout.target_off).collect()
    }

    /// Columns of the target coordinates.
    pub fn target_indices(&self) -> Vec<usize> {
        (self.layout.target_off..self.layout.plane_off).collect()
    }

    /// Columns of the plane offsets (the `d` parameters only).
    pub fn plane_offset_indices(&self) -> Vec<usize> {
        (0..self.layout.n_planes)
            .map(|k| self.layout.plane_cols(k) + 2)
            .collect()
    }

    /// Posterior standard deviation of a labelled parameter.
    pub fn parameter_sigma(&self, label: &str) -> Option<f64> {
        self.index_of(label).map(|i| self.sigmas[i])
    }

    /// Effective group standard deviations after VCE, in the groups'
    /// native units (ir/rgb mm, depth px, projector px of total
    /// disparity noise).
    pub fn effective_sigmas(&self) -> [f64; 4] {
        [
            self.stochastic.sigma_ir * self.variance_components[0].sqrt(),
            self.stochastic.sigma_rgb * self.variance_components[1].sqrt(),
            self.stochastic.sigma_depth_px * self.variance_components[2].sqrt(),
            (quantized_disparity_variance(&self.stochastic.quantization)
                * self.variance_components[3])
                .sqrt(),
        ]
    }

    /// Summary report mirroring the calibration certificate layout.
    pub fn report(&self, n_poses: usize, n_corners: usize, n_depth: usize) -> BundleReport {
        let arcsec = 3600.0 * 180.0 / std::f64::consts::PI;
        let mut cameras = BTreeMap::new();
        for (tag, cam, sel) in [
            ("ir", &self.rig.ir, &self.layout.ir),
            ("rgb", &self.rig.rgb, &self.layout.rgb),
            ("pro", &self.rig.pro, &self.layout.pro),
        ] {
            if tag == "pro" && sel.is_empty() {
                continue;
            }
            let sig = |name: &str| self.parameter_sigma(&format!("{tag}.{name}")).unwrap_or(0.0);
            cameras.insert(
                tag.to_string(),
                CameraReport {
                    xp_um: [cam.xp * 1e3, sig("xp") * 1e3],
                    yp_um: [cam.yp * 1e3, sig("yp") * 1e3],
                    c_mm: [cam.c, sig("c")],
                    k1: [cam.k1, sig("k1")],
                    k2: [cam.k2, sig("k2")],
                    k3: [cam.k3, sig("k3")],
                    p1: [cam.p1, sig("p1")],
                    p2: [cam.p2, sig("p2")],
                    a1: [cam.a1, sig("a1")],
                    a2: [cam.a2, sig("a2")],
                },
            );
        }
        let mut mounts = BTreeMap::new();
        for (tag, rop) in [("ir_pro", &self.rig.rop_pro), ("ir_rgb", &self.rig.rop_rgb)] {
            let label = if tag == "ir_pro" { "rop_pro" } else { "rop_rgb" };
            let sig = |name: &str| {
                self.parameter_sigma(&format!("{label}.{name}")).unwrap_or(0.0)
            };
            mounts.insert(
                tag.to_string(),
                RopReport {
                    d_omega_arcsec: [rop.d_omega * arcsec, sig("domega") * arcsec],
                    d_phi_arcsec: [rop.d_phi * arcsec, sig("dphi") * arcsec],
                    d_kappa_arcsec: [rop.d_kappa * arcsec, sig("dkappa") * arcsec],
                    bx_mm: [rop.bx * 1e3, sig("bx") * 1e3],
                    by_mm: [rop.by * 1e3, sig("by") * 1e3],
                    bz_mm: [rop.bz * 1e3, sig("bz") * 1e3],
                },
            );
        }
        let eff = self.effective_sigmas();
        let mut group_sigmas = BTreeMap::new();
        group_sigmas.insert("ir_um".to_string(), eff[0] * 1e3);
        group_sigmas.insert("rgb_um".to_string(), eff[1] * 1e3);
        group_sigmas.insert("depth_px".to_string(), eff[2]);
        group_sigmas.insert("projector_px".to_string(), eff[3]);
        let mut variance_components = BTreeMap::new();
        for g in 0..4 {
            variance_components.insert(GROUP_NAMES[g].to_string(), self.variance_components[g]);
        }
        BundleReport {
            cameras,
            mounts,
            group_sigmas,
            variance_components,
            misclosure_rmse_mm: self.misclosure_rmse.map(|m| [m[0] * 1e3, m[1] * 1e3, m[2] * 1e3]),
            redundancy: self.redundancy_total,
            rank_defect: self.rank_defect,
            variance_factor: self.variance_factor,
            flagged: self.snoop_flags.len(),
            rejected: self.rejected.len(),
            poses: n_poses,
            corner_observations: n_corners,
            depth_samples: n_depth,
        }
    }

    /// The report as pretty-printed JSON.
    pub fn to_report_json(&self, n_poses: usize, n_corners: usize, n_depth: usize) -> String {
        serde_json::to_string_pretty(&self.report(n_poses, n_corners, n_depth))
            .expect("report serialization cannot fail")
    }
}

/// Estimated value and posterior standard deviation per interior
/// parameter, in certificate units (µm for the principal point, mm for the
/// principal distance, native reciprocal-mm powers for distortion).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraReport {
    /// Principal point x (µm): [value, sigma].
    pub xp_um: [f64; 2],
    /// Principal point y (µm).
    pub yp_um: [f64; 2],
    /// Principal distance (mm).
    pub c_mm: [f64; 2],
    /// Radial r³ coefficient (mm⁻²).
    pub k1: [f64; 2],
    /// Radial r⁵ coefficient (mm⁻⁴).
    pub k2: [f64; 2],
    /// Radial r⁷ coefficient (mm⁻⁶).
    pub k3: [f64; 2],
    /// Decentring coefficient (mm⁻¹).
    pub p1: [f64; 2],
    /// Decentring coefficient (mm⁻¹).
    pub p2: [f64; 2],
    /// Affinity (dimensionless).
    pub a1: [f64; 2],
    /// Shear (dimensionless).
    pub a2: [f64; 2],
}

/// Estimated mounting per component, certificate units (arcsec, mm).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RopReport {
    /// Boresight roll (arcsec): [value, sigma].
    pub d_omega_arcsec: [f64; 2],
    /// Boresight pitch (arcsec).
    pub d_phi_arcsec: [f64; 2],
    /// Boresight yaw (arcsec).
    pub d_kappa_arcsec: [f64; 2],
    /// Lever arm x (mm).
    pub bx_mm: [f64; 2],
    /// Lever arm y (mm).
    pub by_mm: [f64; 2],
    /// Lever arm z (mm).
    pub bz_mm: [f64; 2],
}

/// Serializable summary of one adjustment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BundleReport {
    /// Interior orientation per reported camera.
    pub cameras: BTreeMap<String, CameraReport>,
    /// Mounting per component pair.
    pub mounts: BTreeMap<String, RopReport>,
    /// Effective group noise after VCE (µm on the image planes, px for
    /// the depth groups).
    pub group_sigmas: BTreeMap<String, f64>,
    /// Cumulative VCE variance scales.
    pub variance_components: BTreeMap<String, f64>,
    /// Dual-ray surface misclosure RMS per axis (mm).
    pub misclosure_rmse_mm: Option<[f64; 3]>,
    /// Total redundancy.
    pub redundancy: f64,
    /// Detected datum defect.
    pub rank_defect: usize,
    /// A-posteriori variance factor.
    pub variance_factor: f64,
    /// Number of screened residuals above the quantile.
    pub flagged: usize,
    /// Number of removed observations.
    pub rejected: usize,
    /// Device poses in the network.
    pub poses: usize,
    /// Corner observations used.
    pub corner_observations: usize,
    /// Depth samples used.
    pub depth_samples: usize,
}
