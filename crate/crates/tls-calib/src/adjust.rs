//! Self-calibration network adjustments.
//!
//! Two estimation modes share one normal-equation core:
//!
//! * **Point-based** ([`solve_point_based`]): every sighting of a known
//!   signalized target contributes three parametric measurement equations
//!   (range, horizontal direction, elevation).
//! * **Plane-based** ([`solve_plane_based`]): every hit on a planar feature
//!   contributes one condition equation mixing observation corrections with
//!   the unknowns (a Gauss–Helmert model). Each condition is reduced to an
//!   equivalent scalar weight, so both modes feed the same accumulator.
//!
//! The unknown vector is laid out as
//! `[6 per station | 3 per primitive (target xyz or plane t₁ t₂ d) | selected APs]`.
//! Nothing is held fixed: the network datum is realized by the minimum-norm
//! pseudo-inverse of the normal matrix, and the rank defect is detected
//! numerically instead of being assumed. Calibration parameters are
//! estimable quantities, so their estimates and covariance do not depend on
//! that datum choice.
//!
//! Systematic-error corrections are evaluated at the *native* predicted
//! geometry: a second-face sighting keeps its beyond-zenith elevation and
//! its flipped horizontal circle, which is exactly what decorrelates the
//! mechanical axis terms from the exterior orientation.

use geometry_core::lsq::{row_redundancy, solve_min_norm, MinNormSolution, NormalAccumulator};
use geometry_core::{cartesian_to_spherical, wrap_pi, Plane, Point3, SphericalObservation, Vec3};
use nalgebra::{DMatrix, Matrix3};

use crate::aps::{eval_hz_ap, eval_range_ap, eval_v_ap, ApSelection, ApSet};
use crate::network::{CalibrationNetwork, PrimitiveId, StationSetup};
use crate::stochastic::observation_weight;
use crate::{Result, TlsError};

/// Convergence and rank-decision controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjustOptions {
    /// Iteration cap; exceeding it yields [`TlsError::NoConvergence`].
    pub max_iterations: usize,
    /// Convergence threshold on the largest absolute parameter correction
    /// (unknowns are meters / radians / unitless, all treated alike).
    pub convergence_tol: f64,
    /// Eigenvalues below `rank_rel_tol × λ_max` count as numerical zeros of
    /// the normal matrix (datum defect).
    pub rank_rel_tol: f64,
}

impl Default for AdjustOptions {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            convergence_tol: 1e-8,
            rank_rel_tol: 1e-10,
        }
    }
}

/// Which estimation mode produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdjustMode {
    /// Parametric adjustment on signalized targets.
    PointBased,
    /// Condition adjustment on planar features.
    PlaneBased,
}

/// Scalar-row category, used for grouping residuals and for variance
/// components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObservationGroup {
    /// Range rows (m).
    Range,
    /// Horizontal-direction rows (rad).
    Horizontal,
    /// Elevation rows (rad).
    Vertical,
    /// Orientation pseudo-observation rows (rad).
    Levelling,
    /// Plane-mode condition rows (m, point-to-plane).
    PlaneCondition,
}

/// One scalar residual with its reliability numbers.
#[derive(Debug, Clone, Copy)]
pub struct ResidualRecord {
    /// Index into the network's observation list; `None` for
    /// pseudo-observations.
    pub observation: Option<usize>,
    /// Station the row belongs to.
    pub station: usize,
    /// Row category.
    pub group: ObservationGroup,
    /// Estimated residual, in the convention `adjusted = raw + residual`
    /// (for conditions: the point-to-plane misfit absorbed by the
    /// observation corrections).
    pub residual: f64,
    /// A-priori standard deviation of the scalar row.
    pub sigma: f64,
    /// Redundancy contribution r ∈ [0, 1] of the row.
    pub redundancy: f64,
    /// Standardized residual `residual / (sigma·√r)`; NaN when the row has
    /// no redundancy to test against.
    pub standardized: f64,
}

/// Convergence trace entry for one Gauss–Newton step.
#[derive(Debug, Clone, Copy)]
pub struct IterationRecord {
    /// 1-based iteration number.
    pub iteration: usize,
    /// Largest absolute parameter correction applied this step.
    pub max_correction: f64,
    /// Weighted square sum of the misclosures entering this step.
    pub weighted_square_sum: f64,
}

/// Complete output of one network adjustment.
#[derive(Debug, Clone)]
pub struct AdjustmentResult {
    /// Input network with every estimate written back (station poses,
    /// primitive parameters, calibration values; in plane mode also the
    /// refreshed incidence angles). Re-solving this network warm-starts
    /// from the solution.
    pub network: CalibrationNetwork,
    /// Options the solve ran with.
    pub options: AdjustOptions,
    /// Mode that produced the result.
    pub mode: AdjustMode,
    /// Cofactor matrix of all unknowns under the minimum-norm datum
    /// (pseudo-inverse of the normal matrix, unscaled).
    pub cofactor: DMatrix<f64>,
    /// Numerical rank of the normal matrix.
    pub rank: usize,
    /// Datum defect actually detected in the data.
    pub rank_defect: usize,
    /// Orthonormal basis of the unobservable directions (one column per
    /// defect).
    pub null_basis: DMatrix<f64>,
    /// Total redundancy Σrᵢ (equals rows − rank up to round-off).
    pub redundancy: f64,
    /// A-posteriori variance factor `vᵀWv / redundancy` (1 when the
    /// network has no redundancy).
    pub variance_factor: f64,
    /// Gauss–Newton convergence trace.
    pub iterations: Vec<IterationRecord>,
    /// One record per scalar row, final linearization.
    pub residuals: Vec<ResidualRecord>,
    /// Per-observation corrections (ρ, θ, α): `adjusted = raw + correction`.
    pub observation_corrections: Vec<Vec3>,
    /// Column where the calibration-parameter block starts.
    pub ap_offset: usize,
}

impl AdjustmentResult {
    /// Estimated calibration parameter set.
    pub fn aps(&self) -> &ApSet {
        &self.network.initial_aps
    }

    /// Which APs were estimated.
    pub fn selection(&self) -> &ApSelection {
        &self.network.selection
    }

    /// Number of estimated APs.
    pub fn ap_count(&self) -> usize {
        self.network.selection.count()
    }

    /// Names of the estimated APs, canonical order.
    pub fn ap_names(&self) -> Vec<String> {
        self.network.selection.names()
    }

    /// Values of the estimated APs, canonical order.
    pub fn ap_values(&self) -> Vec<f64> {
        self.network.initial_aps.selected(&self.network.selection)
    }

    /// Unscaled cofactor block of the estimated APs.
    pub fn ap_cofactor(&self) -> DMatrix<f64> {
        let k = self.ap_count();
        self.cofactor
            .view((self.ap_offset, self.ap_offset), (k, k))
            .into_owned()
    }

    /// AP covariance scaled by the a-posteriori variance factor.
    pub fn ap_covariance(&self) -> DMatrix<f64> {
        self.ap_cofactor() * self.variance_factor
    }

    /// A-posteriori standard deviation of each estimated AP.
    pub fn ap_sigmas(&self) -> Vec<f64> {
        let k = self.ap_count();
        (0..k)
            .map(|i| {
                let q = self.cofactor[(self.ap_offset + i, self.ap_offset + i)];
                (self.variance_factor * q).max(0.0).sqrt()
            })
            .collect()
    }

    /// Estimated value of one AP by name (`None` if it was not estimated).
    pub fn ap_value(&self, name: &str) -> Option<f64> {
        let idx = self.ap_names().iter().position(|n| n == name)?;
        Some(self.ap_values()[idx])
    }

    /// A-posteriori σ of one AP by name.
    pub fn ap_sigma(&self, name: &str) -> Option<f64> {
        let idx = self.ap_names().iter().position(|n| n == name)?;
        Some(self.ap_sigmas()[idx])
    }

    /// Column where the primitive (target / plane) block starts.
    pub fn coordinate_offset(&self) -> usize {
        6 * self.network.stations.len()
    }

    /// Total redundancy of one row group.
    pub fn group_redundancy(&self, group: ObservationGroup) -> f64 {
        self.residuals
            .iter()
            .filter(|r| r.group == group)
            .map(|r| r.redundancy)
            .sum()
    }

    /// Weighted residual square sum Σ w·v² of one row group.
    pub fn group_weighted_square_sum(&self, group: ObservationGroup) -> f64 {
        self.residuals
            .iter()
            .filter(|r| r.group == group)
            .map(|r| r.residual * r.residual / (r.sigma * r.sigma))
            .sum()
    }

    /// Raw observation `i` with its estimated correction applied.
    pub fn adjusted_observation(&self, i: usize) -> Result<SphericalObservation> {
        let o = &self.network.observations[i];
        let c = self.observation_corrections[i];
        SphericalObservation::new(o.obs.rho + c.x, o.obs.theta + c.y, o.obs.alpha + c.z)
            .map_err(TlsError::from)
    }
}

/// Column bookkeeping for the unknown vector.
#[derive(Debug, Clone, Copy)]
struct Layout {
    stations: usize,
    prims: usize,
    aps: usize,
}

impl Layout {
    fn pos(self, s: usize) -> usize {
        6 * s
    }
    fn ang(self, s: usize) -> usize {
        6 * s + 3
    }
    fn prim(self, p: usize) -> usize {
        6 * self.stations + 3 * p
    }
    fn ap(self, k: usize) -> usize {
        6 * self.stations + 3 * self.prims + k
    }
    fn ap_offset(self) -> usize {
        6 * self.stations + 3 * self.prims
    }
    fn dim(self) -> usize {
        6 * self.stations + 3 * self.prims + self.aps
    }
}

/// How a scalar row entered the system, with what finish() needs to map the
/// solved update back to observation-space residuals.
#[derive(Debug, Clone)]
enum RowKind {
    /// Parametric measurement row: `a·δ = l + v`, v = adjusted − raw.
    Measurement,
    /// Condition row reduced to an equivalent scalar: `b` couples the three
    /// observation corrections into the condition, `variances` are their
    /// a-priori variances.
    Condition { b: Vec3, variances: Vec3 },
}

#[derive(Debug, Clone)]
struct Row {
    cols: Vec<usize>,
    vals: Vec<f64>,
    w: f64,
    l: f64,
    kind: RowKind,
    group: ObservationGroup,
    observation: Option<usize>,
    station: usize,
}

fn dot(row: &Row, delta: &nalgebra::DVector<f64>) -> f64 {
    row.cols
        .iter()
        .zip(&row.vals)
        .map(|(&c, &v)| v * delta[c])
        .sum()
}

/// Adds the orientation pseudo-observation rows of every station.
fn add_levelling_rows(
    net: &CalibrationNetwork,
    layout: Layout,
    acc: &mut NormalAccumulator,
    rows: &mut Vec<Row>,
) {
    for (s, st) in net.stations.iter().enumerate() {
        let current = [st.rotation.omega, st.rotation.phi, st.rotation.kappa];
        let comps = [st.levelling.omega, st.levelling.phi, st.levelling.kappa];
        for (j, comp) in comps.iter().enumerate() {
            if let Some((value, sigma)) = comp {
                let cols = vec![layout.ang(s) + j];
                let vals = vec![1.0];
                let w = 1.0 / (sigma * sigma);
                let l = wrap_pi(value - current[j]);
                acc.add_sparse_row(&cols, &vals, w, l);
                rows.push(Row {
                    cols,
                    vals,
                    w,
                    l,
                    kind: RowKind::Measurement,
                    group: ObservationGroup::Levelling,
                    observation: None,
                    station: s,
                });
            }
        }
    }
}

/// Applies the station part of a solved update.
fn apply_station_updates(stations: &mut [StationSetup], delta: &nalgebra::DVector<f64>) {
    for (s, st) in stations.iter_mut().enumerate() {
        let p = 6 * s;
        st.position += Vec3::new(delta[p], delta[p + 1], delta[p + 2]);
        st.rotation.omega += delta[p + 3];
        st.rotation.phi += delta[p + 4];
        st.rotation.kappa += delta[p + 5];
    }
}

/// Builds the parametric system for the current point-network estimates.
fn build_point_system(
    net: &CalibrationNetwork,
    layout: Layout,
) -> Result<(NormalAccumulator, Vec<Row>)> {
    let mut acc = NormalAccumulator::new(layout.dim());
    let mut rows = Vec::with_capacity(3 * net.observations.len() + 3 * net.stations.len());
    let aps = &net.initial_aps;
    for (i, o) in net.observations.iter().enumerate() {
        let PrimitiveId::Target(t) = o.primitive else {
            unreachable!("validated: point mode has target observations only")
        };
        let st = &net.stations[o.station];
        let var = observation_weight(o.beta, &net.stochastic)?;
        let m = st.rotation.matrix();
        let dm = st.rotation.partials();
        let diff = net.targets[t].coords - st.position;
        let local = m * diff;
        let pred_first =
            cartesian_to_spherical(&Point3::from(local)).map_err(|_| TlsError::SingularSystem {
                diagnostic: format!("station {} coincides with target {}", o.station, t),
            })?;
        let second = o.obs.is_second_face();
        let pred = if second {
            pred_first.to_second_face()
        } else {
            pred_first
        };

        // Systematic corrections and their parameter basis at the native
        // predicted geometry (this errors out close to the zenith, where
        // the horizontal direction loses meaning).
        let d_rho = eval_range_ap(pred.rho, pred.alpha, &aps.range, &[]);
        let d_theta = eval_hz_ap(pred.theta, pred.alpha, pred.rho, &aps.hz, net.architecture)?;
        let d_alpha = eval_v_ap(pred.alpha, pred.theta, pred.rho, &aps.v);
        let basis = ApSet::partials(
            &net.selection,
            pred.rho,
            pred.theta,
            pred.alpha,
            aps.range.u,
            net.architecture,
        );

        // First-face gradients of (ρ, θ, α) with respect to the local
        // Cartesian vector; the second face flips the elevation gradient.
        let rho = pred_first.rho;
        let hsq = local.x * local.x + local.y * local.y;
        let h = hsq.sqrt();
        let g_rho = local / rho;
        let g_theta = Vec3::new(-local.y / hsq, local.x / hsq, 0.0);
        let g_alpha = Vec3::new(
            -local.x * local.z / (rho * rho * h),
            -local.y * local.z / (rho * rho * h),
            h / (rho * rho),
        );
        let alpha_sign = if second { -1.0 } else { 1.0 };
        let dv = [dm[0] * diff, dm[1] * diff, dm[2] * diff];

        let mut push = |g: Vec3, sign: f64, comp: usize, l: f64, w: f64, group| {
            let gm = m.transpose() * g * sign;
            let mut cols = Vec::with_capacity(9 + layout.aps);
            let mut vals = Vec::with_capacity(9 + layout.aps);
            for c in 0..3 {
                cols.push(layout.pos(o.station) + c);
                vals.push(-gm[c]);
            }
            for (j, dvj) in dv.iter().enumerate() {
                cols.push(layout.ang(o.station) + j);
                vals.push(sign * g.dot(dvj));
            }
            for c in 0..3 {
                cols.push(layout.prim(t) + c);
                vals.push(gm[c]);
            }
            for (k, b) in basis.iter().enumerate() {
                if b[comp] != 0.0 {
                    cols.push(layout.ap(k));
                    vals.push(b[comp]);
                }
            }
            acc.add_sparse_row(&cols, &vals, w, l);
            rows.push(Row {
                cols,
                vals,
                w,
                l,
                kind: RowKind::Measurement,
                group,
                observation: Some(i),
                station: o.station,
            });
        };
        push(
            g_rho,
            1.0,
            0,
            o.obs.rho - pred.rho - d_rho,
            1.0 / var.rho,
            ObservationGroup::Range,
        );
        push(
            g_theta,
            1.0,
            1,
            wrap_pi(o.obs.theta - pred.theta - d_theta),
            1.0 / var.theta,
            ObservationGroup::Horizontal,
        );
        push(
            g_alpha,
            alpha_sign,
            2,
            wrap_pi(o.obs.alpha - pred.alpha - d_alpha),
            1.0 / var.alpha,
            ObservationGroup::Vertical,
        );
    }
    add_levelling_rows(net, layout, &mut acc, &mut rows);
    Ok((acc, rows))
}

/// Self-calibrating bundle adjustment over signalized targets.
///
/// Iterates Gauss–Newton until the largest correction drops below the
/// tolerance, then relinearizes once at the solution for the covariance,
/// residual and redundancy bookkeeping.
pub fn solve_point_based(
    network: &CalibrationNetwork,
    options: &AdjustOptions,
) -> Result<AdjustmentResult> {
    network.validate_point_based()?;
    let mut net = network.clone();
    let layout = Layout {
        stations: net.stations.len(),
        prims: net.targets.len(),
        aps: net.selection.count(),
    };

    let mut iterations = Vec::new();
    let mut converged = false;
    let mut last_correction = f64::INFINITY;
    for iteration in 1..=options.max_iterations {
        let (acc, _) = build_point_system(&net, layout)?;
        let sol = solve_min_norm(&acc.symmetric_n(), &acc.u, options.rank_rel_tol);
        check_rank(&sol)?;
        apply_station_updates(&mut net.stations, &sol.delta);
        for (t, target) in net.targets.iter_mut().enumerate() {
            let base = layout.prim(t);
            target.coords += Vec3::new(sol.delta[base], sol.delta[base + 1], sol.delta[base + 2]);
        }
        let selection = net.selection;
        net.initial_aps
            .apply_update(&selection, ap_slice(&sol, layout));
        last_correction = sol.delta.amax();
        iterations.push(IterationRecord {
            iteration,
            max_correction: last_correction,
            weighted_square_sum: acc.weighted_square_sum,
        });
        if last_correction < options.convergence_tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(TlsError::NoConvergence {
            iterations: options.max_iterations,
            last_correction,
        });
    }

    let (acc, rows) = build_point_system(&net, layout)?;
    let sol = solve_min_norm(&acc.symmetric_n(), &acc.u, options.rank_rel_tol);
    Ok(finish(
        net,
        *options,
        AdjustMode::PointBased,
        layout,
        sol,
        rows,
        iterations,
    ))
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

/// Builds the condition system for the current plane-network estimates and
/// observation corrections `v0`. Returns the accumulator, the rows, the
/// tangent frames the plane updates refer to, and the refreshed incidence
/// angles.
fn build_plane_system(
    net: &CalibrationNetwork,
    v0: &[Vec3],
    layout: Layout,
) -> Result<(NormalAccumulator, Vec<Row>, Vec<(Vec3, Vec3)>, Vec<f64>)> {
    let frames: Vec<(Vec3, Vec3)> = net.planes.iter().map(|p| tangent_frame(&p.normal)).collect();
    let mut acc = NormalAccumulator::new(layout.dim());
    let mut rows = Vec::with_capacity(net.observations.len() + 3 * net.stations.len());
    let mut betas = vec![0.0; net.observations.len()];
    let aps = &net.initial_aps;
    for (i, o) in net.observations.iter().enumerate() {
        let PrimitiveId::Plane(pi) = o.primitive else {
            unreachable!("validated: plane mode has plane observations only")
        };
        let plane = &net.planes[pi];
        let st = &net.stations[o.station];
        let m = st.rotation.matrix();
        let dm = st.rotation.partials();

        // Current adjusted observation and its systematic correction,
        // evaluated at the native geometry (second-face values included).
        let rho = o.obs.rho + v0[i].x;
        let theta = o.obs.theta + v0[i].y;
        let alpha = o.obs.alpha + v0[i].z;
        let d_rho = eval_range_ap(rho, alpha, &aps.range, &[]);
        let d_theta = eval_hz_ap(theta, alpha, rho, &aps.hz, net.architecture)?;
        let d_alpha = eval_v_ap(alpha, theta, rho, &aps.v);
        let basis = ApSet::partials(
            &net.selection,
            rho,
            theta,
            alpha,
            aps.range.u,
            net.architecture,
        );

        // Corrected point in the scanner frame and in the object frame.
        let (rc, tc, ac) = (rho - d_rho, theta - d_theta, alpha - d_alpha);
        let (sa, ca) = ac.sin_cos();
        let (stt, ctt) = tc.sin_cos();
        let x_l = Vec3::new(rc * ca * ctt, rc * ca * stt, rc * sa);
        #[rustfmt::skip]
        let j_sph = Matrix3::new(
            ca * ctt, -rc * ca * stt, -rc * sa * ctt,
            ca * stt,  rc * ca * ctt, -rc * sa * stt,
            sa,        0.0,            rc * ca,
        );
        let p_world = st.position + m.transpose() * x_l;
        let g0 = plane.normal.dot(&p_world) - plane.d;
        let n_local = m * plane.normal;
        let b_row: Vec3 = j_sph.transpose() * n_local;

        // Incidence angle from the current geometry; clamped just inside
        // the cutoff so a transiently grazing iterate cannot abort the
        // solve.
        let cos_beta = (n_local.dot(&x_l) / x_l.norm()).abs().min(1.0);
        let beta = cos_beta.acos().min(net.stochastic.beta_max - 1e-9);
        betas[i] = beta;
        let var = observation_weight(beta, &net.stochastic)?;
        let variances = Vec3::new(var.rho, var.theta, var.alpha);
        let denom = b_row.component_mul(&b_row).dot(&variances);
        if denom <= 0.0 || !denom.is_finite() {
            return Err(TlsError::SingularSystem {
                diagnostic: format!("observation {i}: degenerate condition weight"),
            });
        }
        let we = 1.0 / denom;

        let mut cols = Vec::with_capacity(9 + layout.aps);
        let mut vals = Vec::with_capacity(9 + layout.aps);
        for c in 0..3 {
            cols.push(layout.pos(o.station) + c);
            vals.push(plane.normal[c]);
        }
        for (j, dmj) in dm.iter().enumerate() {
            cols.push(layout.ang(o.station) + j);
            vals.push(x_l.dot(&(dmj * plane.normal)));
        }
        let (e1, e2) = frames[pi];
        cols.push(layout.prim(pi));
        vals.push(e1.dot(&p_world));
        cols.push(layout.prim(pi) + 1);
        vals.push(e2.dot(&p_world));
        cols.push(layout.prim(pi) + 2);
        vals.push(-1.0);
        for (k, b) in basis.iter().enumerate() {
            let coeff = -(b_row.x * b[0] + b_row.y * b[1] + b_row.z * b[2]);
            if coeff != 0.0 {
                cols.push(layout.ap(k));
                vals.push(coeff);
            }
        }

        // Condition: b·v + a·δ + w = 0 with w the misclosure reduced by the
        // running corrections; the equivalent measurement row is a·δ = −w.
        let w_const = g0 - b_row.dot(&v0[i]);
        acc.add_sparse_row(&cols, &vals, we, -w_const);
        rows.push(Row {
            cols,
            vals,
            w: we,
            l: -w_const,
            kind: RowKind::Condition {
                b: b_row,
                variances,
            },
            group: ObservationGroup::PlaneCondition,
            observation: Some(i),
            station: o.station,
        });
    }
    add_levelling_rows(net, layout, &mut acc, &mut rows);
    Ok((acc, rows, frames, betas))
}

/// Self-calibrating adjustment over planar features.
///
/// Outer Gauss–Newton loop: relinearize conditions at the current adjusted
/// observations, solve for the unknown update with equivalent scalar
/// weights, back-substitute the observation corrections, refresh the
/// incidence-angle weighting, repeat.
pub fn solve_plane_based(
    network: &CalibrationNetwork,
    options: &AdjustOptions,
) -> Result<AdjustmentResult> {
    network.validate_plane_based()?;
    let mut net = network.clone();
    let layout = Layout {
        stations: net.stations.len(),
        prims: net.planes.len(),
        aps: net.selection.count(),
    };
    let mut v0 = vec![Vec3::zeros(); net.observations.len()];

    let mut iterations = Vec::new();
    let mut converged = false;
    let mut last_correction = f64::INFINITY;
    for iteration in 1..=options.max_iterations {
        let (acc, rows, frames, betas) = build_plane_system(&net, &v0, layout)?;
        let sol = solve_min_norm(&acc.symmetric_n(), &acc.u, options.rank_rel_tol);
        check_rank(&sol)?;

        apply_station_updates(&mut net.stations, &sol.delta);
        for (p, plane) in net.planes.iter_mut().enumerate() {
            let base = layout.prim(p);
            let (e1, e2) = frames[p];
            let n_raw = plane.normal + e1 * sol.delta[base] + e2 * sol.delta[base + 1];
            *plane = Plane::new(n_raw, plane.d + sol.delta[base + 2]).map_err(|e| {
                TlsError::SingularSystem {
                    diagnostic: format!("plane {p} update degenerated: {e}"),
                }
            })?;
        }
        let selection = net.selection;
        net.initial_aps
            .apply_update(&selection, ap_slice(&sol, layout));

        // Back-substitute the observation corrections and track their
        // movement alongside the parameter corrections.
        let mut v_shift: f64 = 0.0;
        for row in &rows {
            if let (RowKind::Condition { b, variances }, Some(i)) = (&row.kind, row.observation) {
                let v_scalar = row.l - dot(row, &sol.delta);
                let v_new = variances.component_mul(b) * (row.w * v_scalar);
                v_shift = v_shift.max((v_new - v0[i]).amax());
                v0[i] = v_new;
            }
        }
        for (o, beta) in net.observations.iter_mut().zip(&betas) {
            o.beta = *beta;
        }

        last_correction = sol.delta.amax().max(v_shift);
        iterations.push(IterationRecord {
            iteration,
            max_correction: last_correction,
            weighted_square_sum: acc.weighted_square_sum,
        });
        if last_correction < options.convergence_tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(TlsError::NoConvergence {
            iterations: options.max_iterations,
            last_correction,
        });
    }

    let (acc, rows, _, betas) = build_plane_system(&net, &v0, layout)?;
    for (o, beta) in net.observations.iter_mut().zip(&betas) {
        o.beta = *beta;
    }
    let sol = solve_min_norm(&acc.symmetric_n(), &acc.u, options.rank_rel_tol);
    Ok(finish(
        net,
        *options,
        AdjustMode::PlaneBased,
        layout,
        sol,
        rows,
        iterations,
    ))
}

fn check_rank(sol: &MinNormSolution) -> Result<()> {
    if sol.rank == 0 {
        return Err(TlsError::SingularSystem {
            diagnostic: "normal matrix carries no information".into(),
        });
    }
    Ok(())
}

fn ap_slice(sol: &MinNormSolution, layout: Layout) -> &[f64] {
    &sol.delta.as_slice()[layout.ap_offset()..layout.dim()]
}

/// Turns the final linearization into the public result: residuals,
/// redundancy numbers, variance factor, covariance.
fn finish(
    network: CalibrationNetwork,
    options: AdjustOptions,
    mode: AdjustMode,
    layout: Layout,
    sol: MinNormSolution,
    rows: Vec<Row>,
    iterations: Vec<IterationRecord>,
) -> AdjustmentResult {
    let mut residuals = Vec::with_capacity(rows.len());
    let mut corrections = vec![Vec3::zeros(); network.observations.len()];
    let mut vtwv = 0.0;
    let mut redundancy = 0.0;
    for row in &rows {
        let a_delta = dot(row, &sol.delta);
        let v = match row.kind {
            RowKind::Measurement => a_delta - row.l,
            RowKind::Condition { .. } => row.l - a_delta,
        };
        let r = row_redundancy(&row.cols, &row.vals, row.w, &sol.cov);
        redundancy += r;
        vtwv += row.w * v * v;
        let sigma = row.w.recip().sqrt();
        let standardized = if r > 1e-12 {
            v / (sigma * r.sqrt())
        } else {
            f64::NAN
        };
        residuals.push(ResidualRecord {
            observation: row.observation,
            station: row.station,
            group: row.group,
            residual: v,
            sigma,
            redundancy: r,
            standardized,
        });
        if let Some(i) = row.observation {
            match &row.kind {
                RowKind::Measurement => match row.group {
                    ObservationGroup::Range => corrections[i].x = v,
                    ObservationGroup::Horizontal => corrections[i].y = v,
                    ObservationGroup::Vertical => corrections[i].z = v,
                    _ => {}
                },
                RowKind::Condition { b, variances } => {
                    corrections[i] = variances.component_mul(b) * (row.w * v);
                }
            }
        }
    }
    let variance_factor = if redundancy > 1e-9 {
        vtwv / redundancy
    } else {
        1.0
    };
    AdjustmentResult {
        network,
        options,
        mode,
        cofactor: sol.cov,
        rank: sol.rank,
        rank_defect: sol.defect,
        null_basis: sol.null_basis,
        redundancy,
        variance_factor,
        iterations,
        residuals,
        observation_corrections: corrections,
        ap_offset: layout.ap_offset(),
    }
}
