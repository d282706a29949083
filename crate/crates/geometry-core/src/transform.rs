//! Rigid transform between a world frame and a sensor/local frame.
//!
//! The stored convention is the surveying one: `rotation` re-expresses
//! world coordinates in the local frame and `origin` is the sensor position
//! in world coordinates, so `local = R · (world − origin)`. Pose-style
//! construction (body→world attitude plus position) is provided for the
//! navigation crates, which think in the opposite direction.

use crate::{Plane, Point3, Result, UnitQuaternion, Vec3};

/// Rigid transform `local = rotation · (world − origin)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    /// Rotation taking world-frame coordinates into the local frame.
    pub rotation: UnitQuaternion,
    /// Local-frame origin expressed in world coordinates (m).
    pub origin: Vec3,
}

impl RigidTransform {
    /// Builds from the stored convention directly.
    pub fn new(rotation: UnitQuaternion, origin: Vec3) -> Self {
        Self { rotation, origin }
    }

    /// Identity transform (local frame coincides with world frame).
    pub fn identity() -> Self {
        Self::new(UnitQuaternion::identity(), Vec3::zeros())
    }

    /// Builds from a pose: `attitude` rotates local/body coordinates into
    /// the world frame and `position` is the body origin in world frame.
    pub fn from_pose(attitude: UnitQuaternion, position: Vec3) -> Self {
        Self::new(attitude.conjugate(), position)
    }

    /// Body→world attitude of this transform (inverse of `rotation`).
    pub fn attitude(&self) -> UnitQuaternion {
        self.rotation.conjugate()
    }

    /// World point expressed in the local frame.
    pub fn to_local(&self, world: &Point3) -> Point3 {
        Point3::from(self.rotation.rotate(&(world.coords - self.origin)))
    }

    /// Local point expressed in the world frame.
    pub fn to_global(&self, local: &Point3) -> Point3 {
        Point3::from(self.rotation.conjugate().rotate(&local.coords) + self.origin)
    }

    /// Rotates a free vector (no translation) into the local frame.
    pub fn direction_to_local(&self, world: &Vec3) -> Vec3 {
        self.rotation.rotate(world)
    }

    /// Rotates a free vector (no translation) into the world frame.
    pub fn direction_to_global(&self, local: &Vec3) -> Vec3 {
        self.rotation.conjugate().rotate(local)
    }

    /// Re-expresses a world-frame plane in the local frame.
    pub fn plane_to_local(&self, plane: &Plane) -> Result<Plane> {
        let n_local = self.rotation.rotate(&plane.normal);
        let d_local = plane.d - plane.normal.dot(&self.origin);
        Plane::new(n_local, d_local)
    }

    /// Composition: with `inner` expressed relative to `self`'s local frame,
    /// the result maps world → `self` local → `inner` local, so
    /// `result.to_local(p) == inner.to_local(&self.to_local(p))`.
    pub fn then(&self, inner: &RigidTransform) -> RigidTransform {
        // inner ∘ self: q = q_inner ⊗ q_self, origin solves
        // q_self · (o − o_self) = o_inner  ⇒  o = o_self + q_selfᵀ · o_inner.
        RigidTransform::new(
            inner.rotation.compose(&self.rotation),
            self.origin + self.rotation.conjugate().rotate(&inner.origin),
        )
    }

    /// Inverse transform: maps local coordinates back as if they were world.
    pub fn inverse(&self) -> RigidTransform {
        RigidTransform::new(
            self.rotation.conjugate(),
            -self.rotation.rotate(&self.origin),
        )
    }
}

/// Applies `transform.to_local` to a point — the most common direction in
/// the adjustment code, exposed as a free function for mapping pipelines.
pub fn transform_point(transform: &RigidTransform, world: &Point3) -> Point3 {
    transform.to_local(world)
}

/// Closed-form least-squares rigid transform from point correspondences:
/// finds the transform minimizing Σ‖t.to_local(world_i) − local_i‖² via the
/// SVD of the centered cross-covariance (Kabsch), with the determinant
/// fixed to +1 so reflections are never returned.
///
/// Needs at least three non-collinear pairs; fails otherwise.
pub fn fit_rigid_transform(pairs: &[(Point3, Point3)]) -> crate::Result<RigidTransform> {
    use crate::{GeometryError, Mat3};
    if pairs.len() < 3 {
        return Err(GeometryError::DegeneratePointSet {
            reason: "rigid fit needs at least three correspondences",
        });
    }
    let inv_n = 1.0 / pairs.len() as f64;
    let mut cw = Vec3::zeros();
    let mut cl = Vec3::zeros();
    for (w, l) in pairs {
        cw += w.coords;
        cl += l.coords;
    }
    cw *= inv_n;
    cl *= inv_n;

    // Cross-covariance H = Σ (local − c_l)(world − c_w)ᵀ; R = (fix·V)·Uᵀ…
    // arranged so that local ≈ R·(world − origin).
    let mut h = Mat3::zeros();
    let mut spread = 0.0f64;
    for (w, l) in pairs {
        let dw = w.coords - cw;
        let dl = l.coords - cl;
        h += dl * dw.transpose();
        spread += dw.norm_squared();
    }
    if spread < 1e-300 {
        return Err(GeometryError::DegeneratePointSet {
            reason: "coincident points in rigid fit",
        });
    }
    let svd = h.svd(true, true);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let mut r = u * vt;
    if r.determinant() < 0.0 {
        // Flip the weakest direction to stay in SO(3).
        let mut u_fix = u;
        u_fix.set_column(2, &(-u.column(2)));
        r = u_fix * vt;
    }
    // local = R(world − origin) with centroids matched: origin = c_w − Rᵀ c_l.
    let origin = cw - r.transpose() * cl;
    Ok(RigidTransform::new(UnitQuaternion::from_matrix(&r), origin))
}
