//! Infinite-plane primitive and total-least-squares plane fitting.
//!
//! Planes are stored in Hessian normal form n·p = d with ‖n‖ = 1 and d ≥ 0,
//! so d is the perpendicular distance of the plane from the origin and the
//! four parameters are unique. The fit minimizes the sum of squared
//! orthogonal point-to-plane distances (centroid + smallest singular
//! direction), which is the estimator every plane-based adjustment in the
//! workspace linearizes around.

use crate::{GeometryError, Point3, Result, Vec3};
use nalgebra::Matrix3xX;

/// Plane in Hessian normal form: `normal · p = d`, ‖normal‖ = 1, d ≥ 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    /// Unit normal vector.
    pub normal: Vec3,
    /// Perpendicular distance from the origin (m), non-negative.
    pub d: f64,
}

impl Plane {
    /// Builds a plane from an (unnormalized) normal and offset `n·p = d`,
    /// rescaling to unit normal and flipping signs so d ≥ 0.
    pub fn new(normal: Vec3, d: f64) -> Result<Self> {
        let norm = normal.norm();
        if !norm.is_finite() || !d.is_finite() {
            return Err(GeometryError::NonFinite { context: "plane" });
        }
        if norm < 1e-300 {
            return Err(GeometryError::ZeroLength { norm });
        }
        let mut n = normal / norm;
        let mut dist = d / norm;
        if dist < 0.0 || (dist == 0.0 && Self::leading_component(&n) < 0.0) {
            n = -n;
            dist = -dist;
        }
        Ok(Self { normal: n, d: dist })
    }

    /// Plane through `point` with the given normal direction.
    pub fn from_normal_point(normal: Vec3, point: &Point3) -> Result<Self> {
        let d = normal.dot(&point.coords);
        Self::new(normal, d)
    }

    /// Signed orthogonal distance of `p` from the plane (positive on the
    /// side the normal points to, measured from the plane).
    pub fn signed_distance(&self, p: &Point3) -> f64 {
        self.normal.dot(&p.coords) - self.d
    }

    /// Orthogonal projection of `p` onto the plane.
    pub fn project(&self, p: &Point3) -> Point3 {
        p - self.normal * self.signed_distance(p)
    }

    /// First nonzero normal component, used to orient planes through the
    /// origin deterministically.
    fn leading_component(n: &Vec3) -> f64 {
        if n.x != 0.0 {
            n.x
        } else if n.y != 0.0 {
            n.y
        } else {
            n.z
        }
    }
}

/// Quality summary of an orthogonal plane fit.
#[derive(Debug, Clone)]
pub struct PlaneFitStats {
    /// Root-mean-square orthogonal residual (m).
    pub rmse: f64,
    /// Largest absolute orthogonal residual (m).
    pub max_abs_residual: f64,
    /// Singular values of the centered coordinate matrix, descending;
    /// the smallest one squared is the total squared residual.
    pub singular_values: [f64; 3],
    /// Signed orthogonal residual of every input point (m), input order.
    pub residuals: Vec<f64>,
}

/// Fits a plane by minimizing orthogonal distances (total least squares).
///
/// Centers the points, takes the singular direction of smallest spread as
/// the normal, and rejects degenerate inputs: fewer than three points, or
/// a rank-deficient spread (collinear/coincident points) detected by
/// comparing the two smallest singular values against the largest.
pub fn fit_plane_orthogonal(points: &[Point3]) -> Result<(Plane, PlaneFitStats)> {
    if points.len() < 3 {
        return Err(GeometryError::DegeneratePointSet {
            reason: "plane fit needs at least three points",
        });
    }
    let inv_n = 1.0 / points.len() as f64;
    let centroid: Vec3 = points.iter().map(|p| p.coords).sum::<Vec3>() * inv_n;

    let mut centered = Matrix3xX::<f64>::zeros(points.len());
    for (j, p) in points.iter().enumerate() {
        centered.set_column(j, &(p.coords - centroid));
    }
    let svd = centered.svd(true, false);
    let mut sv = [
        svd.singular_values[0],
        svd.singular_values[1],
        svd.singular_values[2],
    ];
    sv.sort_by(|a, b| b.partial_cmp(a).expect("singular values are finite"));

    // Collinear data: the second spread direction collapses relative to the
    // first, leaving the normal direction unconstrained in a whole pencil.
    if sv[1] <= 1e-10 * sv[0].max(1e-300) {
        return Err(GeometryError::DegeneratePointSet {
            reason: "points are collinear within tolerance",
        });
    }

    let u = svd.u.as_ref().expect("u requested");
    // Column of U paired with the smallest singular value.
    let min_idx = (0..3)
        .min_by(|&a, &b| {
            svd.singular_values[a]
                .partial_cmp(&svd.singular_values[b])
                .expect("singular values are finite")
        })
        .expect("three singular values");
    let normal = Vec3::new(u[(0, min_idx)], u[(1, min_idx)], u[(2, min_idx)]);

    let plane = Plane::new(normal, normal.dot(&centroid))?;
    let residuals: Vec<f64> = points.iter().map(|p| plane.signed_distance(p)).collect();
    let ss: f64 = residuals.iter().map(|r| r * r).sum();
    let stats = PlaneFitStats {
        rmse: (ss * inv_n).sqrt(),
        max_abs_residual: residuals.iter().fold(0.0, |m, r| m.max(r.abs())),
        singular_values: sv,
        residuals,
    };
    Ok((plane, stats))
}
