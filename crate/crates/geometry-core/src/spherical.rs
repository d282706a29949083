//! Spherical observation triplets (range, horizontal direction, elevation)
//! and their Cartesian conversions.
//!
//! A panoramic scanner sees each point in one of two faces. The elevation
//! domain is deliberately widened to (−π/2, π]: values above π/2 encode
//! second-face sightings whose horizontal circle still points at the
//! first-face direction. [`SphericalObservation::to_first_face`] and
//! [`SphericalObservation::to_second_face`] convert between the two
//! representations of the same physical point.

use crate::{Point3, Result, GeometryError};
use std::f64::consts::{FRAC_PI_2, PI, TAU};

/// Wraps an angle to [0, 2π).
pub fn wrap_0_2pi(angle: f64) -> f64 {
    let r = angle.rem_euclid(TAU);
    // rem_euclid can return 2π when angle is a tiny negative number.
    if r >= TAU {
        r - TAU
    } else {
        r
    }
}

/// Wraps an angle to (−π, π].
pub fn wrap_pi(angle: f64) -> f64 {
    let r = wrap_0_2pi(angle);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Raw polar observation of a terrestrial laser scanner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalObservation {
    /// Range ρ (m), strictly positive.
    pub rho: f64,
    /// Horizontal direction θ (rad) in [0, 2π), measured from +x toward +y.
    pub theta: f64,
    /// Elevation α (rad) above the horizon, in (−π/2, π]. Values above π/2
    /// denote second-face sightings (the telescope tipped past the zenith).
    pub alpha: f64,
}

impl SphericalObservation {
    /// Validates ranges and wraps θ into [0, 2π).
    pub fn new(rho: f64, theta: f64, alpha: f64) -> Result<Self> {
        if !(rho.is_finite() && theta.is_finite() && alpha.is_finite()) {
            return Err(GeometryError::NonFinite {
                context: "spherical observation",
            });
        }
        if rho <= 0.0 {
            return Err(GeometryError::ZeroLength { norm: rho });
        }
        Ok(Self {
            rho,
            theta: wrap_0_2pi(theta),
            alpha,
        })
    }

    /// True when the elevation lies beyond the zenith (second face).
    pub fn is_second_face(&self) -> bool {
        self.alpha > FRAC_PI_2
    }

    /// First-face representation of the same point:
    /// (ρ, θ, α) → (ρ, θ+π, π−α) when α > π/2, unchanged otherwise.
    pub fn to_first_face(&self) -> Self {
        if self.is_second_face() {
            Self {
                rho: self.rho,
                theta: wrap_0_2pi(self.theta + PI),
                alpha: PI - self.alpha,
            }
        } else {
            *self
        }
    }

    /// Second-face representation of the same point (inverse of
    /// [`Self::to_first_face`]); identity when already in the second face.
    pub fn to_second_face(&self) -> Self {
        if self.is_second_face() {
            *self
        } else {
            Self {
                rho: self.rho,
                theta: wrap_0_2pi(self.theta + PI),
                alpha: PI - self.alpha,
            }
        }
    }
}

/// Converts a Cartesian point to its canonical first-face spherical triplet.
///
/// At the zenith/nadir (x = y = 0) the horizontal direction is undefined and
/// reported as θ = 0 by convention. The origin itself is rejected because
/// ρ = 0 carries no direction at all.
pub fn cartesian_to_spherical(p: &Point3) -> Result<SphericalObservation> {
    let rho = p.coords.norm();
    if rho == 0.0 {
        return Err(GeometryError::ZeroLength { norm: 0.0 });
    }
    let horizontal = (p.x * p.x + p.y * p.y).sqrt();
    let theta = if horizontal == 0.0 {
        0.0
    } else {
        wrap_0_2pi(p.y.atan2(p.x))
    };
    let alpha = (p.z / rho).clamp(-1.0, 1.0).asin();
    SphericalObservation::new(rho, theta, alpha)
}

/// Converts a spherical triplet (either face) back to Cartesian coordinates.
pub fn spherical_to_cartesian(s: &SphericalObservation) -> Point3 {
    let (sa, ca) = s.alpha.sin_cos();
    let (st, ct) = s.theta.sin_cos();
    Point3::new(s.rho * ca * ct, s.rho * ca * st, s.rho * sa)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn diagonal_point_maps_to_quarter_angles() {
        let s = cartesian_to_spherical(&Point3::new(1.0, 1.0, 2.0_f64.sqrt())).unwrap();
        assert_relative_eq!(s.rho, 2.0, epsilon = 1e-14);
        assert_relative_eq!(s.theta, FRAC_PI_4, epsilon = 1e-14);
        assert_relative_eq!(s.alpha, FRAC_PI_4, epsilon = 1e-14);
    }

    #[test]
    fn zenith_point_reports_zero_direction() {
        let s = cartesian_to_spherical(&Point3::new(0.0, 0.0, 2.0)).unwrap();
        assert_relative_eq!(s.rho, 2.0);
        assert_relative_eq!(s.theta, 0.0);
        assert_relative_eq!(s.alpha, FRAC_PI_2, epsilon = 1e-14);
    }

    #[test]
    fn origin_is_rejected() {
        assert!(cartesian_to_spherical(&Point3::new(0.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn face_change_preserves_cartesian_position() {
        let first = SphericalObservation::new(3.5, 1.2, 0.8).unwrap();
        let second = first.to_second_face();
        assert!(second.is_second_face());
        let p1 = spherical_to_cartesian(&first);
        let p2 = spherical_to_cartesian(&second);
        assert_relative_eq!(p1, p2, epsilon = 1e-12);
        let back = second.to_first_face();
        assert_relative_eq!(back.rho, first.rho, epsilon = 1e-15);
        assert_relative_eq!(back.theta, first.theta, epsilon = 1e-12);
        assert_relative_eq!(back.alpha, first.alpha, epsilon = 1e-12);
    }

    #[test]
    fn wrap_helpers_cover_edges() {
        assert_relative_eq!(wrap_0_2pi(-0.1), TAU - 0.1, epsilon = 1e-12);
        assert!(wrap_0_2pi(TAU) < TAU);
        // Negative values so small that rem_euclid rounds back to 2π must
        // still land inside [0, 2π).
        assert_eq!(wrap_0_2pi(-1e-17), 0.0);
        assert_relative_eq!(wrap_pi(PI + 0.1), -PI + 0.1, epsilon = 1e-12);
        assert_relative_eq!(wrap_pi(PI), PI, epsilon = 1e-12);
    }
}
