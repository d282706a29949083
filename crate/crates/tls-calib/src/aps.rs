//! Additional-parameter (AP) models for the three scanner channels.
//!
//! The systematic correction added to each true quantity:
//!
//! ```text
//! Δρ = A0 + A1·ρ + A2·sin α + A3·sin(4πρ/U) + A4·cos(4πρ/U) + Σ eᵢ·bᵢ(ρ,θ,α)
//! Δθ = B1·θ + B2·sin θ + B3·cos θ + B4·sin 2θ + B5·cos 2θ
//!        + B6·sec α  (panoramic)   |   B6·(sec α − 1)  (hybrid)
//!        + B7·tan α + B8/ρ + B9·sin α + B10·cos α
//! Δα = C0 + C1·α + C2·sin α + C3·cos α + C4·sin 2α + C5·cos 2α
//!        + C6/ρ + C7·sin θ + C8·cos θ
//! ```
//!
//! Units: A0, A2, A3, A4, B8, C6 are meters (the two eccentricities divide
//! by ρ to become angles); A1, B1, C1 are dimensionless scales; all other
//! coefficients are radians. A hybrid scanner observes every point in one
//! face, which makes the full sec α collimation term inseparable from the
//! vertical-circle terms; the reduced form B6·(sec α − 1) removes the
//! constant part it shares with them.

use crate::{Result, TlsError};

/// How the scanner sweeps the sky; selects the collimation-term form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScannerArchitecture {
    /// Two-face scanner (telescope sweeps through the zenith).
    Panoramic,
    /// Single-face scanner with a camera-like window.
    Hybrid,
}

/// Rangefinder APs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeAps {
    /// Rangefinder offset (m).
    pub a0: f64,
    /// Range scale error (dimensionless).
    pub a1: f64,
    /// Vertical offset of the laser axis (m).
    pub a2: f64,
    /// Cyclic error, sine coefficient (m).
    pub a3: f64,
    /// Cyclic error, cosine coefficient (m).
    pub a4: f64,
    /// Unit length of the cyclic error (m), a fixed instrument constant.
    pub u: f64,
}

impl Default for RangeAps {
    fn default() -> Self {
        Self {
            a0: 0.0,
            a1: 0.0,
            a2: 0.0,
            a3: 0.0,
            a4: 0.0,
            u: 10.0,
        }
    }
}

/// Horizontal-circle APs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HzAps {
    /// Direction scale error (dimensionless).
    pub b1: f64,
    /// Circle eccentricity, sine (rad).
    pub b2: f64,
    /// Circle eccentricity, cosine (rad).
    pub b3: f64,
    /// Second-harmonic sine (rad).
    pub b4: f64,
    /// Second-harmonic cosine (rad).
    pub b5: f64,
    /// Collimation axis error (rad); see [`ScannerArchitecture`].
    pub b6: f64,
    /// Trunnion (horizontal) axis error (rad).
    pub b7: f64,
    /// Collimation axis eccentricity (m).
    pub b8: f64,
    /// Empirical elevation coupling, sine (rad).
    pub b9: f64,
    /// Empirical elevation coupling, cosine (rad).
    pub b10: f64,
}

/// Vertical-circle APs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VAps {
    /// Vertical circle index error (rad).
    pub c0: f64,
    /// Vertical scale error (dimensionless).
    pub c1: f64,
    /// First-harmonic sine (rad).
    pub c2: f64,
    /// First-harmonic cosine (rad).
    pub c3: f64,
    /// Second-harmonic sine (rad).
    pub c4: f64,
    /// Second-harmonic cosine (rad).
    pub c5: f64,
    /// Vertical circle eccentricity (m).
    pub c6: f64,
    /// Empirical direction coupling, sine (rad).
    pub c7: f64,
    /// Empirical direction coupling, cosine (rad).
    pub c8: f64,
}

/// All three channels together.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ApSet {
    /// Range channel.
    pub range: RangeAps,
    /// Horizontal circle.
    pub hz: HzAps,
    /// Vertical circle.
    pub v: VAps,
}

/// User-supplied empirical basis function of (ρ, θ, α).
pub type EmpiricalBasis = fn(rho: f64, theta: f64, alpha: f64) -> f64;

/// Number of modelled range APs (A0..A4).
pub const N_RANGE_APS: usize = 5;
/// Number of modelled horizontal APs (B1..B10).
pub const N_HZ_APS: usize = 10;
/// Number of modelled vertical APs (C0..C8).
pub const N_V_APS: usize = 9;

/// Which APs an adjustment estimates; unselected ones stay at their input
/// values (normally zero).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ApSelection {
    /// Range flags for A0..A4.
    pub range: [bool; N_RANGE_APS],
    /// Horizontal flags for B1..B10.
    pub hz: [bool; N_HZ_APS],
    /// Vertical flags for C0..C8.
    pub v: [bool; N_V_APS],
}

impl ApSelection {
    /// Nothing selected.
    pub fn none() -> Self {
        Self {
            range: [false; N_RANGE_APS],
            hz: [false; N_HZ_APS],
            v: [false; N_V_APS],
        }
    }

    /// Every modelled AP selected.
    pub fn all() -> Self {
        Self {
            range: [true; N_RANGE_APS],
            hz: [true; N_HZ_APS],
            v: [true; N_V_APS],
        }
    }

    /// Selection from parameter names, e.g. `["A0", "B6", "C0"]`.
    pub fn from_names<'a, I: IntoIterator<Item = &'a str>>(names: I) -> Result<Self> {
        let mut sel = Self::none();
        for name in names {
            let name = name.trim();
            if name.is_empty() {
                continue;
            }
            let (family, idx) = name.split_at(1);
            let idx: usize = idx.parse().map_err(|_| TlsError::InvalidNetwork {
                reason: format!("unknown AP name {name:?}"),
            })?;
            let ok = match family {
                "A" | "a" if idx < N_RANGE_APS => {
                    sel.range[idx] = true;
                    true
                }
                "B" | "b" if (1..=N_HZ_APS).contains(&idx) => {
                    sel.hz[idx - 1] = true;
                    true
                }
                "C" | "c" if idx < N_V_APS => {
                    sel.v[idx] = true;
                    true
                }
                _ => false,
            };
            if !ok {
                return Err(TlsError::InvalidNetwork {
                    reason: format!("unknown AP name {name:?}"),
                });
            }
        }
        Ok(sel)
    }

    /// Names of the selected APs in canonical order.
    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, on) in self.range.iter().enumerate() {
            if *on {
                out.push(format!("A{i}"));
            }
        }
        for (i, on) in self.hz.iter().enumerate() {
            if *on {
                out.push(format!("B{}", i + 1));
            }
        }
        for (i, on) in self.v.iter().enumerate() {
            if *on {
                out.push(format!("C{i}"));
            }
        }
        out
    }

    /// Number of selected APs.
    pub fn count(&self) -> usize {
        self.range.iter().filter(|b| **b).count()
            + self.hz.iter().filter(|b| **b).count()
            + self.v.iter().filter(|b| **b).count()
    }
}

/// Range correction Δρ (m).
pub fn eval_range_ap(
    rho: f64,
    alpha: f64,
    aps: &RangeAps,
    empirical: &[(f64, EmpiricalBasis)],
) -> f64 {
    debug_assert!(rho > 0.0 && aps.u > 0.0);
    let cyc = 4.0 * std::f64::consts::PI * rho / aps.u;
    let mut delta = aps.a0
        + aps.a1 * rho
        + aps.a2 * alpha.sin()
        + aps.a3 * cyc.sin()
        + aps.a4 * cyc.cos();
    for (coefficient, basis) in empirical {
        delta += coefficient * basis(rho, 0.0, alpha);
    }
    delta
}

/// Horizontal-direction correction Δθ (rad).
///
/// Fails within 0.001 rad of α = ±π/2 where sec and tan blow up; panoramic
/// second-face elevations (α > π/2) are valid inputs on their branch.
pub fn eval_hz_ap(
    theta: f64,
    alpha: f64,
    rho: f64,
    aps: &HzAps,
    arch: ScannerArchitecture,
) -> Result<f64> {
    debug_assert!(rho > 0.0);
    let cos_a = alpha.cos();
    if cos_a.abs() < 1e-3 {
        return Err(TlsError::SingularElevation {
            alpha_deg: alpha.to_degrees(),
        });
    }
    let sec_a = 1.0 / cos_a;
    let collimation = match arch {
        ScannerArchitecture::Panoramic => aps.b6 * sec_a,
        ScannerArchitecture::Hybrid => aps.b6 * (sec_a - 1.0),
    };
    Ok(aps.b1 * theta
        + aps.b2 * theta.sin()
        + aps.b3 * theta.cos()
        + aps.b4 * (2.0 * theta).sin()
        + aps.b5 * (2.0 * theta).cos()
        + collimation
        + aps.b7 * alpha.tan()
        + aps.b8 / rho
        + aps.b9 * alpha.sin()
        + aps.b10 * alpha.cos())
}

/// Elevation correction Δα (rad).
pub fn eval_v_ap(alpha: f64, theta: f64, rho: f64, aps: &VAps) -> f64 {
    debug_assert!(rho > 0.0);
    aps.c0
        + aps.c1 * alpha
        + aps.c2 * alpha.sin()
        + aps.c3 * alpha.cos()
        + aps.c4 * (2.0 * alpha).sin()
        + aps.c5 * (2.0 * alpha).cos()
        + aps.c6 / rho
        + aps.c7 * theta.sin()
        + aps.c8 * theta.cos()
}

impl ApSet {
    /// Reads the coefficient selected by `selection` index `k` (canonical
    /// order: selected A's, then B's, then C's).
    pub fn selected(&self, selection: &ApSelection) -> Vec<f64> {
        let range = [
            self.range.a0,
            self.range.a1,
            self.range.a2,
            self.range.a3,
            self.range.a4,
        ];
        let hz = [
            self.hz.b1, self.hz.b2, self.hz.b3, self.hz.b4, self.hz.b5, self.hz.b6, self.hz.b7,
            self.hz.b8, self.hz.b9, self.hz.b10,
        ];
        let v = [
            self.v.c0, self.v.c1, self.v.c2, self.v.c3, self.v.c4, self.v.c5, self.v.c6,
            self.v.c7, self.v.c8,
        ];
        let mut out = Vec::with_capacity(selection.count());
        for (val, on) in range.iter().zip(&selection.range) {
            if *on {
                out.push(*val);
            }
        }
        for (val, on) in hz.iter().zip(&selection.hz) {
            if *on {
                out.push(*val);
            }
        }
        for (val, on) in v.iter().zip(&selection.v) {
            if *on {
                out.push(*val);
            }
        }
        out
    }

    /// Adds `delta[k]` to each selected coefficient (canonical order).
    pub fn apply_update(&mut self, selection: &ApSelection, delta: &[f64]) {
        let mut k = 0;
        let mut bump = |on: bool, slot: &mut f64| {
            if on {
                *slot += delta[k];
                k += 1;
            }
        };
        bump(selection.range[0], &mut self.range.a0);
        bump(selection.range[1], &mut self.range.a1);
        bump(selection.range[2], &mut self.range.a2);
        bump(selection.range[3], &mut self.range.a3);
        bump(selection.range[4], &mut self.range.a4);
        bump(selection.hz[0], &mut self.hz.b1);
        bump(selection.hz[1], &mut self.hz.b2);
        bump(selection.hz[2], &mut self.hz.b3);
        bump(selection.hz[3], &mut self.hz.b4);
        bump(selection.hz[4], &mut self.hz.b5);
        bump(selection.hz[5], &mut self.hz.b6);
        bump(selection.hz[6], &mut self.hz.b7);
        bump(selection.hz[7], &mut self.hz.b8);
        bump(selection.hz[8], &mut self.hz.b9);
        bump(selection.hz[9], &mut self.hz.b10);
        bump(selection.v[0], &mut self.v.c0);
        bump(selection.v[1], &mut self.v.c1);
        bump(selection.v[2], &mut self.v.c2);
        bump(selection.v[3], &mut self.v.c3);
        bump(selection.v[4], &mut self.v.c4);
        bump(selection.v[5], &mut self.v.c5);
        bump(selection.v[6], &mut self.v.c6);
        bump(selection.v[7], &mut self.v.c7);
        bump(selection.v[8], &mut self.v.c8);
        debug_assert_eq!(k, delta.len());
    }

    /// Partial derivatives of (Δρ, Δθ, Δα) with respect to each selected
    /// AP, evaluated at the given true quantities. Each returned row is
    /// (∂Δρ/∂p, ∂Δθ/∂p, ∂Δα/∂p) in canonical selection order.
    pub fn partials(
        selection: &ApSelection,
        rho: f64,
        theta: f64,
        alpha: f64,
        u: f64,
        arch: ScannerArchitecture,
    ) -> Vec<[f64; 3]> {
        let cyc = 4.0 * std::f64::consts::PI * rho / u;
        let sec_a = 1.0 / alpha.cos();
        let range_basis = [1.0, rho, alpha.sin(), cyc.sin(), cyc.cos()];
        let collim = match arch {
            ScannerArchitecture::Panoramic => sec_a,
            ScannerArchitecture::Hybrid => sec_a - 1.0,
        };
        let hz_basis = [
            theta,
            theta.sin(),
            theta.cos(),
            (2.0 * theta).sin(),
            (2.0 * theta).cos(),
            collim,
            alpha.tan(),
            1.0 / rho,
            alpha.sin(),
            alpha.cos(),
        ];
        let v_basis = [
            1.0,
            alpha,
            alpha.sin(),
            alpha.cos(),
            (2.0 * alpha).sin(),
            (2.0 * alpha).cos(),
            1.0 / rho,
            theta.sin(),
            theta.cos(),
        ];
        let mut out = Vec::with_capacity(selection.count());
        for (b, on) in range_basis.iter().zip(&selection.range) {
            if *on {
                out.push([*b, 0.0, 0.0]);
            }
        }
        for (b, on) in hz_basis.iter().zip(&selection.hz) {
            if *on {
                out.push([0.0, *b, 0.0]);
            }
        }
        for (b, on) in v_basis.iter().zip(&selection.v) {
            if *on {
                out.push([0.0, 0.0, *b]);
            }
        }
        out
    }
}
