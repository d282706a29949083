//! Compatibility test between two estimated AP sets.
//!
//! Two calibrations of the same instrument rarely produce identical
//! coefficients; the question is whether the differences *matter*. The test
//! answers it in coordinate space: propagate the coefficient difference
//! into metric point displacements over a grid of representative scan
//! geometries, and compare the mean squared displacement against what the
//! two AP covariances explain.
//!
//! With Δ the coefficient difference and `H` the grid-averaged squared
//! displacement form, the statistic `T = Δᵀ·H·Δ` is, under the null
//! hypothesis Δ ~ N(0, S), a weighted sum of independent χ²₁ variables
//! whose weights are the eigenvalues of `H·S`. The critical value uses the
//! Satterthwaite moment match: the weighted sum is approximated by a scaled
//! χ² with an effective (generally fractional) degree-of-freedom count.

use nalgebra::DMatrix;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::adjust::AdjustmentResult;
use crate::aps::ApSet;
use crate::{Result, TlsError};

/// Grid and significance configuration for the test.
#[derive(Debug, Clone, PartialEq)]
pub struct CompatOptions {
    /// Significance level α of the one-sided test.
    pub significance: f64,
    /// Ranges ρ (m) of the evaluation grid.
    pub ranges: Vec<f64>,
    /// Number of equally spaced horizontal directions.
    pub directions: usize,
    /// Elevations α (rad) of the evaluation grid.
    pub elevations: Vec<f64>,
}

impl Default for CompatOptions {
    fn default() -> Self {
        Self {
            significance: 0.01,
            ranges: vec![2.0, 5.0, 10.0, 20.0, 40.0],
            directions: 12,
            elevations: [-40.0f64, -20.0, 0.0, 20.0, 40.0, 60.0]
                .iter()
                .map(|d| d.to_radians())
                .collect(),
        }
    }
}

/// Outcome of the compatibility test.
#[derive(Debug, Clone)]
pub struct CompatVerdict {
    /// Mean squared coordinate displacement Δᵀ·H·Δ (m²) induced by the
    /// coefficient difference over the grid.
    pub statistic: f64,
    /// Root of the statistic: RMS point displacement (m).
    pub rms_displacement: f64,
    /// Critical value (m²) at the configured significance.
    pub critical: f64,
    /// `statistic ≤ critical`.
    pub compatible: bool,
    /// Effective degrees of freedom of the moment-matched χ².
    pub effective_dof: f64,
    /// Eigenvalues of H·S, descending (m² each).
    pub eigenvalues: Vec<f64>,
}

/// Builds the grid-averaged displacement form H (K×K): each grid node
/// contributes the squared metric displacement of the correction
/// difference, with circle corrections scaled by their lever arms
/// (ρ·cosα for θ, ρ for α).
fn displacement_form(result: &AdjustmentResult, options: &CompatOptions) -> DMatrix<f64> {
    let selection = result.selection();
    let k = selection.count();
    let arch = result.network.architecture;
    let u = result.network.initial_aps.range.u;
    let mut h = DMatrix::zeros(k, k);
    let mut nodes = 0usize;
    for &rho in &options.ranges {
        for step in 0..options.directions {
            let theta = step as f64 * std::f64::consts::TAU / options.directions as f64;
            for &alpha in &options.elevations {
                let basis = ApSet::partials(selection, rho, theta, alpha, u, arch);
                let scale = [1.0, rho * alpha.cos(), rho];
                for (i, bi) in basis.iter().enumerate() {
                    for (j, bj) in basis.iter().enumerate() {
                        let mut dot = 0.0;
                        for c in 0..3 {
                            dot += scale[c] * scale[c] * bi[c] * bj[c];
                        }
                        h[(i, j)] += dot;
                    }
                }
                nodes += 1;
            }
        }
    }
    h / nodes as f64
}

/// Critical value of `Σ λᵢ·χ²₁` at significance `alpha` via the
/// Satterthwaite two-moment match: scale g = Σλ²/Σλ, dof h = (Σλ)²/Σλ².
fn satterthwaite_critical(eigenvalues: &[f64], alpha: f64) -> Result<(f64, f64)> {
    let sum: f64 = eigenvalues.iter().sum();
    let sum_sq: f64 = eigenvalues.iter().map(|l| l * l).sum();
    if !(sum > 0.0 && sum_sq > 0.0) {
        return Err(TlsError::SingularSystem {
            diagnostic: "null AP covariance: compatibility threshold undefined".into(),
        });
    }
    let scale = sum_sq / sum;
    let dof = sum * sum / sum_sq;
    let chi = ChiSquared::new(dof).map_err(|_| TlsError::SingularSystem {
        diagnostic: format!("invalid effective dof {dof:e}"),
    })?;
    Ok((scale * chi.inverse_cdf(1.0 - alpha), dof))
}

/// Tests whether two AP estimates of the same selection are compatible.
///
/// Both results must estimate the same AP selection on the same scanner
/// architecture. The combined covariance `S = S_a + S_b` treats the two
/// calibrations as independent.
pub fn ap_set_compatibility(
    a: &AdjustmentResult,
    b: &AdjustmentResult,
    options: &CompatOptions,
) -> Result<CompatVerdict> {
    if a.selection() != b.selection() {
        return Err(TlsError::SelectionMismatch);
    }
    if a.network.architecture != b.network.architecture {
        return Err(TlsError::InvalidNetwork {
            reason: "compatibility test across scanner architectures".into(),
        });
    }
    let k = a.ap_count();
    if k == 0 {
        return Err(TlsError::InvalidNetwork {
            reason: "no APs estimated".into(),
        });
    }

    let delta = DMatrix::from_vec(
        k,
        1,
        a.ap_values()
            .iter()
            .zip(b.ap_values())
            .map(|(va, vb)| va - vb)
            .collect(),
    );
    let h = displacement_form(a, options);
    let statistic = (delta.transpose() * &h * &delta)[(0, 0)];

    // Eigenvalues of H·S through the symmetric similar matrix S^½·H·S^½.
    let s = a.ap_covariance() + b.ap_covariance();
    let s_eig = nalgebra::linalg::SymmetricEigen::new(s);
    let mut sqrt_vals = s_eig.eigenvalues.clone();
    for v in sqrt_vals.iter_mut() {
        *v = v.max(0.0).sqrt();
    }
    let s_half =
        &s_eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * s_eig.eigenvectors.transpose();
    let m = &s_half * h * &s_half;
    let mut eigenvalues: Vec<f64> = nalgebra::linalg::SymmetricEigen::new(m)
        .eigenvalues
        .iter()
        .map(|l| l.max(0.0))
        .collect();
    eigenvalues.sort_by(|x, y| y.partial_cmp(x).expect("finite eigenvalues"));

    let (critical, effective_dof) = satterthwaite_critical(&eigenvalues, options.significance)?;
    Ok(CompatVerdict {
        statistic,
        rms_displacement: statistic.max(0.0).sqrt(),
        critical,
        compatible: statistic <= critical,
        effective_dof,
        eigenvalues,
    })
}
