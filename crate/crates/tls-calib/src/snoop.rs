//! Outlier screening on standardized residuals (data snooping).
//!
//! Each scalar row of an adjustment carries a standardized residual
//! `v / (σ·√r)` that is standard normal when the observation is clean and
//! the stochastic model holds. Rows whose statistic exceeds the two-sided
//! normal critical value at the chosen significance are flagged, most
//! suspicious first. Rows without redundancy cannot be screened — an
//! undetected blunder there slips through by design of the network, not of
//! the test — and are skipped.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::adjust::{AdjustmentResult, ObservationGroup, ResidualRecord};

/// Significance configuration for the screening.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnoopOptions {
    /// Two-sided significance level α of the per-row test.
    pub significance: f64,
}

impl Default for SnoopOptions {
    /// α = 0.001, the customary level for this test (critical ≈ 3.29).
    fn default() -> Self {
        Self { significance: 0.001 }
    }
}

/// One flagged row.
#[derive(Debug, Clone, Copy)]
pub struct SnoopFlag {
    /// Index into the network observation list (`None` for
    /// pseudo-observations).
    pub observation: Option<usize>,
    /// Station of the flagged row.
    pub station: usize,
    /// Row category.
    pub group: ObservationGroup,
    /// Standardized residual that tripped the test.
    pub standardized: f64,
    /// Critical value it was compared against.
    pub critical: f64,
}

/// Two-sided standard-normal critical value for significance `alpha`.
pub fn critical_value(alpha: f64) -> f64 {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    normal.inverse_cdf(1.0 - alpha / 2.0)
}

/// Screens a slice of residual records; returns the rows exceeding the
/// critical value, ordered by descending |standardized residual|.
pub fn snoop_records(records: &[ResidualRecord], options: &SnoopOptions) -> Vec<SnoopFlag> {
    let critical = critical_value(options.significance);
    let mut flags: Vec<SnoopFlag> = records
        .iter()
        .filter(|r| r.standardized.is_finite() && r.standardized.abs() > critical)
        .map(|r| SnoopFlag {
            observation: r.observation,
            station: r.station,
            group: r.group,
            standardized: r.standardized,
            critical,
        })
        .collect();
    flags.sort_by(|a, b| {
        b.standardized
            .abs()
            .partial_cmp(&a.standardized.abs())
            .expect("finite statistics")
    });
    flags
}

/// Screens every row of an adjustment result.
pub fn snoop(result: &AdjustmentResult, options: &SnoopOptions) -> Vec<SnoopFlag> {
    snoop_records(&result.residuals, options)
}
