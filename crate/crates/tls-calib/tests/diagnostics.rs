//! Diagnostic machinery on simulated campaigns: variance-component
//! estimation, blunder screening, and AP-set compatibility.

mod common;

use common::{perturb_initials, simulate_point_network, PointSimConfig, ARCSEC};
use tls_calib::{
    ap_set_compatibility, run_vce, snoop, solve_point_based, AdjustOptions, ApSelection, ApSet,
    CompatOptions, ObservationGroup, SnoopOptions, VceOptions,
};

fn truth() -> ApSet {
    let mut truth = ApSet::default();
    truth.range.a0 = 1.5e-3;
    truth.hz.b6 = 30.0 * ARCSEC;
    truth.v.c0 = -20.0 * ARCSEC;
    truth
}

fn selection() -> ApSelection {
    ApSelection::from_names(["A0", "B6", "C0"]).unwrap()
}

#[test]
fn vce_recovers_misjudged_direction_noise() {
    // Simulate with a direction channel twice as noisy as the model
    // claims, then let variance-component estimation find that out.
    let mut cfg = PointSimConfig {
        seed: 21,
        truth: truth(),
        selection: selection(),
        ..PointSimConfig::default()
    };
    let stated_sigma_theta = cfg.stochastic.sigma_theta;
    cfg.stochastic.sigma_theta *= 2.0; // what the instrument really does
    let mut net = simulate_point_network(&cfg);
    net.stochastic.sigma_theta = stated_sigma_theta; // what the operator claims
    perturb_initials(&mut net, 3);

    let outcome = run_vce(&net, &AdjustOptions::default(), &VceOptions::default()).unwrap();
    let last = outcome.factors.last().unwrap();
    for factor in last {
        assert!((factor - 1.0).abs() <= VceOptions::default().tolerance);
    }
    let ratio = outcome.stochastic.sigma_theta / stated_sigma_theta;
    assert!(
        (1.6..2.4).contains(&ratio),
        "direction σ rescaled by {ratio}, expected ≈2"
    );
    // The untouched channels stay near their stated precisions.
    let rho_ratio = outcome.stochastic.sigma_rho0 / net.stochastic.sigma_rho0;
    assert!((0.8..1.25).contains(&rho_ratio), "range σ ratio {rho_ratio}");
}

#[test]
fn snooping_flags_an_injected_range_blunder_first() {
    let cfg = PointSimConfig {
        seed: 33,
        truth: truth(),
        selection: selection(),
        ..PointSimConfig::default()
    };
    let mut net = simulate_point_network(&cfg);
    // A 6 mm range blunder (12 a-priori σ) on one observation.
    let culprit = 17;
    {
        let o = &mut net.observations[culprit];
        o.obs.rho += 6e-3;
    }
    let result = solve_point_based(&net, &AdjustOptions::default()).unwrap();
    let flags = snoop(&result, &SnoopOptions::default());
    assert!(!flags.is_empty(), "the blunder went unnoticed");
    assert_eq!(flags[0].observation, Some(culprit));
    assert_eq!(flags[0].group, ObservationGroup::Range);
    assert!(flags[0].standardized.abs() > 5.0);
}

#[test]
fn snooping_stays_quiet_on_clean_data() {
    let cfg = PointSimConfig {
        seed: 55,
        truth: truth(),
        selection: selection(),
        ..PointSimConfig::default()
    };
    let net = simulate_point_network(&cfg);
    let result = solve_point_based(&net, &AdjustOptions::default()).unwrap();
    let flags = snoop(&result, &SnoopOptions::default());
    // 243 rows at α = 0.001: expect ≈0.24 false alarms; a handful would
    // already signal a broken standardization.
    assert!(
        flags.len() <= 2,
        "{} false alarms on clean data",
        flags.len()
    );
}

#[test]
fn independent_calibrations_of_one_instrument_are_compatible() {
    let base = PointSimConfig {
        truth: truth(),
        selection: selection(),
        ..PointSimConfig::default()
    };
    let day1 = PointSimConfig { seed: 101, ..base };
    let day2 = PointSimConfig { seed: 202, ..base };
    let r1 = solve_point_based(&simulate_point_network(&day1), &AdjustOptions::default()).unwrap();
    let r2 = solve_point_based(&simulate_point_network(&day2), &AdjustOptions::default()).unwrap();
    let verdict = ap_set_compatibility(&r1, &r2, &CompatOptions::default()).unwrap();
    assert!(
        verdict.compatible,
        "statistic {:e} exceeded critical {:e}",
        verdict.statistic, verdict.critical
    );
    assert!(verdict.rms_displacement < 1e-3);
}

#[test]
fn drifted_instrument_is_flagged_incompatible() {
    let day1 = PointSimConfig {
        seed: 101,
        truth: truth(),
        selection: selection(),
        ..PointSimConfig::default()
    };
    // Same instrument later, with the rangefinder offset drifted by 4 mm —
    // far beyond what either calibration's uncertainty explains.
    let mut drifted_truth = truth();
    drifted_truth.range.a0 += 4e-3;
    let day2 = PointSimConfig {
        seed: 202,
        truth: drifted_truth,
        selection: selection(),
        ..PointSimConfig::default()
    };
    let r1 = solve_point_based(&simulate_point_network(&day1), &AdjustOptions::default()).unwrap();
    let r2 = solve_point_based(&simulate_point_network(&day2), &AdjustOptions::default()).unwrap();
    let verdict = ap_set_compatibility(&r1, &r2, &CompatOptions::default()).unwrap();
    assert!(!verdict.compatible);
    // The drift dominates the displacement: ≈4 mm RMS over the grid.
    assert!(
        verdict.rms_displacement > 2e-3,
        "rms displacement {:e}",
        verdict.rms_displacement
    );
}
