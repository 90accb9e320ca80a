use nalgebra::DVector;
use proptest::prelude::*;
use qpmeas::measurement::{
    build_model, check_theorem_conditions, minimum_trade_off_model, qrms_errors, qrms_errors_from_noise, sweep,
    sweep_sequential, uniform_nu_grid, ModelFamily,
};
use qpmeas::quadrature::{GaussianState, MinUncertaintyParams};
use qpmeas::statistics::{
    empirical_moments, ks_critical_value, ks_statistic, named_joint, normal_cdf, sample, sample_sequential, NamedJoint,
};

fn psi_strategy() -> impl Strategy<Value = MinUncertaintyParams> {
    (-2.0..2.0f64, -2.0..2.0f64, 0.3..3.0f64, 0.5..2.0f64)
        .prop_map(|(q1, p1, s, h)| MinUncertaintyParams::new(q1, p1, s, h).unwrap())
}

fn shifted(probe: &GaussianState, shift: [f64; 4]) -> GaussianState {
    let mean = probe.mean() + DVector::from_row_slice(&shift);
    GaussianState::new(probe.modes().to_vec(), mean, probe.cov().clone(), probe.hbar()).unwrap()
}

fn scaled(probe: &GaussianState, factor: f64) -> GaussianState {
    // a thermal-like inflation keeps the state physical
    GaussianState::new(probe.modes().to_vec(), probe.mean().clone(), probe.cov() * factor, probe.hbar()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn minimum_trade_off_models_attain_the_bound(
        nu in 0.02..0.98f64,
        tau in 0.1..2.0f64,
        gamma2 in -2.0..2.0f64,
        e in -2.0..2.0f64,
        psi in psi_strategy(),
    ) {
        let m = match minimum_trade_off_model(nu, tau, gamma2, e, &psi) {
            Ok(m) => m,
            Err(qpmeas::Error::DegenerateTimeFactor { .. }) => return Ok(()),
            Err(err) => panic!("{err}"),
        };
        let report = check_theorem_conditions(&m, &psi).unwrap();
        prop_assert!(report.all_pass(), "{report:?}");
        prop_assert!(report.bo_residual.abs() <= 1e-8 * psi.hbar * psi.hbar);
    }

    #[test]
    fn perturbed_probes_fail_and_leave_slack(
        fam_idx in 0usize..4,
        nu in 0.05..0.95f64,
        psi in psi_strategy(),
        which in 0usize..4,
        size in 0.1..1.0f64,
        inflate in prop::bool::ANY,
    ) {
        let fam = ModelFamily::MINIMUM_TRADE_OFF[fam_idx];
        let m = build_model(fam, nu, &psi).unwrap();
        let probe = if inflate {
            scaled(m.probe(), 1.0 + size)
        } else {
            let mut shift = [0.0; 4];
            // components that enter the meters: Q2, Q3 for position and P2, P3 for momentum
            shift[which] = size * psi.sigma1.max(psi.sigma_p()) * 4.0;
            shifted(m.probe(), shift)
        };
        let p = m.with_probe(probe).unwrap();
        let report = check_theorem_conditions(&p, &psi).unwrap();
        let tight = report.bo_residual.abs() <= 1e-8 * psi.hbar * psi.hbar;
        prop_assert_eq!(report.all_pass(), tight, "{:?}", report);
    }

    #[test]
    fn error_routes_agree_on_families(fam_idx in 0usize..4, nu in 0.01..0.99f64, psi in psi_strategy()) {
        let m = build_model(ModelFamily::MINIMUM_TRADE_OFF[fam_idx], nu, &psi).unwrap();
        let a = qrms_errors(&m, &psi).unwrap();
        let b = qrms_errors_from_noise(&m, &psi).unwrap();
        prop_assert!((a.eps_q - b.eps_q).abs() <= 1e-9 * a.eps_q.max(1.0));
        prop_assert!((a.eps_p - b.eps_p).abs() <= 1e-9 * a.eps_p.max(1.0));
    }
}

#[test]
fn parallel_sweep_matches_sequential() {
    let psi = MinUncertaintyParams::new(0.2, 0.1, 1.1, 1.0).unwrap();
    let grid = uniform_nu_grid(257);
    for fam in [ModelFamily::X, ModelFamily::Z, ModelFamily::ArthursKelly] {
        assert_eq!(sweep(fam, &grid, &psi).unwrap(), sweep_sequential(fam, &grid, &psi).unwrap());
    }
}

#[test]
fn sweep_is_family_independent() {
    let psi = MinUncertaintyParams::default();
    let grid = uniform_nu_grid(49);
    let x = sweep(ModelFamily::X, &grid, &psi).unwrap();
    let z = sweep(ModelFamily::Z, &grid, &psi).unwrap();
    for (a, b) in x.iter().zip(&z) {
        assert!((a.eps_q - b.eps_q).abs() < 1e-12);
        assert!((a.eps_p - b.eps_p).abs() < 1e-12);
    }
}

#[test]
fn sampled_meters_pass_ks_and_moment_checks() {
    let psi = MinUncertaintyParams::new(0.5, -0.25, 0.8, 1.0).unwrap();
    let m = build_model(ModelFamily::Z, 0.35, &psi).unwrap();
    let j = named_joint(&m, &psi, NamedJoint::Meters).unwrap();
    let n = 200_000;
    let s = sample(&j, n, 77).unwrap();
    assert_eq!(s, sample_sequential(&j, n, 77).unwrap());

    let crit = ks_critical_value(1e-3) / (n as f64).sqrt();
    for k in 0..2 {
        let mu = j.mean()[k];
        let sd = j.cov()[(k, k)].sqrt();
        let d = ks_statistic(&s.column(k), |x| normal_cdf((x - mu) / sd));
        assert!(d < crit, "D = {d}, critical {crit}");
    }
    let (mean, cov) = empirical_moments(&s);
    let cov = cov.unwrap();
    for k in 0..2 {
        let sd = j.cov()[(k, k)].sqrt();
        assert!((mean[k] - j.mean()[k]).abs() < 5.0 * sd / (n as f64).sqrt());
        // variance of a sample variance is 2 s^4 / (n - 1)
        let se = (2.0f64 / (n - 1) as f64).sqrt() * sd * sd;
        assert!((cov[(k, k)] - j.cov()[(k, k)]).abs() < 5.0 * se);
    }
}

#[test]
fn single_draw_has_no_covariance() {
    let m = build_model(ModelFamily::Y0, 0.5, &MinUncertaintyParams::default()).unwrap();
    let j = named_joint(&m, &MinUncertaintyParams::default(), NamedJoint::QPair).unwrap();
    let s = sample(&j, 1, 3).unwrap();
    assert_eq!(s.len(), 1);
    assert!(empirical_moments(&s).1.is_none());
}
