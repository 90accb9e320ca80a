//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any failed.

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use nalgebra::{Matrix3, SMatrix};
use qpmeas::dynamics::{closed_form_propagator, numeric_expm, PropagatedTransform};
use qpmeas::measurement::{
    arthurs_kelly_model, build_model, check_theorem_conditions, qrms_errors, sweep, uniform_nu_grid, ModelFamily,
};
use qpmeas::quadrature::{commutator_coeff, moments, MinUncertaintyParams};
use qpmeas::random::{random_measurement, random_probe, random_solvable_generator};
use qpmeas::statistics::{
    conditional, empirical_gauss_error, gauss_error, joint_distribution, named_joint, posterior_consistency,
    posterior_state, region_mixture_moments, sample, JointGaussian, NamedJoint, OutcomeRegion, PosteriorFamily,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

const FAMILIES: [ModelFamily; 4] = ModelFamily::MINIMUM_TRADE_OFF;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs())
}

fn within_time(start: Instant, limit: Duration) -> Result<Duration, String> {
    let t = start.elapsed();
    ensure(t < limit, || format!("took {t:?}, limit {limit:?}"))?;
    Ok(t)
}

fn grid() -> Vec<f64> {
    uniform_nu_grid(99)
}

fn states() -> Vec<MinUncertaintyParams> {
    vec![
        MinUncertaintyParams::default(),
        MinUncertaintyParams::new(0.8, -1.3, 0.6, 1.7).unwrap(),
    ]
}

fn m_of(nu: f64) -> f64 {
    nu * (1.0 - nu)
}

fn table2(family: ModelFamily, nu: f64) -> (Matrix3<f64>, Matrix3<f64>) {
    let m = m_of(nu);
    let w = 1.0 - nu;
    match family {
        ModelFamily::X => (
            Matrix3::new(-1.0, -4.0 / nu, 0.0, nu, 2.0, -m / 4.0, 0.0, -4.0 / m, 0.0),
            Matrix3::new(-1.0, 0.0, -4.0 / w, 0.0, 0.0, -4.0 / m, w, -m / 4.0, 2.0),
        ),
        ModelFamily::Y2 => (
            Matrix3::new(-1.0, -8.0 / nu, 0.0, nu, 4.0, -m / 8.0, 0.0, -8.0 / m, 0.0),
            Matrix3::new(-1.0, 0.0, -8.0 / w, 0.0, 0.0, -8.0 / m, w, -m / 8.0, 4.0),
        ),
        ModelFamily::Y0 => (
            Matrix3::new(1.0, 0.0, -w, nu, 1.0, -m / 2.0, 0.0, 0.0, 1.0),
            Matrix3::new(1.0, -nu, 0.0, 0.0, 1.0, 0.0, w, -m / 2.0, 1.0),
        ),
        ModelFamily::Z => (
            Matrix3::new(1.0, 0.0, -w / 2.0, nu, 2.0, -m / 4.0, 0.0, 0.0, 0.5),
            Matrix3::new(1.0, -nu / 2.0, 0.0, 0.0, 0.5, 0.0, w, -m / 4.0, 2.0),
        ),
        ModelFamily::ArthursKelly => unreachable!(),
    }
}

fn scaled_diff<const N: usize>(a: &SMatrix<f64, N, N>, b: &SMatrix<f64, N, N>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0))
        .fold(0.0, f64::max)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for psi in states() {
        let sp2 = psi.sigma_p().powi(2);
        for fam in FAMILIES {
            for row in sweep(fam, &grid(), &psi).map_err(|e| e.to_string())? {
                let (eq, ep) = ((1.0 - row.nu) * psi.sigma1 * psi.sigma1, row.nu * sp2);
                worst = worst.max(((row.eps_q.powi(2) - eq) / eq).abs()).max(((row.eps_p.powi(2) - ep) / ep).abs());
            }
        }
    }
    ensure(worst <= 1e-10, || format!("max relative deviation {worst:e}"))?;
    let t = within_time(start, Duration::from_secs(1))?;
    Ok(format!("max relative deviation {worst:.2e} in {t:?}"))
}

fn criterion_2() -> Outcome {
    let mut worst: f64 = 0.0;
    for psi in states() {
        let target = 0.25 * psi.hbar * psi.hbar;
        for fam in FAMILIES {
            for row in sweep(fam, &grid(), &psi).map_err(|e| e.to_string())? {
                worst = worst.max(((row.bo_lhs - target) / target).abs());
            }
        }
    }
    ensure(worst <= 1e-10, || format!("equality off by relative {worst:e}"))?;

    let base = MinUncertaintyParams::new(0.4, 0.9, 1.3, 1.0).unwrap();
    let lhs_at = |hbar: f64| -> Result<Vec<f64>, String> {
        let psi = MinUncertaintyParams { hbar, ..base };
        let mut out = Vec::new();
        for fam in FAMILIES {
            out.extend(sweep(fam, &grid(), &psi).map_err(|e| e.to_string())?.iter().map(|r| r.bo_lhs));
        }
        Ok(out)
    };
    let unit = lhs_at(1.0)?;
    for hbar in [0.5, 1.0, 2.0] {
        for (a, b) in lhs_at(hbar)?.iter().zip(&unit) {
            ensure(rel_close(*a, hbar * hbar * b, 1e-10), || format!("hbar = {hbar}: {a} vs {}", hbar * hbar * b))?;
        }
    }
    Ok(format!("max relative deviation {worst:.2e}; scales as hbar^2 for hbar in {{0.5, 1, 2}}"))
}

fn criterion_3() -> Outcome {
    let mut worst: f64 = 0.0;
    for psi in states() {
        let h = psi.hbar;
        for fam in FAMILIES {
            let rows = sweep(fam, &grid(), &psi).map_err(|e| e.to_string())?;
            for r in &rows {
                let expected = 0.5 * h * (0.25 - (r.nu - 0.5).powi(2)).sqrt();
                worst = worst.max((r.heisenberg_product - expected).abs());
                ensure(r.heisenberg_product < 0.5 * h, || format!("{fam} nu = {}: product not below hbar/2", r.nu))?;
            }
            let best = rows.iter().max_by(|a, b| a.heisenberg_product.total_cmp(&b.heisenberg_product)).unwrap();
            ensure(best.nu == 0.5 && (best.heisenberg_product - 0.25 * h).abs() <= 1e-10, || {
                format!("{fam}: maximum {} at nu = {}", best.heisenberg_product, best.nu)
            })?;
        }
    }
    ensure(worst <= 1e-10, || format!("max deviation {worst:e}"))?;
    Ok(format!("max deviation {worst:.2e}; maximum hbar/4 at nu = 1/2"))
}

fn criterion_4() -> Outcome {
    let psi = MinUncertaintyParams::default();
    let mut worst_table: f64 = 0.0;
    for fam in FAMILIES {
        for nu in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let m = build_model(fam, nu, &psi).map_err(|e| e.to_string())?;
            let t = m.transform().unwrap();
            let (a, b) = table2(fam, nu);
            worst_table = worst_table.max(scaled_diff(t.a(), &a)).max(scaled_diff(t.b(), &b));
        }
    }
    ensure(worst_table <= 1e-12, || format!("closed-form table deviation {worst_table:e}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(0x7ab1e2);
    let mut worst_expm: f64 = 0.0;
    for _ in 0..1000 {
        let g = random_solvable_generator(&mut rng);
        let a = closed_form_propagator(&g, g.tau());
        let a_ref = numeric_expm(g.matrix(), g.tau());
        let b = PropagatedTransform::from_solvable(&g).map_err(|e| e.to_string())?;
        let b_ref = numeric_expm(&(-g.matrix().transpose()), g.tau());
        worst_expm = worst_expm.max(scaled_diff(&a, &a_ref)).max(scaled_diff(b.b(), &b_ref));
    }
    ensure(worst_expm <= 1e-9, || format!("closed form vs numeric deviation {worst_expm:e}"))?;
    Ok(format!("table deviation {worst_table:.2e}; 1000 random generators within {worst_expm:.2e}"))
}

fn criterion_5() -> Outcome {
    let psi = MinUncertaintyParams::default();
    let mut worst: f64 = 0.0;
    for fam in FAMILIES {
        for nu in grid() {
            let m = build_model(fam, nu, &psi).map_err(|e| e.to_string())?;
            let t = m.transform().unwrap();
            let (a, b) = (t.a(), t.b());
            let scale = a.amax().max(b.amax()).max(1.0);
            let checks = [
                (a * b.transpose() - Matrix3::identity()).amax() / scale,
                (a.determinant() - 1.0).abs(),
                (b.determinant() - 1.0).abs(),
                (t.a_ij(2, 2) - t.b_ij(3, 3)).abs() / scale,
                (t.a_ij(2, 3) - t.b_ij(3, 2)).abs() / scale,
                (t.a_ij(2, 1) * t.b_ij(3, 1) + 2.0 * t.a_ij(2, 2) * t.a_ij(2, 3)).abs() / scale,
                (commutator_coeff(&m.meter_q().probe_part(), &m.meter_p().probe_part()) + m.a21() * m.b31()).abs()
                    / scale,
            ];
            for (k, c) in checks.iter().enumerate() {
                ensure(*c <= 1e-10, || format!("{fam} nu = {nu}: identity {k} off by {c:e}"))?;
                worst = worst.max(*c);
            }
        }
    }
    Ok(format!("all seven identities within {worst:.2e}"))
}

fn close_joint(j: &JointGaussian, mean: &[f64], cov: &[&[f64]], tol: f64) -> Result<f64, String> {
    let mut worst: f64 = 0.0;
    for (i, m) in mean.iter().enumerate() {
        worst = worst.max((j.mean()[i] - m).abs());
        for (k, c) in cov[i].iter().enumerate() {
            worst = worst.max((j.cov()[(i, k)] - c).abs());
        }
    }
    ensure(worst <= tol, || format!("joint {:?} off by {worst:e}", j.labels()))?;
    Ok(worst)
}

fn criterion_6() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut worst_marg: f64 = 0.0;
    for psi in states() {
        let (s1, s2) = (psi.sigma1 * psi.sigma1, psi.sigma_p().powi(2));
        let (q1, p1) = (psi.q1, psi.p1);
        for fam in FAMILIES {
            for nu in grid() {
                let w = 1.0 - nu;
                let err = |e: qpmeas::Error| format!("{fam} nu = {nu}: {e}");
                let m = build_model(fam, nu, &psi).map_err(err)?;
                let meters = named_joint(&m, &psi, NamedJoint::Meters).map_err(err)?;
                worst = worst.max(close_joint(&meters, &[q1, p1], &[&[nu * s1, 0.0], &[0.0, w * s2]], 1e-10)?);
                let qp = named_joint(&m, &psi, NamedJoint::QPair).map_err(err)?;
                worst = worst.max(close_joint(&qp, &[q1, q1], &[&[s1, nu * s1], &[nu * s1, nu * s1]], 1e-10)?);
                let pp = named_joint(&m, &psi, NamedJoint::PPair).map_err(err)?;
                worst = worst.max(close_joint(&pp, &[p1, p1], &[&[s2, w * s2], &[w * s2, w * s2]], 1e-10)?);

                let eps_q = qrms_errors(&m, &psi).map_err(err)?.eps_q;
                for z in [q1 - 1.0, q1, q1 + 0.37] {
                    let c = conditional(&qp, &[1], &[z]).map_err(err)?;
                    let dev = (c.mean()[0] - z).abs().max((c.cov()[(0, 0)] - eps_q * eps_q).abs());
                    ensure(dev <= 1e-10, || format!("{fam} nu = {nu}: conditional off by {dev:e}"))?;
                    worst = worst.max(dev);
                }

                if fam.has_posterior_family() {
                    let t = m.transform().unwrap();
                    let state = m.initial_state(&psi).map_err(err)?;
                    let tq = joint_distribution(&[t.q_at(1), t.q_at(2), t.p_at(3)], &state).map_err(err)?;
                    let tp = joint_distribution(&[t.p_at(1), t.q_at(2), t.p_at(3)], &state).map_err(err)?;
                    worst = worst.max(close_joint(
                        &tq,
                        &[q1, q1, p1],
                        &[&[(2.0 - nu) / nu * s1, s1, 0.0], &[s1, nu * s1, 0.0], &[0.0, 0.0, w * s2]],
                        1e-10,
                    )?);
                    worst = worst.max(close_joint(
                        &tp,
                        &[p1, q1, p1],
                        &[&[(1.0 + nu) / w * s2, 0.0, s2], &[0.0, nu * s1, 0.0], &[s2, 0.0, w * s2]],
                        1e-10,
                    )?);
                    for triple in [&tq, &tp] {
                        let marg = triple.marginal(&[1, 2]).map_err(err)?;
                        let d = (marg.mean() - meters.mean())
                            .amax()
                            .max((marg.cov() - meters.cov()).amax());
                        ensure(d <= 1e-12, || format!("{fam} nu = {nu}: marginal off by {d:e}"))?;
                        worst_marg = worst_marg.max(d);
                    }
                }
            }
        }
    }
    Ok(format!("closed forms within {worst:.2e}; marginals within {worst_marg:.2e}"))
}

fn criterion_7() -> Outcome {
    let mut worst: f64 = 0.0;
    for psi in states() {
        for fam in FAMILIES {
            for nu in grid() {
                let m = build_model(fam, nu, &psi).map_err(|e| e.to_string())?;
                let errs = qrms_errors(&m, &psi).map_err(|e| e.to_string())?;
                let gq = gauss_error(&named_joint(&m, &psi, NamedJoint::QPair).unwrap(), 0, 1).unwrap();
                let gp = gauss_error(&named_joint(&m, &psi, NamedJoint::PPair).unwrap(), 0, 1).unwrap();
                worst = worst.max((gq - errs.eps_q).abs()).max((gp - errs.eps_p).abs());
            }
        }
    }
    ensure(worst <= 1e-10, || format!("analytic Gauss error off by {worst:e}"))?;

    let start = Instant::now();
    let psi = MinUncertaintyParams::default();
    let m = build_model(ModelFamily::Y0, 0.5, &psi).unwrap();
    let errs = qrms_errors(&m, &psi).unwrap();
    let mut detail = Vec::new();
    for (which, exact, seed) in [(NamedJoint::QPair, errs.eps_q, 20_240_601), (NamedJoint::PPair, errs.eps_p, 20_240_602)] {
        let j = named_joint(&m, &psi, which).unwrap();
        let s = sample(&j, 1_000_000, seed).map_err(|e| e.to_string())?;
        let (est, se) = empirical_gauss_error(&s, 0, 1).unwrap();
        let z = (est - exact) / se;
        ensure(z.abs() <= 4.0, || format!("{which}: estimate {est} vs {exact}, {z:.2} standard errors"))?;
        detail.push(format!("{which} {z:+.2} SE"));
    }
    let t = within_time(start, Duration::from_secs(10))?;
    Ok(format!("analytic within {worst:.2e}; Monte Carlo {} in {t:?}", detail.join(", ")))
}

fn criterion_8() -> Outcome {
    let mut worst_cond: f64 = 0.0;
    let mut worst_prod: f64 = 0.0;
    let mut worst_mix: f64 = 0.0;
    for psi in states() {
        let h2 = 0.25 * psi.hbar * psi.hbar;
        for fam in [ModelFamily::Y0, ModelFamily::Z] {
            for nu in [0.3, 0.5, 0.7] {
                let err = |e: qpmeas::Error| format!("{fam} nu = {nu}: {e}");
                let report = posterior_consistency(fam, nu, &psi).map_err(err)?;
                ensure(report.checks.len() == 9, || "expected nine outcomes".into())?;
                worst_cond = worst_cond.max(report.max_deviation);

                let post = PosteriorFamily::new(nu, psi).map_err(err)?;
                for c in &report.checks {
                    let s = posterior_state(&post, c.y).map_err(err)?;
                    let prod = s.cov()[(0, 0)] * s.cov()[(1, 1)];
                    worst_prod = worst_prod.max(((prod - h2) / h2).abs());
                }

                let m = build_model(fam, nu, &psi).map_err(err)?;
                let t = m.transform().unwrap();
                let state = m.initial_state(&psi).map_err(err)?;
                let (mq, vq) = moments(&state, &t.q_at(1)).map_err(err)?;
                let (mp, vp) = moments(&state, &t.p_at(1)).map_err(err)?;
                let cqp = qpmeas::quadrature::covariance(&state, &t.q_at(1), &t.p_at(1)).map_err(err)?;
                let mix = region_mixture_moments(fam, nu, &psi, &OutcomeRegion::full_plane()).map_err(err)?;
                let sym = 0.5 * (cqp + qpmeas::quadrature::covariance(&state, &t.p_at(1), &t.q_at(1)).unwrap());
                for (a, b) in [
                    (mix.mean[0], mq),
                    (mix.mean[1], mp),
                    (mix.cov[0][0], vq),
                    (mix.cov[1][1], vp),
                    (mix.cov[0][1], sym),
                    (mix.probability, 1.0),
                ] {
                    worst_mix = worst_mix.max((a - b).abs());
                }

                // the mixing measure is the meter-outcome law
                let meters = named_joint(&m, &psi, NamedJoint::Meters).map_err(err)?;
                let v = [nu * psi.sigma1 * psi.sigma1, (1.0 - nu) * psi.sigma_p().powi(2)];
                let d = (meters.mean()[0] - psi.q1)
                    .abs()
                    .max((meters.mean()[1] - psi.p1).abs())
                    .max((meters.cov()[(0, 0)] - v[0]).abs())
                    .max((meters.cov()[(1, 1)] - v[1]).abs())
                    .max(meters.cov()[(0, 1)].abs());
                ensure(d <= 1e-10, || format!("{fam} nu = {nu}: meter law off mixing measure by {d:e}"))?;
            }
        }
    }
    ensure(worst_cond <= 1e-9, || format!("conditional vs posterior {worst_cond:e}"))?;
    ensure(worst_prod <= 1e-12, || format!("posterior uncertainty product off by {worst_prod:e}"))?;
    ensure(worst_mix <= 1e-6, || format!("full-plane mixture off by {worst_mix:e}"))?;
    Ok(format!(
        "conditionals within {worst_cond:.2e}; products within {worst_prod:.2e}; full-plane mixture within {worst_mix:.2e}"
    ))
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xa4);
    let mut min_margin = f64::INFINITY;
    for i in 0..100 {
        let hbar = [0.5, 1.0, 2.0][i % 3];
        let pure = rng.random_bool(0.5);
        let probe = random_probe(&mut rng, hbar, pure).map_err(|e| e.to_string())?;
        let psi = MinUncertaintyParams::new(
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(0.3..3.0),
            hbar,
        )
        .unwrap();
        let m = arthurs_kelly_model(probe).map_err(|e| e.to_string())?;
        let errs = qrms_errors(&m, &psi).map_err(|e| e.to_string())?;
        let margin = errs.eps_q * errs.eps_p - 0.5 * hbar;
        ensure(margin >= -1e-10, || format!("probe {i}: product below hbar/2 by {margin:e}"))?;
        min_margin = min_margin.min(margin);
        let report = check_theorem_conditions(&m, &psi).map_err(|e| e.to_string())?;
        ensure(!report.passes[2], || format!("probe {i}: condition (iii) reported as passing"))?;
    }
    Ok(format!("100 probes, min eps_q*eps_p - hbar/2 = {min_margin:.3e}; condition (iii) fails for all"))
}

fn criterion_10() -> Outcome {
    let start = Instant::now();
    let n = 10_000;
    let results = qpmeas::par::map_indexed(n, |i| -> Result<(f64, f64), String> {
        let mut rng = ChaCha8Rng::seed_from_u64(0xf022);
        rng.set_stream(i as u64);
        let hbar = rng.random_range(0.5..2.0);
        let psi = MinUncertaintyParams::new(
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(0.3..3.0),
            hbar,
        )
        .unwrap();
        let m = random_measurement(&mut rng, hbar).map_err(|e| format!("model {i}: {e}"))?;
        let errs = qrms_errors(&m, &psi).map_err(|e| format!("model {i}: {e}"))?;
        let scale = hbar * hbar;
        Ok((
            qpmeas::measurement::branciard_ozawa_residual(&errs, &psi) / scale,
            qpmeas::measurement::ozawa_inequality_residual(&errs, &psi) / hbar,
        ))
    });
    let mut min_bo = f64::INFINITY;
    let mut min_oz = f64::INFINITY;
    for r in results {
        let (bo, oz) = r?;
        min_bo = min_bo.min(bo);
        min_oz = min_oz.min(oz);
    }
    ensure(min_bo >= -1e-9, || format!("BO residual {min_bo:e}"))?;
    ensure(min_oz >= -1e-9, || format!("Ozawa residual {min_oz:e}"))?;
    let t = within_time(start, Duration::from_secs(30))?;
    Ok(format!("{n} models, min BO residual {min_bo:.3e}, min Ozawa residual {min_oz:.3e} in {t:?}"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("minimum trade-off error values", criterion_1),
        ("trade-off equality and hbar scaling", criterion_2),
        ("Heisenberg product violation", criterion_3),
        ("closed-form propagators", criterion_4),
        ("structural identities", criterion_5),
        ("distribution identities", criterion_6),
        ("Gauss error equality", criterion_7),
        ("posterior consistency", criterion_8),
        ("Arthurs-Kelly comparator", criterion_9),
        ("fuzzed trade-off inequalities", criterion_10),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", k + 1)
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
