//! Measurement models: meter assignment, noise operators, q-rms errors,
//! error-trade-off bounds and the achievability conditions.
//!
//! The system position is read from the probe position `Q2(tau)` and the
//! system momentum from the probe momentum `P3(tau)`. The four minimum
//! trade-off families are built from their model constants by solving the
//! coupling equations, so the only hard-coded data per family is
//! `(tau, gamma2, E, kappa)`.

use std::f64::consts::{LN_2, PI};
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Matrix3};
use serde::Serialize;

use crate::dynamics::{time_factor, PropagatedTransform, SolvableGenerator};
use crate::error::{invalid, Error, Result};
use crate::par;
use crate::quadrature::{
    commutator_coeff, make_min_uncertainty_state, make_probe_state, moments, GaussianState, LinearObservable,
    MinUncertaintyParams,
};

/// Residual tolerance for the three achievability conditions.
pub const THEOREM_TOL: f64 = 1e-9;

/// Tolerance on the meter commutator.
pub const METER_COMMUTATOR_TOL: f64 = 1e-12;

/// Time factors with magnitude below this are treated as degenerate.
pub const TIME_FACTOR_MIN: f64 = 1e-14;

/// The four minimum trade-off families plus the Arthurs–Kelly comparator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum ModelFamily {
    X,
    Y2,
    Y0,
    Z,
    ArthursKelly,
}

impl ModelFamily {
    pub const MINIMUM_TRADE_OFF: [ModelFamily; 4] = [ModelFamily::X, ModelFamily::Y2, ModelFamily::Y0, ModelFamily::Z];

    /// `(tau, gamma2, E, kappa)` for the minimum trade-off families.
    pub fn constants(self) -> Option<FamilyConstants> {
        let c = |tau, gamma2, e, kappa| FamilyConstants {
            tau,
            gamma2,
            e,
            kappa,
        };
        match self {
            ModelFamily::X => Some(c(PI / 2.0, 1.0, 1.0, 2.0)),
            ModelFamily::Y2 => Some(c(1.0, 2.0, 0.0, 4.0)),
            ModelFamily::Y0 => Some(c(1.0, 0.0, 0.0, 1.0)),
            ModelFamily::Z => Some(c(LN_2, 1.0, -1.0, 2.0)),
            ModelFamily::ArthursKelly => None,
        }
    }

    /// Families with a known posterior-state family.
    pub fn has_posterior_family(self) -> bool {
        matches!(self, ModelFamily::Y0 | ModelFamily::Z)
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ModelFamily::X => "X",
            ModelFamily::Y2 => "Y2",
            ModelFamily::Y0 => "Y0",
            ModelFamily::Z => "Z",
            ModelFamily::ArthursKelly => "AK",
        };
        f.write_str(s)
    }
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "x" => Ok(ModelFamily::X),
            "y2" => Ok(ModelFamily::Y2),
            "y0" => Ok(ModelFamily::Y0),
            "z" => Ok(ModelFamily::Z),
            "ak" | "arthurs-kelly" | "arthurskelly" | "arthurs_kelly" => Ok(ModelFamily::ArthursKelly),
            other => Err(invalid("family", format!("unknown family `{other}` (expected X, Y2, Y0, Z or AK)"))),
        }
    }
}

/// Per-family model constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FamilyConstants {
    pub tau: f64,
    pub gamma2: f64,
    pub e: f64,
    pub kappa: f64,
}

/// How the meters were obtained.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Dynamics {
    Solvable(SolvableGenerator),
    General { generator: Matrix3<f64>, tau: f64 },
    /// Meter maps given directly (Arthurs–Kelly).
    MeterMaps,
}

/// A two-meter measuring process with probe state on modes 2 and 3.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearSimultaneousMeasurement {
    family: Option<ModelFamily>,
    dynamics: Dynamics,
    transform: Option<PropagatedTransform>,
    probe: GaussianState,
    meter_q: LinearObservable,
    meter_p: LinearObservable,
}

impl LinearSimultaneousMeasurement {
    pub fn from_solvable(gen: SolvableGenerator, probe: GaussianState) -> Result<Self> {
        let transform = PropagatedTransform::from_solvable(&gen)?;
        Self::assemble(None, Dynamics::Solvable(gen), Some(transform), probe)
    }

    pub fn from_generator(generator: Matrix3<f64>, tau: f64, probe: GaussianState) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(invalid("tau", format!("must be positive, got {tau}")));
        }
        let transform = PropagatedTransform::from_generator(&generator, tau)?;
        Self::assemble(None, Dynamics::General { generator, tau }, Some(transform), probe)
    }

    /// A measurement specified by its evolved meters; `meter_q` may not
    /// contain `P1` and `meter_p` may not contain `Q1`.
    pub fn from_meter_maps(meter_q: LinearObservable, meter_p: LinearObservable, probe: GaussianState) -> Result<Self> {
        if meter_q.coeff_p[0] != 0.0 || meter_p.coeff_q[0] != 0.0 {
            return Err(invalid(
                "meters",
                "the position meter may not involve P1 and the momentum meter may not involve Q1",
            ));
        }
        check_probe(&probe)?;
        check_meters(&meter_q, &meter_p)?;
        Ok(Self {
            family: None,
            dynamics: Dynamics::MeterMaps,
            transform: None,
            probe,
            meter_q,
            meter_p,
        })
    }

    fn assemble(
        family: Option<ModelFamily>,
        dynamics: Dynamics,
        transform: Option<PropagatedTransform>,
        probe: GaussianState,
    ) -> Result<Self> {
        check_probe(&probe)?;
        let t = transform.expect("dynamic models carry a transform");
        let meter_q = t.q_at(2);
        let meter_p = t.p_at(3);
        check_meters(&meter_q, &meter_p)?;
        Ok(Self {
            family,
            dynamics,
            transform,
            probe,
            meter_q,
            meter_p,
        })
    }

    fn with_family(mut self, family: ModelFamily) -> Self {
        self.family = Some(family);
        self
    }

    /// Same dynamics with a different probe state.
    pub fn with_probe(&self, probe: GaussianState) -> Result<Self> {
        check_probe(&probe)?;
        Ok(Self {
            probe,
            ..self.clone()
        })
    }

    pub fn family(&self) -> Option<ModelFamily> {
        self.family
    }

    pub fn dynamics(&self) -> &Dynamics {
        &self.dynamics
    }

    pub fn transform(&self) -> Option<&PropagatedTransform> {
        self.transform.as_ref()
    }

    pub fn probe(&self) -> &GaussianState {
        &self.probe
    }

    /// `Q2(tau)`.
    pub fn meter_q(&self) -> &LinearObservable {
        &self.meter_q
    }

    /// `P3(tau)`.
    pub fn meter_p(&self) -> &LinearObservable {
        &self.meter_p
    }

    pub fn tau(&self) -> Option<f64> {
        self.transform.map(|t| t.tau())
    }

    /// `psi ⊗ xi` on modes 1..3.
    pub fn initial_state(&self, psi: &MinUncertaintyParams) -> Result<GaussianState> {
        if (psi.hbar - self.probe.hbar()).abs() > 1e-15 * psi.hbar.max(self.probe.hbar()) {
            return Err(invalid("hbar", "system and probe must share hbar"));
        }
        make_min_uncertainty_state(psi)?.tensor(&self.probe)
    }

    /// Coefficient of `Q1` in the position meter (`a21` for dynamic models).
    pub fn a21(&self) -> f64 {
        self.meter_q.coeff_q[0]
    }

    /// Coefficient of `P1` in the momentum meter (`b31` for dynamic models).
    pub fn b31(&self) -> f64 {
        self.meter_p.coeff_p[0]
    }
}

fn check_probe(probe: &GaussianState) -> Result<()> {
    if probe.modes() != [2, 3] {
        return Err(invalid("probe", format!("must live on modes [2, 3], got {:?}", probe.modes())));
    }
    Ok(())
}

fn check_meters(meter_q: &LinearObservable, meter_p: &LinearObservable) -> Result<()> {
    let c = commutator_coeff(meter_q, meter_p);
    let scale = meter_q.coefficients().iter().chain(meter_p.coefficients().iter()).fold(1f64, |m, x| m.max(x.abs()));
    if c.abs() > METER_COMMUTATOR_TOL * scale * scale {
        return Err(Error::IncompatibleMeters { coefficient: c });
    }
    Ok(())
}

/// Noise operators `N_q = Q2(tau) - Q1` and `N_p = P3(tau) - P1`.
pub fn noise_operators(m: &LinearSimultaneousMeasurement) -> (LinearObservable, LinearObservable) {
    (
        *m.meter_q() - LinearObservable::q(1),
        *m.meter_p() - LinearObservable::p(1),
    )
}

/// Position and momentum q-rms errors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ErrorPair {
    pub eps_q: f64,
    pub eps_p: f64,
}

impl ErrorPair {
    pub fn new(eps_q: f64, eps_p: f64) -> Result<Self> {
        if !(eps_q >= 0.0 && eps_q.is_finite() && eps_p >= 0.0 && eps_p.is_finite()) {
            return Err(invalid("errors", format!("must be finite and nonnegative, got ({eps_q}, {eps_p})")));
        }
        Ok(Self { eps_q, eps_p })
    }
}

/// q-rms errors as square roots of `<N^2>` in `psi ⊗ xi`.
pub fn qrms_errors_from_noise(m: &LinearSimultaneousMeasurement, psi: &MinUncertaintyParams) -> Result<ErrorPair> {
    let state = m.initial_state(psi)?;
    let (nq, np) = noise_operators(m);
    let eq2 = state.second_moment(&nq)?;
    let ep2 = state.second_moment(&np)?;
    ErrorPair::new(eq2.max(0.0).sqrt(), ep2.max(0.0).sqrt())
}

/// q-rms errors from the explicit decomposition into a system part, the
/// probe-combination variance and the squared mean offset.
pub fn qrms_errors_from_formula(m: &LinearSimultaneousMeasurement, psi: &MinUncertaintyParams) -> Result<ErrorPair> {
    psi.validate()?;
    let probe = m.probe();
    let a21 = m.a21();
    let b31 = m.b31();
    let (probe_q_mean, probe_q_var) = moments(probe, &m.meter_q().probe_part())?;
    let (probe_p_mean, probe_p_var) = moments(probe, &m.meter_p().probe_part())?;
    let sq = psi.sigma_q();
    let sp = psi.sigma_p();
    let mean_q = (a21 - 1.0) * psi.q1 + probe_q_mean;
    let mean_p = (b31 - 1.0) * psi.p1 + probe_p_mean;
    let eq2 = (a21 - 1.0).powi(2) * sq * sq + probe_q_var + mean_q * mean_q;
    let ep2 = (b31 - 1.0).powi(2) * sp * sp + probe_p_var + mean_p * mean_p;
    ErrorPair::new(eq2.max(0.0).sqrt(), ep2.max(0.0).sqrt())
}

/// q-rms errors `(eps(Q1), eps(P1))`. The explicit formula is reported; the
/// noise-operator route is evaluated alongside and must agree.
pub fn qrms_errors(m: &LinearSimultaneousMeasurement, psi: &MinUncertaintyParams) -> Result<ErrorPair> {
    let formula = qrms_errors_from_formula(m, psi)?;
    let noise = qrms_errors_from_noise(m, psi)?;
    debug_assert!(
        (formula.eps_q - noise.eps_q).abs() <= 1e-8 * noise.eps_q.max(psi.sigma_q())
            && (formula.eps_p - noise.eps_p).abs() <= 1e-8 * noise.eps_p.max(psi.sigma_p()),
        "error routes disagree: {formula:?} vs {noise:?}"
    );
    Ok(formula)
}

/// `eps(Q1)^2 sigma(P1)^2 + sigma(Q1)^2 eps(P1)^2`.
pub fn branciard_ozawa_lhs(errs: &ErrorPair, psi: &MinUncertaintyParams) -> f64 {
    let sq = psi.sigma_q();
    let sp = psi.sigma_p();
    errs.eps_q * errs.eps_q * sp * sp + sq * sq * errs.eps_p * errs.eps_p
}

/// Left side minus `hbar^2 / 4`; nonnegative for every measurement, zero
/// exactly at the minimum trade-off.
pub fn branciard_ozawa_residual(errs: &ErrorPair, psi: &MinUncertaintyParams) -> f64 {
    branciard_ozawa_lhs(errs, psi) - 0.25 * psi.hbar * psi.hbar
}

/// `eps(Q1) eps(P1)`.
pub fn heisenberg_product(errs: &ErrorPair) -> f64 {
    errs.eps_q * errs.eps_p
}

/// `eps eps + eps sigma + sigma eps - hbar/2`.
pub fn ozawa_inequality_residual(errs: &ErrorPair, psi: &MinUncertaintyParams) -> f64 {
    errs.eps_q * errs.eps_p + errs.eps_q * psi.sigma_p() + psi.sigma_q() * errs.eps_p - 0.5 * psi.hbar
}

/// `l(a21, b31) = ((a21-1)^2 + (b31-1)^2)/4 + |a21 b31|/2`; the bound is
/// `hbar^2 l`, minimal (1/4) on the segment `a21, b31 >= 0`, `a21 + b31 = 1`.
pub fn lower_bound_l(a21: f64, b31: f64) -> f64 {
    ((a21 - 1.0).powi(2) + (b31 - 1.0).powi(2)) / 4.0 + 0.5 * (a21 * b31).abs()
}

/// Condition (iii) data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConditionIii {
    pub a21: f64,
    pub b31: f64,
    pub sum_minus_one: f64,
}

/// Residuals of the three achievability conditions.
///
/// Condition (i) and (ii) residuals are normalized by `sigma(Q1)` for the
/// position entry and `sigma(P1)` for the momentum entry, so they are
/// dimensionless and compared directly against `tolerance`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TheoremReport {
    pub cond_i_residuals: [f64; 2],
    pub cond_ii_residuals: [f64; 2],
    pub cond_iii: ConditionIii,
    pub passes: [bool; 3],
    pub bo_residual: f64,
    pub tolerance: f64,
}

impl TheoremReport {
    pub fn all_pass(&self) -> bool {
        self.passes.iter().all(|&p| p)
    }
}

/// Evaluates conditions (i)–(iii) and the trade-off residual.
pub fn check_theorem_conditions(m: &LinearSimultaneousMeasurement, psi: &MinUncertaintyParams) -> Result<TheoremReport> {
    psi.validate()?;
    let tol = THEOREM_TOL;
    let probe = m.probe();
    let a21 = m.a21();
    let b31 = m.b31();
    let sq = psi.sigma_q();
    let sp = psi.sigma_p();
    let (probe_q_mean, probe_q_var) = moments(probe, &m.meter_q().probe_part())?;
    let (probe_p_mean, probe_p_var) = moments(probe, &m.meter_p().probe_part())?;

    let cond_i = [
        ((a21 - 1.0) * psi.q1 + probe_q_mean) / sq,
        ((b31 - 1.0) * psi.p1 + probe_p_mean) / sp,
    ];
    let root = (a21 * b31).abs().sqrt();
    let cond_ii = [
        (probe_q_var.max(0.0).sqrt() - root * sq) / sq,
        (probe_p_var.max(0.0).sqrt() - root * sp) / sp,
    ];
    let sum_minus_one = a21 + b31 - 1.0;
    let passes = [
        cond_i.iter().all(|r| r.abs() <= tol),
        cond_ii.iter().all(|r| r.abs() <= tol),
        a21 > tol && b31 > tol && sum_minus_one.abs() <= tol,
    ];
    let errs = qrms_errors(m, psi)?;
    Ok(TheoremReport {
        cond_i_residuals: cond_i,
        cond_ii_residuals: cond_ii,
        cond_iii: ConditionIii {
            a21,
            b31,
            sum_minus_one,
        },
        passes,
        bo_residual: branciard_ozawa_residual(&errs, psi),
        tolerance: tol,
    })
}

/// Couplings `(alpha1, alpha3)` giving `a21 = nu` and `b31 = 1 - nu`:
/// `alpha1 = nu / F`, `alpha3 = -(1 - nu) / F` with `F` the time factor.
pub fn solve_couplings(nu: f64, tau: f64, gamma2: f64, e: f64) -> Result<(f64, f64)> {
    check_nu(nu)?;
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(invalid("tau", format!("must be positive, got {tau}")));
    }
    let factor = time_factor(tau, gamma2, e);
    if !factor.is_finite() || factor.abs() < TIME_FACTOR_MIN {
        return Err(Error::DegenerateTimeFactor { factor });
    }
    Ok((nu / factor, -(1.0 - nu) / factor))
}

/// Completes the solved couplings into a solvable generator:
/// `beta1 = -(gamma2^2 + E) / (2 alpha1)`, `beta3 = -(gamma2^2 + E) / (2 alpha3)`.
pub fn solvable_for(nu: f64, tau: f64, gamma2: f64, e: f64) -> Result<SolvableGenerator> {
    let (alpha1, alpha3) = solve_couplings(nu, tau, gamma2, e)?;
    let c = -(gamma2 * gamma2 + e) / 2.0;
    let beta1 = c / alpha1 + 0.0;
    let beta3 = c / alpha3 + 0.0;
    let params = crate::dynamics::InteractionParams {
        alpha: [alpha1, 0.0, alpha3],
        beta: [beta1, 0.0, beta3],
        gamma: [0.0, gamma2, 0.0],
        k: 1.0,
    };
    SolvableGenerator::new(&params, e, tau)
}

/// One of the four minimum trade-off models at `nu`, with probe `xi_{nu, kappa}`.
pub fn build_model(family: ModelFamily, nu: f64, psi: &MinUncertaintyParams) -> Result<LinearSimultaneousMeasurement> {
    check_nu(nu)?;
    let c = family
        .constants()
        .ok_or_else(|| Error::UnsupportedFamily(format!("{family} (use arthurs_kelly_model)")))?;
    let gen = solvable_for(nu, c.tau, c.gamma2, c.e)?;
    let probe = make_probe_state(nu, c.kappa, psi)?;
    let m = LinearSimultaneousMeasurement::from_solvable(gen, probe)?.with_family(family);
    debug_assert!({
        let t = m.transform().unwrap();
        (t.a_ij(2, 2) - c.kappa).abs() <= 1e-12 * c.kappa.abs()
    });
    Ok(m)
}

/// The solvable model at `nu` using the probe `xi_{a21, a22}` read off the
/// propagated transform, for an arbitrary solvable `(tau, gamma2, E)`.
pub fn minimum_trade_off_model(
    nu: f64,
    tau: f64,
    gamma2: f64,
    e: f64,
    psi: &MinUncertaintyParams,
) -> Result<LinearSimultaneousMeasurement> {
    let gen = solvable_for(nu, tau, gamma2, e)?;
    let t = PropagatedTransform::from_solvable(&gen)?;
    let probe = make_probe_state(t.a_ij(2, 1), t.a_ij(2, 2), psi)?;
    LinearSimultaneousMeasurement::from_solvable(gen, probe)
}

/// Arthurs–Kelly evolved meters `Q1 + Q2 + P3/2` and `P1 - P2/2 + Q3`.
pub fn arthurs_kelly_meters() -> (LinearObservable, LinearObservable) {
    use LinearObservable as L;
    (
        L::q(1) + L::q(2) + 0.5 * L::p(3),
        L::p(1) + (-0.5) * L::p(2) + L::q(3),
    )
}

pub fn arthurs_kelly_model(probe: GaussianState) -> Result<LinearSimultaneousMeasurement> {
    let (mq, mp) = arthurs_kelly_meters();
    Ok(LinearSimultaneousMeasurement::from_meter_maps(mq, mp, probe)?.with_family(ModelFamily::ArthursKelly))
}

/// Zero-mean probe with every quadrature variance `hbar / 2`.
pub fn arthurs_kelly_symmetric_probe(hbar: f64) -> Result<GaussianState> {
    GaussianState::new(
        vec![2, 3],
        DVector::zeros(4),
        DMatrix::from_diagonal_element(4, 4, 0.5 * hbar),
        hbar,
    )
}

/// Arthurs–Kelly errors; the noise operators carry no mode-1 terms, so only
/// the probe enters.
pub fn arthurs_kelly_errors(probe: &GaussianState) -> Result<ErrorPair> {
    check_probe(probe)?;
    let (mq, mp) = arthurs_kelly_meters();
    let nq = mq - LinearObservable::q(1);
    let np = mp - LinearObservable::p(1);
    ErrorPair::new(
        probe.second_moment(&nq)?.max(0.0).sqrt(),
        probe.second_moment(&np)?.max(0.0).sqrt(),
    )
}

pub(crate) fn check_nu(nu: f64) -> Result<()> {
    if !(nu > 0.0 && nu < 1.0) {
        return Err(invalid("nu", format!("must lie in the open interval (0, 1), got {nu}")));
    }
    Ok(())
}

/// One row of an error sweep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub nu: f64,
    pub eps_q: f64,
    pub eps_p: f64,
    pub bo_lhs: f64,
    pub bo_residual: f64,
    pub heisenberg_product: f64,
    pub ozawa_residual: f64,
}

impl SweepRow {
    pub fn from_errors(nu: f64, errs: &ErrorPair, psi: &MinUncertaintyParams) -> Self {
        Self {
            nu,
            eps_q: errs.eps_q,
            eps_p: errs.eps_p,
            bo_lhs: branciard_ozawa_lhs(errs, psi),
            bo_residual: branciard_ozawa_residual(errs, psi),
            heisenberg_product: heisenberg_product(errs),
            ozawa_residual: ozawa_inequality_residual(errs, psi),
        }
    }
}

/// Error sweep over `nus`, evaluated in parallel and returned in grid order.
/// The Arthurs–Kelly family uses the symmetric probe at every grid point.
pub fn sweep(family: ModelFamily, nus: &[f64], psi: &MinUncertaintyParams) -> Result<Vec<SweepRow>> {
    par::map_slice(nus, |&nu| sweep_point(family, nu, psi)).into_iter().collect()
}

/// Sequential counterpart of [`sweep`].
pub fn sweep_sequential(family: ModelFamily, nus: &[f64], psi: &MinUncertaintyParams) -> Result<Vec<SweepRow>> {
    nus.iter().map(|&nu| sweep_point(family, nu, psi)).collect()
}

fn sweep_point(family: ModelFamily, nu: f64, psi: &MinUncertaintyParams) -> Result<SweepRow> {
    check_nu(nu)?;
    let errs = match family {
        ModelFamily::ArthursKelly => arthurs_kelly_errors(&arthurs_kelly_symmetric_probe(psi.hbar)?)?,
        _ => qrms_errors(&build_model(family, nu, psi)?, psi)?,
    };
    Ok(SweepRow::from_errors(nu, &errs, psi))
}

/// `nu = k / (n + 1)` for `k = 1..=n`.
pub fn uniform_nu_grid(n: usize) -> Vec<f64> {
    (1..=n).map(|k| k as f64 / (n + 1) as f64).collect()
}
