//! Linear Heisenberg dynamics generated by the bilinear coupling.
//!
//! Positions evolve as `Q(t) = e^{tR} Q(0)` and momenta as
//! `P(t) = e^{-tR^T} P(0)`. For the solvable class the generator satisfies
//! `S^3 = -E S`, so the exponential collapses to `I + f(t) S + g(t) S^2`.

use nalgebra::{Matrix3, SMatrix};
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::quadrature::{LinearObservable, MODES};

/// `|E|` below this is treated as zero when selecting the closed-form branch.
pub const E_ZERO_THRESHOLD: f64 = 1e-14;

/// Relative tolerance on the solvable-class identities.
pub const GENERATOR_TOL: f64 = 1e-12;

/// Tolerance on `A B^T = I` and the unit determinants.
pub const CANONICAL_TOL: f64 = 1e-10;

/// Coupling constants `alpha_i, beta_i, gamma_i` and the overall scale `k`.
///
/// `k` only rescales time; every model here uses `k = 1`, and a nonunit
/// coupling is equivalent to running for `k * tau`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InteractionParams {
    pub alpha: [f64; 3],
    pub beta: [f64; 3],
    pub gamma: [f64; 3],
    pub k: f64,
}

impl Default for InteractionParams {
    fn default() -> Self {
        Self {
            alpha: [0.0; 3],
            beta: [0.0; 3],
            gamma: [0.0; 3],
            k: 1.0,
        }
    }
}

/// The generator
///
/// ```text
/// [ g1 - g3   b1       a3     ]
/// [ a1        g2 - g1  b2     ]
/// [ b3        a2       g3 - g2]
/// ```
///
/// which is traceless for every choice of couplings.
pub fn build_generator(params: &InteractionParams) -> Matrix3<f64> {
    let [a1, a2, a3] = params.alpha;
    let [b1, b2, b3] = params.beta;
    let [g1, g2, g3] = params.gamma;
    Matrix3::new(
        g1 - g3, b1, a3, //
        a1, g2 - g1, b2, //
        b3, a2, g3 - g2,
    )
}

/// A generator in the exactly solvable class together with its declared
/// constant `E` and measurement time.
///
/// The matrix has the shape `[[0, b1, a3], [a1, g2, 0], [b3, 0, -g2]]` with
/// `a1 b1 = a3 b3 = -(g2^2 + E) / 2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolvableGenerator {
    s: Matrix3<f64>,
    e: f64,
    gamma2: f64,
    tau: f64,
}

impl SolvableGenerator {
    /// Validates `params` against the solvable-class constraints and the
    /// declared `e`.
    pub fn new(params: &InteractionParams, e: f64, tau: f64) -> Result<Self> {
        if !(params.k > 0.0) {
            return Err(invalid("k", format!("coupling must be positive, got {}", params.k)));
        }
        let [_, a2, _] = params.alpha;
        let [_, b2, _] = params.beta;
        let [g1, _, g3] = params.gamma;
        if a2 != 0.0 || b2 != 0.0 || g1 != 0.0 || g3 != 0.0 {
            return Err(Error::GeneratorConstraint(format!(
                "alpha2, beta2, gamma1, gamma3 must vanish (got {a2}, {b2}, {g1}, {g3})"
            )));
        }
        let s = build_generator(params);
        Self::from_matrix(s, e, tau)
    }

    /// Builds the generator from its five free couplings; `E` is derived
    /// from `alpha1 * beta1`.
    pub fn from_couplings(alpha1: f64, beta1: f64, alpha3: f64, beta3: f64, gamma2: f64, tau: f64) -> Result<Self> {
        let e = -2.0 * alpha1 * beta1 - gamma2 * gamma2;
        let params = InteractionParams {
            alpha: [alpha1, 0.0, alpha3],
            beta: [beta1, 0.0, beta3],
            gamma: [0.0, gamma2, 0.0],
            k: 1.0,
        };
        Self::new(&params, e, tau)
    }

    /// Validates an explicit matrix of the solvable shape.
    pub fn from_matrix(s: Matrix3<f64>, e: f64, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(invalid("tau", format!("must be positive, got {tau}")));
        }
        if !e.is_finite() || s.iter().any(|x| !x.is_finite()) {
            return Err(invalid("generator", "entries must be finite"));
        }
        let gamma2 = s[(1, 1)];
        if s[(0, 0)] != 0.0 || s[(1, 2)] != 0.0 || s[(2, 1)] != 0.0 || s[(2, 2)] != -gamma2 {
            return Err(Error::GeneratorConstraint(format!(
                "matrix is not of the form [[0,b1,a3],[a1,g2,0],[b3,0,-g2]]: {s}"
            )));
        }
        let (a1, b1) = (s[(1, 0)], s[(0, 1)]);
        let (a3, b3) = (s[(0, 2)], s[(2, 0)]);
        let p1 = a1 * b1;
        let p3 = a3 * b3;
        let target = -(gamma2 * gamma2 + e) / 2.0;
        let scale = 1f64.max(p1.abs()).max(p3.abs()).max(target.abs());
        if (p1 - p3).abs() > GENERATOR_TOL * scale {
            return Err(Error::GeneratorConstraint(format!(
                "alpha1*beta1 = {p1} differs from alpha3*beta3 = {p3}"
            )));
        }
        if (p1 - target).abs() > GENERATOR_TOL * scale {
            return Err(Error::GeneratorConstraint(format!(
                "alpha1*beta1 = {p1} inconsistent with E = {e} (expected {target})"
            )));
        }
        let s2 = s * s;
        let residual = (s2 * s + e * s).amax();
        let cube_scale = 1f64.max((s2 * s).amax()).max((e * s).amax());
        if residual > GENERATOR_TOL * cube_scale {
            return Err(Error::GeneratorConstraint(format!(
                "S^3 + E S has residual {residual:e}"
            )));
        }
        Ok(Self { s, e, gamma2, tau })
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.s
    }

    pub fn e(&self) -> f64 {
        self.e
    }

    pub fn gamma2(&self) -> f64 {
        self.gamma2
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn alpha1(&self) -> f64 {
        self.s[(1, 0)]
    }

    pub fn alpha3(&self) -> f64 {
        self.s[(0, 2)]
    }

    pub fn beta1(&self) -> f64 {
        self.s[(0, 1)]
    }

    pub fn beta3(&self) -> f64 {
        self.s[(2, 0)]
    }

    /// Same generator run for a different time.
    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        Self::from_matrix(self.s, self.e, tau)
    }

    /// Coefficients `(f(t), g(t))` with `e^{tS} = I + f S + g S^2`.
    pub fn series_coefficients(&self, t: f64) -> (f64, f64) {
        series_coefficients(self.e, t)
    }
}

fn branch_e(e: f64) -> f64 {
    if e.abs() < E_ZERO_THRESHOLD {
        0.0
    } else {
        e
    }
}

/// `(f, g)` for the three sign cases of `E`.
pub fn series_coefficients(e: f64, t: f64) -> (f64, f64) {
    let e = branch_e(e);
    if e > 0.0 {
        let w = e.sqrt();
        let half = (0.5 * t * w).sin();
        // 1 - cos(x) = 2 sin^2(x/2)
        ((t * w).sin() / w, 2.0 * half * half / e)
    } else if e < 0.0 {
        let w = (-e).sqrt();
        let half = (0.5 * t * w).sinh();
        ((t * w).sinh() / w, 2.0 * half * half / (-e))
    } else {
        (t, 0.5 * t * t)
    }
}

/// `F(tau, gamma2, E) = f(tau) + gamma2 g(tau)`, the factor tying the
/// propagated entries to the couplings: `a21 = alpha1 F`, `b31 = -alpha3 F`.
pub fn time_factor(tau: f64, gamma2: f64, e: f64) -> f64 {
    let (f, g) = series_coefficients(e, tau);
    f + gamma2 * g
}

/// Closed-form `e^{tS}` for a solvable generator.
pub fn closed_form_propagator(gen: &SolvableGenerator, t: f64) -> Matrix3<f64> {
    let (f, g) = gen.series_coefficients(t);
    let s = gen.s;
    Matrix3::identity() + f * s + g * (s * s)
}

/// Degree of the truncated Taylor series used after scaling.
const TAYLOR_DEGREE: usize = 18;

/// `e^{tM}` by scaling and squaring with a truncated Taylor series.
///
/// The argument is scaled by `2^-s` until its 1-norm is at most 1/2, where
/// the degree-18 remainder is below `1e-22`; the result is squared back `s` times.
pub fn numeric_expm<const N: usize>(m: &SMatrix<f64, N, N>, t: f64) -> SMatrix<f64, N, N> {
    let x = m * t;
    let norm = one_norm(&x);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scaled = x / 2f64.powi(squarings);
    let mut result = SMatrix::<f64, N, N>::identity();
    let mut term = SMatrix::<f64, N, N>::identity();
    for k in 1..=TAYLOR_DEGREE {
        term = term * scaled / k as f64;
        result += term;
    }
    for _ in 0..squarings {
        result = result * result;
    }
    result
}

fn one_norm<const N: usize>(m: &SMatrix<f64, N, N>) -> f64 {
    m.column_iter().map(|c| c.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// The pair `A = e^{tau R}`, `B = e^{-tau R^T}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PropagatedTransform {
    a: Matrix3<f64>,
    b: Matrix3<f64>,
    tau: f64,
}

impl PropagatedTransform {
    /// Validates `A B^T = I` and `det A = det B = 1`.
    pub fn new(a: Matrix3<f64>, b: Matrix3<f64>, tau: f64) -> Result<Self> {
        let scale = 1f64.max(a.amax() * b.amax());
        let dev = (a * b.transpose() - Matrix3::identity()).amax();
        if dev > CANONICAL_TOL * scale {
            return Err(Error::NonCanonicalTransform(format!("|A B^T - I| = {dev:e}")));
        }
        for (name, m) in [("A", &a), ("B", &b)] {
            let det = m.determinant();
            let det_scale = 1f64.max(m.amax().powi(3));
            if (det - 1.0).abs() > CANONICAL_TOL * det_scale {
                return Err(Error::NonCanonicalTransform(format!("det {name} = {det}")));
            }
        }
        Ok(Self { a, b, tau })
    }

    /// Closed-form transform at the generator's own `tau`.
    pub fn from_solvable(gen: &SolvableGenerator) -> Result<Self> {
        let a = closed_form_propagator(gen, gen.tau);
        // e^{-tau S^T} = (e^{-tau S})^T, and -S lies in the same class with the same E.
        let b = closed_form_propagator(gen, -gen.tau).transpose();
        Self::new(a, b, gen.tau)
    }

    /// Transform for an arbitrary generator through the numeric exponential.
    pub fn from_generator(r: &Matrix3<f64>, tau: f64) -> Result<Self> {
        let a = numeric_expm(r, tau);
        let b = numeric_expm(&(-r.transpose()), tau);
        Self::new(a, b, tau)
    }

    pub fn identity() -> Self {
        Self {
            a: Matrix3::identity(),
            b: Matrix3::identity(),
            tau: 0.0,
        }
    }

    pub fn a(&self) -> &Matrix3<f64> {
        &self.a
    }

    pub fn b(&self) -> &Matrix3<f64> {
        &self.b
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// `a_{ij}` with 1-based indices.
    pub fn a_ij(&self, i: usize, j: usize) -> f64 {
        self.a[(i - 1, j - 1)]
    }

    /// `b_{ij}` with 1-based indices.
    pub fn b_ij(&self, i: usize, j: usize) -> f64 {
        self.b[(i - 1, j - 1)]
    }

    /// `Q_i(tau)` for 1-based `i`.
    pub fn q_at(&self, i: usize) -> LinearObservable {
        let mut out = LinearObservable::ZERO;
        for j in 0..MODES {
            out.coeff_q[j] = self.a[(i - 1, j)];
        }
        out
    }

    /// `P_i(tau)` for 1-based `i`.
    pub fn p_at(&self, i: usize) -> LinearObservable {
        let mut out = LinearObservable::ZERO;
        for j in 0..MODES {
            out.coeff_p[j] = self.b[(i - 1, j)];
        }
        out
    }
}

/// `[Q1(tau), Q2(tau), Q3(tau), P1(tau), P2(tau), P3(tau)]`.
pub fn heisenberg_observables(transform: &PropagatedTransform) -> [LinearObservable; 6] {
    [
        transform.q_at(1),
        transform.q_at(2),
        transform.q_at(3),
        transform.p_at(1),
        transform.p_at(2),
        transform.p_at(3),
    ]
}
