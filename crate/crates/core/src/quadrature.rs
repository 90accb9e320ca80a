//! Phase-space foundation: linear observables over the six quadratures
//! `(Q1, Q2, Q3, P1, P2, P3)` and Gaussian states described by their first
//! two moments.
//!
//! Mode 1 is the measured system, modes 2 and 3 form the probe. Every
//! operator that appears in the linear models is an affine combination of
//! the quadratures, so the canonical commutation relations reduce to a
//! symplectic form on coefficient vectors and Gaussian expectations reduce
//! to linear and quadratic forms on the mean and covariance.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{invalid, Error, Result};

/// Number of modes (system + two probe modes).
pub const MODES: usize = 3;

/// Relative tolerance used by the positive-semidefiniteness test.
pub const PSD_RELATIVE_TOL: f64 = 1e-10;

/// A real affine combination of the quadratures plus a scalar offset.
///
/// Coefficient index `j` refers to mode `j + 1`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct LinearObservable {
    pub coeff_q: [f64; MODES],
    pub coeff_p: [f64; MODES],
    pub offset: f64,
}

impl LinearObservable {
    pub const ZERO: LinearObservable = LinearObservable {
        coeff_q: [0.0; MODES],
        coeff_p: [0.0; MODES],
        offset: 0.0,
    };

    pub fn new(coeff_q: [f64; MODES], coeff_p: [f64; MODES], offset: f64) -> Self {
        Self {
            coeff_q,
            coeff_p,
            offset,
        }
    }

    /// Position quadrature of `mode` (1-based).
    pub fn q(mode: usize) -> Self {
        assert!((1..=MODES).contains(&mode), "mode {mode} out of range");
        let mut out = Self::ZERO;
        out.coeff_q[mode - 1] = 1.0;
        out
    }

    /// Momentum quadrature of `mode` (1-based).
    pub fn p(mode: usize) -> Self {
        assert!((1..=MODES).contains(&mode), "mode {mode} out of range");
        let mut out = Self::ZERO;
        out.coeff_p[mode - 1] = 1.0;
        out
    }

    pub fn constant(c: f64) -> Self {
        Self {
            offset: c,
            ..Self::ZERO
        }
    }

    /// Coefficients in the global ordering `(Q1, Q2, Q3, P1, P2, P3)`.
    pub fn coefficients(&self) -> [f64; 2 * MODES] {
        let mut out = [0.0; 2 * MODES];
        out[..MODES].copy_from_slice(&self.coeff_q);
        out[MODES..].copy_from_slice(&self.coeff_p);
        out
    }

    /// 1-based modes with a nonzero coefficient.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        (0..MODES)
            .filter(|&j| self.coeff_q[j] != 0.0 || self.coeff_p[j] != 0.0)
            .map(|j| j + 1)
    }

    /// The observable with all mode-1 coefficients removed.
    pub fn probe_part(&self) -> Self {
        let mut out = *self;
        out.coeff_q[0] = 0.0;
        out.coeff_p[0] = 0.0;
        out
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::ZERO
    }

    /// Largest absolute coefficient difference, offsets included.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let a = self.coefficients();
        let b = other.coefficients();
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y).abs())
            .fold((self.offset - other.offset).abs(), f64::max)
    }
}

impl Add for LinearObservable {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let mut out = self;
        for j in 0..MODES {
            out.coeff_q[j] += rhs.coeff_q[j];
            out.coeff_p[j] += rhs.coeff_p[j];
        }
        out.offset += rhs.offset;
        out
    }
}

impl Sub for LinearObservable {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl Neg for LinearObservable {
    type Output = Self;
    fn neg(self) -> Self {
        -1.0 * self
    }
}

impl Mul<LinearObservable> for f64 {
    type Output = LinearObservable;
    fn mul(self, rhs: LinearObservable) -> LinearObservable {
        LinearObservable {
            coeff_q: rhs.coeff_q.map(|c| self * c),
            coeff_p: rhs.coeff_p.map(|c| self * c),
            offset: self * rhs.offset,
        }
    }
}

impl fmt::Display for LinearObservable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut terms = Vec::new();
        for j in 0..MODES {
            if self.coeff_q[j] != 0.0 {
                terms.push(format!("{}*Q{}", self.coeff_q[j], j + 1));
            }
        }
        for j in 0..MODES {
            if self.coeff_p[j] != 0.0 {
                terms.push(format!("{}*P{}", self.coeff_p[j], j + 1));
            }
        }
        if self.offset != 0.0 || terms.is_empty() {
            terms.push(format!("{}", self.offset));
        }
        write!(f, "{}", terms.join(" + "))
    }
}

/// Returns `c` such that `[f, g] = i * hbar * c * 1`.
///
/// Offsets commute with everything and are ignored.
pub fn commutator_coeff(f: &LinearObservable, g: &LinearObservable) -> f64 {
    (0..MODES)
        .map(|j| f.coeff_q[j] * g.coeff_p[j] - f.coeff_p[j] * g.coeff_q[j])
        .sum()
}

/// Parameters `(q1, p1, sigma1, hbar)` of the system's minimum uncertainty state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MinUncertaintyParams {
    pub q1: f64,
    pub p1: f64,
    pub sigma1: f64,
    pub hbar: f64,
}

impl Default for MinUncertaintyParams {
    fn default() -> Self {
        Self {
            q1: 0.0,
            p1: 0.0,
            sigma1: 1.0,
            hbar: 1.0,
        }
    }
}

impl MinUncertaintyParams {
    pub fn new(q1: f64, p1: f64, sigma1: f64, hbar: f64) -> Result<Self> {
        let params = Self {
            q1,
            p1,
            sigma1,
            hbar,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma1 > 0.0 && self.sigma1.is_finite()) {
            return Err(invalid("sigma1", format!("must be positive, got {}", self.sigma1)));
        }
        if !(self.hbar > 0.0 && self.hbar.is_finite()) {
            return Err(invalid("hbar", format!("must be positive, got {}", self.hbar)));
        }
        if !self.q1.is_finite() || !self.p1.is_finite() {
            return Err(invalid("q1/p1", "must be finite"));
        }
        Ok(())
    }

    /// Position standard deviation `sigma1`.
    pub fn sigma_q(&self) -> f64 {
        self.sigma1
    }

    /// Momentum standard deviation `hbar / (2 sigma1)`.
    pub fn sigma_p(&self) -> f64 {
        self.hbar / (2.0 * self.sigma1)
    }
}

/// A Gaussian state on an ordered subset of the modes.
///
/// Mean and covariance are laid out as all position quadratures of the
/// carried modes followed by all momentum quadratures, e.g. `(Q2, Q3, P2, P3)`
/// for a probe state.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianState {
    modes: Vec<usize>,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    hbar: f64,
}

impl GaussianState {
    pub fn new(modes: Vec<usize>, mean: DVector<f64>, cov: DMatrix<f64>, hbar: f64) -> Result<Self> {
        if modes.is_empty() || modes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("modes", format!("must be strictly increasing and nonempty, got {modes:?}")));
        }
        if modes.iter().any(|m| !(1..=MODES).contains(m)) {
            return Err(invalid("modes", format!("must lie in 1..={MODES}, got {modes:?}")));
        }
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(invalid("hbar", format!("must be positive, got {hbar}")));
        }
        let dim = 2 * modes.len();
        if mean.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: mean.len(),
            });
        }
        if cov.nrows() != dim || cov.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: cov.nrows().max(cov.ncols()),
            });
        }
        check_covariance(&cov)?;
        Ok(Self {
            modes,
            mean,
            cov,
            hbar,
        })
    }

    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// Product state on the union of the modes; the two mode sets must be disjoint.
    pub fn tensor(&self, other: &GaussianState) -> Result<GaussianState> {
        if (self.hbar - other.hbar).abs() > 1e-15 * self.hbar.max(other.hbar) {
            return Err(invalid("hbar", "tensor factors must share hbar"));
        }
        if let Some(m) = self.modes.iter().find(|m| other.modes.contains(m)) {
            return Err(invalid("modes", format!("mode {m} appears in both factors")));
        }
        let mut modes: Vec<usize> = self.modes.iter().chain(other.modes.iter()).copied().collect();
        modes.sort_unstable();
        let n = modes.len();
        let mut mean = DVector::zeros(2 * n);
        let mut cov = DMatrix::zeros(2 * n, 2 * n);
        for factor in [self, other] {
            let k = factor.modes.len();
            let slot: Vec<usize> = (0..2 * k)
                .map(|i| {
                    let mode = factor.modes[i % k];
                    let pos = modes.iter().position(|&m| m == mode).unwrap();
                    if i < k {
                        pos
                    } else {
                        n + pos
                    }
                })
                .collect();
            for i in 0..2 * k {
                mean[slot[i]] = factor.mean[i];
                for j in 0..2 * k {
                    cov[(slot[i], slot[j])] = factor.cov[(i, j)];
                }
            }
        }
        GaussianState::new(modes, mean, cov, self.hbar)
    }

    /// Coefficient vector of `f` in this state's quadrature ordering.
    pub fn coefficient_vector(&self, f: &LinearObservable) -> Result<DVector<f64>> {
        if let Some(mode) = f.support().find(|m| !self.modes.contains(m)) {
            return Err(Error::ModeMismatch {
                mode,
                modes: self.modes.clone(),
            });
        }
        let n = self.modes.len();
        let mut v = DVector::zeros(2 * n);
        for (i, &mode) in self.modes.iter().enumerate() {
            v[i] = f.coeff_q[mode - 1];
            v[n + i] = f.coeff_p[mode - 1];
        }
        Ok(v)
    }

    /// Symmetrized covariance `<(f - <f>)(g - <g>) + (g - <g>)(f - <f>)> / 2`.
    pub fn covariance(&self, f: &LinearObservable, g: &LinearObservable) -> Result<f64> {
        let a = self.coefficient_vector(f)?;
        let b = self.coefficient_vector(g)?;
        Ok((a.transpose() * &self.cov * b)[(0, 0)])
    }

    pub fn expectation(&self, f: &LinearObservable) -> Result<f64> {
        let a = self.coefficient_vector(f)?;
        Ok(a.dot(&self.mean) + f.offset)
    }

    /// Second moment `<f^2>`.
    pub fn second_moment(&self, f: &LinearObservable) -> Result<f64> {
        let (mean, var) = moments(self, f)?;
        Ok(var + mean * mean)
    }

    /// Whether `cov + i (hbar/2) Omega` is positive semidefinite, i.e. the
    /// moments belong to a physical (possibly mixed) state.
    pub fn is_physical(&self) -> bool {
        let n = self.modes.len();
        let dim = 2 * n;
        let h = 0.5 * self.hbar;
        // Real embedding [[V, -hW], [hW, V]] of the Hermitian matrix V + i h W,
        // where W is the symplectic form in (Q..., P...) ordering.
        let mut w = DMatrix::zeros(dim, dim);
        for i in 0..n {
            w[(i, n + i)] = 1.0;
            w[(n + i, i)] = -1.0;
        }
        let mut big = DMatrix::zeros(2 * dim, 2 * dim);
        big.view_mut((0, 0), (dim, dim)).copy_from(&self.cov);
        big.view_mut((dim, dim), (dim, dim)).copy_from(&self.cov);
        big.view_mut((0, dim), (dim, dim)).copy_from(&(-h * &w));
        big.view_mut((dim, 0), (dim, dim)).copy_from(&(h * &w));
        let eig = SymmetricEigen::new(big);
        let max = eig.eigenvalues.amax().max(h * h);
        eig.eigenvalues.min() >= -PSD_RELATIVE_TOL * max
    }
}

/// Mean and variance of `f` in `state`.
pub fn moments(state: &GaussianState, f: &LinearObservable) -> Result<(f64, f64)> {
    let a = state.coefficient_vector(f)?;
    let mean = a.dot(&state.mean) + f.offset;
    let var = (a.transpose() * &state.cov * &a)[(0, 0)];
    Ok((mean, var))
}

/// Companion to [`moments`]: the symmetric bilinear covariance form.
pub fn covariance(state: &GaussianState, f: &LinearObservable, g: &LinearObservable) -> Result<f64> {
    state.covariance(f, g)
}

/// The system state: mean `(q1, p1)`, covariance `diag(sigma1^2, (hbar/(2 sigma1))^2)`.
pub fn make_min_uncertainty_state(params: &MinUncertaintyParams) -> Result<GaussianState> {
    params.validate()?;
    let sp = params.sigma_p();
    GaussianState::new(
        vec![1],
        DVector::from_vec(vec![params.q1, params.p1]),
        DMatrix::from_diagonal(&DVector::from_vec(vec![params.sigma1 * params.sigma1, sp * sp])),
        params.hbar,
    )
}

/// The two-mode probe state on modes 2 and 3 tuned to `(nu, kappa)`.
///
/// Each probe mode is a minimum uncertainty product factor; position variances
/// are `nu(1-nu) sigma1^2 / (2 kappa^2)` and `2 kappa^2 sigma1^2 / (nu(1-nu))`,
/// and the means are `<Q2> = (1-nu) q1 / kappa`, `<P3> = nu p1 / kappa`, zero otherwise.
pub fn make_probe_state(nu: f64, kappa: f64, psi: &MinUncertaintyParams) -> Result<GaussianState> {
    psi.validate()?;
    if !(nu > 0.0 && nu < 1.0) {
        return Err(invalid("nu", format!("must lie in (0, 1), got {nu}")));
    }
    if kappa == 0.0 || !kappa.is_finite() {
        return Err(invalid("kappa", format!("must be finite and nonzero, got {kappa}")));
    }
    let s2 = psi.sigma1 * psi.sigma1;
    let nn = nu * (1.0 - nu);
    let k2 = kappa * kappa;
    let var_q2 = nn * s2 / (2.0 * k2);
    let var_q3 = 2.0 * k2 * s2 / nn;
    let h2 = 0.25 * psi.hbar * psi.hbar;
    let var_p2 = h2 / var_q2;
    let var_p3 = h2 / var_q3;
    // ordering (Q2, Q3, P2, P3)
    let mean = DVector::from_vec(vec![(1.0 - nu) * psi.q1 / kappa, 0.0, 0.0, nu * psi.p1 / kappa]);
    let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![var_q2, var_q3, var_p2, var_p3]));
    GaussianState::new(vec![2, 3], mean, cov, psi.hbar)
}

fn check_covariance(cov: &DMatrix<f64>) -> Result<()> {
    let scale = cov.amax().max(f64::MIN_POSITIVE);
    let asym = (cov - cov.transpose()).amax();
    if asym > 1e-12 * scale {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    if cov.iter().any(|x| !x.is_finite()) {
        return Err(invalid("cov", "entries must be finite"));
    }
    min_eigenvalue_check(cov).map(|_| ())
}

/// Symmetric eigendecomposition with the relative PSD test applied. Returns
/// the smallest eigenvalue.
pub(crate) fn min_eigenvalue_check(cov: &DMatrix<f64>) -> Result<f64> {
    let sym = 0.5 * (cov + cov.transpose());
    let eig = SymmetricEigen::new(sym);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if min < -PSD_RELATIVE_TOL * max.max(0.0) {
        return Err(Error::NotPositiveSemidefinite { min_eigenvalue: min });
    }
    Ok(min)
}
