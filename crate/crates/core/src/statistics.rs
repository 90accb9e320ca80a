//! Outcome statistics of commuting Heisenberg observables.
//!
//! Mutually commuting linear observables evaluated in a Gaussian state have
//! a Gaussian joint law whose characteristic function is
//! `exp(i <m, k> - <k, V k> / 2)`, so the joint distribution is fully
//! described by a mean vector and covariance matrix. On top of that this
//! module provides Schur-complement conditioning, Gauss' error, seeded
//! sampling, the posterior-state family of the `Y0` and `Z` models and the
//! post-measurement state conditioned on a rectangular outcome region.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, Complex, DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use statrs::function::erf::erfc;

use crate::error::{invalid, Error, Result};
use crate::measurement::{build_model, check_nu, LinearSimultaneousMeasurement, ModelFamily};
use crate::par;
use crate::quadrature::{commutator_coeff, GaussianState, LinearObservable, MinUncertaintyParams, PSD_RELATIVE_TOL};

/// Tolerance on pairwise commutators when forming a joint distribution.
pub const COMMUTATOR_TOL: f64 = 1e-12;

/// Eigenvalues in `[-CLIP_ABS_TOL, 0]` are clipped to zero before factoring.
pub const CLIP_ABS_TOL: f64 = 1e-12;

/// Rows per independently seeded sampling chunk.
pub const SAMPLE_CHUNK: usize = 8192;

/// Gaussian law of a list of commuting observables.
#[derive(Clone, Debug, PartialEq)]
pub struct JointGaussian {
    labels: Vec<String>,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl JointGaussian {
    pub fn new(labels: Vec<String>, mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = labels.len();
        if mean.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: mean.len(),
            });
        }
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: cov.nrows(),
            });
        }
        let scale = cov.amax().max(f64::MIN_POSITIVE);
        let asym = (&cov - cov.transpose()).amax();
        if asym > 1e-12 * scale {
            return Err(Error::NotSymmetric { asymmetry: asym });
        }
        crate::quadrature::min_eigenvalue_check(&cov)?;
        Ok(Self { labels, mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn with_labels<S: Into<String>>(mut self, labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: labels.len(),
            });
        }
        self.labels = labels;
        Ok(self)
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.dim() {
            return Err(Error::IndexOutOfRange {
                index: i,
                dim: self.dim(),
            });
        }
        Ok(())
    }

    /// Marginal law of the listed components, in the given order.
    pub fn marginal(&self, indices: &[usize]) -> Result<JointGaussian> {
        for &i in indices {
            self.check_index(i)?;
        }
        let mean = DVector::from_iterator(indices.len(), indices.iter().map(|&i| self.mean[i]));
        let cov = DMatrix::from_fn(indices.len(), indices.len(), |r, c| self.cov[(indices[r], indices[c])]);
        let labels = indices.iter().map(|&i| self.labels[i].clone()).collect();
        Ok(JointGaussian { labels, mean, cov })
    }

    /// `exp(i <m, k> - <k, V k> / 2)`.
    pub fn characteristic_function(&self, k: &[f64]) -> Result<Complex<f64>> {
        if k.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: k.len(),
            });
        }
        let k = DVector::from_column_slice(k);
        let phase = self.mean.dot(&k);
        let quad = (k.transpose() * &self.cov * &k)[(0, 0)];
        Ok(Complex::from_polar((-0.5 * quad).exp(), phase))
    }

    /// Log of the Lebesgue density; requires a nonsingular covariance.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let chol = Cholesky::new(self.cov.clone()).ok_or(Error::SingularConditioning)?;
        let diff = DVector::from_column_slice(x) - &self.mean;
        let sol = chol.solve(&diff);
        let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let d = self.dim() as f64;
        Ok(-0.5 * (d * (2.0 * std::f64::consts::PI).ln() + log_det + diff.dot(&sol)))
    }

    pub fn density(&self, x: &[f64]) -> Result<f64> {
        self.log_density(x).map(f64::exp)
    }
}

/// Joint law of mutually commuting observables in `state`.
pub fn joint_distribution(observables: &[LinearObservable], state: &GaussianState) -> Result<JointGaussian> {
    for i in 0..observables.len() {
        for j in (i + 1)..observables.len() {
            let c = commutator_coeff(&observables[i], &observables[j]);
            let scale = observables[i]
                .coefficients()
                .iter()
                .chain(observables[j].coefficients().iter())
                .fold(1f64, |m, x| m.max(x.abs()));
            if c.abs() > COMMUTATOR_TOL * scale * scale {
                return Err(Error::NonCommuting {
                    first: i,
                    second: j,
                    coefficient: c,
                });
            }
        }
    }
    let n = observables.len();
    let coeffs = observables
        .iter()
        .map(|f| state.coefficient_vector(f))
        .collect::<Result<Vec<_>>>()?;
    let mean = DVector::from_iterator(n, observables.iter().zip(&coeffs).map(|(f, a)| a.dot(state.mean()) + f.offset));
    let mut cov = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = (coeffs[i].transpose() * state.cov() * &coeffs[j])[(0, 0)];
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let labels = (1..=n).map(|i| format!("X{i}")).collect();
    JointGaussian::new(labels, mean, cov)
}

/// Law of the components not in `given`, conditioned on `given = values`.
pub fn conditional(joint: &JointGaussian, given: &[usize], values: &[f64]) -> Result<JointGaussian> {
    if given.len() != values.len() {
        return Err(Error::DimensionMismatch {
            expected: given.len(),
            got: values.len(),
        });
    }
    for (k, &i) in given.iter().enumerate() {
        joint.check_index(i)?;
        if given[..k].contains(&i) {
            return Err(invalid("given", format!("index {i} listed twice")));
        }
    }
    let rest: Vec<usize> = (0..joint.dim()).filter(|i| !given.contains(i)).collect();
    let pick = |rows: &[usize], cols: &[usize]| DMatrix::from_fn(rows.len(), cols.len(), |r, c| joint.cov[(rows[r], cols[c])]);
    let s_aa = pick(&rest, &rest);
    let s_ab = pick(&rest, given);
    let s_bb = pick(given, given);

    let eig = SymmetricEigen::new(s_bb.clone());
    let max = eig.eigenvalues.amax();
    if eig.eigenvalues.min() <= 1e-13 * max || max == 0.0 {
        return Err(Error::SingularConditioning);
    }
    let chol = Cholesky::new(s_bb).ok_or(Error::SingularConditioning)?;

    let diff = DVector::from_iterator(given.len(), given.iter().zip(values).map(|(&i, v)| v - joint.mean[i]));
    let mean_a = DVector::from_iterator(rest.len(), rest.iter().map(|&i| joint.mean[i]));
    let gain_t = chol.solve(&s_ab.transpose()); // S_bb^{-1} S_ba
    let mean = mean_a + gain_t.transpose() * diff;
    let mut cov = s_aa - &s_ab * gain_t;
    cov = 0.5 * (&cov + cov.transpose());
    let labels = rest.iter().map(|&i| joint.labels[i].clone()).collect();
    JointGaussian::new(labels, mean, cov)
}

/// Gauss' error `E[(X_i - X_j)^2]^{1/2} = (V_ii + V_jj - 2 V_ij + (m_i - m_j)^2)^{1/2}`.
pub fn gauss_error(joint: &JointGaussian, i: usize, j: usize) -> Result<f64> {
    joint.check_index(i)?;
    joint.check_index(j)?;
    let v = joint.cov[(i, i)] + joint.cov[(j, j)] - 2.0 * joint.cov[(i, j)];
    let d = joint.mean[i] - joint.mean[j];
    Ok((v + d * d).max(0.0).sqrt())
}

/// Row-major block of sampled outcome vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SampleMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }
}

/// Symmetric square root of a PSD covariance; small negative eigenvalues are clipped.
pub fn covariance_sqrt(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(0.5 * (cov + cov.transpose()));
    let max = eig.eigenvalues.max().max(0.0);
    let floor = CLIP_ABS_TOL.max(PSD_RELATIVE_TOL * max);
    let mut roots = eig.eigenvalues.clone();
    for v in roots.iter_mut() {
        if *v < -floor {
            return Err(Error::NotPositiveSemidefinite { min_eigenvalue: *v });
        }
        *v = v.max(0.0).sqrt();
    }
    let u = &eig.eigenvectors;
    Ok(u * DMatrix::from_diagonal(&roots) * u.transpose())
}

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

fn sample_chunk(joint: &JointGaussian, root: &DMatrix<f64>, seed: u64, chunk: usize, rows: usize) -> Vec<f64> {
    let d = joint.dim();
    let mut rng = chunk_rng(seed, chunk);
    let mut out = Vec::with_capacity(rows * d);
    let mut z = DVector::zeros(d);
    for _ in 0..rows {
        for v in z.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let x = &joint.mean + root * &z;
        out.extend(x.iter());
    }
    out
}

fn chunk_plan(n: usize) -> Vec<usize> {
    let full = n / SAMPLE_CHUNK;
    let mut sizes = vec![SAMPLE_CHUNK; full];
    if !n.is_multiple_of(SAMPLE_CHUNK) {
        sizes.push(n % SAMPLE_CHUNK);
    }
    sizes
}

/// `n` i.i.d. draws. Chunk `c` draws from its own ChaCha stream `c` under
/// the master `seed`, so the output does not depend on scheduling.
pub fn sample(joint: &JointGaussian, n: usize, seed: u64) -> Result<SampleMatrix> {
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    let root = covariance_sqrt(&joint.cov)?;
    let plan = chunk_plan(n);
    let chunks = par::map_indexed(plan.len(), |c| sample_chunk(joint, &root, seed, c, plan[c]));
    Ok(SampleMatrix {
        dim: joint.dim(),
        data: chunks.concat(),
    })
}

/// Single-threaded counterpart of [`sample`]; produces the same stream.
pub fn sample_sequential(joint: &JointGaussian, n: usize, seed: u64) -> Result<SampleMatrix> {
    if n == 0 {
        return Err(invalid("n", "must be at least 1"));
    }
    let root = covariance_sqrt(&joint.cov)?;
    let plan = chunk_plan(n);
    let chunks = par::map_indexed_sequential(plan.len(), |c| sample_chunk(joint, &root, seed, c, plan[c]));
    Ok(SampleMatrix {
        dim: joint.dim(),
        data: chunks.concat(),
    })
}

/// Empirical mean and (unbiased) covariance; the covariance is `None` for a single row.
pub fn empirical_moments(samples: &SampleMatrix) -> (DVector<f64>, Option<DMatrix<f64>>) {
    let d = samples.dim();
    let n = samples.len();
    let mut mean = DVector::zeros(d);
    for r in samples.rows() {
        for j in 0..d {
            mean[j] += r[j];
        }
    }
    mean /= n as f64;
    if n < 2 {
        return (mean, None);
    }
    let mut cov = DMatrix::zeros(d, d);
    for r in samples.rows() {
        for i in 0..d {
            let di = r[i] - mean[i];
            for j in 0..d {
                cov[(i, j)] += di * (r[j] - mean[j]);
            }
        }
    }
    cov /= (n - 1) as f64;
    (mean, Some(cov))
}

/// Monte Carlo Gauss error between columns `i` and `j` with its delta-method
/// standard error. `None` for fewer than two rows.
pub fn empirical_gauss_error(samples: &SampleMatrix, i: usize, j: usize) -> Option<(f64, f64)> {
    let n = samples.len();
    if n < 2 {
        return None;
    }
    let sq: Vec<f64> = samples.rows().map(|r| (r[i] - r[j]).powi(2)).collect();
    let m = sq.iter().sum::<f64>() / n as f64;
    let var = sq.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    let est = m.sqrt();
    // d sqrt(m) = dm / (2 sqrt(m))
    let se = (var / n as f64).sqrt() / (2.0 * est);
    Some((est, se))
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
    }
}

/// Kolmogorov–Smirnov statistic `sup |F_n - F|` of `values` against `cdf`.
pub fn ks_statistic(values: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len() as f64;
    v.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let f = cdf(x);
        d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs())
    })
}

/// Asymptotic critical value of `sqrt(n) D_n` at significance `alpha`.
pub fn ks_critical_value(alpha: f64) -> f64 {
    (-0.5 * (alpha / 2.0).ln()).sqrt()
}

/// The three joints exported for sampling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NamedJoint {
    /// `(Q2(tau), P3(tau))`.
    Meters,
    /// `(Q1(0), Q2(tau))`.
    QPair,
    /// `(P1(0), P3(tau))`.
    PPair,
}

impl fmt::Display for NamedJoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NamedJoint::Meters => "meters",
            NamedJoint::QPair => "q-pair",
            NamedJoint::PPair => "p-pair",
        })
    }
}

impl FromStr for NamedJoint {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "meters" => Ok(NamedJoint::Meters),
            "q-pair" => Ok(NamedJoint::QPair),
            "p-pair" => Ok(NamedJoint::PPair),
            other => Err(invalid("joint", format!("unknown joint `{other}` (expected meters, q-pair or p-pair)"))),
        }
    }
}

/// Joint law of one of the named observable pairs in `psi ⊗ xi`.
pub fn named_joint(m: &LinearSimultaneousMeasurement, psi: &MinUncertaintyParams, which: NamedJoint) -> Result<JointGaussian> {
    use LinearObservable as L;
    let state = m.initial_state(psi)?;
    let (obs, labels) = match which {
        NamedJoint::Meters => ([*m.meter_q(), *m.meter_p()], ["Q2(tau)", "P3(tau)"]),
        NamedJoint::QPair => ([L::q(1), *m.meter_q()], ["Q1(0)", "Q2(tau)"]),
        NamedJoint::PPair => ([L::p(1), *m.meter_p()], ["P1(0)", "P3(tau)"]),
    };
    joint_distribution(&obs, &state)?.with_labels(labels)
}

/// Posterior-state family of the `Y0` / `Z` models at `nu`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PosteriorFamily {
    nu: f64,
    psi: MinUncertaintyParams,
}

impl PosteriorFamily {
    pub fn new(nu: f64, psi: MinUncertaintyParams) -> Result<Self> {
        check_nu(nu)?;
        psi.validate()?;
        Ok(Self { nu, psi })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn psi(&self) -> &MinUncertaintyParams {
        &self.psi
    }

    /// Posterior means `((y1 - (1-nu) q1)/nu, (y2 - nu p1)/(1-nu))`.
    pub fn mean_at(&self, y: [f64; 2]) -> [f64; 2] {
        let nu = self.nu;
        [(y[0] - (1.0 - nu) * self.psi.q1) / nu, (y[1] - nu * self.psi.p1) / (1.0 - nu)]
    }

    /// Outcome-independent posterior variances `((1-nu)/nu sigma1^2, nu/(1-nu) sigma_p^2)`.
    pub fn variances(&self) -> [f64; 2] {
        let nu = self.nu;
        let vq = (1.0 - nu) / nu * self.psi.sigma1 * self.psi.sigma1;
        let h2 = 0.25 * self.psi.hbar * self.psi.hbar;
        [vq, h2 / vq]
    }
}

/// Minimum uncertainty posterior state for outcome `y = (z, w)`.
pub fn posterior_state(fam: &PosteriorFamily, y: [f64; 2]) -> Result<GaussianState> {
    let m = fam.mean_at(y);
    let v = fam.variances();
    GaussianState::new(
        vec![1],
        DVector::from_vec(m.to_vec()),
        DMatrix::from_diagonal(&DVector::from_vec(v.to_vec())),
        fam.psi.hbar,
    )
}

/// One outcome of a posterior consistency check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OutcomeCheck {
    pub y: [f64; 2],
    pub conditional_mean: [f64; 2],
    pub conditional_var: [f64; 2],
    pub posterior_mean: [f64; 2],
    pub posterior_var: [f64; 2],
}

impl OutcomeCheck {
    pub fn max_deviation(&self) -> f64 {
        (0..2)
            .map(|k| {
                (self.conditional_mean[k] - self.posterior_mean[k])
                    .abs()
                    .max((self.conditional_var[k] - self.posterior_var[k]).abs())
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PosteriorConsistencyReport {
    pub family: ModelFamily,
    pub nu: f64,
    pub checks: Vec<OutcomeCheck>,
    pub max_deviation: f64,
}

fn check_posterior_family(family: ModelFamily) -> Result<()> {
    if !family.has_posterior_family() {
        return Err(Error::UnsupportedFamily(format!("{family} (posterior family known only for Y0 and Z)")));
    }
    Ok(())
}

/// 3×3 grid of outcomes at `(q1, p1) + {-1, 0, 1}` meter standard deviations.
pub fn default_outcome_grid(nu: f64, psi: &MinUncertaintyParams) -> Vec<[f64; 2]> {
    let sz = nu.sqrt() * psi.sigma_q();
    let sw = (1.0 - nu).sqrt() * psi.sigma_p();
    let mut out = Vec::with_capacity(9);
    for i in -1..=1 {
        for j in -1..=1 {
            out.push([psi.q1 + i as f64 * sz, psi.p1 + j as f64 * sw]);
        }
    }
    out
}

/// Conditions the Heisenberg-propagated `Q1(tau)` and `P1(tau)` on the meter
/// outcomes and compares with the posterior family on the default grid.
pub fn posterior_consistency(family: ModelFamily, nu: f64, psi: &MinUncertaintyParams) -> Result<PosteriorConsistencyReport> {
    posterior_consistency_on(family, nu, psi, &default_outcome_grid(nu, psi))
}

pub fn posterior_consistency_on(
    family: ModelFamily,
    nu: f64,
    psi: &MinUncertaintyParams,
    outcomes: &[[f64; 2]],
) -> Result<PosteriorConsistencyReport> {
    check_posterior_family(family)?;
    let m = build_model(family, nu, psi)?;
    let t = m.transform().expect("solvable models carry a transform");
    let state = m.initial_state(psi)?;
    let joint_q = joint_distribution(&[t.q_at(1), t.q_at(2), t.p_at(3)], &state)?;
    let joint_p = joint_distribution(&[t.p_at(1), t.q_at(2), t.p_at(3)], &state)?;
    let fam = PosteriorFamily::new(nu, *psi)?;
    let post_var = fam.variances();
    let mut checks = Vec::with_capacity(outcomes.len());
    for &y in outcomes {
        let cq = conditional(&joint_q, &[1, 2], &y)?;
        let cp = conditional(&joint_p, &[1, 2], &y)?;
        checks.push(OutcomeCheck {
            y,
            conditional_mean: [cq.mean[0], cp.mean[0]],
            conditional_var: [cq.cov[(0, 0)], cp.cov[(0, 0)]],
            posterior_mean: fam.mean_at(y),
            posterior_var: post_var,
        });
    }
    let max_deviation = checks.iter().map(OutcomeCheck::max_deviation).fold(0.0, f64::max);
    Ok(PosteriorConsistencyReport {
        family,
        nu,
        checks,
        max_deviation,
    })
}

/// Axis-aligned rectangle `[z_lo, z_hi] × [w_lo, w_hi]` in outcome space.
/// Infinite bounds are allowed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OutcomeRegion {
    pub z_lo: f64,
    pub z_hi: f64,
    pub w_lo: f64,
    pub w_hi: f64,
}

impl OutcomeRegion {
    pub fn new(z_lo: f64, z_hi: f64, w_lo: f64, w_hi: f64) -> Result<Self> {
        if [z_lo, z_hi, w_lo, w_hi].iter().any(|v| v.is_nan()) || !(z_lo < z_hi && w_lo < w_hi) {
            return Err(invalid(
                "region",
                format!("needs a nonempty interior, got [{z_lo}, {z_hi}] x [{w_lo}, {w_hi}]"),
            ));
        }
        Ok(Self { z_lo, z_hi, w_lo, w_hi })
    }

    pub fn full_plane() -> Self {
        Self {
            z_lo: f64::NEG_INFINITY,
            z_hi: f64::INFINITY,
            w_lo: f64::NEG_INFINITY,
            w_hi: f64::INFINITY,
        }
    }
}

/// `(P(lo <= X <= hi), E[X | ...], Var[X | ...])` for `X ~ N(mu, sigma^2)`.
pub fn truncated_normal_moments(mu: f64, sigma: f64, lo: f64, hi: f64) -> Result<(f64, f64, f64)> {
    let a = (lo - mu) / sigma;
    let b = (hi - mu) / sigma;
    // upper tail differences keep precision when both bounds sit far right
    let prob = if a > 0.0 {
        normal_cdf(-a) - normal_cdf(-b)
    } else {
        normal_cdf(b) - normal_cdf(a)
    };
    if !(prob > 0.0) || !prob.is_finite() {
        return Err(Error::ZeroMeasureRegion);
    }
    let (pa, pb) = (normal_pdf(a), normal_pdf(b));
    let apa = if a.is_infinite() { 0.0 } else { a * pa };
    let bpb = if b.is_infinite() { 0.0 } else { b * pb };
    let shift = (pa - pb) / prob;
    let mean = mu + sigma * shift;
    let var = sigma * sigma * (1.0 + (apa - bpb) / prob - shift * shift);
    Ok((prob, mean, var.max(0.0)))
}

/// Moments of the post-measurement system state given the outcome fell in `J`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RegionMixture {
    pub probability: f64,
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
}

/// Mixture of posterior states weighted by the meter-outcome law
/// `N((q1, p1), diag(nu sigma1^2, (1-nu) sigma_p^2))` restricted to `region`.
/// Covariance follows the law of total variance: posterior covariance plus
/// the spread of the posterior means over the region.
pub fn region_mixture_moments(
    family: ModelFamily,
    nu: f64,
    psi: &MinUncertaintyParams,
    region: &OutcomeRegion,
) -> Result<RegionMixture> {
    check_posterior_family(family)?;
    let fam = PosteriorFamily::new(nu, *psi)?;
    let sz = nu.sqrt() * psi.sigma_q();
    let sw = (1.0 - nu).sqrt() * psi.sigma_p();
    let (pz, ez, vz) = truncated_normal_moments(psi.q1, sz, region.z_lo, region.z_hi)?;
    let (pw, ew, vw) = truncated_normal_moments(psi.p1, sw, region.w_lo, region.w_hi)?;
    let probability = pz * pw;
    if !(probability > 0.0) {
        return Err(Error::ZeroMeasureRegion);
    }
    let mean = fam.mean_at([ez, ew]);
    let post = fam.variances();
    let cov = [
        [post[0] + vz / (nu * nu), 0.0],
        [0.0, post[1] + vw / ((1.0 - nu) * (1.0 - nu))],
    ];
    Ok(RegionMixture { probability, mean, cov })
}
