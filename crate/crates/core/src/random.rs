//! Random solvable generators and physical probe states for fuzzing.

use nalgebra::{DMatrix, DVector, Matrix4};
use rand::Rng;

use crate::dynamics::SolvableGenerator;
use crate::error::Result;
use crate::measurement::LinearSimultaneousMeasurement;
use crate::quadrature::GaussianState;

fn signed_magnitude<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let m = rng.random_range(lo..hi);
    if rng.random_bool(0.5) {
        m
    } else {
        -m
    }
}

/// Solvable generator with `|alpha1|, |alpha3| in [0.2, 2]`,
/// `gamma2, E in [-2, 2]` and `tau in [0.1, 2]`.
pub fn random_solvable_generator<R: Rng + ?Sized>(rng: &mut R) -> SolvableGenerator {
    loop {
        let a1 = signed_magnitude(rng, 0.2, 2.0);
        let a3 = signed_magnitude(rng, 0.2, 2.0);
        let g2 = rng.random_range(-2.0..2.0);
        let e = rng.random_range(-2.0..2.0);
        let tau = rng.random_range(0.1..2.0);
        let c = -(g2 * g2 + e) / 2.0;
        if let Ok(gen) = SolvableGenerator::from_couplings(a1, c / a1, a3, c / a3, g2, tau) {
            return gen;
        }
    }
}

/// Random symplectic matrix on `(Q2, Q3, P2, P3)`: rotations, single-mode
/// squeezers and a beam splitter.
pub fn random_symplectic<R: Rng + ?Sized>(rng: &mut R) -> Matrix4<f64> {
    let rotation = |t2: f64, t3: f64| {
        let (s2, c2) = t2.sin_cos();
        let (s3, c3) = t3.sin_cos();
        Matrix4::new(
            c2, 0.0, s2, 0.0, //
            0.0, c3, 0.0, s3, //
            -s2, 0.0, c2, 0.0, //
            0.0, -s3, 0.0, c3,
        )
    };
    let squeeze = |r2: f64, r3: f64| Matrix4::from_diagonal(&nalgebra::Vector4::new(r2.exp(), r3.exp(), (-r2).exp(), (-r3).exp()));
    let splitter = |t: f64| {
        let (s, c) = t.sin_cos();
        Matrix4::new(
            c, s, 0.0, 0.0, //
            -s, c, 0.0, 0.0, //
            0.0, 0.0, c, s, //
            0.0, 0.0, -s, c,
        )
    };
    let tau = std::f64::consts::TAU;
    let mut angle = || rng.random_range(0.0..tau);
    let r1 = rotation(angle(), angle());
    let b = splitter(angle());
    let r2 = rotation(angle(), angle());
    let sq = squeeze(rng.random_range(-1.2..1.2), rng.random_range(-1.2..1.2));
    r2 * b * sq * r1
}

/// Random Gaussian probe on modes 2 and 3. Pure when `pure` is set,
/// otherwise each normal mode carries thermal occupation factor in `[1, 3)`.
pub fn random_probe<R: Rng + ?Sized>(rng: &mut R, hbar: f64, pure: bool) -> Result<GaussianState> {
    let s = random_symplectic(rng);
    let (n2, n3) = if pure {
        (1.0, 1.0)
    } else {
        (rng.random_range(1.0..3.0), rng.random_range(1.0..3.0))
    };
    let d = Matrix4::from_diagonal(&nalgebra::Vector4::new(n2, n3, n2, n3)) * (0.5 * hbar);
    let cov = s * d * s.transpose();
    let cov = 0.5 * (cov + cov.transpose());
    let mean: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
    GaussianState::new(
        vec![2, 3],
        DVector::from_vec(mean),
        DMatrix::from_iterator(4, 4, cov.iter().copied()),
        hbar,
    )
}

/// Random solvable generator with a random (pure or mixed) probe.
pub fn random_measurement<R: Rng + ?Sized>(rng: &mut R, hbar: f64) -> Result<LinearSimultaneousMeasurement> {
    let gen = random_solvable_generator(rng);
    let pure = rng.random_bool(0.5);
    let probe = random_probe(rng, hbar, pure)?;
    LinearSimultaneousMeasurement::from_solvable(gen, probe)
}
