//! Seeded random operators for tests, demos and solver starting points.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::tensor::{c, ComplexMatrix};

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gauss(rng: &mut impl Rng) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c(re, im)
}

/// Ginibre matrix with standard complex Gaussian entries.
pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| gauss(rng))
}

pub fn random_vector(rng: &mut impl Rng, d: usize) -> Vec<C64> {
    let v: Vec<C64> = (0..d).map(|_| gauss(rng)).collect();
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / n).collect()
}

/// Random PSD matrix of full rank (almost surely).
pub fn random_psd(rng: &mut impl Rng, d: usize) -> ComplexMatrix {
    let g = random_matrix(rng, d, d);
    &g * &g.adjoint()
}

/// Random density matrix of the given rank.
pub fn random_density_rank(rng: &mut impl Rng, d: usize, rank: usize) -> ComplexMatrix {
    let g = random_matrix(rng, d, rank.max(1));
    let m = &g * &g.adjoint();
    let t = m.trace().re;
    m.scale(1.0 / t)
}

pub fn random_density(rng: &mut impl Rng, d: usize) -> ComplexMatrix {
    random_density_rank(rng, d, d)
}

/// Haar-distributed unitary via phase-corrected QR.
pub fn haar_unitary(rng: &mut impl Rng, d: usize) -> ComplexMatrix {
    let g = random_matrix(rng, d, d);
    let qr = g.0.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        let rj = r[(j, j)];
        let ph = if rj.norm() > 0.0 { rj / rj.norm() } else { c(1.0, 0.0) };
        for i in 0..d {
            q[(i, j)] *= ph;
        }
    }
    ComplexMatrix(q)
}

/// Random isometry d_in → d_out (d_out ≥ d_in).
pub fn random_isometry(rng: &mut impl Rng, d_out: usize, d_in: usize) -> ComplexMatrix {
    assert!(d_out >= d_in, "isometry needs d_out >= d_in");
    let u = haar_unitary(rng, d_out);
    ComplexMatrix::from_fn(d_out, d_in, |i, j| u.get(i, j))
}

/// Kraus operators of a random channel with `n` Kraus operators.
pub fn random_kraus(rng: &mut impl Rng, d_out: usize, d_in: usize, n: usize) -> Vec<ComplexMatrix> {
    let v = random_isometry(rng, d_out * n, d_in);
    (0..n).map(|k| ComplexMatrix::from_fn(d_out, d_in, |i, j| v.get(k * d_out + i, j))).collect()
}
