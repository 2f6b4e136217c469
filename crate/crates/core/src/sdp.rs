//! Primal–dual interior-point solver for small dense complex SDPs.
//!
//! Problem form, over Hermitian block variables X_b ⪰ 0:
//!
//! ```text
//! maximize  Σ_b Re Tr[M_b X_b]
//! s.t.      Re Σ_k c_k X_{b_k}[r_k, c_k] = rhs   (one line per constraint)
//! ```
//!
//! The search direction is HKM with a Mehrotra predictor–corrector step.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::ComplexMatrix;

/// Re (coeff · X_block[row, col]).
#[derive(Debug, Clone, Copy)]
pub struct Term {
    pub block: usize,
    pub row: usize,
    pub col: usize,
    pub coeff: C64,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub terms: Vec<Term>,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub block_dims: Vec<usize>,
    /// Hermitian objective per block; `None` is zero.
    pub objective: Vec<Option<ComplexMatrix>>,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SdpStatus {
    Optimal,
    /// Stopped early but with a usable certificate.
    Inaccurate,
    Failed,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub x: Vec<ComplexMatrix>,
    pub y: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub iterations: usize,
    pub status: SdpStatus,
}

impl SdpSolution {
    pub fn gap(&self) -> f64 {
        (self.dual_objective - self.primal_objective).abs()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SdpOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 120 }
    }
}

impl SdpProblem {
    pub fn new() -> Self {
        Self { block_dims: Vec::new(), objective: Vec::new(), constraints: Vec::new() }
    }

    pub fn add_block(&mut self, dim: usize) -> usize {
        self.block_dims.push(dim);
        self.objective.push(None);
        self.block_dims.len() - 1
    }

    /// Adds `m` to the objective of `block`; only its Hermitian part matters.
    pub fn add_objective(&mut self, block: usize, m: &ComplexMatrix) {
        let h = m.hermitian_part();
        self.objective[block] = Some(match self.objective[block].take() {
            Some(prev) => &prev + &h,
            None => h,
        });
    }

    pub fn add_constraint(&mut self, terms: Vec<Term>, rhs: f64) {
        self.constraints.push(Constraint { terms, rhs });
    }

    pub fn n_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn solve(&self, opts: &SdpOptions) -> Result<SdpSolution> {
        Solver::new(self)?.run(opts)
    }
}

impl Default for SdpProblem {
    fn default() -> Self {
        Self::new()
    }
}

type Mat = DMatrix<C64>;

/// Hermitian sparse constraint matrix restricted to one block.
struct BlockPart {
    block: usize,
    entries: Vec<(usize, usize, C64)>,
    cols: Vec<usize>,
}

struct Solver {
    dims: Vec<usize>,
    c: Vec<Mat>,
    parts: Vec<Vec<BlockPart>>,
    /// constraint indices touching each block, with the index of the part
    by_block: Vec<Vec<(usize, usize)>>,
    b: DVector<f64>,
}

fn herm(m: &Mat) -> Mat {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

fn re_inner(a: &Mat, b: &Mat) -> f64 {
    // Re Tr[A† B]
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

fn frob(m: &Mat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn step_length(x: &Mat, dx: &Mat) -> f64 {
    let n = x.nrows();
    let chol = match Cholesky::new(x.clone()) {
        Some(c) => c,
        None => return 0.0,
    };
    let l = chol.l();
    let mut t = dx.clone();
    // L⁻¹ dX L⁻†
    if !l.solve_lower_triangular_mut(&mut t) {
        return 0.0;
    }
    let mut t = t.adjoint();
    if !l.solve_lower_triangular_mut(&mut t) {
        return 0.0;
    }
    let t = herm(&t);
    let min = if n == 1 { t[(0, 0)].re } else { t.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min) };
    if min >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / min
    }
}

impl Solver {
    fn new(p: &SdpProblem) -> Result<Self> {
        let nb = p.block_dims.len();
        let mut parts = Vec::with_capacity(p.constraints.len());
        let mut by_block = vec![Vec::new(); nb];
        for (i, con) in p.constraints.iter().enumerate() {
            let mut acc: BTreeMap<(usize, usize, usize), C64> = BTreeMap::new();
            for t in &con.terms {
                if t.block >= nb || t.row >= p.block_dims[t.block] || t.col >= p.block_dims[t.block] {
                    return Err(Error::Solver(format!("constraint {i} refers outside its block")));
                }
                // Re(v X[r,c]) = Re Tr[A X] with A[c,r] = v/2, A[r,c] = v̄/2
                *acc.entry((t.block, t.col, t.row)).or_default() += t.coeff * 0.5;
                *acc.entry((t.block, t.row, t.col)).or_default() += t.coeff.conj() * 0.5;
            }
            let mut mine: Vec<BlockPart> = Vec::new();
            for ((b, r, c), v) in acc {
                if v.norm() == 0.0 {
                    continue;
                }
                if mine.last().map(|p| p.block) != Some(b) {
                    mine.push(BlockPart { block: b, entries: Vec::new(), cols: Vec::new() });
                }
                let part = mine.last_mut().unwrap();
                part.entries.push((r, c, v));
                if !part.cols.contains(&c) {
                    part.cols.push(c);
                }
            }
            for (k, part) in mine.iter().enumerate() {
                by_block[part.block].push((i, k));
            }
            parts.push(mine);
        }
        let c = p
            .block_dims
            .iter()
            .zip(&p.objective)
            .map(|(&d, o)| match o {
                Some(m) => -herm(&m.0),
                None => Mat::zeros(d, d),
            })
            .collect();
        let b = DVector::from_iterator(p.constraints.len(), p.constraints.iter().map(|c| c.rhs));
        Ok(Self { dims: p.block_dims.clone(), c, parts, by_block, b })
    }

    fn m(&self) -> usize {
        self.b.len()
    }

    /// A(Y)_i = Re Tr[A_i Y] (Y need not be Hermitian).
    fn apply_a(&self, y: &[Mat]) -> DVector<f64> {
        DVector::from_iterator(
            self.m(),
            self.parts.iter().map(|parts| parts.iter().map(|p| p.entries.iter().map(|&(r, c, a)| (a * y[p.block][(c, r)]).re).sum::<f64>()).sum()),
        )
    }

    /// Σ y_i A_i per block.
    fn apply_at(&self, y: &DVector<f64>) -> Vec<Mat> {
        let mut out: Vec<Mat> = self.dims.iter().map(|&d| Mat::zeros(d, d)).collect();
        for (i, parts) in self.parts.iter().enumerate() {
            for p in parts {
                for &(r, c, a) in &p.entries {
                    out[p.block][(r, c)] += a * y[i];
                }
            }
        }
        out
    }

    fn schur(&self, x: &[Mat], zinv: &[Mat]) -> DMatrix<f64> {
        let m = self.m();
        let mut s = DMatrix::<f64>::zeros(m, m);
        for (b, list) in self.by_block.iter().enumerate() {
            let n = self.dims[b];
            for &(j, kj) in list {
                let pj = &self.parts[j][kj];
                // G = X A_j Z⁻¹
                let mut xa = Mat::zeros(n, n);
                for &(p, q, w) in &pj.entries {
                    for r in 0..n {
                        xa[(r, q)] += x[b][(r, p)] * w;
                    }
                }
                let mut g = Mat::zeros(n, n);
                for &q in &pj.cols {
                    for r in 0..n {
                        let v = xa[(r, q)];
                        if v.norm_sqr() == 0.0 {
                            continue;
                        }
                        for col in 0..n {
                            g[(r, col)] += v * zinv[b][(q, col)];
                        }
                    }
                }
                for &(i, ki) in list {
                    if i < j {
                        continue;
                    }
                    let pi = &self.parts[i][ki];
                    let v: f64 = pi.entries.iter().map(|&(r, c, a)| (a * g[(c, r)]).re).sum();
                    s[(i, j)] += v;
                    if i != j {
                        s[(j, i)] += v;
                    }
                }
            }
        }
        s
    }

    fn run(&self, opts: &SdpOptions) -> Result<SdpSolution> {
        let m = self.m();
        let nb = self.dims.len();
        let n_total: usize = self.dims.iter().sum();
        let norm_b = self.b.norm();
        let norm_c = self.c.iter().map(|c| frob(c).powi(2)).sum::<f64>().sqrt();

        // SDPT3-style starting point
        let mut a_norms = vec![vec![0.0f64; nb]; m];
        for (i, parts) in self.parts.iter().enumerate() {
            for p in parts {
                a_norms[i][p.block] = p.entries.iter().map(|e| e.2.norm_sqr()).sum::<f64>().sqrt();
            }
        }
        let mut x: Vec<Mat> = Vec::with_capacity(nb);
        let mut z: Vec<Mat> = Vec::with_capacity(nb);
        for b in 0..nb {
            let n = self.dims[b] as f64;
            let mut xi = 10f64.max(n.sqrt());
            let mut eta = 10f64.max(n.sqrt()).max(frob(&self.c[b]));
            for i in 0..m {
                xi = xi.max(n * (1.0 + self.b[i].abs()) / (1.0 + a_norms[i][b]));
                eta = eta.max(a_norms[i][b]);
            }
            x.push(Mat::identity(self.dims[b], self.dims[b]) * C64::new(xi, 0.0));
            z.push(Mat::identity(self.dims[b], self.dims[b]) * C64::new(eta, 0.0));
        }
        let mut y = DVector::<f64>::zeros(m);

        let mut best: Option<SdpSolution> = None;
        let mut best_score = f64::INFINITY;
        let mut iterations = 0;
        let mut status = SdpStatus::Failed;

        for it in 0..=opts.max_iter {
            iterations = it;
            let ax = self.apply_a(&x);
            let rp = &self.b - &ax;
            let aty = self.apply_at(&y);
            let rd: Vec<Mat> = (0..nb).map(|b| &self.c[b] - &z[b] - &aty[b]).collect();
            let pobj: f64 = (0..nb).map(|b| re_inner(&self.c[b], &x[b])).sum();
            let dobj = self.b.dot(&y);
            let pinf = rp.norm() / (1.0 + norm_b);
            let dinf = rd.iter().map(|r| frob(r).powi(2)).sum::<f64>().sqrt() / (1.0 + norm_c);
            let relgap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
            let score = pinf.max(dinf).max(relgap);
            if score < best_score {
                best_score = score;
                best = Some(SdpSolution {
                    x: x.iter().map(|m| ComplexMatrix(herm(m))).collect(),
                    y: y.iter().copied().collect(),
                    primal_objective: -pobj,
                    dual_objective: -dobj,
                    primal_infeasibility: pinf,
                    dual_infeasibility: dinf,
                    iterations: it,
                    status: SdpStatus::Inaccurate,
                });
            }
            if score < opts.tol {
                status = SdpStatus::Optimal;
                break;
            }
            if it == opts.max_iter {
                break;
            }
            let mu: f64 = (0..nb).map(|b| re_inner(&x[b], &z[b])).sum::<f64>() / n_total as f64;

            let mut zinv = Vec::with_capacity(nb);
            let mut ok = true;
            for zb in &z {
                match Cholesky::new(zb.clone()) {
                    Some(ch) => zinv.push(ch.inverse()),
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if !ok {
                break;
            }
            let schur = self.schur(&x, &zinv);
            let chol = match factor(schur) {
                Some(c) => c,
                None => break,
            };
            let h: Vec<Mat> = (0..nb).map(|b| &x[b] * &rd[b] * &zinv[b]).collect();
            let ah = self.apply_a(&h);

            let direction = |rx: &[Mat]| -> (DVector<f64>, Vec<Mat>, Vec<Mat>) {
                let rhs = &rp - self.apply_a(rx) + &ah;
                let dy = chol.solve(&rhs);
                let atdy = self.apply_at(&dy);
                let dz: Vec<Mat> = (0..nb).map(|b| &rd[b] - &atdy[b]).collect();
                let dx: Vec<Mat> = (0..nb).map(|b| &rx[b] - herm(&(&x[b] * &dz[b] * &zinv[b]))).collect();
                (dy, dx, dz)
            };

            // predictor
            let rx_aff: Vec<Mat> = x.iter().map(|m| -m).collect();
            let (_, dx_a, dz_a) = direction(&rx_aff);
            let ap = (0..nb).map(|b| step_length(&x[b], &dx_a[b])).fold(1.0f64, f64::min);
            let ad = (0..nb).map(|b| step_length(&z[b], &dz_a[b])).fold(1.0f64, f64::min);
            let mu_aff: f64 =
                (0..nb).map(|b| re_inner(&(&x[b] + &dx_a[b] * C64::new(ap, 0.0)), &(&z[b] + &dz_a[b] * C64::new(ad, 0.0)))).sum::<f64>() / n_total as f64;
            let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

            // corrector
            let rx: Vec<Mat> = (0..nb).map(|b| &zinv[b] * C64::new(sigma * mu, 0.0) - &x[b] - herm(&(&dx_a[b] * &dz_a[b] * &zinv[b]))).collect();
            let (dy, dx, dz) = direction(&rx);
            let sp = (0..nb).map(|b| step_length(&x[b], &dx[b])).fold(f64::INFINITY, f64::min);
            let sd = (0..nb).map(|b| step_length(&z[b], &dz[b])).fold(f64::INFINITY, f64::min);
            let gamma = 0.9 + 0.09 * ap.min(ad);
            let ap = (gamma * sp).min(1.0);
            let ad = (gamma * sd).min(1.0);
            if ap < 1e-12 && ad < 1e-12 {
                break;
            }
            for b in 0..nb {
                x[b] = herm(&(&x[b] + &dx[b] * C64::new(ap, 0.0)));
                z[b] = herm(&(&z[b] + &dz[b] * C64::new(ad, 0.0)));
            }
            y += dy * ad;
        }

        let mut sol = best.ok_or_else(|| Error::Solver("no iterate produced".into()))?;
        if status == SdpStatus::Optimal {
            sol.status = SdpStatus::Optimal;
        } else if best_score > 1e-4 {
            sol.status = SdpStatus::Failed;
        }
        sol.iterations = iterations;
        Ok(sol)
    }
}

fn factor(mut s: DMatrix<f64>) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    let scale = s.diagonal().iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1e-300);
    if let Some(c) = Cholesky::new(s.clone()) {
        return Some(c);
    }
    for ridge in [1e-14, 1e-12, 1e-10, 1e-8] {
        for i in 0..s.nrows() {
            s[(i, i)] += ridge * scale;
        }
        if let Some(c) = Cholesky::new(s.clone()) {
            return Some(c);
        }
    }
    None
}

/// Shorthand for a term with coefficient 1.
pub fn term(block: usize, row: usize, col: usize) -> Term {
    Term { block, row, col, coeff: C64::new(1.0, 0.0) }
}

/// Terms expressing Re Tr[M X_block] for a dense matrix M.
pub fn trace_terms(block: usize, m: &ComplexMatrix) -> Vec<Term> {
    let mut out = Vec::new();
    for r in 0..m.rows() {
        for c in 0..m.cols() {
            let v = m.get(c, r);
            if v.norm() != 0.0 {
                out.push(Term { block, row: r, col: c, coeff: v });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_psd, seeded};
    use crate::tensor::{c, trace_norm};

    #[test]
    fn largest_eigenvalue() {
        let mut rng = seeded(51);
        let m = random_psd(&mut rng, 4);
        let mut p = SdpProblem::new();
        let b = p.add_block(4);
        p.add_objective(b, &m);
        p.add_constraint((0..4).map(|i| term(b, i, i)).collect(), 1.0);
        let s = p.solve(&SdpOptions::default()).unwrap();
        let top = *m.eigh().0.last().unwrap();
        assert_eq!(s.status, SdpStatus::Optimal);
        assert!((s.primal_objective - top).abs() < 1e-7 * top.max(1.0), "{} vs {top}", s.primal_objective);
        assert!(s.gap() < 1e-6);
    }

    #[test]
    fn complex_objective() {
        let y = ComplexMatrix::from_fn(2, 2, |r, k| match (r, k) {
            (0, 1) => c(0.0, -1.0),
            (1, 0) => c(0.0, 1.0),
            _ => c(0.0, 0.0),
        });
        let mut p = SdpProblem::new();
        let b = p.add_block(2);
        p.add_objective(b, &y);
        p.add_constraint(vec![term(b, 0, 0), term(b, 1, 1)], 1.0);
        let s = p.solve(&SdpOptions::default()).unwrap();
        assert!((s.primal_objective - 1.0).abs() < 1e-7);
        // optimum is the +1 eigenvector of Y: X[0,1] = -i/2
        assert!((s.x[0].get(0, 1) - c(0.0, -0.5)).norm() < 1e-5);
    }

    #[test]
    fn tiny_lp() {
        // max x1 + x2 s.t. x1 + 2 x2 = 1, x ≥ 0 → 1
        let mut p = SdpProblem::new();
        let b1 = p.add_block(1);
        let b2 = p.add_block(1);
        p.add_objective(b1, &ComplexMatrix::identity(1));
        p.add_objective(b2, &ComplexMatrix::identity(1));
        p.add_constraint(vec![term(b1, 0, 0), Term { block: b2, row: 0, col: 0, coeff: c(2.0, 0.0) }], 1.0);
        let s = p.solve(&SdpOptions::default()).unwrap();
        assert!((s.primal_objective - 1.0).abs() < 1e-7);
    }

    #[test]
    fn trace_norm_by_sdp() {
        // ‖A‖₁ = max Re Tr[A† C] over contractions: [[I, C],[C†, I]] ⪰ 0
        let mut rng = seeded(52);
        let a = crate::random::random_matrix(&mut rng, 3, 3);
        let mut p = SdpProblem::new();
        let b = p.add_block(6);
        // objective Re Tr[A† C] with C the upper-right block
        let mut obj = ComplexMatrix::zeros(6, 6);
        for i in 0..3 {
            for j in 0..3 {
                // Re Σ conj(A_ij) C_ij = Re Tr[M X] needs M[3+j, i] = conj(A_ij)
                obj.set(3 + j, i, a.get(i, j).conj());
            }
        }
        p.add_objective(b, &obj);
        for i in 0..3 {
            for j in 0..3 {
                let rhs = if i == j { 1.0 } else { 0.0 };
                for (o, re) in [(0usize, true), (3, true), (0, false), (3, false)] {
                    if !re && i >= j {
                        continue;
                    }
                    if re && i > j {
                        continue;
                    }
                    let coeff = if re { c(1.0, 0.0) } else { c(0.0, -1.0) };
                    let r = if re { rhs } else { 0.0 };
                    p.add_constraint(vec![Term { block: b, row: o + i, col: o + j, coeff }], r);
                }
            }
        }
        let s = p.solve(&SdpOptions::default()).unwrap();
        assert!((s.primal_objective - trace_norm(&a)).abs() < 1e-6, "{} vs {}", s.primal_objective, trace_norm(&a));
    }
}
