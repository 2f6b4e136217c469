//! Dense complex linear algebra over labeled tensor-product spaces.
//!
//! The canonical basis of a [`WireLayout`] is big-endian: the first wire is
//! the most significant digit of the flat index.

use std::collections::HashSet;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Default absolute tolerance on eigenvalues for positivity checks.
pub const TOL_PSD: f64 = 1e-9;
/// Relative eigenvalue cutoff used for supports, ranks and pseudo-inverses.
pub const REL_RANK_TOL: f64 = 1e-10;
/// Default hard cap on the total dimension of a layout.
pub const DEFAULT_DIM_CAP: usize = 4096;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[derive(Clone, PartialEq)]
pub struct ComplexMatrix(pub DMatrix<C64>);

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{}", self.rows(), self.cols())?;
        for r in 0..self.rows() {
            for k in 0..self.cols() {
                let z = self.0[(r, k)];
                write!(f, " {:+.4}{:+.4}i", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Self(DMatrix::from_fn(rows, cols, f))
    }

    /// Builds a matrix from row-major entries.
    pub fn from_row_major(rows: usize, cols: usize, data: &[C64]) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::DimensionMismatch(format!("{rows}x{cols} matrix needs {} entries, got {}", rows * cols, data.len())));
        }
        Ok(Self(DMatrix::from_row_slice(rows, cols, data)))
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let n = rows.len();
        let m = rows.first().map_or(0, |r| r.len());
        Self::from_fn(n, m, |i, j| c(rows[i][j], 0.0))
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        Self::from_fn(n, n, |i, j| if i == j { c(values[i], 0.0) } else { C64::default() })
    }

    /// |v⟩⟨v|
    pub fn outer(v: &[C64]) -> Self {
        let n = v.len();
        Self::from_fn(n, n, |i, j| v[i] * v[j].conj())
    }

    /// |v⟩⟨w|
    pub fn outer2(v: &[C64], w: &[C64]) -> Self {
        Self::from_fn(v.len(), w.len(), |i, j| v[i] * w[j].conj())
    }

    /// |i⟩⟨j| in dimension n.
    pub fn unit(n: usize, i: usize, j: usize) -> Self {
        let mut m = Self::zeros(n, n);
        m.0[(i, j)] = c(1.0, 0.0);
        m
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.0[(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.0[(i, j)] = v;
    }

    pub fn row_major(&self) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.rows() * self.cols());
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                out.push(self.0[(i, j)]);
            }
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn conj(&self) -> Self {
        Self(self.0.map(|z| z.conj()))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.map(|z| z * s))
    }

    pub fn scale_c(&self, s: C64) -> Self {
        Self(self.0.map(|z| z * s))
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn kron(&self, other: &Self) -> Self {
        Self(self.0.kronecker(&other.0))
    }

    /// Hilbert–Schmidt inner product Tr[A† B].
    pub fn inner(&self, other: &Self) -> C64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn hermitian_part(&self) -> Self {
        Self((&self.0 + self.0.adjoint()) * c(0.5, 0.0))
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.rows() != other.rows() || self.cols() != other.cols() {
            return f64::INFINITY;
        }
        self.0.iter().zip(other.0.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.is_square() && self.max_abs_diff(&self.adjoint()) <= tol
    }

    /// Eigendecomposition of the Hermitian part: ascending eigenvalues and
    /// the matching orthonormal eigenvectors as columns.
    pub fn eigh(&self) -> (Vec<f64>, ComplexMatrix) {
        let n = self.rows();
        if n == 0 {
            return (Vec::new(), Self::zeros(0, 0));
        }
        let h = self.hermitian_part();
        let eig = SymmetricEigen::new(h.0);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let vectors = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
        (values, ComplexMatrix(vectors))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigh().0.first().copied().unwrap_or(0.0)
    }

    pub fn is_psd(&self, tol: f64) -> bool {
        self.is_hermitian(tol.max(1e-12) * (1.0 + self.max_abs())) && self.min_eigenvalue() >= -tol
    }

    /// Applies `f` to the spectrum of the Hermitian part.
    pub fn spectral_map(&self, f: impl Fn(f64) -> f64) -> Self {
        let (vals, vecs) = self.eigh();
        let n = vals.len();
        let mut scaled = vecs.0.clone();
        for j in 0..n {
            let s = f(vals[j]);
            for i in 0..n {
                scaled[(i, j)] *= s;
            }
        }
        Self(scaled * vecs.0.adjoint())
    }

    /// Number of eigenvalues above `rel_tol` times the largest one.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let (vals, _) = self.eigh();
        let top = vals.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        if top == 0.0 {
            return 0;
        }
        vals.iter().filter(|&&v| v > rel_tol * top).count()
    }

    /// Projector on the eigenvectors with eigenvalue above the relative cutoff.
    pub fn support_projector(&self, rel_tol: f64) -> Self {
        let top = self.eigh().0.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        let cut = rel_tol * top;
        self.spectral_map(|v| if top > 0.0 && v > cut { 1.0 } else { 0.0 })
    }

    /// Inverse square root on the support.
    pub fn pinv_sqrt(&self, rel_tol: f64) -> Self {
        let top = self.eigh().0.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        let cut = rel_tol * top;
        self.spectral_map(|v| if top > 0.0 && v > cut { 1.0 / v.sqrt() } else { 0.0 })
    }

    /// Singular values in descending order.
    pub fn singular_values(&self) -> Vec<f64> {
        if self.rows() == 0 || self.cols() == 0 {
            return Vec::new();
        }
        let mut s: Vec<f64> = self.0.clone().svd(false, false).singular_values.iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }

    /// Full SVD M = U diag(s) V†, with square unitary U and V.
    pub fn svd_full(&self) -> (ComplexMatrix, Vec<f64>, ComplexMatrix) {
        let (r, k) = (self.rows(), self.cols());
        let n = r.max(k);
        // pad to square so nalgebra returns complete unitary factors
        let padded = DMatrix::from_fn(n, n, |i, j| if i < r && j < k { self.0[(i, j)] } else { C64::default() });
        let svd = padded.svd(true, true);
        let u = svd.u.expect("u requested");
        let vt = svd.v_t.expect("v_t requested");
        let s: Vec<f64> = svd.singular_values.iter().copied().collect();
        (ComplexMatrix(u), s, ComplexMatrix(vt.adjoint()))
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: Self) -> ComplexMatrix {
        ComplexMatrix(&self.0 + &rhs.0)
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: Self) -> ComplexMatrix {
        ComplexMatrix(&self.0 - &rhs.0)
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: Self) -> ComplexMatrix {
        ComplexMatrix(&self.0 * &rhs.0)
    }
}

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn neg(self) -> ComplexMatrix {
        ComplexMatrix(-&self.0)
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    data: Vec<[f64; 2]>,
}

impl Serialize for ComplexMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixRepr { rows: self.rows(), cols: self.cols(), data: self.row_major().iter().map(|z| [z.re, z.im]).collect() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ComplexMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = MatrixRepr::deserialize(d)?;
        let data: Vec<C64> = r.data.iter().map(|p| c(p[0], p[1])).collect();
        ComplexMatrix::from_row_major(r.rows, r.cols, &data).map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Input,
    Output,
    Ancilla,
    ClassicalPointer,
}

impl Role {
    /// Role seen from the other side of a connection.
    pub fn exchanged(self) -> Role {
        match self {
            Role::Input => Role::Output,
            Role::Output | Role::Ancilla => Role::Input,
            Role::ClassicalPointer => Role::ClassicalPointer,
        }
    }

    pub fn is_outgoing(self) -> bool {
        matches!(self, Role::Output | Role::Ancilla)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Wire {
    pub label: String,
    pub dim: usize,
    pub role: Role,
}

impl Wire {
    pub fn new(label: impl Into<String>, dim: usize, role: Role) -> Self {
        Self { label: label.into(), dim, role }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WireLayout {
    wires: Vec<Wire>,
}

#[derive(Deserialize)]
struct LayoutRepr {
    wires: Vec<Wire>,
}

impl<'de> Deserialize<'de> for WireLayout {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = LayoutRepr::deserialize(d)?;
        WireLayout::new(r.wires).map_err(D::Error::custom)
    }
}

impl WireLayout {
    pub fn new(wires: Vec<Wire>) -> Result<Self> {
        Self::with_cap(wires, DEFAULT_DIM_CAP)
    }

    pub fn with_cap(wires: Vec<Wire>, cap: usize) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut total: usize = 1;
        for w in &wires {
            if w.dim == 0 {
                return Err(Error::InvalidInput(format!("wire `{}` has dimension 0", w.label)));
            }
            if !seen.insert(w.label.as_str()) {
                return Err(Error::DuplicateLabel(w.label.clone()));
            }
            total = total.saturating_mul(w.dim);
        }
        if total > cap {
            return Err(Error::DimensionCap { required: total, cap });
        }
        Ok(Self { wires })
    }

    pub fn empty() -> Self {
        Self { wires: Vec::new() }
    }

    /// Convenience constructor from (label, dim, role) triples.
    pub fn of(spec: &[(&str, usize, Role)]) -> Result<Self> {
        Self::new(spec.iter().map(|(l, d, r)| Wire::new(*l, *d, *r)).collect())
    }

    pub fn wires(&self) -> &[Wire] {
        &self.wires
    }

    pub fn len(&self) -> usize {
        self.wires.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wires.is_empty()
    }

    pub fn total_dim(&self) -> usize {
        self.wires.iter().map(|w| w.dim).product()
    }

    pub fn labels(&self) -> Vec<String> {
        self.wires.iter().map(|w| w.label.clone()).collect()
    }

    pub fn position(&self, label: &str) -> Result<usize> {
        self.wires.iter().position(|w| w.label == label).ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn contains(&self, label: &str) -> bool {
        self.wires.iter().any(|w| w.label == label)
    }

    pub fn wire(&self, label: &str) -> Result<&Wire> {
        Ok(&self.wires[self.position(label)?])
    }

    pub fn dim_of(&self, labels: &[String]) -> Result<usize> {
        labels.iter().map(|l| self.wire(l).map(|w| w.dim)).product()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.wires.iter().map(|w| w.dim).collect()
    }

    /// Layout with the listed wires removed, order preserved.
    pub fn without(&self, labels: &[String]) -> Result<Self> {
        for l in labels {
            self.position(l)?;
        }
        Ok(Self { wires: self.wires.iter().filter(|w| !labels.contains(&w.label)).cloned().collect() })
    }

    /// Layout restricted to the listed wires, in the listed order.
    pub fn select(&self, labels: &[String]) -> Result<Self> {
        Self::new(labels.iter().map(|l| self.wire(l).cloned()).collect::<Result<_>>()?)
    }

    pub fn concat(&self, other: &Self) -> Result<Self> {
        let mut wires = self.wires.clone();
        wires.extend(other.wires.iter().cloned());
        Self::new(wires)
    }

    pub fn with_roles_exchanged(&self) -> Self {
        Self { wires: self.wires.iter().map(|w| Wire { role: w.role.exchanged(), ..w.clone() }).collect() }
    }

    pub fn with_role(&self, label: &str, role: Role) -> Result<Self> {
        let p = self.position(label)?;
        let mut out = self.clone();
        out.wires[p].role = role;
        Ok(out)
    }

    pub fn relabel(&self, from: &str, to: &str) -> Result<Self> {
        let p = self.position(from)?;
        let mut wires = self.wires.clone();
        wires[p].label = to.to_string();
        Self::new(wires)
    }

    /// Replaces a run of adjacent wires by one wire of the product dimension.
    pub fn merge_adjacent(&self, labels: &[String], merged: Wire) -> Result<Self> {
        let first = self.position(&labels[0])?;
        for (k, l) in labels.iter().enumerate() {
            if self.position(l)? != first + k {
                return Err(Error::LayoutMismatch(format!("wires {labels:?} are not adjacent")));
            }
        }
        let d = self.dim_of(labels)?;
        if d != merged.dim {
            return Err(Error::DimensionMismatch(format!("merged wire has dim {}, expected {d}", merged.dim)));
        }
        let mut wires = self.wires[..first].to_vec();
        wires.push(merged);
        wires.extend(self.wires[first + labels.len()..].iter().cloned());
        Self::new(wires)
    }

    /// Row-major strides of each wire.
    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.wires.len()];
        for k in (0..self.wires.len().saturating_sub(1)).rev() {
            s[k] = s[k + 1] * self.wires[k + 1].dim;
        }
        s
    }

    /// Flat offsets contributed by all joint values of the given wire positions.
    fn offsets(&self, positions: &[usize]) -> Vec<usize> {
        let strides = self.strides();
        let mut out = vec![0usize];
        for &p in positions {
            let d = self.wires[p].dim;
            let mut next = Vec::with_capacity(out.len() * d);
            for &o in &out {
                for v in 0..d {
                    next.push(o + v * strides[p]);
                }
            }
            out = next;
        }
        out
    }

    /// Map from flat index in `order` (a permutation of this layout's labels)
    /// to the flat index in this layout.
    pub fn permutation_map(&self, order: &[String]) -> Result<Vec<usize>> {
        if order.len() != self.wires.len() {
            return Err(Error::LayoutMismatch(format!("permutation {order:?} does not cover layout")));
        }
        let positions = order.iter().map(|l| self.position(l)).collect::<Result<Vec<_>>>()?;
        let unique: HashSet<_> = positions.iter().collect();
        if unique.len() != positions.len() {
            return Err(Error::LayoutMismatch("repeated label in permutation".into()));
        }
        Ok(self.offsets(&positions))
    }
}

fn check_square(m: &ComplexMatrix, layout: &WireLayout) -> Result<()> {
    let d = layout.total_dim();
    if m.rows() != d || m.cols() != d {
        return Err(Error::DimensionMismatch(format!("matrix is {}x{}, layout has total dimension {d}", m.rows(), m.cols())));
    }
    Ok(())
}

fn split_positions(layout: &WireLayout, subset: &[String]) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut sub = Vec::new();
    for l in subset {
        let p = layout.position(l)?;
        if !sub.contains(&p) {
            sub.push(p);
        }
    }
    sub.sort_unstable();
    let keep = (0..layout.len()).filter(|p| !sub.contains(p)).collect();
    Ok((keep, sub))
}

/// Tr over the wires in `subset`; remaining wires keep their order.
pub fn partial_trace(m: &ComplexMatrix, layout: &WireLayout, subset: &[String]) -> Result<(ComplexMatrix, WireLayout)> {
    check_square(m, layout)?;
    let (keep, traced) = split_positions(layout, subset)?;
    let ko = layout.offsets(&keep);
    let to = layout.offsets(&traced);
    let n = ko.len();
    let out = ComplexMatrix::from_fn(n, n, |r, k| to.iter().map(|&t| m.0[(ko[r] + t, ko[k] + t)]).sum());
    Ok((out, layout.without(subset)?))
}

/// Transpose on the wires in `subset`, in the canonical basis.
pub fn partial_transpose(m: &ComplexMatrix, layout: &WireLayout, subset: &[String]) -> Result<ComplexMatrix> {
    check_square(m, layout)?;
    let (keep, sub) = split_positions(layout, subset)?;
    let ko = layout.offsets(&keep);
    let so = layout.offsets(&sub);
    let mut out = ComplexMatrix::zeros(m.rows(), m.cols());
    for &kr in &ko {
        for &sr in &so {
            for &kc in &ko {
                for &sc in &so {
                    out.0[(kr + sr, kc + sc)] = m.0[(kr + sc, kc + sr)];
                }
            }
        }
    }
    Ok(out)
}

/// Reorders the tensor factors of `m` to follow `order`.
pub fn permute(m: &ComplexMatrix, layout: &WireLayout, order: &[String]) -> Result<(ComplexMatrix, WireLayout)> {
    check_square(m, layout)?;
    let map = layout.permutation_map(order)?;
    let n = map.len();
    let out = ComplexMatrix::from_fn(n, n, |i, j| m.0[(map[i], map[j])]);
    Ok((out, layout.select(order)?))
}

/// Permutes a vector on `layout` into the wire order `order`.
pub fn permute_vector(v: &[C64], layout: &WireLayout, order: &[String]) -> Result<Vec<C64>> {
    let map = layout.permutation_map(order)?;
    if v.len() != map.len() {
        return Err(Error::DimensionMismatch(format!("vector length {} vs layout {}", v.len(), map.len())));
    }
    Ok(map.iter().map(|&k| v[k]).collect())
}

/// |F⟩⟩ = Σ F_mn |m⟩|n⟩, output factor first.
pub fn double_ket(f: &ComplexMatrix) -> Vec<C64> {
    f.row_major()
}

/// Inverse of [`double_ket`] for an (out, in) factorization.
pub fn from_double_ket(v: &[C64], d_out: usize, d_in: usize) -> Result<ComplexMatrix> {
    ComplexMatrix::from_row_major(d_out, d_in, v)
}

/// |I⟩⟩ on two copies of a d-dimensional space.
pub fn max_entangled(d: usize) -> Vec<C64> {
    double_ket(&ComplexMatrix::identity(d))
}

pub fn mat_vec(m: &ComplexMatrix, v: &[C64]) -> Vec<C64> {
    (0..m.rows()).map(|i| (0..m.cols()).map(|j| m.0[(i, j)] * v[j]).sum()).collect()
}

pub fn vdot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Relative size below which eigenvalues are rounding noise.
const SPECTRAL_NOISE: f64 = 1e-14;

/// PSD square root; eigenvalues in [-tol_psd, 0) and rounding noise are set to zero.
pub fn psd_sqrt(m: &ComplexMatrix, tol_psd: f64) -> Result<ComplexMatrix> {
    let (vals, _) = m.eigh();
    if let Some(&min) = vals.first() {
        if min < -tol_psd {
            return Err(Error::NotPsd { min_eigenvalue: min });
        }
    }
    let floor = SPECTRAL_NOISE * vals.last().copied().unwrap_or(0.0).max(0.0);
    Ok(m.spectral_map(|v| if v > floor { v.sqrt() } else { 0.0 }))
}

/// Sum of singular values.
pub fn trace_norm(m: &ComplexMatrix) -> f64 {
    if m.is_square() && m.is_hermitian(1e-14 * (1.0 + m.max_abs())) {
        m.eigh().0.iter().map(|v| v.abs()).sum()
    } else {
        m.singular_values().iter().sum()
    }
}

/// Unitary factor of the polar decomposition M = U|M|.
///
/// For rank-deficient M the completion is the identity block between the
/// left and right singular bases.
pub fn polar_unitary(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch("polar decomposition needs a square matrix".into()));
    }
    let (u, _, v) = m.svd_full();
    Ok(&u * &v.adjoint())
}

/// Partial isometry U_r V_r† built from the singular pairs above the cutoff.
pub fn polar_partial_isometry(m: &ComplexMatrix, rel_tol: f64) -> ComplexMatrix {
    let (r, k) = (m.rows(), m.cols());
    let (u, s, v) = m.svd_full();
    let top = s.iter().fold(0.0f64, |a, &b| a.max(b));
    let mut out = ComplexMatrix::zeros(r, k);
    for (idx, &sv) in s.iter().enumerate() {
        if top == 0.0 || sv <= rel_tol * top {
            continue;
        }
        for i in 0..r {
            for j in 0..k {
                out.0[(i, j)] += u.0[(i, idx)] * v.0[(j, idx)].conj();
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_density, random_matrix, random_psd, seeded};

    fn two_qubits() -> WireLayout {
        WireLayout::of(&[("a", 2, Role::Output), ("b", 2, Role::Input)]).unwrap()
    }

    fn l(s: &str) -> Vec<String> {
        vec![s.to_string()]
    }

    #[test]
    fn trace_of_product_factor() {
        let mut rng = seeded(1);
        let a = random_matrix(&mut rng, 2, 2);
        let b = random_matrix(&mut rng, 2, 2);
        let (out, lay) = partial_trace(&a.kron(&b), &two_qubits(), &l("b")).unwrap();
        assert_eq!(lay.labels(), vec!["a"]);
        assert!(out.max_abs_diff(&a.scale_c(b.trace())) < 1e-12);
        let (out, _) = partial_trace(&a.kron(&b), &two_qubits(), &l("a")).unwrap();
        assert!(out.max_abs_diff(&b.scale_c(a.trace())) < 1e-12);
    }

    #[test]
    fn maximally_entangled_marginal_is_identity() {
        let phi = ComplexMatrix::outer(&max_entangled(2));
        let (m, _) = partial_trace(&phi, &two_qubits(), &l("a")).unwrap();
        assert!(m.max_abs_diff(&ComplexMatrix::identity(2)) < 1e-14);
    }

    #[test]
    fn full_trace_of_density_is_one() {
        let rho = random_density(&mut seeded(2), 4);
        let (m, lay) = partial_trace(&rho, &two_qubits(), &["a".into(), "b".into()]).unwrap();
        assert!(lay.is_empty());
        assert_eq!(m.rows(), 1);
        assert!((m.get(0, 0) - c(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn partial_trace_errors() {
        let m = ComplexMatrix::identity(4);
        assert!(matches!(partial_trace(&m, &two_qubits(), &l("zz")), Err(Error::UnknownLabel(_))));
        let bad = ComplexMatrix::identity(3);
        assert!(matches!(partial_trace(&bad, &two_qubits(), &l("a")), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn transpose_on_all_factors_is_full_transpose() {
        let m = random_matrix(&mut seeded(3), 4, 4);
        let t = partial_transpose(&m, &two_qubits(), &["a".into(), "b".into()]).unwrap();
        assert!(t.max_abs_diff(&m.transpose()) < 1e-15);
        let once = partial_transpose(&m, &two_qubits(), &l("b")).unwrap();
        let twice = partial_transpose(&once, &two_qubits(), &l("b")).unwrap();
        assert!(twice.max_abs_diff(&m) < 1e-15);
    }

    #[test]
    fn bell_partial_transpose_spectrum() {
        let s = 1.0 / 2f64.sqrt();
        let phi = ComplexMatrix::outer(&[c(s, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(s, 0.0)]);
        let pt = partial_transpose(&phi, &two_qubits(), &l("b")).unwrap();
        let (vals, _) = pt.eigh();
        let expected = [-0.5, 0.5, 0.5, 0.5];
        for (v, e) in vals.iter().zip(expected) {
            assert!((v - e).abs() < 1e-12);
        }
    }

    #[test]
    fn double_ket_examples() {
        let one = c(1.0, 0.0);
        let zero = c(0.0, 0.0);
        assert_eq!(double_ket(&ComplexMatrix::identity(2)), vec![one, zero, zero, one]);
        assert_eq!(double_ket(&ComplexMatrix::unit(2, 0, 1)), vec![zero, one, zero, zero]);
    }

    #[test]
    fn mirror_relation_holds() {
        let mut rng = seeded(4);
        let id = ComplexMatrix::identity(3);
        let ket = max_entangled(3);
        for _ in 0..100 {
            let f = random_matrix(&mut rng, 3, 3);
            let lhs = mat_vec(&f.kron(&id), &ket);
            let rhs = mat_vec(&id.kron(&f.transpose()), &ket);
            let err = lhs.iter().zip(&rhs).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(err < 1e-12);
        }
    }

    #[test]
    fn sqrt_examples() {
        assert!(psd_sqrt(&ComplexMatrix::identity(3), TOL_PSD).unwrap().max_abs_diff(&ComplexMatrix::identity(3)) < 1e-14);
        let s = psd_sqrt(&ComplexMatrix::diag(&[4.0, 0.0]), TOL_PSD).unwrap();
        assert!(s.max_abs_diff(&ComplexMatrix::diag(&[2.0, 0.0])) < 1e-14);
        let m = random_psd(&mut seeded(5), 4);
        let r = psd_sqrt(&m, TOL_PSD).unwrap();
        assert!((&r * &r).max_abs_diff(&m) < 1e-10);
        let neg = ComplexMatrix::diag(&[1.0, -1e-3]);
        assert!(matches!(psd_sqrt(&neg, TOL_PSD), Err(Error::NotPsd { .. })));
        // within tolerance: clamped
        assert!(psd_sqrt(&ComplexMatrix::diag(&[1.0, -1e-11]), TOL_PSD).is_ok());
    }

    #[test]
    fn trace_norm_examples() {
        let rho = random_density(&mut seeded(6), 3);
        assert!((trace_norm(&rho) - 1.0).abs() < 1e-12);
        assert!((trace_norm(&ComplexMatrix::diag(&[1.0, -1.0])) - 2.0).abs() < 1e-14);
        let half0 = ComplexMatrix::diag(&[0.5, 0.0]);
        let mixed = ComplexMatrix::diag(&[0.5, 0.5]);
        assert!((trace_norm(&(&half0 - &mixed)) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn polar_examples() {
        let x = ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert!(polar_unitary(&x).unwrap().max_abs_diff(&x) < 1e-12);
        let d = ComplexMatrix::diag(&[2.0, 3.0]);
        assert!(polar_unitary(&d).unwrap().max_abs_diff(&ComplexMatrix::identity(2)) < 1e-12);
        let mut rng = seeded(7);
        for _ in 0..20 {
            let m = random_matrix(&mut rng, 3, 3);
            let u = polar_unitary(&m).unwrap();
            assert!((&u.adjoint() * &u).max_abs_diff(&ComplexMatrix::identity(3)) < 1e-12);
            assert!(((&u.adjoint() * &m).trace().re - trace_norm(&m)).abs() < 1e-10);
        }
    }

    #[test]
    fn rank_deficient_polar_is_unitary() {
        let m = ComplexMatrix::diag(&[1.0, 0.0, 0.0]);
        let u = polar_unitary(&m).unwrap();
        assert!((&u.adjoint() * &u).max_abs_diff(&ComplexMatrix::identity(3)) < 1e-12);
        assert!(((&u.adjoint() * &m).trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn layout_validation() {
        assert!(matches!(WireLayout::of(&[("a", 2, Role::Input), ("a", 2, Role::Output)]), Err(Error::DuplicateLabel(_))));
        assert!(matches!(
            WireLayout::with_cap(vec![Wire::new("a", 100, Role::Input), Wire::new("b", 100, Role::Output)], 4096),
            Err(Error::DimensionCap { .. })
        ));
    }

    #[test]
    fn permute_round_trip() {
        let lay = WireLayout::of(&[("a", 2, Role::Output), ("b", 3, Role::Input), ("c", 2, Role::Input)]).unwrap();
        let m = random_matrix(&mut seeded(8), 12, 12);
        let order: Vec<String> = vec!["c".into(), "a".into(), "b".into()];
        let (p, pl) = permute(&m, &lay, &order).unwrap();
        let (back, _) = permute(&p, &pl, &lay.labels()).unwrap();
        assert!(back.max_abs_diff(&m) < 1e-15);
        // a product operator permutes factor-wise
        let mut rng = seeded(9);
        let (x, y, z) = (random_matrix(&mut rng, 2, 2), random_matrix(&mut rng, 3, 3), random_matrix(&mut rng, 2, 2));
        let (pp, _) = permute(&x.kron(&y).kron(&z), &lay, &order).unwrap();
        assert!(pp.max_abs_diff(&z.kron(&x).kron(&y)) < 1e-12);
    }
}
