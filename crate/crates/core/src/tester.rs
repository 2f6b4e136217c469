//! Testers: normalization, the Born rule and the canonical decomposition.

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::choi::{choi_from_kraus, ChoiOp, OpKind, TOL_NORM};
use crate::comb::{comb_from_sequence, dilate_comb, validate_deterministic, DilatedComb, NormReport, QuantumComb};
use crate::error::{Error, Result};
use crate::random::{random_density, random_kraus};
use crate::tensor::{ComplexMatrix, Role, Wire, WireLayout, REL_RANK_TOL, TOL_PSD};

#[derive(Debug, Clone)]
pub struct Tester {
    pub outcomes: Vec<(String, ComplexMatrix)>,
    /// Layout of the T_i, with roles as seen by the tester.
    pub layout: WireLayout,
    pub normalized: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TesterReport {
    pub normalized: bool,
    /// Smallest eigenvalue of each T_i.
    pub outcome_min_eigenvalues: Vec<f64>,
    pub norm: NormReport,
    /// Tr T minus the trace of a deterministic tester on the same wires.
    pub trace_deviation: f64,
}

/// Tr[X^τ Y] = Σ X_ab Y_ab.
pub fn pairing(x: &ComplexMatrix, y: &ComplexMatrix) -> f64 {
    x.0.iter().zip(y.0.iter()).map(|(a, b)| (a * b).re).sum()
}

impl Tester {
    pub fn new(outcomes: Vec<(String, ComplexMatrix)>, layout: WireLayout) -> Result<Self> {
        let d = layout.total_dim();
        if outcomes.is_empty() {
            return Err(Error::InvalidInput("tester without outcomes".into()));
        }
        for (l, m) in &outcomes {
            if m.rows() != d || m.cols() != d {
                return Err(Error::DimensionMismatch(format!("outcome `{l}` is {}x{}, layout needs {d}", m.rows(), m.cols())));
            }
        }
        let mut t = Self { outcomes, layout, normalized: false };
        t.normalized = validate_tester(&t).normalized;
        Ok(t)
    }

    /// Outcomes given as Choi operators on a common set of wires.
    pub fn from_ops(ops: Vec<(String, ChoiOp)>) -> Result<Self> {
        let first = ops.first().ok_or_else(|| Error::InvalidInput("tester without outcomes".into()))?;
        let order = first.1.layout.labels();
        let layout = first.1.layout.clone();
        let mut out = Vec::new();
        for (l, op) in ops {
            let p = op.permuted(&order).map_err(|_| Error::LayoutMismatch(format!("outcome `{l}` lives on other wires")))?;
            if p.layout != layout {
                return Err(Error::LayoutMismatch(format!("outcome `{l}` has different wire dims or roles")));
            }
            out.push((l, p.matrix));
        }
        Self::new(out, layout)
    }

    /// Binary tester {T0, T1}.
    pub fn binary(t0: ComplexMatrix, t1: ComplexMatrix, layout: WireLayout) -> Result<Self> {
        Self::new(vec![("0".into(), t0), ("1".into(), t1)], layout)
    }

    /// T = Σ T_i.
    pub fn operator(&self) -> ComplexMatrix {
        let d = self.layout.total_dim();
        self.outcomes.iter().fold(ComplexMatrix::zeros(d, d), |acc, (_, m)| &acc + m)
    }

    pub fn operator_comb(&self) -> Result<QuantumComb> {
        QuantumComb::from_choi(ChoiOp::unchecked(self.operator(), self.layout.clone(), OpKind::CombTooth)?)
    }

    /// Outcome operators re-ordered to the wire order of `comb_layout`.
    pub fn aligned_to(&self, comb_layout: &WireLayout) -> Result<Vec<ComplexMatrix>> {
        check_dual(&self.layout, comb_layout)?;
        let order = comb_layout.labels();
        self.outcomes.iter().map(|(_, m)| Ok(crate::tensor::permute(m, &self.layout, &order)?.0)).collect()
    }
}

fn check_dual(tester: &WireLayout, comb: &WireLayout) -> Result<()> {
    if tester.len() != comb.len() {
        return Err(Error::LayoutMismatch(format!("tester wires {:?} vs comb wires {:?}", tester.labels(), comb.labels())));
    }
    for w in comb.wires() {
        let tw = tester.wire(&w.label).map_err(|_| Error::LayoutMismatch(format!("tester lacks wire `{}`", w.label)))?;
        if tw.dim != w.dim {
            return Err(Error::DimensionMismatch(format!("wire `{}`: tester dim {} vs comb dim {}", w.label, tw.dim, w.dim)));
        }
        if tw.role != w.role.exchanged() {
            return Err(Error::LayoutMismatch(format!("wire `{}` has role {:?} on both sides", w.label, w.role)));
        }
    }
    Ok(())
}

/// Dual layout of a comb layout: inputs and outputs exchanged.
pub fn tester_layout(comb_layout: &WireLayout) -> WireLayout {
    comb_layout.with_roles_exchanged()
}

pub fn validate_tester(t: &Tester) -> TesterReport {
    let mins: Vec<f64> = t.outcomes.iter().map(|(_, m)| m.min_eigenvalue()).collect();
    let total = t.operator();
    let comb =
        QuantumComb::from_choi(ChoiOp { matrix: total.clone(), layout: t.layout.clone(), kind: OpKind::CombTooth }).expect("tester layout is consistent");
    let norm = validate_deterministic(&comb, TOL_NORM);
    let d_in: usize = t.layout.wires().iter().filter(|w| w.role == Role::Input).map(|w| w.dim).product();
    let trace_deviation = total.trace().re - d_in as f64;
    let normalized = norm.accepted && mins.iter().all(|&m| m >= -TOL_PSD);
    TesterReport { normalized, outcome_min_eigenvalues: mins, norm, trace_deviation }
}

/// p_i = Tr[T_i^τ R].
pub fn born(t: &Tester, r: &QuantumComb) -> Result<Vec<f64>> {
    let aligned = t.aligned_to(r.layout())?;
    Ok(aligned.iter().map(|ti| pairing(ti, r.matrix())).collect())
}

#[derive(Debug, Clone)]
pub struct TesterDecomposition {
    /// Rank-one tester with ancilla H_B ≅ Supp(T).
    pub ttilde: DilatedComb,
    /// POVM on H_B, in the ancilla basis of `ttilde`.
    pub povm: Vec<ComplexMatrix>,
}

pub fn decompose_tester(t: &Tester) -> Result<TesterDecomposition> {
    let total = t.operator();
    if total.max_abs() == 0.0 {
        return Err(Error::ZeroTester);
    }
    let comb = t.operator_comb()?;
    let ttilde = dilate_comb(&comb)?;
    let (vals, vecs) = comb.matrix().eigh();
    let top = vals.last().copied().unwrap_or(0.0);
    let keep: Vec<usize> = (0..vals.len()).filter(|&k| vals[k] > REL_RANK_TOL * top).collect();
    // P_i = V† T^{-1/2} T_i T^{-1/2} V restricted to the kept eigenvectors
    let db = keep.len();
    let v = ComplexMatrix::from_fn(vals.len(), db, |x, b| vecs.get(x, keep[b]) / vals[keep[b]].sqrt());
    let order = comb.layout().labels();
    let mut povm = Vec::new();
    for (_, ti) in &t.outcomes {
        let (ti, _) = crate::tensor::permute(ti, &t.layout, &order)?;
        povm.push(&(&v.adjoint() * &ti) * &v);
    }
    Ok(TesterDecomposition { ttilde, povm })
}

/// Statistics of a decomposed tester: p_i = P_i * (T̃ * R).
pub fn decomposed_born(dec: &TesterDecomposition, r: &QuantumComb) -> Result<Vec<f64>> {
    let rho = ancilla_state(&dec.ttilde, r)?;
    Ok(dec.povm.iter().map(|p| pairing(p, &rho)).collect())
}

/// T̃ * R, an operator on the tester's ancilla.
pub fn ancilla_state(ttilde: &DilatedComb, r: &QuantumComb) -> Result<ComplexMatrix> {
    let mut order = r.layout().labels();
    order.push(ttilde.ancilla.clone());
    let psi = crate::tensor::permute_vector(&ttilde.psi, ttilde.comb.layout(), &order)?;
    let db = ttilde.ancilla_dim();
    let m = ComplexMatrix::from_row_major(psi.len() / db, db, &psi)?;
    // ρ[b,b'] = Σ_{x,x'} ψ[x,b] ψ*[x',b'] R[x,x']
    Ok(&(&m.transpose() * r.matrix()) * &m.conj())
}

/// Random normalized tester for combs with teeth (dims[k].0 → dims[k].1):
/// a state preparation, channels with memory and a final POVM.
pub fn random_tester(rng: &mut impl Rng, dims: &[(usize, usize)], mem: usize, n_outcomes: usize) -> Result<Tester> {
    let n = dims.len();
    let mut ops = Vec::new();
    let mut memory = Vec::new();
    for k in 0..n {
        // tooth k of the tester: receives h{2k-1} (k > 0), emits h{2k}
        let mut wires = vec![Wire::new(format!("h{}", 2 * k), dims[k].0, Role::Output)];
        wires.push(Wire::new(format!("t{k}"), mem, Role::Output));
        let mut d_in = 1;
        if k > 0 {
            wires.push(Wire::new(format!("h{}", 2 * k - 1), dims[k - 1].1, Role::Input));
            wires.push(Wire::new(format!("t{}", k - 1), mem, Role::Input));
            d_in = dims[k - 1].1 * mem;
        }
        let layout = WireLayout::new(wires)?;
        let d_out = dims[k].0 * mem;
        let op = if k == 0 {
            let rho = random_density(rng, d_out);
            ChoiOp::unchecked(rho, layout, OpKind::State)?
        } else {
            choi_from_kraus(&random_kraus(rng, d_out, d_in, 2), &layout)?
        };
        ops.push(op);
        memory.push(vec![format!("t{k}")]);
    }
    let last_in = WireLayout::new(vec![Wire::new(format!("h{}", 2 * n - 1), dims[n - 1].1, Role::Input), Wire::new(format!("t{}", n - 1), mem, Role::Input)])?;
    let d = dims[n - 1].1 * mem;
    let effects: Vec<ComplexMatrix> = random_kraus(rng, d, d, n_outcomes).iter().map(|k| &k.adjoint() * k).collect();
    let mut outcomes = Vec::new();
    let mut layout = None;
    for (i, p) in effects.iter().enumerate() {
        // Choi operator of ρ ↦ Tr[P ρ] is Pᵀ
        let eff = ChoiOp::unchecked(p.transpose(), last_in.clone(), OpKind::Operation)?;
        let mut seq = ops.clone();
        seq.push(eff);
        let comb = comb_from_sequence(&seq, &memory)?;
        layout = Some(comb.layout().clone());
        outcomes.push((i.to_string(), comb.op.matrix));
    }
    Tester::new(outcomes, layout.expect("at least one outcome"))
}

#[derive(Serialize, Deserialize)]
struct OutcomeRepr {
    label: String,
    op: ChoiOp,
}

#[derive(Serialize, Deserialize)]
struct TesterRepr {
    outcomes: Vec<OutcomeRepr>,
    #[serde(default)]
    normalized: Option<bool>,
}

impl Serialize for Tester {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TesterRepr {
            outcomes: self
                .outcomes
                .iter()
                .map(|(l, m)| OutcomeRepr { label: l.clone(), op: ChoiOp { matrix: m.clone(), layout: self.layout.clone(), kind: OpKind::CombTooth } })
                .collect(),
            normalized: Some(self.normalized),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Tester {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let r = TesterRepr::deserialize(d)?;
        let t = Tester::from_ops(r.outcomes.into_iter().map(|o| (o.label, o.op)).collect()).map_err(D::Error::custom)?;
        if r.normalized == Some(true) && !t.normalized {
            return Err(D::Error::custom("tester asserted normalized but fails the normalization check"));
        }
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::choi::identity_channel;
    use crate::comb::{dilate_comb_full, random_comb};
    use crate::random::seeded;

    fn state_comb(m: ComplexMatrix) -> QuantumComb {
        let d = m.rows();
        QuantumComb::from_choi(ChoiOp::state(m, WireLayout::of(&[("h0", d, Role::Output)]).unwrap()).unwrap()).unwrap()
    }

    fn measure_layout() -> WireLayout {
        WireLayout::of(&[("h0", 2, Role::Input)]).unwrap()
    }

    fn computational() -> Tester {
        Tester::binary(ComplexMatrix::diag(&[1.0, 0.0]), ComplexMatrix::diag(&[0.0, 1.0]), measure_layout()).unwrap()
    }

    #[test]
    fn povm_tester_is_normalized() {
        let t = computational();
        assert!(t.normalized);
        assert!(t.operator().max_abs_diff(&ComplexMatrix::identity(2)) < 1e-15);
        let half = Tester::binary(ComplexMatrix::diag(&[0.5, 0.0]), ComplexMatrix::diag(&[0.0, 0.5]), measure_layout()).unwrap();
        let rep = validate_tester(&half);
        assert!(!rep.normalized);
        assert!((rep.trace_deviation + 1.0).abs() < 1e-14);
    }

    #[test]
    fn random_testers_are_normalized() {
        let mut rng = seeded(41);
        for _ in 0..5 {
            let t = random_tester(&mut rng, &[(2, 2), (2, 2)], 2, 3).unwrap();
            let rep = validate_tester(&t);
            assert!(rep.normalized && rep.norm.max_deviation() < 1e-10, "{:?}", rep.norm);
        }
    }

    #[test]
    fn born_examples() {
        let p = born(&computational(), &state_comb(ComplexMatrix::identity(2).scale(0.5))).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);

        let mut rng = seeded(42);
        for _ in 0..10 {
            let r = random_comb(&mut rng, &[(2, 3), (2, 2)], 2, 2).unwrap();
            let t = random_tester(&mut rng, &[(2, 3), (2, 2)], 2, 4).unwrap();
            let p = born(&t, &r).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            assert!(p.iter().all(|&x| x >= -TOL_PSD));
        }
    }

    #[test]
    fn identity_versus_flip_tester() {
        // feed |0⟩ into h0, measure h1 in the computational basis
        let lay = WireLayout::of(&[("h0", 2, Role::Output), ("h1", 2, Role::Input)]).unwrap();
        let z0 = ComplexMatrix::diag(&[1.0, 0.0]);
        let z1 = ComplexMatrix::diag(&[0.0, 1.0]);
        let t = Tester::binary(z0.kron(&z0), z0.kron(&z1), lay).unwrap();
        assert!(t.normalized);
        let id = QuantumComb::single_tooth(identity_channel("h1", "h0", 2).unwrap()).unwrap();
        let p = born(&t, &id).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-15 && p[1].abs() < 1e-15);
    }

    #[test]
    fn layout_mismatch_is_rejected() {
        let r = state_comb(ComplexMatrix::identity(3).scale(1.0 / 3.0));
        assert!(born(&computational(), &r).is_err());
    }

    #[test]
    fn decomposition_reproduces_statistics() {
        let mut rng = seeded(43);
        for _ in 0..20 {
            let r = random_comb(&mut rng, &[(2, 2), (2, 2)], 2, 2).unwrap();
            let t = random_tester(&mut rng, &[(2, 2), (2, 2)], 2, 3).unwrap();
            let dec = decompose_tester(&t).unwrap();
            let p = born(&t, &r).unwrap();
            let q = decomposed_born(&dec, &r).unwrap();
            for (a, b) in p.iter().zip(&q) {
                assert!((a - b).abs() < 1e-10);
            }
            let sum = dec.povm.iter().fold(ComplexMatrix::zeros(dec.povm[0].rows(), dec.povm[0].rows()), |a, p| &a + p);
            assert!(sum.max_abs_diff(&ComplexMatrix::identity(sum.rows())) < 1e-8);
        }
    }

    #[test]
    fn single_outcome_gives_support_projector() {
        let t = Tester::new(vec![("only".into(), ComplexMatrix::identity(2))], measure_layout()).unwrap();
        let dec = decompose_tester(&t).unwrap();
        assert!(dec.povm[0].max_abs_diff(&ComplexMatrix::identity(2)) < 1e-12);
        let zero = Tester::new(vec![("z".into(), ComplexMatrix::zeros(2, 2))], measure_layout()).unwrap();
        assert!(matches!(decompose_tester(&zero), Err(Error::ZeroTester)));
    }

    #[test]
    fn sqrt_identity_holds() {
        // T̃ * R = [Tᵀ]^{1/2} R [Tᵀ]^{1/2} for the full dilation
        let mut rng = seeded(44);
        for _ in 0..10 {
            let r = random_comb(&mut rng, &[(2, 2)], 1, 2).unwrap();
            let t = random_tester(&mut rng, &[(2, 2)], 2, 2).unwrap();
            let full = dilate_comb_full(&t.operator_comb().unwrap(), "B").unwrap();
            let lhs = ancilla_state(&full, &r).unwrap();
            let top = crate::tensor::permute(&t.operator(), &t.layout, &r.layout().labels()).unwrap().0;
            let s = crate::tensor::psd_sqrt(&top.transpose(), TOL_PSD).unwrap();
            let rhs = &(&s * r.matrix()) * &s;
            assert!(lhs.max_abs_diff(&rhs) < 1e-10);
        }
    }

    #[test]
    fn json_round_trip_reverifies() {
        let t = computational();
        let s = serde_json::to_string(&t).unwrap();
        let back: Tester = serde_json::from_str(&s).unwrap();
        assert!(back.normalized);
        let bad = s.replace("[1.0,0.0]", "[0.5,0.0]");
        assert!(serde_json::from_str::<Tester>(&bad).is_err());
    }
}
