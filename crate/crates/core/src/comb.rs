//! Quantum combs: sequences, the recursive normalization check,
//! probabilistic combs and dilations.

use num_complex::Complex64 as C64;
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::choi::{choi_from_kraus, link, ChoiOp, OpKind, TOL_NORM};
use crate::error::{Error, Result};
use crate::random::random_kraus;
use crate::tensor::{partial_trace, polar_partial_isometry, ComplexMatrix, Role, Wire, WireLayout, REL_RANK_TOL, TOL_PSD};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tooth {
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

/// Splits a layout into teeth by role: a tooth starts at the first input
/// that follows a non-input wire. Either side of a tooth may be empty.
pub fn teeth_from_roles(layout: &WireLayout) -> Vec<Tooth> {
    let mut teeth: Vec<Tooth> = Vec::new();
    let mut prev_out = true;
    for w in layout.wires() {
        if w.role == Role::Input {
            if prev_out || teeth.is_empty() {
                teeth.push(Tooth { inputs: Vec::new(), outputs: Vec::new() });
            }
            teeth.last_mut().unwrap().inputs.push(w.label.clone());
            prev_out = false;
        } else {
            if teeth.is_empty() {
                teeth.push(Tooth { inputs: Vec::new(), outputs: Vec::new() });
            }
            teeth.last_mut().unwrap().outputs.push(w.label.clone());
            prev_out = true;
        }
    }
    teeth
}

pub fn canonical_order(teeth: &[Tooth]) -> Vec<String> {
    teeth.iter().flat_map(|t| t.inputs.iter().chain(t.outputs.iter()).cloned()).collect()
}

/// Choi operator with teeth; the layout is always in tooth order.
#[derive(Debug, Clone)]
pub struct QuantumComb {
    pub op: ChoiOp,
    pub teeth: Vec<Tooth>,
    pub deterministic: bool,
}

#[derive(Serialize, Deserialize)]
struct CombRepr {
    op: ChoiOp,
    teeth: usize,
    #[serde(default)]
    deterministic: bool,
}

impl Serialize for QuantumComb {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        CombRepr { op: self.op.clone(), teeth: self.teeth.len(), deterministic: self.deterministic }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for QuantumComb {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let r = CombRepr::deserialize(d)?;
        let comb = QuantumComb::from_choi(r.op).map_err(D::Error::custom)?;
        if comb.teeth.len() != r.teeth {
            return Err(D::Error::custom(format!("declared {} teeth, wire roles give {}", r.teeth, comb.teeth.len())));
        }
        Ok(QuantumComb { deterministic: r.deterministic, ..comb })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelDeviation {
    pub level: usize,
    pub deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NormReport {
    pub accepted: bool,
    pub psd: bool,
    pub min_eigenvalue: f64,
    /// Deviations for k = N … 1.
    pub levels: Vec<LevelDeviation>,
}

impl NormReport {
    pub fn max_deviation(&self) -> f64 {
        self.levels.iter().map(|l| l.deviation).fold(0.0, f64::max)
    }

    pub fn first_failing_level(&self, tol: f64) -> Option<usize> {
        self.levels.iter().find(|l| l.deviation > tol).map(|l| l.level)
    }
}

impl QuantumComb {
    /// Wraps `op` with explicit teeth; the operator is permuted into tooth order.
    pub fn new(op: ChoiOp, teeth: Vec<Tooth>) -> Result<Self> {
        let order = canonical_order(&teeth);
        let mut sorted = order.clone();
        sorted.sort();
        let mut have = op.layout.labels();
        have.sort();
        if sorted != have {
            return Err(Error::LayoutMismatch(format!("teeth cover {order:?}, operator has {:?}", op.layout.labels())));
        }
        let op = op.permuted(&order)?;
        Ok(Self { op: ChoiOp { kind: OpKind::CombTooth, ..op }, teeth, deterministic: false })
    }

    /// One tooth from all inputs to all other wires, whatever the wire order.
    pub fn single_tooth(op: ChoiOp) -> Result<Self> {
        let teeth = vec![Tooth { inputs: op.input_labels(), outputs: op.output_labels() }];
        Self::new(op, teeth)
    }

    /// Teeth read off the layout roles; the wire order must be causal.
    pub fn from_choi(op: ChoiOp) -> Result<Self> {
        let teeth = teeth_from_roles(&op.layout);
        Self::new(op, teeth)
    }

    /// Validates and sets the deterministic flag.
    pub fn validated(mut self, tol_norm: f64) -> Self {
        self.deterministic = validate_deterministic(&self, tol_norm).accepted;
        self
    }

    pub fn layout(&self) -> &WireLayout {
        &self.op.layout
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.op.matrix
    }

    pub fn n_teeth(&self) -> usize {
        self.teeth.len()
    }

    pub fn input_labels(&self) -> Vec<String> {
        self.teeth.iter().flat_map(|t| t.inputs.clone()).collect()
    }

    pub fn output_labels(&self) -> Vec<String> {
        self.teeth.iter().flat_map(|t| t.outputs.clone()).collect()
    }

    pub fn with_matrix(&self, m: ComplexMatrix) -> Result<Self> {
        Ok(Self { op: ChoiOp::unchecked(m, self.op.layout.clone(), self.op.kind)?, teeth: self.teeth.clone(), deterministic: false })
    }
}

/// Checks Tr_{out_k} R^{(k)} = R^{(k−1)} ⊗ I_{in_k} for k = N … 1, with R^{(0)} = 1.
pub fn validate_deterministic(r: &QuantumComb, tol_norm: f64) -> NormReport {
    let min = r.op.matrix.min_eigenvalue();
    let psd = min >= -TOL_PSD;
    let mut levels = Vec::new();
    let mut cur = r.op.matrix.clone();
    let mut lay = r.op.layout.clone();
    for k in (1..=r.teeth.len()).rev() {
        let t = &r.teeth[k - 1];
        let (m, ml) = partial_trace(&cur, &lay, &t.outputs).expect("tooth labels are in the layout");
        let d_in = ml.dim_of(&t.inputs).expect("tooth labels are in the layout");
        let (prev, pl) = partial_trace(&m, &ml, &t.inputs).expect("tooth labels are in the layout");
        let prev = if k == 1 { ComplexMatrix::identity(1) } else { prev.scale(1.0 / d_in as f64) };
        let expected = prev.kron(&ComplexMatrix::identity(d_in));
        levels.push(LevelDeviation { level: k, deviation: m.max_abs_diff(&expected) });
        cur = prev;
        lay = pl;
    }
    let accepted = psd && levels.iter().all(|l| l.deviation <= tol_norm);
    NormReport { accepted, psd, min_eigenvalue: min, levels }
}

/// Links a sequence of operations. `memory[k]` lists the wires passed from
/// operation k to operation k+1.
pub fn comb_from_sequence(ops: &[ChoiOp], memory: &[Vec<String>]) -> Result<QuantumComb> {
    if ops.is_empty() {
        return Err(Error::InvalidInput("empty operation sequence".into()));
    }
    if memory.len() + 1 != ops.len() {
        return Err(Error::MemoryMismatch(format!("{} operations need {} memory lists", ops.len(), ops.len() - 1)));
    }
    let mut teeth = Vec::new();
    for (k, op) in ops.iter().enumerate() {
        let mem_in: &[String] = if k == 0 { &[] } else { &memory[k - 1] };
        let mem_out: &[String] = memory.get(k).map_or(&[], |m| m.as_slice());
        for l in mem_in {
            if op.layout.wire(l).map(|w| w.role).ok() != Some(Role::Input) {
                return Err(Error::MemoryMismatch(format!("`{l}` is not an input of operation {k}")));
            }
        }
        for l in mem_out {
            if !op.layout.wire(l).map(|w| w.role.is_outgoing()).unwrap_or(false) {
                return Err(Error::MemoryMismatch(format!("`{l}` is not an output of operation {k}")));
            }
        }
        if k > 0 {
            let prev = &ops[k - 1];
            for l in op.layout.labels() {
                if prev.layout.contains(&l) && !mem_in.contains(&l) {
                    return Err(Error::MemoryMismatch(format!("operations {} and {k} share undeclared wire `{l}`", k - 1)));
                }
            }
        }
        teeth.push(Tooth {
            inputs: op.input_labels().into_iter().filter(|l| !mem_in.contains(l)).collect(),
            outputs: op.output_labels().into_iter().filter(|l| !mem_out.contains(l)).collect(),
        });
    }
    let mut acc = ops[0].clone();
    for k in 1..ops.len() {
        acc = link(&ops[k], &acc, &memory[k - 1])?;
    }
    Ok(QuantumComb::new(acc, teeth)?.validated(TOL_NORM))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbVerdict {
    pub accepted: bool,
    pub min_eigenvalue: f64,
}

/// Accepts iff witness − Rp ≥ 0; the witness must be deterministic.
pub fn check_probabilistic(rp: &QuantumComb, witness: &QuantumComb) -> Result<ProbVerdict> {
    if !witness.deterministic {
        return Err(Error::InvalidInput("witness comb is not validated as deterministic".into()));
    }
    let rp = rp.op.permuted(&witness.op.layout.labels()).map_err(|_| Error::LayoutMismatch("probabilistic comb and witness live on different wires".into()))?;
    if rp.layout.dims() != witness.op.layout.dims() {
        return Err(Error::LayoutMismatch("wire dimensions differ".into()));
    }
    let min = (&witness.op.matrix - &rp.matrix).min_eigenvalue();
    Ok(ProbVerdict { accepted: min >= -TOL_PSD, min_eigenvalue: min })
}

/// A rank-one comb whose marginal on the original wires is the dilated comb.
#[derive(Debug, Clone, Serialize)]
pub struct DilatedComb {
    pub comb: QuantumComb,
    pub ancilla: String,
    /// The vector |ψ⟩ with comb.op = |ψ⟩⟨ψ|, in the comb's layout order.
    pub psi: Vec<C64>,
}

impl DilatedComb {
    pub fn from_vector(base: &QuantumComb, ancilla: Wire, psi: Vec<C64>) -> Result<Self> {
        let mut wires = base.layout().wires().to_vec();
        let label = ancilla.label.clone();
        wires.push(ancilla);
        let layout = WireLayout::new(wires)?;
        let mut teeth = base.teeth.clone();
        if teeth.is_empty() {
            teeth.push(Tooth { inputs: vec![], outputs: vec![] });
        }
        teeth.last_mut().unwrap().outputs.push(label.clone());
        let op = ChoiOp::unchecked(ComplexMatrix::outer(&psi), layout, OpKind::CombTooth)?;
        let comb = QuantumComb { op, teeth, deterministic: base.deterministic };
        Ok(Self { comb, ancilla: label, psi })
    }

    /// Tr over the ancilla.
    pub fn marginal(&self) -> Result<ComplexMatrix> {
        Ok(self.comb.op.partial_trace(std::slice::from_ref(&self.ancilla))?.0)
    }

    pub fn ancilla_dim(&self) -> usize {
        self.comb.layout().wire(&self.ancilla).map(|w| w.dim).unwrap_or(1)
    }

    /// ψ reshaped as a (K × ancilla) matrix.
    pub fn coefficient_matrix(&self) -> ComplexMatrix {
        let da = self.ancilla_dim();
        ComplexMatrix::from_row_major(self.psi.len() / da, da, &self.psi).expect("shape from construction")
    }
}

pub fn fresh_label(layout: &WireLayout, base: &str) -> String {
    let mut l = base.to_string();
    while layout.contains(&l) {
        l.push('\'');
    }
    l
}

/// Canonical dilation with the ancilla compressed to the support of R.
pub fn dilate_comb(r: &QuantumComb) -> Result<DilatedComb> {
    dilate_comb_labeled(r, &fresh_label(r.layout(), "A"))
}

pub fn dilate_comb_labeled(r: &QuantumComb, ancilla: &str) -> Result<DilatedComb> {
    let (vals, vecs) = r.op.matrix.eigh();
    let min = vals.first().copied().unwrap_or(0.0);
    if min < -TOL_PSD {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    let top = vals.last().copied().unwrap_or(0.0);
    let keep: Vec<usize> = (0..vals.len()).filter(|&k| top > 0.0 && vals[k] > REL_RANK_TOL * top).collect();
    let da = keep.len().max(1);
    let d = vals.len();
    let mut psi = vec![C64::default(); d * da];
    for (a, &k) in keep.iter().enumerate() {
        let s = vals[k].sqrt();
        for x in 0..d {
            psi[x * da + a] = vecs.get(x, k) * s;
        }
    }
    DilatedComb::from_vector(r, Wire::new(ancilla, da, Role::Ancilla), psi)
}

/// Dilation |R^{1/2}⟩⟩ = (R^{1/2} ⊗ I)|I⟩⟩ with an ancilla as large as K.
pub fn dilate_comb_full(r: &QuantumComb, ancilla: &str) -> Result<DilatedComb> {
    let s = crate::tensor::psd_sqrt(&r.op.matrix, TOL_PSD)?;
    let psi = crate::tensor::double_ket(&s);
    DilatedComb::from_vector(r, Wire::new(ancilla, s.rows(), Role::Ancilla), psi)
}

#[derive(Debug, Clone)]
pub struct Connection {
    /// Partial isometry from Ra's ancilla to Rb's ancilla.
    pub w: ComplexMatrix,
    /// Channel on the ancilla taking Ra to Rb.
    pub e: ChoiOp,
    /// Channel on the ancilla taking Rb to Ra.
    pub f: ChoiOp,
    pub e_kraus: Vec<ComplexMatrix>,
    pub f_kraus: Vec<ComplexMatrix>,
}

fn completion_kraus(w: &ComplexMatrix) -> Vec<ComplexMatrix> {
    // Kraus set {W} ∪ {|0⟩⟨q| : q in ker W}
    let d_in = w.cols();
    let proj = &w.adjoint() * w;
    let (vals, vecs) = proj.eigh();
    let mut out = vec![w.clone()];
    for k in 0..d_in {
        if vals[k] < 0.5 {
            let mut m = ComplexMatrix::zeros(w.rows(), d_in);
            for j in 0..d_in {
                m.set(0, j, vecs.get(j, k).conj());
            }
            out.push(m);
        }
    }
    out
}

fn ancilla_channel(kraus: &[ComplexMatrix], out: &Wire, inp: &Wire) -> Result<ChoiOp> {
    let in_label = if out.label == inp.label { format!("{}_in", inp.label) } else { inp.label.clone() };
    let layout = WireLayout::new(vec![Wire::new(out.label.clone(), out.dim, Role::Output), Wire::new(in_label, inp.dim, Role::Input)])?;
    choi_from_kraus(kraus, &layout)
}

/// Partial isometry W with (I⊗W)|ψa⟩ = |ψb⟩ and the two connecting channels.
pub fn connect_dilations(ra: &DilatedComb, rb: &DilatedComb) -> Result<Connection> {
    let mut base_a = ra.comb.layout().labels();
    base_a.retain(|l| l != &ra.ancilla);
    let mut order_b = base_a.clone();
    order_b.push(rb.ancilla.clone());
    let b_perm = crate::tensor::permute_vector(&rb.psi, rb.comb.layout(), &order_b).map_err(|_| Error::MarginalMismatch { deviation: f64::INFINITY })?;
    let ma = ra.coefficient_matrix();
    let db = rb.ancilla_dim();
    let mb = ComplexMatrix::from_row_major(b_perm.len() / db, db, &b_perm)?;
    if ma.rows() != mb.rows() {
        return Err(Error::MarginalMismatch { deviation: f64::INFINITY });
    }
    let dev = (&ma * &ma.adjoint()).max_abs_diff(&(&mb * &mb.adjoint()));
    if dev > TOL_NORM {
        return Err(Error::MarginalMismatch { deviation: dev });
    }
    // Ma Wᵀ = Mb with Wᵀ the polar isometry of Ma† Mb
    let wt = polar_partial_isometry(&(&ma.adjoint() * &mb), REL_RANK_TOL);
    let w = wt.transpose();
    let e_kraus = completion_kraus(&w);
    let f_kraus = completion_kraus(&w.adjoint());
    let wa = ra.comb.layout().wire(&ra.ancilla)?.clone();
    let wb = rb.comb.layout().wire(&rb.ancilla)?.clone();
    let e = ancilla_channel(&e_kraus, &wb, &wa)?;
    let f = ancilla_channel(&f_kraus, &wa, &wb)?;
    Ok(Connection { w, e, f, e_kraus, f_kraus })
}

/// Applies Kraus operators on one wire of an operator, replacing that wire by `out`.
pub fn apply_on_wire(m: &ComplexMatrix, layout: &WireLayout, label: &str, kraus: &[ComplexMatrix], out: Wire) -> Result<(ComplexMatrix, WireLayout)> {
    let pos = layout.position(label)?;
    let d_in = layout.wires()[pos].dim;
    let pre: usize = layout.wires()[..pos].iter().map(|w| w.dim).product();
    let post: usize = layout.wires()[pos + 1..].iter().map(|w| w.dim).product();
    let (id_pre, id_post) = (ComplexMatrix::identity(pre), ComplexMatrix::identity(post));
    let mut acc = ComplexMatrix::zeros(pre * out.dim * post, pre * out.dim * post);
    for k in kraus {
        if k.cols() != d_in || k.rows() != out.dim {
            return Err(Error::DimensionMismatch(format!("Kraus {}x{} on wire of dim {d_in}", k.rows(), k.cols())));
        }
        let big = id_pre.kron(k).kron(&id_post);
        acc = &acc + &(&(&big * m) * &big.adjoint());
    }
    let mut wires = layout.wires().to_vec();
    wires[pos] = out;
    Ok((acc, WireLayout::new(wires)?))
}

/// Comb of `dims.len()` teeth built from random channels with memory.
/// Tooth k maps wire h{2k} (dim dims[k].0) to h{2k+1} (dim dims[k].1).
pub fn random_comb(rng: &mut impl Rng, dims: &[(usize, usize)], mem: usize, n_kraus: usize) -> Result<QuantumComb> {
    let n = dims.len();
    let mut ops = Vec::new();
    let mut memory = Vec::new();
    for (k, &(di, dout)) in dims.iter().enumerate() {
        let mut wires = vec![Wire::new(format!("h{}", 2 * k + 1), dout, Role::Output)];
        if k + 1 < n {
            wires.push(Wire::new(format!("m{k}"), mem, Role::Output));
        }
        wires.push(Wire::new(format!("h{}", 2 * k), di, Role::Input));
        if k > 0 {
            wires.push(Wire::new(format!("m{}", k - 1), mem, Role::Input));
        }
        let layout = WireLayout::new(wires)?;
        let d_out = dout * if k + 1 < n { mem } else { 1 };
        let d_in = di * if k > 0 { mem } else { 1 };
        ops.push(choi_from_kraus(&random_kraus(rng, d_out, d_in, n_kraus), &layout)?);
        if k + 1 < n {
            memory.push(vec![format!("m{k}")]);
        }
    }
    comb_from_sequence(&ops, &memory)
}

/// Random deterministic comb on an arbitrary causal layout, built from
/// channels with a memory of dimension `mem` between teeth.
pub fn random_comb_on(rng: &mut impl Rng, layout: &WireLayout, mem: usize) -> Result<QuantumComb> {
    let teeth = teeth_from_roles(layout);
    let n = teeth.len();
    let mut ops = Vec::new();
    let mut memory = Vec::new();
    for (k, t) in teeth.iter().enumerate() {
        let mut wires: Vec<Wire> = Vec::new();
        for l in &t.outputs {
            wires.push(Wire { role: Role::Output, ..layout.wire(l)?.clone() });
        }
        if k + 1 < n {
            wires.push(Wire::new(format!("__mem{k}"), mem, Role::Output));
        }
        for l in &t.inputs {
            wires.push(layout.wire(l)?.clone());
        }
        if k > 0 {
            wires.push(Wire::new(format!("__mem{}", k - 1), mem, Role::Input));
        }
        let lay = WireLayout::new(wires)?;
        let d_in = lay.dim_of(&crate::choi::labels_with(&lay, |r| r == Role::Input))?;
        let d_out = lay.total_dim() / d_in;
        let n_kraus = 2usize.max(d_in.div_ceil(d_out));
        ops.push(choi_from_kraus(&random_kraus(rng, d_out, d_in, n_kraus), &lay)?);
        if k + 1 < n {
            memory.push(vec![format!("__mem{k}")]);
        }
    }
    let c = comb_from_sequence(&ops, &memory)?;
    let op = c.op.permuted(&layout.labels())?;
    Ok(QuantumComb { op: ChoiOp { layout: layout.clone(), ..op }, teeth, deterministic: c.deterministic })
}
