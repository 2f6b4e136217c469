//! Choi operators and the link product.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{double_ket, partial_trace, permute, ComplexMatrix, Role, Wire, WireLayout, TOL_PSD};

pub const TOL_NORM: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OpKind {
    State,
    Operation,
    Channel,
    CombTooth,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChoiOp {
    pub matrix: ComplexMatrix,
    pub layout: WireLayout,
    pub kind: OpKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChannelVerdict {
    pub is_channel: bool,
    pub deviation: f64,
}

impl ChoiOp {
    /// Checked constructor: shape, positivity and, for channels, normalization.
    pub fn new(matrix: ComplexMatrix, layout: WireLayout, kind: OpKind) -> Result<Self> {
        let op = Self::unchecked(matrix, layout, kind)?;
        let min = op.matrix.min_eigenvalue();
        if min < -TOL_PSD || !op.matrix.is_hermitian(1e-9 * (1.0 + op.matrix.max_abs())) {
            return Err(Error::NotPsd { min_eigenvalue: min });
        }
        if kind == OpKind::Channel {
            let v = is_channel(&op)?;
            if !v.is_channel {
                return Err(Error::InvalidInput(format!("operator tagged channel deviates from trace preservation by {:.3e}", v.deviation)));
            }
        }
        Ok(op)
    }

    /// Only checks that the matrix fits the layout.
    pub fn unchecked(matrix: ComplexMatrix, layout: WireLayout, kind: OpKind) -> Result<Self> {
        let d = layout.total_dim();
        if matrix.rows() != d || matrix.cols() != d {
            return Err(Error::DimensionMismatch(format!("matrix {}x{} on layout of dimension {d}", matrix.rows(), matrix.cols())));
        }
        Ok(Self { matrix, layout, kind })
    }

    pub fn state(matrix: ComplexMatrix, layout: WireLayout) -> Result<Self> {
        Self::new(matrix, layout, OpKind::State)
    }

    pub fn input_labels(&self) -> Vec<String> {
        labels_with(&self.layout, |r| r == Role::Input)
    }

    pub fn output_labels(&self) -> Vec<String> {
        labels_with(&self.layout, |r| r != Role::Input)
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn partial_trace(&self, labels: &[String]) -> Result<(ComplexMatrix, WireLayout)> {
        partial_trace(&self.matrix, &self.layout, labels)
    }

    pub fn permuted(&self, order: &[String]) -> Result<Self> {
        let (m, l) = permute(&self.matrix, &self.layout, order)?;
        Ok(Self { matrix: m, layout: l, kind: self.kind })
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { matrix: self.matrix.scale(s), layout: self.layout.clone(), kind: self.kind }
    }
}

pub(crate) fn labels_with(layout: &WireLayout, pred: impl Fn(Role) -> bool) -> Vec<String> {
    layout.wires().iter().filter(|w| pred(w.role)).map(|w| w.label.clone()).collect()
}

/// Choi operator Σ_k |K_k⟩⟩⟨⟨K_k| for Kraus operators mapping the input
/// wires of `layout` to its remaining wires.
pub fn choi_from_kraus(kraus: &[ComplexMatrix], layout: &WireLayout) -> Result<ChoiOp> {
    let ins = labels_with(layout, |r| r == Role::Input);
    let outs = labels_with(layout, |r| r != Role::Input);
    let d_in = layout.dim_of(&ins)?;
    let d_out = layout.dim_of(&outs)?;
    if kraus.is_empty() {
        return Err(Error::InvalidInput("empty Kraus list".into()));
    }
    let mut sum = ComplexMatrix::zeros(d_in, d_in);
    let mut choi = ComplexMatrix::zeros(d_out * d_in, d_out * d_in);
    for k in kraus {
        if k.rows() != d_out || k.cols() != d_in {
            return Err(Error::DimensionMismatch(format!("Kraus operator {}x{}, layout needs {d_out}x{d_in}", k.rows(), k.cols())));
        }
        sum = &sum + &(&k.adjoint() * k);
        choi = &choi + &ComplexMatrix::outer(&double_ket(k));
    }
    let (vals, _) = sum.eigh();
    let top = vals.last().copied().unwrap_or(0.0);
    if top > 1.0 + TOL_NORM {
        return Err(Error::TraceIncreasing { excess: top - 1.0 });
    }
    let tp = sum.max_abs_diff(&ComplexMatrix::identity(d_in)) <= TOL_NORM;
    let kind = if ins.is_empty() {
        if tp {
            OpKind::State
        } else {
            OpKind::Operation
        }
    } else if tp {
        OpKind::Channel
    } else {
        OpKind::Operation
    };
    let canon: Vec<String> = outs.iter().chain(ins.iter()).cloned().collect();
    let canon_layout = layout.select(&canon)?;
    let (m, _) = permute(&choi, &canon_layout, &layout.labels())?;
    ChoiOp::unchecked(m, layout.clone(), kind)
}

/// 𝒞(ρ) = Tr_in[C (I ⊗ ρ^τ)], where ρ's wires feed C's input wires in order.
pub fn apply_channel(c: &ChoiOp, rho: &ChoiOp) -> Result<ChoiOp> {
    let ins = c.input_labels();
    let outs = c.output_labels();
    let in_dims: Vec<usize> = ins.iter().map(|l| c.layout.wire(l).map(|w| w.dim)).collect::<Result<_>>()?;
    if in_dims != rho.layout.dims() {
        return Err(Error::DimensionMismatch(format!("channel input dims {in_dims:?} vs state dims {:?}", rho.layout.dims())));
    }
    let order: Vec<String> = outs.iter().chain(ins.iter()).cloned().collect();
    let (cm, _) = permute(&c.matrix, &c.layout, &order)?;
    let d_in = rho.layout.total_dim();
    let d_out = c.layout.dim_of(&outs)?;
    let r = &rho.matrix;
    let out = ComplexMatrix::from_fn(d_out, d_out, |o, p| {
        let mut acc = num_complex::Complex64::default();
        for i in 0..d_in {
            for j in 0..d_in {
                acc += cm.get(o * d_in + i, p * d_in + j) * r.get(i, j);
            }
        }
        acc
    });
    let layout = c.layout.select(&outs)?;
    let layout = WireLayout::new(layout.wires().iter().map(|w| Wire { role: Role::Output, ..w.clone() }).collect())?;
    let kind = if (out.trace().re - 1.0).abs() <= TOL_NORM { OpKind::State } else { OpKind::Operation };
    ChoiOp::unchecked(out, layout, kind)
}

/// D*C = Tr_S[(D ⊗ I)(I ⊗ C^{τ_S})] over the shared labels S.
///
/// Each shared label must be an input on one side and an output (or
/// ancilla) on the other. Surviving wires: C's first, then D's.
pub fn link(d: &ChoiOp, c: &ChoiOp, shared: &[String]) -> Result<ChoiOp> {
    for s in shared {
        let wd = d.layout.wire(s)?;
        let wc = c.layout.wire(s)?;
        if wd.dim != wc.dim {
            return Err(Error::DimensionMismatch(format!("shared wire `{s}`: dims {} vs {}", wd.dim, wc.dim)));
        }
        let complementary = (wd.role == Role::Input && wc.role.is_outgoing())
            || (wc.role == Role::Input && wd.role.is_outgoing())
            || (wd.role == Role::ClassicalPointer && wc.role == Role::ClassicalPointer);
        if !complementary {
            return Err(Error::LayoutMismatch(format!("shared wire `{s}` has roles {:?} and {:?}", wd.role, wc.role)));
        }
    }
    let c_rest: Vec<String> = c.layout.labels().into_iter().filter(|l| !shared.contains(l)).collect();
    let d_rest: Vec<String> = d.layout.labels().into_iter().filter(|l| !shared.contains(l)).collect();
    if let Some(l) = c_rest.iter().find(|l| d_rest.contains(l)) {
        return Err(Error::LabelCollision(l.clone()));
    }
    let (cm, _) = permute(&c.matrix, &c.layout, &[c_rest.clone(), shared.to_vec()].concat())?;
    let (dm, _) = permute(&d.matrix, &d.layout, &[d_rest.clone(), shared.to_vec()].concat())?;
    let ds = c.layout.dim_of(shared)?;
    let dc = c.layout.dim_of(&c_rest)?;
    let dd = d.layout.dim_of(&d_rest)?;
    // result[(c,d),(c',d')] = Σ_{s,s'} D[(d,s),(d',s')] C[(c,s),(c',s')]
    let n = dc * dd;
    let mut out = ComplexMatrix::zeros(n, n);
    for ci in 0..dc {
        for cj in 0..dc {
            for di in 0..dd {
                for dj in 0..dd {
                    let mut acc = num_complex::Complex64::default();
                    for s in 0..ds {
                        for t in 0..ds {
                            acc += dm.get(di * ds + s, dj * ds + t) * cm.get(ci * ds + s, cj * ds + t);
                        }
                    }
                    out.set(ci * dd + di, cj * dd + dj, acc);
                }
            }
        }
    }
    let mut wires: Vec<Wire> = Vec::new();
    for l in &c_rest {
        wires.push(c.layout.wire(l)?.clone());
    }
    for l in &d_rest {
        wires.push(d.layout.wire(l)?.clone());
    }
    let layout = WireLayout::new(wires)?;
    let mut op = ChoiOp::unchecked(out, layout, OpKind::Operation)?;
    op.kind = infer_kind(&op)?;
    Ok(op)
}

fn infer_kind(op: &ChoiOp) -> Result<OpKind> {
    if op.input_labels().is_empty() {
        return Ok(if (op.trace() - 1.0).abs() <= TOL_NORM { OpKind::State } else { OpKind::Operation });
    }
    let roles: Vec<Role> = op.layout.wires().iter().map(|w| w.role).collect();
    // more than one input preceded by an output means several teeth
    let interleaved = roles.windows(2).any(|p| p[0] != Role::Input && p[1] == Role::Input) && roles.iter().filter(|&&r| r == Role::Input).count() > 1;
    if interleaved {
        return Ok(OpKind::CombTooth);
    }
    Ok(if is_channel(op)?.is_channel { OpKind::Channel } else { OpKind::Operation })
}

/// Checks Tr_out C = I_in.
pub fn is_channel(c: &ChoiOp) -> Result<ChannelVerdict> {
    let (m, _) = c.partial_trace(&c.output_labels())?;
    let dev = m.max_abs_diff(&ComplexMatrix::identity(m.rows()));
    Ok(ChannelVerdict { is_channel: dev <= TOL_NORM, deviation: dev })
}

/// Choi operator of the identity channel from wire `input` to wire `output`.
pub fn identity_channel(output: &str, input: &str, d: usize) -> Result<ChoiOp> {
    let layout = WireLayout::of(&[(output, d, Role::Output), (input, d, Role::Input)])?;
    choi_from_kraus(&[ComplexMatrix::identity(d)], &layout)
}
