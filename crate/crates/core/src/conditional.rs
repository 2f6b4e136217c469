//! History-indexed families of probabilistic combs.
//!
//! Wire j (0-based) carries H_{s_j}; even wires are inputs, odd wires are
//! outputs, and symbol i_j accompanies wire j. A member R_s is stored for
//! every full-length history s = i_0 … i_{2N−1}.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::choi::{ChoiOp, OpKind, TOL_NORM};
use crate::comb::{dilate_comb_labeled, fresh_label, QuantumComb};
use crate::error::{Error, Result};
use crate::tensor::{partial_trace, ComplexMatrix, Role, Wire, WireLayout, DEFAULT_DIM_CAP, TOL_PSD};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct History(pub Vec<usize>);

impl History {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn prefix(&self, l: usize) -> History {
        History(self.0[..l].to_vec())
    }

    pub fn push(&self, i: usize) -> History {
        let mut v = self.0.clone();
        v.push(i);
        History(v)
    }
}

impl fmt::Display for History {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|i| i.to_string()).collect();
        f.write_str(&parts.join("."))
    }
}

impl FromStr for History {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s.is_empty() {
            return Ok(History::default());
        }
        s.split('.')
            .map(|p| p.parse::<usize>().map_err(|_| Error::InvalidInput(format!("bad history symbol `{p}` in `{s}`"))))
            .collect::<Result<Vec<_>>>()
            .map(History)
    }
}

impl Serialize for History {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for History {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Every string over the given per-step alphabet sizes, in lexicographic order.
pub fn all_histories(alphabets: &[usize]) -> Vec<History> {
    let mut out = vec![History::default()];
    for &a in alphabets {
        out = out.iter().flat_map(|h| (0..a).map(move |i| h.push(i))).collect();
    }
    out
}

#[derive(Debug, Clone)]
pub struct ConditionalComb {
    pub alphabets: Vec<usize>,
    pub labels: Vec<String>,
    pub table: BTreeMap<History, QuantumComb>,
}

fn role_at(j: usize) -> Role {
    if j.is_multiple_of(2) {
        Role::Input
    } else {
        Role::Output
    }
}

fn layout_for(labels: &[String], dims: &[usize]) -> Result<WireLayout> {
    WireLayout::new(dims.iter().enumerate().map(|(j, &d)| Wire::new(labels[j].clone(), d, role_at(j))).collect())
}

impl ConditionalComb {
    /// Members are given as operators on wires `labels` in that order.
    pub fn new(alphabets: Vec<usize>, labels: Vec<String>, members: BTreeMap<History, (Vec<usize>, ComplexMatrix)>) -> Result<Self> {
        let mut table = BTreeMap::new();
        for (h, (dims, m)) in members {
            let lay = layout_for(&labels, &dims)?;
            let op = ChoiOp::unchecked(m, lay, OpKind::CombTooth)?;
            table.insert(h, QuantumComb::from_choi(op)?);
        }
        let cc = Self { alphabets, labels, table };
        cc.check_shape()?;
        Ok(cc)
    }

    pub fn from_combs(alphabets: Vec<usize>, table: BTreeMap<History, QuantumComb>) -> Result<Self> {
        let first = table.values().next().ok_or_else(|| Error::InvalidInput("empty conditional comb".into()))?;
        let labels = first.layout().labels();
        let mut fixed = BTreeMap::new();
        for (h, c) in table {
            let op = c.op.permuted(&labels)?;
            fixed.insert(h, QuantumComb::from_choi(ChoiOp { kind: OpKind::CombTooth, ..op })?);
        }
        let cc = Self { alphabets, labels, table: fixed };
        cc.check_shape()?;
        Ok(cc)
    }

    pub fn n_rounds(&self) -> usize {
        self.labels.len() / 2
    }

    pub fn member(&self, h: &History) -> Result<&QuantumComb> {
        self.table.get(h).ok_or_else(|| Error::UnknownLabel(format!("history {h}")))
    }

    /// Dims of the member wires along history `h`.
    pub fn dims(&self, h: &History) -> Result<Vec<usize>> {
        Ok(self.member(h)?.layout().dims())
    }

    /// dim H_{s_j} for a prefix s_j of length j + 1.
    pub fn wire_dim(&self, prefix: &History) -> Result<usize> {
        let j = prefix.len() - 1;
        let h = self.table.keys().find(|k| k.0.starts_with(&prefix.0)).ok_or_else(|| Error::UnknownLabel(format!("history prefix {prefix}")))?;
        Ok(self.table[h].layout().dims()[j])
    }

    fn check_shape(&self) -> Result<()> {
        if self.labels.len() != self.alphabets.len() || !self.labels.len().is_multiple_of(2) {
            return Err(Error::InvalidInput(format!("{} wires for {} alphabets; need an even count of both", self.labels.len(), self.alphabets.len())));
        }
        let all = all_histories(&self.alphabets);
        if all.len() != self.table.len() {
            return Err(Error::InvalidInput(format!("{} histories stored, {} expected", self.table.len(), all.len())));
        }
        let mut seen: BTreeMap<History, usize> = BTreeMap::new();
        for h in &all {
            let c = self.member(h)?;
            if c.layout().labels() != self.labels {
                return Err(Error::LayoutMismatch(format!("history {h} has wires {:?}", c.layout().labels())));
            }
            for (j, w) in c.layout().wires().iter().enumerate() {
                if w.role != role_at(j) {
                    return Err(Error::LayoutMismatch(format!("wire `{}` must be an {:?}", w.label, role_at(j))));
                }
                let p = h.prefix(j + 1);
                match seen.get(&p) {
                    Some(&d) if d != w.dim => {
                        return Err(Error::DimensionMismatch(format!("wire `{}` after prefix {p}: dims {d} and {}", w.label, w.dim)));
                    }
                    _ => {
                        seen.insert(p, w.dim);
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PrefixDeviation {
    pub level: usize,
    pub prefix: History,
    pub deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionalReport {
    pub accepted: bool,
    pub psd: bool,
    pub min_eigenvalue: f64,
    pub levels: Vec<PrefixDeviation>,
}

impl ConditionalReport {
    pub fn max_deviation(&self) -> f64 {
        self.levels.iter().map(|l| l.deviation).fold(0.0, f64::max)
    }

    pub fn first_failing(&self, tol: f64) -> Option<&PrefixDeviation> {
        self.levels.iter().find(|l| l.deviation > tol)
    }
}

/// Per level k = N … 1: marginal families R^{(k−1)} keyed by prefixes of
/// length 2k − 2, and the deviation at each prefix of length 2k − 1.
struct Hierarchy {
    families: Vec<BTreeMap<History, ComplexMatrix>>,
    deviations: Vec<PrefixDeviation>,
}

fn hierarchy(cc: &ConditionalComb) -> Result<Hierarchy> {
    let n = cc.n_rounds();
    let mut families = vec![BTreeMap::new(); n + 1];
    families[n] = cc.table.iter().map(|(h, c)| (h.clone(), c.matrix().clone())).collect();
    let mut deviations = Vec::new();
    let layout_of = |h: &History| -> Result<WireLayout> {
        let dims: Vec<usize> = (0..h.len()).map(|j| cc.wire_dim(&h.prefix(j + 1))).collect::<Result<_>>()?;
        layout_for(&cc.labels, &dims)
    };
    for k in (1..=n).rev() {
        // Q_{s_{2k-2}} = Σ_{i_{2k-1}} Tr_{2k-1} R^{(k)}
        let mut q: BTreeMap<History, ComplexMatrix> = BTreeMap::new();
        for (h, m) in &families[k] {
            let lay = layout_of(h)?;
            let (t, _) = partial_trace(m, &lay, &[cc.labels[2 * k - 1].clone()])?;
            let p = h.prefix(2 * k - 1);
            let acc = q.remove(&p).unwrap_or_else(|| ComplexMatrix::zeros(t.rows(), t.cols()));
            q.insert(p, &acc + &t);
        }
        // R^{(k-1)}: average of Tr_{2k-2} Q / d over i_{2k-2}
        let mut lower: BTreeMap<History, (ComplexMatrix, usize)> = BTreeMap::new();
        for (p, m) in &q {
            let d = cc.wire_dim(p)?;
            let (t, _) = partial_trace(m, &layout_of(p)?, &[cc.labels[2 * k - 2].clone()])?;
            let key = p.prefix(2 * k - 2);
            let (acc, cnt) = lower.remove(&key).unwrap_or_else(|| (ComplexMatrix::zeros(t.rows(), t.cols()), 0));
            lower.insert(key, (&acc + &t.scale(1.0 / d as f64), cnt + 1));
        }
        let lower: BTreeMap<History, ComplexMatrix> =
            lower.into_iter().map(|(h, (m, cnt))| (h, if k == 1 { ComplexMatrix::identity(1) } else { m.scale(1.0 / cnt as f64) })).collect();
        for (p, m) in &q {
            let d = cc.wire_dim(p)?;
            let target = lower[&p.prefix(2 * k - 2)].kron(&ComplexMatrix::identity(d));
            deviations.push(PrefixDeviation { level: k, prefix: p.clone(), deviation: m.max_abs_diff(&target) });
        }
        families[k - 1] = lower;
    }
    Ok(Hierarchy { families, deviations })
}

/// R^{(k)} for k = 0 … N, keyed by prefixes of length 2k.
pub(crate) fn marginal_families(cc: &ConditionalComb) -> Result<Vec<BTreeMap<History, ComplexMatrix>>> {
    Ok(hierarchy(cc)?.families)
}

pub fn validate_conditional(cc: &ConditionalComb, tol: f64) -> Result<ConditionalReport> {
    let min = cc.table.values().map(|c| c.matrix().min_eigenvalue()).fold(f64::INFINITY, f64::min);
    let psd = min >= -TOL_PSD;
    let h = hierarchy(cc)?;
    let accepted = psd && h.deviations.iter().all(|d| d.deviation <= tol);
    Ok(ConditionalReport { accepted, psd, min_eigenvalue: min, levels: h.deviations })
}

fn pointer_label(l: &str) -> String {
    format!("{l}#")
}

/// Embedded wire j: a quantum register padded to the largest H_{s_j} and a
/// pointer register holding i_j.
struct Embedding {
    pad: Vec<usize>,
    alph: Vec<usize>,
}

impl Embedding {
    fn pair(&self, j: usize) -> usize {
        self.pad[j] * self.alph[j]
    }

    /// Flat embedded index of each basis index of a member along `h`.
    fn index_map(&self, dims: &[usize], h: &History) -> Vec<usize> {
        let mut out = vec![0usize];
        for (j, &d) in dims.iter().enumerate() {
            let mut next = Vec::with_capacity(out.len() * d);
            for &o in &out {
                for x in 0..d {
                    next.push(o * self.pair(j) + x * self.alph[j] + h.0[j]);
                }
            }
            out = next;
        }
        out
    }

    fn place(&self, m: &ComplexMatrix, dims: &[usize], h: &History, total: usize) -> ComplexMatrix {
        let map = self.index_map(dims, h);
        let mut out = ComplexMatrix::zeros(total, total);
        for (a, &ia) in map.iter().enumerate() {
            for (b, &ib) in map.iter().enumerate() {
                out.0[(ia, ib)] = m.get(a, b);
            }
        }
        out
    }
}

/// A single deterministic comb with pointer wires `label#` carrying the
/// classical symbols. Inputs outside the sector allowed by the history so far
/// are answered by discarding and preparing |0⟩ on every later output.
pub fn embed_classical(cc: &ConditionalComb) -> Result<QuantumComb> {
    embed_classical_capped(cc, DEFAULT_DIM_CAP)
}

pub fn embed_classical_capped(cc: &ConditionalComb, cap: usize) -> Result<QuantumComb> {
    let n = cc.labels.len();
    let mut pad = vec![1usize; n];
    for h in cc.table.keys() {
        for (j, d) in cc.dims(h)?.into_iter().enumerate() {
            pad[j] = pad[j].max(d);
        }
    }
    let emb = Embedding { pad, alph: cc.alphabets.clone() };
    let mut wires = Vec::new();
    for (j, l) in cc.labels.iter().enumerate() {
        wires.push(Wire::new(l.clone(), emb.pad[j], role_at(j)));
        wires.push(Wire::new(pointer_label(l), emb.alph[j], role_at(j)));
    }
    let layout = WireLayout::with_cap(wires, cap)?;
    let total = layout.total_dim();
    let hier = hierarchy(cc)?;
    let mut r = ComplexMatrix::zeros(total, total);
    for (h, c) in &cc.table {
        r = &r + &emb.place(c.matrix(), &c.layout().dims(), h, total);
    }
    // invalid input at wire 2k after history p (length 2k)
    for k in 0..cc.n_rounds() {
        for (p, m) in &hier.families[k] {
            let dims: Vec<usize> = (0..p.len()).map(|j| cc.wire_dim(&p.prefix(j + 1))).collect::<Result<_>>()?;
            let head_dim: usize = (0..2 * k).map(|j| emb.pair(j)).product();
            let mut term = emb.place(m, &dims, p, head_dim);
            let j = 2 * k;
            let invalid = ComplexMatrix::diag(
                &(0..emb.pair(j))
                    .map(|idx| {
                        let (x, i) = (idx / emb.alph[j], idx % emb.alph[j]);
                        let d = cc.wire_dim(&p.push(i)).unwrap_or(0);
                        if x >= d {
                            1.0
                        } else {
                            0.0
                        }
                    })
                    .collect::<Vec<_>>(),
            );
            term = term.kron(&invalid);
            for jj in j + 1..n {
                let f = if jj % 2 == 0 { ComplexMatrix::identity(emb.pair(jj)) } else { ComplexMatrix::unit(emb.pair(jj), 0, 0) };
                term = term.kron(&f);
            }
            r = &r + &term;
        }
    }
    let op = ChoiOp::unchecked(r, layout, OpKind::CombTooth)?;
    Ok(QuantumComb::from_choi(op)?.validated(TOL_NORM))
}

/// The member of `cc` along `h` read back from its embedding.
pub fn project_history(cc: &ConditionalComb, embedded: &QuantumComb, h: &History) -> Result<ComplexMatrix> {
    let mut pad = Vec::new();
    for l in &cc.labels {
        pad.push(embedded.layout().wire(l)?.dim);
    }
    let emb = Embedding { pad, alph: cc.alphabets.clone() };
    let map = emb.index_map(&cc.dims(h)?, h);
    let m = embedded.matrix();
    Ok(ComplexMatrix::from_fn(map.len(), map.len(), |a, b| m.get(map[a], map[b])))
}

/// Member-wise dilation; the ancilla of each member joins its last output wire.
pub fn dilate_conditional(cc: &ConditionalComb) -> Result<ConditionalComb> {
    let last = cc.labels.last().cloned().ok_or_else(|| Error::InvalidInput("conditional comb without wires".into()))?;
    let mut members = BTreeMap::new();
    for (h, c) in &cc.table {
        let anc = fresh_label(c.layout(), "A");
        let d = dilate_comb_labeled(c, &anc)?;
        let lay = d.comb.layout();
        let merged_dim = lay.dim_of(&[last.clone(), anc.clone()])?;
        let merged = lay.merge_adjacent(&[last.clone(), anc], Wire::new(last.clone(), merged_dim, Role::Output))?;
        members.insert(h.clone(), (merged.dims(), d.comb.matrix().clone()));
    }
    ConditionalComb::new(cc.alphabets.clone(), cc.labels.clone(), members)
}

#[derive(Serialize, Deserialize)]
struct MemberJson {
    dims: Vec<usize>,
    matrix: ComplexMatrix,
}

#[derive(Serialize, Deserialize)]
struct ConditionalJson {
    alphabets: Vec<usize>,
    labels: Vec<String>,
    members: BTreeMap<History, MemberJson>,
}

impl Serialize for ConditionalComb {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let members = self.table.iter().map(|(h, c)| (h.clone(), MemberJson { dims: c.layout().dims(), matrix: c.matrix().clone() })).collect();
        ConditionalJson { alphabets: self.alphabets.clone(), labels: self.labels.clone(), members }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ConditionalComb {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = ConditionalJson::deserialize(d)?;
        let members = j.members.into_iter().map(|(h, m)| (h, (m.dims, m.matrix))).collect();
        ConditionalComb::new(j.alphabets, j.labels, members).map_err(serde::de::Error::custom)
    }
}

/// Random conditional comb realized by conditional instruments with a
/// memory of dimension `mem`; `dim_of(prefix)` gives dim H_{s_j}.
pub fn random_conditional(rng: &mut impl rand::Rng, alphabets: &[usize], dim_of: impl Fn(&History) -> usize, mem: usize) -> Result<ConditionalComb> {
    use crate::choi::{choi_from_kraus, link};
    use crate::random::random_isometry;
    let n = alphabets.len() / 2;
    let labels: Vec<String> = (0..alphabets.len()).map(|j| format!("w{j}")).collect();
    let mem_label = |k: usize| format!("__m{k}");
    // instruments keyed by the history s_{2k} they condition on
    let mut instruments: BTreeMap<History, Vec<ChoiOp>> = BTreeMap::new();
    for k in 0..n {
        let prefixes: Vec<History> = all_histories(&alphabets[..2 * k + 1]);
        for p in prefixes {
            let d_in = dim_of(&p) * if k > 0 { mem } else { 1 };
            let m_out = if k + 1 < n { mem } else { 1 };
            let outs: Vec<usize> = (0..alphabets[2 * k + 1]).map(|i| dim_of(&p.push(i)) * m_out).collect();
            let rows: usize = outs.iter().sum();
            let env = d_in.div_ceil(rows).max(1) + 1;
            let v = random_isometry(rng, rows * env, d_in);
            let mut ops = Vec::new();
            let mut offset = 0;
            for (i, &dout) in outs.iter().enumerate() {
                let kraus: Vec<ComplexMatrix> = (0..env).map(|e| ComplexMatrix::from_fn(dout, d_in, |r, col| v.get(e * rows + offset + r, col))).collect();
                offset += dout;
                let mut wires = vec![Wire::new(labels[2 * k + 1].clone(), dim_of(&p.push(i)), Role::Output)];
                if k + 1 < n {
                    wires.push(Wire::new(mem_label(k), mem, Role::Output));
                }
                wires.push(Wire::new(labels[2 * k].clone(), dim_of(&p), Role::Input));
                if k > 0 {
                    wires.push(Wire::new(mem_label(k - 1), mem, Role::Input));
                }
                ops.push(choi_from_kraus(&kraus, &WireLayout::new(wires)?)?);
            }
            instruments.insert(p, ops);
        }
    }
    let mut table = BTreeMap::new();
    for h in all_histories(alphabets) {
        let mut acc = instruments[&h.prefix(1)][h.0[1]].clone();
        for k in 1..n {
            let next = &instruments[&h.prefix(2 * k + 1)][h.0[2 * k + 1]];
            acc = link(&acc, next, &[mem_label(k - 1)])?;
        }
        let op = acc.permuted(&labels)?;
        table.insert(h, QuantumComb::from_choi(ChoiOp { kind: OpKind::CombTooth, ..op })?);
    }
    let cc = ConditionalComb { alphabets: alphabets.to_vec(), labels, table };
    cc.check_shape()?;
    Ok(cc)
}
