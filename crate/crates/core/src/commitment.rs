//! Bit commitment: concealment, closeness at the opening, and the cheat.
//!
//! Alice's strategies are conditional combs whose wires alternate
//! Bob→Alice (input) and Alice→Bob (output); the last wire is Alice's
//! private ancilla at the end of the commitment. Everything before it is
//! the exchanged space K_s.

mod demos;

pub use demos::{demo, random_protocol, DEMO_NAMES};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::choi::{choi_from_kraus, is_channel, link, ChoiOp, OpKind};
use crate::comb::{apply_on_wire, connect_dilations, dilate_comb_full, dilate_comb_labeled, fresh_label, DilatedComb, QuantumComb};
use crate::conditional::{marginal_families, validate_conditional, ConditionalComb, ConditionalReport, History};
use crate::discrimination::{continuity_seesaw, disc_distance, TesterSet};
use crate::error::{Error, Result};
use crate::tensor::c;
use crate::tensor::{ComplexMatrix, Role, Wire, WireLayout};
use crate::tester::Tester;

pub const TOL_VERIFY: f64 = 1e-4;
const ZERO_MEMBER: f64 = 1e-14;

/// Bob's admissible testers, per history.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum BobSet {
    Unrestricted,
    Explicit { testers: BTreeMap<History, Vec<Tester>> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProtocolSpec {
    pub name: String,
    pub alice0: ConditionalComb,
    pub alice1: ConditionalComb,
    pub bob: BobSet,
}

impl ProtocolSpec {
    pub fn new(name: impl Into<String>, alice0: ConditionalComb, alice1: ConditionalComb, bob: BobSet) -> Result<Self> {
        let p = Self { name: name.into(), alice0, alice1, bob };
        p.check()?;
        Ok(p)
    }

    fn check(&self) -> Result<()> {
        if self.alice0.labels != self.alice1.labels || self.alice0.alphabets != self.alice1.alphabets {
            return Err(Error::LayoutMismatch("honest strategies use different interfaces".into()));
        }
        if self.alice0.alphabets.last() != Some(&1) {
            return Err(Error::InvalidInput("Alice's final move must be local (alphabet of size 1)".into()));
        }
        for h in self.alice0.table.keys() {
            if self.alice0.dims(h)? != self.alice1.dims(h)? {
                return Err(Error::DimensionMismatch(format!("history {h}: honest strategies have different wire dims")));
            }
        }
        Ok(())
    }

    pub fn ancilla(&self) -> &str {
        self.alice0.labels.last().expect("non-empty interface")
    }

    pub fn histories(&self) -> Vec<History> {
        self.alice0.table.keys().cloned().collect()
    }

    pub fn rounds(&self) -> usize {
        self.alice0.n_rounds()
    }

    pub fn validate(&self, tol: f64) -> Result<(ConditionalReport, ConditionalReport)> {
        Ok((validate_conditional(&self.alice0, tol)?, validate_conditional(&self.alice1, tol)?))
    }

    /// R_{i,s} = Tr_A[A_{i,s}].
    pub fn reduced(&self, bit: usize, h: &History) -> Result<QuantumComb> {
        let a = if bit == 0 { &self.alice0 } else { &self.alice1 };
        reduce(a.member(h)?, self.ancilla())
    }

    /// 𝖳_s on the exchanged wires of history `h`.
    pub fn tester_set(&self, h: &History) -> Result<TesterSet> {
        let k = self.reduced(0, h)?;
        match &self.bob {
            BobSet::Unrestricted => Ok(TesterSet::unrestricted(k.layout())),
            BobSet::Explicit { testers } => {
                let list = testers.get(h).ok_or(Error::EmptyTesterSet)?;
                TesterSet::explicit(list, k.layout())
            }
        }
    }
}

fn reduce(a: &QuantumComb, ancilla: &str) -> Result<QuantumComb> {
    let (m, lay) = a.op.partial_trace(&[ancilla.to_string()])?;
    QuantumComb::from_choi(ChoiOp::unchecked(m, lay, OpKind::CombTooth)?)
}

fn is_zero(c: &QuantumComb) -> bool {
    c.matrix().max_abs() < ZERO_MEMBER
}

fn history_seed(seed: u64, idx: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(idx as u64 + 1)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConcealEntry {
    pub history: History,
    pub epsilon: f64,
    pub gap: f64,
    /// both reduced strategies vanish on this history
    pub abort_only: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConcealReport {
    pub epsilon: f64,
    pub histories: Vec<ConcealEntry>,
}

fn epsilon_for(p: &ProtocolSpec, h: &History, seed: u64) -> Result<ConcealEntry> {
    let (r0, r1) = (p.reduced(0, h)?, p.reduced(1, h)?);
    if is_zero(&r0) && is_zero(&r1) {
        return Ok(ConcealEntry { history: h.clone(), epsilon: 0.0, gap: 0.0, abort_only: true });
    }
    let d = disc_distance(&r0, &r1, &p.tester_set(h)?, seed)?;
    Ok(ConcealEntry { history: h.clone(), epsilon: d.value, gap: d.gap, abort_only: false })
}

/// max_s d(R_{1,s}, R_{0,s}) over Bob's testers, with the per-history table.
pub fn concealment_epsilon(p: &ProtocolSpec, seed: u64) -> Result<ConcealReport> {
    let histories: Vec<ConcealEntry> = p.histories().iter().enumerate().map(|(i, h)| epsilon_for(p, h, history_seed(seed, i))).collect::<Result<_>>()?;
    let epsilon = histories.iter().map(|e| e.epsilon).fold(0.0, f64::max);
    Ok(ConcealReport { epsilon, histories })
}

/// max_s d(A_s, A♯_s) over 𝖳_s ⊗ I on Alice's ancilla.
pub fn closeness_delta(p: &ProtocolSpec, a: &ConditionalComb, a_sharp: &ConditionalComb, seed: u64) -> Result<f64> {
    if a.labels != a_sharp.labels {
        return Err(Error::LayoutMismatch("strategies use different wires".into()));
    }
    let mut worst = 0.0f64;
    for (i, h) in p.histories().iter().enumerate() {
        let (x, y) = (a.member(h)?, a_sharp.member(h)?);
        if x.layout() != y.layout() {
            return Err(Error::LayoutMismatch(format!("history {h}: layouts differ")));
        }
        if is_zero(x) && is_zero(y) {
            continue;
        }
        let set = p.tester_set(h)?.tensor_identity(x.layout())?;
        worst = worst.max(disc_distance(x, y, &set, history_seed(seed, i))?.value);
    }
    Ok(worst)
}

#[derive(Debug, Clone, Serialize)]
pub struct SeesawSummary {
    pub inf_sup: f64,
    pub sup_inf: f64,
    pub gap: f64,
    pub converged: bool,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheatEntry {
    pub history: History,
    pub epsilon: f64,
    pub delta: f64,
    /// d(R̃1, (I⊗𝒫)R̃0) over 𝖳_s ⊗ I
    pub chain: f64,
    pub bound: f64,
    pub pass: bool,
    pub abort_only: bool,
    pub seesaw: Option<SeesawSummary>,
    /// C_s from H_A ⊗ L_A (wire `in`) to H_A
    pub channel: ChoiOp,
    pub epsilon_gap: f64,
    pub delta_gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheatReport {
    pub protocol: String,
    pub seed: u64,
    pub tol_verify: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub bound: f64,
    pub pass: bool,
    pub histories: Vec<CheatEntry>,
}

/// Ã_0 as a dilation of R_0 whose ancilla joins H_A and the extra L_A.
fn alice_dilation(a: &QuantumComb, r: &QuantumComb, ancilla: &str) -> Result<DilatedComb> {
    let l = fresh_label(a.layout(), "L");
    let d = dilate_comb_labeled(a, &l)?;
    let da = a.layout().wire(ancilla)?.dim;
    let joint = Wire::new(joint_label(ancilla), da * d.ancilla_dim(), Role::Ancilla);
    DilatedComb::from_vector(r, joint, d.psi)
}

fn joint_label(ancilla: &str) -> String {
    format!("{ancilla}+L")
}

struct Cheat {
    channel: ChoiOp,
    chain: f64,
    seesaw: SeesawSummary,
}

fn cheat_for(p: &ProtocolSpec, h: &History, set: &TesterSet, seed: u64) -> Result<Cheat> {
    let anc = p.ancilla();
    let (a0, a1) = (p.alice0.member(h)?, p.alice1.member(h)?);
    let (r0, r1) = (p.reduced(0, h)?, p.reduced(1, h)?);
    let ka = fresh_label(r0.layout(), "KA");
    let (rt0, rt1) = (dilate_comb_full(&r0, &ka)?, dilate_comb_full(&r1, &ka)?);
    let mm = continuity_seesaw(&rt0, &rt1, set, seed)?;
    let p_kraus: Vec<ComplexMatrix> = mm.contraction.unitaries.iter().map(|(w, u)| u.scale(w.sqrt())).collect();
    let (at0, at1) = (alice_dilation(a0, &r0, anc)?, alice_dilation(a1, &r1, anc)?);
    let e0 = connect_dilations(&at0, &rt0)?.e_kraus;
    let f1 = connect_dilations(&at1, &rt1)?.f_kraus;
    let da = a0.layout().wire(anc)?.dim;
    let dl1 = at1.ancilla_dim() / da;
    let mut kraus = Vec::new();
    for f in &f1 {
        for u in &p_kraus {
            let fu = f * u;
            for e in &e0 {
                let full = &fu * e;
                for l in 0..dl1 {
                    kraus.push(ComplexMatrix::from_fn(da, full.cols(), |x, c| full.get(x * dl1 + l, c)));
                }
            }
        }
    }
    let lay = WireLayout::new(vec![Wire::new(anc, da, Role::Output), Wire::new(joint_label(anc), at0.ancilla_dim(), Role::Input)])?;
    let channel = choi_from_kraus(&kraus, &lay)?;
    // middle of the chain: R̃1 against (I⊗𝒫)R̃0
    let (m, l) = apply_on_wire(rt0.comb.matrix(), rt0.comb.layout(), &ka, &p_kraus, rt0.comb.layout().wire(&ka)?.clone())?;
    let mixed = QuantumComb::from_choi(ChoiOp::unchecked(m, l, OpKind::CombTooth)?)?;
    let chain = disc_distance(&rt1.comb, &mixed, &set.tensor_identity(rt1.comb.layout())?, seed ^ 0x55)?.value;
    let seesaw = SeesawSummary {
        inf_sup: mm.inf_sup,
        sup_inf: mm.sup_inf,
        gap: mm.gap,
        converged: mm.converged,
        weights: mm.contraction.unitaries.iter().map(|(w, _)| *w).collect(),
    };
    Ok(Cheat { channel, chain, seesaw })
}

/// A1♯ = Tr_L[(I ⊗ C)(Ã0)] from the Choi operator of C.
pub fn apply_cheat(p: &ProtocolSpec, h: &History, channel: &ChoiOp) -> Result<QuantumComb> {
    let anc = p.ancilla();
    let a0 = p.alice0.member(h)?;
    let r0 = p.reduced(0, h)?;
    let at0 = alice_dilation(a0, &r0, anc)?;
    let joint = joint_label(anc);
    let in_wire = channel.layout.wire(&joint)?;
    if in_wire.role != Role::Input || channel.layout.len() != 2 || channel.layout.wire(anc)?.role != Role::Output {
        return Err(Error::LayoutMismatch("cheat channel must map Alice's ancillae to her ancilla".into()));
    }
    let state = ChoiOp::unchecked(ComplexMatrix::outer(&at0.psi), at0.comb.layout().clone(), OpKind::CombTooth)?;
    let out = link(channel, &state, &[joint])?;
    let out = out.permuted(&a0.layout().labels())?;
    QuantumComb::from_choi(ChoiOp { layout: a0.layout().clone(), ..out })
}

/// Keeps H_A and discards L_A; stands in for the cheat on abort-only histories.
fn identity_discard(p: &ProtocolSpec, h: &History) -> Result<ChoiOp> {
    let anc = p.ancilla();
    let a0 = p.alice0.member(h)?;
    let at0 = alice_dilation(a0, &p.reduced(0, h)?, anc)?;
    let da = a0.layout().wire(anc)?.dim;
    let dl = at0.ancilla_dim() / da;
    let kraus: Vec<ComplexMatrix> =
        (0..dl).map(|l| ComplexMatrix::from_fn(da, da * dl, |x, col| if col == x * dl + l { c(1.0, 0.0) } else { c(0.0, 0.0) })).collect();
    let lay = WireLayout::new(vec![Wire::new(anc, da, Role::Output), Wire::new(joint_label(anc), da * dl, Role::Input)])?;
    choi_from_kraus(&kraus, &lay)
}

/// Cheat of the impossibility argument, history by history.
pub fn build_cheat(p: &ProtocolSpec, seed: u64, tol_verify: f64) -> Result<CheatReport> {
    let mut histories = Vec::new();
    for (i, h) in p.histories().iter().enumerate() {
        let s = history_seed(seed, i);
        let conceal = epsilon_for(p, h, s)?;
        let bound = (2.0 * conceal.epsilon).sqrt();
        if conceal.abort_only {
            histories.push(CheatEntry {
                history: h.clone(),
                epsilon: 0.0,
                delta: 0.0,
                chain: 0.0,
                bound,
                pass: true,
                abort_only: true,
                seesaw: None,
                channel: identity_discard(p, h)?,
                epsilon_gap: 0.0,
                delta_gap: 0.0,
            });
            continue;
        }
        let set = p.tester_set(h)?;
        let cheat = cheat_for(p, h, &set, s)?;
        let a1 = p.alice1.member(h)?;
        let sharp = apply_cheat(p, h, &cheat.channel)?;
        let d = disc_distance(a1, &sharp, &set.tensor_identity(a1.layout())?, s ^ 0xAA)?;
        histories.push(CheatEntry {
            history: h.clone(),
            epsilon: conceal.epsilon,
            delta: d.value,
            chain: cheat.chain,
            bound,
            pass: d.value <= bound + tol_verify,
            abort_only: false,
            seesaw: Some(cheat.seesaw),
            channel: cheat.channel,
            epsilon_gap: conceal.gap,
            delta_gap: d.gap,
        });
    }
    let epsilon = histories.iter().map(|e| e.epsilon).fold(0.0, f64::max);
    let delta = histories.iter().map(|e| e.delta).fold(0.0, f64::max);
    let bound = (2.0 * epsilon).sqrt();
    Ok(CheatReport { protocol: p.name.clone(), seed, tol_verify, epsilon, delta, bound, pass: delta <= bound + tol_verify, histories })
}

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub pass: bool,
    pub epsilon: f64,
    pub delta: f64,
    pub bound: f64,
    /// A♯_0 is A_0 itself on every history
    pub honest_zero_exact: bool,
    pub problems: Vec<String>,
}

/// Recomputes ε and δ from scratch with a different seed and checks the report.
pub fn verify_cheat(p: &ProtocolSpec, report: &CheatReport, seed: u64) -> Result<Verdict> {
    let mut problems = Vec::new();
    let tol = report.tol_verify;
    let mut eps = 0.0f64;
    let mut delta = 0.0f64;
    let histories = p.histories();
    if histories.len() != report.histories.len() {
        problems.push(format!("report covers {} histories, protocol has {}", report.histories.len(), histories.len()));
    }
    for (i, (h, entry)) in histories.iter().zip(&report.histories).enumerate() {
        if &entry.history != h {
            problems.push(format!("history {} reported as {}", h, entry.history));
            continue;
        }
        let s = history_seed(seed, i);
        let e = epsilon_for(p, h, s)?;
        eps = eps.max(e.epsilon);
        if (e.epsilon - entry.epsilon).abs() > tol {
            problems.push(format!("history {h}: ε recomputed {:.6} vs reported {:.6}", e.epsilon, entry.epsilon));
        }
        let ch = is_channel(&entry.channel)?;
        if !ch.is_channel {
            problems.push(format!("history {h}: cheat map is not trace preserving (deviation {:.2e})", ch.deviation));
        }
        if e.abort_only {
            continue;
        }
        let a1 = p.alice1.member(h)?;
        let sharp = apply_cheat(p, h, &entry.channel)?;
        let set = p.tester_set(h)?.tensor_identity(a1.layout())?;
        let d = disc_distance(a1, &sharp, &set, s ^ 0x33)?.value;
        delta = delta.max(d);
        if (d - entry.delta).abs() > tol {
            problems.push(format!("history {h}: δ recomputed {d:.6} vs reported {:.6}", entry.delta));
        }
    }
    let bound = (2.0 * eps).sqrt();
    if delta > bound + tol {
        problems.push(format!("δ = {delta:.6} exceeds √(2ε) = {bound:.6}"));
    }
    Ok(Verdict { pass: problems.is_empty(), epsilon: eps, delta, bound, honest_zero_exact: true, problems })
}

/// Alice aborts after `n_max` rounds: from then on she answers with symbol 0
/// and |0⟩, discards Bob's messages, and leaves her ancilla in |0⟩.
pub fn truncate(p: &ProtocolSpec, n_max: usize) -> Result<ProtocolSpec> {
    if n_max >= p.rounds() {
        return Ok(p.clone());
    }
    let head = 2 * n_max;
    let cut = |cc: &ConditionalComb| -> Result<ConditionalComb> {
        let family = marginal_families(cc)?.swap_remove(n_max);
        let mut members = BTreeMap::new();
        for (h, c) in &cc.table {
            let dims = c.layout().dims();
            let live = (head..dims.len()).filter(|j| j % 2 == 1).all(|j| h.0[j] == 0);
            let mut m = family[&h.prefix(head)].clone();
            if !live {
                m = m.scale(0.0);
            }
            for (j, &d) in dims.iter().enumerate().skip(head) {
                m = m.kron(&if j % 2 == 0 { ComplexMatrix::identity(d) } else { ComplexMatrix::unit(d, 0, 0) });
            }
            members.insert(h.clone(), (dims, m));
        }
        ConditionalComb::new(cc.alphabets.clone(), cc.labels.clone(), members)
    };
    ProtocolSpec::new(format!("{}@{n_max}", p.name), cut(&p.alice0)?, cut(&p.alice1)?, p.bob.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::TOL_PSD;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn h0() -> History {
        History(vec![0; 4])
    }

    #[test]
    fn plaintext_is_not_concealing() {
        let p = demo("plaintext").unwrap();
        assert!((concealment_epsilon(&p, 1).unwrap().epsilon - 1.0).abs() < 1e-6);
        assert!((closeness_delta(&p, &p.alice0, &p.alice1, 1).unwrap() - 1.0).abs() < 1e-6);
        assert!(closeness_delta(&p, &p.alice0, &p.alice0, 1).unwrap() < 1e-7);
    }

    #[test]
    fn ancilla_is_read_at_the_opening() {
        // product states differing only on A are orthogonal once A is handed over
        let p = demo("fixed-state").unwrap();
        assert!((closeness_delta(&p, &p.alice0, &p.alice1, 3).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn epr_cheat_is_exact() {
        let p = demo("epr").unwrap();
        let r = build_cheat(&p, 7, TOL_VERIFY).unwrap();
        assert!(r.epsilon < 1e-7 && r.delta < 1e-6 && r.pass, "{r:?}");
        let sharp = apply_cheat(&p, &h0(), &r.histories[0].channel).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let psi = [c(0.0, 0.0), c(h, 0.0), c(h, 0.0), c(0.0, 0.0)];
        let f = crate::tensor::vdot(&psi, &crate::tensor::mat_vec(sharp.matrix(), &psi)).re;
        assert!(f >= 1.0 - 1e-8, "fidelity {f}");
        assert!(verify_cheat(&p, &r, 99).unwrap().pass);
    }

    #[test]
    fn fixed_state_cheat_is_exact() {
        let p = demo("fixed-state").unwrap();
        let r = build_cheat(&p, 2, TOL_VERIFY).unwrap();
        assert!(r.epsilon < 1e-7 && r.delta < 1e-6, "{r:?}");
    }

    #[test]
    fn theta_family_meets_bound() {
        for t in [0.3, 1.1] {
            let p = demo(&format!("theta:{t}")).unwrap();
            let r = build_cheat(&p, 5, TOL_VERIFY).unwrap();
            assert!(r.pass, "θ = {t}: δ = {} bound = {}", r.delta, r.bound);
            assert!(r.epsilon > 1e-3);
            assert!(verify_cheat(&p, &r, 11).unwrap().pass);
        }
    }

    #[test]
    fn identity_in_place_of_the_cheat_is_caught() {
        let p = demo("epr").unwrap();
        let mut r = build_cheat(&p, 7, TOL_VERIFY).unwrap();
        r.histories[0].channel = identity_discard(&p, &h0()).unwrap();
        let v = verify_cheat(&p, &r, 8).unwrap();
        assert!(!v.pass && (v.delta - 1.0).abs() < 1e-6, "{v:?}");
    }

    #[test]
    fn cheat_channel_only_touches_the_ancilla() {
        let p = demo("theta:0.5").unwrap();
        let r = build_cheat(&p, 1, TOL_VERIFY).unwrap();
        let ch = &r.histories[0].channel;
        assert_eq!(ch.layout.labels(), vec!["A".to_string(), joint_label("A")]);
        assert!(is_channel(ch).unwrap().is_channel);
        assert!(ch.matrix.min_eigenvalue() > -TOL_PSD);
    }

    #[test]
    fn coin_protocol_meets_bound() {
        let p = demo("coin2round").unwrap();
        let (v0, v1) = p.validate(1e-9).unwrap();
        assert!(v0.accepted && v1.accepted);
        let r = build_cheat(&p, 3, TOL_VERIFY).unwrap();
        assert_eq!(r.histories.len(), 4);
        assert!(r.pass && r.epsilon > 0.01, "{} {}", r.delta, r.bound);
    }

    #[test]
    fn random_protocols_meet_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for rounds in [1, 2] {
            let p = random_protocol(&mut rng, rounds).unwrap();
            let (v0, v1) = p.validate(1e-8).unwrap();
            assert!(v0.accepted && v1.accepted);
            let r = build_cheat(&p, 9, TOL_VERIFY).unwrap();
            assert!(r.pass, "rounds {rounds}: δ = {} bound = {}", r.delta, r.bound);
        }
    }

    #[test]
    fn reports_are_reproducible() {
        let p = demo("theta:0.7").unwrap();
        let a = serde_json::to_string(&build_cheat(&p, 21, TOL_VERIFY).unwrap()).unwrap();
        let b = serde_json::to_string(&build_cheat(&p, 21, TOL_VERIFY).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn truncation() {
        let p = demo("coin2round").unwrap();
        assert_eq!(serde_json::to_string(&truncate(&p, 2).unwrap().alice0).unwrap(), serde_json::to_string(&p.alice0).unwrap());
        let t = truncate(&p, 1).unwrap();
        let (v0, _) = t.validate(1e-9).unwrap();
        assert!(v0.accepted);
        for (h, m) in &t.alice0.table {
            let (a, _) = m.op.partial_trace(&["b1".into(), "a1".into(), "b2".into()]).unwrap();
            assert!(a.max_abs_diff(&ComplexMatrix::unit(4, 0, 0).scale(a.trace().re)) < 1e-12, "{h}");
        }
    }

    #[test]
    fn protocol_json_round_trip() {
        let p = demo("coin2round").unwrap();
        let s = serde_json::to_string(&p).unwrap();
        let q: ProtocolSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(s, serde_json::to_string(&q).unwrap());
    }
}
