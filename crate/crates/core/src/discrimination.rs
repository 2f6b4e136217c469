//! Distances between combs relative to a set of testers.
//!
//! `op_distance` is the operational one, max over binary testers of
//! |p1 − p0| summed over outcomes; `disc_distance` is the discrimination
//! one, max over testers of ‖√T^τ (R1 − R0) √T^τ‖₁ / Tr[T^τ (R0 + R1)].

mod minimax;

pub use minimax::{continuity_seesaw, minimax_gap, Contraction, MinimaxResult};

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::comb::{random_comb_on, QuantumComb};
use crate::constraints::comb_functionals;
use crate::error::{Error, Result};
use crate::random::SeededRng;
use crate::sdp::{SdpOptions, SdpProblem, SdpSolution};
use crate::tensor::{psd_sqrt, trace_norm, ComplexMatrix, WireLayout};
use crate::tester::{pairing, tester_layout, Tester};

/// Denominators at or below this are treated as zero.
pub const DEN_FLOOR: f64 = 1e-12;
const DINKELBACH_TOL: f64 = 1e-7;
const DINKELBACH_MAX: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TesterMode {
    Unrestricted,
    Explicit,
}

/// A class of testers for a fixed comb layout.
///
/// Members are total tester operators Σ_i T_i, in the comb's wire order.
#[derive(Debug, Clone)]
pub struct TesterSet {
    pub mode: TesterMode,
    /// comb-side layout the set acts on
    pub layout: WireLayout,
    pub members: Vec<ComplexMatrix>,
    /// false where a member failed tester normalization
    pub normalized: Vec<bool>,
}

impl TesterSet {
    pub fn unrestricted(comb_layout: &WireLayout) -> Self {
        Self { mode: TesterMode::Unrestricted, layout: comb_layout.clone(), members: vec![], normalized: vec![] }
    }

    pub fn explicit(testers: &[Tester], comb_layout: &WireLayout) -> Result<Self> {
        let mut members = Vec::new();
        let mut normalized = Vec::new();
        for t in testers {
            let ops = t.aligned_to(comb_layout)?;
            let mut total = ComplexMatrix::zeros(comb_layout.total_dim(), comb_layout.total_dim());
            for o in &ops {
                total = &total + o;
            }
            members.push(total);
            normalized.push(t.normalized);
        }
        Ok(Self { mode: TesterMode::Explicit, layout: comb_layout.clone(), members, normalized })
    }

    /// The set 𝖳 ⊗ I on a layout extended by trailing ancilla wires.
    pub fn tensor_identity(&self, dilated: &WireLayout) -> Result<Self> {
        let base = self.layout.labels();
        if dilated.labels()[..base.len().min(dilated.len())] != base[..] {
            return Err(Error::LayoutMismatch("dilated layout must extend the tester layout".into()));
        }
        let extra = dilated.total_dim() / self.layout.total_dim();
        let id = ComplexMatrix::identity(extra);
        Ok(Self { mode: self.mode, layout: dilated.clone(), members: self.members.iter().map(|m| m.kron(&id)).collect(), normalized: self.normalized.clone() })
    }

    pub fn dual_layout(&self) -> WireLayout {
        tester_layout(&self.layout)
    }

    pub(crate) fn align(&self, r: &QuantumComb) -> Result<ComplexMatrix> {
        let order = self.layout.labels();
        if r.layout().len() != order.len() {
            return Err(Error::LayoutMismatch(format!("comb wires {:?} vs tester set wires {:?}", r.layout().labels(), order)));
        }
        for w in self.layout.wires() {
            let rw = r.layout().wire(&w.label).map_err(|_| Error::LayoutMismatch(format!("comb lacks wire `{}`", w.label)))?;
            if rw.dim != w.dim {
                return Err(Error::DimensionMismatch(format!("wire `{}`: {} vs {}", w.label, rw.dim, w.dim)));
            }
        }
        Ok(crate::tensor::permute(r.matrix(), r.layout(), &order)?.0)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DistanceResult {
    pub value: f64,
    /// total tester operator T = T0 + T1 in the tester set's wire order
    pub tester: ComplexMatrix,
    /// optimal binary outcomes (T0, T1)
    pub binary: (ComplexMatrix, ComplexMatrix),
    /// primal–dual gap of the last SDP (0 for explicit sets)
    pub gap: f64,
    pub iterations: usize,
    pub mode: TesterMode,
}

/// √(T^τ) R √(T^τ).
pub fn conditioned_state(t: &ComplexMatrix, r: &ComplexMatrix) -> Result<ComplexMatrix> {
    let a = psd_sqrt(&t.transpose().hermitian_part(), 1e-7)?;
    Ok(&(&a * r) * &a)
}

#[derive(Debug, Clone, Serialize)]
pub struct Helstrom {
    pub success: f64,
    pub p0: ComplexMatrix,
    pub p1: ComplexMatrix,
}

/// Optimal two-outcome measurement between π0 ρ0 and π1 ρ1.
pub fn helstrom(rho0: &ComplexMatrix, rho1: &ComplexMatrix, pi0: f64, pi1: f64) -> Helstrom {
    let gamma = (&rho0.scale(pi0) - &rho1.scale(pi1)).hermitian_part();
    let p0 = gamma.spectral_map(|v| if v > 0.0 { 1.0 } else { 0.0 });
    let p1 = &ComplexMatrix::identity(gamma.rows()) - &p0;
    let total = rho0.trace().re * pi0 + rho1.trace().re * pi1;
    Helstrom { success: 0.5 * (total + trace_norm(&gamma)), p0, p1 }
}

/// Uhlmann fidelity ‖√σ √ρ‖₁ and the unitary attaining it.
pub fn uhlmann_fidelity(rho: &ComplexMatrix, sigma: &ComplexMatrix) -> Result<(f64, ComplexMatrix)> {
    let m = &psd_sqrt(sigma, 1e-7)? * &psd_sqrt(rho, 1e-7)?;
    Ok((trace_norm(&m), crate::tensor::polar_unitary(&m)?.adjoint()))
}

/// ‖ρ − σ‖₁ − (Tr ρ + Tr σ − 2F); non-negative for PSD inputs.
pub fn bau_gap(rho: &ComplexMatrix, sigma: &ComplexMatrix) -> Result<f64> {
    let f = uhlmann_fidelity(rho, sigma)?.0;
    Ok(trace_norm(&(rho - sigma)) - (rho.trace().re + sigma.trace().re - 2.0 * f))
}

/// Best split of a total tester T into (T0, T1) for telling R0 from R1 apart:
/// returns (T0, T1, ‖√T^τ Δ √T^τ‖₁) with Δ = R1 − R0.
pub fn optimal_split(t: &ComplexMatrix, delta: &ComplexMatrix) -> Result<(ComplexMatrix, ComplexMatrix, f64)> {
    let a = psd_sqrt(&t.transpose().hermitian_part(), 1e-6)?;
    let g = (&(&a * delta) * &a).hermitian_part();
    let p = g.spectral_map(|v| if v > 0.0 { 1.0 } else { 0.0 });
    let t1 = (&(&a * &p) * &a).transpose();
    let t0 = &t.hermitian_part() - &t1;
    Ok((t0, t1, trace_norm(&g)))
}

pub(crate) fn clip_psd(m: &ComplexMatrix) -> ComplexMatrix {
    m.hermitian_part().spectral_map(|v| v.max(0.0))
}

/// (numerator, denominator) of the discrimination ratio at T.
fn disc_ratio_parts(t: &ComplexMatrix, delta: &ComplexMatrix, sum: &ComplexMatrix) -> Result<(f64, f64)> {
    let t = clip_psd(t);
    let (_, _, num) = optimal_split(&t, delta)?;
    Ok((num, pairing(&t, sum)))
}

fn solver_opts() -> SdpOptions {
    SdpOptions::default()
}

/// Unrestricted two-block tester program: blocks 0 and 1 hold T0 and T1.
fn binary_program(set: &TesterSet) -> Result<SdpProblem> {
    let d = set.layout.total_dim();
    let fs = comb_functionals(&set.dual_layout(), &set.layout.labels(), true)?;
    let mut p = SdpProblem::new();
    let b0 = p.add_block(d);
    let b1 = p.add_block(d);
    for f in &fs {
        p.add_constraint(f.on_blocks(&[b0, b1]), f.rhs);
    }
    Ok(p)
}

/// Single-block program over normalized testers.
pub(crate) fn tester_program(set: &TesterSet) -> Result<SdpProblem> {
    let fs = comb_functionals(&set.dual_layout(), &set.layout.labels(), true)?;
    let mut p = SdpProblem::new();
    let b = p.add_block(set.layout.total_dim());
    for f in &fs {
        p.add_constraint(f.on_blocks(&[b]), f.rhs);
    }
    Ok(p)
}

fn check_solution(s: &SdpSolution) -> Result<()> {
    if s.status == crate::sdp::SdpStatus::Failed {
        return Err(Error::Solver(format!(
            "interior point did not converge (gap {:.2e}, infeasibility {:.2e})",
            s.gap(),
            s.primal_infeasibility.max(s.dual_infeasibility)
        )));
    }
    Ok(())
}

pub(crate) fn explicit_members(set: &TesterSet) -> Result<()> {
    if set.members.is_empty() {
        return Err(Error::EmptyTesterSet);
    }
    Ok(())
}

/// max over testers in the set of Σ |p1 − p0|, via the optimal binary split.
pub fn op_distance(r0: &QuantumComb, r1: &QuantumComb, set: &TesterSet) -> Result<DistanceResult> {
    let m0 = set.align(r0)?;
    let m1 = set.align(r1)?;
    let delta = &m1 - &m0;
    match set.mode {
        TesterMode::Explicit => {
            explicit_members(set)?;
            let mut best: Option<DistanceResult> = None;
            for t in &set.members {
                let (t0, t1, v) = optimal_split(t, &delta)?;
                if best.as_ref().is_none_or(|b| v > b.value) {
                    best = Some(DistanceResult { value: v, tester: t.clone(), binary: (t0, t1), gap: 0.0, iterations: 0, mode: set.mode });
                }
            }
            Ok(best.expect("non-empty"))
        }
        TesterMode::Unrestricted => {
            let mut p = binary_program(set)?;
            let obj = delta.transpose();
            p.add_objective(1, &obj);
            p.add_objective(0, &obj.scale(-1.0));
            let s = p.solve(&solver_opts())?;
            check_solution(&s)?;
            let t = clip_psd(&(&s.x[0] + &s.x[1]));
            let (t0, t1, v) = optimal_split(&t, &delta)?;
            Ok(DistanceResult { value: v.max(s.primal_objective), tester: t, binary: (t0, t1), gap: s.gap(), iterations: s.iterations, mode: set.mode })
        }
    }
}

/// Outcome of a Dinkelbach run maximizing N(X)/D(X).
pub(crate) struct Fractional {
    pub value: f64,
    pub x: Vec<ComplexMatrix>,
    pub last: SdpSolution,
    pub iterations: usize,
}

/// Dinkelbach iteration on `base` with objective num − λ·den, where
/// `exact` recomputes (N, D) at a solution. `hi` bounds the ratio above.
pub(crate) fn dinkelbach(
    base: &SdpProblem,
    num: &[(usize, ComplexMatrix)],
    den: &[(usize, ComplexMatrix)],
    exact: &dyn Fn(&[ComplexMatrix]) -> Result<(f64, f64)>,
    start: (f64, Vec<ComplexMatrix>),
    hi: f64,
) -> Result<Fractional> {
    let (mut lambda, mut best_x) = start;
    let mut best = lambda;
    let mut lo_b = lambda;
    let mut hi_b = hi;
    let mut bisect = false;
    let mut last = None;
    let mut it = 0;
    while it < DINKELBACH_MAX {
        it += 1;
        let mut p = base.clone();
        for (b, m) in num {
            p.add_objective(*b, m);
        }
        for (b, m) in den {
            p.add_objective(*b, &m.scale(-lambda));
        }
        let s = p.solve(&solver_opts())?;
        check_solution(&s)?;
        let (n, d) = exact(&s.x)?;
        let f = s.primal_objective;
        let ratio = if d > DEN_FLOOR { Some(n / d) } else { None };
        if let Some(r) = ratio {
            if r > best {
                best = r;
                best_x = s.x.clone();
            }
        }
        let f_small = f <= 1e-9 * (1.0 + lambda.abs());
        last = Some(s);
        if bisect || ratio.is_none() {
            // F(λ) > 0 means the optimum lies above λ
            bisect = true;
            if f_small {
                hi_b = lambda;
            } else {
                lo_b = lo_b.max(lambda).max(best);
            }
            if hi_b - lo_b < DINKELBACH_TOL {
                break;
            }
            lambda = 0.5 * (lo_b + hi_b);
            continue;
        }
        let next = best.max(lambda);
        if f_small || (next - lambda).abs() < DINKELBACH_TOL {
            break;
        }
        lambda = next;
    }
    Ok(Fractional { value: best, x: best_x, last: last.expect("at least one solve"), iterations: it })
}

pub(crate) fn random_start(set: &TesterSet, seed: u64) -> Result<ComplexMatrix> {
    let mut rng = SeededRng::seed_from_u64(seed);
    let t = random_comb_on(&mut rng, &tester_layout(&set.layout), 2)?;
    Ok(crate::tensor::permute(t.matrix(), t.layout(), &set.layout.labels())?.0)
}

/// max over testers in the set of the discrimination ratio.
pub fn disc_distance(r0: &QuantumComb, r1: &QuantumComb, set: &TesterSet, seed: u64) -> Result<DistanceResult> {
    let m0 = set.align(r0)?;
    let m1 = set.align(r1)?;
    let delta = &m1 - &m0;
    let sum = &m1 + &m0;
    match set.mode {
        TesterMode::Explicit => {
            explicit_members(set)?;
            let mut best: Option<DistanceResult> = None;
            for t in &set.members {
                let den = pairing(t, &sum);
                if den <= DEN_FLOOR {
                    continue;
                }
                let (t0, t1, num) = optimal_split(t, &delta)?;
                let v = num / den;
                if best.as_ref().is_none_or(|b| v > b.value) {
                    best = Some(DistanceResult { value: v, tester: t.clone(), binary: (t0, t1), gap: 0.0, iterations: 0, mode: set.mode });
                }
            }
            best.ok_or(Error::AllDenominatorsZero)
        }
        TesterMode::Unrestricted => {
            let t_start = random_start(set, seed)?;
            let (n, d) = disc_ratio_parts(&t_start, &delta, &sum)?;
            let lambda0 = if d > DEN_FLOOR { n / d } else { 0.0 };
            let (s0, s1, _) = optimal_split(&t_start, &delta)?;
            let base = binary_program(set)?;
            let obj = delta.transpose();
            let den = sum.transpose();
            let exact = |x: &[ComplexMatrix]| disc_ratio_parts(&(&x[0] + &x[1]), &delta, &sum);
            let fr = dinkelbach(&base, &[(1, obj.clone()), (0, obj.scale(-1.0))], &[(0, den.clone()), (1, den)], &exact, (lambda0, vec![s0, s1]), 1.0)?;
            let t = clip_psd(&(&fr.x[0] + &fr.x[1]));
            let (t0, t1, _) = optimal_split(&t, &delta)?;
            Ok(DistanceResult { value: fr.value, tester: t, binary: (t0, t1), gap: fr.last.gap(), iterations: fr.iterations, mode: set.mode })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::choi::{choi_from_kraus, ChoiOp, OpKind};
    use crate::comb::{dilate_comb_full, random_comb};
    use crate::random::{random_density, random_kraus, seeded};
    use crate::tensor::{c, Role};

    fn qubit_channel(kraus: &[ComplexMatrix]) -> QuantumComb {
        let lay = WireLayout::of(&[("i", 2, Role::Input), ("o", 2, Role::Output)]).unwrap();
        QuantumComb::from_choi(choi_from_kraus(kraus, &lay).unwrap()).unwrap()
    }

    fn state(m: ComplexMatrix) -> QuantumComb {
        let lay = WireLayout::of(&[("s", m.rows(), Role::Output)]).unwrap();
        QuantumComb::from_choi(ChoiOp::unchecked(m, lay, OpKind::State).unwrap()).unwrap()
    }

    #[test]
    fn identity_versus_phase_flip() {
        let id = qubit_channel(&[ComplexMatrix::identity(2)]);
        let z = qubit_channel(&[ComplexMatrix::diag(&[1.0, -1.0])]);
        let set = TesterSet::unrestricted(id.layout());
        let op = op_distance(&id, &z, &set).unwrap();
        assert!((op.value - 2.0).abs() < 1e-6, "{}", op.value);
        let disc = disc_distance(&id, &z, &set, 1).unwrap();
        assert!((disc.value - 1.0).abs() < 1e-6, "{}", disc.value);
    }

    #[test]
    fn triangle_inequality_fails() {
        let rho = state(ComplexMatrix::diag(&[0.5, 0.0]));
        let sigma = state(ComplexMatrix::diag(&[0.0, 0.5]));
        let tau = state(ComplexMatrix::diag(&[0.5, 0.5]));
        let set = TesterSet::unrestricted(rho.layout());
        let d = |a: &QuantumComb, b: &QuantumComb| disc_distance(a, b, &set, 2).unwrap().value;
        assert!((d(&rho, &sigma) - 1.0).abs() < 1e-7);
        assert!((d(&rho, &tau) - 1.0 / 3.0).abs() < 1e-7);
        assert!((d(&tau, &sigma) - 1.0 / 3.0).abs() < 1e-7);
    }

    #[test]
    fn deterministic_disc_is_half_op() {
        let mut rng = seeded(71);
        for _ in 0..3 {
            let r0 = random_comb(&mut rng, &[(2, 2)], 1, 2).unwrap();
            let r1 = random_comb(&mut rng, &[(2, 2)], 1, 2).unwrap();
            let set = TesterSet::unrestricted(r0.layout());
            let op = op_distance(&r0, &r1, &set).unwrap().value;
            let disc = disc_distance(&r0, &r1, &set, 3).unwrap().value;
            assert!((disc - op / 2.0).abs() < 1e-6, "{disc} vs {op}");
        }
    }

    #[test]
    fn explicit_set_matches_member_evaluation() {
        let mut rng = seeded(72);
        let r0 = random_comb(&mut rng, &[(2, 2)], 1, 2).unwrap();
        let r1 = random_comb(&mut rng, &[(2, 2)], 1, 2).unwrap();
        let lay = r0.layout().clone();
        let t = crate::tester::random_tester(&mut rng, &[(2, 2)], 1, 2).unwrap();
        let set = TesterSet::explicit(&[t], &lay).unwrap();
        let exp = op_distance(&r0, &r1, &set).unwrap().value;
        let full = op_distance(&r0, &r1, &TesterSet::unrestricted(&lay)).unwrap().value;
        assert!(exp <= full + 1e-7);
        let empty = TesterSet { members: vec![], normalized: vec![], ..set };
        assert!(matches!(op_distance(&r0, &r1, &empty), Err(Error::EmptyTesterSet)));
    }

    #[test]
    fn post_processing_does_not_increase_distance() {
        let mut rng = seeded(73);
        let k0 = random_kraus(&mut rng, 2, 2, 2);
        let k1 = random_kraus(&mut rng, 2, 2, 2);
        let post = random_kraus(&mut rng, 2, 2, 3);
        let compose = |k: &[ComplexMatrix]| -> Vec<ComplexMatrix> { post.iter().flat_map(|p| k.iter().map(move |a| p * a)).collect() };
        let (a0, a1) = (qubit_channel(&k0), qubit_channel(&k1));
        let (b0, b1) = (qubit_channel(&compose(&k0)), qubit_channel(&compose(&k1)));
        let set = TesterSet::unrestricted(a0.layout());
        assert!(op_distance(&b0, &b1, &set).unwrap().value <= op_distance(&a0, &a1, &set).unwrap().value + 1e-7);
        assert!(disc_distance(&b0, &b1, &set, 4).unwrap().value <= disc_distance(&a0, &a1, &set, 4).unwrap().value + 1e-6);
    }

    #[test]
    fn fidelity_bound_holds() {
        let mut rng = seeded(74);
        for _ in 0..10 {
            let rho = random_density(&mut rng, 3).scale(0.7);
            let sigma = random_density(&mut rng, 3).scale(0.4);
            assert!(bau_gap(&rho, &sigma).unwrap() >= -1e-10);
            let (f, u) = uhlmann_fidelity(&rho, &sigma).unwrap();
            let m = &(&psd_sqrt(&sigma, 1e-9).unwrap() * &psd_sqrt(&rho, 1e-9).unwrap()) * &u;
            assert!((m.trace().re - f).abs() < 1e-8);
        }
    }

    #[test]
    fn helstrom_orthogonal_and_equal() {
        let h = helstrom(&ComplexMatrix::diag(&[1.0, 0.0]), &ComplexMatrix::diag(&[0.0, 1.0]), 0.5, 0.5);
        assert!((h.success - 1.0).abs() < 1e-12);
        let plus = ComplexMatrix::outer(&[c(0.5f64.sqrt(), 0.0), c(0.5f64.sqrt(), 0.0)]);
        let h = helstrom(&plus, &plus, 0.5, 0.5);
        assert!((h.success - 0.5).abs() < 1e-12);
    }

    #[test]
    fn minimax_on_qubit_channels() {
        let mut rng = seeded(75);
        for k in 0..3 {
            let r0 = qubit_channel(&random_kraus(&mut rng, 2, 2, 2));
            let r1 = qubit_channel(&random_kraus(&mut rng, 2, 2, 2));
            let (ra, rb) = (dilate_comb_full(&r0, "A").unwrap(), dilate_comb_full(&r1, "A").unwrap());
            let set = TesterSet::unrestricted(r0.layout());
            let m = continuity_seesaw(&ra, &rb, &set, k).unwrap();
            assert!(m.sup_inf <= m.inf_sup + 1e-7);
            assert!(m.gap <= 1e-6, "gap {} after {} rounds", m.gap, m.iterations);
            let avg = m.contraction.unitaries.iter().fold(ComplexMatrix::zeros(4, 4), |acc, (w, u)| &acc + &u.scale(*w));
            assert!(avg.max_abs_diff(&m.contraction.matrix) < 1e-9);
        }
    }
}
