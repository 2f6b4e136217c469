//! The game f(C, T) = Re⟨r1|(T^τ ⊗ C)|r0⟩ / Tr[T^τ (R0 + R1)] between a
//! contraction C on the ancilla and a normalized tester T.
//!
//! With M0, M1 the (K × A) coefficient matrices of the dilations, the
//! numerator is Re Tr[C G_T] where G_T = M0^T T M̄1, so sup_C is the trace
//! norm of G_T and for fixed C the numerator is Re Tr[T H_C], H_C = M̄1 C M0^T.
//!
//! inf_T sup_C comes from a trace-norm program solved by Dinkelbach; its dual
//! multipliers yield a contraction whose worst tester gives sup_C inf_T.
//! Remaining gaps are closed by cutting planes over the testers seen so far.

use serde::Serialize;

use super::{check_solution, clip_psd, dinkelbach, explicit_members, random_start, solver_opts, tester_program, TesterMode, TesterSet, DEN_FLOOR};
use crate::comb::DilatedComb;
use crate::error::{Error, Result};
use crate::sdp::{term, SdpProblem, Term};
use crate::tensor::{c, permute_vector, trace_norm, ComplexMatrix};
use crate::tester::pairing;

const GAP_TOL: f64 = 1e-6;
const MAX_ROUNDS: usize = 40;

/// A contraction and its split into an equal-weight unitary mixture.
#[derive(Debug, Clone, Serialize)]
pub struct Contraction {
    pub matrix: ComplexMatrix,
    pub unitaries: Vec<(f64, ComplexMatrix)>,
}

impl Contraction {
    /// C = V Σ W† with Σ = cos Θ gives C = (V e^{iΘ} W† + V e^{−iΘ} W†) / 2.
    pub fn new(matrix: ComplexMatrix) -> Self {
        let (v, s, w) = matrix.svd_full();
        let d = s.len();
        if s.iter().all(|&x| x >= 1.0 - 1e-9) {
            return Self { unitaries: vec![(1.0, &v * &w.adjoint())], matrix };
        }
        let phase = |sign: f64| {
            let e = ComplexMatrix::from_fn(d, d, |i, j| {
                if i == j {
                    let th = s[i].clamp(-1.0, 1.0).acos();
                    c(th.cos(), sign * th.sin())
                } else {
                    c(0.0, 0.0)
                }
            });
            &(&v * &e) * &w.adjoint()
        };
        Self { unitaries: vec![(0.5, phase(1.0)), (0.5, phase(-1.0))], matrix }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MinimaxResult {
    pub contraction: Contraction,
    /// inf_T sup_C f
    pub inf_sup: f64,
    /// inf_T f(C*, T) for the reported contraction C*
    pub sup_inf: f64,
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

struct Game {
    m0: ComplexMatrix,
    m1: ComplexMatrix,
    /// S^T with S = R0 + R1, so that den(T) = Re Tr[S^T T]
    den: ComplexMatrix,
    da: usize,
}

impl Game {
    fn g(&self, t: &ComplexMatrix) -> ComplexMatrix {
        &(&self.m0.transpose() * t) * &self.m1.conj()
    }

    fn h(&self, cm: &ComplexMatrix) -> ComplexMatrix {
        &(&self.m1.conj() * cm) * &self.m0.transpose()
    }

    fn den(&self, t: &ComplexMatrix) -> f64 {
        pairing(t, &self.den.transpose())
    }

    fn value(&self, cm: &ComplexMatrix, t: &ComplexMatrix) -> Option<f64> {
        let d = self.den(t);
        (d > DEN_FLOOR).then(|| (cm * &self.g(t)).trace().re / d)
    }

    fn best_response_value(&self, t: &ComplexMatrix) -> Option<f64> {
        let d = self.den(t);
        (d > DEN_FLOOR).then(|| trace_norm(&self.g(t)) / d)
    }
}

fn coefficients(r: &DilatedComb, order: &[String]) -> Result<ComplexMatrix> {
    let mut full = order.to_vec();
    full.push(r.ancilla.clone());
    let psi = permute_vector(&r.psi, r.comb.layout(), &full)?;
    let da = r.ancilla_dim();
    ComplexMatrix::from_row_major(psi.len() / da, da, &psi)
}

/// Worst tester against a fixed contraction: (inf_T f(C, T), T).
fn worst_tester(game: &Game, cm: &ComplexMatrix, set: &TesterSet, seed: u64) -> Result<(f64, ComplexMatrix)> {
    match set.mode {
        TesterMode::Explicit => {
            set.members.iter().filter_map(|t| game.value(cm, t).map(|v| (v, t.clone()))).min_by(|a, b| a.0.total_cmp(&b.0)).ok_or(Error::AllDenominatorsZero)
        }
        TesterMode::Unrestricted => {
            let h = game.h(cm);
            let start = random_start(set, seed)?;
            let lambda0 = game.value(cm, &start).map_or(0.0, |v| -v);
            let exact = |x: &[ComplexMatrix]| {
                let t = clip_psd(&x[0]);
                Ok((-(&h * &t).trace().re, game.den(&t)))
            };
            let fr = dinkelbach(&tester_program(set)?, &[(0, h.scale(-1.0))], &[(0, game.den.clone())], &exact, (lambda0, vec![start]), 1.0)?;
            Ok((-fr.value, clip_psd(&fr.x[0])))
        }
    }
}

/// inf_T ‖G_T‖₁ / den(T) with the contraction read off the dual.
fn inf_sup(game: &Game, set: &TesterSet, seed: u64) -> Result<(f64, ComplexMatrix, ComplexMatrix)> {
    let da = game.da;
    match set.mode {
        TesterMode::Explicit => {
            let (v, t) = set
                .members
                .iter()
                .filter_map(|t| game.best_response_value(t).map(|v| (v, t.clone())))
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .ok_or(Error::AllDenominatorsZero)?;
            let cm = crate::tensor::polar_unitary(&game.g(&t))?.adjoint();
            Ok((v, cm, t))
        }
        TesterMode::Unrestricted => {
            let mut p = tester_program(set)?;
            let n_fixed = p.n_constraints();
            let w = p.add_block(2 * da);
            // W[α, da+β] − G_T[α, β] = 0, real and imaginary parts
            for a in 0..da {
                for b in 0..da {
                    for coeff in [c(1.0, 0.0), c(0.0, -1.0)] {
                        let mut terms = vec![Term { coeff, ..term(w, a, da + b) }];
                        for x in 0..game.m0.rows() {
                            for xx in 0..game.m0.rows() {
                                let g = game.m0.get(x, a) * game.m1.get(xx, b).conj();
                                terms.push(Term { coeff: -coeff * g, ..term(0, x, xx) });
                            }
                        }
                        p.add_constraint(terms, 0.0);
                    }
                }
            }
            let start = random_start(set, seed)?;
            let lambda0 = game.best_response_value(&start).map_or(-1.0, |v| -v);
            let exact = |x: &[ComplexMatrix]| {
                let t = clip_psd(&x[0]);
                Ok((-trace_norm(&game.g(&t)), game.den(&t)))
            };
            let half = ComplexMatrix::identity(2 * da).scale(-0.5);
            let fr = dinkelbach(&p, &[(w, half)], &[(0, game.den.clone())], &exact, (lambda0, vec![start, ComplexMatrix::identity(2 * da)]), 0.0)?;
            let y = &fr.last.y;
            let k2 = ComplexMatrix::from_fn(da, da, |a, b| {
                let i = n_fixed + 2 * (a * da + b);
                c(y[i], y[i + 1])
            });
            let t = clip_psd(&fr.x[0]);
            Ok((-fr.value, shrink(&k2.adjoint()), t))
        }
    }
}

/// Rescale into the unit ball of the operator norm.
fn shrink(m: &ComplexMatrix) -> ComplexMatrix {
    let top = m.singular_values().iter().fold(0.0f64, |a, &b| a.max(b));
    if top > 1.0 {
        m.scale(1.0 / top)
    } else {
        m.clone()
    }
}

/// max_C min_j f(C, T_j) over the cuts; returns (value, C).
fn contraction_step(game: &Game, cuts: &[ComplexMatrix]) -> Result<(f64, ComplexMatrix)> {
    let da = game.da;
    let mut p = SdpProblem::new();
    let y = p.add_block(2 * da);
    let tp = p.add_block(1);
    for off in [0, da] {
        for r in 0..da {
            for col in r..da {
                p.add_constraint(vec![term(y, off + r, off + col)], if r == col { 1.0 } else { 0.0 });
                if r != col {
                    p.add_constraint(vec![Term { coeff: c(0.0, -1.0), ..term(y, off + r, off + col) }], 0.0);
                }
            }
        }
    }
    for t in cuts {
        let d = game.den(t);
        if d <= DEN_FLOOR {
            continue;
        }
        let g = game.g(t).scale(1.0 / d);
        let s = p.add_block(1);
        let mut terms = vec![Term { coeff: c(-1.0, 0.0), ..term(tp, 0, 0) }, Term { coeff: c(-1.0, 0.0), ..term(s, 0, 0) }];
        for b in 0..da {
            for a in 0..da {
                terms.push(Term { coeff: g.get(a, b), ..term(y, b, da + a) });
            }
        }
        p.add_constraint(terms, -1.0);
    }
    p.add_objective(tp, &ComplexMatrix::identity(1));
    let s = p.solve(&solver_opts())?;
    check_solution(&s)?;
    let cm = ComplexMatrix::from_fn(da, da, |b, a| s.x[0].get(b, da + a));
    Ok((s.primal_objective - 1.0, shrink(&cm)))
}

/// Approximate saddle point of f for dilations `ra` (of R0) and `rb` (of R1)
/// with equal ancilla dimension; `set` acts on the marginal wires.
pub fn continuity_seesaw(ra: &DilatedComb, rb: &DilatedComb, set: &TesterSet, seed: u64) -> Result<MinimaxResult> {
    if ra.ancilla_dim() != rb.ancilla_dim() {
        return Err(Error::DimensionMismatch(format!("ancilla dimensions {} and {} differ", ra.ancilla_dim(), rb.ancilla_dim())));
    }
    if set.mode == TesterMode::Explicit {
        explicit_members(set)?;
    }
    let order = set.layout.labels();
    let m0 = coefficients(ra, &order)?;
    let m1 = coefficients(rb, &order)?;
    let s = &(&m0 * &m0.adjoint()) + &(&m1 * &m1.adjoint());
    let game = Game { da: m0.cols(), den: s.transpose(), m0, m1 };

    let (upper, c0, t0) = inf_sup(&game, set, seed)?;
    let (mut lower, t1) = worst_tester(&game, &c0, set, seed ^ 1)?;
    let mut best_c = c0;
    let mut cuts = vec![t0, t1];
    if set.mode == TesterMode::Explicit {
        cuts = set.members.clone();
    }
    let mut rounds = 1;
    while upper - lower > GAP_TOL && rounds < MAX_ROUNDS {
        rounds += 1;
        let (_, cm) = contraction_step(&game, &cuts)?;
        let (v, t) = worst_tester(&game, &cm, set, seed.wrapping_add(rounds as u64))?;
        if v > lower {
            lower = v;
            best_c = cm;
        }
        if set.mode == TesterMode::Explicit {
            break;
        }
        cuts.push(t);
    }
    let gap = upper - lower;
    Ok(MinimaxResult { contraction: Contraction::new(best_c), inf_sup: upper, sup_inf: lower, gap, iterations: rounds, converged: gap <= GAP_TOL })
}

/// inf_T sup_C f − sup_C inf_T f as estimated by `continuity_seesaw`.
pub fn minimax_gap(ra: &DilatedComb, rb: &DilatedComb, set: &TesterSet, seed: u64) -> Result<f64> {
    Ok(continuity_seesaw(ra, rb, set, seed)?.gap)
}
