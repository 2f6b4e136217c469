//! Affine description of the set of deterministic combs on a layout.
//!
//! Level k of the normalization chain says Q_k = Tr_{out_k} W_k has the form
//! W_{k−1} ⊗ I_{in_k}. Writing Q_k in blocks over the in_k index, this is:
//! off-diagonal blocks vanish and every diagonal block equals block (0,0).
//! W_{k−1} is then block (0,0) of Q_k, so each entry of every W_k is a plain
//! sum of entries of T.

use num_complex::Complex64 as C64;

use crate::comb::{canonical_order, teeth_from_roles};
use crate::error::Result;
use crate::sdp::Term;
use crate::tensor::{ComplexMatrix, Role, WireLayout};

/// Re Σ coeff · T[row, col] = rhs.
#[derive(Debug, Clone)]
pub struct Functional {
    pub terms: Vec<(usize, usize, C64)>,
    pub rhs: f64,
}

impl Functional {
    pub fn eval(&self, t: &ComplexMatrix) -> f64 {
        self.terms.iter().map(|&(r, c, v)| (v * t.get(r, c)).re).sum()
    }

    /// The same functional applied to X_b for each listed block.
    pub fn on_blocks(&self, blocks: &[usize]) -> Vec<Term> {
        blocks.iter().flat_map(|&b| self.terms.iter().map(move |&(row, col, coeff)| Term { block: b, row, col, coeff })).collect()
    }
}

const ONE: C64 = C64::new(1.0, 0.0);
const MINUS_I: C64 = C64::new(0.0, -1.0);

fn offsets(dims: &[(usize, bool)], inputs_zero: bool) -> Vec<usize> {
    // flat offsets over `dims` (big-endian); inputs pinned to 0 when asked
    let mut out = vec![0usize];
    for &(d, is_in) in dims {
        let range = if inputs_zero && is_in { 1 } else { d };
        let mut next = Vec::with_capacity(out.len() * range);
        for &o in &out {
            for v in 0..range {
                next.push(o * d + v);
            }
        }
        out = next;
    }
    out
}

/// Independent affine constraints describing deterministic combs on
/// `layout` (teeth from roles), with T indexed in the wire order `order`.
/// Without `normalized` the overall scale is left free (the cone).
pub fn comb_functionals(layout: &WireLayout, order: &[String], normalized: bool) -> Result<Vec<Functional>> {
    let teeth = teeth_from_roles(layout);
    let canon = canonical_order(&teeth);
    let target = layout.select(order)?;
    let map = target.permutation_map(&canon)?;
    let wire = |l: &String| -> Result<(usize, bool)> {
        let w = layout.wire(l)?;
        Ok((w.dim, w.role == Role::Input))
    };
    let mut out = Vec::new();
    let n = teeth.len();
    for k in 0..n {
        let prefix: Vec<(usize, bool)> = teeth[..k].iter().flat_map(|t| t.inputs.iter().chain(&t.outputs)).map(&wire).collect::<Result<_>>()?;
        let ins: Vec<(usize, bool)> = teeth[k].inputs.iter().map(&wire).collect::<Result<_>>()?;
        let outs: Vec<(usize, bool)> = teeth[k].outputs.iter().map(&wire).collect::<Result<_>>()?;
        let tail: Vec<(usize, bool)> = teeth[k + 1..].iter().flat_map(|t| t.inputs.iter().chain(&t.outputs)).map(&wire).collect::<Result<_>>()?;
        let p_dim: usize = prefix.iter().map(|w| w.0).product();
        let dx: usize = ins.iter().map(|w| w.0).product();
        if dx == 1 {
            continue;
        }
        let d_out: usize = outs.iter().map(|w| w.0).product();
        let d_tail: usize = tail.iter().map(|w| w.0).product();
        let s = offsets(&tail, true);
        let us: Vec<usize> = (0..d_out).flat_map(|o| s.iter().map(move |&t| o * d_tail + t)).collect();
        let block = d_out * d_tail;
        let q_terms = |q: usize, qq: usize, coeff: C64, acc: &mut Vec<(usize, usize, C64)>| {
            for &u in &us {
                acc.push((map[q * block + u], map[qq * block + u], coeff));
            }
        };
        let dq = p_dim * dx;
        for q in 0..dq {
            for qq in q..dq {
                let (p, x) = (q / dx, q % dx);
                let (pp, y) = (qq / dx, qq % dx);
                let parts: &[C64] = if q == qq { &[ONE] } else { &[ONE, MINUS_I] };
                if x != y {
                    for &coeff in parts {
                        let mut terms = Vec::new();
                        q_terms(q, qq, coeff, &mut terms);
                        out.push(Functional { terms, rhs: 0.0 });
                    }
                } else if x >= 1 {
                    let parts: &[C64] = if p == pp { &[ONE] } else { &[ONE, MINUS_I] };
                    for &coeff in parts {
                        let mut terms = Vec::new();
                        q_terms(q, qq, coeff, &mut terms);
                        q_terms(p * dx, pp * dx, -coeff, &mut terms);
                        out.push(Functional { terms, rhs: 0.0 });
                    }
                }
            }
        }
    }
    if normalized {
        let all: Vec<(usize, bool)> = canon.iter().map(&wire).collect::<Result<_>>()?;
        let terms = offsets(&all, true).into_iter().map(|t| (map[t], map[t], ONE)).collect();
        out.push(Functional { terms, rhs: 1.0 });
    }
    Ok(out)
}

/// Largest violation of the functionals at T.
pub fn max_violation(fs: &[Functional], t: &ComplexMatrix) -> f64 {
    fs.iter().map(|f| (f.eval(t) - f.rhs).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comb::random_comb;
    use crate::random::{random_psd, seeded};
    use crate::tester::random_tester;

    #[test]
    fn channel_constraint_count() {
        let lay = WireLayout::of(&[("i", 2, Role::Input), ("o", 3, Role::Output)]).unwrap();
        let fs = comb_functionals(&lay, &lay.labels(), true).unwrap();
        assert_eq!(fs.len(), 4);
    }

    #[test]
    fn random_combs_satisfy_constraints() {
        let mut rng = seeded(61);
        for _ in 0..5 {
            let r = random_comb(&mut rng, &[(2, 3), (2, 2)], 2, 2).unwrap();
            let mut order = r.layout().labels();
            order.reverse();
            let (m, _) = crate::tensor::permute(r.matrix(), r.layout(), &order).unwrap();
            let fs = comb_functionals(r.layout(), &order, true).unwrap();
            assert!(max_violation(&fs, &m) < 1e-10);
            // a generic PSD operator violates them
            assert!(max_violation(&fs, &random_psd(&mut rng, m.rows())) > 1e-3);
        }
    }

    #[test]
    fn testers_satisfy_dual_constraints() {
        let mut rng = seeded(62);
        let t = random_tester(&mut rng, &[(2, 2), (3, 2)], 2, 2).unwrap();
        let fs = comb_functionals(&t.layout, &t.layout.labels(), true).unwrap();
        assert!(max_violation(&fs, &t.operator()) < 1e-10);
        let cone = comb_functionals(&t.layout, &t.layout.labels(), false).unwrap();
        assert!(max_violation(&cone, &t.operator().scale(3.0)) < 1e-9);
        assert_eq!(cone.len() + 1, fs.len());
    }

    #[test]
    fn constraint_count_matches_dimension_of_comb_set() {
        // two-tooth qubit comb: D² − #constraints = dimension of the affine hull
        let lay = WireLayout::of(&[("a", 2, Role::Input), ("b", 2, Role::Output), ("c", 2, Role::Input), ("d", 2, Role::Output)]).unwrap();
        let fs = comb_functionals(&lay, &lay.labels(), true).unwrap();
        // level 2: P = 4, dx = 2 → 16·3 = 48; level 1: 3; plus normalization
        assert_eq!(fs.len(), 48 + 3 + 1);
    }
}
