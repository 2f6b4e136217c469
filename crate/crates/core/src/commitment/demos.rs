//! Toy protocols. Wires are b1 (Bob→Alice), a1 (Alice→Bob), b2 and the
//! ancilla A; b2 is trivial unless a second round is played.

use std::collections::BTreeMap;

use rand::Rng;

use super::{BobSet, ProtocolSpec};
use crate::conditional::{all_histories, random_conditional, ConditionalComb, History};
use crate::error::{Error, Result};
use num_complex::Complex64 as C64;

use crate::tensor::{c, permute, ComplexMatrix, Role, WireLayout};

pub const DEMO_NAMES: &[&str] = &["plaintext", "fixed-state", "epr", "theta:<x>", "coin2round"];

const COIN_NOISE: f64 = 0.2;

fn labels() -> Vec<String> {
    ["b1", "a1", "b2", "A"].iter().map(|s| s.to_string()).collect()
}

fn pure(v: &[f64]) -> ComplexMatrix {
    let v: Vec<C64> = v.iter().map(|&x| c(x, 0.0)).collect();
    ComplexMatrix::outer(&v)
}

fn single(dims: &[usize], m: ComplexMatrix) -> Result<ConditionalComb> {
    let mut members = BTreeMap::new();
    members.insert(History(vec![0; 4]), (dims.to_vec(), m));
    ConditionalComb::new(vec![1; 4], labels(), members)
}

fn pair(name: &str, dims: &[usize], m0: ComplexMatrix, m1: ComplexMatrix) -> Result<ProtocolSpec> {
    ProtocolSpec::new(name, single(dims, m0)?, single(dims, m1)?, BobSet::Unrestricted)
}

pub fn plaintext() -> Result<ProtocolSpec> {
    pair("plaintext", &[1, 2, 1, 1], pure(&[1.0, 0.0]), pure(&[0.0, 1.0]))
}

/// Alice sends |0⟩ and keeps the bit in A.
pub fn fixed_state() -> Result<ProtocolSpec> {
    pair("fixed-state", &[1, 2, 1, 2], pure(&[1.0, 0.0, 0.0, 0.0]), pure(&[0.0, 1.0, 0.0, 0.0]))
}

pub fn epr() -> Result<ProtocolSpec> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    pair("epr", &[1, 2, 1, 2], pure(&[h, 0.0, 0.0, h]), pure(&[0.0, h, h, 0.0]))
}

/// |00⟩ against cos θ|00⟩ + sin θ|11⟩ on (a1, A).
pub fn theta(t: f64) -> Result<ProtocolSpec> {
    let (s, co) = t.sin_cos();
    pair(&format!("theta:{t}"), &[1, 2, 1, 2], pure(&[1.0, 0.0, 0.0, 0.0]), pure(&[co, 0.0, 0.0, s]))
}

/// Bob sends a coin c, Alice answers a uniform symbol a and a noisy Bell
/// state whose type depends on c ⊕ a and whose sign carries the bit; Bob then
/// hands over a qubit that Alice stores.
pub fn coin2round() -> Result<ProtocolSpec> {
    let lay = WireLayout::of(&[("msg", 2, Role::Output), ("mem", 2, Role::Output), ("b2", 2, Role::Input), ("store", 2, Role::Output)])?;
    let target: Vec<String> = ["msg", "b2", "mem", "store"].iter().map(|s| s.to_string()).collect();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let link = pure(&[1.0, 0.0, 0.0, 1.0]);
    let strategy = |b: usize| -> Result<ConditionalComb> {
        let mut members = BTreeMap::new();
        for hist in all_histories(&[2, 2, 1, 1]) {
            let x = hist.0[0] ^ hist.0[1];
            let sign = if b == 0 { h } else { -h };
            let mut bell = vec![0.0; 4];
            bell[x] = h;
            bell[2 + (1 - x)] = sign;
            let mut rec = vec![0.0; 4];
            rec[(b ^ x) * 2 + x] = 1.0;
            let rho = &pure(&bell).scale(1.0 - COIN_NOISE) + &pure(&rec).scale(COIN_NOISE);
            let full = rho.scale(0.5).kron(&link);
            let (m, _) = permute(&full, &lay, &target)?;
            members.insert(hist, (vec![1, 2, 2, 4], m));
        }
        ConditionalComb::new(vec![2, 2, 1, 1], labels(), members)
    };
    ProtocolSpec::new("coin2round", strategy(0)?, strategy(1)?, BobSet::Unrestricted)
}

pub fn demo(name: &str) -> Result<ProtocolSpec> {
    match name {
        "plaintext" => plaintext(),
        "fixed-state" => fixed_state(),
        "epr" => epr(),
        "coin2round" => coin2round(),
        _ => match name.strip_prefix("theta:").map(str::parse::<f64>) {
            Some(Ok(t)) => theta(t),
            _ => Err(Error::InvalidInput(format!("unknown demo '{name}' (available: {})", DEMO_NAMES.join(", ")))),
        },
    }
}

/// Random protocol with `rounds` ∈ {1, 2} exchanges before Alice's local move;
/// 𝖠₁ is a small convex perturbation of 𝖠₀.
pub fn random_protocol(rng: &mut impl Rng, rounds: usize) -> Result<ProtocolSpec> {
    let (alphabets, dims): (Vec<usize>, Vec<usize>) = match rounds {
        1 => (vec![1, 2, 1, 1], vec![2, 2, 1, 2]),
        2 => (vec![1, 2, 2, 1, 1, 1], vec![1, 2, 1, 2, 1, 2]),
        _ => return Err(Error::InvalidInput(format!("random protocols have 1 or 2 rounds, got {rounds}"))),
    };
    let dim_of = |p: &History| dims[p.len() - 1];
    let a0 = random_conditional(rng, &alphabets, dim_of, 2)?;
    let other = random_conditional(rng, &alphabets, dim_of, 2)?;
    let t: f64 = rng.gen_range(0.02..0.3);
    let members = a0.table.iter().map(|(h, m)| (h.clone(), (m.layout().dims(), &m.matrix().scale(1.0 - t) + &other.table[h].matrix().scale(t)))).collect();
    let a1 = ConditionalComb::new(alphabets, a0.labels.clone(), members)?;
    ProtocolSpec::new(format!("random-{rounds}"), a0, a1, BobSet::Unrestricted)
}
