use proptest::prelude::*;

use comblab::choi::{apply_channel, choi_from_kraus, link};
use comblab::comb::{connect_dilations, dilate_comb, dilate_comb_full, random_comb, validate_deterministic};
use comblab::commitment::{build_cheat, concealment_epsilon, random_protocol, TOL_VERIFY};
use comblab::conditional::{dilate_conditional, embed_classical, project_history, random_conditional, validate_conditional};
use comblab::discrimination::{disc_distance, uhlmann_fidelity};
use comblab::random::{random_density, random_kraus, random_matrix, random_psd, seeded};
use comblab::tensor::{double_ket, partial_trace, partial_transpose, psd_sqrt, trace_norm, vdot};
use comblab::tester::{born, random_tester};
use comblab::{ChoiOp, ComplexMatrix, OpKind, Role, TesterSet, Wire, WireLayout};

fn layout_from(dims: &[usize]) -> WireLayout {
    WireLayout::new(dims.iter().enumerate().map(|(k, &d)| Wire::new(format!("w{k}"), d, if k % 2 == 0 { Role::Input } else { Role::Output })).collect())
        .unwrap()
}

fn hermitian(m: &ComplexMatrix) -> ComplexMatrix {
    m.hermitian_part()
}

fn dims_strategy() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..=3, 1..=3)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn partial_trace_keeps_trace(dims in dims_strategy(), mask in 0u8..8, seed in any::<u64>()) {
        let lay = layout_from(&dims);
        let mut rng = seeded(seed);
        let m = random_matrix(&mut rng, lay.total_dim(), lay.total_dim());
        let sub: Vec<String> = lay.labels().into_iter().enumerate().filter(|(k, _)| mask >> k & 1 == 1).map(|(_, l)| l).collect();
        let (t, _) = partial_trace(&m, &lay, &sub).unwrap();
        prop_assert!((t.trace() - m.trace()).norm() < 1e-10);
    }

    #[test]
    fn partial_transpose_keeps_hermiticity_and_trace(dims in dims_strategy(), mask in 0u8..8, seed in any::<u64>()) {
        let lay = layout_from(&dims);
        let mut rng = seeded(seed);
        let m = hermitian(&random_matrix(&mut rng, lay.total_dim(), lay.total_dim()));
        let sub: Vec<String> = lay.labels().into_iter().enumerate().filter(|(k, _)| mask >> k & 1 == 1).map(|(_, l)| l).collect();
        let t = partial_transpose(&m, &lay, &sub).unwrap();
        prop_assert!(t.is_hermitian(1e-12));
        prop_assert!((t.trace() - m.trace()).norm() < 1e-10);
    }

    #[test]
    fn double_ket_inner_product(r in 1usize..=3, c in 1usize..=3, seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let (f, g) = (random_matrix(&mut rng, r, c), random_matrix(&mut rng, r, c));
        let lhs = vdot(&double_ket(&f), &double_ket(&g));
        prop_assert!((lhs - (&f.adjoint() * &g).trace()).norm() < 1e-10);
    }

    #[test]
    fn psd_sqrt_squares_back(d in 1usize..=5, seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let m = random_density(&mut rng, d);
        let s = psd_sqrt(&m, 1e-9).unwrap();
        prop_assert!((&s * &s).max_abs_diff(&m) < 1e-10);
        let (a, _) = m.eigh();
        let (b, _) = s.eigh();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x.max(0.0).sqrt() - y).abs() < 1e-7);
        }
    }

    #[test]
    fn trace_norm_is_a_norm(d in 1usize..=4, alpha in -3.0f64..3.0, seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let (a, b) = (random_matrix(&mut rng, d, d), random_matrix(&mut rng, d, d));
        prop_assert!(trace_norm(&(&a + &b)) <= trace_norm(&a) + trace_norm(&b) + 1e-10);
        prop_assert!((trace_norm(&a.scale(alpha)) - alpha.abs() * trace_norm(&a)).abs() < 1e-10 * (1.0 + trace_norm(&a)));
    }

    #[test]
    fn link_is_symmetric_and_composes(da in 1usize..=3, db in 1usize..=3, dc in 1usize..=3, seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let c = choi_from_kraus(&random_kraus(&mut rng, db, da, 3), &WireLayout::of(&[("b", db, Role::Output), ("a", da, Role::Input)]).unwrap()).unwrap();
        let d = choi_from_kraus(&random_kraus(&mut rng, dc, db, 3), &WireLayout::of(&[("c", dc, Role::Output), ("b", db, Role::Input)]).unwrap()).unwrap();
        let shared = ["b".to_string()];
        let dc_ = link(&d, &c, &shared).unwrap();
        let cd = link(&c, &d, &shared).unwrap().permuted(&dc_.layout.labels()).unwrap();
        prop_assert!(dc_.matrix.max_abs_diff(&cd.matrix) < 1e-12);
        // Tr of a linked channel is the unshared input dimension
        prop_assert!((dc_.trace() - da as f64).abs() < 1e-10);
        for i in 0..da {
            for j in 0..da {
                let rho = ChoiOp::unchecked(ComplexMatrix::unit(da, i, j), WireLayout::of(&[("a", da, Role::Output)]).unwrap(), OpKind::Operation).unwrap();
                let direct = apply_channel(&dc_, &rho).unwrap();
                let step = apply_channel(&d, &apply_channel(&c, &rho).unwrap()).unwrap();
                prop_assert!(direct.matrix.max_abs_diff(&step.matrix) < 1e-10);
            }
        }
    }

    #[test]
    fn sequences_of_channels_are_deterministic_combs(n in 1usize..=3, mem in 1usize..=2, seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let r = random_comb(&mut rng, &vec![(2, 2); n], mem, 2).unwrap();
        prop_assert!(validate_deterministic(&r, 1e-10).accepted);
    }

    #[test]
    fn connecting_isometry_is_a_partial_isometry(n in 1usize..=2, nk in 1usize..=3, seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let r = random_comb(&mut rng, &vec![(2, 2); n], 2, nk.max(n)).unwrap();
        let conn = connect_dilations(&dilate_comb(&r).unwrap(), &dilate_comb_full(&r, "B").unwrap()).unwrap();
        for p in [&conn.w.adjoint() * &conn.w, &conn.w * &conn.w.adjoint()] {
            prop_assert!((&p * &p).max_abs_diff(&p) < 1e-10);
            prop_assert!(p.max_abs_diff(&p.adjoint()) < 1e-10);
        }
    }

    #[test]
    fn born_rule_is_linear(a in 0.0f64..1.0, seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let dims = [(2, 2)];
        let (r1, r2) = (random_comb(&mut rng, &dims, 1, 2).unwrap(), random_comb(&mut rng, &dims, 1, 2).unwrap());
        let t = random_tester(&mut rng, &dims, 1, 3).unwrap();
        let mix = r1.with_matrix(&r1.matrix().scale(a) + &r2.matrix().scale(1.0 - a)).unwrap();
        let (p1, p2, pm) = (born(&t, &r1).unwrap(), born(&t, &r2).unwrap(), born(&t, &mix).unwrap());
        for k in 0..3 {
            prop_assert!((pm[k] - a * p1[k] - (1.0 - a) * p2[k]).abs() < 1e-12);
        }
        // a sub-normalized comb gives total probability at most one
        let sub = r1.with_matrix(r1.matrix().scale(a)).unwrap();
        prop_assert!(born(&t, &sub).unwrap().iter().sum::<f64>() <= 1.0 + 1e-12);
    }

    #[test]
    fn uhlmann_unitary_attains_fidelity(d in 1usize..=4, seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let (rho, sigma) = (random_density(&mut rng, d), random_psd(&mut rng, d).scale(0.1));
        let (f, u) = uhlmann_fidelity(&rho, &sigma).unwrap();
        let m = &(&psd_sqrt(&rho, 1e-9).unwrap() * &u) * &psd_sqrt(&sigma, 1e-9).unwrap();
        prop_assert!((m.trace().re - f).abs() < 1e-10, "{} vs {}", m.trace().re, f);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn disc_is_symmetric_and_bounded(s0 in 0.2f64..1.0, s1 in 0.2f64..1.0, seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let dims = [(2, 2)];
        let r0 = random_comb(&mut rng, &dims, 1, 2).unwrap();
        let r1 = random_comb(&mut rng, &dims, 1, 2).unwrap();
        let (r0, r1) = (r0.with_matrix(r0.matrix().scale(s0)).unwrap(), r1.with_matrix(r1.matrix().scale(s1)).unwrap());
        let set = TesterSet::unrestricted(r0.layout());
        let (a, b) = (disc_distance(&r0, &r1, &set, seed).unwrap().value, disc_distance(&r1, &r0, &set, seed ^ 1).unwrap().value);
        prop_assert!((a - b).abs() < 1e-6);
        prop_assert!((-1e-9..=1.0 + 1e-9).contains(&a));
    }

    #[test]
    fn conditional_combs_embed_dilate_and_validate(branch in 1usize..=2, seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let alph = vec![branch, 2, 1, 1];
        let cc = random_conditional(&mut rng, &alph, |h| 1 + h.len() % 2, 2).unwrap();
        prop_assert!(validate_conditional(&cc, 1e-8).unwrap().accepted);
        prop_assert!(validate_conditional(&dilate_conditional(&cc).unwrap(), 1e-8).unwrap().accepted);
        let emb = embed_classical(&cc).unwrap();
        for (h, m) in &cc.table {
            prop_assert!(project_history(&cc, &emb, h).unwrap().max_abs_diff(m.matrix()) < 1e-12);
        }
    }

    #[test]
    fn cheats_respect_bound_and_worst_case(rounds in 1usize..=2, seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let p = random_protocol(&mut rng, rounds).unwrap();
        let c = concealment_epsilon(&p, seed).unwrap();
        prop_assert_eq!(c.histories.len(), p.alice0.table.len());
        prop_assert_eq!(c.epsilon, c.histories.iter().map(|e| e.epsilon).fold(0.0, f64::max));
        let r = build_cheat(&p, seed, TOL_VERIFY).unwrap();
        prop_assert!(r.delta <= r.bound + TOL_VERIFY);
        prop_assert_eq!(r.delta, r.histories.iter().map(|e| e.delta).fold(0.0, f64::max));
        for e in &r.histories {
            let roles: Vec<Role> = e.channel.layout.wires().iter().map(|w| w.role).collect();
            prop_assert_eq!(roles, vec![Role::Output, Role::Input]);
            prop_assert_eq!(&e.channel.layout.wires()[0].label, p.ancilla());
            prop_assert!(comblab::choi::is_channel(&e.channel).unwrap().is_channel);
        }
    }
}
