use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sle_wzw::blocks::{
    a_matrix, b_matrix, generator_matrix, generator_matrix_rho, martingale_matrix_float, su2_identity_defects, Block,
    BlockCase, Couplings, GeneratorParams,
};
use sle_wzw::invariant_space::{build_invariant_space, InvariantCase};
use sle_wzw::lie_algebra::{build_generators, Weight};
use sle_wzw::tensor::TensorSpace;

fn su2_space(legs: usize) -> TensorSpace {
    let g = build_generators(2, &Weight::fundamental(2, 1).unwrap()).unwrap();
    let mut v = Vec::new();
    for i in 0..legs {
        v.push(if i % 2 == 0 { g.clone() } else { g.conjugate() });
    }
    TensorSpace::new(v)
}

fn kth2(k: i64) -> GeneratorParams {
    let nu = 1.0 / (k as f64 + 2.0);
    GeneratorParams {
        kappa: 4.0 / (nu + 1.0),
        tau: 2.0 * nu / (nu + 1.0),
        nu,
    }
}

#[test]
fn su2_operator_identities_hold_on_full_space() {
    for legs in [4, 6] {
        let s = su2_space(legs);
        for k in 1..=6 {
            let nu = 1.0 / (k as f64 + 2.0);
            let (sq, anti) = su2_identity_defects(&s, nu).unwrap();
            assert!(sq < 1e-12 && anti < 1e-12, "legs={legs} k={k}: {sq:e} {anti:e}");
        }
    }
}

#[test]
fn su2_a_and_b_vanish_with_level_parameters() {
    let s = su2_space(4);
    for k in 2..=6 {
        let p = kth2(k);
        for i in 1..=3 {
            assert!(a_matrix(&s, i, &p).unwrap().camax() < 1e-12);
            for j in i + 1..=3 {
                assert!(b_matrix(&s, i, j, &p).unwrap().camax() < 1e-12);
            }
        }
        let w = C64::new(0.3, 0.8);
        assert!(generator_matrix(&s, &[w, w.conj()], &p).unwrap().camax() < 1e-12);
        assert!(generator_matrix_rho(&s, &[w, w.conj()], 1.0, &p).unwrap().camax() < 1e-12);
    }
    let p = kth2(3);
    assert!(
        a_matrix(
            &s,
            1,
            &GeneratorParams {
                kappa: p.kappa + 0.1,
                ..p
            }
        )
        .unwrap()
        .camax()
            > 1e-3
    );
}

#[test]
fn one_point_reduction_matches_polynomial_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for (case, n) in [
        (BlockCase::Su2Level1, 2),
        (BlockCase::SunFundLevel1, 3),
        (BlockCase::SunSelfAdjLevel1, 4),
    ] {
        let block = Block::new(case, n).unwrap();
        let inv = build_invariant_space(case.invariant_case(), n).unwrap();
        let t = Couplings::from_space(&inv);
        let (kappa, tau) = (2.0, 2.0 / n as f64);
        let p = GeneratorParams {
            kappa,
            tau,
            nu: block.nu_f64(),
        };
        for _ in 0..10 {
            let w = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(0.2..1.5));
            let full = generator_matrix(&inv.space, &[w, w.conj()], &p).unwrap();
            let red = TensorSpace::restrict(&full, &inv.basis);
            let m = martingale_matrix_float(&block, &t, kappa, tau, w / w.conj()) / (w * w);
            let diff = (0..2)
                .flat_map(|i| (0..2).map(move |j| (i, j)))
                .map(|(i, j)| (red[(i, j)] - m[(i, j)]).norm());
            let err = diff.fold(0.0, f64::max);
            assert!(err < 1e-10 * (1.0 + m.camax()), "{case:?}: {err:e}");
        }
    }
}

#[test]
fn su3_generator_is_nonzero_but_annihilates_block() {
    let block = Block::new(BlockCase::SunFundLevel1, 3).unwrap();
    let inv = build_invariant_space(InvariantCase::FundAntifund, 3).unwrap();
    let p = GeneratorParams {
        kappa: 2.0,
        tau: 2.0 / 3.0,
        nu: 0.25,
    };
    let w = C64::new(0.4, 0.9);
    let full = generator_matrix(&inv.space, &[w, w.conj()], &p).unwrap();
    assert!(full.camax() > 1e-3);
    let red = TensorSpace::restrict(&full, &inv.basis);
    let f = block.f0(w / w.conj());
    let v = red * nalgebra::DVector::from_vec(vec![f[0], f[1]]);
    assert!(v.camax() < 1e-12);

    let i = C64::new(0.0, 1.0);
    let rho = generator_matrix_rho(&inv.space, &[i, -i], 1.0, &p).unwrap();
    assert!(rho.camax() > 1e-3);
}

#[test]
fn position_errors() {
    let s = su2_space(4);
    let p = kth2(2);
    let z = C64::new(0.0, 0.0);
    let w = C64::new(0.1, 0.2);
    assert!(generator_matrix(&s, &[z, w], &p).is_err());
    assert!(generator_matrix(&s, &[w, w], &p).is_err());
    assert!(generator_matrix_rho(&s, &[w, w.conj()], 0.0, &p).is_err());
    assert!(generator_matrix_rho(&s, &[w, C64::new(1.0, 0.0)], 1.0, &p).is_err());
}

fn t1_defects(s: &TensorSpace, nu: f64) -> (f64, f64) {
    let basis = s.invariant_basis();
    assert!(basis.ncols() > 0);
    let legs = s.leg_count();
    let last = legs - 1;
    let d = s.dim();
    let r = |m: &DMatrix<C64>| TensorSpace::restrict(m, &basis).camax();
    let mut first: f64 = 0.0;
    for i in 1..last {
        let mut m = s.coupling(0, i).unwrap() + s.coupling(i, last).unwrap();
        for j in (1..last).filter(|&j| j != i) {
            m += s.coupling(i, j).unwrap();
        }
        m += DMatrix::<C64>::identity(d, d) * C64::new(s.leg_casimir(i), 0.0);
        first = first.max(r(&m));
    }
    let h = |l: usize| 0.5 * nu * s.leg_casimir(l);
    let mut m = DMatrix::<C64>::zeros(d, d);
    let mut shift = -2.0 / nu * h(0);
    for i in 1..last {
        shift += h(i) / nu;
        for j in i + 1..last {
            m += s.coupling(i, j).unwrap();
        }
    }
    m -= s.coupling(0, last).unwrap();
    m += DMatrix::<C64>::identity(d, d) * C64::new(shift, 0.0);
    (first, r(&m))
}

#[test]
fn invariance_identities_with_boundary_point() {
    for case in [InvariantCase::FundAntifund, InvariantCase::SelfAdjointFund] {
        let inv = build_invariant_space(case, 4).unwrap();
        let (a, b) = t1_defects(&inv.space, 0.2);
        assert!(a < 1e-12 && b < 1e-12, "{case:?}: {a:e} {b:e}");
    }
    let (a, b) = t1_defects(&su2_space(6), 0.25);
    assert!(a < 1e-12 && b < 1e-12);
}
