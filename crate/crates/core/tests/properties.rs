use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use proptest::prelude::*;

use sle_wzw::lie_algebra::{build_generators, Weight};
use sle_wzw::sle_sim::{
    deterministic_flow, split_step, step_sle, step_sle_rho, GaugeSetup, ObservableSetup, SlePathState,
};

fn upper() -> impl Strategy<Value = C64> {
    (-2.0..2.0f64, 0.3..2.0f64).prop_map(|(re, im)| C64::new(re, im))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reflection_and_monotone_height(z in upper(), noise in prop::collection::vec(-0.02..0.02f64, 50), kappa in 0.0..6.0f64) {
        let mut s = SlePathState::new(z, None, 1);
        let mut im = z.im;
        for dxi in noise {
            step_sle(&mut s, 1e-4, dxi, kappa).unwrap();
            if s.discarded { break; }
            prop_assert_eq!(s.w[1], s.w[0].conj());
            prop_assert_eq!(s.deriv[1], s.deriv[0].conj());
            prop_assert!(s.w[0].im < im);
            im = s.w[0].im;
        }
    }

    #[test]
    fn rho_zero_is_plain_sle(z in upper(), y in 0.5..3.0f64, noise in prop::collection::vec(-0.02..0.02f64, 20)) {
        let mut a = SlePathState::new(z, Some(y), 1);
        let mut b = SlePathState::new(z, None, 1);
        for dxi in noise {
            step_sle_rho(&mut a, 1e-4, dxi, 2.0, 0.0).unwrap();
            step_sle(&mut b, 1e-4, dxi, 2.0).unwrap();
        }
        prop_assert_eq!(a.w, b.w);
        prop_assert_eq!(a.deriv, b.deriv);
    }

    #[test]
    fn noiseless_splitting_follows_closed_form(z in upper(), steps in 1usize..200) {
        let dt = 1e-4;
        let (mut w, mut d, mut y) = (z, C64::new(1.0, 0.0), None);
        for _ in 0..steps {
            split_step(&mut w, &mut d, &mut y, dt, 0.0, 0.0, 0.0);
        }
        let (we, de) = deterministic_flow(z, steps as f64 * dt);
        prop_assert!((w - we).norm() < 1e-12 && (d - de).norm() < 1e-12);
    }

    #[test]
    fn mobius_keeps_upper_half_plane(z in upper(), y in prop_oneof![-3.0..-0.2f64, 0.2..3.0f64]) {
        let (m, dm) = ObservableSetup::mobius(z, C64::new(1.0, 0.0), y);
        prop_assert!(m.im > 0.0);
        // derivative of y w / (y − w)
        let h = 1e-6;
        let (mh, _) = ObservableSetup::mobius(z + h, C64::new(1.0, 0.0), y);
        prop_assert!(((mh - m) / h - dm).norm() < 1e-4 * (1.0 + dm.norm()));
    }

    #[test]
    fn gauge_drift_two_ways(n in 2usize..5, w1 in upper(), w2 in upper()) {
        let g = build_generators(n, &Weight::fundamental(n, 1).unwrap()).unwrap();
        let s = GaugeSetup::new(&g, &g.conjugate());
        let (c1, c2) = (C64::new(1.0, 0.0) / w1, C64::new(1.0, 0.0) / w2.conj());
        let d: DMatrix<C64> = s.drift_direct(c1, c2) - s.drift_via_couplings(c1, c2);
        prop_assert!(d.camax() < 1e-12);
    }
}
