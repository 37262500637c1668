use std::sync::Arc;

use borderlab::geometry::{cutoff_profile, SmoothDomain};
use borderlab::linalg::dist;
use borderlab::pdmp::{apply_generator, sample_post_jump, validate_row, PdmpTriplet};
use borderlab::phage::{build_q, drift_eval, interior_drift, steady_drift, PhageRates};
use borderlab::stats::pairwise_sum;
use borderlab::value::f_n_eval;
use proptest::prelude::*;

fn domains() -> Vec<SmoothDomain> {
    vec![
        SmoothDomain::ball(vec![0.1, -0.2], 1.3).unwrap(),
        SmoothDomain::annulus(vec![0.0, 0.0], 0.4, 1.0).unwrap(),
        SmoothDomain::interval(-1.0, 2.0).unwrap(),
    ]
}

fn point(d: &SmoothDomain, a: f64, b: f64) -> Vec<f64> {
    if d.dim() == 1 {
        vec![a]
    } else {
        vec![a, b]
    }
}

fn rates() -> impl Strategy<Value = PhageRates> {
    (prop::collection::vec(0.01f64..100.0, 10), 1u32..20, 0.01f64..0.33).prop_map(|(k, n, r)| PhageRates {
        k1: k[0],
        k_neg1: k[1],
        k2: k[2],
        k_neg2: k[3],
        k3: k[4],
        k_neg3: k[5],
        k4: k[6],
        k_neg4: k[7],
        k5: k[8],
        k6: k[9],
        n_copies: n,
        r,
    })
}

proptest! {
    #[test]
    fn signed_distance_is_one_lipschitz(a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0, e in -2.0f64..2.0) {
        for d in domains() {
            let (x, y) = (point(&d, a, b), point(&d, c, e));
            let gap = (d.signed_distance(&x).unwrap() - d.signed_distance(&y).unwrap()).abs();
            prop_assert!(gap <= dist(&x, &y) + 1e-12);
        }
    }

    #[test]
    fn tube_points_are_reconstructed_from_their_frame(a in -2.0f64..2.0, b in -2.0f64..2.0) {
        for d in domains() {
            let x = point(&d, a, b);
            if let Ok(f) = d.boundary_frame_in_tube(&x) {
                let back: Vec<f64> = f.foot.iter().zip(&f.normal).map(|(p, n)| p - f.distance * n).collect();
                prop_assert!(dist(&x, &back) < 1e-12);
            }
        }
    }

    #[test]
    fn cutoff_matches_distance_on_the_tube(t in 0.0f64..0.5) {
        let eps0 = 0.5;
        prop_assert!((cutoff_profile(t, eps0) - t).abs() < 1e-15);
    }

    #[test]
    fn targets_decrease_in_n(x in -0.5f64..1.5, n in 1usize..50) {
        let k = SmoothDomain::interval(0.0, 1.0).unwrap();
        let a = f_n_eval(&k, Some(n), &[x]).unwrap();
        let b = f_n_eval(&k, Some(n + 1), &[x]).unwrap();
        prop_assert!(b <= a && (0.0..=1.0).contains(&a));
        prop_assert!(f_n_eval(&k, None, &[x]).unwrap() <= b);
    }

    #[test]
    fn phage_q_is_stochastic_with_zero_diagonal(r in rates()) {
        for (i, row) in build_q(&r).iter().enumerate() {
            prop_assert!(validate_row(row, i).is_ok());
        }
    }

    #[test]
    fn phage_drift_is_continuous_off_the_inner_circle(r in rates(), angle in 0.0f64..6.3) {
        let at = |s: f64| [s.sqrt() * angle.cos(), s.sqrt() * angle.sin()];
        for s in [2.0 * r.r, 1.0 - r.r, 1.0] {
            for m in 0..4 {
                let lo = drift_eval(&r, m, &at(s - 1e-11)).unwrap();
                let hi = drift_eval(&r, m, &at(s + 1e-11)).unwrap();
                // the cutoff has slope 1/r, so the gap scales with |b|/r
                let tol = 1e-8 * (1.0 + steady_drift(&r, m, &at(s)).iter().map(|v| v.abs()).sum::<f64>()) / r.r;
                prop_assert!((lo[0] - hi[0]).abs() < tol && (lo[1] - hi[1]).abs() < tol);
            }
        }
        // the lysis field on the circle versus the vanishing interior limit
        let x = at(r.r);
        let on = drift_eval(&r, 0, &x).unwrap();
        prop_assert!(on[0].hypot(on[1]) > 0.0);
        let scale = 1.0 + steady_drift(&r, 0, &x).iter().map(|v| v.abs()).sum::<f64>();
        prop_assert!(interior_drift(&r, 0, &x).iter().all(|v| v.abs() < 1e-10 * scale));
    }

    #[test]
    fn transcription_is_the_only_mode_effect_at_the_origin(r in rates()) {
        let o = [0.0, 0.0];
        prop_assert_eq!(steady_drift(&r, 0, &o), steady_drift(&r, 2, &o));
        prop_assert_eq!(steady_drift(&r, 0, &o), steady_drift(&r, 3, &o));
        prop_assert_eq!(steady_drift(&r, 1, &o)[0] - steady_drift(&r, 0, &o)[0], r.n_copies as f64);
    }

    #[test]
    fn post_jump_lands_on_a_positive_entry(r in rates(), u in 0.0f64..1.0, mode in 0usize..4) {
        let t = borderlab::phage::PhageModel::new(PhageRates { r: 0.1, ..r }).unwrap().triplet;
        let j = sample_post_jump(&t, mode, u).unwrap();
        prop_assert!(t.transition()[mode][j] > 0.0 && j != mode);
    }

    #[test]
    fn mode_constant_linear_test_functions_see_only_the_flow(
        slope in -3.0f64..3.0, b0 in -2.0f64..2.0, b1 in -2.0f64..2.0, theta in 0.0f64..10.0, x in -1.0f64..1.0
    ) {
        let t = PdmpTriplet::new(
            vec!["a".into(), "b".into()],
            1,
            Arc::new(move |m, _, _| vec![if m == 0 { b0 } else { b1 }]),
            Arc::new(move |_, _, _| theta),
            theta,
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        ).unwrap();
        let f = move |_: usize, y: &[f64]| slope * y[0];
        let g = apply_generator(&t, &f, None, 0, &[x], &[]).unwrap();
        prop_assert!((g - b0 * slope).abs() < 1e-6);
    }

    #[test]
    fn pairwise_sum_matches_exact_integer_sums(v in prop::collection::vec(-1000i32..1000, 0..500)) {
        let f: Vec<f64> = v.iter().map(|&i| i as f64).collect();
        prop_assert_eq!(pairwise_sum(&f), v.iter().map(|&i| i as i64).sum::<i64>() as f64);
    }
}
