//! Randomized property suites across the numerical core.

mod suites;

use proptest::prelude::*;
use suites::*;

fn power_log_weight() -> impl Strategy<Value = String> {
    (-0.9f64..3.0, -2.0f64..2.0).prop_map(|(a, b)| power_log(a, b))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn gauss_exact_on_monomials(q in 1usize..=16, a in -3.0f64..3.0, len in 0.01f64..4.0) {
        let r = gauss_exact(q, a, len);
        prop_assert!(r.is_ok(), "{:?}", r);
    }

    #[test]
    fn additivity(e in -1.5f64..1.5, c in 0.05f64..2.0, a in 0.0f64..2.0, l1 in 0.1f64..5.0, l2 in 0.1f64..5.0) {
        let r = interval_additivity(e, c, a, l1, l2);
        prop_assert!(r.is_ok(), "{:?}", r);
    }

    #[test]
    fn norm_monotone_in_interval(e in -0.45f64..2.0, a in 0.0f64..4.0, l in 0.1f64..50.0, s in 0.0f64..1.0, t in 0.0f64..1.0) {
        let r = norm_monotone(e, a, l, s, t);
        prop_assert!(r.is_ok(), "{:?}", r);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn doubling_constant_at_least_one(src in power_log_weight(), delta in prop_oneof![Just(0.0), 0.1f64..4.0]) {
        let r = doubling_at_least_one(&src, delta);
        prop_assert!(r.is_ok(), "{:?}", r);
    }

    #[test]
    fn closure_under_powers_of_x(src in power_log_weight()) {
        let r = closure_under_powers(&src);
        prop_assert!(r.is_ok(), "{:?}", r);
    }

    #[test]
    fn member_is_never_weakly_violated(src in power_log_weight()) {
        let r = member_not_weakly_violated(&src);
        prop_assert!(r.is_ok(), "{:?}", r);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn criteria_scale_covariance(a in 0.0f64..0.45, b in 1.0f64..3.0, c in 0.1f64..10.0) {
        let r = scale_covariance(a, b, c);
        prop_assert!(r.is_ok(), "{:?}", r);
    }

    #[test]
    fn factors_monotone_along_curves(a in -0.4f64..0.45, b in 0.6f64..4.0, n in 0usize..=2) {
        let r = factors_monotone(a, b, n);
        prop_assert!(r.is_ok(), "{:?}", r);
    }

    #[test]
    fn causality_zeros_and_triangle(
        c in proptest::collection::vec(-2.0f64..2.0, 1..=3),
        a in 0.0f64..0.45,
        b in 1.0f64..3.0,
        r in 2.0f64..64.0,
    ) {
        let res = causality_and_triangle(&c, a, b, r);
        prop_assert!(res.is_ok(), "{:?}", res);
    }
}
