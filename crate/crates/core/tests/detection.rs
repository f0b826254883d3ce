// SPDX-License-Identifier: MIT OR Apache-2.0

use fused_cpd::detect::{hausdorff_distance, screen_group, screen_scalar};
use fused_cpd::signal::Series;
use proptest::prelude::*;

fn set() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::btree_set(1usize..200, 1..12).prop_map(|s| s.into_iter().collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn hausdorff_is_a_metric(a in set(), b in set(), c in set()) {
        let ab = hausdorff_distance(&a, &b).unwrap();
        prop_assert_eq!(hausdorff_distance(&a, &a).unwrap(), 0.0);
        prop_assert_eq!(ab, hausdorff_distance(&b, &a).unwrap());
        let bc = hausdorff_distance(&b, &c).unwrap();
        prop_assert!(hausdorff_distance(&a, &c).unwrap() <= ab + bc);
    }

    #[test]
    fn screen_ignores_constant_shift(x in prop::collection::vec(-30i32..30, 7..60),
                                     shift in -1000i32..1000, thr in 0.5f64..20.0,
                                     off in 1usize..3) {
        // Integer-valued data keeps differences exact under the shift.
        let base: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        let shifted: Vec<f64> = x.iter().map(|&v| (v + shift) as f64).collect();
        prop_assert_eq!(screen_scalar(&base, off, thr).unwrap().shat,
                        screen_scalar(&shifted, off, thr).unwrap().shat);
    }

    #[test]
    fn screen_is_monotone_in_threshold(x in prop::collection::vec(-3.0f64..3.0, 7..60),
                                       t1 in 0.01f64..3.0, t2 in 0.01f64..3.0, off in 1usize..3) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let big = screen_scalar(&x, off, lo).unwrap().shat;
        let small = screen_scalar(&x, off, hi).unwrap().shat;
        prop_assert!(small.iter().all(|i| big.contains(i)));
        let g = screen_group(&Series::scalar(x.clone()), off, lo).unwrap().shat;
        prop_assert_eq!(g, big);
    }
}
