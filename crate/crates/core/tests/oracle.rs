mod support;

use proptest::prelude::*;
use support::{naive_tipup, naive_topup, random_series};
use tenrank_core::moments::{self, MomentOptions};
use tenrank_core::Method;

fn case() -> impl Strategy<Value = (Vec<usize>, usize, usize, usize, u64)> {
    (prop::collection::vec(1usize..=3, 1..=3), 2usize..=6, any::<u64>()).prop_flat_map(
        |(dims, t, seed)| {
            let order = dims.len();
            let hmax = 2.min(t - 1);
            (Just(dims), Just(t), 1..=hmax, 0..order, Just(seed))
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn stats_match_index_loops((dims, t, h0, k, seed) in case()) {
        let s = random_series(&dims, t, seed);
        let tip = moments::tipup(&s, k, h0).unwrap();
        let top = moments::topup(&s, k, h0).unwrap();
        let want_tip = naive_tipup(&s, k, h0);
        let want_top = naive_topup(&s, k, h0);
        prop_assert_eq!(tip.stat().unwrap().shape(), want_tip.shape());
        prop_assert_eq!(top.stat().unwrap().shape(), want_top.shape());
        prop_assert!((tip.stat().unwrap() - &want_tip).amax() <= 1e-12);
        prop_assert!((top.stat().unwrap() - &want_top).amax() <= 1e-12);
    }

    #[test]
    fn gram_route_matches_materialized((dims, t, h0, k, seed) in case()) {
        let s = random_series(&dims, t, seed);
        let full = moments::topup(&s, k, h0).unwrap();
        let lean = moments::moment(&s, Method::Topup, k, h0, &MomentOptions::gram_only()).unwrap();
        prop_assert!(lean.stat().is_none());
        let scale = full.gram().amax().max(1.0);
        prop_assert!((full.gram() - lean.gram()).amax() <= 1e-12 * scale);
    }
}

#[test]
fn column_counts_follow_shape_formula() {
    let s = random_series(&[2, 3, 4], 5, 1);
    for k in 0..3 {
        let dk = s.dims()[k];
        let rest = 24 / dk;
        assert_eq!(moments::topup(&s, k, 2).unwrap().stat().unwrap().ncols(), rest * dk * rest * 2);
        assert_eq!(moments::tipup(&s, k, 2).unwrap().stat().unwrap().ncols(), dk * 2);
    }
}
