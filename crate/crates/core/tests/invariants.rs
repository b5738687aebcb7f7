mod support;

use nalgebra::DMatrix;
use proptest::prelude::*;
use support::{random_orthonormal, random_series};
use tenrank_core::criteria::{default_schedule, er_select, ic_select, tune_c, TuneOptions};
use tenrank_core::iterative::project_except;
use tenrank_core::moments;
use tenrank_core::tensor::mode_refold;
use tenrank_core::{Method, Tensor, TensorSeries};

fn dims_strategy(max_order: usize, max_dim: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..=max_dim, 1..=max_order)
}

fn tensor_strategy() -> impl Strategy<Value = Tensor> {
    dims_strategy(4, 4).prop_flat_map(|dims| {
        let n: usize = dims.iter().product();
        prop::collection::vec(-10.0f64..10.0, n)
            .prop_map(move |data| Tensor::new(dims.clone(), data).unwrap())
    })
}

fn spectrum(s: &TensorSeries, method: Method, k: usize, h0: usize) -> Vec<f64> {
    let m = moments::moment(s, method, k, h0, &Default::default()).unwrap();
    moments::spectrum(&m).unwrap().values
}

fn assert_close(a: &[f64], b: &[f64], rel: f64) -> Result<(), TestCaseError> {
    let scale = a.iter().chain(b).fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    for (x, y) in a.iter().zip(b) {
        prop_assert!((x - y).abs() <= rel * scale, "{x} vs {y} (scale {scale})");
    }
    Ok(())
}

fn sorted_desc() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1e3, 3..12).prop_map(|mut v| {
        v.sort_by(|a, b| b.total_cmp(a));
        v
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn unfold_refold_round_trip(x in tensor_strategy(), k in 0usize..4) {
        let k = k % x.order();
        let m = x.unfold(k).unwrap();
        prop_assert_eq!(m.nrows(), x.dims()[k]);
        let back = mode_refold(&m, k, x.dims()).unwrap();
        prop_assert_eq!(back, x);
    }

    #[test]
    fn mode_products_compose(x in tensor_strategy(), k in 0usize..4, seed in any::<u64>(), p in 1usize..4, q in 1usize..4) {
        let k = k % x.order();
        let dk = x.dims()[k];
        let mut r = support::rng(seed);
        use rand::Rng;
        let u = DMatrix::from_fn(p, dk, |_, _| r.random_range(-1.0..1.0));
        let v = DMatrix::from_fn(q, p, |_, _| r.random_range(-1.0..1.0));
        let two = x.mode_product(&u, k).unwrap().mode_product(&v, k).unwrap();
        let one = x.mode_product(&(&v * &u), k).unwrap();
        prop_assert_eq!(two.dims(), one.dims());
        let scale = one.max_abs().max(1.0);
        for (a, b) in two.data().iter().zip(one.data()) {
            prop_assert!((a - b).abs() <= 1e-10 * scale);
        }
        // mat_k(X ×_k U) = U mat_k(X)
        let lhs = x.mode_product(&u, k).unwrap().unfold(k).unwrap();
        let rhs = &u * x.unfold(k).unwrap();
        prop_assert!((lhs - rhs).amax() <= 1e-10 * scale);
    }

    #[test]
    fn products_on_distinct_modes_commute(x in tensor_strategy(), seed in any::<u64>()) {
        prop_assume!(x.order() >= 2);
        let mut r = support::rng(seed);
        use rand::Rng;
        let a = DMatrix::from_fn(2, x.dims()[0], |_, _| r.random_range(-1.0..1.0));
        let b = DMatrix::from_fn(3, x.dims()[1], |_, _| r.random_range(-1.0..1.0));
        let ab = x.mode_product(&a, 0).unwrap().mode_product(&b, 1).unwrap();
        let ba = x.mode_product(&b, 1).unwrap().mode_product(&a, 0).unwrap();
        for (p, q) in ab.data().iter().zip(ba.data()) {
            prop_assert!((p - q).abs() <= 1e-10 * ab.max_abs().max(1.0));
        }
    }

    #[test]
    fn spectra_invariant_under_orthogonal_rotation(
        dims in prop::collection::vec(2usize..=4, 1..=3),
        t in 4usize..=8,
        h0 in 1usize..=2,
        seed in any::<u64>(),
    ) {
        let s = random_series(&dims, t, seed);
        let qs: Vec<DMatrix<f64>> = dims.iter().enumerate()
            .map(|(j, &d)| random_orthonormal(d, d, seed.wrapping_add(j as u64 + 1)))
            .collect();
        let rotated = s.map(|x| {
            let mut y = x.clone();
            for (j, q) in qs.iter().enumerate() {
                y = y.mode_product(q, j)?;
            }
            Ok(y)
        }).unwrap();
        for k in 0..dims.len() {
            for method in [Method::Topup, Method::Tipup] {
                assert_close(&spectrum(&s, method, k, h0), &spectrum(&rotated, method, k, h0), 1e-9)?;
            }
        }
    }

    #[test]
    fn spectra_scale_with_fourth_power(
        dims in prop::collection::vec(2usize..=4, 1..=3),
        t in 3usize..=7,
        c in 0.1f64..10.0,
        seed in any::<u64>(),
    ) {
        let s = random_series(&dims, t, seed);
        let scaled = s.map(|x| Ok(x.scale(c))).unwrap();
        let c4 = c.powi(4);
        for k in 0..dims.len() {
            for method in [Method::Topup, Method::Tipup] {
                let base: Vec<f64> = spectrum(&s, method, k, 1).iter().map(|v| v * c4).collect();
                assert_close(&base, &spectrum(&scaled, method, k, 1), 1e-9)?;
            }
        }
    }

    #[test]
    fn vector_series_topup_equals_tipup(d in 1usize..=8, t in 2usize..=10, h0 in 1usize..=3, seed in any::<u64>()) {
        prop_assume!(h0 < t);
        let s = random_series(&[d], t, seed);
        let top = moments::topup(&s, 0, h0).unwrap();
        let tip = moments::tipup(&s, 0, h0).unwrap();
        prop_assert_eq!(top.stat().unwrap(), tip.stat().unwrap());
        prop_assert_eq!(top.gram(), tip.gram());
    }

    #[test]
    fn gram_is_symmetric_psd(dims in prop::collection::vec(1usize..=4, 1..=3), t in 2usize..=6, seed in any::<u64>()) {
        let s = random_series(&dims, t, seed);
        for k in 0..dims.len() {
            for method in [Method::Topup, Method::Tipup] {
                let m = moments::moment(&s, method, k, 1, &Default::default()).unwrap();
                let g = m.gram();
                let scale = g.amax().max(f64::MIN_POSITIVE);
                prop_assert!((g - g.transpose()).amax() <= 1e-12 * scale);
                let values = moments::spectrum(&m).unwrap().values;
                prop_assert!(values.windows(2).all(|w| w[0] >= w[1]));
                prop_assert!(values.iter().all(|&v| v >= 0.0));
            }
        }
    }

    #[test]
    fn er_rank_invariant_under_joint_scaling(values in sorted_desc(), h in 1e-3f64..10.0, c in 0.05f64..20.0) {
        let m_star = values.len() - 1;
        let c4 = c.powi(4);
        let scaled: Vec<f64> = values.iter().map(|v| v * c4).collect();
        let a = er_select(&values, h, m_star).unwrap();
        let b = er_select(&scaled, h * c4, m_star).unwrap();
        prop_assert_eq!(a.rank, b.rank);
    }

    #[test]
    fn er_ratios_bounded_and_argmin_exhaustive(values in sorted_desc(), h in 1e-3f64..10.0) {
        let m_star = values.len() - 1;
        let sel = er_select(&values, h, m_star).unwrap();
        prop_assert!(sel.objective_curve.iter().all(|&r| r > 0.0 && r <= 1.0));
        let mut best = 1;
        for m in 1..=m_star {
            let r = (values[m] + h) / (values[m - 1] + h);
            let b = (values[best] + h) / (values[best - 1] + h);
            if r < b {
                best = m;
            }
        }
        prop_assert_eq!(sel.rank, best);
    }

    #[test]
    fn ic_rank_non_increasing_in_penalty(values in sorted_desc(), g_lo in 1e-3f64..1e3) {
        let m_star = values.len() - 1;
        let mut prev = usize::MAX;
        for step in 0..25 {
            let g = g_lo * 1.5f64.powi(step);
            let r = ic_select(&values, g, m_star).unwrap().rank;
            prop_assert!(r <= prev);
            prev = r;
        }
    }

    #[test]
    fn projected_statistics_ignore_basis_rotation(seed in any::<u64>(), r in 1usize..=3) {
        let dims = [4usize, 5, 3];
        let s = random_series(&dims, 6, seed);
        let bases: Vec<DMatrix<f64>> = dims.iter().enumerate()
            .map(|(j, &d)| random_orthonormal(d, r.min(d), seed ^ (j as u64 + 11)))
            .collect();
        let rotated: Vec<DMatrix<f64>> = bases.iter().enumerate()
            .map(|(j, b)| b * random_orthonormal(b.ncols(), b.ncols(), seed ^ (j as u64 + 97)))
            .collect();
        for k in 0..3 {
            let z1 = s.map(|x| project_except(x, &bases, k)).unwrap();
            let z2 = s.map(|x| project_except(x, &rotated, k)).unwrap();
            for method in [Method::Topup, Method::Tipup] {
                assert_close(&spectrum(&z1, method, k, 1), &spectrum(&z2, method, k, 1), 1e-9)?;
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn tune_c_ranks_non_increasing_in_c(seed in any::<u64>(), method in prop_oneof![Just(Method::Tipup), Just(Method::Topup)]) {
        let s = random_series(&[6, 5], 12, seed);
        let opts = TuneOptions {
            method,
            variant: 2,
            nu: 0.0,
            h0: 1,
            m_star: 4,
            c_grid: TuneOptions::log_grid(1e-4, 1e2, 25),
            schedule: default_schedule(&[6, 5], 12, 4),
            moment: Default::default(),
        };
        for k in 0..2 {
            let res = tune_c(&s, k, &opts).unwrap();
            prop_assert!(res.stability.iter().all(|&v| v >= 0.0));
            for j in 0..opts.schedule.len() {
                for w in res.ranks.windows(2) {
                    prop_assert!(w[1][j] <= w[0][j]);
                }
            }
            for (ranks, &sv) in res.ranks.iter().zip(&res.stability) {
                if ranks.iter().all(|&r| r == ranks[0]) {
                    prop_assert!(sv < 1e-12);
                }
            }
        }
    }
}
