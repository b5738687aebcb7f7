mod support;

use nalgebra::DMatrix;
use tenrank_core::iterative::{iterate, one_step};
use tenrank_core::moments::{self, tau_diagnostic};
use tenrank_core::simgen::{self, generate, replication_seed, ModelKind, ModelSpec};
use tenrank_core::{io, IterOptions, Method, PenaltySpec, Tensor, TensorSeries};

// IC penalties do not scale with the data, so the signal is amplified until
// its smallest non-zero eigenvalue clears g for every seed.
fn noiseless(seed: u64) -> TensorSeries {
    let phi = DMatrix::from_row_slice(2, 3, &[0.8, 0.5, 0.3, 0.6, 0.4, 0.7]);
    let spec = ModelSpec::custom(6, 5, 50, phi, seed)
        .unwrap()
        .with_noise_scale(0.0);
    generate(&spec).unwrap().series.map(|x| Ok(x.scale(100.0))).unwrap()
}

#[test]
fn noiseless_ranks_recovered_by_every_estimator() {
    for r in 0..100 {
        let s = noiseless(replication_seed(5, r));
        for method in [Method::Topup, Method::Tipup] {
            for pen in [PenaltySpec::ic(2).unwrap(), PenaltySpec::er(1).unwrap()] {
                let opts = IterOptions::new(method, pen).with_m_star(vec![5, 4]);
                let res = iterate(&s, &opts).unwrap();
                for stage in [res.initial(), res.one_step(), res.final_ranks()] {
                    assert_eq!(stage, &[2, 3], "{method} {} seed {r}", pen.label());
                }
            }
        }
    }
}

#[test]
fn stages_line_up_with_history() {
    let spec = ModelSpec::preset(ModelKind::M1, 12, 10, 80, 3).unwrap();
    let s = generate(&spec).unwrap().series;
    let opts = IterOptions::new(Method::Tipup, PenaltySpec::er(1).unwrap());
    let full = iterate(&s, &opts).unwrap();
    let one = one_step(&s, &opts).unwrap();
    assert_eq!(full.initial(), full.history[0].selected.as_slice());
    assert_eq!(full.one_step(), full.history[1].selected.as_slice());
    assert_eq!(one.history.len(), 2);
    assert_eq!(one.final_ranks(), full.one_step());
    assert_eq!(full.final_ranks(), full.history.last().unwrap().selected.as_slice());
    for state in &full.history[1..] {
        for (k, b) in state.bases.iter().enumerate() {
            assert_eq!(b.ncols(), state.ranks[k]);
            let gram = b.transpose() * b;
            assert!((gram - DMatrix::identity(b.ncols(), b.ncols())).amax() < 1e-10);
        }
    }
}

#[test]
fn iteration_reports_non_convergence() {
    let s = support::random_series(&[6, 6], 20, 4);
    let opts = IterOptions::new(Method::Tipup, PenaltySpec::ic(2).unwrap()).with_max_iter(1);
    let res = iterate(&s, &opts).unwrap();
    assert_eq!(res.iterations(), 1);
    assert!(res.final_ranks().iter().all(|&r| r <= 3));
}

/// Two factor rows: the second alternates sign across columns so its lag-one
/// inner products cancel, while its outer products do not.
fn cancelling_series() -> TensorSeries {
    let u = support::random_orthonormal(5, 2, 1);
    let v = support::random_orthonormal(4, 2, 2);
    let t_len = 60;
    let obs: Vec<DMatrix<f64>> = (0..t_len)
        .map(|t| {
            let pos = t % 6;
            let p = if pos == 0 || pos == 1 { 1.0 } else { 0.0 };
            let q = if pos == 3 || pos == 4 { 1.0 } else { 0.0 };
            let sign = if t % 2 == 0 { 1.0 } else { -1.0 };
            let f = DMatrix::from_row_slice(2, 2, &[p, 0.0, q, sign * q]);
            &u * f * v.transpose()
        })
        .collect();
    TensorSeries::from_matrices(&obs).unwrap()
}

#[test]
fn tipup_loses_cancelled_direction_topup_keeps_it() {
    let s = cancelling_series();
    let tip = moments::spectrum(&moments::tipup(&s, 0, 1).unwrap()).unwrap().values;
    let top = moments::spectrum(&moments::topup(&s, 0, 1).unwrap()).unwrap().values;
    assert!(tip[0] > 1e-3);
    assert!(tip[1] <= 1e-12 * tip[0], "tipup {tip:?}");
    assert!(top[1] > 1e-3 * top[0], "topup {top:?}");

    let table = tau_diagnostic(&s, 0, 2, &[1, 2, 3, 4], 0.5).unwrap();
    assert_eq!(table.rows.len(), 4);
    assert!(table.rows[0].tipup[1] <= 1e-6 * table.rows[0].tipup[0]);
    // Longer lags pick the second direction up again.
    assert!(table.rows[1].tipup[1] > 1e-3 * table.rows[1].tipup[0]);
    let norm = table.normalized(Method::Tipup);
    assert!((norm[3].1[0] - table.rows[3].tipup[0] / 2.0).abs() < 1e-12);
}

#[test]
fn tau_rows_agree_with_direct_statistics() {
    let s = support::random_series(&[3, 4], 15, 9);
    let table = tau_diagnostic(&s, 1, 3, &[1, 2, 3], 0.5).unwrap();
    for row in &table.rows {
        let tip = moments::spectrum(&moments::tipup(&s, 1, row.h0).unwrap()).unwrap().values;
        let top = moments::spectrum(&moments::topup(&s, 1, row.h0).unwrap()).unwrap().values;
        for m in 0..3 {
            assert!((row.tipup[m] - tip[m].sqrt()).abs() < 1e-9 * tip[0].sqrt());
            assert!((row.topup[m] - top[m].sqrt()).abs() < 1e-9 * top[0].sqrt());
        }
    }
}

#[test]
fn lag_two_of_period_four_pattern_vanishes() {
    // x_t follows 1,1,0,0,...; every lag-2 product is zero.
    let obs: Vec<Tensor> = (0..12)
        .map(|t| Tensor::new(vec![2], vec![[1.0, 1.0, 0.0, 0.0][t % 4], 0.0]).unwrap())
        .collect();
    let s = TensorSeries::new(obs).unwrap();
    let grams = moments::lag_grams(&s, Method::Tipup, 0, 2).unwrap();
    assert!(grams[0].amax() > 0.0);
    assert_eq!(grams[1].amax(), 0.0);
}

#[test]
fn stationary_factor_variance() {
    let phi = simgen::make_phi(ModelKind::M4).unwrap();
    let f = simgen::gen_factors(&phi, 20_000, 11).unwrap();
    let n = f.len() as f64;
    let var = f.iter().map(|m| m[(0, 0)].powi(2)).sum::<f64>() / n;
    let expected = 1.0 / (1.0 - 0.98f64.powi(2));
    assert!((var / expected - 1.0).abs() < 0.25, "{var} vs {expected}");
    let var2 = f.iter().map(|m| m[(1, 1)].powi(2)).sum::<f64>() / n;
    assert!((var2 / (1.0 / (1.0 - 0.0225)) - 1.0).abs() < 0.05);
}

#[test]
fn noise_has_equicorrelated_rows_and_columns() {
    let e = simgen::gen_noise(4, 3, 20_000, 0.2, 8).unwrap();
    let n = e.len() as f64;
    let cov = |a: (usize, usize), b: (usize, usize)| e.iter().map(|m| m[a] * m[b]).sum::<f64>() / n;
    assert!((cov((0, 0), (0, 0)) - 1.0).abs() < 0.05);
    assert!((cov((0, 0), (1, 0)) - 0.2).abs() < 0.03);
    assert!((cov((0, 0), (0, 1)) - 0.2).abs() < 0.03);
    assert!((cov((0, 0), (1, 1)) - 0.04).abs() < 0.03);
}

#[test]
fn weak_loadings_shrink_with_dimension() {
    let (a1, _) = simgen::gen_loadings(ModelKind::M2, 400, 10, 5, 5, 2).unwrap();
    let col_var = |c: usize| a1.column(c).iter().map(|v| v * v).sum::<f64>() / 400.0;
    assert!((col_var(0) - 1.0).abs() < 0.2);
    let weak = 400f64.powf(-0.4);
    assert!((col_var(4) / weak - 1.0).abs() < 0.2);
}

#[test]
fn tfms_file_round_trip() {
    let s = noiseless(1);
    let path = std::env::temp_dir().join(format!("tenrank-core-{}.tfms", std::process::id()));
    io::save(&path, &s).unwrap();
    let back = io::load(&path).unwrap();
    std::fs::remove_file(&path).ok();
    assert_eq!(back, s);
}
