use tenrank_core::{Tensor, TensorSeries};

use crate::error::{Error, Result};

/// Subtract the entrywise time average.
pub fn demean(series: &TensorSeries) -> Result<TensorSeries> {
    if series.len() < 2 {
        return Err(Error::input("demeaning needs at least 2 observations"));
    }
    let n = series.entries_per_obs();
    let mut mean = vec![0.0; n];
    for x in series.iter() {
        mean.iter_mut().zip(x.data()).for_each(|(m, v)| *m += v);
    }
    let t = series.len() as f64;
    mean.iter_mut().for_each(|m| *m /= t);
    let obs = series
        .iter()
        .map(|x| {
            let data = x.data().iter().zip(&mean).map(|(v, m)| v - m).collect();
            Tensor::new(x.dims().to_vec(), data)
        })
        .collect::<tenrank_core::Result<Vec<_>>>()?;
    Ok(TensorSeries::new(obs)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(f: impl Fn(usize, usize) -> f64) -> TensorSeries {
        let obs = (0..5)
            .map(|t| Tensor::from_fn(&[3, 2], |i| f(t, i[0] + 3 * i[1])).unwrap())
            .collect();
        TensorSeries::new(obs).unwrap()
    }

    #[test]
    fn constant_becomes_zero() {
        let out = demean(&series(|_, i| i as f64 * 1.5 - 2.0)).unwrap();
        assert!(out.iter().all(|x| x.max_abs() == 0.0));
    }

    #[test]
    fn output_is_centered_and_idempotent() {
        let s = series(|t, i| ((t * 7 + i * 3) % 5) as f64 + 0.1 * t as f64);
        let once = demean(&s).unwrap();
        for i in 0..6 {
            let m: f64 = once.iter().map(|x| x.data()[i]).sum::<f64>() / 5.0;
            assert!(m.abs() < 1e-12);
        }
        let twice = demean(&once).unwrap();
        for (a, b) in once.iter().zip(twice.iter()) {
            for (u, v) in a.data().iter().zip(b.data()) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }
}
