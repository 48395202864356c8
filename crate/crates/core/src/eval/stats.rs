use crate::error::{Error, Result};

/// Interquartile mean: drops `floor(n / 4)` values from each end of the
/// sorted sample and averages the rest.
pub fn iqm(values: &[f64]) -> Result<f64> {
    if values.len() < 4 {
        return Err(Error::TooFewValues {
            needed: 4,
            got: values.len(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("iqm input"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len() / 4;
    let mid = &v[k..v.len() - k];
    Ok(mean(mid))
}

/// `P(a < b)` over all pairs, ties counted as one half. Lower is better, so
/// this is the probability that `a` improves on `b`.
pub fn probability_of_improvement(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::TooFewValues {
            needed: 1,
            got: a.len().min(b.len()),
        });
    }
    // Sort b once, then count with binary searches: O((n + m) log m).
    let mut sb = b.to_vec();
    sb.sort_by(f64::total_cmp);
    let mut wins = 0.0;
    for &x in a {
        let below = sb.partition_point(|&y| y < x);
        let upto = sb.partition_point(|&y| y <= x);
        let ties = upto - below;
        wins += (sb.len() - upto) as f64 + 0.5 * ties as f64;
    }
    Ok(wins / (a.len() as f64 * b.len() as f64))
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population standard deviation.
pub fn std_dev(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

pub fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

/// Trailing-window mean and population SD. The first `window - 1` entries
/// use however many points are available.
pub fn rolling(values: &[f64], window: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if window == 0 {
        return Err(Error::Config("rolling window must be >= 1".into()));
    }
    let mut means = Vec::with_capacity(values.len());
    let mut sds = Vec::with_capacity(values.len());
    for i in 0..values.len() {
        let w = &values[(i + 1).saturating_sub(window)..=i];
        let m = mean(w);
        means.push(m);
        sds.push((w.iter().map(|x| (x - m).powi(2)).sum::<f64>() / w.len() as f64).sqrt());
    }
    Ok((means, sds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn iqm_examples() {
        let v: Vec<f64> = (1..=8).map(f64::from).collect();
        assert_eq!(iqm(&v).unwrap(), 4.5);
        assert_eq!(iqm(&[2.5; 9]).unwrap(), 2.5);
        assert_eq!(
            iqm(&[0.0, 0.0, 0.0, 0.0, 100.0, 100.0, 100.0, 100.0]).unwrap(),
            50.0
        );
        // n = 5 trims one from each side.
        assert_eq!(iqm(&[100.0, 1.0, 2.0, 3.0, -50.0]).unwrap(), 2.0);
        assert!(matches!(
            iqm(&[1.0, 2.0, 3.0]),
            Err(Error::TooFewValues { .. })
        ));
    }

    #[test]
    fn poi_examples() {
        let a = [1.0, 5.0, 2.0];
        assert_eq!(probability_of_improvement(&a, &a).unwrap(), 0.5);
        assert_eq!(
            probability_of_improvement(&[1.0, 2.0], &[3.0, 4.0]).unwrap(),
            1.0
        );
        assert_eq!(
            probability_of_improvement(&[1.0, 3.0], &[2.0, 4.0]).unwrap(),
            0.75
        );
        assert!(probability_of_improvement(&[], &[1.0]).is_err());
    }

    fn brute_poi(a: &[f64], b: &[f64]) -> f64 {
        let mut s = 0.0;
        for x in a {
            for y in b {
                s += if x < y {
                    1.0
                } else if x == y {
                    0.5
                } else {
                    0.0
                };
            }
        }
        s / (a.len() * b.len()) as f64
    }

    #[test]
    fn rolling_examples() {
        let v = [3.0, -1.0, 7.5];
        let (m, s) = rolling(&v, 1).unwrap();
        assert_eq!(m, v.to_vec());
        assert!(s.iter().all(|&x| x == 0.0));
        let (m, s) = rolling(&[4.0; 6], 3).unwrap();
        assert!(m.iter().all(|&x| x == 4.0) && s.iter().all(|&x| x == 0.0));
        let (m, _) = rolling(&[1.0, 2.0, 3.0, 4.0], 2).unwrap();
        assert_eq!(m, vec![1.0, 1.5, 2.5, 3.5]);
        assert!(rolling(&v, 0).is_err());
    }

    proptest! {
        #[test]
        fn iqm_bounded_and_permutation_invariant(
            mut v in prop::collection::vec(-1e3f64..1e3, 4..60),
            seed in any::<u64>(),
        ) {
            let x = iqm(&v).unwrap();
            let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(x >= lo - 1e-9 && x <= hi + 1e-9);
            use rand::seq::SliceRandom;
            v.shuffle(&mut crate::geometry::seeded_rng(seed));
            prop_assert!((iqm(&v).unwrap() - x).abs() <= 1e-9 * (1.0 + x.abs()));
        }

        #[test]
        fn poi_self_is_half(v in prop::collection::vec(-10i32..10, 1..40)) {
            let v: Vec<f64> = v.into_iter().map(f64::from).collect();
            prop_assert_eq!(probability_of_improvement(&v, &v).unwrap(), 0.5);
        }

        #[test]
        fn poi_matches_pairwise_count(
            a in prop::collection::vec(-5i32..5, 1..30),
            b in prop::collection::vec(-5i32..5, 1..30),
        ) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let p = probability_of_improvement(&a, &b).unwrap();
            prop_assert!((p - brute_poi(&a, &b)).abs() < 1e-12);
            let q = probability_of_improvement(&b, &a).unwrap();
            prop_assert!((p + q - 1.0).abs() < 1e-12);
        }
    }
}
