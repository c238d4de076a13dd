use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpearmanResult {
    pub rho: f64,
    /// Two-sided, from the t approximation with n − 2 degrees of freedom.
    pub p_value: f64,
    pub n: usize,
}

/// 1-based ranks; tied values get the mean of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        // Positions start..end hold ranks start+1..=end.
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<SpearmanResult> {
    if x.len() != y.len() {
        return Err(Error::validation(format!(
            "spearman: vectors differ in length ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::validation("spearman needs at least three observations"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::validation("spearman: non-finite value"));
    }
    let rho = pearson(&average_ranks(x), &average_ranks(y))
        .ok_or_else(|| Error::validation("spearman: a constant vector has no rank correlation"))?;
    let df = (n - 2) as f64;
    let p_value = if rho.abs() >= 1.0 {
        0.0
    } else {
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
        (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
    };
    Ok(SpearmanResult { rho, p_value, n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Rank by counting: smaller values plus half the ties (including self).
    fn oracle_rho(x: &[f64], y: &[f64]) -> f64 {
        let rank = |v: &[f64]| -> Vec<f64> {
            v.iter()
                .map(|a| {
                    let less = v.iter().filter(|b| *b < a).count() as f64;
                    let eq = v.iter().filter(|b| *b == a).count() as f64;
                    less + (eq + 1.0) / 2.0
                })
                .collect()
        };
        let (rx, ry) = (rank(x), rank(y));
        let n = x.len() as f64;
        let sx: f64 = rx.iter().sum();
        let sy: f64 = ry.iter().sum();
        let sxy: f64 = rx.iter().zip(&ry).map(|(a, b)| a * b).sum();
        let sxx: f64 = rx.iter().map(|a| a * a).sum();
        let syy: f64 = ry.iter().map(|a| a * a).sum();
        (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
    }

    #[test]
    fn monotone() {
        let x = [1.0, 2.0, 5.0, 9.0, 11.0];
        let up = [0.1, 0.2, 3.0, 40.0, 41.0];
        let down = [5.0, 4.0, 3.0, 2.0, -1.0];
        assert_eq!(spearman(&x, &up).unwrap().rho, 1.0);
        assert_eq!(spearman(&x, &up).unwrap().p_value, 0.0);
        assert_eq!(spearman(&x, &down).unwrap().rho, -1.0);
    }

    #[test]
    fn errors() {
        assert!(spearman(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0]).is_err());
        assert!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap_err().is_validation());
        assert!(spearman(&[1.0, f64::NAN, 3.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn ties_average() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
    }

    #[test]
    fn p_value_closed_form() {
        // With two degrees of freedom the t CDF is 1/2 + t / (2 sqrt(2 + t²)).
        let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r.rho - 0.8).abs() < 1e-15);
        let t = 0.8 * (2.0f64 / (1.0 - 0.64)).sqrt();
        let expected = 1.0 - t / (2.0 + t * t).sqrt();
        assert!((r.p_value - expected).abs() < 1e-10, "{} vs {expected}", r.p_value);
    }

    fn tied_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec((0i32..6).prop_map(f64::from), n)
    }

    proptest! {
        #[test]
        fn matches_oracle((x, y) in (3usize..=8).prop_flat_map(|n| (tied_vec(n), tied_vec(n)))) {
            match spearman(&x, &y) {
                Ok(r) => prop_assert!((r.rho - oracle_rho(&x, &y)).abs() <= 1e-12),
                Err(_) => prop_assert!(oracle_rho(&x, &y).is_nan()),
            }
        }

        #[test]
        fn monotone_transform_invariant(x in proptest::collection::vec(-100.0f64..100.0, 3..40), seed in any::<u64>()) {
            let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| v * 0.3 + ((i as u64 ^ seed) % 17) as f64).collect();
            let Ok(base) = spearman(&x, &y) else { return Ok(()); };
            let tx: Vec<f64> = x.iter().map(|v| (v / 10.0).exp()).collect();
            let ty: Vec<f64> = y.iter().map(|v| v.powi(3) - 7.0).collect();
            let r = spearman(&tx, &ty).unwrap();
            prop_assert!((r.rho - base.rho).abs() < 1e-12);
        }
    }
}
