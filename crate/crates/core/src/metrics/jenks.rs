use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinBreaks {
    pub k: usize,
    /// Upper bounds of classes 0..k−1, strictly increasing.
    pub breaks: Vec<f64>,
    /// Total within-class sum of squared deviations on the fitted data.
    pub objective: f64,
}

impl BinBreaks {
    /// Class index in `0..k`: the first class whose upper bound is at least
    /// `value`, or the last class.
    pub fn assign(&self, value: f64) -> usize {
        self.breaks.partition_point(|b| *b < value)
    }
}

/// Optimal 1-D classification into `k` contiguous classes minimising the
/// within-class sum of squares, by dynamic programming over the distinct
/// sorted values (weighted by multiplicity).
pub fn jenks_breaks(values: &[f64], k: usize) -> Result<BinBreaks> {
    if k < 2 {
        return Err(Error::validation("natural breaks need k ≥ 2"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("natural breaks: non-finite value"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct: Vec<(f64, f64)> = Vec::new();
    for v in sorted {
        match distinct.last_mut() {
            Some((x, w)) if *x == v => *w += 1.0,
            _ => distinct.push((v, 1.0)),
        }
    }
    let m = distinct.len();
    if m < k {
        return Err(Error::validation(format!(
            "natural breaks: {m} distinct values cannot fill {k} classes"
        )));
    }

    // Prefix sums of weight, weighted value and weighted square, shifted
    // by the first value to limit cancellation.
    let shift = distinct[0].0;
    let mut w = vec![0.0; m + 1];
    let mut s = vec![0.0; m + 1];
    let mut q = vec![0.0; m + 1];
    for (i, &(x, c)) in distinct.iter().enumerate() {
        let d = x - shift;
        w[i + 1] = w[i] + c;
        s[i + 1] = s[i] + c * d;
        q[i + 1] = q[i] + c * d * d;
    }
    // Sum of squares of distinct[i..j].
    let ssq = |i: usize, j: usize| -> f64 {
        let sw = w[j] - w[i];
        let ss = s[j] - s[i];
        (q[j] - q[i] - ss * ss / sw).max(0.0)
    };

    // cost[c][j]: best cost of the first j distinct values in c+1 classes.
    let mut cost = vec![vec![f64::INFINITY; m + 1]; k];
    let mut split = vec![vec![0usize; m + 1]; k];
    for j in 1..=m {
        cost[0][j] = ssq(0, j);
    }
    for c in 1..k {
        for j in (c + 1)..=m {
            let mut best = f64::INFINITY;
            let mut arg = c;
            for i in c..j {
                let v = cost[c - 1][i] + ssq(i, j);
                if v < best {
                    best = v;
                    arg = i;
                }
            }
            cost[c][j] = best;
            split[c][j] = arg;
        }
    }

    let mut bounds = vec![m; k];
    let mut j = m;
    for c in (1..k).rev() {
        j = split[c][j];
        bounds[c - 1] = j;
    }
    let breaks = bounds[..k - 1].iter().map(|&end| distinct[end - 1].0).collect();
    Ok(BinBreaks {
        k,
        breaks,
        objective: cost[k - 1][m],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    type Q = Ratio<i64>;

    fn exact_ssq(xs: &[i64]) -> Q {
        let n = Q::from_integer(xs.len() as i64);
        let sum: Q = xs.iter().map(|&x| Q::from_integer(x)).sum();
        let mean = sum / n;
        xs.iter().map(|&x| (Q::from_integer(x) - mean) * (Q::from_integer(x) - mean)).sum()
    }

    /// Minimum over every way to cut the sorted list into k non-empty runs.
    fn exhaustive(sorted: &[i64], k: usize) -> Q {
        fn go(xs: &[i64], k: usize) -> Q {
            if k == 1 {
                return exact_ssq(xs);
            }
            (1..=xs.len() - (k - 1))
                .map(|cut| exact_ssq(&xs[..cut]) + go(&xs[cut..], k - 1))
                .min()
                .unwrap()
        }
        go(sorted, k)
    }

    /// Exact objective of the partition implied by `breaks`.
    fn exact_objective(sorted: &[i64], b: &BinBreaks) -> Q {
        let mut classes = vec![Vec::new(); b.k];
        for &x in sorted {
            classes[b.assign(x as f64)].push(x);
        }
        assert!(classes.iter().all(|c| !c.is_empty()));
        classes.iter().map(|c| exact_ssq(c)).sum()
    }

    #[test]
    fn obvious_gap() {
        let b = jenks_breaks(&[1.0, 2.0, 3.0, 100.0, 101.0, 102.0], 2).unwrap();
        assert_eq!(b.breaks, vec![3.0]);
        assert!((b.objective - 4.0).abs() < 1e-12);
        assert_eq!(b.assign(2.0), 0);
        assert_eq!(b.assign(3.0), 0);
        assert_eq!(b.assign(50.0), 1);
        assert_eq!(b.assign(1e9), 1);
    }

    #[test]
    fn one_class_per_distinct_value() {
        let b = jenks_breaks(&[4.0, 1.0, 4.0, 9.0, 1.0], 3).unwrap();
        assert_eq!(b.breaks, vec![1.0, 4.0]);
        assert_eq!(b.objective, 0.0);
    }

    #[test]
    fn errors() {
        assert!(jenks_breaks(&[1.0, 1.0, 2.0], 3).unwrap_err().is_validation());
        assert!(jenks_breaks(&[1.0, 2.0], 1).is_err());
        assert!(jenks_breaks(&[1.0, f64::NAN, 2.0], 2).is_err());
    }

    #[test]
    fn matches_exhaustive_enumeration() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let n = rng.random_range(2..=12);
            let mut xs: Vec<i64> = (0..n).map(|_| rng.random_range(0..25)).collect();
            xs.sort();
            let mut d = xs.clone();
            d.dedup();
            let k = rng.random_range(2..=4usize);
            if d.len() < k {
                continue;
            }
            let floats: Vec<f64> = xs.iter().map(|&x| x as f64).collect();
            let b = jenks_breaks(&floats, k).unwrap();
            assert!(b.breaks.windows(2).all(|w| w[0] < w[1]));
            assert_eq!(exact_objective(&xs, &b), exhaustive(&xs, k), "{xs:?} k={k}");
        }
    }

    proptest! {
        #[test]
        fn objective_monotone_in_k(xs in proptest::collection::vec(-1000.0f64..1000.0, 6..40)) {
            let mut prev = f64::INFINITY;
            for k in 2..=5 {
                let b = jenks_breaks(&xs, k).unwrap();
                prop_assert!(b.objective <= prev + 1e-9 * prev.abs().max(1.0));
                prev = b.objective;
            }
        }
    }
}
