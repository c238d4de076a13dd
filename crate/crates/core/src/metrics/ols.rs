use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};

use crate::error::{Error, Result};

/// Relative size below which a diagonal entry of R marks a column as a
/// linear combination of the ones before it.
const RANK_TOLERANCE: f64 = 1e-10;

pub const INTERCEPT: &str = "intercept";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionResult {
    /// `intercept` followed by the predictor names.
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    /// HC1 heteroskedasticity-consistent standard errors.
    pub robust_se: Vec<f64>,
    pub t_values: Vec<f64>,
    pub p_values: Vec<f64>,
    pub r2: f64,
    pub adj_r2: f64,
    pub f_stat: f64,
    pub f_p_value: f64,
    pub resid_se: f64,
    pub n_obs: usize,
    pub dropped_rows: usize,
}

/// A named predictor column; `None` marks a missing value.
#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub values: Vec<Option<f64>>,
}

impl Column {
    pub fn new(name: impl Into<String>, values: Vec<Option<f64>>) -> Self {
        Column {
            name: name.into(),
            values,
        }
    }

    pub fn complete(name: impl Into<String>, values: &[f64]) -> Self {
        Self::new(name, values.iter().copied().map(Some).collect())
    }
}

/// Least squares of `y` on an intercept plus `predictors`, with HC1 robust
/// standard errors. Rows with a missing or non-finite value in any column
/// are dropped and counted.
///
/// Retained rows are put in a canonical order before fitting, so permuting
/// the input rows gives bit-identical results.
pub fn ols_robust(y: &[Option<f64>], predictors: &[Column]) -> Result<RegressionResult> {
    if predictors.is_empty() {
        return Err(Error::validation("regression needs at least one predictor"));
    }
    if let Some(c) = predictors.iter().find(|c| c.values.len() != y.len()) {
        return Err(Error::validation(format!(
            "predictor `{}` has {} rows, response has {}",
            c.name,
            c.values.len(),
            y.len()
        )));
    }
    let k = predictors.len();
    let mut rows: Vec<Vec<f64>> = (0..y.len())
        .filter_map(|i| {
            let mut row = Vec::with_capacity(k + 1);
            row.push(y[i].filter(|v| v.is_finite())?);
            for c in predictors {
                row.push(c.values[i].filter(|v| v.is_finite())?);
            }
            Some(row)
        })
        .collect();
    let dropped_rows = y.len() - rows.len();
    rows.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let n = rows.len();
    if n <= k + 1 {
        return Err(Error::validation(format!(
            "regression has {n} complete rows for {} parameters",
            k + 1
        )));
    }

    let x = DMatrix::from_fn(n, k + 1, |i, j| if j == 0 { 1.0 } else { rows[i][j] });
    let yv = DVector::from_fn(n, |i, _| rows[i][0]);
    let names: Vec<String> = std::iter::once(INTERCEPT.to_string())
        .chain(predictors.iter().map(|c| c.name.clone()))
        .collect();

    let qr = x.clone().qr();
    let r = qr.r();
    for j in 0..=k {
        let norm = x.column(j).norm();
        if norm == 0.0 || r[(j, j)].abs() <= RANK_TOLERANCE * norm {
            return Err(Error::RankDeficient {
                column: names[j].clone(),
            });
        }
    }
    let qty = qr.q().transpose() * &yv;
    let beta = r
        .solve_upper_triangular(&qty)
        .expect("R has a non-zero diagonal");
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k + 1, k + 1))
        .expect("R has a non-zero diagonal");
    let bread = &r_inv * r_inv.transpose();

    let resid = &yv - &x * &beta;
    let mut meat = DMatrix::zeros(k + 1, k + 1);
    for i in 0..n {
        let xi = x.row(i).transpose();
        meat += (&xi * xi.transpose()) * (resid[i] * resid[i]);
    }
    let dof = (n - k - 1) as f64;
    let cov = (&bread * meat * &bread) * (n as f64 / dof);
    let robust_se: Vec<f64> = (0..=k).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();

    let mean = yv.mean();
    let sst: f64 = yv.iter().map(|v| (v - mean).powi(2)).sum();
    if sst == 0.0 {
        return Err(Error::validation("regression response is constant"));
    }
    let ssr = resid.norm_squared();
    let r2 = 1.0 - ssr / sst;
    let adj_r2 = 1.0 - (1.0 - r2) * (n - 1) as f64 / dof;
    let f_stat = (r2 / k as f64) / ((1.0 - r2) / dof);
    let f_p_value = if f_stat.is_finite() {
        let f = FisherSnedecor::new(k as f64, dof).expect("positive degrees of freedom");
        1.0 - f.cdf(f_stat)
    } else {
        0.0
    };
    let t_dist = StudentsT::new(0.0, 1.0, dof).expect("positive degrees of freedom");
    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let t_values: Vec<f64> = coefficients
        .iter()
        .zip(&robust_se)
        .map(|(b, se)| b / se)
        .collect();
    let p_values = t_values
        .iter()
        .map(|t| {
            if t.is_finite() {
                2.0 * (1.0 - t_dist.cdf(t.abs()))
            } else if t.is_nan() {
                f64::NAN
            } else {
                0.0
            }
        })
        .collect();

    Ok(RegressionResult {
        names,
        coefficients,
        robust_se,
        t_values,
        p_values,
        r2,
        adj_r2,
        f_stat,
        f_p_value,
        resid_se: (ssr / dof).sqrt(),
        n_obs: n,
        dropped_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    /// Solves the normal equations X'X b = X'y by Gauss-Jordan elimination
    /// and evaluates HC1 directly from its definition.
    fn oracle(x: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = x.len();
        let p = x[0].len();
        let mut a = vec![vec![0.0; 2 * p]; p];
        for i in 0..p {
            for j in 0..p {
                a[i][j] = (0..n).map(|r| x[r][i] * x[r][j]).sum();
            }
            a[i][p + i] = 1.0;
        }
        for col in 0..p {
            let piv = (col..p).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
            a.swap(col, piv);
            let d = a[col][col];
            for v in a[col].iter_mut() {
                *v /= d;
            }
            for r in 0..p {
                if r != col {
                    let f = a[r][col];
                    for c in 0..2 * p {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
        let inv: Vec<Vec<f64>> = a.iter().map(|row| row[p..].to_vec()).collect();
        let xty: Vec<f64> = (0..p).map(|i| (0..n).map(|r| x[r][i] * y[r]).sum()).collect();
        let beta: Vec<f64> = (0..p).map(|i| (0..p).map(|j| inv[i][j] * xty[j]).sum()).collect();
        let e: Vec<f64> = (0..n)
            .map(|r| y[r] - (0..p).map(|j| x[r][j] * beta[j]).sum::<f64>())
            .collect();
        let mut meat = vec![vec![0.0; p]; p];
        for r in 0..n {
            for i in 0..p {
                for j in 0..p {
                    meat[i][j] += e[r] * e[r] * x[r][i] * x[r][j];
                }
            }
        }
        let scale = n as f64 / (n - p) as f64;
        let se = (0..p)
            .map(|d| {
                let mut v = 0.0;
                for i in 0..p {
                    for j in 0..p {
                        v += inv[d][i] * meat[i][j] * inv[j][d];
                    }
                }
                (v * scale).sqrt()
            })
            .collect();
        (beta, se)
    }

    fn fit(x: &[Vec<f64>], y: &[f64]) -> RegressionResult {
        let k = x[0].len();
        let cols: Vec<Column> = (0..k)
            .map(|j| Column::complete(format!("x{j}"), &x.iter().map(|r| r[j]).collect::<Vec<_>>()))
            .collect();
        ols_robust(&y.iter().copied().map(Some).collect::<Vec<_>>(), &cols).unwrap()
    }

    fn with_intercept(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        x.iter().map(|r| std::iter::once(1.0).chain(r.iter().copied()).collect()).collect()
    }

    #[test]
    fn planted_six_rows() {
        let x: Vec<Vec<f64>> = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0].iter().map(|v| vec![*v]).collect();
        let y = [2.1, 3.9, 6.2, 7.8, 10.3, 11.9];
        let r = fit(&x, &y);
        let (beta, se) = oracle(&with_intercept(&x), &y);
        for j in 0..2 {
            assert!((r.coefficients[j] - beta[j]).abs() < 1e-8);
            assert!((r.robust_se[j] - se[j]).abs() < 1e-8);
        }
        assert_eq!(r.n_obs, 6);
        assert!(r.adj_r2 > 0.99 && r.adj_r2 < 1.0);
    }

    #[test]
    fn exact_fit() {
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, (i * i) as f64 % 5.0]).collect();
        let y: Vec<f64> = x.iter().map(|r| 3.0 - 2.0 * r[0] + 0.5 * r[1]).collect();
        let r = fit(&x, &y);
        assert!((r.adj_r2 - 1.0).abs() < 1e-9);
        assert!(r.robust_se.iter().all(|s| s.abs() < 1e-9));
        assert!((r.coefficients[0] - 3.0).abs() < 1e-9);
        assert!((r.coefficients[1] + 2.0).abs() < 1e-9);
        assert!((r.coefficients[2] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn missing_rows_are_dropped() {
        let y = vec![Some(1.0), None, Some(2.5), Some(3.0), Some(5.0), Some(f64::NAN), Some(7.0)];
        let x = Column::new("x", vec![Some(1.0), Some(2.0), None, Some(3.0), Some(4.5), Some(6.0), Some(7.0)]);
        let r = ols_robust(&y, &[x]).unwrap();
        assert_eq!((r.n_obs, r.dropped_rows), (4, 3));
        assert_eq!(r.names, ["intercept", "x"]);
    }

    #[test]
    fn collinear_column_is_named() {
        let a = Column::complete("a", &[1.0, 2.0, 3.0, 4.0, 5.0]);
        let b = Column::complete("b", &[2.0, 4.0, 6.0, 8.0, 10.0]);
        let y = [Some(1.0), Some(3.0), Some(2.0), Some(5.0), Some(4.0)];
        match ols_robust(&y, &[a.clone(), b]) {
            Err(Error::RankDeficient { column }) => assert_eq!(column, "b"),
            other => panic!("{other:?}"),
        }
        let c = Column::complete("const", &[1.0; 5]);
        match ols_robust(&y, &[a, c]) {
            Err(Error::RankDeficient { column }) => assert_eq!(column, "const"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn too_few_rows() {
        let y = [Some(1.0), Some(2.0)];
        assert!(ols_robust(&y, &[Column::complete("x", &[1.0, 2.0])]).unwrap_err().is_validation());
    }

    #[test]
    fn random_instances_match_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let k = rng.random_range(1..=3);
            let n = rng.random_range(k + 3..=12);
            let x: Vec<Vec<f64>> = (0..n).map(|_| (0..k).map(|_| rng.random_range(-5.0..5.0)).collect()).collect();
            let y: Vec<f64> = x
                .iter()
                .map(|r| 1.0 + r.iter().sum::<f64>() * 0.7 + rng.random_range(-1.0..1.0) * (1.0 + r[0].abs()))
                .collect();
            let r = fit(&x, &y);
            let (beta, se) = oracle(&with_intercept(&x), &y);
            for j in 0..=k {
                assert!((r.coefficients[j] - beta[j]).abs() < 1e-8);
                assert!((r.robust_se[j] - se[j]).abs() < 1e-8);
            }
        }
    }

    proptest! {
        #[test]
        fn permutation_invariant_and_orthogonal(
            data in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0, -10.0f64..10.0), 6..20),
            rot in 0usize..20,
        ) {
            let x: Vec<Vec<f64>> = data.iter().map(|(a, b, _)| vec![*a, *b]).collect();
            let y: Vec<f64> = data.iter().map(|(_, _, c)| *c).collect();
            let cols = |x: &[Vec<f64>]| -> Vec<Column> {
                (0..2).map(|j| Column::complete(format!("x{j}"), &x.iter().map(|r| r[j]).collect::<Vec<_>>())).collect()
            };
            let ys = |y: &[f64]| -> Vec<Option<f64>> { y.iter().copied().map(Some).collect() };
            let Ok(base) = ols_robust(&ys(&y), &cols(&x)) else { return Ok(()); };
            let mut xr = x.clone();
            let mut yr = y.clone();
            xr.rotate_left(rot % x.len());
            yr.rotate_left(rot % y.len());
            xr.swap(0, x.len() - 1);
            yr.swap(0, y.len() - 1);
            prop_assert_eq!(&ols_robust(&ys(&yr), &cols(&xr)).unwrap(), &base);

            let xi = with_intercept(&x);
            let scale = y.iter().map(|v| v.abs()).fold(1.0, f64::max) * x.len() as f64 * 10.0;
            for j in 0..3 {
                let dot: f64 = (0..x.len())
                    .map(|i| {
                        let fitted: f64 = (0..3).map(|c| xi[i][c] * base.coefficients[c]).sum();
                        (y[i] - fitted) * xi[i][j]
                    })
                    .sum();
                prop_assert!(dot.abs() <= 1e-8 * scale);
            }
        }
    }
}
