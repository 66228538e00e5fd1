//! Cross-correlation significance testing and shared regression machinery.
//!
//! The `Q_cc(m)` statistic sums squared lagged cross-correlation
//! coefficients over the first `m` lags:
//!
//! ```text
//! X_i    = Σ_{k=i+1..N} x_k y_{k−i} / sqrt(Σ x_k² · Σ y_k²)
//! Q_cc(m) = N² Σ_{i=1..m} X_i² / (N − i)
//! ```
//!
//! and is compared against the upper `level` quantile of χ²(m).

mod chi2;
mod regression;

use std::io::Write;

use serde::Serialize;

pub use chi2::chi2_critical;
pub use regression::{ols_polyfit, PolyFitReport};

use crate::error::{Error, Result};
use crate::series::AlignedPair;

/// Result of the `Q_cc` test over a set of degrees of freedom.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QccReport {
    pub m_values: Vec<usize>,
    pub qcc: Vec<f64>,
    pub critical: Vec<f64>,
    pub significance_level: f64,
    pub reject: Vec<bool>,
}

impl QccReport {
    /// Writes `m,qcc,critical,reject` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["m", "qcc", "critical", "reject"])?;
        for i in 0..self.m_values.len() {
            w.write_record([
                self.m_values[i].to_string(),
                self.qcc[i].to_string(),
                self.critical[i].to_string(),
                self.reject[i].to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("qcc csv", e))?;
        Ok(())
    }

    /// Fraction of tested `m` at which the null of no cross-correlation is rejected.
    pub fn rejection_fraction(&self) -> f64 {
        if self.reject.is_empty() {
            return 0.0;
        }
        self.reject.iter().filter(|&&r| r).count() as f64 / self.reject.len() as f64
    }
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "series lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("cross-correlation input"));
    }
    Ok(())
}

fn norm(x: &[f64], y: &[f64]) -> Result<f64> {
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let syy: f64 = y.iter().map(|v| v * v).sum();
    let denom = (sxx * syy).sqrt();
    if denom == 0.0 {
        return Err(Error::ZeroVariance("cross-correlation denominator"));
    }
    Ok(denom)
}

fn lagged_sum(x: &[f64], y: &[f64], lag: usize) -> f64 {
    x[lag..].iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Lag-`lag` cross-correlation coefficient, pairing `x_k` with `y_{k−lag}`.
pub fn cross_corr_coeff(x: &[f64], y: &[f64], lag: usize) -> Result<f64> {
    check_pair(x, y)?;
    if lag == 0 || lag >= x.len() {
        return Err(Error::invalid(format!(
            "lag {lag} outside [1, {})",
            x.len()
        )));
    }
    Ok(lagged_sum(x, y, lag) / norm(x, y)?)
}

/// `Q_cc(m)` for every `m` in `1..=m_max`.
fn qcc_cumulative(x: &[f64], y: &[f64], m_max: usize) -> Result<Vec<f64>> {
    check_pair(x, y)?;
    let n = x.len();
    if m_max == 0 || m_max >= n {
        return Err(Error::invalid(format!(
            "degrees of freedom {m_max} outside [1, {n})"
        )));
    }
    let denom = norm(x, y)?;
    let n2 = (n as f64) * (n as f64);
    let mut acc = 0.0;
    Ok((1..=m_max)
        .map(|i| {
            let xi = lagged_sum(x, y, i) / denom;
            acc += xi * xi / (n - i) as f64;
            n2 * acc
        })
        .collect())
}

/// `Q_cc(m) = N² Σ_{i=1..m} X_i² / (N − i)`.
pub fn qcc_statistic(x: &[f64], y: &[f64], m: usize) -> Result<f64> {
    Ok(*qcc_cumulative(x, y, m)?.last().expect("m >= 1"))
}

/// Evaluates `Q_cc(m)` against the χ²(m) critical value for every `m` in `m_range`.
pub fn qcc_test(pair: &AlignedPair, m_range: &[usize], level: f64) -> Result<QccReport> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("significance level {level} outside (0, 1)")));
    }
    let Some(&m_max) = m_range.iter().max() else {
        return Err(Error::invalid("empty degrees-of-freedom range"));
    };
    if m_range.contains(&0) {
        return Err(Error::invalid("degrees of freedom must be positive"));
    }
    let cumulative = qcc_cumulative(pair.x.values(), pair.y.values(), m_max)?;
    let qcc: Vec<f64> = m_range.iter().map(|&m| cumulative[m - 1]).collect();
    let critical = m_range
        .iter()
        .map(|&m| chi2_critical(m, level))
        .collect::<Result<Vec<_>>>()?;
    let reject = qcc.iter().zip(&critical).map(|(q, c)| q > c).collect();
    Ok(QccReport {
        m_values: m_range.to_vec(),
        qcc,
        critical,
        significance_level: level,
        reject,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn no_overlap_of_nonzeros() {
        let mut x = vec![0.0; 6];
        x[0] = 1.0;
        assert_eq!(cross_corr_coeff(&x, &x, 1).unwrap(), 0.0);
    }

    #[test]
    fn two_point_hand_value() {
        assert_eq!(cross_corr_coeff(&[1.0, 1.0], &[1.0, 1.0], 1).unwrap(), 0.5);
    }

    #[test]
    fn zero_series_is_rejected() {
        let x = noise(10, 1);
        assert!(matches!(
            cross_corr_coeff(&x, &[0.0; 10], 1),
            Err(Error::ZeroVariance(_))
        ));
    }

    #[test]
    fn lag_bounds() {
        let x = noise(10, 1);
        assert!(cross_corr_coeff(&x, &x, 0).is_err());
        assert!(cross_corr_coeff(&x, &x, 10).is_err());
        assert!(qcc_statistic(&x, &x, 10).is_err());
    }

    #[test]
    fn orthogonal_lags_give_zero() {
        // y's only nonzero entry is last, so no x_k y_{k-i} product survives
        let mut x = vec![0.0; 8];
        let mut y = vec![0.0; 8];
        x[0] = 1.0;
        y[7] = 2.0;
        assert_eq!(qcc_statistic(&x, &y, 5).unwrap(), 0.0);
    }

    #[test]
    fn three_point_brute_force() {
        // x = y = (1,1,1)/√3: X_1 = (x2 y1 + x3 y2)/sqrt(1·1) = 2/3,
        // Q(1) = 9 · (4/9) / 2 = 2.
        let v = 1.0 / 3f64.sqrt();
        let x = [v, v, v];
        let q = qcc_statistic(&x, &x, 1).unwrap();
        assert!((q - 2.0).abs() < 1e-14, "{q}");
        // m = 2 adds X_2 = 1/3: 9 · (1/9) / 1 = 1.
        let q2 = qcc_statistic(&x, &x, 2).unwrap();
        assert!((q2 - 3.0).abs() < 1e-14, "{q2}");
    }

    #[test]
    fn perfectly_dependent_autocorrelated_rejects() {
        let e = noise(2000, 7);
        let mut x = vec![0.0; e.len()];
        for t in 1..e.len() {
            x[t] = 0.8 * x[t - 1] + e[t];
        }
        let pair = AlignedPair::from_values(x.clone(), x).unwrap();
        let report = qcc_test(&pair, &[1, 2, 3, 5, 10], 0.05).unwrap();
        assert!(report.reject.iter().all(|&r| r));
    }

    #[test]
    fn report_shape_on_long_series() {
        let pair = AlignedPair::from_values(noise(6065, 1), noise(6065, 2)).unwrap();
        let m: Vec<usize> = (1..=1000).collect();
        let report = qcc_test(&pair, &m, 0.05).unwrap();
        assert_eq!(report.qcc.len(), 1000);
        assert_eq!(report.critical.len(), 1000);
        for i in 0..1000 {
            assert_eq!(report.reject[i], report.qcc[i] > report.critical[i]);
            assert!(report.qcc[i] >= 0.0 && report.critical[i] > 0.0);
        }
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("m,qcc,critical,reject\n1,"));
        assert_eq!(text.lines().count(), 1001);
    }

    #[test]
    fn qcc_test_rejects_out_of_range_m() {
        let pair = AlignedPair::from_values(noise(20, 1), noise(20, 2)).unwrap();
        assert!(qcc_test(&pair, &[20], 0.05).is_err());
        assert!(qcc_test(&pair, &[0, 3], 0.05).is_err());
        assert!(qcc_test(&pair, &[], 0.05).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn monotone_in_m(seed in 0u64..1000, n in 5usize..80) {
                let x = noise(n, seed);
                let y = noise(n, seed + 1);
                let q = qcc_cumulative(&x, &y, n - 1).unwrap();
                prop_assert!(q[0] >= 0.0);
                for w in q.windows(2) {
                    prop_assert!(w[1] >= w[0]);
                }
            }

            #[test]
            fn invariant_under_rescaling(
                seed in 0u64..1000,
                c1 in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0],
                c2 in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0],
            ) {
                let x = noise(64, seed);
                let y = noise(64, seed + 99);
                let xs: Vec<f64> = x.iter().map(|v| v * c1).collect();
                let ys: Vec<f64> = y.iter().map(|v| v * c2).collect();
                let a = qcc_statistic(&x, &y, 10).unwrap();
                let b = qcc_statistic(&xs, &ys, 10).unwrap();
                prop_assert!((a - b).abs() <= 1e-10 * a.max(1.0));
            }
        }
    }
}
