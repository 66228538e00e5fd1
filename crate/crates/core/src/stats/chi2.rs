use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::error::{Error, Result};

const REL_TOL: f64 = 1e-13;
const MAX_ITER: usize = 200;

/// Upper-tail χ² quantile: the `c` with `P[χ²_m > c] = level`.
///
/// Safeguarded Newton iteration on the regularized upper incomplete gamma
/// function `Q(m/2, c/2)`, started from the Wilson–Hilferty approximation.
pub fn chi2_critical(m: usize, level: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::invalid("chi-square degrees of freedom must be positive"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("significance level {level} outside (0, 1)")));
    }
    let k = m as f64;
    let a = k / 2.0;
    let ln_norm = ln_gamma(a) + a * std::f64::consts::LN_2;
    let survival = |c: f64| gamma_ur(a, c / 2.0);
    let density = |c: f64| ((a - 1.0) * c.ln() - c / 2.0 - ln_norm).exp();

    let mut c = initial_guess(k, level);
    let (mut lo, mut hi) = (0.0_f64, f64::INFINITY);
    for _ in 0..MAX_ITER {
        let g = survival(c) - level;
        if g == 0.0 {
            return Ok(c);
        }
        // survival is decreasing in c
        if g > 0.0 {
            lo = lo.max(c);
        } else {
            hi = hi.min(c);
        }
        let d = density(c);
        let mut next = if d > 0.0 { c + g / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * c.max(1.0) };
        }
        if (next - c).abs() <= REL_TOL * c {
            return Ok(next);
        }
        c = next;
    }
    Ok(c)
}

fn initial_guess(k: f64, level: f64) -> f64 {
    let z = Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(1.0 - level);
    let v = 2.0 / (9.0 * k);
    let base = 1.0 - v + z * v.sqrt();
    if base > 0.0 {
        return k * base.powi(3);
    }
    // small-c expansion of the lower incomplete gamma: P(a, x) ≈ x^a / Γ(a + 1)
    let a = k / 2.0;
    2.0 * ((1.0 - level).ln() + ln_gamma(a + 1.0)).exp().powf(1.0 / a)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Tail probability of χ²_m beyond `c` by Simpson quadrature in `u = √x`,
    /// normalised by the same quadrature over the whole line.
    fn tail_by_quadrature(m: usize, c: f64) -> f64 {
        let k = m as f64;
        // density of u = √x, up to a constant: u^{k-1} e^{-u²/2}
        let peak = if k > 1.0 { (k - 1.0).sqrt() } else { 0.0 };
        let log_peak = if k > 1.0 { (k - 1.0) * peak.ln() - peak * peak / 2.0 } else { 0.0 };
        let f = |u: f64| {
            if u == 0.0 {
                return if k == 1.0 { (-log_peak).exp() } else { 0.0 };
            }
            ((k - 1.0) * u.ln() - u * u / 2.0 - log_peak).exp()
        };
        let simpson = |a: f64, b: f64, n: usize| {
            let h = (b - a) / n as f64;
            let mut s = f(a) + f(b);
            for i in 1..n {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                s += w * f(a + i as f64 * h);
            }
            s * h / 3.0
        };
        let upper = peak + 40.0;
        let uc = c.sqrt();
        simpson(uc, upper, 200_000) / (simpson(0.0, uc, 200_000) + simpson(uc, upper, 200_000))
    }

    fn oracle_critical(m: usize, level: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, m as f64 + 40.0 * (m as f64).sqrt() + 40.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if tail_by_quadrature(m, mid) > level {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn one_degree_of_freedom() {
        let c = chi2_critical(1, 0.05).unwrap();
        assert!((c - 3.841_458_820_694_124).abs() < 1e-9, "{c}");
    }

    #[test]
    fn two_degrees_closed_form() {
        let c = chi2_critical(2, 0.05).unwrap();
        assert!((c - (-2.0 * 0.05f64.ln())).abs() < 1e-10, "{c}");
        for level in [0.001, 0.1, 0.5, 0.9, 0.999] {
            let c = chi2_critical(2, level).unwrap();
            assert!((c / (-2.0 * f64::ln(level)) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn increasing_in_dof() {
        assert!(chi2_critical(10, 0.05).unwrap() > chi2_critical(5, 0.05).unwrap());
        let mut prev = 0.0;
        for m in 1..200 {
            let c = chi2_critical(m, 0.05).unwrap();
            assert!(c > prev);
            prev = c;
        }
    }

    #[test]
    fn extreme_levels_and_large_m() {
        for m in [1, 3, 50, 1000, 10_000] {
            for level in [1e-6, 0.01, 0.5, 0.99, 0.999_999] {
                let c = chi2_critical(m, level).unwrap();
                let tail = gamma_ur(m as f64 / 2.0, c / 2.0);
                assert!((tail - level).abs() <= 1e-10 * level.max(1e-3), "m={m} level={level}");
            }
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(chi2_critical(0, 0.05).is_err());
        assert!(chi2_critical(3, 0.0).is_err());
        assert!(chi2_critical(3, 1.0).is_err());
    }

    #[test]
    fn matches_quadrature_oracle() {
        for m in [1, 2, 5, 10, 100, 1000] {
            let oracle = oracle_critical(m, 0.05);
            let c = chi2_critical(m, 0.05).unwrap();
            assert!((c / oracle - 1.0).abs() < 1e-6, "m={m}: {c} vs {oracle}");
        }
    }
}
