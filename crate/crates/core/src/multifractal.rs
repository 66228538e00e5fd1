//! Joint mass exponents, singularity spectrum and the τ(q) nonlinearity test.

use std::io::Write;

use serde::Serialize;

use crate::dma::{fluctuation_surface, hurst_curve, DmaConfig, FluctuationSurface, HurstCurve};
use crate::error::{Error, Result};
use crate::stats::{ols_polyfit, PolyFitReport};

/// `τ(q) = q·H(q) − 1`.
pub fn mass_exponents(q_grid: &[f64], h: &[f64]) -> Result<Vec<f64>> {
    if q_grid.len() != h.len() {
        return Err(Error::invalid("q grid and H(q) lengths differ"));
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Hurst exponents"));
    }
    Ok(q_grid.iter().zip(h).map(|(q, h)| q * h - 1.0).collect())
}

/// `α = dτ/dq` by three-point finite differences.
///
/// Interior points use the centred formula and the endpoints the one-sided
/// second-order formula; both are exact on quadratics, for uniform and
/// non-uniform grids alike.
pub fn singularity_strength(q_grid: &[f64], tau: &[f64]) -> Result<Vec<f64>> {
    let n = q_grid.len();
    if n != tau.len() {
        return Err(Error::invalid("q grid and tau lengths differ"));
    }
    if n < 3 {
        return Err(Error::invalid(format!(
            "derivative needs at least 3 grid points, got {n}"
        )));
    }
    if q_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("q grid must be strictly increasing"));
    }
    // derivative at `at` of the parabola through points i, i+1, i+2
    let three_point = |i: usize, at: f64| {
        let (x0, x1, x2) = (q_grid[i], q_grid[i + 1], q_grid[i + 2]);
        let (y0, y1, y2) = (tau[i], tau[i + 1], tau[i + 2]);
        y0 * (2.0 * at - x1 - x2) / ((x0 - x1) * (x0 - x2))
            + y1 * (2.0 * at - x0 - x2) / ((x1 - x0) * (x1 - x2))
            + y2 * (2.0 * at - x0 - x1) / ((x2 - x0) * (x2 - x1))
    };
    Ok((0..n)
        .map(|k| match k {
            0 => three_point(0, q_grid[0]),
            k if k == n - 1 => three_point(n - 3, q_grid[n - 1]),
            k => three_point(k - 1, q_grid[k]),
        })
        .collect())
}

/// `f(α) = q·α − τ`.
pub fn spectrum(q_grid: &[f64], alpha: &[f64], tau: &[f64]) -> Result<Vec<f64>> {
    if q_grid.len() != alpha.len() || alpha.len() != tau.len() {
        return Err(Error::invalid("spectrum inputs differ in length"));
    }
    Ok(q_grid
        .iter()
        .zip(alpha)
        .zip(tau)
        .map(|((q, a), t)| q * a - t)
        .collect())
}

/// `Δα = max α − min α` over the grid.
pub fn singularity_width(alpha: &[f64]) -> Result<f64> {
    if alpha.is_empty() {
        return Err(Error::invalid("empty singularity strength"));
    }
    let (lo, hi) = alpha
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &a| (lo.min(a), hi.max(a)));
    Ok(hi - lo)
}

/// H, τ, α, f(α) and Δα on a common q grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointSpectrumResult {
    pub q_grid: Vec<f64>,
    pub h: Vec<f64>,
    pub tau: Vec<f64>,
    pub alpha: Vec<f64>,
    pub f_alpha: Vec<f64>,
    pub delta_alpha: f64,
}

impl JointSpectrumResult {
    /// Assembles the spectrum from generalized Hurst exponents.
    pub fn from_hurst(q_grid: &[f64], h: &[f64]) -> Result<Self> {
        let tau = mass_exponents(q_grid, h)?;
        let alpha = singularity_strength(q_grid, &tau)?;
        let f_alpha = spectrum(q_grid, &alpha, &tau)?;
        let delta_alpha = singularity_width(&alpha)?;
        let result = Self {
            q_grid: q_grid.to_vec(),
            h: h.to_vec(),
            tau,
            alpha,
            f_alpha,
            delta_alpha,
        };
        result.check_identities()?;
        Ok(result)
    }

    fn check_identities(&self) -> Result<()> {
        for i in 0..self.q_grid.len() {
            let q = self.q_grid[i];
            let legendre = q * self.alpha[i] - self.tau[i];
            if (self.f_alpha[i] - legendre).abs() > 1e-12 * legendre.abs().max(1.0)
                || (self.tau[i] - (q * self.h[i] - 1.0)).abs() > 1e-12
            {
                return Err(Error::invalid(format!("spectrum identity violated at q = {q}")));
            }
            if q == 0.0 && (self.tau[i] != -1.0 || self.f_alpha[i] != 1.0) {
                return Err(Error::invalid("tau(0) or f(alpha(0)) not forced"));
            }
        }
        Ok(())
    }

    /// `q,H,tau,alpha,f` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["q", "H", "tau", "alpha", "f"])?;
        for i in 0..self.q_grid.len() {
            w.write_record([
                self.q_grid[i].to_string(),
                self.h[i].to_string(),
                self.tau[i].to_string(),
                self.alpha[i].to_string(),
                self.f_alpha[i].to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("spectrum csv", e))?;
        Ok(())
    }

    pub fn index_of_q(&self, q: f64) -> Option<usize> {
        self.q_grid.iter().position(|&v| v == q)
    }
}

/// Quadratic fit of τ(q) and the resulting multifractality call.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TauNonlinearityReport {
    pub fit: PolyFitReport,
    pub significance_level: f64,
    /// `a₂ < 0` and its t test rejects `a₂ = 0` at `significance_level`.
    pub multifractal_flag: bool,
}

impl TauNonlinearityReport {
    pub fn a2(&self) -> f64 {
        self.fit.coefficients[2]
    }

    pub fn a2_pvalue(&self) -> f64 {
        self.fit.t_pvalues[2]
    }
}

/// Fits `τ(q) = a₀ + a₁q + a₂q²`.
///
/// Only significantly negative curvature counts as joint multifractality;
/// a positive `a₂` is reported but does not set the flag.
pub fn tau_nonlinearity_test(q_grid: &[f64], tau: &[f64], level: f64) -> Result<TauNonlinearityReport> {
    if q_grid.len() < 5 {
        return Err(Error::invalid(format!(
            "nonlinearity test needs at least 5 grid points, got {}",
            q_grid.len()
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("significance level {level} outside (0, 1)")));
    }
    let fit = ols_polyfit(q_grid, tau, 2)?;
    let multifractal_flag = fit.coefficients[2] < 0.0 && fit.t_pvalues[2] < level;
    Ok(TauNonlinearityReport {
        fit,
        significance_level: level,
        multifractal_flag,
    })
}

/// One complete MF-X-DMA evaluation of a pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointAnalysis {
    pub surface: FluctuationSurface,
    pub hurst: HurstCurve,
    pub spectrum: JointSpectrumResult,
}

/// Fluctuation surface, Hurst curve and joint spectrum of two return series.
pub fn analyze(x: &[f64], y: &[f64], config: &DmaConfig) -> Result<JointAnalysis> {
    let surface = fluctuation_surface(x, y, config)?;
    let hurst = hurst_curve(&surface)?;
    let spectrum = JointSpectrumResult::from_hurst(&hurst.q_grid, &hurst.h)?;
    Ok(JointAnalysis {
        surface,
        hurst,
        spectrum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::analytic_cascade_tau;

    fn grid() -> Vec<f64> {
        crate::dma::q_grid(-5.0, 5.0, 0.25).unwrap()
    }

    #[test]
    fn mass_exponent_examples() {
        let tau = mass_exponents(&[0.0, 2.0], &[0.9, 0.5]).unwrap();
        assert_eq!(tau, vec![-1.0, 0.0]);
        let q = grid();
        let tau = mass_exponents(&q, &vec![0.3668; q.len()]).unwrap();
        let fit = ols_polyfit(&q, &tau, 1).unwrap();
        assert!((fit.coefficients[0] + 1.0).abs() < 1e-12);
        assert!((fit.coefficients[1] - 0.3668).abs() < 1e-12);
        assert!(mass_exponents(&[1.0], &[f64::NAN]).is_err());
    }

    #[test]
    fn monofractal_strength_is_flat() {
        let q = grid();
        let tau: Vec<f64> = q.iter().map(|q| 0.5 * q - 1.0).collect();
        let alpha = singularity_strength(&q, &tau).unwrap();
        assert!(alpha.iter().all(|a| (a - 0.5).abs() < 1e-12));
        let f = spectrum(&q, &alpha, &tau).unwrap();
        assert!(f.iter().all(|f| (f - 1.0).abs() < 1e-12));
        assert!(singularity_width(&alpha).unwrap() < 1e-12);
    }

    #[test]
    fn quadratic_derivative_is_exact() {
        let q = grid();
        let tau: Vec<f64> = q.iter().map(|q| -1.0 + 0.4 * q - 0.01 * q * q).collect();
        let alpha = singularity_strength(&q, &tau).unwrap();
        for (a, q) in alpha.iter().zip(&q) {
            assert!((a - (0.4 - 0.02 * q)).abs() < 1e-12);
        }
        // non-uniform grid
        let q = [-2.0, -1.5, 0.0, 0.3, 2.0, 4.0];
        let tau: Vec<f64> = q.iter().map(|q| 1.0 - 0.2 * q + 0.3 * q * q).collect();
        let alpha = singularity_strength(&q, &tau).unwrap();
        for (a, q) in alpha.iter().zip(&q) {
            assert!((a - (-0.2 + 0.6 * q)).abs() < 1e-12);
        }
        assert!(singularity_strength(&[0.0, 1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn cascade_derivative_against_closed_form() {
        let p: f64 = 0.3;
        let q = grid();
        let tau: Vec<f64> = q.iter().map(|&q| analytic_cascade_tau(q, p)).collect();
        let alpha = singularity_strength(&q, &tau).unwrap();
        for (a, &q) in alpha.iter().zip(&q) {
            let (u, v) = (p.powf(q), (1.0 - p).powf(q));
            let exact = -(u * p.ln() + v * (1.0 - p).ln()) / ((u + v) * std::f64::consts::LN_2);
            assert!((a - exact).abs() < 1e-3, "q={q}: {a} vs {exact}");
        }
    }

    #[test]
    fn cascade_spectrum_peaks_at_one() {
        let q = grid();
        let tau: Vec<f64> = q.iter().map(|&q| analytic_cascade_tau(q, 0.3)).collect();
        let alpha = singularity_strength(&q, &tau).unwrap();
        let f = spectrum(&q, &alpha, &tau).unwrap();
        let max = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!((max - 1.0).abs() < 1e-6, "{max}");
    }

    #[test]
    fn width_examples() {
        assert_eq!(singularity_width(&[0.7; 5]).unwrap(), 0.0);
        assert!((singularity_width(&[0.3, 0.5, 0.4]).unwrap() - 0.2).abs() < 1e-15);
        assert!(singularity_width(&[]).is_err());
    }

    #[test]
    fn forced_values_at_q_zero() {
        let q = grid();
        let h: Vec<f64> = q.iter().map(|q| 0.6 - 0.03 * q + 0.001 * q * q).collect();
        let r = JointSpectrumResult::from_hurst(&q, &h).unwrap();
        let i0 = r.index_of_q(0.0).unwrap();
        assert_eq!(r.tau[i0], -1.0);
        assert_eq!(r.f_alpha[i0], 1.0);
        assert!(r.delta_alpha > 0.0);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("q,H,tau,alpha,f\n-5,"));
    }

    #[test]
    fn linear_tau_is_not_multifractal() {
        let q = grid();
        let tau: Vec<f64> = q.iter().map(|q| 0.55 * q - 1.0).collect();
        let r = tau_nonlinearity_test(&q, &tau, 0.05).unwrap();
        assert!(r.a2().abs() < 1e-10);
        assert!(!r.multifractal_flag);
    }

    #[test]
    fn positive_curvature_is_not_multifractal() {
        let q = grid();
        let tau: Vec<f64> = q.iter().map(|q| -1.0 + 0.3668 * q + 0.0013 * q * q).collect();
        let r = tau_nonlinearity_test(&q, &tau, 0.05).unwrap();
        assert!((r.a2() - 0.0013).abs() < 1e-12);
        assert!(r.a2_pvalue() < 0.05);
        assert!(!r.multifractal_flag);
    }

    #[test]
    fn negative_curvature_is_multifractal() {
        let q = grid();
        let tau: Vec<f64> = q.iter().map(|q| -1.0 + 0.3359 * q - 0.0107 * q * q).collect();
        let r = tau_nonlinearity_test(&q, &tau, 0.05).unwrap();
        assert!((r.a2() + 0.0107).abs() < 1e-12);
        assert!(r.multifractal_flag);
        assert!(tau_nonlinearity_test(&q[..4], &tau[..4], 0.05).is_err());
    }
}
