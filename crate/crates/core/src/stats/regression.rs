use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};

use crate::error::{Error, Result};

/// Least-squares polynomial fit with per-coefficient t tests and an overall F test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolyFitReport {
    /// `a_0 .. a_d`, lowest power first.
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub t_stats: Vec<f64>,
    /// Two-sided Student-t p-values with `n − (d + 1)` degrees of freedom.
    pub t_pvalues: Vec<f64>,
    pub f_stat: f64,
    pub f_pvalue: f64,
    pub r_squared: f64,
    pub residual_dof: usize,
}

impl PolyFitReport {
    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }

    /// Evaluates the fitted polynomial at `x`.
    pub fn predict(&self, x: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }
}

/// Relative residual size below which a fit is treated as exact.
const EXACT_FIT: f64 = 1e-13;

/// Fits `ys ≈ Σ a_j xs^j` for `j = 0..=degree` by Householder QR.
///
/// When the residuals vanish to rounding level the fit is exact: standard
/// errors are reported as zero, coefficients that are themselves rounding
/// noise are set to exactly zero with t = 0 and p = 1, and the remaining
/// coefficients get infinite t statistics with p = 0.
pub fn ols_polyfit(xs: &[f64], ys: &[f64], degree: usize) -> Result<PolyFitReport> {
    if degree == 0 {
        return Err(Error::invalid("polynomial degree must be at least 1"));
    }
    let n = xs.len();
    let p = degree + 1;
    if ys.len() != n {
        return Err(Error::invalid(format!("{n} abscissae for {} ordinates", ys.len())));
    }
    if n < p + 1 {
        return Err(Error::invalid(format!(
            "degree-{degree} fit needs at least {} points, got {n}",
            p + 1
        )));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("regression input"));
    }

    let design = DMatrix::from_fn(n, p, |i, j| xs[i].powi(j as i32));
    let y = DVector::from_column_slice(ys);
    let qr = design.clone().qr();
    let r = qr.r();
    let r_max = r.diagonal().iter().fold(0.0_f64, |m, d| m.max(d.abs()));
    if r.diagonal().iter().any(|d| d.abs() <= 1e-12 * r_max * n as f64) {
        return Err(Error::RankDeficient);
    }
    let qty = qr.q().transpose() * &y;
    let beta = r.solve_upper_triangular(&qty).ok_or(Error::RankDeficient)?;
    let r_inv = r.try_inverse().ok_or(Error::RankDeficient)?;
    let xtx_inv = &r_inv * r_inv.transpose();

    let residuals = &y - &design * &beta;
    let ss_res = residuals.norm_squared();
    let mean = ys.iter().sum::<f64>() / n as f64;
    let ss_tot: f64 = ys.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_y: f64 = ys.iter().map(|v| v * v).sum();
    let dof = n - p;
    let mut coefficients: Vec<f64> = beta.iter().copied().collect();

    let r_squared = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        1.0
    };

    if ss_res <= EXACT_FIT * EXACT_FIT * ss_y {
        let y_scale = ys.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let x_scale = xs.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
        for (j, c) in coefficients.iter_mut().enumerate() {
            if c.abs() * x_scale.powi(j as i32) <= 1e-12 * y_scale {
                *c = 0.0;
            }
        }
        let t_stats = coefficients
            .iter()
            .map(|&c| if c == 0.0 { 0.0 } else { c.signum() * f64::INFINITY })
            .collect();
        let t_pvalues = coefficients
            .iter()
            .map(|&c| if c == 0.0 { 1.0 } else { 0.0 })
            .collect();
        let explained = coefficients[1..].iter().any(|&c| c != 0.0);
        return Ok(PolyFitReport {
            coefficients,
            std_errors: vec![0.0; p],
            t_stats,
            t_pvalues,
            f_stat: if explained { f64::INFINITY } else { 0.0 },
            f_pvalue: if explained { 0.0 } else { 1.0 },
            r_squared: 1.0,
            residual_dof: dof,
        });
    }

    let sigma2 = ss_res / dof as f64;
    let std_errors: Vec<f64> = (0..p).map(|j| (sigma2 * xtx_inv[(j, j)]).sqrt()).collect();
    let t_stats: Vec<f64> = coefficients
        .iter()
        .zip(&std_errors)
        .map(|(c, s)| c / s)
        .collect();
    let t_dist = StudentsT::new(0.0, 1.0, dof as f64).expect("positive dof");
    let t_pvalues = t_stats
        .iter()
        .map(|t| (2.0 * t_dist.sf(t.abs())).min(1.0))
        .collect();
    let f_stat = ((ss_tot - ss_res).max(0.0) / degree as f64) / sigma2;
    let f_pvalue = FisherSnedecor::new(degree as f64, dof as f64)
        .expect("positive dof")
        .sf(f_stat);

    Ok(PolyFitReport {
        coefficients,
        std_errors,
        t_stats,
        t_pvalues,
        f_stat,
        f_pvalue,
        r_squared,
        residual_dof: dof,
    })
}
