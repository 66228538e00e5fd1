//! Moving-average detrending and bivariate fluctuation functions.
//!
//! For a scale `s` and position parameter `θ`, each (optionally integrated)
//! series `Z` is smoothed with the window
//! `[t − ⌈(s−1)(1−θ)⌉, t + ⌊(s−1)θ⌋]`; `θ = 0` is the backward (causal)
//! average. The residuals `ε_Z = Z − Z̃` are taken only where the window lies
//! inside the series, cut into `⌊L/s⌋` consecutive segments of length `s`
//! starting at the first valid index (a trailing remainder shorter than `s`
//! is dropped), and each segment contributes
//!
//! ```text
//! F_v(s) = (1/s) Σ_k |ε_X(k)| · |ε_Y(k)|
//! ```
//!
//! The q-th order fluctuation function is the power mean of `F_v^{1/2}`
//! (geometric mean at `q = 0`), and `H_xy(q)` is the log-log slope of
//! `F_xy(q, s)` against `s`.

use std::io::Write;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::ols_polyfit;

/// Analysis grid and detrending options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmaConfig {
    /// Window position in `[0, 1]`; 0 is backward, 0.5 centred, 1 forward.
    pub theta: f64,
    pub scale_min: usize,
    pub scale_max: usize,
    pub n_scales: usize,
    pub q_grid: Vec<f64>,
    /// Detrend cumulative sums of the inputs rather than the inputs themselves.
    pub use_profile: bool,
}

impl Default for DmaConfig {
    fn default() -> Self {
        Self {
            theta: 0.0,
            scale_min: 10,
            scale_max: 316,
            n_scales: 30,
            q_grid: q_grid(-5.0, 5.0, 0.25).expect("default grid"),
            use_profile: true,
        }
    }
}

/// `q_min, q_min + step, …, q_max`, computed as `q_min + i·step`.
pub fn q_grid(q_min: f64, q_max: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !q_min.is_finite() || !q_max.is_finite() || q_max <= q_min {
        return Err(Error::invalid(format!(
            "bad q grid: min {q_min}, max {q_max}, step {step}"
        )));
    }
    let steps = ((q_max - q_min) / step).round();
    if ((q_min + steps * step) - q_max).abs() > 1e-9 * step.max(1.0) {
        return Err(Error::invalid(format!(
            "q grid step {step} does not divide [{q_min}, {q_max}]"
        )));
    }
    Ok((0..=steps as usize)
        .map(|i| q_min + i as f64 * step)
        .collect())
}

impl DmaConfig {
    /// Log-spaced integer scales between `scale_min` and `scale_max`, deduplicated.
    pub fn scales(&self) -> Vec<usize> {
        if self.n_scales < 2 || self.scale_min == 0 || self.scale_max <= self.scale_min {
            return vec![self.scale_min];
        }
        let (lo, hi) = ((self.scale_min as f64).ln(), (self.scale_max as f64).ln());
        let step = (hi - lo) / (self.n_scales - 1) as f64;
        let mut scales: Vec<usize> = (0..self.n_scales)
            .map(|i| (lo + i as f64 * step).exp().round() as usize)
            .collect();
        scales.dedup();
        scales
    }

    /// Checks the configuration against a series of length `n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::invalid(format!("theta {} outside [0, 1]", self.theta)));
        }
        if self.scale_min < 2 {
            return Err(Error::invalid("scale_min must be at least 2"));
        }
        if self.scale_max <= self.scale_min {
            return Err(Error::invalid(format!(
                "scale_max {} must exceed scale_min {}",
                self.scale_max, self.scale_min
            )));
        }
        if self.scale_max > n / 4 {
            return Err(Error::invalid(format!(
                "scale_max {} exceeds a quarter of the series length {n}",
                self.scale_max
            )));
        }
        if self.n_scales < 4 || self.scales().len() < 4 {
            return Err(Error::invalid("need at least 4 distinct scales"));
        }
        if self.q_grid.iter().any(|q| !q.is_finite())
            || self.q_grid.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::invalid("q grid must be finite and strictly increasing"));
        }
        if !self.q_grid.contains(&0.0) || !self.q_grid.contains(&2.0) {
            return Err(Error::invalid("q grid must contain 0 and 2"));
        }
        Ok(())
    }
}

/// Cumulative sum `y(t) = Σ_{i ≤ t} values[i]`.
pub fn profile(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .scan(0.0, |acc, v| {
            *acc += v;
            Some(*acc)
        })
        .collect()
}

/// Samples before and after `t` covered by the window of size `s`.
fn window(s: usize, theta: f64) -> (usize, usize) {
    let ahead = ((s - 1) as f64 * theta).floor() as usize;
    (s - 1 - ahead, ahead)
}

/// Moving average with the positions where it is defined.
#[derive(Debug, Clone, PartialEq)]
pub struct MovingAverage {
    /// Same length as the input; NaN outside `valid`.
    pub values: Vec<f64>,
    pub valid: Range<usize>,
}

impl MovingAverage {
    pub fn is_valid(&self, t: usize) -> bool {
        self.valid.contains(&t)
    }

    pub fn mask(&self) -> Vec<bool> {
        (0..self.values.len()).map(|t| self.is_valid(t)).collect()
    }
}

/// Neumaier-compensated running sum.
#[derive(Default)]
struct RunningSum {
    sum: f64,
    comp: f64,
}

impl RunningSum {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Window sums over `valid`, restarted from a direct sum every `s` steps so
/// rounding never accumulates past one window length.
fn window_sums(z: &[f64], s: usize, theta: f64) -> (Vec<f64>, Range<usize>) {
    let (behind, ahead) = window(s, theta);
    let valid = behind..z.len() - ahead;
    let mut sums = Vec::with_capacity(valid.len());
    let mut acc = RunningSum::default();
    for (i, t) in valid.clone().enumerate() {
        if i % s == 0 {
            acc = RunningSum::default();
            z[t - behind..=t + ahead].iter().for_each(|&v| acc.add(v));
        } else {
            acc.add(z[t + ahead]);
            acc.add(-z[t - behind - 1]);
        }
        sums.push(acc.value());
    }
    (sums, valid)
}

/// `Z̃(t) = (1/s) Σ_{k=−⌊(s−1)θ⌋..⌈(s−1)(1−θ)⌉} z(t − k)`.
pub fn moving_average(z: &[f64], s: usize, theta: f64) -> Result<MovingAverage> {
    if s == 0 || s > z.len() {
        return Err(Error::invalid(format!(
            "window {s} outside [1, {}]",
            z.len()
        )));
    }
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::invalid(format!("theta {theta} outside [0, 1]")));
    }
    let (sums, valid) = window_sums(z, s, theta);
    let mut values = vec![f64::NAN; z.len()];
    for (t, sum) in valid.clone().zip(sums) {
        values[t] = sum / s as f64;
    }
    Ok(MovingAverage { values, valid })
}

fn residuals(z: &[f64], s: usize, theta: f64) -> Vec<f64> {
    let (sums, valid) = window_sums(z, s, theta);
    let inv = 1.0 / s as f64;
    valid.zip(sums).map(|(t, sum)| z[t] - sum * inv).collect()
}

/// Per-segment detrended covariations `F_v(s)` at one scale.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentFluctuations {
    pub scale: usize,
    pub values: Vec<f64>,
}

/// `F_v(s)` for every complete segment of the valid residual range.
///
/// Inputs are the series to detrend directly (profiles, when profiles are in use).
pub fn segment_fluctuations(x: &[f64], y: &[f64], s: usize, theta: f64) -> Result<SegmentFluctuations> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "series lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if s < 2 || s > x.len() {
        return Err(Error::invalid(format!("scale {s} outside [2, {}]", x.len())));
    }
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::invalid(format!("theta {theta} outside [0, 1]")));
    }
    let ex = residuals(x, s, theta);
    let ey = if std::ptr::eq(x, y) { ex.clone() } else { residuals(y, s, theta) };
    let segments = ex.len() / s;
    if segments == 0 {
        return Err(Error::invalid(format!(
            "scale {s} leaves no complete segment in {} residuals",
            ex.len()
        )));
    }
    let inv = 1.0 / s as f64;
    let values = ex
        .chunks_exact(s)
        .zip(ey.chunks_exact(s))
        .map(|(a, b)| a.iter().zip(b).map(|(u, v)| u.abs() * v.abs()).sum::<f64>() * inv)
        .collect();
    Ok(SegmentFluctuations { scale: s, values })
}

/// `F_xy(q, s)`: power mean of order `q` of `F_v^{1/2}`, geometric mean at `q = 0`.
///
/// Evaluated in log space so large `|q|` cannot overflow.
pub fn fluctuation_function(fvs: &SegmentFluctuations, q: f64) -> Result<f64> {
    let v = &fvs.values;
    if v.is_empty() {
        return Err(Error::invalid("no segments"));
    }
    let degenerate = |segment| Error::DegenerateSegment {
        scale: fvs.scale,
        segment,
        q,
    };
    if q <= 0.0 {
        if let Some(i) = v.iter().position(|&f| f <= 0.0) {
            return Err(degenerate(i));
        }
    }
    let n = v.len() as f64;
    let f = if q == 0.0 {
        (v.iter().map(|f| f.ln()).sum::<f64>() / (2.0 * n)).exp()
    } else {
        let half = q / 2.0;
        let logs: Vec<f64> = v.iter().map(|f| half * f.ln()).collect();
        let max = logs.iter().fold(f64::NEG_INFINITY, |m, &l| m.max(l));
        if max == f64::NEG_INFINITY {
            return Err(degenerate(0));
        }
        let lse = max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        ((lse - n.ln()) / q).exp()
    };
    if !(f > 0.0 && f.is_finite()) {
        return Err(degenerate(v.iter().position(|&f| f <= 0.0).unwrap_or(0)));
    }
    Ok(f)
}

/// `F_xy(q, s)` over the configured q grid and scales.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FluctuationSurface {
    pub scales: Vec<usize>,
    pub q_grid: Vec<f64>,
    /// `values[qi][si]`.
    pub values: Vec<Vec<f64>>,
}

impl FluctuationSurface {
    /// Long format: one `q,s,F` row per cell, q-major.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["q", "s", "F"])?;
        for (q, row) in self.q_grid.iter().zip(&self.values) {
            for (s, f) in self.scales.iter().zip(row) {
                w.write_record([q.to_string(), s.to_string(), f.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io("fluctuation csv", e))?;
        Ok(())
    }
}

/// Computes the fluctuation surface of two equal-length return series.
pub fn fluctuation_surface(x: &[f64], y: &[f64], config: &DmaConfig) -> Result<FluctuationSurface> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "series lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    config.validate(x.len())?;
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("fluctuation input"));
    }
    let same = std::ptr::eq(x, y) || x == y;
    let (px, py);
    let (zx, zy): (&[f64], &[f64]) = if config.use_profile {
        px = profile(x);
        py = if same { Vec::new() } else { profile(y) };
        (&px, if same { &px } else { &py })
    } else {
        (x, if same { x } else { y })
    };

    let scales = config.scales();
    let mut values = vec![Vec::with_capacity(scales.len()); config.q_grid.len()];
    for &s in &scales {
        let fvs = segment_fluctuations(zx, zy, s, config.theta)?;
        for (row, &q) in values.iter_mut().zip(&config.q_grid) {
            row.push(fluctuation_function(&fvs, q)?);
        }
    }
    Ok(FluctuationSurface {
        scales,
        q_grid: config.q_grid.clone(),
        values,
    })
}

/// Generalized bivariate Hurst exponents with their fit diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HurstCurve {
    pub q_grid: Vec<f64>,
    pub h: Vec<f64>,
    pub stderr: Vec<f64>,
    pub r2: Vec<f64>,
}

/// Per q, the OLS slope of `ln F_xy(q, s)` on `ln s`.
pub fn hurst_curve(surface: &FluctuationSurface) -> Result<HurstCurve> {
    if surface.scales.len() < 4 {
        return Err(Error::invalid(format!(
            "need at least 4 scales, got {}",
            surface.scales.len()
        )));
    }
    let log_s: Vec<f64> = surface.scales.iter().map(|&s| (s as f64).ln()).collect();
    let mut curve = HurstCurve {
        q_grid: surface.q_grid.clone(),
        h: Vec::with_capacity(surface.q_grid.len()),
        stderr: Vec::with_capacity(surface.q_grid.len()),
        r2: Vec::with_capacity(surface.q_grid.len()),
    };
    for row in &surface.values {
        let log_f: Vec<f64> = row.iter().map(|f| f.ln()).collect();
        if log_f.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("log fluctuation function"));
        }
        let fit = ols_polyfit(&log_s, &log_f, 1)?;
        curve.h.push(fit.coefficients[1]);
        curve.stderr.push(fit.std_errors[1]);
        curve.r2.push(fit.r_squared);
    }
    Ok(curve)
}
