//! IAAFT surrogates and the intrinsic joint-multifractality test.
//!
//! Each surrogate keeps the exact value distribution of its source and,
//! approximately, its power spectrum, while destroying nonlinear dependence.
//! A pair is tested under three schemes (surrogate x with original y,
//! original x with surrogate y, both surrogate). The p-value of a scheme is
//! the fraction of surrogate pairs whose singularity width exceeds the
//! original one; small values point to nonlinear correlations as the source
//! of the joint multifractality.
//!
//! Member `k` of an ensemble draws its x and y surrogates from seeds derived
//! from `(master_seed, k, side)` alone, so results do not depend on how the
//! members are scheduled, and the x surrogate of member `k` is the same in
//! every scheme that uses one.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::dma::DmaConfig;
use crate::error::{Error, Result};
use crate::multifractal::{analyze, JointSpectrumResult};
use crate::series::AlignedPair;

pub const DEFAULT_MAX_ITER: usize = 1000;

/// Which side(s) of a pair are replaced by surrogates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateScheme {
    IaaftXOrigY,
    OrigXIaaftY,
    IaaftXIaaftY,
}

impl SurrogateScheme {
    pub const ALL: [SurrogateScheme; 3] = [
        SurrogateScheme::IaaftXOrigY,
        SurrogateScheme::OrigXIaaftY,
        SurrogateScheme::IaaftXIaaftY,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SurrogateScheme::IaaftXOrigY => "iaaft_x_orig_y",
            SurrogateScheme::OrigXIaaftY => "orig_x_iaaft_y",
            SurrogateScheme::IaaftXIaaftY => "iaaft_x_iaaft_y",
        }
    }

    /// 1, 2 or 3.
    pub fn number(self) -> usize {
        match self {
            SurrogateScheme::IaaftXOrigY => 1,
            SurrogateScheme::OrigXIaaftY => 2,
            SurrogateScheme::IaaftXIaaftY => 3,
        }
    }

    pub fn replaces_x(self) -> bool {
        self != SurrogateScheme::OrigXIaaftY
    }

    pub fn replaces_y(self) -> bool {
        self != SurrogateScheme::IaaftXOrigY
    }
}

impl fmt::Display for SurrogateScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SurrogateScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        SurrogateScheme::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s) || v.number().to_string() == s)
            .ok_or_else(|| Error::invalid(format!("unknown surrogate scheme `{s}`")))
    }
}

/// Side of a pair, mixed into member seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    X = 0,
    Y = 1,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// IAAFT seed for ensemble member `member` on `side`.
pub fn member_seed(master_seed: u64, member: u64, side: Side) -> u64 {
    splitmix64(splitmix64(splitmix64(master_seed) ^ member) ^ side as u64)
}

/// An IAAFT surrogate with its convergence record.
#[derive(Debug, Clone, PartialEq)]
pub struct Iaaft {
    pub values: Vec<f64>,
    pub iterations: usize,
    /// The rank order stopped changing before `max_iter` ran out.
    pub converged: bool,
}

/// Precomputed transforms, sorted values and Fourier amplitudes of one source series.
pub struct IaaftGenerator {
    source: Vec<f64>,
    sorted: Vec<f64>,
    amplitudes: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl IaaftGenerator {
    pub fn new(series: &[f64]) -> Result<Self> {
        if series.len() < 8 {
            return Err(Error::TooShort {
                needed: 8,
                got: series.len(),
            });
        }
        if series.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("surrogate source"));
        }
        let n = series.len();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let mut spectrum: Vec<Complex<f64>> = series.iter().map(|&v| Complex::new(v, 0.0)).collect();
        forward.process(&mut spectrum);
        let mut sorted = series.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            source: series.to_vec(),
            sorted,
            amplitudes: spectrum.iter().map(|c| c.norm()).collect(),
            forward,
            inverse,
        })
    }

    /// Runs IAAFT from a random shuffle drawn with `seed`.
    ///
    /// Alternates imposing the source Fourier amplitudes (keeping phases) and
    /// mapping the result by rank onto the sorted source values, until the
    /// rank order repeats or `max_iter` iterations have run.
    pub fn generate(&self, max_iter: usize, seed: u64) -> Iaaft {
        let n = self.source.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut current = self.source.clone();
        current.shuffle(&mut rng);
        if max_iter == 0 {
            return Iaaft {
                values: current,
                iterations: 0,
                converged: false,
            };
        }

        let mut buf = vec![Complex::new(0.0, 0.0); n];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.forward.get_inplace_scratch_len()];
        let mut keyed: Vec<(f64, u32)> = Vec::with_capacity(n);
        let mut order: Vec<u32> = Vec::with_capacity(n);
        let mut previous: Vec<u32> = Vec::with_capacity(n);
        let inv_n = 1.0 / n as f64;

        for iteration in 1..=max_iter {
            for (b, &v) in buf.iter_mut().zip(&current) {
                *b = Complex::new(v, 0.0);
            }
            self.forward.process_with_scratch(&mut buf, &mut scratch);
            for (b, &amp) in buf.iter_mut().zip(&self.amplitudes) {
                let mag = b.norm();
                *b = if mag > 0.0 { *b * (amp / mag) } else { Complex::new(amp, 0.0) };
            }
            self.inverse.process_with_scratch(&mut buf, &mut scratch);

            keyed.clear();
            keyed.extend(buf.iter().enumerate().map(|(i, c)| (c.re * inv_n, i as u32)));
            keyed.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            order.clear();
            order.extend(keyed.iter().map(|&(_, i)| i));
            for (&i, &v) in order.iter().zip(&self.sorted) {
                current[i as usize] = v;
            }
            if order == previous {
                return Iaaft {
                    values: current,
                    iterations: iteration,
                    converged: true,
                };
            }
            std::mem::swap(&mut order, &mut previous);
        }
        Iaaft {
            values: current,
            iterations: max_iter,
            converged: false,
        }
    }
}

/// IAAFT surrogate of `series`; deterministic in `(series, max_iter, seed)`.
pub fn iaaft(series: &[f64], max_iter: usize, seed: u64) -> Result<Iaaft> {
    Ok(IaaftGenerator::new(series)?.generate(max_iter, seed))
}

fn member_pair(
    pair: &AlignedPair,
    scheme: SurrogateScheme,
    x_gen: Option<&IaaftGenerator>,
    y_gen: Option<&IaaftGenerator>,
    member: u64,
    master_seed: u64,
    max_iter: usize,
) -> Result<AlignedPair> {
    let side = |gen: Option<&IaaftGenerator>, series: &crate::series::ReturnSeries, s: Side| match gen {
        Some(g) => series.with_values(g.generate(max_iter, member_seed(master_seed, member, s)).values),
        None => Ok(series.clone()),
    };
    let x = if scheme.replaces_x() { side(x_gen, &pair.x, Side::X)? } else { pair.x.clone() };
    let y = if scheme.replaces_y() { side(y_gen, &pair.y, Side::Y)? } else { pair.y.clone() };
    AlignedPair::new(x, y)
}

/// The `n` surrogate pairs of `scheme`, member by member.
pub fn surrogate_ensemble(
    pair: &AlignedPair,
    scheme: SurrogateScheme,
    n: usize,
    master_seed: u64,
    max_iter: usize,
) -> Result<Vec<AlignedPair>> {
    if n == 0 {
        return Err(Error::invalid("ensemble size must be positive"));
    }
    let x_gen = scheme.replaces_x().then(|| IaaftGenerator::new(pair.x.values())).transpose()?;
    let y_gen = scheme.replaces_y().then(|| IaaftGenerator::new(pair.y.values())).transpose()?;
    (0..n as u64)
        .into_par_iter()
        .map(|k| member_pair(pair, scheme, x_gen.as_ref(), y_gen.as_ref(), k, master_seed, max_iter))
        .collect()
}

/// Ensemble settings shared by every scheme of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateSettings {
    pub n_surrogates: usize,
    pub master_seed: u64,
    pub max_iter: usize,
    /// Level below which a p-value marks the pair as an intrinsic candidate.
    pub significance_level: f64,
}

/// Singularity-width comparison of one scheme.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurrogateTestReport {
    pub scheme: SurrogateScheme,
    pub delta_alpha_original: f64,
    /// Mean of the surrogate widths `⟨Δα̂⟩`.
    pub mean_surrogate_width: f64,
    /// Sample standard deviation of the surrogate widths.
    pub std_surrogate_width: f64,
    /// Fraction of evaluated surrogates with `Δα̂ > Δα`.
    pub p_value: f64,
    pub n_surrogates: usize,
    /// Members dropped because a segment fluctuation vanished.
    pub excluded: usize,
    pub master_seed: u64,
    pub significance_level: f64,
    /// `p_value < significance_level`.
    pub intrinsic_candidate: bool,
}

impl SurrogateTestReport {
    pub const CSV_HEADER: [&'static str; 8] = [
        "pair", "scheme", "delta_alpha", "mean_hat", "std_hat", "p_value", "n", "excluded",
    ];

    /// Builds the report from the original width and the surviving surrogate widths.
    pub fn from_widths(
        scheme: SurrogateScheme,
        delta_alpha_original: f64,
        widths: &[f64],
        excluded: usize,
        settings: &SurrogateSettings,
    ) -> Result<Self> {
        if widths.is_empty() {
            return Err(Error::invalid(format!(
                "scheme {scheme}: every surrogate was excluded"
            )));
        }
        let m = widths.len() as f64;
        let mean = widths.iter().sum::<f64>() / m;
        let std = if widths.len() > 1 {
            (widths.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
        } else {
            0.0
        };
        let exceed = widths.iter().filter(|&&w| w > delta_alpha_original).count();
        let p_value = exceed as f64 / m;
        Ok(Self {
            scheme,
            delta_alpha_original,
            mean_surrogate_width: mean,
            std_surrogate_width: std,
            p_value,
            n_surrogates: widths.len() + excluded,
            excluded,
            master_seed: settings.master_seed,
            significance_level: settings.significance_level,
            intrinsic_candidate: p_value < settings.significance_level,
        })
    }

    pub fn csv_record(&self, pair: &str) -> [String; 8] {
        [
            pair.to_string(),
            self.scheme.name().to_string(),
            self.delta_alpha_original.to_string(),
            self.mean_surrogate_width.to_string(),
            self.std_surrogate_width.to_string(),
            self.p_value.to_string(),
            self.n_surrogates.to_string(),
            self.excluded.to_string(),
        ]
    }

    pub fn write_csv<W: Write>(reports: &[&SurrogateTestReport], pair: &str, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(Self::CSV_HEADER)?;
        for r in reports {
            w.write_record(r.csv_record(pair))?;
        }
        w.flush().map_err(|e| Error::io("surrogate csv", e))?;
        Ok(())
    }
}

/// A scheme's report together with the spectra of its surviving members.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeOutcome {
    pub report: SurrogateTestReport,
    /// In member order, excluded members omitted.
    #[serde(skip)]
    pub members: Vec<JointSpectrumResult>,
}

impl SchemeOutcome {
    pub fn widths(&self) -> Vec<f64> {
        self.members.iter().map(|m| m.delta_alpha).collect()
    }
}

/// Result of testing one pair under several schemes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurrogateStage {
    pub original: JointSpectrumResult,
    pub outcomes: Vec<SchemeOutcome>,
    /// Full MF-X-DMA evaluations performed, original included.
    pub analyses_run: usize,
}

/// Runs every scheme in `schemes` against the same ensemble of surrogates.
///
/// Members are evaluated in parallel; the x (y) surrogate of member `k` is
/// generated once and reused by every scheme that needs it.
pub fn run_surrogate_tests(
    pair: &AlignedPair,
    schemes: &[SurrogateScheme],
    settings: &SurrogateSettings,
    config: &DmaConfig,
) -> Result<SurrogateStage> {
    if settings.n_surrogates == 0 {
        return Err(Error::invalid("ensemble size must be positive"));
    }
    if schemes.is_empty() {
        return Err(Error::invalid("no surrogate scheme selected"));
    }
    let original = analyze(pair.x.values(), pair.y.values(), config)?.spectrum;
    let x_gen = schemes
        .iter()
        .any(|s| s.replaces_x())
        .then(|| IaaftGenerator::new(pair.x.values()))
        .transpose()?;
    let y_gen = schemes
        .iter()
        .any(|s| s.replaces_y())
        .then(|| IaaftGenerator::new(pair.y.values()))
        .transpose()?;
    let (n, seed, max_iter) = (settings.n_surrogates, settings.master_seed, settings.max_iter);

    let per_member: Vec<Vec<Result<JointSpectrumResult>>> = (0..n as u64)
        .into_par_iter()
        .map(|k| {
            let gen = |g: &Option<IaaftGenerator>, side| {
                g.as_ref().map(|g| g.generate(max_iter, member_seed(seed, k, side)).values)
            };
            let xs = gen(&x_gen, Side::X);
            let ys = gen(&y_gen, Side::Y);
            schemes
                .iter()
                .map(|&scheme| {
                    let x = match (&xs, scheme.replaces_x()) {
                        (Some(v), true) => v.as_slice(),
                        _ => pair.x.values(),
                    };
                    let y = match (&ys, scheme.replaces_y()) {
                        (Some(v), true) => v.as_slice(),
                        _ => pair.y.values(),
                    };
                    analyze(x, y, config).map(|a| a.spectrum)
                })
                .collect()
        })
        .collect();

    let mut outcomes = Vec::with_capacity(schemes.len());
    for (si, &scheme) in schemes.iter().enumerate() {
        let mut members = Vec::with_capacity(n);
        let mut excluded = 0;
        for results in &per_member {
            match &results[si] {
                Ok(spec) => members.push(spec.clone()),
                Err(Error::DegenerateSegment { .. }) => excluded += 1,
                Err(e) => return Err(Error::invalid(format!("scheme {scheme}: {e}"))),
            }
        }
        let widths: Vec<f64> = members.iter().map(|m| m.delta_alpha).collect();
        let report = SurrogateTestReport::from_widths(scheme, original.delta_alpha, &widths, excluded, settings)?;
        outcomes.push(SchemeOutcome { report, members });
    }
    Ok(SurrogateStage {
        original,
        outcomes,
        analyses_run: 1 + n * schemes.len(),
    })
}

/// Single-scheme test of intrinsic joint multifractality.
pub fn intrinsic_test(
    pair: &AlignedPair,
    scheme: SurrogateScheme,
    settings: &SurrogateSettings,
    config: &DmaConfig,
) -> Result<SurrogateTestReport> {
    let mut stage = run_surrogate_tests(pair, &[scheme], settings, config)?;
    Ok(stage.outcomes.remove(0).report)
}
