//! Plot-ready CSV tables, one per figure family.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use super::run::AnalysisBundle;
use crate::error::{Error, Result};
use crate::multifractal::JointSpectrumResult;
use crate::surrogate::{SchemeOutcome, SurrogateStage};

pub const HISTOGRAM_BINS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    /// `F(q, s)` against `s` for each `q`.
    Fluctuation,
    /// `H(q)` of the original with surrogate mean and spread per scheme.
    HurstBands,
    /// `τ(q)` with its quadratic fit.
    TauFit,
    /// `f(α)` of the original with surrogate mean and spread per scheme.
    SpectrumBands,
    /// Distribution of surrogate singularity widths.
    WidthHistogram,
    /// `τ(q)` minus the surrogate mean `τ(q)`.
    TauDeviation,
}

impl Figure {
    pub const ALL: [Figure; 6] = [
        Figure::Fluctuation,
        Figure::HurstBands,
        Figure::TauFit,
        Figure::SpectrumBands,
        Figure::WidthHistogram,
        Figure::TauDeviation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Figure::Fluctuation => "fluctuation",
            Figure::HurstBands => "hurst_bands",
            Figure::TauFit => "tau_fit",
            Figure::SpectrumBands => "spectrum_bands",
            Figure::WidthHistogram => "width_hist",
            Figure::TauDeviation => "tau_deviation",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.csv", self.name())
    }

    /// Whether `bundle` holds the stages this figure is drawn from.
    pub fn is_available(self, bundle: &AnalysisBundle) -> bool {
        let spectrum = bundle.analysis.is_some();
        match self {
            Figure::Fluctuation => spectrum,
            Figure::TauFit => spectrum && bundle.tau_fit.is_some(),
            _ => spectrum && bundle.surrogates.is_some(),
        }
    }

    pub fn available(bundle: &AnalysisBundle) -> Vec<Figure> {
        Self::ALL.into_iter().filter(|f| f.is_available(bundle)).collect()
    }
}

/// Writes the requested figure tables into `<out_dir>/figdata/`.
///
/// Fails with [`Error::FigureUnavailable`] if a figure's stage did not run.
pub fn emit_plot_data(bundle: &AnalysisBundle, out_dir: &Path, figures: &[Figure]) -> Result<Vec<PathBuf>> {
    if let Some(f) = figures.iter().find(|f| !f.is_available(bundle)) {
        return Err(Error::FigureUnavailable(f.name()));
    }
    let dir = out_dir.join("figdata");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    figures
        .iter()
        .map(|&fig| {
            let path = dir.join(fig.file_name());
            let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut w = csv::Writer::from_writer(BufWriter::new(file));
            write_figure(bundle, fig, &mut w)?;
            w.flush().map_err(|e| Error::io(&path, e))?;
            Ok(path)
        })
        .collect()
}

fn write_figure<W: std::io::Write>(bundle: &AnalysisBundle, fig: Figure, w: &mut csv::Writer<W>) -> Result<()> {
    let unavailable = || Error::FigureUnavailable(fig.name());
    let analysis = bundle.analysis.as_ref().ok_or_else(unavailable)?;
    let spectrum = &analysis.spectrum;
    let q = &spectrum.q_grid;
    let stage = bundle.surrogates.as_ref();
    match fig {
        Figure::Fluctuation => {
            let surface = &analysis.surface;
            w.write_record(["q", "s", "F"])?;
            for (qi, qv) in surface.q_grid.iter().enumerate() {
                for (si, s) in surface.scales.iter().enumerate() {
                    w.write_record([qv.to_string(), s.to_string(), surface.values[qi][si].to_string()])?;
                }
            }
        }
        Figure::TauFit => {
            let fit = &bundle.tau_fit.as_ref().ok_or_else(unavailable)?.fit;
            w.write_record(["q", "tau", "tau_fit", "residual"])?;
            for (qv, t) in q.iter().zip(&spectrum.tau) {
                let p = fit.predict(*qv);
                w.write_record([qv.to_string(), t.to_string(), p.to_string(), (t - p).to_string()])?;
            }
        }
        Figure::HurstBands => {
            let stage = stage.ok_or_else(unavailable)?;
            band_table(w, q, ("H", &spectrum.h), stage, |m| &m.h)?;
        }
        Figure::SpectrumBands => {
            let stage = stage.ok_or_else(unavailable)?;
            let mut header = vec!["q".to_string(), "alpha_orig".into(), "f_orig".into()];
            for o in &stage.outcomes {
                let k = o.report.scheme.number();
                for col in ["alpha_mean", "alpha_std", "f_mean", "f_std"] {
                    header.push(format!("{col}_s{k}"));
                }
            }
            w.write_record(&header)?;
            let bands: Vec<_> = stage
                .outcomes
                .iter()
                .map(|o| (mean_std(o, |m| &m.alpha), mean_std(o, |m| &m.f_alpha)))
                .collect();
            for i in 0..q.len() {
                let mut row = vec![q[i].to_string(), spectrum.alpha[i].to_string(), spectrum.f_alpha[i].to_string()];
                for ((am, asd), (fm, fsd)) in &bands {
                    row.extend([am[i], asd[i], fm[i], fsd[i]].map(|v| v.to_string()));
                }
                w.write_record(&row)?;
            }
        }
        Figure::TauDeviation => {
            let stage = stage.ok_or_else(unavailable)?;
            let mut header = vec!["q".to_string()];
            header.extend(stage.outcomes.iter().map(|o| format!("dtau_s{}", o.report.scheme.number())));
            w.write_record(&header)?;
            let means: Vec<Vec<f64>> = stage.outcomes.iter().map(|o| mean_std(o, |m| &m.tau).0).collect();
            for i in 0..q.len() {
                let mut row = vec![q[i].to_string()];
                row.extend(means.iter().map(|m| (spectrum.tau[i] - m[i]).to_string()));
                w.write_record(&row)?;
            }
        }
        Figure::WidthHistogram => {
            let stage = stage.ok_or_else(unavailable)?;
            w.write_record(["scheme", "bin", "lower", "upper", "count", "delta_alpha_orig"])?;
            for o in &stage.outcomes {
                let widths = o.widths();
                let (edges, counts) = histogram(&widths, spectrum.delta_alpha, HISTOGRAM_BINS);
                for (b, c) in counts.iter().enumerate() {
                    w.write_record([
                        o.report.scheme.number().to_string(),
                        b.to_string(),
                        edges[b].to_string(),
                        edges[b + 1].to_string(),
                        c.to_string(),
                        spectrum.delta_alpha.to_string(),
                    ])?;
                }
            }
        }
    }
    Ok(())
}

fn band_table<W: std::io::Write>(
    w: &mut csv::Writer<W>,
    q: &[f64],
    (label, orig): (&str, &[f64]),
    stage: &SurrogateStage,
    field: fn(&JointSpectrumResult) -> &Vec<f64>,
) -> Result<()> {
    let mut header = vec!["q".to_string(), format!("{label}_orig")];
    for o in &stage.outcomes {
        let k = o.report.scheme.number();
        header.push(format!("{label}_mean_s{k}"));
        header.push(format!("{label}_std_s{k}"));
    }
    w.write_record(&header)?;
    let bands: Vec<_> = stage.outcomes.iter().map(|o| mean_std(o, field)).collect();
    for i in 0..q.len() {
        let mut row = vec![q[i].to_string(), orig[i].to_string()];
        for (m, s) in &bands {
            row.push(m[i].to_string());
            row.push(s[i].to_string());
        }
        w.write_record(&row)?;
    }
    Ok(())
}

/// Pointwise mean and sample standard deviation over the members of one scheme.
fn mean_std(outcome: &SchemeOutcome, field: fn(&JointSpectrumResult) -> &Vec<f64>) -> (Vec<f64>, Vec<f64>) {
    let members = &outcome.members;
    let Some(first) = members.first() else {
        return (Vec::new(), Vec::new());
    };
    let len = field(first).len();
    let n = members.len() as f64;
    let mut mean = vec![0.0; len];
    for m in members {
        for (acc, v) in mean.iter_mut().zip(field(m)) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= n);
    let std = (0..len)
        .map(|i| {
            if members.len() < 2 {
                return 0.0;
            }
            let ss: f64 = members.iter().map(|m| (field(m)[i] - mean[i]).powi(2)).sum();
            (ss / (n - 1.0)).sqrt()
        })
        .collect();
    (mean, std)
}

/// Equal-width bins spanning the widths and the original value. The last bin is closed.
fn histogram(values: &[f64], reference: f64, bins: usize) -> (Vec<f64>, Vec<usize>) {
    let (mut lo, mut hi) = values
        .iter()
        .fold((reference, reference), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi <= lo {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins)
        .map(|i| if i == bins { hi } else { lo + width * i as f64 })
        .collect();
    let mut counts = vec![0; bins];
    for &v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    (edges, counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn degenerate_histogram_range() {
        let (edges, counts) = histogram(&[1.0, 1.0], 1.0, 4);
        assert_eq!(edges.first(), Some(&0.5));
        assert_eq!(edges.last(), Some(&1.5));
        assert_eq!(counts.iter().sum::<usize>(), 2);
    }

    proptest! {
        #[test]
        fn histogram_conserves_counts(values in prop::collection::vec(-10.0f64..10.0, 0..200), r in -10.0f64..10.0) {
            let (edges, counts) = histogram(&values, r, HISTOGRAM_BINS);
            prop_assert_eq!(counts.len(), HISTOGRAM_BINS);
            prop_assert_eq!(edges.len(), HISTOGRAM_BINS + 1);
            prop_assert_eq!(counts.iter().sum::<usize>(), values.len());
            prop_assert!(edges.windows(2).all(|e| e[0] < e[1]));
        }
    }
}
