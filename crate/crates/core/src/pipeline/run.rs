use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use log::{info, warn};
use serde::Serialize;

use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::multifractal::{analyze, tau_nonlinearity_test, JointAnalysis, JointSpectrumResult, TauNonlinearityReport};
use crate::series::{align, load_csv, AlignedPair};
use crate::stats::{qcc_test, QccReport};
use crate::surrogate::{run_surrogate_tests, SurrogateStage, SurrogateTestReport};

/// The two levels at which the surrogate test is classified.
pub const REPORTED_LEVELS: [f64; 2] = [0.05, 0.10];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Qcc,
    MfxDma,
    TauTest,
    SurrogateTest,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Qcc => "qcc",
            Stage::MfxDma => "mfx-dma",
            Stage::TauTest => "tau-test",
            Stage::SurrogateTest => "surrogate-test",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which stages a run executes. The order of execution is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StageSelection {
    pub qcc: bool,
    pub mfx_dma: bool,
    pub tau_test: bool,
    pub surrogate_test: bool,
}

impl StageSelection {
    pub const ALL: StageSelection = StageSelection {
        qcc: true,
        mfx_dma: true,
        tau_test: true,
        surrogate_test: true,
    };

    fn contains(self, stage: Stage) -> bool {
        match stage {
            Stage::Qcc => self.qcc,
            Stage::MfxDma => self.mfx_dma,
            Stage::TauTest => self.tau_test,
            Stage::SurrogateTest => self.surrogate_test,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Completed,
    Failed,
    /// Not requested, disabled by configuration, or blocked by a failed dependency.
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub status: StageStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// Run metadata. Only `wall_clock` varies between otherwise identical runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub version: &'static str,
    pub pair: String,
    pub n_observations: usize,
    pub master_seed: Option<u64>,
    pub config: RunConfig,
    pub stages: Vec<StageRecord>,
    pub wall_clock: WallClock,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WallClock {
    pub started_unix_seconds: f64,
    pub elapsed_seconds: f64,
    pub stage_seconds: Vec<(Stage, f64)>,
}

/// All results of one pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisBundle {
    pub qcc: Option<QccReport>,
    pub analysis: Option<JointAnalysis>,
    pub tau_fit: Option<TauNonlinearityReport>,
    pub surrogates: Option<SurrogateStage>,
    pub provenance: Provenance,
}

impl AnalysisBundle {
    pub fn pair(&self) -> &str {
        &self.provenance.pair
    }

    pub fn spectrum(&self) -> Option<&JointSpectrumResult> {
        self.analysis.as_ref().map(|a| &a.spectrum)
    }

    pub fn surrogate_tests(&self) -> Vec<&SurrogateTestReport> {
        self.surrogates
            .iter()
            .flat_map(|s| s.outcomes.iter().map(|o| &o.report))
            .collect()
    }

    pub fn failures(&self) -> impl Iterator<Item = &StageRecord> {
        self.provenance
            .stages
            .iter()
            .filter(|r| r.status == StageStatus::Failed)
    }

    pub fn has_failures(&self) -> bool {
        self.failures().next().is_some()
    }
}

/// Loads and aligns the configured inputs, then runs every stage.
pub fn run_analysis(config: &RunConfig) -> Result<AnalysisBundle> {
    run_stages(config, StageSelection::ALL)
}

pub fn run_stages(config: &RunConfig, stages: StageSelection) -> Result<AnalysisBundle> {
    config.validate()?;
    let (Some(px), Some(py)) = (&config.input_x, &config.input_y) else {
        unreachable!("validated above");
    };
    let a = load_csv(px, &config.date_column, &config.value_column)?;
    let b = load_csv(py, &config.date_column, &config.value_column)?;
    let pair = align(&a, &b)?;
    info!("aligned {} and {}: {} returns", px.display(), py.display(), pair.len());
    run_pair(&pair, config, stages)
}

/// Runs the selected stages on an already aligned pair.
///
/// Errors returned here are configuration problems detected before any
/// stage starts. Stage failures are recorded in the bundle instead.
pub fn run_pair(pair: &AlignedPair, config: &RunConfig, stages: StageSelection) -> Result<AnalysisBundle> {
    let started = Instant::now();
    let started_unix_seconds = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0);

    let dma = config.dma_config()?;
    dma.validate(pair.len())?;
    let surrogate_settings = if stages.surrogate_test {
        config.surrogate_settings()?
    } else {
        None
    };
    let standardized;
    let pair = if config.standardize {
        standardized = pair.standardized()?;
        &standardized
    } else {
        pair
    };

    let mut records = Vec::new();
    let mut stage_seconds = Vec::new();
    let mut timed = |stage: Stage, status: StageStatus, detail: Option<String>, t0: Instant| {
        let secs = t0.elapsed().as_secs_f64();
        match status {
            StageStatus::Completed => info!("stage {stage} completed in {secs:.3} s"),
            StageStatus::Failed => warn!("stage {stage} failed after {secs:.3} s: {}", detail.as_deref().unwrap_or("")),
            StageStatus::Skipped => info!("stage {stage} skipped: {}", detail.as_deref().unwrap_or("")),
        }
        if status != StageStatus::Skipped {
            stage_seconds.push((stage, secs));
        }
        records.push(StageRecord { stage, status, detail });
    };
    let not_requested = || Some("not requested".to_string());

    let mut qcc = None;
    let t0 = Instant::now();
    if stages.contains(Stage::Qcc) {
        let m_max = config.qcc_m_max.min(pair.len() - 1);
        let m_range: Vec<usize> = (1..=m_max).collect();
        match qcc_test(pair, &m_range, config.significance_level) {
            Ok(r) => {
                qcc = Some(r);
                timed(Stage::Qcc, StageStatus::Completed, None, t0);
            }
            Err(e) => timed(Stage::Qcc, StageStatus::Failed, Some(e.to_string()), t0),
        }
    } else {
        timed(Stage::Qcc, StageStatus::Skipped, not_requested(), t0);
    }

    let mut analysis = None;
    let t0 = Instant::now();
    if stages.contains(Stage::MfxDma) {
        match analyze(pair.x.values(), pair.y.values(), &dma) {
            Ok(a) => {
                analysis = Some(a);
                timed(Stage::MfxDma, StageStatus::Completed, None, t0);
            }
            Err(e) => timed(Stage::MfxDma, StageStatus::Failed, Some(e.to_string()), t0),
        }
    } else {
        timed(Stage::MfxDma, StageStatus::Skipped, not_requested(), t0);
    }

    let mut tau_fit = None;
    let t0 = Instant::now();
    match (&analysis, stages.contains(Stage::TauTest)) {
        (_, false) => timed(Stage::TauTest, StageStatus::Skipped, not_requested(), t0),
        (None, true) => timed(Stage::TauTest, StageStatus::Skipped, Some("no spectrum".into()), t0),
        (Some(a), true) => {
            let s = &a.spectrum;
            match tau_nonlinearity_test(&s.q_grid, &s.tau, config.significance_level) {
                Ok(r) => {
                    tau_fit = Some(r);
                    timed(Stage::TauTest, StageStatus::Completed, None, t0);
                }
                Err(e) => timed(Stage::TauTest, StageStatus::Failed, Some(e.to_string()), t0),
            }
        }
    }

    let mut surrogates = None;
    let t0 = Instant::now();
    match (surrogate_settings, stages.contains(Stage::SurrogateTest)) {
        (_, false) => timed(Stage::SurrogateTest, StageStatus::Skipped, not_requested(), t0),
        (None, true) => timed(Stage::SurrogateTest, StageStatus::Skipped, Some("n_surrogates = 0".into()), t0),
        (Some(settings), true) => match run_surrogate_tests(pair, &config.schemes, &settings, &dma) {
            Ok(stage) => {
                info!("surrogate stage ran {} MF-X-DMA analyses", stage.analyses_run);
                surrogates = Some(stage);
                timed(Stage::SurrogateTest, StageStatus::Completed, None, t0);
            }
            Err(e) => timed(Stage::SurrogateTest, StageStatus::Failed, Some(e.to_string()), t0),
        },
    }

    Ok(AnalysisBundle {
        qcc,
        analysis,
        tau_fit,
        surrogates,
        provenance: Provenance {
            version: env!("CARGO_PKG_VERSION"),
            pair: pair.name(),
            n_observations: pair.len(),
            master_seed: config.master_seed,
            config: config.clone(),
            stages: records,
            wall_clock: WallClock {
                started_unix_seconds,
                elapsed_seconds: started.elapsed().as_secs_f64(),
                stage_seconds,
            },
        },
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_with(dir: &Path, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<PathBuf> {
    let path = dir.join(name);
    let mut w = create(&path)?;
    f(&mut w)?;
    finish(w, &path)?;
    Ok(path)
}

/// `intrinsic` when `p < level`, else `apparent`.
pub fn classify(p_value: f64, level: f64) -> &'static str {
    if p_value < level {
        "intrinsic"
    } else {
        "apparent"
    }
}

#[derive(Serialize)]
struct SchemeSummary<'a> {
    scheme: &'a str,
    p_value: f64,
    at_0_05: &'static str,
    at_0_10: &'static str,
}

#[derive(Serialize)]
struct Summary<'a> {
    pair: &'a str,
    n_observations: usize,
    qcc_rejection_fraction: Option<f64>,
    delta_alpha: Option<f64>,
    tau_a2: Option<f64>,
    tau_a2_pvalue: Option<f64>,
    tau_nonlinear: Option<bool>,
    schemes: Vec<SchemeSummary<'a>>,
    failed_stages: Vec<&'a StageRecord>,
}

fn tau_fit_header() -> Vec<String> {
    let mut h = vec!["pair".to_string()];
    for prefix in ["", "se_", "t_", "p_"] {
        for j in 0..3 {
            h.push(format!("{prefix}a{j}"));
        }
    }
    h.extend(["F", "p_F", "R2", "level", "multifractal"].map(String::from));
    h
}

/// Writes the report files of `bundle` into `<out_root>/<pair>/` and returns that directory.
///
/// Every file except `provenance.json` depends only on the configuration,
/// the inputs and the seed.
pub fn write_bundle(bundle: &AnalysisBundle, out_root: &Path) -> Result<PathBuf> {
    let dir = out_root.join(bundle.pair());
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    if let Some(q) = &bundle.qcc {
        write_with(&dir, "qcc.csv", |w| q.write_csv(w))?;
    }
    if let Some(a) = &bundle.analysis {
        write_with(&dir, "spectrum.csv", |w| a.spectrum.write_csv(w))?;
    }
    if let Some(t) = &bundle.tau_fit {
        write_with(&dir, "tau_fit.csv", |w| {
            let mut c = csv::Writer::from_writer(w);
            c.write_record(tau_fit_header())?;
            let f = &t.fit;
            let mut row = vec![bundle.pair().to_string()];
            for v in [&f.coefficients, &f.std_errors, &f.t_stats, &f.t_pvalues] {
                row.extend(v.iter().map(f64::to_string));
            }
            row.extend([
                f.f_stat.to_string(),
                f.f_pvalue.to_string(),
                f.r_squared.to_string(),
                t.significance_level.to_string(),
                t.multifractal_flag.to_string(),
            ]);
            c.write_record(row)?;
            c.flush().map_err(|e| Error::io("tau_fit.csv", e))
        })?;
    }
    for report in bundle.surrogate_tests() {
        let name = format!("surrogate_{}.csv", report.scheme.name());
        write_with(&dir, &name, |w| SurrogateTestReport::write_csv(&[report], bundle.pair(), w))?;
    }

    let summary = Summary {
        pair: bundle.pair(),
        n_observations: bundle.provenance.n_observations,
        qcc_rejection_fraction: bundle.qcc.as_ref().map(QccReport::rejection_fraction),
        delta_alpha: bundle.spectrum().map(|s| s.delta_alpha),
        tau_a2: bundle.tau_fit.as_ref().map(TauNonlinearityReport::a2),
        tau_a2_pvalue: bundle.tau_fit.as_ref().map(TauNonlinearityReport::a2_pvalue),
        tau_nonlinear: bundle.tau_fit.as_ref().map(|t| t.multifractal_flag),
        schemes: bundle
            .surrogate_tests()
            .into_iter()
            .map(|r| SchemeSummary {
                scheme: r.scheme.name(),
                p_value: r.p_value,
                at_0_05: classify(r.p_value, REPORTED_LEVELS[0]),
                at_0_10: classify(r.p_value, REPORTED_LEVELS[1]),
            })
            .collect(),
        failed_stages: bundle.failures().collect(),
    };
    write_with(&dir, "summary.json", |w| {
        serde_json::to_writer_pretty(&mut *w, &summary)?;
        writeln!(w).map_err(|e| Error::io("summary.json", e))
    })?;
    write_with(&dir, "provenance.json", |w| {
        serde_json::to_writer_pretty(&mut *w, &bundle.provenance)?;
        writeln!(w).map_err(|e| Error::io("provenance.json", e))
    })?;
    Ok(dir)
}
