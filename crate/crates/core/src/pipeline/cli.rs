use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{Days, NaiveDate};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use log::{error, info, warn};

use super::config::{parse_schemes, RunConfig};
use super::figdata::{emit_plot_data, Figure};
use super::run::{run_stages, write_bundle, StageSelection};
use crate::error::{Error, Result};
use crate::synth::{binomial_cascade, fgn, CascadeSpec};

/// Environment variable overriding the worker thread count.
pub const THREADS_ENV: &str = "MFXDMA_THREADS";

const SURROGATES_ONLY: StageSelection = StageSelection {
    qcc: false,
    mfx_dma: true,
    tau_test: false,
    surrogate_test: true,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_STAGE_FAILED: i32 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "mfxdma",
    version,
    about = "Joint multifractal cross-correlation analysis of two price series",
    long_about = "Joint multifractal cross-correlation analysis of two price series.\n\n\
        Inputs are CSV price files. They are aligned on the intersection of their dates \
        before log returns are taken, so a gap never produces a multi-day return.\n\n\
        Set MFXDMA_THREADS to fix the number of worker threads; results do not depend on it."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every stage and write the report directory and plot data.
    Analyze(RunArgs),
    /// Cross-correlation portmanteau test only.
    Qcc(RunArgs),
    /// Fluctuation functions, spectrum and the τ(q) curvature test.
    Spectrum(RunArgs),
    /// Spectrum plus the surrogate width test.
    SurrogateTest(RunArgs),
    /// Write synthetic price series.
    #[command(subcommand)]
    Synth(SynthCommand),
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    /// Plain-text `key = value` or JSON config; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// First input CSV.
    #[arg(long)]
    x: Option<PathBuf>,
    /// Second input CSV.
    #[arg(long)]
    y: Option<PathBuf>,
    /// Master seed for every random draw (required when surrogates are generated).
    #[arg(long)]
    seed: Option<u64>,
    /// Output root; results go to `<out>/<x>-<y>/`.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long)]
    date_column: Option<String>,
    #[arg(long)]
    value_column: Option<String>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    q_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    q_max: Option<f64>,
    #[arg(long)]
    q_step: Option<f64>,
    #[arg(long)]
    scale_min: Option<usize>,
    #[arg(long)]
    scale_max: Option<usize>,
    #[arg(long)]
    n_scales: Option<usize>,
    /// Surrogates per scheme; 0 skips the surrogate stage.
    #[arg(long)]
    surrogates: Option<usize>,
    /// `all` or a comma-separated list of 1, 2, 3 or scheme names.
    #[arg(long)]
    schemes: Option<String>,
    /// Significance level of the tests.
    #[arg(long)]
    level: Option<f64>,
    #[arg(long)]
    qcc_m_max: Option<usize>,
    #[arg(long)]
    iaaft_max_iter: Option<usize>,
    /// Standardize both return series before analysis.
    #[arg(long)]
    standardize: bool,
    /// Detrend the returns themselves rather than their cumulative sum.
    #[arg(long)]
    no_profile: bool,
}

#[derive(Subcommand, Debug)]
enum SynthCommand {
    /// Prices whose log returns are fractional Gaussian noise.
    Fgn {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.5)]
        hurst: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Prices whose log returns are a binomial multiplicative cascade.
    Cascade {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        levels: u32,
        /// Randomly swap branches at each split (needs --seed).
        #[arg(long)]
        shuffle: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

impl RunArgs {
    fn to_config(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $field:ident),* $(,)?) => {
                $(if let Some(v) = &self.$flag { c.$field = v.clone().into(); })*
            };
        }
        set!(
            date_column => date_column, value_column => value_column, theta => theta,
            q_min => q_min, q_max => q_max, q_step => q_step, scale_min => scale_min,
            scale_max => scale_max, n_scales => n_scales, surrogates => n_surrogates,
            level => significance_level, qcc_m_max => qcc_m_max, iaaft_max_iter => iaaft_max_iter,
        );
        if let Some(x) = &self.x {
            c.input_x = Some(x.clone());
        }
        if let Some(y) = &self.y {
            c.input_y = Some(y.clone());
        }
        if let Some(seed) = self.seed {
            c.master_seed = Some(seed);
        }
        if let Some(s) = &self.schemes {
            c.schemes = parse_schemes(s)?;
        }
        c.standardize |= self.standardize;
        c.use_profile &= !self.no_profile;
        Ok(c)
    }
}

/// Entry point of the `mfxdma` binary. Returns the process exit code.
pub fn cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp_millis()
        .try_init();
    let parsed = match Cli::try_parse_from(argv) {
        Ok(p) => p,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_INVALID,
            };
        }
    };
    if let Err(e) = configure_threads() {
        error!("{e}");
        return EXIT_INVALID;
    }
    match parsed.command {
        Command::Synth(cmd) => match synth(cmd) {
            Ok(()) => EXIT_OK,
            Err(e) => {
                error!("{e}");
                EXIT_INVALID
            }
        },
        Command::Analyze(args) => run(&args, StageSelection::ALL, false),
        Command::Qcc(args) => run(
            &args,
            StageSelection {
                qcc: true,
                mfx_dma: false,
                tau_test: false,
                surrogate_test: false,
            },
            true,
        ),
        Command::Spectrum(args) => run(
            &args,
            StageSelection {
                qcc: false,
                mfx_dma: true,
                tau_test: true,
                surrogate_test: false,
            },
            true,
        ),
        Command::SurrogateTest(args) => run(&args, SURROGATES_ONLY, false),
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_ENV}={raw} is not a positive integer")))?;
    // A second call in the same process (tests) keeps the first pool.
    if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_ok() {
        info!("using {n} worker threads");
    }
    Ok(())
}

fn run(args: &RunArgs, stages: StageSelection, no_surrogates: bool) -> i32 {
    let config = match args.to_config() {
        Ok(mut c) => {
            if no_surrogates {
                c.n_surrogates = 0;
            }
            c
        }
        Err(e) => {
            error!("{e}");
            return EXIT_INVALID;
        }
    };
    if stages == SURROGATES_ONLY && config.n_surrogates == 0 {
        error!("surrogate-test needs a positive --surrogates");
        return EXIT_INVALID;
    }
    let bundle = match run_stages(&config, stages) {
        Ok(b) => b,
        Err(e) => {
            error!("{e}");
            return EXIT_INVALID;
        }
    };
    let dir = match write_bundle(&bundle, &args.out) {
        Ok(d) => d,
        Err(e) => {
            error!("{e}");
            return EXIT_STAGE_FAILED;
        }
    };
    let figures = Figure::available(&bundle);
    for f in Figure::ALL.iter().filter(|f| !figures.contains(f)) {
        info!("figure data `{}` not written: its stage did not run", f.name());
    }
    if let Err(e) = emit_plot_data(&bundle, &dir, &figures) {
        error!("{e}");
        return EXIT_STAGE_FAILED;
    }
    info!("results written to {}", dir.display());
    if bundle.has_failures() {
        for f in bundle.failures() {
            warn!("stage {} failed: {}", f.stage, f.detail.as_deref().unwrap_or(""));
        }
        return EXIT_STAGE_FAILED;
    }
    EXIT_OK
}

fn synth(cmd: SynthCommand) -> Result<()> {
    let (returns, out) = match cmd {
        SynthCommand::Fgn { n, hurst, seed, out } => (fgn(n, hurst, seed)?, out),
        SynthCommand::Cascade {
            p,
            levels,
            shuffle,
            seed,
            out,
        } => {
            if shuffle && seed.is_none() {
                return Err(Error::Config("--shuffle needs --seed".into()));
            }
            let spec = CascadeSpec {
                shuffle,
                seed: seed.unwrap_or(0),
                ..CascadeSpec::new(levels, p)
            };
            (binomial_cascade(&spec)?, out)
        }
    };
    write_prices(&returns, &out)?;
    info!("wrote {} prices to {}", returns.len() + 1, out.display());
    Ok(())
}

/// Writes `100·exp(cumsum(returns))`, one calendar day apart, so that
/// log returns of the file give back `returns`.
pub fn write_prices(returns: &[f64], path: &Path) -> Result<()> {
    let start = NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date");
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["date", "value"])?;
    let mut log_price = 100f64.ln();
    for t in 0..=returns.len() {
        if t > 0 {
            log_price += returns[t - 1];
        }
        let date = start + Days::new(t as u64);
        w.write_record([date.format("%Y-%m-%d").to_string(), log_price.exp().to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    w.into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?
        .flush()
        .map_err(|e| Error::io(path, e))
}
