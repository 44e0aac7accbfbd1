//! Seeded experiment drivers: phase transitions, κ_s scaling, certificate
//! cross-checks, tail-bound validation and rate formulas.
//!
//! Each grid point gets the seed `derive_seed(master, grid_index)` and each
//! trial draws from its own stream of that seed (see [`crate::rng`]), so
//! the CSV bodies depend only on the configuration, never on the number of
//! workers. Rows are emitted in grid order.

mod config;
pub mod plot;
mod runs;

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use nalgebra::DVector;
use rand::seq::index::sample;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::Scalar;
use crate::rng::SEEDING_SCHEME;

pub use config::{
    required_m, EnsembleRef, ExperimentConfig, ExperimentKind, KappaFamily, NamedEnsemble,
    OneOrMany, RateFormula, RateInputs, DEFAULT_RATE_CONSTANT, DEFAULT_RECOVERY_TOL,
};
pub use runs::{
    grid_profile, run_certificate_crosscheck, run_kappa_scaling, run_lemma_validation,
    run_phase_transition, run_rate_formula, Contingency, CrossCheckResult, CrossCheckRow,
    GridProfile, KappaScalingResult, LemmaResult, LemmaRow, M50Row, PhaseTransitionResult,
    RatePoint, RateRow, TrialRecord, TrialTiming,
};

/// Random `s`-sparse vector: uniform support, random signs (phases) and
/// magnitudes uniform in `[1, 2]`. Returns the vector and its sorted support.
pub fn plant_signal<T: Scalar, R: Rng + ?Sized>(
    n: usize,
    s: usize,
    rng: &mut R,
) -> (DVector<T>, Vec<usize>) {
    let mut support = sample(rng, n, s).into_vec();
    support.sort_unstable();
    let mut x = DVector::<T>::zeros(n);
    for &i in &support {
        let magnitude = 1.0 + rng.random::<f64>();
        x[i] = T::random_sign(rng).scale(magnitude);
    }
    (x, support)
}

/// Runs `f` on a pool with `workers` threads (0 = rayon's default).
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// CSV text with `#` header lines. The `generated_unix` line is the only
/// part that varies between identical runs.
pub fn csv_text<R: Serialize>(header: &[String], rows: &[R]) -> Result<String> {
    let mut out = String::new();
    for line in header {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    let body = w
        .into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    out.push_str(&String::from_utf8(body).expect("csv output is utf-8"));
    Ok(out)
}

/// The non-comment lines of a CSV file written by this module.
pub fn csv_body(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n")
}

fn header(cfg: &ExperimentConfig, what: &str) -> Vec<String> {
    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    vec![
        format!("cslab {} {what}", cfg.experiment.name()),
        format!("config: {}", cfg.to_json()),
        format!("seeding: {SEEDING_SCHEME}"),
        format!("generated_unix: {stamp}"),
    ]
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(contents.as_bytes())?;
    Ok(())
}

/// Typed outcome of [`run`].
#[derive(Debug, Clone)]
pub enum ExperimentReport {
    PhaseTransition(PhaseTransitionResult),
    KappaScaling(KappaScalingResult),
    CrossCheck(CrossCheckResult),
    LemmaValidation(LemmaResult),
    RateFormula(Vec<RateRow>),
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub files: Vec<PathBuf>,
    pub report: ExperimentReport,
}

struct Writer<'a> {
    cfg: &'a ExperimentConfig,
    files: Vec<PathBuf>,
}

impl Writer<'_> {
    fn csv<R: Serialize>(&mut self, suffix: &str, what: &str, rows: &[R]) -> Result<()> {
        let path = self.cfg.output_path(suffix, "csv");
        write_file(&path, &csv_text(&header(self.cfg, what), rows)?)?;
        self.files.push(path);
        Ok(())
    }

    fn plot(&mut self, suffix: &str, plot: &plot::LinePlot) -> Result<()> {
        if !self.cfg.plots {
            return Ok(());
        }
        for (ext, text) in [("dat", plot.to_dat()), ("svg", plot.to_svg())] {
            let path = self.cfg.output_path(suffix, ext);
            write_file(&path, &text)?;
            self.files.push(path);
        }
        Ok(())
    }
}

/// Runs the configured experiment on `cfg.workers` threads and writes its
/// CSV files (plus plots where they make sense) next to `cfg.output`.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let mut w = Writer {
        cfg,
        files: Vec::new(),
    };
    let report = match cfg.experiment {
        ExperimentKind::PhaseTransition => {
            let r = with_workers(cfg.workers, || run_phase_transition(cfg))??;
            w.csv("", "success rates", &r.points)?;
            w.csv("_trials", "trials", &r.trials)?;
            w.csv("_timing", "wall times (not deterministic)", &r.timing)?;
            w.plot("", &r.plot())?;
            ExperimentReport::PhaseTransition(r)
        }
        ExperimentKind::KappaScaling => {
            let r = with_workers(cfg.workers, || run_kappa_scaling(cfg))??;
            w.csv("", "m50 by kappa_s", &r.m50)?;
            w.csv("_grid", "success rates", &r.grid.points)?;
            w.csv("_trials", "trials", &r.grid.trials)?;
            w.csv("_timing", "wall times (not deterministic)", &r.grid.timing)?;
            w.plot("", &r.grid.plot())?;
            w.plot("_m50", &r.plot())?;
            ExperimentReport::KappaScaling(r)
        }
        ExperimentKind::CertificateCrossCheck => {
            let r = with_workers(cfg.workers, || run_certificate_crosscheck(cfg))??;
            w.csv("", "contingency", &r.rows)?;
            w.csv("_trials", "trials", &r.trials)?;
            w.csv("_timing", "wall times (not deterministic)", &r.timing)?;
            ExperimentReport::CrossCheck(r)
        }
        ExperimentKind::LemmaValidation => {
            let r = with_workers(cfg.workers, || run_lemma_validation(cfg))??;
            w.csv("", "tail bound domination", &r.rows)?;
            w.csv("_trials", "trials", &r.trials)?;
            ExperimentReport::LemmaValidation(r)
        }
        ExperimentKind::RateFormula => {
            let rows = run_rate_formula(cfg)?;
            w.csv("", "required measurements", &rows)?;
            ExperimentReport::RateFormula(rows)
        }
    };
    Ok(RunOutput {
        files: w.files,
        report,
    })
}
