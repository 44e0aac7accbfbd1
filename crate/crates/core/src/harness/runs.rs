use std::time::Instant;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{
    required_m, ExperimentConfig, ExperimentKind, NamedEnsemble, RateFormula, RateInputs,
};
use super::plant_signal;
use super::plot::{LinePlot, Series};
use crate::certifier::{default_params, golf, golfing_identity_check, sign_vector, FailureReason};
use crate::concentration::{
    clopper_pearson, sample_statistics, Statistic, TailEstimate, TailExperiment, CONFIDENCE,
};
use crate::ensemble::{AnyEnsemble, EnsembleSpec, ProfileOptions};
use crate::error::{Error, Result};
use crate::field::{Field, Scalar};
use crate::rng::{derive_seed, stream_rng};
use crate::solver::{basis_pursuit, BpOptions};

/// Stream used for per-grid-point draws that are not tied to a trial.
const GRID_STREAM: u64 = 1 << 63;

macro_rules! dispatch {
    ($ens:expr, $spec:ident => $body:expr) => {
        match $ens {
            AnyEnsemble::Real($spec) => $body,
            AnyEnsemble::Complex($spec) => $body,
        }
    };
}

/// Ensemble quantities attached to every row of a grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridProfile {
    pub ensemble: String,
    pub field: Field,
    pub n: usize,
    pub s: usize,
    pub kappa: f64,
    pub kappa_s: f64,
    pub mu: f64,
    pub k: f64,
}

pub fn grid_profile(e: &NamedEnsemble, s: usize) -> Result<GridProfile> {
    dispatch!(&e.ensemble, spec => {
        let p = spec.profile(s, ProfileOptions::default())?;
        Ok(GridProfile {
            ensemble: e.tag.clone(),
            field: spec.field(),
            n: spec.dim(),
            s,
            kappa: p.kappa,
            kappa_s: p.kappa_s,
            mu: p.mu,
            k: p.commutator_k,
        })
    })
}

/// One trial. Unused outcome columns are left empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub experiment: ExperimentKind,
    pub grid_index: usize,
    pub ensemble: String,
    pub field: Field,
    pub n: usize,
    pub s: usize,
    pub m: usize,
    pub kappa: f64,
    pub kappa_s: f64,
    pub mu: f64,
    pub k: f64,
    pub trial: usize,
    /// Grid-point seed; the trial draws from stream `trial` of it.
    pub seed: u64,
    pub recovered: Option<bool>,
    pub certificate_pass: Option<bool>,
    /// Relative recovery error, golfing identity deviation, or tail statistic.
    pub statistic: Option<f64>,
    pub detail: String,
}

impl TrialRecord {
    fn new(
        kind: ExperimentKind,
        grid_index: usize,
        p: &GridProfile,
        m: usize,
        trial: usize,
        seed: u64,
    ) -> Self {
        Self {
            experiment: kind,
            grid_index,
            ensemble: p.ensemble.clone(),
            field: p.field,
            n: p.n,
            s: p.s,
            m,
            kappa: p.kappa,
            kappa_s: p.kappa_s,
            mu: p.mu,
            k: p.k,
            trial,
            seed,
            recovered: None,
            certificate_pass: None,
            statistic: None,
            detail: String::new(),
        }
    }
}

/// Wall time of one trial, kept apart from the deterministic records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialTiming {
    pub grid_index: usize,
    pub trial: usize,
    pub wall_ms: f64,
}

/// Recovery rate at one `(ensemble, s, m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub grid_index: usize,
    pub ensemble: String,
    pub n: usize,
    pub s: usize,
    pub m: usize,
    pub kappa: f64,
    pub kappa_s: f64,
    pub mu: f64,
    pub k: f64,
    pub trials: usize,
    pub successes: usize,
    pub errors: usize,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct PhaseTransitionResult {
    pub points: Vec<RatePoint>,
    pub trials: Vec<TrialRecord>,
    pub timing: Vec<TrialTiming>,
}

impl PhaseTransitionResult {
    /// Success rate against `m`, one series per `(ensemble, s)`.
    pub fn plot(&self) -> LinePlot {
        let mut series: Vec<Series> = Vec::new();
        for p in &self.points {
            let label = format!("{} s={}", p.ensemble, p.s);
            match series.iter_mut().find(|s| s.label == label) {
                Some(s) => s.points.push((p.m as f64, p.rate)),
                None => series.push(Series {
                    label,
                    points: vec![(p.m as f64, p.rate)],
                }),
            }
        }
        LinePlot {
            title: "basis pursuit recovery".into(),
            x_label: "m".into(),
            y_label: "success rate".into(),
            series,
        }
    }
}

fn recovery_trial<T: Scalar>(
    spec: &EnsembleSpec<T>,
    s: usize,
    m: usize,
    seed: u64,
    trial: usize,
    tol: f64,
    rec: &mut TrialRecord,
) {
    let mut rng = stream_rng(seed, trial as u64);
    let (x, _) = plant_signal::<T, _>(spec.dim(), s, &mut rng);
    let outcome = spec.sampling_matrix(m, &mut rng).and_then(|a| {
        let b = &a.a_matrix * &x;
        basis_pursuit(&a.a_matrix, &b, &BpOptions::default())
    });
    match outcome {
        Ok(sol) => {
            let err = (&sol.x_star - &x).norm() / x.norm();
            rec.recovered = Some(err <= tol);
            rec.statistic = Some(err);
            if !sol.converged {
                rec.detail = "unconverged".into();
            }
        }
        Err(e) => {
            rec.recovered = Some(false);
            rec.detail = format!("error: {e}");
        }
    }
}

struct RecoveryPoint<'a> {
    ensemble: &'a NamedEnsemble,
    profile: GridProfile,
    m: usize,
    seed: u64,
}

fn recovery_grid(
    cfg: &ExperimentConfig,
    kind: ExperimentKind,
    ensembles: &[NamedEnsemble],
) -> Result<PhaseTransitionResult> {
    let mut grid = Vec::new();
    for e in ensembles {
        for s in cfg.s_values() {
            let profile = grid_profile(e, s)?;
            for &m in &cfg.m_grid {
                let seed = derive_seed(cfg.seed, grid.len() as u64);
                grid.push(RecoveryPoint {
                    ensemble: e,
                    profile: profile.clone(),
                    m,
                    seed,
                });
            }
        }
    }
    let tasks: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|g| (0..cfg.trials).map(move |t| (g, t)))
        .collect();
    let results: Vec<(TrialRecord, TrialTiming)> = tasks
        .par_iter()
        .map(|&(g, trial)| {
            let pt = &grid[g];
            let start = Instant::now();
            let mut rec = TrialRecord::new(kind, g, &pt.profile, pt.m, trial, pt.seed);
            dispatch!(&pt.ensemble.ensemble, spec => {
                recovery_trial(spec, pt.profile.s, pt.m, pt.seed, trial, cfg.recovery_tol, &mut rec)
            });
            let timing = TrialTiming {
                grid_index: g,
                trial,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            };
            (rec, timing)
        })
        .collect();
    let (trials, timing): (Vec<_>, Vec<_>) = results.into_iter().unzip();

    let points = grid
        .iter()
        .enumerate()
        .map(|(g, pt)| {
            let recs = &trials[g * cfg.trials..(g + 1) * cfg.trials];
            let successes = recs.iter().filter(|r| r.recovered == Some(true)).count();
            let errors = recs
                .iter()
                .filter(|r| r.detail.starts_with("error"))
                .count();
            let (ci_low, ci_high) = clopper_pearson(successes, cfg.trials, CONFIDENCE);
            let p = &pt.profile;
            RatePoint {
                grid_index: g,
                ensemble: p.ensemble.clone(),
                n: p.n,
                s: p.s,
                m: pt.m,
                kappa: p.kappa,
                kappa_s: p.kappa_s,
                mu: p.mu,
                k: p.k,
                trials: cfg.trials,
                successes,
                errors,
                rate: successes as f64 / cfg.trials as f64,
                ci_low,
                ci_high,
                seed: pt.seed,
            }
        })
        .collect();
    Ok(PhaseTransitionResult {
        points,
        trials,
        timing,
    })
}

/// Recovery rate over the `(ensemble, s, m)` grid with planted signals.
pub fn run_phase_transition(cfg: &ExperimentConfig) -> Result<PhaseTransitionResult> {
    cfg.validate()?;
    let ensembles = cfg.resolve_ensembles()?;
    recovery_grid(cfg, ExperimentKind::PhaseTransition, &ensembles)
}

/// Location of the recovery threshold for one ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct M50Row {
    pub ensemble: String,
    pub n: usize,
    pub s: usize,
    pub kappa: f64,
    pub kappa_s: f64,
    pub mu: f64,
    pub k: f64,
    pub threshold: f64,
    /// Smallest grid `m` whose success rate reaches the threshold.
    pub m50: Option<usize>,
    pub resolved: bool,
}

#[derive(Debug, Clone)]
pub struct KappaScalingResult {
    pub grid: PhaseTransitionResult,
    /// Sorted by `(s, κ_s)`.
    pub m50: Vec<M50Row>,
}

impl KappaScalingResult {
    pub fn plot(&self) -> LinePlot {
        let mut series: Vec<Series> = Vec::new();
        for r in self.m50.iter().filter(|r| r.resolved) {
            let label = format!("s={}", r.s);
            let pt = (r.kappa_s, r.m50.unwrap_or(0) as f64);
            match series.iter_mut().find(|s| s.label == label) {
                Some(s) => s.points.push(pt),
                None => series.push(Series {
                    label,
                    points: vec![pt],
                }),
            }
        }
        LinePlot {
            title: "recovery threshold against kappa_s".into(),
            x_label: "kappa_s".into(),
            y_label: "m50".into(),
            series,
        }
    }
}

/// Recovery grid over a family of ensembles, reduced to the smallest `m`
/// reaching `cfg.threshold` for each ensemble and `s`.
pub fn run_kappa_scaling(cfg: &ExperimentConfig) -> Result<KappaScalingResult> {
    cfg.validate()?;
    let ensembles = cfg.resolve_ensembles()?;
    let grid = recovery_grid(cfg, ExperimentKind::KappaScaling, &ensembles)?;
    let mut m50: Vec<M50Row> = Vec::new();
    for p in &grid.points {
        let hit = p.rate >= cfg.threshold;
        match m50
            .iter_mut()
            .find(|r| r.ensemble == p.ensemble && r.s == p.s)
        {
            Some(r) => {
                if hit && r.m50.is_none_or(|m| p.m < m) {
                    r.m50 = Some(p.m);
                    r.resolved = true;
                }
            }
            None => m50.push(M50Row {
                ensemble: p.ensemble.clone(),
                n: p.n,
                s: p.s,
                kappa: p.kappa,
                kappa_s: p.kappa_s,
                mu: p.mu,
                k: p.k,
                threshold: cfg.threshold,
                m50: hit.then_some(p.m),
                resolved: hit,
            }),
        }
    }
    m50.sort_by(|a, b| {
        a.s.cmp(&b.s)
            .then(a.kappa_s.total_cmp(&b.kappa_s))
            .then_with(|| a.ensemble.cmp(&b.ensemble))
    });
    Ok(KappaScalingResult { grid, m50 })
}

/// Counts of (certificate verdict, recovery outcome).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contingency {
    pub pass_recovered: usize,
    pub pass_not_recovered: usize,
    pub fail_recovered: usize,
    pub fail_not_recovered: usize,
}

impl Contingency {
    fn add(&mut self, pass: bool, recovered: bool) {
        match (pass, recovered) {
            (true, true) => self.pass_recovered += 1,
            (true, false) => self.pass_not_recovered += 1,
            (false, true) => self.fail_recovered += 1,
            (false, false) => self.fail_not_recovered += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.pass_recovered
            + self.pass_not_recovered
            + self.fail_recovered
            + self.fail_not_recovered
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCheckRow {
    pub grid_index: usize,
    pub ensemble: String,
    pub n: usize,
    pub s: usize,
    pub mu: f64,
    pub kappa_s: f64,
    pub constant_scale: f64,
    pub strict_first_two: bool,
    pub trials: usize,
    pub pass_recovered: usize,
    pub pass_not_recovered: usize,
    pub fail_recovered: usize,
    pub fail_not_recovered: usize,
    /// Runs in which every stage accepted a batch.
    pub completed: usize,
    pub max_identity_deviation: f64,
    pub golf_failure_rate: f64,
    pub errors: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct CrossCheckResult {
    pub rows: Vec<CrossCheckRow>,
    pub trials: Vec<TrialRecord>,
    pub timing: Vec<TrialTiming>,
    pub total: Contingency,
    pub max_identity_deviation: f64,
}

fn failure_name(r: FailureReason) -> String {
    serde_json::to_value(r)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

fn crosscheck_trial<T: Scalar>(
    cfg: &ExperimentConfig,
    spec: &EnsembleSpec<T>,
    x_matrix: &nalgebra::DMatrix<T>,
    profile: &GridProfile,
    seed: u64,
    trial: usize,
    rec: &mut TrialRecord,
) -> Result<()> {
    let mut rng = stream_rng(seed, trial as u64);
    let (x, support) = plant_signal::<T, _>(profile.n, profile.s, &mut rng);
    let sgn = sign_vector(&x);
    let mut params = default_params(
        profile.n,
        profile.s,
        cfg.omega,
        profile.mu,
        profile.kappa_s,
        cfg.constant_scale,
    )?;
    params.strict_first_two = cfg.strict_first_two;
    let res = golf(spec, x_matrix, &support, &sgn, &params, &mut rng)?;
    rec.certificate_pass = Some(res.success);
    rec.detail = failure_name(res.failure_reason);
    rec.m = res.rows.len();
    if res.stages.len() == params.l {
        rec.statistic = Some(golfing_identity_check(&res, x_matrix, &support, &sgn));
    }
    if res.rows.is_empty() {
        rec.recovered = Some(false);
        return Ok(());
    }
    let a = res.sampling_matrix()?;
    let b = &a.a_matrix * &x;
    let sol = basis_pursuit(&a.a_matrix, &b, &BpOptions::default())?;
    rec.recovered = Some((&sol.x_star - &x).norm() / x.norm() <= cfg.recovery_tol);
    Ok(())
}

/// Golfing certificate against basis pursuit on the same measurements.
///
/// Each trial plants a signal, runs the golfing scheme, and solves basis
/// pursuit with the union of accepted batches as `A`. A passing certificate
/// with a failed recovery would contradict the duality argument.
pub fn run_certificate_crosscheck(cfg: &ExperimentConfig) -> Result<CrossCheckResult> {
    cfg.validate()?;
    let ensembles = cfg.resolve_ensembles()?;
    let kind = ExperimentKind::CertificateCrossCheck;
    let mut rows = Vec::new();
    let mut trials = Vec::new();
    let mut timing = Vec::new();
    let mut total = Contingency::default();
    let mut max_dev = 0.0f64;
    for e in &ensembles {
        for s in cfg.s_values() {
            let g = rows.len();
            let seed = derive_seed(cfg.seed, g as u64);
            let profile = grid_profile(e, s)?;
            let results: Vec<(TrialRecord, TrialTiming)> = dispatch!(&e.ensemble, spec => {
                let x_matrix = spec.covariance()?.x_matrix;
                (0..cfg.trials)
                    .into_par_iter()
                    .map(|trial| {
                        let start = Instant::now();
                        let mut rec = TrialRecord::new(kind, g, &profile, 0, trial, seed);
                        if let Err(err) = crosscheck_trial(cfg, spec, &x_matrix, &profile, seed, trial, &mut rec) {
                            rec.detail = format!("error: {err}");
                        }
                        (rec, TrialTiming { grid_index: g, trial, wall_ms: start.elapsed().as_secs_f64() * 1e3 })
                    })
                    .collect()
            });
            let mut table = Contingency::default();
            let mut completed = 0;
            let mut dev = 0.0f64;
            let mut errors = 0;
            for (rec, _) in &results {
                if rec.detail.starts_with("error") {
                    errors += 1;
                    continue;
                }
                table.add(
                    rec.certificate_pass == Some(true),
                    rec.recovered == Some(true),
                );
                if let Some(d) = rec.statistic {
                    completed += 1;
                    dev = dev.max(d);
                }
            }
            let golf_failures = results
                .iter()
                .filter(|(r, _)| r.certificate_pass == Some(false))
                .count();
            total.pass_recovered += table.pass_recovered;
            total.pass_not_recovered += table.pass_not_recovered;
            total.fail_recovered += table.fail_recovered;
            total.fail_not_recovered += table.fail_not_recovered;
            max_dev = max_dev.max(dev);
            rows.push(CrossCheckRow {
                grid_index: g,
                ensemble: profile.ensemble.clone(),
                n: profile.n,
                s,
                mu: profile.mu,
                kappa_s: profile.kappa_s,
                constant_scale: cfg.constant_scale,
                strict_first_two: cfg.strict_first_two,
                trials: cfg.trials,
                pass_recovered: table.pass_recovered,
                pass_not_recovered: table.pass_not_recovered,
                fail_recovered: table.fail_recovered,
                fail_not_recovered: table.fail_not_recovered,
                completed,
                max_identity_deviation: dev,
                golf_failure_rate: golf_failures as f64 / cfg.trials as f64,
                errors,
                seed,
            });
            for (rec, t) in results {
                trials.push(rec);
                timing.push(t);
            }
        }
    }
    Ok(CrossCheckResult {
        rows,
        trials,
        timing,
        total,
        max_identity_deviation: max_dev,
    })
}

/// One `(ensemble, statistic, s, m, τ)` point of the tail-bound grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaRow {
    pub grid_index: usize,
    pub statistic: Statistic,
    pub ensemble: String,
    pub n: usize,
    pub s: usize,
    pub m: usize,
    pub tau: f64,
    pub trials: usize,
    pub exceedances: usize,
    pub empirical_rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub bound: f64,
    pub mu: f64,
    pub kappa_s: f64,
    pub max_statistic: f64,
    pub dominated: bool,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct LemmaResult {
    pub rows: Vec<LemmaRow>,
    pub trials: Vec<TrialRecord>,
}

fn lemma_point<T: Scalar>(
    cfg: &ExperimentConfig,
    spec: &EnsembleSpec<T>,
    statistic: Statistic,
    s: usize,
    m: usize,
    tau: f64,
    seed: u64,
) -> Result<(TailEstimate, Vec<f64>)> {
    let mut rng = stream_rng(seed, GRID_STREAM);
    let mut support = sample(&mut rng, spec.dim(), s).into_vec();
    support.sort_unstable();
    let exp = TailExperiment {
        statistic,
        ensemble: spec.clone(),
        support,
        z: None,
        z_mode: cfg.z_mode,
        m,
        tau,
        trials: cfg.trials,
        seed,
    };
    let samples = sample_statistics(&exp)?;
    Ok((TailEstimate::from_samples(&exp, &samples), samples.values))
}

/// Empirical tail frequencies against the closed-form bounds. Points where
/// `τ` is outside a statistic's range, or `m < s` for the local isometry,
/// are skipped.
pub fn run_lemma_validation(cfg: &ExperimentConfig) -> Result<LemmaResult> {
    cfg.validate()?;
    let ensembles = cfg.resolve_ensembles()?;
    let statistics = if cfg.statistics.is_empty() {
        Statistic::ALL.to_vec()
    } else {
        cfg.statistics.clone()
    };
    let mut rows = Vec::new();
    let mut trials = Vec::new();
    for e in &ensembles {
        for s in cfg.s_values() {
            let profile = grid_profile(e, s)?;
            for &statistic in &statistics {
                for &m in &cfg.m_grid {
                    for &tau in &cfg.taus {
                        if !(tau >= 0.0 && tau <= statistic.tau_max()) {
                            continue;
                        }
                        if statistic == Statistic::LocalIsometry && m < s {
                            continue;
                        }
                        let g = rows.len();
                        let seed = derive_seed(cfg.seed, g as u64);
                        let (est, values) = dispatch!(&e.ensemble, spec => lemma_point(cfg, spec, statistic, s, m, tau, seed))?;
                        for (trial, v) in values.into_iter().enumerate() {
                            let mut rec = TrialRecord::new(
                                ExperimentKind::LemmaValidation,
                                g,
                                &profile,
                                m,
                                trial,
                                seed,
                            );
                            rec.statistic = Some(v);
                            trials.push(rec);
                        }
                        rows.push(LemmaRow {
                            grid_index: g,
                            statistic,
                            ensemble: e.tag.clone(),
                            n: est.n,
                            s,
                            m,
                            tau,
                            trials: est.trials,
                            exceedances: est.exceedances,
                            empirical_rate: est.empirical_rate,
                            ci_low: est.ci_low,
                            ci_high: est.ci_high,
                            bound: est.bound,
                            mu: est.mu,
                            kappa_s: est.kappa_s,
                            max_statistic: est.max_statistic,
                            dominated: est.dominated(),
                            seed,
                        });
                    }
                }
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Config(
            "no admissible (statistic, m, tau) combination in the grid".into(),
        ));
    }
    Ok(LemmaResult { rows, trials })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub ensemble: String,
    pub n: usize,
    pub s: usize,
    pub formula: RateFormula,
    pub c: f64,
    pub mu: f64,
    pub kappa: f64,
    pub kappa_s: f64,
    pub k: f64,
    pub omega: f64,
    pub required_m: u64,
}

/// Sufficient measurement counts for every ensemble, `s` and formula.
pub fn run_rate_formula(cfg: &ExperimentConfig) -> Result<Vec<RateRow>> {
    cfg.validate()?;
    let formulas = if cfg.formulas.is_empty() {
        RateFormula::ALL.to_vec()
    } else {
        cfg.formulas.clone()
    };
    let mut rows = Vec::new();
    for e in &cfg.resolve_ensembles()? {
        for s in cfg.s_values() {
            let p = grid_profile(e, s)?;
            let inputs = RateInputs {
                c: cfg.rate_constant,
                mu: p.mu,
                kappa: p.kappa,
                kappa_s: p.kappa_s,
                k: p.k,
                omega: cfg.omega,
                s,
                n: p.n,
            };
            for &formula in &formulas {
                rows.push(RateRow {
                    ensemble: p.ensemble.clone(),
                    n: p.n,
                    s,
                    formula,
                    c: cfg.rate_constant,
                    mu: p.mu,
                    kappa: p.kappa,
                    kappa_s: p.kappa_s,
                    k: p.k,
                    omega: cfg.omega,
                    required_m: required_m(formula, &inputs)?,
                });
            }
        }
    }
    Ok(rows)
}
