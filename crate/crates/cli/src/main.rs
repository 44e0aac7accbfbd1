use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use cslab_core::ensemble::{BuiltinEnsemble, ProfileOptions};
use cslab_core::harness::{run, ExperimentConfig, ExperimentKind, ExperimentReport, RunOutput};
use cslab_core::{
    basis_pursuit, AnyEnsemble, BpOptions, DMatrix, DVector, EnsembleSpec, Exactness, Scalar,
};

#[derive(Parser)]
#[command(
    name = "cslab",
    version,
    about = "Sparse recovery experiments with anisotropic measurement ensembles"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args, Default)]
struct Overrides {
    /// Master seed, replacing the config's.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Main output file; companion files are written next to it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Multiplier on the golfing batch size.
    #[arg(long, global = true)]
    constant_scale: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run { config: PathBuf },
    /// Print covariance, incoherence and sparse condition numbers of an ensemble.
    Profile {
        ensemble: PathBuf,
        #[arg(long)]
        s: usize,
        /// Support enumeration budget for the sparse eigenvalues.
        #[arg(long, default_value_t = cslab_core::DEFAULT_SPARSE_BUDGET)]
        budget: u64,
    },
    /// Solve min ‖x‖₁ subject to Ax = b for CSV inputs.
    Solve {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        rhs: PathBuf,
    },
    /// Run a config as a lemma validation and fail if any bound is exceeded.
    ValidateLemmas { config: PathBuf },
}

/// Exit status for a failed command: 2 for bad input, 3 for numerical failure.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<cslab_core::Error>() {
        Some(e) if !e.is_config_error() => 3,
        _ => match err.downcast_ref::<NumericalFailure>() {
            Some(_) => 3,
            None => 2,
        },
    }
}

#[derive(Debug)]
struct NumericalFailure(String);

impl std::error::Error for NumericalFailure {}

impl std::fmt::Display for NumericalFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run { config } => {
            let cfg = load_config(&config, &cli.overrides, None)?;
            let out = run(&cfg)?;
            report(&out);
            Ok(())
        }
        Command::ValidateLemmas { config } => {
            let cfg = load_config(
                &config,
                &cli.overrides,
                Some(ExperimentKind::LemmaValidation),
            )?;
            let out = run(&cfg)?;
            report(&out);
            if let ExperimentReport::LemmaValidation(r) = &out.report {
                let bad = r.rows.iter().filter(|row| !row.dominated).count();
                if bad > 0 {
                    return Err(NumericalFailure(format!(
                        "{bad} of {} points exceed their bound",
                        r.rows.len()
                    ))
                    .into());
                }
            }
            Ok(())
        }
        Command::Profile {
            ensemble,
            s,
            budget,
        } => {
            let e = load_ensemble(&ensemble)?;
            let opts = ProfileOptions {
                sparse_budget: budget,
                ..ProfileOptions::default()
            };
            let text = match &e {
                AnyEnsemble::Real(spec) => profile_text(spec, s, opts)?,
                AnyEnsemble::Complex(spec) => profile_text(spec, s, opts)?,
            };
            print!("{text}");
            Ok(())
        }
        Command::Solve { matrix, rhs } => solve(&matrix, &rhs, cli.overrides.out.as_deref()),
    }
}

fn load_config(
    path: &Path,
    o: &Overrides,
    kind: Option<ExperimentKind>,
) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(kind) = kind {
        cfg.experiment = kind;
    }
    if let Some(seed) = o.seed {
        cfg.seed = seed;
    }
    if let Some(w) = o.workers {
        cfg.workers = w;
    }
    if let Some(out) = &o.out {
        cfg.output = out.clone();
    }
    if let Some(c) = o.constant_scale {
        cfg.constant_scale = c;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Reads either an ensemble document or a built-in description such as
/// `{"builtin": "hadamard", "n": 16}`.
fn load_ensemble(path: &Path) -> anyhow::Result<AnyEnsemble> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    if let Ok(b) = serde_json::from_str::<BuiltinEnsemble>(&text) {
        return Ok(b.build()?);
    }
    Ok(AnyEnsemble::from_json(&text)?)
}

fn profile_text<T: Scalar>(
    spec: &EnsembleSpec<T>,
    s: usize,
    opts: ProfileOptions,
) -> anyhow::Result<String> {
    let p = spec.profile(s, opts)?;
    let k_note = match p.exactness {
        Exactness::Analytic => "exact".to_string(),
        Exactness::MonteCarloEstimate { trials, seed } => {
            format!("estimate, {trials} samples, seed {seed}")
        }
    };
    Ok(format!(
        "field: {:?}\nn: {}\ngamma_eigen_range: [{:.12e}, {:.12e}]\nmu: {:.12}\nkappa: {:.12}\nkappa_s: {:.12} (s = {s})\nK: {:.12e} ({k_note})\nnu: {:.12}\n",
        spec.field(),
        spec.dim(),
        p.gamma_eigen_range.0,
        p.gamma_eigen_range.1,
        p.mu,
        p.kappa,
        p.kappa_s,
        p.commutator_k,
        p.nu,
    ))
}

fn read_numbers(path: &Path) -> anyhow::Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .with_context(|| format!("{}:{}: not a number: {f:?}", path.display(), i + 1))
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn solve(matrix: &Path, rhs: &Path, out: Option<&Path>) -> anyhow::Result<()> {
    let rows = read_numbers(matrix)?;
    let m = rows.len();
    let n = rows.first().map_or(0, Vec::len);
    if m == 0 || n == 0 || rows.iter().any(|r| r.len() != n) {
        bail!("{} must be a nonempty rectangular table", matrix.display());
    }
    let a = DMatrix::from_fn(m, n, |i, j| rows[i][j]);
    // b may be given as one column or one row.
    let b: Vec<f64> = read_numbers(rhs)?.into_iter().flatten().collect();
    if b.len() != m {
        bail!(
            "{} has {} entries but the matrix has {m} rows",
            rhs.display(),
            b.len()
        );
    }
    let sol = basis_pursuit(&a, &DVector::from_vec(b), &BpOptions::default())?;
    let mut text = String::new();
    for v in sol.x_star.iter() {
        text.push_str(&format!("{v:.17e}\n"));
    }
    match out {
        Some(p) => {
            std::fs::write(p, &text).with_context(|| format!("cannot write {}", p.display()))?
        }
        None => print!("{text}"),
    }
    eprintln!(
        "objective {:.12e}, lower bound {:.12e}, residual {:.3e}, {} iterations",
        sol.objective, sol.lower_bound, sol.primal_residual, sol.iterations
    );
    if !sol.converged {
        return Err(NumericalFailure("solver did not reach its tolerances".into()).into());
    }
    Ok(())
}

fn report(out: &RunOutput) {
    match &out.report {
        ExperimentReport::PhaseTransition(r) => {
            for p in &r.points {
                println!(
                    "{} s={} m={}: {}/{} recovered",
                    p.ensemble, p.s, p.m, p.successes, p.trials
                );
            }
        }
        ExperimentReport::KappaScaling(r) => {
            for row in &r.m50 {
                let m50 = row.m50.map_or("unresolved".to_string(), |m| m.to_string());
                println!(
                    "{} kappa_s={:.4} mu={:.4}: m50 = {m50}",
                    row.ensemble, row.kappa_s, row.mu
                );
            }
        }
        ExperimentReport::CrossCheck(r) => {
            let t = &r.total;
            println!(
                "certificate pass: {} recovered, {} not recovered; fail: {} recovered, {} not recovered",
                t.pass_recovered, t.pass_not_recovered, t.fail_recovered, t.fail_not_recovered
            );
            println!(
                "max golfing identity deviation {:.3e}",
                r.max_identity_deviation
            );
        }
        ExperimentReport::LemmaValidation(r) => {
            let ok = r.rows.iter().filter(|row| row.dominated).count();
            println!("{ok}/{} points dominated by their bound", r.rows.len());
        }
        ExperimentReport::RateFormula(rows) => {
            for row in rows {
                println!(
                    "{} s={} {}: m >= {}",
                    row.ensemble,
                    row.s,
                    row.formula.name(),
                    row.required_m
                );
            }
        }
    }
    for f in &out.files {
        println!("wrote {}", f.display());
    }
}
