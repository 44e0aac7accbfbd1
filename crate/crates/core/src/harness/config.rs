use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::concentration::{Statistic, ZMode};
use crate::ensemble::{
    kappa_family, Anisotropy, AnyEnsemble, BuiltinEnsemble, EnsembleDoc, DEFAULT_SPARSE_BUDGET,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    PhaseTransition,
    KappaScaling,
    CertificateCrossCheck,
    LemmaValidation,
    RateFormula,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::PhaseTransition => "phase_transition",
            ExperimentKind::KappaScaling => "kappa_scaling",
            ExperimentKind::CertificateCrossCheck => "certificate_cross_check",
            ExperimentKind::LemmaValidation => "lemma_validation",
            ExperimentKind::RateFormula => "rate_formula",
        }
    }
}

/// Where an ensemble comes from: a file, an inline document, or a built-in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EnsembleRef {
    Path {
        path: PathBuf,
    },
    Inline {
        inline: EnsembleDoc,
        tag: Option<String>,
    },
    Builtin(BuiltinEnsemble),
}

/// A resolved ensemble with its output label.
#[derive(Debug, Clone)]
pub struct NamedEnsemble {
    pub tag: String,
    pub ensemble: AnyEnsemble,
}

impl EnsembleRef {
    pub fn resolve(&self, base_dir: Option<&Path>) -> Result<NamedEnsemble> {
        match self {
            EnsembleRef::Path { path } => {
                let full = match base_dir {
                    Some(dir) if path.is_relative() => dir.join(path),
                    _ => path.clone(),
                };
                let ensemble = AnyEnsemble::load(&full).map_err(|e| {
                    Error::Config(format!("cannot load ensemble {}: {e}", full.display()))
                })?;
                let tag = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                Ok(NamedEnsemble { tag, ensemble })
            }
            EnsembleRef::Inline { inline, tag } => Ok(NamedEnsemble {
                tag: tag.clone().unwrap_or_else(|| "inline".into()),
                ensemble: AnyEnsemble::from_doc(inline)?,
            }),
            EnsembleRef::Builtin(b) => Ok(NamedEnsemble {
                tag: b.tag(),
                ensemble: b.build()?,
            }),
        }
    }
}

/// A list that may also be written as a single value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

impl<T> Default for OneOrMany<T> {
    fn default() -> Self {
        OneOrMany::Many(Vec::new())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateFormula {
    /// `C κ μ ω² s ln n`
    Kappa,
    /// `C μ κ_s ω² s ln n`
    KappaS,
    /// `C κ μ ω² s² ln n`
    Quadratic,
    /// `C (κ μ s + K) ω² ln n`
    Commutator,
}

impl RateFormula {
    pub const ALL: [RateFormula; 4] = [
        RateFormula::Kappa,
        RateFormula::KappaS,
        RateFormula::Quadratic,
        RateFormula::Commutator,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RateFormula::Kappa => "kappa",
            RateFormula::KappaS => "kappa_s",
            RateFormula::Quadratic => "quadratic",
            RateFormula::Commutator => "commutator",
        }
    }
}

/// Upper value of the recovery constant.
pub const DEFAULT_RATE_CONSTANT: f64 = 18044.0;

/// Inputs of [`required_m`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateInputs {
    pub c: f64,
    pub mu: f64,
    pub kappa: f64,
    pub kappa_s: f64,
    pub k: f64,
    pub omega: f64,
    pub s: usize,
    pub n: usize,
}

/// Sufficient number of measurements under `formula`, rounded up.
pub fn required_m(formula: RateFormula, p: &RateInputs) -> Result<u64> {
    let positive = [p.c, p.mu, p.kappa, p.kappa_s]
        .iter()
        .all(|&v| v > 0.0 && v.is_finite());
    if !positive || !(p.k >= 0.0) || !(p.omega >= 1.0) || p.s == 0 || p.n < 2 {
        return Err(Error::InvalidArgs(
            "need positive C, mu, kappa, kappa_s; K >= 0; omega >= 1; s >= 1; n >= 2".into(),
        ));
    }
    let (s, ln_n, w2) = (p.s as f64, (p.n as f64).ln(), p.omega * p.omega);
    let value = match formula {
        RateFormula::Kappa => p.c * p.kappa * p.mu * w2 * s * ln_n,
        RateFormula::KappaS => p.c * p.mu * p.kappa_s * w2 * s * ln_n,
        RateFormula::Quadratic => p.c * p.kappa * p.mu * w2 * s * s * ln_n,
        RateFormula::Commutator => p.c * (p.kappa * p.mu * s + p.k) * w2 * ln_n,
    };
    Ok(value.ceil() as u64)
}

/// Recovery tolerance for the relative l2 error of the solver output.
pub const DEFAULT_RECOVERY_TOL: f64 = 1e-5;

/// The κ-scaling family: Hadamard rows with one character tilted so that
/// `κ_s = κ` for every `s ≥ 2`, each member normalized at the experiment's `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KappaFamily {
    pub n: usize,
    pub kappas: Vec<f64>,
    #[serde(default = "default_character")]
    pub character: usize,
    #[serde(default)]
    pub anisotropy: Anisotropy,
}

fn default_character() -> usize {
    1
}

/// Experiment description, read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleRef>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ensembles: Vec<EnsembleRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_family: Option<KappaFamily>,
    /// Optional consistency check against the ensemble dimension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    pub s: OneOrMany<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub m_grid: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_omega")]
    pub omega: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_constant_scale")]
    pub constant_scale: f64,
    #[serde(default = "default_strict")]
    pub strict_first_two: bool,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Worker threads; 0 uses all cores.
    #[serde(default)]
    pub workers: usize,
    /// Success rate that locates the phase transition.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_recovery_tol")]
    pub recovery_tol: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub statistics: Vec<Statistic>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub taus: Vec<f64>,
    #[serde(default = "default_z_mode")]
    pub z_mode: ZMode,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub formulas: Vec<RateFormula>,
    #[serde(default = "default_rate_constant")]
    pub rate_constant: f64,
    /// Write `.dat` and `.svg` plots next to the CSV.
    #[serde(default = "default_plots")]
    pub plots: bool,
    /// Directory used to resolve relative ensemble paths; not part of the schema.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn default_trials() -> usize {
    100
}
fn default_omega() -> f64 {
    1.0
}
fn default_constant_scale() -> f64 {
    1.0
}
fn default_strict() -> bool {
    true
}
fn default_output() -> PathBuf {
    PathBuf::from("results/experiment.csv")
}
fn default_threshold() -> f64 {
    0.5
}
fn default_recovery_tol() -> f64 {
    DEFAULT_RECOVERY_TOL
}
fn default_z_mode() -> ZMode {
    ZMode::Random
}
fn default_rate_constant() -> f64 {
    DEFAULT_RATE_CONSTANT
}
fn default_plots() -> bool {
    true
}

impl ExperimentConfig {
    /// A config with defaults for everything but the experiment, ensemble and `s`.
    pub fn new(experiment: ExperimentKind, ensemble: EnsembleRef, s: Vec<usize>) -> Self {
        Self {
            experiment,
            ensemble: Some(ensemble),
            ensembles: Vec::new(),
            kappa_family: None,
            n: None,
            s: OneOrMany::Many(s),
            m_grid: Vec::new(),
            trials: default_trials(),
            omega: default_omega(),
            seed: 0,
            constant_scale: default_constant_scale(),
            strict_first_two: default_strict(),
            output: default_output(),
            workers: 0,
            threshold: default_threshold(),
            recovery_tol: default_recovery_tol(),
            statistics: Vec::new(),
            taus: Vec::new(),
            z_mode: default_z_mode(),
            formulas: Vec::new(),
            rate_constant: default_rate_constant(),
            plots: default_plots(),
            base_dir: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    /// Compact JSON for CSV headers.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("configs always serialize")
    }

    pub fn s_values(&self) -> Vec<usize> {
        self.s.to_vec()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let s = self.s_values();
        if s.is_empty() || s.contains(&0) {
            return bad("s must be a nonempty list of positive integers".into());
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if !(self.omega >= 1.0) {
            return bad(format!("omega must be at least 1, got {}", self.omega));
        }
        if !(self.constant_scale > 0.0) {
            return bad("constant_scale must be positive".into());
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return bad("threshold must lie in (0, 1]".into());
        }
        let sources = usize::from(self.ensemble.is_some())
            + usize::from(!self.ensembles.is_empty())
            + usize::from(self.kappa_family.is_some());
        if sources != 1 {
            return bad(
                "give exactly one of \"ensemble\", \"ensembles\" or \"kappa_family\"".into(),
            );
        }
        let needs_m = matches!(
            self.experiment,
            ExperimentKind::PhaseTransition
                | ExperimentKind::KappaScaling
                | ExperimentKind::LemmaValidation
        );
        if needs_m && (self.m_grid.is_empty() || self.m_grid.contains(&0)) {
            return bad("m_grid must be a nonempty list of positive integers".into());
        }
        if self.experiment == ExperimentKind::LemmaValidation && self.taus.is_empty() {
            return bad("lemma validation needs a nonempty \"taus\" list".into());
        }
        if let ZMode::WorstOf(0) = self.z_mode {
            return bad("worst_of needs at least one candidate".into());
        }
        if let Some(fam) = &self.kappa_family {
            if fam.kappas.is_empty() {
                return bad("kappa_family.kappas must be nonempty".into());
            }
        }
        Ok(())
    }

    /// Resolves every ensemble; family members are normalized at the first `s`.
    pub fn resolve_ensembles(&self) -> Result<Vec<NamedEnsemble>> {
        let list = if let Some(fam) = &self.kappa_family {
            let s0 = self.s_values()[0];
            kappa_family::<f64>(
                fam.n,
                s0,
                &fam.kappas,
                fam.character,
                fam.anisotropy,
                DEFAULT_SPARSE_BUDGET,
            )?
            .into_iter()
            .zip(&fam.kappas)
            .map(|(spec, k)| NamedEnsemble {
                tag: format!("walsh_pair{}_k{k}_c{}", fam.n, fam.character),
                ensemble: AnyEnsemble::Real(spec),
            })
            .collect()
        } else {
            let refs: Vec<&EnsembleRef> = self.ensemble.iter().chain(&self.ensembles).collect();
            refs.into_iter()
                .map(|r| r.resolve(self.base_dir.as_deref()))
                .collect::<Result<Vec<_>>>()?
        };
        for e in &list {
            let n = e.ensemble.dim();
            if let Some(expected) = self.n {
                if expected != n {
                    return Err(Error::Config(format!(
                        "ensemble {} has n = {n}, config says {expected}",
                        e.tag
                    )));
                }
            }
            if let Some(&s) = self.s_values().iter().find(|&&s| s > n) {
                return Err(Error::Config(format!(
                    "s = {s} exceeds n = {n} for ensemble {}",
                    e.tag
                )));
            }
        }
        Ok(list)
    }

    /// Paths of the output files derived from [`output`](Self::output).
    pub fn output_path(&self, suffix: &str, extension: &str) -> PathBuf {
        let stem = self
            .output
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "experiment".into());
        self.output
            .with_file_name(format!("{stem}{suffix}.{extension}"))
    }
}
