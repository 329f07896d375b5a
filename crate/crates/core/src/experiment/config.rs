//! Experiment configuration (TOML).
//!
//! ```toml
//! seed = 7
//! methods = ["pod", "opinf", "copinf"]
//!
//! [system]
//! kind = "chain"            # or "files" with mass/damping/stiffness/input paths
//! n = 200
//! mass = 1.0
//! stiffness = 1.0e4
//! alpha_r = 0.01
//! beta_r = 1.0e-4
//! input_nodes = [199]
//!
//! [integrator]
//! dt = 1.0e-3               # gamma/beta/alpha optional
//!
//! [signal]
//! kind = "sine"             # "sine" | "constant" | "chirp"
//! amplitude = 1.0
//! frequency = 10.0
//!
//! [horizon]
//! train = 0.5
//! test = 1.0
//!
//! [basis]
//! tol = 1.0e-2              # or rank = 4; rule = "ratio" | "energy"
//! ```
//!
//! Every section except `system`, `integrator`, `signal` and `horizon` has defaults.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::copinf::{ConstrainedOptions, DEFAULT_OMEGA};
use crate::error::{Error, Result};
use crate::newmark::IntegratorConfig;
use crate::opinf::default_lambda_grid;
use crate::pod::RankSelector;
use crate::signal::Waveform;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pod,
    Opinf,
    Copinf,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Pod => "pod",
            Method::Opinf => "opinf",
            Method::Copinf => "copinf",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pod" => Ok(Method::Pod),
            "opinf" => Ok(Method::Opinf),
            "copinf" => Ok(Method::Copinf),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SystemSource {
    Chain {
        n: usize,
        #[serde(default = "one")]
        mass: f64,
        #[serde(default = "one")]
        stiffness: f64,
        /// Per-node masses; overrides `mass` when given.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        masses: Option<Vec<f64>>,
        /// Per-spring stiffnesses (`n + 1` values); overrides `stiffness` when given.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stiffnesses: Option<Vec<f64>>,
        #[serde(default)]
        alpha_r: f64,
        #[serde(default)]
        beta_r: f64,
        input_nodes: Vec<usize>,
    },
    Files {
        mass: PathBuf,
        damping: PathBuf,
        stiffness: PathBuf,
        input: PathBuf,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub dt: f64,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

impl IntegratorSection {
    pub fn config(&self, t_end: f64) -> Result<IntegratorConfig> {
        let base = IntegratorConfig::hht(self.dt, t_end, self.alpha)?;
        base.with_newmark_parameters(self.gamma.unwrap_or(base.gamma), self.beta.unwrap_or(base.beta))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonSection {
    pub train: f64,
    pub test: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    /// Initial displacements drawn uniformly from `[-a, a]` with the run seed.
    #[serde(default)]
    pub displacement_amplitude: f64,
    #[serde(default)]
    pub velocity_amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToleranceRule {
    /// `σ_{r+1} / σ_1 <= tol`.
    Ratio,
    /// Discarded energy fraction `<= tol`.
    Energy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default = "default_rule")]
    pub rule: ToleranceRule,
}

fn default_rule() -> ToleranceRule {
    ToleranceRule::Ratio
}

impl Default for BasisSection {
    fn default() -> Self {
        Self {
            rank: None,
            tol: Some(1e-2),
            rule: ToleranceRule::Ratio,
        }
    }
}

impl BasisSection {
    pub fn selector(&self) -> Result<RankSelector> {
        match (self.rank, self.tol) {
            (Some(r), None) => Ok(RankSelector::Rank(r)),
            (None, Some(t)) => Ok(match self.rule {
                ToleranceRule::Ratio => RankSelector::Tolerance(t),
                ToleranceRule::Energy => RankSelector::Energy(t),
            }),
            (None, None) => Ok(RankSelector::Tolerance(1e-2)),
            (Some(_), Some(_)) => Err(Error::Config("basis: give either `rank` or `tol`, not both".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeSource {
    Integrator,
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpinfSection {
    #[serde(default = "default_lambda_grid")]
    pub lambdas: Vec<f64>,
    #[serde(default = "default_derivatives")]
    pub derivatives: DerivativeSource,
}

fn default_derivatives() -> DerivativeSource {
    DerivativeSource::Integrator
}

impl Default for OpinfSection {
    fn default() -> Self {
        Self {
            lambdas: default_lambda_grid(),
            derivatives: DerivativeSource::Integrator,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CopinfSection {
    #[serde(default = "default_omega")]
    pub omega: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol_abs: f64,
    #[serde(default = "default_tol")]
    pub tol_rel: f64,
    #[serde(default = "one")]
    pub penalty: f64,
    /// Dump the ADMM convergence trace as CSV.
    #[serde(default)]
    pub trace: bool,
}

fn default_omega() -> f64 {
    DEFAULT_OMEGA
}
fn default_max_iter() -> usize {
    ConstrainedOptions::default().max_iter
}
fn default_tol() -> f64 {
    1e-9
}

impl Default for CopinfSection {
    fn default() -> Self {
        Self {
            omega: DEFAULT_OMEGA,
            max_iter: default_max_iter(),
            tol_abs: 1e-9,
            tol_rel: 1e-9,
            penalty: 1.0,
            trace: false,
        }
    }
}

impl CopinfSection {
    pub fn options(&self) -> ConstrainedOptions {
        ConstrainedOptions {
            max_iter: self.max_iter,
            tol_abs: self.tol_abs,
            tol_rel: self.tol_rel,
            penalty: self.penalty,
            record_trace: self.trace,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Write wall-clock seconds per stage to `timings.csv` (not reproducible byte-for-byte).
    #[serde(default)]
    pub record_timings: bool,
    pub system: SystemSource,
    pub integrator: IntegratorSection,
    pub signal: Waveform,
    pub horizon: HorizonSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub basis: BasisSection,
    #[serde(default)]
    pub opinf: OpinfSection,
    #[serde(default)]
    pub copinf: CopinfSection,
}

fn default_methods() -> Vec<Method> {
    vec![Method::Pod, Method::Opinf, Method::Copinf]
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub methods: Option<Vec<Method>>,
    pub rank: Option<usize>,
    pub tol: Option<f64>,
    pub lambda: Option<f64>,
    pub omega: Option<f64>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.normalize();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative matrix paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let SystemSource::Files {
            mass,
            damping,
            stiffness,
            input,
        } = &mut cfg.system
        {
            let base = path.parent().unwrap_or_else(|| Path::new("."));
            for p in [mass, damping, stiffness, input] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    fn normalize(&mut self) {
        self.methods.sort();
        self.methods.dedup();
        let base = IntegratorConfig::hht(1.0, 1.0, self.integrator.alpha).ok();
        if let Some(base) = base {
            self.integrator.gamma.get_or_insert(base.gamma);
            self.integrator.beta.get_or_insert(base.beta);
        }
        if self.basis.rank.is_none() && self.basis.tol.is_none() {
            self.basis.tol = Some(1e-2);
        }
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(m) = &o.methods {
            self.methods = m.clone();
        }
        if let Some(r) = o.rank {
            self.basis.rank = Some(r);
            self.basis.tol = None;
        }
        if let Some(t) = o.tol {
            self.basis.tol = Some(t);
            self.basis.rank = None;
        }
        if let Some(l) = o.lambda {
            self.opinf.lambdas = vec![l];
        }
        if let Some(w) = o.omega {
            self.copinf.omega = w;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(dir) = &o.output_dir {
            self.output_dir = Some(dir.clone());
        }
        self.normalize();
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        if !(self.integrator.dt > 0.0) {
            return Err(Error::Config(format!("integrator.dt must be positive, got {}", self.integrator.dt)));
        }
        if !(self.horizon.train >= self.integrator.dt) {
            return Err(Error::Config("horizon.train must cover at least one step".into()));
        }
        if !(self.horizon.test >= self.horizon.train) {
            return Err(Error::Config(format!(
                "horizon.test ({}) must not be shorter than horizon.train ({})",
                self.horizon.test, self.horizon.train
            )));
        }
        if self.opinf.lambdas.is_empty() || self.opinf.lambdas.iter().any(|l| !(*l >= 0.0)) {
            return Err(Error::Config("opinf.lambdas must be a nonempty list of nonnegative values".into()));
        }
        if !(self.copinf.omega > 0.0) {
            return Err(Error::Config("copinf.omega must be positive".into()));
        }
        if self.initial.displacement_amplitude < 0.0 || self.initial.velocity_amplitude < 0.0 {
            return Err(Error::Config("initial amplitudes must be nonnegative".into()));
        }
        self.signal.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.basis.selector().map(|_| ())?;
        self.integrator.config(self.horizon.test).map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// The fully resolved configuration as TOML.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[system]
kind = "chain"
n = 4
input_nodes = [3]

[integrator]
dt = 0.01

[signal]
kind = "sine"
amplitude = 1.0
frequency = 0.5

[horizon]
train = 1.0
test = 2.0
"#;

    #[test]
    fn defaults_are_filled_in() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.methods, vec![Method::Pod, Method::Opinf, Method::Copinf]);
        assert_eq!(cfg.integrator.gamma, Some(0.5));
        assert_eq!(cfg.integrator.beta, Some(0.25));
        assert_eq!(cfg.basis.tol, Some(1e-2));
        assert_eq!(cfg.copinf.omega, 1e-8);
        let text = cfg.to_toml().unwrap();
        for key in ["gamma", "beta", "lambdas", "omega", "max_iter", "tol", "seed", "derivatives"] {
            assert!(text.contains(key), "manifest lacks `{key}`:\n{text}");
        }
        let again = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn overrides_win() {
        let mut cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        cfg.apply(&Overrides {
            methods: Some(vec![Method::Pod]),
            rank: Some(2),
            lambda: Some(1e-3),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(cfg.methods, vec![Method::Pod]);
        assert_eq!(cfg.basis.selector().unwrap(), RankSelector::Rank(2));
        assert_eq!(cfg.opinf.lambdas, vec![1e-3]);
    }

    #[test]
    fn bad_configs_rejected() {
        let swapped = MINIMAL.replace("test = 2.0", "test = 0.5");
        assert!(matches!(ExperimentConfig::from_toml_str(&swapped), Err(Error::Config(_))));
        let unknown = format!("{MINIMAL}\nbogus = 1\n");
        assert!(ExperimentConfig::from_toml_str(&unknown).is_err());
        let no_methods = format!("methods = []\n{MINIMAL}");
        assert!(ExperimentConfig::from_toml_str(&no_methods).is_err());
    }
}
