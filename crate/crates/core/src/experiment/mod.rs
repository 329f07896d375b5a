//! End-to-end pipeline: simulate → basis → infer → infer-constrained → evaluate.
//!
//! Each stage reads what the previous stages left in the output directory and
//! writes its own artifacts there, so stages can be run one by one or chained
//! with [`run`]; both produce the same files.
//!
//! ```text
//! manifest.toml
//! system/{M,E,K,B}.mtx
//! snapshots/{train,test}_{X,Xd,Xdd,U,F}.csv
//! basis/{V.mtx, sigma.csv, singular_values.csv}
//! pod/{M,E,K,B}.mtx
//! opinf/{E,K,B}.mtx, opinf/lambda_table.csv
//! copinf/{M,E,K}.mtx, copinf/report.csv, copinf/trace.csv
//! <method>/trajectory_X.csv, <method>/error.csv
//! summary.csv
//! ```

mod config;

pub use config::{
    BasisSection, CopinfSection, DerivativeSource, ExperimentConfig, HorizonSection, InitialSection,
    IntegratorSection, Method, OpinfSection, Overrides, SystemSource, ToleranceRule,
};

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::copinf::{infer_constrained, write_trace_csv, StructuredRom};
use crate::error::{Error, Result};
use crate::eval::{is_stable, relative_error, DEFAULT_STABILITY_TOL};
use crate::exec::Execution;
use crate::linalg::{Matrix, Vector};
use crate::model::{build_mass_spring_chain, load_system, save_system, SecondOrderModel, SecondOrderSystem, SystemFiles};
use crate::mtx::{read_matrix, write_matrix, Symmetry};
use crate::newmark::{simulate, Excitation};
use crate::opinf::{infer, select_lambda, write_lambda_table_csv, MassNormalizedRom, Validation};
use crate::pod::{compute_basis, intrusive_reduce, PodBasis};
use crate::snapshots::{
    assemble_force_data, assemble_opinf_data, load_csv, project, save_csv, TrajectoryData, TrajectoryFiles,
};

/// A failure tagged with the pipeline stage it happened in.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub source: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {}: {}", self.stage, self.source)
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

impl StageError {
    pub fn exit_code(&self) -> i32 {
        self.source.exit_code()
    }
}

pub type StageResult<T> = std::result::Result<T, StageError>;

trait InStage<T> {
    fn stage(self, stage: &'static str) -> StageResult<T>;
}

impl<T> InStage<T> for Result<T> {
    fn stage(self, stage: &'static str) -> StageResult<T> {
        self.map_err(|source| StageError { stage, source })
    }
}

/// One line of `summary.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    pub rank: usize,
    /// Regularization picked for `opinf`; `None` otherwise.
    pub lambda: Option<f64>,
    pub max_eps: f64,
    pub max_eps_train: f64,
    pub max_eps_test: f64,
    pub stable: bool,
}

/// Paths inside the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.toml")
    }
    pub fn system(&self) -> SystemFiles {
        SystemFiles::in_dir(&self.root.join("system"))
    }
    pub fn snapshots(&self, stem: &str) -> TrajectoryFiles {
        TrajectoryFiles::existing_in(&self.root.join("snapshots"), stem)
    }
    pub fn dir(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
    pub fn summary(&self) -> PathBuf {
        self.root.join("summary.csv")
    }
}

fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `manifest.toml`: tool version plus the fully resolved configuration.
pub fn write_manifest(cfg: &ExperimentConfig, layout: &Layout) -> Result<()> {
    ensure_dir(&layout.root)?;
    let mut cfg = cfg.clone();
    // The output location is where the manifest lives; recording it would make
    // otherwise identical runs differ.
    cfg.output_dir = None;
    let body = cfg.to_toml()?;
    let text = format!(
        "# {} {}\ntool = \"{}\"\nversion = \"{}\"\n\n{}",
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION"),
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION"),
        body
    );
    write_text(&layout.manifest(), &text)
}

fn build_system(cfg: &ExperimentConfig) -> Result<SecondOrderSystem> {
    match &cfg.system {
        SystemSource::Chain {
            n,
            mass,
            stiffness,
            masses,
            stiffnesses,
            alpha_r,
            beta_r,
            input_nodes,
        } => {
            let masses = masses.clone().unwrap_or_else(|| vec![*mass; *n]);
            let springs = stiffnesses.clone().unwrap_or_else(|| vec![*stiffness; n + 1]);
            if masses.len() != *n {
                return Err(Error::Config(format!("system.masses has {} entries, expected {n}", masses.len())));
            }
            build_mass_spring_chain(&masses, &springs, *alpha_r, *beta_r, input_nodes)
        }
        SystemSource::Files {
            mass,
            damping,
            stiffness,
            input,
        } => load_system(&SystemFiles {
            mass: mass.clone(),
            damping: damping.clone(),
            stiffness: stiffness.clone(),
            input: input.clone(),
        }),
    }
}

/// Seeded initial displacement and velocity.
pub fn initial_state(cfg: &ExperimentConfig, n: usize) -> (Vector, Vector) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut draw = |amp: f64| {
        if amp > 0.0 {
            Vector::from_fn(n, |_, _| rng.random_range(-amp..=amp))
        } else {
            Vector::zeros(n)
        }
    };
    let x0 = draw(cfg.initial.displacement_amplitude);
    let v0 = draw(cfg.initial.velocity_amplitude);
    (x0, v0)
}

fn signal_fn(cfg: &ExperimentConfig, channels: usize) -> impl Fn(f64) -> Vector + Sync + '_ {
    move |t| cfg.signal.sample(t, channels)
}

/// Builds (or loads) the full model, simulates the test horizon and stores the
/// training and test snapshots.
pub fn stage_simulate(cfg: &ExperimentConfig, layout: &Layout) -> StageResult<()> {
    write_manifest(cfg, layout).stage("simulate")?;
    let system = build_system(cfg).stage("load_system")?;
    let sys_dir = layout.dir("system");
    ensure_dir(&sys_dir).stage("simulate")?;
    save_system(&system, &layout.system()).stage("simulate")?;

    let (x0, v0) = initial_state(cfg, system.n());
    let int_cfg = cfg.integrator.config(cfg.horizon.test).stage("simulate")?;
    let u = signal_fn(cfg, system.inputs());
    let full = simulate(&system, Excitation::Input(&u), &x0, &v0, &int_cfg).stage("simulate")?;
    let train = full.until(cfg.horizon.train).stage("simulate")?;

    let snap = layout.dir("snapshots");
    ensure_dir(&snap).stage("simulate")?;
    save_csv(&train, &TrajectoryFiles::in_dir(&snap, "train")).stage("simulate")?;
    save_csv(&full, &TrajectoryFiles::in_dir(&snap, "test")).stage("simulate")?;
    log::info!(
        "simulated n = {} for {} steps ({} training snapshots)",
        system.n(),
        full.len(),
        train.len()
    );
    Ok(())
}

fn load_train(layout: &Layout) -> Result<TrajectoryData> {
    load_csv(&layout.snapshots("train"))
}

fn load_basis(layout: &Layout) -> Result<Arc<PodBasis>> {
    let dir = layout.dir("basis");
    let v = read_matrix(&dir.join("V.mtx"))?;
    let path = dir.join("singular_values.csv");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut sigma = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let value = line
            .split(',')
            .nth(1)
            .and_then(|s| s.trim().parse::<f64>().ok())
            .ok_or_else(|| Error::format(&path, i + 1, "expected `index,sigma`"))?;
        sigma.push(value);
    }
    Ok(Arc::new(PodBasis::from_parts(v, sigma)?))
}

/// POD basis of the training displacements.
pub fn stage_basis(cfg: &ExperimentConfig, layout: &Layout) -> StageResult<usize> {
    let train = load_train(layout).stage("basis")?;
    let selector = cfg.basis.selector().stage("basis")?;
    let basis = compute_basis(train.displacement(), selector).stage("basis")?;
    let dir = layout.dir("basis");
    ensure_dir(&dir).stage("basis")?;
    write_matrix(&dir.join("V.mtx"), basis.vectors(), Symmetry::General).stage("basis")?;
    basis.write_spectrum_csv(&dir.join("sigma.csv")).stage("basis")?;
    let mut raw = String::from("index,sigma\n");
    for (i, s) in basis.sigma().iter().enumerate() {
        raw.push_str(&format!("{},{s:.16e}\n", i + 1));
    }
    write_text(&dir.join("singular_values.csv"), &raw).stage("basis")?;
    log::info!("basis rank {} of {}", basis.rank(), basis.dim());
    Ok(basis.rank())
}

fn training_data(cfg: &ExperimentConfig, layout: &Layout) -> Result<TrajectoryData> {
    let train = load_train(layout)?;
    match cfg.opinf.derivatives {
        DerivativeSource::Integrator => Ok(train),
        DerivativeSource::FiniteDifference => train.with_finite_difference_derivatives(),
    }
}

/// Unconstrained operator inference with λ picked on the training window.
pub fn stage_infer(cfg: &ExperimentConfig, layout: &Layout, exec: Execution) -> StageResult<f64> {
    let s = "infer";
    let basis = load_basis(layout).stage(s)?;
    let train = training_data(cfg, layout).stage(s)?;
    let system = load_system(&layout.system()).stage("load_system")?;
    let reduced = project(&train, &basis).stage(s)?;
    let (d_hat, rhs) = assemble_opinf_data(&reduced).stage(s)?;

    let (x0, v0) = initial_state(cfg, system.n());
    let vt = basis.vectors().transpose();
    let u = signal_fn(cfg, system.inputs());
    let validation = Validation {
        data: &reduced,
        signal: &u,
        x0: &vt * x0,
        v0: &vt * v0,
    };
    let dir = layout.dir("opinf");
    ensure_dir(&dir).stage(s)?;
    let (lambda, table) = match select_lambda(&d_hat, &rhs, &cfg.opinf.lambdas, &validation, exec) {
        Ok(found) => found,
        Err(Error::NoViableLambda { table }) => {
            write_lambda_table_csv(&dir.join("lambda_table.csv"), &table).stage(s)?;
            return Err(Error::NoViableLambda { table }).stage(s);
        }
        Err(e) => return Err(e).stage(s),
    };
    write_lambda_table_csv(&dir.join("lambda_table.csv"), &table).stage(s)?;
    let (rom, report) = infer(&d_hat, &rhs, lambda).stage(s)?;
    write_matrix(&dir.join("E.mtx"), rom.damping(), Symmetry::General).stage(s)?;
    write_matrix(&dir.join("K.mtx"), rom.stiffness(), Symmetry::General).stage(s)?;
    write_matrix(&dir.join("B.mtx"), rom.input(), Symmetry::General).stage(s)?;
    write_text(
        &dir.join("report.csv"),
        &format!(
            "lambda,residual,condition,rank_estimate,rank_deficient\n{lambda:.16e},{:.16e},{:.16e},{},{}\n",
            report.residual, report.condition, report.rank_estimate, report.rank_deficient
        ),
    )
    .stage(s)?;
    log::info!("opinf: λ = {lambda:e}, residual {:.3e}", report.residual);
    Ok(lambda)
}

/// Structure-preserving inference with symmetric definite operators.
pub fn stage_infer_constrained(cfg: &ExperimentConfig, layout: &Layout) -> StageResult<StructuredRom> {
    let s = "infer_constrained";
    let basis = load_basis(layout).stage(s)?;
    let train = training_data(cfg, layout).stage(s)?;
    let reduced = project(&train, &basis).stage(s)?;
    let (d_hat, f_hat) = assemble_force_data(&reduced).stage(s)?;
    let (rom, report) = infer_constrained(&d_hat, &f_hat, cfg.copinf.omega, &cfg.copinf.options()).stage(s)?;
    if !report.converged {
        log::warn!(
            "copinf stopped after {} iterations (primal {:.3e}, dual {:.3e})",
            report.iterations,
            report.primal_residual,
            report.dual_residual
        );
    }
    let dir = layout.dir("copinf");
    ensure_dir(&dir).stage(s)?;
    write_matrix(&dir.join("M.mtx"), &rom.mass, Symmetry::Symmetric).stage(s)?;
    write_matrix(&dir.join("E.mtx"), &rom.damping, Symmetry::Symmetric).stage(s)?;
    write_matrix(&dir.join("K.mtx"), &rom.stiffness, Symmetry::Symmetric).stage(s)?;
    write_text(
        &dir.join("report.csv"),
        &format!(
            "omega,objective,iterations,primal_residual,dual_residual,converged,final_penalty\n{:.16e},{:.16e},{},{:.16e},{:.16e},{},{:.16e}\n",
            cfg.copinf.omega,
            report.objective,
            report.iterations,
            report.primal_residual,
            report.dual_residual,
            report.converged,
            report.final_penalty
        ),
    )
    .stage(s)?;
    if cfg.copinf.trace {
        write_trace_csv(&dir.join("trace.csv"), &report.trace).stage(s)?;
    }
    Ok(rom.with_basis(basis))
}

enum Rom {
    Intrusive(SecondOrderSystem),
    Inferred(MassNormalizedRom),
    Structured(StructuredRom),
}

impl Rom {
    fn operators(&self) -> (&Matrix, &Matrix, &Matrix) {
        match self {
            Rom::Intrusive(m) => (m.mass(), m.damping(), m.stiffness()),
            Rom::Inferred(m) => (m.mass(), m.damping(), m.stiffness()),
            Rom::Structured(m) => (m.mass(), m.damping(), m.stiffness()),
        }
    }
}

fn load_rom(method: Method, layout: &Layout, system: &SecondOrderSystem, basis: &PodBasis) -> Result<Rom> {
    match method {
        Method::Pod => {
            let reduced = intrusive_reduce(system, basis)?;
            let dir = layout.dir("pod");
            ensure_dir(&dir)?;
            save_system(&reduced, &SystemFiles::in_dir(&dir))?;
            Ok(Rom::Intrusive(reduced))
        }
        Method::Opinf => {
            let dir = layout.dir("opinf");
            let rom = MassNormalizedRom::new(
                read_matrix(&dir.join("E.mtx"))?,
                read_matrix(&dir.join("K.mtx"))?,
                read_matrix(&dir.join("B.mtx"))?,
            )?;
            Ok(Rom::Inferred(rom))
        }
        Method::Copinf => {
            let dir = layout.dir("copinf");
            Ok(Rom::Structured(StructuredRom {
                mass: read_matrix(&dir.join("M.mtx"))?,
                damping: read_matrix(&dir.join("E.mtx"))?,
                stiffness: read_matrix(&dir.join("K.mtx"))?,
                omega: 0.0,
                basis: None,
            }))
        }
    }
}

fn evaluate_one(
    method: Method,
    cfg: &ExperimentConfig,
    layout: &Layout,
    system: &SecondOrderSystem,
    basis: &PodBasis,
    test: &TrajectoryData,
) -> Result<SummaryRow> {
    let rom = load_rom(method, layout, system, basis)?;
    if let Rom::Inferred(m) = &rom {
        if m.rank() != basis.rank() {
            return Err(Error::InvalidInput(format!(
                "opinf operators have rank {}, basis has {}",
                m.rank(),
                basis.rank()
            )));
        }
    }
    let (x0, v0) = initial_state(cfg, system.n());
    let vt = basis.vectors().transpose();
    let (xr0, vr0) = (&vt * x0, &vt * v0);
    let int_cfg = cfg.integrator.config(cfg.horizon.test)?;
    let m_in = system.inputs();
    let u = signal_fn(cfg, m_in);
    let projected_force = |t: f64| &vt * (system.input() * cfg.signal.sample(t, m_in));
    let sim = match &rom {
        Rom::Intrusive(m) => simulate(m, Excitation::Input(&u), &xr0, &vr0, &int_cfg),
        Rom::Inferred(m) => simulate(m, Excitation::Input(&u), &xr0, &vr0, &int_cfg),
        Rom::Structured(m) => simulate(m, Excitation::Force(&projected_force), &xr0, &vr0, &int_cfg),
    }?;
    let lifted = basis.lift(sim.displacement());
    let series = relative_error(test.times(), test.displacement(), &lifted, Some(cfg.horizon.train))?;

    let dir = layout.dir(method.name());
    ensure_dir(&dir)?;
    series.write_csv(&dir.join("error.csv"))?;
    let traj = TrajectoryData::new(test.times().to_vec(), lifted)?;
    save_csv(
        &traj,
        &TrajectoryFiles {
            displacement: dir.join("trajectory_X.csv"),
            velocity: None,
            acceleration: None,
            input: None,
            force: None,
        },
    )?;

    let split = cfg.horizon.train * (1.0 + 1e-12);
    let phase_max = |train: bool| {
        series
            .times
            .iter()
            .zip(&series.eps)
            .filter(|(t, _)| (**t <= split) == train)
            .map(|(_, e)| *e)
            .fold(0.0, f64::max)
    };
    let (m, e, k) = rom.operators();
    let stable = is_stable(m, e, k, DEFAULT_STABILITY_TOL)?;
    let lambda = match method {
        Method::Opinf => read_selected_lambda(layout).ok(),
        _ => None,
    };
    Ok(SummaryRow {
        method,
        rank: basis.rank(),
        lambda,
        max_eps: series.max_eps,
        max_eps_train: phase_max(true),
        max_eps_test: phase_max(false),
        stable,
    })
}

fn read_selected_lambda(layout: &Layout) -> Result<f64> {
    let path = layout.dir("opinf").join("report.csv");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    text.lines()
        .nth(1)
        .and_then(|l| l.split(',').next())
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::format(&path, 2, "missing lambda"))
}

/// Simulates every requested ROM over the test horizon and writes error series and `summary.csv`.
pub fn stage_evaluate(cfg: &ExperimentConfig, layout: &Layout, exec: Execution) -> StageResult<Vec<SummaryRow>> {
    let s = "evaluate";
    let system = load_system(&layout.system()).stage("load_system")?;
    let basis = load_basis(layout).stage(s)?;
    let test = load_csv(&layout.snapshots("test")).stage(s)?;
    let rows = exec
        .map(&cfg.methods, |&method| evaluate_one(method, cfg, layout, &system, &basis, &test))
        .into_iter()
        .collect::<Result<Vec<_>>>()
        .stage(s)?;
    write_summary(&layout.summary(), &rows).stage(s)?;
    Ok(rows)
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut out = String::from("method,rank,lambda,max_eps,max_eps_train,max_eps_test,stable\n");
    for row in rows {
        let lambda = row.lambda.map(|l| format!("{l:.16e}")).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{:.16e},{:.16e},{:.16e},{}\n",
            row.method.name(),
            row.rank,
            lambda,
            row.max_eps,
            row.max_eps_train,
            row.max_eps_test,
            row.stable
        ));
    }
    write_text(path, &out)
}

/// All stages in order. Wall-clock seconds go to the log and, if
/// `record_timings` is set, to `timings.csv`.
pub fn run(cfg: &ExperimentConfig, layout: &Layout, exec: Execution) -> StageResult<Vec<SummaryRow>> {
    let mut timings: Vec<(&str, f64)> = Vec::new();
    let mut timed = |name: &'static str, start: Instant| {
        let secs = start.elapsed().as_secs_f64();
        log::info!("stage {name} took {secs:.3} s");
        timings.push((name, secs));
    };
    let t = Instant::now();
    stage_simulate(cfg, layout)?;
    timed("simulate", t);
    let t = Instant::now();
    stage_basis(cfg, layout)?;
    timed("basis", t);
    if cfg.methods.contains(&Method::Opinf) {
        let t = Instant::now();
        stage_infer(cfg, layout, exec)?;
        timed("infer", t);
    }
    if cfg.methods.contains(&Method::Copinf) {
        let t = Instant::now();
        stage_infer_constrained(cfg, layout)?;
        timed("infer_constrained", t);
    }
    let t = Instant::now();
    let rows = stage_evaluate(cfg, layout, exec)?;
    timed("evaluate", t);
    if cfg.record_timings {
        let mut out = String::from("stage,seconds\n");
        for (name, secs) in &timings {
            out.push_str(&format!("{name},{secs:.6}\n"));
        }
        write_text(&layout.root.join("timings.csv"), &out).stage("run")?;
    }
    Ok(rows)
}
