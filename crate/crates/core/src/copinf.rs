//! Force-informed operator inference with definiteness constraints.
//!
//! Solves
//!
//! ```text
//! minimize ‖[M̂ Ê K̂] D̂ - F̂‖²_F   s.t.  M̂ ⪰ ωI,  K̂ ⪰ ωI,  Ê ⪰ 0,  all symmetric
//! ```
//!
//! with `D̂ = [Ẍ̂; Ẋ̂; X̂]` by ADMM on the split `P = Z`: a ridge-type solve in the
//! stacked variable `P`, a per-block projection of `Z` onto the shifted
//! semidefinite cones, and a scaled dual update. Blocks of `D̂` and `F̂` are
//! rescaled to unit norm first; a positive per-block scaling maps each cone onto
//! itself, so the feasible set keeps its shape.

use std::path::Path;
use std::sync::Arc;

use nalgebra::Cholesky;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::linalg::{clip_spectrum, ensure_finite, ensure_square, Matrix};
use crate::model::SecondOrderModel;
use crate::opinf::tikhonov_solve;
use crate::pod::PodBasis;

pub const DEFAULT_OMEGA: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstrainedOptions {
    pub max_iter: usize,
    pub tol_abs: f64,
    pub tol_rel: f64,
    /// Initial ADMM penalty; adapted by residual balancing.
    pub penalty: f64,
    pub record_trace: bool,
}

impl Default for ConstrainedOptions {
    fn default() -> Self {
        Self {
            max_iter: 50_000,
            tol_abs: 1e-9,
            tol_rel: 1e-9,
            penalty: 1.0,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedSolveReport {
    /// `‖[M̂ Ê K̂] D̂ - F̂‖²_F` at the returned operators.
    pub objective: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub converged: bool,
    pub final_penalty: f64,
    pub trace: Vec<TraceRow>,
}

/// Reduced model `M̂ ẍ̂ + Ê ẋ̂ + K̂ x̂ = V_rᵀ f` with symmetric definite operators.
#[derive(Debug, Clone)]
pub struct StructuredRom {
    pub mass: Matrix,
    pub damping: Matrix,
    pub stiffness: Matrix,
    pub omega: f64,
    pub basis: Option<Arc<PodBasis>>,
}

impl StructuredRom {
    pub fn rank(&self) -> usize {
        self.mass.nrows()
    }

    pub fn with_basis(mut self, basis: Arc<PodBasis>) -> Self {
        self.basis = Some(basis);
        self
    }
}

impl SecondOrderModel for StructuredRom {
    fn mass(&self) -> &Matrix {
        &self.mass
    }
    fn damping(&self) -> &Matrix {
        &self.damping
    }
    fn stiffness(&self) -> &Matrix {
        &self.stiffness
    }
    /// Driven by projected forces only.
    fn input_map(&self) -> Option<&Matrix> {
        None
    }
}

/// Frobenius projection of `(A + Aᵀ)/2` onto `{S = Sᵀ : S ⪰ shift·I}`.
pub fn project_psd(a: &Matrix, shift: f64) -> Result<Matrix> {
    ensure_square("matrix", a)?;
    ensure_finite("matrix", a)?;
    if !(shift >= 0.0 && shift.is_finite()) {
        return Err(Error::InvalidParameter(format!("shift must be nonnegative, got {shift}")));
    }
    Ok(clip_spectrum(a, shift))
}

/// Stacked `[M E K]` iterate plus the cone shifts of its three blocks.
struct Cones {
    r: usize,
    shifts: [f64; 3],
}

impl Cones {
    fn project(&self, p: &Matrix) -> Matrix {
        let r = self.r;
        let mut z = Matrix::zeros(r, 3 * r);
        for (b, shift) in self.shifts.iter().enumerate() {
            let block = p.columns(b * r, r).into_owned();
            z.columns_mut(b * r, r).copy_from(&clip_spectrum(&block, *shift));
        }
        z
    }
}

fn block_norm(d: &Matrix, b: usize, r: usize) -> f64 {
    let n = d.rows(b * r, r).norm();
    if n > 0.0 {
        n
    } else {
        1.0
    }
}

/// Fits `(M̂, Ê, K̂)` to `F̂ ≈ [M̂ Ê K̂] D̂` under the definiteness constraints.
///
/// The returned operators are always feasible; `converged` tells whether the
/// residual tolerances were met within `max_iter`.
pub fn infer_constrained(
    d_hat: &Matrix,
    f_hat: &Matrix,
    omega: f64,
    options: &ConstrainedOptions,
) -> Result<(StructuredRom, ConstrainedSolveReport)> {
    let r = f_hat.nrows();
    if r == 0 || d_hat.nrows() != 3 * r {
        return Err(Error::InvalidInput(format!(
            "data matrix has {} rows, expected 3r = {}",
            d_hat.nrows(),
            3 * r
        )));
    }
    if d_hat.ncols() != f_hat.ncols() || d_hat.ncols() == 0 {
        return Err(Error::InvalidInput(format!(
            "data matrix has {} columns, force data has {}",
            d_hat.ncols(),
            f_hat.ncols()
        )));
    }
    ensure_finite("data matrix", d_hat)?;
    ensure_finite("force data", f_hat)?;
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::InvalidParameter(format!("omega must be positive, got {omega}")));
    }
    if !(options.penalty > 0.0) || !(options.tol_abs >= 0.0) || !(options.tol_rel >= 0.0) {
        return Err(Error::InvalidParameter("penalty must be positive and tolerances nonnegative".into()));
    }

    // Unit-norm blocks: P_b D_b = (P_b s_b / f_s) (D_b / s_b) f_s.
    let scales = [block_norm(d_hat, 0, r), block_norm(d_hat, 1, r), block_norm(d_hat, 2, r)];
    let f_scale = if f_hat.norm() > 0.0 { f_hat.norm() } else { 1.0 };
    let mut d = d_hat.clone();
    for (b, s) in scales.iter().enumerate() {
        d.rows_mut(b * r, r).scale_mut(1.0 / s);
    }
    let f = f_hat / f_scale;
    let cones = Cones {
        r,
        shifts: [omega * scales[0] / f_scale, 0.0, omega * scales[2] / f_scale],
    };

    let gram = &d * d.transpose();
    let cross = &f * d.transpose();
    let f_sq = f.norm_squared();
    let objective_of = |z: &Matrix| -> f64 {
        ((z * &gram).component_mul(z).sum() - 2.0 * cross.component_mul(z).sum() + f_sq).max(0.0)
    };

    let dim = 3 * r;
    let sqrt_n = ((r * dim) as f64).sqrt();
    let factor = |rho: f64| -> Result<Cholesky<f64, nalgebra::Dyn>> {
        Cholesky::new(&gram * 2.0 + Matrix::identity(dim, dim) * rho)
            .ok_or_else(|| Error::Numerical("ADMM system is not positive definite".into()))
    };

    let mut z = match tikhonov_solve(&d, &f, 0.0) {
        Ok((p, _)) => cones.project(&p),
        Err(_) => cones.project(&Matrix::zeros(r, dim)),
    };
    let mut dual = Matrix::zeros(r, dim);
    let mut rho = options.penalty;
    let mut chol = factor(rho)?;
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut primal_residual = f64::INFINITY;
    let mut dual_residual = f64::INFINITY;

    for it in 1..=options.max_iter {
        iterations = it;
        let rhs = &cross * 2.0 + (&z - &dual) * rho;
        let p = chol.solve(&rhs.transpose()).transpose();
        let z_prev = std::mem::replace(&mut z, cones.project(&(&p + &dual)));
        let gap = &p - &z;
        dual += &gap;

        primal_residual = gap.norm();
        dual_residual = rho * (&z - &z_prev).norm();
        let eps_pri = sqrt_n * options.tol_abs + options.tol_rel * p.norm().max(z.norm());
        let eps_dual = sqrt_n * options.tol_abs + options.tol_rel * rho * dual.norm();
        if options.record_trace {
            trace.push(TraceRow {
                iteration: it,
                objective: objective_of(&z) * f_scale * f_scale,
                primal_residual,
                dual_residual,
            });
        }
        if primal_residual <= eps_pri && dual_residual <= eps_dual {
            converged = true;
            break;
        }

        if it % 10 == 0 {
            let new_rho = if primal_residual > 10.0 * dual_residual {
                rho * 2.0
            } else if dual_residual > 10.0 * primal_residual {
                rho / 2.0
            } else {
                rho
            };
            if new_rho != rho && (1e-8..=1e8).contains(&new_rho) {
                dual *= rho / new_rho;
                rho = new_rho;
                chol = factor(rho)?;
            }
        }
    }

    let unscale = |b: usize| -> Matrix { z.columns(b * r, r).into_owned() * (f_scale / scales[b]) };
    let mass = clip_spectrum(&unscale(0), omega);
    let damping = clip_spectrum(&unscale(1), 0.0);
    let stiffness = clip_spectrum(&unscale(2), omega);

    let mut stacked = Matrix::zeros(r, dim);
    stacked.columns_mut(0, r).copy_from(&mass);
    stacked.columns_mut(r, r).copy_from(&damping);
    stacked.columns_mut(2 * r, r).copy_from(&stiffness);
    let objective = (stacked * d_hat - f_hat).norm_squared();

    Ok((
        StructuredRom {
            mass,
            damping,
            stiffness,
            omega,
            basis: None,
        },
        ConstrainedSolveReport {
            objective,
            iterations,
            primal_residual,
            dual_residual,
            converged,
            final_penalty: rho,
            trace,
        },
    ))
}

/// Solves the same problem for several thresholds `ω`.
pub fn infer_constrained_sweep(
    d_hat: &Matrix,
    f_hat: &Matrix,
    omegas: &[f64],
    options: &ConstrainedOptions,
    exec: Execution,
) -> Vec<Result<(StructuredRom, ConstrainedSolveReport)>> {
    exec.map(omegas, |&omega| infer_constrained(d_hat, f_hat, omega, options))
}

/// CSV `iteration,objective,primal_residual,dual_residual`.
pub fn write_trace_csv(path: &Path, trace: &[TraceRow]) -> Result<()> {
    let mut out = String::from("iteration,objective,primal_residual,dual_residual\n");
    for row in trace {
        out.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e}\n",
            row.iteration, row.objective, row.primal_residual, row.dual_residual
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
