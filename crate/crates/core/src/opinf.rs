//! Second-order operator inference by Tikhonov-regularized least squares.
//!
//! Given projected snapshots, find `P = [-Ê_M, -K̂_M, B̂_M]` minimizing
//! `‖P D̂ - Ẍ̂‖²_F + λ‖P‖²_F` with `D̂ = [Ẋ̂; X̂; U]`. The learned model has
//! identity mass: `ẍ̂ + Ê_M ẋ̂ + K̂_M x̂ = B̂_M u`.

use std::path::Path;
use std::sync::Arc;

use log::warn;
use nalgebra::SVD;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::linalg::{clip_spectrum, condition_number, ensure_finite, ensure_square, solve_right, symmetrize, Matrix, Vector};
use crate::model::SecondOrderModel;
use crate::newmark::{simulate, Excitation, IntegratorConfig};
use crate::pod::PodBasis;
use crate::snapshots::ReducedTrajectoryData;

/// Relative singular-value cutoff for the unregularized solve.
pub const RANK_TOLERANCE: f64 = 1e-12;
/// Eigenvector matrices beyond this condition number are rejected by [`separate_operators`].
pub const MODE_CONDITION_LIMIT: f64 = 1e12;

/// Identity-mass reduced model `ẍ̂ + E_M ẋ̂ + K_M x̂ = B_M u`.
#[derive(Debug, Clone)]
pub struct MassNormalizedRom {
    damping: Matrix,
    stiffness: Matrix,
    input: Matrix,
    identity: Matrix,
    lambda: f64,
    basis: Option<Arc<PodBasis>>,
}

impl MassNormalizedRom {
    pub fn new(damping: Matrix, stiffness: Matrix, input: Matrix) -> Result<Self> {
        let r = stiffness.nrows();
        ensure_square("K_M", &stiffness)?;
        if damping.shape() != (r, r) || input.nrows() != r || r == 0 {
            return Err(Error::InvalidInput(format!(
                "inconsistent operator shapes: E_M {:?}, K_M {:?}, B_M {:?}",
                damping.shape(),
                stiffness.shape(),
                input.shape()
            )));
        }
        for (name, m) in [("E_M", &damping), ("K_M", &stiffness), ("B_M", &input)] {
            ensure_finite(name, m)?;
        }
        Ok(Self {
            damping,
            stiffness,
            input,
            identity: Matrix::identity(r, r),
            lambda: 0.0,
            basis: None,
        })
    }

    pub fn with_basis(mut self, basis: Arc<PodBasis>) -> Self {
        self.basis = Some(basis);
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn rank(&self) -> usize {
        self.stiffness.nrows()
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn basis(&self) -> Option<&Arc<PodBasis>> {
        self.basis.as_ref()
    }
    pub fn input(&self) -> &Matrix {
        &self.input
    }

    /// Stacked operator `[-E_M, -K_M, B_M]`.
    pub fn stacked(&self) -> Matrix {
        let r = self.rank();
        let m = self.input.ncols();
        let mut p = Matrix::zeros(r, 2 * r + m);
        p.columns_mut(0, r).copy_from(&(-&self.damping));
        p.columns_mut(r, r).copy_from(&(-&self.stiffness));
        p.columns_mut(2 * r, m).copy_from(&self.input);
        p
    }
}

impl SecondOrderModel for MassNormalizedRom {
    fn mass(&self) -> &Matrix {
        &self.identity
    }
    fn damping(&self) -> &Matrix {
        &self.damping
    }
    fn stiffness(&self) -> &Matrix {
        &self.stiffness
    }
    fn input_map(&self) -> Option<&Matrix> {
        Some(&self.input)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    /// `‖P̂ D̂ - Ẍ̂‖_F`.
    pub residual: f64,
    /// `σ_max / σ_min` of `D̂`.
    pub condition: f64,
    pub rank_estimate: usize,
    pub rank_deficient: bool,
    pub lambda: f64,
    pub solver: &'static str,
}

/// Minimizer of `‖P D - R‖²_F + λ‖P‖²_F` through the SVD of `Dᵀ`.
///
/// At `λ = 0` singular values below `RANK_TOLERANCE · σ_max` are discarded, which
/// yields the minimum-norm least-squares solution.
pub fn tikhonov_solve(d: &Matrix, rhs: &Matrix, lambda: f64) -> Result<(Matrix, SolveReport)> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda must be nonnegative, got {lambda}")));
    }
    ensure_finite("data matrix", d)?;
    ensure_finite("right-hand side", rhs)?;
    if d.ncols() != rhs.ncols() {
        return Err(Error::InvalidInput(format!(
            "data matrix has {} columns, right-hand side has {}",
            d.ncols(),
            rhs.ncols()
        )));
    }
    if d.ncols() == 0 {
        return Err(Error::InvalidInput("no snapshots".into()));
    }
    let all_zero = d.iter().all(|&v| v == 0.0);
    if all_zero && lambda == 0.0 {
        return Err(Error::DegenerateInput("data matrix is zero and lambda is 0".into()));
    }

    let p = d.nrows();
    let svd = SVD::new(d.transpose(), true, true);
    let u = svd.u.as_ref().ok_or_else(|| Error::Numerical("SVD failed".into()))?;
    let v_t = svd.v_t.as_ref().ok_or_else(|| Error::Numerical("SVD failed".into()))?;
    let s = &svd.singular_values;
    let s_max = s.max();
    let cutoff = RANK_TOLERANCE * s_max;
    let rank_estimate = s.iter().filter(|&&v| v > cutoff).count();

    let filter = s.map(|si| {
        if lambda > 0.0 {
            si / (si * si + lambda)
        } else if si > cutoff {
            1.0 / si
        } else {
            0.0
        }
    });
    let mut coeff = rhs * u;
    for (j, f) in filter.iter().enumerate() {
        coeff.column_mut(j).scale_mut(*f);
    }
    let solution = coeff * v_t;

    let s_min = if s.len() < p { 0.0 } else { s.min() };
    let condition = if s_min > 0.0 { (s_max / s_min).max(1.0) } else { f64::INFINITY };
    let report = SolveReport {
        residual: (&solution * d - rhs).norm(),
        condition,
        rank_estimate,
        rank_deficient: rank_estimate < p,
        lambda,
        solver: "svd-tikhonov",
    };
    Ok((solution, report))
}

/// Fits `(Ê_M, K̂_M, B̂_M)` to `D̂ = [Ẋ̂; X̂; U]`, `RHS = Ẍ̂`.
pub fn infer(d_hat: &Matrix, rhs: &Matrix, lambda: f64) -> Result<(MassNormalizedRom, SolveReport)> {
    let r = rhs.nrows();
    if r == 0 || d_hat.nrows() <= 2 * r {
        return Err(Error::InvalidInput(format!(
            "data matrix has {} rows; expected 2r + m with r = {r} and m >= 1",
            d_hat.nrows()
        )));
    }
    let m = d_hat.nrows() - 2 * r;
    if d_hat.ncols() < d_hat.nrows() {
        warn!(
            "only {} snapshots for {} unknowns per row; the fit is underdetermined",
            d_hat.ncols(),
            d_hat.nrows()
        );
    }
    let (p, report) = tikhonov_solve(d_hat, rhs, lambda)?;
    let rom = MassNormalizedRom::new(
        -p.columns(0, r).into_owned(),
        -p.columns(r, r).into_owned(),
        p.columns(2 * r, m).into_owned(),
    )?
    .with_lambda(lambda);
    Ok((rom, report))
}

/// One row of the regularization sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaRow {
    pub lambda: f64,
    pub train_residual: f64,
    /// Maximum relative state error on the validation window; infinite when the ROM blew up.
    pub validation_error: f64,
    pub operator_norm: f64,
}

/// Reference window the candidate models are simulated against.
pub struct Validation<'a> {
    pub data: &'a ReducedTrajectoryData,
    pub signal: &'a (dyn Fn(f64) -> Vector + Sync),
    /// Reduced state one step before the first snapshot.
    pub x0: Vector,
    pub v0: Vector,
}

/// Default candidate grid: `{0} ∪ {10⁻¹², 10⁻¹¹, …, 10⁰}`.
pub fn default_lambda_grid() -> Vec<f64> {
    std::iter::once(0.0)
        .chain((-12..=0).map(|e| 10f64.powi(e)))
        .collect()
}

const BLOWUP_FACTOR: f64 = 1e6;

fn validation_error(rom: &MassNormalizedRom, validation: &Validation<'_>) -> f64 {
    let data = validation.data.data();
    let times = data.times();
    let dt = match data.dt() {
        Some(dt) => dt,
        None => return f64::INFINITY,
    };
    let t0 = times[0] - dt;
    let horizon = times[times.len() - 1] - t0;
    let Ok(config) = IntegratorConfig::new(dt, horizon) else {
        return f64::INFINITY;
    };
    let shifted = |t: f64| (validation.signal)(t + t0);
    let Ok(sim) = simulate(rom, Excitation::Input(&shifted), &validation.x0, &validation.v0, &config) else {
        return f64::INFINITY;
    };
    if sim.len() != data.len() {
        return f64::INFINITY;
    }
    let reference = data.displacement();
    let scale = reference
        .column_iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let err = (sim.displacement() - reference)
        .column_iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
        / scale;
    if err.is_finite() && err < BLOWUP_FACTOR {
        err
    } else {
        f64::INFINITY
    }
}

/// Fits one model per candidate λ and keeps the one with the smallest validation
/// error; ties go to the larger λ.
pub fn select_lambda(
    d_hat: &Matrix,
    rhs: &Matrix,
    grid: &[f64],
    validation: &Validation<'_>,
    exec: Execution,
) -> Result<(f64, Vec<LambdaRow>)> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("lambda grid is empty".into()));
    }
    if let Some(bad) = grid.iter().find(|l| !(**l >= 0.0)) {
        return Err(Error::InvalidParameter(format!("lambda {bad} is negative")));
    }
    let rows: Vec<Result<LambdaRow>> = exec.map(grid, |&lambda| {
        let (rom, report) = infer(d_hat, rhs, lambda)?;
        Ok(LambdaRow {
            lambda,
            train_residual: report.residual,
            validation_error: validation_error(&rom, validation),
            operator_norm: rom.stacked().norm(),
        })
    });
    let table = rows.into_iter().collect::<Result<Vec<_>>>()?;

    let mut best: Option<&LambdaRow> = None;
    for row in table.iter().filter(|r| r.validation_error.is_finite()) {
        best = match best {
            None => Some(row),
            Some(b) => {
                let tie = (row.validation_error - b.validation_error).abs()
                    <= 1e-12 * row.validation_error.max(b.validation_error);
                if (tie && row.lambda > b.lambda) || (!tie && row.validation_error < b.validation_error) {
                    Some(row)
                } else {
                    Some(b)
                }
            }
        };
    }
    match best {
        Some(b) => Ok((b.lambda, table)),
        None => Err(Error::NoViableLambda { table }),
    }
}

/// CSV `lambda,train_residual,validation_error,operator_norm`.
pub fn write_lambda_table_csv(path: &Path, table: &[LambdaRow]) -> Result<()> {
    let mut out = String::from("lambda,train_residual,validation_error,operator_norm\n");
    for row in table {
        out.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e}\n",
            row.lambda, row.train_residual, row.validation_error, row.operator_norm
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Mass, damping, stiffness and input operators recovered from an identity-mass model.
#[derive(Debug, Clone)]
pub struct SeparatedOperators {
    pub mass: Matrix,
    pub damping: Matrix,
    pub stiffness: Matrix,
    pub input: Matrix,
    /// Unit-length eigenvectors of `K̂_M`.
    pub modes: Matrix,
    /// Squared natural frequencies, ascending.
    pub frequencies_squared: Vec<f64>,
}

impl SecondOrderModel for SeparatedOperators {
    fn mass(&self) -> &Matrix {
        &self.mass
    }
    fn damping(&self) -> &Matrix {
        &self.damping
    }
    fn stiffness(&self) -> &Matrix {
        &self.stiffness
    }
    fn input_map(&self) -> Option<&Matrix> {
        Some(&self.input)
    }
}

/// Splits `(Ê_M, K̂_M, B̂_M)` into `(M̂, Ê, K̂, B̂)` through the modal decomposition
/// `K̂_M Φ = Φ Ω²`: `K̂ = Φ⁻ᵀ Ω² Φ⁻¹`, `M̂ = K̂ K̂_M⁻¹`, `Ê = M̂ Ê_M`, `B̂ = M̂ B̂_M`.
pub fn separate_operators(rom: &MassNormalizedRom) -> Result<SeparatedOperators> {
    let k_m = &rom.stiffness;
    let r = rom.rank();
    let eig = k_m.clone().complex_eigenvalues();
    let spectrum: Vec<(f64, f64)> = eig.iter().map(|c| (c.re, c.im)).collect();
    let scale = eig.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let separable = scale > 0.0
        && eig
            .iter()
            .all(|c| c.im.abs() <= 1e-10 * scale && c.re > 1e-14 * scale);
    if !separable {
        return Err(Error::NotSeparable { spectrum });
    }

    let mut values: Vec<f64> = eig.iter().map(|c| c.re).collect();
    values.sort_by(f64::total_cmp);

    // Eigenvalues closer than this share one invariant subspace computation.
    let cluster_gap = 1e-8 * scale;
    let mut modes = Matrix::zeros(r, r);
    let mut start = 0;
    while start < r {
        let mut end = start + 1;
        while end < r && values[end] - values[end - 1] <= cluster_gap {
            end += 1;
        }
        let count = end - start;
        let shift = values[start..end].iter().sum::<f64>() / count as f64;
        let shifted = k_m - Matrix::identity(r, r) * shift;
        let svd = SVD::new(shifted, false, true);
        let v_t = svd.v_t.ok_or_else(|| Error::Numerical("SVD failed".into()))?;
        let mut order: Vec<usize> = (0..r).collect();
        order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
        for (slot, &row) in order.iter().take(count).enumerate() {
            let mut phi = v_t.row(row).transpose();
            let pivot = phi.iter().copied().fold(0.0f64, |b, v| if v.abs() > b.abs() { v } else { b });
            if pivot < 0.0 {
                phi.neg_mut();
            }
            phi /= phi.norm();
            modes.set_column(start + slot, &phi);
        }
        start = end;
    }

    let condition = condition_number(&modes);
    let omega2 = Matrix::from_diagonal(&Vector::from_column_slice(&values));
    let modal_residual = (k_m * &modes - &modes * &omega2).norm() / k_m.norm();
    if !(condition <= MODE_CONDITION_LIMIT) || !(modal_residual <= 1e-6) {
        return Err(Error::IllConditionedModes { condition });
    }

    let phi_inv = modes
        .clone()
        .try_inverse()
        .ok_or(Error::IllConditionedModes { condition })?;
    let stiffness = symmetrize(&(phi_inv.transpose() * &omega2 * &phi_inv));
    let mass = solve_right(&stiffness, k_m, "inferred stiffness K_M")?;
    let damping = &mass * &rom.damping;
    let input = &mass * &rom.input;
    Ok(SeparatedOperators {
        mass,
        damping,
        stiffness,
        input,
        modes,
        frequencies_squared: values,
    })
}

/// Frobenius-nearest symmetric positive semidefinite matrix to `a`, plus `shift · I`.
pub fn nearest_spd(a: &Matrix, shift: f64) -> Result<Matrix> {
    ensure_square("matrix", a)?;
    ensure_finite("matrix", a)?;
    if !(shift >= 0.0) {
        return Err(Error::InvalidParameter(format!("shift must be nonnegative, got {shift}")));
    }
    let psd = clip_spectrum(a, 0.0);
    Ok(psd + Matrix::identity(a.nrows(), a.ncols()) * shift)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::min_eigenvalue;

    #[test]
    fn scalar_ridge() {
        let d = Matrix::from_element(1, 1, 1.0);
        let (p, report) = tikhonov_solve(&d, &d, 1.0).unwrap();
        assert!((p[(0, 0)] - 0.5).abs() < 1e-15);
        assert_eq!(report.rank_estimate, 1);
    }

    #[test]
    fn exact_scalar_model() {
        // ẍ = -0.1 ẋ - 4 x + u on 10 deterministic samples
        let samples: Vec<(f64, f64, f64)> = (0..10)
            .map(|i| {
                let t = i as f64;
                ((1.3 * t).sin(), (0.7 * t + 0.4).cos(), (2.1 * t).sin() + 0.2)
            })
            .collect();
        let d = Matrix::from_fn(3, 10, |row, j| match row {
            0 => samples[j].0,
            1 => samples[j].1,
            _ => samples[j].2,
        });
        let rhs = Matrix::from_fn(1, 10, |_, j| -0.1 * samples[j].0 - 4.0 * samples[j].1 + samples[j].2);
        let (rom, report) = infer(&d, &rhs, 0.0).unwrap();
        assert!((rom.damping[(0, 0)] - 0.1).abs() < 1e-10);
        assert!((rom.stiffness[(0, 0)] - 4.0).abs() < 1e-10);
        assert!((rom.input[(0, 0)] - 1.0).abs() < 1e-10);
        assert!(!report.rank_deficient);
        assert!(report.condition >= 1.0);
    }

    #[test]
    fn rank_deficiency_gives_minimum_norm() {
        // two identical rows: min-norm splits the weight evenly
        let d = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        let rhs = Matrix::from_row_slice(1, 3, &[2.0, 4.0, 6.0]);
        let (p, report) = tikhonov_solve(&d, &rhs, 0.0).unwrap();
        assert!((p[(0, 0)] - 1.0).abs() < 1e-12 && (p[(0, 1)] - 1.0).abs() < 1e-12);
        assert!(report.rank_deficient);
        assert_eq!(report.rank_estimate, 1);
        assert!(report.condition > 1e12);
    }

    #[test]
    fn huge_penalty_shrinks_to_zero() {
        let d = Matrix::from_fn(3, 8, |i, j| ((i + 2 * j) as f64).sin());
        let rhs = Matrix::from_fn(1, 8, |_, j| (j as f64).cos());
        let (p, _) = tikhonov_solve(&d, &rhs, 1e12).unwrap();
        assert!(p.norm() <= 1e-6 * (&rhs * d.transpose()).norm());
    }

    #[test]
    fn invalid_inputs() {
        let mut d = Matrix::from_element(3, 4, 1.0);
        let rhs = Matrix::from_element(1, 4, 1.0);
        assert!(matches!(infer(&Matrix::zeros(3, 4), &rhs, 0.0), Err(Error::DegenerateInput(_))));
        d[(0, 0)] = f64::NAN;
        assert!(matches!(infer(&d, &rhs, 0.0), Err(Error::InvalidInput(_))));
        assert!(matches!(
            infer(&Matrix::from_element(2, 4, 1.0), &rhs, 0.0),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn separation_of_modal_operators() {
        let rom = MassNormalizedRom::new(
            Matrix::from_diagonal(&Vector::from_vec(vec![0.1, 0.2])),
            Matrix::from_diagonal(&Vector::from_vec(vec![4.0, 9.0])),
            Matrix::from_element(2, 1, 1.0),
        )
        .unwrap();
        let sep = separate_operators(&rom).unwrap();
        let eye = Matrix::identity(2, 2);
        assert!((&sep.modes - &eye).norm() < 1e-12);
        assert!((&sep.mass - &eye).norm() < 1e-12);
        assert!((&sep.stiffness - &rom.stiffness).norm() < 1e-12);
        assert!((&sep.damping - &rom.damping).norm() < 1e-12);
    }

    #[test]
    fn repeated_frequencies_separate() {
        let rom = MassNormalizedRom::new(
            Matrix::zeros(3, 3),
            Matrix::from_diagonal(&Vector::from_vec(vec![4.0, 4.0, 1.0])),
            Matrix::from_element(3, 1, 1.0),
        )
        .unwrap();
        let sep = separate_operators(&rom).unwrap();
        let back = crate::linalg::solve(&sep.mass, &sep.stiffness, "M").unwrap();
        assert!((back - &rom.stiffness).norm() < 1e-10);
    }

    #[test]
    fn negative_stiffness_not_separable() {
        let rom = MassNormalizedRom::new(
            Matrix::zeros(2, 2),
            Matrix::from_diagonal(&Vector::from_vec(vec![4.0, -1.0])),
            Matrix::from_element(2, 1, 1.0),
        )
        .unwrap();
        match separate_operators(&rom) {
            Err(Error::NotSeparable { spectrum }) => assert_eq!(spectrum.len(), 2),
            other => panic!("unexpected {other:?}"),
        }
        let rotation = MassNormalizedRom::new(
            Matrix::zeros(2, 2),
            Matrix::from_row_slice(2, 2, &[1.0, -2.0, 2.0, 1.0]),
            Matrix::from_element(2, 1, 1.0),
        )
        .unwrap();
        assert!(matches!(separate_operators(&rotation), Err(Error::NotSeparable { .. })));
    }

    #[test]
    fn defective_stiffness_rejected() {
        let rom = MassNormalizedRom::new(
            Matrix::zeros(2, 2),
            Matrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 2.0]),
            Matrix::from_element(2, 1, 1.0),
        )
        .unwrap();
        assert!(matches!(
            separate_operators(&rom),
            Err(Error::IllConditionedModes { .. })
        ));
    }

    #[test]
    fn nearest_spd_cases() {
        let spd = Matrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert!((nearest_spd(&spd, 0.0).unwrap() - &spd).norm() < 1e-12);
        let d = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let n = nearest_spd(&d, 0.0).unwrap();
        assert!((n - Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).norm() < 1e-15);
        let shifted = nearest_spd(&d, 0.5).unwrap();
        assert!((min_eigenvalue(&shifted) - 0.5).abs() < 1e-15);
        let mut bad = spd.clone();
        bad[(0, 1)] = f64::INFINITY;
        assert!(nearest_spd(&bad, 0.0).is_err());
    }

    #[test]
    fn default_grid_shape() {
        let g = default_lambda_grid();
        assert_eq!(g.len(), 14);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[13], 1.0);
    }
}
