//! Proper orthogonal decomposition and intrusive Galerkin reduction.

use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{condition_number, ensure_finite, solve, Matrix};
use crate::model::{SecondOrderModel, SecondOrderSystem};
use crate::opinf::MassNormalizedRom;

/// Mass matrices with a larger 2-norm condition number are treated as singular.
pub const MASS_CONDITION_LIMIT: f64 = 1e14;

/// Orthonormal projection basis with the singular-value spectrum it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis {
    vectors: Matrix,
    sigma: Vec<f64>,
}

/// How many leading singular vectors to keep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RankSelector {
    /// Fixed rank `r`.
    Rank(usize),
    /// Smallest `r` with `σ_{r+1} / σ_1 <= τ`.
    Tolerance(f64),
    /// Smallest `r` whose discarded energy `Σ_{i>r} σ_i² / Σ σ_i²` is at most `τ`.
    Energy(f64),
}

impl PodBasis {
    /// Builds a basis from explicit orthonormal columns.
    pub fn from_parts(vectors: Matrix, sigma: Vec<f64>) -> Result<Self> {
        if vectors.ncols() == 0 || vectors.ncols() > vectors.nrows() {
            return Err(Error::InvalidParameter(format!(
                "basis must have between 1 and {} columns, got {}",
                vectors.nrows(),
                vectors.ncols()
            )));
        }
        let gram = vectors.transpose() * &vectors;
        let defect = (gram - Matrix::identity(vectors.ncols(), vectors.ncols())).norm();
        if defect > 1e-10 {
            return Err(Error::InvalidInput(format!(
                "basis columns are not orthonormal (‖VᵀV - I‖ = {defect:.3e})"
            )));
        }
        Ok(Self { vectors, sigma })
    }

    /// The `n × n` identity basis (no reduction).
    pub fn identity(n: usize) -> Self {
        Self {
            vectors: Matrix::identity(n, n),
            sigma: vec![1.0; n],
        }
    }

    /// `n × r` matrix `V_r`.
    pub fn vectors(&self) -> &Matrix {
        &self.vectors
    }

    /// Full singular-value list, nonincreasing.
    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn rank(&self) -> usize {
        self.vectors.ncols()
    }

    /// Full-state dimension `n`.
    pub fn dim(&self) -> usize {
        self.vectors.nrows()
    }

    /// Keeps the leading `r` columns.
    pub fn truncated(&self, r: usize) -> Result<Self> {
        if r == 0 || r > self.rank() {
            return Err(Error::InvalidParameter(format!(
                "rank {r} outside [1, {}]",
                self.rank()
            )));
        }
        Ok(Self {
            vectors: self.vectors.columns(0, r).into_owned(),
            sigma: self.sigma.clone(),
        })
    }

    /// `V_r x̂`.
    pub fn lift(&self, reduced: &Matrix) -> Matrix {
        &self.vectors * reduced
    }

    /// `‖V_rᵀ V_r - I‖_F`.
    pub fn orthonormality_defect(&self) -> f64 {
        let r = self.rank();
        (self.vectors.transpose() * &self.vectors - Matrix::identity(r, r)).norm()
    }

    /// Two-column CSV `index,sigma_normalized` of `σ_i / σ_1`.
    pub fn write_spectrum_csv(&self, path: &Path) -> Result<()> {
        let first = self.sigma.first().copied().unwrap_or(1.0);
        let scale = if first > 0.0 { first } else { 1.0 };
        let mut out = String::from("index,sigma_normalized\n");
        for (i, s) in self.sigma.iter().enumerate() {
            out.push_str(&format!("{},{:.16e}\n", i + 1, s / scale));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

fn select_rank(sigma: &[f64], selector: RankSelector) -> Result<usize> {
    let max_rank = sigma.len();
    match selector {
        RankSelector::Rank(r) => {
            if r == 0 || r > max_rank {
                Err(Error::InvalidParameter(format!("rank {r} outside [1, {max_rank}]")))
            } else {
                Ok(r)
            }
        }
        RankSelector::Tolerance(tau) => {
            if !(tau > 0.0 && tau < 1.0) {
                return Err(Error::InvalidParameter(format!("tolerance {tau} outside (0, 1)")));
            }
            let s1 = sigma[0];
            Ok((1..=max_rank)
                .find(|&r| sigma.get(r).copied().unwrap_or(0.0) / s1 <= tau)
                .unwrap_or(max_rank))
        }
        RankSelector::Energy(tau) => {
            if !(tau > 0.0 && tau < 1.0) {
                return Err(Error::InvalidParameter(format!("tolerance {tau} outside (0, 1)")));
            }
            let total: f64 = sigma.iter().map(|s| s * s).sum();
            let mut tail = total;
            for (r, s) in sigma.iter().enumerate() {
                tail -= s * s;
                if tail.max(0.0) / total <= tau {
                    return Ok(r + 1);
                }
            }
            Ok(max_rank)
        }
    }
}

/// Leading left singular vectors of the snapshot matrix.
///
/// Each column is signed so that its entry of largest magnitude is nonnegative.
pub fn compute_basis(x: &Matrix, selector: RankSelector) -> Result<PodBasis> {
    ensure_finite("snapshot matrix", x)?;
    if x.is_empty() || x.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateInput("snapshot matrix is zero".into()));
    }
    let svd = x.clone().svd(true, false);
    let u = svd
        .u
        .ok_or_else(|| Error::Numerical("SVD did not return left singular vectors".into()))?;
    let k = svd.singular_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sigma: Vec<f64> = order.iter().map(|&i| svd.singular_values[i].max(0.0)).collect();

    let r = select_rank(&sigma, selector)?;
    let mut vectors = Matrix::zeros(x.nrows(), r);
    for (dst, &src) in order.iter().take(r).enumerate() {
        let mut col = u.column(src).into_owned();
        let pivot = col
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |best, (i, v)| if v.abs() > best.1.abs() { (i, *v) } else { best })
            .1;
        if pivot < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(dst, &col);
    }
    Ok(PodBasis { vectors, sigma })
}

/// `‖X - V_r V_rᵀ X‖_F`.
pub fn projection_error(x: &Matrix, basis: &PodBasis) -> Result<f64> {
    let v = basis.vectors();
    if v.nrows() != x.nrows() {
        return Err(Error::InvalidInput(format!(
            "basis has {} rows, snapshots have {}",
            v.nrows(),
            x.nrows()
        )));
    }
    let coeffs = v.transpose() * x;
    Ok((x - v * coeffs).norm())
}

/// Galerkin projection `Ṽᵀ M V`, `Vᵀ E V`, `Vᵀ K V`, `Vᵀ B`.
pub fn intrusive_reduce(system: &SecondOrderSystem, basis: &PodBasis) -> Result<SecondOrderSystem> {
    let v = basis.vectors();
    if v.nrows() != system.n() {
        return Err(Error::InvalidInput(format!(
            "basis has {} rows, system has dimension {}",
            v.nrows(),
            system.n()
        )));
    }
    let vt = v.transpose();
    let congruence = |a: &Matrix| &vt * a * v;
    SecondOrderSystem::new(
        congruence(system.mass()),
        congruence(system.damping()),
        congruence(system.stiffness()),
        &vt * system.input(),
        format!("{}-pod{}", system.label(), basis.rank()),
    )
}

/// `(M̃⁻¹Ẽ, M̃⁻¹K̃, M̃⁻¹B̃)`: the identity-mass form of a reduced system.
pub fn mass_normalized_form(reduced: &SecondOrderSystem) -> Result<MassNormalizedRom> {
    let cond = condition_number(reduced.mass());
    if !(cond <= MASS_CONDITION_LIMIT) {
        return Err(Error::SingularOperator(format!(
            "reduced mass matrix has condition number {cond:.3e}"
        )));
    }
    let m = reduced.mass();
    MassNormalizedRom::new(
        solve(m, reduced.damping(), "reduced mass")?,
        solve(m, reduced.stiffness(), "reduced mass")?,
        solve(m, reduced.input(), "reduced mass")?,
    )
}
