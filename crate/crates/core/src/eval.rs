//! Comparing full-order and reduced models.

use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{ensure_finite, ensure_square, Matrix};
use crate::opinf::MassNormalizedRom;
use crate::pod::MASS_CONDITION_LIMIT;

pub const DEFAULT_STABILITY_TOL: f64 = 1e-10;

/// Relative state error over time.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSeries {
    pub times: Vec<f64>,
    pub eps: Vec<f64>,
    pub max_eps: f64,
    /// End of the training horizon, if the window extends past it.
    pub phase_split: Option<f64>,
}

impl ErrorSeries {
    /// CSV `t,eps,phase` with `phase` either `train` or `test`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("t,eps,phase\n");
        for (t, e) in self.times.iter().zip(&self.eps) {
            let phase = match self.phase_split {
                Some(split) if *t > split * (1.0 + 1e-12) => "test",
                _ => "train",
            };
            out.push_str(&format!("{t:.16e},{e:.16e},{phase}\n"));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// `ε(t_i) = ‖x(t_i) - x̂(t_i)‖₂ / max_t ‖x(t)‖₂` with the ROM state already lifted to full dimension.
pub fn relative_error(
    times: &[f64],
    x_fom: &Matrix,
    x_rom_lifted: &Matrix,
    phase_split: Option<f64>,
) -> Result<ErrorSeries> {
    if x_fom.shape() != x_rom_lifted.shape() {
        return Err(Error::InvalidInput(format!(
            "trajectory shapes differ: full-order {}x{} ({} snapshots) vs reduced {}x{} ({} snapshots)",
            x_fom.nrows(),
            x_fom.ncols(),
            x_fom.ncols(),
            x_rom_lifted.nrows(),
            x_rom_lifted.ncols(),
            x_rom_lifted.ncols()
        )));
    }
    if times.len() != x_fom.ncols() {
        return Err(Error::InvalidInput(format!(
            "{} time stamps for {} snapshots",
            times.len(),
            x_fom.ncols()
        )));
    }
    let scale = x_fom.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    if !(scale > 0.0) {
        return Err(Error::DegenerateInput("full-order trajectory is identically zero".into()));
    }
    let eps: Vec<f64> = x_fom
        .column_iter()
        .zip(x_rom_lifted.column_iter())
        .map(|(a, b)| (a - b).norm() / scale)
        .collect();
    let max_eps = eps.iter().copied().fold(0.0, f64::max);
    Ok(ErrorSeries {
        times: times.to_vec(),
        eps,
        max_eps,
        phase_split,
    })
}

/// Frobenius distances between intrusive and inferred identity-mass operators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorCloseness {
    pub damping: f64,
    pub stiffness: f64,
    pub input: f64,
    pub relative_damping: f64,
    pub relative_stiffness: f64,
    pub relative_input: f64,
}

fn same_basis(a: Option<&Arc<crate::pod::PodBasis>>, b: Option<&Arc<crate::pod::PodBasis>>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => Arc::ptr_eq(a, b) || a.vectors() == b.vectors(),
        _ => true,
    }
}

pub fn operator_closeness(oracle: &MassNormalizedRom, inferred: &MassNormalizedRom) -> Result<OperatorCloseness> {
    use crate::model::SecondOrderModel;
    if !same_basis(oracle.basis(), inferred.basis()) {
        return Err(Error::InvalidComparison("models were reduced with different bases".into()));
    }
    if oracle.rank() != inferred.rank() || oracle.input().shape() != inferred.input().shape() {
        return Err(Error::InvalidComparison(format!(
            "operator shapes differ: rank {} vs {}, inputs {:?} vs {:?}",
            oracle.rank(),
            inferred.rank(),
            oracle.input().shape(),
            inferred.input().shape()
        )));
    }
    let rel = |d: f64, reference: &Matrix| {
        let n = reference.norm();
        if n > 0.0 {
            d / n
        } else {
            d
        }
    };
    let damping = (oracle.damping() - inferred.damping()).norm();
    let stiffness = (oracle.stiffness() - inferred.stiffness()).norm();
    let input = (oracle.input() - inferred.input()).norm();
    Ok(OperatorCloseness {
        damping,
        stiffness,
        input,
        relative_damping: rel(damping, oracle.damping()),
        relative_stiffness: rel(stiffness, oracle.stiffness()),
        relative_input: rel(input, oracle.input()),
    })
}

/// Eigenvalues of `λ² M + λ E + K` from the companion linearization
/// `[[0, I], [-K, -E]] - λ diag(I, M)`.
///
/// The pencil is solved with the QZ algorithm, so `M` is never inverted: stiff
/// or nearly singular masses would otherwise spread the spectrum over many
/// orders of magnitude and swamp the small eigenvalues in round-off.
pub fn pencil_spectrum(m: &Matrix, e: &Matrix, k: &Matrix) -> Result<Vec<Complex64>> {
    ensure_square("M", m)?;
    let r = m.nrows();
    if e.shape() != (r, r) || k.shape() != (r, r) {
        return Err(Error::InvalidParameter(format!(
            "pencil matrices differ in size: {:?}, {:?}, {:?}",
            m.shape(),
            e.shape(),
            k.shape()
        )));
    }
    for (name, a) in [("M", m), ("E", e), ("K", k)] {
        ensure_finite(name, a)?;
    }
    if crate::linalg::condition_number(m) > MASS_CONDITION_LIMIT {
        return Err(Error::SingularOperator("mass matrix of the pencil".into()));
    }
    // A common scale leaves the eigenvalues unchanged and keeps the identity
    // blocks commensurate with the operators.
    let scale = m.norm().max(e.norm()).max(k.norm());
    let (m, e, k) = (m / scale, e / scale, k / scale);
    let a = faer::Mat::<f64>::from_fn(2 * r, 2 * r, |i, j| match (i < r, j < r) {
        (true, true) => 0.0,
        (true, false) => f64::from(i == j - r),
        (false, true) => -k[(i - r, j)],
        (false, false) => -e[(i - r, j - r)],
    });
    let b = faer::Mat::<f64>::from_fn(2 * r, 2 * r, |i, j| match (i < r, j < r) {
        (true, true) => f64::from(i == j),
        (false, false) => m[(i - r, j - r)],
        _ => 0.0,
    });
    let n = 2 * r;
    let (mut a, mut b) = (a, b);
    let mut alpha_re = faer::diag::Diag::<f64>::zeros(n);
    let mut alpha_im = faer::diag::Diag::<f64>::zeros(n);
    let mut beta = faer::diag::Diag::<f64>::zeros(n);
    let no = faer::linalg::evd::ComputeEigenvectors::No;
    let scratch = faer::linalg::gevd::gevd_scratch::<f64>(n, no, no, faer::Par::Seq, Default::default());
    let mut buffer = faer::dyn_stack::MemBuffer::new(scratch);
    faer::linalg::gevd::gevd_real(
        a.as_mut(),
        b.as_mut(),
        alpha_re.as_mut(),
        alpha_im.as_mut(),
        beta.as_mut(),
        None,
        None,
        faer::Par::Seq,
        faer::dyn_stack::MemStack::new(&mut buffer),
        Default::default(),
    )
    .map_err(|err| Error::Numerical(format!("QZ iteration failed: {err:?}")))?;
    let (alpha_re, alpha_im, beta) = (alpha_re.column_vector(), alpha_im.column_vector(), beta.column_vector());
    Ok((0..n)
        .map(|i| Complex64::new(alpha_re[i], alpha_im[i]) / beta[i])
        .collect())
}

/// `true` when every pencil eigenvalue has real part `<= tol`.
pub fn is_stable(m: &Matrix, e: &Matrix, k: &Matrix, tol: f64) -> Result<bool> {
    Ok(pencil_spectrum(m, e, k)?.iter().all(|l| l.re <= tol))
}
