//! Second-order mechanical models `M ẍ + E ẋ + K x = B u`.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::linalg::{ensure_finite, symmetrize, Matrix, Vector};
use crate::mtx::{self, Symmetry};

/// Anything the time integrator can march: mass, damping, stiffness and an optional input map.
pub trait SecondOrderModel {
    fn mass(&self) -> &Matrix;
    fn damping(&self) -> &Matrix;
    fn stiffness(&self) -> &Matrix;
    fn input_map(&self) -> Option<&Matrix>;

    fn dim(&self) -> usize {
        self.mass().nrows()
    }
}

/// Full or reduced mechanical model with symmetric mass, damping and stiffness.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderSystem {
    mass: Matrix,
    damping: Matrix,
    stiffness: Matrix,
    input: Matrix,
    label: String,
}

impl SecondOrderSystem {
    /// Checks shapes and symmetrizes `mass`, `damping` and `stiffness`.
    pub fn new(
        mass: Matrix,
        damping: Matrix,
        stiffness: Matrix,
        input: Matrix,
        label: impl Into<String>,
    ) -> Result<Self> {
        let n = mass.nrows();
        if n == 0 {
            return Err(Error::InvalidInput("system dimension must be positive".into()));
        }
        for (name, a) in [("M", &mass), ("E", &damping), ("K", &stiffness)] {
            if a.nrows() != n || a.ncols() != n {
                return Err(Error::InvalidInput(format!(
                    "{name} is {}x{}, expected {n}x{n}",
                    a.nrows(),
                    a.ncols()
                )));
            }
            ensure_finite(name, a)?;
        }
        if input.nrows() != n || input.ncols() == 0 {
            return Err(Error::InvalidInput(format!(
                "B is {}x{}, expected {n} rows and at least one column",
                input.nrows(),
                input.ncols()
            )));
        }
        ensure_finite("B", &input)?;
        Ok(Self {
            mass: symmetrize(&mass),
            damping: symmetrize(&damping),
            stiffness: symmetrize(&stiffness),
            input,
            label: label.into(),
        })
    }

    pub fn n(&self) -> usize {
        self.mass.nrows()
    }

    /// Number of inputs `m`.
    pub fn inputs(&self) -> usize {
        self.input.ncols()
    }

    pub fn input(&self) -> &Matrix {
        &self.input
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// `f = B u`.
    pub fn force_at(&self, u: &Vector) -> Result<Vector> {
        if u.len() != self.inputs() {
            return Err(Error::InvalidParameter(format!(
                "input vector has length {}, expected {}",
                u.len(),
                self.inputs()
            )));
        }
        Ok(&self.input * u)
    }
}

impl SecondOrderModel for SecondOrderSystem {
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

/// `E = α_R M + β_R K`.
pub fn rayleigh_damping(mass: &Matrix, stiffness: &Matrix, alpha_r: f64, beta_r: f64) -> Result<Matrix> {
    if mass.shape() != stiffness.shape() || !mass.is_square() {
        return Err(Error::InvalidParameter(format!(
            "rayleigh damping needs equal square matrices, got {:?} and {:?}",
            mass.shape(),
            stiffness.shape()
        )));
    }
    Ok(mass * alpha_r + stiffness * beta_r)
}

/// Fixed–fixed spring chain: `n` point masses joined by `n + 1` springs,
/// the outer two anchored to ground. One input column per entry of `input_nodes`.
pub fn build_mass_spring_chain(
    masses: &[f64],
    stiffnesses: &[f64],
    alpha_r: f64,
    beta_r: f64,
    input_nodes: &[usize],
) -> Result<SecondOrderSystem> {
    let n = masses.len();
    if n == 0 {
        return Err(Error::InvalidParameter("chain needs at least one mass".into()));
    }
    if stiffnesses.len() != n + 1 {
        return Err(Error::InvalidParameter(format!(
            "chain of {n} masses needs {} springs, got {}",
            n + 1,
            stiffnesses.len()
        )));
    }
    if let Some(bad) = masses.iter().chain(stiffnesses).find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "masses and stiffnesses must be positive, got {bad}"
        )));
    }
    if !(alpha_r >= 0.0 && beta_r >= 0.0) {
        return Err(Error::InvalidParameter(
            "Rayleigh coefficients must be nonnegative".into(),
        ));
    }
    if input_nodes.is_empty() {
        return Err(Error::InvalidParameter("at least one input node is required".into()));
    }
    if let Some(bad) = input_nodes.iter().find(|&&i| i >= n) {
        return Err(Error::InvalidParameter(format!(
            "input node {bad} outside [0, {n})"
        )));
    }

    let mass = Matrix::from_diagonal(&Vector::from_column_slice(masses));
    let mut stiffness = Matrix::zeros(n, n);
    for i in 0..n {
        stiffness[(i, i)] = stiffnesses[i] + stiffnesses[i + 1];
        if i + 1 < n {
            stiffness[(i, i + 1)] = -stiffnesses[i + 1];
            stiffness[(i + 1, i)] = -stiffnesses[i + 1];
        }
    }
    let damping = rayleigh_damping(&mass, &stiffness, alpha_r, beta_r)?;
    let mut input = Matrix::zeros(n, input_nodes.len());
    for (col, &node) in input_nodes.iter().enumerate() {
        input[(node, col)] = 1.0;
    }
    SecondOrderSystem::new(mass, damping, stiffness, input, format!("chain-{n}"))
}

/// Chain with identical masses and springs.
pub fn uniform_chain(
    n: usize,
    mass: f64,
    stiffness: f64,
    alpha_r: f64,
    beta_r: f64,
    input_nodes: &[usize],
) -> Result<SecondOrderSystem> {
    build_mass_spring_chain(&vec![mass; n], &vec![stiffness; n + 1], alpha_r, beta_r, input_nodes)
}

/// One matrix file per operator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemFiles {
    pub mass: PathBuf,
    pub damping: PathBuf,
    pub stiffness: PathBuf,
    pub input: PathBuf,
}

impl SystemFiles {
    /// `M.mtx`, `E.mtx`, `K.mtx`, `B.mtx` inside `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            mass: dir.join("M.mtx"),
            damping: dir.join("E.mtx"),
            stiffness: dir.join("K.mtx"),
            input: dir.join("B.mtx"),
        }
    }
}

pub fn load_system(files: &SystemFiles) -> Result<SecondOrderSystem> {
    let mass = mtx::read_matrix(&files.mass)?;
    let damping = mtx::read_matrix(&files.damping)?;
    let stiffness = mtx::read_matrix(&files.stiffness)?;
    let input = mtx::read_matrix(&files.input)?;
    let n = mass.nrows();
    for (path, a) in [(&files.mass, &mass), (&files.damping, &damping), (&files.stiffness, &stiffness)] {
        if a.shape() != (n, n) {
            return Err(Error::InvalidInput(format!(
                "{} is {}x{}, expected {n}x{n} to match the mass matrix",
                path.display(),
                a.nrows(),
                a.ncols()
            )));
        }
    }
    if input.nrows() != n {
        return Err(Error::InvalidInput(format!(
            "{} has {} rows, expected {n}",
            files.input.display(),
            input.nrows()
        )));
    }
    let label = files
        .mass
        .parent()
        .and_then(|p| p.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "loaded".into());
    SecondOrderSystem::new(mass, damping, stiffness, input, label)
}

pub fn save_system(system: &SecondOrderSystem, files: &SystemFiles) -> Result<()> {
    mtx::write_matrix(&files.mass, system.mass(), Symmetry::Symmetric)?;
    mtx::write_matrix(&files.damping, system.damping(), Symmetry::Symmetric)?;
    mtx::write_matrix(&files.stiffness, system.stiffness(), Symmetry::Symmetric)?;
    mtx::write_matrix(&files.input, system.input(), Symmetry::General)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{min_eigenvalue, sym_eigen_sorted};

    #[test]
    fn single_mass_chain() {
        let s = build_mass_spring_chain(&[1.0], &[1.0, 1.0], 0.0, 0.0, &[0]).unwrap();
        assert_eq!(s.mass()[(0, 0)], 1.0);
        assert_eq!(s.stiffness()[(0, 0)], 2.0);
        assert_eq!(s.damping()[(0, 0)], 0.0);
        assert_eq!(s.input()[(0, 0)], 1.0);
    }

    #[test]
    fn two_mass_chain_spectrum() {
        let s = build_mass_spring_chain(&[1.0, 1.0], &[1.0, 1.0, 1.0], 0.0, 0.0, &[1]).unwrap();
        assert_eq!(*s.stiffness(), Matrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]));
        let (vals, _) = sym_eigen_sorted(s.stiffness());
        assert!((vals[0] - 1.0).abs() < 1e-14);
        assert!((vals[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn uniform_chain_definite() {
        let s = uniform_chain(3, 1.0, 1.0, 0.1, 0.01, &[0]).unwrap();
        assert!(min_eigenvalue(s.stiffness()) > 0.0);
        assert!(min_eigenvalue(s.mass()) > 0.0);
        assert!(min_eigenvalue(s.damping()) >= -1e-12);
        assert_eq!(s.stiffness(), &s.stiffness().transpose());
    }

    #[test]
    fn invalid_chain_parameters() {
        assert!(matches!(
            build_mass_spring_chain(&[1.0, 0.0], &[1.0; 3], 0.0, 0.0, &[0]),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            build_mass_spring_chain(&[1.0], &[1.0, -1.0], 0.0, 0.0, &[0]),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            build_mass_spring_chain(&[1.0, 1.0], &[1.0; 3], 0.0, 0.0, &[2]),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn rayleigh_cases() {
        let m = Matrix::from_row_slice(1, 1, &[2.0]);
        let k = Matrix::from_row_slice(1, 1, &[3.0]);
        assert_eq!(rayleigh_damping(&m, &k, 0.0, 0.0).unwrap()[(0, 0)], 0.0);
        let e = rayleigh_damping(&m, &k, 0.01, 1e-4).unwrap();
        assert!((e[(0, 0)] - 0.0203).abs() < 1e-15);
        let k2 = Matrix::from_row_slice(2, 2, &[4.0, -1.0, -1.0, 3.0]);
        let e2 = rayleigh_damping(&Matrix::identity(2, 2), &k2, 0.0, 1e-6).unwrap();
        assert_eq!(e2, &k2 * 1e-6);
        assert!(rayleigh_damping(&Matrix::identity(2, 2), &k, 0.0, 1.0).is_err());
    }

    #[test]
    fn rayleigh_is_linear_in_alpha() {
        let s = uniform_chain(4, 2.0, 5.0, 0.0, 0.0, &[0]).unwrap();
        let (m, k) = (s.mass(), s.stiffness());
        let lhs = rayleigh_damping(m, k, 0.3 + 0.2, 0.7).unwrap();
        let rhs = rayleigh_damping(m, k, 0.3, 0.7).unwrap() + rayleigh_damping(m, k, 0.2, 0.0).unwrap();
        assert!((lhs - rhs).norm() < 1e-14);
    }

    #[test]
    fn force_at_applies_input_map() {
        let s = SecondOrderSystem::new(
            Matrix::identity(2, 2),
            Matrix::zeros(2, 2),
            Matrix::identity(2, 2),
            Matrix::from_row_slice(2, 1, &[1.0, 0.0]),
            "t",
        )
        .unwrap();
        assert_eq!(s.force_at(&Vector::from_vec(vec![3.0])).unwrap().as_slice(), &[3.0, 0.0]);
        assert_eq!(s.force_at(&Vector::from_vec(vec![0.0])).unwrap().as_slice(), &[0.0, 0.0]);
        assert!(matches!(
            s.force_at(&Vector::from_vec(vec![1.0, 2.0])),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn constructor_symmetrizes() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 0.2, 0.0, 1.0]);
        let s = SecondOrderSystem::new(
            m,
            Matrix::zeros(2, 2),
            Matrix::identity(2, 2),
            Matrix::from_column_slice(2, 1, &[1.0, 0.0]),
            "t",
        )
        .unwrap();
        assert_eq!(s.mass()[(0, 1)], 0.1);
        assert_eq!(s.mass()[(1, 0)], 0.1);
    }
}
