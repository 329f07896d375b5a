//! Snapshot matrices, their projection onto a reduced basis, and the
//! regression data matrices built from them.
//!
//! Snapshots are stored column-wise at `t_1, ..., t_N`; the initial state at
//! `t_0` is not part of the data.

mod csv;

use std::sync::Arc;

pub use self::csv::{load_csv, save_csv, TrajectoryFiles};

use crate::error::{Error, Result};
use crate::linalg::{ensure_finite, Matrix};
use crate::pod::PodBasis;

/// Time grid plus displacement, derivative, input and force snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryData {
    times: Vec<f64>,
    displacement: Matrix,
    velocity: Option<Matrix>,
    acceleration: Option<Matrix>,
    input: Option<Matrix>,
    force: Option<Matrix>,
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::InvalidInput("trajectory has no snapshots".into()));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidInput("non-finite time stamp".into()));
    }
    if times.len() < 2 {
        return Ok(());
    }
    let n = times.len();
    let mean = (times[n - 1] - times[0]) / (n - 1) as f64;
    if !(mean > 0.0) {
        return Err(Error::InvalidInput("times must be strictly increasing".into()));
    }
    let scale = times[0].abs().max(times[n - 1].abs());
    let tol = 1e-12 * mean + 8.0 * f64::EPSILON * scale;
    for (k, w) in times.windows(2).enumerate() {
        let step = w[1] - w[0];
        if !(step > 0.0) {
            return Err(Error::InvalidInput(format!(
                "times must be strictly increasing (index {})",
                k + 1
            )));
        }
        if (step - mean).abs() > tol {
            return Err(Error::InvalidInput(format!(
                "non-uniform time step at index {}: {step} vs mean {mean}",
                k + 1
            )));
        }
    }
    Ok(())
}

impl TrajectoryData {
    pub fn new(times: Vec<f64>, displacement: Matrix) -> Result<Self> {
        check_times(&times)?;
        if displacement.ncols() != times.len() {
            return Err(Error::InvalidInput(format!(
                "displacement has {} columns for {} time stamps",
                displacement.ncols(),
                times.len()
            )));
        }
        if displacement.nrows() == 0 {
            return Err(Error::InvalidInput("displacement has no rows".into()));
        }
        ensure_finite("X", &displacement)?;
        Ok(Self {
            times,
            displacement,
            velocity: None,
            acceleration: None,
            input: None,
            force: None,
        })
    }

    fn check_block(&self, name: &str, m: &Matrix, rows: Option<usize>) -> Result<()> {
        if m.ncols() != self.len() {
            return Err(Error::InvalidInput(format!(
                "{name} has {} columns, expected {}",
                m.ncols(),
                self.len()
            )));
        }
        if let Some(rows) = rows {
            if m.nrows() != rows {
                return Err(Error::InvalidInput(format!(
                    "{name} has {} rows, expected {rows}",
                    m.nrows()
                )));
            }
        }
        ensure_finite(name, m)
    }

    pub fn with_velocity(mut self, xd: Matrix) -> Result<Self> {
        self.check_block("Xd", &xd, Some(self.dim()))?;
        self.velocity = Some(xd);
        Ok(self)
    }

    pub fn with_acceleration(mut self, xdd: Matrix) -> Result<Self> {
        self.check_block("Xdd", &xdd, Some(self.dim()))?;
        self.acceleration = Some(xdd);
        Ok(self)
    }

    pub fn with_input(mut self, u: Matrix) -> Result<Self> {
        self.check_block("U", &u, None)?;
        self.input = Some(u);
        Ok(self)
    }

    /// Force snapshots. Rows are free here; [`project`] checks them against the basis.
    pub fn with_force(mut self, f: Matrix) -> Result<Self> {
        self.check_block("F", &f, None)?;
        self.force = Some(f);
        Ok(self)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Number of snapshots `N`.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// State dimension (row count of `X`).
    pub fn dim(&self) -> usize {
        self.displacement.nrows()
    }

    /// Mean time step; `None` for a single snapshot.
    pub fn dt(&self) -> Option<f64> {
        let n = self.len();
        (n >= 2).then(|| (self.times[n - 1] - self.times[0]) / (n - 1) as f64)
    }

    pub fn displacement(&self) -> &Matrix {
        &self.displacement
    }
    pub fn velocity(&self) -> Option<&Matrix> {
        self.velocity.as_ref()
    }
    pub fn acceleration(&self) -> Option<&Matrix> {
        self.acceleration.as_ref()
    }
    pub fn input(&self) -> Option<&Matrix> {
        self.input.as_ref()
    }
    pub fn force(&self) -> Option<&Matrix> {
        self.force.as_ref()
    }

    /// The first `count` snapshots.
    pub fn head(&self, count: usize) -> Result<Self> {
        if count == 0 || count > self.len() {
            return Err(Error::InvalidParameter(format!(
                "cannot take {count} of {} snapshots",
                self.len()
            )));
        }
        let cut = |m: &Matrix| m.columns(0, count).into_owned();
        Ok(Self {
            times: self.times[..count].to_vec(),
            displacement: cut(&self.displacement),
            velocity: self.velocity.as_ref().map(cut),
            acceleration: self.acceleration.as_ref().map(cut),
            input: self.input.as_ref().map(cut),
            force: self.force.as_ref().map(cut),
        })
    }

    /// Snapshots with `t <= t_end` (with a small allowance for accumulated round-off).
    pub fn until(&self, t_end: f64) -> Result<Self> {
        let slack = self.dt().unwrap_or(0.0) * 1e-6;
        let count = self.times.iter().take_while(|&&t| t <= t_end + slack).count();
        self.head(count)
    }

    /// Replaces the derivative blocks by finite-difference estimates from `X`.
    pub fn with_finite_difference_derivatives(self) -> Result<Self> {
        let dt = self
            .dt()
            .ok_or_else(|| Error::InsufficientData("need at least 5 snapshots".into()))?;
        let (xd, xdd) = finite_difference_derivatives(&self.displacement, dt)?;
        self.with_velocity(xd)?.with_acceleration(xdd)
    }
}

/// Trajectory data expressed in reduced coordinates `V_rᵀ X`.
#[derive(Debug, Clone)]
pub struct ReducedTrajectoryData {
    data: TrajectoryData,
    basis: Arc<PodBasis>,
}

impl ReducedTrajectoryData {
    pub fn data(&self) -> &TrajectoryData {
        &self.data
    }
    pub fn basis(&self) -> &Arc<PodBasis> {
        &self.basis
    }
    /// Reduced dimension `r`.
    pub fn rank(&self) -> usize {
        self.data.dim()
    }
}

/// Left-multiplies every state and force block by `V_rᵀ`; inputs are copied.
pub fn project(data: &TrajectoryData, basis: &Arc<PodBasis>) -> Result<ReducedTrajectoryData> {
    let v = basis.vectors();
    if v.nrows() != data.dim() {
        return Err(Error::InvalidInput(format!(
            "basis has {} rows but data has dimension {}",
            v.nrows(),
            data.dim()
        )));
    }
    let vt = v.transpose();
    let mut reduced = TrajectoryData::new(data.times.clone(), &vt * &data.displacement)?;
    if let Some(xd) = &data.velocity {
        reduced = reduced.with_velocity(&vt * xd)?;
    }
    if let Some(xdd) = &data.acceleration {
        reduced = reduced.with_acceleration(&vt * xdd)?;
    }
    if let Some(u) = &data.input {
        reduced = reduced.with_input(u.clone())?;
    }
    if let Some(f) = &data.force {
        if f.nrows() != v.nrows() {
            return Err(Error::InvalidInput(format!(
                "force data has {} rows, expected {}",
                f.nrows(),
                v.nrows()
            )));
        }
        reduced = reduced.with_force(&vt * f)?;
    }
    Ok(ReducedTrajectoryData {
        data: reduced,
        basis: Arc::clone(basis),
    })
}

fn stack_rows(blocks: &[&Matrix]) -> Matrix {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks[0].ncols();
    let mut out = Matrix::zeros(rows, cols);
    let mut offset = 0;
    for b in blocks {
        out.rows_mut(offset, b.nrows()).copy_from(b);
        offset += b.nrows();
    }
    out
}

/// Data matrix `[Ẋ̂; X̂; U]` with right-hand side `Ẍ̂`.
pub fn assemble_opinf_data(rdata: &ReducedTrajectoryData) -> Result<(Matrix, Matrix)> {
    let d = &rdata.data;
    let xd = d.velocity().ok_or(Error::MissingData("velocity snapshots (Xd)"))?;
    let xdd = d
        .acceleration()
        .ok_or(Error::MissingData("acceleration snapshots (Xdd)"))?;
    let u = d.input().ok_or(Error::MissingData("input snapshots (U)"))?;
    Ok((stack_rows(&[xd, d.displacement(), u]), xdd.clone()))
}

/// Data matrix `[Ẍ̂; Ẋ̂; X̂]` with right-hand side `F̂ = V_rᵀ F`.
pub fn assemble_force_data(rdata: &ReducedTrajectoryData) -> Result<(Matrix, Matrix)> {
    let d = &rdata.data;
    let f = d.force().ok_or(Error::MissingData("force snapshots (F)"))?;
    let xd = d.velocity().ok_or(Error::MissingData("velocity snapshots (Xd)"))?;
    let xdd = d
        .acceleration()
        .ok_or(Error::MissingData("acceleration snapshots (Xdd)"))?;
    Ok((stack_rows(&[xdd, xd, d.displacement()]), f.clone()))
}

/// Second-order finite differences: central in the interior, one-sided at both ends.
pub fn finite_difference_derivatives(x: &Matrix, dt: f64) -> Result<(Matrix, Matrix)> {
    let n = x.ncols();
    if n < 5 {
        return Err(Error::InsufficientData(format!(
            "finite differences need at least 5 snapshots, got {n}"
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
    }
    let mut xd = Matrix::zeros(x.nrows(), n);
    let mut xdd = Matrix::zeros(x.nrows(), n);
    let (h, h2) = (dt, dt * dt);
    let c = |j: usize| x.column(j);
    for j in 1..n - 1 {
        xd.set_column(j, &((c(j + 1) - c(j - 1)) / (2.0 * h)));
        xdd.set_column(j, &((c(j + 1) - c(j) * 2.0 + c(j - 1)) / h2));
    }
    let l = n - 1;
    xd.set_column(0, &((c(0) * -3.0 + c(1) * 4.0 - c(2)) / (2.0 * h)));
    xd.set_column(l, &((c(l) * 3.0 - c(l - 1) * 4.0 + c(l - 2)) / (2.0 * h)));
    xdd.set_column(0, &((c(0) * 2.0 - c(1) * 5.0 + c(2) * 4.0 - c(3)) / h2));
    xdd.set_column(l, &((c(l) * 2.0 - c(l - 1) * 5.0 + c(l - 2) * 4.0 - c(l - 3)) / h2));
    Ok((xd, xdd))
}
