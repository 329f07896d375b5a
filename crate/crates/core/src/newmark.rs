//! Implicit HHT-α / Newmark-β time integration of second-order models.
//!
//! With `c = 1 + α` one step solves
//!
//! ```text
//! M a₁ + E (c v₁ - α v₀) + K (c x₁ - α x₀) = c f₁ - α f₀
//! x₁ = x₀ + Δt v₀ + Δt² ((½ - β) a₀ + β a₁)
//! v₁ = v₀ + Δt ((1 - γ) a₀ + γ a₁)
//! ```
//!
//! for `a₁` through the effective matrix `M + cγΔt E + cβΔt² K`, which is
//! factored once per simulation.

use nalgebra::{Dyn, LU};

use crate::error::{Error, Result};
use crate::linalg::{factor, solve, Matrix, Vector};
use crate::model::SecondOrderModel;
use crate::snapshots::TrajectoryData;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_end: f64,
    pub gamma: f64,
    pub beta: f64,
    pub alpha: f64,
}

impl IntegratorConfig {
    /// Average constant acceleration: `γ = 1/2`, `β = 1/4`, `α = 0`.
    pub fn new(dt: f64, t_end: f64) -> Result<Self> {
        let cfg = Self {
            dt,
            t_end,
            gamma: 0.5,
            beta: 0.25,
            alpha: 0.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// HHT with `γ = (1 - 2α)/2`, `β = (1 - α)²/4`.
    pub fn hht(dt: f64, t_end: f64, alpha: f64) -> Result<Self> {
        let cfg = Self {
            dt,
            t_end,
            gamma: (1.0 - 2.0 * alpha) / 2.0,
            beta: (1.0 - alpha).powi(2) / 4.0,
            alpha,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_newmark_parameters(mut self, gamma: f64, beta: f64) -> Result<Self> {
        self.gamma = gamma;
        self.beta = beta;
        self.validate()?;
        Ok(self)
    }

    pub fn with_t_end(mut self, t_end: f64) -> Result<Self> {
        self.t_end = t_end;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("time step must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= self.dt * (1.0 - 1e-9) && self.t_end.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "horizon {} shorter than one step {}",
                self.t_end, self.dt
            )));
        }
        if !(-1.0 / 3.0 - 1e-12..=0.0).contains(&self.alpha) {
            return Err(Error::InvalidParameter(format!(
                "alpha {} outside [-1/3, 0]",
                self.alpha
            )));
        }
        if !(self.gamma.is_finite() && self.beta.is_finite()) {
            return Err(Error::InvalidParameter("gamma and beta must be finite".into()));
        }
        Ok(())
    }

    /// `N = floor(t_end / Δt)`, tolerant of round-off in the ratio.
    pub fn steps(&self) -> usize {
        let ratio = self.t_end / self.dt;
        let nearest = ratio.round();
        if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
            nearest as usize
        } else {
            ratio.floor() as usize
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorState {
    pub x: Vector,
    pub v: Vector,
    pub a: Vector,
    pub t: f64,
}

/// Right-hand side of a simulation: an input signal mapped through `B`, or a direct force.
#[derive(Clone, Copy)]
pub enum Excitation<'a> {
    Input(&'a (dyn Fn(f64) -> Vector + Sync)),
    Force(&'a (dyn Fn(f64) -> Vector + Sync)),
}

/// Solves `M a₀ = f₀ - E v₀ - K x₀`.
pub fn initial_acceleration<S: SecondOrderModel + ?Sized>(
    model: &S,
    x0: &Vector,
    v0: &Vector,
    f0: &Vector,
) -> Result<Vector> {
    let n = model.dim();
    check_len("x0", x0, n)?;
    check_len("v0", v0, n)?;
    check_len("f0", f0, n)?;
    let rhs = f0 - model.damping() * v0 - model.stiffness() * x0;
    let a = solve(model.mass(), &Matrix::from_column_slice(n, 1, rhs.as_slice()), "mass matrix")?;
    Ok(a.column(0).into_owned())
}

fn check_len(name: &str, v: &Vector, n: usize) -> Result<()> {
    if v.len() == n {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} has length {}, expected {n}", v.len())))
    }
}

/// A model paired with its factored effective matrix.
pub struct Integrator<'m, S: SecondOrderModel + ?Sized> {
    model: &'m S,
    config: IntegratorConfig,
    effective: LU<f64, Dyn, Dyn>,
}

impl<'m, S: SecondOrderModel + ?Sized> Integrator<'m, S> {
    pub fn new(model: &'m S, config: IntegratorConfig) -> Result<Self> {
        config.validate()?;
        let c = 1.0 + config.alpha;
        let dt = config.dt;
        let eff = model.mass()
            + model.damping() * (c * config.gamma * dt)
            + model.stiffness() * (c * config.beta * dt * dt);
        let effective = factor(&eff, "effective matrix")?;
        Ok(Self {
            model,
            config,
            effective,
        })
    }

    pub fn config(&self) -> &IntegratorConfig {
        &self.config
    }

    /// One step from `state` with forces `f_next = f(t + Δt)` and `f_curr = f(t)`.
    pub fn advance(&self, state: &IntegratorState, f_next: &Vector, f_curr: &Vector) -> Result<IntegratorState> {
        let n = self.model.dim();
        for (name, v) in [("x", &state.x), ("v", &state.v), ("a", &state.a), ("f_next", f_next), ("f_curr", f_curr)] {
            check_len(name, v, n)?;
        }
        let IntegratorConfig {
            dt, gamma, beta, alpha, ..
        } = self.config;
        let c = 1.0 + alpha;
        let e = self.model.damping();
        let k = self.model.stiffness();

        let x_pred = &state.x + &state.v * dt + &state.a * (dt * dt * (0.5 - beta));
        let v_pred = &state.v + &state.a * (dt * (1.0 - gamma));
        let mut rhs = f_next * c - e * &v_pred * c - k * &x_pred * c;
        if alpha != 0.0 {
            rhs += (e * &state.v + k * &state.x - f_curr) * alpha;
        }
        let a = self
            .effective
            .solve(&rhs)
            .ok_or_else(|| Error::SingularOperator("effective matrix".into()))?;
        let x = x_pred + &a * (beta * dt * dt);
        let v = v_pred + &a * (gamma * dt);
        Ok(IntegratorState {
            x,
            v,
            a,
            t: state.t + dt,
        })
    }

    /// Marches from `t = 0` to `t_end`, recording snapshots at `t_1 … t_N`.
    pub fn simulate(&self, excitation: Excitation<'_>, x0: &Vector, v0: &Vector) -> Result<TrajectoryData> {
        let n = self.model.dim();
        check_len("x0", x0, n)?;
        check_len("v0", v0, n)?;
        let steps = self.config.steps();
        let dt = self.config.dt;

        let input_map = match excitation {
            Excitation::Input(_) => Some(
                self.model
                    .input_map()
                    .ok_or(Error::MissingData("input map B for an input-driven simulation"))?,
            ),
            Excitation::Force(_) => None,
        };
        let sample = |t: f64| -> Result<(Option<Vector>, Vector)> {
            match excitation {
                Excitation::Input(u) => {
                    let u = u(t);
                    let b = input_map.expect("input map checked above");
                    if u.len() != b.ncols() {
                        return Err(Error::InvalidParameter(format!(
                            "input signal has length {}, expected {}",
                            u.len(),
                            b.ncols()
                        )));
                    }
                    let f = b * &u;
                    Ok((Some(u), f))
                }
                Excitation::Force(f) => {
                    let f = f(t);
                    check_len("force", &f, n)?;
                    Ok((None, f))
                }
            }
        };

        let (_, f0) = sample(0.0)?;
        let a0 = initial_acceleration(self.model, x0, v0, &f0)?;
        let mut state = IntegratorState {
            x: x0.clone(),
            v: v0.clone(),
            a: a0,
            t: 0.0,
        };

        let mut times = Vec::with_capacity(steps);
        let mut xs = Matrix::zeros(n, steps);
        let mut vs = Matrix::zeros(n, steps);
        let mut accs = Matrix::zeros(n, steps);
        let mut fs = Matrix::zeros(n, steps);
        let mut us = input_map.map(|b| Matrix::zeros(b.ncols(), steps));

        let mut f_curr = f0;
        for k in 0..steps {
            let t = (k + 1) as f64 * dt;
            let (u, f_next) = sample(t)?;
            state = self.advance(&state, &f_next, &f_curr)?;
            state.t = t;
            times.push(t);
            xs.set_column(k, &state.x);
            vs.set_column(k, &state.v);
            accs.set_column(k, &state.a);
            fs.set_column(k, &f_next);
            if let (Some(us), Some(u)) = (us.as_mut(), u) {
                us.set_column(k, &u);
            }
            f_curr = f_next;
        }

        if !xs.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical("simulation diverged to non-finite values".into()));
        }
        let mut data = TrajectoryData::new(times, xs)?
            .with_velocity(vs)?
            .with_acceleration(accs)?
            .with_force(fs)?;
        if let Some(us) = us {
            data = data.with_input(us)?;
        }
        Ok(data)
    }
}

/// Single step; factors the effective matrix on every call. Use [`Integrator`] for sequences.
pub fn step<S: SecondOrderModel + ?Sized>(
    model: &S,
    state: &IntegratorState,
    f_next: &Vector,
    f_curr: &Vector,
    config: &IntegratorConfig,
) -> Result<IntegratorState> {
    Integrator::new(model, *config)?.advance(state, f_next, f_curr)
}

/// Simulates `model` over `[0, config.t_end]`.
pub fn simulate<S: SecondOrderModel + ?Sized>(
    model: &S,
    excitation: Excitation<'_>,
    x0: &Vector,
    v0: &Vector,
    config: &IntegratorConfig,
) -> Result<TrajectoryData> {
    Integrator::new(model, *config)?.simulate(excitation, x0, v0)
}

/// `‖M a₁ + E (c v₁ - α v₀) + K (c x₁ - α x₀) - (c f₁ - α f₀)‖₂` for one step.
pub fn step_residual<S: SecondOrderModel + ?Sized>(
    model: &S,
    before: &IntegratorState,
    after: &IntegratorState,
    f_next: &Vector,
    f_curr: &Vector,
    alpha: f64,
) -> f64 {
    let c = 1.0 + alpha;
    let lhs = model.mass() * &after.a
        + model.damping() * (&after.v * c - &before.v * alpha)
        + model.stiffness() * (&after.x * c - &before.x * alpha);
    (lhs - (f_next * c - f_curr * alpha)).norm()
}
