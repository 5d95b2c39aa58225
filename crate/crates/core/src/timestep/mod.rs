//! Time stepping: monolithic and artificial-compressibility schemes at first and
//! second order, Picard iteration, diagnostics and the simulation driver.

mod driver;
mod stepper;

use serde::{Deserialize, Serialize};

pub use driver::{run_simulation, run_simulation_with, RunResult, DIAGNOSTICS_HEADER};
pub use stepper::Stepper;

use crate::geom::{self, Point};
use crate::linalg::{SolverConfig, SolverReport};
use crate::operators::OperatorConfig;
use crate::spaces::{HybridVelocity, PressureField};
use crate::{Error, Real, Result};

/// Kinetic energy growth factor that flags a run as diverged.
pub const DIVERGENCE_FACTOR: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    Monolithic,
    #[serde(alias = "ac")]
    ArtificialCompressibility,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvectionMode {
    /// Picard iteration with the transport field frozen at the previous iterate.
    Implicit,
    /// Convection evaluated at previous time levels on the right-hand side.
    Explicit,
    /// Unsteady Stokes.
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearSolverKind {
    /// Sparse LU, factorizations of constant matrices cached for the whole run.
    Direct,
    /// Jacobi CG / GMRES / GKB depending on the system structure.
    Iterative,
}

/// Scheme parameters. Physical quantities are stored as `f64` and converted to
/// the working precision when a [`Stepper`] is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemeConfig {
    pub coupling: Coupling,
    pub order: u8,
    pub convection: ConvectionMode,
    /// Grad-div parameter of the AC schemes.
    pub eta: Option<f64>,
    pub dt: f64,
    pub final_time: f64,
    pub viscosity: f64,
    pub picard_tol: f64,
    pub picard_max: usize,
    pub linear_solver: LinearSolverKind,
    /// Iterative solver settings; defaults to a tolerance of `1e-4` (order 1)
    /// or `1e-5` (order 2).
    pub solver: Option<SolverConfig>,
    pub operators: OperatorConfig,
    /// Stop at the first step flagged as diverged.
    pub halt_on_divergence: bool,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            coupling: Coupling::Monolithic,
            order: 1,
            convection: ConvectionMode::Implicit,
            eta: None,
            dt: 0.1,
            final_time: 1.0,
            viscosity: 1.0,
            picard_tol: 1e-8,
            picard_max: 50,
            linear_solver: LinearSolverKind::Direct,
            solver: None,
            operators: OperatorConfig::default(),
            halt_on_divergence: true,
        }
    }
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive, got {v}")))
            }
        };
        positive("time step", self.dt)?;
        positive("viscosity", self.viscosity)?;
        if !(self.final_time.is_finite() && self.final_time >= 0.0) {
            return Err(Error::invalid(format!("observation time must be non-negative, got {}", self.final_time)));
        }
        if !matches!(self.order, 1 | 2) {
            return Err(Error::invalid(format!("order must be 1 or 2, got {}", self.order)));
        }
        if self.coupling == Coupling::ArtificialCompressibility {
            positive("eta", self.eta.ok_or_else(|| Error::invalid("eta is required for the AC coupling"))?)?;
            if self.order == 2 && self.convection == ConvectionMode::Implicit {
                return Err(Error::invalid("second-order AC supports explicit (or no) convection only"));
            }
        }
        if !(self.picard_tol > 0.0) || self.picard_max == 0 {
            return Err(Error::invalid("picard tolerance and iteration cap must be positive"));
        }
        self.solver_config().validate()?;
        self.operators.validate()
    }

    pub fn solver_config(&self) -> SolverConfig {
        self.solver.unwrap_or_else(|| SolverConfig::with_tol(if self.order == 1 { 1e-4 } else { 1e-5 }))
    }

    /// `N = round(T/Δt)`.
    pub fn n_steps(&self) -> Result<usize> {
        let n = (self.final_time / self.dt).round();
        if n < 1.0 {
            return Err(Error::invalid("observation time shorter than time step"));
        }
        Ok(n as usize)
    }
}

/// Problem data: initial condition, boundary data and forcing.
pub trait FlowCase<T: Real> {
    /// Velocity at `(t, x)`: the initial condition at `t = 0` and the Dirichlet
    /// data on the boundary. For exact cases, the exact solution everywhere.
    fn velocity(&self, t: T, x: &Point<T>) -> Point<T>;

    /// Pressure at `(t, x)`: the initial pressure at `t = 0`.
    fn pressure(&self, t: T, x: &Point<T>) -> T;

    fn forcing(&self, _t: T, _x: &Point<T>) -> Point<T> {
        geom::zero()
    }

    fn has_forcing(&self) -> bool {
        false
    }

    /// Whether `velocity`/`pressure` solve the problem for all times, enabling
    /// error accumulation.
    fn is_exact(&self) -> bool {
        false
    }
}

/// Velocity and pressure of the first-order track of the bootstrap scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct Track<T> {
    pub velocity: HybridVelocity<T>,
    pub pressure: PressureField<T>,
}

/// Solution history needed to advance one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepState<T> {
    pub n: usize,
    pub time: T,
    /// `u^n` (for the bootstrap scheme, the second-order track).
    pub velocity: HybridVelocity<T>,
    pub pressure: PressureField<T>,
    /// `u^{n−1}`, once available.
    pub previous: Option<HybridVelocity<T>>,
    /// First-order track of the bootstrap scheme.
    pub track1: Option<Track<T>>,
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub n: usize,
    pub time: f64,
    pub kinetic_energy: f64,
    /// Residual of the discrete kinetic energy balance, including the work of
    /// the boundary data (implicit or convection-free first-order monolithic steps).
    pub energy_residual: Option<f64>,
    /// `(Σ_c |c| D_c(u^n)²)^{1/2}`.
    pub divergence_norm: f64,
    pub picard_iterations: usize,
    pub picard_converged: bool,
    pub solver_iterations: usize,
    pub solver_residual: f64,
    pub solver_time: f64,
    pub diverged: bool,
}

impl StepDiagnostics {
    pub(crate) fn absorb(&mut self, report: &SolverReport) {
        self.solver_iterations += report.iterations.max(report.inner_iterations);
        self.solver_residual = self.solver_residual.max(report.residual);
        self.solver_time += report.wall_time;
    }
}
