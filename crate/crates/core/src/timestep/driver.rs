use std::path::Path;
use std::time::Instant;

use super::{FlowCase, SchemeConfig, StepDiagnostics, StepState, Stepper, DIVERGENCE_FACTOR};
use crate::bench::{ErrorAccumulator, ErrorReport};
use crate::mesh::PolytopalMesh;
use crate::spaces::kinetic_energy;
use crate::{Error, Real, Result};

/// Column names of the diagnostics CSV.
pub const DIAGNOSTICS_HEADER: [&str; 11] = [
    "n",
    "time",
    "kinetic_energy",
    "divergence_norm",
    "energy_residual",
    "picard_iterations",
    "picard_converged",
    "solver_iterations",
    "solver_residual",
    "solver_time",
    "diverged",
];

/// Outcome of [`run_simulation`].
#[derive(Debug, Clone)]
pub struct RunResult<T> {
    pub config: SchemeConfig,
    /// `N = round(T/Δt)`.
    pub n_steps: usize,
    pub diagnostics: Vec<StepDiagnostics>,
    pub initial_energy: f64,
    pub diverged: bool,
    /// `t^n` of the first step flagged as diverged.
    pub divergence_time: Option<f64>,
    /// Space-time errors, when the case provides an exact solution.
    pub errors: Option<ErrorReport>,
    pub final_state: StepState<T>,
    pub wall_time: f64,
}

impl<T: Real> RunResult<T> {
    pub fn write_diagnostics_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_diagnostics(path.as_ref(), &self.diagnostics)
    }

    /// Run metadata, flags and errors as JSON.
    pub fn summary(&self) -> serde_json::Value {
        serde_json::json!({
            "config": self.config,
            "n_steps": self.n_steps,
            "completed_steps": self.diagnostics.len(),
            "initial_energy": self.initial_energy,
            "final_energy": self.diagnostics.last().map(|d| d.kinetic_energy),
            "diverged": self.diverged,
            "divergence_time": self.divergence_time,
            "picard_iterations": self.diagnostics.iter().map(|d| d.picard_iterations).sum::<usize>(),
            "solver_iterations": self.diagnostics.iter().map(|d| d.solver_iterations).sum::<usize>(),
            "solver_time": self.diagnostics.iter().map(|d| d.solver_time).sum::<f64>(),
            "wall_time": self.wall_time,
            "errors": self.errors,
        })
    }
}

pub(crate) fn write_diagnostics(path: &Path, rows: &[StepDiagnostics]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(DIAGNOSTICS_HEADER)?;
    for d in rows {
        w.write_record([
            d.n.to_string(),
            format!("{:.12e}", d.time),
            format!("{:.12e}", d.kinetic_energy),
            format!("{:.6e}", d.divergence_norm),
            d.energy_residual.map(|r| format!("{r:.6e}")).unwrap_or_default(),
            d.picard_iterations.to_string(),
            d.picard_converged.to_string(),
            d.solver_iterations.to_string(),
            format!("{:.6e}", d.solver_residual),
            format!("{:.6e}", d.solver_time),
            d.diverged.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Runs `N = round(T/Δt)` steps of the configured scheme.
pub fn run_simulation<T: Real>(
    mesh: &PolytopalMesh<T>,
    config: &SchemeConfig,
    case: &dyn FlowCase<T>,
) -> Result<RunResult<T>> {
    run_simulation_with(mesh, config, case, |_, _| Ok(()))
}

/// As [`run_simulation`], calling `on_step` after every step.
///
/// A step is flagged as diverged when its kinetic energy is not finite or
/// exceeds `1.1` times the initial one (the latter only when the initial energy
/// is positive). With `halt_on_divergence`, the run stops at the first flag.
pub fn run_simulation_with<T: Real>(
    mesh: &PolytopalMesh<T>,
    config: &SchemeConfig,
    case: &dyn FlowCase<T>,
    mut on_step: impl FnMut(&StepState<T>, &StepDiagnostics) -> Result<()>,
) -> Result<RunResult<T>> {
    let start = Instant::now();
    config.validate()?;
    let n_steps = config.n_steps()?;
    let mut stepper = Stepper::new(mesh, config, case)?;
    let mut state = stepper.initialize();
    let e0 = kinetic_energy(&state.velocity, mesh).as_f64();
    let mut errors = case.is_exact().then(|| ErrorAccumulator::new(config.dt));
    let mut diagnostics = Vec::with_capacity(n_steps);
    let mut divergence_time = None;
    for _ in 0..n_steps {
        let (next, mut diag) = stepper.step(&state)?;
        let e = diag.kinetic_energy;
        diag.diverged = !e.is_finite() || (e0 > 0.0 && e > DIVERGENCE_FACTOR * e0);
        if let Some(acc) = errors.as_mut() {
            if !diag.diverged {
                acc.add_node(&stepper, case, next.n, &next.velocity, &next.pressure)?;
            }
        }
        on_step(&next, &diag)?;
        let flagged = diag.diverged;
        if flagged && divergence_time.is_none() {
            divergence_time = Some(diag.time);
        }
        diagnostics.push(diag);
        state = next;
        if flagged && config.halt_on_divergence {
            break;
        }
    }
    let diverged = divergence_time.is_some();
    Ok(RunResult {
        config: config.clone(),
        n_steps,
        diagnostics,
        initial_energy: e0,
        diverged,
        divergence_time,
        errors: match errors {
            Some(acc) if !diverged => Some(acc.report()?),
            _ => None,
        },
        final_state: state,
        wall_time: start.elapsed().as_secs_f64(),
    })
}
