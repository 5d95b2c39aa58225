use serde::{Deserialize, Serialize};

use crate::mesh::PolytopalMesh;
use crate::operators::GlobalSystem;
use crate::spaces::{
    kinetic_energy, pressure_l2_norm, project_pressure, project_velocity, zero_mean_adjust, HybridVelocity,
    MeshQuadrature, PressureField,
};
use crate::timestep::{FlowCase, Stepper};
use crate::{Error, Real, Result};

/// One value per error norm.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NormTriple {
    pub velocity_l2: f64,
    pub velocity_h1: f64,
    pub pressure_l2: f64,
}

impl NormTriple {
    pub fn as_array(&self) -> [f64; 3] {
        [self.velocity_l2, self.velocity_h1, self.pressure_l2]
    }

    fn from_array(a: [f64; 3]) -> Self {
        Self { velocity_l2: a[0], velocity_h1: a[1], pressure_l2: a[2] }
    }
}

/// Errors at one time node (not weighted by `Δt`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeError {
    pub n: usize,
    pub time: f64,
    pub errors: NormTriple,
}

/// Normalized space-time errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// `raw / normalization`, per norm.
    pub normalized: NormTriple,
    /// `(Σ_n Δt ‖Î_h u(tⁿ) − u_hⁿ‖²)^{1/2}` and likewise.
    pub raw: NormTriple,
    /// The same norms of the projected exact solution.
    pub normalization: NormTriple,
    pub nodes: Vec<NodeError>,
}

/// Streaming accumulation of the space-time error sums, one time node at a time.
///
/// Velocity `ℓ²(L²)` uses cell values, velocity `ℓ²(H¹)` uses the reconstructed
/// gradient (`a_h` of the DoF difference), pressure `ℓ²(L²)` uses cell values.
/// Both the projected exact pressure and the discrete pressure are compared with
/// zero mean.
#[derive(Debug, Clone)]
pub struct ErrorAccumulator {
    dt: f64,
    errors: [f64; 3],
    norms: [f64; 3],
    nodes: Vec<NodeError>,
}

impl ErrorAccumulator {
    pub fn new(dt: f64) -> Self {
        Self { dt, errors: [0.0; 3], norms: [0.0; 3], nodes: Vec::new() }
    }

    pub(crate) fn add_node<T: Real>(
        &mut self,
        stepper: &Stepper<'_, T>,
        case: &dyn FlowCase<T>,
        n: usize,
        u: &HybridVelocity<T>,
        p: &PressureField<T>,
    ) -> Result<()> {
        self.add(stepper.mesh(), stepper.quadrature(), stepper.system(), case, n, u, p)
    }

    /// Adds the contribution of node `n` (time `n Δt`). Nodes must arrive in
    /// order `1, 2, …`.
    #[allow(clippy::too_many_arguments)]
    pub fn add<T: Real>(
        &mut self,
        mesh: &PolytopalMesh<T>,
        quad: &MeshQuadrature<T>,
        system: &GlobalSystem<T>,
        case: &dyn FlowCase<T>,
        n: usize,
        u: &HybridVelocity<T>,
        p: &PressureField<T>,
    ) -> Result<()> {
        let expected = self.nodes.len() + 1;
        if n != expected {
            return Err(Error::invalid(format!("missing time node {expected} (got node {n})")));
        }
        let t = T::of(self.dt * n as f64);
        let ue = project_velocity(mesh, quad, |t, x| case.velocity(t, x), t);
        let pe = zero_mean_adjust(project_pressure(mesh, quad, |t, x| case.pressure(t, x), t), mesh);
        let ph = zero_mean_adjust(p.clone(), mesh);
        let du = ue.sub(u);
        let dp = PressureField { values: pe.values.iter().zip(&ph.values).map(|(a, b)| *a - *b).collect() };
        let energy = |v: &HybridVelocity<T>| {
            let x = system.dofs.to_vector(v);
            system.diffusion.mul_vec(&x).iter().zip(&x).map(|(a, b)| *a * *b).sum::<T>().as_f64().max(0.0)
        };
        let err = [
            2.0 * kinetic_energy(&du, mesh).as_f64(),
            energy(&du),
            pressure_l2_norm(&dp, mesh).as_f64().powi(2),
        ];
        let norm = [
            2.0 * kinetic_energy(&ue, mesh).as_f64(),
            energy(&ue),
            pressure_l2_norm(&pe, mesh).as_f64().powi(2),
        ];
        for k in 0..3 {
            self.errors[k] += self.dt * err[k];
            self.norms[k] += self.dt * norm[k];
        }
        self.nodes.push(NodeError {
            n,
            time: self.dt * n as f64,
            errors: NormTriple::from_array(err.map(f64::sqrt)),
        });
        Ok(())
    }

    pub fn report(&self) -> Result<ErrorReport> {
        if self.nodes.is_empty() {
            return Err(Error::invalid("no time node accumulated"));
        }
        let raw = self.errors.map(f64::sqrt);
        let normalization = self.norms.map(f64::sqrt);
        let mut normalized = [0.0; 3];
        for k in 0..3 {
            normalized[k] = if normalization[k] > 0.0 { raw[k] / normalization[k] } else { raw[k] };
        }
        Ok(ErrorReport {
            normalized: NormTriple::from_array(normalized),
            raw: NormTriple::from_array(raw),
            normalization: NormTriple::from_array(normalization),
            nodes: self.nodes.clone(),
        })
    }
}

/// Space-time errors of a stored history `[(n, uⁿ, pⁿ)]` for `n = 1..N`.
pub fn compute_spacetime_errors<T: Real>(
    mesh: &PolytopalMesh<T>,
    system: &GlobalSystem<T>,
    quad: &MeshQuadrature<T>,
    case: &dyn FlowCase<T>,
    dt: f64,
    history: &[(usize, HybridVelocity<T>, PressureField<T>)],
) -> Result<ErrorReport> {
    let mut acc = ErrorAccumulator::new(dt);
    for (n, u, p) in history {
        acc.add(mesh, quad, system, case, *n, u, p)?;
    }
    acc.report()
}
