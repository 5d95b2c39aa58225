//! Benchmark harness: exact solutions, space-time errors, convergence studies,
//! η sweeps and critical-time-step bisection.

mod cfl;
mod errors;
mod run;

use serde::{Deserialize, Serialize};

pub use cfl::{
    cfl_search, cfl_search_with, critical_dt_reference, seeded_bracket, CflProbe, CflResult, CflSearchSpec,
};
pub use errors::{compute_spacetime_errors, ErrorAccumulator, ErrorReport, NodeError, NormTriple};
pub use run::{apply_override, run_case, run_cfl_case, write_probes_csv, write_rates_csv, MeshSpec, RunConfig, RunOutcome};

use crate::geom::{self, Point};
use crate::mesh::{BoxDomain, PolytopalMesh};
use crate::timestep::{run_simulation, FlowCase, SchemeConfig};
use crate::{Error, Real, Result};

/// Taylor–Green vortex on `[0, 2π]²`: `(u, p)` at `(t, x)`.
pub fn exact_tgv2d<T: Real>(t: T, x: &Point<T>, nu: T) -> (Point<T>, T) {
    let two = T::of(2.0);
    let decay = (-two * nu * t).exp();
    let (sx, cx) = x[0].sin_cos();
    let (sy, cy) = x[1].sin_cos();
    let u = [decay * sx * cy, -decay * cx * sy, T::zero()];
    let p = T::of(0.25) * decay * decay * ((two * x[0]).cos() + (two * x[1]).cos());
    (u, p)
}

/// Modified Taylor–Green vortex on `(0, 1)³` with `ν = 1` and amplitude
/// `sin(8πt)`: `(u, p, f)` at `(t, x)`.
pub fn exact_mtgv3d<T: Real>(t: T, x: &Point<T>) -> (Point<T>, T, Point<T>) {
    let pi = T::PI();
    let two_pi = T::of(2.0) * pi;
    let four_pi = T::of(4.0) * pi;
    let eight_pi = T::of(8.0) * pi;
    let one = T::one();
    let two = T::of(2.0);
    let alpha = (eight_pi * t).sin();
    let dalpha = eight_pi * (eight_pi * t).cos();
    let (sx, cx) = (two_pi * x[0]).sin_cos();
    let (sy, cy) = (two_pi * x[1]).sin_cos();
    let (sz, cz) = (two_pi * x[2]).sin_cos();
    let up = [-two * cx * sy * sz, sx * cy * sz, sx * sy * cz];
    let pp = -T::of(6.0) * pi * sx * sy * sz;
    let (s4x, c4x) = (four_pi * x[0]).sin_cos();
    let (s4y, c4y) = (four_pi * x[1]).sin_cos();
    let (s4z, c4z) = (four_pi * x[2]).sin_cos();
    // (u'·∇)u'
    let quad = [
        -two * s4x * (c4y + c4z - two),
        s4y * (c4x - two * c4z + one),
        s4z * (c4x - two * c4y + one),
    ];
    let quad_coef = -pi / two * alpha * alpha;
    let fp0 = -T::of(36.0) * pi * pi * cx * sy * sz;
    let mut f = geom::scale(&up, dalpha);
    f[0] += alpha * fp0;
    geom::axpy(&mut f, quad_coef, &quad);
    (geom::scale(&up, alpha), alpha * pp, f)
}

/// 2D Taylor–Green vortex with viscosity `ν` (`Re = 1/ν`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tgv2d {
    pub viscosity: f64,
}

impl<T: Real> FlowCase<T> for Tgv2d {
    fn velocity(&self, t: T, x: &Point<T>) -> Point<T> {
        exact_tgv2d(t, x, T::of(self.viscosity)).0
    }

    fn pressure(&self, t: T, x: &Point<T>) -> T {
        exact_tgv2d(t, x, T::of(self.viscosity)).1
    }

    fn is_exact(&self) -> bool {
        true
    }
}

/// 3D modified Taylor–Green vortex (forced, `ν = 1`).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ModifiedTgv3d;

impl<T: Real> FlowCase<T> for ModifiedTgv3d {
    fn velocity(&self, t: T, x: &Point<T>) -> Point<T> {
        exact_mtgv3d(t, x).0
    }

    fn pressure(&self, t: T, x: &Point<T>) -> T {
        exact_mtgv3d(t, x).1
    }

    fn forcing(&self, t: T, x: &Point<T>) -> Point<T> {
        exact_mtgv3d(t, x).2
    }

    fn has_forcing(&self) -> bool {
        true
    }

    fn is_exact(&self) -> bool {
        true
    }
}

/// Flow case built from closures (initial/boundary data, optional forcing).
pub struct FunctionCase<V, P> {
    pub velocity: V,
    pub pressure: P,
    pub exact: bool,
}

impl<T, V, P> FlowCase<T> for FunctionCase<V, P>
where
    T: Real,
    V: Fn(T, &Point<T>) -> Point<T>,
    P: Fn(T, &Point<T>) -> T,
{
    fn velocity(&self, t: T, x: &Point<T>) -> Point<T> {
        (self.velocity)(t, x)
    }

    fn pressure(&self, t: T, x: &Point<T>) -> T {
        (self.pressure)(t, x)
    }

    fn is_exact(&self) -> bool {
        self.exact
    }
}

/// Benchmark case selection as found in run configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum CaseSpec {
    /// Give either `viscosity` or `reynolds` (`Re = 1/ν` with unit reference
    /// length and velocity).
    Tgv2d {
        #[serde(default)]
        viscosity: Option<f64>,
        #[serde(default)]
        reynolds: Option<f64>,
    },
    Mtgv3d,
}

impl CaseSpec {
    pub fn tgv2d_reynolds(re: f64) -> Self {
        CaseSpec::Tgv2d { viscosity: None, reynolds: Some(re) }
    }

    pub fn viscosity(&self) -> Result<f64> {
        match *self {
            CaseSpec::Tgv2d { viscosity: Some(nu), reynolds: None } => positive(nu),
            CaseSpec::Tgv2d { viscosity: None, reynolds: Some(re) } => positive(re).map(|re| 1.0 / re),
            CaseSpec::Tgv2d { viscosity: Some(_), reynolds: Some(_) } => {
                Err(Error::invalid("tgv2d takes either viscosity or reynolds, not both"))
            }
            CaseSpec::Tgv2d { viscosity: None, reynolds: None } => {
                Err(Error::invalid("tgv2d needs a viscosity or a reynolds number"))
            }
            CaseSpec::Mtgv3d => Ok(1.0),
        }
    }

    pub fn reynolds(&self) -> Result<f64> {
        Ok(1.0 / self.viscosity()?)
    }

    pub fn dim(&self) -> usize {
        match self {
            CaseSpec::Tgv2d { .. } => 2,
            CaseSpec::Mtgv3d => 3,
        }
    }

    pub fn domain<T: Real>(&self) -> BoxDomain<T> {
        match self {
            CaseSpec::Tgv2d { .. } => BoxDomain::cube(T::of(2.0 * std::f64::consts::PI)),
            CaseSpec::Mtgv3d => BoxDomain::unit(),
        }
    }

    pub fn flow_case<T: Real>(&self) -> Result<Box<dyn FlowCase<T>>> {
        Ok(match self {
            CaseSpec::Tgv2d { .. } => Box::new(Tgv2d { viscosity: self.viscosity()? }),
            CaseSpec::Mtgv3d => Box::new(ModifiedTgv3d),
        })
    }
}

fn positive(v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::invalid(format!("expected a positive value, got {v}")))
    }
}

/// Observed orders `log₂(e_k / e_{k+1})` between consecutive halvings.
pub fn convergence_rates(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

/// One run of a convergence study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub label: String,
    pub dt: f64,
    pub errors: ErrorReport,
    pub diverged: bool,
}

/// Errors per `(config, Δt)` and observed orders per config.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<StudyRow>,
}

impl ConvergenceTable {
    pub fn labels(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.label.as_str()) {
                out.push(&r.label);
            }
        }
        out
    }

    pub fn rows_for(&self, label: &str) -> Vec<&StudyRow> {
        self.rows.iter().filter(|r| r.label == label).collect()
    }

    /// Orders of the normalized errors of `label`, per norm, between consecutive rows.
    pub fn rates(&self, label: &str) -> Vec<NormTriple> {
        let rows = self.rows_for(label);
        let col = |k: usize| rows.iter().map(|r| r.errors.normalized.as_array()[k]).collect::<Vec<_>>();
        let (a, b, c) = (convergence_rates(&col(0)), convergence_rates(&col(1)), convergence_rates(&col(2)));
        (0..a.len())
            .map(|i| NormTriple { velocity_l2: a[i], velocity_h1: b[i], pressure_l2: c[i] })
            .collect()
    }
}

/// Runs every labelled config at every `Δt` (the configs' own `dt` is replaced).
pub fn convergence_study<T: Real>(
    mesh: &PolytopalMesh<T>,
    case: &dyn FlowCase<T>,
    configs: &[(String, SchemeConfig)],
    dts: &[f64],
) -> Result<ConvergenceTable> {
    if !case.is_exact() {
        return Err(Error::invalid("convergence study needs a case with an exact solution"));
    }
    let mut table = ConvergenceTable::default();
    for (label, base) in configs {
        for &dt in dts {
            let config = SchemeConfig { dt, ..base.clone() };
            let run = run_simulation(mesh, &config, case)?;
            let errors = run.errors.ok_or_else(|| {
                Error::invalid(format!("{label}: run diverged at Δt = {dt}, no errors available"))
            })?;
            log::info!("{label} dt={dt:.6e}: {:?}", errors.normalized);
            table.rows.push(StudyRow { label: label.clone(), dt, errors, diverged: run.diverged });
        }
    }
    Ok(table)
}

/// AC runs at each `η` (given as multiples of `Re`), plus the monolithic
/// reference when `with_monolithic` is set.
pub fn eta_sweep<T: Real>(
    mesh: &PolytopalMesh<T>,
    case: &dyn FlowCase<T>,
    base: &SchemeConfig,
    eta_factors: &[f64],
    with_monolithic: bool,
) -> Result<ConvergenceTable> {
    use crate::timestep::Coupling;
    let re = 1.0 / base.viscosity;
    let mut configs: Vec<(String, SchemeConfig)> = eta_factors
        .iter()
        .map(|&k| {
            let c = SchemeConfig {
                coupling: Coupling::ArtificialCompressibility,
                eta: Some(k * re),
                ..base.clone()
            };
            (format!("ac_eta_{k}re"), c)
        })
        .collect();
    if with_monolithic {
        configs.push(("monolithic".into(), SchemeConfig { coupling: Coupling::Monolithic, eta: None, ..base.clone() }));
    }
    convergence_study(mesh, case, &configs, &[base.dt])
}
