use std::f64::consts::PI;

use cdofb::bench::Tgv2d;
use cdofb::geom::Point;
use cdofb::mesh::{build_cartesian, build_voronoi_polygonal_2d, BoxDomain};
use cdofb::spaces::kinetic_energy;
use cdofb::timestep::{
    run_simulation, run_simulation_with, ConvectionMode, Coupling, FlowCase, LinearSolverKind, SchemeConfig,
};
use cdofb::Mesh;

fn tgv_mesh(n: usize) -> Mesh {
    build_cartesian(2, &[n, n], &BoxDomain::cube(2.0 * PI)).unwrap()
}

fn mono(order: u8, convection: ConvectionMode, dt: f64, steps: usize) -> SchemeConfig {
    SchemeConfig { order, convection, dt, final_time: dt * steps as f64, ..SchemeConfig::default() }
}

fn ac(order: u8, convection: ConvectionMode, eta: f64, dt: f64, steps: usize) -> SchemeConfig {
    SchemeConfig {
        coupling: Coupling::ArtificialCompressibility,
        eta: Some(eta),
        ..mono(order, convection, dt, steps)
    }
}

/// Sets `ν` and, for AC configs, `η = 10 Re`.
fn with_nu(cfgs: Vec<SchemeConfig>, viscosity: f64) -> Vec<SchemeConfig> {
    cfgs.into_iter().map(|c| SchemeConfig { viscosity, eta: c.eta.map(|_| 10.0 / viscosity), ..c }).collect()
}

fn all_schemes(dt: f64, steps: usize) -> Vec<SchemeConfig> {
    vec![
        mono(1, ConvectionMode::Implicit, dt, steps),
        mono(1, ConvectionMode::Explicit, dt, steps),
        mono(2, ConvectionMode::Implicit, dt, steps),
        mono(2, ConvectionMode::Explicit, dt, steps),
        ac(1, ConvectionMode::Implicit, 10.0, dt, steps),
        ac(1, ConvectionMode::Explicit, 10.0, dt, steps),
        ac(2, ConvectionMode::Explicit, 10.0, dt, steps),
    ]
}

struct Rest;

impl FlowCase<f64> for Rest {
    fn velocity(&self, _: f64, _: &Point<f64>) -> Point<f64> {
        [0.0; 3]
    }

    fn pressure(&self, _: f64, _: &Point<f64>) -> f64 {
        0.0
    }
}

#[test]
fn rest_state_stays_at_rest() {
    let mesh = tgv_mesh(4);
    for linear_solver in [LinearSolverKind::Direct, LinearSolverKind::Iterative] {
        for cfg in all_schemes(0.1, 3) {
            let cfg = SchemeConfig { linear_solver, ..cfg };
            let run = run_simulation(&mesh, &cfg, &Rest).unwrap();
            assert!(!run.diverged);
            let s = &run.final_state;
            assert!(s.velocity.cells.iter().chain(&s.velocity.faces).flatten().all(|v| v.abs() < 1e-14), "{cfg:?}");
            assert!(s.pressure.values.iter().all(|v| v.abs() < 1e-14));
        }
    }
}

#[test]
fn implicit_energy_balance_holds_every_step() {
    let mesh = tgv_mesh(16);
    let case = Tgv2d { viscosity: 1.0 };
    let cfg = mono(1, ConvectionMode::Implicit, 0.1, 10);
    let run = run_simulation(&mesh, &cfg, &case).unwrap();
    let e0 = run.initial_energy;
    assert_eq!(run.diagnostics.len(), 10);
    for d in &run.diagnostics {
        let r = d.energy_residual.expect("energy residual reported");
        assert!(r.abs() <= 1e-10 * e0, "step {}: residual {r:e} vs E0 {e0:e}", d.n);
        assert!(d.picard_converged);
    }
}

#[test]
fn energy_balance_on_polygonal_mesh() {
    let mesh = build_voronoi_polygonal_2d(60, &BoxDomain::cube(2.0 * PI), 0.3, 7).unwrap();
    let case = Tgv2d { viscosity: 0.1 };
    for convection in [ConvectionMode::Implicit, ConvectionMode::Off] {
        let cfg = SchemeConfig { viscosity: 0.1, ..mono(1, convection, 0.2, 4) };
        let run = run_simulation(&mesh, &cfg, &case).unwrap();
        for d in &run.diagnostics {
            assert!(d.energy_residual.unwrap().abs() <= 1e-10 * run.initial_energy, "{convection:?} {d:?}");
        }
    }
}

#[test]
fn ac_matches_monolithic_at_picard_convergence() {
    let mesh = tgv_mesh(4);
    let case = Tgv2d { viscosity: 1.0 };
    let tight = |c: SchemeConfig| SchemeConfig { picard_tol: 1e-12, picard_max: 400, ..c };
    let m = run_simulation(&mesh, &tight(mono(1, ConvectionMode::Implicit, 0.1, 3)), &case).unwrap();
    let a = run_simulation(&mesh, &tight(ac(1, ConvectionMode::Implicit, 10.0, 0.1, 3)), &case).unwrap();
    let (um, ua) = (&m.final_state.velocity, &a.final_state.velocity);
    let du = um.cells.iter().chain(&um.faces).zip(ua.cells.iter().chain(&ua.faces));
    let max_du = du.flat_map(|(x, y)| (0..2).map(move |k| (x[k] - y[k]).abs())).fold(0.0, f64::max);
    let (pm, pa) = (&m.final_state.pressure.values, &a.final_state.pressure.values);
    let mean = |p: &[f64]| p.iter().sum::<f64>() / p.len() as f64;
    let (mm, ma) = (mean(pm), mean(pa));
    let max_dp = pm.iter().zip(pa).map(|(x, y)| ((x - mm) - (y - ma)).abs()).fold(0.0, f64::max);
    assert!(max_du <= 1e-8, "velocity difference {max_du:e}");
    assert!(max_dp <= 1e-8, "pressure difference {max_dp:e}");
}

#[test]
fn ac_pressure_update_preserves_the_mean() {
    let mesh = tgv_mesh(8);
    let case = Tgv2d { viscosity: 0.1 };
    let cfgs = vec![ac(1, ConvectionMode::Explicit, 50.0, 0.05, 5), ac(2, ConvectionMode::Explicit, 50.0, 0.05, 5)];
    for cfg in with_nu(cfgs, 0.1) {
        let mut means = Vec::new();
        run_simulation_with(&mesh, &cfg, &case, |s, _| {
            means.push(s.pressure.mean(&mesh));
            Ok(())
        })
        .unwrap();
        for m in &means {
            assert!((m - means[0]).abs() < 1e-12, "{means:?}");
        }
    }
}

#[test]
fn runs_are_deterministic() {
    let mesh = tgv_mesh(6);
    let case = Tgv2d { viscosity: 0.05 };
    for cfg in with_nu(all_schemes(0.1, 3), 0.05) {
        let a = run_simulation(&mesh, &cfg, &case).unwrap();
        let b = run_simulation(&mesh, &cfg, &case).unwrap();
        assert_eq!(a.final_state, b.final_state);
        assert_eq!(a.errors, b.errors);
    }
}

#[test]
fn iterative_solvers_agree_with_direct() {
    let mesh = tgv_mesh(6);
    let case = Tgv2d { viscosity: 0.05 };
    for cfg in with_nu(all_schemes(0.1, 3), 0.05) {
        let tight = cdofb::linalg::SolverConfig::with_tol(1e-11);
        let d = run_simulation(&mesh, &cfg, &case).unwrap();
        let it = SchemeConfig { linear_solver: LinearSolverKind::Iterative, solver: Some(tight), ..cfg.clone() };
        let i = run_simulation(&mesh, &it, &case).unwrap();
        let (ed, ei) = (d.errors.unwrap().normalized, i.errors.unwrap().normalized);
        assert!((ed.velocity_l2 - ei.velocity_l2).abs() <= 1e-7 * ed.velocity_l2.max(1e-3), "{cfg:?}");
        assert!((ed.pressure_l2 - ei.pressure_l2).abs() <= 1e-6 * ed.pressure_l2.max(1e-3), "{cfg:?}");
    }
}

/// `u = (t, 0)` with `∂ₜu = f = (1, 0)` and `p = 0` is reproduced by every
/// convection-free scheme (both time discretizations are exact on linear data).
struct Linear;

impl FlowCase<f64> for Linear {
    fn velocity(&self, t: f64, _: &Point<f64>) -> Point<f64> {
        [t, 0.0, 0.0]
    }

    fn pressure(&self, _: f64, _: &Point<f64>) -> f64 {
        0.0
    }

    fn forcing(&self, _: f64, _: &Point<f64>) -> Point<f64> {
        [1.0, 0.0, 0.0]
    }

    fn has_forcing(&self) -> bool {
        true
    }

    fn is_exact(&self) -> bool {
        true
    }
}

#[test]
fn linear_in_time_data_is_exact() {
    let mesh = build_voronoi_polygonal_2d(30, &BoxDomain::unit(), 0.3, 3).unwrap();
    for cfg in all_schemes(0.1, 4) {
        let cfg = SchemeConfig { convection: ConvectionMode::Off, ..cfg };
        let run = run_simulation(&mesh, &cfg, &Linear).unwrap();
        let u = &run.final_state.velocity;
        for v in u.cells.iter().chain(&u.faces) {
            assert!((v[0] - 0.4).abs() < 1e-10 && v[1].abs() < 1e-10, "{cfg:?}: {v:?}");
        }
        assert!(run.errors.unwrap().raw.velocity_l2 < 1e-10);
    }
}

#[test]
fn kinetic_energy_decays_for_unforced_tgv() {
    let mesh = tgv_mesh(8);
    let case = Tgv2d { viscosity: 0.1 };
    for cfg in with_nu(all_schemes(0.1, 5), 0.1) {
        let run = run_simulation(&mesh, &cfg, &case).unwrap();
        let e0 = kinetic_energy(&run.final_state.velocity, &mesh);
        assert!(e0 < run.initial_energy, "{cfg:?}");
        assert!(!run.diverged);
    }
}

#[test]
fn huge_time_step_is_flagged_as_diverged() {
    let mesh = tgv_mesh(16);
    let case = Tgv2d { viscosity: 1e-3 };
    let cfg = SchemeConfig { final_time: 40.0, viscosity: 1e-3, ..mono(2, ConvectionMode::Explicit, 2.0, 20) };
    let run = run_simulation(&mesh, &cfg, &case).unwrap();
    assert!(run.diverged);
    assert!(run.divergence_time.is_some());
    assert!(run.errors.is_none());
    assert!(run.diagnostics.len() < 20);
}
