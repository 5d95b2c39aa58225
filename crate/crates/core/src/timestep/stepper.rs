use std::time::Instant;

use super::{ConvectionMode, Coupling, FlowCase, LinearSolverKind, SchemeConfig, StepDiagnostics, StepState, Track};
use crate::linalg::{
    cg_jacobi_with, gkb_saddle, gmres_preconditioned, gmres_with, saddle_gmres, CsrMatrix, DiagonalCondensation,
    DirectSolver, LinearOperator, SaddleDirect, SaddleLdlt, SolverConfig, SolverReport,
    has_constant_pressure_kernel, remove_sum, remove_weighted_mean,
};
use crate::mesh::PolytopalMesh;
use crate::operators::{convection_apply, convection_matrix, GlobalSystem};
use crate::spaces::{
    boundary_values, cell_l2_norm, kinetic_energy, project_pressure, project_velocity, zero_mean_adjust,
    HybridVelocity, MeshQuadrature, PressureField,
};
use crate::{Error, Real, Result};

enum Solver<T> {
    Plain(DirectSolver),
    Saddle(SaddleDirect<T>),
    /// Regularized factorization, used only as a preconditioner.
    Regularized(SaddleLdlt<T>),
}

/// Requested factorization: exact LU, or one exploiting symmetry and positivity
/// of the velocity block (Cholesky, regularized saddle `LDLᵀ`).
#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Lu,
    Spd,
}

/// Direct factorization, of the system with cell velocities condensed out when
/// their block is diagonal.
struct Factor<T> {
    solver: Solver<T>,
    condensation: Option<DiagonalCondensation<T>>,
}

impl<T> Factor<T> {
    fn kind(&self) -> Kind {
        match &self.solver {
            Solver::Plain(s) if s.is_cholesky() => Kind::Spd,
            Solver::Regularized(_) => Kind::Spd,
            _ => Kind::Lu,
        }
    }
}

/// Constant left-hand side on the full numbering, split into free rows by
/// (free, prescribed) columns, with its cached factorization.
struct Prepared<T> {
    full: CsrMatrix<T>,
    ff: CsrMatrix<T>,
    fb: CsrMatrix<T>,
    factor: Option<Factor<T>>,
}

#[derive(Clone, Copy)]
enum Base {
    Euler,
    Bdf2,
}

enum Which<'m, T> {
    Constant(Base),
    /// `base + T(w)`, split by columns.
    Varying(Base, &'m CsrMatrix<T>, &'m CsrMatrix<T>),
}

struct Solved<T> {
    velocity: Vec<T>,
    pressure: Option<Vec<T>>,
}

/// Advances a [`StepState`] with the configured scheme. Matrices that do not
/// change during the run (and their factorizations, with the direct solver) are
/// built once.
pub struct Stepper<'a, T: Real> {
    mesh: &'a PolytopalMesh<T>,
    case: &'a dyn FlowCase<T>,
    config: SchemeConfig,
    quad: MeshQuadrature<T>,
    system: GlobalSystem<T>,
    b_free: CsrMatrix<T>,
    /// `b_free` restricted to face columns (cell velocities do not enter `B`).
    b_faces: CsrMatrix<T>,
    /// Constant pressures are in the kernel of `Bᵀ`.
    deflate: bool,
    b_bound: CsrMatrix<T>,
    dt: T,
    nu: T,
    /// `ν η` for AC, zero otherwise.
    nu_eta: T,
    solver: SolverConfig,
    euler: Prepared<T>,
    bdf2: Option<Prepared<T>>,
    varying: Option<Factor<T>>,
    step_index: usize,
}

impl<'a, T: Real> Stepper<'a, T> {
    pub fn new(mesh: &'a PolytopalMesh<T>, config: &SchemeConfig, case: &'a dyn FlowCase<T>) -> Result<Self> {
        config.validate()?;
        let system = GlobalSystem::assemble(mesh, &config.operators)?;
        let quad = MeshQuadrature::new(mesh, config.operators.quadrature_degree);
        let dofs = &system.dofs;
        let (b_free, b_bound) = dofs.split_columns(&system.coupling, 0..mesh.n_cells());
        let dt = T::of(config.dt);
        let nu = T::of(config.viscosity);
        let nu_eta = match config.coupling {
            Coupling::Monolithic => T::zero(),
            Coupling::ArtificialCompressibility => nu * T::of(config.eta.unwrap_or(0.0)),
        };
        let n_face_free = dofs.n_free() - mesh.n_cells() * mesh.dim();
        let deflate = has_constant_pressure_kernel(&b_free);
        let b_faces = b_free.block(0..b_free.nrows(), 0..n_face_free);
        let mut out = Self {
            mesh,
            case,
            quad,
            b_free,
            b_faces,
            deflate,
            b_bound,
            dt,
            nu,
            nu_eta,
            solver: config.solver_config(),
            euler: Prepared {
                full: CsrMatrix::zeros(0, 0),
                ff: CsrMatrix::zeros(0, 0),
                fb: CsrMatrix::zeros(0, 0),
                factor: None,
            },
            bdf2: None,
            varying: None,
            step_index: 0,
            config: config.clone(),
            system,
        };
        out.euler = out.prepare(T::one() / dt);
        if config.order == 2 {
            out.bdf2 = Some(out.prepare(T::of(1.5) / dt));
        }
        Ok(out)
    }

    /// `c M + ν a_h (+ ν η d_h)` on the full numbering.
    fn prepare(&self, mass_coef: T) -> Prepared<T> {
        let sys = &self.system;
        let mut full = CsrMatrix::linear_combination(self.nu, &sys.diffusion, self.nu_eta, &sys.divdiv);
        let mass: Vec<T> = sys.mass.iter().map(|m| *m * mass_coef).collect();
        full = CsrMatrix::linear_combination(T::one(), &full, T::one(), &CsrMatrix::from_diagonal(&mass));
        let (ff, fb) = sys.dofs.split_columns(&full, 0..sys.dofs.n_free());
        Prepared { full, ff, fb, factor: None }
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.config
    }

    pub fn system(&self) -> &GlobalSystem<T> {
        &self.system
    }

    pub fn quadrature(&self) -> &MeshQuadrature<T> {
        &self.quad
    }

    pub fn mesh(&self) -> &PolytopalMesh<T> {
        self.mesh
    }

    pub fn time(&self, n: usize) -> T {
        T::of_usize(n) * self.dt
    }

    /// `u⁰ = Î_h(u₀)`, `p⁰` the zero-mean projection of the initial pressure.
    pub fn initialize(&self) -> StepState<T> {
        let zero = T::zero();
        let velocity = project_velocity(self.mesh, &self.quad, |t, x| self.case.velocity(t, x), zero);
        let pressure =
            zero_mean_adjust(project_pressure(self.mesh, &self.quad, |t, x| self.case.pressure(t, x), zero), self.mesh);
        StepState { n: 0, time: zero, velocity, pressure, previous: None, track1: None }
    }

    /// One step of the configured scheme.
    pub fn step(&mut self, state: &StepState<T>) -> Result<(StepState<T>, StepDiagnostics)> {
        match (self.config.coupling, self.config.order) {
            (Coupling::Monolithic, 1) => self.step_monolithic_o1(state),
            (Coupling::Monolithic, _) => self.step_monolithic_o2(state),
            (Coupling::ArtificialCompressibility, 1) => self.step_ac_o1(state),
            (Coupling::ArtificialCompressibility, _) => self.step_ac_o2_bootstrap(state),
        }
    }

    fn dofs(&self) -> &crate::operators::DofMap {
        &self.system.dofs
    }

    /// Prescribed boundary DoFs at time `t`.
    fn boundary(&self, t: T) -> Vec<T> {
        let dofs = self.dofs();
        let nf = dofs.n_free();
        let mut g = vec![T::zero(); dofs.n_bound()];
        let values = boundary_values(self.mesh, &self.quad, |t, x| self.case.velocity(t, x), t);
        for (&f, v) in self.mesh.boundary_faces().iter().zip(values) {
            for (i, vi) in v.iter().enumerate().take(dofs.dim()) {
                g[dofs.face_dof(f, i) - nf] = *vi;
            }
        }
        g
    }

    /// `M Σ_k a_k u_k + l(t)` on the full numbering.
    fn mass_rhs(&self, terms: &[(T, &HybridVelocity<T>)], t: T) -> Vec<T> {
        let dofs = self.dofs();
        let mut rhs = vec![T::zero(); dofs.n_full()];
        for c in 0..self.mesh.n_cells() {
            for i in 0..dofs.dim() {
                let r = dofs.cell_dof(c, i);
                let v: T = terms.iter().map(|(a, u)| *a * u.cells[c][i]).sum();
                rhs[r] = self.system.mass[r] * v;
            }
        }
        if self.case.has_forcing() {
            let l = crate::operators::assemble_source(self.mesh, &self.quad, |t, x| self.case.forcing(t, x), t);
            rhs.iter_mut().zip(l).for_each(|(r, s)| *r += s);
        }
        rhs
    }

    /// `rhs -= s t_h(w; u, ·)`.
    fn subtract_convection(&self, rhs: &mut [T], s: T, w: &HybridVelocity<T>, u: &HybridVelocity<T>) {
        let t = self.dofs().to_vector(&convection_apply(self.mesh, w, u));
        rhs.iter_mut().zip(t).for_each(|(r, v)| *r -= s * v);
    }

    /// `rhs -= b_h(·, p)`, i.e. `rhs -= Bᵀ p`.
    fn subtract_pressure(&self, rhs: &mut [T], p: &PressureField<T>) {
        self.system.coupling.transpose_mul_add(&p.values, -T::one(), rhs);
    }

    /// `p − ν η D_h(u)`, with `D_c(u) = −(B u)_c / |c|`.
    fn pressure_update(&self, p: &PressureField<T>, u: &[T]) -> PressureField<T> {
        let bu = self.system.coupling.mul_vec(u);
        PressureField {
            values: p
                .values
                .iter()
                .zip(bu)
                .zip(&self.system.pressure_mass)
                .map(|((p, b), m)| *p + self.nu_eta * b / *m)
                .collect(),
        }
    }

    fn divergence_norm(&self, u: &[T]) -> T {
        let bu = self.system.coupling.mul_vec(u);
        bu.iter().zip(&self.system.pressure_mass).map(|(b, m)| *b * *b / *m).sum::<T>().sqrt()
    }

    fn solve(&mut self, which: Which<'_, T>, rhs: &[T], bound: &[T], guess: Option<&[T]>) -> Result<(Solved<T>, SolverReport)> {
        let start = Instant::now();
        let nf = self.system.dofs.n_free();
        let step = self.step_index;
        let (ff, fb, factor, base, refresh, symmetric) = match which {
            Which::Constant(Base::Euler) => {
                (&self.euler.ff, &self.euler.fb, &mut self.euler.factor, None, false, true)
            }
            Which::Constant(Base::Bdf2) => {
                let p = self.bdf2.as_mut().expect("second-order matrices");
                (&p.ff, &p.fb, &mut p.factor, None, false, true)
            }
            Which::Varying(base, ff, fb) => {
                let p = match base {
                    Base::Euler => &mut self.euler,
                    Base::Bdf2 => self.bdf2.as_mut().expect("second-order matrices"),
                };
                (ff, fb, &mut self.varying, Some((&p.ff, &mut p.factor)), true, false)
            }
        };
        let mut f = rhs[..nf].to_vec();
        for (fi, v) in f.iter_mut().zip(fb.mul_vec(bound)) {
            *fi -= v;
        }
        let monolithic = self.config.coupling == Coupling::Monolithic;
        let g: Vec<T> = if monolithic { self.b_bound.mul_vec(bound).into_iter().map(|v| -v).collect() } else { vec![] };
        let pm = &self.system.pressure_mass;
        let (x, p, mut report) = match self.config.linear_solver {
            LinearSolverKind::Direct => {
                let ctx = DirectContext { b_faces: &self.b_faces, b_free: &self.b_free, pm, monolithic, deflate: self.deflate };
                // Picard systems are preconditioned by the factorization of their
                // constant part. Constant systems are solved many times and get an
                // exact factorization.
                let mut solved = None;
                let mut iterations = 1;
                if let Some((pff, pfac)) = base {
                    ctx.ensure(pfac, pff, false, Kind::Spd)?;
                    let pf = pfac.as_ref().expect("factorization");
                    if let Some((x, p, its)) = ctx.krylov(pf, ff, &f, &g, step)? {
                        solved = Some((x, p));
                        iterations = its;
                    }
                }
                let (x, p) = match solved {
                    Some(v) => v,
                    None => {
                        let kind = if symmetric && !monolithic { Kind::Spd } else { Kind::Lu };
                        ctx.ensure(factor, ff, refresh, kind)?;
                        ctx.apply(factor.as_ref().expect("factorization"), &f, &g)?
                    }
                };
                let residual = relative_residual(ff, monolithic.then_some(&self.b_free), &x, p.as_deref(), &f, &g);
                let report = SolverReport { iterations, residual, converged: true, ..Default::default() };
                (x, p, report)
            }
            LinearSolverKind::Iterative => {
                let cfg = &self.solver;
                if monolithic {
                    let (x, p, r) = if symmetric {
                        gkb_saddle(ff, &self.b_free, &f, &g, pm, cfg)?
                    } else {
                        let pg = vec![T::zero(); pm.len()];
                        saddle_gmres(ff, &self.b_free, &f, &g, pm, guess.map(|u| (u, pg.as_slice())), cfg)?
                    };
                    (x, Some(p), r)
                } else if symmetric {
                    let (x, r) = cg_jacobi_with(ff, &f, guess, cfg, |_, _| {})?;
                    (x, None, r)
                } else {
                    let inv: Vec<T> = ff
                        .diagonal()
                        .iter()
                        .map(|d| if *d != T::zero() { T::one() / *d } else { T::one() })
                        .collect();
                    let (x, r) = gmres_with(ff, &inv, &f, guess, cfg)?;
                    (x, None, r)
                }
            }
        };
        report.wall_time = start.elapsed().as_secs_f64();
        if !report.converged {
            return Err(Error::StepSolve { step, message: "linear solver did not converge".into(), report });
        }
        let pressure = p.map(|p| zero_mean_adjust(PressureField { values: p }, self.mesh).values);
        Ok((Solved { velocity: self.system.dofs.join(&x, bound), pressure }, report))
    }

    fn base_full(&self, base: Base) -> &CsrMatrix<T> {
        match base {
            Base::Euler => &self.euler.full,
            Base::Bdf2 => &self.bdf2.as_ref().expect("second-order matrices").full,
        }
    }

    /// Picard iteration on `base + T(w)`, starting from the transport field `w0`.
    /// For AC, the pressure is updated after every iterate starting from `p0`.
    /// Returns the last iterate, its pressure and the transport field it used.
    #[allow(clippy::too_many_arguments)]
    fn picard(
        &mut self,
        base: Base,
        rhs: &[T],
        bound: &[T],
        w0: HybridVelocity<T>,
        p0: Option<&PressureField<T>>,
        diag: &mut StepDiagnostics,
    ) -> Result<(HybridVelocity<T>, PressureField<T>, HybridVelocity<T>)> {
        let nf = self.system.dofs.n_free();
        let mut w = w0;
        let mut p = p0.cloned().unwrap_or_else(|| PressureField::zeros(self.mesh));
        let mut guess: Option<Vec<T>> = None;
        let tol = T::of(self.config.picard_tol);
        for k in 1..=self.config.picard_max {
            let tmat = convection_matrix(self.mesh, &self.system.dofs, &w);
            let full = CsrMatrix::linear_combination(T::one(), self.base_full(base), T::one(), &tmat);
            let (ff, fb) = self.system.dofs.split_columns(&full, 0..nf);
            let mut r = rhs.to_vec();
            if p0.is_some() {
                self.subtract_pressure(&mut r, &p);
            }
            let (sol, report) = self.solve(Which::Varying(base, &ff, &fb), &r, bound, guess.as_deref())?;
            diag.absorb(&report);
            diag.picard_iterations = k;
            let u = self.system.dofs.to_velocity(&sol.velocity);
            p = match (p0, sol.pressure) {
                (Some(_), _) => self.pressure_update(&p, &sol.velocity),
                (None, Some(values)) => PressureField { values },
                (None, None) => unreachable!("monolithic solve returns a pressure"),
            };
            let increment = cell_l2_norm(&u.sub(&w), self.mesh);
            if increment <= tol * cell_l2_norm(&u, self.mesh) {
                diag.picard_converged = true;
                return Ok((u, p, w));
            }
            guess = Some(sol.velocity[..nf].to_vec());
            if k == self.config.picard_max {
                log::warn!("Picard iteration reached {k} iterations at step {}", self.step_index);
                return Ok((u, p, w));
            }
            w = u;
        }
        unreachable!("picard_max is at least one")
    }

    fn finish(
        &self,
        state: &StepState<T>,
        velocity: HybridVelocity<T>,
        pressure: PressureField<T>,
        track1: Option<Track<T>>,
        mut diag: StepDiagnostics,
    ) -> (StepState<T>, StepDiagnostics) {
        let n = state.n + 1;
        let x = self.system.dofs.to_vector(&velocity);
        diag.n = n;
        diag.time = self.time(n).as_f64();
        diag.kinetic_energy = kinetic_energy(&velocity, self.mesh).as_f64();
        diag.divergence_norm = self.divergence_norm(&x).as_f64();
        let next = StepState {
            n,
            time: self.time(n),
            velocity,
            pressure,
            previous: Some(state.velocity.clone()),
            track1,
        };
        (next, diag)
    }

    /// First-order monolithic step (Picard or explicit convection).
    pub fn step_monolithic_o1(&mut self, state: &StepState<T>) -> Result<(StepState<T>, StepDiagnostics)> {
        self.step_index = state.n + 1;
        let t = self.time(state.n + 1);
        let bound = self.boundary(t);
        let u_old = &state.velocity;
        let mut rhs = self.mass_rhs(&[(T::one() / self.dt, u_old)], t);
        let mut diag = StepDiagnostics { picard_converged: true, ..Default::default() };
        let (u, p, transport) = match self.config.convection {
            ConvectionMode::Implicit => {
                diag.picard_converged = false;
                let (u, p, w) = self.picard(Base::Euler, &rhs, &bound, u_old.clone(), None, &mut diag)?;
                (u, p, Some(w))
            }
            mode => {
                if mode == ConvectionMode::Explicit {
                    self.subtract_convection(&mut rhs, T::one(), u_old, u_old);
                }
                let (sol, report) = self.solve(Which::Constant(Base::Euler), &rhs, &bound, None)?;
                diag.absorb(&report);
                let u = self.system.dofs.to_velocity(&sol.velocity);
                (u, PressureField { values: sol.pressure.expect("monolithic pressure") }, None)
            }
        };
        if self.config.convection != ConvectionMode::Explicit {
            diag.energy_residual = Some(self.energy_residual(u_old, &u, &p, transport.as_ref(), t).as_f64());
        }
        Ok(self.finish(state, u, p, None, diag))
    }

    /// Residual of the kinetic energy balance of a first-order monolithic step:
    /// `E(u) − E(u_old) + E(u − u_old) + Δt [ν a(u, u) + t(w; u, u) − l(u)
    ///  − ν a(u, L) − t(w; u, L) − b(L, p)]`, where `L` carries the boundary data.
    /// The bracketed boundary work vanishes for homogeneous data.
    pub(crate) fn energy_residual(
        &self,
        u_old: &HybridVelocity<T>,
        u: &HybridVelocity<T>,
        p: &PressureField<T>,
        transport: Option<&HybridVelocity<T>>,
        t: T,
    ) -> T {
        let dofs = self.dofs();
        let x = dofs.to_vector(u);
        let mut lift = vec![T::zero(); dofs.n_full()];
        lift[dofs.n_free()..].copy_from_slice(&x[dofs.n_free()..]);
        let interior: Vec<T> = x.iter().zip(&lift).map(|(a, b)| *a - *b).collect();
        let dot = |a: &[T], b: &[T]| a.iter().zip(b).map(|(x, y)| *x * *y).sum::<T>();
        let au = self.system.diffusion.mul_vec(&x);
        let mut work = self.nu * dot(&au, &interior);
        if let Some(w) = transport {
            let tu = dofs.to_vector(&convection_apply(self.mesh, w, u));
            work += dot(&tu, &interior);
        }
        work -= dot(&self.system.coupling.mul_vec(&lift), &p.values);
        if self.case.has_forcing() {
            let l = crate::operators::assemble_source(self.mesh, &self.quad, |t, x| self.case.forcing(t, x), t);
            work -= dot(&l, &x);
        }
        let energy = kinetic_energy(u, self.mesh) - kinetic_energy(u_old, self.mesh)
            + kinetic_energy(&u.sub(u_old), self.mesh);
        energy + self.dt * work
    }

    /// BDF2 monolithic step; the first step is an implicit Euler step.
    pub fn step_monolithic_o2(&mut self, state: &StepState<T>) -> Result<(StepState<T>, StepDiagnostics)> {
        let Some(u2) = state.previous.clone() else {
            return self.step_monolithic_o1(state);
        };
        self.step_index = state.n + 1;
        let t = self.time(state.n + 1);
        let bound = self.boundary(t);
        let u1 = &state.velocity;
        let h = T::of(0.5) / self.dt;
        let mut rhs = self.mass_rhs(&[(T::of(4.0) * h, u1), (-h, &u2)], t);
        let mut diag = StepDiagnostics { picard_converged: true, ..Default::default() };
        let (u, p) = match self.config.convection {
            ConvectionMode::Implicit => {
                diag.picard_converged = false;
                let w0 = u1.combine(T::of(2.0), &u2, -T::one());
                let (u, p, _) = self.picard(Base::Bdf2, &rhs, &bound, w0, None, &mut diag)?;
                (u, p)
            }
            mode => {
                if mode == ConvectionMode::Explicit {
                    self.subtract_convection(&mut rhs, T::of(2.0), u1, u1);
                    self.subtract_convection(&mut rhs, -T::one(), &u2, &u2);
                }
                let (sol, report) = self.solve(Which::Constant(Base::Bdf2), &rhs, &bound, None)?;
                diag.absorb(&report);
                (
                    self.system.dofs.to_velocity(&sol.velocity),
                    PressureField { values: sol.pressure.expect("monolithic pressure") },
                )
            }
        };
        Ok(self.finish(state, u, p, None, diag))
    }

    /// First-order AC step: grad-div penalized velocity solve, then
    /// `p = p_prev − ν η D_h(u)` (after every Picard iterate in implicit mode).
    pub fn step_ac_o1(&mut self, state: &StepState<T>) -> Result<(StepState<T>, StepDiagnostics)> {
        self.step_index = state.n + 1;
        let t = self.time(state.n + 1);
        let bound = self.boundary(t);
        let mut diag = StepDiagnostics { picard_converged: true, ..Default::default() };
        let (u, p) = if self.config.convection == ConvectionMode::Implicit {
            diag.picard_converged = false;
            let rhs = self.mass_rhs(&[(T::one() / self.dt, &state.velocity)], t);
            let (u, p, _) =
                self.picard(Base::Euler, &rhs, &bound, state.velocity.clone(), Some(&state.pressure), &mut diag)?;
            (u, p)
        } else {
            self.ac_explicit_euler(&state.velocity, &state.pressure, t, &bound, &mut diag)?
        };
        Ok(self.finish(state, u, p, None, diag))
    }

    fn ac_explicit_euler(
        &mut self,
        u_old: &HybridVelocity<T>,
        p_old: &PressureField<T>,
        t: T,
        bound: &[T],
        diag: &mut StepDiagnostics,
    ) -> Result<(HybridVelocity<T>, PressureField<T>)> {
        let mut rhs = self.mass_rhs(&[(T::one() / self.dt, u_old)], t);
        self.subtract_pressure(&mut rhs, p_old);
        if self.config.convection == ConvectionMode::Explicit {
            self.subtract_convection(&mut rhs, T::one(), u_old, u_old);
        }
        let (sol, report) = self.solve(Which::Constant(Base::Euler), &rhs, bound, None)?;
        diag.absorb(&report);
        let p = self.pressure_update(p_old, &sol.velocity);
        Ok((self.system.dofs.to_velocity(&sol.velocity), p))
    }

    /// Second-order AC step by bootstrapping: the first-order track supplies the
    /// pressure increment `δp₁ⁿ` used as the pressure predictor of the BDF2 track.
    /// At `n = 1` only the first-order track runs and seeds the second one.
    pub fn step_ac_o2_bootstrap(&mut self, state: &StepState<T>) -> Result<(StepState<T>, StepDiagnostics)> {
        self.step_index = state.n + 1;
        let t = self.time(state.n + 1);
        let bound = self.boundary(t);
        let mut diag = StepDiagnostics { picard_converged: true, ..Default::default() };
        let (track_u, track_p) = match &state.track1 {
            Some(tr) => (tr.velocity.clone(), tr.pressure.clone()),
            None => (state.velocity.clone(), state.pressure.clone()),
        };
        let (u1, p1) = self.ac_explicit_euler(&track_u, &track_p, t, &bound, &mut diag)?;
        let Some(u_older) = state.previous.clone() else {
            let track = Track { velocity: u1.clone(), pressure: p1.clone() };
            return Ok(self.finish(state, u1, p1, Some(track), diag));
        };
        let increment: Vec<T> = p1.values.iter().zip(&track_p.values).map(|(a, b)| *a - *b).collect();
        let predictor = PressureField {
            values: state.pressure.values.iter().zip(&increment).map(|(a, b)| *a + *b).collect(),
        };
        let h = T::of(0.5) / self.dt;
        let u_prev = &state.velocity;
        let mut rhs = self.mass_rhs(&[(T::of(4.0) * h, u_prev), (-h, &u_older)], t);
        self.subtract_pressure(&mut rhs, &predictor);
        if self.config.convection == ConvectionMode::Explicit {
            self.subtract_convection(&mut rhs, T::of(2.0), u_prev, u_prev);
            self.subtract_convection(&mut rhs, -T::one(), &u_older, &u_older);
        }
        let (sol, report) = self.solve(Which::Constant(Base::Bdf2), &rhs, &bound, None)?;
        diag.absorb(&report);
        let p2 = self.pressure_update(&predictor, &sol.velocity);
        let u2 = self.system.dofs.to_velocity(&sol.velocity);
        Ok(self.finish(state, u2, p2, Some(Track { velocity: u1, pressure: p1 }), diag))
    }
}

/// `‖[f − A x − Bᵀp; g − B x]‖ / ‖[f; g]‖`.
/// Relative tolerance of the Krylov solves of Picard systems preconditioned by
/// the factorization of the constant part.
const KRYLOV_TOL: f64 = 1e-13;
const KRYLOV_MAX_ITER: usize = 60;

struct DirectContext<'m, T> {
    b_faces: &'m CsrMatrix<T>,
    b_free: &'m CsrMatrix<T>,
    pm: &'m [T],
    monolithic: bool,
    deflate: bool,
}

impl<T: Real> DirectContext<'_, T> {
    /// Builds the factorization when missing, or refactors when `refresh`. An
    /// exact LU factorization is kept when `Kind::Spd` is requested.
    fn ensure(&self, factor: &mut Option<Factor<T>>, ff: &CsrMatrix<T>, refresh: bool, kind: Kind) -> Result<()> {
        let current = factor.as_ref().map(|f| f.kind());
        if current.is_some() && !refresh && !(kind == Kind::Lu && current == Some(Kind::Spd)) {
            return Ok(());
        }
        if kind == Kind::Lu && current == Some(Kind::Spd) {
            *factor = None;
        }
        let split = self.b_faces.ncols();
        let condensation = DiagonalCondensation::new(ff, split);
        let reduced = condensation.as_ref().map_or(ff, |c| c.reduced());
        let b = if condensation.is_some() { self.b_faces } else { self.b_free };
        if factor.as_ref().is_some_and(|f| f.condensation.is_some() != condensation.is_some()) {
            *factor = None;
        }
        match factor {
            Some(Factor { solver: Solver::Plain(s), .. }) => s.refactor(reduced)?,
            Some(Factor { solver: Solver::Saddle(s), .. }) => s.refactor(reduced)?,
            Some(Factor { solver: Solver::Regularized(s), .. }) => s.refactor(reduced)?,
            None => {
                let solver = match (self.monolithic, kind) {
                    (true, Kind::Spd) => Solver::Regularized(SaddleLdlt::new(reduced, b, self.pm)?),
                    (true, Kind::Lu) => Solver::Saddle(SaddleDirect::new(reduced, b, self.pm)?),
                    (false, Kind::Spd) => Solver::Plain(DirectSolver::new_spd(reduced)?),
                    (false, Kind::Lu) => Solver::Plain(DirectSolver::new(reduced)?),
                };
                *factor = Some(Factor { solver, condensation: None });
            }
        }
        factor.as_mut().expect("factorization").condensation = condensation;
        Ok(())
    }

    fn apply(&self, fac: &Factor<T>, f: &[T], g: &[T]) -> Result<(Vec<T>, Option<Vec<T>>)> {
        let rhs = fac.condensation.as_ref().map_or_else(|| f.to_vec(), |c| c.reduce_rhs(f));
        let (x, p) = match &fac.solver {
            Solver::Plain(s) => (s.solve(&rhs)?, None),
            Solver::Saddle(s) => {
                let (x, p) = s.solve(&rhs, g)?;
                (x, Some(p))
            }
            Solver::Regularized(s) => {
                let (x, p) = s.solve(&rhs, g)?;
                (x, Some(p))
            }
        };
        let x = match &fac.condensation {
            Some(c) => c.recover(&x, f),
            None => x,
        };
        Ok((x, p))
    }

    /// GMRES on `ff` (bordered by the coupling for the monolithic scheme),
    /// preconditioned by `fac`. `None` when it does not reach the tolerance.
    #[allow(clippy::type_complexity)]
    fn krylov(
        &self,
        fac: &Factor<T>,
        ff: &CsrMatrix<T>,
        f: &[T],
        g: &[T],
        step: usize,
    ) -> Result<Option<(Vec<T>, Option<Vec<T>>, usize)>> {
        let cfg = SolverConfig { max_iter: KRYLOV_MAX_ITER, restart: KRYLOV_MAX_ITER, ..SolverConfig::with_tol(KRYLOV_TOL) };
        let nf = ff.nrows();
        let result = if self.monolithic {
            let op = SaddleOperator { a: ff, b: self.b_free };
            let mut rhs = f.to_vec();
            rhs.extend_from_slice(g);
            if self.deflate {
                remove_sum(&mut rhs[nf..]);
            }
            let precond = |v: &[T], z: &mut [T]| -> Result<()> {
                let (x, p) = self.apply(fac, &v[..nf], &v[nf..])?;
                z[..nf].copy_from_slice(&x);
                z[nf..].copy_from_slice(&p.expect("saddle factorization returns a pressure"));
                Ok(())
            };
            let (mut x, report) = gmres_preconditioned(&op, precond, &rhs, None, &cfg)?;
            let mut p = x.split_off(nf);
            if self.deflate {
                remove_weighted_mean(&mut p, self.pm);
            }
            (x, Some(p), report)
        } else {
            let precond = |v: &[T], z: &mut [T]| -> Result<()> {
                z.copy_from_slice(&self.apply(fac, v, &[])?.0);
                Ok(())
            };
            let (x, report) = gmres_preconditioned(ff, precond, f, None, &cfg)?;
            (x, None, report)
        };
        let (x, p, report) = result;
        if !report.converged {
            log::debug!("step {step}: preconditioned GMRES stalled at {:e}, refactoring", report.residual);
            return Ok(None);
        }
        Ok(Some((x, p, report.iterations)))
    }
}

/// `[A Bᵀ; B 0]` as an operator.
struct SaddleOperator<'m, T> {
    a: &'m CsrMatrix<T>,
    b: &'m CsrMatrix<T>,
}

impl<T: Real> LinearOperator<T> for SaddleOperator<'_, T> {
    fn dim(&self) -> usize {
        self.a.nrows() + self.b.nrows()
    }

    fn apply(&self, x: &[T], y: &mut [T]) {
        let n = self.a.nrows();
        let (xu, xp) = x.split_at(n);
        let (yu, yp) = y.split_at_mut(n);
        self.a.mul_vec_into(xu, yu);
        self.b.transpose_mul_add(xp, T::one(), yu);
        self.b.mul_vec_into(xu, yp);
    }
}

fn relative_residual<T: Real>(
    a: &CsrMatrix<T>,
    b: Option<&CsrMatrix<T>>,
    x: &[T],
    p: Option<&[T]>,
    f: &[T],
    g: &[T],
) -> f64 {
    let mut r: Vec<T> = a.mul_vec(x).iter().zip(f).map(|(ax, fi)| *fi - *ax).collect();
    let mut s = T::zero();
    let mut scale: T = f.iter().map(|v| *v * *v).sum();
    if let (Some(b), Some(p)) = (b, p) {
        b.transpose_mul_add(p, -T::one(), &mut r);
        let bx = b.mul_vec(x);
        s = bx.iter().zip(g).map(|(bx, gi)| (*gi - *bx) * (*gi - *bx)).sum();
        scale += g.iter().map(|v| *v * *v).sum::<T>();
    }
    let num = (r.iter().map(|v| *v * *v).sum::<T>() + s).sqrt();
    let den = scale.sqrt();
    if den > T::zero() {
        (num / den).as_f64()
    } else {
        num.as_f64()
    }
}
