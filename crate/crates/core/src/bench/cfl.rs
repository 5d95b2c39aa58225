use serde::{Deserialize, Serialize};

use crate::geom::Point;
use crate::mesh::PolytopalMesh;
use crate::timestep::{run_simulation, ConvectionMode, Coupling, FlowCase, SchemeConfig};
use crate::{Error, Real, Result};

/// Reference critical time steps of the explicit-convection TGV on the 128²
/// Cartesian mesh: `(Re, monolithic 1st, monolithic 2nd, AC 1st, AC 2nd)`.
const REFERENCE: [(f64, [f64; 4]); 3] = [
    (200.0, [2.98e-2, 1.15e-2, 2.98e-2, 1.14e-2]),
    (500.0, [1.03e-2, 4.16e-3, 1.04e-2, 4.16e-3]),
    (700.0, [7.27e-3, 2.97e-3, 7.25e-3, 2.95e-3]),
];

/// Reference `Δt_c` for a `(Re, coupling, order)` combination, when tabulated.
pub fn critical_dt_reference(re: f64, coupling: Coupling, order: u8) -> Option<f64> {
    let (_, row) = REFERENCE.iter().find(|(r, _)| (r - re).abs() < 1e-9)?;
    let col = match (coupling, order) {
        (Coupling::Monolithic, 1) => 0,
        (Coupling::Monolithic, 2) => 1,
        (Coupling::ArtificialCompressibility, 1) => 2,
        (Coupling::ArtificialCompressibility, 2) => 3,
        _ => return None,
    };
    Some(row[col])
}

/// Bracket around the reference value (±`margin`) when available; otherwise a
/// generic bracket from the `Δt_c ∝ 1/Re` trend.
pub fn seeded_bracket(re: f64, coupling: Coupling, order: u8, margin: f64) -> [f64; 2] {
    match critical_dt_reference(re, coupling, order) {
        Some(dt) => [dt * (1.0 - margin), dt * (1.0 + margin)],
        None => {
            let scale = if order == 1 { 6.0 } else { 2.4 };
            [0.25 * scale / re, 4.0 * scale / re]
        }
    }
}

/// Critical-time-step bisection parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CflSearchSpec {
    /// `[Δt_lo, Δt_hi]`; the lower end must be stable, the upper end diverging.
    pub bracket: [f64; 2],
    /// Stop when `(hi − lo)/lo ≤ resolution`.
    pub resolution: f64,
}

impl CflSearchSpec {
    pub fn new(bracket: [f64; 2]) -> Self {
        Self { bracket, resolution: 0.01 }
    }

    /// `T Re = 10⁴` and `η = 10 Re`, explicit convection.
    pub fn scheme_for(re: f64, coupling: Coupling, order: u8) -> SchemeConfig {
        SchemeConfig {
            coupling,
            order,
            convection: ConvectionMode::Explicit,
            eta: (coupling == Coupling::ArtificialCompressibility).then_some(10.0 * re),
            final_time: 1e4 / re,
            viscosity: 1.0 / re,
            ..SchemeConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.bracket;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return Err(Error::invalid(format!("bracket must satisfy 0 < lo < hi, got [{lo}, {hi}]")));
        }
        if !(self.resolution > 0.0 && self.resolution <= 0.1) {
            return Err(Error::invalid(format!("resolution must lie in (0, 0.1], got {}", self.resolution)));
        }
        Ok(())
    }

    /// Upper bound on the number of probes: `⌈log₂(ratio/resolution)⌉ + 2`.
    pub fn max_probes(&self) -> usize {
        let ratio = self.bracket[1] / self.bracket[0] - 1.0;
        (ratio / self.resolution).log2().ceil().max(0.0) as usize + 2
    }
}

/// One bisection probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CflProbe {
    pub dt: f64,
    pub diverged: bool,
    /// Time of the first step flagged as diverged.
    pub divergence_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CflResult {
    /// Largest probed `Δt` that did not diverge.
    pub critical_dt: f64,
    /// First diverging `Δt` above it.
    pub upper: f64,
    pub probes: Vec<CflProbe>,
}

/// Bisection on `Δt` with an arbitrary stability oracle returning
/// `(diverged, divergence_time)`.
pub fn cfl_search_with(
    spec: &CflSearchSpec,
    mut probe: impl FnMut(f64) -> Result<(bool, Option<f64>)>,
) -> Result<CflResult> {
    spec.validate()?;
    let mut probes = Vec::new();
    let mut run = |dt: f64, probes: &mut Vec<CflProbe>| -> Result<bool> {
        let (diverged, divergence_time) = probe(dt)?;
        log::info!("cfl probe dt={dt:.6e} diverged={diverged}");
        probes.push(CflProbe { dt, diverged, divergence_time });
        Ok(diverged)
    };
    let [mut lo, mut hi] = spec.bracket;
    let lo_diverged = run(lo, &mut probes)?;
    let hi_diverged = run(hi, &mut probes)?;
    if lo_diverged || !hi_diverged {
        return Err(Error::invalid(format!(
            "bracket does not straddle the stability limit ([{lo:e}, {hi:e}]: lower {}, upper {})",
            if lo_diverged { "diverged" } else { "stable" },
            if hi_diverged { "diverged" } else { "stable" },
        )));
    }
    while (hi - lo) / lo > spec.resolution {
        let mid = 0.5 * (lo + hi);
        if run(mid, &mut probes)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(CflResult { critical_dt: lo, upper: hi, probes })
}

/// Bisection driven by [`run_simulation`]'s divergence flag. Only `dt` of
/// `config` varies between probes; runs halt at the first flagged step.
pub fn cfl_search<T: Real>(
    mesh: &PolytopalMesh<T>,
    case: &dyn FlowCase<T>,
    config: &SchemeConfig,
    spec: &CflSearchSpec,
) -> Result<CflResult> {
    let data = DataOnly(case);
    cfl_search_with(spec, |dt| {
        let cfg = SchemeConfig { dt, halt_on_divergence: true, ..config.clone() };
        let run = run_simulation(mesh, &cfg, &data)?;
        Ok((run.diverged, run.divergence_time))
    })
}

/// Forwards a case without its exactness, so probes skip error accumulation.
struct DataOnly<'a, T>(&'a dyn FlowCase<T>);

impl<T: Real> FlowCase<T> for DataOnly<'_, T> {
    fn velocity(&self, t: T, x: &Point<T>) -> Point<T> {
        self.0.velocity(t, x)
    }

    fn pressure(&self, t: T, x: &Point<T>) -> T {
        self.0.pressure(t, x)
    }

    fn forcing(&self, t: T, x: &Point<T>) -> Point<T> {
        self.0.forcing(t, x)
    }

    fn has_forcing(&self) -> bool {
        self.0.has_forcing()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisection_on_step_function() {
        let spec = CflSearchSpec::new([0.005, 0.02]);
        let res = cfl_search_with(&spec, |dt| Ok((dt > 0.01, None))).unwrap();
        assert!((0.0099..=0.01).contains(&res.critical_dt), "{}", res.critical_dt);
        assert!(res.probes.len() <= spec.max_probes());
    }

    #[test]
    fn bracket_must_straddle() {
        let spec = CflSearchSpec::new([0.005, 0.02]);
        let err = cfl_search_with(&spec, |_| Ok((false, None))).unwrap_err();
        assert!(err.to_string().contains("bracket does not straddle"));
        let err = cfl_search_with(&spec, |_| Ok((true, Some(1.0)))).unwrap_err();
        assert!(err.to_string().contains("bracket does not straddle"));
    }

    #[test]
    fn spec_validation() {
        assert!(CflSearchSpec { bracket: [0.02, 0.01], resolution: 0.01 }.validate().is_err());
        assert!(CflSearchSpec { bracket: [0.01, 0.02], resolution: 0.2 }.validate().is_err());
    }

    #[test]
    fn seeds_from_reference_values() {
        let [lo, hi] = seeded_bracket(200.0, Coupling::Monolithic, 1, 0.15);
        assert!(lo < 2.98e-2 && hi > 2.98e-2);
        assert_eq!(critical_dt_reference(300.0, Coupling::Monolithic, 1), None);
        let cfg = CflSearchSpec::scheme_for(700.0, Coupling::ArtificialCompressibility, 2);
        assert_eq!(cfg.eta, Some(7000.0));
        assert!((cfg.final_time * 700.0 - 1e4).abs() < 1e-9);
    }

    proptest::proptest! {
        #[test]
        fn probe_count_bound(threshold in 0.011f64..0.5, ratio in 1.05f64..40.0) {
            let lo = threshold / ratio.sqrt();
            let spec = CflSearchSpec::new([lo, lo * ratio]);
            let res = cfl_search_with(&spec, |dt| Ok((dt > threshold, None))).unwrap();
            proptest::prop_assert!(res.probes.len() <= spec.max_probes());
            proptest::prop_assert!(res.critical_dt <= threshold && res.upper > threshold);
            proptest::prop_assert!((res.upper - res.critical_dt) / res.critical_dt <= 0.01);
        }
    }
}
