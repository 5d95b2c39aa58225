use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{cfl_search, convergence_rates, CaseSpec, CflProbe, CflResult, CflSearchSpec};
use crate::mesh::{build_cartesian, build_voronoi_polygonal_2d, read_mesh, BoxDomain, PolytopalMesh};
use crate::timestep::{run_simulation, RunResult, SchemeConfig};
use crate::{Error, Result};

/// Mesh selection of a run config. Generated meshes cover the case domain
/// unless `domain` is given as `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeshSpec {
    Cartesian {
        cells: Vec<usize>,
        #[serde(default)]
        domain: Option<[[f64; 3]; 2]>,
    },
    Voronoi {
        seeds: usize,
        #[serde(default = "default_jitter")]
        jitter: f64,
        #[serde(default)]
        rng_seed: u64,
        #[serde(default)]
        domain: Option<[[f64; 3]; 2]>,
    },
    File {
        path: PathBuf,
    },
}

fn default_jitter() -> f64 {
    0.3
}

impl MeshSpec {
    pub fn build(&self, case: &CaseSpec) -> Result<PolytopalMesh<f64>> {
        let domain = |d: &Option<[[f64; 3]; 2]>| match d {
            Some([lo, hi]) => BoxDomain::new(*lo, *hi),
            None => case.domain(),
        };
        let mesh = match self {
            MeshSpec::Cartesian { cells, domain: d } => build_cartesian(cells.len(), cells, &domain(d))?,
            MeshSpec::Voronoi { seeds, jitter, rng_seed, domain: d } => {
                build_voronoi_polygonal_2d(*seeds, &domain(d), *jitter, *rng_seed)?
            }
            MeshSpec::File { path } => read_mesh(path)?,
        };
        if mesh.dim() != case.dim() {
            return Err(Error::invalid(format!(
                "mesh dimension {} does not match the {}D case",
                mesh.dim(),
                case.dim()
            )));
        }
        Ok(mesh)
    }
}

/// JSON run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mesh: MeshSpec,
    pub case: CaseSpec,
    /// The viscosity is taken from the case.
    #[serde(default)]
    pub scheme: SchemeConfig,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Time steps of a convergence sweep; a single run at `scheme.dt` when absent.
    #[serde(default)]
    pub dt_list: Option<Vec<f64>>,
    /// Critical-time-step search parameters.
    #[serde(default)]
    pub cfl: Option<CflSearchSpec>,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    /// Reads a config file and applies `key=value` overrides (dotted keys,
    /// values parsed as JSON and falling back to strings).
    pub fn load(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut value: Value = serde_json::from_str(&text)
            .map_err(|e| Error::Parse { location: path.display().to_string(), message: e.to_string() })?;
        for o in overrides {
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("override {o:?} is not of the form key=value")))?;
            apply_override(&mut value, key.trim(), raw.trim())?;
        }
        let mut cfg: RunConfig = serde_json::from_value(value)
            .map_err(|e| Error::Parse { location: path.display().to_string(), message: e.to_string() })?;
        cfg.resolve()?;
        Ok(cfg)
    }

    /// Copies the case viscosity into the scheme and validates.
    pub fn resolve(&mut self) -> Result<()> {
        self.scheme.viscosity = self.case.viscosity()?;
        self.scheme.validate()?;
        if let Some(dts) = &self.dt_list {
            if dts.is_empty() || dts.iter().any(|d| !(*d > 0.0)) {
                return Err(Error::invalid("dt_list must hold positive time steps"));
            }
        }
        if let Some(spec) = &self.cfl {
            spec.validate()?;
        }
        Ok(())
    }
}

/// Sets `key` (dotted path) of a JSON object, creating intermediate objects.
pub fn apply_override(root: &mut Value, key: &str, raw: &str) -> Result<()> {
    if key.is_empty() {
        return Err(Error::invalid("empty override key"));
    }
    let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if !node.is_object() {
            if node.is_null() {
                *node = json!({});
            } else {
                return Err(Error::invalid(format!("override {key}: {} is not an object", parts[..i].join("."))));
            }
        }
        let map = node.as_object_mut().expect("object");
        if i + 1 == parts.len() {
            map.insert(part.to_string(), parsed);
            return Ok(());
        }
        node = map.entry(part.to_string()).or_insert(Value::Null);
    }
    unreachable!()
}

/// Summary of a CLI run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// Some run was flagged as diverged.
    pub diverged: bool,
    pub summary: Value,
}

struct SweepRow {
    dt: f64,
    run: RunResult<f64>,
}

fn meta(cfg: &RunConfig, mesh: &PolytopalMesh<f64>) -> Result<Value> {
    Ok(json!({
        "case": cfg.case,
        "viscosity": cfg.scheme.viscosity,
        "reynolds": cfg.case.reynolds()?,
        "mesh": cfg.mesh,
        "n_cells": mesh.n_cells(),
        "n_faces": mesh.n_faces(),
        "h": mesh.size(),
    }))
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes `label,dt_coarse,dt_fine,velocity_l2,velocity_h1,pressure_l2`.
pub fn write_rates_csv(path: &Path, rows: &[(String, f64, f64, [f64; 3])]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["label", "dt_coarse", "dt_fine", "velocity_l2", "velocity_h1", "pressure_l2"])?;
    for (label, a, b, r) in rows {
        w.write_record([
            label.clone(),
            format!("{a:.6e}"),
            format!("{b:.6e}"),
            format!("{:.4}", r[0]),
            format!("{:.4}", r[1]),
            format!("{:.4}", r[2]),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `dt,diverged,divergence_time`.
pub fn write_probes_csv(path: &Path, probes: &[CflProbe]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["dt", "diverged", "divergence_time"])?;
    for p in probes {
        w.write_record([
            format!("{:.8e}", p.dt),
            p.diverged.to_string(),
            p.divergence_time.map(|t| format!("{t:.8e}")).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Runs a config: a single run, or a sweep over `dt_list`. Writes
/// `errors.json`, `diagnostics.csv` and `rates.csv` to the output directory
/// (sweeps also write one `dt_<k>/diagnostics.csv` per step size, and the
/// top-level diagnostics are those of the last run).
pub fn run_case(cfg: &RunConfig) -> Result<RunOutcome> {
    let mesh = cfg.mesh.build(&cfg.case)?;
    let case = cfg.case.flow_case::<f64>()?;
    let out = &cfg.output_dir;
    create_dir(out)?;
    let dts = cfg.dt_list.clone().unwrap_or_else(|| vec![cfg.scheme.dt]);
    let sweep = cfg.dt_list.is_some();
    let mut rows = Vec::new();
    for (k, &dt) in dts.iter().enumerate() {
        let scheme = SchemeConfig { dt, ..cfg.scheme.clone() };
        let run = run_simulation(&mesh, &scheme, case.as_ref())?;
        if sweep {
            let dir = out.join(format!("dt_{k}"));
            create_dir(&dir)?;
            run.write_diagnostics_csv(dir.join("diagnostics.csv"))?;
        }
        rows.push(SweepRow { dt, run });
    }
    let last = rows.last().expect("at least one run");
    last.run.write_diagnostics_csv(out.join("diagnostics.csv"))?;

    let mut rates = Vec::new();
    let complete: Vec<&SweepRow> = rows.iter().filter(|r| r.run.errors.is_some()).collect();
    if complete.len() == rows.len() && rows.len() > 1 {
        let col = |k: usize| {
            complete.iter().map(|r| r.run.errors.as_ref().unwrap().normalized.as_array()[k]).collect::<Vec<_>>()
        };
        let (a, b, c) = (convergence_rates(&col(0)), convergence_rates(&col(1)), convergence_rates(&col(2)));
        let label = format!("{:?}_o{}", cfg.scheme.coupling, cfg.scheme.order).to_lowercase();
        for i in 0..a.len() {
            rates.push((label.clone(), rows[i].dt, rows[i + 1].dt, [a[i], b[i], c[i]]));
        }
    }
    write_rates_csv(&out.join("rates.csv"), &rates)?;

    let diverged = rows.iter().any(|r| r.run.diverged);
    let runs: Vec<Value> = rows
        .iter()
        .map(|r| {
            let mut s = r.run.summary();
            s["dt"] = json!(r.dt);
            s
        })
        .collect();
    let summary = json!({
        "meta": meta(cfg, &mesh)?,
        "diverged": diverged,
        "divergence_time": rows.iter().find_map(|r| r.run.divergence_time),
        "runs": runs,
        "rates": rates.iter().map(|(l, a, b, r)| json!({
            "label": l, "dt_coarse": a, "dt_fine": b,
            "velocity_l2": r[0], "velocity_h1": r[1], "pressure_l2": r[2],
        })).collect::<Vec<_>>(),
    });
    write_json(&out.join("errors.json"), &summary)?;
    Ok(RunOutcome { diverged, summary })
}

/// Critical-time-step search for a config. The bracket defaults to the seeded
/// one for the case Reynolds number. Writes `probes.csv` and `cfl.json`.
pub fn run_cfl_case(cfg: &RunConfig) -> Result<CflResult> {
    let mesh = cfg.mesh.build(&cfg.case)?;
    let case = cfg.case.flow_case::<f64>()?;
    let spec = match cfg.cfl {
        Some(s) => s,
        None => CflSearchSpec::new(super::seeded_bracket(cfg.case.reynolds()?, cfg.scheme.coupling, cfg.scheme.order, 0.15)),
    };
    create_dir(&cfg.output_dir)?;
    let result = cfl_search(&mesh, case.as_ref(), &cfg.scheme, &spec);
    // The probe log is worth keeping even when the bracket was wrong.
    let result = result?;
    write_probes_csv(&cfg.output_dir.join("probes.csv"), &result.probes)?;
    write_json(
        &cfg.output_dir.join("cfl.json"),
        &json!({ "meta": meta(cfg, &mesh)?, "spec": spec, "scheme": cfg.scheme, "result": result }),
    )?;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_set_nested_keys() {
        let mut v = json!({"scheme": {"dt": 0.1}});
        apply_override(&mut v, "scheme.dt", "0.05").unwrap();
        apply_override(&mut v, "scheme.coupling", "artificial_compressibility").unwrap();
        apply_override(&mut v, "cfl.bracket", "[0.01, 0.02]").unwrap();
        assert_eq!(v["scheme"]["dt"], json!(0.05));
        assert_eq!(v["scheme"]["coupling"], json!("artificial_compressibility"));
        assert_eq!(v["cfl"]["bracket"][1], json!(0.02));
        assert!(apply_override(&mut v, "scheme.dt.x", "1").is_err());
    }

    #[test]
    fn config_round_trip() {
        let text = r#"{
            "mesh": {"kind": "cartesian", "cells": [4, 4]},
            "case": {"id": "tgv2d", "reynolds": 1},
            "scheme": {"dt": 0.1, "final_time": 0.2, "convection": "off"},
            "output_dir": "x"
        }"#;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, text).unwrap();
        let cfg = RunConfig::load(&path, &["scheme.order=2".into()]).unwrap();
        assert_eq!(cfg.scheme.order, 2);
        assert_eq!(cfg.scheme.viscosity, 1.0);
        let err = RunConfig::load(dir.path().join("missing.json"), &[]).unwrap_err();
        assert!(err.to_string().contains("missing.json"));
    }
}
