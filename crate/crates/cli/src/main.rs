use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use cdofb::bench::{run_case, run_cfl_case, seeded_bracket, CflSearchSpec, RunConfig};
use cdofb::mesh::{read_mesh, write_mesh, BoxDomain};
use cdofb::Mesh;

/// Exit code of runs flagged as diverged.
const EXIT_DIVERGED: u8 = 2;

#[derive(Parser)]
#[command(name = "cdofb-ns", version, about = "Face-based hybrid Navier-Stokes solver and benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override a config entry, e.g. `--set scheme.dt=0.05` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Single run; writes errors.json, diagnostics.csv and rates.csv.
    Run(ConfigArgs),
    /// Temporal convergence sweep over `dt_list` (or `--dts`).
    SweepDt {
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated time steps, overriding `dt_list`.
        #[arg(long, value_delimiter = ',')]
        dts: Option<Vec<f64>>,
    },
    /// Critical time step by bisection; writes probes.csv and cfl.json.
    CflSearch {
        #[command(flatten)]
        config: ConfigArgs,
        /// `lo,hi` bracket, overriding `cfl.bracket` and the seeded default.
        #[arg(long, value_delimiter = ',', num_args = 1)]
        bracket: Option<Vec<f64>>,
        #[arg(long)]
        resolution: Option<f64>,
    },
    /// Mesh generation and validation.
    Mesh {
        #[command(subcommand)]
        command: MeshCommand,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MeshKind {
    Cartesian,
    Voronoi,
}

#[derive(Subcommand)]
enum MeshCommand {
    /// Generates a mesh file.
    Gen {
        #[arg(long, value_enum)]
        kind: MeshKind,
        /// Cells per axis (cartesian), e.g. `16,16` or `8,8,8`.
        #[arg(long, value_delimiter = ',')]
        cells: Option<Vec<usize>>,
        /// Number of sites (voronoi).
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long, default_value_t = 0.3)]
        jitter: f64,
        #[arg(long, default_value_t = 0)]
        rng_seed: u64,
        /// Box corners `x0,y0[,z0]`/`x1,y1[,z1]`; the unit box by default.
        #[arg(long, value_delimiter = ',')]
        lo: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        hi: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reads and validates a mesh file, printing its statistics.
    Check { path: PathBuf },
}

fn corner(v: Option<Vec<f64>>, default: f64) -> Result<[f64; 3]> {
    let mut out = [default, default, default];
    if let Some(v) = v {
        if !(2..=3).contains(&v.len()) {
            bail!("box corners take 2 or 3 coordinates, got {}", v.len());
        }
        out[..v.len()].copy_from_slice(&v);
    }
    Ok(out)
}

fn mesh_stats(mesh: &Mesh) -> serde_json::Value {
    serde_json::json!({
        "dim": mesh.dim(),
        "vertices": mesh.n_vertices(),
        "faces": mesh.n_faces(),
        "boundary_faces": mesh.boundary_faces().len(),
        "cells": mesh.n_cells(),
        "h": mesh.size(),
        "measure": mesh.domain_measure(),
    })
}

fn mesh_command(cmd: MeshCommand) -> Result<()> {
    match cmd {
        MeshCommand::Gen { kind, cells, seeds, jitter, rng_seed, lo, hi, out } => {
            let domain = BoxDomain::new(corner(lo, 0.0)?, corner(hi, 1.0)?);
            let mesh = match kind {
                MeshKind::Cartesian => {
                    let cells = cells.context("--cells is required for cartesian meshes")?;
                    cdofb::mesh::build_cartesian(cells.len(), &cells, &domain)?
                }
                MeshKind::Voronoi => {
                    let seeds = seeds.context("--seeds is required for voronoi meshes")?;
                    cdofb::mesh::build_voronoi_polygonal_2d(seeds, &domain, jitter, rng_seed)?
                }
            };
            write_mesh(&mesh, &out)?;
            println!("{}", mesh_stats(&mesh));
        }
        MeshCommand::Check { path } => {
            let mesh: Mesh = read_mesh(&path)?;
            mesh.validate().with_context(|| format!("{} failed validation", path.display()))?;
            println!("{}", mesh_stats(&mesh));
        }
    }
    Ok(())
}

fn load(args: &ConfigArgs) -> Result<RunConfig> {
    RunConfig::load(&args.config, &args.overrides)
        .with_context(|| format!("cannot load config {}", args.config.display()))
}

fn execute(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Run(args) => {
            let mut cfg = load(&args)?;
            cfg.dt_list = None;
            let out = run_case(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&out.summary)?);
            Ok(if out.diverged { EXIT_DIVERGED } else { 0 })
        }
        Command::SweepDt { config, dts } => {
            let mut cfg = load(&config)?;
            if let Some(dts) = dts {
                cfg.dt_list = Some(dts);
            }
            if cfg.dt_list.is_none() {
                bail!("sweep-dt needs dt_list in the config or --dts");
            }
            cfg.resolve()?;
            let out = run_case(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&out.summary["rates"])?);
            Ok(if out.diverged { EXIT_DIVERGED } else { 0 })
        }
        Command::CflSearch { config, bracket, resolution } => {
            let mut cfg = load(&config)?;
            if let Some(b) = bracket {
                if b.len() != 2 {
                    bail!("--bracket takes lo,hi");
                }
                let spec = cfg.cfl.get_or_insert(CflSearchSpec::new([b[0], b[1]]));
                spec.bracket = [b[0], b[1]];
            }
            if let Some(r) = resolution {
                let re = cfg.case.reynolds()?;
                let seeded = seeded_bracket(re, cfg.scheme.coupling, cfg.scheme.order, 0.15);
                cfg.cfl.get_or_insert(CflSearchSpec::new(seeded)).resolution = r;
            }
            cfg.resolve()?;
            let res = run_cfl_case(&cfg)?;
            println!("critical dt = {:.6e} (first diverging {:.6e}, {} probes)", res.critical_dt, res.upper, res.probes.len());
            Ok(0)
        }
        Command::Mesh { command } => mesh_command(command).map(|_| 0),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
