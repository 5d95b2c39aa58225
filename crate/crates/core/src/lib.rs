//! Lowest-order face-based hybrid discretization of the unsteady incompressible
//! Navier–Stokes equations on polytopal meshes.

pub mod bench;
pub mod error;
pub mod geom;
pub mod linalg;
pub mod mesh;
pub mod operators;
pub mod scalar;
pub mod spaces;
pub mod timestep;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Mesh = mesh::PolytopalMesh<f64>;
pub type Velocity = spaces::HybridVelocity<f64>;
pub type Pressure = spaces::PressureField<f64>;
pub type System = operators::GlobalSystem<f64>;
pub type Csr = linalg::CsrMatrix<f64>;
pub type State = timestep::StepState<f64>;
pub type Run = timestep::RunResult<f64>;
