//! Firn gas-trapping solver: P1 finite elements in depth, implicit Euler in
//! time, block forward sensitivities and gradient-based recovery of the
//! diffusion profile from end-time concentrations.

pub mod assembly;
pub mod banded;
pub mod data;
pub mod error;
pub mod experiments;
pub mod forward;
pub mod mesh;
pub mod objective;
pub mod optimize;
pub mod oracles;
pub mod sensitivity;

pub use assembly::{Atmosphere, C1Mode, DiffusionProfile, FirnParams, MassStencil};
pub use banded::{TridiagonalLu, TridiagonalMatrix};
pub use data::TestCase;
pub use error::{FirnError, Result};
pub use forward::{forward_solve, BandedSystem, ErrorReport, ForwardTrace};
pub use mesh::{Mesh, MeshKind, TimeGrid};
pub use objective::{evaluate, fd_gradient, InverseData, InverseProblem, Objective};
pub use optimize::{ncg_minimize, projected_minimize, OptimizerConfig, OptimizerReport};
pub use sensitivity::{block_sensitivity_solve, SensitivityBlock, SensitivityScheme};
