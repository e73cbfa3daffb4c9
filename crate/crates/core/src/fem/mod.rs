//! Q1 finite element layer on uniform Cartesian grids.

pub mod assembly;
pub mod mesh;
pub mod solve;
pub mod sparse;

pub use assembly::{assemble_energy, assemble_load, energy_norm, nodal_product};
pub use mesh::{CellBox, DofSet, StructuredMesh};
pub use solve::{solve_spd, solve_spd_with, BandCholesky, SolverOptions};
pub use sparse::SymmetricSparseOperator;
