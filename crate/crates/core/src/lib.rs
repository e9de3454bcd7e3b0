//! Finite-element simulator for the bulk–surface Navier–Stokes–Cahn–Hilliard system
//! with dynamic boundary conditions on a two-dimensional disk.

pub mod cahn_hilliard;
pub mod coupled;
pub mod discretization;
pub mod eigen;
pub mod elliptic;
pub mod error;
pub mod fe;
pub mod geometry;
pub mod io;
pub mod materials;
pub mod random;
pub mod spaces;
pub mod stokes;
pub mod verify;
pub mod sparse;

pub use error::{NschError, Result};
pub use geometry::{build_disk_mesh, compute_boundary_frame, BoundaryFrame, DiskMesh};
pub use materials::{chi, ModelParameters, PotentialSpec};
pub use spaces::{BulkSurfaceField, BulkVectorField, SpaceOperators};
