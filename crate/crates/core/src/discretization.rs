use crate::error::Result;
use crate::geometry::{build_disk_mesh, compute_boundary_frame, BoundaryFrame, DiskMesh};
use crate::spaces::SpaceOperators;

/// Mesh, boundary frame and P1 operators shared by every solver on one mesh.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: DiskMesh,
    pub frame: BoundaryFrame,
    pub ops: SpaceOperators,
}

impl Discretization {
    pub fn new(mesh: DiskMesh) -> Result<Self> {
        let frame = compute_boundary_frame(&mesh)?;
        let ops = SpaceOperators::assemble(&mesh);
        Ok(Self { mesh, frame, ops })
    }

    pub fn disk(n_rings: usize, radius: f64) -> Result<Self> {
        Self::new(build_disk_mesh(n_rings, radius)?)
    }

    pub fn nv(&self) -> usize {
        self.mesh.n_vertices()
    }

    pub fn nb(&self) -> usize {
        self.mesh.n_boundary()
    }

    /// Bulk vertex index of each boundary vertex, in loop order.
    pub fn boundary_vertices(&self) -> &[usize] {
        &self.mesh.boundary_loop
    }
}
