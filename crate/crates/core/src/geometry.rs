//! Structured polar triangulation of a disk and its boundary frame.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{NschError, Result};
use crate::fe::{norm2, TriangleGeom, Vec2};

/// Triangulated disk with a counterclockwise boundary loop.
#[derive(Debug, Clone)]
pub struct DiskMesh {
    pub vertices: Vec<Vec2>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_loop: Vec<usize>,
    pub radius: f64,
    edges: Vec<[usize; 2]>,
    triangle_edges: Vec<[usize; 3]>,
    boundary_index: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshSummary {
    pub vertices: usize,
    pub triangles: usize,
    pub boundary_vertices: usize,
    pub edges: usize,
    pub area: f64,
    pub perimeter: f64,
    pub radius: f64,
}

/// Polar mesh: ring `r` carries `6r` equally spaced vertices; each of the six sectors
/// is fanned so the whole mesh is invariant under rotation by 60°.
pub fn build_disk_mesh(n_rings: usize, radius: f64) -> Result<DiskMesh> {
    if n_rings == 0 {
        return Err(NschError::InvalidInput("n_rings must be at least 1".into()));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(NschError::InvalidInput("radius must be positive".into()));
    }
    let mut vertices = vec![[0.0, 0.0]];
    let ring_start = |r: usize| if r == 0 { 0 } else { 1 + 3 * r * (r - 1) };
    for r in 1..=n_rings {
        let rad = radius * r as f64 / n_rings as f64;
        let m = 6 * r;
        for k in 0..m {
            let a = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
            vertices.push([rad * a.cos(), rad * a.sin()]);
        }
    }
    let idx = |r: usize, k: usize| {
        if r == 0 {
            0
        } else {
            ring_start(r) + k % (6 * r)
        }
    };
    let mut triangles = Vec::with_capacity(6 * n_rings * n_rings);
    for r in 1..=n_rings {
        for s in 0..6 {
            for j in 0..r {
                let o0 = idx(r, s * r + j);
                let o1 = idx(r, s * r + j + 1);
                let i0 = idx(r - 1, s * (r - 1) + j);
                triangles.push([o0, o1, i0]);
                if j + 1 < r {
                    let i1 = idx(r - 1, s * (r - 1) + j + 1);
                    triangles.push([i0, o1, i1]);
                }
            }
        }
    }
    let boundary_loop = (0..6 * n_rings).map(|k| idx(n_rings, k)).collect();
    DiskMesh::from_parts(vertices, triangles, boundary_loop, radius)
}

fn signed_area(p: [Vec2; 3]) -> f64 {
    0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]))
}

impl DiskMesh {
    /// Validates the raw arrays and derives edge connectivity.
    pub fn from_parts(
        vertices: Vec<Vec2>,
        mut triangles: Vec<[usize; 3]>,
        boundary_loop: Vec<usize>,
        radius: f64,
    ) -> Result<Self> {
        let nv = vertices.len();
        for t in triangles.iter_mut() {
            if t.iter().any(|&v| v >= nv) {
                return Err(NschError::InvalidMesh("triangle references missing vertex".into()));
            }
            let a = signed_area([vertices[t[0]], vertices[t[1]], vertices[t[2]]]);
            if a < 0.0 {
                t.swap(1, 2);
            } else if a == 0.0 {
                return Err(NschError::InvalidMesh("degenerate triangle".into()));
            }
        }
        let mut edge_map: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut edge_count = Vec::new();
        let mut triangle_edges = Vec::with_capacity(triangles.len());
        for t in &triangles {
            let mut te = [0; 3];
            for (e, (a, b)) in [(0, 1), (1, 2), (2, 0)].into_iter().enumerate() {
                let key = (t[a].min(t[b]), t[a].max(t[b]));
                let id = *edge_map.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    edge_count.push(0usize);
                    edges.len() - 1
                });
                edge_count[id] += 1;
                te[e] = id;
            }
            triangle_edges.push(te);
        }
        let nb = boundary_loop.len();
        let n_boundary_edges = edge_count.iter().filter(|&&c| c == 1).count();
        if nb < 3 || n_boundary_edges != nb {
            return Err(NschError::InvalidMesh("boundary loop does not match boundary edges".into()));
        }
        let mut boundary_index = vec![None; nv];
        for (k, &v) in boundary_loop.iter().enumerate() {
            if v >= nv || boundary_index[v].is_some() {
                return Err(NschError::InvalidMesh("boundary loop repeats or misses vertices".into()));
            }
            boundary_index[v] = Some(k);
            let w = boundary_loop[(k + 1) % nb];
            match edge_map.get(&(v.min(w), v.max(w))) {
                Some(&e) if edge_count[e] == 1 => {}
                _ => return Err(NschError::InvalidMesh("consecutive loop entries share no boundary edge".into())),
            }
        }
        let mesh = Self { vertices, triangles, boundary_loop, radius, edges, triangle_edges, boundary_index };
        if mesh.boundary_winding() <= 0.0 {
            return Err(NschError::InvalidMesh("boundary loop is not counterclockwise".into()));
        }
        Ok(mesh)
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_boundary(&self) -> usize {
        self.boundary_loop.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    /// Global edge ids of the local edges (0,1), (1,2), (2,0) of each triangle.
    pub fn triangle_edges(&self) -> &[[usize; 3]] {
        &self.triangle_edges
    }

    /// Position of a vertex in the boundary loop, if it lies on the boundary.
    pub fn boundary_index(&self, v: usize) -> Option<usize> {
        self.boundary_index[v]
    }

    pub fn triangle_geom(&self, t: usize) -> TriangleGeom {
        let [a, b, c] = self.triangles[t];
        TriangleGeom::new([self.vertices[a], self.vertices[b], self.vertices[c]])
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        signed_area([self.vertices[a], self.vertices[b], self.vertices[c]])
    }

    pub fn area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.signed_area(t)).sum()
    }

    /// Endpoints of boundary segment `k` (loop order, counterclockwise).
    pub fn boundary_segment(&self, k: usize) -> (usize, usize) {
        let nb = self.n_boundary();
        (self.boundary_loop[k], self.boundary_loop[(k + 1) % nb])
    }

    pub fn boundary_segment_length(&self, k: usize) -> f64 {
        let (a, b) = self.boundary_segment(k);
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        norm2([pb[0] - pa[0], pb[1] - pa[1]])
    }

    pub fn perimeter(&self) -> f64 {
        (0..self.n_boundary()).map(|k| self.boundary_segment_length(k)).sum()
    }

    /// Total turning angle of the boundary loop over 2π.
    pub fn boundary_winding(&self) -> f64 {
        let nb = self.n_boundary();
        let mut total = 0.0;
        for k in 0..nb {
            let (a, b) = self.boundary_segment(k);
            let (_, c) = self.boundary_segment((k + 1) % nb);
            let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
            let d1 = [pb[0] - pa[0], pb[1] - pa[1]];
            let d2 = [pc[0] - pb[0], pc[1] - pb[1]];
            total += (d1[0] * d2[1] - d1[1] * d2[0]).atan2(d1[0] * d2[0] + d1[1] * d2[1]);
        }
        total / (2.0 * std::f64::consts::PI)
    }

    pub fn summary(&self) -> MeshSummary {
        MeshSummary {
            vertices: self.n_vertices(),
            triangles: self.n_triangles(),
            boundary_vertices: self.n_boundary(),
            edges: self.edges.len(),
            area: self.area(),
            perimeter: self.perimeter(),
            radius: self.radius,
        }
    }

    /// Smallest triangle edge length, used for Courant numbers.
    pub fn min_edge_length(&self) -> f64 {
        self.edges
            .iter()
            .map(|[a, b]| {
                let (pa, pb) = (self.vertices[*a], self.vertices[*b]);
                norm2([pb[0] - pa[0], pb[1] - pa[1]])
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Per-boundary-vertex geometric data, indexed by loop position.
#[derive(Debug, Clone)]
pub struct BoundaryFrame {
    pub normals: Vec<Vec2>,
    pub tangents: Vec<Vec2>,
    pub weights: Vec<f64>,
    pub curvature: Vec<f64>,
}

pub fn compute_boundary_frame(mesh: &DiskMesh) -> Result<BoundaryFrame> {
    let nb = mesh.n_boundary();
    let mut dirs = Vec::with_capacity(nb);
    let mut lens = Vec::with_capacity(nb);
    for k in 0..nb {
        let (a, b) = mesh.boundary_segment(k);
        let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
        let d = [pb[0] - pa[0], pb[1] - pa[1]];
        let len = norm2(d);
        if len <= 1e-14 * mesh.radius {
            return Err(NschError::InvalidMesh(format!("boundary edge {k} has zero length")));
        }
        dirs.push([d[0] / len, d[1] / len]);
        lens.push(len);
    }
    let mut frame = BoundaryFrame {
        normals: Vec::with_capacity(nb),
        tangents: Vec::with_capacity(nb),
        weights: Vec::with_capacity(nb),
        curvature: Vec::with_capacity(nb),
    };
    for k in 0..nb {
        let prev = (k + nb - 1) % nb;
        let (dp, dn) = (dirs[prev], dirs[k]);
        // outward normal of a counterclockwise edge lies to its right
        let n = [dp[1] + dn[1], -dp[0] - dn[0]];
        let ln = norm2(n);
        let n = [n[0] / ln, n[1] / ln];
        let w = 0.5 * (lens[prev] + lens[k]);
        let turn = (dp[0] * dn[1] - dp[1] * dn[0]).atan2(dp[0] * dn[0] + dp[1] * dn[1]);
        frame.normals.push(n);
        frame.tangents.push([-n[1], n[0]]);
        frame.weights.push(w);
        frame.curvature.push(turn / w);
    }
    Ok(frame)
}
