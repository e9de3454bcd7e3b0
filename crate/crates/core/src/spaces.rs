//! Bulk–surface fields, P1 mass/stiffness operators, generalized means and the
//! (L,β) / (K,α) bilinear forms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::eigen::{smallest_eigenpairs, EigenOptions, Pencil};
use crate::error::{NschError, Result};
use crate::fe::{dot2, Vec2};
use crate::geometry::DiskMesh;
use crate::materials::chi;
use crate::random::SmoothRandomFunction;
use crate::sparse::{dot, CsrMatrix, LuFactor, TripletBuilder};

/// Scalar pair: φ on bulk vertices, ψ on boundary vertices (loop order).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BulkSurfaceField {
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
}

impl BulkSurfaceField {
    pub fn new(phi: Vec<f64>, psi: Vec<f64>) -> Self {
        Self { phi, psi }
    }

    pub fn zeros(mesh: &DiskMesh) -> Self {
        Self::constant(mesh, 0.0, 0.0)
    }

    pub fn constant(mesh: &DiskMesh, bulk: f64, surface: f64) -> Self {
        Self { phi: vec![bulk; mesh.n_vertices()], psi: vec![surface; mesh.n_boundary()] }
    }

    /// Nodal interpolation of a bulk and a surface function.
    pub fn from_fns(mesh: &DiskMesh, f: impl Fn(Vec2) -> f64, g: impl Fn(Vec2) -> f64) -> Self {
        Self {
            phi: mesh.vertices.iter().map(|&x| f(x)).collect(),
            psi: mesh.boundary_loop.iter().map(|&v| g(mesh.vertices[v])).collect(),
        }
    }

    pub fn check(&self, mesh: &DiskMesh) -> Result<()> {
        if self.phi.len() != mesh.n_vertices() || self.psi.len() != mesh.n_boundary() {
            return Err(NschError::InvalidInput(format!(
                "field sizes ({}, {}) do not match mesh ({}, {})",
                self.phi.len(),
                self.psi.len(),
                mesh.n_vertices(),
                mesh.n_boundary()
            )));
        }
        if self.phi.iter().chain(&self.psi).any(|v| !v.is_finite()) {
            return Err(NschError::InvalidInput("field has non-finite entries".into()));
        }
        Ok(())
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { phi: self.phi.iter().map(|v| s * v).collect(), psi: self.psi.iter().map(|v| s * v).collect() }
    }

    /// self + s·other
    pub fn add_scaled(&self, s: f64, other: &Self) -> Self {
        Self {
            phi: self.phi.iter().zip(&other.phi).map(|(a, b)| a + s * b).collect(),
            psi: self.psi.iter().zip(&other.psi).map(|(a, b)| a + s * b).collect(),
        }
    }

    pub fn concat(&self) -> Vec<f64> {
        let mut v = self.phi.clone();
        v.extend_from_slice(&self.psi);
        v
    }

    pub fn from_concat(v: &[f64], nv: usize) -> Self {
        Self { phi: v[..nv].to_vec(), psi: v[nv..].to_vec() }
    }

    pub fn max_abs(&self) -> f64 {
        self.phi.iter().chain(&self.psi).fold(0.0, |m, v| m.max(v.abs()))
    }

    /// min(1 − max|φ|, 1 − max|ψ|)
    pub fn separation_margin(&self) -> f64 {
        let a = self.phi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let b = self.psi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        (1.0 - a).min(1.0 - b)
    }
}

/// Coordinates of the P2 nodes: vertices first, then edge midpoints in edge order.
pub fn p2_node_coords(mesh: &DiskMesh) -> Vec<Vec2> {
    let mut x = mesh.vertices.clone();
    for [a, b] in mesh.edges() {
        let (pa, pb) = (mesh.vertices[*a], mesh.vertices[*b]);
        x.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
    }
    x
}

/// Bulk velocity stored at the P2 nodes (vertices, then edge midpoints).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BulkVectorField {
    pub values: Vec<Vec2>,
}

impl BulkVectorField {
    pub fn zeros(mesh: &DiskMesh) -> Self {
        Self { values: vec![[0.0, 0.0]; mesh.n_vertices() + mesh.edges().len()] }
    }

    pub fn from_fn(mesh: &DiskMesh, f: impl Fn(Vec2) -> Vec2) -> Self {
        Self { values: p2_node_coords(mesh).into_iter().map(f).collect() }
    }

    /// Vertex data with midpoints interpolated linearly.
    pub fn from_vertex_values(mesh: &DiskMesh, v: &[Vec2]) -> Result<Self> {
        if v.len() != mesh.n_vertices() {
            return Err(NschError::InvalidInput("vertex velocity has wrong length".into()));
        }
        let mut values = v.to_vec();
        for [a, b] in mesh.edges() {
            values.push([0.5 * (v[*a][0] + v[*b][0]), 0.5 * (v[*a][1] + v[*b][1])]);
        }
        Ok(Self { values })
    }

    pub fn vertex_values<'a>(&'a self, mesh: &DiskMesh) -> &'a [Vec2] {
        &self.values[..mesh.n_vertices()]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v[0].abs()).max(v[1].abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v[0].is_finite() && v[1].is_finite())
    }
}

/// Assembled P1 operators on the bulk and on the boundary polygon.
#[derive(Debug, Clone)]
pub struct SpaceOperators {
    pub m_bulk: CsrMatrix,
    pub a_bulk: CsrMatrix,
    pub m_surf: CsrMatrix,
    pub a_surf: CsrMatrix,
    /// nb × nv selection of boundary vertex values.
    pub trace: CsrMatrix,
    /// M_Ω·1, also the lumped bulk mass.
    pub bulk_mass_one: Vec<f64>,
    /// M_Γ·1, also the lumped surface mass.
    pub surf_mass_one: Vec<f64>,
    pub bulk_measure: f64,
    pub surf_measure: f64,
}

impl SpaceOperators {
    pub fn assemble(mesh: &DiskMesh) -> Self {
        let nv = mesh.n_vertices();
        let nb = mesh.n_boundary();
        let mut mb = TripletBuilder::with_capacity(nv, nv, 9 * mesh.n_triangles());
        for t in 0..mesh.n_triangles() {
            let g = mesh.triangle_geom(t);
            let tri = mesh.triangles[t];
            for i in 0..3 {
                for j in 0..3 {
                    let m = g.area / 12.0 * if i == j { 2.0 } else { 1.0 };
                    mb.push(tri[i], tri[j], m);
                }
            }
        }
        let m_bulk = mb.build();
        let a_bulk = Self::weighted_bulk_stiffness(mesh, &vec![1.0; nv]);
        let mut ms = TripletBuilder::with_capacity(nb, nb, 4 * nb);
        for k in 0..nb {
            let h = mesh.boundary_segment_length(k);
            let (a, b) = (k, (k + 1) % nb);
            ms.push(a, a, h / 3.0);
            ms.push(b, b, h / 3.0);
            ms.push(a, b, h / 6.0);
            ms.push(b, a, h / 6.0);
        }
        let m_surf = ms.build();
        let a_surf = Self::weighted_surface_stiffness(mesh, &vec![1.0; nb]);
        let mut tr = TripletBuilder::with_capacity(nb, nv, nb);
        for (k, &v) in mesh.boundary_loop.iter().enumerate() {
            tr.push(k, v, 1.0);
        }
        let trace = tr.build();
        let bulk_mass_one = m_bulk.row_sums();
        let surf_mass_one = m_surf.row_sums();
        let bulk_measure = bulk_mass_one.iter().sum();
        let surf_measure = surf_mass_one.iter().sum();
        Self { m_bulk, a_bulk, m_surf, a_surf, trace, bulk_mass_one, surf_mass_one, bulk_measure, surf_measure }
    }

    pub fn n_bulk(&self) -> usize {
        self.m_bulk.nrows()
    }

    pub fn n_surf(&self) -> usize {
        self.m_surf.nrows()
    }

    /// ∫ m ∇u·∇v with m the P1 interpolant of vertex weights.
    pub fn weighted_bulk_stiffness(mesh: &DiskMesh, m: &[f64]) -> CsrMatrix {
        let nv = mesh.n_vertices();
        let mut t = TripletBuilder::with_capacity(nv, nv, 9 * mesh.n_triangles());
        for e in 0..mesh.n_triangles() {
            let tri = mesh.triangles[e];
            let g = mesh.triangle_geom(e);
            let w = (m[tri[0]] + m[tri[1]] + m[tri[2]]) / 3.0;
            for i in 0..3 {
                for j in 0..3 {
                    t.push(tri[i], tri[j], w * g.area * dot2(g.grads[i], g.grads[j]));
                }
            }
        }
        t.build()
    }

    /// ∫_Γ m ∂_s u ∂_s v edgewise, with m the P1 interpolant of boundary weights.
    pub fn weighted_surface_stiffness(mesh: &DiskMesh, m: &[f64]) -> CsrMatrix {
        let nb = mesh.n_boundary();
        let mut t = TripletBuilder::with_capacity(nb, nb, 4 * nb);
        for k in 0..nb {
            let h = mesh.boundary_segment_length(k);
            let (a, b) = (k, (k + 1) % nb);
            let w = 0.5 * (m[a] + m[b]) / h;
            t.push(a, a, w);
            t.push(b, b, w);
            t.push(a, b, -w);
            t.push(b, a, -w);
        }
        t.build()
    }

    pub fn trace_of(&self, phi: &[f64]) -> Vec<f64> {
        self.trace.matvec(phi)
    }

    pub fn bulk_integral(&self, phi: &[f64]) -> f64 {
        dot(&self.bulk_mass_one, phi)
    }

    pub fn surface_integral(&self, psi: &[f64]) -> f64 {
        dot(&self.surf_mass_one, psi)
    }

    /// 𝓛² inner product (bulk plus surface).
    pub fn l2_inner(&self, a: &BulkSurfaceField, b: &BulkSurfaceField) -> f64 {
        self.m_bulk.bilinear(&a.phi, &b.phi) + self.m_surf.bilinear(&a.psi, &b.psi)
    }

    pub fn l2_norm(&self, a: &BulkSurfaceField) -> f64 {
        self.l2_inner(a, a).max(0.0).sqrt()
    }

    /// Block diagonal 𝓛² mass on the concatenated (bulk, surface) vector.
    pub fn coupled_mass(&self) -> CsrMatrix {
        let n = self.n_bulk() + self.n_surf();
        let mut t = TripletBuilder::with_capacity(n, n, self.m_bulk.nnz() + self.m_surf.nnz());
        t.add_block(&self.m_bulk, 0, 0, 1.0);
        t.add_block(&self.m_surf, self.n_bulk(), self.n_bulk(), 1.0);
        t.build()
    }

    /// Adds c·[TᵀM_ΓT, −βTᵀM_Γ; −βM_ΓT, β²M_Γ], the matrix of
    /// c∫_Γ(βu_Γ − u_Ω)(βv_Γ − v_Ω), into `t` at the given offsets.
    pub fn push_penalty(&self, t: &mut TripletBuilder, bulk_off: usize, surf_off: usize, c: f64, beta: f64) {
        if c == 0.0 {
            return;
        }
        let nb = self.n_surf();
        let bl: Vec<usize> = (0..nb).map(|k| self.trace.row(k).next().unwrap().0).collect();
        for (k, l, m) in self.m_surf.iter() {
            t.push(bulk_off + bl[k], bulk_off + bl[l], c * m);
            t.push(bulk_off + bl[k], surf_off + l, -c * beta * m);
            t.push(surf_off + k, bulk_off + bl[l], -c * beta * m);
            t.push(surf_off + k, surf_off + l, c * beta * beta * m);
        }
    }

    /// Matrix of the coupled form ∫a∇u∇v + ∫_Γ b ∂_s u ∂_s v + c∫_Γ(βu_Γ − u_Ω)(βv_Γ − v_Ω)
    /// on the concatenated vector.
    pub fn coupled_form(&self, bulk: &CsrMatrix, surf: &CsrMatrix, c: f64, beta: f64) -> CsrMatrix {
        let (nv, nb) = (self.n_bulk(), self.n_surf());
        let mut t = TripletBuilder::with_capacity(nv + nb, nv + nb, bulk.nnz() + surf.nnz() + 4 * self.m_surf.nnz());
        t.add_block(bulk, 0, 0, 1.0);
        t.add_block(surf, nv, nv, 1.0);
        self.push_penalty(&mut t, 0, nv, c, beta);
        t.build()
    }
}

/// The subspace {u_Ω = β u_Γ on Γ} of concatenated (bulk, surface) vectors, parametrized
/// by interior bulk values followed by all surface values.
#[derive(Debug, Clone)]
pub struct IdentifiedSpace {
    /// Prolongation from reduced to full coordinates.
    pub p: CsrMatrix,
    pub pt: CsrMatrix,
    pub beta: f64,
}

impl IdentifiedSpace {
    pub fn new(mesh: &DiskMesh, beta: f64) -> Self {
        let nv = mesh.n_vertices();
        let nb = mesh.n_boundary();
        let n_int = nv - nb;
        let mut t = TripletBuilder::with_capacity(nv + nb, n_int + nb, nv + nb);
        let mut next = 0;
        for v in 0..nv {
            match mesh.boundary_index(v) {
                Some(k) => t.push(v, n_int + k, beta),
                None => {
                    t.push(v, next, 1.0);
                    next += 1;
                }
            }
        }
        for k in 0..nb {
            t.push(nv + k, n_int + k, 1.0);
        }
        let p = t.build();
        let pt = p.transpose();
        Self { p, pt, beta }
    }

    pub fn n_reduced(&self) -> usize {
        self.p.ncols()
    }

    pub fn expand(&self, y: &[f64]) -> Vec<f64> {
        self.p.matvec(y)
    }

    pub fn restrict(&self, x: &[f64]) -> Vec<f64> {
        self.pt.matvec(x)
    }

    /// PᵀAP
    pub fn galerkin(&self, a: &CsrMatrix) -> CsrMatrix {
        self.pt.matmul(&a.matmul(&self.p))
    }
}

/// Whether the coupling parameter is finite (combined mean) or infinite (separate means).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MeanMode {
    Finite,
    Infinite,
}

impl MeanMode {
    pub fn for_coupling(l: f64) -> Self {
        if l.is_infinite() {
            MeanMode::Infinite
        } else {
            MeanMode::Finite
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum MeanValue {
    Combined(f64),
    Separate { bulk: f64, surface: f64 },
}

impl MeanValue {
    pub fn max_abs(&self) -> f64 {
        match *self {
            MeanValue::Combined(v) => v.abs(),
            MeanValue::Separate { bulk, surface } => bulk.abs().max(surface.abs()),
        }
    }
}

/// (β|Ω|⟨φ⟩ + |Γ|⟨ψ⟩)/(β²|Ω| + |Γ|) for finite coupling, (⟨φ⟩_Ω, ⟨ψ⟩_Γ) otherwise.
pub fn generalized_mean(ops: &SpaceOperators, field: &BulkSurfaceField, beta: f64, mode: MeanMode) -> MeanValue {
    let ib = ops.bulk_integral(&field.phi);
    let is = ops.surface_integral(&field.psi);
    match mode {
        MeanMode::Finite => MeanValue::Combined((beta * ib + is) / (beta * beta * ops.bulk_measure + ops.surf_measure)),
        MeanMode::Infinite => MeanValue::Separate { bulk: ib / ops.bulk_measure, surface: is / ops.surf_measure },
    }
}

fn penalized_pairing(ops: &SpaceOperators, a: &BulkSurfaceField, b: &BulkSurfaceField, c: f64, w: f64) -> f64 {
    let mut v = ops.a_bulk.bilinear(&a.phi, &b.phi) + ops.a_surf.bilinear(&a.psi, &b.psi);
    if c != 0.0 {
        let ta = ops.trace_of(&a.phi);
        let tb = ops.trace_of(&b.phi);
        let da: Vec<f64> = a.psi.iter().zip(&ta).map(|(p, t)| w * p - t).collect();
        let db: Vec<f64> = b.psi.iter().zip(&tb).map(|(p, t)| w * p - t).collect();
        v += c * ops.m_surf.bilinear(&da, &db);
    }
    v
}

/// ∫∇a∇b + ∫_Γ ∇_Γa∇_Γb + χ(L)∫_Γ(βa_Γ − a_Ω)(βb_Γ − b_Ω)
pub fn inner_lb(ops: &SpaceOperators, a: &BulkSurfaceField, b: &BulkSurfaceField, l: f64, beta: f64) -> f64 {
    penalized_pairing(ops, a, b, chi(l), beta)
}

/// Norm induced by the (K,α) form; K must lie in (0,∞).
pub fn norm_ka(ops: &SpaceOperators, a: &BulkSurfaceField, k: f64, alpha: f64) -> Result<f64> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(NschError::InvalidInput(format!("K = {k} outside (0, inf)")));
    }
    Ok(penalized_pairing(ops, a, a, chi(k), alpha).max(0.0).sqrt())
}

/// Symmetric pencil restricted by linear constraints cᵢᵀx = 0, inverted through a
/// bordered factorization.
pub struct BorderedPencil {
    a: CsrMatrix,
    m: CsrMatrix,
    n: usize,
    lu: LuFactor,
}

impl BorderedPencil {
    pub fn new(a: CsrMatrix, m: CsrMatrix, constraints: &[Vec<f64>]) -> Result<Self> {
        let n = a.nrows();
        let nc = constraints.len();
        let mut t = TripletBuilder::with_capacity(n + nc, n + nc, a.nnz() + 2 * nc * n);
        t.add_block(&a, 0, 0, 1.0);
        for (c, row) in constraints.iter().enumerate() {
            for (i, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    t.push(n + c, i, v);
                    t.push(i, n + c, v);
                }
            }
        }
        let lu = LuFactor::new(&t.build())?;
        Ok(Self { a, m, n, lu })
    }
}

impl Pencil for BorderedPencil {
    fn dim(&self) -> usize {
        self.n
    }
    fn apply_a(&self, x: &[f64]) -> Vec<f64> {
        self.a.matvec(x)
    }
    fn apply_m(&self, x: &[f64]) -> Vec<f64> {
        self.m.matvec(x)
    }
    fn apply_inverse(&self, z: &[f64]) -> Result<Vec<f64>> {
        let mut rhs = self.m.matvec(z);
        rhs.resize(self.lu.dim(), 0.0);
        let mut x = self.lu.solve(&rhs)?;
        x.truncate(self.n);
        Ok(x)
    }
}

/// Discrete Poincaré constant: max ‖u‖_{𝓛²}/‖u‖_{K,α} over fields with vanishing
/// β-weighted generalized mean.
pub fn poincare_check(mesh: &DiskMesh, k: f64, alpha: f64, beta: f64) -> Result<f64> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(NschError::InvalidInput(format!("K = {k} outside (0, inf)")));
    }
    let ops = SpaceOperators::assemble(mesh);
    let a = ops.coupled_form(&ops.a_bulk, &ops.a_surf, chi(k), alpha);
    let m = ops.coupled_mass();
    let mut c: Vec<f64> = ops.bulk_mass_one.iter().map(|v| beta * v).collect();
    c.extend_from_slice(&ops.surf_mass_one);
    let pencil = BorderedPencil::new(a, m, &[c])
        .map_err(|e| NschError::Singular(format!("restricted (K,alpha) form is singular: {e}")))?;
    let mut opts = EigenOptions::for_count(1);
    opts.block = 4;
    let r = smallest_eigenpairs(&pencil, 1, &opts)?;
    let lam = r.values[0];
    if !(lam > 0.0) {
        return Err(NschError::Singular(format!("non-positive restricted eigenvalue {lam}")));
    }
    Ok(1.0 / lam.sqrt())
}

/// Largest observed ratio ‖u‖_{L²(Γ)} / (‖u‖_{L²(Ω)}^{1/2} ‖u‖_{H¹(Ω)}^{1/2}) over smooth
/// random fields.
pub fn trace_interpolation_check(mesh: &DiskMesh, samples: usize, seed: u64) -> f64 {
    let ops = SpaceOperators::assemble(mesh);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0f64;
    for _ in 0..samples {
        let f = SmoothRandomFunction::new(&mut rng, 6, 4.0);
        let u: Vec<f64> = mesh.vertices.iter().map(|&x| f.eval(x)).collect();
        let l2 = ops.m_bulk.bilinear(&u, &u);
        let h1 = l2 + ops.a_bulk.bilinear(&u, &u);
        let tu = ops.trace_of(&u);
        let g = ops.m_surf.bilinear(&tu, &tu);
        if l2 > 0.0 {
            best = best.max(g.sqrt() / (l2.sqrt() * h1.sqrt()).sqrt());
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_disk_mesh;

    #[test]
    fn measures_match_mesh() {
        let mesh = build_disk_mesh(4, 1.0).unwrap();
        let ops = SpaceOperators::assemble(&mesh);
        assert!((ops.bulk_measure - mesh.area()).abs() < 1e-13);
        assert!((ops.surf_measure - mesh.perimeter()).abs() < 1e-13);
        assert!(ops.a_surf.matvec(&vec![1.0; mesh.n_boundary()]).iter().all(|v| v.abs() < 1e-14));
        assert!(ops.a_bulk.matvec(&vec![1.0; mesh.n_vertices()]).iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn mean_examples() {
        let mesh = build_disk_mesh(6, 1.0).unwrap();
        let ops = SpaceOperators::assemble(&mesh);
        let one = BulkSurfaceField::constant(&mesh, 1.0, 1.0);
        assert_eq!(generalized_mean(&ops, &one, 1.0, MeanMode::Finite), MeanValue::Combined(1.0));
        let f = BulkSurfaceField::constant(&mesh, 1.0, 0.0);
        let expect = 2.0 * ops.bulk_measure / (4.0 * ops.bulk_measure + ops.surf_measure);
        match generalized_mean(&ops, &f, 2.0, MeanMode::Finite) {
            MeanValue::Combined(v) => assert!((v - expect).abs() < 1e-15),
            _ => panic!(),
        }
    }

    #[test]
    fn penalty_matches_pairing() {
        let mesh = build_disk_mesh(3, 1.0).unwrap();
        let ops = SpaceOperators::assemble(&mesh);
        let a = BulkSurfaceField::from_fns(&mesh, |x| x[0] * x[1] + 0.3, |x| x[0] - 0.1);
        let b = BulkSurfaceField::from_fns(&mesh, |x| x[1].sin(), |x| x[1] * x[1]);
        let m = ops.coupled_form(&ops.a_bulk, &ops.a_surf, 0.5, -1.3);
        let direct = m.bilinear(&a.concat(), &b.concat());
        assert!((direct - inner_lb(&ops, &a, &b, 2.0, -1.3)).abs() < 1e-13);
    }
}
