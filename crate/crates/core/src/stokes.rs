//! Bulk–surface Stokes and Navier–Stokes solvers with P2/P1 Taylor–Hood elements.
//!
//! Boundary velocity nodes carry no free components: a boundary vertex k takes the
//! value ω_k τ_k and a boundary edge midpoint the mean of its endpoint values, so
//! v·n = 0 and v·τ = ω_k hold exactly at the vertices. In the full variant every
//! boundary vertex has its own tangential speed ω_k and a piecewise constant surface
//! pressure enforces ∂_s(w·τ) = 0; in the reduced variant all ω_k coincide and the
//! surface pressure is recovered afterwards from the tangential momentum residual.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::cahn_hilliard::CHState;
use crate::discretization::Discretization;
use crate::eigen::{smallest_eigenpairs, EigenOptions, Pencil};
use crate::error::{NschError, Result};
use crate::fe::{dot2, line_rule, p2_values, triangle_rule, Vec2};
use crate::materials::{chi, CoefficientSet, ModelParameters};
use crate::spaces::{BulkSurfaceField, BulkVectorField};
use crate::sparse::{dot, max_abs, CsrMatrix, LuFactor, TripletBuilder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum StokesVariant {
    #[default]
    Reduced,
    Full,
}

#[derive(Debug, Clone, Copy)]
enum NodeDofs {
    /// Index of the x component; y follows.
    Interior(usize),
    /// (surface index, weight on τ_k) pairs.
    Boundary([(usize, f64); 2], usize),
}

/// Degree-of-freedom layout of the constrained P2 velocity space.
#[derive(Debug, Clone)]
pub struct VelocityLayout {
    nodes: Vec<NodeDofs>,
    n_interior: usize,
    nb: usize,
    tangents: Vec<Vec2>,
    /// P2 node index of each boundary segment midpoint.
    segment_midpoint: Vec<usize>,
    segment_len: Vec<f64>,
    segment_dir: Vec<Vec2>,
}

impl VelocityLayout {
    pub fn new(disc: &Discretization) -> Result<Self> {
        let mesh = &disc.mesh;
        let nv = mesh.n_vertices();
        let nb = mesh.n_boundary();
        let mut edge_of = HashMap::with_capacity(mesh.edges().len());
        for (e, [a, b]) in mesh.edges().iter().enumerate() {
            edge_of.insert((*a.min(b), *a.max(b)), e);
        }
        let mut nodes = vec![NodeDofs::Interior(0); nv + mesh.edges().len()];
        let mut is_boundary = vec![false; nodes.len()];
        let mut segment_midpoint = Vec::with_capacity(nb);
        let mut segment_len = Vec::with_capacity(nb);
        let mut segment_dir = Vec::with_capacity(nb);
        for k in 0..nb {
            let (a, b) = mesh.boundary_segment(k);
            let e = *edge_of
                .get(&(a.min(b), a.max(b)))
                .ok_or_else(|| NschError::InvalidMesh(format!("boundary segment {k} is not a mesh edge")))?;
            let kn = (k + 1) % nb;
            nodes[a] = NodeDofs::Boundary([(k, 1.0), (k, 0.0)], 1);
            nodes[nv + e] = NodeDofs::Boundary([(k, 0.5), (kn, 0.5)], 2);
            is_boundary[a] = true;
            is_boundary[nv + e] = true;
            segment_midpoint.push(nv + e);
            let h = mesh.boundary_segment_length(k);
            let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
            segment_len.push(h);
            segment_dir.push([(pb[0] - pa[0]) / h, (pb[1] - pa[1]) / h]);
        }
        let mut n_interior = 0;
        for (i, node) in nodes.iter_mut().enumerate() {
            if !is_boundary[i] {
                *node = NodeDofs::Interior(2 * n_interior);
                n_interior += 1;
            }
        }
        Ok(Self {
            nodes,
            n_interior,
            nb,
            tangents: disc.frame.tangents.clone(),
            segment_midpoint,
            segment_len,
            segment_dir,
        })
    }

    /// Unknowns of the full variant: interior components, then one speed per boundary vertex.
    pub fn n_full(&self) -> usize {
        2 * self.n_interior + self.nb
    }

    pub fn n_reduced(&self) -> usize {
        2 * self.n_interior + 1
    }

    fn omega_offset(&self) -> usize {
        2 * self.n_interior
    }

    /// Contributions of raw component `d` of P2 node `node` to full unknowns.
    fn scatter(&self, node: usize, d: usize) -> ([(usize, f64); 2], usize) {
        match self.nodes[node] {
            NodeDofs::Interior(base) => ([(base + d, 1.0), (0, 0.0)], 1),
            NodeDofs::Boundary(terms, n) => {
                let off = self.omega_offset();
                let mut out = [(0, 0.0); 2];
                for i in 0..n {
                    let (k, w) = terms[i];
                    out[i] = (off + k, w * self.tangents[k][d]);
                }
                (out, n)
            }
        }
    }

    /// τ_a·τ_e and τ_b·τ_e for boundary segment k.
    fn segment_cos(&self, k: usize) -> (f64, f64) {
        let kn = (k + 1) % self.nb;
        (dot2(self.tangents[k], self.segment_dir[k]), dot2(self.tangents[kn], self.segment_dir[k]))
    }

    /// Collapse of the per-vertex speeds onto one ω: full = S·reduced.
    pub fn reduction(&self) -> CsrMatrix {
        let nf = self.n_full();
        let off = self.omega_offset();
        let mut t = TripletBuilder::with_capacity(nf, self.n_reduced(), nf);
        for i in 0..off {
            t.push(i, i, 1.0);
        }
        for k in 0..self.nb {
            t.push(off + k, off, 1.0);
        }
        t.build()
    }

    pub fn expand_reduced(&self, u: &[f64]) -> Vec<f64> {
        let off = self.omega_offset();
        let mut out = u[..off].to_vec();
        out.extend(std::iter::repeat_n(u[off], self.nb));
        out
    }

    /// P2 nodal velocity from full unknowns.
    pub fn velocity(&self, u: &[f64]) -> BulkVectorField {
        let values = (0..self.nodes.len())
            .map(|node| {
                let mut v = [0.0; 2];
                for (d, vd) in v.iter_mut().enumerate() {
                    let (terms, n) = self.scatter(node, d);
                    *vd = terms[..n].iter().map(|(i, w)| w * u[*i]).sum();
                }
                v
            })
            .collect();
        BulkVectorField { values }
    }

    pub fn speeds<'a>(&self, u: &'a [f64]) -> &'a [f64] {
        &u[self.omega_offset()..]
    }

    /// Full unknowns of a P2 field whose boundary values are tangential with speeds `omega`.
    pub fn unknowns_of(&self, v: &BulkVectorField, omega: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.n_full()];
        for (node, dofs) in self.nodes.iter().enumerate() {
            if let NodeDofs::Interior(base) = dofs {
                u[*base] = v.values[node][0];
                u[*base + 1] = v.values[node][1];
            }
        }
        u[self.omega_offset()..].copy_from_slice(omega);
        u
    }
}

/// Pointwise coefficients of the bulk velocity form at one quadrature point.
#[derive(Debug, Clone, Copy, Default)]
struct BulkCoef {
    /// ∫ c ∇v:∇v̂
    grad: f64,
    /// ∫ c 2Dv:Dv̂
    sym: f64,
    /// ∫ c v·v̂
    mass: f64,
    /// ½∫(U·∇v)·v̂ − ½∫(U·∇v̂)·v
    conv: Vec2,
}

/// Pointwise coefficients of the surface form at one line quadrature point.
#[derive(Debug, Clone, Copy, Default)]
struct SurfCoef {
    /// ∫ c w·ŵ
    mass: f64,
    /// ∫ c (τ_e·∂_s w)(τ_e·∂_s ŵ)
    tan: f64,
    /// ∫ c ∂_s w·∂_s ŵ
    grad: f64,
}

struct ElementData {
    nodes: [usize; 6],
    /// (weight·area, P2 values, P2 gradients, barycentric point)
    points: Vec<(f64, [f64; 6], [Vec2; 6], [f64; 3])>,
    tri: [usize; 3],
}

fn element_data(disc: &Discretization, e: usize) -> ElementData {
    let mesh = &disc.mesh;
    let nv = mesh.n_vertices();
    let tri = mesh.triangles[e];
    let te = mesh.triangle_edges()[e];
    let g = mesh.triangle_geom(e);
    let points = triangle_rule().iter().map(|(l, w)| (w * g.area, p2_values(*l), g.p2_grads(*l), *l)).collect();
    ElementData { nodes: [tri[0], tri[1], tri[2], nv + te[0], nv + te[1], nv + te[2]], points, tri }
}

fn assemble_velocity_form(
    disc: &Discretization,
    layout: &VelocityLayout,
    bulk: impl Fn(usize, usize, [f64; 3]) -> BulkCoef,
    surf: impl Fn(usize, usize, f64) -> SurfCoef,
) -> CsrMatrix {
    let mesh = &disc.mesh;
    let n = layout.n_full();
    let mut t = TripletBuilder::with_capacity(n, n, 150 * mesh.n_triangles());
    let mut kloc = [[0.0; 12]; 12];
    for e in 0..mesh.n_triangles() {
        let el = element_data(disc, e);
        kloc.iter_mut().for_each(|r| r.fill(0.0));
        for (q, (w, nq, gq, l)) in el.points.iter().enumerate() {
            let c = bulk(e, q, *l);
            for a in 0..6 {
                for b in 0..6 {
                    let gg = dot2(gq[a], gq[b]);
                    let scal = w * (c.grad * gg + c.sym * gg + c.mass * nq[a] * nq[b]
                        + 0.5 * (dot2(c.conv, gq[b]) * nq[a] - dot2(c.conv, gq[a]) * nq[b]));
                    for d in 0..2 {
                        kloc[2 * a + d][2 * b + d] += scal;
                        for ee in 0..2 {
                            kloc[2 * a + d][2 * b + ee] += w * c.sym * gq[a][ee] * gq[b][d];
                        }
                    }
                }
            }
        }
        for i in 0..12 {
            let (ri, nr) = layout.scatter(el.nodes[i / 2], i % 2);
            for j in 0..12 {
                if kloc[i][j] == 0.0 {
                    continue;
                }
                let (cj, nc) = layout.scatter(el.nodes[j / 2], j % 2);
                for (r, wr) in &ri[..nr] {
                    for (cc, wc) in &cj[..nc] {
                        if *wr != 0.0 && *wc != 0.0 {
                            t.push(*r, *cc, wr * wc * kloc[i][j]);
                        }
                    }
                }
            }
        }
    }
    let off = layout.omega_offset();
    let nb = layout.nb;
    for k in 0..nb {
        let kn = (k + 1) % nb;
        let h = layout.segment_len[k];
        let ta = layout.tangents[k];
        let tb = layout.tangents[kn];
        let (ca, cb) = layout.segment_cos(k);
        let idx = [k, kn];
        let tt = [[dot2(ta, ta), dot2(ta, tb)], [dot2(tb, ta), dot2(tb, tb)]];
        let cs = [ca, cb];
        let sg = [-1.0, 1.0];
        let mut m = [[0.0; 2]; 2];
        for (q, (s, wq)) in line_rule().iter().enumerate() {
            let c = surf(k, q, *s);
            let nn = [1.0 - s, *s];
            for i in 0..2 {
                for j in 0..2 {
                    m[i][j] += wq * h * c.mass * nn[i] * nn[j] * tt[i][j];
                    m[i][j] += wq * h * c.tan * sg[i] * cs[i] * sg[j] * cs[j] / (h * h);
                    m[i][j] += wq * h * c.grad * sg[i] * sg[j] * tt[i][j] / (h * h);
                }
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                t.push(off + idx[i], off + idx[j], m[i][j]);
            }
        }
    }
    t.build()
}

/// Load ∫ f·v̂ + ∫_Γ g·ŵ for pointwise vector densities.
fn assemble_load(
    disc: &Discretization,
    layout: &VelocityLayout,
    bulk: impl Fn(usize, usize, [f64; 3]) -> Vec2,
    surf: impl Fn(usize, usize, f64) -> Vec2,
) -> Vec<f64> {
    let mesh = &disc.mesh;
    let mut out = vec![0.0; layout.n_full()];
    for e in 0..mesh.n_triangles() {
        let el = element_data(disc, e);
        let mut floc = [0.0; 12];
        for (q, (w, nq, _, l)) in el.points.iter().enumerate() {
            let f = bulk(e, q, *l);
            if f == [0.0, 0.0] {
                continue;
            }
            for a in 0..6 {
                floc[2 * a] += w * nq[a] * f[0];
                floc[2 * a + 1] += w * nq[a] * f[1];
            }
        }
        for i in 0..12 {
            if floc[i] == 0.0 {
                continue;
            }
            let (ri, nr) = layout.scatter(el.nodes[i / 2], i % 2);
            for (r, wr) in &ri[..nr] {
                out[*r] += wr * floc[i];
            }
        }
    }
    let off = layout.omega_offset();
    let nb = layout.nb;
    for k in 0..nb {
        let kn = (k + 1) % nb;
        let h = layout.segment_len[k];
        for (q, (s, wq)) in line_rule().iter().enumerate() {
            let g = surf(k, q, *s);
            out[off + k] += wq * h * (1.0 - s) * dot2(g, layout.tangents[k]);
            out[off + kn] += wq * h * s * dot2(g, layout.tangents[kn]);
        }
    }
    out
}

/// Rows −∫ λ_i div v for P1 pressure test functions.
fn assemble_divergence(disc: &Discretization, layout: &VelocityLayout) -> CsrMatrix {
    let mesh = &disc.mesh;
    let mut t = TripletBuilder::with_capacity(mesh.n_vertices(), layout.n_full(), 40 * mesh.n_triangles());
    for e in 0..mesh.n_triangles() {
        let el = element_data(disc, e);
        let mut bloc = [[0.0; 12]; 3];
        for (w, _, gq, l) in &el.points {
            for i in 0..3 {
                for a in 0..6 {
                    for d in 0..2 {
                        bloc[i][2 * a + d] -= w * l[i] * gq[a][d];
                    }
                }
            }
        }
        for j in 0..12 {
            let (cj, nc) = layout.scatter(el.nodes[j / 2], j % 2);
            for i in 0..3 {
                for (c, wc) in &cj[..nc] {
                    if *wc != 0.0 {
                        t.push(el.tri[i], *c, wc * bloc[i][j]);
                    }
                }
            }
        }
    }
    t.build()
}

/// Surface divergence rows −(τ_e·(ω_b τ_b − ω_a τ_a)) per boundary segment.
fn assemble_surface_divergence(layout: &VelocityLayout) -> CsrMatrix {
    let nb = layout.nb;
    let off = layout.omega_offset();
    let mut t = TripletBuilder::with_capacity(nb, layout.n_full(), 2 * nb);
    for k in 0..nb {
        let (ca, cb) = layout.segment_cos(k);
        t.push(k, off + k, ca);
        t.push(k, off + (k + 1) % nb, -cb);
    }
    t.build()
}

fn interp3(vals: [f64; 3], l: [f64; 3]) -> f64 {
    vals[0] * l[0] + vals[1] * l[1] + vals[2] * l[2]
}

fn tri_values(v: &[f64], tri: [usize; 3]) -> [f64; 3] {
    [v[tri[0]], v[tri[1]], v[tri[2]]]
}

fn p1_gradient(v: &[f64], tri: [usize; 3], grads: &[Vec2; 3]) -> Vec2 {
    let mut g = [0.0; 2];
    for i in 0..3 {
        g[0] += v[tri[i]] * grads[i][0];
        g[1] += v[tri[i]] * grads[i][1];
    }
    g
}

fn p2_at(v: &BulkVectorField, nodes: &[usize; 6], n: &[f64; 6]) -> Vec2 {
    let mut out = [0.0; 2];
    for a in 0..6 {
        out[0] += n[a] * v.values[nodes[a]][0];
        out[1] += n[a] * v.values[nodes[a]][1];
    }
    out
}

/// ∇v as rows (∇v_x, ∇v_y).
fn p2_grad_at(v: &BulkVectorField, nodes: &[usize; 6], g: &[Vec2; 6]) -> [Vec2; 2] {
    let mut out = [[0.0; 2]; 2];
    for a in 0..6 {
        for d in 0..2 {
            out[d][0] += v.values[nodes[a]][d] * g[a][0];
            out[d][1] += v.values[nodes[a]][d] * g[a][1];
        }
    }
    out
}

fn segment_interp(values: &[f64], k: usize, s: f64) -> f64 {
    let nb = values.len();
    (1.0 - s) * values[k] + s * values[(k + 1) % nb]
}

/// Mesh-level operators of the velocity space that do not depend on the state.
#[derive(Debug, Clone)]
pub struct StokesSpace {
    pub layout: VelocityLayout,
    /// nv × n_full
    pub divergence: CsrMatrix,
    /// nb × n_full
    pub surface_divergence: CsrMatrix,
    pub reduction: CsrMatrix,
}

impl StokesSpace {
    pub fn new(disc: &Discretization) -> Result<Self> {
        let layout = VelocityLayout::new(disc)?;
        let divergence = assemble_divergence(disc, &layout);
        let surface_divergence = assemble_surface_divergence(&layout);
        let reduction = layout.reduction();
        Ok(Self { layout, divergence, surface_divergence, reduction })
    }

    /// Bulk and surface 𝓛² mass of velocities with unit densities.
    pub fn mass(&self, disc: &Discretization) -> CsrMatrix {
        assemble_velocity_form(
            disc,
            &self.layout,
            |_, _, _| BulkCoef { mass: 1.0, ..Default::default() },
            |_, _, _| SurfCoef { mass: 1.0, ..Default::default() },
        )
    }
}

/// Coefficient fields evaluated from the phase pair.
fn viscous_form(
    disc: &Discretization,
    space: &StokesSpace,
    phase: &BulkSurfaceField,
    coef: &CoefficientSet,
    bulk_mass: impl Fn(usize, usize, [f64; 3]) -> f64,
    conv: impl Fn(usize, usize, [f64; 3]) -> Vec2,
    surf_mass: impl Fn(usize, usize, f64) -> f64,
) -> CsrMatrix {
    let mesh = &disc.mesh;
    let trace: Vec<f64> = disc.boundary_vertices().iter().map(|&v| phase.phi[v]).collect();
    assemble_velocity_form(
        disc,
        &space.layout,
        |e, q, l| {
            let phi = interp3(tri_values(&phase.phi, mesh.triangles[e]), l);
            BulkCoef {
                grad: 0.0,
                sym: coef.viscosity_bulk.eval(phi),
                mass: bulk_mass(e, q, l),
                conv: conv(e, q, l),
            }
        },
        |k, q, s| {
            let psi = segment_interp(&phase.psi, k, s);
            let phi = segment_interp(&trace, k, s);
            SurfCoef {
                mass: coef.friction.eval(phi, psi) + surf_mass(k, q, s),
                tan: 2.0 * coef.viscosity_surface.eval(psi),
                grad: 0.0,
            }
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowState {
    pub v: BulkVectorField,
    /// Bulk pressure per vertex, zero mean.
    pub p: Vec<f64>,
    /// Uniform tangential surface speed.
    pub omega: f64,
    /// Surface pressure per boundary segment (segment k joins loop vertices k and k+1), zero mean.
    pub q: Vec<f64>,
    pub t: f64,
}

impl FlowState {
    pub fn at_rest(disc: &Discretization) -> Self {
        Self {
            v: BulkVectorField::zeros(&disc.mesh),
            p: vec![0.0; disc.nv()],
            omega: 0.0,
            q: vec![0.0; disc.nb()],
            t: 0.0,
        }
    }
}

/// Tangential surface forcing for the Stokes problem.
#[derive(Debug, Clone, PartialEq)]
pub enum SurfaceForcing {
    /// g·τ per boundary vertex.
    Tangential(Vec<f64>),
    /// Vector per boundary vertex; must be tangential.
    Vector(Vec<Vec2>),
}

impl SurfaceForcing {
    fn tangential(&self, disc: &Discretization) -> Result<Vec<f64>> {
        let nb = disc.nb();
        match self {
            SurfaceForcing::Tangential(g) => {
                if g.len() != nb {
                    return Err(NschError::InvalidInput("surface forcing has wrong length".into()));
                }
                Ok(g.clone())
            }
            SurfaceForcing::Vector(g) => {
                if g.len() != nb {
                    return Err(NschError::InvalidInput("surface forcing has wrong length".into()));
                }
                let mut out = Vec::with_capacity(nb);
                for (k, gk) in g.iter().enumerate() {
                    let gn = dot2(*gk, disc.frame.normals[k]);
                    let mag = gk[0].hypot(gk[1]);
                    if gn.abs() > 1e-12 * mag.max(1.0) {
                        return Err(NschError::InvalidInput(format!(
                            "surface forcing is not tangential at boundary vertex {k} (g·n = {gn:e})"
                        )));
                    }
                    out.push(dot2(*gk, disc.frame.tangents[k]));
                }
                Ok(out)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct StokesReport {
    /// max |B v| over pressure test functions.
    pub divergence_residual: f64,
    /// ‖K u + Bᵀp − F‖∞ / ‖F‖∞ over all velocity test functions.
    pub weak_residual: f64,
    /// uᵀKu, the dissipation 2∫ν|Dv|² + ∫γ|w|² (+ surface viscous part).
    pub dissipation: f64,
    /// Fᵀu
    pub load_pairing: f64,
    pub solve_seconds: f64,
}

/// Rigid rotation about the origin in full unknowns, v = (−y, x).
fn rigid_rotation(disc: &Discretization, layout: &VelocityLayout) -> Vec<f64> {
    let v = BulkVectorField::from_fn(&disc.mesh, |x| [-x[1], x[0]]);
    let omega: Vec<f64> = disc
        .boundary_vertices()
        .iter()
        .enumerate()
        .map(|(k, &b)| dot2([-disc.mesh.vertices[b][1], disc.mesh.vertices[b][0]], disc.frame.tangents[k]))
        .collect();
    layout.unknowns_of(&v, &omega)
}

struct SaddleSolution {
    u_full: Vec<f64>,
    p: Vec<f64>,
    q: Vec<f64>,
    residual_full: Vec<f64>,
    seconds: f64,
}

/// Solves the constrained saddle point problem with velocity block `k` (full basis).
fn solve_saddle(
    disc: &Discretization,
    space: &StokesSpace,
    k: &CsrMatrix,
    load: &[f64],
    variant: StokesVariant,
) -> Result<SaddleSolution> {
    let layout = &space.layout;
    let nv = disc.nv();
    let nb = disc.nb();
    let (kk, bb, ff) = match variant {
        StokesVariant::Reduced => {
            let s = &space.reduction;
            (s.transpose().matmul(&k.matmul(s)), space.divergence.matmul(s), s.transpose_matvec(load))
        }
        StokesVariant::Full => (k.clone(), space.divergence.clone(), load.to_vec()),
    };
    let nu = kk.nrows();
    let with_q = variant == StokesVariant::Full;
    let n = nu + nv + 1 + if with_q { nb + 1 } else { 0 };
    let mut t = TripletBuilder::with_capacity(n, n, kk.nnz() + 2 * bb.nnz() + 4 * nv + 6 * nb);
    t.add_block(&kk, 0, 0, 1.0);
    t.add_block(&bb, nu, 0, 1.0);
    t.add_block_transposed(&bb, 0, nu, 1.0);
    for (i, m) in disc.ops.bulk_mass_one.iter().enumerate() {
        t.push(nu + i, nu + nv, *m);
        t.push(nu + nv, nu + i, *m);
    }
    if with_q {
        let q0 = nu + nv + 1;
        t.add_block(&space.surface_divergence, q0, 0, 1.0);
        t.add_block_transposed(&space.surface_divergence, 0, q0, 1.0);
        for (kk_, h) in layout.segment_len.iter().enumerate() {
            t.push(q0 + kk_, q0 + nb, *h);
            t.push(q0 + nb, q0 + kk_, *h);
        }
    }
    let mat = t.build();
    let mut rhs = ff.clone();
    rhs.resize(n, 0.0);
    let t0 = std::time::Instant::now();
    let lu = LuFactor::new(&mat)?;
    let x = lu.solve(&rhs)?;
    let seconds = t0.elapsed().as_secs_f64();
    let u = &x[..nu];
    let p = x[nu..nu + nv].to_vec();
    let u_full = match variant {
        StokesVariant::Reduced => layout.expand_reduced(u),
        StokesVariant::Full => u.to_vec(),
    };
    let mut residual_full = k.matvec(&u_full);
    let bp = space.divergence.transpose_matvec(&p);
    for i in 0..residual_full.len() {
        residual_full[i] += bp[i] - load[i];
    }
    let q = match variant {
        StokesVariant::Full => x[nu + nv + 1..nu + nv + 1 + nb].to_vec(),
        StokesVariant::Reduced => recover_surface_pressure(layout, layout.speeds(&residual_full)),
    };
    Ok(SaddleSolution { u_full, p, q, residual_full, seconds })
}

/// Integrates the tangential momentum residual along the boundary: with
/// R_k + c_a(k) q_k − c_b(k−1) q_{k−1} = 0 at every boundary vertex.
fn recover_surface_pressure(layout: &VelocityLayout, r: &[f64]) -> Vec<f64> {
    let nb = layout.nb;
    let mut q = vec![0.0; nb];
    for k in 1..nb {
        let (ca, _) = layout.segment_cos(k);
        let (_, cb_prev) = layout.segment_cos(k - 1);
        q[k] = (cb_prev * q[k - 1] - r[k]) / ca;
    }
    let len: f64 = layout.segment_len.iter().sum();
    let mean = q.iter().zip(&layout.segment_len).map(|(a, h)| a * h).sum::<f64>() / len;
    q.iter_mut().for_each(|v| *v -= mean);
    q
}

fn full_residual_without_q(space: &StokesSpace, sol: &SaddleSolution) -> Vec<f64> {
    let mut r = sol.residual_full.clone();
    let dq = space.surface_divergence.transpose_matvec(&sol.q);
    for i in 0..r.len() {
        r[i] += dq[i];
    }
    r
}

fn flow_from(layout: &VelocityLayout, sol: &SaddleSolution, t: f64) -> FlowState {
    let speeds = layout.speeds(&sol.u_full);
    let omega = speeds.iter().sum::<f64>() / speeds.len() as f64;
    FlowState { v: layout.velocity(&sol.u_full), p: sol.p.clone(), omega, q: sol.q.clone(), t }
}

/// Steady bulk–surface Stokes problem with coefficients evaluated from `phase`.
pub fn solve_bs_stokes(
    disc: &Discretization,
    phase: &BulkSurfaceField,
    coefficients: &CoefficientSet,
    f: &BulkVectorField,
    g: &SurfaceForcing,
    variant: StokesVariant,
) -> Result<(FlowState, StokesReport)> {
    phase.check(&disc.mesh)?;
    if f.values.len() != disc.nv() + disc.mesh.edges().len() || !f.is_finite() {
        return Err(NschError::InvalidInput("bulk forcing has wrong length or non-finite values".into()));
    }
    let g = g.tangential(disc)?;
    let space = StokesSpace::new(disc)?;
    let k = viscous_form(disc, &space, phase, coefficients, |_, _, _| 0.0, |_, _, _| [0.0; 2], |_, _, _| 0.0);
    let rigid = rigid_rotation(disc, &space.layout);
    let rigid_energy = k.bilinear(&rigid, &rigid);
    let rigid_norm = dot(&rigid, &rigid);
    if !(rigid_energy > 1e-12 * rigid_norm) {
        return Err(NschError::Singular(
            "rigid rotation is in the kernel of the viscous form (no friction to balance it)".into(),
        ));
    }
    let load = assemble_load(
        disc,
        &space.layout,
        |e, _, l| p2_at(f, &p2_nodes(disc, e), &p2_values(l)),
        |kk, _, s| {
            let nb = g.len();
            let kn = (kk + 1) % nb;
            let ta = disc.frame.tangents[kk];
            let tb = disc.frame.tangents[kn];
            let (ga, gb) = ((1.0 - s) * g[kk], s * g[kn]);
            [ga * ta[0] + gb * tb[0], ga * ta[1] + gb * tb[1]]
        },
    );
    let sol = solve_saddle(disc, &space, &k, &load, variant)?;
    let report = report_of(&space, &k, &load, &sol);
    Ok((flow_from(&space.layout, &sol, 0.0), report))
}

#[derive(Debug, Clone, Serialize)]
pub struct RigidRotationReport {
    pub max_velocity_error: f64,
    pub omega_error: f64,
    pub bulk_pressure_l2: f64,
    pub surface_pressure_l2: f64,
    pub weak_residual: f64,
}

/// Unit viscosities and friction, f = 0 and g = τ: the solution is the rigid rotation
/// with surface speed 1 and vanishing pressures.
pub fn rigid_rotation_check(disc: &Discretization, variant: StokesVariant) -> Result<RigidRotationReport> {
    let zero = BulkSurfaceField::zeros(&disc.mesh);
    let (flow, rep) = solve_bs_stokes(
        disc,
        &zero,
        &CoefficientSet::default(),
        &BulkVectorField::zeros(&disc.mesh),
        &SurfaceForcing::Tangential(vec![1.0; disc.nb()]),
        variant,
    )?;
    let r = disc.mesh.radius;
    let exact = BulkVectorField::from_fn(&disc.mesh, |x| [-x[1] / r, x[0] / r]);
    let max_velocity_error = flow
        .v
        .values
        .iter()
        .zip(&exact.values)
        .fold(0.0f64, |m, (a, b)| m.max((a[0] - b[0]).hypot(a[1] - b[1])));
    let surface_pressure_l2 = flow
        .q
        .iter()
        .enumerate()
        .map(|(k, q)| q * q * disc.mesh.boundary_segment_length(k))
        .sum::<f64>()
        .sqrt();
    Ok(RigidRotationReport {
        max_velocity_error,
        omega_error: (flow.omega - 1.0).abs(),
        bulk_pressure_l2: disc.ops.m_bulk.bilinear(&flow.p, &flow.p).max(0.0).sqrt(),
        surface_pressure_l2,
        weak_residual: rep.weak_residual,
    })
}

fn report_of(space: &StokesSpace, k: &CsrMatrix, load: &[f64], sol: &SaddleSolution) -> StokesReport {
    let r = full_residual_without_q(space, sol);
    // In the reduced variant q is built so that these residuals vanish as well.
    let fscale = max_abs(load).max(1e-300);
    StokesReport {
        divergence_residual: max_abs(&space.divergence.matvec(&sol.u_full)),
        weak_residual: max_abs(&r) / fscale,
        dissipation: k.bilinear(&sol.u_full, &sol.u_full),
        load_pairing: dot(load, &sol.u_full),
        solve_seconds: sol.seconds,
    }
}

fn p2_nodes(disc: &Discretization, e: usize) -> [usize; 6] {
    let nv = disc.nv();
    let tri = disc.mesh.triangles[e];
    let te = disc.mesh.triangle_edges()[e];
    [tri[0], tri[1], tri[2], nv + te[0], nv + te[1], nv + te[2]]
}

/// 𝓛²-projection of a velocity onto discretely divergence-free fields with tangential
/// boundary values of one uniform speed.
pub fn project_velocity(disc: &Discretization, v: &BulkVectorField) -> Result<FlowState> {
    if v.values.len() != disc.nv() + disc.mesh.edges().len() || !v.is_finite() {
        return Err(NschError::InvalidInput("initial velocity has wrong length or non-finite values".into()));
    }
    let space = StokesSpace::new(disc)?;
    let m = space.mass(disc);
    let bv = disc.boundary_vertices().to_vec();
    let load = assemble_load(
        disc,
        &space.layout,
        |e, _, l| p2_at(v, &p2_nodes(disc, e), &p2_values(l)),
        |k, _, s| {
            let nb = bv.len();
            let (a, b) = (v.values[bv[k]], v.values[bv[(k + 1) % nb]]);
            let mid = v.values[space.layout.segment_midpoint[k]];
            // quadratic trace along the segment
            let n = [(1.0 - s) * (1.0 - 2.0 * s), s * (2.0 * s - 1.0), 4.0 * s * (1.0 - s)];
            [n[0] * a[0] + n[1] * b[0] + n[2] * mid[0], n[0] * a[1] + n[1] * b[1] + n[2] * mid[1]]
        },
    );
    let sol = solve_saddle(disc, &space, &m, &load, StokesVariant::Reduced)?;
    let mut flow = flow_from(&space.layout, &sol, 0.0);
    flow.p.fill(0.0);
    flow.q.fill(0.0);
    Ok(flow)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MomentumForm {
    /// Skew-symmetric convection with the averaged-density time derivative; the
    /// kinetic energy balance holds exactly.
    #[default]
    Skew,
    /// ρ(φ)∂_t v with fully explicit convection and the explicit interfacial boundary term.
    NonConservative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NsConfig {
    pub dt: f64,
    #[serde(default)]
    pub form: MomentumForm,
    #[serde(default)]
    pub variant: StokesVariant,
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct NsStepStats {
    pub courant: f64,
    pub cfl_warning: bool,
    /// Whether density-jump flux terms entered the assembly.
    pub flux_terms: bool,
    pub divergence_residual: f64,
    pub solve_seconds: f64,
}

/// One semi-implicit momentum step from `flow` with the phase at the old time level
/// `phase_old` and the new Cahn–Hilliard state `ch`.
pub fn ns_step(
    disc: &Discretization,
    flow: &FlowState,
    phase_old: &BulkSurfaceField,
    ch: &CHState,
    params: &ModelParameters,
    cfg: &NsConfig,
) -> Result<(FlowState, NsStepStats)> {
    if !(cfg.dt > 0.0) {
        return Err(NschError::InvalidInput("dt must be positive".into()));
    }
    ch.phase.check(&disc.mesh)?;
    ch.chem.check(&disc.mesh)?;
    phase_old.check(&disc.mesh)?;
    let space = StokesSpace::new(disc)?;
    let mesh = &disc.mesh;
    let dt = cfg.dt;
    let dens = &params.densities;
    let coef = &params.coefficients;
    let phi = &ch.phase.phi;
    let psi = &ch.phase.psi;
    let mu = &ch.chem.phi;
    let th = &ch.chem.psi;
    let rj = dens.rho_jump();
    let sj = dens.sigma_jump();
    let flux_terms = rj != 0.0;
    let trace_mu: Vec<f64> = disc.boundary_vertices().iter().map(|&v| mu[v]).collect();

    // U = ρ(φ) vⁿ + J at bulk quadrature points
    let flux = |e: usize, l: [f64; 3], vq: Vec2| -> Vec2 {
        let tri = mesh.triangles[e];
        let ph = interp3(tri_values(phi, tri), l);
        let rho = dens.rho(ph);
        let mut u = [rho * vq[0], rho * vq[1]];
        if flux_terms {
            let g = p1_gradient(mu, tri, &mesh.triangle_geom(e).grads);
            let m = coef.mobility_bulk.eval(ph);
            u[0] -= rj * m * g[0];
            u[1] -= rj * m * g[1];
        }
        u
    };
    let v_old = &flow.v;
    let w_old = |k: usize, s: f64| -> Vec2 {
        let nb = disc.nb();
        let (ta, tb) = (disc.frame.tangents[k], disc.frame.tangents[(k + 1) % nb]);
        [flow.omega * ((1.0 - s) * ta[0] + s * tb[0]), flow.omega * ((1.0 - s) * ta[1] + s * tb[1])]
    };
    let rho_at = |f: &[f64], e: usize, l: [f64; 3]| dens.rho(interp3(tri_values(f, mesh.triangles[e]), l));
    let sigma_at = |f: &[f64], k: usize, s: f64| dens.sigma(segment_interp(f, k, s));
    let z_coef = match cfg.form {
        MomentumForm::NonConservative if params.l > 0.0 && params.l.is_finite() => -0.5 * chi(params.l) * (params.beta * sj - rj),
        _ => 0.0,
    };

    let k = match cfg.form {
        MomentumForm::Skew => viscous_form(
            disc,
            &space,
            &ch.phase,
            coef,
            |e, _, l| 0.5 * (rho_at(phi, e, l) + rho_at(&phase_old.phi, e, l)) / dt,
            |e, _, l| flux(e, l, p2_at(v_old, &p2_nodes(disc, e), &p2_values(l))),
            |kk, _, s| 0.5 * (sigma_at(psi, kk, s) + sigma_at(&phase_old.psi, kk, s)) / dt,
        ),
        MomentumForm::NonConservative => viscous_form(
            disc,
            &space,
            &ch.phase,
            coef,
            |e, _, l| rho_at(phi, e, l) / dt,
            |_, _, _| [0.0; 2],
            |kk, _, s| {
                let x = params.beta * segment_interp(th, kk, s) - segment_interp(&trace_mu, kk, s);
                sigma_at(psi, kk, s) / dt + z_coef * x
            },
        ),
    };
    let load = assemble_load(
        disc,
        &space.layout,
        |e, _, l| {
            let nodes = p2_nodes(disc, e);
            let tri = mesh.triangles[e];
            let geom = mesh.triangle_geom(e);
            let n = p2_values(l);
            let vq = p2_at(v_old, &nodes, &n);
            let ph = interp3(tri_values(phi, tri), l);
            let gmu = p1_gradient(mu, tri, &geom.grads);
            let mut f = [-ph * gmu[0], -ph * gmu[1]];
            match cfg.form {
                MomentumForm::Skew => {
                    let r = rho_at(&phase_old.phi, e, l) / dt;
                    f[0] += r * vq[0];
                    f[1] += r * vq[1];
                }
                MomentumForm::NonConservative => {
                    let r = rho_at(phi, e, l) / dt;
                    let u = flux(e, l, vq);
                    let gv = p2_grad_at(v_old, &nodes, &geom.p2_grads(l));
                    f[0] += r * vq[0] - dot2(u, gv[0]);
                    f[1] += r * vq[1] - dot2(u, gv[1]);
                }
            }
            f
        },
        |kk, _, s| {
            let h = space.layout.segment_len[kk];
            let nb = disc.nb();
            let te = space.layout.segment_dir[kk];
            let dth = (th[(kk + 1) % nb] - th[kk]) / h;
            let ps = segment_interp(psi, kk, s);
            let sig = match cfg.form {
                MomentumForm::Skew => sigma_at(&phase_old.psi, kk, s),
                MomentumForm::NonConservative => sigma_at(psi, kk, s),
            } / dt;
            let w = w_old(kk, s);
            [sig * w[0] - ps * dth * te[0], sig * w[1] - ps * dth * te[1]]
        },
    );
    let sol = solve_saddle(disc, &space, &k, &load, cfg.variant)?;
    let next = flow_from(&space.layout, &sol, flow.t + dt);
    let vmax = next.v.values.iter().chain(&flow.v.values).fold(0.0f64, |m, v| m.max(v[0].hypot(v[1])));
    let courant = vmax * dt / mesh.min_edge_length();
    let stats = NsStepStats {
        courant,
        cfl_warning: courant > 1.0,
        flux_terms,
        divergence_residual: max_abs(&space.divergence.matvec(&sol.u_full)),
        solve_seconds: sol.seconds,
    };
    Ok((next, stats))
}

/// ½∫ρ(φ)|v|² and ½∫σ(ψ)|w|², w = ω I_h τ.
pub fn kinetic_energy(disc: &Discretization, flow: &FlowState, phase: &BulkSurfaceField, params: &ModelParameters) -> (f64, f64) {
    let mesh = &disc.mesh;
    let dens = &params.densities;
    let mut bulk = 0.0;
    for e in 0..mesh.n_triangles() {
        let el = element_data(disc, e);
        for (w, n, _, l) in &el.points {
            let v = p2_at(&flow.v, &el.nodes, n);
            bulk += w * dens.rho(interp3(tri_values(&phase.phi, el.tri), *l)) * dot2(v, v);
        }
    }
    let nb = disc.nb();
    let mut surf = 0.0;
    for k in 0..nb {
        let h = mesh.boundary_segment_length(k);
        let (ta, tb) = (disc.frame.tangents[k], disc.frame.tangents[(k + 1) % nb]);
        for (s, wq) in line_rule() {
            let w = [flow.omega * ((1.0 - s) * ta[0] + s * tb[0]), flow.omega * ((1.0 - s) * ta[1] + s * tb[1])];
            surf += wq * h * dens.sigma(segment_interp(&phase.psi, k, s)) * dot2(w, w);
        }
    }
    (0.5 * bulk, 0.5 * surf)
}

/// 2∫ν_Ω(φ)|Dv|² and ∫γ(φ,ψ)|w|².
pub fn flow_dissipation(disc: &Discretization, flow: &FlowState, phase: &BulkSurfaceField, coef: &CoefficientSet) -> (f64, f64) {
    let mesh = &disc.mesh;
    let mut visc = 0.0;
    for e in 0..mesh.n_triangles() {
        let el = element_data(disc, e);
        for (w, _, g, l) in &el.points {
            let gv = p2_grad_at(&flow.v, &el.nodes, g);
            let d01 = 0.5 * (gv[0][1] + gv[1][0]);
            let dd = gv[0][0] * gv[0][0] + gv[1][1] * gv[1][1] + 2.0 * d01 * d01;
            visc += w * 2.0 * coef.viscosity_bulk.eval(interp3(tri_values(&phase.phi, el.tri), *l)) * dd;
        }
    }
    let nb = disc.nb();
    let trace: Vec<f64> = disc.boundary_vertices().iter().map(|&v| phase.phi[v]).collect();
    let mut fric = 0.0;
    for k in 0..nb {
        let h = mesh.boundary_segment_length(k);
        let (ta, tb) = (disc.frame.tangents[k], disc.frame.tangents[(k + 1) % nb]);
        for (s, wq) in line_rule() {
            let w = [flow.omega * ((1.0 - s) * ta[0] + s * tb[0]), flow.omega * ((1.0 - s) * ta[1] + s * tb[1])];
            let gam = coef.friction.eval(segment_interp(&trace, k, s), segment_interp(&phase.psi, k, s));
            fric += wq * h * gam * dot2(w, w);
        }
    }
    (visc, fric)
}

/// Weak divergence residual max_i |∫λ_i div v| of a flow field.
pub fn divergence_residual(disc: &Discretization, flow: &FlowState) -> Result<f64> {
    let space = StokesSpace::new(disc)?;
    let omega = vec![flow.omega; disc.nb()];
    let u = space.layout.unknowns_of(&flow.v, &omega);
    Ok(max_abs(&space.divergence.matvec(&u)))
}

/// max over boundary vertices of |v·n| and |v·τ − ω|.
pub fn boundary_kinematics_defect(disc: &Discretization, flow: &FlowState) -> f64 {
    let mut worst = 0.0f64;
    for (k, &b) in disc.boundary_vertices().iter().enumerate() {
        let v = flow.v.values[b];
        worst = worst.max(dot2(v, disc.frame.normals[k]).abs());
        worst = worst.max((dot2(v, disc.frame.tangents[k]) - flow.omega).abs());
    }
    worst
}

struct SaddlePencil {
    a: CsrMatrix,
    m: CsrMatrix,
    lu: LuFactor,
    n: usize,
}

impl Pencil for SaddlePencil {
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

#[derive(Debug, Clone)]
pub struct StokesEigenpairs {
    pub values: Vec<f64>,
    pub fields: Vec<FlowState>,
    /// max |G − I| of the coupled 𝓛² Gram matrix.
    pub orthonormality_defect: f64,
    pub residuals: Vec<f64>,
}

/// Smallest eigenpairs of the bulk–surface Stokes operator with unit coefficients on the
/// discretely divergence-free space (reduced variant).
pub fn stokes_eigenpairs(disc: &Discretization, k: usize) -> Result<StokesEigenpairs> {
    let space = StokesSpace::new(disc)?;
    let s = &space.reduction;
    let unit = CoefficientSet::default();
    let a_full = viscous_form(
        disc,
        &space,
        &BulkSurfaceField::zeros(&disc.mesh),
        &unit,
        |_, _, _| 0.0,
        |_, _, _| [0.0; 2],
        |_, _, _| 0.0,
    );
    let a = s.transpose().matmul(&a_full.matmul(s));
    let m = s.transpose().matmul(&space.mass(disc).matmul(s));
    let b = space.divergence.matmul(s);
    let nu = a.nrows();
    let nv = disc.nv();
    let constrained_dim = nu.saturating_sub(nv - 1);
    if k == 0 || k > constrained_dim {
        return Err(NschError::InvalidInput(format!(
            "requested {k} eigenpairs but the divergence-free space has dimension {constrained_dim}"
        )));
    }
    let n = nu + nv + 1;
    let mut t = TripletBuilder::with_capacity(n, n, a.nnz() + 2 * b.nnz() + 2 * nv);
    t.add_block(&a, 0, 0, 1.0);
    t.add_block(&b, nu, 0, 1.0);
    t.add_block_transposed(&b, 0, nu, 1.0);
    for (i, w) in disc.ops.bulk_mass_one.iter().enumerate() {
        t.push(nu + i, nu + nv, *w);
        t.push(nu + nv, nu + i, *w);
    }
    let lu = LuFactor::new(&t.build())?;
    let pencil = SaddlePencil { a, m, lu, n: nu };
    let pairs = smallest_eigenpairs(&pencil, k, &EigenOptions::for_count(k))?;
    let mut defect = 0.0f64;
    for i in 0..k {
        let mi = pencil.m.matvec(&pairs.vectors[i]);
        for j in 0..k {
            let g = dot(&mi, &pairs.vectors[j]);
            defect = defect.max((g - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    let fields = pairs
        .vectors
        .iter()
        .map(|y| {
            let u = space.layout.expand_reduced(y);
            FlowState {
                v: space.layout.velocity(&u),
                p: vec![0.0; nv],
                omega: y[nu - 1],
                q: vec![0.0; disc.nb()],
                t: 0.0,
            }
        })
        .collect();
    Ok(StokesEigenpairs { values: pairs.values, fields, orthonormality_defect: defect, residuals: pairs.residuals })
}

/// Coupled 𝓛² inner product ∫v·u + ∫_Γ w·z of two flow fields.
pub fn flow_inner(disc: &Discretization, a: &FlowState, b: &FlowState) -> Result<f64> {
    let space = StokesSpace::new(disc)?;
    let ua = space.layout.unknowns_of(&a.v, &vec![a.omega; disc.nb()]);
    let ub = space.layout.unknowns_of(&b.v, &vec![b.omega; disc.nb()]);
    Ok(space.mass(disc).bilinear(&ua, &ub))
}

struct KornPencil {
    korn: CsrMatrix,
    h1: CsrMatrix,
    lu: LuFactor,
}

impl Pencil for KornPencil {
    fn dim(&self) -> usize {
        self.korn.nrows()
    }
    fn apply_a(&self, x: &[f64]) -> Vec<f64> {
        self.korn.matvec(x)
    }
    fn apply_m(&self, x: &[f64]) -> Vec<f64> {
        self.h1.matvec(x)
    }
    fn apply_inverse(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.lu.solve(&self.h1.matvec(z))
    }
}

/// Discrete Korn constant: the square root of max (H¹ form)/(Korn form) over velocities
/// with tangential boundary values (one speed per boundary vertex).
pub fn korn_check(disc: &Discretization) -> Result<f64> {
    let space = StokesSpace::new(disc)?;
    let h1 = assemble_velocity_form(
        disc,
        &space.layout,
        |_, _, _| BulkCoef { grad: 1.0, mass: 1.0, ..Default::default() },
        |_, _, _| SurfCoef { mass: 1.0, grad: 1.0, ..Default::default() },
    );
    let korn = assemble_velocity_form(
        disc,
        &space.layout,
        |_, _, _| BulkCoef { sym: 0.5, ..Default::default() },
        |_, _, _| SurfCoef { mass: 1.0, tan: 1.0, ..Default::default() },
    );
    let lu = LuFactor::new(&korn)?;
    let pencil = KornPencil { korn, h1, lu };
    let mut opts = EigenOptions::for_count(1);
    opts.block = 4;
    let r = smallest_eigenpairs(&pencil, 1, &opts)?;
    let lam = r.values[0];
    if !(lam > 0.0) {
        return Err(NschError::Singular(format!("Korn form has non-positive Rayleigh quotient {lam}")));
    }
    Ok(1.0 / lam.sqrt())
}

/// Korn and H¹ quadratic forms of a flow field with uniform surface speed.
pub fn korn_forms(disc: &Discretization, flow: &FlowState) -> Result<(f64, f64)> {
    let space = StokesSpace::new(disc)?;
    let u = space.layout.unknowns_of(&flow.v, &vec![flow.omega; disc.nb()]);
    let h1 = assemble_velocity_form(
        disc,
        &space.layout,
        |_, _, _| BulkCoef { grad: 1.0, mass: 1.0, ..Default::default() },
        |_, _, _| SurfCoef { mass: 1.0, grad: 1.0, ..Default::default() },
    );
    let korn = assemble_velocity_form(
        disc,
        &space.layout,
        |_, _, _| BulkCoef { sym: 0.5, ..Default::default() },
        |_, _, _| SurfCoef { mass: 1.0, tan: 1.0, ..Default::default() },
    );
    Ok((korn.bilinear(&u, &u), h1.bilinear(&u, &u)))
}

/// Largest ratio (solution energy norm)/(load 𝓛² norm) over random smooth loads.
pub fn stokes_stability_ratio(disc: &Discretization, samples: usize, seed: u64) -> Result<f64> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let space = StokesSpace::new(disc)?;
    let unit = CoefficientSet::default();
    let zero = BulkSurfaceField::zeros(&disc.mesh);
    let k = viscous_form(disc, &space, &zero, &unit, |_, _, _| 0.0, |_, _, _| [0.0; 2], |_, _, _| 0.0);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let fx = crate::random::SmoothRandomFunction::new(&mut rng, 5, 3.0);
        let fy = crate::random::SmoothRandomFunction::new(&mut rng, 5, 3.0);
        let gs = crate::random::SmoothRandomFunction::new(&mut rng, 5, 3.0);
        let f = BulkVectorField::from_fn(&disc.mesh, |x| [fx.eval(x), fy.eval(x)]);
        let g: Vec<f64> = disc.boundary_vertices().iter().map(|&b| gs.eval(disc.mesh.vertices[b])).collect();
        let load = assemble_load(
            disc,
            &space.layout,
            |e, _, l| p2_at(&f, &p2_nodes(disc, e), &p2_values(l)),
            |kk, _, s| {
                let nb = g.len();
                let kn = (kk + 1) % nb;
                let (ta, tb) = (disc.frame.tangents[kk], disc.frame.tangents[kn]);
                let (ga, gb) = ((1.0 - s) * g[kk], s * g[kn]);
                [ga * ta[0] + gb * tb[0], ga * ta[1] + gb * tb[1]]
            },
        );
        let sol = solve_saddle(disc, &space, &k, &load, StokesVariant::Reduced)?;
        let energy = k.bilinear(&sol.u_full, &sol.u_full).sqrt();
        let load_norm = (bulk_l2_squared(disc, &f) + disc.ops.m_surf.bilinear(&g, &g)).sqrt();
        if load_norm > 0.0 {
            worst = worst.max(energy / load_norm);
        }
    }
    Ok(worst)
}

fn bulk_l2_squared(disc: &Discretization, f: &BulkVectorField) -> f64 {
    let mut acc = 0.0;
    for e in 0..disc.mesh.n_triangles() {
        let el = element_data(disc, e);
        for (w, n, _, _) in &el.points {
            let v = p2_at(f, &el.nodes, n);
            acc += w * dot2(v, v);
        }
    }
    acc
}

/// Courant number max|v|·dt/h_min.
pub fn courant_number(disc: &Discretization, flow: &FlowState, dt: f64) -> f64 {
    let vmax = flow.v.values.iter().fold(0.0f64, |m, v| m.max(v[0].hypot(v[1])));
    vmax * dt / disc.mesh.min_edge_length()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_tangential(disc: &Discretization) -> SurfaceForcing {
        SurfaceForcing::Tangential(vec![1.0; disc.nb()])
    }

    #[test]
    fn rigid_rotation_is_reproduced() {
        let disc = Discretization::disk(4, 1.0).unwrap();
        let zero = BulkSurfaceField::zeros(&disc.mesh);
        for variant in [StokesVariant::Reduced, StokesVariant::Full] {
            let (flow, rep) = solve_bs_stokes(
                &disc,
                &zero,
                &CoefficientSet::default(),
                &BulkVectorField::zeros(&disc.mesh),
                &unit_tangential(&disc),
                variant,
            )
            .unwrap();
            assert!((flow.omega - 1.0).abs() < 1e-10, "{variant:?} omega {}", flow.omega);
            let exact = BulkVectorField::from_fn(&disc.mesh, |x| [-x[1], x[0]]);
            let err = flow.v.values.iter().zip(&exact.values).fold(0.0f64, |m, (a, b)| m.max((a[0] - b[0]).abs()).max((a[1] - b[1]).abs()));
            assert!(err < 1e-10, "{variant:?} velocity error {err}");
            assert!(max_abs(&flow.p) < 1e-10 && max_abs(&flow.q) < 1e-10);
            assert!(rep.weak_residual < 1e-10);
        }
    }

    #[test]
    fn variants_agree_for_random_load() {
        let disc = Discretization::disk(3, 1.0).unwrap();
        let phase = BulkSurfaceField::from_fns(&disc.mesh, |x| 0.5 * x[0], |x| 0.3 * x[1]);
        let mut coef = CoefficientSet::default();
        coef.viscosity_bulk = crate::materials::ScalarCoefficient::Affine { at_minus_one: 0.5, at_plus_one: 2.0 };
        coef.viscosity_surface = crate::materials::ScalarCoefficient::Affine { at_minus_one: 1.0, at_plus_one: 3.0 };
        let f = BulkVectorField::from_fn(&disc.mesh, |x| [x[1] * x[1] - 0.3, x[0] * x[1] + 1.0]);
        let g = SurfaceForcing::Tangential(disc.boundary_vertices().iter().map(|&b| 1.0 + disc.mesh.vertices[b][0]).collect());
        let (a, ra) = solve_bs_stokes(&disc, &phase, &coef, &f, &g, StokesVariant::Reduced).unwrap();
        let (b, rb) = solve_bs_stokes(&disc, &phase, &coef, &f, &g, StokesVariant::Full).unwrap();
        assert!((a.omega - b.omega).abs() < 1e-10);
        for (x, y) in a.v.values.iter().zip(&b.v.values) {
            assert!((x[0] - y[0]).abs() < 1e-10 && (x[1] - y[1]).abs() < 1e-10);
        }
        for (x, y) in a.p.iter().zip(&b.p) {
            assert!((x - y).abs() < 1e-10);
        }
        for (x, y) in a.q.iter().zip(&b.q) {
            assert!((x - y).abs() < 1e-9, "q {x} vs {y}");
        }
        assert!(ra.weak_residual < 1e-10 && rb.weak_residual < 1e-10, "{} {}", ra.weak_residual, rb.weak_residual);
        assert!(((ra.dissipation - ra.load_pairing) / ra.load_pairing).abs() < 1e-10);
    }

    #[test]
    fn frictionless_rotation_is_singular() {
        let disc = Discretization::disk(3, 1.0).unwrap();
        let mut coef = CoefficientSet::default();
        coef.friction = crate::materials::FrictionCoefficient::Constant { value: 0.0 };
        let r = solve_bs_stokes(
            &disc,
            &BulkSurfaceField::zeros(&disc.mesh),
            &coef,
            &BulkVectorField::zeros(&disc.mesh),
            &unit_tangential(&disc),
            StokesVariant::Reduced,
        );
        assert!(matches!(r, Err(NschError::Singular(_))));
    }
}
