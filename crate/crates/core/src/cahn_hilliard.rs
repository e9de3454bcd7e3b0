//! Implicit time step of the convective bulk–surface Cahn–Hilliard subsystem.
//!
//! Unknowns per step are (φ, ψ, μ, θ) with P1 elements in the bulk and on the boundary
//! polygon. The mass equations are tested with the chemical-potential space, the
//! constitutive relations with the full P1 pair space; potential terms use nodal
//! (lumped) quadrature. Newton's method solves the coupled system.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::discretization::Discretization;
use crate::error::{NschError, Result};
use crate::fe::{dot2, triangle_rule, p2_values};
use crate::materials::{ModelParameters, PotentialSpec};
use crate::spaces::{BulkSurfaceField, BulkVectorField, IdentifiedSpace, SpaceOperators};
use crate::sparse::{max_abs, CsrMatrix, LuFactor, TripletBuilder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ChScheme {
    #[default]
    FullyImplicit,
    /// Convex part implicit, concave quadratic part explicit.
    ConvexSplitting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CHStepConfig {
    pub dt: f64,
    #[serde(default)]
    pub scheme: ChScheme,
    #[serde(default = "default_newton_tol")]
    pub newton_tol: f64,
    #[serde(default = "default_newton_max")]
    pub max_newton: usize,
    #[serde(default = "default_shrink")]
    pub shrink: f64,
}

fn default_newton_tol() -> f64 {
    1e-10
}
fn default_newton_max() -> usize {
    50
}
fn default_shrink() -> f64 {
    0.5
}

impl CHStepConfig {
    pub fn new(dt: f64, scheme: ChScheme) -> Self {
        Self { dt, scheme, newton_tol: default_newton_tol(), max_newton: default_newton_max(), shrink: default_shrink() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CHState {
    /// (φ, ψ)
    pub phase: BulkSurfaceField,
    /// (μ, θ)
    pub chem: BulkSurfaceField,
    pub t: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct NewtonStats {
    pub iterations: usize,
    pub residuals: Vec<f64>,
    pub backtracks: usize,
    pub solve_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FreeEnergy {
    pub bulk: f64,
    pub surface: f64,
    pub penalty: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Masses {
    pub bulk: f64,
    pub surface: f64,
    /// β·bulk + surface
    pub combined: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChDissipation {
    /// ∫ m_Ω(φ)|∇μ|²
    pub bulk: f64,
    /// ∫ m_Γ(ψ)|∂_s θ|²
    pub surface: f64,
    /// χ(L)∫(βθ − μ)²
    pub exchange: f64,
}

pub fn mass_functionals(disc: &Discretization, state: &CHState, params: &ModelParameters) -> Masses {
    let bulk = disc.ops.bulk_integral(&state.phase.phi);
    let surface = disc.ops.surface_integral(&state.phase.psi);
    Masses { bulk, surface, combined: params.beta * bulk + surface }
}

fn nodal_potential_sum(w: &[f64], s: &[f64], p: &PotentialSpec) -> Result<f64> {
    let mut acc = 0.0;
    for (wi, si) in w.iter().zip(s) {
        acc += wi * p.eval(*si, 0)?;
    }
    Ok(acc)
}

/// χ(K)/2 ‖αψ − φ|_Γ‖²
fn robin_penalty(ops: &SpaceOperators, phase: &BulkSurfaceField, params: &ModelParameters) -> f64 {
    let ck = params.chi_k();
    if ck == 0.0 {
        return 0.0;
    }
    let tr = ops.trace_of(&phase.phi);
    let d: Vec<f64> = phase.psi.iter().zip(&tr).map(|(p, t)| params.alpha * p - t).collect();
    0.5 * ck * ops.m_surf.bilinear(&d, &d)
}

pub fn free_energy_of(disc: &Discretization, phase: &BulkSurfaceField, params: &ModelParameters) -> Result<FreeEnergy> {
    let ops = &disc.ops;
    let bulk = 0.5 * ops.a_bulk.bilinear(&phase.phi, &phase.phi)
        + nodal_potential_sum(&ops.bulk_mass_one, &phase.phi, &params.bulk_potential)?;
    let surface = 0.5 * ops.a_surf.bilinear(&phase.psi, &phase.psi)
        + nodal_potential_sum(&ops.surf_mass_one, &phase.psi, &params.surface_potential)?;
    let penalty = robin_penalty(ops, phase, params);
    Ok(FreeEnergy { bulk, surface, penalty, total: bulk + surface + penalty })
}

pub fn free_energy(disc: &Discretization, state: &CHState, params: &ModelParameters) -> Result<FreeEnergy> {
    free_energy_of(disc, &state.phase, params)
}

pub fn ch_dissipation(disc: &Discretization, state: &CHState, params: &ModelParameters) -> ChDissipation {
    let mesh = &disc.mesh;
    let ops = &disc.ops;
    let mb: Vec<f64> = state.phase.phi.iter().map(|&s| params.coefficients.mobility_bulk.eval(s)).collect();
    let ms: Vec<f64> = state.phase.psi.iter().map(|&s| params.coefficients.mobility_surface.eval(s)).collect();
    let ab = SpaceOperators::weighted_bulk_stiffness(mesh, &mb);
    let as_ = SpaceOperators::weighted_surface_stiffness(mesh, &ms);
    let tr = ops.trace_of(&state.chem.phi);
    let d: Vec<f64> = state.chem.psi.iter().zip(&tr).map(|(t, m)| params.beta * t - m).collect();
    ChDissipation {
        bulk: ab.bilinear(&state.chem.phi, &state.chem.phi),
        surface: as_.bilinear(&state.chem.psi, &state.chem.psi),
        exchange: params.chi_l() * ops.m_surf.bilinear(&d, &d),
    }
}

/// Bulk transport matrix C[i][j] = ∫ λ_j v·∇λ_i for a P2 velocity.
pub fn bulk_transport_matrix(disc: &Discretization, v: &BulkVectorField) -> CsrMatrix {
    let mesh = &disc.mesh;
    let nv = mesh.n_vertices();
    let rule = triangle_rule();
    let mut t = TripletBuilder::with_capacity(nv, nv, 9 * mesh.n_triangles());
    for e in 0..mesh.n_triangles() {
        let tri = mesh.triangles[e];
        let te = mesh.triangle_edges()[e];
        let nodes = [tri[0], tri[1], tri[2], nv + te[0], nv + te[1], nv + te[2]];
        let g = mesh.triangle_geom(e);
        // V_j = ∫_T λ_j v
        let mut vj = [[0.0; 2]; 3];
        for (l, w) in rule.iter() {
            let n = p2_values(*l);
            let mut vq = [0.0; 2];
            for (a, &node) in nodes.iter().enumerate() {
                vq[0] += n[a] * v.values[node][0];
                vq[1] += n[a] * v.values[node][1];
            }
            for j in 0..3 {
                vj[j][0] += w * g.area * l[j] * vq[0];
                vj[j][1] += w * g.area * l[j] * vq[1];
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                t.push(tri[i], tri[j], dot2(g.grads[i], vj[j]));
            }
        }
    }
    t.build()
}

/// Surface transport matrix C[k][l] = ∫_Γ λ_l (w·τ_e) ∂_s λ_k for w = ω·I_h τ, the
/// interpolated vertex tangent field scaled by the uniform speed ω.
pub fn surface_transport_matrix(disc: &Discretization, omega: f64) -> CsrMatrix {
    let nb = disc.nb();
    let mut t = TripletBuilder::with_capacity(nb, nb, 4 * nb);
    if omega == 0.0 {
        return t.build();
    }
    for k in 0..nb {
        let (a, b) = (k, (k + 1) % nb);
        let (va, vb) = disc.mesh.boundary_segment(k);
        let (pa, pb) = (disc.mesh.vertices[va], disc.mesh.vertices[vb]);
        let h = disc.mesh.boundary_segment_length(k);
        let te = [(pb[0] - pa[0]) / h, (pb[1] - pa[1]) / h];
        let ca = omega * dot2(disc.frame.tangents[a], te);
        let cb = omega * dot2(disc.frame.tangents[b], te);
        // ∫_e λ_l (λ_a c_a + λ_b c_b) ds
        let ua = h * (ca / 3.0 + cb / 6.0);
        let ub = h * (ca / 6.0 + cb / 3.0);
        t.push(a, a, -ua / h);
        t.push(a, b, -ub / h);
        t.push(b, a, ua / h);
        t.push(b, b, ub / h);
    }
    t.build()
}

fn block_diag(a: &CsrMatrix, b: &CsrMatrix) -> CsrMatrix {
    let n = a.nrows() + b.nrows();
    let mut t = TripletBuilder::with_capacity(n, a.ncols() + b.ncols(), a.nnz() + b.nnz());
    t.add_block(a, 0, 0, 1.0);
    t.add_block(b, a.nrows(), a.ncols(), 1.0);
    t.build()
}

/// Static data of one implicit step.
struct StepSystem<'a> {
    disc: &'a Discretization,
    params: &'a ModelParameters,
    scheme: ChScheme,
    dt: f64,
    n1: usize,
    mass: CsrMatrix,
    stiff: CsrMatrix,
    pen_k: CsrMatrix,
    pen_l: CsrMatrix,
    transport: CsrMatrix,
    lumped: Vec<f64>,
    x_old: Vec<f64>,
    space: Option<IdentifiedSpace>,
}

impl<'a> StepSystem<'a> {
    fn new(
        disc: &'a Discretization,
        params: &'a ModelParameters,
        scheme: ChScheme,
        dt: f64,
        x_old: Vec<f64>,
        velocity: Option<(&BulkVectorField, f64)>,
    ) -> Self {
        let ops = &disc.ops;
        let nv = disc.nv();
        let nb = disc.nb();
        let n1 = nv + nb;
        let mass = ops.coupled_mass();
        let stiff = block_diag(&ops.a_bulk, &ops.a_surf);
        let zero = CsrMatrix::zeros(n1, n1);
        let pen = |c: f64, w: f64| {
            let mut t = TripletBuilder::new(n1, n1);
            ops.push_penalty(&mut t, 0, nv, c, w);
            t.build()
        };
        let pen_k = pen(params.chi_k(), params.alpha);
        let pen_l = pen(params.chi_l(), params.beta);
        let transport = match velocity {
            Some((v, omega)) => block_diag(&bulk_transport_matrix(disc, v), &surface_transport_matrix(disc, omega)),
            None => zero,
        };
        let mut lumped = ops.bulk_mass_one.clone();
        lumped.extend_from_slice(&ops.surf_mass_one);
        let space = (params.l == 0.0).then(|| IdentifiedSpace::new(&disc.mesh, params.beta));
        Self { disc, params, scheme, dt, n1, mass, stiff, pen_k, pen_l, transport, lumped, x_old, space }
    }

    fn potential(&self, i: usize) -> &PotentialSpec {
        if i < self.disc.nv() {
            &self.params.bulk_potential
        } else {
            &self.params.surface_potential
        }
    }

    /// Nodal derivative of the potential (order 1 or 2) under the chosen scheme.
    fn nodal_potential(&self, x: &[f64], order: u8) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.n1);
        for i in 0..self.n1 {
            let p = self.potential(i);
            let v = match self.scheme {
                ChScheme::FullyImplicit => p.eval(x[i], order)?,
                ChScheme::ConvexSplitting => {
                    let f0 = p.convex(x[i], order)?;
                    if order == 1 {
                        f0 - p.concave_coefficient() * self.x_old[i]
                    } else {
                        f0
                    }
                }
            };
            out.push(v * self.lumped[i]);
        }
        Ok(out)
    }

    fn mobility_stiffness(&self, x: &[f64]) -> CsrMatrix {
        let nv = self.disc.nv();
        let c = &self.params.coefficients;
        let mb: Vec<f64> = x[..nv].iter().map(|&s| c.mobility_bulk.eval(s)).collect();
        let ms: Vec<f64> = x[nv..].iter().map(|&s| c.mobility_surface.eval(s)).collect();
        block_diag(
            &SpaceOperators::weighted_bulk_stiffness(&self.disc.mesh, &mb),
            &SpaceOperators::weighted_surface_stiffness(&self.disc.mesh, &ms),
        )
    }

    /// Full residual (mass rows, constitutive rows) at z = (x, c).
    fn residual(&self, z: &[f64]) -> Result<Vec<f64>> {
        let n1 = self.n1;
        let (x, c) = z.split_at(n1);
        let dx: Vec<f64> = x.iter().zip(&self.x_old).map(|(a, b)| (a - b) / self.dt).collect();
        let mut r1 = self.mass.matvec(&dx);
        let cx = self.transport.matvec(x);
        let ac = self.mobility_stiffness(x).matvec(c);
        let pl = self.pen_l.matvec(c);
        for i in 0..n1 {
            r1[i] += -cx[i] + ac[i] + pl[i];
        }
        let mut r2 = self.mass.matvec(c);
        let ax = self.stiff.matvec(x);
        let pk = self.pen_k.matvec(x);
        let fp = self.nodal_potential(x, 1)?;
        for i in 0..n1 {
            r2[i] -= ax[i] + pk[i] + fp[i];
        }
        r1.extend(r2);
        Ok(r1)
    }

    fn jacobian(&self, z: &[f64]) -> Result<CsrMatrix> {
        let n1 = self.n1;
        let nv = self.disc.nv();
        let nb = self.disc.nb();
        let mesh = &self.disc.mesh;
        let (x, c) = z.split_at(n1);
        let mut t = TripletBuilder::with_capacity(2 * n1, 2 * n1, 12 * self.mass.nnz());
        t.add_block(&self.mass, 0, 0, 1.0 / self.dt);
        t.add_block(&self.transport, 0, 0, -1.0);
        let coef = &self.params.coefficients;
        if !coef.mobility_bulk.is_constant() {
            for e in 0..mesh.n_triangles() {
                let tri = mesh.triangles[e];
                let k = mesh.triangle_geom(e).p1_stiffness();
                for i in 0..3 {
                    let flux: f64 = (0..3).map(|j| k[i][j] * c[tri[j]]).sum();
                    for &kk in &tri {
                        t.push(tri[i], kk, coef.mobility_bulk.derivative(x[kk]) / 3.0 * flux);
                    }
                }
            }
        }
        if !coef.mobility_surface.is_constant() {
            for k in 0..nb {
                let (a, b) = (k, (k + 1) % nb);
                let h = mesh.boundary_segment_length(k);
                let diff = (c[nv + a] - c[nv + b]) / h;
                for (row, sgn) in [(a, 1.0), (b, -1.0)] {
                    for l in [a, b] {
                        t.push(nv + row, nv + l, 0.5 * coef.mobility_surface.derivative(x[nv + l]) * sgn * diff);
                    }
                }
            }
        }
        t.add_block(&self.mobility_stiffness(x), 0, n1, 1.0);
        t.add_block(&self.pen_l, 0, n1, 1.0);
        t.add_block(&self.stiff, n1, 0, -1.0);
        t.add_block(&self.pen_k, n1, 0, -1.0);
        let fpp = self.nodal_potential(x, 2)?;
        for i in 0..n1 {
            t.push(n1 + i, i, -fpp[i]);
        }
        t.add_block(&self.mass, n1, n1, 1.0);
        let j = t.build();
        Ok(match &self.space {
            None => j,
            Some(sp) => {
                let rows = block_diag(&sp.pt, &CsrMatrix::identity(n1));
                let cols = block_diag(&CsrMatrix::identity(n1), &sp.p);
                rows.matmul(&j.matmul(&cols))
            }
        })
    }

    fn reduce_residual(&self, r: Vec<f64>) -> Vec<f64> {
        match &self.space {
            None => r,
            Some(sp) => {
                let mut out = sp.restrict(&r[..self.n1]);
                out.extend_from_slice(&r[self.n1..]);
                out
            }
        }
    }

    fn expand(&self, y: &[f64]) -> Vec<f64> {
        match &self.space {
            None => y.to_vec(),
            Some(sp) => {
                let mut out = y[..self.n1].to_vec();
                out.extend(sp.expand(&y[self.n1..]));
                out
            }
        }
    }

    fn reduce_state(&self, z: &[f64]) -> Vec<f64> {
        match &self.space {
            None => z.to_vec(),
            Some(sp) => {
                // interior bulk values followed by surface values
                let nv = self.disc.nv();
                let mut out = z[..self.n1].to_vec();
                let c = &z[self.n1..];
                for v in 0..nv {
                    if self.disc.mesh.boundary_index(v).is_none() {
                        out.push(c[v]);
                    }
                }
                out.extend_from_slice(&c[nv..]);
                debug_assert_eq!(out.len(), self.n1 + sp.n_reduced());
                out
            }
        }
    }
}

fn barrier_ok(params: &ModelParameters, nv: usize, x: &[f64]) -> bool {
    let limit = 1.0 - crate::materials::BARRIER_EPS;
    let bulk_ok = !params.bulk_potential.is_singular() || x[..nv].iter().all(|s| s.abs() < limit);
    let surf_ok = !params.surface_potential.is_singular() || x[nv..].iter().all(|s| s.abs() < limit);
    bulk_ok && surf_ok
}

/// One backward-Euler (or convex-split) step transported by the P2 velocity `v` and the
/// uniform surface speed `omega`.
pub fn ch_step(
    disc: &Discretization,
    state: &CHState,
    v: &BulkVectorField,
    omega: f64,
    params: &ModelParameters,
    cfg: &CHStepConfig,
) -> Result<(CHState, NewtonStats)> {
    if !(cfg.dt > 0.0) {
        return Err(NschError::InvalidInput("dt must be positive".into()));
    }
    state.phase.check(&disc.mesh)?;
    let moving = omega != 0.0 || v.max_abs() != 0.0;
    let x_old = state.phase.concat();
    let sys = StepSystem::new(disc, params, cfg.scheme, cfg.dt, x_old.clone(), moving.then_some((v, omega)));
    let n1 = sys.n1;
    let mut z = x_old.clone();
    z.extend(state.chem.concat());
    let mut y = sys.reduce_state(&z);
    z = sys.expand(&y);
    let mut stats = NewtonStats::default();
    let mut r = sys.reduce_residual(sys.residual(&z)?);
    let mut rn = max_abs(&r);
    stats.residuals.push(rn);
    let mut solve_time = 0.0;
    while rn > cfg.newton_tol {
        if stats.iterations >= cfg.max_newton {
            return Err(NschError::StepFailure { iterations: stats.iterations, residual: rn });
        }
        let j = sys.jacobian(&z)?;
        let t0 = Instant::now();
        let lu = LuFactor::new(&j)?;
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let delta = lu.solve(&neg)?;
        solve_time += t0.elapsed().as_secs_f64();
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = y.iter().zip(&delta).map(|(a, d)| a + lambda * d).collect();
            let zt = sys.expand(&trial);
            if barrier_ok(params, disc.nv(), &zt[..n1]) {
                match sys.residual(&zt) {
                    Ok(res) => {
                        accepted = Some((trial, zt, sys.reduce_residual(res)));
                        break;
                    }
                    Err(NschError::Barrier(_)) => {}
                    Err(e) => return Err(e),
                }
            }
            lambda *= cfg.shrink;
            stats.backtracks += 1;
        }
        let (ny, nz, nr) = accepted.ok_or(NschError::StepFailure { iterations: stats.iterations, residual: rn })?;
        y = ny;
        z = nz;
        r = nr;
        rn = max_abs(&r);
        stats.iterations += 1;
        stats.residuals.push(rn);
        if !rn.is_finite() {
            return Err(NschError::StepFailure { iterations: stats.iterations, residual: rn });
        }
    }
    stats.solve_seconds = solve_time;
    let nv = disc.nv();
    let phase = BulkSurfaceField::from_concat(&z[..n1], nv);
    let chem = BulkSurfaceField::from_concat(&z[n1..], nv);
    Ok((CHState { phase, chem, t: state.t + cfg.dt }, stats))
}

/// Result of computing (μ, θ) from a phase field through the constitutive relations.
#[derive(Debug, Clone)]
pub struct ConstitutiveSolve {
    pub chem: BulkSurfaceField,
    /// max |μ − βθ| on Γ of the unconstrained solution (L = 0 only; zero otherwise).
    pub identification_defect: f64,
    pub projected: bool,
}

/// Solves M(μ,θ) = A(φ,ψ) + W F'(φ,ψ) + χ(K)-penalty; for L = 0 the result is the
/// 𝓛²-projection onto {μ = βθ on Γ}.
pub fn constitutive_solve(
    disc: &Discretization,
    phase: &BulkSurfaceField,
    params: &ModelParameters,
) -> Result<ConstitutiveSolve> {
    phase.check(&disc.mesh)?;
    let x = phase.concat();
    let sys = StepSystem::new(disc, params, ChScheme::FullyImplicit, 1.0, x.clone(), None);
    let mut rhs = sys.stiff.matvec(&x);
    let pk = sys.pen_k.matvec(&x);
    let fp = sys.nodal_potential(&x, 1)?;
    for i in 0..rhs.len() {
        rhs[i] += pk[i] + fp[i];
    }
    let lu = LuFactor::new(&sys.mass)?;
    let c = lu.solve(&rhs)?;
    let nv = disc.nv();
    let chem = BulkSurfaceField::from_concat(&c, nv);
    if params.l != 0.0 {
        return Ok(ConstitutiveSolve { chem, identification_defect: 0.0, projected: false });
    }
    let defect = disc
        .boundary_vertices()
        .iter()
        .enumerate()
        .map(|(k, &v)| (chem.phi[v] - params.beta * chem.psi[k]).abs())
        .fold(0.0, f64::max);
    let sp = IdentifiedSpace::new(&disc.mesh, params.beta);
    let lu = LuFactor::new(&sp.galerkin(&sys.mass))?;
    let yy = lu.solve(&sp.restrict(&rhs))?;
    let chem = BulkSurfaceField::from_concat(&sp.expand(&yy), nv);
    Ok(ConstitutiveSolve { chem, identification_defect: defect, projected: defect > 1e-12 })
}

/// Residual of the discrete constitutive relations for a given state, max-norm.
pub fn constitutive_residual(disc: &Discretization, state: &CHState, params: &ModelParameters) -> Result<f64> {
    let x = state.phase.concat();
    let sys = StepSystem::new(disc, params, ChScheme::FullyImplicit, 1.0, x.clone(), None);
    let mut z = x;
    z.extend(state.chem.concat());
    let r = sys.residual(&z)?;
    Ok(max_abs(&r[sys.n1..]))
}

/// Change of β·∫φ + ∫ψ from `a` to `b`.
pub fn combined_mass_change(disc: &Discretization, a: &CHState, b: &CHState, params: &ModelParameters) -> f64 {
    let ma = mass_functionals(disc, a, params);
    let mb = mass_functionals(disc, b, params);
    mb.combined - ma.combined
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materials::PotentialSpec;

    fn setup(l: f64) -> (Discretization, ModelParameters) {
        let disc = Discretization::disk(4, 1.0).unwrap();
        let mut p = ModelParameters::with_potentials(PotentialSpec::logarithmic(1.0, 2.0), PotentialSpec::logarithmic(1.0, 2.0));
        p.l = l;
        (disc, p)
    }

    #[test]
    fn zero_state_is_stationary() {
        let (disc, p) = setup(1.0);
        let st = CHState { phase: BulkSurfaceField::zeros(&disc.mesh), chem: BulkSurfaceField::zeros(&disc.mesh), t: 0.0 };
        let (next, stats) =
            ch_step(&disc, &st, &BulkVectorField::zeros(&disc.mesh), 0.0, &p, &CHStepConfig::new(1e-3, ChScheme::FullyImplicit))
                .unwrap();
        assert_eq!(stats.iterations, 0);
        assert_eq!(next.phase.max_abs(), 0.0);
        assert_eq!(next.chem.max_abs(), 0.0);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        for l in [0.0, 2.0, f64::INFINITY] {
            let (disc, mut p) = setup(l);
            p.coefficients.mobility_bulk = crate::materials::ScalarCoefficient::Affine { at_minus_one: 0.5, at_plus_one: 2.0 };
            p.coefficients.mobility_surface = crate::materials::ScalarCoefficient::Affine { at_minus_one: 1.5, at_plus_one: 0.7 };
            p.beta = 0.8;
            p.k = 0.5;
            let phase = BulkSurfaceField::from_fns(&disc.mesh, |x| 0.3 * x[0] + 0.2 * x[1] * x[1], |x| 0.4 * x[1]);
            let chem = BulkSurfaceField::from_fns(&disc.mesh, |x| x[0] * x[1], |x| 0.3 * x[0]);
            let v = BulkVectorField::from_fn(&disc.mesh, |x| [-x[1], x[0]]);
            let x_old = phase.scaled(0.9).concat();
            let sys = StepSystem::new(&disc, &p, ChScheme::FullyImplicit, 1e-2, x_old, Some((&v, 0.7)));
            let mut z = phase.concat();
            z.extend(chem.concat());
            let y = sys.reduce_state(&z);
            let z = sys.expand(&y);
            let j = sys.jacobian(&z).unwrap();
            let r0 = sys.reduce_residual(sys.residual(&z).unwrap());
            let h = 1e-7;
            for col in [0usize, 5, 30, disc.nv() + 2, sys.n1 + 3, y.len() - 1] {
                let mut yp = y.clone();
                yp[col] += h;
                let rp = sys.reduce_residual(sys.residual(&sys.expand(&yp)).unwrap());
                for row in 0..r0.len() {
                    let fd = (rp[row] - r0[row]) / h;
                    let an = j.get(row, col);
                    assert!((fd - an).abs() < 1e-5 * (1.0 + an.abs()), "L={l} row {row} col {col}: {fd} vs {an}");
                }
            }
        }
    }
}
