//! Bulk–surface elliptic problems with constant or mobility-weighted coefficients.
//!
//! Finds u in the discrete 𝒱¹ space with
//! ∫m_Ω∇u∇ζ + ∫_Γ m_Γ∂_s v ∂_s ξ + χ(L)∫_Γ(βv − u)(βξ − ζ) = ∫fζ + ∫_Γ gξ,
//! mean constraints enforced by Lagrange multipliers and the L = 0 trace relation by DOF
//! identification.

use serde::Serialize;

use crate::error::{NschError, Result};
use crate::fe::{line_rule, triangle_rule};
use crate::geometry::DiskMesh;
use crate::materials::{chi, ModelParameters};
use crate::spaces::{BulkSurfaceField, IdentifiedSpace, SpaceOperators};
use crate::sparse::{dot, max_abs, CsrMatrix, LuFactor, TripletBuilder};

pub const COMPATIBILITY_TOL: f64 = 1e-10;

#[derive(Debug)]
pub struct EllipticProblem {
    l: f64,
    beta: f64,
    nv: usize,
    nb: usize,
    form: CsrMatrix,
    mass: CsrMatrix,
    space: Option<IdentifiedSpace>,
    work_form: CsrMatrix,
    constraints: Vec<Vec<f64>>,
    lu: LuFactor,
    bulk_mass_one: Vec<f64>,
    surf_mass_one: Vec<f64>,
    bulk_measure: f64,
    surf_measure: f64,
}

impl EllipticProblem {
    /// Constant unit coefficients.
    pub fn constant(mesh: &DiskMesh, ops: &SpaceOperators, l: f64, beta: f64) -> Result<Self> {
        Self::build(mesh, ops, l, beta, &ops.a_bulk, &ops.a_surf)
    }

    /// Mobilities given at bulk vertices and boundary vertices.
    pub fn with_mobility(
        mesh: &DiskMesh,
        ops: &SpaceOperators,
        l: f64,
        beta: f64,
        m_bulk: &[f64],
        m_surf: &[f64],
    ) -> Result<Self> {
        if m_bulk.len() != mesh.n_vertices() || m_surf.len() != mesh.n_boundary() {
            return Err(NschError::InvalidInput("mobility arrays do not match the mesh".into()));
        }
        let a = SpaceOperators::weighted_bulk_stiffness(mesh, m_bulk);
        let s = SpaceOperators::weighted_surface_stiffness(mesh, m_surf);
        Self::build(mesh, ops, l, beta, &a, &s)
    }

    /// Mobilities m_Ω(φ), m_Γ(ψ) of the model evaluated at a phase field.
    pub fn from_phase(
        mesh: &DiskMesh,
        ops: &SpaceOperators,
        params: &ModelParameters,
        phase: &BulkSurfaceField,
    ) -> Result<Self> {
        let mb: Vec<f64> = phase.phi.iter().map(|&s| params.coefficients.mobility_bulk.eval(s)).collect();
        let ms: Vec<f64> = phase.psi.iter().map(|&s| params.coefficients.mobility_surface.eval(s)).collect();
        Self::with_mobility(mesh, ops, params.l, params.beta, &mb, &ms)
    }

    fn build(
        mesh: &DiskMesh,
        ops: &SpaceOperators,
        l: f64,
        beta: f64,
        bulk: &CsrMatrix,
        surf: &CsrMatrix,
    ) -> Result<Self> {
        if !(l >= 0.0) {
            return Err(NschError::InvalidInput(format!("L = {l} must be nonnegative")));
        }
        let nv = mesh.n_vertices();
        let nb = mesh.n_boundary();
        let form = ops.coupled_form(bulk, surf, chi(l), beta);
        let mass = ops.coupled_mass();
        let mut weighted: Vec<f64> = ops.bulk_mass_one.iter().map(|v| beta * v).collect();
        weighted.extend_from_slice(&ops.surf_mass_one);
        let (space, work_form, constraints) = if l == 0.0 {
            let sp = IdentifiedSpace::new(mesh, beta);
            let wf = sp.galerkin(&form);
            let c = sp.restrict(&weighted);
            (Some(sp), wf, vec![c])
        } else if l.is_infinite() {
            let mut c1 = ops.bulk_mass_one.clone();
            c1.resize(nv + nb, 0.0);
            let mut c2 = vec![0.0; nv];
            c2.extend_from_slice(&ops.surf_mass_one);
            (None, form.clone(), vec![c1, c2])
        } else {
            (None, form.clone(), vec![weighted])
        };
        let n = work_form.nrows();
        let nc = constraints.len();
        let mut t = TripletBuilder::with_capacity(n + nc, n + nc, work_form.nnz() + 2 * nc * n);
        t.add_block(&work_form, 0, 0, 1.0);
        for (c, row) in constraints.iter().enumerate() {
            for (i, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    t.push(n + c, i, v);
                    t.push(i, n + c, v);
                }
            }
        }
        let lu = LuFactor::new(&t.build())
            .map_err(|e| NschError::Singular(format!("constrained elliptic operator is singular: {e}")))?;
        Ok(Self {
            l,
            beta,
            nv,
            nb,
            form,
            mass,
            space,
            work_form,
            constraints,
            lu,
            bulk_mass_one: ops.bulk_mass_one.clone(),
            surf_mass_one: ops.surf_mass_one.clone(),
            bulk_measure: ops.bulk_measure,
            surf_measure: ops.surf_measure,
        })
    }

    pub fn coupling(&self) -> f64 {
        self.l
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Number of mean constraints (one multiplier for L < ∞, two for L = ∞).
    pub fn n_multipliers(&self) -> usize {
        self.constraints.len()
    }

    /// Full coupled form matrix on the concatenated (bulk, surface) vector.
    pub fn form(&self) -> &CsrMatrix {
        &self.form
    }

    /// Relative violation of the mean condition required of a right-hand side.
    pub fn compatibility_defect(&self, rhs: &BulkSurfaceField) -> f64 {
        let ib = dot(&self.bulk_mass_one, &rhs.phi);
        let is = dot(&self.surf_mass_one, &rhs.psi);
        let scale = rhs.max_abs().max(f64::MIN_POSITIVE);
        if self.l.is_infinite() {
            (ib.abs() / self.bulk_measure).max(is.abs() / self.surf_measure) / scale
        } else {
            (self.beta * ib + is).abs() / ((self.beta.abs() * self.bulk_measure + self.surf_measure) * scale)
        }
    }

    /// Subtracts m̄(β,1) (or the two separate means for L = ∞).
    pub fn remove_mean(&self, rhs: &BulkSurfaceField) -> BulkSurfaceField {
        let ib = dot(&self.bulk_mass_one, &rhs.phi);
        let is = dot(&self.surf_mass_one, &rhs.psi);
        let (cb, cs) = if self.l.is_infinite() {
            (ib / self.bulk_measure, is / self.surf_measure)
        } else {
            let m = (self.beta * ib + is) / (self.beta * self.beta * self.bulk_measure + self.surf_measure);
            (self.beta * m, m)
        };
        BulkSurfaceField {
            phi: rhs.phi.iter().map(|v| v - cb).collect(),
            psi: rhs.psi.iter().map(|v| v - cs).collect(),
        }
    }

    fn load(&self, rhs: &BulkSurfaceField) -> Vec<f64> {
        let b = self.mass.matvec(&rhs.concat());
        match &self.space {
            Some(sp) => sp.restrict(&b),
            None => b,
        }
    }

    /// Solution operator S applied to (f, g).
    pub fn solve(&self, rhs: &BulkSurfaceField, auto_remove_mean: bool) -> Result<BulkSurfaceField> {
        if rhs.phi.len() != self.nv || rhs.psi.len() != self.nb {
            return Err(NschError::InvalidInput("right-hand side does not match the mesh".into()));
        }
        let defect = self.compatibility_defect(rhs);
        let rhs = if defect > COMPATIBILITY_TOL {
            if !auto_remove_mean {
                return Err(NschError::Compatibility(format!(
                    "mean condition violated by {defect:.3e} (tolerance {COMPATIBILITY_TOL:e})"
                )));
            }
            self.remove_mean(rhs)
        } else {
            rhs.clone()
        };
        let mut b = self.load(&rhs);
        b.resize(self.lu.dim(), 0.0);
        let mut x = self.lu.solve(&b)?;
        x.truncate(self.work_form.nrows());
        let full = match &self.space {
            Some(sp) => sp.expand(&x),
            None => x,
        };
        Ok(BulkSurfaceField::from_concat(&full, self.nv))
    }

    /// max |a(u, ζ_i) − ⟨(f,g), ζ_i⟩| over basis test functions, relative to the load.
    pub fn weak_residual(&self, u: &BulkSurfaceField, rhs: &BulkSurfaceField) -> f64 {
        let au = self.form.matvec(&u.concat());
        let b = self.mass.matvec(&rhs.concat());
        let (au, b) = match &self.space {
            Some(sp) => (sp.restrict(&au), sp.restrict(&b)),
            None => (au, b),
        };
        let r: Vec<f64> = au.iter().zip(&b).map(|(x, y)| x - y).collect();
        max_abs(&r) / max_abs(&b).max(f64::MIN_POSITIVE)
    }

    /// Value of the coupled quadratic form a(u, u).
    pub fn energy(&self, u: &BulkSurfaceField) -> f64 {
        let x = u.concat();
        self.form.bilinear(&x, &x)
    }

    /// Discrete dual norm ‖(f,g)‖_* = a(S(f,g), S(f,g))^{1/2}.
    pub fn dual_norm_proxy(&self, rhs: &BulkSurfaceField) -> Result<f64> {
        let u = self.solve(rhs, false)?;
        Ok(self.energy(&u).max(0.0).sqrt())
    }
}

pub fn solve_s_lb(problem: &EllipticProblem, rhs: &BulkSurfaceField) -> Result<BulkSurfaceField> {
    problem.solve(rhs, false)
}

pub fn dual_norm_proxy(problem: &EllipticProblem, rhs: &BulkSurfaceField) -> Result<f64> {
    problem.dual_norm_proxy(rhs)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub n_rings: usize,
    pub h: f64,
    pub l2_error: f64,
    /// Observed order against the previous row.
    pub rate: Option<f64>,
    pub weak_residual: f64,
}

/// 𝓛² distance between a discrete pair and exact bulk/surface functions, by quadrature.
pub fn l2_error_against(
    mesh: &DiskMesh,
    u: &BulkSurfaceField,
    exact_bulk: impl Fn([f64; 2]) -> f64,
    exact_surf: impl Fn([f64; 2]) -> f64,
) -> f64 {
    let mut e = 0.0;
    let rule = triangle_rule();
    for t in 0..mesh.n_triangles() {
        let g = mesh.triangle_geom(t);
        let tri = mesh.triangles[t];
        for (l, w) in rule.iter() {
            let uh = l[0] * u.phi[tri[0]] + l[1] * u.phi[tri[1]] + l[2] * u.phi[tri[2]];
            let d = uh - exact_bulk(g.point(*l));
            e += w * g.area * d * d;
        }
    }
    for k in 0..mesh.n_boundary() {
        let (a, b) = mesh.boundary_segment(k);
        let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
        let h = mesh.boundary_segment_length(k);
        let (va, vb) = (u.psi[k], u.psi[(k + 1) % mesh.n_boundary()]);
        for (s, w) in line_rule() {
            let x = [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])];
            let d = (1.0 - s) * va + s * vb - exact_surf(x);
            e += w * h * d * d;
        }
    }
    e.sqrt()
}

/// Refinement study for u = (2r² − r⁴)cos 2θ, v = cos 2θ on the unit disk with L = ∞ and
/// unit coefficients; −Δu = 12r²cos 2θ, ∂_n u = 0, −Δ_Γ v = 4cos 2θ.
pub fn manufactured_convergence(rings: &[usize]) -> Result<Vec<ConvergenceRow>> {
    // (2r² − r⁴)cos 2θ = (2 − r²)(x² − y²)
    let u_ex = |x: [f64; 2]| (2.0 - x[0] * x[0] - x[1] * x[1]) * (x[0] * x[0] - x[1] * x[1]);
    let f_ex = |x: [f64; 2]| 12.0 * (x[0] * x[0] - x[1] * x[1]);
    let cos2 = |x: [f64; 2]| {
        let t = x[1].atan2(x[0]);
        (2.0 * t).cos()
    };
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    for &n in rings {
        let mesh = crate::geometry::build_disk_mesh(n, 1.0)?;
        let ops = SpaceOperators::assemble(&mesh);
        let prob = EllipticProblem::constant(&mesh, &ops, f64::INFINITY, 1.0)?;
        let rhs = BulkSurfaceField::from_fns(&mesh, f_ex, |x| 4.0 * cos2(x));
        let rhs = prob.remove_mean(&rhs);
        let u = prob.solve(&rhs, false)?;
        let err = l2_error_against(&mesh, &u, u_ex, cos2);
        let h = 1.0 / n as f64;
        let rate = rows.last().map(|p| (p.l2_error / err).ln() / (p.h / h).ln());
        rows.push(ConvergenceRow { n_rings: n, h, l2_error: err, rate, weak_residual: prob.weak_residual(&u, &rhs) });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct NormEquivalenceReport {
    pub samples: usize,
    pub m_min: f64,
    pub m_max: f64,
    /// Violations of min{1,√m_*}‖a‖_[φ,ψ] ≤ ‖a‖ ≤ max{1,√m^*}‖a‖_[φ,ψ].
    pub primal_violations: usize,
    /// Same for the dual norms, on compatible right-hand sides.
    pub dual_violations: usize,
    /// Smallest of (upper bound − middle)/middle and (middle − lower bound)/middle seen.
    pub min_slack: f64,
}

/// Samples the two-sided norm inequalities between the unit-coefficient forms and the
/// forms weighted by affine mobilities running from `m_min` at s = −1 to `m_max` at
/// s = +1, each at a random phase field.
pub fn norm_equivalence_check(
    mesh: &DiskMesh,
    ops: &SpaceOperators,
    l: f64,
    beta: f64,
    m_min: f64,
    m_max: f64,
    samples: usize,
    seed: u64,
) -> Result<NormEquivalenceReport> {
    use rand::{Rng, SeedableRng};
    if !(m_min > 0.0 && m_max >= m_min) {
        return Err(NschError::InvalidInput(format!("mobility bounds [{m_min}, {m_max}] invalid")));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let lo = 1f64.min(m_min.sqrt());
    let hi = 1f64.max(m_max.sqrt());
    let unit = EllipticProblem::constant(mesh, ops, l, beta)?;
    let mut report =
        NormEquivalenceReport { samples, m_min, m_max, primal_violations: 0, dual_violations: 0, min_slack: f64::INFINITY };
    let mut tally = |lower: f64, middle: f64, upper: f64, violations: &mut usize| {
        let tol = 1e-12 * middle.abs().max(f64::MIN_POSITIVE);
        if lower > middle + tol || middle > upper + tol {
            *violations += 1;
        }
        if middle > 0.0 {
            report.min_slack = report.min_slack.min((upper - middle) / middle).min((middle - lower) / middle);
        }
    };
    let affine = |s: f64| m_min + 0.5 * (s + 1.0) * (m_max - m_min);
    let (mut pv, mut dv) = (0, 0);
    for _ in 0..samples {
        let phase = BulkSurfaceField::new(
            (0..mesh.n_vertices()).map(|_| rng.random_range(-1.0..=1.0)).collect(),
            (0..mesh.n_boundary()).map(|_| rng.random_range(-1.0..=1.0)).collect(),
        );
        let mb: Vec<f64> = phase.phi.iter().map(|&s| affine(s)).collect();
        let ms: Vec<f64> = phase.psi.iter().map(|&s| affine(s)).collect();
        let weighted = EllipticProblem::with_mobility(mesh, ops, l, beta, &mb, &ms)?;
        let a = BulkSurfaceField::new(
            (0..mesh.n_vertices()).map(|_| rng.random::<f64>() - 0.5).collect(),
            (0..mesh.n_boundary()).map(|_| rng.random::<f64>() - 0.5).collect(),
        );
        let plain = unit.energy(&a).max(0.0).sqrt();
        let with_m = weighted.energy(&a).max(0.0).sqrt();
        tally(lo * with_m, plain, hi * with_m, &mut pv);
        let f = unit.remove_mean(&a);
        let plain = unit.dual_norm_proxy(&f)?;
        let with_m = weighted.dual_norm_proxy(&f)?;
        tally(lo * with_m, plain, hi * with_m, &mut dv);
    }
    report.primal_violations = pv;
    report.dual_violations = dv;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_disk_mesh;

    #[test]
    fn zero_rhs_gives_zero() {
        let mesh = build_disk_mesh(4, 1.0).unwrap();
        let ops = SpaceOperators::assemble(&mesh);
        for l in [0.0, 1.0, f64::INFINITY] {
            let p = EllipticProblem::constant(&mesh, &ops, l, 1.0).unwrap();
            let u = p.solve(&BulkSurfaceField::zeros(&mesh), false).unwrap();
            assert_eq!(u.max_abs(), 0.0);
        }
    }

    #[test]
    fn incompatible_rhs_is_rejected() {
        let mesh = build_disk_mesh(4, 1.0).unwrap();
        let ops = SpaceOperators::assemble(&mesh);
        let p = EllipticProblem::constant(&mesh, &ops, 1.0, 1.0).unwrap();
        let rhs = BulkSurfaceField::constant(&mesh, 1.0, 0.0);
        assert!(matches!(p.solve(&rhs, false), Err(NschError::Compatibility(_))));
        assert!(p.solve(&rhs, true).is_ok());
    }

    #[test]
    fn identification_holds_for_l_zero() {
        let mesh = build_disk_mesh(4, 1.0).unwrap();
        let ops = SpaceOperators::assemble(&mesh);
        let beta = 0.7;
        let p = EllipticProblem::constant(&mesh, &ops, 0.0, beta).unwrap();
        let rhs = BulkSurfaceField::from_fns(&mesh, |x| x[0] + x[1] * x[1], |x| x[1]);
        let u = p.solve(&rhs, true).unwrap();
        for (k, &v) in mesh.boundary_loop.iter().enumerate() {
            assert!((u.phi[v] - beta * u.psi[k]).abs() < 1e-15);
        }
    }
}
