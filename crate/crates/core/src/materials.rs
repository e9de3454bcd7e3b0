//! Constitutive functions, potentials and configuration-time checks of the model
//! assumptions.

use serde::{Deserialize, Serialize};

use crate::error::{NschError, Result};
use crate::geometry::DiskMesh;

/// Distance from ±1 at which logarithmic evaluations are refused.
pub const BARRIER_EPS: f64 = 1e-9;

/// 1/r on (0,∞), zero at r = 0 and r = ∞.
pub fn chi(r: f64) -> f64 {
    if r > 0.0 && r.is_finite() {
        1.0 / r
    } else {
        0.0
    }
}

#[inline]
fn clamp_unit(s: f64) -> f64 {
    s.clamp(-1.0, 1.0)
}

/// Serde helpers for extended reals: a number or the string "inf".
pub mod ext_real {
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = f64;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a number or \"inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
                Ok(v)
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
                Ok(v as f64)
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
                Ok(v as f64)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
                match v.trim().to_ascii_lowercase().as_str() {
                    "inf" | "+inf" | "infinity" | "∞" => Ok(f64::INFINITY),
                    other => other.parse::<f64>().map_err(|_| E::custom(format!("invalid extended real {v:?}"))),
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Densities {
    pub rho1: f64,
    pub rho2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
}

impl Default for Densities {
    fn default() -> Self {
        Self { rho1: 1.0, rho2: 1.0, sigma1: 1.0, sigma2: 1.0 }
    }
}

impl Densities {
    pub fn rho(&self, s: f64) -> f64 {
        let s = clamp_unit(s);
        0.5 * (self.rho2 - self.rho1) * s + 0.5 * (self.rho1 + self.rho2)
    }

    pub fn sigma(&self, s: f64) -> f64 {
        let s = clamp_unit(s);
        0.5 * (self.sigma2 - self.sigma1) * s + 0.5 * (self.sigma1 + self.sigma2)
    }

    pub fn rho_bounds(&self) -> (f64, f64) {
        (self.rho1.min(self.rho2), self.rho1.max(self.rho2))
    }

    pub fn sigma_bounds(&self) -> (f64, f64) {
        (self.sigma1.min(self.sigma2), self.sigma1.max(self.sigma2))
    }

    /// (ρ̃₂ − ρ̃₁)/2, the coefficient of the bulk relative mass flux.
    pub fn rho_jump(&self) -> f64 {
        0.5 * (self.rho2 - self.rho1)
    }

    pub fn sigma_jump(&self) -> f64 {
        0.5 * (self.sigma2 - self.sigma1)
    }
}

/// Scalar coefficient function on [−1,1]; arguments are clamped into the interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScalarCoefficient {
    Constant { value: f64 },
    /// Linear interpolation between the values at s = −1 and s = +1.
    Affine { at_minus_one: f64, at_plus_one: f64 },
    /// clamp(c0 + c1 s + c2 s², min, max)
    ClampedQuadratic { c0: f64, c1: f64, c2: f64, min: f64, max: f64 },
}

impl ScalarCoefficient {
    pub fn constant(value: f64) -> Self {
        ScalarCoefficient::Constant { value }
    }

    pub fn eval(&self, s: f64) -> f64 {
        let s = clamp_unit(s);
        match *self {
            ScalarCoefficient::Constant { value } => value,
            ScalarCoefficient::Affine { at_minus_one, at_plus_one } => {
                0.5 * (1.0 - s) * at_minus_one + 0.5 * (1.0 + s) * at_plus_one
            }
            ScalarCoefficient::ClampedQuadratic { c0, c1, c2, min, max } => (c0 + c1 * s + c2 * s * s).clamp(min, max),
        }
    }

    pub fn derivative(&self, s: f64) -> f64 {
        if !(-1.0..=1.0).contains(&s) {
            return 0.0;
        }
        match *self {
            ScalarCoefficient::Constant { .. } => 0.0,
            ScalarCoefficient::Affine { at_minus_one, at_plus_one } => 0.5 * (at_plus_one - at_minus_one),
            ScalarCoefficient::ClampedQuadratic { c0, c1, c2, min, max } => {
                let q = c0 + c1 * s + c2 * s * s;
                if q <= min || q >= max {
                    0.0
                } else {
                    c1 + 2.0 * c2 * s
                }
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, ScalarCoefficient::Constant { .. })
    }

    /// (min, max) over a uniform grid of `n` points on [−1,1].
    pub fn sampled_bounds(&self, n: usize) -> (f64, f64) {
        grid(n).map(|s| self.eval(s)).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    }
}

/// Friction coefficient γ(φ, ψ) on [−1,1]².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FrictionCoefficient {
    Constant { value: f64 },
    /// base + phi_slope·φ + psi_slope·ψ
    Affine { base: f64, phi_slope: f64, psi_slope: f64 },
}

impl FrictionCoefficient {
    pub fn eval(&self, phi: f64, psi: f64) -> f64 {
        match *self {
            FrictionCoefficient::Constant { value } => value,
            FrictionCoefficient::Affine { base, phi_slope, psi_slope } => {
                base + phi_slope * clamp_unit(phi) + psi_slope * clamp_unit(psi)
            }
        }
    }

    pub fn sampled_bounds(&self, n: usize) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for a in grid(n) {
            for b in grid(n) {
                let v = self.eval(a, b);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo, hi)
    }
}

fn grid(n: usize) -> impl Iterator<Item = f64> {
    let n = n.max(2);
    (0..n).map(move |i| -1.0 + 2.0 * i as f64 / (n - 1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSet {
    #[serde(default = "unit")]
    pub mobility_bulk: ScalarCoefficient,
    #[serde(default = "unit")]
    pub mobility_surface: ScalarCoefficient,
    #[serde(default = "unit")]
    pub viscosity_bulk: ScalarCoefficient,
    #[serde(default = "unit")]
    pub viscosity_surface: ScalarCoefficient,
    #[serde(default = "unit_friction")]
    pub friction: FrictionCoefficient,
}

fn unit() -> ScalarCoefficient {
    ScalarCoefficient::constant(1.0)
}

fn unit_friction() -> FrictionCoefficient {
    FrictionCoefficient::Constant { value: 1.0 }
}

impl Default for CoefficientSet {
    fn default() -> Self {
        Self {
            mobility_bulk: unit(),
            mobility_surface: unit(),
            viscosity_bulk: unit(),
            viscosity_surface: unit(),
            friction: unit_friction(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoefficientBounds {
    pub m_min: f64,
    pub m_max: f64,
    pub nu_min: f64,
    pub nu_max: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
}

impl CoefficientSet {
    /// Bounds over a 1001-point grid (41² for the friction).
    pub fn bounds(&self) -> CoefficientBounds {
        let (a, b) = self.mobility_bulk.sampled_bounds(1001);
        let (c, d) = self.mobility_surface.sampled_bounds(1001);
        let (e, f) = self.viscosity_bulk.sampled_bounds(1001);
        let (g, h) = self.viscosity_surface.sampled_bounds(1001);
        let (gl, gh) = self.friction.sampled_bounds(41);
        CoefficientBounds {
            m_min: a.min(c),
            m_max: b.max(d),
            nu_min: e.min(g),
            nu_max: f.max(h),
            gamma_min: gl,
            gamma_max: gh,
        }
    }
}

/// Free energy density F = F₀ − (c/2)s².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialSpec {
    /// Θ/2[(1+s)ln(1+s) + (1−s)ln(1−s)] − Θ_c/2·s²
    Logarithmic { theta: f64, theta_c: f64 },
    /// F₀(s) = Σ coefficients[k]·s^k; the constant and linear terms are dropped so
    /// that F₀(0) = F₀'(0) = 0.
    Polynomial { coefficients: Vec<f64>, c: f64 },
}

impl PotentialSpec {
    pub fn logarithmic(theta: f64, theta_c: f64) -> Self {
        PotentialSpec::Logarithmic { theta, theta_c }
    }

    /// Coefficient c of the concave quadratic part.
    pub fn concave_coefficient(&self) -> f64 {
        match *self {
            PotentialSpec::Logarithmic { theta_c, .. } => theta_c,
            PotentialSpec::Polynomial { c, .. } => c,
        }
    }

    pub fn is_singular(&self) -> bool {
        matches!(self, PotentialSpec::Logarithmic { .. })
    }

    /// Derivative of order 0, 1 or 2 of the convex part F₀.
    pub fn convex(&self, s: f64, order: u8) -> Result<f64> {
        match self {
            PotentialSpec::Logarithmic { theta, .. } => {
                if !(s.abs() < 1.0 - BARRIER_EPS) {
                    return Err(NschError::Barrier(s));
                }
                Ok(match order {
                    0 => 0.5 * theta * (2.0 * s * s.atanh() + (-s * s).ln_1p()),
                    1 => theta * s.atanh(),
                    2 => theta / (1.0 - s * s),
                    _ => return Err(NschError::InvalidInput("potential derivative order must be 0, 1 or 2".into())),
                })
            }
            PotentialSpec::Polynomial { coefficients, .. } => {
                if order > 2 {
                    return Err(NschError::InvalidInput("potential derivative order must be 0, 1 or 2".into()));
                }
                let order = order as usize;
                let mut v = 0.0;
                for (k, &a) in coefficients.iter().enumerate().skip(2) {
                    if k >= order {
                        v += a * falling(k, order) * s.powi((k - order) as i32);
                    }
                }
                Ok(v)
            }
        }
    }

    /// F, F' or F''.
    pub fn eval(&self, s: f64, order: u8) -> Result<f64> {
        let c = self.concave_coefficient();
        let f0 = self.convex(s, order)?;
        Ok(match order {
            0 => f0 - 0.5 * c * s * s,
            1 => f0 - c * s,
            _ => f0 - c,
        })
    }
}

fn falling(k: usize, order: usize) -> f64 {
    (0..order).map(|j| (k - j) as f64).product()
}

/// F, F' or F'' of the given potential.
pub fn potential_eval(spec: &PotentialSpec, s: f64, order: u8) -> Result<f64> {
    spec.eval(s, order)
}

/// Constants of the exponential growth alternative F₀'' ≤ C e^{C|F₀'|^γ}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthConstants {
    pub c_sharp: f64,
    pub gamma_sharp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParameters {
    #[serde(rename = "K", with = "ext_real", default = "one")]
    pub k: f64,
    #[serde(rename = "L", with = "ext_real", default = "one")]
    pub l: f64,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default = "one")]
    pub beta: f64,
    #[serde(default)]
    pub densities: Densities,
    #[serde(default)]
    pub coefficients: CoefficientSet,
    pub bulk_potential: PotentialSpec,
    pub surface_potential: PotentialSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub growth: Option<GrowthConstants>,
}

fn one() -> f64 {
    1.0
}

impl ModelParameters {
    /// Unit coefficients, K = L = α = β = 1 and the given potentials.
    pub fn with_potentials(bulk: PotentialSpec, surface: PotentialSpec) -> Self {
        Self {
            k: 1.0,
            l: 1.0,
            alpha: 1.0,
            beta: 1.0,
            densities: Densities::default(),
            coefficients: CoefficientSet::default(),
            bulk_potential: bulk,
            surface_potential: surface,
            growth: None,
        }
    }

    pub fn chi_k(&self) -> f64 {
        chi(self.k)
    }

    pub fn chi_l(&self) -> f64 {
        chi(self.l)
    }

    /// β(σ̃₂−σ̃₁)/2 − (ρ̃₂−ρ̃₁)/2, the weight of the boundary mass-exchange term in the
    /// surface momentum balance.
    pub fn exchange_coefficient(&self) -> f64 {
        self.beta * self.densities.sigma_jump() - self.densities.rho_jump()
    }

    pub fn validate(&self, mesh: &DiskMesh, experimental: bool) -> Result<ValidationReport> {
        let report = validate_assumptions(self, mesh, experimental);
        if let Some(c) = report.checks.iter().find(|c| c.status == CheckStatus::Fail) {
            return Err(NschError::Assumption { rule: c.rule.clone(), message: c.detail.clone() });
        }
        Ok(report)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Warn,
    Fail,
    Unverifiable,
}

#[derive(Debug, Clone, Serialize)]
pub struct AssumptionCheck {
    pub rule: String,
    pub status: CheckStatus,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<AssumptionCheck>,
    pub coefficient_bounds: CoefficientBounds,
    /// Smallest feasible (κ₁, κ₂) of the domination property, if bounded.
    pub kappa: Option<[f64; 2]>,
}

impl ValidationReport {
    pub fn is_admissible(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn get(&self, rule: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.rule == rule)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn check(rule: &str, ok: bool, fail: CheckStatus, detail: String) -> AssumptionCheck {
    AssumptionCheck { rule: rule.into(), status: if ok { CheckStatus::Pass } else { fail }, detail }
}

/// Interior sample points of (−1,1), clustered towards the endpoints up to 1 − `edge`.
fn interior_grid(edge: f64) -> Vec<f64> {
    let mut pts: Vec<f64> = (1..2000).map(|i| -1.0 + 2.0 * i as f64 / 2000.0).collect();
    let mut d = 1e-3;
    while d >= edge * 0.999 {
        pts.push(1.0 - d);
        pts.push(-1.0 + d);
        d *= 0.5;
    }
    pts.push(1.0 - edge);
    pts.push(-1.0 + edge);
    pts.retain(|s| s.abs() < 1.0 - 0.5 * BARRIER_EPS.max(edge * 0.5));
    pts
}

fn convexity_floor(p: &PotentialSpec) -> f64 {
    interior_grid(1e-6)
        .into_iter()
        .filter_map(|s| p.convex(s, 2).ok())
        .fold(f64::INFINITY, f64::min)
}

/// Minimizes κ₁ + κ₂ subject to |F₀'(αs)| ≤ κ₁|G₀'(s)| + κ₂ on the sample points.
fn domination_fit(f: &PotentialSpec, g: &PotentialSpec, alpha: f64, edge: f64) -> Option<[f64; 2]> {
    let pairs: Vec<(f64, f64)> = interior_grid(edge)
        .into_iter()
        .filter_map(|s| Some((f.convex(alpha * s, 1).ok()?.abs(), g.convex(s, 1).ok()?.abs())))
        .collect();
    if pairs.is_empty() {
        return None;
    }
    let kappa2 = |k1: f64| pairs.iter().map(|(a, b)| a - k1 * b).fold(0.0f64, f64::max);
    let hi = pairs
        .iter()
        .filter(|(_, b)| *b > 0.0)
        .map(|(a, b)| a / b)
        .fold(0.0f64, f64::max);
    let (mut lo, mut up) = (0.0f64, hi.max(1e-12));
    for _ in 0..200 {
        let m1 = lo + (up - lo) / 3.0;
        let m2 = up - (up - lo) / 3.0;
        if m1 + kappa2(m1) <= m2 + kappa2(m2) {
            up = m2;
        } else {
            lo = m1;
        }
    }
    let k1 = 0.5 * (lo + up);
    let obj0 = kappa2(0.0);
    if obj0 <= k1 + kappa2(k1) {
        Some([0.0, obj0])
    } else {
        Some([k1, kappa2(k1)])
    }
}

fn growth_check(p: &PotentialSpec, gc: &GrowthConstants) -> bool {
    interior_grid(1e-8).into_iter().all(|s| match (p.convex(s, 2), p.convex(s, 1)) {
        (Ok(f2), Ok(f1)) => f2 <= gc.c_sharp * (gc.c_sharp * f1.abs().powf(gc.gamma_sharp)).exp() * (1.0 + 1e-12),
        _ => true,
    })
}

/// Sampled logarithmic-divergence alternative: |ln δ|^κ / |F₀'(±(1−2δ))| stays bounded as
/// δ ↓ 0, with κ = 3/4.
fn log_divergence_check(p: &PotentialSpec) -> bool {
    let q = |d: f64| -> Option<f64> {
        let a = p.convex(1.0 - 2.0 * d, 1).ok()?.abs();
        let b = p.convex(-1.0 + 2.0 * d, 1).ok()?.abs();
        Some(d.ln().abs().powf(0.75) / a.min(b))
    };
    let early: Vec<f64> = (3..7).filter_map(|e| q(10f64.powi(-e))).collect();
    let late: Vec<f64> = (7..10).filter_map(|e| q(10f64.powi(-e))).collect();
    if early.is_empty() || late.is_empty() {
        return false;
    }
    let e = early.iter().cloned().fold(0.0, f64::max);
    let l = late.iter().cloned().fold(0.0, f64::max);
    l <= 2.0 * e
}

/// Evaluates each assumption on sampled grids and reports pass, failure or warning.
/// Hard failures are those breaking well-posedness of the discrete solvers; the
/// domination and growth properties only produce warnings.
pub fn validate_assumptions(p: &ModelParameters, mesh: &DiskMesh, experimental: bool) -> ValidationReport {
    let area = mesh.area();
    let perim = mesh.perimeter();
    let mut checks = Vec::new();
    let scale = area.abs() + perim;

    let finite = [p.alpha, p.beta].iter().all(|v| v.is_finite());
    let a2 = p.alpha * p.beta * area + perim;
    checks.push(check(
        "mean-weights",
        finite && (-1.0..=1.0).contains(&p.alpha) && a2.abs() > 1e-12 * scale,
        CheckStatus::Fail,
        format!("alpha = {}, beta = {}, alpha*beta*|Omega| + |Gamma| = {:.6e}", p.alpha, p.beta, a2),
    ));

    let d = &p.densities;
    let dens_ok = [d.rho1, d.rho2, d.sigma1, d.sigma2].iter().all(|v| v.is_finite() && *v > 0.0);
    checks.push(check(
        "densities",
        dens_ok,
        CheckStatus::Fail,
        format!("specific densities rho = ({}, {}), sigma = ({}, {})", d.rho1, d.rho2, d.sigma1, d.sigma2),
    ));

    let b = p.coefficients.bounds();
    let coef_ok = [b.m_min, b.nu_min, b.gamma_min].iter().all(|v| v.is_finite() && *v > 0.0)
        && [b.m_max, b.nu_max, b.gamma_max].iter().all(|v| v.is_finite());
    checks.push(check(
        "coefficient-bounds",
        coef_ok,
        CheckStatus::Fail,
        format!(
            "m in [{:.4e}, {:.4e}], nu in [{:.4e}, {:.4e}], gamma in [{:.4e}, {:.4e}]",
            b.m_min, b.m_max, b.nu_min, b.nu_max, b.gamma_min, b.gamma_max
        ),
    ));

    for (name, pot) in [("bulk", &p.bulk_potential), ("surface", &p.surface_potential)] {
        let floor = convexity_floor(pot);
        let mut ok = floor.is_finite() && floor > 0.0;
        let mut detail = format!("{name} potential: min F0'' = {floor:.6e}");
        if let PotentialSpec::Logarithmic { theta, theta_c } = pot {
            ok &= *theta > 0.0 && *theta_c > 0.0 && theta.is_finite() && theta_c.is_finite();
            if theta >= theta_c {
                checks.push(check(
                    "phase-separation",
                    false,
                    CheckStatus::Warn,
                    format!("{name} potential: theta = {theta} >= theta_c = {theta_c}, no spinodal region"),
                ));
            }
        }
        if let PotentialSpec::Polynomial { coefficients, c } = pot {
            ok &= coefficients.iter().all(|v| v.is_finite()) && c.is_finite();
            detail.push_str(&format!("; c = {c}"));
            checks.push(check(
                "singular-limit",
                false,
                CheckStatus::Warn,
                format!("{name} potential is polynomial: F0' stays bounded at s = +-1"),
            ));
        }
        checks.push(check("potential-convexity", ok, CheckStatus::Fail, detail));
    }

    let k_ok = p.k > 0.0 && p.k.is_finite();
    checks.push(check(
        "K-range",
        k_ok || experimental,
        CheckStatus::Fail,
        if k_ok {
            format!("K = {}", p.k)
        } else {
            format!(
                "K = {} is not admissible: the well-posedness theory covers K in (0, inf) only{}",
                p.k,
                if experimental { " (accepted in experimental mode)" } else { "" }
            )
        },
    ));
    checks.push(check(
        "L-range",
        p.l >= 0.0 && !p.l.is_nan(),
        CheckStatus::Fail,
        format!("L = {}", p.l),
    ));
    if p.l == 0.0 {
        let lhs = p.beta * (d.sigma2 - d.sigma1);
        let rhs = d.rho2 - d.rho1;
        checks.push(check(
            "L0-density-compatibility",
            (lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs() + rhs.abs()),
            CheckStatus::Fail,
            format!("L = 0 requires beta*(sigma2 - sigma1) = rho2 - rho1; got {lhs} vs {rhs}"),
        ));
    }

    let fine = domination_fit(&p.bulk_potential, &p.surface_potential, p.alpha, 1e-12);
    let coarse = domination_fit(&p.bulk_potential, &p.surface_potential, p.alpha, 1e-4);
    let kappa = match (coarse, fine) {
        (Some(c), Some(f)) if f[0] + f[1] <= 2.0 * (c[0] + c[1]) + 1e-9 => Some(f),
        _ => None,
    };
    checks.push(match kappa {
        Some(k) => check("potential-comparability", true, CheckStatus::Warn, format!("kappa1 = {:.6e}, kappa2 = {:.6e}", k[0], k[1])),
        None => check("potential-comparability", false, CheckStatus::Warn, "no bounded (kappa1, kappa2) fits the sampled grid".into()),
    });

    checks.push(match &p.growth {
        Some(gc) => {
            let ok = (1.0..2.0).contains(&gc.gamma_sharp)
                && gc.c_sharp > 0.0
                && growth_check(&p.bulk_potential, gc)
                && growth_check(&p.surface_potential, gc);
            check(
                "potential-growth",
                ok,
                CheckStatus::Warn,
                format!("exponential growth bound with C = {}, gamma = {}", gc.c_sharp, gc.gamma_sharp),
            )
        }
        None => {
            if log_divergence_check(&p.bulk_potential) && log_divergence_check(&p.surface_potential) {
                check("potential-growth", true, CheckStatus::Warn, "logarithmic divergence alternative holds on sampled grid".into())
            } else {
                AssumptionCheck {
                    rule: "potential-growth".into(),
                    status: CheckStatus::Unverifiable,
                    detail: "no growth constants supplied and the divergence alternative is not observed".into(),
                }
            }
        }
    });

    ValidationReport { checks, coefficient_bounds: b, kappa }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_disk_mesh;

    #[test]
    fn chi_values() {
        assert_eq!(chi(4.0), 0.25);
        assert_eq!(chi(0.0), 0.0);
        assert_eq!(chi(f64::INFINITY), 0.0);
    }

    #[test]
    fn density_examples() {
        let d = Densities { rho1: 1.0, rho2: 3.0, sigma1: 1.0, sigma2: 1.0 };
        assert_eq!(d.rho(1.0), 3.0);
        assert_eq!(d.rho(-1.0), 1.0);
        assert_eq!(d.rho(0.0), 2.0);
        assert_eq!(d.rho(5.0), 3.0);
        assert_eq!(d.sigma(0.3), 1.0);
    }

    #[test]
    fn log_potential_values() {
        let p = PotentialSpec::logarithmic(1.0, 2.0);
        assert_eq!(p.eval(0.0, 0).unwrap(), 0.0);
        assert_eq!(p.eval(0.0, 1).unwrap(), 0.0);
        assert!((p.eval(0.0, 2).unwrap() + 1.0).abs() < 1e-15);
        let s: f64 = 0.5;
        let direct = 0.5 * ((1.0 + s) * (1.0 + s).ln() + (1.0 - s) * (1.0 - s).ln()) - s * s;
        assert!((p.eval(s, 0).unwrap() - direct).abs() < 1e-15);
        assert!(matches!(p.eval(1.0 - 1e-10, 0), Err(NschError::Barrier(_))));
    }

    #[test]
    fn polynomial_potential_is_normalized() {
        // F0 = 5 + 2s + s^2 + s^4 → normalized s^2 + s^4
        let p = PotentialSpec::Polynomial { coefficients: vec![5.0, 2.0, 1.0, 0.0, 1.0], c: 1.0 };
        assert_eq!(p.convex(0.0, 0).unwrap(), 0.0);
        assert_eq!(p.convex(0.0, 1).unwrap(), 0.0);
        assert!((p.convex(0.5, 0).unwrap() - (0.25 + 0.0625)).abs() < 1e-15);
        assert!((p.convex(0.5, 1).unwrap() - (1.0 + 0.5)).abs() < 1e-15);
        assert!((p.convex(0.5, 2).unwrap() - (2.0 + 3.0)).abs() < 1e-15);
    }

    fn base() -> ModelParameters {
        ModelParameters::with_potentials(PotentialSpec::logarithmic(1.0, 2.0), PotentialSpec::logarithmic(1.0, 2.0))
    }

    #[test]
    fn same_log_potentials_give_unit_kappa() {
        let mesh = build_disk_mesh(4, 1.0).unwrap();
        let r = validate_assumptions(&base(), &mesh, false);
        assert!(r.is_admissible());
        let k = r.kappa.unwrap();
        assert!((k[0] - 1.0).abs() < 1e-6 && k[1].abs() < 1e-6, "{k:?}");
        assert_eq!(r.get("potential-growth").unwrap().status, CheckStatus::Pass);
    }

    #[test]
    fn k_zero_and_l_zero_incompatibility_rejected() {
        let mesh = build_disk_mesh(4, 1.0).unwrap();
        let mut p = base();
        p.k = 0.0;
        let err = p.validate(&mesh, false).unwrap_err();
        assert!(err.to_string().contains("K-range"));
        assert!(p.validate(&mesh, true).is_ok());
        let mut p = base();
        p.l = 0.0;
        p.densities.rho2 = 2.0;
        let err = p.validate(&mesh, false).unwrap_err();
        assert!(err.to_string().contains("L0-density-compatibility"));
    }

    #[test]
    fn a2_violation_is_hard() {
        let mesh = build_disk_mesh(4, 1.0).unwrap();
        let mut p = base();
        p.alpha = -1.0;
        p.beta = mesh.perimeter() / mesh.area();
        assert!(p.validate(&mesh, false).is_err());
    }

    #[test]
    fn polynomial_singular_limit_is_only_a_warning() {
        let mesh = build_disk_mesh(4, 1.0).unwrap();
        let poly = PotentialSpec::Polynomial { coefficients: vec![0.0, 0.0, 0.5, 0.0, 0.25], c: 1.0 };
        let p = ModelParameters::with_potentials(poly.clone(), poly);
        let r = p.validate(&mesh, false).unwrap();
        assert_eq!(r.get("singular-limit").unwrap().status, CheckStatus::Warn);
    }

    #[test]
    fn extended_real_serde() {
        #[derive(Serialize, Deserialize)]
        struct W {
            #[serde(with = "ext_real")]
            l: f64,
        }
        let w: W = toml::from_str("l = \"inf\"").unwrap();
        assert!(w.l.is_infinite());
        let w: W = toml::from_str("l = 2").unwrap();
        assert_eq!(w.l, 2.0);
        let s = toml::to_string(&W { l: f64::INFINITY }).unwrap();
        assert!(s.contains("\"inf\""));
    }
}
