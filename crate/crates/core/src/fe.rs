//! Reference-element data: barycentric gradients, P2 shape functions and quadrature.

pub type Vec2 = [f64; 2];

#[derive(Debug, Clone, Copy)]
pub struct TriangleGeom {
    pub verts: [Vec2; 3],
    pub area: f64,
    /// Gradients of the barycentric coordinates.
    pub grads: [Vec2; 3],
}

impl TriangleGeom {
    pub fn new(verts: [Vec2; 3]) -> Self {
        let [p0, p1, p2] = verts;
        let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
        let area = 0.5 * det;
        let mut grads = [[0.0; 2]; 3];
        for i in 0..3 {
            let pj = verts[(i + 1) % 3];
            let pk = verts[(i + 2) % 3];
            grads[i] = [(pj[1] - pk[1]) / det, (pk[0] - pj[0]) / det];
        }
        Self { verts, area, grads }
    }

    pub fn point(&self, l: [f64; 3]) -> Vec2 {
        [
            l[0] * self.verts[0][0] + l[1] * self.verts[1][0] + l[2] * self.verts[2][0],
            l[0] * self.verts[0][1] + l[1] * self.verts[1][1] + l[2] * self.verts[2][1],
        ]
    }

    /// P1 stiffness ∫∇λ_i·∇λ_j.
    pub fn p1_stiffness(&self) -> [[f64; 3]; 3] {
        let mut k = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                k[i][j] = self.area * dot2(self.grads[i], self.grads[j]);
            }
        }
        k
    }

    /// P2 shape gradients at barycentric point `l`.
    pub fn p2_grads(&self, l: [f64; 3]) -> [Vec2; 6] {
        let g = &self.grads;
        let mut out = [[0.0; 2]; 6];
        for i in 0..3 {
            let c = 4.0 * l[i] - 1.0;
            out[i] = [c * g[i][0], c * g[i][1]];
        }
        for (e, (i, j)) in P2_EDGES.iter().enumerate() {
            out[3 + e] = [
                4.0 * (l[*i] * g[*j][0] + l[*j] * g[*i][0]),
                4.0 * (l[*i] * g[*j][1] + l[*j] * g[*i][1]),
            ];
        }
        out
    }
}

/// Local edge order for P2 midpoint nodes: (0,1), (1,2), (2,0).
pub const P2_EDGES: [(usize, usize); 3] = [(0, 1), (1, 2), (2, 0)];

pub fn p2_values(l: [f64; 3]) -> [f64; 6] {
    [
        l[0] * (2.0 * l[0] - 1.0),
        l[1] * (2.0 * l[1] - 1.0),
        l[2] * (2.0 * l[2] - 1.0),
        4.0 * l[0] * l[1],
        4.0 * l[1] * l[2],
        4.0 * l[2] * l[0],
    ]
}

#[inline]
pub fn dot2(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn norm2(a: Vec2) -> f64 {
    a[0].hypot(a[1])
}

/// Seven-point rule exact for degree 5; weights sum to one (multiply by area).
pub fn triangle_rule() -> [([f64; 3], f64); 7] {
    let s15 = 15f64.sqrt();
    let a1 = (6.0 - s15) / 21.0;
    let a2 = (6.0 + s15) / 21.0;
    let w1 = (155.0 - s15) / 1200.0;
    let w2 = (155.0 + s15) / 1200.0;
    let b1 = 1.0 - 2.0 * a1;
    let b2 = 1.0 - 2.0 * a2;
    [
        ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 9.0 / 40.0),
        ([a1, a1, b1], w1),
        ([a1, b1, a1], w1),
        ([b1, a1, a1], w1),
        ([a2, a2, b2], w2),
        ([a2, b2, a2], w2),
        ([b2, a2, a2], w2),
    ]
}

/// Three-point Gauss–Legendre rule on [0,1]; weights sum to one.
pub fn line_rule() -> [(f64, f64); 3] {
    let d = 0.5 * (0.6f64).sqrt();
    [(0.5 - d, 5.0 / 18.0), (0.5, 8.0 / 18.0), (0.5 + d, 5.0 / 18.0)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_rule_integrates_quintics() {
        let t = TriangleGeom::new([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        // ∫ x^a y^b over the unit simplex = a! b! / (a+b+2)!
        let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
        for a in 0..=5u32 {
            for b in 0..=(5 - a) {
                let exact = fact(a) * fact(b) / fact(a + b + 2);
                let q: f64 = triangle_rule()
                    .iter()
                    .map(|(l, w)| {
                        let p = t.point(*l);
                        w * t.area * p[0].powi(a as i32) * p[1].powi(b as i32)
                    })
                    .sum();
                assert!((q - exact).abs() < 1e-15, "a={a} b={b}");
            }
        }
    }

    #[test]
    fn p2_partition_of_unity() {
        let t = TriangleGeom::new([[0.1, 0.0], [1.0, 0.2], [0.3, 0.9]]);
        for (l, _) in triangle_rule() {
            let s: f64 = p2_values(l).iter().sum();
            assert!((s - 1.0).abs() < 1e-14);
            let g = t.p2_grads(l);
            let gx: f64 = g.iter().map(|v| v[0]).sum();
            let gy: f64 = g.iter().map(|v| v[1]).sum();
            assert!(gx.abs() < 1e-12 && gy.abs() < 1e-12);
        }
    }

    #[test]
    fn barycentric_gradients_sum_to_zero() {
        let t = TriangleGeom::new([[0.0, 0.0], [2.0, 0.0], [0.5, 1.5]]);
        assert!((t.area - 1.5).abs() < 1e-15);
        let s = [t.grads[0][0] + t.grads[1][0] + t.grads[2][0], t.grads[0][1] + t.grads[1][1] + t.grads[2][1]];
        assert!(s[0].abs() < 1e-15 && s[1].abs() < 1e-15);
    }
}
