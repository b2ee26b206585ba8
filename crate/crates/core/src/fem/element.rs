//! Quadratic (P2) and linear (P1) Lagrange elements on triangles.
//!
//! Local P2 node order: the three vertices, then the midpoints of edges
//! (0,1), (1,2), (2,0).

/// P2 basis values at reference point `(x, y)`.
#[inline]
pub fn p2_values(x: f64, y: f64) -> [f64; 6] {
    let l = [1.0 - x - y, x, y];
    [
        l[0] * (2.0 * l[0] - 1.0),
        l[1] * (2.0 * l[1] - 1.0),
        l[2] * (2.0 * l[2] - 1.0),
        4.0 * l[0] * l[1],
        4.0 * l[1] * l[2],
        4.0 * l[2] * l[0],
    ]
}

/// P2 basis gradients with respect to reference coordinates.
#[inline]
pub fn p2_ref_gradients(x: f64, y: f64) -> [[f64; 2]; 6] {
    let l = [1.0 - x - y, x, y];
    let g = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
    let vert = |i: usize| [(4.0 * l[i] - 1.0) * g[i][0], (4.0 * l[i] - 1.0) * g[i][1]];
    let edge = |i: usize, j: usize| {
        [
            4.0 * (l[j] * g[i][0] + l[i] * g[j][0]),
            4.0 * (l[j] * g[i][1] + l[i] * g[j][1]),
        ]
    };
    [vert(0), vert(1), vert(2), edge(0, 1), edge(1, 2), edge(2, 0)]
}

#[inline]
pub fn p1_values(x: f64, y: f64) -> [f64; 3] {
    [1.0 - x - y, x, y]
}

/// 1D quadratic basis on an edge at parameter `t ∈ [0, 1]`, ordered
/// (start, end, midpoint).
#[inline]
pub fn edge_p2_values(t: f64) -> [f64; 3] {
    [(1.0 - t) * (1.0 - 2.0 * t), t * (2.0 * t - 1.0), 4.0 * t * (1.0 - t)]
}

/// Affine map from the reference triangle onto a physical triangle.
#[derive(Clone, Copy, Debug)]
pub struct AffineMap {
    origin: [f64; 2],
    jac: [[f64; 2]; 2],
    inv_t: [[f64; 2]; 2],
    pub det: f64,
}

impl AffineMap {
    pub fn new(p: [[f64; 2]; 3]) -> Self {
        let jac = [
            [p[1][0] - p[0][0], p[2][0] - p[0][0]],
            [p[1][1] - p[0][1], p[2][1] - p[0][1]],
        ];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        // J^{-T}
        let inv_t = [
            [jac[1][1] / det, -jac[1][0] / det],
            [-jac[0][1] / det, jac[0][0] / det],
        ];
        AffineMap {
            origin: p[0],
            jac,
            inv_t,
            det,
        }
    }

    #[inline]
    pub fn point(&self, x: f64, y: f64) -> [f64; 2] {
        [
            self.origin[0] + self.jac[0][0] * x + self.jac[0][1] * y,
            self.origin[1] + self.jac[1][0] * x + self.jac[1][1] * y,
        ]
    }

    #[inline]
    pub fn grad(&self, g: [f64; 2]) -> [f64; 2] {
        [
            self.inv_t[0][0] * g[0] + self.inv_t[0][1] * g[1],
            self.inv_t[1][0] * g[0] + self.inv_t[1][1] * g[1],
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p2_is_nodal_and_partition_of_unity() {
        let nodes = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.5, 0.0], [0.5, 0.5], [0.0, 0.5]];
        for (i, n) in nodes.iter().enumerate() {
            let v = p2_values(n[0], n[1]);
            for (j, vj) in v.iter().enumerate() {
                assert!((vj - if i == j { 1.0 } else { 0.0 }).abs() < 1e-15);
            }
        }
        let (x, y) = (0.21, 0.37);
        assert!((p2_values(x, y).iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let g = p2_ref_gradients(x, y);
        assert!(g.iter().map(|g| g[0]).sum::<f64>().abs() < 1e-14);
        assert!(g.iter().map(|g| g[1]).sum::<f64>().abs() < 1e-14);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (x, y, h) = (0.3, 0.2, 1e-6);
        let g = p2_ref_gradients(x, y);
        let vp = p2_values(x + h, y);
        let vm = p2_values(x - h, y);
        let wp = p2_values(x, y + h);
        let wm = p2_values(x, y - h);
        for i in 0..6 {
            assert!((g[i][0] - (vp[i] - vm[i]) / (2.0 * h)).abs() < 1e-8);
            assert!((g[i][1] - (wp[i] - wm[i]) / (2.0 * h)).abs() < 1e-8);
        }
    }
}
