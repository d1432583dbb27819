//! Lagrange P1/P2 shape functions on triangles and quadrature rules.
//!
//! Local node order: the three vertices, then the midpoints of edges
//! (0,1), (1,2), (2,0).

/// Symmetric 6-point triangle rule, exact for degree 4. Barycentric points, weights sum to 1.
pub const TRI_RULE_DEG4: [([f64; 3], f64); 6] = {
    const A: f64 = 0.445_948_490_915_964_89;
    const B: f64 = 0.091_576_213_509_770_743;
    const WA: f64 = 0.223_381_589_678_011_47;
    const WB: f64 = 0.109_951_743_655_321_87;
    [
        ([A, A, 1.0 - 2.0 * A], WA),
        ([A, 1.0 - 2.0 * A, A], WA),
        ([1.0 - 2.0 * A, A, A], WA),
        ([B, B, 1.0 - 2.0 * B], WB),
        ([B, 1.0 - 2.0 * B, B], WB),
        ([1.0 - 2.0 * B, B, B], WB),
    ]
};

/// 4-point Gauss-Legendre rule on `[0, 1]`, exact for degree 7.
pub const GAUSS4_UNIT: [(f64, f64); 4] = {
    const P1: f64 = 0.339_981_043_584_856_3;
    const P2: f64 = 0.861_136_311_594_052_6;
    const W1: f64 = 0.652_145_154_862_546_1;
    const W2: f64 = 0.347_854_845_137_453_9;
    [
        (0.5 - 0.5 * P2, 0.5 * W2),
        (0.5 - 0.5 * P1, 0.5 * W1),
        (0.5 + 0.5 * P1, 0.5 * W1),
        (0.5 + 0.5 * P2, 0.5 * W2),
    ]
};

pub const P2_EDGES: [[usize; 2]; 3] = [[0, 1], [1, 2], [2, 0]];

pub fn n_local(degree: u8) -> usize {
    if degree == 1 {
        3
    } else {
        6
    }
}

/// Shape-function values at barycentric point `l`.
pub fn shape_values(degree: u8, l: [f64; 3], out: &mut [f64]) {
    if degree == 1 {
        out[..3].copy_from_slice(&l);
        return;
    }
    for i in 0..3 {
        out[i] = l[i] * (2.0 * l[i] - 1.0);
    }
    for (k, [a, b]) in P2_EDGES.iter().enumerate() {
        out[3 + k] = 4.0 * l[*a] * l[*b];
    }
}

/// Shape-function derivatives with respect to the barycentric coordinates.
pub fn shape_bary_grads(degree: u8, l: [f64; 3], out: &mut [[f64; 3]]) {
    if degree == 1 {
        for i in 0..3 {
            out[i] = [0.0; 3];
            out[i][i] = 1.0;
        }
        return;
    }
    for i in 0..3 {
        out[i] = [0.0; 3];
        out[i][i] = 4.0 * l[i] - 1.0;
    }
    for (k, [a, b]) in P2_EDGES.iter().enumerate() {
        out[3 + k] = [0.0; 3];
        out[3 + k][*a] = 4.0 * l[*b];
        out[3 + k][*b] = 4.0 * l[*a];
    }
}

/// Affine geometry of one triangle.
#[derive(Debug, Clone, Copy)]
pub struct TriGeom {
    pub area: f64,
    /// Cartesian gradients of the barycentric coordinates.
    pub grad_l: [[f64; 2]; 3],
}

impl TriGeom {
    pub fn new(p: [[f64; 2]; 3]) -> Self {
        let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
        let mut grad_l = [[0.0; 2]; 3];
        for i in 0..3 {
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            grad_l[i] = [(p[j][1] - p[k][1]) / det, (p[k][0] - p[j][0]) / det];
        }
        TriGeom { area: 0.5 * det, grad_l }
    }

    /// Cartesian gradients of all local shape functions at `l`.
    pub fn shape_grads(&self, degree: u8, l: [f64; 3], out: &mut [[f64; 2]]) {
        let mut g = [[0.0; 3]; 6];
        shape_bary_grads(degree, l, &mut g);
        for (o, gi) in out.iter_mut().zip(g.iter()).take(n_local(degree)) {
            *o = [0.0; 2];
            for k in 0..3 {
                o[0] += gi[k] * self.grad_l[k][0];
                o[1] += gi[k] * self.grad_l[k][1];
            }
        }
    }
}

/// 1D Lagrange shape values on `[0, 1]`: degree 1 nodes `(0, 1)`, degree 2 nodes `(0, 1, 1/2)`.
pub fn edge_shape_values(degree: u8, s: f64) -> [f64; 3] {
    if degree == 1 {
        [1.0 - s, s, 0.0]
    } else {
        [(1.0 - s) * (1.0 - 2.0 * s), s * (2.0 * s - 1.0), 4.0 * s * (1.0 - s)]
    }
}

/// Derivatives of [`edge_shape_values`] with respect to `s`.
pub fn edge_shape_derivs(degree: u8, s: f64) -> [f64; 3] {
    if degree == 1 {
        [-1.0, 1.0, 0.0]
    } else {
        [4.0 * s - 3.0, 4.0 * s - 1.0, 4.0 - 8.0 * s]
    }
}
