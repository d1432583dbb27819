//! Plane-strain elasticity forms: mass, stiffness, Rayleigh damping, traction
//! loads, the H1 inner product and the affine frequency-domain split.
//!
//! Assembled matrices act on all DOFs of a space; restriction to the free
//! DOFs is left to the caller.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::element::{shape_values, TriGeom, GAUSS4_UNIT, TRI_RULE_DEG4};
use crate::error::{invalid, Error, Result};
use crate::fespace::FunctionSpace;
use crate::linalg::{c64, combine_complex, combine_real, CSpMat, SpMat, TripletBuilder};
use crate::mesh::BoundaryTag;

/// Material and Rayleigh-damping parameters of one component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    pub e: f64,
    pub nu: f64,
    pub rho: f64,
    /// Mass-proportional damping coefficient.
    pub alpha: f64,
    /// Stiffness-proportional damping coefficient.
    pub beta: f64,
}

impl MaterialParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.e > 0.0 && self.e.is_finite()) {
            return Err(Error::ParameterOutOfRange(format!("Young's modulus {}", self.e)));
        }
        check_nu(self.nu)?;
        if !(self.rho > 0.0) {
            return Err(Error::ParameterOutOfRange(format!("density {}", self.rho)));
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::ParameterOutOfRange(format!(
                "damping coefficients ({}, {})",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }

    /// Coefficients of the unit-density mass and unit-modulus stiffness in the frequency operator.
    pub fn affine_coefficients(&self, omega: f64) -> [c64; 2] {
        [
            c64::new(-self.rho * omega * omega, self.rho * omega * self.alpha),
            c64::new(self.e, self.e * omega * self.beta),
        ]
    }
}

fn check_nu(nu: f64) -> Result<()> {
    if !(nu > 0.0 && nu < 0.5) {
        return Err(Error::ParameterOutOfRange(format!("Poisson ratio {nu} outside (0, 0.5)")));
    }
    Ok(())
}

/// Lamé coefficients `(lambda, mu)` of the plane-strain isotropic tensor.
pub fn lame(e: f64, nu: f64) -> (f64, f64) {
    (nu * e / ((1.0 + nu) * (1.0 - 2.0 * nu)), e / (2.0 * (1.0 + nu)))
}

/// Moving Gaussian traction `[F g, -c F g]`, `g = exp(-(x - x_c)^2 / sigma_x^2)`, on a top edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadParams {
    pub force: f64,
    pub x_center: f64,
    pub sigma_x: f64,
    pub friction: f64,
    #[serde(default = "default_true")]
    pub active: bool,
}

fn default_true() -> bool {
    true
}

impl LoadParams {
    /// The same physical load described in the frame reflected about `x = width / 2`.
    pub fn mirrored(&self, width: f64) -> Self {
        LoadParams { force: -self.force, friction: -self.friction, x_center: width - self.x_center, ..*self }
    }

    pub fn profile(&self, x: f64) -> f64 {
        let d = (x - self.x_center) / self.sigma_x;
        (-d * d).exp()
    }
}

/// Temporal profile `f_t(t) = t exp(-t / sigma_t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSignature {
    pub sigma_t: f64,
}

impl TimeSignature {
    pub fn value(&self, t: f64) -> f64 {
        t * (-t / self.sigma_t).exp()
    }

    /// `int_0^inf f_t(t) e^{-i w t} dt = sigma^2 / (1 + i w sigma)^2`.
    pub fn transform(&self, omega: f64) -> c64 {
        let s = self.sigma_t;
        let d = c64::new(1.0, omega * s);
        c64::new(s * s, 0.0) / (d * d)
    }

    /// `|f_hat(w)| / max_w |f_hat|`.
    pub fn transform_ratio(&self, omega: f64) -> f64 {
        1.0 / (1.0 + (omega * self.sigma_t).powi(2))
    }
}

fn assemble_elementwise(
    space: &FunctionSpace,
    mut kernel: impl FnMut(&TriGeom, &mut [[f64; 12]; 12]),
) -> Result<SpMat> {
    let nl = space.n_local();
    let n = space.n_dofs();
    let mut b = TripletBuilder::with_capacity(n, n, space.mesh.n_triangles() * 4 * nl * nl);
    let mut loc = [[0.0; 12]; 12];
    for (t, tri) in space.mesh.triangles.iter().enumerate() {
        let v = &space.mesh.vertices;
        let geom = TriGeom::new([v[tri[0]], v[tri[1]], v[tri[2]]]);
        loc.iter_mut().for_each(|r| r.fill(0.0));
        kernel(&geom, &mut loc);
        let en = &space.element_nodes[t];
        for a in 0..nl {
            for c in 0..2 {
                for bb in 0..nl {
                    for d in 0..2 {
                        let val = loc[2 * a + c][2 * bb + d];
                        if val != 0.0 {
                            b.push(2 * en[a] + c, 2 * en[bb] + d, val);
                        }
                    }
                }
            }
        }
    }
    b.build()
}

/// Consistent mass matrix `rho int w . v`.
pub fn assemble_mass(space: &FunctionSpace, rho: f64) -> Result<SpMat> {
    let (deg, nl) = (space.degree, space.n_local());
    assemble_elementwise(space, |g, loc| {
        let mut phi = [0.0; 6];
        for (l, w) in TRI_RULE_DEG4 {
            shape_values(deg, l, &mut phi);
            let wq = rho * w * g.area;
            for a in 0..nl {
                for b in 0..nl {
                    let m = wq * phi[a] * phi[b];
                    loc[2 * a][2 * b] += m;
                    loc[2 * a + 1][2 * b + 1] += m;
                }
            }
        }
    })
}

/// Stiffness `int lambda div w div v + 2 mu eps(w) : eps(v)` (plane strain).
pub fn assemble_stiffness(space: &FunctionSpace, e: f64, nu: f64) -> Result<SpMat> {
    check_nu(nu)?;
    if !(e > 0.0) {
        return Err(Error::ParameterOutOfRange(format!("Young's modulus {e}")));
    }
    let (lam, mu) = lame(e, nu);
    let (deg, nl) = (space.degree, space.n_local());
    assemble_elementwise(space, |g, loc| {
        let mut gr = [[0.0; 2]; 6];
        // Gradients are at most linear, so a degree-2 rule suffices; reuse the degree-4 one.
        for (l, w) in TRI_RULE_DEG4 {
            g.shape_grads(deg, l, &mut gr);
            let wq = w * g.area;
            for a in 0..nl {
                for b in 0..nl {
                    let dot = gr[a][0] * gr[b][0] + gr[a][1] * gr[b][1];
                    for c in 0..2 {
                        for d in 0..2 {
                            let mut k = lam * gr[a][c] * gr[b][d] + mu * gr[a][d] * gr[b][c];
                            if c == d {
                                k += mu * dot;
                            }
                            loc[2 * a + c][2 * b + d] += wq * k;
                        }
                    }
                }
            }
        }
    })
}

/// Inner product `int grad w : grad v + w . v` defining the H1 norm.
pub fn assemble_h1_norm(space: &FunctionSpace) -> Result<SpMat> {
    let (deg, nl) = (space.degree, space.n_local());
    assemble_elementwise(space, |g, loc| {
        let mut gr = [[0.0; 2]; 6];
        let mut phi = [0.0; 6];
        for (l, w) in TRI_RULE_DEG4 {
            g.shape_grads(deg, l, &mut gr);
            shape_values(deg, l, &mut phi);
            let wq = w * g.area;
            for a in 0..nl {
                for b in 0..nl {
                    let v = wq * (gr[a][0] * gr[b][0] + gr[a][1] * gr[b][1] + phi[a] * phi[b]);
                    loc[2 * a][2 * b] += v;
                    loc[2 * a + 1][2 * b + 1] += v;
                }
            }
        }
    })
}

/// Rayleigh damping `C = alpha M + beta A`.
pub fn assemble_damping(m: &SpMat, a: &SpMat, alpha: f64, beta: f64) -> Result<SpMat> {
    combine_real(&[(alpha, m), (beta, a)])
}

/// Nonzero entries of the traction load on edges tagged `tag`.
///
/// Each edge is split so that sub-intervals are at most `sigma_x / 2` long, and
/// sub-intervals farther than eight widths from the center are skipped.
pub fn traction_load_entries(space: &FunctionSpace, load: &LoadParams, tag: BoundaryTag) -> Result<Vec<(usize, f64)>> {
    if !load.active {
        return Ok(Vec::new());
    }
    if !(load.sigma_x > 0.0) {
        return Err(Error::ParameterOutOfRange(format!("load width {}", load.sigma_x)));
    }
    if !space.mesh.has_tag(tag) {
        return invalid(format!("no boundary edges tagged {tag}"));
    }
    let deg = space.degree;
    let mut acc: std::collections::BTreeMap<usize, f64> = Default::default();
    for (e, nodes) in space.mesh.boundary.iter().zip(&space.boundary_nodes) {
        if e.tag != tag {
            continue;
        }
        let (p, q) = (space.mesh.vertices[e.vertices[0]], space.mesh.vertices[e.vertices[1]]);
        let len = ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt();
        let nsub = ((2.0 * len / load.sigma_x).ceil() as usize).max(1);
        let reach = 8.0 * load.sigma_x;
        let mut fx = [0.0; 3];
        let mut fy = [0.0; 3];
        for k in 0..nsub {
            let (s0, s1) = (k as f64 / nsub as f64, (k + 1) as f64 / nsub as f64);
            let (x0, x1) = (p[0] + s0 * (q[0] - p[0]), p[0] + s1 * (q[0] - p[0]));
            if x0.min(x1) > load.x_center + reach || x0.max(x1) < load.x_center - reach {
                continue;
            }
            for (t, w) in GAUSS4_UNIT {
                let s = s0 + t * (s1 - s0);
                let x = p[0] + s * (q[0] - p[0]);
                let g = load.profile(x) * w * (s1 - s0) * len;
                let phi = crate::element::edge_shape_values(deg, s);
                for i in 0..3 {
                    fx[i] += load.force * g * phi[i];
                    fy[i] += -load.friction * load.force * g * phi[i];
                }
            }
        }
        for (i, &n) in nodes.iter().enumerate() {
            if n == usize::MAX {
                continue;
            }
            *acc.entry(2 * n).or_default() += fx[i];
            *acc.entry(2 * n + 1).or_default() += fy[i];
        }
    }
    Ok(acc.into_iter().filter(|(_, v)| *v != 0.0).collect())
}

/// Traction load vector on edges tagged `tag`; zero when the load is inactive.
pub fn assemble_traction_load(space: &FunctionSpace, load: &LoadParams, tag: BoundaryTag) -> Result<Vec<f64>> {
    let mut f = vec![0.0; space.n_dofs()];
    for (i, v) in traction_load_entries(space, load, tag)? {
        f[i] += v;
    }
    Ok(f)
}

/// `-w^2 M + i w C + A`.
pub fn frequency_operator(m: &SpMat, c: &SpMat, a: &SpMat, omega: f64) -> Result<CSpMat> {
    combine_complex(&[
        (c64::new(-omega * omega, 0.0), m),
        (c64::new(0.0, omega), c),
        (c64::new(1.0, 0.0), a),
    ])
}

/// Parameter-independent pieces of one component: unit-density mass, unit-modulus stiffness, H1 Gram.
#[derive(Debug, Clone)]
pub struct ComponentOperators {
    pub mass_unit: SpMat,
    pub stiffness_unit: SpMat,
    pub h1: SpMat,
    pub nu: f64,
}

pub fn build_component_operators(space: &FunctionSpace, nu: f64) -> Result<ComponentOperators> {
    Ok(ComponentOperators {
        mass_unit: assemble_mass(space, 1.0)?,
        stiffness_unit: assemble_stiffness(space, 1.0, nu)?,
        h1: assemble_h1_norm(space)?,
        nu,
    })
}

impl ComponentOperators {
    /// Frequency operator assembled from the two affine terms.
    pub fn frequency(&self, mat: &MaterialParams, omega: f64) -> Result<CSpMat> {
        let [tm, ta] = mat.affine_coefficients(omega);
        combine_complex(&[(tm, &self.mass_unit), (ta, &self.stiffness_unit)])
    }

    pub fn mass(&self, rho: f64) -> Result<SpMat> {
        combine_real(&[(rho, &self.mass_unit)])
    }

    pub fn stiffness(&self, e: f64) -> Result<SpMat> {
        combine_real(&[(e, &self.stiffness_unit)])
    }

    pub fn damping(&self, mat: &MaterialParams) -> Result<SpMat> {
        combine_real(&[(mat.alpha * mat.rho, &self.mass_unit), (mat.beta * mat.e, &self.stiffness_unit)])
    }
}

/// Dense `W^T A W` for the columns of `w` (used for projected affine blocks).
pub fn project_real(a: &SpMat, w: &Mat<f64>) -> Mat<f64> {
    crate::linalg::gram_real(a, w)
}
