//! Vector-valued Lagrange spaces on a [`Mesh`] and their port descriptors.
//!
//! Degrees of freedom are interleaved by node: `2 * node` is the x component,
//! `2 * node + 1` the y component. Nodes are the mesh vertices followed, for
//! P2, by one midpoint per edge.

use std::collections::HashMap;

use faer::Mat;

use crate::element::{edge_shape_derivs, edge_shape_values, n_local, GAUSS4_UNIT, P2_EDGES};
use crate::error::{invalid, Error, Result};
use crate::mesh::{BoundaryTag, Mesh};

#[derive(Debug, Clone)]
pub struct FunctionSpace {
    pub mesh: Mesh,
    pub degree: u8,
    pub nodes: Vec<[f64; 2]>,
    /// Local-to-global node map per triangle; only the first `n_local(degree)` are used.
    pub element_nodes: Vec<[usize; 6]>,
    /// Per mesh boundary edge: start node, end node, midpoint node (P2 only).
    pub boundary_nodes: Vec<[usize; 3]>,
    pub dirichlet_tags: Vec<BoundaryTag>,
    dirichlet: Vec<bool>,
}

/// Traces on one boundary segment used to glue components together.
#[derive(Debug, Clone, PartialEq)]
pub struct PortDescriptor {
    pub side: BoundaryTag,
    /// Nodes ordered along the segment (by y, then x).
    pub nodes: Vec<usize>,
    /// `[x, y]` DOF pairs of `nodes`, flattened.
    pub dofs: Vec<usize>,
    pub coords: Vec<[f64; 2]>,
}

impl FunctionSpace {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_dofs(&self) -> usize {
        2 * self.nodes.len()
    }

    pub fn n_local(&self) -> usize {
        n_local(self.degree)
    }

    #[inline]
    pub fn dof(node: usize, comp: usize) -> usize {
        2 * node + comp
    }

    pub fn is_dirichlet(&self, dof: usize) -> bool {
        self.dirichlet[dof]
    }

    pub fn dirichlet_dofs(&self) -> Vec<usize> {
        (0..self.n_dofs()).filter(|&d| self.dirichlet[d]).collect()
    }

    pub fn free_dofs(&self) -> Vec<usize> {
        (0..self.n_dofs()).filter(|&d| !self.dirichlet[d]).collect()
    }

    /// Sorted nodes lying on boundary edges carrying `tag`.
    pub fn nodes_on(&self, tag: BoundaryTag) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .mesh
            .boundary
            .iter()
            .zip(&self.boundary_nodes)
            .filter(|(e, _)| e.tag == tag)
            .flat_map(|(_, n)| n.iter().copied().filter(|&k| k != usize::MAX).collect::<Vec<_>>())
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn dofs_on(&self, tag: BoundaryTag) -> Vec<usize> {
        self.nodes_on(tag).into_iter().flat_map(|n| [2 * n, 2 * n + 1]).collect()
    }

    /// Interpolates a vector field at the nodes.
    pub fn interpolate(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
        self.nodes.iter().flat_map(|p| f(*p)).collect()
    }
}

/// Builds the P1 or P2 vector space with homogeneous Dirichlet conditions on `dirichlet_tags`.
pub fn build_function_space(mesh: Mesh, degree: u8, dirichlet_tags: &[BoundaryTag]) -> Result<FunctionSpace> {
    if degree != 1 && degree != 2 {
        return invalid(format!("polynomial degree {degree} is not supported"));
    }
    for t in dirichlet_tags {
        if !mesh.has_tag(*t) {
            return invalid(format!("Dirichlet tag {t} does not appear on the mesh"));
        }
    }
    let mut nodes = mesh.vertices.clone();
    let mut element_nodes = Vec::with_capacity(mesh.n_triangles());
    let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
    for tri in &mesh.triangles {
        let mut en = [usize::MAX; 6];
        en[..3].copy_from_slice(tri);
        if degree == 2 {
            for (k, [a, b]) in P2_EDGES.iter().enumerate() {
                let (va, vb) = (tri[*a], tri[*b]);
                let key = (va.min(vb), va.max(vb));
                en[3 + k] = *mid.entry(key).or_insert_with(|| {
                    let (p, q) = (mesh.vertices[va], mesh.vertices[vb]);
                    nodes.push([(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0]);
                    nodes.len() - 1
                });
            }
        }
        element_nodes.push(en);
    }
    let boundary_nodes: Vec<[usize; 3]> = mesh
        .boundary
        .iter()
        .map(|e| {
            let [a, b] = e.vertices;
            let m = if degree == 2 { mid[&(a.min(b), a.max(b))] } else { usize::MAX };
            [a, b, m]
        })
        .collect();
    let mut dirichlet = vec![false; 2 * nodes.len()];
    for (e, n) in mesh.boundary.iter().zip(&boundary_nodes) {
        if dirichlet_tags.contains(&e.tag) {
            for &k in n.iter().filter(|&&k| k != usize::MAX) {
                dirichlet[2 * k] = true;
                dirichlet[2 * k + 1] = true;
            }
        }
    }
    Ok(FunctionSpace {
        mesh,
        degree,
        nodes,
        element_nodes,
        boundary_nodes,
        dirichlet_tags: dirichlet_tags.to_vec(),
        dirichlet,
    })
}

/// Port DOFs on the boundary segment `side`.
pub fn extract_port_dofs(space: &FunctionSpace, side: BoundaryTag) -> Result<PortDescriptor> {
    if !space.mesh.has_tag(side) {
        return Err(Error::InvalidArgument(format!("no boundary edges tagged {side}")));
    }
    let mut nodes = space.nodes_on(side);
    nodes.sort_by(|&a, &b| {
        let (p, q) = (space.nodes[a], space.nodes[b]);
        p[1].total_cmp(&q[1]).then(p[0].total_cmp(&q[0]))
    });
    let dofs = nodes.iter().flat_map(|&n| [2 * n, 2 * n + 1]).collect();
    let coords = nodes.iter().map(|&n| space.nodes[n]).collect();
    Ok(PortDescriptor { side, nodes, dofs, coords })
}

impl PortDescriptor {
    pub fn n_dofs(&self) -> usize {
        self.dofs.len()
    }

    pub fn length(&self) -> f64 {
        let (a, b) = (self.coords[0], self.coords[self.coords.len() - 1]);
        ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
    }

    /// Gram matrix of the 1D H1 inner product (value plus tangential derivative) on the port.
    pub fn inner_product(&self, degree: u8) -> Result<Mat<f64>> {
        let n = self.coords.len();
        let step = degree as usize;
        if n < 2 || (n - 1) % step != 0 {
            return invalid(format!("{n} port nodes do not form degree-{degree} edges"));
        }
        let mut g = Mat::<f64>::zeros(2 * n, 2 * n);
        for e in (0..n - 1).step_by(step) {
            // Node order inside an edge element: start, end, midpoint.
            let loc: Vec<usize> = if degree == 1 { vec![e, e + 1] } else { vec![e, e + 2, e + 1] };
            let (a, b) = (self.coords[e], self.coords[e + step]);
            let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            for (s, w) in GAUSS4_UNIT {
                let v = edge_shape_values(degree, s);
                let d = edge_shape_derivs(degree, s);
                for (i, &ni) in loc.iter().enumerate() {
                    for (j, &nj) in loc.iter().enumerate() {
                        let val = w * (len * v[i] * v[j] + d[i] * d[j] / len);
                        for c in 0..2 {
                            g[(2 * ni + c, 2 * nj + c)] += val;
                        }
                    }
                }
            }
        }
        Ok(g)
    }
}
