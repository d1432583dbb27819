//! Gluing component spaces into one conforming FE space.
//!
//! Each component is an archetype space placed by a translation and an
//! optional reflection about its vertical center line. Nodes that coincide
//! on declared interfaces are merged; any other coincidence is a geometry
//! error. A local DOF value equals `sign * global value`, where `sign` is -1
//! on x components of reflected components.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fespace::{extract_port_dofs, FunctionSpace};
use crate::linalg::{for_each_entry, SpMat, TripletBuilder};
use crate::mesh::BoundaryTag;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub offset: [f64; 2],
    #[serde(default)]
    pub mirrored: bool,
}

impl Placement {
    pub fn at(x: f64, y: f64) -> Self {
        Placement { offset: [x, y], mirrored: false }
    }

    pub fn mirrored_at(x: f64, y: f64) -> Self {
        Placement { offset: [x, y], mirrored: true }
    }
}

/// One component handed to [`MultiComponentSpace::build`].
pub struct ComponentInput<'a> {
    pub space: &'a FunctionSpace,
    pub placement: Placement,
    /// Archetype-frame tags of the boundary segments that act as ports.
    pub ports: &'a [BoundaryTag],
}

/// Two component ports glued together (archetype-frame tags).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interface {
    pub a: (usize, BoundaryTag),
    pub b: (usize, BoundaryTag),
}

/// Treatment of ports that take part in no interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpenPorts {
    Clamp,
    Free,
}

#[derive(Debug, Clone)]
pub struct MultiComponentSpace {
    pub node_coords: Vec<[f64; 2]>,
    /// Per component: local DOF to `(global DOF, sign)`.
    pub comp_maps: Vec<Vec<(usize, f64)>>,
    pub constrained: Vec<bool>,
    /// Global DOF to free index, `usize::MAX` when constrained.
    pub free_index: Vec<usize>,
    pub free_dofs: Vec<usize>,
    /// Per interface: global DOFs in port order (by y, x before y).
    pub interface_dofs: Vec<Vec<usize>>,
}

/// Physical position of archetype-frame point `p`.
pub fn place_point(space: &FunctionSpace, pl: &Placement, p: [f64; 2]) -> [f64; 2] {
    let b = space.mesh.bounds();
    let x = if pl.mirrored { b[0] + b[2] - p[0] } else { p[0] };
    [x + pl.offset[0], p[1] + pl.offset[1]]
}

/// The archetype-frame tag that appears on the physical side `tag` after placement.
pub fn physical_tag(tag: BoundaryTag, pl: &Placement) -> BoundaryTag {
    if pl.mirrored {
        tag.mirrored()
    } else {
        tag
    }
}

fn key(p: [f64; 2]) -> (i64, i64) {
    ((p[0] * 1e7).round() as i64, (p[1] * 1e7).round() as i64)
}

impl MultiComponentSpace {
    pub fn build(comps: &[ComponentInput<'_>], interfaces: &[Interface], open: OpenPorts) -> Result<Self> {
        let mut node_of: HashMap<(i64, i64), usize> = HashMap::new();
        let mut node_coords = Vec::new();
        let mut owners: Vec<Vec<usize>> = Vec::new();
        let mut node_maps = Vec::with_capacity(comps.len());
        for (ci, c) in comps.iter().enumerate() {
            let mut map = Vec::with_capacity(c.space.n_nodes());
            for p in &c.space.nodes {
                let q = place_point(c.space, &c.placement, *p);
                let g = *node_of.entry(key(q)).or_insert_with(|| {
                    node_coords.push(q);
                    owners.push(Vec::new());
                    node_coords.len() - 1
                });
                if owners[g].contains(&ci) {
                    return Err(Error::GeometryMismatch(format!("component {ci} has coincident nodes")));
                }
                owners[g].push(ci);
                map.push(g);
            }
            node_maps.push(map);
        }

        let mut glued: std::collections::HashSet<(usize, usize)> = Default::default();
        let mut interface_dofs = Vec::with_capacity(interfaces.len());
        for itf in interfaces {
            let mut sides = Vec::new();
            for &(ci, tag) in [itf.a, itf.b].iter() {
                let c = comps.get(ci).ok_or_else(|| Error::InvalidArgument(format!("no component {ci}")))?;
                if !c.ports.contains(&tag) {
                    return Err(Error::InvalidArgument(format!("{tag} is not a port of component {ci}")));
                }
                let port = extract_port_dofs(c.space, tag)?;
                let nodes: Vec<usize> = port.nodes.iter().map(|&n| node_maps[ci][n]).collect();
                sides.push((ci, nodes));
            }
            let (a, b) = (&sides[0].1, &sides[1].1);
            if a != b {
                return Err(Error::GeometryMismatch(format!(
                    "ports {:?} and {:?} do not share their nodes",
                    itf.a, itf.b
                )));
            }
            for &g in a {
                glued.insert((g, sides[0].0.min(sides[1].0)));
            }
            interface_dofs.push(a.iter().flat_map(|&g| [2 * g, 2 * g + 1]).collect());
        }
        for (g, o) in owners.iter().enumerate() {
            match o.len() {
                1 => {}
                2 if glued.contains(&(g, o[0].min(o[1]))) => {}
                _ => {
                    return Err(Error::GeometryMismatch(format!(
                        "node at {:?} shared by components {:?} outside a declared interface",
                        node_coords[g], o
                    )))
                }
            }
        }

        let n_dofs = 2 * node_coords.len();
        let mut constrained = vec![false; n_dofs];
        let mut comp_maps = Vec::with_capacity(comps.len());
        for (ci, c) in comps.iter().enumerate() {
            let map: Vec<(usize, f64)> = (0..c.space.n_dofs())
                .map(|d| {
                    let sign = if c.placement.mirrored && d % 2 == 0 { -1.0 } else { 1.0 };
                    (2 * node_maps[ci][d / 2] + d % 2, sign)
                })
                .collect();
            for d in c.space.dirichlet_dofs() {
                constrained[map[d].0] = true;
            }
            if open == OpenPorts::Clamp {
                for &tag in c.ports {
                    let used = interfaces.iter().any(|i| i.a == (ci, tag) || i.b == (ci, tag));
                    if !used {
                        for d in c.space.dofs_on(tag) {
                            constrained[map[d].0] = true;
                        }
                    }
                }
            }
            comp_maps.push(map);
        }
        let mut free_index = vec![usize::MAX; n_dofs];
        let mut free_dofs = Vec::new();
        for d in 0..n_dofs {
            if !constrained[d] {
                free_index[d] = free_dofs.len();
                free_dofs.push(d);
            }
        }
        Ok(MultiComponentSpace { node_coords, comp_maps, constrained, free_index, free_dofs, interface_dofs })
    }

    pub fn n_dofs(&self) -> usize {
        self.constrained.len()
    }

    pub fn n_free(&self) -> usize {
        self.free_dofs.len()
    }

    /// Embeds a local matrix into the free-DOF global matrix.
    pub fn embed_matrix(&self, comp: usize, local: &SpMat) -> Result<SpMat> {
        let n = self.n_free();
        let map = &self.comp_maps[comp];
        let mut b = TripletBuilder::with_capacity(n, n, local.val().len());
        for_each_entry(local, |i, j, v| {
            let (gi, si) = map[i];
            let (gj, sj) = map[j];
            let (fi, fj) = (self.free_index[gi], self.free_index[gj]);
            if fi != usize::MAX && fj != usize::MAX {
                b.push(fi, fj, si * sj * v);
            }
        });
        b.build()
    }

    /// Adds a local vector into a free-DOF global vector.
    pub fn embed_vector_add<T: crate::linalg::Scalar>(&self, comp: usize, local: &[T], global: &mut [T]) {
        for (d, &(g, s)) in self.comp_maps[comp].iter().enumerate() {
            let f = self.free_index[g];
            if f != usize::MAX {
                global[f] += local[d].scale(s);
            }
        }
    }

    /// Local values of component `comp` from a free-DOF global vector.
    pub fn restrict_vector<T: crate::linalg::Scalar>(&self, comp: usize, global: &[T]) -> Vec<T> {
        self.comp_maps[comp]
            .iter()
            .map(|&(g, s)| {
                let f = self.free_index[g];
                if f == usize::MAX {
                    T::zero()
                } else {
                    global[f].scale(s)
                }
            })
            .collect()
    }

    /// Free indices of global DOFs; errors if any is constrained.
    pub fn free_of(&self, dofs: &[usize]) -> Result<Vec<usize>> {
        dofs.iter()
            .map(|&d| {
                let f = self.free_index[d];
                if f == usize::MAX {
                    Err(Error::InvalidArgument(format!("global DOF {d} is constrained")))
                } else {
                    Ok(f)
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fespace::build_function_space;
    use crate::forms::assemble_mass;
    use crate::linalg::apply_real;
    use crate::mesh::build_rectangle_mesh;

    fn rect(nx: usize) -> FunctionSpace {
        build_function_space(build_rectangle_mesh(5.0, 1.0, nx, 2).unwrap(), 2, &[]).unwrap()
    }

    const LR: [BoundaryTag; 2] = [BoundaryTag::Left, BoundaryTag::Right];

    #[test]
    fn two_rectangles_share_one_port() {
        let (a, b) = (rect(4), rect(4));
        let comps = [
            ComponentInput { space: &a, placement: Placement::at(0.0, 0.0), ports: &LR },
            ComponentInput { space: &b, placement: Placement::at(5.0, 0.0), ports: &LR },
        ];
        let itf = [Interface { a: (0, BoundaryTag::Right), b: (1, BoundaryTag::Left) }];
        let g = MultiComponentSpace::build(&comps, &itf, OpenPorts::Free).unwrap();
        assert_eq!(g.n_dofs(), a.n_dofs() + b.n_dofs() - 10);
        // Total mass of the glued body is its area.
        let mut m = g.embed_matrix(0, &assemble_mass(&a, 1.0).unwrap()).unwrap();
        let mb = g.embed_matrix(1, &assemble_mass(&b, 1.0).unwrap()).unwrap();
        m = crate::linalg::combine_real(&[(1.0, &m), (1.0, &mb)]).unwrap();
        let ones: Vec<f64> = (0..g.n_free()).map(|k| if k % 2 == 0 { 1.0 } else { 0.0 }).collect();
        let total: f64 = apply_real(&m, &ones).iter().zip(&ones).map(|(p, q)| p * q).sum();
        assert!((total - 10.0).abs() < 1e-12);
        let clamped = MultiComponentSpace::build(&comps, &itf, OpenPorts::Clamp).unwrap();
        assert_eq!(clamped.n_free(), g.n_free() - 20);
    }

    #[test]
    fn mismatched_ports_are_rejected() {
        let a = rect(4);
        let b = build_function_space(build_rectangle_mesh(5.0, 1.0, 4, 3).unwrap(), 2, &[]).unwrap();
        let comps = [
            ComponentInput { space: &a, placement: Placement::at(0.0, 0.0), ports: &LR },
            ComponentInput { space: &b, placement: Placement::at(5.0, 0.0), ports: &LR },
        ];
        let itf = [Interface { a: (0, BoundaryTag::Right), b: (1, BoundaryTag::Left) }];
        assert!(matches!(
            MultiComponentSpace::build(&comps, &itf, OpenPorts::Free),
            Err(Error::GeometryMismatch(_))
        ));
        let overlapping = [
            ComponentInput { space: &a, placement: Placement::at(0.0, 0.0), ports: &LR },
            ComponentInput { space: &a, placement: Placement::at(5.0, 0.0), ports: &LR },
        ];
        assert!(matches!(
            MultiComponentSpace::build(&overlapping, &[], OpenPorts::Free),
            Err(Error::GeometryMismatch(_))
        ));
    }

    #[test]
    fn mirrored_component_flips_x_sign() {
        let a = rect(4);
        let comps = [ComponentInput { space: &a, placement: Placement::mirrored_at(0.0, 0.0), ports: &LR }];
        let g = MultiComponentSpace::build(&comps, &[], OpenPorts::Free).unwrap();
        // A local rigid translation in +x is a global translation in -x.
        let local: Vec<f64> = (0..a.n_dofs()).map(|d| if d % 2 == 0 { 1.0 } else { 0.0 }).collect();
        let mut global = vec![0.0; g.n_free()];
        g.embed_vector_add(0, &local, &mut global);
        assert!(global.iter().step_by(2).all(|v| *v == -1.0));
        assert_eq!(g.restrict_vector(0, &global), local);
        let left_local = a.nodes_on(BoundaryTag::Left)[0];
        let p = place_point(&a, &comps[0].placement, a.nodes[left_local]);
        assert!((p[0] - 5.0).abs() < 1e-12);
    }
}
