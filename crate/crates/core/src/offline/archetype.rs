//! Archetype components, reference ports and parameter boxes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fespace::{build_function_space, extract_port_dofs, FunctionSpace, PortDescriptor};
use crate::forms::{build_component_operators, ComponentOperators, LoadParams, MaterialParams};
use crate::mesh::{build_rectangle_mesh, build_tee_mesh, BoundaryTag, TeeDims};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryKind {
    RectWithDirichlet,
    Tee,
    RectFree,
    RectLoaded,
}

/// Closed interval `[lo, hi]`.
pub type Range2 = [f64; 2];

fn sample_in(rng: &mut impl Rng, r: Range2) -> f64 {
    if r[1] > r[0] {
        rng.random_range(r[0]..=r[1])
    } else {
        r[0]
    }
}

fn inside(v: f64, r: Range2) -> bool {
    let tol = 1e-12 * r[0].abs().max(r[1].abs()).max(1e-300);
    v >= r[0] - tol && v <= r[1] + tol
}

/// Local material parameter box. Damping is sampled on `(floor * max, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialBox {
    pub e: Range2,
    pub alpha_max: f64,
    pub beta_max: f64,
    pub rho: f64,
    pub nu: f64,
    #[serde(default = "default_floor")]
    pub damping_floor: f64,
}

fn default_floor() -> f64 {
    1e-3
}

impl MaterialBox {
    pub fn sample(&self, rng: &mut impl Rng) -> MaterialParams {
        MaterialParams {
            e: sample_in(rng, self.e),
            nu: self.nu,
            rho: self.rho,
            alpha: sample_in(rng, [self.damping_floor * self.alpha_max, self.alpha_max]),
            beta: sample_in(rng, [self.damping_floor * self.beta_max, self.beta_max]),
        }
    }

    pub fn contains(&self, m: &MaterialParams) -> bool {
        inside(m.e, self.e)
            && inside(m.alpha, [0.0, self.alpha_max])
            && inside(m.beta, [0.0, self.beta_max])
            && (m.rho - self.rho).abs() <= 1e-12 * self.rho
            && (m.nu - self.nu).abs() <= 1e-12
    }

    pub fn nominal(&self) -> MaterialParams {
        MaterialParams { e: 0.5 * (self.e[0] + self.e[1]), nu: self.nu, rho: self.rho, alpha: 0.0, beta: 0.0 }
    }
}

/// Box of the moving traction parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadBox {
    pub force: Range2,
    pub x_center: Range2,
    pub sigma_x: Range2,
    pub friction: Range2,
}

impl LoadBox {
    pub fn sample(&self, rng: &mut impl Rng) -> LoadParams {
        LoadParams {
            force: sample_in(rng, self.force),
            x_center: sample_in(rng, self.x_center),
            sigma_x: sample_in(rng, self.sigma_x),
            friction: sample_in(rng, self.friction),
            active: true,
        }
    }

    pub fn contains(&self, l: &LoadParams) -> bool {
        inside(l.force, self.force)
            && inside(l.x_center, self.x_center)
            && inside(l.sigma_x, self.sigma_x)
            && inside(l.friction, self.friction)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchetypeSpec {
    pub id: usize,
    pub kind: GeometryKind,
    /// Overall width; for a T this is the flange width.
    pub width: f64,
    pub nx: usize,
    pub ports: Vec<BoundaryTag>,
    pub dirichlet: Vec<BoundaryTag>,
    /// Edge carrying the traction for loaded archetypes.
    #[serde(default)]
    pub load_edge: Option<BoundaryTag>,
}

/// Two archetypes glued left to right: `left`'s `Right` port meets `right`'s `Left` port.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePortSpec {
    pub id: usize,
    pub left: usize,
    pub right: usize,
    pub port_size: usize,
    /// Extra modes trained on traces driven by the actual load.
    #[serde(default)]
    pub inhomogeneity_modes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibrarySpec {
    pub height: f64,
    pub degree: u8,
    pub ny: usize,
    pub material: MaterialBox,
    pub load: LoadBox,
    /// Training frequencies; matches the online frequency grid.
    pub omegas: Vec<f64>,
    pub archetypes: Vec<ArchetypeSpec>,
    pub reference_ports: Vec<ReferencePortSpec>,
}

impl LibrarySpec {
    pub fn archetype(&self, id: usize) -> Result<&ArchetypeSpec> {
        self.archetypes
            .iter()
            .find(|a| a.id == id)
            .ok_or_else(|| Error::InvalidArgument(format!("no archetype {id}")))
    }

    pub fn reference_port(&self, id: usize) -> Result<&ReferencePortSpec> {
        self.reference_ports
            .iter()
            .find(|p| p.id == id)
            .ok_or_else(|| Error::InvalidArgument(format!("no reference port {id}")))
    }

    /// The reference port gluing archetype `left` (on its right side) to `right`.
    pub fn reference_port_for(&self, left: usize, right: usize) -> Option<&ReferencePortSpec> {
        self.reference_ports.iter().find(|p| p.left == left && p.right == right)
    }

    pub fn validate(&self) -> Result<()> {
        if self.omegas.is_empty() || self.omegas.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return invalid("training frequencies must be finite and non-negative");
        }
        if !(self.degree == 1 || self.degree == 2) || self.ny == 0 {
            return invalid(format!("degree {} with ny = {}", self.degree, self.ny));
        }
        for a in &self.archetypes {
            if a.kind == GeometryKind::RectLoaded && a.load_edge.is_none() {
                return invalid(format!("loaded archetype {} has no load edge", a.id));
            }
        }
        for p in &self.reference_ports {
            let (l, r) = (self.archetype(p.left)?, self.archetype(p.right)?);
            if !l.ports.contains(&BoundaryTag::Right) || !r.ports.contains(&BoundaryTag::Left) {
                return invalid(format!("reference port {} joins sides that are not ports", p.id));
            }
        }
        Ok(())
    }
}

/// A meshed archetype with its parameter-independent operators.
#[derive(Debug, Clone)]
pub struct ArchetypeComponent {
    pub spec: ArchetypeSpec,
    pub space: FunctionSpace,
    pub operators: ComponentOperators,
    pub ports: Vec<PortDescriptor>,
    /// Non-Dirichlet DOFs off every port.
    pub interior: Vec<usize>,
}

impl ArchetypeComponent {
    pub fn id(&self) -> usize {
        self.spec.id
    }

    pub fn has_inhomogeneity(&self) -> bool {
        self.spec.load_edge.is_some()
    }

    pub fn port(&self, side: BoundaryTag) -> Result<&PortDescriptor> {
        self.ports
            .iter()
            .find(|p| p.side == side)
            .ok_or_else(|| Error::InvalidArgument(format!("archetype {} has no port {side}", self.spec.id)))
    }

    pub fn width(&self) -> f64 {
        self.spec.width
    }
}

pub fn build_archetype(lib: &LibrarySpec, spec: &ArchetypeSpec) -> Result<ArchetypeComponent> {
    let mesh = match spec.kind {
        GeometryKind::Tee => {
            let dims = TeeDims {
                flange_width: spec.width,
                flange_height: lib.height,
                stem_width: spec.width / 3.0,
                stem_height: lib.height,
            };
            build_tee_mesh(dims, spec.nx, lib.ny)?
        }
        _ => build_rectangle_mesh(spec.width, lib.height, spec.nx, lib.ny)?,
    };
    let space = build_function_space(mesh, lib.degree, &spec.dirichlet)?;
    let operators = build_component_operators(&space, lib.material.nu)?;
    let ports = spec.ports.iter().map(|&t| extract_port_dofs(&space, t)).collect::<Result<Vec<_>>>()?;
    let mut on_port = vec![false; space.n_dofs()];
    for p in &ports {
        for &d in &p.dofs {
            on_port[d] = true;
        }
    }
    let interior = (0..space.n_dofs()).filter(|&d| !on_port[d] && !space.is_dirichlet(d)).collect();
    Ok(ArchetypeComponent { spec: spec.clone(), space, operators, ports, interior })
}

/// Library of the bridge benchmark: end span, T pier, plain deck and loaded deck.
///
/// `nx_per_length` cells per deck length `length`, `ny` cells through the height.
pub fn bridge_library_spec(
    length: f64,
    height: f64,
    nx_per_length: usize,
    ny: usize,
    material: MaterialBox,
    load: LoadBox,
    omegas: Vec<f64>,
) -> Result<LibrarySpec> {
    if nx_per_length % 2 != 0 {
        return invalid("the T stem needs an even number of cells per deck length");
    }
    use BoundaryTag::*;
    let wide = 3 * nx_per_length / 2;
    let arch = |id, kind, width, nx, ports: Vec<BoundaryTag>, dirichlet: Vec<BoundaryTag>, load_edge| ArchetypeSpec {
        id,
        kind,
        width,
        nx,
        ports,
        dirichlet,
        load_edge,
    };
    let spec = LibrarySpec {
        height,
        degree: 2,
        ny,
        material,
        load,
        omegas,
        archetypes: vec![
            arch(1, GeometryKind::RectWithDirichlet, 1.5 * length, wide, vec![Right], vec![Left], None),
            arch(2, GeometryKind::Tee, 1.5 * length, wide, vec![Left, Right], vec![StemBottom], None),
            arch(3, GeometryKind::RectFree, length, nx_per_length, vec![Left, Right], vec![], None),
            arch(4, GeometryKind::RectLoaded, length, nx_per_length, vec![Left, Right], vec![], Some(Top)),
        ],
        reference_ports: vec![
            ReferencePortSpec { id: 1, left: 1, right: 2, port_size: 10, inhomogeneity_modes: 0 },
            ReferencePortSpec { id: 2, left: 3, right: 4, port_size: 10, inhomogeneity_modes: 2 },
            ReferencePortSpec { id: 3, left: 2, right: 3, port_size: 10, inhomogeneity_modes: 0 },
        ],
    };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn boxes() -> (MaterialBox, LoadBox) {
        (
            MaterialBox { e: [0.75, 1.25], alpha_max: 1.0, beta_max: 2.0, rho: 1.0, nu: 0.3, damping_floor: 1e-3 },
            LoadBox { force: [-2.0, -1.0], x_center: [2.4, 2.6], sigma_x: [0.02, 0.04], friction: [0.5, 0.7] },
        )
    }

    #[test]
    fn samples_stay_in_box() {
        let (m, l) = boxes();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let s = m.sample(&mut rng);
            assert!(m.contains(&s) && s.alpha > 0.0 && s.beta > 0.0);
            assert!(l.contains(&l.sample(&mut rng)));
        }
    }

    #[test]
    fn bridge_archetypes_have_matching_ports() {
        let (m, l) = boxes();
        let spec = bridge_library_spec(5.0, 1.0, 4, 2, m, l, vec![0.0, 1.0]).unwrap();
        let comps: Vec<_> = spec.archetypes.iter().map(|a| build_archetype(&spec, a).unwrap()).collect();
        let n = comps[0].port(BoundaryTag::Right).unwrap().n_dofs();
        for c in &comps {
            for p in &c.ports {
                assert_eq!(p.n_dofs(), n);
            }
            assert!(c.interior.iter().all(|&d| !c.space.is_dirichlet(d)));
        }
        assert!(comps[3].has_inhomogeneity() && !comps[2].has_inhomogeneity());
        assert!(bridge_library_spec(5.0, 1.0, 3, 2, m, l, vec![0.0]).is_err());
    }
}
