//! Online stage: instantiate a system from the library, condense the bubbles,
//! solve the port Schur complement and map coefficients back to FE vectors.
//!
//! Column layout of `Z`: port modes first (these are also the Schur unknowns),
//! then the lifting bubbles of every (port, mode, member), then the
//! inhomogeneity bubbles of every loaded component.

use std::path::Path;
use std::sync::Arc;

use faer::Mat;
use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Error, Result};
use crate::forms::{traction_load_entries, LoadParams, MaterialParams, TimeSignature};
use crate::linalg::{
    apply, apply_real, c64, combine_complex, combine_real, energy_norm, for_each_entry, norm2, write_matrix_market,
    CSpMat, DenseLu, SparseLu, SpMat, TripletBuilder,
};
use crate::mesh::BoundaryTag;
use crate::multicomp::{physical_tag, ComponentInput, Interface, MultiComponentSpace, OpenPorts, Placement};
use crate::offline::{ComponentProjections, LiftingVariant, TrainedLibrary};
use crate::truth::solve_frequency_fe;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacedComponent {
    pub archetype: usize,
    pub placement: Placement,
}

/// Two components glued along their physical sides `a.1` and `b.1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Connection {
    pub a: (usize, BoundaryTag),
    pub b: (usize, BoundaryTag),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemLayout {
    pub components: Vec<PlacedComponent>,
    pub connections: Vec<Connection>,
}

impl SystemLayout {
    /// Left-to-right chain with consecutive components connected.
    pub fn chain(items: &[(usize, Placement)]) -> Self {
        let components = items.iter().map(|&(archetype, placement)| PlacedComponent { archetype, placement }).collect();
        let connections = (1..items.len())
            .map(|i| Connection { a: (i - 1, BoundaryTag::Right), b: (i, BoundaryTag::Left) })
            .collect();
        SystemLayout { components, connections }
    }
}

/// Local parameters of one instantiated component. The load is given in the
/// physical orientation, with `x_center` measured from the component's left end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentParams {
    pub material: MaterialParams,
    #[serde(default)]
    pub load: Option<LoadParams>,
    /// Time profile of the load; only the time-domain problem uses it.
    #[serde(default)]
    pub signature: Option<TimeSignature>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub components: Vec<ComponentParams>,
}

impl SystemParams {
    pub fn uniform(n: usize, material: MaterialParams) -> Self {
        SystemParams { components: vec![ComponentParams { material, load: None, signature: None }; n] }
    }

    fn active_load(&self, c: usize) -> Option<&LoadParams> {
        self.components[c].load.as_ref().filter(|l| l.active)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    #[default]
    PetrovGalerkin,
    Galerkin,
}

/// One side of a global port.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PortMember {
    pub component: usize,
    /// Index into the archetype's trained variants.
    pub variant: usize,
    pub local_side: BoundaryTag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PortInstance {
    pub reference_port: usize,
    /// Physical traces are the canonical modes reflected when set.
    pub mirrored: bool,
    pub members: [PortMember; 2],
    pub n_modes: usize,
    /// First Schur row (and `Z` column) of the port.
    pub offset: usize,
    /// First `Z` column of the lifting bubbles of `[mode][member]`.
    pub bubble_offsets: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentInstance {
    pub archetype: usize,
    pub placement: Placement,
    /// `(port, member slot)` for every connected port.
    pub ports: Vec<(usize, usize)>,
    pub inhomogeneity_offset: Option<usize>,
}

pub struct SystemModel {
    pub library: Arc<TrainedLibrary>,
    pub layout: SystemLayout,
    pub glue: MultiComponentSpace,
    pub components: Vec<ComponentInstance>,
    pub ports: Vec<PortInstance>,
    pub n_schur: usize,
    /// `n_free x N_hD` PR-RBC basis in FE coefficients.
    pub z: SpMat,
    /// Embedded unit mass and unit stiffness per component.
    pub mass_unit: Vec<SpMat>,
    pub stiffness_unit: Vec<SpMat>,
    /// Global H1 Gram on the free DOFs.
    pub h1: SpMat,
    /// Per archetype position of each local DOF in the projections' load rows.
    load_pos: Vec<(usize, Vec<usize>)>,
}

fn projections<'a>(lib: &'a TrainedLibrary, archetype: usize) -> Result<&'a ComponentProjections> {
    lib.training(archetype)?
        .projections
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument(format!("archetype {archetype} has no projections")))
}

pub fn instantiate_system(layout: &SystemLayout, library: Arc<TrainedLibrary>) -> Result<SystemModel> {
    let lib = &*library;
    let n_comp = layout.components.len();
    if n_comp == 0 {
        return invalid("a system needs at least one component");
    }
    let archs = layout
        .components
        .iter()
        .map(|c| lib.archetype(c.archetype))
        .collect::<Result<Vec<_>>>()?;
    let inputs: Vec<ComponentInput<'_>> = archs
        .iter()
        .zip(&layout.components)
        .map(|(a, c)| ComponentInput { space: &a.space, placement: c.placement, ports: &a.spec.ports })
        .collect();
    let mut used = std::collections::HashSet::new();
    let mut interfaces = Vec::new();
    for conn in &layout.connections {
        let mut itf = [(0, BoundaryTag::Left); 2];
        for (slot, &(c, side)) in [conn.a, conn.b].iter().enumerate() {
            let pc = layout
                .components
                .get(c)
                .ok_or_else(|| Error::InvalidArgument(format!("connection names component {c}")))?;
            let local = physical_tag(side, &pc.placement);
            if !used.insert((c, local)) {
                return Err(Error::GeometryMismatch(format!("port {side} of component {c} connected twice")));
            }
            itf[slot] = (c, local);
        }
        interfaces.push(Interface { a: itf[0], b: itf[1] });
    }
    let glue = MultiComponentSpace::build(&inputs, &interfaces, OpenPorts::Clamp)?;

    let mut components: Vec<ComponentInstance> = layout
        .components
        .iter()
        .map(|c| ComponentInstance { archetype: c.archetype, placement: c.placement, ports: vec![], inhomogeneity_offset: None })
        .collect();
    let mut ports = Vec::new();
    let mut offset = 0;
    for (pi, conn) in layout.connections.iter().enumerate() {
        // Physical left member first.
        let (l, r) = match (conn.a.1, conn.b.1) {
            (BoundaryTag::Right, BoundaryTag::Left) => (conn.a.0, conn.b.0),
            (BoundaryTag::Left, BoundaryTag::Right) => (conn.b.0, conn.a.0),
            (x, y) => return invalid(format!("cannot connect physical sides {x} and {y}")),
        };
        let (al, ar) = (layout.components[l].archetype, layout.components[r].archetype);
        let (rp, mirrored) = if let Some(p) = lib.spec.reference_port_for(al, ar) {
            (p, false)
        } else if let Some(p) = lib.spec.reference_port_for(ar, al) {
            (p, true)
        } else {
            return Err(Error::InvalidArgument(format!("no reference port joins archetypes {al} and {ar}")));
        };
        let ps = lib.port_space(rp.id)?;
        let mut members = [PortMember { component: 0, variant: 0, local_side: BoundaryTag::Left }; 2];
        for (slot, (c, phys)) in [(l, BoundaryTag::Right), (r, BoundaryTag::Left)].into_iter().enumerate() {
            let pl = layout.components[c].placement;
            let local_side = physical_tag(phys, &pl);
            let want = LiftingVariant { side: local_side, reference_port: rp.id, flip: pl.mirrored ^ mirrored };
            let variant = lib.training(layout.components[c].archetype)?.variant_index(&want).ok_or_else(|| {
                Error::InvalidArgument(format!("archetype {} has no trained variant {want:?}", layout.components[c].archetype))
            })?;
            members[slot] = PortMember { component: c, variant, local_side };
            components[c].ports.push((pi, slot));
        }
        ports.push(PortInstance {
            reference_port: rp.id,
            mirrored,
            members,
            n_modes: ps.n_modes(),
            offset,
            bubble_offsets: vec![],
        });
        offset += ps.n_modes();
    }
    let n_schur = offset;
    let mut next = n_schur;
    for p in ports.iter_mut() {
        let mut offs = Vec::with_capacity(p.n_modes);
        for k in 0..p.n_modes {
            let mut pair = [0; 2];
            for (slot, m) in p.members.iter().enumerate() {
                pair[slot] = next;
                let proj = projections(lib, components[m.component].archetype)?;
                next += proj.layout.bubbles[m.variant][k].len();
            }
            offs.push(pair);
        }
        p.bubble_offsets = offs;
    }
    for (c, inst) in components.iter_mut().enumerate() {
        let tr = lib.training(inst.archetype)?;
        if let Some(b) = &tr.inhomogeneity {
            inst.inhomogeneity_offset = Some(next);
            next += b.n_modes();
        }
        if tr.inhomogeneity.is_none() && archs[c].has_inhomogeneity() {
            return Err(Error::InvalidArgument(format!("archetype {} lacks inhomogeneity bubbles", inst.archetype)));
        }
    }
    let n_cols = next;

    // Z columns.
    let n_free = glue.n_free();
    let mut zb = TripletBuilder::new(n_free, n_cols);
    let push_local = |zb: &mut TripletBuilder<f64>, comp: usize, col: usize, v: &[f64], skip: &[usize]| {
        for (d, &x) in v.iter().enumerate() {
            if x == 0.0 || skip.contains(&d) {
                continue;
            }
            let (g, s) = glue.comp_maps[comp][d];
            let f = glue.free_index[g];
            if f != usize::MAX {
                zb.push(f, col, s * x);
            }
        }
    };
    for p in &ports {
        for k in 0..p.n_modes {
            for (slot, m) in p.members.iter().enumerate() {
                let arch = archs[m.component];
                let tr = lib.training(arch.id())?;
                let vd = &tr.variants[m.variant];
                let psi = vd.liftings.col_as_slice(k);
                // The shared trace is written once, by the first member.
                let skip: Vec<usize> = if slot == 1 { arch.port(m.local_side)?.dofs.clone() } else { vec![] };
                push_local(&mut zb, m.component, p.offset + k, psi, &skip);
                let b = &vd.bubbles[k];
                for j in 0..b.n_modes() {
                    push_local(&mut zb, m.component, p.bubble_offsets[k][slot] + j, b.modes.col_as_slice(j), &[]);
                }
            }
        }
    }
    for (c, inst) in components.iter().enumerate() {
        if let (Some(off), Some(b)) = (inst.inhomogeneity_offset, &lib.training(inst.archetype)?.inhomogeneity) {
            for j in 0..b.n_modes() {
                push_local(&mut zb, c, off + j, b.modes.col_as_slice(j), &[]);
            }
        }
    }
    let z = zb.build()?;

    let mut mass_unit = Vec::with_capacity(n_comp);
    let mut stiffness_unit = Vec::with_capacity(n_comp);
    let mut h1_parts = Vec::with_capacity(n_comp);
    for (c, a) in archs.iter().enumerate() {
        mass_unit.push(glue.embed_matrix(c, &a.operators.mass_unit)?);
        stiffness_unit.push(glue.embed_matrix(c, &a.operators.stiffness_unit)?);
        h1_parts.push(glue.embed_matrix(c, &a.operators.h1)?);
    }
    let h1 = combine_real(&h1_parts.iter().map(|m| (1.0, m)).collect::<Vec<_>>())?;
    let mut load_pos = Vec::new();
    for a in &lib.archetypes {
        let proj = projections(lib, a.id())?;
        let mut pos = vec![usize::MAX; a.space.n_dofs()];
        for (k, &d) in proj.load_dofs.iter().enumerate() {
            pos[d] = k;
        }
        load_pos.push((a.id(), pos));
    }
    Ok(SystemModel {
        library,
        layout: layout.clone(),
        glue,
        components,
        ports,
        n_schur,
        z,
        mass_unit,
        stiffness_unit,
        h1,
        load_pos,
    })
}

/// Entries of `theta_M G_M + theta_A G_K` on demand.
struct ReducedOp<'a> {
    proj: &'a ComponentProjections,
    tm: c64,
    ta: c64,
}

impl ReducedOp<'_> {
    #[inline]
    fn at(&self, i: usize, j: usize) -> c64 {
        self.tm * self.proj.mass[(i, j)] + self.ta * self.proj.stiffness[(i, j)]
    }

    fn block(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Mat<c64> {
        Mat::from_fn(rows.len(), cols.len(), |i, j| self.at(rows.start + i, cols.start + j))
    }
}

/// Bubble coefficients of one component at one parameter value.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentBubbles {
    /// `[attached port][mode]` lifting-bubble coefficients per unit port coefficient.
    pub lifting: Vec<Vec<Vec<c64>>>,
    pub inhomogeneity: Option<Vec<c64>>,
    /// Projected load on the component function set.
    pub load: Option<Vec<c64>>,
    pub max_factorized: usize,
}

impl SystemModel {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn n_free(&self) -> usize {
        self.glue.n_free()
    }

    /// `N_hD`, the number of PR-RBC basis functions.
    pub fn n_basis(&self) -> usize {
        self.z.ncols()
    }

    fn projections(&self, c: usize) -> Result<&ComponentProjections> {
        projections(&self.library, self.components[c].archetype)
    }

    fn check_params(&self, params: &SystemParams) -> Result<()> {
        check_len("component parameters", params.components.len(), self.n_components())?;
        for p in &params.components {
            p.material.validate()?;
            if let Some(l) = &p.load {
                if l.active && !(l.sigma_x > 0.0) {
                    return Err(Error::ParameterOutOfRange(format!("load width {}", l.sigma_x)));
                }
            }
        }
        Ok(())
    }

    /// Load of component `c` in its archetype frame, or an error if it cannot carry one.
    fn archetype_load(&self, c: usize, load: &LoadParams) -> Result<(LoadParams, BoundaryTag)> {
        let arch = self.library.archetype(self.components[c].archetype)?;
        let Some(edge) = arch.spec.load_edge else {
            return invalid(format!("component {c} (archetype {}) cannot carry a load", arch.id()));
        };
        let l = if self.components[c].placement.mirrored { load.mirrored(arch.width()) } else { *load };
        Ok((l, edge))
    }

    /// Per loaded component: its load vector on the free DOFs.
    pub fn fe_loads(&self, params: &SystemParams) -> Result<Vec<(usize, Vec<f64>)>> {
        self.check_params(params)?;
        let mut out = Vec::new();
        for c in 0..self.n_components() {
            if let Some(load) = params.active_load(c) {
                let (l, edge) = self.archetype_load(c, load)?;
                let arch = self.library.archetype(self.components[c].archetype)?;
                let local = crate::forms::assemble_traction_load(&arch.space, &l, edge)?;
                let mut g = vec![0.0; self.n_free()];
                self.glue.embed_vector_add(c, &local, &mut g);
                out.push((c, g));
            }
        }
        Ok(out)
    }

    /// Global mass, damping and stiffness on the free DOFs.
    pub fn fe_operators(&self, params: &SystemParams) -> Result<[SpMat; 3]> {
        self.check_params(params)?;
        let mut m = Vec::new();
        let mut c = Vec::new();
        let mut k = Vec::new();
        for (i, p) in params.components.iter().enumerate() {
            let mat = &p.material;
            m.push((mat.rho, &self.mass_unit[i]));
            k.push((mat.e, &self.stiffness_unit[i]));
            c.push((mat.alpha * mat.rho, &self.mass_unit[i]));
            c.push((mat.beta * mat.e, &self.stiffness_unit[i]));
        }
        Ok([combine_real(&m)?, combine_real(&c)?, combine_real(&k)?])
    }

    /// Monolithic frequency operator with the affine split per component.
    pub fn fe_frequency_operator(&self, params: &SystemParams, omega: f64) -> Result<CSpMat> {
        self.check_params(params)?;
        let mut terms = Vec::new();
        for (i, p) in params.components.iter().enumerate() {
            let [tm, ta] = p.material.affine_coefficients(omega);
            terms.push((tm, &self.mass_unit[i]));
            terms.push((ta, &self.stiffness_unit[i]));
        }
        combine_complex(&terms)
    }

    /// Monolithic frequency solution with a unit time transform on every load.
    pub fn solve_fe_frequency(&self, params: &SystemParams, omega: f64) -> Result<Vec<c64>> {
        let a = self.fe_frequency_operator(params, omega)?;
        let mut f = vec![c64::new(0.0, 0.0); self.n_free()];
        for (_, g) in self.fe_loads(params)? {
            f.iter_mut().zip(&g).for_each(|(a, b)| a.re += b);
        }
        solve_frequency_fe(&a, &f)
    }

    pub fn h1_norm(&self, u: &[c64]) -> f64 {
        energy_norm(&self.h1, u)
    }

    /// Components whose DOFs carry nonzeros of `Z` column `j`.
    pub fn z_column_support(&self, j: usize) -> Vec<usize> {
        let mut owners: Vec<Vec<usize>> = vec![Vec::new(); self.n_free()];
        for (c, map) in self.glue.comp_maps.iter().enumerate() {
            for &(g, _) in map {
                let f = self.glue.free_index[g];
                if f != usize::MAX && !owners[f].contains(&c) {
                    owners[f].push(c);
                }
            }
        }
        let cp = self.z.symbolic().col_ptr();
        let ri = self.z.symbolic().row_idx();
        let mut out: Vec<usize> = Vec::new();
        for p in cp[j]..cp[j + 1] {
            if self.z.val()[p] != 0.0 {
                for &c in &owners[ri[p]] {
                    if !out.contains(&c) {
                        out.push(c);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Largest number of components touched by any column of `Z`.
    pub fn max_z_support(&self) -> usize {
        let mut owners: Vec<u64> = vec![0; self.n_free()];
        for (c, map) in self.glue.comp_maps.iter().enumerate() {
            for &(g, _) in map {
                let f = self.glue.free_index[g];
                if f != usize::MAX {
                    owners[f] |= 1u64 << (c % 64);
                }
            }
        }
        let cp = self.z.symbolic().col_ptr();
        let ri = self.z.symbolic().row_idx();
        (0..self.z.ncols())
            .map(|j| {
                let mask = (cp[j]..cp[j + 1])
                    .filter(|&p| self.z.val()[p] != 0.0)
                    .fold(0u64, |m, p| m | owners[ri[p]]);
                mask.count_ones() as usize
            })
            .max()
            .unwrap_or(0)
    }

    pub fn z_density(&self) -> f64 {
        let nnz = self.z.val().iter().filter(|v| **v != 0.0).count();
        nnz as f64 / (self.z.nrows() as f64 * self.z.ncols().max(1) as f64)
    }

    /// Port that owns Schur row `i`.
    pub fn port_of_row(&self, i: usize) -> usize {
        self.ports.iter().position(|p| i >= p.offset && i < p.offset + p.n_modes).expect("row inside the Schur system")
    }

    /// Whether ports `p` and `q` share a component.
    pub fn ports_adjacent(&self, p: usize, q: usize) -> bool {
        let a = &self.ports[p].members;
        let b = &self.ports[q].members;
        a.iter().any(|x| b.iter().any(|y| x.component == y.component))
    }

    /// Rows picking displacement component `comp` at the mesh nodes nearest to `points`.
    pub fn nodal_sampler(&self, points: &[[f64; 2]], comp: usize) -> Result<SpMat> {
        if comp > 1 {
            return invalid(format!("displacement component {comp}"));
        }
        let mut b = TripletBuilder::new(points.len(), self.n_free());
        for (r, p) in points.iter().enumerate() {
            let (node, d2) = self
                .glue
                .node_coords
                .iter()
                .enumerate()
                .map(|(i, q)| (i, (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .ok_or_else(|| Error::InvalidArgument("system has no nodes".into()))?;
            if d2.sqrt() > 1e-9 * (1.0 + p[0].abs() + p[1].abs()) {
                return Err(Error::GeometryMismatch(format!("no mesh node at {p:?}")));
            }
            let f = self.glue.free_index[2 * node + comp];
            if f == usize::MAX {
                return invalid(format!("output point {p:?} is constrained"));
            }
            b.push(r, f, 1.0);
        }
        b.build()
    }

    /// Fraction of nonzero entries in an assembled Schur complement.
    pub fn schur_density(schur: &SchurSystem) -> f64 {
        let nnz = schur.matrix.val().iter().filter(|v| v.norm() != 0.0).count();
        let n = schur.matrix.nrows().max(1) as f64;
        nnz as f64 / (n * n)
    }

    pub fn export_z(&self, path: &Path) -> Result<()> {
        write_matrix_market(path, &self.z)
    }
}

/// Solves the small bubble problems of component `comp`.
pub fn solve_component_bubbles(
    sys: &SystemModel,
    comp: usize,
    params: &ComponentParams,
    omega: f64,
) -> Result<ComponentBubbles> {
    params.material.validate()?;
    let proj = sys.projections(comp)?;
    let lay = &proj.layout;
    let [tm, ta] = params.material.affine_coefficients(omega);
    let op = ReducedOp { proj, tm, ta };
    let mut max_factorized = 0;
    let mut lifting = Vec::new();
    for &(p, slot) in &sys.components[comp].ports {
        let port = &sys.ports[p];
        let v = port.members[slot].variant;
        let mut per_mode = Vec::with_capacity(port.n_modes);
        for k in 0..port.n_modes {
            let b = lay.bubbles[v][k].clone();
            let psi = lay.liftings[v].start + k;
            if b.is_empty() {
                per_mode.push(vec![]);
                continue;
            }
            let abb = op.block(b.clone(), b.clone());
            max_factorized = max_factorized.max(b.len());
            let lu = DenseLu::new(&abb).map_err(|e| {
                Error::Singular(format!("lifting bubbles of component {comp}, port {p}, mode {k}: {e}"))
            })?;
            let rhs: Vec<c64> = b.clone().map(|i| -op.at(i, psi)).collect();
            per_mode.push(lu.solve(&rhs));
        }
        lifting.push(per_mode);
    }
    let mut inhomogeneity = None;
    let mut load = None;
    let c = &sys.components[comp];
    if let Some(l) = params.load.as_ref().filter(|l| l.active) {
        let (l, edge) = sys.archetype_load(comp, l)?;
        let arch = sys.library.archetype(c.archetype)?;
        let pos = &sys.load_pos.iter().find(|(id, _)| *id == c.archetype).expect("archetype positions").1;
        let mut fw = vec![c64::new(0.0, 0.0); lay.n_cols];
        for (d, val) in traction_load_entries(&arch.space, &l, edge)? {
            let r = pos[d];
            if r == usize::MAX {
                continue;
            }
            for (j, f) in fw.iter_mut().enumerate() {
                f.re += val * proj.load_rows[(r, j)];
            }
        }
        let fr = lay.inhomogeneity.clone();
        if !fr.is_empty() {
            let aff = op.block(fr.clone(), fr.clone());
            max_factorized = max_factorized.max(fr.len());
            let lu = DenseLu::new(&aff)
                .map_err(|e| Error::Singular(format!("inhomogeneity bubbles of component {comp}: {e}")))?;
            inhomogeneity = Some(lu.solve(&fw[fr]));
        }
        load = Some(fw);
    }
    Ok(ComponentBubbles { lifting, inhomogeneity, load, max_factorized })
}

/// Port Schur complement with its right-hand side.
pub struct SchurSystem {
    pub matrix: CSpMat,
    pub rhs: Vec<c64>,
    pub bubbles: Vec<ComponentBubbles>,
}

pub fn assemble_schur(sys: &SystemModel, params: &SystemParams, omega: f64, projection: Projection) -> Result<SchurSystem> {
    sys.check_params(params)?;
    let n = sys.n_schur;
    let mut tb = TripletBuilder::new(n, n);
    let mut rhs = vec![c64::new(0.0, 0.0); n];
    let mut bubbles = Vec::with_capacity(sys.n_components());
    for (c, inst) in sys.components.iter().enumerate() {
        let cb = solve_component_bubbles(sys, c, &params.components[c], omega)?;
        let proj = sys.projections(c)?;
        let lay = &proj.layout;
        let [tm, ta] = params.components[c].material.affine_coefficients(omega);
        let op = ReducedOp { proj, tm, ta };
        // Trial function of (attached port ia, mode ka) as sparse combination of set columns.
        let trial = |ia: usize, ka: usize| -> Vec<(usize, c64)> {
            let (p, slot) = inst.ports[ia];
            let v = sys.ports[p].members[slot].variant;
            let mut t = vec![(lay.liftings[v].start + ka, c64::new(1.0, 0.0))];
            t.extend(lay.bubbles[v][ka].clone().zip(cb.lifting[ia][ka].iter().copied()));
            t
        };
        let test = |ib: usize, kb: usize| -> Vec<(usize, c64)> {
            match projection {
                Projection::PetrovGalerkin => {
                    let (p, slot) = inst.ports[ib];
                    let v = sys.ports[p].members[slot].variant;
                    vec![(lay.liftings[v].start + kb, c64::new(1.0, 0.0))]
                }
                Projection::Galerkin => trial(ib, kb).into_iter().map(|(i, w)| (i, w.conj())).collect(),
            }
        };
        let inhom: Vec<(usize, c64)> = match &cb.inhomogeneity {
            Some(b) => lay.inhomogeneity.clone().zip(b.iter().copied()).collect(),
            None => vec![],
        };
        for (ib, &(pb, _)) in inst.ports.iter().enumerate() {
            for kb in 0..sys.ports[pb].n_modes {
                let row = sys.ports[pb].offset + kb;
                let tv = test(ib, kb);
                for (ia, &(pa, _)) in inst.ports.iter().enumerate() {
                    for ka in 0..sys.ports[pa].n_modes {
                        let tu = trial(ia, ka);
                        let mut s = c64::new(0.0, 0.0);
                        for &(i, wi) in &tv {
                            for &(j, wj) in &tu {
                                s += wi * op.at(i, j) * wj;
                            }
                        }
                        tb.push(row, sys.ports[pa].offset + ka, s);
                    }
                }
                if let Some(fw) = &cb.load {
                    let mut r = c64::new(0.0, 0.0);
                    for &(i, wi) in &tv {
                        let mut a_f = fw[i];
                        for &(j, bj) in &inhom {
                            a_f -= op.at(i, j) * bj;
                        }
                        r += wi * a_f;
                    }
                    rhs[row] += r;
                }
            }
        }
        bubbles.push(cb);
    }
    Ok(SchurSystem { matrix: tb.build()?, rhs, bubbles })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub schur_dim: usize,
    pub schur_residual: f64,
    pub condition_estimate: f64,
    pub near_singular: bool,
    pub max_factorized: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrrbcSolution {
    pub omega: f64,
    /// Coefficients on the `Z` columns.
    pub coefficients: Vec<c64>,
    pub diagnostics: SolveDiagnostics,
}

impl PrrbcSolution {
    pub fn port_coefficients(&self, n_schur: usize) -> &[c64] {
        &self.coefficients[..n_schur]
    }
}

const NEAR_SINGULAR: f64 = 1e12;

pub fn solve_prrbc(sys: &SystemModel, params: &SystemParams, omega: f64, projection: Projection) -> Result<PrrbcSolution> {
    let schur = assemble_schur(sys, params, omega, projection)?;
    let n = sys.n_schur;
    let mut coefficients = vec![c64::new(0.0, 0.0); sys.n_basis()];
    let mut diagnostics = SolveDiagnostics {
        schur_dim: n,
        schur_residual: 0.0,
        condition_estimate: 1.0,
        near_singular: false,
        max_factorized: schur.bubbles.iter().map(|b| b.max_factorized).max().unwrap_or(0),
    };
    let u = if n > 0 && norm2(&schur.rhs) > 0.0 {
        let lu = SparseLu::new(&schur.matrix).map_err(|e| Error::Singular(format!("Schur complement: {e}")))?;
        diagnostics.max_factorized = diagnostics.max_factorized.max(n);
        let u = lu.solve(&schur.rhs);
        let mut r = vec![c64::new(0.0, 0.0); n];
        apply(&schur.matrix, &u, &mut r);
        r.iter_mut().zip(&schur.rhs).for_each(|(a, b)| *a -= b);
        diagnostics.schur_residual = norm2(&r) / norm2(&schur.rhs);
        diagnostics.condition_estimate = condition_estimate(&schur.matrix, &lu);
        if !diagnostics.condition_estimate.is_finite() || u.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Singular(format!("Schur complement at omega = {omega}")));
        }
        if diagnostics.condition_estimate > NEAR_SINGULAR {
            diagnostics.near_singular = true;
            warn!("near-singular Schur complement at omega = {omega} (condition ~ {:e})", diagnostics.condition_estimate);
        }
        u
    } else {
        vec![c64::new(0.0, 0.0); n]
    };
    coefficients[..n].copy_from_slice(&u);
    for (pi, p) in sys.ports.iter().enumerate() {
        for k in 0..p.n_modes {
            let uk = u[p.offset + k];
            for (slot, m) in p.members.iter().enumerate() {
                let ia = sys.components[m.component]
                    .ports
                    .iter()
                    .position(|&q| q == (pi, slot))
                    .expect("attached port");
                let beta = &schur.bubbles[m.component].lifting[ia][k];
                let off = p.bubble_offsets[k][slot];
                for (j, b) in beta.iter().enumerate() {
                    coefficients[off + j] = uk * b;
                }
            }
        }
    }
    for (c, inst) in sys.components.iter().enumerate() {
        if let (Some(off), Some(b)) = (inst.inhomogeneity_offset, &schur.bubbles[c].inhomogeneity) {
            coefficients[off..off + b.len()].copy_from_slice(b);
        }
    }
    Ok(PrrbcSolution { omega, coefficients, diagnostics })
}

/// `||S||_1 * ||S^{-1}||_1` estimated with a few solves on fixed sign vectors.
fn condition_estimate(s: &CSpMat, lu: &SparseLu<c64>) -> f64 {
    let n = s.nrows();
    let mut col_sums = vec![0.0f64; n];
    for_each_entry(s, |_, j, v| col_sums[j] += v.norm());
    let norm_s = col_sums.iter().fold(0.0f64, |m, v| m.max(*v));
    let mut inv = 0.0f64;
    for seed in 0..3u64 {
        let x: Vec<c64> = (0..n)
            .map(|i| {
                let h = (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(seed.wrapping_mul(0xD1B5_4A32_D192_ED03));
                c64::new(if (h >> 33) & 1 == 0 { 1.0 } else { -1.0 }, 0.0)
            })
            .collect();
        let y = lu.solve(&x);
        let ny: f64 = y.iter().map(|v| v.norm()).sum();
        inv = inv.max(ny / n as f64);
    }
    norm_s * inv
}

pub fn reconstruct_fe(sys: &SystemModel, coefficients: &[c64]) -> Result<Vec<c64>> {
    check_len("PR-RBC coefficients", coefficients.len(), sys.n_basis())?;
    Ok(apply_real(&sys.z, coefficients))
}

pub fn export_schur(path: &Path, schur: &SchurSystem) -> Result<()> {
    write_matrix_market(path, &schur.matrix)
}

/// Relative H1 distance `||a - b|| / ||b||`.
pub fn h1_relative_error(sys: &SystemModel, a: &[c64], b: &[c64]) -> Result<f64> {
    check_len("field", a.len(), b.len())?;
    let d: Vec<c64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let nb = sys.h1_norm(b);
    Ok(if nb == 0.0 { sys.h1_norm(&d) } else { sys.h1_norm(&d) / nb })
}

/// True when every nonzero Schur entry couples ports that share a component.
pub fn schur_is_staircase(sys: &SystemModel, schur: &SchurSystem) -> bool {
    let port = |i: usize| sys.port_of_row(i);
    let mut ok = true;
    for_each_entry(&schur.matrix, |i, j, v| {
        if v.norm() != 0.0 && !sys.ports_adjacent(port(i), port(j)) {
            ok = false;
        }
    });
    ok
}
