//! Snapshot training of port spaces, lifting bubbles and inhomogeneity bubbles.

use std::sync::atomic::{AtomicUsize, Ordering};

use faer::Mat;
use log::{debug, warn};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::archetype::{ArchetypeComponent, LibrarySpec, ReferencePortSpec};
use super::pod::{orthonormalize_against, pod, InnerProduct, PodTarget};
use crate::error::{invalid, Error, Result};
use crate::forms::{assemble_traction_load, LoadParams, MaterialParams};
use crate::linalg::{
    apply, c64, combine_complex, submatrix, SparseCholesky, SparseLu, SpMat,
};
use crate::mesh::BoundaryTag;
use crate::multicomp::{ComponentInput, Interface, MultiComponentSpace, OpenPorts, Placement};
use crate::truth::check_solution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub seed: u64,
    /// Samples per retained mode.
    pub sample_factor: usize,
    /// Overrides the base size of every reference port space.
    pub port_size: Option<usize>,
    pub bubble_size: usize,
    pub inhomogeneity_size: usize,
    /// Also train port inhomogeneity modes on the mirror image of each load.
    pub mirror_loads: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            seed: 2024,
            sample_factor: 5,
            port_size: None,
            bubble_size: 6,
            inhomogeneity_size: 10,
            mirror_loads: true,
        }
    }
}

/// Counters shared by concurrent training tasks.
#[derive(Debug, Default)]
pub struct TrainingStats {
    pub max_factorized: AtomicUsize,
    pub skipped: AtomicUsize,
    pub solves: AtomicUsize,
}

impl TrainingStats {
    fn factorized(&self, n: usize) {
        self.max_factorized.fetch_max(n, Ordering::Relaxed);
    }
}

pub struct TrainingContext<'a> {
    pub spec: &'a LibrarySpec,
    pub archetypes: &'a [ArchetypeComponent],
    pub config: &'a TrainingConfig,
    pub stats: TrainingStats,
}

impl<'a> TrainingContext<'a> {
    pub fn new(spec: &'a LibrarySpec, archetypes: &'a [ArchetypeComponent], config: &'a TrainingConfig) -> Self {
        TrainingContext { spec, archetypes, config, stats: TrainingStats::default() }
    }

    pub fn archetype(&self, id: usize) -> Result<&'a ArchetypeComponent> {
        self.archetypes
            .iter()
            .find(|a| a.id() == id)
            .ok_or_else(|| Error::InvalidArgument(format!("archetype {id} is not built")))
    }

    /// Independent random stream per task.
    pub fn rng(&self, task: u64) -> ChaCha8Rng {
        use rand::SeedableRng;
        let mut r = ChaCha8Rng::seed_from_u64(self.config.seed);
        r.set_stream(task);
        r
    }

    fn sample_omega(&self, rng: &mut impl Rng) -> f64 {
        self.spec.omegas[rng.random_range(0..self.spec.omegas.len())]
    }
}

/// Reduced trace space of one reference port, in the canonical (unflipped) frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PortSpace {
    pub reference_port: usize,
    /// Port DOFs by modes, orthonormal in `inner_product`.
    pub modes: Mat<f64>,
    pub spectrum: Vec<f64>,
    /// Spectrum of the load-driven residual traces.
    pub inhomogeneity_spectrum: Vec<f64>,
    pub n_inhomogeneity_modes: usize,
    pub inner_product: Mat<f64>,
    pub n_samples: usize,
}

impl PortSpace {
    pub fn n_modes(&self) -> usize {
        self.modes.ncols()
    }

    /// Mode `k` as it appears on a component whose frame is `flip`ped.
    pub fn mode_in_frame(&self, k: usize, flip: bool) -> Vec<f64> {
        let mut v = self.modes.col_as_slice(k).to_vec();
        if flip {
            mirror_trace(&mut v);
        }
        v
    }
}

/// Reflection about a vertical axis: negates x components of `[x, y]` pairs.
pub fn mirror_trace(v: &mut [f64]) {
    v.iter_mut().step_by(2).for_each(|x| *x = -*x);
}

/// Harmonic-extension liftings of port traces at the nominal modulus, without
/// damping or inertia: one full local vector per column of `traces`.
pub fn reference_liftings(arch: &ArchetypeComponent, side: BoundaryTag, traces: &Mat<f64>) -> Result<Mat<f64>> {
    let port = arch.port(side)?;
    if traces.nrows() != port.n_dofs() {
        return Err(Error::DimensionMismatch(format!(
            "trace of length {} on a port with {} DOFs",
            traces.nrows(),
            port.n_dofs()
        )));
    }
    let k = &arch.operators.stiffness_unit;
    let kii = submatrix(k, &arch.interior, &arch.interior);
    let kip = submatrix(k, &arch.interior, &port.dofs);
    let ch = SparseCholesky::new(&kii)?;
    let n = arch.space.n_dofs();
    let mut out = Mat::<f64>::zeros(n, traces.ncols());
    for j in 0..traces.ncols() {
        let g = traces.col_as_slice(j);
        let mut rhs = vec![0.0; arch.interior.len()];
        apply(&kip, g, &mut rhs);
        rhs.iter_mut().for_each(|v| *v = -*v);
        ch.solve_in_place(&mut rhs);
        let col = out.col_mut(j).try_as_col_major_mut().expect("contiguous").as_slice_mut();
        for (&d, v) in arch.interior.iter().zip(&rhs) {
            col[d] = *v;
        }
        for (&d, v) in port.dofs.iter().zip(g) {
            col[d] = *v;
        }
    }
    Ok(out)
}

/// Frozen bi-component system of a reference port.
struct PairSystem {
    mass: [SpMat; 2],
    stiffness: [SpMat; 2],
    /// Free indices with imposed (random) data.
    outer: Vec<usize>,
    /// Free indices solved for.
    unknown: Vec<usize>,
    /// Position in `unknown` of each shared-port DOF, port order.
    shared: Vec<usize>,
    glue: MultiComponentSpace,
    n_free: usize,
}

impl PairSystem {
    fn build(left: &ArchetypeComponent, right: &ArchetypeComponent) -> Result<Self> {
        let comps = [
            ComponentInput { space: &left.space, placement: Placement::at(0.0, 0.0), ports: &left.spec.ports },
            ComponentInput { space: &right.space, placement: Placement::at(left.width(), 0.0), ports: &right.spec.ports },
        ];
        let itf = [Interface { a: (0, BoundaryTag::Right), b: (1, BoundaryTag::Left) }];
        let glue = MultiComponentSpace::build(&comps, &itf, OpenPorts::Free)?;
        let n_free = glue.n_free();
        let mut is_outer = vec![false; n_free];
        for (ci, (arch, shared)) in [(left, BoundaryTag::Right), (right, BoundaryTag::Left)].iter().enumerate() {
            for p in arch.ports.iter().filter(|p| p.side != *shared) {
                for &d in &p.dofs {
                    let f = glue.free_index[glue.comp_maps[ci][d].0];
                    if f != usize::MAX {
                        is_outer[f] = true;
                    }
                }
            }
        }
        let outer: Vec<usize> = (0..n_free).filter(|&f| is_outer[f]).collect();
        let unknown: Vec<usize> = (0..n_free).filter(|&f| !is_outer[f]).collect();
        let mut pos = vec![usize::MAX; n_free];
        for (k, &f) in unknown.iter().enumerate() {
            pos[f] = k;
        }
        let shared = glue
            .free_of(&glue.interface_dofs[0])?
            .into_iter()
            .map(|f| pos[f])
            .collect::<Vec<_>>();
        if shared.iter().any(|&p| p == usize::MAX) {
            return Err(Error::GeometryMismatch("shared port touches imposed data".into()));
        }
        let mass = [
            glue.embed_matrix(0, &left.operators.mass_unit)?,
            glue.embed_matrix(1, &right.operators.mass_unit)?,
        ];
        let stiffness = [
            glue.embed_matrix(0, &left.operators.stiffness_unit)?,
            glue.embed_matrix(1, &right.operators.stiffness_unit)?,
        ];
        Ok(PairSystem { mass, stiffness, outer, unknown, shared, glue, n_free })
    }

    /// Shared-port trace for outer data `g` (on `outer`) and global load `f` (free DOFs).
    fn trace(&self, mats: [&MaterialParams; 2], omega: f64, g: &[f64], f: &[c64], stats: &TrainingStats) -> Result<Vec<c64>> {
        let [ml, al] = mats[0].affine_coefficients(omega);
        let [mr, ar] = mats[1].affine_coefficients(omega);
        let a = combine_complex(&[
            (ml, &self.mass[0]),
            (al, &self.stiffness[0]),
            (mr, &self.mass[1]),
            (ar, &self.stiffness[1]),
        ])?;
        let auu = submatrix(&a, &self.unknown, &self.unknown);
        let mut rhs: Vec<c64> = self.unknown.iter().map(|&k| f[k]).collect();
        if !self.outer.is_empty() {
            let aud = submatrix(&a, &self.unknown, &self.outer);
            let gd: Vec<c64> = g.iter().map(|&v| c64::new(-v, 0.0)).collect();
            crate::linalg::apply_add(&aud, &gd, &mut rhs);
        }
        if rhs.iter().all(|v| v.norm_sqr() == 0.0) {
            return Ok(vec![c64::new(0.0, 0.0); self.shared.len()]);
        }
        stats.factorized(self.unknown.len());
        stats.solves.fetch_add(1, Ordering::Relaxed);
        let lu = SparseLu::new(&auu).map_err(|e| Error::Singular(e.to_string()))?;
        let u = lu.solve(&rhs);
        check_solution(&auu, &u, &rhs)?;
        Ok(self.shared.iter().map(|&k| u[k]).collect())
    }
}

/// Appends `Re t`, `Im t` of a complex trace, scaled to unit norm, as snapshot columns.
fn push_normalized(cols: &mut Vec<Vec<f64>>, t: &[c64], inner: &dyn InnerProduct) {
    let re: Vec<f64> = t.iter().map(|v| v.re).collect();
    let im: Vec<f64> = t.iter().map(|v| v.im).collect();
    let n2: f64 = [&re, &im]
        .iter()
        .map(|v| v.iter().zip(inner.apply(v)).map(|(a, b)| a * b).sum::<f64>())
        .sum();
    if !(n2 > 0.0) {
        return;
    }
    let s = 1.0 / n2.sqrt();
    for v in [re, im] {
        if v.iter().any(|x| *x != 0.0) {
            cols.push(v.into_iter().map(|x| x * s).collect());
        }
    }
}

fn columns_to_mat(n: usize, cols: &[Vec<f64>]) -> Mat<f64> {
    Mat::from_fn(n, cols.len(), |i, j| cols[j][i])
}

/// Port space of one reference port by randomized bi-component snapshots.
///
/// Base modes come from random outer-port data; for ports next to a loaded
/// archetype, `inhomogeneity_modes` extra modes are extracted from the part of
/// the load-driven traces not captured by the base modes.
pub fn train_port_space(
    ctx: &TrainingContext<'_>,
    port: &ReferencePortSpec,
    n_samples: usize,
    target_size: usize,
) -> Result<PortSpace> {
    let left = ctx.archetype(port.left)?;
    let right = ctx.archetype(port.right)?;
    let desc = right.port(BoundaryTag::Left)?;
    let n_port = desc.n_dofs();
    if target_size + port.inhomogeneity_modes > n_port {
        return invalid(format!(
            "port space of size {} + {} on a port with {n_port} DOFs",
            target_size, port.inhomogeneity_modes
        ));
    }
    let inner = desc.inner_product(ctx.spec.degree)?;
    let sys = PairSystem::build(left, right)?;
    let zero_f = vec![c64::new(0.0, 0.0); sys.n_free];
    let task = 1000 + port.id as u64;
    let mut rng = ctx.rng(task);
    let draws: Vec<([MaterialParams; 2], f64, Vec<f64>)> = (0..n_samples)
        .map(|_| {
            let m = [ctx.spec.material.sample(&mut rng), ctx.spec.material.sample(&mut rng)];
            let w = ctx.sample_omega(&mut rng);
            let g = (0..sys.outer.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            (m, w, g)
        })
        .collect();
    let traces: Vec<Result<Vec<c64>>> = draws
        .par_iter()
        .map(|(m, w, g)| sys.trace([&m[0], &m[1]], *w, g, &zero_f, &ctx.stats))
        .collect();
    let mut cols = Vec::new();
    let mut used = 0;
    for t in traces {
        match t {
            Ok(t) => {
                used += 1;
                push_normalized(&mut cols, &t, &inner);
            }
            Err(e) => {
                ctx.stats.skipped.fetch_add(1, Ordering::Relaxed);
                warn!("reference port {}: skipping singular sample ({e})", port.id);
            }
        }
    }
    if used == 0 && n_samples > 0 {
        return Err(Error::Training(format!("every sample of reference port {} was singular", port.id)));
    }
    let base = pod(&columns_to_mat(n_port, &cols), &inner, PodTarget::Size(target_size))?;
    let mut basis: Vec<Vec<f64>> = (0..base.n_modes()).map(|j| base.modes.col_as_slice(j).to_vec()).collect();
    let mut inhomogeneity_spectrum = Vec::new();
    let mut n_inhom = 0;
    if port.inhomogeneity_modes > 0 {
        let (loaded_slot, loaded) = if left.has_inhomogeneity() {
            (0, left)
        } else if right.has_inhomogeneity() {
            (1, right)
        } else {
            return invalid(format!("reference port {} has no loaded archetype", port.id));
        };
        let edge = loaded.spec.load_edge.expect("loaded archetype");
        let n_inh = ctx.config.sample_factor * port.inhomogeneity_modes;
        let mut draws = Vec::new();
        for _ in 0..n_inh {
            let m = [ctx.spec.material.sample(&mut rng), ctx.spec.material.sample(&mut rng)];
            let w = ctx.sample_omega(&mut rng);
            let load = ctx.spec.load.sample(&mut rng);
            draws.push((m, w, load));
            if ctx.config.mirror_loads {
                draws.push((m, w, load.mirrored(loaded.width())));
            }
        }
        let zero_g = vec![0.0; sys.outer.len()];
        let traces: Vec<Result<Vec<c64>>> = draws
            .par_iter()
            .map(|(m, w, load)| {
                let local = assemble_traction_load(&loaded.space, load, edge)?;
                let local: Vec<c64> = local.into_iter().map(|v| c64::new(v, 0.0)).collect();
                let mut f = zero_f.clone();
                sys.glue.embed_vector_add(loaded_slot, &local, &mut f);
                sys.trace([&m[0], &m[1]], *w, &zero_g, &f, &ctx.stats)
            })
            .collect();
        let mut res_cols = Vec::new();
        for t in traces {
            let t = match t {
                Ok(t) => t,
                Err(e) => {
                    ctx.stats.skipped.fetch_add(1, Ordering::Relaxed);
                    warn!("reference port {}: skipping singular load sample ({e})", port.id);
                    continue;
                }
            };
            let mut parts = Vec::new();
            push_normalized(&mut parts, &t, &inner);
            for mut v in parts {
                for b in &basis {
                    let xb = inner.apply(b);
                    let c: f64 = v.iter().zip(&xb).map(|(p, q)| p * q).sum();
                    v.iter_mut().zip(b).for_each(|(p, q)| *p -= c * q);
                }
                res_cols.push(v);
            }
        }
        let extra = pod(&columns_to_mat(n_port, &res_cols), &inner, PodTarget::Size(port.inhomogeneity_modes))?;
        inhomogeneity_spectrum = extra.eigenvalues.clone();
        for j in 0..extra.n_modes() {
            if let Some(v) = orthonormalize_against(&basis, extra.modes.col_as_slice(j).to_vec(), &inner) {
                basis.push(v);
                n_inhom += 1;
            }
        }
    }
    debug!("reference port {}: {} modes from {used} samples", port.id, basis.len());
    Ok(PortSpace {
        reference_port: port.id,
        modes: columns_to_mat(n_port, &basis),
        spectrum: base.eigenvalues,
        inhomogeneity_spectrum,
        n_inhomogeneity_modes: n_inhom,
        inner_product: inner,
        n_samples: used,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BubbleKind {
    Lifting { variant: usize, mode: usize },
    Inhomogeneity,
}

/// Interior functions of one archetype; zero on every port and Dirichlet DOF.
#[derive(Debug, Clone, PartialEq)]
pub struct BubbleSpace {
    pub kind: BubbleKind,
    /// Full local DOFs by modes, orthonormal in the component H1 product.
    pub modes: Mat<f64>,
    pub eigenvalues: Vec<f64>,
}

impl BubbleSpace {
    pub fn n_modes(&self) -> usize {
        self.modes.ncols()
    }
}

/// Local parameter draw used by bubble training.
#[derive(Debug, Clone, Copy)]
pub struct LocalSample {
    pub material: MaterialParams,
    pub omega: f64,
    pub load: Option<LoadParams>,
}

pub fn draw_local_samples(ctx: &TrainingContext<'_>, task: u64, n: usize, with_load: bool) -> Vec<LocalSample> {
    let mut rng = ctx.rng(task);
    (0..n)
        .map(|_| LocalSample {
            material: ctx.spec.material.sample(&mut rng),
            omega: ctx.sample_omega(&mut rng),
            load: with_load.then(|| ctx.spec.load.sample(&mut rng)),
        })
        .collect()
}

/// Solves `A_II b = r_I(sample)` on the archetype interior for every sample and
/// every right-hand-side generator; returns snapshots grouped by generator.
fn interior_snapshots(
    ctx: &TrainingContext<'_>,
    arch: &ArchetypeComponent,
    samples: &[LocalSample],
    n_rhs: usize,
    rhs: &(dyn Fn(&LocalSample, &crate::linalg::CSpMat, usize) -> Result<Vec<c64>> + Sync),
) -> Result<Vec<Vec<Vec<c64>>>> {
    let ii = &arch.interior;
    let per_sample: Vec<Result<Vec<Vec<c64>>>> = samples
        .par_iter()
        .map(|s| {
            let a = arch.operators.frequency(&s.material, s.omega)?;
            let aii = submatrix(&a, ii, ii);
            ctx.stats.factorized(ii.len());
            let lu = SparseLu::new(&aii).map_err(|e| Error::Singular(e.to_string()))?;
            (0..n_rhs)
                .map(|k| {
                    let full = rhs(s, &a, k)?;
                    let b: Vec<c64> = ii.iter().map(|&d| full[d]).collect();
                    if b.iter().all(|v| v.norm_sqr() == 0.0) {
                        return Ok(b);
                    }
                    ctx.stats.solves.fetch_add(1, Ordering::Relaxed);
                    let x = lu.solve(&b);
                    check_solution(&aii, &x, &b)?;
                    Ok(x)
                })
                .collect()
        })
        .collect();
    let mut grouped = vec![Vec::new(); n_rhs];
    let mut used = 0;
    for r in per_sample {
        match r {
            Ok(sols) => {
                used += 1;
                for (g, x) in grouped.iter_mut().zip(sols) {
                    g.push(x);
                }
            }
            Err(e) => {
                ctx.stats.skipped.fetch_add(1, Ordering::Relaxed);
                warn!("archetype {}: skipping singular sample ({e})", arch.id());
            }
        }
    }
    if used == 0 && !samples.is_empty() {
        return Err(Error::Training(format!("every sample of archetype {} was singular", arch.id())));
    }
    Ok(grouped)
}

fn interior_pod(arch: &ArchetypeComponent, snaps: &[Vec<c64>], target: usize, kind: BubbleKind) -> Result<BubbleSpace> {
    let ii = &arch.interior;
    let h1 = submatrix(&arch.operators.h1, ii, ii);
    let mut cols = Vec::with_capacity(2 * snaps.len());
    for s in snaps {
        cols.push(s.iter().map(|v| v.re).collect::<Vec<_>>());
        cols.push(s.iter().map(|v| v.im).collect::<Vec<_>>());
    }
    let r = pod(&columns_to_mat(ii.len(), &cols), &h1, PodTarget::Size(target))?;
    let mut modes = Mat::<f64>::zeros(arch.space.n_dofs(), r.n_modes());
    for j in 0..r.n_modes() {
        for (k, &d) in ii.iter().enumerate() {
            modes[(d, j)] = r.modes[(k, j)];
        }
    }
    Ok(BubbleSpace { kind, modes, eigenvalues: r.eigenvalues })
}

/// Lifting bubbles of several liftings sharing the same parameter samples.
///
/// Each snapshot is the interior correction `b` with `A(mu) (psi + b) = 0` off
/// the ports, where `psi` is the fixed reference lifting.
pub fn build_lifting_bubbles_batch(
    ctx: &TrainingContext<'_>,
    arch: &ArchetypeComponent,
    liftings: &Mat<f64>,
    kinds: &[BubbleKind],
    samples: &[LocalSample],
    target_size: usize,
) -> Result<Vec<BubbleSpace>> {
    if kinds.len() != liftings.ncols() {
        return Err(Error::DimensionMismatch("one bubble kind per lifting".into()));
    }
    let psi: Vec<Vec<c64>> = (0..liftings.ncols())
        .map(|j| liftings.col_as_slice(j).iter().map(|&v| c64::new(v, 0.0)).collect())
        .collect();
    let rhs = |_: &LocalSample, a: &crate::linalg::CSpMat, k: usize| -> Result<Vec<c64>> {
        let mut r = vec![c64::new(0.0, 0.0); a.nrows()];
        apply(a, &psi[k], &mut r);
        r.iter_mut().for_each(|v| *v = -*v);
        Ok(r)
    };
    let grouped = interior_snapshots(ctx, arch, samples, psi.len(), &rhs)?;
    grouped
        .iter()
        .zip(kinds)
        .map(|(snaps, &kind)| interior_pod(arch, snaps, target_size, kind))
        .collect()
}

/// Lifting bubble space of a single port mode placed on `side`.
pub fn build_lifting_bubbles(
    ctx: &TrainingContext<'_>,
    arch: &ArchetypeComponent,
    side: BoundaryTag,
    port_mode: &[f64],
    n_samples: usize,
    target_size: usize,
) -> Result<BubbleSpace> {
    let trace = Mat::from_fn(port_mode.len(), 1, |i, _| port_mode[i]);
    let psi = reference_liftings(arch, side, &trace)?;
    let samples = draw_local_samples(ctx, 2000 + arch.id() as u64, n_samples, false);
    let kind = BubbleKind::Lifting { variant: 0, mode: 0 };
    Ok(build_lifting_bubbles_batch(ctx, arch, &psi, &[kind], &samples, target_size)?.remove(0))
}

/// Bubble space spanned by interior responses to the archetype's own load.
pub fn build_inhomogeneity_bubbles(
    ctx: &TrainingContext<'_>,
    arch: &ArchetypeComponent,
    n_samples: usize,
    target_size: usize,
) -> Result<BubbleSpace> {
    let Some(edge) = arch.spec.load_edge else {
        return invalid(format!("archetype {} carries no load", arch.id()));
    };
    let samples = draw_local_samples(ctx, 3000 + arch.id() as u64, n_samples, true);
    let rhs = |s: &LocalSample, _: &crate::linalg::CSpMat, _: usize| -> Result<Vec<c64>> {
        let f = assemble_traction_load(&arch.space, &s.load.expect("load sample"), edge)?;
        Ok(f.into_iter().map(|v| c64::new(v, 0.0)).collect())
    };
    let grouped = interior_snapshots(ctx, arch, &samples, 1, &rhs)?;
    interior_pod(arch, &grouped[0], target_size, BubbleKind::Inhomogeneity)
}
