//! The trained library: port spaces, liftings, bubbles and projected blocks.

use std::ops::Range;
use std::sync::atomic::Ordering;
use std::time::Instant;

use faer::Mat;
use log::info;
use serde::{Deserialize, Serialize};

use super::archetype::{build_archetype, ArchetypeComponent, LibrarySpec};
use super::training::{
    build_inhomogeneity_bubbles, build_lifting_bubbles_batch, draw_local_samples, reference_liftings,
    train_port_space, BubbleKind, BubbleSpace, PortSpace, TrainingConfig, TrainingContext,
};
use crate::error::{Error, Result};
use crate::forms::project_real;
use crate::mesh::BoundaryTag;

/// How a reference-port mode enters an archetype: on which side, and whether
/// the archetype frame is the mirror image of the canonical pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LiftingVariant {
    pub side: BoundaryTag,
    pub reference_port: usize,
    pub flip: bool,
}

/// Every variant an archetype can meet: as the left member of a reference port
/// it sees the port on its right side, or mirrored on its left, and vice versa.
pub fn lifting_variants(spec: &LibrarySpec, archetype: usize) -> Result<Vec<LiftingVariant>> {
    let arch = spec.archetype(archetype)?;
    let mut out = Vec::new();
    for p in &spec.reference_ports {
        let mut push = |side: BoundaryTag, flip: bool| {
            if arch.ports.contains(&side) {
                out.push(LiftingVariant { side, reference_port: p.id, flip });
            }
        };
        if p.left == archetype {
            push(BoundaryTag::Right, false);
            push(BoundaryTag::Left, true);
        }
        if p.right == archetype {
            push(BoundaryTag::Left, false);
            push(BoundaryTag::Right, true);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantData {
    pub variant: LiftingVariant,
    /// Reference liftings of the port modes, full local DOFs by modes.
    pub liftings: Mat<f64>,
    /// One bubble space per port mode.
    pub bubbles: Vec<BubbleSpace>,
}

/// Column layout of the per-archetype function set
/// `[liftings of every variant | their bubbles | inhomogeneity bubbles]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnLayout {
    pub liftings: Vec<Range<usize>>,
    pub bubbles: Vec<Vec<Range<usize>>>,
    pub inhomogeneity: Range<usize>,
    pub n_cols: usize,
}

impl ColumnLayout {
    pub fn of(variants: &[VariantData], inhomogeneity: Option<&BubbleSpace>) -> Self {
        let mut next = 0;
        let mut take = |n: usize| {
            let r = next..next + n;
            next += n;
            r
        };
        let liftings = variants.iter().map(|v| take(v.liftings.ncols())).collect();
        let bubbles = variants.iter().map(|v| v.bubbles.iter().map(|b| take(b.n_modes())).collect()).collect();
        let inhomogeneity = take(inhomogeneity.map_or(0, |b| b.n_modes()));
        ColumnLayout { liftings, bubbles, inhomogeneity, n_cols: next }
    }
}

/// Parameter-independent projections of one archetype onto its function set.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentProjections {
    pub layout: ColumnLayout,
    /// `W^T M_1 W` with the unit-density mass.
    pub mass: Mat<f64>,
    /// `W^T K_1 W` with the unit-modulus stiffness.
    pub stiffness: Mat<f64>,
    /// DOFs of the loaded edge and the rows of `W` there.
    pub load_dofs: Vec<usize>,
    pub load_rows: Mat<f64>,
}

impl ComponentProjections {
    pub const N_TERMS: usize = 2;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchetypeTraining {
    pub archetype: usize,
    pub variants: Vec<VariantData>,
    pub inhomogeneity: Option<BubbleSpace>,
    pub projections: Option<ComponentProjections>,
}

impl ArchetypeTraining {
    pub fn variant_index(&self, v: &LiftingVariant) -> Option<usize> {
        self.variants.iter().position(|d| d.variant == *v)
    }

    /// All columns of the function set in layout order.
    pub fn function_set(&self) -> Mat<f64> {
        let layout = ColumnLayout::of(&self.variants, self.inhomogeneity.as_ref());
        let n = self.variants.first().map(|v| v.liftings.nrows()).or(self.inhomogeneity.as_ref().map(|b| b.modes.nrows()));
        let n = n.unwrap_or(0);
        let mut w = Mat::<f64>::zeros(n, layout.n_cols);
        let mut put = |start: usize, m: &Mat<f64>| {
            for j in 0..m.ncols() {
                for i in 0..n {
                    w[(i, start + j)] = m[(i, j)];
                }
            }
        };
        for (vi, v) in self.variants.iter().enumerate() {
            put(layout.liftings[vi].start, &v.liftings);
            for (k, b) in v.bubbles.iter().enumerate() {
                put(layout.bubbles[vi][k].start, &b.modes);
            }
        }
        if let Some(b) = &self.inhomogeneity {
            put(layout.inhomogeneity.start, &b.modes);
        }
        w
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub offline_seconds: f64,
    /// Largest matrix factorized during training.
    pub max_factorized: usize,
    /// Largest archetype FE space.
    pub component_size: usize,
    pub skipped_samples: usize,
    pub solves: usize,
    pub port_samples: Vec<usize>,
    pub bubble_samples: usize,
    pub inhomogeneity_samples: usize,
}

#[derive(Debug, Clone)]
pub struct TrainedLibrary {
    pub spec: LibrarySpec,
    pub config: TrainingConfig,
    pub archetypes: Vec<ArchetypeComponent>,
    pub port_spaces: Vec<PortSpace>,
    pub components: Vec<ArchetypeTraining>,
    pub meta: TrainingMeta,
}

/// Sizes reported for the trained library.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibrarySizes {
    /// `(reference port, size)`.
    pub port_spaces: Vec<(usize, usize)>,
    /// Distinct lifting bubble space sizes.
    pub lifting_bubbles: Vec<usize>,
    /// `(archetype, size)`.
    pub inhomogeneity_bubbles: Vec<(usize, usize)>,
}

impl TrainedLibrary {
    pub fn archetype(&self, id: usize) -> Result<&ArchetypeComponent> {
        self.archetypes
            .iter()
            .find(|a| a.id() == id)
            .ok_or_else(|| Error::InvalidArgument(format!("archetype {id} not in library")))
    }

    pub fn port_space(&self, reference_port: usize) -> Result<&PortSpace> {
        self.port_spaces
            .iter()
            .find(|p| p.reference_port == reference_port)
            .ok_or_else(|| Error::InvalidArgument(format!("reference port {reference_port} not trained")))
    }

    pub fn training(&self, archetype: usize) -> Result<&ArchetypeTraining> {
        self.components
            .iter()
            .find(|c| c.archetype == archetype)
            .ok_or_else(|| Error::InvalidArgument(format!("archetype {archetype} not trained")))
    }

    pub fn sizes(&self) -> LibrarySizes {
        let mut lifting: Vec<usize> = self
            .components
            .iter()
            .flat_map(|c| c.variants.iter().flat_map(|v| v.bubbles.iter().map(|b| b.n_modes())))
            .collect();
        lifting.sort_unstable();
        lifting.dedup();
        LibrarySizes {
            port_spaces: self.port_spaces.iter().map(|p| (p.reference_port, p.n_modes())).collect(),
            lifting_bubbles: lifting,
            inhomogeneity_bubbles: self
                .components
                .iter()
                .filter_map(|c| c.inhomogeneity.as_ref().map(|b| (c.archetype, b.n_modes())))
                .collect(),
        }
    }
}

/// Full offline stage: port spaces, liftings, bubbles and projections.
pub fn train_library(spec: &LibrarySpec, config: &TrainingConfig) -> Result<TrainedLibrary> {
    spec.validate()?;
    if config.sample_factor == 0 {
        return Err(Error::Config("sample_factor must be positive".into()));
    }
    let start = Instant::now();
    let archetypes = spec.archetypes.iter().map(|a| build_archetype(spec, a)).collect::<Result<Vec<_>>>()?;
    let ctx = TrainingContext::new(spec, &archetypes, config);

    let mut port_spaces = Vec::new();
    for p in &spec.reference_ports {
        let size = config.port_size.unwrap_or(p.port_size);
        let ps = train_port_space(&ctx, p, config.sample_factor * size, size)?;
        info!("reference port {}: {} modes", p.id, ps.n_modes());
        port_spaces.push(ps);
    }

    let n_bubble_samples = config.sample_factor * config.bubble_size;
    let n_inhom_samples = config.sample_factor * config.inhomogeneity_size;
    let mut components = Vec::new();
    for arch in &archetypes {
        let variants = lifting_variants(spec, arch.id())?;
        let mut lifts = Vec::new();
        for v in &variants {
            let ps = port_spaces
                .iter()
                .find(|p| p.reference_port == v.reference_port)
                .expect("every reference port is trained");
            let traces = Mat::from_fn(ps.modes.nrows(), ps.n_modes(), |i, k| {
                let s = if v.flip && i % 2 == 0 { -1.0 } else { 1.0 };
                s * ps.modes[(i, k)]
            });
            lifts.push(reference_liftings(arch, v.side, &traces)?);
        }
        let n = arch.space.n_dofs();
        let total: usize = lifts.iter().map(|l| l.ncols()).sum();
        let mut all = Mat::<f64>::zeros(n, total);
        let mut kinds = Vec::with_capacity(total);
        let mut c = 0;
        for (vi, l) in lifts.iter().enumerate() {
            for k in 0..l.ncols() {
                for i in 0..n {
                    all[(i, c)] = l[(i, k)];
                }
                kinds.push(BubbleKind::Lifting { variant: vi, mode: k });
                c += 1;
            }
        }
        let samples = draw_local_samples(&ctx, 2000 + arch.id() as u64, n_bubble_samples, false);
        let mut bubbles = build_lifting_bubbles_batch(&ctx, arch, &all, &kinds, &samples, config.bubble_size)?.into_iter();
        let variants = variants
            .into_iter()
            .zip(lifts)
            .map(|(variant, liftings)| {
                let bubbles = bubbles.by_ref().take(liftings.ncols()).collect();
                VariantData { variant, liftings, bubbles }
            })
            .collect();
        let inhomogeneity = if arch.has_inhomogeneity() {
            Some(build_inhomogeneity_bubbles(&ctx, arch, n_inhom_samples, config.inhomogeneity_size)?)
        } else {
            None
        };
        components.push(ArchetypeTraining { archetype: arch.id(), variants, inhomogeneity, projections: None });
        info!("archetype {} trained", arch.id());
    }

    let meta = TrainingMeta {
        offline_seconds: 0.0,
        max_factorized: ctx.stats.max_factorized.load(Ordering::Relaxed),
        component_size: archetypes.iter().map(|a| a.space.n_dofs()).max().unwrap_or(0),
        skipped_samples: ctx.stats.skipped.load(Ordering::Relaxed),
        solves: ctx.stats.solves.load(Ordering::Relaxed),
        port_samples: port_spaces.iter().map(|p| p.n_samples).collect(),
        bubble_samples: n_bubble_samples,
        inhomogeneity_samples: n_inhom_samples,
    };
    let mut lib = TrainedLibrary { spec: spec.clone(), config: config.clone(), archetypes, port_spaces, components, meta };
    precompute_projections(&mut lib)?;
    lib.meta.offline_seconds = start.elapsed().as_secs_f64();
    Ok(lib)
}

/// Projects both affine terms of every archetype onto its function set and
/// keeps the rows of the set on the loaded edge.
pub fn precompute_projections(lib: &mut TrainedLibrary) -> Result<()> {
    for comp in lib.components.iter_mut() {
        let arch = lib
            .archetypes
            .iter()
            .find(|a| a.id() == comp.archetype)
            .ok_or_else(|| Error::InvalidArgument(format!("archetype {} not built", comp.archetype)))?;
        let layout = ColumnLayout::of(&comp.variants, comp.inhomogeneity.as_ref());
        let w = comp.function_set();
        let mass = project_real(&arch.operators.mass_unit, &w);
        let stiffness = project_real(&arch.operators.stiffness_unit, &w);
        let load_dofs = match arch.spec.load_edge {
            Some(edge) => arch.space.dofs_on(edge),
            None => Vec::new(),
        };
        let load_rows = Mat::from_fn(load_dofs.len(), layout.n_cols, |i, j| w[(load_dofs[i], j)]);
        comp.projections = Some(ComponentProjections { layout, mass, stiffness, load_dofs, load_rows });
    }
    Ok(())
}
