//! Library file: magic, version, JSON manifest, then little-endian f64 blobs.
//!
//! Meshes and FE operators are not stored; they are rebuilt from the library
//! spec, which is deterministic.

use std::fs;
use std::io::Write;
use std::path::Path;

use faer::Mat;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::archetype::{build_archetype, LibrarySpec};
use super::library::{
    ArchetypeTraining, ColumnLayout, ComponentProjections, LiftingVariant, TrainedLibrary, TrainingMeta, VariantData,
};
use super::training::{BubbleKind, BubbleSpace, PortSpace, TrainingConfig};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"PRRBCLIB";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BlobRef {
    offset: u64,
    rows: usize,
    cols: usize,
    sha256: String,
}

#[derive(Serialize, Deserialize)]
struct PortEntry {
    reference_port: usize,
    spectrum: Vec<f64>,
    inhomogeneity_spectrum: Vec<f64>,
    n_inhomogeneity_modes: usize,
    n_samples: usize,
    modes: BlobRef,
    inner_product: BlobRef,
}

#[derive(Serialize, Deserialize)]
struct BubbleEntry {
    kind: BubbleKind,
    eigenvalues: Vec<f64>,
    modes: BlobRef,
}

#[derive(Serialize, Deserialize)]
struct VariantEntry {
    variant: LiftingVariant,
    liftings: BlobRef,
    bubbles: Vec<BubbleEntry>,
}

#[derive(Serialize, Deserialize)]
struct ProjectionEntry {
    mass: BlobRef,
    stiffness: BlobRef,
    load_dofs: Vec<usize>,
    load_rows: BlobRef,
}

#[derive(Serialize, Deserialize)]
struct ComponentEntry {
    archetype: usize,
    variants: Vec<VariantEntry>,
    inhomogeneity: Option<BubbleEntry>,
    projections: Option<ProjectionEntry>,
}

#[derive(Serialize, Deserialize)]
struct Sizes {
    port_spaces: Vec<(usize, usize)>,
    lifting_bubbles: Vec<usize>,
    inhomogeneity_bubbles: Vec<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    sizes: Sizes,
    spec: LibrarySpec,
    config: TrainingConfig,
    meta: TrainingMeta,
    ports: Vec<PortEntry>,
    components: Vec<ComponentEntry>,
    blob_bytes: u64,
}

#[derive(Default)]
struct BlobWriter {
    data: Vec<u8>,
}

impl BlobWriter {
    fn put(&mut self, m: &Mat<f64>) -> BlobRef {
        let offset = self.data.len() as u64;
        let start = self.data.len();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                self.data.extend_from_slice(&m[(i, j)].to_le_bytes());
            }
        }
        let sha256 = hex::encode(Sha256::digest(&self.data[start..]));
        BlobRef { offset, rows: m.nrows(), cols: m.ncols(), sha256 }
    }

    fn bubble(&mut self, b: &BubbleSpace) -> BubbleEntry {
        BubbleEntry { kind: b.kind, eigenvalues: b.eigenvalues.clone(), modes: self.put(&b.modes) }
    }
}

struct BlobReader<'a> {
    data: &'a [u8],
}

impl BlobReader<'_> {
    fn get(&self, r: &BlobRef) -> Result<Mat<f64>> {
        let len = r
            .rows
            .checked_mul(r.cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::CorruptFile("blob size overflow".into()))?;
        let start = r.offset as usize;
        let bytes = start
            .checked_add(len)
            .and_then(|end| self.data.get(start..end))
            .ok_or_else(|| Error::CorruptFile(format!("blob at {} runs past the end of the file", r.offset)))?;
        if hex::encode(Sha256::digest(bytes)) != r.sha256 {
            return Err(Error::CorruptFile(format!("checksum mismatch for blob at {}", r.offset)));
        }
        let vals: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Ok(Mat::from_fn(r.rows, r.cols, |i, j| vals[j * r.rows + i]))
    }

    fn bubble(&self, e: &BubbleEntry) -> Result<BubbleSpace> {
        Ok(BubbleSpace { kind: e.kind, modes: self.get(&e.modes)?, eigenvalues: e.eigenvalues.clone() })
    }
}

pub fn save_library(lib: &TrainedLibrary, path: &Path) -> Result<()> {
    let mut w = BlobWriter::default();
    let ports = lib
        .port_spaces
        .iter()
        .map(|p| PortEntry {
            reference_port: p.reference_port,
            spectrum: p.spectrum.clone(),
            inhomogeneity_spectrum: p.inhomogeneity_spectrum.clone(),
            n_inhomogeneity_modes: p.n_inhomogeneity_modes,
            n_samples: p.n_samples,
            modes: w.put(&p.modes),
            inner_product: w.put(&p.inner_product),
        })
        .collect();
    let components = lib
        .components
        .iter()
        .map(|c| ComponentEntry {
            archetype: c.archetype,
            variants: c
                .variants
                .iter()
                .map(|v| VariantEntry {
                    variant: v.variant,
                    liftings: w.put(&v.liftings),
                    bubbles: v.bubbles.iter().map(|b| w.bubble(b)).collect(),
                })
                .collect(),
            inhomogeneity: c.inhomogeneity.as_ref().map(|b| w.bubble(b)),
            projections: c.projections.as_ref().map(|p| ProjectionEntry {
                mass: w.put(&p.mass),
                stiffness: w.put(&p.stiffness),
                load_dofs: p.load_dofs.clone(),
                load_rows: w.put(&p.load_rows),
            }),
        })
        .collect();
    let s = lib.sizes();
    let manifest = Manifest {
        format: "prrbc-library".into(),
        version: FORMAT_VERSION,
        sizes: Sizes {
            port_spaces: s.port_spaces,
            lifting_bubbles: s.lifting_bubbles,
            inhomogeneity_bubbles: s.inhomogeneity_bubbles,
        },
        spec: lib.spec.clone(),
        config: lib.config.clone(),
        meta: lib.meta.clone(),
        ports,
        components,
        blob_bytes: w.data.len() as u64,
    };
    let json = serde_json::to_vec(&manifest)?;
    let mut f = fs::File::create(path)?;
    f.write_all(MAGIC)?;
    f.write_all(&FORMAT_VERSION.to_le_bytes())?;
    f.write_all(&(json.len() as u64).to_le_bytes())?;
    f.write_all(&json)?;
    f.write_all(&w.data)?;
    f.flush()?;
    Ok(())
}

pub fn load_library(path: &Path) -> Result<TrainedLibrary> {
    let bytes = fs::read(path)?;
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(Error::CorruptFile(format!("{} is not a library file", path.display())));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Incompatible(format!("library format {version}, expected {FORMAT_VERSION}")));
    }
    let mlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let json = 20usize
        .checked_add(mlen)
        .and_then(|end| bytes.get(20..end))
        .ok_or_else(|| Error::CorruptFile("truncated manifest".into()))?;
    let manifest: Manifest =
        serde_json::from_slice(json).map_err(|e| Error::CorruptFile(format!("manifest: {e}")))?;
    let data = &bytes[20 + mlen..];
    if data.len() as u64 != manifest.blob_bytes {
        return Err(Error::CorruptFile(format!(
            "expected {} blob bytes, found {}",
            manifest.blob_bytes,
            data.len()
        )));
    }
    let r = BlobReader { data };
    let spec = manifest.spec;
    spec.validate()?;
    let archetypes = spec.archetypes.iter().map(|a| build_archetype(&spec, a)).collect::<Result<Vec<_>>>()?;
    let port_spaces = manifest
        .ports
        .iter()
        .map(|p| {
            Ok(PortSpace {
                reference_port: p.reference_port,
                modes: r.get(&p.modes)?,
                spectrum: p.spectrum.clone(),
                inhomogeneity_spectrum: p.inhomogeneity_spectrum.clone(),
                n_inhomogeneity_modes: p.n_inhomogeneity_modes,
                inner_product: r.get(&p.inner_product)?,
                n_samples: p.n_samples,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut components = Vec::new();
    for c in &manifest.components {
        let arch = archetypes
            .iter()
            .find(|a| a.id() == c.archetype)
            .ok_or_else(|| Error::CorruptFile(format!("archetype {} missing from the spec", c.archetype)))?;
        let variants = c
            .variants
            .iter()
            .map(|v| {
                Ok(VariantData {
                    variant: v.variant,
                    liftings: r.get(&v.liftings)?,
                    bubbles: v.bubbles.iter().map(|b| r.bubble(b)).collect::<Result<_>>()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let inhomogeneity = c.inhomogeneity.as_ref().map(|b| r.bubble(b)).transpose()?;
        for v in &variants {
            if v.liftings.nrows() != arch.space.n_dofs() {
                return Err(Error::Incompatible(format!(
                    "liftings of archetype {} have {} rows, the rebuilt space has {} DOFs",
                    c.archetype,
                    v.liftings.nrows(),
                    arch.space.n_dofs()
                )));
            }
        }
        let layout = ColumnLayout::of(&variants, inhomogeneity.as_ref());
        let projections = c
            .projections
            .as_ref()
            .map(|p| {
                Ok::<_, Error>(ComponentProjections {
                    layout: layout.clone(),
                    mass: r.get(&p.mass)?,
                    stiffness: r.get(&p.stiffness)?,
                    load_dofs: p.load_dofs.clone(),
                    load_rows: r.get(&p.load_rows)?,
                })
            })
            .transpose()?;
        components.push(ArchetypeTraining { archetype: c.archetype, variants, inhomogeneity, projections });
    }
    Ok(TrainedLibrary { spec, config: manifest.config, archetypes, port_spaces, components, meta: manifest.meta })
}
