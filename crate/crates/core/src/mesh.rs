//! Conforming triangular meshes of the archetype geometries.
//!
//! Rectangles and T shapes are built on a structured lattice. The diagonal of
//! each quad is mirrored about the vertical center line so that every mesh is
//! symmetric under `x -> width - x`, which lets a mirrored placement reuse the
//! same archetype.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Label of a boundary segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryTag {
    Left,
    Right,
    Top,
    Bottom,
    StemLeft,
    StemRight,
    StemBottom,
}

impl BoundaryTag {
    pub const ALL: [BoundaryTag; 7] = [
        BoundaryTag::Left,
        BoundaryTag::Right,
        BoundaryTag::Top,
        BoundaryTag::Bottom,
        BoundaryTag::StemLeft,
        BoundaryTag::StemRight,
        BoundaryTag::StemBottom,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryTag::Left => "left",
            BoundaryTag::Right => "right",
            BoundaryTag::Top => "top",
            BoundaryTag::Bottom => "bottom",
            BoundaryTag::StemLeft => "stem_left",
            BoundaryTag::StemRight => "stem_right",
            BoundaryTag::StemBottom => "stem_bottom",
        }
    }

    /// Tag seen after reflecting the geometry about its vertical center line.
    pub fn mirrored(self) -> Self {
        match self {
            BoundaryTag::Left => BoundaryTag::Right,
            BoundaryTag::Right => BoundaryTag::Left,
            BoundaryTag::StemLeft => BoundaryTag::StemRight,
            BoundaryTag::StemRight => BoundaryTag::StemLeft,
            t => t,
        }
    }
}

impl fmt::Display for BoundaryTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BoundaryTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        BoundaryTag::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown boundary tag {s:?}")))
    }
}

/// Boundary edge, oriented as in its owning triangle (outward normal on the right).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub tag: BoundaryTag,
    pub triangle: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<[f64; 2]>,
    /// Counter-clockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    pub boundary: Vec<BoundaryEdge>,
    /// Longest edge length.
    pub characteristic_h: f64,
}

/// Dimensions of a T: a flange resting on a centered stem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TeeDims {
    pub flange_width: f64,
    pub flange_height: f64,
    pub stem_width: f64,
    pub stem_height: f64,
}

impl TeeDims {
    pub fn area(&self) -> f64 {
        self.flange_width * self.flange_height + self.stem_width * self.stem_height
    }
}

impl Mesh {
    /// Builds a mesh from raw arrays, tagging boundary edges with `tagger(a, b)`.
    pub fn from_parts(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        tagger: impl Fn([f64; 2], [f64; 2]) -> Result<BoundaryTag>,
    ) -> Result<Mesh> {
        let mut edges: HashMap<(usize, usize), (usize, [usize; 2], usize)> = HashMap::new();
        let mut h = 0.0f64;
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= vertices.len()) {
                return invalid(format!("triangle {t} references a missing vertex"));
            }
            if signed_area(&vertices, tri) <= 0.0 {
                return invalid(format!("triangle {t} is degenerate or clockwise"));
            }
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                h = h.max(dist(vertices[a], vertices[b]));
                let e = edges.entry((a.min(b), a.max(b))).or_insert((0, [a, b], t));
                e.0 += 1;
            }
        }
        let mut boundary = Vec::new();
        for (_, (count, [a, b], t)) in edges {
            match count {
                1 => boundary.push(BoundaryEdge { vertices: [a, b], tag: tagger(vertices[a], vertices[b])?, triangle: t }),
                2 => {}
                _ => return invalid("non-manifold edge shared by more than two triangles"),
            }
        }
        boundary.sort_by(|x, y| (x.tag, x.vertices).cmp(&(y.tag, y.vertices)));
        Ok(Mesh { vertices, triangles, boundary, characteristic_h: h })
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn area(&self) -> f64 {
        self.triangles.iter().map(|t| signed_area(&self.vertices, t)).sum()
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        signed_area(&self.vertices, &self.triangles[t])
    }

    /// Number of distinct edges.
    pub fn n_edges(&self) -> usize {
        let mut set = std::collections::HashSet::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                set.insert((a.min(b), a.max(b)));
            }
        }
        set.len()
    }

    /// `V - E + F`; one for a simply connected mesh.
    pub fn euler_characteristic(&self) -> i64 {
        self.n_vertices() as i64 - self.n_edges() as i64 + self.n_triangles() as i64
    }

    pub fn has_tag(&self, tag: BoundaryTag) -> bool {
        self.boundary.iter().any(|e| e.tag == tag)
    }

    pub fn tags(&self) -> Vec<BoundaryTag> {
        let mut t: Vec<_> = self.boundary.iter().map(|e| e.tag).collect();
        t.dedup();
        t
    }

    pub fn edges_with(&self, tag: BoundaryTag) -> impl Iterator<Item = &BoundaryEdge> {
        self.boundary.iter().filter(move |e| e.tag == tag)
    }

    /// Bounding box `[xmin, ymin, xmax, ymax]`.
    pub fn bounds(&self) -> [f64; 4] {
        self.vertices.iter().fold(
            [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY],
            |b, v| [b[0].min(v[0]), b[1].min(v[1]), b[2].max(v[0]), b[3].max(v[1])],
        )
    }

    /// Writes a plain-text description: vertices, triangles, tagged boundary edges.
    pub fn write_text(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "vertices {}", self.vertices.len())?;
        for v in &self.vertices {
            writeln!(w, "{:.17e} {:.17e}", v[0], v[1])?;
        }
        writeln!(w, "triangles {}", self.triangles.len())?;
        for t in &self.triangles {
            writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
        }
        writeln!(w, "boundary {}", self.boundary.len())?;
        for e in &self.boundary {
            writeln!(w, "{} {} {}", e.vertices[0], e.vertices[1], e.tag)?;
        }
        Ok(())
    }

    /// Reads the format produced by [`Mesh::write_text`].
    pub fn read_text(r: impl BufRead) -> Result<Mesh> {
        let lines: Vec<String> = r.lines().collect::<std::io::Result<_>>()?;
        let mut it = lines.iter().map(|s| s.trim()).filter(|s| !s.is_empty());
        let bad = |m: &str| Error::CorruptFile(format!("mesh text: {m}"));
        let mut next_fields = |what: &str| -> Result<Vec<String>> {
            let l = it.next().ok_or_else(|| bad(&format!("truncated {what}")))?;
            Ok(l.split_whitespace().map(str::to_owned).collect())
        };
        let header = |name: &str, next: &mut dyn FnMut(&str) -> Result<Vec<String>>| -> Result<usize> {
            let f = next(name)?;
            if f.len() != 2 || f[0] != name {
                return Err(bad(&format!("expected section {name}")));
            }
            f[1].parse().map_err(|_| bad("section count"))
        };
        let nv = header("vertices", &mut next_fields)?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let f = next_fields("vertices")?;
            let p: Vec<f64> = f.iter().filter_map(|s| s.parse().ok()).collect();
            if p.len() != 2 {
                return Err(bad("vertex line"));
            }
            vertices.push([p[0], p[1]]);
        }
        let nt = header("triangles", &mut next_fields)?;
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let f = next_fields("triangles")?;
            let p: Vec<usize> = f.iter().filter_map(|s| s.parse().ok()).collect();
            if p.len() != 3 {
                return Err(bad("triangle line"));
            }
            triangles.push([p[0], p[1], p[2]]);
        }
        let nb = header("boundary", &mut next_fields)?;
        let mut tags = HashMap::new();
        for _ in 0..nb {
            let f = next_fields("boundary")?;
            if f.len() != 3 {
                return Err(bad("boundary line"));
            }
            let a: usize = f[0].parse().map_err(|_| bad("boundary vertex"))?;
            let b: usize = f[1].parse().map_err(|_| bad("boundary vertex"))?;
            tags.insert((a.min(b), a.max(b)), f[2].parse::<BoundaryTag>()?);
        }
        let index: HashMap<[u64; 2], usize> =
            vertices.iter().enumerate().map(|(i, v)| ([v[0].to_bits(), v[1].to_bits()], i)).collect();
        let lookup = |p: [f64; 2], q: [f64; 2]| -> Result<BoundaryTag> {
            let find = |x: [f64; 2]| index.get(&[x[0].to_bits(), x[1].to_bits()]).copied();
            let (a, b) = (find(p).ok_or_else(|| bad("edge"))?, find(q).ok_or_else(|| bad("edge"))?);
            tags.get(&(a.min(b), a.max(b))).copied().ok_or_else(|| bad("untagged boundary edge"))
        };
        let m = Mesh::from_parts(vertices.clone(), triangles, lookup)?;
        if m.boundary.len() != nb {
            return Err(bad("boundary edge count"));
        }
        Ok(m)
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

pub(crate) fn signed_area(v: &[[f64; 2]], t: &[usize; 3]) -> f64 {
    let (a, b, c) = (v[t[0]], v[t[1]], v[t[2]]);
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

/// Splits the quad with lower-left corner `v00` into two counter-clockwise triangles.
/// `slash` picks the diagonal from lower-left to upper-right.
fn split_quad(v00: usize, v10: usize, v01: usize, v11: usize, slash: bool, out: &mut Vec<[usize; 3]>) {
    if slash {
        out.push([v00, v10, v11]);
        out.push([v00, v11, v01]);
    } else {
        out.push([v00, v10, v01]);
        out.push([v10, v11, v01]);
    }
}

/// Rectangle `[0, length] x [0, height]` split into `nx * ny` quads, two triangles each.
pub fn build_rectangle_mesh(length: f64, height: f64, nx: usize, ny: usize) -> Result<Mesh> {
    if !(length > 0.0 && height > 0.0) || nx == 0 || ny == 0 {
        return invalid(format!("rectangle {length}x{height} with {nx}x{ny} cells"));
    }
    let (dx, dy) = (length / nx as f64, height / ny as f64);
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push([i as f64 * dx, j as f64 * dy]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let slash = (i as f64 + 0.5) * dx < 0.5 * length;
            split_quad(idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1), slash, &mut triangles);
        }
    }
    let tol = 1e-9 * length.max(height);
    Mesh::from_parts(vertices, triangles, |a, b| {
        let m = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
        if (a[0] - b[0]).abs() < tol && m[0].abs() < tol {
            Ok(BoundaryTag::Left)
        } else if (a[0] - b[0]).abs() < tol && (m[0] - length).abs() < tol {
            Ok(BoundaryTag::Right)
        } else if m[1].abs() < tol {
            Ok(BoundaryTag::Bottom)
        } else if (m[1] - height).abs() < tol {
            Ok(BoundaryTag::Top)
        } else {
            invalid(format!("edge {a:?}-{b:?} is not on the rectangle boundary"))
        }
    })
}

fn integral_ratio(a: f64, b: f64, what: &str) -> Result<usize> {
    let r = a / b;
    let n = r.round();
    if (r - n).abs() > 1e-9 * r.abs().max(1.0) || n < 0.0 {
        return invalid(format!("{what}: {a} is not a multiple of the cell size {b}"));
    }
    Ok(n as usize)
}

/// T shape: flange `[0, fw] x [0, fh]` on a centered stem of height `sh` below `y = 0`.
///
/// `nx` and `ny` divide the flange; the stem reuses the same cell size, so its
/// width, offset and height must be whole multiples of it.
pub fn build_tee_mesh(dims: TeeDims, nx: usize, ny: usize) -> Result<Mesh> {
    let TeeDims { flange_width: fw, flange_height: fh, stem_width: sw, stem_height: sh } = dims;
    if !(fw > 0.0 && fh > 0.0 && sw > 0.0 && sh > 0.0) || sw > fw || nx == 0 || ny == 0 {
        return invalid(format!("invalid T dimensions {dims:?} with {nx}x{ny} cells"));
    }
    let (dx, dy) = (fw / nx as f64, fh / ny as f64);
    let x0 = 0.5 * (fw - sw);
    let i0 = integral_ratio(x0, dx, "stem offset")?;
    let ns = integral_ratio(sw, dx, "stem width")?;
    let nys = integral_ratio(sh, dy, "stem height")?;
    if ns == 0 || nys == 0 {
        return invalid("stem must span at least one cell");
    }
    let nj = nys + ny;
    let mut map = vec![usize::MAX; (nx + 1) * (nj + 1)];
    let mut vertices = Vec::new();
    let mut vid = |i: usize, j: usize, vertices: &mut Vec<[f64; 2]>| -> usize {
        let k = j * (nx + 1) + i;
        if map[k] == usize::MAX {
            map[k] = vertices.len();
            vertices.push([i as f64 * dx, (j as f64 - nys as f64) * dy]);
        }
        map[k]
    };
    let mut triangles = Vec::new();
    let mut quad = |i: usize, j: usize, vertices: &mut Vec<[f64; 2]>, tris: &mut Vec<[usize; 3]>| {
        let v00 = vid(i, j, vertices);
        let v10 = vid(i + 1, j, vertices);
        let v01 = vid(i, j + 1, vertices);
        let v11 = vid(i + 1, j + 1, vertices);
        split_quad(v00, v10, v01, v11, (i as f64 + 0.5) * dx < 0.5 * fw, tris);
    };
    for j in 0..nys {
        for i in i0..i0 + ns {
            quad(i, j, &mut vertices, &mut triangles);
        }
    }
    for j in nys..nj {
        for i in 0..nx {
            quad(i, j, &mut vertices, &mut triangles);
        }
    }
    let tol = 1e-9 * fw.max(fh);
    Mesh::from_parts(vertices, triangles, |a, b| {
        let m = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
        let vertical = (a[0] - b[0]).abs() < tol;
        if m[1] > 0.0 {
            if vertical && m[0].abs() < tol {
                return Ok(BoundaryTag::Left);
            }
            if vertical && (m[0] - fw).abs() < tol {
                return Ok(BoundaryTag::Right);
            }
            if (m[1] - fh).abs() < tol {
                return Ok(BoundaryTag::Top);
            }
        } else if m[1].abs() < tol {
            return Ok(BoundaryTag::Bottom);
        } else {
            if vertical && (m[0] - x0).abs() < tol {
                return Ok(BoundaryTag::StemLeft);
            }
            if vertical && (m[0] - x0 - sw).abs() < tol {
                return Ok(BoundaryTag::StemRight);
            }
            if (m[1] + sh).abs() < tol {
                return Ok(BoundaryTag::StemBottom);
            }
        }
        invalid(format!("edge {a:?}-{b:?} is not on the T boundary"))
    })
}
