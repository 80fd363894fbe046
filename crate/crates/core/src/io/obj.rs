use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::mesh::TriMesh;
use crate::paint::{Block, TextureAtlas};
use crate::scalar::Real;

use super::{read_text, write_bytes};

pub const HEADER: &str = concat!("# carvepaint ", env!("CARGO_PKG_VERSION"));

/// One polygon: 0-based vertex indices and, optionally, texture-coordinate indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObjFace {
    pub vertices: Vec<usize>,
    pub uvs: Option<Vec<usize>>,
}

/// Positions, texture coordinates, polygons and comment lines of an OBJ file.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjDocument<T> {
    pub comments: Vec<String>,
    pub vertices: Vec<Vec3<T>>,
    pub uvs: Vec<[T; 2]>,
    pub faces: Vec<ObjFace>,
    /// `mtllib` and `usemtl` names, if any.
    pub material_lib: Option<String>,
    pub material: Option<String>,
}

impl<T: Real> Default for ObjDocument<T> {
    fn default() -> Self {
        Self { comments: Vec::new(), vertices: Vec::new(), uvs: Vec::new(), faces: Vec::new(), material_lib: None, material: None }
    }
}

fn resolve(token: &str, count: usize, what: &str, line: usize, path: &Path) -> Result<usize> {
    let err = |message: String| Error::Parse { path: path.to_path_buf(), line, message };
    let i: i64 = token.parse().map_err(|_| err(format!("bad {what} index {token:?}")))?;
    let idx = match i {
        0 => return Err(err(format!("{what} index 0 is not allowed"))),
        i if i > 0 => i as usize - 1,
        // Negative indices count back from the last element defined so far.
        i => count.checked_sub(i.unsigned_abs() as usize).ok_or_else(|| err(format!("{what} index {i} out of range")))?,
    };
    if idx >= count {
        return Err(err(format!("{what} index {i} out of range ({count} defined)")));
    }
    Ok(idx)
}

impl<T: Real> ObjDocument<T> {
    /// Parses OBJ text; `path` is only used in error messages.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut doc = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let err = |message: String| Error::Parse { path: path.to_path_buf(), line, message };
            let trimmed = raw.trim();
            if let Some(c) = trimmed.strip_prefix('#') {
                doc.comments.push(c.trim().to_string());
                continue;
            }
            let mut it = trimmed.split_whitespace();
            let Some(tag) = it.next() else { continue };
            let rest: Vec<&str> = it.collect();
            let floats = |min: usize| -> Result<Vec<T>> {
                if rest.len() < min {
                    return Err(err(format!("{tag} needs {min} numbers, got {}", rest.len())));
                }
                rest.iter()
                    .map(|s| s.parse::<f64>().ok().filter(|v| v.is_finite()).map(T::lit).ok_or_else(|| err(format!("bad number {s:?}"))))
                    .collect()
            };
            match tag {
                "v" => {
                    let v = floats(3)?;
                    doc.vertices.push(Vec3::new(v[0], v[1], v[2]));
                }
                "vt" => {
                    let v = floats(1)?;
                    doc.uvs.push([v[0], v.get(1).copied().unwrap_or_else(T::zero)]);
                }
                "f" => {
                    if rest.len() < 3 {
                        return Err(err(format!("face needs at least 3 vertices, got {}", rest.len())));
                    }
                    let mut vs = Vec::with_capacity(rest.len());
                    let mut ts = Vec::with_capacity(rest.len());
                    for tok in &rest {
                        let mut parts = tok.split('/');
                        let v = parts.next().unwrap_or("");
                        vs.push(resolve(v, doc.vertices.len(), "vertex", line, path)?);
                        match parts.next() {
                            Some(t) if !t.is_empty() => ts.push(Some(resolve(t, doc.uvs.len(), "texture", line, path)?)),
                            _ => ts.push(None),
                        }
                    }
                    let uvs = if ts.iter().all(Option::is_some) {
                        Some(ts.into_iter().flatten().collect())
                    } else if ts.iter().all(Option::is_none) {
                        None
                    } else {
                        return Err(err("face mixes vertices with and without texture coordinates".into()));
                    };
                    doc.faces.push(ObjFace { vertices: vs, uvs });
                }
                "mtllib" => doc.material_lib = rest.first().map(|s| s.to_string()),
                "usemtl" => doc.material = rest.first().map(|s| s.to_string()),
                // Normals, groups, smoothing and other records carry nothing we use.
                _ => {}
            }
        }
        Ok(doc)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?, path)
    }

    /// Triangle mesh with polygons fan-triangulated from their first vertex.
    pub fn to_trimesh(&self) -> Result<TriMesh<T>> {
        let mut faces = Vec::new();
        for f in &self.faces {
            for k in 1..f.vertices.len() - 1 {
                faces.push([f.vertices[0], f.vertices[k], f.vertices[k + 1]]);
            }
        }
        TriMesh::new(self.vertices.clone(), faces)
    }

    pub fn from_mesh(mesh: &TriMesh<T>) -> Self {
        Self::from_polygons(&mesh.vertices, mesh.faces.iter().map(|f| f.to_vec()))
    }

    pub fn from_polygons(vertices: &[Vec3<T>], faces: impl IntoIterator<Item = Vec<usize>>) -> Self {
        Self {
            comments: vec![HEADER.trim_start_matches("# ").to_string()],
            vertices: vertices.to_vec(),
            faces: faces.into_iter().map(|v| ObjFace { vertices: v, uvs: None }).collect(),
            ..Self::default()
        }
    }

    /// Mesh with three texture coordinates per face pointing into its atlas block.
    pub fn from_textured_mesh(mesh: &TriMesh<T>, atlas: &TextureAtlas<T>) -> Result<Self> {
        if atlas.face_count() != mesh.num_faces() {
            return Err(Error::invalid("atlas layout does not match mesh"));
        }
        let mut doc = Self::from_mesh(mesh);
        for (f, face) in doc.faces.iter_mut().enumerate() {
            doc.uvs.extend(atlas.face_uvs(f));
            face.uvs = Some((3 * f..3 * f + 3).collect());
        }
        Ok(doc)
    }

    /// Atlas blocks encoded in the texture coordinates written by
    /// [`ObjDocument::from_textured_mesh`] for a `width`×`height` atlas.
    pub fn atlas_blocks(&self, width: u32, height: u32) -> Result<Vec<Block>> {
        let (w, h) = (width as f64, height as f64);
        let px = |t: T, scale: f64| (t.to_f64_lossy() * scale).round();
        self.faces
            .iter()
            .enumerate()
            .map(|(f, face)| {
                let bad = || Error::invalid(format!("face {} has no atlas block texture coordinates", f + 1));
                let t = face.uvs.as_ref().filter(|t| t.len() == 3).ok_or_else(bad)?;
                let [a, b, c] = [self.uvs[t[0]], self.uvs[t[1]], self.uvs[t[2]]];
                let (x, y) = (px(a[0], w), h - px(a[1], h));
                let size = px(b[0], w) - x;
                let consistent = size >= 1.0
                    && x >= 0.0
                    && y >= 0.0
                    && h - px(b[1], h) == y
                    && px(c[0], w) == x
                    && h - px(c[1], h) == y + size;
                if !consistent {
                    return Err(bad());
                }
                Ok(Block { x: x as u32, y: y as u32, size: size as u32 })
            })
            .collect()
    }

    /// Serializes with six decimals per coordinate, records in a fixed order.
    pub fn to_obj_string(&self) -> String {
        let mut s = String::new();
        for c in &self.comments {
            let _ = writeln!(s, "# {c}");
        }
        if let Some(lib) = &self.material_lib {
            let _ = writeln!(s, "mtllib {lib}");
        }
        let fmt = |v: T| {
            let v = v.to_f64_lossy();
            // Avoid "-0.000000".
            let r = format!("{v:.6}");
            if r.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') { "0.000000".to_string() } else { r }
        };
        for v in &self.vertices {
            let _ = writeln!(s, "v {} {} {}", fmt(v.x), fmt(v.y), fmt(v.z));
        }
        for t in &self.uvs {
            let _ = writeln!(s, "vt {} {}", fmt(t[0]), fmt(t[1]));
        }
        if let Some(m) = &self.material {
            let _ = writeln!(s, "usemtl {m}");
        }
        for f in &self.faces {
            s.push('f');
            match &f.uvs {
                Some(t) => {
                    for (v, t) in f.vertices.iter().zip(t) {
                        let _ = write!(s, " {}/{}", v + 1, t + 1);
                    }
                }
                None => {
                    for v in &f.vertices {
                        let _ = write!(s, " {}", v + 1);
                    }
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_bytes(path, self.to_obj_string().as_bytes())
    }
}

pub fn read_obj<T: Real>(path: &Path) -> Result<ObjDocument<T>> {
    ObjDocument::read(path)
}

/// Writes `mesh`; with an atlas, also writes a material file next to it
/// that references `texture_file`.
pub fn write_obj<T: Real>(mesh: &TriMesh<T>, texture: Option<(&TextureAtlas<T>, &str)>, path: &Path) -> Result<()> {
    let Some((atlas, texture_file)) = texture else {
        return ObjDocument::from_mesh(mesh).write(path);
    };
    let mut doc = ObjDocument::from_textured_mesh(mesh, atlas)?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("mesh");
    let mtl_name = format!("{stem}.mtl");
    doc.material_lib = Some(mtl_name.clone());
    doc.material = Some("atlas".into());
    let mtl = format!("{HEADER}\nnewmtl atlas\nKa 1 1 1\nKd 1 1 1\nKs 0 0 0\nillum 1\nmap_Kd {texture_file}\n");
    write_bytes(&path.with_file_name(mtl_name), mtl.as_bytes())?;
    doc.write(path)
}
