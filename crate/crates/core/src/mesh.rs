//! Indexed triangle mesh and the adjacency queries built on top of it.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::scalar::Real;

pub type Face = [usize; 3];

/// Undirected edge key with the smaller vertex index first.
#[inline]
pub fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriMesh<T> {
    pub vertices: Vec<Vec3<T>>,
    pub faces: Vec<Face>,
}

impl<T: Real> TriMesh<T> {
    /// Builds a mesh, checking index bounds and repeated indices.
    pub fn new(vertices: Vec<Vec3<T>>, faces: Vec<Face>) -> Result<Self> {
        let mesh = Self { vertices, faces };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn empty() -> Self {
        Self { vertices: Vec::new(), faces: Vec::new() }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        for (fi, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&v| v >= n) {
                return Err(Error::invalid(format!("face {fi} references a vertex >= {n}")));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::invalid(format!("face {fi} repeats a vertex index")));
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    #[inline]
    pub fn corners(&self, f: usize) -> [Vec3<T>; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Unnormalized normal with length equal to twice the face area.
    #[inline]
    pub fn face_cross(&self, f: usize) -> Vec3<T> {
        let [a, b, c] = self.corners(f);
        (b - a).cross(c - a)
    }

    pub fn face_area(&self, f: usize) -> T {
        self.face_cross(f).norm() * T::lit(0.5)
    }

    /// Unit normal; zero for degenerate faces.
    pub fn face_normal(&self, f: usize) -> Vec3<T> {
        self.face_cross(f).normalized()
    }

    pub fn face_centroid(&self, f: usize) -> Vec3<T> {
        let [a, b, c] = self.corners(f);
        (a + b + c) / T::lit(3.0)
    }

    pub fn face_areas(&self) -> Vec<T> {
        (0..self.faces.len()).into_par_iter().map(|f| self.face_area(f)).collect()
    }

    pub fn face_normals(&self) -> Vec<Vec3<T>> {
        (0..self.faces.len()).into_par_iter().map(|f| self.face_normal(f)).collect()
    }

    /// Area-weighted vertex normals; isolated vertices get zero.
    pub fn vertex_normals(&self) -> Vec<Vec3<T>> {
        let mut acc = vec![Vec3::zero(); self.vertices.len()];
        for (fi, f) in self.faces.iter().enumerate() {
            let n = self.face_cross(fi);
            for &v in f {
                acc[v] += n;
            }
        }
        acc.into_iter().map(Vec3::normalized).collect()
    }

    /// One third of the summed incident face areas per vertex.
    pub fn vertex_areas(&self) -> Vec<T> {
        let mut acc = vec![T::zero(); self.vertices.len()];
        let third = T::one() / T::lit(3.0);
        for fi in 0..self.faces.len() {
            let a = self.face_area(fi) * third;
            for &v in &self.faces[fi] {
                acc[v] += a;
            }
        }
        acc
    }

    pub fn bounding_box(&self) -> Option<(Vec3<T>, Vec3<T>)> {
        let first = *self.vertices.first()?;
        Some(
            self.vertices
                .iter()
                .fold((first, first), |(lo, hi), &v| (lo.min(v), hi.max(v))),
        )
    }

    pub fn bbox_diagonal(&self) -> T {
        self.bounding_box().map(|(lo, hi)| (hi - lo).norm()).unwrap_or_else(T::zero)
    }

    pub fn total_area(&self) -> T {
        self.face_areas().into_iter().sum()
    }

    /// Signed enclosed volume (divergence theorem); positive for outward winding.
    pub fn signed_volume(&self) -> T {
        let sixth = T::one() / T::lit(6.0);
        self.faces
            .iter()
            .map(|&[a, b, c]| {
                self.vertices[a].dot(self.vertices[b].cross(self.vertices[c])) * sixth
            })
            .sum()
    }

    /// Map from undirected edge to the faces containing it, in face order.
    pub fn edge_faces(&self) -> HashMap<(usize, usize), Vec<usize>> {
        let mut map: HashMap<(usize, usize), Vec<usize>> = HashMap::with_capacity(self.faces.len() * 2);
        for (fi, f) in self.faces.iter().enumerate() {
            for k in 0..3 {
                map.entry(edge_key(f[k], f[(k + 1) % 3])).or_default().push(fi);
            }
        }
        map
    }

    /// Sorted list of undirected edges.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<_> = self
            .faces
            .iter()
            .flat_map(|f| (0..3).map(move |k| edge_key(f[k], f[(k + 1) % 3])))
            .collect();
        e.sort_unstable();
        e.dedup();
        e
    }

    /// Sorted neighbor lists.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut nbrs = vec![Vec::new(); self.vertices.len()];
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                nbrs[a].push(b);
                nbrs[b].push(a);
            }
        }
        for n in &mut nbrs {
            n.sort_unstable();
            n.dedup();
        }
        nbrs
    }

    pub fn vertex_faces(&self) -> Vec<Vec<usize>> {
        let mut vf = vec![Vec::new(); self.vertices.len()];
        for (fi, f) in self.faces.iter().enumerate() {
            for &v in f {
                vf[v].push(fi);
            }
        }
        vf
    }

    /// Faces sharing an edge with each face.
    pub fn face_neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.faces.len()];
        for faces in self.edge_faces().values() {
            for &a in faces {
                for &b in faces {
                    if a != b {
                        adj[a].push(b);
                    }
                }
            }
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        adj
    }

    pub fn topology(&self) -> Topology {
        let edge_faces = self.edge_faces();
        let mut boundary = 0;
        let mut manifold = 0;
        let mut nonmanifold = 0;
        for faces in edge_faces.values() {
            match faces.len() {
                1 => boundary += 1,
                2 => manifold += 1,
                _ => nonmanifold += 1,
            }
        }
        let referenced = {
            let mut used = vec![false; self.vertices.len()];
            for f in &self.faces {
                for &v in f {
                    used[v] = true;
                }
            }
            used.iter().filter(|&&u| u).count()
        };
        Topology {
            vertices: self.vertices.len(),
            referenced_vertices: referenced,
            edges: edge_faces.len(),
            faces: self.faces.len(),
            boundary_edges: boundary,
            manifold_edges: manifold,
            nonmanifold_edges: nonmanifold,
            pinched_vertices: self.pinched_vertex_count(),
        }
    }

    /// Vertices whose incident faces form more than one edge-connected fan.
    pub fn pinched_vertex_count(&self) -> usize {
        let vf = self.vertex_faces();
        let mut count = 0;
        for (v, faces) in vf.iter().enumerate() {
            if faces.len() < 2 {
                continue;
            }
            // Union faces that share an edge through v.
            let mut parent: Vec<usize> = (0..faces.len()).collect();
            fn find(p: &mut [usize], mut x: usize) -> usize {
                while p[x] != x {
                    p[x] = p[p[x]];
                    x = p[x];
                }
                x
            }
            let mut by_other: HashMap<usize, usize> = HashMap::new();
            for (slot, &fi) in faces.iter().enumerate() {
                for &w in &self.faces[fi] {
                    if w == v {
                        continue;
                    }
                    if let Some(&other) = by_other.get(&w) {
                        let (ra, rb) = (find(&mut parent, slot), find(&mut parent, other));
                        parent[ra] = rb;
                    } else {
                        by_other.insert(w, slot);
                    }
                }
            }
            let roots = (0..faces.len())
                .filter(|&s| find(&mut parent, s) == s)
                .count();
            if roots > 1 {
                count += 1;
            }
        }
        count
    }

    pub fn euler_characteristic(&self) -> i64 {
        let t = self.topology();
        t.referenced_vertices as i64 - t.edges as i64 + t.faces as i64
    }

    /// Keeps only faces for which `keep` is true; vertices are untouched.
    pub fn retain_faces(&self, mut keep: impl FnMut(usize) -> bool) -> Self {
        let faces = (0..self.faces.len())
            .filter(|&f| keep(f))
            .map(|f| self.faces[f])
            .collect();
        Self { vertices: self.vertices.clone(), faces }
    }

    pub fn cast<U: Real>(&self) -> TriMesh<U> {
        TriMesh {
            vertices: self.vertices.iter().map(|v| v.cast()).collect(),
            faces: self.faces.clone(),
        }
    }
}

/// Edge and vertex statistics of a mesh.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Topology {
    pub vertices: usize,
    pub referenced_vertices: usize,
    pub edges: usize,
    pub faces: usize,
    pub boundary_edges: usize,
    pub manifold_edges: usize,
    pub nonmanifold_edges: usize,
    pub pinched_vertices: usize,
}

impl Topology {
    pub fn is_closed_manifold(&self) -> bool {
        self.boundary_edges == 0 && self.nonmanifold_edges == 0 && self.faces > 0
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.referenced_vertices as i64 - self.edges as i64 + self.faces as i64
    }
}

/// Procedural meshes used by tests, examples and the pipeline's fixtures.
pub mod shapes {
    use super::*;

    /// Latitude/longitude sphere with poles on the z axis.
    ///
    /// `rings` latitude bands and `segments` longitude divisions; vertices land
    /// exactly on the sphere and include the points on the ±x and ±y axes
    /// whenever `segments` is a multiple of 4 and `rings` is even.
    pub fn uv_sphere<T: Real>(center: Vec3<T>, radius: T, rings: usize, segments: usize) -> TriMesh<T> {
        assert!(rings >= 2 && segments >= 3);
        let mut vertices = vec![center + Vec3::new(T::zero(), T::zero(), radius)];
        for r in 1..rings {
            let theta = T::PI() * T::from_usize_lossy(r) / T::from_usize_lossy(rings);
            for s in 0..segments {
                let phi = T::TAU() * T::from_usize_lossy(s) / T::from_usize_lossy(segments);
                vertices.push(
                    center
                        + Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos())
                            * radius,
                );
            }
        }
        vertices.push(center - Vec3::new(T::zero(), T::zero(), radius));
        let south = vertices.len() - 1;
        let ring = |r: usize, s: usize| 1 + (r - 1) * segments + s % segments;
        let mut faces = Vec::new();
        for s in 0..segments {
            faces.push([0, ring(1, s), ring(1, s + 1)]);
        }
        for r in 1..rings - 1 {
            for s in 0..segments {
                let (a, b, c, d) = (ring(r, s), ring(r + 1, s), ring(r + 1, s + 1), ring(r, s + 1));
                faces.push([a, b, c]);
                faces.push([a, c, d]);
            }
        }
        for s in 0..segments {
            faces.push([south, ring(rings - 1, s + 1), ring(rings - 1, s)]);
        }
        TriMesh { vertices, faces }
    }

    /// Regular grid in the plane z = 0 with `nx` × `ny` vertices spanning `size`.
    pub fn plane_grid<T: Real>(nx: usize, ny: usize, size_x: T, size_y: T) -> TriMesh<T> {
        assert!(nx >= 2 && ny >= 2);
        let mut vertices = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                vertices.push(Vec3::new(
                    size_x * T::from_usize_lossy(i) / T::from_usize_lossy(nx - 1),
                    size_y * T::from_usize_lossy(j) / T::from_usize_lossy(ny - 1),
                    T::zero(),
                ));
            }
        }
        let mut faces = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let a = j * nx + i;
                let (b, c, d) = (a + 1, a + nx + 1, a + nx);
                faces.push([a, b, c]);
                faces.push([a, c, d]);
            }
        }
        TriMesh { vertices, faces }
    }

    /// Axis-aligned box surface split into two triangles per side, outward winding.
    pub fn cuboid<T: Real>(lo: Vec3<T>, hi: Vec3<T>) -> TriMesh<T> {
        let v = |i: usize| {
            Vec3::new(
                if i & 1 == 0 { lo.x } else { hi.x },
                if i & 2 == 0 { lo.y } else { hi.y },
                if i & 4 == 0 { lo.z } else { hi.z },
            )
        };
        let vertices = (0..8).map(v).collect();
        let quads = [
            [0, 2, 3, 1], // -z
            [4, 5, 7, 6], // +z
            [0, 1, 5, 4], // -y
            [2, 6, 7, 3], // +y
            [0, 4, 6, 2], // -x
            [1, 3, 7, 5], // +x
        ];
        let faces = quads
            .iter()
            .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
            .collect();
        TriMesh { vertices, faces }
    }

    /// Closed surface of revolution about the z axis.
    ///
    /// `profile` is a polyline of (radius, height) pairs whose first and last
    /// points lie on the axis (radius 0); traversing it must keep the solid
    /// on the left so that faces wind outward.
    pub fn revolve<T: Real>(profile: &[(T, T)], segments: usize) -> TriMesh<T> {
        assert!(profile.len() >= 3 && segments >= 3);
        assert!(profile[0].0 == T::zero() && profile[profile.len() - 1].0 == T::zero());
        let mut vertices = vec![Vec3::new(T::zero(), T::zero(), profile[0].1)];
        let inner = &profile[1..profile.len() - 1];
        for &(r, z) in inner {
            for s in 0..segments {
                let phi = T::TAU() * T::from_usize_lossy(s) / T::from_usize_lossy(segments);
                vertices.push(Vec3::new(r * phi.cos(), r * phi.sin(), z));
            }
        }
        vertices.push(Vec3::new(T::zero(), T::zero(), profile[profile.len() - 1].1));
        let last = vertices.len() - 1;
        let ring = |r: usize, s: usize| 1 + r * segments + s % segments;
        let mut faces = Vec::new();
        for s in 0..segments {
            faces.push([0, ring(0, s + 1), ring(0, s)]);
        }
        for r in 0..inner.len() - 1 {
            for s in 0..segments {
                let (a, b, c, d) = (ring(r, s), ring(r, s + 1), ring(r + 1, s + 1), ring(r + 1, s));
                faces.push([a, b, c]);
                faces.push([a, c, d]);
            }
        }
        let lr = inner.len() - 1;
        for s in 0..segments {
            faces.push([last, ring(lr, s), ring(lr, s + 1)]);
        }
        TriMesh { vertices, faces }
    }

    /// Thick-walled cup opening toward +z: outer radius `outer`, inner radius
    /// `inner`, height `height`, floor thickness `floor`.
    pub fn cup<T: Real>(outer: T, inner: T, height: T, floor: T, segments: usize, wall_rings: usize) -> TriMesh<T> {
        let mut profile = vec![(T::zero(), T::zero()), (outer, T::zero())];
        let n = wall_rings.max(1);
        for k in 1..=n {
            profile.push((outer, height * T::from_usize_lossy(k) / T::from_usize_lossy(n)));
        }
        for k in 0..n {
            let z = height - (height - floor) * T::from_usize_lossy(k) / T::from_usize_lossy(n);
            profile.push((inner, z));
        }
        profile.push((inner, floor));
        profile.push((T::zero(), floor));
        profile.dedup();
        revolve(&profile, segments)
    }

    /// A bowl whose outer wall flares linearly from `base` radius at z = 0 to
    /// `top` radius at `height`; the wall is `wall` thick horizontally and the
    /// interior floor sits at `floor`.
    pub fn bowl<T: Real>(base: T, top: T, height: T, wall: T, floor: T, segments: usize, wall_rings: usize) -> TriMesh<T> {
        let n = wall_rings.max(1);
        let radius_at = |z: T| base + (top - base) * z / height;
        let mut profile = vec![(T::zero(), T::zero()), (base, T::zero())];
        for k in 1..=n {
            let z = height * T::from_usize_lossy(k) / T::from_usize_lossy(n);
            profile.push((radius_at(z), z));
        }
        for k in 0..=n {
            let z = height - (height - floor) * T::from_usize_lossy(k) / T::from_usize_lossy(n);
            profile.push((radius_at(z) - wall, z));
        }
        profile.push((T::zero(), floor));
        profile.dedup();
        revolve(&profile, segments)
    }
}
