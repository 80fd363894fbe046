//! Mutable triangle soup with vertex→face incidence, used by the local
//! topology edits (split, collapse, flip).

use crate::math::Vec3;
use crate::mesh::{edge_key, Face, TriMesh};
use crate::scalar::Real;

#[derive(Clone, Debug)]
pub(crate) struct EditMesh<T> {
    pub pos: Vec<Vec3<T>>,
    pub faces: Vec<Face>,
    pub face_alive: Vec<bool>,
    pub vert_alive: Vec<bool>,
    /// Alive faces incident to each vertex.
    pub vf: Vec<Vec<usize>>,
}

/// Rotates `f` so that it reads `[a, b, c]` with `a`, `b` consecutive in face order.
fn orient_on(f: Face, a: usize, b: usize) -> Option<(usize, usize, usize)> {
    for k in 0..3 {
        let (x, y, z) = (f[k], f[(k + 1) % 3], f[(k + 2) % 3]);
        if (x == a && y == b) || (x == b && y == a) {
            return Some((x, y, z));
        }
    }
    None
}

impl<T: Real> EditMesh<T> {
    pub fn from_mesh(mesh: &TriMesh<T>) -> Self {
        let mut vf = vec![Vec::new(); mesh.vertices.len()];
        for (fi, f) in mesh.faces.iter().enumerate() {
            for &v in f {
                vf[v].push(fi);
            }
        }
        Self {
            pos: mesh.vertices.clone(),
            faces: mesh.faces.clone(),
            face_alive: vec![true; mesh.faces.len()],
            vert_alive: vec![true; mesh.vertices.len()],
            vf,
        }
    }

    /// Compacts away dead faces and vertices no alive face references,
    /// preserving the relative order of both.
    pub fn to_mesh(&self) -> TriMesh<T> {
        let mut used = vec![false; self.pos.len()];
        for (f, _) in self.faces.iter().zip(&self.face_alive).filter(|(_, &a)| a) {
            for &v in f {
                used[v] = true;
            }
        }
        let mut remap = vec![usize::MAX; self.pos.len()];
        let mut vertices = Vec::new();
        for (v, &u) in used.iter().enumerate() {
            if u {
                remap[v] = vertices.len();
                vertices.push(self.pos[v]);
            }
        }
        let faces = self
            .faces
            .iter()
            .zip(&self.face_alive)
            .filter(|(_, &a)| a)
            .map(|(f, _)| [remap[f[0]], remap[f[1]], remap[f[2]]])
            .collect();
        TriMesh { vertices, faces }
    }

    pub fn edge_faces(&self, a: usize, b: usize) -> Vec<usize> {
        self.vf[a]
            .iter()
            .copied()
            .filter(|&f| self.faces[f].contains(&b))
            .collect()
    }

    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        let mut n: Vec<usize> = self.vf[v]
            .iter()
            .flat_map(|&f| self.faces[f])
            .filter(|&w| w != v)
            .collect();
        n.sort_unstable();
        n.dedup();
        n
    }

    pub fn valence(&self, v: usize) -> usize {
        self.neighbors(v).len()
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.neighbors(v).into_iter().any(|w| self.edge_faces(v, w).len() == 1)
    }

    /// Sorted unique edges of alive faces.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<_> = self
            .faces
            .iter()
            .zip(&self.face_alive)
            .filter(|(_, &alive)| alive)
            .flat_map(|(f, _)| (0..3).map(move |k| edge_key(f[k], f[(k + 1) % 3])))
            .collect();
        e.sort_unstable();
        e.dedup();
        e
    }

    pub fn edge_length(&self, a: usize, b: usize) -> T {
        self.pos[a].distance(self.pos[b])
    }

    fn face_cross_with(&self, f: Face, moved: &[(usize, Vec3<T>)]) -> Vec3<T> {
        let p = |v: usize| {
            moved
                .iter()
                .find(|(m, _)| *m == v)
                .map(|(_, p)| *p)
                .unwrap_or(self.pos[v])
        };
        let (a, b, c) = (p(f[0]), p(f[1]), p(f[2]));
        (b - a).cross(c - a)
    }

    fn face_cross(&self, f: Face) -> Vec3<T> {
        self.face_cross_with(f, &[])
    }

    fn remove_face(&mut self, fi: usize) {
        self.face_alive[fi] = false;
        for v in self.faces[fi] {
            self.vf[v].retain(|&g| g != fi);
        }
    }

    fn add_face(&mut self, f: Face) -> usize {
        let fi = self.faces.len();
        self.faces.push(f);
        self.face_alive.push(true);
        for v in f {
            self.vf[v].push(fi);
        }
        fi
    }


    /// Splits all listed edges at their midpoints simultaneously. A face with
    /// one marked edge becomes two triangles, with two marked edges three, and
    /// with three marked edges four. Returns the number of edges split.
    pub fn split_marked(&mut self, edges: &[(usize, usize)]) -> usize {
        let mut mid = std::collections::HashMap::new();
        let mut faces = Vec::new();
        for &(a, b) in edges {
            let key = edge_key(a, b);
            if mid.contains_key(&key) {
                continue;
            }
            let incident = self.edge_faces(a, b);
            if incident.is_empty() {
                continue;
            }
            let m = self.pos.len();
            self.pos.push((self.pos[a] + self.pos[b]) * T::lit(0.5));
            self.vert_alive.push(true);
            self.vf.push(Vec::new());
            mid.insert(key, m);
            faces.extend(incident);
        }
        faces.sort_unstable();
        faces.dedup();
        for fi in faces {
            let f = self.faces[fi];
            let m: [Option<usize>; 3] =
                std::array::from_fn(|k| mid.get(&edge_key(f[k], f[(k + 1) % 3])).copied());
            self.remove_face(fi);
            match m.iter().filter(|x| x.is_some()).count() {
                1 => {
                    let k = (0..3).find(|&k| m[k].is_some()).unwrap();
                    let (x, y, z) = (f[k], f[(k + 1) % 3], f[(k + 2) % 3]);
                    let mk = m[k].unwrap();
                    self.add_face([x, mk, z]);
                    self.add_face([mk, y, z]);
                }
                2 => {
                    // Rotate so the unmarked edge is (z, x).
                    let k = (0..3).find(|&k| m[(k + 2) % 3].is_none()).unwrap();
                    let (x, y, z) = (f[k], f[(k + 1) % 3], f[(k + 2) % 3]);
                    let (m1, m2) = (m[k].unwrap(), m[(k + 1) % 3].unwrap());
                    self.add_face([m1, y, m2]);
                    if self.pos[x].distance(self.pos[m2]) <= self.pos[m1].distance(self.pos[z]) {
                        self.add_face([x, m1, m2]);
                        self.add_face([x, m2, z]);
                    } else {
                        self.add_face([x, m1, z]);
                        self.add_face([m1, m2, z]);
                    }
                }
                3 => {
                    let [m0, m1, m2] = m.map(Option::unwrap);
                    self.add_face([f[0], m0, m2]);
                    self.add_face([m0, f[1], m1]);
                    self.add_face([m2, m1, f[2]]);
                    self.add_face([m0, m1, m2]);
                }
                _ => unreachable!("face listed without a marked edge"),
            }
        }
        mid.len()
    }

    /// Collapses edge (a, b) when the link condition, the length cap `max_len`
    /// and the normal-flip test all pass. Returns the surviving vertex.
    pub fn try_collapse(&mut self, a: usize, b: usize, max_len: T) -> Option<usize> {
        if !(self.vert_alive[a] && self.vert_alive[b]) {
            return None;
        }
        let shared = self.edge_faces(a, b);
        if shared.is_empty() {
            return None;
        }
        let na = self.neighbors(a);
        let nb = self.neighbors(b);
        let common = na.iter().filter(|w| nb.binary_search(w).is_ok()).count();
        if common != shared.len() {
            return None;
        }
        // Closed tetrahedron-like configurations would fold into a double-sided sheet.
        if shared.len() == 2 && na.len() <= 3 && nb.len() <= 3 {
            return None;
        }
        let (ba, bb) = (self.is_boundary_vertex(a), self.is_boundary_vertex(b));
        let boundary_edge = shared.len() == 1;
        let (keep, drop, target) = match (ba, bb) {
            (true, true) if !boundary_edge => return None,
            (true, false) => (a, b, self.pos[a]),
            (false, true) => (b, a, self.pos[b]),
            _ => {
                let (k, d) = if a < b { (a, b) } else { (b, a) };
                (k, d, (self.pos[a] + self.pos[b]) * T::lit(0.5))
            }
        };
        for &w in na.iter().chain(&nb) {
            if w != a && w != b && target.distance(self.pos[w]) > max_len {
                return None;
            }
        }
        let moved = [(keep, target), (drop, target)];
        let mut touched: Vec<usize> = self.vf[a].iter().chain(&self.vf[b]).copied().collect();
        touched.sort_unstable();
        touched.dedup();
        for &fi in &touched {
            if shared.contains(&fi) {
                continue;
            }
            let f = self.faces[fi];
            let old = self.face_cross(f);
            let new = self.face_cross_with(f, &moved);
            let tiny = old.norm() * T::lit(1e-12);
            if new.norm() <= tiny || new.dot(old) <= T::zero() {
                return None;
            }
        }
        for fi in shared {
            self.remove_face(fi);
        }
        self.pos[keep] = target;
        for fi in std::mem::take(&mut self.vf[drop]) {
            for v in self.faces[fi].iter_mut() {
                if *v == drop {
                    *v = keep;
                }
            }
            self.vf[keep].push(fi);
        }
        self.vert_alive[drop] = false;
        Some(keep)
    }

    /// The two faces and opposite vertices of an interior edge, oriented so the
    /// first face reads (a, b, c) and the second (b, a, d).
    pub fn flip_quad(&self, a: usize, b: usize) -> Option<(usize, usize, usize, usize, usize, usize)> {
        let shared = self.edge_faces(a, b);
        if shared.len() != 2 {
            return None;
        }
        let (f1, f2) = (shared[0], shared[1]);
        let (x1, _, c) = orient_on(self.faces[f1], a, b)?;
        let (x2, _, d) = orient_on(self.faces[f2], a, b)?;
        if x1 == x2 {
            // Inconsistently oriented pair.
            return None;
        }
        if x1 == a {
            Some((a, b, c, d, f1, f2))
        } else {
            Some((a, b, d, c, f2, f1))
        }
    }

    /// Whether flipping (a, b) keeps both new triangles well shaped and unflipped.
    pub fn can_flip(&self, a: usize, b: usize) -> bool {
        let Some((a, b, c, d, f1, f2)) = self.flip_quad(a, b) else { return false };
        if c == d || self.neighbors(c).binary_search(&d).is_ok() {
            return false;
        }
        if self.valence(a) <= 3 || self.valence(b) <= 3 {
            return false;
        }
        let n_old = self.face_cross(self.faces[f1]) + self.face_cross(self.faces[f2]);
        let n1 = self.face_cross([a, d, c]);
        let n2 = self.face_cross([d, b, c]);
        let tiny = n_old.norm() * T::lit(1e-10);
        n1.norm() > tiny
            && n2.norm() > tiny
            && n1.dot(n2) > T::zero()
            && n1.dot(n_old) > T::zero()
            && n2.dot(n_old) > T::zero()
    }

    pub fn flip(&mut self, a: usize, b: usize) -> bool {
        if !self.can_flip(a, b) {
            return false;
        }
        let Some((a, b, c, d, f1, f2)) = self.flip_quad(a, b) else { return false };
        self.remove_face(f1);
        self.remove_face(f2);
        self.add_face([a, d, c]);
        self.add_face([d, b, c]);
        true
    }
}
