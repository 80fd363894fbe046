//! Mesh extraction from occupancy grids and repair into a clean 2-manifold.

mod tables;

use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::field::GridField;
use crate::math::Vec3;
use crate::mesh::{edge_key, Face, TriMesh};
use crate::scalar::Real;

pub use tables::{CORNERS, EDGES, TRIANGLES};

/// Extracts the `iso` level set of `grid` with the classic 256-case table.
///
/// One vertex is created per sign-crossing lattice edge, so neighbouring cells
/// share vertices. Faces wind counterclockwise seen from outside the solid
/// (where occupancy is below `iso`). A grid with no crossings yields an empty mesh.
pub fn marching_cubes<T: Real>(grid: &GridField<T>, iso: T) -> Result<TriMesh<T>> {
    if !(iso > T::zero() && iso < T::one()) {
        return Err(Error::invalid(format!("iso level must lie in (0,1), got {iso}")));
    }
    let [nx, ny, nz] = grid.dims();
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    if nx < 2 || ny < 2 || nz < 2 {
        return Ok(TriMesh { vertices, faces });
    }
    // Lattice edge (lower corner index, axis) -> vertex id.
    let mut edge_vertex: HashMap<(usize, u8), usize> = HashMap::new();

    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let mut case = 0usize;
                let mut vals = [T::zero(); 8];
                for (c, off) in CORNERS.iter().enumerate() {
                    let v = grid.value(i + off[0], j + off[1], k + off[2]);
                    vals[c] = v;
                    if v < iso {
                        case |= 1 << c;
                    }
                }
                if case == 0 || case == 255 {
                    continue;
                }
                let row = &TRIANGLES[case];
                let mut cell_vertex = [usize::MAX; 12];
                for tri in row.chunks_exact(3) {
                    if tri[0] < 0 {
                        break;
                    }
                    let mut ids = [0usize; 3];
                    for (slot, &e) in tri.iter().enumerate() {
                        let e = e as usize;
                        if cell_vertex[e] == usize::MAX {
                            let [c0, c1] = EDGES[e];
                            let (o0, o1) = (CORNERS[c0], CORNERS[c1]);
                            let a = [i + o0[0], j + o0[1], k + o0[2]];
                            let b = [i + o1[0], j + o1[1], k + o1[2]];
                            let (lo, hi, vlo, vhi) = if a <= b {
                                (a, b, vals[c0], vals[c1])
                            } else {
                                (b, a, vals[c1], vals[c0])
                            };
                            let axis = (0..3).find(|&d| lo[d] != hi[d]).unwrap_or(0) as u8;
                            let key = (grid.index(lo[0], lo[1], lo[2]), axis);
                            let id = *edge_vertex.entry(key).or_insert_with(|| {
                                let p0 = grid.point(lo[0], lo[1], lo[2]);
                                let p1 = grid.point(hi[0], hi[1], hi[2]);
                                let t = (iso - vlo) / (vhi - vlo);
                                vertices.push(p0.lerp(p1, t));
                                vertices.len() - 1
                            });
                            cell_vertex[e] = id;
                        }
                        ids[slot] = cell_vertex[e];
                    }
                    if ids[0] != ids[1] && ids[1] != ids[2] && ids[0] != ids[2] {
                        faces.push(ids);
                    }
                }
            }
        }
    }
    Ok(TriMesh { vertices, faces })
}

fn drop_degenerate(faces: impl IntoIterator<Item = Face>) -> Vec<Face> {
    faces
        .into_iter()
        .filter(|f| f[0] != f[1] && f[1] != f[2] && f[0] != f[2])
        .collect()
}

/// Collapses vertices closer than `eps` onto the first vertex of their cluster.
///
/// Vertices are bucketed on a grid of cell size `eps` and compared against the
/// 27 surrounding buckets. Faces are remapped and those that become degenerate
/// are dropped. `eps == 0` merges only bit-identical positions.
pub fn merge_duplicate_vertices<T: Real>(mesh: &TriMesh<T>, eps: T) -> TriMesh<T> {
    let eps = eps.max(T::zero());
    let mut remap = vec![0usize; mesh.vertices.len()];
    let mut kept: Vec<Vec3<T>> = Vec::new();
    if eps == T::zero() {
        let mut seen: HashMap<[u64; 3], usize> = HashMap::new();
        for (i, v) in mesh.vertices.iter().enumerate() {
            let key = [
                v.x.to_f64_lossy().to_bits(),
                v.y.to_f64_lossy().to_bits(),
                v.z.to_f64_lossy().to_bits(),
            ];
            remap[i] = *seen.entry(key).or_insert_with(|| {
                kept.push(*v);
                kept.len() - 1
            });
        }
    } else {
        let cell = |v: Vec3<T>| -> [i64; 3] {
            let q = |x: T| (x / eps).floor().to_i64().unwrap_or(i64::MAX);
            [q(v.x), q(v.y), q(v.z)]
        };
        let mut buckets: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        let eps2 = eps * eps;
        for (i, &v) in mesh.vertices.iter().enumerate() {
            let c = cell(v);
            let mut best: Option<usize> = None;
            for dz in -1..=1i64 {
                for dy in -1..=1i64 {
                    for dx in -1..=1i64 {
                        let key = [c[0].saturating_add(dx), c[1].saturating_add(dy), c[2].saturating_add(dz)];
                        if let Some(list) = buckets.get(&key) {
                            for &r in list {
                                if (kept[r] - v).norm_squared() <= eps2 && best.is_none_or(|b| r < b) {
                                    best = Some(r);
                                }
                            }
                        }
                    }
                }
            }
            remap[i] = match best {
                Some(r) => r,
                None => {
                    kept.push(v);
                    buckets.entry(c).or_default().push(kept.len() - 1);
                    kept.len() - 1
                }
            };
        }
    }
    let faces = drop_degenerate(mesh.faces.iter().map(|f| [remap[f[0]], remap[f[1]], remap[f[2]]]));
    TriMesh { vertices: kept, faces }
}

/// Drops faces with area below `area_eps`; vertices are left in place.
pub fn remove_zero_area_faces<T: Real>(mesh: &TriMesh<T>, area_eps: T) -> TriMesh<T> {
    mesh.retain_faces(|f| mesh.face_area(f) >= area_eps)
}

/// Drops vertices no face references and compacts indices, preserving order.
pub fn remove_unreferenced_vertices<T: Real>(mesh: &TriMesh<T>) -> TriMesh<T> {
    let mut remap = vec![usize::MAX; mesh.vertices.len()];
    for f in &mesh.faces {
        for &v in f {
            remap[v] = 0;
        }
    }
    let mut vertices = Vec::new();
    for (i, slot) in remap.iter_mut().enumerate() {
        if *slot == 0 {
            *slot = vertices.len();
            vertices.push(mesh.vertices[i]);
        }
    }
    let faces = mesh.faces.iter().map(|f| [remap[f[0]], remap[f[1]], remap[f[2]]]).collect();
    TriMesh { vertices, faces }
}

/// Edge-connected face components, each sorted, ordered by smallest face index.
pub fn face_components<T: Real>(mesh: &TriMesh<T>) -> Vec<Vec<usize>> {
    let n = mesh.faces.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut first_on_edge: HashMap<(usize, usize), usize> = HashMap::with_capacity(n * 2);
    for (fi, f) in mesh.faces.iter().enumerate() {
        for k in 0..3 {
            let e = edge_key(f[k], f[(k + 1) % 3]);
            match first_on_edge.get(&e) {
                Some(&other) => {
                    let (a, b) = (find(&mut parent, fi), find(&mut parent, other));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
                None => {
                    first_on_edge.insert(e, fi);
                }
            }
        }
    }
    let mut by_root: HashMap<usize, usize> = HashMap::new();
    let mut comps: Vec<Vec<usize>> = Vec::new();
    for fi in 0..n {
        let r = find(&mut parent, fi);
        let slot = *by_root.entry(r).or_insert_with(|| {
            comps.push(Vec::new());
            comps.len() - 1
        });
        comps[slot].push(fi);
    }
    comps
}

/// Removes edge-connected components holding fewer than `min_face_fraction` of all faces.
///
/// The largest component (earliest on ties) always survives.
pub fn remove_small_components<T: Real>(mesh: &TriMesh<T>, min_face_fraction: T) -> TriMesh<T> {
    let comps = face_components(mesh);
    if comps.len() <= 1 {
        return mesh.clone();
    }
    let total = T::from_usize_lossy(mesh.faces.len());
    let largest = comps
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut keep = vec![false; mesh.faces.len()];
    for (ci, comp) in comps.iter().enumerate() {
        if ci == largest || T::from_usize_lossy(comp.len()) >= min_face_fraction * total {
            for &f in comp {
                keep[f] = true;
            }
        }
    }
    mesh.retain_faces(|f| keep[f])
}

/// Removes faces on edges shared by three or more faces, smallest area first.
///
/// Returns the repaired mesh and the indices (into the input) of removed faces
/// in removal order. Equal areas are broken by the lower face index.
pub fn repair_nonmanifold_logged<T: Real>(mesh: &TriMesh<T>) -> (TriMesh<T>, Vec<usize>) {
    let mut edge_faces = mesh.edge_faces();
    for faces in edge_faces.values_mut() {
        faces.sort_unstable();
    }
    let mut bad: BTreeSet<(usize, usize)> = edge_faces
        .iter()
        .filter(|(_, f)| f.len() >= 3)
        .map(|(e, _)| *e)
        .collect();
    if bad.is_empty() {
        return (mesh.clone(), Vec::new());
    }
    let areas = mesh.face_areas();
    let mut alive = vec![true; mesh.faces.len()];
    let mut removed = Vec::new();
    while !bad.is_empty() {
        let mut victim: Option<usize> = None;
        for e in &bad {
            for &f in &edge_faces[e] {
                let better = match victim {
                    None => true,
                    Some(v) => areas[f] < areas[v] || (areas[f] == areas[v] && f < v),
                };
                if better {
                    victim = Some(f);
                }
            }
        }
        let Some(v) = victim else { break };
        alive[v] = false;
        removed.push(v);
        let f = mesh.faces[v];
        for k in 0..3 {
            let e = edge_key(f[k], f[(k + 1) % 3]);
            if let Some(list) = edge_faces.get_mut(&e) {
                list.retain(|&x| x != v);
                if list.len() < 3 {
                    bad.remove(&e);
                }
            }
        }
    }
    (mesh.retain_faces(|f| alive[f]), removed)
}

pub fn repair_nonmanifold<T: Real>(mesh: &TriMesh<T>) -> TriMesh<T> {
    repair_nonmanifold_logged(mesh).0
}

/// Cleaning thresholds. `None` selects the bounding-box relative default.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CleanParams<T> {
    /// Merge distance; default `1e-6 × bbox diagonal`.
    pub merge_eps: Option<T>,
    /// Minimum face area; default `1e-12 × bbox diagonal²`.
    pub area_eps: Option<T>,
    pub min_component_fraction: T,
}

impl<T: Real> Default for CleanParams<T> {
    fn default() -> Self {
        Self { merge_eps: None, area_eps: None, min_component_fraction: T::lit(0.02) }
    }
}

/// What `clean` did, including the thresholds it resolved.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CleanReport<T> {
    pub merge_eps: T,
    pub area_eps: T,
    pub min_component_fraction: T,
    pub input_vertices: usize,
    pub input_faces: usize,
    pub merged_vertices: usize,
    pub zero_area_faces: usize,
    pub nonmanifold_edges_before: usize,
    pub nonmanifold_faces_removed: usize,
    pub small_component_faces: usize,
    pub unreferenced_vertices: usize,
    pub output_vertices: usize,
    pub output_faces: usize,
    pub pinched_vertices: usize,
}

/// merge duplicates → drop zero-area faces → repair non-manifold edges →
/// drop small components → drop unreferenced vertices.
pub fn clean<T: Real>(mesh: &TriMesh<T>, params: &CleanParams<T>) -> (TriMesh<T>, CleanReport<T>) {
    let diag = mesh.bbox_diagonal();
    let merge_eps = params.merge_eps.unwrap_or(T::lit(1e-6) * diag);
    let area_eps = params.area_eps.unwrap_or(T::lit(1e-12) * diag * diag);
    let mut report = CleanReport {
        merge_eps,
        area_eps,
        min_component_fraction: params.min_component_fraction,
        input_vertices: mesh.num_vertices(),
        input_faces: mesh.num_faces(),
        nonmanifold_edges_before: mesh.topology().nonmanifold_edges,
        ..Default::default()
    };

    let merged = merge_duplicate_vertices(mesh, merge_eps);
    report.merged_vertices = mesh.num_vertices() - merged.num_vertices();
    let before = merged.num_faces();
    let nonzero = remove_zero_area_faces(&merged, area_eps);
    report.zero_area_faces = before - nonzero.num_faces();
    let (repaired, removed) = repair_nonmanifold_logged(&nonzero);
    report.nonmanifold_faces_removed = removed.len();
    let before = repaired.num_faces();
    let big = remove_small_components(&repaired, params.min_component_fraction);
    report.small_component_faces = before - big.num_faces();
    let out = remove_unreferenced_vertices(&big);
    report.unreferenced_vertices = big.num_vertices() - out.num_vertices();
    report.output_vertices = out.num_vertices();
    report.output_faces = out.num_faces();
    report.pinched_vertices = out.pinched_vertex_count();
    (out, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{sample_grid, sample_unit_cube, AnalyticField};
    use crate::mesh::shapes;

    fn v(x: f64, y: f64, z: f64) -> Vec3<f64> {
        Vec3::new(x, y, z)
    }

    #[test]
    fn table_rows_match_crossing_edges() {
        for (case, row) in TRIANGLES.iter().enumerate() {
            let used: u16 = row.iter().filter(|&&e| e >= 0).fold(0, |m, &e| m | 1 << e);
            let crossing: u16 = EDGES
                .iter()
                .enumerate()
                .filter(|(_, [a, b])| (case >> a & 1) != (case >> b & 1))
                .fold(0, |m, (e, _)| m | 1 << e);
            assert_eq!(used, crossing, "case {case}");
        }
    }

    #[test]
    fn uniform_grid_gives_empty_mesh() {
        let f = AnalyticField::cuboid(Vec3::<f64>::splat(0.5), Vec3::splat(2.0)).unwrap();
        let g = sample_unit_cube(&f, 8).unwrap();
        assert!(marching_cubes(&g, 0.5).unwrap().is_empty());
    }

    #[test]
    fn rejects_iso_outside_unit_interval() {
        let f = AnalyticField::sphere(Vec3::<f64>::splat(0.5), 0.3).unwrap();
        let g = sample_unit_cube(&f, 8).unwrap();
        assert!(marching_cubes(&g, 0.0).is_err());
        assert!(marching_cubes(&g, 1.0).is_err());
    }

    #[test]
    fn single_inside_corner_gives_outward_triangle() {
        let mut values = vec![0.0f64; 8];
        values[0] = 1.0;
        let g = GridField::new([2, 2, 2], Vec3::zero(), 1.0, values).unwrap();
        let m = marching_cubes(&g, 0.5).unwrap();
        assert_eq!(m.num_faces(), 1);
        // The solid sits at the origin corner; the normal must point away from it.
        let n = m.face_normal(0);
        assert!(n.dot(v(1.0, 1.0, 1.0)) > 0.0, "{n:?}");
        for p in &m.vertices {
            assert!((g.query_value(*p) - 0.5).abs() < 1e-12);
        }
    }

    trait QueryValue {
        fn query_value(&self, p: Vec3<f64>) -> f64;
    }
    impl QueryValue for GridField<f64> {
        fn query_value(&self, p: Vec3<f64>) -> f64 {
            self.trilinear(p).unwrap()
        }
    }

    #[test]
    fn sphere_extraction_is_closed_with_small_deviation() {
        let f = AnalyticField::sphere(Vec3::<f64>::splat(0.5), 0.3).unwrap();
        let g = sample_unit_cube(&f, 64).unwrap();
        let m = marching_cubes(&g, 0.5).unwrap();
        let t = m.topology();
        assert!(t.is_closed_manifold(), "{t:?}");
        assert_eq!(m.euler_characteristic(), 2);
        let h = g.spacing();
        let dev = m
            .vertices
            .iter()
            .map(|p| ((*p - Vec3::splat(0.5)).norm() - 0.3).abs())
            .fold(0.0, f64::max);
        assert!(dev < h, "deviation {dev} vs spacing {h}");
        assert!(m.signed_volume() > 0.0);
        for p in &m.vertices {
            assert!((g.query_value(*p) - 0.5).abs() < 1e-5);
        }
    }

    #[test]
    fn graded_field_vertices_hit_iso() {
        // Smooth field: occupancy falls off linearly with distance.
        let n = 20;
        let h = 1.0 / (n - 1) as f64;
        let mut values = Vec::new();
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let p = v(i as f64, j as f64, k as f64) * h - Vec3::splat(0.5);
                    values.push((1.0 - p.norm() / 0.6).clamp(0.0, 1.0));
                }
            }
        }
        let g = GridField::new([n; 3], Vec3::zero(), h, values).unwrap();
        let m = marching_cubes(&g, 0.37).unwrap();
        assert!(!m.is_empty());
        for p in &m.vertices {
            assert!((g.query_value(*p) - 0.37).abs() < 1e-5);
        }
        assert!(m.topology().is_closed_manifold());
    }

    #[test]
    fn torus_has_euler_characteristic_zero() {
        let f = AnalyticField::torus(Vec3::<f64>::splat(0.5), 0.3, 0.1).unwrap();
        let g = sample_grid(&f, [48; 3], Vec3::zero(), 1.0 / 47.0).unwrap();
        let (m, _) = clean(&marching_cubes(&g, 0.5).unwrap(), &CleanParams::default());
        assert!(m.topology().is_closed_manifold());
        assert_eq!(m.euler_characteristic(), 0);
    }

    #[test]
    fn merge_coincident_vertices() {
        let verts = vec![v(0., 0., 0.), v(1., 0., 0.), v(0., 1., 0.), v(1., 0., 0.), v(1., 1., 0.)];
        let m = TriMesh::new(verts, vec![[0, 1, 2], [3, 4, 2]]).unwrap();
        let out = merge_duplicate_vertices(&m, 1e-9);
        assert_eq!(out.num_vertices(), 4);
        assert_eq!(out.num_faces(), 2);
        assert_eq!(out.faces[1], [1, 3, 2]);
    }

    #[test]
    fn merge_removes_fully_collapsed_triangle() {
        let verts = vec![v(0., 0., 0.), v(1e-9, 0., 0.), v(0., 1e-9, 0.), v(1., 0., 0.), v(0., 1., 0.)];
        let m = TriMesh::new(verts, vec![[0, 1, 2], [0, 3, 4]]).unwrap();
        let out = merge_duplicate_vertices(&m, 1e-6);
        assert_eq!(out.num_faces(), 1);
    }

    #[test]
    fn merge_across_bucket_boundaries() {
        // Points straddle a bucket boundary but lie within eps.
        let eps = 0.1;
        let verts = vec![v(0.0999, 0., 0.), v(0.1001, 0., 0.), v(1., 1., 0.), v(1., 0., 0.)];
        let m = TriMesh::new(verts, vec![[0, 2, 3], [1, 3, 2]]).unwrap();
        let out = merge_duplicate_vertices(&m, eps);
        assert_eq!(out.num_vertices(), 3);
    }

    #[test]
    fn seam_fan_becomes_manifold_after_merge() {
        // Four triangles around a center; each carries its own copy of the seam vertices.
        let c = v(0., 0., 0.);
        let ring = [v(1., 0., 0.), v(0., 1., 0.), v(-1., 0., 0.), v(0., -1., 0.)];
        let mut verts = Vec::new();
        let mut faces = Vec::new();
        for i in 0..4 {
            let base = verts.len();
            verts.push(c);
            verts.push(ring[i]);
            verts.push(ring[(i + 1) % 4]);
            faces.push([base, base + 1, base + 2]);
        }
        let m = TriMesh::new(verts, faces).unwrap();
        assert_eq!(m.topology().manifold_edges, 0);
        let out = merge_duplicate_vertices(&m, 1e-6);
        let t = out.topology();
        assert_eq!(out.num_vertices(), 5);
        assert_eq!(t.manifold_edges, 4);
        assert_eq!(t.boundary_edges, 4);
    }

    #[test]
    fn zero_area_and_unreferenced() {
        let verts = vec![v(0., 0., 0.), v(1., 0., 0.), v(2., 0., 0.), v(0., 1., 0.), v(9., 9., 9.)];
        let m = TriMesh::new(verts, vec![[0, 1, 2], [0, 1, 3]]).unwrap();
        let nz = remove_zero_area_faces(&m, 1e-12);
        assert_eq!(nz.faces, vec![[0, 1, 3]]);
        assert_eq!(nz.num_vertices(), 5);
        let compact = remove_unreferenced_vertices(&nz);
        assert_eq!(compact.num_vertices(), 3);
        assert_eq!(compact.faces, vec![[0, 1, 2]]);
        assert_eq!(compact.corners(0), nz.corners(0));
    }

    #[test]
    fn detached_triangle_removed() {
        let mut m = shapes::uv_sphere(Vec3::<f64>::zero(), 1.0, 8, 16);
        let b = m.vertices.len();
        m.vertices.extend([v(5., 0., 0.), v(6., 0., 0.), v(5., 1., 0.)]);
        m.faces.push([b, b + 1, b + 2]);
        let out = remove_small_components(&m, 0.01);
        assert_eq!(out.num_faces(), m.num_faces() - 1);
    }

    #[test]
    fn equal_halves_both_kept() {
        let a = shapes::uv_sphere(Vec3::<f64>::zero(), 1.0, 6, 8);
        let mut m = a.clone();
        let off = m.vertices.len();
        m.vertices.extend(a.vertices.iter().map(|p| *p + v(5., 0., 0.)));
        m.faces.extend(a.faces.iter().map(|f| [f[0] + off, f[1] + off, f[2] + off]));
        assert_eq!(remove_small_components(&m, 0.01).num_faces(), m.num_faces());
    }

    #[test]
    fn floater_blob_removed() {
        let main = shapes::uv_sphere(Vec3::<f64>::zero(), 1.0, 16, 32);
        let blob = shapes::uv_sphere(v(3., 0., 0.), 0.1, 4, 3);
        let frac = blob.num_faces() as f64 / (main.num_faces() + blob.num_faces()) as f64;
        assert!((0.015..0.03).contains(&frac), "{frac}");
        let mut m = main.clone();
        let off = m.vertices.len();
        m.vertices.extend(blob.vertices.iter().copied());
        m.faces.extend(blob.faces.iter().map(|f| [f[0] + off, f[1] + off, f[2] + off]));
        let out = remove_small_components(&m, 0.05);
        assert_eq!(out.num_faces(), main.num_faces());
    }

    fn fin_fixture(areas: &[f64]) -> TriMesh<f64> {
        // Fins sharing edge (0,1); fin k has apex at height proportional to its area.
        let mut verts = vec![v(0., 0., 0.), v(1., 0., 0.)];
        let mut faces = Vec::new();
        for (k, &a) in areas.iter().enumerate() {
            let ang = k as f64 * 0.9;
            verts.push(v(0.5, ang.cos() * 2.0 * a, ang.sin() * 2.0 * a));
            faces.push([0, 1, verts.len() - 1]);
        }
        TriMesh::new(verts, faces).unwrap()
    }

    #[test]
    fn three_fins_drop_the_smallest() {
        let m = fin_fixture(&[1.0, 1.0, 0.1]);
        for (f, a) in [1.0, 1.0, 0.1].iter().enumerate() {
            assert!((m.face_area(f) - a).abs() < 1e-12);
        }
        let (out, removed) = repair_nonmanifold_logged(&m);
        assert_eq!(removed, vec![2]);
        assert_eq!(out.topology().nonmanifold_edges, 0);
        assert_eq!(out.num_faces(), 2);
    }

    #[test]
    fn five_fins_three_removals_smallest_first() {
        let areas = [0.5, 0.2, 0.9, 0.1, 0.3];
        let m = fin_fixture(&areas);
        let (out, removed) = repair_nonmanifold_logged(&m);
        assert_eq!(removed, vec![3, 1, 4]);
        assert_eq!(out.num_faces(), 2);
        assert_eq!(out.topology().nonmanifold_edges, 0);
    }

    #[test]
    fn equal_area_tie_breaks_on_index() {
        let verts = vec![v(0., 0., 0.), v(1., 0., 0.), v(0.5, 0.8, 0.), v(0.5, 0., 0.8), v(0.5, -0.8, 0.)];
        let m = TriMesh::new(verts, vec![[0, 1, 2], [0, 1, 3], [0, 1, 4]]).unwrap();
        let (_, removed) = repair_nonmanifold_logged(&m);
        assert_eq!(removed, vec![0]);
    }

    #[test]
    fn manifold_mesh_is_a_fixed_point() {
        let m = shapes::uv_sphere(Vec3::<f64>::zero(), 1.0, 8, 12);
        assert_eq!(repair_nonmanifold(&m), m);
        let (c, _) = clean(&m, &CleanParams::default());
        assert_eq!(c, m);
    }

    #[test]
    fn clean_is_idempotent_on_extracted_sphere() {
        let f = AnalyticField::sphere(Vec3::<f64>::splat(0.5), 0.3).unwrap();
        let g = sample_unit_cube(&f, 40).unwrap();
        let m = marching_cubes(&g, 0.5).unwrap();
        let (once, report) = clean(&m, &CleanParams::default());
        let (twice, _) = clean(&once, &CleanParams::default());
        assert_eq!(once, twice);
        assert!(once.topology().is_closed_manifold());
        assert_eq!(once.euler_characteristic(), 2);
        assert_eq!(report.output_faces, once.num_faces());
    }
}
