//! Isotropic triangle remeshing: split long edges, collapse short ones,
//! equalize valences with flips, then relax vertices tangentially toward
//! their area-weighted centroid.

use rayon::prelude::*;

use super::edit::EditMesh;
use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::mesh::TriMesh;
use crate::scalar::Real;

/// How much surface area each vertex carries when forming centroids.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum VertexArea {
    /// One third of the incident face areas.
    #[default]
    Barycentric,
    /// Mixed Voronoi area (obtuse triangles fall back to area fractions).
    Voronoi,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RemeshParams<T> {
    pub target_edge_length: T,
    pub iterations: usize,
    /// Smoothing damping λ in (0, 1].
    pub damping: T,
    pub split_factor: T,
    pub collapse_factor: T,
    pub vertex_area: VertexArea,
}

impl<T: Real> RemeshParams<T> {
    pub fn new(target_edge_length: T) -> Self {
        Self {
            target_edge_length,
            iterations: 5,
            damping: T::lit(0.5),
            split_factor: T::lit(4.0 / 3.0),
            collapse_factor: T::lit(4.0 / 5.0),
            vertex_area: VertexArea::Barycentric,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.target_edge_length;
        if !(l > T::zero() && l.is_finite()) {
            return Err(Error::invalid(format!("target edge length must be positive, got {l}")));
        }
        if self.iterations == 0 {
            return Err(Error::invalid("remesh iterations must be positive"));
        }
        if !(self.damping > T::zero() && self.damping <= T::one()) {
            return Err(Error::invalid(format!("damping must lie in (0,1], got {}", self.damping)));
        }
        if !(self.split_factor > T::one()
            && self.collapse_factor < T::one()
            && self.collapse_factor > T::zero())
        {
            return Err(Error::invalid(format!(
                "need split_factor > 1 > collapse_factor > 0, got {} and {}",
                self.split_factor, self.collapse_factor
            )));
        }
        Ok(())
    }

    pub fn split_threshold(&self) -> T {
        self.target_edge_length * self.split_factor
    }

    pub fn collapse_threshold(&self) -> T {
        self.target_edge_length * self.collapse_factor
    }
}

/// Splits every edge longer than `max_len` at its midpoint until none remain.
/// Each round splits all long edges at once.
pub fn split_long_edges<T: Real>(mesh: &TriMesh<T>, max_len: T) -> TriMesh<T> {
    if !(max_len > T::zero()) {
        return mesh.clone();
    }
    let mut em = EditMesh::from_mesh(mesh);
    split_pass(&mut em, max_len);
    em.to_mesh()
}

fn split_pass<T: Real>(em: &mut EditMesh<T>, max_len: T) -> usize {
    let mut total = 0;
    loop {
        let long: Vec<(usize, usize)> = em
            .edges()
            .into_iter()
            .filter(|&(a, b)| em.edge_length(a, b) > max_len)
            .collect();
        if long.is_empty() {
            return total;
        }
        total += em.split_marked(&long);
    }
}

/// Collapses edges shorter than `min_len` into their midpoint until no legal
/// collapse remains. A collapse is skipped if it would create an edge longer
/// than `max_len`, flip an incident face, or violate the link condition.
pub fn collapse_short_edges<T: Real>(mesh: &TriMesh<T>, min_len: T, max_len: T) -> TriMesh<T> {
    let mut em = EditMesh::from_mesh(mesh);
    collapse_pass(&mut em, min_len, max_len);
    em.to_mesh()
}

fn collapse_pass<T: Real>(em: &mut EditMesh<T>, min_len: T, max_len: T) -> usize {
    let mut total = 0;
    for _ in 0..100 {
        let mut short: Vec<(usize, usize)> = em
            .edges()
            .into_iter()
            .filter(|&(a, b)| em.edge_length(a, b) < min_len)
            .collect();
        short.sort_by(|x, y| {
            em.edge_length(x.0, x.1)
                .partial_cmp(&em.edge_length(y.0, y.1))
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(x.cmp(y))
        });
        let mut changed = 0;
        for (a, b) in short {
            if em.vert_alive[a] && em.vert_alive[b] && em.edge_length(a, b) < min_len && em.try_collapse(a, b, max_len).is_some() {
                changed += 1;
            }
        }
        total += changed;
        if changed == 0 {
            break;
        }
    }
    total
}

fn valence_target<T: Real>(em: &EditMesh<T>, v: usize) -> i64 {
    if em.is_boundary_vertex(v) {
        4
    } else {
        6
    }
}

/// Σ (valence − target)² over all referenced vertices.
pub fn valence_deviation<T: Real>(mesh: &TriMesh<T>) -> i64 {
    let em = EditMesh::from_mesh(mesh);
    (0..em.pos.len())
        .filter(|&v| !em.vf[v].is_empty())
        .map(|v| {
            let d = em.valence(v) as i64 - valence_target(&em, v);
            d * d
        })
        .sum()
}

/// One pass of valence-improving flips over interior edges.
///
/// An edge is flipped iff doing so strictly lowers Σ (valence − target)² over
/// its four vertices (target 6 inside, 4 on the boundary).
pub fn equalize_valences<T: Real>(mesh: &TriMesh<T>) -> TriMesh<T> {
    let mut em = EditMesh::from_mesh(mesh);
    equalize_pass(&mut em);
    em.to_mesh()
}

fn equalize_pass<T: Real>(em: &mut EditMesh<T>) -> usize {
    let mut flips = 0;
    for (a, b) in em.edges() {
        let Some((a, b, c, d, _, _)) = em.flip_quad(a, b) else { continue };
        let dev = |v: usize, delta: i64| {
            let x = em.valence(v) as i64 + delta - valence_target(em, v);
            x * x
        };
        let before = dev(a, 0) + dev(b, 0) + dev(c, 0) + dev(d, 0);
        let after = dev(a, -1) + dev(b, -1) + dev(c, 1) + dev(d, 1);
        if after < before && em.flip(a, b) {
            flips += 1;
        }
    }
    flips
}

/// Vertices lying on a boundary edge.
pub fn boundary_vertices<T: Real>(mesh: &TriMesh<T>) -> Vec<bool> {
    let mut b = vec![false; mesh.vertices.len()];
    for ((u, v), faces) in mesh.edge_faces() {
        if faces.len() == 1 {
            b[u] = true;
            b[v] = true;
        }
    }
    b
}

fn voronoi_areas<T: Real>(mesh: &TriMesh<T>) -> Vec<T> {
    let mut acc = vec![T::zero(); mesh.vertices.len()];
    let half = T::lit(0.5);
    for fi in 0..mesh.faces.len() {
        let f = mesh.faces[fi];
        let p = mesh.corners(fi);
        let area = mesh.face_area(fi);
        if area <= T::zero() {
            continue;
        }
        let angle_dot = |k: usize| {
            let (a, b, c) = (p[k], p[(k + 1) % 3], p[(k + 2) % 3]);
            (b - a).dot(c - a)
        };
        let obtuse = (0..3).find(|&k| angle_dot(k) < T::zero());
        match obtuse {
            Some(k) => {
                for j in 0..3 {
                    acc[f[j]] += if j == k { area * half } else { area * T::lit(0.25) };
                }
            }
            None => {
                for k in 0..3 {
                    // Contribution at corner k from the two adjacent edges.
                    let (a, b, c) = (p[k], p[(k + 1) % 3], p[(k + 2) % 3]);
                    let cot = |at: Vec3<T>, u: Vec3<T>, v: Vec3<T>| {
                        let (e1, e2) = (u - at, v - at);
                        e1.dot(e2) / e1.cross(e2).norm()
                    };
                    let cot_c = cot(c, a, b);
                    let cot_b = cot(b, c, a);
                    acc[f[k]] += ((b - a).norm_squared() * cot_c + (c - a).norm_squared() * cot_b)
                        * T::lit(0.125);
                }
            }
        }
    }
    acc
}

/// Per-vertex areas under the chosen convention.
pub fn vertex_areas<T: Real>(mesh: &TriMesh<T>, kind: VertexArea) -> Vec<T> {
    match kind {
        VertexArea::Barycentric => mesh.vertex_areas(),
        VertexArea::Voronoi => voronoi_areas(mesh),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SmoothReport<T> {
    pub moved_vertices: usize,
    pub max_displacement: T,
    /// Largest |Δp · n| over all updates.
    pub max_normal_residual: T,
    /// Largest |Δp · n| / |Δp| over all updates with nonzero displacement.
    pub max_relative_residual: T,
}

/// Jacobi-style tangential relaxation.
///
/// Every interior vertex moves by `λ (I − n nᵀ)(g − p)` where `g` is the
/// area-weighted centroid of its one-ring; boundary and isolated vertices stay.
pub fn tangential_smooth<T: Real>(mesh: &TriMesh<T>, damping: T) -> TriMesh<T> {
    tangential_smooth_with(mesh, damping, VertexArea::Barycentric).0
}

pub fn tangential_smooth_with<T: Real>(
    mesh: &TriMesh<T>,
    damping: T,
    kind: VertexArea,
) -> (TriMesh<T>, SmoothReport<T>) {
    let areas = vertex_areas(mesh, kind);
    let normals = mesh.vertex_normals();
    let neighbors = mesh.vertex_neighbors();
    let boundary = boundary_vertices(mesh);
    let old = &mesh.vertices;

    let updates: Vec<Option<(Vec3<T>, Vec3<T>)>> = (0..old.len())
        .into_par_iter()
        .map(|i| {
            if boundary[i] || neighbors[i].is_empty() {
                return None;
            }
            let n = normals[i];
            if n.norm_squared() == T::zero() {
                return None;
            }
            let mut wsum = T::zero();
            let mut acc = Vec3::zero();
            for &j in &neighbors[i] {
                wsum += areas[j];
                acc += old[j] * areas[j];
            }
            if !(wsum > T::zero()) {
                return None;
            }
            let g = acc / wsum;
            let step = (g - old[i]).reject(n) * damping;
            Some((old[i] + step, n))
        })
        .collect();

    let mut report = SmoothReport::<T>::default();
    let mut vertices = old.clone();
    for (i, u) in updates.into_iter().enumerate() {
        let Some((p, n)) = u else { continue };
        vertices[i] = p;
        let delta = p - old[i];
        let len = delta.norm();
        let resid = delta.dot(n).abs();
        report.moved_vertices += 1;
        report.max_displacement = report.max_displacement.max(len);
        report.max_normal_residual = report.max_normal_residual.max(resid);
        if len > T::zero() {
            report.max_relative_residual = report.max_relative_residual.max(resid / len);
        }
    }
    (TriMesh { vertices, faces: mesh.faces.clone() }, report)
}

/// Per-round remeshing statistics.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RoundStats<T> {
    pub round: usize,
    pub vertices: usize,
    pub faces: usize,
    pub edges: usize,
    pub mean_edge: T,
    pub mean_valence: T,
    pub volume: T,
    /// Fraction of edges within `[collapse, split] × target`.
    pub in_band_fraction: T,
    /// Edge lengths binned over `[0, 2 × target)` in 20 bins, plus one overflow bin.
    pub edge_length_histogram: Vec<usize>,
    /// Interior vertex valence counts, index = valence (last bin collects ≥ 12).
    pub valence_histogram: Vec<usize>,
    pub splits: usize,
    pub collapses: usize,
    pub flips: usize,
    pub smooth: SmoothReport<T>,
}

impl<T: Real> RoundStats<T> {
    pub const CSV_HEADER: &'static str = "round,edges,mean_edge,mean_valence,volume";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.6},{:.6},{:.6}",
            self.round,
            self.edges,
            self.mean_edge.to_f64_lossy(),
            self.mean_valence.to_f64_lossy(),
            self.volume.to_f64_lossy()
        )
    }
}

/// Edge and valence statistics of `mesh` relative to `params`.
pub fn mesh_stats<T: Real>(mesh: &TriMesh<T>, params: &RemeshParams<T>) -> RoundStats<T> {
    let edges = mesh.edges();
    let l = params.target_edge_length;
    let (lo, hi) = (params.collapse_threshold(), params.split_threshold());
    let mut hist = vec![0usize; 21];
    let mut sum = T::zero();
    let mut in_band = 0usize;
    for &(a, b) in &edges {
        let len = mesh.vertices[a].distance(mesh.vertices[b]);
        sum += len;
        if len >= lo && len <= hi {
            in_band += 1;
        }
        let bin = (len / (l * T::lit(2.0)) * T::lit(20.0)).floor().to_usize().unwrap_or(20).min(20);
        hist[bin] += 1;
    }
    let neighbors = mesh.vertex_neighbors();
    let boundary = boundary_vertices(mesh);
    let mut vhist = vec![0usize; 13];
    let mut vsum = 0usize;
    let mut vcount = 0usize;
    for (v, n) in neighbors.iter().enumerate() {
        if n.is_empty() || boundary[v] {
            continue;
        }
        vhist[n.len().min(12)] += 1;
        vsum += n.len();
        vcount += 1;
    }
    let ne = edges.len().max(1);
    RoundStats {
        round: 0,
        vertices: mesh.num_vertices(),
        faces: mesh.num_faces(),
        edges: edges.len(),
        mean_edge: sum / T::from_usize_lossy(ne),
        mean_valence: if vcount > 0 {
            T::from_usize_lossy(vsum) / T::from_usize_lossy(vcount)
        } else {
            T::zero()
        },
        volume: mesh.signed_volume(),
        in_band_fraction: T::from_usize_lossy(in_band) / T::from_usize_lossy(ne),
        edge_length_histogram: hist,
        valence_histogram: vhist,
        ..Default::default()
    }
}

/// `iterations` rounds of split → collapse → flip → smooth.
pub fn isotropic_remesh<T: Real>(
    mesh: &TriMesh<T>,
    params: &RemeshParams<T>,
) -> Result<(TriMesh<T>, Vec<RoundStats<T>>)> {
    params.validate()?;
    let mut current = mesh.clone();
    let mut stats = Vec::with_capacity(params.iterations);
    for round in 1..=params.iterations {
        let mut em = EditMesh::from_mesh(&current);
        let splits = split_pass(&mut em, params.split_threshold());
        let collapses = collapse_pass(&mut em, params.collapse_threshold(), params.split_threshold());
        let flips = equalize_pass(&mut em);
        let topo = em.to_mesh();
        let (smoothed, smooth) = tangential_smooth_with(&topo, params.damping, params.vertex_area);
        current = smoothed;
        let mut s = mesh_stats(&current, params);
        s.round = round;
        s.splits = splits;
        s.collapses = collapses;
        s.flips = flips;
        s.smooth = smooth;
        stats.push(s);
    }
    Ok((current, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;

    fn v(x: f64, y: f64, z: f64) -> Vec3<f64> {
        Vec3::new(x, y, z)
    }

    fn max_edge(m: &TriMesh<f64>) -> f64 {
        m.edges()
            .iter()
            .map(|&(a, b)| m.vertices[a].distance(m.vertices[b]))
            .fold(0.0, f64::max)
    }

    #[test]
    fn params_validation() {
        assert!(RemeshParams::new(0.1f64).validate().is_ok());
        assert!(RemeshParams::new(0.0f64).validate().is_err());
        let mut p = RemeshParams::new(0.1f64);
        p.damping = 0.0;
        assert!(p.validate().is_err());
        let mut p = RemeshParams::new(0.1f64);
        p.collapse_factor = 1.2;
        assert!(p.validate().is_err());
    }

    #[test]
    fn split_two_triangles_recursively() {
        let m = TriMesh::new(
            vec![v(0., 0., 0.), v(1., 0., 0.), v(0.5, 0.3, 0.), v(0.5, -0.3, 0.)],
            vec![[0, 1, 2], [1, 0, 3]],
        )
        .unwrap();
        let out = split_long_edges(&m, 0.4);
        assert!(max_edge(&out) <= 0.4);
        assert!((out.total_area() - m.total_area()).abs() < 1e-12);
        assert_eq!(out.topology().nonmanifold_edges, 0);
    }

    #[test]
    fn split_below_threshold_is_identity() {
        let m = shapes::uv_sphere(Vec3::<f64>::zero(), 1.0, 6, 8);
        assert_eq!(split_long_edges(&m, 10.0), m);
    }

    #[test]
    fn split_equilateral_triangle_once_per_side() {
        let h = 3f64.sqrt() / 2.0;
        let m = TriMesh::new(vec![v(0., 0., 0.), v(1., 0., 0.), v(0.5, h, 0.)], vec![[0, 1, 2]]).unwrap();
        let out = split_long_edges(&m, 0.6);
        assert_eq!(out.num_faces(), 4);
        assert_eq!(out.num_vertices(), 6);
        assert!(max_edge(&out) <= 0.6);
        for f in 0..out.num_faces() {
            assert!(out.face_normal(f).z > 0.99);
        }
    }

    #[test]
    fn collapse_removes_short_edges_and_keeps_manifold() {
        let m = shapes::uv_sphere(Vec3::<f64>::zero(), 1.0, 24, 48);
        let out = collapse_short_edges(&m, 0.12, 0.4);
        assert!(out.num_faces() < m.num_faces());
        let t = out.topology();
        assert!(t.is_closed_manifold(), "{t:?}");
        assert_eq!(out.euler_characteristic(), 2);
        assert!(max_edge(&out) <= 0.4 + 1e-12);
    }

    #[test]
    fn collapse_refuses_to_stretch_edges() {
        let m = shapes::plane_grid(5usize, 5, 1.0f64, 1.0);
        // Every edge is short, but any collapse would create an edge above the cap.
        let out = collapse_short_edges(&m, 0.5, 0.26);
        assert_eq!(out, m);
    }

    /// Regular grid with diagonals along one direction: every interior vertex has valence 6.
    fn regular_patch() -> TriMesh<f64> {
        let n = 9;
        let mut verts = Vec::new();
        for j in 0..n {
            for i in 0..n {
                verts.push(v(i as f64 + 0.5 * j as f64, j as f64 * 3f64.sqrt() / 2.0, 0.0));
            }
        }
        let mut faces = Vec::new();
        for j in 0..n - 1 {
            for i in 0..n - 1 {
                let a = j * n + i;
                faces.push([a, a + 1, a + n]);
                faces.push([a + 1, a + n + 1, a + n]);
            }
        }
        TriMesh::new(verts, faces).unwrap()
    }

    fn interior_valences(m: &TriMesh<f64>) -> Vec<usize> {
        let b = boundary_vertices(m);
        m.vertex_neighbors()
            .iter()
            .enumerate()
            .filter(|(i, _)| !b[*i])
            .map(|(_, n)| n.len())
            .collect()
    }

    #[test]
    fn regular_patch_is_a_fixed_point() {
        let m = regular_patch();
        assert!(interior_valences(&m).iter().all(|&x| x == 6));
        assert_eq!(equalize_valences(&m), m);
    }

    #[test]
    fn flip_restores_seven_seven_five_five() {
        let m = regular_patch();
        // Flip an interior edge: its endpoints drop to 5 and the opposite corners rise to 7.
        let n = 9;
        let (a, b) = (4 * n + 4, 4 * n + 5);
        let mut em = EditMesh::from_mesh(&m);
        assert!(em.flip(a, b));
        let perturbed = em.to_mesh();
        let vals = interior_valences(&perturbed);
        assert_eq!(vals.iter().filter(|&&x| x == 7).count(), 2);
        assert_eq!(vals.iter().filter(|&&x| x == 5).count(), 2);
        let before = valence_deviation(&perturbed);
        let out = equalize_valences(&perturbed);
        let after = valence_deviation(&out);
        assert_eq!(before - after, 4);
        assert!(interior_valences(&out).iter().all(|&x| x == 6));
    }

    #[test]
    fn boundary_edges_never_flip() {
        let m = TriMesh::new(
            vec![v(0., 0., 0.), v(1., 0., 0.), v(1., 1., 0.), v(0., 1., 0.)],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap();
        let out = equalize_valences(&m);
        assert_eq!(out, m);
    }

    #[test]
    fn symmetric_fan_center_does_not_move() {
        let mut verts = vec![v(0., 0., 0.)];
        for k in 0..6 {
            let a = k as f64 * std::f64::consts::PI / 3.0;
            verts.push(v(a.cos(), a.sin(), 0.));
        }
        let faces = (0..6).map(|k| [0, 1 + k, 1 + (k + 1) % 6]).collect();
        let m = TriMesh::new(verts, faces).unwrap();
        let out = tangential_smooth(&m, 0.5);
        assert!(out.vertices[0].norm() < 1e-15);
        // Ring vertices are on the boundary.
        assert_eq!(&out.vertices[1..], &m.vertices[1..]);
    }

    #[test]
    fn planar_perturbation_moves_by_damped_centroid_offset() {
        let mut verts = vec![v(0.1, -0.05, 0.)];
        for k in 0..6 {
            let a = k as f64 * std::f64::consts::PI / 3.0;
            verts.push(v(a.cos(), a.sin(), 0.));
        }
        let faces: Vec<_> = (0..6).map(|k| [0, 1 + k, 1 + (k + 1) % 6]).collect();
        let m = TriMesh::new(verts.clone(), faces).unwrap();
        // Direct evaluation of the centroid from barycentric vertex areas.
        let areas = m.vertex_areas();
        let (mut num, mut den) = (Vec3::zero(), 0.0);
        for j in 1..7 {
            num += verts[j] * areas[j];
            den += areas[j];
        }
        let g = num / den;
        let lambda = 0.3;
        let expected = verts[0] + (g - verts[0]) * lambda;
        let out = tangential_smooth(&m, lambda);
        assert!((out.vertices[0] - expected).norm() < 1e-14);
    }

    #[test]
    fn normal_offset_is_annihilated() {
        // Apex of a symmetric cone: centroid lies straight below along the normal.
        let mut verts = vec![v(0., 0., 0.5)];
        for k in 0..6 {
            let a = k as f64 * std::f64::consts::PI / 3.0;
            verts.push(v(a.cos(), a.sin(), 0.));
        }
        let mut faces: Vec<_> = (0..6).map(|k| [0, 1 + k, 1 + (k + 1) % 6]).collect();
        // Close the bottom so the apex ring is interior.
        verts.push(v(0., 0., -0.5));
        faces.extend((0..6).map(|k| [7, 1 + (k + 1) % 6, 1 + k]));
        let m = TriMesh::new(verts, faces).unwrap();
        assert!(m.topology().is_closed_manifold());
        let out = tangential_smooth(&m, 1.0);
        assert!((out.vertices[0] - m.vertices[0]).norm() < 1e-15);
    }

    #[test]
    fn smoothing_is_tangent_on_curved_mesh() {
        let mut m = shapes::uv_sphere(Vec3::<f64>::zero(), 1.0, 12, 24);
        // Jitter to get nonzero updates.
        for (i, p) in m.vertices.iter_mut().enumerate() {
            let t = i as f64 * 0.7;
            *p += v(t.sin(), t.cos(), (2.0 * t).sin()) * 0.01;
        }
        let (_, r) = tangential_smooth_with(&m, 0.5, VertexArea::Barycentric);
        assert!(r.moved_vertices > 0);
        assert!(r.max_relative_residual < 1e-9, "{r:?}");
        let (_, r) = tangential_smooth_with(&m, 0.5, VertexArea::Voronoi);
        assert!(r.max_relative_residual < 1e-9);
    }

    #[test]
    fn voronoi_areas_sum_to_total_area() {
        let m = shapes::uv_sphere(Vec3::<f64>::zero(), 1.0, 10, 20);
        let s: f64 = vertex_areas(&m, VertexArea::Voronoi).iter().sum();
        assert!((s - m.total_area()).abs() < 1e-9);
        let s: f64 = vertex_areas(&m, VertexArea::Barycentric).iter().sum();
        assert!((s - m.total_area()).abs() < 1e-9);
    }

    #[test]
    fn remesh_sphere_quality() {
        let m = shapes::uv_sphere(Vec3::<f64>::zero(), 1.0, 32, 64);
        let params = RemeshParams::new(0.1);
        let (out, stats) = isotropic_remesh(&m, &params).unwrap();
        assert_eq!(stats.len(), 5);
        let last = stats.last().unwrap();
        assert!(out.topology().is_closed_manifold());
        assert!(last.in_band_fraction >= 0.9, "{last:?}");
        assert!((5.8..=6.2).contains(&last.mean_valence));
        let drift = (last.volume - m.signed_volume()).abs() / m.signed_volume();
        assert!(drift < 0.02, "{drift}");
        assert_eq!(
            RoundStats::<f64>::CSV_HEADER.split(',').count(),
            last.csv_row().split(',').count()
        );
    }
}
