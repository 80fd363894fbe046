//! Quad-dominant remeshing from a 4-RoSy orientation field and a lattice
//! position field, followed by greedy lattice-collapse extraction.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math::{rotate_between, Vec3};
use crate::mesh::TriMesh;
use crate::scalar::Real;

/// Energy slack tolerated when checking per-sweep monotonicity.
pub const ENERGY_SLACK: f64 = 1e-9;

/// Per-vertex tangent directions, defined up to quarter turns about the normal.
#[derive(Clone, Debug, PartialEq)]
pub struct OrientationField<T> {
    pub directions: Vec<Vec3<T>>,
    pub normals: Vec<Vec3<T>>,
    /// Vertices whose normal is degenerate; their direction never changes.
    pub frozen: Vec<bool>,
    /// Energy before the first sweep followed by the energy after each sweep.
    pub energy_history: Vec<T>,
}

/// The member of `{t, n×t, −t, −n×t}` best aligned with `o`.
fn best_rotation<T: Real>(o: Vec3<T>, n: Vec3<T>, t: Vec3<T>) -> Vec3<T> {
    let u = n.cross(t);
    let (dt, du) = (o.dot(t), o.dot(u));
    if dt.abs() >= du.abs() {
        if dt >= T::zero() {
            t
        } else {
            -t
        }
    } else if du >= T::zero() {
        u
    } else {
        -u
    }
}

/// 1 − max_k dot(o_i, rot_k(o_j)) after transporting o_j into the frame of i.
pub fn rosy_edge_energy<T: Real>(oi: Vec3<T>, ni: Vec3<T>, oj: Vec3<T>, nj: Vec3<T>) -> T {
    let t = rotate_between(nj, ni, oj);
    T::one() - oi.dot(best_rotation(oi, ni, t))
}

fn seed_direction<T: Real>(n: Vec3<T>) -> Vec3<T> {
    // Project the world axis least aligned with the normal.
    let a = n.abs();
    let axis = if a.x <= a.y && a.x <= a.z {
        Vec3::unit_x()
    } else if a.y <= a.z {
        Vec3::unit_y()
    } else {
        Vec3::unit_z()
    };
    axis.reject(n).normalized()
}

impl<T: Real> OrientationField<T> {
    /// Deterministic initialization: the least normal-aligned world axis
    /// projected onto each tangent plane.
    pub fn initial(mesh: &TriMesh<T>) -> Self {
        let normals = mesh.vertex_normals();
        let frozen: Vec<bool> = normals.iter().map(|n| n.norm_squared() < T::lit(0.5)).collect();
        let directions = normals
            .iter()
            .zip(&frozen)
            .map(|(&n, &f)| if f { Vec3::unit_x() } else { seed_direction(n) })
            .collect();
        Self { directions, normals, frozen, energy_history: Vec::new() }
    }

    /// Uniformly random tangent directions from a seeded generator.
    pub fn random(mesh: &TriMesh<T>, seed: u64) -> Self {
        let mut field = Self::initial(mesh);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in 0..field.directions.len() {
            let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            if field.frozen[i] {
                continue;
            }
            let n = field.normals[i];
            let u = field.directions[i];
            let v = n.cross(u);
            field.directions[i] = (u * T::lit(angle.cos()) + v * T::lit(angle.sin())).normalized();
        }
        field
    }

    pub fn energy(&self, neighbors: &[Vec<usize>]) -> T {
        let mut e = T::zero();
        for (i, ns) in neighbors.iter().enumerate() {
            for &j in ns.iter().filter(|&&j| j > i) {
                e += rosy_edge_energy(self.directions[i], self.normals[i], self.directions[j], self.normals[j]);
            }
        }
        e
    }

    fn local_energy(&self, i: usize, o: Vec3<T>, neighbors: &[usize]) -> T {
        neighbors.iter().fold(T::zero(), |acc, &j| {
            acc + rosy_edge_energy(o, self.normals[i], self.directions[j], self.normals[j])
        })
    }

    /// One Gauss–Seidel sweep in vertex order.
    ///
    /// Two candidates are formed per vertex: neighbors snapped against the
    /// current direction, and neighbors snapped one by one against the running
    /// average. The running variant escapes trapped singularities on flat
    /// regions; it is used whenever it does not raise the local energy.
    pub fn sweep(&mut self, neighbors: &[Vec<usize>]) {
        let eps = T::lit(1e-12);
        for i in 0..self.directions.len() {
            if self.frozen[i] || neighbors[i].is_empty() {
                continue;
            }
            let (oi, ni) = (self.directions[i], self.normals[i]);
            let mut fixed = Vec3::zero();
            let mut running = Vec3::zero();
            let mut acc = oi;
            for &j in &neighbors[i] {
                let t = rotate_between(self.normals[j], ni, self.directions[j]);
                fixed += best_rotation(oi, ni, t);
                running += best_rotation(acc, ni, t);
                acc = running.reject(ni).try_normalize(eps).unwrap_or(oi);
            }
            let Some(a) = fixed.reject(ni).try_normalize(eps) else { continue };
            let chosen = match running.reject(ni).try_normalize(eps) {
                Some(b) if self.local_energy(i, b, &neighbors[i]) <= self.local_energy(i, oi, &neighbors[i]) => b,
                _ => a,
            };
            self.directions[i] = chosen;
        }
    }

    /// Runs up to `iterations` sweeps, stopping early at a fixed point.
    pub fn optimize(&mut self, mesh: &TriMesh<T>, iterations: usize) {
        let neighbors = mesh.vertex_neighbors();
        self.energy_history.push(self.energy(&neighbors));
        for _ in 0..iterations {
            let before = self.directions.clone();
            self.sweep(&neighbors);
            self.energy_history.push(self.energy(&neighbors));
            let moved = before
                .iter()
                .zip(&self.directions)
                .map(|(a, b)| (*a - *b).norm())
                .fold(T::zero(), T::max);
            if moved < T::lit(1e-15) {
                break;
            }
        }
    }

    pub fn frozen_vertices(&self) -> Vec<usize> {
        (0..self.frozen.len()).filter(|&i| self.frozen[i]).collect()
    }
}

/// Deterministically initialized orientation field after `iterations` sweeps.
pub fn optimize_orientation_field<T: Real>(mesh: &TriMesh<T>, iterations: usize) -> OrientationField<T> {
    let mut f = OrientationField::initial(mesh);
    f.optimize(mesh, iterations);
    f
}

/// Per-vertex lattice anchors at global scale ρ.
#[derive(Clone, Debug, PartialEq)]
pub struct PositionField<T> {
    pub anchors: Vec<Vec3<T>>,
    pub rho: T,
    pub energy_history: Vec<T>,
    pub sweeps: usize,
}

struct Frame<T> {
    p: Vec3<T>,
    n: Vec3<T>,
    u: Vec3<T>,
    v: Vec3<T>,
}

impl<T: Real> Frame<T> {
    fn new(p: Vec3<T>, n: Vec3<T>, o: Vec3<T>) -> Self {
        Self { p, n, u: o, v: n.cross(o) }
    }

    /// Integer lattice coordinates of `d` rounded to the nearest node.
    fn round(&self, d: Vec3<T>, rho: T) -> (T, T) {
        ((d.dot(self.u) / rho).round(), (d.dot(self.v) / rho).round())
    }

    fn shift(&self, a: T, b: T, rho: T) -> Vec3<T> {
        (self.u * a + self.v * b) * rho
    }
}

fn frames<T: Real>(mesh: &TriMesh<T>, orient: &OrientationField<T>) -> Vec<Frame<T>> {
    (0..mesh.vertices.len())
        .map(|i| Frame::new(mesh.vertices[i], orient.normals[i], orient.directions[i]))
        .collect()
}

/// Squared residual between `q_i` and the nearest lattice translate of `q_j`,
/// measured in `frame`.
fn residual<T: Real>(frame: &Frame<T>, qi: Vec3<T>, qj: Vec3<T>, rho: T) -> T {
    let d = qj - qi;
    let (a, b) = frame.round(d, rho);
    (d - frame.shift(a, b, rho)).norm_squared()
}

fn edge_residual<T: Real>(fr: &[Frame<T>], q: &[Vec3<T>], i: usize, j: usize, rho: T) -> T {
    let (lo, hi) = if i < j { (i, j) } else { (j, i) };
    residual(&fr[lo], q[lo], q[hi], rho)
}

fn position_energy<T: Real>(fr: &[Frame<T>], q: &[Vec3<T>], neighbors: &[Vec<usize>], rho: T) -> T {
    let mut e = T::zero();
    for (i, ns) in neighbors.iter().enumerate() {
        for &j in ns.iter().filter(|&&j| j > i) {
            e += edge_residual(fr, q, i, j, rho);
        }
    }
    e
}

/// Gauss–Seidel optimization of lattice anchors.
///
/// Each update averages the neighbor anchors after moving each one by the
/// lattice translation that brings it nearest the current anchor, projects
/// onto the tangent plane and snaps back to the lattice copy nearest the
/// vertex. Updates that would raise the local energy are rejected.
pub fn optimize_position_field<T: Real>(
    mesh: &TriMesh<T>,
    orient: &OrientationField<T>,
    rho: T,
    iterations: usize,
) -> Result<PositionField<T>> {
    optimize_position_field_with(mesh, orient, rho, iterations, PositionInit::Vertex)
}

/// Starting anchors for the position solver.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PositionInit {
    /// q_i = p_i.
    #[default]
    Vertex,
    /// Anchors carried outward from the lowest vertex of each component in
    /// breadth-first order, each projected onto the next tangent plane and
    /// snapped near its vertex. Avoids the stationary start q = p on closed
    /// surfaces, where there is no boundary to drive the relaxation.
    Propagated,
}

fn propagated_anchors<T: Real>(mesh: &TriMesh<T>, fr: &[Frame<T>], neighbors: &[Vec<usize>], rho: T) -> Vec<Vec3<T>> {
    let mut q = mesh.vertices.clone();
    let mut seen = vec![false; q.len()];
    let mut queue = std::collections::VecDeque::new();
    for root in 0..q.len() {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        queue.push_back(root);
        while let Some(i) = queue.pop_front() {
            for &j in &neighbors[i] {
                if seen[j] {
                    continue;
                }
                seen[j] = true;
                let f = &fr[j];
                let mut c = q[i] - f.n * (q[i] - f.p).dot(f.n);
                let (a, b) = f.round(c - f.p, rho);
                c -= f.shift(a, b, rho);
                q[j] = c;
                queue.push_back(j);
            }
        }
    }
    q
}

pub fn optimize_position_field_with<T: Real>(
    mesh: &TriMesh<T>,
    orient: &OrientationField<T>,
    rho: T,
    iterations: usize,
    init: PositionInit,
) -> Result<PositionField<T>> {
    if !(rho > T::zero() && rho.is_finite()) {
        return Err(Error::invalid(format!("lattice scale must be positive, got {rho}")));
    }
    if orient.directions.len() != mesh.vertices.len() {
        return Err(Error::invalid("orientation field does not match mesh"));
    }
    let neighbors = mesh.vertex_neighbors();
    let fr = frames(mesh, orient);
    let mut q = match init {
        PositionInit::Vertex => mesh.vertices.clone(),
        PositionInit::Propagated => propagated_anchors(mesh, &fr, &neighbors, rho),
    };
    let mut history = vec![position_energy(&fr, &q, &neighbors, rho)];
    let tol = rho * T::lit(1e-10);
    let mut sweeps = 0;
    for _ in 0..iterations {
        sweeps += 1;
        let mut moved = T::zero();
        for i in 0..q.len() {
            if neighbors[i].is_empty() || orient.frozen[i] {
                continue;
            }
            let f = &fr[i];
            let mut sum = Vec3::zero();
            for &j in &neighbors[i] {
                let (a, b) = f.round(q[j] - q[i], rho);
                sum += q[j] - f.shift(a, b, rho);
            }
            let avg = sum / T::from_usize_lossy(neighbors[i].len());
            let mut cand = avg - f.n * (avg - f.p).dot(f.n);
            let (a, b) = f.round(cand - f.p, rho);
            cand -= f.shift(a, b, rho);

            let local = |q: &[Vec3<T>]| {
                neighbors[i].iter().fold(T::zero(), |acc, &j| acc + edge_residual(&fr, q, i, j, rho))
            };
            let old = q[i];
            let before = local(&q);
            q[i] = cand;
            if local(&q) > before {
                q[i] = old;
            } else {
                // Compare modulo the lattice so a pure re-snap counts as no motion.
                let (a, b) = f.round(cand - old, rho);
                moved = moved.max((cand - old - f.shift(a, b, rho)).norm());
            }
        }
        history.push(position_energy(&fr, &q, &neighbors, rho));
        if moved < tol {
            break;
        }
    }
    Ok(PositionField { anchors: q, rho, energy_history: history, sweeps })
}

/// Mixed triangle/quad mesh with polygon faces.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QuadDominantMesh<T> {
    pub vertices: Vec<Vec3<T>>,
    pub faces: Vec<Vec<usize>>,
}

impl<T: Real> QuadDominantMesh<T> {
    pub fn quad_count(&self) -> usize {
        self.faces.iter().filter(|f| f.len() == 4).count()
    }

    pub fn triangle_count(&self) -> usize {
        self.faces.iter().filter(|f| f.len() == 3).count()
    }

    /// Undirected edge → number of incident faces.
    pub fn edge_use(&self) -> HashMap<(usize, usize), usize> {
        let mut m = HashMap::new();
        for f in &self.faces {
            for k in 0..f.len() {
                *m.entry(crate::mesh::edge_key(f[k], f[(k + 1) % f.len()])).or_insert(0) += 1;
            }
        }
        m
    }

    /// Triangles none of whose edges lie on the boundary.
    pub fn interior_triangle_count(&self) -> usize {
        let use_ = self.edge_use();
        self.faces
            .iter()
            .filter(|f| f.len() == 3)
            .filter(|f| (0..3).all(|k| use_[&crate::mesh::edge_key(f[k], f[(k + 1) % 3])] >= 2))
            .count()
    }

    /// Fan-triangulated copy, useful for rendering and area checks.
    pub fn triangulate(&self) -> TriMesh<T> {
        let mut faces = Vec::new();
        for f in &self.faces {
            for k in 1..f.len() - 1 {
                faces.push([f[0], f[k], f[k + 1]]);
            }
        }
        TriMesh { vertices: self.vertices.clone(), faces }
    }
}

/// Diagnostics from quad extraction.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExtractReport {
    pub sites: usize,
    pub quads: usize,
    pub triangles: usize,
    /// Cycles of 5 to 8 sites that were fan-triangulated.
    pub polygons_split: usize,
    /// Long or negatively oriented cycles (boundaries and holes).
    pub dropped_cycles: usize,
    /// Merged sites spanning more than one lattice node.
    pub inconsistent_sites: Vec<usize>,
    /// Interior sites with a link count other than four.
    pub irregular_vertices: Vec<usize>,
}

impl ExtractReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "sites={}", self.sites);
        let _ = writeln!(s, "quads={}", self.quads);
        let _ = writeln!(s, "triangles={}", self.triangles);
        let _ = writeln!(s, "polygons_split={}", self.polygons_split);
        let _ = writeln!(s, "dropped_cycles={}", self.dropped_cycles);
        let _ = writeln!(s, "inconsistent_sites={}", self.inconsistent_sites.len());
        let _ = writeln!(s, "irregular_vertices={}", self.irregular_vertices.len());
        for v in &self.irregular_vertices {
            let _ = writeln!(s, "irregular {v}");
        }
        s
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

const MAX_POLYGON: usize = 8;

/// Greedy lattice-collapse extraction.
///
/// Adjacent vertices whose anchors lie within 0.3ρ merge into one site; mesh
/// edges joining sites one lattice step apart become links; faces are the
/// cycles of the link graph traced with a rotation system around each site.
pub fn extract_quads<T: Real>(
    mesh: &TriMesh<T>,
    orient: &OrientationField<T>,
    pos: &PositionField<T>,
) -> (QuadDominantMesh<T>, ExtractReport) {
    let rho = pos.rho;
    let q = &pos.anchors;
    let nv = mesh.vertices.len();
    let fr = frames(mesh, orient);
    let edges = mesh.edges();

    let mut parent: Vec<usize> = (0..nv).collect();
    for &(i, j) in &edges {
        if q[i].distance(q[j]) <= rho * T::lit(0.3) {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let referenced = {
        let mut r = vec![false; nv];
        for f in &mesh.faces {
            for &v in f {
                r[v] = true;
            }
        }
        r
    };
    let mut site_of = vec![usize::MAX; nv];
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut root_site = HashMap::new();
    for v in 0..nv {
        if !referenced[v] {
            continue;
        }
        let r = find(&mut parent, v);
        let s = *root_site.entry(r).or_insert_with(|| {
            members.push(Vec::new());
            members.len() - 1
        });
        site_of[v] = s;
        members[s].push(v);
    }

    let mut report = ExtractReport { sites: members.len(), ..Default::default() };
    let mut positions = Vec::with_capacity(members.len());
    let mut site_frame = Vec::with_capacity(members.len());
    for (s, m) in members.iter().enumerate() {
        let c = m.iter().fold(Vec3::zero(), |acc, &v| acc + q[v]) / T::from_usize_lossy(m.len());
        if m.iter().any(|&v| q[v].distance(c) > rho * T::lit(0.6)) {
            report.inconsistent_sites.push(s);
        }
        positions.push(c);
        site_frame.push(m[0]);
    }

    // Unit-offset links between sites.
    let mut links: Vec<Vec<usize>> = vec![Vec::new(); members.len()];
    for &(i, j) in &edges {
        let (si, sj) = (site_of[i], site_of[j]);
        if si == sj || si == usize::MAX || sj == usize::MAX {
            continue;
        }
        let (a, b) = fr[i].round(q[j] - q[i], rho);
        if (a.abs() + b.abs()) == T::one() && !links[si].contains(&sj) {
            links[si].push(sj);
            links[sj].push(si);
        }
    }

    // Sort links counter-clockwise in each site's tangent frame.
    let angle = |s: usize, t: usize| {
        let f = &fr[site_frame[s]];
        let d = positions[t] - positions[s];
        d.dot(f.v).atan2(d.dot(f.u))
    };
    for s in 0..links.len() {
        let mut l = std::mem::take(&mut links[s]);
        l.sort_by(|&a, &b| angle(s, a).partial_cmp(&angle(s, b)).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
        links[s] = l;
    }

    let mut used: BTreeMap<(usize, usize), bool> = BTreeMap::new();
    for (s, l) in links.iter().enumerate() {
        for &t in l {
            used.insert((s, t), false);
        }
    }
    let keys: Vec<(usize, usize)> = used.keys().copied().collect();
    let mut faces = Vec::new();
    for start in keys {
        if used[&start] {
            continue;
        }
        let mut cycle = vec![start.0];
        let (mut u, mut v) = start;
        used.insert(start, true);
        loop {
            // Next neighbor clockwise from u around v keeps the face on the left.
            let l = &links[v];
            let k = l.iter().position(|&x| x == u).expect("symmetric links");
            let w = l[(k + l.len() - 1) % l.len()];
            if (v, w) == start {
                break;
            }
            cycle.push(v);
            if used[&(v, w)] {
                // Only possible with an inconsistent rotation system.
                cycle.clear();
                break;
            }
            used.insert((v, w), true);
            u = v;
            v = w;
        }
        if cycle.len() < 3 {
            if !cycle.is_empty() {
                report.dropped_cycles += 1;
            }
            continue;
        }
        let n = cycle.iter().fold(Vec3::zero(), |acc, &s| acc + fr[site_frame[s]].n);
        let mut area = Vec3::zero();
        for k in 0..cycle.len() {
            area += positions[cycle[k]].cross(positions[cycle[(k + 1) % cycle.len()]]);
        }
        if area.dot(n) <= T::zero() || cycle.len() > MAX_POLYGON {
            report.dropped_cycles += 1;
            continue;
        }
        match cycle.len() {
            3 | 4 => faces.push(cycle),
            _ => {
                report.polygons_split += 1;
                for k in 1..cycle.len() - 1 {
                    faces.push(vec![cycle[0], cycle[k], cycle[k + 1]]);
                }
            }
        }
    }

    let out = QuadDominantMesh { vertices: positions, faces };
    report.quads = out.quad_count();
    report.triangles = out.triangle_count();
    let use_ = out.edge_use();
    let mut on_boundary = vec![false; out.vertices.len()];
    let mut degree = vec![0usize; out.vertices.len()];
    for (&(a, b), &c) in &use_ {
        degree[a] += 1;
        degree[b] += 1;
        if c < 2 {
            on_boundary[a] = true;
            on_boundary[b] = true;
        }
    }
    report.irregular_vertices = (0..out.vertices.len())
        .filter(|&s| !on_boundary[s] && degree[s] > 0 && degree[s] != 4)
        .collect();
    (out, report)
}

/// Default lattice scale for a triangular target edge length.
pub fn default_rho<T: Real>(target_edge_length: T) -> T {
    target_edge_length * T::lit(2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;

    fn rot90(n: Vec3<f64>, o: Vec3<f64>) -> Vec3<f64> {
        n.cross(o)
    }

    #[test]
    fn quarter_turn_is_equivalent() {
        let n = Vec3::unit_z();
        let o = Vec3::new(0.6, 0.8, 0.0);
        assert!(rosy_edge_energy(o, n, rot90(n, o), n).abs() < 1e-15);
        assert!(rosy_edge_energy(o, n, -o, n).abs() < 1e-15);
        let diag = Vec3::new(1.0, 1.0, 0.0).normalized();
        let e = rosy_edge_energy(Vec3::unit_x(), n, diag, n);
        assert!((e - (1.0 - 0.5f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn two_vertex_edge_with_rotated_direction_has_zero_energy() {
        let m = TriMesh::new(
            vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let mut f = OrientationField::initial(&m);
        f.directions[1] = rot90(f.normals[1], f.directions[0]);
        f.directions[2] = -f.directions[0];
        assert!(f.energy(&m.vertex_neighbors()).abs() < 1e-15);
    }

    #[test]
    fn constant_field_is_fixed_point() {
        let m = shapes::plane_grid(8usize, 8, 1.0f64, 1.0);
        let mut f = OrientationField::initial(&m);
        let before = f.directions.clone();
        f.optimize(&m, 10);
        assert_eq!(f.directions, before);
        assert!(f.energy_history.iter().all(|&e| e.abs() < 1e-15));
    }

    fn max_pairwise_rosy_angle(f: &OrientationField<f64>) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..f.directions.len() {
            for j in i + 1..f.directions.len() {
                let best = (0..4)
                    .map(|k| {
                        let mut r = f.directions[j];
                        for _ in 0..k {
                            r = f.normals[j].cross(r);
                        }
                        f.directions[i].dot(r).clamp(-1.0, 1.0).acos()
                    })
                    .fold(f64::INFINITY, f64::min);
                worst = worst.max(best);
            }
        }
        worst
    }

    #[test]
    fn random_init_on_plane_becomes_consistent() {
        let m = shapes::plane_grid(4usize, 4, 1.0f64, 1.0);
        for seed in 0..30 {
            let mut f = OrientationField::random(&m, seed);
            assert!(max_pairwise_rosy_angle(&f) > 0.1);
            f.optimize(&m, 50);
            let worst = max_pairwise_rosy_angle(&f);
            assert!(worst < 1e-3, "seed {seed}: {worst}");
            for w in f.energy_history.windows(2) {
                assert!(w[1] <= w[0] + ENERGY_SLACK);
            }
        }
    }

    #[test]
    fn sphere_field_stays_unit_and_tangent() {
        let m = shapes::uv_sphere(Vec3::<f64>::zero(), 1.0, 12, 24);
        let mut f = OrientationField::random(&m, 3);
        f.optimize(&m, 30);
        for w in f.energy_history.windows(2) {
            assert!(w[1] <= w[0] + ENERGY_SLACK);
        }
        for (o, n) in f.directions.iter().zip(&f.normals) {
            assert!((o.norm() - 1.0).abs() < 1e-6);
            assert!(o.dot(*n).abs() < 1e-6);
        }
    }

    #[test]
    fn degenerate_normal_is_frozen() {
        let mut m = shapes::plane_grid(3usize, 3, 1.0f64, 1.0);
        m.vertices.push(Vec3::new(5.0, 5.0, 5.0));
        let f = optimize_orientation_field(&m, 5);
        assert_eq!(f.frozen_vertices(), vec![9]);
    }

    /// Anchors whose pairwise offsets in the shared frame are integer multiples of ρ.
    fn max_lattice_error(q: &[Vec3<f64>], u: Vec3<f64>, v: Vec3<f64>, rho: f64) -> f64 {
        let mut worst = 0.0f64;
        for a in q {
            for b in q {
                let d = *b - *a;
                for c in [d.dot(u) / rho, d.dot(v) / rho] {
                    worst = worst.max((c - c.round()).abs());
                }
            }
        }
        worst
    }

    #[test]
    fn plane_anchors_converge_to_single_lattice() {
        let m = shapes::plane_grid(12usize, 12, 1.0f64, 1.0);
        let h = 1.0 / 11.0;
        let rho = 3.0 * h;
        let o = optimize_orientation_field(&m, 10);
        let p = optimize_position_field(&m, &o, rho, 20_000).unwrap();
        for w in p.energy_history.windows(2) {
            assert!(w[1] <= w[0] + ENERGY_SLACK);
        }
        let err = max_lattice_error(&p.anchors, o.directions[0], o.normals[0].cross(o.directions[0]), rho);
        assert!(err < 1e-4, "{err}");
        for (a, v) in p.anchors.iter().zip(&m.vertices) {
            assert!(a.distance(*v) <= rho * 2f64.sqrt());
        }
    }

    #[test]
    fn single_vertex_keeps_position() {
        let m = TriMesh::new(vec![Vec3::new(0.3, 0.2, 0.1)], vec![]).unwrap();
        let o = OrientationField::initial(&m);
        let p = optimize_position_field(&m, &o, 0.5, 10).unwrap();
        assert_eq!(p.anchors, m.vertices);
    }

    #[test]
    fn coarse_scale_collapses_to_one_point() {
        let m = shapes::plane_grid(6usize, 6, 1.0f64, 1.0);
        let o = optimize_orientation_field(&m, 10);
        let p = optimize_position_field(&m, &o, 4.0, 20_000).unwrap();
        let q = optimize_position_field_with(&m, &o, 4.0, 20_000, PositionInit::Propagated).unwrap();
        assert!(q.anchors.iter().all(|a| a.distance(q.anchors[0]) < 1e-6));
        let first = p.anchors[0];
        assert!(p.anchors.iter().all(|a| a.distance(first) < 1e-6));
        let (qm, _) = extract_quads(&m, &o, &p);
        assert_eq!(qm.vertices.len(), 1);
    }

    #[test]
    fn invalid_scale_is_rejected() {
        let m = shapes::plane_grid(3usize, 3, 1.0f64, 1.0);
        let o = OrientationField::initial(&m);
        assert!(optimize_position_field(&m, &o, 0.0, 1).is_err());
    }

    #[test]
    fn plane_extracts_only_quads() {
        let m = shapes::plane_grid(31usize, 31, 1.0f64, 1.0);
        let rho = 3.0 / 30.0;
        let o = optimize_orientation_field(&m, 10);
        let p = optimize_position_field(&m, &o, rho, 20_000).unwrap();
        let (qm, rep) = extract_quads(&m, &o, &p);
        assert_eq!(qm.interior_triangle_count(), 0, "{}", rep.to_text());
        assert!(rep.quads > 0);
        let expected = 1.0 / (rho * rho);
        let n = qm.faces.len() as f64;
        assert!(n >= 0.5 * expected && n <= 2.0 * expected, "{n} vs {expected}");
        // Quads are consistently oriented with the input surface.
        let t = qm.triangulate();
        assert!((0..t.num_faces()).all(|f| t.face_cross(f).z > 0.0));
    }

    #[test]
    fn sphere_face_count_tracks_scale() {
        let m = shapes::uv_sphere(Vec3::<f64>::zero(), 1.0, 40, 80);
        let rho = 0.25;
        let o = optimize_orientation_field(&m, 100);
        let p = optimize_position_field_with(&m, &o, rho, 300, PositionInit::Propagated).unwrap();
        for w in p.energy_history.windows(2) {
            assert!(w[1] <= w[0] + ENERGY_SLACK);
        }
        let (qm, rep) = extract_quads(&m, &o, &p);
        let expected = m.total_area() / (rho * rho);
        let n = qm.faces.len() as f64;
        assert!(n >= 0.5 * expected && n <= 2.0 * expected, "{n} vs {expected}\n{}", rep.to_text());
        assert!(rep.quads > rep.triangles);
    }
}
