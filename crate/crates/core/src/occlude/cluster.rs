use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::mesh::TriMesh;
use crate::paint::Camera;
use crate::scalar::Real;

use super::InpaintParams;

const FEATURE_DIM: usize = 6;
type Feature<T> = [T; FEATURE_DIM];

#[derive(Clone, Debug, PartialEq)]
pub struct OcclusionCluster<T> {
    pub faces: Vec<usize>,
    /// Area-weighted centroid of the member faces.
    pub centroid: Vec3<T>,
    /// Unit area-weighted mean normal, or zero when `degenerate_normal`.
    pub normal: Vec3<T>,
    pub degenerate_normal: bool,
    pub camera: Camera<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Clustering<T> {
    pub clusters: Vec<OcclusionCluster<T>>,
    pub requested_k: usize,
    /// k actually used; smaller than requested when there are fewer distinct faces.
    pub k: usize,
    pub rounds: usize,
    pub converged: bool,
    /// Weighted within-cluster inertia after each Lloyd round.
    pub inertia_history: Vec<T>,
}

fn features<T: Real>(mesh: &TriMesh<T>, faces: &[usize], position_weight: T) -> Vec<Feature<T>> {
    let diag = mesh.bbox_diagonal();
    let scale = if diag > T::zero() { position_weight / diag } else { T::zero() };
    faces
        .iter()
        .map(|&f| {
            let n = mesh.face_normal(f);
            let c = mesh.face_centroid(f) * scale;
            [n.x, n.y, n.z, c.x, c.y, c.z]
        })
        .collect()
}

fn dist2<T: Real>(a: &Feature<T>, b: &Feature<T>) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest center, ties to the lower index.
fn nearest<T: Real>(x: &Feature<T>, centers: &[Feature<T>]) -> (usize, T) {
    let mut best = (0, T::infinity());
    for (c, center) in centers.iter().enumerate() {
        let d = dist2(x, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn distinct_count<T: Real>(feats: &[Feature<T>]) -> usize {
    let mut keys: Vec<Vec<u64>> = feats.iter().map(|f| f.iter().map(|v| v.to_f64_lossy().to_bits()).collect()).collect();
    keys.sort();
    keys.dedup();
    keys.len()
}

fn seed_centers<T: Real>(feats: &[Feature<T>], weights: &[T], k: usize, seed: u64) -> Vec<Feature<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w64: Vec<f64> = weights.iter().map(|w| w.to_f64_lossy()).collect();
    let first = WeightedIndex::new(&w64).map(|d| d.sample(&mut rng)).unwrap_or(0);
    let mut centers = vec![feats[first]];
    let mut d2: Vec<T> = feats.iter().map(|x| dist2(x, &centers[0])).collect();
    while centers.len() < k {
        let probs: Vec<f64> = d2.iter().zip(&w64).map(|(d, w)| d.to_f64_lossy() * w).collect();
        let pick = match WeightedIndex::new(&probs) {
            Ok(dist) => dist.sample(&mut rng),
            // All weighted distances zero: take the farthest point.
            Err(_) => argmax(&d2),
        };
        centers.push(feats[pick]);
        for (d, x) in d2.iter_mut().zip(feats) {
            *d = d.min(dist2(x, &feats[pick]));
        }
    }
    centers
}

fn argmax<T: Real>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Area-weighted k-means (k-means++ seeding, Lloyd iterations) of the
/// given faces on `[n_f, w_p · centroid_f / bbox_diagonal]`.
///
/// Each round assigns faces to their nearest center and moves centers to the
/// weighted means; a center left without faces is moved onto the face
/// farthest from its own center. Stops at an assignment fixed point or after
/// `params.max_rounds` rounds.
pub fn cluster_occluded<T: Real>(mesh: &TriMesh<T>, faces: &[usize], params: &InpaintParams<T>) -> Result<Clustering<T>> {
    params.validate()?;
    if faces.is_empty() {
        return Err(Error::invalid("no untextured faces to cluster"));
    }
    let feats = features(mesh, faces, params.position_weight);
    let areas: Vec<T> = faces.iter().map(|&f| mesh.face_area(f)).collect();
    let total: T = areas.iter().copied().sum();
    let weights: Vec<T> = if total > T::zero() { areas } else { vec![T::one(); faces.len()] };
    let k = params.k.min(distinct_count(&feats));

    let mut centers = seed_centers(&feats, &weights, k, params.seed);
    let mut assign = vec![usize::MAX; faces.len()];
    let mut history = Vec::new();
    let mut converged = false;
    let mut rounds = 0;
    while rounds < params.max_rounds {
        let mut changed = false;
        let mut d2 = vec![T::zero(); faces.len()];
        for (i, x) in feats.iter().enumerate() {
            let (c, d) = nearest(x, &centers);
            changed |= assign[i] != c;
            assign[i] = c;
            d2[i] = d;
        }
        let mut sum = vec![[T::zero(); FEATURE_DIM]; k];
        let mut mass = vec![T::zero(); k];
        for (i, x) in feats.iter().enumerate() {
            let c = assign[i];
            mass[c] += weights[i];
            for (s, &v) in sum[c].iter_mut().zip(x) {
                *s += weights[i] * v;
            }
        }
        let empty: Vec<usize> = (0..k).filter(|&c| mass[c] <= T::zero()).collect();
        if !changed && empty.is_empty() {
            converged = true;
            break;
        }
        rounds += 1;
        for c in 0..k {
            if mass[c] > T::zero() {
                centers[c] = sum[c].map(|s| s / mass[c]);
            }
        }
        let mut d_new: Vec<T> = feats.iter().zip(&assign).map(|(x, &c)| dist2(x, &centers[c])).collect();
        for c in empty {
            let far = argmax(&d_new);
            centers[c] = feats[far];
            d_new[far] = T::zero();
        }
        let inertia = feats.iter().zip(&assign).zip(&weights).map(|((x, &c), &w)| w * dist2(x, &centers[c])).sum();
        history.push(inertia);
    }

    let mut members = vec![Vec::new(); k];
    for (i, &c) in assign.iter().enumerate() {
        members[c].push(faces[i]);
    }
    let clusters = members
        .into_iter()
        .filter(|m| !m.is_empty())
        .map(|m| make_cluster(mesh, m, params.tile_resolution))
        .collect::<Result<Vec<_>>>()?;
    Ok(Clustering { clusters, requested_k: params.k, k, rounds, converged, inertia_history: history })
}

fn make_cluster<T: Real>(mesh: &TriMesh<T>, faces: Vec<usize>, resolution: u32) -> Result<OcclusionCluster<T>> {
    let (mut c, mut n, mut a) = (Vec3::zero(), Vec3::zero(), T::zero());
    for &f in &faces {
        let area = mesh.face_area(f);
        c += mesh.face_centroid(f) * area;
        n += mesh.face_normal(f) * area;
        a += area;
    }
    let centroid = if a > T::zero() {
        c / a
    } else {
        faces.iter().fold(Vec3::zero(), |s, &f| s + mesh.face_centroid(f)) / T::from_usize_lossy(faces.len())
    };
    // Threshold on the area-normalized sum so it does not depend on mesh scale.
    let unit_sum = if a > T::zero() { n / a } else { Vec3::zero() };
    let degenerate = unit_sum.norm() < T::lit(1e-6);
    let normal = if degenerate { Vec3::zero() } else { unit_sum.normalized() };
    let mut cluster = OcclusionCluster { faces, centroid, normal, degenerate_normal: degenerate, camera: Camera::new(T::zero(), T::zero(), T::one(), 16, 16)? };
    cluster.camera = cluster_viewpoint(mesh, &cluster, resolution)?;
    Ok(cluster)
}

/// Orthographic camera looking along the cluster's inward mean normal.
///
/// The view is centered on the cluster centroid and the camera sits where the
/// ray from the centroid against the view direction leaves the mesh bounding
/// sphere, moved back further if a member vertex would otherwise lie behind
/// the image plane. The scale fits the members' projected extent × 1.2.
pub fn cluster_viewpoint<T: Real>(mesh: &TriMesh<T>, cluster: &OcclusionCluster<T>, resolution: u32) -> Result<Camera<T>> {
    let (lo, hi) = mesh.bounding_box().ok_or_else(|| Error::invalid("empty mesh"))?;
    let center = (lo + hi) * T::lit(0.5);
    let radius = (hi - lo).norm() * T::lit(0.5);
    let dir = if cluster.degenerate_normal {
        let mesh_centroid = mesh.vertices.iter().fold(Vec3::zero(), |s, &v| s + v) / T::from_usize_lossy(mesh.num_vertices());
        (mesh_centroid - cluster.centroid).try_normalize(T::lit(1e-12)).unwrap_or(-Vec3::unit_z())
    } else {
        -cluster.normal
    };
    let eye = -dir;
    let rel = cluster.centroid - center;
    let b = rel.dot(eye);
    let disc = (b * b - (rel.norm_squared() - radius * radius)).max(T::zero());
    let mut distance = -b + disc.sqrt();
    let verts = cluster.faces.iter().flat_map(|&f| mesh.faces[f]).map(|v| mesh.vertices[v] - cluster.centroid);
    let mut front = T::zero();
    for p in verts.clone() {
        front = front.max(-p.dot(dir));
    }
    let floor = (radius * T::lit(1e-3)).max(T::min_positive_value());
    distance = distance.max(front + floor).max(floor);

    let probe = Camera::looking_along(dir, cluster.centroid, distance, T::one(), resolution, resolution)?;
    let (r, u, _) = probe.basis();
    let mut extent = T::zero();
    for p in verts {
        extent = extent.max(p.dot(r).abs() * T::lit(2.0)).max(p.dot(u).abs() * T::lit(2.0));
    }
    let scale = if extent > T::zero() { extent * T::lit(1.2) } else if radius > T::zero() { radius * T::lit(1e-3) } else { T::one() };
    Ok(Camera { ortho_scale: scale, ..probe })
}
