use rayon::prelude::*;

use super::camera::{Camera, Projected};
use crate::math::Vec3;
use crate::mesh::TriMesh;
use crate::scalar::Real;

pub const NO_FACE: u32 = u32::MAX;

/// Per-pixel depth, face index and face normal, row-major with row 0 at the top.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderBuffers<T> {
    pub width: u32,
    pub height: u32,
    pub depth: Vec<T>,
    pub face_id: Vec<u32>,
    pub normal: Vec<Vec3<T>>,
}

impl<T: Real> RenderBuffers<T> {
    pub fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn face_at(&self, x: u32, y: u32) -> Option<usize> {
        let f = self.face_id[self.index(x, y)];
        (f != NO_FACE).then_some(f as usize)
    }

    pub fn covered_pixels(&self) -> usize {
        self.face_id.iter().filter(|&&f| f != NO_FACE).count()
    }

    /// Pixel containing continuous coordinates, if inside the image.
    pub fn pixel_of(&self, x: T, y: T) -> Option<(u32, u32)> {
        if !(x >= T::zero() && y >= T::zero()) {
            return None;
        }
        let (xi, yi) = (x.floor().to_u64()?, y.floor().to_u64()?);
        (xi < self.width as u64 && yi < self.height as u64).then_some((xi as u32, yi as u32))
    }
}

const BAND: usize = 16;

struct ScreenTri<T> {
    p: [Projected<T>; 3],
    area2: T,
    min_y: usize,
    max_y: usize,
}

/// Rasterizes every face of `mesh` with an exact depth test.
///
/// Pixel centers are sampled with inclusive edge tests; among faces covering
/// a pixel the smallest (depth, face index) wins, so the result does not
/// depend on face order or thread count. Fragments behind the image plane are
/// clipped; no back-face culling is done.
pub fn rasterize<T: Real>(mesh: &TriMesh<T>, camera: &Camera<T>) -> RenderBuffers<T> {
    rasterize_subset(mesh, camera, None)
}

/// Like [`rasterize`], restricted to the faces listed in `faces` when given.
pub fn rasterize_subset<T: Real>(mesh: &TriMesh<T>, camera: &Camera<T>, faces: Option<&[usize]>) -> RenderBuffers<T> {
    let (w, h) = (camera.width as usize, camera.height as usize);
    let basis = camera.basis();
    let face_list: Vec<usize> = match faces {
        Some(f) => f.to_vec(),
        None => (0..mesh.faces.len()).collect(),
    };
    let normals: Vec<Vec3<T>> = face_list.iter().map(|&f| mesh.face_normal(f)).collect();

    let tris: Vec<Option<ScreenTri<T>>> = face_list
        .par_iter()
        .map(|&f| {
            let p = mesh.faces[f].map(|v| camera.project_with(mesh.vertices[v], basis));
            let area2 = (p[1].x - p[0].x) * (p[2].y - p[0].y) - (p[2].x - p[0].x) * (p[1].y - p[0].y);
            if area2 == T::zero() || !area2.is_finite() {
                return None;
            }
            let ys = [p[0].y, p[1].y, p[2].y];
            let lo = ys.iter().copied().fold(T::infinity(), T::min);
            let hi = ys.iter().copied().fold(T::neg_infinity(), T::max);
            // Pixel centers at j + 0.5 inside [lo, hi].
            let min_y = (lo - T::lit(0.5)).ceil().max(T::zero());
            let max_y = (hi - T::lit(0.5)).floor().min(T::from_usize_lossy(h) - T::one());
            if max_y < min_y {
                return None;
            }
            Some(ScreenTri { p, area2, min_y: min_y.to_usize()?, max_y: max_y.to_usize()? })
        })
        .collect();

    // Bucket faces by row band.
    let bands = h.div_ceil(BAND);
    let mut per_band: Vec<Vec<usize>> = vec![Vec::new(); bands];
    for (k, t) in tris.iter().enumerate() {
        if let Some(t) = t {
            for b in t.min_y / BAND..=t.max_y / BAND {
                per_band[b].push(k);
            }
        }
    }

    let mut depth = vec![T::infinity(); w * h];
    let mut face_id = vec![NO_FACE; w * h];
    let mut normal = vec![Vec3::zero(); w * h];
    let half = T::lit(0.5);

    depth
        .par_chunks_mut(w * BAND)
        .zip(face_id.par_chunks_mut(w * BAND))
        .enumerate()
        .for_each(|(band, (dep, fid))| {
            let y0 = band * BAND;
            let rows = dep.len() / w;
            for &k in &per_band[band] {
                let t = tris[k].as_ref().unwrap();
                let face = face_list[k] as u32;
                let [a, b, c] = t.p;
                let xs = [a.x, b.x, c.x];
                let lo = xs.iter().copied().fold(T::infinity(), T::min);
                let hi = xs.iter().copied().fold(T::neg_infinity(), T::max);
                let x_min = (lo - half).ceil().max(T::zero());
                let x_max = (hi - half).floor().min(T::from_usize_lossy(w) - T::one());
                if x_max < x_min {
                    continue;
                }
                let (x_min, x_max) = (x_min.to_usize().unwrap(), x_max.to_usize().unwrap());
                let r0 = t.min_y.max(y0);
                let r1 = t.max_y.min(y0 + rows - 1);
                for y in r0..=r1 {
                    let py = T::from_usize_lossy(y) + half;
                    for x in x_min..=x_max {
                        let px = T::from_usize_lossy(x) + half;
                        let w0 = (b.x - px) * (c.y - py) - (c.x - px) * (b.y - py);
                        let w1 = (c.x - px) * (a.y - py) - (a.x - px) * (c.y - py);
                        let w2 = (a.x - px) * (b.y - py) - (b.x - px) * (a.y - py);
                        let inside = if t.area2 > T::zero() {
                            w0 >= T::zero() && w1 >= T::zero() && w2 >= T::zero()
                        } else {
                            w0 <= T::zero() && w1 <= T::zero() && w2 <= T::zero()
                        };
                        if !inside {
                            continue;
                        }
                        let z = (w0 * a.depth + w1 * b.depth + w2 * c.depth) / t.area2;
                        if z < T::zero() {
                            continue;
                        }
                        let i = (y - y0) * w + x;
                        if z < dep[i] || (z == dep[i] && face < fid[i]) {
                            dep[i] = z;
                            fid[i] = face;
                        }
                    }
                }
            }
        });
    let local_of: std::collections::HashMap<u32, usize> =
        face_list.iter().enumerate().map(|(k, &f)| (f as u32, k)).collect();
    normal.par_iter_mut().zip(face_id.par_iter()).for_each(|(n, &f)| {
        if f != NO_FACE {
            *n = normals[local_of[&f]];
        }
    });
    RenderBuffers { width: camera.width, height: camera.height, depth, face_id, normal }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;

    fn cam(scale: f64, res: u32) -> Camera<f64> {
        Camera::new(0.0, 0.0, scale, res, res).unwrap()
    }

    #[test]
    fn single_triangle_coverage() {
        // Facing the front camera (normal −y).
        let m = TriMesh::new(
            vec![Vec3::new(-0.5, 0.0, -0.5), Vec3::new(0.5, 0.0, -0.5), Vec3::new(-0.5, 0.0, 0.5)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let c = cam(2.0, 32);
        let b = rasterize(&m, &c);
        let mut covered = 0;
        for y in 0..32 {
            for x in 0..32 {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                // Pixel centers in world units.
                let (wx, wz) = ((px - 16.0) / 16.0, (16.0 - py) / 16.0);
                let inside = wx >= -0.5 && wz >= -0.5 && wx + wz <= 0.0;
                assert_eq!(b.face_at(x, y).is_some(), inside, "pixel {x},{y}");
                if inside {
                    covered += 1;
                    assert_eq!(b.depth[b.index(x, y)], 1.0);
                    assert!((b.normal[b.index(x, y)] - Vec3::new(0.0, -1.0, 0.0)).norm() < 1e-12);
                } else {
                    assert!(b.depth[b.index(x, y)].is_infinite());
                }
            }
        }
        assert!(covered > 100);
    }

    #[test]
    fn coplanar_tie_goes_to_lower_index() {
        let v = vec![Vec3::new(-0.5, 0.0, -0.5), Vec3::new(0.5, 0.0, -0.5), Vec3::new(-0.5, 0.0, 0.5)];
        let m = TriMesh::new(v, vec![[0, 2, 1], [0, 1, 2]]).unwrap();
        let b = rasterize(&m, &cam(2.0, 32));
        assert!(b.face_id.iter().all(|&f| f == NO_FACE || f == 0));
        let swapped = TriMesh::new(m.vertices.clone(), vec![[0, 1, 2], [0, 2, 1]]).unwrap();
        let b2 = rasterize(&swapped, &cam(2.0, 32));
        assert!(b2.face_id.iter().all(|&f| f == NO_FACE || f == 0));
    }

    #[test]
    fn nearest_face_wins() {
        let near = [Vec3::new(-0.5, -0.2, -0.5), Vec3::new(0.5, -0.2, -0.5), Vec3::new(-0.5, -0.2, 0.5)];
        let far = [Vec3::new(-0.5, 0.3, -0.5), Vec3::new(0.5, 0.3, -0.5), Vec3::new(-0.5, 0.3, 0.5)];
        let m = TriMesh::new([far, near].concat(), vec![[0, 1, 2], [3, 4, 5]]).unwrap();
        let b = rasterize(&m, &cam(2.0, 32));
        assert!(b.face_id.iter().all(|&f| f == NO_FACE || f == 1));
    }

    #[test]
    fn sphere_silhouette_matches_circle() {
        let r = 0.8;
        let m = shapes::uv_sphere(Vec3::<f64>::zero(), r, 128, 256);
        let res = 400;
        let c = cam(2.0, res);
        let b = rasterize(&m, &c);
        let px = c.pixel_size();
        let expected = std::f64::consts::PI * (r / px).powi(2);
        let got = b.covered_pixels() as f64;
        assert!(((got - expected) / expected).abs() < 0.01, "{got} vs {expected}");
    }

    #[test]
    fn result_independent_of_thread_count() {
        let m = shapes::uv_sphere(Vec3::<f64>::zero(), 0.7, 20, 40);
        let c = Camera::new(37.0, 20.0, 2.0, 96, 80).unwrap();
        let a = rasterize(&m, &c);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| rasterize(&m, &c));
        assert_eq!(a, b);
    }

    #[test]
    fn behind_camera_is_clipped() {
        let v = vec![Vec3::new(-0.5, -5.0, -0.5), Vec3::new(0.5, -5.0, -0.5), Vec3::new(-0.5, -5.0, 0.5)];
        let m = TriMesh::new(v, vec![[0, 2, 1]]).unwrap();
        assert_eq!(rasterize(&m, &cam(2.0, 32)).covered_pixels(), 0);
    }
}
