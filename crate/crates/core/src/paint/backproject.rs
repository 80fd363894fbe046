use image::RgbaImage;
use rayon::prelude::*;

use super::atlas::{TexelFlag, TextureAtlas};
use super::camera::Camera;
use super::raster::{rasterize, RenderBuffers};
use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlendParams<T> {
    /// Exponent β on the confidence.
    pub beta: T,
    /// Side-view suppression strength s.
    pub side_strength: T,
    /// Depth-test slack; defaults to 1e-3 × bounding-box diagonal.
    pub depth_bias: Option<T>,
    /// Faces with a smaller textured fraction count as untextured.
    pub coverage_threshold: T,
}

impl<T: Real> Default for BlendParams<T> {
    fn default() -> Self {
        Self { beta: T::lit(4.0), side_strength: T::lit(0.7), depth_bias: None, coverage_threshold: T::lit(0.5) }
    }
}

impl<T: Real> BlendParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= T::zero() && self.beta.is_finite()) {
            return Err(Error::invalid(format!("blend exponent must be non-negative, got {}", self.beta)));
        }
        if !(self.side_strength >= T::zero() && self.side_strength <= T::one()) {
            return Err(Error::invalid(format!("side strength must lie in [0,1], got {}", self.side_strength)));
        }
        if let Some(b) = self.depth_bias {
            if !(b >= T::zero() && b.is_finite()) {
                return Err(Error::invalid(format!("depth bias must be non-negative, got {b}")));
            }
        }
        if !(self.coverage_threshold >= T::zero() && self.coverage_threshold <= T::one()) {
            return Err(Error::invalid("coverage threshold must lie in [0,1]"));
        }
        Ok(())
    }

    pub fn resolved_bias(&self, mesh: &TriMesh<T>) -> T {
        self.depth_bias.unwrap_or_else(|| mesh.bbox_diagonal() * T::lit(1e-3))
    }
}

/// A camera with the image seen through it.
#[derive(Clone, Debug)]
pub struct View<T> {
    pub camera: Camera<T>,
    pub image: RgbaImage,
}

/// Per-view, per-face confidence `clamp(dot(−d, n), 0, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfidenceMap<T> {
    pub per_view: Vec<Vec<T>>,
}

pub fn confidence<T: Real>(mesh: &TriMesh<T>, camera: &Camera<T>) -> Vec<T> {
    let back = -camera.view_direction();
    mesh.face_normals()
        .into_iter()
        .map(|n| n.dot(back).max(T::zero()).min(T::one()))
        .collect()
}

pub fn confidence_map<T: Real>(mesh: &TriMesh<T>, cameras: &[Camera<T>]) -> ConfidenceMap<T> {
    ConfidenceMap { per_view: cameras.iter().map(|c| confidence(mesh, c)).collect() }
}

/// Pixel a texel at `p` (on face `face`) samples in `view`, if visible there.
fn visible_pixel<T: Real>(
    cam: &Camera<T>,
    basis: (crate::math::Vec3<T>, crate::math::Vec3<T>, crate::math::Vec3<T>),
    buf: &RenderBuffers<T>,
    image: &RgbaImage,
    p: crate::math::Vec3<T>,
    bias: T,
) -> Option<(u32, u32)> {
    let q = cam.project_with(p, basis);
    let (x, y) = buf.pixel_of(q.x, q.y)?;
    let i = buf.index(x, y);
    let d = buf.depth[i];
    if !d.is_finite() || q.depth > d + bias || image.get_pixel(x, y)[3] == 0 {
        return None;
    }
    Some((x, y))
}

/// Per-texel bitmask of views that see the texel with positive weight.
pub fn texel_visibility<T: Real>(
    mesh: &TriMesh<T>,
    atlas: &TextureAtlas<T>,
    views: &[View<T>],
    params: &BlendParams<T>,
) -> Result<Vec<u32>> {
    let ctx = Context::new(mesh, views, params)?;
    Ok((0..atlas.texel_face.len())
        .into_par_iter()
        .map(|i| {
            let (x, y) = ((i % atlas.width as usize) as u32, (i / atlas.width as usize) as u32);
            match atlas.surface_point(mesh, x, y) {
                None => 0,
                Some((f, p)) => ctx.visible(f, p).iter().enumerate().fold(0u32, |m, (v, s)| {
                    if s.is_some() {
                        m | (1 << v)
                    } else {
                        m
                    }
                }),
            }
        })
        .collect())
}

struct Context<'a, T: Real> {
    views: &'a [View<T>],
    buffers: Vec<RenderBuffers<T>>,
    bases: Vec<(crate::math::Vec3<T>, crate::math::Vec3<T>, crate::math::Vec3<T>)>,
    conf: ConfidenceMap<T>,
    bias: T,
}

impl<'a, T: Real> Context<'a, T> {
    fn new(mesh: &TriMesh<T>, views: &'a [View<T>], params: &BlendParams<T>) -> Result<Self> {
        params.validate()?;
        if views.len() > 32 {
            return Err(Error::invalid("at most 32 views are supported"));
        }
        for (k, v) in views.iter().enumerate() {
            v.camera.validate()?;
            if v.image.dimensions() != (v.camera.width, v.camera.height) {
                return Err(Error::invalid(format!(
                    "view {k}: image is {}x{} but camera expects {}x{}",
                    v.image.width(),
                    v.image.height(),
                    v.camera.width,
                    v.camera.height
                )));
            }
        }
        let cams: Vec<Camera<T>> = views.iter().map(|v| v.camera).collect();
        Ok(Self {
            views,
            buffers: cams.iter().map(|c| rasterize(mesh, c)).collect(),
            bases: cams.iter().map(|c| c.basis()).collect(),
            conf: confidence_map(mesh, &cams),
            bias: params.resolved_bias(mesh),
        })
    }

    fn visible(&self, face: usize, p: crate::math::Vec3<T>) -> Vec<Option<(u32, u32)>> {
        self.views
            .iter()
            .enumerate()
            .map(|(v, view)| {
                if self.conf.per_view[v][face] <= T::zero() {
                    return None;
                }
                visible_pixel(&view.camera, self.bases[v], &self.buffers[v], &view.image, p, self.bias)
            })
            .collect()
    }
}

/// Confidence-weighted back-projection of view images into the atlas.
///
/// Each face texel is recovered as a surface point and tested against every
/// view's depth buffer. Visible samples are blended with weight
/// `priority · c^β`; side views get priority `1 − s · max(c_front, c_back)`
/// over the front/back views that also see the texel, others priority 1.
/// Texels no view sees stay untextured. Existing atlas colors are replaced.
pub fn backproject<T: Real>(
    mesh: &TriMesh<T>,
    atlas: &TextureAtlas<T>,
    views: &[View<T>],
    params: &BlendParams<T>,
) -> Result<TextureAtlas<T>> {
    if atlas.face_count() != mesh.num_faces() {
        return Err(Error::invalid("atlas layout does not match mesh"));
    }
    let ctx = Context::new(mesh, views, params)?;
    let side: Vec<bool> = views.iter().map(|v| v.camera.is_side_view()).collect();
    let w = atlas.width as usize;

    let texels: Vec<Option<[u8; 3]>> = (0..atlas.texel_face.len())
        .into_par_iter()
        .map(|i| {
            let (x, y) = ((i % w) as u32, (i / w) as u32);
            let (f, p) = atlas.surface_point(mesh, x, y)?;
            let vis = ctx.visible(f, p);
            let c_fb = vis
                .iter()
                .enumerate()
                .filter(|(v, s)| s.is_some() && !side[*v])
                .map(|(v, _)| ctx.conf.per_view[v][f])
                .fold(T::zero(), T::max);
            let mut acc = [0.0f64; 3];
            let mut wsum = 0.0f64;
            for (v, s) in vis.iter().enumerate() {
                let Some((px, py)) = *s else { continue };
                let priority = if side[v] { (T::one() - params.side_strength * c_fb).max(T::zero()) } else { T::one() };
                let weight = (priority * ctx.conf.per_view[v][f].powf(params.beta)).to_f64_lossy();
                if weight <= 0.0 {
                    continue;
                }
                let px = views[v].image.get_pixel(px, py);
                for k in 0..3 {
                    acc[k] += weight * px[k] as f64;
                }
                wsum += weight;
            }
            if wsum <= 0.0 {
                return None;
            }
            Some(acc.map(|a| (a / wsum).round().clamp(0.0, 255.0) as u8))
        })
        .collect();

    let mut out = atlas.clone();
    for (i, t) in texels.into_iter().enumerate() {
        let (x, y) = ((i % w) as u32, (i / w) as u32);
        if out.flags[i] == TexelFlag::Background {
            continue;
        }
        match t {
            Some(rgb) => out.set_texel(x, y, rgb),
            None => out.clear_texel(x, y),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Vec3;
    use crate::mesh::shapes;
    use crate::paint::atlas::AtlasParams;
    use crate::paint::camera::default_cameras;
    use image::Rgba;

    fn solid(cam: &Camera<f64>, rgb: [u8; 3]) -> View<f64> {
        View { camera: *cam, image: RgbaImage::from_pixel(cam.width, cam.height, Rgba([rgb[0], rgb[1], rgb[2], 255])) }
    }

    #[test]
    fn confidence_angles() {
        let m = TriMesh::new(
            vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 0.0, 1.0)],
            vec![[0, 1, 2], [0, 2, 1]],
        )
        .unwrap();
        let front = Camera::new(0.0f64, 0.0, 1.0, 16, 16).unwrap();
        let c = confidence(&m, &front);
        assert_eq!(c, vec![1.0, 0.0]);
        let side = Camera::new(90.0f64, 0.0, 1.0, 16, 16).unwrap();
        assert!(confidence(&m, &side)[0].abs() < 1e-15);
        let oblique = Camera::new(60.0f64, 0.0, 1.0, 16, 16).unwrap();
        assert!((confidence(&m, &oblique)[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn identical_gray_views_give_exact_gray() {
        let m = shapes::uv_sphere(Vec3::<f64>::zero(), 1.0, 16, 32);
        let cams = default_cameras(&m, 128, 128).unwrap();
        let views: Vec<_> = cams.iter().map(|c| solid(c, [128, 128, 128])).collect();
        let atlas = TextureAtlas::build(&m, &AtlasParams::default()).unwrap();
        let out = backproject(&m, &atlas, &views, &BlendParams::default()).unwrap();
        assert!(out.count(TexelFlag::Textured) > 0);
        for (i, p) in out.image.pixels().enumerate() {
            if out.flags[i] == TexelFlag::Textured {
                assert_eq!(p.0, [128, 128, 128, 255]);
            }
        }
    }

    #[test]
    fn blends_are_convex_and_poles_take_side_colors() {
        let m = shapes::uv_sphere(Vec3::<f64>::zero(), 1.0, 24, 48);
        let cams = default_cameras(&m, 256, 256).unwrap();
        let colors = [[255, 0, 0], [0, 255, 0], [0, 0, 255], [255, 255, 0]];
        let views: Vec<_> = cams.iter().zip(colors).map(|(c, rgb)| solid(c, rgb)).collect();
        let atlas = TextureAtlas::build(&m, &AtlasParams::default()).unwrap();
        let out = backproject(&m, &atlas, &views, &BlendParams::default()).unwrap();
        for (i, p) in out.image.pixels().enumerate() {
            if out.flags[i] != TexelFlag::Textured {
                continue;
            }
            for k in 0..3 {
                let lo = colors.iter().map(|c| c[k]).min().unwrap();
                let hi = colors.iter().map(|c| c[k]).max().unwrap();
                assert!(p[k] >= lo && p[k] <= hi);
            }
        }
        // The face nearest +x is seen only by the camera at azimuth 90.
        let target = Vec3::new(1.0, 0.0, 0.0);
        let f = (0..m.num_faces())
            .min_by(|&a, &b| {
                m.face_centroid(a).distance(target).partial_cmp(&m.face_centroid(b).distance(target)).unwrap()
            })
            .unwrap();
        let (x, y) = out.face_texels(f).next().unwrap();
        assert_eq!(out.image.get_pixel(x, y).0, [0, 255, 0, 255]);
    }

    #[test]
    fn no_views_leaves_everything_untextured() {
        let m = shapes::uv_sphere(Vec3::<f64>::zero(), 1.0, 6, 8);
        let atlas = TextureAtlas::build(&m, &AtlasParams::default()).unwrap();
        let out = backproject(&m, &atlas, &[], &BlendParams::default()).unwrap();
        assert_eq!(out.count(TexelFlag::Textured), 0);
        assert_eq!(out.untextured_faces(0.5).len(), m.num_faces());
    }

    #[test]
    fn bowl_interior_is_untextured() {
        let m = shapes::cup(1.0f64, 0.8, 2.0, 0.2, 48, 12);
        let cams = default_cameras(&m, 256, 256).unwrap();
        let views: Vec<_> = cams.iter().map(|c| solid(c, [200, 100, 50])).collect();
        let atlas = TextureAtlas::build(&m, &AtlasParams::default()).unwrap();
        let out = backproject(&m, &atlas, &views, &BlendParams::default()).unwrap();
        let untextured = out.untextured_faces(0.5);
        // Inner wall and inner floor are hidden by the outer wall.
        let inner: Vec<usize> = (0..m.num_faces())
            .filter(|&f| {
                let c = m.face_centroid(f);
                (c.x * c.x + c.y * c.y).sqrt() < 0.81 && c.z > 0.1
            })
            .collect();
        assert!(!inner.is_empty());
        for f in &inner {
            assert!(untextured.contains(f), "face {f}");
        }
        // The outer wall is textured.
        let outer = (0..m.num_faces())
            .find(|&f| {
                let c = m.face_centroid(f);
                (c.x * c.x + c.y * c.y).sqrt() > 0.95 && c.z > 0.5 && c.z < 1.5
            })
            .unwrap();
        assert!(!untextured.contains(&outer));
    }

    #[test]
    fn visible_texels_land_in_silhouette() {
        let m = shapes::uv_sphere(Vec3::<f64>::zero(), 1.0, 12, 24);
        let cams = default_cameras(&m, 64, 64).unwrap();
        let views: Vec<_> = cams.iter().map(|c| solid(c, [1, 2, 3])).collect();
        let atlas = TextureAtlas::build(&m, &AtlasParams::default()).unwrap();
        let vis = texel_visibility(&m, &atlas, &views, &BlendParams::default()).unwrap();
        let bufs: Vec<_> = cams.iter().map(|c| rasterize(&m, c)).collect();
        for (i, &mask) in vis.iter().enumerate() {
            let (x, y) = ((i % atlas.width as usize) as u32, (i / atlas.width as usize) as u32);
            for v in 0..4 {
                if mask & (1 << v) != 0 {
                    let (_, p) = atlas.surface_point(&m, x, y).unwrap();
                    let q = cams[v].project(p);
                    let (px, py) = bufs[v].pixel_of(q.x, q.y).unwrap();
                    assert!(bufs[v].face_at(px, py).is_some());
                }
            }
        }
    }

    #[test]
    fn image_size_mismatch_is_rejected() {
        let m = shapes::uv_sphere(Vec3::<f64>::zero(), 1.0, 6, 8);
        let cams = default_cameras(&m, 64, 64).unwrap();
        let view = View { camera: cams[0], image: RgbaImage::new(32, 32) };
        let atlas = TextureAtlas::build(&m, &AtlasParams::default()).unwrap();
        assert!(backproject(&m, &atlas, &[view], &BlendParams::default()).is_err());
    }
}
