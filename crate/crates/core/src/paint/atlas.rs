use image::{Rgba, RgbaImage};

use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::mesh::TriMesh;
use crate::scalar::Real;

use super::raster::NO_FACE;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TexelFlag {
    /// Padding, or the unused half of a face block.
    Background,
    Untextured,
    Textured,
}

/// Square texel block holding one face: corner 0 at (x, y), corner 1 at
/// (x + size, y), corner 2 at (x, y + size).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Block {
    pub x: u32,
    pub y: u32,
    pub size: u32,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AtlasParams<T> {
    /// Texels per unit of √(face area).
    pub texel_density: T,
    pub max_size: u32,
    pub padding: u32,
    /// Force a square atlas of this size, choosing the largest density that fits.
    pub fixed_size: Option<u32>,
}

impl<T: Real> Default for AtlasParams<T> {
    fn default() -> Self {
        Self { texel_density: T::lit(64.0), max_size: 4096, padding: 2, fixed_size: None }
    }
}

/// Per-face block atlas with per-texel face and flag maps.
#[derive(Clone, Debug, PartialEq)]
pub struct TextureAtlas<T> {
    pub width: u32,
    pub height: u32,
    pub image: RgbaImage,
    pub flags: Vec<TexelFlag>,
    pub texel_face: Vec<u32>,
    pub blocks: Vec<Block>,
    pub density: T,
}

pub fn block_size<T: Real>(area: T, density: T) -> u32 {
    let s = (area.max(T::zero()).sqrt() * density).ceil();
    s.to_u32().unwrap_or(u32::MAX).max(1)
}

/// Shelf packing, largest blocks first; returns positions and the used height.
fn pack(sizes: &[u32], width: u32, padding: u32) -> Option<(Vec<Block>, u32)> {
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(a.cmp(&b)));
    let mut blocks = vec![Block { x: 0, y: 0, size: 0 }; sizes.len()];
    let (mut x, mut y, mut shelf) = (padding as u64, padding as u64, 0u64);
    for i in order {
        let s = sizes[i] as u64;
        if s + 2 * padding as u64 > width as u64 {
            return None;
        }
        if x + s + padding as u64 > width as u64 {
            x = padding as u64;
            y += shelf + padding as u64;
            shelf = 0;
        }
        blocks[i] = Block { x: x as u32, y: u32::try_from(y).ok()?, size: sizes[i] };
        x += s + padding as u64;
        shelf = shelf.max(s);
    }
    let height = y + shelf + padding as u64;
    Some((blocks, u32::try_from(height).ok()?))
}

fn natural_width(sizes: &[u32], padding: u32) -> u32 {
    let area: f64 = sizes.iter().map(|&s| ((s + padding) as f64).powi(2)).sum();
    let widest = sizes.iter().copied().max().unwrap_or(1) + 2 * padding;
    (area.sqrt().ceil() as u32 + padding).max(widest)
}

impl<T: Real> TextureAtlas<T> {
    /// Lays out one block per face. The layout depends only on the face
    /// areas and `params`, so it can be rebuilt exactly from the mesh.
    pub fn build(mesh: &TriMesh<T>, params: &AtlasParams<T>) -> Result<Self> {
        if !(params.texel_density > T::zero() && params.texel_density.is_finite()) {
            return Err(Error::invalid(format!("texel density must be positive, got {}", params.texel_density)));
        }
        let areas = mesh.face_areas();
        let sizes_at = |d: T| areas.iter().map(|&a| block_size(a, d)).collect::<Vec<_>>();
        let limit = params.fixed_size.unwrap_or(params.max_size);
        if limit < 1 + 2 * params.padding {
            return Err(Error::invalid(format!("atlas size {limit} cannot hold a padded texel")));
        }
        let fits = |d: T| -> Option<(Vec<Block>, u32)> {
            let sizes = sizes_at(d);
            let (blocks, h) = pack(&sizes, limit, params.padding)?;
            (h <= limit).then_some((blocks, h))
        };

        let mut density = params.texel_density;
        let (blocks, width, height) = match params.fixed_size {
            None => {
                let sizes = sizes_at(density);
                let w = natural_width(&sizes, params.padding);
                match pack(&sizes, w, params.padding) {
                    Some((b, h)) if w <= limit && h <= limit => (b, w, h),
                    _ => {
                        density = Self::search_density(params.texel_density, &fits)?;
                        let (b, h) = fits(density).expect("searched density fits");
                        (b, limit, h)
                    }
                }
            }
            Some(size) => {
                // Grow density while it fits, then bisect.
                let mut hi = params.texel_density;
                while fits(hi).is_some() && hi < T::lit(1e9) {
                    hi *= T::lit(2.0);
                }
                density = Self::search_density(hi, &fits)?;
                let (b, _) = fits(density).expect("searched density fits");
                (b, size, size)
            }
        };

        Self::assemble(width, height, blocks, density)
    }

    /// Atlas with an explicit layout, e.g. recovered from OBJ texture
    /// coordinates. Blocks must lie inside the image and not overlap.
    /// `density` is informational only.
    pub fn from_layout(width: u32, height: u32, blocks: Vec<Block>, density: T) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("atlas must be non-empty"));
        }
        let mut used = vec![false; width as usize * height as usize];
        for (f, b) in blocks.iter().enumerate() {
            let inside = b.size > 0
                && (b.x as u64 + b.size as u64) <= width as u64
                && (b.y as u64 + b.size as u64) <= height as u64;
            if !inside {
                return Err(Error::invalid(format!("block of face {f} leaves the {width}x{height} atlas")));
            }
            for j in 0..b.size {
                for i in 0..b.size - j {
                    let idx = (b.y + j) as usize * width as usize + (b.x + i) as usize;
                    if std::mem::replace(&mut used[idx], true) {
                        return Err(Error::invalid(format!("block of face {f} overlaps another block")));
                    }
                }
            }
        }
        Self::assemble(width, height, blocks, density)
    }

    fn assemble(width: u32, height: u32, blocks: Vec<Block>, density: T) -> Result<Self> {
        let (w, h) = (width as usize, height as usize);
        let mut texel_face = vec![NO_FACE; w * h];
        let mut flags = vec![TexelFlag::Background; w * h];
        for (f, b) in blocks.iter().enumerate() {
            for j in 0..b.size {
                for i in 0..b.size - j {
                    let idx = (b.y + j) as usize * w + (b.x + i) as usize;
                    texel_face[idx] = f as u32;
                    flags[idx] = TexelFlag::Untextured;
                }
            }
        }
        Ok(Self {
            width,
            height,
            image: RgbaImage::new(width, height),
            flags,
            texel_face,
            blocks,
            density,
        })
    }

    /// Largest density ≤ `hi` for which `fits` succeeds, by bisection.
    fn search_density(hi: T, fits: &dyn Fn(T) -> Option<(Vec<Block>, u32)>) -> Result<T> {
        if fits(hi).is_some() {
            return Ok(hi);
        }
        let mut lo = T::zero();
        let mut hi = hi;
        for _ in 0..60 {
            let mid = (lo + hi) * T::lit(0.5);
            if fits(mid).is_some() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if lo > T::zero() && fits(lo).is_some() {
            Ok(lo)
        } else if fits(T::min_positive_value()).is_some() {
            Ok(T::min_positive_value())
        } else {
            Err(Error::invalid("too many faces for the atlas size limit"))
        }
    }

    pub fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn face_count(&self) -> usize {
        self.blocks.len()
    }

    /// Face and barycentric weights (for corners 0, 1, 2) of a texel center.
    pub fn texel_sample(&self, x: u32, y: u32) -> Option<(usize, [T; 3])> {
        let f = self.texel_face[self.index(x, y)];
        if f == NO_FACE {
            return None;
        }
        let b = self.blocks[f as usize];
        let s = T::from_usize_lossy(b.size as usize);
        let u = (T::from_usize_lossy((x - b.x) as usize) + T::lit(0.5)) / s;
        let v = (T::from_usize_lossy((y - b.y) as usize) + T::lit(0.5)) / s;
        Some((f as usize, [T::one() - u - v, u, v]))
    }

    pub fn surface_point(&self, mesh: &TriMesh<T>, x: u32, y: u32) -> Option<(usize, Vec3<T>)> {
        let (f, w) = self.texel_sample(x, y)?;
        let [a, b, c] = mesh.corners(f);
        Some((f, a * w[0] + b * w[1] + c * w[2]))
    }

    /// Texel of `face` containing the point with barycentric weights `w`.
    pub fn texel_for(&self, face: usize, w: [T; 3]) -> (u32, u32) {
        let b = self.blocks[face];
        let s = T::from_usize_lossy(b.size as usize);
        let last = b.size - 1;
        let cell = |t: T| (t.max(T::zero()) * s).floor().to_u32().unwrap_or(0).min(last);
        let (mut i, mut j) = (cell(w[1]), cell(w[2]));
        while i + j > last {
            if i > j {
                i -= 1;
            } else {
                j -= 1;
            }
        }
        (b.x + i, b.y + j)
    }

    /// Texel coordinates belonging to `face`.
    pub fn face_texels(&self, face: usize) -> impl Iterator<Item = (u32, u32)> + '_ {
        let b = self.blocks[face];
        (0..b.size).flat_map(move |j| (0..b.size - j).map(move |i| (b.x + i, b.y + j)))
    }

    /// OBJ texture coordinates (v pointing up) of the three corners.
    pub fn face_uvs(&self, face: usize) -> [[T; 2]; 3] {
        let b = self.blocks[face];
        let (w, h) = (T::from_usize_lossy(self.width as usize), T::from_usize_lossy(self.height as usize));
        let uv = |px: u32, py: u32| {
            [T::from_usize_lossy(px as usize) / w, T::one() - T::from_usize_lossy(py as usize) / h]
        };
        [uv(b.x, b.y), uv(b.x + b.size, b.y), uv(b.x, b.y + b.size)]
    }

    pub fn textured_fraction(&self, face: usize) -> T {
        let (mut t, mut n) = (0usize, 0usize);
        for (x, y) in self.face_texels(face) {
            n += 1;
            if self.flags[self.index(x, y)] == TexelFlag::Textured {
                t += 1;
            }
        }
        T::from_usize_lossy(t) / T::from_usize_lossy(n.max(1))
    }

    /// Faces whose textured-texel fraction is below `threshold`.
    pub fn untextured_faces(&self, threshold: T) -> Vec<usize> {
        (0..self.blocks.len()).filter(|&f| self.textured_fraction(f) < threshold).collect()
    }

    pub fn count(&self, flag: TexelFlag) -> usize {
        self.flags.iter().filter(|&&f| f == flag).count()
    }

    /// Fraction of face texels that are textured.
    pub fn coverage(&self) -> f64 {
        let t = self.count(TexelFlag::Textured);
        let u = self.count(TexelFlag::Untextured);
        if t + u == 0 {
            1.0
        } else {
            t as f64 / (t + u) as f64
        }
    }

    pub fn set_texel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = self.index(x, y);
        debug_assert!(self.texel_face[i] != NO_FACE);
        self.flags[i] = TexelFlag::Textured;
        self.image.put_pixel(x, y, Rgba([rgb[0], rgb[1], rgb[2], 255]));
    }

    pub fn clear_texel(&mut self, x: u32, y: u32) {
        let i = self.index(x, y);
        if self.texel_face[i] != NO_FACE {
            self.flags[i] = TexelFlag::Untextured;
        }
        self.image.put_pixel(x, y, Rgba([0, 0, 0, 0]));
    }

    /// Copy of the image with the unused half of each block mirrored from the
    /// used half across the diagonal, so bilinear lookups at face edges do not
    /// pick up empty texels.
    pub fn bled_image(&self) -> RgbaImage {
        let mut img = self.image.clone();
        for b in &self.blocks {
            for j in 0..b.size {
                for i in b.size - j..b.size {
                    let (mi, mj) = (b.size - 1 - j, b.size - 1 - i);
                    let p = *self.image.get_pixel(b.x + mi, b.y + mj);
                    img.put_pixel(b.x + i, b.y + j, p);
                }
            }
        }
        img
    }

    /// Re-derives texel flags from an image's alpha channel: face texels with
    /// nonzero alpha are textured.
    pub fn load_image(&mut self, image: RgbaImage) -> Result<()> {
        if image.dimensions() != (self.width, self.height) {
            return Err(Error::invalid(format!(
                "atlas image is {}x{}, layout expects {}x{}",
                image.width(),
                image.height(),
                self.width,
                self.height
            )));
        }
        for (i, p) in image.pixels().enumerate() {
            if self.texel_face[i] != NO_FACE {
                self.flags[i] = if p[3] > 0 { TexelFlag::Textured } else { TexelFlag::Untextured };
            }
        }
        self.image = image;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;

    fn check_layout(a: &TextureAtlas<f64>, padding: u32) {
        // Blocks disjoint with padding, inside the image.
        for (i, p) in a.blocks.iter().enumerate() {
            assert!(p.size >= 1);
            assert!(p.x >= padding && p.y >= padding);
            assert!(p.x + p.size + padding <= a.width && p.y + p.size + padding <= a.height);
            for q in &a.blocks[i + 1..] {
                let sep_x = p.x + p.size + padding <= q.x || q.x + q.size + padding <= p.x;
                let sep_y = p.y + p.size + padding <= q.y || q.y + q.size + padding <= p.y;
                assert!(sep_x || sep_y, "{p:?} {q:?}");
            }
        }
        for f in 0..a.face_count() {
            assert!(a.face_texels(f).count() >= 1);
            for (x, y) in a.face_texels(f) {
                assert_eq!(a.texel_face[a.index(x, y)], f as u32);
            }
        }
        let face_texels: usize = (0..a.face_count()).map(|f| a.face_texels(f).count()).sum();
        assert_eq!(face_texels, a.texel_face.iter().filter(|&&f| f != NO_FACE).count());
    }

    #[test]
    fn sphere_layout_is_valid() {
        let m = shapes::uv_sphere(Vec3::<f64>::zero(), 1.0, 12, 24);
        let a = TextureAtlas::build(&m, &AtlasParams::default()).unwrap();
        check_layout(&a, 2);
        assert_eq!(a.density, 64.0);
        let f = 5;
        assert_eq!(a.blocks[f].size, block_size(m.face_area(f), 64.0));
    }

    #[test]
    fn tiny_faces_get_one_texel() {
        let m = shapes::uv_sphere(Vec3::<f64>::zero(), 1e-4, 6, 8);
        let a = TextureAtlas::build(&m, &AtlasParams::default()).unwrap();
        assert!(a.blocks.iter().all(|b| b.size == 1));
        check_layout(&a, 2);
    }

    #[test]
    fn samples_reproduce_texel_centers() {
        let m = TriMesh::new(
            vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let params = AtlasParams { texel_density: 3.9 * 2f64.sqrt(), ..Default::default() };
        let a = TextureAtlas::build(&m, &params).unwrap();
        let b = a.blocks[0];
        assert_eq!(b.size, 4);
        assert_eq!(a.face_texels(0).count(), 10);
        let (f, p) = a.surface_point(&m, b.x + 1, b.y + 2).unwrap();
        assert_eq!(f, 0);
        assert!((p - Vec3::new(0.375, 0.625, 0.0)).norm() < 1e-12);
        assert!(a.texel_sample(b.x + 3, b.y + 3).is_none());
    }

    #[test]
    fn size_cap_reduces_density() {
        let m = shapes::uv_sphere(Vec3::<f64>::zero(), 1.0, 12, 24);
        let params = AtlasParams { texel_density: 5000.0, max_size: 256, ..Default::default() };
        let a = TextureAtlas::build(&m, &params).unwrap();
        assert!(a.width <= 256 && a.height <= 256);
        assert!(a.density < 5000.0);
        check_layout(&a, 2);
    }

    #[test]
    fn fixed_size_is_filled_densely() {
        let m = shapes::uv_sphere(Vec3::<f64>::zero(), 1.0, 12, 24);
        let params = AtlasParams { fixed_size: Some(128), ..Default::default() };
        let a = TextureAtlas::build(&m, &params).unwrap();
        assert_eq!((a.width, a.height), (128, 128));
        check_layout(&a, 2);
        // Slightly denser no longer fits.
        let denser = AtlasParams { texel_density: a.density * 1.05, max_size: 128, ..Default::default() };
        let b = TextureAtlas::build(&m, &denser).unwrap();
        assert!(b.density < a.density * 1.05);
    }

    #[test]
    fn impossible_limit_is_an_error() {
        let m = shapes::uv_sphere(Vec3::<f64>::zero(), 1.0, 12, 24);
        let params = AtlasParams { fixed_size: Some(8), ..Default::default() };
        assert!(TextureAtlas::build(&m, &params).is_err());
    }

    #[test]
    fn layout_is_deterministic_and_alpha_round_trips() {
        let m = shapes::uv_sphere(Vec3::<f64>::zero(), 1.0, 8, 16);
        let mut a = TextureAtlas::build(&m, &AtlasParams::default()).unwrap();
        let b = TextureAtlas::build(&m, &AtlasParams::default()).unwrap();
        assert_eq!(a, b);
        let (x, y) = a.face_texels(3).next().unwrap();
        a.set_texel(x, y, [10, 20, 30]);
        let mut c = b.clone();
        c.load_image(a.image.clone()).unwrap();
        assert_eq!(c.flags, a.flags);
        assert_eq!(c.count(TexelFlag::Textured), 1);
    }

    #[test]
    fn bleed_only_touches_unused_texels() {
        let m = shapes::uv_sphere(Vec3::<f64>::zero(), 1.0, 6, 8);
        let mut a = TextureAtlas::build(&m, &AtlasParams::default()).unwrap();
        for f in 0..a.face_count() {
            let pts: Vec<_> = a.face_texels(f).collect();
            for (x, y) in pts {
                a.set_texel(x, y, [f as u8, 1, 2]);
            }
        }
        let img = a.bled_image();
        for (i, p) in img.pixels().enumerate() {
            if a.texel_face[i] != NO_FACE {
                assert_eq!(*p, a.image.pixels().nth(i).copied().unwrap());
            }
        }
        for f in 0..a.face_count() {
            let b = a.blocks[f];
            for j in 0..b.size {
                for i in 0..b.size {
                    assert_eq!(img.get_pixel(b.x + i, b.y + j)[0], f as u8);
                }
            }
        }
    }

    #[test]
    fn uvs_span_the_block() {
        let m = shapes::uv_sphere(Vec3::<f64>::zero(), 1.0, 6, 8);
        let a = TextureAtlas::build(&m, &AtlasParams::default()).unwrap();
        let b = a.blocks[0];
        let uv = a.face_uvs(0);
        assert_eq!(uv[0], [b.x as f64 / a.width as f64, 1.0 - b.y as f64 / a.height as f64]);
        assert!((uv[1][0] - uv[0][0] - b.size as f64 / a.width as f64).abs() < 1e-15);
        assert!((uv[0][1] - uv[2][1] - b.size as f64 / a.height as f64).abs() < 1e-15);
    }

    #[test]
    fn explicit_layout_matches_built_one() {
        let m = shapes::uv_sphere(Vec3::<f64>::zero(), 1.0, 6, 8);
        let a = TextureAtlas::build(&m, &AtlasParams::default()).unwrap();
        let b = TextureAtlas::from_layout(a.width, a.height, a.blocks.clone(), a.density).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn explicit_layout_rejects_overlap_and_overflow() {
        let blk = |x, y, size| Block { x, y, size };
        assert!(TextureAtlas::<f64>::from_layout(8, 8, vec![blk(0, 0, 4), blk(4, 0, 4)], 1.0).is_ok());
        assert!(TextureAtlas::<f64>::from_layout(8, 8, vec![blk(0, 0, 4), blk(2, 0, 4)], 1.0).is_err());
        assert!(TextureAtlas::<f64>::from_layout(8, 8, vec![blk(6, 0, 4)], 1.0).is_err());
        assert!(TextureAtlas::<f64>::from_layout(8, 8, vec![blk(0, 0, 0)], 1.0).is_err());
    }
}
