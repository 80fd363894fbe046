use image::{GrayImage, Luma, Rgba, RgbaImage};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::paint::{rasterize, Camera, TexelFlag, TextureAtlas, NO_FACE};
use crate::scalar::Real;

use super::cluster::OcclusionCluster;
use super::inpaint::Inpainter;

/// Cluster views tiled row-major on one image, with a per-pixel map back
/// to the surface and the mask of pixels showing untextured faces.
#[derive(Clone, Debug, PartialEq)]
pub struct OcclusionCanvas<T> {
    pub tile_size: u32,
    pub columns: u32,
    pub rows: u32,
    pub image: RgbaImage,
    /// Face seen at each pixel, or `NO_FACE`.
    pub face: Vec<u32>,
    /// Barycentric weights of the pixel center on `face`.
    pub bary: Vec<[T; 3]>,
    pub depth: Vec<T>,
    pub mask: Vec<bool>,
    pub cameras: Vec<Camera<T>>,
    /// Cluster rendered into each tile.
    pub tile_cluster: Vec<usize>,
}

impl<T: Real> OcclusionCanvas<T> {
    pub fn width(&self) -> u32 {
        self.columns * self.tile_size
    }

    pub fn height(&self) -> u32 {
        self.rows * self.tile_size
    }

    pub fn tiles(&self) -> usize {
        self.cameras.len()
    }

    pub fn tile_origin(&self, t: usize) -> (u32, u32) {
        ((t as u32 % self.columns) * self.tile_size, (t as u32 / self.columns) * self.tile_size)
    }

    pub fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width() as usize + x as usize
    }

    pub fn masked_pixels(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn mask_image(&self) -> GrayImage {
        GrayImage::from_fn(self.width(), self.height(), |x, y| Luma([if self.mask[self.index(x, y)] { 255 } else { 0 }]))
    }

    pub fn tile_image(&self, t: usize) -> RgbaImage {
        let (ox, oy) = self.tile_origin(t);
        image::imageops::crop_imm(&self.image, ox, oy, self.tile_size, self.tile_size).to_image()
    }

    pub fn tile_mask(&self, t: usize) -> GrayImage {
        let (ox, oy) = self.tile_origin(t);
        GrayImage::from_fn(self.tile_size, self.tile_size, |x, y| {
            Luma([if self.mask[self.index(ox + x, oy + y)] { 255 } else { 0 }])
        })
    }
}

/// Mean color of the textured texels of each face.
pub(crate) fn face_mean_colors<T: Real>(atlas: &TextureAtlas<T>) -> Vec<Option<[f64; 3]>> {
    let mut sum = vec![[0.0f64; 3]; atlas.face_count()];
    let mut count = vec![0usize; atlas.face_count()];
    for (i, p) in atlas.image.pixels().enumerate() {
        let f = atlas.texel_face[i];
        if f != NO_FACE && atlas.flags[i] == TexelFlag::Textured {
            for k in 0..3 {
                sum[f as usize][k] += p[k] as f64;
            }
            count[f as usize] += 1;
        }
    }
    sum.into_iter().zip(count).map(|(s, n)| (n > 0).then(|| s.map(|v| v / n as f64))).collect()
}

/// Renders every cluster from its camera into its own tile.
///
/// Pixels of textured faces take the current atlas color at their surface
/// point (or the face mean if that texel is untextured); pixels of faces in
/// any cluster form the mask. All other pixels are transparent.
pub fn build_canvas<T: Real>(mesh: &TriMesh<T>, atlas: &TextureAtlas<T>, clusters: &[OcclusionCluster<T>]) -> Result<OcclusionCanvas<T>> {
    if clusters.is_empty() {
        return Err(Error::invalid("no clusters to render"));
    }
    let tile = clusters[0].camera.width;
    if clusters.iter().any(|c| c.camera.width != tile || c.camera.height != tile) {
        return Err(Error::invalid("cluster cameras must share one square resolution"));
    }
    let mut untextured = vec![false; mesh.num_faces()];
    for c in clusters {
        for &f in &c.faces {
            untextured[f] = true;
        }
    }
    let means = face_mean_colors(atlas);
    let k = clusters.len() as u32;
    let columns = (k as f64).sqrt().ceil() as u32;
    let rows = k.div_ceil(columns);
    let (cw, ch) = ((columns * tile) as usize, (rows * tile) as usize);

    struct Tile<T> {
        rgba: Vec<[u8; 4]>,
        face: Vec<u32>,
        bary: Vec<[T; 3]>,
        depth: Vec<T>,
        mask: Vec<bool>,
    }
    let tiles: Vec<Tile<T>> = clusters
        .par_iter()
        .map(|c| {
            let cam = &c.camera;
            let basis = cam.basis();
            let buf = rasterize(mesh, cam);
            let n = (tile * tile) as usize;
            let mut t = Tile {
                rgba: vec![[0; 4]; n],
                face: buf.face_id.clone(),
                bary: vec![[T::zero(); 3]; n],
                depth: buf.depth.clone(),
                mask: vec![false; n],
            };
            for i in 0..n {
                let f = buf.face_id[i];
                if f == NO_FACE {
                    continue;
                }
                let f = f as usize;
                let px = T::from_usize_lossy(i % tile as usize) + T::lit(0.5);
                let py = T::from_usize_lossy(i / tile as usize) + T::lit(0.5);
                let p = mesh.faces[f].map(|v| cam.project_with(mesh.vertices[v], basis));
                let area = (p[1].x - p[0].x) * (p[2].y - p[0].y) - (p[2].x - p[0].x) * (p[1].y - p[0].y);
                let w0 = ((p[1].x - px) * (p[2].y - py) - (p[2].x - px) * (p[1].y - py)) / area;
                let w1 = ((p[2].x - px) * (p[0].y - py) - (p[0].x - px) * (p[2].y - py)) / area;
                let w = [w0, w1, T::one() - w0 - w1].map(|v| v.max(T::zero()));
                let s = w[0] + w[1] + w[2];
                t.bary[i] = if s > T::zero() { w.map(|v| v / s) } else { [T::one(), T::zero(), T::zero()] };
                if untextured[f] {
                    t.mask[i] = true;
                    continue;
                }
                let (tx, ty) = atlas.texel_for(f, t.bary[i]);
                let ai = atlas.index(tx, ty);
                let rgb = if atlas.flags[ai] == TexelFlag::Textured {
                    let q = atlas.image.get_pixel(tx, ty);
                    Some([q[0], q[1], q[2]])
                } else {
                    means[f].map(|m| m.map(|v| v.round() as u8))
                };
                if let Some(rgb) = rgb {
                    t.rgba[i] = [rgb[0], rgb[1], rgb[2], 255];
                }
            }
            t
        })
        .collect();

    let mut canvas = OcclusionCanvas {
        tile_size: tile,
        columns,
        rows,
        image: RgbaImage::new(cw as u32, ch as u32),
        face: vec![NO_FACE; cw * ch],
        bary: vec![[T::zero(); 3]; cw * ch],
        depth: vec![T::infinity(); cw * ch],
        mask: vec![false; cw * ch],
        cameras: clusters.iter().map(|c| c.camera).collect(),
        tile_cluster: (0..clusters.len()).collect(),
    };
    for (ti, t) in tiles.into_iter().enumerate() {
        let (ox, oy) = canvas.tile_origin(ti);
        for i in 0..(tile * tile) as usize {
            let (x, y) = (ox + (i % tile as usize) as u32, oy + (i / tile as usize) as u32);
            let ci = canvas.index(x, y);
            canvas.image.put_pixel(x, y, Rgba(t.rgba[i]));
            canvas.face[ci] = t.face[i];
            canvas.bary[ci] = t.bary[i];
            canvas.depth[ci] = t.depth[i];
            canvas.mask[ci] = t.mask[i];
        }
    }
    Ok(canvas)
}

/// Runs `inpainter` on every tile and writes back the masked pixels only.
pub fn inpaint_canvas<T: Real>(canvas: &OcclusionCanvas<T>, inpainter: &dyn Inpainter) -> Result<OcclusionCanvas<T>> {
    let filled: Vec<RgbaImage> = (0..canvas.tiles())
        .into_par_iter()
        .map(|t| {
            let out = inpainter.inpaint(&canvas.tile_image(t), &canvas.tile_mask(t))?;
            if out.dimensions() != (canvas.tile_size, canvas.tile_size) {
                return Err(Error::invalid(format!(
                    "inpainter {:?} returned {}x{} for a {}x{} tile",
                    inpainter.name(),
                    out.width(),
                    out.height(),
                    canvas.tile_size,
                    canvas.tile_size
                )));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut out = canvas.clone();
    for (t, img) in filled.iter().enumerate() {
        let (ox, oy) = canvas.tile_origin(t);
        for (x, y, p) in img.enumerate_pixels() {
            if canvas.mask[canvas.index(ox + x, oy + y)] {
                out.image.put_pixel(ox + x, oy + y, Rgba([p[0], p[1], p[2], 255]));
            }
        }
    }
    Ok(out)
}

/// Counts of a reprojection.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ReprojectReport {
    pub texels_written: usize,
    /// Untextured texels of masked faces that no tile sees.
    pub texels_unseen: usize,
}

/// Copies inpainted colors back into the atlas.
///
/// Every untextured texel of a masked face is projected into each tile; a
/// tile counts if the texel passes its depth test (within `depth_bias`) at a
/// masked pixel. Among those the tile with the highest confidence for the
/// face wins, ties going to the lower tile index. Textured texels are never
/// touched.
pub fn reproject<T: Real>(
    mesh: &TriMesh<T>,
    canvas: &OcclusionCanvas<T>,
    atlas: &TextureAtlas<T>,
    depth_bias: T,
) -> Result<(TextureAtlas<T>, ReprojectReport)> {
    if atlas.face_count() != mesh.num_faces() {
        return Err(Error::invalid("atlas layout does not match mesh"));
    }
    let mut masked_face = vec![false; mesh.num_faces()];
    for (i, &m) in canvas.mask.iter().enumerate() {
        if m {
            masked_face[canvas.face[i] as usize] = true;
        }
    }
    let normals = mesh.face_normals();
    let bases: Vec<_> = canvas.cameras.iter().map(|c| c.basis()).collect();
    let w = atlas.width as usize;
    let ts = T::from_usize_lossy(canvas.tile_size as usize);

    let picks: Vec<Option<Option<[u8; 3]>>> = (0..atlas.texel_face.len())
        .into_par_iter()
        .map(|i| {
            if atlas.flags[i] != TexelFlag::Untextured {
                return None;
            }
            let (x, y) = ((i % w) as u32, (i / w) as u32);
            let (f, p) = atlas.surface_point(mesh, x, y)?;
            if !masked_face[f] {
                return None;
            }
            let mut best: Option<(T, [u8; 3])> = None;
            for (t, cam) in canvas.cameras.iter().enumerate() {
                let q = cam.project_with(p, bases[t]);
                if !(q.x >= T::zero() && q.y >= T::zero() && q.x < ts && q.y < ts) {
                    continue;
                }
                let (ox, oy) = canvas.tile_origin(t);
                let (px, py) = (ox + q.x.floor().to_u32()?, oy + q.y.floor().to_u32()?);
                let ci = canvas.index(px, py);
                if !canvas.mask[ci] || !(q.depth <= canvas.depth[ci] + depth_bias) {
                    continue;
                }
                let c = normals[f].dot(-cam.view_direction());
                if best.is_none_or(|(b, _)| c > b) {
                    let px = canvas.image.get_pixel(px, py);
                    best = Some((c, [px[0], px[1], px[2]]));
                }
            }
            Some(best.map(|(_, rgb)| rgb))
        })
        .collect();

    let mut out = atlas.clone();
    let mut report = ReprojectReport::default();
    for (i, pick) in picks.into_iter().enumerate() {
        match pick {
            Some(Some(rgb)) => {
                out.set_texel((i % w) as u32, (i / w) as u32, rgb);
                report.texels_written += 1;
            }
            Some(None) => report.texels_unseen += 1,
            None => {}
        }
    }
    Ok((out, report))
}
