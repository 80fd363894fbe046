//! Occlusion inpainting: faces no view textured are clustered, seen from one
//! camera per cluster on a tiled canvas, inpainted there, copied back into
//! the atlas, and anything still missing is extrapolated over the surface.

mod canvas;
mod cluster;
mod extrapolate;
mod inpaint;

use std::fmt::Write as _;

pub use canvas::{build_canvas, inpaint_canvas, reproject, OcclusionCanvas, ReprojectReport};
pub use cluster::{cluster_occluded, cluster_viewpoint, Clustering, OcclusionCluster};
pub use extrapolate::{extrapolate, ExtrapolateReport};
pub use inpaint::{builtin_inpainter, mask_regions, HarmonicInpainter, HarmonicReport, Inpainter, MaskRegion};

use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::paint::{TexelFlag, TextureAtlas};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct InpaintParams<T> {
    pub k: usize,
    /// Weight of the normalized centroid against the normal in clustering.
    pub position_weight: T,
    pub tile_resolution: u32,
    /// Inpainter name; `harmonic` is built in.
    pub inpainter: String,
    pub seed: u64,
    pub max_rounds: usize,
    /// Faces with a smaller textured fraction are inpainted.
    pub coverage_threshold: T,
    /// Depth-test slack for reprojection; defaults to 1e-3 × bounding-box diagonal.
    pub depth_bias: Option<T>,
}

impl<T: Real> Default for InpaintParams<T> {
    fn default() -> Self {
        Self {
            k: 6,
            position_weight: T::one(),
            tile_resolution: 256,
            inpainter: "harmonic".into(),
            seed: 0,
            max_rounds: 100,
            coverage_threshold: T::lit(0.5),
            depth_bias: None,
        }
    }
}

impl<T: Real> InpaintParams<T> {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if !(self.position_weight >= T::zero() && self.position_weight.is_finite()) {
            return Err(Error::invalid(format!("position weight must be non-negative, got {}", self.position_weight)));
        }
        if self.tile_resolution < crate::paint::camera::MIN_RESOLUTION {
            return Err(Error::invalid(format!("tile resolution must be at least 16, got {}", self.tile_resolution)));
        }
        if self.max_rounds == 0 {
            return Err(Error::invalid("max_rounds must be at least 1"));
        }
        if !(self.coverage_threshold >= T::zero() && self.coverage_threshold <= T::one()) {
            return Err(Error::invalid("coverage threshold must lie in [0,1]"));
        }
        if let Some(b) = self.depth_bias {
            if !(b >= T::zero() && b.is_finite()) {
                return Err(Error::invalid(format!("depth bias must be non-negative, got {b}")));
            }
        }
        Ok(())
    }
}

/// Everything an occlusion pass produced, including intermediates.
#[derive(Clone, Debug)]
pub struct OcclusionRun<T> {
    pub atlas: TextureAtlas<T>,
    pub untextured_faces: Vec<usize>,
    pub clustering: Option<Clustering<T>>,
    /// Canvas before and after inpainting.
    pub canvas: Option<OcclusionCanvas<T>>,
    pub inpainted: Option<OcclusionCanvas<T>>,
    pub unsupported_regions: usize,
    pub reproject: ReprojectReport,
    pub extrapolate: ExtrapolateReport,
}

impl<T: Real> OcclusionRun<T> {
    /// Deterministic `key=value` summary.
    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "untextured_faces={}", self.untextured_faces.len());
        if let Some(c) = &self.clustering {
            let _ = writeln!(s, "requested_k={}", c.requested_k);
            let _ = writeln!(s, "k={}", c.k);
            let _ = writeln!(s, "lloyd_rounds={}", c.rounds);
            let _ = writeln!(s, "lloyd_converged={}", c.converged);
            let hist: Vec<String> = c.inertia_history.iter().map(|v| format!("{:.9e}", v.to_f64_lossy())).collect();
            let _ = writeln!(s, "inertia={}", hist.join(","));
            let sizes: Vec<String> = c.clusters.iter().map(|c| c.faces.len().to_string()).collect();
            let _ = writeln!(s, "cluster_sizes={}", sizes.join(","));
            let degenerate = c.clusters.iter().filter(|c| c.degenerate_normal).count();
            let _ = writeln!(s, "degenerate_normals={degenerate}");
        }
        if let Some(c) = &self.canvas {
            let _ = writeln!(s, "canvas={}x{}", c.width(), c.height());
            let _ = writeln!(s, "masked_pixels={}", c.masked_pixels());
        }
        let _ = writeln!(s, "unsupported_regions={}", self.unsupported_regions);
        let _ = writeln!(s, "reprojected_texels={}", self.reproject.texels_written);
        let _ = writeln!(s, "unseen_texels={}", self.reproject.texels_unseen);
        let _ = writeln!(s, "own_mean_texels={}", self.extrapolate.own_mean_texels);
        let _ = writeln!(s, "extrapolated_texels={}", self.extrapolate.propagated_texels);
        let _ = writeln!(s, "extrapolation_layers={}", self.extrapolate.layers);
        let _ = writeln!(s, "fallback_texels={}", self.extrapolate.fallback_texels);
        let _ = writeln!(s, "coverage={:.6}", self.atlas.coverage());
        s
    }
}

/// Full occlusion pass: cluster the untextured faces, render and inpaint the
/// canvas, reproject, then extrapolate. The result has no untextured texels.
pub fn inpaint_occlusions<T: Real>(
    mesh: &TriMesh<T>,
    atlas: &TextureAtlas<T>,
    params: &InpaintParams<T>,
    inpainter: &dyn Inpainter,
) -> Result<OcclusionRun<T>> {
    params.validate()?;
    if atlas.face_count() != mesh.num_faces() {
        return Err(Error::invalid("atlas layout does not match mesh"));
    }
    let untextured = atlas.untextured_faces(params.coverage_threshold);
    let mut run = OcclusionRun {
        atlas: atlas.clone(),
        untextured_faces: untextured.clone(),
        clustering: None,
        canvas: None,
        inpainted: None,
        unsupported_regions: 0,
        reproject: ReprojectReport::default(),
        extrapolate: ExtrapolateReport::default(),
    };
    if !untextured.is_empty() {
        let clustering = cluster_occluded(mesh, &untextured, params)?;
        let canvas = build_canvas(mesh, atlas, &clustering.clusters)?;
        run.unsupported_regions = (0..canvas.tiles())
            .map(|t| mask_regions(&canvas.tile_image(t), &canvas.tile_mask(t)).iter().filter(|r| r.boundary.is_empty()).count())
            .sum();
        let inpainted = inpaint_canvas(&canvas, inpainter)?;
        let bias = params.depth_bias.unwrap_or_else(|| mesh.bbox_diagonal() * T::lit(1e-3));
        let (reprojected, report) = reproject(mesh, &inpainted, atlas, bias)?;
        run.atlas = reprojected;
        run.reproject = report;
        run.clustering = Some(clustering);
        run.canvas = Some(canvas);
        run.inpainted = Some(inpainted);
    }
    let (filled, report) = extrapolate(mesh, &run.atlas);
    run.atlas = filled;
    run.extrapolate = report;
    debug_assert_eq!(run.atlas.count(TexelFlag::Untextured), 0);
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Vec3;
    use crate::mesh::shapes;
    use crate::paint::{backproject, default_cameras, AtlasParams, BlendParams, View};
    use image::{Rgba, RgbaImage};

    fn cup_run(k: usize) -> (TriMesh<f64>, TextureAtlas<f64>, OcclusionRun<f64>) {
        run_on(shapes::cup(1.0f64, 0.8, 1.0, 0.2, 32, 6), k)
    }

    fn run_on(m: TriMesh<f64>, k: usize) -> (TriMesh<f64>, TextureAtlas<f64>, OcclusionRun<f64>) {
        let cams = default_cameras(&m, 96, 96).unwrap();
        let colors = [[200, 40, 40], [40, 200, 40], [40, 40, 200], [200, 200, 40]];
        let views: Vec<View<f64>> = cams
            .iter()
            .zip(colors)
            .map(|(c, rgb)| View { camera: *c, image: RgbaImage::from_pixel(96, 96, Rgba([rgb[0], rgb[1], rgb[2], 255])) })
            .collect();
        let atlas = TextureAtlas::build(&m, &AtlasParams { texel_density: 24.0, ..Default::default() }).unwrap();
        let painted = backproject(&m, &atlas, &views, &BlendParams::default()).unwrap();
        let params = InpaintParams { k, tile_resolution: 96, ..Default::default() };
        let run = inpaint_occlusions(&m, &painted, &params, &HarmonicInpainter::default()).unwrap();
        (m, painted, run)
    }

    #[test]
    fn cup_becomes_fully_textured_without_touching_textured_texels() {
        let (m, before, run) = cup_run(6);
        assert!(run.untextured_faces.len() * 10 >= m.num_faces(), "{}", run.untextured_faces.len());
        assert_eq!(run.atlas.count(TexelFlag::Untextured), 0);
        assert_eq!(run.atlas.coverage(), 1.0);
        for (i, f) in before.flags.iter().enumerate() {
            if *f == TexelFlag::Textured {
                assert_eq!(before.image.as_raw()[4 * i..4 * i + 4], run.atlas.image.as_raw()[4 * i..4 * i + 4]);
            }
        }
        assert!(run.reproject.texels_written > 0);
        let c = run.clustering.as_ref().unwrap();
        assert_eq!(c.clusters.len(), 6);
        let canvas = run.canvas.as_ref().unwrap();
        assert_eq!((canvas.columns, canvas.rows), (3, 2));
        // Masked pixels only show clustered faces.
        for (i, &m) in canvas.mask.iter().enumerate() {
            if m {
                assert!(run.untextured_faces.binary_search(&(canvas.face[i] as usize)).is_ok());
            }
        }
    }

    #[test]
    fn flared_bowl_tiles_see_textured_context() {
        // Straight cup walls hide every clustered face behind untextured
        // geometry; a flared wall lets most cluster views reach painted texels.
        let (_, _, cup) = cup_run(6);
        assert!(cup.unsupported_regions > 0);
        let (_, _, bowl) = run_on(shapes::bowl(0.7, 1.0, 1.0, 0.15, 0.2, 32, 6), 6);
        let canvas = bowl.canvas.as_ref().unwrap();
        let supported = (0..canvas.tiles())
            .flat_map(|t| mask_regions(&canvas.tile_image(t), &canvas.tile_mask(t)))
            .filter(|r| !r.boundary.is_empty())
            .count();
        assert!(supported >= 4, "{supported} supported regions");
        assert!(bowl.unsupported_regions <= 1);
    }

    #[test]
    fn inpainted_canvas_changes_only_masked_pixels() {
        let (_, _, run) = cup_run(4);
        let (a, b) = (run.canvas.unwrap(), run.inpainted.unwrap());
        for i in 0..a.mask.len() {
            let (pa, pb) = (&a.image.as_raw()[4 * i..4 * i + 4], &b.image.as_raw()[4 * i..4 * i + 4]);
            if a.mask[i] {
                assert_eq!(pb[3], 255);
            } else {
                assert_eq!(pa, pb);
            }
        }
    }

    #[test]
    fn fully_textured_input_is_unchanged() {
        let m = shapes::uv_sphere(Vec3::<f64>::zero(), 1.0, 6, 8);
        let mut a = TextureAtlas::build(&m, &AtlasParams { texel_density: 6.0, ..Default::default() }).unwrap();
        for f in 0..m.num_faces() {
            let t: Vec<_> = a.face_texels(f).collect();
            for (x, y) in t {
                a.set_texel(x, y, [1, 2, 3]);
            }
        }
        let run = inpaint_occlusions(&m, &a, &InpaintParams::default(), &HarmonicInpainter::default()).unwrap();
        assert_eq!(run.atlas, a);
        assert!(run.clustering.is_none());
    }

    #[test]
    fn deterministic() {
        let (_, _, a) = cup_run(6);
        let (_, _, b) = cup_run(6);
        assert_eq!(a.atlas, b.atlas);
        assert_eq!(a.report(), b.report());
    }

    #[test]
    fn params_validation() {
        let bad = InpaintParams::<f64> { k: 0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = InpaintParams::<f64> { tile_resolution: 8, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
