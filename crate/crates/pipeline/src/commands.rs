//! The subcommands. Each writes its artifacts plus a `*_stats.txt` of
//! `key=value` lines into the output directory. Stats never contain
//! timings, so identical configs give byte-identical files; wall-clock
//! times go to the returned [`Summary`] instead.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use carvepaint::attend::{
    assemble_guidance, attention_maps, decoupled_pass, normalized_image, replicate_hidden, AttentionWeights,
    FeatureTensor, GuidanceView, RegionLayout,
};
use carvepaint::carve::{clean, marching_cubes};
use carvepaint::field::sample_unit_cube;
use carvepaint::io::{read_obj, read_png, read_vox, write_gray_png, write_obj, write_png, ObjDocument};
use carvepaint::occlude::{inpaint_occlusions, OcclusionRun};
use carvepaint::paint::{backproject, default_cameras, TexelFlag, View};
use carvepaint::remesh::quad::{
    default_rho, extract_quads, optimize_orientation_field, optimize_position_field_with, PositionInit,
    QuadDominantMesh,
};
use carvepaint::remesh::tri::{isotropic_remesh, RoundStats};
use carvepaint::{Camera, GridField, TextureAtlas, TriMesh};
use image::{GrayImage, Luma};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{FieldSource, PipelineConfig, RemeshConfig, RemeshMode, Stage, ViewSource};
use crate::error::{PipelineError, Result};
use crate::plugin;
use crate::views;

/// Ordered `key=value` lines.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Stats {
    lines: Vec<String>,
}

impl Stats {
    pub fn put(&mut self, key: &str, value: impl Display) {
        self.lines.push(format!("{key}={value}"));
    }

    /// Appends `key=value` lines, prefixing each key.
    pub fn extend(&mut self, prefix: &str, text: &str) {
        for l in text.lines().filter(|l| !l.is_empty()) {
            self.lines.push(format!("{prefix}{l}"));
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.lines.iter().find_map(|l| l.strip_prefix(key)?.strip_prefix('='))
    }

    pub fn text(&self) -> String {
        self.lines.iter().map(|l| format!("{l}\n")).collect()
    }
}

/// What a command wrote and how long its stages took.
#[derive(Clone, Debug, Default)]
pub struct Summary {
    pub files: Vec<PathBuf>,
    pub timings: Vec<(String, Duration)>,
}

impl Summary {
    pub fn total(&self) -> Duration {
        self.timings.iter().map(|(_, d)| *d).sum()
    }

    fn merge(&mut self, other: Summary) {
        self.files.extend(other.files);
        self.timings.extend(other.timings);
    }
}

struct Out<'a> {
    dir: &'a Path,
    files: Vec<PathBuf>,
}

impl<'a> Out<'a> {
    fn new(dir: &'a Path) -> Result<Self> {
        create_dir(dir)?;
        Ok(Self { dir, files: Vec::new() })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.files.push(p.clone());
        p
    }

    fn text(&mut self, name: &str, text: &str) -> Result<()> {
        let p = self.path(name);
        std::fs::write(&p, text).map_err(|source| carvepaint::Error::Io { path: p, source }.into())
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| carvepaint::Error::Io { path: dir.to_path_buf(), source }.into())
}

fn timed<R>(timings: &mut Vec<(String, Duration)>, name: &str, f: impl FnOnce() -> Result<R>) -> Result<R> {
    let t = Instant::now();
    let r = f()?;
    timings.push((name.to_string(), t.elapsed()));
    Ok(r)
}

fn put_mesh(stats: &mut Stats, prefix: &str, mesh: &TriMesh) {
    let t = mesh.topology();
    stats.put(&format!("{prefix}vertices"), mesh.num_vertices());
    stats.put(&format!("{prefix}faces"), mesh.num_faces());
    stats.put(&format!("{prefix}edges"), t.edges);
    stats.put(&format!("{prefix}boundary_edges"), t.boundary_edges);
    stats.put(&format!("{prefix}nonmanifold_edges"), t.nonmanifold_edges);
    stats.put(&format!("{prefix}euler_characteristic"), t.euler_characteristic());
    stats.put(&format!("{prefix}closed_manifold"), t.is_closed_manifold());
    stats.put(&format!("{prefix}volume"), mesh.signed_volume());
}

pub fn load_field(cfg: &PipelineConfig) -> Result<GridField> {
    Ok(match &cfg.field {
        FieldSource::Analytic { field, resolution } => sample_unit_cube(field, *resolution)?,
        FieldSource::Voxel(p) => read_vox(p)?,
    })
}

/// Remeshed geometry: the triangle mesh used downstream and, in quad mode,
/// the quad-dominant result it was triangulated from.
pub struct Remeshed {
    pub mesh: TriMesh,
    pub quad: Option<QuadDominantMesh<f64>>,
    pub rounds: Vec<RoundStats<f64>>,
}

pub fn remesh(mesh: &TriMesh, rc: &RemeshConfig, stats: &mut Stats) -> Result<Remeshed> {
    let before = mesh.signed_volume();
    let (tri, rounds) = isotropic_remesh(mesh, &rc.params)?;
    let p = &rc.params;
    stats.put("remesh.target_edge_length", p.target_edge_length);
    stats.put("remesh.iterations", p.iterations);
    stats.put("remesh.damping", p.damping);
    if let Some(last) = rounds.last() {
        stats.put("remesh.in_band_fraction", last.in_band_fraction);
        stats.put("remesh.mean_edge", last.mean_edge);
        stats.put("remesh.mean_valence", last.mean_valence);
    }
    let residual = rounds.iter().map(|r| r.smooth.max_normal_residual).fold(0.0, f64::max);
    stats.put("remesh.max_normal_residual", residual);
    if before != 0.0 {
        stats.put("remesh.volume_drift", (tri.signed_volume() - before).abs() / before.abs());
    }
    put_mesh(stats, "remesh.", &tri);
    if rc.mode == RemeshMode::Tri {
        return Ok(Remeshed { mesh: tri, quad: None, rounds });
    }

    let rho = rc.rho.unwrap_or_else(|| default_rho(p.target_edge_length));
    let orient = optimize_orientation_field(&tri, rc.orientation_sweeps);
    let pos = optimize_position_field_with(&tri, &orient, rho, rc.position_sweeps, PositionInit::Propagated)?;
    let (quad, report) = extract_quads(&tri, &orient, &pos);
    stats.put("quad.rho", rho);
    if let (Some(a), Some(b)) = (orient.energy_history.first(), orient.energy_history.last()) {
        stats.put("quad.orientation_energy_initial", a);
        stats.put("quad.orientation_energy_final", b);
    }
    stats.put("quad.position_sweeps", pos.sweeps);
    if let Some(e) = pos.energy_history.last() {
        stats.put("quad.position_energy_final", e);
    }
    stats.extend("quad.", &report.to_text().lines().filter(|l| !l.starts_with("irregular ")).collect::<Vec<_>>().join("\n"));
    stats.put("quad.interior_triangles", quad.interior_triangle_count());
    let mesh = quad.triangulate();
    Ok(Remeshed { mesh, quad: Some(quad), rounds })
}

fn rounds_csv(rounds: &[RoundStats<f64>]) -> String {
    let mut s = format!("{}\n", RoundStats::<f64>::CSV_HEADER);
    for r in rounds {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

/// Field → marching cubes → clean → optional remesh.
pub fn carve(cfg: &PipelineConfig, timings: &mut Vec<(String, Duration)>) -> Result<(Remeshed, Stats)> {
    let mut stats = Stats::default();
    let grid = timed(timings, "field", || load_field(cfg))?;
    let [nx, ny, nz] = grid.dims();
    stats.put("field.dims", format!("{nx}x{ny}x{nz}"));
    stats.put("field.spacing", grid.spacing());
    stats.put("field.iso", cfg.iso);
    let raw = timed(timings, "marching_cubes", || Ok(marching_cubes(&grid, cfg.iso)?))?;
    stats.put("marching_cubes.vertices", raw.num_vertices());
    stats.put("marching_cubes.faces", raw.num_faces());
    let (cleaned, report) = timed(timings, "clean", || Ok(clean(&raw, &cfg.clean)))?;
    stats.put("clean.merge_eps", report.merge_eps);
    stats.put("clean.area_eps", report.area_eps);
    stats.put("clean.min_component_fraction", report.min_component_fraction);
    stats.put("clean.merged_vertices", report.merged_vertices);
    stats.put("clean.zero_area_faces", report.zero_area_faces);
    stats.put("clean.nonmanifold_edges_before", report.nonmanifold_edges_before);
    stats.put("clean.nonmanifold_faces_removed", report.nonmanifold_faces_removed);
    stats.put("clean.small_component_faces", report.small_component_faces);
    stats.put("clean.unreferenced_vertices", report.unreferenced_vertices);
    stats.put("clean.pinched_vertices", report.pinched_vertices);
    put_mesh(&mut stats, "clean.", &cleaned);
    if cleaned.is_empty() {
        return Err(carvepaint::Error::InvalidArgument(format!("the field has no surface at iso {}", cfg.iso)).into());
    }
    let out = match &cfg.remesh {
        Some(rc) => timed(timings, "remesh", || remesh(&cleaned, rc, &mut stats))?,
        None => Remeshed { mesh: cleaned, quad: None, rounds: Vec::new() },
    };
    Ok((out, stats))
}

fn write_geometry(out: &mut Out, stem: &str, r: &Remeshed) -> Result<()> {
    match &r.quad {
        Some(q) => {
            let p = out.path(&format!("{stem}.obj"));
            ObjDocument::from_polygons(&q.vertices, q.faces.iter().cloned()).write(&p)?;
            write_obj(&r.mesh, None, &out.path(&format!("{stem}_tri.obj")))?;
        }
        None => write_obj(&r.mesh, None, &out.path(&format!("{stem}.obj")))?,
    }
    if !r.rounds.is_empty() {
        out.text("remesh_rounds.csv", &rounds_csv(&r.rounds))?;
    }
    Ok(())
}

pub fn cmd_carve(cfg: &PipelineConfig) -> Result<Summary> {
    cfg.require(Stage::Carve)?;
    let mut timings = Vec::new();
    let (r, stats) = carve(cfg, &mut timings)?;
    let mut out = Out::new(&cfg.output_dir)?;
    write_geometry(&mut out, "mesh", &r)?;
    out.text("carve_stats.txt", &stats.text())?;
    Ok(Summary { files: out.files, timings })
}

fn read_mesh(path: &Path) -> Result<(ObjDocument<f64>, TriMesh)> {
    let doc = read_obj::<f64>(path)?;
    let mesh = doc.to_trimesh()?;
    Ok((doc, mesh))
}

pub fn cmd_remesh(cfg: &PipelineConfig) -> Result<Summary> {
    cfg.require(Stage::Remesh)?;
    let rc = cfg.remesh.as_ref().expect("checked by require");
    let mut timings = Vec::new();
    let (_, mesh) = read_mesh(cfg.input_mesh.as_deref().expect("checked by require"))?;
    let mut stats = Stats::default();
    put_mesh(&mut stats, "input.", &mesh);
    let r = timed(&mut timings, "remesh", || remesh(&mesh, rc, &mut stats))?;
    let mut out = Out::new(&cfg.output_dir)?;
    write_geometry(&mut out, "remeshed", &r)?;
    out.text("remesh_stats.txt", &stats.text())?;
    Ok(Summary { files: out.files, timings })
}

pub fn cameras(cfg: &PipelineConfig, mesh: &TriMesh) -> Result<Vec<Camera>> {
    let defaults = default_cameras(mesh, cfg.width, cfg.height)?;
    if cfg.sidecars.is_empty() {
        return Ok(defaults.to_vec());
    }
    cfg.sidecars
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p)
                .map_err(|source| carvepaint::Error::Io { path: p.clone(), source })?;
            Camera::from_sidecar(&text, Some(&defaults[0]))
                .map_err(|e| carvepaint::Error::InvalidArgument(format!("{}: {e}", p.display())).into())
        })
        .collect()
}

/// Coarse and final atlases of a paint run.
pub struct Painted {
    pub cameras: Vec<Camera>,
    pub views: Vec<View<f64>>,
    pub coarse: TextureAtlas,
    pub run: Option<OcclusionRun<f64>>,
    pub stats: Stats,
}

impl Painted {
    pub fn atlas(&self) -> &TextureAtlas {
        self.run.as_ref().map(|r| &r.atlas).unwrap_or(&self.coarse)
    }
}

fn put_atlas(stats: &mut Stats, prefix: &str, atlas: &TextureAtlas) {
    stats.put(&format!("{prefix}textured_texels"), atlas.count(TexelFlag::Textured));
    stats.put(&format!("{prefix}untextured_texels"), atlas.count(TexelFlag::Untextured));
    stats.put(&format!("{prefix}coverage"), format!("{:.6}", atlas.coverage()));
}

fn occlusion_pass(cfg: &PipelineConfig, mesh: &TriMesh, coarse: &TextureAtlas, stats: &mut Stats) -> Result<Option<OcclusionRun<f64>>> {
    let Some(params) = &cfg.inpaint else {
        return Ok(None);
    };
    let inpainter = plugin::resolve(&params.inpainter)?;
    stats.put("inpaint.inpainter", inpainter.name());
    stats.put("inpaint.seed", params.seed);
    let run = inpaint_occlusions(mesh, coarse, params, inpainter.as_ref())?;
    stats.extend("inpaint.", &run.report());
    Ok(Some(run))
}

pub fn paint(cfg: &PipelineConfig, mesh: &TriMesh, timings: &mut Vec<(String, Duration)>) -> Result<Painted> {
    let mut stats = Stats::default();
    let cameras = cameras(cfg, mesh)?;
    let images = timed(timings, "views", || {
        Ok(match cfg.views.as_ref().expect("checked by require") {
            ViewSource::Procedural(g) => views::generate(*g, mesh, &cameras),
            ViewSource::Images(paths) => paths.iter().map(|p| read_png(p)).collect::<carvepaint::Result<_>>()?,
        })
    })?;
    if images.len() != cameras.len() {
        return Err(PipelineError::config(format!("{} view images for {} cameras", images.len(), cameras.len())));
    }
    let views: Vec<View<f64>> =
        cameras.iter().zip(images).map(|(c, image)| View { camera: *c, image }).collect();
    stats.put("paint.views", views.len());
    for (i, c) in cameras.iter().enumerate() {
        stats.put(&format!("paint.camera{i}"), format!("{} {} {} {}x{}", c.azimuth_deg, c.elevation_deg, c.ortho_scale, c.width, c.height));
    }
    let coarse = timed(timings, "backproject", || {
        let layout = TextureAtlas::build(mesh, &cfg.atlas)?;
        Ok(backproject(mesh, &layout, &views, &cfg.blend)?)
    })?;
    stats.put("atlas.size", format!("{}x{}", coarse.width, coarse.height));
    stats.put("atlas.density", coarse.density);
    stats.put("atlas.faces", coarse.face_count());
    stats.put("paint.beta", cfg.blend.beta);
    stats.put("paint.side_strength", cfg.blend.side_strength);
    stats.put("paint.untextured_faces", coarse.untextured_faces(cfg.blend.coverage_threshold).len());
    put_atlas(&mut stats, "paint.", &coarse);
    let run = timed(timings, "inpaint", || occlusion_pass(cfg, mesh, &coarse, &mut stats))?;
    put_atlas(&mut stats, "final.", run.as_ref().map(|r| &r.atlas).unwrap_or(&coarse));
    Ok(Painted { cameras, views, coarse, run, stats })
}

fn write_textured(out: &mut Out, stem: &str, mesh: &TriMesh, atlas: &TextureAtlas) -> Result<()> {
    let png = format!("{stem}.png");
    write_png(&atlas.bled_image(), &out.path(&png))?;
    write_obj(mesh, Some((atlas, png.as_str())), &out.path(&format!("{stem}.obj")))?;
    out.files.push(out.dir.join(format!("{stem}.mtl")));
    Ok(())
}

fn dump_canvas(dir: &Path, run: &OcclusionRun<f64>) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let mut files = Vec::new();
    if let (Some(before), Some(after)) = (&run.canvas, &run.inpainted) {
        for (name, img) in [("canvas.png", &before.image), ("canvas_inpainted.png", &after.image)] {
            let p = dir.join(name);
            write_png(img, &p)?;
            files.push(p);
        }
        let p = dir.join("canvas_mask.png");
        write_gray_png(&before.mask_image(), &p)?;
        files.push(p);
    }
    Ok(files)
}

fn write_painted(cfg: &PipelineConfig, mesh: &TriMesh, painted: &Painted, out: &mut Out) -> Result<()> {
    if matches!(cfg.views, Some(ViewSource::Procedural(_))) {
        create_dir(&out.dir.join("views"))?;
        for (i, v) in painted.views.iter().enumerate() {
            write_png(&v.image, &out.path(&format!("views/view{i}.png")))?;
            out.text(&format!("views/view{i}.cam"), &v.camera.to_sidecar())?;
        }
    }
    write_png(&painted.coarse.image, &out.path("coarse.png"))?;
    write_textured(out, "textured", mesh, painted.atlas())?;
    out.text("paint_stats.txt", &painted.stats.text())?;
    if let (Some(dir), Some(run)) = (&cfg.debug_dir, &painted.run) {
        out.files.extend(dump_canvas(dir, run)?);
    }
    Ok(())
}

pub fn cmd_paint(cfg: &PipelineConfig) -> Result<Summary> {
    cfg.require(Stage::Paint)?;
    let mut timings = Vec::new();
    let (_, mesh) = read_mesh(cfg.input_mesh.as_deref().expect("checked by require"))?;
    let painted = paint(cfg, &mesh, &mut timings)?;
    let mut out = Out::new(&cfg.output_dir)?;
    write_painted(cfg, &mesh, &painted, &mut out)?;
    Ok(Summary { files: out.files, timings })
}

/// Inpaints a coarse atlas written by `paint` (alpha 0 marks untextured texels).
pub fn cmd_inpaint(cfg: &PipelineConfig) -> Result<Summary> {
    cfg.require(Stage::Inpaint)?;
    let mut timings = Vec::new();
    let (doc, mesh) = read_mesh(cfg.input_mesh.as_deref().expect("checked by require"))?;
    let image = read_png(cfg.input_atlas.as_deref().expect("checked by require"))?;
    let blocks = doc.atlas_blocks(image.width(), image.height())?;
    if blocks.len() != mesh.num_faces() {
        return Err(carvepaint::Error::InvalidArgument("input.mesh must be a triangle mesh written by paint".into()).into());
    }
    let mut coarse = TextureAtlas::from_layout(image.width(), image.height(), blocks, 0.0)?;
    coarse.load_image(image)?;
    let mut stats = Stats::default();
    put_atlas(&mut stats, "input.", &coarse);
    let run = timed(&mut timings, "inpaint", || occlusion_pass(cfg, &mesh, &coarse, &mut stats))?
        .expect("checked by require");
    put_atlas(&mut stats, "final.", &run.atlas);
    let mut out = Out::new(&cfg.output_dir)?;
    write_textured(&mut out, "inpainted", &mesh, &run.atlas)?;
    out.text("inpaint_stats.txt", &stats.text())?;
    if let Some(dir) = &cfg.debug_dir {
        out.files.extend(dump_canvas(dir, &run)?);
    }
    Ok(Summary { files: out.files, timings })
}

/// Carve then paint, in memory.
pub fn cmd_pipeline(cfg: &PipelineConfig) -> Result<Summary> {
    cfg.require(Stage::Pipeline)?;
    let mut summary = Summary::default();
    let (r, carve_stats) = carve(cfg, &mut summary.timings)?;
    let painted = paint(cfg, &r.mesh, &mut summary.timings)?;
    let mut out = Out::new(&cfg.output_dir)?;
    write_geometry(&mut out, "mesh", &r)?;
    out.text("carve_stats.txt", &carve_stats.text())?;
    write_painted(cfg, &r.mesh, &painted, &mut out)?;
    summary.merge(Summary { files: out.files, timings: Vec::new() });
    Ok(summary)
}

/// Decoupled cross-attention on seeded random inputs, written as grayscale
/// images: the region layout, every group's attention to every token, and
/// the aggregated output channels.
pub fn cmd_attend_demo(cfg: &PipelineConfig) -> Result<Summary> {
    let a = &cfg.attend;
    let mut timings = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let h = FeatureTensor::random(a.channels, a.width, a.height, &mut rng);
    let guidance: Vec<GuidanceView<f64>> = (0..a.views).map(|_| GuidanceView::random(a.tokens, a.channels / 2, &mut rng)).collect();
    let layout = RegionLayout::grid(a.views, a.width, a.height)?;
    let weights = AttentionWeights::seeded(a.channels / 2, cfg.seed);
    let (z, maps) = timed(&mut timings, "attend", || {
        let z = decoupled_pass(&h, &guidance, &layout, &weights)?;
        let maps = attention_maps(&replicate_hidden(&h, a.views)?, &assemble_guidance(&guidance)?, &weights)?;
        Ok((z, maps))
    })?;

    let dir = cfg.output_dir.join("attend");
    create_dir(&dir)?;
    let mut out = Out::new(&cfg.output_dir)?;
    let owners = layout.owners()?;
    let scale = if a.views > 1 { 255 / (a.views - 1) } else { 0 };
    let regions = GrayImage::from_fn(a.width as u32, a.height as u32, |x, y| {
        Luma([(owners[y as usize * a.width + x as usize] * scale) as u8])
    });
    write_gray_png(&regions, &out.path("attend/regions.png"))?;
    for (g, m) in maps.iter().enumerate() {
        for t in 0..m.cols {
            let col: Vec<f64> = (0..m.rows).map(|p| m.get(p, t)).collect();
            write_gray_png(&normalized_image(&col, a.width, a.height), &out.path(&format!("attend/group{g}_token{t}.png")))?;
        }
    }
    for c in 0..z.channels {
        write_gray_png(&z.channel_image(c), &out.path(&format!("attend/output{c}.png")))?;
    }
    let mut stats = Stats::default();
    stats.put("attend.seed", cfg.seed);
    stats.put("attend.views", a.views);
    stats.put("attend.hidden", format!("{}x{}x{}", a.channels, a.width, a.height));
    stats.put("attend.replicated_channels", a.channels * a.views);
    stats.put("attend.guidance", format!("{}x{}", a.channels * a.views, a.tokens));
    stats.put("attend.groups", maps.len());
    stats.put("attend.output", format!("{}x{}x{}", z.channels, z.width, z.height));
    for (i, r) in layout.rects.iter().enumerate() {
        stats.put(&format!("attend.region{i}"), format!("{} {} {} {}", r.x, r.y, r.width, r.height));
    }
    out.text("attend_stats.txt", &stats.text())?;
    Ok(Summary { files: out.files, timings })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_lines_are_ordered_and_queryable() {
        let mut s = Stats::default();
        s.put("a", 1);
        s.extend("x.", "b=2\n\nc=3\n");
        assert_eq!(s.text(), "a=1\nx.b=2\nx.c=3\n");
        assert_eq!(s.get("x.c"), Some("3"));
        assert_eq!(s.get("x"), None);
    }
}
