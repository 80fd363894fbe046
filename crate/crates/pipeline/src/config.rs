//! INI-style configuration: `[section]` headers, `key = value` lines, `#`
//! or `;` comments. Keys are addressed as `section.key`; lists are
//! whitespace separated.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use carvepaint::carve::CleanParams;
use carvepaint::occlude::InpaintParams;
use carvepaint::paint::{AtlasParams, BlendParams};
use carvepaint::remesh::tri::{RemeshParams, VertexArea};
use carvepaint::AnalyticField;
use carvepaint::Vec3;

use crate::error::{PipelineError, Result};

/// Raw `section.key → value` table, remembering where each value came from.
#[derive(Clone, Debug, Default)]
pub struct Ini {
    values: BTreeMap<String, (String, String)>,
}

impl Ini {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut ini = Ini::default();
        let mut section = String::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            let at = format!("{origin}:{}", n + 1);
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| PipelineError::config(format!("{at}: unterminated section header")))?;
                section = name.trim().to_string();
                if section.is_empty() || section.contains(char::is_whitespace) {
                    return Err(PipelineError::config(format!("{at}: bad section name {name:?}")));
                }
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| PipelineError::config(format!("{at}: expected key = value, got {line:?}")))?;
            let k = k.trim();
            if section.is_empty() {
                return Err(PipelineError::config(format!("{at}: key {k:?} outside any section")));
            }
            ini.values.insert(format!("{section}.{k}"), (v.trim().to_string(), at));
        }
        Ok(ini)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Applies a `section.key=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| PipelineError::config(format!("--set expects section.key=value, got {assignment:?}")))?;
        let k = k.trim();
        if !k.contains('.') {
            return Err(PipelineError::config(format!("--set key {k:?} needs a section prefix")));
        }
        self.values.insert(k.to_string(), (v.trim().to_string(), "--set".into()));
        Ok(())
    }

    pub fn insert(&mut self, key: &str, value: impl ToString) {
        self.values.insert(key.to_string(), (value.to_string(), "command line".into()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|(v, _)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }
}

/// Typed reads that remember which keys were consumed.
struct Reader<'a> {
    ini: &'a Ini,
    used: BTreeSet<String>,
}

impl<'a> Reader<'a> {
    fn raw(&mut self, key: &str) -> Option<(&'a str, &'a str)> {
        self.used.insert(key.to_string());
        self.ini.values.get(key).map(|(v, at)| (v.as_str(), at.as_str()))
    }

    fn parsed<V: FromStr>(&mut self, key: &str) -> Result<Option<V>>
    where
        V::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some((v, at)) => v
                .parse()
                .map(Some)
                .map_err(|e| PipelineError::config(format!("{at}: {key} = {v:?}: {e}"))),
        }
    }

    fn or<V: FromStr>(&mut self, key: &str, default: V) -> Result<V>
    where
        V::Err: std::fmt::Display,
    {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    fn string(&mut self, key: &str) -> Option<String> {
        self.raw(key).map(|(v, _)| v.to_string()).filter(|v| !v.is_empty())
    }

    fn path(&mut self, key: &str) -> Option<PathBuf> {
        self.string(key).map(PathBuf::from)
    }

    fn list(&mut self, key: &str) -> Vec<String> {
        self.raw(key).map(|(v, _)| v.split_whitespace().map(str::to_string).collect()).unwrap_or_default()
    }

    fn vec3(&mut self, key: &str, default: [f64; 3]) -> Result<Vec3> {
        let Some((v, at)) = self.raw(key) else {
            return Ok(Vec3::new(default[0], default[1], default[2]));
        };
        let parts: Vec<f64> = v
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| PipelineError::config(format!("{at}: {key} = {v:?}: {e}")))?;
        match parts[..] {
            [x, y, z] => Ok(Vec3::new(x, y, z)),
            _ => Err(PipelineError::config(format!("{at}: {key} needs three numbers, got {v:?}"))),
        }
    }

    fn flag(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.raw(key) {
            None => Ok(default),
            Some((v, at)) => match v.to_ascii_lowercase().as_str() {
                "true" | "yes" | "on" | "1" => Ok(true),
                "false" | "no" | "off" | "0" => Ok(false),
                _ => Err(PipelineError::config(format!("{at}: {key} must be true or false, got {v:?}"))),
            },
        }
    }
}

#[derive(Clone, Debug)]
pub enum FieldSource {
    Analytic { field: AnalyticField, resolution: usize },
    Voxel(PathBuf),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RemeshMode {
    Tri,
    Quad,
}

#[derive(Clone, Debug)]
pub struct RemeshConfig {
    pub mode: RemeshMode,
    pub params: RemeshParams<f64>,
    /// Lattice scale for quad mode; default twice the edge length.
    pub rho: Option<f64>,
    pub orientation_sweeps: usize,
    pub position_sweeps: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Generator {
    /// One flat color per view.
    Solid,
    /// Per-view color alternating with a darker shade.
    Checker { cells: u32 },
    /// The mesh rendered with its face normals as colors.
    Normal,
}

#[derive(Clone, Debug)]
pub enum ViewSource {
    Images(Vec<PathBuf>),
    Procedural(Generator),
}

#[derive(Clone, Debug)]
pub struct AttendConfig {
    pub views: usize,
    pub channels: usize,
    pub width: usize,
    pub height: usize,
    pub tokens: usize,
}

/// Every setting of every stage. Sections are read with defaults; keys a
/// stage requires but that have no default are checked by [`PipelineConfig::require`].
#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub seed: u64,
    pub workers: usize,
    pub field: FieldSource,
    pub iso: f64,
    pub clean: CleanParams<f64>,
    pub remesh: Option<RemeshConfig>,
    pub width: u32,
    pub height: u32,
    pub sidecars: Vec<PathBuf>,
    pub views: Option<ViewSource>,
    pub atlas: AtlasParams<f64>,
    pub blend: BlendParams<f64>,
    pub inpaint: Option<InpaintParams<f64>>,
    pub debug_dir: Option<PathBuf>,
    pub input_mesh: Option<PathBuf>,
    pub input_atlas: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub attend: AttendConfig,
}

impl PipelineConfig {
    pub fn from_ini(ini: &Ini) -> Result<Self> {
        let mut r = Reader { ini, used: BTreeSet::new() };
        let seed = r.or("run.seed", 0u64)?;
        let workers = r.or("run.workers", 0usize)?;

        let source = r.string("field.source").unwrap_or_else(|| "sphere".into());
        let center = r.vec3("field.center", [0.5; 3])?;
        let resolution = r.or("field.resolution", 64usize)?;
        let radius = r.or("field.radius", 0.3)?;
        let half = r.vec3("field.half_extents", [0.25; 3])?;
        let major = r.or("field.major_radius", 0.25)?;
        let minor = r.or("field.minor_radius", 0.1)?;
        let vox = r.path("field.path");
        let invalid = |e: carvepaint::Error| PipelineError::config(format!("field: {e}"));
        let analytic = |field| Ok::<_, PipelineError>(FieldSource::Analytic { field, resolution });
        let field = match source.as_str() {
            "sphere" => analytic(AnalyticField::sphere(center, radius).map_err(invalid)?)?,
            "box" => analytic(AnalyticField::cuboid(center, half).map_err(invalid)?)?,
            "torus" => analytic(AnalyticField::torus(center, major, minor).map_err(invalid)?)?,
            "voxel" => FieldSource::Voxel(vox.ok_or_else(|| PipelineError::missing("field.path", "field.source = voxel"))?),
            other => return Err(PipelineError::config(format!("field.source: unknown source {other:?} (sphere, box, torus, voxel)"))),
        };
        if matches!(field, FieldSource::Analytic { .. }) && resolution < 2 {
            return Err(PipelineError::config("field.resolution must be at least 2"));
        }
        let iso = r.or("field.iso", carvepaint::field::DEFAULT_ISO)?;
        if !(iso > 0.0 && iso < 1.0) {
            return Err(PipelineError::config(format!("field.iso must lie in (0,1), got {iso}")));
        }

        let defaults = CleanParams::<f64>::default();
        let clean = CleanParams {
            merge_eps: r.parsed("clean.merge_eps")?,
            area_eps: r.parsed("clean.area_eps")?,
            min_component_fraction: r.or("clean.min_component_fraction", defaults.min_component_fraction)?,
        };
        if !(0.0..=1.0).contains(&clean.min_component_fraction) {
            return Err(PipelineError::config("clean.min_component_fraction must lie in [0,1]"));
        }

        // Disabled sections are still parsed so their keys count as known.
        let remesh_on = r.flag("remesh.enabled", true)?;
        let remesh = {
            let mut params = RemeshParams::new(r.or("remesh.edge_length", 0.03)?);
            params.iterations = r.or("remesh.iterations", params.iterations)?;
            params.damping = r.or("remesh.damping", params.damping)?;
            params.vertex_area = match r.string("remesh.vertex_area").as_deref() {
                None | Some("barycentric") => VertexArea::Barycentric,
                Some("voronoi") => VertexArea::Voronoi,
                Some(o) => return Err(PipelineError::config(format!("remesh.vertex_area: unknown {o:?} (barycentric, voronoi)"))),
            };
            params.validate().map_err(|e| PipelineError::config(format!("remesh: {e}")))?;
            let mode = match r.string("remesh.mode").as_deref() {
                None | Some("tri") => RemeshMode::Tri,
                Some("quad") => RemeshMode::Quad,
                Some(o) => return Err(PipelineError::config(format!("remesh.mode: unknown {o:?} (tri, quad)"))),
            };
            let rho: Option<f64> = r.parsed("remesh.rho")?;
            if rho.is_some_and(|v| !(v > 0.0 && v.is_finite())) {
                return Err(PipelineError::config("remesh.rho must be positive"));
            }
            Some(RemeshConfig {
                mode,
                params,
                rho,
                orientation_sweeps: r.or("remesh.orientation_sweeps", 200)?,
                position_sweeps: r.or("remesh.position_sweeps", 2000)?,
            })
        };
        let remesh = remesh.filter(|_| remesh_on);

        let width = r.or("cameras.width", 512u32)?;
        let height = r.or("cameras.height", 512u32)?;
        let min = carvepaint::paint::camera::MIN_RESOLUTION;
        if width < min || height < min {
            return Err(PipelineError::config(format!("cameras.width and cameras.height must be at least {min}")));
        }
        let sidecars: Vec<PathBuf> = r.list("cameras.sidecars").into_iter().map(PathBuf::from).collect();

        let images: Vec<PathBuf> = r.list("views.images").into_iter().map(PathBuf::from).collect();
        let cells = r.or("views.checker_cells", 8u32)?;
        let views = match (images.is_empty(), r.string("views.generator")) {
            (false, Some(_)) => return Err(PipelineError::config("views.images and views.generator are mutually exclusive")),
            (false, None) => Some(ViewSource::Images(images)),
            (true, None) => None,
            (true, Some(g)) => Some(ViewSource::Procedural(match g.as_str() {
                "solid" => Generator::Solid,
                "checker" if cells > 0 => Generator::Checker { cells },
                "checker" => return Err(PipelineError::config("views.checker_cells must be positive")),
                "normal" => Generator::Normal,
                o => return Err(PipelineError::config(format!("views.generator: unknown {o:?} (solid, checker, normal)"))),
            })),
        };
        if !sidecars.is_empty() {
            if let Some(ViewSource::Images(imgs)) = &views {
                if imgs.len() != sidecars.len() {
                    return Err(PipelineError::config(format!(
                        "views.images lists {} images but cameras.sidecars lists {}",
                        imgs.len(),
                        sidecars.len()
                    )));
                }
            }
        }

        let ad = AtlasParams::<f64>::default();
        let atlas = AtlasParams {
            texel_density: r.or("atlas.texel_density", ad.texel_density)?,
            max_size: r.or("atlas.max_size", ad.max_size)?,
            padding: r.or("atlas.padding", ad.padding)?,
            fixed_size: r.parsed("atlas.size")?,
        };
        if !(atlas.texel_density > 0.0 && atlas.texel_density.is_finite()) {
            return Err(PipelineError::config("atlas.texel_density must be positive"));
        }

        let bd = BlendParams::<f64>::default();
        let blend = BlendParams {
            beta: r.or("blend.beta", bd.beta)?,
            side_strength: r.or("blend.side_strength", bd.side_strength)?,
            depth_bias: r.parsed("blend.depth_bias")?,
            coverage_threshold: r.or("blend.coverage_threshold", bd.coverage_threshold)?,
        };
        blend.validate().map_err(|e| PipelineError::config(format!("blend: {e}")))?;

        let inpaint_on = r.flag("inpaint.enabled", true)?;
        let inpaint = {
            let id = InpaintParams::<f64>::default();
            let p = InpaintParams {
                k: r.or("inpaint.k", id.k)?,
                position_weight: r.or("inpaint.position_weight", id.position_weight)?,
                tile_resolution: r.or("inpaint.tile_resolution", id.tile_resolution)?,
                inpainter: r.string("inpaint.inpainter").unwrap_or(id.inpainter),
                seed,
                max_rounds: r.or("inpaint.max_rounds", id.max_rounds)?,
                coverage_threshold: blend.coverage_threshold,
                depth_bias: r.parsed("inpaint.depth_bias")?,
            };
            p.validate().map_err(|e| PipelineError::config(format!("inpaint: {e}")))?;
            crate::plugin::resolve(&p.inpainter)?;
            Some(p)
        };
        let inpaint = inpaint.filter(|_| inpaint_on);
        let debug_dir = r.path("inpaint.debug_dir");

        let attend = AttendConfig {
            views: r.or("attend.views", 4)?,
            channels: r.or("attend.channels", 8)?,
            width: r.or("attend.width", 16)?,
            height: r.or("attend.height", 16)?,
            tokens: r.or("attend.tokens", 3)?,
        };
        if attend.views == 0 || attend.tokens == 0 || attend.channels == 0 || !attend.channels.is_multiple_of(2) {
            return Err(PipelineError::config("attend needs views, tokens >= 1 and an even, positive channel count"));
        }

        let cfg = PipelineConfig {
            seed,
            workers,
            field,
            iso,
            clean,
            remesh,
            width,
            height,
            sidecars,
            views,
            atlas,
            blend,
            inpaint,
            debug_dir,
            input_mesh: r.path("input.mesh"),
            input_atlas: r.path("input.atlas"),
            output_dir: r.path("output.dir").unwrap_or_else(|| PathBuf::from("out")),
            attend,
        };

        let unknown: Vec<&str> = ini.keys().filter(|k| !r.used.contains(*k)).collect();
        if !unknown.is_empty() {
            return Err(PipelineError::config(format!("unknown config keys: {}", unknown.join(", "))));
        }
        Ok(cfg)
    }

    /// Checks that the keys and input files a stage needs are present.
    pub fn require(&self, stage: Stage) -> Result<()> {
        let readable = |key: &str, p: &Path| {
            std::fs::metadata(p)
                .map(|_| ())
                .map_err(|e| PipelineError::config(format!("{key}: cannot read {}: {e}", p.display())))
        };
        if matches!(stage, Stage::Carve | Stage::Pipeline) {
            if let FieldSource::Voxel(p) = &self.field {
                readable("field.path", p)?;
            }
        }
        if matches!(stage, Stage::Remesh | Stage::Paint | Stage::Inpaint) {
            let p = self.input_mesh.as_ref().ok_or_else(|| PipelineError::missing("input.mesh", "no mesh to read"))?;
            readable("input.mesh", p)?;
        }
        if stage == Stage::Remesh && self.remesh.is_none() {
            return Err(PipelineError::config("remesh.enabled is false; nothing to do"));
        }
        if matches!(stage, Stage::Paint | Stage::Pipeline) {
            match &self.views {
                None => return Err(PipelineError::missing("views.images", "no views.generator is set either")),
                Some(ViewSource::Images(paths)) => {
                    for p in paths {
                        readable("views.images", p)?;
                    }
                    if self.sidecars.is_empty() && paths.len() != 4 {
                        return Err(PipelineError::config(format!(
                            "views.images lists {} images; without cameras.sidecars exactly 4 are needed",
                            paths.len()
                        )));
                    }
                }
                Some(ViewSource::Procedural(_)) => {}
            }
            for p in &self.sidecars {
                readable("cameras.sidecars", p)?;
            }
        }
        if stage == Stage::Inpaint {
            let p = self.input_atlas.as_ref().ok_or_else(|| PipelineError::missing("input.atlas", "no atlas to inpaint"))?;
            readable("input.atlas", p)?;
            if self.inpaint.is_none() {
                return Err(PipelineError::config("inpaint.enabled is false; nothing to do"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Carve,
    Remesh,
    Paint,
    Inpaint,
    Pipeline,
    AttendDemo,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> Result<PipelineConfig> {
        PipelineConfig::from_ini(&Ini::parse(text, "test.ini")?)
    }

    #[test]
    fn defaults_describe_the_sphere_fixture() {
        let c = cfg("").unwrap();
        assert!(matches!(c.field, FieldSource::Analytic { resolution: 64, .. }));
        assert_eq!(c.remesh.as_ref().unwrap().params.target_edge_length, 0.03);
        assert_eq!(c.inpaint.as_ref().unwrap().k, 6);
        assert!(c.views.is_none());
    }

    #[test]
    fn sections_comments_and_overrides() {
        let mut ini = Ini::parse("# c\n[run]\nseed = 7\n; x\n[views]\ngenerator = checker\nchecker_cells=4\n", "t").unwrap();
        ini.set("run.seed=9").unwrap();
        let c = PipelineConfig::from_ini(&ini).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.inpaint.unwrap().seed, 9);
        assert!(matches!(c.views, Some(ViewSource::Procedural(Generator::Checker { cells: 4 }))));
    }

    #[test]
    fn errors_point_at_the_offending_line() {
        let e = cfg("[remesh]\n\nedge_length = abc\n").unwrap_err();
        assert!(e.to_string().contains("test.ini:3"), "{e}");
        let e = cfg("seed = 1\n").unwrap_err();
        assert!(e.to_string().contains("outside any section"), "{e}");
        let e = cfg("[run]\nsede = 1\n").unwrap_err();
        assert!(e.to_string().contains("run.sede"), "{e}");
    }

    #[test]
    fn module_preconditions_are_enforced() {
        assert!(cfg("[remesh]\nedge_length = -1\n").is_err());
        assert!(cfg("[inpaint]\nk = 0\n").is_err());
        assert!(cfg("[blend]\nside_strength = 2\n").is_err());
        assert!(cfg("[field]\niso = 1\n").is_err());
        assert!(cfg("[inpaint]\ninpainter = neural\n").is_err());
        assert!(cfg("[field]\nsource = voxel\n").unwrap_err().to_string().contains("field.path"));
    }

    #[test]
    fn missing_views_names_the_key() {
        let c = cfg("").unwrap();
        let e = c.require(Stage::Pipeline).unwrap_err();
        assert!(e.to_string().contains("views.images"), "{e}");
        assert_eq!(e.exit_code(), 2);
        assert!(c.require(Stage::Carve).is_ok());
        assert!(c.require(Stage::Paint).unwrap_err().to_string().contains("input.mesh"));
    }
}
