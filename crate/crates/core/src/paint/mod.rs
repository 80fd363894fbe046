//! Orthographic multi-view rendering, per-face texture atlas and
//! confidence-weighted back-projection of view images.

pub mod atlas;
pub mod backproject;
pub mod camera;
pub mod raster;

pub use atlas::{AtlasParams, Block, TexelFlag, TextureAtlas};
pub use backproject::{backproject, confidence, confidence_map, texel_visibility, BlendParams, ConfidenceMap, View};
pub use camera::{default_cameras, Camera};
pub use raster::{rasterize, rasterize_subset, RenderBuffers, NO_FACE};
