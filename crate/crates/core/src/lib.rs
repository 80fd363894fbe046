//! Occupancy fields to textured meshes.
//!
//! The stages are: marching cubes and repair ([`carve`]), isotropic triangle
//! and quad-dominant remeshing ([`remesh`]), orthographic multi-view texture
//! back-projection into a per-face atlas ([`paint`]), clustering and inpainting
//! of faces no view covers ([`occlude`]), plus a numeric reference of spatially
//! decoupled cross-attention ([`attend`]) and file formats ([`io`]).
//!
//! Everything numeric is generic over [`scalar::Real`]; the aliases below fix
//! the scalar to `f64` (and `f32` with an `F32` suffix).

pub mod attend;
pub mod carve;
pub mod error;
pub mod field;
pub mod io;
pub mod math;
pub mod mesh;
pub mod occlude;
pub mod paint;
pub mod remesh;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Vec3 = math::Vec3<f64>;
pub type TriMesh = mesh::TriMesh<f64>;
pub type GridField = field::GridField<f64>;
pub type AnalyticField = field::AnalyticField<f64>;
pub type Camera = paint::Camera<f64>;
pub type TextureAtlas = paint::TextureAtlas<f64>;
pub type FeatureTensor = attend::FeatureTensor<f64>;

pub type Vec3F32 = math::Vec3<f32>;
pub type TriMeshF32 = mesh::TriMesh<f32>;
pub type GridFieldF32 = field::GridField<f32>;
pub type AnalyticFieldF32 = field::AnalyticField<f32>;
pub type CameraF32 = paint::Camera<f32>;
pub type TextureAtlasF32 = paint::TextureAtlas<f32>;
pub type FeatureTensorF32 = attend::FeatureTensor<f32>;
