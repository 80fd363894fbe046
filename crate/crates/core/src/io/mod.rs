//! On-disk formats: Wavefront OBJ, PNG and CAPAVOX1 voxel grids.

mod obj;
mod vox;

use std::path::Path;

use image::{GrayImage, RgbaImage};

use crate::error::{Error, Result};

pub use obj::{read_obj, write_obj, ObjDocument, ObjFace};
pub use vox::{decode_vox, encode_vox, read_vox, write_vox};

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

/// Reads any PNG as RGBA8.
pub fn read_png(path: &Path) -> Result<RgbaImage> {
    let img = image::ImageReader::open(path)
        .map_err(|source| Error::Io { path: path.to_path_buf(), source })?
        .with_guessed_format()
        .map_err(|source| Error::Io { path: path.to_path_buf(), source })?
        .decode()
        .map_err(|source| Error::Image { path: path.to_path_buf(), source })?;
    Ok(img.into_rgba8())
}

/// Writes an RGBA8 PNG (non-interlaced).
pub fn write_png(image: &RgbaImage, path: &Path) -> Result<()> {
    image
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| Error::Image { path: path.to_path_buf(), source })
}

pub fn write_gray_png(image: &GrayImage, path: &Path) -> Result<()> {
    image
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| Error::Image { path: path.to_path_buf(), source })
}
