//! Inpainter selection, including external programs.
//!
//! `inpainter = command:<program> [args…]` runs `<program> [args…] tile.png
//! mask.png out.png` once per tile. The tile is RGBA8 (alpha 0 marks
//! background), the mask is 8-bit gray with 255 on pixels to fill, and the
//! program must write an RGBA8 PNG of the same size to the third path.

use std::path::Path;
use std::process::Command;

use carvepaint::io::{read_png, write_gray_png, write_png};
use carvepaint::occlude::{builtin_inpainter, Inpainter};
use carvepaint::Error;
use image::{GrayImage, RgbaImage};

use crate::error::{PipelineError, Result};

const PREFIX: &str = "command:";

pub struct ExternalInpainter {
    name: String,
    program: String,
    args: Vec<String>,
}

impl ExternalInpainter {
    pub fn new(command: &str) -> Result<Self> {
        let mut words = command.split_whitespace();
        let program = words
            .next()
            .ok_or_else(|| PipelineError::config("inpaint.inpainter: command: needs a program"))?
            .to_string();
        Ok(Self { name: format!("{PREFIX}{command}"), program, args: words.map(str::to_string).collect() })
    }
}

impl Inpainter for ExternalInpainter {
    fn name(&self) -> &str {
        &self.name
    }

    fn inpaint(&self, tile: &RgbaImage, mask: &GrayImage) -> carvepaint::Result<RgbaImage> {
        let dir = tempfile::tempdir().map_err(|source| Error::Io { path: std::env::temp_dir(), source })?;
        let (t, m, o) = (dir.path().join("tile.png"), dir.path().join("mask.png"), dir.path().join("out.png"));
        write_png(tile, &t)?;
        write_gray_png(mask, &m)?;
        let status = Command::new(&self.program)
            .args(&self.args)
            .args([&t, &m, &o])
            .status()
            .map_err(|source| Error::Io { path: Path::new(&self.program).to_path_buf(), source })?;
        if !status.success() {
            return Err(Error::InvalidArgument(format!("inpainter {} exited with {status}", self.program)));
        }
        let out = read_png(&o)?;
        if out.dimensions() != tile.dimensions() {
            return Err(Error::InvalidArgument(format!(
                "inpainter {} returned {}x{} for a {}x{} tile",
                self.program,
                out.width(),
                out.height(),
                tile.width(),
                tile.height()
            )));
        }
        Ok(out)
    }
}

/// The inpainter named by `inpaint.inpainter`.
pub fn resolve(name: &str) -> Result<Box<dyn Inpainter>> {
    match name.strip_prefix(PREFIX) {
        Some(command) => Ok(Box::new(ExternalInpainter::new(command)?)),
        None => builtin_inpainter(name).map_err(|e| PipelineError::config(format!("inpaint.inpainter: {e}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_resolve() {
        assert_eq!(resolve("harmonic").unwrap().name(), "harmonic");
        assert_eq!(resolve("command:my-fill --fast").unwrap().name(), "command:my-fill --fast");
        assert!(resolve("command:").is_err());
        assert!(resolve("diffusion").is_err());
    }

    #[test]
    fn failing_program_is_a_processing_error() {
        let p = resolve("command:false").unwrap();
        let tile = RgbaImage::new(4, 4);
        let mask = GrayImage::new(4, 4);
        assert!(p.inpaint(&tile, &mask).is_err());
    }
}
