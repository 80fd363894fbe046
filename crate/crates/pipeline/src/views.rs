//! Procedural view images, so the pipeline runs without any image model.

use carvepaint::paint::{rasterize, NO_FACE};
use carvepaint::{Camera, TriMesh};
use image::{Rgba, RgbaImage};

use crate::config::Generator;

/// Per-view base colors, cycled when there are more than four views.
pub const PALETTE: [[u8; 3]; 4] = [[220, 40, 40], [40, 180, 60], [50, 70, 220], [230, 200, 40]];

pub fn generate(generator: Generator, mesh: &TriMesh, cameras: &[Camera]) -> Vec<RgbaImage> {
    cameras
        .iter()
        .enumerate()
        .map(|(i, cam)| {
            let [r, g, b] = PALETTE[i % PALETTE.len()];
            match generator {
                Generator::Solid => RgbaImage::from_pixel(cam.width, cam.height, Rgba([r, g, b, 255])),
                Generator::Checker { cells } => {
                    let cell = (cam.width.max(cam.height) / cells).max(1);
                    RgbaImage::from_fn(cam.width, cam.height, |x, y| {
                        if (x / cell + y / cell) % 2 == 0 {
                            Rgba([r, g, b, 255])
                        } else {
                            Rgba([r / 2, g / 2, b / 2, 255])
                        }
                    })
                }
                Generator::Normal => normal_shaded(mesh, cam),
            }
        })
        .collect()
}

/// Face normals mapped from [-1, 1] to [0, 255]; background is transparent.
fn normal_shaded(mesh: &TriMesh, cam: &Camera) -> RgbaImage {
    let buf = rasterize(mesh, cam);
    let normals = mesh.face_normals();
    let to8 = |v: f64| ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8;
    RgbaImage::from_fn(cam.width, cam.height, |x, y| {
        let f = buf.face_id[buf.index(x, y)];
        if f == NO_FACE {
            return Rgba([0, 0, 0, 0]);
        }
        let n = normals[f as usize];
        Rgba([to8(n.x), to8(n.y), to8(n.z), 255])
    })
}
