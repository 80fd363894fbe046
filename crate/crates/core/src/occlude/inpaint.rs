use std::collections::VecDeque;

use image::{GrayImage, Rgba, RgbaImage};

use crate::error::{Error, Result};

/// Fills masked pixels of one canvas tile.
///
/// `tile` holds known pixels with alpha 255; masked and background pixels have
/// alpha 0. `mask` is nonzero where a pixel must be filled. The returned image
/// must have the tile's size; only its masked pixels are used.
pub trait Inpainter: Send + Sync {
    fn name(&self) -> &str;
    fn inpaint(&self, tile: &RgbaImage, mask: &GrayImage) -> Result<RgbaImage>;
}

/// Discrete Laplace fill with Dirichlet data from the known pixels adjacent
/// to each masked region; background pixels act as reflecting walls.
/// Solved by Gauss–Seidel with alternating scan direction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HarmonicInpainter {
    /// Stop once the largest Laplace residual falls below this (colors in [0, 1]).
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for HarmonicInpainter {
    fn default() -> Self {
        Self { tolerance: 0.5 / 255.0, max_sweeps: 10_000 }
    }
}

/// One 4-connected masked region of a tile.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskRegion {
    pub pixels: Vec<usize>,
    /// Known pixels 4-adjacent to the region.
    pub boundary: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct HarmonicReport {
    pub regions: usize,
    /// Regions without known neighbors, filled with the tile mean.
    pub unsupported_regions: usize,
    pub max_sweeps_used: usize,
}

fn is_known(tile: &RgbaImage, mask: &GrayImage, i: usize) -> bool {
    mask.as_raw()[i] == 0 && tile.as_raw()[4 * i + 3] > 0
}

fn neighbors(i: usize, w: usize, h: usize) -> impl Iterator<Item = usize> {
    let (x, y) = (i % w, i / w);
    let left = (x > 0).then(|| i - 1);
    let right = (x + 1 < w).then(|| i + 1);
    let up = (y > 0).then(|| i - w);
    let down = (y + 1 < h).then(|| i + w);
    [left, right, up, down].into_iter().flatten()
}

/// 4-connected masked regions in scan order, with their known boundaries.
pub fn mask_regions(tile: &RgbaImage, mask: &GrayImage) -> Vec<MaskRegion> {
    let (w, h) = (tile.width() as usize, tile.height() as usize);
    let m = mask.as_raw();
    let mut seen = vec![false; w * h];
    let mut regions = Vec::new();
    for start in 0..w * h {
        if m[start] == 0 || seen[start] {
            continue;
        }
        let mut pixels = Vec::new();
        let mut boundary = Vec::new();
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(i) = queue.pop_front() {
            pixels.push(i);
            for j in neighbors(i, w, h) {
                if m[j] != 0 {
                    if !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                } else if is_known(tile, mask, j) {
                    boundary.push(j);
                }
            }
        }
        pixels.sort_unstable();
        boundary.sort_unstable();
        boundary.dedup();
        regions.push(MaskRegion { pixels, boundary });
    }
    regions
}

impl HarmonicInpainter {
    pub fn fill(&self, tile: &RgbaImage, mask: &GrayImage) -> Result<(RgbaImage, HarmonicReport)> {
        if tile.dimensions() != mask.dimensions() {
            return Err(Error::invalid("tile and mask sizes differ"));
        }
        let (w, h) = (tile.width() as usize, tile.height() as usize);
        let raw = tile.as_raw();
        let color = |i: usize| [0, 1, 2].map(|c| raw[4 * i + c] as f64 / 255.0);
        let known: Vec<usize> = (0..w * h).filter(|&i| is_known(tile, mask, i)).collect();
        let tile_mean = if known.is_empty() {
            [0.5; 3]
        } else {
            let mut s = [0.0; 3];
            for &i in &known {
                let c = color(i);
                for k in 0..3 {
                    s[k] += c[k];
                }
            }
            s.map(|v| v / known.len() as f64)
        };

        // Masked pixel values; known pixels read from `tile`.
        let mut value = vec![[0.0f64; 3]; w * h];
        for &i in &known {
            value[i] = color(i);
        }
        let m = mask.as_raw();
        let mut report = HarmonicReport::default();
        for region in mask_regions(tile, mask) {
            report.regions += 1;
            if region.boundary.is_empty() {
                report.unsupported_regions += 1;
                for &i in &region.pixels {
                    value[i] = tile_mean;
                }
                continue;
            }
            // Initial guess: layered averages outward from the boundary.
            let mut assigned = vec![false; w * h];
            for &b in &region.boundary {
                assigned[b] = true;
            }
            let mut layer: Vec<usize> = region
                .pixels
                .iter()
                .copied()
                .filter(|&i| neighbors(i, w, h).any(|j| assigned[j]))
                .collect();
            while !layer.is_empty() {
                for &i in &layer {
                    let (mut s, mut n) = ([0.0; 3], 0.0);
                    for j in neighbors(i, w, h).filter(|&j| assigned[j]) {
                        for k in 0..3 {
                            s[k] += value[j][k];
                        }
                        n += 1.0;
                    }
                    value[i] = s.map(|v| v / n);
                }
                for &i in &layer {
                    assigned[i] = true;
                }
                let mut next: Vec<usize> = layer
                    .iter()
                    .flat_map(|&i| neighbors(i, w, h))
                    .filter(|&j| m[j] != 0 && !assigned[j])
                    .collect();
                next.sort_unstable();
                next.dedup();
                layer = next;
            }

            let stencil: Vec<Vec<usize>> = region
                .pixels
                .iter()
                .map(|&i| neighbors(i, w, h).filter(|&j| m[j] != 0 || is_known(tile, mask, j)).collect())
                .collect();
            let mut sweeps = 0;
            while sweeps < self.max_sweeps {
                sweeps += 1;
                // Alternate the scan direction so the fill has no directional bias.
                let order: Box<dyn Iterator<Item = (&usize, &Vec<usize>)>> = if sweeps % 2 == 1 {
                    Box::new(region.pixels.iter().zip(&stencil))
                } else {
                    Box::new(region.pixels.iter().zip(&stencil).rev())
                };
                for (&i, nb) in order {
                    let mut s = [0.0; 3];
                    for &j in nb {
                        for k in 0..3 {
                            s[k] += value[j][k];
                        }
                    }
                    let inv = 1.0 / nb.len() as f64;
                    value[i] = s.map(|v| v * inv);
                }
                // Residual of the discrete Laplace equation, sum(u_j) - n u_i.
                let mut residual = 0.0f64;
                for (&i, nb) in region.pixels.iter().zip(&stencil) {
                    for k in 0..3 {
                        let s: f64 = nb.iter().map(|&j| value[j][k]).sum();
                        residual = residual.max((s - nb.len() as f64 * value[i][k]).abs());
                    }
                }
                if residual < self.tolerance {
                    break;
                }
            }
            report.max_sweeps_used = report.max_sweeps_used.max(sweeps);
        }

        let mut out = tile.clone();
        for (i, _) in m.iter().enumerate().filter(|(_, &v)| v != 0) {
            let rgb = value[i].map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8);
            out.put_pixel((i % w) as u32, (i / w) as u32, Rgba([rgb[0], rgb[1], rgb[2], 255]));
        }
        Ok((out, report))
    }
}

impl Inpainter for HarmonicInpainter {
    fn name(&self) -> &str {
        "harmonic"
    }

    fn inpaint(&self, tile: &RgbaImage, mask: &GrayImage) -> Result<RgbaImage> {
        Ok(self.fill(tile, mask)?.0)
    }
}

/// Built-in inpainter by configuration name.
pub fn builtin_inpainter(name: &str) -> Result<Box<dyn Inpainter>> {
    match name {
        "harmonic" => Ok(Box::new(HarmonicInpainter::default())),
        other => Err(Error::invalid(format!("unknown inpainter {other:?} (built-in: harmonic)"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(w: u32, h: u32, f: impl Fn(u32, u32) -> Option<Option<[u8; 3]>>) -> (RgbaImage, GrayImage) {
        // f: None = masked, Some(None) = background, Some(Some(c)) = known.
        let mut tile = RgbaImage::new(w, h);
        let mut mask = GrayImage::new(w, h);
        for y in 0..h {
            for x in 0..w {
                match f(x, y) {
                    None => mask.put_pixel(x, y, image::Luma([255])),
                    Some(None) => {}
                    Some(Some(c)) => tile.put_pixel(x, y, Rgba([c[0], c[1], c[2], 255])),
                }
            }
        }
        (tile, mask)
    }

    #[test]
    fn constant_boundary_gives_constant_fill() {
        let c = [40, 120, 200];
        let (tile, mask) = setup(40, 40, |x, y| {
            let (dx, dy) = (x as f64 - 20.0, y as f64 - 20.0);
            if dx * dx + dy * dy < 100.0 {
                None
            } else {
                Some(Some(c))
            }
        });
        let (out, rep) = HarmonicInpainter::default().fill(&tile, &mask).unwrap();
        assert_eq!(rep.regions, 1);
        for (i, p) in out.pixels().enumerate() {
            if mask.as_raw()[i] != 0 {
                assert_eq!(*p, Rgba([c[0], c[1], c[2], 255]));
            }
        }
    }

    #[test]
    fn strip_between_black_and_white_is_linear() {
        // Columns 0 and 32 fixed, 1..=31 masked: u(x) = x / 32.
        let (tile, mask) = setup(33, 16, |x, _| match x {
            0 => Some(Some([0; 3])),
            32 => Some(Some([255; 3])),
            _ => None,
        });
        let (out, _) = HarmonicInpainter::default().fill(&tile, &mask).unwrap();
        for y in 0..16 {
            let mut prev = 0;
            for x in 1..32 {
                let v = out.get_pixel(x, y)[0];
                assert!(v >= prev);
                prev = v;
            }
            let center = out.get_pixel(16, y)[0] as f64 / 255.0;
            assert!((center - 0.5).abs() <= 2.0 / 255.0, "{center}");
        }
    }

    #[test]
    fn converged_strip_matches_closed_form() {
        let (tile, mask) = setup(33, 8, |x, _| match x {
            0 => Some(Some([0; 3])),
            32 => Some(Some([255; 3])),
            _ => None,
        });
        let tight = HarmonicInpainter { tolerance: 1e-9, max_sweeps: 100_000 };
        let (out, _) = tight.fill(&tile, &mask).unwrap();
        for y in 0..8 {
            for x in 1..32 {
                let exact = 255.0 * x as f64 / 32.0;
                assert!((out.get_pixel(x, y)[1] as f64 - exact).abs() <= 0.5 + 1e-9);
            }
        }
    }

    #[test]
    fn maximum_principle_on_random_tiles() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let cells: Vec<u8> = (0..32 * 32).map(|_| rng.gen_range(0..4)).collect();
            let colors: Vec<[u8; 3]> = (0..32 * 32).map(|_| rng.gen()).collect();
            let (tile, mask) = setup(32, 32, |x, y| {
                let i = (y * 32 + x) as usize;
                match cells[i] {
                    0 | 1 => None,
                    2 => Some(None),
                    _ => Some(Some(colors[i])),
                }
            });
            let (out, _) = HarmonicInpainter::default().fill(&tile, &mask).unwrap();
            for r in mask_regions(&tile, &mask) {
                if r.boundary.is_empty() {
                    continue;
                }
                for k in 0..3 {
                    let lo = r.boundary.iter().map(|&b| tile.as_raw()[4 * b + k]).min().unwrap();
                    let hi = r.boundary.iter().map(|&b| tile.as_raw()[4 * b + k]).max().unwrap();
                    for &p in &r.pixels {
                        let v = out.as_raw()[4 * p + k];
                        assert!(lo <= v && v <= hi);
                    }
                }
            }
            // Non-mask pixels unchanged.
            for i in 0..32 * 32 {
                if mask.as_raw()[i] == 0 {
                    assert_eq!(out.as_raw()[4 * i..4 * i + 4], tile.as_raw()[4 * i..4 * i + 4]);
                }
            }
        }
    }

    #[test]
    fn isolated_region_takes_tile_mean() {
        // A masked block walled off by background.
        let (tile, mask) = setup(20, 20, |x, y| {
            if (8..12).contains(&x) && (8..12).contains(&y) {
                None
            } else if (6..14).contains(&x) && (6..14).contains(&y) {
                Some(None)
            } else if x < 10 {
                Some(Some([0, 0, 0]))
            } else {
                Some(Some([200, 100, 50]))
            }
        });
        let (out, rep) = HarmonicInpainter::default().fill(&tile, &mask).unwrap();
        assert_eq!(rep.unsupported_regions, 1);
        assert_eq!(*out.get_pixel(9, 9), Rgba([100, 50, 25, 255]));
    }

    #[test]
    fn lookup_by_name() {
        assert_eq!(builtin_inpainter("harmonic").unwrap().name(), "harmonic");
        assert!(builtin_inpainter("diffusion").is_err());
    }
}
