use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::mesh::TriMesh;
use crate::scalar::Real;

pub const MIN_RESOLUTION: u32 = 16;

/// Orthographic camera looking at `target` from azimuth/elevation angles.
///
/// Azimuth 0 looks along +y (camera on the −y side), 90 along −x, 180 along −y
/// and 270 along +x. Elevation tilts the camera toward +z. Image rows run
/// top to bottom; `ortho_scale` spans the larger image dimension.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Camera<T> {
    pub azimuth_deg: T,
    pub elevation_deg: T,
    pub ortho_scale: T,
    pub width: u32,
    pub height: u32,
    pub target: Vec3<T>,
    /// Distance from `target` back to the image plane.
    pub distance: T,
}

/// Pixel-space projection of a world point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projected<T> {
    /// Continuous pixel coordinates; pixel (i, j) covers [i, i+1) × [j, j+1).
    pub x: T,
    pub y: T,
    /// Distance in front of the image plane along the view direction.
    pub depth: T,
}

impl<T: Real> Camera<T> {
    pub fn new(azimuth_deg: T, elevation_deg: T, ortho_scale: T, width: u32, height: u32) -> Result<Self> {
        let c = Self {
            azimuth_deg,
            elevation_deg,
            ortho_scale,
            width,
            height,
            target: Vec3::zero(),
            distance: T::one(),
        };
        c.validate()?;
        Ok(c)
    }

    /// Camera whose view direction is `dir` (pointing from the camera into the scene).
    pub fn looking_along(dir: Vec3<T>, target: Vec3<T>, distance: T, ortho_scale: T, width: u32, height: u32) -> Result<Self> {
        let d = dir
            .try_normalize(T::lit(1e-12))
            .ok_or_else(|| Error::invalid("camera direction must be nonzero"))?;
        let e = -d;
        let el = e.z.max(-T::one()).min(T::one()).asin();
        let az = e.x.atan2(-e.y);
        let c = Self {
            azimuth_deg: az.to_degrees(),
            elevation_deg: el.to_degrees(),
            ortho_scale,
            width,
            height,
            target,
            distance,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < MIN_RESOLUTION || self.height < MIN_RESOLUTION {
            return Err(Error::invalid(format!(
                "camera resolution must be at least {MIN_RESOLUTION}x{MIN_RESOLUTION}, got {}x{}",
                self.width, self.height
            )));
        }
        if !(self.ortho_scale > T::zero() && self.ortho_scale.is_finite()) {
            return Err(Error::invalid(format!("ortho_scale must be positive, got {}", self.ortho_scale)));
        }
        if !(self.azimuth_deg.is_finite() && self.elevation_deg.is_finite() && self.target.is_finite()) {
            return Err(Error::invalid("camera angles and target must be finite"));
        }
        if !(self.distance > T::zero()) {
            return Err(Error::invalid("camera distance must be positive"));
        }
        Ok(())
    }

    /// Unit vector from the target toward the camera.
    pub fn eye_direction(&self) -> Vec3<T> {
        let (az, el) = (self.azimuth_deg.to_radians(), self.elevation_deg.to_radians());
        Vec3::new(az.sin() * el.cos(), -az.cos() * el.cos(), el.sin())
    }

    /// Unit view direction d, from the camera into the scene.
    pub fn view_direction(&self) -> Vec3<T> {
        -self.eye_direction()
    }

    /// Orthonormal (right, up, view) basis.
    pub fn basis(&self) -> (Vec3<T>, Vec3<T>, Vec3<T>) {
        let d = self.view_direction();
        let right = d
            .cross(Vec3::unit_z())
            .try_normalize(T::lit(1e-9))
            .unwrap_or_else(|| {
                // Looking straight up or down: keep +x to the right.
                let az = self.azimuth_deg.to_radians();
                Vec3::new(az.cos(), az.sin(), T::zero())
            });
        let up = right.cross(d).normalized();
        (right, up, d)
    }

    pub fn position(&self) -> Vec3<T> {
        self.target - self.view_direction() * self.distance
    }

    /// World units per pixel.
    pub fn pixel_size(&self) -> T {
        self.ortho_scale / T::from_usize_lossy(self.width.max(self.height) as usize)
    }

    pub fn project(&self, p: Vec3<T>) -> Projected<T> {
        let (r, u, d) = self.basis();
        self.project_with(p, (r, u, d))
    }

    /// Projection with a precomputed basis.
    pub fn project_with(&self, p: Vec3<T>, (r, u, d): (Vec3<T>, Vec3<T>, Vec3<T>)) -> Projected<T> {
        let rel = p - self.target;
        let px = self.pixel_size();
        let half_w = T::from_usize_lossy(self.width as usize) * T::lit(0.5);
        let half_h = T::from_usize_lossy(self.height as usize) * T::lit(0.5);
        Projected {
            x: rel.dot(r) / px + half_w,
            y: half_h - rel.dot(u) / px,
            depth: rel.dot(d) + self.distance,
        }
    }

    /// Whether this view is a side view (azimuth closer to 90/270 than to 0/180).
    pub fn is_side_view(&self) -> bool {
        let az = self.azimuth_deg.to_radians();
        az.sin().abs() > az.cos().abs()
    }

    pub fn to_sidecar(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "azimuth_deg={}", self.azimuth_deg);
        let _ = writeln!(s, "elevation_deg={}", self.elevation_deg);
        let _ = writeln!(s, "ortho_scale={}", self.ortho_scale);
        let _ = writeln!(s, "width={}", self.width);
        let _ = writeln!(s, "height={}", self.height);
        let _ = writeln!(s, "target_x={}", self.target.x);
        let _ = writeln!(s, "target_y={}", self.target.y);
        let _ = writeln!(s, "target_z={}", self.target.z);
        let _ = writeln!(s, "distance={}", self.distance);
        s
    }

    /// Parses sidecar text. The five core keys are required; target and
    /// distance fall back to `fit`'s values when absent.
    pub fn from_sidecar(text: &str, fit: Option<&Camera<T>>) -> Result<Self> {
        let mut kv = std::collections::HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: "<camera>".into(),
                line: n + 1,
                message: format!("expected key=value, got {line:?}"),
            })?;
            kv.insert(k.trim().to_string(), (n + 1, v.trim().to_string()));
        }
        let num = |key: &str| -> Result<Option<f64>> {
            match kv.get(key) {
                None => Ok(None),
                Some((line, v)) => v.parse::<f64>().map(Some).map_err(|e| Error::Parse {
                    path: "<camera>".into(),
                    line: *line,
                    message: format!("{key}: {e}"),
                }),
            }
        };
        let need = |key: &str| -> Result<f64> {
            num(key)?.ok_or_else(|| Error::invalid(format!("camera sidecar is missing {key}")))
        };
        let dim = |key: &str| -> Result<u32> {
            let v = need(key)?;
            if v.fract() != 0.0 || v < 0.0 || v > u32::MAX as f64 {
                return Err(Error::invalid(format!("{key} must be a non-negative integer, got {v}")));
            }
            Ok(v as u32)
        };
        let mut cam = Camera {
            azimuth_deg: T::lit(need("azimuth_deg")?),
            elevation_deg: T::lit(need("elevation_deg")?),
            ortho_scale: T::lit(need("ortho_scale")?),
            width: dim("width")?,
            height: dim("height")?,
            target: fit.map(|c| c.target).unwrap_or_else(Vec3::zero),
            distance: fit.map(|c| c.distance).unwrap_or_else(T::one),
        };
        if let (Some(x), Some(y), Some(z)) = (num("target_x")?, num("target_y")?, num("target_z")?) {
            cam.target = Vec3::from_f64(x, y, z);
        }
        if let Some(d) = num("distance")? {
            cam.distance = T::lit(d);
        }
        cam.validate()?;
        Ok(cam)
    }
}

pub const DEFAULT_AZIMUTHS: [f64; 4] = [0.0, 90.0, 180.0, 270.0];
pub const FIT_MARGIN: f64 = 1.1;

/// Front, right, back and left orthographic cameras framing the mesh.
///
/// All four share one `ortho_scale`: 1.1 × the largest image-plane extent of
/// the bounding box over the four views. Flat meshes fall back to the
/// largest 3D extent, and empty meshes to 1.
pub fn default_cameras<T: Real>(mesh: &TriMesh<T>, width: u32, height: u32) -> Result<[Camera<T>; 4]> {
    let (lo, hi) = mesh.bounding_box().unwrap_or((Vec3::zero(), Vec3::zero()));
    let target = (lo + hi) * T::lit(0.5);
    let diag = (hi - lo).norm();
    let distance = if diag > T::zero() { diag } else { T::one() };
    let mut cams = DEFAULT_AZIMUTHS.map(|az| Camera {
        azimuth_deg: T::lit(az),
        elevation_deg: T::zero(),
        ortho_scale: T::one(),
        width,
        height,
        target,
        distance,
    });
    let mut extent = T::zero();
    for c in &cams {
        let (r, u, _) = c.basis();
        for corner in 0..8 {
            let pick = |bit: usize, a: T, b: T| if corner & bit == 0 { a } else { b };
            let p = Vec3::new(pick(1, lo.x, hi.x), pick(2, lo.y, hi.y), pick(4, lo.z, hi.z)) - target;
            extent = extent.max(p.dot(r).abs() * T::lit(2.0)).max(p.dot(u).abs() * T::lit(2.0));
        }
    }
    // Projections that are numerically zero count as degenerate.
    if extent <= diag * T::lit(1e-9) {
        extent = (hi - lo).max_element();
    }
    if !(extent > T::zero()) {
        extent = T::one();
    }
    for c in cams.iter_mut() {
        c.ortho_scale = extent * T::lit(FIT_MARGIN);
        c.validate()?;
    }
    Ok(cams)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;

    #[test]
    fn axis_directions() {
        let m = shapes::cuboid(Vec3::<f64>::zero(), Vec3::splat(1.0));
        let cams = default_cameras(&m, 64, 64).unwrap();
        let expect = [
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(-1.0, 0.0, 0.0),
            Vec3::new(0.0, -1.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
        ];
        for (c, e) in cams.iter().zip(expect) {
            assert!((c.view_direction() - e).norm() < 1e-12);
            let (r, u, d) = c.basis();
            assert!(r.dot(u).abs() < 1e-12 && r.dot(d).abs() < 1e-12 && u.dot(d).abs() < 1e-12);
            assert!((r.norm() - 1.0).abs() < 1e-12 && (u.norm() - 1.0).abs() < 1e-12);
            assert!((u - Vec3::unit_z()).norm() < 1e-12);
        }
        assert!(!cams[0].is_side_view() && cams[1].is_side_view());
        assert!(!cams[2].is_side_view() && cams[3].is_side_view());
    }

    #[test]
    fn sphere_scale() {
        let m = shapes::uv_sphere(Vec3::<f64>::zero(), 1.0, 16, 32);
        let cams = default_cameras(&m, 64, 64).unwrap();
        for c in &cams {
            assert!((c.ortho_scale - 2.2).abs() < 1e-6, "{}", c.ortho_scale);
        }
    }

    #[test]
    fn flat_mesh_still_has_positive_scale() {
        // A strip along z, seen edge-on by no camera; and a single point.
        let m = TriMesh::new(
            vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.0, 0.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let cams = default_cameras(&m, 32, 32).unwrap();
        assert!(cams.iter().all(|c| c.ortho_scale > 0.0));
        let empty = TriMesh::<f64>::empty();
        assert!(default_cameras(&empty, 32, 32).unwrap()[0].ortho_scale > 0.0);
    }

    #[test]
    fn projection_centers_target() {
        let c = Camera::new(0.0f64, 0.0, 2.0, 100, 50).unwrap();
        let p = c.project(Vec3::zero());
        assert_eq!((p.x, p.y), (50.0, 25.0));
        assert_eq!(p.depth, 1.0);
        // +x appears to the right, +z upward, +y deeper for the front camera.
        let q = c.project(Vec3::new(0.5, 0.25, 0.5));
        assert!((q.x - 75.0).abs() < 1e-12 && (q.y - 0.0).abs() < 1e-12 && (q.depth - 1.25).abs() < 1e-12);
    }

    #[test]
    fn direction_round_trip() {
        for d in [Vec3::new(0.3, -0.5, 0.8), Vec3::new(-1.0, 0.0, 0.0), Vec3::new(0.0, 0.0, -1.0)] {
            let c = Camera::looking_along(d, Vec3::zero(), 1.0, 1.0, 16, 16).unwrap();
            assert!((c.view_direction() - d.normalized()).norm() < 1e-12);
            let (r, u, v) = c.basis();
            assert!(r.cross(u).dot(-v) > 0.999);
        }
    }

    #[test]
    fn validation() {
        assert!(Camera::new(0.0f64, 0.0, 1.0, 8, 64).is_err());
        assert!(Camera::new(0.0f64, 0.0, 0.0, 64, 64).is_err());
        assert!(Camera::new(0.0f64, 0.0, 1.0, 16, 16).is_ok());
    }

    #[test]
    fn sidecar_round_trip() {
        let mut c = Camera::new(90.0f64, 12.5, 1.75, 320, 240).unwrap();
        c.target = Vec3::new(0.1, 0.2, 0.3);
        c.distance = 2.5;
        let back = Camera::from_sidecar(&c.to_sidecar(), None).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn sidecar_errors() {
        assert!(Camera::<f64>::from_sidecar("azimuth_deg=0\n", None).is_err());
        let bad = "azimuth_deg=x\nelevation_deg=0\northo_scale=1\nwidth=16\nheight=16\n";
        match Camera::<f64>::from_sidecar(bad, None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
        let minimal = "azimuth_deg=0\nelevation_deg=0\northo_scale=1\nwidth=16\nheight=16\n";
        let fit = Camera { target: Vec3::splat(0.5), distance: 3.0, ..Camera::new(0.0, 0.0, 1.0, 16, 16).unwrap() };
        let c = Camera::<f64>::from_sidecar(minimal, Some(&fit)).unwrap();
        assert_eq!(c.target, Vec3::splat(0.5));
        assert_eq!(c.distance, 3.0);
    }
}
