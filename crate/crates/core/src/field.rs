//! Occupancy fields: analytic solids used as exact oracles and sampled voxel grids.
//!
//! Occupancy is 1 inside the solid and 0 outside. Grids store samples on a
//! regular lattice in x-fastest order and are queried by trilinear interpolation.

use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::scalar::Real;

/// Default iso level separating inside from outside.
pub const DEFAULT_ISO: f64 = 0.5;

/// Anything that can report occupancy at a world-space point.
pub trait Occupancy<T: Real> {
    fn query(&self, p: Vec3<T>) -> Result<T>;
}

#[derive(Clone, Debug, PartialEq)]
pub enum Shape<T> {
    Sphere { center: Vec3<T>, radius: T },
    Box { center: Vec3<T>, half_extents: Vec3<T> },
    /// Ring lies in the plane z = center.z, revolving about the z axis.
    Torus { center: Vec3<T>, major_radius: T, minor_radius: T },
    Union(Vec<Shape<T>>),
    Difference(std::boxed::Box<Shape<T>>, std::boxed::Box<Shape<T>>),
}

impl<T: Real> Shape<T> {
    fn validate(&self) -> Result<()> {
        let positive = |v: T, what: &str| {
            if v > T::zero() && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{what} must be positive, got {v}")))
            }
        };
        match self {
            Shape::Sphere { radius, .. } => positive(*radius, "sphere radius"),
            Shape::Box { half_extents, .. } => {
                positive(half_extents.x, "box half extent")?;
                positive(half_extents.y, "box half extent")?;
                positive(half_extents.z, "box half extent")
            }
            Shape::Torus { major_radius, minor_radius, .. } => {
                positive(*major_radius, "torus major radius")?;
                positive(*minor_radius, "torus minor radius")
            }
            Shape::Union(parts) => parts.iter().try_for_each(Shape::validate),
            Shape::Difference(a, b) => {
                a.validate()?;
                b.validate()
            }
        }
    }

    fn contains(&self, p: Vec3<T>) -> bool {
        match self {
            Shape::Sphere { center, radius } => (p - *center).norm_squared() <= *radius * *radius,
            Shape::Box { center, half_extents } => {
                let d = (p - *center).abs();
                d.x <= half_extents.x && d.y <= half_extents.y && d.z <= half_extents.z
            }
            Shape::Torus { center, major_radius, minor_radius } => {
                let d = p - *center;
                let ring = (d.x * d.x + d.y * d.y).sqrt() - *major_radius;
                ring * ring + d.z * d.z <= *minor_radius * *minor_radius
            }
            Shape::Union(parts) => parts.iter().any(|s| s.contains(p)),
            Shape::Difference(a, b) => a.contains(p) && !b.contains(p),
        }
    }
}

/// Exact-membership occupancy of a constructive solid.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalyticField<T> {
    shape: Shape<T>,
}

impl<T: Real> AnalyticField<T> {
    pub fn new(shape: Shape<T>) -> Result<Self> {
        shape.validate()?;
        Ok(Self { shape })
    }

    pub fn sphere(center: Vec3<T>, radius: T) -> Result<Self> {
        Self::new(Shape::Sphere { center, radius })
    }

    pub fn cuboid(center: Vec3<T>, half_extents: Vec3<T>) -> Result<Self> {
        Self::new(Shape::Box { center, half_extents })
    }

    pub fn torus(center: Vec3<T>, major_radius: T, minor_radius: T) -> Result<Self> {
        Self::new(Shape::Torus { center, major_radius, minor_radius })
    }

    pub fn shape(&self) -> &Shape<T> {
        &self.shape
    }

    /// 1 inside (boundary included), 0 outside.
    pub fn occupancy(&self, p: Vec3<T>) -> T {
        if self.shape.contains(p) {
            T::one()
        } else {
            T::zero()
        }
    }
}

impl<T: Real> Occupancy<T> for AnalyticField<T> {
    fn query(&self, p: Vec3<T>) -> Result<T> {
        Ok(self.occupancy(p))
    }
}

/// Occupancy samples on a regular lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField<T> {
    dims: [usize; 3],
    origin: Vec3<T>,
    spacing: T,
    values: Vec<T>,
}

impl<T: Real> GridField<T> {
    pub fn new(dims: [usize; 3], origin: Vec3<T>, spacing: T, values: Vec<T>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::invalid(format!("grid dims must be positive, got {dims:?}")));
        }
        if !(spacing > T::zero() && spacing.is_finite()) {
            return Err(Error::invalid(format!("grid spacing must be positive, got {spacing}")));
        }
        if !origin.is_finite() {
            return Err(Error::invalid("grid origin must be finite"));
        }
        let n = dims[0] * dims[1] * dims[2];
        if values.len() != n {
            return Err(Error::invalid(format!(
                "grid expects {n} values for dims {dims:?}, got {}",
                values.len()
            )));
        }
        if let Some(i) = values
            .iter()
            .position(|v| !(v.is_finite() && *v >= T::zero() && *v <= T::one()))
        {
            return Err(Error::invalid(format!(
                "grid value {} at index {i} outside [0,1]",
                values[i]
            )));
        }
        Ok(Self { dims, origin, spacing, values })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn origin(&self) -> Vec3<T> {
        self.origin
    }

    pub fn spacing(&self) -> T {
        self.spacing
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize, k: usize) -> T {
        self.values[self.index(i, j, k)]
    }

    /// World position of lattice point (i, j, k).
    #[inline]
    pub fn point(&self, i: usize, j: usize, k: usize) -> Vec3<T> {
        self.origin
            + Vec3::new(
                T::from_usize_lossy(i),
                T::from_usize_lossy(j),
                T::from_usize_lossy(k),
            ) * self.spacing
    }

    /// Far corner of the sampled box.
    pub fn max_corner(&self) -> Vec3<T> {
        self.point(self.dims[0] - 1, self.dims[1] - 1, self.dims[2] - 1)
    }

    /// Trilinear interpolation; errors outside the lattice bounds.
    pub fn trilinear(&self, p: Vec3<T>) -> Result<T> {
        let rel = (p - self.origin) / self.spacing;
        let slack = T::lit(1e-9);
        let mut cell = [0usize; 3];
        let mut frac = [T::zero(); 3];
        for axis in 0..3 {
            let n = self.dims[axis];
            let u = rel[axis];
            let hi = T::from_usize_lossy(n - 1);
            if !(u >= -slack && u <= hi + slack) {
                return Err(Error::OutOfRange(format!(
                    "query point ({}, {}, {}) outside grid bounds",
                    p.x, p.y, p.z
                )));
            }
            if n == 1 {
                continue;
            }
            let u = u.max(T::zero()).min(hi);
            let c = u.floor().to_usize().unwrap_or(0).min(n - 2);
            cell[axis] = c;
            frac[axis] = u - T::from_usize_lossy(c);
        }
        let step = |axis: usize| usize::from(self.dims[axis] > 1);
        let (i, j, k) = (cell[0], cell[1], cell[2]);
        let (di, dj, dk) = (step(0), step(1), step(2));
        let [tx, ty, tz] = frac;
        let one = T::one();
        let c00 = self.value(i, j, k) * (one - tx) + self.value(i + di, j, k) * tx;
        let c10 = self.value(i, j + dj, k) * (one - tx) + self.value(i + di, j + dj, k) * tx;
        let c01 = self.value(i, j, k + dk) * (one - tx) + self.value(i + di, j, k + dk) * tx;
        let c11 =
            self.value(i, j + dj, k + dk) * (one - tx) + self.value(i + di, j + dj, k + dk) * tx;
        let c0 = c00 * (one - ty) + c10 * ty;
        let c1 = c01 * (one - ty) + c11 * ty;
        Ok(c0 * (one - tz) + c1 * tz)
    }
}

impl<T: Real> Occupancy<T> for GridField<T> {
    fn query(&self, p: Vec3<T>) -> Result<T> {
        self.trilinear(p)
    }
}

/// Samples `field` at `origin + spacing * (i, j, k)` for every lattice index.
pub fn sample_grid<T: Real>(
    field: &AnalyticField<T>,
    dims: [usize; 3],
    origin: Vec3<T>,
    spacing: T,
) -> Result<GridField<T>> {
    if dims.iter().any(|&d| d < 2) {
        return Err(Error::invalid(format!("sample_grid needs dims >= 2 per axis, got {dims:?}")));
    }
    if !(spacing > T::zero() && spacing.is_finite()) {
        return Err(Error::invalid(format!("sample_grid spacing must be positive, got {spacing}")));
    }
    let mut values = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let p = origin
                    + Vec3::new(
                        T::from_usize_lossy(i),
                        T::from_usize_lossy(j),
                        T::from_usize_lossy(k),
                    ) * spacing;
                values.push(field.occupancy(p));
            }
        }
    }
    GridField::new(dims, origin, spacing, values)
}

/// Lattice covering the unit cube with `n` samples per axis.
pub fn sample_unit_cube<T: Real>(field: &AnalyticField<T>, n: usize) -> Result<GridField<T>> {
    if n < 2 {
        return Err(Error::invalid("unit cube sampling needs n >= 2"));
    }
    sample_grid(field, [n; 3], Vec3::zero(), T::one() / T::from_usize_lossy(n - 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(r: f64) -> AnalyticField<f64> {
        AnalyticField::sphere(Vec3::splat(0.5), r).unwrap()
    }

    #[test]
    fn analytic_membership() {
        let f = AnalyticField::sphere(Vec3::<f64>::splat(1.0), 1.0).unwrap();
        assert_eq!(f.query(Vec3::splat(1.0)).unwrap(), 1.0);
        assert_eq!(f.query(Vec3::new(3.0, 1.0, 1.0)).unwrap(), 0.0);
    }

    #[test]
    fn rejects_non_positive_sizes() {
        assert!(AnalyticField::sphere(Vec3::<f64>::zero(), 0.0).is_err());
        assert!(AnalyticField::cuboid(Vec3::<f64>::zero(), Vec3::new(1.0, -1.0, 1.0)).is_err());
        assert!(AnalyticField::torus(Vec3::<f64>::zero(), 1.0, 0.0).is_err());
    }

    #[test]
    fn sphere_grid_center_and_corners() {
        let g = sample_unit_cube(&sphere(0.3), 64).unwrap();
        // 63 intervals: index 31/32 straddle the center, both well inside.
        assert_eq!(g.value(31, 31, 31), 1.0);
        assert_eq!(g.value(0, 0, 0), 0.0);
        assert_eq!(g.value(63, 63, 63), 0.0);
        assert_eq!(g.value(0, 63, 0), 0.0);
    }

    #[test]
    fn full_box_is_all_ones() {
        let f = AnalyticField::cuboid(Vec3::<f64>::splat(0.5), Vec3::splat(1.0)).unwrap();
        let g = sample_unit_cube(&f, 8).unwrap();
        assert!(g.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn sphere_volume_fraction() {
        // One sample per cell of a 128^3 partition of the unit cube.
        let g = sample_grid(&sphere(0.3), [128; 3], Vec3::zero(), 1.0 / 128.0).unwrap();
        let inside = g.values().iter().filter(|&&v| v == 1.0).count() as f64;
        let frac = inside / (128f64).powi(3);
        let expected = 4.0 / 3.0 * std::f64::consts::PI * 0.3f64.powi(3);
        assert!((frac - expected).abs() / expected < 0.02, "{frac} vs {expected}");
    }

    #[test]
    fn sample_grid_validation() {
        let f = sphere(0.3);
        assert!(sample_grid(&f, [1, 4, 4], Vec3::zero(), 0.1).is_err());
        assert!(sample_grid(&f, [4, 4, 4], Vec3::zero(), 0.0).is_err());
        assert!(sample_grid(&f, [4, 4, 4], Vec3::zero(), -0.1).is_err());
    }

    #[test]
    fn trilinear_midpoint_of_alternating_values() {
        let values: Vec<f64> = (0..4 * 2 * 2).map(|i| (i % 4 % 2) as f64).collect();
        let g = GridField::new([4, 2, 2], Vec3::zero(), 1.0, values).unwrap();
        assert_eq!(g.query(Vec3::new(0.5, 0.0, 0.0)).unwrap(), 0.5);
        assert_eq!(g.query(Vec3::new(1.5, 0.7, 0.2)).unwrap(), 0.5);
    }

    #[test]
    fn out_of_bounds_query_errors() {
        let g = sample_unit_cube(&sphere(0.3), 4).unwrap();
        assert!(matches!(g.query(Vec3::new(1.5, 0.5, 0.5)), Err(Error::OutOfRange(_))));
        assert!(matches!(g.query(Vec3::new(-0.1, 0.5, 0.5)), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn lattice_round_trip_is_exact() {
        let f = AnalyticField::torus(Vec3::<f64>::splat(0.5), 0.3, 0.1).unwrap();
        let g = sample_unit_cube(&f, 24).unwrap();
        for k in 0..24 {
            for j in 0..24 {
                for i in 0..24 {
                    let p = g.point(i, j, k);
                    assert!((g.query(p).unwrap() - g.value(i, j, k)).abs() < 1e-12);
                    assert_eq!(g.value(i, j, k), f.occupancy(p));
                }
            }
        }
    }

    #[test]
    fn grid_rejects_bad_values() {
        assert!(GridField::new([2, 1, 1], Vec3::<f64>::zero(), 1.0, vec![0.0, 1.5]).is_err());
        assert!(GridField::new([2, 1, 1], Vec3::<f64>::zero(), 1.0, vec![0.0]).is_err());
        assert!(GridField::new([2, 1, 1], Vec3::<f64>::zero(), 1.0, vec![0.0, f64::NAN]).is_err());
    }

    #[test]
    fn csg_union_and_difference() {
        let a = Shape::Sphere { center: Vec3::<f64>::zero(), radius: 1.0 };
        let b = Shape::Sphere { center: Vec3::new(0.5, 0.0, 0.0), radius: 0.25 };
        let diff = AnalyticField::new(Shape::Difference(Box::new(a.clone()), Box::new(b.clone()))).unwrap();
        assert_eq!(diff.occupancy(Vec3::new(0.5, 0.0, 0.0)), 0.0);
        assert_eq!(diff.occupancy(Vec3::new(-0.5, 0.0, 0.0)), 1.0);
        let far = Shape::Sphere { center: Vec3::new(5.0, 0.0, 0.0), radius: 1.0 };
        let uni = AnalyticField::new(Shape::Union(vec![a, far])).unwrap();
        assert_eq!(uni.occupancy(Vec3::new(5.0, 0.5, 0.0)), 1.0);
    }
}
