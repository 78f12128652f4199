//! Vectors and periodic-box geometry.
//!
//! All simulation domains are axis-aligned boxes with periodic boundaries in
//! every direction. Positions live in `[0, L)` per axis; displacements use
//! the minimum-image convention so that pair interactions see the nearest
//! periodic copy.

use std::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub, SubAssign};

/// A 3-component double-precision vector.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn splat(v: f64) -> Self {
        Vec3::new(v, v, v)
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }

    /// Component-wise minimum of two vectors.
    pub fn min(self, other: Vec3) -> Vec3 {
        Vec3::new(self.x.min(other.x), self.y.min(other.y), self.z.min(other.z))
    }

    /// Component-wise maximum of two vectors.
    pub fn max(self, other: Vec3) -> Vec3 {
        Vec3::new(self.x.max(other.x), self.y.max(other.y), self.z.max(other.z))
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index out of range: {i}"),
        }
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl SubAssign for Vec3 {
    fn sub_assign(&mut self, o: Vec3) {
        *self = *self - o;
    }
}

/// An axis-aligned box `[0, Lx) × [0, Ly) × [0, Lz)` with periodic
/// boundaries in all three directions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PeriodicBox {
    extents: Vec3,
}

impl PeriodicBox {
    /// Creates a box with the given edge lengths.
    ///
    /// # Panics
    /// Panics if any extent is not strictly positive and finite.
    pub fn new(lx: f64, ly: f64, lz: f64) -> Self {
        assert!(
            lx > 0.0 && ly > 0.0 && lz > 0.0 && lx.is_finite() && ly.is_finite() && lz.is_finite(),
            "box extents must be positive and finite, got ({lx}, {ly}, {lz})"
        );
        PeriodicBox { extents: Vec3::new(lx, ly, lz) }
    }

    /// A cube with edge length `l`.
    pub fn cube(l: f64) -> Self {
        PeriodicBox::new(l, l, l)
    }

    pub fn extents(&self) -> Vec3 {
        self.extents
    }

    pub fn volume(&self) -> f64 {
        self.extents.x * self.extents.y * self.extents.z
    }

    pub fn min_extent(&self) -> f64 {
        self.extents.x.min(self.extents.y).min(self.extents.z)
    }

    /// Maps a position into the canonical cell `[0, L)` per axis.
    ///
    /// Uses `rem_euclid`, then fixes the floating-point edge case where a
    /// tiny negative coordinate rounds up to exactly `L` (which would violate
    /// the half-open interval).
    pub fn wrap(&self, p: Vec3) -> Vec3 {
        Vec3::new(
            wrap_axis(p.x, self.extents.x),
            wrap_axis(p.y, self.extents.y),
            wrap_axis(p.z, self.extents.z),
        )
    }

    /// Minimum-image displacement `p_i - p_j`, component-wise in
    /// `[-L/2, L/2)`.
    ///
    /// Exactly antisymmetric except when a component lands on the `±L/2`
    /// boundary tie, which is measure-zero for physical data.
    pub fn min_image(&self, pi: Vec3, pj: Vec3) -> Vec3 {
        Vec3::new(
            min_image_axis(pi.x - pj.x, self.extents.x),
            min_image_axis(pi.y - pj.y, self.extents.y),
            min_image_axis(pi.z - pj.z, self.extents.z),
        )
    }

    /// Minimum-image distance between two points.
    pub fn distance(&self, pi: Vec3, pj: Vec3) -> f64 {
        self.min_image(pi, pj).norm()
    }
}

fn wrap_axis(x: f64, l: f64) -> f64 {
    let mut r = x.rem_euclid(l);
    // rem_euclid(-1e-17, 1.0) == 1.0 exactly; fold the edge back to 0.
    if r >= l {
        r -= l;
    }
    r
}

fn min_image_axis(d: f64, l: f64) -> f64 {
    let mut r = d - l * (d / l).round();
    // Round-to-even can leave r == +L/2 (e.g. d exactly +L/2) or, after the
    // subtraction rounds, marginally outside the half-open interval. Fold
    // the upper boundary down so the result is always in [-L/2, L/2).
    if r >= 0.5 * l {
        r -= l;
    }
    if r < -0.5 * l {
        r += l;
    }
    r
}
