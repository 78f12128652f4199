//! Quintic-spline smoothing kernel with compact support `3h`.
//!
//! `W(r) = σ · f(r/h)` with the 3D normalization `σ = 1/(120π h³)` and
//!
//! ```text
//! f(q) = (3−q)⁵ − 6(2−q)⁵ + 15(1−q)⁵   0 ≤ q < 1
//!      = (3−q)⁵ − 6(2−q)⁵              1 ≤ q < 2
//!      = (3−q)⁵                        2 ≤ q < 3
//!      = 0                             q ≥ 3
//! ```

use crate::geom::Vec3;

use super::SphError;

/// Smoothing length plus precomputed normalization.
#[derive(Clone, Copy, Debug)]
pub struct KernelSpec {
    h: f64,
    sigma: f64,
}

impl KernelSpec {
    /// # Panics
    /// Panics if `h` is not strictly positive and finite.
    pub fn new(h: f64) -> Self {
        assert!(h > 0.0 && h.is_finite(), "smoothing length must be positive, got {h}");
        KernelSpec { h, sigma: 1.0 / (120.0 * std::f64::consts::PI * h.powi(3)) }
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn support_radius(&self) -> f64 {
        3.0 * self.h
    }

    /// Kernel value `W(r)`; zero at and beyond the support radius.
    pub fn w(&self, r: f64) -> f64 {
        debug_assert!(r >= 0.0);
        // Compare against 3h directly: r/h can round to just under 3 at the
        // support boundary, which must evaluate to exactly zero.
        if r >= 3.0 * self.h {
            return 0.0;
        }
        self.sigma * quintic(r / self.h)
    }

    /// Radial derivative `dW/dr`; zero at and beyond the support radius.
    pub fn dw_dr(&self, r: f64) -> f64 {
        debug_assert!(r >= 0.0);
        if r >= 3.0 * self.h {
            return 0.0;
        }
        self.sigma / self.h * quintic_deriv(r / self.h)
    }

    /// Kernel gradient `∇W = (dW/dr) · r_vec/|r_vec|`.
    ///
    /// Errors with [`SphError::ZeroDistance`] for (numerically) coincident
    /// particles, where the direction is undefined.
    pub fn grad(&self, r_vec: Vec3) -> Result<Vec3, SphError> {
        let r = r_vec.norm();
        if r < 1e-12 * self.h {
            return Err(SphError::ZeroDistance { distance: r });
        }
        Ok(r_vec * (self.dw_dr(r) / r))
    }
}

fn quintic(q: f64) -> f64 {
    if q >= 3.0 {
        return 0.0;
    }
    let mut f = (3.0 - q).powi(5);
    if q < 2.0 {
        f -= 6.0 * (2.0 - q).powi(5);
    }
    if q < 1.0 {
        f += 15.0 * (1.0 - q).powi(5);
    }
    f
}

fn quintic_deriv(q: f64) -> f64 {
    if q >= 3.0 {
        return 0.0;
    }
    let mut d = (3.0 - q).powi(4);
    if q < 2.0 {
        d -= 6.0 * (2.0 - q).powi(4);
    }
    if q < 1.0 {
        d += 15.0 * (1.0 - q).powi(4);
    }
    -5.0 * d
}
