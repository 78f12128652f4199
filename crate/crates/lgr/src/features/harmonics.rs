//! Real spherical harmonics up to degree 2 and steerable graph attributes.
//!
//! Coefficient layout is degree-major with orders `m = −l..l`:
//!
//! ```text
//! index  (l, m)   value on the unit vector (x, y, z)
//!     0  (0, 0)   0.2820947917738781
//!     1  (1,−1)   0.4886025119029199 · y
//!     2  (1, 0)   0.4886025119029199 · z
//!     3  (1, 1)   0.4886025119029199 · x
//!     4  (2,−2)   1.0925484305920792 · x·y
//!     5  (2,−1)   1.0925484305920792 · y·z
//!     6  (2, 0)   0.3153915652525200 · (3z² − 1)
//!     7  (2, 1)   1.0925484305920792 · x·z
//!     8  (2, 2)   0.5462742152960396 · (x² − y²)
//! ```
//!
//! The zero vector has no direction; its embedding keeps only the constant
//! degree-0 coefficient, with all higher degrees zero.

use ndarray::Array2;

use super::GraphSample;

/// `Y_00 = 1/(2√π)`.
pub const Y00: f64 = 0.2820947917738781;
const C1: f64 = 0.4886025119029199; // √(3/4π)
const C2A: f64 = 1.0925484305920792; // ½√(15/π)
const C2B: f64 = 0.31539156525252005; // ¼√(5/π)
const C2C: f64 = 0.5462742152960396; // ¼√(15/π)

/// Number of coefficients up to degree `l_max`: `(l_max + 1)²`.
pub const fn n_coefficients(l_max: usize) -> usize {
    (l_max + 1) * (l_max + 1)
}

/// Real spherical-harmonic embedding `V(v)` of the direction of `v`.
///
/// # Panics
/// Panics if `l_max > 2` (higher degrees are not implemented).
pub fn spherical_harmonics(v: crate::geom::Vec3, l_max: usize) -> Vec<f64> {
    assert!(l_max <= 2, "spherical harmonics implemented up to degree 2, got {l_max}");
    let mut out = vec![0.0; n_coefficients(l_max)];
    spherical_harmonics_into(v, l_max, &mut out);
    out
}

fn spherical_harmonics_into(v: crate::geom::Vec3, l_max: usize, out: &mut [f64]) {
    out[0] = Y00;
    let r = v.norm();
    if r == 0.0 {
        out[1..].fill(0.0);
        return;
    }
    let (x, y, z) = (v.x / r, v.y / r, v.z / r);
    if l_max >= 1 {
        out[1] = C1 * y;
        out[2] = C1 * z;
        out[3] = C1 * x;
    }
    if l_max >= 2 {
        out[4] = C2A * x * y;
        out[5] = C2A * y * z;
        out[6] = C2B * (3.0 * z * z - 1.0);
        out[7] = C2A * x * z;
        out[8] = C2C * (x * x - y * y);
    }
}

/// Per-degree power spectrum `Σ_m Y_{lm}²` of one coefficient vector.
pub fn power_spectrum(coefficients: &[f64]) -> Vec<f64> {
    let l_max = (coefficients.len() as f64).sqrt() as usize - 1;
    (0..=l_max)
        .map(|l| coefficients[l * l..(l + 1) * (l + 1)].iter().map(|c| c * c).sum())
        .collect()
}

/// Steerable attributes of one graph sample: `â_ij = V(p_ij)` per edge and
/// `â_i = V(mean past velocity of i) + Σ_{incoming edges} â_ij` per node.
#[derive(Clone, Debug)]
pub struct SteerableAttributes {
    pub l_max: usize,
    /// `E × (l_max+1)²` edge coefficients.
    pub edge: Array2<f64>,
    /// `N × (l_max+1)²` node coefficients.
    pub node: Array2<f64>,
}

pub fn steerable_attributes(sample: &GraphSample, l_max: usize) -> SteerableAttributes {
    let dim = n_coefficients(l_max);
    let mut edge = Array2::zeros((sample.edge_displacement.len(), dim));
    for (e, &d) in sample.edge_displacement.iter().enumerate() {
        spherical_harmonics_into(d, l_max, edge.row_mut(e).as_slice_mut().unwrap());
    }
    let mut node = Array2::zeros((sample.n_nodes, dim));
    for (i, &v) in sample.mean_history_velocity.iter().enumerate() {
        spherical_harmonics_into(v, l_max, node.row_mut(i).as_slice_mut().unwrap());
    }
    for (e, &recv) in sample.receivers.iter().enumerate() {
        let row = edge.row(e).to_owned();
        let mut target = node.row_mut(recv as usize);
        target += &row;
    }
    SteerableAttributes { l_max, edge, node }
}

/// Random-rotation helpers shared by this crate's equivariance tests.
#[cfg(test)]
pub(crate) mod test_rotations {
    use crate::geom::Vec3;
    use rand_chacha::ChaCha8Rng;
    use rand::Rng;
    use std::f64::consts::PI;

    /// Uniform rotation via a random unit quaternion (Shoemake).
    pub(crate) fn random_rotation(rng: &mut ChaCha8Rng) -> [[f64; 3]; 3] {
        let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
        let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
        let (s2, c2) = (2.0 * PI * u2).sin_cos();
        let (s3, c3) = (2.0 * PI * u3).sin_cos();
        let (w, x, y, z) = (a * s2, a * c2, b * s3, b * c3);
        [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ]
    }

    pub(crate) fn rotate(m: &[[f64; 3]; 3], v: Vec3) -> Vec3 {
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::test_rotations::{random_rotation, rotate};
    use super::*;
    use crate::geom::Vec3;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_vec(rng: &mut ChaCha8Rng) -> Vec3 {
        Vec3::new(
            rng.random::<f64>() - 0.5,
            rng.random::<f64>() - 0.5,
            rng.random::<f64>() - 0.5,
        )
    }

    #[test]
    fn unit_z_layout() {
        let c = spherical_harmonics(Vec3::new(0.0, 0.0, 1.0), 1);
        assert_eq!(c.len(), 4);
        assert_relative_eq!(c[0], Y00);
        assert_eq!(c[1], 0.0);
        assert_relative_eq!(c[2], C1);
        assert_eq!(c[3], 0.0);
    }

    #[test]
    fn zero_vector_keeps_degree_zero_only() {
        let c = spherical_harmonics(Vec3::ZERO, 2);
        assert_relative_eq!(c[0], Y00);
        assert!(c[1..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn magnitude_does_not_matter() {
        let v = Vec3::new(0.3, -0.4, 0.2);
        let a = spherical_harmonics(v, 2);
        let b = spherical_harmonics(v * 17.0, 2);
        for (x, y) in a.iter().zip(&b) {
            assert_relative_eq!(x, y, max_relative = 1e-12);
        }
    }

    #[test]
    fn addition_theorem_total_power() {
        // Σ_m Y_lm² = (2l+1)/(4π) on the unit sphere, independent of v.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let v = random_vec(&mut rng);
            let p = power_spectrum(&spherical_harmonics(v, 2));
            assert_relative_eq!(p[0], 1.0 / (4.0 * PI), max_relative = 1e-12);
            assert_relative_eq!(p[1], 3.0 / (4.0 * PI), max_relative = 1e-12);
            assert_relative_eq!(p[2], 5.0 / (4.0 * PI), max_relative = 1e-12);
        }
    }

    #[test]
    fn power_spectrum_rotation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let v = random_vec(&mut rng);
            let rot = random_rotation(&mut rng);
            let p = power_spectrum(&spherical_harmonics(v, 2));
            let q = power_spectrum(&spherical_harmonics(rotate(&rot, v), 2));
            for (a, b) in p.iter().zip(&q) {
                assert!((a - b).abs() < 1e-10, "spectrum changed: {a} vs {b}");
            }
        }
    }

    #[test]
    fn degree_one_is_rotation_equivariant() {
        // The (y, z, x) block reassembled as (x, y, z) transforms by R itself.
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let v = random_vec(&mut rng);
            if v.norm() < 1e-3 {
                continue;
            }
            let rot = random_rotation(&mut rng);
            let c = spherical_harmonics(v, 1);
            let cr = spherical_harmonics(rotate(&rot, v), 1);
            let block = Vec3::new(c[3], c[1], c[2]);
            let expected = rotate(&rot, block);
            let got = Vec3::new(cr[3], cr[1], cr[2]);
            assert!((expected - got).norm() < 1e-10);
        }
    }
}
