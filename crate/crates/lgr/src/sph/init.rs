//! Initial conditions for the two flow cases.
//!
//! Both cases start from a jittered cubic lattice: Taylor-Green vortex (TGV)
//! in the unit box with an analytic velocity field, reverse Poiseuille flow
//! (RPF) in a `(1, 2, 0.5)` box at rest under an antisymmetric body force.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::geom::{PeriodicBox, Vec3};
use crate::state::Frame;

use super::{ForceField, SphError};

/// Everything the solver needs that is case-specific.
#[derive(Clone, Debug)]
pub struct CaseSetup {
    pub domain: PeriodicBox,
    pub frame: Frame,
    pub force: ForceField,
    /// Lattice spacing (equals the average interparticle distance here).
    pub dx: f64,
}

/// Taylor-Green velocity field.
///
/// `variant_as_printed` is
/// `u = −cos(kx)cos(ky)cos(kz), v = sin(kx)cos(ky)cos(kz), w = 0`;
/// the divergence-free variant is the classical
/// `u = sin(kx)cos(ky)cos(kz), v = −cos(kx)sin(ky)cos(kz), w = 0`.
pub fn taylor_green_velocity(p: Vec3, k: f64, divergence_free: bool) -> Vec3 {
    let (sx, cx) = (k * p.x).sin_cos();
    let (sy, cy) = (k * p.y).sin_cos();
    let cz = (k * p.z).cos();
    if divergence_free {
        Vec3::new(sx * cy * cz, -cx * sy * cz, 0.0)
    } else {
        Vec3::new(-cx * cy * cz, sx * cy * cz, 0.0)
    }
}

/// Places `N = n³` particles on a jittered lattice in the unit box and
/// samples the Taylor-Green field (wavenumber `k_multiple · 2π`) at each
/// position.
pub fn init_taylor_green(
    n: usize,
    k_multiple: u32,
    divergence_free: bool,
    jitter: f64,
    seed: u64,
) -> Result<CaseSetup, SphError> {
    assert!(k_multiple >= 1, "wavenumber multiple must be ≥ 1");
    let side = exact_cube_root(n).ok_or(SphError::NotACube { n })?;
    let domain = PeriodicBox::cube(1.0);
    let dx = 1.0 / side as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions = jittered_lattice([side, side, side], &domain, jitter, &mut rng);
    let k = k_multiple as f64 * std::f64::consts::TAU;
    let velocities = positions
        .iter()
        .map(|&p| taylor_green_velocity(p, k, divergence_free))
        .collect();
    Ok(CaseSetup {
        domain,
        frame: Frame { time: 0.0, positions, velocities },
        force: ForceField::None,
        dx,
    })
}

/// Places `N = n³` particles (n even) at rest on a jittered lattice filling
/// the `(1, 2, 0.5)` box, with the reverse-Poiseuille body force `±f0·x̂`
/// switching sign at the half height.
pub fn init_reverse_poiseuille(
    n: usize,
    f0: f64,
    jitter: f64,
    seed: u64,
) -> Result<CaseSetup, SphError> {
    // Equal spacing in a (1, 2, 0.5) box needs counts (s, 2s, s/2), so the
    // total is s³ with s even.
    let side = exact_cube_root(n).filter(|s| s % 2 == 0).ok_or(SphError::BadRpfCount { n })?;
    let domain = PeriodicBox::new(1.0, 2.0, 0.5);
    let dx = 1.0 / side as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions = jittered_lattice([side, 2 * side, side / 2], &domain, jitter, &mut rng);
    let n_total = positions.len();
    Ok(CaseSetup {
        domain,
        frame: Frame {
            time: 0.0,
            positions,
            velocities: vec![Vec3::ZERO; n_total],
        },
        force: ForceField::ReversePoiseuille { f0 },
        dx,
    })
}

/// Cell-centered lattice with per-axis uniform jitter in `[−j·dx, j·dx]`.
///
/// Draw order is particle-major then x, y, z, so a seed pins the exact
/// configuration.
fn jittered_lattice(
    counts: [usize; 3],
    domain: &PeriodicBox,
    jitter: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec3> {
    assert!((0.0..0.5).contains(&jitter), "jitter must be in [0, 0.5), got {jitter}");
    let e = domain.extents();
    let d = [
        e.x / counts[0] as f64,
        e.y / counts[1] as f64,
        e.z / counts[2] as f64,
    ];
    let mut positions = Vec::with_capacity(counts[0] * counts[1] * counts[2]);
    for iz in 0..counts[2] {
        for iy in 0..counts[1] {
            for ix in 0..counts[0] {
                let base = Vec3::new(
                    (ix as f64 + 0.5) * d[0],
                    (iy as f64 + 0.5) * d[1],
                    (iz as f64 + 0.5) * d[2],
                );
                let p = if jitter > 0.0 {
                    base + Vec3::new(
                        rng.random_range(-jitter..=jitter) * d[0],
                        rng.random_range(-jitter..=jitter) * d[1],
                        rng.random_range(-jitter..=jitter) * d[2],
                    )
                } else {
                    base
                };
                positions.push(domain.wrap(p));
            }
        }
    }
    positions
}

fn exact_cube_root(n: usize) -> Option<usize> {
    if n == 0 {
        return None;
    }
    let side = (n as f64).cbrt().round() as usize;
    (side * side * side == n).then_some(side)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::TAU;

    #[test]
    fn printed_field_examples() {
        let v = taylor_green_velocity(Vec3::ZERO, TAU, false);
        assert_relative_eq!(v.x, -1.0);
        assert_relative_eq!(v.y, 0.0);
        assert_eq!(v.z, 0.0);

        let v = taylor_green_velocity(Vec3::new(0.25, 0.0, 0.0), TAU, false);
        assert_relative_eq!(v.x, 0.0, epsilon = 1e-15);
        assert_relative_eq!(v.y, 1.0);
        assert_eq!(v.z, 0.0);
    }

    #[test]
    fn w_component_identically_zero() {
        for variant in [false, true] {
            let setup = init_taylor_green(216, 1, variant, 0.05, 3).unwrap();
            assert!(setup.frame.velocities.iter().all(|v| v.z == 0.0));
        }
    }

    #[test]
    fn divergence_free_variant_has_zero_divergence() {
        // Central finite-difference divergence at random points.
        let k = TAU;
        let eps = 1e-5;
        for i in 0..50 {
            let p = Vec3::new(
                (i as f64 * 0.137).fract(),
                (i as f64 * 0.291).fract(),
                (i as f64 * 0.613).fract(),
            );
            let div = |variant: bool| {
                let dudx = (taylor_green_velocity(p + Vec3::new(eps, 0.0, 0.0), k, variant).x
                    - taylor_green_velocity(p - Vec3::new(eps, 0.0, 0.0), k, variant).x)
                    / (2.0 * eps);
                let dvdy = (taylor_green_velocity(p + Vec3::new(0.0, eps, 0.0), k, variant).y
                    - taylor_green_velocity(p - Vec3::new(0.0, eps, 0.0), k, variant).y)
                    / (2.0 * eps);
                dudx + dvdy
            };
            assert!(div(true).abs() < 1e-4, "divergence-free variant at {p:?}");
        }
    }

    #[test]
    fn non_cube_count_rejected() {
        assert!(matches!(
            init_taylor_green(10, 1, false, 0.05, 0),
            Err(SphError::NotACube { n: 10 })
        ));
    }

    #[test]
    fn rpf_lattice_spacing_matches_tgv() {
        let setup = init_reverse_poiseuille(8000, 1.0, 0.0, 0).unwrap();
        assert_relative_eq!(setup.dx, 0.05);
        assert_eq!(setup.frame.len(), 8000);
        assert_eq!(setup.domain.extents(), Vec3::new(1.0, 2.0, 0.5));
        assert!(setup.frame.velocities.iter().all(|&v| v == Vec3::ZERO));
    }

    #[test]
    fn rpf_net_force_is_zero_for_balanced_halves() {
        let setup = init_reverse_poiseuille(1728, 1.0, 0.0, 0).unwrap();
        let lower = setup.frame.positions.iter().filter(|p| p.y < 1.0).count();
        assert_eq!(lower * 2, setup.frame.len());
        let net: Vec3 = setup
            .frame
            .positions
            .iter()
            .map(|&p| setup.force.acceleration(p, &setup.domain))
            .fold(Vec3::ZERO, |acc, a| acc + a);
        assert_eq!(net, Vec3::ZERO);
    }

    #[test]
    fn odd_cube_rpf_count_rejected() {
        // 3375 = 15³ but 15 is odd, so the (s, 2s, s/2) lattice fails.
        assert!(matches!(
            init_reverse_poiseuille(3375, 1.0, 0.05, 0),
            Err(SphError::BadRpfCount { n: 3375 })
        ));
    }

    #[test]
    fn jitter_stays_within_bounds() {
        let setup = init_taylor_green(512, 1, false, 0.05, 9).unwrap();
        let dx = setup.dx;
        let side = 8;
        for (i, p) in setup.frame.positions.iter().enumerate() {
            let ix = i % side;
            let iy = i / side % side;
            let iz = i / (side * side);
            let base = Vec3::new(
                (ix as f64 + 0.5) * dx,
                (iy as f64 + 0.5) * dx,
                (iz as f64 + 0.5) * dx,
            );
            let d = setup.domain.min_image(*p, base);
            for a in 0..3 {
                assert!(d[a].abs() <= 0.05 * dx + 1e-12, "particle {i} axis {a}");
            }
        }
    }

    #[test]
    fn seeds_give_distinct_configurations() {
        let a = init_taylor_green(216, 1, false, 0.05, 0).unwrap();
        let b = init_taylor_green(216, 1, false, 0.05, 1).unwrap();
        assert_ne!(a.frame.positions, b.frame.positions);
        let a2 = init_taylor_green(216, 1, false, 0.05, 0).unwrap();
        assert_eq!(a.frame.positions, a2.frame.positions);
    }
}
