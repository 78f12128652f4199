//! Weakly-compressible SPH in the transport-velocity formulation.
//!
//! The solver follows Adami, Hu & Adams (2013): particles advect with a
//! transport velocity `ṽ = v + δv`, where `δv` comes from a constant
//! background pressure that keeps the particle distribution homogeneous.
//! The momentum equation carries the density-weighted symmetric pressure
//! force, an inter-particle-averaged viscous force, the convection
//! correction tensor `A = ρ v ⊗ δv`, and an optional external body force.
//!
//! Per step (symplectic Euler):
//!
//! ```text
//! ρ_i = Σ_j m_j W(|p_ij|)                 (density summation, j ∈ N(i) ∪ {i})
//! P_i = c0²(ρ_i − ρ0)                      (linear equation of state)
//! a_i = 1/m_i Σ_j (V_i²+V_j²)[−P̃_ij ∇W + ½(A_i+A_j)∇W + η̃_ij v_ij/r ∂W/∂r] + g_i
//! v ← v + dt·a;   δv = dt·a_bg;   p ← wrap(p + dt·(v + δv))
//! ```

mod init;
mod kernel;

pub use init::{init_reverse_poiseuille, init_taylor_green, taylor_green_velocity, CaseSetup};
pub use kernel::KernelSpec;

use rayon::prelude::*;
use thiserror::Error;

use crate::geom::{PeriodicBox, Vec3};
use crate::neighbor::{build_neighbor_list, NeighborError, NeighborList};
use crate::state::{Frame, Trajectory};

#[derive(Debug, Error)]
pub enum SphError {
    #[error("coincident particles (distance {distance:.3e}); kernel gradient undefined")]
    ZeroDistance { distance: f64 },
    #[error("simulation diverged at t={time}: max |v| = {max_velocity:.3e} exceeds 100·c0 = {limit:.3e}")]
    Diverged { time: f64, max_velocity: f64, limit: f64 },
    #[error("Taylor-Green initialization needs a perfect-cube particle count, got {n}")]
    NotACube { n: usize },
    #[error("reverse Poiseuille needs N = s³ with s even (lattice s × 2s × s/2), got {n}")]
    BadRpfCount { n: usize },
    #[error(transparent)]
    Neighbor(#[from] NeighborError),
}

/// Physical and numerical parameters of the solver.
#[derive(Clone, Copy, Debug)]
pub struct SphParams {
    /// Reference density.
    pub rho0: f64,
    /// Artificial speed of sound.
    pub c0: f64,
    /// Kinematic viscosity.
    pub nu: f64,
    /// Background pressure driving the transport-velocity correction.
    pub p_background: f64,
    /// Time step.
    pub dt: f64,
    /// External body force.
    pub external_force: ForceField,
}

impl Default for SphParams {
    /// Unit-density fluid at Re = 100 scale: `c0 = 10·U_ref`,
    /// `p_background = 5·ρ0·U_ref²`, `dt = 1e-3`.
    fn default() -> Self {
        SphParams {
            rho0: 1.0,
            c0: 10.0,
            nu: 0.01,
            p_background: 5.0,
            dt: 1e-3,
            external_force: ForceField::None,
        }
    }
}

impl SphParams {
    /// CFL-style acoustic time-step bound `0.25·h/c0`.
    pub fn cfl_limit(&self, kernel: &KernelSpec) -> f64 {
        0.25 * kernel.h() / self.c0
    }
}

/// Per-particle external acceleration field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ForceField {
    None,
    /// `+f0·x̂` in the lower half (`y < L_y/2`), `−f0·x̂` in the upper half.
    ReversePoiseuille { f0: f64 },
}

impl ForceField {
    pub fn acceleration(&self, p: Vec3, domain: &PeriodicBox) -> Vec3 {
        match *self {
            ForceField::None => Vec3::ZERO,
            ForceField::ReversePoiseuille { f0 } => {
                if p.y < 0.5 * domain.extents().y {
                    Vec3::new(f0, 0.0, 0.0)
                } else {
                    Vec3::new(-f0, 0.0, 0.0)
                }
            }
        }
    }

    pub fn f0(&self) -> f64 {
        match *self {
            ForceField::None => 0.0,
            ForceField::ReversePoiseuille { f0 } => f0,
        }
    }
}

/// Mutable solver state.
#[derive(Clone, Debug)]
pub struct SphState {
    pub time: f64,
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    /// Transport-velocity offset `δv = ṽ − v` from the previous step; feeds
    /// the convection tensor `A = ρ v ⊗ δv`.
    pub transport_shift: Vec<Vec3>,
    pub masses: Vec<f64>,
}

impl SphState {
    pub fn from_frame(frame: &Frame, masses: Vec<f64>) -> Self {
        assert_eq!(frame.len(), masses.len());
        SphState {
            time: frame.time,
            positions: frame.positions.clone(),
            velocities: frame.velocities.clone(),
            transport_shift: vec![Vec3::ZERO; frame.len()],
            masses,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn snapshot(&self) -> Frame {
        Frame {
            time: self.time,
            positions: self.positions.clone(),
            velocities: self.velocities.clone(),
        }
    }
}

/// SPH density summation `ρ_i = Σ_{j ∈ N(i) ∪ {i}} m_j W(|p_ij|)`.
pub fn density_summation(
    positions: &[Vec3],
    masses: &[f64],
    neighbors: &NeighborList,
    kernel: &KernelSpec,
    domain: &PeriodicBox,
) -> Vec<f64> {
    let w0 = kernel.w(0.0);
    positions
        .par_iter()
        .enumerate()
        .map(|(i, &pi)| {
            let mut rho = masses[i] * w0;
            for &j in neighbors.neighbors(i) {
                let j = j as usize;
                rho += masses[j] * kernel.w(domain.distance(pi, positions[j]));
            }
            rho
        })
        .collect()
}

/// Linear weakly-compressible equation of state `P = c0²(ρ − ρ0)`.
pub fn eos_pressure(rho: f64, params: &SphParams) -> f64 {
    params.c0 * params.c0 * (rho - params.rho0)
}

/// Output of [`momentum_rhs`]: the momentum-equation acceleration and the
/// background-pressure acceleration that advances the transport velocity.
#[derive(Clone, Debug)]
pub struct MomentumRhs {
    pub acceleration: Vec<Vec3>,
    pub background_acceleration: Vec<Vec3>,
}

/// Evaluates the transport-velocity momentum equation.
///
/// All pair terms are evaluated symmetrically, so contributions between `i`
/// and `j` cancel exactly and internal forces conserve momentum up to
/// reduction rounding.
pub fn momentum_rhs(
    state: &SphState,
    densities: &[f64],
    pressures: &[f64],
    neighbors: &NeighborList,
    params: &SphParams,
    kernel: &KernelSpec,
    domain: &PeriodicBox,
) -> Result<MomentumRhs, SphError> {
    let n = state.len();
    assert_eq!(densities.len(), n);
    assert_eq!(pressures.len(), n);

    // Particle volumes V_i = m_i/ρ_i and dynamic viscosities η_i = ρ_i·ν.
    let vol2: Vec<f64> = state
        .masses
        .iter()
        .zip(densities)
        .map(|(&m, &rho)| (m / rho) * (m / rho))
        .collect();
    let eta: Vec<f64> = densities.iter().map(|&rho| rho * params.nu).collect();
    let zero_threshold = 1e-12 * kernel.h();

    let per_particle: Result<Vec<(Vec3, Vec3)>, SphError> = (0..n)
        .into_par_iter()
        .map(|i| {
            let pi = state.positions[i];
            let vi = state.velocities[i];
            let mut f = Vec3::ZERO; // momentum force (to divide by m_i)
            let mut f_bg = Vec3::ZERO; // background-pressure force
            for &j in neighbors.neighbors(i) {
                let j = j as usize;
                let d = domain.min_image(pi, state.positions[j]);
                let r = d.norm();
                if r < zero_threshold {
                    return Err(SphError::ZeroDistance { distance: r });
                }
                let dwdr = kernel.dw_dr(r);
                let grad = d * (dwdr / r);
                let v2 = vol2[i] + vol2[j];

                // Density-weighted symmetric pressure.
                let p_tilde = (densities[j] * pressures[i] + densities[i] * pressures[j])
                    / (densities[i] + densities[j]);
                f -= grad * (v2 * p_tilde);

                // Convection correction ½(A_i + A_j)·∇W with A = ρ v ⊗ δv,
                // i.e. ½[ρ_i v_i (δv_i·∇W) + ρ_j v_j (δv_j·∇W)].
                let a_dot = densities[i] * state.transport_shift[i].dot(grad);
                let b_dot = densities[j] * state.transport_shift[j].dot(grad);
                f += (vi * a_dot + state.velocities[j] * b_dot) * (0.5 * v2);

                // Inter-particle-averaged shear force.
                let eta_tilde = 2.0 * eta[i] * eta[j] / (eta[i] + eta[j]);
                let vij = vi - state.velocities[j];
                f += vij * (v2 * eta_tilde * dwdr / r);

                // Constant background pressure, same symmetric pair form.
                f_bg -= grad * (v2 * params.p_background);
            }
            let inv_m = 1.0 / state.masses[i];
            let external = params.external_force.acceleration(pi, domain);
            Ok((f * inv_m + external, f_bg * inv_m))
        })
        .collect();

    let per_particle = per_particle?;
    let (acceleration, background_acceleration) = per_particle.into_iter().unzip();
    Ok(MomentumRhs { acceleration, background_acceleration })
}

/// Advances the state by one symplectic-Euler step, rebuilding the neighbor
/// list at the kernel support radius.
///
/// Warns (once per process) if `dt` exceeds the acoustic CFL bound
/// `0.25·h/c0`; errors with [`SphError::Diverged`] if any updated velocity
/// magnitude exceeds `100·c0`.
pub fn symplectic_euler_step(
    state: &mut SphState,
    params: &SphParams,
    kernel: &KernelSpec,
    domain: &PeriodicBox,
) -> Result<(), SphError> {
    static CFL_WARNING: std::sync::Once = std::sync::Once::new();
    if params.dt > params.cfl_limit(kernel) {
        CFL_WARNING.call_once(|| {
            log::warn!(
                "dt = {} exceeds the CFL bound 0.25·h/c0 = {}; expect instability",
                params.dt,
                params.cfl_limit(kernel)
            );
        });
    }

    let neighbors = build_neighbor_list(&state.positions, domain, kernel.support_radius())?;
    let densities = density_summation(&state.positions, &state.masses, &neighbors, kernel, domain);
    let pressures: Vec<f64> = densities.iter().map(|&rho| eos_pressure(rho, params)).collect();
    let rhs = momentum_rhs(state, &densities, &pressures, &neighbors, params, kernel, domain)?;

    let dt = params.dt;
    let limit = 100.0 * params.c0;
    let mut max_v2 = 0.0f64;
    for (v, a) in state.velocities.iter_mut().zip(&rhs.acceleration) {
        *v += *a * dt;
        max_v2 = max_v2.max(v.norm_sq());
    }
    if max_v2 > limit * limit {
        return Err(SphError::Diverged {
            time: state.time + dt,
            max_velocity: max_v2.sqrt(),
            limit,
        });
    }

    for i in 0..state.len() {
        let shift = rhs.background_acceleration[i] * dt;
        let transport_velocity = state.velocities[i] + shift;
        state.positions[i] = domain.wrap(state.positions[i] + transport_velocity * dt);
        state.transport_shift[i] = shift;
    }
    state.time += dt;
    Ok(())
}

/// Which flow to simulate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SimCase {
    TaylorGreen { k_multiple: u32, divergence_free: bool },
    ReversePoiseuille { f0: f64 },
}

/// Full description of one simulation run.
#[derive(Clone, Copy, Debug)]
pub struct SimConfig {
    pub case: SimCase,
    pub n_particles: usize,
    pub dt: f64,
    pub n_steps: usize,
    /// Store every k-th step (frame times are multiples of `k·dt`).
    pub subsample_every: usize,
    pub seed: u64,
    pub rho0: f64,
    pub c0: f64,
    pub nu: f64,
    pub p_background: f64,
    /// Smoothing length as a multiple of the lattice spacing.
    pub h_factor: f64,
    /// Lattice jitter amplitude as a fraction of the spacing.
    pub jitter: f64,
}

impl SimConfig {
    /// Taylor-Green vortex defaults: 1000 steps at dt = 1e-3, every frame
    /// stored.
    pub fn taylor_green(n_particles: usize, seed: u64) -> Self {
        SimConfig {
            case: SimCase::TaylorGreen { k_multiple: 1, divergence_free: false },
            n_particles,
            dt: 1e-3,
            n_steps: 1000,
            subsample_every: 1,
            seed,
            rho0: 1.0,
            c0: 10.0,
            nu: 0.01,
            p_background: 5.0,
            h_factor: 1.0,
            jitter: 0.05,
        }
    }

    /// Reverse-Poiseuille defaults: 120 000 steps at dt = 1e-3, every 10th
    /// frame stored.
    pub fn reverse_poiseuille(n_particles: usize, seed: u64) -> Self {
        SimConfig {
            case: SimCase::ReversePoiseuille { f0: 1.0 },
            n_steps: 120_000,
            subsample_every: 10,
            ..SimConfig::taylor_green(n_particles, seed)
        }
    }

    pub fn setup(&self) -> Result<CaseSetup, SphError> {
        match self.case {
            SimCase::TaylorGreen { k_multiple, divergence_free } => {
                init_taylor_green(self.n_particles, k_multiple, divergence_free, self.jitter, self.seed)
            }
            SimCase::ReversePoiseuille { f0 } => {
                init_reverse_poiseuille(self.n_particles, f0, self.jitter, self.seed)
            }
        }
    }

    pub fn params(&self, force: ForceField) -> SphParams {
        SphParams {
            rho0: self.rho0,
            c0: self.c0,
            nu: self.nu,
            p_background: self.p_background,
            dt: self.dt,
            external_force: force,
        }
    }
}

/// A finished simulation plus the case metadata needed to file it.
#[derive(Clone, Debug)]
pub struct SimulationRun {
    pub trajectory: Trajectory,
    pub case: SimCase,
    pub force: ForceField,
}

/// Runs a case end to end and collects the subsampled trajectory.
///
/// The stored trajectory has `n_steps / subsample_every` frames at spacing
/// `dt · subsample_every`; the initial condition itself is not stored.
pub fn run_simulation(config: &SimConfig) -> Result<SimulationRun, SphError> {
    assert!(config.subsample_every >= 1, "subsample_every must be ≥ 1");
    let setup = config.setup()?;
    let params = config.params(setup.force);
    let kernel = KernelSpec::new(config.h_factor * setup.dx);
    let n = setup.frame.len();
    let mass = config.rho0 * setup.domain.volume() / n as f64;
    let masses = vec![mass; n];

    let mut state = SphState::from_frame(&setup.frame, masses.clone());
    let n_stored = config.n_steps / config.subsample_every;
    let mut frames = Vec::with_capacity(n_stored);
    for step in 1..=config.n_steps {
        symplectic_euler_step(&mut state, &params, &kernel, &setup.domain)?;
        if step % config.subsample_every == 0 {
            frames.push(state.snapshot());
        }
    }

    Ok(SimulationRun {
        trajectory: Trajectory {
            domain: setup.domain,
            dt: config.dt * config.subsample_every as f64,
            masses,
            frames,
        },
        case: config.case,
        force: setup.force,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::kinetic_energy;
    use approx::assert_relative_eq;

    fn perfect_lattice_state(side: usize, velocity: Vec3) -> (SphState, KernelSpec, PeriodicBox) {
        let n = side * side * side;
        let setup = init_taylor_green(n, 1, false, 0.0, 0).unwrap();
        let mass = 1.0 / n as f64;
        let mut state = SphState::from_frame(&setup.frame, vec![mass; n]);
        state.velocities = vec![velocity; n];
        let kernel = KernelSpec::new(setup.dx);
        (state, kernel, setup.domain)
    }

    fn rhs_of(state: &SphState, params: &SphParams, kernel: &KernelSpec, domain: &PeriodicBox) -> MomentumRhs {
        let neighbors = build_neighbor_list(&state.positions, domain, kernel.support_radius()).unwrap();
        let densities = density_summation(&state.positions, &state.masses, &neighbors, kernel, domain);
        let pressures: Vec<f64> = densities.iter().map(|&r| eos_pressure(r, params)).collect();
        momentum_rhs(state, &densities, &pressures, &neighbors, params, kernel, domain).unwrap()
    }

    #[test]
    fn eos_examples() {
        let params = SphParams::default();
        assert_eq!(eos_pressure(1.0, &params), 0.0);
        assert_relative_eq!(eos_pressure(2.0, &params), 100.0);
        assert!(eos_pressure(1.2, &params) > eos_pressure(1.1, &params));
    }

    #[test]
    fn density_of_isolated_particle_is_self_contribution() {
        let domain = PeriodicBox::cube(10.0);
        let kernel = KernelSpec::new(1.0);
        let positions = [Vec3::splat(5.0)];
        let neighbors = build_neighbor_list(&positions, &domain, kernel.support_radius()).unwrap();
        let rho = density_summation(&positions, &[1.0], &neighbors, &kernel, &domain);
        assert_relative_eq!(rho[0], 66.0 / (120.0 * std::f64::consts::PI), max_relative = 1e-14);
    }

    #[test]
    fn lattice_density_close_to_reference() {
        let (state, kernel, domain) = perfect_lattice_state(8, Vec3::ZERO);
        let neighbors = build_neighbor_list(&state.positions, &domain, kernel.support_radius()).unwrap();
        let rho = density_summation(&state.positions, &state.masses, &neighbors, &kernel, &domain);
        for &r in &rho {
            assert!((r - 1.0).abs() < 0.02, "lattice density {r}");
        }
    }

    #[test]
    fn density_is_linear_in_mass() {
        let (state, kernel, domain) = perfect_lattice_state(6, Vec3::ZERO);
        let neighbors = build_neighbor_list(&state.positions, &domain, kernel.support_radius()).unwrap();
        let rho1 = density_summation(&state.positions, &state.masses, &neighbors, &kernel, &domain);
        let doubled: Vec<f64> = state.masses.iter().map(|m| 2.0 * m).collect();
        let rho2 = density_summation(&state.positions, &doubled, &neighbors, &kernel, &domain);
        for (a, b) in rho1.iter().zip(&rho2) {
            assert_eq!(2.0 * a, *b, "doubling mass must double density exactly");
        }
    }

    #[test]
    fn equilibrium_lattice_has_no_spurious_forces() {
        let (state, kernel, domain) = perfect_lattice_state(6, Vec3::new(0.3, -0.2, 0.9));
        let params = SphParams::default();
        let rhs = rhs_of(&state, &params, &kernel, &domain);
        let max_a = rhs.acceleration.iter().map(|a| a.norm()).fold(0.0f64, f64::max);
        assert!(max_a < 1e-8, "max |a| = {max_a}");
    }

    #[test]
    fn internal_forces_conserve_momentum() {
        let setup = init_taylor_green(216, 1, false, 0.05, 4).unwrap();
        let n = setup.frame.len();
        let mut state = SphState::from_frame(&setup.frame, vec![1.0 / n as f64; n]);
        // Give the convection term something to act on.
        state.transport_shift = state.positions.iter().map(|p| *p * 1e-3).collect();
        let params = SphParams::default();
        let kernel = KernelSpec::new(setup.dx);
        let rhs = rhs_of(&state, &params, &kernel, &setup.domain);
        let total: Vec3 = rhs
            .acceleration
            .iter()
            .zip(&state.masses)
            .map(|(&a, &m)| a * m)
            .fold(Vec3::ZERO, |acc, f| acc + f);
        let scale: f64 = rhs
            .acceleration
            .iter()
            .zip(&state.masses)
            .map(|(&a, &m)| m * a.norm())
            .sum();
        assert!(total.norm() < 1e-9 * scale, "net force {} vs scale {scale}", total.norm());
    }

    #[test]
    fn galilean_boost_leaves_internal_accelerations_unchanged() {
        let setup = init_taylor_green(216, 1, false, 0.05, 5).unwrap();
        let n = setup.frame.len();
        let params = SphParams::default();
        let kernel = KernelSpec::new(setup.dx);
        let state = SphState::from_frame(&setup.frame, vec![1.0 / n as f64; n]);
        let mut boosted = state.clone();
        let boost = Vec3::new(10.0, -5.0, 3.0);
        for v in &mut boosted.velocities {
            *v += boost;
        }
        let a = rhs_of(&state, &params, &kernel, &setup.domain);
        let b = rhs_of(&boosted, &params, &kernel, &setup.domain);
        let max_diff = a
            .acceleration
            .iter()
            .zip(&b.acceleration)
            .map(|(x, y)| (*x - *y).norm())
            .fold(0.0f64, f64::max);
        let scale = a.acceleration.iter().map(|x| x.norm()).fold(0.0f64, f64::max);
        assert!(max_diff < 1e-9 * scale.max(1.0), "boost changed accelerations by {max_diff}");
    }

    #[test]
    fn rpf_force_signs() {
        let domain = PeriodicBox::new(1.0, 2.0, 0.5);
        let force = ForceField::ReversePoiseuille { f0: 1.0 };
        assert_eq!(force.acceleration(Vec3::new(0.5, 0.5, 0.2), &domain), Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(force.acceleration(Vec3::new(0.5, 1.5, 0.2), &domain), Vec3::new(-1.0, 0.0, 0.0));
    }

    #[test]
    fn single_particle_advects() {
        let domain = PeriodicBox::cube(1.0);
        let kernel = KernelSpec::new(0.05);
        let params = SphParams { p_background: 0.0, ..SphParams::default() };
        let mut state = SphState {
            time: 0.0,
            positions: vec![Vec3::splat(0.5)],
            velocities: vec![Vec3::new(1.0, 2.0, -1.0)],
            transport_shift: vec![Vec3::ZERO],
            masses: vec![1.0],
        };
        symplectic_euler_step(&mut state, &params, &kernel, &domain).unwrap();
        let p = state.positions[0];
        assert_relative_eq!(p.x, 0.501, max_relative = 1e-12);
        assert_relative_eq!(p.y, 0.502, max_relative = 1e-12);
        assert_relative_eq!(p.z, 0.499, max_relative = 1e-12);
    }

    #[test]
    fn constant_external_force_accumulates_velocity() {
        let domain = PeriodicBox::new(1.0, 2.0, 0.5);
        let kernel = KernelSpec::new(0.05);
        let params = SphParams {
            external_force: ForceField::ReversePoiseuille { f0: 1.0 },
            ..SphParams::default()
        };
        let mut state = SphState {
            time: 0.0,
            positions: vec![Vec3::new(0.5, 0.5, 0.25)],
            velocities: vec![Vec3::ZERO],
            transport_shift: vec![Vec3::ZERO],
            masses: vec![1.0],
        };
        for step in 1..=3 {
            symplectic_euler_step(&mut state, &params, &kernel, &domain).unwrap();
            assert_relative_eq!(state.velocities[0].x, step as f64 * 1e-3, max_relative = 1e-12);
        }
    }

    #[test]
    fn momentum_drift_stays_tiny_over_100_steps() {
        let mut config = SimConfig::taylor_green(216, 2);
        config.n_steps = 100;
        let setup = config.setup().unwrap();
        let params = config.params(ForceField::None);
        let kernel = KernelSpec::new(setup.dx);
        let n = setup.frame.len();
        let mut state = SphState::from_frame(&setup.frame, vec![1.0 / n as f64; n]);
        let momentum = |s: &SphState| -> Vec3 {
            s.velocities.iter().zip(&s.masses).map(|(&v, &m)| v * m).fold(Vec3::ZERO, |a, p| a + p)
        };
        let scale: f64 = state
            .velocities
            .iter()
            .zip(&state.masses)
            .map(|(&v, &m)| m * v.norm())
            .sum();
        let p0 = momentum(&state);
        for _ in 0..100 {
            symplectic_euler_step(&mut state, &params, &kernel, &setup.domain).unwrap();
        }
        let drift = (momentum(&state) - p0).norm();
        assert!(drift < 1e-8 * scale, "momentum drift {drift} vs scale {scale}");
    }

    #[test]
    fn short_tgv_run_is_stable_and_homogeneous() {
        let mut config = SimConfig::taylor_green(216, 0);
        config.n_steps = 200;
        let run = run_simulation(&config).unwrap();
        assert_eq!(run.trajectory.n_frames(), 200);
        run.trajectory.validate().unwrap();

        // Transport velocity keeps the SPH density field near ρ0 throughout.
        let kernel = KernelSpec::new(1.0 / 6.0);
        for frame in run.trajectory.frames.iter().step_by(50) {
            let neighbors =
                build_neighbor_list(&frame.positions, &run.trajectory.domain, kernel.support_radius())
                    .unwrap();
            let rho = density_summation(
                &frame.positions,
                &run.trajectory.masses,
                &neighbors,
                &kernel,
                &run.trajectory.domain,
            );
            for &r in &rho {
                assert!((r - 1.0).abs() < 0.2, "density {r} far from ρ0 at t={}", frame.time);
            }
        }
    }

    #[test]
    fn run_simulation_frame_bookkeeping() {
        let mut config = SimConfig::taylor_green(64, 0);
        config.n_steps = 10;
        config.subsample_every = 2;
        // A 4³ lattice needs a smaller support than min_extent/2 allows with
        // h = dx; shrink h accordingly for this bookkeeping-only test.
        config.h_factor = 0.65;
        let run = run_simulation(&config).unwrap();
        assert_eq!(run.trajectory.n_frames(), 5);
        assert_relative_eq!(run.trajectory.dt, 2e-3);
        assert_relative_eq!(run.trajectory.frames[0].time, 2e-3, max_relative = 1e-12);

        config.n_steps = 1;
        config.subsample_every = 1;
        let run = run_simulation(&config).unwrap();
        assert_eq!(run.trajectory.n_frames(), 1);
        assert_relative_eq!(run.trajectory.frames[0].time, 1e-3, max_relative = 1e-12);
    }

    #[test]
    fn tgv_kinetic_energy_eventually_decays() {
        let mut config = SimConfig::taylor_green(216, 1);
        config.n_steps = 300;
        let run = run_simulation(&config).unwrap();
        let masses = &run.trajectory.masses;
        let e_first = kinetic_energy(&run.trajectory.frames[0], masses);
        let e_last = kinetic_energy(run.trajectory.frames.last().unwrap(), masses);
        assert!(e_last < e_first, "viscosity must dissipate energy: {e_first} → {e_last}");
    }
}
