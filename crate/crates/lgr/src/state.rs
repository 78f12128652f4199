//! Particle system snapshots and trajectories.

use thiserror::Error;

use crate::geom::{PeriodicBox, Vec3};

#[derive(Debug, Error)]
pub enum StateError {
    #[error("frame {frame} has {positions} positions but {velocities} velocities")]
    LengthMismatch { frame: usize, positions: usize, velocities: usize },
    #[error("trajectory has {masses} masses but frames carry {particles} particles")]
    MassCountMismatch { masses: usize, particles: usize },
    #[error("frame {frame} has {len} particles, expected {expected}")]
    ParticleCountChanged { frame: usize, len: usize, expected: usize },
    #[error("position {index} in frame {frame} lies outside the box")]
    PositionOutOfBox { frame: usize, index: usize },
    #[error("non-finite value at particle {index} in frame {frame}")]
    NonFinite { frame: usize, index: usize },
}

/// One snapshot of the particle system.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    /// Simulation time of this snapshot.
    pub time: f64,
    /// Particle positions, wrapped into the periodic box.
    pub positions: Vec<Vec3>,
    /// Particle velocities.
    pub velocities: Vec<Vec3>,
}

impl Frame {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// A sequence of frames sharing one periodic box, timestep and mass vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub domain: PeriodicBox,
    /// Time between stored frames (the solver may have taken finer steps).
    pub dt: f64,
    /// Per-particle masses; constant over the trajectory.
    pub masses: Vec<f64>,
    pub frames: Vec<Frame>,
}

impl Trajectory {
    pub fn n_particles(&self) -> usize {
        self.masses.len()
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    /// Checks the structural invariants; meant for I/O boundaries.
    pub fn validate(&self) -> Result<(), StateError> {
        let n = self.n_particles();
        let e = self.domain.extents();
        for (t, frame) in self.frames.iter().enumerate() {
            if frame.positions.len() != frame.velocities.len() {
                return Err(StateError::LengthMismatch {
                    frame: t,
                    positions: frame.positions.len(),
                    velocities: frame.velocities.len(),
                });
            }
            if frame.len() != n {
                return Err(StateError::ParticleCountChanged { frame: t, len: frame.len(), expected: n });
            }
            for (i, (&p, &v)) in frame.positions.iter().zip(&frame.velocities).enumerate() {
                if !p.is_finite() || !v.is_finite() {
                    return Err(StateError::NonFinite { frame: t, index: i });
                }
                let inside = p.x >= 0.0 && p.x < e.x && p.y >= 0.0 && p.y < e.y && p.z >= 0.0 && p.z < e.z;
                if !inside {
                    return Err(StateError::PositionOutOfBox { frame: t, index: i });
                }
            }
        }
        if let Some(f) = self.frames.first() {
            if f.len() != n {
                return Err(StateError::MassCountMismatch { masses: n, particles: f.len() });
            }
        }
        Ok(())
    }
}

/// Total kinetic energy `Σ ½ m_i |v_i|²` of one frame.
///
/// # Panics
/// Panics if `masses` and the frame disagree on particle count.
pub fn kinetic_energy(frame: &Frame, masses: &[f64]) -> f64 {
    assert_eq!(frame.len(), masses.len(), "frame/mass particle count mismatch");
    frame
        .velocities
        .iter()
        .zip(masses)
        .map(|(v, &m)| 0.5 * m * v.norm_sq())
        .sum()
}
