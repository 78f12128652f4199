//! Training samples from trajectory windows.
//!
//! All learned-model quantities live in **finite-difference units**: a
//! "velocity" is the per-frame displacement `ṽ^t = p^t ⊖ p^{t−1}` (minimum
//! image, *not* divided by dt) and an "acceleration" is the second
//! difference `ṽ^{t+1} − ṽ^t`. This matches the autoregressive update
//! `p^{t+1} = p^t + ṽ^t + a^t` exactly, with no timestep bookkeeping.
//!
//! A sample at frame `t` packs:
//! - a radius graph over (noised) positions at `t`, both edge orientations;
//! - node features: the H most recent velocities, noise-perturbed and
//!   normalized, optionally followed by the external force vector;
//! - edge features: minimum-image displacement / radius and distance/radius;
//! - targets: normalized accelerations consistent with the noised inputs,
//!   so the model learns to correct integration noise.
//!
//! Noise follows a random-walk schedule: i.i.d. Gaussian increments of std
//! `noise_std/√H` accumulate over the H history velocities (total std
//! `noise_std` at the last one), and the implied position offset shifts the
//! graph positions.

pub mod harmonics;

pub use harmonics::{n_coefficients, power_spectrum, spherical_harmonics, steerable_attributes, SteerableAttributes};

use std::ops::Range;

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::geom::{PeriodicBox, Vec3};
use crate::neighbor::{build_neighbor_list, NeighborError};
use crate::sph::ForceField;
use crate::state::Trajectory;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("frame {t} out of range; need history ≤ t ≤ n_frames−2, i.e. [{min}, {max}]")]
    FrameOutOfRange { t: usize, min: usize, max: usize },
    #[error("split selects no usable frames; cannot compute statistics")]
    EmptySplit,
    #[error(transparent)]
    Neighbor(#[from] NeighborError),
}

/// How samples are built; shared between training and rollout.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureConfig {
    /// Number of past velocities H.
    pub history: usize,
    /// Graph connectivity radius.
    pub radius: f64,
    /// Accumulated random-walk noise std on the last velocity (0 disables).
    pub noise_std: f64,
    /// Concatenate the external force vector to the node features.
    pub force_concat: bool,
}

impl FeatureConfig {
    pub fn new(radius: f64) -> Self {
        FeatureConfig { history: 5, radius, noise_std: 6.7e-4, force_concat: false }
    }

    pub fn node_feature_dim(&self) -> usize {
        3 * self.history + if self.force_concat { 3 } else { 0 }
    }

    pub const EDGE_FEATURE_DIM: usize = 4;
}

/// Smallest std kept after flooring (guards division by ~0 for constant
/// components).
pub const STD_FLOOR: f64 = 1e-8;

/// Per-component normalization statistics of the training split.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormStats {
    pub vel_mean: [f64; 3],
    pub vel_std: [f64; 3],
    pub acc_mean: [f64; 3],
    pub acc_std: [f64; 3],
}

impl NormStats {
    /// Means 0, stds 1: normalization becomes the identity.
    pub fn identity() -> Self {
        NormStats { vel_mean: [0.0; 3], vel_std: [1.0; 3], acc_mean: [0.0; 3], acc_std: [1.0; 3] }
    }

    pub fn normalize_velocity(&self, v: Vec3) -> Vec3 {
        Vec3::new(
            (v.x - self.vel_mean[0]) / self.vel_std[0],
            (v.y - self.vel_mean[1]) / self.vel_std[1],
            (v.z - self.vel_mean[2]) / self.vel_std[2],
        )
    }

    pub fn normalize_acceleration(&self, a: Vec3) -> Vec3 {
        Vec3::new(
            (a.x - self.acc_mean[0]) / self.acc_std[0],
            (a.y - self.acc_mean[1]) / self.acc_std[1],
            (a.z - self.acc_mean[2]) / self.acc_std[2],
        )
    }

    pub fn denormalize_acceleration(&self, a: Vec3) -> Vec3 {
        Vec3::new(
            a.x * self.acc_std[0] + self.acc_mean[0],
            a.y * self.acc_std[1] + self.acc_mean[1],
            a.z * self.acc_std[2] + self.acc_mean[2],
        )
    }
}

/// One training/inference sample: a graph plus feature matrices.
#[derive(Clone, Debug)]
pub struct GraphSample {
    pub n_nodes: usize,
    /// Edge endpoints; edge `e` carries a message `senders[e] → receivers[e]`.
    /// Edges are grouped by receiver in ascending order.
    pub senders: Vec<u32>,
    pub receivers: Vec<u32>,
    /// `N × (3H [+3])` normalized node features.
    pub node_features: Array2<f64>,
    /// `E × 4` edge features.
    pub edge_features: Array2<f64>,
    /// `N × 3` normalized target accelerations (zero for inference samples).
    pub targets: Array2<f64>,
    /// Raw minimum-image displacement `p_receiver − p_sender` per edge.
    pub edge_displacement: Vec<Vec3>,
    /// Raw mean of the H (noised) history velocities per node.
    pub mean_history_velocity: Vec<Vec3>,
    /// Accumulated position offset applied by the noise schedule.
    pub position_noise: Vec<Vec3>,
    /// Source frame index for training samples.
    pub frame_index: Option<usize>,
}

impl GraphSample {
    pub fn n_edges(&self) -> usize {
        self.senders.len()
    }
}

/// Accumulates per-component mean/std of velocities and accelerations over
/// trajectory frame ranges (the training split), in finite-difference units.
pub fn compute_norm_stats(
    windows: &[(&Trajectory, Range<usize>)],
) -> Result<NormStats, FeatureError> {
    let mut vel = ComponentStats::default();
    let mut acc = ComponentStats::default();
    for (traj, range) in windows {
        let end = range.end.min(traj.n_frames());
        let velocity_at = |t: usize| -> Vec<Vec3> {
            let (prev, cur) = (&traj.frames[t - 1].positions, &traj.frames[t].positions);
            cur.iter().zip(prev).map(|(&p, &q)| traj.domain.min_image(p, q)).collect()
        };
        for t in range.start + 1..end {
            let v = velocity_at(t);
            for &x in &v {
                vel.push(x);
            }
            if t + 1 < end {
                for (&v1, &v0) in velocity_at(t + 1).iter().zip(&v) {
                    acc.push(v1 - v0);
                }
            }
        }
    }
    if vel.count == 0 || acc.count == 0 {
        return Err(FeatureError::EmptySplit);
    }
    Ok(NormStats {
        vel_mean: vel.mean(),
        vel_std: vel.std(),
        acc_mean: acc.mean(),
        acc_std: acc.std(),
    })
}

#[derive(Default)]
struct ComponentStats {
    sum: [f64; 3],
    sum_sq: [f64; 3],
    count: u64,
}

impl ComponentStats {
    fn push(&mut self, v: Vec3) {
        for (k, x) in v.to_array().into_iter().enumerate() {
            self.sum[k] += x;
            self.sum_sq[k] += x * x;
        }
        self.count += 1;
    }

    fn mean(&self) -> [f64; 3] {
        self.sum.map(|s| s / self.count as f64)
    }

    fn std(&self) -> [f64; 3] {
        let n = self.count as f64;
        std::array::from_fn(|k| {
            let var = (self.sum_sq[k] / n - (self.sum[k] / n).powi(2)).max(0.0);
            var.sqrt().max(STD_FLOOR)
        })
    }
}

/// Builds the training sample at frame `t` of a trajectory.
///
/// Needs `history ≤ t ≤ n_frames − 2`: H velocities looking back, one frame
/// ahead for the target. The caller's `rng` drives the noise schedule
/// (draw order: particle-major, then history step, then xyz).
pub fn build_sample(
    traj: &Trajectory,
    force: &ForceField,
    t: usize,
    config: &FeatureConfig,
    stats: &NormStats,
    rng: &mut ChaCha8Rng,
) -> Result<GraphSample, FeatureError> {
    let h = config.history;
    if t < h || t + 2 > traj.n_frames() {
        return Err(FeatureError::FrameOutOfRange {
            t,
            min: h,
            max: traj.n_frames().saturating_sub(2),
        });
    }
    let n = traj.n_particles();
    let domain = &traj.domain;

    // H raw velocities ending at frame t, then the noise random walk.
    let mut velocity_history: Vec<Vec<Vec3>> = (t - h + 1..=t)
        .map(|s| {
            let (prev, cur) = (&traj.frames[s - 1].positions, &traj.frames[s].positions);
            cur.iter().zip(prev).map(|(&p, &q)| domain.min_image(p, q)).collect()
        })
        .collect();

    let mut position_noise = vec![Vec3::ZERO; n];
    if config.noise_std > 0.0 {
        let inc_std = config.noise_std / (h as f64).sqrt();
        for i in 0..n {
            let mut walk = Vec3::ZERO;
            for step in velocity_history.iter_mut() {
                let inc = Vec3::new(
                    rng.sample::<f64, _>(StandardNormal),
                    rng.sample::<f64, _>(StandardNormal),
                    rng.sample::<f64, _>(StandardNormal),
                ) * inc_std;
                walk += inc;
                step[i] += walk;
                position_noise[i] += walk;
            }
        }
    }

    let current: Vec<Vec3> = traj.frames[t]
        .positions
        .iter()
        .zip(&position_noise)
        .map(|(&p, &xi)| domain.wrap(p + xi))
        .collect();

    let mut sample = assemble_sample(
        domain,
        traj.dt,
        &current,
        &velocity_history,
        Some(&traj.frames[t + 1].positions),
        force,
        config,
        stats,
    )?;
    sample.position_noise = position_noise;
    sample.frame_index = Some(t);
    Ok(sample)
}

/// Builds an inference sample from a raw window of H+1 position frames
/// (oldest first); no noise, zero targets.
pub fn build_inference_sample(
    position_window: &[Vec<Vec3>],
    domain: &PeriodicBox,
    dt_stored: f64,
    force: &ForceField,
    config: &FeatureConfig,
    stats: &NormStats,
) -> Result<GraphSample, FeatureError> {
    assert_eq!(
        position_window.len(),
        config.history + 1,
        "inference window must hold history+1 position frames"
    );
    let velocity_history: Vec<Vec<Vec3>> = position_window
        .windows(2)
        .map(|w| w[1].iter().zip(&w[0]).map(|(&p, &q)| domain.min_image(p, q)).collect())
        .collect();
    assemble_sample(
        domain,
        dt_stored,
        position_window.last().unwrap(),
        &velocity_history,
        None,
        force,
        config,
        stats,
    )
}

/// Shared graph/feature assembly on prepared (possibly noised) inputs.
#[allow(clippy::too_many_arguments)]
fn assemble_sample(
    domain: &PeriodicBox,
    dt_stored: f64,
    current: &[Vec3],
    velocity_history: &[Vec<Vec3>],
    next_positions: Option<&[Vec3]>,
    force: &ForceField,
    config: &FeatureConfig,
    stats: &NormStats,
) -> Result<GraphSample, FeatureError> {
    let n = current.len();
    let h = config.history;
    assert_eq!(velocity_history.len(), h);

    let neighbors = build_neighbor_list(current, domain, config.radius)?;
    let n_edges = neighbors.n_edges();
    let mut senders = Vec::with_capacity(n_edges);
    let mut receivers = Vec::with_capacity(n_edges);
    let mut edge_displacement = Vec::with_capacity(n_edges);
    let mut edge_features = Array2::zeros((n_edges, FeatureConfig::EDGE_FEATURE_DIM));
    let mut e = 0;
    for i in 0..n {
        for &j in neighbors.neighbors(i) {
            let d = domain.min_image(current[i], current[j as usize]);
            senders.push(j);
            receivers.push(i as u32);
            edge_features[[e, 0]] = d.x / config.radius;
            edge_features[[e, 1]] = d.y / config.radius;
            edge_features[[e, 2]] = d.z / config.radius;
            edge_features[[e, 3]] = d.norm() / config.radius;
            edge_displacement.push(d);
            e += 1;
        }
    }

    let mut node_features = Array2::zeros((n, config.node_feature_dim()));
    let mut mean_history_velocity = vec![Vec3::ZERO; n];
    for i in 0..n {
        let mut mean = Vec3::ZERO;
        for (k, step) in velocity_history.iter().enumerate() {
            mean += step[i];
            let v = stats.normalize_velocity(step[i]);
            node_features[[i, 3 * k]] = v.x;
            node_features[[i, 3 * k + 1]] = v.y;
            node_features[[i, 3 * k + 2]] = v.z;
        }
        mean_history_velocity[i] = mean / h as f64;
        if config.force_concat {
            // Physical acceleration converted to finite-difference units
            // (·dt², a pure scale), then whitened by the target stds alone:
            // a force is directional, so no mean shift.
            let f = force.acceleration(current[i], domain) * (dt_stored * dt_stored);
            node_features[[i, 3 * h]] = f.x / stats.acc_std[0];
            node_features[[i, 3 * h + 1]] = f.y / stats.acc_std[1];
            node_features[[i, 3 * h + 2]] = f.z / stats.acc_std[2];
        }
    }

    let mut targets = Array2::zeros((n, 3));
    if let Some(next) = next_positions {
        let last = velocity_history.last().unwrap();
        for i in 0..n {
            let next_velocity = domain.min_image(next[i], current[i]);
            let a = stats.normalize_acceleration(next_velocity - last[i]);
            targets[[i, 0]] = a.x;
            targets[[i, 1]] = a.y;
            targets[[i, 2]] = a.z;
        }
    }

    Ok(GraphSample {
        n_nodes: n,
        senders,
        receivers,
        node_features,
        edge_features,
        targets,
        edge_displacement,
        mean_history_velocity,
        position_noise: vec![Vec3::ZERO; n],
        frame_index: None,
    })
}
