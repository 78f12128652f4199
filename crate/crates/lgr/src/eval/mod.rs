//! Autoregressive rollout and its evaluation measures: per-step position
//! MSE, kinetic-energy MSE, sampled Sinkhorn divergence, CSV export and
//! inference timing.
//!
//! A rollout advances particle positions in normalized finite-difference
//! units, mirroring the training targets: per step the predictor maps the
//! current graph sample to normalized accelerations, which are
//! denormalized and integrated semi-implicitly (`ṽ ← ṽ + a`,
//! `p ← wrap(p + ṽ)`), and the graph is rebuilt from the new positions.

pub mod export;
pub mod sinkhorn;

use std::time::Instant;

use ndarray::Array2;
use thiserror::Error;

use crate::features::{build_inference_sample, FeatureConfig, FeatureError, GraphSample, NormStats};
use crate::geom::{PeriodicBox, Vec3};
use crate::gns::{GnsError, GnsModel};
use crate::sph::ForceField;
use crate::state::{kinetic_energy, Frame, Trajectory};

pub use export::{write_field_slice_csv, write_metrics_csv};
pub use sinkhorn::{default_eps, entropic_ot_value, sinkhorn_divergence, SinkhornParams, SinkhornResult};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("rollout diverged at step {step}: |ṽ| = {velocity:.3e} exceeds {limit:.3e}")]
    Diverged { step: usize, velocity: f64, limit: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Model(#[from] GnsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Anything that maps a graph sample to normalized accelerations: the
/// learned model, the zero baseline, or a ground-truth oracle.
pub trait Predictor {
    fn predict(&self, sample: &GraphSample) -> Result<Array2<f64>, EvalError>;
}

impl Predictor for GnsModel {
    fn predict(&self, sample: &GraphSample) -> Result<Array2<f64>, EvalError> {
        Ok(self.forward(sample)?)
    }
}

/// Predicts zero acceleration: rollout degenerates to constant-velocity
/// advection. The baseline every learned model is measured against.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroPredictor;

impl Predictor for ZeroPredictor {
    fn predict(&self, sample: &GraphSample) -> Result<Array2<f64>, EvalError> {
        Ok(Array2::zeros((sample.n_nodes, 3)))
    }
}

/// Reads the true normalized acceleration of the sampled frame from a
/// reference trajectory — the identity oracle for pipeline tests.
pub struct OraclePredictor<'a> {
    pub trajectory: &'a Trajectory,
    pub stats: NormStats,
}

impl Predictor for OraclePredictor<'_> {
    fn predict(&self, sample: &GraphSample) -> Result<Array2<f64>, EvalError> {
        let t = sample.frame_index.ok_or_else(|| {
            EvalError::InvalidInput("oracle predictor needs the sample's frame index".into())
        })?;
        if t == 0 || t + 1 >= self.trajectory.n_frames() {
            return Err(EvalError::InvalidInput(format!(
                "oracle frame {t} outside reference trajectory"
            )));
        }
        if sample.n_nodes != self.trajectory.n_particles() {
            return Err(EvalError::ShapeMismatch {
                expected: self.trajectory.n_particles(),
                found: sample.n_nodes,
            });
        }
        let domain = &self.trajectory.domain;
        let frames = &self.trajectory.frames;
        let mut out = Array2::zeros((sample.n_nodes, 3));
        for i in 0..sample.n_nodes {
            let v_now = domain.min_image(frames[t].positions[i], frames[t - 1].positions[i]);
            let v_next = domain.min_image(frames[t + 1].positions[i], frames[t].positions[i]);
            let a = self.stats.normalize_acceleration(v_next - v_now);
            out[[i, 0]] = a.x;
            out[[i, 1]] = a.y;
            out[[i, 2]] = a.z;
        }
        Ok(out)
    }
}

/// The position window a rollout starts from: `H+1` frames, oldest first.
#[derive(Clone, Debug)]
pub struct RolloutInit {
    pub positions: Vec<Vec<Vec3>>,
    /// Index of the window's last frame within the source trajectory.
    pub start_frame: usize,
    /// Physical time of the window's last frame.
    pub time: f64,
}

impl RolloutInit {
    /// Window taken from the start of a trajectory.
    pub fn from_trajectory(traj: &Trajectory, history: usize) -> Result<Self, EvalError> {
        Self::from_trajectory_at(traj, history, 0)
    }

    /// Window `first_frame .. first_frame + H + 1`; predictions then align
    /// with reference frames from `first_frame + H + 1` on.
    pub fn from_trajectory_at(
        traj: &Trajectory,
        history: usize,
        first_frame: usize,
    ) -> Result<Self, EvalError> {
        let end = first_frame + history + 1;
        if end > traj.n_frames() {
            return Err(EvalError::InvalidInput(format!(
                "rollout window {first_frame}..{end} exceeds the {}-frame trajectory",
                traj.n_frames()
            )));
        }
        Ok(RolloutInit {
            positions: traj.frames[first_frame..end].iter().map(|f| f.positions.clone()).collect(),
            start_frame: end - 1,
            time: traj.frames[end - 1].time,
        })
    }
}

/// Rollout controls. Feature noise is always disabled at inference.
#[derive(Clone, Copy, Debug)]
pub struct RolloutConfig {
    pub n_steps: usize,
    pub features: FeatureConfig,
    pub stats: NormStats,
    /// Time step the window's finite differences are measured in.
    pub dt_stored: f64,
    /// Divergence guard: abort when any particle's per-step displacement
    /// exceeds this multiple of the training velocity scale `‖vel_std‖`.
    pub max_velocity_factor: f64,
}

impl RolloutConfig {
    pub fn new(n_steps: usize, features: FeatureConfig, stats: NormStats, dt_stored: f64) -> Self {
        RolloutConfig { n_steps, features, stats, dt_stored, max_velocity_factor: 1e3 }
    }
}

/// Rolls the predictor out autoregressively for `n_steps`, returning the
/// predicted frames (`start_frame + 1 ..= start_frame + n_steps` in
/// reference numbering). Frame velocities hold the physical estimate
/// `ṽ / dt_stored`, matching the dataset reader convention.
pub fn rollout(
    predictor: &dyn Predictor,
    domain: &PeriodicBox,
    force: &ForceField,
    init: &RolloutInit,
    config: &RolloutConfig,
    masses: &[f64],
) -> Result<Trajectory, EvalError> {
    let fc = FeatureConfig { noise_std: 0.0, ..config.features };
    if init.positions.len() != fc.history + 1 {
        return Err(EvalError::InvalidInput(format!(
            "rollout window holds {} frames, feature history needs {}",
            init.positions.len(),
            fc.history + 1
        )));
    }
    let n = init.positions[0].len();
    if masses.len() != n {
        return Err(EvalError::ShapeMismatch { expected: n, found: masses.len() });
    }
    let vel_scale = Vec3::from_array(config.stats.vel_std).norm();
    let limit = config.max_velocity_factor * vel_scale;

    let mut window = init.positions.clone();
    let mut velocity: Vec<Vec3> = {
        let (last, prev) = (&window[fc.history], &window[fc.history - 1]);
        last.iter().zip(prev).map(|(&p, &q)| domain.min_image(p, q)).collect()
    };

    let mut frames = Vec::with_capacity(config.n_steps);
    for step in 0..config.n_steps {
        let mut sample =
            build_inference_sample(&window, domain, config.dt_stored, force, &fc, &config.stats)?;
        sample.frame_index = Some(init.start_frame + step);
        let acc = predictor.predict(&sample)?;
        if acc.nrows() != n || acc.ncols() != 3 {
            return Err(EvalError::ShapeMismatch { expected: n * 3, found: acc.nrows() * acc.ncols() });
        }

        let prev = window.last().unwrap().clone();
        let mut positions = Vec::with_capacity(n);
        let mut worst = 0.0f64;
        for i in 0..n {
            let a = config
                .stats
                .denormalize_acceleration(Vec3::new(acc[[i, 0]], acc[[i, 1]], acc[[i, 2]]));
            velocity[i] += a;
            worst = worst.max(velocity[i].norm());
            positions.push(domain.wrap(prev[i] + velocity[i]));
        }
        if worst > limit {
            return Err(EvalError::Diverged { step: step + 1, velocity: worst, limit });
        }

        frames.push(Frame {
            time: init.time + (step + 1) as f64 * config.dt_stored,
            positions: positions.clone(),
            velocities: velocity.iter().map(|&v| v / config.dt_stored).collect(),
        });
        window.rotate_left(1);
        *window.last_mut().unwrap() = positions;
    }

    Ok(Trajectory { domain: *domain, dt: config.dt_stored, masses: masses.to_vec(), frames })
}

/// Mean over particles and components of the squared minimum-image
/// displacement between two frames.
pub fn mse_positions(pred: &Frame, reference: &Frame, domain: &PeriodicBox) -> Result<f64, EvalError> {
    if pred.len() != reference.len() {
        return Err(EvalError::ShapeMismatch { expected: reference.len(), found: pred.len() });
    }
    if pred.is_empty() {
        return Err(EvalError::InvalidInput("position MSE of empty frames".into()));
    }
    let sum: f64 = pred
        .positions
        .iter()
        .zip(&reference.positions)
        .map(|(&p, &r)| domain.min_image(p, r).norm_sq())
        .sum();
    Ok(sum / (3 * pred.len()) as f64)
}

/// Mean over steps of the squared kinetic-energy difference.
pub fn mse_kinetic_energy(pred: &Trajectory, reference: &Trajectory) -> Result<f64, EvalError> {
    if pred.n_frames() != reference.n_frames() {
        return Err(EvalError::ShapeMismatch { expected: reference.n_frames(), found: pred.n_frames() });
    }
    if pred.n_frames() == 0 {
        return Err(EvalError::InvalidInput("kinetic-energy MSE of empty trajectories".into()));
    }
    let sum: f64 = pred
        .frames
        .iter()
        .zip(&reference.frames)
        .map(|(p, r)| {
            let d = kinetic_energy(p, &pred.masses) - kinetic_energy(r, &reference.masses);
            d * d
        })
        .sum();
    Ok(sum / pred.n_frames() as f64)
}

/// Per-step metric curves plus their summary scalars.
#[derive(Clone, Debug)]
pub struct RolloutReport {
    /// Position MSE per predicted step.
    pub mse_p: Vec<f64>,
    /// Kinetic energy of the prediction per step.
    pub e_kin_pred: Vec<f64>,
    /// Kinetic energy of the reference per step.
    pub e_kin_ref: Vec<f64>,
    /// Sinkhorn divergence at sampled steps `(step, value)`, 1-based.
    pub sinkhorn: Vec<(usize, f64)>,
    /// How many sampled Sinkhorn evaluations hit the iteration cap.
    pub sinkhorn_unconverged: usize,
    /// Mean of `mse_p` over the rollout window.
    pub mse_p_mean: f64,
    /// Mean squared kinetic-energy error.
    pub mse_e_kin: f64,
    /// Mean of the sampled Sinkhorn values (0 when none were sampled).
    pub sinkhorn_mean: f64,
    /// Median wall-clock per rollout step in milliseconds, when measured.
    pub ms_per_step: Option<f64>,
}

impl RolloutReport {
    pub fn n_steps(&self) -> usize {
        self.mse_p.len()
    }
}

/// Compares a predicted trajectory against the aligned reference window,
/// evaluating the Sinkhorn divergence every `sinkhorn_every` steps
/// (0 disables it).
pub fn evaluate_rollout(
    pred: &Trajectory,
    reference: &Trajectory,
    sinkhorn_every: usize,
    params: &SinkhornParams,
) -> Result<RolloutReport, EvalError> {
    if pred.n_frames() != reference.n_frames() {
        return Err(EvalError::ShapeMismatch { expected: reference.n_frames(), found: pred.n_frames() });
    }
    let mut mse_p = Vec::with_capacity(pred.n_frames());
    let mut e_kin_pred = Vec::with_capacity(pred.n_frames());
    let mut e_kin_ref = Vec::with_capacity(pred.n_frames());
    let mut sinkhorn = Vec::new();
    let mut sinkhorn_unconverged = 0;
    for (k, (p, r)) in pred.frames.iter().zip(&reference.frames).enumerate() {
        mse_p.push(mse_positions(p, r, &pred.domain)?);
        e_kin_pred.push(kinetic_energy(p, &pred.masses));
        e_kin_ref.push(kinetic_energy(r, &reference.masses));
        let step = k + 1;
        if sinkhorn_every > 0 && step % sinkhorn_every == 0 {
            let res = sinkhorn_divergence(&p.positions, &r.positions, &pred.domain, params)?;
            if !res.converged {
                sinkhorn_unconverged += 1;
            }
            sinkhorn.push((step, res.value));
        }
    }
    let mse_p_mean = mse_p.iter().sum::<f64>() / mse_p.len().max(1) as f64;
    let mse_e_kin = mse_kinetic_energy(pred, reference)?;
    let sinkhorn_mean = if sinkhorn.is_empty() {
        0.0
    } else {
        sinkhorn.iter().map(|&(_, v)| v).sum::<f64>() / sinkhorn.len() as f64
    };
    Ok(RolloutReport {
        mse_p,
        e_kin_pred,
        e_kin_ref,
        sinkhorn,
        sinkhorn_unconverged,
        mse_p_mean,
        mse_e_kin,
        sinkhorn_mean,
        ms_per_step: None,
    })
}

/// Median wall-clock milliseconds of one rollout step (graph build plus
/// predictor forward), after `warmup` unmeasured runs.
pub fn measure_inference_time(
    predictor: &dyn Predictor,
    domain: &PeriodicBox,
    force: &ForceField,
    init: &RolloutInit,
    config: &RolloutConfig,
    n_repeats: usize,
    warmup: usize,
) -> Result<f64, EvalError> {
    let fc = FeatureConfig { noise_std: 0.0, ..config.features };
    let mut times = Vec::with_capacity(n_repeats);
    for rep in 0..warmup.max(3) + n_repeats.max(1) {
        let start = Instant::now();
        let sample =
            build_inference_sample(&init.positions, domain, config.dt_stored, force, &fc, &config.stats)?;
        let acc = predictor.predict(&sample)?;
        let elapsed = start.elapsed().as_secs_f64() * 1e3;
        // Keep the prediction alive so the measured work cannot be elided.
        std::hint::black_box(&acc);
        if rep >= warmup.max(3) {
            times.push(elapsed);
        }
    }
    times.sort_unstable_by(f64::total_cmp);
    let n = times.len();
    Ok(if n % 2 == 1 { times[n / 2] } else { 0.5 * (times[n / 2 - 1] + times[n / 2]) })
}

/// Owned copy of `n` frames of a trajectory starting at `start` — the
/// reference window a rollout is scored against.
pub fn reference_window(traj: &Trajectory, start: usize, n: usize) -> Result<Trajectory, EvalError> {
    if start + n > traj.n_frames() {
        return Err(EvalError::InvalidInput(format!(
            "reference window {start}..{} exceeds the {}-frame trajectory",
            start + n,
            traj.n_frames()
        )));
    }
    Ok(Trajectory {
        domain: traj.domain,
        dt: traj.dt,
        masses: traj.masses.clone(),
        frames: traj.frames[start..start + n].to_vec(),
    })
}
