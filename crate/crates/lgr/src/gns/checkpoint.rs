//! Model checkpoints: a binary container for the architecture spec,
//! feature configuration, normalization statistics, optimizer state and the
//! raw `f64` parameters.
//!
//! Layout (all little-endian), version 1:
//!
//! ```text
//! magic "LGCK"  version u32
//! latent u32  blocks u32  hidden_layers u32
//! history u32  force_concat u32  radius f64  noise_std f64
//! norm stats: vel_mean ×3, vel_std ×3, acc_mean ×3, acc_std ×3 (f64)
//! adam: lr_init f64  lr_final f64  decay_steps u64  beta1 f64  beta2 f64  eps f64
//! step u64  n_params u64
//! params ×n  m ×n  v ×n (f64)
//! ```
//!
//! Round trips are bit-exact: floats are stored as raw IEEE-754 bits.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::features::{FeatureConfig, NormStats};

use super::adam::{AdamConfig, AdamState};
use super::{GnsError, GnsModel, GnsSpec};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"LGCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Writes model and optimizer to `path`.
pub fn save_checkpoint(model: &GnsModel, adam: &AdamState, path: &Path) -> Result<(), GnsError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;

    let spec = model.spec();
    for v in [spec.latent, spec.blocks, spec.hidden_layers] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    let fc = model.feature_config();
    w.write_all(&(fc.history as u32).to_le_bytes())?;
    w.write_all(&(fc.force_concat as u32).to_le_bytes())?;
    w.write_all(&fc.radius.to_le_bytes())?;
    w.write_all(&fc.noise_std.to_le_bytes())?;

    let n = model.norm_stats();
    for group in [&n.vel_mean, &n.vel_std, &n.acc_mean, &n.acc_std] {
        for v in group {
            w.write_all(&v.to_le_bytes())?;
        }
    }

    let c = adam.config();
    w.write_all(&c.lr_init.to_le_bytes())?;
    w.write_all(&c.lr_final.to_le_bytes())?;
    w.write_all(&c.decay_steps.to_le_bytes())?;
    w.write_all(&c.beta1.to_le_bytes())?;
    w.write_all(&c.beta2.to_le_bytes())?;
    w.write_all(&c.eps.to_le_bytes())?;
    w.write_all(&adam.step().to_le_bytes())?;

    w.write_all(&(model.param_count() as u64).to_le_bytes())?;
    let (m, v) = adam.moments();
    for buf in [model.params(), m, v] {
        for x in buf {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a checkpoint back. When `expected_spec` is given, the stored
/// architecture must match it exactly.
pub fn load_checkpoint(
    path: &Path,
    expected_spec: Option<&GnsSpec>,
) -> Result<(GnsModel, AdamState), GnsError> {
    let mut r = Reader { inner: BufReader::new(File::open(path)?) };

    let magic = r.bytes::<4>()?;
    if magic != CHECKPOINT_MAGIC {
        return Err(GnsError::CorruptCheckpoint(format!("bad magic {magic:?}")));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(GnsError::CorruptCheckpoint(format!(
            "version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }

    let spec = GnsSpec {
        latent: r.u32()? as usize,
        blocks: r.u32()? as usize,
        hidden_layers: r.u32()? as usize,
    };
    if let Some(expected) = expected_spec {
        if *expected != spec {
            return Err(GnsError::SpecMismatch(format!("expected {expected:?}, found {spec:?}")));
        }
    }
    let history = r.u32()? as usize;
    let force_concat = match r.u32()? {
        0 => false,
        1 => true,
        other => return Err(GnsError::CorruptCheckpoint(format!("force_concat flag = {other}"))),
    };
    let features = FeatureConfig { history, radius: r.f64()?, noise_std: r.f64()?, force_concat };

    let mut groups = [[0.0; 3]; 4];
    for g in &mut groups {
        for v in g.iter_mut() {
            *v = r.f64()?;
        }
    }
    let norm = NormStats {
        vel_mean: groups[0],
        vel_std: groups[1],
        acc_mean: groups[2],
        acc_std: groups[3],
    };

    let config = AdamConfig {
        lr_init: r.f64()?,
        lr_final: r.f64()?,
        decay_steps: r.u64()?,
        beta1: r.f64()?,
        beta2: r.f64()?,
        eps: r.f64()?,
    };
    let step = r.u64()?;

    let n_params = r.u64()? as usize;
    let mut read_buf = |n: usize| -> Result<Vec<f64>, GnsError> {
        (0..n).map(|_| r.f64()).collect()
    };
    let params = read_buf(n_params)?;
    let m = read_buf(n_params)?;
    let v = read_buf(n_params)?;

    let model = GnsModel::from_parts(spec, features, norm, params).map_err(|e| match e {
        // A parameter count inconsistent with the stored spec means the
        // payload itself is damaged, not that the caller asked wrongly.
        GnsError::ShapeMismatch { expected, found } => GnsError::CorruptCheckpoint(format!(
            "stored spec needs {expected}, payload has {found}"
        )),
        other => other,
    })?;
    Ok((model, AdamState::from_parts(config, step, m, v)))
}

struct Reader {
    inner: BufReader<File>,
}

impl Reader {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N], GnsError> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                GnsError::CorruptCheckpoint("file truncated".into())
            } else {
                GnsError::Io(e)
            }
        })?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32, GnsError> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn u64(&mut self) -> Result<u64, GnsError> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn f64(&mut self) -> Result<f64, GnsError> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureConfig, NormStats};
    use tempfile::tempdir;

    fn example_model() -> (GnsModel, AdamState) {
        let spec = GnsSpec { latent: 8, blocks: 2, hidden_layers: 1 };
        let norm = NormStats {
            vel_mean: [0.1, -0.2, 0.3],
            vel_std: [1.5, 2.5, 3.5],
            acc_mean: [0.01, 0.02, -0.03],
            acc_std: [0.9, 0.8, 0.7],
        };
        let model = GnsModel::new(spec, FeatureConfig::new(0.25), norm, 42).unwrap();
        let mut adam = AdamState::new(model.param_count(), AdamConfig::default());
        // Touch the optimizer so moments and step are nonzero.
        let mut params = model.params().to_vec();
        let grads: Vec<f64> = (0..params.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        adam.apply(&mut params, &grads);
        adam.apply(&mut params, &grads);
        let model = GnsModel::from_parts(spec, *model.feature_config(), norm, params).unwrap();
        (model, adam)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.lgck");
        let (model, adam) = example_model();
        save_checkpoint(&model, &adam, &path).unwrap();
        let (loaded, adam2) = load_checkpoint(&path, Some(model.spec())).unwrap();

        assert_eq!(loaded.params(), model.params());
        assert_eq!(loaded.spec(), model.spec());
        assert_eq!(loaded.feature_config(), model.feature_config());
        assert_eq!(loaded.norm_stats(), model.norm_stats());
        assert_eq!(adam2, adam);

        // Same weights ⇒ bitwise-identical predictions.
        let sample = {
            use ndarray::Array2;
            let nd = model.feature_config().node_feature_dim();
            crate::features::GraphSample {
                n_nodes: 3,
                senders: vec![1, 2, 0],
                receivers: vec![0, 1, 2],
                node_features: Array2::from_shape_fn((3, nd), |(i, j)| ((i * 31 + j) as f64).sin()),
                edge_features: Array2::from_shape_fn((3, 4), |(i, j)| ((i + 7 * j) as f64).cos()),
                targets: Array2::zeros((3, 3)),
                edge_displacement: vec![crate::geom::Vec3::ZERO; 3],
                mean_history_velocity: vec![crate::geom::Vec3::ZERO; 3],
                position_noise: vec![crate::geom::Vec3::ZERO; 3],
                frame_index: None,
            }
        };
        assert_eq!(model.forward(&sample).unwrap(), loaded.forward(&sample).unwrap());
    }

    #[test]
    fn mismatched_latent_width_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.lgck");
        let (model, adam) = example_model();
        save_checkpoint(&model, &adam, &path).unwrap();
        let other = GnsSpec { latent: 16, ..*model.spec() };
        assert!(matches!(
            load_checkpoint(&path, Some(&other)),
            Err(GnsError::SpecMismatch(_))
        ));
        // Without an expectation the stored spec wins.
        let (loaded, _) = load_checkpoint(&path, None).unwrap();
        assert_eq!(loaded.spec(), model.spec());
    }

    #[test]
    fn corrupt_and_truncated_files_are_reported() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.lgck");
        let (model, adam) = example_model();
        save_checkpoint(&model, &adam, &path).unwrap();

        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(
            load_checkpoint(&path, None),
            Err(GnsError::CorruptCheckpoint(_))
        ));

        let mut garbled = bytes;
        garbled[0] = b'X';
        std::fs::write(&path, &garbled).unwrap();
        assert!(matches!(
            load_checkpoint(&path, None),
            Err(GnsError::CorruptCheckpoint(_))
        ));
    }
}
