//! CSV writers for the evaluation outputs: per-step metric curves and
//! per-particle field slices, both meant for external plotting.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{EvalError, RolloutReport};
use crate::geom::PeriodicBox;
use crate::state::Frame;

/// Writes the per-step metric curves: header plus one row per rollout
/// step. The `sinkhorn` field is empty on steps it was not sampled at.
pub fn write_metrics_csv(path: &Path, report: &RolloutReport) -> Result<(), EvalError> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "step,mse_p,e_kin_pred,e_kin_ref,sinkhorn")?;
    let mut sampled = report.sinkhorn.iter().peekable();
    for k in 0..report.n_steps() {
        let step = k + 1;
        let sinkhorn = match sampled.peek() {
            Some(&&(s, v)) if s == step => {
                sampled.next();
                format!("{v:.12e}")
            }
            _ => String::new(),
        };
        writeln!(
            out,
            "{step},{:.12e},{:.12e},{:.12e},{sinkhorn}",
            report.mse_p[k], report.e_kin_pred[k], report.e_kin_ref[k]
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Writes one row per particle of a predicted frame: position, velocity,
/// speed, and the minimum-image distance to the same particle in the
/// reference frame.
pub fn write_field_slice_csv(
    path: &Path,
    pred: &Frame,
    reference: &Frame,
    domain: &PeriodicBox,
) -> Result<(), EvalError> {
    if pred.len() != reference.len() {
        return Err(EvalError::ShapeMismatch { expected: reference.len(), found: pred.len() });
    }
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "x,y,z,vx,vy,vz,v_mag,pos_error")?;
    for i in 0..pred.len() {
        let p = pred.positions[i];
        let v = pred.velocities[i];
        let err = domain.min_image(p, reference.positions[i]).norm();
        writeln!(
            out,
            "{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}",
            p.x,
            p.y,
            p.z,
            v.x,
            v.y,
            v.z,
            v.norm(),
            err
        )?;
    }
    out.flush()?;
    Ok(())
}
