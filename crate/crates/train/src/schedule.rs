//! Learning-rate schedule: linear warmup then cosine decay to zero.

use crate::{Result, TrainError};

pub fn lr_schedule(step: usize, total_steps: usize, warmup_ratio: f64, peak_lr: f64) -> Result<f64> {
    if total_steps == 0 {
        return Err(TrainError::ZeroSteps);
    }
    if step > total_steps {
        return Err(TrainError::StepRange { step, total: total_steps });
    }
    let warmup = (warmup_ratio * total_steps as f64).ceil() as usize;
    if step < warmup {
        return Ok(peak_lr * step as f64 / warmup as f64);
    }
    let span = total_steps - warmup;
    if span == 0 {
        return Ok(peak_lr);
    }
    let progress = (step - warmup) as f64 / span as f64;
    Ok(0.5 * peak_lr * (1.0 + (std::f64::consts::PI * progress).cos()))
}
