//! Auxiliary-loss curriculum: linear warmup, plateau, cosine anneal to zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurriculumSchedule {
    pub warmup_steps: usize,
    pub plateau_end_frac: f64,
    pub anneal_end_frac: f64,
    pub total_steps: usize,
}

impl CurriculumSchedule {
    pub fn new(total_steps: usize) -> Result<Self> {
        let s = Self {
            warmup_steps: 800,
            plateau_end_frac: 0.15,
            anneal_end_frac: 0.45,
            total_steps,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.warmup_steps == 0 {
            return Err(Error::Config("warmup must be at least one step".into()));
        }
        if !(0.0 < self.plateau_end_frac
            && self.plateau_end_frac < self.anneal_end_frac
            && self.anneal_end_frac <= 1.0)
        {
            return Err(Error::Config(format!(
                "need 0 < plateau end ({}) < anneal end ({}) <= 1",
                self.plateau_end_frac, self.anneal_end_frac
            )));
        }
        let plateau_end = self.plateau_end_frac * self.total_steps as f64;
        if self.warmup_steps as f64 >= plateau_end {
            return Err(Error::Config(format!(
                "warmup of {} steps does not end before the plateau ends at step {plateau_end} of {}",
                self.warmup_steps, self.total_steps
            )));
        }
        Ok(())
    }
}

/// `w_aux` at `step`. Steps past the end of training keep the final value 0.
pub fn curriculum_weight(step: usize, sched: &CurriculumSchedule) -> Result<f64> {
    sched.validate()?;
    let t = sched.total_steps as f64;
    let s = step as f64;
    let (plateau_end, anneal_end) = (sched.plateau_end_frac * t, sched.anneal_end_frac * t);
    Ok(if step < sched.warmup_steps {
        s / sched.warmup_steps as f64
    } else if s <= plateau_end {
        1.0
    } else if s < anneal_end {
        0.5 * (1.0 + (std::f64::consts::PI * (s - plateau_end) / (anneal_end - plateau_end)).cos())
    } else {
        0.0
    })
}
