use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Slack when comparing sample timestamps with `t - tau`, so that times
/// built as `k * dt` land on the intended sample despite rounding.
const TIME_SLACK: f64 = 1e-9;

/// Pure transport delay with zero-order hold.
///
/// Each call pushes the sample taken at `t` and returns the newest sample
/// whose timestamp is at or before `t - tau`. Until such a sample exists the
/// very first sample is held.
#[derive(Debug, Clone)]
pub struct DelayLine {
    tau: f64,
    buffer: VecDeque<(f64, Vec<f64>)>,
    initial: Option<Vec<f64>>,
    last_t: Option<f64>,
}

impl DelayLine {
    pub fn new(tau: f64) -> Result<Self> {
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(Error::validation(format!("delay must be non-negative, got {tau}")));
        }
        Ok(DelayLine {
            tau,
            buffer: VecDeque::new(),
            initial: None,
            last_t: None,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn apply_delay(&mut self, t: f64, sample: &[f64]) -> Result<Vec<f64>> {
        if let Some(last) = self.last_t {
            if t < last {
                return Err(Error::Usage(format!(
                    "delay line queried backwards in time ({t} after {last})"
                )));
            }
        }
        self.last_t = Some(t);
        if self.initial.is_none() {
            self.initial = Some(sample.to_vec());
        }
        self.buffer.push_back((t, sample.to_vec()));

        let cutoff = t - self.tau + TIME_SLACK * t.abs().max(1.0);
        // keep exactly one sample at or before the cutoff at the front
        while self.buffer.len() > 1 && self.buffer[1].0 <= cutoff {
            self.buffer.pop_front();
        }
        match self.buffer.front() {
            Some((ts, s)) if *ts <= cutoff => Ok(s.clone()),
            _ => Ok(self.initial.clone().unwrap_or_default()),
        }
    }
}
