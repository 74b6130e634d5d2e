//! Time series of observables shared by every propagator.

use crate::error::{Error, Result};
use crate::model::whole_steps;

/// One recorded time. Diagnostics that a method cannot produce are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub time: f64,
    pub n_imp: [f64; 2],
    pub n_electrons: f64,
    /// `|⟨1|ρ⟩ − 1|`.
    pub trace_dev: Option<f64>,
    pub herm_dev: Option<f64>,
    /// Cumulative discarded weight of the truncated propagator.
    pub discarded_weight: Option<f64>,
}

impl TrajectorySample {
    pub fn n_total(&self) -> f64 {
        self.n_imp[0] + self.n_imp[1]
    }

    pub fn polarization(&self) -> f64 {
        self.n_imp[0] - self.n_imp[1]
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryRecord {
    samples: Vec<TrajectorySample>,
}

impl TrajectoryRecord {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a sample; timestamps must increase strictly.
    pub fn push(&mut self, sample: TrajectorySample) {
        if let Some(last) = self.samples.last() {
            assert!(
                sample.time > last.time,
                "non-increasing timestamp {} after {}",
                sample.time,
                last.time
            );
        }
        self.samples.push(sample);
    }

    pub fn samples(&self) -> &[TrajectorySample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> Option<&TrajectorySample> {
        self.samples.last()
    }

    /// Sample closest to `t`.
    pub fn at(&self, t: f64) -> Option<&TrajectorySample> {
        self.samples
            .iter()
            .min_by(|a, b| (a.time - t).abs().total_cmp(&(b.time - t).abs()))
    }
}

/// Step count and record stride for a fixed-step run.
pub(crate) fn schedule(t_final: f64, dt: f64, record_interval: f64) -> Result<(usize, usize)> {
    let steps = whole_steps(t_final, dt).ok_or_else(|| Error::InvalidConfig {
        key: "t_final",
        reason: format!("{t_final} is not a whole number of steps of {dt}"),
    })?;
    let stride = whole_steps(record_interval, dt)
        .filter(|&s| s > 0)
        .ok_or_else(|| Error::InvalidConfig {
            key: "record_interval",
            reason: format!("{record_interval} is not a positive multiple of the step {dt}"),
        })?;
    Ok((steps, stride))
}
