//! Estimator side of the loop.

use nalgebra::DVector;

use crate::dynamics::DofId;
use crate::error::{Error, Result};
use crate::estimators::{Estimator, FilterState};
use crate::series::TimeSeries;

/// Runs the configured filter on incoming measurements and issues the next
/// displacement command.
///
/// Step `k` uses the force measured at step `k - 1` as the held input over
/// the step and the displacement measured at `k` as the observation. The
/// command for step `k + 1` is the filter's one-step prediction from the
/// step-`k` posterior.
pub struct NumericalSubstructure {
    estimator: Estimator,
    state: FilterState,
    dofs: Vec<DofId>,
    dt: f64,
    last_force: Option<DVector<f64>>,
    series: TimeSeries,
    commands: Vec<Vec<f64>>,
}

/// Everything the numerical side recorded.
#[derive(Debug, Clone)]
pub struct NumericalOutput {
    /// Posterior displacement/velocity and measured force per step.
    pub series: TimeSeries,
    /// Displacement command sent for each step.
    pub commands: Vec<Vec<f64>>,
    pub final_state: FilterState,
}

impl NumericalSubstructure {
    pub fn new(estimator: Estimator, init: FilterState, dofs: Vec<DofId>, dt: f64) -> Result<Self> {
        if init.state_dim() != 2 * dofs.len() {
            return Err(Error::Config(format!(
                "filter state has {} entries for {} DOFs",
                init.state_dim(),
                dofs.len()
            )));
        }
        Ok(NumericalSubstructure {
            series: TimeSeries::for_dofs(dt, &dofs),
            estimator,
            state: init,
            dofs,
            dt,
            last_force: None,
            commands: Vec::new(),
        })
    }

    pub fn dofs(&self) -> &[DofId] {
        &self.dofs
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn state(&self) -> &FilterState {
        &self.state
    }

    fn displacements(&self, x: &DVector<f64>) -> Vec<f64> {
        (0..self.dofs.len()).map(|i| x[2 * i]).collect()
    }

    /// Command for step `k`; must be called once per step, in order.
    pub fn command(&mut self, k: usize) -> Result<Vec<f64>> {
        if k != self.commands.len() {
            return Err(Error::Usage(format!(
                "command for step {k} requested after {} commands",
                self.commands.len()
            )));
        }
        let cmd = match &self.last_force {
            None => self.displacements(&self.state.x_hat),
            Some(u) => self
                .estimator
                .predict_observation(&self.state.x_hat, u)
                .map_err(|e| at_step(e, k))?
                .as_slice()
                .to_vec(),
        };
        self.commands.push(cmd.clone());
        Ok(cmd)
    }

    /// Consumes the measurement of step `k`.
    pub fn on_measurement(&mut self, k: usize, forces: &[f64], displacements: &[f64]) -> Result<()> {
        let n = self.dofs.len();
        if forces.len() != n || displacements.len() != n {
            return Err(Error::Config(format!(
                "measurement carries {}/{} values for {n} DOFs",
                forces.len(),
                displacements.len()
            )));
        }
        if k != self.series.len() {
            return Err(Error::Usage(format!(
                "measurement for step {k} after {} records",
                self.series.len()
            )));
        }
        if let Some(u) = &self.last_force {
            let z = DVector::from_column_slice(displacements);
            self.state = self.estimator.step(&self.state, u, &z).map_err(|e| at_step(e, k))?;
        }
        let x = &self.state.x_hat;
        let pos: Vec<f64> = (0..n).map(|i| x[2 * i]).collect();
        let vel: Vec<f64> = (0..n).map(|i| x[2 * i + 1]).collect();
        self.series.push_state(k as f64 * self.dt, &pos, &vel, forces);
        self.last_force = Some(DVector::from_column_slice(forces));
        Ok(())
    }

    pub fn finish(self) -> NumericalOutput {
        NumericalOutput {
            series: self.series,
            commands: self.commands,
            final_state: self.state,
        }
    }
}

fn at_step(e: Error, k: usize) -> Error {
    match e {
        Error::Numerical { reason, .. } => Error::Numerical { step: Some(k), reason },
        other => other,
    }
}
