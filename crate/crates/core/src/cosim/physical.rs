//! Surrogate for the force-producing physical substructure.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::aero::ForceModel;
use crate::cosim::delay::DelayLine;
use crate::error::{Error, Result};
use crate::integrators::{GoverningModel, MechState, Stepper};

/// How the surrogate produces the motion it reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhysicalMode {
    /// Integrates its own structure under the force model; commands are
    /// logged but do not move it.
    #[default]
    Integrator,
    /// Moves exactly to each command; velocity by backward difference.
    Echo,
}

#[derive(Debug, Clone)]
pub struct PhysicalConfig {
    pub mode: PhysicalMode,
    pub force_model: ForceModel,
    /// Structure integrated in [`PhysicalMode::Integrator`].
    pub structure: GoverningModel,
    pub init: MechState,
    pub dt: f64,
    pub displacement_noise_std: f64,
    pub force_noise_std: f64,
    /// Force-channel delay, s.
    pub delay: f64,
    pub seed: u64,
}

/// One measurement, or the end of a diverged run.
#[derive(Debug, Clone, PartialEq)]
pub enum PhysicalReply {
    Measurement { forces: Vec<f64>, displacements: Vec<f64> },
    Diverged,
}

pub struct PhysicalSubstructure {
    cfg: PhysicalConfig,
    stepper: Option<Stepper<ForceModel>>,
    rng: ChaCha8Rng,
    delay: DelayLine,
    next_step: u32,
    prev_command: Option<Vec<f64>>,
}

impl PhysicalSubstructure {
    pub fn new(cfg: PhysicalConfig) -> Result<Self> {
        cfg.force_model.validate()?;
        for (name, v) in [
            ("displacement noise", cfg.displacement_noise_std),
            ("force noise", cfg.force_noise_std),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::validation(format!("{name} std must be non-negative, got {v}")));
            }
        }
        let n = cfg.init.n_dof();
        if let Some(need) = cfg.force_model.dof_count() {
            if need != n {
                return Err(Error::Config(format!(
                    "force model {} acts on {need} DOFs, structure has {n}",
                    cfg.force_model.name()
                )));
            }
        }
        let stepper = match cfg.mode {
            PhysicalMode::Integrator => Some(Stepper::new(
                cfg.structure.clone(),
                cfg.force_model,
                cfg.init.clone(),
                cfg.dt,
            )?),
            PhysicalMode::Echo => None,
        };
        Ok(PhysicalSubstructure {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            delay: DelayLine::new(cfg.delay)?,
            stepper,
            next_step: 0,
            prev_command: None,
            cfg,
        })
    }

    pub fn n_dof(&self) -> usize {
        self.cfg.init.n_dof()
    }

    /// Responds to the command for step `k`. Steps must arrive in order.
    pub fn on_command(&mut self, k: u32, command: &[f64]) -> Result<PhysicalReply> {
        if k != self.next_step {
            return Err(Error::Usage(format!(
                "physical substructure expected step {}, got {k}",
                self.next_step
            )));
        }
        let n = self.n_dof();
        if command.len() != n {
            return Err(Error::Config(format!(
                "command has {} DOFs, physical side has {n}",
                command.len()
            )));
        }
        self.next_step += 1;
        let t = k as f64 * self.cfg.dt;

        let (x, force) = match &mut self.stepper {
            Some(stepper) => {
                if k > 0 {
                    match stepper.advance() {
                        Ok(()) => {}
                        Err(Error::Numerical { .. }) => return Ok(PhysicalReply::Diverged),
                        Err(e) => return Err(e),
                    }
                }
                if stepper.diverged() {
                    return Ok(PhysicalReply::Diverged);
                }
                (
                    stepper.state().x.as_slice().to_vec(),
                    stepper.force().as_slice().to_vec(),
                )
            }
            None => {
                let v: Vec<f64> = match &self.prev_command {
                    Some(prev) => command.iter().zip(prev).map(|(c, p)| (c - p) / self.cfg.dt).collect(),
                    None => vec![0.0; n],
                };
                let f = self.cfg.force_model.force(t, command, &v);
                (command.to_vec(), f)
            }
        };
        self.prev_command = Some(command.to_vec());

        // fixed draw order keeps the noise stream independent of the settings
        let mut displacements = x;
        for d in displacements.iter_mut() {
            let e: f64 = StandardNormal.sample(&mut self.rng);
            *d += self.cfg.displacement_noise_std * e;
        }
        let mut forces = force;
        for f in forces.iter_mut() {
            let e: f64 = StandardNormal.sample(&mut self.rng);
            *f += self.cfg.force_noise_std * e;
        }
        let forces = self.delay.apply_delay(t, &forces)?;
        Ok(PhysicalReply::Measurement { forces, displacements })
    }

    /// True state of the surrogate (integrator mode only).
    pub fn true_state(&self) -> Option<&MechState> {
        self.stepper.as_ref().map(Stepper::state)
    }

    pub fn true_force(&self) -> Option<&DVector<f64>> {
        self.stepper.as_ref().map(Stepper::force)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aero::{linear_se_force, AeroParams};
    use crate::dynamics::{assemble_matrices, DofId, ModalParams};
    use crate::integrators::{NewmarkParams, Scheme, Structure};

    fn config(mode: PhysicalMode, force_model: ForceModel) -> PhysicalConfig {
        let mats = assemble_matrices(&[ModalParams::new(DofId::Heave, 182.178, 0.005, 17.64).unwrap()]).unwrap();
        PhysicalConfig {
            mode,
            force_model,
            structure: GoverningModel {
                structure: Structure::Linear(mats),
                scheme: Scheme::Newmark(NewmarkParams::default()),
                divergence_limit: 175.0,
            },
            init: MechState::new(DVector::from_element(1, 0.01), DVector::zeros(1)),
            dt: 0.001,
            displacement_noise_std: 0.0,
            force_noise_std: 0.0,
            delay: 0.0,
            seed: 1,
        }
    }

    fn forces(r: PhysicalReply) -> Vec<f64> {
        match r {
            PhysicalReply::Measurement { forces, .. } => forces,
            PhysicalReply::Diverged => panic!("diverged"),
        }
    }

    #[test]
    fn zero_model_reports_zero_force() {
        for mode in [PhysicalMode::Integrator, PhysicalMode::Echo] {
            let mut p = PhysicalSubstructure::new(config(mode, ForceModel::Zero)).unwrap();
            for k in 0..500 {
                assert_eq!(forces(p.on_command(k, &[0.003 * k as f64]).unwrap()), vec![0.0]);
            }
        }
    }

    #[test]
    fn echo_force_matches_linear_law() {
        let params = AeroParams::default();
        let model = ForceModel::LinearSe { params, span: 1.0 };
        let mut p = PhysicalSubstructure::new(config(PhysicalMode::Echo, model)).unwrap();
        let (w, dt) = (17.64, 0.001);
        let mut prev: Option<f64> = None;
        for k in 0..2000u32 {
            let h = (w * k as f64 * dt).sin();
            let hd = prev.map_or(0.0, |p| (h - p) / dt);
            let f = forces(p.on_command(k, &[h]).unwrap())[0];
            assert_eq!(f, linear_se_force(h, hd, &params));
            prev = Some(h);
        }
    }

    #[test]
    fn delayed_constant_force_unchanged() {
        let mut cfg = config(
            PhysicalMode::Echo,
            ForceModel::LinearSe {
                params: AeroParams::default(),
                span: 1.0,
            },
        );
        let mut direct = PhysicalSubstructure::new(cfg.clone()).unwrap();
        cfg.delay = 0.1;
        let mut delayed = PhysicalSubstructure::new(cfg).unwrap();
        // a fixed commanded displacement gives a constant force after step 0
        let _ = direct.on_command(0, &[0.02]).unwrap();
        let _ = delayed.on_command(0, &[0.02]).unwrap();
        for k in 1..400 {
            let a = forces(direct.on_command(k, &[0.02]).unwrap());
            let b = forces(delayed.on_command(k, &[0.02]).unwrap());
            if k > 100 {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn out_of_order_command_rejected() {
        let mut p = PhysicalSubstructure::new(config(PhysicalMode::Integrator, ForceModel::Zero)).unwrap();
        p.on_command(0, &[0.0]).unwrap();
        assert!(matches!(p.on_command(2, &[0.0]), Err(Error::Usage(_))));
    }

    #[test]
    fn force_model_dimension_checked() {
        use crate::aero::CoupledSeMatrices;
        let model = ForceModel::CoupledSe {
            matrices: CoupledSeMatrices::zero(),
            span: 1.0,
        };
        assert!(matches!(
            PhysicalSubstructure::new(config(PhysicalMode::Integrator, model)),
            Err(Error::Config(_))
        ));
    }
}
