//! Running one validation case: the RTAHS loop and its oracle.

use nalgebra::{DMatrix, DVector};

use crate::cosim::{
    run_in_process, run_udp_loopback, Handshake, LoopOutcome, NumericalSubstructure, PhysicalConfig,
    PhysicalSubstructure, SessionStats,
};
use crate::dynamics::{build_state_space, dof_mask};
use crate::error::{Error, Result};
use crate::estimators::{
    AmplitudeDependentModel, Estimator, EstimatorKind, FilterState, LinearModel, NoiseStats, TransitionModel,
};
use crate::harness::config::{CaseConfig, CaseId, CosimMode};
use crate::harness::metrics::{compare_series, ComparisonMetrics};
use crate::integrators::{simulate, AmplitudeDependentSdof, Simulation};
use crate::series::{displacement_channel, TimeSeries};

/// Metrics of one displacement channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMetrics {
    pub channel: String,
    pub metrics: ComparisonMetrics,
}

/// Result of [`run_case`].
#[derive(Debug)]
pub struct CaseRun {
    pub config: CaseConfig,
    /// Filter posterior and measured force per step.
    pub rtahs: TimeSeries,
    pub oracle: TimeSeries,
    /// Displacement commands sent to the physical side.
    pub commands: TimeSeries,
    /// RTAHS against oracle, one entry per DOF.
    pub metrics: Vec<ChannelMetrics>,
    pub diverged_at: Option<usize>,
    pub oracle_diverged_at: Option<usize>,
    pub stats: SessionStats,
    /// Session failure; the series then hold the partial run.
    pub failure: Option<Error>,
}

impl CaseRun {
    /// Metrics of the first (heave) channel.
    pub fn primary(&self) -> &ComparisonMetrics {
        &self.metrics[0].metrics
    }

    pub fn channel(&self, name: &str) -> Option<&ComparisonMetrics> {
        self.metrics.iter().find(|m| m.channel == name).map(|m| &m.metrics)
    }

    /// Largest normalized RMS over all channels with a nonzero reference.
    pub fn worst_normalized_rms(&self) -> Option<f64> {
        self.metrics
            .iter()
            .filter_map(|m| m.metrics.normalized_rms)
            .reduce(f64::max)
    }

    /// Either run stopped early at the divergence limit.
    pub fn truncated(&self) -> bool {
        self.diverged_at.is_some() || self.oracle_diverged_at.is_some()
    }
}

fn amplitude_structure(cfg: &CaseConfig) -> AmplitudeDependentSdof {
    let p = &cfg.structure[0];
    AmplitudeDependentSdof {
        inertia: p.inertia,
        omega0: p.circ_freq,
        depth: cfg.aero.depth,
    }
}

/// The filter's transition model. The KF always uses the nominal linear
/// structure, so on the nonlinear case it runs on a mismatched model.
pub fn build_estimator(cfg: &CaseConfig) -> Result<Estimator> {
    let linear = || -> Result<LinearModel> { Ok(LinearModel::from(&build_state_space(&cfg.structure, cfg.dt)?)) };
    let model = || -> Result<Box<dyn TransitionModel + Send + Sync>> {
        Ok(match cfg.case {
            CaseId::Case1Nonlinear => Box::new(AmplitudeDependentModel::new(amplitude_structure(cfg), cfg.dt)?),
            CaseId::Case1Linear | CaseId::Case2Dof => Box::new(linear()?),
        })
    };
    Ok(match cfg.estimator {
        EstimatorKind::Kf => Estimator::Kf(linear()?),
        EstimatorKind::Ekf => Estimator::Ekf(model()?),
        EstimatorKind::Aekf => Estimator::Aekf(model()?, cfg.aekf()),
    })
}

pub fn initial_filter_state(cfg: &CaseConfig) -> Result<FilterState> {
    let n = cfg.n_dof();
    let x0 = match &cfg.filter.initial_state {
        Some(x) => DVector::from_column_slice(x),
        None => cfg.initial_state().to_state_vector(),
    };
    let noise = NoiseStats::isotropic(
        2 * n,
        n,
        cfg.filter.process_noise * cfg.dt,
        cfg.filter.measurement_noise,
    );
    FilterState::new(
        x0,
        DMatrix::identity(2 * n, 2 * n) * cfg.filter.initial_covariance,
        noise,
    )
}

pub fn build_numerical(cfg: &CaseConfig) -> Result<NumericalSubstructure> {
    NumericalSubstructure::new(build_estimator(cfg)?, initial_filter_state(cfg)?, cfg.dofs(), cfg.dt)
}

pub fn physical_config(cfg: &CaseConfig) -> Result<PhysicalConfig> {
    Ok(PhysicalConfig {
        mode: cfg.physical.mode,
        force_model: cfg.force_model()?,
        structure: cfg.governing_model()?,
        init: cfg.initial_state(),
        dt: cfg.dt,
        displacement_noise_std: cfg.physical.displacement_noise_std,
        force_noise_std: cfg.physical.force_noise_std,
        delay: cfg.delay,
        seed: cfg.seed,
    })
}

pub fn handshake(cfg: &CaseConfig) -> Handshake {
    Handshake {
        dt: cfg.dt,
        t_end: cfg.t_end,
        dof_mask: dof_mask(&cfg.dofs()),
        estimator: cfg.estimator.wire_id(),
    }
}

/// Builds the physical side from a received handshake and local settings.
pub fn physical_from_handshake(cfg: &CaseConfig, hs: &Handshake) -> Result<PhysicalSubstructure> {
    if hs.dof_mask != dof_mask(&cfg.dofs()) {
        return Err(Error::Config(format!(
            "server runs DOF mask {:#04b}, local case {} has {:#04b}",
            hs.dof_mask,
            cfg.case,
            dof_mask(&cfg.dofs())
        )));
    }
    let mut local = cfg.clone();
    local.dt = hs.dt;
    local.t_end = hs.t_end;
    local.validate()?;
    PhysicalSubstructure::new(physical_config(&local)?)
}

/// Runs only the co-simulation loop.
pub fn run_loop(cfg: &CaseConfig) -> Result<LoopOutcome> {
    cfg.validate()?;
    let numerical = build_numerical(cfg)?;
    let steps = cfg.steps();
    match cfg.mode {
        CosimMode::InProcess => {
            let mut physical = PhysicalSubstructure::new(physical_config(cfg)?)?;
            run_in_process(numerical, &mut physical, steps)
        }
        CosimMode::Udp => {
            let local = cfg.clone();
            run_udp_loopback(numerical, handshake(cfg), &cfg.protocol.to_protocol(), move |hs| {
                physical_from_handshake(&local, hs)
            })
        }
    }
}

/// Integrates the governing model directly, without estimator or noise.
pub fn run_oracle(cfg: &CaseConfig) -> Result<Simulation> {
    cfg.validate()?;
    simulate(
        &cfg.governing_model()?,
        cfg.force_model()?,
        cfg.initial_state(),
        cfg.dt,
        cfg.t_end,
    )
}

pub fn commands_series(cfg: &CaseConfig, commands: &[Vec<f64>]) -> TimeSeries {
    let names = std::iter::once("t".to_string())
        .chain(cfg.dofs().into_iter().map(displacement_channel))
        .collect();
    let mut s = TimeSeries::with_channels(cfg.dt, names);
    for (k, c) in commands.iter().enumerate() {
        let mut row = Vec::with_capacity(c.len() + 1);
        row.push(k as f64 * cfg.dt);
        row.extend_from_slice(c);
        s.push_row(&row);
    }
    s
}

/// Per-DOF displacement metrics of `a` against the reference `b`.
pub fn compare_displacements(cfg: &CaseConfig, a: &TimeSeries, b: &TimeSeries) -> Result<Vec<ChannelMetrics>> {
    cfg.dofs()
        .into_iter()
        .map(|d| {
            let channel = displacement_channel(d);
            Ok(ChannelMetrics {
                metrics: compare_series(a, b, &channel)?,
                channel,
            })
        })
        .collect()
}

/// Runs the RTAHS loop and its oracle and compares displacements.
pub fn run_case(cfg: &CaseConfig) -> Result<CaseRun> {
    let outcome = run_loop(cfg)?;
    finish_case(cfg, outcome)
}

/// Runs the oracle for a finished loop and compares the two.
pub fn finish_case(cfg: &CaseConfig, outcome: LoopOutcome) -> Result<CaseRun> {
    let oracle = run_oracle(cfg)?;
    let rtahs = outcome.output.series;
    let metrics = if rtahs.is_empty() {
        Vec::new()
    } else {
        compare_displacements(cfg, &rtahs, &oracle.series)?
    };
    Ok(CaseRun {
        commands: commands_series(cfg, &outcome.output.commands),
        config: cfg.clone(),
        rtahs,
        oracle: oracle.series,
        metrics,
        diverged_at: outcome.diverged_at,
        oracle_diverged_at: oracle.diverged_at,
        stats: outcome.stats,
        failure: outcome.failure,
    })
}
