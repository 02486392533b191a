//! Batches of runs: the force-delay study and arbitrary config lists.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::CaseConfig;
use crate::harness::metrics::{classify_envelope, Envelope};
use crate::harness::run::{compare_displacements, run_loop, ChannelMetrics};
use crate::series::{displacement_channel, TimeSeries};

/// How a batch of independent runs is scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    /// Across the rayon pool; sequential when built without `parallel`.
    #[default]
    Parallel,
}

/// Applies `f` to every item, in parallel when asked and available.
/// Results keep the order of `items`.
pub fn map_runs<T, R, F>(items: &[T], exec: Execution, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

/// One row of the delay study.
#[derive(Debug, Clone)]
pub struct DelayRow {
    pub tau: f64,
    /// Deviation from the undelayed run, one entry per DOF.
    pub metrics: Vec<ChannelMetrics>,
    /// Envelope of each displacement channel of the delayed run.
    pub envelopes: Vec<Envelope>,
    pub diverged_at: Option<usize>,
    /// Session failure message, if the run broke off.
    pub failure: Option<String>,
    pub series: TimeSeries,
}

impl DelayRow {
    pub fn worst_normalized_rms(&self) -> Option<f64> {
        self.metrics
            .iter()
            .filter_map(|m| m.metrics.normalized_rms)
            .reduce(f64::max)
    }

    pub fn any_divergent(&self) -> bool {
        self.diverged_at.is_some() || self.envelopes.contains(&Envelope::Divergent)
    }
}

#[derive(Debug, Clone)]
pub struct DelayStudy {
    pub reference: TimeSeries,
    pub rows: Vec<DelayRow>,
}

/// Runs `cfg` once per force-channel delay and compares each run with the
/// undelayed run of the same configuration.
pub fn run_delay_study(cfg: &CaseConfig, taus: &[f64], exec: Execution) -> Result<DelayStudy> {
    if let Some(t) = taus.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
        return Err(Error::validation(format!("delays must be non-negative, got {t}")));
    }
    let mut base = cfg.clone();
    base.delay = 0.0;
    base.validate()?;
    let mut configs = vec![base];
    configs.extend(taus.iter().map(|&tau| CaseConfig {
        delay: tau,
        ..cfg.clone()
    }));
    let outcomes = map_runs(&configs, exec, run_loop);
    let mut outcomes = outcomes.into_iter();
    let reference = outcomes.next().expect("reference run")?;
    if let Some(e) = reference.failure {
        return Err(e);
    }
    let reference = reference.output.series;

    let mut rows = Vec::with_capacity(taus.len());
    for (&tau, outcome) in taus.iter().zip(outcomes) {
        let outcome = outcome?;
        let series = outcome.output.series;
        let metrics = if series.is_empty() {
            Vec::new()
        } else {
            compare_displacements(cfg, &series, &reference)?
        };
        let envelopes = cfg
            .dofs()
            .into_iter()
            .map(|d| classify_envelope(series.channel(&displacement_channel(d)).unwrap_or(&[])))
            .collect();
        rows.push(DelayRow {
            tau,
            metrics,
            envelopes,
            diverged_at: outcome.diverged_at,
            failure: outcome.failure.map(|e| e.to_string()),
            series,
        });
    }
    Ok(DelayStudy { reference, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::CaseId;

    #[test]
    fn map_runs_keeps_order() {
        let items: Vec<u64> = (0..64).collect();
        for exec in [Execution::Sequential, Execution::Parallel] {
            assert_eq!(
                map_runs(&items, exec, |x| x * x),
                items.iter().map(|x| x * x).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn zero_delay_matches_reference_exactly() {
        let mut cfg = CaseConfig::preset(CaseId::Case2Dof);
        cfg.t_end = 2.0;
        let study = run_delay_study(&cfg, &[0.0, 0.05], Execution::Sequential).unwrap();
        let row = &study.rows[0];
        assert!(row.metrics.iter().all(|m| m.metrics.rms_error == 0.0));
        assert_eq!(row.series, study.reference);
        assert!(study.rows[1].metrics[0].metrics.rms_error > 0.0);
    }

    #[test]
    fn negative_delay_rejected() {
        let cfg = CaseConfig::preset(CaseId::Case2Dof);
        assert!(run_delay_study(&cfg, &[-0.1], Execution::Sequential).is_err());
    }
}
