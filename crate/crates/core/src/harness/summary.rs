//! Flat `key = value` run summaries.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use crate::error::Result;
use crate::harness::config::CaseConfig;
use crate::harness::metrics::ComparisonMetrics;
use crate::harness::run::CaseRun;
use crate::harness::sweep::DelayStudy;

/// Sorted key-value pairs, written one per line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary {
    entries: BTreeMap<String, String>,
}

fn fmt_f64(v: f64) -> String {
    // shortest representation that round-trips
    format!("{v:?}")
}

fn opt<T: fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| "undefined".to_string(), |v| v.to_string())
}

impl Summary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.insert(key.into(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Every config field under `config.`, nested keys joined by dots.
    pub fn add_config(&mut self, cfg: &CaseConfig) {
        let value = toml::Value::Table(cfg.to_table());
        self.flatten("config", &value);
    }

    fn flatten(&mut self, prefix: &str, v: &toml::Value) {
        match v {
            toml::Value::Table(t) => {
                for (k, v) in t {
                    self.flatten(&format!("{prefix}.{k}"), v);
                }
            }
            toml::Value::Array(a) if a.iter().any(|x| x.is_table() || x.is_array()) => {
                for (i, v) in a.iter().enumerate() {
                    self.flatten(&format!("{prefix}.{i}"), v);
                }
            }
            toml::Value::Array(a) => {
                let items: Vec<String> = a.iter().map(scalar).collect();
                self.insert(prefix, items.join(","));
            }
            other => self.insert(prefix, scalar(other)),
        }
    }

    pub fn add_metrics(&mut self, prefix: &str, m: &ComparisonMetrics) {
        self.insert(format!("{prefix}.rms_error"), fmt_f64(m.rms_error));
        self.insert(format!("{prefix}.peak_error"), fmt_f64(m.peak_error));
        self.insert(format!("{prefix}.normalized_rms"), opt(m.normalized_rms.map(fmt_f64)));
        self.insert(format!("{prefix}.classification"), m.classification.name());
        self.insert(format!("{prefix}.samples"), m.samples.to_string());
    }

    pub fn for_case(run: &CaseRun) -> Self {
        let mut s = Summary::new();
        s.add_config(&run.config);
        for m in &run.metrics {
            s.add_metrics(&format!("metrics.{}", m.channel), &m.metrics);
        }
        s.insert(
            "metrics.worst_normalized_rms",
            opt(run.worst_normalized_rms().map(fmt_f64)),
        );
        s.insert("run.records", run.rtahs.len().to_string());
        s.insert("run.oracle_records", run.oracle.len().to_string());
        s.insert("run.diverged_at", opt(run.diverged_at));
        s.insert("run.oracle_diverged_at", opt(run.oracle_diverged_at));
        s.insert("run.failure", opt(run.failure.as_ref()));
        let st = &run.stats;
        s.insert("session.sent", st.sent.to_string());
        s.insert("session.received", st.received.to_string());
        s.insert("session.dropped", st.dropped.to_string());
        s.insert("session.lost", st.lost.to_string());
        s.insert("session.retries", st.retries.to_string());
        s
    }

    pub fn for_delay_study(cfg: &CaseConfig, study: &DelayStudy) -> Self {
        let mut s = Summary::new();
        s.add_config(cfg);
        s.insert(
            "study.taus",
            study.rows.iter().map(|r| fmt_f64(r.tau)).collect::<Vec<_>>().join(","),
        );
        for (i, row) in study.rows.iter().enumerate() {
            let p = format!("study.{i}");
            s.insert(format!("{p}.tau"), fmt_f64(row.tau));
            for m in &row.metrics {
                s.add_metrics(&format!("{p}.{}", m.channel), &m.metrics);
            }
            let env: Vec<&str> = row.envelopes.iter().map(|e| e.name()).collect();
            s.insert(format!("{p}.envelopes"), env.join(","));
            s.insert(
                format!("{p}.worst_normalized_rms"),
                opt(row.worst_normalized_rms().map(fmt_f64)),
            );
            s.insert(format!("{p}.diverged_at"), opt(row.diverged_at));
            s.insert(format!("{p}.failure"), opt(row.failure.as_ref()));
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_string())?;
        Ok(())
    }
}

fn scalar(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Float(f) => fmt_f64(*f),
        other => other.to_string(),
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}
