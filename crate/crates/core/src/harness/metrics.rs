//! Series comparison and envelope classification.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeries;

/// Trend of the per-cycle peak amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Envelope {
    Convergent,
    Divergent,
    Bounded,
}

impl Envelope {
    pub fn name(self) -> &'static str {
        match self {
            Envelope::Convergent => "convergent",
            Envelope::Divergent => "divergent",
            Envelope::Bounded => "bounded",
        }
    }
}

impl fmt::Display for Envelope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Minimum length of a strictly monotone run of cycle peaks.
pub const MIN_TREND_CYCLES: usize = 5;
/// Minimum overall change of the last peak relative to the first.
pub const TREND_RATIO: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonMetrics {
    pub rms_error: f64,
    pub peak_error: f64,
    /// `rms_error` over the RMS of the reference; `None` for a zero
    /// reference.
    pub normalized_rms: Option<f64>,
    /// Envelope of the first series.
    pub classification: Envelope,
    /// Number of samples compared.
    pub samples: usize,
}

/// Largest |x| between consecutive upward zero crossings.
pub fn cycle_peaks(x: &[f64]) -> Vec<f64> {
    let mut peaks = Vec::new();
    let mut current: Option<f64> = None;
    for w in x.windows(2) {
        if let Some(p) = current.as_mut() {
            *p = p.max(w[0].abs());
        }
        if w[0] < 0.0 && w[1] >= 0.0 {
            if let Some(p) = current.take() {
                peaks.push(p);
            }
            current = Some(0.0);
        }
    }
    peaks
}

/// Classifies a signal by the trend of its per-cycle peaks.
///
/// Divergent needs a strictly growing run of at least
/// [`MIN_TREND_CYCLES`] peaks and a last peak more than [`TREND_RATIO`]
/// above the first; convergent is the mirror image. Anything else,
/// including signals with too few cycles, is bounded.
pub fn classify_envelope(x: &[f64]) -> Envelope {
    let peaks = cycle_peaks(x);
    if peaks.len() < MIN_TREND_CYCLES {
        return Envelope::Bounded;
    }
    let (mut up, mut down, mut best_up, mut best_down) = (1usize, 1usize, 1usize, 1usize);
    for w in peaks.windows(2) {
        if w[1] > w[0] {
            up += 1;
            down = 1;
        } else if w[1] < w[0] {
            down += 1;
            up = 1;
        } else {
            up = 1;
            down = 1;
        }
        best_up = best_up.max(up);
        best_down = best_down.max(down);
    }
    let first = peaks[0];
    let last = peaks[peaks.len() - 1];
    if best_up >= MIN_TREND_CYCLES && last > first * (1.0 + TREND_RATIO) {
        Envelope::Divergent
    } else if best_down >= MIN_TREND_CYCLES && last < first * (1.0 - TREND_RATIO) {
        Envelope::Convergent
    } else {
        Envelope::Bounded
    }
}

fn rms(x: impl Iterator<Item = f64>) -> (f64, usize) {
    let (mut s, mut n) = (0.0, 0usize);
    for v in x {
        s += v * v;
        n += 1;
    }
    if n == 0 {
        (0.0, 0)
    } else {
        ((s / n as f64).sqrt(), n)
    }
}

/// Compares `channel` of `a` against the reference `b` over the time range
/// both cover.
pub fn compare_series(a: &TimeSeries, b: &TimeSeries, channel: &str) -> Result<ComparisonMetrics> {
    let tol = 1e-9 * a.dt.abs().max(b.dt.abs());
    if (a.dt - b.dt).abs() > tol {
        return Err(Error::Usage(format!("series time steps differ: {} vs {}", a.dt, b.dt)));
    }
    let xa = a
        .channel(channel)
        .ok_or_else(|| Error::Usage(format!("first series has no channel {channel:?}")))?;
    let xb = b
        .channel(channel)
        .ok_or_else(|| Error::Usage(format!("second series has no channel {channel:?}")))?;
    let (ta, tb) = (a.time(), b.time());
    let (a0, b0) = match (ta.first(), tb.first()) {
        (Some(&a0), Some(&b0)) => (a0, b0),
        _ => return Err(Error::Usage("cannot compare an empty series".into())),
    };
    // index shift that aligns the two time grids
    let shift = ((b0 - a0) / a.dt).round();
    if ((b0 - a0) - shift * a.dt).abs() > 1e-6 * a.dt {
        return Err(Error::Usage("series sample times are not aligned".into()));
    }
    let shift = shift as i64;
    let (start_a, start_b) = if shift >= 0 {
        (shift as usize, 0)
    } else {
        (0, (-shift) as usize)
    };
    if start_a >= xa.len() || start_b >= xb.len() {
        return Err(Error::Usage("series time ranges do not overlap".into()));
    }
    let n = (xa.len() - start_a).min(xb.len() - start_b);
    let sa = &xa[start_a..start_a + n];
    let sb = &xb[start_b..start_b + n];

    let (rms_error, samples) = rms(sa.iter().zip(sb).map(|(p, q)| p - q));
    let peak_error = sa.iter().zip(sb).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    let (reference_rms, _) = rms(sb.iter().copied());
    let normalized_rms = (reference_rms > 0.0).then(|| rms_error / reference_rms);
    Ok(ComparisonMetrics {
        rms_error,
        peak_error,
        normalized_rms,
        classification: classify_envelope(sa),
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::DofId;

    fn series(dt: f64, x: &[f64]) -> TimeSeries {
        let mut s = TimeSeries::for_dofs(dt, &[DofId::Heave]);
        for (k, &v) in x.iter().enumerate() {
            s.push_state(k as f64 * dt, &[v], &[0.0], &[0.0]);
        }
        s
    }

    fn damped(rate: f64) -> Vec<f64> {
        (0..20000)
            .map(|k| {
                let t = k as f64 * 0.001;
                (rate * t).exp() * (2.0 * std::f64::consts::PI * 2.0 * t).sin()
            })
            .collect()
    }

    #[test]
    fn identical_series() {
        let x = damped(-0.3);
        let a = series(0.001, &x);
        let m = compare_series(&a, &a, "heave_x").unwrap();
        assert_eq!(m.rms_error, 0.0);
        assert_eq!(m.peak_error, 0.0);
        assert_eq!(m.normalized_rms, Some(0.0));
        assert_eq!(m.classification, classify_envelope(&x));
    }

    #[test]
    fn constant_offset() {
        let x = damped(0.0);
        let y: Vec<f64> = x.iter().map(|v| v + 1e-3).collect();
        let m = compare_series(&series(0.001, &x), &series(0.001, &y), "heave_x").unwrap();
        assert!((m.rms_error - 1e-3).abs() < 1e-15);
        assert!((m.peak_error - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn envelopes() {
        assert_eq!(classify_envelope(&damped(-0.3)), Envelope::Convergent);
        assert_eq!(classify_envelope(&damped(0.3)), Envelope::Divergent);
        assert_eq!(classify_envelope(&damped(0.0)), Envelope::Bounded);
        assert_eq!(classify_envelope(&[0.0; 100]), Envelope::Bounded);
    }

    #[test]
    fn zero_reference_has_no_normalized_error() {
        let z = series(0.001, &[0.0; 50]);
        let m = compare_series(&z, &z, "heave_x").unwrap();
        assert_eq!(m.normalized_rms, None);
        assert_eq!(m.rms_error, 0.0);
    }

    #[test]
    fn overlap_only() {
        let x = damped(-0.1);
        let m = compare_series(&series(0.001, &x), &series(0.001, &x[..5000]), "heave_x").unwrap();
        assert_eq!(m.samples, 5000);
        assert_eq!(m.rms_error, 0.0);
    }

    #[test]
    fn mismatched_dt_is_usage_error() {
        let x = damped(0.0);
        let r = compare_series(&series(0.001, &x), &series(0.002, &x), "heave_x");
        assert!(matches!(r, Err(Error::Usage(_))));
        let r = compare_series(&series(0.001, &x), &series(0.001, &x), "torsion_x");
        assert!(matches!(r, Err(Error::Usage(_))));
    }
}
