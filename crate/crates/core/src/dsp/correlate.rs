//! Lag-domain cross-correlation with parabolic sub-sample refinement.
//!
//! Sign convention: for channels `a` (hydrophone i) and `b` (hydrophone j),
//! `delta_t` is the arrival time at i minus the arrival time at j. If `b` is
//! `a` delayed by k samples, `delta_t = -k / fs`.

use serde::{Deserialize, Serialize};

use super::DspError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayEstimate {
    /// Recording channels (i, j).
    pub pair: (usize, usize),
    /// Arrival at i minus arrival at j, seconds.
    pub delta_t: f64,
    /// Normalized correlation at the integer peak, in [-1, 1].
    pub peak_correlation: f64,
}

/// Estimates the delay between two equal-length buffers over lags
/// `-max_lag ..= max_lag`. Correlation is normalized by the full energies of
/// both buffers.
pub fn estimate_delay(a: &[f64], b: &[f64], fs: f64, max_lag_samples: usize) -> Result<DelayEstimate, DspError> {
    if a.len() != b.len() {
        return Err(DspError::InvalidParameter(format!(
            "buffers differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let ea: f64 = a.iter().map(|v| v * v).sum();
    let eb: f64 = b.iter().map(|v| v * v).sum();
    let norm = (ea * eb).sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(DspError::DegenerateSignal);
    }
    let max_lag = max_lag_samples.min(a.len().saturating_sub(1)) as isize;
    let corr: Vec<f64> = (-max_lag..=max_lag).map(|lag| lagged_dot(a, b, lag) / norm).collect();
    let (lag, peak) = refine_peak(&corr, max_lag);
    Ok(DelayEstimate {
        pair: (0, 1),
        delta_t: -lag / fs,
        peak_correlation: peak,
    })
}

/// Delay of the window `start..start + len` of `a` against `b`, where `b` is
/// read at every lag from its full buffer so each lag sees a complete
/// overlap. Each lag is normalized by the energies of the two segments it
/// multiplies.
pub(crate) fn estimate_delay_in_context(
    a: &[f64],
    b: &[f64],
    start: usize,
    len: usize,
    fs: f64,
    max_lag_samples: usize,
) -> Result<(f64, f64), DspError> {
    let max_lag = max_lag_samples as isize;
    if start < max_lag_samples || start + len + max_lag_samples > b.len() || start + len > a.len() {
        return Err(DspError::WindowOutOfRange);
    }
    let seg = &a[start..start + len];
    let ea: f64 = seg.iter().map(|v| v * v).sum();
    if !(ea > 0.0) {
        return Err(DspError::DegenerateSignal);
    }
    let mut corr = Vec::with_capacity(2 * max_lag_samples + 1);
    for lag in -max_lag..=max_lag {
        let lo = (start as isize + lag) as usize;
        let other = &b[lo..lo + len];
        let eb: f64 = other.iter().map(|v| v * v).sum();
        if !(eb > 0.0) {
            return Err(DspError::DegenerateSignal);
        }
        let dot: f64 = seg.iter().zip(other).map(|(x, y)| x * y).sum();
        corr.push(dot / (ea * eb).sqrt());
    }
    let (lag, peak) = refine_peak(&corr, max_lag);
    Ok((-lag / fs, peak))
}

/// `sum_n a[n] * b[n + lag]` over the overlapping range.
fn lagged_dot(a: &[f64], b: &[f64], lag: isize) -> f64 {
    let n = a.len() as isize;
    let lo = 0.max(-lag);
    let hi = n.min(n - lag);
    (lo..hi).map(|i| a[i as usize] * b[(i + lag) as usize]).sum()
}

/// Integer argmax of `corr` (index 0 corresponds to lag `-max_lag`), refined
/// by a parabola through the peak and its neighbours. Returns (lag, value at
/// the integer peak).
fn refine_peak(corr: &[f64], max_lag: isize) -> (f64, f64) {
    let mut best = 0;
    for (k, &v) in corr.iter().enumerate() {
        // ties resolve towards the smaller |lag| so the estimate is
        // antisymmetric under swapping the inputs
        let better =
            v > corr[best] || (v == corr[best] && (k as isize - max_lag).abs() < (best as isize - max_lag).abs());
        if better {
            best = k;
        }
    }
    let peak = corr[best];
    let mut offset = 0.0;
    if best > 0 && best + 1 < corr.len() {
        let (ym, y0, yp) = (corr[best - 1], corr[best], corr[best + 1]);
        let denom = (ym + yp) - 2.0 * y0;
        if denom < 0.0 {
            offset = 0.5 * (ym - yp) / denom;
        }
    }
    ((best as isize - max_lag) as f64 + offset, peak)
}
