//! Stable-window selection: picks the stretch of the ping whose pairwise
//! delays agree best across sub-windows, then reports full-window delays for
//! the precise quad and absolute onsets for the coarse quad.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::correlate::{estimate_delay_in_context, DelayEstimate};
use super::detect::{PingDetector, DEFAULT_K_THRESHOLD};
use super::filter::{filter_signal, BiquadCascade};
use super::DspError;
use crate::geometry::{precise_pairs, HydrophoneArray, DEFAULT_SOUND_SPEED};
use crate::recording::MultiChannelRecording;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowParams {
    /// Candidate window length, seconds.
    pub window: f64,
    /// Spacing between candidate starts, seconds.
    pub hop: f64,
    pub candidates: usize,
    pub sub_windows: usize,
    pub k_threshold: f64,
    /// Largest accepted summed delay variance, in squared sample periods.
    pub max_variance: f64,
    pub sound_speed: f64,
}

impl Default for WindowParams {
    fn default() -> Self {
        Self {
            window: 2e-3,
            hop: 0.5e-3,
            candidates: 8,
            sub_windows: 4,
            k_threshold: DEFAULT_K_THRESHOLD,
            max_variance: 0.25,
            sound_speed: DEFAULT_SOUND_SPEED,
        }
    }
}

/// Everything the solver and the guess server need from one ping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TdoaSet {
    pub reference_channel: usize,
    /// Onset at the reference channel, seconds since recording start.
    pub onset_time_abs: f64,
    /// All six precise-quad pairs.
    pub pairwise: Vec<DelayEstimate>,
    /// Onset per coarse hydrophone, in `HydrophoneArray::coarse` order.
    pub coarse_arrivals: [f64; 4],
    /// (start sample, length) of the chosen window.
    pub window: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub start: usize,
    /// Summed per-pair delay variance across sub-windows, seconds squared;
    /// `None` when a sub-window had no usable signal.
    pub variance: Option<f64>,
}

/// Debug dump of one window selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub onset_sample: usize,
    pub chosen: usize,
    pub candidates: Vec<CandidateScore>,
    pub pairwise: Vec<DelayEstimate>,
}

/// Filtered channels plus per-channel detectors for one recording.
pub struct PreparedRecording {
    pub fs: f64,
    pub channels: Vec<Vec<f64>>,
    pub detectors: Vec<PingDetector>,
}

impl PreparedRecording {
    pub fn new(recording: &MultiChannelRecording, cascade: &BiquadCascade, k_threshold: f64) -> Result<Self, DspError> {
        let fs = recording.sample_rate;
        let channels: Vec<Vec<f64>> = recording
            .channels
            .par_iter()
            .map(|ch| {
                let x: Vec<f64> = ch.iter().map(|&v| v as f64).collect();
                filter_signal(cascade, &x)
            })
            .collect();
        let detectors = channels
            .par_iter()
            .map(|ch| PingDetector::new(ch, fs, k_threshold))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            fs,
            channels,
            detectors,
        })
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Filters the recording, finds the first ping and selects its stable window.
pub fn select_stable_window(
    recording: &MultiChannelRecording,
    cascade: &BiquadCascade,
    array: &HydrophoneArray,
    params: &WindowParams,
) -> Result<TdoaSet, DspError> {
    if recording.channel_count() != 8 {
        return Err(DspError::ChannelCount(recording.channel_count()));
    }
    let prepared = PreparedRecording::new(recording, cascade, params.k_threshold)?;
    select_window_at(&prepared, array, params, 0, prepared.len()).map(|(set, _)| set)
}

/// Window selection for the first ping whose reference onset lies in
/// `cursor..until`.
pub fn select_window_at(
    rec: &PreparedRecording,
    array: &HydrophoneArray,
    params: &WindowParams,
    cursor: usize,
    until: usize,
) -> Result<(TdoaSet, WindowReport), DspError> {
    if rec.channels.len() != 8 {
        return Err(DspError::ChannelCount(rec.channels.len()));
    }
    let fs = rec.fs;
    let c = params.sound_speed;
    let precise = array.precise_channels();

    let (reference_channel, onset) = precise
        .iter()
        .find_map(|&ch| rec.detectors[ch].first_crossing_before(cursor, until).map(|n| (ch, n)))
        .ok_or(DspError::NoPing)?;

    let max_delay = array.max_precise_spacing() / c;
    let max_lag = (max_delay * fs).ceil() as usize + 1;
    let win = (params.window * fs).round() as usize;
    let hop = ((params.hop * fs).round() as usize).max(1);
    let sub_count = params.sub_windows.max(2);
    let sub_len = win / sub_count;
    if win == 0 || sub_len == 0 {
        return Err(DspError::InvalidParameter("window too short".into()));
    }
    let fits = |start: usize| start >= max_lag && start + win + max_lag <= rec.len();
    if !fits(onset) {
        return Err(DspError::WindowTooLong);
    }

    let pairs = precise_pairs();
    let mut candidates = Vec::with_capacity(params.candidates);
    for k in 0..params.candidates.max(1) {
        let start = onset + k * hop;
        if !fits(start) {
            break;
        }
        let mut total = 0.0;
        let mut usable = true;
        'pairs: for &(i, j) in &pairs {
            let (ci, cj) = (precise[i], precise[j]);
            let mut delays = Vec::with_capacity(sub_count);
            for s in 0..sub_count {
                match estimate_delay_in_context(
                    &rec.channels[ci],
                    &rec.channels[cj],
                    start + s * sub_len,
                    sub_len,
                    fs,
                    max_lag,
                ) {
                    Ok((dt, _)) => delays.push(dt),
                    Err(_) => {
                        usable = false;
                        break 'pairs;
                    }
                }
            }
            total += sample_variance(&delays);
        }
        candidates.push(CandidateScore {
            start,
            variance: usable.then_some(total),
        });
    }

    let chosen = candidates
        .iter()
        .enumerate()
        .filter_map(|(k, cand)| cand.variance.map(|v| (k, v)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(k, _)| k)
        .ok_or(DspError::UnstableWindow)?;
    let best_variance = candidates[chosen].variance.unwrap_or(f64::INFINITY);
    let limit = params.max_variance / (fs * fs);
    if best_variance > limit {
        return Err(DspError::UnstableWindow);
    }
    let start = candidates[chosen].start;

    let mut pairwise = Vec::with_capacity(pairs.len());
    for &(i, j) in &pairs {
        let (ci, cj) = (precise[i], precise[j]);
        let (dt, peak) = estimate_delay_in_context(&rec.channels[ci], &rec.channels[cj], start, win, fs, max_lag)?;
        pairwise.push(DelayEstimate {
            pair: (ci, cj),
            delta_t: dt.clamp(-max_delay, max_delay),
            peak_correlation: peak,
        });
    }

    // coarse onsets can precede the reference by at most the array extent
    let guard = ((array_extent(array) / c + 0.5e-3) * fs).ceil() as usize;
    let search_from = onset.saturating_sub(guard).max(cursor);
    let mut coarse_arrivals = [0.0; 4];
    for (slot, &ch) in coarse_arrivals.iter_mut().zip(array.coarse_channels().iter()) {
        let n = rec.detectors[ch]
            .first_crossing_before(search_from, onset + guard)
            .ok_or(DspError::CoarseNotDetected(ch))?;
        *slot = n as f64 / fs;
    }

    let set = TdoaSet {
        reference_channel,
        onset_time_abs: onset as f64 / fs,
        pairwise: pairwise.clone(),
        coarse_arrivals,
        window: (start, win),
    };
    let report = WindowReport {
        onset_sample: onset,
        chosen,
        candidates,
        pairwise,
    };
    Ok((set, report))
}

fn array_extent(array: &HydrophoneArray) -> f64 {
    let all = array.positions_by_channel();
    let mut d: f64 = 0.0;
    for (k, p) in all.iter().enumerate() {
        for q in &all[k + 1..] {
            d = d.max(p.distance(*q));
        }
    }
    d
}

fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}
