//! End-to-end localization: filter, find each ping, pick its stable window,
//! guess the octant, solve, report.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::{
    design_bandpass, select_window_at, BiquadCascade, DspError, PreparedRecording, TdoaSet, WindowParams,
};
use crate::geometry::{validate_array, HydrophoneArray, Scenario, DEFAULT_SOUND_SPEED};
use crate::guess::{octant_guess, GuessError, GuessParams, OctantGuess};
use crate::recording::MultiChannelRecording;
use crate::simulator::{render_scene, SimulationError};
use crate::solver::{gradient_descent, SolverError, SolverParams, SolverResult};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no ping detected in recording")]
    NoPing,
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error(transparent)]
    Dsp(#[from] DspError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterParams {
    pub band_low: f64,
    pub band_high: f64,
    /// Total bandpass order; must be even.
    pub order: usize,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            band_low: 30_000.0,
            band_high: 50_000.0,
            order: 4,
        }
    }
}

impl FilterParams {
    pub fn design(&self, fs: f64) -> Result<BiquadCascade, DspError> {
        design_bandpass(self.order, self.band_low, self.band_high, fs)
    }
}

/// Tunables of the whole chain. `sound_speed` overrides the copies held by
/// the window and guess parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineParams {
    pub filter: FilterParams,
    pub window: WindowParams,
    pub guess: GuessParams,
    pub solver: SolverParams,
    pub sound_speed: f64,
    /// Dead time after an accepted onset before searching for the next
    /// ping, seconds.
    pub holdoff: f64,
    /// Carrier frequency used for the array spacing check.
    pub carrier: f64,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            filter: FilterParams::default(),
            window: WindowParams::default(),
            guess: GuessParams::default(),
            solver: SolverParams::default(),
            sound_speed: DEFAULT_SOUND_SPEED,
            holdoff: 0.1,
            carrier: 40_000.0,
        }
    }
}

/// Wall-clock milliseconds per stage. Filtering is shared by all pings of a
/// recording and repeated in each report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub filter_ms: f64,
    pub window_ms: f64,
    pub guess_ms: f64,
    pub solve_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AzimuthReport {
    pub ping_index: usize,
    pub azimuth: f64,
    pub elevation: f64,
    pub range: f64,
    pub octant_guess: String,
    pub objective: f64,
    pub converged: bool,
    pub window: (usize, usize),
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub timing: Option<StageTiming>,
}

/// Everything computed for one ping.
#[derive(Debug, Clone, PartialEq)]
pub struct PingEstimate {
    pub report: AzimuthReport,
    pub tdoa: TdoaSet,
    pub guess: OctantGuess,
    pub result: SolverResult,
}

/// A detected onset that did not yield a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedPing {
    pub onset_sample: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LocalizationRun {
    pub estimates: Vec<PingEstimate>,
    pub skipped: Vec<SkippedPing>,
}

impl LocalizationRun {
    pub fn reports(&self) -> impl Iterator<Item = &AzimuthReport> {
        self.estimates.iter().map(|e| &e.report)
    }

    pub fn all_converged(&self) -> bool {
        self.estimates.iter().all(|e| e.report.converged)
    }
}

enum PingFailure {
    Dsp(DspError),
    Guess(GuessError),
    Solver(SolverError),
}

impl std::fmt::Display for PingFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PingFailure::Dsp(e) => write!(f, "{e}"),
            PingFailure::Guess(e) => write!(f, "{e}"),
            PingFailure::Solver(e) => write!(f, "{e}"),
        }
    }
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Localizes every ping in `recording`, in time order.
///
/// Returns `PipelineError::NoPing` when no onset produced a report.
pub fn run_localization(
    recording: &MultiChannelRecording,
    array: &HydrophoneArray,
    params: &PipelineParams,
) -> Result<LocalizationRun, PipelineError> {
    let report = validate_array(array, params.carrier, params.sound_speed);
    if !report.ok {
        let msgs: Vec<_> = report.violations.iter().map(|v| v.message.as_str()).collect();
        return Err(PipelineError::Config(msgs.join("; ")));
    }
    if recording.channel_count() != 8 {
        return Err(PipelineError::Config(format!(
            "recording has {} channels, expected 8",
            recording.channel_count()
        )));
    }
    if !(params.holdoff > 0.0) {
        return Err(PipelineError::Config("holdoff must be positive".into()));
    }
    let fs = recording.sample_rate;
    let window = WindowParams {
        sound_speed: params.sound_speed,
        ..params.window.clone()
    };
    let guess_params = GuessParams {
        sound_speed: params.sound_speed,
        ..params.guess.clone()
    };

    let t = Instant::now();
    let cascade = params.filter.design(fs)?;
    let prepared = PreparedRecording::new(recording, &cascade, window.k_threshold)?;
    let filter_ms = ms(t);

    let holdoff = ((params.holdoff * fs).round() as usize).max(1);
    let precise = array.precise_channels();
    let mut run = LocalizationRun::default();
    let mut cursor = 0;
    while let Some(probe) = precise
        .iter()
        .filter_map(|&ch| prepared.detectors[ch].first_crossing(cursor))
        .min()
    {
        let t = Instant::now();
        let selected = select_window_at(&prepared, array, &window, cursor, prepared.len());
        let window_ms = ms(t);
        let (tdoa, onset) = match selected {
            Ok((tdoa, dump)) => (tdoa, dump.onset_sample),
            Err(e) => {
                run.skipped.push(SkippedPing {
                    onset_sample: probe,
                    reason: PingFailure::Dsp(e).to_string(),
                });
                cursor = probe + holdoff;
                continue;
            }
        };
        cursor = onset.max(probe) + holdoff;

        let t = Instant::now();
        let guess = match octant_guess(&tdoa.coarse_arrivals, &array.coarse, fs, &guess_params) {
            Ok(g) => g,
            Err(e) => {
                run.skipped.push(SkippedPing {
                    onset_sample: onset,
                    reason: PingFailure::Guess(e).to_string(),
                });
                continue;
            }
        };
        let guess_ms = ms(t);

        let t = Instant::now();
        let result = match gradient_descent(&guess.init, &tdoa, array, params.sound_speed, &params.solver) {
            Ok(r) => r,
            Err(e) => {
                run.skipped.push(SkippedPing {
                    onset_sample: onset,
                    reason: PingFailure::Solver(e).to_string(),
                });
                continue;
            }
        };
        let solve_ms = ms(t);

        let report = AzimuthReport {
            ping_index: run.estimates.len(),
            azimuth: result.azimuth,
            elevation: result.elevation,
            range: result.range,
            octant_guess: guess.octant.to_string(),
            objective: result.objective,
            converged: result.converged,
            window: tdoa.window,
            timing: Some(StageTiming {
                filter_ms,
                window_ms,
                guess_ms,
                solve_ms,
            }),
        };
        run.estimates.push(PingEstimate {
            report,
            tdoa,
            guess,
            result,
        });
    }
    if run.estimates.is_empty() {
        return Err(PipelineError::NoPing);
    }
    Ok(run)
}

/// Renders `scenario` and localizes it with the scenario's array and sound
/// speed.
pub fn localize_scenario(scenario: &Scenario, params: &PipelineParams) -> Result<LocalizationRun, PipelineError> {
    let recording = render_scene(scenario)?;
    let params = PipelineParams {
        sound_speed: scenario.sound_speed,
        carrier: scenario.pinger.frequency,
        ..params.clone()
    };
    run_localization(&recording, &scenario.array, &params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{azimuth_difference, Vec3};
    use crate::simulator::NoiseSpec;

    #[test]
    fn noiseless_default_scenario_reports_each_repetition() {
        let mut s = Scenario::with_pinger(Vec3::new(10.0, 5.0, -2.0));
        s.noise = NoiseSpec::silent();
        let run = localize_scenario(&s, &PipelineParams::default()).unwrap();
        assert_eq!(run.estimates.len(), 2, "{:?}", run.skipped);
        for (k, r) in run.reports().enumerate() {
            assert_eq!(r.ping_index, k);
            assert!(r.converged);
            assert!(azimuth_difference(r.azimuth, 26.565051177077994) < 0.5, "{}", r.azimuth);
        }
        let w: Vec<_> = run.reports().map(|r| r.window.0).collect();
        assert!(w[0] < w[1]);
    }

    #[test]
    fn silence_is_no_ping() {
        let rec = MultiChannelRecording::new(500e3, vec![vec![0.0f32; 50_000]; 8]).unwrap();
        assert!(matches!(
            run_localization(&rec, &HydrophoneArray::default(), &PipelineParams::default()),
            Err(PipelineError::NoPing)
        ));
    }

    #[test]
    fn timing_is_omitted_when_absent() {
        let r = AzimuthReport {
            ping_index: 0,
            azimuth: 1.0,
            elevation: 0.0,
            range: 3.0,
            octant_guess: "+-+".into(),
            objective: 0.0,
            converged: true,
            window: (10, 20),
            timing: None,
        };
        let s = serde_json::to_string(&r).unwrap();
        assert!(!s.contains("timing"));
        assert!(s.contains("\"octant_guess\":\"+-+\""));
        assert!(s.contains("\"window\":[10,20]"));
    }
}
