//! Synthetic test rig: keyed-sinusoid pinger, spherical spreading to each
//! hydrophone, an emulated analog front-end (gain and bandpass) and
//! artificial noise.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::{design_bandpass, design_lowpass, filter_signal, DspError};
use crate::geometry::{validate_array, GeometryError, PingerSource, Scenario};
use crate::recording::{MultiChannelRecording, RecordingError};

/// Length of the raised-cosine on/off ramps of each burst, seconds.
pub const RAMP_DURATION: f64 = 0.5e-3;

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error(transparent)]
    Scenario(#[from] GeometryError),
    #[error("array fails validation: {0}")]
    InvalidArray(String),
    #[error("pinger out of recording window")]
    OutOfWindow,
    #[error("duration must be positive")]
    NonPositiveDuration,
    #[error(transparent)]
    Filter(#[from] DspError),
    #[error(transparent)]
    Recording(#[from] RecordingError),
}

/// Additive noise model. The default is the calibrated pool-like mix used
/// throughout the test suite: broadband hiss, an 18 kHz interferer and
/// low-frequency thruster rumble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub white_sigma: f64,
    pub interferer_amp: f64,
    pub interferer_freq: f64,
    /// RMS of the low-frequency component.
    pub lowfreq_amp: f64,
    pub lowfreq_cutoff: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            white_sigma: 0.05,
            interferer_amp: 0.1,
            interferer_freq: 18_000.0,
            lowfreq_amp: 0.2,
            lowfreq_cutoff: 2_000.0,
        }
    }
}

impl NoiseSpec {
    pub fn silent() -> Self {
        Self {
            white_sigma: 0.0,
            interferer_amp: 0.0,
            lowfreq_amp: 0.0,
            ..Self::default()
        }
    }

    pub fn white(sigma: f64) -> Self {
        Self {
            white_sigma: sigma,
            ..Self::silent()
        }
    }

    pub fn is_silent(&self) -> bool {
        self.white_sigma == 0.0 && self.interferer_amp == 0.0 && self.lowfreq_amp == 0.0
    }

    pub fn check(&self) -> Result<(), String> {
        let amps = [self.white_sigma, self.interferer_amp, self.lowfreq_amp];
        if amps.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
            return Err("noise amplitudes must be finite and non-negative".into());
        }
        if !(self.interferer_freq >= 0.0) || !(self.lowfreq_cutoff >= 0.0) {
            return Err("noise frequencies must be non-negative".into());
        }
        Ok(())
    }
}

/// Analog gain stage followed by a bandpass, emulated digitally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelModel {
    /// V/V
    pub gain: f64,
    pub analog_band_low: f64,
    pub analog_band_high: f64,
    pub analog_order: usize,
}

impl Default for ChannelModel {
    fn default() -> Self {
        Self {
            gain: 10.0,
            analog_band_low: 30_000.0,
            analog_band_high: 50_000.0,
            analog_order: 4,
        }
    }
}

impl ChannelModel {
    pub fn check(&self, sample_rate: f64) -> Result<(), String> {
        if !(self.gain > 0.0) {
            return Err("front_end gain must be positive".into());
        }
        if !(0.0 < self.analog_band_low
            && self.analog_band_low < self.analog_band_high
            && self.analog_band_high < sample_rate / 2.0)
        {
            return Err("front_end band must satisfy 0 < low < high < sample_rate/2".into());
        }
        if self.analog_order < 2 || !self.analog_order.is_multiple_of(2) {
            return Err("front_end analog_order must be even and at least 2".into());
        }
        Ok(())
    }
}

/// Source waveform at time `t` seconds after the first emission.
pub fn ping_value(pinger: &PingerSource, t: f64) -> f64 {
    if t < 0.0 {
        return 0.0;
    }
    let tau = t % pinger.repetition_interval;
    if tau >= pinger.ping_duration {
        return 0.0;
    }
    pinger.amplitude * envelope(tau, pinger.ping_duration) * (2.0 * PI * pinger.frequency * tau).sin()
}

fn envelope(tau: f64, duration: f64) -> f64 {
    let ramp = RAMP_DURATION.min(duration / 2.0);
    let edge = tau.min(duration - tau);
    if edge >= ramp {
        1.0
    } else {
        0.5 * (1.0 - (PI * edge / ramp).cos())
    }
}

/// Source waveform sampled at `sample_rate` for `duration` seconds; bursts
/// start at t = 0, T, 2T, ...
pub fn synthesize_ping(pinger: &PingerSource, sample_rate: f64, duration: f64) -> Result<Vec<f64>, SimulationError> {
    if !(duration > 0.0) {
        return Err(SimulationError::NonPositiveDuration);
    }
    pinger.check()?;
    let n = (duration * sample_rate).round() as usize;
    Ok((0..n).map(|k| ping_value(pinger, k as f64 / sample_rate)).collect())
}

/// Noise-free channels: spreading loss, exact fractional delay and the
/// front-end, in recording-channel order.
pub fn render_clean(scenario: &Scenario) -> Result<Vec<Vec<f64>>, SimulationError> {
    scenario.check()?;
    let report = validate_array(&scenario.array, scenario.pinger.frequency, scenario.sound_speed);
    if !report.ok {
        let msgs: Vec<_> = report.violations.iter().map(|v| v.message.as_str()).collect();
        return Err(SimulationError::InvalidArray(msgs.join("; ")));
    }
    let fs = scenario.sample_rate;
    let n = (scenario.record_duration * fs).round() as usize;
    let positions = scenario.array.positions_by_channel();
    let pinger = &scenario.pinger;
    let delays: Vec<f64> = positions
        .iter()
        .map(|&h| crate::geometry::propagation_delay(pinger.position, h, scenario.sound_speed))
        .collect();
    if delays.iter().any(|&d| d >= scenario.record_duration) {
        return Err(SimulationError::OutOfWindow);
    }
    let fe = &scenario.front_end;
    let analog = design_bandpass(fe.analog_order, fe.analog_band_low, fe.analog_band_high, fs)?;

    Ok(positions
        .par_iter()
        .zip(delays.par_iter())
        .map(|(&h, &delay)| {
            let spread = 1.0 / pinger.position.distance(h);
            let first = (delay * fs).floor() as usize;
            let mut x = vec![0.0; n];
            for (k, v) in x.iter_mut().enumerate().skip(first) {
                *v = spread * ping_value(pinger, k as f64 / fs - delay);
            }
            let mut y = filter_signal(&analog, &x);
            for v in &mut y {
                *v *= fe.gain;
            }
            y
        })
        .collect())
}

/// Renders the scenario into an 8-channel recording, noise included.
pub fn render_scene(scenario: &Scenario) -> Result<MultiChannelRecording, SimulationError> {
    let clean = render_clean(scenario)?;
    let clean = to_recording(scenario.sample_rate, clean)?;
    add_noise(&clean, &scenario.noise, scenario.seed)
}

pub(crate) fn to_recording(fs: f64, channels: Vec<Vec<f64>>) -> Result<MultiChannelRecording, SimulationError> {
    let channels = channels
        .into_iter()
        .map(|c| c.into_iter().map(|v| v as f32).collect())
        .collect();
    Ok(MultiChannelRecording::new(fs, channels)?)
}

/// Adds independent per-channel noise. Channel `c` draws from its own
/// ChaCha8 stream `c` of `seed`, so the result is a pure function of the
/// inputs.
pub fn add_noise(
    recording: &MultiChannelRecording,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<MultiChannelRecording, SimulationError> {
    noise
        .check()
        .map_err(|m| SimulationError::Scenario(GeometryError::InvalidScenario(m)))?;
    if noise.is_silent() {
        return Ok(recording.clone());
    }
    let fs = recording.sample_rate;
    let lowpass = if noise.lowfreq_amp > 0.0 {
        Some(design_lowpass(2, noise.lowfreq_cutoff, fs)?)
    } else {
        None
    };
    let channels: Vec<Vec<f32>> = recording
        .channels
        .par_iter()
        .enumerate()
        .map(|(c, samples)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let phase: f64 = rng.gen_range(0.0..2.0 * PI);
            let n = samples.len();
            let mut extra = vec![0.0f64; n];
            if noise.white_sigma > 0.0 {
                for v in extra.iter_mut() {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    *v += noise.white_sigma * g;
                }
            }
            if noise.interferer_amp > 0.0 {
                let w = 2.0 * PI * noise.interferer_freq / fs;
                for (k, v) in extra.iter_mut().enumerate() {
                    *v += noise.interferer_amp * (w * k as f64 + phase).sin();
                }
            }
            if let Some(lp) = &lowpass {
                let raw: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
                let shaped = filter_signal(lp, &raw);
                let rms = (shaped.iter().map(|v| v * v).sum::<f64>() / n.max(1) as f64).sqrt();
                if rms > 0.0 {
                    let k = noise.lowfreq_amp / rms;
                    for (v, s) in extra.iter_mut().zip(&shaped) {
                        *v += k * s;
                    }
                }
            }
            samples
                .iter()
                .zip(&extra)
                .map(|(&s, &e)| (s as f64 + e) as f32)
                .collect()
        })
        .collect();
    Ok(MultiChannelRecording::new(fs, channels)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;

    const FS: f64 = 500_000.0;

    #[test]
    fn single_burst_length_and_peak() {
        let p = PingerSource::at(Vec3::ZERO);
        let s = synthesize_ping(&p, FS, 0.004).unwrap();
        assert_eq!(s.len(), 2000);
        let peak = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(peak <= p.amplitude && peak > 0.99 * p.amplitude, "{peak}");
    }

    #[test]
    fn zero_crossings_match_carrier() {
        let p = PingerSource::at(Vec3::ZERO);
        let s = synthesize_ping(&p, FS, 0.004).unwrap();
        // strict sign changes between consecutive nonzero samples
        let nz: Vec<f64> = s.iter().copied().filter(|v| *v != 0.0).collect();
        let crossings = nz.windows(2).filter(|w| (w[0] > 0.0) != (w[1] > 0.0)).count();
        assert!((crossings as i64 - 320).abs() <= 2, "{crossings}");
    }

    #[test]
    fn bursts_repeat_every_interval() {
        let p = PingerSource::at(Vec3::ZERO);
        let s = synthesize_ping(&p, FS, 4.004).unwrap();
        assert_eq!(s.len(), 2_002_000);
        // bursts occupy exactly [k*2*fs, k*2*fs + 2000) for k = 0, 1, 2
        let burst_of = |k: usize| (k % 1_000_000) < 2000 && k / 1_000_000 < 3;
        for (k, v) in s.iter().enumerate() {
            if !burst_of(k) {
                assert_eq!(*v, 0.0, "sample {k}");
            }
        }
        for onset in [0, 1_000_000, 2_000_000] {
            assert_eq!(s[onset], 0.0);
            assert!(s[onset + 1] != 0.0);
        }
    }

    #[test]
    fn rejects_non_positive_duration() {
        let p = PingerSource::at(Vec3::ZERO);
        assert!(matches!(
            synthesize_ping(&p, FS, 0.0),
            Err(SimulationError::NonPositiveDuration)
        ));
    }

    #[test]
    fn silent_noise_is_identity() {
        let rec = MultiChannelRecording::new(FS, vec![vec![0.25f32, -1.0, 3.5]; 2]).unwrap();
        assert_eq!(add_noise(&rec, &NoiseSpec::silent(), 9).unwrap(), rec);
    }

    #[test]
    fn white_noise_sigma() {
        let rec = MultiChannelRecording::new(FS, vec![vec![0.0f32; 1_000_000]; 2]).unwrap();
        let noisy = add_noise(&rec, &NoiseSpec::white(0.1), 1).unwrap();
        for ch in &noisy.channels {
            let n = ch.len() as f64;
            let mean = ch.iter().map(|&v| v as f64).sum::<f64>() / n;
            let var = ch.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
            assert!((var.sqrt() - 0.1).abs() < 0.003, "{}", var.sqrt());
        }
        assert_ne!(noisy.channels[0], noisy.channels[1]);
    }

    #[test]
    fn noise_is_deterministic_per_seed() {
        let rec = MultiChannelRecording::new(FS, vec![vec![0.0f32; 5000]; 3]).unwrap();
        let spec = NoiseSpec::default();
        assert_eq!(add_noise(&rec, &spec, 5).unwrap(), add_noise(&rec, &spec, 5).unwrap());
        assert_ne!(add_noise(&rec, &spec, 5).unwrap(), add_noise(&rec, &spec, 6).unwrap());
    }

    #[test]
    fn out_of_window_pinger() {
        let mut s = Scenario::with_pinger(Vec3::new(4000.0, 0.0, 0.0));
        s.noise = NoiseSpec::silent();
        assert!(matches!(render_scene(&s), Err(SimulationError::OutOfWindow)));
    }

    #[test]
    fn invalid_array_is_rejected() {
        let mut s = Scenario::with_pinger(Vec3::new(10.0, 0.0, 0.0));
        s.array.precise[1] = s.array.precise[0] + Vec3::new(0.05, 0.0, 0.0);
        assert!(matches!(render_scene(&s), Err(SimulationError::InvalidArray(_))));
    }
}
