//! Ping onset detection on a filtered channel: a trailing moving-RMS envelope
//! compared against a multiple of its median.

use super::DspError;

/// Default RMS window, seconds.
pub const DEFAULT_RMS_WINDOW: f64 = 1e-3;
/// Default threshold as a multiple of the noise floor.
pub const DEFAULT_K_THRESHOLD: f64 = 5.0;

/// Moving RMS envelope of one channel with its noise floor, so that repeated
/// onset searches over a long recording reuse the same floor.
#[derive(Debug, Clone)]
pub struct PingDetector {
    rms: Vec<f64>,
    floor: f64,
    threshold: f64,
}

impl PingDetector {
    pub fn new(samples: &[f64], fs: f64, k_threshold: f64) -> Result<Self, DspError> {
        Self::with_window(samples, fs, k_threshold, DEFAULT_RMS_WINDOW)
    }

    pub fn with_window(samples: &[f64], fs: f64, k_threshold: f64, window: f64) -> Result<Self, DspError> {
        if !(k_threshold > 1.0) {
            return Err(DspError::InvalidParameter(format!(
                "k_threshold must exceed 1, got {k_threshold}"
            )));
        }
        let width = ((window * fs).round() as usize).max(1);
        let rms = moving_rms(samples, width);
        let floor = median(&rms);
        Ok(Self {
            rms,
            floor,
            threshold: k_threshold * floor,
        })
    }

    pub fn noise_floor(&self) -> f64 {
        self.floor
    }

    pub fn envelope(&self) -> &[f64] {
        &self.rms
    }

    /// First sample at or after `from` whose envelope exceeds the threshold.
    pub fn first_crossing(&self, from: usize) -> Option<usize> {
        self.rms
            .iter()
            .skip(from)
            .position(|&v| v > self.threshold)
            .map(|i| i + from)
    }

    pub fn first_crossing_before(&self, from: usize, until: usize) -> Option<usize> {
        self.first_crossing(from).filter(|&i| i < until)
    }
}

/// Onset sample of the first ping in `samples`.
pub fn detect_ping(samples: &[f64], fs: f64, k_threshold: f64) -> Result<usize, DspError> {
    PingDetector::new(samples, fs, k_threshold)?
        .first_crossing(0)
        .ok_or(DspError::NoPing)
}

/// Trailing-window RMS: value `n` covers samples `n + 1 - width ..= n`, with
/// samples before the start treated as zero.
fn moving_rms(samples: &[f64], width: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(samples.len());
    // running sum with periodic exact recomputation keeps drift bounded
    let mut acc = 0.0;
    for (n, &x) in samples.iter().enumerate() {
        acc += x * x;
        if n >= width {
            let old = samples[n - width];
            acc -= old * old;
        }
        if n % 4096 == 4095 {
            let lo = (n + 1).saturating_sub(width);
            acc = samples[lo..=n].iter().map(|v| v * v).sum();
        }
        out.push((acc.max(0.0) / width as f64).sqrt());
    }
    out
}

fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    let mid = v.len() / 2;
    let (_, m, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    *m
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};
    use std::f64::consts::PI;

    const FS: f64 = 500_000.0;

    fn noise(n: usize, sigma: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(0.0, sigma).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    fn add_burst(x: &mut [f64], start: f64, amp: f64) {
        let n0 = (start * FS) as usize;
        for i in 0..2000 {
            let t = i as f64 / FS;
            x[n0 + i] += amp * (2.0 * PI * 40_000.0 * t).sin();
        }
    }

    #[test]
    fn onset_found_at_20db() {
        let sigma = 0.01;
        // burst rms = amp / sqrt(2) = 10 sigma
        let amp = 10.0 * sigma * 2f64.sqrt();
        let mut x = noise(600_000, sigma, 3);
        add_burst(&mut x, 0.5, amp);
        let onset = detect_ping(&x, FS, 5.0).unwrap();
        let t = onset as f64 / FS;
        assert!((t - 0.5).abs() <= 0.5e-3, "onset at {t}");
    }

    #[test]
    fn pure_noise_has_no_ping() {
        let x = noise(500_000, 0.01, 4);
        assert_eq!(detect_ping(&x, FS, 5.0), Err(DspError::NoPing));
        assert_eq!(detect_ping(&vec![0.0; 1000], FS, 5.0), Err(DspError::NoPing));
    }

    #[test]
    fn first_of_two_bursts() {
        let mut x = noise(1_400_000, 0.01, 5);
        add_burst(&mut x, 0.5, 0.2);
        add_burst(&mut x, 2.5, 0.2);
        let t = detect_ping(&x, FS, 5.0).unwrap() as f64 / FS;
        assert!((t - 0.5).abs() <= 0.5e-3);
        let det = PingDetector::new(&x, FS, 5.0).unwrap();
        let second = det.first_crossing((0.6 * FS) as usize).unwrap() as f64 / FS;
        assert!((second - 2.5).abs() <= 0.5e-3);
    }

    #[test]
    fn silent_lead_in_gives_exact_onset() {
        let mut x = vec![0.0; 50_000];
        x[12_345] = 1e-9;
        assert_eq!(detect_ping(&x, FS, 5.0).unwrap(), 12_345);
    }

    #[test]
    fn threshold_must_exceed_one() {
        assert!(matches!(
            detect_ping(&[1.0, 2.0], FS, 1.0),
            Err(DspError::InvalidParameter(_))
        ));
    }

    #[test]
    fn moving_rms_of_constant() {
        let r = moving_rms(&vec![2.0; 10_000], 100);
        assert!((r[50] - 2.0 * (51.0f64 / 100.0).sqrt()).abs() < 1e-12);
        assert!(r[100..].iter().all(|v| (v - 2.0).abs() < 1e-12));
    }
}
