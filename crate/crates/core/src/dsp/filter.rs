//! Butterworth IIR design as cascades of second-order sections.
//!
//! Analog prototype poles are mapped through the lowpass-to-bandpass (or
//! lowpass-to-lowpass) transform and then the bilinear transform with
//! prewarped band edges, so the digital response hits exactly -3 dB at the
//! requested edge frequencies.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::DspError;

/// One normalized second-order section, `a0 = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b: [f64; 3],
    /// `[a1, a2]`; the leading denominator coefficient is 1.
    pub a: [f64; 2],
}

impl Biquad {
    /// Complex response at normalized angular frequency `omega` (rad/sample).
    pub fn response(&self, omega: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -omega);
        let z2 = z1 * z1;
        let num = self.b[0] + z1 * self.b[1] + z2 * self.b[2];
        let den = 1.0 + z1 * self.a[0] + z2 * self.a[1];
        num / den
    }

    /// Largest pole radius of the section.
    pub fn pole_radius(&self) -> f64 {
        let [a1, a2] = self.a;
        let disc = a1 * a1 - 4.0 * a2;
        if disc < 0.0 {
            a2.abs().sqrt()
        } else {
            let r = disc.sqrt();
            ((-a1 + r) / 2.0).abs().max(((-a1 - r) / 2.0).abs())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Bandpass,
    Lowpass,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignInfo {
    pub kind: FilterKind,
    pub order: usize,
    pub f_lo: f64,
    pub f_hi: f64,
    pub fs: f64,
}

/// Immutable cascade of biquads plus the parameters it was designed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiquadCascade {
    pub sections: Vec<Biquad>,
    pub design: DesignInfo,
}

impl BiquadCascade {
    pub fn response(&self, freq_hz: f64) -> Complex64 {
        let omega = 2.0 * PI * freq_hz / self.design.fs;
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(omega))
    }

    pub fn magnitude(&self, freq_hz: f64) -> f64 {
        self.response(freq_hz).norm()
    }

    pub fn is_stable(&self) -> bool {
        self.sections.iter().all(|s| s.pole_radius() < 1.0)
    }

    /// Sum of squared impulse-response samples over `len` samples: the output
    /// variance per unit input variance for white noise.
    pub fn noise_power_gain(&self, len: usize) -> f64 {
        let mut impulse = vec![0.0; len];
        if let Some(first) = impulse.first_mut() {
            *first = 1.0;
        }
        filter_signal(self, &impulse).iter().map(|v| v * v).sum()
    }
}

/// Butterworth bandpass of total order `order` (that is, `order / 2` biquads),
/// unit gain at the geometric band centre.
pub fn design_bandpass(order: usize, f_lo: f64, f_hi: f64, fs: f64) -> Result<BiquadCascade, DspError> {
    if order < 2 || !order.is_multiple_of(2) {
        return Err(DspError::InvalidDesign(format!(
            "bandpass order must be even and at least 2, got {order}"
        )));
    }
    if !(fs > 0.0 && f_lo > 0.0 && f_lo < f_hi && f_hi < fs / 2.0) {
        return Err(DspError::InvalidDesign(format!(
            "band edges must satisfy 0 < f_lo < f_hi < fs/2 (f_lo={f_lo}, f_hi={f_hi}, fs={fs})"
        )));
    }
    let proto_order = order / 2;
    let w_lo = prewarp(f_lo, fs);
    let w_hi = prewarp(f_hi, fs);
    let w0 = (w_lo * w_hi).sqrt();
    let bw = w_hi - w_lo;

    let mut analog_poles = Vec::with_capacity(order);
    for p in prototype_poles(proto_order) {
        let pb = p * bw;
        let root = (pb * pb - 4.0 * w0 * w0).sqrt();
        analog_poles.push((pb + root) / 2.0);
        analog_poles.push((pb - root) / 2.0);
    }
    let z_poles: Vec<Complex64> = analog_poles.iter().map(|&s| bilinear(s, fs)).collect();

    // every section gets one zero at z = 1 (DC) and one at z = -1 (Nyquist)
    let mut sections: Vec<Biquad> = pair_poles(&z_poles)
        .into_iter()
        .map(|a| Biquad { b: [1.0, 0.0, -1.0], a })
        .collect();

    let centre = 2.0 * (w0 / (2.0 * fs)).atan();
    normalize_sections(&mut sections, centre);

    Ok(BiquadCascade {
        sections,
        design: DesignInfo {
            kind: FilterKind::Bandpass,
            order,
            f_lo,
            f_hi,
            fs,
        },
    })
}

/// Butterworth lowpass of even `order`, unit gain at DC.
pub fn design_lowpass(order: usize, cutoff: f64, fs: f64) -> Result<BiquadCascade, DspError> {
    if order < 2 || !order.is_multiple_of(2) {
        return Err(DspError::InvalidDesign(format!(
            "lowpass order must be even and at least 2, got {order}"
        )));
    }
    if !(fs > 0.0 && cutoff > 0.0 && cutoff < fs / 2.0) {
        return Err(DspError::InvalidDesign(format!(
            "cutoff must satisfy 0 < cutoff < fs/2 (cutoff={cutoff}, fs={fs})"
        )));
    }
    let wc = prewarp(cutoff, fs);
    let z_poles: Vec<Complex64> = prototype_poles(order)
        .into_iter()
        .map(|p| bilinear(p * wc, fs))
        .collect();
    let mut sections: Vec<Biquad> = pair_poles(&z_poles)
        .into_iter()
        .map(|a| Biquad { b: [1.0, 2.0, 1.0], a })
        .collect();
    normalize_sections(&mut sections, 0.0);
    Ok(BiquadCascade {
        sections,
        design: DesignInfo {
            kind: FilterKind::Lowpass,
            order,
            f_lo: 0.0,
            f_hi: cutoff,
            fs,
        },
    })
}

/// Causal filtering from a zero initial state (transposed direct form II).
pub fn filter_signal(cascade: &BiquadCascade, samples: &[f64]) -> Vec<f64> {
    let mut out = samples.to_vec();
    for s in &cascade.sections {
        let [b0, b1, b2] = s.b;
        let [a1, a2] = s.a;
        let (mut z1, mut z2) = (0.0, 0.0);
        for v in out.iter_mut() {
            let x = *v;
            let y = b0 * x + z1;
            z1 = b1 * x - a1 * y + z2;
            z2 = b2 * x - a2 * y;
            *v = y;
        }
    }
    out
}

fn prewarp(f: f64, fs: f64) -> f64 {
    2.0 * fs * (PI * f / fs).tan()
}

fn bilinear(s: Complex64, fs: f64) -> Complex64 {
    let k = 2.0 * fs;
    (k + s) / (k - s)
}

/// Left-half-plane poles of the unit-cutoff Butterworth prototype.
fn prototype_poles(n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|k| {
            let theta = PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
            Complex64::from_polar(1.0, theta)
        })
        .collect()
}

/// Groups digital poles into real second-order denominators: each
/// upper-half-plane pole with its conjugate, remaining real poles two by two.
fn pair_poles(poles: &[Complex64]) -> Vec<[f64; 2]> {
    const IMAG_EPS: f64 = 1e-12;
    let mut out = Vec::new();
    let mut reals = Vec::new();
    for p in poles {
        if p.im > IMAG_EPS {
            out.push([-2.0 * p.re, p.norm_sqr()]);
        } else if p.im.abs() <= IMAG_EPS {
            reals.push(p.re);
        }
    }
    reals.sort_by(f64::total_cmp);
    for chunk in reals.chunks(2) {
        match *chunk {
            [r1, r2] => out.push([-(r1 + r2), r1 * r2]),
            [r] => out.push([-r, 0.0]),
            _ => unreachable!(),
        }
    }
    out
}

fn normalize_sections(sections: &mut [Biquad], omega: f64) {
    for s in sections.iter_mut() {
        let g = s.response(omega).norm();
        for b in s.b.iter_mut() {
            *b /= g;
        }
    }
}
