//! Independent oracles for the test suites. Nothing here calls into the
//! solver or the DSP code it is used to check; objectives and delays are
//! recomputed from first principles.

use pingloc::dsp::{DelayEstimate, TdoaSet};
use pingloc::geometry::{precise_pairs, HydrophoneArray, Vec3};
use pingloc::solver::Theta;

/// Noise-free TDOA set for a source at `truth`: pair delays and every onset
/// straight from distances.
pub fn exact_tdoa(array: &HydrophoneArray, truth: &Theta, c: f64) -> TdoaSet {
    let ch = array.precise_channels();
    let arrive = |h: Vec3| truth.t0 + truth.position.distance(h) / c;
    let pairwise = precise_pairs()
        .iter()
        .map(|&(i, j)| DelayEstimate {
            pair: (ch[i], ch[j]),
            delta_t: arrive(array.precise[i]) - arrive(array.precise[j]),
            peak_correlation: 1.0,
        })
        .collect();
    TdoaSet {
        reference_channel: ch[0],
        onset_time_abs: arrive(array.precise[0]),
        pairwise,
        coarse_arrivals: array.coarse.map(arrive),
        window: (0, 0),
    }
}

fn locate(array: &HydrophoneArray, channel: usize) -> Vec3 {
    let ch = array.precise_channels();
    let k = ch.iter().position(|&c| c == channel).expect("precise channel");
    array.precise[k]
}

/// `½ Σ r²` written out directly from the residual definitions.
pub fn objective(theta: &Theta, tdoa: &TdoaSet, array: &HydrophoneArray, c: f64) -> f64 {
    let p = theta.position;
    let mut sum = 0.0;
    for d in &tdoa.pairwise {
        let hi = locate(array, d.pair.0);
        let hj = locate(array, d.pair.1);
        let r = (p.distance(hi) - p.distance(hj)) / c - d.delta_t;
        sum += r * r;
    }
    let href = locate(array, tdoa.reference_channel);
    let r = p.distance(href) / c + theta.t0 - tdoa.onset_time_abs;
    0.5 * (sum + r * r)
}

/// Central finite differences of `f` in (x, y, z, t0).
pub fn finite_difference_gradient(f: impl Fn(&Theta) -> f64, theta: &Theta, h: [f64; 4]) -> [f64; 4] {
    let mut g = [0.0; 4];
    for (k, slot) in g.iter_mut().enumerate() {
        let bump = |s: f64| {
            let mut t = *theta;
            match k {
                0 => t.position.x += s,
                1 => t.position.y += s,
                2 => t.position.z += s,
                _ => t.t0 += s,
            }
            t
        };
        *slot = (f(&bump(h[k])) - f(&bump(-h[k]))) / (2.0 * h[k]);
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridBest {
    pub theta: Theta,
    pub objective: f64,
}

/// Brute force over an `n³` grid spanning `centre ± half_width` per axis.
/// At each node `t0` is chosen in closed form so the anchor residual is 0.
pub fn grid_search(
    tdoa: &TdoaSet,
    array: &HydrophoneArray,
    c: f64,
    centre: Vec3,
    half_width: f64,
    n: usize,
) -> GridBest {
    assert!(n >= 2);
    let href = locate(array, tdoa.reference_channel);
    let step = 2.0 * half_width / (n - 1) as f64;
    let mut best = GridBest {
        theta: Theta {
            position: centre,
            t0: 0.0,
        },
        objective: f64::INFINITY,
    };
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let p = centre
                    + Vec3::new(
                        -half_width + i as f64 * step,
                        -half_width + j as f64 * step,
                        -half_width + k as f64 * step,
                    );
                if array.precise.iter().any(|h| h.distance(p) < 1e-3) {
                    continue;
                }
                let theta = Theta {
                    position: p,
                    t0: tdoa.onset_time_abs - p.distance(href) / c,
                };
                let f = objective(&theta, tdoa, array, c);
                if f < best.objective {
                    best = GridBest { theta, objective: f };
                }
            }
        }
    }
    best
}

/// Magnitude of the single-bin DFT of `x` at `freq`, normalized so a unit
/// sinusoid at that frequency gives about 0.5.
pub fn dft_magnitude(x: &[f64], fs: f64, freq: f64) -> f64 {
    let w = 2.0 * std::f64::consts::PI * freq / fs;
    let (mut re, mut im) = (0.0, 0.0);
    for (n, v) in x.iter().enumerate() {
        re += v * (w * n as f64).cos();
        im -= v * (w * n as f64).sin();
    }
    (re * re + im * im).sqrt() / x.len() as f64
}

/// `x` delayed by `k` whole samples, zero-filled, same length.
pub fn delayed(x: &[f64], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    if k < x.len() {
        out[k..].copy_from_slice(&x[..x.len() - k]);
    }
    out
}
