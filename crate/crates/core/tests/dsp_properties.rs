use pingloc::dsp::{design_bandpass, detect_ping, estimate_delay, filter_signal, select_stable_window, WindowParams};
use pingloc::geometry::{propagation_delay, HydrophoneArray, Scenario, Vec3};
use pingloc::simulator::{render_scene, NoiseSpec};
use pingloc_testkit::{delayed, dft_magnitude};
use proptest::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};

const FS: f64 = 500_000.0;

fn noise(seed: u64, n: usize) -> Vec<f64> {
    // small LCG keeps the oracle independent of the crate's RNG plumbing
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    (0..n)
        .map(|_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn filter_is_linear(a in -3.0..3.0f64, b in -3.0..3.0f64, s1 in any::<u64>(), s2 in any::<u64>()) {
        let c = design_bandpass(4, 30e3, 50e3, FS).unwrap();
        let x = noise(s1, 2000);
        let y = noise(s2, 2000);
        let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let lhs = filter_signal(&c, &mix);
        let fx = filter_signal(&c, &x);
        let fy = filter_signal(&c, &y);
        for k in 0..lhs.len() {
            prop_assert!((lhs[k] - (a * fx[k] + b * fy[k])).abs() < 1e-12);
        }
    }

    #[test]
    fn swapping_channels_negates_the_delay(seed in any::<u64>(), shift in 0usize..20) {
        let a = filter_signal(&design_bandpass(2, 10e3, 150e3, FS).unwrap(), &noise(seed, 1500));
        let b = delayed(&a, shift);
        let ab = estimate_delay(&a, &b, FS, 25).unwrap();
        let ba = estimate_delay(&b, &a, FS, 25).unwrap();
        prop_assert_eq!(ab.delta_t, -ba.delta_t);
    }

    #[test]
    fn integer_shift_is_recovered(seed in any::<u64>(), shift in 1usize..=100) {
        // zero-padded burst: both copies lie wholly inside the buffer
        let mut x = vec![0.0; 3000];
        x[1000..2000].copy_from_slice(&noise(seed, 1000));
        let d = estimate_delay(&x, &delayed(&x, shift), FS, 120).unwrap();
        prop_assert!((d.delta_t * FS + shift as f64).abs() < 1e-9, "{}", d.delta_t * FS);
    }
}

#[test]
fn analytic_response_matches_fft_of_impulse_response() {
    let c = design_bandpass(4, 30e3, 50e3, FS).unwrap();
    let n = 1 << 14;
    let mut impulse = vec![0.0; n];
    impulse[0] = 1.0;
    let h = filter_signal(&c, &impulse);
    let mut buf: Vec<Complex<f64>> = h.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    for bin in [100usize, 983, 1311, 1500, 1638, 2500, 6000] {
        let f = bin as f64 * FS / n as f64;
        let measured = buf[bin].norm();
        assert!(
            (measured - c.magnitude(f)).abs() < 1e-9,
            "{f} Hz: {measured} vs {}",
            c.magnitude(f)
        );
    }
}

#[test]
fn filter_keeps_40k_and_suppresses_18k() {
    let c = design_bandpass(4, 30e3, 50e3, FS).unwrap();
    let n = 50_000;
    let x: Vec<f64> = (0..n)
        .map(|k| {
            let t = k as f64 / FS;
            (2.0 * std::f64::consts::PI * 18e3 * t).sin() + (2.0 * std::f64::consts::PI * 40e3 * t).sin()
        })
        .collect();
    let y = filter_signal(&c, &x);
    let tail = &y[10_000..];
    let p40 = dft_magnitude(tail, FS, 40e3).powi(2);
    let p18 = dft_magnitude(tail, FS, 18e3).powi(2);
    let db = 10.0 * (p40 / p18).log10();
    assert!(db >= 20.0, "only {db:.1} dB between 40 kHz and 18 kHz");
}

#[test]
fn detection_tracks_geometric_arrival() {
    let mut s = Scenario::with_pinger(Vec3::new(-6.0, 8.0, 1.5));
    s.noise = NoiseSpec::silent();
    s.record_duration = 0.05;
    s.pinger.repetition_interval = 0.05;
    let rec = render_scene(&s).unwrap();
    for (ch, h) in s.array.positions_by_channel().iter().enumerate() {
        let x: Vec<f64> = rec.channels[ch].iter().map(|&v| v as f64).collect();
        let onset = detect_ping(&x, FS, 5.0).unwrap();
        let expected = propagation_delay(s.pinger.position, *h, s.sound_speed) * FS;
        // noiseless: the first nonzero sample follows the arrival
        assert!(
            (onset as f64 - expected) >= 0.0 && (onset as f64 - expected) <= 1.0,
            "ch {ch}: {onset} vs {expected}"
        );
    }
}

#[test]
fn stable_window_steps_around_a_glitch() {
    let mut s = Scenario::with_pinger(Vec3::new(8.0, -5.0, 2.0));
    s.noise = NoiseSpec::silent();
    s.record_duration = 0.05;
    s.pinger.repetition_interval = 0.05;
    let array = HydrophoneArray::default();
    let clean = render_scene(&s).unwrap();
    let cascade = design_bandpass(4, 30e3, 50e3, FS).unwrap();
    let params = WindowParams::default();
    let base = select_stable_window(&clean, &cascade, &array, &params).unwrap();

    let mut glitched = clean.clone();
    let at = base.window.0 + 150;
    let ch = array.precise_channels()[1];
    for k in 0..3 {
        glitched.channels[ch][at + k] += 3.0;
    }
    let set = select_stable_window(&glitched, &cascade, &array, &params).unwrap();
    assert!(
        set.window.0 > at,
        "window {:?} still covers the glitch at {at}",
        set.window
    );
    let ch_ = array.precise_channels();
    for d in &set.pairwise {
        let i = ch_.iter().position(|&c| c == d.pair.0).unwrap();
        let j = ch_.iter().position(|&c| c == d.pair.1).unwrap();
        let truth = (s.pinger.position.distance(array.precise[i]) - s.pinger.position.distance(array.precise[j]))
            / s.sound_speed;
        assert!(
            (d.delta_t - truth).abs() * FS < 0.1,
            "{:?}: {} vs {truth}",
            d.pair,
            d.delta_t
        );
    }
}
