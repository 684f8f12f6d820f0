use pingloc::geometry::{azimuth_difference, true_azimuth_elevation, HydrophoneArray, Vec3};
use pingloc::solver::{gradient_descent, gradient_descent_traced, objective_and_gradient, SolverParams, Theta};
use pingloc_testkit::{exact_tdoa, finite_difference_gradient, grid_search, objective};
use proptest::prelude::*;

const C: f64 = 1480.0;

fn source() -> impl Strategy<Value = Vec3> {
    (-30.0..30.0f64, -30.0..30.0f64, -20.0..20.0f64)
        .prop_filter("away from the array", |(x, y, z)| (x * x + y * y + z * z).sqrt() > 3.0)
        .prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn gradient_matches_finite_differences(
        truth in source(),
        probe in source(),
        t0 in 0.0..0.5f64,
        dt in -2e-3..2e-3f64,
        jitter in prop::collection::vec(-5e-6..5e-6f64, 7),
    ) {
        let array = HydrophoneArray::default();
        let mut set = exact_tdoa(&array, &Theta { position: truth, t0 }, C);
        for (d, j) in set.pairwise.iter_mut().zip(&jitter) {
            d.delta_t += j;
        }
        set.onset_time_abs += jitter[6];
        let theta = Theta { position: probe, t0: t0 + dt };
        let (f, g) = objective_and_gradient(&theta, &set, &array, C).unwrap();
        prop_assert!((f - objective(&theta, &set, &array, C)).abs() <= 1e-12 * f.max(1e-30));
        let fd = finite_difference_gradient(|t| objective(t, &set, &array, C), &theta, [1e-6; 4]);
        for k in 0..4 {
            let scale = g[k].abs().max(fd[k].abs());
            // components that are pure rounding noise carry no information
            if scale < 1e-16 {
                continue;
            }
            prop_assert!((g[k] - fd[k]).abs() <= 1e-5 * scale, "component {k}: {} vs {}", g[k], fd[k]);
        }
    }

    #[test]
    fn objective_never_increases(truth in source(), t0 in 0.0..0.5f64, sx in any::<bool>(), sy in any::<bool>()) {
        let array = HydrophoneArray::default();
        let set = exact_tdoa(&array, &Theta { position: truth, t0 }, C);
        let s = |b: bool| if b { 1.0 } else { -1.0 };
        let init = Theta { position: Vec3::new(6.0 * s(sx), 6.0 * s(sy), 4.0), t0: t0 - 0.01 };
        let (_, trace) = gradient_descent_traced(&init, &set, &array, C, &SolverParams::default()).unwrap();
        for w in trace.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
    }
}

#[test]
fn translation_covariance() {
    let array = HydrophoneArray::default();
    let truth = Theta {
        position: Vec3::new(9.0, -4.0, 2.5),
        t0: 0.05,
    };
    let init = Theta {
        position: Vec3::new(5.8, -5.8, 5.8),
        t0: 0.04,
    };
    let base = gradient_descent(
        &init,
        &exact_tdoa(&array, &truth, C),
        &array,
        C,
        &SolverParams::default(),
    )
    .unwrap();
    for d in [Vec3::new(1.0, 2.0, -0.5), Vec3::new(-3.0, 0.25, 4.0)] {
        let mut moved = array.clone();
        moved.precise = moved.precise.map(|h| h + d);
        moved.coarse = moved.coarse.map(|h| h + d);
        let truth_d = Theta {
            position: truth.position + d,
            ..truth
        };
        let init_d = Theta {
            position: init.position + d,
            ..init
        };
        let r = gradient_descent(
            &init_d,
            &exact_tdoa(&moved, &truth_d, C),
            &moved,
            C,
            &SolverParams::default(),
        )
        .unwrap();
        let shift = (r.theta.position - d).distance(base.theta.position);
        assert!(shift < 1e-6, "translated estimate off by {shift} m");
        assert!(azimuth_difference(r.azimuth, base.azimuth) < 1e-6);
    }
}

#[test]
fn converged_objective_beats_the_grid_oracle() {
    let array = HydrophoneArray::default();
    let c0 = array.precise_centroid();
    for (k, p) in [
        Vec3::new(10.0, 5.0, -2.0),
        Vec3::new(-7.0, 12.0, 4.0),
        Vec3::new(-15.0, -15.0, -6.0),
        Vec3::new(3.0, -20.0, 9.0),
    ]
    .into_iter()
    .enumerate()
    {
        let truth = Theta {
            position: p,
            t0: 0.01 * k as f64,
        };
        let set = exact_tdoa(&array, &truth, C);
        let octant = pingloc::geometry::octant_of(p - array.coarse_centroid());
        let init = pingloc::guess::initial_point(octant, 10.0, array.coarse_centroid(), C, truth.t0).unwrap();
        let r = gradient_descent(&init, &set, &array, C, &SolverParams::default()).unwrap();
        let grid = grid_search(&set, &array, C, c0, 30.0, 21);
        assert!(r.converged);
        assert!(
            r.objective <= grid.objective,
            "{} > grid {}",
            r.objective,
            grid.objective
        );
        let (az, _) = true_azimuth_elevation(p - c0).unwrap();
        assert!(azimuth_difference(r.azimuth, az) < 0.5);
    }
}

/// A high-elevation source seen from the opposite octant: descent stalls on
/// the mirrored-elevation branch, while the octant-correct start does not.
#[test]
fn mirrored_start_can_stall_in_a_local_minimum() {
    let array = HydrophoneArray::default();
    let c0 = array.precise_centroid();
    let truth = Theta {
        position: c0 + Vec3::new(6.0, 4.0, 12.0),
        t0: 0.0,
    };
    let set = exact_tdoa(&array, &truth, C);
    let good = pingloc::guess::initial_point("+++".parse().unwrap(), 10.0, c0, C, 0.0).unwrap();
    let mirrored = pingloc::guess::initial_point("---".parse().unwrap(), 10.0, c0, C, 0.0).unwrap();
    let a = gradient_descent(&good, &set, &array, C, &SolverParams::default()).unwrap();
    let b = gradient_descent(&mirrored, &set, &array, C, &SolverParams::default()).unwrap();
    assert!(
        a.elevation > 0.0 && b.elevation < 0.0,
        "{} {}",
        a.elevation,
        b.elevation
    );
    assert!(b.objective > 1e3 * a.objective, "{} vs {}", b.objective, a.objective);
}
