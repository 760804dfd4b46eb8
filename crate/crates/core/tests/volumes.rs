//! Monte-Carlo volume oracles for the closed-form measure ratios.

use cml_extremes::lattice::{LatticeState, MapSpec};
use cml_extremes::theory::{ei_periodic_point, leb_ratio, strip_measure_upper_bound};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SAMPLES: usize = 1_000_000;

/// Volume ratio of `{|(1-γ)(x_k - c)| < ν}` to `{|x_k - c| < ν}` over the
/// free coordinates `x_2..x_n`, with `c` kept away from the unit-cube edges.
fn mc_leb_ratio(n: usize, gamma: f64, nu: f64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = 0.5;
    let (mut coupled, mut plain) = (0usize, 0usize);
    for _ in 0..SAMPLES {
        let x: Vec<f64> = (1..n).map(|_| rng.random::<f64>()).collect();
        coupled += usize::from(x.iter().all(|&v| ((1.0 - gamma) * (v - c)).abs() < nu));
        plain += usize::from(x.iter().all(|&v| (v - c).abs() < nu));
    }
    coupled as f64 / plain as f64
}

/// Fraction of the unit cube with `max - min ≤ ν`.
fn mc_strip(n: usize, nu: f64, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hits = (0..samples)
        .filter(|_| {
            let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let hi = x.iter().cloned().fold(f64::MIN, f64::max);
            let lo = x.iter().cloned().fold(f64::MAX, f64::min);
            hi - lo <= nu
        })
        .count();
    hits as f64 / samples as f64
}

#[test]
fn coupled_strip_volume_ratio() {
    for (n, gamma) in [(2, 0.5), (3, 0.3), (2, 0.1), (3, 0.0)] {
        let exact = leb_ratio(n, gamma).unwrap();
        let mc = mc_leb_ratio(n, gamma, 0.15, 17);
        assert!((mc / exact - 1.0).abs() <= 0.02, "n={n} gamma={gamma}: {mc} vs {exact}");
    }
    assert!((leb_ratio(3, 0.3).unwrap() - 1.0 / 0.49).abs() < 1e-12);
}

#[test]
fn strip_volume_stays_below_bound() {
    let mc = mc_strip(2, 0.05, SAMPLES, 5);
    assert!((mc - 0.0975).abs() < 0.002, "{mc}");
    assert!(mc <= strip_measure_upper_bound(2, 0.05).unwrap());
    assert_eq!(strip_measure_upper_bound(2, 0.5).unwrap(), 1.0);

    let mc3 = mc_strip(3, 0.01, 10 * SAMPLES, 6);
    let bound = strip_measure_upper_bound(3, 0.01).unwrap();
    assert!((bound - 4e-4).abs() < 1e-15);
    assert!(mc3 <= bound, "{mc3} vs {bound}");
}

#[test]
fn periodic_point_index_tends_to_one() {
    let mut last = 0.0;
    for n in [2usize, 5, 10, 30, 40] {
        let spec = MapSpec::tripling(n, 0.1).unwrap();
        let theta = ei_periodic_point(&[LatticeState::diagonal(0.0, n).unwrap()], &spec).unwrap();
        // Strictly increasing until it rounds to one in double precision.
        assert!(theta > last || theta == 1.0, "n={n}: {theta} after {last}");
        assert!(theta <= 1.0);
        if n >= 30 {
            assert!(theta > 1.0 - 1e-6, "n={n}: {theta}");
        }
        last = theta;
    }
}
