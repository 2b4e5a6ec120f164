//! Randomized checks of the verification oracle against the constructions.

mod common;

use common::rng;
use eei_core::verify_oracle::{check_eei, check_worst_noise, NamedDensity, ScalarEEI};
use rand::Rng;

/// Random non-Gaussian input with variance `var`: a uniform or a rescaled
/// two-component mixture.
fn random_density(r: &mut rand_chacha::ChaCha8Rng, var: f64) -> NamedDensity {
    if r.random_bool(0.3) {
        return NamedDensity::uniform_with_variance(var);
    }
    let w = r.random_range(0.1..0.9);
    let (m1, m2) = (r.random_range(-3.0..0.0), r.random_range(0.0..3.0));
    let (s1, s2) = (r.random_range(0.15..1.5), r.random_range(0.15..1.5));
    let raw = NamedDensity::Mixture { w, m1, s1, m2, s2 };
    let c = (var / raw.variance()).sqrt();
    NamedDensity::Mixture {
        w,
        m1: c * m1,
        s1: c * s1,
        m2: c * m2,
        s2: c * s2,
    }
}

#[test]
fn eei_margin_on_fifty_densities_per_instance() {
    let mut r = rng(31);
    let instances = [
        ScalarEEI {
            mu: 2.0,
            s2_w: 1.0,
            s2_v: None,
            r: 1.0,
        },
        ScalarEEI {
            mu: 3.0,
            s2_w: 0.5,
            s2_v: Some(4.0),
            r: 2.0,
        },
    ];
    for p in instances {
        let mut worst = f64::INFINITY;
        for _ in 0..50 {
            let var = p.r * r.random_range(0.3..1.0);
            let g = random_density(&mut r, var).grid(2001).unwrap();
            worst = worst.min(check_eei(&g, &p, 1e-3).unwrap().margin);
        }
        assert!(worst >= -1e-3, "{p:?}: {worst}");
    }
}

#[test]
fn worst_noise_margin_on_random_densities() {
    let mut r = rng(32);
    for _ in 0..30 {
        let var = r.random_range(0.3..2.0);
        let g = random_density(&mut r, var).grid(2001).unwrap();
        let rep = check_worst_noise(&g, r.random_range(0.2..2.0), r.random_range(0.2..2.0), 1e-4)
            .unwrap();
        assert!(rep.passed, "{rep:?}");
    }
}
