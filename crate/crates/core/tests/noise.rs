//! Moment checks of the complex generalized Gaussian sampler.

use crpfb::signalgen::{sample_cggd, NoiseSpec};
use statrs::function::gamma::gamma;

/// `E|w|^4 / (E|w|^2)^2` implied by the radial law.
fn magnitude_kurtosis(c: f64) -> f64 {
    gamma(1.0 / c) * gamma(3.0 / c) / gamma(2.0 / c).powi(2)
}

fn moments(shape: f64, n: usize, seed: u64) -> (f64, f64, f64, f64) {
    let w = sample_cggd(&NoiseSpec { shape, variance: 1.0 }, n, seed).unwrap();
    let nf = n as f64;
    let m2 = w.iter().map(|v| v.norm_sqr()).sum::<f64>() / nf;
    let m4 = w.iter().map(|v| v.norm_sqr().powi(2)).sum::<f64>() / nf;
    let re2 = w.iter().map(|v| v.re * v.re).sum::<f64>() / nf;
    let re4 = w.iter().map(|v| v.re.powi(4)).sum::<f64>() / nf;
    (m2, m4 / (m2 * m2), re2, re4 / (re2 * re2))
}

#[test]
fn default_noise_has_unit_power() {
    let (m2, _, _, _) = moments(0.5, 100_000, 1);
    assert!((m2 - 1.0).abs() < 0.05, "{m2}");
}

#[test]
fn gaussian_case_has_real_kurtosis_three() {
    // shape = 1 is the circular Gaussian under exp(-(|w|/α)^(2·shape)).
    let (m2, _, _, k) = moments(1.0, 100_000, 2);
    assert!((m2 - 1.0).abs() < 0.05, "{m2}");
    assert!((k - 3.0).abs() < 0.15, "{k}");
}

#[test]
fn shape_two_is_lighter_tailed_than_gaussian() {
    // Real-part kurtosis is 1.5·Γ(1/c)Γ(3/c)/Γ(2/c)², π·3/4 at c = 2.
    let (_, _, _, k) = moments(2.0, 100_000, 3);
    let want = 1.5 * magnitude_kurtosis(2.0);
    assert!((want - 0.75 * std::f64::consts::PI).abs() < 1e-12);
    assert!((k - want).abs() < 0.05, "{k} vs {want}");
}

#[test]
fn heavy_tail_matches_generalized_gamma_moments() {
    let (m2, mk, _, _) = moments(0.5, 400_000, 4);
    let want = magnitude_kurtosis(0.5);
    assert!((want - 10.0 / 3.0).abs() < 1e-12);
    assert!((m2 - 1.0).abs() < 0.02, "{m2}");
    assert!((mk / want - 1.0).abs() < 0.1, "{mk} vs {want}");
    assert!(mk > magnitude_kurtosis(1.0));
}

#[test]
fn draws_are_circularly_symmetric() {
    let w = sample_cggd(&NoiseSpec::default(), 200_000, 5).unwrap();
    let n = w.len() as f64;
    // Pseudo-variance E[w²] vanishes and real/imaginary powers agree.
    let pseudo = w.iter().map(|v| v * v).sum::<num_complex::Complex64>() / n;
    assert!(pseudo.norm() < 0.02, "{pseudo}");
    let re = w.iter().map(|v| v.re * v.re).sum::<f64>() / n;
    let im = w.iter().map(|v| v.im * v.im).sum::<f64>() / n;
    assert!((re - im).abs() < 0.02, "{re} {im}");
    // Phase quadrants are equally likely.
    let mut quadrants = [0usize; 4];
    for v in &w {
        quadrants[((v.arg() + std::f64::consts::PI) / std::f64::consts::FRAC_PI_2).min(3.999) as usize] += 1;
    }
    for q in quadrants {
        assert!((q as f64 / n - 0.25).abs() < 0.005, "{quadrants:?}");
    }
    // Rotating every draw leaves magnitudes unchanged.
    let rot = num_complex::Complex64::from_polar(1.0, 0.7);
    for v in w.iter().take(1000) {
        assert!(((v * rot).norm() - v.norm()).abs() < 1e-12);
    }
}

#[test]
fn seeded_draws_repeat() {
    let a = sample_cggd(&NoiseSpec::default(), 1, 99).unwrap();
    let b = sample_cggd(&NoiseSpec::default(), 1, 99).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, sample_cggd(&NoiseSpec::default(), 1, 100).unwrap());
}
