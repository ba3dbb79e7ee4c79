//! Test-signal synthesis: the polynomial-phase signal with sinusoidal
//! amplitude fluctuation (S1), the sinusoidal-FM signal (S2), complex
//! generalized Gaussian noise, and the ground-truth instantaneous frequency.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::numfmt::g17;
use crate::rng::{self, Domain, StreamRng};
use crate::{Error, Result};

/// A uniformly sampled complex baseband record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexSeries {
    pub t0: f64,
    pub dt: f64,
    pub samples: Vec<Complex64>,
}

impl ComplexSeries {
    pub fn new(t0: f64, dt: f64, samples: Vec<Complex64>) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Config(format!("sample period must be positive, got {dt}")));
        }
        if samples.is_empty() {
            return Err(Error::Config("a series needs at least one sample".into()));
        }
        Ok(Self { t0, dt, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Writes the `l,t,re,im` CSV dump.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "l,t,re,im")?;
        for (l, z) in self.samples.iter().enumerate() {
            let t = self.t0 + l as f64 * self.dt;
            writeln!(w, "{},{},{},{}", l, g17(t), g17(z.re), g17(z.im))?;
        }
        Ok(())
    }

    /// Reads a `l,t,re,im` CSV dump. The sample period is recovered from the
    /// first two time stamps.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty signal file".into()))??;
        if header.trim() != "l,t,re,im" {
            return Err(Error::Parse(format!("unexpected signal header `{}`", header.trim())));
        }
        let mut times = Vec::new();
        let mut samples = Vec::new();
        for (row, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != 4 {
                return Err(Error::Parse(format!("row {}: expected 4 fields", row + 1)));
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("row {}: `{s}`: {e}", row + 1)))
            };
            let l: usize = fields[0]
                .parse()
                .map_err(|e| Error::Parse(format!("row {}: bad index: {e}", row + 1)))?;
            if l != samples.len() {
                return Err(Error::Parse(format!("row {}: index {l} out of sequence", row + 1)));
            }
            times.push(parse(fields[1])?);
            samples.push(Complex64::new(parse(fields[2])?, parse(fields[3])?));
        }
        if samples.len() < 2 {
            return Err(Error::Parse("a signal file needs at least two samples".into()));
        }
        let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
        ComplexSeries::new(times[0], dt, samples)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignalKind {
    S1,
    S2,
}

/// Parameters of one test signal.
///
/// For S1, `b` is the amplitude-fluctuation depth and `coeffs` holds the IF
/// polynomial coefficients `a1..a4`. For S2, `b` is the FM index and `coeffs`
/// is ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub kind: SignalKind,
    #[serde(rename = "T")]
    pub t_obs: f64,
    pub ts: f64,
    pub snr_db: f64,
    pub b: f64,
    #[serde(default)]
    pub coeffs: [f64; 4],
}

pub const COEFF_BOUND: f64 = 20.0;

impl SignalSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_obs > 0.0) || !(self.ts > 0.0) {
            return Err(Error::Config("T and ts must be positive".into()));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::Config("snr_db must be finite".into()));
        }
        match self.kind {
            SignalKind::S1 => {
                if !(0.0..=1.0).contains(&self.b) {
                    return Err(Error::Config(format!("S1 fluctuation depth b={} not in [0, 1]", self.b)));
                }
                if self.coeffs.iter().any(|a| !(a.abs() <= COEFF_BOUND)) {
                    return Err(Error::Config(format!(
                        "S1 coefficients {:?} must lie in [-20, 20]",
                        self.coeffs
                    )));
                }
            }
            SignalKind::S2 => {
                if !(self.b.abs() <= 40.0) {
                    return Err(Error::Config(format!("S2 FM index b={} not in [-40, 40]", self.b)));
                }
            }
        }
        Ok(())
    }

    /// Number of samples `round(T / ts)`.
    pub fn n_samples(&self) -> usize {
        (self.t_obs / self.ts).round() as usize
    }

    /// Draws `a1..a4` uniformly from `[-20, 20]`.
    pub fn with_random_coeffs<R: Rng + ?Sized>(mut self, rng: &mut R) -> Self {
        for a in self.coeffs.iter_mut() {
            *a = rng.random_range(-COEFF_BOUND..=COEFF_BOUND);
        }
        self
    }

    fn envelope(&self, a: f64, t: f64) -> f64 {
        match self.kind {
            SignalKind::S1 => a * (1.0 + self.b * (12.0 * PI * t).cos()),
            SignalKind::S2 => a,
        }
    }

    /// Phase in cycles (the argument of `exp(2πj·)`).
    fn phase_cycles(&self, t: f64) -> f64 {
        match self.kind {
            SignalKind::S1 => {
                let [a1, a2, a3, a4] = self.coeffs;
                t * (a1 + t * (a2 / 2.0 + t * (a3 / 3.0 + t * a4 / 4.0)))
            }
            SignalKind::S2 => -self.b * (2.0 * PI * t).cos() / (2.0 * PI),
        }
    }

    /// The noise-free sample at time `t` for amplitude `a`.
    pub fn clean_sample(&self, a: f64, t: f64) -> Complex64 {
        Complex64::from_polar(self.envelope(a, t), 2.0 * PI * self.phase_cycles(t))
    }
}

/// Ground-truth instantaneous frequency curve.
pub trait IfCurve {
    /// `(f(t), f'(t))` in Hz and Hz/s.
    fn if_at(&self, t: f64) -> (f64, f64);
}

impl IfCurve for SignalSpec {
    fn if_at(&self, t: f64) -> (f64, f64) {
        match self.kind {
            SignalKind::S1 => {
                let [a1, a2, a3, a4] = self.coeffs;
                (
                    a1 + t * (a2 + t * (a3 + t * a4)),
                    a2 + t * (2.0 * a3 + t * 3.0 * a4),
                )
            }
            SignalKind::S2 => {
                let w = 2.0 * PI * t;
                (self.b * w.sin(), 2.0 * PI * self.b * w.cos())
            }
        }
    }
}

impl<F: Fn(f64) -> (f64, f64)> IfCurve for F {
    fn if_at(&self, t: f64) -> (f64, f64) {
        self(t)
    }
}

/// Complex generalized Gaussian noise with density proportional to
/// `exp(-(|w|/α)^(2·shape))`. `shape = 1` is the circular Gaussian, smaller
/// shapes are heavier tailed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub shape: f64,
    pub variance: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self { shape: 0.5, variance: 1.0 }
    }
}

impl NoiseSpec {
    /// Zero variance switches noise off entirely.
    pub fn silent() -> Self {
        Self { shape: 0.5, variance: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.shape > 0.0) || !self.shape.is_finite() {
            return Err(Error::Config(format!("noise shape must be positive, got {}", self.shape)));
        }
        if !(self.variance >= 0.0) || !self.variance.is_finite() {
            return Err(Error::Config(format!(
                "noise variance must be non-negative, got {}",
                self.variance
            )));
        }
        Ok(())
    }

    /// Radial scale α with `E|w|² = variance`.
    fn alpha(&self) -> f64 {
        let c = self.shape;
        (self.variance * (ln_gamma(1.0 / c) - ln_gamma(2.0 / c)).exp()).sqrt()
    }
}

/// Signal amplitude `a` that realises `spec.snr_db` for unit noise power.
pub fn amplitude_from_snr(spec: &SignalSpec) -> f64 {
    let power = 10f64.powf(spec.snr_db / 10.0);
    match spec.kind {
        SignalKind::S1 => (power / (1.0 + spec.b * spec.b / 2.0)).sqrt(),
        SignalKind::S2 => power.sqrt(),
    }
}

/// SNR in dB of a signal with amplitude `a` (inverse of [`amplitude_from_snr`]).
pub fn snr_db_of(kind: SignalKind, a: f64, b: f64) -> f64 {
    match kind {
        SignalKind::S1 => 10.0 * (a * a * (1.0 + b * b / 2.0)).log10(),
        SignalKind::S2 => 20.0 * a.log10(),
    }
}

/// `(f(t), f'(t))` of the test signal, for `t` in `[0, T]`.
pub fn true_if(spec: &SignalSpec, t: f64) -> Result<(f64, f64)> {
    if !(0.0..=spec.t_obs).contains(&t) {
        return Err(Error::TimeOutOfRange { t, t_max: spec.t_obs });
    }
    Ok(spec.if_at(t))
}

/// Draws `n` i.i.d. complex generalized Gaussian samples from `rng`.
pub fn sample_cggd_with<R: Rng + ?Sized>(noise: &NoiseSpec, n: usize, rng: &mut R) -> Vec<Complex64> {
    if noise.variance == 0.0 {
        return vec![Complex64::new(0.0, 0.0); n];
    }
    // With u = (r/α)^(2c), the radial density r·exp(-(r/α)^(2c)) becomes
    // u^(1/c - 1)·exp(-u), i.e. u ~ Gamma(1/c, 1).
    let c = noise.shape;
    let alpha = noise.alpha();
    let radial = Gamma::new(1.0 / c, 1.0).expect("positive gamma shape");
    (0..n)
        .map(|_| {
            let u: f64 = radial.sample(rng);
            let r = alpha * u.powf(0.5 / c);
            let theta = rng.random::<f64>() * 2.0 * PI;
            Complex64::from_polar(r, theta)
        })
        .collect()
}

/// Seeded complex generalized Gaussian draws.
pub fn sample_cggd(noise: &NoiseSpec, n: usize, seed: u64) -> Result<Vec<Complex64>> {
    noise.validate()?;
    if n == 0 {
        return Err(Error::Config("need at least one noise sample".into()));
    }
    Ok(sample_cggd_with(noise, n, &mut noise_stream(seed)))
}

fn noise_stream(seed: u64) -> StreamRng {
    rng::stream(seed, Domain::Noise, &[])
}

/// Synthesizes `s(l·ts) + w[l]` for `l = 0..round(T/ts)`.
pub fn synthesize(spec: &SignalSpec, noise: &NoiseSpec, seed: u64) -> Result<ComplexSeries> {
    synthesize_scaled(spec, noise, seed, 1.0)
}

/// Noise-only record with the same grid as `spec`.
pub fn synthesize_noise(spec: &SignalSpec, noise: &NoiseSpec, seed: u64) -> Result<ComplexSeries> {
    synthesize_scaled(spec, noise, seed, 0.0)
}

/// Shared path of [`synthesize`] and [`synthesize_noise`]; `signal_gain`
/// multiplies the SNR-derived amplitude.
fn synthesize_scaled(
    spec: &SignalSpec,
    noise: &NoiseSpec,
    seed: u64,
    signal_gain: f64,
) -> Result<ComplexSeries> {
    spec.validate()?;
    noise.validate()?;
    let n = spec.n_samples();
    if n == 0 {
        return Err(Error::Config("T/ts rounds to zero samples".into()));
    }
    let a = amplitude_from_snr(spec) * signal_gain;
    let w = sample_cggd_with(noise, n, &mut noise_stream(seed));
    let samples = w
        .into_iter()
        .enumerate()
        .map(|(l, w)| {
            let t = l as f64 * spec.ts;
            if a == 0.0 {
                w
            } else {
                spec.clean_sample(a, t) + w
            }
        })
        .collect();
    ComplexSeries::new(0.0, spec.ts, samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn s1(snr_db: f64, b: f64, coeffs: [f64; 4]) -> SignalSpec {
        SignalSpec { kind: SignalKind::S1, t_obs: 1.0, ts: 1.0 / 512.0, snr_db, b, coeffs }
    }

    fn s2(snr_db: f64, b: f64) -> SignalSpec {
        SignalSpec { kind: SignalKind::S2, t_obs: 1.0, ts: 1.0 / 512.0, snr_db, b, coeffs: [0.0; 4] }
    }

    #[test]
    fn amplitude_examples() {
        assert!(close(amplitude_from_snr(&s2(0.0, 10.0)), 1.0, 1e-15));
        let want = (10f64.powf(-1.1) / 1.18).sqrt();
        let a = amplitude_from_snr(&s1(-11.0, 0.6, [0.0; 4]));
        assert!(close(a, want, 1e-15));
        assert!(close(a, 0.2594, 1e-4));
        assert!(close(amplitude_from_snr(&s1(0.0, 0.0, [0.0; 4])), 1.0, 1e-15));
    }

    #[test]
    fn snr_roundtrip() {
        for &snr in &[-20.0, -11.0, -3.3, 0.0, 7.0, 25.0] {
            for &b in &[0.0, 0.3, 0.6, 1.0] {
                let spec = s1(snr, b, [0.0; 4]);
                let back = snr_db_of(SignalKind::S1, amplitude_from_snr(&spec), b);
                assert!(close(back, snr, 1e-12), "{snr} {b} -> {back}");
            }
            let back = snr_db_of(SignalKind::S2, amplitude_from_snr(&s2(snr, 3.0)), 3.0);
            assert!(close(back, snr, 1e-12));
        }
    }

    #[test]
    fn true_if_examples() {
        assert_eq!(true_if(&s1(0.0, 0.0, [5.0, 0.0, 0.0, 0.0]), 0.3).unwrap(), (5.0, 0.0));
        let (f, fd) = true_if(&s2(0.0, 40.0), 0.25).unwrap();
        assert!(close(f, 40.0, 1e-12) && close(fd, 0.0, 1e-9));
        assert_eq!(true_if(&s1(0.0, 0.0, [0.0, 10.0, 0.0, 0.0]), 0.5).unwrap(), (5.0, 10.0));
        assert!(matches!(
            true_if(&s2(0.0, 1.0), 1.5),
            Err(Error::TimeOutOfRange { .. })
        ));
        assert!(true_if(&s2(0.0, 1.0), -0.01).is_err());
    }

    #[test]
    fn true_if_derivative_matches_central_difference() {
        let h = 1e-5;
        let specs = [s1(0.0, 0.5, [3.0, -12.0, 17.5, -19.0]), s2(0.0, -33.0)];
        for spec in &specs {
            for i in 1..20 {
                let t = i as f64 / 20.0;
                let (fp, _) = spec.if_at(t + h);
                let (fm, _) = spec.if_at(t - h);
                let (_, fd) = spec.if_at(t);
                // Third derivative is at most a few thousand Hz/s^3; h^2 term ~1e-6.
                assert!(close((fp - fm) / (2.0 * h), fd, 1e-4), "t={t}");
            }
        }
    }

    #[test]
    fn noise_free_carriers_are_constant() {
        let silent = NoiseSpec::silent();
        for spec in [s2(0.0, 0.0), s1(0.0, 0.0, [0.0; 4])] {
            let z = synthesize(&spec, &silent, 1).unwrap();
            assert_eq!(z.len(), 512);
            for s in &z.samples {
                assert!(close(s.re, 1.0, 1e-15) && close(s.im, 0.0, 1e-15));
            }
        }
    }

    #[test]
    fn noise_free_envelope_is_exact() {
        let silent = NoiseSpec::silent();
        let spec = s1(-3.0, 0.7, [4.0, -9.0, 13.0, 2.0]);
        let a = amplitude_from_snr(&spec);
        let z = synthesize(&spec, &silent, 0).unwrap();
        for (l, s) in z.samples.iter().enumerate() {
            let t = l as f64 * spec.ts;
            let want = a * (1.0 + 0.7 * (12.0 * PI * t).cos());
            assert!(close(s.norm(), want, 1e-14));
        }
        let spec = s2(4.0, 25.0);
        let a = amplitude_from_snr(&spec);
        for s in &synthesize(&spec, &silent, 0).unwrap().samples {
            assert!(close(s.norm(), a, 1e-14));
        }
    }

    #[test]
    fn synthesize_is_seeded() {
        let spec = s1(-10.0, 0.6, [1.0, 2.0, 3.0, 4.0]);
        let noise = NoiseSpec::default();
        let a = synthesize(&spec, &noise, 11).unwrap();
        assert_eq!(a, synthesize(&spec, &noise, 11).unwrap());
        assert_ne!(a, synthesize(&spec, &noise, 12).unwrap());
    }

    #[test]
    fn single_draw_is_deterministic() {
        let noise = NoiseSpec::default();
        assert_eq!(sample_cggd(&noise, 1, 5).unwrap(), sample_cggd(&noise, 1, 5).unwrap());
    }

    #[test]
    fn validation_rejects_bad_specs() {
        assert!(s1(0.0, 1.5, [0.0; 4]).validate().is_err());
        assert!(s1(0.0, 0.5, [0.0, 21.0, 0.0, 0.0]).validate().is_err());
        assert!(s2(0.0, 41.0).validate().is_err());
        assert!(NoiseSpec { shape: 0.0, variance: 1.0 }.validate().is_err());
        assert!(sample_cggd(&NoiseSpec::default(), 0, 1).is_err());
    }

    #[test]
    fn csv_roundtrip_is_bit_exact() {
        let spec = s1(-5.0, 0.6, [1.5, -2.0, 7.0, 0.25]);
        let z = synthesize(&spec, &NoiseSpec::default(), 3).unwrap();
        let mut buf = Vec::new();
        z.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"l,t,re,im\n0,0,"));
        let back = ComplexSeries::read_csv(&buf[..]).unwrap();
        assert_eq!(back.samples, z.samples);
        assert!(close(back.dt, z.dt, 1e-15));
    }
}
