//! Monte Carlo experiment engine.
//!
//! Every trial draws from streams keyed by `(seed, hypothesis tag, trial)`,
//! so results are independent of how trials are spread over workers. H1
//! trials share their noise and S1 coefficients across SNR values and sweep
//! settings (common random numbers), which keeps curves smooth.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crpf::{self, Chunk, CrpfConfig, FilterContext, FilterTrace};
use crate::crpfb::{self, run_bank_with, BankConfig, Exec};
use crate::detector::{decide, test_metric};
use crate::gevfit::{self, GevFit};
use crate::model::ModelConfig;
use crate::numfmt::{csv_row, g17};
use crate::rng::{self, Domain};
use crate::signalgen::{self, ComplexSeries, IfCurve, NoiseSpec, SignalKind, SignalSpec};
use crate::{Error, Result};

const H0: u64 = 0;
const H1: u64 = 1;
const FRESH_H0: u64 = 2;

/// Test-signal family for H1 trials; `T` and `ts` come from the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalTemplate {
    pub kind: SignalKind,
    pub snr_db: f64,
    pub b: f64,
    /// Fixed S1 coefficients; `None` draws them from `[-20, 20]` per trial.
    #[serde(default)]
    pub coeffs: Option<[f64; 4]>,
}

/// The monolithic CRPF used as the comparison detector and estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub n_particles: usize,
    pub q: u32,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { n_particles: 400, q: 5 }
    }
}

/// A complete experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub model: ModelConfig,
    pub bank: BankConfig,
    #[serde(default)]
    pub noise: NoiseSpec,
    pub signal: SignalTemplate,
    #[serde(default)]
    pub baseline: BaselineConfig,
}

impl Scenario {
    /// S1 over `T`, `b = 0.6`, `ts = 1/512`, `dT = 1/16`, 2000 single-particle
    /// filters, `q = 5`.
    pub fn s1(t_obs: f64) -> Self {
        Self {
            model: ModelConfig::standard(t_obs),
            bank: BankConfig { m_filters: 2000, crpf: CrpfConfig { n_particles: 1, q: 5, ..CrpfConfig::default() }, seed: 0 },
            noise: NoiseSpec::default(),
            signal: SignalTemplate { kind: SignalKind::S1, snr_db: -11.0, b: 0.6, coeffs: None },
            baseline: BaselineConfig::default(),
        }
    }

    /// S2 with FM index 40 over one second, four blocks of four subintervals.
    pub fn s2() -> Self {
        let peak_chirp = 2.0 * std::f64::consts::PI * 40.0;
        let mut sc = Self::s1(1.0);
        sc.model.chirp_bounds = [-peak_chirp, peak_chirp];
        sc.model.blocks = Some(4);
        sc.signal = SignalTemplate { kind: SignalKind::S2, snr_db: -11.0, b: 40.0, coeffs: None };
        sc.baseline.n_particles = 800;
        sc
    }

    pub fn validate(&self) -> Result<()> {
        self.model.layout()?;
        self.bank.validate()?;
        self.noise.validate()?;
        if self.baseline.n_particles == 0 || self.baseline.q == 0 {
            return Err(Error::Config("baseline needs N >= 1 and q >= 1".into()));
        }
        self.signal_spec(self.signal.snr_db, 0, 0)?.validate()
    }

    /// Signal of H1 trial `trial` of run `seed` at the given SNR.
    pub fn signal_spec(&self, snr_db: f64, seed: u64, trial: u64) -> Result<SignalSpec> {
        let spec = SignalSpec {
            kind: self.signal.kind,
            t_obs: self.model.t_obs,
            ts: self.model.ts,
            snr_db,
            b: self.signal.b,
            coeffs: self.signal.coeffs.unwrap_or([0.0; 4]),
        };
        Ok(match (self.signal.kind, self.signal.coeffs) {
            (SignalKind::S1, None) => {
                let mut rng = rng::stream(seed, Domain::Coefficients, &[trial]);
                spec.with_random_coeffs(&mut rng)
            }
            _ => spec,
        })
    }

    fn bank_for(&self, seed: u64, tag: u64, trial: u64) -> BankConfig {
        BankConfig { seed: rng::derive_seed(seed, Domain::BankSeed, &[tag, trial]), ..self.bank }
    }

    fn noise_seed(seed: u64, tag: u64, trial: u64) -> u64 {
        rng::derive_seed(seed, Domain::Noise, &[tag, trial])
    }
}

/// `ceil((1 - pfa)(m + 1))`-th smallest metric, clamped to the sample size.
/// `pfa >= 1` gives `-inf`.
pub fn empirical_threshold(metrics: &[f64], pfa: f64) -> Result<f64> {
    if metrics.is_empty() {
        return Err(Error::Config("no metrics to rank".into()));
    }
    if !(pfa > 0.0) {
        return Err(Error::Probability(pfa));
    }
    let m = metrics.len();
    let rank = ((1.0 - pfa) * (m + 1) as f64).ceil();
    if rank < 1.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let rank = (rank as usize).min(m);
    let mut sorted = metrics.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[rank - 1])
}

/// Wilson score 95% interval for `successes / n`.
pub fn wilson_interval(successes: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    const Z: f64 = 1.959_963_984_540_054;
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let z2 = Z * Z;
    let denom = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / denom;
    let half = Z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

pub fn wilson_halfwidth(successes: usize, n: usize) -> f64 {
    let (lo, hi) = wilson_interval(successes, n);
    0.5 * (hi - lo)
}

fn run_trials<T: Send>(n: usize, f: impl Fn(u64) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..n as u64).into_par_iter().map(f).collect()
}

/// Ψ of the bank on one noise-only record.
pub fn h0_metric(sc: &Scenario, seed: u64, tag: u64, trial: u64) -> Result<f64> {
    let spec = sc.signal_spec(0.0, seed, 0)?;
    let z = signalgen::synthesize_noise(&spec, &sc.noise, Scenario::noise_seed(seed, tag, trial))?;
    let result = run_bank_with(&z, &sc.model, &sc.bank_for(seed, tag, trial), Exec::Serial)?;
    test_metric(&z, &result, &sc.model)
}

/// Ψ for `count` noise-only calibration records.
pub fn h0_metrics(sc: &Scenario, count: usize, seed: u64) -> Result<Vec<f64>> {
    run_trials(count, |trial| h0_metric(sc, seed, H0, trial))
}

/// Ψ for `count` noise-only records disjoint from the calibration set.
pub fn fresh_h0_metrics(sc: &Scenario, count: usize, seed: u64) -> Result<Vec<f64>> {
    run_trials(count, |trial| h0_metric(sc, seed, FRESH_H0, trial))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub pfa: f64,
    pub v_t_empirical: f64,
    pub v_t_gev: f64,
    pub gev: GevFit,
    pub m_c: usize,
    pub n_fit: usize,
}

/// Empirical threshold from all metrics and GEV threshold from the first
/// `n_fit` of them.
pub fn calibrate_from_metrics(metrics: &[f64], pfa: f64, n_fit: usize) -> Result<CalibrationResult> {
    if n_fit > metrics.len() {
        return Err(Error::Config(format!("n_fit = {n_fit} exceeds m_c = {}", metrics.len())));
    }
    if !(pfa > 0.0 && pfa < 1.0) {
        return Err(Error::Probability(pfa));
    }
    let gev = gevfit::fit_mle(&metrics[..n_fit], None)?;
    Ok(CalibrationResult {
        pfa,
        v_t_empirical: empirical_threshold(metrics, pfa)?,
        v_t_gev: gevfit::threshold(&gev, pfa)?,
        gev,
        m_c: metrics.len(),
        n_fit,
    })
}

/// Generates `m_c` H0 metrics and calibrates both thresholds.
pub fn calibrate(sc: &Scenario, pfa: f64, m_c: usize, n_fit: usize, seed: u64) -> Result<(CalibrationResult, Vec<f64>)> {
    if n_fit > m_c {
        return Err(Error::Config(format!("n_fit = {n_fit} exceeds m_c = {m_c}")));
    }
    if n_fit < gevfit::MIN_FIT_SAMPLES {
        return Err(Error::Config(format!("n_fit must be at least {}", gevfit::MIN_FIT_SAMPLES)));
    }
    sc.validate()?;
    let metrics = h0_metrics(sc, m_c, seed)?;
    Ok((calibrate_from_metrics(&metrics, pfa, n_fit)?, metrics))
}

/// Root mean square IF error of a trace over the full sample grid, with
/// each subinterval reconstructed as `f̂_k + fdot̂_k·(l·ts)`.
pub fn rmse_eval(curve: &dyn IfCurve, trace: &FilterTrace, mcfg: &ModelConfig) -> Result<f64> {
    let layout = mcfg.layout()?;
    if trace.len() != layout.total_chunks() {
        return Err(Error::LengthMismatch { expected: layout.total_chunks(), got: trace.len() });
    }
    let mut sum = 0.0;
    for (k, est) in trace.estimates.iter().enumerate() {
        for l in 0..layout.chunk_len {
            let t = (k * layout.chunk_len + l) as f64 * mcfg.ts;
            let f_hat = est.f + est.fdot * (l as f64 * mcfg.ts);
            sum += (curve.if_at(t).0 - f_hat).powi(2);
        }
    }
    Ok((sum / layout.n_samples as f64).sqrt())
}

/// Monolithic CRPF over the whole record with a FOV-wide prior.
pub fn baseline_trace(z: &ComplexSeries, sc: &Scenario, seed: u64) -> Result<FilterTrace> {
    let layout = sc.model.layout()?;
    let chunks = crpfb::chunk_record(z, &layout)?;
    let ctx = FilterContext {
        ts: sc.model.ts,
        dt_sub: sc.model.dt_sub,
        chunk_len: layout.chunk_len,
        jitter: sc.model.jitter_for(sc.model.chirp_bounds),
        q: sc.baseline.q,
        cost_floor: sc.bank.crpf.cost_floor,
    };
    let mut rng = rng::stream(seed, Domain::Baseline, &[]);
    let particles = crpf::init_uniform(sc.model.fov, sc.model.chirp_bounds, sc.baseline.n_particles, &mut rng);
    crpf::run_particles(particles, &ctx, &chunks, &mut rng)
}

/// Ψ along an arbitrary trace.
pub fn trace_metric(z: &ComplexSeries, trace: &FilterTrace, mcfg: &ModelConfig) -> Result<f64> {
    let layout = mcfg.layout()?;
    let chunks = crpfb::chunk_record(z, &layout)?;
    if chunks.len() != trace.len() {
        return Err(Error::LengthMismatch { expected: chunks.len(), got: trace.len() });
    }
    Ok(chunks
        .iter()
        .zip(&trace.estimates)
        .map(|(c, s)| crpf::captured_energy(c.samples, *s, mcfg.ts))
        .sum())
}

/// Outcome of one H1 trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct H1Outcome {
    pub metric: f64,
    pub rmse: f64,
    pub runtime: f64,
}

/// Signal spec and noisy record of H1 trial `trial`.
pub fn h1_record(sc: &Scenario, snr_db: f64, seed: u64, trial: u64) -> Result<(SignalSpec, ComplexSeries)> {
    let spec = sc.signal_spec(snr_db, seed, trial)?;
    let z = signalgen::synthesize(&spec, &sc.noise, Scenario::noise_seed(seed, H1, trial))?;
    Ok((spec, z))
}

pub fn h1_trial(sc: &Scenario, snr_db: f64, seed: u64, trial: u64) -> Result<H1Outcome> {
    let (spec, z) = h1_record(sc, snr_db, seed, trial)?;
    let start = Instant::now();
    let result = run_bank_with(&z, &sc.model, &sc.bank_for(seed, H1, trial), Exec::Serial)?;
    let metric = test_metric(&z, &result, &sc.model)?;
    let runtime = start.elapsed().as_secs_f64();
    Ok(H1Outcome { metric, rmse: rmse_eval(&spec, &result.trace, &sc.model)?, runtime })
}

/// Baseline detector outcome on the same H1 record as [`h1_trial`].
pub fn baseline_h1_trial(sc: &Scenario, snr_db: f64, seed: u64, trial: u64) -> Result<H1Outcome> {
    let (spec, z) = h1_record(sc, snr_db, seed, trial)?;
    let start = Instant::now();
    let trace = baseline_trace(&z, sc, rng::derive_seed(seed, Domain::Baseline, &[H1, trial]))?;
    let metric = trace_metric(&z, &trace, &sc.model)?;
    let runtime = start.elapsed().as_secs_f64();
    Ok(H1Outcome { metric, rmse: rmse_eval(&spec, &trace, &sc.model)?, runtime })
}

/// One row of a sweep; `value` is the swept quantity (SNR, b, dT, q, M, N).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub pd: f64,
    pub ci_halfwidth: f64,
    pub rmse: f64,
    pub mean_runtime: f64,
    pub threshold: f64,
}

fn summarize(value: f64, threshold: f64, outcomes: &[H1Outcome]) -> SweepRow {
    let n = outcomes.len();
    let hits = outcomes.iter().filter(|o| decide(o.metric, threshold).declared).count();
    let mean = |f: fn(&H1Outcome) -> f64| outcomes.iter().map(f).sum::<f64>() / n.max(1) as f64;
    SweepRow {
        value,
        pd: hits as f64 / n.max(1) as f64,
        ci_halfwidth: wilson_halfwidth(hits, n),
        rmse: mean(|o| o.rmse),
        mean_runtime: mean(|o| o.runtime),
        threshold,
    }
}

/// Detection probability per SNR at a fixed threshold.
pub fn pd_sweep(sc: &Scenario, snr_grid: &[f64], threshold: f64, trials: usize, seed: u64) -> Result<Vec<SweepRow>> {
    sc.validate()?;
    snr_grid
        .iter()
        .map(|&snr| {
            let outcomes = run_trials(trials, |trial| h1_trial(sc, snr, seed, trial))?;
            Ok(summarize(snr, threshold, &outcomes))
        })
        .collect()
}

/// False alarms on fresh noise-only records at a fixed threshold.
pub fn false_alarm_rate(sc: &Scenario, threshold: f64, trials: usize, seed: u64) -> Result<(usize, usize)> {
    let metrics = fresh_h0_metrics(sc, trials, seed)?;
    Ok((metrics.iter().filter(|&&m| decide(m, threshold).declared).count(), trials))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocRow {
    pub pfa: f64,
    pub threshold: f64,
    pub pd: f64,
    pub ci_halfwidth: f64,
}

/// Pd against the empirical threshold of each pfa, all on one H0 set and one
/// H1 trial set.
pub fn roc(sc: &Scenario, snr_db: f64, pfa_grid: &[f64], m_c: usize, trials: usize, seed: u64) -> Result<Vec<RocRow>> {
    sc.validate()?;
    let h0 = h0_metrics(sc, m_c, seed)?;
    let h1 = run_trials(trials, |trial| h1_trial(sc, snr_db, seed, trial))?;
    pfa_grid
        .iter()
        .map(|&pfa| {
            let threshold = empirical_threshold(&h0, pfa)?;
            let row = summarize(pfa, threshold, &h1);
            Ok(RocRow { pfa, threshold, pd: row.pd, ci_halfwidth: row.ci_halfwidth })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmseRow {
    pub snr_db: f64,
    pub rmse_crpfb: f64,
    pub rmse_crpf: f64,
    pub runtime_crpfb: f64,
    pub runtime_crpf: f64,
}

/// Mean IF RMSE of the bank and of the monolithic baseline per SNR.
pub fn rmse_sweep(sc: &Scenario, snr_grid: &[f64], trials: usize, seed: u64) -> Result<Vec<RmseRow>> {
    sc.validate()?;
    snr_grid
        .iter()
        .map(|&snr| {
            let bank = run_trials(trials, |trial| h1_trial(sc, snr, seed, trial))?;
            let base = run_trials(trials, |trial| baseline_h1_trial(sc, snr, seed, trial))?;
            let mean = |v: &[H1Outcome], f: fn(&H1Outcome) -> f64| v.iter().map(f).sum::<f64>() / v.len().max(1) as f64;
            Ok(RmseRow {
                snr_db: snr,
                rmse_crpfb: mean(&bank, |o| o.rmse),
                rmse_crpf: mean(&base, |o| o.rmse),
                runtime_crpfb: mean(&bank, |o| o.runtime),
                runtime_crpf: mean(&base, |o| o.runtime),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    /// S1 amplitude fluctuation depth.
    #[serde(rename = "b")]
    B,
    #[serde(rename = "dT")]
    SubintervalLength,
    #[serde(rename = "q")]
    Q,
    #[serde(rename = "M")]
    Filters,
    #[serde(rename = "N")]
    Particles,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::B => "b",
            SweepAxis::SubintervalLength => "dT",
            SweepAxis::Q => "q",
            SweepAxis::Filters => "M",
            SweepAxis::Particles => "N",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "b" => SweepAxis::B,
            "dT" | "dt" => SweepAxis::SubintervalLength,
            "q" => SweepAxis::Q,
            "M" | "m" => SweepAxis::Filters,
            "N" | "n" => SweepAxis::Particles,
            _ => return Err(Error::Config(format!("unknown sweep axis `{s}` (b, dT, q, M, N)"))),
        })
    }

    /// Whether the noise-only metric distribution depends on this axis.
    fn changes_h0(&self) -> bool {
        !matches!(self, SweepAxis::B)
    }

    pub fn apply(&self, sc: &Scenario, value: f64) -> Result<Scenario> {
        let count = |v: f64| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Config(format!("{} must be a positive integer, got {v}", self.name())))
            }
        };
        let mut out = sc.clone();
        match self {
            SweepAxis::B => out.signal.b = value,
            SweepAxis::SubintervalLength => out.model.dt_sub = value,
            SweepAxis::Q => out.bank.crpf.q = count(value)? as u32,
            SweepAxis::Filters => out.bank.m_filters = count(value)?,
            SweepAxis::Particles => out.bank.crpf.n_particles = count(value)?,
        }
        out.validate()?;
        Ok(out)
    }
}

/// Pd (against an empirical threshold at `pfa`) and RMSE per axis value.
/// Thresholds are recalibrated whenever the axis changes the H0 statistic.
pub fn param_sweep(
    sc: &Scenario,
    axis: SweepAxis,
    values: &[f64],
    pfa: f64,
    m_c: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    let scenarios: Vec<Scenario> = values.iter().map(|&v| axis.apply(sc, v)).collect::<Result<_>>()?;
    let shared = if axis.changes_h0() {
        None
    } else {
        Some(empirical_threshold(&h0_metrics(sc, m_c, seed)?, pfa)?)
    };
    values
        .iter()
        .zip(&scenarios)
        .map(|(&value, sc_v)| {
            let threshold = match shared {
                Some(t) => t,
                None => empirical_threshold(&h0_metrics(sc_v, m_c, seed)?, pfa)?,
            };
            let outcomes = run_trials(trials, |trial| h1_trial(sc_v, sc_v.signal.snr_db, seed, trial))?;
            Ok(summarize(value, threshold, &outcomes))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub trials: usize,
    pub m_filters: usize,
    pub baseline_particles: usize,
    /// One CRPF of the bank plus metric and comparison, median seconds.
    pub per_filter_s: f64,
    /// One CRPF of the bank without the metric, median seconds.
    pub per_filter_estimate_s: f64,
    /// All `M` filters run back to back, median seconds.
    pub bank_serial_s: f64,
    /// Monolithic CRPF plus metric and comparison, median seconds.
    pub baseline_s: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Single-threaded latency medians on identical H1 records.
pub fn benchmark(sc: &Scenario, trials: usize, seed: u64) -> Result<BenchReport> {
    sc.validate()?;
    let layout = sc.model.layout()?;
    let mut per_filter = Vec::with_capacity(trials);
    let mut per_estimate = Vec::with_capacity(trials);
    let mut bank_serial = Vec::with_capacity(trials);
    let mut baseline = Vec::with_capacity(trials);
    // Trial 0 warms caches and is discarded.
    for trial in 0..=trials as u64 {
        let (_, z) = h1_record(sc, sc.signal.snr_db, seed, trial)?;
        let bank = sc.bank_for(seed, H1, trial);
        let chunks: Vec<Chunk> = crpfb::chunk_record(&z, &layout)?;

        let hyps: Vec<_> = layout
            .blocks
            .iter()
            .map(|b| crpfb::make_hypotheses(&sc.model, &BankConfig { m_filters: 1, ..bank }, b.index).map(|h| h[0]))
            .collect::<Result<_>>()?;
        let start = Instant::now();
        let mut trace = FilterTrace::default();
        for (b, hyp) in layout.blocks.iter().zip(&hyps) {
            let block_chunks = &chunks[b.first_chunk..b.first_chunk + b.k];
            trace.extend(crpfb::run_filter(block_chunks, &sc.model, &layout, &bank, hyp, 0)?);
        }
        let t_estimate = start.elapsed().as_secs_f64();
        let psi: f64 = chunks.iter().zip(&trace.estimates).map(|(c, s)| crpf::captured_energy(c.samples, *s, sc.model.ts)).sum();
        std::hint::black_box(decide(psi, 0.0));
        let t_filter = start.elapsed().as_secs_f64();

        let start = Instant::now();
        let result = run_bank_with(&z, &sc.model, &bank, Exec::Serial)?;
        std::hint::black_box(test_metric(&z, &result, &sc.model)?);
        let t_bank = start.elapsed().as_secs_f64();

        let start = Instant::now();
        let base = baseline_trace(&z, sc, rng::derive_seed(seed, Domain::Baseline, &[H1, trial]))?;
        std::hint::black_box(decide(trace_metric(&z, &base, &sc.model)?, 0.0));
        let t_base = start.elapsed().as_secs_f64();

        if trial > 0 {
            per_filter.push(t_filter);
            per_estimate.push(t_estimate);
            bank_serial.push(t_bank);
            baseline.push(t_base);
        }
    }
    Ok(BenchReport {
        trials,
        m_filters: sc.bank.m_filters,
        baseline_particles: sc.baseline.n_particles,
        per_filter_s: median(per_filter),
        per_filter_estimate_s: median(per_estimate),
        bank_serial_s: median(bank_serial),
        baseline_s: median(baseline),
    })
}

/// Writes sweep rows; the first column is named after the swept axis. The
/// runtime column is only emitted on request, since it is not reproducible.
pub fn write_sweep_csv<W: Write>(mut w: W, axis: &str, rows: &[SweepRow], with_runtime: bool) -> Result<()> {
    let mut header = format!("{axis},pd,ci,rmse_hz,threshold");
    if with_runtime {
        header.push_str(",runtime_s");
    }
    writeln!(w, "{header}")?;
    for r in rows {
        let mut values = vec![r.value, r.pd, r.ci_halfwidth, r.rmse, r.threshold];
        if with_runtime {
            values.push(r.mean_runtime);
        }
        writeln!(w, "{}", csv_row(&values))?;
    }
    Ok(())
}

pub fn write_roc_csv<W: Write>(mut w: W, rows: &[RocRow]) -> Result<()> {
    writeln!(w, "pfa,pd,ci,threshold")?;
    for r in rows {
        writeln!(w, "{}", csv_row(&[r.pfa, r.pd, r.ci_halfwidth, r.threshold]))?;
    }
    Ok(())
}

pub fn write_rmse_csv<W: Write>(mut w: W, rows: &[RmseRow], with_runtime: bool) -> Result<()> {
    let mut header = String::from("snr_db,rmse_crpfb_hz,rmse_crpf_hz");
    if with_runtime {
        header.push_str(",runtime_crpfb_s,runtime_crpf_s");
    }
    writeln!(w, "{header}")?;
    for r in rows {
        let mut values = vec![r.snr_db, r.rmse_crpfb, r.rmse_crpf];
        if with_runtime {
            values.extend([r.runtime_crpfb, r.runtime_crpf]);
        }
        writeln!(w, "{}", csv_row(&values))?;
    }
    Ok(())
}

pub fn write_metrics_csv<W: Write>(mut w: W, metrics: &[f64]) -> Result<()> {
    writeln!(w, "trial,psi")?;
    for (i, m) in metrics.iter().enumerate() {
        writeln!(w, "{i},{}", g17(*m))?;
    }
    Ok(())
}

pub fn read_metrics_csv<R: std::io::BufRead>(r: R) -> Result<Vec<f64>> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty metrics file".into()))??;
    if header.trim() != "trial,psi" {
        return Err(Error::Parse(format!("unexpected metrics header `{}`", header.trim())));
    }
    lines
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|line| {
            let line = line?;
            let psi = line.split(',').nth(1).ok_or_else(|| Error::Parse(format!("bad row `{line}`")))?;
            psi.trim().parse::<f64>().map_err(|e| Error::Parse(format!("`{psi}`: {e}")))
        })
        .collect()
}
