//! A single cost-reference particle filter over one block.
//!
//! Particles carry a cumulative cost instead of a probabilistic weight. Each
//! subinterval the particle set is resampled with weights `c^-q / Σ c^-q`,
//! propagated through the constant-chirp model and charged the mismatch
//! between the measurement chunk and the unit-norm LFM template of its state.
//! The particle with the minimum cumulative cost is the state estimate.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::{propagate, Jitter, PriorHypothesis, StateVector};
use crate::{Error, Result};

pub const DEFAULT_COST_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub state: StateVector,
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrpfConfig {
    pub n_particles: usize,
    pub q: u32,
    #[serde(default = "default_cost_floor")]
    pub cost_floor: f64,
}

fn default_cost_floor() -> f64 {
    DEFAULT_COST_FLOOR
}

impl Default for CrpfConfig {
    fn default() -> Self {
        Self { n_particles: 1, q: 5, cost_floor: DEFAULT_COST_FLOOR }
    }
}

impl CrpfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return Err(Error::Config("a filter needs at least one particle".into()));
        }
        if self.q == 0 {
            return Err(Error::Config("the weight exponent q must be a positive integer".into()));
        }
        if !(self.cost_floor > 0.0) {
            return Err(Error::Config("cost_floor must be positive".into()));
        }
        Ok(())
    }
}

/// Per-subinterval estimates of one filter and its cumulated cost.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FilterTrace {
    pub estimates: Vec<StateVector>,
    pub step_costs: Vec<f64>,
    pub cum_cost: f64,
}

impl FilterTrace {
    pub fn with_capacity(k: usize) -> Self {
        Self { estimates: Vec::with_capacity(k), step_costs: Vec::with_capacity(k), cum_cost: 0.0 }
    }

    pub fn push(&mut self, estimate: StateVector, step_cost: f64) {
        self.estimates.push(estimate);
        self.step_costs.push(step_cost);
        self.cum_cost += step_cost;
    }

    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }

    /// Appends another trace (the next block).
    pub fn extend(&mut self, other: FilterTrace) {
        for (e, c) in other.estimates.into_iter().zip(other.step_costs) {
            self.push(e, c);
        }
    }
}

/// One measurement subinterval with its precomputed energy `‖z‖²`.
#[derive(Debug, Clone, Copy)]
pub struct Chunk<'a> {
    pub samples: &'a [Complex64],
    pub energy: f64,
}

impl<'a> Chunk<'a> {
    pub fn new(samples: &'a [Complex64]) -> Self {
        Self { samples, energy: samples.iter().map(|z| z.norm_sqr()).sum() }
    }
}

/// Everything a filter needs besides its prior and the data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterContext {
    pub ts: f64,
    pub dt_sub: f64,
    pub chunk_len: usize,
    pub jitter: Jitter,
    pub q: u32,
    pub cost_floor: f64,
}

/// `⟨z, u(s)⟩ = Σ z[l]·conj(u[l])` for the unit-norm LFM template
/// `u[l] = exp(2πj(f·τ + fdot·τ²/2)) / √L`, `τ = l·ts`.
///
/// The template is generated by a second-order phase recurrence:
/// `u[l+1] = u[l]·r[l]` with `r[l+1] = r[l]·exp(2πj·fdot·ts²)`.
pub fn correlate(chunk: &[Complex64], s: StateVector, ts: f64) -> Complex64 {
    if chunk.is_empty() {
        return Complex64::new(0.0, 0.0);
    }
    let mut u = Complex64::new(1.0, 0.0);
    let mut r = Complex64::from_polar(1.0, TAU * (s.f * ts + 0.5 * s.fdot * ts * ts));
    let rr = Complex64::from_polar(1.0, TAU * s.fdot * ts * ts);
    let mut acc = Complex64::new(0.0, 0.0);
    for z in chunk {
        acc += z * u.conj();
        u *= r;
        r *= rr;
    }
    acc / (chunk.len() as f64).sqrt()
}

/// `|⟨z, u(s)⟩|²`, the energy the template captures.
#[inline]
pub fn captured_energy(chunk: &[Complex64], s: StateVector, ts: f64) -> f64 {
    correlate(chunk, s, ts).norm_sqr()
}

#[inline]
fn cost_from(energy: f64, captured: f64) -> f64 {
    // Cauchy-Schwarz bounds captured by energy; only rounding can cross it.
    (energy - captured).max(0.0)
}

/// `ΔC = ‖z‖² − |⟨z, u(s)⟩|²`, clamped at zero against rounding.
pub fn incremental_cost(chunk: &[Complex64], s: StateVector, ts: f64) -> f64 {
    Chunk::new(chunk).cost(s, ts)
}

impl Chunk<'_> {
    #[inline]
    pub fn cost(&self, s: StateVector, ts: f64) -> f64 {
        cost_from(self.energy, captured_energy(self.samples, s, ts))
    }
}

/// Particles at the exact initial frequency with chirps drawn uniformly from
/// the hypothesis' range; all costs zero.
pub fn init<R: Rng + ?Sized>(hyp: &PriorHypothesis, cfg: &CrpfConfig, rng: &mut R) -> Vec<Particle> {
    init_uniform([hyp.f0, hyp.f0], hyp.chirp_range, cfg.n_particles, rng)
}

/// Particles drawn uniformly from a frequency interval and a chirp interval.
/// A degenerate interval yields its single value without consuming randomness.
pub fn init_uniform<R: Rng + ?Sized>(
    f_range: [f64; 2],
    chirp_range: [f64; 2],
    n: usize,
    rng: &mut R,
) -> Vec<Particle> {
    let mut draw = |[lo, hi]: [f64; 2]| if lo < hi { rng.random_range(lo..hi) } else { lo };
    (0..n)
        .map(|_| {
            let f = draw(f_range);
            let fdot = draw(chirp_range);
            Particle { state: StateVector::new(f, fdot), cost: 0.0 }
        })
        .collect()
}

/// Resampling weights `μ_i = c_i^-q / Σ_g c_g^-q` with costs clamped to
/// `cost_floor`. Evaluated in the log domain so large `q` cannot overflow.
pub fn weights(costs: &[f64], q: u32, cost_floor: f64) -> Vec<f64> {
    let log_w: Vec<f64> = costs.iter().map(|&c| -(q as f64) * c.max(cost_floor).ln()).collect();
    let top = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|&lw| (lw - top).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Multinomial resampling. Clones keep their source's cost. A single
/// particle passes through untouched and consumes no randomness.
pub fn resample<R: Rng + ?Sized>(particles: &mut Vec<Particle>, q: u32, cost_floor: f64, rng: &mut R) {
    let n = particles.len();
    if n <= 1 {
        return;
    }
    let costs: Vec<f64> = particles.iter().map(|p| p.cost).collect();
    let mut cdf = weights(&costs, q, cost_floor);
    let mut acc = 0.0;
    for w in cdf.iter_mut() {
        acc += *w;
        *w = acc;
    }
    let resampled: Vec<Particle> = (0..n)
        .map(|_| {
            let u = rng.random::<f64>() * acc;
            let i = cdf.partition_point(|&c| c <= u).min(n - 1);
            particles[i]
        })
        .collect();
    *particles = resampled;
}

/// Index of the minimum-cost particle, lowest index on ties.
pub fn argmin_cost(particles: &[Particle]) -> usize {
    let mut best = 0;
    for (i, p) in particles.iter().enumerate().skip(1) {
        if p.cost < particles[best].cost {
            best = i;
        }
    }
    best
}

fn check_chunk(chunk: &Chunk<'_>, ctx: &FilterContext) -> Result<()> {
    if chunk.samples.len() != ctx.chunk_len {
        return Err(Error::LengthMismatch { expected: ctx.chunk_len, got: chunk.samples.len() });
    }
    Ok(())
}

/// Charges every particle for `chunk` and returns the minimum-cost estimate
/// with its incremental cost.
fn score(particles: &mut [Particle], chunk: &Chunk<'_>, ts: f64, step_costs: &mut Vec<f64>) -> (StateVector, f64) {
    step_costs.clear();
    for p in particles.iter_mut() {
        let dc = chunk.cost(p.state, ts);
        p.cost += dc;
        step_costs.push(dc);
    }
    let best = argmin_cost(particles);
    (particles[best].state, step_costs[best])
}

/// Resample, propagate and update for one subinterval.
pub fn step<R: Rng + ?Sized>(
    particles: &mut Vec<Particle>,
    chunk: &Chunk<'_>,
    ctx: &FilterContext,
    rng: &mut R,
) -> Result<(StateVector, f64)> {
    check_chunk(chunk, ctx)?;
    resample(particles, ctx.q, ctx.cost_floor, rng);
    for p in particles.iter_mut() {
        p.state = propagate(p.state, ctx.dt_sub, ctx.jitter, rng);
    }
    let mut scratch = Vec::with_capacity(particles.len());
    Ok(score(particles, chunk, ctx.ts, &mut scratch))
}

/// Runs a filter from an initial particle set over `chunks`.
///
/// Particle states at step `k` describe the start of chunk `k`, so the first
/// chunk is scored against the initial particles directly and every later
/// chunk is preceded by resampling and propagation.
pub fn run_particles<R: Rng + ?Sized>(
    mut particles: Vec<Particle>,
    ctx: &FilterContext,
    chunks: &[Chunk<'_>],
    rng: &mut R,
) -> Result<FilterTrace> {
    if chunks.is_empty() {
        return Err(Error::Config("a filter needs at least one subinterval".into()));
    }
    if particles.is_empty() {
        return Err(Error::Config("a filter needs at least one particle".into()));
    }
    let mut trace = FilterTrace::with_capacity(chunks.len());
    let mut scratch = Vec::with_capacity(particles.len());
    for (k, chunk) in chunks.iter().enumerate() {
        check_chunk(chunk, ctx)?;
        if k > 0 {
            resample(&mut particles, ctx.q, ctx.cost_floor, rng);
            for p in particles.iter_mut() {
                p.state = propagate(p.state, ctx.dt_sub, ctx.jitter, rng);
            }
        }
        let (estimate, dc) = score(&mut particles, chunk, ctx.ts, &mut scratch);
        trace.push(estimate, dc);
    }
    Ok(trace)
}

/// Initializes from `hyp` and filters the block's chunks.
pub fn run<R: Rng + ?Sized>(
    hyp: &PriorHypothesis,
    cfg: &CrpfConfig,
    ctx: &FilterContext,
    chunks: &[Chunk<'_>],
    rng: &mut R,
) -> Result<FilterTrace> {
    cfg.validate()?;
    run_particles(init(hyp, cfg, rng), ctx, chunks, rng)
}
