//! Bank of cost-reference particle filters.
//!
//! Each of the `M` filters is pinned to its own exact initial frequency drawn
//! uniformly from the FOV, which narrows its chirp prior (see
//! [`crate::model::chirp_range_for`]). All filters see the same data; the one
//! with the minimum cumulated cost supplies the bank's track. Blocks are
//! filtered independently with fresh hypotheses and their selected traces are
//! concatenated in block order.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crpf::{self, Chunk, CrpfConfig, FilterContext, FilterTrace};
use crate::model::{chirp_range_for, classify_condition, Layout, ModelConfig, PriorHypothesis};
use crate::rng::{self, Domain};
use crate::signalgen::ComplexSeries;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BankConfig {
    pub m_filters: usize,
    pub crpf: CrpfConfig,
    pub seed: u64,
}

impl Default for BankConfig {
    /// 2000 filters of one particle each.
    fn default() -> Self {
        Self { m_filters: 2000, crpf: CrpfConfig::default(), seed: 0 }
    }
}

impl BankConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m_filters == 0 {
            return Err(Error::Config("a bank needs at least one filter".into()));
        }
        self.crpf.validate()
    }
}

/// Output of one bank run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BankResult {
    /// Selected filter per block.
    pub m_min: Vec<usize>,
    /// Selected traces concatenated over blocks.
    pub trace: FilterTrace,
    /// Cumulated cost of every filter, per block.
    pub all_cum_costs: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct BankResultJson {
    m_min: Vec<usize>,
    cum_cost: f64,
    estimates: Vec<(usize, f64, f64)>,
}

impl BankResult {
    /// `{"m_min": [...], "cum_cost": ..., "estimates": [[k, f, fdot], ...]}`
    /// with `k` counted from 1.
    pub fn to_json(&self) -> serde_json::Value {
        let doc = BankResultJson {
            m_min: self.m_min.clone(),
            cum_cost: self.trace.cum_cost,
            estimates: self
                .trace
                .estimates
                .iter()
                .enumerate()
                .map(|(k, s)| (k + 1, s.f, s.fdot))
                .collect(),
        };
        serde_json::to_value(doc).expect("plain data serializes")
    }
}

/// How the filters of one block are scheduled. Results do not depend on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Serial,
    Parallel,
}

/// `M` hypotheses for one block: `f0 ~ U(FOV)` with the chirp range of the
/// classified prior regime. Deterministic in `(seed, block_index)`.
pub fn make_hypotheses(mcfg: &ModelConfig, bank: &BankConfig, block_index: usize) -> Result<Vec<PriorHypothesis>> {
    let condition = classify_condition(mcfg);
    let mut rng = rng::stream(bank.seed, Domain::Hypotheses, &[block_index as u64]);
    (0..bank.m_filters)
        .map(|_| {
            let f0 = rng.random_range(mcfg.fov[0]..=mcfg.fov[1]);
            let chirp_range = chirp_range_for(f0, mcfg, condition)?;
            Ok(PriorHypothesis { f0, chirp_range, block_index })
        })
        .collect()
}

/// Splits a record into subinterval chunks with cached energies.
pub fn chunk_record<'a>(z: &'a ComplexSeries, layout: &Layout) -> Result<Vec<Chunk<'a>>> {
    if z.len() != layout.n_samples {
        return Err(Error::LengthMismatch { expected: layout.n_samples, got: z.len() });
    }
    Ok(z.samples.chunks_exact(layout.chunk_len).map(Chunk::new).collect())
}

pub fn filter_context(mcfg: &ModelConfig, layout: &Layout, cfg: &CrpfConfig, hyp: &PriorHypothesis) -> FilterContext {
    FilterContext {
        ts: mcfg.ts,
        dt_sub: mcfg.dt_sub,
        chunk_len: layout.chunk_len,
        jitter: mcfg.jitter_for(hyp.chirp_range),
        q: cfg.q,
        cost_floor: cfg.cost_floor,
    }
}

/// Runs filter `m` of a block on the block's chunks.
pub fn run_filter(
    chunks: &[Chunk<'_>],
    mcfg: &ModelConfig,
    layout: &Layout,
    bank: &BankConfig,
    hyp: &PriorHypothesis,
    m: usize,
) -> Result<FilterTrace> {
    let ctx = filter_context(mcfg, layout, &bank.crpf, hyp);
    let mut rng = rng::stream(bank.seed, Domain::Filter, &[hyp.block_index as u64, m as u64]);
    crpf::run(hyp, &bank.crpf, &ctx, chunks, &mut rng)
}

/// Index of the smallest cost; lowest index on ties, NaN never wins.
pub fn select_min(costs: &[f64]) -> usize {
    let key = |c: f64| if c.is_nan() { f64::INFINITY } else { c };
    let mut best = 0;
    for (i, &c) in costs.iter().enumerate().skip(1) {
        if key(c) < key(costs[best]) {
            best = i;
        }
    }
    best
}

pub fn run_bank(z: &ComplexSeries, mcfg: &ModelConfig, bank: &BankConfig) -> Result<BankResult> {
    run_bank_with(z, mcfg, bank, Exec::Parallel)
}

pub fn run_bank_with(z: &ComplexSeries, mcfg: &ModelConfig, bank: &BankConfig, exec: Exec) -> Result<BankResult> {
    bank.validate()?;
    let layout = mcfg.layout()?;
    let chunks = chunk_record(z, &layout)?;
    let mut result = BankResult::default();
    result.trace = FilterTrace::with_capacity(layout.total_chunks());
    for block in &layout.blocks {
        let block_chunks = &chunks[block.first_chunk..block.first_chunk + block.k];
        let hyps = make_hypotheses(mcfg, bank, block.index)?;
        let run = |(m, hyp): (usize, &PriorHypothesis)| run_filter(block_chunks, mcfg, &layout, bank, hyp, m);
        let mut traces: Vec<FilterTrace> = match exec {
            Exec::Serial => hyps.iter().enumerate().map(run).collect::<Result<_>>()?,
            Exec::Parallel => hyps.par_iter().enumerate().map(run).collect::<Result<_>>()?,
        };
        let costs: Vec<f64> = traces.iter().map(|t| t.cum_cost).collect();
        let m_min = select_min(&costs);
        result.m_min.push(m_min);
        result.trace.extend(traces.swap_remove(m_min));
        result.all_cum_costs.push(costs);
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Jitter, StateVector};
    use num_complex::Complex64;
    use std::f64::consts::TAU;

    fn small_model(t_obs: f64) -> ModelConfig {
        ModelConfig { ts: 1.0 / 128.0, ..ModelConfig::standard(t_obs) }
    }

    fn lfm(f0: f64, fdot: f64, n: usize, ts: f64) -> ComplexSeries {
        let samples = (0..n)
            .map(|l| {
                let t = l as f64 * ts;
                Complex64::from_polar(1.0, TAU * (f0 * t + 0.5 * fdot * t * t))
            })
            .collect();
        ComplexSeries::new(0.0, ts, samples).unwrap()
    }

    fn noise_record(n: usize, ts: f64, seed: u64) -> ComplexSeries {
        let mut rng = rng::stream(seed, Domain::Generic, &[]);
        let samples = (0..n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        ComplexSeries::new(0.0, ts, samples).unwrap()
    }

    #[test]
    fn hypotheses_are_seeded_and_in_fov() {
        let mcfg = ModelConfig::standard(1.0);
        let bank = BankConfig { m_filters: 1, ..BankConfig::default() };
        let h = make_hypotheses(&mcfg, &bank, 0).unwrap();
        assert_eq!(h.len(), 1);
        assert!((-80.0..=80.0).contains(&h[0].f0));

        let bank = BankConfig { m_filters: 10_000, seed: 3, ..BankConfig::default() };
        let a = make_hypotheses(&mcfg, &bank, 0).unwrap();
        assert_eq!(a, make_hypotheses(&mcfg, &bank, 0).unwrap());
        assert_ne!(a, make_hypotheses(&mcfg, &bank, 1).unwrap());
        let mean = a.iter().map(|h| h.f0).sum::<f64>() / a.len() as f64;
        assert!(mean.abs() < 1.0, "{mean}");
        for h in &a {
            assert!(h.chirp_range[0] <= h.chirp_range[1]);
            assert_eq!(h.chirp_range, chirp_range_for(h.f0, &mcfg, classify_condition(&mcfg)).unwrap());
        }
    }

    #[test]
    fn single_filter_bank_is_that_filter() {
        let mcfg = small_model(0.5);
        let layout = mcfg.layout().unwrap();
        let z = noise_record(layout.n_samples, mcfg.ts, 1);
        let bank = BankConfig { m_filters: 1, seed: 5, ..BankConfig::default() };
        let result = run_bank(&z, &mcfg, &bank).unwrap();
        let hyp = make_hypotheses(&mcfg, &bank, 0).unwrap()[0];
        let chunks = chunk_record(&z, &layout).unwrap();
        let trace = run_filter(&chunks, &mcfg, &layout, &bank, &hyp, 0).unwrap();
        assert_eq!(result.trace, trace);
        assert_eq!(result.m_min, vec![0]);
    }

    #[test]
    fn planted_exact_hypothesis_wins_with_zero_cost() {
        let mut mcfg = small_model(0.5);
        mcfg.jitter = Some(Jitter::ZERO);
        let layout = mcfg.layout().unwrap();
        let bank = BankConfig { m_filters: 16, seed: 11, ..BankConfig::default() };
        let mut hyps = make_hypotheses(&mcfg, &bank, 0).unwrap();
        let planted = 9;
        let truth = StateVector::new(hyps[planted].f0, 0.5 * (hyps[planted].chirp_range[0] + hyps[planted].chirp_range[1]));
        hyps[planted].chirp_range = [truth.fdot, truth.fdot];
        let z = lfm(truth.f, truth.fdot, layout.n_samples, mcfg.ts);
        let chunks = chunk_record(&z, &layout).unwrap();
        let costs: Vec<f64> = hyps
            .iter()
            .enumerate()
            .map(|(m, h)| run_filter(&chunks, &mcfg, &layout, &bank, h, m).unwrap().cum_cost)
            .collect();
        assert_eq!(select_min(&costs), planted);
        assert!(costs[planted] < 1e-10);
    }

    #[test]
    fn selection_matches_exhaustive_recomputation() {
        let mcfg = ModelConfig { ts: 1.0 / 64.0, dt_sub: 1.0 / 8.0, ..ModelConfig::standard(0.25) };
        let layout = mcfg.layout().unwrap();
        assert_eq!(layout.blocks[0].k, 2);
        let z = noise_record(layout.n_samples, mcfg.ts, 21);
        let bank = BankConfig { m_filters: 8, seed: 2, ..BankConfig::default() };
        let result = run_bank(&z, &mcfg, &bank).unwrap();
        let chunks = chunk_record(&z, &layout).unwrap();
        let hyps = make_hypotheses(&mcfg, &bank, 0).unwrap();
        let costs: Vec<f64> = hyps
            .iter()
            .enumerate()
            .map(|(m, h)| run_filter(&chunks, &mcfg, &layout, &bank, h, m).unwrap().cum_cost)
            .collect();
        let mut brute = 0;
        for m in 1..costs.len() {
            if costs[m] < costs[brute] {
                brute = m;
            }
        }
        assert_eq!(result.m_min, vec![brute]);
        assert_eq!(result.all_cum_costs[0], costs);
        assert_eq!(result.trace.cum_cost, costs[brute]);
    }

    #[test]
    fn serial_and_parallel_agree() {
        let mcfg = small_model(1.0);
        let layout = mcfg.layout().unwrap();
        let z = noise_record(layout.n_samples, mcfg.ts, 4);
        let bank = BankConfig { m_filters: 64, seed: 8, ..BankConfig::default() };
        let a = run_bank_with(&z, &mcfg, &bank, Exec::Serial).unwrap();
        let b = run_bank_with(&z, &mcfg, &bank, Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn blocked_runs_concatenate_per_block_selections() {
        let mcfg = ModelConfig {
            ts: 1.0 / 128.0,
            chirp_bounds: [-640.0, 640.0],
            ..ModelConfig::standard(1.0)
        };
        let layout = mcfg.layout().unwrap();
        assert_eq!(layout.blocks.len(), 4);
        let z = noise_record(layout.n_samples, mcfg.ts, 9);
        let bank = BankConfig { m_filters: 12, seed: 1, ..BankConfig::default() };
        let r = run_bank(&z, &mcfg, &bank).unwrap();
        assert_eq!(r.m_min.len(), 4);
        assert_eq!(r.trace.len(), 16);
        let want: f64 = r
            .all_cum_costs
            .iter()
            .map(|costs| costs.iter().copied().fold(f64::INFINITY, f64::min))
            .sum();
        assert!((r.trace.cum_cost - want).abs() < 1e-9);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let mcfg = small_model(0.5);
        let z = noise_record(10, mcfg.ts, 1);
        assert!(matches!(
            run_bank(&z, &mcfg, &BankConfig { m_filters: 2, ..BankConfig::default() }),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn tie_break_prefers_lowest_index() {
        assert_eq!(select_min(&[2.0, 1.0, 1.0, 3.0]), 1);
        assert_eq!(select_min(&[f64::NAN, 1.0]), 1);
        assert_eq!(select_min(&[4.0]), 0);
    }

    #[test]
    fn json_shape() {
        let mcfg = small_model(0.5);
        let layout = mcfg.layout().unwrap();
        let z = noise_record(layout.n_samples, mcfg.ts, 3);
        let r = run_bank(&z, &mcfg, &BankConfig { m_filters: 3, ..BankConfig::default() }).unwrap();
        let v = r.to_json();
        assert_eq!(v["estimates"].as_array().unwrap().len(), 8);
        assert_eq!(v["estimates"][0][0], 1);
        assert!(v["cum_cost"].is_number());
        assert!(v["m_min"].is_array());
    }
}
