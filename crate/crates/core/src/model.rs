//! Piecewise constant-chirp state model and prior geometry.
//!
//! The state is `(f, fdot)`: instantaneous frequency and chirp rate, the
//! frequency-axis "position" and "velocity" of a constant-velocity tracker.
//! The prior on the chirp rate of a filter whose initial frequency is known
//! exactly shrinks from the unconditioned range `±(f_max - f_min)/T` to
//! `[(f_min - f0)/T, (f_max - f0)/T]`, and to the same form over a shorter
//! block length when the signal is too nonlinear to be one constant-chirp
//! piece over the whole record.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StateVector {
    /// Instantaneous frequency, Hz.
    pub f: f64,
    /// Chirp rate, Hz/s.
    pub fdot: f64,
}

impl StateVector {
    pub fn new(f: f64, fdot: f64) -> Self {
        Self { f, fdot }
    }
}

/// Standard deviations of the process noise added per subinterval.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Jitter {
    pub sigma_f: f64,
    pub sigma_fd: f64,
}

impl Jitter {
    pub const ZERO: Jitter = Jitter { sigma_f: 0.0, sigma_fd: 0.0 };
}

/// Fraction of the chirp prior width used as the default chirp jitter.
pub const DEFAULT_JITTER_FRACTION: f64 = 0.05;

/// Prior-information regime, decided by how far a constant-chirp signal
/// starting anywhere in the FOV can travel relative to the chirp bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Condition {
    /// The FOV dominates: the signal is close to constant-chirp, keep the
    /// given chirp bounds.
    #[serde(rename = "COND1")]
    NearConstant,
    /// Comparable scales: one piecewise constant-chirp model over `T`.
    #[serde(rename = "COND2")]
    PiecewiseConstant,
    /// Chirp bounds dominate: split the record into blocks.
    #[serde(rename = "COND3")]
    Blocked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Observation length, s.
    #[serde(rename = "T")]
    pub t_obs: f64,
    /// Subinterval length, s.
    #[serde(rename = "dT")]
    pub dt_sub: f64,
    /// Sample period, s.
    pub ts: f64,
    /// `[f_min, f_max]`, Hz.
    pub fov: [f64; 2],
    /// `[fd_min, fd_max]`, Hz/s.
    pub chirp_bounds: [f64; 2],
    /// Fixed process noise; `None` derives it from each hypothesis' chirp
    /// range (see [`ModelConfig::jitter_for`]).
    #[serde(default)]
    pub jitter: Option<Jitter>,
    /// Block count `P`; `None` picks 1, or the smallest count that makes each
    /// block piecewise constant-chirp when the record needs blocking.
    #[serde(default)]
    pub blocks: Option<usize>,
    #[serde(default = "default_r_hi")]
    pub r_hi: f64,
    #[serde(default = "default_r_lo")]
    pub r_lo: f64,
}

fn default_r_hi() -> f64 {
    4.0
}

fn default_r_lo() -> f64 {
    1.0
}

/// One block of the observation interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub index: usize,
    pub start: f64,
    /// Subintervals in this block.
    pub k: usize,
    /// Global index of the block's first subinterval.
    pub first_chunk: usize,
}

/// Sample-grid layout derived from a [`ModelConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub condition: Condition,
    pub n_samples: usize,
    pub chunk_len: usize,
    pub blocks: Vec<Block>,
}

impl Layout {
    pub fn total_chunks(&self) -> usize {
        self.blocks.iter().map(|b| b.k).sum()
    }
}

/// One filter's prior: an exact initial frequency and a chirp interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorHypothesis {
    pub f0: f64,
    pub chirp_range: [f64; 2],
    pub block_index: usize,
}

fn integer_ratio(num: f64, den: f64, what: &str) -> Result<usize> {
    let r = num / den;
    let n = r.round();
    if n < 1.0 || (r - n).abs() > 1e-9 * n.max(1.0) {
        return Err(Error::Config(format!("{what} = {r} is not a positive integer")));
    }
    Ok(n as usize)
}

impl ModelConfig {
    /// FOV `[-80, 80]` Hz, chirp bounds `[-120, 120]` Hz/s, `ts = 1/512` s,
    /// `dT = 1/16` s.
    pub fn standard(t_obs: f64) -> Self {
        Self {
            t_obs,
            dt_sub: 1.0 / 16.0,
            ts: 1.0 / 512.0,
            fov: [-80.0, 80.0],
            chirp_bounds: [-120.0, 120.0],
            jitter: None,
            blocks: None,
            r_hi: default_r_hi(),
            r_lo: default_r_lo(),
        }
    }

    pub fn fov_width(&self) -> f64 {
        self.fov[1] - self.fov[0]
    }

    pub fn max_chirp(&self) -> f64 {
        self.chirp_bounds[0].abs().max(self.chirp_bounds[1].abs())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [("T", self.t_obs), ("dT", self.dt_sub), ("ts", self.ts)];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.fov[0] < self.fov[1]) {
            return Err(Error::Config(format!("empty FOV {:?}", self.fov)));
        }
        if !(self.chirp_bounds[0] <= self.chirp_bounds[1]) {
            return Err(Error::Config(format!("empty chirp bounds {:?}", self.chirp_bounds)));
        }
        if !(self.r_lo > 0.0 && self.r_lo <= self.r_hi) {
            return Err(Error::Config(format!(
                "need 0 < r_lo <= r_hi, got r_lo={} r_hi={}",
                self.r_lo, self.r_hi
            )));
        }
        if let Some(j) = self.jitter {
            if !(j.sigma_f >= 0.0 && j.sigma_fd >= 0.0) {
                return Err(Error::Config("jitter std devs must be non-negative".into()));
            }
        }
        if self.blocks == Some(0) {
            return Err(Error::Config("blocks must be at least 1".into()));
        }
        integer_ratio(self.dt_sub, self.ts, "dT/ts")?;
        Ok(())
    }

    /// Block count actually used: 1 unless the record needs blocking.
    pub fn effective_blocks(&self, condition: Condition) -> Result<usize> {
        match (condition, self.blocks) {
            (Condition::Blocked, Some(p)) => Ok(p),
            (Condition::Blocked, None) => {
                Ok(((self.t_obs * self.max_chirp() / self.fov_width()) - 1e-9).ceil().max(1.0) as usize)
            }
            (_, Some(p)) if p > 1 => Err(Error::Config(format!(
                "{p} blocks requested but the prior regime is {condition:?}; blocking applies to COND3 only"
            ))),
            _ => Ok(1),
        }
    }

    /// Length of one block, `T / P`.
    pub fn block_length(&self, condition: Condition) -> Result<f64> {
        Ok(self.t_obs / self.effective_blocks(condition)? as f64)
    }

    /// Process noise for a filter with the given chirp prior.
    pub fn jitter_for(&self, chirp_range: [f64; 2]) -> Jitter {
        self.jitter.unwrap_or_else(|| {
            let sigma_fd = DEFAULT_JITTER_FRACTION * (chirp_range[1] - chirp_range[0]);
            Jitter { sigma_f: sigma_fd * self.dt_sub, sigma_fd }
        })
    }

    pub fn layout(&self) -> Result<Layout> {
        self.validate()?;
        let condition = classify_condition(self);
        Ok(Layout {
            condition,
            n_samples: integer_ratio(self.t_obs, self.ts, "T/ts")?,
            chunk_len: integer_ratio(self.dt_sub, self.ts, "dT/ts")?,
            blocks: partition_blocks(self)?,
        })
    }
}

/// Advances `s` by one subinterval of length `dt` and adds Gaussian jitter.
pub fn propagate<R: Rng + ?Sized>(s: StateVector, dt: f64, jitter: Jitter, rng: &mut R) -> StateVector {
    let n_f: f64 = rng.sample(StandardNormal);
    let n_fd: f64 = rng.sample(StandardNormal);
    StateVector {
        f: s.f + dt * s.fdot + jitter.sigma_f * n_f,
        fdot: s.fdot + jitter.sigma_fd * n_fd,
    }
}

/// Ratio of the FOV sweep rate `(f_max - f_min)/T` to the largest chirp bound.
pub fn sweep_ratio(cfg: &ModelConfig) -> Option<f64> {
    let max_chirp = cfg.max_chirp();
    (max_chirp > 0.0).then(|| (cfg.fov_width() / cfg.t_obs) / max_chirp)
}

pub fn classify_condition(cfg: &ModelConfig) -> Condition {
    match sweep_ratio(cfg) {
        None => Condition::NearConstant,
        Some(r) if r >= cfg.r_hi => Condition::NearConstant,
        Some(r) if r < cfg.r_lo => Condition::Blocked,
        Some(_) => Condition::PiecewiseConstant,
    }
}

/// Chirp interval implied by an exact initial frequency, before clamping to
/// the chirp bounds.
pub fn raw_chirp_range(f0: f64, cfg: &ModelConfig, condition: Condition) -> Result<[f64; 2]> {
    let horizon = match condition {
        Condition::NearConstant => return Ok(cfg.chirp_bounds),
        Condition::PiecewiseConstant => cfg.t_obs,
        Condition::Blocked => cfg.block_length(condition)?,
    };
    Ok([(cfg.fov[0] - f0) / horizon, (cfg.fov[1] - f0) / horizon])
}

pub fn chirp_range_for(f0: f64, cfg: &ModelConfig, condition: Condition) -> Result<[f64; 2]> {
    if !(cfg.fov[0] <= f0 && f0 <= cfg.fov[1]) {
        return Err(Error::Config(format!("f0 = {f0} Hz outside the FOV {:?}", cfg.fov)));
    }
    let [lo, hi] = raw_chirp_range(f0, cfg, condition)?;
    let lo = lo.max(cfg.chirp_bounds[0]);
    let hi = hi.min(cfg.chirp_bounds[1]);
    if lo > hi {
        return Err(Error::EmptyPrior { f0, lo, hi });
    }
    Ok([lo, hi])
}

/// Splits `[0, T]` into `P` equal blocks of `K` subintervals each.
pub fn partition_blocks(cfg: &ModelConfig) -> Result<Vec<Block>> {
    let condition = classify_condition(cfg);
    let p = cfg.effective_blocks(condition)?;
    let block_len = cfg.t_obs / p as f64;
    let k = integer_ratio(block_len, cfg.dt_sub, "K = T/(P*dT)")?;
    Ok((0..p)
        .map(|index| Block { index, start: index as f64 * block_len, k, first_chunk: index * k })
        .collect())
}
