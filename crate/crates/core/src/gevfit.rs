//! Generalized extreme value (GEV) distribution of the H0 test metric.
//!
//! `G(x) = exp(-[1 + κ(x-ρ)/η]^(-1/κ))` on `1 + κ(x-ρ)/η > 0`, with the
//! Gumbel limit `exp(-exp(-(x-ρ)/η))` as `κ → 0`. The threshold for a false
//! alarm probability `pfa` is `G⁻¹(1 - pfa)`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::numfmt::csv_row;
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::{Error, Result};

/// Below this |κ| the Gumbel formulas are used.
pub const GUMBEL_EPS: f64 = 1e-6;
pub const MIN_FIT_SAMPLES: usize = 50;
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GevParams {
    pub kappa: f64,
    pub rho: f64,
    pub eta: f64,
}

impl GevParams {
    pub fn new(kappa: f64, rho: f64, eta: f64) -> Result<Self> {
        if !(eta > 0.0) || !eta.is_finite() || !kappa.is_finite() || !rho.is_finite() {
            return Err(Error::Config(format!("invalid GEV parameters κ={kappa} ρ={rho} η={eta}")));
        }
        Ok(Self { kappa, rho, eta })
    }

    fn is_gumbel(&self) -> bool {
        self.kappa.abs() < GUMBEL_EPS
    }

    /// `-ln G(x)`, i.e. `t(x) = [1 + κz]^(-1/κ)`; `None` off the support.
    fn tail_term(&self, x: f64) -> Option<f64> {
        let z = (x - self.rho) / self.eta;
        if self.is_gumbel() {
            return Some((-z).exp());
        }
        let arg = self.kappa * z;
        if arg <= -1.0 {
            return None;
        }
        Some((-arg.ln_1p() / self.kappa).exp())
    }
}

pub fn cdf(x: f64, p: &GevParams) -> f64 {
    match p.tail_term(x) {
        Some(t) => (-t).exp(),
        // Below the lower endpoint for κ > 0, above the upper one for κ < 0.
        None if p.kappa > 0.0 => 0.0,
        None => 1.0,
    }
}

pub fn pdf(x: f64, p: &GevParams) -> f64 {
    match p.tail_term(x) {
        // t^(κ+1) e^(-t) / η covers both branches.
        Some(t) => t.powf(p.kappa + 1.0) * (-t).exp() / p.eta,
        None => 0.0,
    }
}

pub fn quantile(prob: f64, p: &GevParams) -> Result<f64> {
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::Probability(prob));
    }
    let y = -prob.ln();
    if p.is_gumbel() {
        return Ok(p.rho - p.eta * y.ln());
    }
    // (y^(-κ) - 1)/κ without cancellation for small κ.
    Ok(p.rho + p.eta * (-p.kappa * y.ln()).exp_m1() / p.kappa)
}

/// Negative log-likelihood; `+inf` when any sample violates the support.
pub fn neg_log_lik(samples: &[f64], p: &GevParams) -> f64 {
    if !(p.eta > 0.0) {
        return f64::INFINITY;
    }
    let n = samples.len() as f64;
    let mut total = n * p.eta.ln();
    if p.is_gumbel() {
        for &x in samples {
            let z = (x - p.rho) / p.eta;
            total += z + (-z).exp();
        }
        return total;
    }
    let k = p.kappa;
    for &x in samples {
        let arg = k * (x - p.rho) / p.eta;
        if arg <= -1.0 {
            return f64::INFINITY;
        }
        let log_t = arg.ln_1p();
        total += (1.0 + 1.0 / k) * log_t + (-log_t / k).exp();
    }
    total
}

/// Fitted parameters with diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "GevFitJson", from = "GevFitJson")]
pub struct GevFit {
    pub params: GevParams,
    pub n_samples: usize,
    pub neg_log_lik: f64,
    pub converged: bool,
    pub ks_stat: f64,
}

#[derive(Serialize, Deserialize)]
struct GevFitJson {
    kappa: f64,
    rho: f64,
    eta: f64,
    n: usize,
    nll: f64,
    ks: f64,
}

impl From<GevFit> for GevFitJson {
    fn from(f: GevFit) -> Self {
        Self {
            kappa: f.params.kappa,
            rho: f.params.rho,
            eta: f.params.eta,
            n: f.n_samples,
            nll: f.neg_log_lik,
            ks: f.ks_stat,
        }
    }
}

impl From<GevFitJson> for GevFit {
    fn from(j: GevFitJson) -> Self {
        Self {
            params: GevParams { kappa: j.kappa, rho: j.rho, eta: j.eta },
            n_samples: j.n,
            neg_log_lik: j.nll,
            converged: true,
            ks_stat: j.ks,
        }
    }
}

/// `sup |F_n(x) - G(x)|` over the samples.
pub fn ks_statistic(samples: &[f64], p: &GevParams) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let g = cdf(x, p);
            ((i + 1) as f64 / n - g).max(g - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// Gumbel method-of-moments starting point with κ = 0.1.
pub fn initial_guess(samples: &[f64]) -> Result<GevParams> {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    if !(var > 0.0) || !var.is_finite() {
        return Err(Error::Degenerate("samples have zero spread".into()));
    }
    let eta = 6f64.sqrt() * var.sqrt() / std::f64::consts::PI;
    GevParams::new(0.1, mean - EULER_GAMMA * eta, eta)
}

/// Maximum-likelihood fit over `(κ, ρ, ln η)` by Nelder-Mead.
pub fn fit_mle(samples: &[f64], init: Option<GevParams>) -> Result<GevFit> {
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(Error::Degenerate(format!(
            "{} samples, need at least {MIN_FIT_SAMPLES}",
            samples.len()
        )));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::Degenerate("non-finite sample".into()));
    }
    let moments = initial_guess(samples)?;
    let mut start = init.unwrap_or(moments);
    if !neg_log_lik(samples, &start).is_finite() {
        start = GevParams { kappa: 0.0, ..moments };
    }
    let objective = |v: &[f64]| {
        neg_log_lik(samples, &GevParams { kappa: v[0], rho: v[1], eta: v[2].exp() })
    };
    let opts = NelderMeadOptions::default();
    let mut x = vec![start.kappa, start.rho, start.eta.ln()];
    let mut steps = vec![0.1, 0.25 * start.eta, 0.1];
    let mut converged = false;
    let mut fx = objective(&x);
    // One restart from the first optimum guards against a collapsed simplex.
    for _ in 0..2 {
        let m = nelder_mead(objective, &x, &steps, opts);
        if !m.converged {
            return Err(Error::NotConverged { iterations: m.iterations });
        }
        let improved = m.fx < fx;
        x = m.x;
        fx = m.fx;
        converged = true;
        if !improved {
            break;
        }
        let eta = x[2].exp();
        steps = vec![0.02, 0.05 * eta, 0.02];
    }
    let params = GevParams::new(x[0], x[1], x[2].exp())?;
    Ok(GevFit {
        params,
        n_samples: samples.len(),
        neg_log_lik: fx,
        converged,
        ks_stat: ks_statistic(samples, &params),
    })
}

/// `V_T = G⁻¹(1 - pfa)`.
pub fn threshold(fit: &GevFit, pfa: f64) -> Result<f64> {
    if !(pfa > 0.0 && pfa < 1.0) {
        return Err(Error::Probability(pfa));
    }
    quantile(1.0 - pfa, &fit.params)
}

/// One row per order statistic for the probability, quantile and
/// return-level plots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub mc: usize,
    pub emp_p: f64,
    pub model_p: f64,
    pub emp_q: f64,
    pub model_q: f64,
    pub rl_x: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityBin {
    pub center: f64,
    pub width: f64,
    pub empirical: f64,
    pub model: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub rows: Vec<DiagnosticRow>,
    pub density: Vec<DensityBin>,
}

pub const DIAGNOSTICS_HEADER: &str = "mc,emp_p,model_p,emp_q,model_q,rl_x";

/// Probability, quantile, return-level and density plot data for a fit,
/// using plotting positions `m_c / (M_c + 1)`.
pub fn diagnostics(params: &GevParams, samples: &[f64]) -> Diagnostics {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let rows = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let mc = i + 1;
            let emp_p = mc as f64 / (n + 1) as f64;
            DiagnosticRow {
                mc,
                emp_p,
                model_p: cdf(x, params),
                emp_q: x,
                model_q: quantile(emp_p, params).unwrap_or(f64::NAN),
                rl_x: (-(1.0 - emp_p).ln()).ln(),
            }
        })
        .collect();
    Diagnostics { rows, density: histogram(&sorted, params) }
}

fn histogram(sorted: &[f64], params: &GevParams) -> Vec<DensityBin> {
    let n = sorted.len();
    if n < 2 {
        return Vec::new();
    }
    let (lo, hi) = (sorted[0], sorted[n - 1]);
    if !(hi > lo) {
        return Vec::new();
    }
    let bins = ((n as f64).sqrt().ceil() as usize).clamp(1, 100);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &x in sorted {
        let b = (((x - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(b, c)| {
            let center = lo + (b as f64 + 0.5) * width;
            DensityBin { center, width, empirical: c as f64 / (n as f64 * width), model: pdf(center, params) }
        })
        .collect()
}

impl Diagnostics {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{DIAGNOSTICS_HEADER}")?;
        for r in &self.rows {
            writeln!(w, "{},{}", r.mc, csv_row(&[r.emp_p, r.model_p, r.emp_q, r.model_q, r.rl_x]))?;
        }
        Ok(())
    }

    pub fn write_probability_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "mc,emp_p,model_p")?;
        for r in &self.rows {
            writeln!(w, "{},{}", r.mc, csv_row(&[r.emp_p, r.model_p]))?;
        }
        Ok(())
    }

    pub fn write_quantile_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "mc,model_q,emp_q")?;
        for r in &self.rows {
            writeln!(w, "{},{}", r.mc, csv_row(&[r.model_q, r.emp_q]))?;
        }
        Ok(())
    }

    pub fn write_return_level_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "mc,rl_x,emp_q,model_q")?;
        for r in &self.rows {
            writeln!(w, "{},{}", r.mc, csv_row(&[r.rl_x, r.emp_q, r.model_q]))?;
        }
        Ok(())
    }

    pub fn write_density_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,width,emp_density,model_density")?;
        for d in &self.density {
            writeln!(w, "{}", csv_row(&[d.center, d.width, d.empirical, d.model]))?;
        }
        Ok(())
    }
}
