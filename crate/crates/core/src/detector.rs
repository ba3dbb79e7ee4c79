//! Batch test metric and the two-layer decision.

use serde::{Deserialize, Serialize};

use crate::crpf::captured_energy;
use crate::crpfb::{run_bank, BankConfig, BankResult};
use crate::model::ModelConfig;
use crate::signalgen::ComplexSeries;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    #[serde(rename = "psi")]
    pub metric: f64,
    #[serde(rename = "vt")]
    pub threshold: f64,
    pub declared: bool,
}

/// `Ψ = Σ_k |⟨z_k, u(x̂_k)⟩|²` over every subinterval of every block.
pub fn test_metric(z: &ComplexSeries, result: &BankResult, mcfg: &ModelConfig) -> Result<f64> {
    let layout = mcfg.layout()?;
    if z.len() != layout.n_samples {
        return Err(Error::LengthMismatch { expected: layout.n_samples, got: z.len() });
    }
    let chunks = z.samples.chunks_exact(layout.chunk_len);
    if chunks.len() != result.trace.len() {
        return Err(Error::LengthMismatch { expected: chunks.len(), got: result.trace.len() });
    }
    Ok(chunks
        .zip(&result.trace.estimates)
        .map(|(chunk, s)| captured_energy(chunk, *s, mcfg.ts))
        .sum())
}

/// H1 iff `metric > threshold`.
pub fn decide(metric: f64, threshold: f64) -> Decision {
    Decision { metric, threshold, declared: metric > threshold }
}

/// Bank estimate, metric and decision for one record.
pub fn detect(
    z: &ComplexSeries,
    mcfg: &ModelConfig,
    bank: &BankConfig,
    threshold: f64,
) -> Result<(Decision, BankResult)> {
    let result = run_bank(z, mcfg, bank)?;
    let psi = test_metric(z, &result, mcfg)?;
    Ok((decide(psi, threshold), result))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crpf::FilterTrace;
    use crate::model::{Jitter, StateVector};
    use num_complex::Complex64;
    use std::f64::consts::TAU;

    fn model() -> ModelConfig {
        ModelConfig { ts: 1.0 / 128.0, ..ModelConfig::standard(0.5) }
    }

    fn trace_of(states: Vec<StateVector>) -> BankResult {
        let mut trace = FilterTrace::default();
        for s in states {
            trace.push(s, 0.0);
        }
        BankResult { m_min: vec![0], trace, all_cum_costs: vec![] }
    }

    #[test]
    fn decision_boundary() {
        assert!(decide(5.0, 4.0).declared);
        assert!(!decide(4.0, 4.0).declared);
        assert!(!decide(0.0, 0.0).declared);
        assert!(!decide(0.0, 3.0).declared);
    }

    #[test]
    fn zero_record_has_zero_metric() {
        let mcfg = model();
        let z = ComplexSeries::new(0.0, mcfg.ts, vec![Complex64::new(0.0, 0.0); 64]).unwrap();
        let r = trace_of(vec![StateVector::new(3.0, 1.0); 8]);
        assert_eq!(test_metric(&z, &r, &mcfg).unwrap(), 0.0);
    }

    #[test]
    fn matched_estimates_capture_all_energy() {
        let mcfg = ModelConfig { jitter: Some(Jitter::ZERO), ..model() };
        let (f0, fdot) = (-12.0, 30.0);
        let samples: Vec<Complex64> = (0..64)
            .map(|l| {
                let t = l as f64 * mcfg.ts;
                Complex64::from_polar(0.7, TAU * (f0 * t + 0.5 * fdot * t * t))
            })
            .collect();
        let z = ComplexSeries::new(0.0, mcfg.ts, samples).unwrap();
        let states = (0..8).map(|k| StateVector::new(f0 + k as f64 * mcfg.dt_sub * fdot, fdot)).collect();
        let psi = test_metric(&z, &trace_of(states), &mcfg).unwrap();
        assert!((psi - z.energy()).abs() < 1e-12 * z.energy());
    }

    #[test]
    fn metric_scales_quadratically() {
        let mcfg = model();
        let samples: Vec<Complex64> = (0..64).map(|l| Complex64::new((l as f64).sin(), (l as f64 * 0.3).cos())).collect();
        let z = ComplexSeries::new(0.0, mcfg.ts, samples.clone()).unwrap();
        let alpha = 3.5;
        let z2 = ComplexSeries::new(0.0, mcfg.ts, samples.iter().map(|s| s * alpha).collect()).unwrap();
        let r = trace_of((0..8).map(|k| StateVector::new(k as f64, -2.0 * k as f64)).collect());
        let a = test_metric(&z, &r, &mcfg).unwrap();
        let b = test_metric(&z2, &r, &mcfg).unwrap();
        assert!((b - alpha * alpha * a).abs() < 1e-12 * b);
    }

    #[test]
    fn mismatched_trace_is_rejected() {
        let mcfg = model();
        let z = ComplexSeries::new(0.0, mcfg.ts, vec![Complex64::new(1.0, 0.0); 64]).unwrap();
        let r = trace_of(vec![StateVector::default(); 7]);
        assert!(matches!(test_metric(&z, &r, &mcfg), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn json_keys() {
        let v = serde_json::to_value(decide(2.0, 1.0)).unwrap();
        assert_eq!(v, serde_json::json!({"psi": 2.0, "vt": 1.0, "declared": true}));
    }
}
