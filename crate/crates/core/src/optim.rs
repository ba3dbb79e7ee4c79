//! Nelder-Mead simplex minimization.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub max_iter: usize,
    /// Relative tolerance on both the spread of simplex values and the
    /// simplex diameter.
    pub tol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { max_iter: 2000, tol: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub fx: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `f` from `x0` with an axis-aligned initial simplex of the given
/// step sizes. Non-finite objective values are treated as `+inf`.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], steps: &[f64], opts: NelderMeadOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    const ALPHA: f64 = 1.0;
    const GAMMA: f64 = 2.0;
    const RHO: f64 = 0.5;
    const SIGMA: f64 = 0.5;

    let n = x0.len();
    let mut eval = |x: &[f64]| {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += steps[i];
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v)).collect();

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let best = values[0];
        let worst = values[n];
        let f_spread = worst - best;
        let x_spread = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        let x_scale = simplex[0].iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if f_spread.is_finite()
            && f_spread <= opts.tol * best.abs().max(1.0)
            && x_spread <= opts.tol * x_scale
        {
            converged = true;
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&simplex[n]).map(|(c, w)| c + t * (c - w)).collect()
        };

        let reflected = along(ALPHA);
        let f_r = eval(&reflected);
        if f_r < values[0] {
            let expanded = along(GAMMA);
            let f_e = eval(&expanded);
            if f_e < f_r {
                simplex[n] = expanded;
                values[n] = f_e;
            } else {
                simplex[n] = reflected;
                values[n] = f_r;
            }
            continue;
        }
        if f_r < values[n - 1] {
            simplex[n] = reflected;
            values[n] = f_r;
            continue;
        }
        let (contracted, f_c) = if f_r < values[n] {
            let c = along(RHO);
            let fc = eval(&c);
            (c, fc)
        } else {
            let c = along(-RHO);
            let fc = eval(&c);
            (c, fc)
        };
        if f_c < values[n].min(f_r) {
            simplex[n] = contracted;
            values[n] = f_c;
            continue;
        }
        // Shrink towards the best vertex.
        let best_v = simplex[0].clone();
        for i in 1..=n {
            for j in 0..n {
                simplex[i][j] = best_v[j] + SIGMA * (simplex[i][j] - best_v[j]);
            }
            values[i] = eval(&simplex[i]);
        }
    }

    let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
    Minimum { x: simplex[best].clone(), fx: values[best], iterations, converged }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let m = nelder_mead(f, &[-1.2, 1.0], &[0.5, 0.5], NelderMeadOptions { max_iter: 5000, tol: 1e-12 });
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5, "{:?}", m.x);
    }

    #[test]
    fn quadratic_bowl_in_three_dimensions() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(2) + 2.0 * (x[1] + 1.0).powi(2) + 0.5 * (x[2] - 0.25).powi(2);
        let m = nelder_mead(f, &[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0], NelderMeadOptions::default());
        assert!(m.converged);
        for (x, want) in m.x.iter().zip([3.0, -1.0, 0.25]) {
            assert!((x - want).abs() < 1e-6);
        }
    }

    #[test]
    fn infeasible_region_is_avoided() {
        // +inf outside x > 0; minimum on the boundary side at x = 0.5.
        let f = |x: &[f64]| if x[0] <= 0.0 { f64::NAN } else { (x[0] - 0.5).powi(2) };
        let m = nelder_mead(f, &[2.0], &[1.0], NelderMeadOptions::default());
        assert!((m.x[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn iteration_cap_is_reported() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let m = nelder_mead(f, &[-1.2, 1.0], &[0.5, 0.5], NelderMeadOptions { max_iter: 5, tol: 1e-12 });
        assert!(!m.converged);
        assert_eq!(m.iterations, 5);
    }
}
