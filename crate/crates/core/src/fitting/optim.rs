//! Derivative-free minimization.

/// Outcome of a Nelder-Mead run.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadConfig {
    /// Stop when the spread of simplex values falls below this.
    pub f_tol: f64,
    pub max_evals: usize,
    /// Initial simplex offset along each coordinate.
    pub step: f64,
    /// Restarts from the best vertex after convergence; guards against
    /// premature collapse.
    pub restarts: usize,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        Self {
            f_tol: 1e-8,
            max_evals: 2000,
            step: 0.25,
            restarts: 1,
        }
    }
}

/// Minimize `f` from `x0` with the standard reflection/expansion/contraction/shrink rules.
///
/// Non-finite objective values are treated as `+inf`.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], config: NelderMeadConfig) -> Minimum {
    let mut eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut start = x0.to_vec();
    let mut total = 0;
    let mut last = None;
    for _ in 0..=config.restarts {
        let run = run(&mut eval, &start, config, config.max_evals.saturating_sub(total));
        total += run.evaluations;
        start.clone_from(&run.x);
        let improved = last.as_ref().is_none_or(|prev: &Minimum| prev.value - run.value > config.f_tol);
        let done = !improved && run.converged;
        last = Some(Minimum {
            evaluations: total,
            ..run
        });
        if done || total >= config.max_evals {
            break;
        }
    }
    last.expect("at least one run")
}

fn run<F: FnMut(&[f64]) -> f64>(f: &mut F, x0: &[f64], config: NelderMeadConfig, budget: usize) -> Minimum {
    let d = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..d {
        let mut v = x0.to_vec();
        v[i] += config.step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    let mut evals = d + 1;
    let mut converged = false;
    while evals < budget {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        let (best, worst) = (values[0], values[d]);
        if best.is_finite() && (worst - best).abs() <= config.f_tol {
            converged = true;
            break;
        }
        let centroid: Vec<f64> = (0..d)
            .map(|j| simplex[..d].iter().map(|v| v[j]).sum::<f64>() / d as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> { (0..d).map(|j| centroid[j] + t * (simplex[d][j] - centroid[j])).collect() };
        let xr = along(-1.0);
        let fr = f(&xr);
        evals += 1;
        if fr < values[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            evals += 1;
            if fe < fr {
                simplex[d] = xe;
                values[d] = fe;
            } else {
                simplex[d] = xr;
                values[d] = fr;
            }
        } else if fr < values[d - 1] {
            simplex[d] = xr;
            values[d] = fr;
        } else {
            let (xc, fc) = if fr < values[d] {
                let xc = along(-0.5);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = along(0.5);
                let fc = f(&xc);
                (xc, fc)
            };
            evals += 1;
            if fc < values[d].min(fr) {
                simplex[d] = xc;
                values[d] = fc;
            } else {
                for i in 1..=d {
                    for j in 0..d {
                        simplex[i][j] = simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j]);
                    }
                    values[i] = f(&simplex[i]);
                }
                evals += d;
            }
        }
    }
    let best = (0..=d).min_by(|&a, &b| values[a].total_cmp(&values[b])).expect("nonempty simplex");
    Minimum {
        x: simplex[best].clone(),
        value: values[best],
        evaluations: evals,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_rosenbrock_minimum() {
        let m = nelder_mead(
            |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            &[-1.2, 1.0],
            NelderMeadConfig {
                f_tol: 1e-14,
                max_evals: 10_000,
                ..Default::default()
            },
        );
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-3 && (m.x[1] - 1.0).abs() < 1e-3, "{:?}", m.x);
    }

    #[test]
    fn respects_evaluation_budget() {
        let m = nelder_mead(
            |x| x[0].sin() * x[1].cos() + 0.01 * (x[0] * x[0] + x[1] * x[1]),
            &[3.0, 3.0],
            NelderMeadConfig {
                f_tol: 0.0,
                max_evals: 50,
                ..Default::default()
            },
        );
        assert!(!m.converged);
        assert!(m.evaluations <= 55);
    }

    #[test]
    fn nan_is_treated_as_infinite() {
        let m = nelder_mead(
            |x| if x[0] < 0.0 { f64::NAN } else { (x[0] - 2.0).powi(2) },
            &[0.5],
            NelderMeadConfig::default(),
        );
        assert!((m.x[0] - 2.0).abs() < 1e-3);
    }
}
