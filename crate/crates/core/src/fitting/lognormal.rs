use std::f64::consts::PI;

use rand::Rng;

use super::{derived_for, Diagnostics, FitError, FitFlag, FitReport};
use crate::distributions::{DoubleLogNormalParams, LogNormalParams, ModelParams};
use crate::goodness::epsilon_of_model;
use crate::intervals::IntervalSeries;
use crate::seed;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Closed-form MLE on log samples: mean and population standard deviation.
pub fn mle_ln(samples: &[f64]) -> Result<LogNormalParams, FitError> {
    if samples.len() < 2 {
        return Err(FitError::TooFewSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    let n = samples.len() as f64;
    let mu = samples.iter().map(|t| t.ln()).sum::<f64>() / n;
    let var = samples.iter().map(|t| (t.ln() - mu).powi(2)).sum::<f64>() / n;
    let sigma = var.sqrt();
    if !(sigma > 0.0) {
        return Err(FitError::Degenerate);
    }
    Ok(LogNormalParams::new(mu, sigma)?)
}

/// `sum ln f_LN(t_i)` in the time domain.
pub fn ln_log_likelihood(p: &LogNormalParams, samples: &[f64]) -> f64 {
    samples.iter().map(|&t| p.ln_density(t)).sum()
}

pub fn dln_log_likelihood(p: &DoubleLogNormalParams, samples: &[f64]) -> f64 {
    let logs: Vec<f64> = samples.iter().map(|t| t.ln()).collect();
    let ll_y = mixture_ll(&logs, &Gauss2::from(*p), None);
    ll_y - logs.iter().sum::<f64>()
}

pub fn fit_ln(series: &IntervalSeries) -> Result<FitReport, FitError> {
    let params = mle_ln(series.samples())?;
    let model = ModelParams::LogNormal(params);
    let mut diagnostics = Diagnostics::closed_form();
    if series.len() < super::LOW_N {
        diagnostics.flags.push(FitFlag::LowN);
    }
    Ok(FitReport {
        params: model,
        n: series.len(),
        log_likelihood: ln_log_likelihood(&params, series.samples()),
        epsilon: epsilon_of_model(&model, series),
        derived: Some(derived_for(&model)),
        diagnostics,
    })
}

/// EM settings for [`fit_dln`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmConfig {
    /// Stop when the mean per-sample log-likelihood gains less than this.
    pub tol: f64,
    pub max_iter: usize,
    /// Total number of starts: the median split plus `starts - 1` random ones.
    pub starts: usize,
    /// Lower bound on component sigma in the log domain; crossing it aborts the start.
    pub sigma_floor: f64,
    pub seed: u64,
    /// Return the nested single LN unless the mixture gains more than `1.5 ln n`.
    pub nesting_guard: bool,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
            starts: 5,
            sigma_floor: 1e-3,
            seed: seed::DEFAULT_SEED,
            nesting_guard: true,
        }
    }
}

/// Two-component Gaussian mixture on `y = ln t`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Gauss2 {
    c: f64,
    m1: f64,
    s1: f64,
    m2: f64,
    s2: f64,
}

impl From<DoubleLogNormalParams> for Gauss2 {
    fn from(p: DoubleLogNormalParams) -> Self {
        Self {
            c: p.c,
            m1: p.mu1,
            s1: p.sigma1,
            m2: p.mu2,
            s2: p.sigma2,
        }
    }
}

fn ln_gauss(y: f64, m: f64, s: f64) -> f64 {
    let u = (y - m) / s;
    -0.5 * u * u - s.ln() - 0.5 * LN_2PI
}

/// Mixture log-likelihood on `ys`; fills responsibilities of component 1 if asked.
fn mixture_ll(ys: &[f64], g: &Gauss2, mut resp: Option<&mut Vec<f64>>) -> f64 {
    let (lc1, lc2) = (g.c.ln(), (1.0 - g.c).ln());
    let mut ll = 0.0;
    if let Some(r) = resp.as_deref_mut() {
        r.clear();
    }
    for &y in ys {
        let a = lc1 + ln_gauss(y, g.m1, g.s1);
        let b = lc2 + ln_gauss(y, g.m2, g.s2);
        let m = a.max(b);
        let lse = if m == f64::NEG_INFINITY {
            m
        } else {
            m + ((a - m).exp() + (b - m).exp()).ln()
        };
        ll += lse;
        if let Some(r) = resp.as_deref_mut() {
            r.push((a - lse).exp());
        }
    }
    ll
}

#[derive(Debug)]
struct EmRun {
    g: Gauss2,
    ll_y: f64,
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
}

fn em_run(ys: &[f64], init: Gauss2, cfg: &EmConfig) -> Option<EmRun> {
    let n = ys.len() as f64;
    let mut g = init;
    let mut resp = Vec::with_capacity(ys.len());
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut ll = mixture_ll(ys, &g, Some(&mut resp));
    trace.push(ll);
    while iterations < cfg.max_iter {
        iterations += 1;
        let w1: f64 = resp.iter().sum();
        let w2 = n - w1;
        if w1 <= 0.0 || w2 <= 0.0 {
            return None;
        }
        let m1 = resp.iter().zip(ys).map(|(r, y)| r * y).sum::<f64>() / w1;
        let m2 = resp.iter().zip(ys).map(|(r, y)| (1.0 - r) * y).sum::<f64>() / w2;
        let v1 = resp.iter().zip(ys).map(|(r, y)| r * (y - m1).powi(2)).sum::<f64>() / w1;
        let v2 = resp.iter().zip(ys).map(|(r, y)| (1.0 - r) * (y - m2).powi(2)).sum::<f64>() / w2;
        let (s1, s2) = (v1.sqrt(), v2.sqrt());
        if !(s1 >= cfg.sigma_floor && s2 >= cfg.sigma_floor) {
            return None;
        }
        g = Gauss2 {
            c: w1 / n,
            m1,
            s1,
            m2,
            s2,
        };
        let next = mixture_ll(ys, &g, Some(&mut resp));
        trace.push(next);
        let gain = (next - ll) / n;
        ll = next;
        if gain.abs() < cfg.tol {
            converged = true;
            break;
        }
    }
    Some(EmRun {
        g,
        ll_y: ll,
        iterations,
        converged,
        trace,
    })
}

fn median_split(sorted: &[f64]) -> Gauss2 {
    let h = sorted.len() / 2;
    let stats = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let s = (v.iter().map(|y| (y - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
        (m, s)
    };
    let (m1, s1) = stats(&sorted[..h]);
    let (m2, s2) = stats(&sorted[h..]);
    Gauss2 {
        c: 0.5,
        m1,
        s1,
        m2,
        s2,
    }
}

fn random_start(ys: &[f64], spread: f64, rng: &mut impl Rng) -> Gauss2 {
    let i = rng.random_range(0..ys.len());
    let mut j = rng.random_range(0..ys.len());
    if ys[j] == ys[i] {
        j = (0..ys.len()).find(|&k| ys[k] != ys[i]).unwrap_or(j);
    }
    let s = spread.max(1e-2);
    Gauss2 {
        c: rng.random_range(0.3..0.7),
        m1: ys[i],
        s1: s * rng.random_range(0.5..1.0),
        m2: ys[j],
        s2: s * rng.random_range(0.5..1.0),
    }
}

/// EM fit of a double log-normal; best of `config.starts` starts.
///
/// The returned report's diagnostics carry the log-likelihood trace (log
/// domain, one entry per iteration) of the winning start.
pub fn fit_dln(series: &IntervalSeries, config: &EmConfig) -> Result<FitReport, FitError> {
    let samples = series.samples();
    if samples.len() < super::MIN_DLN {
        return Err(FitError::TooFewSamples {
            needed: super::MIN_DLN,
            got: samples.len(),
        });
    }
    let single = mle_ln(samples)?;
    let mut ys: Vec<f64> = samples.iter().map(|t| t.ln()).collect();
    ys.sort_by(f64::total_cmp);
    let sum_y: f64 = ys.iter().sum();

    let mut rng = seed::rng(config.seed, "em", 0);
    let mut best: Option<EmRun> = None;
    let mut collapsed = 0;
    for start in 0..config.starts.max(1) {
        let init = if start == 0 {
            median_split(&ys)
        } else {
            random_start(&ys, single.sigma, &mut rng)
        };
        if !(init.s1 >= config.sigma_floor && init.s2 >= config.sigma_floor) {
            collapsed += 1;
            continue;
        }
        match em_run(&ys, init, config) {
            Some(run) => {
                if best.as_ref().is_none_or(|b| run.ll_y > b.ll_y) {
                    best = Some(run);
                }
            }
            None => collapsed += 1,
        }
    }
    let run = best.ok_or(FitError::AllStartsCollapsed(collapsed))?;

    let ln_ll = ln_log_likelihood(&single, samples);
    let mix_ll = run.ll_y - sum_y;
    let penalty = 1.5 * (samples.len() as f64).ln();
    let mut diagnostics = Diagnostics {
        iterations: run.iterations,
        converged: run.converged,
        restarts: collapsed,
        flags: Vec::new(),
        ll_trace: run.trace,
    };
    if !run.converged {
        diagnostics.flags.push(FitFlag::Unconverged);
    }
    let (params, log_likelihood) = if (config.nesting_guard && mix_ll - ln_ll < penalty) || mix_ll < ln_ll {
        diagnostics.flags.push(FitFlag::Nested);
        (DoubleLogNormalParams::nested(single), ln_ll)
    } else {
        let g = run.g;
        (DoubleLogNormalParams::new(g.m1, g.s1, g.c, g.m2, g.s2)?, mix_ll)
    };
    let model = ModelParams::DoubleLogNormal(params);
    Ok(FitReport {
        params: model,
        n: samples.len(),
        log_likelihood,
        epsilon: epsilon_of_model(&model, series),
        derived: Some(derived_for(&model)),
        diagnostics,
    })
}

/// `sum ln f_LN(t_i)` from the sufficient statistics `n`, `sum y`, `sum y^2` of `y = ln t`.
pub(crate) fn ln_ll_from_moments(mu: f64, sigma: f64, n: f64, sy: f64, syy: f64) -> f64 {
    let ss = syy - 2.0 * mu * sy + n * mu * mu;
    -0.5 * ss / (sigma * sigma) - n * sigma.ln() - sy - 0.5 * n * (2.0 * PI).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::Distribution;
    use crate::intervals::Origin;
    use proptest::prelude::*;

    fn series(v: Vec<f64>) -> IntervalSeries {
        IntervalSeries::new(v, Origin::Raw).unwrap()
    }

    #[test]
    fn ln_closed_form_on_three_points() {
        let s = series(vec![1.0, 1f64.exp(), 2f64.exp()]);
        let r = fit_ln(&s).unwrap();
        let ModelParams::LogNormal(p) = r.params else { panic!() };
        assert!((p.mu - 1.0).abs() < 1e-15);
        assert!((p.sigma - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(r.diagnostics.flags.contains(&FitFlag::LowN));
    }

    #[test]
    fn ln_rejects_degenerate_and_tiny_series() {
        assert!(matches!(fit_ln(&series(vec![3.0, 3.0, 3.0])), Err(FitError::Degenerate)));
        assert!(matches!(fit_ln(&series(vec![3.0])), Err(FitError::TooFewSamples { .. })));
    }

    #[test]
    fn ln_recovers_parameters() {
        let truth = LogNormalParams::new(5.1, 1.5).unwrap();
        let r = fit_ln(&series(truth.sample(10_000, 3))).unwrap();
        let ModelParams::LogNormal(p) = r.params else { panic!() };
        assert!((p.mu - 5.1).abs() < 0.05 && (p.sigma - 1.5).abs() < 0.05);
    }

    #[test]
    fn ln_log_likelihood_matches_moment_form() {
        let xs = LogNormalParams::new(2.0, 0.7).unwrap().sample(500, 1);
        let p = LogNormalParams::new(1.8, 0.9).unwrap();
        let ys: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
        let (sy, syy) = (ys.iter().sum::<f64>(), ys.iter().map(|y| y * y).sum::<f64>());
        let a = ln_log_likelihood(&p, &xs);
        let b = ln_ll_from_moments(p.mu, p.sigma, xs.len() as f64, sy, syy);
        assert!((a - b).abs() < 1e-8 * a.abs());
    }

    #[test]
    fn dln_recovers_well_separated_mixture() {
        let truth = DoubleLogNormalParams::new(4.0, 1.0, 0.7, 7.0, 0.5).unwrap();
        let r = fit_dln(&series(truth.sample(20_000, 8)), &EmConfig::default()).unwrap();
        let ModelParams::DoubleLogNormal(p) = r.params else { panic!() };
        assert!((p.mu1 - 4.0).abs() < 0.1, "{p:?}");
        assert!((p.sigma1 - 1.0).abs() < 0.1);
        assert!((p.c - 0.7).abs() < 0.05);
        assert!((p.mu2 - 7.0).abs() < 0.1);
        assert!((p.sigma2 - 0.5).abs() < 0.1);
        assert!(r.diagnostics.converged);
        let trace = &r.diagnostics.ll_trace;
        assert!(trace.windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0].abs()));
    }

    #[test]
    fn dln_nests_ln_on_single_component_data() {
        for seed in 0..5 {
            let xs = LogNormalParams::new(5.0, 1.2).unwrap().sample(800, seed);
            let s = series(xs);
            let ln = fit_ln(&s).unwrap();
            let dln = fit_dln(&s, &EmConfig::default()).unwrap();
            assert!(dln.epsilon.value <= ln.epsilon.value + 1e-6, "seed {seed}");
            assert!(dln.log_likelihood >= ln.log_likelihood - 1e-6);
        }
    }

    #[test]
    fn dln_without_guard_never_loses_likelihood() {
        let xs = LogNormalParams::new(3.0, 0.8).unwrap().sample(300, 4);
        let s = series(xs);
        let cfg = EmConfig {
            nesting_guard: false,
            ..Default::default()
        };
        let ln = fit_ln(&s).unwrap();
        let dln = fit_dln(&s, &cfg).unwrap();
        assert!(dln.log_likelihood >= ln.log_likelihood - 1e-6);
    }

    #[test]
    fn dln_needs_ten_samples() {
        let s = series((1..=9).map(f64::from).collect());
        assert!(matches!(fit_dln(&s, &EmConfig::default()), Err(FitError::TooFewSamples { .. })));
    }

    #[test]
    fn dln_collapse_on_repeated_values_is_an_error() {
        // two distinct values: every start collapses onto a point mass
        let mut v = vec![5.0; 30];
        v.extend(vec![50.0; 30]);
        let r = fit_dln(&series(v), &EmConfig::default());
        assert!(matches!(r, Err(FitError::AllStartsCollapsed(_))), "{r:?}");
    }

    #[test]
    fn dln_fit_is_deterministic() {
        let xs = DoubleLogNormalParams::new(3.0, 1.0, 0.6, 6.0, 0.4).unwrap().sample(1000, 2);
        let a = fit_dln(&series(xs.clone()), &EmConfig::default()).unwrap();
        let b = fit_dln(&series(xs), &EmConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn ln_mle_is_scale_equivariant(seed in 0u64..1000, k in 0.01f64..100.0) {
            let xs = LogNormalParams::new(2.0, 1.0).unwrap().sample(50, seed);
            let scaled: Vec<f64> = xs.iter().map(|x| x * k).collect();
            let a = mle_ln(&xs).unwrap();
            let b = mle_ln(&scaled).unwrap();
            prop_assert!((b.mu - a.mu - k.ln()).abs() < 1e-12);
            prop_assert!((b.sigma - a.sigma).abs() < 1e-12);
        }

        #[test]
        fn dln_is_canonical_and_em_monotone(seed in 0u64..1000) {
            let xs = DoubleLogNormalParams::new(2.0, 0.5, 0.5, 4.0, 1.0).unwrap().sample(200, seed);
            let r = fit_dln(&series(xs), &EmConfig { nesting_guard: false, ..Default::default() }).unwrap();
            let ModelParams::DoubleLogNormal(p) = r.params else { panic!() };
            prop_assert!(p.c >= 0.5);
            let t = &r.diagnostics.ll_trace;
            prop_assert!(t.windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0].abs()));
        }
    }
}
