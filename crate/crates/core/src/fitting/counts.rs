use std::collections::BTreeMap;

use serde::Serialize;

use super::optim::{nelder_mead, NelderMeadConfig};
use super::{Diagnostics, FitError, FitFlag, FitReport};
use crate::distributions::special::hurwitz_zeta;
use crate::distributions::{Distribution, ModelParams, PowerLawParams, TruncatedLogNormalParams};
use crate::goodness::epsilon_of_counts;

/// Exponents above this are reported but flagged as implausibly steep.
pub const STEEP_GAMMA: f64 = 3.0;

/// Support mass `1 - F(x_min - 1/2)` below which a truncated fit is flagged.
pub const MIN_SUPPORT_MASS: f64 = 1e-3;

/// Distinct values with multiplicities, ascending.
fn tally(counts: &[u64]) -> Vec<(u64, u64)> {
    let mut m = BTreeMap::new();
    for &c in counts {
        *m.entry(c).or_insert(0u64) += 1;
    }
    m.into_iter().collect()
}

fn check_counts(counts: &[u64], x_min: u64) -> Result<(), FitError> {
    if x_min == 0 {
        return Err(FitError::BadXmin(x_min));
    }
    if counts.is_empty() {
        return Err(FitError::TooFewSamples { needed: 1, got: 0 });
    }
    if let Some(&c) = counts.iter().find(|&&c| c < x_min) {
        return Err(FitError::BelowXmin { value: c, x_min });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawEstimate {
    pub params: PowerLawParams,
    /// Continuity-corrected closed-form starting value.
    pub approximate: f64,
    pub newton_steps: usize,
    pub newton_failed: bool,
}

/// Discrete power-law MLE: closed-form continuity-corrected estimate, then
/// Newton steps on the exact likelihood `-gamma sum ln x - n ln zeta(gamma, x_min)`.
pub fn mle_powerlaw(counts: &[u64], x_min: u64) -> Result<PowerLawEstimate, FitError> {
    check_counts(counts, x_min)?;
    if counts.iter().all(|&c| c == x_min) {
        return Err(FitError::Degenerate);
    }
    let n = counts.len() as f64;
    let shift = x_min as f64 - 0.5;
    let sum_ln: f64 = counts.iter().map(|&c| (c as f64).ln()).sum();
    let approximate = 1.0 + n / counts.iter().map(|&c| (c as f64 / shift).ln()).sum::<f64>();

    let ln_zeta = |g: f64| hurwitz_zeta(g, x_min as f64).ln();
    let mut gamma = approximate;
    let mut steps = 0;
    let mut failed = false;
    const H: f64 = 1e-4;
    while steps < 30 {
        if gamma - H <= 1.0 {
            failed = true;
            break;
        }
        let (lm, l0, lp) = (ln_zeta(gamma - H), ln_zeta(gamma), ln_zeta(gamma + H));
        let d1 = -sum_ln - n * (lp - lm) / (2.0 * H);
        let d2 = -n * (lp - 2.0 * l0 + lm) / (H * H);
        let next = gamma - d1 / d2;
        steps += 1;
        if !(next.is_finite() && next > 1.0 && d2 < 0.0) {
            failed = true;
            break;
        }
        let delta = (next - gamma).abs();
        gamma = next;
        if delta < 1e-10 {
            break;
        }
    }
    if failed {
        gamma = approximate;
    }
    Ok(PowerLawEstimate {
        params: PowerLawParams::new(gamma, x_min)?,
        approximate,
        newton_steps: steps,
        newton_failed: failed,
    })
}

pub fn powerlaw_log_likelihood(p: &PowerLawParams, counts: &[u64]) -> f64 {
    let sum_ln: f64 = counts.iter().map(|&c| (c as f64).ln()).sum();
    -p.gamma * sum_ln - counts.len() as f64 * p.normalizer().ln()
}

pub fn fit_powerlaw_mle(counts: &[u64], x_min: u64) -> Result<FitReport, FitError> {
    let est = mle_powerlaw(counts, x_min)?;
    let mut diagnostics = Diagnostics {
        iterations: est.newton_steps,
        converged: !est.newton_failed,
        ..Diagnostics::closed_form()
    };
    if est.newton_failed {
        diagnostics.flags.push(FitFlag::NewtonFailed);
    }
    if est.params.gamma > STEEP_GAMMA {
        diagnostics.flags.push(FitFlag::Steep);
    }
    let model = ModelParams::PowerLaw(est.params);
    Ok(FitReport {
        params: model,
        n: counts.len(),
        log_likelihood: powerlaw_log_likelihood(&est.params, counts),
        epsilon: epsilon_of_counts(&model, counts),
        derived: None,
        diagnostics,
    })
}

/// Binning of the frequency histogram used by the regression fit.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Binning {
    /// One bin per integer value; frequency is the raw count.
    #[default]
    Raw,
    /// Bins `[b^k, b^(k+1))`; frequency is count per unit width, placed at
    /// the geometric centre of the integers in the bin.
    Log { base: f64 },
}

/// Least-squares line through `(ln x, ln freq)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegressionFit {
    pub slope: f64,
    pub intercept: f64,
    /// Pearson correlation of the log-log points.
    pub r: f64,
    pub points: usize,
}

pub fn fit_powerlaw_regression(counts: &[u64], binning: Binning) -> Result<RegressionFit, FitError> {
    let t = tally(counts);
    if t.len() < 3 {
        return Err(FitError::TooFewDistinct { needed: 3, got: t.len() });
    }
    let points: Vec<(f64, f64)> = match binning {
        Binning::Raw => t.iter().map(|&(x, f)| (x as f64, f as f64)).collect(),
        Binning::Log { base } => {
            if !(base > 1.0 && base.is_finite()) {
                return Err(FitError::BadBinning(base));
            }
            let mut bins: BTreeMap<i64, u64> = BTreeMap::new();
            for &(x, f) in &t {
                let k = ((x as f64).ln() / base.ln() + 1e-12).floor() as i64;
                *bins.entry(k).or_insert(0) += f;
            }
            bins.into_iter()
                .map(|(k, f)| {
                    let lo = base.powi(k as i32).ceil().max(1.0);
                    let hi = (base.powi(k as i32 + 1).ceil() - 1.0).max(lo);
                    ((lo * hi).sqrt(), f as f64 / (hi - lo + 1.0))
                })
                .collect()
        }
    };
    regression_on_points(&points)
}

/// Regression on an explicit histogram `(x, freq)`; nonpositive frequencies are skipped.
pub fn regression_on_points(points: &[(f64, f64)]) -> Result<RegressionFit, FitError> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, f)| *x > 0.0 && *f > 0.0)
        .map(|(x, f)| (x.ln(), f.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(FitError::TooFewDistinct {
            needed: 3,
            got: pts.len(),
        });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let r = if syy > 0.0 { (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0) } else { 0.0 };
    Ok(RegressionFit {
        slope,
        intercept: my - slope * mx,
        r,
        points: pts.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedEstimate {
    pub params: TruncatedLogNormalParams,
    pub log_likelihood: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Mean log-likelihood of tallied counts under a truncated LN.
fn truncated_mean_ll(mu: f64, sigma: f64, x_min: u64, t: &[(u64, u64)], n: f64) -> f64 {
    let Ok(p) = TruncatedLogNormalParams::new(mu, sigma, x_min) else {
        return f64::NEG_INFINITY;
    };
    let base = p.continuous();
    let norm = p.support_mass().ln();
    let mut ll = 0.0;
    for &(x, f) in t {
        let m = base.interval_mass(x as f64 - 0.5, x as f64 + 0.5);
        ll += f as f64 * m.ln();
    }
    ll / n - norm
}

/// Nelder-Mead MLE over `(mu, ln sigma)`, started from the moments of `ln x`.
pub fn mle_truncated_ln(counts: &[u64], x_min: u64) -> Result<TruncatedEstimate, FitError> {
    check_counts(counts, x_min)?;
    let t = tally(counts);
    let n = counts.len() as f64;
    let logs = counts.iter().map(|&c| (c as f64).ln());
    let mu0 = logs.clone().sum::<f64>() / n;
    let sd0 = (logs.map(|y| (y - mu0).powi(2)).sum::<f64>() / n).sqrt().max(0.1);
    let min = nelder_mead(
        |v| -truncated_mean_ll(v[0], v[1].exp(), x_min, &t, n),
        &[mu0, sd0.ln()],
        NelderMeadConfig::default(),
    );
    if !min.value.is_finite() {
        return Err(FitError::NoFiniteLikelihood);
    }
    let params = TruncatedLogNormalParams::new(min.x[0], min.x[1].exp(), x_min)?;
    Ok(TruncatedEstimate {
        params,
        log_likelihood: -min.value * n,
        evaluations: min.evaluations,
        converged: min.converged,
    })
}

pub fn fit_truncated_ln(counts: &[u64], x_min: u64) -> Result<FitReport, FitError> {
    let est = mle_truncated_ln(counts, x_min)?;
    let mut diagnostics = Diagnostics {
        iterations: est.evaluations,
        converged: est.converged,
        ..Diagnostics::closed_form()
    };
    if !est.converged {
        diagnostics.flags.push(FitFlag::Unconverged);
    }
    if est.params.support_mass() < MIN_SUPPORT_MASS {
        diagnostics.flags.push(FitFlag::SmallSupportMass);
    }
    let model = ModelParams::TruncatedLogNormal(est.params);
    Ok(FitReport {
        params: model,
        n: counts.len(),
        log_likelihood: est.log_likelihood,
        epsilon: epsilon_of_counts(&model, counts),
        derived: None,
        diagnostics,
    })
}

/// Log-likelihood of counts under the discretized truncated LN.
pub fn truncated_log_likelihood(p: &TruncatedLogNormalParams, counts: &[u64]) -> f64 {
    counts.iter().map(|&c| p.density(c as f64).ln()).sum()
}
