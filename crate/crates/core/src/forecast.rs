//! Final comment count of a thread from its first `tau` minutes.
//!
//! The early PCIs are a sample of a log-normal right-truncated at `tau`.
//! Fitting that truncated model gives `F(tau)`, the share of the eventual
//! comments already seen, and `N = n_obs / F(tau)`. Truncation leaves
//! `sigma` weakly identified, so it is regularized toward the spread seen
//! on other threads of the same corpus.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::distributions::special::norm_cdf;
use crate::event_store::{Corpus, StoreError};
use crate::fitting::optim::{nelder_mead, NelderMeadConfig};
use crate::fitting::{ln_ll_from_moments, mle_ln};
use crate::intervals::{pci_of_post, IntervalError, ZeroPolicy};
use crate::seed;

/// Fewest early comments a forecast accepts.
pub const MIN_OBS: usize = 5;
/// Below this many early comments sigma is fixed at the prior mean.
pub const FIXED_SIGMA_BELOW: usize = 20;
/// Threads need this many comments to inform the prior.
pub const PRIOR_MIN_COMMENTS: usize = 20;
/// Fewest reference threads for an empirical prior.
pub const PRIOR_MIN_POSTS: usize = 5;
pub const PRIOR_MIN_WIDTH: f64 = 0.05;

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("only {n_obs} comment(s) within {tau} minutes; at least {MIN_OBS} needed, try a larger horizon")]
    TooFewEarly { n_obs: usize, tau: f64 },
    #[error("horizon must be positive, got {0}")]
    BadHorizon(f64),
    #[error(transparent)]
    Interval(#[from] IntervalError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorSource {
    /// Population default: geometric standard deviation near 4.5.
    Default,
    /// Estimated from this many other threads.
    Empirical(usize),
}

/// Gaussian prior on the log-scale `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SigmaPrior {
    pub mean: f64,
    pub sd: f64,
    pub source: PriorSource,
}

impl Default for SigmaPrior {
    fn default() -> Self {
        Self {
            mean: 4.5f64.ln(),
            sd: 0.91 / 4.5,
            source: PriorSource::Default,
        }
    }
}

/// Mean and spread of per-thread sigma over threads other than `exclude`
/// with at least [`PRIOR_MIN_COMMENTS`] comments; the default prior when
/// fewer than [`PRIOR_MIN_POSTS`] qualify.
pub fn empirical_prior(corpus: &Corpus, exclude: Option<&str>, zero_policy: ZeroPolicy) -> SigmaPrior {
    let sigmas: Vec<f64> = corpus
        .posts()
        .iter()
        .filter(|p| Some(p.id.as_str()) != exclude)
        .filter_map(|p| {
            let s = pci_of_post(corpus, &p.id, zero_policy).ok()?;
            if s.len() < PRIOR_MIN_COMMENTS {
                return None;
            }
            mle_ln(s.samples()).ok().map(|f| f.sigma)
        })
        .collect();
    prior_from_sigmas(&sigmas)
}

pub fn prior_from_sigmas(sigmas: &[f64]) -> SigmaPrior {
    if sigmas.len() < PRIOR_MIN_POSTS {
        return SigmaPrior::default();
    }
    let n = sigmas.len() as f64;
    let mean = sigmas.iter().sum::<f64>() / n;
    let sd = (sigmas.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    SigmaPrior {
        mean,
        sd: sd.max(PRIOR_MIN_WIDTH),
        source: PriorSource::Empirical(sigmas.len()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastConfig {
    /// Horizon in minutes after publication.
    pub tau: f64,
    pub bootstrap: usize,
    /// Two-sided interval coverage.
    pub level: f64,
    pub seed: u64,
    pub zero_policy: ZeroPolicy,
}

impl ForecastConfig {
    pub fn new(tau: f64) -> Self {
        Self {
            tau,
            bootstrap: 200,
            level: 0.9,
            seed: seed::DEFAULT_SEED,
            zero_policy: ZeroPolicy::Clamp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Forecast {
    pub tau: f64,
    pub n_obs: usize,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub mu: f64,
    pub sigma: f64,
    /// Fitted share of comments arriving by `tau`.
    pub f_tau: f64,
    pub prior: SigmaPrior,
    pub sigma_fixed: bool,
}

struct Fit {
    mu: f64,
    sigma: f64,
    f_tau: f64,
}

fn fit_truncated(ys: &[f64], ln_tau: f64, prior: &SigmaPrior) -> Fit {
    let n = ys.len() as f64;
    let sy: f64 = ys.iter().sum();
    let syy: f64 = ys.iter().map(|y| y * y).sum();
    let objective = |mu: f64, sigma: f64| -> f64 {
        let ll = ln_ll_from_moments(mu, sigma, n, sy, syy);
        let f = norm_cdf((ln_tau - mu) / sigma);
        let pen = 0.5 * ((sigma - prior.mean) / prior.sd).powi(2);
        -(ll - n * f.ln()) + pen
    };
    let mu0 = sy / n;
    let cfg = NelderMeadConfig {
        f_tol: 1e-10,
        ..Default::default()
    };
    let (mu, sigma) = if ys.len() < FIXED_SIGMA_BELOW {
        let m = nelder_mead(|v| objective(v[0], prior.mean), &[mu0], cfg);
        (m.x[0], prior.mean)
    } else {
        let m = nelder_mead(|v| objective(v[0], v[1].exp()), &[mu0, prior.mean.ln()], cfg);
        (m.x[0], m.x[1].exp())
    };
    Fit {
        mu,
        sigma,
        f_tau: norm_cdf((ln_tau - mu) / sigma),
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos.fract());
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

/// Forecast from the PCIs of one thread; only those `<= tau` are used.
pub fn forecast_from_pcis(pcis: &[f64], config: &ForecastConfig, prior: &SigmaPrior) -> Result<Forecast, ForecastError> {
    if !(config.tau > 0.0 && config.tau.is_finite()) {
        return Err(ForecastError::BadHorizon(config.tau));
    }
    let ys: Vec<f64> = pcis.iter().filter(|&&t| t <= config.tau && t > 0.0).map(|t| t.ln()).collect();
    let n_obs = ys.len();
    if n_obs < MIN_OBS {
        return Err(ForecastError::TooFewEarly { n_obs, tau: config.tau });
    }
    let ln_tau = config.tau.ln();
    let fit = fit_truncated(&ys, ln_tau, prior);
    let estimate = n_obs as f64 / fit.f_tau;
    let reps: Vec<f64> = (0..config.bootstrap)
        .into_par_iter()
        .map(|b| {
            let mut rng = seed::rng(config.seed, "forecast", b as u64);
            let re: Vec<f64> = (0..n_obs).map(|_| ys[rng.random_range(0..n_obs)]).collect();
            n_obs as f64 / fit_truncated(&re, ln_tau, prior).f_tau
        })
        .collect();
    let (lower, upper) = if reps.is_empty() {
        (estimate, estimate)
    } else {
        let mut s = reps;
        s.sort_by(f64::total_cmp);
        let a = (1.0 - config.level) / 2.0;
        (percentile(&s, a), percentile(&s, 1.0 - a))
    };
    Ok(Forecast {
        tau: config.tau,
        n_obs,
        estimate,
        lower,
        upper,
        mu: fit.mu,
        sigma: fit.sigma,
        f_tau: fit.f_tau,
        prior: *prior,
        sigma_fixed: n_obs < FIXED_SIGMA_BELOW,
    })
}

/// Forecast one post of a corpus, using the other posts for the prior.
pub fn forecast_post(corpus: &Corpus, post_id: &str, config: &ForecastConfig) -> Result<Forecast, ForecastError> {
    let series = pci_of_post(corpus, post_id, config.zero_policy)?;
    let prior = empirical_prior(corpus, Some(post_id), config.zero_policy);
    forecast_from_pcis(series.samples(), config, &prior)
}
