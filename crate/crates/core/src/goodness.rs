//! Fit quality: the occupied-bin epsilon measure, Kolmogorov-Smirnov
//! statistics with bootstrap p-values, and epsilon by publish hour.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::distributions::{Distribution, ModelParams};
use crate::event_store::DAY;
use crate::fitting::{self, EmConfig, FitError, PostFit};
use crate::intervals::{EmpiricalCdf, IntervalSeries};
use crate::seed;

#[derive(Debug, Error)]
pub enum GoodnessError {
    #[error("no occupied bins")]
    NoBins,
    #[error("no samples")]
    NoSamples,
    #[error("at least one replica is required")]
    NoReplicas,
    #[error("sample {0} is not a valid count")]
    NotACount(f64),
    #[error("fit on the observed data failed: {0}")]
    Fit(#[from] FitError),
    #[error("every replica failed to refit")]
    AllReplicasFailed,
}

/// Mean absolute cdf difference over occupied bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpsilonError {
    pub value: f64,
    /// Number of occupied bins `T`.
    pub bins: usize,
}

/// `sum_{k in bins} |f(k) - g(k)| / |bins|`, each bin evaluated at its right edge.
pub fn epsilon<F, G>(f: F, g: G, bins: &[u64]) -> Result<EpsilonError, GoodnessError>
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    if bins.is_empty() {
        return Err(GoodnessError::NoBins);
    }
    let total: f64 = bins.iter().map(|&k| (f(k as f64) - g(k as f64)).abs()).sum();
    Ok(EpsilonError {
        value: total / bins.len() as f64,
        bins: bins.len(),
    })
}

/// Epsilon of a model cdf against the ECDF of a series over its occupied bins.
pub fn epsilon_of_model<D: Distribution + ?Sized>(model: &D, series: &IntervalSeries) -> EpsilonError {
    let ecdf = EmpiricalCdf::from_samples(series.samples()).expect("series are nonempty");
    epsilon(|t| model.cumulative(t), |t| ecdf.eval(t), series.occupied_bins()).expect("series are nonempty")
}

/// Epsilon of a discrete model against integer data; the bins are the distinct values.
pub fn epsilon_of_counts<D: Distribution + ?Sized>(model: &D, counts: &[u64]) -> EpsilonError {
    let xs: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let ecdf = EmpiricalCdf::from_samples(&xs).expect("counts are nonempty");
    let mut bins = counts.to_vec();
    bins.sort_unstable();
    bins.dedup();
    epsilon(|t| model.cumulative(t), |t| ecdf.eval(t), &bins).expect("counts are nonempty")
}

/// Kolmogorov-Smirnov distance between the sample ECDF and a model.
///
/// At every distinct sample value `x` both one-sided gaps are checked: at
/// `x` itself and just below it, where the model's left limit is
/// `F(x - 1)` for integer support and `F(x)` otherwise.
pub fn ks_statistic<D: Distribution + ?Sized>(samples: &[f64], model: &D) -> Result<f64, GoodnessError> {
    if samples.is_empty() {
        return Err(GoodnessError::NoSamples);
    }
    let ecdf = EmpiricalCdf::from_samples(samples).expect("nonempty");
    let discrete = model.support().is_discrete();
    let mut d: f64 = 0.0;
    let mut below = 0.0;
    for (&x, &fe) in ecdf.support().iter().zip(ecdf.cum_prob()) {
        let f = model.cumulative(x);
        let f_left = if discrete { model.cumulative(x - 1.0) } else { f };
        d = d.max((fe - f).abs()).max((below - f_left).abs());
        below = fe;
    }
    Ok(d)
}

/// Model families the bootstrap can refit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KsFamily {
    Ln,
    Dln,
    PowerLaw,
    TruncatedLn,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KsResult {
    pub family: KsFamily,
    pub d: f64,
    pub p_value: f64,
    /// Replicas requested.
    pub n_replicas: usize,
    /// Replicas whose refit failed and were left out of the p-value.
    pub discarded: usize,
    /// Binomial standard error of `p_value`.
    pub std_error: f64,
    /// More than 10% of replicas discarded.
    pub flagged: bool,
    pub fitted: ModelParams,
}

fn counts_of(samples: &[f64], x_min: u64) -> Result<Vec<u64>, GoodnessError> {
    samples
        .iter()
        .map(|&x| {
            if x.fract() == 0.0 && x >= x_min as f64 && x.is_finite() {
                Ok(x as u64)
            } else {
                Err(GoodnessError::NotACount(x))
            }
        })
        .collect()
}

fn refit(family: KsFamily, samples: &[f64], x_min: u64, em: &EmConfig) -> Result<ModelParams, GoodnessError> {
    Ok(match family {
        KsFamily::Ln => ModelParams::LogNormal(fitting::mle_ln(samples)?),
        KsFamily::Dln => {
            let series = IntervalSeries::new(samples.to_vec(), crate::intervals::Origin::Raw)
                .map_err(|e| GoodnessError::Fit(e.into()))?;
            fitting::fit_dln(&series, em)?.params
        }
        KsFamily::PowerLaw => ModelParams::PowerLaw(fitting::mle_powerlaw(&counts_of(samples, x_min)?, x_min)?.params),
        KsFamily::TruncatedLn => {
            ModelParams::TruncatedLogNormal(fitting::mle_truncated_ln(&counts_of(samples, x_min)?, x_min)?.params)
        }
    })
}

/// Semi-parametric bootstrap KS test.
///
/// The family is fitted to the data, giving `D_obs`; each replica draws
/// `n` points from the fitted model, refits and records `D_rep`. The
/// p-value is the fraction of successful replicas with `D_rep >= D_obs`.
/// Replica `i` uses its own stream derived from `seed`, so the result does
/// not depend on scheduling.
pub fn ks_test_montecarlo(
    samples: &[f64],
    family: KsFamily,
    x_min: u64,
    n_replicas: usize,
    seed: u64,
) -> Result<KsResult, GoodnessError> {
    if n_replicas == 0 {
        return Err(GoodnessError::NoReplicas);
    }
    if samples.is_empty() {
        return Err(GoodnessError::NoSamples);
    }
    let em = EmConfig {
        seed,
        ..EmConfig::default()
    };
    let fitted = refit(family, samples, x_min, &em)?;
    let d_obs = ks_statistic(samples, &fitted)?;
    let n = samples.len();
    let reps: Vec<Option<f64>> = (0..n_replicas)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::rng(seed, "ks-replica", i as u64);
            let draw = fitted.sample_with(n, &mut rng);
            let refitted = refit(family, &draw, x_min, &em).ok()?;
            ks_statistic(&draw, &refitted).ok()
        })
        .collect();
    let ok: Vec<f64> = reps.into_iter().flatten().collect();
    if ok.is_empty() {
        return Err(GoodnessError::AllReplicasFailed);
    }
    let discarded = n_replicas - ok.len();
    let p = ok.iter().filter(|&&d| d >= d_obs).count() as f64 / ok.len() as f64;
    Ok(KsResult {
        family,
        d: d_obs,
        p_value: p,
        n_replicas,
        discarded,
        std_error: (p * (1.0 - p) / ok.len() as f64).sqrt(),
        flagged: discarded * 10 > n_replicas,
        fitted,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HourStat {
    pub hour: u8,
    pub posts: usize,
    pub mean: f64,
    pub median: f64,
}

/// Hour of day `0..24` of a minute timestamp.
pub fn hour_of_day(ts: i64) -> u8 {
    (ts.rem_euclid(DAY) / 60) as u8
}

/// Mean and median epsilon per publish hour; hours without posts are `None`.
pub fn error_by_publish_hour(fits: &[PostFit]) -> [Option<HourStat>; 24] {
    let mut by_hour: Vec<Vec<f64>> = vec![Vec::new(); 24];
    for f in fits {
        by_hour[hour_of_day(f.ts) as usize].push(f.report.epsilon.value);
    }
    let mut out = [None; 24];
    for (h, mut v) in by_hour.into_iter().enumerate() {
        if v.is_empty() {
            continue;
        }
        v.sort_by(f64::total_cmp);
        let k = v.len();
        let median = if k % 2 == 1 { v[k / 2] } else { 0.5 * (v[k / 2 - 1] + v[k / 2]) };
        out[h] = Some(HourStat {
            hour: h as u8,
            posts: k,
            mean: v.iter().sum::<f64>() / k as f64,
            median,
        });
    }
    out
}

/// Max minus min of the hourly means over hours that have posts.
pub fn hourly_spread(stats: &[Option<HourStat>; 24]) -> Option<f64> {
    let means: Vec<f64> = stats.iter().flatten().map(|s| s.mean).collect();
    let max = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = means.iter().cloned().fold(f64::INFINITY, f64::min);
    (!means.is_empty()).then_some(max - min)
}

/// 24-row CSV `hour,posts,mean,median`; empty hours keep their row with blank values.
pub fn hourly_csv(stats: &[Option<HourStat>; 24]) -> String {
    let mut out = String::from("hour,posts,mean_epsilon,median_epsilon\n");
    for (h, s) in stats.iter().enumerate() {
        match s {
            Some(s) => out.push_str(&format!("{h},{},{},{}\n", s.posts, s.mean, s.median)),
            None => out.push_str(&format!("{h},0,,\n")),
        }
    }
    out
}
