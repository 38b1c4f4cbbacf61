//! Maximum-likelihood and regression estimation for every model family.

mod counts;
mod lognormal;
pub mod optim;

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

pub use counts::{
    fit_powerlaw_mle, fit_powerlaw_regression, fit_truncated_ln, mle_powerlaw, mle_truncated_ln,
    powerlaw_log_likelihood, regression_on_points, truncated_log_likelihood, Binning, PowerLawEstimate,
    RegressionFit, TruncatedEstimate, MIN_SUPPORT_MASS, STEEP_GAMMA,
};
pub(crate) use lognormal::ln_ll_from_moments;
pub use lognormal::{dln_log_likelihood, fit_dln, fit_ln, ln_log_likelihood, mle_ln, EmConfig};

use crate::distributions::{DistError, Distribution, LogNormalParams, ModelParams};
use crate::event_store::Corpus;
use crate::goodness::{epsilon_of_model, EpsilonError};
use crate::intervals::{self, EmpiricalCdf, Histogram, IntervalError, IntervalSeries, ZeroPolicy};

/// Below this many samples an LN fit is flagged `low-n`.
pub const LOW_N: usize = 5;
/// Fewest samples accepted by [`fit_dln`].
pub const MIN_DLN: usize = 10;
/// Bin width of the per-post epsilon histogram.
pub const EPSILON_BIN: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("need at least {needed} distinct values, got {got}")]
    TooFewDistinct { needed: usize, got: usize },
    #[error("degenerate series: all samples identical")]
    Degenerate,
    #[error("every EM start collapsed ({0} collapses)")]
    AllStartsCollapsed(usize),
    #[error("x_min must be at least 1, got {0}")]
    BadXmin(u64),
    #[error("count {value} is below x_min = {x_min}")]
    BelowXmin { value: u64, x_min: u64 },
    #[error("log-binning base must exceed 1, got {0}")]
    BadBinning(f64),
    #[error("likelihood is not finite anywhere the optimizer looked")]
    NoFiniteLikelihood,
    #[error(transparent)]
    Distribution(#[from] DistError),
    #[error(transparent)]
    Interval(#[from] IntervalError),
}

/// Conditions that make a returned fit less trustworthy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitFlag {
    /// Fewer than [`LOW_N`] samples.
    LowN,
    /// All samples identical; sigma pinned to the floor.
    Degenerate,
    /// Too few samples for a mixture; the nested LN is reported instead.
    DlnFallback,
    /// The mixture did not improve enough on one LN; the nested LN is reported.
    Nested,
    Unconverged,
    /// Exponent above [`STEEP_GAMMA`].
    Steep,
    /// Newton refinement diverged; the closed-form estimate is reported.
    NewtonFailed,
    /// Truncation point beyond the 0.999 quantile of the underlying LN.
    SmallSupportMass,
}

impl fmt::Display for FitFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitFlag::LowN => "low-n",
            FitFlag::Degenerate => "degenerate",
            FitFlag::DlnFallback => "dln-fallback",
            FitFlag::Nested => "nested",
            FitFlag::Unconverged => "unconverged",
            FitFlag::Steep => "steep",
            FitFlag::NewtonFailed => "newton-failed",
            FitFlag::SmallSupportMass => "small-support-mass",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    pub iterations: usize,
    /// `false` means the parameters are reported but unreliable.
    pub converged: bool,
    /// Starts abandoned because a component collapsed.
    pub restarts: usize,
    pub flags: Vec<FitFlag>,
    /// Log-likelihood per EM iteration (mixture fits only).
    pub ll_trace: Vec<f64>,
}

impl Diagnostics {
    pub fn closed_form() -> Self {
        Self {
            converged: true,
            ..Default::default()
        }
    }

    pub fn flag_text(&self) -> String {
        let v: Vec<String> = self.flags.iter().map(|f| f.to_string()).collect();
        v.join(";")
    }

    /// Usable without caveats: converged and not degenerate.
    pub fn reliable(&self) -> bool {
        self.converged && !self.flags.contains(&FitFlag::Degenerate)
    }
}

/// Median and geometric standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedStats {
    pub median: f64,
    pub sigma_g: f64,
}

/// `median = exp(mu)`, `sigma_g = exp(sigma)`.
pub fn derived_stats(p: &LogNormalParams) -> DerivedStats {
    DerivedStats {
        median: p.mu.exp(),
        sigma_g: p.sigma.exp(),
    }
}

/// For a mixture the median is that of the mixture and `sigma_g` that of
/// the dominant component.
pub(crate) fn derived_for(model: &ModelParams) -> DerivedStats {
    match model {
        ModelParams::LogNormal(p) => derived_stats(p),
        ModelParams::DoubleLogNormal(p) => DerivedStats {
            median: if p.c == 1.0 { p.mu1.exp() } else { p.inverse_cdf(0.5) },
            sigma_g: p.sigma1.exp(),
        },
        ModelParams::PowerLaw(p) => DerivedStats {
            median: p.inverse_cdf(0.5),
            sigma_g: f64::NAN,
        },
        ModelParams::TruncatedLogNormal(p) => DerivedStats {
            median: p.inverse_cdf(0.5),
            sigma_g: p.sigma.exp(),
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub params: ModelParams,
    pub n: usize,
    pub log_likelihood: f64,
    pub epsilon: EpsilonError,
    pub derived: Option<DerivedStats>,
    pub diagnostics: Diagnostics,
}

pub const FIT_CSV_HEADER: &str = "post_id,model,mu1,sigma1,c,mu2,sigma2,epsilon,loglik,converged,median,sigma_g,n,bins,flags";

impl FitReport {
    /// One row of the per-post CSV; `mu2`/`sigma2` are empty for a single LN.
    pub fn csv_row(&self, id: &str) -> String {
        let (mu1, s1, c, mu2, s2) = match self.params {
            ModelParams::LogNormal(p) => (p.mu.to_string(), p.sigma.to_string(), "1".to_string(), String::new(), String::new()),
            ModelParams::DoubleLogNormal(p) => (
                p.mu1.to_string(),
                p.sigma1.to_string(),
                p.c.to_string(),
                p.mu2.to_string(),
                p.sigma2.to_string(),
            ),
            ModelParams::TruncatedLogNormal(p) => (p.mu.to_string(), p.sigma.to_string(), String::new(), String::new(), String::new()),
            ModelParams::PowerLaw(_) => Default::default(),
        };
        let (median, sg) = match self.derived {
            Some(d) => (d.median.to_string(), d.sigma_g.to_string()),
            None => (String::new(), String::new()),
        };
        format!(
            "{id},{},{mu1},{s1},{c},{mu2},{s2},{},{},{},{median},{sg},{},{},{}",
            self.params.name(),
            self.epsilon.value,
            self.log_likelihood,
            self.diagnostics.converged,
            self.n,
            self.epsilon.bins,
            self.diagnostics.flag_text()
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Ln,
    Dln,
}

impl std::str::FromStr for Family {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ln" => Ok(Family::Ln),
            "dln" => Ok(Family::Dln),
            other => Err(format!("unknown model `{other}` (expected ln or dln)")),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Ln => "ln",
            Family::Dln => "dln",
        })
    }
}

/// Settings shared by corpus-wide fits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusFitConfig {
    pub zero_policy: ZeroPolicy,
    pub em: EmConfig,
}

impl Default for CorpusFitConfig {
    fn default() -> Self {
        Self {
            zero_policy: ZeroPolicy::Clamp,
            em: EmConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PostFit {
    pub post_id: String,
    /// Publication minute of the post.
    pub ts: i64,
    pub report: FitReport,
}

#[derive(Debug, Clone)]
pub struct CorpusFit {
    pub family: Family,
    /// Ordered by post id.
    pub posts: Vec<PostFit>,
    /// Posts without comments.
    pub skipped: Vec<String>,
    /// Posts whose series could not be fitted at all.
    pub failed: Vec<(String, String)>,
    pub epsilon_histogram: Histogram,
    pub epsilon_cdf: Option<EmpiricalCdf>,
}

impl CorpusFit {
    pub fn epsilons(&self) -> Vec<f64> {
        self.posts.iter().map(|p| p.report.epsilon.value).collect()
    }

    /// Fraction of fitted posts with epsilon strictly below `x`.
    pub fn fraction_below(&self, x: f64) -> f64 {
        if self.posts.is_empty() {
            return 0.0;
        }
        self.posts.iter().filter(|p| p.report.epsilon.value < x).count() as f64 / self.posts.len() as f64
    }

    pub fn mean_epsilon(&self) -> f64 {
        let e = self.epsilons();
        e.iter().sum::<f64>() / e.len().max(1) as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(FIT_CSV_HEADER);
        out.push('\n');
        for p in &self.posts {
            out.push_str(&p.report.csv_row(&p.post_id));
            out.push('\n');
        }
        out
    }
}

/// Sigma used for single-valued series, which have no spread to estimate.
pub const DEGENERATE_SIGMA: f64 = 1e-3;

fn degenerate_report(series: &IntervalSeries) -> FitReport {
    let mu = series.samples()[0].ln();
    let p = LogNormalParams { mu, sigma: DEGENERATE_SIGMA };
    let model = ModelParams::LogNormal(p);
    let mut flags = vec![FitFlag::Degenerate];
    if series.len() < LOW_N {
        flags.push(FitFlag::LowN);
    }
    FitReport {
        params: model,
        n: series.len(),
        log_likelihood: ln_log_likelihood(&p, series.samples()),
        epsilon: epsilon_of_model(&model, series),
        derived: Some(derived_stats(&p)),
        diagnostics: Diagnostics {
            converged: false,
            flags,
            ..Default::default()
        },
    }
}

/// Fit one post's PCI series; small or degenerate series degrade to
/// flagged fallbacks instead of failing.
pub fn fit_series(series: &IntervalSeries, family: Family, em: &EmConfig) -> Result<FitReport, FitError> {
    let first = series.samples()[0];
    if series.samples().iter().all(|&t| t == first) {
        return Ok(degenerate_report(series));
    }
    match family {
        Family::Ln => fit_ln(series),
        Family::Dln if series.len() < MIN_DLN => {
            let mut r = fit_ln(series)?;
            let ModelParams::LogNormal(p) = r.params else { unreachable!() };
            r.params = ModelParams::DoubleLogNormal(crate::distributions::DoubleLogNormalParams::nested(p));
            r.diagnostics.flags.push(FitFlag::DlnFallback);
            Ok(r)
        }
        Family::Dln => match fit_dln(series, em) {
            Err(FitError::AllStartsCollapsed(k)) => {
                let mut r = fit_ln(series)?;
                let ModelParams::LogNormal(p) = r.params else { unreachable!() };
                r.params = ModelParams::DoubleLogNormal(crate::distributions::DoubleLogNormalParams::nested(p));
                r.diagnostics.flags.push(FitFlag::DlnFallback);
                r.diagnostics.restarts = k;
                Ok(r)
            }
            other => other,
        },
    }
}

/// Fit every commented post in parallel; results ordered by post id.
pub fn fit_all_posts(corpus: &Corpus, family: Family, config: &CorpusFitConfig) -> CorpusFit {
    let mut ids: Vec<&str> = corpus.posts().iter().map(|p| p.id.as_str()).collect();
    ids.sort_unstable();
    let results: Vec<(String, Result<Option<PostFit>, String>)> = ids
        .par_iter()
        .map(|&id| {
            let ts = corpus.post(id).expect("listed post").ts;
            let out = match intervals::pci_of_post(corpus, id, config.zero_policy) {
                Err(IntervalError::NoActivity(_)) => Ok(None),
                // every comment dropped by the zero policy
                Err(IntervalError::EmptySeries) => Ok(None),
                Err(e) => Err(e.to_string()),
                Ok(series) => fit_series(&series, family, &config.em)
                    .map(|report| {
                        Some(PostFit {
                            post_id: id.to_string(),
                            ts,
                            report,
                        })
                    })
                    .map_err(|e| e.to_string()),
            };
            (id.to_string(), out)
        })
        .collect();
    let mut posts = Vec::new();
    let mut skipped = Vec::new();
    let mut failed = Vec::new();
    for (id, r) in results {
        match r {
            Ok(Some(p)) => posts.push(p),
            Ok(None) => skipped.push(id),
            Err(e) => failed.push((id, e)),
        }
    }
    let eps: Vec<f64> = posts.iter().map(|p| p.report.epsilon.value).collect();
    let epsilon_histogram = Histogram::build(&eps, EPSILON_BIN, 0.0).expect("positive width");
    let epsilon_cdf = EmpiricalCdf::from_samples(&eps).ok();
    CorpusFit {
        family,
        posts,
        skipped,
        failed,
        epsilon_histogram,
        epsilon_cdf,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_store::Event;
    use crate::intervals::Origin;
    use proptest::prelude::*;

    #[test]
    fn derived_stats_examples() {
        let d = derived_stats(&LogNormalParams::new(0.0, 4.5f64.ln()).unwrap());
        assert_eq!(d.median, 1.0);
        assert!((d.sigma_g - 4.5).abs() < 1e-14);
        let d = derived_stats(&LogNormalParams::new(5.0, 1.0).unwrap());
        assert!((d.median - 148.413_159_102_576_6).abs() < 1e-9);
        assert!(d.median / 60.0 < 2.5);
    }

    #[test]
    fn one_comment_posts_give_finite_epsilon() {
        let mut ev = Vec::new();
        for i in 0..6 {
            let id = format!("p{i}");
            ev.push(Event::post(&id, "ed", i * 100));
            ev.push(Event::comment(format!("c{i}"), &id, "u", i * 100 + 3 + i));
        }
        ev.push(Event::post("silent", "ed", 0));
        let c = Corpus::from_events(ev).unwrap();
        for fam in [Family::Ln, Family::Dln] {
            let fit = fit_all_posts(&c, fam, &CorpusFitConfig::default());
            assert_eq!(fit.posts.len(), 6);
            assert_eq!(fit.skipped, vec!["silent".to_string()]);
            for p in &fit.posts {
                assert!(p.report.epsilon.value.is_finite());
                assert_eq!(p.report.epsilon.bins, 1);
                assert!(p.report.diagnostics.flags.contains(&FitFlag::Degenerate));
            }
        }
    }

    #[test]
    fn small_posts_are_flagged_not_rejected() {
        let s = IntervalSeries::new(vec![3.0, 8.0, 20.0], Origin::Raw).unwrap();
        let ln = fit_series(&s, Family::Ln, &EmConfig::default()).unwrap();
        assert!(ln.diagnostics.flags.contains(&FitFlag::LowN));
        let dln = fit_series(&s, Family::Dln, &EmConfig::default()).unwrap();
        assert!(dln.diagnostics.flags.contains(&FitFlag::DlnFallback));
        let ModelParams::DoubleLogNormal(p) = dln.params else { panic!() };
        assert_eq!(p.c, 1.0);
    }

    #[test]
    fn csv_row_has_every_column() {
        let s = IntervalSeries::new(vec![3.0, 8.0, 20.0, 50.0, 7.0], Origin::Raw).unwrap();
        let r = fit_ln(&s).unwrap();
        let row = r.csv_row("p1");
        assert_eq!(row.split(',').count(), FIT_CSV_HEADER.split(',').count());
        assert!(row.starts_with("p1,ln,"));
    }

    proptest! {
        #[test]
        fn derived_stats_are_exact_exponentials(mu in -20.0f64..20.0, sigma in 1e-3f64..10.0) {
            let d = derived_stats(&LogNormalParams::new(mu, sigma).unwrap());
            prop_assert_eq!(d.median, mu.exp());
            prop_assert_eq!(d.sigma_g, sigma.exp());
        }
    }
}
