//! Post-comment intervals (PCI), inter-comment intervals (ICI) and their
//! empirical distributions.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event_store::{Corpus, StoreError};

#[derive(Debug, Error)]
pub enum IntervalError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("post `{0}` has no comments")]
    NoActivity(String),
    #[error("author `{author}` has {count} comment(s); at least {needed} needed")]
    TooFewComments {
        author: String,
        count: usize,
        needed: usize,
    },
    #[error("no author has at least two comments")]
    NoEligibleAuthors,
    #[error("interval series is empty")]
    EmptySeries,
    #[error("interval {0} is not positive and finite")]
    NonPositive(f64),
    #[error("bin width {0} must be positive")]
    BadBinWidth(f64),
}

/// What to do with zero-minute intervals produced by minute truncation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZeroPolicy {
    /// Replace 0 by half a minute, the midpoint of the censored interval.
    #[default]
    Clamp,
    Drop,
}

impl std::str::FromStr for ZeroPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "clamp" => Ok(ZeroPolicy::Clamp),
            "drop" => Ok(ZeroPolicy::Drop),
            other => Err(format!("unknown zero policy `{other}` (expected clamp or drop)")),
        }
    }
}

impl fmt::Display for ZeroPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ZeroPolicy::Clamp => "clamp",
            ZeroPolicy::Drop => "drop",
        })
    }
}

pub const ZERO_CLAMP: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Origin {
    PciOfPost(String),
    PciOfUser(String),
    IciOfUser(String),
    IciPopulation,
    /// Samples that did not come from a corpus (tests, synthetic draws).
    Raw,
}

/// A multiset of positive intervals in minutes together with its occupied
/// one-minute bins.
///
/// Bin `k` covers `(k - 1, k]`, so an integer sample `m` lands in bin `m`
/// and a clamped zero (0.5) lands in bin 1.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSeries {
    samples: Vec<f64>,
    bins: Vec<u64>,
    origin: Origin,
}

pub fn minute_bin(t: f64) -> u64 {
    t.ceil() as u64
}

impl IntervalSeries {
    pub fn new(samples: Vec<f64>, origin: Origin) -> Result<Self, IntervalError> {
        if samples.is_empty() {
            return Err(IntervalError::EmptySeries);
        }
        if let Some(&bad) = samples.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(IntervalError::NonPositive(bad));
        }
        let mut bins: Vec<u64> = samples.iter().map(|&t| minute_bin(t)).collect();
        bins.sort_unstable();
        bins.dedup();
        Ok(Self { samples, bins, origin })
    }

    /// Build from integer minute differences, applying the zero policy.
    pub fn from_minutes(
        minutes: impl IntoIterator<Item = i64>,
        policy: ZeroPolicy,
        origin: Origin,
    ) -> Result<Self, IntervalError> {
        let mut samples = Vec::new();
        for m in minutes {
            if m < 0 {
                return Err(IntervalError::NonPositive(m as f64));
            }
            match (m, policy) {
                (0, ZeroPolicy::Clamp) => samples.push(ZERO_CLAMP),
                (0, ZeroPolicy::Drop) => {}
                (m, _) => samples.push(m as f64),
            }
        }
        Self::new(samples, origin)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Occupied minute bins, ascending.
    pub fn occupied_bins(&self) -> &[u64] {
        &self.bins
    }

    /// Number of occupied bins.
    pub fn cardinality(&self) -> usize {
        self.bins.len()
    }

    pub fn origin(&self) -> &Origin {
        &self.origin
    }

    pub fn sorted_samples(&self) -> Vec<f64> {
        let mut v = self.samples.clone();
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn median(&self) -> f64 {
        let v = self.sorted_samples();
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    }

    /// Single-column CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("interval_minutes\n");
        for t in &self.samples {
            out.push_str(&format!("{t}\n"));
        }
        out
    }
}

pub fn pci_of_post(corpus: &Corpus, post_id: &str, policy: ZeroPolicy) -> Result<IntervalSeries, IntervalError> {
    let post = corpus
        .post(post_id)
        .ok_or_else(|| StoreError::UnknownPost(post_id.to_string()))?;
    let minutes: Vec<i64> = corpus.comments_of_post(post_id)?.map(|c| c.ts - post.ts).collect();
    if minutes.is_empty() {
        return Err(IntervalError::NoActivity(post_id.to_string()));
    }
    IntervalSeries::from_minutes(minutes, policy, Origin::PciOfPost(post_id.to_string()))
}

fn check_user(anonymous: &str, author: &str) -> Result<(), IntervalError> {
    if author == anonymous {
        return Err(StoreError::AnonymousAuthor(author.to_string()).into());
    }
    Ok(())
}

/// Consecutive differences of an author's comment times, across all posts.
pub fn ici_of_user(
    corpus: &Corpus,
    author: &str,
    anonymous: &str,
    policy: ZeroPolicy,
) -> Result<IntervalSeries, IntervalError> {
    check_user(anonymous, author)?;
    let ts: Vec<i64> = corpus.comments_by_author(author)?.map(|c| c.ts).collect();
    if ts.len() < 2 {
        return Err(IntervalError::TooFewComments {
            author: author.to_string(),
            count: ts.len(),
            needed: 2,
        });
    }
    IntervalSeries::from_minutes(
        ts.windows(2).map(|w| w[1] - w[0]),
        policy,
        Origin::IciOfUser(author.to_string()),
    )
}

/// PCIs of every comment the author wrote.
pub fn pci_of_user(
    corpus: &Corpus,
    author: &str,
    anonymous: &str,
    policy: ZeroPolicy,
) -> Result<IntervalSeries, IntervalError> {
    check_user(anonymous, author)?;
    let mut minutes = Vec::new();
    for c in corpus.comments_by_author(author)? {
        let parent = c.parent.as_deref().expect("comments have parents");
        let post = corpus.post(parent).expect("corpus is validated");
        minutes.push(c.ts - post.ts);
    }
    IntervalSeries::from_minutes(minutes, policy, Origin::PciOfUser(author.to_string()))
}

/// Union of the ICIs of every identified author with at least two comments.
pub fn ici_population(corpus: &Corpus, anonymous: &str, policy: ZeroPolicy) -> Result<IntervalSeries, IntervalError> {
    let mut minutes = Vec::new();
    for author in corpus.authors() {
        if author == anonymous {
            continue;
        }
        let ts: Vec<i64> = corpus.comments_by_author(author)?.map(|c| c.ts).collect();
        minutes.extend(ts.windows(2).map(|w| w[1] - w[0]));
    }
    if minutes.is_empty() {
        return Err(IntervalError::NoEligibleAuthors);
    }
    IntervalSeries::from_minutes(minutes, policy, Origin::IciPopulation)
}

/// Right-continuous empirical cdf.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    support: Vec<f64>,
    cum_prob: Vec<f64>,
    n: usize,
}

impl EmpiricalCdf {
    pub fn from_samples(samples: &[f64]) -> Result<Self, IntervalError> {
        if samples.is_empty() {
            return Err(IntervalError::EmptySeries);
        }
        let mut v = samples.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let mut support = Vec::new();
        let mut cum_prob = Vec::new();
        for (i, &x) in v.iter().enumerate() {
            if i + 1 < n && v[i + 1] == x {
                continue;
            }
            support.push(x);
            cum_prob.push((i + 1) as f64 / n as f64);
        }
        Ok(Self { support, cum_prob, n })
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn cum_prob(&self) -> &[f64] {
        &self.cum_prob
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Fraction of samples `<= x`.
    pub fn eval(&self, x: f64) -> f64 {
        let i = self.support.partition_point(|&s| s <= x);
        if i == 0 {
            0.0
        } else {
            self.cum_prob[i - 1]
        }
    }

    /// Fraction of samples `< x`.
    pub fn eval_left(&self, x: f64) -> f64 {
        let i = self.support.partition_point(|&s| s < x);
        if i == 0 {
            0.0
        } else {
            self.cum_prob[i - 1]
        }
    }

    /// Two-column CSV `x,cdf`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,cdf\n");
        for (x, p) in self.support.iter().zip(&self.cum_prob) {
            out.push_str(&format!("{x},{p}\n"));
        }
        out
    }
}

pub fn empirical_cdf(series: &IntervalSeries) -> EmpiricalCdf {
    EmpiricalCdf::from_samples(series.samples()).expect("series are nonempty")
}

/// Fixed-width histogram with bins `[origin + k w, origin + (k + 1) w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub origin: f64,
    pub bin_width: f64,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl Histogram {
    pub fn build(values: &[f64], bin_width: f64, origin: f64) -> Result<Self, IntervalError> {
        if !(bin_width > 0.0 && bin_width.is_finite()) {
            return Err(IntervalError::BadBinWidth(bin_width));
        }
        let mut counts: Vec<u64> = Vec::new();
        for &v in values {
            // a small slack absorbs representation error at exact edges
            let k = ((v - origin) / bin_width + 1e-9).floor();
            if k < 0.0 || !k.is_finite() {
                continue;
            }
            let k = k as usize;
            if k >= counts.len() {
                counts.resize(k + 1, 0);
            }
            counts[k] += 1;
        }
        let total = counts.iter().sum();
        Ok(Self {
            origin,
            bin_width,
            counts,
            total,
        })
    }

    pub fn left_edge(&self, k: usize) -> f64 {
        self.origin + k as f64 * self.bin_width
    }

    /// Count divided by `total * bin_width`, integrating to one.
    pub fn density(&self) -> Vec<f64> {
        let norm = self.total as f64 * self.bin_width;
        self.counts.iter().map(|&c| c as f64 / norm).collect()
    }

    /// `(left_edge, count)` for nonempty bins.
    pub fn nonzero(&self) -> Vec<(f64, u64)> {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(k, &c)| (self.left_edge(k), c))
            .collect()
    }

    /// Left edge of the fullest bin (first one on ties).
    pub fn mode(&self) -> Option<f64> {
        let (k, &c) = self.counts.iter().enumerate().fold((0, &0u64), |best, cur| if cur.1 > best.1 { cur } else { best });
        (c > 0).then(|| self.left_edge(k))
    }

    /// Two-column CSV `bin_left,count` (or `bin_left,density`).
    pub fn to_csv(&self, density: bool) -> String {
        let mut out = String::from(if density { "bin_left,density\n" } else { "bin_left,count\n" });
        let dens = self.density();
        for (k, &c) in self.counts.iter().enumerate() {
            if density {
                out.push_str(&format!("{},{}\n", self.left_edge(k), dens[k]));
            } else {
                out.push_str(&format!("{},{}\n", self.left_edge(k), c));
            }
        }
        out
    }
}

/// Histogram of an interval series with bins starting at zero.
pub fn bin_histogram(series: &IntervalSeries, bin_width: f64) -> Result<Histogram, IntervalError> {
    Histogram::build(series.samples(), bin_width, 0.0)
}
