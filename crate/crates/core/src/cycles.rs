//! Daily and weekly activity profiles.
//!
//! Timestamps are minutes since 1970-01-01 00:00 in the corpus's local
//! time. 1970-01-01 was a Thursday; weeks start on Monday.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::event_store::{Corpus, StoreError, DAY};

pub const WEEK: i64 = 7 * DAY;

#[derive(Debug, Error)]
pub enum CycleError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("no {0} to profile")]
    NoEvents(Kind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    HourOfDay,
    HourOfWeek,
}

impl Resolution {
    pub fn bins(self) -> usize {
        match self {
            Resolution::HourOfDay => 24,
            Resolution::HourOfWeek => 168,
        }
    }

    pub fn period(self) -> i64 {
        match self {
            Resolution::HourOfDay => DAY,
            Resolution::HourOfWeek => WEEK,
        }
    }

    /// Bin of a timestamp.
    pub fn bin(self, ts: i64) -> usize {
        let hour = (ts.rem_euclid(DAY) / 60) as usize;
        match self {
            Resolution::HourOfDay => hour,
            Resolution::HourOfWeek => weekday(ts) * 24 + hour,
        }
    }

    /// Index of the period containing `ts`.
    pub fn period_index(self, ts: i64) -> i64 {
        (ts - self.origin()).div_euclid(self.period())
    }

    /// First minute of a period boundary; Monday 1970-01-05 for weeks.
    fn origin(self) -> i64 {
        match self {
            Resolution::HourOfDay => 0,
            Resolution::HourOfWeek => 4 * DAY,
        }
    }

    fn period_start(self, index: i64) -> i64 {
        self.origin() + index * self.period()
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Resolution::HourOfDay => "hour_of_day",
            Resolution::HourOfWeek => "hour_of_week",
        })
    }
}

impl std::str::FromStr for Resolution {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "day" | "hour_of_day" => Ok(Resolution::HourOfDay),
            "week" | "hour_of_week" => Ok(Resolution::HourOfWeek),
            other => Err(format!("unknown resolution `{other}` (expected day or week)")),
        }
    }
}

/// Monday = 0, ..., Sunday = 6.
pub fn weekday(ts: i64) -> usize {
    (ts.div_euclid(DAY) + 3).rem_euclid(7) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Posts,
    Comments,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::Posts => "posts",
            Kind::Comments => "comments",
        })
    }
}

impl std::str::FromStr for Kind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "posts" => Ok(Kind::Posts),
            "comments" => Ok(Kind::Comments),
            other => Err(format!("unknown kind `{other}` (expected posts or comments)")),
        }
    }
}

pub const PROFILE_CONVENTION: &str = "mean: per-bin counts over all periods divided by the across-bin average; \
std: sample standard deviation across full periods only, divided by the same average per period";

/// Normalized activity per bin. The mean over all bins of `mean` is 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActivityProfile {
    pub resolution: Resolution,
    pub kind: Kind,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Raw counts per bin over the whole span.
    pub counts: Vec<u64>,
    /// Periods lying entirely inside the span; the std uses only these.
    pub full_periods: usize,
    /// Fewer than two full periods: `std` is zero and meaningless.
    pub flagged: bool,
}

impl ActivityProfile {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Bin with the largest mean (first on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &m) in self.mean.iter().enumerate() {
            if m > self.mean[best] {
                best = i;
            }
        }
        best
    }

    /// CSV `bin_index,mean,std,count`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_index,mean,std,count\n");
        for b in 0..self.mean.len() {
            out.push_str(&format!("{b},{},{},{}\n", self.mean[b], self.std[b], self.counts[b]));
        }
        out
    }
}

/// Profile of arbitrary timestamps; `span` is the observation window used
/// to decide which periods are full.
pub fn profile_from_timestamps(
    ts: &[i64],
    span: (i64, i64),
    resolution: Resolution,
    kind: Kind,
) -> Result<ActivityProfile, CycleError> {
    if ts.is_empty() {
        return Err(CycleError::NoEvents(kind));
    }
    let nb = resolution.bins();
    let mut counts = vec![0u64; nb];
    for &t in ts {
        counts[resolution.bin(t)] += 1;
    }
    let total: u64 = counts.iter().sum();
    let avg = total as f64 / nb as f64;
    let mean: Vec<f64> = counts.iter().map(|&c| c as f64 / avg).collect();

    let (lo, hi) = span;
    let mut first = resolution.period_index(lo);
    if resolution.period_start(first) < lo {
        first += 1;
    }
    let mut last = resolution.period_index(hi);
    if resolution.period_start(last + 1) - 1 > hi {
        last -= 1;
    }
    let full = (last - first + 1).max(0) as usize;
    let mut std = vec![0.0; nb];
    if full >= 2 {
        let mut per: Vec<Vec<u64>> = vec![vec![0; nb]; full];
        let mut in_full = 0u64;
        for &t in ts {
            let p = resolution.period_index(t);
            if p >= first && p <= last {
                per[(p - first) as usize][resolution.bin(t)] += 1;
                in_full += 1;
            }
        }
        let scale = in_full as f64 / (full * nb) as f64;
        if scale > 0.0 {
            for b in 0..nb {
                let m = per.iter().map(|r| r[b] as f64).sum::<f64>() / full as f64;
                let var = per.iter().map(|r| (r[b] as f64 - m).powi(2)).sum::<f64>() / (full - 1) as f64;
                std[b] = var.sqrt() / scale;
            }
        }
    }
    Ok(ActivityProfile {
        resolution,
        kind,
        mean,
        std,
        counts,
        full_periods: full,
        flagged: full < 2,
    })
}

pub fn activity_profile(corpus: &Corpus, kind: Kind, resolution: Resolution) -> Result<ActivityProfile, CycleError> {
    let ts: Vec<i64> = match kind {
        Kind::Posts => corpus.posts().iter().map(|e| e.ts).collect(),
        Kind::Comments => corpus.comments().iter().map(|e| e.ts).collect(),
    };
    let span = corpus.period().ok_or(CycleError::NoEvents(kind))?;
    profile_from_timestamps(&ts, span, resolution, kind)
}

/// Comment profile of one author, with full periods judged on the corpus span.
pub fn user_activity_profile(corpus: &Corpus, author: &str, resolution: Resolution) -> Result<ActivityProfile, CycleError> {
    let ts: Vec<i64> = corpus.comments_by_author(author)?.map(|e| e.ts).collect();
    let span = corpus.period().ok_or(CycleError::NoEvents(Kind::Comments))?;
    profile_from_timestamps(&ts, span, resolution, Kind::Comments)
}
