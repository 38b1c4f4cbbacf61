//! Seeded synthetic corpora with a recorded ground truth.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cycles::weekday;
use crate::distributions::{
    DistError, Distribution, DoubleLogNormalParams, LogNormalParams, ModelParams, TruncatedLogNormalParams,
};
use crate::event_store::{Corpus, Event, StoreError, DAY, DEFAULT_ANONYMOUS};
use crate::seed;

/// Monday 2005-08-29 00:00, in minutes since 1970-01-01.
pub const DEFAULT_START: i64 = 13_024 * DAY;

/// Second-wave component medians closer than this to the post are moved a day later.
pub const MIN_SECOND_WAVE_DELAY: i64 = 4 * 60;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid generator spec: {0}")]
    Invalid(String),
    #[error(transparent)]
    Distribution(#[from] DistError),
    #[error("infeasible spec: author `{author}` has {count} comments but only {span} minutes are available at an inter-comment floor of {floor}")]
    Infeasible {
        author: String,
        count: usize,
        span: i64,
        floor: i64,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("bad spec file: {0}")]
    Json(#[from] serde_json::Error),
}

fn invalid(msg: impl Into<String>) -> GenError {
    GenError::Invalid(msg.into())
}

/// When posts are published.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PostSchedule {
    Uniform,
    /// Rate `1 + amplitude cos(2 pi (h - peak_hour) / 24)`, scaled by
    /// `weekend_factor` on Saturday and Sunday.
    Circadian {
        amplitude: f64,
        peak_hour: f64,
        weekend_factor: f64,
    },
    /// Uniform within the daily window `[start_hour, end_hour)`, which may wrap past midnight.
    Window { start_hour: f64, end_hour: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CommentCount {
    Fixed { n: u64 },
    TruncatedLn { mu: f64, sigma: f64, x_min: u64 },
}

/// Couples the second DLN component to the next daily activity peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondWave {
    pub peak_hour: f64,
    /// Hours after publication over which the post's initial exposure is averaged.
    pub lookahead_hours: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PciSpec {
    /// A log-normal or double log-normal.
    pub model: ModelParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub second_wave: Option<SecondWave>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserPool {
    pub size: usize,
    /// Per-user activity weights are `LN(0, weight_sigma)`.
    pub weight_sigma: f64,
    pub anonymous_fraction: f64,
    /// The first this many users comment only Monday to Friday, 9:00 to 17:00.
    #[serde(default)]
    pub office_hours_users: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub n_posts: usize,
    /// First minute of the publishing window.
    #[serde(default = "default_start")]
    pub start: i64,
    /// Length of the publishing window.
    pub days: u32,
    pub post_schedule: PostSchedule,
    pub comments_per_post: CommentCount,
    pub pci_model: PciSpec,
    pub user_pool: UserPool,
    #[serde(default = "default_floor")]
    pub ici_floor: i64,
    #[serde(default = "default_anon")]
    pub anonymous_token: String,
    pub seed: u64,
}

fn default_start() -> i64 {
    DEFAULT_START
}

fn default_floor() -> i64 {
    2
}

fn default_anon() -> String {
    DEFAULT_ANONYMOUS.to_string()
}

impl GeneratorSpec {
    /// The shipped reference corpus: four weeks of circadian posting,
    /// truncated-LN thread sizes and two-wave comment timing.
    pub fn reference() -> Self {
        Self {
            n_posts: 120,
            start: DEFAULT_START,
            days: 28,
            post_schedule: PostSchedule::Circadian {
                amplitude: 0.8,
                peak_hour: 13.0,
                weekend_factor: 0.5,
            },
            comments_per_post: CommentCount::TruncatedLn {
                mu: 4.0,
                sigma: 0.8,
                x_min: 1,
            },
            pci_model: PciSpec {
                model: ModelParams::DoubleLogNormal(DoubleLogNormalParams {
                    mu1: 4.5,
                    sigma1: 1.0,
                    c: 0.6,
                    mu2: 7.0,
                    sigma2: 0.45,
                }),
                second_wave: Some(SecondWave {
                    peak_hour: 13.0,
                    lookahead_hours: 6.0,
                }),
            },
            user_pool: UserPool {
                size: 1500,
                weight_sigma: 1.5,
                anonymous_fraction: 0.18,
                office_hours_users: 3,
            },
            ici_floor: 2,
            anonymous_token: DEFAULT_ANONYMOUS.to_string(),
            seed: seed::DEFAULT_SEED,
        }
    }

    pub fn validate(&self) -> Result<(), GenError> {
        if self.n_posts == 0 {
            return Err(invalid("n_posts must be at least 1"));
        }
        if self.days == 0 {
            return Err(invalid("days must be at least 1"));
        }
        match self.post_schedule {
            PostSchedule::Uniform => {}
            PostSchedule::Circadian {
                amplitude,
                peak_hour,
                weekend_factor,
            } => {
                if !(0.0..=1.0).contains(&amplitude) {
                    return Err(invalid("circadian amplitude must lie in [0, 1]"));
                }
                if !(0.0..24.0).contains(&peak_hour) {
                    return Err(invalid("peak_hour must lie in [0, 24)"));
                }
                if !(weekend_factor > 0.0 && weekend_factor.is_finite()) {
                    return Err(invalid("weekend_factor must be positive"));
                }
            }
            PostSchedule::Window { start_hour, end_hour } => {
                if !((0.0..24.0).contains(&start_hour) && (0.0..=24.0).contains(&end_hour)) || start_hour == end_hour {
                    return Err(invalid("window hours must lie in [0, 24] and differ"));
                }
            }
        }
        if let CommentCount::TruncatedLn { mu, sigma, x_min } = self.comments_per_post {
            TruncatedLogNormalParams::new(mu, sigma, x_min)?;
        }
        match self.pci_model.model {
            ModelParams::LogNormal(p) => {
                LogNormalParams::new(p.mu, p.sigma)?;
                if self.pci_model.second_wave.is_some() {
                    return Err(invalid("second_wave needs a double log-normal pci model"));
                }
            }
            ModelParams::DoubleLogNormal(p) => {
                DoubleLogNormalParams::new(p.mu1, p.sigma1, p.c, p.mu2, p.sigma2)?;
            }
            _ => return Err(invalid("pci model must be ln or dln")),
        }
        if let Some(w) = self.pci_model.second_wave {
            if !(0.0..24.0).contains(&w.peak_hour) {
                return Err(invalid("second_wave peak_hour must lie in [0, 24)"));
            }
            if !(w.lookahead_hours > 0.0 && w.lookahead_hours.is_finite()) {
                return Err(invalid("second_wave lookahead_hours must be positive"));
            }
        }
        let u = &self.user_pool;
        if !(0.0..=1.0).contains(&u.anonymous_fraction) {
            return Err(invalid("anonymous_fraction must lie in [0, 1]"));
        }
        if !(u.weight_sigma >= 0.0 && u.weight_sigma.is_finite()) {
            return Err(invalid("weight_sigma must be nonnegative"));
        }
        if u.anonymous_fraction < 1.0 && u.office_hours_users >= u.size {
            return Err(invalid("the user pool needs at least one user outside office hours"));
        }
        if self.ici_floor < 0 {
            return Err(invalid("ici_floor must be nonnegative"));
        }
        if self.anonymous_token.is_empty() {
            return Err(invalid("anonymous_token must be nonempty"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, GenError> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostTruth {
    pub id: String,
    pub ts: i64,
    pub n_comments: u64,
    /// Comment-timing model actually used for this post.
    pub pci: ModelParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserTruth {
    pub id: String,
    pub weight: f64,
    pub office_hours: bool,
    pub comments: u64,
}

/// Everything drawn while generating a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: GeneratorSpec,
    pub posts: Vec<PostTruth>,
    pub users: Vec<UserTruth>,
    pub n_comments: u64,
    pub n_anonymous: u64,
    /// Distinct identified commentators, plus one if any comment is anonymous.
    pub n_commentators: u64,
    /// Comments moved later to honour the inter-comment floor.
    pub floor_adjustments: u64,
}

impl GroundTruth {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ground truth serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, GenError> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedCorpus {
    pub corpus: Corpus,
    pub truth: GroundTruth,
}

/// `out.jsonl` -> `out.truth.json`.
pub fn truth_path(events_path: &Path) -> PathBuf {
    events_path.with_extension("truth.json")
}

impl GeneratedCorpus {
    /// Write the event log and its ground-truth sidecar.
    pub fn write(&self, events_path: &Path) -> Result<(), GenError> {
        let io = |p: &Path| {
            let path = p.display().to_string();
            move |source| GenError::Io { path, source }
        };
        std::fs::write(events_path, self.corpus.to_jsonl()).map_err(io(events_path))?;
        let tp = truth_path(events_path);
        std::fs::write(&tp, self.truth.to_json()).map_err(io(&tp))?;
        Ok(())
    }
}

/// Mean of `(1 + cos(2 pi (h - peak) / 24)) / 2` over `[h0, h0 + len]` hours.
pub fn mean_daily_rate(h0: f64, len: f64, peak: f64) -> f64 {
    let w = 2.0 * PI / 24.0;
    let integral = ((w * (h0 + len - peak)).sin() - (w * (h0 - peak)).sin()) / w;
    0.5 + 0.5 * integral / len
}

fn minute_of_day(ts: i64) -> i64 {
    ts.rem_euclid(DAY)
}

/// Minutes from `ts` to the next occurrence of `peak_hour`, at least
/// [`MIN_SECOND_WAVE_DELAY`].
pub fn minutes_to_next_peak(ts: i64, peak_hour: f64) -> i64 {
    let peak = (peak_hour * 60.0).round() as i64;
    let mut d = (peak - minute_of_day(ts)).rem_euclid(DAY);
    if d < MIN_SECOND_WAVE_DELAY {
        d += DAY;
    }
    d
}

/// The PCI model of a post published at `ts`.
///
/// With a second wave, `mu2` is moved so the second component's median
/// falls on the next peak, and its weight becomes `(1 - c)(1 - A)` where
/// `A` is the mean daily rate over the lookahead window: posts that start
/// in a busy period get less of a second wave.
pub fn post_pci_model(spec: &PciSpec, ts: i64) -> Result<ModelParams, GenError> {
    match (spec.model, spec.second_wave) {
        (m, None) => Ok(m),
        (ModelParams::DoubleLogNormal(p), Some(w)) => {
            let d = minutes_to_next_peak(ts, w.peak_hour);
            let h0 = minute_of_day(ts) as f64 / 60.0;
            let a = mean_daily_rate(h0, w.lookahead_hours, w.peak_hour);
            let second = (1.0 - p.c) * (1.0 - a);
            Ok(ModelParams::DoubleLogNormal(DoubleLogNormalParams::new(
                p.mu1,
                p.sigma1,
                1.0 - second,
                (d as f64).ln(),
                p.sigma2,
            )?))
        }
        _ => Err(invalid("second_wave needs a double log-normal pci model")),
    }
}

/// Round a PCI draw to whole minutes, at least one.
pub fn quantize_pci(t: f64) -> i64 {
    let r = t.round();
    if r < 1.0 || r.is_nan() {
        1
    } else if r > i64::MAX as f64 / 4.0 {
        i64::MAX / 4
    } else {
        r as i64
    }
}

fn thread_from_rng<D: Distribution + ?Sized>(post_time: i64, n: u64, model: &D, rng: &mut dyn RngCore) -> Vec<i64> {
    let mut ts: Vec<i64> = (0..n).map(|_| post_time + quantize_pci(model.draw(rng))).collect();
    ts.sort_unstable();
    ts
}

/// Sorted comment minutes for one post, deterministic in `seed`.
pub fn generate_post_thread<D: Distribution + ?Sized>(post_time: i64, n_comments: u64, model: &D, seed: u64) -> Vec<i64> {
    let mut rng = seed::rng(seed, "thread", 0);
    thread_from_rng(post_time, n_comments, model, &mut rng)
}

fn post_times(spec: &GeneratorSpec, rng: &mut impl Rng) -> Vec<i64> {
    let span = spec.days as f64 * DAY as f64;
    let mut out = Vec::with_capacity(spec.n_posts);
    match spec.post_schedule {
        PostSchedule::Uniform => {
            for _ in 0..spec.n_posts {
                out.push(spec.start + (rng.random::<f64>() * span) as i64);
            }
        }
        PostSchedule::Circadian {
            amplitude,
            peak_hour,
            weekend_factor,
        } => {
            let max = (1.0 + amplitude) * weekend_factor.max(1.0);
            while out.len() < spec.n_posts {
                let t = rng.random::<f64>() * span;
                let ts = spec.start + t as i64;
                let h = (t + spec.start as f64).rem_euclid(DAY as f64) / 60.0;
                let mut rate = 1.0 + amplitude * (2.0 * PI * (h - peak_hour) / 24.0).cos();
                if weekday(ts) >= 5 {
                    rate *= weekend_factor;
                }
                if rng.random::<f64>() * max < rate {
                    out.push(ts);
                }
            }
        }
        PostSchedule::Window { start_hour, end_hour } => {
            let len = (end_hour - start_hour).rem_euclid(24.0) * 60.0;
            for _ in 0..spec.n_posts {
                let day = rng.random_range(0..spec.days as i64);
                let offset = start_hour * 60.0 + rng.random::<f64>() * len;
                out.push(spec.start + day * DAY + offset as i64);
            }
        }
    }
    out.sort_unstable();
    out
}

fn in_office_hours(ts: i64) -> bool {
    let m = minute_of_day(ts);
    weekday(ts) < 5 && (9 * 60..17 * 60).contains(&m)
}

/// Cumulative weights for sampling by `partition_point`.
fn cumulative(weights: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

fn pick(cum: &[f64], rng: &mut impl Rng) -> usize {
    let total = *cum.last().expect("nonempty pool");
    let u = rng.random::<f64>() * total;
    cum.partition_point(|&c| c <= u).min(cum.len() - 1)
}

fn user_id(i: usize) -> String {
    format!("u{i:04}")
}

/// Generate a corpus and its ground truth. Posts are generated in parallel
/// from per-post seed streams, so the output does not depend on the thread count.
pub fn generate_corpus(spec: &GeneratorSpec) -> Result<GeneratedCorpus, GenError> {
    spec.validate()?;
    let mut rng = seed::rng(spec.seed, "posts", 0);
    let times = post_times(spec, &mut rng);

    let mut urng = seed::rng(spec.seed, "users", 0);
    let pool = &spec.user_pool;
    let weights: Vec<f64> = (0..pool.size)
        .map(|_| {
            let z: f64 = urng.sample(StandardNormal);
            (pool.weight_sigma * z).exp()
        })
        .collect();
    let k = pool.office_hours_users;
    let cum_all = cumulative(&weights);
    let cum_rest = cumulative(&weights[k.min(weights.len())..]);

    struct Thread {
        truth: PostTruth,
        comments: Vec<(i64, Option<usize>)>,
    }
    let count_model = match spec.comments_per_post {
        CommentCount::TruncatedLn { mu, sigma, x_min } => Some(TruncatedLogNormalParams::new(mu, sigma, x_min)?),
        CommentCount::Fixed { .. } => None,
    };
    let threads: Vec<Thread> = times
        .par_iter()
        .enumerate()
        .map(|(i, &ts)| -> Result<Thread, GenError> {
            let mut r = seed::rng(spec.seed, "thread", i as u64);
            let n = match (spec.comments_per_post, &count_model) {
                (CommentCount::Fixed { n }, _) => n,
                (_, Some(m)) => m.draw(&mut r) as u64,
                _ => unreachable!(),
            };
            let pci = post_pci_model(&spec.pci_model, ts)?;
            let stamps = thread_from_rng(ts, n, &pci, &mut r);
            let comments = stamps
                .into_iter()
                .map(|t| {
                    let anon = r.random::<f64>() < pool.anonymous_fraction;
                    let user = if anon {
                        None
                    } else if in_office_hours(t) {
                        Some(pick(&cum_all, &mut r))
                    } else {
                        Some(k + pick(&cum_rest, &mut r))
                    };
                    (t, user)
                })
                .collect();
            Ok(Thread {
                truth: PostTruth {
                    id: format!("p{i:06}"),
                    ts,
                    n_comments: n,
                    pci,
                },
                comments,
            })
        })
        .collect::<Result<_, _>>()?;

    // (timestamp, post index, comment index) per user
    let mut by_user: Vec<Vec<(i64, usize, usize)>> = vec![Vec::new(); pool.size];
    let (mut lo, mut hi) = (i64::MAX, i64::MIN);
    for (pi, th) in threads.iter().enumerate() {
        for (ci, &(t, u)) in th.comments.iter().enumerate() {
            lo = lo.min(t);
            hi = hi.max(t);
            if let Some(u) = u {
                by_user[u].push((t, pi, ci));
            }
        }
    }
    let span = if lo <= hi { hi - lo } else { 0 };
    let mut stamps: Vec<Vec<i64>> = threads.iter().map(|th| th.comments.iter().map(|c| c.0).collect()).collect();
    let mut adjustments = 0;
    for (u, list) in by_user.iter_mut().enumerate() {
        if list.len() > 1 && (list.len() as i64 - 1) * spec.ici_floor > span {
            return Err(GenError::Infeasible {
                author: user_id(u),
                count: list.len(),
                span,
                floor: spec.ici_floor,
            });
        }
        list.sort_unstable();
        let mut prev: Option<i64> = None;
        for &(t, pi, ci) in list.iter() {
            let t2 = match prev {
                Some(p) if t < p + spec.ici_floor => {
                    adjustments += 1;
                    p + spec.ici_floor
                }
                _ => t,
            };
            stamps[pi][ci] = t2;
            prev = Some(t2);
        }
    }

    let mut events = Vec::with_capacity(threads.len() + threads.iter().map(|t| t.comments.len()).sum::<usize>());
    let mut user_counts = vec![0u64; pool.size];
    let mut n_anonymous = 0;
    for (pi, th) in threads.iter().enumerate() {
        events.push(Event::post(&th.truth.id, "editor", th.truth.ts));
        for (ci, &(_, u)) in th.comments.iter().enumerate() {
            let author = match u {
                Some(u) => {
                    user_counts[u] += 1;
                    user_id(u)
                }
                None => {
                    n_anonymous += 1;
                    spec.anonymous_token.clone()
                }
            };
            events.push(Event::comment(format!("{}-c{ci:04}", th.truth.id), &th.truth.id, author, stamps[pi][ci]));
        }
    }
    let corpus = Corpus::from_events(events)?.with_epoch_note(format!(
        "synthetic; minutes since 1970-01-01 00:00 local time; seed {}",
        spec.seed
    ));
    let n_comments = corpus.comments().len() as u64;
    let identified = user_counts.iter().filter(|&&c| c > 0).count() as u64;
    let truth = GroundTruth {
        spec: spec.clone(),
        posts: threads.into_iter().map(|t| t.truth).collect(),
        users: weights
            .iter()
            .enumerate()
            .map(|(i, &w)| UserTruth {
                id: user_id(i),
                weight: w,
                office_hours: i < k,
                comments: user_counts[i],
            })
            .collect(),
        n_comments,
        n_anonymous,
        n_commentators: identified + u64::from(n_anonymous > 0),
        floor_adjustments: adjustments,
    };
    Ok(GeneratedCorpus { corpus, truth })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_store::summarize;
    use crate::intervals::{ici_population, IntervalSeries, Origin, ZeroPolicy};

    fn small(seed: u64) -> GeneratorSpec {
        GeneratorSpec {
            n_posts: 10,
            start: DEFAULT_START,
            days: 7,
            post_schedule: PostSchedule::Uniform,
            comments_per_post: CommentCount::Fixed { n: 100 },
            pci_model: PciSpec {
                model: ModelParams::LogNormal(LogNormalParams { mu: 5.0, sigma: 1.5 }),
                second_wave: None,
            },
            user_pool: UserPool {
                size: 50,
                weight_sigma: 1.0,
                anonymous_fraction: 0.2,
                office_hours_users: 0,
            },
            ici_floor: 2,
            anonymous_token: DEFAULT_ANONYMOUS.into(),
            seed,
        }
    }

    #[test]
    fn counts_and_pooled_recovery() {
        let g = generate_corpus(&small(1)).unwrap();
        assert_eq!(g.corpus.comments().len(), 1000);
        assert_eq!(g.truth.n_comments, 1000);
        let s = summarize(&g.corpus, DEFAULT_ANONYMOUS).unwrap();
        assert_eq!(s.n_posts, 10);
        assert_eq!(s.n_commentators as u64, g.truth.n_commentators);
        assert_eq!(s.n_anonymous_comments as u64, g.truth.n_anonymous);
        let pcis: Vec<f64> = g
            .corpus
            .posts()
            .iter()
            .flat_map(|p| {
                g.corpus
                    .comments_of_post(&p.id)
                    .unwrap()
                    .map(|c| (c.ts - p.ts) as f64)
                    .collect::<Vec<_>>()
            })
            .collect();
        let fit = crate::fitting::mle_ln(&pcis).unwrap();
        assert!((fit.mu - 5.0).abs() < 0.1 && (fit.sigma - 1.5).abs() < 0.1, "{fit:?}");
    }

    #[test]
    fn floor_is_enforced() {
        let mut spec = small(2);
        spec.user_pool.size = 3;
        spec.user_pool.anonymous_fraction = 0.0;
        let g = generate_corpus(&spec).unwrap();
        let ici = ici_population(&g.corpus, DEFAULT_ANONYMOUS, ZeroPolicy::Clamp).unwrap();
        assert!(ici.samples().iter().all(|&t| t >= 2.0));
        assert!(g.truth.floor_adjustments > 0);
    }

    #[test]
    fn infeasible_floor_is_an_error() {
        let mut spec = small(3);
        spec.n_posts = 1;
        spec.user_pool.size = 1;
        spec.user_pool.anonymous_fraction = 0.0;
        spec.ici_floor = 1_000_000;
        assert!(matches!(generate_corpus(&spec), Err(GenError::Infeasible { .. })));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = small(1);
        s.pci_model.second_wave = Some(SecondWave {
            peak_hour: 13.0,
            lookahead_hours: 6.0,
        });
        assert!(generate_corpus(&s).is_err());
        let mut s = small(1);
        s.ici_floor = -1;
        assert!(generate_corpus(&s).is_err());
        let mut s = small(1);
        s.user_pool.office_hours_users = 50;
        assert!(generate_corpus(&s).is_err());
    }

    #[test]
    fn thread_generation() {
        let m = LogNormalParams::new(0.0, 1e-6).unwrap();
        assert_eq!(generate_post_thread(100, 1, &m, 5), vec![101]);
        let m = LogNormalParams::new(4.0, 1.0).unwrap();
        let a = generate_post_thread(0, 50, &m, 9);
        assert_eq!(a, generate_post_thread(0, 50, &m, 9));
        assert!(a.windows(2).all(|w| w[0] <= w[1]));
        assert!(a.iter().all(|&t| t >= 1));
    }

    #[test]
    fn large_thread_matches_model() {
        let m = LogNormalParams::new(5.5, 1.6).unwrap();
        let mut good = 0;
        for seed in 0..20 {
            let ts = generate_post_thread(0, 1341, &m, seed);
            let s = IntervalSeries::new(ts.iter().map(|&t| t as f64).collect(), Origin::Raw).unwrap();
            if crate::goodness::epsilon_of_model(&m, &s).value < 0.02 {
                good += 1;
            }
        }
        assert!(good >= 19, "{good}/20");
    }

    #[test]
    fn deterministic_and_truth_round_trips() {
        let spec = GeneratorSpec::reference();
        let a = generate_corpus(&spec).unwrap();
        let b = generate_corpus(&spec).unwrap();
        assert_eq!(a.corpus.to_jsonl(), b.corpus.to_jsonl());
        let text = a.truth.to_json();
        let back = GroundTruth::from_json(&text).unwrap();
        assert_eq!(back, a.truth);
        let spec_text = serde_json::to_string(&spec).unwrap();
        assert_eq!(GeneratorSpec::from_json(&spec_text).unwrap(), spec);
    }

    #[test]
    fn second_wave_lands_on_next_peak() {
        let spec = PciSpec {
            model: ModelParams::DoubleLogNormal(DoubleLogNormalParams::new(4.0, 1.0, 0.6, 7.0, 0.5).unwrap()),
            second_wave: Some(SecondWave {
                peak_hour: 13.0,
                lookahead_hours: 6.0,
            }),
        };
        let post = DEFAULT_START + 22 * 60; // 22:00
        let ModelParams::DoubleLogNormal(p) = post_pci_model(&spec, post).unwrap() else { panic!() };
        assert!((p.mu2 - (15.0f64 * 60.0).ln()).abs() < 1e-12);
        // 10:00 is 3 h before the peak, so the wave goes to the next day
        assert_eq!(minutes_to_next_peak(DEFAULT_START + 10 * 60, 13.0), 27 * 60);
        // more second wave for posts starting in the trough than at the peak
        let trough = post_pci_model(&spec, DEFAULT_START + 60).unwrap();
        let peak = post_pci_model(&spec, DEFAULT_START + 11 * 60).unwrap();
        let c = |m: ModelParams| match m {
            ModelParams::DoubleLogNormal(p) => p.c,
            _ => unreachable!(),
        };
        assert!(c(trough) < c(peak));
    }

    #[test]
    fn mean_rate_matches_quadrature() {
        for &(h0, len, peak) in &[(0.0, 6.0, 13.0), (18.5, 9.0, 13.0), (3.0, 30.0, 2.0)] {
            let n = 100_000;
            let q: f64 = (0..n)
                .map(|i| {
                    let h = h0 + (i as f64 + 0.5) * len / n as f64;
                    0.5 * (1.0 + (2.0 * PI * (h - peak) / 24.0).cos())
                })
                .sum::<f64>()
                / n as f64;
            assert!((mean_daily_rate(h0, len, peak) - q).abs() < 1e-9);
        }
    }

    #[test]
    fn window_schedule_wraps_midnight() {
        let mut spec = small(4);
        spec.n_posts = 300;
        spec.comments_per_post = CommentCount::Fixed { n: 0 };
        spec.post_schedule = PostSchedule::Window {
            start_hour: 22.0,
            end_hour: 2.0,
        };
        let g = generate_corpus(&spec).unwrap();
        for p in g.corpus.posts() {
            let h = minute_of_day(p.ts) / 60;
            assert!(h >= 22 || h < 2, "hour {h}");
        }
    }

    #[test]
    fn office_hours_users_stay_in_office_hours() {
        let mut spec = small(6);
        spec.n_posts = 200;
        spec.days = 28;
        spec.user_pool.office_hours_users = 1;
        spec.user_pool.weight_sigma = 0.0;
        spec.user_pool.size = 5;
        spec.ici_floor = 0;
        let g = generate_corpus(&spec).unwrap();
        let u0: Vec<i64> = g.corpus.comments_by_author("u0000").unwrap().map(|c| c.ts).collect();
        assert!(!u0.is_empty());
        assert!(u0.iter().all(|&t| in_office_hours(t)));
    }
}
