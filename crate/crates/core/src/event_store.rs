//! Normalized post/comment event logs: parsing, validation, indexing and
//! corpus-level counts.
//!
//! One record per event with five fields. JSONL:
//!
//! ```text
//! {"kind":"post","id":"p1","parent":null,"author":"alice","ts":0}
//! {"kind":"comment","id":"c1","parent":"p1","author":"bob","ts":5}
//! ```
//!
//! CSV uses the same columns in the same order with a header row. `ts` is an
//! integer number of minutes since 1970-01-01T00:00 in the source's local
//! time, or an ISO-8601 date-time that is truncated to the minute.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Read};

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Author token that marks an anonymous contribution unless overridden.
pub const DEFAULT_ANONYMOUS: &str = "anonymous";

/// Minutes per day.
pub const DAY: i64 = 1440;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("{} comment(s) reference unknown posts: {}", .0.len(), .0.join(", "))]
    Orphans(Vec<String>),
    #[error("comment {comment} (t={comment_ts}) is earlier than its post {post} (t={post_ts})")]
    CommentBeforePost {
        comment: String,
        post: String,
        comment_ts: i64,
        post_ts: i64,
    },
    #[error("a {kind} must {rule} (event {id})")]
    BadParent {
        id: String,
        kind: &'static str,
        rule: &'static str,
    },
    #[error("corpus is empty")]
    Empty,
    #[error("unknown post `{0}`")]
    UnknownPost(String),
    #[error("unknown author `{0}`")]
    UnknownAuthor(String),
    #[error("`{0}` is the anonymous token and does not identify a user")]
    AnonymousAuthor(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Post,
    Comment,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    pub id: String,
    /// Parent post id; present iff `kind` is `Comment`.
    pub parent: Option<String>,
    pub author: String,
    /// Minutes since the epoch.
    pub ts: i64,
}

impl Event {
    pub fn post(id: impl Into<String>, author: impl Into<String>, ts: i64) -> Self {
        Self {
            kind: EventKind::Post,
            id: id.into(),
            parent: None,
            author: author.into(),
            ts,
        }
    }

    pub fn comment(
        id: impl Into<String>,
        parent: impl Into<String>,
        author: impl Into<String>,
        ts: i64,
    ) -> Self {
        Self {
            kind: EventKind::Comment,
            id: id.into(),
            parent: Some(parent.into()),
            author: author.into(),
            ts,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("events always serialize")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Jsonl,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(Format::Jsonl),
            "csv" => Ok(Format::Csv),
            other => Err(format!("unknown format `{other}` (expected jsonl or csv)")),
        }
    }
}

#[derive(Deserialize)]
struct RawRecord {
    kind: String,
    id: String,
    parent: Option<String>,
    author: String,
    ts: RawTimestamp,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawTimestamp {
    Int(i64),
    Float(f64),
    Text(String),
}

fn parse_timestamp(raw: RawTimestamp) -> Result<i64, String> {
    match raw {
        RawTimestamp::Int(m) => Ok(m),
        RawTimestamp::Float(f) if f.is_finite() => Ok(f.floor() as i64),
        RawTimestamp::Float(f) => Err(format!("timestamp {f} is not finite")),
        RawTimestamp::Text(s) => parse_timestamp_text(&s),
    }
}

fn parse_timestamp_text(s: &str) -> Result<i64, String> {
    let s = s.trim();
    if let Ok(m) = s.parse::<i64>() {
        return Ok(m);
    }
    // Offsets are ignored: the wall-clock time is taken as source-local.
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(dt.naive_local().and_utc().timestamp().div_euclid(60));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%d %H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(dt.and_utc().timestamp().div_euclid(60));
        }
    }
    Err(format!("cannot parse timestamp `{s}`"))
}

fn to_event(raw: RawRecord) -> Result<Event, String> {
    let kind = match raw.kind.to_ascii_lowercase().as_str() {
        "post" => EventKind::Post,
        "comment" => EventKind::Comment,
        other => return Err(format!("unknown kind `{other}`")),
    };
    if raw.id.is_empty() {
        return Err("empty id".into());
    }
    let parent = raw.parent.filter(|p| !p.is_empty());
    Ok(Event {
        kind,
        id: raw.id,
        parent,
        author: raw.author,
        ts: parse_timestamp(raw.ts)?,
    })
}

/// Read raw events (no validation beyond per-record syntax).
pub fn read_events<R: Read>(source: R, format: Format) -> Result<Vec<Event>, StoreError> {
    let mut out = Vec::new();
    match format {
        Format::Jsonl => {
            let reader = std::io::BufReader::new(source);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let raw: RawRecord = serde_json::from_str(&line).map_err(|e| StoreError::Malformed {
                    line: i + 1,
                    message: e.to_string(),
                })?;
                out.push(to_event(raw).map_err(|message| StoreError::Malformed { line: i + 1, message })?);
            }
        }
        Format::Csv => {
            let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
            let headers = reader
                .headers()
                .map_err(|e| StoreError::Malformed {
                    line: 1,
                    message: e.to_string(),
                })?
                .clone();
            let expected = ["kind", "id", "parent", "author", "ts"];
            if headers.iter().collect::<Vec<_>>() != expected {
                return Err(StoreError::Malformed {
                    line: 1,
                    message: format!("header must be `{}`", expected.join(",")),
                });
            }
            for (i, record) in reader.records().enumerate() {
                let line = i + 2;
                let record = record.map_err(|e| StoreError::Malformed {
                    line,
                    message: e.to_string(),
                })?;
                let field = |k: usize| record.get(k).unwrap_or("").to_string();
                let raw = RawRecord {
                    kind: field(0),
                    id: field(1),
                    parent: Some(field(2)),
                    author: field(3),
                    ts: RawTimestamp::Text(field(4)),
                };
                out.push(to_event(raw).map_err(|message| StoreError::Malformed { line, message })?);
            }
        }
    }
    Ok(out)
}

/// Parse, deduplicate and index an event log.
pub fn parse_events<R: Read>(source: R, format: Format) -> Result<Corpus, StoreError> {
    Corpus::from_events(read_events(source, format)?)
}

/// An immutable, validated collection of posts and comments.
///
/// Posts and each post's and author's comments are sorted by timestamp, ties
/// broken by id.
#[derive(Debug, Clone)]
pub struct Corpus {
    posts: Vec<Event>,
    comments: Vec<Event>,
    post_index: HashMap<String, usize>,
    by_post: Vec<Vec<usize>>,
    by_author: BTreeMap<String, Vec<usize>>,
    epoch_note: String,
}

fn by_time(a: &Event, b: &Event) -> std::cmp::Ordering {
    a.ts.cmp(&b.ts).then_with(|| a.id.cmp(&b.id))
}

impl Corpus {
    /// Build a corpus; duplicate ids after the first occurrence are dropped.
    pub fn from_events(events: Vec<Event>) -> Result<Self, StoreError> {
        let mut seen = HashSet::new();
        let mut posts = Vec::new();
        let mut comments = Vec::new();
        for e in events {
            if !seen.insert(e.id.clone()) {
                continue;
            }
            match (e.kind, e.parent.is_some()) {
                (EventKind::Post, false) => posts.push(e),
                (EventKind::Comment, true) => comments.push(e),
                (EventKind::Post, true) => {
                    return Err(StoreError::BadParent {
                        id: e.id,
                        kind: "post",
                        rule: "not have a parent",
                    })
                }
                (EventKind::Comment, false) => {
                    return Err(StoreError::BadParent {
                        id: e.id,
                        kind: "comment",
                        rule: "name its parent post",
                    })
                }
            }
        }
        posts.sort_by(by_time);
        comments.sort_by(by_time);

        let post_index: HashMap<String, usize> =
            posts.iter().enumerate().map(|(i, p)| (p.id.clone(), i)).collect();
        let mut orphans = Vec::new();
        let mut by_post = vec![Vec::new(); posts.len()];
        let mut by_author: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (ci, c) in comments.iter().enumerate() {
            let parent = c.parent.as_deref().expect("comments have parents");
            match post_index.get(parent) {
                None => orphans.push(c.id.clone()),
                Some(&pi) => {
                    let post = &posts[pi];
                    if c.ts < post.ts {
                        return Err(StoreError::CommentBeforePost {
                            comment: c.id.clone(),
                            post: post.id.clone(),
                            comment_ts: c.ts,
                            post_ts: post.ts,
                        });
                    }
                    by_post[pi].push(ci);
                    by_author.entry(c.author.clone()).or_default().push(ci);
                }
            }
        }
        if !orphans.is_empty() {
            orphans.sort();
            return Err(StoreError::Orphans(orphans));
        }
        Ok(Self {
            posts,
            comments,
            post_index,
            by_post,
            by_author,
            epoch_note: "minutes since 1970-01-01T00:00 source-local time (no DST adjustment)".into(),
        })
    }

    pub fn with_epoch_note(mut self, note: impl Into<String>) -> Self {
        self.epoch_note = note.into();
        self
    }

    pub fn epoch_note(&self) -> &str {
        &self.epoch_note
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty() && self.comments.is_empty()
    }

    /// Posts in timestamp order.
    pub fn posts(&self) -> &[Event] {
        &self.posts
    }

    /// All comments in timestamp order.
    pub fn comments(&self) -> &[Event] {
        &self.comments
    }

    pub fn post(&self, id: &str) -> Option<&Event> {
        self.post_index.get(id).map(|&i| &self.posts[i])
    }

    /// Comments of a post in timestamp order.
    pub fn comments_of_post(&self, post_id: &str) -> Result<impl Iterator<Item = &Event>, StoreError> {
        let &i = self
            .post_index
            .get(post_id)
            .ok_or_else(|| StoreError::UnknownPost(post_id.to_string()))?;
        Ok(self.by_post[i].iter().map(move |&ci| &self.comments[ci]))
    }

    pub fn comment_count(&self, post_id: &str) -> Result<usize, StoreError> {
        let &i = self
            .post_index
            .get(post_id)
            .ok_or_else(|| StoreError::UnknownPost(post_id.to_string()))?;
        Ok(self.by_post[i].len())
    }

    /// Comments of an author in timestamp order.
    pub fn comments_by_author(&self, author: &str) -> Result<impl Iterator<Item = &Event>, StoreError> {
        let idx = self
            .by_author
            .get(author)
            .ok_or_else(|| StoreError::UnknownAuthor(author.to_string()))?;
        Ok(idx.iter().map(move |&ci| &self.comments[ci]))
    }

    /// Distinct comment authors in lexicographic order (including any anonymous token).
    pub fn authors(&self) -> impl Iterator<Item = &str> {
        self.by_author.keys().map(String::as_str)
    }

    /// `(min, max)` timestamp over all events.
    pub fn period(&self) -> Option<(i64, i64)> {
        let first = self.posts.first().map(|e| e.ts).into_iter().chain(self.comments.first().map(|e| e.ts));
        let last = self.posts.last().map(|e| e.ts).into_iter().chain(self.comments.last().map(|e| e.ts));
        Some((first.min()?, last.max()?))
    }

    /// All events in timestamp order, posts before comments at equal times.
    pub fn events(&self) -> Vec<&Event> {
        let mut all: Vec<&Event> = self.posts.iter().chain(self.comments.iter()).collect();
        all.sort_by(|a, b| a.ts.cmp(&b.ts).then_with(|| (a.kind == EventKind::Comment).cmp(&(b.kind == EventKind::Comment))).then_with(|| a.id.cmp(&b.id)));
        all
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in self.events() {
            out.push_str(&e.to_json_line());
            out.push('\n');
        }
        out
    }
}

/// How commentators are counted in [`CorpusSummary`].
pub const COMMENTATOR_CONVENTION: &str =
    "distinct non-anonymous comment authors plus one pseudo-author if any comment is anonymous";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusSummary {
    pub n_posts: usize,
    pub n_comments: usize,
    pub n_commentators: usize,
    pub n_anonymous_comments: usize,
    pub anonymous_fraction: f64,
    pub period: (i64, i64),
    pub commentator_convention: &'static str,
}

pub fn summarize(corpus: &Corpus, anonymous: &str) -> Result<CorpusSummary, StoreError> {
    let period = corpus.period().ok_or(StoreError::Empty)?;
    let n_comments = corpus.comments.len();
    let n_anonymous = corpus.by_author.get(anonymous).map_or(0, Vec::len);
    let named = corpus.by_author.keys().filter(|a| a.as_str() != anonymous).count();
    Ok(CorpusSummary {
        n_posts: corpus.posts.len(),
        n_comments,
        n_commentators: named + usize::from(n_anonymous > 0),
        n_anonymous_comments: n_anonymous,
        anonymous_fraction: if n_comments == 0 {
            0.0
        } else {
            n_anonymous as f64 / n_comments as f64
        },
        period,
        commentator_convention: COMMENTATOR_CONVENTION,
    })
}

/// Comments per identified user; anonymous comments are excluded.
pub fn comments_per_user(corpus: &Corpus, anonymous: &str) -> Result<BTreeMap<String, u64>, StoreError> {
    if corpus.is_empty() {
        return Err(StoreError::Empty);
    }
    Ok(corpus
        .by_author
        .iter()
        .filter(|(a, _)| a.as_str() != anonymous)
        .map(|(a, v)| (a.clone(), v.len() as u64))
        .collect())
}
