//! Plot-ready CSV artifacts for a corpus.
//!
//! Every artifact is built in memory first; nothing is written unless the
//! whole tree has been produced. Each file starts with `#` header lines
//! carrying the tool version, seed and configuration hash.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::cycles::{self, Kind, Resolution, PROFILE_CONVENTION};
use crate::event_store::{comments_per_user, summarize, Corpus, COMMENTATOR_CONVENTION};
use crate::fitting::{
    self, fit_all_posts, fit_powerlaw_mle, fit_powerlaw_regression, fit_truncated_ln, Binning, CorpusFit,
    CorpusFitConfig, EmConfig, Family, FitReport,
};
use crate::goodness::{self, error_by_publish_hour, hourly_csv, ks_test_montecarlo, KsFamily};
use crate::distributions::{Distribution, ModelParams};
use crate::intervals::{self, empirical_cdf, Histogram, IntervalSeries, ZeroPolicy};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const KS_PROCEDURE: &str = "semi-parametric bootstrap: fit, draw n from the fit, refit, p = share of replicas with D >= observed D";
pub const ICI_CONVENTION: &str = "anonymous comments are excluded from inter-comment intervals and per-user statistics";

/// Relative path to file body (without header).
pub type Artifacts = BTreeMap<String, String>;

/// Settings that influence report content.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportConfig {
    pub seed: u64,
    pub zero_policy: ZeroPolicy,
    pub anonymous_token: String,
    pub x_min: u64,
    pub replicas: usize,
    pub em_starts: usize,
    /// Users listed individually in the inter-comment section.
    pub top_users: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            seed: crate::seed::DEFAULT_SEED,
            zero_policy: ZeroPolicy::Clamp,
            anonymous_token: crate::event_store::DEFAULT_ANONYMOUS.to_string(),
            x_min: 1,
            replicas: 1000,
            em_starts: 5,
            top_users: 10,
        }
    }
}

impl ReportConfig {
    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        hex::encode(digest)[..16].to_string()
    }

    pub fn fit_config(&self) -> CorpusFitConfig {
        CorpusFitConfig {
            zero_policy: self.zero_policy,
            em: EmConfig {
                seed: self.seed,
                starts: self.em_starts,
                ..EmConfig::default()
            },
        }
    }

    pub fn header(&self) -> String {
        format!(
            "# threadtime {VERSION}\n# seed {}\n# config {}\n",
            self.seed,
            self.hash()
        )
    }
}

/// Outcome of one section.
#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: &'static str,
    pub artifacts: Artifacts,
    pub error: Option<String>,
}

impl Section {
    fn ok(name: &'static str, artifacts: Artifacts) -> Self {
        Self {
            name,
            artifacts,
            error: None,
        }
    }

    fn failed(name: &'static str, artifacts: Artifacts, error: impl Into<String>) -> Self {
        Self {
            name,
            artifacts,
            error: Some(error.into()),
        }
    }
}

fn kv_csv(rows: &[(&str, String)]) -> String {
    let mut out = String::from("key,value\n");
    for (k, v) in rows {
        let v = if v.contains(',') || v.contains('"') {
            format!("\"{}\"", v.replace('"', "\"\""))
        } else {
            v.clone()
        };
        let _ = writeln!(out, "{k},{v}");
    }
    out
}

pub fn section_summary(corpus: &Corpus, cfg: &ReportConfig) -> Section {
    let mut a = Artifacts::new();
    match summarize(corpus, &cfg.anonymous_token) {
        Ok(s) => {
            let (lo, hi) = s.period;
            a.insert(
                "summary.csv".into(),
                kv_csv(&[
                    ("n_posts", s.n_posts.to_string()),
                    ("n_comments", s.n_comments.to_string()),
                    ("n_commentators", s.n_commentators.to_string()),
                    ("n_anonymous_comments", s.n_anonymous_comments.to_string()),
                    ("anonymous_fraction", s.anonymous_fraction.to_string()),
                    ("period_start", lo.to_string()),
                    ("period_end", hi.to_string()),
                    ("anonymous_token", cfg.anonymous_token.clone()),
                    ("commentator_convention", COMMENTATOR_CONVENTION.to_string()),
                    ("ici_convention", ICI_CONVENTION.to_string()),
                    ("zero_policy", cfg.zero_policy.to_string()),
                    ("epoch_note", corpus.epoch_note().to_string()),
                ]),
            );
            Section::ok("summary", a)
        }
        Err(e) => Section::failed("summary", a, e.to_string()),
    }
}

pub fn section_cycles(corpus: &Corpus, _cfg: &ReportConfig) -> Section {
    let mut a = Artifacts::new();
    let mut errors = Vec::new();
    for kind in [Kind::Posts, Kind::Comments] {
        for res in [Resolution::HourOfDay, Resolution::HourOfWeek] {
            match cycles::activity_profile(corpus, kind, res) {
                Ok(p) => {
                    let mut body = format!(
                        "# full periods {}{}\n# {PROFILE_CONVENTION}\n",
                        p.full_periods,
                        if p.flagged { " (fewer than 2: std unreliable)" } else { "" }
                    );
                    body.push_str(&p.to_csv());
                    a.insert(format!("cycles/{kind}_{res}.csv"), body);
                }
                Err(e) => errors.push(format!("{kind} {res}: {e}")),
            }
        }
    }
    if errors.is_empty() {
        Section::ok("cycles", a)
    } else {
        Section::failed("cycles", a, errors.join("; "))
    }
}

fn param_histogram(values: &[f64], width: f64) -> String {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let min = finite.iter().cloned().fold(f64::INFINITY, f64::min);
    let origin = if min.is_finite() { (min / width).floor() * width } else { 0.0 };
    Histogram::build(&finite, width, origin).expect("positive width").to_csv(false)
}

/// Per-post fits for one family with their epsilon distribution and parameter histograms.
pub fn fit_artifacts(fit: &CorpusFit) -> Artifacts {
    let mut a = Artifacts::new();
    let f = fit.family;
    a.insert(format!("fits/{f}_posts.csv"), fit.to_csv());
    a.insert(format!("fits/{f}_epsilon_hist.csv"), fit.epsilon_histogram.to_csv(false));
    if let Some(cdf) = &fit.epsilon_cdf {
        a.insert(format!("fits/{f}_epsilon_cdf.csv"), cdf.to_csv());
    }
    let hours = error_by_publish_hour(&fit.posts);
    a.insert(format!("fits/{f}_epsilon_by_hour.csv"), hourly_csv(&hours));
    let col = |g: fn(&ModelParams) -> Option<f64>| -> Vec<f64> { fit.posts.iter().filter_map(|p| g(&p.report.params)).collect() };
    match f {
        Family::Ln => {
            let mu = col(|m| match m {
                ModelParams::LogNormal(p) => Some(p.mu),
                _ => None,
            });
            let sigma = col(|m| match m {
                ModelParams::LogNormal(p) => Some(p.sigma),
                _ => None,
            });
            a.insert("fits/ln_mu_hist.csv".into(), param_histogram(&mu, 0.1));
            a.insert("fits/ln_sigma_hist.csv".into(), param_histogram(&sigma, 0.1));
        }
        Family::Dln => {
            let get = |i: usize| {
                fit.posts
                    .iter()
                    .filter_map(|p| match p.report.params {
                        ModelParams::DoubleLogNormal(d) => Some([d.mu1, d.sigma1, d.c, d.mu2, d.sigma2][i]),
                        _ => None,
                    })
                    .collect::<Vec<f64>>()
            };
            a.insert("fits/dln_mu1_hist.csv".into(), param_histogram(&get(0), 0.1));
            a.insert("fits/dln_sigma1_hist.csv".into(), param_histogram(&get(1), 0.1));
            a.insert("fits/dln_c_hist.csv".into(), param_histogram(&get(2), 0.01));
            a.insert("fits/dln_mu2_hist.csv".into(), param_histogram(&get(3), 0.1));
            a.insert("fits/dln_sigma2_hist.csv".into(), param_histogram(&get(4), 0.1));
        }
    }
    let spread = goodness::hourly_spread(&hours).map(|s| s.to_string()).unwrap_or_default();
    a.insert(
        format!("fits/{f}_summary.csv"),
        kv_csv(&[
            ("model", f.to_string()),
            ("posts_fitted", fit.posts.len().to_string()),
            ("posts_without_comments", fit.skipped.len().to_string()),
            ("posts_failed", fit.failed.len().to_string()),
            ("mean_epsilon", fit.mean_epsilon().to_string()),
            ("fraction_epsilon_below_0.02", fit.fraction_below(0.02).to_string()),
            ("fraction_epsilon_below_0.05", fit.fraction_below(0.05).to_string()),
            ("hourly_mean_epsilon_spread", spread),
        ]),
    );
    a
}

pub fn section_fits(corpus: &Corpus, family: Family, cfg: &ReportConfig) -> Section {
    let fit = fit_all_posts(corpus, family, &cfg.fit_config());
    let a = fit_artifacts(&fit);
    let name = match family {
        Family::Ln => "fits_ln",
        Family::Dln => "fits_dln",
    };
    if fit.posts.is_empty() {
        return Section::failed(name, a, "no post has comments");
    }
    if fit.failed.is_empty() {
        Section::ok(name, a)
    } else {
        let msg: Vec<String> = fit.failed.iter().map(|(id, e)| format!("{id}: {e}")).collect();
        Section::failed(name, a, msg.join("; "))
    }
}

/// PCI histogram (width 2) and ECDF with fitted LN and DLN cdfs for the most commented post.
pub fn section_top_post(corpus: &Corpus, cfg: &ReportConfig) -> Section {
    let mut a = Artifacts::new();
    let Some(top) = corpus
        .posts()
        .iter()
        .map(|p| (corpus.comment_count(&p.id).unwrap_or(0), p.id.as_str()))
        .max_by(|x, y| x.0.cmp(&y.0).then(y.1.cmp(x.1)))
        .filter(|(n, _)| *n > 0)
        .map(|(_, id)| id.to_string())
    else {
        return Section::failed("top_post", a, "no post has comments");
    };
    let series = match intervals::pci_of_post(corpus, &top, cfg.zero_policy) {
        Ok(s) => s,
        Err(e) => return Section::failed("top_post", a, e.to_string()),
    };
    let em = cfg.fit_config().em;
    let ln = fitting::fit_series(&series, Family::Ln, &em);
    let dln = fitting::fit_series(&series, Family::Dln, &em);
    a.insert(
        "pci/top_post_hist.csv".into(),
        format!("# post {top}\n{}", intervals::bin_histogram(&series, 2.0).expect("positive width").to_csv(true)),
    );
    let ecdf = empirical_cdf(&series);
    let mut body = format!("# post {top}\nx,ecdf,ln_cdf,dln_cdf\n");
    let eval = |r: &Result<FitReport, fitting::FitError>, x: f64| match r {
        Ok(f) => f.params.cumulative(x).to_string(),
        Err(_) => String::new(),
    };
    for (&x, &p) in ecdf.support().iter().zip(ecdf.cum_prob()) {
        let _ = writeln!(body, "{x},{p},{},{}", eval(&ln, x), eval(&dln, x));
    }
    a.insert("pci/top_post_cdf.csv".into(), body);
    let mut rows = String::from(fitting::FIT_CSV_HEADER);
    rows.push('\n');
    for r in [&ln, &dln].into_iter().flatten() {
        rows.push_str(&r.csv_row(&top));
        rows.push('\n');
    }
    a.insert("pci/top_post_fits.csv".into(), rows);
    match (&ln, &dln) {
        (Ok(_), Ok(_)) => Section::ok("top_post", a),
        (Err(e), _) | (_, Err(e)) => Section::failed("top_post", a, e.to_string()),
    }
}

/// Comparison table row for one hypothesis on the comments-per-user data.
fn hypothesis_row(name: &str, fit: Result<FitReport, fitting::FitError>, ks: Option<KsFamily>, counts: &[f64], cfg: &ReportConfig) -> (String, bool) {
    match fit {
        Err(e) => (format!("{name},,,,,,,,error: {e}\n"), false),
        Ok(r) => {
            let (d, p, reps, disc) = match ks.map(|fam| ks_test_montecarlo(counts, fam, cfg.x_min, cfg.replicas, cfg.seed)) {
                Some(Ok(k)) => (k.d.to_string(), k.p_value.to_string(), k.n_replicas.to_string(), k.discarded.to_string()),
                Some(Err(e)) => return (format!("{name},{},{},{},,,,,ks error: {e}\n", r.params, r.log_likelihood, r.epsilon.value), false),
                None => Default::default(),
            };
            (
                format!(
                    "{name},{},{},{},{d},{p},{reps},{disc},{}\n",
                    r.params,
                    r.log_likelihood,
                    r.epsilon.value,
                    r.diagnostics.flag_text()
                ),
                true,
            )
        }
    }
}

/// Comments-per-user histogram, power-law and truncated-LN fits, regression and KS tests.
pub fn section_users(corpus: &Corpus, cfg: &ReportConfig) -> Section {
    let mut a = Artifacts::new();
    let per_user = match comments_per_user(corpus, &cfg.anonymous_token) {
        Ok(m) => m,
        Err(e) => return Section::failed("users", a, e.to_string()),
    };
    if per_user.len() < 2 {
        return Section::failed(
            "users",
            a,
            format!("comments-per-user fits need at least 2 identified commentators, found {}", per_user.len()),
        );
    }
    let counts: Vec<u64> = per_user.values().copied().collect();
    let mut hist: BTreeMap<u64, u64> = BTreeMap::new();
    for &c in &counts {
        *hist.entry(c).or_insert(0) += 1;
    }
    let mut h = String::from("comments,users\n");
    for (c, n) in &hist {
        let _ = writeln!(h, "{c},{n}");
    }
    a.insert("users/comments_per_user_hist.csv".into(), h);
    let kept: Vec<u64> = counts.iter().copied().filter(|&c| c >= cfg.x_min).collect();
    let as_f: Vec<f64> = kept.iter().map(|&c| c as f64).collect();
    let mut table = String::from("hypothesis,params,loglik,epsilon,ks_d,ks_p,replicas,discarded,notes\n");
    let mut ok = true;
    for (name, fit, fam) in [
        ("powerlaw_mle", fit_powerlaw_mle(&kept, cfg.x_min), KsFamily::PowerLaw),
        ("truncated_ln_mle", fit_truncated_ln(&kept, cfg.x_min), KsFamily::TruncatedLn),
    ] {
        let (row, good) = hypothesis_row(name, fit, Some(fam), &as_f, cfg);
        table.push_str(&row);
        ok &= good;
    }
    for (name, binning) in [("regression_raw", Binning::Raw), ("regression_log2", Binning::Log { base: 2.0 })] {
        match fit_powerlaw_regression(&kept, binning) {
            Ok(r) => {
                let _ = writeln!(table, "{name},slope={} intercept={} r={},,,,,,points={}", r.slope, r.intercept, r.r, r.points);
            }
            Err(e) => {
                let _ = writeln!(table, "{name},,,,,,,,error: {e}");
                ok = false;
            }
        }
    }
    a.insert("users/hypotheses.csv".into(), format!("# x_min {}\n# ks: {KS_PROCEDURE}\n{table}", cfg.x_min));
    if ok {
        Section::ok("users", a)
    } else {
        Section::failed("users", a, "one or more comments-per-user fits failed; see users/hypotheses.csv")
    }
}

fn median(v: &[f64]) -> f64 {
    let s = IntervalSeries::new(v.to_vec(), intervals::Origin::Raw).expect("nonempty positive");
    s.median()
}

/// Population and per-user inter-comment statistics for the most active users.
pub fn section_ici(corpus: &Corpus, cfg: &ReportConfig) -> Section {
    let mut a = Artifacts::new();
    let pop = match intervals::ici_population(corpus, &cfg.anonymous_token, cfg.zero_policy) {
        Ok(p) => p,
        Err(e) => return Section::failed("ici", a, e.to_string()),
    };
    let hist = intervals::bin_histogram(&pop, 1.0).expect("positive width");
    a.insert("ici/population_hist.csv".into(), hist.to_csv(true));
    let per_user = comments_per_user(corpus, &cfg.anonymous_token).unwrap_or_default();
    let mut ranked: Vec<(&String, &u64)> = per_user.iter().collect();
    ranked.sort_by(|x, y| y.1.cmp(x.1).then(x.0.cmp(y.0)));
    let mut users = String::from("author,comments,ici_median,pci_median,ici_ln_mu,ici_ln_sigma\n");
    for (author, &n) in ranked.iter().take(cfg.top_users) {
        let ici = intervals::ici_of_user(corpus, author, &cfg.anonymous_token, cfg.zero_policy).ok();
        let pci = intervals::pci_of_user(corpus, author, &cfg.anonymous_token, cfg.zero_policy).ok();
        let fit = ici.as_ref().and_then(|s| fitting::mle_ln(s.samples()).ok());
        let _ = writeln!(
            users,
            "{author},{n},{},{},{},{}",
            ici.as_ref().map(|s| s.median().to_string()).unwrap_or_default(),
            pci.as_ref().map(|s| s.median().to_string()).unwrap_or_default(),
            fit.map(|f| f.mu.to_string()).unwrap_or_default(),
            fit.map(|f| f.sigma.to_string()).unwrap_or_default(),
        );
    }
    a.insert("ici/top_users.csv".into(), users);
    for (author, _) in ranked.iter().take(2) {
        for res in [Resolution::HourOfDay, Resolution::HourOfWeek] {
            if let Ok(p) = cycles::user_activity_profile(corpus, author, res) {
                a.insert(format!("ici/user_{author}_{res}.csv"), p.to_csv());
            }
        }
    }
    let mode = hist.mode().map(|m| m.to_string()).unwrap_or_default();
    a.insert(
        "ici/summary.csv".into(),
        kv_csv(&[
            ("population_intervals", pop.len().to_string()),
            ("population_median_minutes", median(pop.samples()).to_string()),
            ("pdf_peak_minutes", mode),
            ("convention", ICI_CONVENTION.to_string()),
        ]),
    );
    Section::ok("ici", a)
}

/// All sections of the full report, in a fixed order.
pub fn build_report(corpus: &Corpus, cfg: &ReportConfig) -> Vec<Section> {
    vec![
        section_summary(corpus, cfg),
        section_cycles(corpus, cfg),
        section_fits(corpus, Family::Ln, cfg),
        section_fits(corpus, Family::Dln, cfg),
        section_top_post(corpus, cfg),
        section_users(corpus, cfg),
        section_ici(corpus, cfg),
    ]
}

/// `manifest.csv` listing every section's status and files.
pub fn manifest(sections: &[Section]) -> String {
    let mut out = String::from("section,status,files,error\n");
    for s in sections {
        let files: Vec<&str> = s.artifacts.keys().map(|k| k.as_str()).collect();
        let _ = writeln!(
            out,
            "{},{},{},\"{}\"",
            s.name,
            if s.error.is_none() { "ok" } else { "failed" },
            files.join(" "),
            s.error.as_deref().unwrap_or("").replace('"', "'")
        );
    }
    out
}

/// Merge sections into one tree with headers and a manifest.
pub fn render(sections: &[Section], cfg: &ReportConfig) -> Artifacts {
    let header = cfg.header();
    let mut out = Artifacts::new();
    for s in sections {
        for (path, body) in &s.artifacts {
            out.insert(path.clone(), format!("{header}{body}"));
        }
    }
    out.insert("manifest.csv".into(), format!("{header}{}", manifest(sections)));
    out
}

/// Write a rendered tree below `dir`, creating directories as needed.
pub fn write_tree(dir: &Path, tree: &Artifacts) -> std::io::Result<()> {
    for (rel, body) in tree {
        let path = dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, body)?;
    }
    Ok(())
}
