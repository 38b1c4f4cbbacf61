//! `threadtime` command-line front end.
//!
//! Exit status: 0 when every requested section succeeded, 2 when the input
//! cannot be ingested (nothing is written), 1 for any other failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};

use threadtime::event_store::{parse_events, summarize, Corpus, Format, DEFAULT_ANONYMOUS};
use threadtime::fitting::Family;
use threadtime::forecast::{forecast_post, ForecastConfig};
use threadtime::intervals::ZeroPolicy;
use threadtime::report::{self, ReportConfig, Section};
use threadtime::seed::DEFAULT_SEED;
use threadtime::synthgen::{generate_corpus, truth_path, GeneratorSpec};

#[derive(Parser, Debug)]
#[command(name = "threadtime", version, about = "Timing analysis of post/comment event logs")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Global {
    /// Input format; inferred from the file extension when omitted.
    #[arg(long, global = true, env = "THREADTIME_FORMAT")]
    format: Option<Format>,
    /// Master seed for every randomized step.
    #[arg(long, global = true, env = "THREADTIME_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Output directory (or file for `ingest` and `synth`).
    #[arg(long, global = true, env = "THREADTIME_OUT")]
    out: Option<PathBuf>,
    /// Treatment of zero-minute intervals.
    #[arg(long, global = true, env = "THREADTIME_ZERO_POLICY", default_value_t = ZeroPolicy::Clamp)]
    zero_policy: ZeroPolicy,
    /// Author token marking anonymous comments.
    #[arg(long, global = true, env = "THREADTIME_ANON_TOKEN", default_value = DEFAULT_ANONYMOUS)]
    anon_token: String,
    /// Lower cutoff for comments-per-user fits.
    #[arg(long, global = true, env = "THREADTIME_XMIN", default_value_t = 1)]
    xmin: u64,
    /// Monte Carlo replicas for KS p-values.
    #[arg(long, global = true, env = "THREADTIME_REPLICAS", default_value_t = 1000)]
    replicas: usize,
    /// Worker threads (output does not depend on this).
    #[arg(long, global = true, env = "THREADTIME_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate an event log; optionally write it back normalized as JSONL.
    Ingest { input: PathBuf },
    /// Print corpus counts.
    Summary { input: PathBuf },
    /// Fit every post's comment intervals.
    Fit {
        input: PathBuf,
        #[arg(long, default_value_t = Family::Dln)]
        model: Family,
    },
    /// Comments-per-user hypotheses: power law against truncated log-normal.
    Users { input: PathBuf },
    /// Daily and weekly activity profiles.
    Cycles { input: PathBuf },
    /// Generate a synthetic corpus and its ground truth.
    Synth {
        /// Generator spec as JSON; the built-in reference spec when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Override the number of posts.
        #[arg(long)]
        posts: Option<usize>,
    },
    /// Predict a post's final comment count from its first `tau` minutes.
    Forecast {
        input: PathBuf,
        #[arg(long)]
        post: String,
        /// Horizon in minutes after publication.
        #[arg(long)]
        tau: f64,
        #[arg(long, default_value_t = 200)]
        bootstrap: usize,
    },
    /// Every analysis as a tree of CSV files.
    Report { input: PathBuf },
}

/// Ingestion failures map to exit status 2.
#[derive(Debug)]
struct IngestError(anyhow::Error);

impl std::fmt::Display for IngestError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for IngestError {}

fn load(path: &Path, format: Option<Format>) -> Result<Corpus> {
    let inner = || -> Result<Corpus> {
        let format = match format {
            Some(f) => f,
            None => match path.extension().and_then(|e| e.to_str()) {
                Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
                _ => Format::Jsonl,
            },
        };
        let file = std::fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
        let corpus = parse_events(file, format).with_context(|| format!("cannot ingest {}", path.display()))?;
        if corpus.is_empty() {
            return Err(anyhow!("{} contains no events", path.display()));
        }
        Ok(corpus)
    };
    inner().map_err(|e| anyhow::Error::new(IngestError(e)))
}

fn report_config(g: &Global) -> ReportConfig {
    ReportConfig {
        seed: g.seed,
        zero_policy: g.zero_policy,
        anonymous_token: g.anon_token.clone(),
        x_min: g.xmin,
        replicas: g.replicas,
        ..ReportConfig::default()
    }
}

fn out_dir(g: &Global) -> PathBuf {
    g.out.clone().unwrap_or_else(|| PathBuf::from("threadtime-out"))
}

/// Write sections and report failures; `Ok(false)` if any section failed.
fn emit(sections: Vec<Section>, g: &Global) -> Result<bool> {
    let cfg = report_config(g);
    let dir = out_dir(g);
    let tree = report::render(&sections, &cfg);
    report::write_tree(&dir, &tree).with_context(|| format!("cannot write to {}", dir.display()))?;
    let mut ok = true;
    for s in &sections {
        if let Some(e) = &s.error {
            eprintln!("section {} failed: {e}", s.name);
            ok = false;
        }
    }
    println!("wrote {} files to {} (seed {}, config {})", tree.len(), dir.display(), cfg.seed, cfg.hash());
    Ok(ok)
}

fn run(cli: Cli) -> Result<bool> {
    let g = &cli.global;
    match &cli.command {
        Command::Ingest { input } => {
            let corpus = load(input, g.format)?;
            let s = summarize(&corpus, &g.anon_token)?;
            println!(
                "{} posts, {} comments, {} commentators, {} anonymous comments",
                s.n_posts, s.n_comments, s.n_commentators, s.n_anonymous_comments
            );
            if let Some(out) = &g.out {
                std::fs::write(out, corpus.to_jsonl()).with_context(|| format!("cannot write {}", out.display()))?;
                println!("normalized log written to {}", out.display());
            }
            Ok(true)
        }
        Command::Summary { input } => {
            let corpus = load(input, g.format)?;
            let s = summarize(&corpus, &g.anon_token)?;
            println!("{}", serde_json::to_string_pretty(&s)?);
            Ok(true)
        }
        Command::Fit { input, model } => {
            let corpus = load(input, g.format)?;
            let cfg = report_config(g);
            let fit = threadtime::fitting::fit_all_posts(&corpus, *model, &cfg.fit_config());
            println!(
                "{model}: {} posts fitted, mean epsilon {:.5}, fraction epsilon<0.02 {:.3}, fraction epsilon<0.05 {:.3}",
                fit.posts.len(),
                fit.mean_epsilon(),
                fit.fraction_below(0.02),
                fit.fraction_below(0.05)
            );
            let mut section = Section {
                name: "fits",
                artifacts: report::fit_artifacts(&fit),
                error: None,
            };
            if fit.posts.is_empty() {
                section.error = Some("no post has comments".into());
            } else if !fit.failed.is_empty() {
                let msg: Vec<String> = fit.failed.iter().map(|(id, e)| format!("{id}: {e}")).collect();
                section.error = Some(msg.join("; "));
            }
            emit(vec![section], g)
        }
        Command::Users { input } => {
            let corpus = load(input, g.format)?;
            let section = report::section_users(&corpus, &report_config(g));
            if let Some(table) = section.artifacts.get("users/hypotheses.csv") {
                print!("{table}");
            }
            emit(vec![section], g)
        }
        Command::Cycles { input } => {
            let corpus = load(input, g.format)?;
            emit(vec![report::section_cycles(&corpus, &report_config(g))], g)
        }
        Command::Synth { spec, posts } => {
            let mut spec = match spec {
                Some(p) => {
                    let text = std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
                    GeneratorSpec::from_json(&text)?
                }
                None => GeneratorSpec::reference(),
            };
            spec.seed = g.seed;
            if let Some(n) = posts {
                spec.n_posts = *n;
            }
            let out = g.out.clone().unwrap_or_else(|| PathBuf::from("synthetic.jsonl"));
            let generated = generate_corpus(&spec)?;
            generated.write(&out)?;
            println!(
                "{} posts, {} comments written to {} (truth in {}, seed {})",
                generated.corpus.posts().len(),
                generated.corpus.comments().len(),
                out.display(),
                truth_path(&out).display(),
                spec.seed
            );
            Ok(true)
        }
        Command::Forecast { input, post, tau, bootstrap } => {
            let corpus = load(input, g.format)?;
            let cfg = ForecastConfig {
                bootstrap: *bootstrap,
                seed: g.seed,
                zero_policy: g.zero_policy,
                ..ForecastConfig::new(*tau)
            };
            let f = forecast_post(&corpus, post, &cfg)?;
            println!(
                "post {post}: {} comments within {} min, expected final count {:.1} ({:.0}% interval {:.1} to {:.1}; seed {})",
                f.n_obs,
                f.tau,
                f.estimate,
                cfg.level * 100.0,
                f.lower,
                f.upper,
                g.seed
            );
            Ok(true)
        }
        Command::Report { input } => {
            let corpus = load(input, g.format)?;
            emit(report::build_report(&corpus, &report_config(g)), g)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.global.threads {
        std::env::set_var("RAYON_NUM_THREADS", n.max(1).to_string());
    }
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<IngestError>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
