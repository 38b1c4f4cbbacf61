//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line and then
//! asserts, so `cargo test --test acceptance -- --nocapture` shows the
//! full table. Tests run one at a time so wall-clock budgets are fair.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::Rng;

use threadtime::cycles::{activity_profile, Kind, Resolution};
use threadtime::distributions::special::{erf, norm_cdf};
use threadtime::distributions::{
    Distribution, DoubleLogNormalParams, LogNormalParams, ModelParams, TruncatedLogNormalParams,
};
use threadtime::event_store::DEFAULT_ANONYMOUS;
use threadtime::fitting::{
    derived_stats, fit_all_posts, fit_dln, fit_ln, fit_powerlaw_mle, fit_powerlaw_regression, Binning,
    CorpusFitConfig, EmConfig, Family,
};
use threadtime::forecast::{forecast_post, ForecastConfig};
use threadtime::goodness::{error_by_publish_hour, hourly_spread, ks_test_montecarlo, KsFamily};
use threadtime::intervals::{bin_histogram, ici_population, IntervalSeries, Origin, ZeroPolicy};
use threadtime::report::{build_report, render, write_tree, ReportConfig};
use threadtime::seed::{self, DEFAULT_SEED};
use threadtime::synthgen::{
    generate_corpus, generate_post_thread, CommentCount, GeneratorSpec, PciSpec, PostSchedule, SecondWave, UserPool,
};

static SERIAL: Mutex<()> = Mutex::new(());

fn verdict(n: u32, name: &str, pass: bool, elapsed: Duration, budget: Option<Duration>, detail: String) -> bool {
    let in_time = budget.is_none_or(|b| elapsed <= b);
    let ok = pass && in_time;
    let budget = budget.map(|b| format!(" (budget {}s)", b.as_secs())).unwrap_or_default();
    println!(
        "criterion {n:>2} {name}: {} | {detail} | {:.2}s{budget}",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    ok
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn criterion_01_analytic_layer() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();

    let k = 2.0 / std::f64::consts::PI.sqrt();
    let mut erf_err: f64 = 0.0;
    for i in 0..=120 {
        let x = -6.0 + 0.1 * i as f64;
        let oracle = simpson(|t| k * (-t * t).exp(), 0.0, x, 40_000);
        erf_err = erf_err.max((erf(x) - oracle).abs());
    }

    let mut median_exact = true;
    for &(mu, sigma) in &[(0.0, 1.0), (1.0, 0.5), (4.5, 1.0), (5.1, 1.5), (-2.3, 0.2), (7.0, 0.45)] {
        let p = LogNormalParams::new(mu, sigma).unwrap();
        median_exact &= p.cumulative(mu.exp()) == 0.5;
    }

    let ln = LogNormalParams::new(5.1, 1.5).unwrap();
    let dln = DoubleLogNormalParams::new(4.0, 1.0, 0.7, 7.0, 0.5).unwrap();
    // integrate in u = ln t, where the density is t f(t)
    let mass = |d: &dyn Distribution, lo: f64, hi: f64| simpson(|u| u.exp() * d.density(u.exp()), lo, hi, 40_000);
    let ln_mass = mass(&ln, 5.1 - 15.0, 5.1 + 15.0);
    let dln_mass = mass(&dln, 4.0 - 12.0, 7.0 + 12.0);

    let mut deriv_err: f64 = 0.0;
    for d in [&ln as &dyn Distribution, &dln] {
        for i in 0..=200 {
            let u = -1.0 + 0.05 * i as f64;
            let h = 1e-4;
            let fd = (d.cumulative((u + h).exp()) - d.cumulative((u - h).exp())) / (2.0 * h);
            deriv_err = deriv_err.max((fd - u.exp() * d.density(u.exp())).abs());
        }
    }

    let pass = erf_err <= 1e-12 && median_exact && (ln_mass - 1.0).abs() < 1e-6 && (dln_mass - 1.0).abs() < 1e-6 && deriv_err < 1e-6;
    let detail = format!(
        "max |erf - quad| {erf_err:.2e}, F(e^mu)==0.5 {median_exact}, mass LN {ln_mass:.9} DLN {dln_mass:.9}, max |dF/dlnt - t f| {deriv_err:.2e}"
    );
    assert!(verdict(1, "analytic layer", pass, start.elapsed(), Some(Duration::from_secs(5)), detail));
}

#[test]
fn criterion_02_ln_recovery() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let truth = LogNormalParams::new(5.1, 1.5).unwrap();
    let mut good = 0;
    let mut pooled = Vec::with_capacity(50 * 10_000);
    for i in 0..50 {
        let minutes = generate_post_thread(0, 10_000, &truth, seed::derive(DEFAULT_SEED, "acceptance-ln", i));
        pooled.extend_from_slice(&minutes);
        let series = IntervalSeries::from_minutes(minutes, ZeroPolicy::Clamp, Origin::Raw).unwrap();
        let ModelParams::LogNormal(p) = fit_ln(&series).unwrap().params else { unreachable!() };
        if (p.mu - 5.1).abs() < 0.05 && (p.sigma - 1.5).abs() < 0.05 {
            good += 1;
        }
    }
    let series = IntervalSeries::from_minutes(pooled, ZeroPolicy::Clamp, Origin::Raw).unwrap();
    let eps = fit_ln(&series).unwrap().epsilon.value;
    let pass = good >= 48 && eps < 0.02;
    let detail = format!("{good}/50 seeds within 0.05, pooled epsilon {eps:.5}");
    assert!(verdict(2, "LN recovery", pass, start.elapsed(), Some(Duration::from_secs(10)), detail));
}

#[test]
fn criterion_03_dln_em_recovery() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let truth = DoubleLogNormalParams::new(4.0, 1.0, 0.7, 7.0, 0.5).unwrap();
    let mut good = 0;
    let mut monotone = true;
    let mut min_c = f64::INFINITY;
    for i in 0..20 {
        let s = seed::derive(DEFAULT_SEED, "acceptance-dln", i);
        let series = IntervalSeries::new(truth.sample(20_000, s), Origin::Raw).unwrap();
        let report = fit_dln(&series, &EmConfig { seed: s, ..EmConfig::default() }).unwrap();
        let trace = &report.diagnostics.ll_trace;
        monotone &= trace.windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0].abs());
        match report.params {
            ModelParams::DoubleLogNormal(p) => {
                min_c = min_c.min(p.c);
                if (p.mu1 - 4.0).abs() < 0.1
                    && (p.sigma1 - 1.0).abs() < 0.1
                    && (p.c - 0.7).abs() < 0.05
                    && (p.mu2 - 7.0).abs() < 0.1
                    && (p.sigma2 - 0.5).abs() < 0.1
                {
                    good += 1;
                }
            }
            _ => min_c = min_c.min(1.0),
        }
    }
    let pass = good >= 18 && monotone && min_c >= 0.5;
    let detail = format!("{good}/20 seeds within tolerance, log-likelihood monotone {monotone}, min c {min_c:.4}");
    assert!(verdict(3, "DLN/EM recovery", pass, start.elapsed(), Some(Duration::from_secs(60)), detail));
}

fn two_wave_spec() -> GeneratorSpec {
    GeneratorSpec {
        n_posts: 200,
        days: 28,
        post_schedule: PostSchedule::Window {
            start_hour: 18.0,
            end_hour: 6.0,
        },
        comments_per_post: CommentCount::Fixed { n: 400 },
        pci_model: PciSpec {
            model: ModelParams::DoubleLogNormal(DoubleLogNormalParams::new(4.5, 1.0, 0.6, 7.0, 0.45).unwrap()),
            second_wave: Some(SecondWave {
                peak_hour: 13.0,
                lookahead_hours: 6.0,
            }),
        },
        user_pool: UserPool {
            size: 5000,
            weight_sigma: 1.5,
            anonymous_fraction: 0.2,
            office_hours_users: 0,
        },
        ..GeneratorSpec::reference()
    }
}

#[test]
fn criteria_04_05_two_wave_superiority_and_publish_hour() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let corpus = generate_corpus(&two_wave_spec()).unwrap().corpus;
    let cfg = CorpusFitConfig::default();
    let ln = fit_all_posts(&corpus, Family::Ln, &cfg);
    let dln = fit_all_posts(&corpus, Family::Dln, &cfg);
    let elapsed = start.elapsed();

    let (m_ln, m_dln) = (ln.mean_epsilon(), dln.mean_epsilon());
    let (f_ln, f_dln) = (ln.fraction_below(0.02), dln.fraction_below(0.02));
    let pass4 = ln.posts.len() == 200 && dln.posts.len() == 200 && m_dln < m_ln && f_dln > f_ln;
    let detail = format!(
        "mean epsilon LN {m_ln:.5} DLN {m_dln:.5}, fraction below 0.02 LN {f_ln:.3} DLN {f_dln:.3}"
    );
    let ok4 = verdict(4, "two-wave superiority", pass4, elapsed, Some(Duration::from_secs(120)), detail);

    let s_ln = hourly_spread(&error_by_publish_hour(&ln.posts)).unwrap_or(f64::NAN);
    let s_dln = hourly_spread(&error_by_publish_hour(&dln.posts)).unwrap_or(f64::NAN);
    let pass5 = s_ln >= 2.0 * s_dln;
    let detail = format!("hourly mean-epsilon spread LN {s_ln:.5} DLN {s_dln:.5}, ratio {:.2}", s_ln / s_dln);
    let ok5 = verdict(5, "publish-hour dependence", pass5, elapsed, None, detail);
    assert!(ok4 && ok5);
}

#[test]
fn criterion_06_hypothesis_testing() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let truth = TruncatedLogNormalParams::new(1.0, 2.0, 1).unwrap();
    let draws = truth.sample(50_000, seed::derive(DEFAULT_SEED, "acceptance-users", 0));
    let counts: Vec<u64> = draws.iter().map(|&x| x as u64).collect();
    let pl = ks_test_montecarlo(&draws, KsFamily::PowerLaw, 1, 1000, DEFAULT_SEED).unwrap();
    let tln = ks_test_montecarlo(&draws, KsFamily::TruncatedLn, 1, 1000, DEFAULT_SEED).unwrap();
    let gamma = match fit_powerlaw_mle(&counts, 1).unwrap().params {
        ModelParams::PowerLaw(p) => p.gamma,
        _ => unreachable!(),
    };
    let slope = fit_powerlaw_regression(&counts, Binning::Raw).unwrap().slope;
    let gap = (gamma - slope.abs()).abs();
    let pass = pl.p_value < 0.001 && tln.p_value >= 0.01 && gap > 0.1;
    let detail = format!(
        "power law p {} (D {:.4}), truncated LN p {} (D {:.4}), MLE gamma {gamma:.4} vs regression slope {slope:.4}",
        pl.p_value, pl.d, tln.p_value, tln.d
    );
    assert!(verdict(6, "hypothesis testing", pass, start.elapsed(), Some(Duration::from_secs(300)), detail));
}

#[test]
fn criterion_07_derived_stats() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let mut rng = seed::rng(DEFAULT_SEED, "acceptance-derived", 0);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let mu = rng.random_range(-5.0..10.0);
        let sigma = rng.random_range(0.05..3.0);
        let p = LogNormalParams::new(mu, sigma).unwrap();
        let d = derived_stats(&p);
        // the quantile function is an independent route to both statistics
        let median = p.quantile(0.5).unwrap();
        let sigma_g = p.quantile(norm_cdf(1.0)).unwrap() / median;
        worst = worst
            .max(((d.median - median) / median).abs())
            .max(((d.sigma_g - sigma_g) / sigma_g).abs())
            .max(((d.median - mu.exp()) / mu.exp()).abs())
            .max(((d.sigma_g - sigma.exp()) / sigma.exp()).abs());
    }
    let pass = worst <= 1e-12;
    let detail = format!("1000 draws, worst relative deviation {worst:.2e}");
    assert!(verdict(7, "derived stats", pass, start.elapsed(), None, detail));
}

#[test]
fn criterion_08_cycles() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let spec = GeneratorSpec {
        n_posts: 20_000,
        days: 56,
        post_schedule: PostSchedule::Circadian {
            amplitude: 0.8,
            peak_hour: 13.0,
            weekend_factor: 0.5,
        },
        comments_per_post: CommentCount::Fixed { n: 0 },
        pci_model: PciSpec {
            model: ModelParams::LogNormal(LogNormalParams::new(5.0, 1.0).unwrap()),
            second_wave: None,
        },
        ..GeneratorSpec::reference()
    };
    let corpus = generate_corpus(&spec).unwrap().corpus;
    let day = activity_profile(&corpus, Kind::Posts, Resolution::HourOfDay).unwrap();
    let week = activity_profile(&corpus, Kind::Posts, Resolution::HourOfWeek).unwrap();
    let peak = day.argmax();
    let weekday = week.mean[..120].iter().sum::<f64>() / 120.0;
    let weekend = week.mean[120..].iter().sum::<f64>() / 48.0;
    let pass = (12..=14).contains(&peak) && weekend < 0.8 * weekday;
    let detail = format!("daily argmax hour {peak}, weekend/weekday mean ratio {:.3}", weekend / weekday);
    assert!(verdict(8, "cycles", pass, start.elapsed(), Some(Duration::from_secs(10)), detail));
}

#[test]
fn criterion_09_ici_floor() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let spec = GeneratorSpec::reference();
    assert_eq!(spec.ici_floor, 2);
    let generated = generate_corpus(&spec).unwrap();
    let pop = ici_population(&generated.corpus, DEFAULT_ANONYMOUS, ZeroPolicy::Clamp).unwrap();
    let min = pop.samples().iter().cloned().fold(f64::INFINITY, f64::min);
    let mode = bin_histogram(&pop, 1.0).unwrap().mode().unwrap();
    let pass = min >= 2.0 && mode >= 2.0;
    let detail = format!(
        "{} intervals, minimum {min} min, pdf mode bin starts at {mode} min, {} floor adjustments",
        pop.len(),
        generated.truth.floor_adjustments
    );
    assert!(verdict(9, "ICI floor", pass, start.elapsed(), None, detail));
}

#[test]
fn criterion_10_forecast_calibration() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let (mu, sigma) = (5.1, 1.5);
    let spec = GeneratorSpec {
        n_posts: 100,
        post_schedule: PostSchedule::Uniform,
        comments_per_post: CommentCount::Fixed { n: 500 },
        pci_model: PciSpec {
            model: ModelParams::LogNormal(LogNormalParams::new(mu, sigma).unwrap()),
            second_wave: None,
        },
        user_pool: UserPool {
            size: 5000,
            weight_sigma: 1.0,
            anonymous_fraction: 0.2,
            office_hours_users: 0,
        },
        ici_floor: 0,
        ..GeneratorSpec::reference()
    };
    let corpus = generate_corpus(&spec).unwrap().corpus;
    let cfg = ForecastConfig::new(f64::exp(mu));
    let mut within = 0;
    let mut worst: f64 = 0.0;
    for post in corpus.posts() {
        let f = forecast_post(&corpus, &post.id, &cfg).unwrap();
        let rel = (f.estimate - 500.0).abs() / 500.0;
        worst = worst.max(rel);
        if rel <= 0.2 {
            within += 1;
        }
    }
    let pass = within >= 80;
    let detail = format!("{within}/100 posts within 20% of 500, worst relative error {worst:.3}");
    assert!(verdict(10, "forecast calibration", pass, start.elapsed(), Some(Duration::from_secs(30)), detail));
}

#[test]
fn criterion_11_report_determinism() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let corpus = generate_corpus(&GeneratorSpec::reference()).unwrap().corpus;
    let cfg = ReportConfig::default();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| render(&build_report(&corpus, &cfg), &cfg))
    };
    let a = run(1);
    let b = run(4);
    let tmp = tempfile::tempdir().unwrap();
    write_tree(&tmp.path().join("a"), &a).unwrap();
    write_tree(&tmp.path().join("b"), &b).unwrap();
    let identical_files = a
        .keys()
        .all(|k| std::fs::read(tmp.path().join("a").join(k)).unwrap() == std::fs::read(tmp.path().join("b").join(k)).unwrap());
    let all_ok = !a["manifest.csv"].contains(",failed,");
    let pass = a == b && identical_files && all_ok;
    let detail = format!("{} files, byte-identical with 1 and 4 workers {}, all sections ok {all_ok}", a.len(), a == b && identical_files);
    assert!(verdict(11, "report determinism", pass, start.elapsed(), None, detail));
}
