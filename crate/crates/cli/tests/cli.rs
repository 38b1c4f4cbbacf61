use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_threadtime"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn synth(dir: &Path, posts: usize) -> PathBuf {
    let path = dir.join("corpus.jsonl");
    let out = run(&["synth", "--posts", &posts.to_string(), "--out", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    path
}

fn read_tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn empty_input_exits_2_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("empty.jsonl");
    std::fs::write(&input, "").unwrap();
    let out_dir = tmp.path().join("out");
    for cmd in ["fit", "report", "users", "cycles"] {
        let out = run(&[cmd, input.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(2), "{cmd}");
        assert!(!out_dir.exists(), "{cmd} wrote partial outputs");
    }
}

#[test]
fn malformed_input_exits_2_and_names_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("bad.jsonl");
    std::fs::write(&input, "{\"kind\":\"post\",\"id\":\"p\",\"parent\":null,\"author\":\"a\",\"ts\":0}\nnot json\n").unwrap();
    let out = run(&["summary", input.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn single_user_corpus_is_refused_by_users() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("one.csv");
    std::fs::write(&input, "kind,id,parent,author,ts\npost,p,,ed,0\ncomment,c1,p,solo,4\ncomment,c2,p,solo,9\n").unwrap();
    let out = run(&["users", input.to_str().unwrap(), "--out", tmp.path().join("u").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("at least 2 identified commentators"));
}

#[test]
fn report_is_byte_identical_across_runs_and_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let input = synth(tmp.path(), 25);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for (dir, threads) in [(&a, "1"), (&b, "4")] {
        let out = run(&["report", input.to_str().unwrap(), "--replicas", "50", "--threads", threads, "--out", dir.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (ta, tb) = (read_tree(&a), read_tree(&b));
    assert!(ta.len() > 20);
    assert_eq!(ta, tb);
    for (path, body) in &ta {
        let text = String::from_utf8_lossy(body);
        assert!(text.starts_with("# threadtime "), "{}", path.display());
        assert!(text.contains("# seed 20050826\n# config "), "{}", path.display());
    }
}

#[test]
fn seed_changes_the_config_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let input = synth(tmp.path(), 10);
    let mut hashes = Vec::new();
    for seed in ["1", "2"] {
        let dir = tmp.path().join(seed);
        let out = run(&["cycles", input.to_str().unwrap(), "--seed", seed, "--out", dir.to_str().unwrap()]);
        assert!(out.status.success());
        hashes.push(std::fs::read_to_string(dir.join("manifest.csv")).unwrap().lines().nth(2).unwrap().to_string());
    }
    assert_ne!(hashes[0], hashes[1]);
}

#[test]
fn env_overrides_mirror_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let input = synth(tmp.path(), 10);
    let dir = tmp.path().join("env");
    let out = bin()
        .args(["cycles", input.to_str().unwrap()])
        .env("THREADTIME_OUT", &dir)
        .env("THREADTIME_SEED", "77")
        .output()
        .unwrap();
    assert!(out.status.success());
    let manifest = std::fs::read_to_string(dir.join("manifest.csv")).unwrap();
    assert!(manifest.contains("# seed 77\n"));
}

#[test]
fn fit_reports_epsilon_fractions() {
    let tmp = tempfile::tempdir().unwrap();
    let input = synth(tmp.path(), 12);
    let dir = tmp.path().join("fit");
    let out = run(&["fit", input.to_str().unwrap(), "--model", "ln", "--out", dir.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("fraction epsilon<0.05"));
    for f in ["fits/ln_posts.csv", "fits/ln_epsilon_hist.csv", "fits/ln_epsilon_cdf.csv", "fits/ln_mu_hist.csv", "fits/ln_sigma_hist.csv"] {
        assert!(dir.join(f).exists(), "{f}");
    }
}

#[test]
fn forecast_with_too_few_early_comments_suggests_a_longer_horizon() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("f.csv");
    std::fs::write(&input, "kind,id,parent,author,ts\npost,p,,ed,0\ncomment,c1,p,a,4\ncomment,c2,p,b,900\n").unwrap();
    let out = run(&["forecast", input.to_str().unwrap(), "--post", "p", "--tau", "60"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("larger horizon"));
}
