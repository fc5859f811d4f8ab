use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use memsgd::metrics::{read_metrics_file, read_vector};
use memsgd::{make_problem, Oracle, ProblemSpec};

fn memsgd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_memsgd"))
        .args(args)
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: &str = "\
[problem]
name = quadratic
d = 12
n = 50

[engine]
iterations = 100
workers = 3

[schedule]
family = power
eta0 = 0.5

[compressor]
kind = random_k
q = 2

[diagnostics]
every = 10
";

#[test]
fn run_writes_metrics_and_final_iterate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.ini", SMALL);
    let out = dir.path().join("out");
    let res = memsgd(&["run", s(&cfg), "--out", s(&out)]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let rows = read_metrics_file(&out.join("metrics.csv")).unwrap();
    assert_eq!(rows.len(), 11);
    assert_eq!(
        rows.iter().map(|r| r.t).collect::<Vec<_>>(),
        (0..=100).step_by(10).collect::<Vec<_>>()
    );
    assert_eq!(rows[10].sent_nnz, 100 * 3 * 2);
    let w = read_vector(fs::File::open(out.join("final_w.csv")).unwrap()).unwrap();
    assert_eq!(w.len(), 12);
    let text = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(text
        .starts_with("t,F,grad_norm,mem_norm,zw_dist,transform_residual,eta,rho,gamma,sent_nnz\n"));
}

#[test]
fn reruns_are_byte_identical_and_seed_matters() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.ini", SMALL);
    let read = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut args = vec!["run", s(&cfg), "--out", s(&out)];
        args.extend_from_slice(extra);
        assert!(memsgd(&args).status.success());
        (
            fs::read(out.join("metrics.csv")).unwrap(),
            fs::read(out.join("final_w.csv")).unwrap(),
        )
    };
    let a = read("a", &[]);
    let b = read("b", &[]);
    let c = read("c", &["--threads", "3"]);
    let d = read("d", &["--seed", "9"]);
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert_ne!(a.0, d.0);
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(
        dir.path(),
        "bad.ini",
        &SMALL.replace("workers = 3", "workers = 3\nwrokers = 4"),
    );
    let res = memsgd(&["run", s(&bad), "--out", s(dir.path())]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("wrokers"));

    let res = memsgd(&["run", s(&dir.path().join("missing.ini"))]);
    assert_eq!(res.status.code(), Some(1));

    let beta = write(
        dir.path(),
        "beta.ini",
        &SMALL.replace("workers = 3", "beta = 1.0"),
    );
    let res = memsgd(&["run", s(&beta), "--out", s(dir.path())]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("beta"));

    let res = memsgd(&["run", s(&beta), "--threads", "0"]);
    assert_eq!(res.status.code(), Some(1));
    assert_eq!(memsgd(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn divergence_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[problem]\nname = quadratic\nd = 4\nn = 10\nmu = 1\nsmoothness = 100\n\n\
                [engine]\niterations = 5000\nbeta = 0.9\n\n[schedule]\nfamily = constant\neta0 = 10\nhorizon = 1\n";
    let cfg = write(dir.path(), "boom.ini", text);
    let res = memsgd(&["run", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(
        res.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
}

#[test]
fn stagewise_writes_one_row_per_stage() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[problem]\nname = phaseret\nd = 5\nn = 40\nnoise = 0\ninit_radius = 0.05\n\n\
                [engine]\niterations = 1\nworkers = 2\nbeta = 0.5\n\n[compressor]\nkind = top_k\nq = 2\n\n\
                [stagewise]\nstages = 3\neta0 = 0.002\n";
    let cfg = write(dir.path(), "stage.ini", text);
    let out = dir.path().join("o");
    let res = memsgd(&["stagewise", s(&cfg), "--out", s(&out)]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let stages = fs::read_to_string(out.join("stages.csv")).unwrap();
    let lines: Vec<&str> = stages.lines().collect();
    assert_eq!(lines[0], "s,T_s,eta_s,F_avg,moreau_grad_sq,weighted_avg");
    assert_eq!(lines.len(), 4);
    assert!(out.join("final_w.csv").exists());
}

#[test]
fn compare_flags_identical_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.ini", SMALL);
    let b = write(dir.path(), "b.ini", &format!("# same run\n{SMALL}"));
    let c = write(dir.path(), "c.ini", &SMALL.replace("q = 2", "q = 4"));
    let out = dir.path().join("cmp");
    let res = memsgd(&[
        "compare",
        s(&a),
        s(&b),
        s(&c),
        "--out",
        s(&out),
        "--threads",
        "2",
    ]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let mut reader = csv::Reader::from_path(out.join("compare.csv")).unwrap();
    let identical: Vec<String> = reader
        .records()
        .map(|r| r.unwrap()[7].to_string())
        .collect();
    assert_eq!(identical, ["true", "true", "false"]);

    let other = write(dir.path(), "d.ini", &SMALL.replace("d = 12", "d = 13"));
    assert_eq!(
        memsgd(&["compare", s(&a), s(&other), "--out", s(&out)])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn ratefit_recovers_strongly_convex_rate() {
    let dir = tempfile::tempdir().unwrap();
    let problem = "[problem]\nname = quadratic\nd = 20\nn = 100\nmu = 1\nsmoothness = 10\nnoise = 1\ndata_seed = 7\n";
    let mut files = Vec::new();
    for t in [1_000u64, 10_000, 100_000] {
        let text = format!(
            "{problem}\n[engine]\niterations = {t}\nworkers = 4\nbatch = 8\nbeta = 0.9\n\n\
             [schedule]\nfamily = strong_convex\nmu = 1\n\n[compressor]\nkind = top_k\nq = 2\n\n\
             [diagnostics]\nevery = {}\n",
            t / 1000
        );
        let cfg = write(dir.path(), &format!("t{t}.ini"), &text);
        let out = dir.path().join(format!("t{t}"));
        assert!(memsgd(&["run", s(&cfg), "--out", s(&out)]).status.success());
        files.push(out.join("metrics.csv"));
    }
    let spec = ProblemSpec {
        name: "quadratic".into(),
        d: 20,
        n: 100,
        mu: 1.0,
        smoothness: 10.0,
        noise: 1.0,
        data_seed: 7,
        ..ProblemSpec::default()
    };
    let f_star = make_problem(&spec).unwrap().metadata().f_star.unwrap();
    let out = dir.path().join("fit");
    let f_star_arg = format!("{f_star:e}");
    let mut args = vec!["ratefit"];
    args.extend(files.iter().map(|f| s(f)));
    args.extend(["--f-star", &f_star_arg, "--out", s(&out)]);
    let res = memsgd(&args);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let text = fs::read_to_string(out.join("ratefit.csv")).unwrap();
    let slope: f64 = text.lines().find(|l| l.starts_with("slope,")).unwrap()[6..]
        .parse()
        .unwrap();
    assert!((-1.2..=-0.8).contains(&slope), "slope {slope}");

    // Suboptimality needs F*.
    let mut args = vec!["ratefit"];
    args.extend(files.iter().map(|f| s(f)));
    args.extend(["--out", s(&out)]);
    assert_eq!(memsgd(&args).status.code(), Some(1));
}
