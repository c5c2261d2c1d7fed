use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kerdisc::{save_samples, PriorSpec, RngState, SampleFormat};

fn kerdisc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kerdisc")).args(args).env("KERDISC_THREADS", "1").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn prior_csv(dir: &Path, d: usize) -> PathBuf {
    let p = dir.join(format!("x{d}.csv"));
    let x = PriorSpec::gaussian(d, 1.0).unwrap().sample(64, &RngState::new(3)).unwrap();
    save_samples(&x, &p, SampleFormat::Csv).unwrap();
    p
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap()
}

fn strip_wall_ms(v: &mut serde_json::Value) {
    v.as_object_mut().unwrap().remove("wall_ms");
}

#[test]
fn estimate_bhep_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let x = prior_csv(dir.path(), 3);
    let o = kerdisc(&["estimate", "--metric", "bhep", "--input", x.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    assert!(v["value"].as_f64().unwrap().is_finite());
    assert_eq!(v["n"], 64);
    assert_eq!(v["d"], 3);
}

#[test]
fn estimate_rejects_inapplicable_flags() {
    let dir = tempfile::tempdir().unwrap();
    let x = prior_csv(dir.path(), 3);
    let x = x.to_str().unwrap();
    let o = kerdisc(&["estimate", "--metric", "kummer-mmd", "--slices", "16", "--input", x]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--slices"));
    assert_eq!(code(&kerdisc(&["estimate", "--metric", "mmd-u", "--input", x])), 2);
    assert_eq!(code(&kerdisc(&["estimate", "--metric", "nope", "--input", x])), 2);
    assert_eq!(code(&kerdisc(&["estimate", "--metric", "bhep", "--gamma", "-1", "--input", x])), 2);
}

#[test]
fn estimate_io_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    assert_eq!(code(&kerdisc(&["estimate", "--metric", "bhep", "--input", missing.to_str().unwrap()])), 3);
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "1,2\n3,abc\n").unwrap();
    assert_eq!(code(&kerdisc(&["estimate", "--metric", "bhep", "--input", bad.to_str().unwrap()])), 3);
}

#[test]
fn estimate_sliced_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let x = prior_csv(dir.path(), 5);
    let args = ["estimate", "--metric", "sliced-mmd", "--slices", "64", "--seed", "7", "--input", x.to_str().unwrap()];
    let (a, b) = (kerdisc(&args), kerdisc(&args));
    assert_eq!(code(&a), 0);
    let (mut va, mut vb) = (json(&a), json(&b));
    assert_eq!(va["value"], vb["value"]);
    strip_wall_ms(&mut va);
    strip_wall_ms(&mut vb);
    assert_eq!(va, vb);
    assert_eq!(va["seed"], 7);
    assert_eq!(va["slices"], 64);
}

#[test]
fn estimate_every_metric_runs() {
    let dir = tempfile::tempdir().unwrap();
    let x1 = prior_csv(dir.path(), 1);
    let x4 = prior_csv(dir.path(), 4);
    let s = dir.path().join("s.jsonl");
    let z = PriorSpec::uniform_sphere(3).unwrap().sample(32, &RngState::new(1)).unwrap();
    save_samples(&z, &s, SampleFormat::Jsonl).unwrap();
    let (x1, x4, s) = (x1.to_str().unwrap(), x4.to_str().unwrap(), s.to_str().unwrap());
    let runs: Vec<Vec<&str>> = vec![
        vec!["mmd-u", "--input", x4, "--input2", x4, "--kernel", "imq"],
        vec!["mmd-cf", "--input", x1, "--knots", "32"],
        vec!["bhep", "--input", x4, "--statistic", "v"],
        vec!["kummer-mmd", "--input", x4, "--mode", "imq-approx"],
        vec!["ksd", "--input", x4, "--prior", "laplace", "--kernel", "imq", "--beta", "0.4"],
        vec!["ksd-spectral", "--input", x1],
        vec!["sliced-mmd", "--input", x4, "--score-mode", "pseudo-code-faithful"],
        vec!["sliced-ksd", "--input", x4, "--prior", "laplace", "--slices", "32"],
        vec!["sliced-ksd-analytic", "--input", x4, "--statistic", "v"],
        vec!["vmf-mmd", "--input", s, "--kappa", "2"],
        vec!["vmf-ksd", "--input", s, "--form", "published"],
    ];
    for r in runs {
        let mut args = vec!["estimate", "--metric"];
        args.extend(&r);
        let o = kerdisc(&args);
        assert_eq!(code(&o), 0, "{r:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(json(&o)["value"].as_f64().unwrap().is_finite(), "{r:?}");
    }
}

const SWEEP: &str = r#"
dims = [2, 4, 8]
slice_counts = [4, 8, 16]
seeds = [1, 2]
n = 32
estimator = { kind = "sliced-mmd" }
prior = { kind = "gaussian" }
"#;

#[test]
fn sweep_grid_cardinality_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    std::fs::write(&cfg, SWEEP).unwrap();
    let o = kerdisc(&["sweep", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let rows = kerdisc_cli::sweep::parse_sweep(&text).unwrap();
    assert_eq!(rows.len(), 18);
    assert_eq!((rows[0].dim, rows[0].slices, rows[0].seed), (2, 4, 1));
    assert_eq!((rows[17].dim, rows[17].slices, rows[17].seed), (8, 16, 2));

    let out = dir.path().join("out.csv");
    let o = Command::new(env!("CARGO_BIN_EXE_kerdisc"))
        .args(["sweep", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .env("KERDISC_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let again = kerdisc_cli::sweep::parse_sweep(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let key = |r: &kerdisc_cli::sweep::SweepRow| (r.dim, r.slices, r.seed, r.rep, r.value.to_bits());
    assert_eq!(rows.iter().map(key).collect::<Vec<_>>(), again.iter().map(key).collect::<Vec<_>>());
}

#[test]
fn sweep_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    std::fs::write(&cfg, SWEEP.replace("dims = [2, 4, 8]", "dims = []")).unwrap();
    let o = kerdisc(&["sweep", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("dims"));
    std::fs::write(&cfg, SWEEP.replace("n = 32", "n = 32\nsedes = [1]")).unwrap();
    let o = kerdisc(&["sweep", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("sedes"));
    assert_eq!(code(&kerdisc(&["sweep", dir.path().join("none.toml").to_str().unwrap()])), 3);
}

#[test]
fn sweep_accepts_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.json");
    std::fs::write(
        &cfg,
        r#"{"dims":[3],"slice_counts":[4],"seeds":[0,1,2],"n":16,"repetitions":2,
            "estimator":{"kind":"sliced-ksd"},"prior":{"kind":"laplace"}}"#,
    )
    .unwrap();
    let o = kerdisc(&["sweep", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(kerdisc_cli::sweep::parse_sweep(&String::from_utf8(o.stdout).unwrap()).unwrap().len(), 6);
}

fn flow_cfg(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("flow.toml");
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn flow_steps_zero_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = flow_cfg(
        dir.path(),
        "init='collapsed'\ndim=2\nn=16\nsteps=0\nstep_size=0.1\nestimator={kind='bhep'}\nprior={kind='gaussian'}",
    );
    let o = kerdisc(&["flow", p.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("steps"));
}

#[test]
fn flow_lambda_zero_is_constant() {
    let dir = tempfile::tempdir().unwrap();
    let p = flow_cfg(
        dir.path(),
        "init='gaussian'\ndim=3\nn=32\nsteps=50\nstep_size=0.1\nlambda=0.0\nlog_every=10\nestimator={kind='bhep'}\nprior={kind='gaussian'}",
    );
    let o = kerdisc(&["flow", p.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 6);
    let tail = |l: &str| l.split_once(',').unwrap().1.to_string();
    assert!(rows.iter().all(|r| tail(r) == tail(rows[0])), "{text}");
}

#[test]
fn flow_collapsed_bhep_spreads() {
    let dir = tempfile::tempdir().unwrap();
    let p = flow_cfg(
        dir.path(),
        "init='collapsed'\ndim=4\nn=128\nsteps=2000\nstep_size=0.5\nlog_every=500\nestimator={kind='bhep'}\nprior={kind='gaussian'}",
    );
    let out = dir.path().join("traj.csv");
    let o = kerdisc(&["flow", p.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out).unwrap();
    let last = text.lines().last().unwrap();
    let var: f64 = last.rsplit(',').next().unwrap().parse().unwrap();
    assert!((0.7..=1.3).contains(&var), "{last}");
}

#[test]
fn flow_divergence_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let p = flow_cfg(
        dir.path(),
        "init='gaussian'\ndim=2\nn=16\nsteps=200\nstep_size=1e200\nestimator={kind='ksd', kernel={kind='gaussian', gamma=0.5}}\nprior={kind='gaussian'}",
    );
    assert_eq!(code(&kerdisc(&["flow", p.to_str().unwrap()])), 4);
}

#[test]
fn selftest_filter_and_fault() {
    let o = kerdisc(&["selftest", "--fast", "--filter", "stein"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let text = String::from_utf8(o.stdout).unwrap();
    let checks: Vec<&str> = text.lines().filter(|l| l.starts_with("PASS") || l.starts_with("FAIL")).collect();
    assert_eq!(checks.len(), 12);
    assert!(checks.iter().all(|l| l.contains("stein-null/")));

    let o = kerdisc(&["selftest", "--fast", "--filter", "quadrature", "--inject-fault", "quadrature/gauss-hermite-u=21"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL  quadrature/gauss-hermite-u=21"));
    assert!(String::from_utf8_lossy(&o.stderr).contains("quadrature/gauss-hermite-u=21"));

    assert_eq!(code(&kerdisc(&["selftest", "--filter", "no-such-check"])), 2);
}

#[test]
fn outputs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let p = flow_cfg(
        dir.path(),
        "init='collapsed'\ndim=3\nn=32\nsteps=20\nstep_size=0.2\nviews=2\nlog_every=5\nestimator={kind='sliced-mmd'}\nprior={kind='gaussian'}\nslices=32",
    );
    let a = kerdisc(&["flow", p.to_str().unwrap()]);
    let b = kerdisc(&["flow", p.to_str().unwrap()]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn help_and_version_exit_0() {
    assert_eq!(code(&kerdisc(&["--help"])), 0);
    assert_eq!(code(&kerdisc(&["--version"])), 0);
    assert_eq!(code(&kerdisc(&[])), 2);
}
