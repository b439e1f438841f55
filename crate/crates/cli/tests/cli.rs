use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lsem_cli::output::RunManifest;

fn lsem(args: &[&str], env: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lsem"));
    cmd.args(args).env_remove("LSEM_OUT_DIR");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

struct Case {
    dir: tempfile::TempDir,
}

impl Case {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("config.toml"), config).unwrap();
        Self { dir }
    }

    fn config(&self) -> PathBuf {
        self.dir.path().join("config.toml")
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, sub: &str, out: &str, extra: &[&str]) -> Output {
        let config = self.config();
        let out = self.out(out);
        let mut args = vec![sub, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        lsem(&args, &[])
    }

    fn manifest(&self, out: &str) -> RunManifest {
        let text = std::fs::read_to_string(self.out(out).join("manifest.json")).unwrap();
        serde_json::from_str(&text).unwrap()
    }
}

fn ok(o: &Output) {
    assert!(
        o.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

const TEST1: &str = r#"
problem = "test1"
[mesh]
order = 10
[time]
tau = 0.015625
t_final = 1.0
[noise]
sigma = 0.0
"#;

#[test]
fn deterministic_run_reports_comparable_error() {
    let c = Case::new(TEST1);
    ok(&c.run("run", "o", &[]));
    let (header, rows) = read_csv(&c.out("o").join("errors.csv"));
    assert_eq!(header, ["tau", "l2", "linf", "order"]);
    assert_eq!(rows.len(), 1);
    let linf: f64 = rows[0][2].parse().unwrap();
    assert!(linf > 3.3204e-4 / 3.0 && linf < 3.3204e-4 * 3.0, "linf {linf}");
    let m = c.manifest("o");
    let files: Vec<&str> = m.outputs.iter().map(|o| o.file.as_str()).collect();
    assert_eq!(files, ["config.resolved.toml", "final_state.csv", "errors.csv"]);
    for o in &m.outputs {
        let bytes = std::fs::read(c.out("o").join(&o.file)).unwrap();
        assert_eq!(lsem_cli::output::sha256_hex(&bytes), o.sha256);
    }
}

#[test]
fn config_errors_exit_with_two() {
    let c = Case::new("problem = \"test1\"\n[time]\ntau = 0.5\n");
    let o = c.run("run", "o", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("t_final"));

    let c = Case::new(&format!("{TEST1}[mesh2]\norder = 3\n"));
    let o = c.run("run", "o", &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("mesh2"));

    let c = Case::new(&TEST1.replace("order = 10", "order = 10\nnodes = 3"));
    assert_eq!(c.run("run", "o", &[]).status.code(), Some(2));

    let missing = lsem(&["run", "--config", "/nonexistent/config.toml"], &[]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_with_three() {
    let c = Case::new(
        "problem = \"test1\"\n[mesh]\norder = 4\n[time]\ntau = 0.1\nt_final = 0.3\n\
         [noise]\nsigma = 1e300\n[ensemble]\nsamples = 2\n",
    );
    let o = c.run("run", "o", &[]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sample 0"));
}

const ENSEMBLE: &str = r#"
problem = "test2_smooth"
[mesh]
order = 6
[time]
tau = 0.05
t_final = 0.5
snapshot_times = [0.0, 0.25]
[ensemble]
samples = 24
"#;

#[test]
fn repeated_runs_have_identical_checksums() {
    let c = Case::new(ENSEMBLE);
    ok(&c.run("run", "a", &["--workers", "1"]));
    ok(&c.run("run", "b", &["--workers", "1"]));
    let (a, b) = (c.manifest("a"), c.manifest("b"));
    assert_eq!(a.outputs, b.outputs);
    assert!(a.outputs.iter().any(|o| o.file == "ensemble.csv"));
    assert!(a.outputs.iter().any(|o| o.file == "snapshots.csv"));

    // The worker count only changes the resolved config, never the numbers.
    ok(&c.run("run", "c", &["--workers", "3"]));
    let cm = c.manifest("c");
    for name in ["final_state.csv", "ensemble.csv", "snapshots.csv"] {
        let get = |m: &RunManifest| m.outputs.iter().find(|o| o.file == name).unwrap().sha256.clone();
        assert_eq!(get(&a), get(&cm), "{name}");
    }
}

#[test]
fn manifest_config_reruns_to_identical_outputs() {
    let c = Case::new(ENSEMBLE);
    ok(&c.run("run", "first", &["--seed", "99"]));
    let m = c.manifest("first");
    assert!(m.config.contains("seed = 99"));
    let again = Case::new(&m.config);
    ok(&again.run("run", "second", &[]));
    assert_eq!(m.outputs, again.manifest("second").outputs);

    ok(&c.run("run", "other_seed", &["--seed", "100"]));
    let other = c.manifest("other_seed");
    let get = |m: &RunManifest| m.outputs.iter().find(|o| o.file == "final_state.csv").unwrap().sha256.clone();
    assert_ne!(get(&m), get(&other));
}

#[test]
fn environment_overrides_config_output_dir() {
    let c = Case::new(&format!("{TEST1}[output]\ndir = \"{}\"\n", c_out_placeholder()));
    let env_dir = c.out("from_env");
    let config = c.config();
    let o = lsem(&["spectrum-dump", "--config", config.to_str().unwrap()], &[("LSEM_OUT_DIR", &env_dir)]);
    ok(&o);
    assert!(env_dir.join("spectrum.csv").exists());
    assert!(env_dir.join("manifest.json").exists());

    let flag_dir = c.out("from_flag");
    let o = lsem(
        &["spectrum-dump", "--config", config.to_str().unwrap(), "--out", flag_dir.to_str().unwrap()],
        &[("LSEM_OUT_DIR", &env_dir)],
    );
    ok(&o);
    assert!(flag_dir.join("spectrum.csv").exists());
}

fn c_out_placeholder() -> String {
    std::env::temp_dir().join("lsem-never-used").display().to_string()
}

#[test]
fn spectrum_dump_layout() {
    let c = Case::new(TEST1);
    ok(&c.run("spectrum-dump", "o", &[]));
    let (header, rows) = read_csv(&c.out("o").join("spectrum.csv"));
    assert_eq!(header, ["j", "k", "q"]);
    assert_eq!(rows.len(), 64);
    assert_eq!(rows[0], ["1", "1", "2.5e-1"]);
    let q: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(q.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn table1_rows_and_orders() {
    let c = Case::new(&format!("{TEST1}[table1]\ntaus = [0.015625]\norders = [6]\n"));
    ok(&c.run("table1", "single", &[]));
    let (header, rows) = read_csv(&c.out("single").join("table1_N6.csv"));
    assert_eq!(header, ["tau", "l2", "linf", "order"]);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][3], "");

    let c = Case::new(TEST1);
    ok(&c.run("table1", "default", &[]));
    let m = c.manifest("default");
    assert_eq!(m.timings.len(), 10);
    for n in [10, 20] {
        let (_, rows) = read_csv(&c.out("default").join(format!("table1_N{n}.csv")));
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[0][3], "");
        for r in &rows[1..] {
            let order: f64 = r[3].parse().unwrap();
            assert!((1.8..=2.1).contains(&order), "N={n} tau={} order {order}", r[0]);
        }
    }

    let c = Case::new(&TEST1.replace("test1", "test2_smooth"));
    assert_eq!(c.run("table1", "o", &[]).status.code(), Some(2));
}

#[test]
fn spatial_curves() {
    let c = Case::new(&format!(
        "{}[spatial]\norders = [4, 6, 8, 10]\ntaus = [0.001]\n",
        TEST1.replace("tau = 0.015625", "tau = 0.001").replace("t_final = 1.0", "t_final = 0.1")
    ));
    ok(&c.run("spatial", "o", &[]));
    let (header, rows) = read_csv(&c.out("o").join("spatial_tau1e-3.csv"));
    assert_eq!(header, ["N", "l2", "linf", "order"]);
    let n: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(n, ["4", "6", "8", "10"]);
    let linf: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(linf.windows(2).all(|w| w[1] < w[0]), "{linf:?}");

    let c = Case::new(&format!("{TEST1}[spatial]\norders = [6]\ntaus = [0.015625]\n"));
    ok(&c.run("spatial", "o", &[]));
    let (_, rows) = read_csv(&c.out("o").join("spatial_tau1.5625e-2.csv"));
    assert_eq!(rows.len(), 1);

    // Stochastic curves need a reference above every order.
    let c = Case::new(&format!(
        "{ENSEMBLE}[spatial]\norders = [4, 6]\ntaus = [0.05]\n[reference]\norder = 6\n"
    ));
    assert_eq!(c.run("spatial", "o", &[]).status.code(), Some(2));
}

#[test]
fn evolve_grid() {
    let c = Case::new(
        r#"
problem = "test2_smooth"
[mesh]
order = 10
[time]
tau = 0.05
t_final = 0.5
[ensemble]
samples = 8
[evolve]
times = [0.0, 0.25, 0.5]
grid = 121
"#,
    );
    ok(&c.run("evolve", "o", &[]));
    let (header, rows) = read_csv(&c.out("o").join("evolve.csv"));
    assert_eq!(header, ["t", "x", "y", "u"]);
    assert_eq!(rows.len(), 3 * 121 * 121);
    let parsed: Vec<[f64; 4]> = rows
        .iter()
        .map(|r| std::array::from_fn(|i| r[i].parse().unwrap()))
        .collect();
    let times: std::collections::BTreeSet<String> = rows.iter().map(|r| r[0].clone()).collect();
    assert_eq!(times.len(), 3);
    let mut max_dev = 0.0f64;
    for &[t, x, y, u] in &parsed {
        let on_edge = x == 0.0 || y == 0.0 || x == 1.0 || y == 1.0;
        if on_edge {
            assert!(u.abs() < 1e-14, "boundary value {u} at ({x}, {y}, {t})");
        }
        if t == 0.0 {
            max_dev = max_dev.max((u - x * (1.0 - x) * y * (1.0 - y)).abs());
        }
    }
    assert!(max_dev <= 1e-6, "initial deviation {max_dev}");
}
