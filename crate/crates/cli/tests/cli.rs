use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_caginalp"));
    c.env_remove("CAGINALP_LOG");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> (String, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    let rows = lines.map(|l| l.split(',').map(|c| c.parse::<f64>().unwrap()).collect()).collect();
    (header, rows)
}

const ODE: &str = r#"
[grid]
nodes = [11]
[time]
dt = 0.001
t_end = 1.0
[physics]
latent_heat = 1.0
u0 = { kind = "constant", value = 1.0 }
phi0 = { kind = "constant", value = 0.0 }
[nonlinearity]
kind = "zero"
"#;

const ZERO: &str = r#"
[grid]
nodes = [9]
[time]
dt = 0.05
t_end = 0.5
[physics]
u0 = { kind = "constant", value = 0.0 }
phi0 = { kind = "constant", value = 0.0 }
"#;

#[test]
fn zero_data_gives_zero_solution() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "zero.toml", ZERO);
    let out = dir.path().join("run");
    for method in ["stepping", "homotopy"] {
        let o = run(&[
            "solve",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--method",
            method,
            "--force",
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        for file in ["u.csv", "phi.csv"] {
            let (header, rows) = csv_rows(&out.join(file));
            assert_eq!(header, "t,x,value");
            assert_eq!(rows.len(), 11 * 9);
            assert!(rows.iter().all(|r| r[2] == 0.0));
        }
        let m = json(&out.join("manifest.json"));
        assert_eq!(m["method"], method);
        for key in ["config_hash", "iterations", "residual", "ledgers"] {
            assert!(m.get(key).is_some(), "manifest lacks {key}");
        }
    }
}

#[test]
fn spatially_constant_run_matches_ode() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "ode.toml", ODE);
    for method in ["homotopy", "stepping"] {
        let out = dir.path().join(method);
        let o = run(&["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--method", method]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let (_, u) = csv_rows(&out.join("u.csv"));
        let (_, phi) = csv_rows(&out.join("phi.csv"));
        let last_u = u.last().unwrap();
        let last_phi = phi.last().unwrap();
        assert!((last_u[0] - 1.0).abs() < 1e-12);
        let e = (-1.0f64).exp();
        assert!((last_u[2] - e).abs() < 1e-4, "{method}: u(1) = {}", last_u[2]);
        assert!((last_phi[2] - (1.0 - e)).abs() < 1e-4, "{method}: phi(1) = {}", last_phi[2]);
    }
}

#[test]
fn two_dimensional_rows_are_row_major() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "2d.toml",
        "[grid]\nextents = [1.0, 2.0]\nnodes = [3, 4]\n[time]\ndt = 0.1\nt_end = 0.2\n",
    );
    let out = dir.path().join("run");
    let o = run(&["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = csv_rows(&out.join("u.csv"));
    assert_eq!(header, "t,x,y,value");
    assert_eq!(rows.len(), 3 * 12);
    let xy: Vec<(f64, f64)> = rows.iter().take(5).map(|r| (r[1], r[2])).collect();
    let third = 2.0 / 3.0;
    assert_eq!(xy, [(0.0, 0.0), (0.0, third), (0.0, 2.0 * third), (0.0, 2.0), (0.5, 0.0)]);
}

#[test]
fn existing_run_needs_force() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "zero.toml", ZERO);
    let out = dir.path().join("run");
    let args = ["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    assert_eq!(code(&run(&args)), 0);
    let o = run(&args);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--force"));
    let mut forced = args.to_vec();
    forced.push("--force");
    assert_eq!(code(&run(&forced)), 0);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.toml");
    assert_eq!(code(&run(&["solve", "--config", missing.to_str().unwrap()])), 2);

    let typo = write_config(dir.path(), "typo.toml", "[solver]\nmethd = \"homotopy\"\n");
    assert_eq!(code(&run(&["solve", "--config", typo.to_str().unwrap()])), 2);

    let low_p = write_config(dir.path(), "p.toml", "[physics]\np = 1.5\n");
    let o = run(&["solve", "--config", low_p.to_str().unwrap(), "--allow-unverified-exponents"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn inadmissible_exponents_need_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "3d.toml",
        "[grid]\nextents = [1.0, 1.0, 1.0]\nnodes = [3, 3, 3]\n[time]\ndt = 0.1\nt_end = 0.1\n[physics]\nr = 9.0\n",
    );
    let out = dir.path().join("h");
    let base = ["check-hypotheses", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    let o = run(&base);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--allow-unverified-exponents"));
    let mut allowed = base.to_vec();
    allowed.push("--allow-unverified-exponents");
    assert_eq!(code(&run(&allowed)), 0);
}

fn reports(path: &Path) -> Vec<Value> {
    json(path).as_array().unwrap().clone()
}

fn report<'a>(rs: &'a [Value], name: &str) -> &'a Value {
    rs.iter().find(|r| r["hypothesis"] == name).unwrap_or_else(|| panic!("no {name} report"))
}

#[test]
fn hypotheses_for_builtins() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("dw");
    let o = run(&["check-hypotheses", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let rs = reports(&out.join("hypotheses.json"));
    let h1 = report(&rs, "H1");
    assert!((h1["constant_estimate"].as_f64().unwrap() - 0.5).abs() < 1e-3);
    assert_eq!(h1["verdict"], "pass");
    for r in &rs {
        for key in ["hypothesis", "verdict", "constant_estimate", "witness", "box", "samples"] {
            assert!(r.get(key).is_some(), "report lacks {key}");
        }
    }

    let cfg = write_config(dir.path(), "lin.toml", "[nonlinearity]\nkind = \"linear\"\nslope = -2.0\n");
    let out = dir.path().join("lin");
    assert_eq!(code(&run(&["check-hypotheses", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])), 0);
    let rs = reports(&out.join("hypotheses.json"));
    assert!((report(&rs, "H1")["constant_estimate"].as_f64().unwrap() + 2.0).abs() < 1e-9);
    assert!(report(&rs, "H4")["constant_estimate"].as_f64().unwrap().abs() < 1e-15);
}

#[test]
fn m4_violation_is_witnessed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "pl.toml",
        "[nonlinearity]\nkind = \"power_law\"\nr1 = 3.0\nr2 = 1.0\n[hypotheses]\nbox = 20.0\nm4 = { alpha = 1.0, beta = 1.0, r = 4.0 }\n",
    );
    let out = dir.path().join("pl");
    let o = run(&["check-hypotheses", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rs = reports(&out.join("hypotheses.json"));
    let m4 = report(&rs, "M4");
    assert_eq!(m4["verdict"], "fail");
    assert!(m4["witness"]["z1"].as_f64().unwrap().abs() > 1.0);
}

fn verify(dir: &Path, name: &str, body: &str) -> (i32, Vec<Value>) {
    let cfg = write_config(dir, &format!("{name}.toml"), body);
    let out = dir.join(name);
    let o = run(&["verify", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    (code(&o), json(&out.join("suite.json")).as_array().unwrap().clone())
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (c, rows) = verify(dir.path(), "empty", "[verify]\ncorpus = \"empty\"\n");
    assert_eq!(c, 0);
    assert!(rows.is_empty());

    let (c, rows) = verify(dir.path(), "broken", "[verify]\ncorpus = \"broken\"\n");
    assert_eq!(c, 4);
    assert!(rows.iter().any(|r| r["pass"] == false && r["criterion"] == 1));

    let (c, rows) = verify(dir.path(), "ode", "[verify]\ncriteria = [1, 6]\n");
    assert_eq!(c, 0);
    for r in &rows {
        for key in ["case_id", "criterion", "measured", "bound", "pass"] {
            assert!(r.get(key).is_some(), "row lacks {key}");
        }
    }

    let o = run(&[
        "verify",
        "--config",
        write_config(dir.path(), "bad.toml", "[verify]\ncriteria = [11]\n").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn plotdata_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "ode.toml", &ODE.replace("dt = 0.001", "dt = 0.01"));
    let out = dir.path().join("run");
    assert_eq!(code(&run(&["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])), 0);
    let o = bin().env("CAGINALP_LOG", "warn").args(["plotdata", out.to_str().unwrap()]).output().unwrap();
    assert_eq!(code(&o), 0);
    assert!(!String::from_utf8_lossy(&o.stderr).contains("differ"), "{}", String::from_utf8_lossy(&o.stderr));

    let (header, rows) = csv_rows(&out.join("timeseries.csv"));
    assert_eq!(header, "t,u_l2,phi_l2,u_mean,phi_mean,conserved,drift");
    assert_eq!(rows.len(), 101);
    let m = json(&out.join("manifest.json"));
    let stored = &m["ledgers"]["frame_norms"];
    for (k, row) in rows.iter().enumerate() {
        assert_eq!(row[0], stored["t"][k].as_f64().unwrap());
        assert_eq!(row[1], stored["u_l2"][k].as_f64().unwrap());
        assert_eq!(row[5], stored["conserved"][k].as_f64().unwrap());
        assert!(row[6].abs() < 1e-12);
    }
    let (header, _) = csv_rows(&out.join("residuals.csv"));
    assert_eq!(header, "lambda,iter,residual,omega,accepted");
}

#[test]
fn plotdata_of_zero_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "zero.toml", ZERO);
    let out = dir.path().join("run");
    assert_eq!(code(&run(&["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])), 0);
    assert_eq!(code(&run(&["plotdata", "--out", out.to_str().unwrap()])), 0);
    let (_, rows) = csv_rows(&out.join("timeseries.csv"));
    assert!(rows.iter().all(|r| r[1..].iter().all(|v| *v == 0.0)));
}

#[test]
fn plotdata_needs_a_run() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&["plotdata", dir.path().join("nothing").to_str().unwrap()])), 2);
}

#[test]
fn hash_ignores_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_config(dir.path(), "a.toml", &format!("{ZERO}\n[output]\ndir = \"x\"\n"));
    let b = write_config(dir.path(), "b.toml", ZERO);
    let mut hashes = Vec::new();
    for (cfg, name) in [(a, "ra"), (b, "rb")] {
        let out = dir.path().join(name);
        assert_eq!(code(&run(&["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])), 0);
        hashes.push(json(&out.join("manifest.json"))["config_hash"].as_str().unwrap().to_string());
    }
    assert_eq!(hashes[0], hashes[1]);
    assert_eq!(hashes[0].len(), 64);
}

#[test]
fn seed_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "zero.toml", ZERO);
    let out = dir.path().join("run");
    assert_eq!(
        code(&run(&["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "7"])),
        0
    );
    assert_eq!(json(&out.join("manifest.json"))["ledgers"]["seed"], 7);
}

#[test]
fn shipped_configs_solve() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let dir = tempfile::tempdir().unwrap();
    let mut seen = 0;
    for entry in fs::read_dir(configs).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let out = dir.path().join(path.file_stem().unwrap());
            let o = run(&["solve", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
            assert_eq!(code(&o), 0, "{}: {}", path.display(), String::from_utf8_lossy(&o.stderr));
            seen += 1;
        }
    }
    assert!(seen >= 3);
}
