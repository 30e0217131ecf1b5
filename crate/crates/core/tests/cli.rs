use std::path::Path;
use std::process::{Command, Output};
use tempfile::TempDir;

fn wavedecay(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wavedecay"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let out = dir.join("out");
    let text = format!("output = {}\n{body}", out.display());
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn zero_data_run_passes() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "zero.cfg",
        "[solver]\nT_max = 2\ndx = 0.1\n[data]\npreset = zero\n",
    );
    let o = wavedecay(&["run", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let out = dir.path().join("out");
    for f in ["series.csv", "audits.csv", "report.txt"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let series = std::fs::read_to_string(out.join("series.csv")).unwrap();
    assert!(series.starts_with(
        "t,E_total,E_loc,E_ext,l2_norm,weighted_ext,support_radius,morawetz_residual,K_integral"
    ));
    let audits = std::fs::read_to_string(out.join("audits.csv")).unwrap();
    assert!(audits.starts_with("name,paper_anchor,lhs,rhs,margin,pass"));
}

#[test]
fn failing_audit_exits_two() {
    // bump data in a coarse run over a long time fails the support audit
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "coarse.cfg",
        "[solver]\nT_max = 12\ndx = 0.25\n[audits]\nmorawetz = false\nantiderivative = false\n",
    );
    let o = wavedecay(&["run", &cfg]);
    assert_eq!(o.status.code(), Some(2), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("support_containment"));
}

#[test]
fn lipschitz_wiggle_too_large_is_an_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "lip.cfg",
        "[solver]\nT_max = 1\ndx = 0.1\n[coefficient]\nfamily = lipschitz\namplitude = 1.0\nr0 = 2\n",
    );
    let o = wavedecay(&["run", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("error"), "{}", stderr(&o));
}

#[test]
fn gamma_of_one_is_rejected_with_line() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "g.cfg",
        "[coefficient]\nfamily = remark42\ngamma0 = 1.0\n",
    );
    let o = wavedecay(&["run", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("gamma0") && err.contains("line 4"), "{err}");
}

#[test]
fn unknown_key_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "u.cfg", "[solver]\nsteps = 4\n");
    let o = wavedecay(&["run", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("steps"));
}

#[test]
fn certify_potential_writes_three_entries() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "p.cfg",
        "[solver]\nT_max = 20\ndx = 0.05\n[data]\npreset = dipole-velocity\n",
    );
    let o = wavedecay(&["certify-potential", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let audits = std::fs::read_to_string(dir.path().join("out/audits.csv")).unwrap();
    let rows: Vec<&str> = audits.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    for name in [
        "potential_far_gradient",
        "potential_gradient_energy",
        "potential_near_bounds",
    ] {
        assert!(rows.iter().any(|r| r.starts_with(name)), "{name}");
    }
}

#[test]
fn fit_reads_series() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "f.cfg",
        "[solver]\nT_max = 25\ndx = 0.2\nstride = 2\n",
    );
    let o = wavedecay(&["run", &cfg]);
    assert!(
        matches!(o.status.code(), Some(0) | Some(2)),
        "{}",
        stderr(&o)
    );
    let series = dir.path().join("out/series.csv");
    let o = wavedecay(&["fit", series.to_str().unwrap(), "--window", "5,25"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("log-log slope"));

    let o = wavedecay(&["fit", series.to_str().unwrap(), "--window", "25,5"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sweep_runs_each_value() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "s.cfg",
        "[solver]\nT_max = 3\ndx = 0.1\n[data]\npreset = zero\n",
    );
    let o = Command::new(env!("CARGO_BIN_EXE_wavedecay"))
        .args(["sweep", &cfg, "--param", "dx", "--values", "0.2,0.1"])
        .env("WAVEDECAY_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let out = dir.path().join("out");
    assert!(out.join("dx=0.2/series.csv").exists());
    assert!(out.join("dx=0.1/series.csv").exists());
    let summary = std::fs::read_to_string(out.join("sweep_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);

    let o = wavedecay(&["sweep", &cfg, "--param", "dx", "--values", "0.1,-1"]);
    assert_eq!(o.status.code(), Some(1));
}
