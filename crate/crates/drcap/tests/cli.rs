use std::path::Path;
use std::process::{Command, Output};

use drcap::io::{read_scenarios, Table};

const SMALL: [&str; 4] = ["--set", "synth.n=6", "--set", "synth.t=40"];

fn drcap(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drcap"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) {
    let o = drcap(out, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

#[test]
fn same_seed_same_bytes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [a.path(), b.path()] {
        for cmd in ["synth", "compare", "rho-sweep", "negotiate"] {
            let mut args = vec![cmd, "--seed", "4"];
            args.extend(SMALL);
            ok(dir, &args);
        }
    }
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert_eq!(fa.len(), 6);
    assert_eq!(fa, fb);
}

#[test]
fn emitted_csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["synth", "compare", "rho-sweep", "negotiate"] {
        let mut args = vec![cmd];
        args.extend(SMALL);
        ok(dir.path(), &args);
    }
    for (name, bytes) in files(dir.path()) {
        let t = Table::from_csv(&bytes, Path::new(&name)).unwrap();
        assert_eq!(t.to_csv(), bytes, "{name}");
    }
    let s = read_scenarios(&dir.path().join("scenarios.csv")).unwrap();
    assert_eq!((s.customers(), s.len()), (6, 40));
}

#[test]
fn grid_sizes_drive_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["compare", "--set", "compare.p_cap_grid=0,0.05,0.1,0.2,0.4"];
    args.extend(SMALL);
    ok(dir.path(), &args);
    let t = Table::read(&dir.path().join("compare.csv")).unwrap();
    assert_eq!(t.header, ["p_cap", "cost_OPT", "cost_LIN", "cost_SEQ"]);
    assert_eq!(t.rows.len(), 5);
    for r in &t.rows {
        let v: Vec<f64> = r.iter().map(|x| x.parse().unwrap()).collect();
        assert!(v[1] <= v[2] * (1.0 + 1e-6) && v[1] <= v[3] * (1.0 + 1e-6));
    }

    let mut args = vec![
        "rho-sweep",
        "--set",
        "rho_sweep.a_rsd=0.2,0.5,1",
        "--set",
        "rho_sweep.grid=0,0.5,1",
    ];
    args.extend(SMALL);
    ok(dir.path(), &args);
    let sweeps: Vec<_> = files(dir.path())
        .into_iter()
        .filter(|(n, _)| n.starts_with("rho_sweep"))
        .collect();
    assert_eq!(sweeps.len(), 3);
    for (name, bytes) in sweeps {
        let t = Table::from_csv(&bytes, Path::new(&name)).unwrap();
        assert_eq!(t.header, ["rho", "social_cost", "mean_optout_fraction"]);
        assert_eq!(t.rows.len(), 3);
    }
}

#[test]
fn annualize_scales_costs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut args = vec!["compare"];
    args.extend(SMALL);
    ok(a.path(), &args);
    args.extend(["--annualize", "8760"]);
    ok(b.path(), &args);
    let ta = Table::read(&a.path().join("compare.csv")).unwrap();
    let tb = Table::read(&b.path().join("compare.csv")).unwrap();
    let (x, y) = (ta.f64_column("cost_LIN").unwrap(), tb.f64_column("cost_LIN").unwrap());
    for (u, v) in x.iter().zip(&y) {
        assert!((u * 8760.0 - v).abs() <= 1e-9 * v.abs().max(1.0));
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = drcap(dir.path(), &["compare", "--set", "synth.n=0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("synth.n"));

    let o = drcap(dir.path(), &["compare", "--set", "no.such.key=1"]);
    assert_eq!(o.status.code(), Some(2));

    let o = drcap(dir.path(), &["compare", "--set", "compare.p_cap_grid=0.2,0.1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("compare.p_cap_grid"));

    let mut args = vec!["negotiate", "--set", "negotiate.max_rounds=3"];
    args.extend(SMALL);
    let o = drcap(dir.path(), &args);
    assert_eq!(o.status.code(), Some(3));
    let summary = Table::read(&dir.path().join("negotiation_summary.csv")).unwrap();
    assert_eq!(summary.rows[0][0], "not_converged");

    let o = drcap(
        dir.path(),
        &[
            "compare",
            "--set",
            "source=scenarios",
            "--set",
            "scenarios.path=/nonexistent/s.csv",
        ],
    );
    assert_eq!(o.status.code(), Some(4));

    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "synth.n = 4\nthis line is junk\n").unwrap();
    let o = drcap(dir.path(), &["synth", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains('2'));
}

#[test]
fn synth_then_validate_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["synth"];
    args.extend(SMALL);
    ok(dir.path(), &args);
    let path = dir.path().join("scenarios.csv");
    let src = format!("scenarios.path={}", path.display());
    let o = drcap(dir.path(), &["validate", "--set", "source=scenarios", "--set", &src]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "ok");

    // break the D = sum delta - r identity in one row
    let mut t = Table::read(&path).unwrap();
    t.rows[3][2] = "99".into();
    t.write(&path).unwrap();
    let o = drcap(dir.path(), &["validate", "--set", "source=scenarios", "--set", &src]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stdout.is_empty());
}

#[test]
fn trace_source() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("timestamp,customer_id,load_kw\n");
    for c in 0..3 {
        for t in 0..96 {
            csv += &format!("{},{c},{}\n", t * 3600, 1.0 + ((t * 7 + c * 3) % 11) as f64 * 0.1);
        }
    }
    let traces = dir.path().join("traces.csv");
    std::fs::write(&traces, csv).unwrap();
    let src = format!("traces.path={}", traces.display());
    ok(dir.path(), &["synth", "--set", "source=traces", "--set", &src]);
    let s = read_scenarios(&dir.path().join("scenarios.csv")).unwrap();
    assert_eq!((s.customers(), s.len()), (3, 96));
}
