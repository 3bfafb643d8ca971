use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qrd_core::snapshot::read_snapshot;

fn qrd(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qrd"))
        .args(args)
        .env("QRD_OUTPUT_ROOT", root)
        .output()
        .expect("qrd runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn run(root: &Path, args: &[&str]) -> Output {
    let out = qrd(root, args);
    assert_eq!(out.status.code(), Some(0), "stdout:\n{}\nstderr:\n{}", stdout(&out), stderr(&out));
    out
}

fn csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    (header, rows)
}

const SEIRD: &str = "\
[model]
preset = seird_quadratic

[grid]
cells = 16, 16

[initial]
profile = spot
width = 0.1

[time]
t_end = 4
checkpoints = 200

[energy]
orders = 2, 3

[output]
directory = demo
snapshot_every = 100
";

#[test]
fn seird_demo_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "demo.ini", SEIRD);
    run(tmp.path(), &["simulate", cfg.to_str().unwrap()]);
    let dir = tmp.path().join("demo");

    let (header, rows) = csv(&dir.join("series.csv"));
    assert_eq!(rows.len(), 200);
    assert_eq!(header.len(), 13);
    assert!(rows.iter().all(|r| r.len() == header.len()));
    assert_eq!(rows[199][0], 4.0);
    assert!(rows.iter().all(|r| r[12] == 1.0), "dissipation flag dropped");

    let snaps: Vec<_> = fs::read_dir(dir.join("snapshots")).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(snaps.len(), 3);
    let last = read_snapshot(BufReader::new(fs::File::open(dir.join("snapshots/snap_00199.qdf")).unwrap())).unwrap();
    assert_eq!(last.t, 4.0);
    assert_eq!(last.counts, vec![16, 16]);
    assert!(last.field.min() >= 0.0);

    for panel in ["masses", "energies", "linf"] {
        assert!(dir.join(format!("plots/{panel}.dat")).exists());
    }
    let masses = fs::read_to_string(dir.join("plots/masses.dat")).unwrap();
    assert!(masses.lines().skip(1).all(|l| l.split_whitespace().count() == 5));

    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    let applicability = &summary["audit"]["report"]["applicability"];
    assert_eq!(applicability["theorem"], "mass_control");
    assert_eq!(applicability["uniform_in_time"], true);
    assert_eq!(summary["violations"].as_array().unwrap().len(), 0);
    assert!(summary.get("elapsed_seconds").is_none());

    let copy = fs::read_to_string(dir.join("config.ini")).unwrap();
    assert_eq!(qrd_cli::parse_str(&copy).unwrap(), qrd_cli::parse_str(SEIRD).unwrap());
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SEIRD.replace("checkpoints = 200", "checkpoints = 40");
    let cfg = write_config(tmp.path(), "demo.ini", &text);
    let read = |name: &str| fs::read(tmp.path().join("demo").join(name)).unwrap();
    run(tmp.path(), &["simulate", cfg.to_str().unwrap()]);
    let (series, summary, snap) = (read("series.csv"), read("summary.json"), read("snapshots/snap_00039.qdf"));
    run(tmp.path(), &["simulate", cfg.to_str().unwrap()]);
    assert_eq!(series, read("series.csv"));
    assert_eq!(summary, read("summary.json"));
    assert_eq!(snap, read("snapshots/snap_00039.qdf"));
}

#[test]
fn series_head_matches_golden_file() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "[model]\npreset = seird_original\n[grid]\ncells = 8, 8\n[initial]\nprofile = homogeneous\n\
                [time]\nt_end = 1\ncheckpoints = 5\n[energy]\norders = 2, 3\n[output]\ndirectory = golden\n";
    let cfg = write_config(tmp.path(), "golden.ini", text);
    run(tmp.path(), &["simulate", cfg.to_str().unwrap()]);
    let series = fs::read_to_string(tmp.path().join("golden/series.csv")).unwrap();
    let head: Vec<&str> = series.lines().take(2).collect();
    let golden = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden/series_head.csv")).unwrap();
    assert_eq!(head, golden.lines().collect::<Vec<_>>());
}

#[test]
fn without_reactions_masses_stay_constant() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "[model]\npreset = custom\n[custom]\nspecies = u, v\nreactions = 0; 0\nphi = total\ndiffusion = 1; 0.5\n\
                [grid]\ncells = 32\n[initial]\nvalues = 1 + cos(pi*x); 2 + x*x\n[time]\nt_end = 0.5\ncheckpoints = 21\n\
                [energy]\norders = 2\n[output]\ndirectory = still\n";
    let cfg = write_config(tmp.path(), "still.ini", text);
    run(tmp.path(), &["simulate", cfg.to_str().unwrap()]);
    let (header, rows) = csv(&tmp.path().join("still/series.csv"));
    for col in 1..=3 {
        assert!(header[col].starts_with("mass") || header[col] == "weighted_mass");
        let first = rows[0][col];
        for r in &rows {
            assert!((r[col] - first).abs() <= 1e-12 * first, "{} drifts: {} vs {first}", header[col], r[col]);
        }
    }
}

#[test]
fn panels_follow_the_request() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "[model]\npreset = heat\n[grid]\ncells = 16\n[time]\nt_end = 0.05\ncheckpoints = 5\n\
                [output]\ndirectory = one\npanels = linf\nsnapshot_every = 0\n";
    let cfg = write_config(tmp.path(), "one.ini", text);
    run(tmp.path(), &["simulate", cfg.to_str().unwrap()]);
    let files: Vec<_> = fs::read_dir(tmp.path().join("one/plots")).unwrap().collect();
    assert_eq!(files.len(), 1);
    assert!(!tmp.path().join("one/snapshots").exists());
}

#[test]
fn configuration_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write_config(tmp.path(), "bad.ini", "[time]\nt_end = -2\ncheckpionts = 10\n[energy]\norders = 1\n");
    let out = qrd(tmp.path(), &["simulate", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("T must be positive"), "{err}");
    assert!(err.contains("`checkpionts`") && err.contains("did you mean `checkpoints`"), "{err}");
    assert!(err.contains("p must satisfy"), "{err}");

    let offdiag = write_config(
        tmp.path(),
        "offdiag.ini",
        "[model]\npreset = custom\n[custom]\nspecies = u\nreactions = 0\ndiffusion = 1\ndiffusion_xy = 0.2\n\
         [grid]\ncells = 8, 8\n[initial]\nvalues = 1\n",
    );
    let out = qrd(tmp.path(), &["check", offdiag.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("non-diagonal"));

    let missing = qrd(tmp.path(), &["simulate", tmp.path().join("nope.ini").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));
    let energy = qrd(tmp.path(), &["energy", bad.to_str().unwrap()]);
    assert_eq!(energy.status.code(), Some(2), "--p is required");
}

#[test]
fn integration_failure_exits_with_three_and_names_the_time() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "[model]\npreset = heat\n[grid]\ncells = 64\n[time]\nt_end = 0.1\ncheckpoints = 3\ndt_min = 0.01\n\
                [output]\ndirectory = stiff\n";
    let cfg = write_config(tmp.path(), "stiff.ini", text);
    let out = qrd(tmp.path(), &["simulate", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("integration failed at t = 0"), "{}", stderr(&out));
}

#[test]
fn check_reports_violations_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let good = write_config(tmp.path(), "good.ini", "[grid]\ncells = 8, 8\n[output]\ndirectory = good\n");
    let out = run(tmp.path(), &["check", good.to_str().unwrap()]);
    assert!(stdout(&out).contains("quasi_positivity: passed_on_box"));

    let bad = write_config(tmp.path(), "bad.ini", "[rates]\na0 = 0.5\n[grid]\ncells = 8, 8\n[output]\ndirectory = bad\n");
    let out = qrd(tmp.path(), &["check", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("quasi_positivity: violated"), "{}", stdout(&out));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("bad/check.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["verdicts"]["quasi_positivity"]["status"], "violated");
}

#[test]
fn energy_reports_weights_per_order() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "e.ini", "[grid]\ncells = 8, 8\n[output]\ndirectory = energy\n");
    let out = run(tmp.path(), &["energy", cfg.to_str().unwrap(), "--p", "2,3"]);
    assert!(stdout(&out).contains("θ = [16.0, 2.0, 2.0, 2.0]"), "{}", stdout(&out));
    assert!(stdout(&out).contains("θ = [64.0, 2.0, 2.0, 2.0]"), "{}", stdout(&out));
    let bad = qrd(tmp.path(), &["energy", cfg.to_str().unwrap(), "--p", "1"]);
    assert_eq!(bad.status.code(), Some(2));
}

fn orders(root: &Path) -> (Vec<Option<f64>>, Vec<Option<f64>>) {
    let table: serde_json::Value = serde_json::from_str(&fs::read_to_string(root.join("converge.json")).unwrap()).unwrap();
    let levels = table["levels"].as_array().unwrap();
    (levels.iter().map(|l| l["error"].as_f64()).collect(), levels.iter().map(|l| l["order"].as_f64()).collect())
}

#[test]
fn heat_grid_study_is_second_order() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "[model]\npreset = heat\n[grid]\ncells = 32\n[initial]\nprofile = heat\n[time]\nt_end = 0.1\n\
                [output]\ndirectory = heat\n";
    let cfg = write_config(tmp.path(), "heat.ini", text);
    run(tmp.path(), &["converge", cfg.to_str().unwrap(), "--levels", "3"]);
    let (errors, orders) = orders(&tmp.path().join("heat"));
    assert_eq!(errors.len(), 3);
    let orders: Vec<f64> = orders.into_iter().flatten().collect();
    assert_eq!(orders.len(), 2);
    assert!(orders.iter().all(|o| (1.8..=2.2).contains(o)), "{orders:?}");
}

#[test]
fn seird_self_convergence() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "[grid]\ncells = 32\n[initial]\nprofile = spot\nwidth = 0.1\n[time]\nt_end = 1\n[output]\ndirectory = self\n";
    let cfg = write_config(tmp.path(), "self.ini", text);
    run(tmp.path(), &["converge", cfg.to_str().unwrap(), "--levels", "4"]);
    let (_, orders) = orders(&tmp.path().join("self"));
    let orders: Vec<f64> = orders.into_iter().flatten().collect();
    assert_eq!(orders.len(), 2);
    assert!(orders.iter().all(|o| *o >= 0.9), "{orders:?}");
}

#[test]
fn zero_solution_has_zero_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "[model]\npreset = custom\n[custom]\nspecies = u\nreactions = -u\ndiffusion = 1\n[grid]\ncells = 8\n\
                [initial]\nvalues = 0\n[time]\nt_end = 0.1\n[output]\ndirectory = zero\n";
    let cfg = write_config(tmp.path(), "zero.ini", text);
    run(tmp.path(), &["converge", cfg.to_str().unwrap(), "--levels", "3"]);
    let (errors, orders) = orders(&tmp.path().join("zero"));
    assert_eq!(errors.into_iter().flatten().collect::<Vec<_>>(), vec![0.0, 0.0]);
    assert!(orders.iter().all(Option::is_none));
}

#[test]
fn epsilon_study_gaps_shrink() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "[grid]\ncells = 64\n[time]\nt_end = 1\ncheckpoints = 21\n[output]\ndirectory = eps\n";
    let cfg = write_config(tmp.path(), "eps.ini", text);
    let out = run(tmp.path(), &["converge", cfg.to_str().unwrap(), "--study", "eps"]);
    assert!(stdout(&out).contains("strictly decreasing: true"), "{}", stdout(&out));
}

#[test]
fn absolute_directories_ignore_the_output_root() {
    let tmp = tempfile::tempdir().unwrap();
    let target = tmp.path().join("elsewhere");
    let text = format!(
        "[model]\npreset = heat\n[grid]\ncells = 8\n[time]\nt_end = 0.01\ncheckpoints = 3\n[output]\ndirectory = {}\n",
        target.display()
    );
    let cfg = write_config(tmp.path(), "abs.ini", &text);
    run(&tmp.path().join("root"), &["simulate", cfg.to_str().unwrap()]);
    assert!(target.join("series.csv").exists());
    assert!(!tmp.path().join("root").exists());
}
