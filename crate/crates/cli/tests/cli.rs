use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use absdyn_core::measures::{GridMeasure, Measure};
use tempfile::TempDir;

fn absdyn(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_absdyn")).arg("--out").arg(out).args(args).output().expect("binary runs")
}

fn write_measure(dir: &Path, name: &str, m: Measure) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string(&m).unwrap()).unwrap();
    path
}

/// Data rows (comment lines and the header dropped) split into cells.
fn rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().find(|l| !l.starts_with('#')).unwrap().to_string()
}

fn error_record(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stderr).expect("stderr holds a JSON error record")
}

fn csv_files(dir: &Path) -> usize {
    fs::read_dir(dir)
        .map(|d| d.filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "csv")).count())
        .unwrap_or(0)
}

#[test]
fn drift_example_from_a_measure_file() {
    let dir = TempDir::new().unwrap();
    let exp1 = write_measure(dir.path(), "exp1.json", GridMeasure::exponential(1.0, 32.0, 1 << 19).unwrap().into());
    let out = absdyn(dir.path(), &["drift", "--mu", exp1.to_str().unwrap(), "--ymax", "6", "--n", "512"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = dir.path().join("drift.csv");
    assert_eq!(header(&csv), "y,U,y_minus_E,identity");
    let r = rows(&csv);
    assert_eq!(r.len(), 512);
    let u0: f64 = r[0][1].parse().unwrap();
    assert!((u0 - 1.0).abs() < 1e-9, "U(0) = {u0}");
}

#[test]
fn contract_example_decreases_strictly() {
    let dir = TempDir::new().unwrap();
    let out = absdyn(
        dir.path(),
        &["contract", "--mu", "exp:1", "--rho", "exp:2", "--pi", "exp:3", "--steps", "10", "--p", "1"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = dir.path().join("rates.csv");
    assert_eq!(header(&csv), "k,Wp,slope_so_far");
    let w: Vec<f64> = rows(&csv).iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(w.len(), 11);
    assert!(w.windows(2).all(|p| p[1] < p[0]), "{w:?}");
}

#[test]
fn missing_input_is_an_io_error_without_outputs() {
    let dir = TempDir::new().unwrap();
    let out = absdyn(dir.path(), &["drift", "--mu", "/nonexistent/exp1.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_record(&out)["kind"], "io");
    assert_eq!(csv_files(dir.path()), 0);
}

#[test]
fn malformed_measure_is_rejected() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"type":"atomic","atoms":[[0.0,0.5],[1.0,0.2]]}"#).unwrap();
    let out = absdyn(dir.path(), &["orbit", "--mu", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(error_record(&out)["kind"], "invalid_measure");
    assert_eq!(csv_files(dir.path()), 0);
}

#[test]
fn failed_abc_check_is_a_tolerance_error() {
    let dir = TempDir::new().unwrap();
    // C = 1 with A = 0.9 asks the middle of every interval to hold all its mass
    let out = absdyn(dir.path(), &["abc", "--mu", "unif:0:1", "--grid-max", "1", "--a", "0.9", "--b", "1", "--c", "1"]);
    assert_eq!(out.status.code(), Some(5));
    assert_eq!(csv_files(dir.path()), 0);
}

#[test]
fn passing_abc_check_lists_its_probes() {
    let dir = TempDir::new().unwrap();
    let out = absdyn(
        dir.path(),
        &["abc", "--mu", "unif:0:1", "--grid-max", "1", "--a", "0.5", "--b", "1", "--c", "0.5", "--probes", "50"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(rows(&dir.path().join("abc.csv")).len(), 50);
}

#[test]
fn root_search_failure_is_numerical() {
    let dir = TempDir::new().unwrap();
    // U(y) > y on all of [0, 0.1]
    let out = absdyn(dir.path(), &["drift", "--mu", "exp:1", "--ymax", "0.1"]);
    assert_eq!(out.status.code(), Some(6));
    assert_eq!(error_record(&out)["kind"], "numerical");
}

#[test]
fn orbit_is_reproducible_and_seed_dependent() {
    let (a, b, c) = (TempDir::new().unwrap(), TempDir::new().unwrap(), TempDir::new().unwrap());
    let args = ["orbit", "--mu", "unif:0:1", "--grid-max", "1", "--x0", "0.3", "--steps", "200", "--seed", "9"];
    assert!(absdyn(a.path(), &args).status.success());
    assert!(absdyn(b.path(), &args).status.success());
    let mut other = args;
    other[10] = "10";
    assert!(absdyn(c.path(), &other).status.success());
    let read = |d: &TempDir| fs::read(d.path().join("orbit.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    let r = rows(&a.path().join("orbit.csv"));
    assert_eq!(r.len(), 201);
    assert_eq!(r[0], vec!["0", "0.3", ""]);
    // x_{k+1} = |x_k − θ_{k+1}|
    for k in 1..r.len() {
        let (prev, x, t): (f64, f64, f64) =
            (r[k - 1][1].parse().unwrap(), r[k][1].parse().unwrap(), r[k][2].parse().unwrap());
        assert_eq!(x, (prev - t).abs());
    }
}

#[test]
fn thread_count_does_not_change_outputs() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let args = ["contract", "--mu", "exp:1", "--rho", "exp:2", "--pi", "exp:3", "--steps", "3", "--grid-n", "512"];
    let mut one = args.to_vec();
    one.extend(["--threads", "1"]);
    assert!(absdyn(a.path(), &args).status.success());
    assert!(absdyn(b.path(), &one).status.success());
    assert_eq!(fs::read(a.path().join("rates.csv")).unwrap(), fs::read(b.path().join("rates.csv")).unwrap());
}

#[test]
fn lattice_reports_the_step() {
    let dir = TempDir::new().unwrap();
    let out = absdyn(dir.path(), &["lattice", "--thetas", "0.75,1.25", "--x0", "0.3", "--depth", "10"]);
    assert!(out.status.success());
    let text = fs::read_to_string(dir.path().join("lattice.csv")).unwrap();
    assert!(text.contains("# is_lattice=true"));
    assert!(text.contains("# step=0.25"));
    assert!(rows(&dir.path().join("lattice.csv")).iter().all(|r| r[2] == "true"));
}

#[test]
fn genfun_of_a_geometric_law_is_unimodular() {
    let dir = TempDir::new().unwrap();
    let out = absdyn(dir.path(), &["genfun", "--geometric", "0.5", "--m", "64"]);
    assert!(out.status.success());
    let csv = dir.path().join("genfun.csv");
    assert_eq!(header(&csv), "phi,abs_g,re_g,im_g");
    let r = rows(&csv);
    assert_eq!(r.len(), 64);
    assert!(r.iter().all(|c| (c[1].parse::<f64>().unwrap() - 1.0).abs() < 1e-9));
}

#[test]
fn genfun_reads_a_pmf_file() {
    let dir = TempDir::new().unwrap();
    let pmf = dir.path().join("half.json");
    fs::write(&pmf, r#"{"probs":[0.5,0.5]}"#).unwrap();
    let out = absdyn(dir.path(), &["genfun", "--pmf", pmf.to_str().unwrap(), "--m", "16"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(fs::read_to_string(dir.path().join("genfun.csv")).unwrap().contains("# passed=true"));
}

#[test]
fn selfmap_search_finds_half_half() {
    let dir = TempDir::new().unwrap();
    let out = absdyn(dir.path(), &["selfmap", "--search", "--support", "2", "--starts", "4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = rows(&dir.path().join("fixed_points.csv"));
    assert!(!r.is_empty());
    for c in &r {
        let p: Vec<f64> = c[3].split(';').map(|v| v.parse().unwrap()).collect();
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12, "{r:?}");
        assert!(p[2..].iter().all(|&v| v == 0.0), "{r:?}");
    }
}

#[test]
fn selfmap_iterates_atoms() {
    let dir = TempDir::new().unwrap();
    let out = absdyn(dir.path(), &["selfmap", "--mu", "atoms:0@0.5,2@0.5", "--steps", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = rows(&dir.path().join("selfmap.csv"));
    assert_eq!(r.len(), 4);
    assert!(r.iter().all(|c| c[1] == "1.0"));
}

#[test]
fn iterate_and_wasserstein_round_trip_through_json() {
    let dir = TempDir::new().unwrap();
    let out = absdyn(dir.path(), &["iterate", "--pi", "exp:2", "--mu", "exp:1", "--steps", "5", "--grid-n", "1024"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let fin = dir.path().join("iterate_final.json");
    let w1: Vec<f64> = rows(&dir.path().join("iterate.csv")).iter().map(|r| r[3].parse().unwrap()).collect();
    assert!(w1.windows(2).all(|p| p[1] < p[0]));
    let out = absdyn(dir.path(), &["wasserstein", "--a", fin.to_str().unwrap(), "--b", "exp:1", "--grid-n", "1024"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let w: f64 = rows(&dir.path().join("wasserstein.csv"))[0][1].parse().unwrap();
    assert!((w - w1[5]).abs() < 1e-12);
}

#[test]
fn scan_writes_one_row_per_candidate() {
    let dir = TempDir::new().unwrap();
    let out = absdyn(dir.path(), &["scan", "--factors", "1", "--grid", "4", "--len", "32"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!rows(&dir.path().join("scan.csv")).is_empty());
}
