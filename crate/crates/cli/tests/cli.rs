use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lssid::benchmark::two_mode_system;
use lssid::covariance::exact_covariances;
use lssid::realize::{innovation_form, FixedPointOptions};
use lssid_cli::format::{read_dataset, read_model, read_series, write_model, write_toml, CovarianceFile};
use tempfile::TempDir;

fn bench_file(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/benchmark").join(name)
}

fn lssid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lssid")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> Output {
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    o
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes a run configuration into `dir` and returns its path.
fn config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn simulate(dir: &Path, out: &str, seed: u64, length: usize) -> PathBuf {
    let model = bench_file("model.toml");
    let cfg = config(
        dir,
        &format!("{out}.toml"),
        &format!("model = {:?}\n[simulate]\nlength = {length}\n", s(&model)),
    );
    let out = dir.join(out);
    ok(lssid(&["simulate", "--config", s(&cfg), "--out", s(&out), "--seed", &seed.to_string()]));
    out
}

#[test]
fn shipped_model_is_the_benchmark() {
    assert_eq!(read_model(&bench_file("model.toml")).unwrap(), two_mode_system(1.5));
}

#[test]
fn simulate_writes_data_and_manifest() {
    let dir = TempDir::new().unwrap();
    let out = simulate(dir.path(), "sim", 42, 5000);
    let data = read_dataset(&out.join("data.csv")).unwrap();
    assert_eq!(data.len(), 5000);
    assert_eq!(read_series(&out.join("noise_free.csv")).unwrap().nrows(), 5000);
    let manifest: toml::Table = toml::from_str(&fs::read_to_string(out.join("manifest.toml")).unwrap()).unwrap();
    assert_eq!(manifest["seed"].as_integer(), Some(42));
    assert_eq!(manifest["model_sha256"].as_str().unwrap().len(), 64);

    let again = simulate(dir.path(), "again", 42, 5000);
    for f in ["data.csv", "noise_free.csv"] {
        assert_eq!(fs::read(out.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }
    let other = simulate(dir.path(), "other", 43, 5000);
    assert_ne!(fs::read(out.join("data.csv")).unwrap(), fs::read(other.join("data.csv")).unwrap());
}

#[test]
fn unstable_model_is_refused() {
    let dir = TempDir::new().unwrap();
    let mut m = two_mode_system(1.5);
    for a in &mut m.a {
        *a *= 3.0;
    }
    let model = dir.path().join("unstable.toml");
    write_model(&model, &m).unwrap();
    let cfg = config(dir.path(), "run.toml", "model = \"unstable.toml\"\n");
    let o = lssid(&["simulate", "--config", s(&cfg), "--out", s(&dir.path().join("out"))]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("stable"));
    assert!(!dir.path().join("out/data.csv").exists());
}

#[test]
fn config_errors_name_the_line() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "run.toml", "seed = 1\n[identify]\nn_x = 3\nselektion = \"search\"\n");
    let o = lssid(&["identify", "--config", s(&cfg)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));
}

#[test]
fn missing_dataset_is_an_io_error() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "run.toml", "[data]\ntrain = \"nowhere.csv\"\n[identify]\nn_x = 3\n");
    let o = lssid(&["identify", "--config", s(&cfg), "--out", s(&dir.path().join("out"))]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("nowhere.csv"), "{}", stderr(&o));
}

fn identify_config(dir: &Path, train: &Path, val: &Path) -> PathBuf {
    config(
        dir,
        "identify.toml",
        &format!(
            "[data]\ntrain = {:?}\nvalidation = {:?}\ntarget = {:?}\n[identify]\nn_x = 3\nprobabilities = [0.5, 0.5]\nselection = \"file:{}\"\n",
            s(&train.join("data.csv")),
            s(&val.join("data.csv")),
            s(&val.join("noise_free.csv")),
            s(&bench_file("selections.toml")),
        ),
    )
}

#[test]
fn identify_reports_fit_and_reruns_identically() {
    let dir = TempDir::new().unwrap();
    let train = simulate(dir.path(), "train", 1, 10_000);
    let val = simulate(dir.path(), "val", 1001, 500);
    let cfg = identify_config(dir.path(), &train, &val);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(lssid(&["identify", "--config", s(&cfg), "--out", s(&a)]));
    ok(lssid(&["identify", "--config", s(&cfg), "--out", s(&b)]));
    for f in ["model.toml", "selections.toml", "predictions.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }

    let report: toml::Table = toml::from_str(&fs::read_to_string(a.join("report.toml")).unwrap()).unwrap();
    let bfr = report["validation"]["bfr"].as_float().unwrap();
    assert!(bfr > 75.0, "{bfr}");
    // the effective configuration, defaults included
    assert_eq!(report["config"]["identify"]["estimator"].as_str(), Some("ls"));
    assert_eq!(report["config"]["identify"]["max_iter"].as_integer(), Some(5000));
    assert_eq!(report["config"]["seed"].as_integer(), Some(1));

    // validate reproduces the fit from the written model
    let vcfg = config(
        dir.path(),
        "validate.toml",
        &format!(
            "model = {:?}\n[data]\nvalidation = {:?}\ntarget = {:?}\nskip = {}\n",
            s(&a.join("model.toml")),
            s(&val.join("data.csv")),
            s(&val.join("noise_free.csv")),
            report["validation"]["skipped"].as_integer().unwrap(),
        ),
    );
    let v = dir.path().join("v");
    ok(lssid(&["validate", "--config", s(&vcfg), "--out", s(&v)]));
    let vreport: toml::Table = toml::from_str(&fs::read_to_string(v.join("report.toml")).unwrap()).unwrap();
    assert_eq!(vreport["validation"]["bfr"].as_float(), Some(bfr));
}

#[test]
fn estimate_then_realize_matches_identify() {
    let dir = TempDir::new().unwrap();
    let train = simulate(dir.path(), "train", 2, 5000);
    let val = simulate(dir.path(), "val", 1002, 500);
    let cfg = identify_config(dir.path(), &train, &val);
    for estimator in ["direct", "ls"] {
        let id = dir.path().join(format!("id-{estimator}"));
        let est = dir.path().join(format!("est-{estimator}"));
        let real = dir.path().join(format!("real-{estimator}"));
        ok(lssid(&["identify", "--config", s(&cfg), "--out", s(&id), "--estimator", estimator]));
        ok(lssid(&["estimate", "--config", s(&cfg), "--out", s(&est), "--estimator", estimator]));
        let rcfg = config(
            dir.path(),
            "realize.toml",
            &format!(
                "[data]\ncovariances = {:?}\n[identify]\nn_x = 3\nselection = \"file:{}\"\n",
                s(&est.join("covariances.toml")),
                s(&bench_file("selections.toml")),
            ),
        );
        ok(lssid(&["realize", "--config", s(&rcfg), "--out", s(&real)]));
        assert_eq!(
            read_model(&id.join("model.toml")).unwrap(),
            read_model(&real.join("model.toml")).unwrap(),
            "{estimator}"
        );
    }
}

#[test]
fn searched_selection_is_recorded() {
    let dir = TempDir::new().unwrap();
    let gen = two_mode_system(1.5);
    let cov = exact_covariances(&gen, 8).unwrap();
    write_toml(&dir.path().join("cov.toml"), &CovarianceFile::from_table(&cov)).unwrap();
    let cfg = config(
        dir.path(),
        "realize.toml",
        "[data]\ncovariances = \"cov.toml\"\n[identify]\nn_x = 3\nsearch_include_empty = true\nsearch_rank_tol = 0.1\n",
    );
    let out = dir.path().join("out");
    ok(lssid(&["realize", "--config", s(&cfg), "--out", s(&out), "--selection", "search"]));
    let report: toml::Table = toml::from_str(&fs::read_to_string(out.join("report.toml")).unwrap()).unwrap();
    assert_eq!(report["config"]["identify"]["selection"].as_str(), Some("search"));
    assert_eq!(report["selections"]["selection"]["alpha"].as_array().unwrap().len(), 3);
    assert_eq!(report["selections"]["selection_bar"]["beta"].as_array().unwrap().len(), 3);

    let (reference, _) = innovation_form(&gen, FixedPointOptions::default()).unwrap();
    let reference_path = dir.path().join("reference.toml");
    write_model(&reference_path, reference.as_switched()).unwrap();
    ok(lssid(&["compare", s(&out.join("model.toml")), s(&reference_path)]));

    // the recorded selections can be fed back in
    let again = dir.path().join("again");
    let sel = format!("file:{}", s(&out.join("selections.toml")));
    ok(lssid(&["realize", "--config", s(&cfg), "--out", s(&again), "--selection", &sel]));
    assert_eq!(fs::read(out.join("model.toml")).unwrap(), fs::read(again.join("model.toml")).unwrap());
}

#[test]
fn compare_recovers_transformations() {
    let dir = TempDir::new().unwrap();
    let model = bench_file("model.toml");
    let o = ok(lssid(&["compare", s(&model), s(&model)]));
    let report: toml::Table = toml::from_str(&String::from_utf8(o.stdout).unwrap()).unwrap();
    let t = report["t"].as_array().unwrap();
    for (i, row) in t.iter().enumerate() {
        for (j, x) in row.as_array().unwrap().iter().enumerate() {
            let expected = if i == j { 1.0 } else { 0.0 };
            assert!((x.as_float().unwrap() - expected).abs() < 1e-9);
        }
    }

    let moved = dir.path().join("moved.toml");
    ok(lssid(&[
        "transform",
        s(&model),
        "--matrix",
        s(&bench_file("transform.toml")),
        "--output",
        s(&moved),
    ]));
    let o = ok(lssid(&["compare", s(&model), s(&moved), "--tol", "1e-8"]));
    let report: toml::Table = toml::from_str(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(report["isomorphic"].as_bool(), Some(true));
    let t_file: toml::Table = toml::from_str(&fs::read_to_string(bench_file("transform.toml")).unwrap()).unwrap();
    for (row, expected) in report["t"].as_array().unwrap().iter().zip(t_file["t"].as_array().unwrap()) {
        for (x, y) in row.as_array().unwrap().iter().zip(expected.as_array().unwrap()) {
            assert!((x.as_float().unwrap() - y.as_float().unwrap()).abs() < 1e-8);
        }
    }
}

#[test]
fn compare_rejects_other_systems() {
    let dir = TempDir::new().unwrap();
    let model = bench_file("model.toml");
    let mut m = two_mode_system(1.5);
    m.c[(0, 0)] += 0.5;
    let other = dir.path().join("other.toml");
    write_model(&other, &m).unwrap();
    let o = lssid(&["compare", s(&model), s(&other)]);
    assert_eq!(code(&o), 5);
    let report: toml::Table = toml::from_str(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(report["isomorphic"].as_bool(), Some(false));

    let mut small = lssid::benchmark::two_mode_system(1.5);
    small.a = small.a.iter().map(|a| a.view((0, 0), (2, 2)).into_owned()).collect();
    small.b = small.b.iter().map(|b| b.rows(0, 2).into_owned()).collect();
    small.k = small.k.iter().map(|k| k.rows(0, 2).into_owned()).collect();
    small.c = small.c.columns(0, 2).into_owned();
    let small_path = dir.path().join("small.toml");
    write_model(&small_path, &small).unwrap();
    let o = lssid(&["compare", s(&model), s(&small_path)]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

#[test]
fn consistency_writes_a_table() {
    let dir = TempDir::new().unwrap();
    let cfg = config(
        dir.path(),
        "run.toml",
        &format!(
            "model = {:?}\n[identify]\nn_x = 3\nselection = \"file:{}\"\n[consistency]\nlengths = [2000, 20000]\nseeds = [1, 2, 3]\n",
            s(&bench_file("model.toml")),
            s(&bench_file("selections.toml")),
        ),
    );
    let out = dir.path().join("out");
    ok(lssid(&["consistency", "--config", s(&cfg), "--out", s(&out)]));
    let table = fs::read_to_string(out.join("consistency.csv")).unwrap();
    assert_eq!(table.lines().count(), 7);
    assert!(table.starts_with("length,seed,error,aligned,failure"));
    let report: toml::Table = toml::from_str(&fs::read_to_string(out.join("report.toml")).unwrap()).unwrap();
    assert_eq!(report["medians"].as_array().unwrap().len(), 2);
}
