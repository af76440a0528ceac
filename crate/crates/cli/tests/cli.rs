use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mixdiff::harness::{polynomial_derivative, REGISTRY_POLYNOMIAL};
use mixdiff::{compute_coeff_grid, CoeffGrid};
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mixdiff"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden").join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn data_lines(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()).collect()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

/// Sorted `a.b.c` key paths; array elements collapse to `[]`.
fn key_paths(v: &Value, prefix: &str, out: &mut Vec<String>) {
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                out.push(path.clone());
                key_paths(child, &path, out);
            }
        }
        Value::Array(items) => {
            for item in items {
                key_paths(item, &format!("{prefix}[]"), out);
            }
        }
        _ => {}
    }
}

fn schema(v: &Value) -> String {
    let mut paths = Vec::new();
    key_paths(v, "", &mut paths);
    paths.sort();
    paths.dedup();
    paths.join("\n") + "\n"
}

fn check_golden(name: &str, actual: &str) {
    let path = golden(name);
    if std::env::var_os("MIXDIFF_UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "golden file {name} differs");
}

#[test]
fn coeffs_constant_is_a_single_term() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.txt");
    let r = run(&["coeffs", "--function", "constant", "--k", "2", "--out", s(&out)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(data_lines(&text), vec!["0\t0\t2.0"]);
    assert!(text.contains("# manifest sha256:"));
    assert!(dir.path().join("c.manifest.json").exists());
}

#[test]
fn coeffs_unknown_function_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.txt");
    let r = run(&["coeffs", "--function", "sinc", "--k", "2", "--out", s(&out)]);
    assert_eq!(code(&r), 2);
    assert!(stderr(&r).contains("sinc"));
    assert!(!out.exists());
}

#[test]
fn coeffs_rejects_bad_quadrature_order() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.txt");
    let r = run(&["coeffs", "--function", "exp", "--k", "6", "--m", "5", "--out", s(&out)]);
    assert_eq!(code(&r), 2);
    let r = run(&["coeffs", "--function", "exp", "--k", "-1", "--out", s(&out)]);
    assert_eq!(code(&r), 2);
}

#[test]
fn coeffs_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("e.txt");
    let r = run(&["coeffs", "--function", "exp", "--k", "12", "--out", s(&out)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let loaded = CoeffGrid::from_text(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let direct = mixdiff::harness::TestFunction::Exp
        .coefficients(mixdiff::ClassParams::new(2.0, 4.0).unwrap(), 12, 0)
        .unwrap();
    assert_eq!(loaded, direct);
}

#[test]
fn coeffs_boundary_depends_on_seed_only_through_signs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    for (p, seed) in [(&a, "1"), (&b, "2")] {
        let r = run(&["coeffs", "--function", "boundary", "--k", "8", "--seed", seed, "--out", s(p)]);
        assert_eq!(code(&r), 0, "{}", stderr(&r));
    }
    let ga = CoeffGrid::from_text(&std::fs::read_to_string(&a).unwrap()).unwrap();
    let gb = CoeffGrid::from_text(&std::fs::read_to_string(&b).unwrap()).unwrap();
    assert_ne!(ga, gb);
    for (k, j, v) in ga.iter() {
        assert_eq!(v.abs(), gb.get(k, j).abs());
    }
}

fn polynomial_inputs(dir: &Path, r1: usize, r2: usize) -> (PathBuf, PathBuf) {
    let input = dir.join("poly.txt");
    let r = run(&["coeffs", "--function", "polynomial", "--k", "8", "--out", s(&input)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let exact = compute_coeff_grid(|t, tau| polynomial_derivative(&REGISTRY_POLYNOMIAL, r1, r2, t, tau), 8, 10).unwrap();
    let top = exact.iter().map(|(_, _, v)| v.abs()).fold(0.0, f64::max);
    let reference = dir.join("exact.txt");
    std::fs::write(&reference, exact.pruned(1e-13 * top).to_text()).unwrap();
    (input, reference)
}

#[test]
fn diff_polynomial_matches_analytic_derivative() {
    let dir = tempfile::tempdir().unwrap();
    // unequal orders pick different gammas per metric, so only l2 there
    for (r1, r2, metric) in [(1usize, 1usize, "both"), (2, 1, "l2")] {
        let (input, reference) = polynomial_inputs(dir.path(), r1, r2);
        let out = dir.path().join(format!("d{r1}{r2}.txt"));
        let (r1s, r2s) = (r1.to_string(), r2.to_string());
        let r = run(&[
            "diff", "--input", s(&input), "--r1", &r1s, "--r2", &r2s, "--delta", "1e-12", "--mu", "6", "--noise",
            "off", "--metric", metric, "--reference", s(&reference), "--out", s(&out),
        ]);
        assert_eq!(code(&r), 0, "{}", stderr(&r));
        let side = read_json(&dir.path().join(format!("d{r1}{r2}.txt.json")));
        let l2 = side["error_l2"].as_f64().unwrap();
        let c = side["error_c"].as_f64().unwrap();
        assert!(l2 < 1e-10 && c < 1e-10, "({r1},{r2}) l2 {l2} c {c}");
        assert_eq!(side["noise_mode"], "off");
        for key in ["n", "gamma", "case_label", "cross_card"] {
            assert!(!side[key].is_null(), "{key}");
        }
        let derivative = CoeffGrid::from_text(&std::fs::read_to_string(&out).unwrap()).unwrap();
        let exact = CoeffGrid::from_text(&std::fs::read_to_string(&reference).unwrap()).unwrap();
        assert!(mixdiff::parseval_l2_norm(&derivative.sub(&exact)) < 1e-10);
    }
}

#[test]
fn diff_reports_violated_inequality() {
    let dir = tempfile::tempdir().unwrap();
    let (input, _) = polynomial_inputs(dir.path(), 1, 1);
    let out = dir.path().join("d.txt");
    let r = run(&[
        "diff", "--input", s(&input), "--r1", "1", "--r2", "1", "--delta", "1e-3", "--s", "2", "--mu", "1",
        "--metric", "c", "--out", s(&out),
    ]);
    assert_eq!(code(&r), 3);
    let msg = stderr(&r);
    assert!(msg.contains("mu > 3"), "{msg}");
    assert!(!out.exists());
}

#[test]
fn diff_is_deterministic_given_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (input, _) = polynomial_inputs(dir.path(), 1, 1);
    let mut outputs = Vec::new();
    for (name, seed) in [("a", "7"), ("b", "7"), ("c", "8")] {
        let out = dir.path().join(format!("{name}.txt"));
        let r = run(&["diff", "--input", s(&input), "--delta", "1e-4", "--seed", seed, "--out", s(&out)]);
        assert_eq!(code(&r), 0, "{}", stderr(&r));
        let json = std::fs::read_to_string(dir.path().join(format!("{name}.txt.json"))).unwrap();
        outputs.push((std::fs::read(&out).unwrap(), json));
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_ne!(outputs[0].0, outputs[2].0);
}

#[test]
fn diff_noise_modes() {
    let dir = tempfile::tempdir().unwrap();
    let (input, _) = polynomial_inputs(dir.path(), 1, 1);
    for mode in ["sphere", "single", "witness"] {
        let out = dir.path().join(format!("{mode}.txt"));
        let json = dir.path().join(format!("{mode}.json"));
        let r = run(&[
            "diff", "--input", s(&input), "--delta", "1e-4", "--p", "inf", "--noise", mode, "--out", s(&out),
            "--out-json", s(&json),
        ]);
        assert_eq!(code(&r), 0, "{mode}: {}", stderr(&r));
        let side = read_json(&json);
        let norm = side["noise_norm"].as_f64().unwrap();
        assert!(norm <= 1e-4 * (1.0 + 1e-12), "{mode}: {norm}");
        assert_eq!(side["p"], "inf");
    }
}

#[test]
fn diff_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "# coeffgrid v1\n0\t0\tx\n").unwrap();
    let out = dir.path().join("d.txt");
    let r = run(&["diff", "--input", s(&bad), "--delta", "1e-3", "--out", s(&out)]);
    assert_eq!(code(&r), 2);
    let r = run(&["diff", "--input", s(&dir.path().join("missing.txt")), "--delta", "1e-3", "--out", s(&out)]);
    assert_eq!(code(&r), 2);
    let (input, _) = polynomial_inputs(dir.path(), 1, 1);
    let r = run(&["diff", "--input", s(&input), "--delta", "2", "--out", s(&out)]);
    assert_eq!(code(&r), 2);
    let r = run(&["diff", "--input", s(&input), "--delta", "1e-3", "--r1", "1", "--r2", "2", "--out", s(&out)]);
    assert_eq!(code(&r), 2);
    let r = run(&["diff", "--input", s(&input), "--delta", "1e-3", "--metric", "h1", "--out", s(&out)]);
    assert_eq!(code(&r), 2);
}

#[test]
fn cross_prints_and_writes() {
    let r = run(&["cross", "--n", "100", "--gamma", "1"]);
    assert_eq!(code(&r), 0);
    let text = String::from_utf8(r.stdout).unwrap();
    assert_eq!(data_lines(&text).len(), 482);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.txt");
    let r = run(&["cross", "--n", "27", "--gamma", "1.5", "--r1", "2", "--out", s(&out)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let cross = mixdiff::HyperbolicCross::from_text(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(cross, mixdiff::build_cross(27.0, 1.5, 2, 1).unwrap());
    let r = run(&["cross", "--n", "10", "--gamma", "0.5"]);
    assert_eq!(code(&r), 2);
}

fn experiment(dir: &Path, conf: &Path, svg: bool) -> Output {
    let mut args = vec![
        "experiment".to_string(),
        "--config".into(),
        s(conf).into(),
        "--out-csv".into(),
        s(&dir.join("run.csv")).into(),
        "--out-json".into(),
        s(&dir.join("run.json")).into(),
    ];
    if svg {
        args.push("--out-svg".into());
        args.push(s(&dir.join("run.svg")).into());
    }
    bin().args(&args).output().unwrap()
}

#[test]
fn experiment_default_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let r = experiment(dir.path(), &config("default.conf"), true);
    assert_eq!(code(&r), 0, "{}", stderr(&r));

    let csv = std::fs::read_to_string(dir.path().join("run.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "delta,n,gamma,cross_card,error_l2,error_c,noise_norm,wall_ms");
    assert_eq!(lines.len(), 10);
    check_golden("default.csv", &csv);

    let json = read_json(&dir.path().join("run.json"));
    for key in ["fitted_exponent_l2", "fitted_exponent_c", "theoretical_exponent_l2", "theoretical_exponent_c"] {
        assert!(json[key].is_f64(), "{key}");
    }
    assert_eq!(json["records"].as_array().unwrap().len(), 9);
    assert_eq!(json["rng_algorithm"], "chacha20-boxmuller");
    check_golden("default.schema", &schema(&json));

    let svg = std::fs::read_to_string(dir.path().join("run.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);
    assert!(svg.contains(r#"width="600" height="400""#));

    let hash = json["manifest_hash"].as_str().unwrap();
    assert!(svg.contains(hash));
    let manifest = read_json(&dir.path().join("run.manifest.json"));
    assert_eq!(manifest["manifest_hash"], hash);
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 3);
    let csv_digest = manifest["outputs"][0]["sha256"].as_str().unwrap();
    assert_eq!(csv_digest.len(), 64);
}

#[test]
fn experiment_unequal_orders_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let r = experiment(dir.path(), &config("unequal_orders.conf"), false);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let csv = std::fs::read_to_string(dir.path().join("run.csv")).unwrap();
    check_golden("unequal_orders.csv", &csv);
    let json = read_json(&dir.path().join("run.json"));
    check_golden("unequal_orders.schema", &schema(&json));
    assert!(json["fitted_exponent_l2"].is_f64());
    assert!(!dir.path().join("run.svg").exists());
}

#[test]
fn experiment_outputs_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let r = experiment(d.path(), &config("default.conf"), true);
        assert_eq!(code(&r), 0);
    }
    for f in ["run.csv", "run.json", "run.svg"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn experiment_lists_every_bad_field() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    std::fs::write(&conf, "[class]\nmu = lots\n[orders]\nr2 = 0\n[noise]\np = 0.3\n[plot]\ncolor = red\n").unwrap();
    let r = experiment(dir.path(), &conf, false);
    assert_eq!(code(&r), 4);
    let msg = stderr(&r);
    for needle in ["class.mu", "noise.p", "[plot]"] {
        assert!(msg.contains(needle), "{needle} missing: {msg}");
    }
    assert!(!dir.path().join("run.csv").exists());

    std::fs::write(&conf, "[orders]\nr1 = 1\nr2 = 2\n[sweep]\nstart = 1e-6\nstop = 1e-2\n").unwrap();
    let r = experiment(dir.path(), &conf, false);
    assert_eq!(code(&r), 4);
    let msg = stderr(&r);
    assert!(msg.contains("r1:") && msg.contains("delta_start:"), "{msg}");
}

#[test]
fn experiment_inadmissible_and_missing_config() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("weak.conf");
    std::fs::write(&conf, "[class]\nmu = 1\n[method]\nmetric = c\n").unwrap();
    let r = experiment(dir.path(), &conf, false);
    assert_eq!(code(&r), 3, "{}", stderr(&r));
    let r = experiment(dir.path(), &dir.path().join("nope.conf"), false);
    assert_eq!(code(&r), 2);
}

#[test]
fn default_config_matches_bundled_file() {
    let r = run(&["default-config"]);
    assert_eq!(code(&r), 0);
    let dir = tempfile::tempdir().unwrap();
    let printed = dir.path().join("printed.conf");
    std::fs::write(&printed, &r.stdout).unwrap();
    experiment(dir.path(), &printed, false);
    let from_printed = std::fs::read(dir.path().join("run.csv")).unwrap();
    let other = tempfile::tempdir().unwrap();
    experiment(other.path(), &config("default.conf"), false);
    assert_eq!(from_printed, std::fs::read(other.path().join("run.csv")).unwrap());
}

#[test]
fn radius_defaults_pass() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("radius.json");
    let r = run(&["radius", "--n-list", "8,16,32,64", "--out-json", s(&out)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let json = read_json(&out);
    assert_eq!(json["all_bounds_passed"], true);
    for key in ["c_tilde", "c_bar", "c_dbar"] {
        assert!(json["constants"][key].as_f64().unwrap() > 0.0, "{key}");
    }
    let records = json["records"].as_array().unwrap();
    assert_eq!(records.len(), 4);
    for rec in records {
        assert_eq!(rec["l2"]["bound_check"]["passed"], true);
        assert_eq!(rec["c"]["bound_check"]["passed"], true);
    }
    check_golden("radius.schema", &schema(&json));
}

#[test]
fn radius_rejects_small_n() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("radius.json");
    let r = run(&["radius", "--n-list", "2", "--out-json", s(&out)]);
    assert_eq!(code(&r), 2);
    assert!(stderr(&r).contains("N = 2"));
    assert!(!out.exists());
}

#[test]
fn bad_flags_are_input_errors() {
    assert_eq!(code(&run(&["frobnicate"])), 2);
    assert_eq!(code(&run(&["cross"])), 2);
    assert_eq!(code(&run(&["radius", "--p", "zero", "--out-json", "x.json"])), 2);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn diff_both_metrics_must_agree() {
    let dir = tempfile::tempdir().unwrap();
    let (input, _) = polynomial_inputs(dir.path(), 2, 1);
    let out = dir.path().join("d.txt");
    let r = run(&[
        "diff", "--input", s(&input), "--r1", "2", "--r2", "1", "--delta", "1e-6", "--mu", "6", "--metric", "both",
        "--out", s(&out),
    ]);
    assert_eq!(code(&r), 2);
    assert!(stderr(&r).contains("metric both"));
    let r = run(&[
        "diff", "--input", s(&input), "--r1", "2", "--r2", "1", "--delta", "1e-6", "--mu", "6", "--metric", "both",
        "--gamma", "1.25", "--out", s(&out),
    ]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    assert_eq!(read_json(&dir.path().join("d.txt.json"))["gamma"], 1.25);
}
