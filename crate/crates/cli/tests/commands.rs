use std::fs;
use std::path::Path;
use std::process::Command;

use cwexp_core::geometry::torus_dist;
use cwexp_core::maps::BumpSpec;
use cwexp_core::pnm::GrayImage;
use serde_json::Value;

fn cwexp(args: &[&str], out: &Path) -> (i32, String) {
    cwexp_env(args, out, &[])
}

fn cwexp_env(args: &[&str], out: &Path, env: &[(&str, &str)]) -> (i32, String) {
    let output = Command::new(env!("CARGO_BIN_EXE_cwexp"))
        .args(args)
        .arg("--out")
        .arg(out)
        .envs(env.iter().copied())
        .output()
        .expect("spawn cwexp");
    let text = String::from_utf8_lossy(&output.stdout).into_owned() + &String::from_utf8_lossy(&output.stderr);
    (output.status.code().expect("exit code"), text)
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

fn assert_same_files(a: &Path, b: &Path) {
    assert_eq!(listing(a), listing(b));
    for name in listing(a) {
        assert!(fs::read(a.join(&name)).unwrap() == fs::read(b.join(&name)).unwrap(), "{name} differs");
    }
}

#[test]
fn identity_e_alpha_fails_with_witness() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("id");
    let (code, text) = cwexp(&["probe", "--map", "identity", "--e-alpha", "0.1", "--h", "1/256", "--samples", "100"], &out);
    assert_eq!(code, 1, "{text}");
    let w = json(&out.join("witness.json"));
    assert_eq!(w["rechecked"], true);
    assert!(w["sup"].as_f64().unwrap() <= 0.1);
    assert!(w["points"].as_array().unwrap().len() > 1);
    let csv = fs::read_to_string(out.join("e_alpha.csv")).unwrap();
    assert!(csv.starts_with("alpha,verdict,witness_diam,sup_diam\n0.1,fail,"));
}

#[test]
fn anosov_e_alpha_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("an");
    let (code, text) = cwexp(
        &["probe", "--map", "anosov", "--e-alpha", "0.05", "--window", "30", "--h", "1/256", "--samples", "200"],
        &out,
    );
    assert_eq!(code, 0, "{text}");
    assert!(!out.join("witness.json").exists());
    assert_eq!(json(&out.join("e_alpha.json"))["verdict"], "pass");
}

#[test]
fn exhausted_budget_is_inconclusive() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b");
    let (code, text) = cwexp(
        &["probe", "--map", "anosov", "--e-alpha", "0.05", "--h", "1/256", "--samples", "50", "--budget", "10"],
        &out,
    );
    assert_eq!(code, 2, "{text}");
}

#[test]
fn same_seed_gives_identical_files_and_manifest_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "probe", "--map", "anosov", "--e-alpha", "0.05", "--expansivity", "--h", "1/128", "--samples", "60", "--seed", "11",
    ];
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert_eq!(cwexp(&args, &a).0, 0);
    assert_eq!(cwexp(&args, &b).0, 0);
    assert_same_files(&a, &b);
    let manifest = a.join("manifest.json");
    assert_eq!(cwexp(&["probe", "--config", manifest.to_str().unwrap()], &c).0, 0);
    assert_same_files(&a, &c);
    let m = json(&manifest);
    assert_eq!(m["seed"], 11);
    assert_eq!(m["config"]["samples"], 60);
    assert_eq!(m["version"], env!("CARGO_PKG_VERSION"));
    assert!(listing(&a).iter().all(|n| !n.ends_with(".partial")));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"map": "identity", "seed": 5, "h": 0.0078125, "samples": 30, "alpha": 0.2}"#).unwrap();
    let out = dir.path().join("o");
    let (code, text) = cwexp(&["probe", "--config", cfg.to_str().unwrap(), "--seed", "7"], &out);
    assert_eq!(code, 1, "{text}");
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["config"]["seed"], 7);
    assert_eq!(m["config"]["map"], "identity");
    assert_eq!(m["config"]["samples"], 30);
    assert_eq!(m["config"]["window"], 30);
}

#[test]
fn config_errors_exit_64_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\n  \"h\": 0.01,\n  \"colour\": 1\n}").unwrap();
    let out = dir.path().join("o");
    let cases: Vec<Vec<&str>> = vec![
        vec!["probe", "--config", bad.to_str().unwrap()],
        vec!["probe", "--map", "henon", "--alpha", "0.1"],
        vec!["probe", "--map", "anosov", "--h", "1/256"],
        vec!["probe", "--map", "anosov", "--alpha", "0.01", "--h", "1/256"],
        vec!["probe", "--h", "0.3", "--alpha", "0.5"],
        vec!["render-attractor", "--map", "anosov"],
        vec!["transversality", "--p", "spirals"],
        vec!["quotient", "--window"],
    ];
    for args in cases {
        let (code, text) = cwexp(&args, &out);
        assert_eq!(code, 64, "{args:?}: {text}");
        assert!(!out.exists(), "{args:?} left artifacts");
    }
    let (_, text) = cwexp(&["probe", "--config", bad.to_str().unwrap()], &out);
    assert!(text.contains("line 3") && text.contains("colour"), "{text}");
    let (_, text) = cwexp(&["probe", "--map", "anosov", "--alpha", "0.01", "--h", "1/256"], &out);
    assert!(text.contains("field `alpha`"), "{text}");
    let (code, _) = cwexp_env(&["bouquet"], &out, &[("CWEXP_THREADS", "0")]);
    assert_eq!(code, 64);
}

#[test]
fn thread_cap_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["quotient", "--map", "da", "--h", "1/64", "--alpha", "0.2", "--window", "3"];
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(cwexp_env(&args, &a, &[("CWEXP_THREADS", "1")]).0, 0);
    assert_eq!(cwexp_env(&args, &b, &[("CWEXP_THREADS", "3")]).0, 0);
    assert_same_files(&a, &b);
}

#[test]
fn transversality_singletons_are_trivially_transverse() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let (code, text) = cwexp(&["transversality", "--p", "singletons", "--q", "singletons", "--h", "1/64"], &out);
    assert_eq!(code, 0, "{text}");
    let r = json(&out.join("transversality.json"));
    assert_eq!(r["transversalize"]["unchanged"], true);
    assert_eq!(r["transversalize"]["diam_before"], 0.0);
    assert_eq!(r["transversalize"]["diam_after"], 0.0);
    let displacement = GrayImage::parse(&fs::read(out.join("displacement.pgm")).unwrap()).unwrap();
    assert!(displacement.data.iter().all(|&v| v == 0));
}

#[test]
fn transversality_vertical_pair_is_broken_up() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v");
    let (code, text) = cwexp(&["transversality", "--h", "1/128", "--epsilon", "0.1", "--delta", "0.05"], &out);
    assert_eq!(code, 0, "{text}");
    let r = json(&out.join("transversality.json"));
    let t = &r["transversalize"];
    assert!(t["diam_before"].as_f64().unwrap() > 1.0);
    assert!(t["diam_after"].as_f64().unwrap() < 0.1);
    assert!(t["histogram_after"]["max"].as_f64().unwrap() < 0.1);
    assert!(t["sup_displacement"].as_f64().unwrap() < 0.05);
    for b in r["boundary"].as_array().unwrap() {
        assert!(b["transversality"].as_f64().unwrap() < 0.1);
    }
    let csv = fs::read_to_string(out.join("histogram.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 20);
    for name in ["before.pgm", "after.pgm", "displacement.pgm"] {
        let img = GrayImage::parse(&fs::read(out.join(name)).unwrap()).unwrap();
        assert_eq!((img.width, img.height), (257, 257));
    }
}

#[test]
fn attractor_first_image_is_the_trapping_region() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("da");
    let (code, text) = cwexp(&["render-attractor", "--map", "da", "--h", "1/128"], &out);
    assert!(code == 0 || code == 1, "{text}");
    let img = GrayImage::parse(&fs::read(out.join("attractor_k00.pgm")).unwrap()).unwrap();
    let r = BumpSpec::tuned().unwrap().trapping_radius();
    for j in 0..128 {
        for i in 0..128 {
            let p = [i as f64 / 128.0, j as f64 / 128.0];
            let inside = torus_dist(p, [0.0, 0.0]) >= r;
            assert_eq!(img.at(i, j) == 255, inside, "node {i},{j}");
        }
    }
    let csv = fs::read_to_string(out.join("convergence.csv")).unwrap();
    assert!(csv.starts_with("k,hausdorff,"));
    let decreasing = json(&out.join("attractor.json"))["strictly_decreasing"].as_bool().unwrap();
    let flagged = json(&out.join("manifest.json"))["flags"]
        .as_array()
        .unwrap()
        .iter()
        .any(|f| f == "hausdorff_not_strictly_decreasing");
    assert_eq!(decreasing, !flagged);
}

#[test]
fn pda_images_are_canonical() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pda");
    let (_, text) = cwexp(&["render-attractor", "--map", "pda", "--h", "1/128"], &out);
    let summary = json(&out.join("attractor.json"));
    assert_eq!(summary["half_domain_canonical"], true, "{text}");
    assert_eq!(summary["run"]["symmetry_defects"], 0);
    let img = GrayImage::parse(&fs::read(out.join("attractor_k00.pgm")).unwrap()).unwrap();
    assert_eq!((img.width, img.height), (65, 128));
}

#[test]
fn quotient_writes_labels_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("q");
    let (code, text) = cwexp(&["quotient", "--map", "anosov", "--h", "1/128", "--alpha", "0.1", "--window", "20"], &out);
    assert_eq!(code, 0, "{text}");
    let meta = json(&out.join("partition.json"));
    assert_eq!(meta["classes"], 128 * 128);
    assert_eq!(meta["mesh"], 0.0);
    assert_eq!(json(&out.join("semiconjugacy.json"))["residual"], 0.0);
    let labels = fs::read_to_string(out.join("labels.pgm")).unwrap();
    assert!(labels.starts_with("P2"));
}

#[test]
fn bouquet_passes_at_default_scale() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b");
    let (code, text) = cwexp(&["bouquet", "--epsilon", "0.3"], &out);
    assert_eq!(code, 0, "{text}");
    let r = json(&out.join("bouquet.json"));
    assert_eq!(r["model"]["collapse_level"], 6);
    assert_eq!(r["residual"], 0.0);
    let csv = fs::read_to_string(out.join("mesh.csv")).unwrap();
    let row = csv.lines().nth(6).unwrap();
    let (n, mesh) = row.split_once(',').unwrap();
    assert_eq!(n, "6");
    assert_eq!(mesh.parse::<f64>().unwrap(), 2.0 / 7.0);
}
