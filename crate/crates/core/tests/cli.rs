use std::fs;
use std::path::Path;
use std::process::Command;

use pixnorm::cli::RunManifest;

fn pixnorm(args: &[&str], cwd: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_pixnorm"))
        .args(args)
        .current_dir(cwd)
        .env_remove("PIXNORM_OUT_DIR")
        .output()
        .unwrap()
}

fn write_input(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("input.csv");
    let mut s = String::from("id,a,b,c,churn\n");
    for i in 0..40 {
        let x = f64::from(i);
        s.push_str(&format!("row{i},{},{},{},{}\n", x * 0.5 - 3.0, 100.0 - x * x, (x * 0.7).sin(), i % 2));
    }
    fs::write(&path, s).unwrap();
    path
}

#[test]
fn normalize_then_denormalize_is_within_quantization_bound() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_input(dir.path());
    let before = fs::read(&input).unwrap();
    let out = pixnorm(&["normalize", "--input", "input.csv", "--out", "img/d.pgm"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("img/d.norm.json").is_file());
    assert!(dir.path().join("img/d.manifest.json").is_file());
    let pgm = fs::read(dir.path().join("img/d.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n3 40\n255\n"));

    let out = pixnorm(
        &["denormalize", "--image", "img/d.pgm", "--meta", "img/d.norm.json", "--out", "back.csv"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let orig = pixnorm::dataset::load_csv(&input, &pixnorm::dataset::LoadOptions::new("churn")).unwrap();
    let stats = pixnorm::dataset::compute_stats(&orig).unwrap();
    let step = (stats.global_max - stats.global_min) / 510.0 + 1e-9;
    let mut rdr = csv::Reader::from_path(dir.path().join("back.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), ["a", "b", "c"]);
    let back: Vec<f64> = rdr
        .records()
        .flat_map(|r| r.unwrap().iter().map(|c| c.parse::<f64>().unwrap()).collect::<Vec<_>>())
        .collect();
    assert_eq!(back.len(), orig.values().len());
    for (x, y) in orig.values().iter().zip(&back) {
        assert!((x - y).abs() <= step);
    }
    assert_eq!(fs::read(&input).unwrap(), before, "input file was modified");
}

#[test]
fn render_writes_surface_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = pixnorm(
        &["render", "--synth", "6,4,1,2.0", "--out", "r.pgm", "--surface", "s.csv", "--gnuplot", "s.dat"],
        dir.path(),
    );
    assert!(out.status.success());
    let surface = fs::read_to_string(dir.path().join("s.csv")).unwrap();
    assert!(surface.starts_with("x,y,z\n"));
    assert_eq!(surface.lines().count(), 1 + 24);
    assert_eq!(fs::read_to_string(dir.path().join("s.dat")).unwrap().lines().count(), 6);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| pixnorm(args, dir.path()).status.code().unwrap();
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["normalize", "--help"]), 0);
    assert_eq!(code(&["normalize", "--bogus"]), 1);
    assert_eq!(code(&["normalize", "--out", "x.pgm"]), 1);
    assert_eq!(code(&["normalize", "--input", "missing.csv", "--out", "x.pgm"]), 2);
    fs::write(dir.path().join("bad.csv"), "a,churn\n1,1\nabc,0\n2,1\n").unwrap();
    assert_eq!(code(&["normalize", "--input", "bad.csv", "--out", "x.pgm"]), 3);
    fs::write(dir.path().join("nolabel.csv"), "a,b\n1,2\n").unwrap();
    assert_eq!(code(&["normalize", "--input", "nolabel.csv", "--out", "x.pgm"]), 3);
    fs::write(dir.path().join("bad.pgm"), "P2\n1 1\n255\n0").unwrap();
    fs::write(dir.path().join("m.json"), "{}").unwrap();
    assert_eq!(code(&["denormalize", "--image", "bad.pgm", "--meta", "m.json", "--out", "o.csv"]), 3);
}

#[test]
fn train_then_evaluate_matches_reproduce() {
    let dir = tempfile::tempdir().unwrap();
    let synth = "400,5,9,3.0";
    let run = |args: &[&str]| {
        let out = pixnorm(args, dir.path());
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    };
    run(&["reproduce", "--synth", synth, "--seed", "5", "--out-dir", "full"]);
    run(&["train", "--synth", synth, "--seed", "5", "--model", "m/model.json"]);
    run(&["evaluate", "--model", "m/model.json", "--synth", synth, "--out-dir", "eval"]);

    let strip = |p: &str| {
        let mut v: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join(p)).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("generated_at");
        v
    };
    assert_eq!(strip("full/report/report.json"), strip("eval/report/report.json"));
    assert_eq!(
        fs::read(dir.path().join("full/model.json")).unwrap(),
        fs::read(dir.path().join("m/model.json")).unwrap()
    );
}

#[test]
fn rerun_from_manifest_reproduces_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    write_input(dir.path());
    // No --seed: one is drawn and recorded.
    let out = pixnorm(&["reproduce", "--input", "input.csv", "--drop", "id", "--out-dir", "run"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed: "));

    let manifest = RunManifest::read(dir.path().join("run/manifest.json")).unwrap();
    assert!(manifest.seed.is_some());
    assert_eq!(manifest.inputs.len(), 1);
    assert_eq!(manifest.inputs[0].sha256.len(), 64);
    assert_eq!(manifest.dataset.as_ref().unwrap().cols, 3);
    let model = fs::read(dir.path().join("run/model.json")).unwrap();
    let report = fs::read(dir.path().join("run/report/roc.csv")).unwrap();
    let first = manifest.payload_json().unwrap();

    fs::remove_dir_all(dir.path().join("run/report")).unwrap();
    let out = pixnorm(&["rerun", "--manifest", "run/manifest.json"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read(dir.path().join("run/model.json")).unwrap(), model);
    assert_eq!(fs::read(dir.path().join("run/report/roc.csv")).unwrap(), report);
    let again = RunManifest::read(dir.path().join("run/manifest.json")).unwrap();
    assert_eq!(again.payload_json().unwrap(), first);
}

#[test]
fn out_dir_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_pixnorm"))
        .args(["reproduce", "--synth", "100,3,1,4.0", "--seed", "1", "--epochs", "5"])
        .current_dir(dir.path())
        .env("PIXNORM_OUT_DIR", "from-env")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("from-env/manifest.json").is_file());
}
