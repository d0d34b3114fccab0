use std::path::Path;
use std::process::{Command, Output};

fn star(cube: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_star")).arg("--cube").arg(cube).args(args).output().unwrap()
}

fn synth(cube: &Path, id: &str, date: &str, water: &[&str]) {
    let mut args = vec!["--seed", "3", "synth", "--scene-id", id, "--date", date, "--size", "128"];
    for w in water {
        args.extend(["--water", w]);
    }
    let out = star(cube, &args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn run_report_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let cube = dir.path();
    synth(cube, "pre", "2022-09-01", &["rect:10,10,50,118"]);
    synth(cube, "during", "2022-09-21", &["rect:10,10,50,118", "rect:70,20,115,90"]);

    let out = star(cube, &["--run-id", "r1", "run"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "date_pre,date_during,px_permanent,px_during,px_flood,km2_permanent,km2_during,km2_flood"
    );

    let report = String::from_utf8(star(cube, &["report", "r1"]).stdout).unwrap();
    assert!(report.starts_with(&csv));
    assert!(report.contains("speckle"));

    let info = star(cube, &["inspect", cube.join("scenes/pre/VV.tif").to_str().unwrap()]);
    let text = String::from_utf8(info.stdout).unwrap();
    assert!(text.contains("128 x 128") && text.contains("EPSG:32632") && text.contains("dB"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cube = dir.path();
    // no cube yet
    assert_eq!(star(cube, &["run"]).status.code(), Some(3));

    synth(cube, "s1", "2022-09-01", &[]);
    assert_eq!(star(cube, &["report", "missing"]).status.code(), Some(3));

    let cfg = cube.join("bad.toml");
    std::fs::write(&cfg, "[pipeline]\nsteps = [\"to_linear\", \"mask_extremes\", \"to_db\"]\n").unwrap();
    assert_eq!(star(cube, &["--config", cfg.to_str().unwrap(), "run"]).status.code(), Some(2));

    std::fs::write(&cfg, "[speckle]\nnonsense = 1\n").unwrap();
    assert_eq!(star(cube, &["--config", cfg.to_str().unwrap(), "run"]).status.code(), Some(2));

    let bad_polygon = star(cube, &["synth", "--scene-id", "s2", "--date", "2022-09-02", "--water", "1,2"]);
    assert_eq!(bad_polygon.status.code(), Some(2));
}
