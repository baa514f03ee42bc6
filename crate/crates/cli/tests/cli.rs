//! End-to-end runs of the `reachkit` binary and the run pipeline.

use std::path::{Path, PathBuf};
use std::process::Command as Process;

use reachkit_cli::golden::default_models_dir;
use reachkit_cli::model::{ModelFile, PolyDef};
use reachkit_cli::plot::{emit_plot, load_plot_input, PlotFormat, PlotInput};
use reachkit_cli::run::{run, Command, Overrides, RunError, EXIT_ASSUMPTION, EXIT_ITERATION_CAP, EXIT_MODEL_ERROR};
use reachkit::facelift::TubeManifest;
use reachkit::geometry::Halfspace;
use serde_json::Value;

fn model(name: &str) -> PathBuf {
    default_models_dir().join(name)
}

fn bin() -> Process {
    Process::new(env!("CARGO_BIN_EXE_reachkit"))
}

fn write_model(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn reach_example1_writes_two_segments() {
    let out = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["reach", model("example1.json").to_str().unwrap(), "--out"])
        .arg(out.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let m: TubeManifest =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("tube/manifest.json")).unwrap()).unwrap();
    assert_eq!(m.segments.len(), 2);
    assert_eq!(m.times, vec![0.0, 0.5, 1.0]);
    for s in &m.segments {
        assert!(out.path().join("tube").join(&s.file).is_file());
    }
}

#[test]
fn polyapprox_example2_reports_bounds_and_rows() {
    let out = tempfile::tempdir().unwrap();
    let r = run(Command::Polyapprox, &model("example2.json"), out.path(), &Overrides::default()).unwrap();
    let piece = &r.diagnostics["pieces"][0];
    let l0 = piece["bounds"]["l"][0].as_f64().unwrap();
    assert!((l0 - 2.7566424).abs() < 1e-4);
    assert_eq!(piece["certificate"], "SampledC1");
    let rows = piece["rows"].as_array().unwrap();
    let assembled = rows.iter().filter(|r| r["group"] != "bloat").count();
    assert_eq!(assembled, 12);
    assert!((rows[7]["normal"][0].as_f64().unwrap() + 2.2443466).abs() < 1e-4);
    assert!(out.path().join("polyhedron.json").is_file());
    assert!(out.path().join("polyhedron.csv").is_file());
}

#[test]
fn polyapprox_plot_draws_all_candidate_edges() {
    let out = tempfile::tempdir().unwrap();
    run(Command::Polyapprox, &model("example2.json"), out.path(), &Overrides::default()).unwrap();
    let input = load_plot_input(&out.path().join("polyhedron.json")).unwrap();
    assert!(matches!(input, PlotInput::Poly(_)));
    let s = emit_plot(&input, PlotFormat::Svg, &out.path().join("plot")).unwrap();
    assert_eq!(s.candidate_edges, 12);
    assert!(s.active_edges >= 5, "{}", s.active_edges);
    let svg = std::fs::read_to_string(&s.files[0]).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains("class=\"rotated-lower\""));
    let again = emit_plot(&input, PlotFormat::Svg, &out.path().join("plot2")).unwrap();
    assert_eq!(svg, std::fs::read_to_string(&again.files[0]).unwrap());
}

#[test]
fn tube_plot_csv_lists_every_cell() {
    let out = tempfile::tempdir().unwrap();
    run(Command::Reach, &model("example1.json"), out.path(), &Overrides::default()).unwrap();
    let input = load_plot_input(&out.path().join("tube")).unwrap();
    let PlotInput::Tube(t) = &input else { panic!("expected a tube") };
    let s = emit_plot(&input, PlotFormat::Csv, &out.path().join("plot")).unwrap();
    let csv = std::fs::read_to_string(&s.files[0]).unwrap();
    assert_eq!(csv.lines().count(), s.csv_rows + 1);
    assert!(csv.starts_with("segment,kind,piece,x1,x2\n"));
    assert_eq!(t.segments.len(), 3);
}

#[test]
fn malformed_rows_exit_with_model_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(model("example1.json")).unwrap();
    let mut v: Value = serde_json::from_str(&text).unwrap();
    v["initial"]["polyhedron"]["le"][0] = serde_json::json!([1.0, 0.0]);
    let p = write_model(dir.path(), "bad.json", &v.to_string());
    let status = bin().args(["reach", p.to_str().unwrap(), "--out"]).arg(dir.path().join("o")).status().unwrap();
    assert_eq!(status.code(), Some(EXIT_MODEL_ERROR));
    let p = write_model(dir.path(), "garbage.json", "{ not json");
    let status = bin().args(["reach", p.to_str().unwrap(), "--out"]).arg(dir.path().join("o")).status().unwrap();
    assert_eq!(status.code(), Some(EXIT_MODEL_ERROR));
    let status = bin()
        .args(["polyapprox", model("example1.json").to_str().unwrap(), "--out"])
        .arg(dir.path().join("o"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(EXIT_MODEL_ERROR));
}

#[test]
fn violated_assumptions_exit_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(model("example2.json")).unwrap();
    let mut v: Value = serde_json::from_str(&text).unwrap();
    v["dynamics"] = serde_json::json!({"matrix": [[0.0, 0.0], [0.0, 0.0]]});
    let p = write_model(dir.path(), "still.json", &v.to_string());
    let err = run(Command::Polyapprox, &p, &dir.path().join("o"), &Overrides::default()).unwrap_err();
    assert_eq!(err.exit_code(), EXIT_ASSUMPTION);
    assert!(err.to_string().contains("A2"), "{err}");
    v["dynamics"] = serde_json::json!({"field": ["-x2", "x1"]});
    let p = write_model(dir.path(), "nonlinear.json", &v.to_string());
    let err = run(Command::Polyapprox, &p, &dir.path().join("o"), &Overrides::default()).unwrap_err();
    assert!(matches!(err, RunError::Assumption(_)));
    let status = bin().args(["polyapprox", p.to_str().unwrap(), "--out"]).arg(dir.path().join("o")).status().unwrap();
    assert_eq!(status.code(), Some(EXIT_ASSUMPTION));
}

#[test]
fn iteration_cap_exits_with_code_4() {
    let out = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["reach-inv", model("spiral_cap.json").to_str().unwrap(), "--max-iters", "10", "--out"])
        .arg(out.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(EXIT_ITERATION_CAP));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["status"], "iteration-cap");
    assert_eq!(report["diagnostics"]["iterations"], 10);
}

#[test]
fn hybrid_reach_reports_verdicts() {
    let out = tempfile::tempdir().unwrap();
    let r = run(Command::HybridReach, &model("hybrid_drift.json"), out.path(), &Overrides::default()).unwrap();
    assert_eq!(r.status, "yes");
    assert_eq!(r.diagnostics["k"], 1);
    assert_eq!(r.diagnostics["witness_location"], "b");
    assert!(r.diagnostics["witness_cell_center"].is_array());
    let r = run(Command::HybridReach, &model("hybrid_disjoint.json"), out.path(), &Overrides::default()).unwrap();
    assert_eq!(r.status, "unknown");
    assert_eq!(r.diagnostics["k"], 3);
}

fn normalized_rows(p: &PolyDef, dim: usize) -> Vec<Vec<i64>> {
    let poly = p.to_polyhedron("p", dim).unwrap();
    let key = |h: &Halfspace, tag: i64| {
        let h = h.normalize();
        let mut k: Vec<i64> = h.normal.iter().map(|v| (v * 1e9).round() as i64).collect();
        k.push((h.offset * 1e9).round() as i64);
        k.push(tag);
        k
    };
    let mut rows: Vec<Vec<i64>> = poly
        .inequalities
        .iter()
        .map(|h| key(h, 0))
        .chain(poly.equalities.iter().map(|h| key(h, 1)))
        .collect();
    rows.sort();
    rows
}

#[test]
fn bundled_models_round_trip() {
    let mut count = 0;
    for entry in std::fs::read_dir(default_models_dir()).unwrap() {
        let path = entry.unwrap().path();
        let m = ModelFile::load(&path).unwrap();
        let back = ModelFile::parse(&m.to_json()).unwrap();
        assert_eq!(back, m, "{}", path.display());
        let polys = |m: &ModelFile| -> Vec<Vec<Vec<i64>>> {
            let mut v = Vec::new();
            if let Some(reachkit_cli::model::InitialDef::Polyhedron(p)) = &m.initial {
                v.push(normalized_rows(p, m.dim));
            }
            if let Some(p) = &m.invariant {
                v.push(normalized_rows(p, m.dim));
            }
            v
        };
        assert_eq!(polys(&back), polys(&m));
        count += 1;
    }
    assert!(count >= 8);
}

#[test]
fn reports_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (cmd, name) in [
        (Command::Reach, "rotation.json"),
        (Command::Polyapprox, "example2.json"),
        (Command::ReachInv, "drift_invariant.json"),
    ] {
        let r1 = run(cmd, &model(name), a.path(), &Overrides::default()).unwrap();
        let r2 = run(cmd, &model(name), b.path(), &Overrides::default()).unwrap();
        assert_eq!(
            serde_json::to_string(&r1.diagnostics).unwrap(),
            serde_json::to_string(&r2.diagnostics).unwrap()
        );
        assert_eq!(r1.params, r2.params);
        assert_eq!(r1.status, r2.status);
        let f1 = std::fs::read_to_string(a.path().join("report.json")).unwrap();
        let v: Value = serde_json::from_str(&f1).unwrap();
        assert!(v["timings_ms"].as_object().unwrap().values().all(|t| t.as_f64().unwrap().is_finite()));
    }
}

#[test]
fn overrides_take_precedence() {
    let out = tempfile::tempdir().unwrap();
    let ov = Overrides {
        tau: Some(1.5),
        cell: Some(0.05),
        under: true,
        ..Overrides::default()
    };
    let r = run(Command::Reach, &model("example1.json"), out.path(), &ov).unwrap();
    assert_eq!(r.params["tau"], 1.5);
    assert_eq!(r.params["cell"], 0.05);
    assert_eq!(r.params["mode"], "under");
    assert_eq!(r.diagnostics["segments"], 3);
}

#[test]
fn golden_command_prints_one_line_per_criterion() {
    let out = bin().arg("golden").output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 13, "{text}");
    for (line, id) in lines.iter().zip(1..=12) {
        assert!(line.starts_with(&format!("A{id} ")), "{line}");
        assert!(line.contains("PASS") || line.contains("FAIL"), "{line}");
    }
    let all_pass = lines[..12].iter().all(|l| l.contains(" PASS "));
    assert_eq!(out.status.code(), Some(if all_pass { 0 } else { 1 }));
}

#[test]
fn golden_command_fails_without_models() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["golden", "--models"]).arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("missing input"));
}
