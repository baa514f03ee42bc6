//! Command dispatch and run reports.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use reachkit::facelift::{
    classify_boundary, reach_bounded_time_with, reach_invariant_with, write_tube, FaceliftError, InvariantOptions,
    ReachOptions, ReachTube, Tag, TimeGrid, TubeStatus,
};
use reachkit::grid::GridMode;
use reachkit::hybrid::{semi_decide_reach, HybridError, PostParams, RegionSet, Verdict, WitnessStep};
use reachkit::polyapprox::{
    bloat_hull, check_c1, overapproximate_step, select_delta, BoundMode, PolyError, StepOptions, StepPiece,
};
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::model::{ModelError, ModelFile, ProblemKind};
use crate::plot::{PolyFile, PolyPiece, PolyRow, BLOAT_GROUP};

pub const EXIT_OK: i32 = 0;
pub const EXIT_GOLDEN_FAILURE: i32 = 1;
pub const EXIT_MODEL_ERROR: i32 = 2;
pub const EXIT_ASSUMPTION: i32 = 3;
pub const EXIT_ITERATION_CAP: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Reach,
    ReachInv,
    Polyapprox,
    HybridReach,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Reach => "reach",
            Command::ReachInv => "reach-inv",
            Command::Polyapprox => "polyapprox",
            Command::HybridReach => "hybrid-reach",
        }
    }

    fn kind(self) -> ProblemKind {
        match self {
            Command::Reach => ProblemKind::Reach,
            Command::ReachInv => ProblemKind::ReachInv,
            Command::Polyapprox => ProblemKind::Polyapprox,
            Command::HybridReach => ProblemKind::Hybrid,
        }
    }
}

/// Command-line values that take precedence over the model file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub dt: Option<f64>,
    pub cell: Option<f64>,
    pub tau: Option<f64>,
    pub under: bool,
    pub bounds: Option<BoundMode>,
    pub max_iters: Option<usize>,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("assumption violated: {0}")]
    Assumption(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
    #[error("computation failed: {0}")]
    Internal(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Model(_) | RunError::Parameter(_) => EXIT_MODEL_ERROR,
            RunError::Assumption(_) => EXIT_ASSUMPTION,
            RunError::Io(_) | RunError::Internal(_) => EXIT_GOLDEN_FAILURE,
        }
    }
}

impl From<PolyError> for RunError {
    fn from(e: PolyError) -> Self {
        match e {
            PolyError::AssumptionA2Violated { delta } => RunError::Assumption(format!(
                "outflow assumption (A2): min of a_kᵀAx over the face is {delta}, it must be positive"
            )),
            PolyError::C1Violated { .. } | PolyError::BadDeltaOrder { .. } => {
                RunError::Assumption(format!("condition C1: {e}"))
            }
            PolyError::NonlinearDynamics => {
                RunError::Assumption("polyhedral over-approximation needs linear dynamics ẋ = Ax".into())
            }
            PolyError::DimUnsupported { .. } => RunError::Assumption(e.to_string()),
            PolyError::BadStep(_) | PolyError::DenominatorAllDegenerate | PolyError::Geometry(_) => {
                RunError::Parameter(e.to_string())
            }
            PolyError::Flow(_) => RunError::Internal(e.to_string()),
        }
    }
}

impl From<FaceliftError> for RunError {
    fn from(e: FaceliftError) -> Self {
        match e {
            FaceliftError::PreconditionViolated { .. } => RunError::Assumption(format!("invariant precondition: {e}")),
            FaceliftError::StepTooCoarse { .. } => RunError::Assumption(format!("step resolution: {e}")),
            FaceliftError::Poly(p) => p.into(),
            FaceliftError::EmptyBoundary
            | FaceliftError::BadTimeGrid(_)
            | FaceliftError::BadParameter(_)
            | FaceliftError::DimMismatch { .. }
            | FaceliftError::Parse(_)
            | FaceliftError::Geometry(_) => RunError::Parameter(e.to_string()),
            FaceliftError::Flow(_) => RunError::Internal(e.to_string()),
        }
    }
}

impl From<HybridError> for RunError {
    fn from(e: HybridError) -> Self {
        match e {
            HybridError::Facelift(f) => f.into(),
            HybridError::Unsupported(_) => RunError::Assumption(e.to_string()),
            HybridError::Flow(_) => RunError::Internal(e.to_string()),
            _ => RunError::Parameter(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub command: String,
    pub model: String,
    pub kind: String,
    pub exit_code: i32,
    pub status: String,
    /// Effective parameters after overrides and defaults.
    pub params: BTreeMap<String, Value>,
    pub diagnostics: Value,
    pub outputs: Vec<String>,
    pub timings_ms: BTreeMap<String, f64>,
}

struct Timer(BTreeMap<String, f64>, Instant);

impl Timer {
    fn new() -> Self {
        Timer(BTreeMap::new(), Instant::now())
    }

    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.0.insert(stage.into(), (now - self.1).as_secs_f64() * 1e3);
        self.1 = now;
    }
}

fn need(v: Option<f64>, what: &'static str) -> Result<f64, RunError> {
    v.ok_or(RunError::Model(ModelError::Missing(what)))
}

fn positive(v: f64, what: &str) -> Result<f64, RunError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(RunError::Parameter(format!("{what} must be positive, got {v}")))
    }
}

/// `null` for non-finite values, so every number in a report is finite.
fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

/// Loads the model, dispatches `command`, writes outputs and `report.json`
/// into `out_dir`.
pub fn run(command: Command, model_path: &Path, out_dir: &Path, ov: &Overrides) -> Result<RunReport, RunError> {
    let mut timer = Timer::new();
    let model = ModelFile::load(model_path)?;
    model.require_kind(command.kind())?;
    timer.lap("load");
    std::fs::create_dir_all(out_dir)?;
    let mut report = RunReport {
        command: command.as_str().into(),
        model: model_path.display().to_string(),
        kind: model.kind.as_str().into(),
        exit_code: EXIT_OK,
        status: "ok".into(),
        params: BTreeMap::new(),
        diagnostics: Value::Null,
        outputs: Vec::new(),
        timings_ms: BTreeMap::new(),
    };
    match command {
        Command::Reach | Command::ReachInv => run_reach(command, &model, out_dir, ov, &mut report, &mut timer)?,
        Command::Polyapprox => run_polyapprox(&model, out_dir, ov, &mut report, &mut timer)?,
        Command::HybridReach => run_hybrid(&model, ov, &mut report, &mut timer)?,
    }
    let path = out_dir.join("report.json");
    report.outputs.push(path.display().to_string());
    timer.lap("report");
    report.timings_ms = timer.0;
    std::fs::write(&path, serde_json::to_string_pretty(&report).map_err(|e| RunError::Internal(e.to_string()))?)?;
    Ok(report)
}

fn tube_diagnostics(tube: &ReachTube) -> Value {
    let cum = tube.cumulative();
    json!({
        "status": tube.status.as_str(),
        "iterations": tube.iterations(),
        "segments": tube.segments.len(),
        "times": tube.times().into_iter().map(num).collect::<Vec<_>>(),
        "segment_cells": tube.segments.iter().map(|s| s.set.to_grid(tube.dim, tube.h).len()).collect::<Vec<_>>(),
        "cumulative_cells": cum.iter().map(|g| g.len()).collect::<Vec<_>>(),
        "occupancy_cells": tube.occupancy().len(),
        "polyhedral": tube.diagnostics.polyhedral,
        "fallback_reason": tube.diagnostics.fallback_reason,
        "total_substeps": tube.diagnostics.total_substeps,
        "max_displacement": num(tube.diagnostics.max_displacement),
        "front_sizes": tube.diagnostics.front_sizes,
        "invariant_pruned": tube.diagnostics.invariant_pruned,
    })
}

fn run_reach(
    command: Command,
    model: &ModelFile,
    out_dir: &Path,
    ov: &Overrides,
    report: &mut RunReport,
    timer: &mut Timer,
) -> Result<(), RunError> {
    let dyn_ = model.dynamics()?;
    let init = model.initial_set()?;
    let dt = positive(need(ov.dt.or(model.grid.dt), "grid.dt")?, "dt")?;
    let h = positive(need(ov.cell.or(model.grid.cell), "grid.cell")?, "cell")?;
    let under = ov.under || model.flags.under_approximate;
    let mode = if under { GridMode::Under } else { GridMode::Over };
    let reach = ReachOptions {
        boundary_spacing: model.grid.boundary_spacing,
        ..ReachOptions::default()
    };
    let spacing = reach.boundary_spacing.unwrap_or(0.5 * h);
    let p = &mut report.params;
    p.insert("dt".into(), num(dt));
    p.insert("cell".into(), num(h));
    p.insert("boundary_spacing".into(), num(spacing));
    p.insert("mode".into(), json!(mode.as_str()));
    p.insert("tol".into(), num(reach.tol));
    let front = classify_boundary(&init, &dyn_, spacing)?;
    let classification = json!({
        "outflow": front.count(Tag::Outflow),
        "tangential": front.count(Tag::Tangential),
        "inflow": front.count(Tag::Inflow),
    });
    timer.lap("classify");
    let tube = if command == Command::Reach {
        let tau = need(ov.tau.or(model.grid.tau), "grid.tau")?;
        report.params.insert("tau".into(), num(tau));
        let grid = TimeGrid::uniform(dt, tau)?;
        reach_bounded_time_with(&init, &dyn_, tau, &grid, h, mode, &reach)?
    } else {
        let xq = model.invariant()?;
        let grid = TimeGrid::uniform(dt, dt)?;
        let opts = InvariantOptions {
            reach,
            max_iters: ov.max_iters.or(model.flags.max_iters),
            ..InvariantOptions::default()
        };
        let tube = reach_invariant_with(&init, &dyn_, &xq, &grid, h, under, &opts)?;
        report
            .params
            .insert("max_iters".into(), json!(opts.max_iters.map_or(Value::Null, |m| json!(m))));
        tube
    };
    timer.lap("reach");
    let manifest = write_tube(&tube, &out_dir.join("tube"))?;
    timer.lap("write");
    report.outputs.push(manifest.display().to_string());
    let mut d = tube_diagnostics(&tube);
    d["classification"] = classification;
    report.diagnostics = d;
    report.status = tube.status.as_str().into();
    if let TubeStatus::IterationCap { .. } = tube.status {
        report.exit_code = EXIT_ITERATION_CAP;
    }
    Ok(())
}

fn piece_rows(piece: &StepPiece, a: &nalgebra::DMatrix<f64>) -> Result<Vec<PolyRow>, RunError> {
    let mut rows: Vec<PolyRow> = piece
        .assembled
        .polyhedron
        .inequalities
        .iter()
        .zip(&piece.assembled.rows)
        .map(|(h, info)| PolyRow {
            group: info.group.as_str().into(),
            index: info.index,
            l: Some(info.l),
            normal: h.normal.clone(),
            offset: h.offset,
        })
        .collect();
    if let Some(eps) = piece.epsilon {
        let p = &piece.problem;
        let b = bloat_hull(&p.face, &p.face_delta, a, p.delta, Some(eps))?;
        rows.extend(b.polyhedron.inequalities.iter().enumerate().map(|(i, h)| PolyRow {
            group: BLOAT_GROUP.into(),
            index: i,
            l: Some(eps),
            normal: h.normal.clone(),
            offset: h.offset,
        }));
    }
    Ok(rows)
}

fn run_polyapprox(
    model: &ModelFile,
    out_dir: &Path,
    ov: &Overrides,
    report: &mut RunReport,
    timer: &mut Timer,
) -> Result<(), RunError> {
    let dyn_ = model.dynamics()?;
    let a = dyn_.as_linear().ok_or(PolyError::NonlinearDynamics)?.clone();
    let mut face = model.face()?;
    let dt = positive(need(ov.dt.or(model.grid.dt), "grid.dt")?, "dt")?;
    let tau = ov.tau.or(model.grid.tau).unwrap_or(dt);
    let steps = ((tau / dt).round() as usize).max(1);
    let cfg = model.polyapprox.clone().unwrap_or_default();
    let mode = ov.bounds.or(model.flags.bound_mode).unwrap_or(BoundMode::Conservative);
    let samples = cfg.samples.unwrap_or(64).max(2);
    let opts = StepOptions {
        mode,
        delta0: cfg.delta0,
        nx: samples,
        nt: samples,
        bloat: cfg.bloat.unwrap_or(true),
    };
    let p = &mut report.params;
    p.insert("dt".into(), num(dt));
    p.insert("steps".into(), json!(steps));
    p.insert("bounds".into(), json!(mode));
    p.insert("samples".into(), json!(samples));
    p.insert("bloat".into(), json!(opts.bloat));
    p.insert("delta0".into(), cfg.delta0.map_or(Value::Null, num));
    let mut pieces = Vec::new();
    let mut diag = Vec::new();
    let mut shrunk = false;
    for step in 0..steps {
        let r = overapproximate_step(&face, &a, dt, &opts)?;
        shrunk |= r.shrunk;
        for piece in &r.pieces {
            let prob = &piece.problem;
            let rows = piece_rows(piece, &a)?;
            let vertices = if model.dim == 2 {
                piece.polyhedron.vertices_2d().map_err(|e| RunError::Internal(e.to_string()))?
            } else {
                Vec::new()
            };
            let c1 = check_c1(prob, samples, samples);
            let closed_form = select_delta(prob.m0.value, prob.norm_a, prob.outflow_margin, prob.delta0)?;
            let t0 = step as f64 * dt + piece.t0;
            let t1 = step as f64 * dt + piece.t1;
            diag.push(json!({
                "t0": num(t0),
                "t1": num(t1),
                "delta_used": num(prob.delta),
                "outflow_margin": num(prob.outflow_margin),
                "delta0": num(prob.delta0),
                "delta1": num(prob.delta1()?),
                "m0": num(prob.m0.value),
                "norm_a": num(prob.norm_a),
                "closed_form_delta": num(closed_form),
                "certificate": prob.certificate,
                "c1_min": num(c1.min_value),
                "bounds": {
                    "mode": piece.bounds.mode,
                    "l": piece.bounds.l.iter().copied().map(num).collect::<Vec<_>>(),
                    "l_prime": piece.bounds.l_prime.iter().copied().map(num).collect::<Vec<_>>(),
                },
                "epsilon": piece.epsilon.map_or(Value::Null, num),
                "bounded_subsystem": piece.assembled.bounded_subsystem().is_bounded().unwrap_or(false),
                "rows": rows,
                "vertices": vertices,
            }));
            pieces.push(PolyPiece { t0, t1, rows, vertices });
        }
        face = r.final_face().clone();
    }
    timer.lap("polyapprox");
    let file = PolyFile {
        dim: model.dim,
        mode: serde_json::to_value(mode).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
        pieces,
    };
    let path = out_dir.join("polyhedron.json");
    std::fs::write(&path, serde_json::to_string_pretty(&file).map_err(|e| RunError::Internal(e.to_string()))?)?;
    report.outputs.push(path.display().to_string());
    let csv = out_dir.join("polyhedron.csv");
    std::fs::write(&csv, poly_csv(&file))?;
    report.outputs.push(csv.display().to_string());
    timer.lap("write");
    report.diagnostics = json!({ "shrunk": shrunk, "pieces": diag });
    Ok(())
}

fn poly_csv(file: &PolyFile) -> String {
    let mut s = String::from("piece,group,index,l");
    for j in 0..file.dim {
        s.push_str(&format!(",a{}", j + 1));
    }
    s.push_str(",offset\n");
    for (k, p) in file.pieces.iter().enumerate() {
        for r in &p.rows {
            s.push_str(&format!("{k},{},{},{}", r.group, r.index, r.l.unwrap_or(0.0)));
            for v in &r.normal {
                s.push_str(&format!(",{v}"));
            }
            s.push_str(&format!(",{}\n", r.offset));
        }
    }
    s
}

fn run_hybrid(model: &ModelFile, ov: &Overrides, report: &mut RunReport, timer: &mut Timer) -> Result<(), RunError> {
    let (sys, target) = model.hybrid_system()?;
    let cfg = model.hybrid.as_ref().ok_or(ModelError::Missing("hybrid"))?;
    let h = positive(need(ov.cell.or(model.grid.cell), "grid.cell")?, "cell")?;
    let dt = positive(need(ov.dt.or(model.grid.dt), "grid.dt")?, "dt")?;
    let tau_q = ov.tau.unwrap_or(cfg.tau_q);
    let max_k = ov.max_iters.unwrap_or(cfg.max_k);
    let params = PostParams::new(h, dt, tau_q);
    let p = &mut report.params;
    p.insert("cell".into(), num(h));
    p.insert("dt".into(), num(dt));
    p.insert("tau_q".into(), num(tau_q));
    p.insert("max_k".into(), json!(max_k));
    p.insert("tol".into(), num(params.tol));
    let warnings = sys.check(8);
    let s1 = RegionSet::initial(&sys, h);
    let s2 = RegionSet::from_polyhedra(sys.dim, h, &target);
    timer.lap("setup");
    let verdict = semi_decide_reach(&sys, &s1, &s2, max_k, &params)?;
    timer.lap("decide");
    let name = |q: usize| sys.locations[q].name.clone();
    report.diagnostics = match &verdict {
        Verdict::Yes {
            k,
            location,
            center,
            witness,
            ..
        } => {
            let w = witness.as_ref().map(|w| {
                let steps: Vec<Value> = w
                    .steps
                    .iter()
                    .map(|s| match s {
                        WitnessStep::Time { location, from, to, t } => json!({
                            "kind": "time", "location": name(*location), "from": from, "to": to, "t": num(*t),
                        }),
                        WitnessStep::Edge { edge, from, to } => json!({
                            "kind": "edge", "edge": edge, "event": sys.edges[*edge].event.label, "from": from, "to": to,
                        }),
                    })
                    .collect();
                json!({
                    "start": { "location": name(w.start.0), "x": w.start.1 },
                    "steps": steps,
                    "end": { "location": name(w.end.0), "x": w.end.1 },
                    "distance": num(w.distance),
                })
            });
            json!({
                "verdict": "yes",
                "k": k,
                "witness_location": name(*location),
                "witness_cell_center": center,
                "trajectory": w,
                "model_warnings": warnings,
            })
        }
        Verdict::Unknown { k, fixed_point } => json!({
            "verdict": "unknown",
            "k": k,
            "fixed_point": fixed_point,
            "model_warnings": warnings,
        }),
    };
    report.status = match verdict {
        Verdict::Yes { .. } => "yes".into(),
        Verdict::Unknown { .. } => "unknown".into(),
    };
    Ok(())
}

/// Default output directory: `reachkit-out/<model stem>-<command>`.
pub fn default_out_dir(model: &Path, command: &str) -> PathBuf {
    let stem = model.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    PathBuf::from("reachkit-out").join(format!("{stem}-{command}"))
}
