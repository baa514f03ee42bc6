//! Bounded-time and invariant-constrained reach by front advection.

use std::collections::{HashMap, HashSet};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::flow::{expm, rk4, Dynamics, DEFAULT_TOL};
use crate::geometry::{Face, Polyhedron};
use crate::grid::{Cell, GridMode, GridRegion};
use crate::linalg::{dist, lerp, matvec, norm};
use crate::polyapprox::{overapproximate_step, StepOptions};

use super::boundary::{classify_boundary, sample_boundary, split_runs, Chain};
use super::{
    FaceliftError, InitialSet, ReachTube, Segment, SegmentSet, TimeGrid, TubeDiagnostics,
    TubeDirection, TubeStatus,
};

/// Substep-count doublings tried before giving up with `StepTooCoarse`.
const MAX_REFINES: usize = 6;
/// Midpoint insertions allowed per front link and substep.
const MAX_SPLIT_DEPTH: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReachOptions {
    /// Boundary sample spacing; defaults to `h/2`.
    pub boundary_spacing: Option<f64>,
    /// Integrator tolerance.
    pub tol: f64,
    /// Skip the polyhedral path even when it applies.
    pub force_grid: bool,
    /// Keep every pruned front point in the diagnostics.
    pub record_pruned: bool,
    pub step: StepOptions,
}

impl Default for ReachOptions {
    fn default() -> Self {
        Self {
            boundary_spacing: None,
            tol: DEFAULT_TOL,
            force_grid: false,
            record_pruned: false,
            step: StepOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InvariantOptions {
    pub reach: ReachOptions,
    /// Iteration cap; defaults from `tau_max` or to ten times the grid
    /// length.
    pub max_iters: Option<usize>,
    /// User bound on the exit time of every trajectory.
    pub tau_max: Option<f64>,
    /// Accumulate the escaping part `Tᵢ \ X_q` in under mode, as the
    /// procedure's pseudo-code literally reads, instead of `Tᵢ′ ∩ X_q`.
    pub literal_schematic: bool,
}

/// One flow substep of fixed length, with a cached propagator for linear
/// dynamics.
struct Stepper<'a> {
    dyn_: &'a Dynamics,
    sigma: f64,
    steps: usize,
    fwd: Option<DMatrix<f64>>,
    rev: Option<DMatrix<f64>>,
}

impl<'a> Stepper<'a> {
    fn new(dyn_: &'a Dynamics, sigma: f64, tol: f64) -> Result<Self, FaceliftError> {
        let (fwd, rev) = match dyn_ {
            Dynamics::Linear(a) => (Some(expm(a, sigma)?), Some(expm(a, -sigma)?)),
            Dynamics::Nonlinear(_) => (None, None),
        };
        Ok(Self {
            dyn_,
            sigma,
            steps: substep_rk4_count(sigma, tol),
            fwd,
            rev,
        })
    }

    fn forward(&self, x: &[f64]) -> Result<Vec<f64>, FaceliftError> {
        match &self.fwd {
            Some(m) => Ok(matvec(m, x)),
            None => Ok(rk4(self.dyn_, x, self.sigma, self.steps, 1.0)?),
        }
    }

    fn backward(&self, x: &[f64]) -> Result<Vec<f64>, FaceliftError> {
        match &self.rev {
            Some(m) => Ok(matvec(m, x)),
            None => Ok(rk4(self.dyn_, x, self.sigma, self.steps, -1.0)?),
        }
    }
}

/// RK4 steps for one short substep: step length at most `tol^{1/4}`.
fn substep_rk4_count(sigma: f64, tol: f64) -> usize {
    ((sigma / tol.powf(0.25)).ceil() as usize).max(1)
}

/// Result of advecting a front over one time step.
struct Advance {
    /// Over-raster of everything the front swept.
    sweep: GridRegion,
    /// Front at the end of the step.
    end: Vec<Chain>,
    /// Swept sample points lying outside the invariant, with their time
    /// into the step and the substep used.
    outside: Vec<(Vec<f64>, usize)>,
    sigma: f64,
    substeps: usize,
    max_disp: f64,
}

struct Engine<'a> {
    dyn_: &'a Dynamics,
    n: usize,
    h: f64,
    h_b: f64,
    tol: f64,
}

enum TryErr {
    Coarse(f64),
    Fail(FaceliftError),
}

impl From<FaceliftError> for TryErr {
    fn from(e: FaceliftError) -> Self {
        TryErr::Fail(e)
    }
}

impl<'a> Engine<'a> {
    fn advance(
        &self,
        chains: &[Chain],
        delta: f64,
        xq: Option<&Polyhedron>,
    ) -> Result<Advance, FaceliftError> {
        let vmax = chains
            .iter()
            .flat_map(|c| c.points.iter())
            .map(|p| norm(&self.dyn_.field(p)))
            .fold(0.0, f64::max);
        let mut m = ((delta * vmax / self.h).ceil() as usize).max(1);
        let mut last = 0.0;
        for _ in 0..=MAX_REFINES {
            match self.try_advance(chains, delta, m, xq) {
                Ok(a) => return Ok(a),
                Err(TryErr::Coarse(d)) => {
                    last = d;
                    m *= 2;
                }
                Err(TryErr::Fail(e)) => return Err(e),
            }
        }
        Err(FaceliftError::StepTooCoarse {
            displacement: last,
            h: self.h,
        })
    }

    fn try_advance(
        &self,
        chains: &[Chain],
        delta: f64,
        m: usize,
        xq: Option<&Polyhedron>,
    ) -> Result<Advance, TryErr> {
        let sigma = delta / m as f64;
        let stepper = Stepper::new(self.dyn_, sigma, self.tol)?;
        let mut cur: Vec<Chain> = chains.to_vec();
        let mut sweep = GridRegion::new(self.n, self.h, GridMode::Over);
        let mut outside = Vec::new();
        let mut max_disp: f64 = 0.0;
        for k in 0..m {
            let stepped: Vec<Result<(Chain, Chain, f64), FaceliftError>> = cur
                .par_iter()
                .map(|c| self.step_chain(&stepper, c))
                .collect();
            let mut starts = Vec::with_capacity(stepped.len());
            let mut ends = Vec::with_capacity(stepped.len());
            for r in stepped {
                let (p, q, d) = r?;
                max_disp = max_disp.max(d);
                starts.push(p);
                ends.push(q);
            }
            if max_disp > 2.0 * self.h {
                return Err(TryErr::Coarse(max_disp));
            }
            let local: GridRegion = starts
                .par_iter()
                .zip(ends.par_iter())
                .map(|(p, q)| self.rasterize(p, q))
                .reduce(
                    || GridRegion::new(self.n, self.h, GridMode::Over),
                    |mut a, b| {
                        a.union_with(&b);
                        a
                    },
                );
            sweep.union_with(&local);
            if let Some(xq) = xq {
                for c in &ends {
                    for q in &c.points {
                        if !xq.contains(q, 1e-9) {
                            outside.push((q.clone(), k + 1));
                        }
                    }
                }
            }
            cur = ends;
        }
        Ok(Advance {
            sweep,
            end: cur,
            outside,
            sigma,
            substeps: m,
            max_disp,
        })
    }

    /// Advects one chain by a substep, inserting flowed midpoints wherever
    /// neighbours drift more than `2h_b` apart. Returns the refined start
    /// chain, the end chain and the largest displacement.
    fn step_chain(&self, st: &Stepper, c: &Chain) -> Result<(Chain, Chain, f64), FaceliftError> {
        let q: Vec<Vec<f64>> = c
            .points
            .iter()
            .map(|p| st.forward(p))
            .collect::<Result<_, _>>()?;
        let mut disp: f64 = c.points.iter().zip(&q).map(|(a, b)| dist(a, b)).fold(0.0, f64::max);
        let n = c.points.len();
        let mut ps = Vec::with_capacity(n);
        let mut qs = Vec::with_capacity(n);
        for j in 0..n {
            ps.push(c.points[j].clone());
            qs.push(q[j].clone());
            let next = if j + 1 < n {
                Some(j + 1)
            } else if c.closed && n > 2 {
                Some(0)
            } else {
                None
            };
            if let Some(k) = next {
                self.refine(st, &c.points[j], &c.points[k], &q[j], &q[k], 0, &mut ps, &mut qs, &mut disp)?;
            }
        }
        Ok((
            Chain {
                points: ps,
                closed: c.closed,
            },
            Chain {
                points: qs,
                closed: c.closed,
            },
            disp,
        ))
    }

    #[allow(clippy::too_many_arguments)]
    fn refine(
        &self,
        st: &Stepper,
        pa: &[f64],
        pb: &[f64],
        qa: &[f64],
        qb: &[f64],
        depth: usize,
        ps: &mut Vec<Vec<f64>>,
        qs: &mut Vec<Vec<f64>>,
        disp: &mut f64,
    ) -> Result<(), FaceliftError> {
        if depth >= MAX_SPLIT_DEPTH || dist(qa, qb) <= 2.0 * self.h_b {
            return Ok(());
        }
        let pm = lerp(pa, pb, 0.5);
        let qm = st.forward(&pm)?;
        *disp = disp.max(dist(&pm, &qm));
        self.refine(st, pa, &pm, qa, &qm, depth + 1, ps, qs, disp)?;
        ps.push(pm.clone());
        qs.push(qm.clone());
        self.refine(st, &pm, pb, &qm, qb, depth + 1, ps, qs, disp)
    }

    /// Over-raster of the region swept by one chain during one substep:
    /// quads between consecutive samples in 2D, sample paths otherwise.
    fn rasterize(&self, p: &Chain, q: &Chain) -> GridRegion {
        let mut g = GridRegion::new(self.n, self.h, GridMode::Over);
        let np = p.points.len();
        for j in 0..np {
            g.mark_segment(&p.points[j], &q.points[j]);
        }
        for (i, j) in q.links() {
            if self.n == 2 {
                g.mark_triangle(&p.points[i], &p.points[j], &q.points[j]);
                g.mark_triangle(&p.points[i], &q.points[j], &q.points[i]);
            } else {
                g.mark_segment(&q.points[i], &q.points[j]);
            }
        }
        g
    }

    /// Points of `chains`, split wherever `drop` holds.
    fn prune(&self, chains: Vec<Chain>, mut drop: impl FnMut(&[f64]) -> bool) -> (Vec<Chain>, Vec<Vec<f64>>) {
        let mut out = Vec::new();
        let mut removed = Vec::new();
        for c in chains {
            let keep: Vec<bool> = c.points.iter().map(|p| !drop(p)).collect();
            for (p, k) in c.points.iter().zip(&keep) {
                if !k {
                    removed.push(p.clone());
                }
            }
            out.extend(split_runs(&c.points, &keep, c.closed));
        }
        (out, removed)
    }
}

/// Memoized reverse-flow searches from grid corners: a cell is certified
/// when every corner flows backward into X₀ (staying inside X_q when given).
struct Certifier<'a> {
    dyn_: &'a Dynamics,
    init: &'a InitialSet,
    xq: Option<&'a Polyhedron>,
    h: f64,
    tol: f64,
    memo: HashMap<Cell, Corner>,
}

#[derive(Clone)]
struct Corner {
    t: f64,
    x: Vec<f64>,
    hit: bool,
    dead: bool,
}

impl<'a> Certifier<'a> {
    fn new(dyn_: &'a Dynamics, init: &'a InitialSet, xq: Option<&'a Polyhedron>, h: f64, tol: f64) -> Self {
        Self {
            dyn_,
            init,
            xq,
            h,
            tol,
            memo: HashMap::new(),
        }
    }

    fn extend(&self, mut c: Corner, t_max: f64) -> Corner {
        let inside_q = |x: &[f64]| self.xq.is_none_or(|q| q.contains(x, 1e-12));
        loop {
            if c.hit || c.dead {
                return c;
            }
            if !inside_q(&c.x) {
                c.dead = true;
                return c;
            }
            if self.init.contains(&c.x) {
                c.hit = true;
                return c;
            }
            if c.t >= t_max {
                return c;
            }
            let speed = norm(&self.dyn_.field(&c.x));
            let sigma = (t_max - c.t).min(0.5 * self.h / speed.max(1e-12));
            match rk4(self.dyn_, &c.x, sigma, substep_rk4_count(sigma, self.tol), -1.0) {
                Ok(x) => c.x = x,
                Err(_) => {
                    c.dead = true;
                    return c;
                }
            }
            c.t += sigma;
        }
    }

    /// Cells of `candidates` whose corners all reach X₀ within `t_max`.
    fn certify(&mut self, candidates: &GridRegion, t_max: f64) -> GridRegion {
        let mut corners: HashSet<Cell> = HashSet::new();
        for c in candidates.cells() {
            corners.extend(GridRegion::corner_indices(c));
        }
        let mut todo: Vec<Cell> = corners
            .into_iter()
            .filter(|v| match self.memo.get(v) {
                Some(s) => !s.hit && !s.dead && s.t < t_max,
                None => true,
            })
            .collect();
        todo.sort();
        let grid = candidates.empty_like();
        let updated: Vec<(Cell, Corner)> = todo
            .into_par_iter()
            .map(|v| {
                let start = self.memo.get(&v).cloned().unwrap_or_else(|| Corner {
                    t: 0.0,
                    x: grid.corner_point(&v),
                    hit: false,
                    dead: false,
                });
                let s = self.extend(start, t_max);
                (v, s)
            })
            .collect();
        self.memo.extend(updated);
        let mut out = GridRegion::new(candidates.dim, candidates.h, GridMode::Under);
        for c in candidates.cells() {
            if GridRegion::corner_indices(c)
                .iter()
                .all(|v| self.memo.get(v).is_some_and(|s| s.hit))
            {
                out.insert(c.clone());
            }
        }
        out
    }
}

fn check_inputs(init: &InitialSet, dyn_: &Dynamics, h: f64) -> Result<(), FaceliftError> {
    if init.dim() != dyn_.dim() {
        return Err(FaceliftError::DimMismatch {
            expected: dyn_.dim(),
            found: init.dim(),
        });
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(FaceliftError::BadParameter(format!("cell size {h}")));
    }
    Ok(())
}

pub fn reach_bounded_time(
    init: &InitialSet,
    dyn_: &Dynamics,
    tau: f64,
    grid: &TimeGrid,
    h: f64,
    mode: GridMode,
) -> Result<ReachTube, FaceliftError> {
    reach_bounded_time_with(init, dyn_, tau, grid, h, mode, &ReachOptions::default())
}

/// Reach tube over `[0, tau]`: polyhedral steps for linear dynamics with a
/// polyhedral X₀ whose facets are each strictly outflow or strictly inflow,
/// front advection on a grid otherwise.
pub fn reach_bounded_time_with(
    init: &InitialSet,
    dyn_: &Dynamics,
    tau: f64,
    grid: &TimeGrid,
    h: f64,
    mode: GridMode,
    opts: &ReachOptions,
) -> Result<ReachTube, FaceliftError> {
    check_inputs(init, dyn_, h)?;
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(FaceliftError::BadParameter(format!("horizon {tau}")));
    }
    if tau > 0.0 && *grid.times().last().unwrap() < tau * (1.0 - 1e-12) {
        return Err(FaceliftError::BadTimeGrid(format!(
            "grid ends at {} before the horizon {tau}",
            grid.times().last().unwrap()
        )));
    }
    let mut fallback = None;
    if let (InitialSet::Poly(p), Some(a), GridMode::Over, false) = (init, dyn_.as_linear(), mode, opts.force_grid) {
        match polyhedral_tube(p, a, tau, grid, h, opts) {
            Ok(t) => return Ok(t),
            Err(reason) => fallback = Some(reason),
        }
    }
    let mut tube = grid_tube(init, dyn_, tau, grid, h, mode, opts)?;
    tube.diagnostics.fallback_reason = fallback;
    Ok(tube)
}

/// Splits the initial polyhedron into outflow faces; `Err` explains why
/// the polyhedral path does not apply.
fn outflow_faces(p: &Polyhedron, a: &DMatrix<f64>) -> Result<Vec<Face>, String> {
    if !p.equalities.is_empty() {
        return Err("initial polyhedron has equality rows".into());
    }
    if !p.is_bounded().map_err(|e| e.to_string())? {
        return Err("initial polyhedron is unbounded".into());
    }
    let p = p.normalized();
    let mut faces = Vec::new();
    for (i, row) in p.inequalities.iter().enumerate() {
        let sides: Vec<_> = p
            .inequalities
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, r)| r.clone())
            .collect();
        let face = Face::new(
            sides.iter().map(|r| r.normal.clone()).collect(),
            sides.iter().map(|r| r.offset).collect(),
            row.normal.clone(),
            row.offset,
        );
        let fp = face.to_polyhedron();
        if fp.is_empty() {
            continue;
        }
        // outflow rate aᵀAx over the facet
        let c: Vec<f64> = crate::linalg::matvec_t(a, &row.normal);
        let (hi, _) = fp.maximize(&c).map_err(|e| e.to_string())?;
        let (neg_lo, _) = fp.maximize(&c.iter().map(|v| -v).collect::<Vec<_>>()).map_err(|e| e.to_string())?;
        let lo = -neg_lo;
        if lo > 1e-9 {
            faces.push(face);
        } else if hi >= -1e-9 {
            return Err(format!("facet {i} is neither strictly outflow nor strictly inflow"));
        }
    }
    Ok(faces)
}

fn polyhedral_tube(
    p: &Polyhedron,
    a: &DMatrix<f64>,
    tau: f64,
    grid: &TimeGrid,
    h: f64,
    opts: &ReachOptions,
) -> Result<ReachTube, String> {
    let mut faces = outflow_faces(p, a)?;
    let mut segments = Vec::new();
    let mut t = 0.0;
    for i in 0..grid.steps() {
        if t >= tau * (1.0 - 1e-12) {
            break;
        }
        let delta = grid.step(i).min(tau - t);
        let mut polys = Vec::new();
        for f in faces.iter_mut() {
            let r = overapproximate_step(f, a, delta, &opts.step).map_err(|e| e.to_string())?;
            polys.extend(r.pieces.iter().map(|pc| pc.polyhedron.clone()));
            *f = r.final_face().clone();
        }
        segments.push(Segment {
            t0: t,
            t1: t + delta,
            set: SegmentSet::Polyhedra(polys),
        });
        t += delta;
    }
    Ok(ReachTube {
        dim: p.dim,
        h,
        direction: TubeDirection::Over,
        initial: SegmentSet::Polyhedra(vec![p.clone()]),
        segments,
        status: TubeStatus::Completed,
        diagnostics: TubeDiagnostics {
            polyhedral: true,
            ..Default::default()
        },
    })
}

fn grid_tube(
    init: &InitialSet,
    dyn_: &Dynamics,
    tau: f64,
    grid: &TimeGrid,
    h: f64,
    mode: GridMode,
    opts: &ReachOptions,
) -> Result<ReachTube, FaceliftError> {
    let h_b = opts.boundary_spacing.unwrap_or(0.5 * h);
    let eng = Engine {
        dyn_,
        n: dyn_.dim(),
        h,
        h_b,
        tol: opts.tol,
    };
    let mut acc = init.raster(h, mode)?;
    let initial = SegmentSet::Grid(acc.clone());
    let mut front = classify_boundary(init, dyn_, h_b)?.chains;
    let mut certifier = Certifier::new(dyn_, init, None, h, opts.tol);
    let mut diag = TubeDiagnostics::default();
    let mut segments = Vec::new();
    let mut status = TubeStatus::Completed;
    let mut t = 0.0;
    for i in 0..grid.steps() {
        if t >= tau * (1.0 - 1e-12) {
            break;
        }
        if front.is_empty() {
            status = TubeStatus::FrontCollapse { at: t };
            break;
        }
        let delta = grid.step(i).min(tau - t);
        diag.front_sizes.push(front.iter().map(|c| c.points.len()).sum());
        let adv = eng.advance(&front, delta, None)?;
        diag.total_substeps += adv.substeps;
        diag.max_displacement = diag.max_displacement.max(adv.max_disp);
        let seg = match mode {
            GridMode::Over => adv.sweep,
            GridMode::Under => certifier.certify(&adv.sweep, t + delta),
        };
        let (next, removed) = eng.prune(adv.end, |p| acc.is_interior(p));
        if opts.record_pruned {
            diag.pruned.extend(removed.into_iter().map(|p| (i, p)));
        }
        front = next;
        acc.union_with(&seg);
        segments.push(Segment {
            t0: t,
            t1: t + delta,
            set: SegmentSet::Grid(seg),
        });
        t += delta;
    }
    if status == TubeStatus::Completed && t < tau * (1.0 - 1e-12) {
        status = TubeStatus::FrontCollapse { at: t };
    }
    Ok(ReachTube {
        dim: dyn_.dim(),
        h,
        direction: match mode {
            GridMode::Over => TubeDirection::Over,
            GridMode::Under => TubeDirection::Under,
        },
        initial,
        segments,
        status,
        diagnostics: diag,
    })
}

/// Checks `X₀ ⊆ X_q`: by LP for polyhedra, by cell boxes for regions, by
/// boundary samples for level sets.
fn check_contained(init: &InitialSet, xq: &Polyhedron, h: f64) -> Result<(), FaceliftError> {
    let fail = |x: &[f64]| FaceliftError::PreconditionViolated {
        detail: format!("point {x:?} of X0 lies outside X_q"),
    };
    match init {
        InitialSet::Poly(p) => {
            for row in &xq.inequalities {
                let (v, x) = p.maximize(&row.normal)?;
                if v > row.offset + 1e-9 {
                    return Err(fail(&x));
                }
            }
        }
        // a region stands for a set it over-approximates, so only require
        // every cell to meet X_q
        InitialSet::Region(r) => {
            for c in r.cells() {
                if !r.box_meets_polyhedron(c, xq) {
                    return Err(fail(&r.center(c)));
                }
            }
        }
        InitialSet::LevelSet { .. } => {
            let (loops, _) = sample_boundary(init, 0.5 * h)?;
            for lp in loops {
                for x in lp.points {
                    if !xq.contains(&x, 1e-9) {
                        return Err(fail(&x));
                    }
                }
            }
        }
    }
    Ok(())
}

pub fn reach_invariant(
    init: &InitialSet,
    dyn_: &Dynamics,
    xq: &Polyhedron,
    grid: &TimeGrid,
    h: f64,
    under_approximate: bool,
    max_iters: usize,
) -> Result<ReachTube, FaceliftError> {
    let opts = InvariantOptions {
        max_iters: Some(max_iters),
        ..Default::default()
    };
    reach_invariant_with(init, dyn_, xq, grid, h, under_approximate, &opts)
}

/// Reach set of X₀ over unbounded time, keeping trajectories only while
/// they stay inside `xq`. Steps beyond the end of `grid` repeat its last
/// step.
pub fn reach_invariant_with(
    init: &InitialSet,
    dyn_: &Dynamics,
    xq: &Polyhedron,
    grid: &TimeGrid,
    h: f64,
    under_approximate: bool,
    opts: &InvariantOptions,
) -> Result<ReachTube, FaceliftError> {
    check_inputs(init, dyn_, h)?;
    if xq.dim != init.dim() {
        return Err(FaceliftError::DimMismatch {
            expected: init.dim(),
            found: xq.dim,
        });
    }
    if grid.steps() == 0 {
        return Err(FaceliftError::BadTimeGrid("grid has no steps".into()));
    }
    check_contained(init, xq, h)?;
    let max_iters = opts.max_iters.unwrap_or_else(|| match opts.tau_max {
        Some(tm) => (tm / grid.min_step()).ceil() as usize + 1,
        None => 10 * grid.steps(),
    });
    let mode = if under_approximate { GridMode::Under } else { GridMode::Over };
    let h_b = opts.reach.boundary_spacing.unwrap_or(0.5 * h);
    let eng = Engine {
        dyn_,
        n: dyn_.dim(),
        h,
        h_b,
        tol: opts.reach.tol,
    };
    let mut acc = init.raster(h, mode)?;
    let initial = SegmentSet::Grid(acc.clone());
    let mut front = classify_boundary(init, dyn_, h_b)?.chains;
    let mut certifier = Certifier::new(dyn_, init, Some(xq), h, opts.reach.tol);
    let mut diag = TubeDiagnostics::default();
    let mut segments = Vec::new();
    let mut t = 0.0;
    let mut i = 0;
    let status = loop {
        if front.is_empty() {
            break TubeStatus::Terminated { iterations: i };
        }
        if i >= max_iters {
            break TubeStatus::IterationCap { iterations: i };
        }
        let delta = grid.step(i);
        diag.front_sizes.push(front.iter().map(|c| c.points.len()).sum());
        let adv = eng.advance(&front, delta, Some(xq))?;
        diag.total_substeps += adv.substeps;
        diag.max_displacement = diag.max_displacement.max(adv.max_disp);
        let (seg, end) = if adv.outside.is_empty() {
            let seg = match mode {
                GridMode::Over => adv.sweep,
                GridMode::Under => certifier.certify(&adv.sweep, t + delta),
            };
            (seg, adv.end)
        } else {
            let witnesses = reverse_witnesses(&eng, &adv)?;
            let hash = SpatialHash::new(&witnesses, h);
            let (kept, removed) = eng.prune(front.clone(), |p| hash.any_within(p, h));
            diag.invariant_pruned += removed.len();
            let adv2 = eng.advance(&kept, delta, None)?;
            diag.total_substeps += adv2.substeps;
            let seg = match mode {
                GridMode::Over => {
                    let mut s = adv2.sweep.clone();
                    s.union_with(&adv.sweep.filter(|c| adv.sweep.box_meets_polyhedron(c, xq)));
                    s
                }
                GridMode::Under if opts.literal_schematic => {
                    let mut u = GridRegion::new(eng.n, h, GridMode::Under);
                    for (x, _) in &adv.outside {
                        u.mark_point(x);
                    }
                    u
                }
                GridMode::Under => {
                    let inside = adv2
                        .sweep
                        .filter(|c| GridRegion::corner_indices(c).iter().all(|v| xq.contains(&adv2.sweep.corner_point(v), 1e-12)));
                    certifier.certify(&inside, t + delta)
                }
            };
            (seg, adv2.end)
        };
        let (next, removed) = eng.prune(end, |p| acc.is_interior(p) || !xq.contains(p, 1e-9));
        if opts.reach.record_pruned {
            diag.pruned.extend(removed.into_iter().map(|p| (i, p)));
        }
        front = next;
        acc.union_with(&seg);
        segments.push(Segment {
            t0: t,
            t1: t + delta,
            set: SegmentSet::Grid(seg),
        });
        t += delta;
        i += 1;
    };
    Ok(ReachTube {
        dim: dyn_.dim(),
        h,
        direction: match mode {
            GridMode::Over => TubeDirection::Over,
            GridMode::Under => TubeDirection::Under,
        },
        initial,
        segments,
        status,
        diagnostics: diag,
    })
}

/// Vᵢ: reverse-flow images of every escaping sample over the part of the
/// step it has already travelled.
fn reverse_witnesses(eng: &Engine, adv: &Advance) -> Result<Vec<Vec<f64>>, FaceliftError> {
    let st = Stepper::new(eng.dyn_, adv.sigma, eng.tol)?;
    let paths: Vec<Result<Vec<Vec<f64>>, FaceliftError>> = adv
        .outside
        .par_iter()
        .map(|(u, k)| {
            let mut x = u.clone();
            let mut path = vec![x.clone()];
            for _ in 0..*k {
                x = st.backward(&x)?;
                path.push(x.clone());
            }
            Ok(path)
        })
        .collect();
    let mut out = Vec::new();
    for p in paths {
        out.extend(p?);
    }
    Ok(out)
}

/// Bucketed points for radius queries at a fixed radius.
struct SpatialHash {
    r: f64,
    buckets: HashMap<Vec<i64>, Vec<Vec<f64>>>,
}

impl SpatialHash {
    fn new(points: &[Vec<f64>], r: f64) -> Self {
        let mut buckets: HashMap<Vec<i64>, Vec<Vec<f64>>> = HashMap::new();
        for p in points {
            buckets.entry(Self::key(p, r)).or_default().push(p.clone());
        }
        Self { r, buckets }
    }

    fn key(p: &[f64], r: f64) -> Vec<i64> {
        p.iter().map(|v| (v / r).floor() as i64).collect()
    }

    fn any_within(&self, p: &[f64], d: f64) -> bool {
        let k: Cell = Self::key(p, self.r).into_iter().collect();
        crate::grid::neighborhood(&k).any(|nb| {
            self.buckets
                .get(nb.as_slice())
                .is_some_and(|b| b.iter().any(|q| dist(p, q) <= d))
        })
    }
}

/// Three grid evolutions of X₀ over `[0, τ]` and their pairwise gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    pub h: f64,
    /// Evolution of dense interior samples.
    pub full_set: GridRegion,
    /// Evolution of the whole sampled boundary.
    pub boundary: GridRegion,
    /// Evolution of the outflow front only.
    pub outflow: GridRegion,
    /// Symmetric-difference cell counts: full/boundary, full/outflow,
    /// boundary/outflow.
    pub sym_diff: [usize; 3],
    /// Hausdorff distances in the same order.
    pub hausdorff: [f64; 3],
    pub max_gap: f64,
    pub passes: bool,
}

pub fn check_boundary_equivalence(
    init: &InitialSet,
    dyn_: &Dynamics,
    tau: f64,
    h: f64,
) -> Result<EquivalenceReport, FaceliftError> {
    check_inputs(init, dyn_, h)?;
    let dt = if tau > 0.0 { tau.min(0.1) } else { 1.0 };
    let grid = TimeGrid::uniform(dt, tau)?;
    let h_b = 0.5 * h;
    let eng = Engine {
        dyn_,
        n: dyn_.dim(),
        h,
        h_b,
        tol: DEFAULT_TOL,
    };
    let base = init.raster(h, GridMode::Over)?;

    let evolve = |chains: Vec<Chain>| -> Result<GridRegion, FaceliftError> {
        let mut acc = base.clone();
        let mut front = chains;
        let mut t = 0.0;
        for i in 0..grid.steps() {
            let delta = grid.step(i).min(tau - t);
            if delta <= 0.0 || front.is_empty() {
                break;
            }
            let adv = eng.advance(&front, delta, None)?;
            acc.union_with(&adv.sweep);
            front = adv.end;
            t += delta;
        }
        Ok(acc)
    };

    let (lo, hi) = init.bounding_box()?;
    let step = 0.5 * h;
    let range: Vec<(i64, i64)> = lo.iter().zip(&hi).map(|(l, u)| (0, ((u - l) / step).ceil() as i64)).collect();
    let dense: Vec<Chain> = crate::grid::box_cells(&range)
        .map(|c| c.iter().zip(&lo).zip(&hi).map(|((&i, l), u)| (l + i as f64 * step).min(*u)).collect::<Vec<f64>>())
        .filter(|x| init.contains(x))
        .map(|x| Chain::open(vec![x]))
        .collect();
    let full_set = evolve(dense)?;

    let (loops, _) = sample_boundary(init, h_b)?;
    let all_boundary: Vec<Chain> = loops
        .into_iter()
        .map(|l| Chain {
            points: l.points,
            closed: l.closed,
        })
        .collect();
    let boundary = evolve(all_boundary)?;

    let opts = ReachOptions {
        force_grid: true,
        boundary_spacing: Some(h_b),
        ..Default::default()
    };
    let outflow = if tau > 0.0 {
        reach_bounded_time_with(init, dyn_, tau, &grid, h, GridMode::Over, &opts)?.occupancy()
    } else {
        base.clone()
    };

    let pairs = [(&full_set, &boundary), (&full_set, &outflow), (&boundary, &outflow)];
    let sym_diff = pairs.map(|(a, b)| a.symmetric_difference_count(b));
    let hausdorff = pairs.map(|(a, b)| a.hausdorff(b));
    let max_gap = hausdorff.iter().cloned().fold(0.0, f64::max);
    Ok(EquivalenceReport {
        h,
        full_set,
        boundary,
        outflow,
        sym_diff,
        hausdorff,
        max_gap,
        passes: max_gap <= 2.0 * h + 1e-12,
    })
}
