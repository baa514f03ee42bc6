//! Hybrid automata over grid regions: the Post operator, a reachability
//! semi-decision loop and concrete step checking.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::facelift::{
    reach_invariant_with, FaceliftError, InitialSet, InvariantOptions, TimeGrid, TubeStatus,
};
use crate::flow::{flow, rk4, Dynamics, FlowError, DEFAULT_TOL};
use crate::geometry::{convex_hull_2d, GeometryError, Halfspace, Polyhedron};
use crate::grid::{box_cells, Cell, GridMode, GridRegion};
use crate::linalg::{dist, matvec, matvec_t, norm};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HybridError {
    #[error("unknown location {0}")]
    BadLocation(usize),
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimMismatch {
        what: String,
        expected: usize,
        found: usize,
    },
    #[error("cell size mismatch: {0} vs {1}")]
    CellMismatch(f64, f64),
    #[error("{0} is not implemented")]
    Unsupported(&'static str),
    #[error("bad parameter: {0}")]
    BadParameter(String),
    #[error(transparent)]
    Facelift(#[from] FaceliftError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Location {
    pub name: String,
    /// G(q).
    pub invariant: Polyhedron,
    pub dynamics: Dynamics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// Σ_c.
    Controllable,
    /// Σ_d.
    Disturbance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub label: String,
    pub kind: EventKind,
}

/// `x ↦ R x + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineReset {
    pub matrix: DMatrix<f64>,
    pub offset: Vec<f64>,
}

impl AffineReset {
    pub fn identity(n: usize) -> Self {
        Self {
            matrix: DMatrix::identity(n, n),
            offset: vec![0.0; n],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        matvec(&self.matrix, x)
            .iter()
            .zip(&self.offset)
            .map(|(a, b)| a + b)
            .collect()
    }

    /// Exact image of `p` when `R` is invertible.
    pub fn image(&self, p: &Polyhedron) -> Option<Polyhedron> {
        let inv = self.matrix.clone().try_inverse()?;
        let map = |h: &Halfspace| {
            let normal = matvec_t(&inv, &h.normal);
            let shift: f64 = normal.iter().zip(&self.offset).map(|(a, c)| a * c).sum();
            Halfspace::new(normal, h.offset + shift)
        };
        Some(Polyhedron {
            dim: p.dim,
            inequalities: p.inequalities.iter().map(map).collect(),
            equalities: p.equalities.iter().map(map).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    /// X_e.
    pub guard: Polyhedron,
    pub event: Event,
    pub reset: AffineReset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridSystem {
    pub dim: usize,
    pub locations: Vec<Location>,
    pub edges: Vec<Edge>,
    pub init: Vec<(usize, Polyhedron)>,
}

impl HybridSystem {
    /// Checks indices and dimensions.
    pub fn new(
        dim: usize,
        locations: Vec<Location>,
        edges: Vec<Edge>,
        init: Vec<(usize, Polyhedron)>,
    ) -> Result<Self, HybridError> {
        let dim_check = |what: String, found: usize| {
            if found != dim {
                Err(HybridError::DimMismatch {
                    what,
                    expected: dim,
                    found,
                })
            } else {
                Ok(())
            }
        };
        for l in &locations {
            dim_check(format!("invariant of {}", l.name), l.invariant.dim)?;
            dim_check(format!("dynamics of {}", l.name), l.dynamics.dim())?;
        }
        for (i, e) in edges.iter().enumerate() {
            for q in [e.from, e.to] {
                if q >= locations.len() {
                    return Err(HybridError::BadLocation(q));
                }
            }
            dim_check(format!("guard of edge {i}"), e.guard.dim)?;
            dim_check(format!("reset of edge {i}"), e.reset.offset.len())?;
            if e.reset.matrix.shape() != (dim, dim) {
                return Err(HybridError::DimMismatch {
                    what: format!("reset matrix of edge {i}"),
                    expected: dim,
                    found: e.reset.matrix.nrows(),
                });
            }
        }
        for (q, p) in &init {
            if *q >= locations.len() {
                return Err(HybridError::BadLocation(*q));
            }
            dim_check(format!("initial set in location {q}"), p.dim)?;
        }
        Ok(Self {
            dim,
            locations,
            edges,
            init,
        })
    }

    pub fn location_index(&self, name: &str) -> Option<usize> {
        self.locations.iter().position(|l| l.name == name)
    }

    /// Sample checks of `r_e(X_e ∩ G(q_e)) ⊆ G(q_e′)` and `Init ⊆ G`.
    /// Returns one message per violation found.
    pub fn check(&self, samples_per_axis: usize) -> Vec<String> {
        let mut out = Vec::new();
        for (i, e) in self.edges.iter().enumerate() {
            let mut dom = e.guard.clone();
            for r in &self.locations[e.from].invariant.inequalities {
                dom.push_le(r.clone());
            }
            for x in sample_points(&dom, samples_per_axis) {
                let y = e.reset.apply(&x);
                if !self.locations[e.to].invariant.contains(&y, 1e-6) {
                    out.push(format!("edge {i}: reset image {y:?} of {x:?} leaves the target invariant"));
                    break;
                }
            }
        }
        for (q, p) in &self.init {
            for x in sample_points(p, samples_per_axis) {
                if !self.locations[*q].invariant.contains(&x, 1e-6) {
                    out.push(format!("initial point {x:?} lies outside the invariant of location {q}"));
                    break;
                }
            }
        }
        out
    }
}

/// Lattice points of the bounding box of `p` that lie in `p`; empty when
/// `p` is empty or unbounded.
fn sample_points(p: &Polyhedron, n: usize) -> Vec<Vec<f64>> {
    let Ok(bb) = p.bounding_box() else {
        return Vec::new();
    };
    let n = n.max(1) as i64;
    let range: Vec<(i64, i64)> = bb.iter().map(|_| (0, n)).collect();
    box_cells(&range)
        .map(|c| {
            c.iter()
                .zip(&bb)
                .map(|(&i, (l, u))| l + (u - l) * i as f64 / n as f64)
                .collect::<Vec<f64>>()
        })
        .filter(|x| p.contains(x, 1e-9))
        .collect()
}

/// Per-location cell sets.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSet {
    pub h: f64,
    pub dim: usize,
    pub regions: BTreeMap<usize, GridRegion>,
    /// Number of Post applications that produced this set.
    pub generation: usize,
    /// Status of the last continuous reach run per location.
    pub statuses: BTreeMap<usize, TubeStatus>,
}

impl RegionSet {
    pub fn new(dim: usize, h: f64) -> Self {
        Self {
            h,
            dim,
            regions: BTreeMap::new(),
            generation: 0,
            statuses: BTreeMap::new(),
        }
    }

    /// Over-rasterization of `(location, polyhedron)` pairs.
    pub fn from_polyhedra(dim: usize, h: f64, sets: &[(usize, Polyhedron)]) -> Self {
        let mut s = Self::new(dim, h);
        for (q, p) in sets {
            let mut g = GridRegion::new(dim, h, GridMode::Over);
            g.mark_polyhedron(p);
            s.add(*q, &g);
        }
        s
    }

    /// The initial configurations of `sys`.
    pub fn initial(sys: &HybridSystem, h: f64) -> Self {
        Self::from_polyhedra(sys.dim, h, &sys.init)
    }

    pub fn get(&self, q: usize) -> Option<&GridRegion> {
        self.regions.get(&q)
    }

    pub fn add(&mut self, q: usize, g: &GridRegion) {
        if g.is_empty() {
            return;
        }
        self.regions
            .entry(q)
            .or_insert_with(|| GridRegion::new(self.dim, self.h, GridMode::Over))
            .union_with(g);
    }

    pub fn union_with(&mut self, other: &RegionSet) {
        for (q, g) in &other.regions {
            self.add(*q, g);
        }
    }

    pub fn total_cells(&self) -> usize {
        self.regions.values().map(|g| g.len()).sum()
    }

    pub fn is_subset(&self, other: &RegionSet) -> bool {
        self.regions
            .iter()
            .all(|(q, g)| g.is_empty() || other.get(*q).is_some_and(|o| g.is_subset(o)))
    }

    /// Same locations and cells.
    pub fn same_cells(&self, other: &RegionSet) -> bool {
        self.is_subset(other) && other.is_subset(self)
    }

    /// Common cells per location.
    pub fn intersection(&self, other: &RegionSet) -> RegionSet {
        let mut out = RegionSet::new(self.dim, self.h);
        for (q, g) in &self.regions {
            if let Some(o) = other.get(*q) {
                out.add(*q, &g.intersection(o));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Post,
    /// Predecessor sets; modeled but not implemented.
    Pre,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostParams {
    pub h: f64,
    /// Time step of the per-location reach.
    pub dt: f64,
    /// Finite per-location horizon τ_q.
    pub tau_q: f64,
    pub direction: Direction,
    pub tol: f64,
}

impl PostParams {
    pub fn new(h: f64, dt: f64, tau_q: f64) -> Self {
        Self {
            h,
            dt,
            tau_q,
            direction: Direction::Post,
            tol: DEFAULT_TOL,
        }
    }

    fn max_iters(&self) -> usize {
        ((self.tau_q / self.dt).ceil() as usize).max(1)
    }
}

/// Continuous reach of `region` inside location `q` over `[0, τ_q]`.
fn location_reach(
    sys: &HybridSystem,
    q: usize,
    region: &GridRegion,
    params: &PostParams,
) -> Result<(GridRegion, TubeStatus), HybridError> {
    let loc = &sys.locations[q];
    let inside = region.filter(|c| region.box_meets_polyhedron(c, &loc.invariant));
    if inside.is_empty() {
        return Ok((inside, TubeStatus::Terminated { iterations: 0 }));
    }
    let grid = TimeGrid::uniform(params.dt, params.dt)?;
    let mut opts = InvariantOptions {
        max_iters: Some(params.max_iters()),
        ..Default::default()
    };
    opts.reach.tol = params.tol;
    let tube = reach_invariant_with(
        &InitialSet::Region(inside.clone()),
        &loc.dynamics,
        &loc.invariant,
        &grid,
        params.h,
        false,
        &opts,
    )?;
    let occ = tube.occupancy();
    let occ = occ.filter(|c| occ.box_meets_polyhedron(c, &loc.invariant));
    Ok((occ, tube.status))
}

/// Cells of the reset image of `cell ∩ guard`, kept where they meet the
/// target invariant.
fn reset_cells(
    sys: &HybridSystem,
    e: &Edge,
    reached: &GridRegion,
    h: f64,
) -> Result<GridRegion, HybridError> {
    let n = sys.dim;
    let target_inv = &sys.locations[e.to].invariant;
    let mut out = GridRegion::new(n, h, GridMode::Over);
    for c in reached.cells() {
        if !reached.box_meets_polyhedron(c, &e.guard) {
            continue;
        }
        let lo = reached.lower(c);
        let hi: Vec<f64> = lo.iter().map(|v| v + h).collect();
        let mut piece = Polyhedron::from_box(&lo, &hi);
        for r in &e.guard.inequalities {
            piece.push_le(r.clone());
        }
        for r in &e.guard.equalities {
            piece.push_eq(r.clone());
        }
        if piece.is_empty() {
            continue;
        }
        match e.reset.image(&piece) {
            Some(img) => out.mark_polyhedron(&img),
            None => mark_singular_image(&mut out, &piece, &e.reset)?,
        }
    }
    Ok(out.filter(|c| out.box_meets_polyhedron(c, target_inv)))
}

/// Image under a singular reset: hull of vertex images in 2D, bounding box
/// of corner images otherwise.
fn mark_singular_image(
    out: &mut GridRegion,
    piece: &Polyhedron,
    reset: &AffineReset,
) -> Result<(), HybridError> {
    if piece.dim == 2 {
        let v: Vec<Vec<f64>> = piece.vertices_2d()?.iter().map(|x| reset.apply(x)).collect();
        let hull = convex_hull_2d(&v);
        match hull {
            Ok(hh) => out.mark_polyhedron(&hh.polyhedron),
            Err(_) => {
                for w in v.windows(2) {
                    out.mark_segment(&w[0], &w[1]);
                }
                if let Some(p) = v.first() {
                    out.mark_point(p);
                }
            }
        }
        return Ok(());
    }
    let bb = piece.bounding_box()?;
    let corners = GridRegion::corner_indices(&Cell::from_elem(0, piece.dim));
    let imgs: Vec<Vec<f64>> = corners
        .iter()
        .map(|m| {
            let x: Vec<f64> = m
                .iter()
                .zip(&bb)
                .map(|(&b, (l, u))| if b == 0 { *l } else { *u })
                .collect();
            reset.apply(&x)
        })
        .collect();
    let lo: Vec<f64> = (0..piece.dim).map(|j| imgs.iter().map(|x| x[j]).fold(f64::INFINITY, f64::min)).collect();
    let hi: Vec<f64> = (0..piece.dim).map(|j| imgs.iter().map(|x| x[j]).fold(f64::NEG_INFINITY, f64::max)).collect();
    out.mark_polyhedron(&Polyhedron::from_box(&lo, &hi));
    Ok(())
}

/// One application of Post: per-location time closure within the
/// invariant, plus reset images of the reached guard cells. The result
/// contains `s`.
pub fn post(sys: &HybridSystem, s: &RegionSet, params: &PostParams) -> Result<RegionSet, HybridError> {
    if params.direction == Direction::Pre {
        return Err(HybridError::Unsupported("the predecessor operator"));
    }
    if (s.h - params.h).abs() > 1e-15 * params.h {
        return Err(HybridError::CellMismatch(s.h, params.h));
    }
    let mut out = s.clone();
    out.generation = s.generation + 1;
    for (&q, region) in &s.regions {
        if q >= sys.locations.len() {
            return Err(HybridError::BadLocation(q));
        }
        if region.is_empty() {
            continue;
        }
        let (reached, status) = location_reach(sys, q, region, params)?;
        out.statuses.insert(q, status);
        for e in sys.edges.iter().filter(|e| e.from == q) {
            let img = reset_cells(sys, e, &reached, params.h)?;
            out.add(e.to, &img);
        }
        out.add(q, &reached);
    }
    Ok(out)
}

/// A concrete run: a start configuration and validated steps.
#[derive(Debug, Clone, PartialEq)]
pub enum WitnessStep {
    Time {
        location: usize,
        from: Vec<f64>,
        to: Vec<f64>,
        t: f64,
    },
    Edge {
        edge: usize,
        from: Vec<f64>,
        to: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub start: (usize, Vec<f64>),
    pub steps: Vec<WitnessStep>,
    pub end: (usize, Vec<f64>),
    /// Distance from the end point to the witness cell center.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    /// S₂ met after `k` Post applications.
    Yes {
        k: usize,
        location: usize,
        cell: Cell,
        center: Vec<f64>,
        /// Concrete run ending within `2h` of the cell, when one was found
        /// by greedy replay.
        witness: Option<Witness>,
    },
    /// No intersection within `k` applications; `fixed_point` is set when
    /// Post stopped adding cells before `k`.
    Unknown { k: usize, fixed_point: bool },
}

/// Iterates `S := Post(S)` from `s1` until `S` meets `s2` or `max_k`
/// applications were made. Yes answers come from over-approximations and
/// mean "possibly reachable"; the greedy replay looks for a concrete run.
pub fn semi_decide_reach(
    sys: &HybridSystem,
    s1: &RegionSet,
    s2: &RegionSet,
    max_k: usize,
    params: &PostParams,
) -> Result<Verdict, HybridError> {
    let mut s = s1.clone();
    for k in 0..=max_k {
        if let Some((location, cell)) = pick_witness(sys, &s.intersection(s2)) {
            let g = GridRegion::new(sys.dim, params.h, GridMode::Over);
            let center = g.center(&cell);
            let witness = replay(sys, s1, location, &center, k, params);
            return Ok(Verdict::Yes {
                k,
                location,
                cell,
                center,
                witness,
            });
        }
        if k == max_k {
            break;
        }
        let next = post(sys, &s, params)?;
        if next.same_cells(&s) {
            // Post is deterministic, so every later iterate equals this one
            return Ok(Verdict::Unknown { k: max_k, fixed_point: true });
        }
        s = next;
    }
    Ok(Verdict::Unknown { k: max_k, fixed_point: false })
}

/// First common cell, preferring cells whose center lies in the invariant.
fn pick_witness(sys: &HybridSystem, common: &RegionSet) -> Option<(usize, Cell)> {
    let mut fallback = None;
    for (&q, g) in &common.regions {
        for c in g.cells() {
            if sys.locations[q].invariant.contains(&g.center(c), 1e-9) {
                return Some((q, c.clone()));
            }
            fallback.get_or_insert((q, c.clone()));
        }
    }
    fallback
}

/// Starting points tried by the replay search.
const REPLAY_STARTS: usize = 256;

/// Depth-first search over concrete runs from cell centers of `s1`: flow
/// within the invariant, take each edge the first time its guard holds,
/// stop within `2h` of `target`.
fn replay(
    sys: &HybridSystem,
    s1: &RegionSet,
    loc: usize,
    target: &[f64],
    max_edges: usize,
    params: &PostParams,
) -> Option<Witness> {
    let mut starts: Vec<(usize, Vec<f64>)> = Vec::new();
    for (&q, g) in &s1.regions {
        for c in g.cells() {
            let x = g.center(c);
            if sys.locations[q].invariant.contains(&x, 1e-9) {
                starts.push((q, x));
            }
        }
    }
    let stride = (starts.len() / REPLAY_STARTS).max(1);
    for (q, x) in starts.into_iter().step_by(stride) {
        let mut steps = Vec::new();
        if let Some(end) = search(sys, q, &x, loc, target, max_edges, params, &mut steps) {
            if validate(sys, &steps) {
                return Some(Witness {
                    start: (q, x),
                    distance: dist(&end.1, target),
                    end,
                    steps,
                });
            }
        }
    }
    None
}

#[allow(clippy::too_many_arguments)]
fn search(
    sys: &HybridSystem,
    q: usize,
    x: &[f64],
    loc: usize,
    target: &[f64],
    edges_left: usize,
    params: &PostParams,
    steps: &mut Vec<WitnessStep>,
) -> Option<(usize, Vec<f64>)> {
    let l = &sys.locations[q];
    let reach = 2.0 * params.h;
    let mut y = x.to_vec();
    let mut t = 0.0;
    let mut taken = vec![false; sys.edges.len()];
    loop {
        if !l.invariant.contains(&y, 1e-9) {
            return None;
        }
        let time_step = |y: &[f64], t: f64| WitnessStep::Time {
            location: q,
            from: x.to_vec(),
            to: y.to_vec(),
            t,
        };
        if q == loc && dist(&y, target) <= reach {
            if t > 0.0 {
                steps.push(time_step(&y, t));
            }
            return Some((q, y));
        }
        if edges_left > 0 {
            for (i, e) in sys.edges.iter().enumerate() {
                if e.from != q || taken[i] || !e.guard.contains(&y, 1e-9) {
                    continue;
                }
                taken[i] = true;
                let z = e.reset.apply(&y);
                let mark = steps.len();
                if t > 0.0 {
                    steps.push(time_step(&y, t));
                }
                steps.push(WitnessStep::Edge {
                    edge: i,
                    from: y.clone(),
                    to: z.clone(),
                });
                if let Some(end) = search(sys, e.to, &z, loc, target, edges_left - 1, params, steps) {
                    return Some(end);
                }
                steps.truncate(mark);
            }
        }
        if t >= params.tau_q {
            return None;
        }
        let speed = norm(&l.dynamics.field(&y));
        if speed == 0.0 {
            return None;
        }
        let sigma = (0.25 * params.h / speed).min(params.tau_q - t);
        y = flow(&l.dynamics, &y, sigma, params.tol).ok()?;
        t += sigma;
    }
}

fn validate(sys: &HybridSystem, steps: &[WitnessStep]) -> bool {
    steps.iter().all(|s| match s {
        WitnessStep::Time { location, from, to, t } => {
            classify_step(sys, (*location, from), (*location, to), StepQuery::Time(*t), 1e-6) == StepClass::TimeStep
        }
        WitnessStep::Edge { edge, from, to } => {
            let e = &sys.edges[*edge];
            classify_step(sys, (e.from, from), (e.to, to), StepQuery::Edge(*edge), 1e-6)
                == StepClass::EdgeStep { edge: *edge }
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepQuery<'a> {
    Time(f64),
    Edge(usize),
    Event(&'a str),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepClass {
    TimeStep,
    EdgeStep { edge: usize },
    SigmaStep { edge: usize, event: String },
    None,
}

/// Path samples checked against the invariant for a time step.
const PATH_SAMPLES: usize = 64;

/// Checks whether `(c1, c2)` is a step of the requested kind.
pub fn classify_step(
    sys: &HybridSystem,
    c1: (usize, &[f64]),
    c2: (usize, &[f64]),
    query: StepQuery<'_>,
    tol: f64,
) -> StepClass {
    let (q1, x1) = c1;
    let (q2, x2) = c2;
    if q1 >= sys.locations.len() || q2 >= sys.locations.len() {
        return StepClass::None;
    }
    let edge_ok = |e: &Edge| {
        e.from == q1 && e.to == q2 && e.guard.contains(x1, tol) && dist(&e.reset.apply(x1), x2) <= tol
    };
    match query {
        StepQuery::Time(t) => {
            if q1 != q2 || !(t >= 0.0) {
                return StepClass::None;
            }
            let l = &sys.locations[q1];
            if !l.invariant.contains(x1, tol) {
                return StepClass::None;
            }
            if t == 0.0 {
                return if dist(x1, x2) <= tol { StepClass::TimeStep } else { StepClass::None };
            }
            let sub = t / PATH_SAMPLES as f64;
            let steps = crate::flow::rk4_steps(sub, DEFAULT_TOL);
            let mut y = x1.to_vec();
            for _ in 0..PATH_SAMPLES {
                match rk4(&l.dynamics, &y, sub, steps, 1.0) {
                    Ok(z) => y = z,
                    Err(_) => return StepClass::None,
                }
                if !l.invariant.contains(&y, tol) {
                    return StepClass::None;
                }
            }
            let scale = 1.0 + norm(x2);
            if dist(&y, x2) <= tol * scale {
                StepClass::TimeStep
            } else {
                StepClass::None
            }
        }
        StepQuery::Edge(i) => match sys.edges.get(i) {
            Some(e) if edge_ok(e) => StepClass::EdgeStep { edge: i },
            _ => StepClass::None,
        },
        StepQuery::Event(label) => sys
            .edges
            .iter()
            .enumerate()
            .find(|(_, e)| e.event.label == label && edge_ok(e))
            .map(|(i, e)| StepClass::SigmaStep {
                edge: i,
                event: e.event.label.clone(),
            })
            .unwrap_or(StepClass::None),
    }
}
