//! Face lifting: reach sets computed by evolving only the part of the
//! initial set's boundary where the flow points outward (or along it).
//!
//! Sets are stored as [`GridRegion`]s in general. For linear dynamics with a
//! polyhedral initial set whose facets are each strictly outflow or strictly
//! inflow, bounded-time tubes are built from polyhedral step
//! over-approximations instead.

mod boundary;
mod export;
mod reach;

pub use boundary::{classify_boundary, BoundaryFront, BoundarySample, Chain, Tag};
pub use export::{write_tube, ManifestSegment, TubeManifest};
pub use reach::{
    check_boundary_equivalence, reach_bounded_time, reach_bounded_time_with, reach_invariant,
    reach_invariant_with, EquivalenceReport, InvariantOptions, ReachOptions,
};

use thiserror::Error;

use crate::flow::{Expr, FlowError, ParseError};
use crate::geometry::{GeometryError, Polyhedron};
use crate::grid::{GridMode, GridRegion};
use crate::polyapprox::PolyError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FaceliftError {
    #[error("initial set has no samplable boundary")]
    EmptyBoundary,
    #[error("sample moved {displacement} in one substep, more than twice the cell size {h}")]
    StepTooCoarse { displacement: f64, h: f64 },
    #[error("initial set is not contained in the invariant: {detail}")]
    PreconditionViolated { detail: String },
    #[error("bad time grid: {0}")]
    BadTimeGrid(String),
    #[error("bad parameter: {0}")]
    BadParameter(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("level-set expression: {0}")]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// X₀, with `ℓ < 0` inside for level sets.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialSet {
    /// `{x : ℓ(x) ≤ 0}`, searched for inside the box `[lo, hi]`.
    LevelSet {
        ell: Expr,
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    Poly(Polyhedron),
    /// A union of grid cells, such as a previous tube's occupancy.
    Region(GridRegion),
}

impl InitialSet {
    pub fn level_set(src: &str, lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, FaceliftError> {
        if lo.len() != hi.len() || lo.iter().zip(&hi).any(|(l, u)| !(l < u)) {
            return Err(FaceliftError::BadParameter(
                "level-set search box needs lo < hi on every axis".into(),
            ));
        }
        let ell = Expr::parse(src, lo.len())?;
        Ok(InitialSet::LevelSet { ell, lo, hi })
    }

    pub fn dim(&self) -> usize {
        match self {
            InitialSet::LevelSet { lo, .. } => lo.len(),
            InitialSet::Poly(p) => p.dim,
            InitialSet::Region(r) => r.dim,
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            InitialSet::LevelSet { ell, lo, hi } => {
                x.iter().zip(lo.iter().zip(hi)).all(|(v, (l, u))| v >= l && v <= u) && ell.eval(x) <= 0.0
            }
            InitialSet::Poly(p) => p.contains(x, 1e-12),
            InitialSet::Region(r) => r.contains_point(x),
        }
    }

    /// Axis-aligned bounds.
    pub fn bounding_box(&self) -> Result<(Vec<f64>, Vec<f64>), FaceliftError> {
        match self {
            InitialSet::LevelSet { lo, hi, .. } => Ok((lo.clone(), hi.clone())),
            InitialSet::Poly(p) => {
                let b = p.bounding_box()?;
                Ok((b.iter().map(|v| v.0).collect(), b.iter().map(|v| v.1).collect()))
            }
            InitialSet::Region(r) => r.extent().ok_or(FaceliftError::EmptyBoundary),
        }
    }

    /// Grid image of the set: cells meeting it (over) or inside it (under).
    pub fn raster(&self, h: f64, mode: GridMode) -> Result<GridRegion, FaceliftError> {
        let n = self.dim();
        match self {
            InitialSet::Poly(p) => {
                let mut g = GridRegion::new(n, h, mode);
                g.mark_polyhedron(p);
                Ok(g)
            }
            InitialSet::Region(r) => {
                if (r.h - h).abs() > 1e-15 * h {
                    return Err(FaceliftError::BadParameter(format!(
                        "region cell size {} differs from requested {h}",
                        r.h
                    )));
                }
                Ok(r.clone().with_mode(mode))
            }
            InitialSet::LevelSet { ell, lo, hi } => {
                let mut g = GridRegion::new(n, h, mode);
                let grad = ell.gradient(n);
                let range: Vec<(i64, i64)> = lo
                    .iter()
                    .zip(hi)
                    .map(|(l, u)| ((l / h).floor() as i64, (u / h).floor() as i64))
                    .collect();
                let half_diag = 0.5 * h * (n as f64).sqrt();
                for c in crate::grid::box_cells(&range) {
                    let corners = GridRegion::corner_indices(&c);
                    let pts: Vec<Vec<f64>> = corners.iter().map(|v| g.corner_point(v)).collect();
                    let keep = match mode {
                        GridMode::Under => pts.iter().all(|p| self.contains(p)),
                        GridMode::Over => {
                            let center = g.center(&c);
                            // Lipschitz-style test from gradients sampled at
                            // the center and corners
                            let slope = std::iter::once(&center)
                                .chain(pts.iter())
                                .map(|p| grad.iter().map(|d| d.eval(p).powi(2)).sum::<f64>().sqrt())
                                .fold(0.0, f64::max);
                            let v = ell.eval(&center);
                            v <= slope * half_diag * 1.5 + 1e-12
                                || pts.iter().any(|p| ell.eval(p) <= 0.0)
                        }
                    };
                    if keep {
                        g.insert(c);
                    }
                }
                Ok(g)
            }
        }
    }
}

/// Increasing time points `0 = τ₀ < τ₁ < …`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    /// `τᵢ = i·dt` up to `horizon`, with the last step clamped to end
    /// exactly at `horizon`.
    pub fn uniform(dt: f64, horizon: f64) -> Result<Self, FaceliftError> {
        if !(dt > 0.0 && dt.is_finite()) || !(horizon >= 0.0 && horizon.is_finite()) {
            return Err(FaceliftError::BadTimeGrid(format!(
                "dt = {dt}, horizon = {horizon}"
            )));
        }
        let mut times = vec![0.0];
        let mut i = 1usize;
        loop {
            let t = i as f64 * dt;
            if t >= horizon * (1.0 - 1e-12) {
                if horizon > 0.0 {
                    times.push(horizon);
                }
                break;
            }
            times.push(t);
            i += 1;
        }
        Ok(Self { times })
    }

    pub fn from_times(times: Vec<f64>) -> Result<Self, FaceliftError> {
        if times.first() != Some(&0.0) {
            return Err(FaceliftError::BadTimeGrid("grid must start at 0".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
            return Err(FaceliftError::BadTimeGrid(
                "grid must be finite and strictly increasing".into(),
            ));
        }
        Ok(Self { times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    /// Step `i`, repeating the last step beyond the end of the grid.
    pub fn step(&self, i: usize) -> f64 {
        let n = self.steps();
        if n == 0 {
            return 0.0;
        }
        let j = i.min(n - 1);
        self.times[j + 1] - self.times[j]
    }

    pub fn min_step(&self) -> f64 {
        self.times
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TubeDirection {
    Over,
    Under,
    ExactSampled,
}

impl TubeDirection {
    pub fn as_str(self) -> &'static str {
        match self {
            TubeDirection::Over => "over",
            TubeDirection::Under => "under",
            TubeDirection::ExactSampled => "exact-sampled",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SegmentSet {
    Grid(GridRegion),
    Polyhedra(Vec<Polyhedron>),
}

impl SegmentSet {
    /// Grid image (polyhedra are rasterized in over mode).
    pub fn to_grid(&self, dim: usize, h: f64) -> GridRegion {
        match self {
            SegmentSet::Grid(g) => g.clone(),
            SegmentSet::Polyhedra(ps) => {
                let mut g = GridRegion::new(dim, h, GridMode::Over);
                for p in ps {
                    g.mark_polyhedron(p);
                }
                g
            }
        }
    }
}

/// Set swept over `[t0, t1]` (only the part added by that step).
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub t0: f64,
    pub t1: f64,
    pub set: SegmentSet,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TubeStatus {
    /// The whole horizon was covered.
    Completed,
    /// Every front sample was pruned before the horizon; the tube is closed.
    FrontCollapse { at: f64 },
    /// Invariant-constrained reach ended with an empty front.
    Terminated { iterations: usize },
    /// Invariant-constrained reach stopped at the iteration cap.
    IterationCap { iterations: usize },
}

impl TubeStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            TubeStatus::Completed => "completed",
            TubeStatus::FrontCollapse { .. } => "front-collapse",
            TubeStatus::Terminated { .. } => "terminated",
            TubeStatus::IterationCap { .. } => "iteration-cap",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TubeDiagnostics {
    pub total_substeps: usize,
    pub max_displacement: f64,
    pub front_sizes: Vec<usize>,
    /// Front points removed because they re-entered the accumulated set,
    /// with the iteration that removed them (kept only on request).
    pub pruned: Vec<(usize, Vec<f64>)>,
    /// Front points removed because their trajectories left the invariant.
    pub invariant_pruned: usize,
    pub polyhedral: bool,
    pub fallback_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReachTube {
    pub dim: usize,
    pub h: f64,
    pub direction: TubeDirection,
    /// X⁺(0).
    pub initial: SegmentSet,
    pub segments: Vec<Segment>,
    pub status: TubeStatus,
    pub diagnostics: TubeDiagnostics,
}

impl ReachTube {
    pub fn iterations(&self) -> usize {
        self.segments.len()
    }

    /// `τ₀ < τ₁ < …` actually used.
    pub fn times(&self) -> Vec<f64> {
        let mut t = vec![0.0];
        t.extend(self.segments.iter().map(|s| s.t1));
        t
    }

    /// X⁺(τ_i) for `i = 0..=segments.len()`, as grids.
    pub fn cumulative(&self) -> Vec<GridRegion> {
        let mut acc = self.initial.to_grid(self.dim, self.h);
        let mut out = vec![acc.clone()];
        for s in &self.segments {
            acc.union_with(&s.set.to_grid(self.dim, self.h));
            out.push(acc.clone());
        }
        out
    }

    /// Union of the initial set and all segments.
    pub fn occupancy(&self) -> GridRegion {
        let mut acc = self.initial.to_grid(self.dim, self.h);
        for s in &self.segments {
            acc.union_with(&s.set.to_grid(self.dim, self.h));
        }
        acc
    }

    /// Membership in the polyhedral segments (or the grid occupancy).
    pub fn covers(&self, x: &[f64], tol: f64) -> bool {
        let hit = |s: &SegmentSet| match s {
            SegmentSet::Grid(g) => g.contains_point(x),
            SegmentSet::Polyhedra(ps) => ps.iter().any(|p| p.contains(x, tol)),
        };
        hit(&self.initial) || self.segments.iter().any(|s| hit(&s.set))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid_clamps_last_step() {
        let g = TimeGrid::uniform(0.3, 1.0).unwrap();
        assert_eq!(g.times().len(), 5);
        assert_eq!(*g.times().last().unwrap(), 1.0);
        assert!((g.step(3) - 0.1).abs() < 1e-12);
        assert!((g.step(10) - 0.1).abs() < 1e-12);
        assert_eq!(TimeGrid::uniform(0.5, 1.0).unwrap().times(), &[0.0, 0.5, 1.0]);
        assert_eq!(TimeGrid::uniform(0.5, 0.0).unwrap().steps(), 0);
        assert!(TimeGrid::from_times(vec![0.0, 0.2, 0.2]).is_err());
        assert!(TimeGrid::uniform(0.0, 1.0).is_err());
    }

    #[test]
    fn level_set_raster_modes() {
        let disk = InitialSet::level_set("x1*x1 + x2*x2 - 1", vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap();
        let over = disk.raster(0.1, GridMode::Over).unwrap();
        let under = disk.raster(0.1, GridMode::Under).unwrap();
        assert!(under.is_subset(&over));
        let area = std::f64::consts::PI;
        assert!((under.len() as f64) * 0.01 < area);
        assert!((over.len() as f64) * 0.01 > area);
        for k in 0..64 {
            let th = k as f64 * 0.1;
            assert!(over.contains_point(&[th.cos(), th.sin()]));
        }
    }
}
