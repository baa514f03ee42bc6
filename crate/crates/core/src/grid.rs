//! Sparse occupancy grids: unions of axis-aligned cells of side `h` anchored
//! at the origin. Cell `c` covers `[cⱼh, (cⱼ+1)h)` on every axis.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::geometry::Polyhedron;
use crate::linalg::dist;
use crate::lp::LinearProgram;

pub type Cell = SmallVec<[i64; 4]>;

/// Inflation applied to cell boxes in intersection tests, so that sets
/// touching a cell face mark the cell.
pub const CELL_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GridMode {
    Over,
    Under,
}

impl GridMode {
    pub fn as_str(self) -> &'static str {
        match self {
            GridMode::Over => "over",
            GridMode::Under => "under",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRegion {
    pub dim: usize,
    pub h: f64,
    pub mode: GridMode,
    cells: BTreeSet<Cell>,
}

impl GridRegion {
    pub fn new(dim: usize, h: f64, mode: GridMode) -> Self {
        assert!(h > 0.0 && h.is_finite(), "cell size must be positive");
        Self {
            dim,
            h,
            mode,
            cells: BTreeSet::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> impl Iterator<Item = &Cell> {
        self.cells.iter()
    }

    pub fn cell_of(&self, x: &[f64]) -> Cell {
        x.iter().map(|v| (v / self.h).floor() as i64).collect()
    }

    pub fn center(&self, c: &Cell) -> Vec<f64> {
        c.iter().map(|&i| (i as f64 + 0.5) * self.h).collect()
    }

    pub fn lower(&self, c: &Cell) -> Vec<f64> {
        c.iter().map(|&i| i as f64 * self.h).collect()
    }

    /// Integer corner indices of a cell (corner `v` sits at `v·h`).
    pub fn corner_indices(c: &Cell) -> Vec<Cell> {
        let n = c.len();
        (0..1usize << n)
            .map(|mask| {
                c.iter()
                    .enumerate()
                    .map(|(j, &i)| i + ((mask >> j) & 1) as i64)
                    .collect()
            })
            .collect()
    }

    pub fn corner_point(&self, v: &Cell) -> Vec<f64> {
        v.iter().map(|&i| i as f64 * self.h).collect()
    }

    pub fn insert(&mut self, c: Cell) -> bool {
        debug_assert_eq!(c.len(), self.dim);
        self.cells.insert(c)
    }

    pub fn remove(&mut self, c: &Cell) -> bool {
        self.cells.remove(c)
    }

    pub fn contains_cell(&self, c: &Cell) -> bool {
        self.cells.contains(c)
    }

    pub fn contains_point(&self, x: &[f64]) -> bool {
        self.cells.contains(&self.cell_of(x))
    }

    /// True when the cell of `x` and all of its 3ⁿ − 1 neighbours are marked.
    pub fn is_interior(&self, x: &[f64]) -> bool {
        let c = self.cell_of(x);
        neighborhood(&c).all(|n| self.cells.contains(&n))
    }

    pub fn mark_point(&mut self, x: &[f64]) {
        let c = self.cell_of(x);
        self.cells.insert(c);
    }

    fn cell_range(&self, lo: &[f64], hi: &[f64]) -> Vec<(i64, i64)> {
        lo.iter()
            .zip(hi)
            .map(|(l, u)| {
                (
                    ((l - CELL_EPS) / self.h).floor() as i64,
                    ((u + CELL_EPS) / self.h).floor() as i64,
                )
            })
            .collect()
    }

    /// Marks every cell whose (slightly inflated) box meets segment `ab`.
    pub fn mark_segment(&mut self, a: &[f64], b: &[f64]) {
        let len = dist(a, b);
        let pieces = (len / self.h).ceil().max(1.0) as usize;
        for p in 0..pieces {
            let t0 = p as f64 / pieces as f64;
            let t1 = (p + 1) as f64 / pieces as f64;
            let s: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + t0 * (y - x)).collect();
            let e: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + t1 * (y - x)).collect();
            let lo: Vec<f64> = s.iter().zip(&e).map(|(x, y)| x.min(*y)).collect();
            let hi: Vec<f64> = s.iter().zip(&e).map(|(x, y)| x.max(*y)).collect();
            let range = self.cell_range(&lo, &hi);
            for c in box_cells(&range) {
                if segment_meets_box(&s, &e, &self.lower(&c), self.h) {
                    self.cells.insert(c);
                }
            }
        }
    }

    /// Marks every cell whose box meets triangle `abc` (2D only).
    pub fn mark_triangle(&mut self, a: &[f64], b: &[f64], c: &[f64]) {
        assert_eq!(self.dim, 2, "triangles are rasterized in 2D only");
        let tri = [[a[0], a[1]], [b[0], b[1]], [c[0], c[1]]];
        let lo = [
            tri.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min),
            tri.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min),
        ];
        let hi = [
            tri.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max),
            tri.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max),
        ];
        let range = self.cell_range(&lo, &hi);
        for cell in box_cells(&range) {
            let l = self.lower(&cell);
            if triangle_meets_box(&tri, [l[0], l[1]], self.h) {
                self.cells.insert(cell);
            }
        }
    }

    /// Over mode: cells whose box meets `p`. Under mode: cells whose box lies
    /// inside `p`.
    pub fn mark_polyhedron(&mut self, p: &Polyhedron) {
        let Ok(bbox) = p.bounding_box() else {
            return;
        };
        let lo: Vec<f64> = bbox.iter().map(|b| b.0).collect();
        let hi: Vec<f64> = bbox.iter().map(|b| b.1).collect();
        let range = self.cell_range(&lo, &hi);
        for c in box_cells(&range) {
            let keep = match self.mode {
                GridMode::Over => self.box_meets_polyhedron(&c, p),
                GridMode::Under => Self::corner_indices(&c)
                    .iter()
                    .all(|v| p.contains(&self.corner_point(v), 0.0)),
            };
            if keep {
                self.cells.insert(c);
            }
        }
    }

    /// Exact (LP) test whether the inflated cell box meets `p`.
    pub fn box_meets_polyhedron(&self, c: &Cell, p: &Polyhedron) -> bool {
        let lo = self.lower(c);
        let h = self.h;
        let mut undecided = false;
        let center = self.center(c);
        for row in &p.inequalities {
            // min over the box of the row value
            let m: f64 = row
                .normal
                .iter()
                .zip(&lo)
                .map(|(a, l)| if *a >= 0.0 { a * (l - CELL_EPS) } else { a * (l + h + CELL_EPS) })
                .sum::<f64>()
                - row.offset;
            if m > 0.0 {
                return false;
            }
            let radius: f64 = row.normal.iter().map(|a| a.abs() * (0.5 * h + CELL_EPS)).sum();
            if row.eval(&center) > -radius {
                undecided = true;
            }
        }
        if !undecided && p.equalities.is_empty() {
            return true;
        }
        let mut lp = LinearProgram::new(self.dim);
        for row in p.inequalities.iter() {
            lp.le(&row.normal, row.offset);
        }
        for row in p.equalities.iter() {
            lp.eq(&row.normal, row.offset);
        }
        for j in 0..self.dim {
            let mut e = vec![0.0; self.dim];
            e[j] = 1.0;
            lp.le(&e, lo[j] + h + CELL_EPS);
            e[j] = -1.0;
            lp.le(&e, -(lo[j] - CELL_EPS));
        }
        lp.feasible_point().is_ok()
    }

    pub fn union_with(&mut self, other: &GridRegion) {
        self.check_compatible(other);
        self.cells.extend(other.cells.iter().cloned());
    }

    pub fn union(&self, other: &GridRegion) -> GridRegion {
        let mut out = self.clone();
        out.union_with(other);
        out
    }

    pub fn intersection(&self, other: &GridRegion) -> GridRegion {
        self.check_compatible(other);
        GridRegion {
            cells: self.cells.intersection(&other.cells).cloned().collect(),
            ..self.empty_like()
        }
    }

    pub fn difference(&self, other: &GridRegion) -> GridRegion {
        self.check_compatible(other);
        GridRegion {
            cells: self.cells.difference(&other.cells).cloned().collect(),
            ..self.empty_like()
        }
    }

    pub fn is_subset(&self, other: &GridRegion) -> bool {
        self.cells.is_subset(&other.cells)
    }

    pub fn intersects(&self, other: &GridRegion) -> bool {
        let (small, big) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        small.cells.iter().any(|c| big.cells.contains(c))
    }

    pub fn symmetric_difference_count(&self, other: &GridRegion) -> usize {
        self.cells.symmetric_difference(&other.cells).count()
    }

    pub fn empty_like(&self) -> GridRegion {
        GridRegion::new(self.dim, self.h, self.mode)
    }

    pub fn with_mode(mut self, mode: GridMode) -> GridRegion {
        self.mode = mode;
        self
    }

    /// Cells kept by `pred`.
    pub fn filter(&self, mut pred: impl FnMut(&Cell) -> bool) -> GridRegion {
        GridRegion {
            cells: self.cells.iter().filter(|c| pred(c)).cloned().collect(),
            ..self.empty_like()
        }
    }

    /// Per-axis `(min, max)` of the marked cells' extent.
    pub fn extent(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let first = self.cells.iter().next()?;
        let mut lo: Vec<i64> = first.to_vec();
        let mut hi: Vec<i64> = first.to_vec();
        for c in &self.cells {
            for j in 0..self.dim {
                lo[j] = lo[j].min(c[j]);
                hi[j] = hi[j].max(c[j]);
            }
        }
        Some((
            lo.iter().map(|&i| i as f64 * self.h).collect(),
            hi.iter().map(|&i| (i + 1) as f64 * self.h).collect(),
        ))
    }

    /// Directed Hausdorff distance between cell centers: the largest distance
    /// from a cell of `self` to the nearest cell of `other`.
    pub fn directed_hausdorff(&self, other: &GridRegion) -> f64 {
        self.check_compatible(other);
        if self.is_empty() {
            return 0.0;
        }
        if other.is_empty() {
            return f64::INFINITY;
        }
        let mut worst: f64 = 0.0;
        for c in &self.cells {
            if other.cells.contains(c) {
                continue;
            }
            worst = worst.max(other.nearest_cell_distance(c));
        }
        worst
    }

    pub fn hausdorff(&self, other: &GridRegion) -> f64 {
        self.directed_hausdorff(other).max(other.directed_hausdorff(self))
    }

    /// Center distance from `c` to the nearest marked cell, by expanding
    /// Chebyshev rings.
    fn nearest_cell_distance(&self, c: &Cell) -> f64 {
        let n = self.dim as f64;
        let mut best = f64::INFINITY;
        let mut r = 1i64;
        loop {
            // any cell at Chebyshev radius r is at Euclidean distance ≥ r
            if (r as f64) > best {
                break;
            }
            let range: Vec<(i64, i64)> = c.iter().map(|&i| (i - r, i + r)).collect();
            for d in box_cells(&range) {
                let cheb = d.iter().zip(c).map(|(a, b)| (a - b).abs()).max().unwrap_or(0);
                if cheb != r || !self.cells.contains(&d) {
                    continue;
                }
                let e: f64 = d
                    .iter()
                    .zip(c)
                    .map(|(a, b)| ((a - b) as f64).powi(2))
                    .sum::<f64>()
                    .sqrt();
                best = best.min(e);
            }
            r += 1;
            if r as f64 > 4.0 * n.sqrt() * 1e6 {
                break;
            }
        }
        best * self.h
    }

    fn check_compatible(&self, other: &GridRegion) {
        assert_eq!(self.dim, other.dim, "grid dimension mismatch");
        assert!(
            (self.h - other.h).abs() <= 1e-15 * self.h,
            "grid cell size mismatch"
        );
    }
}

/// All cells in the inclusive index box.
pub fn box_cells(range: &[(i64, i64)]) -> impl Iterator<Item = Cell> + '_ {
    let total: usize = range
        .iter()
        .map(|(l, u)| (u - l + 1).max(0) as usize)
        .product();
    (0..total).map(move |mut k| {
        let mut c = Cell::with_capacity(range.len());
        for (l, u) in range {
            let w = (u - l + 1) as usize;
            c.push(l + (k % w) as i64);
            k /= w;
        }
        c
    })
}

/// The cell and its 3ⁿ − 1 neighbours.
pub fn neighborhood(c: &Cell) -> impl Iterator<Item = Cell> {
    let range: Vec<(i64, i64)> = c.iter().map(|&i| (i - 1, i + 1)).collect();
    let cells: Vec<Cell> = box_cells(&range).collect();
    cells.into_iter()
}

/// Slab test of segment `ab` against the box `[lo, lo+h]`, inflated by
/// `CELL_EPS`.
fn segment_meets_box(a: &[f64], b: &[f64], lo: &[f64], h: f64) -> bool {
    let mut t0: f64 = 0.0;
    let mut t1: f64 = 1.0;
    for j in 0..a.len() {
        let l = lo[j] - CELL_EPS;
        let u = lo[j] + h + CELL_EPS;
        let d = b[j] - a[j];
        if d.abs() < 1e-300 {
            if a[j] < l || a[j] > u {
                return false;
            }
            continue;
        }
        let (mut s0, mut s1) = ((l - a[j]) / d, (u - a[j]) / d);
        if s0 > s1 {
            std::mem::swap(&mut s0, &mut s1);
        }
        t0 = t0.max(s0);
        t1 = t1.min(s1);
        if t0 > t1 {
            return false;
        }
    }
    true
}

/// Separating-axis test of a triangle against the inflated box.
fn triangle_meets_box(tri: &[[f64; 2]; 3], lo: [f64; 2], h: f64) -> bool {
    let bl = [lo[0] - CELL_EPS, lo[1] - CELL_EPS];
    let bu = [lo[0] + h + CELL_EPS, lo[1] + h + CELL_EPS];
    for j in 0..2 {
        let mn = tri.iter().map(|p| p[j]).fold(f64::INFINITY, f64::min);
        let mx = tri.iter().map(|p| p[j]).fold(f64::NEG_INFINITY, f64::max);
        if mx < bl[j] || mn > bu[j] {
            return false;
        }
    }
    let corners = [[bl[0], bl[1]], [bu[0], bl[1]], [bu[0], bu[1]], [bl[0], bu[1]]];
    for e in 0..3 {
        let p = tri[e];
        let q = tri[(e + 1) % 3];
        let n = [q[1] - p[1], p[0] - q[0]];
        if n[0] == 0.0 && n[1] == 0.0 {
            continue;
        }
        let proj = |v: &[f64; 2]| n[0] * v[0] + n[1] * v[1];
        let tri_vals: Vec<f64> = tri.iter().map(proj).collect();
        let tmin = tri_vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let tmax = tri_vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let bvals: Vec<f64> = corners.iter().map(proj).collect();
        let bmin = bvals.iter().cloned().fold(f64::INFINITY, f64::min);
        let bmax = bvals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if bmax < tmin || bmin > tmax {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Halfspace;

    fn cell(v: &[i64]) -> Cell {
        v.iter().cloned().collect()
    }

    #[test]
    fn point_and_cell_indexing() {
        let g = GridRegion::new(2, 0.5, GridMode::Over);
        assert_eq!(g.cell_of(&[0.74, -0.01]), cell(&[1, -1]));
        assert_eq!(g.center(&cell(&[1, -1])), vec![0.75, -0.25]);
        assert_eq!(GridRegion::corner_indices(&cell(&[0, 0])).len(), 4);
    }

    #[test]
    fn segment_marks_traversed_cells() {
        let mut g = GridRegion::new(2, 1.0, GridMode::Over);
        g.mark_segment(&[0.5, 0.5], &[2.5, 0.5]);
        assert_eq!(g.len(), 3);
        let mut d = GridRegion::new(2, 1.0, GridMode::Over);
        d.mark_segment(&[0.5, 0.5], &[2.5, 2.5]);
        // diagonal through corners touches the corner-adjacent cells too
        assert!(d.contains_cell(&cell(&[1, 1])));
        assert!(d.contains_cell(&cell(&[2, 2])));
        assert!(!d.contains_cell(&cell(&[2, 0])));
    }

    #[test]
    fn triangle_rasterization() {
        let mut g = GridRegion::new(2, 1.0, GridMode::Over);
        g.mark_triangle(&[0.1, 0.1], &[3.9, 0.1], &[0.1, 3.9]);
        assert!(g.contains_cell(&cell(&[0, 0])));
        assert!(g.contains_cell(&cell(&[2, 1])));
        assert!(!g.contains_cell(&cell(&[3, 3])));
        // the hypotenuse passes through the corner (2, 2), touching this cell
        assert!(g.contains_cell(&cell(&[2, 2])));
        assert!(!g.contains_cell(&cell(&[3, 2])));
    }

    #[test]
    fn polyhedron_over_and_under() {
        let sq = Polyhedron::from_box(&[0.0, 0.0], &[1.0, 1.0]);
        let mut over = GridRegion::new(2, 0.25, GridMode::Over);
        over.mark_polyhedron(&sq);
        let mut under = GridRegion::new(2, 0.25, GridMode::Under);
        under.mark_polyhedron(&sq);
        assert_eq!(under.len(), 16);
        // the cells across each face are touched as well
        assert_eq!(over.len(), 36);
        assert!(under.is_subset(&over));

        let tri = Polyhedron::from_inequalities(
            2,
            vec![
                Halfspace::new(vec![-1.0, 0.0], 0.0),
                Halfspace::new(vec![0.0, -1.0], 0.0),
                Halfspace::new(vec![1.0, 1.0], 1.0),
            ],
        );
        let mut o = GridRegion::new(2, 0.1, GridMode::Over);
        o.mark_polyhedron(&tri);
        assert!(o.contains_point(&[0.45, 0.45]));
        assert!(!o.contains_point(&[0.65, 0.65]));
    }

    #[test]
    fn set_algebra_and_interior() {
        let mut a = GridRegion::new(2, 1.0, GridMode::Over);
        for c in box_cells(&[(0, 2), (0, 2)]) {
            a.insert(c);
        }
        assert!(a.is_interior(&[1.5, 1.5]));
        assert!(!a.is_interior(&[0.5, 1.5]));
        let mut b = a.empty_like();
        b.insert(cell(&[2, 2]));
        b.insert(cell(&[5, 5]));
        assert_eq!(a.intersection(&b).len(), 1);
        assert_eq!(a.difference(&b).len(), 8);
        assert_eq!(a.union(&b).len(), 10);
        assert_eq!(a.symmetric_difference_count(&b), 9);
        assert!((b.directed_hausdorff(&a) - 3f64.hypot(3.0)).abs() < 1e-12);
        assert_eq!(a.directed_hausdorff(&a), 0.0);
    }
}
