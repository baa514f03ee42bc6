//! Polyhedral kernel: halfspaces, H-polyhedra, faces in orthonormalized form,
//! LP-backed emptiness and boundedness, and 2D vertex and hull routines.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::expm;
use crate::linalg::{complement_basis, dot, matvec, norm, scale};
use crate::lp::{LinearProgram, LpError};

/// Row tolerance for tightness, membership and duplicate detection.
pub const ROW_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("face constraint system is infeasible")]
    InfeasibleFace,
    #[error("side row {row} projects to a zero normal but its offset empties the face")]
    DegenerateNormal { row: usize },
    #[error("base normal is zero")]
    ZeroBaseNormal,
    #[error("matrix exponential out of floating-point range")]
    NumericRange,
    #[error("polyhedron is empty")]
    EmptyPolyhedron,
    #[error("polyhedron is unbounded")]
    Unbounded,
    #[error("2D polygon is unbounded")]
    Unbounded2D,
    #[error("2D polygon is empty")]
    Empty2D,
    #[error("need at least 2 distinct points for a hull, found {found}")]
    TooFewPoints { found: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("operation supports dimension 2 only, got {dim}")]
    DimUnsupported { dim: usize },
    #[error("LP failure: {0}")]
    Lp(LpError),
}

/// `{x : normalᵀx − offset ≤ 0}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Halfspace {
    pub fn new(normal: Vec<f64>, offset: f64) -> Self {
        Self { normal, offset }
    }

    pub fn dim(&self) -> usize {
        self.normal.len()
    }

    /// `normalᵀx − offset`
    pub fn eval(&self, x: &[f64]) -> f64 {
        dot(&self.normal, x) - self.offset
    }

    /// Scales the row to a unit normal. Rows already unit to within a few
    /// ulps are returned untouched so that a second pass is a bitwise no-op.
    pub fn normalize(&self) -> Halfspace {
        let l = norm(&self.normal);
        if l == 0.0 || (l - 1.0).abs() <= 4.0 * f64::EPSILON {
            return self.clone();
        }
        Halfspace {
            normal: scale(&self.normal, 1.0 / l),
            offset: self.offset / l,
        }
    }

    fn near(&self, other: &Halfspace, tol: f64) -> bool {
        (self.offset - other.offset).abs() <= tol
            && self
                .normal
                .iter()
                .zip(&other.normal)
                .all(|(a, b)| (a - b).abs() <= tol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyhedron {
    pub dim: usize,
    pub inequalities: Vec<Halfspace>,
    /// Rows read as `normalᵀx − offset = 0`.
    pub equalities: Vec<Halfspace>,
}

impl Polyhedron {
    /// The whole space.
    pub fn universe(dim: usize) -> Self {
        Self {
            dim,
            inequalities: Vec::new(),
            equalities: Vec::new(),
        }
    }

    pub fn from_inequalities(dim: usize, rows: Vec<Halfspace>) -> Self {
        assert!(rows.iter().all(|r| r.dim() == dim));
        Self {
            dim,
            inequalities: rows,
            equalities: Vec::new(),
        }
    }

    /// Axis-aligned box `lo ≤ x ≤ hi`.
    pub fn from_box(lo: &[f64], hi: &[f64]) -> Self {
        let n = lo.len();
        let mut rows = Vec::with_capacity(2 * n);
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            rows.push(Halfspace::new(e.clone(), hi[j]));
            e[j] = -1.0;
            rows.push(Halfspace::new(e, -lo[j]));
        }
        Self::from_inequalities(n, rows)
    }

    pub fn push_le(&mut self, h: Halfspace) {
        assert_eq!(h.dim(), self.dim);
        self.inequalities.push(h);
    }

    pub fn push_eq(&mut self, h: Halfspace) {
        assert_eq!(h.dim(), self.dim);
        self.equalities.push(h);
    }

    /// Largest row violation at `x` (≤ 0 inside).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let le = self.inequalities.iter().map(|h| h.eval(x));
        let eq = self.equalities.iter().map(|h| h.eval(x).abs());
        le.chain(eq).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.inequalities.iter().all(|h| h.eval(x) <= tol)
            && self.equalities.iter().all(|h| h.eval(x).abs() <= tol)
    }

    fn program(&self) -> LinearProgram {
        let mut lp = LinearProgram::new(self.dim);
        for h in &self.inequalities {
            lp.le(&h.normal, h.offset);
        }
        for h in &self.equalities {
            lp.eq(&h.normal, h.offset);
        }
        lp
    }

    pub fn feasible_point(&self) -> Option<Vec<f64>> {
        self.program().feasible_point().ok()
    }

    /// Exact LP feasibility verdict.
    pub fn is_empty(&self) -> bool {
        matches!(self.program().feasible_point(), Err(LpError::Infeasible))
    }

    /// `max cᵀx` with its maximizer.
    pub fn maximize(&self, c: &[f64]) -> Result<(f64, Vec<f64>), GeometryError> {
        let mut lp = self.program();
        lp = lp.maximize(c);
        match lp.solve() {
            Ok(s) => Ok((s.value, s.x)),
            Err(LpError::Infeasible) => Err(GeometryError::EmptyPolyhedron),
            Err(LpError::Unbounded) => Err(GeometryError::Unbounded),
            Err(e) => Err(GeometryError::Lp(e)),
        }
    }

    /// True iff every coordinate direction `±eⱼ` has a finite maximum.
    pub fn is_bounded(&self) -> Result<bool, GeometryError> {
        if self.is_empty() {
            return Err(GeometryError::EmptyPolyhedron);
        }
        for j in 0..self.dim {
            for s in [1.0, -1.0] {
                let mut e = vec![0.0; self.dim];
                e[j] = s;
                match self.maximize(&e) {
                    Ok(_) => {}
                    Err(GeometryError::Unbounded) => return Ok(false),
                    Err(e) => return Err(e),
                }
            }
        }
        Ok(true)
    }

    /// Per-coordinate `(min, max)`.
    pub fn bounding_box(&self) -> Result<Vec<(f64, f64)>, GeometryError> {
        (0..self.dim)
            .map(|j| {
                let mut e = vec![0.0; self.dim];
                e[j] = 1.0;
                let hi = self.maximize(&e)?.0;
                e[j] = -1.0;
                let lo = -self.maximize(&e)?.0;
                Ok((lo, hi))
            })
            .collect()
    }

    /// Rows scaled to unit normals with near-duplicates removed.
    pub fn normalized(&self) -> Polyhedron {
        let mut out = Polyhedron::universe(self.dim);
        for h in &self.inequalities {
            let h = h.normalize();
            if !out.inequalities.iter().any(|g| g.near(&h, ROW_TOL)) {
                out.inequalities.push(h);
            }
        }
        for h in &self.equalities {
            let h = h.normalize();
            let neg = Halfspace::new(scale(&h.normal, -1.0), -h.offset);
            if !out
                .equalities
                .iter()
                .any(|g| g.near(&h, ROW_TOL) || g.near(&neg, ROW_TOL))
            {
                out.equalities.push(h);
            }
        }
        out
    }

    /// Vertices of a bounded nonempty polygon in counter-clockwise order.
    pub fn vertices_2d(&self) -> Result<Vec<Vec<f64>>, GeometryError> {
        if self.dim != 2 {
            return Err(GeometryError::DimUnsupported { dim: self.dim });
        }
        match self.is_bounded() {
            Err(GeometryError::EmptyPolyhedron) => return Err(GeometryError::Empty2D),
            Err(e) => return Err(e),
            Ok(false) => return Err(GeometryError::Unbounded2D),
            Ok(true) => {}
        }
        let p = self.normalized();
        let lines: Vec<&Halfspace> = p.inequalities.iter().chain(&p.equalities).collect();
        let mut pts: Vec<[f64; 2]> = Vec::new();
        for i in 0..lines.len() {
            for j in i + 1..lines.len() {
                let (a, b) = (lines[i], lines[j]);
                let det = a.normal[0] * b.normal[1] - a.normal[1] * b.normal[0];
                if det.abs() < 1e-12 {
                    continue;
                }
                let x = (a.offset * b.normal[1] - b.offset * a.normal[1]) / det;
                let y = (a.normal[0] * b.offset - b.normal[0] * a.offset) / det;
                let tol = ROW_TOL * (1.0 + x.abs().max(y.abs()));
                if p.contains(&[x, y], tol) {
                    pts.push([x, y]);
                }
            }
        }
        if pts.is_empty() {
            return Err(GeometryError::Empty2D);
        }
        let mut uniq: Vec<[f64; 2]> = Vec::new();
        for q in pts {
            if !uniq
                .iter()
                .any(|u| (u[0] - q[0]).abs() <= ROW_TOL && (u[1] - q[1]).abs() <= ROW_TOL)
            {
                uniq.push(q);
            }
        }
        let n = uniq.len() as f64;
        let cx = uniq.iter().map(|q| q[0]).sum::<f64>() / n;
        let cy = uniq.iter().map(|q| q[1]).sum::<f64>() / n;
        uniq.sort_by(|a, b| {
            let ta = (a[1] - cy).atan2(a[0] - cx);
            let tb = (b[1] - cy).atan2(b[0] - cx);
            ta.total_cmp(&tb)
        });
        Ok(uniq.into_iter().map(|q| q.to_vec()).collect())
    }

    /// Shoelace area of the 2D polygon (0 for degenerate ones).
    pub fn area_2d(&self) -> Result<f64, GeometryError> {
        let v = self.vertices_2d()?;
        Ok(polygon_area(&v))
    }
}

/// Shoelace area of a counter-clockwise vertex list.
pub fn polygon_area(v: &[Vec<f64>]) -> f64 {
    if v.len() < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..v.len() {
        let j = (i + 1) % v.len();
        s += v[i][0] * v[j][1] - v[j][0] * v[i][1];
    }
    0.5 * s.abs()
}

/// Row concatenation with duplicate removal.
pub fn intersect(ps: &[Polyhedron]) -> Result<Polyhedron, GeometryError> {
    let Some(first) = ps.first() else {
        return Err(GeometryError::DimMismatch {
            expected: 1,
            found: 0,
        });
    };
    let mut all = Polyhedron::universe(first.dim);
    for p in ps {
        if p.dim != first.dim {
            return Err(GeometryError::DimMismatch {
                expected: first.dim,
                found: p.dim,
            });
        }
        all.inequalities.extend(p.inequalities.iter().cloned());
        all.equalities.extend(p.equalities.iter().cloned());
    }
    Ok(all.normalized())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HullKind {
    Proper,
    /// All points on one line: the hull is a segment, stored as a zero-width
    /// strip with two end caps.
    Collinear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hull2d {
    pub polyhedron: Polyhedron,
    pub kind: HullKind,
    /// Hull vertices, counter-clockwise.
    pub vertices: Vec<Vec<f64>>,
}

fn cross(o: &[f64; 2], a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Minimal H-representation of the convex hull of 2D points, unit outward
/// normals, one row per hull edge in counter-clockwise order.
pub fn convex_hull_2d(points: &[Vec<f64>]) -> Result<Hull2d, GeometryError> {
    if let Some(p) = points.iter().find(|p| p.len() != 2) {
        return Err(GeometryError::DimUnsupported { dim: p.len() });
    }
    let mut pts: Vec<[f64; 2]> = points.iter().map(|p| [p[0], p[1]]).collect();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup_by(|a, b| (a[0] - b[0]).abs() <= 1e-12 && (a[1] - b[1]).abs() <= 1e-12);
    if pts.len() < 2 {
        return Err(GeometryError::TooFewPoints { found: pts.len() });
    }
    // Andrew's monotone chain
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for p in iter {
            while hull.len() >= start + 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 1e-12 {
                hull.pop();
            }
            hull.push(*p);
        }
        hull.pop();
    }
    if hull.len() < 3 {
        let (a, b) = (pts[0], pts[pts.len() - 1]);
        let d = [b[0] - a[0], b[1] - a[1]];
        let l = (d[0] * d[0] + d[1] * d[1]).sqrt();
        let d = [d[0] / l, d[1] / l];
        let n = [-d[1], d[0]];
        let c = n[0] * a[0] + n[1] * a[1];
        let rows = vec![
            Halfspace::new(n.to_vec(), c),
            Halfspace::new(vec![-n[0], -n[1]], -c),
            Halfspace::new(d.to_vec(), d[0] * b[0] + d[1] * b[1]),
            Halfspace::new(vec![-d[0], -d[1]], -(d[0] * a[0] + d[1] * a[1])),
        ];
        return Ok(Hull2d {
            polyhedron: Polyhedron::from_inequalities(2, rows),
            kind: HullKind::Collinear,
            vertices: vec![a.to_vec(), b.to_vec()],
        });
    }
    let m = hull.len();
    let rows = (0..m)
        .map(|i| {
            let (p, q) = (hull[i], hull[(i + 1) % m]);
            let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
            let l = (dx * dx + dy * dy).sqrt();
            let n = vec![dy / l, -dx / l];
            let c = n[0] * p[0] + n[1] * p[1];
            Halfspace::new(n, c)
        })
        .collect();
    Ok(Hull2d {
        polyhedron: Polyhedron::from_inequalities(2, rows),
        kind: HullKind::Proper,
        vertices: hull.iter().map(|p| p.to_vec()).collect(),
    })
}

/// `{x : aᵢᵀx ≤ bᵢ (i < k), a_kᵀx = b_k}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Face {
    pub side_normals: Vec<Vec<f64>>,
    pub side_offsets: Vec<f64>,
    pub base_normal: Vec<f64>,
    pub base_offset: f64,
    pub orthonormalized: bool,
}

impl Face {
    pub fn new(
        side_normals: Vec<Vec<f64>>,
        side_offsets: Vec<f64>,
        base_normal: Vec<f64>,
        base_offset: f64,
    ) -> Self {
        assert_eq!(side_normals.len(), side_offsets.len());
        assert!(side_normals.iter().all(|a| a.len() == base_normal.len()));
        Self {
            side_normals,
            side_offsets,
            base_normal,
            base_offset,
            orthonormalized: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.base_normal.len()
    }

    /// Number of constraint rows, base included.
    pub fn k(&self) -> usize {
        self.side_normals.len() + 1
    }

    pub fn to_polyhedron(&self) -> Polyhedron {
        let mut p = Polyhedron::universe(self.dim());
        for (a, b) in self.side_normals.iter().zip(&self.side_offsets) {
            p.push_le(Halfspace::new(a.clone(), *b));
        }
        p.push_eq(Halfspace::new(self.base_normal.clone(), self.base_offset));
        p
    }

    /// Checks unit normals and `aᵢᵀa_k = 0` within `tol`.
    pub fn is_orthonormal(&self, tol: f64) -> bool {
        (norm(&self.base_normal) - 1.0).abs() <= tol
            && self
                .side_normals
                .iter()
                .all(|a| (norm(a) - 1.0).abs() <= tol && dot(a, &self.base_normal).abs() <= tol)
    }

    /// Points of the face on a lattice with `nx` intervals per in-plane axis
    /// (bounding box taken in an orthonormal basis of the base plane), plus
    /// the extreme points along each basis direction. Doubling `nx` yields a
    /// superset of the lattice.
    pub fn lattice(&self, nx: usize) -> Result<Vec<Vec<f64>>, GeometryError> {
        let nx = nx.max(1);
        let p = self.to_polyhedron();
        let unit = norm(&self.base_normal);
        let ak = scale(&self.base_normal, 1.0 / unit);
        let origin = scale(&ak, self.base_offset / unit);
        let basis = complement_basis(&ak);
        let mut ranges = Vec::with_capacity(basis.len());
        let mut extremes = Vec::new();
        for e in &basis {
            let (hi, xh) = p.maximize(e)?;
            let neg = scale(e, -1.0);
            let (lo, xl) = p.maximize(&neg)?;
            ranges.push((-lo, hi));
            extremes.push(xl);
            extremes.push(xh);
        }
        let mut out = Vec::new();
        let dims = basis.len();
        let mut idx = vec![0usize; dims];
        loop {
            let mut x = origin.clone();
            for (d, e) in basis.iter().enumerate() {
                let (lo, hi) = ranges[d];
                let s = lo + (hi - lo) * idx[d] as f64 / nx as f64;
                for (xi, ei) in x.iter_mut().zip(e) {
                    *xi += s * ei;
                }
            }
            let tol = ROW_TOL * (1.0 + norm(&x));
            if self
                .side_normals
                .iter()
                .zip(&self.side_offsets)
                .all(|(a, b)| dot(a, &x) - b <= tol)
            {
                out.push(x);
            }
            // odometer increment
            let mut d = 0;
            while d < dims {
                idx[d] += 1;
                if idx[d] <= nx {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
            if d == dims {
                break;
            }
        }
        if dims > 1 {
            out.extend(extremes);
        }
        if out.is_empty() {
            out.push(origin);
        }
        Ok(out)
    }
}

/// Side row projected off the unit base normal `ak`: returns `None` when the
/// residual normal vanishes.
fn project_side(a: &[f64], b: f64, ak: &[f64], bk: f64) -> Option<(Vec<f64>, f64)> {
    let c = dot(a, ak);
    let r: Vec<f64> = a.iter().zip(ak).map(|(x, y)| x - c * y).collect();
    let off = b - c * bk;
    let l = norm(&r);
    if l <= 1e-10 * norm(a).max(1.0) {
        return None;
    }
    let h = Halfspace::new(r, off).normalize();
    Some((h.normal, h.offset))
}

fn orthogonalize(
    sides: &[Vec<f64>],
    offsets: &[f64],
    base: &[f64],
    base_offset: f64,
) -> Result<Face, GeometryError> {
    let l = norm(base);
    if l == 0.0 {
        return Err(GeometryError::ZeroBaseNormal);
    }
    let bh = Halfspace::new(base.to_vec(), base_offset).normalize();
    let mut normals = Vec::with_capacity(sides.len());
    let mut offs = Vec::with_capacity(sides.len());
    for (row, (a, b)) in sides.iter().zip(offsets).enumerate() {
        match project_side(a, *b, &bh.normal, bh.offset) {
            Some((n, o)) => {
                normals.push(n);
                offs.push(o);
            }
            None => {
                let c = dot(a, &bh.normal);
                if b - c * bh.offset < -ROW_TOL * (1.0 + b.abs()) {
                    return Err(GeometryError::DegenerateNormal { row });
                }
            }
        }
    }
    Ok(Face {
        side_normals: normals,
        side_offsets: offs,
        base_normal: bh.normal,
        base_offset: bh.offset,
        orthonormalized: true,
    })
}

/// Brings a face to the form with unit normals and sides orthogonal to the
/// base, describing the same point set. Side rows that project to zero are
/// dropped.
pub fn normalize_and_orthogonalize(raw: &Face) -> Result<Face, GeometryError> {
    let face = orthogonalize(
        &raw.side_normals,
        &raw.side_offsets,
        &raw.base_normal,
        raw.base_offset,
    )?;
    if face.to_polyhedron().is_empty() {
        return Err(GeometryError::InfeasibleFace);
    }
    Ok(face)
}

/// `F_Δ = e^{AΔ}F`, by transporting every normal with `e^{−AᵀΔ}` and
/// re-orthonormalizing against the transported base.
pub fn propagate_face(face: &Face, a: &DMatrix<f64>, delta: f64) -> Result<Face, GeometryError> {
    assert!(delta >= 0.0, "propagate_face needs delta ≥ 0");
    let e = expm(&(-a.transpose()), delta).map_err(|_| GeometryError::NumericRange)?;
    let base = matvec(&e, &face.base_normal);
    let sides: Vec<Vec<f64>> = face.side_normals.iter().map(|s| matvec(&e, s)).collect();
    if base.iter().chain(sides.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(GeometryError::NumericRange);
    }
    orthogonalize(&sides, &face.side_offsets, &base, face.base_offset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

    fn example2_face() -> Face {
        Face::new(
            vec![vec![1.0, 0.0], vec![-1.0, 0.0]],
            vec![SQRT_2, -1.0],
            vec![0.0, 1.0],
            0.0,
        )
    }

    fn rotation() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0])
    }

    #[test]
    fn normalize_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let h = Halfspace::new(
                (0..3).map(|_| rng.random_range(-5.0..5.0)).collect(),
                rng.random_range(-5.0..5.0),
            );
            let once = h.normalize();
            assert!((norm(&once.normal) - 1.0).abs() < 1e-12);
            assert_eq!(once.normalize(), once);
        }
    }

    #[test]
    fn orthonormal_face_unchanged() {
        let f = example2_face();
        let g = normalize_and_orthogonalize(&f).unwrap();
        assert_eq!(g.side_normals, f.side_normals);
        assert_eq!(g.side_offsets, f.side_offsets);
        assert_eq!(g.base_normal, f.base_normal);
        assert_eq!(g.base_offset, f.base_offset);
        assert!(g.orthonormalized);
    }

    #[test]
    fn tilted_side_is_projected_keeping_the_segment() {
        let s = 1.0 / SQRT_2;
        let raw = Face::new(
            vec![vec![s, s], vec![-1.0, 0.0]],
            vec![1.0, 0.0],
            vec![0.0, 2.0],
            1.0,
        );
        let f = normalize_and_orthogonalize(&raw).unwrap();
        assert!(f.is_orthonormal(1e-12));
        assert!((f.side_normals[0][0] - 1.0).abs() < 1e-15);
        let (rp, fp) = (raw.to_polyhedron(), f.to_polyhedron());
        for i in -300..=300 {
            let x = [i as f64 / 100.0, 0.5];
            assert_eq!(rp.contains(&x, 1e-12), fp.contains(&x, 1e-12), "{x:?}");
        }
    }

    #[test]
    fn point_face_is_fixed() {
        let f = Face::new(
            vec![vec![1.0, 0.0], vec![-1.0, 0.0]],
            vec![0.5, -0.5],
            vec![0.0, 1.0],
            2.0,
        );
        let g = normalize_and_orthogonalize(&f).unwrap();
        assert_eq!(g.side_offsets, f.side_offsets);
        assert_eq!(g.to_polyhedron().vertices_2d().unwrap(), vec![vec![0.5, 2.0]]);
    }

    #[test]
    fn orthogonalize_errors() {
        let empty = Face::new(
            vec![vec![1.0, 0.0], vec![-1.0, 0.0]],
            vec![0.0, -1.0],
            vec![0.0, 1.0],
            0.0,
        );
        assert_eq!(
            normalize_and_orthogonalize(&empty).unwrap_err(),
            GeometryError::InfeasibleFace
        );
        // side parallel to the base with an offset excluding the base plane
        let degenerate = Face::new(vec![vec![0.0, 1.0]], vec![-1.0], vec![0.0, 1.0], 0.0);
        assert_eq!(
            normalize_and_orthogonalize(&degenerate).unwrap_err(),
            GeometryError::DegenerateNormal { row: 0 }
        );
        // parallel but harmless: dropped
        let redundant = Face::new(
            vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![-1.0, 0.0]],
            vec![1.0, 1.0, 0.0],
            vec![0.0, 1.0],
            0.0,
        );
        assert_eq!(normalize_and_orthogonalize(&redundant).unwrap().k(), 3);
    }

    #[test]
    fn propagate_example2() {
        let f = propagate_face(&example2_face(), &rotation(), PI / 6.0).unwrap();
        assert!((f.base_normal[0] + 0.5).abs() < 1e-14);
        assert!((f.base_normal[1] - 3f64.sqrt() / 2.0).abs() < 1e-14);
        assert!(f.base_offset.abs() < 1e-15);
        assert!((f.side_normals[0][0] - 3f64.sqrt() / 2.0).abs() < 1e-14);
        assert!((f.side_normals[0][1] - 0.5).abs() < 1e-14);
        assert!(f.is_orthonormal(1e-12));
    }

    #[test]
    fn propagate_zero_matrix_is_identity() {
        let f = example2_face();
        let g = propagate_face(&f, &DMatrix::zeros(2, 2), 0.7).unwrap();
        assert_eq!(g.side_normals, f.side_normals);
        assert_eq!(g.base_normal, f.base_normal);
        assert_eq!(g.base_offset, f.base_offset);
    }

    fn random_face(rng: &mut ChaCha8Rng, n: usize) -> Face {
        loop {
            let ak: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            if norm(&ak) < 0.2 {
                continue;
            }
            let bk = rng.random_range(-1.0..1.0);
            let basis = complement_basis(&scale(&ak, 1.0 / norm(&ak)));
            let mut sides = Vec::new();
            let mut offs = Vec::new();
            for e in &basis {
                let lo = rng.random_range(0.1..1.0);
                let hi = rng.random_range(0.1..1.0);
                sides.push(e.clone());
                offs.push(hi);
                sides.push(scale(e, -1.0));
                offs.push(lo);
            }
            if let Ok(f) = normalize_and_orthogonalize(&Face::new(sides, offs, ak, bk)) {
                return f;
            }
        }
    }

    #[test]
    fn propagate_transports_vertices() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let n = rng.random_range(2..=3);
            let f = random_face(&mut rng, n);
            let a = DMatrix::from_fn(n, n, |i, j| {
                rng.random_range(-1.0..1.0) - if i == j { 1.0 } else { 0.0 }
            });
            let t = rng.random_range(0.0..1.0);
            let g = propagate_face(&f, &a, t).unwrap();
            assert!(g.is_orthonormal(1e-10));
            let e = expm(&a, t).unwrap();
            let gp = g.to_polyhedron();
            for x in f.lattice(6).unwrap() {
                let y = matvec(&e, &x);
                assert!(gp.equalities[0].eval(&y).abs() < 1e-8);
                assert!(gp.contains(&y, 1e-8));
            }
        }
    }

    #[test]
    fn propagate_composes() {
        let a = DMatrix::from_row_slice(2, 2, &[-0.3, -1.0, 1.2, 0.1]);
        let f = example2_face();
        let twice = propagate_face(&propagate_face(&f, &a, 0.3).unwrap(), &a, 0.5).unwrap();
        let once = propagate_face(&f, &a, 0.8).unwrap();
        let (p, q) = (twice.to_polyhedron(), once.to_polyhedron());
        let e = expm(&a, 0.8).unwrap();
        for x in f.lattice(50).unwrap() {
            let y = matvec(&e, &x);
            assert_eq!(p.contains(&y, 1e-7), q.contains(&y, 1e-7));
            assert!(p.contains(&y, 1e-7));
        }
        for (u, v) in twice.side_normals.iter().zip(&once.side_normals) {
            assert!(u.iter().zip(v).all(|(a, b)| (a - b).abs() < 1e-12));
        }
    }

    #[test]
    fn lattice_covers_segment() {
        let pts = example2_face().lattice(4).unwrap();
        assert_eq!(pts.len(), 5);
        assert!((pts[0][0] - 1.0).abs() < 1e-12 && (pts[4][0] - SQRT_2).abs() < 1e-12);
        let fine = example2_face().lattice(8).unwrap();
        for p in &pts {
            assert!(fine.iter().any(|q| (q[0] - p[0]).abs() < 1e-14));
        }
    }

    #[test]
    fn boundedness_examples() {
        assert!(Polyhedron::from_box(&[0.0, 0.0], &[1.0, 1.0]).is_bounded().unwrap());
        let half = Polyhedron::from_inequalities(2, vec![Halfspace::new(vec![1.0, 0.0], 0.0)]);
        assert!(!half.is_bounded().unwrap());
        let mut empty = Polyhedron::from_box(&[0.0], &[1.0]);
        empty.push_le(Halfspace::new(vec![1.0], -1.0));
        assert_eq!(empty.is_bounded(), Err(GeometryError::EmptyPolyhedron));
    }

    #[test]
    fn emptiness_examples() {
        let mut p = Polyhedron::universe(1);
        p.push_le(Halfspace::new(vec![1.0], 0.0));
        p.push_le(Halfspace::new(vec![-1.0], -1.0));
        assert!(p.is_empty());
        assert!(!Polyhedron::from_box(&[0.0, 0.0], &[1.0, 1.0]).is_empty());
    }

    #[test]
    fn square_vertices_and_hull() {
        let sq = Polyhedron::from_box(&[0.0, 0.0], &[1.0, 1.0]);
        let v = sq.vertices_2d().unwrap();
        assert_eq!(v.len(), 4);
        assert_eq!(v[0], vec![0.0, 0.0]);
        assert_eq!(v[1], vec![1.0, 0.0]);
        let h = convex_hull_2d(&v).unwrap();
        assert_eq!(h.kind, HullKind::Proper);
        assert_eq!(h.polyhedron.inequalities.len(), 4);
        assert!((sq.area_2d().unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hull_of_example2_endpoints_has_bottom_row() {
        let (s3, r2) = (3f64.sqrt(), SQRT_2);
        let pts = vec![
            vec![1.0, 0.0],
            vec![r2, 0.0],
            vec![s3 / 2.0, 0.5],
            vec![s3 / r2, 1.0 / r2],
        ];
        let h = convex_hull_2d(&pts).unwrap();
        assert_eq!(h.polyhedron.inequalities.len(), 4);
        assert!(h
            .polyhedron
            .inequalities
            .iter()
            .any(|r| r.normal == vec![0.0, -1.0] && r.offset == 0.0));
    }

    #[test]
    fn hull_edge_cases() {
        assert_eq!(
            convex_hull_2d(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap_err(),
            GeometryError::TooFewPoints { found: 1 }
        );
        let h = convex_hull_2d(&[vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0]]).unwrap();
        assert_eq!(h.kind, HullKind::Collinear);
        assert!(h.polyhedron.contains(&[1.5, 1.5], 1e-12));
        assert!(!h.polyhedron.contains(&[2.5, 2.5], 1e-12));
        assert!(!h.polyhedron.contains(&[1.0, 1.1], 1e-12));
    }

    #[test]
    fn random_hull_contains_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let pts: Vec<Vec<f64>> = (0..30)
                .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
                .collect();
            let h = convex_hull_2d(&pts).unwrap();
            for p in &pts {
                assert!(h.polyhedron.contains(p, 1e-12));
            }
            for r in &h.polyhedron.inequalities {
                assert!((norm(&r.normal) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn random_triangle_vertices_are_tight() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let pts: Vec<Vec<f64>> = (0..3)
                .map(|_| vec![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)])
                .collect();
            let h = convex_hull_2d(&pts).unwrap();
            if h.kind != HullKind::Proper {
                continue;
            }
            let v = h.polyhedron.vertices_2d().unwrap();
            assert_eq!(v.len(), 3);
            for x in &v {
                let tight = h
                    .polyhedron
                    .inequalities
                    .iter()
                    .filter(|r| r.eval(x).abs() <= 1e-8)
                    .count();
                assert!(tight >= 2);
                assert!(h.polyhedron.max_violation(x) <= 1e-8);
            }
        }
    }

    #[test]
    fn intersection_of_boxes() {
        let a = Polyhedron::from_box(&[0.0, 0.0], &[2.0, 2.0]);
        let b = Polyhedron::from_box(&[1.0, 1.0], &[3.0, 3.0]);
        let c = intersect(&[a.clone(), b]).unwrap();
        assert!((c.area_2d().unwrap() - 1.0).abs() < 1e-12);
        let same = intersect(&[a.clone(), Polyhedron::universe(2)]).unwrap();
        assert_eq!(same.inequalities.len(), 4);
        let twice = intersect(&[a.clone(), a.clone()]).unwrap();
        assert_eq!(twice.inequalities.len(), 4);
        assert_eq!(
            intersect(&[a, Polyhedron::universe(3)]).unwrap_err(),
            GeometryError::DimMismatch {
                expected: 2,
                found: 3
            }
        );
    }

    #[test]
    fn rotation_quarter_turn_of_square() {
        let f = Face::new(
            vec![vec![1.0, 0.0], vec![-1.0, 0.0]],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            1.0,
        );
        let g = propagate_face(&f, &rotation(), FRAC_PI_2).unwrap();
        // the top edge y = 1, x ∈ [0,1] rotates to x = −1, y ∈ [0,1]
        assert!((g.base_normal[0] + 1.0).abs() < 1e-15 && g.base_normal[1].abs() < 1e-15);
        assert!((g.base_offset - 1.0).abs() < 1e-15);
    }
}
