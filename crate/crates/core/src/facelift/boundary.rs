//! Boundary sampling of X₀ and the outflow test on each sample.

use std::collections::HashMap;

use crate::flow::{Dynamics, Expr};
use crate::geometry::{Face, Halfspace, Polyhedron};
use crate::grid::{box_cells, Cell, GridRegion};
use crate::linalg::{axpy, dist, dot, lerp, norm, scale};

use super::{FaceliftError, InitialSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tag {
    Outflow,
    Tangential,
    Inflow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySample {
    pub point: Vec<f64>,
    /// Unit outward normal (∇ℓ/‖∇ℓ‖ or the facet normal).
    pub normal: Vec<f64>,
    /// `normal · f(point)`.
    pub dot: f64,
    pub tol: f64,
    pub tag: Tag,
}

/// An ordered run of front points; consecutive points (and last-to-first
/// when closed) are neighbours on the front.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub points: Vec<Vec<f64>>,
    pub closed: bool,
}

impl Chain {
    pub fn open(points: Vec<Vec<f64>>) -> Self {
        Self { points, closed: false }
    }

    /// Index pairs of neighbouring points.
    pub fn links(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.points.len();
        let wrap = self.closed && n > 2;
        (0..n.saturating_sub(1))
            .map(|j| (j, j + 1))
            .chain(wrap.then_some((n - 1, 0)))
    }

    /// Splits the chain into maximal runs of points satisfying `keep`.
    pub fn split_keep(&self, keep: &[bool]) -> Vec<Chain> {
        split_runs(&self.points, keep, self.closed)
    }
}

pub(crate) fn split_runs(points: &[Vec<f64>], keep: &[bool], closed: bool) -> Vec<Chain> {
    let n = points.len();
    if n == 0 {
        return Vec::new();
    }
    if keep.iter().all(|&k| k) {
        return vec![Chain {
            points: points.to_vec(),
            closed,
        }];
    }
    // for closed loops, start right after a dropped point so runs never wrap
    let start = if closed {
        (0..n).find(|&j| !keep[j]).map(|j| j + 1).unwrap_or(0)
    } else {
        0
    };
    let mut out = Vec::new();
    let mut cur: Vec<Vec<f64>> = Vec::new();
    for s in 0..n {
        let j = (start + s) % n;
        if keep[j] {
            cur.push(points[j].clone());
        } else if !cur.is_empty() {
            out.push(Chain::open(std::mem::take(&mut cur)));
        }
    }
    if !cur.is_empty() {
        out.push(Chain::open(cur));
    }
    out
}

/// Sampled boundary of X₀ with per-sample tags; `chains` hold the kept
/// (outflow or tangential) samples in boundary order.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFront {
    pub spacing: f64,
    pub samples: Vec<BoundarySample>,
    pub chains: Vec<Chain>,
    /// Samples dropped because the gradient vanished there.
    pub dropped: usize,
}

impl BoundaryFront {
    /// S₁⁺ sample (outflow and tangential points).
    pub fn points(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.samples
            .iter()
            .filter(|s| s.tag != Tag::Inflow)
            .map(|s| &s.point)
    }

    /// Strict outflow points: an inner sample of S₀⁺.
    pub fn outflow(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.samples
            .iter()
            .filter(|s| s.tag == Tag::Outflow)
            .map(|s| &s.point)
    }

    pub fn count(&self, tag: Tag) -> usize {
        self.samples.iter().filter(|s| s.tag == tag).count()
    }

    pub fn front_len(&self) -> usize {
        self.chains.iter().map(|c| c.points.len()).sum()
    }
}

/// A boundary piece in sampling order.
pub(crate) struct Loop {
    pub points: Vec<Vec<f64>>,
    /// Candidate outward normals per point (two at polygon corners).
    pub normals: Vec<Vec<Vec<f64>>>,
    pub closed: bool,
}

/// Tags a sample using the candidate normal with the largest `n·f`.
pub(crate) fn tag_sample(dyn_: &Dynamics, point: Vec<f64>, normals: Vec<Vec<f64>>) -> BoundarySample {
    let f = dyn_.field(&point);
    let (normal, d) = normals
        .into_iter()
        .map(|n| {
            let d = dot(&n, &f);
            (n, d)
        })
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one normal");
    let tol = 1e-9 * (1.0 + norm(&f));
    let tag = if d > tol {
        Tag::Outflow
    } else if d >= -tol {
        Tag::Tangential
    } else {
        Tag::Inflow
    };
    BoundarySample {
        point,
        normal,
        dot: d,
        tol,
        tag,
    }
}

/// Samples ∂X₀ at spacing about `h_b` and tags each sample by the sign of
/// `n(x)·f(x)` with tolerance `1e-9·(1 + ‖f‖)`.
pub fn classify_boundary(
    init: &InitialSet,
    dyn_: &Dynamics,
    h_b: f64,
) -> Result<BoundaryFront, FaceliftError> {
    if !(h_b > 0.0 && h_b.is_finite()) {
        return Err(FaceliftError::BadParameter(format!("boundary spacing {h_b}")));
    }
    if init.dim() != dyn_.dim() {
        return Err(FaceliftError::DimMismatch {
            expected: dyn_.dim(),
            found: init.dim(),
        });
    }
    let (loops, dropped) = sample_boundary(init, h_b)?;
    let mut samples = Vec::new();
    let mut chains = Vec::new();
    for lp in loops {
        let tagged: Vec<BoundarySample> = lp
            .points
            .into_iter()
            .zip(lp.normals)
            .map(|(p, n)| tag_sample(dyn_, p, n))
            .collect();
        let keep: Vec<bool> = tagged.iter().map(|s| s.tag != Tag::Inflow).collect();
        let pts: Vec<Vec<f64>> = tagged.iter().map(|s| s.point.clone()).collect();
        chains.extend(split_runs(&pts, &keep, lp.closed));
        samples.extend(tagged);
    }
    if samples.is_empty() {
        return Err(FaceliftError::EmptyBoundary);
    }
    Ok(BoundaryFront {
        spacing: h_b,
        samples,
        chains,
        dropped,
    })
}

pub(crate) fn sample_boundary(
    init: &InitialSet,
    h_b: f64,
) -> Result<(Vec<Loop>, usize), FaceliftError> {
    match init {
        InitialSet::Poly(p) if p.dim == 2 => Ok((polygon_loops(p, h_b)?, 0)),
        InitialSet::Poly(p) => Ok((facet_lattices(p, h_b)?, 0)),
        InitialSet::Region(r) => Ok((region_faces(r, h_b), 0)),
        InitialSet::LevelSet { ell, lo, hi } if lo.len() == 2 => Ok(level_set_2d(ell, lo, hi, h_b)),
        InitialSet::LevelSet { ell, lo, hi } => Ok(level_set_nd(ell, lo, hi, h_b)),
    }
}

fn polygon_loops(p: &Polyhedron, h_b: f64) -> Result<Vec<Loop>, FaceliftError> {
    let v = p.vertices_2d()?;
    let n = v.len();
    let mut points = Vec::new();
    let mut normals = Vec::new();
    if n == 1 {
        let axes = (0..2).flat_map(|j| [-1.0, 1.0].map(|s| {
            let mut e = vec![0.0; 2];
            e[j] = s;
            e
        }));
        return Ok(vec![Loop {
            points: v,
            normals: vec![axes.collect()],
            closed: false,
        }]);
    }
    let edge_normal = |i: usize| {
        let a = &v[i % n];
        let b = &v[(i + 1) % n];
        let len = dist(a, b);
        vec![(b[1] - a[1]) / len, -(b[0] - a[0]) / len]
    };
    if n == 2 {
        // a segment: both sides are boundary
        let e = edge_normal(0);
        let both = vec![e.clone(), scale(&e, -1.0)];
        let m = ((dist(&v[0], &v[1]) / h_b).ceil() as usize).max(1);
        for j in 0..=m {
            points.push(lerp(&v[0], &v[1], j as f64 / m as f64));
            normals.push(both.clone());
        }
        return Ok(vec![Loop {
            points,
            normals,
            closed: false,
        }]);
    }
    // each edge contributes its start corner, which carries the normals of
    // both edges meeting there
    for i in 0..n {
        let a = &v[i];
        let b = &v[(i + 1) % n];
        let normal = edge_normal(i);
        let m = ((dist(a, b) / h_b).ceil() as usize).max(1);
        for j in 0..m {
            points.push(lerp(a, b, j as f64 / m as f64));
            if j == 0 {
                normals.push(vec![edge_normal(i + n - 1), normal.clone()]);
            } else {
                normals.push(vec![normal.clone()]);
            }
        }
    }
    Ok(vec![Loop {
        points,
        normals,
        closed: true,
    }])
}

fn facet_lattices(p: &Polyhedron, h_b: f64) -> Result<Vec<Loop>, FaceliftError> {
    let p = p.normalized();
    let bbox = p.bounding_box()?;
    let extent = bbox.iter().map(|(l, u)| u - l).fold(0.0, f64::max);
    let nx = ((extent / h_b).ceil() as usize).max(1);
    let mut loops = Vec::new();
    for (i, row) in p.inequalities.iter().enumerate() {
        let sides: Vec<&Halfspace> = p
            .inequalities
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, r)| r)
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
        let Ok(pts) = face.lattice(nx) else { continue };
        for x in pts {
            loops.push(Loop {
                points: vec![x],
                normals: vec![vec![row.normal.clone()]],
                closed: false,
            });
        }
    }
    Ok(loops)
}

/// Every exposed cell facet becomes its own short piece with an axis
/// normal.
fn region_faces(r: &GridRegion, h_b: f64) -> Vec<Loop> {
    let n = r.dim;
    let h = r.h;
    let mut loops = Vec::new();
    for c in r.cells() {
        for axis in 0..n {
            for dir in [-1i64, 1] {
                let mut nb = c.clone();
                nb[axis] += dir;
                if r.contains_cell(&nb) {
                    continue;
                }
                let mut normal = vec![0.0; n];
                normal[axis] = dir as f64;
                let mut lo = r.lower(c);
                if dir == 1 {
                    lo[axis] += h;
                }
                let m = ((h / h_b).ceil() as usize).max(1);
                let others: Vec<usize> = (0..n).filter(|&j| j != axis).collect();
                if n == 2 {
                    let o = others[0];
                    let pts: Vec<Vec<f64>> = (0..=m)
                        .map(|j| {
                            let mut p = lo.clone();
                            p[o] += h * j as f64 / m as f64;
                            p
                        })
                        .collect();
                    loops.push(Loop {
                        normals: vec![vec![normal.clone()]; pts.len()],
                        points: pts,
                        closed: false,
                    });
                } else {
                    let range: Vec<(i64, i64)> = others.iter().map(|_| (0, m as i64)).collect();
                    for idx in box_cells(&range) {
                        let mut p = lo.clone();
                        for (k, &o) in others.iter().enumerate() {
                            p[o] += h * idx[k] as f64 / m as f64;
                        }
                        loops.push(Loop {
                            points: vec![p],
                            normals: vec![vec![normal.clone()]],
                            closed: false,
                        });
                    }
                }
            }
        }
    }
    loops
}

fn unit_gradient(grad: &[Expr], x: &[f64]) -> Option<Vec<f64>> {
    let g: Vec<f64> = grad.iter().map(|d| d.eval(x)).collect();
    let gn = norm(&g);
    if !(gn > 1e-12) || !gn.is_finite() {
        return None;
    }
    Some(scale(&g, 1.0 / gn))
}

/// Newton projection of `x` onto `ℓ = 0` along the gradient.
fn project(ell: &Expr, grad: &[Expr], x: &[f64]) -> Option<Vec<f64>> {
    let mut x = x.to_vec();
    for _ in 0..20 {
        let v = ell.eval(&x);
        let g: Vec<f64> = grad.iter().map(|d| d.eval(&x)).collect();
        let g2 = dot(&g, &g);
        if !(g2 > 1e-24) {
            return None;
        }
        let step = v / g2;
        x = axpy(&x, -step, &g);
        if (step * g2.sqrt()).abs() < 1e-13 {
            break;
        }
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum EdgeKey {
    H(i64, i64),
    V(i64, i64),
}

/// Marching squares on a grid of spacing `h_b/2`, then linking, arc-length
/// resampling at `h_b`, and projection onto the zero set.
fn level_set_2d(ell: &Expr, lo: &[f64], hi: &[f64], h_b: f64) -> (Vec<Loop>, usize) {
    let grad = ell.gradient(2);
    let s = 0.5 * h_b;
    let nx = ((hi[0] - lo[0]) / s).ceil() as i64;
    let ny = ((hi[1] - lo[1]) / s).ceil() as i64;
    let node = |i: i64, j: i64| vec![lo[0] + i as f64 * s, lo[1] + j as f64 * s];
    let vals: Vec<f64> = (0..=ny)
        .flat_map(|j| (0..=nx).map(move |i| (i, j)))
        .map(|(i, j)| ell.eval(&node(i, j)))
        .collect();
    let val = |i: i64, j: i64| vals[(j * (nx + 1) + i) as usize];
    let crossing = |k: EdgeKey| -> Vec<f64> {
        let (a, b, va, vb) = match k {
            EdgeKey::H(i, j) => (node(i, j), node(i + 1, j), val(i, j), val(i + 1, j)),
            EdgeKey::V(i, j) => (node(i, j), node(i, j + 1), val(i, j), val(i, j + 1)),
        };
        let t = if va == vb { 0.5 } else { (va / (va - vb)).clamp(0.0, 1.0) };
        lerp(&a, &b, t)
    };

    let mut segs: Vec<(EdgeKey, EdgeKey)> = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let corner = [val(i, j), val(i + 1, j), val(i + 1, j + 1), val(i, j + 1)];
            let inside: Vec<bool> = corner.iter().map(|v| *v < 0.0).collect();
            let edges = [
                EdgeKey::H(i, j),
                EdgeKey::V(i + 1, j),
                EdgeKey::H(i, j + 1),
                EdgeKey::V(i, j),
            ];
            let crossed: Vec<usize> = (0..4).filter(|&e| inside[e] != inside[(e + 1) % 4]).collect();
            match crossed.len() {
                2 => segs.push((edges[crossed[0]], edges[crossed[1]])),
                4 => {
                    let mid = ell.eval(&[lo[0] + (i as f64 + 0.5) * s, lo[1] + (j as f64 + 0.5) * s]);
                    let center_inside = mid < 0.0;
                    // cut off the corners whose state differs from the center
                    let cut = [(0, 3), (0, 1), (1, 2), (2, 3)];
                    for (corner_idx, (e1, e2)) in cut.iter().enumerate() {
                        if inside[corner_idx] != center_inside {
                            segs.push((edges[*e1], edges[*e2]));
                        }
                    }
                }
                _ => {}
            }
        }
    }

    let mut adj: HashMap<EdgeKey, Vec<usize>> = HashMap::new();
    for (idx, (a, b)) in segs.iter().enumerate() {
        adj.entry(*a).or_default().push(idx);
        adj.entry(*b).or_default().push(idx);
    }
    let mut used = vec![false; segs.len()];
    let mut polylines: Vec<(Vec<EdgeKey>, bool)> = Vec::new();
    let walk = |start_seg: usize, from: EdgeKey, used: &mut Vec<bool>| -> Vec<EdgeKey> {
        let mut keys = vec![from];
        let mut seg = start_seg;
        let mut cur = from;
        loop {
            used[seg] = true;
            let (a, b) = segs[seg];
            let next = if a == cur { b } else { a };
            keys.push(next);
            cur = next;
            match adj[&cur].iter().find(|&&s2| !used[s2]) {
                Some(&s2) => seg = s2,
                None => break,
            }
        }
        keys
    };
    // open polylines start at endpoints of degree one
    let mut ends: Vec<EdgeKey> = adj
        .iter()
        .filter(|(_, v)| v.len() == 1)
        .map(|(k, _)| *k)
        .collect();
    ends.sort_by_key(|k| match k {
        EdgeKey::H(i, j) => (0, *i, *j),
        EdgeKey::V(i, j) => (1, *i, *j),
    });
    for e in ends {
        let s0 = adj[&e][0];
        if !used[s0] {
            polylines.push((walk(s0, e, &mut used), false));
        }
    }
    for s0 in 0..segs.len() {
        if !used[s0] {
            let keys = walk(s0, segs[s0].0, &mut used);
            let closed = keys.first() == keys.last();
            polylines.push((keys, closed));
        }
    }

    let mut loops = Vec::new();
    let mut dropped = 0;
    for (keys, closed) in polylines {
        let mut pts: Vec<Vec<f64>> = keys.iter().map(|k| crossing(*k)).collect();
        if closed {
            pts.pop();
        }
        pts.dedup_by(|a, b| dist(a, b) < 1e-14);
        let resampled = resample(&pts, closed, h_b);
        let mut points = Vec::new();
        let mut normals = Vec::new();
        for p in resampled {
            match project(ell, &grad, &p).and_then(|q| unit_gradient(&grad, &q).map(|n| (q, n))) {
                Some((q, n)) => {
                    points.push(q);
                    normals.push(vec![n]);
                }
                None => dropped += 1,
            }
        }
        if !points.is_empty() {
            loops.push(Loop {
                points,
                normals,
                closed,
            });
        }
    }
    (loops, dropped)
}

/// Arc-length resampling with at most `h` between consecutive points.
fn resample(pts: &[Vec<f64>], closed: bool, h: f64) -> Vec<Vec<f64>> {
    if pts.len() < 2 {
        return pts.to_vec();
    }
    let mut path = pts.to_vec();
    if closed {
        path.push(pts[0].clone());
    }
    let mut cum = vec![0.0];
    for w in path.windows(2) {
        cum.push(cum.last().unwrap() + dist(&w[0], &w[1]));
    }
    let total = *cum.last().unwrap();
    if total < 1e-14 {
        return vec![pts[0].clone()];
    }
    let m = ((total / h).ceil() as usize).max(if closed { 3 } else { 1 });
    let count = if closed { m } else { m + 1 };
    let mut out = Vec::with_capacity(count);
    let mut seg = 0;
    for j in 0..count {
        let s = total * j as f64 / m as f64;
        while seg + 1 < cum.len() - 1 && cum[seg + 1] < s {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let t = if len > 0.0 { ((s - cum[seg]) / len).clamp(0.0, 1.0) } else { 0.0 };
        out.push(lerp(&path[seg], &path[seg + 1], t));
    }
    out
}

/// Lattice points of the search box close to the zero set, projected onto
/// it and thinned to one per `h_b/2` cell.
fn level_set_nd(ell: &Expr, lo: &[f64], hi: &[f64], h_b: f64) -> (Vec<Loop>, usize) {
    let n = lo.len();
    let grad = ell.gradient(n);
    let range: Vec<(i64, i64)> = lo
        .iter()
        .zip(hi)
        .map(|(l, u)| (0, ((u - l) / h_b).ceil() as i64))
        .collect();
    let at = |c: &Cell| -> Vec<f64> { c.iter().zip(lo).map(|(&i, l)| l + i as f64 * h_b).collect() };
    let mut seen = std::collections::HashSet::new();
    let mut loops = Vec::new();
    let mut dropped = 0;
    for c in box_cells(&range) {
        let x = at(&c);
        let v = ell.eval(&x);
        let g: Vec<f64> = grad.iter().map(|d| d.eval(&x)).collect();
        let gn = norm(&g);
        // keep lattice points within about one lattice step of the zero set
        if !(v.abs() <= gn * h_b * (n as f64).sqrt()) {
            continue;
        }
        let Some(q) = project(ell, &grad, &x) else {
            dropped += 1;
            continue;
        };
        if q.iter().zip(lo.iter().zip(hi)).any(|(v, (l, u))| *v < l - h_b || *v > u + h_b) {
            continue;
        }
        let key: Vec<i64> = q.iter().map(|v| (v / (0.5 * h_b)).floor() as i64).collect();
        if !seen.insert(key) {
            continue;
        }
        match unit_gradient(&grad, &q) {
            Some(nrm) => loops.push(Loop {
                points: vec![q],
                normals: vec![vec![nrm]],
                closed: false,
            }),
            None => dropped += 1,
        }
    }
    (loops, dropped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Polyhedron;

    fn unit_square() -> InitialSet {
        InitialSet::Poly(Polyhedron::from_box(&[0.0, 0.0], &[1.0, 1.0]))
    }

    #[test]
    fn constant_drift_on_square() {
        let d = Dynamics::nonlinear(&["1", "1"]).unwrap();
        let f = classify_boundary(&unit_square(), &d, 0.1).unwrap();
        for s in &f.samples {
            let on_right_or_top = s.normal == vec![1.0, 0.0] || s.normal == vec![0.0, 1.0];
            assert_eq!(s.tag == Tag::Outflow, on_right_or_top, "{s:?}");
        }
        for p in f.points() {
            assert!((p[0] - 1.0).abs() < 1e-12 || (p[1] - 1.0).abs() < 1e-12 || p == &vec![1.0, 0.0] || p == &vec![0.0, 1.0]);
        }
        // right and top edges form one chain through the corner (1,1)
        assert_eq!(f.chains.len(), 1);
        assert!(f.chains[0].points.iter().any(|p| p == &vec![1.0, 1.0]));
    }

    #[test]
    fn radial_field_on_disk_is_outflow() {
        let init = InitialSet::level_set("x1*x1 + x2*x2 - 1", vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap();
        let d = Dynamics::nonlinear(&["x1", "x2"]).unwrap();
        let f = classify_boundary(&init, &d, 0.05).unwrap();
        assert!(f.samples.len() > 100);
        assert!(f.samples.iter().all(|s| s.tag == Tag::Outflow));
        for s in &f.samples {
            assert!((norm(&s.point) - 1.0).abs() < 1e-10);
        }
        assert_eq!(f.chains.len(), 1);
        assert!(f.chains[0].closed);
        let c = &f.chains[0];
        for (i, j) in c.links() {
            assert!(dist(&c.points[i], &c.points[j]) <= 0.05 + 1e-9);
        }
    }

    #[test]
    fn rotation_on_disk_is_tangential() {
        let init = InitialSet::level_set("x1*x1 + x2*x2 - 1", vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap();
        let d = Dynamics::nonlinear(&["-x2", "x1"]).unwrap();
        let f = classify_boundary(&init, &d, 0.05).unwrap();
        assert!(f.samples.iter().all(|s| s.tag == Tag::Tangential));
    }

    #[test]
    fn three_dimensional_box_facets() {
        let init = InitialSet::Poly(Polyhedron::from_box(&[0.0; 3], &[1.0; 3]));
        let d = Dynamics::nonlinear(&["1", "0", "0"]).unwrap();
        let f = classify_boundary(&init, &d, 0.25).unwrap();
        assert!(f.count(Tag::Outflow) > 0);
        for p in f.outflow() {
            assert!((p[0] - 1.0).abs() < 1e-9);
        }
        for s in &f.samples {
            assert!(!(s.tag == Tag::Inflow && s.dot > s.tol));
        }
    }

    #[test]
    fn region_boundary_faces() {
        let mut r = GridRegion::new(2, 0.5, crate::grid::GridMode::Over);
        r.insert(Cell::from_slice(&[0, 0]));
        r.insert(Cell::from_slice(&[1, 0]));
        let d = Dynamics::nonlinear(&["1", "0"]).unwrap();
        let f = classify_boundary(&InitialSet::Region(r), &d, 0.25).unwrap();
        let right: Vec<_> = f.outflow().collect();
        assert_eq!(right.len(), 3);
        assert!(right.iter().all(|p| (p[0] - 1.0).abs() < 1e-12));
    }

    #[test]
    fn split_runs_wraps_closed_loops() {
        let pts: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64]).collect();
        let runs = split_runs(&pts, &[true, false, true, true, false, true], true);
        assert_eq!(runs.len(), 2);
        assert_eq!(runs[0].points, vec![vec![2.0], vec![3.0]]);
        assert_eq!(runs[1].points, vec![vec![5.0], vec![0.0]]);
    }
}
