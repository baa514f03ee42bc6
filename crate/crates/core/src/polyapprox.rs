//! Polyhedral over-approximation of one flow-pipe step of `ẋ = Ax`:
//!
//! ```text
//! T₀ = { e^{At}x₀ : x₀ ∈ F₀, t ∈ [0, Δ] }
//! ```
//!
//! where `F₀ = {aᵢᵀx ≤ bᵢ (i<k), a_kᵀx = b_k}` is an outflow face and
//! `F_Δ = e^{AΔ}F₀ = {bᵢᵀx ≤ bᵢ′, b_kᵀx = b_k′}`. The result has 4k rows:
//!
//! | group          | row                                   | count |
//! |----------------|---------------------------------------|-------|
//! | rotated lower  | (aᵢ − lᵢa_k)ᵀx ≤ bᵢ − lᵢb_k           | k − 1 |
//! | bottom support | −a_kᵀx ≤ −b_k                         | 1     |
//! | cap            | a_kᵀx ≤ b_k + l_k                     | 1     |
//! | slab           | aᵢᵀx ≤ bᵢ + l_{k+i}                   | k − 1 |
//! | rotated upper  | (bᵢ + lᵢ′b_k)ᵀx ≤ bᵢ′ + lᵢ′b_k′       | k − 1 |
//! | top support    | b_kᵀx ≤ b_k′                          | 1     |
//! | cap′           | −b_kᵀx ≤ −b_k′ + l_k′                 | 1     |
//! | slab′          | bᵢᵀx ≤ bᵢ′ + l′_{k+i}                 | k − 1 |
//!
//! Rows are emitted in the table order. The first `k + 1` rows (rotated
//! lower, bottom support, cap) already bound the set whenever `F₀` is
//! bounded.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::{expm, max_norm_over_face, operator_norm, FaceNorm, FlowError};
use crate::geometry::{
    convex_hull_2d, intersect, normalize_and_orthogonalize, propagate_face, Face, GeometryError,
    Halfspace, Polyhedron,
};
use crate::linalg::{dot, matvec, matvec_t, norm};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolyError {
    #[error("outflow assumption violated: min of a_kᵀAx over the face is {delta} (must be > 0)")]
    AssumptionA2Violated { delta: f64 },
    #[error("need 0 < δ₀ < δ, got δ₀ = {delta0}, δ = {delta}")]
    BadDeltaOrder { delta: f64, delta0: f64 },
    #[error("every sampled denominator is degenerate; the step or lattice is too small")]
    DenominatorAllDegenerate,
    #[error("time step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("condition C1 fails at Δ = {delta} (sampled minimum {min_value} < δ₀ = {delta0})")]
    C1Violated {
        delta: f64,
        delta0: f64,
        min_value: f64,
    },
    #[error("polyhedral over-approximation supports linear dynamics ẋ = Ax only")]
    NonlinearDynamics,
    #[error("operation supports dimension 2 only, got {dim}")]
    DimUnsupported { dim: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

/// Outflow margin δ = min over the face of `a_kᵀAx`, by LP.
pub fn check_a2(face: &Face, a: &DMatrix<f64>) -> Result<f64, PolyError> {
    let c = matvec_t(a, &face.base_normal);
    let neg: Vec<f64> = c.iter().map(|v| -v).collect();
    let (v, _) = face.to_polyhedron().maximize(&neg)?;
    let delta = -v;
    if delta <= 0.0 {
        return Err(PolyError::AssumptionA2Violated { delta });
    }
    Ok(delta)
}

/// Largest Δ with `M₀‖A‖(e^{‖A‖Δ} − 1) ≤ δ − δ₀`; `+∞` when ‖A‖ or M₀ is 0.
pub fn select_delta(m0: f64, norm_a: f64, delta: f64, delta0: f64) -> Result<f64, PolyError> {
    if !(delta0 > 0.0 && delta0 < delta) {
        return Err(PolyError::BadDeltaOrder { delta, delta0 });
    }
    if norm_a == 0.0 || m0 == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((1.0 + (delta - delta0) / (m0 * norm_a)).ln() / norm_a)
}

/// How the chosen Δ is known to satisfy condition C1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DeltaCertificate {
    /// `M₀‖A‖(e^{‖A‖Δ} − 1) ≤ δ − δ₀` holds.
    ClosedForm,
    /// Only the sampled C1 check passed.
    SampledC1,
    /// Nothing was checked.
    Unchecked,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepProblem {
    /// F₀, orthonormalized.
    pub face: Face,
    pub a: DMatrix<f64>,
    pub delta: f64,
    pub delta0: f64,
    /// δ = min over F₀ of a_kᵀAx.
    pub outflow_margin: f64,
    pub m0: FaceNorm,
    pub norm_a: f64,
    /// F_Δ, orthonormalized.
    pub face_delta: Face,
    pub certificate: DeltaCertificate,
}

impl StepProblem {
    /// Builds and validates a step problem: outflow margin, `δ₀ < δ`, and C1
    /// (through the closed-form Δ bound or, failing that, by sampling).
    pub fn new(face: &Face, a: &DMatrix<f64>, delta: f64, delta0: f64) -> Result<Self, PolyError> {
        let mut p = Self::unchecked(face, a, delta, delta0)?;
        p.outflow_margin = check_a2(&p.face, a)?;
        let bound = select_delta(p.m0.value, p.norm_a, p.outflow_margin, delta0)?;
        if delta <= bound {
            p.certificate = DeltaCertificate::ClosedForm;
        } else {
            let r = check_c1(&p, 64, 64);
            if !r.holds {
                return Err(PolyError::C1Violated {
                    delta,
                    delta0,
                    min_value: r.min_value,
                });
            }
            p.certificate = DeltaCertificate::SampledC1;
        }
        Ok(p)
    }

    /// Fills the derived fields without checking any assumption.
    pub fn unchecked(face: &Face, a: &DMatrix<f64>, delta: f64, delta0: f64) -> Result<Self, PolyError> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(PolyError::BadStep(delta));
        }
        let face = if face.orthonormalized {
            face.clone()
        } else {
            normalize_and_orthogonalize(face)?
        };
        let m0 = max_norm_over_face(&face)?;
        let face_delta = propagate_face(&face, a, delta)?;
        let c = matvec_t(a, &face.base_normal);
        let outflow_margin = face
            .to_polyhedron()
            .maximize(&c.iter().map(|v| -v).collect::<Vec<_>>())
            .map(|(v, _)| -v)
            .unwrap_or(f64::NAN);
        Ok(Self {
            face,
            a: a.clone(),
            delta,
            delta0,
            outflow_margin,
            m0,
            norm_a: operator_norm(a),
            face_delta,
            certificate: DeltaCertificate::Unchecked,
        })
    }

    pub fn k(&self) -> usize {
        self.face.k()
    }

    /// δ₁ = δ₀ / ‖e^{−AᵀΔ}a_k‖.
    pub fn delta1(&self) -> Result<f64, PolyError> {
        let e = expm(&(-self.a.transpose()), self.delta)?;
        Ok(self.delta0 / norm(&matvec(&e, &self.face.base_normal)))
    }
}

#[derive(Debug, Clone)]
pub struct C1Report {
    pub holds: bool,
    /// Sampled minimum of a_kᵀAe^{At}x₀ over x₀ ∈ F₀, t ∈ [−Δ, Δ].
    pub min_value: f64,
    /// a_kᵀe^{At}x₀ − b_k ≥ 0 at every sampled t > 0.
    pub c2_holds: bool,
    /// a_kᵀe^{At}x₀ − b_k ≤ 0 at every sampled t < 0.
    pub c3_holds: bool,
}

/// Samples condition C1 over a lattice of `nx` face intervals and `nt` time
/// intervals on each side of 0.
pub fn check_c1(prob: &StepProblem, nx: usize, nt: usize) -> C1Report {
    let nt = nt.max(1);
    let ak = &prob.face.base_normal;
    let row = matvec_t(&prob.a, ak);
    let pts = prob.face.lattice(nx).unwrap_or_default();
    let mut min_value = f64::INFINITY;
    let (mut c2, mut c3) = (true, true);
    for j in -(nt as i64)..=(nt as i64) {
        let t = prob.delta * (j as f64 / nt as f64);
        let Ok(e) = expm(&prob.a, t) else {
            return C1Report {
                holds: false,
                min_value: f64::NAN,
                c2_holds: false,
                c3_holds: false,
            };
        };
        for x0 in &pts {
            let x = matvec(&e, x0);
            min_value = min_value.min(dot(&row, &x));
            let side = dot(ak, &x) - prob.face.base_offset;
            let tol = 1e-12 * (1.0 + norm(&x));
            if j > 0 && side < -tol {
                c2 = false;
            }
            if j < 0 && side > tol {
                c3 = false;
            }
        }
    }
    C1Report {
        holds: min_value >= prob.delta0 - 1e-9,
        min_value,
        c2_holds: c2,
        c3_holds: c3,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundMode {
    Sampled,
    Conservative,
}

/// Index layout, for both `l` and `l_prime` (length 2k):
/// `[0, k−1)` rotated sides, `k−1` cap, `[k, 2k−1)` slabs, `2k−1` repeats
/// the cap value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundSet {
    pub l: Vec<f64>,
    pub l_prime: Vec<f64>,
    pub mode: BoundMode,
}

impl BoundSet {
    fn k(&self) -> usize {
        self.l.len() / 2
    }

    pub fn rotated(&self, i: usize) -> (f64, f64) {
        (self.l[i], self.l_prime[i])
    }

    pub fn cap(&self) -> (f64, f64) {
        let k = self.k();
        (self.l[k - 1], self.l_prime[k - 1])
    }

    pub fn slab(&self, i: usize) -> (f64, f64) {
        let k = self.k();
        (self.l[k + i], self.l_prime[k + i])
    }

    /// Entrywise `self ≤ other` within `tol`.
    pub fn dominated_by(&self, other: &BoundSet, tol: f64) -> bool {
        self.l.iter().zip(&other.l).all(|(a, b)| *a <= b + tol)
            && self.l_prime.iter().zip(&other.l_prime).all(|(a, b)| *a <= b + tol)
    }
}

/// Closed-form upper bounds:
///
/// ```text
/// l̂ᵢ  = M₀‖Aᵀaᵢ‖e^{‖A‖Δ}/δ₀        l̂ᵢ′ = M₀‖Aᵀbᵢ‖e^{‖A‖Δ}/δ₁
/// l̂_k = M₀Δ‖Aᵀa_k‖e^{‖A‖Δ}         l̂_k′ = M₀Δ‖Aᵀb_k‖e^{‖A‖Δ}
/// l̂_{k+i} = M₀Δ‖Aᵀaᵢ‖e^{‖A‖Δ}      l̂′_{k+i} = M₀Δ‖Aᵀbᵢ‖e^{‖A‖Δ}
/// ```
pub fn conservative_bounds(prob: &StepProblem) -> Result<BoundSet, PolyError> {
    let k = prob.k();
    let growth = prob.m0.value * (prob.norm_a * prob.delta).exp();
    let delta1 = prob.delta1()?;
    let row_norm = |v: &[f64]| norm(&matvec_t(&prob.a, v));
    let mut l = vec![0.0; 2 * k];
    let mut lp = vec![0.0; 2 * k];
    for i in 0..k - 1 {
        let na = row_norm(&prob.face.side_normals[i]);
        let nb = row_norm(&prob.face_delta.side_normals[i]);
        l[i] = growth * na / prob.delta0;
        lp[i] = growth * nb / delta1;
        l[k + i] = growth * prob.delta * na;
        lp[k + i] = growth * prob.delta * nb;
    }
    l[k - 1] = growth * prob.delta * row_norm(&prob.face.base_normal);
    lp[k - 1] = growth * prob.delta * row_norm(&prob.face_delta.base_normal);
    l[2 * k - 1] = l[k - 1];
    lp[2 * k - 1] = lp[k - 1];
    Ok(BoundSet {
        l,
        l_prime: lp,
        mode: BoundMode::Conservative,
    })
}

/// Sup-estimates of the exact bounds over the lattice of `nx` face
/// intervals × `nt` time intervals in `[0, Δ]`. Doubling either count
/// never decreases an entry.
pub fn sampled_bounds(prob: &StepProblem, nx: usize, nt: usize) -> Result<BoundSet, PolyError> {
    let k = prob.k();
    let nt = nt.max(1);
    let (f0, fd) = (&prob.face, &prob.face_delta);
    let pts = f0.lattice(nx)?;
    let mut l = vec![f64::NEG_INFINITY; 2 * k];
    let mut lp = vec![f64::NEG_INFINITY; 2 * k];
    let mut seen_lower = false;
    let mut seen_upper = false;
    for j in 0..=nt {
        let t = prob.delta * (j as f64 / nt as f64);
        let e = expm(&prob.a, t)?;
        for x0 in &pts {
            let x = matvec(&e, x0);
            let below = dot(&f0.base_normal, &x) - f0.base_offset;
            let above = fd.base_offset - dot(&fd.base_normal, &x);
            for i in 0..k - 1 {
                let ai = dot(&f0.side_normals[i], &x) - f0.side_offsets[i];
                let bi = dot(&fd.side_normals[i], &x) - fd.side_offsets[i];
                if below > 1e-12 {
                    l[i] = l[i].max(ai / below);
                    seen_lower = true;
                }
                if above > 1e-12 {
                    lp[i] = lp[i].max(bi / above);
                    seen_upper = true;
                }
                l[k + i] = l[k + i].max(ai);
                lp[k + i] = lp[k + i].max(bi);
            }
            l[k - 1] = l[k - 1].max(below);
            lp[k - 1] = lp[k - 1].max(above);
        }
    }
    if k > 1 && !(seen_lower && seen_upper) {
        return Err(PolyError::DenominatorAllDegenerate);
    }
    for v in l[k - 1..].iter_mut().chain(lp[k - 1..].iter_mut()) {
        *v = v.max(0.0);
    }
    l[2 * k - 1] = l[k - 1];
    lp[2 * k - 1] = lp[k - 1];
    Ok(BoundSet {
        l,
        l_prime: lp,
        mode: BoundMode::Sampled,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowGroup {
    RotatedLower,
    BottomSupport,
    Cap,
    Slab,
    RotatedUpper,
    TopSupport,
    CapPrime,
    SlabPrime,
}

impl RowGroup {
    pub fn as_str(self) -> &'static str {
        match self {
            RowGroup::RotatedLower => "rotated-lower",
            RowGroup::BottomSupport => "bottom-support",
            RowGroup::Cap => "cap",
            RowGroup::Slab => "slab",
            RowGroup::RotatedUpper => "rotated-upper",
            RowGroup::TopSupport => "top-support",
            RowGroup::CapPrime => "cap-prime",
            RowGroup::SlabPrime => "slab-prime",
        }
    }
}

/// Provenance of one assembled row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RowInfo {
    pub group: RowGroup,
    /// Side index `i` for per-side groups, 0 otherwise.
    pub index: usize,
    /// Bound value used by the row (0 for supports).
    pub l: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assembled {
    pub polyhedron: Polyhedron,
    pub rows: Vec<RowInfo>,
    pub mode: BoundMode,
}

impl Assembled {
    /// Rotated lower sides, bottom support and cap: the `k + 1` rows that
    /// bound the set on their own.
    pub fn bounded_subsystem(&self) -> Polyhedron {
        let rows = self
            .polyhedron
            .inequalities
            .iter()
            .zip(&self.rows)
            .filter(|(_, info)| {
                matches!(
                    info.group,
                    RowGroup::RotatedLower | RowGroup::BottomSupport | RowGroup::Cap
                )
            })
            .map(|(h, _)| h.clone())
            .collect();
        Polyhedron::from_inequalities(self.polyhedron.dim, rows)
    }

    pub fn rows_in(&self, groups: &[RowGroup]) -> Polyhedron {
        let rows = self
            .polyhedron
            .inequalities
            .iter()
            .zip(&self.rows)
            .filter(|(_, info)| groups.contains(&info.group))
            .map(|(h, _)| h.clone())
            .collect();
        Polyhedron::from_inequalities(self.polyhedron.dim, rows)
    }
}

/// Emits the 4k rows listed in the module documentation.
pub fn assemble_polyhedron(prob: &StepProblem, bounds: &BoundSet) -> Assembled {
    let k = prob.k();
    let (f0, fd) = (&prob.face, &prob.face_delta);
    let (ak, bk) = (&f0.base_normal, f0.base_offset);
    let (bkv, bkp) = (&fd.base_normal, fd.base_offset);
    let n = f0.dim();
    let mut rows = Vec::with_capacity(4 * k);
    let mut info = Vec::with_capacity(4 * k);
    let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
    let mut push = |h: Halfspace, group, index, l| {
        rows.push(h);
        info.push(RowInfo { group, index, l });
    };

    for i in 0..k - 1 {
        let li = bounds.rotated(i).0;
        let mu: Vec<f64> = (0..n).map(|j| f0.side_normals[i][j] - li * ak[j]).collect();
        push(
            Halfspace::new(mu, f0.side_offsets[i] - li * bk),
            RowGroup::RotatedLower,
            i,
            li,
        );
    }
    push(Halfspace::new(neg(ak), -bk), RowGroup::BottomSupport, 0, 0.0);
    let (lk, lkp) = bounds.cap();
    push(Halfspace::new(ak.clone(), bk + lk), RowGroup::Cap, 0, lk);
    for i in 0..k - 1 {
        let s = bounds.slab(i).0;
        push(
            Halfspace::new(f0.side_normals[i].clone(), f0.side_offsets[i] + s),
            RowGroup::Slab,
            i,
            s,
        );
    }

    for i in 0..k - 1 {
        let li = bounds.rotated(i).1;
        let nu: Vec<f64> = (0..n).map(|j| fd.side_normals[i][j] + li * bkv[j]).collect();
        push(
            Halfspace::new(nu, fd.side_offsets[i] + li * bkp),
            RowGroup::RotatedUpper,
            i,
            li,
        );
    }
    push(Halfspace::new(bkv.clone(), bkp), RowGroup::TopSupport, 0, 0.0);
    push(Halfspace::new(neg(bkv), -bkp + lkp), RowGroup::CapPrime, 0, lkp);
    for i in 0..k - 1 {
        let s = bounds.slab(i).1;
        push(
            Halfspace::new(fd.side_normals[i].clone(), fd.side_offsets[i] + s),
            RowGroup::SlabPrime,
            i,
            s,
        );
    }

    Assembled {
        polyhedron: Polyhedron::from_inequalities(n, rows),
        rows: info,
        mode: bounds.mode,
    }
}

/// ε̂ = M₀(e^{‖A‖Δ} − 1 − ‖A‖Δ − ⅜‖A‖²Δ²).
pub fn bloat_epsilon(m0: f64, norm_a: f64, delta: f64) -> f64 {
    let x = norm_a * delta;
    (m0 * (x.exp() - 1.0 - x - 0.375 * x * x)).max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bloated {
    /// Hull rows, each pushed outward by `epsilon`.
    pub polyhedron: Polyhedron,
    /// The hull before pushing.
    pub hull: Polyhedron,
    pub epsilon: f64,
}

/// Convex hull of the vertices of `F₀` and `F_Δ` with every row pushed
/// outward by ε̂ (or `epsilon_override`).
pub fn bloat_hull(
    face: &Face,
    face_delta: &Face,
    a: &DMatrix<f64>,
    delta: f64,
    epsilon_override: Option<f64>,
) -> Result<Bloated, PolyError> {
    if face.dim() != 2 {
        return Err(PolyError::DimUnsupported { dim: face.dim() });
    }
    let eps = match epsilon_override {
        Some(e) => e,
        None => bloat_epsilon(max_norm_over_face(face)?.value, operator_norm(a), delta),
    };
    let mut pts = face.to_polyhedron().vertices_2d()?;
    pts.extend(face_delta.to_polyhedron().vertices_2d()?);
    let hull = convex_hull_2d(&pts)?.polyhedron;
    let pushed = hull
        .inequalities
        .iter()
        .map(|h| Halfspace::new(h.normal.clone(), h.offset + eps))
        .collect();
    Ok(Bloated {
        polyhedron: Polyhedron::from_inequalities(2, pushed),
        hull,
        epsilon: eps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOptions {
    pub mode: BoundMode,
    /// δ₀; defaults to half the outflow margin of each piece's face.
    pub delta0: Option<f64>,
    /// Lattice sizes for sampled bounds.
    pub nx: usize,
    pub nt: usize,
    /// Intersect with the bloated hull in 2D.
    pub bloat: bool,
}

impl Default for StepOptions {
    fn default() -> Self {
        Self {
            mode: BoundMode::Conservative,
            delta0: None,
            nx: 64,
            nt: 64,
            bloat: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepPiece {
    pub t0: f64,
    pub t1: f64,
    pub problem: StepProblem,
    pub bounds: BoundSet,
    pub assembled: Assembled,
    /// Final polyhedron (assembled rows, intersected with the bloated hull
    /// in 2D when enabled).
    pub polyhedron: Polyhedron,
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub pieces: Vec<StepPiece>,
    /// True when C1 failed at the requested Δ and the step was split.
    pub shrunk: bool,
}

impl StepResult {
    /// The face reached at the end of the step.
    pub fn final_face(&self) -> &Face {
        &self.pieces.last().expect("at least one piece").problem.face_delta
    }
}

/// Orthonormalize, check the outflow margin, check C1 (splitting the step
/// into chained pieces of the closed-form length when it fails), compute
/// bounds, assemble, and in 2D intersect with the bloated hull.
pub fn overapproximate_step(
    face: &Face,
    a: &DMatrix<f64>,
    delta: f64,
    opts: &StepOptions,
) -> Result<StepResult, PolyError> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(PolyError::BadStep(delta));
    }
    let mut face = normalize_and_orthogonalize(face)?;
    let mut t = 0.0;
    let mut pieces = Vec::new();
    let mut shrunk = false;
    while t < delta * (1.0 - 1e-12) {
        let remaining = delta - t;
        let margin = check_a2(&face, a)?;
        let delta0 = opts.delta0.unwrap_or(0.5 * margin);
        let step = match StepProblem::new(&face, a, remaining, delta0) {
            Ok(p) => p,
            Err(PolyError::C1Violated { .. }) => {
                shrunk = true;
                let m0 = max_norm_over_face(&face)?.value;
                let d = select_delta(m0, operator_norm(a), margin, delta0)?;
                if !(d > 1e-9 * delta) {
                    return Err(PolyError::BadStep(d));
                }
                let mut p = StepProblem::new(&face, a, d.min(remaining), delta0)?;
                p.certificate = DeltaCertificate::ClosedForm;
                p
            }
            Err(e) => return Err(e),
        };
        let bounds = match opts.mode {
            BoundMode::Conservative => conservative_bounds(&step)?,
            BoundMode::Sampled => sampled_bounds(&step, opts.nx, opts.nt)?,
        };
        let assembled = assemble_polyhedron(&step, &bounds);
        let (polyhedron, epsilon) = if opts.bloat && face.dim() == 2 {
            let b = bloat_hull(&step.face, &step.face_delta, a, step.delta, None)?;
            (
                intersect(&[assembled.polyhedron.clone(), b.polyhedron])?,
                Some(b.epsilon),
            )
        } else {
            (assembled.polyhedron.clone(), None)
        };
        let t1 = t + step.delta;
        face = step.face_delta.clone();
        pieces.push(StepPiece {
            t0: t,
            t1,
            problem: step,
            bounds,
            assembled,
            polyhedron,
            epsilon,
        });
        t = t1;
    }
    Ok(StepResult { pieces, shrunk })
}

/// `P_j = e^{A jΔ}P₀` for `j = 1..=steps`: every row normal is transported
/// by `e^{−AᵀjΔ}`, offsets are kept, rows are renormalized.
pub fn propagate_tube(
    p0: &Polyhedron,
    a: &DMatrix<f64>,
    delta: f64,
    steps: usize,
) -> Result<Vec<Polyhedron>, PolyError> {
    let e = expm(&(-a.transpose()), delta)?;
    let mut out = Vec::with_capacity(steps);
    let mut cur = p0.clone();
    for _ in 0..steps {
        let map = |h: &Halfspace| Halfspace::new(matvec(&e, &h.normal), h.offset).normalize();
        cur = Polyhedron {
            dim: cur.dim,
            inequalities: cur.inequalities.iter().map(map).collect(),
            equalities: cur.equalities.iter().map(map).collect(),
        };
        out.push(cur.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{PI, SQRT_2};

    pub(crate) fn example2() -> (Face, DMatrix<f64>) {
        let face = Face::new(
            vec![vec![1.0, 0.0], vec![-1.0, 0.0]],
            vec![SQRT_2, -1.0],
            vec![0.0, 1.0],
            0.0,
        );
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        (face, a)
    }

    fn example2_problem() -> StepProblem {
        let (f, a) = example2();
        StepProblem::new(&f, &a, PI / 6.0, 3f64.sqrt() / 2.0).unwrap()
    }

    #[test]
    fn outflow_margin_example_and_violation() {
        let (f, a) = example2();
        assert!((check_a2(&f, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(
            check_a2(&f, &DMatrix::zeros(2, 2)),
            Err(PolyError::AssumptionA2Violated { .. })
        ));
    }

    #[test]
    fn select_delta_examples() {
        let d = select_delta(SQRT_2, 1.0, 1.0, 3f64.sqrt() / 2.0).unwrap();
        assert!((d - (1.0 + (1.0 - 3f64.sqrt() / 2.0) / SQRT_2).ln()).abs() < 1e-15);
        assert!((d - 0.0905).abs() < 1e-3);
        assert_eq!(select_delta(1.0, 0.0, 1.0, 0.5).unwrap(), f64::INFINITY);
        assert!(select_delta(1.0, 1.0, 1.0, 0.2).unwrap() > d);
        assert!(matches!(
            select_delta(1.0, 1.0, 1.0, 1.0),
            Err(PolyError::BadDeltaOrder { .. })
        ));
    }

    #[test]
    fn example2_needs_the_sampled_c1_certificate() {
        let p = example2_problem();
        assert_eq!(p.certificate, DeltaCertificate::SampledC1);
        let r = check_c1(&p, 64, 64);
        assert!(r.holds && r.c2_holds && r.c3_holds);
        assert!((r.min_value - 3f64.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn c1_fails_beyond_a_third_of_pi() {
        let (f, a) = example2();
        let p = StepProblem::unchecked(&f, &a, PI / 3.0 + 0.1, 3f64.sqrt() / 2.0).unwrap();
        assert!(!check_c1(&p, 64, 64).holds);
        let z = StepProblem::unchecked(&f, &DMatrix::zeros(2, 2), 0.5, 0.5).unwrap();
        assert!(!check_c1(&z, 8, 8).holds);
    }

    #[test]
    fn conservative_bounds_example2() {
        let b = conservative_bounds(&example2_problem()).unwrap();
        let li = 2.0 * SQRT_2 * (PI / 6.0).exp() / 3f64.sqrt();
        let lk = SQRT_2 * PI / 6.0 * (PI / 6.0).exp();
        for i in 0..2 {
            assert!((b.l[i] - li).abs() < 1e-12);
            assert!((b.l_prime[i] - li).abs() < 1e-12);
            assert!((b.l[3 + i] - lk).abs() < 1e-12);
        }
        assert!((b.cap().0 - lk).abs() < 1e-12 && (b.cap().1 - lk).abs() < 1e-12);
        assert_eq!(b.l[5], b.l[2]);
    }

    #[test]
    fn zero_matrix_gives_zero_translations() {
        let (f, _) = example2();
        let p = StepProblem::unchecked(&f, &DMatrix::zeros(2, 2), 0.5, 0.5).unwrap();
        let b = conservative_bounds(&p).unwrap();
        assert!(b.l.iter().chain(&b.l_prime).all(|v| *v == 0.0));
    }

    #[test]
    fn sampled_bounds_example2() {
        let p = example2_problem();
        let s = sampled_bounds(&p, 200, 200).unwrap();
        let c = conservative_bounds(&p).unwrap();
        assert!(s.dominated_by(&c, 0.0));
        assert!((s.cap().0 - 1.0 / SQRT_2).abs() < 1e-12);
        let coarse = sampled_bounds(&p, 25, 25).unwrap();
        let fine = sampled_bounds(&p, 50, 50).unwrap();
        assert!(coarse.dominated_by(&fine, 0.0));
    }

    #[test]
    fn assembled_rows_match_reference_coefficients() {
        let p = example2_problem();
        let asm = assemble_polyhedron(&p, &conservative_bounds(&p).unwrap());
        assert_eq!(asm.polyhedron.inequalities.len(), 12);
        let r = &asm.polyhedron.inequalities;
        assert!((r[0].normal[1] + 2.7566424).abs() < 1e-4 && (r[0].offset - SQRT_2).abs() < 1e-12);
        assert!((r[7].normal[0] + 2.2443466).abs() < 1e-4);
        assert!((r[7].normal[1] - 1.8873223).abs() < 1e-4);
        assert!((r[7].offset + 1.0).abs() < 1e-12);
        assert!(asm.bounded_subsystem().is_bounded().unwrap());
    }

    #[test]
    fn zero_bounds_collapse_onto_the_face_rows() {
        let p = example2_problem();
        let zero = BoundSet {
            l: vec![0.0; 6],
            l_prime: vec![0.0; 6],
            mode: BoundMode::Conservative,
        };
        let asm = assemble_polyhedron(&p, &zero);
        let rows = &asm.polyhedron.inequalities;
        for i in 0..2 {
            assert_eq!(rows[i].normal, p.face.side_normals[i]);
            assert_eq!(rows[i].offset, p.face.side_offsets[i]);
            assert_eq!(rows[4 + i].normal, p.face.side_normals[i]);
            assert_eq!(rows[6 + i].normal, p.face_delta.side_normals[i]);
        }
        // bottom support and cap pin a_kᵀx = b_k; top support and cap′ pin
        // b_kᵀx = b_k′; the two planes meet only at the origin, off the face
        assert!(asm.polyhedron.is_empty());
    }

    #[test]
    fn larger_bound_gives_larger_polyhedron() {
        let p = example2_problem();
        let b = conservative_bounds(&p).unwrap();
        let mut bigger = b.clone();
        bigger.l[0] += 0.5;
        let small = assemble_polyhedron(&p, &b).polyhedron;
        let large = assemble_polyhedron(&p, &bigger).polyhedron;
        for i in 0..=60 {
            for j in 0..=60 {
                let x = [i as f64 * 0.1 - 1.0, j as f64 * 0.05 - 0.5];
                if small.contains(&x, 0.0) {
                    assert!(large.contains(&x, 0.0));
                }
            }
        }
    }

    #[test]
    fn bloat_epsilon_example2() {
        let e = bloat_epsilon(SQRT_2, 1.0, PI / 6.0);
        assert!((e - 0.087235255).abs() < 1e-5);
        let (f, _) = example2();
        let b = bloat_hull(&f, &f, &DMatrix::zeros(2, 2), 0.3, None).unwrap();
        assert_eq!(b.epsilon, 0.0);
        assert!(b.polyhedron.contains(&[1.2, 0.0], 1e-12));
        assert!(!b.polyhedron.contains(&[1.2, 0.01], 1e-9));
    }

    #[test]
    fn propagate_tube_rotates_square() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let sq = Polyhedron::from_box(&[1.0, 0.0], &[2.0, 1.0]);
        let tube = propagate_tube(&sq, &a, PI / 2.0, 2).unwrap();
        let v = tube[0].vertices_2d().unwrap();
        for w in [[-1.0, 1.0], [0.0, 1.0], [0.0, 2.0], [-1.0, 2.0]] {
            assert!(v.iter().any(|p| (p[0] - w[0]).abs() < 1e-9 && (p[1] - w[1]).abs() < 1e-9));
        }
        let same = propagate_tube(&sq, &DMatrix::zeros(2, 2), 0.4, 3).unwrap();
        assert!(same.iter().all(|p| p == &sq));
    }

    #[test]
    fn end_to_end_example2_contains_samples() {
        let (f, a) = example2();
        let opts = StepOptions {
            delta0: Some(3f64.sqrt() / 2.0),
            ..StepOptions::default()
        };
        let r = overapproximate_step(&f, &a, PI / 6.0, &opts).unwrap();
        assert_eq!(r.pieces.len(), 1);
        assert!(!r.shrunk);
        let p = &r.pieces[0].polyhedron;
        assert!(p.is_bounded().unwrap());
        for j in 0..=100 {
            let t = PI / 6.0 * j as f64 / 100.0;
            for i in 0..=100 {
                let r0 = 1.0 + (SQRT_2 - 1.0) * i as f64 / 100.0;
                assert!(p.contains(&[r0 * t.cos(), r0 * t.sin()], 1e-9));
            }
        }
    }

    #[test]
    fn failing_c1_splits_the_step() {
        let (f, a) = example2();
        let opts = StepOptions {
            delta0: Some(0.95),
            ..StepOptions::default()
        };
        // cos(0.4) < 0.95, so C1 fails at the requested step
        let r = overapproximate_step(&f, &a, 0.4, &opts).unwrap();
        assert!(r.shrunk);
        assert!(r.pieces.len() > 1);
        assert!((r.pieces.last().unwrap().t1 - 0.4).abs() < 1e-12);
        for w in r.pieces.windows(2) {
            assert_eq!(w[0].t1, w[1].t0);
        }
    }
}
