//! Flows and reverse flows of `dx/dt = f(x)`: matrix exponentials for linear
//! fields, fixed-step RK4 for expression fields, plus the norms used by the
//! polyhedral error bounds.

mod expm;
mod expr;

pub use expm::expm;
pub use expr::{Expr, ParseError};

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

use crate::geometry::{Face, GeometryError};
use crate::linalg::{matvec, norm};

/// Integrator tolerance used when callers have no better value.
pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("matrix exponential overflowed or received non-finite input")]
    NumericRange,
    #[error("trajectory left the floating-point range at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("negative time {0} passed to a forward integrator")]
    NegativeTime(f64),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("matrix must be square with finite entries")]
    BadMatrix,
    #[error("component {index}: {source}")]
    Parse {
        index: usize,
        #[source]
        source: ParseError,
    },
    #[error("face is unbounded")]
    UnboundedFace,
    #[error("face is empty")]
    EmptyFace,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Dynamics {
    Linear(DMatrix<f64>),
    Nonlinear(Vec<Expr>),
}

impl Dynamics {
    pub fn linear(a: DMatrix<f64>) -> Result<Self, FlowError> {
        if !a.is_square() || a.nrows() == 0 || a.iter().any(|v| !v.is_finite()) {
            return Err(FlowError::BadMatrix);
        }
        Ok(Dynamics::Linear(a))
    }

    /// Parses one expression per state component.
    pub fn nonlinear<S: AsRef<str>>(components: &[S]) -> Result<Self, FlowError> {
        let n = components.len();
        let exprs = components
            .iter()
            .enumerate()
            .map(|(index, s)| {
                Expr::parse(s.as_ref(), n).map_err(|source| FlowError::Parse { index, source })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Dynamics::Nonlinear(exprs))
    }

    pub fn dim(&self) -> usize {
        match self {
            Dynamics::Linear(a) => a.nrows(),
            Dynamics::Nonlinear(e) => e.len(),
        }
    }

    pub fn as_linear(&self) -> Option<&DMatrix<f64>> {
        match self {
            Dynamics::Linear(a) => Some(a),
            Dynamics::Nonlinear(_) => None,
        }
    }

    pub fn field(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Dynamics::Linear(a) => matvec(a, x),
            Dynamics::Nonlinear(e) => e.iter().map(|c| c.eval(x)).collect(),
        }
    }

    /// Largest Frobenius norm of the Jacobian over `points`: a sampled
    /// Lipschitz estimate.
    pub fn lipschitz_estimate(&self, points: &[Vec<f64>]) -> f64 {
        match self {
            Dynamics::Linear(a) => a.norm(),
            Dynamics::Nonlinear(e) => {
                let n = e.len();
                let jac: Vec<Expr> = e.iter().flat_map(|c| c.gradient(n)).collect();
                points
                    .iter()
                    .map(|p| jac.iter().map(|d| d.eval(p).powi(2)).sum::<f64>().sqrt())
                    .fold(0.0, f64::max)
            }
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), FlowError> {
        if x.len() != self.dim() {
            return Err(FlowError::DimMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(())
    }
}

/// A recorded flow evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSample {
    pub origin: Vec<f64>,
    pub time: f64,
    pub value: Vec<f64>,
    pub tol: f64,
}

impl FlowSample {
    pub fn compute(dyn_: &Dynamics, origin: &[f64], time: f64, tol: f64) -> Result<Self, FlowError> {
        Ok(Self {
            origin: origin.to_vec(),
            time,
            value: flow(dyn_, origin, time, tol)?,
            tol,
        })
    }
}

/// RK4 step count for horizon `t` at tolerance `tol`: h = min(tol^¼, t/32).
pub fn rk4_steps(t: f64, tol: f64) -> usize {
    if t <= 0.0 {
        return 0;
    }
    let h = tol.powf(0.25).min(t / 32.0);
    ((t / h).ceil() as usize).max(1)
}

/// Integrates `direction · f` for time `t` with exactly `steps` RK4 steps.
pub fn rk4(
    dyn_: &Dynamics,
    x0: &[f64],
    t: f64,
    steps: usize,
    direction: f64,
) -> Result<Vec<f64>, FlowError> {
    dyn_.check_dim(x0)?;
    let mut x = x0.to_vec();
    if steps == 0 || t == 0.0 {
        return Ok(x);
    }
    let n = x.len();
    let h = t / steps as f64;
    let f = |y: &[f64]| -> Vec<f64> {
        let mut v = dyn_.field(y);
        if direction != 1.0 {
            v.iter_mut().for_each(|c| *c *= direction);
        }
        v
    };
    let mut tmp = vec![0.0; n];
    for step in 0..steps {
        let k1 = f(&x);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        let k2 = f(&tmp);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        let k3 = f(&tmp);
        for i in 0..n {
            tmp[i] = x[i] + h * k3[i];
        }
        let k4 = f(&tmp);
        for i in 0..n {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(FlowError::NonFiniteState {
                t: h * (step + 1) as f64,
            });
        }
    }
    Ok(x)
}

fn flow_signed(dyn_: &Dynamics, x0: &[f64], t: f64, tol: f64, sign: f64) -> Result<Vec<f64>, FlowError> {
    if t < 0.0 {
        return Err(FlowError::NegativeTime(t));
    }
    dyn_.check_dim(x0)?;
    match dyn_ {
        Dynamics::Linear(a) => {
            let e = expm(a, sign * t)?;
            let y = matvec(&e, x0);
            if y.iter().any(|v| !v.is_finite()) {
                return Err(FlowError::NonFiniteState { t });
            }
            Ok(y)
        }
        Dynamics::Nonlinear(_) => rk4(dyn_, x0, t, rk4_steps(t, tol), sign),
    }
}

/// φ(x₀, t) for `t ≥ 0`.
pub fn flow(dyn_: &Dynamics, x0: &[f64], t: f64, tol: f64) -> Result<Vec<f64>, FlowError> {
    flow_signed(dyn_, x0, t, tol, 1.0)
}

/// ψ(x₀, t): the flow of `−f`, inverse of [`flow`].
pub fn reverse_flow(dyn_: &Dynamics, x0: &[f64], t: f64, tol: f64) -> Result<Vec<f64>, FlowError> {
    flow_signed(dyn_, x0, t, tol, -1.0)
}

/// Induced 2-norm ‖A‖ by power iteration on AᵀA, with a symmetric
/// eigendecomposition fallback when the iteration stalls.
pub fn operator_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.ncols();
    if n == 0 || a.iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    let g = a.transpose() * a;
    let mut v = nalgebra::DVector::from_fn(n, |i, _| 1.0 + 0.1 * i as f64);
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..500 {
        let w = &g * &v;
        let next = v.dot(&w);
        let wn = w.norm();
        if wn == 0.0 {
            break;
        }
        let residual = (&w - &v * next).norm();
        v = w / wn;
        if residual <= 1e-12 * next.abs() && (next - lambda).abs() <= 1e-15 * next.abs() {
            return next.max(0.0).sqrt();
        }
        lambda = next;
    }
    let eig = SymmetricEigen::new(g);
    eig.eigenvalues.iter().cloned().fold(0.0, f64::max).sqrt()
}

/// M₀ = max ‖x₀‖ over the face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceNorm {
    pub value: f64,
    /// True when `value` is a box-derived upper bound rather than the exact
    /// maximum.
    pub bound_mode: bool,
}

/// Exact vertex maximum in 2D; the norm of the per-coordinate LP box bound in
/// higher dimensions.
pub fn max_norm_over_face(face: &Face) -> Result<FaceNorm, FlowError> {
    let p = face.to_polyhedron();
    let map = |e: GeometryError| match e {
        GeometryError::Unbounded2D | GeometryError::Unbounded => FlowError::UnboundedFace,
        _ => FlowError::EmptyFace,
    };
    if p.dim == 2 {
        let verts = p.vertices_2d().map_err(map)?;
        let value = verts.iter().map(|v| norm(v)).fold(0.0, f64::max);
        return Ok(FaceNorm {
            value,
            bound_mode: false,
        });
    }
    let bbox = p.bounding_box().map_err(map)?;
    let value = bbox
        .iter()
        .map(|(lo, hi)| lo.abs().max(hi.abs()).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(FaceNorm {
        value,
        bound_mode: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Face;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn rotation_field() -> Dynamics {
        Dynamics::nonlinear(&["-x2", "x1"]).unwrap()
    }

    #[test]
    fn zero_time_is_identity() {
        let d = rotation_field();
        assert_eq!(flow(&d, &[0.3, 0.4], 0.0, DEFAULT_TOL).unwrap(), vec![0.3, 0.4]);
        let l = Dynamics::linear(DMatrix::identity(2, 2)).unwrap();
        assert_eq!(flow(&l, &[0.3, 0.4], 0.0, DEFAULT_TOL).unwrap(), vec![0.3, 0.4]);
    }

    #[test]
    fn constant_drift_is_translation() {
        let d = Dynamics::nonlinear(&["1", "2"]).unwrap();
        let y = flow(&d, &[0.0, 0.0], 1.0, DEFAULT_TOL).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-12 && (y[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn circular_field_closed_form() {
        let d = rotation_field();
        let y = flow(&d, &[1.0, 0.0], PI / 6.0, DEFAULT_TOL).unwrap();
        assert!((y[0] - (PI / 6.0).cos()).abs() < 1e-8);
        assert!((y[1] - (PI / 6.0).sin()).abs() < 1e-8);
    }

    #[test]
    fn reverse_inverts_forward() {
        let d = Dynamics::nonlinear(&["x2", "-sin(x1) - 0.1*x2"]).unwrap();
        let x = [0.7, -0.2];
        let y = flow(&d, &x, 1.3, DEFAULT_TOL).unwrap();
        let back = reverse_flow(&d, &y, 1.3, DEFAULT_TOL).unwrap();
        assert!((back[0] - x[0]).abs() < 1e-7 && (back[1] - x[1]).abs() < 1e-7);

        let a = DMatrix::from_row_slice(2, 2, &[-0.5, 1.0, -2.0, 0.3]);
        let l = Dynamics::linear(a.clone()).unwrap();
        let r = reverse_flow(&l, &x, 0.8, DEFAULT_TOL).unwrap();
        let want = matvec(&expm(&a, -0.8).unwrap(), &x);
        assert_eq!(r, want);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let d = rotation_field();
        let t: f64 = 2.0;
        let exact = [t.cos(), t.sin()];
        let err = |steps| {
            let y = rk4(&d, &[1.0, 0.0], t, steps, 1.0).unwrap();
            ((y[0] - exact[0]).powi(2) + (y[1] - exact[1]).powi(2)).sqrt()
        };
        let ratio = err(20) / err(40);
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn semigroup_nonlinear() {
        let d = Dynamics::nonlinear(&["x2", "-x1 + 0.2*cos(x1)"]).unwrap();
        let x = [0.5, 0.1];
        let a = flow(&d, &flow(&d, &x, 0.4, DEFAULT_TOL).unwrap(), 0.9, DEFAULT_TOL).unwrap();
        let b = flow(&d, &x, 1.3, DEFAULT_TOL).unwrap();
        assert!((a[0] - b[0]).abs() < 1e-7 && (a[1] - b[1]).abs() < 1e-7);
    }

    #[test]
    fn negative_time_and_dimension_errors() {
        let d = rotation_field();
        assert!(matches!(
            flow(&d, &[1.0, 0.0], -1.0, DEFAULT_TOL),
            Err(FlowError::NegativeTime(_))
        ));
        assert!(matches!(
            flow(&d, &[1.0], 1.0, DEFAULT_TOL),
            Err(FlowError::DimMismatch { .. })
        ));
        assert!(matches!(
            Dynamics::nonlinear(&["x1^2", "x2"]),
            Err(FlowError::Parse { index: 0, .. })
        ));
        let blowup = Dynamics::nonlinear(&["exp(x1)"]).unwrap();
        assert!(matches!(
            flow(&blowup, &[50.0], 10.0, DEFAULT_TOL),
            Err(FlowError::NonFiniteState { .. })
        ));
    }

    #[test]
    fn operator_norm_examples_and_svd_oracle() {
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!((operator_norm(&rot) - 1.0).abs() < 1e-12);
        assert_eq!(operator_norm(&DMatrix::zeros(3, 3)), 0.0);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, -2.0]));
        assert!((operator_norm(&d) - 3.0).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let n = rng.random_range(1..=6);
            let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-2.0..2.0));
            let svd = a.clone().svd(false, false);
            let oracle = svd.singular_values.max();
            assert!((operator_norm(&a) - oracle).abs() <= 1e-9 * oracle.max(1.0));
        }
    }

    #[test]
    fn face_norm_examples() {
        let f = Face::new(
            vec![vec![1.0, 0.0], vec![-1.0, 0.0]],
            vec![2f64.sqrt(), -1.0],
            vec![0.0, 1.0],
            0.0,
        );
        let m = max_norm_over_face(&f).unwrap();
        assert!((m.value - 2f64.sqrt()).abs() < 1e-12);
        assert!(!m.bound_mode);

        let point = Face::new(
            vec![vec![1.0, 0.0], vec![-1.0, 0.0]],
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            0.0,
        );
        assert_eq!(max_norm_over_face(&point).unwrap().value, 0.0);

        // a square face in the plane x3 = 1: exact max √3, the box bound too
        let sq = Face::new(
            vec![
                vec![1.0, 0.0, 0.0],
                vec![-1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, -1.0, 0.0],
            ],
            vec![1.0, 1.0, 1.0, 1.0],
            vec![0.0, 0.0, 1.0],
            1.0,
        );
        let m = max_norm_over_face(&sq).unwrap();
        assert!(m.bound_mode);
        assert!((m.value - 3f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn face_norm_dominates_boundary_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let th: f64 = rng.random_range(0.0..2.0 * PI);
            let base = vec![th.cos(), th.sin()];
            let side = vec![-th.sin(), th.cos()];
            let off = rng.random_range(-2.0..2.0);
            let lo = rng.random_range(-2.0..0.0);
            let hi = rng.random_range(0.0..2.0);
            let f = Face::new(
                vec![side.clone(), side.iter().map(|v| -v).collect()],
                vec![hi, -lo],
                base.clone(),
                off,
            );
            let m = max_norm_over_face(&f).unwrap().value;
            let mut best: f64 = 0.0;
            for i in 0..=1000 {
                let s = lo + (hi - lo) * i as f64 / 1000.0;
                let p = [off * base[0] + s * side[0], off * base[1] + s * side[1]];
                best = best.max(norm(&p));
            }
            assert!(m >= best - 1e-12 && m - best <= 1e-9, "{m} vs {best}");
        }
    }
}
