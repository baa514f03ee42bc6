use nalgebra::DMatrix;
use proptest::prelude::*;
use reachkit::flow::{expm, flow, reverse_flow, rk4, Dynamics, DEFAULT_TOL};
use reachkit::linalg::dist;

fn matrix(n: usize, e: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(n, n, &e[..n * n])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn expm_inverse(e in prop::collection::vec(-2.0..2.0f64, 9), t in -1.0..1.0f64) {
        let a = matrix(3, &e);
        let p = expm(&a, t).unwrap() * expm(&a, -t).unwrap();
        prop_assert!((p - DMatrix::identity(3, 3)).amax() <= 1e-10);
    }

    #[test]
    fn linear_flow_is_linear(
        e in prop::collection::vec(-1.0..1.0f64, 4),
        x in prop::collection::vec(-2.0..2.0f64, 2),
        y in prop::collection::vec(-2.0..2.0f64, 2),
        al in -2.0..2.0f64,
        be in -2.0..2.0f64,
        t in 0.0..2.0f64,
    ) {
        let d = Dynamics::linear(matrix(2, &e)).unwrap();
        let comb: Vec<f64> = x.iter().zip(&y).map(|(a, b)| al * a + be * b).collect();
        let lhs = flow(&d, &comb, t, DEFAULT_TOL).unwrap();
        let fx = flow(&d, &x, t, DEFAULT_TOL).unwrap();
        let fy = flow(&d, &y, t, DEFAULT_TOL).unwrap();
        let rhs: Vec<f64> = fx.iter().zip(&fy).map(|(a, b)| al * a + be * b).collect();
        prop_assert!(dist(&lhs, &rhs) <= 1e-9 * (1.0 + rhs.iter().map(|v| v.abs()).sum::<f64>()));
    }

    #[test]
    fn nonlinear_semigroup_and_round_trip(
        x in prop::collection::vec(-1.5..1.5f64, 2),
        s in 0.0..1.0f64,
        t in 0.0..1.0f64,
    ) {
        let d = Dynamics::nonlinear(&["x2", "-sin(x1) - 0.1*x2"]).unwrap();
        let a = flow(&d, &flow(&d, &x, s, DEFAULT_TOL).unwrap(), t, DEFAULT_TOL).unwrap();
        let b = flow(&d, &x, s + t, DEFAULT_TOL).unwrap();
        prop_assert!(dist(&a, &b) <= 1e-7);
        let back = reverse_flow(&d, &b, s + t, DEFAULT_TOL).unwrap();
        prop_assert!(dist(&back, &x) <= 1e-7);
    }
}

#[test]
fn rk4_halving_ratio_on_circle() {
    let d = Dynamics::nonlinear(&["-x2", "x1"]).unwrap();
    let t = 2.0f64;
    let exact = [t.cos(), t.sin()];
    let err = |steps| dist(&rk4(&d, &[1.0, 0.0], t, steps, 1.0).unwrap(), &exact);
    let ratio = err(20) / err(40);
    assert!((12.0..=20.0).contains(&ratio), "{ratio}");
}
