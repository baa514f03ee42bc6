use nalgebra::DMatrix;
use proptest::prelude::*;
use reachkit::flow::expm;
use reachkit::geometry::{intersect, normalize_and_orthogonalize, propagate_face, Face, Halfspace, Polyhedron};
use reachkit::linalg::{dot, matvec};

fn unit(theta: f64) -> Vec<f64> {
    vec![theta.cos(), theta.sin()]
}

prop_compose! {
    /// Bounded polygons: at least three rows with normals spread around the
    /// circle.
    fn polygon()(n in 3usize..8, jitter in prop::collection::vec(0.0..0.4f64, 8), offs in prop::collection::vec(0.2..2.0f64, 8)) -> Polyhedron {
        let step = std::f64::consts::TAU / n as f64;
        let rows = (0..n)
            .map(|i| Halfspace::new(unit(step * (i as f64 + jitter[i])), offs[i]))
            .collect();
        Polyhedron::from_inequalities(2, rows)
    }
}

prop_compose! {
    fn random_rows()(dim in 2usize..4, rows in prop::collection::vec((prop::collection::vec(-1.0..1.0f64, 3), -1.0..2.0f64), 1..7)) -> Polyhedron {
        let rows = rows
            .into_iter()
            .filter(|(a, _)| a[..dim].iter().any(|v| v.abs() > 1e-3))
            .map(|(a, b)| Halfspace::new(a[..dim].to_vec(), b))
            .collect();
        Polyhedron::from_inequalities(dim, rows)
    }
}

/// Searches for a ray `d` with `aᵢᵀd ≤ 0` for every row among many sampled
/// directions (and the LP-free axis/diagonal set).
fn has_recession_ray(p: &Polyhedron) -> bool {
    let n = p.dim;
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    let m = 400;
    for i in 0..m {
        let t = i as f64 / m as f64;
        if n == 2 {
            dirs.push(unit(std::f64::consts::TAU * t));
        } else {
            // Fibonacci sphere
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / m as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = i as f64 * 2.399963229728653;
            dirs.push(vec![r * phi.cos(), r * phi.sin(), z]);
        }
    }
    // exact extreme rays of 2D cones are perpendicular to some row
    if n == 2 {
        for h in &p.inequalities {
            dirs.push(vec![-h.normal[1], h.normal[0]]);
            dirs.push(vec![h.normal[1], -h.normal[0]]);
        }
    } else {
        for a in &p.inequalities {
            for b in &p.inequalities {
                let c = vec![
                    a.normal[1] * b.normal[2] - a.normal[2] * b.normal[1],
                    a.normal[2] * b.normal[0] - a.normal[0] * b.normal[2],
                    a.normal[0] * b.normal[1] - a.normal[1] * b.normal[0],
                ];
                dirs.push(c.clone());
                dirs.push(c.iter().map(|v| -v).collect());
            }
        }
    }
    dirs.iter()
        .filter(|d| d.iter().any(|v| v.abs() > 1e-12))
        .any(|d| p.inequalities.iter().all(|h| dot(&h.normal, d) <= 1e-12))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn normalize_is_idempotent(a in prop::collection::vec(-5.0..5.0f64, 1..5), b in -5.0..5.0f64) {
        prop_assume!(a.iter().any(|v| v.abs() > 1e-3));
        let h = Halfspace::new(a, b).normalize();
        let n: f64 = dot(&h.normal, &h.normal).sqrt();
        prop_assert!((n - 1.0).abs() <= 1e-12);
        prop_assert_eq!(h.normalize(), h);
    }

    #[test]
    fn boundedness_matches_ray_search(p in random_rows()) {
        prop_assume!(!p.is_empty());
        let bounded = p.is_bounded().unwrap();
        prop_assert_eq!(bounded, !has_recession_ray(&p));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn vertices_are_tight_and_feasible(p in polygon()) {
        let v = p.vertices_2d().unwrap();
        prop_assert!(v.len() >= 3);
        for x in &v {
            prop_assert!(p.max_violation(x) <= 1e-8);
            let tight = p.inequalities.iter().filter(|h| h.eval(x).abs() <= 1e-8).count();
            prop_assert!(tight >= 2);
        }
    }

    #[test]
    fn self_intersection_is_identity(p in polygon(), pts in prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64), 50)) {
        let q = intersect(&[p.clone(), p.clone()]).unwrap();
        for (x, y) in pts {
            prop_assert_eq!(q.contains(&[x, y], 1e-12), p.contains(&[x, y], 1e-12));
        }
    }

    #[test]
    fn propagation_composes(
        entries in prop::collection::vec(-1.0..1.0f64, 4),
        s in 0.0..0.6f64,
        t in 0.0..0.6f64,
        lo in -1.0..0.0f64,
        len in 0.2..1.5f64,
        off in 0.5..2.0f64,
    ) {
        let a = DMatrix::from_row_slice(2, 2, &entries);
        let face = normalize_and_orthogonalize(&Face::new(
            vec![vec![1.0, 0.0], vec![-1.0, 0.0]],
            vec![lo + len, -lo],
            vec![0.0, 1.0],
            off,
        )).unwrap();
        let two = propagate_face(&propagate_face(&face, &a, s).unwrap(), &a, t).unwrap();
        let one = propagate_face(&face, &a, s + t).unwrap();
        let e = expm(&a, s + t).unwrap();
        for i in 0..=20 {
            let x0 = [lo + len * i as f64 / 20.0, off];
            let x = matvec(&e, &x0);
            prop_assert!(one.to_polyhedron().max_violation(&x) <= 1e-7);
            prop_assert!(two.to_polyhedron().max_violation(&x) <= 1e-7);
        }
        // points just off the transported segment are rejected by both
        let x_out = matvec(&e, &[lo - 0.1, off]);
        prop_assert!(one.to_polyhedron().max_violation(&x_out) > 1e-7);
        prop_assert!(two.to_polyhedron().max_violation(&x_out) > 1e-7);
    }
}
