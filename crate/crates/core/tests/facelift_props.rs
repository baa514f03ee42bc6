use proptest::prelude::*;
use reachkit::facelift::{
    classify_boundary, reach_bounded_time, reach_bounded_time_with, InitialSet, ReachOptions, Tag,
    TimeGrid,
};
use reachkit::flow::{flow, Dynamics, DEFAULT_TOL};
use reachkit::geometry::Polyhedron;
use reachkit::grid::{neighborhood, GridMode, GridRegion};

fn drift(a: f64, b: f64) -> Dynamics {
    Dynamics::nonlinear(&[a.to_string(), b.to_string()]).unwrap()
}

fn near(g: &GridRegion, x: &[f64]) -> bool {
    neighborhood(&g.cell_of(x)).any(|c| g.contains_cell(&c))
}

prop_compose! {
    fn box_init()(x in -1.0..1.0f64, y in -1.0..1.0f64, w in 0.3..1.0f64, hh in 0.3..1.0f64) -> InitialSet {
        InitialSet::Poly(Polyhedron::from_box(&[x, y], &[x + w, y + hh]))
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn accumulation_is_monotone_and_under_is_inside_over(
        init in box_init(),
        a in -1.0..1.0f64,
        b in -1.0..1.0f64,
    ) {
        let d = drift(a, b);
        let g = TimeGrid::uniform(0.2, 0.6).unwrap();
        let over = reach_bounded_time(&init, &d, 0.6, &g, 0.05, GridMode::Over).unwrap();
        let under = reach_bounded_time(&init, &d, 0.6, &g, 0.05, GridMode::Under).unwrap();
        let (co, cu) = (over.cumulative(), under.cumulative());
        for w in co.windows(2) {
            prop_assert!(w[0].is_subset(&w[1]));
        }
        for (o, u) in co.iter().zip(&cu) {
            prop_assert!(u.is_subset(o));
        }
    }

    #[test]
    fn no_inflow_tag_has_positive_rate(
        cx in -0.5..0.5f64,
        cy in -0.5..0.5f64,
        r in 0.3..1.0f64,
        k in -1.0..1.0f64,
    ) {
        let init = InitialSet::level_set(
            &format!("(x1 - {cx})*(x1 - {cx}) + (x2 - {cy})*(x2 - {cy}) - {}", r * r),
            vec![cx - 2.0, cy - 2.0],
            vec![cx + 2.0, cy + 2.0],
        ).unwrap();
        let d = Dynamics::nonlinear(&[format!("{k}*x1 - x2"), "x1 + 0.3".to_string()]).unwrap();
        let f = classify_boundary(&init, &d, 0.05).unwrap();
        for s in &f.samples {
            prop_assert!(!(s.tag == Tag::Inflow && s.dot > s.tol));
            prop_assert!(!(s.tag == Tag::Outflow && s.dot <= s.tol));
        }
    }

    #[test]
    fn pruned_points_stay_covered(init in box_init(), a in -1.0..1.0f64, b in -1.0..1.0f64) {
        // a rotation about an off-center point makes the front re-enter
        let d = Dynamics::nonlinear(&[format!("-(x2 - {b})"), format!("x1 - {a}")]).unwrap();
        let tau = 2.0;
        let h = 0.05;
        let g = TimeGrid::uniform(0.25, tau).unwrap();
        let opts = ReachOptions { record_pruned: true, ..Default::default() };
        let t = reach_bounded_time_with(&init, &d, tau, &g, h, GridMode::Over, &opts).unwrap();
        let occ = t.occupancy();
        let cum = t.cumulative();
        let times = t.times();
        for (i, p) in t.diagnostics.pruned.iter().step_by(7) {
            prop_assert!(cum[*i].contains_point(p));
            let rest = tau - times[i + 1];
            for j in 0..=8 {
                let x = flow(&d, p, rest * j as f64 / 8.0, DEFAULT_TOL).unwrap();
                prop_assert!(near(&occ, &x), "{:?} from {:?}", x, p);
            }
        }
    }
}

#[test]
fn tube_semigroup_on_drift() {
    let init = InitialSet::Poly(Polyhedron::from_box(&[0.0, 0.0], &[1.0, 1.0]));
    let d = drift(1.0, 0.5);
    let h = 0.05;
    let whole = reach_bounded_time(&init, &d, 1.0, &TimeGrid::uniform(0.25, 1.0).unwrap(), h, GridMode::Over).unwrap();
    let first = reach_bounded_time(&init, &d, 0.5, &TimeGrid::uniform(0.25, 0.5).unwrap(), h, GridMode::Over).unwrap();
    let restart = InitialSet::Region(first.occupancy());
    let second = reach_bounded_time(&restart, &d, 0.5, &TimeGrid::uniform(0.25, 0.5).unwrap(), h, GridMode::Over).unwrap();
    let gap = whole.occupancy().hausdorff(&second.occupancy());
    assert!(gap <= 2.0 * h, "{gap}");
}

#[test]
fn tube_semigroup_on_rotation() {
    let init = InitialSet::Poly(Polyhedron::from_box(&[0.5, -0.25], &[1.0, 0.25]));
    let d = Dynamics::nonlinear(&["-x2", "x1"]).unwrap();
    let h = 0.05;
    let whole = reach_bounded_time(&init, &d, 1.0, &TimeGrid::uniform(0.25, 1.0).unwrap(), h, GridMode::Over).unwrap();
    let first = reach_bounded_time(&init, &d, 0.5, &TimeGrid::uniform(0.25, 0.5).unwrap(), h, GridMode::Over).unwrap();
    let second = reach_bounded_time(
        &InitialSet::Region(first.occupancy()),
        &d,
        0.5,
        &TimeGrid::uniform(0.25, 0.5).unwrap(),
        h,
        GridMode::Over,
    ).unwrap();
    let gap = whole.occupancy().hausdorff(&second.occupancy());
    assert!(gap <= 2.0 * h, "{gap}");
}

#[test]
fn rotation_about_box_center_prunes_front_points() {
    let init = InitialSet::Poly(Polyhedron::from_box(&[-0.5, -0.5], &[0.5, 0.5]));
    let d = Dynamics::nonlinear(&["-x2", "x1"]).unwrap();
    let tau = 2.0;
    let h = 0.05;
    let opts = ReachOptions { record_pruned: true, ..Default::default() };
    let t = reach_bounded_time_with(&init, &d, tau, &TimeGrid::uniform(0.25, tau).unwrap(), h, GridMode::Over, &opts).unwrap();
    assert!(!t.diagnostics.pruned.is_empty());
    let occ = t.occupancy();
    let times = t.times();
    for (i, p) in &t.diagnostics.pruned {
        let rest = tau - times[i + 1];
        for j in 0..=8 {
            let x = flow(&d, p, rest * j as f64 / 8.0, DEFAULT_TOL).unwrap();
            assert!(near(&occ, &x), "{x:?} from {p:?}");
        }
    }
}
