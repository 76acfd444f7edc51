mod common;

use lyapunov_core::linalg::{combinations, ProjectivePoint};
use proptest::prelude::*;

fn point(d: usize) -> impl Strategy<Value = ProjectivePoint> {
    proptest::collection::vec(-1.0f64..1.0, d)
        .prop_filter("nonzero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-6)
        .prop_map(|v| ProjectivePoint::new(&v).unwrap())
}

fn canonical(x: &ProjectivePoint) -> bool {
    let v = x.rep();
    let norm: f64 = v.iter().map(|c| c * c).sum::<f64>().sqrt();
    let first = v.iter().find(|c| c.abs() > 1e-12);
    (norm - 1.0).abs() < 1e-12 && first.is_some_and(|c| *c > 0.0)
}

proptest! {
    #[test]
    fn singular_values_are_submultiplicative(g in common::matrix(3), h in common::matrix(3)) {
        let gh = g.mul(&h).unwrap();
        let lhs = gh.singular_values().unwrap().values[0];
        let rhs = g.op_norm() * h.op_norm();
        prop_assert!(lhs <= rhs * (1.0 + 1e-9));
    }

    #[test]
    fn action_is_lipschitz_with_n_squared(g in common::matrix(3), x in point(3), y in point(3)) {
        let d = x.distance(&y).unwrap();
        prop_assume!(d > 1e-9);
        let n = g.norms().unwrap().n;
        let moved = x.act(&g).unwrap().distance(&y.act(&g).unwrap()).unwrap();
        prop_assert!(moved / d <= n * n + 1e-9);
    }

    #[test]
    fn wedge_power_is_multiplicative(g in common::matrix(4), h in common::matrix(4), k in 1usize..=4) {
        let lhs = g.mul(&h).unwrap().wedge_power(k).unwrap();
        let rhs = g.wedge_power(k).unwrap().mul(&h.wedge_power(k).unwrap()).unwrap();
        prop_assert!(lhs.distance(&rhs).unwrap() <= 1e-9 * rhs.op_norm().max(1.0));
    }

    #[test]
    fn action_output_is_canonical(g in common::matrix(3), x in point(3)) {
        prop_assert!(canonical(&x.act(&g).unwrap()));
    }
}

#[test]
fn wedge_power_entries_are_minors() {
    // independent route: the (I, J) entry of ∧^k g is the k×k minor of g
    let g = lyapunov_core::Matrix::from_rows(&[
        &[1.0, 2.0, 0.5],
        &[-0.3, 0.7, 1.1],
        &[0.2, -1.4, 0.9],
    ])
    .unwrap();
    let w = g.wedge_power(2).unwrap();
    let subsets = combinations(3, 2);
    for (a, rows) in subsets.iter().enumerate() {
        for (b, cols) in subsets.iter().enumerate() {
            let minor = g.get(rows[0], cols[0]) * g.get(rows[1], cols[1])
                - g.get(rows[0], cols[1]) * g.get(rows[1], cols[0]);
            assert!((w.get(a, b) - minor).abs() < 1e-14);
        }
    }
    assert!((g.wedge_power(3).unwrap().get(0, 0) - g.det()).abs() < 1e-13);
}
