#![allow(dead_code)]

use lyapunov_core::{FiniteMeasure, Matrix};
use proptest::prelude::*;

/// The uniform measure on the three cyclic diagonal matrices.
pub fn abc() -> FiniteMeasure {
    FiniteMeasure::uniform(vec![
        Matrix::diag(&[2.0, 0.5, 1.0]),
        Matrix::diag(&[1.0, 2.0, 0.5]),
        Matrix::diag(&[0.5, 1.0, 2.0]),
    ])
    .unwrap()
}

/// Invertible `d × d` matrix with entries in `[-1, 1]` and `σ_d/σ_1 ≥ 0.05`.
pub fn matrix(d: usize) -> impl Strategy<Value = Matrix> {
    proptest::collection::vec(-1.0f64..1.0, d * d)
        .prop_map(move |v| Matrix::new(d, v).unwrap())
        .prop_filter("well conditioned", |g| {
            let s = g.singular_values_unchecked();
            s[s.len() - 1] > 0.05 * s[0]
        })
}

/// Finite measure with 1..=4 atoms and weights bounded away from 0.
pub fn measure(d: usize) -> impl Strategy<Value = FiniteMeasure> {
    (1usize..=4)
        .prop_flat_map(move |m| {
            (
                proptest::collection::vec(matrix(d), m),
                proptest::collection::vec(0.1f64..1.0, m),
            )
        })
        .prop_map(|(atoms, w)| {
            let total: f64 = w.iter().sum();
            FiniteMeasure::new(atoms, w.iter().map(|x| x / total).collect()).unwrap()
        })
}

/// Two measures drawn on one shared atom list with independent weights.
pub fn measure_pair(d: usize) -> impl Strategy<Value = (FiniteMeasure, FiniteMeasure)> {
    (2usize..=4)
        .prop_flat_map(move |m| {
            (
                proptest::collection::vec(matrix(d), m),
                proptest::collection::vec(0.1f64..1.0, m),
                proptest::collection::vec(0.1f64..1.0, m),
            )
        })
        .prop_map(|(atoms, w1, w2)| {
            let norm = |w: &[f64]| {
                let t: f64 = w.iter().sum();
                w.iter().map(|x| x / t).collect::<Vec<_>>()
            };
            (
                FiniteMeasure::new(atoms.clone(), norm(&w1)).unwrap(),
                FiniteMeasure::new(atoms, norm(&w2)).unwrap(),
            )
        })
}
