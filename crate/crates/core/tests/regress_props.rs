use nalgebra::{DMatrix, DVector};
use parabolica::regress::{fit, BasisSpec};
use proptest::prelude::*;

/// Raw monomials of total degree <= 2 in two variables.
fn features(x: &[f64]) -> [f64; 6] {
    let (a, b) = (x[0], x[1]);
    [1.0, a, b, a * a, a * b, b * b]
}

fn normal_equation_predictions(states: &[f64], targets: &[f64]) -> Vec<f64> {
    let rows = targets.len();
    let design = DMatrix::from_fn(rows, 6, |r, c| features(&states[2 * r..2 * r + 2])[c]);
    let gram = design.transpose() * &design;
    let rhs = design.transpose() * DVector::from_column_slice(targets);
    let coef = gram
        .cholesky()
        .expect("gram matrix is positive definite")
        .solve(&rhs);
    (design * coef).iter().copied().collect()
}

fn sample() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (30usize..200).prop_flat_map(|rows| {
        (
            prop::collection::vec(-2.0f64..2.0, 2 * rows),
            prop::collection::vec(-10.0f64..10.0, rows),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn agrees_with_normal_equations((states, targets) in sample()) {
        let model = fit(&states, 2, &targets, 1, &BasisSpec::polynomial(2)).unwrap();
        prop_assume!(!model.diagnostics.rank_fallback);
        let got = model.predict(&states).unwrap();
        let want = normal_equation_predictions(&states, &targets);
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).abs() <= 1e-8 * (1.0 + w.abs()), "{} vs {}", g, w);
        }
    }

    #[test]
    fn reproduces_targets_inside_the_span(
        states in prop::collection::vec(-3.0f64..3.0, 100),
        c in prop::collection::vec(-5.0f64..5.0, 6),
    ) {
        let targets: Vec<f64> = states
            .chunks(2)
            .map(|x| features(x).iter().zip(&c).map(|(f, c)| f * c).sum())
            .collect();
        let model = fit(&states, 2, &targets, 1, &BasisSpec::polynomial(2)).unwrap();
        let got = model.predict(&states).unwrap();
        for (g, w) in got.iter().zip(&targets) {
            prop_assert!((g - w).abs() <= 1e-8 * (1.0 + w.abs()));
        }
    }

    #[test]
    fn residuals_are_orthogonal_to_constants((states, targets) in sample()) {
        let model = fit(&states, 2, &targets, 1, &BasisSpec::polynomial(2)).unwrap();
        let got = model.predict(&states).unwrap();
        let residual: f64 = got.iter().zip(&targets).map(|(g, t)| t - g).sum();
        let scale: f64 = targets.iter().map(|t| t.abs()).sum::<f64>() + 1.0;
        prop_assert!(residual.abs() <= 1e-9 * scale);
    }
}

#[test]
fn multiple_targets_fit_independently() {
    let states: Vec<f64> = (0..80)
        .flat_map(|i| {
            let a = (i as f64 * 0.37).sin();
            [a, (i as f64 * 0.11).cos()]
        })
        .collect();
    let first: Vec<f64> = states
        .chunks(2)
        .map(|x| x[0] * x[1] + 0.3 * (7.0 * x[0]).sin())
        .collect();
    let second: Vec<f64> = states.chunks(2).map(|x| (x[0] - x[1]).exp()).collect();
    let joint: Vec<f64> = first
        .iter()
        .zip(&second)
        .flat_map(|(a, b)| [*a, *b])
        .collect();
    let basis = BasisSpec::polynomial(2);
    let both = fit(&states, 2, &joint, 2, &basis)
        .unwrap()
        .predict(&states)
        .unwrap();
    let one = fit(&states, 2, &first, 1, &basis)
        .unwrap()
        .predict(&states)
        .unwrap();
    let two = fit(&states, 2, &second, 1, &basis)
        .unwrap()
        .predict(&states)
        .unwrap();
    for r in 0..80 {
        assert!((both[2 * r] - one[r]).abs() < 1e-12);
        assert!((both[2 * r + 1] - two[r]).abs() < 1e-12);
    }
}
