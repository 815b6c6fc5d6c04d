//! Randomised invariants across the public API.

use num_rational::BigRational;
use proptest::prelude::*;
use wpm_core::intersect::tau;
use wpm_core::qring::pairing_identities;
use wpm_core::rmatrix::bmodel_r_laplace;
use wpm_core::{Model, ModelParams, TruncSeries1, Var, C64};

const ORDER: i32 = 8;

fn complex() -> impl Strategy<Value = C64> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(re, im)| C64::new(re, im))
}

fn series(unit: bool) -> impl Strategy<Value = TruncSeries1<C64>> {
    prop::collection::vec(complex(), ORDER as usize).prop_map(move |mut c| {
        if unit {
            c[0] = C64::new(1.0, 0.0) + c[0] * 0.5;
        }
        TruncSeries1::with_order(Var('x'), 0, c, ORDER)
    })
}

fn params(m: usize, n: usize) -> impl Strategy<Value = ModelParams> {
    (
        prop::collection::vec(complex(), m),
        prop::collection::vec(complex(), n),
        prop::collection::vec(complex(), m - 1),
        prop::collection::vec(complex(), n),
    )
        .prop_map(move |(w_pos, w_neg, q_pos, mut q_neg)| {
            // keep q_{-n} away from zero so the ring has full rank
            q_neg[n - 1] += C64::new(1.5, 0.0);
            ModelParams { m, n, w_pos, w_neg, q_pos, q_neg }
        })
}

fn small_model() -> impl Strategy<Value = ModelParams> {
    prop_oneof![params(1, 1), params(2, 1), params(1, 2)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn division_undoes_multiplication(a in series(false), b in series(true)) {
        let back = a.try_mul(&b).unwrap().try_div(&b).unwrap();
        prop_assert!(back.max_diff(&a) < 1e-9 * (1.0 + a.max_magnitude()));
    }

    #[test]
    fn exp_inverts_log(a in series(true)) {
        let back = a.ln().unwrap().exp().unwrap();
        prop_assert!(back.max_diff(&a) < 1e-9);
    }

    #[test]
    fn reversion_is_a_compositional_inverse(tail in series(false)) {
        let mut f = tail.shift(1).truncate(ORDER);
        f.set(1, C64::new(1.0, 0.0));
        let g = f.revert().unwrap();
        let id = f.compose(&g).unwrap();
        let x = TruncSeries1::monomial(Var('x'), C64::new(1.0, 0.0), 1, id.order());
        prop_assert!(id.max_diff(&x) < 1e-8);
    }

    #[test]
    fn laplace_r_is_unitary(p in small_model()) {
        let model = Model::new(p).unwrap();
        let r = bmodel_r_laplace(&model, 4).unwrap();
        prop_assert!(r.r.unitarity_residual() < 1e-9);
    }

    #[test]
    fn pairing_ignores_equivariant_weights(base in params(2, 1), alt in params(2, 1)) {
        let alt = ModelParams { q_pos: base.q_pos.clone(), q_neg: base.q_neg.clone(), ..alt };
        let rep = pairing_identities(&base, &alt).unwrap();
        prop_assert!(rep.canonical < 1e-9);
        prop_assert!(rep.independence < 1e-9);
    }

    #[test]
    fn dilaton_equation(g in 0u32..3, ks in prop::collection::vec(0u32..5, 1..4)) {
        let n = ks.len() as i64;
        let dim = 3 * g as i64 - 3 + n;
        let total: i64 = ks.iter().map(|&k| k as i64).sum();
        prop_assume!(total == dim && 2 * g as i64 - 2 + n > 0);
        let mut with = ks.clone();
        with.push(1);
        let lhs = tau(g, &with).unwrap();
        let rhs = tau(g, &ks).unwrap() * BigRational::from_integer((2 * g as i64 - 2 + n).into());
        prop_assert_eq!(lhs, rhs);
    }
}
