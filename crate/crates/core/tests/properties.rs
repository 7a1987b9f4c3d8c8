//! Property tests of the discrete operator and the time steppers.

use num_complex::Complex64;
use proptest::prelude::*;

use extnls::domain::{build_domain, FieldState, ModelParams, Representation};
use extnls::functionals::mass;
use extnls::operators::{inner_product, LaplacianOp, Propagator, PropagatorConfig};

fn field(n: usize, nr: usize, na: usize, values: &[(f64, f64)]) -> FieldState {
    let d = build_domain(ModelParams::new(n, 5.0, 4.0).unwrap(), nr, na).unwrap();
    let v: Vec<Complex64> = values.iter().map(|&(a, b)| Complex64::new(a, b)).collect();
    FieldState::from_values(&d, 0.0, v, Representation::AngularPoints).unwrap()
}

fn grid() -> impl Strategy<Value = (usize, usize, usize)> {
    prop_oneof![
        (8usize..40).prop_map(|nr| (3, nr, 1)),
        (8usize..40).prop_map(|nr| (5, nr, 1)),
        (8usize..24, prop_oneof![Just(4usize), Just(8)]).prop_map(|(nr, na)| (2, nr, na)),
    ]
}

fn pair() -> impl Strategy<Value = (FieldState, FieldState)> {
    grid().prop_flat_map(|(n, nr, na)| {
        let len = nr * na;
        (
            prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), len),
            prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), len),
        )
            .prop_map(move |(a, b)| (field(n, nr, na, &a), field(n, nr, na, &b)))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn laplacian_is_self_adjoint((u, v) in pair()) {
        let op = LaplacianOp::new(&u.domain);
        let lu = op.apply(&u).unwrap();
        let lv = op.apply(&v).unwrap();
        let a = inner_product(&lu, &v);
        let b = inner_product(&u, &lv);
        let scale = inner_product(&lu, &lu).re.sqrt() * inner_product(&v, &v).re.sqrt();
        prop_assert!((a - b).norm() <= 1e-12 * scale, "{a} vs {b}");
    }

    #[test]
    fn laplacian_is_negative_semidefinite((u, _v) in pair()) {
        let op = LaplacianOp::new(&u.domain);
        let q = inner_product(&op.apply(&u).unwrap(), &u);
        let scale = inner_product(&op.apply(&u).unwrap(), &op.apply(&u).unwrap()).re.sqrt()
            * mass(&u).sqrt();
        prop_assert!(q.re <= 1e-12 * scale);
        prop_assert!(q.im.abs() <= 1e-12 * scale);
    }

    #[test]
    fn steps_conserve_mass((u, _v) in pair(), dt in 1e-4f64..1e-1) {
        let op = LaplacianOp::new(&u.domain);
        let prop = Propagator::new(&op, PropagatorConfig::new(dt).unwrap()).unwrap();
        let params = u.domain.params.clone();
        let m0 = mass(&u);
        let mut lin = u.clone();
        prop.evolve_linear(&mut lin, 20).unwrap();
        let mut nl = u.clone();
        prop.evolve(&params, &mut nl, 20).unwrap();
        prop_assert!(((mass(&lin) - m0) / m0).abs() < 1e-12);
        prop_assert!(((mass(&nl) - m0) / m0).abs() < 1e-12);
    }
}
