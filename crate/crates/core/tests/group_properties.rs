use orbitpool_core::group::{GroupElement, GroupId, LieAlgebraElement};
use proptest::prelude::*;

mod common;
use common::{expm, max_diff, mul};

fn group() -> impl Strategy<Value = GroupId> {
    prop_oneof![
        Just(GroupId::Translations),
        Just(GroupId::Rotations),
        Just(GroupId::Se2),
        Just(GroupId::Shear)
    ]
}

fn element(g: GroupId) -> impl Strategy<Value = GroupElement> {
    prop::collection::vec(-3.0..3.0f64, g.dim()).prop_map(move |c| GroupElement::from_coords(g, &c).unwrap())
}

fn generator(g: GroupId) -> impl Strategy<Value = LieAlgebraElement> {
    (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64).prop_map(move |(z, x, y)| match g {
        GroupId::Translations => LieAlgebraElement::translation(x, y),
        GroupId::Rotations => LieAlgebraElement::rotation(z),
        GroupId::Se2 => LieAlgebraElement::se2(z, x, y),
        GroupId::Shear => LieAlgebraElement::shear(z, x, y),
    })
}

fn triple() -> impl Strategy<Value = (GroupElement, GroupElement, GroupElement)> {
    group().prop_flat_map(|g| (element(g), element(g), element(g)))
}

fn generator_triple() -> impl Strategy<Value = (LieAlgebraElement, LieAlgebraElement, LieAlgebraElement)> {
    group().prop_flat_map(|g| (generator(g), generator(g), generator(g)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn composition_is_associative((a, b, c) in triple()) {
        let left = a.compose(&b).unwrap().compose(&c).unwrap();
        let right = a.compose(&b.compose(&c).unwrap()).unwrap();
        prop_assert!(max_diff(&left.matrix(), &right.matrix()) <= 1e-12);
    }

    #[test]
    fn inverse_and_identity((a, _, _) in triple()) {
        let e = GroupElement::identity(a.group());
        prop_assert!(a.compose(&a.inverse()).unwrap().approx_eq(&e, 1e-12));
        prop_assert!(a.inverse().compose(&a).unwrap().approx_eq(&e, 1e-12));
        prop_assert!(a.compose(&e).unwrap().approx_eq(&a, 0.0));
    }

    #[test]
    fn composition_matches_matrix_product((a, b, _) in triple()) {
        let ab = a.compose(&b).unwrap();
        prop_assert!(max_diff(&ab.matrix(), &mul(&a.matrix(), &b.matrix())) <= 1e-12);
    }

    #[test]
    fn action_is_a_left_action((a, b, _) in triple(), x in -3.0..3.0f64, y in -3.0..3.0f64) {
        let direct = a.compose(&b).unwrap().apply([x, y]);
        let stepwise = a.apply(b.apply([x, y]));
        prop_assert!((direct[0] - stepwise[0]).abs() <= 1e-12 && (direct[1] - stepwise[1]).abs() <= 1e-12);
        prop_assert!((a.jacobian_sup() - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn bracket_is_the_matrix_commutator((x, y, _) in generator_triple()) {
        let (mx, my) = (x.matrix(), y.matrix());
        let (p, q) = (mul(&mx, &my), mul(&my, &mx));
        let mut comm = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                comm[i][j] = p[i][j] - q[i][j];
            }
        }
        prop_assert!(max_diff(&x.bracket(&y).unwrap().matrix(), &comm) <= 1e-12);
        let anti = x.bracket(&y).unwrap().add(&y.bracket(&x).unwrap()).unwrap();
        prop_assert!(anti.norm() <= 1e-12);
    }

    #[test]
    fn jacobi_identity((x, y, z) in generator_triple()) {
        let a = x.bracket(&y.bracket(&z).unwrap()).unwrap();
        let b = y.bracket(&z.bracket(&x).unwrap()).unwrap();
        let c = z.bracket(&x.bracket(&y).unwrap()).unwrap();
        prop_assert!(a.add(&b).unwrap().add(&c).unwrap().norm() <= 1e-12);
    }

    #[test]
    fn exponential_matches_matrix_exponential((x, _, _) in generator_triple(), t in -2.0..2.0f64) {
        let numeric = expm(&x.scale(t).matrix());
        prop_assert!(max_diff(&x.exp(t).matrix(), &numeric) <= 1e-9);
    }

    #[test]
    fn exponential_is_a_one_parameter_subgroup((x, _, _) in generator_triple(), s in -1.5..1.5f64, t in -1.5..1.5f64) {
        let product = x.exp(s).compose(&x.exp(t)).unwrap();
        prop_assert!(max_diff(&product.matrix(), &x.exp(s + t).matrix()) <= 1e-12);
    }
}

#[test]
fn mixed_groups_are_rejected() {
    let a = GroupElement::rotation(0.3);
    let b = GroupElement::translation(1.0, 0.0);
    assert!(a.compose(&b).is_err());
    assert!(LieAlgebraElement::rotation(1.0)
        .bracket(&LieAlgebraElement::translation(1.0, 0.0))
        .is_err());
}
