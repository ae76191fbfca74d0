use orbitpool_core::geometry::{
    sectional_curvature, theorem1_check, theorem2_check, Theorem1Context, VerificationReport,
};
use orbitpool_core::group::{GroupElement, GroupId, LieAlgebraElement};
use orbitpool_core::haar::{MonteCarloSpec, PoolingRegion};
use orbitpool_core::image::{synthesize, GridGeometry, ImageGrid, ImageSpec, Interpolation};
use orbitpool_core::pooling::QuadratureSpec;
use proptest::prelude::*;

fn grid() -> GridGeometry {
    GridGeometry::new(6.0, 128).unwrap()
}

fn mc() -> MonteCarloSpec {
    MonteCarloSpec::new(100_000, 13)
}

fn image() -> impl Strategy<Value = ImageGrid> {
    (-0.8..0.2f64, -0.8..0.2f64, 0.35..0.5f64, 0.0..1.0f64, 0.0..3.0f64).prop_map(|(x, y, s, freq, angle)| {
        let spec = ImageSpec::Gabor {
            center: [x, y],
            sigma: s,
            frequency: freq,
            orientation: angle,
            phase: 0.4,
            amplitude: 1.0,
        };
        synthesize(&spec, grid(), 0.0).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn contraction_bound_holds(f in image(), th in -0.25..0.25f64, tx in -0.3..0.3f64, ty in -0.3..0.3f64) {
        let r = PoolingRegion::se2_box(0.4, 1.0).unwrap();
        let q = QuadratureSpec::default_for(GroupId::Se2);
        let rep = theorem1_check(&f, &GroupElement::se2(th, tx, ty), &r, &q, &mc()).unwrap();
        prop_assert!(rep.pass, "{rep:?}");
        prop_assert!(rep.slack.total < 0.05);
        prop_assert_eq!(rep.recompute_pass(), rep.pass);
    }

    #[test]
    fn bracket_bound_holds(f in image(), a in prop::array::uniform3(-1.0..1.0f64), b in prop::array::uniform3(-1.0..1.0f64)) {
        let r = PoolingRegion::se2_box(0.4, 1.0).unwrap();
        let q = QuadratureSpec::default_for(GroupId::Se2);
        let xi = LieAlgebraElement::se2(a[0], a[1], a[2]);
        let xi2 = LieAlgebraElement::se2(b[0], b[1], b[2]);
        let rep = theorem2_check(&f, &xi, &xi2, &r, &q, &mc()).unwrap();
        prop_assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn curvature_is_symmetric_and_scales_inversely(f in image(), c in prop::sample::select(vec![0.5, 3.0])) {
        let r = PoolingRegion::se2_box(0.4, 1.0).unwrap();
        let q = QuadratureSpec::uniform(3, 5).unwrap();
        let xi = LieAlgebraElement::se2(1.0, 0.0, 0.0);
        let xi2 = LieAlgebraElement::se2(0.2, 1.0, 0.3);
        let k = sectional_curvature(&f, &xi, &xi2, &r, &q, &mc()).unwrap();
        let swapped = sectional_curvature(&f, &xi2, &xi, &r, &q, &mc()).unwrap();
        prop_assert!((k.kappa_hat - swapped.kappa_hat).abs() <= 1e-12 * k.kappa_hat);
        prop_assert!(k.kappa_hat >= 0.0);
        let scaled = sectional_curvature(&f.scale(c), &xi, &xi2, &r, &q, &mc()).unwrap();
        prop_assert!((scaled.kappa_hat * c * c - k.kappa_hat).abs() <= 1e-10 * k.kappa_hat);
        prop_assert!((scaled.kappa_hat / scaled.bound - k.kappa_hat / k.bound).abs() <= 1e-10 * (k.kappa_hat / k.bound));
    }
}

#[test]
fn translation_bound_follows_the_small_displacement_asymptotic() {
    let g = GridGeometry::new(6.0, 96).unwrap();
    let f = synthesize(&ImageSpec::gaussian([-0.5, -0.5], 0.5), g, 0.0).unwrap();
    let r = PoolingRegion::translation_box(1.0).unwrap();
    let ctx = Theorem1Context::new(
        &f,
        &r,
        &QuadratureSpec::default_for(GroupId::Translations),
        Interpolation::Bicubic,
    )
    .unwrap();
    for eps in [0.01, 0.005, 0.001] {
        let rep = ctx.check(&GroupElement::translation(eps, eps), &mc()).unwrap();
        let normalized = rep.analytic_rhs / f.norm2();
        assert!((normalized / (4.0 * eps) - 1.0).abs() <= 0.01, "{eps}: {normalized}");
        assert!(rep.pass);
    }
}

#[test]
fn commuting_generators_have_no_bracket() {
    let g = GridGeometry::new(6.0, 128).unwrap();
    let f = synthesize(&ImageSpec::gaussian([-0.3, 0.1], 0.5), g, 0.0).unwrap();
    let r = PoolingRegion::se2_box(0.4, 1.0).unwrap();
    let q = QuadratureSpec::default_for(GroupId::Se2);
    let xi = LieAlgebraElement::se2(0.0, 1.0, 0.5);
    let rep = theorem2_check(&f, &xi, &xi.scale(-2.0), &r, &q, &mc()).unwrap();
    assert!(rep.measured_lhs <= 1e-10 * f.norm2().powi(2));
    let rep = theorem2_check(
        &f,
        &LieAlgebraElement::se2(0.0, 1.0, 0.0),
        &LieAlgebraElement::se2(0.0, 0.0, 1.0),
        &r,
        &q,
        &mc(),
    )
    .unwrap();
    assert!(rep.measured_lhs <= 1e-10 * f.norm2().powi(2));
}

#[test]
fn reports_round_trip_through_json() {
    let g = GridGeometry::new(6.0, 64).unwrap();
    let f = synthesize(&ImageSpec::gaussian([-0.5, -0.5], 0.5), g, 0.0).unwrap();
    let r = PoolingRegion::se2_box(0.4, 1.0).unwrap();
    let q = QuadratureSpec::uniform(3, 5).unwrap();
    let rep = theorem1_check(&f, &GroupElement::se2(0.1, 0.2, 0.0), &r, &q, &mc()).unwrap();
    let text = serde_json::to_string(&rep).unwrap();
    let back: VerificationReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back, rep);
    assert_eq!(back.recompute_pass(), rep.pass);
    let mut tampered: serde_json::Value = serde_json::from_str(&text).unwrap();
    tampered["surprise"] = serde_json::json!(1);
    assert!(serde_json::from_value::<VerificationReport>(tampered).is_err());
}
