use conekit::charfn;
use conekit::config::RunConfig;
use conekit::harness::{self, InequalityCase, Theorem};
use conekit::linalg::Point;
use conekit::star;
use conekit::testfn::TestFunction;
use conekit::{ConeModel, McConfig};
use proptest::prelude::*;

fn orthant_point(n: usize) -> impl Strategy<Value = Point> {
    prop::collection::vec(-3.0f64..3.0, n).prop_map(|v| Point(v.into_iter().map(f64::exp).collect()))
}

fn lorentz_point(n: usize) -> impl Strategy<Value = Point> {
    (prop::collection::vec(-2.0f64..2.0, n - 1), 0.01f64..3.0).prop_map(|(mut v, s)| {
        let r = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.push(r + s);
        Point(v)
    })
}

fn cone_and_point() -> impl Strategy<Value = (ConeModel, Point)> {
    cone_and_points().prop_map(|(c, x, _)| (c, x))
}

fn cone_and_points() -> impl Strategy<Value = (ConeModel, Point, Point)> {
    prop_oneof![
        (1usize..5).prop_flat_map(|n| (Just(ConeModel::orthant(n).unwrap()), orthant_point(n), orthant_point(n))),
        (2usize..6).prop_flat_map(|n| (Just(ConeModel::lorentz(n).unwrap()), lorentz_point(n), lorentz_point(n))),
    ]
}

proptest! {
    #[test]
    fn star_is_an_involution_with_euler((c, x) in cone_and_point()) {
        let xs = star::star_point(&c, &x).unwrap();
        prop_assert!(c.dual().contains(&xs).unwrap());
        let back = star::star_point(&c.dual(), &xs).unwrap();
        prop_assert!(back.max_abs_diff(&x) <= 1e-9 * x.norm().max(1.0), "{x} -> {back}");
        prop_assert!((xs.dot(&x) - c.dim() as f64).abs() < 1e-9);
    }

    #[test]
    fn delta_follows_automorphisms((c, x, y) in cone_and_points()) {
        let a = c.automorphism(&y).unwrap();
        let ax = a.apply(&x);
        let lhs = charfn::ln_delta(&c, &ax).unwrap();
        let rhs = charfn::ln_delta(&c, &x).unwrap() + a.determinant().abs().ln();
        prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + rhs.abs()));
    }

    #[test]
    fn phi_delta_product_is_constant((c, x) in cone_and_point(), lambda in 0.05f64..20.0) {
        let k = |z: &Point| charfn::ln_phi(&c, z).unwrap() + charfn::ln_delta(&c, z).unwrap();
        prop_assert!((k(&x) - k(&x.scale(lambda))).abs() < 1e-9);
    }

    #[test]
    fn margins_are_affine_in_gamma(p in 1.1f64..5.0, q in 1.1f64..5.0, g in -3.0f64..3.0, dg in 0.1f64..2.0) {
        prop_assume!(q >= p);
        for t in [Theorem::T3_3, Theorem::T3_13a, Theorem::T3_14a, Theorem::T3_15a] {
            let m = |gamma: f64| {
                harness::check_conditions(&InequalityCase::new(t, ConeModel::lorentz(3).unwrap(), p, q, gamma).with_r(1.5))
                    .unwrap()
            };
            let (a, b, c) = (m(g), m(g + dg), m(g + 2.0 * dg));
            prop_assert!(((b.margin - a.margin) - (c.margin - b.margin)).abs() < 1e-9);
            prop_assert_eq!(a.satisfied, a.margin > 0.0);
        }
    }

    #[test]
    fn expression_numbers_round_trip(v in 0.0f64..1e6, e in -5i32..5) {
        let lit = format!("{v:e}*10^{e}");
        let f = TestFunction::expression(&lit, None, None, None).unwrap();
        let got = f.eval(&ConeModel::orthant(1).unwrap(), &[1.0]).unwrap();
        let want = v * 10f64.powi(e);
        prop_assert!((got - want).abs() <= 1e-12 * want.max(1.0));
    }

    #[test]
    fn expression_parser_never_panics(s in "[ -~]{0,24}") {
        let _ = TestFunction::expression(&s, None, None, None);
    }

    #[test]
    fn mc_seeds_are_prefix_consistent(seed in any::<u64>(), n in 1u64..3000) {
        let f = |r: &mut conekit::mc::McRng, _: u64| -> conekit::Result<f64> {
            use rand::Rng;
            Ok(r.random::<f64>())
        };
        let a = conekit::mc::collect(&McConfig::new(n, seed), 1, |r, i| f(r, i)).unwrap();
        let b = conekit::mc::collect(&McConfig::new(n + 500, seed), 1, |r, i| f(r, i)).unwrap();
        prop_assert_eq!(&a[..], &b[..n as usize]);
    }
}

#[test]
fn config_serialization_round_trips() {
    let src = r#"{"schema_version": 1, "cone": {"kind": "lorentz", "dim": 3},
        "mc": {"samples": 5000, "seed": 9},
        "cases": [{"theorem": "T3.13a", "p": 2, "q": "inf", "gamma": -0.5, "r": 1.25,
                   "family": [{"kind": "exp_damped_power", "delta": 0.5},
                              {"kind": "expression", "expr": "exp(-dot([0,0,1], x))", "decay": "-inf"}]}],
        "sweep": {"parameter": "gamma", "values": [-1, 0]}}"#;
    let a = RunConfig::from_json(src).unwrap();
    let js = serde_json::to_string(&a).unwrap();
    let b = RunConfig::from_json(&js).unwrap();
    assert_eq!(js, serde_json::to_string(&b).unwrap());
    assert_eq!(b.cases[0].q, f64::INFINITY);
    assert_eq!(b.build_cases().unwrap()[0].1.len(), 2);
}

#[test]
fn shipped_configs_parse_and_build() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for e in std::fs::read_dir(&dir).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "json") {
            let c = RunConfig::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            c.build_cases().unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            seen += 1;
        }
    }
    assert!(seen >= 3);
}

#[test]
fn weighted_norms_scale_exactly() {
    let cfg = McConfig::new(20_000, 2);
    let c = ConeModel::lorentz(3).unwrap();
    let f = TestFunction::exp_damped(0.5, Point(vec![0.1, 0.0, 1.0]));
    for (w, p) in [(0.0, 2.0), (-0.5, 3.0), (0.25, f64::INFINITY)] {
        let a = harness::weighted_norm(&c, &f, w, p, &cfg).unwrap();
        let b = harness::weighted_norm(&c, &f.clone().scaled(2.5), w, p, &cfg).unwrap();
        assert!((b.value / a.value - 2.5).abs() < 1e-10, "w={w} p={p}");
    }
}
