//! Invariant suite behind `conekit selftest`: randomized property checks of
//! every module at a reduced Monte Carlo budget.

use std::fmt::Write as _;
use std::time::Instant;

use crate::charfn;
use crate::cone::ConeModel;
use crate::harness::{self, InequalityCase, Theorem};
use crate::kernel::{self, KernelSpec};
use crate::linalg::{Matrix, Point};
use crate::mc::{self, McConfig, McEstimate, McRng};
use crate::operators;
use crate::sampling;
use crate::star;
use crate::testfn::TestFunction;

type Check = fn(&McConfig) -> std::result::Result<String, String>;

pub struct Invariant {
    pub id: &'static str,
    pub module: &'static str,
    check: Check,
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub id: &'static str,
    pub module: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

/// The default selftest budget.
pub fn default_config() -> McConfig {
    McConfig::new(50_000, 0x5e1f)
}

pub fn registry() -> Vec<Invariant> {
    macro_rules! inv {
        ($m:literal, $id:literal, $f:ident) => {
            Invariant {
                id: $id,
                module: $m,
                check: $f,
            }
        };
    }
    vec![
        inv!("cone", "cone.dual_involution", dual_involution),
        inv!("cone", "cone.dual_pairing", dual_pairing),
        inv!("cone", "cone.axioms", axioms),
        inv!("cone", "cone.boundary_distance", boundary_distance),
        inv!("charfn", "charfn.homogeneity", homogeneity),
        inv!("charfn", "charfn.closed_vs_mc", closed_vs_mc),
        inv!("charfn", "charfn.product_rule", product_rule),
        inv!("charfn", "charfn.log_convexity", log_convexity),
        inv!("charfn", "charfn.boundary_blowup", boundary_blowup),
        inv!("charfn", "charfn.transformation_law", transformation_law),
        inv!("star", "star.involution", star_involution),
        inv!("star", "star.euler", euler),
        inv!("star", "star.duality_constants", duality_constants),
        inv!("star", "star.determinant_law", determinant_law),
        inv!("star", "star.range", range),
        inv!("star", "star.order_reversal", order_reversal),
        inv!("operators", "operators.kernel_homogeneity", kernel_homogeneity),
        inv!("operators", "operators.kdelta_homogeneity", kdelta_homogeneity),
        inv!("operators", "operators.hardy_monotone", hardy_monotone),
        inv!("operators", "operators.r1_is_hardy", r1_is_hardy),
        inv!("operators", "operators.linearity", linearity),
        inv!("harness", "harness.ratio_scale_invariance", ratio_scale_invariance),
        inv!("harness", "harness.automorphism_invariance", automorphism_invariance),
        inv!("harness", "harness.dual_transfer", dual_transfer),
        inv!("harness", "harness.one_d_reduction", one_d_reduction),
        inv!("harness", "harness.conditions_affine", conditions_affine),
        inv!("cli", "cli.determinism", determinism),
        inv!("cli", "cli.single_case_verdicts", single_case_verdicts),
    ]
}

/// Runs every invariant whose id starts with `filter` (all when None).
pub fn run(cfg: &McConfig, filter: Option<&str>) -> Vec<Outcome> {
    registry()
        .into_iter()
        .filter(|i| filter.is_none_or(|f| i.id.starts_with(f)))
        .map(|i| {
            let t = Instant::now();
            let r = (i.check)(cfg);
            let (passed, detail) = match r {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            Outcome {
                id: i.id,
                module: i.module,
                passed,
                detail,
                seconds: t.elapsed().as_secs_f64(),
            }
        })
        .collect()
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

pub fn junit_xml(outcomes: &[Outcome]) -> String {
    let failures = outcomes.iter().filter(|o| !o.passed).count();
    let total: f64 = outcomes.iter().map(|o| o.seconds).sum();
    let mut s = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        s,
        "<testsuite name=\"conekit-selftest\" tests=\"{}\" failures=\"{failures}\" time=\"{total:.3}\">",
        outcomes.len()
    );
    for o in outcomes {
        let _ = write!(
            s,
            "  <testcase classname=\"{}\" name=\"{}\" time=\"{:.3}\"",
            o.module, o.id, o.seconds
        );
        if o.passed {
            let _ = writeln!(s, "/>");
        } else {
            let _ = writeln!(s, ">\n    <failure message=\"{}\"/>\n  </testcase>", xml_escape(&o.detail));
        }
    }
    s.push_str("</testsuite>\n");
    s
}

// --- helpers -------------------------------------------------------------------

type Res = std::result::Result<String, String>;

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn rng(cfg: &McConfig, id: &str) -> McRng {
    mc::stream_rng(cfg.seed, mc::tag(id), 0)
}

fn simplicial2() -> ConeModel {
    ConeModel::simplicial(Matrix::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0]]).unwrap()).unwrap()
}

/// The built-in test cones: self-dual, non-self-dual and a product.
pub fn test_cones() -> Vec<ConeModel> {
    vec![
        ConeModel::orthant(2).unwrap(),
        ConeModel::orthant(3).unwrap(),
        ConeModel::lorentz(2).unwrap(),
        ConeModel::lorentz(3).unwrap(),
        simplicial2(),
        ConeModel::product(vec![ConeModel::orthant(1).unwrap(), ConeModel::lorentz(3).unwrap()]).unwrap(),
    ]
}

fn spread(v: &[f64]) -> f64 {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (max - min) / mean.abs()
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn agree(a: &McEstimate, b: &McEstimate, k: f64) -> bool {
    (a.value - b.value).abs() <= k * (a.stderr.powi(2) + b.stderr.powi(2)).sqrt() + 1e-12 * a.value.abs()
}

const POINTS: usize = 100;

// --- cone ------------------------------------------------------------------------

fn dual_involution(cfg: &McConfig) -> Res {
    let mut r = rng(cfg, "selftest/dual_involution");
    let mut cones = 0;
    while cones < 20 {
        let n = 2 + cones % 2;
        let rows: Vec<Vec<f64>> = (0..n).map(|_| sampling::normal_vec(&mut r, n)).collect();
        let Ok(c) = ConeModel::simplicial(Matrix::from_rows(&rows).map_err(e2s)?) else {
            continue;
        };
        let cc = c.dual().dual();
        for _ in 0..200 {
            let x = Point(sampling::normal_vec(&mut r, n));
            let (a, b) = (c.contains(&x).map_err(e2s)?, cc.contains(&x).map_err(e2s)?);
            ensure(a == b, || format!("membership of {x} differs on {rows:?}"))?;
        }
        cones += 1;
    }
    Ok("20 random simplicial cones x 200 points".into())
}

fn dual_pairing(cfg: &McConfig) -> Res {
    let mut r = rng(cfg, "selftest/dual_pairing");
    for c in test_cones() {
        let d = c.dual();
        for _ in 0..POINTS {
            let x = sampling::random_point(&d, &mut r, 0.7);
            let y = sampling::random_point(&c, &mut r, 0.7);
            ensure(x.dot(&y) > 0.0, || format!("{}: x*.y <= 0 at {x}, {y}", c.label()))?;
        }
    }
    Ok(String::new())
}

fn axioms(cfg: &McConfig) -> Res {
    let mut r = rng(cfg, "selftest/axioms");
    for c in test_cones() {
        for _ in 0..POINTS {
            let x = sampling::random_point(&c, &mut r, 0.7);
            let y = sampling::random_point(&c, &mut r, 0.7);
            let lambda = (sampling::unit(&mut r) * 12.0 - 6.0).exp();
            let bad = |what: &str| format!("{}: {what} fails at {x}, {y}", c.label());
            ensure(c.contains(&x.add(&y)).map_err(e2s)?, || bad("x+y in V"))?;
            ensure(c.contains(&x.scale(lambda)).map_err(e2s)?, || bad("lambda x in V"))?;
            ensure(!c.contains_closure(&x.scale(-1.0)).map_err(e2s)?, || bad("pointedness"))?;
        }
    }
    Ok(String::new())
}

fn boundary_distance(cfg: &McConfig) -> Res {
    let mut r = rng(cfg, "selftest/boundary_distance");
    for c in test_cones() {
        let d = c.dual();
        for _ in 0..POINTS {
            let x = sampling::random_point(&c, &mut r, 0.7);
            let y = sampling::sample_section(&d, &mut r, cfg.max_rejections).map_err(e2s)?;
            let bd = c.boundary_distance(&x).map_err(e2s)?;
            ensure(x.dot(&y) >= bd - 1e-9, || format!("{}: x.y < r(x) at {x}", c.label()))?;
        }
    }
    Ok(String::new())
}

// --- charfn ----------------------------------------------------------------------

fn homogeneity(cfg: &McConfig) -> Res {
    let mut r = rng(cfg, "selftest/homogeneity");
    let mut worst = 0.0f64;
    for c in test_cones() {
        let n = c.dim() as f64;
        for _ in 0..POINTS {
            let x = sampling::random_point(&c, &mut r, 0.7);
            let l = (sampling::unit(&mut r) * 4.0 - 2.0).exp();
            let xl = x.scale(l);
            let ed = (charfn::ln_delta(&c, &xl).map_err(e2s)? - charfn::ln_delta(&c, &x).map_err(e2s)? - n * l.ln()).abs();
            let ep = (charfn::ln_phi(&c, &xl).map_err(e2s)? - charfn::ln_phi(&c, &x).map_err(e2s)? + n * l.ln()).abs();
            worst = worst.max(ed).max(ep);
        }
    }
    ensure(worst < 1e-10, || format!("relative error {worst:e}"))?;
    Ok(format!("max relative error {worst:e}"))
}

fn closed_vs_mc(cfg: &McConfig) -> Res {
    let mut r = rng(cfg, "selftest/closed_vs_mc");
    for c in test_cones() {
        for _ in 0..4 {
            let x = sampling::random_point(&c, &mut r, 0.5);
            let p = charfn::phi(&c, &x).map_err(e2s)?;
            let pm = charfn::phi_mc(&c, &x, cfg).map_err(e2s)?;
            ensure(pm.agrees(p, 0.0, 4.0), || format!("{}: phi {p} vs {pm:?} at {x}", c.label()))?;
            let d = charfn::delta(&c, &x).map_err(e2s)?;
            let dm = charfn::delta_mc(&c, &x, cfg).map_err(e2s)?;
            ensure(dm.agrees(d, 0.0, 4.0), || format!("{}: delta {d} vs {dm:?} at {x}", c.label()))?;
        }
    }
    Ok(String::new())
}

fn product_rule(cfg: &McConfig) -> Res {
    let mut r = rng(cfg, "selftest/product_rule");
    for c in test_cones() {
        let v: Vec<f64> = (0..POINTS)
            .map(|_| {
                let x = sampling::random_point(&c, &mut r, 0.7);
                (charfn::ln_phi(&c, &x).unwrap() + charfn::ln_delta(&c, &x).unwrap()).exp()
            })
            .collect();
        let s = spread(&v);
        ensure(s < 1e-8, || format!("{}: spread of phi*delta {s:e}", c.label()))?;
    }
    Ok(String::new())
}

fn log_convexity(cfg: &McConfig) -> Res {
    let mut r = rng(cfg, "selftest/log_convexity");
    for c in test_cones() {
        for _ in 0..POINTS {
            let x0 = sampling::random_point(&c, &mut r, 0.7);
            let x1 = sampling::random_point(&c, &mut r, 0.7);
            let mid = x0.add(&x1).scale(0.5);
            let lm = charfn::ln_phi(&c, &mid).map_err(e2s)?;
            let l0 = charfn::ln_phi(&c, &x0).map_err(e2s)?;
            let l1 = charfn::ln_phi(&c, &x1).map_err(e2s)?;
            ensure(lm < 0.5 * (l0 + l1) - 1e-12, || format!("{}: not strict at {x0}, {x1}", c.label()))?;
        }
    }
    Ok(String::new())
}

fn boundary_blowup(cfg: &McConfig) -> Res {
    let mut r = rng(cfg, "selftest/boundary_blowup");
    for c in test_cones() {
        for _ in 0..10 {
            let x0 = sampling::random_point(&c, &mut r, 0.5);
            let v = Point(sampling::normal_vec(&mut r, c.dim()));
            let s = c.ray_exit(&x0, &v).map_err(e2s)?;
            if !s.is_finite() {
                continue;
            }
            let xb = x0.add(&v.scale(s));
            let phi0 = charfn::phi(&c, &x0).map_err(e2s)?;
            let d0 = charfn::delta(&c, &x0).map_err(e2s)?;
            // monotone only close to the boundary
            let mut last = 0.0;
            for k in 2..=12 {
                let t = 10f64.powi(-k);
                let xt = xb.add(&x0.sub(&xb).scale(t));
                let p = charfn::phi(&c, &xt).map_err(e2s)?;
                ensure(p > last, || format!("{}: phi not increasing towards {xb}", c.label()))?;
                last = p;
                if k == 12 {
                    ensure(p > 1e6 * phi0, || format!("{}: phi only {p} near {xb}", c.label()))?;
                    let d = charfn::delta(&c, &xt).map_err(e2s)?;
                    ensure(d < 1e-6 * d0, || format!("{}: delta only fell to {d}", c.label()))?;
                }
            }
        }
    }
    Ok(String::new())
}

fn transformation_law(cfg: &McConfig) -> Res {
    let a = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0]]).unwrap();
    let av = simplicial2();
    let v = ConeModel::orthant(2).unwrap();
    let mut r = rng(cfg, "selftest/transformation_law");
    let det = a.determinant().abs();
    for i in 0..5 {
        let x = sampling::random_point(&v, &mut r, 0.5);
        let ax = a.apply(&x);
        let want = charfn::phi(&v, &x).map_err(e2s)? / det;
        let got = charfn::phi(&av, &ax).map_err(e2s)?;
        ensure((got / want - 1.0).abs() < 1e-12, || format!("closed form {got} vs {want}"))?;
        if i < 2 {
            let m = charfn::phi_mc(&av, &ax, cfg).map_err(e2s)?;
            ensure(m.agrees(want, 0.0, 4.0), || format!("phi_mc {m:?} vs {want}"))?;
        }
    }
    Ok(String::new())
}

// --- star ------------------------------------------------------------------------

fn star_involution(cfg: &McConfig) -> Res {
    let mut r = rng(cfg, "selftest/star_involution");
    let (mut worst, mut worst_fd) = (0.0f64, 0.0f64);
    for c in test_cones() {
        let d = c.dual();
        for _ in 0..POINTS {
            let x = sampling::random_point(&c, &mut r, 0.7);
            let back = star::star_point(&d, &star::star_point(&c, &x).map_err(e2s)?).map_err(e2s)?;
            worst = worst.max(back.max_abs_diff(&x) / x.norm());
            let fd = star::star_fd(&d, &star::star_fd(&c, &x, 1e-6).map_err(e2s)?, 1e-6).map_err(e2s)?;
            worst_fd = worst_fd.max(fd.max_abs_diff(&x) / x.norm());
        }
    }
    ensure(worst < 1e-8 && worst_fd < 1e-5, || format!("closed {worst:e}, fd {worst_fd:e}"))?;
    Ok(format!("closed {worst:e}, fd {worst_fd:e}"))
}

fn euler(cfg: &McConfig) -> Res {
    let mut r = rng(cfg, "selftest/euler");
    let (mut worst, mut worst_fd) = (0.0f64, 0.0f64);
    for c in test_cones() {
        for _ in 0..POINTS {
            let x = sampling::random_point(&c, &mut r, 0.7);
            worst = worst.max(star::star(&c, &x).map_err(e2s)?.residual_euler);
            worst_fd = worst_fd.max(star::star_via_fd(&c, &x, 1e-6).map_err(e2s)?.residual_euler);
        }
    }
    ensure(worst < 1e-10 && worst_fd < 1e-6, || format!("closed {worst:e}, fd {worst_fd:e}"))?;
    Ok(format!("closed {worst:e}, fd {worst_fd:e}"))
}

fn duality_constants(cfg: &McConfig) -> Res {
    let mut r = rng(cfg, "selftest/duality_constants");
    for c in test_cones() {
        let d = c.dual();
        let mut pp = Vec::new();
        let mut dd = Vec::new();
        for _ in 0..POINTS {
            let x = sampling::random_point(&c, &mut r, 0.7);
            let xs = star::star_point(&c, &x).map_err(e2s)?;
            pp.push((charfn::ln_phi(&c, &x).map_err(e2s)? + charfn::ln_phi(&d, &xs).map_err(e2s)?).exp());
            dd.push((charfn::ln_delta(&c, &x).map_err(e2s)? + charfn::ln_delta(&d, &xs).map_err(e2s)?).exp());
        }
        let (a, b) = (spread(&pp), spread(&dd));
        ensure(a < 1e-8 && b < 1e-8, || format!("{}: spreads {a:e}, {b:e}", c.label()))?;
    }
    Ok(String::new())
}

fn determinant_law(cfg: &McConfig) -> Res {
    let mut r = rng(cfg, "selftest/determinant_law");
    for c in test_cones() {
        let v: Vec<f64> = (0..POINTS)
            .map(|_| {
                let x = sampling::random_point(&c, &mut r, 0.5);
                let k = star::jacobian_K(&c, &x).map_err(e2s)?;
                Ok(k.determinant() * (2.0 * charfn::ln_delta(&c, &x).map_err(e2s)?).exp())
            })
            .collect::<std::result::Result<_, String>>()?;
        let s = spread(&v);
        ensure(s < 1e-4, || format!("{}: spread {s:e}", c.label()))?;
    }
    Ok(String::new())
}

fn range(cfg: &McConfig) -> Res {
    let mut r = rng(cfg, "selftest/range");
    for c in test_cones() {
        let d = c.dual();
        for _ in 0..POINTS {
            let x = sampling::random_point(&c, &mut r, 1.0);
            let xs = star::star_point(&c, &x).map_err(e2s)?;
            ensure(d.contains(&xs).map_err(e2s)?, || format!("{}: x* = {xs} not in V*", c.label()))?;
        }
    }
    Ok(String::new())
}

fn order_reversal(cfg: &McConfig) -> Res {
    let mut r = rng(cfg, "selftest/order_reversal");
    for c in test_cones().into_iter().filter(|c| c.is_self_dual()) {
        let d = c.dual();
        for _ in 0..POINTS {
            let x = sampling::random_point(&c, &mut r, 0.7);
            let z = x.add(&sampling::random_point(&c, &mut r, 0.7));
            let (xs, zs) = (star::star_point(&c, &x).map_err(e2s)?, star::star_point(&c, &z).map_err(e2s)?);
            ensure(d.cone_less(&zs, &xs).map_err(e2s)?, || format!("{}: order kept at {x} < {z}", c.label()))?;
        }
    }
    Ok(String::new())
}

// --- operators -------------------------------------------------------------------

fn builtin_kernels() -> Vec<KernelSpec> {
    vec![
        KernelSpec::hardy(),
        KernelSpec::laplace(),
        KernelSpec::riemann_liouville(1.5).unwrap(),
        KernelSpec::weyl(1.5).unwrap(),
        KernelSpec::laplace_transform(),
    ]
}

fn kernel_homogeneity(cfg: &McConfig) -> Res {
    let mut worst = 0.0f64;
    for c in test_cones() {
        for k in builtin_kernels() {
            let e = kernel::homogeneity_error(&c, &k, 100, cfg.seed).map_err(e2s)?;
            ensure(e < 1e-8, || format!("{} on {}: {e:e}", k.name, c.label()))?;
            worst = worst.max(e);
        }
    }
    Ok(format!("max deviation {worst:e}"))
}

fn kdelta_homogeneity(cfg: &McConfig) -> Res {
    let mut r = rng(cfg, "selftest/kdelta_homogeneity");
    let cases = [
        (KernelSpec::hardy(), 0.5),
        (KernelSpec::laplace(), 0.5),
        (KernelSpec::riemann_liouville(1.5).unwrap(), 0.5),
        (KernelSpec::weyl(1.5).unwrap(), -3.0),
    ];
    for c in [ConeModel::orthant(2).unwrap(), ConeModel::lorentz(3).unwrap()] {
        for (k, d) in &cases {
            let f = TestFunction::delta_power(*d);
            let x = sampling::random_point(&c, &mut r, 0.5);
            let a = c.automorphism(&sampling::random_point(&c, &mut r, 0.5)).map_err(e2s)?;
            let det = a.determinant().abs();
            let ctx = |e: crate::ConeError| format!("{} on {} at {x}: {e}", k.name, c.label());
            let lhs = operators::apply_kernel(&c, k, &f, &a.apply(&x), cfg).map_err(ctx)?;
            let rhs = operators::apply_kernel(&c, k, &f, &x, cfg)
                .map_err(ctx)?
                .scale(det.powf(d + k.beta + 1.0));
            ensure(agree(&lhs, &rhs, 4.0), || format!("{} on {}: {lhs:?} vs {rhs:?}", k.name, c.label()))?;
        }
    }
    Ok(String::new())
}

fn hardy_monotone(cfg: &McConfig) -> Res {
    let mut r = rng(cfg, "selftest/hardy_monotone");
    for c in [ConeModel::orthant(2).unwrap(), ConeModel::lorentz(3).unwrap(), simplicial2()] {
        let f = TestFunction::indicator_power(None, c.axis().scale(1.5), 0.5);
        for _ in 0..5 {
            let x = sampling::random_point(&c, &mut r, 0.5);
            let y = x.add(&sampling::random_point(&c, &mut r, 0.5).scale(0.3));
            let hx = operators::hardy(&c, &f, &x, cfg).map_err(e2s)?;
            let hy = operators::hardy(&c, &f, &y, cfg).map_err(e2s)?;
            let se = (hx.stderr.powi(2) + hy.stderr.powi(2)).sqrt();
            ensure(hx.value <= hy.value + 3.0 * se, || format!("{}: Hf({x}) > Hf({y})", c.label()))?;
        }
    }
    Ok(String::new())
}

fn r1_is_hardy(cfg: &McConfig) -> Res {
    let mut r = rng(cfg, "selftest/r1_is_hardy");
    for c in [ConeModel::orthant(2).unwrap(), ConeModel::lorentz(3).unwrap()] {
        for i in 0..3 {
            let f = TestFunction::exp_damped(0.25 * i as f64, star::star_point(&c, &c.axis()).map_err(e2s)?);
            let x = sampling::random_point(&c, &mut r, 0.5);
            let h = operators::hardy(&c, &f, &x, cfg).map_err(e2s)?;
            let r1 = operators::riemann_liouville(&c, 1.0, &f, &x, cfg).map_err(e2s)?;
            ensure(agree(&h, &r1, 3.0), || format!("{}: {h:?} vs {r1:?}", c.label()))?;
        }
    }
    Ok(String::new())
}

fn linearity(cfg: &McConfig) -> Res {
    let c = ConeModel::lorentz(3).unwrap();
    let x = c.axis().scale(1.3);
    let f = TestFunction::exp_damped(0.5, star::star_point(&c, &c.axis()).map_err(e2s)?);
    for k in builtin_kernels().into_iter().filter(|k| k.side == crate::kernel::Side::VxV) {
        let a = operators::apply_kernel(&c, &k, &f, &x, cfg).map_err(e2s)?;
        let b = operators::apply_kernel(&c, &k, &f.clone().scaled(7.0), &x, cfg).map_err(e2s)?;
        let e = (b.value / a.value - 7.0).abs() / 7.0;
        ensure(e < 1e-12, || format!("{}: K(7f)/Kf off by {e:e}", k.name))?;
    }
    Ok(String::new())
}

// --- harness ---------------------------------------------------------------------

fn small(cfg: &McConfig) -> McConfig {
    cfg.with_samples(cfg.samples.min(20_000))
}

fn ratio_scale_invariance(cfg: &McConfig) -> Res {
    let case = InequalityCase::new(Theorem::T3_3, ConeModel::orthant(2).unwrap(), 2.0, 2.0, 0.0);
    let f = TestFunction::indicator_power(None, Point(vec![1.0, 1.0]), 0.25);
    let a = harness::verify(&case, std::slice::from_ref(&f), &small(cfg)).map_err(e2s)?;
    let b = harness::verify(&case, &[f.scaled(5.0)], &small(cfg)).map_err(e2s)?;
    let (ra, rb) = (a.per_function[0].ratio, b.per_function[0].ratio);
    ensure((ra - rb).abs() <= 1e-10 * ra, || format!("{ra} vs {rb}"))?;
    Ok(format!("ratio {ra}"))
}

fn automorphism_invariance(cfg: &McConfig) -> Res {
    let c = ConeModel::orthant(2).unwrap();
    let case = InequalityCase::new(Theorem::T3_3, c, 2.0, 2.0, 0.0);
    let f = TestFunction::indicator_power(None, Point(vec![1.0, 1.0]), 0.25);
    let g = f.clone().pullback(Matrix::diag(&[3.0, 0.5])).map_err(e2s)?;
    let a = harness::verify(&case, &[f], cfg).map_err(e2s)?;
    let b = harness::verify(&case, &[g], cfg).map_err(e2s)?;
    let (fa, fb) = (&a.per_function[0], &b.per_function[0]);
    let se = (fa.ratio_stderr.powi(2) + fb.ratio_stderr.powi(2)).sqrt();
    ensure((fa.ratio - fb.ratio).abs() <= 4.0 * se, || format!("{} vs {} (se {se})", fa.ratio, fb.ratio))?;
    Ok(format!("{} vs {}", fa.ratio, fb.ratio))
}

/// Implied constants c of the dual transfer for 20 random f.
pub fn dual_transfer_constants(cone: &ConeModel, cfg: &McConfig) -> crate::Result<Vec<f64>> {
    let mut r = rng(cfg, "selftest/dual_transfer");
    let d = cone.dual();
    (0..20)
        .map(|_| {
            let w = sampling::random_point(&d, &mut r, 0.5);
            let e = 0.5 + sampling::unit(&mut r);
            let f = TestFunction::exp_damped(e, w);
            let (lhs, rhs) = harness::dual_transfer(cone, &f, 2.0, -1.5, cfg)
                .map_err(|e| crate::ConeError::InvalidArgument(format!("{} with {f}: {e}", cone.label())))?;
            Ok(lhs.value / rhs.value)
        })
        .collect()
}

fn dual_transfer(cfg: &McConfig) -> Res {
    for c in [ConeModel::orthant(2).unwrap(), ConeModel::lorentz(3).unwrap(), simplicial2()] {
        let v = dual_transfer_constants(&c, cfg).map_err(e2s)?;
        let s = spread(&v);
        ensure(s < 0.05, || format!("{}: relative spread {s}", c.label()))?;
    }
    Ok(String::new())
}

fn one_d_reduction(_: &McConfig) -> Res {
    let o1 = ConeModel::orthant(1).unwrap();
    for t in [Theorem::T3_3, Theorem::T3_13a, Theorem::T3_14a, Theorem::T3_15a] {
        for p in [1.5, 2.0, 3.0] {
            for g in [-1.0, 0.0, 0.4, 1.7] {
                let c = harness::check_conditions(&InequalityCase::new(t, o1.clone(), p, p, g)).map_err(e2s)?;
                let want = if t == Theorem::T3_14a { g - (p - 1.0) } else { p - 1.0 - g };
                ensure((c.margin - want).abs() < 1e-12, || format!("{t} p={p} gamma={g}: margin {}", c.margin))?;
            }
        }
    }
    Ok(String::new())
}

fn conditions_affine(_: &McConfig) -> Res {
    use Theorem::*;
    let cones = [ConeModel::orthant(2).unwrap(), ConeModel::lorentz(3).unwrap()];
    for c in &cones {
        for t in [T3_3, T3_13a, T3_14a, T3_15a, T3_13b, T3_14b, T3_15b, T3_13c, T3_14c, T3_15c] {
            let (p, q) = match t {
                T3_13b | T3_14b | T3_15b => (2.0, f64::INFINITY),
                T3_13c | T3_14c | T3_15c => (f64::INFINITY, f64::INFINITY),
                _ => (2.0, 2.0),
            };
            let base = InequalityCase::new(t, c.clone(), p, q, 0.0).with_r(1.5).with_alpha(0.0);
            let m: Vec<f64> = [-1.0, 0.0, 1.0]
                .iter()
                .map(|v| harness::check_conditions(&base.clone().with_exponent(*v)).map(|r| r.margin))
                .collect::<crate::Result<_>>()
                .map_err(e2s)?;
            let (d1, d2) = (m[1] - m[0], m[2] - m[1]);
            let increasing = matches!(t, T3_14a | T3_14b | T3_14c);
            ensure((d1 - d2).abs() < 1e-9, || format!("{t} on {}: margins {m:?} not affine", c.label()))?;
            ensure((d1 > 0.0) == increasing, || format!("{t} on {}: wrong slope sign {d1}", c.label()))?;
        }
    }
    Ok(String::new())
}

// --- cli -------------------------------------------------------------------------

fn determinism_config() -> crate::config::RunConfig {
    crate::config::RunConfig::from_json(
        r#"{"schema_version": 1, "cone": {"kind": "orthant", "dim": 2},
            "cases": [{"theorem": "T3.15a", "p": 2, "q": 2},
                      {"theorem": "T3.3", "p": 2, "q": 2, "gamma": 0.25}]}"#,
    )
    .expect("built-in config parses")
}

fn determinism(cfg: &McConfig) -> Res {
    let rc = determinism_config();
    let run = |threads: usize| -> std::result::Result<String, String> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(e2s)?;
        pool.install(|| crate::cli::run_verify(&rc, &small(cfg)).csv_string().map_err(e2s))
    };
    let a = run(1)?;
    ensure(a == run(1)?, || "two runs differ".into())?;
    ensure(a == run(4)?, || "1 vs 4 threads differ".into())?;
    Ok(format!("{} bytes", a.len()))
}

fn single_case_verdicts(cfg: &McConfig) -> Res {
    let rc = determinism_config();
    let all = crate::cli::run_verify(&rc, &small(cfg));
    for i in 0..rc.cases.len() {
        let mut one = rc.clone();
        one.cases = vec![rc.cases[i].clone()];
        let single = crate::cli::run_verify(&one, &small(cfg));
        for row in &single.rows {
            ensure(all.rows.contains(row), || format!("row not reproduced: {row:?}"))?;
        }
    }
    Ok(String::new())
}
