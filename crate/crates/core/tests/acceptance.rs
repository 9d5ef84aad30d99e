//! Acceptance suite: one PASS/FAIL line per criterion, exit 1 on any failure.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use conekit::charfn;
use conekit::harness::{self, InequalityCase, SweepParameter, Theorem, Verdict};
use conekit::kernel::KernelSpec;
use conekit::linalg::{Matrix, Point};
use conekit::mc::{self, McRng};
use conekit::operators;
use conekit::sampling;
use conekit::star;
use conekit::testfn::TestFunction;
use conekit::{ConeModel, McConfig, McEstimate};
use rand::Rng;

type Res = Result<String, String>;
type Criterion = (&'static str, fn() -> Res);

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rng(id: &str) -> McRng {
    mc::stream_rng(0xacce, mc::tag(id), 0)
}

fn within(est: &McEstimate, want: f64, k: f64) -> bool {
    (est.value - want).abs() <= k * est.stderr + 1e-12 * want.abs().max(1.0)
}

fn agree(a: &McEstimate, b: &McEstimate, k: f64) -> bool {
    (a.value - b.value).abs() <= k * (a.stderr.powi(2) + b.stderr.powi(2)).sqrt() + 1e-12 * a.value.abs()
}

fn spread(v: &[f64]) -> f64 {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (max - min) / mean.abs()
}

fn o(n: usize) -> ConeModel {
    ConeModel::orthant(n).unwrap()
}

fn l(n: usize) -> ConeModel {
    ConeModel::lorentz(n).unwrap()
}

fn p(v: &[f64]) -> Point {
    Point(v.to_vec())
}

fn random_simplicial(r: &mut McRng) -> ConeModel {
    loop {
        let rows: Vec<Vec<f64>> = (0..2).map(|_| (0..2).map(|_| r.random::<f64>() * 2.0 - 0.5).collect()).collect();
        let m = Matrix::from_rows(&rows).unwrap();
        if m.determinant().abs() > 0.2 {
            if let Ok(c) = ConeModel::simplicial(m) {
                return c;
            }
        }
    }
}

/// orthant(2,3), lorentz(2,3), one random simplicial(2) and a product.
fn geometry_cones() -> Vec<ConeModel> {
    let mut r = rng("cones");
    vec![
        o(2),
        o(3),
        l(2),
        l(3),
        random_simplicial(&mut r),
        ConeModel::product(vec![o(1), l(3)]).unwrap(),
    ]
}

fn points(c: &ConeModel, id: &str, k: usize, spread: f64) -> Vec<Point> {
    let mut r = rng(&format!("{id}/{}", c.label()));
    (0..k).map(|_| sampling::random_point(c, &mut r, spread)).collect()
}

// --- 1-3: geometry ---------------------------------------------------------------

fn involution() -> Res {
    let t = Instant::now();
    let mut worst = 0.0f64;
    for c in geometry_cones() {
        let d = c.dual();
        for x in points(&c, "involution", 100, 0.7) {
            let back = star::star_point(&d, &star::star_point(&c, &x).map_err(e2s)?).map_err(e2s)?;
            worst = worst.max(back.max_abs_diff(&x) / x.norm().max(1.0));
        }
    }
    let secs = t.elapsed().as_secs_f64();
    ensure(worst < 1e-8, || format!("max error {worst:e}"))?;
    ensure(secs < 10.0, || format!("took {secs:.1}s"))?;
    Ok(format!("max error {worst:e}"))
}

fn euler() -> Res {
    let (mut closed, mut fd) = (0.0f64, 0.0f64);
    for c in geometry_cones() {
        for x in points(&c, "involution", 100, 0.7) {
            closed = closed.max(star::star(&c, &x).map_err(e2s)?.residual_euler);
            // relative step: star_fd scales h by |x|
            fd = fd.max(star::star_via_fd(&c, &x, 1e-6).map_err(e2s)?.residual_euler);
        }
    }
    ensure(closed < 1e-10 && fd < 1e-6, || format!("closed {closed:e}, fd {fd:e}"))?;
    Ok(format!("closed {closed:e}, fd {fd:e}"))
}

fn constant_laws() -> Res {
    let (mut wd, mut wk) = (0.0f64, 0.0f64);
    for c in geometry_cones() {
        let d = c.dual();
        let mut dd = Vec::new();
        let mut kk = Vec::new();
        for x in points(&c, "constants", 100, 0.5) {
            let xs = star::star_point(&c, &x).map_err(e2s)?;
            let ld = charfn::ln_delta(&c, &x).map_err(e2s)?;
            dd.push((ld + charfn::ln_delta(&d, &xs).map_err(e2s)?).exp());
            kk.push(star::jacobian_K(&c, &x).map_err(e2s)?.determinant() * (2.0 * ld).exp());
        }
        let (a, b) = (spread(&dd), spread(&kk));
        ensure(a < 1e-8, || format!("{}: delta spread {a:e}", c.label()))?;
        ensure(b < 1e-4, || format!("{}: det K spread {b:e}", c.label()))?;
        wd = wd.max(a);
        wk = wk.max(b);
    }
    Ok(format!("delta spread {wd:e}, det K spread {wk:e}"))
}

// --- 4-6: characteristic function --------------------------------------------------

fn phi_cross_validation() -> Res {
    let cfg = McConfig::new(100_000, 4);
    let mut worst = 0.0f64;
    for c in geometry_cones() {
        let xs = points(&c, "phi", 20, 0.5);
        for x in &xs {
            let want = charfn::phi(&c, x).map_err(e2s)?;
            let est = charfn::phi_mc(&c, x, &cfg).map_err(e2s)?;
            ensure(within(&est, want, 4.0), || format!("{}: phi({x}) = {want}, mc {est:?}", c.label()))?;
            worst = worst.max((est.value - want).abs() / est.stderr.max(f64::MIN_POSITIVE));
        }
        for w in xs.windows(2) {
            let mid = w[0].add(&w[1]).scale(0.5);
            let lm = charfn::ln_phi(&c, &mid).map_err(e2s)?;
            let l0 = charfn::ln_phi(&c, &w[0]).map_err(e2s)?;
            let l1 = charfn::ln_phi(&c, &w[1]).map_err(e2s)?;
            ensure(lm < 0.5 * (l0 + l1), || format!("{}: log-convexity fails at {mid}", c.label()))?;
        }
    }
    Ok(format!("max deviation {worst:.2} se"))
}

fn sigma_brackets() -> Res {
    let cfg = McConfig::new(1_000_000, 5);
    let alphas: Vec<f64> = (0..15).map(|i| -1.5 + 0.1 * i as f64).collect();
    let mut out = Vec::new();
    for (c, want) in [(o(2), -1.0), (l(3), -2.0 / 3.0)] {
        let t = Instant::now();
        let rep = charfn::sigma0_estimate(&c, &alphas, &cfg).map_err(e2s)?;
        let secs = t.elapsed().as_secs_f64();
        let b = rep.bracket.ok_or_else(|| format!("{}: no bracket", c.label()))?;
        ensure(b.contains(want) && b.width() <= 0.2 + 1e-12, || {
            format!("{}: bracket ({}, {}) for {want}", c.label(), b.low, b.high)
        })?;
        ensure(secs < 120.0, || format!("{}: took {secs:.0}s", c.label()))?;
        out.push(format!("{} ({:.2}, {:.2}) in {secs:.0}s", c.label(), b.low, b.high));
    }
    Ok(out.join(", "))
}

fn fixed_points() -> Res {
    let mut worst = 0.0f64;
    for n in 1..=4 {
        let x = star::fixed_point(&o(n), 1e-12).map_err(e2s)?;
        let e = x.max_abs_diff(&Point(vec![1.0; n]));
        ensure(e < 1e-8, || format!("orthant({n}): {x}"))?;
        worst = worst.max(e);
    }
    for n in 2..=4 {
        let x = star::fixed_point(&l(n), 1e-12).map_err(e2s)?;
        let mut want = vec![0.0; n];
        want[n - 1] = (n as f64).sqrt();
        let e = x.max_abs_diff(&Point(want));
        ensure(e < 1e-6, || format!("lorentz({n}): {x}"))?;
        worst = worst.max(e);
    }
    Ok(format!("max error {worst:e}"))
}

// --- 7-8: operators ------------------------------------------------------------------

fn operator_oracles() -> Res {
    let cfg = McConfig::new(100_000, 7);
    let one = TestFunction::delta_power(0.0);
    let e1 = TestFunction::exp_damped(0.0, p(&[1.0]));
    let gamma = |x: f64| statrs::function::gamma::gamma(x);
    let check = |name: &str, est: McEstimate, want: f64| -> Result<(), String> {
        ensure(within(&est, want, 3.0), || format!("{name}: want {want}, got {est:?}"))
    };
    check("H1 on orthant(2) at (2,3)", operators::hardy(&o(2), &one, &p(&[2.0, 3.0]), &cfg).map_err(e2s)?, 6.0)?;
    check(
        "H delta on orthant(2) at (1,1)",
        operators::hardy(&o(2), &TestFunction::delta_power(1.0), &p(&[1.0, 1.0]), &cfg).map_err(e2s)?,
        0.25,
    )?;
    check("L1 on orthant(2) at (1,2)", operators::laplace(&o(2), &one, &p(&[1.0, 2.0]), &cfg).map_err(e2s)?, 2.0)?;
    for (n, d, x) in [(2, 0.5, vec![1.0, 2.0]), (3, 1.0, vec![0.5, 1.0, 2.0])] {
        let want = gamma(d + 1.0).powi(n as i32) * x.iter().product::<f64>().powf(d + 1.0);
        let est = operators::laplace(&o(n), &TestFunction::delta_power(d), &p(&x), &cfg).map_err(e2s)?;
        check(&format!("L delta^{d} on orthant({n})"), est, want)?;
    }
    check("R2 on orthant(1) at 3", operators::riemann_liouville(&o(1), 2.0, &one, &p(&[3.0]), &cfg).map_err(e2s)?, 4.5)?;
    check(
        "R2 on orthant(2) at (1,1)",
        operators::riemann_liouville(&o(2), 2.0, &one, &p(&[1.0, 1.0]), &cfg).map_err(e2s)?,
        0.25,
    )?;
    check("W1 e^-t at 1", operators::weyl(&o(1), 1.0, &e1, &p(&[1.0]), &cfg).map_err(e2s)?, (-1.0f64).exp())?;
    check("W2 e^-t at 0", operators::weyl(&o(1), 2.0, &e1, &p(&[0.0]), &cfg).map_err(e2s)?, 1.0)?;
    let zero = TestFunction::zero();
    for k in [KernelSpec::hardy(), KernelSpec::laplace(), KernelSpec::weyl(1.0).map_err(e2s)?] {
        let z = operators::apply_kernel(&o(2), &k, &zero, &p(&[1.0, 2.0]), &cfg).map_err(e2s)?;
        ensure(z.value == 0.0 && z.stderr == 0.0, || format!("{} of zero: {z:?}", k.name))?;
    }

    // homogeneity of H Δ^δ and L Δ^0
    let hd = TestFunction::delta_power(0.5);
    let (x, lam) = (p(&[1.0, 2.0]), 1.7);
    let a = operators::hardy(&o(2), &hd, &x.scale(lam), &cfg).map_err(e2s)?;
    let b = operators::hardy(&o(2), &hd, &x, &cfg).map_err(e2s)?.scale(lam.powf(2.0 * 1.5));
    ensure(agree(&a, &b, 3.0), || format!("H delta^0.5 homogeneity: {a:?} vs {b:?}"))?;
    let x = p(&[0.2, 1.0]);
    let a = operators::laplace(&l(2), &one, &x.scale(lam), &cfg).map_err(e2s)?;
    let b = operators::laplace(&l(2), &one, &x, &cfg).map_err(e2s)?.scale(lam * lam);
    ensure(agree(&a, &b, 3.0), || format!("L1 homogeneity on lorentz(2): {a:?} vs {b:?}"))?;

    // R_1 = H on random cases
    let mut r = rng("r1");
    for i in 0..10 {
        let c = if i % 2 == 0 { o(2) } else { l(3) };
        let w = star::star_point(&c, &sampling::random_point(&c, &mut r, 0.4)).map_err(e2s)?;
        let f = TestFunction::exp_damped(r.random::<f64>(), w);
        let x = sampling::random_point(&c, &mut r, 0.5);
        let h = operators::hardy(&c, &f, &x, &cfg).map_err(e2s)?;
        let r1 = operators::riemann_liouville(&c, 1.0, &f, &x, &cfg).map_err(e2s)?;
        ensure(agree(&h, &r1, 3.0), || format!("R1 vs H on {} with {f} at {x}: {h:?} vs {r1:?}", c.label()))?;
    }
    Ok("separable oracles, homogeneity, R1 = H on 10 cases".into())
}

fn fubini() -> Res {
    let cfg = McConfig::new(100_000, 8);
    let (lhs, rhs) = operators::fubini_duality_check(
        &o(1),
        1.0,
        &TestFunction::exp_damped(0.0, p(&[1.0])),
        &TestFunction::indicator(p(&[1.0])),
        &cfg,
    )
    .map_err(e2s)?;
    let want = 1.0 - (-1.0f64).exp();
    ensure(within(&lhs, want, 4.0) && within(&rhs, want, 4.0), || format!("1 - 1/e: {lhs:?}, {rhs:?}"))?;
    let mut r = rng("fubini");
    let mut worst = 0.0f64;
    for i in 0..10 {
        let n = 1 + i % 2;
        let c = o(n);
        let rate = Point((0..n).map(|_| 0.5 + r.random::<f64>()).collect());
        let f = TestFunction::exp_damped(r.random::<f64>() * 0.5, rate);
        let b = Point((0..n).map(|_| 0.5 + r.random::<f64>() * 1.5).collect());
        let g = TestFunction::indicator_power(None, b, r.random::<f64>());
        let order = 1.0 + r.random::<f64>() * 1.5;
        let (a, bb) = operators::fubini_duality_check(&c, order, &f, &g, &cfg).map_err(e2s)?;
        ensure(agree(&a, &bb, 4.0), || format!("{} r={order} f={f} g={g}: {a:?} vs {bb:?}", c.label()))?;
        let se = (a.stderr.powi(2) + bb.stderr.powi(2)).sqrt();
        worst = worst.max((a.value - bb.value).abs() / se);
    }
    Ok(format!("max deviation {worst:.2} combined se"))
}

// --- 9-11: inequalities -------------------------------------------------------------

fn classical_hardy() -> Res {
    let case = InequalityCase::new(Theorem::Hardy1D, o(1), 2.0, 2.0, 0.0);
    let f = TestFunction::indicator(p(&[1.0]));
    let rep = harness::verify(&case, &[f], &McConfig::new(400_000, 9)).map_err(e2s)?;
    let r2 = rep.per_function[0].ratio.powi(2);
    ensure((r2 / 2.0 - 1.0).abs() <= 0.03, || format!("ratio^2 = {r2}"))?;

    let cfg = McConfig::new(100_000, 9);
    let values = [-1.0, -0.5, 0.0, 0.5, 0.75, 1.0, 1.25, 1.5];
    let family = harness::default_family(&case).map_err(e2s)?;
    let points = harness::sweep(&case, SweepParameter::Gamma, &values, &family, &cfg).map_err(e2s)?;
    let mut flagged = Vec::new();
    for pt in &points {
        let g = pt.value;
        let verdict = pt.verify.as_ref().map(|v| v.verdict).map_err(e2s)?;
        let grows = match &pt.probe {
            Some(Ok(pr)) => pr.unbounded,
            Some(Err(e)) => return Err(format!("gamma={g}: probe failed: {e}")),
            None => false,
        };
        if g >= 1.0 {
            ensure(grows, || format!("gamma={g}: growth not flagged"))?;
            ensure(verdict != Verdict::Consistent, || format!("gamma={g}: verify claims consistent"))?;
            flagged.push(g);
        } else {
            ensure(!grows, || format!("gamma={g}: growth flagged inside the condition"))?;
            if g <= 0.75 {
                ensure(verdict == Verdict::Consistent, || format!("gamma={g}: verdict {verdict:?}"))?;
            }
        }
    }
    Ok(format!("ratio^2 = {r2:.4}; growth flagged at gamma {flagged:?}"))
}

fn condition_consistency() -> Res {
    let mut checked = 0;
    for pp in [1.25, 1.5, 2.0, 3.0, 4.0] {
        for i in 0..13 {
            let g = -2.0 + 0.5 * i as f64;
            let c = harness::check_conditions(&InequalityCase::new(Theorem::T3_13a, o(1), pp, pp, g).with_r(1.0))
                .map_err(e2s)?;
            ensure((c.margin - (pp - 1.0 - g)).abs() < 1e-12, || format!("p={pp} gamma={g}: margin {}", c.margin))?;
            ensure(c.satisfied == (g < pp - 1.0), || format!("p={pp} gamma={g}: satisfied {}", c.satisfied))?;
            checked += 1;
        }
    }
    for pp in [1.5, 2.0, 3.0] {
        for i in 0..20 {
            let g = -1.5 + 0.15 * i as f64;
            let (u, v) = harness::hardy_weights(pp, pp, g);
            let finite = harness::bradley_constant(u, v, pp, pp).map_err(e2s)?.is_finite();
            let c = harness::check_conditions(&InequalityCase::new(Theorem::Hardy1D, o(1), pp, pp, g)).map_err(e2s)?;
            ensure(finite == c.satisfied, || format!("p={pp} gamma={g}: bradley finite {finite}"))?;
            checked += 1;
        }
    }
    Ok(format!("{checked} grid points"))
}

fn end_to_end() -> Res {
    let t = Instant::now();
    let cfg = McConfig::new(100_000, 11);
    let simplicial = ConeModel::simplicial(Matrix::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0]]).unwrap()).unwrap();
    let cases = vec![
        InequalityCase::new(Theorem::T3_3, o(2), 2.0, 2.0, 0.0).with_kernel(KernelSpec::hardy()),
        InequalityCase::new(Theorem::T3_3, l(3), 2.0, 2.0, 0.0).with_kernel(KernelSpec::hardy()),
        InequalityCase::new(Theorem::T3_13a, o(2), 2.0, 2.0, 0.0).with_r(1.25),
        InequalityCase::new(Theorem::T3_13a, l(3), 2.0, 2.0, -0.5).with_r(1.25),
        InequalityCase::new(Theorem::T3_14a, o(2), 2.0, 2.0, 1.5).with_r(1.25),
        InequalityCase::new(Theorem::T3_14a, l(3), 2.0, 2.0, 2.0).with_r(1.25),
        InequalityCase::new(Theorem::T3_15a, o(2), 2.0, 2.0, 0.0),
        InequalityCase::new(Theorem::T3_15a, l(3), 2.0, 2.0, 0.0),
        InequalityCase::new(Theorem::T3_9, simplicial, 2.0, 2.0, 0.0).with_kernel(KernelSpec::laplace_transform()),
    ];
    let mut out = Vec::new();
    for case in &cases {
        let label = format!("{} on {} gamma={}", case.theorem, case.cone.label(), case.gamma);
        let cond = harness::check_conditions(case).map_err(e2s)?;
        ensure(cond.satisfied && cond.margin >= 0.25, || format!("{label}: margin {}", cond.margin))?;
        let family = harness::default_family(case).map_err(e2s)?;
        let rep = harness::verify(case, &family, &cfg).map_err(|e| format!("{label}: {e}"))?;
        ensure(rep.verdict == Verdict::Consistent, || format!("{label}: {:?}, {:?}", rep.verdict, rep.per_function))?;
        out.push(format!("{label} ratio {:.3}", rep.max_ratio));
    }
    ensure(t.elapsed() < Duration::from_secs(1800), || "over 30 minutes".into())?;
    Ok(out.join("; "))
}

// --- 12: determinism ------------------------------------------------------------------

const DETERMINISM_CONFIG: &str = r#"{
  "schema_version": 1,
  "cone": {"kind": "orthant", "dim": 2},
  "mc": {"samples": 20000, "seed": 12},
  "cases": [
    {"theorem": "T3.15a", "p": 2, "q": 2},
    {"theorem": "T3.3", "p": 2, "q": 2, "gamma": 0.25},
    {"theorem": "T3.15a", "cone": {"kind": "lorentz", "dim": 3}, "p": 2, "q": 2}
  ]
}"#;

fn verify_csv(dir: &Path, config: &Path, threads: usize, run: &str) -> Result<Vec<u8>, String> {
    let out = dir.join(run);
    let st = Command::new(env!("CARGO_BIN_EXE_conekit"))
        .args(["--threads", &threads.to_string(), "verify", "--seed", "12", "--config"])
        .arg(config)
        .arg("--out")
        .arg(&out)
        .output()
        .map_err(e2s)?;
    ensure(st.status.code() == Some(0), || {
        format!("{run}: exit {:?}: {}", st.status.code(), String::from_utf8_lossy(&st.stderr))
    })?;
    std::fs::read(out.join("verify.csv")).map_err(e2s)
}

fn determinism() -> Res {
    let dir = tempfile::tempdir().map_err(e2s)?;
    let config = dir.path().join("config.json");
    std::fs::write(&config, DETERMINISM_CONFIG).map_err(e2s)?;
    let a = verify_csv(dir.path(), &config, 1, "a")?;
    let b = verify_csv(dir.path(), &config, 1, "b")?;
    let c = verify_csv(dir.path(), &config, 8, "c")?;
    ensure(a == b, || "two runs differ".into())?;
    ensure(a == c, || "1 vs 8 threads differ".into())?;
    Ok(format!("{} bytes identical", a.len()))
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("duality involution", involution),
        ("euler identity", euler),
        ("constant laws", constant_laws),
        ("phi cross-validation", phi_cross_validation),
        ("sigma brackets", sigma_brackets),
        ("fixed points", fixed_points),
        ("operator oracles", operator_oracles),
        ("fubini duality", fubini),
        ("classical hardy", classical_hardy),
        ("condition consistency", condition_consistency),
        ("end-to-end theorem checks", end_to_end),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let r = f();
        let secs = t.elapsed().as_secs_f64();
        match r {
            Ok(d) => println!("PASS {:>2} {name} ({secs:.1}s) {d}", i + 1),
            Err(e) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({secs:.1}s) {e}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
