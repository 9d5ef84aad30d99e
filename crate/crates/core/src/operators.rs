//! Integral operators Kf(x) = ∫_V k(x,y) f(y) dy by Monte Carlo.
//!
//! Each (kernel, f, x) triple picks a sampling plan whose proposal makes
//! the importance weight well behaved: interval samplers for kernels or
//! functions supported on cone intervals, a change of variables through
//! the automorphism g_x for Laplace-type kernels, and the exponential
//! envelope or the logarithmic chart for globally supported integrands.

use crate::charfn;
use crate::cone::ConeModel;
use crate::error::{ConeError, Result};
use crate::kernel::{diff, KernelKind, KernelSpec, Side};
use crate::linalg::{Matrix, Point};
use crate::mc::{self, McConfig, McEstimate, McRng};
use crate::sampling::{self, Proposal};
use crate::star;

pub use crate::testfn::s_transform;
use crate::testfn::TestFunction;
use crate::util::mul_exp;

/// Shrink of the exponential envelope when the kernel does not carry
/// the decay itself.
const ENVELOPE_SHRINK: f64 = 0.75;

/// Inner samples per outer point in nested estimates.
pub const INNER_SAMPLES: u64 = 10;

#[derive(Clone, Debug)]
enum Plan {
    Zero,
    /// uniform on ⟨0,x⟩ ∩ ⟨0,b⟩
    Below { b: Vec<f64> },
    /// y = shift + u, u from the proposal
    Shifted { shift: Option<Vec<f64>>, prop: Proposal },
    /// y = g z with z from the exponential envelope at rate `rate`
    Transport { g: Matrix, det: f64, rate: Vec<f64> },
}

/// One-draw estimator of Kf(x).
#[derive(Clone, Debug)]
pub struct KernelSampler<'a> {
    cone: &'a ConeModel,
    k: &'a KernelSpec,
    f: &'a TestFunction,
    x: Vec<f64>,
    plan: Plan,
}

fn check_left(cone: &ConeModel, k: &KernelSpec, x: &Point) -> Result<()> {
    let left = match k.side {
        Side::VxV => cone.clone(),
        Side::VstarxV => cone.dual(),
    };
    left.check(x)?;
    // the Weyl integral is defined up to the boundary (W_r f(0) = ∫ Δ^{r−1} f)
    if matches!(k.kind, KernelKind::Weyl { .. }) {
        if left.contains_closure(x)? {
            return Ok(());
        }
        return Err(ConeError::NotInCone { cone: left.label().into() });
    }
    left.require(x)
}

fn transport(cone: &ConeModel, u: &[f64]) -> Result<Plan> {
    let g = cone.automorphism_raw(u);
    let det = g.determinant().abs();
    let mut rate = vec![0.0; u.len()];
    star::star_raw(cone, &cone.axis().0, &mut rate);
    Ok(Plan::Transport { g, det, rate })
}

/// Chart plan for a globally supported f with power decay Δ^d.
fn chart_plan(cone: &ConeModel, k: &KernelSpec, f: &TestFunction, x: &[f64]) -> Result<Plan> {
    let d = f.decay().ok_or(ConeError::MissingDecay)?;
    if let KernelKind::Weyl { r, .. } = k.kind {
        let ss = charfn::sigma(&cone.dual());
        if !(d < -r - 1.0 - ss) {
            return Err(ConeError::NotIntegrable(format!(
                "W_{r} of a function decaying like delta^{d} needs decay below {}",
                -r - 1.0 - ss
            )));
        }
        let centre = if cone.contains_raw(x) { x.to_vec() } else { cone.axis().0 };
        return Ok(Plan::Shifted {
            shift: Some(x.to_vec()),
            prop: Proposal::Chart { centre },
        });
    }
    Ok(Plan::Shifted {
        shift: None,
        prop: Proposal::Chart {
            centre: f.scale_point(cone).0,
        },
    })
}

impl<'a> KernelSampler<'a> {
    pub fn new(cone: &'a ConeModel, k: &'a KernelSpec, f: &'a TestFunction, x: &Point) -> Result<Self> {
        x.check_dim(cone.dim())?;
        check_left(cone, k, x)?;
        let xs = x.0.clone();
        let plan = if f.is_zero() {
            Plan::Zero
        } else {
            match &k.kind {
                KernelKind::Hardy | KernelKind::RiemannLiouville { .. } => Plan::Below {
                    b: f.support().map(|b| b.0).unwrap_or_else(|| xs.clone()),
                },
                KernelKind::Laplace => transport(cone, &xs)?,
                KernelKind::LaplaceTransform => {
                    let mut u = vec![0.0; xs.len()];
                    star::star_raw(&cone.dual(), &xs, &mut u);
                    transport(cone, &u)?
                }
                KernelKind::Weyl { .. } => {
                    if let Some(b) = f.support() {
                        let d = diff(&b.0, &xs);
                        if cone.contains_raw(&d) {
                            Plan::Shifted {
                                shift: Some(xs.clone()),
                                prop: Proposal::uniform(cone, &d),
                            }
                        } else {
                            // ⟨x,∞⟩ misses ⟨0,b⟩ up to a null set
                            Plan::Zero
                        }
                    } else if let Some(w) = f.exp_rate() {
                        Plan::Shifted {
                            shift: Some(xs.clone()),
                            prop: Proposal::Envelope { rate: w.0, shrink: 1.0 },
                        }
                    } else {
                        chart_plan(cone, k, f, &xs)?
                    }
                }
                KernelKind::Custom(_) => {
                    if let Some(b) = f.support() {
                        Plan::Shifted {
                            shift: None,
                            prop: Proposal::uniform(cone, &b.0),
                        }
                    } else if let Some(w) = f.exp_rate() {
                        Plan::Shifted {
                            shift: None,
                            prop: Proposal::Envelope {
                                rate: w.0,
                                shrink: ENVELOPE_SHRINK,
                            },
                        }
                    } else {
                        chart_plan(cone, k, f, &xs)?
                    }
                }
            }
        };
        Ok(KernelSampler {
            cone,
            k,
            f,
            x: xs,
            plan,
        })
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.plan, Plan::Zero)
    }

    /// k(x,y)f(y)·e^{ln_scale}
    fn weight(&self, y: &[f64], ln_scale: f64) -> Result<f64> {
        if ln_scale == f64::NEG_INFINITY || !self.cone.contains_raw(y) {
            return Ok(0.0);
        }
        let kv = self.k.eval(self.cone, &self.x, y);
        if kv == 0.0 {
            return Ok(0.0);
        }
        Ok(mul_exp(kv * self.f.eval(self.cone, y)?, ln_scale))
    }

    /// One unbiased draw of Kf(x).
    pub fn sample(&self, rng: &mut McRng, max_rejections: u64) -> Result<f64> {
        let n = self.x.len();
        let mut y = vec![0.0; n];
        match &self.plan {
            Plan::Zero => Ok(0.0),
            Plan::Below { b } => {
                let m = sampling::meet_raw(self.cone, &self.x, b, rng, max_rejections, &mut y)?;
                if !m.inside {
                    return Ok(0.0);
                }
                self.weight(&y, m.volume.ln())
            }
            Plan::Shifted { shift, prop } => {
                let lq = prop.draw(self.cone, rng, max_rejections, &mut y)?;
                if lq == f64::INFINITY {
                    return Ok(0.0);
                }
                if let Some(s) = shift {
                    y.iter_mut().zip(s).for_each(|(a, b)| *a += b);
                }
                self.weight(&y, -lq)
            }
            Plan::Transport { g, det, rate } => {
                let mut z = vec![0.0; n];
                let lq = sampling::exp_envelope_raw(self.cone, rate, 1.0, rng, &mut z);
                y.copy_from_slice(&g.mul_vec(&z));
                self.weight(&y, det.ln() - lq)
            }
        }
    }
}

/// Kf(x) = ∫_V k(x,y) f(y) dy.
pub fn apply_kernel(cone: &ConeModel, k: &KernelSpec, f: &TestFunction, x: &Point, cfg: &McConfig) -> Result<McEstimate> {
    let s = KernelSampler::new(cone, k, f, x)?;
    if s.is_zero() {
        return Ok(McEstimate::exact(0.0));
    }
    let est = mc::estimate(cfg, mc::tag("apply_kernel"), |rng, _| s.sample(rng, cfg.max_rejections))?;
    Ok(flag(est))
}

fn flag(mut est: McEstimate) -> McEstimate {
    if est.diverged {
        est.warn("estimate grows with the sample size; the integral may be infinite");
    }
    est
}

pub fn hardy(cone: &ConeModel, f: &TestFunction, x: &Point, cfg: &McConfig) -> Result<McEstimate> {
    apply_kernel(cone, &KernelSpec::hardy(), f, x, cfg)
}

pub fn laplace(cone: &ConeModel, f: &TestFunction, x: &Point, cfg: &McConfig) -> Result<McEstimate> {
    apply_kernel(cone, &KernelSpec::laplace(), f, x, cfg)
}

pub fn riemann_liouville(cone: &ConeModel, r: f64, f: &TestFunction, x: &Point, cfg: &McConfig) -> Result<McEstimate> {
    apply_kernel(cone, &KernelSpec::riemann_liouville(r)?, f, x, cfg)
}

pub fn weyl(cone: &ConeModel, r: f64, f: &TestFunction, x: &Point, cfg: &McConfig) -> Result<McEstimate> {
    apply_kernel(cone, &KernelSpec::weyl(r)?, f, x, cfg)
}

/// Outer proposal for integrating against f over V.
pub(crate) fn outer_proposal(cone: &ConeModel, f: &TestFunction) -> Result<Proposal> {
    if let Some(b) = f.support() {
        return Ok(Proposal::uniform(cone, &b.0));
    }
    if let Some(w) = f.exp_rate() {
        return Ok(Proposal::Envelope {
            rate: w.0,
            shrink: ENVELOPE_SHRINK,
        });
    }
    f.decay().ok_or(ConeError::MissingDecay)?;
    Ok(Proposal::Chart {
        centre: f.scale_point(cone).0,
    })
}

/// Both sides of ∫_V (R_r g)·f = ∫_V g·(W_r f), each as a nested estimate
/// (outer point, then [`INNER_SAMPLES`] inner draws) on one shared stream.
pub fn fubini_duality_check(
    cone: &ConeModel,
    r: f64,
    f: &TestFunction,
    g: &TestFunction,
    cfg: &McConfig,
) -> Result<(McEstimate, McEstimate)> {
    let rl = KernelSpec::riemann_liouville(r)?;
    let wl = KernelSpec::weyl(r)?;
    if f.is_zero() || g.is_zero() {
        return Ok((McEstimate::exact(0.0), McEstimate::exact(0.0)));
    }
    let gb = g.support().ok_or_else(|| {
        ConeError::InvalidArgument(format!("g = {g} must be supported on a cone interval ⟨0,b⟩"))
    })?;
    let f_prop = outer_proposal(cone, f)?;
    let g_prop = Proposal::uniform(cone, &gb.0);
    // W_r f must be integrable before we start drawing
    KernelSampler::new(cone, &wl, f, &cone.axis())?;
    let n = cone.dim();
    let outer = cfg.with_samples((cfg.samples / INNER_SAMPLES).max(1));
    let mr = cfg.max_rejections;
    let inner = |k: &KernelSpec, h: &TestFunction, p: &Point, rng: &mut McRng| -> Result<f64> {
        let s = KernelSampler::new(cone, k, h, p)?;
        let mut acc = 0.0;
        for _ in 0..INNER_SAMPLES {
            acc += s.sample(rng, mr)?;
        }
        Ok(acc / INNER_SAMPLES as f64)
    };
    let est = mc::estimate_k(&outer, mc::tag("fubini"), 2, |rng, _, out| {
        let mut x = vec![0.0; n];
        let lq = f_prop.draw(cone, rng, mr, &mut x)?;
        if lq != f64::INFINITY && cone.contains_raw(&x) {
            let fx = f.eval(cone, &x)?;
            if fx > 0.0 {
                out[0] = mul_exp(fx * inner(&rl, g, &Point(x.clone()), rng)?, -lq);
            }
        }
        let mut t = vec![0.0; n];
        let lq = g_prop.draw(cone, rng, mr, &mut t)?;
        if cone.contains_raw(&t) {
            let gt = g.eval(cone, &t)?;
            if gt > 0.0 {
                out[1] = mul_exp(gt * inner(&wl, f, &Point(t), rng)?, -lq);
            }
        }
        Ok(())
    })?;
    let mut it = est.into_iter().map(flag);
    Ok((it.next().unwrap(), it.next().unwrap()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::gamma::gamma;

    fn cfg() -> McConfig {
        McConfig::new(100_000, 11)
    }

    fn close(e: &McEstimate, want: f64) {
        assert!(
            (e.value - want).abs() <= 3.0 * e.stderr + 1e-12,
            "{} ± {} vs {want}",
            e.value,
            e.stderr
        );
    }

    fn p(v: &[f64]) -> Point {
        Point(v.to_vec())
    }

    #[test]
    fn hardy_examples() {
        let o2 = ConeModel::orthant(2).unwrap();
        let e = hardy(&o2, &TestFunction::delta_power(0.0), &p(&[2.0, 3.0]), &cfg()).unwrap();
        close(&e, 6.0);
        let e = hardy(&o2, &TestFunction::delta_power(1.0), &p(&[1.0, 1.0]), &cfg()).unwrap();
        close(&e, 0.25);
        assert_eq!(hardy(&o2, &TestFunction::zero(), &p(&[1.0, 1.0]), &cfg()).unwrap().value, 0.0);
    }

    #[test]
    fn laplace_examples() {
        let o2 = ConeModel::orthant(2).unwrap();
        let e = laplace(&o2, &TestFunction::delta_power(0.0), &p(&[1.0, 2.0]), &cfg()).unwrap();
        close(&e, 2.0);
        // ∫ e^{−y/x} y^δ dy = Γ(δ+1) x^{δ+1} per coordinate
        let d = 0.4;
        let x = [0.7, 1.9];
        let e = laplace(&o2, &TestFunction::delta_power(d), &p(&x), &cfg()).unwrap();
        close(&e, gamma(d + 1.0).powi(2) * (x[0] * x[1]).powf(d + 1.0));
    }

    #[test]
    fn fractional_examples() {
        let o1 = ConeModel::orthant(1).unwrap();
        let o2 = ConeModel::orthant(2).unwrap();
        let one = TestFunction::delta_power(0.0);
        close(&riemann_liouville(&o1, 2.0, &one, &p(&[3.0]), &cfg()).unwrap(), 4.5);
        close(&riemann_liouville(&o2, 2.0, &one, &p(&[1.0, 1.0]), &cfg()).unwrap(), 0.25);
        let f = TestFunction::exp_damped(0.0, p(&[1.0]));
        close(&weyl(&o1, 1.0, &f, &p(&[1.0]), &cfg()).unwrap(), (-1.0f64).exp());
        close(&weyl(&o1, 2.0, &f, &p(&[0.0]), &cfg()).unwrap(), 1.0);
        assert_eq!(weyl(&o1, 2.0, &TestFunction::zero(), &p(&[1.0]), &cfg()).unwrap().value, 0.0);
        assert!(riemann_liouville(&o1, 0.5, &one, &p(&[1.0]), &cfg()).is_err());
    }

    #[test]
    fn weyl_refuses_bad_decay() {
        let o1 = ConeModel::orthant(1).unwrap();
        let e = weyl(&o1, 2.0, &TestFunction::delta_power(-1.5), &p(&[1.0]), &cfg());
        assert!(matches!(e, Err(ConeError::NotIntegrable(_))));
        let f = TestFunction::expression("delta(x)", None, None, None).unwrap();
        assert_eq!(weyl(&o1, 1.0, &f, &p(&[1.0]), &cfg()), Err(ConeError::MissingDecay));
        // ∫_1^∞ t^{−3} dt = 1/2
        close(&weyl(&o1, 1.0, &TestFunction::delta_power(-3.0), &p(&[1.0]), &cfg()).unwrap(), 0.5);
    }

    #[test]
    fn fubini_example() {
        let o1 = ConeModel::orthant(1).unwrap();
        let f = TestFunction::exp_damped(0.0, p(&[1.0]));
        let g = TestFunction::indicator(p(&[1.0]));
        let (l, r) = fubini_duality_check(&o1, 1.0, &f, &g, &McConfig::new(200_000, 5)).unwrap();
        let want = 1.0 - (-1.0f64).exp();
        assert!((l.value - want).abs() < 4.0 * l.stderr, "{l:?}");
        assert!((r.value - want).abs() < 4.0 * r.stderr, "{r:?}");
        let (l, r) = fubini_duality_check(&o1, 1.0, &TestFunction::zero(), &g, &cfg()).unwrap();
        assert_eq!((l.value, r.value), (0.0, 0.0));
    }

    #[test]
    fn laplace_transform_of_one_is_phi() {
        // ∫_V e^{−w·y} dy = φ_{V*}(w)
        let l3 = ConeModel::lorentz(3).unwrap();
        let w = p(&[0.2, 0.1, 1.0]);
        let e = apply_kernel(&l3, &KernelSpec::laplace_transform(), &TestFunction::delta_power(0.0), &w, &cfg()).unwrap();
        close(&e, charfn::phi(&l3.dual(), &w).unwrap());
    }
}
