//! Weighted norm inequalities: exponent conditions, weighted norms, and
//! the N→4N verification protocol.
//!
//! Conventions: 1/p′ = 1 − 1/p (so 1/p′ = 0 at p = 1), σ = σ(V) and
//! σ* = σ(V*). "Verified" means finite ratios that are stable between
//! N and 4N samples over the function family; no constant is claimed.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::charfn;
use crate::cone::{ConeKind, ConeModel};
use crate::error::{ConeError, Result};
use crate::kernel::{KernelKind, KernelSpec, Side};
use crate::linalg::Point;
use crate::mc::{self, McConfig, McEstimate, McRng};
use crate::operators::{outer_proposal, KernelSampler, INNER_SAMPLES};
use crate::sampling::{self, Proposal};
use crate::star;
use crate::testfn::{self, TestFunction};
use crate::util::{fmt_f64, mul_exp};

/// Points in the sampled ess-sup of a function with known values.
pub const SUP_POINTS: u64 = 100_000;
/// Candidates refined after the scan stage of a sup-norm of Kf.
pub const SUP_CANDIDATES: usize = 8;
/// |r(4N)/r(N) − 1| below this counts as stable.
pub const STABLE_TOLERANCE: f64 = 0.10;
/// Truncation ladder b_k = 10^k, k = 1..PROBE_DECADES.
pub const PROBE_DECADES: u32 = 4;
/// Per-decade growth of the probe's shell increments that counts as
/// "not decaying": 1 for logarithmic divergence, 10^{−m} for margin m.
pub const PROBE_PERSISTENCE: f64 = 0.8;
/// Per-decade growth of a sampled sup that counts as unbounded.
pub const PROBE_SUP_GROWTH: f64 = 1.2;
/// Budget of the numerical finiteness check at the witness δ.
pub const WITNESS_SAMPLES: u64 = 20_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Theorem {
    #[serde(rename = "T3.3")]
    T3_3,
    #[serde(rename = "T3.4")]
    T3_4,
    #[serde(rename = "T3.5")]
    T3_5,
    #[serde(rename = "T3.6")]
    T3_6,
    #[serde(rename = "T3.9")]
    T3_9,
    #[serde(rename = "T3.10")]
    T3_10,
    #[serde(rename = "T3.11")]
    T3_11,
    #[serde(rename = "T3.12")]
    T3_12,
    #[serde(rename = "T3.13a")]
    T3_13a,
    #[serde(rename = "T3.13b")]
    T3_13b,
    #[serde(rename = "T3.13c")]
    T3_13c,
    #[serde(rename = "T3.14a")]
    T3_14a,
    #[serde(rename = "T3.14b")]
    T3_14b,
    #[serde(rename = "T3.14c")]
    T3_14c,
    #[serde(rename = "T3.15a")]
    T3_15a,
    #[serde(rename = "T3.15b")]
    T3_15b,
    #[serde(rename = "T3.15c")]
    T3_15c,
    Hardy1D,
    Bradley1D,
}

use Theorem::*;

impl Theorem {
    pub const ALL: [Theorem; 19] = [
        T3_3, T3_4, T3_5, T3_6, T3_9, T3_10, T3_11, T3_12, T3_13a, T3_13b, T3_13c, T3_14a, T3_14b, T3_14c, T3_15a,
        T3_15b, T3_15c, Hardy1D, Bradley1D,
    ];

    pub fn name(self) -> &'static str {
        match self {
            T3_3 => "T3.3",
            T3_4 => "T3.4",
            T3_5 => "T3.5",
            T3_6 => "T3.6",
            T3_9 => "T3.9",
            T3_10 => "T3.10",
            T3_11 => "T3.11",
            T3_12 => "T3.12",
            T3_13a => "T3.13a",
            T3_13b => "T3.13b",
            T3_13c => "T3.13c",
            T3_14a => "T3.14a",
            T3_14b => "T3.14b",
            T3_14c => "T3.14c",
            T3_15a => "T3.15a",
            T3_15b => "T3.15b",
            T3_15c => "T3.15c",
            Hardy1D => "Hardy1D",
            Bradley1D => "Bradley1D",
        }
    }

    /// Which exponent a sweep moves: α for the sup-norm variants of the
    /// fractional and Laplace inequalities, γ otherwise.
    pub fn uses_alpha(self) -> bool {
        matches!(self, T3_13b | T3_13c | T3_14b | T3_14c | T3_15b | T3_15c)
    }

    fn norms(self) -> Norms {
        match self {
            T3_3 | T3_9 | T3_13a | T3_14a | T3_15a | Hardy1D | Bradley1D => Norms::IntInt,
            T3_4 | T3_5 | T3_10 | T3_11 | T3_13b | T3_14b | T3_15b => Norms::SupInt,
            T3_6 | T3_12 | T3_13c | T3_14c | T3_15c => Norms::SupSup,
        }
    }

    fn dual_side(self) -> bool {
        matches!(self, T3_9 | T3_10 | T3_11 | T3_12)
    }

    /// Kernel fixed by the theorem, if any.
    fn fixed_kernel(self, r: f64) -> Result<Option<KernelSpec>> {
        Ok(match self {
            T3_13a | T3_13b | T3_13c => Some(KernelSpec::riemann_liouville(r)?),
            T3_14a | T3_14b | T3_14c => Some(KernelSpec::weyl(r)?),
            T3_15a | T3_15b | T3_15c => Some(KernelSpec::laplace()),
            Hardy1D | Bradley1D => Some(KernelSpec::hardy()),
            _ => None,
        })
    }
}

impl fmt::Display for Theorem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Theorem {
    type Err = ConeError;

    fn from_str(s: &str) -> Result<Self> {
        Theorem::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| ConeError::InvalidArgument(format!("unknown theorem '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Norms {
    IntInt,
    SupInt,
    SupSup,
}

/// Built-in kernels by name, for configs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelName {
    Hardy,
    Laplace,
    RiemannLiouville,
    Weyl,
    LaplaceTransform,
}

impl KernelName {
    pub fn spec(self, r: f64) -> Result<KernelSpec> {
        Ok(match self {
            KernelName::Hardy => KernelSpec::hardy(),
            KernelName::Laplace => KernelSpec::laplace(),
            KernelName::RiemannLiouville => KernelSpec::riemann_liouville(r)?,
            KernelName::Weyl => KernelSpec::weyl(r)?,
            KernelName::LaplaceTransform => KernelSpec::laplace_transform(),
        })
    }
}

#[derive(Clone, Debug)]
pub struct InequalityCase {
    pub theorem: Theorem,
    pub cone: ConeModel,
    pub p: f64,
    pub q: f64,
    pub gamma: f64,
    /// δ for T3.6/T3.12 (defaults to a witness)
    pub delta: Option<f64>,
    pub alpha: Option<f64>,
    pub r: f64,
    /// Kernel for T3.3–T3.12; defaults to Hardy (V×V) or the Laplace
    /// transform (V*×V). The other theorems fix their kernel.
    pub kernel: Option<KernelSpec>,
    /// Run verify even when the conditions fail (counterexample probing).
    pub override_conditions: bool,
}

impl InequalityCase {
    pub fn new(theorem: Theorem, cone: ConeModel, p: f64, q: f64, gamma: f64) -> Self {
        InequalityCase {
            theorem,
            cone,
            p,
            q,
            gamma,
            delta: None,
            alpha: None,
            r: 1.0,
            kernel: None,
            override_conditions: false,
        }
    }

    pub fn with_r(mut self, r: f64) -> Self {
        self.r = r;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = Some(delta);
        self
    }

    pub fn with_kernel(mut self, k: KernelSpec) -> Self {
        self.kernel = Some(k);
        self
    }

    pub fn overridden(mut self, yes: bool) -> Self {
        self.override_conditions = yes;
        self
    }

    /// The swept exponent (α or γ).
    pub fn exponent(&self) -> f64 {
        if self.theorem.uses_alpha() {
            self.alpha.unwrap_or(f64::NAN)
        } else {
            self.gamma
        }
    }

    pub fn with_exponent(mut self, v: f64) -> Self {
        if self.theorem.uses_alpha() {
            self.alpha = Some(v);
        } else {
            self.gamma = v;
        }
        self
    }

    pub fn kernel_spec(&self) -> Result<KernelSpec> {
        if let Some(k) = self.theorem.fixed_kernel(self.r)? {
            if let Some(user) = &self.kernel {
                if user.name != k.name {
                    return Err(ConeError::InvalidArgument(format!(
                        "{} fixes the kernel to {}, got {}",
                        self.theorem, k.name, user.name
                    )));
                }
            }
            return Ok(k);
        }
        let k = match &self.kernel {
            Some(k) => k.clone(),
            None if self.theorem.dual_side() => KernelSpec::laplace_transform(),
            None => KernelSpec::hardy(),
        };
        let want = if self.theorem.dual_side() { Side::VstarxV } else { Side::VxV };
        if k.side != want {
            return Err(ConeError::InvalidArgument(format!(
                "{} needs a {:?} kernel, {} is {:?}",
                self.theorem, want, k.name, k.side
            )));
        }
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ConeError::InvalidArgument(m));
        let t = self.theorem;
        if !(self.r >= 1.0 && self.r.is_finite()) {
            return bad(format!("r must be >= 1, got {}", self.r));
        }
        if !(self.p >= 1.0 && self.q >= 1.0) {
            return bad(format!("p and q must be >= 1, got p={} q={}", self.p, self.q));
        }
        if !self.gamma.is_finite() {
            return bad("gamma must be finite".into());
        }
        match t.norms() {
            Norms::IntInt => {
                if !(self.p <= self.q && self.q.is_finite()) {
                    return bad(format!("{t} needs 1 <= p <= q < inf, got p={} q={}", self.p, self.q));
                }
            }
            Norms::SupInt => {
                if !(self.p.is_finite() && self.q == f64::INFINITY) {
                    return bad(format!("{t} needs 1 <= p < inf and q = inf, got p={} q={}", self.p, self.q));
                }
            }
            Norms::SupSup => {
                if !(self.p == f64::INFINITY && self.q == f64::INFINITY) {
                    return bad(format!("{t} needs p = q = inf, got p={} q={}", self.p, self.q));
                }
            }
        }
        if t.uses_alpha() && !self.alpha.is_some_and(f64::is_finite) {
            return bad(format!("{t} needs a finite alpha"));
        }
        if matches!(t, Hardy1D | Bradley1D) && !(matches!(self.cone.kind(), ConeKind::Orthant) && self.cone.dim() == 1) {
            return bad(format!("{t} lives on orthant(1), got {}", self.cone.label()));
        }
        self.kernel_spec()?;
        Ok(())
    }
}

impl fmt::Display for InequalityCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} on {} (p={}, q={}, gamma={}",
            self.theorem,
            self.cone.label(),
            crate::util::fmt_f64(self.p),
            crate::util::fmt_f64(self.q),
            self.gamma
        )?;
        if let Some(a) = self.alpha {
            write!(f, ", alpha={a}")?;
        }
        if self.r != 1.0 {
            write!(f, ", r={}", self.r)?;
        }
        f.write_str(")")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub satisfied: bool,
    /// Signed distance to the boundary of the condition region, in units
    /// of the governing exponent (γ, α or δ); positive inside.
    #[serde(with = "crate::util::ext_f64")]
    pub margin: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness_delta: Option<f64>,
    /// The condition as evaluated.
    pub statement: String,
    pub sigma: f64,
    pub sigma_dual: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// 1/p′ with 1/p′ = 0 at p = 1.
pub fn inv_conjugate(p: f64) -> f64 {
    if p == f64::INFINITY {
        1.0
    } else {
        1.0 - 1.0 / p
    }
}

#[derive(Clone, Copy, Debug)]
enum KClass {
    /// Hardy, Laplace, Laplace transform: order 0, K Δ^δ finite for δ > σ.
    Plain,
    Rl(f64),
    Weyl(f64),
}

fn kclass(k: &KernelSpec, t: Theorem) -> Result<KClass> {
    match k.kind {
        KernelKind::Hardy | KernelKind::Laplace | KernelKind::LaplaceTransform => Ok(KClass::Plain),
        KernelKind::RiemannLiouville { r, .. } => Ok(KClass::Rl(r)),
        KernelKind::Weyl { r, .. } => Ok(KClass::Weyl(r)),
        KernelKind::Custom(_) => Err(ConeError::OutOfScope(format!(
            "{t}: the finiteness conditions for custom kernel {} have no closed form",
            k.name
        ))),
    }
}

/// Margin of K Δ^δ < ∞ for a given δ.
fn finite_k_delta(kc: KClass, delta: f64, s: f64, ss: f64) -> f64 {
    match kc {
        KClass::Plain | KClass::Rl(_) => delta - s,
        KClass::Weyl(r) => -r - 1.0 - ss - delta,
    }
}

fn default_delta(kc: KClass, s: f64, ss: f64) -> f64 {
    match kc {
        KClass::Plain | KClass::Rl(_) => s + 0.5,
        KClass::Weyl(r) => -r - 1.0 - ss - 0.5,
    }
}

struct Cond {
    satisfied: bool,
    margin: f64,
    witness: Option<f64>,
    statement: String,
    notes: Vec<String>,
}

fn strict(margin: f64, statement: String) -> Cond {
    Cond {
        satisfied: margin > 0.0,
        margin,
        witness: None,
        statement,
        notes: Vec::new(),
    }
}

/// δ-interval for T3.3/T3.9: K Δ^δ finite and the weighted integral
/// condition on the other side, together.
fn delta_interval(kc: KClass, case: &InequalityCase, s: f64, ss: f64) -> Cond {
    let (p, q, g) = (case.p, case.q, case.gamma);
    let a = inv_conjugate(p);
    if a == 0.0 {
        // p = 1: the second condition no longer involves δ
        let slack = match kc {
            KClass::Plain => -2.0 - ss - (g - q),
            KClass::Rl(r) => -2.0 - ss - (g - q + (r - 1.0) * q),
            KClass::Weyl(_) => g - q - s,
        };
        let mut c = strict(slack, format!("p = 1: delta-free condition slack {slack:.6} > 0"));
        c.witness = c.satisfied.then(|| default_delta(kc, s, ss));
        return c;
    }
    let (lo, hi) = match kc {
        KClass::Plain => (s, (q - g - 2.0 - ss) / (q * a) - 1.0),
        KClass::Rl(r) => (s, (q - g - 2.0 - ss - (r - 1.0) * q / p) / (q * a) - r),
        KClass::Weyl(r) => ((s - g + q) / (q * a) - r, -r - 1.0 - ss),
    };
    let margin = (hi - lo) * q * a;
    let mut c = strict(margin, format!("exists delta in ({lo:.6}, {hi:.6})"));
    c.witness = c.satisfied.then_some(0.5 * (lo + hi));
    c
}

fn sup_int_conditions(kc: KClass, case: &InequalityCase, s: f64, t: Theorem) -> Cond {
    let p = case.p;
    let pp = 1.0 / inv_conjugate(p);
    let never = |why: &str| Cond {
        satisfied: false,
        margin: f64::NEG_INFINITY,
        witness: None,
        statement: why.to_string(),
        notes: Vec::new(),
    };
    if matches!(t, T3_4 | T3_10) {
        // δ > σ and ess sup_x k(x,y) Δ^{(δ+β)(p−1)−1}(x) < ∞
        let upper = match kc {
            KClass::Plain if p == 1.0 => f64::INFINITY,
            KClass::Plain => 1.0 / (p - 1.0),
            KClass::Rl(r) if p == 1.0 => {
                let mut c = strict(2.0 - r, format!("p = 1: r <= 2 (r = {r})"));
                c.satisfied = r <= 2.0;
                c.witness = c.satisfied.then_some(s + 0.5);
                return c;
            }
            KClass::Rl(r) => (2.0 - r) / (p - 1.0) - r + 1.0,
            KClass::Weyl(_) => return never("no delta: the sup condition needs (delta+r-1)(p-1) >= 1, finiteness needs delta < -r-1-sigma*"),
        };
        let mut c = strict(upper - s, format!("exists delta in ({s:.6}, {upper:.6}]"));
        c.witness = c.satisfied.then(|| if upper.is_finite() { 0.5 * (s + upper) } else { s + 0.5 });
        c
    } else {
        // ∫ k^{p′}(x,y) Δ^{(1−β)p′−1}(y) dy < ∞
        match kc {
            KClass::Plain if p == 1.0 => strict(f64::INFINITY, "p = 1: bounded kernel".into()),
            KClass::Plain => strict(pp - 1.0 - s, format!("p' - 1 = {:.6} > sigma = {s:.6}", pp - 1.0)),
            KClass::Rl(r) if p == 1.0 => {
                let mut c = strict(2.0 - r, format!("p = 1: r <= 2 (r = {r})"));
                c.satisfied = r <= 2.0;
                c
            }
            KClass::Rl(r) => strict(
                (2.0 - r) * pp - 1.0 - s,
                format!("(2-r)p' - 1 = {:.6} > sigma = {s:.6}", (2.0 - r) * pp - 1.0),
            ),
            KClass::Weyl(_) => never("the Weyl kernel's p'-integral diverges at infinity"),
        }
    }
}

/// Evaluate the exponent conditions of `case` with σ(V), σ(V*) in closed form.
pub fn check_conditions(case: &InequalityCase) -> Result<ConditionReport> {
    case.validate()?;
    let t = case.theorem;
    let s = charfn::sigma(&case.cone);
    let ss = charfn::sigma(&case.cone.dual());
    let (p, q, g, r) = (case.p, case.q, case.gamma, case.r);
    let a = inv_conjugate(p);
    let alpha = case.alpha.unwrap_or(f64::NAN);
    let below = |bound: f64, name: &str, v: f64| strict(bound - v, format!("{name} = {v} < {bound:.6}"));
    let above = |bound: f64, name: &str, v: f64| strict(v - bound, format!("{name} = {v} > {bound:.6}"));
    let k = case.kernel_spec()?;
    let mut c = match t {
        T3_3 | T3_9 => delta_interval(kclass(&k, t)?, case, s, ss),
        T3_4 | T3_5 | T3_10 | T3_11 => sup_int_conditions(kclass(&k, t)?, case, s, t),
        T3_6 | T3_12 => {
            let kc = kclass(&k, t)?;
            let d = case.delta.unwrap_or_else(|| default_delta(kc, s, ss));
            let mut c = strict(finite_k_delta(kc, d, s, ss), format!("K delta^{d} finite"));
            c.witness = Some(d);
            c
        }
        T3_13a => below(-s * q * a - ss + q * (1.0 / p - r + 1.0) - 2.0, "gamma", g),
        T3_13b => below(2.0 - (1.0 + s) * a - r, "alpha", alpha),
        T3_13c => below(1.0 - r - s, "alpha", alpha),
        T3_14a => {
            let mut c = above(s + ss * q * a + 2.0 * q - q / p, "gamma", g);
            c.notes.push(
                "open question: this condition does not involve r, unlike the Riemann-Liouville one; implemented as printed"
                    .into(),
            );
            c
        }
        T3_14b => above(ss * a + 2.0 - 1.0 / p, "alpha", alpha),
        T3_14c => above(2.0 + ss, "alpha", alpha),
        T3_15a => below(-s * q * a - ss + q / p - 2.0, "gamma", g),
        T3_15b => below(1.0 / p - s * a, "alpha", alpha),
        T3_15c => below(-s, "alpha", alpha),
        Hardy1D => below(q - 1.0, "gamma", g),
        Bradley1D => {
            let (u, v) = hardy_weights(p, q, g);
            let big_a = bradley_constant(u, v, p, q)?;
            let mut c = strict(q - 1.0 - g, format!("A(u={u:.6}, v={v:.6}) = {}", crate::util::fmt_f64(big_a)));
            c.satisfied = big_a.is_finite();
            c
        }
    };
    if t == T3_9 {
        c.notes.push("same delta interval as T3.3 with sigma and sigma* from the V*xV transfer".into());
    }
    Ok(ConditionReport {
        satisfied: c.satisfied,
        margin: c.margin,
        witness_delta: c.witness,
        statement: c.statement,
        sigma: s,
        sigma_dual: ss,
        notes: c.notes,
    })
}

/// Power weights (u, v) with (∫(u·Hf)^q)^{1/q} ≤ A(∫(v·f)^p)^{1/p} equal
/// to the 1-D Hardy inequality with exponent γ.
pub fn hardy_weights(p: f64, q: f64, gamma: f64) -> (f64, f64) {
    ((gamma - q) / q, ((gamma + 1.0) * p / q - 1.0) / p)
}

/// A = sup_r (∫_r^∞ x^{qu})^{1/q} (∫_0^r x^{−p′v})^{1/p′} for power weights;
/// +∞ when either integral diverges or the sup depends on r.
pub fn bradley_constant(u: f64, v: f64, p: f64, q: f64) -> Result<f64> {
    if !(u.is_finite() && v.is_finite()) {
        return Err(ConeError::OutOfScope("bradley_constant handles finite power exponents only".into()));
    }
    if !(1.0 <= p && p <= q) {
        return Err(ConeError::InvalidArgument(format!("need 1 <= p <= q, got p={p} q={q}")));
    }
    let a = inv_conjugate(p);
    // each factor as c·r^e, or None if infinite
    let tail = if q == f64::INFINITY {
        // sup_{x>r} x^u
        (u <= 0.0).then_some((1.0, u))
    } else {
        (q * u < -1.0).then(|| ((-1.0 / (q * u + 1.0)).powf(1.0 / q), (q * u + 1.0) / q))
    };
    let head = if a == 0.0 {
        // ess sup_{x<r} x^{−v}
        (v <= 0.0).then_some((1.0, -v))
    } else {
        let pp = 1.0 / a;
        (-pp * v > -1.0).then(|| ((1.0 / (1.0 - pp * v)).powf(a), (1.0 - pp * v) * a))
    };
    Ok(match (tail, head) {
        (Some((ct, et)), Some((ch, eh))) if (et + eh).abs() < 1e-12 => ct * ch,
        _ => f64::INFINITY,
    })
}

// --- norms -------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq)]
enum Lhs {
    /// (∫_W Δ_W^weight (Kf)^q)^{1/q}
    Integral { dual: bool, weight: f64, q: f64 },
    /// ess sup_W Δ_W^weight Kf
    Sup { dual: bool, weight: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Rhs {
    Integral { weight: f64, p: f64 },
    Sup { weight: f64 },
}

#[derive(Clone, Copy, Debug)]
struct Shape {
    lhs: Lhs,
    rhs: Rhs,
    /// K acts on f·Δ^{−pre_alpha}
    pre_alpha: f64,
}

fn shape(case: &InequalityCase, k: &KernelSpec, cond: &ConditionReport) -> Shape {
    let (p, q, g, r) = (case.p, case.q, case.gamma, case.r);
    let b = k.beta;
    let alpha = case.alpha.unwrap_or(0.0);
    let d = cond.witness_delta.unwrap_or(0.0);
    let int_rhs = Rhs::Integral {
        weight: b * p + (g + 1.0) * p / q - 1.0,
        p,
    };
    let sup_alpha = Lhs::Sup {
        dual: false,
        weight: -1.0 + alpha,
    };
    let (lhs, rhs, pre_alpha) = match case.theorem {
        T3_3 | T3_13a | T3_14a | T3_15a | Hardy1D | Bradley1D => (
            Lhs::Integral {
                dual: false,
                weight: g - q,
                q,
            },
            int_rhs,
            0.0,
        ),
        T3_9 => (
            Lhs::Integral {
                dual: true,
                weight: -g + q - 2.0,
                q,
            },
            int_rhs,
            0.0,
        ),
        T3_4 | T3_5 => (Lhs::Sup { dual: false, weight: -1.0 }, Rhs::Integral { weight: b * p - 1.0, p }, 0.0),
        T3_6 => (
            Lhs::Sup {
                dual: false,
                weight: -1.0 - d - b,
            },
            Rhs::Sup { weight: -d },
            0.0,
        ),
        T3_10 | T3_11 => (Lhs::Sup { dual: true, weight: 1.0 }, Rhs::Integral { weight: b * p - 1.0, p }, 0.0),
        T3_12 => (
            Lhs::Sup {
                dual: true,
                weight: 1.0 + d + b,
            },
            Rhs::Sup { weight: -d },
            0.0,
        ),
        T3_13b | T3_14b => (
            sup_alpha,
            Rhs::Integral {
                weight: (r - 1.0) * p - 1.0,
                p,
            },
            alpha,
        ),
        T3_13c | T3_14c => (sup_alpha, Rhs::Sup { weight: r - 1.0 }, alpha),
        T3_15b => (sup_alpha, Rhs::Integral { weight: -1.0, p }, alpha),
        T3_15c => (sup_alpha, Rhs::Sup { weight: 0.0 }, alpha),
    };
    Shape { lhs, rhs, pre_alpha }
}

/// Non-finite samples mean the integral is infinite at this resolution.
fn or_diverged(r: Result<McEstimate>) -> Result<McEstimate> {
    match r {
        Err(ConeError::NonFinite) => Ok(McEstimate {
            value: f64::INFINITY,
            stderr: f64::INFINITY,
            samples_used: 0,
            diverged: true,
            warning: Some("non-finite integrand sample".into()),
        }),
        other => other,
    }
}

/// Draw y from the outer proposal of f: Some((f(y), ln Δ(y), ln q(y))).
fn draw_f(
    cone: &ConeModel,
    f: &TestFunction,
    prop: &Proposal,
    rng: &mut McRng,
    max_rejections: u64,
) -> Result<Option<(f64, f64, f64)>> {
    let mut y = vec![0.0; cone.dim()];
    let lq = prop.draw(cone, rng, max_rejections, &mut y)?;
    if lq == f64::INFINITY || !cone.contains_raw(&y) {
        return Ok(None);
    }
    let fy = f.eval(cone, &y)?;
    if fy == 0.0 {
        return Ok(None);
    }
    Ok(Some((fy, charfn::ln_delta_raw(cone, &y), lq)))
}

/// (∫_V f^p Δ^{weight_exp})^{1/p}, or for p = ∞ the max of f·Δ^{weight_exp}
/// over [`SUP_POINTS`] sampled points (a lower bound of the ess sup).
pub fn weighted_norm(cone: &ConeModel, f: &TestFunction, weight_exp: f64, p: f64, cfg: &McConfig) -> Result<McEstimate> {
    if !(p >= 1.0) {
        return Err(ConeError::InvalidArgument(format!("p must be >= 1, got {p}")));
    }
    if f.is_zero() {
        return Ok(McEstimate::exact(0.0));
    }
    let prop = outer_proposal(cone, f)?;
    let mr = cfg.max_rejections;
    let est = if p == f64::INFINITY {
        let sup = cfg.with_samples(SUP_POINTS);
        or_diverged(mc::maximum(&sup, mc::tag("weighted_norm/sup"), |rng, _| {
            Ok(draw_f(cone, f, &prop, rng, mr)?.map_or(0.0, |(fy, ld, _)| mul_exp(fy, weight_exp * ld)))
        }))?
    } else {
        or_diverged(mc::estimate(cfg, mc::tag("weighted_norm"), |rng, _| {
            Ok(draw_f(cone, f, &prop, rng, mr)?.map_or(0.0, |(fy, ld, lq)| mul_exp(fy.powf(p), weight_exp * ld - lq)))
        }))?
        .powf(1.0 / p)
    };
    Ok(flag(match declared_divergence(cone, f, weight_exp, p) {
        Some(msg) => {
            let mut e = est;
            e.diverged = true;
            e.warn(msg);
            e
        }
        None => est,
    }))
}

/// Whether the declared power behaviour of f already makes the norm
/// infinite: ∫Δ^s converges near 0 iff s > σ(V) and near ∞ iff
/// s < −2−σ(V*); the sup needs s ≥ 0 resp. s ≤ 0.
fn declared_divergence(cone: &ConeModel, f: &TestFunction, w: f64, p: f64) -> Option<&'static str> {
    let (lo, hi) = if p == f64::INFINITY {
        (f.origin_exponent().map(|e| e + w < 0.0), f.decay().map(|d| d.is_finite() && d + w > 0.0))
    } else {
        let s = charfn::sigma(cone);
        let sd = charfn::sigma(&cone.dual());
        (
            f.origin_exponent().map(|e| p * e + w <= s),
            f.decay().map(|d| d.is_finite() && p * d + w >= -2.0 - sd),
        )
    };
    if lo == Some(true) {
        Some("declared exponents make the norm diverge at the origin")
    } else if hi == Some(true) {
        Some("declared decay is too slow for the norm to converge")
    } else {
        None
    }
}

fn flag(mut e: McEstimate) -> McEstimate {
    if e.diverged && e.warning.is_none() {
        e.warn("estimate grows with the sample size; the norm may be infinite");
    }
    e
}

// --- left-hand sides -----------------------------------------------------------

/// Outer sampler of the LHS norm over W (= V or V*) with Kf nested inside.
struct LhsPlan<'a> {
    cone: &'a ConeModel,
    w: ConeModel,
    centre: Vec<f64>,
    k: &'a KernelSpec,
    f: TestFunction,
    weight: f64,
}

impl<'a> LhsPlan<'a> {
    fn new(cone: &'a ConeModel, k: &'a KernelSpec, f: &TestFunction, dual: bool, weight: f64, pre_alpha: f64) -> Result<Self> {
        let f = if pre_alpha != 0.0 {
            f.clone().times_delta(-pre_alpha)
        } else {
            f.clone()
        };
        let c = f.scale_point(cone);
        let (w, centre) = if dual {
            (cone.dual(), star::star_point(cone, &c)?.0)
        } else {
            (cone.clone(), c.0)
        };
        Ok(LhsPlan {
            cone,
            w,
            centre,
            k,
            f,
            weight,
        })
    }

    /// x from the chart on W with ln q(x), or None for a zero-weight draw.
    fn point(&self, rng: &mut McRng) -> Option<(Vec<f64>, f64)> {
        let mut x = vec![0.0; self.w.dim()];
        let lq = sampling::chart_raw(&self.w, &self.centre, rng, &mut x);
        (lq != f64::INFINITY && self.w.contains_raw(&x)).then_some((x, lq))
    }

    fn sampler(&self, x: &[f64]) -> Result<KernelSampler<'_>> {
        KernelSampler::new(self.cone, self.k, &self.f, &Point(x.to_vec()))
    }

    fn ln_weight(&self, x: &[f64]) -> f64 {
        self.weight * charfn::ln_delta_raw(&self.w, x)
    }

    /// Unbiased draw of Δ_W^weight(x)(Kf(x))^q / q(x) for integer q ≤ 4
    /// (product of independent group means), plug-in otherwise.
    fn integral_draw(&self, rng: &mut McRng, mr: u64, q: f64) -> Result<f64> {
        let Some((x, lq)) = self.point(rng) else {
            return Ok(0.0);
        };
        let s = self.sampler(&x)?;
        let kq = inner_power(&s, rng, mr, q)?;
        if kq == 0.0 {
            return Ok(0.0);
        }
        Ok(mul_exp(kq, self.ln_weight(&x) - lq))
    }

    /// Scan value Δ_W^weight(x)·(mean of the inner draws) at a chart point.
    fn scan_draw(&self, rng: &mut McRng, mr: u64) -> Result<Option<(f64, Vec<f64>)>> {
        let Some((x, _)) = self.point(rng) else {
            return Ok(None);
        };
        let s = self.sampler(&x)?;
        let kf = inner_power(&s, rng, mr, 1.0)?;
        Ok(Some((mul_exp(kf, self.ln_weight(&x)), x)))
    }
}

fn inner_power(s: &KernelSampler, rng: &mut McRng, mr: u64, q: f64) -> Result<f64> {
    if s.is_zero() {
        return Ok(0.0);
    }
    let m = INNER_SAMPLES as usize;
    let mean = |n: usize, rng: &mut McRng| -> Result<f64> {
        let mut acc = 0.0;
        for _ in 0..n {
            acc += s.sample(rng, mr)?;
        }
        Ok(acc / n as f64)
    };
    if q.fract() == 0.0 && (1.0..=4.0).contains(&q) {
        let g = q as usize;
        let per = (m / g).max(1);
        let mut prod = 1.0;
        for _ in 0..g {
            prod *= mean(per, rng)?;
            if prod == 0.0 {
                break;
            }
        }
        Ok(prod)
    } else {
        Ok(mean(m, rng)?.powf(q))
    }
}

fn outer_cfg(cfg: &McConfig) -> McConfig {
    cfg.with_samples((cfg.samples / INNER_SAMPLES).max(1))
}

fn lhs_integral(plan: &LhsPlan, q: f64, cfg: &McConfig) -> Result<McEstimate> {
    let mr = cfg.max_rejections;
    let est = or_diverged(mc::estimate(&outer_cfg(cfg), mc::tag("lhs/integral"), |rng, _| {
        plan.integral_draw(rng, mr, q)
    }))?;
    Ok(flag(est.powf(1.0 / q)))
}

/// Two-stage sampled sup: scan N/10 chart points with 10 inner draws
/// each, then re-estimate the best [`SUP_CANDIDATES`] with N/8 draws.
fn lhs_sup(plan: &LhsPlan, cfg: &McConfig) -> Result<McEstimate> {
    let mr = cfg.max_rejections;
    let tag = mc::tag("lhs/sup");
    let pts = match mc::collect(&outer_cfg(cfg), tag, |rng, _| plan.scan_draw(rng, mr)) {
        Ok(p) => p,
        Err(e) => return or_diverged(Err(e)),
    };
    let vals: Vec<f64> = pts.iter().map(|p| p.as_ref().map_or(0.0, |(v, _)| *v)).collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return or_diverged(Err(ConeError::NonFinite));
    }
    let top = |s: &[f64]| s.iter().cloned().fold(0.0, f64::max);
    let diverged = vals.len() >= 4 && mc::grows(top(&vals[..vals.len() / 4]), top(&vals));
    let mut order: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > 0.0).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]).then(a.cmp(&b)));
    let refine = cfg.with_samples((cfg.samples / SUP_CANDIDATES as u64).max(1));
    let mut best = McEstimate::exact(0.0);
    for (rank, &i) in order.iter().take(SUP_CANDIDATES).enumerate() {
        let x = &pts[i].as_ref().unwrap().1;
        let s = plan.sampler(x)?;
        let e = or_diverged(mc::estimate(&refine, mc::mix(tag, rank as u64 + 1), |rng, _| s.sample(rng, mr)))?
            .scale(plan.ln_weight(x).exp());
        if e.value > best.value || rank == 0 {
            best = e;
        }
    }
    best.diverged |= diverged;
    Ok(flag(best))
}

fn lhs_norm(plan: &LhsPlan, lhs: Lhs, cfg: &McConfig) -> Result<McEstimate> {
    match lhs {
        Lhs::Integral { q, .. } => lhs_integral(plan, q, cfg),
        Lhs::Sup { .. } => lhs_sup(plan, cfg),
    }
}

fn rhs_norm(cone: &ConeModel, f: &TestFunction, rhs: Rhs, cfg: &McConfig) -> Result<McEstimate> {
    match rhs {
        Rhs::Integral { weight, p } => weighted_norm(cone, f, weight, p, cfg),
        Rhs::Sup { weight } => weighted_norm(cone, f, weight, f64::INFINITY, cfg),
    }
}

fn lhs_parts(lhs: Lhs) -> (bool, f64) {
    match lhs {
        Lhs::Integral { dual, weight, .. } | Lhs::Sup { dual, weight } => (dual, weight),
    }
}

// --- verification --------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Growing,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Consistent,
    Violated,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Consistent => "consistent",
            Verdict::Violated => "violated",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionResult {
    pub function_id: String,
    /// norms at 4N
    pub lhs: McEstimate,
    pub rhs: McEstimate,
    pub ratio: f64,
    pub ratio_stderr: f64,
    /// ratio at N
    pub ratio_n: f64,
    pub status: Stability,
}

#[derive(Clone, Debug)]
pub struct VerificationReport {
    pub case: InequalityCase,
    pub conditions: ConditionReport,
    pub per_function: Vec<FunctionResult>,
    pub max_ratio: f64,
    pub verdict: Verdict,
}

fn ratio(l: &McEstimate, r: &McEstimate) -> (f64, f64) {
    if r.value == 0.0 {
        return if l.value == 0.0 { (0.0, 0.0) } else { (f64::INFINITY, f64::INFINITY) };
    }
    let v = l.value / r.value;
    let rel = (l.relative_error().powi(2) + r.relative_error().powi(2)).sqrt();
    (v, v * rel)
}

fn stability(n: (&McEstimate, &McEstimate), n4: (&McEstimate, &McEstimate)) -> Stability {
    let ests = [n.0, n.1, n4.0, n4.1];
    if ests.iter().any(|e| e.diverged || !e.value.is_finite()) {
        return Stability::Inconclusive;
    }
    let (a, sa) = ratio(n.0, n.1);
    let (b, sb) = ratio(n4.0, n4.1);
    if !(a.is_finite() && b.is_finite()) {
        return Stability::Inconclusive;
    }
    if a == 0.0 && b == 0.0 {
        return Stability::Stable;
    }
    if a > 0.0 && b > mc::DIVERGENCE_RATIO * a && b - a > 3.0 * (sa * sa + sb * sb).sqrt() {
        return Stability::Growing;
    }
    if a > 0.0 && (b / a - 1.0).abs() <= STABLE_TOLERANCE {
        return Stability::Stable;
    }
    Stability::Inconclusive
}

fn verdict(rows: &[FunctionResult]) -> (f64, Verdict) {
    let max = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let v = if rows.iter().any(|r| r.status == Stability::Growing && r.ratio == max) {
        Verdict::Violated
    } else if rows.iter().all(|r| r.status == Stability::Stable) {
        Verdict::Consistent
    } else {
        Verdict::Inconclusive
    };
    (max, v)
}

fn setup(case: &InequalityCase) -> Result<(KernelSpec, ConditionReport, Shape)> {
    let cond = check_conditions(case)?;
    let k = case.kernel_spec()?;
    let sh = shape(case, &k, &cond);
    Ok((k, cond, sh))
}

fn norms(case: &InequalityCase, k: &KernelSpec, sh: Shape, f: &TestFunction, cfg: &McConfig) -> Result<(McEstimate, McEstimate)> {
    let (dual, weight) = lhs_parts(sh.lhs);
    let plan = LhsPlan::new(&case.cone, k, f, dual, weight, sh.pre_alpha)?;
    let lhs = if f.is_zero() {
        McEstimate::exact(0.0)
    } else {
        lhs_norm(&plan, sh.lhs, cfg)?
    };
    let rhs = rhs_norm(&case.cone, f, sh.rhs, cfg)?;
    Ok((lhs, rhs))
}

/// LHS/RHS ratios for every family member at N and 4N samples.
pub fn verify(case: &InequalityCase, family: &[TestFunction], cfg: &McConfig) -> Result<VerificationReport> {
    let (k, mut cond, sh) = setup(case)?;
    if !cond.satisfied && !case.override_conditions {
        return Err(ConeError::InvalidArgument(format!(
            "conditions of {case} fail ({}); set override_conditions to run anyway",
            cond.statement
        )));
    }
    if family.is_empty() {
        return Err(ConeError::InvalidArgument("empty function family".into()));
    }
    let cfg4 = cfg.with_samples(cfg.samples * 4);
    let rows = family
        .par_iter()
        .map(|f| {
            let (l1, r1) = norms(case, &k, sh, f, cfg)?;
            let (l4, r4) = norms(case, &k, sh, f, &cfg4)?;
            let (ratio_n, _) = ratio(&l1, &r1);
            let (ratio, ratio_stderr) = ratio(&l4, &r4);
            let status = stability((&l1, &r1), (&l4, &r4));
            Ok(FunctionResult {
                function_id: f.id().to_string(),
                lhs: l4,
                rhs: r4,
                ratio,
                ratio_stderr,
                ratio_n,
                status,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (max_ratio, mut verdict) = verdict(&rows);
    if let Some(d) = cond.witness_delta.filter(|_| cond.satisfied) {
        let (note, finite) = witness_check(case, &k, d, cfg);
        cond.notes.push(note);
        if !finite && verdict == Verdict::Consistent {
            verdict = Verdict::Inconclusive;
        }
    }
    Ok(VerificationReport {
        case: case.clone(),
        conditions: cond,
        per_function: rows,
        max_ratio,
        verdict,
    })
}

/// K Δ^δ at the axis point (or its star for V*×V kernels) by MC: the
/// finiteness the conditions promise for the witness δ.
fn witness_check(case: &InequalityCase, k: &KernelSpec, d: f64, cfg: &McConfig) -> (String, bool) {
    let cone = &case.cone;
    let x = match k.side {
        Side::VxV => Ok(cone.axis()),
        Side::VstarxV => star::star_point(cone, &cone.axis()),
    };
    let small = cfg.with_samples(cfg.samples.min(WITNESS_SAMPLES));
    let f = TestFunction::delta_power(d);
    let est = x.and_then(|x| crate::operators::apply_kernel(cone, k, &f, &x, &small));
    let d = fmt_f64(d);
    match est {
        Ok(e) if e.value.is_finite() && !e.diverged => {
            (format!("witness check: K delta^{d} at the axis = {} +- {}", fmt_f64(e.value), fmt_f64(e.stderr)), true)
        }
        Ok(e) => (format!("witness check failed: K delta^{d} at the axis diverges ({})", fmt_f64(e.value)), false),
        Err(e) => (format!("witness check failed: K delta^{d}: {e}"), false),
    }
}

/// Two family members with finite right-hand sides for `case`:
/// exponentially damped powers for Laplace-type kernels, truncated powers
/// otherwise (intervals away from 0 for the 1-D Hardy theorems).
pub fn default_family(case: &InequalityCase) -> Result<Vec<TestFunction>> {
    let (k, _, sh) = setup(case)?;
    let cone = &case.cone;
    if matches!(case.theorem, Hardy1D | Bradley1D) {
        return Ok(vec![
            TestFunction::indicator_power(Some(Point(vec![0.5])), Point(vec![1.0]), 0.0),
            TestFunction::indicator_power(Some(Point(vec![1.0])), Point(vec![3.0]), 0.0),
        ]);
    }
    let s = charfn::sigma(cone);
    let d0 = match sh.rhs {
        Rhs::Integral { weight, p } => ((s - weight) / p + 0.25).max(0.0),
        Rhs::Sup { weight } => (-weight).max(0.0),
    };
    let axis = cone.axis();
    if matches!(k.kind, KernelKind::Laplace | KernelKind::LaplaceTransform) {
        let w = star::star_point(cone, &axis)?;
        return Ok(vec![
            TestFunction::exp_damped(d0, w.clone()),
            TestFunction::exp_damped(d0 + 0.5, w.scale(2.0)),
        ]);
    }
    Ok(vec![
        TestFunction::indicator_power(None, axis.clone(), d0),
        TestFunction::indicator_power(None, axis.scale(2.0), d0 + 0.5),
    ])
}

// --- violation probes ------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub function_id: String,
    /// b_k: the LHS is restricted to ⟨c/b_k, b_k c⟩
    pub truncation: f64,
    pub lhs: McEstimate,
    pub rhs: McEstimate,
    pub ratio: f64,
}

#[derive(Clone, Debug)]
pub struct ProbeReport {
    pub case: InequalityCase,
    pub conditions: ConditionReport,
    pub rows: Vec<ProbeRow>,
    /// Largest per-decade growth of the LHS shell increments (integral
    /// norms) or of the sampled sup (sup norms) over the family.
    pub growth_per_decade: f64,
    pub unbounded: bool,
}

fn probe_family(case: &InequalityCase, sh: Shape) -> Vec<TestFunction> {
    let s = charfn::sigma(&case.cone);
    let axis = case.cone.axis();
    let g = case.gamma;
    let exps: Vec<f64> = match sh.rhs {
        Rhs::Integral { weight, p } => {
            let critical = |eps: f64| (s - weight) / p + eps;
            if matches!(case.theorem, Hardy1D | Bradley1D) {
                [0.25, 0.1]
                    .iter()
                    .map(|eps| {
                        let e = (g + 1.0 - p) / p - eps;
                        if p * e + weight > s + 0.05 {
                            e
                        } else {
                            critical(*eps)
                        }
                    })
                    .collect()
            } else {
                vec![critical(0.5), critical(0.25)]
            }
        }
        Rhs::Sup { weight } => vec![-weight + 0.5, -weight + 0.25],
    };
    exps.into_iter()
        .map(|e| TestFunction::indicator_power(None, axis.clone(), e))
        .collect()
}

fn in_truncation(w: &ConeModel, c: &[f64], b: f64, x: &[f64]) -> bool {
    let lo: Vec<f64> = x.iter().zip(c).map(|(xi, ci)| xi - ci / b).collect();
    let hi: Vec<f64> = x.iter().zip(c).map(|(xi, ci)| b * ci - xi).collect();
    w.contains_raw(&lo) && w.contains_raw(&hi)
}

fn shell(plan: &LhsPlan, x: &[f64]) -> Option<usize> {
    (1..=PROBE_DECADES).position(|k| in_truncation(&plan.w, &plan.centre, 10f64.powi(k as i32), x))
}

/// Evidence (not proof) that the inequality fails: truncated LHS norms of
/// near-extremal functions at b = 10, 100, …; flags growth that does not
/// decay from decade to decade.
pub fn probe_violation(case: &InequalityCase, cfg: &McConfig) -> Result<ProbeReport> {
    let (k, cond, sh) = setup(case)?;
    if cond.satisfied && !case.override_conditions {
        return Err(ConeError::ProbeRefused(case.to_string()));
    }
    let (dual, weight) = lhs_parts(sh.lhs);
    let nk = PROBE_DECADES as usize;
    let mr = cfg.max_rejections;
    let mut rows = Vec::new();
    let mut growth = 0.0f64;
    let mut unbounded = false;
    for f in probe_family(case, sh) {
        let plan = LhsPlan::new(&case.cone, &k, &f, dual, weight, sh.pre_alpha)?;
        let rhs = rhs_norm(&case.cone, &f, sh.rhs, cfg)?;
        let trunc = |j: usize| 10f64.powi(j as i32 + 1);
        match sh.lhs {
            Lhs::Integral { q, .. } => {
                let d = mc::estimate_k(&outer_cfg(cfg), mc::tag("probe/shells"), nk, |rng, _, out| {
                    let Some((x, lq)) = plan.point(rng) else {
                        return Ok(());
                    };
                    let Some(j) = shell(&plan, &x) else {
                        return Ok(());
                    };
                    let s = plan.sampler(&x)?;
                    out[j] = mul_exp(inner_power(&s, rng, mr, q)?, plan.ln_weight(&x) - lq);
                    Ok(())
                })?;
                let mut acc = 0.0;
                let mut var = 0.0;
                for (j, dj) in d.iter().enumerate() {
                    acc += dj.value;
                    var += dj.stderr * dj.stderr;
                    let lhs = McEstimate {
                        value: acc,
                        stderr: var.sqrt(),
                        samples_used: dj.samples_used,
                        diverged: d[..=j].iter().any(|e| e.diverged),
                        warning: None,
                    }
                    .powf(1.0 / q);
                    let (r, _) = ratio(&lhs, &rhs);
                    rows.push(ProbeRow {
                        function_id: f.id().to_string(),
                        truncation: trunc(j),
                        lhs,
                        rhs: rhs.clone(),
                        ratio: r,
                    });
                }
                let last = &d[nk - 1];
                let rho = if d[1].value > 0.0 {
                    (last.value / d[1].value).powf(1.0 / (nk as f64 - 2.0))
                } else {
                    0.0
                };
                growth = growth.max(rho);
                let positive = d.iter().all(|e| e.value > 0.0);
                unbounded |= positive && last.value > 3.0 * last.stderr && rho >= PROBE_PERSISTENCE;
            }
            Lhs::Sup { .. } => {
                let pts = mc::collect(&outer_cfg(cfg), mc::tag("probe/sup"), |rng, _| {
                    Ok(match plan.scan_draw(rng, mr)? {
                        Some((v, x)) => shell(&plan, &x).map(|j| (j, v)),
                        None => None,
                    })
                })?;
                let mut sup = vec![0.0f64; nk];
                for (j, v) in pts.into_iter().flatten() {
                    for s in sup.iter_mut().skip(j) {
                        *s = s.max(v);
                    }
                }
                for (j, s) in sup.iter().enumerate() {
                    let lhs = McEstimate::exact(*s);
                    let (r, _) = ratio(&lhs, &rhs);
                    rows.push(ProbeRow {
                        function_id: f.id().to_string(),
                        truncation: trunc(j),
                        lhs,
                        rhs: rhs.clone(),
                        ratio: r,
                    });
                }
                let g = if sup[nk - 2] > 0.0 { sup[nk - 1] / sup[nk - 2] } else { 0.0 };
                growth = growth.max(g);
                unbounded |= sup[nk - 1] > 0.0 && g >= PROBE_SUP_GROWTH;
            }
        }
    }
    Ok(ProbeReport {
        case: case.clone(),
        conditions: cond,
        rows,
        growth_per_decade: growth,
        unbounded,
    })
}

// --- sweeps ----------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParameter {
    Gamma,
    Alpha,
}

#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub value: f64,
    pub conditions: Result<ConditionReport>,
    pub verify: Result<VerificationReport>,
    /// only outside the condition region
    pub probe: Option<Result<ProbeReport>>,
}

/// Verify `case` along a grid of γ (or α); beyond the condition boundary
/// the violation probe runs as well.
pub fn sweep(
    case: &InequalityCase,
    parameter: SweepParameter,
    values: &[f64],
    family: &[TestFunction],
    cfg: &McConfig,
) -> Result<Vec<SweepPoint>> {
    if (parameter == SweepParameter::Alpha) != case.theorem.uses_alpha() {
        return Err(ConeError::InvalidArgument(format!(
            "{} sweeps {}, not {parameter:?}",
            case.theorem,
            if case.theorem.uses_alpha() { "alpha" } else { "gamma" }
        )));
    }
    if values.is_empty() {
        return Err(ConeError::InvalidArgument("empty sweep grid".into()));
    }
    Ok(values
        .iter()
        .map(|&v| {
            let c = case.clone().with_exponent(v).overridden(true);
            let conditions = check_conditions(&c);
            let verify = verify(&c, family, cfg);
            let probe = match &conditions {
                Ok(cr) if !cr.satisfied => Some(probe_violation(&c.clone().overridden(false), cfg)),
                _ => None,
            };
            SweepPoint {
                value: v,
                conditions,
                verify,
                probe,
            }
        })
        .collect())
}

// --- dual transfer -----------------------------------------------------------------

/// Both sides of ∫_{V*} (Sf)^q Δ_{V*}^δ = c ∫_V f^q Δ_V^{−δ−2}, each by the
/// chart sampler on its own cone. Their ratio is the transfer constant c.
pub fn dual_transfer(cone: &ConeModel, f: &TestFunction, q: f64, delta: f64, cfg: &McConfig) -> Result<(McEstimate, McEstimate)> {
    let dual = cone.dual();
    let sf = testfn::s_transform(cone, f);
    let c = f.scale_point(cone);
    let cs = star::star_point(cone, &c)?;
    let side = |w: &ConeModel, g: &TestFunction, centre: &[f64], e: f64, name: &str| {
        mc::estimate(cfg, mc::tag(name), |rng, _| {
            let mut x = vec![0.0; w.dim()];
            let lq = sampling::chart_raw(w, centre, rng, &mut x);
            if lq == f64::INFINITY || !w.contains_raw(&x) {
                return Ok(0.0);
            }
            let gx = g.eval(w, &x)?;
            if gx == 0.0 {
                return Ok(0.0);
            }
            Ok(mul_exp(gx.powf(q), e * charfn::ln_delta_raw(w, &x) - lq))
        })
    };
    let lhs = side(&dual, &sf, &cs.0, delta, "dual_transfer/dual")?;
    let rhs = side(cone, f, &c.0, -delta - 2.0, "dual_transfer/primal")?;
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn o(n: usize) -> ConeModel {
        ConeModel::orthant(n).unwrap()
    }

    #[test]
    fn hardy_condition_in_one_dimension() {
        for p in [1.0, 1.5, 2.0, 3.0] {
            let c = InequalityCase::new(T3_13a, o(1), p, p, 0.0);
            let r = check_conditions(&c).unwrap();
            assert!((r.margin - (p - 1.0)).abs() < 1e-12, "p={p}: {r:?}");
        }
    }

    #[test]
    fn condition_examples() {
        let c = check_conditions(&InequalityCase::new(T3_3, o(2), 2.0, 2.0, 0.0)).unwrap();
        assert!(c.satisfied && (c.margin - 1.0).abs() < 1e-12);
        let l3 = ConeModel::lorentz(3).unwrap();
        let c = check_conditions(&InequalityCase::new(T3_15a, l3.clone(), 2.0, 2.0, 0.0)).unwrap();
        assert!(c.satisfied && (c.margin - 1.0 / 3.0).abs() < 1e-12);
        let c = check_conditions(&InequalityCase::new(T3_3, l3, 2.0, 2.0, 0.0)).unwrap();
        assert!((c.margin - 1.0 / 3.0).abs() < 1e-12);
        let c = check_conditions(&InequalityCase::new(T3_14a, o(2), 2.0, 2.0, 1.5)).unwrap();
        assert!(c.satisfied && (c.margin - 0.5).abs() < 1e-12 && !c.notes.is_empty());
        assert!(check_conditions(&InequalityCase::new(T3_13b, o(2), 2.0, 2.0, 0.0).with_alpha(0.0)).is_err());
        let k = KernelSpec::custom("c", 0.0, Side::VxV, std::sync::Arc::new(|_: &[f64], _: &[f64]| 1.0));
        let e = check_conditions(&InequalityCase::new(T3_3, o(2), 2.0, 2.0, 0.0).with_kernel(k));
        assert!(matches!(e, Err(ConeError::OutOfScope(_))));
    }

    #[test]
    fn bradley_examples() {
        assert!((bradley_constant(-1.0, 0.0, 2.0, 2.0).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(bradley_constant(-0.5, 0.0, 2.0, 2.0).unwrap(), f64::INFINITY);
        for i in 0..20 {
            let g = -1.5 + 0.15 * i as f64;
            let (u, v) = hardy_weights(2.0, 2.0, g);
            let finite = bradley_constant(u, v, 2.0, 2.0).unwrap().is_finite();
            let c = check_conditions(&InequalityCase::new(Hardy1D, o(1), 2.0, 2.0, g)).unwrap();
            assert_eq!(finite, c.satisfied, "gamma={g}");
        }
    }

    #[test]
    fn weighted_norm_examples() {
        let cfg = McConfig::new(100_000, 3);
        let f = TestFunction::indicator(Point(vec![1.0]));
        let n = weighted_norm(&o(1), &f, 0.0, 2.0, &cfg).unwrap();
        assert!((n.value - 1.0).abs() < 1e-12);
        let g = TestFunction::indicator_power(None, Point(vec![1.0, 1.0]), -1.0);
        let n = weighted_norm(&o(2), &g, 0.0, 2.0, &cfg).unwrap();
        assert!(n.diverged, "{n:?}");
        let a = weighted_norm(&o(2), &TestFunction::exp_damped(0.5, Point(vec![1.0, 2.0])), 0.3, 2.0, &cfg).unwrap();
        let b = weighted_norm(&o(2), &TestFunction::exp_damped(0.5, Point(vec![1.0, 2.0])).scaled(3.0), 0.3, 2.0, &cfg).unwrap();
        assert!((b.value / a.value - 3.0).abs() < 1e-10);
    }

    #[test]
    fn classical_hardy_ratio() {
        let case = InequalityCase::new(Hardy1D, o(1), 2.0, 2.0, 0.0);
        let f = TestFunction::indicator(Point(vec![1.0]));
        let r = verify(&case, &[f], &McConfig::new(100_000, 1)).unwrap();
        let fr = &r.per_function[0];
        assert!((fr.ratio.powi(2) - 2.0).abs() < 0.06, "{fr:?}");
        assert_eq!(r.verdict, Verdict::Consistent);
    }

    #[test]
    fn witness_is_checked_numerically() {
        let case = InequalityCase::new(T3_3, o(2), 2.0, 2.0, 0.0);
        let f = TestFunction::indicator_power(None, Point(vec![1.0, 1.0]), 0.25);
        let r = verify(&case, &[f], &McConfig::new(20_000, 4)).unwrap();
        assert_eq!(r.conditions.witness_delta, Some(-0.5));
        let note = r.conditions.notes.iter().find(|n| n.starts_with("witness check:")).unwrap();
        // H Δ^{−1/2}(1,1) = (∫_0^1 t^{−1/2} dt)² = 4
        let (v, se) = note.rsplit_once("= ").unwrap().1.split_once(" +- ").unwrap();
        let (v, se): (f64, f64) = (v.parse().unwrap(), se.parse().unwrap());
        assert!((v - 4.0).abs() < 4.0 * se, "{note}");
    }

    #[test]
    fn probe_guard_and_signal() {
        let cfg = McConfig::new(100_000, 2);
        let inside = InequalityCase::new(Hardy1D, o(1), 2.0, 2.0, 0.5);
        assert!(matches!(probe_violation(&inside, &cfg), Err(ConeError::ProbeRefused(_))));
        let plateau = probe_violation(&inside.overridden(true), &cfg).unwrap();
        assert!(!plateau.unbounded, "{}", plateau.growth_per_decade);
        let edge = probe_violation(&InequalityCase::new(Hardy1D, o(1), 2.0, 2.0, 1.0), &cfg).unwrap();
        assert!(edge.unbounded, "{}", edge.growth_per_decade);
    }
}
