//! Test functions f ≥ 0 on a cone, as used by the operators and the
//! inequality harness.
//!
//! Every function carries what the samplers need: an optional covering
//! interval ⟨0,b⟩ of its support, a declared decay exponent d with
//! f(y) ≤ C·Δ^d(y) for large y, and an optional exponential rate w ∈ V*
//! (f ≤ C·e^{−w·y}·Δ^δ) that lets integrals over V use an exponential envelope.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::charfn;
use crate::cone::ConeModel;
use crate::error::{ConeError, Result};
use crate::linalg::{dot, Matrix, Point};
use crate::star;
use crate::util::{ext_f64, mul_exp};

/// Config form of a test function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionSpec {
    Zero,
    /// Δ^δ on all of V.
    DeltaPower { delta: f64 },
    /// Δ^δ·χ_{⟨a,b⟩} (a = 0 when omitted).
    IndicatorInterval {
        b: Point,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        a: Option<Point>,
        #[serde(default)]
        delta: f64,
    },
    /// Δ^δ·e^{−w·y}; w defaults to the dual axis point e*.
    ExpDampedPower {
        delta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rate: Option<Point>,
    },
    /// Arithmetic expression in y; see the README for the grammar.
    Expression {
        expr: String,
        /// f vanishes outside ⟨0,support⟩.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        support: Option<Point>,
        #[serde(default, with = "ext_f64::option", skip_serializing_if = "Option::is_none")]
        decay: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rate: Option<Point>,
    },
}

#[derive(Clone, Debug)]
enum Body {
    Zero,
    DeltaPower(f64),
    Indicator { a: Option<Point>, b: Point, delta: f64 },
    ExpDamped { delta: f64, rate: Point },
    Expr { ast: Arc<Expr>, support: Option<Point>, decay: Option<f64>, rate: Option<Point> },
    /// f(x*) for x in the dual of `base`.
    STransform { inner: Box<TestFunction>, base: ConeModel },
    /// f(A⁻¹y) for an automorphism A.
    Pullback { inner: Box<TestFunction>, a: Matrix, a_inv: Matrix },
}

/// A nonnegative function on a cone: c·Δ^e·body.
#[derive(Clone, Debug)]
pub struct TestFunction {
    id: String,
    body: Body,
    coef: f64,
    extra_delta: f64,
}

impl TestFunction {
    fn new(id: String, body: Body) -> Self {
        TestFunction {
            id,
            body,
            coef: 1.0,
            extra_delta: 0.0,
        }
    }

    pub fn zero() -> Self {
        Self::new("zero".into(), Body::Zero)
    }

    pub fn delta_power(delta: f64) -> Self {
        Self::new(format!("delta^{delta}"), Body::DeltaPower(delta))
    }

    pub fn indicator(b: Point) -> Self {
        Self::indicator_power(None, b, 0.0)
    }

    pub fn indicator_power(a: Option<Point>, b: Point, delta: f64) -> Self {
        let id = match &a {
            Some(a) => format!("delta^{delta}*chi<{a},{b}>"),
            None => format!("delta^{delta}*chi<0,{b}>"),
        };
        Self::new(id, Body::Indicator { a, b, delta })
    }

    pub fn exp_damped(delta: f64, rate: Point) -> Self {
        Self::new(format!("delta^{delta}*exp(-{rate}.y)"), Body::ExpDamped { delta, rate })
    }

    pub fn expression(src: &str, support: Option<Point>, decay: Option<f64>, rate: Option<Point>) -> Result<Self> {
        let ast = parse(src)?;
        Ok(Self::new(
            src.trim().to_string(),
            Body::Expr {
                ast: Arc::new(ast),
                support,
                decay,
                rate,
            },
        ))
    }

    /// Build from config; `cone` resolves defaults and checks dimensions.
    pub fn from_spec(spec: &FunctionSpec, cone: &ConeModel) -> Result<Self> {
        let n = cone.dim();
        let check = |p: &Point| -> Result<()> {
            p.check_dim(n)?;
            p.check_finite()
        };
        let f = match spec {
            FunctionSpec::Zero => Self::zero(),
            FunctionSpec::DeltaPower { delta } => Self::delta_power(*delta),
            FunctionSpec::IndicatorInterval { b, a, delta } => {
                cone.require(b)?;
                if let Some(a) = a {
                    check(a)?;
                }
                Self::indicator_power(a.clone(), b.clone(), *delta)
            }
            FunctionSpec::ExpDampedPower { delta, rate } => {
                let rate = match rate {
                    Some(r) => {
                        cone.dual().require(r)?;
                        r.clone()
                    }
                    None => star::star_point(cone, &cone.axis())?,
                };
                Self::exp_damped(*delta, rate)
            }
            FunctionSpec::Expression {
                expr,
                support,
                decay,
                rate,
            } => {
                if let Some(b) = support {
                    cone.require(b)?;
                }
                if let Some(r) = rate {
                    cone.dual().require(r)?;
                }
                let f = Self::expression(expr, support.clone(), *decay, rate.clone())?;
                f.ast_dims_fit(n)?;
                f
            }
        };
        if !f.delta_exponents_finite() {
            return Err(ConeError::InvalidArgument(format!("non-finite exponent in {}", f.id)));
        }
        Ok(f)
    }

    fn ast_dims_fit(&self, n: usize) -> Result<()> {
        if let Body::Expr { ast, .. } = &self.body {
            ast.check_dims(n)?;
        }
        Ok(())
    }

    fn delta_exponents_finite(&self) -> bool {
        let d = match &self.body {
            Body::DeltaPower(d) => *d,
            Body::Indicator { delta, .. } | Body::ExpDamped { delta, .. } => *delta,
            _ => 0.0,
        };
        d.is_finite() && self.extra_delta.is_finite() && self.coef.is_finite()
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// λ·f.
    pub fn scaled(mut self, lambda: f64) -> Self {
        self.coef *= lambda;
        self
    }

    /// f·Δ^e.
    pub fn times_delta(mut self, e: f64) -> Self {
        self.extra_delta += e;
        self
    }

    /// f∘A⁻¹ for an automorphism A of the cone.
    pub fn pullback(self, a: Matrix) -> Result<Self> {
        let a_inv = a
            .inverse()
            .ok_or_else(|| ConeError::SingularMatrix { det: a.determinant(), guard: 0.0 })?;
        Ok(Self::new(
            format!("({})o(A^-1)", self.id),
            Body::Pullback {
                inner: Box::new(self),
                a,
                a_inv,
            },
        ))
    }

    pub fn is_zero(&self) -> bool {
        self.coef == 0.0 || matches!(self.body, Body::Zero)
    }

    /// f(y) for y ∈ V (the cone f is defined on).
    pub fn eval(&self, cone: &ConeModel, y: &[f64]) -> Result<f64> {
        if self.is_zero() {
            return Ok(0.0);
        }
        let mut ld = self.extra_delta;
        let base = match &self.body {
            Body::Zero => 0.0,
            Body::DeltaPower(d) => {
                ld += d;
                1.0
            }
            Body::Indicator { a, b, delta } => {
                let below_b = cone.contains_raw(&diff(b, y));
                let above_a = match a {
                    Some(a) => cone.contains_raw(&diff(y, a)),
                    None => true,
                };
                if !(below_b && above_a) {
                    return Ok(0.0);
                }
                ld += delta;
                1.0
            }
            Body::ExpDamped { delta, rate } => {
                let l = delta + ld;
                let wy = dot(&rate.0, y);
                // the exponential wins at infinity, e.g. for y = x* of a boundary point
                if !wy.is_finite() {
                    return Ok(0.0);
                }
                let ln = -wy + if l != 0.0 { l * charfn::ln_delta_raw(cone, y) } else { 0.0 };
                // NaN: y lies numerically outside V, e.g. x* of a near-boundary x
                return Ok(if ln.is_nan() { 0.0 } else { self.coef * ln.exp() });
            }
            Body::Expr { ast, support, .. } => {
                if let Some(b) = support {
                    if !cone.contains_raw(&diff(b, y)) {
                        return Ok(0.0);
                    }
                }
                let v = ast.eval(cone, y);
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(ConeError::Expression(format!(
                        "'{}' evaluates to {v} at {}; test functions must be finite and nonnegative",
                        self.id,
                        Point(y.to_vec())
                    )));
                }
                v
            }
            Body::STransform { inner, base } => {
                let mut x = vec![0.0; y.len()];
                star::star_raw(cone, y, &mut x);
                inner.eval(base, &x)?
            }
            Body::Pullback { inner, a_inv, .. } => inner.eval(cone, &a_inv.mul_vec(y))?,
        };
        if base == 0.0 {
            return Ok(0.0);
        }
        if ld == 0.0 {
            return Ok(self.coef * base);
        }
        Ok(self.coef * mul_exp(base, ld * charfn::ln_delta_raw(cone, y)))
    }

    /// b with supp f ⊂ ⟨0,b⟩, if f is interval-supported.
    pub fn support(&self) -> Option<Point> {
        match &self.body {
            Body::Indicator { b, .. } => Some(b.clone()),
            Body::Expr { support, .. } => support.clone(),
            Body::Pullback { inner, a, .. } => inner.support().map(|b| a.apply(&b)),
            _ => None,
        }
    }

    /// Declared d with f ≤ C·Δ^d for large y; −∞ for compact support or
    /// exponential decay, None when undeclared.
    pub fn decay(&self) -> Option<f64> {
        if self.is_zero() || self.support().is_some() || self.exp_rate().is_some() {
            return Some(f64::NEG_INFINITY);
        }
        let d = match &self.body {
            Body::DeltaPower(d) => Some(*d),
            Body::Expr { decay, .. } => *decay,
            Body::Pullback { inner, .. } => inner.decay(),
            // Δ_V(x*) ∝ Δ_{V*}(x)^{−1}
            Body::STransform { inner, .. } => match inner.body {
                Body::DeltaPower(d) if inner.extra_delta == 0.0 => Some(-d),
                _ => None,
            },
            _ => None,
        };
        d.map(|d| d + self.extra_delta)
    }

    /// Declared e with f ≍ Δ^e near the origin, for the power families.
    pub fn origin_exponent(&self) -> Option<f64> {
        let e = match &self.body {
            Body::DeltaPower(d) | Body::Indicator { a: None, delta: d, .. } | Body::ExpDamped { delta: d, .. } => Some(*d),
            Body::Pullback { inner, .. } => inner.origin_exponent(),
            _ => None,
        };
        e.map(|d| d + self.extra_delta)
    }

    /// w ∈ V* with f ≤ C·Δ^δ·e^{−w·y}, if declared.
    pub fn exp_rate(&self) -> Option<Point> {
        match &self.body {
            Body::ExpDamped { rate, .. } => Some(rate.clone()),
            Body::Expr { rate, .. } => rate.clone(),
            // e^{−w·A⁻¹y} = e^{−(A⁻ᵀw)·y}
            Body::Pullback { inner, a_inv, .. } => inner.exp_rate().map(|w| a_inv.transpose().apply(&w)),
            _ => None,
        }
    }

    /// Point of V around which f has its mass: the support corner, the
    /// point whose star is the exponential rate, or the axis.
    pub fn scale_point(&self, cone: &ConeModel) -> Point {
        if let Some(b) = self.support() {
            return b;
        }
        if let Some(w) = self.exp_rate() {
            if let Ok(u) = star::star_point(&cone.dual(), &w) {
                return u;
            }
        }
        cone.axis()
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id)
    }
}

/// Sf(x) = f(x*) on V*.
pub fn s_transform(cone: &ConeModel, f: &TestFunction) -> TestFunction {
    if f.is_zero() {
        return TestFunction::zero();
    }
    TestFunction::new(
        format!("S({})", f.id),
        Body::STransform {
            inner: Box::new(f.clone()),
            base: cone.clone(),
        },
    )
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

// --- expressions -----------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
enum Expr {
    Num(f64),
    Delta,
    Dot(Vec<f64>),
    Exp(Box<Expr>),
    Neg(Box<Expr>),
    Bin(char, Box<Expr>, Box<Expr>),
}

impl Expr {
    fn eval(&self, cone: &ConeModel, y: &[f64]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Delta => charfn::ln_delta_raw(cone, y).exp(),
            Expr::Dot(a) => dot(a, y),
            Expr::Exp(e) => e.eval(cone, y).exp(),
            Expr::Neg(e) => -e.eval(cone, y),
            Expr::Bin(op, l, r) => {
                let (l, r) = (l.eval(cone, y), r.eval(cone, y));
                match op {
                    '+' => l + r,
                    '-' => l - r,
                    '*' => l * r,
                    '/' => l / r,
                    _ => l.powf(r),
                }
            }
        }
    }

    fn check_dims(&self, n: usize) -> Result<()> {
        match self {
            Expr::Dot(a) if a.len() != n => Err(ConeError::Expression(format!(
                "dot() vector has {} entries, cone dimension is {n}",
                a.len()
            ))),
            Expr::Exp(e) | Expr::Neg(e) => e.check_dims(n),
            Expr::Bin(_, l, r) => {
                l.check_dims(n)?;
                r.check_dims(n)
            }
            _ => Ok(()),
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

fn parse(src: &str) -> Result<Expr> {
    let mut p = Parser { src, pos: 0 };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != src.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(e)
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> ConeError {
        ConeError::Expression(format!("{msg} at offset {} in '{}'", self.pos, self.src))
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(|c| c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(&format!("expected '{c}'")))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut l = self.term()?;
        loop {
            let op = if self.eat('+') {
                '+'
            } else if self.eat('-') {
                '-'
            } else {
                return Ok(l);
            };
            l = Expr::Bin(op, Box::new(l), Box::new(self.term()?));
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut l = self.unary()?;
        loop {
            let op = if self.eat('*') {
                '*'
            } else if self.eat('/') {
                '/'
            } else {
                return Ok(l);
            };
            l = Expr::Bin(op, Box::new(l), Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        let base = self.atom()?;
        if self.eat('^') {
            // right associative, binds tighter than unary minus on the left
            return Ok(Expr::Bin('^', Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let mut seen_exp = false;
        while self.pos < bytes.len() {
            let c = bytes[self.pos] as char;
            let sign_after_exp =
                (c == '+' || c == '-') && self.pos > start && matches!(bytes[self.pos - 1], b'e' | b'E');
            if c.is_ascii_digit() || c == '.' || sign_after_exp || ((c == 'e' || c == 'E') && !seen_exp) {
                seen_exp |= c == 'e' || c == 'E';
                self.pos += 1;
            } else {
                break;
            }
        }
        self.src[start..self.pos].parse().map_err(|_| {
            self.pos = start;
            self.error("malformed number")
        })
    }

    fn ident(&mut self) -> String {
        self.skip_ws();
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == '_') {
            self.pos += 1;
        }
        self.src[start..self.pos].to_string()
    }

    fn atom(&mut self) -> Result<Expr> {
        self.skip_ws();
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => Ok(Expr::Num(self.number()?)),
            Some(c) if c.is_ascii_alphabetic() => {
                let name = self.ident();
                self.expect('(')?;
                let e = match name.as_str() {
                    "delta" => {
                        self.arg_x()?;
                        Expr::Delta
                    }
                    "dot" => {
                        self.expect('[')?;
                        let mut v = vec![self.signed_number()?];
                        while self.eat(',') {
                            v.push(self.signed_number()?);
                        }
                        self.expect(']')?;
                        self.expect(',')?;
                        self.arg_x()?;
                        Expr::Dot(v)
                    }
                    "exp" => Expr::Exp(Box::new(self.expr()?)),
                    _ => return Err(self.error(&format!("unknown function '{name}'"))),
                };
                self.expect(')')?;
                Ok(e)
            }
            _ => Err(self.error("expected a number, function or '('")),
        }
    }

    fn signed_number(&mut self) -> Result<f64> {
        let neg = self.eat('-');
        let v = self.number()?;
        Ok(if neg { -v } else { v })
    }

    fn arg_x(&mut self) -> Result<()> {
        if self.ident() == "x" {
            Ok(())
        } else {
            Err(self.error("expected the variable 'x'"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expression_grammar() {
        let o2 = ConeModel::orthant(2).unwrap();
        let f = TestFunction::expression("2*delta(x)^-0.5 * exp(-dot([1, 0.5], x)) + 1e-1", None, Some(-0.5), None)
            .unwrap();
        let y = [2.0, 3.0];
        let want = 2.0 * 6f64.powf(-0.5) * (-3.5f64).exp() + 0.1;
        assert!((f.eval(&o2, &y).unwrap() - want).abs() < 1e-15);
        let g = TestFunction::expression("2^3^2 - -1", None, None, None).unwrap();
        assert_eq!(g.eval(&o2, &y).unwrap(), 513.0);
        for bad in ["delta(y)", "foo(x)", "1 +", "(1", "dot([1],x) 2"] {
            assert!(matches!(parse(bad), Err(ConeError::Expression(_))), "{bad}");
        }
        let neg = TestFunction::expression("1 - delta(x)", None, None, None).unwrap();
        assert!(neg.eval(&o2, &y).is_err());
    }

    #[test]
    fn properties() {
        let o2 = ConeModel::orthant(2).unwrap();
        let f = TestFunction::indicator(Point(vec![1.0, 2.0]));
        assert_eq!(f.eval(&o2, &[0.5, 1.5]).unwrap(), 1.0);
        assert_eq!(f.eval(&o2, &[1.5, 1.5]).unwrap(), 0.0);
        assert_eq!(f.decay(), Some(f64::NEG_INFINITY));
        let g = TestFunction::exp_damped(0.0, Point(vec![2.0, 0.5]));
        assert!(g.scale_point(&o2).max_abs_diff(&Point(vec![0.5, 2.0])) < 1e-15);
        let h = TestFunction::delta_power(-0.5).times_delta(0.25).scaled(3.0);
        assert_eq!(h.decay(), Some(-0.25));
        assert!((h.eval(&o2, &[2.0, 2.0]).unwrap() - 3.0 * 4f64.powf(-0.25)).abs() < 1e-15);
    }

    #[test]
    fn s_transform_of_powers() {
        let o2 = ConeModel::orthant(2).unwrap();
        let f = TestFunction::delta_power(1.5);
        let sf = s_transform(&o2, &f);
        for y in [[0.5f64, 2.0], [3.0, 0.25]] {
            // Δ(x*) = 1/Δ(x) on the orthant
            let want = (y[0] * y[1]).powf(-1.5);
            assert!((sf.eval(&o2, &y).unwrap() / want - 1.0).abs() < 1e-14);
        }
        assert_eq!(sf.decay(), Some(-1.5));
        let l3 = ConeModel::lorentz(3).unwrap();
        let g = TestFunction::exp_damped(0.3, Point(vec![0.2, 0.1, 1.0]));
        let ssg = s_transform(&l3, &s_transform(&l3, &g));
        let y = [0.3, -0.5, 1.2];
        assert!((ssg.eval(&l3, &y).unwrap() / g.eval(&l3, &y).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(s_transform(&l3, &TestFunction::delta_power(0.0)).eval(&l3, &y).unwrap(), 1.0);
    }

    #[test]
    fn spec_round_trip() {
        let js = r#"[{"kind":"delta_power","delta":-0.25},
                     {"kind":"indicator_interval","b":[1,2]},
                     {"kind":"exp_damped_power","delta":0.5},
                     {"kind":"expression","expr":"exp(-dot([1,1],x))","decay":"-inf"}]"#;
        let specs: Vec<FunctionSpec> = serde_json::from_str(js).unwrap();
        let o2 = ConeModel::orthant(2).unwrap();
        for s in &specs {
            let f = TestFunction::from_spec(s, &o2).unwrap();
            assert!(f.eval(&o2, &[0.5, 0.5]).unwrap() > 0.0);
        }
        let back: Vec<FunctionSpec> = serde_json::from_str(&serde_json::to_string(&specs).unwrap()).unwrap();
        assert_eq!(back, specs);
    }
}
