//! The *-map x* = −∇ log φ_V(x), its Jacobian K_V(x) = −∂x*/∂x and the
//! fixed point x = x*.

use serde::{Deserialize, Serialize};

use crate::charfn;
use crate::cone::{ConeKind, ConeModel};
use crate::error::{ConeError, Result};
use crate::linalg::{dot, Matrix, Point};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StarMethod {
    ClosedForm,
    FiniteDifference,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StarResult {
    pub x_star: Point,
    pub method: StarMethod,
    /// |x*·x − n|
    pub residual_euler: f64,
}

/// Default finite-difference step for a point of norm `xn`.
pub fn fd_step(xn: f64) -> f64 {
    1e-6f64.max(1e-6 * xn)
}

pub(crate) fn star_raw(cone: &ConeModel, x: &[f64], out: &mut [f64]) {
    match cone.kind() {
        ConeKind::Orthant => {
            for (o, v) in out.iter_mut().zip(x) {
                *o = 1.0 / v;
            }
        }
        ConeKind::Lorentz { .. } => {
            let n = x.len();
            let s = n as f64 / charfn::lorentz_q(x);
            for i in 0..n - 1 {
                out[i] = -s * x[i];
            }
            out[n - 1] = s * x[n - 1];
        }
        ConeKind::Simplicial { a_inv, .. } => {
            // (Ax)* = A^{−T} x*
            let w: Vec<f64> = a_inv.mul_vec(x).iter().map(|v| 1.0 / v).collect();
            out.copy_from_slice(&a_inv.transpose().mul_vec(&w));
        }
        ConeKind::Product(_) => {
            for (o, f) in cone.blocks() {
                let r = o..o + f.dim();
                star_raw(f, &x[r.clone()], &mut out[r]);
            }
        }
    }
}

/// x* for x ∈ V, by closed form.
pub fn star(cone: &ConeModel, x: &Point) -> Result<StarResult> {
    let x_star = star_point(cone, x)?;
    let residual_euler = (x_star.dot(x) - cone.dim() as f64).abs();
    Ok(StarResult {
        x_star,
        method: StarMethod::ClosedForm,
        residual_euler,
    })
}

pub fn star_point(cone: &ConeModel, x: &Point) -> Result<Point> {
    cone.require(x)?;
    let mut out = vec![0.0; cone.dim()];
    star_raw(cone, &x.0, &mut out);
    Ok(Point(out))
}

fn guard(cone: &ConeModel, x: &Point, step: f64) -> Result<()> {
    let d = cone.boundary_distance(x)?;
    let required = 10.0 * step;
    if d > required {
        Ok(())
    } else {
        Err(ConeError::StencilLeavesCone { distance: d, required })
    }
}

/// Central-difference gradient of −log φ with step h·|x|.
pub fn star_fd(cone: &ConeModel, x: &Point, h: f64) -> Result<Point> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(ConeError::InvalidArgument(format!("step must be positive, got {h}")));
    }
    let s = h * x.norm().max(f64::MIN_POSITIVE);
    guard(cone, x, s)?;
    let n = cone.dim();
    let mut y = x.0.clone();
    let mut g = vec![0.0; n];
    for i in 0..n {
        y[i] = x[i] + s;
        let up = charfn::ln_phi_raw(cone, &y);
        y[i] = x[i] - s;
        let down = charfn::ln_phi_raw(cone, &y);
        y[i] = x[i];
        g[i] = -(up - down) / (2.0 * s);
    }
    Ok(Point(g))
}

/// As [`star`] but through the finite-difference path.
pub fn star_via_fd(cone: &ConeModel, x: &Point, h: f64) -> Result<StarResult> {
    let x_star = star_fd(cone, x, h)?;
    let residual_euler = (x_star.dot(x) - cone.dim() as f64).abs();
    Ok(StarResult {
        x_star,
        method: StarMethod::FiniteDifference,
        residual_euler,
    })
}

/// K_V(x) = −∂x*/∂x: analytic on the orthant, central differences of the
/// closed-form star map otherwise.
#[allow(non_snake_case)]
pub fn jacobian_K(cone: &ConeModel, x: &Point) -> Result<Matrix> {
    cone.require(x)?;
    if let ConeKind::Orthant = cone.kind() {
        return Ok(Matrix::diag(&x.0.iter().map(|v| 1.0 / (v * v)).collect::<Vec<_>>()));
    }
    if let ConeKind::Product(_) = cone.kind() {
        let blocks = cone
            .blocks()
            .into_iter()
            .map(|(o, f)| jacobian_K(f, &x.slice(o, f.dim())))
            .collect::<Result<Vec<_>>>()?;
        return Ok(Matrix::block_diag(&blocks));
    }
    let s = fd_step(x.norm());
    guard(cone, x, s)?;
    let n = cone.dim();
    let mut k = Matrix::zeros(n);
    let mut y = x.0.clone();
    let mut up = vec![0.0; n];
    let mut down = vec![0.0; n];
    for j in 0..n {
        y[j] = x[j] + s;
        star_raw(cone, &y, &mut up);
        y[j] = x[j] - s;
        star_raw(cone, &y, &mut down);
        y[j] = x[j];
        for i in 0..n {
            k.set(i, j, -(up[i] - down[i]) / (2.0 * s));
        }
    }
    Ok(k)
}

pub const FIXED_POINT_MAX_ITERS: usize = 10_000;

/// Fixed point x = x*, starting from the axis scaled onto |x|² = n.
pub fn fixed_point(cone: &ConeModel, tol: f64) -> Result<Point> {
    let e = cone.axis();
    fixed_point_from(cone, &e, tol)
}

/// Minimize log φ on the sphere |x|² = n by projected gradient with
/// Armijo backtracking, then polish with Newton steps on x* − x = 0.
pub fn fixed_point_from(cone: &ConeModel, start: &Point, tol: f64) -> Result<Point> {
    if !(tol > 0.0) {
        return Err(ConeError::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    cone.require(start)?;
    let n = cone.dim();
    let radius = (n as f64).sqrt();
    let onto_sphere = |v: &[f64]| -> Vec<f64> {
        let r = crate::linalg::norm(v);
        v.iter().map(|t| t * radius / r).collect()
    };
    let mut x = onto_sphere(&start.0);
    let mut xs = vec![0.0; n];
    let residual = |x: &[f64], xs: &[f64]| -> f64 {
        x.iter().zip(xs).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    };
    let mut res = f64::INFINITY;
    for iter in 0..FIXED_POINT_MAX_ITERS {
        star_raw(cone, &x, &mut xs);
        res = residual(&x, &xs);
        if res < tol {
            return Ok(Point(x));
        }
        // the tangential part of −∇ log φ = x* on the sphere is x* − x
        let dir: Vec<f64> = xs.iter().zip(&x).map(|(a, b)| a - b).collect();
        if res < 1e-3 || iter > FIXED_POINT_MAX_ITERS / 2 {
            if let Some(next) = newton_step(cone, &x, &xs) {
                let next = onto_sphere(&next);
                if cone.contains_raw(&next) {
                    let mut ns = vec![0.0; n];
                    star_raw(cone, &next, &mut ns);
                    if residual(&next, &ns) < res {
                        x = next;
                        continue;
                    }
                }
            }
        }
        let f0 = charfn::ln_phi_raw(cone, &x);
        let slope = dot(&dir, &dir);
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let cand: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
            let cand = onto_sphere(&cand);
            if cone.contains_raw(&cand) && charfn::ln_phi_raw(cone, &cand) <= f0 - 1e-4 * t * slope {
                x = cand;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    star_raw(cone, &x, &mut xs);
    res = res.min(residual(&x, &xs));
    if res < tol {
        return Ok(Point(x));
    }
    Err(ConeError::NoConvergence {
        iterations: FIXED_POINT_MAX_ITERS,
        residual: res,
        last: x,
    })
}

/// Newton step for F(x) = x* − x, with F' = −K − I.
fn newton_step(cone: &ConeModel, x: &[f64], xs: &[f64]) -> Option<Vec<f64>> {
    let k = jacobian_K(cone, &Point(x.to_vec())).ok()?;
    let n = x.len();
    let mut m = k;
    for i in 0..n {
        m.set(i, i, m.get(i, i) + 1.0);
    }
    let rhs: Vec<f64> = xs.iter().zip(x).map(|(a, b)| a - b).collect();
    let d = m.solve(&rhs)?;
    Some(x.iter().zip(&d).map(|(a, b)| a + b).collect())
}
