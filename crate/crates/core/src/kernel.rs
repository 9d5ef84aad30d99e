//! Homogeneous kernels k(x,y) ≥ 0 and their homogeneity checks.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::charfn;
use crate::cone::{ConeKind, ConeModel};
use crate::error::{ConeError, Result};
use crate::linalg::{dot, Matrix};
use crate::mc::{self, McRng};
use crate::sampling;
use crate::star;

/// Domain of the kernel's first argument.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    /// k: V×V → R₊, k(Ax,Ay) = |A|^β k(x,y).
    #[serde(rename = "VxV")]
    VxV,
    /// k: V*×V → R₊, k((Aᵗ)⁻¹x, Ay) = |A|^β k(x,y).
    #[serde(rename = "VstarxV")]
    VstarxV,
}

pub type KernelFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub(crate) enum KernelKind {
    /// χ_{⟨0,x⟩}(y)
    Hardy,
    /// e^{−x*·y}
    Laplace,
    /// Δ^{r−1}(x−y)χ_{⟨0,x⟩}(y)/Γ(r)
    RiemannLiouville { r: f64, gamma_r: f64 },
    /// Δ^{r−1}(y−x)χ_{⟨x,∞⟩}(y)/Γ(r)
    Weyl { r: f64, gamma_r: f64 },
    /// e^{−x·y}, x ∈ V*
    LaplaceTransform,
    Custom(KernelFn),
}

#[derive(Clone)]
pub struct KernelSpec {
    pub name: String,
    pub beta: f64,
    pub side: Side,
    pub(crate) kind: KernelKind,
}

impl fmt::Debug for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KernelSpec")
            .field("name", &self.name)
            .field("beta", &self.beta)
            .field("side", &self.side)
            .finish()
    }
}

fn check_order(r: f64) -> Result<f64> {
    if !(r >= 1.0 && r.is_finite()) {
        return Err(ConeError::InvalidArgument(format!("fractional order r must be >= 1, got {r}")));
    }
    Ok(gamma(r))
}

impl KernelSpec {
    pub fn hardy() -> Self {
        KernelSpec {
            name: "hardy".into(),
            beta: 0.0,
            side: Side::VxV,
            kind: KernelKind::Hardy,
        }
    }

    pub fn laplace() -> Self {
        KernelSpec {
            name: "laplace".into(),
            beta: 0.0,
            side: Side::VxV,
            kind: KernelKind::Laplace,
        }
    }

    pub fn riemann_liouville(r: f64) -> Result<Self> {
        let gamma_r = check_order(r)?;
        Ok(KernelSpec {
            name: format!("riemann_liouville({r})"),
            beta: r - 1.0,
            side: Side::VxV,
            kind: KernelKind::RiemannLiouville { r, gamma_r },
        })
    }

    pub fn weyl(r: f64) -> Result<Self> {
        let gamma_r = check_order(r)?;
        Ok(KernelSpec {
            name: format!("weyl({r})"),
            beta: r - 1.0,
            side: Side::VxV,
            kind: KernelKind::Weyl { r, gamma_r },
        })
    }

    pub fn laplace_transform() -> Self {
        KernelSpec {
            name: "laplace_transform".into(),
            beta: 0.0,
            side: Side::VstarxV,
            kind: KernelKind::LaplaceTransform,
        }
    }

    /// A user kernel with declared order and side; the declaration is
    /// checked by [`homogeneity_error`], not trusted.
    pub fn custom(name: impl Into<String>, beta: f64, side: Side, f: KernelFn) -> Self {
        KernelSpec {
            name: name.into(),
            beta,
            side,
            kind: KernelKind::Custom(f),
        }
    }

    /// Fractional order r for R_r / W_r (1 for the others).
    pub fn order(&self) -> f64 {
        match self.kind {
            KernelKind::RiemannLiouville { r, .. } | KernelKind::Weyl { r, .. } => r,
            _ => 1.0,
        }
    }

    /// k(x,y) with y ∈ V and x ∈ V (or V* for the dual side), `cone` = V.
    pub fn eval(&self, cone: &ConeModel, x: &[f64], y: &[f64]) -> f64 {
        match &self.kind {
            KernelKind::Hardy => indicator(cone.contains_raw(&diff(x, y))),
            KernelKind::Laplace => {
                let mut xs = vec![0.0; x.len()];
                star::star_raw(cone, x, &mut xs);
                (-dot(&xs, y)).exp()
            }
            KernelKind::RiemannLiouville { r, gamma_r } => power_kernel(cone, &diff(x, y), *r, *gamma_r),
            KernelKind::Weyl { r, gamma_r } => power_kernel(cone, &diff(y, x), *r, *gamma_r),
            KernelKind::LaplaceTransform => (-dot(x, y)).exp(),
            KernelKind::Custom(f) => f(x, y),
        }
    }
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn power_kernel(cone: &ConeModel, d: &[f64], r: f64, gamma_r: f64) -> f64 {
    if !cone.contains_raw(d) {
        return 0.0;
    }
    if r == 1.0 {
        return 1.0 / gamma_r;
    }
    ((r - 1.0) * charfn::ln_delta_raw(cone, d)).exp() / gamma_r
}

pub(crate) fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(p, q)| p - q).collect()
}

/// Random element of the built-in automorphism families of `cone`:
/// λI, positive diagonal maps (conjugated for simplicial cones) and the
/// transitive family g_c with g_c(e) = c.
fn random_automorphism(cone: &ConeModel, rng: &mut McRng, which: usize) -> Matrix {
    let n = cone.dim();
    match which % 3 {
        0 => Matrix::identity(n).scale(sampling::random_point(&ConeModel::orthant(1).unwrap(), rng, 0.7)[0]),
        1 => match cone.kind() {
            ConeKind::Orthant | ConeKind::Simplicial { .. } => {
                let base = ConeModel::orthant(n).unwrap();
                let d = Matrix::diag(&sampling::random_point(&base, rng, 0.7));
                match cone.kind() {
                    ConeKind::Simplicial { a, a_inv, .. } => a.matmul(&d).matmul(a_inv),
                    _ => d,
                }
            }
            _ => cone.automorphism_raw(&sampling::random_point(cone, rng, 0.7)),
        },
        _ => cone.automorphism_raw(&sampling::random_point(cone, rng, 0.7)),
    }
}

/// Largest relative deviation from the declared homogeneity law over
/// `trials` random (A, x, y) with k(x,y) > 0.
pub fn homogeneity_error(cone: &ConeModel, k: &KernelSpec, trials: usize, seed: u64) -> Result<f64> {
    let mut rng = mc::stream_rng(seed, mc::tag("homogeneity"), 0);
    let dual = cone.dual();
    let mut worst = 0.0f64;
    let mut tested = 0;
    for t in 0..trials * 20 {
        if tested == trials {
            break;
        }
        let a = random_automorphism(cone, &mut rng, t);
        let det = a.determinant().abs();
        let y = sampling::random_point(cone, &mut rng, 0.7);
        let (x, ax) = match k.side {
            Side::VxV => {
                let x = sampling::random_point(cone, &mut rng, 0.7);
                let ax = a.mul_vec(&x);
                (x.0, ax)
            }
            Side::VstarxV => {
                let x = sampling::random_point(&dual, &mut rng, 0.7);
                let a_inv_t = a
                    .inverse()
                    .ok_or(ConeError::SingularMatrix { det, guard: 0.0 })?
                    .transpose();
                let ax = a_inv_t.mul_vec(&x);
                (x.0, ax)
            }
        };
        let ay = a.mul_vec(&y);
        let base = k.eval(cone, &x, &y);
        if !(base > 1e-200) {
            continue;
        }
        let moved = k.eval(cone, &ax, &ay);
        let want = det.powf(k.beta) * base;
        worst = worst.max((moved - want).abs() / want);
        tested += 1;
    }
    if tested == 0 {
        return Err(ConeError::InvalidArgument(format!(
            "kernel {} vanished on every random pair",
            k.name
        )));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn built_in_kernels_are_homogeneous() {
        let cones = [
            ConeModel::orthant(2).unwrap(),
            ConeModel::lorentz(3).unwrap(),
            ConeModel::simplicial(Matrix::from_rows(&[vec![1.0, 0.4], vec![-0.3, 1.0]]).unwrap()).unwrap(),
        ];
        let kernels = [
            KernelSpec::hardy(),
            KernelSpec::laplace(),
            KernelSpec::riemann_liouville(1.7).unwrap(),
            KernelSpec::weyl(2.5).unwrap(),
            KernelSpec::laplace_transform(),
        ];
        for c in &cones {
            for k in &kernels {
                let e = homogeneity_error(c, k, 200, 3).unwrap();
                assert!(e < 1e-8, "{} on {}: {e}", k.name, c.kind_name());
            }
        }
    }

    #[test]
    fn wrong_declared_order_is_caught() {
        let o2 = ConeModel::orthant(2).unwrap();
        let k = KernelSpec::custom("bad", 1.0, Side::VxV, Arc::new(|x: &[f64], y: &[f64]| (-(x[0] * y[1])).exp()));
        assert!(homogeneity_error(&o2, &k, 50, 1).unwrap() > 1e-3);
        assert!(KernelSpec::weyl(0.5).is_err());
    }
}
