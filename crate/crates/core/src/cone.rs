//! Concrete cone models: the orthant, the Lorentz cone, linear images of the
//! orthant and direct products of these.
//!
//! All membership tests are for the *open* cone.

use serde::{Deserialize, Serialize};

use crate::calibration;
use crate::error::{ConeError, Result};
use crate::linalg::{dot, norm, Matrix, Point};

/// Guard on |det A| below which a simplicial model is rejected.
pub const EPS_DET: f64 = 1e-10;
/// Tolerance used when closure membership is needed.
pub const EPS_CLOSURE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub enum ConeKind {
    Orthant,
    /// Δ and φ at the axis point, from the calibration cache.
    Lorentz { delta_c: f64, phi_c: f64 },
    /// V = A·R^n_+, with A⁻¹ and det A cached.
    Simplicial { a: Matrix, a_inv: Matrix, det: f64 },
    Product(Vec<ConeModel>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConeSpec", into = "ConeSpec")]
pub struct ConeModel {
    kind: ConeKind,
    dim: usize,
    label: String,
}

/// Serialized form of a cone model.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConeSpec {
    pub kind: String,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Matrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factors: Option<Vec<ConeSpec>>,
    #[serde(default)]
    pub label: String,
}

impl TryFrom<ConeSpec> for ConeModel {
    type Error = ConeError;

    fn try_from(s: ConeSpec) -> Result<Self> {
        let mut cone = match s.kind.as_str() {
            "orthant" => ConeModel::orthant(s.dim)?,
            "lorentz" => ConeModel::lorentz(s.dim)?,
            "simplicial" => {
                let a = s.matrix.ok_or_else(|| {
                    ConeError::InvalidModel("simplicial cone needs a matrix".into())
                })?;
                if a.dim() != s.dim {
                    return Err(ConeError::DimensionMismatch {
                        expected: s.dim,
                        got: a.dim(),
                    });
                }
                ConeModel::simplicial(a)?
            }
            "product" => {
                let factors = s
                    .factors
                    .ok_or_else(|| ConeError::InvalidModel("product cone needs factors".into()))?
                    .into_iter()
                    .map(ConeModel::try_from)
                    .collect::<Result<Vec<_>>>()?;
                let cone = ConeModel::product(factors)?;
                if cone.dim != s.dim {
                    return Err(ConeError::DimensionMismatch {
                        expected: s.dim,
                        got: cone.dim,
                    });
                }
                cone
            }
            other => {
                return Err(ConeError::InvalidModel(format!(
                    "unknown cone kind '{other}' (expected orthant, lorentz, simplicial or product)"
                )))
            }
        };
        if !s.label.is_empty() {
            cone.label = s.label;
        }
        Ok(cone)
    }
}

impl From<ConeModel> for ConeSpec {
    fn from(c: ConeModel) -> Self {
        let (kind, matrix, factors) = match c.kind {
            ConeKind::Orthant => ("orthant", None, None),
            ConeKind::Lorentz { .. } => ("lorentz", None, None),
            ConeKind::Simplicial { a, .. } => ("simplicial", Some(a), None),
            ConeKind::Product(fs) => (
                "product",
                None,
                Some(fs.into_iter().map(ConeSpec::from).collect()),
            ),
        };
        ConeSpec {
            kind: kind.to_string(),
            dim: c.dim,
            matrix,
            factors,
            label: c.label,
        }
    }
}

impl ConeModel {
    pub fn orthant(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(ConeError::InvalidModel("orthant dimension must be >= 1".into()));
        }
        Ok(ConeModel {
            kind: ConeKind::Orthant,
            dim: n,
            label: format!("orthant({n})"),
        })
    }

    pub fn lorentz(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(ConeError::InvalidModel("lorentz dimension must be >= 2".into()));
        }
        Ok(ConeModel {
            kind: ConeKind::Lorentz {
                delta_c: calibration::lorentz_delta_constant(n)?,
                phi_c: calibration::lorentz_phi_constant(n)?,
            },
            dim: n,
            label: format!("lorentz({n})"),
        })
    }

    pub fn simplicial(a: Matrix) -> Result<Self> {
        let det = a.determinant();
        if !det.is_finite() || det.abs() <= EPS_DET {
            return Err(ConeError::SingularMatrix {
                det: det.abs(),
                guard: EPS_DET,
            });
        }
        let a_inv = a
            .inverse()
            .ok_or(ConeError::SingularMatrix { det: det.abs(), guard: EPS_DET })?;
        let n = a.dim();
        Ok(ConeModel {
            kind: ConeKind::Simplicial { a, a_inv, det },
            dim: n,
            label: format!("simplicial({n})"),
        })
    }

    pub fn product(factors: Vec<ConeModel>) -> Result<Self> {
        if factors.is_empty() {
            return Err(ConeError::InvalidModel("product needs at least one factor".into()));
        }
        let dim = factors.iter().map(|f| f.dim).sum();
        let label = format!(
            "product({})",
            factors.iter().map(|f| f.label.as_str()).collect::<Vec<_>>().join(",")
        );
        Ok(ConeModel {
            kind: ConeKind::Product(factors),
            dim,
            label,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn kind(&self) -> &ConeKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            ConeKind::Orthant => "orthant",
            ConeKind::Lorentz { .. } => "lorentz",
            ConeKind::Simplicial { .. } => "simplicial",
            ConeKind::Product(_) => "product",
        }
    }

    /// Is the model known to be self-dual (V* = V as sets)?
    pub fn is_self_dual(&self) -> bool {
        match &self.kind {
            ConeKind::Orthant | ConeKind::Lorentz { .. } => true,
            ConeKind::Simplicial { .. } => false,
            ConeKind::Product(fs) => fs.iter().all(|f| f.is_self_dual()),
        }
    }

    /// Product factors with their coordinate offsets.
    pub(crate) fn blocks(&self) -> Vec<(usize, &ConeModel)> {
        match &self.kind {
            ConeKind::Product(fs) => {
                let mut off = 0;
                fs.iter()
                    .map(|f| {
                        let o = off;
                        off += f.dim;
                        (o, f)
                    })
                    .collect()
            }
            _ => vec![(0, self)],
        }
    }

    pub(crate) fn check(&self, x: &Point) -> Result<()> {
        x.check_dim(self.dim)?;
        x.check_finite()
    }

    /// Membership in the open cone.
    pub fn contains(&self, x: &Point) -> Result<bool> {
        self.check(x)?;
        Ok(self.contains_raw(&x.0))
    }

    pub(crate) fn contains_raw(&self, x: &[f64]) -> bool {
        match &self.kind {
            ConeKind::Orthant => x.iter().all(|v| *v > 0.0),
            ConeKind::Lorentz { .. } => {
                let n = x.len();
                x[n - 1] > norm(&x[..n - 1])
            }
            ConeKind::Simplicial { a_inv, .. } => a_inv.mul_vec(x).iter().all(|v| *v > 0.0),
            ConeKind::Product(_) => self
                .blocks()
                .into_iter()
                .all(|(o, f)| f.contains_raw(&x[o..o + f.dim])),
        }
    }

    /// Membership in the closure, up to `EPS_CLOSURE` relative to |x|.
    pub fn contains_closure(&self, x: &Point) -> Result<bool> {
        self.check(x)?;
        let tol = EPS_CLOSURE * x.norm().max(1.0);
        Ok(match &self.kind {
            ConeKind::Orthant => x.0.iter().all(|v| *v >= -tol),
            ConeKind::Lorentz { .. } => {
                let n = self.dim;
                x[n - 1] >= norm(&x.0[..n - 1]) - tol
            }
            ConeKind::Simplicial { a_inv, .. } => {
                a_inv.mul_vec(&x.0).iter().all(|v| *v >= -tol)
            }
            ConeKind::Product(_) => {
                let mut ok = true;
                for (o, f) in self.blocks() {
                    ok &= f.contains_closure(&x.slice(o, f.dim))?;
                }
                ok
            }
        })
    }

    pub(crate) fn require(&self, x: &Point) -> Result<()> {
        if self.contains(x)? {
            Ok(())
        } else {
            Err(ConeError::NotInCone {
                cone: self.label.clone(),
            })
        }
    }

    pub fn dual(&self) -> ConeModel {
        match &self.kind {
            ConeKind::Orthant | ConeKind::Lorentz { .. } => self.clone(),
            ConeKind::Simplicial { a, a_inv, det } => ConeModel {
                kind: ConeKind::Simplicial {
                    a: a_inv.transpose(),
                    a_inv: a.transpose(),
                    det: 1.0 / det,
                },
                dim: self.dim,
                label: format!("dual({})", self.label),
            },
            ConeKind::Product(fs) => ConeModel {
                kind: ConeKind::Product(fs.iter().map(|f| f.dual()).collect()),
                dim: self.dim,
                label: format!("dual({})", self.label),
            },
        }
    }

    /// Euclidean distance from x to the boundary of the cone.
    pub fn boundary_distance(&self, x: &Point) -> Result<f64> {
        self.require(x)?;
        Ok(self.boundary_distance_raw(&x.0))
    }

    pub(crate) fn boundary_distance_raw(&self, x: &[f64]) -> f64 {
        match &self.kind {
            ConeKind::Orthant => x.iter().copied().fold(f64::INFINITY, f64::min),
            ConeKind::Lorentz { .. } => {
                let n = x.len();
                (x[n - 1] - norm(&x[..n - 1])) / std::f64::consts::SQRT_2
            }
            ConeKind::Simplicial { a_inv, .. } => (0..self.dim)
                .map(|i| {
                    let r = a_inv.row(i);
                    dot(r, x) / norm(r)
                })
                .fold(f64::INFINITY, f64::min),
            ConeKind::Product(_) => self
                .blocks()
                .into_iter()
                .map(|(o, f)| f.boundary_distance_raw(&x[o..o + f.dim]))
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// `x <_V y`, i.e. `y − x ∈ V`.
    pub fn cone_less(&self, x: &Point, y: &Point) -> Result<bool> {
        self.check(x)?;
        self.check(y)?;
        Ok(self.contains_raw(&y.sub(x).0))
    }

    /// Membership in the cone interval ⟨a,b⟩.
    pub fn in_interval(&self, a: &Point, b: &Point, x: &Point) -> Result<bool> {
        Ok(self.cone_less(a, x)? && self.cone_less(x, b)?)
    }

    /// Reference point e on the cone axis.
    pub fn axis(&self) -> Point {
        match &self.kind {
            ConeKind::Orthant => Point(vec![1.0; self.dim]),
            ConeKind::Lorentz { .. } => {
                let mut e = vec![0.0; self.dim];
                e[self.dim - 1] = 1.0;
                Point(e)
            }
            ConeKind::Simplicial { a, .. } => Point(a.mul_vec(&vec![1.0; self.dim])),
            ConeKind::Product(fs) => Point::concat(&fs.iter().map(|f| f.axis()).collect::<Vec<_>>()),
        }
    }

    /// Automorphism g of the cone with g(axis) = x.
    pub fn automorphism(&self, x: &Point) -> Result<Matrix> {
        self.require(x)?;
        Ok(self.automorphism_raw(&x.0))
    }

    pub(crate) fn automorphism_raw(&self, x: &[f64]) -> Matrix {
        match &self.kind {
            ConeKind::Orthant => Matrix::diag(x),
            ConeKind::Lorentz { .. } => lorentz_automorphism(x),
            ConeKind::Simplicial { a, a_inv, .. } => {
                let w = a_inv.mul_vec(x);
                a.matmul(&Matrix::diag(&w)).matmul(a_inv)
            }
            ConeKind::Product(_) => Matrix::block_diag(
                &self
                    .blocks()
                    .into_iter()
                    .map(|(o, f)| f.automorphism_raw(&x[o..o + f.dim]))
                    .collect::<Vec<_>>(),
            ),
        }
    }

    /// sup{ρ ≥ 0 : x + ρv ∈ V} for x ∈ V; infinite if the ray stays inside.
    pub fn ray_exit(&self, x: &Point, v: &Point) -> Result<f64> {
        self.require(x)?;
        v.check_dim(self.dim)?;
        Ok(self.ray_exit_raw(&x.0, &v.0))
    }

    pub(crate) fn ray_exit_raw(&self, x: &[f64], v: &[f64]) -> f64 {
        fn linear(c: &[f64], d: &[f64]) -> f64 {
            c.iter()
                .zip(d)
                .filter(|(_, d)| **d < 0.0)
                .map(|(c, d)| -c / d)
                .fold(f64::INFINITY, f64::min)
        }
        match &self.kind {
            ConeKind::Orthant => linear(x, v),
            ConeKind::Simplicial { a_inv, .. } => linear(&a_inv.mul_vec(x), &a_inv.mul_vec(v)),
            ConeKind::Lorentz { .. } => {
                let n = x.len();
                let a = v[n - 1] * v[n - 1] - dot(&v[..n - 1], &v[..n - 1]);
                let b = 2.0 * (x[n - 1] * v[n - 1] - dot(&x[..n - 1], &v[..n - 1]));
                let c = x[n - 1] * x[n - 1] - dot(&x[..n - 1], &x[..n - 1]);
                smallest_positive_root(a, b, c)
            }
            ConeKind::Product(_) => self
                .blocks()
                .into_iter()
                .map(|(o, f)| f.ray_exit_raw(&x[o..o + f.dim], &v[o..o + f.dim]))
                .fold(f64::INFINITY, f64::min),
        }
    }
}

/// Smallest positive root of aρ² + bρ + c with c > 0, or ∞.
fn smallest_positive_root(a: f64, b: f64, c: f64) -> f64 {
    let scale = a.abs().max(b.abs()).max(c.abs());
    if a.abs() <= 1e-14 * scale {
        return if b < 0.0 { -c / b } else { f64::INFINITY };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return f64::INFINITY;
    }
    let s = disc.sqrt();
    // numerically stable pair of roots
    let qv = -0.5 * (b + b.signum() * s);
    let r1 = qv / a;
    let r2 = if qv != 0.0 { c / qv } else { f64::INFINITY };
    [r1, r2]
        .into_iter()
        .filter(|r| *r > 0.0)
        .fold(f64::INFINITY, f64::min)
}

/// t·B where B is the boost taking the axis direction to x/t, t = √q(x).
fn lorentz_automorphism(x: &[f64]) -> Matrix {
    let n = x.len();
    let xs = &x[..n - 1];
    let xn = x[n - 1];
    let t = (xn * xn - dot(xs, xs)).sqrt();
    let r = norm(xs);
    let ch = xn / t;
    let sh = r / t;
    let mut m = Matrix::identity(n);
    if r > 0.0 {
        let w: Vec<f64> = xs.iter().map(|v| v / r).collect();
        for i in 0..n - 1 {
            for j in 0..n - 1 {
                m.set(i, j, m.get(i, j) + (ch - 1.0) * w[i] * w[j]);
            }
            m.set(i, n - 1, sh * w[i]);
            m.set(n - 1, i, sh * w[i]);
        }
    }
    m.set(n - 1, n - 1, ch);
    m.scale(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: &[f64]) -> Point {
        Point(v.to_vec())
    }

    #[test]
    fn membership_examples() {
        let o2 = ConeModel::orthant(2).unwrap();
        assert!(o2.contains(&p(&[1.0, 2.0])).unwrap());
        let l3 = ConeModel::lorentz(3).unwrap();
        assert!(!l3.contains(&p(&[0.0, 0.0, -1.0])).unwrap());
        let a = Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let s = ConeModel::simplicial(a.clone()).unwrap();
        // A⁻¹(1,1) = (0,1): on the boundary
        let w = a.solve(&[1.0, 1.0]).unwrap();
        assert!(w[0].abs() < 1e-15 && (w[1] - 1.0).abs() < 1e-15);
        assert!(!s.contains(&p(&[1.0, 1.0])).unwrap());
        assert!(o2.contains(&p(&[1.0])).is_err());
        assert!(o2.contains(&p(&[1.0, f64::NAN])).is_err());
    }

    #[test]
    fn dual_of_diagonal() {
        let a = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let d = ConeModel::simplicial(a).unwrap().dual();
        match d.kind() {
            ConeKind::Simplicial { a, .. } => {
                let want = Matrix::from_rows(&[vec![0.5, 0.0], vec![0.0, 1.0]]).unwrap();
                assert!(a.sub(&want).max_abs() < 1e-15);
            }
            _ => panic!("expected simplicial dual"),
        }
    }

    #[test]
    fn singular_matrix_names_guard() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        let err = ConeModel::simplicial(a).unwrap_err();
        assert!(err.to_string().contains("guard"));
    }

    #[test]
    fn boundary_distance_examples() {
        let o2 = ConeModel::orthant(2).unwrap();
        assert_eq!(o2.boundary_distance(&p(&[3.0, 1.0])).unwrap(), 1.0);
        let l2 = ConeModel::lorentz(2).unwrap();
        let d = l2.boundary_distance(&p(&[0.0, 1.0])).unwrap();
        // brute-force distance to the line x2 = x1
        let brute = (0..=20000)
            .map(|i| {
                let t = i as f64 * 1e-4;
                let q = [t / 2f64.sqrt(), t / 2f64.sqrt()];
                (q[0].powi(2) + (1.0 - q[1]).powi(2)).sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        assert!((d - brute).abs() < 1e-6);
        assert_eq!(ConeModel::orthant(1).unwrap().boundary_distance(&p(&[5.0])).unwrap(), 5.0);
    }

    #[test]
    fn order_examples() {
        let o2 = ConeModel::orthant(2).unwrap();
        assert!(o2.cone_less(&p(&[1.0, 1.0]), &p(&[2.0, 3.0])).unwrap());
        assert!(!o2.cone_less(&p(&[1.0, 1.0]), &p(&[2.0, 0.5])).unwrap());
        let l3 = ConeModel::lorentz(3).unwrap();
        assert!(l3.cone_less(&p(&[0.0, 0.0, 0.0]), &p(&[0.0, 0.0, 1.0])).unwrap());
        let zero = p(&[0.0, 0.0]);
        assert!(o2.in_interval(&zero, &p(&[1.0, 1.0]), &p(&[0.5, 0.5])).unwrap());
        assert!(!o2.in_interval(&zero, &p(&[1.0, 1.0]), &p(&[0.5, 1.5])).unwrap());
        let l2 = ConeModel::lorentz(2).unwrap();
        assert!(l2.contains(&p(&[0.5, 1.0])).unwrap() && l2.contains(&p(&[-0.5, 1.0])).unwrap());
        assert!(l2.in_interval(&zero, &p(&[0.0, 2.0]), &p(&[0.5, 1.0])).unwrap());
    }

    #[test]
    fn lorentz_automorphism_maps_axis() {
        let l3 = ConeModel::lorentz(3).unwrap();
        let x = p(&[0.3, -0.4, 2.0]);
        let g = l3.automorphism(&x).unwrap();
        assert!(g.apply(&l3.axis()).max_abs_diff(&x) < 1e-14);
        // preserves the quadratic form up to q(x)
        let y = p(&[0.1, 0.2, 0.5]);
        let gy = g.apply(&y);
        let q = |z: &Point| z[2] * z[2] - z[0] * z[0] - z[1] * z[1];
        assert!((q(&gy) - q(&x) * q(&y)).abs() < 1e-12);
    }

    #[test]
    fn ray_exit_lorentz() {
        let l3 = ConeModel::lorentz(3).unwrap();
        let x = p(&[0.0, 0.0, 1.0]);
        let r = l3.ray_exit(&x, &p(&[1.0, 0.0, 0.0])).unwrap();
        assert!((r - 1.0).abs() < 1e-14);
        assert!(l3.ray_exit(&x, &p(&[0.0, 0.0, 1.0])).unwrap().is_infinite());
    }

    #[test]
    fn json_round_trip() {
        let a = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0]]).unwrap();
        let c = ConeModel::product(vec![
            ConeModel::simplicial(a).unwrap(),
            ConeModel::lorentz(3).unwrap(),
        ])
        .unwrap();
        let s = serde_json::to_string(&c).unwrap();
        let back: ConeModel = serde_json::from_str(&s).unwrap();
        assert_eq!(back.dim(), 5);
        assert_eq!(back.label(), c.label());
        let bad = r#"{"kind":"simplicial","dim":2,"matrix":[[1,2],[2,4]]}"#;
        assert!(serde_json::from_str::<ConeModel>(bad).is_err());
    }
}
