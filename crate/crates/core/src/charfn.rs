//! The interval volume Δ_V, the characteristic function φ_V, their Monte
//! Carlo cross-checks, and the critical exponents σ_0(V), σ(V).

use serde::{Deserialize, Serialize};

use crate::calibration::sphere_area;
use crate::cone::{ConeKind, ConeModel};
use crate::error::{ConeError, Result};
use crate::linalg::{norm, Point};
use crate::mc::{self, McConfig, McEstimate};
use crate::sampling;
use crate::util::ext_f64;

/// Minimum effective sample fraction before phi_mc warns.
pub const MIN_ESS_FRACTION: f64 = 0.01;
/// Envelope rate shrink for phi_mc; keeps importance weights bounded.
pub const PHI_SHRINK: f64 = 0.75;

pub(crate) fn lorentz_q(x: &[f64]) -> f64 {
    let n = x.len();
    let r = norm(&x[..n - 1]);
    (x[n - 1] - r) * (x[n - 1] + r)
}

/// ln Δ_V(x), assuming x ∈ V.
pub(crate) fn ln_delta_raw(cone: &ConeModel, x: &[f64]) -> f64 {
    match cone.kind() {
        ConeKind::Orthant => x.iter().map(|v| v.ln()).sum(),
        ConeKind::Lorentz { delta_c, .. } => delta_c.ln() + x.len() as f64 / 2.0 * lorentz_q(x).ln(),
        ConeKind::Simplicial { a_inv, det, .. } => {
            det.abs().ln() + a_inv.mul_vec(x).iter().map(|v| v.ln()).sum::<f64>()
        }
        ConeKind::Product(_) => cone
            .blocks()
            .into_iter()
            .map(|(o, f)| ln_delta_raw(f, &x[o..o + f.dim()]))
            .sum(),
    }
}

/// ln φ_V(x), assuming x ∈ V.
pub(crate) fn ln_phi_raw(cone: &ConeModel, x: &[f64]) -> f64 {
    match cone.kind() {
        ConeKind::Orthant => -x.iter().map(|v| v.ln()).sum::<f64>(),
        ConeKind::Lorentz { phi_c, .. } => phi_c.ln() - x.len() as f64 / 2.0 * lorentz_q(x).ln(),
        ConeKind::Simplicial { a_inv, det, .. } => {
            -det.abs().ln() - a_inv.mul_vec(x).iter().map(|v| v.ln()).sum::<f64>()
        }
        ConeKind::Product(_) => cone
            .blocks()
            .into_iter()
            .map(|(o, f)| ln_phi_raw(f, &x[o..o + f.dim()]))
            .sum(),
    }
}

pub fn delta(cone: &ConeModel, x: &Point) -> Result<f64> {
    cone.require(x)?;
    Ok(ln_delta_raw(cone, &x.0).exp())
}

pub fn phi(cone: &ConeModel, x: &Point) -> Result<f64> {
    cone.require(x)?;
    Ok(ln_phi_raw(cone, &x.0).exp())
}

pub fn ln_delta(cone: &ConeModel, x: &Point) -> Result<f64> {
    cone.require(x)?;
    Ok(ln_delta_raw(cone, &x.0))
}

pub fn ln_phi(cone: &ConeModel, x: &Point) -> Result<f64> {
    cone.require(x)?;
    Ok(ln_phi_raw(cone, &x.0))
}

/// Bounding-box volume times the acceptance rate of ⟨0,x⟩.
pub fn delta_mc(cone: &ConeModel, x: &Point, cfg: &McConfig) -> Result<McEstimate> {
    cone.require(x)?;
    let (lo, hi) = sampling::interval_bbox(cone, &x.0);
    let vol: f64 = lo.iter().zip(&hi).map(|(l, h)| h - l).product();
    if !(vol.is_finite() && vol > 0.0) {
        return Err(ConeError::InvalidArgument(format!(
            "degenerate bounding box of volume {vol:e}"
        )));
    }
    let n = cone.dim();
    let est = mc::estimate(cfg, mc::tag("delta_mc"), |rng, _| {
        let mut y = vec![0.0; n];
        let mut d = vec![0.0; n];
        for i in 0..n {
            y[i] = lo[i] + (hi[i] - lo[i]) * rand::Rng::random::<f64>(rng);
            d[i] = x[i] - y[i];
        }
        Ok(if cone.contains_raw(&y) && cone.contains_raw(&d) { 1.0 } else { 0.0 })
    })?;
    Ok(est.scale(vol))
}

/// Importance-sampled φ_V(x) = ∫_{V*} e^{−x·y} dy with an exponential
/// envelope on V* at rate point x.
pub fn phi_mc(cone: &ConeModel, x: &Point, cfg: &McConfig) -> Result<McEstimate> {
    cone.require(x)?;
    let dual = cone.dual();
    let n = cone.dim();
    let stats = mc::estimate_k(cfg, mc::tag("phi_mc"), 2, |rng, _, out| {
        let mut y = vec![0.0; n];
        let lq = sampling::exp_envelope_raw(&dual, &x.0, PHI_SHRINK, rng, &mut y);
        let w = if dual.contains_raw(&y) {
            (-crate::linalg::dot(&x.0, &y) - lq).exp()
        } else {
            0.0
        };
        out[0] = w;
        out[1] = w * w;
        Ok(())
    })?;
    let mut est = stats[0].clone();
    let ess = if stats[1].value > 0.0 {
        est.value * est.value / stats[1].value
    } else {
        0.0
    };
    if ess < MIN_ESS_FRACTION {
        est.warn(format!(
            "effective sample size {:.3}% of samples is below {}%",
            100.0 * ess,
            100.0 * MIN_ESS_FRACTION
        ));
    }
    Ok(est)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaMethod {
    ClosedForm,
    Estimated,
}

/// Classification of a single α by the boundary-layer decay rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaClass {
    pub alpha: f64,
    /// Exponential decay rate in depth of the section integrand's boundary layer.
    pub decay_rate: f64,
    /// Same, from the first quarter of the samples.
    pub decay_rate_quarter: f64,
    pub divergent: bool,
    /// Do the N/4 and N classifications agree?
    pub stable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaReport {
    #[serde(with = "ext_f64")]
    pub sigma0: f64,
    pub sigma: f64,
    pub method: SigmaMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bracket: Option<Bracket>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub classes: Vec<AlphaClass>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    #[serde(with = "ext_f64")]
    pub low: f64,
    #[serde(with = "ext_f64")]
    pub high: f64,
}

impl Bracket {
    pub fn width(&self) -> f64 {
        self.high - self.low
    }

    pub fn contains(&self, v: f64) -> bool {
        self.low <= v && v <= self.high
    }
}

impl SigmaReport {
    fn closed(sigma0: f64) -> Self {
        SigmaReport {
            sigma0,
            sigma: sigma0.max(-1.0),
            method: SigmaMethod::ClosedForm,
            bracket: None,
            classes: Vec::new(),
            flags: Vec::new(),
        }
    }
}

fn sigma0_value(cone: &ConeModel) -> f64 {
    match cone.kind() {
        ConeKind::Orthant | ConeKind::Simplicial { .. } => {
            if cone.dim() == 1 {
                f64::NEG_INFINITY
            } else {
                -1.0
            }
        }
        ConeKind::Lorentz { .. } => -2.0 / cone.dim() as f64,
        ConeKind::Product(fs) => {
            // near a stratum where one whole factor degenerates, Δ vanishes
            // like |block|^{n_i} against a measure |block|^{n_i−1}: threshold −1
            let inner = fs.iter().map(sigma0_value).fold(f64::NEG_INFINITY, f64::max);
            if fs.len() >= 2 {
                inner.max(-1.0)
            } else {
                inner
            }
        }
    }
}

/// Closed-form σ_0(V) and σ(V) = max(−1, σ_0).
pub fn sigma0(cone: &ConeModel) -> SigmaReport {
    SigmaReport::closed(sigma0_value(cone))
}

/// σ(V) shorthand.
pub fn sigma(cone: &ConeModel) -> f64 {
    sigma0_value(cone).max(-1.0)
}

/// Depth window and bin count of the boundary-layer fit.
const TAU_LO: f64 = 9.0;
const TAU_HI: f64 = 21.0;
const TAU_BINS: usize = 12;
/// Decay rates at or below this count as divergent.
pub const DECAY_TOLERANCE: f64 = 0.02;

/// Estimate the integrability threshold of Δ^α over a section of V.
///
/// The section is the hyperplane through the axis point e orthogonal to e*.
/// Points are written x = e + R(ω)(1 − e^{−τ})ω with ω a unit direction in
/// the hyperplane and R(ω) the exit distance, so depth τ measures
/// −ln(distance to ∂V). The section integral restricted to depth bins decays
/// like e^{−λτ}; it is finite iff λ > 0. λ is fitted by least squares on the
/// log bin integrals, from the first N/4 samples and from all N.
pub fn sigma0_estimate(cone: &ConeModel, alphas: &[f64], cfg: &McConfig) -> Result<SigmaReport> {
    if alphas.is_empty() {
        return Err(ConeError::InvalidArgument("empty alpha grid".into()));
    }
    let n = cone.dim();
    let mut classes = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        if n == 1 {
            // the section is a single point
            classes.push(AlphaClass {
                alpha,
                decay_rate: f64::INFINITY,
                decay_rate_quarter: f64::INFINITY,
                divergent: false,
                stable: true,
            });
            continue;
        }
        let (full, quarter) = boundary_decay(cone, alpha, cfg)?;
        let divergent = full <= DECAY_TOLERANCE;
        classes.push(AlphaClass {
            alpha,
            decay_rate: full,
            decay_rate_quarter: quarter,
            divergent,
            stable: divergent == (quarter <= DECAY_TOLERANCE),
        });
    }
    let low = classes
        .iter()
        .filter(|c| c.divergent)
        .map(|c| c.alpha)
        .fold(f64::NEG_INFINITY, f64::max);
    let high = classes
        .iter()
        .filter(|c| !c.divergent)
        .map(|c| c.alpha)
        .fold(f64::INFINITY, f64::min);
    let mut flags = Vec::new();
    if low.is_infinite() || high.is_infinite() {
        flags.push("one-sided bracket: every alpha classified the same way".to_string());
    }
    if low > high {
        flags.push("non-monotone classification across the alpha grid".to_string());
    }
    for c in classes.iter().filter(|c| !c.stable) {
        flags.push(format!("alpha {} classified differently at N/4 and N", c.alpha));
    }
    let (lo, hi) = if low <= high { (low, high) } else { (high, low) };
    let sigma0 = match (lo.is_finite(), hi.is_finite()) {
        (true, true) => 0.5 * (lo + hi),
        (true, false) => lo,
        (false, true) => hi,
        _ => f64::NAN,
    };
    let known = sigma0_value(cone);
    if lo.is_finite() && hi.is_finite() && !(lo <= known && known <= hi) {
        flags.push(format!(
            "closed-form sigma0 {known} lies outside the estimated bracket [{lo}, {hi}]"
        ));
    }
    Ok(SigmaReport {
        sigma0,
        sigma: sigma0.max(-1.0),
        method: SigmaMethod::Estimated,
        bracket: Some(Bracket { low: lo, high: hi }),
        classes,
        flags,
    })
}

/// Fitted decay rates (all samples, first quarter) for one α.
fn boundary_decay(cone: &ConeModel, alpha: f64, cfg: &McConfig) -> Result<(f64, f64)> {
    let n = cone.dim();
    let e = cone.axis();
    let normal = crate::star::star_point(cone, &e)?;
    let d = n - 1;
    let h = (TAU_HI - TAU_LO) / TAU_BINS as f64;
    let ln_const = sphere_area(d).ln() + h.ln();
    let run = |cfg: &McConfig| -> Result<Vec<McEstimate>> {
        mc::estimate_k(cfg, mc::mix(mc::tag("sigma0"), alpha.to_bits()), TAU_BINS, |rng, _, out| {
            let omega = sampling::hyperplane_direction(rng, &normal.0);
            let r = cone.ray_exit_raw(&e.0, &omega);
            if !r.is_finite() {
                return Err(ConeError::InvalidModel("unbounded section".into()));
            }
            let u = rand::Rng::random::<f64>(rng);
            let mut x = vec![0.0; n];
            for (k, o) in out.iter_mut().enumerate() {
                let tau = TAU_LO + (k as f64 + u) * h;
                let rho = r * (-(-tau).exp_m1());
                for i in 0..n {
                    x[i] = e[i] + rho * omega[i];
                }
                if !cone.contains_raw(&x) {
                    *o = 0.0;
                    continue;
                }
                let ln_v = alpha * ln_delta_raw(cone, &x) + (d as f64 - 1.0) * rho.ln() + r.ln() - tau + ln_const;
                // rescale by the nominal depth so bins stay O(1)
                *o = (ln_v + tau * (1.0 + alpha)).exp();
            }
            Ok(())
        })
    };
    let full = run(cfg)?;
    let quarter = run(&cfg.with_samples((cfg.samples / 4).max(1)))?;
    Ok((fit_decay(&full, alpha), fit_decay(&quarter, alpha)))
}

/// Least-squares decay rate of the bin integrals, undoing the e^{(1+α)τ} rescale.
fn fit_decay(bins: &[McEstimate], alpha: f64) -> f64 {
    let h = (TAU_HI - TAU_LO) / TAU_BINS as f64;
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (k, b) in bins.iter().enumerate() {
        if b.value <= 0.0 {
            continue;
        }
        let t = TAU_LO + (k as f64 + 0.5) * h;
        let y = b.value.ln();
        let rel = (b.stderr / b.value).max(1e-6);
        let w = 1.0 / (rel * rel);
        sw += w;
        sx += w * t;
        sy += w * y;
        sxx += w * t * t;
        sxy += w * t * y;
    }
    let den = sw * sxx - sx * sx;
    if den <= 0.0 {
        return f64::NAN;
    }
    let slope = (sw * sxy - sx * sy) / den;
    (1.0 + alpha) - slope
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn p(v: &[f64]) -> Point {
        Point(v.to_vec())
    }

    #[test]
    fn closed_form_examples() {
        let o2 = ConeModel::orthant(2).unwrap();
        assert!((delta(&o2, &p(&[2.0, 3.0])).unwrap() - 6.0).abs() < 1e-14);
        assert!((phi(&o2, &p(&[2.0, 3.0])).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        let o3 = ConeModel::orthant(3).unwrap();
        assert!((delta(&o3, &p(&[1.0, 1.0, 1.0])).unwrap() - 1.0).abs() < 1e-15);
        let l2 = ConeModel::lorentz(2).unwrap();
        assert!((delta(&l2, &p(&[0.0, 2.0])).unwrap() - 2.0).abs() < 1e-12);
        let l3 = ConeModel::lorentz(3).unwrap();
        let r = phi(&l3, &p(&[0.0, 0.0, 2.0])).unwrap() / phi(&l3, &p(&[0.0, 0.0, 1.0])).unwrap();
        assert!((r - 0.125).abs() < 1e-14);
        assert!(delta(&o2, &p(&[-1.0, 1.0])).is_err());
    }

    #[test]
    fn lorentz2_square_by_grid_count() {
        // ⟨0,(0,2)⟩ = {|y1| < y2 < 2 − |y1|}
        let m = 2000;
        let h = 2.0 / m as f64;
        let mut count = 0usize;
        for i in 0..m {
            for j in 0..m {
                let y1 = -1.0 + (i as f64 + 0.5) * h;
                let y2 = (j as f64 + 0.5) * h;
                if y2 > y1.abs() && 2.0 - y2 > y1.abs() {
                    count += 1;
                }
            }
        }
        let area = count as f64 * h * h;
        let l2 = ConeModel::lorentz(2).unwrap();
        assert!((delta(&l2, &p(&[0.0, 2.0])).unwrap() - area).abs() < 5e-3);
    }

    #[test]
    fn delta_mc_examples() {
        let cfg = McConfig::new(100_000, 11);
        let o2 = ConeModel::orthant(2).unwrap();
        let e = delta_mc(&o2, &p(&[2.0, 3.0]), &cfg).unwrap();
        assert!(e.agrees(6.0, 0.0, 3.0) && e.stderr == 0.0);
        let l2 = ConeModel::lorentz(2).unwrap();
        let e = delta_mc(&l2, &p(&[0.0, 2.0]), &cfg).unwrap();
        assert!(e.agrees(2.0, 0.0, 3.0), "{e:?}");
        let a = Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let s = ConeModel::simplicial(a).unwrap();
        let e = delta_mc(&s, &p(&[2.0, 1.0]), &cfg).unwrap();
        assert!(e.agrees(1.0, 0.0, 3.0), "{e:?}");
    }

    #[test]
    fn phi_mc_examples() {
        let cfg = McConfig::new(100_000, 12);
        let o2 = ConeModel::orthant(2).unwrap();
        let e = phi_mc(&o2, &p(&[2.0, 3.0]), &cfg).unwrap();
        assert!(e.agrees(1.0 / 6.0, 0.0, 3.0), "{e:?}");
        let o1 = ConeModel::orthant(1).unwrap();
        assert!(phi_mc(&o1, &p(&[1.0]), &cfg).unwrap().agrees(1.0, 0.0, 3.0));
        let l2 = ConeModel::lorentz(2).unwrap();
        let x = p(&[0.3, 1.4]);
        let e = phi_mc(&l2, &x, &cfg).unwrap();
        assert!(e.agrees(phi(&l2, &x).unwrap(), 0.0, 3.0), "{e:?}");
    }

    #[test]
    fn sigma_closed_forms() {
        let s = sigma0(&ConeModel::orthant(2).unwrap());
        assert_eq!((s.sigma0, s.sigma), (-1.0, -1.0));
        let s = sigma0(&ConeModel::lorentz(3).unwrap());
        assert!((s.sigma0 + 2.0 / 3.0).abs() < 1e-15 && s.sigma == s.sigma0);
        let s = sigma0(&ConeModel::orthant(1).unwrap());
        assert!(s.sigma0 == f64::NEG_INFINITY && s.sigma == -1.0);
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.contains("\"-inf\""), "{json}");
    }

    #[test]
    fn zero_alpha_is_convergent() {
        let cfg = McConfig::new(4_000, 3);
        for cone in [ConeModel::orthant(3).unwrap(), ConeModel::lorentz(3).unwrap()] {
            let r = sigma0_estimate(&cone, &[0.0], &cfg).unwrap();
            assert!(!r.classes[0].divergent, "{r:?}");
        }
    }
}
