//! Random sampling on cones: cone intervals, the unit section, an
//! exponential envelope on the cone, and a heavy-tailed global chart.
//!
//! Every sampler takes the RNG explicitly; determinism comes from the
//! stream layout in [`crate::mc`].

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal, StudentT};
use statrs::function::gamma::ln_gamma;

use crate::calibration::{ball_volume, sphere_area};
use crate::charfn;
use crate::cone::{ConeKind, ConeModel};
use crate::error::{ConeError, Result};
use crate::linalg::{dot, norm, Point};
use crate::mc::McRng;

/// Uniform on (0,1].
#[inline]
pub(crate) fn unit(rng: &mut McRng) -> f64 {
    1.0 - rng.random::<f64>()
}

pub(crate) fn normal_vec(rng: &mut McRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Uniform on the unit ball of R^d.
fn unit_ball(rng: &mut McRng, d: usize) -> Vec<f64> {
    if d == 0 {
        return Vec::new();
    }
    let mut g = normal_vec(rng, d);
    let r = norm(&g);
    let s = unit(rng).powf(1.0 / d as f64) / r;
    g.iter_mut().for_each(|v| *v *= s);
    g
}

/// Uniform point of ⟨0,x⟩. Assumes x ∈ V.
pub fn sample_interval(cone: &ConeModel, x: &Point, rng: &mut McRng, max_rejections: u64) -> Result<Point> {
    cone.require(x)?;
    let mut out = vec![0.0; cone.dim()];
    interval_raw(cone, &x.0, rng, max_rejections, &mut out)?;
    Ok(Point(out))
}

/// As [`sample_interval`], also returning the number of proposals drawn.
pub fn sample_interval_counted(
    cone: &ConeModel,
    x: &Point,
    rng: &mut McRng,
    max_rejections: u64,
) -> Result<(Point, u64)> {
    cone.require(x)?;
    let mut out = vec![0.0; cone.dim()];
    let n = interval_raw(cone, &x.0, rng, max_rejections, &mut out)?;
    Ok((Point(out), n))
}

pub(crate) fn interval_raw(
    cone: &ConeModel,
    x: &[f64],
    rng: &mut McRng,
    max_rejections: u64,
    out: &mut [f64],
) -> Result<u64> {
    match cone.kind() {
        ConeKind::Orthant => {
            for (o, xi) in out.iter_mut().zip(x) {
                *o = rng.random::<f64>() * xi;
            }
            Ok(1)
        }
        ConeKind::Simplicial { a, a_inv, .. } => {
            let w = a_inv.mul_vec(x);
            let u: Vec<f64> = w.iter().map(|wi| rng.random::<f64>() * wi).collect();
            out.copy_from_slice(&a.mul_vec(&u));
            Ok(1)
        }
        ConeKind::Lorentz { .. } => {
            // ⟨0,e⟩ = {|y'| < min(y_n, 1−y_n)} inside [−½,½]^{n−1}×[0,1],
            // carried to ⟨0,x⟩ by an automorphism with g(e) = x
            let n = x.len();
            let mut y = vec![0.0; n];
            let mut tries = 0;
            loop {
                tries += 1;
                for v in y[..n - 1].iter_mut() {
                    *v = rng.random::<f64>() - 0.5;
                }
                y[n - 1] = rng.random::<f64>();
                let r = norm(&y[..n - 1]);
                if r < y[n - 1] && r < 1.0 - y[n - 1] {
                    break;
                }
                if tries >= max_rejections {
                    return Err(ConeError::RejectionBudget {
                        budget: max_rejections,
                        context: format!("interval sampling in {}", cone.label()),
                    });
                }
            }
            let g = cone.automorphism_raw(x);
            out.copy_from_slice(&g.mul_vec(&y));
            Ok(tries)
        }
        ConeKind::Product(_) => {
            let mut tries = 0;
            for (o, f) in cone.blocks() {
                tries += interval_raw(f, &x[o..o + f.dim()], rng, max_rejections, &mut out[o..o + f.dim()])?;
            }
            Ok(tries)
        }
    }
}

/// Point approximately uniform on V ∩ S^{n−1}, by rejection from the sphere.
pub fn sample_section(cone: &ConeModel, rng: &mut McRng, max_rejections: u64) -> Result<Point> {
    sample_section_counted(cone, rng, max_rejections).map(|(p, _)| p)
}

pub fn sample_section_counted(cone: &ConeModel, rng: &mut McRng, max_rejections: u64) -> Result<(Point, u64)> {
    let n = cone.dim();
    for tries in 1..=max_rejections {
        let mut g = normal_vec(rng, n);
        let r = norm(&g);
        if r == 0.0 {
            continue;
        }
        g.iter_mut().for_each(|v| *v /= r);
        if cone.contains_raw(&g) {
            return Ok((Point(g), tries));
        }
    }
    Err(ConeError::RejectionBudget {
        budget: max_rejections,
        context: format!("section sampling in {}", cone.label()),
    })
}

/// A sample from ⟨0,x⟩ ∩ ⟨0,b⟩ drawn uniformly from a covering interval of
/// volume `volume`; `inside` says whether it lies in the meet.
pub(crate) struct MeetSample {
    pub volume: f64,
    pub inside: bool,
}

/// Uniform sample for integrating over ⟨0,x⟩ ∩ ⟨0,b⟩: exact meet for
/// lattice-ordered models, smaller interval plus indicator otherwise.
pub(crate) fn meet_raw(
    cone: &ConeModel,
    x: &[f64],
    b: &[f64],
    rng: &mut McRng,
    max_rejections: u64,
    out: &mut [f64],
) -> Result<MeetSample> {
    match cone.kind() {
        ConeKind::Orthant => {
            let mut vol = 1.0;
            for i in 0..x.len() {
                let m = x[i].min(b[i]);
                vol *= m;
                out[i] = rng.random::<f64>() * m;
            }
            Ok(MeetSample { volume: vol, inside: true })
        }
        ConeKind::Simplicial { a, a_inv, det } => {
            let wx = a_inv.mul_vec(x);
            let wb = a_inv.mul_vec(b);
            let mut vol = det.abs();
            let u: Vec<f64> = wx
                .iter()
                .zip(&wb)
                .map(|(p, q)| {
                    let m = p.min(*q);
                    vol *= m;
                    rng.random::<f64>() * m
                })
                .collect();
            out.copy_from_slice(&a.mul_vec(&u));
            Ok(MeetSample { volume: vol, inside: true })
        }
        ConeKind::Lorentz { .. } => {
            let (small, other) = if charfn::ln_delta_raw(cone, x) <= charfn::ln_delta_raw(cone, b) {
                (x, b)
            } else {
                (b, x)
            };
            interval_raw(cone, small, rng, max_rejections, out)?;
            let diff: Vec<f64> = other.iter().zip(out.iter()).map(|(o, y)| o - y).collect();
            Ok(MeetSample {
                volume: charfn::ln_delta_raw(cone, small).exp(),
                inside: cone.contains_raw(&diff),
            })
        }
        ConeKind::Product(_) => {
            let mut vol = 1.0;
            let mut inside = true;
            for (o, f) in cone.blocks() {
                let r = o..o + f.dim();
                let s = meet_raw(f, &x[r.clone()], &b[r.clone()], rng, max_rejections, &mut out[r])?;
                vol *= s.volume;
                inside &= s.inside;
            }
            Ok(MeetSample { volume: vol, inside })
        }
    }
}

/// Exponential envelope on the closure of `cone`: density proportional to
/// e^{−s·w·y} up to the cone's geometry, for a rate point w in the dual cone.
/// Writes the sample to `out` and returns its log density.
pub(crate) fn exp_envelope_raw(cone: &ConeModel, w: &[f64], shrink: f64, rng: &mut McRng, out: &mut [f64]) -> f64 {
    match cone.kind() {
        ConeKind::Orthant => {
            let mut lq = 0.0;
            for (o, wi) in out.iter_mut().zip(w) {
                let lam = shrink * wi;
                let e: f64 = Exp1.sample(rng);
                *o = e / lam;
                lq += lam.ln() - e;
            }
            lq
        }
        ConeKind::Simplicial { a, det, .. } => {
            // y = A u with u ∈ R^n_+ and w·y = (Aᵀw)·u
            let rates = a.transpose().mul_vec(w);
            let mut lq = -det.abs().ln();
            let u: Vec<f64> = rates
                .iter()
                .map(|r| {
                    let lam = shrink * r;
                    let e: f64 = Exp1.sample(rng);
                    lq += lam.ln() - e;
                    e / lam
                })
                .collect();
            out.copy_from_slice(&a.mul_vec(&u));
            lq
        }
        ConeKind::Lorentz { .. } => {
            // y_n ~ Gamma(n, λ), y' uniform on the ball of radius y_n;
            // w·y ≥ (w_n − |w'|) y_n on the cone
            let n = w.len();
            let lam = shrink * (w[n - 1] - norm(&w[..n - 1]));
            let t: f64 = Gamma::new(n as f64, 1.0 / lam).unwrap().sample(rng);
            let b = unit_ball(rng, n - 1);
            for i in 0..n - 1 {
                out[i] = t * b[i];
            }
            out[n - 1] = t;
            n as f64 * lam.ln() - lam * t - ln_gamma(n as f64) - ball_volume(n - 1).ln()
        }
        ConeKind::Product(_) => {
            let mut lq = 0.0;
            for (o, f) in cone.blocks() {
                let r = o..o + f.dim();
                lq += exp_envelope_raw(f, &w[r.clone()], shrink, rng, &mut out[r]);
            }
            lq
        }
    }
}

/// Degrees of freedom and scale of the Student-t proposal in chart coordinates.
pub(crate) const CHART_NU: f64 = 3.0;
pub(crate) const CHART_SCALE: f64 = 1.5;

fn t_ln_pdf(z: f64) -> f64 {
    let nu = CHART_NU;
    let s = CHART_SCALE;
    ln_gamma((nu + 1.0) / 2.0)
        - ln_gamma(nu / 2.0)
        - 0.5 * (nu * std::f64::consts::PI).ln()
        - s.ln()
        - (nu + 1.0) / 2.0 * (1.0 + (z / s).powi(2) / nu).ln()
}

/// Global sampler on V in logarithmic chart coordinates centred at c ∈ V.
/// The proposal has polynomial tails in the log scale, so integrands with
/// power behaviour at 0, ∞ and ∂V have finite-variance weights.
/// Writes the sample to `out` and returns its log density; +∞ (weight 0)
/// when rounding put the point on the boundary.
pub(crate) fn chart_raw(cone: &ConeModel, c: &[f64], rng: &mut McRng, out: &mut [f64]) -> f64 {
    let t = StudentT::new(CHART_NU).unwrap();
    let mut draw = |lq: &mut f64| {
        let z = CHART_SCALE * t.sample(rng);
        *lq += t_ln_pdf(z);
        z
    };
    match cone.kind() {
        ConeKind::Orthant => {
            let mut lq = 0.0;
            let mut lj = 0.0;
            for (o, ci) in out.iter_mut().zip(c) {
                let z = draw(&mut lq);
                *o = ci * z.exp();
                lj += o.ln();
            }
            lq - lj
        }
        ConeKind::Simplicial { a, a_inv, det } => {
            let wc = a_inv.mul_vec(c);
            let mut lq = 0.0;
            let mut lj = det.abs().ln();
            let u: Vec<f64> = wc
                .iter()
                .map(|wi| {
                    let v = wi * draw(&mut lq).exp();
                    lj += v.ln();
                    v
                })
                .collect();
            out.copy_from_slice(&a.mul_vec(&u));
            lq - lj
        }
        ConeKind::Lorentz { .. } => {
            // a = y_n − |y'| and r = |y'| on log scales, y' = rω with ω
            // uniform on S^{n−2}; dy = r^{n−1}·a dz_a dz_r dω. Near ∂V the
            // weight of Δ^s behaves like a^{sn/2+1}, square integrable for s > σ.
            let n = c.len();
            let mut lq = 0.0;
            let a = draw(&mut lq).exp();
            let r = 0.5 * draw(&mut lq).exp();
            let mut w = normal_vec(rng, n - 1);
            let wn = norm(&w);
            w.iter_mut().for_each(|v| *v *= r / wn);
            let mut y = w;
            y.push(a + r);
            let lj = (n - 1) as f64 * r.ln() + a.ln();
            let g = cone.automorphism_raw(c);
            out.copy_from_slice(&g.mul_vec(&y));
            if !cone.contains_raw(out) {
                // a below round-off: the point is numerically on ∂V
                return f64::INFINITY;
            }
            // |det g| = q(c)^{n/2}
            let qc = (c[n - 1] - norm(&c[..n - 1])) * (c[n - 1] + norm(&c[..n - 1]));
            lq - sphere_area(n - 1).ln() - lj - n as f64 / 2.0 * qc.ln()
        }
        ConeKind::Product(_) => {
            let mut lq = 0.0;
            for (o, f) in cone.blocks() {
                let r = o..o + f.dim();
                lq += chart_raw(f, &c[r.clone()], rng, &mut out[r]);
            }
            lq
        }
    }
}

/// Proposal distributions on V with known log density.
#[derive(Clone, Debug)]
pub(crate) enum Proposal {
    /// uniform on ⟨0,b⟩
    Uniform { b: Vec<f64>, ln_vol: f64 },
    /// exponential envelope at rate w ∈ V*
    Envelope { rate: Vec<f64>, shrink: f64 },
    /// logarithmic chart centred at c ∈ V
    Chart { centre: Vec<f64> },
}

impl Proposal {
    pub(crate) fn uniform(cone: &ConeModel, b: &[f64]) -> Self {
        Proposal::Uniform {
            b: b.to_vec(),
            ln_vol: charfn::ln_delta_raw(cone, b),
        }
    }

    /// Draw into `out`; returns the log density, +∞ for a zero-weight draw.
    pub(crate) fn draw(&self, cone: &ConeModel, rng: &mut McRng, max_rejections: u64, out: &mut [f64]) -> Result<f64> {
        Ok(match self {
            Proposal::Uniform { b, ln_vol } => {
                interval_raw(cone, b, rng, max_rejections, out)?;
                -ln_vol
            }
            Proposal::Envelope { rate, shrink } => {
                let lq = exp_envelope_raw(cone, rate, *shrink, rng, out);
                if cone.contains_raw(out) {
                    lq
                } else {
                    f64::INFINITY
                }
            }
            Proposal::Chart { centre } => chart_raw(cone, centre, rng, out),
        })
    }
}

/// A random point of V at moderate distance from ∂V, for invariant checks:
/// log-normal scale `spread`, angular position away from the boundary.
pub fn random_point(cone: &ConeModel, rng: &mut McRng, spread: f64) -> Point {
    let mut out = vec![0.0; cone.dim()];
    random_point_raw(cone, rng, spread, &mut out);
    Point(out)
}

fn random_point_raw(cone: &ConeModel, rng: &mut McRng, spread: f64, out: &mut [f64]) {
    let logn = |rng: &mut McRng| {
        let z: f64 = StandardNormal.sample(rng);
        (spread * z).exp()
    };
    match cone.kind() {
        ConeKind::Orthant => out.iter_mut().for_each(|o| *o = logn(rng)),
        ConeKind::Simplicial { a, .. } => {
            let u: Vec<f64> = (0..out.len()).map(|_| logn(rng)).collect();
            out.copy_from_slice(&a.mul_vec(&u));
        }
        ConeKind::Lorentz { .. } => {
            let n = out.len();
            let t = logn(rng);
            let b = unit_ball(rng, n - 1);
            for i in 0..n - 1 {
                out[i] = 0.9 * t * b[i];
            }
            out[n - 1] = t;
        }
        ConeKind::Product(_) => {
            for (o, f) in cone.blocks() {
                random_point_raw(f, rng, spread, &mut out[o..o + f.dim()]);
            }
        }
    }
}

/// Bounding box of ⟨0,x⟩ as (low, high) corners.
pub(crate) fn interval_bbox(cone: &ConeModel, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    match cone.kind() {
        ConeKind::Orthant => (vec![0.0; x.len()], x.to_vec()),
        ConeKind::Lorentz { .. } => {
            let n = x.len();
            let xn = x[n - 1];
            let mut lo: Vec<f64> = x.iter().map(|v| (v - xn) / 2.0).collect();
            let mut hi: Vec<f64> = x.iter().map(|v| (v + xn) / 2.0).collect();
            lo[n - 1] = 0.0;
            hi[n - 1] = xn;
            (lo, hi)
        }
        ConeKind::Simplicial { a, a_inv, .. } => {
            let w = a_inv.mul_vec(x);
            let n = x.len();
            let mut lo = vec![0.0; n];
            let mut hi = vec![0.0; n];
            for i in 0..n {
                for j in 0..n {
                    let v = a.get(i, j) * w[j];
                    if v < 0.0 {
                        lo[i] += v;
                    } else {
                        hi[i] += v;
                    }
                }
            }
            (lo, hi)
        }
        ConeKind::Product(_) => {
            let mut lo = Vec::new();
            let mut hi = Vec::new();
            for (o, f) in cone.blocks() {
                let (l, h) = interval_bbox(f, &x[o..o + f.dim()]);
                lo.extend(l);
                hi.extend(h);
            }
            (lo, hi)
        }
    }
}

/// Unit vector uniform on the sphere of the hyperplane orthogonal to `normal`.
pub(crate) fn hyperplane_direction(rng: &mut McRng, normal: &[f64]) -> Vec<f64> {
    let nn = norm(normal);
    loop {
        let mut g = normal_vec(rng, normal.len());
        let d = dot(&g, normal) / (nn * nn);
        for (gi, ni) in g.iter_mut().zip(normal) {
            *gi -= d * ni;
        }
        let r = norm(&g);
        if r > 1e-12 {
            g.iter_mut().for_each(|v| *v /= r);
            return g;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::stream_rng;

    #[test]
    fn lorentz2_interval_acceptance_is_half() {
        let l2 = ConeModel::lorentz(2).unwrap();
        let x = Point(vec![0.0, 2.0]);
        let mut rng = stream_rng(1, 2, 0);
        let mut total = 0;
        let m = 20_000;
        for _ in 0..m {
            let (y, k) = sample_interval_counted(&l2, &x, &mut rng, 1000).unwrap();
            assert!(l2.in_interval(&Point(vec![0.0, 0.0]), &x, &y).unwrap());
            total += k;
        }
        let rate = m as f64 / total as f64;
        assert!((rate - 0.5).abs() < 0.01, "{rate}");
    }

    #[test]
    fn section_points_are_unit_and_inside() {
        let l3 = ConeModel::lorentz(3).unwrap();
        let mut rng = stream_rng(1, 3, 0);
        for _ in 0..1000 {
            let p = sample_section(&l3, &mut rng, 1000).unwrap();
            assert!((p.norm() - 1.0).abs() < 1e-12 && l3.contains(&p).unwrap());
        }
    }

    #[test]
    fn exhausted_budget_is_an_error() {
        let l3 = ConeModel::lorentz(3).unwrap();
        let mut rng = stream_rng(1, 4, 0);
        // acceptance ~0.15: one try fails quickly
        let failures = (0..100)
            .filter(|_| sample_section(&l3, &mut rng, 1).is_err())
            .count();
        assert!(failures > 50);
    }

    fn chart_mean(cone: &ConeModel, c: &[f64], f: impl Fn(&[f64]) -> f64, m: usize) -> f64 {
        let mut rng = stream_rng(9, 9, 0);
        let mut y = vec![0.0; cone.dim()];
        let mut sum = 0.0;
        for _ in 0..m {
            let lq = chart_raw(cone, c, &mut rng, &mut y);
            if lq.is_infinite() {
                continue;
            }
            assert!(cone.contains_raw(&y));
            sum += f(&y) * (-lq).exp();
        }
        sum / m as f64
    }

    #[test]
    fn chart_weights_integrate_laplace_transforms() {
        // ∫_V e^{−w·y} dy = φ_{V*}(w); self-dual here, so φ_V(w)
        let w = [0.3, 0.2, 1.4];
        let l3 = ConeModel::lorentz(3).unwrap();
        let want = charfn::phi(&l3, &Point(w.to_vec())).unwrap();
        let got = chart_mean(&l3, &[0.4, -0.1, 1.2], |y| (-dot(&w, y)).exp(), 200_000);
        assert!((got / want - 1.0).abs() < 0.02, "{got} vs {want}");

        let l2 = ConeModel::lorentz(2).unwrap();
        let want = charfn::phi(&l2, &Point(vec![0.5, 1.0])).unwrap();
        let got = chart_mean(&l2, &[0.0, 2.0], |y| (-(0.5 * y[0] + y[1])).exp(), 200_000);
        assert!((got / want - 1.0).abs() < 0.02, "{got} vs {want}");

        let o2 = ConeModel::orthant(2).unwrap();
        let got = chart_mean(&o2, &[2.0, 0.5], |y| (-(y[0] + 3.0 * y[1])).exp(), 200_000);
        assert!((got * 3.0 - 1.0).abs() < 0.02, "{got}");
    }
}
