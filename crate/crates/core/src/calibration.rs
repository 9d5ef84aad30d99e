//! Normalizing constants of the Lorentz cone.
//!
//! Δ(x) = c_n q(x)^{n/2} and φ(x) = k_n q(x)^{−n/2} with q = x_n² − |x'|².
//! The constants are the values at the axis point (0,…,0,1) and are computed
//! by quadrature in polar coordinates around the axis, then cached in
//! memory and, if `CONEKIT_CACHE` names a file, on disk.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_4, PI};
use std::path::PathBuf;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{ConeError, Result};

pub const CACHE_ENV: &str = "CONEKIT_CACHE";
pub const TARGET_ACCURACY: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub constant: f64,
    pub accuracy: f64,
    pub provenance: String,
    /// Guards the file copy against edits and truncation.
    #[serde(default)]
    pub checksum: u64,
}

fn checksum(key: &str, constant: f64, accuracy: f64) -> u64 {
    crate::mc::tag(&format!("{key}|{:016x}|{:016x}", constant.to_bits(), accuracy.to_bits()))
}

fn memory() -> &'static Mutex<BTreeMap<String, CacheEntry>> {
    static CACHE: OnceLock<Mutex<BTreeMap<String, CacheEntry>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(BTreeMap::new()))
}

pub fn cache_path() -> Option<PathBuf> {
    std::env::var_os(CACHE_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
}

/// Surface area of the unit sphere S^{d−1} ⊂ R^d.
pub fn sphere_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    2.0 * PI.powf(h) / gamma(h)
}

/// Volume of the unit ball in R^d.
pub fn ball_volume(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    (h * PI.ln() - ln_gamma(h + 1.0)).exp()
}

fn quad(f: impl Fn(f64) -> f64, a: f64, b: f64) -> Result<(f64, f64)> {
    let out = quadrature::integrate(f, a, b, 1e-14);
    if !out.integral.is_finite() {
        return Err(ConeError::NonFinite);
    }
    Ok((out.integral, out.error_estimate))
}

/// Volume of ⟨0,e⟩: |S^{n−2}|/n ∫_0^{π/4} sin^{n−2}ψ (cosψ + sinψ)^{−n} dψ.
fn compute_delta(n: usize) -> Result<CacheEntry> {
    let m = n as f64;
    let (v, err) = quad(
        |t: f64| t.sin().powi(n as i32 - 2) * (t.cos() + t.sin()).powf(-m),
        0.0,
        FRAC_PI_4,
    )?;
    let s = sphere_area(n - 1) / m;
    Ok(CacheEntry {
        constant: s * v,
        accuracy: (s * err).max(f64::EPSILON * s * v),
        provenance: "double-exponential quadrature, polar angle about the axis".into(),
        checksum: 0,
    })
}

/// ∫_{V*} e^{−y_n} dy = Γ(n)|S^{n−2}| ∫_0^{π/4} sin^{n−2}ψ cos^{−n}ψ dψ.
fn compute_phi(n: usize) -> Result<CacheEntry> {
    let m = n as f64;
    let (v, err) = quad(
        |t: f64| t.sin().powi(n as i32 - 2) * t.cos().powf(-m),
        0.0,
        FRAC_PI_4,
    )?;
    let s = sphere_area(n - 1) * gamma(m);
    Ok(CacheEntry {
        constant: s * v,
        accuracy: (s * err).max(f64::EPSILON * s * v),
        provenance: "double-exponential quadrature, polar angle about the axis".into(),
        checksum: 0,
    })
}

fn valid(e: &CacheEntry) -> bool {
    e.constant.is_finite() && e.constant > 0.0 && e.accuracy.is_finite() && e.accuracy <= TARGET_ACCURACY
}

fn load_file(path: &PathBuf) -> BTreeMap<String, CacheEntry> {
    // the cache is derived data: anything unreadable is recomputed
    std::fs::read_to_string(path)
        .ok()
        .and_then(|s| serde_json::from_str(&s).ok())
        .unwrap_or_default()
}

fn store_file(path: &PathBuf, key: &str, entry: &CacheEntry) {
    let mut all = load_file(path);
    all.insert(key.to_string(), entry.clone());
    if let Ok(s) = serde_json::to_string_pretty(&all) {
        let _ = std::fs::write(path, s);
    }
}

fn lookup(key: String, compute: impl FnOnce() -> Result<CacheEntry>) -> Result<f64> {
    let mut mem = memory().lock().unwrap();
    if let Some(e) = mem.get(&key) {
        return Ok(e.constant);
    }
    let path = cache_path();
    if let Some(p) = &path {
        let intact = |e: &&CacheEntry| valid(e) && e.checksum == checksum(&key, e.constant, e.accuracy);
        if let Some(e) = load_file(p).get(&key).filter(intact) {
            mem.insert(key, e.clone());
            return Ok(e.constant);
        }
    }
    let mut e = compute()?;
    e.checksum = checksum(&key, e.constant, e.accuracy);
    if !valid(&e) {
        return Err(ConeError::InvalidModel(format!(
            "calibration of {key} reached accuracy {:e}, target {TARGET_ACCURACY:e}",
            e.accuracy
        )));
    }
    if let Some(p) = &path {
        store_file(p, &key, &e);
    }
    let c = e.constant;
    mem.insert(key, e);
    Ok(c)
}

/// c_n = Δ_{lorentz(n)}(0,…,0,1).
pub fn lorentz_delta_constant(n: usize) -> Result<f64> {
    lookup(format!("lorentz({n})/delta"), || compute_delta(n))
}

/// k_n = φ_{lorentz(n)}(0,…,0,1).
pub fn lorentz_phi_constant(n: usize) -> Result<f64> {
    lookup(format!("lorentz({n})/phi"), || compute_phi(n))
}

/// Drop the in-process cache (the next lookup rereads the file or recomputes).
pub fn clear_memory_cache() {
    memory().lock().unwrap().clear();
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_match_elementary_forms() {
        for n in 2..=8 {
            // ⟨0,e⟩ is a double cone over a ball of radius 1/2
            let c = ball_volume(n - 1) / (n as f64 * 2f64.powi(n as i32 - 1));
            let k = ball_volume(n - 1) * gamma(n as f64);
            assert!((compute_delta(n).unwrap().constant / c - 1.0).abs() < 1e-12, "n={n}");
            assert!((compute_phi(n).unwrap().constant / k - 1.0).abs() < 1e-12, "n={n}");
        }
        assert!((compute_delta(2).unwrap().constant - 0.5).abs() < 1e-12);
    }
}
