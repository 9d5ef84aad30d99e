//! Deterministic chunked Monte Carlo driver.
//!
//! Samples are grouped into fixed-size chunks. Chunk `c` of an estimator
//! tagged `tag` draws from a ChaCha8 stream keyed by `(seed, tag)` with
//! stream id `c`, so a run is a pure function of the config: results are
//! bit-identical for any thread count, and the first `N` samples of a
//! `4N` run are exactly the `N` run. Per-chunk statistics are reduced in
//! chunk order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ConeError, Result};

pub type McRng = ChaCha8Rng;

/// Growth factor between the N/4 prefix and the full estimate that flags divergence.
pub const DIVERGENCE_RATIO: f64 = 1.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McConfig {
    pub samples: u64,
    pub seed: u64,
    pub chunk: u64,
    pub max_rejections: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            samples: 100_000,
            seed: 0x5eed,
            chunk: 4096,
            max_rejections: 1_000_000,
        }
    }
}

impl McConfig {
    pub fn new(samples: u64, seed: u64) -> Self {
        McConfig {
            samples,
            seed,
            ..McConfig::default()
        }
    }

    pub fn with_samples(self, samples: u64) -> Self {
        McConfig { samples, ..self }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        McConfig { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(ConeError::Config("mc.samples must be >= 1".into()));
        }
        if self.chunk == 0 {
            return Err(ConeError::Config("mc.chunk must be >= 1".into()));
        }
        if self.max_rejections == 0 {
            return Err(ConeError::Config("mc.max_rejections must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub stderr: f64,
    pub samples_used: u64,
    pub diverged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl McEstimate {
    pub fn exact(value: f64) -> Self {
        McEstimate {
            value,
            stderr: 0.0,
            samples_used: 0,
            diverged: false,
            warning: None,
        }
    }

    pub fn scale(mut self, s: f64) -> Self {
        self.value *= s;
        self.stderr *= s.abs();
        self
    }

    /// `value^e` with first-order error propagation.
    pub fn powf(mut self, e: f64) -> Self {
        let v = self.value;
        if v > 0.0 {
            self.value = v.powf(e);
            self.stderr *= (e * v.powf(e - 1.0)).abs();
        } else {
            self.value = 0.0;
            self.stderr = if e > 0.0 { self.stderr.powf(e) } else { f64::INFINITY };
        }
        self
    }

    /// Is `other` within `k` combined standard errors of `self`?
    pub fn agrees(&self, other: f64, other_se: f64, k: f64) -> bool {
        let tol = k * (self.stderr.powi(2) + other_se.powi(2)).sqrt();
        // exact estimators have zero stderr; leave room for rounding
        let floor = 1e-12 * self.value.abs().max(other.abs()).max(1e-300);
        (self.value - other).abs() <= tol + floor
    }

    pub fn relative_error(&self) -> f64 {
        if self.value == 0.0 {
            if self.stderr == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.stderr / self.value.abs()
        }
    }

    pub(crate) fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        self.warning = Some(match self.warning.take() {
            Some(w) => format!("{w}; {msg}"),
            None => msg,
        });
    }
}

/// Running mean/variance (Welford), mergeable.
#[derive(Clone, Copy, Debug, Default)]
pub struct Stats {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
    pub max: f64,
}

impl Stats {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
        if self.n == 1 || x > self.max {
            self.max = x;
        }
    }

    pub fn merge(&mut self, o: &Stats) {
        if o.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *o;
            return;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        let nf = n as f64;
        self.mean += d * o.n as f64 / nf;
        self.m2 += o.m2 + d * d * (self.n as f64) * (o.n as f64) / nf;
        self.max = self.max.max(o.max);
        self.n = n;
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0)
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }

    fn estimate(&self) -> McEstimate {
        McEstimate {
            value: self.mean,
            stderr: self.stderr(),
            samples_used: self.n,
            diverged: false,
            warning: None,
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable 64-bit tag for a named estimator.
pub fn tag(name: &str) -> u64 {
    // FNV-1a; std's hasher is not guaranteed stable across releases
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn mix(a: u64, b: u64) -> u64 {
    splitmix(a ^ splitmix(b))
}

/// RNG for stream `stream` of the estimator keyed `(seed, tag)`.
pub fn stream_rng(seed: u64, tag: u64, stream: u64) -> McRng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, tag));
    rng.set_stream(stream);
    rng
}

/// Per-chunk accumulation of `k` parallel sample components.
fn run_chunks<F>(cfg: &McConfig, tag: u64, k: usize, f: &F) -> Result<Vec<Vec<Stats>>>
where
    F: Fn(&mut McRng, u64, &mut [f64]) -> Result<()> + Sync,
{
    cfg.validate()?;
    let nchunks = cfg.samples.div_ceil(cfg.chunk);
    let per_chunk: Vec<Result<Vec<Stats>>> = (0..nchunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(cfg.seed, tag, c);
            let start = c * cfg.chunk;
            let end = ((c + 1) * cfg.chunk).min(cfg.samples);
            let mut stats = vec![Stats::default(); k];
            let mut buf = vec![0.0; k];
            for i in start..end {
                buf.iter_mut().for_each(|v| *v = 0.0);
                f(&mut rng, i, &mut buf)?;
                for (s, v) in stats.iter_mut().zip(&buf) {
                    if !v.is_finite() {
                        return Err(ConeError::NonFinite);
                    }
                    s.push(*v);
                }
            }
            Ok(stats)
        })
        .collect();
    per_chunk.into_iter().collect()
}

fn reduce(chunks: &[Vec<Stats>], upto: usize, j: usize) -> Stats {
    let mut s = Stats::default();
    for c in &chunks[..upto] {
        s.merge(&c[j]);
    }
    s
}

/// Estimate `E[f]` for `k` jointly sampled components (common random
/// numbers). Each component also gets the divergence check against its
/// own N/4 prefix.
pub fn estimate_k<F>(cfg: &McConfig, tag: u64, k: usize, f: F) -> Result<Vec<McEstimate>>
where
    F: Fn(&mut McRng, u64, &mut [f64]) -> Result<()> + Sync,
{
    let chunks = run_chunks(cfg, tag, k, &f)?;
    let n = chunks.len();
    let quarter = (n / 4).max(1);
    Ok((0..k)
        .map(|j| {
            let full = reduce(&chunks, n, j);
            let mut est = full.estimate();
            if n >= 4 {
                let pre = reduce(&chunks, quarter, j);
                est.diverged = grows(pre.mean, full.mean);
            }
            if dominated(&full) {
                est.diverged = true;
                est.warn("a single sample carries most of the estimate");
            }
            est
        })
        .collect())
}

pub fn estimate<F>(cfg: &McConfig, tag: u64, f: F) -> Result<McEstimate>
where
    F: Fn(&mut McRng, u64) -> Result<f64> + Sync,
{
    let mut v = estimate_k(cfg, tag, 1, |rng, i, out| {
        out[0] = f(rng, i)?;
        Ok(())
    })?;
    Ok(v.pop().unwrap())
}

/// Maximum of `f` over the samples (ess-sup approximation).
pub fn maximum<F>(cfg: &McConfig, tag: u64, f: F) -> Result<McEstimate>
where
    F: Fn(&mut McRng, u64) -> Result<f64> + Sync,
{
    let chunks = run_chunks(cfg, tag, 1, &|rng: &mut McRng, i, out: &mut [f64]| {
        out[0] = f(rng, i)?;
        Ok(())
    })?;
    let n = chunks.len();
    let full = reduce(&chunks, n, 0);
    let mut est = McEstimate {
        value: full.max,
        stderr: 0.0,
        samples_used: full.n,
        diverged: false,
        warning: None,
    };
    if n >= 4 {
        let pre = reduce(&chunks, (n / 4).max(1), 0);
        est.diverged = grows(pre.max, full.max);
    }
    Ok(est)
}

/// Every sample of `f` in stream order, for scans that need the points
/// themselves (the order does not depend on the thread count).
pub fn collect<T, F>(cfg: &McConfig, tag: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut McRng, u64) -> Result<T> + Sync,
{
    cfg.validate()?;
    let nchunks = cfg.samples.div_ceil(cfg.chunk);
    let per_chunk: Vec<Result<Vec<T>>> = (0..nchunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(cfg.seed, tag, c);
            let end = ((c + 1) * cfg.chunk).min(cfg.samples);
            (c * cfg.chunk..end).map(|i| f(&mut rng, i)).collect()
        })
        .collect();
    let mut out = Vec::with_capacity(cfg.samples as usize);
    for c in per_chunk {
        out.extend(c?);
    }
    Ok(out)
}

/// Share of the sum carried by the largest term that marks an
/// infinite-mean estimator even when that term fell in the N/4 prefix.
pub const DOMINANCE_SHARE: f64 = 0.5;

fn dominated(s: &Stats) -> bool {
    let sum = s.mean * s.n as f64;
    s.n >= 1000 && sum > 0.0 && s.max > DOMINANCE_SHARE * sum
}

pub(crate) fn grows(before: f64, after: f64) -> bool {
    before > 0.0 && after > DIVERGENCE_RATIO * before
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn cfg(n: u64) -> McConfig {
        McConfig {
            samples: n,
            seed: 7,
            chunk: 100,
            max_rejections: 10,
        }
    }

    #[test]
    fn uniform_mean() {
        let e = estimate(&cfg(20_000), 1, |r, _| Ok(r.random::<f64>())).unwrap();
        assert!((e.value - 0.5).abs() < 4.0 * e.stderr);
        assert!(!e.diverged);
    }

    #[test]
    fn prefix_streams() {
        let small = run_chunks(&cfg(1000), 3, 1, &|r: &mut McRng, _, o: &mut [f64]| {
            o[0] = r.random();
            Ok(())
        })
        .unwrap();
        let big = run_chunks(&cfg(4000), 3, 1, &|r: &mut McRng, _, o: &mut [f64]| {
            o[0] = r.random();
            Ok(())
        })
        .unwrap();
        assert_eq!(reduce(&small, 10, 0).mean, reduce(&big, 10, 0).mean);
    }

    #[test]
    fn thread_count_does_not_matter() {
        let f = |r: &mut McRng, _| Ok(r.random::<f64>().powi(3));
        let a = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| estimate(&cfg(5000), 9, f).unwrap());
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| estimate(&cfg(5000), 9, f).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn growing_estimate_flags_divergence() {
        let e = estimate(&cfg(40_000), 5, |_, i| Ok(i as f64)).unwrap();
        assert!(e.diverged);
        let e = estimate(&cfg(40_000), 5, |_, _| Ok(1.0)).unwrap();
        assert!(!e.diverged);
    }

    #[test]
    fn dominant_term_flags_divergence() {
        // the largest term sits in the first chunk, so the prefix rule misses it
        let e = estimate(&cfg(40_000), 6, |_, i| Ok(if i == 3 { 1e9 } else { 1.0 })).unwrap();
        assert!(e.diverged);
    }

    #[test]
    fn merge_matches_direct() {
        let xs: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let mut a = Stats::default();
        xs.iter().for_each(|x| a.push(*x));
        let mut b = Stats::default();
        let mut c = Stats::default();
        xs[..17].iter().for_each(|x| b.push(*x));
        xs[17..].iter().for_each(|x| c.push(*x));
        b.merge(&c);
        assert!((a.mean - b.mean).abs() < 1e-14 && (a.m2 - b.m2).abs() < 1e-12);
    }
}
