//! Scenario construction: residuals from load traces, synthetic scenario
//! sets and support boxes. File parsing lives in the std crate.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};

use crate::error::{invalid, Result};
use crate::model::{CustomerId, ScenarioSet, SupportBox};

/// Default outward scaling of the empirical support.
pub const DEFAULT_MARGIN: f64 = 1.1;
/// Truncation of the normal draws, in standard deviations.
pub const TRUNCATION: f64 = 4.0;

/// Load samples `(timestamp seconds, kW)` for one customer.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSeries {
    pub customer: CustomerId,
    pub samples: Vec<(i64, f64)>,
}

impl TraceSeries {
    /// Checks strictly increasing, uniformly spaced timestamps.
    pub fn new(customer: CustomerId, samples: Vec<(i64, f64)>) -> Result<Self> {
        let step = samples.windows(2).next().map(|w| w[1].0 - w[0].0);
        for w in samples.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(invalid("non-monotone timestamps"));
            }
            if Some(w[1].0 - w[0].0) != step {
                return Err(invalid("non-uniform sample spacing"));
            }
        }
        Ok(Self { customer, samples })
    }

    pub fn loads(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.1)
    }
}

/// Forecast errors against the phase-mean forecast
/// `f(t) = mean of loads at t mod period`. A trailing partial period is
/// dropped.
pub fn build_residuals(series: &TraceSeries, period: usize) -> Result<Vec<f64>> {
    if period == 0 {
        return Err(invalid("period must be at least 1"));
    }
    let len = series.samples.len() / period * period;
    if len == 0 {
        return Err(invalid("series shorter than one period"));
    }
    let loads: Vec<f64> = series.loads().take(len).collect();
    let cycles = (len / period) as f64;
    let mut mean = vec![0.0; period];
    for (t, l) in loads.iter().enumerate() {
        mean[t % period] += l;
    }
    mean.iter_mut().for_each(|m| *m /= cycles);
    Ok(loads.iter().enumerate().map(|(t, l)| l - mean[t % period]).collect())
}

/// Parameters of the synthetic scenario generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub n: usize,
    pub t: usize,
    pub sigma_delta: f64,
    pub sigma_r: f64,
    pub a_mean: f64,
    pub a_rsd: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 300,
            t: 1000,
            sigma_delta: 1.5,
            sigma_r: 5.0,
            a_mean: 1.0,
            a_rsd: 0.3,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.t == 0 {
            return Err(invalid("n and T must be at least 1"));
        }
        if !(self.sigma_delta >= 0.0 && self.sigma_r >= 0.0)
            || !self.sigma_delta.is_finite()
            || !self.sigma_r.is_finite()
        {
            return Err(invalid("standard deviations must be finite and nonnegative"));
        }
        if !(self.a_mean > 0.0 && self.a_mean.is_finite()) {
            return Err(invalid("a_mean must be positive"));
        }
        if !(self.a_rsd >= 0.0 && self.a_rsd.is_finite()) {
            return Err(invalid("a_rsd must be nonnegative"));
        }
        Ok(())
    }
}

fn truncated_normal<R: Rng>(rng: &mut R, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= TRUNCATION {
            return sigma * z;
        }
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Draws a uniformly weighted scenario set. Each customer owns an
/// independent RNG stream, so output does not depend on generation order.
pub fn synthesize(cfg: &SynthConfig) -> Result<ScenarioSet> {
    cfg.validate()?;
    let (n, t_len) = (cfg.n, cfg.t);
    let mut rng = stream(cfg.seed, 0);
    let r: Vec<f64> = (0..t_len).map(|_| truncated_normal(&mut rng, cfg.sigma_r)).collect();
    let mut delta = vec![0.0; n * t_len];
    let mut a = vec![cfg.a_mean; n * t_len];
    let lognormal = if cfg.a_rsd > 0.0 {
        let s2 = libm::log1p(cfg.a_rsd * cfg.a_rsd);
        let mu = libm::log(cfg.a_mean) - 0.5 * s2;
        Some(LogNormal::new(mu, libm::sqrt(s2)).map_err(|_| invalid("bad lognormal parameters"))?)
    } else {
        None
    };
    for i in 0..n {
        let mut rng = stream(cfg.seed, i as u64 + 1);
        for t in 0..t_len {
            delta[t * n + i] = truncated_normal(&mut rng, cfg.sigma_delta);
            if let Some(ln) = &lognormal {
                a[t * n + i] = ln.sample(&mut rng);
            }
        }
    }
    ScenarioSet::from_mismatches(n, delta, r, a)
}

fn widen(lo: f64, hi: f64, margin: f64) -> (f64, f64) {
    let lo = if lo < 0.0 { lo * margin } else { lo / margin };
    let hi = if hi > 0.0 { hi * margin } else { hi / margin };
    (lo, hi)
}

/// Empirical bounds of `D` and each `delta_i`, pushed away from zero by
/// `margin`.
pub fn estimate_support(s: &ScenarioSet, margin: f64) -> Result<SupportBox> {
    if !(margin >= 1.0 && margin.is_finite()) {
        return Err(invalid("margin must be at least 1"));
    }
    let n = s.customers();
    if s.is_empty() {
        return Ok(SupportBox::zero(n));
    }
    let fold = |it: &mut dyn Iterator<Item = f64>| {
        it.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)))
    };
    let (dl, dh) = fold(&mut s.d_values().iter().copied());
    let (dl, dh) = widen(dl, dh, margin);
    let mut lo = Vec::with_capacity(n);
    let mut hi = Vec::with_capacity(n);
    for i in 0..n {
        let (l, h) = fold(&mut s.delta_of(i));
        let (l, h) = widen(l, h, margin);
        lo.push(l);
        hi.push(h);
    }
    SupportBox::new(dl, dh, lo, hi)
}
