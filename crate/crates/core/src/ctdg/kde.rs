//! Gaussian kernel density estimators used to draw adversarial timestamps and
//! edge features that follow the observed data.
//!
//! Support points are min-max normalized to `[0, 1]` before fitting so a single
//! bandwidth is meaningful regardless of the raw time scale. A constant column
//! normalizes to `0.5` and maps back to its constant.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::TemporalInteraction;
use crate::error::{Error, Result};

pub const DEFAULT_BANDWIDTH: f64 = 0.1;

/// Proposal cap per accepted draw in [`KdeSampler::sample_times_in`].
pub const MAX_PROPOSALS: usize = 1000;

/// One-dimensional Gaussian KDE over normalized support points.
#[derive(Debug, Clone, PartialEq)]
pub struct Kde1d {
    support: Vec<f64>,
    bandwidth: f64,
    lo: f64,
    span: f64,
}

impl Kde1d {
    /// Fits on raw values, normalizing by their own min/max.
    pub fn fit(values: &[f64], bandwidth: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("KDE needs at least one support point"));
        }
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self::with_range(values, lo, hi, bandwidth)
    }

    /// Fits on raw values normalized against an explicit `[lo, hi]` range.
    pub fn with_range(values: &[f64], lo: f64, hi: f64, bandwidth: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("KDE needs at least one support point"));
        }
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::invalid(format!("bandwidth must be positive, got {bandwidth}")));
        }
        if !(hi >= lo) {
            return Err(Error::invalid(format!("empty normalization range [{lo}, {hi}]")));
        }
        let span = hi - lo;
        let support = values
            .iter()
            .map(|&x| if span > 0.0 { (x - lo) / span } else { 0.5 })
            .collect();
        Ok(Self {
            support,
            bandwidth,
            lo,
            span,
        })
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn normalize(&self, raw: f64) -> f64 {
        if self.span > 0.0 {
            (raw - self.lo) / self.span
        } else {
            0.5
        }
    }

    pub fn denormalize(&self, x: f64) -> f64 {
        if self.span > 0.0 {
            self.lo + x * self.span
        } else {
            self.lo
        }
    }

    /// Draw in normalized units.
    pub fn sample_normalized<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let s = self.support[rng.random_range(0..self.support.len())];
        let z: f64 = rng.sample(StandardNormal);
        s + self.bandwidth * z
    }

    pub fn sample_raw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.denormalize(self.sample_normalized(rng))
    }
}

/// A time KDE with its own seeded generator. One sampler per thread.
#[derive(Debug, Clone)]
pub struct KdeSampler {
    kde: Kde1d,
    rng_seed: u64,
    rng: ChaCha8Rng,
}

impl KdeSampler {
    pub fn new(kde: Kde1d, rng_seed: u64) -> Self {
        Self {
            kde,
            rng_seed,
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
        }
    }

    pub fn kde(&self) -> &Kde1d {
        &self.kde
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn reseed(&mut self, seed: u64) {
        self.rng_seed = seed;
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    pub fn sample(&mut self) -> f64 {
        self.kde.sample_raw(&mut self.rng)
    }

    /// `k` sorted raw timestamps from the KDE restricted to `[lo, hi]`,
    /// by rejection. A draw that fails [`MAX_PROPOSALS`] times falls back
    /// to uniform on the interval.
    pub fn sample_times_in(&mut self, k: usize, lo: f64, hi: f64) -> Result<Vec<f64>> {
        if !(lo <= hi) {
            return Err(Error::invalid(format!("empty interval [{lo}, {hi}]")));
        }
        if lo == hi {
            return Ok(vec![lo; k]);
        }
        let mut out = Vec::with_capacity(k);
        let mut fallbacks = 0usize;
        for _ in 0..k {
            let mut accepted = None;
            for _ in 0..MAX_PROPOSALS {
                let t = self.kde.sample_raw(&mut self.rng);
                if (lo..=hi).contains(&t) {
                    accepted = Some(t);
                    break;
                }
            }
            let t = accepted.unwrap_or_else(|| {
                fallbacks += 1;
                self.rng.random_range(lo..=hi)
            });
            out.push(t);
        }
        if fallbacks > 0 {
            log::warn!(
                "time KDE rejection exhausted {MAX_PROPOSALS} proposals on [{lo}, {hi}] for {fallbacks}/{k} draws; used uniform fallback"
            );
        }
        out.sort_by(f64::total_cmp);
        Ok(out)
    }
}

/// Fits the time KDE on the given edges, normalizing by their time range.
pub fn fit_time_kde(edges: &[TemporalInteraction], bandwidth: f64, seed: u64) -> Result<KdeSampler> {
    if edges.is_empty() {
        return Err(Error::Empty);
    }
    let ts: Vec<f64> = edges.iter().map(|e| e.t).collect();
    Ok(KdeSampler::new(Kde1d::fit(&ts, bandwidth)?, seed))
}

/// Independent per-dimension KDEs over edge features.
#[derive(Debug, Clone)]
pub struct FeatureKde {
    dims: Vec<Kde1d>,
    rng: ChaCha8Rng,
}

impl FeatureKde {
    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn columns(&self) -> &[Kde1d] {
        &self.dims
    }

    pub fn sample(&mut self) -> Vec<f64> {
        let rng = &mut self.rng;
        self.dims.iter().map(|k| k.sample_raw(rng)).collect()
    }
}

pub fn fit_feature_kde(
    edges: &[TemporalInteraction],
    bandwidth: f64,
    seed: u64,
) -> Result<FeatureKde> {
    let first = edges
        .first()
        .ok_or(Error::Empty)?
        .features
        .as_ref()
        .ok_or_else(|| Error::invalid("edges carry no features"))?;
    let d = first.len();
    let mut cols = vec![Vec::with_capacity(edges.len()); d];
    for e in edges {
        let f = e
            .features
            .as_ref()
            .ok_or_else(|| Error::invalid("edges carry no features"))?;
        if f.len() != d {
            return Err(Error::Dimension {
                expected: d,
                actual: f.len(),
            });
        }
        for (c, &x) in cols.iter_mut().zip(f) {
            c.push(x);
        }
    }
    let dims = cols
        .iter()
        .map(|c| Kde1d::fit(c, bandwidth))
        .collect::<Result<_>>()?;
    Ok(FeatureKde {
        dims,
        rng: ChaCha8Rng::seed_from_u64(seed),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_bandwidth_rejected() {
        assert!(Kde1d::fit(&[1.0], 0.0).is_err());
        assert!(fit_time_kde(&[], 0.1, 0).is_err());
    }

    #[test]
    fn single_point_is_one_gaussian() {
        let kde = Kde1d::with_range(&[5.0], 0.0, 10.0, 0.1).unwrap();
        let mut s = KdeSampler::new(kde, 7);
        let n = 20_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| {
                let x = s.sample();
                s.kde().normalize(x)
            })
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 0.5).abs() < 0.005, "mean {mean}");
        assert!((var.sqrt() - 0.1).abs() < 0.005, "sd {}", var.sqrt());
    }

    #[test]
    fn sample_times_in_edge_cases() {
        let mut s = KdeSampler::new(Kde1d::fit(&[0.0, 1.0, 2.0], 0.1).unwrap(), 1);
        assert!(s.sample_times_in(0, 0.0, 1.0).unwrap().is_empty());
        assert_eq!(s.sample_times_in(5, 3.0, 3.0).unwrap(), vec![3.0; 5]);
        assert!(s.sample_times_in(1, 2.0, 1.0).is_err());
    }

    #[test]
    fn unreachable_interval_falls_back_to_uniform() {
        let mut s = KdeSampler::new(Kde1d::fit(&[0.0, 1.0], 0.01).unwrap(), 3);
        let ts = s.sample_times_in(4, 100.0, 101.0).unwrap();
        assert_eq!(ts.len(), 4);
        assert!(ts.iter().all(|t| (100.0..=101.0).contains(t)));
    }

    #[test]
    fn constant_feature_column() {
        let edges: Vec<_> = (0..10)
            .map(|i| TemporalInteraction::new(0, 1, i as f64).with_features(vec![3.5, i as f64]))
            .collect();
        let mut f = fit_feature_kde(&edges, 0.1, 0).unwrap();
        assert_eq!(f.dim(), 2);
        let col = &f.columns()[0];
        assert_eq!(col.normalize(3.5), 0.5);
        assert_eq!(col.denormalize(0.5), 3.5);
        assert!(f.sample().iter().all(|x| x.is_finite()));
    }

    #[test]
    fn feature_kde_requires_features() {
        let edges = vec![TemporalInteraction::new(0, 1, 0.0)];
        assert!(fit_feature_kde(&edges, 0.1, 0).is_err());
    }

    #[test]
    fn feature_kde_dimension_172() {
        let edges: Vec<_> = (0..5)
            .map(|i| TemporalInteraction::new(0, 1, i as f64).with_features(vec![i as f64; 172]))
            .collect();
        let mut f = fit_feature_kde(&edges, 0.1, 0).unwrap();
        assert_eq!(f.sample().len(), 172);
    }
}
