//! Empirical measures and the statistical comparators used by the suites.

use std::collections::BTreeMap;
use std::ops::Range;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::{Error, Result};

/// A probability law on the nonnegative integers, possibly with mass lumped
/// above a truncation level.
pub trait Measure {
    /// Mass at `k`; meaningful for `k` up to [`Measure::truncation`].
    fn mass(&self, k: u64) -> f64;
    /// Mass strictly above `k`.
    fn mass_above(&self, k: u64) -> f64;
    /// Level above which mass is only known in aggregate, if any.
    fn truncation(&self) -> Option<u64>;
    /// Largest value carrying explicit mass.
    fn max_value(&self) -> u64;
}

impl Measure for [f64] {
    fn mass(&self, k: u64) -> f64 {
        self.get(k as usize).copied().unwrap_or(0.0)
    }

    fn mass_above(&self, k: u64) -> f64 {
        self.iter().skip(k as usize + 1).sum()
    }

    fn truncation(&self) -> Option<u64> {
        None
    }

    fn max_value(&self) -> u64 {
        self.len().saturating_sub(1) as u64
    }
}

/// Histogram of observed counts.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EmpiricalMeasure {
    counts: BTreeMap<u64, u64>,
    total: u64,
}

impl EmpiricalMeasure {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_samples<I: IntoIterator<Item = u64>>(samples: I) -> Self {
        let mut m = Self::new();
        for s in samples {
            m.add(s, 1);
        }
        m
    }

    pub fn add(&mut self, value: u64, multiplicity: u64) {
        if multiplicity == 0 {
            return;
        }
        *self.counts.entry(value).or_insert(0) += multiplicity;
        self.total += multiplicity;
    }

    pub fn merge(&mut self, other: &EmpiricalMeasure) {
        for (&k, &c) in &other.counts {
            self.add(k, c);
        }
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, value: u64) -> u64 {
        self.counts.get(&value).copied().unwrap_or(0)
    }

    pub fn frequency(&self, value: u64) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.count(value) as f64 / self.total as f64
        }
    }

    /// `(value, count)` in increasing value order.
    pub fn iter(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.counts.iter().map(|(&k, &c)| (k, c))
    }

    pub fn mean(&self) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.iter().map(|(k, c)| k as f64 * c as f64).sum::<f64>() / self.total as f64
    }

    /// Dense frequencies over `0..=max`.
    pub fn frequencies(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.max_value() as usize + 1];
        for (k, _) in self.iter() {
            out[k as usize] = self.frequency(k);
        }
        out
    }
}

impl Measure for EmpiricalMeasure {
    fn mass(&self, k: u64) -> f64 {
        self.frequency(k)
    }

    fn mass_above(&self, k: u64) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        let above: u64 = self.counts.range(k + 1..).map(|(_, &c)| c).sum();
        above as f64 / self.total as f64
    }

    fn truncation(&self) -> Option<u64> {
        None
    }

    fn max_value(&self) -> u64 {
        self.counts.keys().next_back().copied().unwrap_or(0)
    }
}

/// Total variation distance, half the ℓ¹ distance. When either side is
/// truncated, mass above the smaller truncation level is compared as a single
/// outcome.
pub fn tv_distance<P: Measure + ?Sized, Q: Measure + ?Sized>(p: &P, q: &Q) -> f64 {
    let bound = match (p.truncation(), q.truncation()) {
        (Some(a), Some(b)) => a.min(b),
        (Some(a), None) | (None, Some(a)) => a,
        (None, None) => p.max_value().max(q.max_value()),
    };
    let head: f64 = (0..=bound).map(|k| (p.mass(k) - q.mass(k)).abs()).sum();
    let tail = (p.mass_above(bound) - q.mass_above(bound)).abs();
    0.5 * (head + tail)
}

/// Standard normal quantile `z` with `P(|N| ≤ z) = level`.
pub fn normal_quantile(level: f64) -> f64 {
    Normal::standard().inverse_cdf(0.5 + level / 2.0)
}

/// Wilson score interval for a binomial proportion.
pub fn proportion_ci(successes: u64, trials: u64, level: f64) -> (f64, f64) {
    assert!(trials >= 1, "proportion_ci needs at least one trial");
    let n = trials as f64;
    let p = successes as f64 / n;
    let z = normal_quantile(level);
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Least-squares slope of `ln(series[i])` against `i` over `window`.
pub fn log_slope(series: &[f64], window: Range<usize>) -> Result<f64> {
    if window.end > series.len() || window.len() < 2 {
        return Err(Error::EmptySeries);
    }
    let mut xs = Vec::with_capacity(window.len());
    let mut ys = Vec::with_capacity(window.len());
    for i in window {
        let v = series[i];
        if v <= 0.0 || v.is_nan() {
            return Err(Error::NonPositiveValue { index: i, value: v });
        }
        xs.push(i as f64);
        ys.push(v.ln());
    }
    Ok(least_squares_slope(&xs, &ys))
}

pub(crate) fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Sample mean and unbiased variance.
pub fn mean_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Normalization applied to `P_k(n) - f_k` before comparing spreads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CltScaling {
    /// `√n`, `n` the generation index.
    Generation,
    /// `√(2^(n+1))`, the square root of the number of cells up to
    /// generation `n`.
    TreeSize,
}

impl CltScaling {
    pub fn factor(self, n: u32) -> f64 {
        match self {
            Self::Generation => (n as f64).sqrt(),
            Self::TreeSize => 2f64.powf((n as f64 + 1.0) / 2.0),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilizationRow {
    pub n: u32,
    pub replicates: usize,
    pub mean: f64,
    pub variance: f64,
    /// 99% normal interval for the mean.
    pub mean_ci: (f64, f64),
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilizationReport {
    pub scaling: CltScaling,
    pub rows: Vec<StabilizationRow>,
    /// Variance at the largest `n` over variance at the second largest.
    pub variance_ratio: f64,
    /// `variance_ratio` within `[0.5, 2]`.
    pub stabilized: bool,
}

impl StabilizationReport {
    /// Every row's mean interval covers 0.
    pub fn centered(&self) -> bool {
        self.rows.iter().all(|r| r.mean_ci.0 <= 0.0 && 0.0 <= r.mean_ci.1)
    }
}

/// Mean and variance of the rescaled deviations `scale(n)·(P_k(n) - f_k)`
/// across replicates, for each `n` in `samples` (sorted by `n`).
pub fn sqrtn_stabilization(samples: &[(u32, Vec<f64>)], f_k: f64, scaling: CltScaling) -> StabilizationReport {
    let z = normal_quantile(0.99);
    let mut rows: Vec<StabilizationRow> = samples
        .iter()
        .map(|(n, values)| {
            let scale = scaling.factor(*n);
            let dev: Vec<f64> = values.iter().map(|v| scale * (v - f_k)).collect();
            let (mean, variance) = mean_variance(&dev);
            let half = z * (variance / dev.len().max(1) as f64).sqrt();
            StabilizationRow {
                n: *n,
                replicates: dev.len(),
                mean,
                variance,
                mean_ci: (mean - half, mean + half),
            }
        })
        .collect();
    rows.sort_by_key(|r| r.n);
    let variance_ratio = match rows.as_slice() {
        [.., a, b] if a.variance == 0.0 && b.variance == 0.0 => 1.0,
        [.., a, b] => b.variance / a.variance,
        _ => f64::NAN,
    };
    StabilizationReport {
        scaling,
        rows,
        variance_ratio,
        stabilized: (0.5..=2.0).contains(&variance_ratio),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn tv_examples() {
        let p = [0.75, 0.25];
        let q = [2.0 / 3.0, 1.0 / 3.0];
        assert_abs_diff_eq!(tv_distance(&p[..], &p[..]), 0.0);
        assert_abs_diff_eq!(tv_distance(&[1.0][..], &[0.0, 1.0][..]), 1.0);
        assert_abs_diff_eq!(tv_distance(&p[..], &q[..]), 1.0 / 12.0, epsilon = 1e-15);
    }

    #[test]
    fn tv_between_empirical_and_dense() {
        let e = EmpiricalMeasure::from_samples([0, 0, 0, 1]);
        assert_abs_diff_eq!(tv_distance(&e, &[0.75, 0.25][..]), 0.0);
        assert_abs_diff_eq!(tv_distance(&e, &[2.0 / 3.0, 1.0 / 3.0][..]), 1.0 / 12.0, epsilon = 1e-15);
    }

    #[test]
    fn wilson_examples() {
        let (lo, hi) = proportion_ci(0, 50, 0.95);
        assert!(lo <= 0.0 && hi > 0.0);
        let (lo, hi) = proportion_ci(50, 50, 0.95);
        assert!(lo < 1.0 && hi >= 1.0);
        // p = 1/2, n = 1000, z = 1.959964: center 1/2, half-width
        // z·sqrt(1/4000 + z²/4e6)/(1 + z²/1000) = 0.030943
        let (lo, hi) = proportion_ci(500, 1000, 0.95);
        assert_abs_diff_eq!(lo, 0.469070, epsilon = 1e-5);
        assert_abs_diff_eq!(hi, 0.530930, epsilon = 1e-5);
    }

    #[test]
    fn log_slope_examples() {
        let r: f64 = 0.8;
        let geo: Vec<f64> = (0..30).map(|n| r.powi(n)).collect();
        assert_abs_diff_eq!(log_slope(&geo, 0..30).unwrap(), r.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(log_slope(&[3.0; 10], 2..9).unwrap(), 0.0, epsilon = 1e-15);
        let poly: Vec<f64> = (0..=100).map(|n| 2f64.powi(n) * n as f64).collect();
        let s = log_slope(&poly, 50..101).unwrap();
        // the n factor adds about 1/75 to the slope
        assert!((s - 2f64.ln()).abs() < 0.02);
        assert!(matches!(log_slope(&[1.0, 0.0, 2.0], 0..3), Err(Error::NonPositiveValue { index: 1, .. })));
        assert!(matches!(log_slope(&[1.0], 0..1), Err(Error::EmptySeries)));
    }

    #[test]
    fn stabilization_degenerate_input() {
        let samples = vec![(8, vec![0.3; 100]), (12, vec![0.3; 100]), (16, vec![0.3; 100])];
        let r = sqrtn_stabilization(&samples, 0.3, CltScaling::Generation);
        for row in &r.rows {
            assert_eq!(row.mean, 0.0);
            assert_eq!(row.variance, 0.0);
        }
        assert!(r.stabilized);
        assert!(r.centered());
    }

    #[test]
    fn stabilization_detects_shrinking_spread() {
        // spread of P_k(n) halving each step: √n-scaled variance collapses
        let samples: Vec<(u32, Vec<f64>)> = [8u32, 12, 16]
            .iter()
            .map(|&n| {
                let s = 2f64.powf(-(n as f64) / 2.0);
                (n, (0..200).map(|i| 0.5 + s * if i % 2 == 0 { 1.0 } else { -1.0 }).collect())
            })
            .collect();
        assert!(!sqrtn_stabilization(&samples, 0.5, CltScaling::Generation).stabilized);
        assert!(sqrtn_stabilization(&samples, 0.5, CltScaling::TreeSize).stabilized);
    }

    fn pmf(len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01f64..1.0, len).prop_map(|w| {
            let s: f64 = w.iter().sum();
            w.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn tv_is_a_metric(p in pmf(6), q in pmf(6), r in pmf(6)) {
            let d = |a: &Vec<f64>, b: &Vec<f64>| tv_distance(&a[..], &b[..]);
            prop_assert!(d(&p, &q) >= 0.0 && d(&p, &q) <= 1.0 + 1e-12);
            prop_assert!((d(&p, &q) - d(&q, &p)).abs() < 1e-15);
            prop_assert!(d(&p, &r) <= d(&p, &q) + d(&q, &r) + 1e-12);
            prop_assert!(d(&p, &p) == 0.0);
        }
    }
}
