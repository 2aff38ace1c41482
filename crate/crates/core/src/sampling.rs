//! Low-level samplers shared by the laws.

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::MAX_STATE;

/// Below this many trials a sum of i.i.d. categorical draws is sampled draw
/// by draw; above it the category counts are sampled as a multinomial.
const DIRECT_TRIALS: u64 = 12;

/// Finite categorical law over indices `0..probs.len()`.
#[derive(Debug, Clone)]
pub(crate) struct Categorical {
    probs: Vec<f64>,
    cumulative: Vec<f64>,
}

impl Categorical {
    /// `probs` must be nonnegative and sum to 1 (checked by callers).
    pub(crate) fn new(probs: Vec<f64>) -> Self {
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        if let Some(last) = cumulative.last_mut() {
            *last = 1.0;
        }
        Self { probs, cumulative }
    }

    pub(crate) fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub(crate) fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let idx = self.cumulative.partition_point(|&c| c <= u);
        idx.min(self.probs.len() - 1)
    }

    /// Category counts of `trials` i.i.d. draws, written into `counts`.
    pub(crate) fn multinomial<R: Rng + ?Sized>(&self, trials: u64, rng: &mut R, counts: &mut Vec<u64>) {
        counts.clear();
        counts.resize(self.probs.len(), 0);
        if trials == 0 {
            return;
        }
        if trials <= DIRECT_TRIALS {
            for _ in 0..trials {
                counts[self.sample(rng)] += 1;
            }
            return;
        }
        let mut remaining = trials;
        let mut mass_left = 1.0;
        let last = self.probs.len() - 1;
        for (i, &p) in self.probs.iter().enumerate() {
            if remaining == 0 {
                break;
            }
            if i == last || mass_left <= 0.0 {
                counts[i] += remaining;
                break;
            }
            let q = (p / mass_left).clamp(0.0, 1.0);
            let drawn = binomial(remaining, q, rng);
            counts[i] = drawn;
            remaining -= drawn;
            mass_left -= p;
        }
    }
}

pub(crate) fn binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p)
        .expect("probability clamped to [0, 1]")
        .sample(rng)
}

/// `a + b·c` clamped at [`MAX_STATE`]; the flag reports saturation.
pub(crate) fn saturating_mul_add(a: u64, b: u64, c: u64) -> (u64, bool) {
    match b.checked_mul(c).and_then(|bc| bc.checked_add(a)) {
        Some(v) if v <= MAX_STATE => (v, false),
        _ => (MAX_STATE, true),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn multinomial_preserves_trial_count() {
        let cat = Categorical::new(vec![0.2, 0.0, 0.5, 0.3]);
        let mut rng = stream(1, 0);
        let mut counts = Vec::new();
        for trials in [0u64, 1, 5, 12, 13, 1000, 1 << 40] {
            cat.multinomial(trials, &mut rng, &mut counts);
            assert_eq!(counts.iter().sum::<u64>(), trials);
            assert_eq!(counts[1], 0);
        }
    }

    #[test]
    fn multinomial_means_match() {
        let cat = Categorical::new(vec![0.25, 0.5, 0.25]);
        let mut rng = stream(2, 0);
        let mut counts = Vec::new();
        let mut acc = [0u64; 3];
        let reps = 2000;
        for _ in 0..reps {
            cat.multinomial(400, &mut rng, &mut counts);
            for (a, c) in acc.iter_mut().zip(&counts) {
                *a += c;
            }
        }
        let total = (reps * 400) as f64;
        for (a, p) in acc.iter().zip([0.25, 0.5, 0.25]) {
            assert!((*a as f64 / total - p).abs() < 0.003);
        }
    }

    #[test]
    fn saturation() {
        assert_eq!(saturating_mul_add(1, 2, 3), (7, false));
        assert_eq!(saturating_mul_add(1, MAX_STATE, 2), (MAX_STATE, true));
        assert_eq!(saturating_mul_add(MAX_STATE, 1, 1), (MAX_STATE, true));
    }
}
