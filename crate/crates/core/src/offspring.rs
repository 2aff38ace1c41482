//! Offspring mechanisms, random environments and contamination laws.
//!
//! A [`BivariateOffspringLaw`] is the joint law of the numbers of children a
//! single parasite sends to the first and to the second daughter cell. The
//! random environment is an [`EnvironmentLaw`], a finite mixture of such laws
//! drawn afresh for every cell. Contamination from outside the population is
//! an [`ImmigrationPair`]: one law for parasite-free cells and one for
//! infected cells.
//!
//! All laws are finite-support (except the designated heavy-tail
//! contamination family), validated at construction to within
//! [`NORMALIZATION_TOLERANCE`] and renormalized once.

use std::collections::HashSet;
use std::sync::OnceLock;

use rand::Rng;
use serde::Serialize;

use crate::sampling::{binomial, saturating_mul_add, Categorical};
use crate::{Error, Result, MAX_STATE};

/// Allowed deviation of a law's total mass from 1 at construction.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;

/// Log-means within this distance of zero are classified critical.
pub const CRITICAL_TOLERANCE: f64 = 1e-12;

fn check_probability(p: f64, what: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return Err(Error::InvalidLaw(format!("{what}: probability {p} outside [0, 1]")));
    }
    Ok(())
}

fn check_total(total: f64, what: &str) -> Result<()> {
    if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(Error::InvalidLaw(format!("{what}: total mass {total} is not 1")));
    }
    Ok(())
}

/// Finite-support law on the nonnegative integers.
#[derive(Debug, Clone)]
pub struct CountLaw {
    pmf: Vec<f64>,
    values: Vec<u64>,
    sampler: Categorical,
}

impl PartialEq for CountLaw {
    fn eq(&self, other: &Self) -> bool {
        self.pmf == other.pmf
    }
}

impl CountLaw {
    /// Law with `P(X = k) = pmf[k]`.
    pub fn from_pmf(pmf: Vec<f64>) -> Result<Self> {
        if pmf.is_empty() {
            return Err(Error::InvalidLaw("empty count law".into()));
        }
        for &p in &pmf {
            check_probability(p, "count law")?;
        }
        let total: f64 = pmf.iter().sum();
        check_total(total, "count law")?;
        Ok(Self::normalized(pmf.into_iter().map(|p| p / total).collect()))
    }

    /// Law from `(value, probability)` pairs; values must be distinct.
    pub fn from_support(support: &[(u64, f64)]) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::InvalidLaw("empty count law".into()));
        }
        let max = support.iter().map(|&(k, _)| k).max().unwrap_or(0);
        if max > 1 << 24 {
            return Err(Error::InvalidLaw(format!("support value {max} too large for a dense law")));
        }
        let mut pmf = vec![0.0; max as usize + 1];
        let mut seen = HashSet::new();
        for &(k, p) in support {
            if !seen.insert(k) {
                return Err(Error::InvalidLaw(format!("duplicate support value {k}")));
            }
            pmf[k as usize] = p;
        }
        Self::from_pmf(pmf)
    }

    fn normalized(mut pmf: Vec<f64>) -> Self {
        while pmf.len() > 1 && pmf.last() == Some(&0.0) {
            pmf.pop();
        }
        let (values, probs): (Vec<u64>, Vec<f64>) = pmf
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(k, &p)| (k as u64, p))
            .unzip();
        Self {
            pmf,
            values,
            sampler: Categorical::new(probs),
        }
    }

    pub fn dirac(value: u64) -> Self {
        let mut pmf = vec![0.0; value as usize + 1];
        pmf[value as usize] = 1.0;
        Self::normalized(pmf)
    }

    pub fn bernoulli(p: f64) -> Result<Self> {
        check_probability(p, "bernoulli")?;
        Self::from_pmf(vec![1.0 - p, p])
    }

    /// Geometric law `P(X = k) = (1 - p)^k p` on `0..=max`, renormalized
    /// after truncation.
    pub fn truncated_geometric(p: f64, max: u64) -> Result<Self> {
        check_probability(p, "geometric")?;
        if p == 0.0 {
            return Err(Error::InvalidLaw("geometric parameter must be positive".into()));
        }
        let raw: Vec<f64> = (0..=max).map(|k| (1.0 - p).powi(k as i32) * p).collect();
        let total: f64 = raw.iter().sum();
        Ok(Self::normalized(raw.into_iter().map(|x| x / total).collect()))
    }

    /// `P(X = k)`.
    pub fn pmf(&self, k: u64) -> f64 {
        self.pmf.get(k as usize).copied().unwrap_or(0.0)
    }

    /// Dense probabilities over `0..=max`.
    pub fn probabilities(&self) -> &[f64] {
        &self.pmf
    }

    pub fn max(&self) -> u64 {
        self.pmf.len() as u64 - 1
    }

    pub fn mean(&self) -> f64 {
        self.pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
    }

    /// `E[log⁺ X]`; always finite for a finite support.
    pub fn expected_log_plus(&self) -> f64 {
        self.pmf
            .iter()
            .enumerate()
            .skip(2)
            .map(|(k, p)| (k as f64).ln() * p)
            .sum()
    }

    pub fn is_zero(&self) -> bool {
        self.pmf.len() == 1
    }

    /// Probability generating function at `s`.
    pub fn pgf(&self, s: f64) -> f64 {
        self.pmf.iter().rev().fold(0.0, |acc, &p| acc * s + p)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        self.values[self.sampler.sample(rng)]
    }

    /// Sum of `count` i.i.d. draws; the flag reports saturation at
    /// [`MAX_STATE`].
    pub fn sum_iid<R: Rng + ?Sized>(&self, count: u64, rng: &mut R) -> (u64, bool) {
        if count == 0 || self.is_zero() {
            return (0, false);
        }
        let mut counts = Vec::with_capacity(self.values.len());
        self.sampler.multinomial(count, rng, &mut counts);
        let mut total = 0u64;
        let mut saturated = false;
        for (&v, &c) in self.values.iter().zip(&counts) {
            let (t, s) = saturating_mul_add(total, v, c);
            total = t;
            saturated |= s;
        }
        (total, saturated)
    }
}

/// Number of exact terms in the heavy-tail sampling table.
const HEAVY_TAIL_TABLE: u64 = 1 << 16;

/// Contamination law with `P(Y = 0) = 1/2` and
/// `P(Y = n) = c / (n (1 + ln n)²)` for `n ≥ 1`.
///
/// `E[log⁺ Y]` diverges (the summand behaves like `1 / (n ln n)`), while every
/// tail mass is finite: `P(Y > x) ≈ c / (1 + ln(x + 1/2))`. Sampling inverts
/// the exact CDF on a prefix table of [`HEAVY_TAIL_TABLE`] values, built on
/// first use, and inverts the tail approximation beyond it.
#[derive(Debug)]
pub struct HeavyTailLaw {
    c: f64,
    cdf: OnceLock<Vec<f64>>,
}

impl Clone for HeavyTailLaw {
    fn clone(&self) -> Self {
        Self {
            c: self.c,
            cdf: OnceLock::new(),
        }
    }
}

impl Default for HeavyTailLaw {
    fn default() -> Self {
        Self::new()
    }
}

fn heavy_term(n: u64) -> f64 {
    let x = n as f64;
    let l = 1.0 + x.ln();
    1.0 / (x * l * l)
}

/// Midpoint-rule estimate of `Σ_{n > x} 1 / (n (1 + ln n)²)`.
fn heavy_tail_sum(x: u64) -> f64 {
    1.0 / (1.0 + (x as f64 + 0.5).ln())
}

impl HeavyTailLaw {
    pub fn new() -> Self {
        let head: f64 = (1..=HEAVY_TAIL_TABLE).map(heavy_term).sum();
        let total = head + heavy_tail_sum(HEAVY_TAIL_TABLE);
        Self {
            c: 0.5 / total,
            cdf: OnceLock::new(),
        }
    }

    /// Normalizing constant `c`.
    pub fn constant(&self) -> f64 {
        self.c
    }

    pub fn pmf(&self, k: u64) -> f64 {
        if k == 0 {
            0.5
        } else {
            self.c * heavy_term(k)
        }
    }

    /// `P(Y > k)`: exact up to the table, tail estimate beyond.
    pub fn mass_above(&self, k: u64) -> f64 {
        if k >= HEAVY_TAIL_TABLE {
            return self.c * heavy_tail_sum(k);
        }
        let cdf = self.table();
        (1.0 - cdf[k as usize]).max(0.0)
    }

    fn table(&self) -> &[f64] {
        self.cdf.get_or_init(|| {
            let mut acc = 0.5;
            let mut cdf = Vec::with_capacity(HEAVY_TAIL_TABLE as usize + 1);
            cdf.push(acc);
            for n in 1..=HEAVY_TAIL_TABLE {
                acc += self.c * heavy_term(n);
                cdf.push(acc);
            }
            cdf
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self.sample_wide(rng) {
            WideCount::Exact(x) => x,
            WideCount::Log(_) => MAX_STATE,
        }
    }

    /// Draw that keeps values above [`MAX_STATE`] as their logarithm.
    pub fn sample_wide<R: Rng + ?Sized>(&self, rng: &mut R) -> WideCount {
        let u: f64 = rng.random();
        let cdf = self.table();
        if u < cdf[0] {
            return WideCount::Exact(0);
        }
        if u < cdf[HEAVY_TAIL_TABLE as usize] {
            return WideCount::Exact(cdf.partition_point(|&c| c <= u) as u64);
        }
        // Tail: solve c / (1 + ln(x + 1/2)) = P(Y > x) = 1 - u.
        let tail = (1.0 - u).max(f64::MIN_POSITIVE);
        let log_x = self.c / tail - 1.0;
        if log_x >= (MAX_STATE as f64).ln() {
            return WideCount::Log(log_x);
        }
        let x = (log_x.exp() - 0.5).ceil();
        WideCount::Exact((x as u64).clamp(HEAVY_TAIL_TABLE + 1, MAX_STATE))
    }
}

/// A count that may exceed [`MAX_STATE`]; larger values are held as their
/// natural logarithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum WideCount {
    Exact(u64),
    Log(f64),
}

impl WideCount {
    /// Natural logarithm, `-∞` at zero.
    pub fn ln(self) -> f64 {
        match self {
            Self::Exact(x) => (x as f64).ln(),
            Self::Log(l) => l,
        }
    }

    pub fn is_zero(self) -> bool {
        self == Self::Exact(0)
    }

    /// Exact form whenever the value fits below [`MAX_STATE`].
    pub fn normalized(self) -> Self {
        match self {
            Self::Log(l) if l < (MAX_STATE as f64).ln() => Self::Exact(l.exp().round() as u64),
            other => other,
        }
    }

    pub fn add(self, other: Self) -> Self {
        match (self, other) {
            (Self::Exact(a), Self::Exact(b)) => match a.checked_add(b).filter(|&s| s <= MAX_STATE) {
                Some(s) => Self::Exact(s),
                None => Self::Log((a as f64 + b as f64).ln()),
            },
            (a, b) => {
                let (hi, lo) = if a.ln() >= b.ln() { (a.ln(), b.ln()) } else { (b.ln(), a.ln()) };
                Self::Log(hi + (lo - hi).exp().ln_1p())
            }
        }
    }
}

/// A contamination law: finite-support or the heavy-tail family.
#[derive(Debug, Clone)]
pub enum ImmigrationLaw {
    Finite(CountLaw),
    HeavyTail(HeavyTailLaw),
}

impl From<CountLaw> for ImmigrationLaw {
    fn from(law: CountLaw) -> Self {
        Self::Finite(law)
    }
}

impl ImmigrationLaw {
    pub fn zero() -> Self {
        Self::Finite(CountLaw::dirac(0))
    }

    pub fn heavy_tail() -> Self {
        Self::HeavyTail(HeavyTailLaw::new())
    }

    pub fn pmf(&self, k: u64) -> f64 {
        match self {
            Self::Finite(l) => l.pmf(k),
            Self::HeavyTail(h) => h.pmf(k),
        }
    }

    pub fn prob_zero(&self) -> f64 {
        self.pmf(0)
    }

    /// `P(Y > k)`.
    pub fn mass_above(&self, k: u64) -> f64 {
        match self {
            Self::Finite(l) => l.probabilities().iter().skip(k as usize + 1).sum(),
            Self::HeavyTail(h) => h.mass_above(k),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Finite(l) => l.mean(),
            Self::HeavyTail(_) => f64::INFINITY,
        }
    }

    /// `E[log⁺ Y]`, or `None` when it diverges.
    pub fn expected_log_plus(&self) -> Option<f64> {
        match self {
            Self::Finite(l) => Some(l.expected_log_plus()),
            Self::HeavyTail(_) => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Self::Finite(l) if l.is_zero())
    }

    pub fn is_heavy_tail(&self) -> bool {
        matches!(self, Self::HeavyTail(_))
    }

    /// Largest value with positive mass, if finite.
    pub fn max(&self) -> Option<u64> {
        match self {
            Self::Finite(l) => Some(l.max()),
            Self::HeavyTail(_) => None,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self {
            Self::Finite(l) => l.sample(rng),
            Self::HeavyTail(h) => h.sample(rng),
        }
    }

    /// As [`ImmigrationLaw::sample`], keeping heavy-tail draws above
    /// [`MAX_STATE`] as logarithms.
    pub fn sample_wide<R: Rng + ?Sized>(&self, rng: &mut R) -> WideCount {
        match self {
            Self::Finite(l) => WideCount::Exact(l.sample(rng)),
            Self::HeavyTail(h) => h.sample_wide(rng),
        }
    }

    /// Sum of `count` i.i.d. draws, saturating at [`MAX_STATE`].
    pub fn sum_iid<R: Rng + ?Sized>(&self, count: u64, rng: &mut R) -> (u64, bool) {
        match self {
            Self::Finite(l) => l.sum_iid(count, rng),
            Self::HeavyTail(h) => {
                let nonzero = binomial(count, 1.0 - h.pmf(0), rng);
                let mut total = 0u64;
                let mut saturated = false;
                for _ in 0..nonzero {
                    // resample from the law conditioned on Y > 0
                    let y = loop {
                        let y = h.sample(rng);
                        if y > 0 {
                            break y;
                        }
                    };
                    let (t, s) = saturating_mul_add(total, y, 1);
                    total = t;
                    saturated |= s;
                }
                (total, saturated)
            }
        }
    }
}

/// Which constraint an [`ImmigrationPair`] was validated against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ImmigrationMode {
    /// `0 < P(Y₀ = 0) < 1` and `P(Y₁ = 0) > 0`.
    Contamination,
    /// `Y₀ = Y₁ = 0` almost surely.
    Zero,
    /// No constraint; for pure immigration-process experiments where the
    /// immigration need not vanish with positive probability.
    Unconstrained,
}

/// Contamination laws for parasite-free cells (`y0`) and infected cells (`y1`).
#[derive(Debug, Clone)]
pub struct ImmigrationPair {
    y0: ImmigrationLaw,
    y1: ImmigrationLaw,
    mode: ImmigrationMode,
}

impl ImmigrationPair {
    /// Validated pair: either no contamination at all, or a parasite-free cell
    /// is contaminated with probability strictly between 0 and 1 and an
    /// infected cell escapes contamination with positive probability.
    pub fn new(y0: impl Into<ImmigrationLaw>, y1: impl Into<ImmigrationLaw>) -> Result<Self> {
        let (y0, y1) = (y0.into(), y1.into());
        if y0.is_zero() && y1.is_zero() {
            return Ok(Self::zero());
        }
        let p0 = y0.prob_zero();
        if !(p0 > 0.0 && p0 < 1.0) {
            return Err(Error::InvalidImmigration(format!(
                "contamination constraint violated: need 0 < P(Y0 = 0) < 1, got {p0}"
            )));
        }
        let p1 = y1.prob_zero();
        if p1 <= 0.0 {
            return Err(Error::InvalidImmigration(format!(
                "contamination constraint violated: need P(Y1 = 0) > 0, got {p1}"
            )));
        }
        Ok(Self {
            y0,
            y1,
            mode: ImmigrationMode::Contamination,
        })
    }

    pub fn zero() -> Self {
        Self {
            y0: ImmigrationLaw::zero(),
            y1: ImmigrationLaw::zero(),
            mode: ImmigrationMode::Zero,
        }
    }

    /// Pair without the contamination constraint.
    pub fn unconstrained(y0: impl Into<ImmigrationLaw>, y1: impl Into<ImmigrationLaw>) -> Self {
        let (y0, y1) = (y0.into(), y1.into());
        let mode = if y0.is_zero() && y1.is_zero() {
            ImmigrationMode::Zero
        } else {
            ImmigrationMode::Unconstrained
        };
        Self { y0, y1, mode }
    }

    pub fn y0(&self) -> &ImmigrationLaw {
        &self.y0
    }

    pub fn y1(&self) -> &ImmigrationLaw {
        &self.y1
    }

    pub fn mode(&self) -> ImmigrationMode {
        self.mode
    }

    pub fn is_zero(&self) -> bool {
        self.mode == ImmigrationMode::Zero
    }

    /// Law applied to a cell currently holding `parasites`.
    pub fn for_state(&self, parasites: u64) -> &ImmigrationLaw {
        if parasites == 0 {
            &self.y0
        } else {
            &self.y1
        }
    }
}

/// Joint law of `(X⁽⁰⁾, X⁽¹⁾)`, the children of one parasite going to the
/// first and the second daughter cell.
#[derive(Debug, Clone)]
pub struct BivariateOffspringLaw {
    pairs: Vec<(u64, u64)>,
    sampler: Categorical,
    marginals: [CountLaw; 2],
}

impl BivariateOffspringLaw {
    pub fn new(support: &[((u64, u64), f64)]) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::InvalidLaw("empty bivariate law".into()));
        }
        let mut seen = HashSet::new();
        for &(pair, p) in support {
            check_probability(p, "bivariate law")?;
            if !seen.insert(pair) {
                return Err(Error::InvalidLaw(format!("duplicate support pair {pair:?}")));
            }
        }
        let total: f64 = support.iter().map(|&(_, p)| p).sum();
        check_total(total, "bivariate law")?;
        let kept: Vec<((u64, u64), f64)> = support
            .iter()
            .filter(|&&(_, p)| p > 0.0)
            .map(|&(pair, p)| (pair, p / total))
            .collect();
        let marginal = |side: usize| {
            let max = kept
                .iter()
                .map(|&((j, k), _)| if side == 0 { j } else { k })
                .max()
                .unwrap_or(0);
            let mut pmf = vec![0.0; max as usize + 1];
            for &((j, k), p) in &kept {
                pmf[if side == 0 { j } else { k } as usize] += p;
            }
            CountLaw::normalized(pmf)
        };
        let marginals = [marginal(0), marginal(1)];
        let (pairs, probs) = kept.into_iter().unzip();
        Ok(Self {
            pairs,
            sampler: Categorical::new(probs),
            marginals,
        })
    }

    pub fn dirac(first: u64, second: u64) -> Self {
        Self::new(&[((first, second), 1.0)]).expect("point mass is valid")
    }

    /// Support pairs with positive probability, and their probabilities.
    pub fn support(&self) -> impl Iterator<Item = ((u64, u64), f64)> + '_ {
        self.pairs.iter().copied().zip(self.sampler.probs().iter().copied())
    }

    /// `P(X⁽⁰⁾ = first, X⁽¹⁾ = second)`.
    pub fn prob(&self, first: u64, second: u64) -> f64 {
        self.support()
            .find(|&(pair, _)| pair == (first, second))
            .map_or(0.0, |(_, p)| p)
    }

    /// Law of the children sent to daughter `side` (0 or 1).
    pub fn marginal(&self, side: usize) -> &CountLaw {
        &self.marginals[side]
    }

    /// `E[X⁽side⁾]`.
    pub fn mean(&self, side: usize) -> f64 {
        self.marginals[side].mean()
    }

    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (u64, u64) {
        self.pairs[self.sampler.sample(rng)]
    }

    /// Componentwise sum of `count` i.i.d. pairs; the flag reports saturation.
    pub fn sum_pairs<R: Rng + ?Sized>(&self, count: u64, rng: &mut R) -> ((u64, u64), bool) {
        if count == 0 {
            return ((0, 0), false);
        }
        let mut counts = Vec::with_capacity(self.pairs.len());
        self.sampler.multinomial(count, rng, &mut counts);
        let (mut a, mut b) = (0u64, 0u64);
        let mut saturated = false;
        for (&(j, k), &c) in self.pairs.iter().zip(&counts) {
            let (na, sa) = saturating_mul_add(a, j, c);
            let (nb, sb) = saturating_mul_add(b, k, c);
            a = na;
            b = nb;
            saturated |= sa | sb;
        }
        ((a, b), saturated)
    }
}

/// Law of the random environment: a finite mixture of bivariate laws.
#[derive(Debug, Clone)]
pub struct EnvironmentLaw {
    laws: Vec<BivariateOffspringLaw>,
    sampler: Categorical,
}

impl EnvironmentLaw {
    pub fn new(components: Vec<(BivariateOffspringLaw, f64)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidLaw("environment needs at least one component".into()));
        }
        for (_, w) in &components {
            check_probability(*w, "environment weight")?;
        }
        let total: f64 = components.iter().map(|(_, w)| w).sum();
        check_total(total, "environment weights")?;
        let (laws, weights): (Vec<_>, Vec<_>) = components.into_iter().map(|(l, w)| (l, w / total)).unzip();
        Ok(Self {
            laws,
            sampler: Categorical::new(weights),
        })
    }

    /// Deterministic environment.
    pub fn single(law: BivariateOffspringLaw) -> Self {
        Self::new(vec![(law, 1.0)]).expect("single component is valid")
    }

    pub fn components(&self) -> impl Iterator<Item = (&BivariateOffspringLaw, f64)> + '_ {
        self.laws.iter().zip(self.sampler.probs().iter().copied())
    }

    pub fn len(&self) -> usize {
        self.laws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.laws.is_empty()
    }

    pub fn component(&self, index: usize) -> &BivariateOffspringLaw {
        &self.laws[index]
    }

    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.sampler.sample(rng)
    }

    /// Draws one realized offspring mechanism.
    pub fn sample_environment<R: Rng + ?Sized>(&self, rng: &mut R) -> &BivariateOffspringLaw {
        &self.laws[self.sample_index(rng)]
    }

    /// The mixed law seen by a random cell line: marginal `side` of component
    /// `i` with weight `w_i / 2`. Identical marginals are merged.
    pub fn mixed_marginals(&self) -> Vec<(CountLaw, f64)> {
        let mut out: Vec<(CountLaw, f64)> = Vec::new();
        for (law, w) in self.components() {
            if w == 0.0 {
                continue;
            }
            for side in 0..2 {
                let m = law.marginal(side);
                match out.iter_mut().find(|(l, _)| l == m) {
                    Some((_, acc)) => *acc += w / 2.0,
                    None => out.push((m.clone(), w / 2.0)),
                }
            }
        }
        out
    }

    /// `E[log f'(1)]` for the mixed law, in nats.
    pub fn mixed_log_mean(&self) -> Result<f64> {
        let mut acc = 0.0;
        for (i, (law, w)) in self.components().enumerate() {
            if w == 0.0 {
                continue;
            }
            for side in 0..2 {
                let m = law.mean(side);
                if m <= 0.0 {
                    return Err(Error::DegenerateMarginal(format!("component {i}, side {side}")));
                }
                acc += w * 0.5 * m.ln();
            }
        }
        Ok(acc)
    }
}

fn binomial_coefficient(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn check_split_inputs(p_values: &[(f64, f64)]) -> Result<()> {
    if p_values.is_empty() {
        return Err(Error::InvalidLaw("no sharing parameters given".into()));
    }
    for &(p, _) in p_values {
        check_probability(p, "sharing parameter")?;
    }
    Ok(())
}

/// Every parasite has `Z` children, each of which independently goes to the
/// first daughter with probability `p`; `p` is drawn per cell from
/// `p_values` (pairs of `(p, weight)`).
pub fn build_binomial_split(z_law: &CountLaw, p_values: &[(f64, f64)]) -> Result<EnvironmentLaw> {
    check_split_inputs(p_values)?;
    let components = p_values
        .iter()
        .map(|&(p, w)| {
            let mut support = Vec::new();
            for (z, &pz) in z_law.probabilities().iter().enumerate() {
                if pz == 0.0 {
                    continue;
                }
                let z = z as u64;
                for a in 0..=z {
                    let b = z - a;
                    let prob = pz * binomial_coefficient(z, a) * p.powi(a as i32) * (1.0 - p).powi(b as i32);
                    support.push(((a, b), prob));
                }
            }
            Ok((BivariateOffspringLaw::new(&support)?, w))
        })
        .collect::<Result<Vec<_>>>()?;
    EnvironmentLaw::new(components)
}

/// Every parasite has a cluster of `Z` children that goes as a whole to the
/// first daughter with probability `p`, else to the second.
pub fn build_cluster_split(z_law: &CountLaw, p_values: &[(f64, f64)]) -> Result<EnvironmentLaw> {
    check_split_inputs(p_values)?;
    let components = p_values
        .iter()
        .map(|&(p, w)| {
            let mut support = Vec::new();
            for (z, &pz) in z_law.probabilities().iter().enumerate() {
                if pz == 0.0 {
                    continue;
                }
                let z = z as u64;
                if z == 0 {
                    support.push(((0, 0), pz));
                } else {
                    support.push(((z, 0), pz * p));
                    support.push(((0, z), pz * (1.0 - p)));
                }
            }
            Ok((BivariateOffspringLaw::new(&support)?, w))
        })
        .collect::<Result<Vec<_>>>()?;
    EnvironmentLaw::new(components)
}

/// `n` equally weighted atoms at the midpoints `(i + 1/2) / n`: a
/// discretized uniform law for the sharing parameter.
pub fn uniform_atoms(n: usize) -> Vec<(f64, f64)> {
    (0..n).map(|i| ((i as f64 + 0.5) / n as f64, 1.0 / n as f64)).collect()
}

/// `E[log(1/P)]` for a discrete law of the sharing parameter.
pub fn expected_log_inverse(p_values: &[(f64, f64)]) -> f64 {
    p_values.iter().map(|&(p, w)| -w * p.ln()).sum()
}

pub fn sample_environment<'a, R: Rng + ?Sized>(env: &'a EnvironmentLaw, rng: &mut R) -> &'a BivariateOffspringLaw {
    env.sample_environment(rng)
}

pub fn sample_offspring_pair<R: Rng + ?Sized>(law: &BivariateOffspringLaw, rng: &mut R) -> (u64, u64) {
    law.sample_pair(rng)
}

pub fn mixed_log_mean(env: &EnvironmentLaw) -> Result<f64> {
    env.mixed_log_mean()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    Subcritical,
    Critical,
    Supercritical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeReport {
    /// `E[log f'(1)]`, nats.
    pub log_mean: f64,
    pub regime: Regime,
    /// Whether `E[log⁺ Y₀]` and `E[log⁺ Y₁]` are finite.
    pub log_immigration_finite: (bool, bool),
}

impl RegimeReport {
    /// Subcritical with finite log-immigration: the random cell line is
    /// positive recurrent and has a limit law.
    pub fn is_ergodic(&self) -> bool {
        self.regime == Regime::Subcritical && self.log_immigration_finite.0 && self.log_immigration_finite.1
    }
}

pub fn classify_regime(env: &EnvironmentLaw, imm: &ImmigrationPair) -> Result<RegimeReport> {
    let log_mean = env.mixed_log_mean()?;
    let regime = if log_mean.abs() <= CRITICAL_TOLERANCE {
        Regime::Critical
    } else if log_mean < 0.0 {
        Regime::Subcritical
    } else {
        Regime::Supercritical
    };
    Ok(RegimeReport {
        log_mean,
        regime,
        log_immigration_finite: (
            imm.y0().expected_log_plus().is_some(),
            imm.y1().expected_log_plus().is_some(),
        ),
    })
}

/// Almost-sure recovery under binomial sharing without contamination:
/// `log E[Z] ≤ E[log(1/P)]`, with the same tolerance as criticality.
pub fn binomial_recovery_criterion(mean_z: f64, e_log_inv_p: f64) -> bool {
    mean_z.ln() <= e_log_inv_p + CRITICAL_TOLERANCE
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{E, LN_2};

    fn half() -> Vec<(f64, f64)> {
        vec![(0.5, 1.0)]
    }

    #[test]
    fn wide_counts_add_past_the_bound() {
        let big = WideCount::Exact(MAX_STATE).add(WideCount::Exact(MAX_STATE));
        assert!(matches!(big, WideCount::Log(l) if (l - (2.0 * MAX_STATE as f64).ln()).abs() < 1e-12));
        assert_eq!(WideCount::Exact(3).add(WideCount::Exact(4)), WideCount::Exact(7));
        let sum = WideCount::Log(1000.0).add(WideCount::Log(1000.0));
        assert!(matches!(sum, WideCount::Log(l) if (l - 1000.0 - 2f64.ln()).abs() < 1e-12));
        assert_eq!(WideCount::Log(10.0).normalized(), WideCount::Exact(22026));
        assert!(WideCount::Exact(0).add(WideCount::Log(50.0)).ln() == 50.0);
    }

    #[test]
    fn heavy_tail_wide_draws_exceed_the_bound() {
        let law = ImmigrationLaw::heavy_tail();
        let mut rng = crate::rng::stream(23, 0);
        let n = 200_000;
        let huge = (0..n).filter(|_| matches!(law.sample_wide(&mut rng), WideCount::Log(_))).count();
        let expected = law.mass_above(MAX_STATE) * n as f64;
        assert!((huge as f64 - expected).abs() < 5.0 * expected.sqrt(), "{huge} vs {expected}");
    }

    #[test]
    fn count_law_validation() {
        assert!(CountLaw::from_pmf(vec![]).is_err());
        assert!(CountLaw::from_pmf(vec![0.5, 0.4]).is_err());
        assert!(CountLaw::from_pmf(vec![1.5, -0.5]).is_err());
        assert!(CountLaw::from_support(&[(1, 0.5), (1, 0.5)]).is_err());
        let l = CountLaw::from_support(&[(3, 0.25), (0, 0.75)]).unwrap();
        assert_eq!(l.max(), 3);
        assert_abs_diff_eq!(l.mean(), 0.75);
        assert_abs_diff_eq!(l.pgf(0.5), 0.75 + 0.25 / 8.0);
    }

    #[test]
    fn bivariate_validation() {
        assert!(BivariateOffspringLaw::new(&[]).is_err());
        assert!(BivariateOffspringLaw::new(&[((0, 0), 0.5), ((0, 0), 0.5)]).is_err());
        assert!(BivariateOffspringLaw::new(&[((0, 0), 0.5), ((1, 0), 0.4)]).is_err());
        let l = BivariateOffspringLaw::new(&[((2, 0), 0.5), ((0, 1), 0.5)]).unwrap();
        assert_abs_diff_eq!(l.mean(0), 1.0);
        assert_abs_diff_eq!(l.mean(1), 0.5);
    }

    #[test]
    fn environment_validation() {
        assert!(EnvironmentLaw::new(vec![]).is_err());
        let l = BivariateOffspringLaw::dirac(1, 1);
        assert!(EnvironmentLaw::new(vec![(l.clone(), 0.6), (l, 0.6)]).is_err());
    }

    #[test]
    fn single_component_is_always_drawn() {
        let env = EnvironmentLaw::single(BivariateOffspringLaw::dirac(2, 2));
        let mut rng = stream(1, 0);
        for _ in 0..100 {
            assert_eq!(env.sample_index(&mut rng), 0);
        }
    }

    #[test]
    fn degenerate_weights_pick_first_component() {
        let env = EnvironmentLaw::new(vec![
            (BivariateOffspringLaw::dirac(1, 0), 1.0),
            (BivariateOffspringLaw::dirac(0, 1), 0.0),
        ])
        .unwrap();
        let mut rng = stream(2, 0);
        for _ in 0..10_000 {
            assert_eq!(env.sample_index(&mut rng), 0);
        }
    }

    #[test]
    fn equal_weights_frequency() {
        let env = EnvironmentLaw::new(vec![
            (BivariateOffspringLaw::dirac(1, 0), 0.5),
            (BivariateOffspringLaw::dirac(0, 1), 0.5),
        ])
        .unwrap();
        let mut rng = stream(3, 0);
        let n = 1_000_000;
        let hits = (0..n).filter(|_| env.sample_index(&mut rng) == 0).count();
        // binomial sd is 5e-4, the band is four of them
        assert!((hits as f64 / n as f64 - 0.5).abs() < 0.002);
    }

    #[test]
    fn offspring_pair_samples() {
        let mut rng = stream(4, 0);
        assert_eq!(BivariateOffspringLaw::dirac(0, 0).sample_pair(&mut rng), (0, 0));
        assert_eq!(BivariateOffspringLaw::dirac(2, 2).sample_pair(&mut rng), (2, 2));
        let l = BivariateOffspringLaw::new(&[((1, 0), 0.5), ((0, 1), 0.5)]).unwrap();
        let n = 1_000_000;
        let s: u64 = (0..n).map(|_| l.sample_pair(&mut rng).0).sum();
        assert!((s as f64 / n as f64 - 0.5).abs() < 0.002);
    }

    #[test]
    fn binomial_split_examples() {
        let env = build_binomial_split(&CountLaw::dirac(1), &half()).unwrap();
        let g = env.component(0);
        assert_abs_diff_eq!(g.prob(1, 0), 0.5);
        assert_abs_diff_eq!(g.prob(0, 1), 0.5);

        let env = build_binomial_split(&CountLaw::dirac(2), &half()).unwrap();
        let g = env.component(0);
        assert_abs_diff_eq!(g.prob(2, 0), 0.25);
        assert_abs_diff_eq!(g.prob(1, 1), 0.5);
        assert_abs_diff_eq!(g.prob(0, 2), 0.25);

        for p in [0.0, 0.3, 1.0] {
            let env = build_binomial_split(&CountLaw::dirac(0), &[(p, 1.0)]).unwrap();
            assert_eq!(env.component(0).support().collect::<Vec<_>>(), vec![((0, 0), 1.0)]);
        }
        assert!(build_binomial_split(&CountLaw::dirac(1), &[]).is_err());
        assert!(build_binomial_split(&CountLaw::dirac(1), &[(1.5, 1.0)]).is_err());
    }

    #[test]
    fn cluster_split_examples() {
        let env = build_cluster_split(&CountLaw::dirac(3), &[(1.0, 1.0)]).unwrap();
        assert_eq!(env.component(0).support().collect::<Vec<_>>(), vec![((3, 0), 1.0)]);

        let env = build_cluster_split(&CountLaw::dirac(2), &half()).unwrap();
        assert_abs_diff_eq!(env.component(0).prob(2, 0), 0.5);
        assert_abs_diff_eq!(env.component(0).prob(0, 2), 0.5);

        let z = CountLaw::from_pmf(vec![0.5, 0.5]).unwrap();
        let env = build_cluster_split(&z, &half()).unwrap();
        let g = env.component(0);
        assert_abs_diff_eq!(g.prob(0, 0), 0.5);
        assert_abs_diff_eq!(g.prob(1, 0), 0.25);
        assert_abs_diff_eq!(g.prob(0, 1), 0.25);
    }

    #[test]
    fn log_mean_examples() {
        let lm = |z| mixed_log_mean(&build_binomial_split(&CountLaw::dirac(z), &half()).unwrap()).unwrap();
        assert_abs_diff_eq!(lm(2), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(lm(1), -LN_2, epsilon = 1e-15);
        assert_abs_diff_eq!(lm(4), LN_2, epsilon = 1e-15);

        let dead = EnvironmentLaw::single(BivariateOffspringLaw::dirac(0, 0));
        assert!(matches!(mixed_log_mean(&dead), Err(Error::DegenerateMarginal(_))));
    }

    #[test]
    fn regime_examples() {
        let imm = ImmigrationPair::new(CountLaw::bernoulli(0.5).unwrap(), CountLaw::dirac(0)).unwrap();
        let env1 = build_binomial_split(&CountLaw::dirac(1), &half()).unwrap();
        assert_eq!(classify_regime(&env1, &imm).unwrap().regime, Regime::Subcritical);
        let env2 = build_binomial_split(&CountLaw::dirac(2), &half()).unwrap();
        assert_eq!(classify_regime(&env2, &imm).unwrap().regime, Regime::Critical);
        let env4 = build_binomial_split(&CountLaw::dirac(4), &half()).unwrap();
        assert_eq!(classify_regime(&env4, &imm).unwrap().regime, Regime::Supercritical);

        let heavy = ImmigrationPair::new(CountLaw::bernoulli(0.5).unwrap(), ImmigrationLaw::heavy_tail()).unwrap();
        let r = classify_regime(&env1, &heavy).unwrap();
        assert_eq!(r.log_immigration_finite, (true, false));
        assert!(!r.is_ergodic());
    }

    #[test]
    fn recovery_criterion_examples() {
        // ∫₀¹ -log p dp = 1
        assert!(binomial_recovery_criterion(2.0, 1.0));
        assert!(binomial_recovery_criterion(E, 1.0));
        assert!(!binomial_recovery_criterion(4.0, 1.0));
    }

    #[test]
    fn immigration_validation() {
        let bern = CountLaw::bernoulli(0.5).unwrap();
        assert!(ImmigrationPair::new(bern.clone(), bern.clone()).is_ok());
        assert!(ImmigrationPair::new(CountLaw::dirac(1), bern.clone()).is_err());
        assert!(ImmigrationPair::new(CountLaw::dirac(0), bern.clone()).is_err());
        assert!(ImmigrationPair::new(bern.clone(), CountLaw::dirac(1)).is_err());
        let zero = ImmigrationPair::new(CountLaw::dirac(0), CountLaw::dirac(0)).unwrap();
        assert_eq!(zero.mode(), ImmigrationMode::Zero);
        let free = ImmigrationPair::unconstrained(CountLaw::dirac(1), CountLaw::dirac(1));
        assert_eq!(free.mode(), ImmigrationMode::Unconstrained);
    }

    #[test]
    fn heavy_tail_law_is_normalized_and_samples_its_prefix() {
        let h = HeavyTailLaw::new();
        // exact head plus estimated tail adds up to one
        let head: f64 = (0..=HEAVY_TAIL_TABLE).map(|k| h.pmf(k)).sum();
        assert_abs_diff_eq!(head + h.mass_above(HEAVY_TAIL_TABLE), 1.0, epsilon = 1e-12);
        // the tail estimate agrees with exact summation over a long window
        let exact: f64 = (1001..=2_000_000u64).map(|n| h.pmf(n)).sum::<f64>() + h.mass_above(2_000_000);
        assert_abs_diff_eq!(exact, h.c * heavy_tail_sum(1000), epsilon = 1e-9);

        let mut rng = stream(5, 0);
        let n = 400_000;
        let draws: Vec<u64> = (0..n).map(|_| h.sample(&mut rng)).collect();
        let zeros = draws.iter().filter(|&&y| y == 0).count() as f64 / n as f64;
        assert!((zeros - 0.5).abs() < 0.004);
        let ones = draws.iter().filter(|&&y| y == 1).count() as f64 / n as f64;
        assert!((ones - h.pmf(1)).abs() < 0.004);
        let big = draws.iter().filter(|&&y| y > 1_000_000).count() as f64 / n as f64;
        assert!((big - h.mass_above(1_000_000)).abs() < 0.002);
    }

    #[test]
    fn heavy_tail_has_divergent_log_moment() {
        // partial sums of E[log⁺ Y] keep growing like log log n
        let h = HeavyTailLaw::new();
        let partial = |upto: u64| -> f64 { (2..=upto).map(|k| (k as f64).ln() * h.pmf(k)).sum() };
        let a = partial(1_000);
        let b = partial(1_000_000);
        assert!(b - a > 0.3 * h.constant());
        assert!(ImmigrationLaw::heavy_tail().expected_log_plus().is_none());
    }

    fn z_law() -> impl Strategy<Value = CountLaw> {
        prop::collection::vec(0.0f64..1.0, 1..6).prop_filter_map("nonzero", |w| {
            let s: f64 = w.iter().sum();
            (s > 0.0).then(|| CountLaw::from_pmf(w.iter().map(|x| x / s).collect()).unwrap())
        })
    }

    proptest! {
        #[test]
        fn binomial_split_preserves_total_offspring(z in z_law(), p in 0.0f64..=1.0) {
            let env = build_binomial_split(&z, &[(p, 1.0)]).unwrap();
            let g = env.component(0);
            for (k, &pz) in z.probabilities().iter().enumerate() {
                let total: f64 = g.support().filter(|&((a, b), _)| (a + b) as usize == k).map(|(_, q)| q).sum();
                prop_assert!((total - pz).abs() < 1e-12);
            }
        }

        #[test]
        fn cluster_split_symmetric_p_is_exchangeable(z in z_law(), p in 0.0f64..=1.0) {
            let env = build_cluster_split(&z, &[(p, 0.5), (1.0 - p, 0.5)]).unwrap();
            let joint = |a: u64, b: u64| -> f64 { env.components().map(|(g, w)| w * g.prob(a, b)).sum() };
            for a in 0..=z.max() {
                for b in 0..=z.max() {
                    prop_assert!((joint(a, b) - joint(b, a)).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn binomial_split_log_mean_decomposes(z in 1u64..8, ps in prop::collection::vec(0.01f64..0.99, 1..5)) {
            let w = 1.0 / ps.len() as f64;
            let pv: Vec<(f64, f64)> = ps.iter().map(|&p| (p, w)).collect();
            let env = build_binomial_split(&CountLaw::dirac(z), &pv).unwrap();
            let direct: f64 = (z as f64).ln() + 0.5 * pv.iter().map(|&(p, w)| w * (p.ln() + (1.0 - p).ln())).sum::<f64>();
            prop_assert!((env.mixed_log_mean().unwrap() - direct).abs() < 1e-12);
        }

        #[test]
        fn regime_invariant_under_component_duplication(z in 1u64..6, p in 0.05f64..0.95) {
            let imm = ImmigrationPair::zero();
            let env = build_binomial_split(&CountLaw::dirac(z), &[(p, 1.0)]).unwrap();
            let dup = build_binomial_split(&CountLaw::dirac(z), &[(p, 0.5), (p, 0.5)]).unwrap();
            let a = classify_regime(&env, &imm).unwrap();
            let b = classify_regime(&dup, &imm).unwrap();
            prop_assert_eq!(a.regime, b.regime);
            prop_assert!((a.log_mean - b.log_mean).abs() < 1e-12);
        }
    }
}
