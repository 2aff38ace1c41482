//! The random cell line: parasite counts along a uniformly chosen path of
//! the division tree.
//!
//! From a cell with `z` parasites the chain picks a daughter side uniformly,
//! draws one offspring mechanism from the environment, lets each of the `z`
//! parasites contribute its offspring on that side, and adds contamination
//! drawn from `Y₀` when `z = 0` and from `Y₁` otherwise. This is a branching
//! process in random environment whose immigration depends only on whether
//! the state is zero.

use log::warn;
use rand::Rng;
use serde::Serialize;

use crate::offspring::{classify_regime, EnvironmentLaw, ImmigrationPair, WideCount};
use crate::rng::{map_replicates, SimRng};
use crate::sampling::saturating_mul_add;
use crate::stats::{normal_quantile, EmpiricalMeasure};
use crate::{Error, Result, MAX_STATE};

/// Default step cap for return times.
pub const DEFAULT_HITTING_CAP: u64 = 100_000;

/// Excursions per replicate stream in the fanned-out regeneration estimator.
pub const EXCURSIONS_PER_STREAM: u64 = 10_000;

/// Largest tolerated fraction of capped excursions.
pub const MAX_CAPPED_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: u64,
    /// Mean `f'(1)` of the offspring marginal used for this step.
    pub realized_mean: f64,
    pub saturated: bool,
}

/// One transition of the chain from `z`.
pub fn step<R: Rng + ?Sized>(z: u64, env: &EnvironmentLaw, imm: &ImmigrationPair, rng: &mut R) -> StepOutcome {
    let side = usize::from(rng.random::<bool>());
    let marginal = env.sample_environment(rng).marginal(side);
    let (offspring, s1) = marginal.sum_iid(z, rng);
    let y = imm.for_state(z).sample(rng);
    let (state, s2) = saturating_mul_add(offspring, y, 1);
    StepOutcome {
        state,
        realized_mean: marginal.mean(),
        saturated: s1 || s2,
    }
}

/// One transition of two copies started at `low ≤ high`, sharing the side,
/// the environment, the offspring of the first `low` parasites and, when both
/// states are positive, the contamination draw.
pub fn coupled_step<R: Rng + ?Sized>(
    low: u64,
    high: u64,
    env: &EnvironmentLaw,
    imm: &ImmigrationPair,
    rng: &mut R,
) -> (StepOutcome, StepOutcome) {
    assert!(low <= high, "coupled_step needs low <= high");
    let side = usize::from(rng.random::<bool>());
    let marginal = env.sample_environment(rng).marginal(side);
    let (shared, s1) = marginal.sum_iid(low, rng);
    let (extra, s2) = marginal.sum_iid(high - low, rng);
    let (off_high, s3) = saturating_mul_add(shared, extra, 1);
    let (y_low, y_high) = if (low == 0) == (high == 0) {
        let y = imm.for_state(low).sample(rng);
        (y, y)
    } else {
        (imm.for_state(low).sample(rng), imm.for_state(high).sample(rng))
    };
    let (a, s4) = saturating_mul_add(shared, y_low, 1);
    let (b, s5) = saturating_mul_add(off_high, y_high, 1);
    let mean = marginal.mean();
    (
        StepOutcome {
            state: a,
            realized_mean: mean,
            saturated: s1 || s4,
        },
        StepOutcome {
            state: b,
            realized_mean: mean,
            saturated: s1 || s2 || s3 || s5,
        },
    )
}

/// One transition from a state that may exceed [`MAX_STATE`].
///
/// Below the bound this is [`step`]. Above it the offspring sum of `z`
/// parasites is replaced by `z·f'(1)`: its relative fluctuation is of order
/// `z^(-1/2) < 2^-30`. Heavy-tail contamination is drawn without clipping,
/// so arbitrarily large immigrant clusters keep their size.
pub fn wide_step<R: Rng + ?Sized>(z: WideCount, env: &EnvironmentLaw, imm: &ImmigrationPair, rng: &mut R) -> WideCount {
    let side = usize::from(rng.random::<bool>());
    let marginal = env.sample_environment(rng).marginal(side);
    let offspring = match z {
        WideCount::Exact(x) => match marginal.sum_iid(x, rng) {
            (total, false) => WideCount::Exact(total),
            (_, true) => WideCount::Log((x as f64).ln() + marginal.mean().ln()),
        },
        WideCount::Log(_) if marginal.mean() == 0.0 => WideCount::Exact(0),
        WideCount::Log(l) => WideCount::Log(l + marginal.mean().ln()),
    };
    let law = if z.is_zero() { imm.y0() } else { imm.y1() };
    offspring.add(law.sample_wide(rng)).normalized()
}

/// A simulated path `Z₀..Z_n`.
#[derive(Debug, Clone, Serialize)]
pub struct LineageTrajectory {
    pub states: Vec<u64>,
    /// Realized `f_i'(1)` for each of the `n` steps.
    pub env_means: Vec<f64>,
    /// Running products `Π_i = f_0'(1)···f_{i-1}'(1)`, with `Π_0 = 1`.
    pub normalizer: Vec<f64>,
    pub saturated: bool,
}

impl LineageTrajectory {
    pub fn last(&self) -> u64 {
        *self.states.last().expect("trajectory holds Z_0")
    }
}

pub fn simulate_path<R: Rng + ?Sized>(
    k0: u64,
    n: usize,
    env: &EnvironmentLaw,
    imm: &ImmigrationPair,
    rng: &mut R,
) -> LineageTrajectory {
    let mut states = Vec::with_capacity(n + 1);
    let mut env_means = Vec::with_capacity(n);
    let mut normalizer = Vec::with_capacity(n + 1);
    let mut z = k0.min(MAX_STATE);
    let mut pi = 1.0;
    let mut saturated = k0 > MAX_STATE;
    states.push(z);
    normalizer.push(pi);
    for _ in 0..n {
        let out = step(z, env, imm, rng);
        z = out.state;
        pi *= out.realized_mean;
        saturated |= out.saturated;
        states.push(z);
        env_means.push(out.realized_mean);
        normalizer.push(pi);
    }
    LineageTrajectory {
        states,
        env_means,
        normalizer,
        saturated,
    }
}

/// `W_n = Z_n / Π_n` along a trajectory.
pub fn normalized_process(trajectory: &LineageTrajectory) -> Result<Vec<f64>> {
    if let Some(i) = trajectory.env_means.iter().position(|&m| m <= 0.0) {
        return Err(Error::DegenerateMarginal(format!("realized mean zero at step {i}")));
    }
    Ok(trajectory
        .states
        .iter()
        .zip(&trajectory.normalizer)
        .map(|(&z, &pi)| z as f64 / pi)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum HittingTime {
    Hit(u64),
    /// No visit to 0 within the cap. A saturated state also ends here.
    Capped,
}

/// `T₀ = inf{i > 0 : Z_i = 0}` from `k0`, observed up to `cap` steps.
pub fn hitting_time<R: Rng + ?Sized>(
    k0: u64,
    env: &EnvironmentLaw,
    imm: &ImmigrationPair,
    rng: &mut R,
    cap: u64,
) -> HittingTime {
    assert!(cap >= 1, "cap must be positive");
    let mut z = k0.min(MAX_STATE);
    for i in 1..=cap {
        let out = step(z, env, imm, rng);
        if out.state == 0 {
            return HittingTime::Hit(i);
        }
        if out.saturated {
            return HittingTime::Capped;
        }
        z = out.state;
    }
    HittingTime::Capped
}

#[derive(Debug, Clone, Serialize)]
pub struct HittingSummary {
    /// Observed return times, each in `[1, cap]`.
    pub t0_samples: Vec<u64>,
    pub cap: u64,
    pub capped_fraction: f64,
}

pub fn hitting_summary<R: Rng + ?Sized>(
    k0: u64,
    runs: u64,
    env: &EnvironmentLaw,
    imm: &ImmigrationPair,
    rng: &mut R,
    cap: u64,
) -> HittingSummary {
    let mut t0_samples = Vec::with_capacity(runs as usize);
    let mut capped = 0u64;
    for _ in 0..runs {
        match hitting_time(k0, env, imm, rng, cap) {
            HittingTime::Hit(t) => t0_samples.push(t),
            HittingTime::Capped => capped += 1,
        }
    }
    HittingSummary {
        t0_samples,
        cap,
        capped_fraction: if runs == 0 { 0.0 } else { capped as f64 / runs as f64 },
    }
}

/// Mergeable visit counts of excursions from 0.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RegenerationTally {
    /// States visited at times `0..T₀` over all completed excursions.
    pub visits: EmpiricalMeasure,
    pub excursions: u64,
    pub total_length: u64,
    pub sum_squared_length: f64,
    pub capped: u64,
}

impl RegenerationTally {
    pub fn merge(&mut self, other: &RegenerationTally) {
        self.visits.merge(&other.visits);
        self.excursions += other.excursions;
        self.total_length += other.total_length;
        self.sum_squared_length += other.sum_squared_length;
        self.capped += other.capped;
    }

    /// Runs `excursions` excursions from 0, each observed for at most `cap`
    /// steps; capped excursions are counted but contribute no visits.
    pub fn collect<R: Rng + ?Sized>(
        env: &EnvironmentLaw,
        imm: &ImmigrationPair,
        rng: &mut R,
        excursions: u64,
        cap: u64,
    ) -> Self {
        let mut tally = Self::default();
        let mut path = Vec::new();
        'outer: for _ in 0..excursions {
            path.clear();
            let mut z = 0u64;
            path.push(z);
            for _ in 0..cap {
                let out = step(z, env, imm, rng);
                if out.state == 0 {
                    let len = path.len() as u64;
                    for &s in &path {
                        tally.visits.add(s, 1);
                    }
                    tally.excursions += 1;
                    tally.total_length += len;
                    tally.sum_squared_length += (len * len) as f64;
                    continue 'outer;
                }
                if out.saturated {
                    break;
                }
                z = out.state;
                path.push(z);
            }
            tally.capped += 1;
        }
        tally
    }

    pub fn estimate(self, cap: u64) -> Result<RegenerationEstimate> {
        let attempted = self.excursions + self.capped;
        if attempted == 0 || self.excursions == 0 || self.capped as f64 > MAX_CAPPED_FRACTION * attempted as f64 {
            return Err(Error::ExcursionCapExceeded {
                capped: self.capped,
                excursions: attempted,
                cap,
            });
        }
        let n = self.excursions as f64;
        let mean = self.total_length as f64 / n;
        let variance = if self.excursions > 1 {
            ((self.sum_squared_length - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        Ok(RegenerationEstimate {
            u_infinity: 1.0 / mean,
            mean_return_time: mean,
            return_time_variance: variance,
            excursions: self.excursions,
            capped: self.capped,
            measure: self.visits,
        })
    }
}

/// Stationary law estimated from excursions between visits to 0.
#[derive(Debug, Clone, Serialize)]
pub struct RegenerationEstimate {
    /// Visits per state; its frequencies are the stationary estimate.
    pub measure: EmpiricalMeasure,
    /// Completed excursions over their total length, estimating `1/E₀[T₀]`.
    pub u_infinity: f64,
    pub mean_return_time: f64,
    pub return_time_variance: f64,
    pub excursions: u64,
    pub capped: u64,
}

impl RegenerationEstimate {
    /// Delta-method interval for `u_∞` at the given level.
    pub fn u_infinity_ci(&self, level: f64) -> (f64, f64) {
        let z = normal_quantile(level);
        let se_mean = (self.return_time_variance / self.excursions as f64).sqrt();
        let se = se_mean / (self.mean_return_time * self.mean_return_time);
        (self.u_infinity - z * se, self.u_infinity + z * se)
    }
}

fn warn_if_not_ergodic(env: &EnvironmentLaw, imm: &ImmigrationPair) {
    match classify_regime(env, imm) {
        Ok(r) if r.is_ergodic() => {}
        Ok(r) => warn!("regeneration estimate requested outside the ergodic regime: {r:?}"),
        Err(e) => warn!("regeneration estimate requested with unclassifiable environment: {e}"),
    }
}

/// Regeneration estimate on a single stream.
pub fn stationary_by_regeneration<R: Rng + ?Sized>(
    env: &EnvironmentLaw,
    imm: &ImmigrationPair,
    rng: &mut R,
    excursions: u64,
    cap: u64,
) -> Result<RegenerationEstimate> {
    warn_if_not_ergodic(env, imm);
    RegenerationTally::collect(env, imm, rng, excursions, cap).estimate(cap)
}

/// Regeneration estimate fanned out over replicate streams of
/// [`EXCURSIONS_PER_STREAM`] excursions each; depends only on
/// `(seed, excursions, cap)`.
pub fn stationary_by_regeneration_seeded(
    env: &EnvironmentLaw,
    imm: &ImmigrationPair,
    seed: u64,
    excursions: u64,
    cap: u64,
) -> Result<RegenerationEstimate> {
    warn_if_not_ergodic(env, imm);
    let streams = excursions.div_ceil(EXCURSIONS_PER_STREAM);
    let parts = map_replicates(seed, streams, |i, rng: &mut SimRng| {
        let count = EXCURSIONS_PER_STREAM.min(excursions - i * EXCURSIONS_PER_STREAM);
        RegenerationTally::collect(env, imm, rng, count, cap)
    });
    let mut tally = RegenerationTally::default();
    for p in &parts {
        tally.merge(p);
    }
    tally.estimate(cap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::offspring::{build_binomial_split, BivariateOffspringLaw, CountLaw};
    use crate::presets;
    use crate::rng::stream;
    use crate::stats::tv_distance;
    use proptest::prelude::*;

    fn dead_env() -> EnvironmentLaw {
        EnvironmentLaw::single(BivariateOffspringLaw::dirac(0, 0))
    }

    #[test]
    fn step_examples() {
        let mut rng = stream(1, 0);
        let out = step(0, &dead_env(), &ImmigrationPair::zero(), &mut rng);
        assert_eq!(out.state, 0);
        assert_eq!(out.realized_mean, 0.0);

        let imm = ImmigrationPair::unconstrained(CountLaw::dirac(0), CountLaw::dirac(3));
        assert_eq!(step(5, &dead_env(), &imm, &mut rng).state, 3);

        let toy = presets::toy_chain();
        let n = 1_000_000;
        let s: u64 = (0..n).map(|_| step(0, &toy.env, &toy.imm, &mut rng).state).sum();
        assert!((s as f64 / n as f64 - 0.5).abs() < 0.002);
    }

    #[test]
    fn wide_step_agrees_with_step_below_the_bound() {
        let set = presets::subcritical_geometric();
        let (mut a, mut b) = (stream(21, 0), stream(21, 0));
        let (mut x, mut w) = (0u64, WideCount::Exact(0));
        for _ in 0..2000 {
            x = step(x, &set.env, &set.imm, &mut a).state;
            w = wide_step(w, &set.env, &set.imm, &mut b);
            assert_eq!(w, WideCount::Exact(x));
        }
    }

    #[test]
    fn wide_step_keeps_huge_states() {
        let env = EnvironmentLaw::single(BivariateOffspringLaw::dirac(4, 4));
        let mut rng = stream(22, 0);
        let next = wide_step(WideCount::Exact(MAX_STATE / 2), &env, &ImmigrationPair::zero(), &mut rng);
        let expected = (MAX_STATE as f64 / 2.0).ln() + 4f64.ln();
        assert!(matches!(next, WideCount::Log(l) if (l - expected).abs() < 1e-9));

        let thin = presets::clean(1).env;
        let mut z = WideCount::Log(100.0);
        for _ in 0..200 {
            z = wide_step(z, &thin, &ImmigrationPair::zero(), &mut rng);
        }
        assert_eq!(z, WideCount::Exact(0));
    }

    #[test]
    fn step_saturates() {
        let env = EnvironmentLaw::single(BivariateOffspringLaw::dirac(4, 4));
        let out = step(MAX_STATE / 2, &env, &ImmigrationPair::zero(), &mut stream(2, 0));
        assert!(out.saturated);
        assert_eq!(out.state, MAX_STATE);
    }

    #[test]
    fn path_examples() {
        let mut rng = stream(3, 0);
        let toy = presets::toy_chain();
        let t = simulate_path(4, 0, &toy.env, &toy.imm, &mut rng);
        assert_eq!(t.states, vec![4]);
        assert_eq!(t.normalizer, vec![1.0]);

        let t = simulate_path(7, 5, &dead_env(), &ImmigrationPair::zero(), &mut rng);
        assert_eq!(t.states, vec![7, 0, 0, 0, 0, 0]);

        // P(Z₂ = 0 | Z₀ = 0) = 1/4 + 1/2 on the two-state chain
        let n = 100_000;
        let zeros = (0..n)
            .filter(|_| simulate_path(0, 2, &toy.env, &toy.imm, &mut rng).last() == 0)
            .count();
        assert!((zeros as f64 / n as f64 - 0.75).abs() < 0.01);
    }

    #[test]
    fn hitting_time_examples() {
        let mut rng = stream(4, 0);
        let imm = ImmigrationPair::zero();
        assert_eq!(hitting_time(0, &dead_env(), &imm, &mut rng, 10), HittingTime::Hit(1));

        let toy = presets::toy_chain();
        let s = hitting_summary(0, 100_000, &toy.env, &toy.imm, &mut rng, 100);
        assert_eq!(s.capped_fraction, 0.0);
        assert!(s.t0_samples.iter().all(|&t| t == 1 || t == 2));
        let mean = s.t0_samples.iter().sum::<u64>() as f64 / s.t0_samples.len() as f64;
        assert!((mean - 1.5).abs() < 0.01);

        let env = build_binomial_split(&CountLaw::dirac(4), &[(0.5, 1.0)]).unwrap();
        let s = hitting_summary(1, 200, &env, &imm, &mut rng, 1000);
        assert!(s.capped_fraction > 0.0);
        assert!(s.t0_samples.iter().all(|&t| (1..=1000).contains(&t)));
    }

    #[test]
    fn regeneration_on_toy_chain() {
        let toy = presets::toy_chain();
        let est = stationary_by_regeneration(&toy.env, &toy.imm, &mut stream(5, 0), 100_000, 1000).unwrap();
        assert!((est.measure.frequency(0) - 2.0 / 3.0).abs() < 0.01);
        assert!((est.measure.frequency(1) - 1.0 / 3.0).abs() < 0.01);
        assert!((est.u_infinity - 2.0 / 3.0).abs() < 0.01);
        let total: f64 = est.measure.frequencies().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn regeneration_on_absorbing_zero() {
        let imm = ImmigrationPair::zero();
        let est = stationary_by_regeneration(&dead_env(), &imm, &mut stream(6, 0), 1000, 10).unwrap();
        assert_eq!(est.measure.frequency(0), 1.0);
        assert_eq!(est.u_infinity, 1.0);
    }

    #[test]
    fn regeneration_rejects_transient_chain() {
        let env = build_binomial_split(&CountLaw::dirac(4), &[(0.5, 1.0)]).unwrap();
        let imm = ImmigrationPair::new(CountLaw::bernoulli(0.5).unwrap(), CountLaw::bernoulli(0.5).unwrap()).unwrap();
        let r = stationary_by_regeneration(&env, &imm, &mut stream(7, 0), 500, 200);
        assert!(matches!(r, Err(Error::ExcursionCapExceeded { .. })));
    }

    #[test]
    fn seeded_regeneration_is_deterministic() {
        let toy = presets::toy_chain();
        let a = stationary_by_regeneration_seeded(&toy.env, &toy.imm, 9, 25_000, 100).unwrap();
        let b = stationary_by_regeneration_seeded(&toy.env, &toy.imm, 9, 25_000, 100).unwrap();
        assert_eq!(a.measure, b.measure);
        assert_eq!(a.excursions, 25_000);
    }

    #[test]
    fn normalized_process_examples() {
        let mut rng = stream(8, 0);
        let env = EnvironmentLaw::single(BivariateOffspringLaw::dirac(3, 3));
        let t = simulate_path(1, 10, &env, &ImmigrationPair::zero(), &mut rng);
        assert!(normalized_process(&t).unwrap().iter().all(|&w| (w - 1.0).abs() < 1e-12));

        let t = simulate_path(0, 5, &env, &ImmigrationPair::zero(), &mut rng);
        assert!(normalized_process(&t).unwrap().iter().all(|&w| w == 0.0));

        let t = simulate_path(0, 5, &dead_env(), &ImmigrationPair::zero(), &mut rng);
        assert!(matches!(normalized_process(&t), Err(Error::DegenerateMarginal(_))));
    }

    #[test]
    fn normalized_mean_matches_geometric_series() {
        // offspring Bin(6, 1/2) on each side: deterministic mean 3, Y = 1
        let env = build_binomial_split(&CountLaw::dirac(6), &[(0.5, 1.0)]).unwrap();
        let imm = ImmigrationPair::unconstrained(CountLaw::dirac(1), CountLaw::dirac(1));
        let mut rng = stream(10, 0);
        let n = 20_000;
        let mean: f64 = (0..n)
            .map(|_| *normalized_process(&simulate_path(0, 20, &env, &imm, &mut rng)).unwrap().last().unwrap())
            .sum::<f64>()
            / n as f64;
        let expected: f64 = (0..20).map(|i| 3f64.powi(-(i + 1))).sum();
        assert!((mean - expected).abs() < 0.02, "{mean} vs {expected}");
    }

    #[test]
    fn regeneration_matches_kernel_stationary_law() {
        let set = presets::subcritical_bernoulli();
        let est = stationary_by_regeneration(&set.env, &set.imm, &mut stream(11, 0), 100_000, 10_000).unwrap();
        let kernel = crate::oracle::build_kernel(&set.env, &set.imm, 64).unwrap();
        let exact = crate::oracle::stationary_solve(&kernel).unwrap();
        assert!(tv_distance(&est.measure, &exact.power_iteration) < 0.02);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn coupled_chains_stay_ordered(seed in any::<u64>(), low in 0u64..5, gap in 0u64..5) {
            let set = presets::subcritical_geometric();
            let mut rng = stream(seed, 0);
            let (mut a, mut b) = (low, low + gap);
            for _ in 0..200 {
                if a == 0 || b == 0 {
                    break;
                }
                let (x, y) = coupled_step(a, b, &set.env, &set.imm, &mut rng);
                prop_assert!(x.state <= y.state);
                a = x.state;
                b = y.state;
            }
        }
    }
}
