//! Acceptance suites: each criterion runs a Monte Carlo experiment or an
//! exact computation and compares it with its reference value.

use std::fmt;
use std::time::Instant;

use serde::Serialize;

use crate::lineage::{
    normalized_process, simulate_path, stationary_by_regeneration_seeded, step, wide_step,
    DEFAULT_HITTING_CAP,
};
use crate::offspring::{expected_log_inverse, uniform_atoms, EnvironmentLaw, ImmigrationPair, WideCount};
use crate::oracle::{
    build_kernel, hitting_tail, propagate, renewal_limit, renewal_sequence, stationary_solve, survival_curve,
};
use crate::presets::{self, ModelSet};
use crate::rng::{map_replicates, SimRng};
use crate::stats::{
    mean_variance, normal_quantile, proportion_ci, sqrtn_stabilization, tv_distance, CltScaling, EmpiricalMeasure,
};
use crate::tree::{
    expected_total_parasites, growth_exponent, infected_fraction_series, simulate_total_parasites,
    simulate_tree_bfs, simulate_tree_dfs,
};
use crate::{Error, Result};

pub const DEFAULT_SEED: u64 = 20_080_611;

/// Suite names accepted by [`run_suite`].
pub const SUITES: &[&str] = &[
    "oracle-equivalence",
    "toy-renewal",
    "stationary-tree",
    "recovery",
    "binomial-criterion",
    "critical-survival",
    "hitting-tail",
    "normalized-limit",
    "growth",
    "divergence",
    "clt",
    "toy",
    "all",
];

#[derive(Debug, Clone, Serialize)]
pub struct CriterionReport {
    pub id: String,
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub tolerance: String,
    pub runtime_secs: f64,
    /// Sub-checks and supplementary values.
    pub details: Vec<String>,
}

impl fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {}: measured {:.6} (want {}) in {:.1}s",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.tolerance,
            self.runtime_secs
        )?;
        for d in &self.details {
            write!(f, "\n    {d}")?;
        }
        Ok(())
    }
}

struct Timer {
    id: &'static str,
    name: &'static str,
    start: Instant,
}

impl Timer {
    fn start(id: &'static str, name: &'static str) -> Self {
        Self {
            id,
            name,
            start: Instant::now(),
        }
    }

    fn finish(self, passed: bool, measured: f64, tolerance: impl Into<String>, details: Vec<String>) -> CriterionReport {
        CriterionReport {
            id: self.id.into(),
            name: self.name.into(),
            passed,
            measured,
            tolerance: tolerance.into(),
            runtime_secs: self.start.elapsed().as_secs_f64(),
            details,
        }
    }
}

fn final_state(k0: u64, n: usize, env: &EnvironmentLaw, imm: &ImmigrationPair, rng: &mut SimRng) -> u64 {
    let mut z = k0;
    for _ in 0..n {
        z = step(z, env, imm, rng).state;
    }
    z
}

fn lineage_law(set: &ModelSet, k0: u64, n: usize, paths: u64, seed: u64) -> EmpiricalMeasure {
    EmpiricalMeasure::from_samples(map_replicates(seed, paths, |_, rng| {
        final_state(k0, n, &set.env, &set.imm, rng)
    }))
}

/// Monte Carlo law of `Z₃₀` against exact propagation.
pub fn oracle_equivalence(seed: u64) -> Result<CriterionReport> {
    let t = Timer::start("AC-1", "oracle-equivalence");
    let mut worst: f64 = 0.0;
    let mut details = Vec::new();
    for (i, set) in [
        presets::toy_chain(),
        presets::subcritical_bernoulli(),
        presets::subcritical_geometric(),
    ]
    .iter()
    .enumerate()
    {
        let kernel = build_kernel(&set.env, &set.imm, 256)?;
        let exact = propagate(&kernel, 0, 30);
        let mc = lineage_law(set, 0, 30, 100_000, seed.wrapping_add(i as u64));
        let tv = tv_distance(&mc, &exact);
        details.push(format!("{}: TV = {tv:.5}", set.name));
        worst = worst.max(tv);
    }
    Ok(t.finish(worst < 0.02, worst, "TV < 0.02", details))
}

fn renewal_check(set: &ModelSet, seed: u64, excursions: u64) -> Result<(bool, f64, String)> {
    let kernel = build_kernel(&set.env, &set.imm, 256)?;
    let limit = renewal_limit(&kernel, 100_000)?;
    let u = renewal_sequence(&kernel, 400);
    let diff = (u[400] - limit.u_infinity).abs();
    let est = stationary_by_regeneration_seeded(&set.env, &set.imm, seed, excursions, DEFAULT_HITTING_CAP)?;
    let (lo, hi) = est.u_infinity_ci(0.99);
    let covered = lo <= limit.u_infinity && limit.u_infinity <= hi;
    Ok((
        diff < 1e-9 && covered,
        diff,
        format!(
            "{}: u_400 - u_inf = {diff:.2e}, u_inf = {:.9}, regeneration {:.6} in [{lo:.6}, {hi:.6}]: {covered}",
            set.name, limit.u_infinity, est.u_infinity
        ),
    ))
}

/// Renewal limit against `1/E₀T₀`, and the regeneration estimate of it.
pub fn toy_renewal(seed: u64) -> Result<CriterionReport> {
    let t = Timer::start("AC-2", "toy-renewal");
    let mut passed = true;
    let mut worst: f64 = 0.0;
    let mut details = Vec::new();
    for (i, set) in [presets::toy_chain(), presets::subcritical_geometric()].iter().enumerate() {
        let (ok, diff, line) = renewal_check(set, seed.wrapping_add(i as u64), 100_000)?;
        passed &= ok;
        worst = worst.max(diff);
        details.push(line);
    }
    Ok(t.finish(passed, worst, "|u_400 - 1/E0T0| < 1e-9, regeneration 99% CI covers", details))
}

/// Leaf histogram of deep trees against the stationary law of the cell line.
pub fn stationary_tree(seed: u64) -> Result<CriterionReport> {
    let t = Timer::start("AC-3", "stationary-tree");
    let set = presets::subcritical_geometric();
    let trees = 200;
    let mut leaves = EmpiricalMeasure::new();
    let parts = map_replicates(seed, trees, |_, rng| {
        let mut acc = EmpiricalMeasure::new();
        simulate_tree_dfs(0, 16, &set.env, &set.imm, rng, &mut acc).map(|_| acc)
    });
    for p in parts {
        leaves.merge(&p?);
    }
    let regen = stationary_by_regeneration_seeded(&set.env, &set.imm, seed ^ 1, 100_000, DEFAULT_HITTING_CAP)?;
    let kernel = build_kernel(&set.env, &set.imm, 256)?;
    let exact = stationary_solve(&kernel)?;
    let tv_tree_regen = tv_distance(&leaves, &regen.measure);
    let tv_tree_oracle = tv_distance(&leaves, &exact.power_iteration);
    let tv_regen_oracle = tv_distance(&regen.measure, &exact.power_iteration);
    let worst = tv_tree_regen.max(tv_tree_oracle).max(tv_regen_oracle);

    let n8 = 8usize;
    let fractions = map_replicates(seed ^ 2, trees, |_, rng| {
        simulate_tree_bfs(0, n8 as u32, &set.env, &set.imm, rng).map(|l| l[n8].clone())
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let law8 = propagate(&kernel, 0, n8);
    let mut checked = 0;
    let mut misses = Vec::new();
    for k in 0..law8.probs.len() as u64 {
        let p = law8.get(k as usize);
        if p < 1e-3 {
            continue;
        }
        checked += 1;
        let xs: Vec<f64> = fractions.iter().map(|l| l.fraction(k)).collect();
        let (mean, var) = mean_variance(&xs);
        let se = (var / trees as f64).sqrt();
        if (mean - p).abs() > 3.0 * se {
            misses.push(format!("k={k}: {mean:.5} vs {p:.5} (se {se:.5})"));
        }
    }
    let details = vec![
        format!("TV tree/regeneration = {tv_tree_regen:.5}"),
        format!("TV tree/oracle = {tv_tree_oracle:.5}"),
        format!("TV regeneration/oracle = {tv_regen_oracle:.5}"),
        format!("E F_k(8) vs P(Z_8 = k): {} of {checked} values outside 3 sigma {misses:?}", misses.len()),
    ];
    Ok(t.finish(
        worst < 0.05 && misses.is_empty(),
        worst,
        "pairwise TV < 0.05, E F_k(8) within 3 sigma",
        details,
    ))
}

/// Infected fraction at generation 20 without contamination, from one
/// infected cell.
pub fn recovery(seed: u64) -> Result<CriterionReport> {
    let t = Timer::start("AC-4", "recovery");
    let runs = 100;
    let n = 20u32;
    let mut details = Vec::new();
    let mut passed = true;
    let mut monotone_runs = 0;
    let mut measured = 0.0;
    for (i, z) in [1u64, 2, 4].into_iter().enumerate() {
        let set = presets::clean(z);
        let series = map_replicates(seed.wrapping_add(i as u64), runs, |_, rng| {
            simulate_tree_bfs(1, n, &set.env, &set.imm, rng).map(|l| infected_fraction_series(&l))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        monotone_runs += series.iter().filter(|f| f.windows(2).all(|w| w[1] <= w[0])).count();
        let last: Vec<f64> = series.iter().map(|f| f[n as usize]).collect();
        if z == 4 {
            let surviving: Vec<f64> = last.iter().copied().filter(|&f| f > 0.0).collect();
            let high = surviving.iter().filter(|&&f| f > 0.05).count();
            let share = high as f64 / surviving.len().max(1) as f64;
            let ok = !surviving.is_empty() && share >= 0.5;
            passed &= ok;
            details.push(format!(
                "{}: {high} of {} surviving runs above 0.05 ({share:.2}, want >= 0.5): {ok}",
                set.name,
                surviving.len()
            ));
        } else {
            let low = last.iter().filter(|&&f| f < 0.01).count();
            let share = low as f64 / runs as f64;
            let ok = share >= 0.95;
            passed &= ok;
            if z == 2 {
                measured = share;
            }
            let mean = last.iter().sum::<f64>() / runs as f64;
            details.push(format!(
                "{}: {low} of {runs} runs below 0.01 ({share:.2}, want >= 0.95), mean N_20/2^20 = {mean:.4}: {ok}",
                set.name
            ));
        }
    }
    let monotone_ok = monotone_runs == 3 * runs as usize;
    passed &= monotone_ok;
    details.push(format!("N_n/2^n nonincreasing in {monotone_runs} of {} runs", 3 * runs));
    Ok(t.finish(passed, measured, "share of critical runs below 0.01 >= 0.95; see sub-checks", details))
}

/// `P(Z_n > 0)` with random binomial sharing, on either side of the
/// criterion `log E(Z) ≤ E log(1/P)`.
pub fn binomial_criterion(_seed: u64) -> Result<CriterionReport> {
    let t = Timer::start("AC-5", "binomial-criterion");
    let atoms = uniform_atoms(64);
    let e_log = expected_log_inverse(&atoms);
    let log_ok = (e_log - 1.0).abs() < 0.01;
    let low = survival_curve(&presets::clean_uniform_sharing(2, 64).env, 1, 40, 512)?;
    let high = survival_curve(&presets::clean_uniform_sharing(4, 64).env, 1, 40, 512)?;
    let recovered_at = low.probabilities.iter().position(|&p| p < 0.05);
    let high_min = high.probabilities.iter().copied().fold(f64::INFINITY, f64::min);
    let low_ok = recovered_at.is_some_and(|n| n <= 40);
    let high_ok = high_min > 0.2;
    let details = vec![
        format!("E log(1/P) over 64 atoms = {e_log:.5}: {log_ok}"),
        format!(
            "Z=2: P(Z_40 > 0) = {:.5}, first below 0.05 at n = {recovered_at:?}: {low_ok}",
            low.probabilities[40]
        ),
        format!("Z=4: min over n <= 40 of P(Z_n > 0) = {high_min:.5} (overflow {:.2e}): {high_ok}", high.overflow),
    ];
    Ok(t.finish(
        log_ok && low_ok && high_ok,
        low.probabilities[40],
        "Z=2 below 0.05 by n=40, Z=4 above 0.2",
        details,
    ))
}

fn sqrt_band(env: &EnvironmentLaw) -> Result<(f64, f64, f64)> {
    let curve = survival_curve(env, 1, 256, 512)?;
    let scaled: Vec<f64> = (16..=256).map(|n| (n as f64).sqrt() * curve.probabilities[n]).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = scaled.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((max / min, scaled[0], scaled[scaled.len() - 1]))
}

/// `√n P(Z_n > 0)` over `n ∈ [16, 256]` for the critical binomial split.
pub fn critical_survival(_seed: u64) -> Result<CriterionReport> {
    let t = Timer::start("AC-6", "critical-survival");
    let (ratio, first, last) = sqrt_band(&presets::clean(2).env)?;
    let (r_ratio, r_first, r_last) = sqrt_band(&presets::random_critical().env)?;
    let details = vec![
        format!("Z=2, p=1/2: sqrt(n) P(Z_n > 0) = {first:.4} at n=16, {last:.4} at n=256, max/min = {ratio:.4}"),
        format!(
            "random critical environment (informational): {r_first:.4} at n=16, {r_last:.4} at n=256, max/min = {r_ratio:.4}"
        ),
    ];
    Ok(t.finish(ratio <= 3.0, ratio, "max/min <= 3", details))
}

/// Ratios of consecutive return-time tails.
pub fn hitting_tail_ratio(_seed: u64) -> Result<CriterionReport> {
    let t = Timer::start("AC-7", "hitting-tail");
    let set = presets::subcritical_bounded();
    let kernel = build_kernel(&set.env, &set.imm, 256)?;
    let tail = hitting_tail(&kernel, 0, 200);
    let ratios: Vec<f64> = tail.windows(2).skip(1).map(|w| w[1] / w[0]).collect();
    let last = &ratios[ratios.len() - 20..];
    let max = last.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = last.iter().copied().fold(f64::INFINITY, f64::min);
    let details = vec![format!(
        "last 20 ratios in [{min:.8}, {max:.8}], P(T0 > 200) = {:.3e}",
        tail[200]
    )];
    Ok(t.finish(max - min < 0.01 && max < 0.99, max, "spread < 0.01, ratio < 0.99", details))
}

/// `W_n = Z_n / 3^n` with one immigrant per step.
pub fn normalized_limit(seed: u64) -> Result<CriterionReport> {
    let t = Timer::start("AC-8", "normalized-limit");
    let set = presets::normalized_limit();
    let paths = 100_000;
    let pairs = map_replicates(seed, paths, |_, rng| {
        let traj = simulate_path(0, 20, &set.env, &set.imm, rng);
        normalized_process(&traj).map(|w| (w[20], (w[20] - w[15]).abs(), traj.saturated))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let w20: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mut gaps: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    gaps.sort_by(f64::total_cmp);
    let median = gaps[gaps.len() / 2];
    let (mean, var) = mean_variance(&w20);
    let saturated = pairs.iter().filter(|p| p.2).count();
    let mean_ok = (mean - 0.5).abs() <= 0.02;
    let gap_ok = median < 0.05;
    let details = vec![
        format!(
            "E W_20 = {mean:.5} (se {:.5}, exact {:.8}): {mean_ok}",
            (var / paths as f64).sqrt(),
            0.5 * (1.0 - 3f64.powi(-20))
        ),
        format!("median |W_20 - W_15| = {median:.3e}: {gap_ok}"),
        format!("saturated paths: {saturated}"),
    ];
    Ok(t.finish(mean_ok && gap_ok, mean, "0.5 +- 0.02, median gap < 0.05", details))
}

/// Growth exponent of the parasite total and the exact mean at `n = 3`.
pub fn growth(seed: u64) -> Result<CriterionReport> {
    let t = Timer::start("AC-9", "growth");
    let runs = 1000;
    let mut details = Vec::new();
    let mut passed = true;
    let mut worst: f64 = 0.0;
    for (i, (m, target)) in [(3.0, 3f64.ln()), (1.5, 2f64.ln())].into_iter().enumerate() {
        let set = presets::growth(m);
        let fits = map_replicates(seed.wrapping_add(i as u64), runs, |_, rng| {
            simulate_total_parasites(0, 20, &set.env, &set.imm, rng).and_then(|(s, _)| growth_exponent(&s))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let mean = fits.iter().map(|f| f.exponent).sum::<f64>() / runs as f64;
        let censored: usize = fits.iter().map(|f| f.censored).sum();
        let err = (mean - target).abs();
        worst = worst.max(err);
        let ok = err <= 0.15;
        passed &= ok;
        details.push(format!(
            "m={m}: mean exponent {mean:.4} vs {target:.4} (|diff| {err:.4}, censored points {censored}): {ok}"
        ));
    }
    let set = presets::growth(4.0);
    let trees = 100_000;
    let totals = map_replicates(seed ^ 3, trees, |_, rng| {
        simulate_tree_bfs(0, 3, &set.env, &set.imm, rng).map(|l| l[3].parasites_total as f64)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let (mean, var) = mean_variance(&totals);
    let exact = expected_total_parasites(4.0, 0.5, 3);
    let half = normal_quantile(0.99) * (var / trees as f64).sqrt();
    let ok = (mean - exact).abs() <= half;
    passed &= ok;
    details.push(format!(
        "m=4: E P_3 = {mean:.4} +- {half:.4} (99%), exact {exact}: {ok}"
    ));
    Ok(t.finish(passed, worst, "|exponent - log max(2,m)| <= 0.15, E P_3 = 28 in 99% CI", details))
}

fn decreasing_low_mass(set: &ModelSet, seed: u64, paths: u64) -> (bool, String) {
    let grid = [50usize, 100, 200, 300, 400, 500];
    let hits = map_replicates(seed, paths, |_, rng| {
        let mut z = WideCount::Exact(0);
        let mut low = [false; 6];
        let mut g = 0;
        for n in 1..=500 {
            z = wide_step(z, &set.env, &set.imm, rng);
            if n == grid[g] {
                low[g] = matches!(z, WideCount::Exact(x) if x <= 10);
                g += 1;
            }
        }
        low
    });
    let counts: Vec<u64> = (0..grid.len()).map(|g| hits.iter().filter(|h| h[g]).count() as u64).collect();
    let cis: Vec<(f64, f64)> = counts.iter().map(|&c| proportion_ci(c, paths, 0.99)).collect();
    let props: Vec<f64> = counts.iter().map(|&c| c as f64 / paths as f64).collect();
    let stepwise = props.windows(2).zip(cis.windows(2)).all(|(p, c)| p[1] <= c[0].1 && c[1].0 <= p[0]);
    let overall = cis[cis.len() - 1].1 < cis[0].0;
    let ok = stepwise && overall;
    let shown: Vec<String> = grid.iter().zip(&props).map(|(n, p)| format!("n={n}: {p:.4}")).collect();
    (ok, format!("{}: P(Z_n <= 10) {}: {ok}", set.name, shown.join(", ")))
}

/// Mass near zero drains away in the non-ergodic regimes.
pub fn divergence(seed: u64) -> Result<CriterionReport> {
    let t = Timer::start("AC-10", "divergence");
    let (a, line_a) = decreasing_low_mass(&presets::critical_contaminated(), seed, 10_000);
    let (b, line_b) = decreasing_low_mass(&presets::heavy_tail_contaminated(), seed ^ 5, 10_000);
    let set = presets::supercritical_contaminated();
    let trees = 20;
    let parts = map_replicates(seed ^ 7, trees, |_, rng| {
        let mut acc = EmpiricalMeasure::new();
        simulate_tree_dfs(0, 16, &set.env, &set.imm, rng, &mut acc).map(|_| acc)
    });
    let mut leaves = EmpiricalMeasure::new();
    for p in parts {
        leaves.merge(&p?);
    }
    let worst = (0..=5).map(|k| leaves.frequency(k)).fold(0.0, f64::max);
    let c = worst < 0.05;
    let shown: Vec<String> = (0..=5).map(|k| format!("{:.4}", leaves.frequency(k))).collect();
    let details = vec![
        line_a,
        line_b,
        format!("{}: F_k(16) for k = 0..5: [{}]: {c}", set.name, shown.join(", ")),
    ];
    Ok(t.finish(a && b && c, worst, "P(Z_n <= 10) decreasing, max F_k(16) < 0.05", details))
}

/// Rescaled fluctuations of `P_0(n)` around `f_0` for the toy chain.
pub fn clt(seed: u64) -> Result<CriterionReport> {
    let t = Timer::start("AC-11", "clt");
    let set = presets::toy_chain();
    let kernel = build_kernel(&set.env, &set.imm, 8)?;
    let f0 = stationary_solve(&kernel)?.power_iteration.get(0);
    let grid = [8u32, 12, 16];
    let replicates = 200;
    let rows = map_replicates(seed, replicates, |_, rng| {
        simulate_tree_bfs(0, 16, &set.env, &set.imm, rng).map(|ledgers| {
            let mut clean = 0u64;
            let mut out = Vec::new();
            for l in &ledgers {
                clean += l.count(0);
                if grid.contains(&l.n) {
                    out.push(clean as f64 / 2f64.powi(l.n as i32 + 1));
                }
            }
            out
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let samples: Vec<(u32, Vec<f64>)> = grid
        .iter()
        .enumerate()
        .map(|(i, &n)| (n, rows.iter().map(|r| r[i]).collect()))
        .collect();
    let report = sqrtn_stabilization(&samples, f0, CltScaling::Generation);
    let tree = sqrtn_stabilization(&samples, f0, CltScaling::TreeSize);
    let mut details: Vec<String> = report
        .rows
        .iter()
        .map(|r| {
            format!(
                "n={}: sqrt(n) scale mean {:.5} in [{:.5}, {:.5}], variance {:.3e}",
                r.n, r.mean, r.mean_ci.0, r.mean_ci.1, r.variance
            )
        })
        .collect();
    details.push(format!(
        "variance ratio (n=16 over n=12): {:.4}, centered: {}",
        report.variance_ratio,
        report.centered()
    ));
    details.push(format!(
        "supplementary sqrt(2^(n+1)) scaling: variance ratio {:.4}, centered {}",
        tree.variance_ratio,
        tree.centered()
    ));
    Ok(t.finish(
        report.centered() && report.stabilized,
        report.variance_ratio,
        "mean CI covers 0, variance ratio in [0.5, 2]",
        details,
    ))
}

/// Quick toy-chain checks: exact renewal identity, two stationary
/// computations, and a small Monte Carlo comparison.
pub fn toy(seed: u64) -> Result<Vec<CriterionReport>> {
    let set = presets::toy_chain();
    let t = Timer::start("toy-1", "toy-renewal-identity");
    let kernel = build_kernel(&set.env, &set.imm, 8)?;
    let limit = renewal_limit(&kernel, 1000)?;
    let u = renewal_sequence(&kernel, 400);
    let diff = (u[400] - limit.u_infinity).abs();
    let r1 = t.finish(
        diff < 1e-9 && (limit.u_infinity - 2.0 / 3.0).abs() < 1e-12,
        diff,
        "|u_400 - 1/E0T0| < 1e-9, u_inf = 2/3",
        vec![format!("u_inf = {:.12}", limit.u_infinity)],
    );

    let t = Timer::start("toy-2", "toy-stationary-two-methods");
    let s = stationary_solve(&kernel)?;
    let tv = tv_distance(&s.power_iteration, &s.excursion);
    let r2 = t.finish(tv < 1e-9, tv, "TV < 1e-9", vec![]);

    let t = Timer::start("toy-3", "toy-monte-carlo");
    let exact = propagate(&kernel, 0, 30);
    let mc = lineage_law(&set, 0, 30, 20_000, seed);
    let tv = tv_distance(&mc, &exact);
    let r3 = t.finish(tv < 0.02, tv, "TV < 0.02", vec![]);

    let t = Timer::start("toy-4", "toy-regeneration");
    let (ok, diff, line) = renewal_check(&set, seed ^ 9, 20_000)?;
    let r4 = t.finish(ok, diff, "regeneration 99% CI covers 2/3", vec![line]);
    Ok(vec![r1, r2, r3, r4])
}

/// Runs a named suite.
pub fn run_suite(name: &str, seed: u64) -> Result<Vec<CriterionReport>> {
    let one = |r: Result<CriterionReport>| r.map(|r| vec![r]);
    match name {
        "oracle-equivalence" => one(oracle_equivalence(seed)),
        "toy-renewal" => one(toy_renewal(seed)),
        "stationary-tree" => one(stationary_tree(seed)),
        "recovery" => one(recovery(seed)),
        "binomial-criterion" => one(binomial_criterion(seed)),
        "critical-survival" => one(critical_survival(seed)),
        "hitting-tail" => one(hitting_tail_ratio(seed)),
        "normalized-limit" => one(normalized_limit(seed)),
        "growth" => one(growth(seed)),
        "divergence" => one(divergence(seed)),
        "clt" => one(clt(seed)),
        "toy" => toy(seed),
        "all" => {
            let mut out = Vec::new();
            for s in &SUITES[..SUITES.len() - 2] {
                out.extend(run_suite(s, seed)?);
            }
            Ok(out)
        }
        other => Err(Error::UnknownSuite(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_suite() {
        assert!(matches!(run_suite("nope", 1), Err(Error::UnknownSuite(_))));
    }

    #[test]
    fn toy_suite_passes() {
        for r in run_suite("toy", DEFAULT_SEED).unwrap() {
            assert!(r.passed, "{r}");
        }
    }

    #[test]
    fn exact_suites_are_cheap_and_deterministic() {
        let a = hitting_tail_ratio(0).unwrap();
        let b = hitting_tail_ratio(1).unwrap();
        assert_eq!(a.measured, b.measured);
        assert!(a.passed, "{a}");
    }
}
