//! The cell population on the binary division tree.
//!
//! Every cell of generation `n` carries a parasite count. At division the
//! cell draws one environment, its parasites reproduce into the two
//! daughters, and each daughter independently receives contamination from
//! `Y₀` if the mother was clean and from `Y₁` otherwise.

use std::collections::BTreeMap;
use std::io::{self, Write};

use rand::Rng;
use serde::Serialize;

use crate::offspring::{CountLaw, EnvironmentLaw, ImmigrationLaw, ImmigrationPair};
use crate::sampling::saturating_mul_add;
use crate::stats::{least_squares_slope, EmpiricalMeasure};
use crate::{Error, Result};

pub const DEFAULT_BFS_DEPTH: u32 = 22;
pub const DEFAULT_DFS_DEPTH: u32 = 30;

/// Counts for one generation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationLedger {
    pub n: u32,
    /// Parasite count → number of cells.
    pub histogram: BTreeMap<u64, u64>,
    /// `2^n`.
    pub cells: u64,
    /// `N_n`, cells with at least one parasite.
    pub infected: u64,
    /// `P_n`, parasites summed over the generation.
    pub parasites_total: u128,
    /// Some cell count hit the saturation bound.
    pub saturated: bool,
}

impl GenerationLedger {
    pub fn from_histogram(n: u32, histogram: BTreeMap<u64, u64>) -> Self {
        let cells = histogram.values().sum();
        let infected = histogram.range(1..).map(|(_, &c)| c).sum();
        let parasites_total = histogram.iter().map(|(&k, &c)| k as u128 * c as u128).sum();
        Self {
            n,
            histogram,
            cells,
            infected,
            parasites_total,
            saturated: false,
        }
    }

    pub fn from_cells(n: u32, cells: &[u64]) -> Self {
        let mut histogram = BTreeMap::new();
        for &x in cells {
            *histogram.entry(x).or_insert(0) += 1;
        }
        Self::from_histogram(n, histogram)
    }

    pub fn count(&self, k: u64) -> u64 {
        self.histogram.get(&k).copied().unwrap_or(0)
    }

    /// `F_k(n)`.
    pub fn fraction(&self, k: u64) -> f64 {
        self.count(k) as f64 / self.cells as f64
    }

    /// `N_n / 2^n`.
    pub fn infected_fraction(&self) -> f64 {
        self.infected as f64 / self.cells as f64
    }

    pub fn to_measure(&self) -> EmpiricalMeasure {
        let mut m = EmpiricalMeasure::new();
        for (&k, &c) in &self.histogram {
            m.add(k, c);
        }
        m
    }
}

/// Counts over generations `0..=n`. Proportions use the denominator
/// `2^(n+1)`, one more than the number of cells.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrefixLedger {
    pub n: u32,
    pub histogram: BTreeMap<u64, u64>,
}

impl PrefixLedger {
    pub fn from_ledgers(ledgers: &[GenerationLedger]) -> Self {
        let mut histogram = BTreeMap::new();
        for l in ledgers {
            for (&k, &c) in &l.histogram {
                *histogram.entry(k).or_insert(0) += c;
            }
        }
        Self {
            n: ledgers.last().map_or(0, |l| l.n),
            histogram,
        }
    }

    pub fn cells(&self) -> u64 {
        self.histogram.values().sum()
    }

    /// `P_k(n)`.
    pub fn proportion(&self, k: u64) -> f64 {
        let count = self.histogram.get(&k).copied().unwrap_or(0);
        count as f64 / 2f64.powi(self.n as i32 + 1)
    }
}

/// Parasite counts of the two daughters of a cell with `x` parasites.
pub fn divide_cell<R: Rng + ?Sized>(
    x: u64,
    env: &EnvironmentLaw,
    imm: &ImmigrationPair,
    rng: &mut R,
) -> ((u64, u64), bool) {
    let ((a, b), s0) = if x == 0 {
        ((0, 0), false)
    } else {
        env.sample_environment(rng).sum_pairs(x, rng)
    };
    let law = imm.for_state(x);
    let (a, s1) = saturating_mul_add(a, law.sample(rng), 1);
    let (b, s2) = saturating_mul_add(b, law.sample(rng), 1);
    ((a, b), s0 || s1 || s2)
}

/// Next generation: daughters of cell `i` sit at positions `2i` and `2i+1`.
pub fn advance_generation<R: Rng + ?Sized>(
    cells: &[u64],
    env: &EnvironmentLaw,
    imm: &ImmigrationPair,
    rng: &mut R,
) -> (Vec<u64>, bool) {
    assert!(!cells.is_empty(), "advance_generation needs at least one cell");
    let mut out = Vec::with_capacity(2 * cells.len());
    let mut saturated = false;
    for &x in cells {
        let ((a, b), s) = divide_cell(x, env, imm, rng);
        out.push(a);
        out.push(b);
        saturated |= s;
    }
    (out, saturated)
}

fn check_depth(requested: u32, max: u32) -> Result<()> {
    if requested > max {
        Err(Error::DepthTooLarge { requested, max })
    } else {
        Ok(())
    }
}

/// Ledgers for generations `0..=n_max`, keeping one generation in memory.
///
/// When clean cells cannot be contaminated only infected cells are stored;
/// clean ones are counted.
pub fn simulate_tree_bfs<R: Rng + ?Sized>(
    k0: u64,
    n_max: u32,
    env: &EnvironmentLaw,
    imm: &ImmigrationPair,
    rng: &mut R,
) -> Result<Vec<GenerationLedger>> {
    check_depth(n_max, DEFAULT_BFS_DEPTH)?;
    let skip_clean = imm.y0().is_zero();
    let mut cells = vec![k0];
    let mut ledgers = vec![GenerationLedger::from_cells(0, &cells)];
    let mut saturated = false;
    for n in 1..=n_max {
        if skip_clean {
            cells.retain(|&x| x != 0);
        }
        cells = if cells.is_empty() {
            Vec::new()
        } else {
            let (next, s) = advance_generation(&cells, env, imm, rng);
            saturated |= s;
            next
        };
        let mut histogram = BTreeMap::new();
        for &x in &cells {
            *histogram.entry(x).or_insert(0u64) += 1;
        }
        let skipped = (1u64 << n) - cells.len() as u64;
        if skipped > 0 {
            *histogram.entry(0).or_insert(0) += skipped;
        }
        let mut ledger = GenerationLedger::from_histogram(n, histogram);
        ledger.saturated = saturated;
        ledgers.push(ledger);
    }
    Ok(ledgers)
}

/// Ledger of generation `n_target` only, by depth-first descent. Leaf
/// counts are also added to `accumulator`.
///
/// A clean cell that can never be contaminated has an all-clean subtree,
/// which is recorded without descending.
pub fn simulate_tree_dfs<R: Rng + ?Sized>(
    k0: u64,
    n_target: u32,
    env: &EnvironmentLaw,
    imm: &ImmigrationPair,
    rng: &mut R,
    accumulator: &mut EmpiricalMeasure,
) -> Result<GenerationLedger> {
    check_depth(n_target, DEFAULT_DFS_DEPTH)?;
    let clean_stays_clean = imm.y0().is_zero();
    let mut histogram: BTreeMap<u64, u64> = BTreeMap::new();
    let mut saturated = false;
    let mut stack: Vec<(u64, u32)> = vec![(k0, 0)];
    while let Some((x, depth)) = stack.pop() {
        if depth == n_target {
            *histogram.entry(x).or_insert(0) += 1;
            continue;
        }
        if x == 0 && clean_stays_clean {
            *histogram.entry(0).or_insert(0) += 1u64 << (n_target - depth);
            continue;
        }
        let ((a, b), s) = divide_cell(x, env, imm, rng);
        saturated |= s;
        stack.push((b, depth + 1));
        stack.push((a, depth + 1));
    }
    for (&k, &c) in &histogram {
        accumulator.add(k, c);
    }
    let mut ledger = GenerationLedger::from_histogram(n_target, histogram);
    ledger.saturated = saturated;
    Ok(ledger)
}

/// `N_n / 2^n` per generation.
pub fn infected_fraction_series(ledgers: &[GenerationLedger]) -> Vec<f64> {
    ledgers.iter().map(GenerationLedger::infected_fraction).collect()
}

/// `P_n` per generation.
pub fn total_parasites_series(ledgers: &[GenerationLedger]) -> Vec<u128> {
    ledgers.iter().map(|l| l.parasites_total).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthFit {
    /// Least-squares slope of `ln P_n` against `n`.
    pub exponent: f64,
    /// Zero counts dropped from the window.
    pub censored: usize,
    pub points: usize,
}

/// Fits the growth exponent over generations `⌈n/2⌉..=n`, `n` the last
/// index of `series`.
pub fn growth_exponent(series: &[u128]) -> Result<GrowthFit> {
    let n = series.len().checked_sub(1).ok_or(Error::EmptySeries)?;
    let start = n.div_ceil(2);
    let (xs, ys): (Vec<f64>, Vec<f64>) = (start..=n)
        .filter(|&i| series[i] > 0)
        .map(|i| (i as f64, (series[i] as f64).ln()))
        .unzip();
    let censored = n + 1 - start - xs.len();
    if xs.len() < 2 {
        return Err(Error::EmptySeries);
    }
    Ok(GrowthFit {
        exponent: least_squares_slope(&xs, &ys),
        censored,
        points: xs.len(),
    })
}

/// Total-offspring law of one parasite, when it does not depend on the
/// environment.
fn common_total_law(env: &EnvironmentLaw) -> Result<CountLaw> {
    let total_of = |law: &crate::offspring::BivariateOffspringLaw| {
        let mut pmf: Vec<f64> = Vec::new();
        for ((j, k), p) in law.support() {
            let t = (j + k) as usize;
            if pmf.len() <= t {
                pmf.resize(t + 1, 0.0);
            }
            pmf[t] += p;
        }
        pmf
    };
    let mut components = env.components();
    let (first, _) = components.next().ok_or(Error::InvalidLaw("empty environment".into()))?;
    let reference = total_of(first);
    for (law, _) in components {
        let other = total_of(law);
        let len = reference.len().max(other.len());
        let differs = (0..len).any(|i| {
            (reference.get(i).copied().unwrap_or(0.0) - other.get(i).copied().unwrap_or(0.0)).abs() > 1e-12
        });
        if differs {
            return Err(Error::InvalidArgument(
                "total offspring law depends on the environment".into(),
            ));
        }
    }
    CountLaw::from_pmf(reference)
}

/// `P_0..P_n` without tracking cells.
///
/// When the total offspring of a parasite has a law `Z` not depending on the
/// environment and contamination does not depend on the state, generation
/// totals satisfy `P_{n+1} = Σ_{i ≤ P_n} Z_i + Σ_{j ≤ 2^{n+1}} Y_j`, which
/// has the same law as the totals of [`simulate_tree_bfs`] at a cost
/// independent of the number of cells.
pub fn simulate_total_parasites<R: Rng + ?Sized>(
    k0: u64,
    n: u32,
    env: &EnvironmentLaw,
    imm: &ImmigrationPair,
    rng: &mut R,
) -> Result<(Vec<u128>, bool)> {
    let z = common_total_law(env)?;
    let y = match (imm.y0(), imm.y1()) {
        (ImmigrationLaw::Finite(a), ImmigrationLaw::Finite(b)) if a == b => a.clone(),
        _ => {
            return Err(Error::InvalidArgument(
                "aggregated totals need identical finite Y₀ and Y₁".into(),
            ))
        }
    };
    if n > 62 {
        return Err(Error::DepthTooLarge { requested: n, max: 62 });
    }
    let mut totals = vec![k0 as u128];
    let mut current = k0;
    let mut saturated = false;
    for g in 1..=n {
        let (off, s1) = z.sum_iid(current, rng);
        let (imm_total, s2) = y.sum_iid(1u64 << g, rng);
        let (next, s3) = saturating_mul_add(off, imm_total, 1);
        saturated |= s1 || s2 || s3;
        current = next;
        totals.push(current as u128);
    }
    Ok((totals, saturated))
}

/// `E(P_n)` from zero parasites when each parasite has mean `m` offspring in
/// total and each cell receives mean `mean_y` contaminants.
pub fn expected_total_parasites(m: f64, mean_y: f64, n: u32) -> f64 {
    let two_n = 2f64.powi(n as i32);
    if (m - 2.0).abs() < 1e-12 {
        mean_y * n as f64 * two_n
    } else {
        2.0 * mean_y * (m.powi(n as i32) - two_n) / (m - 2.0)
    }
}

pub fn write_ledger_csv_header<W: Write>(mut w: W) -> io::Result<()> {
    writeln!(w, "run_id,n,k,count")
}

/// Rows `run_id,n,k,count`, one per nonempty histogram bin.
pub fn write_ledger_csv<W: Write>(mut w: W, run_id: u64, ledgers: &[GenerationLedger]) -> io::Result<()> {
    for l in ledgers {
        for (k, c) in &l.histogram {
            writeln!(w, "{run_id},{},{k},{c}", l.n)?;
        }
    }
    Ok(())
}
