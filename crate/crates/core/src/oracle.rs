//! Exact computations on a truncated state space `{0..K}`.
//!
//! The one-step law of the random cell line is assembled into a row-stochastic
//! matrix with an extra overflow column holding the mass that leaves `{0..K}`.
//! Overflow is tracked as an absorbing state, never renormalized away.

use std::io::{self, Write};

use serde::Serialize;

use crate::offspring::{CountLaw, EnvironmentLaw, ImmigrationLaw, ImmigrationPair};
use crate::stats::Measure;
use crate::{Error, Result};

pub const DEFAULT_TRUNCATION: usize = 512;
pub const DEFAULT_OVERFLOW_BUDGET: f64 = 1e-6;
/// Largest number of environment sequences enumerated exactly.
pub const ENUMERATION_BUDGET: u64 = 2_000_000;
pub const DEFAULT_ITERATION_BUDGET: usize = 200_000;
const STATIONARY_TOLERANCE: f64 = 1e-12;
const RENEWAL_REMAINDER_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelOptions {
    pub truncation: usize,
    /// Largest overflow tolerated in any row; `None` accepts any overflow
    /// (for growing chains whose escaping mass is the point).
    pub overflow_budget: Option<f64>,
}

impl Default for KernelOptions {
    fn default() -> Self {
        Self {
            truncation: DEFAULT_TRUNCATION,
            overflow_budget: Some(DEFAULT_OVERFLOW_BUDGET),
        }
    }
}

/// Transition probabilities `P(x → y)` for `x, y ≤ K`, plus the mass each
/// row sends above `K`.
#[derive(Debug, Clone)]
pub struct TruncatedKernel {
    size: usize,
    matrix: Vec<f64>,
    overflow: Vec<f64>,
    heavy_tail_truncated: bool,
}

impl TruncatedKernel {
    /// `K`.
    pub fn truncation(&self) -> usize {
        self.size - 1
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.matrix[x * self.size..(x + 1) * self.size]
    }

    pub fn prob(&self, x: usize, y: usize) -> f64 {
        self.row(x)[y]
    }

    pub fn overflow(&self, x: usize) -> f64 {
        self.overflow[x]
    }

    pub fn max_row_overflow(&self) -> f64 {
        self.overflow.iter().copied().fold(0.0, f64::max)
    }

    /// A heavy-tail contamination law was cut at `K`; its tail mass sits in
    /// the overflow column.
    pub fn heavy_tail_truncated(&self) -> bool {
        self.heavy_tail_truncated
    }

    /// One step `v ↦ vP`, overflow absorbing.
    pub fn apply(&self, v: &PmfVector) -> PmfVector {
        let mut out = vec![0.0; self.size];
        let mut overflow = v.overflow;
        for (x, &mass) in v.probs.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            for (o, &p) in out.iter_mut().zip(self.row(x)) {
                *o += mass * p;
            }
            overflow += mass * self.overflow[x];
        }
        PmfVector { probs: out, overflow }
    }

    /// Long format `from,to,prob`; `to = overflow` for the escaping mass.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "from,to,prob")?;
        for x in 0..self.size {
            for (y, &p) in self.row(x).iter().enumerate() {
                if p != 0.0 {
                    writeln!(w, "{x},{y},{p:e}")?;
                }
            }
            writeln!(w, "{x},overflow,{:e}", self.overflow[x])?;
        }
        Ok(())
    }
}

/// Law on `{0..K}` plus the mass above `K`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PmfVector {
    pub probs: Vec<f64>,
    pub overflow: f64,
}

impl PmfVector {
    pub fn point(k: usize, truncation: usize) -> Self {
        let mut probs = vec![0.0; truncation + 1];
        probs[k] = 1.0;
        Self { probs, overflow: 0.0 }
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum::<f64>() + self.overflow
    }

    pub fn get(&self, k: usize) -> f64 {
        self.probs.get(k).copied().unwrap_or(0.0)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "k,prob")?;
        for (k, p) in self.probs.iter().enumerate() {
            writeln!(w, "{k},{p:e}")?;
        }
        writeln!(w, "overflow,{:e}", self.overflow)
    }
}

impl Measure for PmfVector {
    fn mass(&self, k: u64) -> f64 {
        self.get(k as usize)
    }

    fn mass_above(&self, k: u64) -> f64 {
        self.probs.iter().skip(k as usize + 1).sum::<f64>() + self.overflow
    }

    fn truncation(&self) -> Option<u64> {
        Some(self.probs.len() as u64 - 1)
    }

    fn max_value(&self) -> u64 {
        self.probs.len() as u64 - 1
    }
}

/// `a ⊛ b` truncated to `len` entries.
fn convolve_truncated(a: &[f64], b: &[f64], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len.min(a.len() + b.len() - 1)];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 || i >= len {
            continue;
        }
        for (j, &y) in b.iter().enumerate().take(len - i) {
            out[i + j] += x * y;
        }
    }
    out
}

/// `x`-fold convolution power of `pmf` truncated to `{0..K}`, by repeated
/// squaring.
pub fn convolution_power(pmf: &[f64], x: u64, truncation: usize) -> Vec<f64> {
    let len = truncation + 1;
    let mut result = vec![1.0];
    let mut base: Vec<f64> = pmf.iter().copied().take(len).collect();
    let mut e = x;
    while e > 0 {
        if e & 1 == 1 {
            result = convolve_truncated(&result, &base, len);
        }
        e >>= 1;
        if e > 0 {
            base = convolve_truncated(&base, &base, len);
        }
    }
    result.resize(len, 0.0);
    result
}

fn immigration_pmf(law: &ImmigrationLaw, truncation: usize) -> Vec<f64> {
    let top = law.max().map_or(truncation, |m| (m as usize).min(truncation));
    (0..=top as u64).map(|k| law.pmf(k)).collect()
}

pub fn build_kernel(env: &EnvironmentLaw, imm: &ImmigrationPair, truncation: usize) -> Result<TruncatedKernel> {
    build_kernel_with(
        env,
        imm,
        &KernelOptions {
            truncation,
            ..KernelOptions::default()
        },
    )
}

/// One-step kernel of the random cell line.
///
/// All parasites of a cell share its environment and the chosen side, so
/// the `x`-fold convolution is taken per offspring marginal and the results
/// are mixed afterwards with weights `w_i / 2`.
pub fn build_kernel_with(env: &EnvironmentLaw, imm: &ImmigrationPair, opts: &KernelOptions) -> Result<TruncatedKernel> {
    let k = opts.truncation;
    let size = k + 1;
    let y0 = immigration_pmf(imm.y0(), k);
    let y1 = immigration_pmf(imm.y1(), k);
    let mut matrix = vec![0.0; size * size];
    for (marginal, weight) in env.mixed_marginals() {
        let step = marginal.probabilities();
        let mut power = vec![1.0];
        for x in 0..size {
            let imm_pmf = if x == 0 { &y0 } else { &y1 };
            let row = convolve_truncated(&power, imm_pmf, size);
            for (m, r) in matrix[x * size..(x + 1) * size].iter_mut().zip(&row) {
                *m += weight * r;
            }
            power = convolve_truncated(&power, step, size);
        }
    }
    let overflow: Vec<f64> = (0..size)
        .map(|x| (1.0 - matrix[x * size..(x + 1) * size].iter().sum::<f64>()).max(0.0))
        .collect();
    let heavy = imm.y0().is_heavy_tail() || imm.y1().is_heavy_tail();
    if let (Some(budget), false) = (opts.overflow_budget, heavy) {
        if let Some((row, &o)) = overflow.iter().enumerate().find(|(_, &o)| o > budget) {
            return Err(Error::TruncationTooSmall {
                k,
                row,
                overflow: o,
                budget,
            });
        }
    }
    Ok(TruncatedKernel {
        size,
        matrix,
        overflow,
        heavy_tail_truncated: heavy,
    })
}

/// Law of `Z_n` started from `k0`.
pub fn propagate(kernel: &TruncatedKernel, k0: usize, n: usize) -> PmfVector {
    assert!(k0 <= kernel.truncation(), "k0 above truncation");
    let mut v = PmfVector::point(k0, kernel.truncation());
    for _ in 0..n {
        v = kernel.apply(&v);
    }
    v
}

/// `u_n = P₀(Z_n = 0)` for `n = 0..=n_max`.
pub fn renewal_sequence(kernel: &TruncatedKernel, n_max: usize) -> Vec<f64> {
    let mut v = PmfVector::point(0, kernel.truncation());
    let mut u = Vec::with_capacity(n_max + 1);
    u.push(1.0);
    for _ in 0..n_max {
        v = kernel.apply(&v);
        u.push(v.probs[0]);
    }
    u
}

/// Taboo propagation: mass that has not yet returned to 0.
struct TabooWalk<'a> {
    kernel: &'a TruncatedKernel,
    away: PmfVector,
}

impl<'a> TabooWalk<'a> {
    fn new(kernel: &'a TruncatedKernel, k0: usize) -> Self {
        Self {
            kernel,
            away: PmfVector::point(k0, kernel.truncation()),
        }
    }

    /// Advances one step and returns `P(T₀ > n)` for the new `n`.
    fn advance(&mut self) -> f64 {
        let mut next = self.kernel.apply(&self.away);
        next.probs[0] = 0.0;
        self.away = next;
        self.away.total()
    }

    /// Part of `P(T₀ > n)` still inside `{0..K}`.
    fn inside(&self) -> f64 {
        self.away.probs.iter().sum()
    }
}

/// `P_{k0}(T₀ > n)` for `n = 0..=n_max` (the entry at `n = 0` is 1).
pub fn hitting_tail(kernel: &TruncatedKernel, k0: usize, n_max: usize) -> Vec<f64> {
    let mut walk = TabooWalk::new(kernel, k0);
    let mut tail = Vec::with_capacity(n_max + 1);
    tail.push(1.0);
    for _ in 0..n_max {
        tail.push(walk.advance());
    }
    tail
}

#[derive(Debug, Clone, Serialize)]
pub struct RenewalLimit {
    /// `1 / E₀[T₀]`.
    pub u_infinity: f64,
    pub mean_return_time: f64,
    /// Bound on the neglected part of `Σ P₀(T₀ > n)`.
    pub remainder_bound: f64,
    /// Mass lost above `K` before returning.
    pub escaped: f64,
    pub steps: usize,
    /// `α_l = u_∞ Σ_i P₀(Z_i = l, T₀ > i)`: the stationary law from the
    /// excursion representation.
    pub excursion_law: PmfVector,
}

/// `u_∞ = 1/E₀[T₀]` from the taboo kernel, summing `P₀(T₀ > n)` up to `cap`
/// terms. The geometric remainder is bounded from the largest recent ratio
/// of consecutive tail terms. Mass that escapes above `K` never returns in
/// the truncated chain; more than `1e-9` of it is reported as
/// non-convergence.
pub fn renewal_limit(kernel: &TruncatedKernel, cap: usize) -> Result<RenewalLimit> {
    let size = kernel.truncation() + 1;
    let mut walk = TabooWalk::new(kernel, 0);
    let mut mean = 1.0; // n = 0 term
    let mut visits = vec![0.0; size];
    let mut prev = 1.0;
    let mut ratios: Vec<f64> = Vec::new();
    let mut remainder = f64::INFINITY;
    let mut steps = 0;
    while steps < cap {
        walk.advance();
        let tail = walk.inside();
        steps += 1;
        mean += tail;
        for (acc, p) in visits.iter_mut().zip(&walk.away.probs) {
            *acc += p;
        }
        if tail == 0.0 {
            remainder = 0.0;
            break;
        }
        ratios.push(tail / prev);
        prev = tail;
        if ratios.len() >= 10 {
            let r = ratios[ratios.len() - 10..].iter().copied().fold(0.0, f64::max);
            if r < 1.0 {
                remainder = tail * r / (1.0 - r);
                if remainder < 1e-16 * mean {
                    break;
                }
            }
        }
    }
    let escaped = walk.away.overflow;
    if remainder > RENEWAL_REMAINDER_TOLERANCE || escaped > RENEWAL_REMAINDER_TOLERANCE {
        return Err(Error::NonConvergent {
            cap,
            remainder: remainder.max(escaped),
        });
    }
    let u_infinity = 1.0 / mean;
    visits[0] = 1.0;
    let excursion_law = PmfVector {
        probs: visits.into_iter().map(|v| v * u_infinity).collect(),
        overflow: 0.0,
    };
    Ok(RenewalLimit {
        u_infinity,
        mean_return_time: mean,
        remainder_bound: remainder,
        escaped,
        steps,
        excursion_law,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct StationarySolution {
    /// Fixed point of the kernel by power iteration from `δ₀`.
    pub power_iteration: PmfVector,
    /// The same law from the excursion representation.
    pub excursion: PmfVector,
    pub iterations: usize,
    pub u_infinity: f64,
}

pub fn stationary_solve(kernel: &TruncatedKernel) -> Result<StationarySolution> {
    stationary_solve_with(kernel, DEFAULT_ITERATION_BUDGET)
}

pub fn stationary_solve_with(kernel: &TruncatedKernel, budget: usize) -> Result<StationarySolution> {
    let mut v = PmfVector::point(0, kernel.truncation());
    let mut delta = f64::INFINITY;
    let mut iterations = 0;
    while iterations < budget {
        let next = kernel.apply(&v);
        iterations += 1;
        delta = next
            .probs
            .iter()
            .zip(&v.probs)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            + (next.overflow - v.overflow).abs();
        v = next;
        if delta < STATIONARY_TOLERANCE {
            break;
        }
    }
    if delta >= STATIONARY_TOLERANCE {
        return Err(Error::NoConvergence { iterations, delta });
    }
    let renewal = renewal_limit(kernel, budget)?;
    Ok(StationarySolution {
        power_iteration: v,
        excursion: renewal.excursion_law,
        iterations,
        u_infinity: renewal.u_infinity,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SurvivalMethod {
    /// Exact average of `F_n(0)^k` over all environment sequences.
    Enumeration,
    /// Propagation of the annealed chain on a truncated kernel; mass above
    /// the truncation counts as alive.
    Kernel,
}

#[derive(Debug, Clone, Serialize)]
pub struct SurvivalCurve {
    /// `P_{k0}(Z_n > 0)` for `n = 0..=n_max`.
    pub probabilities: Vec<f64>,
    pub method: SurvivalMethod,
    /// Mass above the truncation at `n_max` (kernel method only).
    pub overflow: f64,
}

/// Distribution of `F_n(0) = f_0 ∘ ··· ∘ f_{n-1}(0)` over environment
/// sequences, for `n = 0..=n_max`, as `E[F_n(0)^k0]`.
fn enumerate_extinction(marginals: &[(CountLaw, f64)], k0: u64, n_max: usize) -> Result<Vec<f64>> {
    let sequences = (marginals.len() as f64).powi(n_max as i32);
    if sequences > ENUMERATION_BUDGET as f64 {
        return Err(Error::EnumerationTooLarge {
            sequences,
            budget: ENUMERATION_BUDGET,
        });
    }
    let mut values: Vec<(f64, f64)> = vec![(0.0, 1.0)];
    let expect = |vals: &[(f64, f64)]| vals.iter().map(|(s, w)| w * s.powi(k0 as i32)).sum::<f64>();
    let mut out = vec![expect(&values)];
    for _ in 0..n_max {
        values = values
            .iter()
            .flat_map(|&(s, w)| marginals.iter().map(move |(g, wg)| (g.pgf(s), w * wg)))
            .collect();
        out.push(expect(&values));
    }
    Ok(out)
}

/// `P_{k0}(Z_n > 0)` without immigration for `n = 0..=n_max`: exact
/// enumeration when the environment sequences fit the budget, kernel
/// propagation otherwise.
pub fn survival_curve(env: &EnvironmentLaw, k0: u64, n_max: usize, truncation: usize) -> Result<SurvivalCurve> {
    let marginals = env.mixed_marginals();
    match enumerate_extinction(&marginals, k0, n_max) {
        Ok(ext) => Ok(SurvivalCurve {
            probabilities: ext.into_iter().map(|e| 1.0 - e).collect(),
            method: SurvivalMethod::Enumeration,
            overflow: 0.0,
        }),
        Err(Error::EnumerationTooLarge { .. }) => {
            let kernel = build_kernel_with(
                env,
                &ImmigrationPair::zero(),
                &KernelOptions {
                    truncation,
                    overflow_budget: None,
                },
            )?;
            if k0 as usize > truncation {
                return Err(Error::InvalidArgument(format!("k0 = {k0} above truncation {truncation}")));
            }
            let mut v = PmfVector::point(k0 as usize, truncation);
            let mut probabilities = vec![1.0 - v.probs[0]];
            for _ in 0..n_max {
                v = kernel.apply(&v);
                probabilities.push(1.0 - v.probs[0]);
            }
            Ok(SurvivalCurve {
                probabilities,
                method: SurvivalMethod::Kernel,
                overflow: v.overflow,
            })
        }
        Err(e) => Err(e),
    }
}

/// `P_{k0}(Z_n > 0)` for the process without immigration.
pub fn survival_no_immigration(env: &EnvironmentLaw, k0: u64, n: usize) -> Result<(f64, SurvivalMethod)> {
    let curve = survival_curve(env, k0, n, DEFAULT_TRUNCATION)?;
    Ok((curve.probabilities[n], curve.method))
}
