//! Pool-adjacent-violators solver for the z-subproblem
//!
//! ```text
//! min_z  Σ σ_i l(z_i) + (ρ/2)‖z − m‖²
//! ```
//!
//! After sorting `m` ascending the optimal `z` is isotonic in the same order,
//! so the problem becomes a chain-constrained separable program. Indices are
//! grouped into blocks sharing one value; adjacent blocks with decreasing
//! values are pooled until all blocks are in order.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{block_minimize_cpt_with, block_minimize_with, BlockObjective, LossKind, ScalarSolveOptions};
use crate::problem::ascending_order;
use crate::weights::{topk_run, CptRule, ResolvedWeights};

/// Tolerance used when checking that a pooled value lies between the values
/// of the blocks it replaced.
pub const MERGE_INTERVAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Block {
    /// First sorted index, inclusive.
    pub lo: usize,
    /// Last sorted index, inclusive.
    pub hi: usize,
    pub value: f64,
    /// Σσ over the block (the low-branch sum for value-dependent weights).
    pub s_sum: f64,
    /// Σσ over the block for the branch above the threshold.
    pub s_high: f64,
    pub m_sum: f64,
}

impl Block {
    pub fn len(&self) -> usize {
        self.hi - self.lo + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BlockPartition {
    pub blocks: Vec<Block>,
}

impl BlockPartition {
    /// Per-index values in sorted order.
    pub fn values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.blocks.last().map_or(0, |b| b.hi + 1));
        for b in &self.blocks {
            out.extend(std::iter::repeat_n(b.value, b.len()));
        }
        out
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn is_in_order(&self) -> bool {
        self.blocks.windows(2).all(|w| w[0].value <= w[1].value)
    }

    /// Same `(lo, hi)` ranges and values within `tol`.
    pub fn matches(&self, other: &BlockPartition, tol: f64) -> bool {
        self.blocks.len() == other.blocks.len()
            && self.blocks.iter().zip(&other.blocks).all(|(a, b)| {
                a.lo == b.lo && a.hi == b.hi && (a.value - b.value).abs() <= tol * 1f64.max(a.value.abs())
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PavaOptions {
    /// Blocks count as out of order when `left > right + slack`.
    pub slack: f64,
    pub scalar: ScalarSolveOptions,
    pub log_merges: bool,
}

impl Default for PavaOptions {
    fn default() -> Self {
        Self {
            slack: 0.0,
            scalar: ScalarSolveOptions::default(),
            log_merges: false,
        }
    }
}

/// One pooling step: a run of blocks whose values were strictly decreasing
/// from `first_value` to `last_value`, replaced by one block with `merged`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeRecord {
    pub lo: usize,
    pub hi: usize,
    pub blocks: usize,
    pub first_value: f64,
    pub last_value: f64,
    pub merged: f64,
}

impl MergeRecord {
    pub fn within_interval(&self, tol: f64) -> bool {
        self.merged >= self.last_value - tol && self.merged <= self.first_value + tol
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PavaStats {
    /// Number of pooling steps.
    pub merges: usize,
    /// Adjacent-pair order comparisons.
    pub comparisons: usize,
    /// Comparisons made at the boundary of the positive-weight run on the
    /// top-k path.
    pub boundary_checks: usize,
    /// Scalar block solves, including the initial singletons.
    pub block_solves: usize,
    /// Pooled values found outside the interval of the pooled run.
    pub interval_violations: usize,
    pub used_fast_path: bool,
    pub fell_back: bool,
    pub merge_log: Vec<MergeRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PavaOutput {
    pub partition: BlockPartition,
    pub stats: PavaStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZSolution {
    /// Solution in the original sample order.
    pub z: Vec<f64>,
    /// Sorting permutation: `order[j]` is the sample at sorted slot `j`.
    pub order: Vec<usize>,
    pub partition: BlockPartition,
    pub stats: PavaStats,
}

enum Weights<'a> {
    Constant(&'a [f64]),
    Cpt(&'a CptRule),
}

struct Engine<'a> {
    m: &'a [f64],
    weights: Weights<'a>,
    rho: f64,
    kind: LossKind,
    opts: PavaOptions,
    stats: PavaStats,
}

impl<'a> Engine<'a> {
    fn new(m: &'a [f64], weights: Weights<'a>, rho: f64, kind: LossKind, opts: PavaOptions) -> Self {
        Self {
            m,
            weights,
            rho,
            kind,
            opts,
            stats: PavaStats::default(),
        }
    }

    fn solve(&mut self, s_low: f64, s_high: f64, count: usize, m_sum: f64) -> Result<f64> {
        self.stats.block_solves += 1;
        let low = BlockObjective::new(s_low, count, m_sum, self.rho);
        match self.weights {
            Weights::Constant(_) => block_minimize_with(&low, self.kind, &self.opts.scalar),
            Weights::Cpt(rule) => {
                let high = BlockObjective::new(s_high, count, m_sum, self.rho);
                block_minimize_cpt_with(&low, &high, rule.threshold, self.kind, &self.opts.scalar)
            }
        }
    }

    fn singleton(&mut self, i: usize) -> Result<Block> {
        let (s_low, s_high) = match self.weights {
            Weights::Constant(s) => (s[i], s[i]),
            Weights::Cpt(rule) => (rule.low[i], rule.high[i]),
        };
        let value = self.solve(s_low, s_high, 1, self.m[i])?;
        Ok(Block {
            lo: i,
            hi: i,
            value,
            s_sum: s_low,
            s_high,
            m_sum: self.m[i],
        })
    }

    fn out_of_order(&mut self, left: &Block, right: &Block) -> bool {
        self.stats.comparisons += 1;
        left.value > right.value + self.opts.slack
    }

    fn pool(&mut self, run: &[Block]) -> Result<Block> {
        let mut s_sum = 0.0;
        let mut s_high = 0.0;
        let mut m_sum = 0.0;
        for b in run {
            s_sum += b.s_sum;
            s_high += b.s_high;
            m_sum += b.m_sum;
        }
        let lo = run[0].lo;
        let hi = run[run.len() - 1].hi;
        let value = self.solve(s_sum, s_high, hi - lo + 1, m_sum)?;
        let record = MergeRecord {
            lo,
            hi,
            blocks: run.len(),
            first_value: run[0].value,
            last_value: run[run.len() - 1].value,
            merged: value,
        };
        self.stats.merges += 1;
        if matches!(self.weights, Weights::Constant(_)) && !record.within_interval(MERGE_INTERVAL_TOL) {
            self.stats.interval_violations += 1;
            log::warn!(
                "pooled value {} outside [{}, {}] for block {lo}..={hi}",
                value,
                record.last_value,
                record.first_value
            );
        }
        if self.opts.log_merges {
            self.stats.merge_log.push(record);
        }
        Ok(Block {
            lo,
            hi,
            value,
            s_sum,
            s_high,
            m_sum,
        })
    }

    /// Multi-merge loop over singletons `from..to`, on top of `stack`.
    ///
    /// Each candidate is compared with the stack top. On a violation the
    /// maximal strictly decreasing run starting at the stack top is pooled at
    /// once, and the pooled block is compared with its new left neighbour.
    fn refined(&mut self, stack: &mut Vec<Block>, from: usize, to: usize) -> Result<()> {
        let mut pending: VecDeque<Block> = VecDeque::new();
        let mut next = from;
        loop {
            let cand = match pending.pop_front() {
                Some(b) => b,
                None if next < to => {
                    next += 1;
                    self.singleton(next - 1)?
                }
                None => break,
            };
            let violates = match stack.last().copied() {
                Some(top) => self.out_of_order(&top, &cand),
                None => false,
            };
            if !violates {
                stack.push(cand);
                continue;
            }
            let mut run = vec![stack.pop().expect("stack top exists"), cand];
            loop {
                let following = match pending.pop_front() {
                    Some(b) => b,
                    None if next < to => {
                        next += 1;
                        self.singleton(next - 1)?
                    }
                    None => break,
                };
                let last = *run.last().expect("run is nonempty");
                if self.out_of_order(&last, &following) {
                    run.push(following);
                } else {
                    pending.push_front(following);
                    break;
                }
            }
            let merged = self.pool(&run)?;
            pending.push_front(merged);
        }
        Ok(())
    }

    /// Classic pairwise pooling.
    fn classic(&mut self) -> Result<Vec<Block>> {
        let mut stack: Vec<Block> = Vec::with_capacity(self.m.len());
        for i in 0..self.m.len() {
            let b = self.singleton(i)?;
            stack.push(b);
            while stack.len() >= 2 {
                let right = stack[stack.len() - 1];
                let left = stack[stack.len() - 2];
                if !self.out_of_order(&left, &right) {
                    break;
                }
                stack.truncate(stack.len() - 2);
                let merged = self.pool(&[left, right])?;
                stack.push(merged);
            }
        }
        Ok(stack)
    }

    fn finish(self, blocks: Vec<Block>) -> PavaOutput {
        PavaOutput {
            partition: BlockPartition { blocks },
            stats: self.stats,
        }
    }
}

fn check_inputs(m: &[f64], n_weights: usize, rho: f64) -> Result<()> {
    if m.len() != n_weights {
        return Err(Error::DimensionMismatch {
            what: "rank weights",
            expected: m.len(),
            got: n_weights,
        });
    }
    if m.is_empty() {
        return Err(Error::Empty("z-subproblem with no samples".into()));
    }
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::arg(format!("rho must be positive and finite, got {rho}")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("z-subproblem input has non-finite entries"));
    }
    Ok(())
}

fn check_sorted(m: &[f64]) -> Result<()> {
    if m.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::arg("PAVA input must be sorted ascending"));
    }
    Ok(())
}

/// Refined multi-merge PAVA on a sorted instance with constant weights.
pub fn pava_run(m_sorted: &[f64], sigma: &[f64], rho: f64, kind: LossKind, opts: &PavaOptions) -> Result<PavaOutput> {
    check_inputs(m_sorted, sigma.len(), rho)?;
    check_sorted(m_sorted)?;
    let mut engine = Engine::new(m_sorted, Weights::Constant(sigma), rho, kind, *opts);
    let mut stack = Vec::with_capacity(m_sorted.len());
    engine.refined(&mut stack, 0, m_sorted.len())?;
    Ok(engine.finish(stack))
}

/// Textbook PAVA that pools two adjacent blocks at a time.
pub fn pava_classic(
    m_sorted: &[f64],
    sigma: &[f64],
    rho: f64,
    kind: LossKind,
    opts: &PavaOptions,
) -> Result<PavaOutput> {
    check_inputs(m_sorted, sigma.len(), rho)?;
    check_sorted(m_sorted)?;
    let mut engine = Engine::new(m_sorted, Weights::Constant(sigma), rho, kind, *opts);
    let blocks = engine.classic()?;
    Ok(engine.finish(blocks))
}

/// PAVA specialised to weights that vanish outside one contiguous run of
/// equal positive values (top-k and ranked-range losses).
///
/// Zero-weight indices keep `v = m_i`, which is already sorted, so the
/// prefix before the run is stacked without comparisons and the suffix after
/// it needs a single comparison with the last block. Falls back to
/// [`pava_run`] when the weights do not have that shape or the boundary
/// check fails.
pub fn pava_run_topk_fast(
    m_sorted: &[f64],
    sigma: &[f64],
    rho: f64,
    kind: LossKind,
    opts: &PavaOptions,
) -> Result<PavaOutput> {
    check_inputs(m_sorted, sigma.len(), rho)?;
    check_sorted(m_sorted)?;
    let Some((start, end)) = topk_run(sigma) else {
        let mut out = pava_run(m_sorted, sigma, rho, kind, opts)?;
        out.stats.fell_back = true;
        return Ok(out);
    };
    let n = m_sorted.len();
    let mut engine = Engine::new(m_sorted, Weights::Constant(sigma), rho, kind, *opts);
    engine.stats.used_fast_path = true;
    let mut stack = Vec::with_capacity(n);
    for i in 0..start {
        stack.push(engine.singleton(i)?);
    }
    engine.refined(&mut stack, start, end + 1)?;
    if end + 1 < n {
        let first = engine.singleton(end + 1)?;
        engine.stats.boundary_checks += 1;
        let last = *stack.last().expect("run is nonempty");
        if engine.out_of_order(&last, &first) {
            let mut out = pava_run(m_sorted, sigma, rho, kind, opts)?;
            out.stats.fell_back = true;
            return Ok(out);
        }
        stack.push(first);
        for i in end + 2..n {
            stack.push(engine.singleton(i)?);
        }
    } else {
        engine.stats.boundary_checks += 1;
    }
    Ok(engine.finish(stack))
}

/// PAVA with value-dependent two-branch weights.
///
/// Each block is minimised over both branches; the result is a first-order
/// point of the nonconvex program, not necessarily a global minimiser.
pub fn pava_run_cpt(m_sorted: &[f64], rule: &CptRule, rho: f64, kind: LossKind, opts: &PavaOptions) -> Result<PavaOutput> {
    check_inputs(m_sorted, rule.low.len(), rho)?;
    check_sorted(m_sorted)?;
    let mut engine = Engine::new(m_sorted, Weights::Cpt(rule), rho, kind, *opts);
    let mut stack = Vec::with_capacity(m_sorted.len());
    engine.refined(&mut stack, 0, m_sorted.len())?;
    Ok(engine.finish(stack))
}

/// Solves the z-subproblem for arbitrary `m`: sorts (stably), runs the
/// matching PAVA variant and scatters the result back to sample order.
pub fn solve_z_subproblem(m: &[f64], weights: &ResolvedWeights, rho: f64, kind: LossKind) -> Result<Vec<f64>> {
    Ok(solve_z_subproblem_with(m, weights, rho, kind, &PavaOptions::default())?.z)
}

pub fn solve_z_subproblem_with(
    m: &[f64],
    weights: &ResolvedWeights,
    rho: f64,
    kind: LossKind,
    opts: &PavaOptions,
) -> Result<ZSolution> {
    check_inputs(m, weights.len(), rho)?;
    let order = ascending_order(m);
    let m_sorted: Vec<f64> = order.iter().map(|&i| m[i]).collect();
    let out = match weights {
        ResolvedWeights::ValueDependent(rule) => pava_run_cpt(&m_sorted, rule, rho, kind, opts)?,
        ResolvedWeights::Constant { sigma, .. } => {
            if topk_run(sigma).is_some() {
                pava_run_topk_fast(&m_sorted, sigma, rho, kind, opts)?
            } else {
                pava_run(&m_sorted, sigma, rho, kind, opts)?
            }
        }
    };
    let sorted_z = out.partition.values();
    let mut z = vec![0.0; m.len()];
    for (slot, &i) in order.iter().enumerate() {
        z[i] = sorted_z[slot];
    }
    Ok(ZSolution {
        z,
        order,
        partition: out.partition,
        stats: out.stats,
    })
}

/// `Σ σ_i(z_i) l(z_i) + (ρ/2)‖z − m‖²` on a sorted instance.
pub fn sorted_objective(m_sorted: &[f64], weights: &ResolvedWeights, rho: f64, kind: LossKind, z_sorted: &[f64]) -> f64 {
    z_sorted
        .iter()
        .zip(m_sorted)
        .enumerate()
        .map(|(i, (&z, &m))| {
            let s = weights.sigma_at(i, z);
            let loss = if s == 0.0 { 0.0 } else { s * kind.value(z) };
            loss + 0.5 * rho * (z - m) * (z - m)
        })
        .sum()
}

/// Largest violation of the first-order conditions of the sorted
/// chain-constrained program at `z_sorted`.
///
/// Within each maximal run of equal values the subgradients `g_i ∈ ∂θ_i` must
/// be selectable so that the run sums to zero and every partial sum from the
/// left of the run is ≤ 0 (the nonnegative chain multipliers). Partial sums
/// are minimised by starting from the lower ends and spending any deficit on
/// the rightmost indices first. For value-dependent weights, a run sitting
/// exactly on the threshold may also have a negative sum: the low branch is
/// restricted to `v ≤ threshold`.
pub fn first_order_residual(
    m_sorted: &[f64],
    weights: &ResolvedWeights,
    rho: f64,
    kind: LossKind,
    z_sorted: &[f64],
) -> f64 {
    let n = z_sorted.len();
    let threshold = match weights {
        ResolvedWeights::ValueDependent(rule) => Some(rule.threshold),
        ResolvedWeights::Constant { .. } => None,
    };
    let mut worst: f64 = 0.0;
    let mut start = 0;
    while start < n {
        let v = z_sorted[start];
        let mut end = start;
        while end + 1 < n && z_sorted[end + 1] == v {
            end += 1;
        }
        let intervals: Vec<(f64, f64)> = (start..=end)
            .map(|i| {
                let s = weights.sigma_at(i, v);
                let (lo, hi) = kind.subgradient_interval(v);
                let quad = rho * (v - m_sorted[i]);
                (s * lo + quad, s * hi + quad)
            })
            .collect();
        let lo_sum: f64 = intervals.iter().map(|p| p.0).sum();
        let hi_sum: f64 = intervals.iter().map(|p| p.1).sum();
        let on_threshold = threshold == Some(v);
        let sum_violation = if lo_sum > 0.0 {
            lo_sum
        } else if hi_sum < 0.0 && !on_threshold {
            -hi_sum
        } else {
            0.0
        };
        worst = worst.max(sum_violation);
        let mut g: Vec<f64> = intervals.iter().map(|p| p.0).collect();
        let mut deficit = if on_threshold { 0.0 } else { (-lo_sum).max(0.0) };
        for (gi, &(lo, hi)) in g.iter_mut().zip(&intervals).rev() {
            if deficit <= 0.0 {
                break;
            }
            let raise = (hi - lo).min(deficit);
            *gi += raise;
            deficit -= raise;
        }
        let mut prefix = 0.0;
        for gi in &g[..g.len() - 1] {
            prefix += gi;
            worst = worst.max(prefix);
        }
        start = end + 1;
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_instance(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<f64>) {
        let mut m: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        m.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let sigma: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 3.0).collect();
        (m, sigma)
    }

    #[test]
    fn zero_weights_return_m() {
        let m = [0.3, -1.0, 2.0, 0.3];
        let w = ResolvedWeights::constant(vec![0.0; 4]);
        assert_eq!(solve_z_subproblem(&m, &w, 1.0, LossKind::Logistic).unwrap(), m.to_vec());
    }

    #[test]
    fn two_sample_hinge_merge() {
        let w = ResolvedWeights::constant(vec![0.0, 5.0]);
        let z = solve_z_subproblem(&[0.0, 0.05], &w, 1.0, LossKind::Hinge).unwrap();
        assert_eq!(z, vec![-1.0, -1.0]);
    }

    #[test]
    fn rejects_non_finite() {
        let w = ResolvedWeights::constant(vec![0.5, 0.5]);
        assert!(solve_z_subproblem(&[0.0, f64::NAN], &w, 1.0, LossKind::Hinge).is_err());
        assert!(solve_z_subproblem(&[0.0, 1.0], &w, 0.0, LossKind::Hinge).is_err());
        assert!(solve_z_subproblem(&[0.0], &w, 1.0, LossKind::Hinge).is_err());
    }

    #[test]
    fn in_order_singletons_untouched() {
        let m = [-3.0, -1.0, 0.5, 2.0];
        let sigma = [0.0; 4];
        let out = pava_run(&m, &sigma, 1.0, LossKind::Logistic, &PavaOptions::default()).unwrap();
        assert_eq!(out.partition.len(), 4);
        assert_eq!(out.stats.merges, 0);
        assert_eq!(out.stats.comparisons, 3);
    }

    #[test]
    fn strictly_decreasing_run_pools_once() {
        // equal m, growing weights: singleton values strictly decrease
        let m = [0.0, 0.0, 0.0];
        let sigma = [1.0, 2.0, 3.0];
        let opts = PavaOptions {
            log_merges: true,
            ..Default::default()
        };
        let out = pava_run(&m, &sigma, 1.0, LossKind::Logistic, &opts).unwrap();
        assert_eq!(out.stats.merges, 1);
        assert_eq!(out.partition.len(), 1);
        let rec = out.stats.merge_log[0];
        assert_eq!((rec.lo, rec.hi, rec.blocks), (0, 2, 3));
        assert!(rec.within_interval(0.0));
        let classic = pava_classic(&m, &sigma, 1.0, LossKind::Logistic, &opts).unwrap();
        assert_eq!(classic.stats.merges, 2);
        assert!(out.partition.matches(&classic.partition, 1e-12));
    }

    #[test]
    fn partitions_are_nondecreasing_and_self_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for kind in [LossKind::Logistic, LossKind::Hinge] {
            let (m, sigma) = random_instance(&mut rng, 50);
            let out = pava_run(&m, &sigma, 0.7, kind, &PavaOptions::default()).unwrap();
            assert!(out.partition.is_in_order());
            for b in &out.partition.blocks {
                let s: f64 = sigma[b.lo..=b.hi].iter().sum();
                let ms: f64 = m[b.lo..=b.hi].iter().sum();
                let v = block_minimize_with(&BlockObjective::new(s, b.len(), ms, 0.7), kind, &Default::default()).unwrap();
                assert!((v - b.value).abs() <= 1e-10 * 1f64.max(v.abs()));
            }
            let z = out.partition.values();
            let w = ResolvedWeights::constant(sigma.clone());
            assert!(first_order_residual(&m, &w, 0.7, kind, &z) < 1e-9);
        }
    }

    #[test]
    fn unsorted_input_rejected() {
        assert!(pava_run(&[1.0, 0.0], &[0.5, 0.5], 1.0, LossKind::Hinge, &PavaOptions::default()).is_err());
    }

    #[test]
    fn topk_in_order_single_boundary_check() {
        let m = [-5.0, -4.0, -3.0, 10.0, 11.0];
        let sigma = [0.0, 0.0, 0.5, 0.5, 0.0];
        let out = pava_run_topk_fast(&m, &sigma, 1.0, LossKind::Logistic, &PavaOptions::default()).unwrap();
        assert!(out.stats.used_fast_path);
        assert_eq!(out.stats.merges, 0);
        assert_eq!(out.stats.boundary_checks, 1);
        let generic = pava_run(&m, &sigma, 1.0, LossKind::Logistic, &PavaOptions::default()).unwrap();
        assert_eq!(out.partition, generic.partition);
    }

    #[test]
    fn topk_falls_back_on_other_shapes() {
        let m = [0.0, 1.0, 2.0];
        let sigma = [0.2, 0.3, 0.5];
        let out = pava_run_topk_fast(&m, &sigma, 1.0, LossKind::Hinge, &PavaOptions::default()).unwrap();
        assert!(out.stats.fell_back);
    }

    #[test]
    fn cpt_degenerate_thresholds() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let n = 6;
            let (m, _) = random_instance(&mut rng, n);
            let mut rule = CptRule::new(0.61, 0.69, f64::INFINITY, n).unwrap();
            let low = pava_run_cpt(&m, &rule, 1.3, LossKind::Logistic, &PavaOptions::default()).unwrap();
            let plain_low = pava_run(&m, &rule.low, 1.3, LossKind::Logistic, &PavaOptions::default()).unwrap();
            assert!(low.partition.matches(&plain_low.partition, 1e-12));
            rule.threshold = f64::NEG_INFINITY;
            let high = pava_run_cpt(&m, &rule, 1.3, LossKind::Logistic, &PavaOptions::default()).unwrap();
            let plain_high = pava_run(&m, &rule.high, 1.3, LossKind::Logistic, &PavaOptions::default()).unwrap();
            assert!(high.partition.matches(&plain_high.partition, 1e-12));
        }
    }

    #[test]
    fn cpt_output_is_first_order_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200 {
            let n = rng.random_range(1..=6);
            let m: Vec<f64> = {
                let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 8.0 - 7.0).collect();
                v.sort_by(|a, b| a.partial_cmp(b).unwrap());
                v
            };
            let rho = [0.1, 1.0, 10.0][rng.random_range(0..3)];
            let kind = if rng.random::<bool>() { LossKind::Logistic } else { LossKind::Hinge };
            let rule = CptRule::new(0.61, 0.69, -3.0, n).unwrap();
            let out = pava_run_cpt(&m, &rule, rho, kind, &PavaOptions::default()).unwrap();
            assert!(out.partition.is_in_order());
            let z = out.partition.values();
            let w = ResolvedWeights::ValueDependent(rule);
            let res = first_order_residual(&m, &w, rho, kind, &z);
            assert!(res <= 1e-6 * 1f64.max(rho), "residual {res}");
        }
    }

    #[test]
    fn first_order_residual_detects_bad_points() {
        let w = ResolvedWeights::constant(vec![0.5, 0.5]);
        let m = [0.0, 1.0];
        let z = solve_z_subproblem(&m, &w, 1.0, LossKind::Logistic).unwrap();
        assert!(first_order_residual(&m, &w, 1.0, LossKind::Logistic, &z) < 1e-10);
        assert!(first_order_residual(&m, &w, 1.0, LossKind::Logistic, &[0.0, 1.0]) > 0.1);
    }

    proptest! {
        #[test]
        fn refined_matches_classic(seed in 0u64..5000, n in 1usize..40, rho_pick in 0usize..3, hinge: bool) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (m, sigma) = random_instance(&mut rng, n);
            let rho = [0.1, 1.0, 10.0][rho_pick];
            let kind = if hinge { LossKind::Hinge } else { LossKind::Logistic };
            let a = pava_run(&m, &sigma, rho, kind, &PavaOptions::default()).unwrap();
            let b = pava_classic(&m, &sigma, rho, kind, &PavaOptions::default()).unwrap();
            prop_assert!(a.partition.matches(&b.partition, 1e-12));
            prop_assert_eq!(a.stats.interval_violations, 0);
        }

        #[test]
        fn output_isotonic_in_sorted_order(seed in 0u64..5000, n in 1usize..30) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 6.0 - 3.0).collect();
            let sigma: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let w = ResolvedWeights::constant(sigma);
            let sol = solve_z_subproblem_with(&m, &w, 2.0, LossKind::Logistic, &PavaOptions::default()).unwrap();
            for pair in sol.order.windows(2) {
                prop_assert!(sol.z[pair[0]] <= sol.z[pair[1]]);
            }
        }
    }
}
