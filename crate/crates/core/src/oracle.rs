//! Brute-force grid dynamic program for small z-subproblems.
//!
//! On a uniform grid, `dp_i(v) = θ_i(v) + min_{u ≤ v} dp_{i−1}(u)` with
//! `θ_i(v) = σ_i(v) l(v) + (ρ/2)(v − m_i)²`; the running prefix minimum
//! enforces the chain `z_1 ≤ … ≤ z_n`. Exact up to grid resolution, and works
//! for value-dependent weights as well since nothing is assumed convex.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossKind;
use crate::weights::ResolvedWeights;

pub const DEFAULT_GRID_STEP: f64 = 1e-4;
const MAX_CELLS: usize = 50_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSolution {
    pub objective: f64,
    pub z_sorted: Vec<f64>,
    pub lo: f64,
    pub step: f64,
    pub points: usize,
}

/// Grid window `[min m − max(3, S/ρ), max m + 1]`, where `S` bounds the
/// total weight; every block minimiser lies in it.
pub fn default_window(m_sorted: &[f64], weights: &ResolvedWeights, rho: f64) -> (f64, f64) {
    let n = m_sorted.len();
    let total: f64 = (0..n)
        .map(|i| weights.sigma_at(i, f64::NEG_INFINITY).max(weights.sigma_at(i, f64::INFINITY)))
        .sum();
    let min_m = m_sorted.iter().copied().fold(f64::INFINITY, f64::min);
    let max_m = m_sorted.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min_m - 3f64.max(total / rho), max_m + 1.0)
}

pub fn grid_dp(
    m_sorted: &[f64],
    weights: &ResolvedWeights,
    rho: f64,
    kind: LossKind,
    step: f64,
    window: Option<(f64, f64)>,
) -> Result<GridSolution> {
    let n = m_sorted.len();
    if n == 0 || weights.len() != n {
        return Err(Error::arg("grid oracle needs matching nonempty m and weights"));
    }
    if !(step > 0.0) || !(rho > 0.0) || m_sorted.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("grid oracle needs finite m, positive step and rho"));
    }
    let (lo, hi) = window.unwrap_or_else(|| default_window(m_sorted, weights, rho));
    let points = ((hi - lo) / step).ceil() as usize + 1;
    if points.saturating_mul(n) > MAX_CELLS {
        return Err(Error::arg(format!("grid of {points} points × {n} samples is too large")));
    }
    let grid: Vec<f64> = (0..points).map(|k| lo + k as f64 * step).collect();
    let theta = |i: usize, v: f64| {
        let s = weights.sigma_at(i, v);
        let loss = if s == 0.0 { 0.0 } else { s * kind.value(v) };
        loss + 0.5 * rho * (v - m_sorted[i]) * (v - m_sorted[i])
    };

    // back[i][k]: grid index of z_{i−1} chosen when z_i = grid[k]
    let mut back: Vec<Vec<u32>> = Vec::with_capacity(n);
    let mut prev: Vec<f64> = grid.iter().map(|&v| theta(0, v)).collect();
    back.push(Vec::new());
    for i in 1..n {
        let mut cur = vec![0.0; points];
        let mut arg = vec![0u32; points];
        let mut best = f64::INFINITY;
        let mut best_k = 0u32;
        for k in 0..points {
            if prev[k] < best {
                best = prev[k];
                best_k = k as u32;
            }
            cur[k] = theta(i, grid[k]) + best;
            arg[k] = best_k;
        }
        back.push(arg);
        prev = cur;
    }
    let (mut k, objective) = prev
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (k, &v)| if v < acc.1 { (k, v) } else { acc });
    let mut z_sorted = vec![0.0; n];
    for i in (0..n).rev() {
        z_sorted[i] = grid[k];
        if i > 0 {
            k = back[i][k] as usize;
        }
    }
    Ok(GridSolution {
        objective,
        z_sorted,
        lo,
        step,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_recover_m() {
        let w = ResolvedWeights::constant(vec![0.0, 0.0]);
        let sol = grid_dp(&[0.25, 0.5], &w, 1.0, LossKind::Hinge, 0.25, Some((-1.0, 1.0))).unwrap();
        assert_eq!(sol.z_sorted, vec![0.25, 0.5]);
        assert_eq!(sol.objective, 0.0);
    }

    #[test]
    fn chain_is_enforced() {
        // hinge kink pulls the second entry to −1, dragging the first along
        let w = ResolvedWeights::constant(vec![0.0, 5.0]);
        let sol = grid_dp(&[0.0, 0.05], &w, 1.0, LossKind::Hinge, 1e-3, None).unwrap();
        assert!((sol.z_sorted[0] + 1.0).abs() < 2e-3);
        assert!(sol.z_sorted[0] <= sol.z_sorted[1]);
    }

    #[test]
    fn oversized_grid_rejected() {
        let w = ResolvedWeights::constant(vec![1.0]);
        assert!(grid_dp(&[0.0], &w, 1.0, LossKind::Hinge, 1e-9, None).is_err());
    }
}
