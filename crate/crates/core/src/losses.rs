//! Scalar loss kernels and the one-dimensional block minimization used by
//! the pool-adjacent-violators z-step.
//!
//! A block collects `count` consecutive sorted indices that share one value
//! `v`. Its objective is `s·l(v) + (ρ/2)·Σ(v − m_i)²`, which up to a
//! `v`-independent constant equals `s·l(v) + (ρ/2)·(c·v² − 2·m_sum·v)`, so the
//! aggregate `(s, count, m_sum)` is all a merge has to carry.
//!
//! Adding a loss means supplying three hooks: [`LossKind::value`],
//! [`LossKind::subgradient_interval`] and [`LossKind::derivative_bound`]
//! (an upper bound on `l′`, used for the left end of the bracket), plus a
//! branch in [`block_minimize`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Logistic,
    Hinge,
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "logistic" | "log" => Ok(LossKind::Logistic),
            "hinge" => Ok(LossKind::Hinge),
            other => Err(Error::param(format!("unknown loss '{other}'"))),
        }
    }
}

pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^u)` without overflow for large `u`.
pub fn softplus(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

impl LossKind {
    pub fn value(self, u: f64) -> f64 {
        match self {
            LossKind::Logistic => softplus(u),
            LossKind::Hinge => (1.0 + u).max(0.0),
        }
    }

    /// Subdifferential `[lo, hi]` of the loss at `u`. Both ends are ≥ 0.
    pub fn subgradient_interval(self, u: f64) -> (f64, f64) {
        match self {
            LossKind::Logistic => {
                let g = sigmoid(u);
                (g, g)
            }
            LossKind::Hinge => {
                if u < -1.0 {
                    (0.0, 0.0)
                } else if u > -1.0 {
                    (1.0, 1.0)
                } else {
                    (0.0, 1.0)
                }
            }
        }
    }

    /// One element of the subdifferential (the left end at kinks).
    pub fn derivative(self, u: f64) -> f64 {
        self.subgradient_interval(u).0
    }

    /// Global bound `sup l′`.
    pub fn derivative_bound(self) -> f64 {
        1.0
    }
}

pub fn loss_value(kind: LossKind, u: f64) -> f64 {
    kind.value(u)
}

pub fn loss_subgradient_interval(kind: LossKind, u: f64) -> (f64, f64) {
    kind.subgradient_interval(u)
}

/// Tolerances for the logistic scalar solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarSolveOptions {
    /// Derivative tolerance, relative to the natural scale `max(1, s + ρ(c|v| + |m_sum|))`.
    pub tol: f64,
    pub max_newton: usize,
}

impl Default for ScalarSolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_newton: 100,
        }
    }
}

/// Aggregated block objective `s·l(v) + (ρ/2)·Σ(v − m_i)²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockObjective {
    pub s: f64,
    pub count: usize,
    pub m_sum: f64,
    pub rho: f64,
}

impl BlockObjective {
    pub fn new(s: f64, count: usize, m_sum: f64, rho: f64) -> Self {
        Self {
            s,
            count,
            m_sum,
            rho,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.s.is_finite() && self.m_sum.is_finite() && self.rho.is_finite()) {
            return Err(Error::arg("block objective has non-finite inputs"));
        }
        if self.rho <= 0.0 {
            return Err(Error::arg(format!("rho must be positive, got {}", self.rho)));
        }
        if self.count == 0 {
            return Err(Error::arg("block count must be at least 1"));
        }
        if self.s < 0.0 {
            return Err(Error::arg(format!("block weight must be nonnegative, got {}", self.s)));
        }
        Ok(())
    }

    /// Objective value with the `v`-independent constant dropped.
    pub fn value(&self, kind: LossKind, v: f64) -> f64 {
        let c = self.count as f64;
        let loss = if self.s == 0.0 { 0.0 } else { self.s * kind.value(v) };
        loss + 0.5 * self.rho * (c * v * v - 2.0 * self.m_sum * v)
    }

    /// Subdifferential of the block objective at `v`.
    pub fn derivative_interval(&self, kind: LossKind, v: f64) -> (f64, f64) {
        let (lo, hi) = kind.subgradient_interval(v);
        let quad = self.rho * (self.count as f64 * v - self.m_sum);
        (self.s * lo + quad, self.s * hi + quad)
    }

    fn mean(&self) -> f64 {
        self.m_sum / self.count as f64
    }
}

/// Unique minimizer of the block objective.
pub fn block_minimize(obj: &BlockObjective, kind: LossKind) -> Result<f64> {
    block_minimize_with(obj, kind, &ScalarSolveOptions::default())
}

pub fn block_minimize_with(
    obj: &BlockObjective,
    kind: LossKind,
    opts: &ScalarSolveOptions,
) -> Result<f64> {
    obj.validate()?;
    let hi = obj.mean();
    if obj.s == 0.0 {
        return Ok(hi);
    }
    let c = obj.count as f64;
    let v = match kind {
        LossKind::Hinge => {
            // Kink first, then the smooth branches on either side of it.
            let at_kink = obj.rho * (-c - obj.m_sum);
            if at_kink <= 0.0 && 0.0 <= obj.s + at_kink {
                -1.0
            } else if hi < -1.0 {
                hi
            } else {
                (obj.m_sum - obj.s / obj.rho) / c
            }
        }
        LossKind::Logistic => logistic_root(obj, opts),
    };
    Ok(v.min(hi))
}

fn logistic_root(obj: &BlockObjective, opts: &ScalarSolveOptions) -> f64 {
    let c = obj.count as f64;
    let rho = obj.rho;
    let s = obj.s;
    let deriv = |v: f64| s * sigmoid(v) + rho * (c * v - obj.m_sum);
    let curv = |v: f64| {
        let g = sigmoid(v);
        s * g * (1.0 - g) + rho * c
    };
    let scale = |v: f64| 1f64.max(s + rho * (c * v.abs() + obj.m_sum.abs()));

    let mut a = (obj.m_sum - s * LossKind::Logistic.derivative_bound() / rho) / c;
    let mut b = obj.m_sum / c;
    // f'(a) ≤ 0 ≤ f'(b) by construction.
    let mut v = b;
    for _ in 0..opts.max_newton {
        let g = deriv(v);
        if g.abs() <= opts.tol * scale(v) {
            return v;
        }
        if g > 0.0 {
            b = v;
        } else {
            a = v;
        }
        if b - a <= f64::EPSILON * b.abs().max(a.abs()).max(1e-300) {
            return v;
        }
        let step = v - g / curv(v);
        v = if step > a && step < b {
            step
        } else {
            0.5 * (a + b)
        };
    }
    // Newton budget exhausted: bisect the remaining bracket.
    loop {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            return mid;
        }
        let g = deriv(mid);
        if g.abs() <= opts.tol * scale(mid) {
            return mid;
        }
        if g > 0.0 {
            b = mid;
        } else {
            a = mid;
        }
    }
}

/// Minimizer of the two-piece block objective that uses `obj_low.s` for
/// `v ≤ threshold` and `obj_high.s` for `v > threshold`.
///
/// Each piece is minimized on its own half-line. The open piece `(B, ∞)` does
/// not attain its infimum when its unconstrained minimizer lies at or left of
/// `B`, so in that case only the closed piece competes. Ties go to `v ≤ B`.
pub fn block_minimize_cpt(
    obj_low: &BlockObjective,
    obj_high: &BlockObjective,
    threshold: f64,
    kind: LossKind,
) -> Result<f64> {
    block_minimize_cpt_with(obj_low, obj_high, threshold, kind, &ScalarSolveOptions::default())
}

pub fn block_minimize_cpt_with(
    obj_low: &BlockObjective,
    obj_high: &BlockObjective,
    threshold: f64,
    kind: LossKind,
    opts: &ScalarSolveOptions,
) -> Result<f64> {
    if obj_low.count != obj_high.count || obj_low.m_sum != obj_high.m_sum || obj_low.rho != obj_high.rho
    {
        return Err(Error::arg("two-piece block objectives must share count, m_sum and rho"));
    }
    let v_low = block_minimize_with(obj_low, kind, opts)?.min(threshold);
    let v_high = block_minimize_with(obj_high, kind, opts)?;
    if v_high > threshold && (v_low == f64::NEG_INFINITY || obj_high.value(kind, v_high) < obj_low.value(kind, v_low)) {
        Ok(v_high)
    } else {
        Ok(v_low)
    }
}

/// Value of the two-piece block objective at `v`.
pub fn cpt_block_value(
    obj_low: &BlockObjective,
    obj_high: &BlockObjective,
    threshold: f64,
    kind: LossKind,
    v: f64,
) -> f64 {
    if v <= threshold {
        obj_low.value(kind, v)
    } else {
        obj_high.value(kind, v)
    }
}
