//! Rank weights `σ` for the supported loss families.
//!
//! Weights are always indexed against losses sorted in ascending order:
//! `σ[0]` multiplies the smallest loss and `σ[n-1]` the largest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum WeightScheme {
    Erm,
    Superquantile {
        q: f64,
    },
    /// Spectrum `s·t^(s−1)`.
    Extremile {
        order: f64,
    },
    /// Exponential spectrum `a·e^(a(t−1)) / (1 − e^(−a))`.
    Esrm {
        risk: f64,
    },
    HumanAligned {
        a: f64,
        b: f64,
    },
    /// Two-sided CPT weights. `threshold` is the reference point expressed on
    /// the margin scale `−y·(x·w)`.
    CptValueDependent {
        gamma: f64,
        delta: f64,
        threshold: f64,
    },
    Aorr {
        k: usize,
        m: usize,
    },
    Explicit {
        sigma: Vec<f64>,
    },
}

/// Margin-scale reference point matching the loss-scale point
/// `log(1 + e^(−5))` of the logistic loss: `l(z) ≤ log(1+e^(−5)) ⇔ z ≤ −5`.
pub const CPT_DEFAULT_THRESHOLD: f64 = -5.0;

impl WeightScheme {
    pub fn cpt_default() -> Self {
        WeightScheme::CptValueDependent {
            gamma: 0.61,
            delta: 0.69,
            threshold: CPT_DEFAULT_THRESHOLD,
        }
    }

    pub fn is_spectral(&self) -> bool {
        matches!(
            self,
            WeightScheme::Erm
                | WeightScheme::Superquantile { .. }
                | WeightScheme::Extremile { .. }
                | WeightScheme::Esrm { .. }
        )
    }

    pub fn resolve(&self, n: usize) -> Result<ResolvedWeights> {
        if n == 0 {
            return Err(Error::param("weights need n ≥ 1"));
        }
        let sigma = match self {
            WeightScheme::Erm
            | WeightScheme::Superquantile { .. }
            | WeightScheme::Extremile { .. }
            | WeightScheme::Esrm { .. } => resolve_spectral(self, n)?,
            WeightScheme::HumanAligned { a, b } => resolve_human_aligned(*a, *b, n)?,
            WeightScheme::Aorr { k, m } => resolve_aorr(*k, *m, n)?,
            WeightScheme::Explicit { sigma } => {
                if sigma.len() != n {
                    return Err(Error::DimensionMismatch {
                        what: "explicit sigma length",
                        expected: n,
                        got: sigma.len(),
                    });
                }
                if sigma.iter().any(|s| !s.is_finite() || *s < 0.0) {
                    return Err(Error::param("explicit sigma entries must be finite and ≥ 0"));
                }
                sigma.clone()
            }
            WeightScheme::CptValueDependent {
                gamma,
                delta,
                threshold,
            } => return CptRule::new(*gamma, *delta, *threshold, n).map(ResolvedWeights::ValueDependent),
        };
        Ok(ResolvedWeights::constant(sigma))
    }
}

fn validate_spectrum(spectrum: &WeightScheme) -> Result<()> {
    match *spectrum {
        WeightScheme::Erm => Ok(()),
        WeightScheme::Superquantile { q } if (0.0..1.0).contains(&q) => Ok(()),
        WeightScheme::Superquantile { q } => {
            Err(Error::param(format!("superquantile level must lie in [0, 1), got {q}")))
        }
        WeightScheme::Extremile { order } if order > 0.0 && order.is_finite() => Ok(()),
        WeightScheme::Extremile { order } => {
            Err(Error::param(format!("extremile order must be positive, got {order}")))
        }
        WeightScheme::Esrm { risk } if risk > 0.0 && risk.is_finite() => Ok(()),
        WeightScheme::Esrm { risk } => {
            Err(Error::param(format!("ESRM risk aversion must be positive, got {risk}")))
        }
        _ => Err(Error::param("not a spectral weight scheme")),
    }
}

/// Exact bin integrals `σ_i = ∫_{(i−1)/n}^{i/n} σ(t) dt` of a spectrum.
pub fn resolve_spectral(spectrum: &WeightScheme, n: usize) -> Result<Vec<f64>> {
    validate_spectrum(spectrum)?;
    if n == 0 {
        return Err(Error::param("weights need n ≥ 1"));
    }
    let nf = n as f64;
    let sigma = match *spectrum {
        WeightScheme::Erm => vec![1.0 / nf; n],
        WeightScheme::Extremile { order: 1.0 } => vec![1.0 / nf; n],
        WeightScheme::Superquantile { q } => {
            // Full bins share one exactly-rounded value; only the bin that
            // straddles q is partial.
            let qn = q * nf;
            let tail = nf - qn;
            let full = 1.0 / tail;
            (1..=n)
                .map(|i| {
                    let lo = (i - 1) as f64;
                    let hi = i as f64;
                    if hi <= qn {
                        0.0
                    } else if lo >= qn {
                        full
                    } else {
                        (hi - qn) / tail
                    }
                })
                .collect()
        }
        WeightScheme::Extremile { order } => (1..=n)
            .map(|i| (i as f64 / nf).powf(order) - ((i - 1) as f64 / nf).powf(order))
            .collect(),
        WeightScheme::Esrm { risk } => {
            let factor = -(-risk / nf).exp_m1() / -(-risk).exp_m1();
            (1..=n)
                .map(|i| (risk * (i as f64 / nf - 1.0)).exp() * factor)
                .collect()
        }
        _ => unreachable!("validated above"),
    };
    Ok(sigma)
}

/// `w_{a,b}(t) = (3−3b)/(a²−a+1)·(3t² − 2(a+1)t + a) + 1`
pub fn human_aligned_weight(a: f64, b: f64, t: f64) -> f64 {
    (3.0 - 3.0 * b) / (a * a - a + 1.0) * (3.0 * t * t - 2.0 * (a + 1.0) * t + a) + 1.0
}

pub fn resolve_human_aligned(a: f64, b: f64, n: usize) -> Result<Vec<f64>> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::param("human-aligned parameters must be finite"));
    }
    let nf = n as f64;
    let sigma: Vec<f64> = (1..=n).map(|i| human_aligned_weight(a, b, i as f64 / nf)).collect();
    if let Some(bad) = sigma.iter().position(|s| *s < 0.0) {
        return Err(Error::param(format!(
            "human-aligned weights (a={a}, b={b}) are negative at rank {}",
            bad + 1
        )));
    }
    Ok(sigma)
}

/// CPT probability weighting `p^e / (p^e + (1−p)^e)^(1/e)`.
pub fn cpt_omega(p: f64, exponent: f64) -> Result<f64> {
    if !(exponent > 0.0) || !exponent.is_finite() {
        return Err(Error::param(format!("CPT exponent must be positive, got {exponent}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::param(format!("CPT probability must lie in [0, 1], got {p}")));
    }
    Ok(omega_unchecked(p, exponent))
}

fn omega_unchecked(p: f64, e: f64) -> f64 {
    if p == 0.0 {
        return 0.0;
    }
    if p == 1.0 {
        return 1.0;
    }
    let pe = p.powf(e);
    pe / (pe + (1.0 - p).powf(e)).powf(1.0 / e)
}

/// Precomputed two-branch rank weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CptRule {
    /// `ω_−(i/n) − ω_−((i−1)/n)`, used when the sorted margin is ≤ threshold.
    pub low: Vec<f64>,
    /// `ω_+((n−i+1)/n) − ω_+((n−i)/n)`, used above the threshold.
    pub high: Vec<f64>,
    pub threshold: f64,
}

impl CptRule {
    pub fn new(gamma: f64, delta: f64, threshold: f64, n: usize) -> Result<Self> {
        for (name, e) in [("gamma", gamma), ("delta", delta)] {
            if !(e > 0.0 && e <= 1.0) {
                return Err(Error::param(format!("CPT {name} must lie in (0, 1], got {e}")));
            }
        }
        if threshold.is_nan() {
            return Err(Error::param("CPT threshold must not be NaN"));
        }
        let nf = n as f64;
        let low = (1..=n)
            .map(|i| omega_unchecked(i as f64 / nf, delta) - omega_unchecked((i - 1) as f64 / nf, delta))
            .collect();
        let high = (1..=n)
            .map(|i| {
                omega_unchecked((n - i + 1) as f64 / nf, gamma) - omega_unchecked((n - i) as f64 / nf, gamma)
            })
            .collect();
        Ok(Self {
            low,
            high,
            threshold,
        })
    }

    /// Weight of sorted rank `i` (0-based) when its sorted margin is `z`.
    pub fn sigma(&self, i: usize, z: f64) -> f64 {
        if z <= self.threshold {
            self.low[i]
        } else {
            self.high[i]
        }
    }
}

/// `σ_i(ẑ_[i])` for the CPT scheme, with 1-based rank `i`.
pub fn cpt_sigma(i: usize, n: usize, z_sorted_i: f64, gamma: f64, delta: f64, threshold: f64) -> Result<f64> {
    if i == 0 || i > n {
        return Err(Error::param(format!("rank {i} outside 1..={n}")));
    }
    let nf = n as f64;
    if z_sorted_i <= threshold {
        Ok(cpt_omega(i as f64 / nf, delta)? - cpt_omega((i - 1) as f64 / nf, delta)?)
    } else {
        Ok(cpt_omega((n - i + 1) as f64 / nf, gamma)? - cpt_omega((n - i) as f64 / nf, gamma)?)
    }
}

/// Ranked-range weights, ascending convention: keeps the losses ranked
/// `m+1..=k` from the top.
pub fn resolve_aorr(k: usize, m: usize, n: usize) -> Result<Vec<f64>> {
    if !(1 <= m && m < k && k <= n) {
        return Err(Error::param(format!("AoRR needs 1 ≤ m < k ≤ n, got k={k}, m={m}, n={n}")));
    }
    let w = 1.0 / (k - m) as f64;
    let descending: Vec<f64> = (1..=n).map(|j| if j > m && j <= k { w } else { 0.0 }).collect();
    Ok(descending.into_iter().rev().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ResolvedWeights {
    Constant { sigma: Vec<f64>, nondecreasing: bool },
    ValueDependent(CptRule),
}

impl ResolvedWeights {
    pub fn constant(sigma: Vec<f64>) -> Self {
        let nondecreasing = sigma.windows(2).all(|w| w[0] <= w[1]);
        ResolvedWeights::Constant {
            sigma,
            nondecreasing,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ResolvedWeights::Constant { sigma, .. } => sigma.len(),
            ResolvedWeights::ValueDependent(rule) => rule.low.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_value_dependent(&self) -> bool {
        matches!(self, ResolvedWeights::ValueDependent(_))
    }

    pub fn is_constant_nondecreasing(&self) -> bool {
        matches!(self, ResolvedWeights::Constant { nondecreasing: true, .. })
    }

    pub fn constant_sigma(&self) -> Option<&[f64]> {
        match self {
            ResolvedWeights::Constant { sigma, .. } => Some(sigma),
            ResolvedWeights::ValueDependent(_) => None,
        }
    }

    /// Weight of sorted rank `i` (0-based) whose sorted margin is `z`.
    pub fn sigma_at(&self, i: usize, z: f64) -> f64 {
        match self {
            ResolvedWeights::Constant { sigma, .. } => sigma[i],
            ResolvedWeights::ValueDependent(rule) => rule.sigma(i, z),
        }
    }

    /// `σ_i → σ_{n−i+1}`, the transform that turns a decreasing loss into
    /// an increasing one.
    pub fn reversed(&self) -> Self {
        match self {
            ResolvedWeights::Constant { sigma, .. } => {
                ResolvedWeights::constant(sigma.iter().rev().copied().collect())
            }
            ResolvedWeights::ValueDependent(rule) => ResolvedWeights::ValueDependent(CptRule {
                low: rule.low.iter().rev().copied().collect(),
                high: rule.high.iter().rev().copied().collect(),
                threshold: rule.threshold,
            }),
        }
    }

    /// `(start, end)` (inclusive, 0-based) when σ is zero except for one
    /// contiguous run of equal positive weights.
    pub fn topk_run(&self) -> Option<(usize, usize)> {
        let sigma = self.constant_sigma()?;
        topk_run(sigma)
    }
}

pub(crate) fn topk_run(sigma: &[f64]) -> Option<(usize, usize)> {
    let start = sigma.iter().position(|&s| s > 0.0)?;
    let end = sigma.iter().rposition(|&s| s > 0.0)?;
    let w = sigma[start];
    if sigma[start..=end].iter().all(|&s| s == w) && sigma[..start].iter().chain(&sigma[end + 1..]).all(|&s| s == 0.0)
    {
        Some((start, end))
    } else {
        None
    }
}
