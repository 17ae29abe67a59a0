//! Separable weakly convex regularizers, their proximal maps and Moreau
//! envelopes.
//!
//! Scaling follows the experiments this crate was built to reproduce:
//! `L2 = (μ/2)‖w‖²` and `L1 = (μ/2)‖w‖₁`. MCP and SCAD use `mu` as the
//! usual `λ` level and `theta` as the concavity parameter.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegularizerSpec {
    Zero,
    L2 { mu: f64 },
    L1 { mu: f64 },
    Mcp { mu: f64, theta: f64 },
    Scad { mu: f64, theta: f64 },
}

impl RegularizerSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            RegularizerSpec::Zero => Ok(()),
            RegularizerSpec::L2 { mu } | RegularizerSpec::L1 { mu } => positive("mu", mu),
            RegularizerSpec::Mcp { mu, theta } => {
                positive("mu", mu)?;
                if !(theta > 1.0 && theta.is_finite()) {
                    return Err(Error::param(format!("MCP theta must exceed 1, got {theta}")));
                }
                Ok(())
            }
            RegularizerSpec::Scad { mu, theta } => {
                positive("mu", mu)?;
                if !(theta > 2.0 && theta.is_finite()) {
                    return Err(Error::param(format!("SCAD theta must exceed 2, got {theta}")));
                }
                Ok(())
            }
        }
    }

    /// Modulus `c` such that `g + (c/2)‖·‖²` is convex.
    pub fn weak_convexity(&self) -> f64 {
        match *self {
            RegularizerSpec::Zero | RegularizerSpec::L2 { .. } | RegularizerSpec::L1 { .. } => 0.0,
            RegularizerSpec::Mcp { theta, .. } => 1.0 / theta,
            RegularizerSpec::Scad { theta, .. } => 1.0 / (theta - 1.0),
        }
    }

    pub fn is_convex(&self) -> bool {
        self.weak_convexity() == 0.0
    }

    /// `Zero` and `L2` admit the closed-form w-step.
    pub fn is_quadratic(&self) -> bool {
        matches!(self, RegularizerSpec::Zero | RegularizerSpec::L2 { .. })
    }

    pub fn scalar_value(&self, x: f64) -> f64 {
        let a = x.abs();
        match *self {
            RegularizerSpec::Zero => 0.0,
            RegularizerSpec::L2 { mu } => 0.5 * mu * x * x,
            RegularizerSpec::L1 { mu } => 0.5 * mu * a,
            RegularizerSpec::Mcp { mu, theta } => {
                if a <= theta * mu {
                    mu * a - x * x / (2.0 * theta)
                } else {
                    0.5 * theta * mu * mu
                }
            }
            RegularizerSpec::Scad { mu, theta } => {
                if a <= mu {
                    mu * a
                } else if a <= theta * mu {
                    (2.0 * theta * mu * a - x * x - mu * mu) / (2.0 * (theta - 1.0))
                } else {
                    0.5 * mu * mu * (theta + 1.0)
                }
            }
        }
    }

    pub fn value(&self, w: &[f64]) -> f64 {
        match *self {
            RegularizerSpec::Zero => 0.0,
            _ => w.iter().map(|&x| self.scalar_value(x)).sum(),
        }
    }

    /// Clarke subdifferential `[lo, hi]` of the scalar penalty at `x`.
    pub fn scalar_subdifferential(&self, x: f64) -> (f64, f64) {
        let sign = x.signum();
        let a = x.abs();
        match *self {
            RegularizerSpec::Zero => (0.0, 0.0),
            RegularizerSpec::L2 { mu } => (mu * x, mu * x),
            RegularizerSpec::L1 { mu } => {
                if x == 0.0 {
                    (-0.5 * mu, 0.5 * mu)
                } else {
                    (0.5 * mu * sign, 0.5 * mu * sign)
                }
            }
            RegularizerSpec::Mcp { mu, theta } => {
                if x == 0.0 {
                    (-mu, mu)
                } else if a <= theta * mu {
                    let g = sign * (mu - a / theta);
                    (g, g)
                } else {
                    (0.0, 0.0)
                }
            }
            RegularizerSpec::Scad { mu, theta } => {
                if x == 0.0 {
                    (-mu, mu)
                } else if a <= mu {
                    (sign * mu, sign * mu)
                } else if a <= theta * mu {
                    let g = sign * (theta * mu - a) / (theta - 1.0);
                    (g, g)
                } else {
                    (0.0, 0.0)
                }
            }
        }
    }

    /// One subgradient per coordinate (zero at kinks where 0 is admissible).
    pub fn subgradient(&self, w: &[f64]) -> Vec<f64> {
        w.iter()
            .map(|&x| {
                let (lo, hi) = self.scalar_subdifferential(x);
                if lo <= 0.0 && 0.0 <= hi {
                    0.0
                } else {
                    lo
                }
            })
            .collect()
    }

    fn check_gamma(&self, gamma: f64) -> Result<()> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::param(format!("prox parameter must be positive, got {gamma}")));
        }
        if self.weak_convexity() * gamma >= 1.0 {
            return Err(Error::param(format!(
                "prox parameter {gamma} violates c·γ < 1 (c = {})",
                self.weak_convexity()
            )));
        }
        Ok(())
    }

    fn scalar_prox(&self, gamma: f64, x: f64) -> f64 {
        let sign = x.signum();
        let a = x.abs();
        match *self {
            RegularizerSpec::Zero => x,
            RegularizerSpec::L2 { mu } => x / (1.0 + gamma * mu),
            RegularizerSpec::L1 { mu } => sign * (a - 0.5 * gamma * mu).max(0.0),
            RegularizerSpec::Mcp { mu, theta } => {
                if a <= gamma * mu {
                    0.0
                } else if a <= theta * mu {
                    sign * (a - gamma * mu) / (1.0 - gamma / theta)
                } else {
                    x
                }
            }
            RegularizerSpec::Scad { mu, theta } => {
                if a <= (1.0 + gamma) * mu {
                    sign * (a - gamma * mu).max(0.0)
                } else if a <= theta * mu {
                    sign * (a * (theta - 1.0) - gamma * theta * mu) / (theta - 1.0 - gamma)
                } else {
                    x
                }
            }
        }
    }

    /// `argmin_x g(x) + (1/2γ)‖x − w‖²`; requires `c·γ < 1`.
    pub fn prox(&self, gamma: f64, w: &[f64]) -> Result<Vec<f64>> {
        self.check_gamma(gamma)?;
        Ok(w.iter().map(|&x| self.scalar_prox(gamma, x)).collect())
    }

    pub(crate) fn prox_into(&self, gamma: f64, w: &[f64], out: &mut [f64]) {
        for (o, &x) in out.iter_mut().zip(w) {
            *o = self.scalar_prox(gamma, x);
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("{name} must be positive, got {v}")))
    }
}

pub fn reg_value(spec: &RegularizerSpec, w: &[f64]) -> f64 {
    spec.value(w)
}

pub fn prox(spec: &RegularizerSpec, gamma: f64, w: &[f64]) -> Result<Vec<f64>> {
    spec.prox(gamma, w)
}

/// Smoothing parameter of the Moreau envelope, validated against `c·γ ≤ 1/3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoreauParams {
    pub gamma: f64,
}

impl MoreauParams {
    pub fn new(spec: &RegularizerSpec, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::param(format!("smoothing parameter must be positive, got {gamma}")));
        }
        if spec.weak_convexity() * gamma > 1.0 / 3.0 {
            return Err(Error::param(format!(
                "smoothing parameter {gamma} violates c·γ ≤ 1/3 (c = {})",
                spec.weak_convexity()
            )));
        }
        Ok(Self { gamma })
    }

    /// Largest admissible γ not above `requested`; the flag reports a clamp.
    pub fn clamped(spec: &RegularizerSpec, requested: f64) -> (Self, bool) {
        let c = spec.weak_convexity();
        if c > 0.0 && c * requested > 1.0 / 3.0 {
            (Self { gamma: 1.0 / (3.0 * c) }, true)
        } else {
            (Self { gamma: requested }, false)
        }
    }
}

/// Value and gradient of `M_{g,γ}(w) = min_x g(x) + (1/2γ)‖x − w‖²`.
pub fn moreau_value_and_grad(spec: &RegularizerSpec, gamma: f64, w: &[f64]) -> Result<(f64, Vec<f64>)> {
    MoreauParams::new(spec, gamma)?;
    let p = spec.prox(gamma, w)?;
    Ok(moreau_from_prox(spec, gamma, w, &p))
}

pub(crate) fn moreau_from_prox(spec: &RegularizerSpec, gamma: f64, w: &[f64], p: &[f64]) -> (f64, Vec<f64>) {
    let mut value = spec.value(p);
    let mut grad = Vec::with_capacity(w.len());
    for (&wi, &pi) in w.iter().zip(p) {
        let diff = wi - pi;
        value += diff * diff / (2.0 * gamma);
        grad.push(diff / gamma);
    }
    (value, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid_prox(spec: &RegularizerSpec, gamma: f64, w: f64, lo: f64, hi: f64, h: f64) -> f64 {
        let steps = ((hi - lo) / h).round() as usize;
        let mut best = (f64::INFINITY, lo);
        for k in 0..=steps {
            let x = lo + k as f64 * h;
            let f = spec.scalar_value(x) + (x - w) * (x - w) / (2.0 * gamma);
            if f < best.0 {
                best = (f, x);
            }
        }
        best.1
    }

    fn all_specs() -> Vec<RegularizerSpec> {
        vec![
            RegularizerSpec::Zero,
            RegularizerSpec::L2 { mu: 0.7 },
            RegularizerSpec::L1 { mu: 1.3 },
            RegularizerSpec::Mcp { mu: 1.0, theta: 4.0 },
            RegularizerSpec::Scad { mu: 0.8, theta: 3.7 },
        ]
    }

    #[test]
    fn values() {
        assert_eq!(reg_value(&RegularizerSpec::Zero, &[1.0, 2.0]), 0.0);
        assert_eq!(reg_value(&RegularizerSpec::L2 { mu: 2.0 }, &[3.0, 4.0]), 25.0);
        assert_eq!(reg_value(&RegularizerSpec::L1 { mu: 2.0 }, &[3.0, -4.0]), 7.0);
    }

    #[test]
    fn weak_convexity_moduli() {
        assert_eq!(RegularizerSpec::Mcp { mu: 1.0, theta: 4.0 }.weak_convexity(), 0.25);
        assert_eq!(RegularizerSpec::Scad { mu: 1.0, theta: 3.0 }.weak_convexity(), 0.5);
        assert!(RegularizerSpec::Mcp { mu: 1.0, theta: 1.0 }.validate().is_err());
        assert!(RegularizerSpec::Scad { mu: 1.0, theta: 2.0 }.validate().is_err());
        assert!(RegularizerSpec::L1 { mu: 0.0 }.validate().is_err());
    }

    #[test]
    fn closed_form_proxes() {
        assert_eq!(prox(&RegularizerSpec::L1 { mu: 2.0 }, 0.5, &[2.0]).unwrap(), vec![1.5]);
        assert_eq!(prox(&RegularizerSpec::L2 { mu: 1.0 }, 1.0, &[4.0]).unwrap(), vec![2.0]);
        assert_eq!(prox(&RegularizerSpec::Zero, 1.0, &[4.0]).unwrap(), vec![4.0]);
        assert!(prox(&RegularizerSpec::Mcp { mu: 1.0, theta: 2.0 }, 2.0, &[1.0]).is_err());
    }

    #[test]
    fn mcp_prox_small_input_matches_grid() {
        let spec = RegularizerSpec::Mcp { mu: 1.0, theta: 4.0 };
        let p = prox(&spec, 0.1, &[0.05]).unwrap()[0];
        let oracle = grid_prox(&spec, 0.1, 0.05, -1.0, 1.0, 1e-7);
        assert!((p - oracle).abs() < 1e-6, "{p} vs {oracle}");
    }

    #[test]
    fn every_branch_matches_grid() {
        let cases = [
            (RegularizerSpec::Mcp { mu: 1.0, theta: 4.0 }, 0.5),
            (RegularizerSpec::Scad { mu: 1.0, theta: 3.7 }, 0.5),
            (RegularizerSpec::Scad { mu: 0.5, theta: 3.0 }, 1.5),
        ];
        for (spec, gamma) in cases {
            for w in [-6.0, -2.1, -1.2, -0.3, 0.0, 0.4, 0.9, 1.6, 2.5, 3.3, 5.0] {
                let p = spec.prox(gamma, &[w]).unwrap()[0];
                let oracle = grid_prox(&spec, gamma, w, -8.0, 8.0, 1e-5);
                assert!((p - oracle).abs() < 2e-5, "{spec:?} w={w}: {p} vs {oracle}");
            }
        }
    }

    #[test]
    fn moreau_of_zero_and_l1() {
        let (v, g) = moreau_value_and_grad(&RegularizerSpec::Zero, 0.3, &[1.0, -2.0]).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(g, vec![0.0, 0.0]);
        let spec = RegularizerSpec::L1 { mu: 2.0 };
        let (_, g) = moreau_value_and_grad(&spec, 0.5, &[2.0]).unwrap();
        assert_eq!(g, vec![1.0]);
        assert_eq!(spec.scalar_subdifferential(1.5), (1.0, 1.0));
    }

    #[test]
    fn gamma_clamp() {
        // theta must exceed 1, so c = 1 is approached from below
        let c_one = RegularizerSpec::Mcp { mu: 1.0, theta: 1.0000000001 };
        let (p, clamped) = MoreauParams::clamped(&c_one, 1.0);
        assert!(clamped);
        assert!((p.gamma - 1.0 / 3.0).abs() < 1e-9);
        let (p, clamped) = MoreauParams::clamped(&RegularizerSpec::L1 { mu: 1.0 }, 1.0);
        assert!(!clamped);
        assert_eq!(p.gamma, 1.0);
    }

    proptest! {
        #[test]
        fn moreau_gradient_matches_finite_differences(which in 0usize..5, w in prop::collection::vec(-5.0f64..5.0, 1..5)) {
            let spec = all_specs()[which];
            let gamma = 0.2;
            let (_, grad) = moreau_value_and_grad(&spec, gamma, &w).unwrap();
            let h = 1e-6;
            for j in 0..w.len() {
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[j] += h;
                wm[j] -= h;
                let fp = moreau_value_and_grad(&spec, gamma, &wp).unwrap().0;
                let fm = moreau_value_and_grad(&spec, gamma, &wm).unwrap().0;
                let fd = (fp - fm) / (2.0 * h);
                prop_assert!((fd - grad[j]).abs() <= 1e-5 * grad[j].abs().max(1.0), "{fd} vs {}", grad[j]);
            }
        }

        #[test]
        fn prox_lipschitz_bound(which in 0usize..5, x in prop::collection::vec(-5.0f64..5.0, 3),
                                y in prop::collection::vec(-5.0f64..5.0, 3)) {
            let spec = all_specs()[which];
            let c = spec.weak_convexity();
            let gamma = if c > 0.0 { 1.0 / (3.0 * c) } else { 0.7 };
            let px = spec.prox(gamma, &x).unwrap();
            let py = spec.prox(gamma, &y).unwrap();
            let lhs: f64 = px.iter().zip(&py).map(|(a, b)| (a - b).powi(2)).sum();
            let rhs: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum();
            prop_assert!(lhs <= 3.0 * rhs + 1e-12);
        }

        #[test]
        fn moreau_plus_quadratic_is_convex(which in 0usize..5, x in prop::collection::vec(-5.0f64..5.0, 2),
                                           y in prop::collection::vec(-5.0f64..5.0, 2)) {
            let spec = all_specs()[which];
            let c = spec.weak_convexity();
            let gamma = if c > 0.0 { 1.0 / (3.0 * c) } else { 0.7 };
            let f = |v: &[f64]| {
                moreau_value_and_grad(&spec, gamma, v).unwrap().0
                    + v.iter().map(|a| a * a).sum::<f64>() / (2.0 * gamma)
            };
            for t in [0.25, 0.5, 0.75] {
                let mix: Vec<f64> = x.iter().zip(&y).map(|(a, b)| t * a + (1.0 - t) * b).collect();
                prop_assert!(f(&mix) <= t * f(&x) + (1.0 - t) * f(&y) + 1e-9);
            }
        }
    }
}
