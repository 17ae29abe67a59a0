//! Minibatch subgradient descent on the rank-based objective, the usual
//! first-order comparator.
//!
//! Each batch is treated as a stand-alone problem of its own size: the weight
//! scheme is resolved at `|B|` and applied to the batch losses sorted
//! ascending. This makes the stochastic subgradient biased for non-uniform
//! weights.

use std::collections::HashMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::admm::{IterationTrace, StopReason};
use crate::error::{Error, Result};
use crate::problem::{ascending_order, Problem};
use crate::weights::ResolvedWeights;

/// A subgradient of `Σ_i σ_i l(z_[i]) + g(w)` over the batch, where `z = D_B w`.
/// Loss and regulariser contribute the left end of their subdifferentials,
/// except that kinks of `g` contribute 0 whenever 0 is admissible.
pub fn rank_subgradient(problem: &Problem, w: &[f64], batch: &[usize]) -> Result<Vec<f64>> {
    if w.len() != problem.d() {
        return Err(Error::DimensionMismatch {
            what: "weight vector",
            expected: problem.d(),
            got: w.len(),
        });
    }
    if batch.is_empty() {
        return Err(Error::arg("batch must be nonempty"));
    }
    if let Some(&i) = batch.iter().find(|&&i| i >= problem.n()) {
        return Err(Error::arg(format!("batch index {i} out of range")));
    }
    let weights = problem.scheme().resolve(batch.len())?;
    Ok(batch_subgradient(problem, w, batch, &weights))
}

fn batch_subgradient(problem: &Problem, w: &[f64], batch: &[usize], weights: &ResolvedWeights) -> Vec<f64> {
    let x = problem.x();
    let y = problem.y();
    let loss = problem.loss();
    let z: Vec<f64> = batch.iter().map(|&i| -y[i] * x.row_dot(i, w)).collect();
    let order = ascending_order(&z);
    let mut grad = problem.regularizer().subgradient(w);
    for (rank, &p) in order.iter().enumerate() {
        let s = weights.sigma_at(rank, z[p]);
        if s == 0.0 {
            continue;
        }
        let c = s * loss.derivative(z[p]);
        if c != 0.0 {
            let i = batch[p];
            x.add_row_scaled(i, -y[i] * c, &mut grad);
        }
    }
    grad
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    /// `None` uses the full sample every step.
    pub batch: Option<usize>,
    pub epochs: usize,
    pub seed: u64,
    /// Wall-clock budget in seconds, checked after every step.
    pub time_budget: Option<f64>,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            batch: Some(64),
            epochs: 100,
            seed: 0,
            time_budget: None,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param("learning rate must be finite and nonnegative"));
        }
        if self.batch == Some(0) {
            return Err(Error::param("batch size must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::param("epochs must be at least 1"));
        }
        if let Some(t) = self.time_budget {
            if !(t > 0.0) {
                return Err(Error::param("time budget must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdResult {
    pub w: Vec<f64>,
    /// One row per epoch, plus a final row if the budget ends an epoch early.
    /// Only `k`, `objective` and `wall_ns` are meaningful.
    pub trace: Vec<IterationTrace>,
    pub stop: StopReason,
    pub steps: usize,
}

impl SgdResult {
    pub fn final_objective(&self) -> Option<f64> {
        self.trace.last().map(|t| t.objective)
    }
}

fn row(k: usize, objective: f64, steps: usize, wall_ns: u64) -> IterationTrace {
    let nan = f64::NAN;
    IterationTrace {
        k,
        rho: nan,
        r: nan,
        gamma: None,
        objective,
        aug_lagrangian: nan,
        lyapunov: None,
        kkt_z: nan,
        kkt_w: nan,
        kkt_feas: nan,
        dual_step: nan,
        dw_norm: nan,
        z_descent: nan,
        w_descent: nan,
        descent_scale: nan,
        dual_residual: nan,
        w_inner_iters: steps,
        w_converged: false,
        wall_ns,
    }
}

pub fn sgd_solve(problem: &Problem, config: &SgdConfig) -> Result<SgdResult> {
    sgd_solve_from(problem, config, vec![0.0; problem.d()])
}

pub fn sgd_solve_from(problem: &Problem, config: &SgdConfig, w0: Vec<f64>) -> Result<SgdResult> {
    config.validate()?;
    if w0.len() != problem.d() {
        return Err(Error::DimensionMismatch {
            what: "initial point",
            expected: problem.d(),
            got: w0.len(),
        });
    }
    let start = Instant::now();
    let n = problem.n();
    let b = config.batch.unwrap_or(n).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut cache: HashMap<usize, ResolvedWeights> = HashMap::new();
    let mut idx: Vec<usize> = (0..n).collect();
    let mut w = w0;
    let mut trace = Vec::with_capacity(config.epochs.min(4096));
    let mut steps = 0;
    let mut stop = StopReason::MaxIter;

    'epochs: for epoch in 0..config.epochs {
        idx.shuffle(&mut rng);
        for batch in idx.chunks(b) {
            let weights = match cache.get(&batch.len()) {
                Some(wts) => wts,
                None => {
                    let wts = problem.scheme().resolve(batch.len())?;
                    cache.entry(batch.len()).or_insert(wts)
                }
            };
            let g = batch_subgradient(problem, &w, batch, weights);
            for (wi, gi) in w.iter_mut().zip(&g) {
                *wi -= config.learning_rate * gi;
            }
            steps += 1;
            if let Some(budget) = config.time_budget {
                if start.elapsed().as_secs_f64() >= budget {
                    let obj = problem.objective(&w)?;
                    trace.push(row(epoch + 1, obj, steps, start.elapsed().as_nanos() as u64));
                    stop = StopReason::TimeBudget;
                    break 'epochs;
                }
            }
        }
        let obj = problem.objective(&w)?;
        if !obj.is_finite() {
            return Err(Error::Solver {
                iteration: epoch + 1,
                message: "subgradient iterates became non-finite".into(),
            });
        }
        trace.push(row(epoch + 1, obj, steps, start.elapsed().as_nanos() as u64));
    }
    Ok(SgdResult { w, trace, stop, steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DesignMatrix;
    use crate::losses::LossKind;
    use crate::regularizers::RegularizerSpec;
    use crate::weights::WeightScheme;

    fn small(scheme: WeightScheme, reg: RegularizerSpec) -> Problem {
        let x = DesignMatrix::from_rows(&[vec![1.0, 0.5], vec![-0.3, 2.0], vec![0.7, -1.1], vec![0.2, 0.1]]).unwrap();
        Problem::new(x, vec![1.0, -1.0, 1.0, -1.0], LossKind::Logistic, scheme, reg).unwrap()
    }

    #[test]
    fn erm_full_batch_is_average_gradient() {
        let p = small(WeightScheme::Erm, RegularizerSpec::L2 { mu: 0.1 });
        let w = [0.3, -0.2];
        let g = rank_subgradient(&p, &w, &[0, 1, 2, 3]).unwrap();
        let z = p.apply_d(&w).unwrap();
        let lp: Vec<f64> = z.iter().map(|&v| LossKind::Logistic.derivative(v) / 4.0).collect();
        let expect = p.apply_dt(&lp).unwrap();
        for j in 0..2 {
            assert!((g[j] - expect[j] - 0.1 * w[j]).abs() <= 1e-12);
        }
    }

    #[test]
    fn max_loss_uses_one_sample() {
        let p = small(WeightScheme::Superquantile { q: 0.9 }, RegularizerSpec::Zero);
        let w = [0.3, -0.2];
        let z = p.apply_d(&w).unwrap();
        let worst = (0..4).max_by(|&a, &b| z[a].total_cmp(&z[b])).unwrap();
        let g = rank_subgradient(&p, &w, &[0, 1, 2, 3]).unwrap();
        let mut e = vec![0.0; 4];
        e[worst] = LossKind::Logistic.derivative(z[worst]);
        assert_eq!(g, p.apply_dt(&e).unwrap());
    }

    #[test]
    fn zero_rate_keeps_w_and_runs_are_deterministic() {
        let p = small(WeightScheme::Erm, RegularizerSpec::L2 { mu: 0.1 });
        let cfg = SgdConfig {
            learning_rate: 0.0,
            batch: Some(2),
            epochs: 3,
            ..SgdConfig::default()
        };
        let r = sgd_solve(&p, &cfg).unwrap();
        assert_eq!(r.w, vec![0.0, 0.0]);
        assert_eq!(r.trace.len(), 3);
        let cfg = SgdConfig {
            learning_rate: 0.1,
            seed: 5,
            ..cfg
        };
        let a = sgd_solve(&p, &cfg).unwrap();
        let b = sgd_solve(&p, &cfg).unwrap();
        assert_eq!(a.w, b.w);
        assert_eq!(crate::trace::trace_to_csv(&a.trace), crate::trace::trace_to_csv(&b.trace));
    }

    #[test]
    fn rejects_bad_input() {
        let p = small(WeightScheme::Erm, RegularizerSpec::Zero);
        assert!(rank_subgradient(&p, &[0.0, 0.0], &[]).is_err());
        assert!(rank_subgradient(&p, &[0.0, 0.0], &[4]).is_err());
        assert!(sgd_solve(&p, &SgdConfig { batch: Some(0), ..SgdConfig::default() }).is_err());
    }
}
