//! Solvers for the w-subproblem
//!
//! ```text
//! min_w (ρ/2)‖t − Dw‖² + g(w) + (r/2)‖w − a‖²
//! ```
//!
//! with target `t = z + λ/ρ` and anchor `a = w^k`. The quadratic part only
//! touches `D` through `DᵀD = XᵀX` and `Dᵀt`, so the Gram matrix and its
//! eigendecomposition are computed once per problem and reused for every ρ
//! and r.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use crate::problem::Problem;
use crate::regularizers::RegularizerSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WSolverOptions {
    pub prox_tol: f64,
    pub prox_max_iter: usize,
    pub smooth_tol: f64,
    pub lbfgs_memory: usize,
    pub smooth_max_iter: usize,
    pub cg_tol: f64,
    /// Largest `d` for which the Gram matrix is formed and diagonalised.
    pub dense_limit: usize,
    pub power_iters: usize,
    pub seed: u64,
}

impl Default for WSolverOptions {
    fn default() -> Self {
        Self {
            prox_tol: 1e-9,
            prox_max_iter: 5000,
            smooth_tol: 1e-9,
            lbfgs_memory: 10,
            smooth_max_iter: 500,
            cg_tol: 1e-10,
            dense_limit: 2000,
            power_iters: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct WSubproblem<'a> {
    /// `t = z + λ/ρ`
    pub target: &'a [f64],
    pub rho: f64,
    pub r: f64,
    pub anchor: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WMethod {
    ClosedForm,
    ConjugateGradient,
    ProxGradient,
    Lbfgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveInfo {
    pub method: WMethod,
    pub iterations: usize,
    pub converged: bool,
}

/// The smooth quadratic `(ρ/2)(wᵀGw − 2wᵀb) + (r/2)‖w − a‖²` with
/// `G = DᵀD` and `b = Dᵀt`, up to a constant.
struct Quadratic<'a> {
    solver: &'a WSolver,
    problem: &'a Problem,
    b: Vec<f64>,
    rho: f64,
    r: f64,
    anchor: &'a [f64],
}

impl Quadratic<'_> {
    fn gram_mul(&self, w: &[f64]) -> Vec<f64> {
        match &self.solver.gram {
            Some(g) => (g * DVector::from_column_slice(w)).as_slice().to_vec(),
            None => {
                let xw = self.problem.x().matvec(w);
                self.problem.x().rmatvec(&xw)
            }
        }
    }

    /// Value and gradient; `gw` is `G·w`.
    fn eval_with(&self, w: &[f64], gw: &[f64]) -> (f64, Vec<f64>) {
        let mut value = 0.5 * self.rho * (dot(w, gw) - 2.0 * dot(w, &self.b));
        let mut grad = vec![0.0; w.len()];
        for j in 0..w.len() {
            let dw = w[j] - self.anchor[j];
            value += 0.5 * self.r * dw * dw;
            grad[j] = self.rho * (gw[j] - self.b[j]) + self.r * dw;
        }
        (value, grad)
    }

    fn eval(&self, w: &[f64]) -> (f64, Vec<f64>) {
        let gw = self.gram_mul(w);
        self.eval_with(w, &gw)
    }

    /// Magnitude of the linear term, used to make tolerances relative.
    fn scale(&self) -> f64 {
        let lin: Vec<f64> = self
            .b
            .iter()
            .zip(self.anchor)
            .map(|(b, a)| self.rho * b + self.r * a)
            .collect();
        1f64.max(norm(&lin))
    }
}

/// Cached w-step machinery for one problem.
#[derive(Debug, Clone)]
pub struct WSolver {
    d: usize,
    gram: Option<DMatrix<f64>>,
    eigen: Option<SymmetricEigen<f64, nalgebra::Dyn>>,
    d_norm: f64,
    opts: WSolverOptions,
}

impl WSolver {
    pub fn new(problem: &Problem, opts: WSolverOptions) -> Self {
        let d = problem.d();
        let gram = (d <= opts.dense_limit).then(|| problem.x().gram());
        let d_norm = match &gram {
            Some(g) if d <= 64 => g.symmetric_eigenvalues().max().max(0.0).sqrt(),
            _ => problem.x().spectral_norm_estimate(opts.power_iters, opts.seed),
        };
        Self {
            d,
            gram,
            eigen: None,
            d_norm,
            opts,
        }
    }

    /// Spectral norm of `D`.
    pub fn d_norm(&self) -> f64 {
        self.d_norm
    }

    pub fn options(&self) -> &WSolverOptions {
        &self.opts
    }

    /// `DᵀD`, when formed.
    pub fn gram(&self) -> Option<&DMatrix<f64>> {
        self.gram.as_ref()
    }

    fn check(&self, sub: &WSubproblem, n: usize) -> Result<()> {
        if sub.target.len() != n {
            return Err(Error::DimensionMismatch {
                what: "w-subproblem target",
                expected: n,
                got: sub.target.len(),
            });
        }
        if sub.anchor.len() != self.d {
            return Err(Error::DimensionMismatch {
                what: "w-subproblem anchor",
                expected: self.d,
                got: sub.anchor.len(),
            });
        }
        if !(sub.rho > 0.0 && sub.rho.is_finite() && sub.r > 0.0 && sub.r.is_finite()) {
            return Err(Error::arg(format!("need finite rho > 0 and r > 0, got rho={}, r={}", sub.rho, sub.r)));
        }
        Ok(())
    }

    fn quadratic<'a>(&'a self, problem: &'a Problem, sub: &WSubproblem<'a>) -> Quadratic<'a> {
        Quadratic {
            solver: self,
            problem,
            b: problem.apply_dt_unchecked(sub.target),
            rho: sub.rho,
            r: sub.r,
            anchor: sub.anchor,
        }
    }

    /// Dispatches on the regulariser: a linear solve for `Zero`/`L2`,
    /// accelerated proximal gradient otherwise.
    pub fn solve(&mut self, problem: &Problem, sub: &WSubproblem, reg: &RegularizerSpec) -> Result<(Vec<f64>, SolveInfo)> {
        match *reg {
            RegularizerSpec::Zero => self.solve_closed_form(problem, sub, 0.0),
            RegularizerSpec::L2 { mu } => self.solve_closed_form(problem, sub, mu),
            _ => self.solve_prox_gradient(problem, sub, reg),
        }
    }

    /// Solves `(ρDᵀD + (μ + r)I) w = ρDᵀt + r·a`.
    pub fn solve_closed_form(&mut self, problem: &Problem, sub: &WSubproblem, mu: f64) -> Result<(Vec<f64>, SolveInfo)> {
        self.check(sub, problem.n())?;
        let shift = mu + sub.r;
        if !(shift > 0.0) {
            return Err(Error::Solver {
                iteration: 0,
                message: format!("w-step system is singular (mu + r = {shift})"),
            });
        }
        let b = problem.apply_dt_unchecked(sub.target);
        let rhs: Vec<f64> = b.iter().zip(sub.anchor).map(|(b, a)| sub.rho * b + sub.r * a).collect();
        if self.gram.is_some() {
            if self.eigen.is_none() {
                self.eigen = Some(SymmetricEigen::new(self.gram.clone().expect("gram formed")));
            }
            let eig = self.eigen.as_ref().expect("eigendecomposition cached");
            let rhs_v = DVector::from_column_slice(&rhs);
            let mut coef = eig.eigenvectors.tr_mul(&rhs_v);
            for (c, &lam) in coef.iter_mut().zip(eig.eigenvalues.iter()) {
                let denom = sub.rho * lam.max(0.0) + shift;
                *c /= denom;
            }
            let w = &eig.eigenvectors * coef;
            return Ok((
                w.as_slice().to_vec(),
                SolveInfo {
                    method: WMethod::ClosedForm,
                    iterations: 1,
                    converged: true,
                },
            ));
        }
        self.conjugate_gradient(problem, sub.rho, shift, &rhs, sub.anchor)
    }

    fn conjugate_gradient(
        &self,
        problem: &Problem,
        rho: f64,
        shift: f64,
        rhs: &[f64],
        start: &[f64],
    ) -> Result<(Vec<f64>, SolveInfo)> {
        let apply = |v: &[f64]| -> Vec<f64> {
            let xv = problem.x().matvec(v);
            let g = problem.x().rmatvec(&xv);
            g.iter().zip(v).map(|(g, v)| rho * g + shift * v).collect()
        };
        let mut w = start.to_vec();
        let aw = apply(&w);
        let mut res: Vec<f64> = rhs.iter().zip(&aw).map(|(b, a)| b - a).collect();
        let mut p = res.clone();
        let mut rr = dot(&res, &res);
        let target = self.opts.cg_tol * 1f64.max(norm(rhs));
        let max_iter = 10 * self.d + 100;
        for it in 0..max_iter {
            if rr.sqrt() <= target {
                return Ok((
                    w,
                    SolveInfo {
                        method: WMethod::ConjugateGradient,
                        iterations: it,
                        converged: true,
                    },
                ));
            }
            let ap = apply(&p);
            let alpha = rr / dot(&p, &ap);
            for j in 0..w.len() {
                w[j] += alpha * p[j];
                res[j] -= alpha * ap[j];
            }
            let rr_new = dot(&res, &res);
            let beta = rr_new / rr;
            rr = rr_new;
            for j in 0..p.len() {
                p[j] = res[j] + beta * p[j];
            }
        }
        log::warn!("conjugate gradient stopped at {max_iter} iterations, residual {}", rr.sqrt());
        Ok((
            w,
            SolveInfo {
                method: WMethod::ConjugateGradient,
                iterations: max_iter,
                converged: false,
            },
        ))
    }

    /// FISTA with adaptive restart on the smooth quadratic plus `g`.
    ///
    /// Stops when the gradient mapping is below `prox_tol`, relative to the
    /// magnitude of the linear term, or after `prox_max_iter` iterations, in
    /// which case the best iterate is returned with `converged = false`.
    pub fn solve_prox_gradient(
        &self,
        problem: &Problem,
        sub: &WSubproblem,
        reg: &RegularizerSpec,
    ) -> Result<(Vec<f64>, SolveInfo)> {
        self.check(sub, problem.n())?;
        reg.validate()?;
        if sub.r <= reg.weak_convexity() {
            return Err(Error::param(format!(
                "proximal weight r = {} must exceed the weak convexity modulus {}",
                sub.r,
                reg.weak_convexity()
            )));
        }
        let q = self.quadratic(problem, sub);
        let lip = sub.rho * self.d_norm * self.d_norm * (1.0 + 1e-10) + sub.r;
        let step = 1.0 / lip;
        let tol = self.opts.prox_tol * q.scale();
        let full = |w: &[f64]| q.eval(w).0 + reg.value(w);

        let mut x = sub.anchor.to_vec();
        let mut y = x.clone();
        let mut t: f64 = 1.0;
        let mut f_x = full(&x);
        let mut best = (f_x, x.clone());
        let mut trial = vec![0.0; self.d];
        for it in 1..=self.opts.prox_max_iter {
            let (_, grad) = q.eval(&y);
            let shifted: Vec<f64> = y.iter().zip(&grad).map(|(y, g)| y - step * g).collect();
            reg.prox_into(step, &shifted, &mut trial);
            let mapping = trial.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() / step;
            let f_trial = full(&trial);
            if f_trial < best.0 {
                best = (f_trial, trial.clone());
            }
            if mapping <= tol {
                return Ok((
                    trial,
                    SolveInfo {
                        method: WMethod::ProxGradient,
                        iterations: it,
                        converged: true,
                    },
                ));
            }
            // gradient-based adaptive restart
            let restart = y
                .iter()
                .zip(&trial)
                .zip(&x)
                .map(|((y, p), x)| (y - p) * (p - x))
                .sum::<f64>()
                > 0.0
                || f_trial > f_x;
            if restart {
                t = 1.0;
                x.clone_from(&trial);
                y.clone_from(&trial);
                f_x = f_trial;
                continue;
            }
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = (t - 1.0) / t_next;
            for j in 0..self.d {
                y[j] = trial[j] + beta * (trial[j] - x[j]);
            }
            x.clone_from(&trial);
            f_x = f_trial;
            t = t_next;
        }
        log::warn!("proximal gradient hit the {}-iteration cap", self.opts.prox_max_iter);
        Ok((
            best.1,
            SolveInfo {
                method: WMethod::ProxGradient,
                iterations: self.opts.prox_max_iter,
                converged: false,
            },
        ))
    }

    /// Minimises the quadratic plus the Moreau envelope `M_{g,γ}`.
    ///
    /// `Zero` and `L2` have quadratic envelopes and go through the linear
    /// solve; other regularisers use L-BFGS.
    pub fn solve_smooth(
        &mut self,
        problem: &Problem,
        sub: &WSubproblem,
        reg: &RegularizerSpec,
        gamma: f64,
    ) -> Result<(Vec<f64>, SolveInfo)> {
        match *reg {
            RegularizerSpec::Zero => self.solve_closed_form(problem, sub, 0.0),
            // envelope of (μ/2)‖w‖² is (μ/(2(1+γμ)))‖w‖²
            RegularizerSpec::L2 { mu } => self.solve_closed_form(problem, sub, mu / (1.0 + gamma * mu)),
            _ => self.solve_lbfgs(problem, sub, reg, gamma),
        }
    }

    /// L-BFGS on the fully smooth subproblem, with a steepest-descent
    /// fallback when the quasi-Newton direction fails the line search.
    pub fn solve_lbfgs(
        &self,
        problem: &Problem,
        sub: &WSubproblem,
        reg: &RegularizerSpec,
        gamma: f64,
    ) -> Result<(Vec<f64>, SolveInfo)> {
        self.check(sub, problem.n())?;
        if !(gamma > 0.0) {
            return Err(Error::param(format!("smoothing parameter must be positive, got {gamma}")));
        }
        reg.validate()?;
        let q = self.quadratic(problem, sub);
        let mut prox = vec![0.0; self.d];
        let mut eval = |w: &[f64]| -> (f64, Vec<f64>) {
            let (mut f, mut g) = q.eval(w);
            reg.prox_into(gamma, w, &mut prox);
            f += reg.value(&prox);
            for j in 0..w.len() {
                let diff = w[j] - prox[j];
                f += diff * diff / (2.0 * gamma);
                g[j] += diff / gamma;
            }
            (f, g)
        };
        let tol = self.opts.smooth_tol * q.scale();
        let mem = self.opts.lbfgs_memory.max(1);
        let mut s_hist: Vec<Vec<f64>> = Vec::with_capacity(mem);
        let mut y_hist: Vec<Vec<f64>> = Vec::with_capacity(mem);
        let mut w = sub.anchor.to_vec();
        let (mut f, mut g) = eval(&w);
        let curvature = sub.rho * self.d_norm * self.d_norm + sub.r + 1.0 / gamma;
        for it in 0..self.opts.smooth_max_iter {
            if norm(&g) <= tol {
                return Ok((
                    w,
                    SolveInfo {
                        method: WMethod::Lbfgs,
                        iterations: it,
                        converged: true,
                    },
                ));
            }
            let mut dir = two_loop(&g, &s_hist, &y_hist);
            if s_hist.is_empty() {
                for v in dir.iter_mut() {
                    *v /= curvature;
                }
            }
            let mut accepted = armijo(&mut eval, &w, f, &g, &dir);
            if accepted.is_none() {
                s_hist.clear();
                y_hist.clear();
                dir = g.iter().map(|v| -v / curvature).collect();
                accepted = armijo(&mut eval, &w, f, &g, &dir);
            }
            let Some((w_new, f_new, g_new)) = accepted else {
                log::warn!("smoothed w-step line search failed at inner iteration {it}");
                return Ok((
                    w,
                    SolveInfo {
                        method: WMethod::Lbfgs,
                        iterations: it,
                        converged: false,
                    },
                ));
            };
            let s: Vec<f64> = w_new.iter().zip(&w).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > 1e-12 * norm(&s) * norm(&y) {
                if s_hist.len() == mem {
                    s_hist.remove(0);
                    y_hist.remove(0);
                }
                s_hist.push(s);
                y_hist.push(y);
            }
            w = w_new;
            f = f_new;
            g = g_new;
        }
        let converged = norm(&g) <= tol;
        if !converged {
            log::warn!("smoothed w-step hit the {}-iteration cap", self.opts.smooth_max_iter);
        }
        Ok((
            w,
            SolveInfo {
                method: WMethod::Lbfgs,
                iterations: self.opts.smooth_max_iter,
                converged,
            },
        ))
    }
}

fn two_loop(g: &[f64], s_hist: &[Vec<f64>], y_hist: &[Vec<f64>]) -> Vec<f64> {
    let mut q: Vec<f64> = g.to_vec();
    let k = s_hist.len();
    let mut alpha = vec![0.0; k];
    for i in (0..k).rev() {
        let rho_i = 1.0 / dot(&y_hist[i], &s_hist[i]);
        alpha[i] = rho_i * dot(&s_hist[i], &q);
        for (qj, yj) in q.iter_mut().zip(&y_hist[i]) {
            *qj -= alpha[i] * yj;
        }
    }
    if k > 0 {
        let h0 = dot(&s_hist[k - 1], &y_hist[k - 1]) / dot(&y_hist[k - 1], &y_hist[k - 1]);
        for qj in q.iter_mut() {
            *qj *= h0;
        }
    }
    for i in 0..k {
        let rho_i = 1.0 / dot(&y_hist[i], &s_hist[i]);
        let beta = rho_i * dot(&y_hist[i], &q);
        for (qj, sj) in q.iter_mut().zip(&s_hist[i]) {
            *qj += (alpha[i] - beta) * sj;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Backtracking line search with the Armijo condition, allowing for
/// rounding noise in `f`.
fn armijo(
    eval: &mut impl FnMut(&[f64]) -> (f64, Vec<f64>),
    w: &[f64],
    f: f64,
    g: &[f64],
    dir: &[f64],
) -> Option<(Vec<f64>, f64, Vec<f64>)> {
    let slope = dot(g, dir);
    if !(slope < 0.0) {
        return None;
    }
    let noise = 1e-13 * f.abs().max(1.0);
    let mut step = 1.0;
    for _ in 0..60 {
        let trial: Vec<f64> = w.iter().zip(dir).map(|(w, d)| w + step * d).collect();
        let (f_new, g_new) = eval(&trial);
        if f_new <= f + 1e-4 * step * slope + noise && f_new.is_finite() {
            return Some((trial, f_new, g_new));
        }
        step *= 0.5;
    }
    None
}

/// Subproblem objective evaluated directly from `D`, without the Gram
/// shortcut.
pub fn subproblem_value(problem: &Problem, sub: &WSubproblem, reg: &RegularizerSpec, w: &[f64]) -> f64 {
    let dw = problem.apply_d_unchecked(w);
    let fit: f64 = sub.target.iter().zip(&dw).map(|(t, d)| (t - d) * (t - d)).sum();
    let prox: f64 = w.iter().zip(sub.anchor).map(|(w, a)| (w - a) * (w - a)).sum();
    0.5 * sub.rho * fit + reg.value(w) + 0.5 * sub.r * prox
}

/// Gradient of the smooth part `(ρ/2)‖t − Dw‖² + (r/2)‖w − a‖²`.
pub fn smooth_gradient(problem: &Problem, sub: &WSubproblem, w: &[f64]) -> Vec<f64> {
    let dw = problem.apply_d_unchecked(w);
    let resid: Vec<f64> = dw.iter().zip(sub.target).map(|(d, t)| d - t).collect();
    let g = problem.apply_dt_unchecked(&resid);
    g.iter()
        .zip(w.iter().zip(sub.anchor))
        .map(|(g, (w, a))| sub.rho * g + sub.r * (w - a))
        .collect()
}

/// Distance from `0` to the subdifferential of the subproblem at `w`.
pub fn first_order_residual(problem: &Problem, sub: &WSubproblem, reg: &RegularizerSpec, w: &[f64]) -> f64 {
    let grad = smooth_gradient(problem, sub, w);
    grad.iter()
        .zip(w)
        .map(|(&gj, &wj)| {
            let (lo, hi) = reg.scalar_subdifferential(wj);
            let (lo, hi) = (gj + lo, gj + hi);
            if lo > 0.0 {
                lo
            } else if hi < 0.0 {
                -hi
            } else {
                0.0
            }
        })
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DesignMatrix;
    use crate::losses::LossKind;
    use crate::weights::WeightScheme;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(n: usize, d: usize, seed: u64) -> Problem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()).collect();
        let y: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        Problem::new(
            DesignMatrix::from_rows(&rows).unwrap(),
            y,
            LossKind::Logistic,
            WeightScheme::Erm,
            RegularizerSpec::Zero,
        )
        .unwrap()
    }

    fn random_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
        (0..len).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
    }

    #[test]
    fn scalar_closed_form() {
        let p = Problem::new(
            DesignMatrix::from_rows(&[vec![1.0]]).unwrap(),
            vec![-1.0],
            LossKind::Logistic,
            WeightScheme::Erm,
            RegularizerSpec::Zero,
        )
        .unwrap();
        let mut s = WSolver::new(&p, WSolverOptions::default());
        let sub = WSubproblem {
            target: &[4.0],
            rho: 1.0,
            r: 1.0,
            anchor: &[0.0],
        };
        let (w, _) = s.solve_closed_form(&p, &sub, 1.0).unwrap();
        assert!((w[0] - 4.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn large_r_pins_to_anchor() {
        let p = random_problem(20, 5, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = random_vec(&mut rng, 20);
        let a = random_vec(&mut rng, 5);
        let mut s = WSolver::new(&p, WSolverOptions::default());
        let sub = WSubproblem {
            target: &t,
            rho: 1.0,
            r: 1e8,
            anchor: &a,
        };
        let (w, _) = s.solve_closed_form(&p, &sub, 0.5).unwrap();
        let dist: f64 = w.iter().zip(&a).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        assert!(dist <= 1e-6);
    }

    #[test]
    fn closed_form_gradient_vanishes() {
        let p = random_problem(20, 5, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = random_vec(&mut rng, 20);
        let a = random_vec(&mut rng, 5);
        let mut s = WSolver::new(&p, WSolverOptions::default());
        for rho in [1e-5, 1.0, 1e4] {
            let sub = WSubproblem {
                target: &t,
                rho,
                r: 1.0,
                anchor: &a,
            };
            let reg = RegularizerSpec::L2 { mu: 0.3 };
            let (w, _) = s.solve_closed_form(&p, &sub, 0.3).unwrap();
            let res = first_order_residual(&p, &sub, &reg, &w);
            assert!(res <= 1e-8 * 1f64.max(rho), "rho={rho} residual={res}");
        }
    }

    #[test]
    fn cg_matches_eigen_path() {
        let p = random_problem(30, 6, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let t = random_vec(&mut rng, 30);
        let a = random_vec(&mut rng, 6);
        let sub = WSubproblem {
            target: &t,
            rho: 2.0,
            r: 0.5,
            anchor: &a,
        };
        let mut dense = WSolver::new(&p, WSolverOptions::default());
        let mut iterative = WSolver::new(
            &p,
            WSolverOptions {
                dense_limit: 0,
                ..Default::default()
            },
        );
        let (w1, _) = dense.solve_closed_form(&p, &sub, 0.1).unwrap();
        let (w2, info) = iterative.solve_closed_form(&p, &sub, 0.1).unwrap();
        assert_eq!(info.method, WMethod::ConjugateGradient);
        for (x, y) in w1.iter().zip(&w2) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_rows_reduce_to_prox() {
        let p = Problem::new(
            DesignMatrix::from_rows(&[vec![0.0, 0.0]]).unwrap(),
            vec![1.0],
            LossKind::Logistic,
            WeightScheme::Erm,
            RegularizerSpec::Zero,
        )
        .unwrap();
        let s = WSolver::new(&p, WSolverOptions::default());
        let reg = RegularizerSpec::L1 { mu: 1.0 };
        let a = [0.8, -0.2];
        let sub = WSubproblem {
            target: &[0.3],
            rho: 1.0,
            r: 2.0,
            anchor: &a,
        };
        let (w, info) = s.solve_prox_gradient(&p, &sub, &reg).unwrap();
        assert!(info.converged);
        let expected = reg.prox(0.5, &a).unwrap();
        for (x, y) in w.iter().zip(&expected) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn l1_scalar_matches_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let n = 4;
            let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>() * 2.0 - 1.0]).collect();
            let p = Problem::new(
                DesignMatrix::from_rows(&rows).unwrap(),
                vec![1.0; n],
                LossKind::Logistic,
                WeightScheme::Erm,
                RegularizerSpec::Zero,
            )
            .unwrap();
            let t = random_vec(&mut rng, n);
            let a = [rng.random::<f64>() - 0.5];
            let reg = RegularizerSpec::L1 { mu: 0.4 };
            let sub = WSubproblem {
                target: &t,
                rho: 1.5,
                r: 0.7,
                anchor: &a,
            };
            let (w, _) = WSolver::new(&p, WSolverOptions::default()).solve_prox_gradient(&p, &sub, &reg).unwrap();
            let mut best = f64::INFINITY;
            let mut k = -3.0f64;
            while k <= 3.0 {
                best = best.min(subproblem_value(&p, &sub, &reg, &[k]));
                k += 1e-4;
            }
            let ours = subproblem_value(&p, &sub, &reg, &w);
            assert!(ours <= best + 1e-7, "ours={ours} grid={best}");
        }
    }

    #[test]
    fn prox_gradient_beats_random_probes() {
        let p = random_problem(25, 6, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let t = random_vec(&mut rng, 25);
        let a = random_vec(&mut rng, 6);
        for reg in [
            RegularizerSpec::L1 { mu: 0.2 },
            RegularizerSpec::Mcp { mu: 0.2, theta: 3.0 },
            RegularizerSpec::Scad { mu: 0.2, theta: 3.7 },
        ] {
            let sub = WSubproblem {
                target: &t,
                rho: 1.0,
                r: 1.0,
                anchor: &a,
            };
            let (w, info) = WSolver::new(&p, WSolverOptions::default()).solve_prox_gradient(&p, &sub, &reg).unwrap();
            assert!(info.converged, "{reg:?} {info:?} res={}", first_order_residual(&p, &sub, &reg, &w));
            let f = subproblem_value(&p, &sub, &reg, &w);
            for _ in 0..1000 {
                let mut delta = random_vec(&mut rng, 6);
                let nd = norm(&delta);
                delta.iter_mut().for_each(|v| *v *= 1e-3 / nd);
                let probe: Vec<f64> = w.iter().zip(&delta).map(|(x, d)| x + d).collect();
                assert!(f <= subproblem_value(&p, &sub, &reg, &probe) + 1e-12);
            }
            assert!(first_order_residual(&p, &sub, &reg, &w) <= 1e-8);
        }
    }

    #[test]
    fn smooth_with_zero_matches_closed_form() {
        let p = random_problem(20, 4, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = random_vec(&mut rng, 20);
        let a = random_vec(&mut rng, 4);
        let sub = WSubproblem {
            target: &t,
            rho: 3.0,
            r: 1.0,
            anchor: &a,
        };
        let mut s = WSolver::new(&p, WSolverOptions::default());
        let (w1, _) = s.solve_closed_form(&p, &sub, 0.0).unwrap();
        let (w2, info) = s.solve_lbfgs(&p, &sub, &RegularizerSpec::Zero, 1e-3).unwrap();
        assert!(info.converged);
        for (x, y) in w1.iter().zip(&w2) {
            assert!((x - y).abs() < 1e-7);
        }
        let (w3, _) = s.solve_smooth(&p, &sub, &RegularizerSpec::Zero, 1e-3).unwrap();
        assert_eq!(w1, w3);
    }

    #[test]
    fn smooth_gradient_small_and_limit() {
        let p = random_problem(20, 4, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let t = random_vec(&mut rng, 20);
        let a = random_vec(&mut rng, 4);
        let reg = RegularizerSpec::L1 { mu: 0.3 };
        let sub = WSubproblem {
            target: &t,
            rho: 1.0,
            r: 1.0,
            anchor: &a,
        };
        let s = WSolver::new(&p, WSolverOptions::default());
        let (w, info) = s.solve_lbfgs(&p, &sub, &reg, 0.05).unwrap();
        assert!(info.converged);
        let mut grad = smooth_gradient(&p, &sub, &w);
        let (_, mg) = crate::regularizers::moreau_value_and_grad(&reg, 0.05, &w).unwrap();
        grad.iter_mut().zip(&mg).for_each(|(g, m)| *g += m);
        assert!(norm(&grad) <= 1e-8);

        let (w_lim, _) = s.solve_lbfgs(&p, &sub, &reg, 1e-9).unwrap();
        let (w_prox, _) = s.solve_prox_gradient(&p, &sub, &reg).unwrap();
        let w_tilde = reg.prox(1e-9, &w_lim).unwrap();
        assert!(crate::linalg::dist(&w_tilde, &w_prox) <= 1e-4);
    }

    #[test]
    fn rejects_r_below_modulus() {
        let p = random_problem(5, 2, 14);
        let s = WSolver::new(&p, WSolverOptions::default());
        let t = [0.0; 5];
        let a = [0.0; 2];
        let sub = WSubproblem {
            target: &t,
            rho: 1.0,
            r: 0.2,
            anchor: &a,
        };
        assert!(s.solve_prox_gradient(&p, &sub, &RegularizerSpec::Mcp { mu: 1.0, theta: 2.0 }).is_err());
    }
}
