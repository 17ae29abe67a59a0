//! Proximal ADMM on the split `z = Dw`, plain and Moreau-smoothed.
//!
//! Each iteration performs
//!
//! ```text
//! z⁺ = argmin_z Ω(z) + (ρ/2)‖z − Dw + λ/ρ‖²                  (PAVA)
//! w⁺ = argmin_w (ρ/2)‖z⁺ − Dw + λ/ρ‖² + g(w) + (r/2)‖w − w‖²
//! λ⁺ = λ + ρ(z⁺ − Dw⁺)
//! ```
//!
//! and records the KKT surrogates `ρ‖D‖‖Δw‖`, `r‖Δw‖`, `‖z − Dw‖` together
//! with exact decrements of the augmented Lagrangian
//! `L_ρ(w, z; λ) = Ω(z) + g(w) + λᵀ(z − Dw) + (ρ/2)‖z − Dw‖²`.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use crate::pava::{solve_z_subproblem_with, PavaOptions};
use crate::problem::Problem;
use crate::regularizers::{MoreauParams, RegularizerSpec};
use crate::wsolver::{WSolver, WSolverOptions, WSubproblem};

/// Penalty sequence `ρ_k`, `k = 0, 1, …`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleSpec {
    /// `ρ_k = ρ₀·factor^k`
    Srm { rho0: f64, factor: f64 },
    /// `ρ_k = ρ₀·base^⌊(k − offset)/period⌋`
    Aorr { rho0: f64, base: f64, offset: i64, period: i64 },
    /// `ρ_{k+1} = ρ_k·slow` while `‖z − Dw‖ > threshold`, else `ρ_k·fast`.
    Ehrm { rho0: f64, slow: f64, fast: f64, threshold: f64 },
    Constant { rho: f64 },
    /// Explicit values; the last one is held once the list runs out.
    Custom { values: Vec<f64> },
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self::srm()
    }
}

impl ScheduleSpec {
    pub fn srm() -> Self {
        ScheduleSpec::Srm {
            rho0: 1e-5,
            factor: 1.2,
        }
    }

    pub fn aorr() -> Self {
        ScheduleSpec::Aorr {
            rho0: 2e-7,
            base: 5.0,
            offset: 7,
            period: 3,
        }
    }

    pub fn ehrm() -> Self {
        ScheduleSpec::Ehrm {
            rho0: 1e-4,
            slow: 1.02,
            fast: 1.07,
            threshold: 1e-2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(format!("schedule {name} must be positive and finite, got {v}")))
            }
        };
        match self {
            ScheduleSpec::Srm { rho0, factor } => {
                positive("rho0", *rho0)?;
                if *factor < 1.0 {
                    return Err(Error::param(format!("schedule factor must be ≥ 1, got {factor}")));
                }
            }
            ScheduleSpec::Aorr { rho0, base, period, .. } => {
                positive("rho0", *rho0)?;
                if *base < 1.0 || *period < 1 {
                    return Err(Error::param("schedule needs base ≥ 1 and period ≥ 1"));
                }
            }
            ScheduleSpec::Ehrm { rho0, slow, fast, threshold } => {
                positive("rho0", *rho0)?;
                positive("threshold", *threshold)?;
                if *slow < 1.0 || *fast < 1.0 {
                    return Err(Error::param("schedule multipliers must be ≥ 1"));
                }
            }
            ScheduleSpec::Constant { rho } => positive("rho", *rho)?,
            ScheduleSpec::Custom { values } => {
                if values.is_empty() {
                    return Err(Error::param("custom schedule needs at least one value"));
                }
                for &v in values {
                    positive("value", v)?;
                }
                if values.windows(2).any(|w| w[0] > w[1]) {
                    return Err(Error::param("custom schedule must be nondecreasing"));
                }
            }
        }
        Ok(())
    }

    /// `ρ_k` given `ρ_{k−1}` and the previous feasibility residual (only the
    /// adaptive schedule looks at those).
    pub fn rho_at(&self, k: usize, prev_rho: Option<f64>, prev_feas: Option<f64>) -> f64 {
        match self {
            ScheduleSpec::Srm { rho0, factor } => rho0 * factor.powi(k as i32),
            ScheduleSpec::Aorr {
                rho0,
                base,
                offset,
                period,
            } => {
                let e = (k as i64 - offset).div_euclid(*period);
                rho0 * base.powi(e as i32)
            }
            ScheduleSpec::Ehrm {
                rho0,
                slow,
                fast,
                threshold,
            } => match (prev_rho, prev_feas) {
                (Some(rho), Some(feas)) => rho * if feas > *threshold { *slow } else { *fast },
                _ => *rho0,
            },
            ScheduleSpec::Constant { rho } => *rho,
            ScheduleSpec::Custom { values } => values[k.min(values.len() - 1)],
        }
    }

    /// First `len` values, with the adaptive schedule evaluated on the given
    /// feasibility residuals.
    pub fn sequence(&self, len: usize, feas: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::with_capacity(len);
        for k in 0..len {
            let prev = out.last().copied();
            let prev_feas = k.checked_sub(1).and_then(|j| feas.get(j).copied());
            out.push(self.rho_at(k, prev, prev_feas));
        }
        out
    }
}

/// Smoothing sequence for the smoothed variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GammaSchedule {
    /// `γ_k = max(initial·factor^k, floor)`
    Geometric { initial: f64, factor: f64, floor: f64 },
    Fixed { gamma: f64 },
}

impl Default for GammaSchedule {
    fn default() -> Self {
        GammaSchedule::Geometric {
            initial: 1e-5,
            factor: 0.9,
            floor: 1e-9,
        }
    }
}

impl GammaSchedule {
    pub fn gamma_at(&self, k: usize) -> f64 {
        match *self {
            GammaSchedule::Geometric { initial, factor, floor } => (initial * factor.powi(k as i32)).max(floor),
            GammaSchedule::Fixed { gamma } => gamma,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            GammaSchedule::Geometric { initial, factor, floor } => {
                initial > 0.0 && floor > 0.0 && factor > 0.0 && factor <= 1.0
            }
            GammaSchedule::Fixed { gamma } => gamma > 0.0 && gamma.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::param("smoothing schedule values must be positive with factor in (0, 1]"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iter: usize,
    pub schedule: ScheduleSpec,
    /// Proximal weight of the w-step.
    pub r: f64,
    pub gamma: GammaSchedule,
    /// Early stop once all KKT surrogates are at most this; `0` disables it.
    pub stop_eps: f64,
    pub seed: u64,
    /// Wall-clock budget in seconds.
    pub time_budget: Option<f64>,
    /// Smallest positive eigenvalue of `DDᵀ`; enables the Lyapunov columns.
    pub sigma_min: Option<f64>,
    pub wsolver: WSolverOptions,
    pub pava: PavaOptions,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iter: 300,
            schedule: ScheduleSpec::default(),
            r: 1.0,
            gamma: GammaSchedule::default(),
            stop_eps: 1e-6,
            seed: 0,
            time_budget: None,
            sigma_min: None,
            wsolver: WSolverOptions::default(),
            pava: PavaOptions::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::param("max_iter must be at least 1"));
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(Error::param(format!("r must be positive, got {}", self.r)));
        }
        if !(self.stop_eps >= 0.0) {
            return Err(Error::param("stop_eps must be nonnegative"));
        }
        if let Some(t) = self.time_budget {
            if !(t > 0.0) {
                return Err(Error::param("time budget must be positive"));
            }
        }
        if let Some(s) = self.sigma_min {
            if !(s > 0.0) {
                return Err(Error::param("sigma_min must be positive"));
            }
        }
        self.schedule.validate()?;
        self.gamma.validate()
    }

    /// Fixed parameters `γ = ε`, `ρ = C₁/ε`, `r = C₂/ε` for the smoothed
    /// variant's complexity guarantee.
    pub fn theory_mode(eps: f64, params: &TheoryParams) -> Self {
        Self {
            schedule: ScheduleSpec::Constant { rho: params.rho },
            r: params.r,
            gamma: GammaSchedule::Fixed { gamma: params.gamma },
            sigma_min: Some(params.sigma),
            stop_eps: eps,
            ..Self::default()
        }
    }
}

/// Parameters satisfying `C₂ > 1` and
/// `C₁ > (8C₂² + 1/(3c) + 4) / (σ(2C₂ − 1))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryParams {
    pub c1: f64,
    pub c2: f64,
    pub gamma: f64,
    pub rho: f64,
    pub r: f64,
    pub sigma: f64,
}

impl TheoryParams {
    /// `C₂ = 2` and `C₁` twice its lower bound. For `c = 0` the `1/(3c)`
    /// term is dropped.
    pub fn new(eps: f64, c: f64, sigma: f64) -> Result<Self> {
        if !(eps > 0.0) || !(sigma > 0.0) || !(c >= 0.0) {
            return Err(Error::param("theory mode needs eps > 0, sigma > 0, c ≥ 0"));
        }
        if c > 0.0 && eps > 1.0 / (3.0 * c) {
            return Err(Error::param(format!("eps = {eps} exceeds 1/(3c) = {}", 1.0 / (3.0 * c))));
        }
        let c2 = 2.0;
        let e0 = if c > 0.0 { 1.0 / (3.0 * c) } else { 0.0 };
        let c1 = 2.0 * (8.0 * c2 * c2 + e0 + 4.0) / (sigma * (2.0 * c2 - 1.0));
        Ok(Self {
            c1,
            c2,
            gamma: eps,
            rho: c1 / eps,
            r: c2 / eps,
            sigma,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverState {
    pub w: Vec<f64>,
    pub z: Vec<f64>,
    pub lambda: Vec<f64>,
    /// `D·w`
    pub dw: Vec<f64>,
    pub k: usize,
    pub rho: f64,
    pub r: f64,
    pub gamma: Option<f64>,
}

impl SolverState {
    /// `w⁰ = 0`, `z⁰ = Dw⁰`, `λ⁰ = 0`.
    pub fn initial(problem: &Problem) -> Self {
        Self::from_point(problem, vec![0.0; problem.d()], None, None).expect("zero point has matching shapes")
    }

    pub fn from_point(problem: &Problem, w: Vec<f64>, z: Option<Vec<f64>>, lambda: Option<Vec<f64>>) -> Result<Self> {
        let dw = problem.apply_d(&w)?;
        let z = z.unwrap_or_else(|| dw.clone());
        let lambda = lambda.unwrap_or_else(|| vec![0.0; problem.n()]);
        for (what, v) in [("initial z", &z), ("initial lambda", &lambda)] {
            if v.len() != problem.n() {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: problem.n(),
                    got: v.len(),
                });
            }
        }
        Ok(Self {
            w,
            z,
            lambda,
            dw,
            k: 0,
            rho: 0.0,
            r: 0.0,
            gamma: None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktSurrogates {
    pub kkt_z: f64,
    pub kkt_w: f64,
    pub kkt_feas: f64,
}

impl KktSurrogates {
    pub fn max(&self) -> f64 {
        self.kkt_z.max(self.kkt_w).max(self.kkt_feas)
    }
}

/// Computable bounds on the two subdifferential distances and the
/// constraint residual after a step from `prev_w` to `state`.
pub fn kkt_surrogates(state: &SolverState, prev_w: &[f64], d_norm: f64) -> KktSurrogates {
    let dw_norm = crate::linalg::dist(&state.w, prev_w);
    let feas = crate::linalg::dist(&state.z, &state.dw);
    KktSurrogates {
        kkt_z: state.rho * d_norm * dw_norm,
        kkt_w: state.r * dw_norm,
        kkt_feas: feas,
    }
}

/// One row per iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub k: usize,
    pub rho: f64,
    pub r: f64,
    pub gamma: Option<f64>,
    /// Rank-based objective at `w` (at `prox_{g,γ}(w)` for the smoothed run).
    pub objective: f64,
    pub aug_lagrangian: f64,
    pub lyapunov: Option<f64>,
    pub kkt_z: f64,
    pub kkt_w: f64,
    pub kkt_feas: f64,
    pub dual_step: f64,
    pub dw_norm: f64,
    /// `L_ρ(w, z⁺; λ) − L_ρ(w, z; λ)`; nonpositive when the z-step descends.
    pub z_descent: f64,
    /// `L_ρ(w⁺, z⁺; λ) − L_ρ(w, z⁺; λ)`.
    pub w_descent: f64,
    /// Magnitude against which the two descent values are compared.
    pub descent_scale: f64,
    /// `‖(λ⁺ − λ) − ρ(z⁺ − Dw⁺)‖ / max(1, ‖λ‖, ‖λ⁺‖)`, i.e. rounding error
    /// of the dual update relative to the size of the multipliers.
    pub dual_residual: f64,
    pub w_inner_iters: usize,
    pub w_converged: bool,
    pub wall_ns: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIter,
    KktTolerance,
    TimeBudget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    /// Reported solution (`prox_{g,γ}(w)` for the smoothed variant).
    pub w: Vec<f64>,
    pub state: SolverState,
    pub trace: Vec<IterationTrace>,
    pub stop: StopReason,
    pub d_norm: f64,
    pub warnings: Vec<String>,
}

impl SolveResult {
    pub fn final_objective(&self) -> Option<f64> {
        self.trace.last().map(|t| t.objective)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Variant {
    Plain,
    Smoothed,
}

pub fn admm_solve(problem: &Problem, config: &SolverConfig) -> Result<SolveResult> {
    run(problem, config, SolverState::initial(problem), Variant::Plain)
}

pub fn admm_solve_from(problem: &Problem, config: &SolverConfig, init: SolverState) -> Result<SolveResult> {
    run(problem, config, init, Variant::Plain)
}

/// The smoothed variant: `g` is replaced by its Moreau envelope with
/// parameter `γ_k`, and the reported point is `prox_{g,γ}(w)`.
pub fn sadmm_solve(problem: &Problem, config: &SolverConfig) -> Result<SolveResult> {
    run(problem, config, SolverState::initial(problem), Variant::Smoothed)
}

pub fn sadmm_solve_from(problem: &Problem, config: &SolverConfig, init: SolverState) -> Result<SolveResult> {
    run(problem, config, init, Variant::Smoothed)
}

/// `Σ a_i b_i` for `a = x − y` without forming the difference twice.
fn diff_dot(x: &[f64], y: &[f64], weight: impl Fn(usize) -> f64) -> f64 {
    x.iter().zip(y).enumerate().map(|(i, (a, b))| (a - b) * weight(i)).sum()
}

fn regularizer_term(reg: &RegularizerSpec, variant: Variant, gamma: f64, w: &[f64]) -> f64 {
    match variant {
        Variant::Plain => reg.value(w),
        Variant::Smoothed => {
            let p = reg.prox(gamma, w).expect("validated smoothing parameter");
            crate::regularizers::moreau_from_prox(reg, gamma, w, &p).0
        }
    }
}

fn run(problem: &Problem, config: &SolverConfig, init: SolverState, variant: Variant) -> Result<SolveResult> {
    config.validate()?;
    if init.w.len() != problem.d() || init.z.len() != problem.n() || init.lambda.len() != problem.n() {
        return Err(Error::arg("initial point does not match the problem shape"));
    }
    let start = Instant::now();
    let reg = *problem.regularizer();
    let c = reg.weak_convexity();
    let weights = problem.weights();
    let loss = problem.loss();
    let constant_sigma = !weights.is_value_dependent();
    let mut warnings: Vec<String> = Vec::new();
    let mut wsolver = WSolver::new(
        problem,
        WSolverOptions {
            seed: config.seed,
            ..config.wsolver
        },
    );
    let d_norm = wsolver.d_norm();

    let mut state = init;
    state.dw = problem.apply_d(&state.w)?;
    let mut omega_z = problem.rank_loss(&state.z);
    let mut trace: Vec<IterationTrace> = Vec::with_capacity(config.max_iter);
    let mut stop = StopReason::MaxIter;
    let mut prev_rho: Option<f64> = None;
    let mut prev_feas: Option<f64> = None;
    let mut bumped_r = false;
    let mut clamped_gamma = false;

    for k in 0..config.max_iter {
        let rho = config.schedule.rho_at(k, prev_rho, prev_feas);
        let gamma = match variant {
            Variant::Plain => None,
            Variant::Smoothed => {
                let (params, clamped) = MoreauParams::clamped(&reg, config.gamma.gamma_at(k));
                if clamped && !clamped_gamma {
                    let msg = format!("smoothing parameter clamped to {} so that c·γ ≤ 1/3", params.gamma);
                    log::warn!("{msg}");
                    warnings.push(msg);
                    clamped_gamma = true;
                }
                Some(params.gamma)
            }
        };
        let mut r = config.r;
        if !reg.is_convex() {
            let floor = match gamma {
                Some(g) => 1.0 / g,
                None => c,
            };
            if r <= floor {
                r = 2.0 * floor;
                if !bumped_r {
                    let msg = format!("proximal weight raised from {} to {r}", config.r);
                    log::info!("{msg}");
                    warnings.push(msg);
                    bumped_r = true;
                }
            }
        }

        // z-step
        let m: Vec<f64> = state.dw.iter().zip(&state.lambda).map(|(u, l)| u - l / rho).collect();
        let zsol = solve_z_subproblem_with(&m, weights, rho, loss, &config.pava).map_err(|e| e.at_iteration(k + 1))?;
        let z_new = zsol.z;
        let omega_new = problem.rank_loss(&z_new);
        let z_descent = omega_new - omega_z
            + diff_dot(&z_new, &state.z, |i| {
                state.lambda[i] + 0.5 * rho * ((z_new[i] - state.dw[i]) + (state.z[i] - state.dw[i]))
            });

        // w-step
        let target: Vec<f64> = z_new.iter().zip(&state.lambda).map(|(z, l)| z + l / rho).collect();
        let sub = WSubproblem {
            target: &target,
            rho,
            r,
            anchor: &state.w,
        };
        let (w_new, info) = match gamma {
            None => wsolver.solve(problem, &sub, &reg),
            Some(g) => wsolver.solve_smooth(problem, &sub, &reg, g),
        }
        .map_err(|e| e.at_iteration(k + 1))?;
        let dw_new = problem.apply_d_unchecked(&w_new);
        let g_gamma = gamma.unwrap_or(0.0);
        let g_old = regularizer_term(&reg, variant, g_gamma, &state.w);
        let g_new = regularizer_term(&reg, variant, g_gamma, &w_new);
        let w_descent = g_new - g_old
            - diff_dot(&dw_new, &state.dw, |i| {
                state.lambda[i] + 0.5 * rho * ((z_new[i] - dw_new[i]) + (z_new[i] - state.dw[i]))
            });

        // dual step
        let resid: Vec<f64> = z_new.iter().zip(&dw_new).map(|(z, u)| z - u).collect();
        let lambda_new: Vec<f64> = state.lambda.iter().zip(&resid).map(|(l, e)| l + rho * e).collect();
        let dlambda: Vec<f64> = lambda_new.iter().zip(&state.lambda).map(|(a, b)| a - b).collect();
        let dual_residual = dlambda
            .iter()
            .zip(&resid)
            .map(|(d, e)| (d - rho * e) * (d - rho * e))
            .sum::<f64>()
            .sqrt()
            / 1f64.max(norm(&state.lambda)).max(norm(&lambda_new));
        let dual_step = norm(&dlambda);
        let dw_norm = crate::linalg::dist(&w_new, &state.w);
        let feas = norm(&resid);

        let descent_scale = 1f64.max(
            omega_z.abs()
                + g_old.abs()
                + dot(&state.lambda, &state.lambda).sqrt() * (norm(&z_new) + norm(&state.z) + norm(&state.dw))
                + 0.5 * rho * (dot(&z_new, &z_new) + dot(&state.z, &state.z) + dot(&state.dw, &state.dw) + dot(&dw_new, &dw_new)),
        );

        let reported_w = match gamma {
            Some(g) => reg.prox(g, &w_new)?,
            None => w_new.clone(),
        };
        let objective = problem.rank_loss(&problem.apply_d_unchecked(&reported_w)) + reg.value(&reported_w);
        let kkt_feas = match gamma {
            Some(_) => {
                let dwt = problem.apply_d_unchecked(&reported_w);
                crate::linalg::dist(&z_new, &dwt)
            }
            None => feas,
        };
        let aug_lagrangian = omega_new + g_new + dot(&lambda_new, &resid) + 0.5 * rho * feas * feas;
        let lyapunov = config
            .sigma_min
            .map(|sigma| aug_lagrangian + 2.0 * r * r / (sigma * rho) * dw_norm * dw_norm);

        state = SolverState {
            w: w_new,
            z: z_new,
            lambda: lambda_new,
            dw: dw_new,
            k: k + 1,
            rho,
            r,
            gamma,
        };
        omega_z = omega_new;
        prev_rho = Some(rho);
        prev_feas = Some(feas);

        let kkt = KktSurrogates {
            kkt_z: rho * d_norm * dw_norm,
            kkt_w: r * dw_norm,
            kkt_feas,
        };
        trace.push(IterationTrace {
            k: k + 1,
            rho,
            r,
            gamma,
            objective,
            aug_lagrangian,
            lyapunov,
            kkt_z: kkt.kkt_z,
            kkt_w: kkt.kkt_w,
            kkt_feas: kkt.kkt_feas,
            dual_step,
            dw_norm,
            z_descent: if constant_sigma { z_descent } else { f64::NAN },
            w_descent,
            descent_scale,
            dual_residual,
            w_inner_iters: info.iterations,
            w_converged: info.converged,
            wall_ns: start.elapsed().as_nanos() as u64,
        });

        if !objective.is_finite() || !aug_lagrangian.is_finite() {
            return Err(Error::Solver {
                iteration: k + 1,
                message: "iterates became non-finite".into(),
            });
        }
        if config.stop_eps > 0.0 && kkt.max() <= config.stop_eps {
            stop = StopReason::KktTolerance;
            break;
        }
        if let Some(budget) = config.time_budget {
            if start.elapsed().as_secs_f64() >= budget {
                stop = StopReason::TimeBudget;
                break;
            }
        }
    }

    let w = match state.gamma {
        Some(g) => reg.prox(g, &state.w)?,
        None => state.w.clone(),
    };
    Ok(SolveResult {
        w,
        state,
        trace,
        stop,
        d_norm,
        warnings,
    })
}

/// Smallest eigenvalue of `DDᵀ` above `1e−10·λ_max`, from whichever Gram
/// matrix is smaller. Limited to `n·d ≤ 10⁶`.
pub fn sigma_min(problem: &Problem) -> Result<f64> {
    let (n, d) = (problem.n(), problem.d());
    if n.saturating_mul(d) > 1_000_000 {
        return Err(Error::arg(format!("sigma_min limited to n·d ≤ 10^6, got {n}×{d}")));
    }
    let rows = problem.x().to_dense_rows();
    let gram = if n <= d {
        DMatrix::from_fn(n, n, |i, j| dot(&rows[i], &rows[j]))
    } else {
        problem.x().gram()
    };
    let eig = gram.symmetric_eigenvalues();
    let max = eig.iter().copied().fold(0.0, f64::max);
    eig.iter()
        .copied()
        .filter(|&v| v > 1e-10 * max)
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))))
        .ok_or_else(|| Error::arg("DDᵀ has no positive eigenvalue"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    /// Set when the check could not run.
    pub skipped: Option<String>,
    pub coefficient: f64,
    pub checked: usize,
    /// Iterations (1-based) where the sufficient decrease failed.
    pub violations: Vec<usize>,
}

/// Checks `Φ^k − Φ^{k+1} ≥ E‖w^{k+1} − w^k‖² + (1/ρ)‖λ^{k+1} − λ^k‖²` with
/// `E = (2r − 1/γ)/2 − 4r²/(σρ) − 2/(σργ²)` on a run with fixed `ρ, r, γ`.
///
/// The decrease is rebuilt from the exact per-step decrements in the trace,
/// so no large values are subtracted. `tol` is relative to the trace's
/// descent scale.
pub fn lyapunov_check(trace: &[IterationTrace], r: f64, rho: f64, gamma: f64, sigma_min: f64, tol: f64) -> LyapunovReport {
    let coefficient = (2.0 * r - 1.0 / gamma) / 2.0 - 4.0 * r * r / (sigma_min * rho) - 2.0 / (sigma_min * rho * gamma * gamma);
    let mut report = LyapunovReport {
        skipped: None,
        coefficient,
        checked: 0,
        violations: Vec::new(),
    };
    if !(coefficient > 0.0) {
        report.skipped = Some(format!("decrease coefficient {coefficient} is not positive"));
        return report;
    }
    if trace.len() < 2 {
        return report;
    }
    if trace.iter().any(|t| t.rho != rho || t.r != r || t.gamma != Some(gamma)) {
        report.skipped = Some("trace does not use the fixed parameters".into());
        return report;
    }
    let a = 2.0 * r * r / (sigma_min * rho);
    // Φ needs w^{k−1}, so the first usable pair is (Φ¹, Φ²).
    for pair in trace.windows(2) {
        let (prev, cur) = (&pair[0], &pair[1]);
        let lagrangian_drop = -(cur.z_descent + cur.w_descent) - cur.dual_step * cur.dual_step / rho;
        let phi_drop = lagrangian_drop + a * (prev.dw_norm * prev.dw_norm - cur.dw_norm * cur.dw_norm);
        let bound = coefficient * cur.dw_norm * cur.dw_norm + cur.dual_step * cur.dual_step / rho;
        report.checked += 1;
        if phi_drop < bound - tol * cur.descent_scale {
            report.violations.push(cur.k);
        }
    }
    report
}

/// Iterations violating `L^k − L^{k+1} ≥ ((2r − c)/2)‖Δw‖² − (1/ρ)‖Δλ‖²`.
pub fn lagrangian_descent_violations(trace: &[IterationTrace], c: f64, tol: f64) -> Vec<usize> {
    trace
        .iter()
        .filter(|t| {
            let drop = -(t.z_descent + t.w_descent) - t.dual_step * t.dual_step / t.rho;
            let bound = (2.0 * t.r - c) / 2.0 * t.dw_norm * t.dw_norm - t.dual_step * t.dual_step / t.rho;
            drop < bound - tol * t.descent_scale
        })
        .map(|t| t.k)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DesignMatrix;
    use crate::losses::LossKind;
    use crate::weights::WeightScheme;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(n: usize, d: usize, seed: u64, scheme: WeightScheme, reg: RegularizerSpec) -> Problem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()).collect();
        let y: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        Problem::new(DesignMatrix::from_rows(&rows).unwrap(), y, LossKind::Logistic, scheme, reg).unwrap()
    }

    #[test]
    fn schedules_follow_their_formulas() {
        let srm = ScheduleSpec::srm();
        assert_eq!(srm.rho_at(0, None, None), 1e-5);
        assert!((srm.rho_at(3, None, None) - 1e-5 * 1.728).abs() < 1e-18);
        let aorr = ScheduleSpec::aorr();
        assert!((aorr.rho_at(7, None, None) - 2e-7).abs() < 1e-22);
        assert!((aorr.rho_at(10, None, None) - 1e-6).abs() < 1e-21);
        assert!((aorr.rho_at(0, None, None) - 2e-7 / 125.0).abs() < 1e-22);
        let ehrm = ScheduleSpec::ehrm();
        assert_eq!(ehrm.rho_at(0, None, None), 1e-4);
        assert!((ehrm.rho_at(1, Some(1e-4), Some(0.5)) - 1.02e-4).abs() < 1e-18);
        assert!((ehrm.rho_at(1, Some(1e-4), Some(1e-3)) - 1.07e-4).abs() < 1e-18);
        let custom = ScheduleSpec::Custom { values: vec![1.0, 2.0] };
        assert_eq!(custom.rho_at(5, None, None), 2.0);
        for s in [srm, aorr, ehrm, custom] {
            let seq = s.sequence(40, &[0.5; 40]);
            assert!(seq.windows(2).all(|w| w[0] <= w[1] && w[0] > 0.0));
        }
        assert!(ScheduleSpec::Custom { values: vec![2.0, 1.0] }.validate().is_err());
    }

    #[test]
    fn gamma_schedule_floor() {
        let g = GammaSchedule::default();
        assert_eq!(g.gamma_at(0), 1e-5);
        assert_eq!(g.gamma_at(500), 1e-9);
    }

    #[test]
    fn dual_update_example() {
        // one iteration from a point where z − Dw = [0.5, −1] with ρ = 2:
        // λ' = λ + ρ(z − Dw)
        let lambda = [0.0, 0.0];
        let resid = [0.5, -1.0];
        let next: Vec<f64> = lambda.iter().zip(&resid).map(|(l, e)| l + 2.0 * e).collect();
        assert_eq!(next, vec![1.0, -2.0]);
    }

    #[test]
    fn fixed_point_is_stationary() {
        // σ ≡ 0 and g ≡ 0: w = 0, z = 0, λ = 0 solves both subproblems.
        let p = random_problem(6, 3, 1, WeightScheme::Explicit { sigma: vec![0.0; 6] }, RegularizerSpec::Zero);
        let cfg = SolverConfig {
            max_iter: 1,
            schedule: ScheduleSpec::Constant { rho: 1.0 },
            ..Default::default()
        };
        let res = admm_solve(&p, &cfg).unwrap();
        let t = &res.trace[0];
        assert_eq!((t.kkt_z, t.kkt_w, t.kkt_feas), (0.0, 0.0, 0.0));
        assert_eq!(res.stop, StopReason::KktTolerance);
    }

    #[test]
    fn trace_identities() {
        let p = random_problem(30, 4, 2, WeightScheme::Superquantile { q: 0.5 }, RegularizerSpec::L2 { mu: 0.1 });
        let cfg = SolverConfig {
            max_iter: 40,
            schedule: ScheduleSpec::Constant { rho: 0.5 },
            stop_eps: 0.0,
            ..Default::default()
        };
        let res = admm_solve(&p, &cfg).unwrap();
        assert_eq!(res.trace.len(), 40);
        for t in &res.trace {
            assert!((t.kkt_feas * t.rho - t.dual_step).abs() <= 1e-12 * 1f64.max(t.dual_step));
            if t.dw_norm > 0.0 {
                assert!((t.kkt_z / t.dw_norm - t.rho * res.d_norm).abs() <= 1e-12 * t.rho * res.d_norm);
            }
            assert!(t.z_descent <= 1e-10 * t.descent_scale);
            assert!(t.w_descent <= 1e-10 * t.descent_scale);
        }
        assert!(lagrangian_descent_violations(&res.trace, 0.0, 1e-10).is_empty());
    }

    #[test]
    fn smoothed_zero_matches_plain() {
        let p = random_problem(25, 4, 3, WeightScheme::Erm, RegularizerSpec::Zero);
        let cfg = SolverConfig {
            max_iter: 30,
            ..Default::default()
        };
        let a = admm_solve(&p, &cfg).unwrap();
        let b = sadmm_solve(&p, &cfg).unwrap();
        for (x, y) in a.trace.iter().zip(&b.trace) {
            assert_eq!(x.objective, y.objective);
        }
        assert_eq!(a.w, b.w);
    }

    #[test]
    fn gamma_clamp_warns() {
        let reg = RegularizerSpec::Mcp { mu: 0.1, theta: 1.0 + 1e-12 };
        let p = random_problem(10, 3, 4, WeightScheme::Erm, reg);
        let cfg = SolverConfig {
            max_iter: 2,
            gamma: GammaSchedule::Fixed { gamma: 1.0 },
            ..Default::default()
        };
        let res = sadmm_solve(&p, &cfg).unwrap();
        let g = res.trace[0].gamma.unwrap();
        assert!((g - 1.0 / 3.0).abs() < 1e-9);
        assert!(res.warnings.iter().any(|w| w.contains("clamped")));
    }

    #[test]
    fn lyapunov_edge_cases() {
        let report = lyapunov_check(&[], 1.0, 1.0, 1.0, 1.0, 0.0);
        assert!(report.skipped.is_some());
        let p = random_problem(4, 6, 5, WeightScheme::Erm, RegularizerSpec::L1 { mu: 0.01 });
        let sigma = sigma_min(&p).unwrap();
        let params = TheoryParams::new(0.1, 0.0, sigma).unwrap();
        let mut cfg = SolverConfig::theory_mode(0.1, &params);
        cfg.max_iter = 1;
        let res = sadmm_solve(&p, &cfg).unwrap();
        let report = lyapunov_check(&res.trace, params.r, params.rho, params.gamma, sigma, 1e-10);
        assert!(report.skipped.is_none());
        assert!(report.violations.is_empty() && report.checked == 0);
    }

    #[test]
    fn sigma_min_matches_both_orientations() {
        let p = random_problem(5, 3, 6, WeightScheme::Erm, RegularizerSpec::Zero);
        let rows = p.x().to_dense_rows();
        let xxt = DMatrix::from_fn(5, 5, |i, j| dot(&rows[i], &rows[j]));
        let eig = xxt.symmetric_eigenvalues();
        let mut pos: Vec<f64> = eig.iter().copied().filter(|v| *v > 1e-9).collect();
        pos.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(pos.len(), 3);
        assert!((sigma_min(&p).unwrap() - pos[0]).abs() < 1e-10);
    }

    #[test]
    fn theory_params_satisfy_bound() {
        let t = TheoryParams::new(0.01, 0.5, 2.0).unwrap();
        assert!(t.c2 > 1.0);
        assert!(t.c1 > (8.0 * t.c2 * t.c2 + 1.0 / 1.5 + 4.0) / (2.0 * (2.0 * t.c2 - 1.0)));
        assert!((t.rho - t.c1 / 0.01).abs() < 1e-9);
        assert!(TheoryParams::new(1.0, 0.5, 2.0).is_err());
    }

    #[test]
    fn time_budget_stops_early() {
        let p = random_problem(20, 3, 7, WeightScheme::Erm, RegularizerSpec::Zero);
        let cfg = SolverConfig {
            max_iter: 100_000,
            time_budget: Some(1e-9),
            stop_eps: 0.0,
            ..Default::default()
        };
        let res = admm_solve(&p, &cfg).unwrap();
        assert_eq!(res.stop, StopReason::TimeBudget);
        assert_eq!(res.trace.len(), 1);
    }
}
