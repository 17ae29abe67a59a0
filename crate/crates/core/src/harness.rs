//! Benchmark orchestration.
//!
//! A plan is a JSON list of cells. Each cell fixes a dataset, an experiment
//! framework, a loss and a set of solvers, and is repeated with different
//! seeds; every (cell, repetition, solver) run is independent and runs on a
//! bounded worker pool. Output layout under the chosen directory:
//!
//! ```text
//! summary.csv                       mean / stdev of objective and accuracy
//! timing_summary.csv                mean / stdev of wall time
//! runs.json                         every run record, failures included
//! runs/<cell>/<solver>/rep<r>/trace.csv
//! runs/<cell>/<solver>/rep<r>/timing.csv
//! runs/<cell>/<solver>/rep<r>/suboptimality.csv
//! ```
//!
//! Everything except the two timing files and the wall-time fields of
//! `runs.json` is a deterministic function of the plan.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admm::{admm_solve, sadmm_solve, IterationTrace, ScheduleSpec, SolverConfig, StopReason};
use crate::baselines::{sgd_solve, SgdConfig};
use crate::data::{generate_synthetic, load_dataset, random_group_mask, split, standardize, RawDataset, SyntheticSpec};
use crate::error::{Error, Result};
use crate::losses::LossKind;
use crate::metrics::{accuracy, fairness, predict, FairnessReport};
use crate::regularizers::RegularizerSpec;
use crate::trace::{trace_to_csv, write_timing_csv, write_trace_csv};
use crate::weights::WeightScheme;

pub const THREADS_ENV: &str = "RANK_ADMM_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Framework {
    Srm,
    Aorr,
    Ehrm,
}

impl Framework {
    pub fn default_schedule(self) -> ScheduleSpec {
        match self {
            Framework::Srm => ScheduleSpec::srm(),
            Framework::Aorr => ScheduleSpec::aorr(),
            Framework::Ehrm => ScheduleSpec::ehrm(),
        }
    }

    pub fn default_mu(self) -> f64 {
        match self {
            Framework::Srm | Framework::Ehrm => 1e-2,
            Framework::Aorr => 1e-4,
        }
    }

    pub fn default_regularizer(self) -> RegularizerSpec {
        RegularizerSpec::L2 { mu: self.default_mu() }
    }

    /// AoRR has no size-independent default and returns `None`.
    pub fn default_scheme(self) -> Option<WeightScheme> {
        match self {
            Framework::Srm => Some(WeightScheme::Superquantile { q: 0.8 }),
            Framework::Aorr => None,
            Framework::Ehrm => Some(WeightScheme::cpt_default()),
        }
    }
}

impl std::str::FromStr for Framework {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "srm" => Ok(Framework::Srm),
            "aorr" => Ok(Framework::Aorr),
            "ehrm" => Ok(Framework::Ehrm),
            other => Err(Error::param(format!("unknown framework '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DatasetRef {
    /// LIBSVM, or dense CSV when the extension is `.csv`. Relative paths are
    /// resolved against the plan file's directory.
    File { path: PathBuf },
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Admm,
    Sadmm,
    Sgd,
}

/// A solver and the settings that differ from the framework defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSpec {
    pub kind: Option<SolverKind>,
    pub label: Option<String>,
    pub max_iter: Option<usize>,
    pub schedule: Option<ScheduleSpec>,
    pub r: Option<f64>,
    pub stop_eps: Option<f64>,
    pub time_budget: Option<f64>,
    pub learning_rate: Option<f64>,
    /// `0` selects full-batch steps.
    pub batch: Option<usize>,
    pub epochs: Option<usize>,
}

impl SolverSpec {
    pub fn of(kind: SolverKind) -> Self {
        Self {
            kind: Some(kind),
            ..Self::default()
        }
    }

    fn kind(&self) -> Result<SolverKind> {
        self.kind.ok_or_else(|| Error::param("solver entry is missing `kind`"))
    }

    pub fn label(&self) -> String {
        match (&self.label, self.kind) {
            (Some(l), _) => l.clone(),
            (None, Some(SolverKind::Admm)) => "admm".into(),
            (None, Some(SolverKind::Sadmm)) => "sadmm".into(),
            (None, Some(SolverKind::Sgd)) => "sgd".into(),
            (None, None) => "unnamed".into(),
        }
    }

    pub fn admm_config(&self, framework: Framework, seed: u64) -> SolverConfig {
        let base = SolverConfig::default();
        SolverConfig {
            max_iter: self.max_iter.unwrap_or(base.max_iter),
            schedule: self.schedule.clone().unwrap_or_else(|| framework.default_schedule()),
            r: self.r.unwrap_or(base.r),
            stop_eps: self.stop_eps.unwrap_or(base.stop_eps),
            time_budget: self.time_budget,
            seed,
            ..base
        }
    }

    pub fn sgd_config(&self, seed: u64) -> SgdConfig {
        let base = SgdConfig::default();
        SgdConfig {
            learning_rate: self.learning_rate.unwrap_or(base.learning_rate),
            batch: match self.batch {
                Some(0) => None,
                Some(b) => Some(b),
                None => base.batch,
            },
            epochs: self.epochs.unwrap_or(base.epochs),
            seed,
            time_budget: self.time_budget,
        }
    }
}

fn default_repetitions() -> usize {
    1
}

fn default_fractions() -> Vec<f64> {
    vec![0.6, 0.4]
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkCell {
    pub name: String,
    pub dataset: DatasetRef,
    pub framework: Framework,
    pub loss: LossKind,
    #[serde(default)]
    pub scheme: Option<WeightScheme>,
    #[serde(default)]
    pub regularizer: Option<RegularizerSpec>,
    pub solvers: Vec<SolverSpec>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    /// One seed per repetition; defaults to `0, 1, …`.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    /// Train / test fractions; the solver sees the first part only.
    #[serde(default = "default_fractions")]
    pub split: Vec<f64>,
    #[serde(default = "default_true")]
    pub standardize: bool,
}

impl BenchmarkCell {
    pub fn seeds(&self) -> Vec<u64> {
        match &self.seeds {
            Some(s) => s.clone(),
            None => (0..self.repetitions as u64).collect(),
        }
    }

    pub fn scheme(&self) -> Result<WeightScheme> {
        match (&self.scheme, self.framework.default_scheme()) {
            (Some(s), _) => Ok(s.clone()),
            (None, Some(s)) => Ok(s),
            (None, None) => Err(Error::param(format!("cell '{}' needs an explicit weight scheme", self.name))),
        }
    }

    pub fn regularizer(&self) -> RegularizerSpec {
        self.regularizer.unwrap_or_else(|| self.framework.default_regularizer())
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::param("cell names must be nonempty and contain no path separators"));
        }
        if self.repetitions == 0 {
            return Err(Error::param(format!("cell '{}' needs at least one repetition", self.name)));
        }
        if let Some(s) = &self.seeds {
            if s.len() != self.repetitions {
                return Err(Error::param(format!(
                    "cell '{}' lists {} seeds for {} repetitions",
                    self.name,
                    s.len(),
                    self.repetitions
                )));
            }
        }
        if self.solvers.is_empty() {
            return Err(Error::param(format!("cell '{}' has no solvers", self.name)));
        }
        let mut labels: Vec<String> = Vec::new();
        for s in &self.solvers {
            s.kind()?;
            let l = s.label();
            if labels.contains(&l) || l.contains(['/', '\\']) {
                return Err(Error::param(format!("solver label '{l}' is duplicated or invalid")));
            }
            labels.push(l);
        }
        self.scheme()?;
        self.regularizer().validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkPlan {
    pub cells: Vec<BenchmarkCell>,
    /// Worker count; `RANK_ADMM_THREADS` caps it.
    #[serde(default)]
    pub threads: Option<usize>,
}

impl BenchmarkPlan {
    pub fn from_json(text: &str) -> Result<Self> {
        let plan: Self = serde_json::from_str(text)?;
        plan.validate()?;
        Ok(plan)
    }

    /// Loads a plan and resolves relative dataset paths against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut plan = Self::from_json(&std::fs::read_to_string(path)?)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        for cell in &mut plan.cells {
            if let DatasetRef::File { path: p } = &mut cell.dataset {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() {
            return Err(Error::param("plan has no cells"));
        }
        let mut names = Vec::new();
        for c in &self.cells {
            c.validate()?;
            if names.contains(&&c.name) {
                return Err(Error::param(format!("duplicate cell name '{}'", c.name)));
            }
            names.push(&c.name);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub cell: String,
    pub solver: String,
    pub repetition: usize,
    pub seed: u64,
    /// `None` on success.
    pub error: Option<String>,
    pub final_objective: Option<f64>,
    pub train_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub fairness: Option<FairnessReport>,
    pub iterations: usize,
    pub stop: Option<StopReason>,
    pub wall_seconds: f64,
    #[serde(skip)]
    pub trace: Vec<IterationTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub cell: String,
    pub solver: String,
    pub runs: usize,
    pub failures: usize,
    pub objective: (f64, f64),
    pub train_accuracy: (f64, f64),
    pub test_accuracy: (f64, f64),
    pub wall_seconds: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkResults {
    pub runs: Vec<RunRecord>,
    pub summary: Vec<SummaryRow>,
}

/// Sample mean and stdev with the `n − 1` denominator. The stdev is NaN for a
/// single value and both are NaN for none.
pub fn mean_stdev(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

/// `F^k − F*` with `F*` the smallest objective seen in `traces`, so every
/// entry is nonnegative.
pub fn suboptimality(traces: &[&[IterationTrace]]) -> (f64, Vec<Vec<f64>>) {
    let best = traces
        .iter()
        .flat_map(|t| t.iter().map(|r| r.objective))
        .filter(|v| v.is_finite())
        .fold(f64::INFINITY, f64::min);
    let gaps = traces
        .iter()
        .map(|t| t.iter().map(|r| r.objective - best).collect())
        .collect();
    (best, gaps)
}

pub fn thread_count(requested: Option<usize>) -> usize {
    let hw = std::thread::available_parallelism().map_or(1, |n| n.get());
    let cap = std::env::var(THREADS_ENV).ok().and_then(|v| v.parse::<usize>().ok()).filter(|&v| v > 0);
    let base = requested.filter(|&v| v > 0).unwrap_or(hw);
    cap.map_or(base, |c| base.min(c)).max(1)
}

struct Prepared {
    train: RawDataset,
    test: Option<RawDataset>,
}

fn prepare(cell: &BenchmarkCell, seed: u64) -> Result<Prepared> {
    let data = match &cell.dataset {
        DatasetRef::File { path } => load_dataset(path)?,
        DatasetRef::Synthetic(spec) => generate_synthetic(spec)?,
    };
    let mut data = data;
    if cell.framework == Framework::Ehrm && data.group.is_none() {
        data.group = Some(random_group_mask(data.sample_count(), 0.5, seed ^ 0x9E37_79B9_7F4A_7C15));
    }
    let mut parts = split(&data, &cell.split, seed)?.into_iter();
    let train = parts.next().expect("split yields at least one part");
    let test = parts.next().filter(|t| t.sample_count() > 0);
    if cell.standardize {
        let others: Vec<RawDataset> = test.into_iter().collect();
        let (train, rest) = standardize(&train, &others)?;
        Ok(Prepared {
            train,
            test: rest.into_iter().next(),
        })
    } else {
        Ok(Prepared { train, test })
    }
}

fn failed(cell: &str, solver: String, repetition: usize, seed: u64, error: String, wall: f64) -> RunRecord {
    RunRecord {
        cell: cell.to_string(),
        solver,
        repetition,
        seed,
        error: Some(error),
        final_objective: None,
        train_accuracy: None,
        test_accuracy: None,
        fairness: None,
        iterations: 0,
        stop: None,
        wall_seconds: wall,
        trace: Vec::new(),
    }
}

fn execute(cell: &BenchmarkCell, solver: &SolverSpec, repetition: usize, seed: u64) -> RunRecord {
    let started = Instant::now();
    let label = solver.label();
    let outcome = (|| -> Result<RunRecord> {
        let prepared = prepare(cell, seed)?;
        let problem = prepared.train.problem(cell.loss, cell.scheme()?, cell.regularizer())?;
        let (w, trace, stop) = match solver.kind()? {
            SolverKind::Admm => {
                let r = admm_solve(&problem, &solver.admm_config(cell.framework, seed))?;
                (r.w, r.trace, r.stop)
            }
            SolverKind::Sadmm => {
                let r = sadmm_solve(&problem, &solver.admm_config(cell.framework, seed))?;
                (r.w, r.trace, r.stop)
            }
            SolverKind::Sgd => {
                let r = sgd_solve(&problem, &solver.sgd_config(seed))?;
                (r.w, r.trace, r.stop)
            }
        };
        let final_objective = problem.objective(&w)?;
        let train_accuracy = accuracy(&predict(&prepared.train.x, &w)?, &prepared.train.y)?;
        let (test_accuracy, fair) = match &prepared.test {
            Some(t) => {
                let p = predict(&t.x, &w)?;
                let fair = match (&t.group, cell.framework) {
                    (Some(g), Framework::Ehrm) => fairness(&p, &t.y, g).ok(),
                    _ => None,
                };
                (Some(accuracy(&p, &t.y)?), fair)
            }
            None => (None, None),
        };
        Ok(RunRecord {
            cell: cell.name.clone(),
            solver: label.clone(),
            repetition,
            seed,
            error: None,
            final_objective: Some(final_objective),
            train_accuracy: Some(train_accuracy),
            test_accuracy,
            fairness: fair,
            iterations: trace.len(),
            stop: Some(stop),
            wall_seconds: started.elapsed().as_secs_f64(),
            trace,
        })
    })();
    outcome.unwrap_or_else(|e| {
        log::warn!("cell {} solver {label} repetition {repetition} failed: {e}", cell.name);
        failed(&cell.name, label.clone(), repetition, seed, e.to_string(), started.elapsed().as_secs_f64())
    })
}

/// Runs every cell; failures are recorded in the returned records and do not
/// stop the benchmark.
pub fn run_plan(plan: &BenchmarkPlan) -> Result<BenchmarkResults> {
    plan.validate()?;
    let mut jobs = Vec::new();
    for cell in &plan.cells {
        for (rep, seed) in cell.seeds().into_iter().enumerate() {
            for solver in &cell.solvers {
                jobs.push((cell, solver, rep, seed));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count(plan.threads))
        .build()
        .map_err(|e| Error::arg(format!("cannot start worker pool: {e}")))?;
    let runs: Vec<RunRecord> = pool.install(|| {
        jobs.par_iter()
            .map(|&(cell, solver, rep, seed)| execute(cell, solver, rep, seed))
            .collect()
    });
    let summary = summarize(plan, &runs);
    Ok(BenchmarkResults { runs, summary })
}

fn summarize(plan: &BenchmarkPlan, runs: &[RunRecord]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for cell in &plan.cells {
        for solver in &cell.solvers {
            let label = solver.label();
            let mine: Vec<&RunRecord> = runs.iter().filter(|r| r.cell == cell.name && r.solver == label).collect();
            let ok: Vec<&&RunRecord> = mine.iter().filter(|r| r.error.is_none()).collect();
            let collect = |f: &dyn Fn(&RunRecord) -> Option<f64>| -> Vec<f64> { ok.iter().filter_map(|r| f(r)).collect() };
            rows.push(SummaryRow {
                cell: cell.name.clone(),
                solver: label,
                runs: mine.len(),
                failures: mine.len() - ok.len(),
                objective: mean_stdev(&collect(&|r| r.final_objective)),
                train_accuracy: mean_stdev(&collect(&|r| r.train_accuracy)),
                test_accuracy: mean_stdev(&collect(&|r| r.test_accuracy)),
                wall_seconds: mean_stdev(&collect(&|r| Some(r.wall_seconds))),
            });
        }
    }
    rows
}

fn field(out: &mut String, v: f64) {
    out.push(',');
    if v.is_finite() {
        write!(out, "{v:e}").expect("writing to a String");
    }
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(
        "cell,solver,runs,failures,objective_mean,objective_stdev,train_accuracy_mean,train_accuracy_stdev,test_accuracy_mean,test_accuracy_stdev\n",
    );
    for r in rows {
        write!(out, "{},{},{},{}", r.cell, r.solver, r.runs, r.failures).expect("writing to a String");
        for (m, s) in [r.objective, r.train_accuracy, r.test_accuracy] {
            field(&mut out, m);
            field(&mut out, s);
        }
        out.push('\n');
    }
    out
}

pub fn timing_summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("cell,solver,wall_seconds_mean,wall_seconds_stdev\n");
    for r in rows {
        write!(out, "{},{}", r.cell, r.solver).expect("writing to a String");
        field(&mut out, r.wall_seconds.0);
        field(&mut out, r.wall_seconds.1);
        out.push('\n');
    }
    out
}

/// Writes the directory layout described in the module docs. Sub-optimality
/// is measured against the best objective over all solvers of the same cell
/// and repetition, since repetitions train on different splits.
pub fn write_results(results: &BenchmarkResults, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("summary.csv"), summary_csv(&results.summary))?;
    std::fs::write(out.join("timing_summary.csv"), timing_summary_csv(&results.summary))?;
    std::fs::write(out.join("runs.json"), serde_json::to_string_pretty(&results.runs)?)?;
    let mut groups: Vec<(&str, usize)> = Vec::new();
    for r in &results.runs {
        if !groups.contains(&(r.cell.as_str(), r.repetition)) {
            groups.push((r.cell.as_str(), r.repetition));
        }
    }
    for (cell, rep) in groups {
        let members: Vec<&RunRecord> = results
            .runs
            .iter()
            .filter(|r| r.cell == cell && r.repetition == rep && r.error.is_none())
            .collect();
        let traces: Vec<&[IterationTrace]> = members.iter().map(|r| r.trace.as_slice()).collect();
        let (best, gaps) = suboptimality(&traces);
        for (r, gap) in members.iter().zip(gaps) {
            let dir = out.join("runs").join(&r.cell).join(&r.solver).join(format!("rep{rep}"));
            std::fs::create_dir_all(&dir)?;
            write_trace_csv(&dir.join("trace.csv"), &r.trace)?;
            write_timing_csv(&dir.join("timing.csv"), &r.trace)?;
            let mut s = String::from("k,objective,f_star,suboptimality\n");
            for (t, g) in r.trace.iter().zip(gap) {
                writeln!(s, "{},{:e},{:e},{:e}", t.k, t.objective, best, g).expect("writing to a String");
            }
            std::fs::write(dir.join("suboptimality.csv"), s)?;
        }
    }
    Ok(())
}

/// Plan execution plus output, returning the results.
pub fn run_benchmark(plan: &BenchmarkPlan, out: &Path) -> Result<BenchmarkResults> {
    let results = run_plan(plan)?;
    write_results(&results, out)?;
    Ok(results)
}

/// Trace CSV of a single run, for callers that bypass the file layout.
pub fn run_trace_csv(record: &RunRecord) -> String {
    trace_to_csv(&record.trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan_json() -> &'static str {
        r#"{
          "threads": 2,
          "cells": [{
            "name": "tiny",
            "dataset": {"type": "synthetic", "n": 40, "d": 4, "informative_fraction": 0.5,
                        "class_sep": 1.5, "flip_fraction": 0.05, "seed": 1},
            "framework": "srm",
            "loss": "logistic",
            "repetitions": 2,
            "solvers": [{"kind": "admm", "max_iter": 20}, {"kind": "sgd", "epochs": 5}]
          }]
        }"#
    }

    #[test]
    fn stdev_hand_triple() {
        let (m, s) = mean_stdev(&[1.0, 2.0, 4.0]);
        assert!((m - 7.0 / 3.0).abs() < 1e-15);
        // deviations −4/3, −1/3, 5/3: squares sum to 42/9, over n − 1 = 2
        assert!((s - (7.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(mean_stdev(&[3.0]).1.is_nan());
    }

    #[test]
    fn plan_defaults_and_validation() {
        let plan = BenchmarkPlan::from_json(plan_json()).unwrap();
        let cell = &plan.cells[0];
        assert_eq!(cell.seeds(), vec![0, 1]);
        assert_eq!(cell.regularizer(), RegularizerSpec::L2 { mu: 1e-2 });
        assert_eq!(cell.split, vec![0.6, 0.4]);
        let cfg = cell.solvers[0].admm_config(Framework::Aorr, 3);
        assert_eq!(cfg.schedule, ScheduleSpec::aorr());
        assert_eq!(cfg.max_iter, 20);
        let bad = plan_json().replace("\"repetitions\": 2", "\"repetitions\": 0");
        assert!(BenchmarkPlan::from_json(&bad).is_err());
        let aorr = plan_json().replace("\"srm\"", "\"aorr\"");
        assert!(BenchmarkPlan::from_json(&aorr).is_err());
    }

    #[test]
    fn runs_are_reproducible_and_gaps_nonnegative() {
        let plan = BenchmarkPlan::from_json(plan_json()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let a = run_benchmark(&plan, &dir.path().join("a")).unwrap();
        let b = run_benchmark(&plan, &dir.path().join("b")).unwrap();
        assert_eq!(a.runs.len(), 4);
        assert!(a.runs.iter().all(|r| r.error.is_none()));
        assert_eq!(summary_csv(&a.summary), summary_csv(&b.summary));
        for r in &a.runs {
            let p = format!("runs/tiny/{}/rep{}/trace.csv", r.solver, r.repetition);
            let ta = std::fs::read_to_string(dir.path().join("a").join(&p)).unwrap();
            let tb = std::fs::read_to_string(dir.path().join("b").join(&p)).unwrap();
            assert_eq!(ta, tb);
            crate::trace::validate_trace_csv(&ta).unwrap();
            let s = std::fs::read_to_string(dir.path().join("a").join(p.replace("trace", "suboptimality"))).unwrap();
            for line in s.lines().skip(1) {
                let gap: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
                assert!(gap >= 0.0);
            }
        }
    }

    #[test]
    fn failures_are_recorded() {
        let mut plan = BenchmarkPlan::from_json(plan_json()).unwrap();
        plan.cells[0].dataset = DatasetRef::File {
            path: "/nonexistent/x.svm".into(),
        };
        let res = run_plan(&plan).unwrap();
        assert!(res.runs.iter().all(|r| r.error.is_some()));
        assert_eq!(res.summary[0].failures, 2);
    }
}
