//! Trace files.
//!
//! A run produces `trace.csv`, one row per iteration with the columns in
//! [`TRACE_COLUMNS`], and optionally `timing.csv` with `k,wall_ns`. Wall-clock
//! time lives in its own file so that traces of seeded runs are
//! byte-for-byte reproducible. Absent or undefined values are written as
//! empty fields; floats use the shortest representation that round-trips.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::admm::IterationTrace;
use crate::error::{Error, Result};

pub const TRACE_SCHEMA_VERSION: u32 = 1;

pub const TRACE_COLUMNS: [&str; 18] = [
    "k",
    "rho",
    "r",
    "gamma",
    "objective",
    "aug_lagrangian",
    "lyapunov",
    "kkt_z",
    "kkt_w",
    "kkt_feas",
    "dual_step",
    "dw_norm",
    "z_descent",
    "w_descent",
    "descent_scale",
    "dual_residual",
    "w_inner_iters",
    "w_converged",
];

pub const TIMING_COLUMNS: [&str; 2] = ["k", "wall_ns"];

fn float(out: &mut String, v: f64) {
    if v.is_finite() {
        write!(out, "{v:e}").expect("writing to a String");
    }
}

fn opt_float(out: &mut String, v: Option<f64>) {
    if let Some(v) = v {
        float(out, v);
    }
}

pub fn trace_to_csv(trace: &[IterationTrace]) -> String {
    let mut out = TRACE_COLUMNS.join(",");
    out.push('\n');
    for t in trace {
        let mut row = String::new();
        write!(row, "{}", t.k).expect("writing to a String");
        for v in [Some(t.rho), Some(t.r), t.gamma, Some(t.objective), Some(t.aug_lagrangian), t.lyapunov] {
            row.push(',');
            opt_float(&mut row, v);
        }
        for v in [
            t.kkt_z,
            t.kkt_w,
            t.kkt_feas,
            t.dual_step,
            t.dw_norm,
            t.z_descent,
            t.w_descent,
            t.descent_scale,
            t.dual_residual,
        ] {
            row.push(',');
            float(&mut row, v);
        }
        write!(row, ",{},{}", t.w_inner_iters, u8::from(t.w_converged)).expect("writing to a String");
        out.push_str(&row);
        out.push('\n');
    }
    out
}

pub fn timing_to_csv(trace: &[IterationTrace]) -> String {
    let mut out = TIMING_COLUMNS.join(",");
    out.push('\n');
    for t in trace {
        writeln!(out, "{},{}", t.k, t.wall_ns).expect("writing to a String");
    }
    out
}

pub fn write_trace_csv(path: &Path, trace: &[IterationTrace]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(trace_to_csv(trace).as_bytes())?;
    Ok(())
}

pub fn write_timing_csv(path: &Path, trace: &[IterationTrace]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(timing_to_csv(trace).as_bytes())?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceDocument {
    pub schema_version: u32,
    pub columns: Vec<String>,
    pub rows: Vec<IterationTrace>,
}

pub fn trace_to_json(trace: &[IterationTrace]) -> Result<String> {
    let doc = TraceDocument {
        schema_version: TRACE_SCHEMA_VERSION,
        columns: TRACE_COLUMNS.iter().map(|s| s.to_string()).collect(),
        rows: trace.to_vec(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

/// Checks a trace CSV against the schema: exact header, one integer `k`
/// per row increasing by one, numeric or empty float fields, integer inner
/// iteration counts and a `0`/`1` convergence flag. Returns the row count.
pub fn validate_trace_csv(text: &str) -> Result<usize> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Empty("trace file".into()))?;
    if header != TRACE_COLUMNS.join(",") {
        return Err(Error::Parse {
            line: 1,
            message: format!("unexpected header {header:?}"),
        });
    }
    let mut rows = 0;
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        let bad = |message: String| Error::Parse { line: lineno, message };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != TRACE_COLUMNS.len() {
            return Err(bad(format!("expected {} fields, got {}", TRACE_COLUMNS.len(), fields.len())));
        }
        let k: usize = fields[0].parse().map_err(|_| bad(format!("bad k {:?}", fields[0])))?;
        if k != rows + 1 {
            return Err(bad(format!("k = {k} out of sequence")));
        }
        for (name, f) in TRACE_COLUMNS[1..16].iter().zip(&fields[1..16]) {
            if !f.is_empty() && f.parse::<f64>().map_or(true, |v| !v.is_finite()) {
                return Err(bad(format!("column {name} has non-numeric value {f:?}")));
            }
        }
        fields[16]
            .parse::<usize>()
            .map_err(|_| bad(format!("bad w_inner_iters {:?}", fields[16])))?;
        if fields[17] != "0" && fields[17] != "1" {
            return Err(bad(format!("bad w_converged {:?}", fields[17])));
        }
        rows += 1;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(k: usize) -> IterationTrace {
        IterationTrace {
            k,
            rho: 1e-5,
            r: 1.0,
            gamma: None,
            objective: std::f64::consts::LN_2,
            aug_lagrangian: 0.5,
            lyapunov: None,
            kkt_z: 0.0,
            kkt_w: 1.5,
            kkt_feas: 2.0,
            dual_step: 3.0,
            dw_norm: 0.25,
            z_descent: -1.0,
            w_descent: f64::NAN,
            descent_scale: 1.0,
            dual_residual: 0.0,
            w_inner_iters: 1,
            w_converged: true,
            wall_ns: 123,
        }
    }

    #[test]
    fn csv_round_trips_floats() {
        let csv = trace_to_csv(&[row(1), row(2)]);
        assert_eq!(validate_trace_csv(&csv).unwrap(), 2);
        let second = csv.lines().nth(1).unwrap();
        let fields: Vec<&str> = second.split(',').collect();
        assert_eq!(fields[4].parse::<f64>().unwrap(), std::f64::consts::LN_2);
        assert_eq!(fields[3], "");
        assert_eq!(fields[13], "");
        assert!(!csv.contains("123"));
        assert!(timing_to_csv(&[row(1)]).contains("1,123"));
    }

    #[test]
    fn validation_rejects_malformed() {
        let csv = trace_to_csv(&[row(1)]);
        assert!(validate_trace_csv(&csv.replace("k,rho", "k,rh0")).is_err());
        assert!(validate_trace_csv(&trace_to_csv(&[row(2)])).is_err());
        let broken = csv.replacen(",1\n", ",x\n", 1);
        assert!(validate_trace_csv(&broken).is_err());
        assert!(validate_trace_csv("").is_err());
    }

    #[test]
    fn json_carries_version() {
        let json = trace_to_json(&[row(1)]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["schema_version"], 1);
        assert_eq!(v["rows"][0]["k"], 1);
    }
}
