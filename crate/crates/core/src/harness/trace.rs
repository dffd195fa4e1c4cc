//! CSV traces and JSON summaries.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::write_atomic;
use crate::error::{BdaError, Result};
use crate::outer::{Evaluation, RunRecord, RunStatus};

pub const TRACE_HEADER: &str = "t,phiK,grad_norm,err_x,err_y,f_gap,phi_gap,wall_ms";
pub const INNER_HEADER: &str = "t,k,f_val,F_val,proj_active";

/// One parsed row of an outer trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    pub phi_k: f64,
    pub grad_norm: f64,
    pub err_x: Option<f64>,
    pub err_y: Option<f64>,
    pub f_gap: Option<f64>,
    pub phi_gap: Option<f64>,
    pub wall_ms: Option<f64>,
}

/// `{:.16e}` prints 17 significant digits, enough to round-trip any `f64`.
fn num(out: &mut String, v: f64) {
    write!(out, "{v:.16e}").unwrap();
}

fn opt(out: &mut String, v: Option<f64>) {
    if let Some(v) = v {
        num(out, v);
    }
}

pub fn trace_csv(record: &RunRecord) -> Result<String> {
    let mut out = String::with_capacity(64 * (record.rows.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in &record.rows {
        let finite = [Some(r.phi_k), Some(r.grad_norm), r.err_x, r.err_y, r.f_gap, r.phi_gap, r.wall_ms]
            .into_iter()
            .flatten()
            .all(f64::is_finite);
        if !finite {
            return Err(BdaError::numerical("trace row", format!("t = {}", r.t)));
        }
        write!(out, "{},", r.t).unwrap();
        num(&mut out, r.phi_k);
        out.push(',');
        num(&mut out, r.grad_norm);
        for v in [r.err_x, r.err_y, r.f_gap, r.phi_gap, r.wall_ms] {
            out.push(',');
            opt(&mut out, v);
        }
        out.push('\n');
    }
    Ok(out)
}

/// Writes the outer trace of `record` to `path` atomically.
pub fn emit_trace(record: &RunRecord, path: &Path) -> Result<()> {
    write_atomic(path, trace_csv(record)?.as_bytes())
}

fn cell(field: &str, line: usize) -> Result<Option<f64>> {
    if field.is_empty() {
        return Ok(None);
    }
    field.parse().map(Some).map_err(|_| BdaError::Config(format!("trace line {line}: bad number `{field}`")))
}

fn required(field: &str, line: usize) -> Result<f64> {
    cell(field, line)?.ok_or_else(|| BdaError::Config(format!("trace line {line}: missing value")))
}

pub fn parse_trace(text: &str) -> Result<Vec<TraceRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == TRACE_HEADER => {}
        _ => return Err(BdaError::Config("trace is missing its header".into())),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(BdaError::Config(format!("trace line {line_no}: expected 8 fields, got {}", f.len())));
        }
        rows.push(TraceRow {
            t: f[0].parse().map_err(|_| BdaError::Config(format!("trace line {line_no}: bad t")))?,
            phi_k: required(f[1], line_no)?,
            grad_norm: required(f[2], line_no)?,
            err_x: cell(f[3], line_no)?,
            err_y: cell(f[4], line_no)?,
            f_gap: cell(f[5], line_no)?,
            phi_gap: cell(f[6], line_no)?,
            wall_ms: cell(f[7], line_no)?,
        });
    }
    Ok(rows)
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    parse_trace(&std::fs::read_to_string(path).map_err(|e| BdaError::io(path, e))?)
}

/// Collects inner iterations for the verbose trace. `proj_active` is the
/// number of clamped coordinates at that step.
#[derive(Debug, Default, Clone)]
pub struct InnerTraceWriter {
    out: String,
}

impl InnerTraceWriter {
    pub fn new() -> Self {
        InnerTraceWriter { out: format!("{INNER_HEADER}\n") }
    }

    pub fn push(&mut self, t: usize, ev: &Evaluation) {
        for r in &ev.trace.records {
            write!(self.out, "{t},{},", r.k).unwrap();
            num(&mut self.out, r.f_val);
            self.out.push(',');
            num(&mut self.out, r.upper_val);
            writeln!(self.out, ",{}", r.proj_active.iter().filter(|a| **a).count()).unwrap();
        }
    }

    pub fn as_str(&self) -> &str {
        &self.out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.out.as_bytes())
    }
}

/// Final metrics of one run, as stored in `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub problem: String,
    pub method: String,
    pub lambda: f64,
    pub status: RunStatus,
    #[serde(default)]
    pub error: Option<String>,
    pub iterations: usize,
    pub final_x_norm: f64,
    pub final_phi_k: Option<f64>,
    pub final_grad_norm: Option<f64>,
    pub final_err_x: Option<f64>,
    pub final_err_y: Option<f64>,
    pub final_f_gap: Option<f64>,
    pub final_phi_gap: Option<f64>,
    pub wall_ms: f64,
}

impl RunSummary {
    pub fn of(record: &RunRecord) -> Self {
        let last = record.rows.last();
        RunSummary {
            problem: record.problem.clone(),
            method: record.method.to_string(),
            lambda: record.lambda,
            status: record.status,
            error: record.error.clone(),
            iterations: record.rows.len(),
            final_x_norm: record.final_x.norm(),
            final_phi_k: last.map(|r| r.phi_k),
            final_grad_norm: last.map(|r| r.grad_norm),
            final_err_x: last.and_then(|r| r.err_x),
            final_err_y: last.and_then(|r| r.err_y),
            final_f_gap: last.and_then(|r| r.f_gap),
            final_phi_gap: last.and_then(|r| r.phi_gap),
            wall_ms: record.wall_ms,
        }
    }
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| BdaError::Config(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| BdaError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| BdaError::Config(format!("{}: {e}", path.display())))
}
