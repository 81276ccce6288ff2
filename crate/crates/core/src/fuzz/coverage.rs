//! Block and function coverage of a campaign over the functions reachable
//! from a set of roots.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::harness::HARNESS_NAME;
use crate::fir::{reachable_functions, UnknownRoot};
use crate::transforms::{InstrumentedProgram, DISPATCHER_NAME};
use crate::vm::Coverage;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionCoverage {
    pub function: String,
    pub blocks_total: usize,
    pub blocks_hit: usize,
    pub fraction: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub pct_functions: f64,
    pub coverage_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub unique_blocks: usize,
    pub reachable_functions: usize,
    pub triggered_functions: usize,
    pub triggered_pct: f64,
    /// Reachable functions by name.
    pub functions: Vec<FunctionCoverage>,
    /// Triggered functions in ascending coverage order; x is the running
    /// share of triggered functions.
    pub cdf: Vec<CdfPoint>,
}

/// Default roots: the entry and every application task body.
pub fn default_roots(ip: &InstrumentedProgram) -> Vec<String> {
    let p = &ip.program;
    let mut roots = vec![p.entry.clone()];
    roots.extend(
        p.tasks
            .iter()
            .filter(|t| t.name != DISPATCHER_NAME)
            .map(|t| t.function.clone()),
    );
    roots
}

pub fn coverage_report<S: AsRef<str>>(
    bitmap: &Coverage,
    ip: &InstrumentedProgram,
    roots: &[S],
) -> Result<CoverageReport, UnknownRoot> {
    let reachable = reachable_functions(&ip.program, roots)?;
    let mut functions = Vec::new();
    for name in reachable
        .iter()
        .filter(|n| n.as_str() != DISPATCHER_NAME && n.as_str() != HARNESS_NAME)
    {
        let probes: Vec<u16> = ip
            .block_table
            .iter()
            .filter(|b| &b.function == name)
            .map(|b| b.probe)
            .collect();
        let hit = probes.iter().filter(|&&id| bitmap.get(id)).count();
        functions.push(FunctionCoverage {
            function: name.clone(),
            blocks_total: probes.len(),
            blocks_hit: hit,
            fraction: if probes.is_empty() {
                0.0
            } else {
                hit as f64 / probes.len() as f64
            },
        });
    }
    let mut triggered: Vec<f64> = functions
        .iter()
        .filter(|f| f.blocks_hit > 0)
        .map(|f| f.fraction)
        .collect();
    triggered.sort_by(f64::total_cmp);
    let n = triggered.len();
    let cdf = triggered
        .iter()
        .enumerate()
        .map(|(i, &fraction)| CdfPoint {
            pct_functions: 100.0 * (i + 1) as f64 / n as f64,
            coverage_fraction: fraction,
        })
        .collect();
    Ok(CoverageReport {
        unique_blocks: bitmap.count(),
        reachable_functions: functions.len(),
        triggered_functions: n,
        triggered_pct: if functions.is_empty() {
            0.0
        } else {
            100.0 * n as f64 / functions.len() as f64
        },
        functions,
        cdf,
    })
}

impl CoverageReport {
    /// `fn,blocks_total,blocks_hit,fraction`
    pub fn functions_csv(&self) -> String {
        let mut out = String::from("fn,blocks_total,blocks_hit,fraction\n");
        for f in &self.functions {
            let _ = writeln!(
                out,
                "{},{},{},{:.6}",
                f.function, f.blocks_total, f.blocks_hit, f.fraction
            );
        }
        out
    }

    /// `pct_functions,coverage_fraction`
    pub fn cdf_csv(&self) -> String {
        let mut out = String::from("pct_functions,coverage_fraction\n");
        for p in &self.cdf {
            let _ = writeln!(out, "{:.4},{:.6}", p.pct_functions, p.coverage_fraction);
        }
        out
    }
}
