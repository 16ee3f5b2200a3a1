//! Report types shared by the comparison-geometry and functional-inequality
//! checks, with stable CSV/JSON rendering for the CLI.

use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Outcome of checking `lhs <= rhs` with a stated tolerance.
///
/// `slack = rhs - lhs`; the check passes when `slack >= -tol`. Parameters are
/// kept in a sorted map so serialized output is deterministic.
#[derive(Debug, Clone, Serialize)]
pub struct InequalityReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub tolerance: f64,
    pub satisfied: bool,
    pub params: BTreeMap<String, f64>,
}

impl InequalityReport {
    pub fn new(name: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            lhs,
            rhs,
            tolerance,
            satisfied: lhs <= rhs + tolerance,
            params: BTreeMap::new(),
        }
    }

    pub fn with_param(mut self, key: impl Into<String>, value: f64) -> Self {
        self.params.insert(key.into(), value);
        self
    }

    /// Record one point of a refinement trace (mesh size -> measured LHS);
    /// the points sort by mesh size through the key encoding.
    pub fn with_trace_point(self, h: f64, lhs: f64) -> Self {
        self.with_param(format!("trace_lhs_h{h:.6}"), lhs)
    }

    pub fn slack(&self) -> f64 {
        self.rhs - self.lhs
    }

    /// Relative slack against the scale of the two sides; useful when the
    /// sides vary over orders of magnitude between scenarios.
    pub fn relative_slack(&self) -> f64 {
        let scale = self.lhs.abs().max(self.rhs.abs()).max(1e-300);
        self.slack() / scale
    }
}

/// A flat collection of inequality reports with deterministic rendering.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ReportSet {
    pub reports: Vec<InequalityReport>,
}

impl ReportSet {
    pub fn push(&mut self, report: InequalityReport) {
        self.reports.push(report);
    }

    pub fn all_satisfied(&self) -> bool {
        self.reports.iter().all(|r| r.satisfied)
    }

    /// CSV with one row per report. Parameters are flattened into a single
    /// `key=value;...` column so the header stays fixed across scenarios.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,lhs,rhs,slack,tolerance,satisfied,params\n");
        for r in &self.reports {
            let mut params = String::new();
            for (k, v) in &r.params {
                if !params.is_empty() {
                    params.push(';');
                }
                let _ = write!(params, "{k}={v:.12e}");
            }
            let _ = writeln!(
                out,
                "{},{:.12e},{:.12e},{:.12e},{:.12e},{},{}",
                r.name,
                r.lhs,
                r.rhs,
                r.slack(),
                r.tolerance,
                r.satisfied,
                params
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports are serializable")
    }
}
