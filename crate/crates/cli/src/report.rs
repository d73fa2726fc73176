//! Report assembly and serialization.
//!
//! Every subcommand emits exactly one JSON document with this schema. All
//! maps are ordered and nothing in the document depends on thread count or
//! wall-clock time unless `--timing` is given, so identical invocations
//! serialize byte-identically.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use margin_decomp::decomp::DecompositionReport;
use margin_decomp::ensemble::AmbiguityReport;
use serde::Serialize;

pub const SCHEMA_VERSION: u32 = 1;

/// How the loss was classified; echoed in every report.
#[derive(Serialize)]
pub struct LossInfo {
    pub name: String,
    pub params: BTreeMap<String, f64>,
    pub gradient_symmetric: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub symmetry_constant: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub odd_slope: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub link_range: Option<[f64; 2]>,
}

#[derive(Serialize)]
pub struct DatasetInfo {
    pub source: String,
    pub points: usize,
    pub dims: usize,
    pub models: usize,
    pub has_posteriors: bool,
    pub train_points: usize,
    pub eval_points: usize,
}

/// One named gate. `threshold` is absent for informational checks and for
/// detection checks whose direction is "must exceed" (the name says so);
/// `passed` is authoritative either way.
#[derive(Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

#[derive(Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub tool: &'static str,
    pub tool_version: &'static str,
    pub command: &'static str,
    /// Echo of the arguments that affect the numbers. Execution details
    /// (thread count, output paths, timing) are deliberately excluded so the
    /// same computation always serializes identically.
    pub args: BTreeMap<String, String>,
    pub seed: u64,
    pub loss: LossInfo,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetInfo>,
    pub decompositions: Vec<DecompositionReport>,
    pub ensembles: Vec<AmbiguityReport>,
    pub checks: Vec<CheckOutcome>,
    pub warnings: Vec<String>,
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing_ms: Option<u64>,
}

impl Report {
    pub fn new(
        command: &'static str,
        args: BTreeMap<String, String>,
        seed: u64,
        loss: LossInfo,
    ) -> Report {
        Report {
            schema_version: SCHEMA_VERSION,
            tool: "margin-decomp",
            tool_version: env!("CARGO_PKG_VERSION"),
            command,
            args,
            seed,
            loss,
            dataset: None,
            decompositions: Vec::new(),
            ensembles: Vec::new(),
            checks: Vec::new(),
            warnings: Vec::new(),
            notes: Vec::new(),
            timing_ms: None,
        }
    }

    pub fn all_checks_pass(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }

    /// Write the report to `out`, or stdout when absent. File writes go
    /// through a temporary in the same directory and a rename, so a report
    /// path never holds a half-written document.
    pub fn write(&self, out: Option<&Path>) -> std::io::Result<()> {
        write_atomic(self.to_json().as_bytes(), out)
    }
}

pub fn write_atomic(bytes: &[u8], out: Option<&Path>) -> std::io::Result<()> {
    match out {
        None => std::io::stdout().write_all(bytes),
        Some(path) => {
            let dir = match path.parent() {
                Some(d) if !d.as_os_str().is_empty() => d,
                _ => Path::new("."),
            };
            let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
            tmp.write_all(bytes)?;
            tmp.persist(path).map_err(|e| e.error)?;
            Ok(())
        }
    }
}
