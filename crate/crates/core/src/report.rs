//! Machine-readable verification reports.

use serde::{Deserialize, Serialize};

/// Format version stamped into every report.
pub const FORMAT_VERSION: &str = "1";

/// One numeric check: the bound it must satisfy and the observed value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub bound: f64,
    pub observed: f64,
    pub pass: bool,
}

/// Top-level report emitted by every command: echoes the inputs, carries
/// command-specific results, and lists every numeric check with both its
/// bound and the observed value.
#[derive(Debug, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub inputs: serde_json::Value,
    pub results: serde_json::Value,
    pub checks: Vec<Check>,
    pub version: String,
}

impl Report {
    pub fn new(command: &str, inputs: serde_json::Value) -> Self {
        Report {
            command: command.to_string(),
            inputs,
            results: serde_json::Value::Null,
            checks: Vec::new(),
            version: format!("{}+fmt{}", env!("CARGO_PKG_VERSION"), FORMAT_VERSION),
        }
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn push_check(&mut self, name: impl Into<String>, bound: f64, observed: f64, pass: bool) {
        self.checks.push(Check {
            name: name.into(),
            bound: json_finite(bound),
            observed: json_finite(observed),
            pass,
        });
    }
}

/// JSON has no infinities; vacuously-infinite slacks are clamped to the
/// largest finite double so reports stay schema-valid numbers.
pub fn json_finite(x: f64) -> f64 {
    if x.is_finite() {
        x
    } else if x > 0.0 {
        f64::MAX
    } else {
        f64::MIN
    }
}
