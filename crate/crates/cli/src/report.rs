//! Experiment reports: named metrics with targets, tolerances and verdicts.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    /// Measured value.
    pub value: f64,
    /// Reference value it is compared against.
    pub target: f64,
    /// How target and tolerance are defined.
    pub formula: String,
    /// Maximum allowed |value - target| (absolute or relative, see formula).
    pub tolerance: f64,
    pub pass: bool,
}

impl Metric {
    /// |value - target| <= tol.
    pub fn absolute(name: &str, value: f64, target: f64, tol: f64, formula: &str) -> Metric {
        Metric {
            name: name.into(),
            value,
            target,
            formula: formula.into(),
            tolerance: tol,
            pass: (value - target).abs() <= tol && value.is_finite(),
        }
    }

    /// |value - target| <= tol * max(|target|, 1).
    pub fn relative(name: &str, value: f64, target: f64, tol: f64, formula: &str) -> Metric {
        let scale = target.abs().max(1.0);
        Metric {
            name: name.into(),
            value,
            target,
            formula: formula.into(),
            tolerance: tol,
            pass: (value - target).abs() <= tol * scale && value.is_finite(),
        }
    }

    /// value <= bound.
    pub fn upper_bound(name: &str, value: f64, bound: f64, formula: &str) -> Metric {
        Metric {
            name: name.into(),
            value,
            target: bound,
            formula: formula.into(),
            tolerance: bound,
            pass: value <= bound && value.is_finite(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub experiment: String,
    pub metrics: Vec<Metric>,
    /// Paths of files the run wrote, relative to the output directory.
    pub artifacts: Vec<String>,
    pub passed: bool,
}

impl RunReport {
    pub fn new(experiment: &str, metrics: Vec<Metric>, artifacts: Vec<String>) -> RunReport {
        let passed = metrics.iter().all(|m| m.pass);
        RunReport {
            experiment: experiment.into(),
            metrics,
            artifacts,
            passed,
        }
    }

    pub fn print_summary(&self, verbose: bool) {
        for m in &self.metrics {
            if verbose || !m.pass {
                println!(
                    "  [{}] {}: value {:.6e}, target {:.6e}, tol {:.1e} ({})",
                    if m.pass { "ok" } else { "FAIL" },
                    m.name,
                    m.value,
                    m.target,
                    m.tolerance,
                    m.formula
                );
            }
        }
        println!(
            "{}: {}",
            self.experiment,
            if self.passed { "PASS" } else { "FAIL" }
        );
    }
}
