//! Pass/fail check records shared by every report type.

use serde::Serialize;

use crate::Scalar;

/// One named check with its worst observed violation and the threshold it was held to.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Check {
    /// Passes iff `value <= tolerance`.
    pub fn at_most<T: Scalar>(name: impl Into<String>, value: T, tolerance: T) -> Check {
        let v = value.as_f64();
        let tol = tolerance.as_f64();
        Check {
            name: name.into(),
            passed: v <= tol,
            value: v,
            tolerance: tol,
            detail: None,
        }
    }

    /// Passes iff `value >= -tolerance` (for eigenvalue-style lower bounds).
    pub fn at_least<T: Scalar>(name: impl Into<String>, value: T, tolerance: T) -> Check {
        let v = value.as_f64();
        let tol = tolerance.as_f64();
        Check {
            name: name.into(),
            passed: v >= -tol,
            value: v,
            tolerance: tol,
            detail: None,
        }
    }

    pub fn failed(name: impl Into<String>, detail: impl Into<String>) -> Check {
        Check {
            name: name.into(),
            passed: false,
            value: f64::NAN,
            tolerance: 0.0,
            detail: Some(detail.into()),
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Check {
        self.detail = Some(detail.into());
        self
    }
}

pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.passed)
}
